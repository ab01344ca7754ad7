//! In-domain benchmark scorers: 4-way forced choice (Labeled-S), two-word
//! 2-way forced choice (VTWT), context-split Winoground group scores, and
//! METEOR captioning.
//!
//! Every comparison is strict; a tie is a miss.

pub mod meteor;
pub mod report;
pub mod tasks;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{unit_cosine, EmbeddingError, EmbeddingSet};

pub use meteor::{meteor, meteor_detail, MatchStage, MeteorConfig, MeteorDetail};
pub use report::{build_report, ScoreReport, TaskOutputs};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no samples to score for {0}")]
    EmptyInput(&'static str),
    #[error("nothing was scored")]
    NothingScored,
    #[error("reference caption is empty after tokenization")]
    EmptyReference,
    #[error("sample {sample_id:?}: {reason}")]
    InvalidSample { sample_id: String, reason: String },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("task {0} scored more than once")]
    DuplicateTask(&'static str),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourAfcSample {
    pub sample_id: String,
    pub label: String,
    pub candidate_scores: [f64; 4],
    pub correct_index: usize,
}

impl FourAfcSample {
    /// Hit when the correct candidate is the strict unique maximum.
    pub fn is_hit(&self) -> bool {
        let target = self.candidate_scores[self.correct_index];
        self.candidate_scores
            .iter()
            .enumerate()
            .all(|(i, &s)| i == self.correct_index || target > s)
    }
}

/// Which words differ between the positive and negative two-word phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffType {
    Verb,
    Adjective,
    Noun,
    VerbNoun,
    AdjectiveNoun,
    VerbAdjective,
}

impl DiffType {
    pub const ALL: [DiffType; 6] = [
        DiffType::Verb,
        DiffType::Adjective,
        DiffType::Noun,
        DiffType::VerbNoun,
        DiffType::AdjectiveNoun,
        DiffType::VerbAdjective,
    ];
}

impl fmt::Display for DiffType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiffType::Verb => "verb",
            DiffType::Adjective => "adjective",
            DiffType::Noun => "noun",
            DiffType::VerbNoun => "verb_noun",
            DiffType::AdjectiveNoun => "adjective_noun",
            DiffType::VerbAdjective => "verb_adjective",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoAfcSample {
    pub sample_id: String,
    pub pos_score: f64,
    pub neg_score: f64,
    pub diff_type: DiffType,
}

impl TwoAfcSample {
    pub fn is_hit(&self) -> bool {
        self.pos_score > self.neg_score
    }
}

/// One Winoground item. `s_xy` scores image polarity `x` with caption
/// polarity `y`; `p` is the original frame or phrase, `n` the synthetic one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinoQuad {
    pub sample_id: String,
    pub s_pp: f64,
    pub s_pn: f64,
    pub s_np: f64,
    pub s_nn: f64,
}

impl WinoQuad {
    /// Each image prefers its own phrase.
    pub fn positive_hit(&self) -> bool {
        self.s_pp > self.s_pn && self.s_nn > self.s_np
    }

    /// Each phrase prefers its own image.
    pub fn negative_hit(&self) -> bool {
        self.s_pp > self.s_np && self.s_nn > self.s_pn
    }

    /// All four comparisons hold.
    pub fn group_hit(&self) -> bool {
        self.positive_hit() && self.negative_hit()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSample {
    pub sample_id: String,
    pub reference: String,
    pub candidate: String,
}

/// Hits over trials, counted exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub hits: usize,
    pub n: usize,
}

impl Tally {
    pub fn add(&mut self, hit: bool) {
        self.hits += hit as usize;
        self.n += 1;
    }

    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.hits as f64 / self.n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourAfcScore {
    pub tally: Tally,
}

impl FourAfcScore {
    pub fn accuracy(&self) -> f64 {
        self.tally.accuracy()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoAfcScore {
    pub tally: Tally,
    /// Only difference types that occur are present.
    pub by_type: BTreeMap<DiffType, Tally>,
}

impl TwoAfcScore {
    pub fn accuracy(&self) -> f64 {
        self.tally.accuracy()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinogroundScore {
    pub n: usize,
    pub overall: Tally,
    pub positive_context: Tally,
    pub negative_context: Tally,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionScore {
    pub n: usize,
    pub meteor_mean: f64,
}

pub fn score_four_afc(samples: &[FourAfcSample]) -> Result<FourAfcScore, ScoreError> {
    if samples.is_empty() {
        return Err(ScoreError::EmptyInput("labeled_s"));
    }
    let mut tally = Tally::default();
    for s in samples {
        if s.correct_index >= 4 {
            return Err(ScoreError::InvalidSample {
                sample_id: s.sample_id.clone(),
                reason: format!("correct_index {} not in [0, 4)", s.correct_index),
            });
        }
        tally.add(s.is_hit());
    }
    Ok(FourAfcScore { tally })
}

pub fn score_two_afc(samples: &[TwoAfcSample]) -> Result<TwoAfcScore, ScoreError> {
    if samples.is_empty() {
        return Err(ScoreError::EmptyInput("vtwt"));
    }
    let mut tally = Tally::default();
    let mut by_type: BTreeMap<DiffType, Tally> = BTreeMap::new();
    for s in samples {
        let hit = s.is_hit();
        tally.add(hit);
        by_type.entry(s.diff_type).or_default().add(hit);
    }
    Ok(TwoAfcScore { tally, by_type })
}

pub fn score_winoground(quads: &[WinoQuad]) -> Result<WinogroundScore, ScoreError> {
    if quads.is_empty() {
        return Err(ScoreError::EmptyInput("winoground"));
    }
    let mut overall = Tally::default();
    let mut positive_context = Tally::default();
    let mut negative_context = Tally::default();
    for q in quads {
        for (name, v) in [("s_pp", q.s_pp), ("s_pn", q.s_pn), ("s_np", q.s_np), ("s_nn", q.s_nn)] {
            if !v.is_finite() {
                return Err(ScoreError::InvalidSample {
                    sample_id: q.sample_id.clone(),
                    reason: format!("{name} is not finite"),
                });
            }
        }
        overall.add(q.group_hit());
        positive_context.add(q.positive_hit());
        negative_context.add(q.negative_hit());
    }
    Ok(WinogroundScore {
        n: quads.len(),
        overall,
        positive_context,
        negative_context,
    })
}

/// Mean METEOR over samples; per-sample work runs in parallel and is summed
/// in sample order.
pub fn score_captions(samples: &[CaptionSample], cfg: &MeteorConfig) -> Result<CaptionScore, ScoreError> {
    if samples.is_empty() {
        return Err(ScoreError::EmptyInput("caption"));
    }
    let scores: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            meteor(&s.candidate, &s.reference, cfg).map_err(|e| match e {
                ScoreError::EmptyReference => ScoreError::InvalidSample {
                    sample_id: s.sample_id.clone(),
                    reason: "reference is empty after tokenization".into(),
                },
                other => other,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(CaptionScore {
        n: samples.len(),
        meteor_mean: scores.iter().sum::<f64>() / samples.len() as f64,
    })
}

/// Cosine of each `(image id, text id)` slot.
pub fn cosine_score_samples<S: AsRef<str>>(
    slots: &[(S, S)],
    img: &EmbeddingSet,
    txt: &EmbeddingSet,
) -> Result<Vec<f64>, ScoreError> {
    if !img.is_normalized() || !txt.is_normalized() {
        return Err(EmbeddingError::NotNormalized.into());
    }
    if img.dim() != txt.dim() {
        return Err(EmbeddingError::DimensionMismatch(format!(
            "image dim {} vs text dim {}",
            img.dim(),
            txt.dim()
        ))
        .into());
    }
    slots
        .iter()
        .map(|(i, t)| {
            let (i, t) = (i.as_ref(), t.as_ref());
            let a = img.get(i).ok_or_else(|| EmbeddingError::UnknownId(i.to_owned()))?;
            let b = txt.get(t).ok_or_else(|| EmbeddingError::UnknownId(t.to_owned()))?;
            Ok(unit_cosine(a, b))
        })
        .collect()
}
