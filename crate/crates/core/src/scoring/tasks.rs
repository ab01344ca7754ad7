//! Line-delimited task input files.
//!
//! Each task record either carries its scores directly or names the image
//! and text embeddings whose cosines are the scores:
//!
//! | task         | scores given                         | embedding slots                                             |
//! |--------------|--------------------------------------|-------------------------------------------------------------|
//! | `labeled_s`  | `candidate_scores` (4)               | `text_id`, `candidate_image_ids` (4)                        |
//! | `vtwt`       | `pos_score`, `neg_score`             | `image_id`, `pos_text_id`, `neg_text_id`                    |
//! | `winoground` | `s_pp`, `s_pn`, `s_np`, `s_nn`       | `pos_image_id`, `neg_image_id`, `pos_text_id`, `neg_text_id` |
//! | `caption`    | `reference`, `candidate` (text only) |                                                             |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    cosine_score_samples, score_captions, score_four_afc, score_two_afc, score_winoground,
    CaptionSample, DiffType, FourAfcSample, MeteorConfig, ScoreError, TaskOutputs, TwoAfcSample,
    WinoQuad,
};
use crate::embedding::EmbeddingSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    LabeledS,
    Vtwt,
    Winoground,
    Caption,
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "labeled_s" | "labeled-s" => Ok(TaskKind::LabeledS),
            "vtwt" => Ok(TaskKind::Vtwt),
            "winoground" => Ok(TaskKind::Winoground),
            "caption" => Ok(TaskKind::Caption),
            other => Err(format!(
                "unknown task {other:?} (expected labeled_s, vtwt, winoground or caption)"
            )),
        }
    }
}

/// Image and text embeddings used to fill score slots.
#[derive(Debug, Clone, Copy)]
pub struct SlotEmbeddings<'a> {
    pub img: &'a EmbeddingSet,
    pub txt: &'a EmbeddingSet,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FourAfcRecord {
    sample_id: String,
    label: String,
    correct_index: usize,
    candidate_scores: Option<[f64; 4]>,
    text_id: Option<String>,
    candidate_image_ids: Option<[String; 4]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoAfcRecord {
    sample_id: String,
    diff_type: DiffType,
    pos_score: Option<f64>,
    neg_score: Option<f64>,
    image_id: Option<String>,
    pos_text_id: Option<String>,
    neg_text_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WinoRecord {
    sample_id: String,
    s_pp: Option<f64>,
    s_pn: Option<f64>,
    s_np: Option<f64>,
    s_nn: Option<f64>,
    pos_image_id: Option<String>,
    neg_image_id: Option<String>,
    pos_text_id: Option<String>,
    neg_text_id: Option<String>,
}

fn invalid(sample_id: &str, reason: impl Into<String>) -> ScoreError {
    ScoreError::InvalidSample {
        sample_id: sample_id.to_owned(),
        reason: reason.into(),
    }
}

fn need_embeddings<'a>(
    emb: Option<SlotEmbeddings<'a>>,
    sample_id: &str,
) -> Result<SlotEmbeddings<'a>, ScoreError> {
    emb.ok_or_else(|| invalid(sample_id, "scores absent and no embeddings supplied"))
}

impl FourAfcRecord {
    fn resolve(self, emb: Option<SlotEmbeddings>) -> Result<FourAfcSample, ScoreError> {
        let candidate_scores = match (self.candidate_scores, self.text_id, self.candidate_image_ids) {
            (Some(s), None, None) => s,
            (None, Some(t), Some(imgs)) => {
                let e = need_embeddings(emb, &self.sample_id)?;
                let slots: Vec<(&str, &str)> = imgs.iter().map(|i| (i.as_str(), t.as_str())).collect();
                let s = cosine_score_samples(&slots, e.img, e.txt)?;
                [s[0], s[1], s[2], s[3]]
            }
            _ => {
                return Err(invalid(
                    &self.sample_id,
                    "give either candidate_scores or text_id with candidate_image_ids",
                ))
            }
        };
        Ok(FourAfcSample {
            sample_id: self.sample_id,
            label: self.label,
            candidate_scores,
            correct_index: self.correct_index,
        })
    }
}

impl TwoAfcRecord {
    fn resolve(self, emb: Option<SlotEmbeddings>) -> Result<TwoAfcSample, ScoreError> {
        let (pos_score, neg_score) = match (
            self.pos_score,
            self.neg_score,
            self.image_id,
            self.pos_text_id,
            self.neg_text_id,
        ) {
            (Some(p), Some(n), None, None, None) => (p, n),
            (None, None, Some(i), Some(p), Some(n)) => {
                let e = need_embeddings(emb, &self.sample_id)?;
                let s = cosine_score_samples(&[(&i, &p), (&i, &n)], e.img, e.txt)?;
                (s[0], s[1])
            }
            _ => {
                return Err(invalid(
                    &self.sample_id,
                    "give either pos_score and neg_score or image_id, pos_text_id and neg_text_id",
                ))
            }
        };
        Ok(TwoAfcSample {
            sample_id: self.sample_id,
            pos_score,
            neg_score,
            diff_type: self.diff_type,
        })
    }
}

impl WinoRecord {
    fn resolve(self, emb: Option<SlotEmbeddings>) -> Result<WinoQuad, ScoreError> {
        let scores = [self.s_pp, self.s_pn, self.s_np, self.s_nn];
        let ids = [
            self.pos_image_id,
            self.neg_image_id,
            self.pos_text_id,
            self.neg_text_id,
        ];
        let [s_pp, s_pn, s_np, s_nn] = if scores.iter().all(Option::is_some)
            && ids.iter().all(Option::is_none)
        {
            scores.map(Option::unwrap)
        } else if scores.iter().all(Option::is_none) && ids.iter().all(Option::is_some) {
            let e = need_embeddings(emb, &self.sample_id)?;
            let [pi, ni, pt, nt] = ids.map(Option::unwrap);
            let s = cosine_score_samples(&[(&pi, &pt), (&pi, &nt), (&ni, &pt), (&ni, &nt)], e.img, e.txt)?;
            [s[0], s[1], s[2], s[3]]
        } else {
            return Err(invalid(
                &self.sample_id,
                "give either all four s_* scores or all four image/text ids",
            ));
        };
        Ok(WinoQuad {
            sample_id: self.sample_id,
            s_pp,
            s_pn,
            s_np,
            s_nn,
        })
    }
}

/// Reads one JSON value per line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, ScoreError> {
    let path = path.as_ref();
    let io = |source| ScoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        out.push(serde_json::from_str(&line).map_err(|e| ScoreError::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<(), ScoreError> {
    let path = path.as_ref();
    let io = |source| ScoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_four_afc(path: impl AsRef<Path>, emb: Option<SlotEmbeddings>) -> Result<Vec<FourAfcSample>, ScoreError> {
    read_jsonl::<FourAfcRecord>(path)?
        .into_iter()
        .map(|r| r.resolve(emb))
        .collect()
}

pub fn load_two_afc(path: impl AsRef<Path>, emb: Option<SlotEmbeddings>) -> Result<Vec<TwoAfcSample>, ScoreError> {
    read_jsonl::<TwoAfcRecord>(path)?
        .into_iter()
        .map(|r| r.resolve(emb))
        .collect()
}

pub fn load_winoground(path: impl AsRef<Path>, emb: Option<SlotEmbeddings>) -> Result<Vec<WinoQuad>, ScoreError> {
    read_jsonl::<WinoRecord>(path)?
        .into_iter()
        .map(|r| r.resolve(emb))
        .collect()
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionSample>, ScoreError> {
    let samples: Vec<CaptionSample> = read_jsonl(path)?;
    for s in &samples {
        if s.reference.trim().is_empty() {
            return Err(invalid(&s.sample_id, "empty reference"));
        }
    }
    Ok(samples)
}

/// Loads and scores one task file.
pub fn score_task_file(
    kind: TaskKind,
    path: impl AsRef<Path>,
    emb: Option<SlotEmbeddings>,
    meteor: &MeteorConfig,
) -> Result<TaskOutputs, ScoreError> {
    let mut out = TaskOutputs::default();
    match kind {
        TaskKind::LabeledS => out.labeled_s = Some(score_four_afc(&load_four_afc(path, emb)?)?),
        TaskKind::Vtwt => out.vtwt = Some(score_two_afc(&load_two_afc(path, emb)?)?),
        TaskKind::Winoground => out.winoground = Some(score_winoground(&load_winoground(path, emb)?)?),
        TaskKind::Caption => out.caption = Some(score_captions(&load_captions(path)?, meteor)?),
    }
    Ok(out)
}
