//! METEOR caption scoring with exact and Porter-stem unigram matching.
//!
//! Alignment runs stage by stage. Within a stage every still-unmatched
//! candidate token may pair with one still-unmatched reference token whose
//! stage key (surface form, or stem) is equal; the stage takes a maximum
//! number of pairs and, among those, the set with the fewest crossings
//! against everything aligned so far.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ScoreError;
use crate::stem::porter_stem;

/// Sentences longer than this get the first (leftmost) maximum alignment
/// without crossing minimization.
pub const MAX_SEARCH_TOKENS: usize = 50;
const SEARCH_NODE_BUDGET: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchStage {
    Exact,
    Stem,
}

impl MatchStage {
    fn key(self, token: &str) -> String {
        match self {
            MatchStage::Exact => token.to_owned(),
            MatchStage::Stem => porter_stem(token),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeteorConfig {
    pub fmean_recall_weight: f64,
    pub penalty_gamma: f64,
    pub penalty_beta: f64,
    pub stages: Vec<MatchStage>,
}

impl Default for MeteorConfig {
    fn default() -> Self {
        MeteorConfig {
            fmean_recall_weight: 9.0,
            penalty_gamma: 0.5,
            penalty_beta: 3.0,
            stages: vec![MatchStage::Exact, MatchStage::Stem],
        }
    }
}

/// Intermediate quantities of one METEOR evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeteorDetail {
    pub matches: usize,
    pub chunks: usize,
    pub candidate_len: usize,
    pub reference_len: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub score: f64,
}

/// Lowercase, split on whitespace, trim non-alphanumeric characters from
/// both ends of each token, drop tokens left empty.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Number of maximal runs of alignment pairs adjacent in both sentences.
pub fn count_chunks(alignment: &[(usize, usize)]) -> usize {
    let mut pairs = alignment.to_vec();
    pairs.sort_unstable();
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(c, r) in &pairs {
        match prev {
            Some((pc, pr)) if c == pc + 1 && r == pr + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((c, r));
    }
    chunks
}

fn crosses(a: (usize, usize), b: (usize, usize)) -> bool {
    (a.0 < b.0 && a.1 > b.1) || (a.0 > b.0 && a.1 < b.1)
}

/// Crossing-minimizing choice among maximum stage matchings.
///
/// Within one key class the chosen pairs are order preserving (uncrossing two
/// same-class pairs never adds crossings with a third pair), so the search
/// only decides which tokens of the larger side of each class are left out.
struct StageSearch<'a> {
    /// candidate positions in order, with their class
    cands: Vec<(usize, usize)>,
    /// reference positions per class, ascending
    refs: Vec<Vec<usize>>,
    /// matches still required per class
    need: Vec<usize>,
    /// candidate tokens of each class not yet visited
    left: Vec<usize>,
    /// index into `refs[class]` of the next usable reference
    next_ref: Vec<usize>,
    fixed: &'a [(usize, usize)],
    chosen: Vec<(usize, usize)>,
    best: Option<(usize, Vec<(usize, usize)>)>,
    nodes: usize,
    exhaustive: bool,
}

impl StageSearch<'_> {
    fn crossings_with(&self, p: (usize, usize)) -> usize {
        self.fixed.iter().chain(&self.chosen).filter(|&&q| crosses(p, q)).count()
    }

    fn go(&mut self, idx: usize, cost: usize) {
        self.nodes += 1;
        if let Some((b, _)) = &self.best {
            if cost >= *b || !self.exhaustive || self.nodes > SEARCH_NODE_BUDGET {
                return;
            }
        }
        if idx == self.cands.len() {
            self.best = Some((cost, self.chosen.clone()));
            return;
        }
        let (pos, class) = self.cands[idx];
        self.left[class] -= 1;
        if self.need[class] > 0 {
            let refs_len = self.refs[class].len();
            let start = self.next_ref[class];
            // leave enough references for the remaining required matches
            let last = refs_len - self.need[class];
            for ri in start..=last {
                let r = self.refs[class][ri];
                let extra = self.crossings_with((pos, r));
                self.chosen.push((pos, r));
                self.need[class] -= 1;
                self.next_ref[class] = ri + 1;
                self.go(idx + 1, cost + extra);
                self.next_ref[class] = start;
                self.need[class] += 1;
                self.chosen.pop();
            }
        }
        // skipping is allowed while the remaining tokens can still cover `need`
        if self.left[class] >= self.need[class] {
            self.go(idx + 1, cost);
        }
        self.left[class] += 1;
    }
}

fn align_stage(
    cand_keys: &[Option<String>],
    ref_keys: &[Option<String>],
    fixed: &[(usize, usize)],
    exhaustive: bool,
) -> Vec<(usize, usize)> {
    let mut class_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut refs: Vec<Vec<usize>> = Vec::new();
    for (r, key) in ref_keys.iter().enumerate() {
        if let Some(k) = key {
            let next = refs.len();
            let c = *class_of.entry(k.as_str()).or_insert(next);
            if c == refs.len() {
                refs.push(Vec::new());
            }
            refs[c].push(r);
        }
    }
    let mut cands = Vec::new();
    let mut left = vec![0; refs.len()];
    for (p, key) in cand_keys.iter().enumerate() {
        if let Some(c) = key.as_deref().and_then(|k| class_of.get(k)) {
            cands.push((p, *c));
            left[*c] += 1;
        }
    }
    if cands.is_empty() {
        return Vec::new();
    }
    let need = refs.iter().zip(&left).map(|(r, &l)| r.len().min(l)).collect();
    let mut s = StageSearch {
        cands,
        next_ref: vec![0; refs.len()],
        refs,
        need,
        left,
        fixed,
        chosen: Vec::new(),
        best: None,
        nodes: 0,
        exhaustive,
    };
    s.go(0, 0);
    s.best.map(|(_, m)| m).unwrap_or_default()
}

/// Unigram alignment `(candidate index, reference index)` across all stages.
pub fn align(candidate: &[String], reference: &[String], stages: &[MatchStage]) -> Vec<(usize, usize)> {
    let exhaustive = candidate.len() <= MAX_SEARCH_TOKENS && reference.len() <= MAX_SEARCH_TOKENS;
    let mut alignment: Vec<(usize, usize)> = Vec::new();
    let mut cand_used = vec![false; candidate.len()];
    let mut ref_used = vec![false; reference.len()];
    for &stage in stages {
        let keys = |toks: &[String], used: &[bool]| -> Vec<Option<String>> {
            toks.iter()
                .zip(used)
                .map(|(t, &u)| (!u).then(|| stage.key(t)))
                .collect()
        };
        let found = align_stage(
            &keys(candidate, &cand_used),
            &keys(reference, &ref_used),
            &alignment,
            exhaustive,
        );
        for &(c, r) in &found {
            cand_used[c] = true;
            ref_used[r] = true;
        }
        alignment.extend(found);
    }
    alignment.sort_unstable();
    alignment
}

pub fn meteor_detail(
    candidate: &str,
    reference: &str,
    cfg: &MeteorConfig,
) -> Result<MeteorDetail, ScoreError> {
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    if refs.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let alignment = align(&cand, &refs, &cfg.stages);
    let m = alignment.len();
    if m == 0 {
        return Ok(MeteorDetail {
            matches: 0,
            chunks: 0,
            candidate_len: cand.len(),
            reference_len: refs.len(),
            precision: 0.0,
            recall: 0.0,
            fmean: 0.0,
            penalty: 0.0,
            score: 0.0,
        });
    }
    let chunks = count_chunks(&alignment);
    let precision = m as f64 / cand.len() as f64;
    let recall = m as f64 / refs.len() as f64;
    let w = cfg.fmean_recall_weight;
    let fmean = precision * recall * (1.0 + w) / (recall + w * precision);
    let penalty = cfg.penalty_gamma * (chunks as f64 / m as f64).powf(cfg.penalty_beta);
    Ok(MeteorDetail {
        matches: m,
        chunks,
        candidate_len: cand.len(),
        reference_len: refs.len(),
        precision,
        recall,
        fmean,
        penalty,
        score: fmean * (1.0 - penalty),
    })
}

/// METEOR score of `candidate` against a single `reference`.
pub fn meteor(candidate: &str, reference: &str, cfg: &MeteorConfig) -> Result<f64, ScoreError> {
    meteor_detail(candidate, reference, cfg).map(|d| d.score)
}
