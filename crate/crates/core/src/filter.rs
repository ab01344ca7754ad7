//! Similarity-threshold filtering of pairs and per-caption deduplication.

use std::collections::HashMap;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::{unit_cosine, EmbeddingSet};
use crate::manifest::{Manifest, PairRecord};

/// Default retention threshold on image/caption cosine.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("pair {pair_id:?}: no {which} embedding for id {id:?}")]
    UnknownId {
        pair_id: String,
        which: &'static str,
        id: String,
    },
    #[error("{0} embeddings are not normalized")]
    NotNormalized(&'static str),
    #[error("threshold {0} outside [-1, 1]")]
    InvalidThreshold(f64),
    #[error("image dim {0} differs from text dim {1}")]
    DimensionMismatch(usize, usize),
    #[error("pair {0:?} has no similarity")]
    MissingSimilarity(String),
}

/// Which record field holds the embedding id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdKey {
    PairId,
    ImageRef,
}

impl IdKey {
    fn of(self, r: &PairRecord) -> &str {
        match self {
            IdKey::PairId => &r.pair_id,
            IdKey::ImageRef => &r.image_ref,
        }
    }
}

impl FromStr for IdKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pair_id" => Ok(IdKey::PairId),
            "image_ref" => Ok(IdKey::ImageRef),
            other => Err(format!("unknown id key {other:?} (expected pair_id or image_ref)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub threshold: f64,
    pub image_key: IdKey,
    pub text_key: IdKey,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            threshold: DEFAULT_THRESHOLD,
            image_key: IdKey::PairId,
            text_key: IdKey::PairId,
        }
    }
}

impl FilterConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        FilterConfig {
            threshold,
            ..Default::default()
        }
    }
}

/// Image/caption cosine for every record, in record order.
pub fn pair_similarities(
    m: &Manifest,
    img: &EmbeddingSet,
    txt: &EmbeddingSet,
    cfg: &FilterConfig,
) -> Result<Vec<f64>, FilterError> {
    if !img.is_normalized() {
        return Err(FilterError::NotNormalized("image"));
    }
    if !txt.is_normalized() {
        return Err(FilterError::NotNormalized("text"));
    }
    if img.dim() != txt.dim() {
        return Err(FilterError::DimensionMismatch(img.dim(), txt.dim()));
    }
    m.records
        .par_iter()
        .map(|r| {
            let a = lookup(r, img, cfg.image_key, "image")?;
            let b = lookup(r, txt, cfg.text_key, "text")?;
            Ok(unit_cosine(a, b))
        })
        .collect()
}

fn lookup<'a>(
    r: &PairRecord,
    set: &'a EmbeddingSet,
    key: IdKey,
    which: &'static str,
) -> Result<&'a [f32], FilterError> {
    let id = key.of(r);
    set.get(id).ok_or_else(|| FilterError::UnknownId {
        pair_id: r.pair_id.clone(),
        which,
        id: id.to_owned(),
    })
}

/// Keeps records whose image/caption cosine is strictly above the threshold,
/// stamping each retained record with its similarity.
pub fn filter_pairs(
    m: &Manifest,
    img: &EmbeddingSet,
    txt: &EmbeddingSet,
    cfg: &FilterConfig,
) -> Result<Manifest, FilterError> {
    if !(-1.0..=1.0).contains(&cfg.threshold) {
        return Err(FilterError::InvalidThreshold(cfg.threshold));
    }
    let sims = pair_similarities(m, img, txt, cfg)?;
    let records = retain_above(&m.records, &sims, cfg.threshold);
    log::info!(
        "filter: kept {}/{} pairs above {}",
        records.len(),
        m.len(),
        cfg.threshold
    );
    Ok(Manifest {
        records,
        provenance: format!("filter: threshold={} strict", cfg.threshold),
    })
}

/// Records whose similarity is strictly above `threshold`, stamped with it.
pub fn retain_above(records: &[PairRecord], sims: &[f64], threshold: f64) -> Vec<PairRecord> {
    records
        .iter()
        .zip(sims)
        .filter(|(_, &s)| s > threshold)
        .map(|(r, &s)| r.clone().with_similarity(s))
        .collect()
}

/// Grouping key for captions: lowercase with whitespace runs collapsed.
pub fn caption_key(caption: &str) -> String {
    caption
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// One record per distinct normalized caption, the one with the highest
/// similarity (ties to the smallest pair_id). Output sorted by pair_id.
pub fn dedup_by_caption(m: &Manifest) -> Result<Manifest, FilterError> {
    let mut best: HashMap<String, (f64, &PairRecord)> = HashMap::new();
    for r in &m.records {
        let sim = r
            .similarity
            .ok_or_else(|| FilterError::MissingSimilarity(r.pair_id.clone()))?;
        let key = caption_key(&r.caption);
        match best.get_mut(&key) {
            Some(slot) => {
                let (bs, br) = *slot;
                if sim > bs || (sim == bs && r.pair_id < br.pair_id) {
                    *slot = (sim, r);
                }
            }
            None => {
                best.insert(key, (sim, r));
            }
        }
    }
    let mut records: Vec<PairRecord> = best.into_values().map(|(_, r)| r.clone()).collect();
    records.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    Ok(Manifest {
        records,
        provenance: "dedup: max similarity per normalized caption".into(),
    })
}
