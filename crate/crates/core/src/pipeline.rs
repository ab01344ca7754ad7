//! The five curation steps chained through files:
//! filter, transfer, top-k, match, compose.

use std::path::{Path, PathBuf};

use crate::assignment::{
    build_topk, load_matrix_ids, load_topk, select_matched_subset, solve_sparse_assignment, store_topk,
    AssignmentError, MatrixIds,
};
use crate::embedding::{load_embeddings, EmbeddingError};
use crate::filter::{filter_pairs, FilterConfig, FilterError};
use crate::fixture::FixturePaths;
use crate::manifest::{
    compose_datasets, read_manifest, write_manifest, CompositionArm, CompositionSpec, ManifestError,
};
use crate::transfer::{
    run_transfer, write_rejections, BackendPolicy, MockBackend, PromptTemplate, TransferError,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub threshold: f64,
    pub k: usize,
    pub mock_seed: u64,
    pub infeasible_rate: f64,
    pub max_in_flight: usize,
    pub allow_unmatched: bool,
    /// Fraction of the matched set kept in the composed dataset.
    pub matched_fraction: f64,
    pub compose_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: 0.2,
            k: 50,
            mock_seed: 0,
            infeasible_rate: 0.1,
            max_in_flight: 4,
            allow_unmatched: false,
            matched_fraction: 1.0,
            compose_seed: 0,
        }
    }
}

/// Every file the pipeline writes, in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutputs {
    pub filtered: PathBuf,
    pub transferred: PathBuf,
    pub rejections: PathBuf,
    pub topk: PathBuf,
    pub matched: PathBuf,
    pub composed: PathBuf,
}

impl PipelineOutputs {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        PipelineOutputs {
            filtered: d.join("filtered.jsonl"),
            transferred: d.join("transferred.jsonl"),
            rejections: d.join("rejections.jsonl"),
            topk: d.join("topk.stk"),
            matched: d.join("matched.jsonl"),
            composed: d.join("composed.jsonl"),
        }
    }

    /// All output files including the top-k id sidecar.
    pub fn files(&self) -> Vec<PathBuf> {
        vec![
            self.filtered.clone(),
            self.transferred.clone(),
            self.rejections.clone(),
            self.topk.clone(),
            crate::assignment::sidecar_path(&self.topk),
            self.matched.clone(),
            self.composed.clone(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub anchors_in: usize,
    pub anchors_kept: usize,
    pub candidates_in: usize,
    pub transferred: usize,
    pub rejected: usize,
    pub matched: usize,
    pub unmatched: usize,
    pub match_total: f64,
    pub composed: usize,
}

pub fn run_pipeline(
    input: &FixturePaths,
    out_dir: impl AsRef<Path>,
    cfg: &PipelineConfig,
) -> Result<(PipelineOutputs, PipelineSummary), PipelineError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| ManifestError::io(out_dir, e))?;
    let out = PipelineOutputs::in_dir(out_dir);

    let anchors = read_manifest(&input.anchors)?;
    let candidates = read_manifest(&input.candidates)?;
    let img = load_embeddings(&input.img)?;
    let txt = load_embeddings(&input.txt)?;

    let filtered = filter_pairs(&anchors, &img, &txt, &FilterConfig::with_threshold(cfg.threshold))?;
    write_manifest(&filtered, &out.filtered)?;

    let backend = MockBackend::new(cfg.mock_seed, cfg.infeasible_rate);
    let policy = BackendPolicy {
        max_in_flight: cfg.max_in_flight,
        ..Default::default()
    };
    let transferred = run_transfer(&candidates, &backend, &PromptTemplate::default(), &policy)?;
    write_manifest(&transferred.manifest, &out.transferred)?;
    write_rejections(&transferred.rejections, &out.rejections)?;

    let ids = MatrixIds {
        rows: read_manifest(&out.filtered)?.ids().map(str::to_owned).collect(),
        cols: read_manifest(&out.transferred)?.ids().map(str::to_owned).collect(),
    };
    let matrix = build_topk(&img.subset(&ids.rows)?, &img.subset(&ids.cols)?, cfg.k)?;
    store_topk(&matrix, Some(&ids), &out.topk)?;

    let matrix = load_topk(&out.topk)?;
    let ids = load_matrix_ids(&out.topk)?;
    let assignment = solve_sparse_assignment(&matrix, cfg.allow_unmatched)?;
    let matched = select_matched_subset(&read_manifest(&out.transferred)?, &assignment, &ids.cols)?;
    write_manifest(&matched, &out.matched)?;

    let spec = CompositionSpec::new(vec![
        CompositionArm::new(&out.filtered, 1.0, 0),
        CompositionArm::new(&out.matched, cfg.matched_fraction, cfg.compose_seed),
    ])?;
    let composed = compose_datasets(&spec)?;
    write_manifest(&composed, &out.composed)?;

    let summary = PipelineSummary {
        anchors_in: anchors.len(),
        anchors_kept: filtered.len(),
        candidates_in: candidates.len(),
        transferred: transferred.manifest.len(),
        rejected: transferred.rejections.len(),
        matched: matched.len(),
        unmatched: assignment.unmatched.len(),
        match_total: assignment.total,
        composed: composed.len(),
    };
    log::info!("pipeline: {summary:?}");
    Ok((out, summary))
}
