//! Dataset data model: image/caption pair records, line-delimited manifest
//! files, and seeded composition of datasets from several arms.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("duplicate pair_id {0:?}")]
    DuplicatePairId(String),
    #[error("invalid composition: {0}")]
    InvalidComposition(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ManifestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ManifestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Origin of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Saycam,
    Transferred,
    General,
    Synthetic,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Source::Saycam => "saycam",
            Source::Transferred => "transferred",
            Source::General => "general",
            Source::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

/// One image/caption pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub pair_id: String,
    pub image_ref: String,
    pub caption: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

impl PairRecord {
    pub fn new(
        pair_id: impl Into<String>,
        image_ref: impl Into<String>,
        caption: impl Into<String>,
        source: Source,
    ) -> Self {
        PairRecord {
            pair_id: pair_id.into(),
            image_ref: image_ref.into(),
            caption: caption.into(),
            source,
            similarity: None,
        }
    }

    pub fn with_similarity(mut self, similarity: f64) -> Self {
        self.similarity = Some(similarity);
        self
    }

    fn validate(&self) -> Result<(), String> {
        if self.pair_id.is_empty() {
            return Err("empty pair_id".into());
        }
        if self.caption.is_empty() {
            return Err("empty caption".into());
        }
        if let Some(s) = self.similarity {
            if !(-1.0..=1.0).contains(&s) {
                return Err(format!("similarity {s} outside [-1, 1]"));
            }
        }
        Ok(())
    }
}

/// Ordered collection of pair records with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<PairRecord>,
    /// Free text describing the operations that produced this manifest.
    /// Not part of the line-delimited file.
    pub provenance: String,
}

impl Manifest {
    /// Builds a manifest, rejecting duplicate ids.
    pub fn new(records: Vec<PairRecord>) -> Result<Self, ManifestError> {
        check_unique(&records)?;
        Ok(Manifest {
            records,
            provenance: String::new(),
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, pair_id: &str) -> Option<&PairRecord> {
        self.records.iter().find(|r| r.pair_id == pair_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.pair_id.as_str())
    }

    pub fn sort_by_pair_id(&mut self) {
        self.records.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    }
}

fn check_unique(records: &[PairRecord]) -> Result<(), ManifestError> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.pair_id.as_str()) {
            return Err(ManifestError::DuplicatePairId(r.pair_id.clone()));
        }
    }
    Ok(())
}

/// Reads a manifest, one JSON record per line. Blank lines are not allowed.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ManifestError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ManifestError::io(path, e))?;
        let lineno = idx + 1;
        let malformed = |reason: String| ManifestError::MalformedLine {
            path: path.to_path_buf(),
            line: lineno,
            reason,
        };
        let record: PairRecord =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        record.validate().map_err(malformed)?;
        if !seen.insert(record.pair_id.clone()) {
            return Err(ManifestError::DuplicatePairId(record.pair_id));
        }
        records.push(record);
    }
    Ok(Manifest {
        records,
        provenance: String::new(),
    })
}

pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ManifestError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &m.records {
        serde_json::to_writer(&mut w, r).map_err(|e| ManifestError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| ManifestError::io(path, e))?;
    }
    w.flush().map_err(|e| ManifestError::io(path, e))
}

/// One arm of a composition: take `fraction` of the manifest at `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionArm {
    pub path: PathBuf,
    pub fraction: f64,
    pub seed: u64,
}

impl CompositionArm {
    pub fn new(path: impl Into<PathBuf>, fraction: f64, seed: u64) -> Self {
        CompositionArm {
            path: path.into(),
            fraction,
            seed,
        }
    }
}

impl std::str::FromStr for CompositionArm {
    type Err = String;

    /// Parses `PATH[:FRACTION[:SEED]]`. Fraction defaults to 1, seed to 0.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.rsplitn(3, ':').collect::<Vec<_>>();
        parts.reverse();
        let parse_fraction = |f: &str| f.parse::<f64>().map_err(|e| format!("bad fraction {f:?}: {e}"));
        let parse_seed = |f: &str| f.parse::<u64>().map_err(|e| format!("bad seed {f:?}: {e}"));
        // Paths may themselves contain ':'; only treat trailing fields as
        // numeric when they parse.
        match parts.as_slice() {
            [p, f, sd] if f.parse::<f64>().is_ok() && sd.parse::<u64>().is_ok() => {
                Ok(CompositionArm::new(*p, parse_fraction(f)?, parse_seed(sd)?))
            }
            _ => match s.rsplit_once(':') {
                Some((p, f)) if f.parse::<f64>().is_ok() => {
                    Ok(CompositionArm::new(p, parse_fraction(f)?, 0))
                }
                _ => Ok(CompositionArm::new(s, 1.0, 0)),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositionSpec {
    pub arms: Vec<CompositionArm>,
}

impl CompositionSpec {
    pub fn new(arms: Vec<CompositionArm>) -> Result<Self, ManifestError> {
        for arm in &arms {
            if !(arm.fraction > 0.0 && arm.fraction <= 1.0) {
                return Err(ManifestError::InvalidComposition(format!(
                    "fraction {} for {} outside (0, 1]",
                    arm.fraction,
                    arm.path.display()
                )));
            }
        }
        Ok(CompositionSpec { arms })
    }
}

/// Number of records drawn from an arm of size `n`.
pub fn arm_sample_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).floor() as usize).min(n)
}

/// Seeded uniform sample without replacement: shuffle, take a prefix,
/// restore the original relative order.
pub fn subsample(records: &[PairRecord], fraction: f64, seed: u64) -> Vec<PairRecord> {
    let take = arm_sample_size(fraction, records.len());
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut chosen = order[..take].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| records[i].clone()).collect()
}

/// Reads every arm, subsamples it, and unions the results sorted by pair_id.
pub fn compose_datasets(spec: &CompositionSpec) -> Result<Manifest, ManifestError> {
    let spec = CompositionSpec::new(spec.arms.clone())?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut provenance = Vec::with_capacity(spec.arms.len());
    for arm in &spec.arms {
        let m = read_manifest(&arm.path)?;
        let drawn = subsample(&m.records, arm.fraction, arm.seed);
        provenance.push(format!(
            "arm={} fraction={} seed={} drawn={}/{}",
            arm.path.display(),
            arm.fraction,
            arm.seed,
            drawn.len(),
            m.len()
        ));
        for r in drawn {
            if !seen.insert(r.pair_id.clone()) {
                return Err(ManifestError::DuplicatePairId(r.pair_id));
            }
            records.push(r);
        }
    }
    let mut out = Manifest {
        records,
        provenance: format!("compose: {}", provenance.join("; ")),
    };
    out.sort_by_pair_id();
    Ok(out)
}
