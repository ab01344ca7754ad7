//! Score report assembly and its JSON document.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{CaptionScore, DiffType, FourAfcScore, ScoreError, TwoAfcScore, WinogroundScore};

/// A rate written with exactly four decimal places.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Fixed4(pub f64);

impl Fixed4 {
    pub fn rounded(self) -> f64 {
        (self.0 * 1e4).round() / 1e4
    }
}

impl Serialize for Fixed4 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(format!("{:.4}", self.0))
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fixed4 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Fixed4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WinogroundReport {
    pub overall: Fixed4,
    pub positive_context: Fixed4,
    pub negative_context: Fixed4,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vtwt: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vtwt_by_type: Option<BTreeMap<DiffType, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winoground: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<usize>,
}

/// Scores of every task that was run; tasks not run are absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_s_accuracy: Option<Fixed4>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vtwt_accuracy: Option<Fixed4>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vtwt_by_type: Option<BTreeMap<DiffType, Fixed4>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winoground: Option<WinogroundReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_meteor_mean: Option<Fixed4>,
    #[serde(default)]
    pub sample_counts: SampleCounts,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskOutputs {
    pub labeled_s: Option<FourAfcScore>,
    pub vtwt: Option<TwoAfcScore>,
    pub winoground: Option<WinogroundScore>,
    pub caption: Option<CaptionScore>,
}

pub fn build_report(t: &TaskOutputs) -> Result<ScoreReport, ScoreError> {
    if t.labeled_s.is_none() && t.vtwt.is_none() && t.winoground.is_none() && t.caption.is_none() {
        return Err(ScoreError::NothingScored);
    }
    let mut r = ScoreReport::default();
    if let Some(s) = &t.labeled_s {
        r.labeled_s_accuracy = Some(Fixed4(s.accuracy()));
        r.sample_counts.labeled_s = Some(s.tally.n);
    }
    if let Some(s) = &t.vtwt {
        r.vtwt_accuracy = Some(Fixed4(s.accuracy()));
        r.vtwt_by_type = Some(s.by_type.iter().map(|(k, v)| (*k, Fixed4(v.accuracy()))).collect());
        r.sample_counts.vtwt = Some(s.tally.n);
        r.sample_counts.vtwt_by_type = Some(s.by_type.iter().map(|(k, v)| (*k, v.n)).collect());
    }
    if let Some(s) = &t.winoground {
        r.winoground = Some(WinogroundReport {
            overall: Fixed4(s.overall.accuracy()),
            positive_context: Fixed4(s.positive_context.accuracy()),
            negative_context: Fixed4(s.negative_context.accuracy()),
        });
        r.sample_counts.winoground = Some(s.n);
    }
    if let Some(s) = &t.caption {
        r.caption_meteor_mean = Some(Fixed4(s.meteor_mean));
        r.sample_counts.caption = Some(s.n);
    }
    Ok(r)
}

fn take<T>(a: Option<T>, b: Option<T>, task: &'static str) -> Result<Option<T>, ScoreError> {
    match (a, b) {
        (Some(_), Some(_)) => Err(ScoreError::DuplicateTask(task)),
        (a, b) => Ok(a.or(b)),
    }
}

impl ScoreReport {
    /// Combines reports covering disjoint tasks.
    pub fn merge(self, other: ScoreReport) -> Result<ScoreReport, ScoreError> {
        let (a, b) = (self.sample_counts, other.sample_counts);
        Ok(ScoreReport {
            labeled_s_accuracy: take(self.labeled_s_accuracy, other.labeled_s_accuracy, "labeled_s")?,
            vtwt_accuracy: take(self.vtwt_accuracy, other.vtwt_accuracy, "vtwt")?,
            vtwt_by_type: take(self.vtwt_by_type, other.vtwt_by_type, "vtwt")?,
            winoground: take(self.winoground, other.winoground, "winoground")?,
            caption_meteor_mean: take(self.caption_meteor_mean, other.caption_meteor_mean, "caption")?,
            sample_counts: SampleCounts {
                labeled_s: take(a.labeled_s, b.labeled_s, "labeled_s")?,
                vtwt: take(a.vtwt, b.vtwt, "vtwt")?,
                vtwt_by_type: take(a.vtwt_by_type, b.vtwt_by_type, "vtwt")?,
                winoground: take(a.winoground, b.winoground, "winoground")?,
                caption: take(a.caption, b.caption, "caption")?,
            },
        })
    }

    pub fn is_empty(&self) -> bool {
        self.labeled_s_accuracy.is_none()
            && self.vtwt_accuracy.is_none()
            && self.winoground.is_none()
            && self.caption_meteor_mean.is_none()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ScoreError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| ScoreError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<ScoreReport, ScoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ScoreError::MalformedLine {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}
