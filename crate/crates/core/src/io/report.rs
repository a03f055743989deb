//! JSON report bundle.
//!
//! Top-level keys are `meta`, `calibration`, `profile`, `balance` and
//! `metrics`; absent sections are omitted. Keys are sorted, output is compact,
//! and every non-integer number is rounded to [`REPORT_DIGITS`] significant
//! digits, so serialize → parse → serialize is a fixed point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::FormatError;
use crate::analysis::TrajectoryProfile;
use crate::calibration::ScaleEstimate;
use crate::metrics::FlowStat;

pub const TOOL_NAME: &str = "camtraj";
pub const REPORT_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for ReportMeta {
    fn default() -> Self {
        Self { tool: TOOL_NAME.into(), version: env!("CARGO_PKG_VERSION").into(), seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceSection {
    pub cap: usize,
    pub keep: Vec<String>,
    pub drop: Vec<String>,
    pub histogram_before: BTreeMap<usize, usize>,
    pub histogram_after: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub min_flow: f64,
    pub scores: BTreeMap<String, FlowStat>,
    pub keep: Vec<String>,
    pub drop: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryEval {
    pub trans_err: f64,
    pub rot_err_deg: f64,
    pub scale: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSection>,
    /// Per-video trajectory errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<BTreeMap<String, TrajectoryEval>>,
    /// Means over `trajectory`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trans_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rot_err_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_strength: Option<FlowStat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appearance_consistency: Option<f64>,
}

impl MetricsSection {
    fn merge(&mut self, other: MetricsSection) {
        if other.filter.is_some() {
            self.filter = other.filter;
        }
        if let Some(t) = other.trajectory {
            self.trajectory.get_or_insert_with(BTreeMap::new).extend(t);
        }
        self.trans_err = other.trans_err.or(self.trans_err);
        self.rot_err_deg = other.rot_err_deg.or(self.rot_err_deg);
        self.motion_strength = other.motion_strength.or(self.motion_strength);
        self.appearance_consistency = other.appearance_consistency.or(self.appearance_consistency);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBundle {
    pub meta: ReportMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<BTreeMap<String, ScaleEstimate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<BTreeMap<String, TrajectoryProfile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSection>,
}

impl ReportBundle {
    pub fn with_seed(seed: u64) -> Self {
        Self { meta: ReportMeta { seed: Some(seed), ..ReportMeta::default() }, ..Self::default() }
    }

    /// Folds `other` into `self`. Per-video maps are unioned (entries in
    /// `other` win); scalar sections are replaced when present in `other`.
    pub fn merge(&mut self, other: ReportBundle) {
        if other.meta.seed.is_some() {
            self.meta.seed = other.meta.seed;
        }
        if let Some(c) = other.calibration {
            self.calibration.get_or_insert_with(BTreeMap::new).extend(c);
        }
        if let Some(p) = other.profile {
            self.profile.get_or_insert_with(BTreeMap::new).extend(p);
        }
        if other.balance.is_some() {
            self.balance = other.balance;
        }
        if let Some(m) = other.metrics {
            self.metrics.get_or_insert_with(MetricsSection::default).merge(m);
        }
    }
}

fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", REPORT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(num) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x))) {
                *n = num;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn write_report(bundle: &ReportBundle) -> String {
    let mut v = serde_json::to_value(bundle).expect("report types serialize to JSON");
    round_value(&mut v);
    v.to_string()
}

pub fn parse_report(text: &str) -> Result<ReportBundle, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))
}
