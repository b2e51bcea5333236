//! Run configuration: an optional TOML file overlaid by command-line flags.
//!
//! ```toml
//! plant = "reactor"
//! output = "fig3.csv"
//!
//! [params]
//! n_cells = 40
//!
//! [esc]
//! omega = 0.4
//! omega_ratio = 0.1
//! gain = 0.01
//! amplitude = 0.001
//!
//! [stationary]
//! u_range = "0.02:1.2:2000"
//! floquet = true
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use esc_core::freq::{BreakOff, EscConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const DEFAULT_OMEGA: f64 = 0.4;
pub const DEFAULT_RATIO: f64 = 0.1;
pub const DEFAULT_GAIN: f64 = 0.01;
pub const DEFAULT_AMPLITUDE: f64 = 0.001;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

impl EscSection {
    /// Fields set in `top` win. A ratio in `top` also discards absolute
    /// break-off frequencies from `self` that `top` does not restate.
    pub fn overlay(&self, top: &EscSection) -> EscSection {
        let ratio_reset = top.omega_ratio.is_some();
        EscSection {
            omega: top.omega.or(self.omega),
            omega_h: top.omega_h.or(if ratio_reset { None } else { self.omega_h }),
            omega_l: top.omega_l.or(if ratio_reset { None } else { self.omega_l }),
            omega_ratio: top.omega_ratio.or(self.omega_ratio),
            gain: top.gain.or(self.gain),
            amplitude: top.amplitude.or(self.amplitude),
        }
    }

    /// Break-offs given without a ratio are absolute; the missing one falls
    /// back to the ratio (default 0.1) times ω.
    pub fn resolve(&self) -> EscConfig {
        let ratio = self.omega_ratio.unwrap_or(DEFAULT_RATIO);
        let pick = |abs: Option<f64>| abs.map(BreakOff::Absolute).unwrap_or(BreakOff::Ratio(ratio));
        EscConfig {
            omega: self.omega.unwrap_or(DEFAULT_OMEGA),
            high_pass: pick(self.omega_h),
            low_pass: pick(self.omega_l),
            gain: self.gain.unwrap_or(DEFAULT_GAIN),
            amplitude: self.amplitude.unwrap_or(DEFAULT_AMPLITUDE),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// `lo:hi:n`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_range: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floquet: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSection {
    /// `lo:hi`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_range: Option<String>,
    /// `lo:hi`; defaults to the plant's input domain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shoot: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub esc: EscSection,
    #[serde(default)]
    pub equilibrium: GridSection,
    #[serde(default)]
    pub stationary: StationarySection,
    #[serde(default)]
    pub branch: BranchSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub zeros: GridSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("bad config {}: {e}", path.display())))
    }
}

/// Parses `lo:hi:n`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize), UsageError> {
    let bad = || UsageError(format!("expected lo:hi:n, got '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) || n < 2 {
        return Err(UsageError(format!("need lo < hi and n >= 2 in '{s}'")));
    }
    Ok((lo, hi, n))
}

/// Parses `lo:hi`.
pub fn parse_interval(s: &str) -> Result<(f64, f64), UsageError> {
    let bad = || UsageError(format!("expected lo:hi, got '{s}'"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(UsageError(format!("need lo < hi in '{s}'")));
    }
    Ok((lo, hi))
}

/// Parses `key=value` with a numeric value.
pub fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("parameter '{k}' needs a number, got '{v}'"))?;
    Ok((k.trim().to_string(), v))
}

/// The configuration written back into every output header.
#[derive(Debug, Clone, Serialize)]
pub struct Echo<'a, S: Serialize> {
    pub command: &'a str,
    pub plant: &'a str,
    pub params: &'a BTreeMap<String, f64>,
    pub esc: EscEcho,
    pub options: &'a S,
}

#[derive(Debug, Clone, Serialize)]
pub struct EscEcho {
    pub omega: f64,
    pub omega_h: String,
    pub omega_l: String,
    pub gain: f64,
    pub amplitude: f64,
}

impl EscEcho {
    pub fn new(cfg: &EscConfig) -> Self {
        let show = |b: BreakOff| match b {
            BreakOff::Absolute(w) => format!("{w:?}"),
            BreakOff::Ratio(r) => format!("{r:?}*omega"),
        };
        EscEcho {
            omega: cfg.omega,
            omega_h: show(cfg.high_pass),
            omega_l: show(cfg.low_pass),
            gain: cfg.gain,
            amplitude: cfg.amplitude,
        }
    }
}
