//! Flat TOML configuration. Every key is optional; command-line flags win over
//! the file, and the file wins over the built-in reference values.
//!
//! ```toml
//! kernel = "p4"            # preset label, or give all of p1..p4
//! p1 = 0.55
//! p2 = 0.35
//! p3 = 0.05
//! p4 = 0.05
//! h = 0.0390625
//! injection_mean = 25.0
//! box = 6.0
//! r = 12
//! N0 = 10
//! N1 = 10
//! c = 0.5
//! K = 0.0
//! M = 200
//! seed = 0
//! ```

use std::path::Path;

use clap::Args;
use plume_core::lattice::{presets, SimParams, StepKernel};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub kernel: Option<String>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub p3: Option<f64>,
    pub p4: Option<f64>,
    pub h: Option<f64>,
    pub injection_mean: Option<f64>,
    #[serde(rename = "box")]
    pub box_half_width: Option<f64>,
    pub r: Option<u32>,
    #[serde(rename = "N0")]
    pub n0: Option<u32>,
    #[serde(rename = "N1")]
    pub n1: Option<u32>,
    pub c: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<u64>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Step kernel: a preset (p1, p2, p3, p4, field) or four comma-separated probabilities.
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Lattice spacing.
    #[arg(long, global = true)]
    pub h: Option<f64>,
    /// Mean particles injected per step.
    #[arg(long = "injection-mean", global = true)]
    pub injection_mean: Option<f64>,
    /// Half-width of the absorbing box.
    #[arg(long = "box", global = true)]
    pub box_half_width: Option<f64>,
    /// Sensor window parameter.
    #[arg(long, global = true)]
    pub r: Option<u32>,
    #[arg(long, global = true)]
    pub n0: Option<u32>,
    #[arg(long, global = true)]
    pub n1: Option<u32>,
    /// Variance-update factor.
    #[arg(long, global = true)]
    pub c: Option<f64>,
    /// Variance-update threshold.
    #[arg(long, global = true)]
    pub k: Option<f64>,
    /// Trials per sweep cell.
    #[arg(long, global = true)]
    pub m: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

/// Fully resolved settings. The kernel is kept raw so that invalid
/// probabilities surface as runtime errors from the core crate.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub kernel_label: String,
    pub probabilities: [f64; 4],
    pub params: SimParams,
    pub r: u32,
    pub n0: u32,
    pub n1: u32,
    pub c: f64,
    pub k: f64,
    pub m: u64,
}

fn preset(label: &str) -> Option<[f64; 4]> {
    if label.eq_ignore_ascii_case("field") {
        return Some(presets::FIELD);
    }
    presets::by_label(&label.to_ascii_lowercase())
}

/// `p4`, `field`, or `a,b,c,d`.
pub fn parse_kernel(text: &str) -> Result<(String, [f64; 4]), CliError> {
    if let Some(p) = preset(text.trim()) {
        return Ok((text.trim().to_ascii_lowercase(), p));
    }
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::Usage(format!(
            "kernel '{text}' is neither a preset nor four comma-separated probabilities"
        )));
    }
    let mut p = [0.0; 4];
    for (slot, s) in p.iter_mut().zip(&parts) {
        *slot = s
            .parse()
            .map_err(|_| CliError::Usage(format!("kernel entry '{s}' is not a number")))?;
    }
    Ok(("custom".to_string(), p))
}

impl Settings {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Self, CliError> {
        let base = SimParams::reference();
        let (mut label, mut probabilities) = ("p4".to_string(), presets::P4);
        if let Some(name) = &file.kernel {
            (label, probabilities) = parse_kernel(name)?;
        }
        match (file.p1, file.p2, file.p3, file.p4) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                label = "custom".to_string();
                probabilities = [a, b, c, d];
            }
            (None, None, None, None) => {}
            _ => return Err(CliError::Usage("config must give all of p1..p4 or none".into())),
        }
        if let Some(text) = &flags.kernel {
            (label, probabilities) = parse_kernel(text)?;
        }
        let params = SimParams {
            h: flags.h.or(file.h).unwrap_or(base.h),
            source: base.source,
            injection_mean: flags.injection_mean.or(file.injection_mean).unwrap_or(base.injection_mean),
            box_half_width: flags.box_half_width.or(file.box_half_width).unwrap_or(base.box_half_width),
            seed: flags.seed.or(file.seed).unwrap_or(base.seed),
        };
        Ok(Self {
            kernel_label: label,
            probabilities,
            params,
            r: flags.r.or(file.r).unwrap_or(12),
            n0: flags.n0.or(file.n0).unwrap_or(10),
            n1: flags.n1.or(file.n1).unwrap_or(10),
            c: flags.c.or(file.c).unwrap_or(0.5),
            k: flags.k.or(file.k).unwrap_or(0.0),
            m: flags.m.or(file.m).unwrap_or(200),
        })
    }

    pub fn kernel(&self) -> plume_core::Result<StepKernel> {
        StepKernel::from_array(self.probabilities)
    }
}
