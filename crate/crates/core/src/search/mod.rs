//! Source detection with moving sensor windows.
//!
//! [`alg1_run`] recentres a square window on the site with the highest
//! time-averaged count until it stops moving. [`alg2_run`] instead places
//! sensors along randomly perturbed rays running upstream against the drift,
//! shrinking the perturbation while readings improve.

mod alg1;
mod alg2;
mod brownian;
mod seed;

pub use alg1::{alg1_run, alg1_window};
pub use alg2::{alg2_initial_scan, alg2_run, scan_line, InitialScan};
pub use brownian::{brownian_points, brownian_sites, snap, MAX_PATH_FACTOR};
pub use seed::{find_seed_site, SEED_EXTRA_STEPS, SEED_MAX_COUNT, SEED_MIN_COUNT, SEED_STEP};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lattice::SiteIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alg1Config {
    pub r: u32,
    /// Steps per time window.
    pub n0: u32,
    pub max_iters: usize,
}

impl Alg1Config {
    pub fn new(r: u32, n0: u32) -> Result<Self> {
        let cfg = Self { r, n0, max_iters: 200 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::InvalidParams(format!("r = {} must be >= 2", self.r)));
        }
        if self.n0 == 0 || self.max_iters == 0 {
            return Err(Error::InvalidParams("N0 and max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alg2Config {
    pub r: u32,
    /// Steps in the initial line scan.
    pub n0: u32,
    /// Steps per later window.
    pub n1: u32,
    /// Variance shrink factor, in `(0, 1)`.
    pub c: f64,
    /// Dead band on reading changes.
    pub k: f64,
    pub max_iters: usize,
}

impl Alg2Config {
    pub fn new(r: u32, n0: u32, n1: u32, c: f64, k: f64) -> Result<Self> {
        let cfg = Self {
            r,
            n0,
            n1,
            c,
            k,
            max_iters: 500,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::InvalidParams(format!("r = {} must be >= 2", self.r)));
        }
        if self.n0 == 0 || self.n1 == 0 || self.max_iters == 0 {
            return Err(Error::InvalidParams("N0, N1 and max_iters must be >= 1".into()));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::InvalidParams(format!("c = {} must lie in (0, 1)", self.c)));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::InvalidParams(format!("K = {} must be >= 0", self.k)));
        }
        Ok(())
    }
}

/// One search iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Iterate {
    pub j: usize,
    /// Step index at which the iterate was chosen.
    pub n: u64,
    pub site: SiteIndex,
    pub lambda: f64,
    /// Perturbation scale; `None` for the scanning-window search.
    pub l: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchTrace {
    pub iterates: Vec<Iterate>,
    pub converged_site: Option<SiteIndex>,
    pub measurements: u64,
}

impl SearchTrace {
    fn push(&mut self, n: u64, site: SiteIndex, lambda: f64, l: Option<f64>) {
        let j = self.iterates.len();
        self.iterates.push(Iterate { j, n, site, lambda, l });
    }

    pub fn last_site(&self) -> Option<SiteIndex> {
        self.iterates.last().map(|it| it.site)
    }

    /// One JSON object per iterate: `{"j","n","w_i","w_j","lambda","L"}`, with
    /// `L` null for the scanning-window search.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for it in &self.iterates {
            let l = it.l.map_or_else(|| "null".to_string(), json_f64);
            let _ = writeln!(
                out,
                "{{\"j\":{},\"n\":{},\"w_i\":{},\"w_j\":{},\"lambda\":{},\"L\":{}}}",
                it.j,
                it.n,
                it.site.i,
                it.site.j,
                json_f64(it.lambda),
                l
            );
        }
        out
    }
}

/// Shortest round-trip decimal form; non-finite values become null.
pub(crate) fn json_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        "null".to_string()
    }
}

/// `c L` after an improvement of at least `K`, `L / c` after a drop of at
/// least `K`, otherwise `L`.
pub fn variance_update(l: f64, lambda_j: f64, lambda_jm1: f64, c: f64, k: f64) -> f64 {
    if lambda_j >= lambda_jm1 + k {
        c * l
    } else if lambda_j <= lambda_jm1 - k {
        l / c
    } else {
        l
    }
}

/// Detection succeeds on the source or one of its four lattice neighbours.
pub fn success_check(converged: Option<SiteIndex>, source: SiteIndex) -> bool {
    converged.is_some_and(|w| w.l1_distance(source) <= 1)
}

/// Site with the largest value, ties to the lexicographically smallest.
pub(crate) fn pick_best(averages: &std::collections::BTreeMap<SiteIndex, f64>) -> (SiteIndex, f64) {
    crate::sensor::argmax(averages).expect("window averages are never empty")
}
