//! Monte-Carlo trials of the detection algorithms and their aggregation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::panic::{catch_unwind, AssertUnwindSafe};

use crate::error::{Error, Result};
use crate::lattice::{RngStream, SimParams, StepKernel};
use crate::search::{alg1_run, alg2_run, find_seed_site, success_check, Alg1Config, Alg2Config, SearchTrace};
use crate::sensor::MeasurementLedger;
use crate::sim::{ParticleSim, Plume};

/// Random streams per trial; trial `t` uses ids `t * STREAMS_PER_TRIAL + purpose`.
pub const STREAMS_PER_TRIAL: u64 = 4;
pub const STREAM_SIM: u64 = 0;
pub const STREAM_SEED_PICK: u64 = 1;
pub const STREAM_PATHS: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    ScanningWindow,
    BrownianGuided,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::ScanningWindow => "alg1",
            Algorithm::BrownianGuided => "alg2",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "alg1" | "1" => Some(Algorithm::ScanningWindow),
            "alg2" | "2" => Some(Algorithm::BrownianGuided),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Everything a sweep over one `(algorithm, kernel, r)` cell needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub algorithm: Algorithm,
    pub kernel_label: String,
    pub kernel: StepKernel,
    pub params: SimParams,
    pub r: u32,
    pub n0: u32,
    pub n1: u32,
    pub c: f64,
    pub k: f64,
    pub trials: u64,
    pub max_iters_alg1: usize,
    pub max_iters_alg2: usize,
}

impl SweepConfig {
    /// Reference protocol: `N0 = N1 = 10`, `c = 0.5`, `K = 0`, 200 trials.
    pub fn reference(algorithm: Algorithm, kernel_label: &str, kernel: StepKernel, r: u32) -> Self {
        Self {
            algorithm,
            kernel_label: kernel_label.to_string(),
            kernel,
            params: SimParams::reference(),
            r,
            n0: 10,
            n1: 10,
            c: 0.5,
            k: 0.0,
            trials: 200,
            max_iters_alg1: 200,
            max_iters_alg2: 500,
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.params.seed
    }

    fn alg1(&self) -> Alg1Config {
        Alg1Config {
            r: self.r,
            n0: self.n0,
            max_iters: self.max_iters_alg1,
        }
    }

    fn alg2(&self) -> Alg2Config {
        Alg2Config {
            r: self.r,
            n0: self.n0,
            n1: self.n1,
            c: self.c,
            k: self.k,
            max_iters: self.max_iters_alg2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParams("M must be >= 1".into()));
        }
        self.params.validate()?;
        match self.algorithm {
            Algorithm::ScanningWindow => self.alg1().validate(),
            Algorithm::BrownianGuided => self.alg2().validate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialMetrics {
    pub trial_id: u64,
    pub success: bool,
    pub measurements: u64,
    /// Number of window averages taken after the seed.
    pub iterations: usize,
    pub converged: bool,
    pub elapsed_steps: u64,
    pub seed: u64,
    /// Error text for trials that failed before or during the search.
    pub failure: Option<String>,
}

/// A single detection run with its full trace.
#[derive(Clone, Debug)]
pub struct TrialRun {
    pub metrics: TrialMetrics,
    pub trace: Option<SearchTrace>,
}

/// Runs trial `trial_id` of `cfg`.
pub fn run_trial(cfg: &SweepConfig, trial_id: u64) -> TrialRun {
    let seed = cfg.base_seed();
    let stream = |purpose: u64| RngStream::new(seed, trial_id * STREAMS_PER_TRIAL + purpose);
    let mut metrics = TrialMetrics {
        trial_id,
        success: false,
        measurements: 0,
        iterations: 0,
        converged: false,
        elapsed_steps: 0,
        seed,
        failure: None,
    };
    let mut sim = match ParticleSim::new(cfg.kernel, cfg.params, stream(STREAM_SIM)) {
        Ok(s) => s,
        Err(e) => {
            metrics.failure = Some(e.to_string());
            return TrialRun { metrics, trace: None };
        }
    };
    let seed_site = match find_seed_site(&mut sim, &mut stream(STREAM_SEED_PICK)) {
        Ok(w) => w,
        Err(e) => {
            metrics.elapsed_steps = sim.step_index();
            metrics.failure = Some(e.to_string());
            return TrialRun { metrics, trace: None };
        }
    };
    let mut ledger = MeasurementLedger::for_window(cfg.r);
    let outcome = match cfg.algorithm {
        Algorithm::ScanningWindow => alg1_run(&mut sim, &cfg.alg1(), seed_site, &mut ledger),
        Algorithm::BrownianGuided => alg2_run(
            &mut sim,
            &cfg.alg2(),
            &cfg.kernel,
            cfg.params.h,
            seed_site,
            &mut ledger,
            &mut stream(STREAM_PATHS),
        ),
    };
    metrics.measurements = ledger.total_measurements();
    metrics.elapsed_steps = sim.step_index();
    let trace = match outcome {
        Ok(t) => Some(t),
        Err(Error::MaxItersExceeded(t)) => {
            metrics.failure = Some(format!("no fixpoint after {} iterations", t.iterates.len()));
            Some(*t)
        }
        Err(e) => {
            metrics.failure = Some(e.to_string());
            None
        }
    };
    if let Some(t) = &trace {
        metrics.iterations = match cfg.algorithm {
            Algorithm::ScanningWindow => t.iterates.len().saturating_sub(1),
            Algorithm::BrownianGuided => t.iterates.len(),
        };
        metrics.converged = t.converged_site.is_some();
        metrics.success = success_check(t.converged_site, cfg.params.source);
    }
    TrialRun { metrics, trace }
}

fn isolated_trial(cfg: &SweepConfig, trial_id: u64) -> TrialMetrics {
    match catch_unwind(AssertUnwindSafe(|| run_trial(cfg, trial_id).metrics)) {
        Ok(m) => m,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            TrialMetrics {
                trial_id,
                success: false,
                measurements: 0,
                iterations: 0,
                converged: false,
                elapsed_steps: 0,
                seed: cfg.base_seed(),
                failure: Some(format!("trial panicked: {msg}")),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub kernel_label: String,
    pub algorithm: Algorithm,
    pub r: u32,
    pub trials: u64,
    pub successes: u64,
    pub detection_probability: f64,
    pub error_probability: f64,
    /// Mean over all trials, failed ones included.
    pub mean_measurements: f64,
    /// Mean over successful trials only; NaN when there are none.
    pub mean_measurements_success: f64,
    /// `mean_measurements / detection_probability`, infinite when nothing was
    /// detected.
    pub relative_efficiency: f64,
}

impl SweepSummary {
    pub fn from_trials(cfg: &SweepConfig, trials: &[TrialMetrics]) -> Self {
        let m = trials.len() as u64;
        let successes = trials.iter().filter(|t| t.success).count() as u64;
        let total: u64 = trials.iter().map(|t| t.measurements).sum();
        let success_total: u64 = trials.iter().filter(|t| t.success).map(|t| t.measurements).sum();
        let p = successes as f64 / m as f64;
        let mean = total as f64 / m as f64;
        Self {
            kernel_label: cfg.kernel_label.clone(),
            algorithm: cfg.algorithm,
            r: cfg.r,
            trials: m,
            successes,
            detection_probability: p,
            error_probability: (m - successes) as f64 / m as f64,
            mean_measurements: mean,
            mean_measurements_success: if successes > 0 {
                success_total as f64 / successes as f64
            } else {
                f64::NAN
            },
            relative_efficiency: if successes > 0 { mean / p } else { f64::INFINITY },
        }
    }
}

/// Runs trials `trial_offset .. trial_offset + cfg.trials`. Trials run in
/// parallel when the `parallel` feature is on; the result is ordered by trial
/// id regardless.
pub fn run_sweep(cfg: &SweepConfig, trial_offset: u64) -> Result<(SweepSummary, Vec<TrialMetrics>)> {
    cfg.validate()?;
    let trials = crate::par_map(trial_offset..trial_offset + cfg.trials, |id| isolated_trial(cfg, id));
    Ok((SweepSummary::from_trials(cfg, &trials), trials))
}

pub const CSV_HEADER: &str = "algorithm,kernel,r,M,p_detect,p_error,mean_measurements,rel_efficiency";

/// Reals in scientific notation with 17 significant digits.
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn emit_csv(summaries: &[SweepSummary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.algorithm,
            s.kernel_label,
            s.r,
            s.trials,
            format_real(s.detection_probability),
            format_real(s.error_probability),
            format_real(s.mean_measurements),
            format_real(s.relative_efficiency)
        );
    }
    out
}

/// Parsed CSV row: `(algorithm, kernel, r, M, p_detect, p_error, mean, rel_eff)`.
pub type CsvRow = (String, String, u32, u64, f64, f64, f64, f64);

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidParams("missing CSV header".into()));
    }
    let bad = |line: &str| Error::InvalidParams(format!("malformed CSV row: {line}"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(line));
            }
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            Ok((
                f[0].to_string(),
                f[1].to_string(),
                f[2].parse().map_err(|_| bad(line))?,
                f[3].parse().map_err(|_| bad(line))?,
                real(f[4])?,
                real(f[5])?,
                real(f[6])?,
                real(f[7])?,
            ))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    DetectionProbability,
    ErrorProbability,
    MeanMeasurements,
    RelativeEfficiency,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::DetectionProbability => "detection probability",
            Metric::ErrorProbability => "error probability",
            Metric::MeanMeasurements => "mean measurements",
            Metric::RelativeEfficiency => "relative efficiency",
        }
    }

    pub fn value(&self, s: &SweepSummary) -> f64 {
        match self {
            Metric::DetectionProbability => s.detection_probability,
            Metric::ErrorProbability => s.error_probability,
            Metric::MeanMeasurements => s.mean_measurements,
            Metric::RelativeEfficiency => s.relative_efficiency,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Line chart of `metric` against `r`, one polyline per `(algorithm, kernel)`
/// series. Non-finite values are left out of the lines.
pub fn emit_svg_lines(summaries: &[SweepSummary], metric: Metric) -> Result<String> {
    if summaries.is_empty() {
        return Err(Error::EmptyInput("no sweep summaries to plot".into()));
    }
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in summaries {
        let v = metric.value(s);
        let pts = series.entry(format!("{} {}", s.algorithm, s.kernel_label)).or_default();
        if v.is_finite() {
            pts.push((f64::from(s.r), v));
        }
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let finite: Vec<(f64, f64)> = series.values().flatten().copied().collect();
    let (mut x0, mut x1) = bounds(finite.iter().map(|p| p.0));
    let (mut y0, mut y1) = bounds(finite.iter().map(|p| p.1));
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    y0 = y0.min(0.0);
    if y0 == y1 {
        y1 = y0 + 1.0;
    }

    let (w, hgt) = (640.0, 420.0);
    let (left, right, top, bottom) = (80.0, 170.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = hgt - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{hgt}" viewBox="0 0 {w} {hgt}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{hgt}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{yb}" x2="{xr}" y2="{yb}" stroke="black"/>"#,
        yb = top + ph,
        xr = left + pw
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{yb}" stroke="black"/>"#,
        yb = top + ph
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(fx),
            top + ph + 18.0,
            tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">r</text>"#,
        left + pw / 2.0,
        hgt - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        metric.label()
    );
    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = top + 14.0 + 18.0 * idx as f64;
        let lx = left + pw + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, name);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}
