//! Transport limit of the expected field and its comparison with the lattice.
//!
//! Under `h -> 0` with the injection rate `alpha` held fixed, the expected
//! field spreads mass uniformly in time along the ray from the source in the
//! drift direction: `<mu_t, f> = alpha * int_0^t f(e + q s) ds`.

use crate::error::{Error, Result};
use crate::lattice::{SimParams, SiteIndex, StepKernel};
use crate::oracle::{least_squares_slope, mu_recursion, IndexWindow};

/// The limit measure at time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineMeasure {
    pub source: (f64, f64),
    pub drift: (f64, f64),
    pub rate: f64,
    pub t: f64,
}

impl LineMeasure {
    pub fn new(source: (f64, f64), kernel: &StepKernel, rate: f64, t: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParams(format!("time {t} must be finite and >= 0")));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParams(format!("rate {rate} must be finite and > 0")));
        }
        let [q1, q2] = kernel.drift();
        Ok(Self {
            source,
            drift: (q1, q2),
            rate,
            t,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.rate * self.t
    }

    pub fn point(&self, s: f64) -> (f64, f64) {
        (self.source.0 + self.drift.0 * s, self.source.1 + self.drift.1 * s)
    }
}

/// Spatial test functions for pairings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction {
    /// `f = value` everywhere.
    Constant(f64),
    /// Smooth compactly supported bump `exp(1 - 1/(1 - (d/R)^2))`, equal to 1
    /// at its centre and vanishing for `d >= R`.
    Bump { center: (f64, f64), radius: f64 },
    /// Gaussian `exp(-d^2 / (2 sigma^2))` cut to zero beyond `8 sigma`.
    Gaussian { center: (f64, f64), sigma: f64 },
}

const GAUSSIAN_CUTOFF: f64 = 8.0;

impl TestFunction {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            TestFunction::Constant(v) => v,
            TestFunction::Bump { center, radius } => {
                let u = ((x - center.0).powi(2) + (y - center.1).powi(2)) / (radius * radius);
                if u >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - u)).exp()
                }
            }
            TestFunction::Gaussian { center, sigma } => {
                let d2 = (x - center.0).powi(2) + (y - center.1).powi(2);
                if d2 >= (GAUSSIAN_CUTOFF * sigma).powi(2) {
                    0.0
                } else {
                    (-d2 / (2.0 * sigma * sigma)).exp()
                }
            }
        }
    }

    /// Centre and radius of a ball outside which `f` vanishes; `None` when the
    /// support is unbounded.
    pub fn support(&self) -> Option<((f64, f64), f64)> {
        match *self {
            TestFunction::Constant(_) => None,
            TestFunction::Bump { center, radius } => Some((center, radius)),
            TestFunction::Gaussian { center, sigma } => Some((center, GAUSSIAN_CUTOFF * sigma)),
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.support().map_or(f64::INFINITY, |(_, r)| r)
    }
}

/// Parameter interval `[s0, s1]` of `[0, t]` on which the segment meets the
/// support ball of `f`, or `None` if they are disjoint.
fn support_interval(m: &LineMeasure, f: &TestFunction) -> Option<(f64, f64)> {
    let Some((c, r)) = f.support() else {
        return Some((0.0, m.t));
    };
    // |e + q s - c|^2 = r^2
    let (dx, dy) = (m.source.0 - c.0, m.source.1 - c.1);
    let a = m.drift.0 * m.drift.0 + m.drift.1 * m.drift.1;
    let b = 2.0 * (dx * m.drift.0 + dy * m.drift.1);
    let cc = dx * dx + dy * dy - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc <= 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let lo = ((-b - root) / (2.0 * a)).max(0.0);
    let hi = ((-b + root) / (2.0 * a)).min(m.t);
    (lo < hi).then_some((lo, hi))
}

const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_DEPTH: u32 = 50;

fn simpson<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (g(a), g(m), g(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = simpson_rec(g, a, b, fa, fm, fb, whole, tol, QUAD_MAX_DEPTH)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure(format!("non-finite integral on [{a}, {b}]")))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    g: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (g(lm), g(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureFailure(format!(
            "no convergence on [{a}, {b}] at maximum depth"
        )));
    }
    Ok(simpson_rec(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + simpson_rec(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// `alpha * int_0^t f(e + q s) ds`, absolute tolerance `1e-10`.
pub fn limit_pairing(m: &LineMeasure, f: &TestFunction) -> Result<f64> {
    if m.t == 0.0 {
        return Ok(0.0);
    }
    if let TestFunction::Constant(v) = f {
        return Ok(m.rate * m.t * v);
    }
    let Some((s0, s1)) = support_interval(m, f) else {
        return Ok(0.0);
    };
    let g = |s: f64| {
        let (x, y) = m.point(s);
        f.eval(x, y)
    };
    Ok(m.rate * simpson(&g, s0, s1, QUAD_TOL / m.rate)?)
}

/// Number of lattice steps covering physical time `t`.
pub fn steps_for(t: f64, h: f64) -> usize {
    (t / h).floor() as usize
}

/// `sum_w mu_{floor(t/h)}(w) f(h w)` from the exact expected-field recursion.
pub fn discrete_pairing(kernel: &StepKernel, params: &SimParams, f: &TestFunction, t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParams(format!("time {t} must be finite and >= 0")));
    }
    let h = params.h;
    let n = steps_for(t, h);
    let mut window = IndexWindow::for_steps(kernel, params.source, n);
    if let Some((c, r)) = f.support() {
        let (ex, ey) = params.source.to_physical(h);
        let reach = ((c.0 - ex).abs().max((c.1 - ey).abs()) + r) / h;
        let half = reach.ceil() as usize + 1;
        window = window.union(&IndexWindow::centered(params.source, half));
    }
    let mu = mu_recursion(kernel, params, n, Some(window))?;
    let field = mu.field();
    let mut acc = 0.0;
    for (k, &v) in field.values().iter().enumerate() {
        if v != 0.0 {
            let (x, y) = field.window().site_at(k).to_physical(h);
            acc += v * f.eval(x, y);
        }
    }
    Ok(acc)
}

/// One row of a convergence table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub discrete: f64,
    pub limit: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h`, when at least two
    /// errors are positive.
    pub slope: Option<f64>,
}

impl ConvergenceTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    /// Number of consecutive pairs along which the error fails to decrease.
    pub fn non_monotone_pairs(&self) -> usize {
        self.rows.windows(2).filter(|w| w[1].error > w[0].error).count()
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    /// `h,error` rows followed by a `slope,<value>` footer (`nan` if unfitted).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,error\n");
        for r in &self.rows {
            out.push_str(&format!("{:.16e},{:.16e}\n", r.h, r.error));
        }
        match self.slope {
            Some(s) => out.push_str(&format!("slope,{s:.16e}\n")),
            None => out.push_str("slope,nan\n"),
        }
        out
    }
}

/// The mesh sequence `10 * 2^-k` for `k` in `ks`.
pub fn dyadic_meshes(ks: std::ops::RangeInclusive<u32>) -> Vec<f64> {
    ks.map(|k| 10.0 * 0.5f64.powi(k as i32)).collect()
}

/// Pairing errors `|<mu^h_t, f> - <mu_t, f>|` with the source at the origin and
/// the injection mean set to `alpha * h` at each mesh.
pub fn convergence_study(
    kernel: &StepKernel,
    f: &TestFunction,
    t: f64,
    alpha: f64,
    h_list: &[f64],
) -> Result<ConvergenceTable> {
    let limit = limit_pairing(&LineMeasure::new((0.0, 0.0), kernel, alpha, t)?, f)?;
    let rows: Vec<Result<ConvergenceRow>> = crate::par_map_slice(h_list, |&h| {
        let params = SimParams {
            h,
            source: SiteIndex::ORIGIN,
            injection_mean: alpha * h,
            box_half_width: f64::INFINITY,
            seed: 0,
        };
        let discrete = discrete_pairing(kernel, &params, f, t)?;
        Ok(ConvergenceRow {
            h,
            discrete,
            limit,
            error: (discrete - limit).abs(),
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.error > 0.0)
        .map(|r| (r.h.ln(), r.error.ln()))
        .unzip();
    let slope = (xs.len() >= 2).then(|| least_squares_slope(&xs, &ys));
    Ok(ConvergenceTable { rows, slope })
}
