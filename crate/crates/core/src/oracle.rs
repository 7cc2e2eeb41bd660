//! Deterministic oracles for the particle system.
//!
//! Two independent dynamic programs live here:
//!
//! * the expected-field recursion, which *pulls* mass into each site from its
//!   neighbours with the axis-swapped weights `(p3, p4, p1, p2)` and adds the
//!   mean injection at the source, and
//! * the single-particle law `P_e(X_k = .)`, which *pushes* mass out of each
//!   site with the kernel weights `p`.
//!
//! Summing the second over `k` and scaling by the mean injection must reproduce
//! the first exactly; the Green's function is the same sum carried to
//! (numerical) infinity.

use crate::error::{Error, Result};
use crate::lattice::{RngStream, SimParams, SiteIndex, StepKernel, NEIGHBOR_OFFSETS};
use crate::sim::{ParticleSim, Plume};

/// Entries on the border of a dense window must stay below this for the
/// window to count as loss-free.
pub const EDGE_TOL: f64 = 1e-12;

/// Consecutive sub-tolerance increments required before truncating a sum.
pub const TRUNCATION_RUN: usize = 10;

/// Hard cap on Green's function horizons.
pub const MAX_HORIZON: usize = 1_000_000;

/// Axis-aligned rectangle of lattice sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexWindow {
    pub origin: SiteIndex,
    pub width: usize,
    pub height: usize,
}

impl IndexWindow {
    pub fn new(origin: SiteIndex, width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "window must be non-empty");
        Self {
            origin,
            width,
            height,
        }
    }

    /// Square window of side `2 * half_width + 1` centred on `center`.
    pub fn centered(center: SiteIndex, half_width: usize) -> Self {
        let hw = half_width as i64;
        Self::new(center.offset(-hw, -hw), 2 * half_width + 1, 2 * half_width + 1)
    }

    /// Default window for `n` steps of the expected-field recursion: drift plus a
    /// six-sigma diffusion envelope around the source.
    pub fn for_steps(kernel: &StepKernel, source: SiteIndex, n: usize) -> Self {
        let [q1, q2] = kernel.drift();
        let nf = n as f64;
        let drift = (3.0 * nf * q1.abs().max(q2.abs())).ceil() as usize;
        let spread = (6.0 * nf.sqrt()).ceil() as usize;
        Self::centered(source, (drift + spread).max(64))
    }

    pub fn max_i(&self) -> i64 {
        self.origin.i + self.width as i64 - 1
    }

    pub fn max_j(&self) -> i64 {
        self.origin.j + self.height as i64 - 1
    }

    pub fn contains(&self, w: SiteIndex) -> bool {
        (self.origin.i..=self.max_i()).contains(&w.i) && (self.origin.j..=self.max_j()).contains(&w.j)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major offset (`j` outer, `i` inner), or `None` outside.
    pub fn offset_of(&self, w: SiteIndex) -> Option<usize> {
        if !self.contains(w) {
            return None;
        }
        let di = (w.i - self.origin.i) as usize;
        let dj = (w.j - self.origin.j) as usize;
        Some(dj * self.width + di)
    }

    pub fn site_at(&self, offset: usize) -> SiteIndex {
        let di = (offset % self.width) as i64;
        let dj = (offset / self.width) as i64;
        self.origin.offset(di, dj)
    }

    pub fn is_edge(&self, w: SiteIndex) -> bool {
        self.contains(w)
            && (w.i == self.origin.i || w.i == self.max_i() || w.j == self.origin.j || w.j == self.max_j())
    }

    /// Smallest window containing both.
    pub fn union(&self, other: &IndexWindow) -> IndexWindow {
        let i0 = self.origin.i.min(other.origin.i);
        let j0 = self.origin.j.min(other.origin.j);
        let i1 = self.max_i().max(other.max_i());
        let j1 = self.max_j().max(other.max_j());
        IndexWindow::new(SiteIndex::new(i0, j0), (i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize)
    }

    /// Grows the window by `pad` sites on every side.
    pub fn padded(&self, pad: usize) -> IndexWindow {
        let p = pad as i64;
        IndexWindow::new(self.origin.offset(-p, -p), self.width + 2 * pad, self.height + 2 * pad)
    }
}

/// Bounding box of the nonzero entries, in window-relative coordinates.
#[derive(Clone, Copy, Debug)]
struct Active {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
}

impl Active {
    fn point(di: usize, dj: usize) -> Self {
        Self {
            i0: di,
            i1: di,
            j0: dj,
            j1: dj,
        }
    }

    fn grown(self, window: &IndexWindow) -> Self {
        Self {
            i0: self.i0.saturating_sub(1),
            i1: (self.i1 + 1).min(window.width - 1),
            j0: self.j0.saturating_sub(1),
            j1: (self.j1 + 1).min(window.height - 1),
        }
    }
}

/// Dense real-valued field over a window.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseField {
    window: IndexWindow,
    values: Vec<f64>,
}

impl DenseField {
    pub fn zeros(window: IndexWindow) -> Self {
        Self {
            window,
            values: vec![0.0; window.len()],
        }
    }

    pub fn window(&self) -> &IndexWindow {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `w`, zero outside the window.
    pub fn get(&self, w: SiteIndex) -> f64 {
        self.window.offset_of(w).map_or(0.0, |k| self.values[k])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn edge_max(&self) -> f64 {
        let w = &self.window;
        let mut m: f64 = 0.0;
        for di in 0..w.width {
            m = m.max(self.values[di]).max(self.values[(w.height - 1) * w.width + di]);
        }
        for dj in 0..w.height {
            m = m.max(self.values[dj * w.width]).max(self.values[dj * w.width + w.width - 1]);
        }
        m
    }

    /// Largest entry; ties go to the lexicographically smallest site.
    pub fn argmax(&self) -> (SiteIndex, f64) {
        let mut best = (self.window.site_at(0), f64::NEG_INFINITY);
        for (k, &v) in self.values.iter().enumerate() {
            let w = self.window.site_at(k);
            if v > best.1 || (v == best.1 && w < best.0) {
                best = (w, v);
            }
        }
        best
    }

    /// Largest entry over sites other than `skip`.
    pub fn max_excluding(&self, skip: SiteIndex) -> (SiteIndex, f64) {
        let mut best = (skip, f64::NEG_INFINITY);
        for (k, &v) in self.values.iter().enumerate() {
            let w = self.window.site_at(k);
            if w != skip && (v > best.1 || (v == best.1 && w < best.0)) {
                best = (w, v);
            }
        }
        best
    }

    /// `(site, value)` pairs with a nonzero value, lexicographic by site.
    pub fn nonzero(&self) -> Vec<(SiteIndex, f64)> {
        let mut out: Vec<(SiteIndex, f64)> = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, &v)| (self.window.site_at(k), v))
            .collect();
        out.sort_by_key(|a| a.0);
        out
    }

    /// Restriction to a sub-window (zero where `sub` leaves this window).
    pub fn restrict(&self, sub: IndexWindow) -> DenseField {
        let mut out = DenseField::zeros(sub);
        for k in 0..sub.len() {
            out.values[k] = self.get(sub.site_at(k));
        }
        out
    }
}

/// Window stored with a ring of zeros around it, so stencil updates run
/// without bounds checks. Entries outside the active box are zero.
#[derive(Clone, Debug)]
struct Padded {
    window: IndexWindow,
    stride: usize,
    cur: Vec<f64>,
    next: Vec<f64>,
    active: Active,
}

impl Padded {
    fn point(window: IndexWindow, site: SiteIndex, value: f64) -> Result<Self> {
        if !window.contains(site) {
            return Err(Error::WindowTooSmall(format!(
                "window {window:?} does not contain the source {site}"
            )));
        }
        let stride = window.width + 2;
        let len = stride * (window.height + 2);
        let di = (site.i - window.origin.i) as usize;
        let dj = (site.j - window.origin.j) as usize;
        let mut grid = Self {
            window,
            stride,
            cur: vec![0.0; len],
            next: vec![0.0; len],
            active: Active::point(di, dj),
        };
        let k = grid.index(di, dj);
        grid.cur[k] = value;
        Ok(grid)
    }

    fn index(&self, di: usize, dj: usize) -> usize {
        (dj + 1) * self.stride + di + 1
    }

    fn get(&self, w: SiteIndex) -> f64 {
        if !self.window.contains(w) {
            return 0.0;
        }
        self.cur[self.index((w.i - self.window.origin.i) as usize, (w.j - self.window.origin.j) as usize)]
    }

    fn add(&mut self, w: SiteIndex, v: f64) {
        let k = self.index((w.i - self.window.origin.i) as usize, (w.j - self.window.origin.j) as usize);
        self.cur[k] += v;
    }

    /// `next(w) = a cur(w - e1) + b cur(w - e2) + c cur(w + e1) + d cur(w + e2)`
    /// with `[a, b, c, d] = from`, zero outside the window.
    fn pull(&mut self, from: [f64; 4]) {
        let [a, b, c, d] = from;
        let g = self.active.grown(&self.window);
        let stride = self.stride;
        for dj in g.j0..=g.j1 {
            let lo = (dj + 1) * stride + g.i0 + 1;
            let hi = (dj + 1) * stride + g.i1 + 2;
            let left = &self.cur[lo - 1..hi - 1];
            let right = &self.cur[lo + 1..hi + 1];
            let below = &self.cur[lo - stride..hi - stride];
            let above = &self.cur[lo + stride..hi + stride];
            let out = &mut self.next[lo..hi];
            for k in 0..out.len() {
                out[k] = a * left[k] + b * below[k] + c * right[k] + d * above[k];
            }
        }
        std::mem::swap(&mut self.cur, &mut self.next);
        self.active = g;
    }

    fn total(&self) -> f64 {
        let a = self.active;
        (a.j0..=a.j1)
            .map(|dj| self.cur[self.index(a.i0, dj)..=self.index(a.i1, dj)].iter().sum::<f64>())
            .sum()
    }

    fn to_dense(&self) -> DenseField {
        let mut out = DenseField::zeros(self.window);
        let w = self.window.width;
        for dj in 0..self.window.height {
            let k = self.index(0, dj);
            out.values[dj * w..(dj + 1) * w].copy_from_slice(&self.cur[k..k + w]);
        }
        out
    }

    fn edge_max(&self) -> f64 {
        let (w, h) = (self.window.width, self.window.height);
        let mut m: f64 = 0.0;
        for di in 0..w {
            m = m.max(self.cur[self.index(di, 0)]).max(self.cur[self.index(di, h - 1)]);
        }
        for dj in 0..h {
            m = m.max(self.cur[self.index(0, dj)]).max(self.cur[self.index(w - 1, dj)]);
        }
        m
    }
}

/// One step of the single-particle law in push form: each site sends
/// `p_l` of its mass to `w + e_l`. Returns the mass pushed out of the window.
fn push_step(prev: &[f64], next: &mut [f64], window: &IndexWindow, p: &[f64; 4], active: Active) -> (Active, f64) {
    let width = window.width;
    let grown = active.grown(window);
    for dj in grown.j0..=grown.j1 {
        next[dj * width + grown.i0..=dj * width + grown.i1].fill(0.0);
    }
    let mut lost = 0.0;
    for dj in active.j0..=active.j1 {
        for di in active.i0..=active.i1 {
            let m = prev[dj * width + di];
            if m == 0.0 {
                continue;
            }
            for (l, &(oi, oj)) in NEIGHBOR_OFFSETS.iter().enumerate() {
                let ti = di as i64 + oi;
                let tj = dj as i64 + oj;
                if ti < 0 || tj < 0 || ti >= width as i64 || tj >= window.height as i64 {
                    lost += m * p[l];
                } else {
                    next[tj as usize * width + ti as usize] += m * p[l];
                }
            }
        }
    }
    (grown, lost)
}

/// Expected particle counts `mu_n(w) = E N_n(w)` on a dense window.
#[derive(Clone, Debug)]
pub struct ExpectedField {
    grid: Padded,
    step_index: usize,
    source: SiteIndex,
    injection_mean: f64,
    /// Pull weights from the left, below, right and above neighbours.
    from: [f64; 4],
}

impl ExpectedField {
    /// Step-0 field: the mean injection at the source, zero elsewhere.
    pub fn start(kernel: &StepKernel, source: SiteIndex, injection_mean: f64, window: IndexWindow) -> Result<Self> {
        // mu_{n+1}(w) = sum_l mu_n(w + e_l) p~_l, p~ = (p3, p4, p1, p2)
        let pt = kernel.reversed();
        Ok(Self {
            grid: Padded::point(window, source, injection_mean)?,
            step_index: 0,
            source,
            injection_mean,
            from: [pt[2], pt[3], pt[0], pt[1]],
        })
    }

    pub fn advance(&mut self) {
        self.grid.pull(self.from);
        self.grid.add(self.source, self.injection_mean);
        self.step_index += 1;
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Copy of the field as a plain dense array.
    pub fn field(&self) -> DenseField {
        self.grid.to_dense()
    }

    pub fn value(&self, w: SiteIndex) -> f64 {
        self.grid.get(w)
    }

    pub fn window(&self) -> &IndexWindow {
        &self.grid.window
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.total()
    }

    /// Errors when mass has reached the window border.
    pub fn check_edges(&self) -> Result<()> {
        let edge = self.grid.edge_max();
        if edge >= EDGE_TOL {
            return Err(Error::WindowTooSmall(format!(
                "edge value {edge:e} at step {} exceeds {EDGE_TOL:e}",
                self.step_index
            )));
        }
        Ok(())
    }
}

/// Iterates the expected-field recursion for `n_steps` steps on `window`
/// (defaulting to [`IndexWindow::for_steps`]).
pub fn mu_recursion(
    kernel: &StepKernel,
    params: &SimParams,
    n_steps: usize,
    window: Option<IndexWindow>,
) -> Result<ExpectedField> {
    let window = window.unwrap_or_else(|| IndexWindow::for_steps(kernel, params.source, n_steps));
    let mut field = ExpectedField::start(kernel, params.source, params.injection_mean, window)?;
    for _ in 0..n_steps {
        field.advance();
    }
    field.check_edges()?;
    Ok(field)
}

/// Law of one walker started at `source`, evolved with the kernel itself.
#[derive(Clone, Debug)]
pub struct WalkDistribution {
    prob: DenseField,
    scratch: Vec<f64>,
    active: Active,
    step: usize,
    escaped: f64,
    p: [f64; 4],
}

impl WalkDistribution {
    pub fn start(kernel: &StepKernel, source: SiteIndex, window: IndexWindow) -> Result<Self> {
        let k = window.offset_of(source).ok_or_else(|| {
            Error::WindowTooSmall(format!("window {window:?} does not contain the source {source}"))
        })?;
        let mut prob = DenseField::zeros(window);
        prob.values[k] = 1.0;
        let di = (source.i - window.origin.i) as usize;
        let dj = (source.j - window.origin.j) as usize;
        Ok(Self {
            scratch: vec![0.0; window.len()],
            prob,
            active: Active::point(di, dj),
            step: 0,
            escaped: 0.0,
            p: kernel.probabilities(),
        })
    }

    pub fn advance(&mut self) {
        let window = self.prob.window;
        let (active, lost) = push_step(&self.prob.values, &mut self.scratch, &window, &self.p, self.active);
        std::mem::swap(&mut self.prob.values, &mut self.scratch);
        self.active = active;
        self.escaped += lost;
        self.step += 1;
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// `P_e(X_k = w)` for the current `k`.
    pub fn probability(&self, w: SiteIndex) -> f64 {
        self.prob.get(w)
    }

    pub fn field(&self) -> &DenseField {
        &self.prob
    }

    /// Probability mass that has left the window so far.
    pub fn escaped(&self) -> f64 {
        self.escaped
    }

    fn add_into(&self, acc: &mut DenseField) {
        debug_assert_eq!(acc.window, self.prob.window);
        let width = self.prob.window.width;
        let a = self.active;
        for dj in a.j0..=a.j1 {
            let row = dj * width;
            for k in row + a.i0..=row + a.i1 {
                acc.values[k] += self.prob.values[k];
            }
        }
    }
}

/// `sum_{k=0}^{n} P_e(X_k = w)` over `window`, from the single-walker law.
pub fn cumulative_occupation(kernel: &StepKernel, source: SiteIndex, n: usize, window: IndexWindow) -> Result<DenseField> {
    let mut walk = WalkDistribution::start(kernel, source, window)?;
    let mut acc = DenseField::zeros(window);
    walk.add_into(&mut acc);
    for _ in 0..n {
        walk.advance();
        walk.add_into(&mut acc);
    }
    Ok(acc)
}

/// Expected total occupation `g(w) = sum_k P_e(X_k = w)` on a query window.
#[derive(Clone, Debug)]
pub struct GreenFunction {
    g: DenseField,
    source: SiteIndex,
    horizon: usize,
    tail_bound: f64,
    escaped_mass: f64,
}

impl GreenFunction {
    pub fn value(&self, w: SiteIndex) -> f64 {
        self.g.get(w)
    }

    pub fn field(&self) -> &DenseField {
        &self.g
    }

    pub fn source(&self) -> SiteIndex {
        self.source
    }

    pub fn truncation_horizon(&self) -> usize {
        self.horizon
    }

    /// Geometric extrapolation of the in-window mass beyond the horizon.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Walker mass that left the computational domain before the horizon.
    pub fn escaped_mass(&self) -> f64 {
        self.escaped_mass
    }

    /// `g(e) - max_{w != e} g(w)` over the query window, with the runner-up.
    pub fn source_margin(&self) -> (f64, SiteIndex) {
        let (w, runner_up) = self.g.max_excluding(self.source);
        (self.value(self.source) - runner_up, w)
    }
}

/// Tuning for [`green_function_with`].
#[derive(Clone, Copy, Debug)]
pub struct GreenOptions {
    /// Extra sites around the query window in which walkers are still tracked;
    /// walkers leaving the padded domain are dropped.
    pub padding: usize,
    pub max_horizon: usize,
}

impl Default for GreenOptions {
    fn default() -> Self {
        Self {
            padding: 160,
            max_horizon: MAX_HORIZON,
        }
    }
}

/// Green's function with default options.
pub fn green_function(kernel: &StepKernel, source: SiteIndex, tol: f64, window: IndexWindow) -> Result<GreenFunction> {
    green_function_with(kernel, source, tol, window, GreenOptions::default())
}

/// Accumulates `P_e(X_k = .)` until the mass inside `window` has stayed below
/// `tol` for [`TRUNCATION_RUN`] consecutive steps and its geometric tail
/// estimate is below `tol` as well.
pub fn green_function_with(
    kernel: &StepKernel,
    source: SiteIndex,
    tol: f64,
    window: IndexWindow,
    options: GreenOptions,
) -> Result<GreenFunction> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance {tol} must be > 0")));
    }
    if !window.contains(source) {
        return Err(Error::WindowTooSmall(format!(
            "query window {window:?} does not contain the source {source}"
        )));
    }
    let domain = window.padded(options.padding);
    let mut grid = Padded::point(domain, source, 1.0)?;
    let p = kernel.probabilities();
    let rows: Vec<usize> = (0..window.height)
        .map(|dj| grid.index((window.origin.i - domain.origin.i) as usize, (window.origin.j - domain.origin.j) as usize + dj))
        .collect();
    let mut acc = DenseField::zeros(window);
    let accumulate = |grid: &Padded, acc: &mut DenseField| -> f64 {
        let w = window.width;
        let mut inc = 0.0;
        for (dj, &start) in rows.iter().enumerate() {
            for (a, v) in acc.values[dj * w..(dj + 1) * w].iter_mut().zip(&grid.cur[start..start + w]) {
                *a += v;
                inc += v;
            }
        }
        inc
    };
    accumulate(&grid, &mut acc);

    let mut history: Vec<f64> = vec![1.0];
    let mut quiet = 0usize;
    let mut step = 0usize;
    loop {
        if step >= options.max_horizon {
            return Err(Error::HorizonExceeded(options.max_horizon));
        }
        // P_{k+1}(w) = sum_l p_l P_k(w - e_l)
        grid.pull(p);
        step += 1;
        let inc = accumulate(&grid, &mut acc);
        history.push(inc);
        quiet = if inc < tol { quiet + 1 } else { 0 };
        if quiet >= TRUNCATION_RUN {
            let tail = geometric_tail(&history);
            if tail < tol {
                return Ok(GreenFunction {
                    g: acc,
                    source,
                    horizon: step,
                    tail_bound: tail,
                    escaped_mass: (1.0 - grid.total()).max(0.0),
                });
            }
        }
    }
}

/// `m_T * rho / (1 - rho)` with `rho` the per-step decay over the last
/// [`TRUNCATION_RUN`] steps, compared two steps apart to absorb lattice parity.
fn geometric_tail(history: &[f64]) -> f64 {
    let n = history.len();
    let last = history[n - 1].max(history[n - 2]);
    if last == 0.0 {
        return 0.0;
    }
    let span = TRUNCATION_RUN.min(n - 2) & !1;
    if span < 2 {
        return f64::INFINITY;
    }
    let then = history[n - 1 - span].max(history[n - 2 - span]);
    if then <= 0.0 {
        return f64::INFINITY;
    }
    let rho = (last / then).powf(1.0 / span as f64);
    if rho >= 1.0 {
        return f64::INFINITY;
    }
    // both parities contribute
    2.0 * last * rho / (1.0 - rho)
}

/// Least-squares decay rate `c` of `log P_e(X_n = w)` over `n <= n_max`,
/// using the steps where the probability exceeds `1e-14`.
pub fn decay_check(kernel: &StepKernel, source: SiteIndex, w: SiteIndex, n_max: usize) -> Result<f64> {
    let (ns, logs) = decay_series(kernel, source, w, n_max)?;
    if ns.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} steps with P > 1e-14 up to n = {n_max}",
            ns.len()
        )));
    }
    let slope = least_squares_slope(&ns, &logs);
    if slope >= 0.0 {
        return Err(Error::InsufficientData(format!("non-decaying fit, slope {slope}")));
    }
    Ok(-slope)
}

/// `(n, ln P_e(X_n = w))` for the steps `1..=n_max` with `P > 1e-14`.
pub fn decay_series(kernel: &StepKernel, source: SiteIndex, w: SiteIndex, n_max: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let reach = n_max.max(w.sup_distance(source) as usize);
    let window = IndexWindow::centered(source, reach + 1);
    let mut walk = WalkDistribution::start(kernel, source, window)?;
    let mut ns = Vec::new();
    let mut logs = Vec::new();
    for n in 1..=n_max {
        walk.advance();
        let p = walk.probability(w);
        if p > 1e-14 {
            ns.push(n as f64);
            logs.push(p.ln());
        }
    }
    Ok((ns, logs))
}

pub(crate) fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Mean absolute error of `lambda_n(w) / (h alpha)` against `g(w)` for each
/// `n` in `n_list`, estimated over `runs` independent particle systems.
///
/// Without an offset the average runs over steps `0..n`; with `Some(tau)` it
/// runs over `tau + 1 ..= tau + n`.
pub fn consistency_experiment(
    kernel: &StepKernel,
    params: &SimParams,
    w: SiteIndex,
    n_list: &[usize],
    runs: usize,
    offset: Option<usize>,
) -> Result<Vec<(usize, f64)>> {
    if runs == 0 || n_list.is_empty() {
        return Err(Error::InvalidParams("need at least one run and one n".into()));
    }
    let green = green_function(kernel, params.source, 1e-12, IndexWindow::centered(params.source, 20))?;
    let target = green.value(w);
    let n_max = *n_list.iter().max().expect("non-empty");
    let (first, last) = match offset {
        None => (0usize, n_max - 1),
        Some(tau) => (tau + 1, tau + n_max),
    };

    let per_run: Vec<Result<Vec<f64>>> = crate::par_map(0..runs as u64, |run| {
        let mut sim = ParticleSim::new(*kernel, *params, RngStream::new(params.seed, run))?;
        let mut readings = Vec::with_capacity(last - first + 1);
        for m in 0..=last {
            if m > 0 {
                sim.advance();
            }
            if m >= first {
                readings.push(sim.reading(w));
            }
        }
        let mut prefix = vec![0.0; readings.len() + 1];
        for (k, r) in readings.iter().enumerate() {
            prefix[k + 1] = prefix[k] + r;
        }
        Ok(n_list
            .iter()
            .map(|&n| {
                let lambda = prefix[n] / n as f64;
                (lambda / params.injection_mean - target).abs()
            })
            .collect())
    });

    let mut sums = vec![0.0; n_list.len()];
    for errors in per_run {
        for (s, e) in sums.iter_mut().zip(errors?) {
            *s += e;
        }
    }
    Ok(n_list
        .iter()
        .zip(sums)
        .map(|(&n, s)| (n, s / runs as f64))
        .collect())
}

/// Deterministic stand-in for the particle system whose readings are the exact
/// expected counts of the box-absorbed system.
#[derive(Clone, Debug)]
pub struct MeanFieldSim {
    field: ExpectedField,
}

impl MeanFieldSim {
    pub fn new(kernel: &StepKernel, params: &SimParams) -> Result<Self> {
        params.validate()?;
        let m = params.interior_extent();
        let window = IndexWindow::centered(SiteIndex::ORIGIN, m as usize);
        Ok(Self {
            field: ExpectedField::start(kernel, params.source, params.injection_mean, window)?,
        })
    }

    pub fn expected(&self) -> &ExpectedField {
        &self.field
    }

    pub fn advance_to(&mut self, n: u64) {
        while (self.field.step_index() as u64) < n {
            self.field.advance();
        }
    }
}

impl Plume for MeanFieldSim {
    fn step_index(&self) -> u64 {
        self.field.step_index() as u64
    }

    fn advance(&mut self) {
        self.field.advance();
    }

    fn reading(&self, site: SiteIndex) -> f64 {
        self.field.value(site)
    }

    fn occupied(&self) -> Vec<(SiteIndex, f64)> {
        self.field.field().nonzero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::presets;

    fn kernel(p: [f64; 4]) -> StepKernel {
        StepKernel::from_array(p).unwrap()
    }

    #[test]
    fn window_geometry() {
        let w = IndexWindow::centered(SiteIndex::new(2, -1), 3);
        assert_eq!(w.width, 7);
        assert!(w.contains(SiteIndex::new(5, 2)));
        assert!(!w.contains(SiteIndex::new(6, 2)));
        assert!(w.is_edge(SiteIndex::new(-1, 0)));
        assert!(!w.is_edge(SiteIndex::new(0, 0)));
        for k in 0..w.len() {
            assert_eq!(w.offset_of(w.site_at(k)), Some(k));
        }
        let def = IndexWindow::for_steps(&kernel(presets::P4), SiteIndex::ORIGIN, 0);
        assert_eq!(def.width, 129);
    }

    #[test]
    fn step_zero_is_injection_only() {
        let params = SimParams::reference();
        let f = mu_recursion(&kernel(presets::FIELD), &params, 0, None).unwrap();
        assert_eq!(f.value(params.source), 25.0);
        assert_eq!(f.total_mass(), 25.0);
    }

    #[test]
    fn expected_mass_is_conserved() {
        let params = SimParams::reference();
        for (_, p) in presets::ALL {
            let f = mu_recursion(&kernel(p), &params, 40, None).unwrap();
            let expected = 41.0 * 25.0;
            assert!((f.total_mass() - expected).abs() < 1e-9 * expected);
        }
    }

    #[test]
    fn small_window_is_rejected() {
        let params = SimParams::reference();
        let w = IndexWindow::centered(params.source, 5);
        assert!(matches!(
            mu_recursion(&kernel(presets::P1), &params, 20, Some(w)),
            Err(Error::WindowTooSmall(_))
        ));
        let off = IndexWindow::centered(SiteIndex::new(100, 100), 5);
        assert!(matches!(
            mu_recursion(&kernel(presets::P1), &params, 2, Some(off)),
            Err(Error::WindowTooSmall(_))
        ));
    }

    #[test]
    fn expected_field_peaks_at_source() {
        let params = SimParams::reference();
        let f = mu_recursion(&kernel(presets::FIELD), &params, 300, None).unwrap();
        assert_eq!(f.field().argmax().0, params.source);
    }

    #[test]
    fn pull_and_push_agree_on_small_horizon() {
        let k = kernel(presets::P4);
        let params = SimParams::new(1.0, SiteIndex::new(1, -2), 3.0, 100.0, 0).unwrap();
        let n = 25;
        let mu = mu_recursion(&k, &params, n, None).unwrap();
        let cum = cumulative_occupation(&k, params.source, n, *mu.window()).unwrap();
        let mf = mu.field();
        let scale = mf.max_abs();
        for (a, b) in mf.values().iter().zip(cum.values()) {
            assert!((a - 3.0 * b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn green_is_zero_far_away_and_at_least_one_at_source() {
        let k = kernel(presets::P4);
        let window = IndexWindow::centered(SiteIndex::ORIGIN, 20);
        let g = green_function(&k, SiteIndex::ORIGIN, 1e-12, window).unwrap();
        assert!(g.value(SiteIndex::ORIGIN) >= 1.0);
        assert_eq!(g.value(SiteIndex::new(500, 500)), 0.0);
        assert!(g.tail_bound() < 1e-12);
        assert!(g.field().values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn green_rejects_bad_inputs() {
        let k = kernel(presets::P4);
        let window = IndexWindow::centered(SiteIndex::new(50, 50), 3);
        assert!(matches!(
            green_function(&k, SiteIndex::ORIGIN, 1e-9, window),
            Err(Error::WindowTooSmall(_))
        ));
        let window = IndexWindow::centered(SiteIndex::ORIGIN, 3);
        assert!(green_function(&k, SiteIndex::ORIGIN, 0.0, window).is_err());
        let opts = GreenOptions {
            padding: 10,
            max_horizon: 5,
        };
        assert!(matches!(
            green_function_with(&kernel(presets::P3), SiteIndex::ORIGIN, 1e-12, window, opts),
            Err(Error::HorizonExceeded(5))
        ));
    }

    #[test]
    fn green_translation_invariance() {
        let k = kernel(presets::P2);
        let e = SiteIndex::new(7, -3);
        let g0 = green_function(&k, SiteIndex::ORIGIN, 1e-12, IndexWindow::centered(SiteIndex::ORIGIN, 8)).unwrap();
        let ge = green_function(&k, e, 1e-12, IndexWindow::centered(e, 8)).unwrap();
        for dj in -8..=8 {
            for di in -8..=8 {
                assert_eq!(
                    ge.value(e.offset(di, dj)).to_bits(),
                    g0.value(SiteIndex::new(di, dj)).to_bits()
                );
            }
        }
    }

    #[test]
    fn decay_rates() {
        let e = SiteIndex::ORIGIN;
        let c1 = decay_check(&kernel(presets::P1), e, e, 60).unwrap();
        assert!(c1 > 0.0);
        let c2 = decay_check(&kernel(presets::P2), e, e, 120).unwrap();
        let c4 = decay_check(&kernel(presets::P4), e, e, 120).unwrap();
        assert!(c2 > c4, "c2 = {c2}, c4 = {c4}");
    }

    #[test]
    fn decay_rate_approaches_large_deviation_rate() {
        // P_e(X_n = e) ~ C n^-1 (2 sqrt(p1 p3) + 2 sqrt(p2 p4))^n on even n
        let p = presets::P4;
        let rate = -(2.0 * (p[0] * p[2]).sqrt() + 2.0 * (p[1] * p[3]).sqrt()).ln();
        let c = decay_check(&kernel(p), SiteIndex::ORIGIN, SiteIndex::ORIGIN, 100).unwrap();
        assert!((c - rate).abs() < 0.1 * rate, "fit {c} vs rate {rate}");
    }

    #[test]
    fn decay_without_data() {
        let e = SiteIndex::ORIGIN;
        assert!(matches!(
            decay_check(&kernel(presets::P4), e, SiteIndex::new(40, 0), 20),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn consistency_unreachable_site_has_zero_error() {
        let params = SimParams::reference().with_seed(3);
        let w = SiteIndex::new(-100, -100);
        let out = consistency_experiment(&kernel(presets::FIELD), &params, w, &[5, 10], 30, None).unwrap();
        assert!(out.iter().all(|(_, e)| *e == 0.0));
    }

    #[test]
    fn mean_field_stub_matches_recursion_before_boundary() {
        let params = SimParams::reference();
        let k = kernel(presets::FIELD);
        let mut stub = MeanFieldSim::new(&k, &params).unwrap();
        stub.advance_to(30);
        let f = mu_recursion(&k, &params, 30, None).unwrap();
        for (w, v) in stub.occupied() {
            assert!((v - f.value(w)).abs() < 1e-9 * v.max(1.0));
        }
        assert!((stub.expected().total_mass() - 31.0 * 25.0).abs() < 1e-9);
    }

    #[test]
    fn green_at_source_matches_walker_census() {
        use rand::Rng;
        let k = kernel(presets::P4);
        let g = green_function(&k, SiteIndex::ORIGIN, 1e-12, IndexWindow::centered(SiteIndex::ORIGIN, 5)).unwrap();
        let p = k.probabilities();
        let cum = [p[0], p[0] + p[1], p[0] + p[1] + p[2]];
        let mut stream = RngStream::new(17, 0);
        let walkers = 1_000_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..walkers {
            let (mut i, mut j) = (0i64, 0i64);
            let mut visits = 1.0;
            // P_e(X_k = e) < 1e-20 beyond 100 steps for this kernel
            for _ in 0..100 {
                let u: f64 = stream.random();
                match cum.iter().position(|&c| u < c).unwrap_or(3) {
                    0 => i += 1,
                    1 => j += 1,
                    2 => i -= 1,
                    _ => j -= 1,
                }
                if i == 0 && j == 0 {
                    visits += 1.0;
                }
            }
            sum += visits;
            sum_sq += visits * visits;
        }
        let n = walkers as f64;
        let mean = sum / n;
        let se = ((sum_sq / n - mean * mean) / n).sqrt();
        let dp = g.value(SiteIndex::ORIGIN);
        assert!((dp - mean).abs() < 3.0 * se, "DP {dp} vs census {mean} +/- {se}");
    }

    #[test]
    fn shifted_window_consistency() {
        let params = SimParams::reference();
        let out =
            consistency_experiment(&kernel(presets::FIELD), &params, SiteIndex::ORIGIN, &[10, 50, 300], 60, Some(30))
                .unwrap();
        assert!(out[1].1 < out[0].1 && out[2].1 < out[1].1, "{out:?}");
    }

    #[test]
    fn consistency_needs_runs() {
        let params = SimParams::reference();
        assert!(consistency_experiment(&kernel(presets::FIELD), &params, SiteIndex::ORIGIN, &[10], 0, None).is_err());
    }
}
