//! Count-based particle system on the lattice.
//!
//! Particles are exchangeable and move independently, so a step splits each
//! site's count multinomially over the four neighbours instead of moving
//! particles one by one. The cost of a step is linear in occupied sites.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};

use crate::lattice::{GeometricInjection, InjectionLaw, RngStream, SiteIndex, SimParams, StepKernel};
use crate::Result;

/// Anything the observer can place sensors on: the stochastic particle
/// system or a deterministic stand-in for it.
pub trait Plume {
    fn step_index(&self) -> u64;
    /// Moves the system forward by one time step.
    fn advance(&mut self);
    /// What a sensor at `site` reads at the current step.
    fn reading(&self, site: SiteIndex) -> f64;
    /// All sites with a positive reading, in lexicographic order.
    fn occupied(&self) -> Vec<(SiteIndex, f64)>;
}

/// Sparse particle counts at the current time step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OccupancyField {
    counts: BTreeMap<SiteIndex, u64>,
    step_index: u64,
    absorbed_total: u64,
    injected_total: u64,
    /// Per-neighbour split recorded by the last step, keyed by origin site.
    last_moves: Vec<(SiteIndex, [u64; 4])>,
    last_injection: u64,
}

impl OccupancyField {
    /// A field with no particles and no injections, at step 0.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn absorbed_total(&self) -> u64 {
        self.absorbed_total
    }

    pub fn injected_total(&self) -> u64 {
        self.injected_total
    }

    pub fn live_total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn occupied_sites(&self) -> usize {
        self.counts.len()
    }

    /// Number of particles at `w`; zero when the site is empty.
    pub fn count_at(&self, w: SiteIndex) -> u64 {
        self.counts.get(&w).copied().unwrap_or(0)
    }

    /// Occupied sites with their counts in lexicographic order.
    pub fn snapshot(&self) -> Vec<(SiteIndex, u64)> {
        self.counts.iter().map(|(&w, &c)| (w, c)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SiteIndex, u64)> + '_ {
        self.counts.iter().map(|(&w, &c)| (w, c))
    }

    /// How the particles that sat at `origin` before the last step were split
    /// over the four neighbours (`+x, +y, -x, -y`).
    pub fn last_moves_from(&self, origin: SiteIndex) -> Option<[u64; 4]> {
        self.last_moves
            .binary_search_by(|(w, _)| w.cmp(&origin))
            .ok()
            .map(|k| self.last_moves[k].1)
    }

    pub fn last_injection(&self) -> u64 {
        self.last_injection
    }

    /// Adds `amount` particles at `site` without moving anything else.
    pub fn inject(&mut self, site: SiteIndex, amount: u64, params: &SimParams) {
        self.injected_total = self
            .injected_total
            .checked_add(amount)
            .expect("injected particle total overflowed u64");
        self.last_injection = amount;
        if amount == 0 {
            return;
        }
        if params.is_interior(site) {
            let slot = self.counts.entry(site).or_insert(0);
            *slot = slot.checked_add(amount).expect("site count overflowed u64");
        } else {
            self.absorbed_total += amount;
        }
    }

    fn deposit(next: &mut BTreeMap<SiteIndex, u64>, absorbed: &mut u64, site: SiteIndex, n: u64, params: &SimParams) {
        if n == 0 {
            return;
        }
        if params.is_interior(site) {
            let slot = next.entry(site).or_insert(0);
            *slot = slot.checked_add(n).expect("site count overflowed u64");
        } else {
            *absorbed = absorbed.checked_add(n).expect("absorbed total overflowed u64");
        }
    }
}

/// Splits `count` particles over the four moves with probabilities `p`.
pub fn multinomial_split(count: u64, p: &[f64; 4], stream: &mut RngStream) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut remaining = count;
    let mut mass_left = 1.0;
    for l in 0..3 {
        if remaining == 0 {
            break;
        }
        let prob = (p[l] / mass_left).clamp(0.0, 1.0);
        let n = if prob >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, prob)
                .expect("binomial probability in [0, 1]")
                .sample(stream)
        };
        out[l] = n;
        remaining -= n;
        mass_left -= p[l];
    }
    out[3] = remaining;
    out
}

/// Advances the field by one step: every particle moves, then a fresh batch is
/// injected at the source. Particles landing on or beyond the box boundary are
/// absorbed.
pub fn step<L: InjectionLaw>(
    field: &OccupancyField,
    kernel: &StepKernel,
    params: &SimParams,
    law: &L,
    stream: &mut RngStream,
) -> OccupancyField {
    let p = kernel.probabilities();
    let mut next = BTreeMap::new();
    let mut absorbed = field.absorbed_total;
    let mut moves = Vec::with_capacity(field.counts.len());
    for (&site, &count) in &field.counts {
        let split = multinomial_split(count, &p, stream);
        for (l, dest) in site.neighbors().into_iter().enumerate() {
            OccupancyField::deposit(&mut next, &mut absorbed, dest, split[l], params);
        }
        moves.push((site, split));
    }
    let mut out = OccupancyField {
        counts: next,
        step_index: field.step_index + 1,
        absorbed_total: absorbed,
        injected_total: field.injected_total,
        last_moves: moves,
        last_injection: 0,
    };
    let batch = law.sample(stream);
    out.inject(params.source, batch, params);
    out
}

/// A running particle system: field, dynamics and its own random stream.
#[derive(Clone, Debug)]
pub struct ParticleSim<L: InjectionLaw = GeometricInjection> {
    field: OccupancyField,
    kernel: StepKernel,
    params: SimParams,
    law: L,
    stream: RngStream,
}

impl ParticleSim<GeometricInjection> {
    /// Starts a system whose step-0 field holds the first injected batch at the
    /// source.
    pub fn new(kernel: StepKernel, params: SimParams, stream: RngStream) -> Result<Self> {
        params.validate()?;
        let law = GeometricInjection::new(params.injection_mean)?;
        Ok(Self::with_law(kernel, params, law, stream))
    }
}

impl<L: InjectionLaw> ParticleSim<L> {
    pub fn with_law(kernel: StepKernel, params: SimParams, law: L, mut stream: RngStream) -> Self {
        let mut field = OccupancyField::empty();
        let batch = law.sample(&mut stream);
        field.inject(params.source, batch, &params);
        Self {
            field,
            kernel,
            params,
            law,
            stream,
        }
    }

    pub fn field(&self) -> &OccupancyField {
        &self.field
    }

    pub fn kernel(&self) -> &StepKernel {
        &self.kernel
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn advance_to(&mut self, n: u64) {
        while self.field.step_index < n {
            self.advance();
        }
    }
}

impl<L: InjectionLaw> Plume for ParticleSim<L> {
    fn step_index(&self) -> u64 {
        self.field.step_index
    }

    fn advance(&mut self) {
        self.field = step(&self.field, &self.kernel, &self.params, &self.law, &mut self.stream);
    }

    fn reading(&self, site: SiteIndex) -> f64 {
        self.field.count_at(site) as f64
    }

    fn occupied(&self) -> Vec<(SiteIndex, f64)> {
        self.field.iter().map(|(w, c)| (w, c as f64)).collect()
    }
}
