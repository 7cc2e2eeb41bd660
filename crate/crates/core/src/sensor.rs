//! The observer's side: sensor reads charged to a ledger, and time-window
//! averages of site counts.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::SiteIndex;
use crate::sim::{OccupancyField, Plume};

/// Counts every site read. The nominal per-step budget is `r^2`; exceeding it
/// is recorded, not refused.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MeasurementLedger {
    total: u64,
    per_step: BTreeMap<u64, u64>,
    budget: u64,
}

impl MeasurementLedger {
    pub fn new(budget: u64) -> Self {
        Self {
            budget,
            ..Default::default()
        }
    }

    /// Ledger with budget `r^2`.
    pub fn for_window(r: u32) -> Self {
        Self::new(u64::from(r) * u64::from(r))
    }

    pub fn charge(&mut self, step: u64, sites: u64) {
        self.total += sites;
        *self.per_step.entry(step).or_insert(0) += sites;
    }

    pub fn total_measurements(&self) -> u64 {
        self.total
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn per_step_counts(&self) -> &BTreeMap<u64, u64> {
        &self.per_step
    }

    /// Number of steps at which more than `budget` sites were read.
    pub fn budget_violations(&self) -> usize {
        self.per_step.values().filter(|&&c| c > self.budget).count()
    }

    pub fn max_per_step(&self) -> u64 {
        self.per_step.values().copied().max().unwrap_or(0)
    }
}

/// Reads the count at `w` and charges one measurement at the field's step.
pub fn measure(field: &OccupancyField, w: SiteIndex, ledger: &mut MeasurementLedger) -> u64 {
    ledger.charge(field.step_index(), 1);
    field.count_at(w)
}

/// Advances `sim` by `window` steps and returns, for each site, the mean
/// reading over steps `n1 + 1 ..= n1 + window` where `n1` is the starting step.
/// Every site is charged once per advanced step.
pub fn window_average<P: Plume + ?Sized>(
    sim: &mut P,
    sites: &[SiteIndex],
    window: u32,
    ledger: &mut MeasurementLedger,
) -> Result<BTreeMap<SiteIndex, f64>> {
    if sites.is_empty() {
        return Err(Error::EmptySiteSet);
    }
    if window == 0 {
        return Err(Error::InvalidParams("time window must be positive".into()));
    }
    let mut distinct = sites.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut sums = vec![0.0; distinct.len()];
    for _ in 0..window {
        sim.advance();
        let step = sim.step_index();
        for (acc, &w) in sums.iter_mut().zip(&distinct) {
            *acc += sim.reading(w);
        }
        ledger.charge(step, distinct.len() as u64);
    }
    let norm = f64::from(window);
    Ok(distinct
        .into_iter()
        .zip(sums)
        .map(|(w, s)| (w, s / norm))
        .collect())
}

/// Site with the largest average; ties go to the lexicographically smallest.
pub fn argmax(averages: &BTreeMap<SiteIndex, f64>) -> Option<(SiteIndex, f64)> {
    let mut best: Option<(SiteIndex, f64)> = None;
    for (&w, &v) in averages {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((w, v)),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{presets, RngStream, SimParams, StepKernel};
    use crate::sim::ParticleSim;

    fn sim(seed: u64) -> ParticleSim {
        let kernel = StepKernel::from_array(presets::P4).unwrap();
        ParticleSim::new(kernel, SimParams::reference(), RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn measure_is_a_charged_read() {
        let mut s = sim(1);
        s.advance_to(5);
        let mut ledger = MeasurementLedger::new(4);
        let w = SiteIndex::new(1, 0);
        let a = measure(s.field(), w, &mut ledger);
        let b = measure(s.field(), w, &mut ledger);
        assert_eq!(a, b);
        assert_eq!(a, s.field().count_at(w));
        assert_eq!(ledger.total_measurements(), 2);
        assert_eq!(ledger.per_step_counts()[&5], 2);
    }

    #[test]
    fn measure_empty_field() {
        let mut ledger = MeasurementLedger::new(1);
        assert_eq!(measure(&OccupancyField::empty(), SiteIndex::ORIGIN, &mut ledger), 0);
        assert_eq!(ledger.total_measurements(), 1);
        assert_eq!(ledger.budget_violations(), 0);
    }

    #[test]
    fn single_step_window_at_source_is_the_injection() {
        let mut s = sim(2);
        let mut ledger = MeasurementLedger::new(1);
        let avg = window_average(&mut s, &[SiteIndex::ORIGIN], 1, &mut ledger).unwrap();
        assert_eq!(s.step_index(), 1);
        let moved_back = s.field().last_moves_from(SiteIndex::ORIGIN.offset(1, 0)).map_or(0, |m| m[2])
            + s.field().last_moves_from(SiteIndex::ORIGIN.offset(0, 1)).map_or(0, |m| m[3])
            + s.field().last_moves_from(SiteIndex::ORIGIN.offset(-1, 0)).map_or(0, |m| m[0])
            + s.field().last_moves_from(SiteIndex::ORIGIN.offset(0, -1)).map_or(0, |m| m[1]);
        // step 0 holds only the source, so nothing can move back onto it
        assert_eq!(moved_back, 0);
        assert_eq!(avg[&SiteIndex::ORIGIN], s.field().last_injection() as f64);
    }

    #[test]
    fn window_charges_sites_per_step() {
        let mut s = sim(3);
        let mut ledger = MeasurementLedger::new(2);
        let sites = [SiteIndex::new(0, 0), SiteIndex::new(1, 0), SiteIndex::new(2, 0)];
        window_average(&mut s, &sites, 10, &mut ledger).unwrap();
        assert_eq!(ledger.total_measurements(), 30);
        assert_eq!(ledger.per_step_counts().len(), 10);
        assert_eq!(ledger.budget_violations(), 10);
        assert_eq!(s.step_index(), 10);
        let sum: u64 = ledger.per_step_counts().values().sum();
        assert_eq!(sum, ledger.total_measurements());
    }

    #[test]
    fn empty_site_set_rejected() {
        let mut s = sim(4);
        let mut ledger = MeasurementLedger::new(1);
        assert!(matches!(
            window_average(&mut s, &[], 3, &mut ledger),
            Err(Error::EmptySiteSet)
        ));
    }

    #[test]
    fn argmax_breaks_ties_lexicographically() {
        let m: BTreeMap<SiteIndex, f64> = [
            (SiteIndex::new(2, 0), 1.0),
            (SiteIndex::new(-1, 5), 1.0),
            (SiteIndex::new(0, 0), 0.5),
        ]
        .into_iter()
        .collect();
        assert_eq!(argmax(&m), Some((SiteIndex::new(-1, 5), 1.0)));
        let zeros: BTreeMap<SiteIndex, f64> =
            (0..5).map(|i| (SiteIndex::new(i, 3), 0.0)).collect();
        assert_eq!(argmax(&zeros), Some((SiteIndex::new(0, 3), 0.0)));
    }

    #[test]
    fn long_window_at_source_approaches_green() {
        use crate::oracle::{green_function, IndexWindow};
        let mut s = sim(0);
        let mut ledger = MeasurementLedger::new(1);
        let avg = window_average(&mut s, &[SiteIndex::ORIGIN], 300, &mut ledger).unwrap();
        let kernel = StepKernel::from_array(presets::P4).unwrap();
        let g = green_function(&kernel, SiteIndex::ORIGIN, 1e-12, IndexWindow::centered(SiteIndex::ORIGIN, 3)).unwrap();
        let ratio = avg[&SiteIndex::ORIGIN] / 25.0;
        let target = g.value(SiteIndex::ORIGIN);
        assert!((ratio - target).abs() < 0.1 * target, "{ratio} vs {target}");
    }

    #[test]
    fn window_average_spread_shrinks_with_length() {
        let spread = |n: u32| {
            let vals: Vec<f64> = (0..100)
                .map(|run| {
                    let mut s = sim(1000 + run);
                    let mut ledger = MeasurementLedger::new(1);
                    window_average(&mut s, &[SiteIndex::ORIGIN], n, &mut ledger).unwrap()[&SiteIndex::ORIGIN]
                })
                .collect();
            let m = vals.iter().sum::<f64>() / 100.0;
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 99.0
        };
        let (short, long) = (spread(10), spread(300));
        assert!(long < short, "{long} !< {short}");
    }
}
