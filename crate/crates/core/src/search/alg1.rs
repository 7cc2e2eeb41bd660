use crate::error::{Error, Result};
use crate::lattice::SiteIndex;
use crate::sensor::{window_average, MeasurementLedger};
use crate::sim::Plume;

use super::{pick_best, Alg1Config, SearchTrace};

/// Sites within sup-distance `floor(r/2)` of `center`, i.e. within `rh/2`
/// physically; `(2 floor(r/2) + 1)^2` sites.
pub fn alg1_window(center: SiteIndex, r: u32) -> Vec<SiteIndex> {
    let half = i64::from(r / 2);
    let mut sites = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
    for di in -half..=half {
        for dj in -half..=half {
            sites.push(center.offset(di, dj));
        }
    }
    sites
}

/// Scanning-window search started from `seed_site` at the simulator's current
/// step. The first iterate is the seed itself with its current reading.
pub fn alg1_run<P: Plume + ?Sized>(
    sim: &mut P,
    cfg: &Alg1Config,
    seed_site: SiteIndex,
    ledger: &mut MeasurementLedger,
) -> Result<SearchTrace> {
    cfg.validate()?;
    let mut trace = SearchTrace::default();
    trace.push(sim.step_index(), seed_site, sim.reading(seed_site), None);
    let mut current = seed_site;
    for _ in 0..cfg.max_iters {
        let averages = window_average(sim, &alg1_window(current, cfg.r), cfg.n0, ledger)?;
        let (best, lambda) = pick_best(&averages);
        trace.push(sim.step_index(), best, lambda, None);
        trace.measurements = ledger.total_measurements();
        if best == current {
            trace.converged_site = Some(best);
            return Ok(trace);
        }
        current = best;
    }
    Err(Error::MaxItersExceeded(Box::new(trace)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{presets, RngStream, SimParams, StepKernel};
    use crate::oracle::MeanFieldSim;
    use crate::sim::ParticleSim;

    #[test]
    fn window_shape() {
        let w = alg1_window(SiteIndex::new(3, -2), 18);
        assert_eq!(w.len(), 19 * 19);
        assert!(w.iter().all(|s| s.sup_distance(SiteIndex::new(3, -2)) <= 9));
        assert_eq!(alg1_window(SiteIndex::ORIGIN, 3).len(), 9);
    }

    #[test]
    fn noise_free_converges_from_source_quickly() {
        let kernel = StepKernel::from_array(presets::FIELD).unwrap();
        let params = SimParams::reference();
        let mut stub = MeanFieldSim::new(&kernel, &params).unwrap();
        let mut ledger = MeasurementLedger::for_window(6);
        let cfg = Alg1Config::new(6, 10).unwrap();
        let trace = alg1_run(&mut stub, &cfg, SiteIndex::ORIGIN, &mut ledger).unwrap();
        assert_eq!(trace.converged_site, Some(SiteIndex::ORIGIN));
        assert!(trace.iterates.len() <= 3);
        assert_eq!(trace.measurements, 10 * 49);
    }

    #[test]
    fn trace_invariants_on_noisy_run() {
        let kernel = StepKernel::from_array(presets::P2).unwrap();
        let params = SimParams::reference();
        let mut sim = ParticleSim::new(kernel, params, RngStream::new(5, 0)).unwrap();
        sim.advance_to(30);
        let seed = SiteIndex::new(25, 8);
        let cfg = Alg1Config::new(12, 10).unwrap();
        let mut ledger = MeasurementLedger::for_window(12);
        let trace = match alg1_run(&mut sim, &cfg, seed, &mut ledger) {
            Ok(t) => t,
            Err(Error::MaxItersExceeded(t)) => *t,
            Err(e) => panic!("{e}"),
        };
        for pair in trace.iterates.windows(2) {
            assert_eq!(pair[1].n, pair[0].n + 10);
            assert!(pair[1].site.sup_distance(pair[0].site) <= 6);
            assert!(pair[1].l.is_none());
        }
        assert_eq!(trace.measurements, ledger.total_measurements());
        assert_eq!(trace.measurements, 169 * 10 * (trace.iterates.len() as u64 - 1));
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let kernel = StepKernel::from_array(presets::P4).unwrap();
        let run = || {
            let mut sim = ParticleSim::new(kernel, SimParams::reference(), RngStream::new(9, 0)).unwrap();
            sim.advance_to(30);
            let mut ledger = MeasurementLedger::for_window(8);
            alg1_run(&mut sim, &Alg1Config::new(8, 10).unwrap(), SiteIndex::new(12, 9), &mut ledger)
                .map(|t| t.to_ndjson())
                .unwrap_or_else(|e| e.to_string())
        };
        assert_eq!(run(), run());
    }
}
