use crate::error::{Error, Result};
use crate::lattice::{RngStream, SiteIndex, StepKernel};
use crate::sensor::{window_average, MeasurementLedger};
use crate::sim::Plume;

use super::{brownian_sites, pick_best, variance_update, Alg2Config, SearchTrace};

/// Result of the horizontal line scan that starts the Brownian-guided search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialScan {
    pub site: SiteIndex,
    pub lambda: f64,
    pub n: u64,
    pub l: f64,
}

/// The `2 r^2 + 1` sites on the row of `center` within `r^2` indices of it.
pub fn scan_line(center: SiteIndex, r: u32) -> Vec<SiteIndex> {
    let reach = i64::from(r) * i64::from(r);
    (-reach..=reach).map(|d| center.offset(d, 0)).collect()
}

/// Averages the scan line over `N0` steps and returns its argmax with the
/// starting scale `L = sqrt(h)`.
pub fn alg2_initial_scan<P: Plume + ?Sized>(
    sim: &mut P,
    cfg: &Alg2Config,
    h: f64,
    seed_site: SiteIndex,
    ledger: &mut MeasurementLedger,
) -> Result<InitialScan> {
    let averages = window_average(sim, &scan_line(seed_site, cfg.r), cfg.n0, ledger)?;
    let (site, lambda) = pick_best(&averages);
    Ok(InitialScan {
        site,
        lambda,
        n: sim.step_index(),
        l: h.sqrt(),
    })
}

/// Brownian-guided search. `kernel` and `h` describe the dynamics the
/// observer assumes; `stream` drives the path sampling.
#[allow(clippy::too_many_arguments)]
pub fn alg2_run<P: Plume + ?Sized>(
    sim: &mut P,
    cfg: &Alg2Config,
    kernel: &StepKernel,
    h: f64,
    seed_site: SiteIndex,
    ledger: &mut MeasurementLedger,
    stream: &mut RngStream,
) -> Result<SearchTrace> {
    cfg.validate()?;
    let scan = alg2_initial_scan(sim, cfg, h, seed_site, ledger)?;
    let mut trace = SearchTrace::default();
    trace.push(scan.n, scan.site, scan.lambda, Some(scan.l));
    trace.measurements = ledger.total_measurements();

    let (mut current, mut lambda_prev, mut l) = (scan.site, scan.lambda, scan.l);
    for _ in 0..cfg.max_iters {
        let sites = brownian_sites(current, kernel, l, cfg.r, h, stream);
        let averages = window_average(sim, &sites, cfg.n1, ledger)?;
        let (best, lambda) = pick_best(&averages);
        l = variance_update(l, lambda, lambda_prev, cfg.c, cfg.k);
        trace.push(sim.step_index(), best, lambda, Some(l));
        trace.measurements = ledger.total_measurements();
        if best == current {
            trace.converged_site = Some(best);
            return Ok(trace);
        }
        current = best;
        lambda_prev = lambda;
    }
    Err(Error::MaxItersExceeded(Box::new(trace)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{presets, SimParams};
    use crate::oracle::MeanFieldSim;
    use crate::sim::ParticleSim;

    const H: f64 = 10.0 / 256.0;

    fn cfg(r: u32) -> Alg2Config {
        Alg2Config::new(r, 10, 10, 0.5, 0.0).unwrap()
    }

    struct Zero(u64);
    impl Plume for Zero {
        fn step_index(&self) -> u64 {
            self.0
        }
        fn advance(&mut self) {
            self.0 += 1;
        }
        fn reading(&self, _: SiteIndex) -> f64 {
            0.0
        }
        fn occupied(&self) -> Vec<(SiteIndex, f64)> {
            Vec::new()
        }
    }

    #[test]
    fn scan_line_shape() {
        let line = scan_line(SiteIndex::new(2, 5), 3);
        assert_eq!(line.len(), 19);
        assert!(line.iter().all(|w| w.j == 5));
        assert_eq!(line[0], SiteIndex::new(-7, 5));
    }

    #[test]
    fn zero_scan_picks_leftmost() {
        let mut z = Zero(30);
        let mut ledger = MeasurementLedger::for_window(4);
        let scan = alg2_initial_scan(&mut z, &cfg(4), H, SiteIndex::new(1, 1), &mut ledger).unwrap();
        assert_eq!(scan.site, SiteIndex::new(-15, 1));
        assert_eq!(scan.lambda, 0.0);
        assert_eq!(scan.n, 40);
        assert!((scan.l - 0.19764235376052372).abs() < 1e-15);
        assert_eq!(ledger.total_measurements(), 330);
        assert_eq!(ledger.budget_violations(), 10);
    }

    #[test]
    fn scan_finds_ray_crossing_on_exact_field() {
        let kernel = StepKernel::from_array(presets::FIELD).unwrap();
        let params = SimParams::reference();
        let mut stub = MeanFieldSim::new(&kernel, &params).unwrap();
        stub.advance_to(60);
        // row 8 is crossed by the drift ray near i = 8 * 0.575 / 0.225
        let seed = SiteIndex::new(0, 8);
        let mut ledger = MeasurementLedger::for_window(12);
        let scan = alg2_initial_scan(&mut stub, &cfg(12), H, seed, &mut ledger).unwrap();
        let crossing = 8.0 * 0.575 / 0.225;
        assert!((scan.site.i as f64 - crossing).abs() <= 3.0, "{:?}", scan.site);
    }

    #[test]
    fn exact_field_trace_shrinks_scale_and_improves() {
        let kernel = StepKernel::from_array(presets::P4).unwrap();
        let params = SimParams::reference();
        let mut stub = MeanFieldSim::new(&kernel, &params).unwrap();
        stub.advance_to(30);
        let mut ledger = MeasurementLedger::for_window(12);
        let trace = alg2_run(
            &mut stub,
            &cfg(12),
            &kernel,
            H,
            SiteIndex::new(20, 6),
            &mut ledger,
            &mut RngStream::new(3, 2),
        )
        .unwrap();
        assert_eq!(trace.converged_site, Some(SiteIndex::ORIGIN));
        for pair in trace.iterates.windows(2) {
            assert!(pair[1].lambda >= pair[0].lambda);
            let ratio = pair[1].l.unwrap() / pair[0].l.unwrap();
            assert!(ratio == 0.5 || ratio == 1.0, "{ratio}");
            assert_eq!(pair[1].n, pair[0].n + 10);
        }
    }

    #[test]
    fn noisy_trace_invariants() {
        let kernel = StepKernel::from_array(presets::P2).unwrap();
        let params = SimParams::reference();
        let mut sim = ParticleSim::new(kernel, params, RngStream::new(8, 0)).unwrap();
        sim.advance_to(30);
        let mut ledger = MeasurementLedger::for_window(12);
        let c = Alg2Config {
            n0: 7,
            n1: 4,
            ..cfg(12)
        };
        let trace = match alg2_run(&mut sim, &c, &kernel, H, SiteIndex::new(30, 10), &mut ledger, &mut RngStream::new(8, 2)) {
            Ok(t) => t,
            Err(Error::MaxItersExceeded(t)) => *t,
            Err(e) => panic!("{e}"),
        };
        assert_eq!(trace.iterates[0].n, 37);
        for pair in trace.iterates.windows(2) {
            assert_eq!(pair[1].n, pair[0].n + 4);
            let (a, b) = (pair[0].l.unwrap(), pair[1].l.unwrap());
            assert!(b > 0.0);
            assert!(b == a * 0.5 || b == a / 0.5 || b == a);
        }
        assert_eq!(trace.measurements, ledger.total_measurements());
    }
}
