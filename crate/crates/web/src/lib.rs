//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Grids are square windows of half-width `half` around the source, returned
//! row-major with the top row at the largest `j`, ready for an image buffer.

use plume_core::bench::{run_trial, Algorithm, SweepConfig};
use plume_core::lattice::{RngStream, SimParams, SiteIndex, StepKernel};
use plume_core::oracle::{green_function, mu_recursion, IndexWindow};
use plume_core::sim::ParticleSim;
use wasm_bindgen::prelude::*;

fn kernel(p1: f64, p2: f64, p3: f64, p4: f64) -> Result<StepKernel, String> {
    StepKernel::new(p1, p2, p3, p4).map_err(|e| e.to_string())
}

fn grid(half: u32, value: impl Fn(SiteIndex) -> f64) -> Vec<f64> {
    let h = i64::from(half);
    let mut out = Vec::with_capacity(((2 * h + 1) * (2 * h + 1)) as usize);
    for j in (-h..=h).rev() {
        for i in -h..=h {
            out.push(value(SiteIndex::new(i, j)));
        }
    }
    out
}

/// Particle system stepped from the page.
#[wasm_bindgen]
pub struct Plume {
    sim: ParticleSim,
}

impl Plume {
    pub fn create(p: [f64; 4], seed: u64) -> Result<Plume, String> {
        let params = SimParams::reference().with_seed(seed);
        let sim = ParticleSim::new(kernel(p[0], p[1], p[2], p[3])?, params, RngStream::new(seed, 0))
            .map_err(|e| e.to_string())?;
        Ok(Plume { sim })
    }
}

#[wasm_bindgen]
impl Plume {
    #[wasm_bindgen(constructor)]
    pub fn new(p1: f64, p2: f64, p3: f64, p4: f64, seed: u64) -> Result<Plume, JsError> {
        Plume::create([p1, p2, p3, p4], seed).map_err(|e| JsError::new(&e))
    }

    pub fn advance(&mut self, steps: u32) {
        let target = self.sim.field().step_index() + u64::from(steps);
        self.sim.advance_to(target);
    }

    pub fn step_index(&self) -> u64 {
        self.sim.field().step_index()
    }

    pub fn live_total(&self) -> u64 {
        self.sim.field().live_total()
    }

    pub fn counts(&self, half: u32) -> Vec<f64> {
        let field = self.sim.field();
        grid(half, |w| field.count_at(w) as f64)
    }
}

pub fn expected_grid(p: [f64; 4], n: usize, half: u32) -> Result<Vec<f64>, String> {
    let k = kernel(p[0], p[1], p[2], p[3])?;
    let mu = mu_recursion(&k, &SimParams::reference(), n, None).map_err(|e| e.to_string())?;
    Ok(grid(half, |w| mu.value(w)))
}

pub fn green_grid(p: [f64; 4], half: u32, tol: f64) -> Result<Vec<f64>, String> {
    let k = kernel(p[0], p[1], p[2], p[3])?;
    let window = IndexWindow::centered(SiteIndex::ORIGIN, half as usize);
    let g = green_function(&k, SiteIndex::ORIGIN, tol, window).map_err(|e| e.to_string())?;
    Ok(grid(half, |w| g.value(w)))
}

/// Search trace NDJSON followed by one summary line
/// `{"success","measurements","failure"}`.
pub fn detection(p: [f64; 4], alg2: bool, r: u32, seed: u64) -> Result<String, String> {
    let k = kernel(p[0], p[1], p[2], p[3])?;
    let alg = if alg2 {
        Algorithm::BrownianGuided
    } else {
        Algorithm::ScanningWindow
    };
    let mut cfg = SweepConfig::reference(alg, "custom", k, r);
    cfg.params = cfg.params.with_seed(seed);
    cfg.trials = 1;
    cfg.validate().map_err(|e| e.to_string())?;
    let run = run_trial(&cfg, 0);
    let mut out = run.trace.map(|t| t.to_ndjson()).unwrap_or_default();
    let failure = run
        .metrics
        .failure
        .map_or("null".to_string(), |f| format!("\"{}\"", f.replace('\\', "\\\\").replace('"', "\\\"")));
    out.push_str(&format!(
        "{{\"success\":{},\"measurements\":{},\"failure\":{}}}\n",
        run.metrics.success, run.metrics.measurements, failure
    ));
    Ok(out)
}

#[wasm_bindgen(js_name = expectedField)]
pub fn expected_field(p1: f64, p2: f64, p3: f64, p4: f64, n: usize, half: u32) -> Result<Vec<f64>, JsError> {
    expected_grid([p1, p2, p3, p4], n, half).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = greenField)]
pub fn green_field(p1: f64, p2: f64, p3: f64, p4: f64, half: u32, tol: f64) -> Result<Vec<f64>, JsError> {
    green_grid([p1, p2, p3, p4], half, tol).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn detect(p1: f64, p2: f64, p3: f64, p4: f64, alg2: bool, r: u32, seed: u64) -> Result<String, JsError> {
    detection([p1, p2, p3, p4], alg2, r, seed).map_err(|e| JsError::new(&e))
}
