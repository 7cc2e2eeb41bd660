use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{RngStream, SiteIndex};
use crate::sim::Plume;

pub const SEED_STEP: u64 = 30;
pub const SEED_MIN_COUNT: f64 = 1.0;
pub const SEED_MAX_COUNT: f64 = 3.0;
pub const SEED_EXTRA_STEPS: u64 = 100;

/// Advances to step 30 and picks uniformly among sites reading between 1 and
/// 3, stepping forward one step at a time (at most 100 more) while there are
/// none.
pub fn find_seed_site<P: Plume + ?Sized>(sim: &mut P, stream: &mut RngStream) -> Result<SiteIndex> {
    while sim.step_index() < SEED_STEP {
        sim.advance();
    }
    let deadline = sim.step_index() + SEED_EXTRA_STEPS;
    loop {
        let candidates: Vec<SiteIndex> = sim
            .occupied()
            .into_iter()
            .filter(|(_, v)| (SEED_MIN_COUNT..=SEED_MAX_COUNT).contains(v))
            .map(|(w, _)| w)
            .collect();
        if !candidates.is_empty() {
            return Ok(candidates[stream.random_range(0..candidates.len())]);
        }
        if sim.step_index() >= deadline {
            return Err(Error::NoSeedFound {
                step: sim.step_index(),
            });
        }
        sim.advance();
    }
}
