//! Particles injected at an unknown source drift and diffuse on the lattice
//! `hZ^2`; sensors placed on a few sites at a time try to find the source.
//!
//! * [`lattice`]: sites, step kernels, parameters and random streams.
//! * [`sim`]: the count-based particle system.
//! * [`sensor`]: charged measurements and time-window averages.
//! * [`oracle`]: exact expected fields and Green's functions.
//! * [`hydro`]: the transport limit and mesh-refinement studies.
//! * [`search`]: the two detection algorithms.
//! * [`bench`]: Monte-Carlo sweeps, CSV and SVG output.

mod error;

pub mod bench;
pub mod export;
pub mod hydro;
pub mod lattice;
pub mod oracle;
pub mod search;
pub mod sensor;
pub mod sim;

pub use error::{Error, Result};

/// Environment variable holding the worker-pool size for parallel sweeps.
pub const WORKERS_ENV: &str = "PLUME_WORKERS";

#[cfg(feature = "parallel")]
fn init_pool() {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
            // a pool configured elsewhere wins
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    });
}

/// Order-preserving map over a range of ids.
pub(crate) fn par_map<T, F>(ids: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        init_pool();
        ids.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ids.map(f).collect()
    }
}

pub(crate) fn par_map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        init_pool();
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
