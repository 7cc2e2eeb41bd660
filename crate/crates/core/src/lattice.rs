//! Lattice primitives shared by the simulator, the oracles and the search
//! procedures: sites on `hZ^2`, the nearest-neighbour step kernel, simulation
//! parameters and reproducible random streams.

use std::fmt;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};

/// Integer lattice coordinate. The physical position is `h * (i, j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SiteIndex {
    pub i: i64,
    pub j: i64,
}

/// Unit offsets in move order: +x, +y, -x, -y.
pub const NEIGHBOR_OFFSETS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

impl SiteIndex {
    pub const ORIGIN: SiteIndex = SiteIndex { i: 0, j: 0 };

    pub const fn new(i: i64, j: i64) -> Self {
        Self { i, j }
    }

    /// Nearest site to a physical point; exact inverse of [`SiteIndex::to_physical`].
    pub fn from_physical(x: f64, y: f64, h: f64) -> Self {
        Self::new((x / h).round() as i64, (y / h).round() as i64)
    }

    pub fn to_physical(self, h: f64) -> (f64, f64) {
        (h * self.i as f64, h * self.j as f64)
    }

    pub fn offset(self, di: i64, dj: i64) -> Self {
        Self::new(self.i + di, self.j + dj)
    }

    /// The four nearest neighbours, in kernel order.
    pub fn neighbors(self) -> [SiteIndex; 4] {
        NEIGHBOR_OFFSETS.map(|(di, dj)| self.offset(di, dj))
    }

    /// Chebyshev (sup-norm) index distance.
    pub fn sup_distance(self, other: SiteIndex) -> i64 {
        (self.i - other.i).abs().max((self.j - other.j).abs())
    }

    /// Graph distance on the nearest-neighbour lattice.
    pub fn l1_distance(self, other: SiteIndex) -> i64 {
        (self.i - other.i).abs() + (self.j - other.j).abs()
    }
}

impl fmt::Display for SiteIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// Nearest-neighbour transition probabilities `p = (p1, p2, p3, p4)` for moves
/// `+x, +y, -x, -y`, together with the drift `q = (p1 - p3, p2 - p4)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepKernel {
    p: [f64; 4],
    q: [f64; 2],
}

/// Tolerance on `|sum(p) - 1|`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

impl StepKernel {
    /// Validates and builds a kernel. Inputs are never re-normalized.
    pub fn new(p1: f64, p2: f64, p3: f64, p4: f64) -> Result<Self> {
        let p = [p1, p2, p3, p4];
        for (index, &value) in p.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveProbability {
                    index: index + 1,
                    value,
                });
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        let q = [p1 - p3, p2 - p4];
        if q[0].abs() + q[1].abs() == 0.0 {
            return Err(Error::DegenerateKernel);
        }
        Ok(Self { p, q })
    }

    pub fn from_array(p: [f64; 4]) -> Result<Self> {
        Self::new(p[0], p[1], p[2], p[3])
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.p
    }

    /// Drift per unit time in lattice units.
    pub fn drift(&self) -> [f64; 2] {
        self.q
    }

    /// Axis-swapped probabilities `(p3, p4, p1, p2)`: weight with which the
    /// neighbour `w + e_l` feeds site `w` in the expected-field recursion.
    pub fn reversed(&self) -> [f64; 4] {
        [self.p[2], self.p[3], self.p[0], self.p[1]]
    }

    /// Variance of one step in the direction normal to the drift.
    pub fn transverse_variance(&self) -> f64 {
        let [q1, q2] = self.q;
        let norm2 = q1 * q1 + q2 * q2;
        // unit normal to q
        let (n1, n2) = (-q2 / norm2.sqrt(), q1 / norm2.sqrt());
        // E[(Z.n)^2] - (E[Z.n])^2, and E[Z.n] = q.n = 0
        (self.p[0] + self.p[2]) * n1 * n1 + (self.p[1] + self.p[3]) * n2 * n2
    }
}

/// The four kernels used in the reference experiments.
pub mod presets {
    pub const P1: [f64; 4] = [0.9, 0.05, 0.01, 0.04];
    pub const P2: [f64; 4] = [0.70, 0.25, 0.01, 0.04];
    pub const P3: [f64; 4] = [0.26, 0.26, 0.24, 0.24];
    pub const P4: [f64; 4] = [0.55, 0.35, 0.05, 0.05];
    /// Kernel used for the field illustrations.
    pub const FIELD: [f64; 4] = [0.6, 0.3, 0.025, 0.075];

    pub const ALL: [(&str, [f64; 4]); 4] = [("p1", P1), ("p2", P2), ("p3", P3), ("p4", P4)];

    pub fn by_label(label: &str) -> Option<[f64; 4]> {
        ALL.iter().find(|(l, _)| *l == label).map(|(_, p)| *p)
    }
}

/// Physical configuration of the particle system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    /// Lattice spacing and time step.
    pub h: f64,
    pub source: SiteIndex,
    /// Mean number of particles injected per step (`h * alpha`).
    pub injection_mean: f64,
    /// Absorbing box is the open square `(-b, b)^2` in physical units.
    pub box_half_width: f64,
    pub seed: u64,
}

impl SimParams {
    pub fn new(
        h: f64,
        source: SiteIndex,
        injection_mean: f64,
        box_half_width: f64,
        seed: u64,
    ) -> Result<Self> {
        let params = Self {
            h,
            source,
            injection_mean,
            box_half_width,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    /// `h = 10 * 2^-8`, source at the origin, geometric injections with mean 25
    /// and the absorbing box `[-6, 6]^2`.
    pub fn reference() -> Self {
        Self {
            h: 10.0 / 256.0,
            source: SiteIndex::ORIGIN,
            injection_mean: 25.0,
            box_half_width: 6.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidParams(format!("h = {} must be > 0", self.h)));
        }
        if !(self.injection_mean.is_finite() && self.injection_mean >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "injection_mean = {} must be >= 1",
                self.injection_mean
            )));
        }
        if !(self.box_half_width.is_finite() && self.box_half_width > 0.0) {
            return Err(Error::InvalidParams(format!(
                "box_half_width = {} must be > 0",
                self.box_half_width
            )));
        }
        if !self.is_interior(self.source) {
            return Err(Error::InvalidParams(format!(
                "source {} is not strictly inside the box",
                self.source
            )));
        }
        Ok(())
    }

    /// Injection rate per unit time, `alpha = injection_mean / h`.
    pub fn rate(&self) -> f64 {
        self.injection_mean / self.h
    }

    /// True when the site lies in the open box; sites on or beyond the
    /// boundary absorb.
    pub fn is_interior(&self, site: SiteIndex) -> bool {
        let (x, y) = site.to_physical(self.h);
        x.abs() < self.box_half_width && y.abs() < self.box_half_width
    }

    /// Largest index `m` with `h * m` strictly inside the box.
    pub fn interior_extent(&self) -> i64 {
        let mut m = (self.box_half_width / self.h).floor() as i64;
        while m > 0 && (self.h * m as f64) >= self.box_half_width {
            m -= 1;
        }
        while self.h * ((m + 1) as f64) < self.box_half_width {
            m += 1;
        }
        m
    }
}

/// Counter-based random stream addressed by `(seed, stream_id)`.
///
/// Backed by ChaCha8 keyed from `seed` with `stream_id` as the ChaCha stream
/// nonce, so any stream can be reconstructed in isolation without replaying
/// other streams.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draws from the geometric law on `{1, 2, ...}` with success probability
/// `1 / mean`, so the expectation is `mean` and the variance `mean (mean - 1)`.
pub fn sample_geometric(stream: &mut RngStream, mean: f64) -> Result<u64> {
    Ok(GeometricInjection::new(mean)?.sample(stream))
}

/// Law of the number of particles injected per step.
pub trait InjectionLaw {
    fn mean(&self) -> f64;
    fn sample(&self, stream: &mut RngStream) -> u64;
}

#[derive(Clone, Copy, Debug)]
pub struct GeometricInjection {
    mean: f64,
    failures: Geometric,
}

impl GeometricInjection {
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 1.0) {
            return Err(Error::InvalidMean(mean));
        }
        let failures = Geometric::new(1.0 / mean).map_err(|_| Error::InvalidMean(mean))?;
        Ok(Self { mean, failures })
    }
}

impl InjectionLaw for GeometricInjection {
    fn mean(&self) -> f64 {
        self.mean
    }

    fn sample(&self, stream: &mut RngStream) -> u64 {
        1 + self.failures.sample(stream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    #[test]
    fn reference_kernel_drift() {
        let k = StepKernel::from_array(presets::FIELD).unwrap();
        let [q1, q2] = k.drift();
        assert!((q1 - 0.575).abs() < 1e-15);
        assert!((q2 - 0.225).abs() < 1e-15);

        let k = StepKernel::from_array(presets::P3).unwrap();
        let [q1, q2] = k.drift();
        assert!((q1 - 0.02).abs() < 1e-15);
        assert!((q2 - 0.02).abs() < 1e-15);
    }

    #[test]
    fn kernel_rejections() {
        assert!(matches!(
            StepKernel::new(0.25, 0.25, 0.25, 0.25),
            Err(Error::DegenerateKernel)
        ));
        assert!(matches!(
            StepKernel::new(0.5, 0.5, 0.0, 0.0),
            Err(Error::NonPositiveProbability { index: 3, .. })
        ));
        assert!(matches!(
            StepKernel::new(0.5, 0.3, 0.1, 0.2),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            StepKernel::new(f64::NAN, 0.3, 0.1, 0.2),
            Err(Error::NonPositiveProbability { index: 1, .. })
        ));
    }

    #[test]
    fn transverse_variance_matches_reference_values() {
        // 0.09 for the most degenerate preset and 0.5 for the near-symmetric one
        let k1 = StepKernel::from_array(presets::P1).unwrap();
        let k3 = StepKernel::from_array(presets::P3).unwrap();
        assert!((k1.transverse_variance() - 0.09).abs() < 5e-3);
        assert!((k3.transverse_variance() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn neighbors_are_nearest() {
        let w = SiteIndex::new(3, -2);
        let n = w.neighbors();
        assert_eq!(
            n,
            [
                SiteIndex::new(4, -2),
                SiteIndex::new(3, -1),
                SiteIndex::new(2, -2),
                SiteIndex::new(3, -3)
            ]
        );
        assert!(n.iter().all(|v| v.l1_distance(w) == 1));
    }

    #[test]
    fn params_validation() {
        let p = SimParams::reference();
        assert!(p.validate().is_ok());
        assert!((p.rate() - 640.0).abs() < 1e-12);
        assert_eq!(p.interior_extent(), 153);
        let bad = SimParams {
            source: SiteIndex::new(154, 0),
            ..p
        };
        assert!(bad.validate().is_err());
        let bad = SimParams {
            injection_mean: 0.5,
            ..p
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn interior_extent_on_exact_boundary() {
        let p = SimParams::new(1.0, SiteIndex::ORIGIN, 2.0, 3.0, 0).unwrap();
        assert_eq!(p.interior_extent(), 2);
        assert!(p.is_interior(SiteIndex::new(2, -2)));
        assert!(!p.is_interior(SiteIndex::new(3, 0)));
    }

    #[test]
    fn streams_reproducible_and_distinct() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn stream_fixed_output() {
        // Guards against silent changes to the stream construction.
        let mut s = RngStream::new(42, 0);
        let first = s.next_u64();
        let mut again = RngStream::new(42, 0);
        assert_eq!(first, again.next_u64());
        assert_eq!(s.seed(), 42);
        assert_eq!(s.stream_id(), 0);
    }

    #[test]
    fn geometric_mean_one_is_constant() {
        let mut s = RngStream::new(1, 1);
        for _ in 0..1000 {
            assert_eq!(sample_geometric(&mut s, 1.0).unwrap(), 1);
        }
        assert!(matches!(
            sample_geometric(&mut s, 0.99),
            Err(Error::InvalidMean(_))
        ));
    }

    #[test]
    fn geometric_moments_at_reference_mean() {
        let mut s = RngStream::new(2024, 11);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_geometric(&mut s, 25.0).unwrap() as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 25.0).abs() < 0.1, "mean {mean}");
        // 75 steps of variance 600 gives the reported sd 212.13
        assert!((var - 600.0).abs() < 10.0, "var {var}");
    }

    #[test]
    fn geometric_pmf_mean_two() {
        let mut s = RngStream::new(5, 5);
        let n = 1_000_000usize;
        let mut hist = [0usize; 6];
        for _ in 0..n {
            let k = sample_geometric(&mut s, 2.0).unwrap() as usize;
            if k <= 5 {
                hist[k] += 1;
            }
        }
        for (k, &count) in hist.iter().enumerate().skip(1) {
            let p = 0.5f64.powi(k as i32);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = count as f64 / n as f64;
            assert!((freq - p).abs() < 3.0 * se, "k={k} freq={freq} p={p}");
        }
    }

    #[test]
    fn geometric_ks_distance() {
        let mean = 25.0;
        let p = 1.0 / mean;
        let mut s = RngStream::new(99, 0);
        let n = 100_000usize;
        let mut draws: Vec<u64> = (0..n).map(|_| sample_geometric(&mut s, mean).unwrap()).collect();
        draws.sort_unstable();
        let max = *draws.last().unwrap();
        let mut d: f64 = 0.0;
        let mut idx = 0;
        for k in 1..=max {
            while idx < n && draws[idx] <= k {
                idx += 1;
            }
            let emp = idx as f64 / n as f64;
            let cdf = 1.0 - (1.0 - p).powi(k as i32);
            d = d.max((emp - cdf).abs());
        }
        assert!(d < 0.01, "KS distance {d}");
    }

    proptest! {
        #[test]
        fn kernel_readback_and_drift_bounds(a in 0.01f64..1.0, b in 0.01f64..1.0, c in 0.01f64..1.0, d in 0.01f64..1.0) {
            let s = a + b + c + d;
            let (p1, p2, p3) = (a / s, b / s, c / s);
            let p4 = 1.0 - p1 - p2 - p3;
            prop_assume!(p4 > 0.0);
            match StepKernel::new(p1, p2, p3, p4) {
                Ok(k) => {
                    let p = k.probabilities();
                    prop_assert_eq!(p[0].to_bits(), p1.to_bits());
                    prop_assert_eq!(p[1].to_bits(), p2.to_bits());
                    prop_assert_eq!(p[2].to_bits(), p3.to_bits());
                    prop_assert_eq!(p[3].to_bits(), p4.to_bits());
                    let [q1, q2] = k.drift();
                    prop_assert!(q1.abs() < 1.0 && q2.abs() < 1.0);
                    prop_assert!(q1.abs() + q2.abs() > 0.0);
                }
                Err(e) => prop_assert!(matches!(e, Error::DegenerateKernel)),
            }
        }

        #[test]
        fn physical_roundtrip(i in -(1i64 << 31)..=(1i64 << 31), j in -(1i64 << 31)..=(1i64 << 31), h in 1e-4f64..10.0) {
            let w = SiteIndex::new(i, j);
            let (x, y) = w.to_physical(h);
            prop_assert_eq!(SiteIndex::from_physical(x, y, h), w);
        }
    }
}
