use std::collections::BTreeSet;

use rand_distr::{Distribution, StandardNormal};

use crate::lattice::{RngStream, SiteIndex, StepKernel};

/// Paths are cut at `MAX_PATH_FACTOR * r^2` points, which bounds the work once
/// the perturbation scale has shrunk to almost nothing.
pub const MAX_PATH_FACTOR: usize = 16;

/// Nearest lattice index; exact half-integers go towards `-inf`.
pub fn snap(x: f64) -> i64 {
    (x - 0.5).ceil() as i64
}

fn path_shape(l: f64, r: u32) -> (usize, usize) {
    let budget = r as usize * r as usize;
    let paths = ((l * f64::from(r)).floor() as usize).saturating_add(1).min(budget.max(1));
    let ratio = (f64::from(r) / l).floor();
    let len = if ratio.is_finite() && ratio >= 1.0 {
        (ratio as usize).min(MAX_PATH_FACTOR * budget)
    } else {
        1
    };
    (paths, len.max(1))
}

fn gaussian_pair(stream: &mut RngStream) -> (f64, f64) {
    (StandardNormal.sample(stream), StandardNormal.sample(stream))
}

/// Continuous index-unit points `w - q k - L W(kh) / h` of every path, path
/// by path, without snapping or truncation.
pub fn brownian_points(
    w: SiteIndex,
    kernel: &StepKernel,
    l: f64,
    r: u32,
    h: f64,
    stream: &mut RngStream,
) -> Vec<Vec<(f64, f64)>> {
    assert!(l > 0.0, "perturbation scale must be positive");
    let (paths, len) = path_shape(l, r);
    let [q1, q2] = kernel.drift();
    let sd = h.sqrt();
    (0..paths)
        .map(|_| {
            let (mut bx, mut by) = (0.0, 0.0);
            let mut pts = Vec::with_capacity(len);
            for k in 0..len {
                let kf = k as f64;
                pts.push((w.i as f64 - q1 * kf - l * bx / h, w.j as f64 - q2 * kf - l * by / h));
                let (zx, zy) = gaussian_pair(stream);
                bx += sd * zx;
                by += sd * zy;
            }
            pts
        })
        .collect()
}

/// Sensor sites for the Brownian-guided step: `floor(L r) + 1` paths of
/// `floor(r / L)` points each, snapped to the lattice and deduplicated. At most
/// `r^2` sites are kept, earliest `k` first, ties within a level going to the
/// lexicographically smallest sites.
///
/// Paths are advanced together one level `k` at a time, drawing each path's
/// Gaussian increment right after its level-`k` point.
pub fn brownian_sites(
    w: SiteIndex,
    kernel: &StepKernel,
    l: f64,
    r: u32,
    h: f64,
    stream: &mut RngStream,
) -> Vec<SiteIndex> {
    assert!(l > 0.0, "perturbation scale must be positive");
    let budget = (r as usize * r as usize).max(1);
    let (paths, len) = path_shape(l, r);
    let [q1, q2] = kernel.drift();
    let sd = h.sqrt();
    let mut state = vec![(0.0f64, 0.0f64); paths];
    let mut chosen: BTreeSet<SiteIndex> = BTreeSet::new();
    let mut order = Vec::with_capacity(budget);
    for k in 0..len {
        let kf = k as f64;
        let mut level: BTreeSet<SiteIndex> = BTreeSet::new();
        for b in state.iter_mut() {
            let x = w.i as f64 - q1 * kf - l * b.0 / h;
            let y = w.j as f64 - q2 * kf - l * b.1 / h;
            let site = SiteIndex::new(snap(x), snap(y));
            if !chosen.contains(&site) {
                level.insert(site);
            }
            let (zx, zy) = gaussian_pair(stream);
            b.0 += sd * zx;
            b.1 += sd * zy;
        }
        for site in level {
            if order.len() == budget {
                return order;
            }
            chosen.insert(site);
            order.push(site);
        }
        if order.len() == budget {
            return order;
        }
    }
    order
}
