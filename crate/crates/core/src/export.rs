//! NDJSON field snapshots: one `{"i","j","count"}` object per line,
//! lexicographic by site.

use std::fmt::Write as _;

use crate::lattice::SiteIndex;
use crate::oracle::DenseField;
use crate::search::json_f64;
use crate::sim::OccupancyField;

pub fn occupancy_ndjson(field: &OccupancyField) -> String {
    let mut out = String::new();
    for (w, c) in field.iter() {
        let _ = writeln!(out, "{{\"i\":{},\"j\":{},\"count\":{}}}", w.i, w.j, c);
    }
    out
}

/// Real-valued fields use the same schema; entries at or below `floor` are
/// skipped.
pub fn dense_ndjson(field: &DenseField, floor: f64) -> String {
    let mut out = String::new();
    for (w, v) in field.nonzero() {
        if v > floor {
            let _ = writeln!(out, "{{\"i\":{},\"j\":{},\"count\":{}}}", w.i, w.j, json_f64(v));
        }
    }
    out
}

/// Parses one snapshot line back into `(site, count)`.
pub fn parse_snapshot_line(line: &str) -> Option<(SiteIndex, f64)> {
    let body = line.trim().strip_prefix('{')?.strip_suffix('}')?;
    let (mut i, mut j, mut c) = (None, None, None);
    for part in body.split(',') {
        let (k, v) = part.split_once(':')?;
        match k.trim().trim_matches('"') {
            "i" => i = v.trim().parse::<i64>().ok(),
            "j" => j = v.trim().parse::<i64>().ok(),
            "count" => c = v.trim().parse::<f64>().ok(),
            _ => return None,
        }
    }
    Some((SiteIndex::new(i?, j?), c?))
}
