use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{AnchorId, AnchorKind, MapGraph};
use crate::geom::{haversine_m, GeoPose};

/// Anchors worth offering to a user at `coarse`: outdoor anchors within
/// `radius` meters, plus every anchor reachable over connections from one
/// of those. Reachable anchors inherit the distance of the closest
/// qualifying outdoor anchor they connect to. Sorted by distance, then id.
pub fn nearby_anchors(map: &MapGraph, coarse: &GeoPose, radius: f64) -> Vec<AnchorId> {
    if !(radius > 0.0) {
        return Vec::new();
    }
    let mut seeds: Vec<(f64, AnchorId)> = map
        .anchors()
        .values()
        .filter(|a| a.kind == AnchorKind::Outdoor)
        .filter_map(|a| {
            let g = a.geo.as_ref()?;
            let d = haversine_m(coarse.latitude, coarse.longitude, g.latitude, g.longitude);
            (d <= radius).then(|| (d, a.id.clone()))
        })
        .collect();
    seeds.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));

    // multi-source flood in order of seed distance: the first seed to reach
    // an anchor is its closest qualifying one
    let mut distance: BTreeMap<AnchorId, f64> = BTreeMap::new();
    for (d, seed) in &seeds {
        if distance.contains_key(seed) {
            continue;
        }
        let mut queue = VecDeque::from([seed.clone()]);
        let mut seen = BTreeSet::from([seed.clone()]);
        while let Some(a) = queue.pop_front() {
            distance.entry(a.clone()).or_insert(*d);
            for t in map.traversals_from(&a) {
                if seen.insert(t.exit.clone()) {
                    queue.push_back(t.exit);
                }
            }
        }
    }
    let mut out: Vec<(f64, AnchorId)> = distance.into_iter().map(|(k, v)| (v, k)).collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    out.into_iter().map(|(_, id)| id).collect()
}
