use std::collections::{BTreeMap, VecDeque};

use geojson::{Feature, FeatureCollection, Geometry, JsonObject, JsonValue, Value};

use super::{AnchorId, AnchorKind, MapError, MapGraph};
use crate::geom::{compose, geo_to_local, invert, local_to_geo, FrameTransform, GeoPose, Pose};

/// Poses of every anchor in the east-north-up frame of `origin`, found by
/// walking connections outward from geo-referenced anchors (fewest hops
/// first). Components with no outdoor anchor are rooted at the origin when
/// `root_at_origin` is set, otherwise they are left out.
fn place_anchors(map: &MapGraph, origin: &GeoPose, root_at_origin: bool) -> Result<BTreeMap<AnchorId, Pose>, MapError> {
    let mut placed: BTreeMap<AnchorId, Pose> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for a in map.anchors().values() {
        if let (AnchorKind::Outdoor, Some(g)) = (a.kind, &a.geo) {
            placed.insert(a.id.clone(), geo_to_local(g, origin)?);
            queue.push_back(a.id.clone());
        }
    }
    let flood = |placed: &mut BTreeMap<AnchorId, Pose>, queue: &mut VecDeque<AnchorId>| {
        while let Some(id) = queue.pop_front() {
            let here = placed[&id].clone();
            for t in map.traversals_from(&id) {
                if placed.contains_key(&t.exit) {
                    continue;
                }
                // trail frame expressed in ENU, then the exit anchor within it
                let enu_from_trail = compose(&here, &invert(&t.entry_pose));
                placed.insert(t.exit.clone(), compose(&enu_from_trail, &t.exit_pose));
                queue.push_back(t.exit);
            }
        }
    };
    flood(&mut placed, &mut queue);
    if root_at_origin {
        let root_pose = geo_to_local(origin, origin)?;
        let ids: Vec<AnchorId> = map.anchors().keys().cloned().collect();
        for id in ids {
            if !placed.contains_key(&id) {
                placed.insert(id.clone(), root_pose.clone());
                queue.push_back(id);
                flood(&mut placed, &mut queue);
            }
        }
    }
    Ok(placed)
}

fn point(g: &GeoPose) -> Geometry {
    Geometry::new(Value::Point(vec![g.longitude, g.latitude]))
}

fn props(pairs: Vec<(&str, JsonValue)>) -> JsonObject {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn feature(geometry: Geometry, properties: JsonObject) -> Feature {
    Feature {
        bbox: None,
        geometry: Some(geometry),
        id: None,
        properties: Some(properties),
        foreign_members: None,
    }
}

/// Anchors as points and connections as line strings, in WGS84 degrees.
///
/// Without `origin`, the first outdoor anchor (by id) anchors the tangent
/// plane and every anchor must be reachable from an outdoor anchor. With an
/// `origin`, indoor-only components are placed with their smallest-id
/// anchor at the origin.
pub fn export_geojson(map: &MapGraph, origin: Option<&GeoPose>) -> Result<FeatureCollection, MapError> {
    let first_outdoor = map
        .anchors()
        .values()
        .find(|a| a.kind == AnchorKind::Outdoor)
        .and_then(|a| a.geo.clone());
    let (origin, root_at_origin) = match (origin, first_outdoor) {
        (Some(o), _) => (o.clone(), true),
        (None, Some(g)) => (g, false),
        (None, None) => {
            return Err(MapError::Unreferenced(
                "no outdoor anchor and no origin supplied".into(),
            ))
        }
    };
    let placed = place_anchors(map, &origin, root_at_origin)?;
    if let Some(missing) = map.anchors().keys().find(|id| !placed.contains_key(*id)) {
        return Err(MapError::Unreferenced(format!(
            "anchor {missing} is not connected to any outdoor anchor"
        )));
    }

    let mut features = Vec::new();
    for a in map.anchors().values() {
        let g = match &a.geo {
            Some(g) => g.clone(),
            None => local_to_geo(&placed[&a.id], &origin)?,
        };
        features.push(feature(
            point(&g),
            props(vec![
                ("id", a.id.as_str().into()),
                (
                    "kind",
                    if a.kind == AnchorKind::Outdoor {
                        "outdoor"
                    } else {
                        "indoor"
                    }
                    .into(),
                ),
                ("name", a.name.clone().into()),
                ("notes", a.notes.clone().into()),
                ("quality", a.quality.into()),
            ]),
        ));
    }
    for c in map.connections().values() {
        let mut trails = vec![("forward", &c.forward_trail, &c.from_pose_in_trail_frame, &c.from_anchor)];
        if let Some(r) = &c.reverse_trail {
            trails.push(("reverse", &r.trail, &r.start_pose_in_trail_frame, &c.to_anchor));
        }
        for (direction, trail, entry_pose, entry) in trails {
            let enu_from_trail = FrameTransform {
                from_frame: trail.frame().clone(),
                to_frame: crate::geom::FrameId::geo_local(),
                transform: compose(&placed[entry], &invert(entry_pose)),
            };
            let coords = trail
                .points()
                .iter()
                .map(|p| {
                    let g = local_to_geo(&enu_from_trail.apply(p), &origin)?;
                    Ok(vec![g.longitude, g.latitude])
                })
                .collect::<Result<Vec<_>, MapError>>()?;
            let length = if direction == "forward" {
                c.length
            } else {
                c.cost(super::Direction::Reverse)
            };
            features.push(feature(
                Geometry::new(Value::LineString(coords)),
                props(vec![
                    ("id", c.id.as_str().into()),
                    ("direction", direction.into()),
                    ("from", c.from_anchor.as_str().into()),
                    ("to", c.to_anchor.as_str().into()),
                    ("length", length.into()),
                ]),
            ));
        }
    }
    Ok(FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    })
}
