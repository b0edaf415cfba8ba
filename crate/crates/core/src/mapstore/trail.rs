use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MapError;
use crate::geom::{pose_from_stored, FrameId, Pose};

/// Spacing used when recording breadcrumbs unless configured otherwise.
pub const DEFAULT_SPACING_M: f64 = 1.0;

const SPACING_SLACK_M: f64 = 1e-6;
const COINCIDENT_M: f64 = 1e-9;

/// Ordered breadcrumb poses in one session frame, no two consecutive
/// crumbs further apart than `spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct BreadcrumbTrail {
    frame: FrameId,
    points: Vec<Pose>,
    spacing: f64,
}

impl BreadcrumbTrail {
    pub fn new(points: Vec<Pose>, spacing: f64) -> Result<Self, MapError> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(MapError::InvalidTrail(format!("spacing {spacing} must be positive")));
        }
        if points.len() < 2 {
            return Err(MapError::InvalidTrail(format!(
                "trail needs at least 2 points, got {}",
                points.len()
            )));
        }
        let frame = points[0].frame.clone();
        for (i, p) in points.iter().enumerate() {
            if p.frame != frame {
                return Err(MapError::InvalidTrail(format!(
                    "point {i} is in frame {} but the trail is in {}",
                    p.frame, frame
                )));
            }
            if !p.is_finite() {
                return Err(MapError::InvalidTrail(format!("point {i} is not finite")));
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            let d = w[0].distance_to(&w[1]);
            if d > spacing + SPACING_SLACK_M {
                return Err(MapError::InvalidTrail(format!(
                    "points {i} and {} are {d:.6} m apart, above spacing {spacing}",
                    i + 1
                )));
            }
        }
        Ok(BreadcrumbTrail { frame, points, spacing })
    }

    pub fn frame(&self) -> &FrameId {
        &self.frame
    }

    pub fn points(&self) -> &[Pose] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn first(&self) -> &Pose {
        &self.points[0]
    }

    pub fn last(&self) -> &Pose {
        self.points.last().expect("trail has at least two points")
    }

    pub fn length(&self) -> f64 {
        polyline_length(&self.points)
    }

    /// Points in walking order from the far end, each turned to face the
    /// new direction of travel.
    pub fn reversed(&self) -> BreadcrumbTrail {
        BreadcrumbTrail {
            frame: self.frame.clone(),
            points: self.points.iter().rev().map(Pose::turned_around).collect(),
            spacing: self.spacing,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrailRepr {
    frame: FrameId,
    /// `[x, y, z, qw, qx, qy, qz]` per crumb
    points: Vec<[f64; 7]>,
    spacing: f64,
}

impl Serialize for BreadcrumbTrail {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TrailRepr {
            frame: self.frame.clone(),
            points: self
                .points
                .iter()
                .map(|p| {
                    let q = p.wxyz();
                    [p.position.x, p.position.y, p.position.z, q[0], q[1], q[2], q[3]]
                })
                .collect(),
            spacing: self.spacing,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BreadcrumbTrail {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TrailRepr::deserialize(deserializer)?;
        let points = repr
            .points
            .iter()
            .map(|c| pose_from_stored([c[0], c[1], c[2]], [c[3], c[4], c[5], c[6]], repr.frame.clone()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        BreadcrumbTrail::new(points, repr.spacing).map_err(serde::de::Error::custom)
    }
}

fn polyline_length(points: &[Pose]) -> f64 {
    points.windows(2).map(|w| w[0].distance_to(&w[1])).sum()
}

/// Sum of Euclidean distances between consecutive crumbs.
pub fn path_length(trail: &BreadcrumbTrail) -> f64 {
    trail.length()
}

/// Length of a raw pose sequence, before it has been turned into a trail.
pub fn raw_path_length(points: &[Pose]) -> Result<f64, MapError> {
    if points.len() < 2 {
        return Err(MapError::InvalidTrail(format!(
            "path needs at least 2 points, got {}",
            points.len()
        )));
    }
    Ok(polyline_length(points))
}

fn interpolate_orientation(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, u: f64) -> UnitQuaternion<f64> {
    // slerp between near-identical rotations drifts off unit length
    let q = a.try_slerp(b, u, 1e-9).unwrap_or(if u < 0.5 { *a } else { *b });
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Drops breadcrumbs along the recorded path whenever the straight-line
/// distance from the previous crumb reaches `spacing`, like a walker
/// dropping markers at a fixed pace. The first and last input points are
/// kept exactly. Output points lie on the input polyline and re-running the
/// resampler on its own output reproduces it.
pub fn resample_trail(points: &[Pose], spacing: f64) -> Result<BreadcrumbTrail, MapError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(MapError::InvalidTrail(format!("spacing {spacing} must be positive")));
    }
    if points.len() < 2 {
        return Err(MapError::InvalidTrail(format!(
            "path needs at least 2 points, got {}",
            points.len()
        )));
    }
    let frame = points[0].frame.clone();
    if let Some(p) = points.iter().find(|p| p.frame != frame) {
        return Err(MapError::InvalidTrail(format!(
            "mixed frames {} and {} in one recording",
            frame, p.frame
        )));
    }

    let s2 = spacing * spacing;
    // a vertex this close to the circle counts as on it
    let on_circle = 2.0 * spacing * COINCIDENT_M;

    let mut out: Vec<Pose> = vec![points[0].clone()];
    let mut last: Vector3<f64> = points[0].position;

    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let seg = b.position - a.position;
        let seg_len = seg.norm();
        let mut from = a.position;
        loop {
            let f = from - last;
            let c = f.dot(&f) - s2;
            if c >= -on_circle {
                // `from` is a vertex sitting on the spacing circle
                out.push(a.clone());
                last = a.position;
                continue;
            }
            let d = b.position - from;
            let qa = d.dot(&d);
            if qa == 0.0 {
                break;
            }
            let qb = 2.0 * f.dot(&d);
            let disc = qb * qb - 4.0 * qa * c;
            let t = (-qb + disc.sqrt()) / (2.0 * qa);
            if t > 1.0 {
                break;
            }
            let p = from + d * t;
            let u = if seg_len > 0.0 {
                (p - a.position).norm() / seg_len
            } else {
                1.0
            };
            out.push(Pose::new(
                p,
                interpolate_orientation(&a.orientation, &b.orientation, u),
                frame.clone(),
            ));
            last = p;
            from = p;
        }
    }

    let end = points.last().expect("len checked").clone();
    if out.len() > 1 && (out.last().unwrap().position - end.position).norm() < COINCIDENT_M {
        out.pop();
    }
    out.push(end);
    BreadcrumbTrail::new(out, spacing)
}
