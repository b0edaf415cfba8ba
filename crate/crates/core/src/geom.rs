//! Rigid-transform algebra and local geodesy.
//!
//! Conventions used throughout the crate:
//!
//! * Session frames are right-handed with `x` east-like, `y` north-like and
//!   `z` up. A pose "faces" along its local `+y` axis, so the identity pose
//!   has heading 0.
//! * `yaw` is the counter-clockwise rotation about `+z` (radians or degrees
//!   as named). `heading`/`bearing` is the clockwise angle from `+y` in
//!   degrees, normalized to `[0, 360)`.
//! * Turn angles are signed degrees in `(-180, 180]`, positive clockwise.

use std::fmt;

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Mean Earth radius of the spherical model, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Maximum horizontal extent over which the tangent-plane model is accepted.
pub const TANGENT_PLANE_LIMIT_M: f64 = 10_000.0;

/// Quaternions read back from decimal text may be off unit length by the
/// rounding of their components.
const LOADED_QUAT_NORM_TOL: f64 = 2e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("point is {distance_m:.1} m from the tangent-plane origin (limit {limit_m} m)")]
    OutOfRange { distance_m: f64, limit_m: f64 },
    #[error("bearing between coincident points is undefined")]
    DegeneratePoints,
    #[error("invalid geo pose: {0}")]
    InvalidGeoPose(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
}

/// Identifier of a tracking-session coordinate frame.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameId(pub String);

impl FrameId {
    pub fn new(name: impl Into<String>) -> Self {
        FrameId(name.into())
    }

    /// Frame of poses produced by [`geo_to_local`]: east-north-up at the origin.
    pub fn geo_local() -> Self {
        FrameId("enu".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Rigid transform (position + unit quaternion) expressed in a session frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub frame: FrameId,
}

impl Pose {
    pub fn identity(frame: FrameId) -> Self {
        Pose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            frame,
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>, frame: FrameId) -> Self {
        Pose {
            position,
            orientation,
            frame,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64, frame: FrameId) -> Self {
        Pose::new(Vector3::new(x, y, z), UnitQuaternion::identity(), frame)
    }

    /// Pure rotation about `+z` by `yaw_deg` degrees (counter-clockwise).
    pub fn from_yaw_deg(yaw_deg: f64, frame: FrameId) -> Self {
        Pose::new(Vector3::zeros(), yaw_rotation(yaw_deg), frame)
    }

    /// Planar pose at `(x, y)` facing `heading_deg` (clockwise from `+y`).
    pub fn planar(x: f64, y: f64, heading_deg: f64, frame: FrameId) -> Self {
        Pose::new(Vector3::new(x, y, 0.0), yaw_rotation(-heading_deg), frame)
    }

    /// Builds a pose from raw quaternion components `(w, x, y, z)`,
    /// normalizing them. Fails on non-finite input or a zero quaternion.
    pub fn from_components(position: [f64; 3], wxyz: [f64; 4], frame: FrameId) -> Result<Self, GeomError> {
        if position.iter().chain(wxyz.iter()).any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidPose("non-finite component".into()));
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        if q.norm() < 1e-12 {
            return Err(GeomError::InvalidPose("zero quaternion".into()));
        }
        Ok(Pose::new(
            Vector3::from(position),
            UnitQuaternion::from_quaternion(q),
            frame,
        ))
    }

    /// Counter-clockwise rotation about `+z`, radians, of the pose's forward axis.
    pub fn yaw_rad(&self) -> f64 {
        let forward = self.orientation * Vector3::y();
        // angle of forward measured from +y, counter-clockwise
        (-forward.x).atan2(forward.y)
    }

    pub fn yaw_deg(&self) -> f64 {
        self.yaw_rad().to_degrees()
    }

    /// Heading of the forward axis, clockwise from `+y`, in `[0, 360)`.
    pub fn heading_deg(&self) -> f64 {
        normalize_deg_360(-self.yaw_deg())
    }

    pub fn xy(&self) -> Vector2<f64> {
        Vector2::new(self.position.x, self.position.y)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    pub fn horizontal_distance_to(&self, other: &Pose) -> f64 {
        (self.xy() - other.xy()).norm()
    }

    pub fn with_frame(mut self, frame: FrameId) -> Self {
        self.frame = frame;
        self
    }

    /// Same position, forward axis turned around.
    pub fn turned_around(&self) -> Pose {
        Pose::new(
            self.position,
            renormalize(self.orientation * yaw_rotation(180.0)),
            self.frame.clone(),
        )
    }

    /// Quaternion components in `(w, x, y, z)` order.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.wxyz().iter().all(|v| v.is_finite())
    }

    /// Translation and rotation-angle differences to `other`, ignoring frames.
    pub fn deviation(&self, other: &Pose) -> (f64, f64) {
        let dp = (self.position - other.position).norm();
        let da = self.orientation.angle_to(&other.orientation);
        (dp, da)
    }

    pub fn approx_eq(&self, other: &Pose, tol: f64) -> bool {
        let (dp, da) = self.deviation(other);
        self.frame == other.frame && dp <= tol && da <= tol
    }
}

/// Wire form of a pose; quaternion components are kept exactly as written so
/// that decimal text reads back to the same bytes.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    frame: FrameId,
    orientation: [f64; 4],
    position: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            frame: self.frame.clone(),
            orientation: self.wxyz(),
            position: [self.position.x, self.position.y, self.position.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        pose_from_stored(repr.position, repr.orientation, repr.frame).map_err(serde::de::Error::custom)
    }
}

/// Rebuilds a pose from stored components without renormalizing, after
/// checking the quaternion is unit length up to decimal rounding.
pub(crate) fn pose_from_stored(position: [f64; 3], wxyz: [f64; 4], frame: FrameId) -> Result<Pose, GeomError> {
    if position.iter().chain(wxyz.iter()).any(|v| !v.is_finite()) {
        return Err(GeomError::InvalidPose("non-finite component".into()));
    }
    let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    let norm = q.norm();
    if (norm - 1.0).abs() > LOADED_QUAT_NORM_TOL {
        return Err(GeomError::InvalidPose(format!(
            "orientation is not a unit quaternion (norm {norm:.12})"
        )));
    }
    Ok(Pose::new(
        Vector3::from(position),
        UnitQuaternion::new_unchecked(q),
        frame,
    ))
}

fn yaw_rotation(yaw_deg: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians())
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(q.into_inner())
}

/// `a ∘ b`: applies `b` in the frame of `a`. The result carries `a`'s frame.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        position: a.position + a.orientation * b.position,
        orientation: renormalize(a.orientation * b.orientation),
        frame: a.frame.clone(),
    }
}

pub fn invert(p: &Pose) -> Pose {
    let inv = renormalize(p.orientation.inverse());
    Pose {
        position: -(inv * p.position),
        orientation: inv,
        frame: p.frame.clone(),
    }
}

/// Rigid mapping of poses from one session frame into another.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTransform {
    pub from_frame: FrameId,
    pub to_frame: FrameId,
    pub transform: Pose,
}

impl FrameTransform {
    pub fn identity(frame: FrameId) -> Self {
        FrameTransform {
            from_frame: frame.clone(),
            to_frame: frame.clone(),
            transform: Pose::identity(frame),
        }
    }

    /// Maps a pose expressed in `from_frame` into `to_frame`.
    pub fn apply(&self, p: &Pose) -> Pose {
        let mut out = compose(&self.transform, p);
        out.frame = self.to_frame.clone();
        out
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.transform.position + self.transform.orientation * p
    }

    pub fn inverse(&self) -> FrameTransform {
        let mut t = invert(&self.transform);
        t.frame = self.from_frame.clone();
        FrameTransform {
            from_frame: self.to_frame.clone(),
            to_frame: self.from_frame.clone(),
            transform: t,
        }
    }

    /// `self ∘ inner`: first `inner` (X → Y), then `self` (Y → Z).
    pub fn then_from(&self, inner: &FrameTransform) -> FrameTransform {
        let mut t = compose(&self.transform, &inner.transform);
        t.frame = self.to_frame.clone();
        FrameTransform {
            from_frame: inner.from_frame.clone(),
            to_frame: self.to_frame.clone(),
            transform: t,
        }
    }
}

/// Transform taking frame-B poses into frame A, given one physical anchor
/// observed in both: `anchor_in_a ∘ invert(anchor_in_b)`.
pub fn relative_transform(anchor_in_a: &Pose, anchor_in_b: &Pose) -> FrameTransform {
    let mut t = compose(anchor_in_a, &invert(anchor_in_b));
    t.frame = anchor_in_a.frame.clone();
    FrameTransform {
        from_frame: anchor_in_b.frame.clone(),
        to_frame: anchor_in_a.frame.clone(),
        transform: t,
    }
}

/// Geographic pose with per-parameter confidence intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoPose {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
    /// Degrees clockwise from true north, `[0, 360)`.
    pub yaw: f64,
    pub ci_horizontal: f64,
    pub ci_yaw: f64,
    pub ci_vertical: f64,
}

impl GeoPose {
    /// Validated constructor with zero confidence intervals.
    pub fn new(latitude: f64, longitude: f64, altitude: f64, yaw: f64) -> Result<Self, GeomError> {
        let g = GeoPose {
            latitude,
            longitude,
            altitude,
            yaw,
            ci_horizontal: 0.0,
            ci_yaw: 0.0,
            ci_vertical: 0.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_confidence(mut self, horizontal: f64, yaw: f64, vertical: f64) -> Result<Self, GeomError> {
        self.ci_horizontal = horizontal;
        self.ci_yaw = yaw;
        self.ci_vertical = vertical;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let fields = [
            self.latitude,
            self.longitude,
            self.altitude,
            self.yaw,
            self.ci_horizontal,
            self.ci_yaw,
            self.ci_vertical,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidGeoPose("non-finite field".into()));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(GeomError::InvalidGeoPose(format!(
                "latitude {} outside [-90, 90]",
                self.latitude
            )));
        }
        if !(-180.0..180.0).contains(&self.longitude) {
            return Err(GeomError::InvalidGeoPose(format!(
                "longitude {} outside [-180, 180)",
                self.longitude
            )));
        }
        if !(0.0..360.0).contains(&self.yaw) {
            return Err(GeomError::InvalidGeoPose(format!("yaw {} outside [0, 360)", self.yaw)));
        }
        if self.ci_horizontal < 0.0 || self.ci_yaw < 0.0 || self.ci_vertical < 0.0 {
            return Err(GeomError::InvalidGeoPose("negative confidence interval".into()));
        }
        Ok(())
    }
}

/// Great-circle distance on the spherical model, meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().asin()
}

/// East-north-up pose of `g` relative to `origin`. Orientation is the yaw
/// of `g` about the up axis; the origin's own yaw does not rotate the frame.
pub fn geo_to_local(g: &GeoPose, origin: &GeoPose) -> Result<Pose, GeomError> {
    let distance_m = haversine_m(origin.latitude, origin.longitude, g.latitude, g.longitude);
    if distance_m > TANGENT_PLANE_LIMIT_M {
        return Err(GeomError::OutOfRange {
            distance_m,
            limit_m: TANGENT_PLANE_LIMIT_M,
        });
    }
    let deg = std::f64::consts::PI / 180.0;
    let dlon = normalize_deg_signed(g.longitude - origin.longitude);
    let east = dlon * origin.latitude.to_radians().cos() * EARTH_RADIUS_M * deg;
    let north = (g.latitude - origin.latitude) * EARTH_RADIUS_M * deg;
    let up = g.altitude - origin.altitude;
    Ok(Pose::new(
        Vector3::new(east, north, up),
        yaw_rotation(-g.yaw),
        FrameId::geo_local(),
    ))
}

/// Inverse of [`geo_to_local`]; confidence intervals of the result are zero.
pub fn local_to_geo(p: &Pose, origin: &GeoPose) -> Result<GeoPose, GeomError> {
    let horizontal = p.xy().norm();
    if horizontal > TANGENT_PLANE_LIMIT_M {
        return Err(GeomError::OutOfRange {
            distance_m: horizontal,
            limit_m: TANGENT_PLANE_LIMIT_M,
        });
    }
    let deg = std::f64::consts::PI / 180.0;
    let latitude = origin.latitude + p.position.y / (EARTH_RADIUS_M * deg);
    let longitude = origin.longitude + p.position.x / (origin.latitude.to_radians().cos() * EARTH_RADIUS_M * deg);
    let g = GeoPose {
        latitude,
        longitude: wrap_longitude(longitude),
        altitude: origin.altitude + p.position.z,
        yaw: p.heading_deg(),
        ci_horizontal: 0.0,
        ci_yaw: 0.0,
        ci_vertical: 0.0,
    };
    g.validate()?;
    Ok(g)
}

fn wrap_longitude(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Clockwise angle from `+y` of the direction `from → to`, `[0, 360)`.
pub fn bearing(from: Vector2<f64>, to: Vector2<f64>) -> Result<f64, GeomError> {
    let d = to - from;
    if d.norm() == 0.0 {
        return Err(GeomError::DegeneratePoints);
    }
    Ok(normalize_deg_360(d.x.atan2(d.y).to_degrees()))
}

pub fn normalize_deg_360(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Normalizes to `(-180, 180]`.
pub fn normalize_deg_signed(deg: f64) -> f64 {
    let r = normalize_deg_360(deg);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}
