//! Seeded stand-ins for phone tracking: odometry that drifts with distance
//! walked, anchor relocalization inside a detection radius, and geospatial
//! fixes whose confidence intervals shrink over time.
//!
//! The ground-truth walker lives in a global `world` frame whose axes are
//! east-north-up at [`WorldState::geo_origin`]. Code under test only sees
//! session-frame estimates through the [`Sensors`] trait.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{compose, invert, local_to_geo, FrameId, GeoPose, Pose};
use crate::mapstore::{AnchorId, END_ANCHOR_RADIUS_M};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensimError {
    #[error("motion distance must be finite and non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("invalid sensing configuration: {0}")]
    Config(String),
}

/// Random-walk odometry drift. Variances grow linearly with distance, so
/// per-axis position error after `L` meters has standard deviation
/// `sigma_pos * sqrt(L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftParams {
    /// Horizontal position noise, meters per square-root meter walked.
    pub sigma_pos: f64,
    /// Heading noise, degrees per square-root meter walked.
    pub sigma_yaw: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        DriftParams {
            sigma_pos: 0.02,
            sigma_yaw: 0.2,
        }
    }
}

impl DriftParams {
    pub fn noiseless() -> Self {
        DriftParams {
            sigma_pos: 0.0,
            sigma_yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelocParams {
    /// Anchors are only recognized within this distance, meters.
    pub radius: f64,
    /// Per-axis standard deviation of a relocalized anchor position, meters.
    pub sigma: f64,
    /// Probability of recognizing an in-range anchor per second of looking.
    pub p_success: f64,
    /// Relocalizations further than this many `sigma` from the true pose
    /// are rejected by the localizer and re-drawn.
    pub gate_sigmas: f64,
}

impl Default for RelocParams {
    fn default() -> Self {
        RelocParams {
            radius: END_ANCHOR_RADIUS_M,
            sigma: 0.05,
            p_success: 0.5,
            gate_sigmas: 3.0,
        }
    }
}

impl RelocParams {
    /// Always succeeds in range and returns exact anchor poses.
    pub fn exact() -> Self {
        RelocParams {
            sigma: 0.0,
            p_success: 1.0,
            ..RelocParams::default()
        }
    }
}

/// Confidence interval dynamics: `ci(t) = floor + (start - floor) * exp(-t / tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CiModel {
    pub start_horizontal: f64,
    pub start_yaw: f64,
    pub start_vertical: f64,
    pub floor_horizontal: f64,
    pub floor_yaw: f64,
    pub floor_vertical: f64,
    /// Seconds.
    pub tau: f64,
}

impl Default for CiModel {
    fn default() -> Self {
        CiModel {
            start_horizontal: 10.0,
            start_yaw: 25.0,
            start_vertical: 10.0,
            floor_horizontal: 1.0,
            floor_yaw: 2.0,
            floor_vertical: 1.0,
            tau: 5.0,
        }
    }
}

impl CiModel {
    /// `(horizontal m, yaw deg, vertical m)` after `elapsed` seconds.
    pub fn at(&self, elapsed: f64) -> (f64, f64, f64) {
        let k = (-elapsed.max(0.0) / self.tau).exp();
        let shrink = |start: f64, floor: f64| floor + (start - floor) * k;
        (
            shrink(self.start_horizontal, self.floor_horizontal),
            shrink(self.start_yaw, self.floor_yaw),
            shrink(self.start_vertical, self.floor_vertical),
        )
    }
}

/// Inclusive upper bounds on a fix's confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceThresholds {
    pub horizontal: f64,
    pub yaw: f64,
    pub vertical: f64,
}

impl Default for ConfidenceThresholds {
    fn default() -> Self {
        ConfidenceThresholds {
            horizontal: 2.0,
            yaw: 5.0,
            vertical: 3.0,
        }
    }
}

/// Noise and confidence parameters of the simulated phone.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub drift: DriftParams,
    pub reloc: RelocParams,
    pub ci: CiModel,
    pub thresholds: ConfidenceThresholds,
}

impl SensingConfig {
    pub fn noiseless() -> Self {
        SensingConfig {
            drift: DriftParams::noiseless(),
            reloc: RelocParams::exact(),
            ..SensingConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SensimError> {
        let bad = |what: &str| Err(SensimError::Config(what.to_string()));
        let d = &self.drift;
        let r = &self.reloc;
        if !(d.sigma_pos >= 0.0 && d.sigma_yaw >= 0.0) {
            return bad("drift sigmas must be non-negative");
        }
        if !(r.radius > 0.0 && r.sigma >= 0.0 && r.gate_sigmas > 0.0) {
            return bad("reloc radius and gate must be positive, sigma non-negative");
        }
        if !(0.0..=1.0).contains(&r.p_success) {
            return bad("reloc p_success must lie in [0, 1]");
        }
        if !(self.ci.tau > 0.0) {
            return bad("ci tau must be positive");
        }
        Ok(())
    }
}

pub fn world_frame() -> FrameId {
    FrameId::new("world")
}

const ODOMETRY_STREAM: u64 = 1;
const RELOC_STREAM: u64 = 2;
const GEO_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Ground truth plus the random streams that perturb what sensors report.
/// Odometry, relocalization and geospatial noise draw from independent
/// streams so that one kind of query never shifts the others.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub true_pose: Pose,
    pub anchor_truth: BTreeMap<AnchorId, Pose>,
    pub geo_origin: Option<GeoPose>,
    rng_seed: u64,
    odometry_rng: ChaCha8Rng,
    reloc_rng: ChaCha8Rng,
    geo_rng: ChaCha8Rng,
}

impl WorldState {
    pub fn new(seed: u64) -> Self {
        WorldState {
            true_pose: Pose::identity(world_frame()),
            anchor_truth: BTreeMap::new(),
            geo_origin: None,
            rng_seed: seed,
            odometry_rng: stream(seed, ODOMETRY_STREAM),
            reloc_rng: stream(seed, RELOC_STREAM),
            geo_rng: stream(seed, GEO_STREAM),
        }
    }

    pub fn with_geo_origin(mut self, origin: GeoPose) -> Self {
        self.geo_origin = Some(origin);
        self
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Moves the walker without any sensor seeing it (start of a new visit).
    pub fn place_walker(&mut self, pose: Pose) {
        self.true_pose = pose.with_frame(world_frame());
    }

    pub fn set_anchor_truth(&mut self, id: AnchorId, pose: Pose) {
        self.anchor_truth.insert(id, pose.with_frame(world_frame()));
    }
}

/// Straight-line motion after turning in place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    /// Meters walked along the new heading.
    pub distance: f64,
    /// Heading change before walking, degrees, clockwise positive.
    pub turn: f64,
}

impl Motion {
    pub fn forward(distance: f64) -> Self {
        Motion { distance, turn: 0.0 }
    }

    pub fn turn(turn: f64, distance: f64) -> Self {
        Motion { distance, turn }
    }

    fn as_pose(&self, turn_noise: f64, frame: &FrameId) -> Pose {
        compose(
            &Pose::from_yaw_deg(-(self.turn + turn_noise), frame.clone()),
            &Pose::from_translation(0.0, self.distance, 0.0, frame.clone()),
        )
    }
}

/// One phone tracking session. Its frame is anchored wherever the walker
/// stood when the session started.
#[derive(Debug, Clone)]
pub struct TrackingSession {
    pub session_frame: FrameId,
    pub estimated_pose: Pose,
    /// `estimated ∘ invert(ideal)`: the error the odometry has built up.
    pub accumulated_drift: Pose,
    pub drift_params: DriftParams,
    pub reloc_params: RelocParams,
    world_from_session: Pose,
}

impl TrackingSession {
    pub fn start(frame: FrameId, world: &WorldState, drift: DriftParams, reloc: RelocParams) -> Self {
        TrackingSession {
            estimated_pose: Pose::identity(frame.clone()),
            accumulated_drift: Pose::identity(frame.clone()),
            session_frame: frame,
            drift_params: drift,
            reloc_params: reloc,
            world_from_session: world.true_pose.clone(),
        }
    }

    /// Where a perfect tracker would place a world-frame pose in this session.
    fn to_session(&self, world_pose: &Pose) -> Pose {
        let mut p = compose(&invert(&self.world_from_session), world_pose);
        p.frame = self.session_frame.clone();
        p
    }

    /// The walker's true pose expressed in the session frame.
    pub fn ideal_pose(&self, world: &WorldState) -> Pose {
        self.to_session(&world.true_pose)
    }

    fn refresh_drift(&mut self, world: &WorldState) {
        let ideal = self.ideal_pose(world);
        let mut d = compose(&self.estimated_pose, &invert(&ideal));
        d.frame = self.session_frame.clone();
        self.accumulated_drift = d;
    }

    /// Horizontal distance between the estimate and the truth.
    pub fn position_error(&self, world: &WorldState) -> f64 {
        self.estimated_pose.horizontal_distance_to(&self.ideal_pose(world))
    }
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Advances the truth by `motion` and the estimate by `motion` plus drift.
pub fn step_odometry(
    session: &mut TrackingSession,
    world: &mut WorldState,
    motion: Motion,
) -> Result<Pose, SensimError> {
    if !(motion.distance >= 0.0) || !motion.distance.is_finite() || !motion.turn.is_finite() {
        return Err(SensimError::NegativeDistance(motion.distance));
    }
    world.true_pose = compose(&world.true_pose, &motion.as_pose(0.0, &world_frame()));

    let d = &session.drift_params;
    let scale = motion.distance.sqrt();
    let rng = &mut world.odometry_rng;
    let yaw_noise = normal(rng, d.sigma_yaw * scale);
    let ex = normal(rng, d.sigma_pos * scale);
    let ey = normal(rng, d.sigma_pos * scale);

    let mut est = compose(
        &session.estimated_pose,
        &motion.as_pose(yaw_noise, &session.session_frame),
    );
    est.position += Vector3::new(ex, ey, 0.0);
    session.estimated_pose = est;
    session.refresh_drift(world);
    Ok(session.estimated_pose.clone())
}

fn gated_offset(rng: &mut ChaCha8Rng, sigma: f64, gate_sigmas: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    loop {
        let v = Vector3::new(normal(rng, sigma), normal(rng, sigma), normal(rng, sigma));
        if v.norm() <= gate_sigmas * sigma {
            return v;
        }
    }
}

/// Tries to recognize `anchor` while looking around for `dt` seconds.
///
/// Out of range the call never succeeds. In range it succeeds with
/// probability `1 - (1 - p_success)^dt`, returns the anchor's pose in the
/// session frame offset by relocalization noise, and replaces the
/// session's accumulated drift with that same offset.
pub fn try_relocalize(
    session: &mut TrackingSession,
    world: &mut WorldState,
    anchor: &AnchorId,
    dt: f64,
) -> Option<Pose> {
    let truth = world.anchor_truth.get(anchor)?.clone();
    let r = session.reloc_params;
    if world.true_pose.distance_to(&truth) > r.radius {
        return None;
    }
    let p = if r.p_success >= 1.0 {
        1.0
    } else {
        1.0 - (1.0 - r.p_success).powf(dt.max(0.0))
    };
    let u: f64 = world.reloc_rng.random();
    if u >= p {
        return None;
    }
    let offset = gated_offset(&mut world.reloc_rng, r.sigma, r.gate_sigmas);
    let mut anchor_pose = session.to_session(&truth);
    anchor_pose.position += offset;

    let mut est = session.ideal_pose(world);
    est.position += offset;
    session.estimated_pose = est;
    session.refresh_drift(world);
    Some(anchor_pose)
}

/// Geospatial estimate of the walker's pose with confidence intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub geo: GeoPose,
    /// Seconds since geo-localization began.
    pub elapsed: f64,
}

/// Returns `None` when the world has no geographic reference.
pub fn geospatial_fix(
    _session: &TrackingSession,
    world: &mut WorldState,
    model: &CiModel,
    elapsed: f64,
) -> Option<GeoFix> {
    let origin = world.geo_origin.clone()?;
    let (ci_h, ci_yaw, ci_v) = model.at(elapsed);
    // intervals read as roughly two standard deviations
    let rng = &mut world.geo_rng;
    let mut noisy = world.true_pose.clone().with_frame(FrameId::geo_local());
    noisy.position += Vector3::new(
        normal(rng, ci_h / 2.0),
        normal(rng, ci_h / 2.0),
        normal(rng, ci_v / 2.0),
    );
    let mut geo = local_to_geo(&noisy, &origin).ok()?;
    geo.yaw = crate::geom::normalize_deg_360(geo.yaw + normal(rng, ci_yaw / 2.0));
    geo.ci_horizontal = ci_h;
    geo.ci_yaw = ci_yaw;
    geo.ci_vertical = ci_v;
    Some(GeoFix { geo, elapsed })
}

pub fn is_confident(fix: &GeoFix, thresholds: &ConfidenceThresholds) -> bool {
    fix.geo.ci_horizontal <= thresholds.horizontal
        && fix.geo.ci_yaw <= thresholds.yaw
        && fix.geo.ci_vertical <= thresholds.vertical
}

/// What mapping and navigation code may ask of a phone.
pub trait Sensors {
    fn frame(&self) -> &FrameId;
    fn estimated_pose(&self) -> Pose;
    fn step(&mut self, motion: Motion) -> Result<Pose, SensimError>;
    fn try_localize(&mut self, anchor: &AnchorId, dt: f64) -> Option<Pose>;
    /// Registers a new anchor (or path anchor) at the walker's current spot.
    fn host_anchor(&mut self, anchor: &AnchorId);
    fn geospatial_fix(&mut self, elapsed: f64) -> Option<GeoFix>;
    fn confidence_thresholds(&self) -> ConfidenceThresholds;
}

/// A [`TrackingSession`] bound to the world it observes.
pub struct SimulatedPhone<'w> {
    pub session: TrackingSession,
    pub world: &'w mut WorldState,
    pub ci: CiModel,
    pub thresholds: ConfidenceThresholds,
}

impl<'w> SimulatedPhone<'w> {
    /// Starts a fresh session where the walker currently stands.
    pub fn start(world: &'w mut WorldState, frame: FrameId, cfg: &SensingConfig) -> Self {
        let session = TrackingSession::start(frame, world, cfg.drift, cfg.reloc);
        SimulatedPhone {
            session,
            world,
            ci: cfg.ci,
            thresholds: cfg.thresholds,
        }
    }
}

impl Sensors for SimulatedPhone<'_> {
    fn frame(&self) -> &FrameId {
        &self.session.session_frame
    }

    fn estimated_pose(&self) -> Pose {
        self.session.estimated_pose.clone()
    }

    fn step(&mut self, motion: Motion) -> Result<Pose, SensimError> {
        step_odometry(&mut self.session, self.world, motion)
    }

    fn try_localize(&mut self, anchor: &AnchorId, dt: f64) -> Option<Pose> {
        try_relocalize(&mut self.session, self.world, anchor, dt)
    }

    fn host_anchor(&mut self, anchor: &AnchorId) {
        let here = self.world.true_pose.clone();
        self.world.set_anchor_truth(anchor.clone(), here);
    }

    fn geospatial_fix(&mut self, elapsed: f64) -> Option<GeoFix> {
        geospatial_fix(&self.session, self.world, &self.ci, elapsed)
    }

    fn confidence_thresholds(&self) -> ConfidenceThresholds {
        self.thresholds
    }
}
