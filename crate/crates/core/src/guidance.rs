//! Turn-by-turn guidance along a stitched route: keypoints from polyline
//! simplification, on-track cues, a haptic ramp near keypoints, spoken
//! instructions, and an on-demand "get directions" answer.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::geom::{bearing, normalize_deg_signed, Pose};
use crate::mapstore::BreadcrumbTrail;

pub const ARRIVAL_TEXT: &str = "You have arrived";
const FEET_PER_METER: f64 = 1.0 / 0.3048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("polyline has no extent to navigate along")]
    DegeneratePolyline,
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("unknown unit {0:?} (expected meters or feet)")]
    UnknownUnit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnKind {
    Straight,
    SlightLeft,
    Left,
    SharpLeft,
    SlightRight,
    Right,
    SharpRight,
    Arrive,
}

impl TurnKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TurnKind::Straight => "straight",
            TurnKind::SlightLeft => "slight-left",
            TurnKind::Left => "left",
            TurnKind::SharpLeft => "sharp-left",
            TurnKind::SlightRight => "slight-right",
            TurnKind::Right => "right",
            TurnKind::SharpRight => "sharp-right",
            TurnKind::Arrive => "arrive",
        }
    }

    /// Words used in spoken instructions, e.g. `slight left`.
    pub fn spoken(&self) -> &'static str {
        match self {
            TurnKind::SlightLeft => "slight left",
            TurnKind::SharpLeft => "sharp left",
            TurnKind::SlightRight => "slight right",
            TurnKind::SharpRight => "sharp right",
            other => other.as_str(),
        }
    }
}

impl fmt::Display for TurnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Heading change in degrees, clockwise positive, to a turn instruction.
/// Magnitudes below 30 are straight, below 60 slight, up to 120 a plain
/// turn and beyond that sharp. A full about-face counts as a right turn.
pub fn classify_turn(heading_change: f64) -> TurnKind {
    let d = normalize_deg_signed(heading_change);
    let m = d.abs();
    let right = d > 0.0;
    match (m, right) {
        (m, _) if m < 30.0 => TurnKind::Straight,
        (m, true) if m < 60.0 => TurnKind::SlightRight,
        (m, false) if m < 60.0 => TurnKind::SlightLeft,
        (m, true) if m <= 120.0 => TurnKind::Right,
        (m, false) if m <= 120.0 => TurnKind::Left,
        (_, true) => TurnKind::SharpRight,
        (_, false) => TurnKind::SharpLeft,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Meters,
    Feet,
}

impl FromStr for Units {
    type Err = GuidanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "meters" | "m" => Ok(Units::Meters),
            "feet" | "ft" => Ok(Units::Feet),
            other => Err(GuidanceError::UnknownUnit(other.to_string())),
        }
    }
}

impl Units {
    /// Whole-unit distance with the unit word, e.g. `20 meters`, `1 foot`.
    pub fn format(&self, meters: f64) -> String {
        let (value, one, many) = match self {
            Units::Meters => (meters, "meter", "meters"),
            Units::Feet => (meters * FEET_PER_METER, "foot", "feet"),
        };
        let n = value.round().max(0.0) as u64;
        format!("{n} {}", if n == 1 { one } else { many })
    }
}

/// `Turn left and proceed 20 meters`, `Continue straight and proceed 3 feet`.
pub fn instruction_text(turn: TurnKind, meters: f64, units: Units) -> String {
    match turn {
        TurnKind::Arrive => ARRIVAL_TEXT.to_string(),
        TurnKind::Straight => format!("Continue straight and proceed {}", units.format(meters)),
        kind => format!("Turn {} and proceed {}", kind.spoken(), units.format(meters)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: Vector2<f64>,
    pub turn: TurnKind,
    /// Meters along the route to the next keypoint; 0 at the destination.
    pub distance_to_next: f64,
}

fn point_segment_distance(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let u = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * u)).norm()
}

/// Ramer–Douglas–Peucker: indices of the vertices kept, first and last
/// included. Every dropped vertex lies within `epsilon` of the simplified
/// line.
pub fn simplify(points: &[Vector2<f64>], epsilon: f64) -> Vec<usize> {
    if points.len() < 3 {
        return (0..points.len()).collect();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        let (mut worst, mut worst_d) = (lo, 0.0);
        for i in lo + 1..hi {
            let d = point_segment_distance(points[i], points[lo], points[hi]);
            if d > worst_d {
                worst = i;
                worst_d = d;
            }
        }
        if worst_d > epsilon {
            keep[worst] = true;
            stack.push((lo, worst));
            stack.push((worst, hi));
        }
    }
    (0..points.len()).filter(|i| keep[*i]).collect()
}

/// Keypoints of a navigation polyline: each vertex surviving
/// simplification (other than the start) with the turn to make there, the
/// last one being the destination.
pub fn extract_keypoints(polyline: &BreadcrumbTrail, epsilon: f64) -> Result<Vec<Keypoint>, GuidanceError> {
    if !(epsilon > 0.0) {
        return Err(GuidanceError::InvalidEpsilon(epsilon));
    }
    let pts: Vec<Vector2<f64>> = polyline.points().iter().map(Pose::xy).collect();
    let mut along = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        along[i] = along[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in simplify(&pts, epsilon) {
        // drop vertices that coincide with the previous one
        if kept.last().is_none_or(|&k| (pts[i] - pts[k]).norm() > 1e-9) {
            kept.push(i);
        }
    }
    if kept.len() < 2 {
        return Err(GuidanceError::DegeneratePolyline);
    }
    let mut out = Vec::with_capacity(kept.len() - 1);
    for w in 1..kept.len() {
        let here = kept[w];
        if w + 1 == kept.len() {
            out.push(Keypoint {
                position: pts[here],
                turn: TurnKind::Arrive,
                distance_to_next: 0.0,
            });
            break;
        }
        let (prev, next) = (kept[w - 1], kept[w + 1]);
        let inbound = bearing(pts[prev], pts[here]).expect("distinct vertices");
        let outbound = bearing(pts[here], pts[next]).expect("distinct vertices");
        out.push(Keypoint {
            position: pts[here],
            turn: classify_turn(outbound - inbound),
            distance_to_next: along[next] - along[here],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Meters from a keypoint at which it counts as reached.
    pub arrival_radius: f64,
    /// Degrees of heading error still counted as on track.
    pub on_track_tolerance: f64,
    /// Minimum seconds between on-track cues.
    pub cue_interval: f64,
    /// Seconds off track before an off-track event.
    pub off_track_after: f64,
    /// Haptics start this many meters from a keypoint.
    pub haptic_range: f64,
    /// Simplification tolerance for keypoints, meters.
    pub epsilon: f64,
    pub units: Units,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            arrival_radius: 1.0,
            on_track_tolerance: 30.0,
            cue_interval: 2.0,
            off_track_after: 5.0,
            haptic_range: 5.0,
            epsilon: 0.5,
            units: Units::Meters,
        }
    }
}

/// 0 at `range` meters or more, rising linearly to 1 at `arrival_radius`.
pub fn haptic_level_with(distance: f64, arrival_radius: f64, range: f64) -> f64 {
    if distance >= range {
        0.0
    } else if distance <= arrival_radius {
        1.0
    } else {
        ((range - distance) / (range - arrival_radius)).clamp(0.0, 1.0)
    }
}

/// Haptic intensity with the default 5 m range and 1 m arrival radius.
pub fn haptic_level(distance: f64) -> f64 {
    let d = GuidanceConfig::default();
    haptic_level_with(distance, d.arrival_radius, d.haptic_range)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    OnTrackCue,
    Haptic,
    Instruction,
    Arrival,
    OffTrack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceEvent {
    /// Seconds since navigation started.
    pub t: f64,
    pub kind: EventKind,
    pub haptic_level: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
    /// Index of the keypoint being walked towards.
    pub keypoint: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distance_m: Option<f64>,
}

/// Events as line-delimited canonical records.
pub fn event_log(events: &[GuidanceEvent]) -> String {
    events
        .iter()
        .map(|e| canonical::to_line(e).expect("events always serialize") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceState {
    pub keypoints: Vec<Keypoint>,
    pub current_index: usize,
    pub config: GuidanceConfig,
    last_cue: Option<f64>,
    off_since: Option<f64>,
    off_reported: bool,
}

impl GuidanceState {
    pub fn new(keypoints: Vec<Keypoint>, config: GuidanceConfig) -> Self {
        GuidanceState {
            keypoints,
            current_index: 0,
            config,
            last_cue: None,
            off_since: None,
            off_reported: false,
        }
    }

    pub fn for_route(polyline: &BreadcrumbTrail, config: GuidanceConfig) -> Result<Self, GuidanceError> {
        Ok(GuidanceState::new(extract_keypoints(polyline, config.epsilon)?, config))
    }

    pub fn finished(&self) -> bool {
        self.current_index >= self.keypoints.len()
    }

    pub fn current(&self) -> Option<&Keypoint> {
        self.keypoints.get(self.current_index)
    }

    fn event(&self, t: f64, kind: EventKind, level: f64) -> GuidanceEvent {
        GuidanceEvent {
            t,
            kind,
            haptic_level: level,
            text: None,
            keypoint: self.current_index,
            distance_m: None,
        }
    }

    /// Reached the current keypoint: move on and say what to do next.
    fn advance(&mut self, t: f64) -> GuidanceEvent {
        let kp = self.keypoints[self.current_index].clone();
        self.current_index += 1;
        self.off_since = None;
        self.off_reported = false;
        let (kind, distance) = match kp.turn {
            TurnKind::Arrive => (EventKind::Arrival, None),
            _ => (EventKind::Instruction, Some(kp.distance_to_next)),
        };
        let mut ev = self.event(t, kind, 1.0);
        ev.text = Some(instruction_text(kp.turn, kp.distance_to_next, self.config.units));
        ev.distance_m = distance;
        ev
    }
}

/// Feeds the latest pose estimate (navigation frame) at time `t`.
pub fn guidance_update(state: &mut GuidanceState, pose: &Pose, t: f64) -> Vec<GuidanceEvent> {
    let Some(kp) = state.current().cloned() else {
        return Vec::new();
    };
    let cfg = state.config;
    let here = pose.xy();
    let distance = (kp.position - here).norm();
    if distance <= cfg.arrival_radius {
        return vec![state.advance(t)];
    }

    let mut events = Vec::new();
    let level = haptic_level_with(distance, cfg.arrival_radius, cfg.haptic_range);
    let toward = bearing(here, kp.position).expect("outside the arrival radius");
    let deviation = normalize_deg_signed(toward - pose.heading_deg());
    if deviation.abs() <= cfg.on_track_tolerance {
        state.off_since = None;
        state.off_reported = false;
        if state.last_cue.is_none_or(|last| t - last >= cfg.cue_interval) {
            state.last_cue = Some(t);
            let mut ev = state.event(t, EventKind::OnTrackCue, level);
            ev.distance_m = Some(distance);
            events.push(ev);
        }
    } else {
        let since = *state.off_since.get_or_insert(t);
        if t - since > cfg.off_track_after && !state.off_reported {
            state.off_reported = true;
            let mut ev = state.event(t, EventKind::OffTrack, level);
            ev.distance_m = Some(distance);
            events.push(ev);
        }
    }
    if level > 0.0 {
        let mut ev = state.event(t, EventKind::Haptic, level);
        ev.distance_m = Some(distance);
        events.push(ev);
    }
    events
}

/// Turn and distance from `pose` to the current keypoint, or `None` once
/// the route is finished.
pub fn directions(state: &GuidanceState, pose: &Pose) -> Option<(TurnKind, f64)> {
    let kp = state.current()?;
    let distance = (kp.position - pose.xy()).norm();
    let turn = match bearing(pose.xy(), kp.position) {
        Ok(b) => classify_turn(b - pose.heading_deg()),
        Err(_) => TurnKind::Straight,
    };
    Some((turn, distance))
}

/// The "Get Directions" answer. Standing on the current keypoint counts as
/// reaching it, so the answer is the instruction for the following leg.
pub fn get_directions(state: &mut GuidanceState, pose: &Pose, t: f64) -> String {
    let Some(kp) = state.current() else {
        return ARRIVAL_TEXT.to_string();
    };
    if (kp.position - pose.xy()).norm() <= state.config.arrival_radius {
        return state.advance(t).text.expect("advance always carries text");
    }
    let (turn, distance) = directions(state, pose).expect("route not finished");
    instruction_text(turn, distance, state.config.units)
}
