//! Mapping workflows: anchor creation from a timed scan, recording a
//! connection between two anchors (with an optional reverse walk), the
//! single-pass "walk and create" extension, and outdoor anchors gated on
//! geospatial confidence.
//!
//! Every workflow that edits a map does so only once it has fully
//! succeeded, so a failed or abandoned workflow leaves the map untouched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{normalize_deg_360, normalize_deg_signed, FrameId, Pose};
use crate::mapstore::{
    resample_trail, Anchor, AnchorId, ConnectionId, ConnectionRecord, MapError, MapGraph, ReverseRecord,
    DEFAULT_SPACING_M,
};
use crate::sensim::{is_confident, GeoFix, Motion, SensimError, Sensors};

pub const SWEEP_PROMPT: &str = "Perform a 360-degree sweep with your phone";
pub const STEP_BACK_PROMPT: &str = "Take a step back and do a second sweep";

/// Coaching prompt to show `t` seconds into an anchor scan.
pub fn prompt_at(t: f64) -> Option<&'static str> {
    if (0.0..1.0).contains(&t) {
        Some(SWEEP_PROMPT)
    } else if (15.0..16.0).contains(&t) {
        Some(STEP_BACK_PROMPT)
    } else {
        None
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkflowError {
    #[error("anchor scans need at least {required} s of data, got {actual:.1} s")]
    ScanTooShort { required: f64, actual: f64 },
    #[error("invalid scan: {0}")]
    InvalidScan(String),
    #[error("unknown anchor {0}")]
    UnknownAnchor(AnchorId),
    #[error("a connection needs two different anchors, got {0} twice")]
    SameAnchor(AnchorId),
    #[error("{event} is not allowed while {state:?}")]
    IllegalEvent { state: RecorderState, event: String },
    #[error("event time {t} is earlier than the previous event at {prev}")]
    TimeWentBackwards { t: f64, prev: f64 },
    #[error("could not localize start anchor {anchor} within {timeout} s")]
    StartLocalizationTimeout { anchor: AnchorId, timeout: f64 },
    #[error("connection incomplete: stopped before end anchor {0} localized")]
    IncompleteConnection(AnchorId),
    #[error("walk ended without a stop event while {0:?}")]
    EventsExhausted(RecorderState),
    #[error("no geospatial fix available here")]
    NoGeoFix,
    #[error("geospatial confidence not reached within {0} s")]
    GeoTimeout(f64),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Sensing(#[from] SensimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowConfig {
    /// Seconds of scanning the anchor service needs.
    pub min_scan_duration: f64,
    /// A path anchor is dropped after this many meters of walking.
    pub path_anchor_spacing: f64,
    /// Breadcrumb spacing of stored trails, meters.
    pub trail_spacing: f64,
    /// Seconds allowed for the start anchor to localize.
    pub start_timeout: f64,
    /// Seconds allowed for geospatial confidence.
    pub outdoor_timeout: f64,
    /// Seconds between geospatial polls.
    pub fix_interval: f64,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            min_scan_duration: 30.0,
            path_anchor_spacing: 10.0,
            trail_spacing: DEFAULT_SPACING_M,
            start_timeout: 60.0,
            outdoor_timeout: 120.0,
            fix_interval: 0.5,
        }
    }
}

/// Timed phone poses captured while scanning an anchor's surroundings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTrace {
    samples: Vec<ScanSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub t: f64,
    pub pose: Pose,
}

impl ScanTrace {
    pub fn new(samples: Vec<ScanSample>) -> Result<Self, WorkflowError> {
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || !s.pose.is_finite() {
                return Err(WorkflowError::InvalidScan(format!("sample {i} is not finite")));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(WorkflowError::InvalidScan(format!(
                "timestamps must increase strictly (sample {})",
                i + 1
            )));
        }
        Ok(ScanTrace { samples })
    }

    /// A scan lasting `duration` seconds that turns steadily through
    /// `sweep_deg` while drifting `baseline_m` sideways.
    pub fn sweep(duration: f64, sweep_deg: f64, baseline_m: f64) -> Self {
        let n = (duration * 2.0).ceil().max(1.0) as usize;
        let frame = FrameId::new("scan");
        let samples = (0..=n)
            .map(|k| {
                let u = k as f64 / n as f64;
                ScanSample {
                    t: duration * u,
                    pose: Pose::planar(baseline_m * u, 0.0, sweep_deg * u, frame.clone()),
                }
            })
            .collect();
        ScanTrace { samples }
    }

    pub fn samples(&self) -> &[ScanSample] {
        &self.samples
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Fraction of the 360 one-degree heading bins the phone pointed into,
    /// counting the bins swept between consecutive samples.
    pub fn angular_coverage(&self) -> f64 {
        let mut bins = [false; 360];
        let mut mark = |h: f64| bins[(normalize_deg_360(h).floor() as usize).min(359)] = true;
        for s in &self.samples {
            mark(s.pose.heading_deg());
        }
        for w in self.samples.windows(2) {
            let h0 = w[0].pose.heading_deg();
            let delta = normalize_deg_signed(w[1].pose.heading_deg() - h0);
            let steps = (delta.abs() / 0.5).ceil() as usize;
            for k in 1..steps {
                mark(h0 + delta * k as f64 / steps as f64);
            }
        }
        bins.iter().filter(|b| **b).count() as f64 / 360.0
    }

    /// Largest horizontal distance from the first sample, meters.
    pub fn baseline(&self) -> f64 {
        let Some(first) = self.samples.first() else {
            return 0.0;
        };
        self.samples
            .iter()
            .map(|s| s.pose.horizontal_distance_to(&first.pose))
            .fold(0.0, f64::max)
    }

    /// Mean of angular coverage and baseline (capped at 1 m), in `[0, 1]`.
    pub fn quality(&self) -> f64 {
        (self.angular_coverage() + self.baseline().min(1.0)) / 2.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorMeta {
    pub name: String,
    pub notes: String,
    pub created_at: u64,
}

impl AnchorMeta {
    pub fn named(name: impl Into<String>) -> Self {
        AnchorMeta {
            name: name.into(),
            ..AnchorMeta::default()
        }
    }
}

/// Hosts a new indoor anchor where the phone stands. The returned anchor
/// still has to be added to `map`; its id is the first free one there.
pub fn create_anchor<S: Sensors>(
    sensors: &mut S,
    map: &MapGraph,
    scan: &ScanTrace,
    meta: &AnchorMeta,
    cfg: &WorkflowConfig,
) -> Result<Anchor, WorkflowError> {
    let id = map.next_anchor_id();
    create_anchor_with_id(sensors, id, scan, meta, cfg)
}

fn create_anchor_with_id<S: Sensors>(
    sensors: &mut S,
    id: AnchorId,
    scan: &ScanTrace,
    meta: &AnchorMeta,
    cfg: &WorkflowConfig,
) -> Result<Anchor, WorkflowError> {
    check_scan(scan, cfg)?;
    sensors.host_anchor(&id);
    let frame = FrameId::new(format!("{}#{}", sensors.frame(), id));
    Ok(Anchor::indoor(id, frame, scan.quality(), meta.name.clone())
        .with_notes(meta.notes.clone())
        .with_created_at(meta.created_at))
}

fn check_scan(scan: &ScanTrace, cfg: &WorkflowConfig) -> Result<(), WorkflowError> {
    let actual = scan.duration();
    if actual < cfg.min_scan_duration {
        return Err(WorkflowError::ScanTooShort {
            required: cfg.min_scan_duration,
            actual,
        });
    }
    Ok(())
}

/// Polls geospatial fixes every `fix_interval` seconds until one is
/// confident.
pub fn wait_for_confident_fix<S: Sensors>(sensors: &mut S, cfg: &WorkflowConfig) -> Result<GeoFix, WorkflowError> {
    let thresholds = sensors.confidence_thresholds();
    for k in 0.. {
        let t = k as f64 * cfg.fix_interval;
        if t > cfg.outdoor_timeout {
            break;
        }
        let fix = sensors.geospatial_fix(t).ok_or(WorkflowError::NoGeoFix)?;
        if is_confident(&fix, &thresholds) {
            return Ok(fix);
        }
    }
    Err(WorkflowError::GeoTimeout(cfg.outdoor_timeout))
}

/// Geo-localizes, then scans the local map; the anchor carries both.
pub fn create_outdoor_anchor<S: Sensors>(
    sensors: &mut S,
    map: &MapGraph,
    scan: &ScanTrace,
    meta: &AnchorMeta,
    cfg: &WorkflowConfig,
) -> Result<Anchor, WorkflowError> {
    check_scan(scan, cfg)?;
    let fix = wait_for_confident_fix(sensors, cfg)?;
    let indoor = create_anchor(sensors, map, scan, meta, cfg)?;
    let anchor = Anchor::outdoor(indoor.id, indoor.frame, fix.geo, indoor.quality, indoor.name)
        .with_notes(indoor.notes)
        .with_created_at(indoor.created_at);
    anchor.validate()?;
    Ok(anchor)
}

/// One timestamped user action during a recorded walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkEvent {
    /// Seconds since the workflow started.
    pub t: f64,
    #[serde(flatten)]
    pub action: WalkAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum WalkAction {
    /// Look around in place.
    Pan,
    /// Turn by `turn` degrees clockwise, then walk `distance` meters.
    Move {
        distance: f64,
        turn: f64,
    },
    Stop,
}

impl WalkEvent {
    pub fn pan(t: f64) -> Self {
        WalkEvent {
            t,
            action: WalkAction::Pan,
        }
    }

    pub fn walk(t: f64, distance: f64, turn: f64) -> Self {
        WalkEvent {
            t,
            action: WalkAction::Move { distance, turn },
        }
    }

    pub fn stop(t: f64) -> Self {
        WalkEvent {
            t,
            action: WalkAction::Stop,
        }
    }

    fn name(&self) -> &'static str {
        match self.action {
            WalkAction::Pan => "pan",
            WalkAction::Move { .. } => "move",
            WalkAction::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecorderState {
    SelectStart,
    LocalizingStart,
    Recording,
    EndLocalized,
    Done,
    AwaitReverseDecision,
}

/// How a leg learns where it ends.
#[derive(Debug, Clone)]
enum EndRule {
    /// Wait for an existing anchor to relocalize.
    Localize(AnchorId),
    /// Host a brand-new anchor wherever the walker stops.
    HostAtStop(AnchorId),
}

#[derive(Debug, Clone)]
struct LegResult {
    trail: Vec<Pose>,
    start_pose: Pose,
    end_pose: Pose,
    path_anchor_ids: Vec<String>,
}

/// One walk from a start anchor to an end: localize, record, localize.
#[derive(Debug, Clone)]
struct Leg {
    start: AnchorId,
    end: EndRule,
    path_anchor_prefix: String,
    state: RecorderState,
    clock: f64,
    raw: Vec<Pose>,
    start_pose: Option<Pose>,
    end_pose: Option<Pose>,
    path_anchor_ids: Vec<String>,
    since_path_anchor: f64,
}

impl Leg {
    fn new(start: AnchorId, end: EndRule, path_anchor_prefix: String) -> Self {
        Leg {
            start,
            end,
            path_anchor_prefix,
            state: RecorderState::LocalizingStart,
            clock: 0.0,
            raw: Vec::new(),
            start_pose: None,
            end_pose: None,
            path_anchor_ids: Vec::new(),
            since_path_anchor: 0.0,
        }
    }

    fn illegal(&self, ev: &WalkEvent) -> WorkflowError {
        WorkflowError::IllegalEvent {
            state: self.state,
            event: ev.name().to_string(),
        }
    }

    fn push_crumb(&mut self, p: Pose) {
        if self.raw.last() != Some(&p) {
            self.raw.push(p);
        }
    }

    /// Advances the leg by one event. Returns the finished leg on stop.
    fn feed<S: Sensors>(
        &mut self,
        sensors: &mut S,
        ev: &WalkEvent,
        cfg: &WorkflowConfig,
    ) -> Result<Option<LegResult>, WorkflowError> {
        if !ev.t.is_finite() || ev.t < self.clock {
            return Err(WorkflowError::TimeWentBackwards {
                t: ev.t,
                prev: self.clock,
            });
        }
        let dt = ev.t - self.clock;
        self.clock = ev.t;
        match (self.state, ev.action) {
            (RecorderState::LocalizingStart, WalkAction::Pan) => {
                if let Some(pose) = sensors.try_localize(&self.start, dt) {
                    self.start_pose = Some(pose);
                    self.state = RecorderState::Recording;
                    self.push_crumb(sensors.estimated_pose());
                } else if ev.t >= cfg.start_timeout {
                    return Err(WorkflowError::StartLocalizationTimeout {
                        anchor: self.start.clone(),
                        timeout: cfg.start_timeout,
                    });
                }
                Ok(None)
            }
            (RecorderState::Recording | RecorderState::EndLocalized, WalkAction::Pan) => {
                self.look_for_end(sensors, dt);
                self.push_crumb(sensors.estimated_pose());
                Ok(None)
            }
            (RecorderState::Recording | RecorderState::EndLocalized, WalkAction::Move { distance, turn }) => {
                sensors.step(Motion { distance, turn })?;
                self.since_path_anchor += distance;
                while self.since_path_anchor >= cfg.path_anchor_spacing - 1e-9 {
                    self.since_path_anchor -= cfg.path_anchor_spacing;
                    let id = format!("{}{}", self.path_anchor_prefix, self.path_anchor_ids.len() + 1);
                    sensors.host_anchor(&AnchorId::new(id.clone()));
                    self.path_anchor_ids.push(id);
                }
                self.look_for_end(sensors, dt);
                self.push_crumb(sensors.estimated_pose());
                Ok(None)
            }
            (RecorderState::Recording, WalkAction::Stop) => match self.end.clone() {
                EndRule::Localize(end) => Err(WorkflowError::IncompleteConnection(end)),
                EndRule::HostAtStop(end) => {
                    sensors.host_anchor(&end);
                    self.end_pose = Some(sensors.estimated_pose());
                    self.finish()
                }
            },
            (RecorderState::EndLocalized, WalkAction::Stop) => self.finish(),
            _ => Err(self.illegal(ev)),
        }
    }

    fn look_for_end<S: Sensors>(&mut self, sensors: &mut S, dt: f64) {
        if self.state != RecorderState::Recording {
            return;
        }
        if let EndRule::Localize(end) = &self.end {
            if let Some(pose) = sensors.try_localize(end, dt) {
                self.end_pose = Some(pose);
                self.state = RecorderState::EndLocalized;
            }
        }
    }

    fn finish(&mut self) -> Result<Option<LegResult>, WorkflowError> {
        self.state = RecorderState::Done;
        let mut trail = self.raw.clone();
        if trail.len() == 1 {
            trail.push(trail[0].clone());
        }
        Ok(Some(LegResult {
            trail,
            start_pose: self.start_pose.clone().expect("recording implies a start pose"),
            end_pose: self.end_pose.clone().expect("finishing implies an end pose"),
            path_anchor_ids: self.path_anchor_ids.clone(),
        }))
    }
}

/// The connection-recording state machine.
///
/// `SelectStart → LocalizingStart → Recording → EndLocalized → Done`, where
/// `Done` becomes `AwaitReverseDecision` when nothing in the map covers
/// walking back from the end anchor to the start anchor yet. An error
/// leaves the recorder unusable; start a new one.
#[derive(Debug, Clone)]
pub struct ConnectionRecorder {
    cfg: WorkflowConfig,
    state: RecorderState,
    connection_id: Option<ConnectionId>,
    from: Option<AnchorId>,
    to: Option<AnchorId>,
    reverse_exists: bool,
    leg: Option<Leg>,
    record: Option<ConnectionRecord>,
    failed: bool,
}

impl ConnectionRecorder {
    pub fn new(cfg: WorkflowConfig) -> Self {
        ConnectionRecorder {
            cfg,
            state: RecorderState::SelectStart,
            connection_id: None,
            from: None,
            to: None,
            reverse_exists: false,
            leg: None,
            record: None,
            failed: false,
        }
    }

    pub fn state(&self) -> RecorderState {
        self.state
    }

    /// The finished record, once the walk has stopped successfully.
    pub fn record(&self) -> Option<&ConnectionRecord> {
        self.record.as_ref()
    }

    pub fn connection_id(&self) -> Option<&ConnectionId> {
        self.connection_id.as_ref()
    }

    /// Picks the anchors to connect; the user then pans at `from`.
    pub fn select(&mut self, map: &MapGraph, from: &AnchorId, to: &AnchorId) -> Result<(), WorkflowError> {
        self.select_inner(map, from, EndRule::Localize(to.clone()))
    }

    fn select_inner(&mut self, map: &MapGraph, from: &AnchorId, end: EndRule) -> Result<(), WorkflowError> {
        if self.state != RecorderState::SelectStart {
            return Err(WorkflowError::IllegalEvent {
                state: self.state,
                event: "select".into(),
            });
        }
        let to = match &end {
            EndRule::Localize(to) => {
                if map.anchor(to).is_none() {
                    return Err(WorkflowError::UnknownAnchor(to.clone()));
                }
                to.clone()
            }
            EndRule::HostAtStop(to) => to.clone(),
        };
        if map.anchor(from).is_none() {
            return Err(WorkflowError::UnknownAnchor(from.clone()));
        }
        if *from == to {
            return Err(WorkflowError::SameAnchor(to));
        }
        let cid = map.next_connection_id();
        self.reverse_exists = map.has_recorded_walk(&to, from);
        self.leg = Some(Leg::new(from.clone(), end, format!("{cid}-p")));
        self.connection_id = Some(cid);
        self.from = Some(from.clone());
        self.to = Some(to);
        self.state = RecorderState::LocalizingStart;
        Ok(())
    }

    /// Processes one walk event.
    pub fn feed<S: Sensors>(&mut self, sensors: &mut S, ev: &WalkEvent) -> Result<RecorderState, WorkflowError> {
        if self.failed {
            return Err(WorkflowError::IllegalEvent {
                state: self.state,
                event: format!("{} after a failure", ev.name()),
            });
        }
        let Some(leg) = self.leg.as_mut().filter(|_| {
            matches!(
                self.state,
                RecorderState::LocalizingStart | RecorderState::Recording | RecorderState::EndLocalized
            )
        }) else {
            return Err(WorkflowError::IllegalEvent {
                state: self.state,
                event: ev.name().to_string(),
            });
        };
        let outcome = leg.feed(sensors, ev, &self.cfg);
        self.state = leg.state;
        match outcome {
            Err(e) => {
                self.failed = true;
                Err(e)
            }
            Ok(None) => Ok(self.state),
            Ok(Some(done)) => match self.build_record(done) {
                Ok(rec) => {
                    self.record = Some(rec);
                    self.state = if self.reverse_exists {
                        RecorderState::Done
                    } else {
                        RecorderState::AwaitReverseDecision
                    };
                    Ok(self.state)
                }
                Err(e) => {
                    self.failed = true;
                    Err(e)
                }
            },
        }
    }

    fn build_record(&self, leg: LegResult) -> Result<ConnectionRecord, WorkflowError> {
        Ok(ConnectionRecord {
            id: self.connection_id.clone().expect("selected"),
            from_anchor: self.from.clone().expect("selected"),
            to_anchor: self.to.clone().expect("selected"),
            forward_trail: resample_trail(&leg.trail, self.cfg.trail_spacing)?,
            reverse: None,
            path_anchor_ids: leg.path_anchor_ids,
            from_pose_in_trail_frame: leg.start_pose,
            to_pose_in_trail_frame: leg.end_pose,
        })
    }

    /// Records the walk back from the end anchor and attaches it to the
    /// already committed connection. On failure the map is unchanged and
    /// the decision stays open.
    pub fn record_reverse<S: Sensors>(
        &mut self,
        sensors: &mut S,
        map: &mut MapGraph,
        events: &[WalkEvent],
    ) -> Result<(), WorkflowError> {
        if self.state != RecorderState::AwaitReverseDecision {
            return Err(WorkflowError::IllegalEvent {
                state: self.state,
                event: "record reverse".into(),
            });
        }
        let cid = self.connection_id.clone().expect("selected");
        let (from, to) = (self.from.clone().expect("selected"), self.to.clone().expect("selected"));
        let mut leg = Leg::new(to, EndRule::Localize(from), format!("{cid}-r"));
        let mut done = None;
        for ev in events {
            if let Some(r) = leg.feed(sensors, ev, &self.cfg)? {
                done = Some(r);
                break;
            }
        }
        let done = done.ok_or(WorkflowError::EventsExhausted(leg.state))?;
        let rev = ReverseRecord {
            trail: resample_trail(&done.trail, self.cfg.trail_spacing)?,
            start_pose_in_trail_frame: done.start_pose,
            end_pose_in_trail_frame: done.end_pose,
            path_anchor_ids: done.path_anchor_ids,
        };
        map.set_reverse_trail(&cid, rev)?;
        self.state = RecorderState::Done;
        Ok(())
    }

    /// Leaves the reverse walk unrecorded; reverse traversals will follow
    /// the forward trail backwards.
    pub fn decline_reverse(&mut self) -> Result<(), WorkflowError> {
        if self.state != RecorderState::AwaitReverseDecision {
            return Err(WorkflowError::IllegalEvent {
                state: self.state,
                event: "decline reverse".into(),
            });
        }
        self.state = RecorderState::Done;
        Ok(())
    }
}

fn run_events<S: Sensors>(
    recorder: &mut ConnectionRecorder,
    sensors: &mut S,
    events: &[WalkEvent],
) -> Result<ConnectionRecord, WorkflowError> {
    for ev in events {
        recorder.feed(sensors, ev)?;
        if let Some(rec) = recorder.record() {
            return Ok(rec.clone());
        }
    }
    Err(match recorder.state() {
        RecorderState::Recording => WorkflowError::IncompleteConnection(recorder.to.clone().expect("selected")),
        s => WorkflowError::EventsExhausted(s),
    })
}

/// Drives a selected recorder over `events` and commits the connection.
/// Events after the stop are ignored.
pub fn connect_anchors<S: Sensors>(
    recorder: &mut ConnectionRecorder,
    sensors: &mut S,
    map: &mut MapGraph,
    events: &[WalkEvent],
) -> Result<ConnectionId, WorkflowError> {
    let rec = run_events(recorder, sensors, events)?;
    Ok(map.add_connection(rec)?)
}

/// Walks out from an existing anchor and creates a new anchor where the
/// walk stops, connecting the two in one pass. Equivalent to creating the
/// anchor at the stopping point and then recording the connection, and
/// all-or-nothing like both.
pub fn streamlined_extend<S: Sensors>(
    sensors: &mut S,
    map: &mut MapGraph,
    from: &AnchorId,
    events: &[WalkEvent],
    end_scan: &ScanTrace,
    meta: &AnchorMeta,
    cfg: &WorkflowConfig,
) -> Result<(AnchorId, ConnectionId), WorkflowError> {
    check_scan(end_scan, cfg)?;
    let new_id = map.next_anchor_id();
    let mut recorder = ConnectionRecorder::new(*cfg);
    recorder.select_inner(map, from, EndRule::HostAtStop(new_id.clone()))?;
    let rec = run_events(&mut recorder, sensors, events)?;
    let anchor = create_anchor_with_id(sensors, new_id.clone(), end_scan, meta, cfg)?;

    let mut next = map.clone();
    next.add_anchor(anchor)?;
    let cid = next.add_connection(rec)?;
    *map = next;
    Ok((new_id, cid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapstore::serialize;
    use crate::sensim::{world_frame, CiModel, SensingConfig, SimulatedPhone, WorldState};

    fn straight_walk(meters: usize, start_t: f64) -> Vec<WalkEvent> {
        let mut ev = vec![WalkEvent::pan(start_t)];
        for i in 0..meters {
            ev.push(WalkEvent::walk(start_t + 1.0 + i as f64, 1.0, 0.0));
        }
        ev.push(WalkEvent::stop(start_t + 1.0 + meters as f64));
        ev
    }

    /// Map with anchors at world (0,0) and (0,20).
    fn two_anchor_world(cfg: &SensingConfig, seed: u64) -> (MapGraph, WorldState) {
        let mut world = WorldState::new(seed);
        let mut map = MapGraph::new();
        let scan = ScanTrace::sweep(30.0, 360.0, 1.0);
        for (y, name) in [(0.0, "A"), (20.0, "B")] {
            world.place_walker(Pose::from_translation(0.0, y, 0.0, world_frame()));
            let mut phone = SimulatedPhone::start(&mut world, FrameId::new(format!("setup-{name}")), cfg);
            let a = create_anchor(
                &mut phone,
                &map,
                &scan,
                &AnchorMeta::named(name),
                &WorkflowConfig::default(),
            )
            .unwrap();
            map.add_anchor(a).unwrap();
        }
        world.place_walker(Pose::identity(world_frame()));
        (map, world)
    }

    #[test]
    fn prompt_schedule() {
        assert_eq!(prompt_at(0.0), Some(SWEEP_PROMPT));
        assert_eq!(prompt_at(0.99), Some(SWEEP_PROMPT));
        assert_eq!(prompt_at(15.0), Some(STEP_BACK_PROMPT));
        assert_eq!(prompt_at(7.0), None);
        assert_eq!(prompt_at(16.0), None);
    }

    #[test]
    fn scan_quality_extremes() {
        assert_eq!(ScanTrace::sweep(30.0, 360.0, 1.0).quality(), 1.0);
        assert_eq!(ScanTrace::sweep(30.0, 0.0, 0.0).angular_coverage(), 1.0 / 360.0);
        let still = ScanTrace::new(vec![
            ScanSample {
                t: 0.0,
                pose: Pose::identity(FrameId::new("s")),
            },
            ScanSample {
                t: 30.0,
                pose: Pose::identity(FrameId::new("s")),
            },
        ])
        .unwrap();
        assert!(still.quality() < 0.01);
        let mut prev = 0.0;
        for deg in (0..=360).step_by(30) {
            let q = ScanTrace::sweep(30.0, deg as f64, 0.4).quality();
            assert!(q >= prev);
            prev = q;
        }
        assert!(ScanTrace::new(vec![
            ScanSample {
                t: 1.0,
                pose: Pose::identity(FrameId::new("s"))
            },
            ScanSample {
                t: 1.0,
                pose: Pose::identity(FrameId::new("s"))
            },
        ])
        .is_err());
    }

    #[test]
    fn short_scan_rejected() {
        let cfg = SensingConfig::noiseless();
        let mut world = WorldState::new(1);
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("s"), &cfg);
        let map = MapGraph::new();
        let err = create_anchor(
            &mut phone,
            &map,
            &ScanTrace::sweep(29.0, 360.0, 1.0),
            &AnchorMeta::named("x"),
            &WorkflowConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("30 s"), "{err}");
        let a = create_anchor(
            &mut phone,
            &map,
            &ScanTrace::sweep(30.0, 360.0, 1.0),
            &AnchorMeta::named("x"),
            &WorkflowConfig::default(),
        )
        .unwrap();
        assert_eq!(a.quality, 1.0);
        assert_eq!(a.reference_pose, Pose::identity(a.frame.clone()));
    }

    #[test]
    fn noiseless_twenty_meter_connection() {
        let cfg = SensingConfig::noiseless();
        let (mut map, mut world) = two_anchor_world(&cfg, 1);
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("walk"), &cfg);
        let mut rec = ConnectionRecorder::new(WorkflowConfig::default());
        rec.select(&map, &"a001".into(), &"a002".into()).unwrap();
        assert_eq!(rec.state(), RecorderState::LocalizingStart);
        let cid = connect_anchors(&mut rec, &mut phone, &mut map, &straight_walk(20, 0.0)).unwrap();
        let c = map.connection(&cid).unwrap();
        assert!((c.length - 20.0).abs() <= 0.1, "{}", c.length);
        assert_eq!(c.path_anchor_ids, vec!["c001-p1", "c001-p2"]);
        assert_eq!(rec.state(), RecorderState::AwaitReverseDecision);
        assert!(
            c.to_pose_in_trail_frame
                .distance_to(&Pose::from_translation(0.0, 20.0, 0.0, FrameId::new("walk")))
                < 1e-9
        );
        assert!(world.anchor_truth.contains_key(&AnchorId::new("c001-p2")));
    }

    #[test]
    fn stop_before_end_localizes_leaves_map() {
        let cfg = SensingConfig::noiseless();
        let (mut map, mut world) = two_anchor_world(&cfg, 1);
        let before = serialize(&map).unwrap();
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("walk"), &cfg);
        let mut rec = ConnectionRecorder::new(WorkflowConfig::default());
        rec.select(&map, &"a001".into(), &"a002".into()).unwrap();
        let err = connect_anchors(&mut rec, &mut phone, &mut map, &straight_walk(5, 0.0)).unwrap_err();
        assert!(matches!(err, WorkflowError::IncompleteConnection(_)), "{err}");
        assert_eq!(serialize(&map).unwrap(), before);
        assert!(rec.feed(&mut phone, &WalkEvent::pan(100.0)).is_err());
    }

    #[test]
    fn illegal_transitions() {
        let cfg = SensingConfig::noiseless();
        let (map, mut world) = two_anchor_world(&cfg, 1);
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("walk"), &cfg);
        let mut rec = ConnectionRecorder::new(WorkflowConfig::default());
        assert!(rec.feed(&mut phone, &WalkEvent::pan(0.0)).is_err());
        assert!(matches!(
            rec.select(&map, &"a001".into(), &"a001".into()),
            Err(WorkflowError::SameAnchor(_))
        ));
        assert!(matches!(
            rec.select(&map, &"a001".into(), &"zzz".into()),
            Err(WorkflowError::UnknownAnchor(_))
        ));
        rec.select(&map, &"a001".into(), &"a002".into()).unwrap();
        let err = rec.feed(&mut phone, &WalkEvent::walk(0.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(
            err,
            WorkflowError::IllegalEvent {
                state: RecorderState::LocalizingStart,
                ..
            }
        ));
    }

    #[test]
    fn start_localization_timeout() {
        let cfg = SensingConfig::noiseless();
        let (map, mut world) = two_anchor_world(&cfg, 1);
        world.place_walker(Pose::from_translation(50.0, 0.0, 0.0, world_frame()));
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("walk"), &cfg);
        let mut rec = ConnectionRecorder::new(WorkflowConfig::default());
        rec.select(&map, &"a001".into(), &"a002".into()).unwrap();
        let mut last = Ok(RecorderState::LocalizingStart);
        for t in 0..=60 {
            last = rec.feed(&mut phone, &WalkEvent::pan(t as f64));
            if last.is_err() {
                break;
            }
        }
        assert!(
            matches!(last, Err(WorkflowError::StartLocalizationTimeout { .. })),
            "{last:?}"
        );
    }

    #[test]
    fn reverse_recording_and_decline() {
        let cfg = SensingConfig::noiseless();
        let (mut map, mut world) = two_anchor_world(&cfg, 1);
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("walk"), &cfg);
        let mut rec = ConnectionRecorder::new(WorkflowConfig::default());
        rec.select(&map, &"a001".into(), &"a002".into()).unwrap();
        let cid = connect_anchors(&mut rec, &mut phone, &mut map, &straight_walk(20, 0.0)).unwrap();
        // at B facing away from A: pan, turn around, walk back
        let mut events = straight_walk(20, 30.0);
        events[1] = WalkEvent::walk(31.0, 1.0, 180.0);
        rec.record_reverse(&mut phone, &mut map, &events).unwrap();
        assert_eq!(rec.state(), RecorderState::Done);
        let r = map.connection(&cid).unwrap().reverse_trail.clone().unwrap();
        assert!((r.length - 20.0).abs() < 0.1, "{}", r.length);
        assert!(rec.decline_reverse().is_err());

        assert!(map.has_recorded_walk(&"a002".into(), &"a001".into()));
        let mut rec2 = ConnectionRecorder::new(WorkflowConfig::default());
        rec2.select(&map, &"a001".into(), &"a002".into()).unwrap();
        world.place_walker(Pose::identity(world_frame()));
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("again"), &cfg);
        connect_anchors(&mut rec2, &mut phone, &mut map, &straight_walk(20, 0.0)).unwrap();
        assert_eq!(rec2.state(), RecorderState::Done);
    }

    #[test]
    fn streamlined_extend_adds_one_of_each() {
        let cfg = SensingConfig::noiseless();
        let (mut map, mut world) = two_anchor_world(&cfg, 1);
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("walk"), &cfg);
        let wcfg = WorkflowConfig::default();
        let before = serialize(&map).unwrap();
        let short = ScanTrace::sweep(10.0, 360.0, 1.0);
        assert!(streamlined_extend(
            &mut phone,
            &mut map,
            &"a001".into(),
            &straight_walk(8, 0.0),
            &short,
            &AnchorMeta::named("C"),
            &wcfg
        )
        .is_err());
        assert_eq!(serialize(&map).unwrap(), before);
        let scan = ScanTrace::sweep(30.0, 360.0, 1.0);
        let (aid, cid) = streamlined_extend(
            &mut phone,
            &mut map,
            &"a001".into(),
            &straight_walk(8, 0.0),
            &scan,
            &AnchorMeta::named("C"),
            &wcfg,
        )
        .unwrap();
        assert_eq!((aid.as_str(), cid.as_str()), ("a003", "c001"));
        assert_eq!((map.anchors().len(), map.connections().len()), (3, 1));
    }

    #[test]
    fn outdoor_anchor_waits_for_confidence() {
        let cfg = SensingConfig::noiseless();
        let origin = crate::geom::GeoPose::new(42.36, -71.09, 10.0, 0.0).unwrap();
        let mut world = WorldState::new(8).with_geo_origin(origin);
        let wcfg = WorkflowConfig::default();
        let map = MapGraph::new();
        let scan = ScanTrace::sweep(30.0, 360.0, 1.0);
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new("out"), &cfg);
        let fix = wait_for_confident_fix(&mut phone, &wcfg).unwrap();
        let analytic = 5.0 * 9f64.ln();
        assert!(
            fix.elapsed >= analytic && fix.elapsed - analytic <= wcfg.fix_interval,
            "{}",
            fix.elapsed
        );
        let a = create_outdoor_anchor(&mut phone, &map, &scan, &AnchorMeta::named("gate"), &wcfg).unwrap();
        assert!(a.geo.is_some());
        assert_eq!(a.kind, crate::mapstore::AnchorKind::Outdoor);

        phone.ci = CiModel {
            start_horizontal: 1.5,
            start_yaw: 3.0,
            start_vertical: 2.0,
            ..CiModel::default()
        };
        assert_eq!(wait_for_confident_fix(&mut phone, &wcfg).unwrap().elapsed, 0.0);
        phone.ci = CiModel {
            tau: 1e9,
            ..CiModel::default()
        };
        assert!(matches!(
            wait_for_confident_fix(&mut phone, &wcfg),
            Err(WorkflowError::GeoTimeout(_))
        ));
    }

    #[test]
    fn walk_event_serde() {
        let ev = WalkEvent::walk(1.5, 2.0, -90.0);
        let s = serde_json::to_string(&ev).unwrap();
        assert_eq!(serde_json::from_str::<WalkEvent>(&s).unwrap(), ev);
        assert_eq!(
            serde_json::from_str::<WalkEvent>(r#"{"t": 3, "action": "stop"}"#).unwrap(),
            WalkEvent::stop(3.0)
        );
    }
}
