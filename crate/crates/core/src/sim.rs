//! Seeded end-to-end simulation. Synthetic sites are mapped through the
//! real workflows with simulated sensing, then a scripted walker navigates
//! between anchors using only guidance output and its own pose estimate.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::Vector2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{bearing, compose, invert, normalize_deg_signed, relative_transform, FrameId, GeoPose, Pose};
use crate::guidance::{guidance_update, GuidanceConfig, GuidanceEvent, GuidanceState};
use crate::mapstore::{AnchorId, BreadcrumbTrail, ConnectionId, Direction, MapError, MapGraph};
use crate::routing::{shortest_path, stitch_route, Alignments, RoutingError};
use crate::sensim::{world_frame, Motion, SensimError, SensingConfig, Sensors, SimulatedPhone, WorldState};
use crate::workflows::{
    connect_anchors, create_anchor, create_outdoor_anchor, AnchorMeta, ConnectionRecorder, RecorderState, ScanTrace,
    WalkEvent, WorkflowConfig, WorkflowError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("while mapping {what}: {source}")]
    Mapping { what: String, source: WorkflowError },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Sensing(#[from] SensimError),
}

/// Independent seed for one purpose (`tag`) and one item (`index`).
pub fn derive_seed(seed: u64, tag: u32, index: u32) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((u64::from(tag) << 32) | u64::from(index));
    r.next_u64()
}

const TAG_GENERATE: u32 = 1;
const TAG_SCENARIOS: u32 = 2;
const TAG_RUN: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub min_anchors: usize,
    pub max_anchors: usize,
    /// Side of the square site, meters.
    pub area: f64,
    pub min_separation: f64,
    /// Connections beyond a spanning tree, at most.
    pub max_extra_connections: usize,
    /// Chance that a connection is walked as an L instead of straight.
    pub l_shape_probability: f64,
    pub outdoor_probability: f64,
    pub reverse_probability: f64,
    /// Geographic position of the site's south-west corner.
    pub origin: GeoPose,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            min_anchors: 3,
            max_anchors: 8,
            area: 60.0,
            min_separation: 8.0,
            max_extra_connections: 3,
            l_shape_probability: 0.5,
            outdoor_probability: 0.3,
            reverse_probability: 0.3,
            origin: GeoPose::new(42.3601, -71.0942, 5.0, 0.0).expect("valid default origin"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerConfig {
    /// Longest single step, meters.
    pub step: f64,
    /// Meters per second.
    pub speed: f64,
    /// Seconds per look-around while localizing.
    pub pan_interval: f64,
    /// Seconds the walker keeps panning to localize an anchor.
    pub localize_timeout: f64,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        WalkerConfig {
            step: 1.0,
            speed: 1.0,
            pan_interval: 1.0,
            localize_timeout: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub start: AnchorId,
    pub goal: AnchorId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub sensing: SensingConfig,
    pub guidance: GuidanceConfig,
    pub workflow: WorkflowConfig,
    pub walker: WalkerConfig,
    pub generator: GeneratorConfig,
    /// Explicit start/goal pairs; when empty, `random_scenarios` pairs are
    /// drawn from the map.
    pub scenarios: Vec<Scenario>,
    pub random_scenarios: usize,
    pub max_events: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            sensing: SensingConfig::default(),
            guidance: GuidanceConfig::default(),
            workflow: WorkflowConfig::default(),
            walker: WalkerConfig::default(),
            generator: GeneratorConfig::default(),
            scenarios: Vec::new(),
            random_scenarios: 10,
            max_events: 10_000,
        }
    }
}

impl SimConfig {
    pub fn noiseless(seed: u64) -> Self {
        SimConfig {
            seed,
            sensing: SensingConfig::noiseless(),
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.sensing.validate()?;
        let g = &self.generator;
        if g.min_anchors < 2 || g.max_anchors < g.min_anchors {
            return Err(SimError::Config("generator needs 2 ≤ min_anchors ≤ max_anchors".into()));
        }
        if !(g.area > 0.0 && g.min_separation >= 0.0) {
            return Err(SimError::Config("generator area must be positive".into()));
        }
        let w = &self.walker;
        if !(w.step > 0.0 && w.speed > 0.0 && w.pan_interval > 0.0) {
            return Err(SimError::Config(
                "walker step, speed and pan interval must be positive".into(),
            ));
        }
        if !(self.guidance.arrival_radius > 0.0 && self.guidance.epsilon > 0.0) {
            return Err(SimError::Config(
                "guidance arrival radius and epsilon must be positive".into(),
            ));
        }
        if self.max_events == 0 {
            return Err(SimError::Config("max_events must be positive".into()));
        }
        Ok(())
    }
}

/// True poses in the simulator's world frame of every anchor, path anchor
/// included.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub anchors: BTreeMap<AnchorId, Pose>,
}

fn pose_along(trail: &BreadcrumbTrail, s: f64) -> Pose {
    let pts = trail.points();
    let mut walked = 0.0;
    for w in pts.windows(2) {
        let d = w[0].distance_to(&w[1]);
        if walked + d >= s && d > 0.0 {
            let u = (s - walked) / d;
            let mut p = w[0].clone();
            p.position += (w[1].position - w[0].position) * u;
            return p;
        }
        walked += d;
    }
    trail.last().clone()
}

impl GroundTruth {
    /// A world in which the map is exactly right: anchors are placed by
    /// following recorded connections outward from the smallest id of each
    /// connected component (components sit 1 km apart), and path anchors
    /// every `path_anchor_spacing` meters along their trails.
    pub fn from_map(map: &MapGraph, path_anchor_spacing: f64) -> Self {
        let mut anchors: BTreeMap<AnchorId, Pose> = BTreeMap::new();
        let mut component = 0.0;
        for root in map.anchors().keys() {
            if anchors.contains_key(root) {
                continue;
            }
            anchors.insert(
                root.clone(),
                Pose::from_translation(1000.0 * component, 0.0, 0.0, world_frame()),
            );
            component += 1.0;
            let mut queue = VecDeque::from([root.clone()]);
            while let Some(id) = queue.pop_front() {
                let here = anchors[&id].clone();
                for t in map.traversals_from(&id) {
                    if anchors.contains_key(&t.exit) {
                        continue;
                    }
                    let world_from_trail = compose(&here, &invert(&t.entry_pose));
                    anchors.insert(
                        t.exit.clone(),
                        compose(&world_from_trail, &t.exit_pose).with_frame(world_frame()),
                    );
                    queue.push_back(t.exit);
                }
            }
        }
        for c in map.connections().values() {
            let mut walks = vec![(
                &c.forward_trail,
                &c.from_pose_in_trail_frame,
                &c.from_anchor,
                &c.path_anchor_ids,
            )];
            if let Some(r) = &c.reverse_trail {
                walks.push((&r.trail, &r.start_pose_in_trail_frame, &c.to_anchor, &r.path_anchor_ids));
            }
            for (trail, entry_pose, entry, ids) in walks {
                let world_from_trail = compose(&anchors[entry], &invert(entry_pose));
                for (k, id) in ids.iter().enumerate() {
                    let p = pose_along(trail, path_anchor_spacing * (k + 1) as f64);
                    anchors.insert(
                        AnchorId::new(id.clone()),
                        compose(&world_from_trail, &p).with_frame(world_frame()),
                    );
                }
            }
        }
        GroundTruth { anchors }
    }
}

/// Walk events that pan for `settle` seconds, walk through `waypoints`
/// (world xy) in steps of at most `step` meters, pan again for `settle`
/// seconds and stop.
pub fn walk_script(start: &Pose, waypoints: &[Vector2<f64>], step: f64, settle: usize) -> Vec<WalkEvent> {
    let mut events = Vec::new();
    let mut t = 0.0;
    for _ in 0..settle {
        events.push(WalkEvent::pan(t));
        t += 1.0;
    }
    let mut pos = start.xy();
    let mut heading = start.heading_deg();
    for wp in waypoints {
        let d = (wp - pos).norm();
        let Ok(b) = bearing(pos, *wp) else { continue };
        let turn = normalize_deg_signed(b - heading);
        heading = b;
        let n = (d / step).ceil().max(1.0) as usize;
        for s in 0..n {
            let dist = (d - s as f64 * step).min(step);
            events.push(WalkEvent::walk(t, dist, if s == 0 { turn } else { 0.0 }));
            t += dist.max(0.1);
        }
        pos = *wp;
    }
    for _ in 0..settle {
        events.push(WalkEvent::pan(t));
        t += 1.0;
    }
    events.push(WalkEvent::stop(t));
    events
}

#[derive(Debug, Clone)]
pub struct GeneratedSite {
    pub map: MapGraph,
    pub truth: GroundTruth,
}

const SETTLE_PANS: usize = 30;

/// Lays out a random site and maps it with the anchor and connection
/// workflows, so the map carries realistic sensing error.
pub fn generate_site(
    seed: u64,
    gen: &GeneratorConfig,
    sensing: &SensingConfig,
    workflow: &WorkflowConfig,
) -> Result<GeneratedSite, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_GENERATE, 0));
    let n = rng.random_range(gen.min_anchors..=gen.max_anchors);
    let mut spots: Vec<Vector2<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = Vector2::new(rng.random::<f64>() * gen.area, rng.random::<f64>() * gen.area);
        for _ in 0..1000 {
            if spots.iter().all(|q| (q - p).norm() >= gen.min_separation) {
                break;
            }
            p = Vector2::new(rng.random::<f64>() * gen.area, rng.random::<f64>() * gen.area);
        }
        spots.push(p);
    }

    let mut world = WorldState::new(seed).with_geo_origin(gen.origin.clone());
    let mut map = MapGraph::new();
    let mut ids = Vec::with_capacity(n);
    for (i, p) in spots.iter().enumerate() {
        let heading = rng.random_range(0.0..360.0);
        world.place_walker(Pose::planar(p.x, p.y, heading, world_frame()));
        let scan = ScanTrace::sweep(30.0, rng.random_range(270.0..=360.0), rng.random_range(0.5..1.5));
        let outdoor = rng.random_bool(gen.outdoor_probability);
        let meta = AnchorMeta {
            name: format!("Spot {}", i + 1),
            notes: String::new(),
            created_at: 0,
        };
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new(format!("map-{:03}", i + 1)), sensing);
        let made = if outdoor {
            create_outdoor_anchor(&mut phone, &map, &scan, &meta, workflow)
        } else {
            create_anchor(&mut phone, &map, &scan, &meta, workflow)
        };
        let anchor = made.map_err(|source| SimError::Mapping {
            what: format!("anchor {}", i + 1),
            source,
        })?;
        ids.push(map.add_anchor(anchor)?);
    }

    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    let extra = rng.random_range(0..=gen.max_extra_connections);
    for _ in 0..extra {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && !edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            edges.push((a, b));
        }
    }

    for (a, b) in edges {
        let (from, to) = (&ids[a], &ids[b]);
        let start = world.anchor_truth[from].clone();
        let end = spots[b];
        let mut out = vec![end];
        if rng.random_bool(gen.l_shape_probability) {
            let corner = if rng.random_bool(0.5) {
                Vector2::new(spots[a].x, end.y)
            } else {
                Vector2::new(end.x, spots[a].y)
            };
            out.insert(0, corner);
        }
        let record_back = rng.random_bool(gen.reverse_probability);
        world.place_walker(start.clone());
        let cid = map.next_connection_id();
        let mut phone = SimulatedPhone::start(&mut world, FrameId::new(format!("walk-{cid}")), sensing);
        let mut rec = ConnectionRecorder::new(*workflow);
        let fail = |source| SimError::Mapping {
            what: format!("connection {from} → {to}"),
            source,
        };
        rec.select(&map, from, to).map_err(fail)?;
        let events = walk_script(&start, &out, 1.0, SETTLE_PANS);
        connect_anchors(&mut rec, &mut phone, &mut map, &events).map_err(fail)?;
        if rec.state() == RecorderState::AwaitReverseDecision {
            if record_back {
                let here = phone.world.true_pose.clone();
                let mut back: Vec<Vector2<f64>> = out.iter().rev().skip(1).copied().collect();
                back.push(spots[a]);
                let events = walk_script(&here, &back, 1.0, SETTLE_PANS);
                rec.record_reverse(&mut phone, &mut map, &events).map_err(fail)?;
            } else {
                rec.decline_reverse().map_err(fail)?;
            }
        }
    }
    Ok(GeneratedSite {
        map,
        truth: GroundTruth {
            anchors: world.anchor_truth.clone(),
        },
    })
}

/// A recorded connection walk together with the world it happened in, so
/// that replaying it reproduces the same connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkTrace {
    pub seed: u64,
    pub session: FrameId,
    pub from: AnchorId,
    pub to: AnchorId,
    /// Where the walker stands when the trace begins.
    pub walker: Pose,
    pub anchors: BTreeMap<AnchorId, Pose>,
    pub events: Vec<WalkEvent>,
    /// Walk back to `from`; absent means the reverse walk is declined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse_events: Option<Vec<WalkEvent>>,
}

/// Replays `trace` into `map`. The map is untouched on error.
pub fn replay_trace(
    map: &mut MapGraph,
    trace: &WalkTrace,
    sensing: &SensingConfig,
    workflow: &WorkflowConfig,
) -> Result<ConnectionId, WorkflowError> {
    let mut world = WorldState::new(trace.seed);
    world.anchor_truth = trace.anchors.clone();
    world.place_walker(trace.walker.clone());
    let mut phone = SimulatedPhone::start(&mut world, trace.session.clone(), sensing);
    let mut work = map.clone();
    let mut rec = ConnectionRecorder::new(*workflow);
    rec.select(&work, &trace.from, &trace.to)?;
    let id = connect_anchors(&mut rec, &mut phone, &mut work, &trace.events)?;
    if rec.state() == RecorderState::AwaitReverseDecision {
        match &trace.reverse_events {
            Some(back) => rec.record_reverse(&mut phone, &mut work, back)?,
            None => rec.decline_reverse()?,
        }
    }
    *map = work;
    Ok(id)
}

/// A trace walking the straight line between two anchors of `truth`.
pub fn straight_trace(
    truth: &GroundTruth,
    from: &AnchorId,
    to: &AnchorId,
    seed: u64,
    with_reverse: bool,
) -> Option<WalkTrace> {
    let start = truth.anchors.get(from)?.clone();
    let end = truth.anchors.get(to)?;
    let events = walk_script(&start, &[end.xy()], 1.0, SETTLE_PANS);
    let reverse_events = with_reverse.then(|| {
        let here = Pose::planar(
            end.position.x,
            end.position.y,
            bearing(start.xy(), end.xy()).unwrap_or(0.0),
            world_frame(),
        );
        walk_script(&here, &[start.xy()], 1.0, SETTLE_PANS)
    });
    Some(WalkTrace {
        seed,
        session: FrameId::new(format!("walk-{from}-{to}")),
        from: from.clone(),
        to: to.clone(),
        walker: start,
        anchors: truth.anchors.clone(),
        events,
        reverse_events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Arrived,
    Failed,
    Unreachable,
    LocalizationTimeout,
    EventLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub start: AnchorId,
    pub goal: AnchorId,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub route_length: Option<f64>,
    pub events: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_distance: Option<f64>,
    pub success: bool,
    /// Simulated seconds, localization included.
    pub duration: f64,
}

impl RunRecord {
    fn pending(sc: &Scenario) -> Self {
        RunRecord {
            scenario: sc.id.clone(),
            start: sc.start.clone(),
            goal: sc.goal.clone(),
            status: RunStatus::Failed,
            detail: None,
            route_length: None,
            events: 0,
            final_distance: None,
            success: false,
            duration: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub anchors: usize,
    pub connections: usize,
    pub path_anchors: usize,
    pub total_length: f64,
}

impl MapSummary {
    pub fn of(map: &MapGraph) -> Self {
        let c = map.connections().values();
        MapSummary {
            anchors: map.anchors().len(),
            connections: map.connections().len(),
            path_anchors: c.clone().map(|c| c.path_anchor_ids.len()).sum(),
            total_length: c.map(|c| c.length).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub map: MapSummary,
    pub runs: Vec<RunRecord>,
    pub arrived: usize,
    pub total: usize,
    pub success_rate: f64,
}

/// `count` random start/goal pairs of distinct anchors.
pub fn random_scenarios(map: &MapGraph, seed: u64, count: usize) -> Vec<Scenario> {
    let ids: Vec<&AnchorId> = map.anchors().keys().collect();
    if ids.len() < 2 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_SCENARIOS, 0));
    (0..count)
        .map(|i| {
            let s = rng.random_range(0..ids.len());
            let mut g = rng.random_range(0..ids.len() - 1);
            if g >= s {
                g += 1;
            }
            Scenario {
                id: format!("s{:03}", i + 1),
                start: ids[s].clone(),
                goal: ids[g].clone(),
            }
        })
        .collect()
}

/// One navigation from `sc.start` to `sc.goal`, returning the run record
/// and every guidance event emitted.
pub fn navigate(
    map: &MapGraph,
    truth: &GroundTruth,
    sc: &Scenario,
    cfg: &SimConfig,
    seed: u64,
) -> (RunRecord, Vec<GuidanceEvent>) {
    let mut rec = RunRecord::pending(sc);
    let mut events = Vec::new();
    let plan = match shortest_path(map, &sc.start, &sc.goal) {
        Ok(p) => p,
        Err(e) => {
            rec.status = RunStatus::Unreachable;
            rec.detail = Some(e.to_string());
            return (rec, events);
        }
    };
    rec.route_length = Some(plan.cost);
    let (Some(start_truth), Some(goal_truth)) = (truth.anchors.get(&sc.start), truth.anchors.get(&sc.goal)) else {
        rec.detail = Some("scenario anchors have no ground truth".into());
        return (rec, events);
    };
    if plan.legs.is_empty() {
        rec.status = RunStatus::Arrived;
        rec.final_distance = Some(0.0);
        rec.success = true;
        return (rec, events);
    }
    let route = match Alignments::exact(map, &plan).and_then(|a| stitch_route(map, &plan, &a)) {
        Ok(r) => r,
        Err(e) => {
            rec.detail = Some(e.to_string());
            return (rec, events);
        }
    };
    let mut state = match GuidanceState::for_route(&route.polyline, cfg.guidance) {
        Ok(s) => s,
        Err(e) => {
            rec.detail = Some(e.to_string());
            return (rec, events);
        }
    };

    let mut world = WorldState::new(seed);
    world.anchor_truth = truth.anchors.clone();
    world.place_walker(start_truth.clone());
    let w = cfg.walker;
    let mut phone = SimulatedPhone::start(&mut world, FrameId::new("live"), &cfg.sensing);

    // pan at the start anchor until it localizes
    let mut t = 0.0;
    let start_live = loop {
        t += w.pan_interval;
        if let Some(p) = phone.try_localize(&sc.start, w.pan_interval) {
            break Some(p);
        }
        if t >= w.localize_timeout {
            break None;
        }
    };
    let Some(start_live) = start_live else {
        rec.status = RunStatus::LocalizationTimeout;
        rec.duration = t;
        rec.final_distance = Some(phone.world.true_pose.horizontal_distance_to(goal_truth));
        return (rec, events);
    };
    let mut to_nav = relative_transform(route.start_pose(), &start_live);

    let mut pending_anchors: Vec<(usize, AnchorId)> =
        route.anchor_sequence.iter().cloned().enumerate().skip(1).collect();
    let mut pending_path: BTreeSet<AnchorId> = BTreeSet::new();
    for leg in &route.legs {
        let c = &map.connections()[&leg.connection];
        let ids = match (leg.direction, &c.reverse_trail) {
            (Direction::Reverse, Some(r)) => &r.path_anchor_ids,
            _ => &c.path_anchor_ids,
        };
        pending_path.extend(ids.iter().map(|s| AnchorId::new(s.clone())));
    }

    let mut status = RunStatus::EventLimit;
    for _ in 0..cfg.max_events {
        let est = to_nav.apply(&phone.estimated_pose());
        events.extend(guidance_update(&mut state, &est, t));
        if state.finished() {
            status = RunStatus::Arrived;
            break;
        }
        if events.len() >= cfg.max_events {
            break;
        }
        let kp = state.current().expect("not finished").position;
        let distance = (kp - est.xy()).norm().min(w.step);
        let turn = bearing(est.xy(), kp).map_or(0.0, |b| normalize_deg_signed(b - est.heading_deg()));
        if let Err(e) = phone.step(Motion { distance, turn }) {
            rec.detail = Some(e.to_string());
            status = RunStatus::Failed;
            break;
        }
        let dt = (distance / w.speed).max(0.1);
        t += dt;
        let mut i = 0;
        while i < pending_anchors.len() {
            let (k, id) = &pending_anchors[i];
            if let Some(live) = phone.try_localize(id, dt) {
                to_nav = relative_transform(&route.anchor_poses[*k], &live);
                pending_anchors.remove(i);
            } else {
                i += 1;
            }
        }
        pending_path.retain(|id| phone.try_localize(id, dt).is_none());
    }
    events.truncate(cfg.max_events);

    let final_distance = phone.world.true_pose.horizontal_distance_to(goal_truth);
    rec.events = events.len();
    rec.duration = t;
    rec.final_distance = Some(final_distance);
    rec.success = final_distance <= cfg.guidance.arrival_radius;
    rec.status = match status {
        RunStatus::Arrived if !rec.success => RunStatus::Failed,
        s => s,
    };
    (rec, events)
}

/// Runs every scenario of `cfg` (or random ones) on `map`.
pub fn run_simulation(map: &MapGraph, truth: &GroundTruth, cfg: &SimConfig) -> Result<SimulationReport, SimError> {
    cfg.validate()?;
    let scenarios = if cfg.scenarios.is_empty() {
        random_scenarios(map, cfg.seed, cfg.random_scenarios)
    } else {
        let mut s = cfg.scenarios.clone();
        s.sort();
        s
    };
    let runs: Vec<RunRecord> = scenarios
        .iter()
        .enumerate()
        .map(|(i, sc)| navigate(map, truth, sc, cfg, derive_seed(cfg.seed, TAG_RUN, i as u32)).0)
        .collect();
    let arrived = runs.iter().filter(|r| r.success).count();
    let total = runs.len();
    Ok(SimulationReport {
        seed: cfg.seed,
        map: MapSummary::of(map),
        runs,
        arrived,
        total,
        success_rate: if total == 0 { 0.0 } else { arrived as f64 / total as f64 },
    })
}

/// Generates a site from the config's seed and simulates on it.
pub fn simulate_generated(cfg: &SimConfig) -> Result<(GeneratedSite, SimulationReport), SimError> {
    cfg.validate()?;
    let site = generate_site(cfg.seed, &cfg.generator, &cfg.sensing, &cfg.workflow)?;
    let report = run_simulation(&site.map, &site.truth, cfg)?;
    Ok((site, report))
}

impl From<RoutingError> for SimError {
    fn from(e: RoutingError) -> Self {
        SimError::Config(e.to_string())
    }
}
