//! Route planning over the anchor graph and stitching of the chosen
//! connections into one polyline in the frame of the first segment.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{relative_transform, FrameTransform, Pose};
use crate::mapstore::{AnchorId, BreadcrumbTrail, ConnectionId, Direction, MapError, MapGraph, Traversal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("unknown anchor {0}")]
    UnknownAnchor(AnchorId),
    #[error("no route from {start} to {goal}")]
    Unreachable { start: AnchorId, goal: AnchorId },
    #[error("no localization of junction anchor {0} in both adjacent segments")]
    MissingAlignment(AnchorId),
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// One connection walked in one direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteLeg {
    pub connection: ConnectionId,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    pub anchors: Vec<AnchorId>,
    pub legs: Vec<RouteLeg>,
    pub cost: f64,
}

/// Cheapest traversal from `a` straight to `b`; ties go to the smaller
/// connection id, then forward before reverse.
fn best_hop(map: &MapGraph, a: &AnchorId, b: &AnchorId) -> Option<Traversal> {
    map.traversals_from(a).filter(|t| &t.exit == b).min_by(|x, y| {
        x.cost
            .total_cmp(&y.cost)
            .then_with(|| x.connection.cmp(&y.connection))
            .then_with(|| x.direction.cmp(&y.direction))
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    path: Vec<AnchorId>,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over connection lengths, both directions allowed. Among
/// equal-cost routes the lexicographically smallest anchor sequence wins.
pub fn shortest_path(map: &MapGraph, start: &AnchorId, goal: &AnchorId) -> Result<PathPlan, RoutingError> {
    for a in [start, goal] {
        if map.anchor(a).is_none() {
            return Err(RoutingError::UnknownAnchor(a.clone()));
        }
    }
    let mut best: BTreeMap<AnchorId, Label> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    let first = Label {
        cost: 0.0,
        path: vec![start.clone()],
    };
    best.insert(start.clone(), first.clone());
    heap.push(Reverse(first));

    while let Some(Reverse(label)) = heap.pop() {
        let here = label.path.last().expect("labels are never empty").clone();
        if best.get(&here) != Some(&label) {
            continue;
        }
        if &here == goal {
            break;
        }
        for t in map.traversals_from(&here) {
            if label.path.contains(&t.exit) {
                continue;
            }
            let mut path = label.path.clone();
            path.push(t.exit.clone());
            let next = Label {
                cost: label.cost + t.cost,
                path,
            };
            if best.get(&t.exit).is_none_or(|old| next < *old) {
                best.insert(t.exit.clone(), next.clone());
                heap.push(Reverse(next));
            }
        }
    }

    let Label { cost, path } = best.remove(goal).ok_or_else(|| RoutingError::Unreachable {
        start: start.clone(),
        goal: goal.clone(),
    })?;
    let legs = path
        .windows(2)
        .map(|w| {
            let t = best_hop(map, &w[0], &w[1]).expect("hop came from an existing traversal");
            RouteLeg {
                connection: t.connection,
                direction: t.direction,
            }
        })
        .collect();
    Ok(PathPlan {
        anchors: path,
        legs,
        cost,
    })
}

/// A junction anchor's pose in the frame of the segment arriving at it
/// and in the frame of the segment leaving it.
#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub incoming: Pose,
    pub outgoing: Pose,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Alignments {
    junctions: BTreeMap<AnchorId, Junction>,
}

impl Alignments {
    pub fn new() -> Self {
        Alignments::default()
    }

    /// Junction poses exactly as recorded in the chosen connections.
    pub fn exact(map: &MapGraph, plan: &PathPlan) -> Result<Self, RoutingError> {
        let segs = traversals(map, plan)?;
        let mut out = Alignments::new();
        for (w, anchor) in segs.windows(2).zip(&plan.anchors[1..]) {
            out.insert(
                anchor.clone(),
                Junction {
                    incoming: w[0].exit_pose.clone(),
                    outgoing: w[1].entry_pose.clone(),
                },
            );
        }
        Ok(out)
    }

    pub fn insert(&mut self, anchor: AnchorId, junction: Junction) {
        self.junctions.insert(anchor, junction);
    }

    pub fn get(&self, anchor: &AnchorId) -> Option<&Junction> {
        self.junctions.get(anchor)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AnchorId, &Junction)> {
        self.junctions.iter()
    }
}

fn traversals(map: &MapGraph, plan: &PathPlan) -> Result<Vec<Traversal>, RoutingError> {
    if plan.legs.len() + 1 != plan.anchors.len() {
        return Err(RoutingError::InvalidRoute(format!(
            "{} anchors need {} legs, got {}",
            plan.anchors.len(),
            plan.anchors.len().saturating_sub(1),
            plan.legs.len()
        )));
    }
    plan.legs
        .iter()
        .zip(plan.anchors.windows(2))
        .map(|(leg, w)| {
            let c = map
                .connection(&leg.connection)
                .ok_or_else(|| MapError::UnknownConnection(leg.connection.clone()))?;
            let t = c.traversal(leg.direction);
            if t.entry != w[0] || t.exit != w[1] {
                return Err(RoutingError::InvalidRoute(format!(
                    "connection {} walked {:?} goes {} → {}, not {} → {}",
                    leg.connection, leg.direction, t.entry, t.exit, w[0], w[1]
                )));
            }
            Ok(t)
        })
        .collect()
}

/// A planned route as one polyline in the navigation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub anchor_sequence: Vec<AnchorId>,
    pub legs: Vec<RouteLeg>,
    pub total_length: f64,
    pub polyline: BreadcrumbTrail,
    /// Index in `polyline` where each segment starts.
    pub segment_boundaries: Vec<usize>,
    /// Every anchor of the sequence in the navigation frame.
    pub anchor_poses: Vec<Pose>,
}

impl Route {
    pub fn start_pose(&self) -> &Pose {
        &self.anchor_poses[0]
    }

    pub fn goal_pose(&self) -> &Pose {
        self.anchor_poses.last().expect("routes have anchors")
    }
}

const COINCIDENT_M: f64 = 1e-9;

/// Maps every segment's trail into the first segment's frame by chaining
/// the junction alignments, then joins them. Gaps between the end of one
/// trail and the start of the next are bridged with straight crumbs.
pub fn stitch_route(map: &MapGraph, plan: &PathPlan, alignments: &Alignments) -> Result<Route, RoutingError> {
    let segs = traversals(map, plan)?;
    if segs.is_empty() {
        return Err(RoutingError::InvalidRoute(
            "a route needs at least one connection".into(),
        ));
    }
    let nav_frame = segs[0].trail.frame().clone();
    let spacing = segs.iter().map(|s| s.trail.spacing()).fold(0.0, f64::max);

    let mut to_nav = FrameTransform::identity(nav_frame.clone());
    let mut points: Vec<Pose> = Vec::new();
    let mut boundaries = Vec::with_capacity(segs.len());
    let mut anchor_poses = vec![to_nav.apply(&segs[0].entry_pose)];

    for (i, seg) in segs.iter().enumerate() {
        if i > 0 {
            let anchor = &plan.anchors[i];
            let j = alignments
                .get(anchor)
                .ok_or_else(|| RoutingError::MissingAlignment(anchor.clone()))?;
            if j.incoming.frame != *segs[i - 1].trail.frame() || j.outgoing.frame != *seg.trail.frame() {
                return Err(RoutingError::MissingAlignment(anchor.clone()));
            }
            // frame i → frame i-1 → … → navigation frame
            to_nav = to_nav.then_from(&relative_transform(&j.incoming, &j.outgoing));
        }
        let mapped: Vec<Pose> = seg.trail.points().iter().map(|p| to_nav.apply(p)).collect();
        let mut first = 0;
        if let Some(prev) = points.last().cloned() {
            let head = &mapped[0];
            if prev.distance_to(head) <= COINCIDENT_M {
                first = 1;
            } else {
                let gap = prev.distance_to(head);
                let n = (gap / spacing).ceil() as usize;
                for k in 1..n {
                    let u = k as f64 / n as f64;
                    let mut p = head.clone();
                    p.position = prev.position + (head.position - prev.position) * u;
                    points.push(p);
                }
            }
        }
        // a coincident head is shared with the previous segment's tail
        boundaries.push(points.len() - first);
        points.extend(mapped.into_iter().skip(first));
        anchor_poses.push(to_nav.apply(&seg.exit_pose));
    }

    Ok(Route {
        anchor_sequence: plan.anchors.clone(),
        legs: plan.legs.clone(),
        total_length: segs.iter().map(|s| s.cost).sum(),
        polyline: BreadcrumbTrail::new(points, spacing)?,
        segment_boundaries: boundaries,
        anchor_poses,
    })
}

/// Plans and stitches with the alignments recorded in the map.
pub fn plan_route(map: &MapGraph, start: &AnchorId, goal: &AnchorId) -> Result<Route, RoutingError> {
    let plan = shortest_path(map, start, goal)?;
    let alignments = Alignments::exact(map, &plan)?;
    stitch_route(map, &plan, &alignments)
}
