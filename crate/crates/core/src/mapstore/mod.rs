//! The shareable map: anchors, breadcrumb connections between them and the
//! adjacency index used for routing.

mod export;
mod format;
mod nearby;
mod poi;
mod trail;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{FrameId, GeoPose, GeomError, Pose};

pub use export::export_geojson;
pub use format::{audit, deserialize, serialize, MapIssue, FORMAT_VERSION};
pub use nearby::nearby_anchors;
pub use poi::{import_poi, PoiConfig, PoiError};
pub use trail::{path_length, raw_path_length, resample_trail, BreadcrumbTrail, DEFAULT_SPACING_M};

/// The first crumb of a connection must lie this close to the start anchor.
pub const START_TOLERANCE_M: f64 = 0.5;

/// The last crumb must lie within this distance of the end anchor, which
/// localizes a few meters before the walker arrives.
pub const END_ANCHOR_RADIUS_M: f64 = 4.0;

const LENGTH_TOL_M: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("anchor {0} already exists")]
    DuplicateAnchor(AnchorId),
    #[error("connection {0} already exists")]
    DuplicateConnection(ConnectionId),
    #[error("anchor {0} is outdoor but has no geo pose")]
    OutdoorWithoutGeo(AnchorId),
    #[error("anchor {0} is indoor but carries a geo pose")]
    IndoorWithGeo(AnchorId),
    #[error("anchor {0}: {1}")]
    InvalidAnchor(AnchorId, String),
    #[error("connection {connection} refers to missing anchor {anchor}")]
    MissingEndpoint { connection: ConnectionId, anchor: AnchorId },
    #[error("connection {0} starts and ends at the same anchor")]
    SelfLoop(ConnectionId),
    #[error("unknown connection {0}")]
    UnknownConnection(ConnectionId),
    #[error("unknown anchor {0}")]
    UnknownAnchor(AnchorId),
    #[error("connection {0}: {1}")]
    InvalidConnection(ConnectionId, String),
    #[error("invalid trail: {0}")]
    InvalidTrail(String),
    #[error("unsupported map format_version {0}")]
    UnknownFormatVersion(u64),
    #[error("malformed map document: {0}")]
    Malformed(String),
    #[error("{subject}: {reason}")]
    Invariant { subject: String, reason: String },
    #[error("map cannot be geo-referenced: {0}")]
    Unreferenced(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

string_id!(AnchorId);
string_id!(ConnectionId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKind {
    Indoor,
    Outdoor,
}

/// A navigation start/end point. Its reference pose is the origin of its
/// own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub id: AnchorId,
    pub kind: AnchorKind,
    pub frame: FrameId,
    pub reference_pose: Pose,
    pub geo: Option<GeoPose>,
    pub quality: f64,
    pub name: String,
    pub notes: String,
    /// UTC seconds since the epoch.
    pub created_at: u64,
}

impl Anchor {
    pub fn indoor(id: AnchorId, frame: FrameId, quality: f64, name: impl Into<String>) -> Self {
        Anchor {
            id,
            kind: AnchorKind::Indoor,
            reference_pose: Pose::identity(frame.clone()),
            frame,
            geo: None,
            quality,
            name: name.into(),
            notes: String::new(),
            created_at: 0,
        }
    }

    pub fn outdoor(id: AnchorId, frame: FrameId, geo: GeoPose, quality: f64, name: impl Into<String>) -> Self {
        Anchor {
            kind: AnchorKind::Outdoor,
            geo: Some(geo),
            ..Anchor::indoor(id, frame, quality, name)
        }
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = notes.into();
        self
    }

    pub fn with_created_at(mut self, t: u64) -> Self {
        self.created_at = t;
        self
    }

    pub fn validate(&self) -> Result<(), MapError> {
        match (self.kind, &self.geo) {
            (AnchorKind::Outdoor, None) => return Err(MapError::OutdoorWithoutGeo(self.id.clone())),
            (AnchorKind::Indoor, Some(_)) => return Err(MapError::IndoorWithGeo(self.id.clone())),
            (_, Some(g)) => g
                .validate()
                .map_err(|e| MapError::InvalidAnchor(self.id.clone(), e.to_string()))?,
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.quality) {
            return Err(MapError::InvalidAnchor(
                self.id.clone(),
                format!("quality {} outside [0, 1]", self.quality),
            ));
        }
        if self.reference_pose.frame != self.frame
            || !self.reference_pose.approx_eq(&Pose::identity(self.frame.clone()), 1e-9)
        {
            return Err(MapError::InvalidAnchor(
                self.id.clone(),
                "reference pose must be the identity in the anchor's frame".into(),
            ));
        }
        Ok(())
    }
}

/// A recorded walk in the `to → from` direction of a connection.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseTrail {
    pub trail: BreadcrumbTrail,
    /// Pose of the connection's `to_anchor` (where the reverse walk starts).
    pub start_pose_in_trail_frame: Pose,
    /// Pose of the connection's `from_anchor`.
    pub end_pose_in_trail_frame: Pose,
    pub path_anchor_ids: Vec<String>,
    pub length: f64,
}

/// Directed edge between two anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub id: ConnectionId,
    pub from_anchor: AnchorId,
    pub to_anchor: AnchorId,
    pub forward_trail: BreadcrumbTrail,
    pub reverse_trail: Option<ReverseTrail>,
    pub path_anchor_ids: Vec<String>,
    pub length: f64,
    pub from_pose_in_trail_frame: Pose,
    pub to_pose_in_trail_frame: Pose,
}

/// Input to [`MapGraph::add_connection`]; the stored length is computed
/// from the trail.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionRecord {
    pub id: ConnectionId,
    pub from_anchor: AnchorId,
    pub to_anchor: AnchorId,
    pub forward_trail: BreadcrumbTrail,
    pub reverse: Option<ReverseRecord>,
    pub path_anchor_ids: Vec<String>,
    pub from_pose_in_trail_frame: Pose,
    pub to_pose_in_trail_frame: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverseRecord {
    pub trail: BreadcrumbTrail,
    pub start_pose_in_trail_frame: Pose,
    pub end_pose_in_trail_frame: Pose,
    pub path_anchor_ids: Vec<String>,
}

impl ReverseRecord {
    fn into_trail(self) -> ReverseTrail {
        ReverseTrail {
            length: self.trail.length(),
            trail: self.trail,
            start_pose_in_trail_frame: self.start_pose_in_trail_frame,
            end_pose_in_trail_frame: self.end_pose_in_trail_frame,
            path_anchor_ids: self.path_anchor_ids,
        }
    }
}

fn check_trail_ends(
    id: &ConnectionId,
    what: &str,
    trail: &BreadcrumbTrail,
    start: &Pose,
    end: &Pose,
) -> Result<(), MapError> {
    if start.frame != *trail.frame() || end.frame != *trail.frame() {
        return Err(MapError::InvalidConnection(
            id.clone(),
            format!("{what} anchor poses are not in the trail frame {}", trail.frame()),
        ));
    }
    let d0 = trail.first().distance_to(start);
    if d0 > START_TOLERANCE_M {
        return Err(MapError::InvalidConnection(
            id.clone(),
            format!("{what} trail starts {d0:.3} m from its start anchor (limit {START_TOLERANCE_M} m)"),
        ));
    }
    let d1 = trail.last().distance_to(end);
    if d1 > END_ANCHOR_RADIUS_M {
        return Err(MapError::InvalidConnection(
            id.clone(),
            format!("{what} trail ends {d1:.3} m from its end anchor (limit {END_ANCHOR_RADIUS_M} m)"),
        ));
    }
    Ok(())
}

impl Connection {
    pub fn validate(&self) -> Result<(), MapError> {
        if self.from_anchor == self.to_anchor {
            return Err(MapError::SelfLoop(self.id.clone()));
        }
        let expected = self.forward_trail.length();
        if !self.length.is_finite() || (self.length - expected).abs() > LENGTH_TOL_M {
            return Err(MapError::InvalidConnection(
                self.id.clone(),
                format!("stored length {} differs from trail length {expected}", self.length),
            ));
        }
        check_trail_ends(
            &self.id,
            "forward",
            &self.forward_trail,
            &self.from_pose_in_trail_frame,
            &self.to_pose_in_trail_frame,
        )?;
        if let Some(r) = &self.reverse_trail {
            let expected = r.trail.length();
            if !r.length.is_finite() || (r.length - expected).abs() > LENGTH_TOL_M {
                return Err(MapError::InvalidConnection(
                    self.id.clone(),
                    format!(
                        "stored reverse length {} differs from trail length {expected}",
                        r.length
                    ),
                ));
            }
            check_trail_ends(
                &self.id,
                "reverse",
                &r.trail,
                &r.start_pose_in_trail_frame,
                &r.end_pose_in_trail_frame,
            )?;
        }
        Ok(())
    }

    /// Cost of walking this connection in `direction`.
    pub fn cost(&self, direction: Direction) -> f64 {
        match (direction, &self.reverse_trail) {
            (Direction::Reverse, Some(r)) => r.length,
            _ => self.length,
        }
    }

    /// Geometry of one traversal: the trail in walking order plus the poses
    /// of the entry and exit anchors in the trail's frame. Reverse walks use
    /// the recorded reverse trail when there is one, else the forward trail
    /// walked backwards.
    pub fn traversal(&self, direction: Direction) -> Traversal {
        match direction {
            Direction::Forward => Traversal {
                connection: self.id.clone(),
                direction,
                entry: self.from_anchor.clone(),
                exit: self.to_anchor.clone(),
                trail: self.forward_trail.clone(),
                entry_pose: self.from_pose_in_trail_frame.clone(),
                exit_pose: self.to_pose_in_trail_frame.clone(),
                cost: self.length,
            },
            Direction::Reverse => match &self.reverse_trail {
                Some(r) => Traversal {
                    connection: self.id.clone(),
                    direction,
                    entry: self.to_anchor.clone(),
                    exit: self.from_anchor.clone(),
                    trail: r.trail.clone(),
                    entry_pose: r.start_pose_in_trail_frame.clone(),
                    exit_pose: r.end_pose_in_trail_frame.clone(),
                    cost: r.length,
                },
                None => Traversal {
                    connection: self.id.clone(),
                    direction,
                    entry: self.to_anchor.clone(),
                    exit: self.from_anchor.clone(),
                    trail: self.forward_trail.reversed(),
                    entry_pose: self.to_pose_in_trail_frame.clone(),
                    exit_pose: self.from_pose_in_trail_frame.clone(),
                    cost: self.length,
                },
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

/// One connection walked in one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Traversal {
    pub connection: ConnectionId,
    pub direction: Direction,
    pub entry: AnchorId,
    pub exit: AnchorId,
    pub trail: BreadcrumbTrail,
    pub entry_pose: Pose,
    pub exit_pose: Pose,
    pub cost: f64,
}

pub type Adjacency = BTreeMap<AnchorId, Vec<(ConnectionId, Direction)>>;

/// Anchors plus connections; the unit that is saved and shared.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGraph {
    anchors: BTreeMap<AnchorId, Anchor>,
    connections: BTreeMap<ConnectionId, Connection>,
    adjacency: Adjacency,
    format_version: u64,
}

impl Default for MapGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl MapGraph {
    pub fn new() -> Self {
        MapGraph {
            anchors: BTreeMap::new(),
            connections: BTreeMap::new(),
            adjacency: BTreeMap::new(),
            format_version: FORMAT_VERSION,
        }
    }

    pub fn format_version(&self) -> u64 {
        self.format_version
    }

    pub fn anchors(&self) -> &BTreeMap<AnchorId, Anchor> {
        &self.anchors
    }

    pub fn connections(&self) -> &BTreeMap<ConnectionId, Connection> {
        &self.connections
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn anchor(&self, id: &AnchorId) -> Option<&Anchor> {
        self.anchors.get(id)
    }

    pub fn connection(&self, id: &ConnectionId) -> Option<&Connection> {
        self.connections.get(id)
    }

    /// Every frame referenced by an anchor or a trail.
    pub fn frames(&self) -> Vec<FrameId> {
        let mut frames: Vec<FrameId> = self
            .anchors
            .values()
            .map(|a| a.frame.clone())
            .chain(self.connections.values().flat_map(|c| {
                std::iter::once(c.forward_trail.frame().clone())
                    .chain(c.reverse_trail.iter().map(|r| r.trail.frame().clone()))
            }))
            .collect();
        frames.sort();
        frames.dedup();
        frames
    }

    pub fn add_anchor(&mut self, anchor: Anchor) -> Result<AnchorId, MapError> {
        if self.anchors.contains_key(&anchor.id) {
            return Err(MapError::DuplicateAnchor(anchor.id));
        }
        anchor.validate()?;
        let id = anchor.id.clone();
        self.adjacency.entry(id.clone()).or_default();
        self.anchors.insert(id.clone(), anchor);
        Ok(id)
    }

    pub fn add_connection(&mut self, rec: ConnectionRecord) -> Result<ConnectionId, MapError> {
        if self.connections.contains_key(&rec.id) {
            return Err(MapError::DuplicateConnection(rec.id));
        }
        if rec.from_anchor == rec.to_anchor {
            return Err(MapError::SelfLoop(rec.id));
        }
        for a in [&rec.from_anchor, &rec.to_anchor] {
            if !self.anchors.contains_key(a) {
                return Err(MapError::MissingEndpoint {
                    connection: rec.id.clone(),
                    anchor: a.clone(),
                });
            }
        }
        let conn = Connection {
            length: rec.forward_trail.length(),
            id: rec.id,
            from_anchor: rec.from_anchor,
            to_anchor: rec.to_anchor,
            forward_trail: rec.forward_trail,
            reverse_trail: rec.reverse.map(ReverseRecord::into_trail),
            path_anchor_ids: rec.path_anchor_ids,
            from_pose_in_trail_frame: rec.from_pose_in_trail_frame,
            to_pose_in_trail_frame: rec.to_pose_in_trail_frame,
        };
        conn.validate()?;
        let id = conn.id.clone();
        self.insert_connection_unchecked(conn);
        Ok(id)
    }

    /// Attaches (or replaces) the recorded reverse walk of a connection.
    pub fn set_reverse_trail(&mut self, id: &ConnectionId, rev: ReverseRecord) -> Result<(), MapError> {
        let conn = self
            .connections
            .get(id)
            .ok_or_else(|| MapError::UnknownConnection(id.clone()))?;
        let mut updated = conn.clone();
        updated.reverse_trail = Some(rev.into_trail());
        updated.validate()?;
        self.connections.insert(id.clone(), updated);
        Ok(())
    }

    fn insert_connection_unchecked(&mut self, conn: Connection) {
        let id = conn.id.clone();
        for (anchor, dir) in [
            (&conn.from_anchor, Direction::Forward),
            (&conn.to_anchor, Direction::Reverse),
        ] {
            let list = self.adjacency.entry(anchor.clone()).or_default();
            list.push((id.clone(), dir));
            list.sort();
        }
        self.connections.insert(id, conn);
    }

    /// Adjacency recomputed from the connection table alone.
    pub fn rebuild_adjacency(&self) -> Adjacency {
        let mut adj: Adjacency = self.anchors.keys().map(|k| (k.clone(), Vec::new())).collect();
        for c in self.connections.values() {
            adj.entry(c.from_anchor.clone())
                .or_default()
                .push((c.id.clone(), Direction::Forward));
            adj.entry(c.to_anchor.clone())
                .or_default()
                .push((c.id.clone(), Direction::Reverse));
        }
        for list in adj.values_mut() {
            list.sort();
        }
        adj
    }

    /// Outgoing traversals from `anchor`, in adjacency order.
    pub fn traversals_from<'a>(&'a self, anchor: &AnchorId) -> impl Iterator<Item = Traversal> + 'a {
        self.adjacency
            .get(anchor)
            .into_iter()
            .flatten()
            .map(move |(cid, dir)| self.connections[cid].traversal(*dir))
    }

    /// Whether some connection already covers walking `from → to`
    /// with a dedicated recording.
    pub fn has_recorded_walk(&self, from: &AnchorId, to: &AnchorId) -> bool {
        self.connections.values().any(|c| {
            (&c.from_anchor == from && &c.to_anchor == to)
                || (&c.to_anchor == from && &c.from_anchor == to && c.reverse_trail.is_some())
        })
    }

    /// First `{prefix}{nnn}` identifier not used by an anchor.
    pub fn next_anchor_id(&self) -> AnchorId {
        self.next_anchor_ids(1).remove(0)
    }

    pub fn next_anchor_ids(&self, n: usize) -> Vec<AnchorId> {
        (1..)
            .map(|i| AnchorId(format!("a{i:03}")))
            .filter(|id| !self.anchors.contains_key(id))
            .take(n)
            .collect()
    }

    pub fn next_connection_id(&self) -> ConnectionId {
        (1..)
            .map(|i| ConnectionId(format!("c{i:03}")))
            .find(|id| !self.connections.contains_key(id))
            .expect("unbounded id space")
    }

    /// Equality of everything except creation timestamps, with float
    /// fields compared to within `tol`.
    pub fn structurally_eq(&self, other: &MapGraph, tol: f64) -> bool {
        self.format_version == other.format_version
            && self.anchors.len() == other.anchors.len()
            && self.connections.len() == other.connections.len()
            && self
                .anchors
                .iter()
                .zip(other.anchors.iter())
                .all(|((ka, a), (kb, b))| ka == kb && anchors_close(a, b, tol))
            && self
                .connections
                .iter()
                .zip(other.connections.iter())
                .all(|((ka, a), (kb, b))| ka == kb && connections_close(a, b, tol))
            && self.adjacency == other.adjacency
    }

    pub(crate) fn from_parts(
        anchors: BTreeMap<AnchorId, Anchor>,
        connections: BTreeMap<ConnectionId, Connection>,
    ) -> Self {
        let mut m = MapGraph {
            anchors,
            connections,
            adjacency: BTreeMap::new(),
            format_version: FORMAT_VERSION,
        };
        m.adjacency = m.rebuild_adjacency();
        m
    }
}

pub(crate) fn poses_close(a: &Pose, b: &Pose, tol: f64) -> bool {
    let (qa, qb) = (a.wxyz(), b.wxyz());
    let same = qa.iter().zip(&qb).all(|(x, y)| (x - y).abs() <= tol);
    let flipped = qa.iter().zip(&qb).all(|(x, y)| (x + y).abs() <= tol);
    a.frame == b.frame && (a.position - b.position).amax() <= tol && (same || flipped)
}

fn f_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn geo_close(a: &Option<GeoPose>, b: &Option<GeoPose>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => {
            f_close(a.latitude, b.latitude, tol)
                && f_close(a.longitude, b.longitude, tol)
                && f_close(a.altitude, b.altitude, tol)
                && f_close(a.yaw, b.yaw, tol)
                && f_close(a.ci_horizontal, b.ci_horizontal, tol)
                && f_close(a.ci_yaw, b.ci_yaw, tol)
                && f_close(a.ci_vertical, b.ci_vertical, tol)
        }
        _ => false,
    }
}

fn anchors_close(a: &Anchor, b: &Anchor, tol: f64) -> bool {
    a.id == b.id
        && a.kind == b.kind
        && a.frame == b.frame
        && poses_close(&a.reference_pose, &b.reference_pose, tol)
        && geo_close(&a.geo, &b.geo, tol)
        && f_close(a.quality, b.quality, tol)
        && a.name == b.name
        && a.notes == b.notes
}

pub(crate) fn trails_close(a: &BreadcrumbTrail, b: &BreadcrumbTrail, tol: f64) -> bool {
    a.frame() == b.frame()
        && f_close(a.spacing(), b.spacing(), tol)
        && a.points().len() == b.points().len()
        && a.points().iter().zip(b.points()).all(|(p, q)| poses_close(p, q, tol))
}

fn connections_close(a: &Connection, b: &Connection, tol: f64) -> bool {
    let reverse_ok = match (&a.reverse_trail, &b.reverse_trail) {
        (None, None) => true,
        (Some(x), Some(y)) => {
            trails_close(&x.trail, &y.trail, tol)
                && poses_close(&x.start_pose_in_trail_frame, &y.start_pose_in_trail_frame, tol)
                && poses_close(&x.end_pose_in_trail_frame, &y.end_pose_in_trail_frame, tol)
                && x.path_anchor_ids == y.path_anchor_ids
                && f_close(x.length, y.length, tol)
        }
        _ => false,
    };
    a.id == b.id
        && a.from_anchor == b.from_anchor
        && a.to_anchor == b.to_anchor
        && trails_close(&a.forward_trail, &b.forward_trail, tol)
        && reverse_ok
        && a.path_anchor_ids == b.path_anchor_ids
        && f_close(a.length, b.length, tol)
        && poses_close(&a.from_pose_in_trail_frame, &b.from_pose_in_trail_frame, tol)
        && poses_close(&a.to_pose_in_trail_frame, &b.to_pose_in_trail_frame, tol)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn add_indoor_anchor() {
        let mut m = MapGraph::new();
        m.add_anchor(indoor("a")).unwrap();
        assert_eq!(m.anchors().len(), 1);
        assert!(m.connections().is_empty());
    }

    #[test]
    fn duplicate_anchor_leaves_map_unchanged() {
        let mut m = MapGraph::new();
        m.add_anchor(indoor("a")).unwrap();
        let before = m.clone();
        assert_eq!(m.add_anchor(indoor("a")), Err(MapError::DuplicateAnchor("a".into())));
        assert_eq!(m, before);
    }

    #[test]
    fn anchor_kind_geo_consistency() {
        let mut m = MapGraph::new();
        let mut a = indoor("a");
        a.kind = AnchorKind::Outdoor;
        assert_eq!(m.add_anchor(a), Err(MapError::OutdoorWithoutGeo("a".into())));
        let mut b = indoor("b");
        b.geo = Some(GeoPose::new(1.0, 2.0, 0.0, 0.0).unwrap());
        assert_eq!(m.add_anchor(b), Err(MapError::IndoorWithGeo("b".into())));
        let mut c = indoor("c");
        c.reference_pose = Pose::from_translation(1.0, 0.0, 0.0, c.frame.clone());
        assert!(matches!(m.add_anchor(c), Err(MapError::InvalidAnchor(..))));
        assert!(m.anchors().is_empty());
    }

    #[test]
    fn straight_connection_length() {
        let mut m = MapGraph::new();
        m.add_anchor(indoor("a")).unwrap();
        m.add_anchor(indoor("b")).unwrap();
        let id = m.add_connection(straight_record("c1", "a", "b", 10.0, "s1")).unwrap();
        assert!((m.connection(&id).unwrap().length - 10.0).abs() < 1e-6);
        assert_eq!(m.adjacency(), &m.rebuild_adjacency());
        assert_eq!(
            m.adjacency()[&AnchorId::new("b")],
            vec![(id.clone(), Direction::Reverse)]
        );
    }

    #[test]
    fn connection_errors() {
        let mut m = MapGraph::new();
        m.add_anchor(indoor("a")).unwrap();
        m.add_anchor(indoor("b")).unwrap();
        assert_eq!(
            m.add_connection(straight_record("c1", "a", "a", 10.0, "s1")),
            Err(MapError::SelfLoop("c1".into()))
        );
        assert!(matches!(
            m.add_connection(straight_record("c1", "a", "z", 10.0, "s1")),
            Err(MapError::MissingEndpoint { .. })
        ));
        let mut far = straight_record("c1", "a", "b", 10.0, "s1");
        far.from_pose_in_trail_frame = Pose::from_translation(3.0, 0.0, 0.0, FrameId::new("s1"));
        assert!(matches!(m.add_connection(far), Err(MapError::InvalidConnection(..))));
        assert!(m.connections().is_empty());
    }

    #[test]
    fn reverse_traversal_falls_back_to_forward_trail() {
        let mut m = MapGraph::new();
        m.add_anchor(indoor("a")).unwrap();
        m.add_anchor(indoor("b")).unwrap();
        let id = m.add_connection(straight_record("c1", "a", "b", 10.0, "s1")).unwrap();
        let t = m.connection(&id).unwrap().traversal(Direction::Reverse);
        assert_eq!(t.entry, AnchorId::new("b"));
        assert_eq!(t.trail.first().position.y, 10.0);
        assert_eq!(t.cost, 10.0);
        assert!(!m.has_recorded_walk(&"b".into(), &"a".into()));

        let rev = straight_record("x", "b", "a", 12.0, "s2");
        m.set_reverse_trail(
            &id,
            ReverseRecord {
                trail: rev.forward_trail,
                start_pose_in_trail_frame: rev.from_pose_in_trail_frame,
                end_pose_in_trail_frame: rev.to_pose_in_trail_frame,
                path_anchor_ids: vec![],
            },
        )
        .unwrap();
        let c = m.connection(&id).unwrap();
        assert!((c.cost(Direction::Reverse) - 12.0).abs() < 1e-9);
        assert_eq!(c.traversal(Direction::Reverse).trail.frame(), &FrameId::new("s2"));
        assert!(m.has_recorded_walk(&"b".into(), &"a".into()));
    }

    #[test]
    fn fresh_ids_skip_taken() {
        let mut m = MapGraph::new();
        m.add_anchor(indoor("a001")).unwrap();
        assert_eq!(m.next_anchor_id(), AnchorId::new("a002"));
        assert_eq!(m.next_connection_id(), ConnectionId::new("c001"));
    }
}
