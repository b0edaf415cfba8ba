//! Canonical on-disk form of a [`MapGraph`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    Anchor, AnchorId, AnchorKind, BreadcrumbTrail, Connection, ConnectionId, MapError, MapGraph, ReverseTrail,
};
use crate::canonical;
use crate::geom::{pose_from_stored, FrameId, GeoPose, Pose};

pub const FORMAT_VERSION: u64 = 1;

/// One invariant violation found while auditing a map document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapIssue {
    /// `document`, `anchor <id>` or `connection <id>`.
    pub subject: String,
    pub reason: String,
}

impl fmt::Display for MapIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = format!("{}: ", self.subject);
        let reason = self.reason.strip_prefix(&prefix).unwrap_or(&self.reason);
        write!(f, "{prefix}{reason}")
    }
}

// The document types mirror the typed model but defer every semantic check
// to `audit`, so problems are reported against the id that owns them.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDocument {
    format_version: u64,
    anchors: BTreeMap<AnchorId, AnchorDoc>,
    connections: BTreeMap<ConnectionId, ConnectionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    frame: FrameId,
    orientation: [f64; 4],
    position: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrailDoc {
    frame: FrameId,
    points: Vec<[f64; 7]>,
    spacing: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorDoc {
    created_at: u64,
    frame: FrameId,
    geo: Option<GeoPose>,
    kind: AnchorKind,
    name: String,
    notes: String,
    quality: f64,
    reference_pose: PoseDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReverseDoc {
    end_pose_in_trail_frame: PoseDoc,
    length: f64,
    path_anchor_ids: Vec<String>,
    start_pose_in_trail_frame: PoseDoc,
    trail: TrailDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectionDoc {
    forward_trail: TrailDoc,
    from_anchor: AnchorId,
    from_pose_in_trail_frame: PoseDoc,
    length: f64,
    path_anchor_ids: Vec<String>,
    reverse_trail: Option<ReverseDoc>,
    to_anchor: AnchorId,
    to_pose_in_trail_frame: PoseDoc,
}

impl From<&Pose> for PoseDoc {
    fn from(p: &Pose) -> Self {
        PoseDoc {
            frame: p.frame.clone(),
            orientation: p.wxyz(),
            position: [p.position.x, p.position.y, p.position.z],
        }
    }
}

impl From<&BreadcrumbTrail> for TrailDoc {
    fn from(t: &BreadcrumbTrail) -> Self {
        TrailDoc {
            frame: t.frame().clone(),
            points: t
                .points()
                .iter()
                .map(|p| {
                    let q = p.wxyz();
                    [p.position.x, p.position.y, p.position.z, q[0], q[1], q[2], q[3]]
                })
                .collect(),
            spacing: t.spacing(),
        }
    }
}

impl PoseDoc {
    fn to_pose(&self) -> Result<Pose, String> {
        pose_from_stored(self.position, self.orientation, self.frame.clone()).map_err(|e| e.to_string())
    }
}

impl TrailDoc {
    fn to_trail(&self) -> Result<BreadcrumbTrail, String> {
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(i, c)| {
                pose_from_stored([c[0], c[1], c[2]], [c[3], c[4], c[5], c[6]], self.frame.clone())
                    .map_err(|e| format!("crumb {i}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        BreadcrumbTrail::new(points, self.spacing).map_err(|e| e.to_string())
    }
}

fn anchor_from_doc(id: &AnchorId, doc: &AnchorDoc) -> Result<Anchor, String> {
    let anchor = Anchor {
        id: id.clone(),
        kind: doc.kind,
        frame: doc.frame.clone(),
        reference_pose: doc
            .reference_pose
            .to_pose()
            .map_err(|e| format!("reference_pose: {e}"))?,
        geo: doc.geo.clone(),
        quality: doc.quality,
        name: doc.name.clone(),
        notes: doc.notes.clone(),
        created_at: doc.created_at,
    };
    anchor.validate().map_err(|e| e.to_string())?;
    Ok(anchor)
}

fn connection_from_doc(
    id: &ConnectionId,
    doc: &ConnectionDoc,
    anchors: &BTreeMap<AnchorId, AnchorDoc>,
) -> Result<Connection, String> {
    for a in [&doc.from_anchor, &doc.to_anchor] {
        if !anchors.contains_key(a) {
            return Err(format!("endpoint anchor {a} does not exist"));
        }
    }
    let reverse_trail = match &doc.reverse_trail {
        None => None,
        Some(r) => Some(ReverseTrail {
            trail: r.trail.to_trail().map_err(|e| format!("reverse trail: {e}"))?,
            start_pose_in_trail_frame: r
                .start_pose_in_trail_frame
                .to_pose()
                .map_err(|e| format!("reverse start pose: {e}"))?,
            end_pose_in_trail_frame: r
                .end_pose_in_trail_frame
                .to_pose()
                .map_err(|e| format!("reverse end pose: {e}"))?,
            path_anchor_ids: r.path_anchor_ids.clone(),
            length: r.length,
        }),
    };
    let conn = Connection {
        id: id.clone(),
        from_anchor: doc.from_anchor.clone(),
        to_anchor: doc.to_anchor.clone(),
        forward_trail: doc
            .forward_trail
            .to_trail()
            .map_err(|e| format!("forward trail: {e}"))?,
        reverse_trail,
        path_anchor_ids: doc.path_anchor_ids.clone(),
        length: doc.length,
        from_pose_in_trail_frame: doc
            .from_pose_in_trail_frame
            .to_pose()
            .map_err(|e| format!("from pose: {e}"))?,
        to_pose_in_trail_frame: doc
            .to_pose_in_trail_frame
            .to_pose()
            .map_err(|e| format!("to pose: {e}"))?,
    };
    conn.validate().map_err(|e| e.to_string())?;
    Ok(conn)
}

pub fn serialize(map: &MapGraph) -> Result<Vec<u8>, MapError> {
    let doc = MapDocument {
        format_version: map.format_version(),
        anchors: map
            .anchors()
            .iter()
            .map(|(id, a)| {
                (
                    id.clone(),
                    AnchorDoc {
                        created_at: a.created_at,
                        frame: a.frame.clone(),
                        geo: a.geo.clone(),
                        kind: a.kind,
                        name: a.name.clone(),
                        notes: a.notes.clone(),
                        quality: a.quality,
                        reference_pose: (&a.reference_pose).into(),
                    },
                )
            })
            .collect(),
        connections: map
            .connections()
            .iter()
            .map(|(id, c)| {
                (
                    id.clone(),
                    ConnectionDoc {
                        forward_trail: (&c.forward_trail).into(),
                        from_anchor: c.from_anchor.clone(),
                        from_pose_in_trail_frame: (&c.from_pose_in_trail_frame).into(),
                        length: c.length,
                        path_anchor_ids: c.path_anchor_ids.clone(),
                        reverse_trail: c.reverse_trail.as_ref().map(|r| ReverseDoc {
                            end_pose_in_trail_frame: (&r.end_pose_in_trail_frame).into(),
                            length: r.length,
                            path_anchor_ids: r.path_anchor_ids.clone(),
                            start_pose_in_trail_frame: (&r.start_pose_in_trail_frame).into(),
                            trail: (&r.trail).into(),
                        }),
                        to_anchor: c.to_anchor.clone(),
                        to_pose_in_trail_frame: (&c.to_pose_in_trail_frame).into(),
                    },
                )
            })
            .collect(),
    };
    canonical::to_string(&doc)
        .map(String::into_bytes)
        .map_err(|e| MapError::Malformed(e.to_string()))
}

fn parse_document(bytes: &[u8]) -> Result<MapDocument, MapError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| MapError::Malformed(e.to_string()))?;
    match value.get("format_version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(MapError::UnknownFormatVersion(v)),
        None => return Err(MapError::Malformed("missing integer format_version".into())),
    }
    serde_json::from_value(value).map_err(|e| MapError::Malformed(e.to_string()))
}

/// Every invariant violation in `doc`, ordered by subject.
fn audit_document(doc: &MapDocument) -> (Vec<MapIssue>, Option<MapGraph>) {
    let mut issues = Vec::new();
    let mut anchors = BTreeMap::new();
    let mut connections = BTreeMap::new();
    for (id, a) in &doc.anchors {
        match anchor_from_doc(id, a) {
            Ok(anchor) => {
                anchors.insert(id.clone(), anchor);
            }
            Err(reason) => issues.push(MapIssue {
                subject: format!("anchor {id}"),
                reason,
            }),
        }
    }
    for (id, c) in &doc.connections {
        match connection_from_doc(id, c, &doc.anchors) {
            Ok(conn) => {
                connections.insert(id.clone(), conn);
            }
            Err(reason) => issues.push(MapIssue {
                subject: format!("connection {id}"),
                reason,
            }),
        }
    }
    if issues.is_empty() {
        (issues, Some(MapGraph::from_parts(anchors, connections)))
    } else {
        (issues, None)
    }
}

/// Checks a map document without building it. Structural problems (bad
/// JSON, missing fields, unknown version) come back as a single
/// `document` issue.
pub fn audit(bytes: &[u8]) -> Vec<MapIssue> {
    match parse_document(bytes) {
        Ok(doc) => audit_document(&doc).0,
        Err(e) => vec![MapIssue {
            subject: "document".into(),
            reason: e.to_string(),
        }],
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<MapGraph, MapError> {
    let doc = parse_document(bytes)?;
    let (issues, map) = audit_document(&doc);
    match (issues.into_iter().next(), map) {
        (Some(issue), _) => Err(MapError::Invariant {
            subject: issue.subject,
            reason: issue.reason,
        }),
        (None, Some(map)) => Ok(map),
        (None, None) => unreachable!("audit returns a map when there are no issues"),
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::*;
    use super::*;

    fn sample() -> MapGraph {
        let mut m = MapGraph::new();
        for id in ["a", "b", "c"] {
            m.add_anchor(indoor(id).with_notes("side door").with_created_at(1_700_000_000))
                .unwrap();
        }
        m.add_connection(straight_record("c1", "a", "b", 10.0, "s1")).unwrap();
        m.add_connection(straight_record("c2", "b", "c", 7.5, "s2")).unwrap();
        m
    }

    #[test]
    fn empty_map_round_trip() {
        let m = MapGraph::new();
        let bytes = serialize(&m).unwrap();
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "{\n  \"anchors\": {},\n  \"connections\": {},\n  \"format_version\": 1\n}\n"
        );
        let back = deserialize(&bytes).unwrap();
        assert_eq!(serialize(&back).unwrap(), bytes);
    }

    #[test]
    fn three_anchor_round_trip() {
        let m = sample();
        let bytes = serialize(&m).unwrap();
        let back = deserialize(&bytes).unwrap();
        assert!(back.structurally_eq(&m, 1e-9));
        assert_eq!(serialize(&back).unwrap(), bytes);
        assert_eq!(serialize(&m).unwrap(), bytes);
    }

    #[test]
    fn dangling_endpoint_names_connection() {
        let bytes = serialize(&sample()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let tampered = text.replacen("\"to_anchor\": \"c\"", "\"to_anchor\": \"zz\"", 1);
        assert_ne!(tampered, text);
        match deserialize(tampered.as_bytes()) {
            Err(MapError::Invariant { subject, reason }) => {
                assert_eq!(subject, "connection c2");
                assert!(reason.contains("zz"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let text = String::from_utf8(serialize(&sample()).unwrap()).unwrap();
        let tampered = text.replace("\"format_version\": 1", "\"format_version\": 7");
        assert_eq!(deserialize(tampered.as_bytes()), Err(MapError::UnknownFormatVersion(7)));
    }

    #[test]
    fn audit_collects_every_issue() {
        let text = String::from_utf8(serialize(&sample()).unwrap()).unwrap();
        let tampered = text
            .replace("\"length\": 10.000000000", "\"length\": 11.000000000")
            .replace("\"quality\": 0.800000000", "\"quality\": 1.800000000");
        let issues = audit(tampered.as_bytes());
        let subjects: Vec<_> = issues.iter().map(|i| i.subject.as_str()).collect();
        assert_eq!(
            subjects,
            ["anchor a", "anchor b", "anchor c", "connection c1"],
            "{issues:?}"
        );
        assert!(audit(b"not json").iter().any(|i| i.subject == "document"));
    }
}
