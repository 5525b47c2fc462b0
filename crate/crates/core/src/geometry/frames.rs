//! The frame graph: stored poses between named coordinate systems and path
//! resolution along them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use super::transform::RigidTransform;
use super::GeometryError;

/// A coordinate system. The four built-in frames are the C-arm camera, the
/// marker, the head-mounted display and the HMD's world map.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameId {
    C,
    M,
    Hmd,
    W,
    Named(String),
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameId::C => f.write_str("C"),
            FrameId::M => f.write_str("M"),
            FrameId::Hmd => f.write_str("HMD"),
            FrameId::W => f.write_str("W"),
            FrameId::Named(name) => f.write_str(name),
        }
    }
}

impl FromStr for FrameId {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "C" => FrameId::C,
            "M" => FrameId::M,
            "HMD" => FrameId::Hmd,
            "W" => FrameId::W,
            "" => return Err(GeometryError::Parse("empty frame id".into())),
            other => FrameId::Named(other.to_string()),
        })
    }
}

/// A stored pose `source_to_target` observed at `timestamp` seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedPose {
    pub transform: RigidTransform,
    pub source: FrameId,
    pub target: FrameId,
    pub timestamp: f64,
}

impl TimedPose {
    pub fn new(source: FrameId, target: FrameId, timestamp: f64, transform: RigidTransform) -> Self {
        Self {
            transform,
            source,
            target,
            timestamp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Validity {
    /// Usable only at its exact timestamp.
    Instant,
    /// Usable at its timestamp and any later time (e.g. `C→W` while the
    /// C-arm stays in place).
    FromOnward,
}

#[derive(Clone, Debug)]
struct Edge {
    source: FrameId,
    target: FrameId,
    validity: Validity,
    // Keyed by timestamp bits; timestamps are non-negative so bit order is
    // numeric order.
    samples: BTreeMap<u64, RigidTransform>,
}

/// A set of [`TimedPose`]s forming, at each query time, a tree of frames.
///
/// Reads (`resolve`) borrow immutably and may run concurrently; inserts need
/// `&mut self`.
#[derive(Clone, Debug, Default)]
pub struct FrameGraph {
    edges: Vec<Edge>,
}

impl FrameGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a pose valid only at its exact timestamp.
    pub fn insert(&mut self, pose: TimedPose) -> Result<(), GeometryError> {
        self.insert_with(pose, Validity::Instant)
    }

    /// Stores a pose that stays valid from its timestamp onward.
    pub fn insert_constant(&mut self, pose: TimedPose) -> Result<(), GeometryError> {
        self.insert_with(pose, Validity::FromOnward)
    }

    fn insert_with(&mut self, pose: TimedPose, validity: Validity) -> Result<(), GeometryError> {
        if !(pose.timestamp >= 0.0) || !pose.timestamp.is_finite() {
            return Err(GeometryError::InvalidTimestamp(pose.timestamp));
        }
        if pose.source == pose.target {
            return Err(GeometryError::SelfLoop(pose.source.to_string()));
        }
        let key = time_key(pose.timestamp);
        let existing = self
            .edges
            .iter_mut()
            .find(|e| e.source == pose.source && e.target == pose.target && e.validity == validity);
        match existing {
            Some(edge) => {
                if edge.samples.contains_key(&key) {
                    return Err(GeometryError::DuplicatePose {
                        from: pose.source.to_string(),
                        to: pose.target.to_string(),
                        timestamp: pose.timestamp,
                    });
                }
                edge.samples.insert(key, pose.transform);
            }
            None => {
                let mut samples = BTreeMap::new();
                samples.insert(key, pose.transform);
                self.edges.push(Edge {
                    source: pose.source,
                    target: pose.target,
                    validity,
                    samples,
                });
            }
        }
        Ok(())
    }

    fn edge_at(&self, edge: &Edge, t: f64) -> Option<RigidTransform> {
        let key = time_key(t);
        match edge.validity {
            Validity::Instant => edge.samples.get(&key).copied(),
            Validity::FromOnward => edge.samples.range(..=key).next_back().map(|(_, v)| *v),
        }
    }

    /// The transform mapping `from` coordinates into `to` coordinates at time
    /// `t`, composed along the unique path of usable poses.
    pub fn resolve(&self, from: &FrameId, to: &FrameId, t: f64) -> Result<RigidTransform, GeometryError> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(GeometryError::InvalidTimestamp(t));
        }
        if from == to {
            return Ok(RigidTransform::identity());
        }
        // adjacency: frame -> list of (neighbor, from_to_neighbor)
        let mut adj: HashMap<&FrameId, Vec<(&FrameId, RigidTransform)>> = HashMap::new();
        for edge in &self.edges {
            if let Some(x) = self.edge_at(edge, t) {
                adj.entry(&edge.source).or_default().push((&edge.target, x));
                adj.entry(&edge.target)
                    .or_default()
                    .push((&edge.source, x.inverse()));
            }
        }

        let mut found: Option<RigidTransform> = None;
        let mut count = 0usize;
        let mut visited = HashSet::new();
        visited.insert(from);
        search(
            &adj,
            from,
            to,
            RigidTransform::identity(),
            &mut visited,
            &mut found,
            &mut count,
        );
        match count {
            0 => Err(GeometryError::NoPath {
                from: from.to_string(),
                to: to.to_string(),
            }),
            1 => Ok(found.expect("one path recorded")),
            _ => Err(GeometryError::AmbiguousPath {
                from: from.to_string(),
                to: to.to_string(),
            }),
        }
    }
}

fn time_key(t: f64) -> u64 {
    // folds -0.0 into 0.0
    (t + 0.0).to_bits()
}

// Depth-first enumeration of simple paths, stopping after the second hit.
fn search<'a>(
    adj: &HashMap<&'a FrameId, Vec<(&'a FrameId, RigidTransform)>>,
    node: &'a FrameId,
    goal: &FrameId,
    acc: RigidTransform,
    visited: &mut HashSet<&'a FrameId>,
    found: &mut Option<RigidTransform>,
    count: &mut usize,
) {
    let Some(neighbors) = adj.get(node) else {
        return;
    };
    for (next, step) in neighbors {
        if *count > 1 {
            return;
        }
        if visited.contains(next) {
            continue;
        }
        let acc_next = step.compose(&acc);
        if *next == goal {
            *count += 1;
            found.get_or_insert(acc_next);
            continue;
        }
        visited.insert(next);
        search(adj, next, goal, acc_next, visited, found, count);
        visited.remove(next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(s: FrameId, t: FrameId, ts: f64, x: RigidTransform) -> TimedPose {
        TimedPose::new(s, t, ts, x)
    }

    #[test]
    fn single_edge_resolves_both_ways() {
        let c_to_m = RigidTransform::rot_x(0.4).compose(&RigidTransform::translate(1.0, 2.0, 3.0));
        let mut g = FrameGraph::new();
        g.insert(pose(FrameId::C, FrameId::M, 0.0, c_to_m)).unwrap();
        assert_eq!(g.resolve(&FrameId::C, &FrameId::M, 0.0).unwrap(), c_to_m);
        let back = g.resolve(&FrameId::M, &FrameId::C, 0.0).unwrap();
        assert!(back.max_abs_diff(&c_to_m.inverse()) < 1e-12);
    }

    #[test]
    fn two_edges_through_marker() {
        let c_to_m = RigidTransform::rot_y(0.3).compose(&RigidTransform::translate(10.0, 0.0, 900.0));
        let hmd_to_m = RigidTransform::rot_z(-1.1).compose(&RigidTransform::translate(-5.0, 40.0, 600.0));
        let mut g = FrameGraph::new();
        g.insert(pose(FrameId::C, FrameId::M, 1.0, c_to_m)).unwrap();
        g.insert(pose(FrameId::Hmd, FrameId::M, 1.0, hmd_to_m)).unwrap();
        let c_to_hmd = g.resolve(&FrameId::C, &FrameId::Hmd, 1.0).unwrap();
        let expected = hmd_to_m.inverse().compose(&c_to_m);
        assert!(c_to_hmd.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn disconnected_and_missing_time() {
        let mut g = FrameGraph::new();
        g.insert(pose(FrameId::C, FrameId::M, 1.0, RigidTransform::identity()))
            .unwrap();
        assert!(matches!(
            g.resolve(&FrameId::C, &FrameId::W, 1.0),
            Err(GeometryError::NoPath { .. })
        ));
        // no interpolation: exact timestamps only
        assert!(matches!(
            g.resolve(&FrameId::C, &FrameId::M, 1.5),
            Err(GeometryError::NoPath { .. })
        ));
    }

    #[test]
    fn cycle_is_ambiguous() {
        let mut g = FrameGraph::new();
        g.insert(pose(FrameId::C, FrameId::M, 0.0, RigidTransform::identity()))
            .unwrap();
        g.insert(pose(FrameId::M, FrameId::W, 0.0, RigidTransform::identity()))
            .unwrap();
        g.insert(pose(FrameId::C, FrameId::W, 0.0, RigidTransform::identity()))
            .unwrap();
        assert!(matches!(
            g.resolve(&FrameId::C, &FrameId::W, 0.0),
            Err(GeometryError::AmbiguousPath { .. })
        ));
    }

    #[test]
    fn duplicate_triple_rejected() {
        let mut g = FrameGraph::new();
        let p = pose(FrameId::C, FrameId::M, 0.5, RigidTransform::identity());
        g.insert(p.clone()).unwrap();
        assert!(matches!(g.insert(p), Err(GeometryError::DuplicatePose { .. })));
        assert!(matches!(
            g.insert(pose(FrameId::C, FrameId::M, -1.0, RigidTransform::identity())),
            Err(GeometryError::InvalidTimestamp(_))
        ));
    }

    #[test]
    fn constant_edges_hold_after_lock() {
        let c_to_w = RigidTransform::translate(1.0, 2.0, 3.0);
        let mut g = FrameGraph::new();
        g.insert_constant(pose(FrameId::C, FrameId::W, 2.0, c_to_w))
            .unwrap();
        g.insert(pose(FrameId::W, FrameId::Hmd, 5.0, RigidTransform::rot_x(0.2)))
            .unwrap();
        assert!(g.resolve(&FrameId::C, &FrameId::Hmd, 5.0).is_ok());
        // before the lock there is no calibration
        assert!(g.resolve(&FrameId::C, &FrameId::W, 1.0).is_err());
    }

    #[test]
    fn named_frames_parse() {
        assert_eq!("HMD".parse::<FrameId>().unwrap(), FrameId::Hmd);
        assert_eq!(
            "table".parse::<FrameId>().unwrap(),
            FrameId::Named("table".into())
        );
    }
}
