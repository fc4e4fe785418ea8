//! Mission templates. Each template turns validated parameters into a tree
//! plus the blackboard entries its leaves read.

use std::collections::BTreeMap;

use super::{BehaviorTree, Blackboard, BtError, BtNode, Value};
use crate::world::Waypoint;

pub const ABORT_KEY: &str = "abort_requested";
pub const WAYPOINTS_KEY: &str = "waypoints";
pub const COMPLETE_KEY: &str = "mission_complete";

pub const ABORT_REQUESTED: &str = "AbortRequested?";
pub const EXECUTE_ABORT: &str = "ExecuteAbort";
pub const TRANSIT_TO_START: &str = "TransitToStart";
pub const GO_TO_WAYPOINT: &str = "GoToWaypoint";
pub const INSPECT_SEGMENT: &str = "InspectSegment";
pub const REPORT_COMPLETE: &str = "ReportComplete";

#[derive(Debug, Clone, PartialEq)]
pub struct MissionParams {
    pub waypoints: Vec<Waypoint>,
}

fn emergency_branch() -> BtNode {
    BtNode::sequence(
        "Emergency",
        false,
        vec![
            BtNode::condition(ABORT_REQUESTED),
            BtNode::action(EXECUTE_ABORT),
        ],
    )
}

fn seed_blackboard(bb: &mut Blackboard, name: &str, waypoints: &[Waypoint]) {
    bb.set(WAYPOINTS_KEY, Value::Waypoints(waypoints.to_vec()));
    bb.set(ABORT_KEY, Value::Bool(false));
    bb.set(COMPLETE_KEY, Value::Bool(false));
    bb.set("mission", Value::Text(name.to_string()));
}

/// Reactive root: the emergency branch preempts the inspection sequence as soon
/// as an abort is requested.
///
/// ```text
/// Fallback(reactive) Mission
/// ├── Sequence(reactive) Emergency [AbortRequested?, ExecuteAbort]
/// └── Sequence(memory) Inspection
///     ├── TransitToStart
///     ├── GoToWaypoint[0], InspectSegment[0], …
///     └── ReportComplete
/// ```
pub fn build_hull_inspection(
    waypoints: &[Waypoint],
    bb: &mut Blackboard,
) -> Result<BehaviorTree, BtError> {
    if waypoints.is_empty() {
        return Err(BtError::EmptyMission);
    }
    let mut steps = vec![BtNode::action(TRANSIT_TO_START)];
    for i in 0..waypoints.len() {
        steps.push(BtNode::action_with(GO_TO_WAYPOINT, Some(i)));
        steps.push(BtNode::action_with(INSPECT_SEGMENT, Some(i)));
    }
    steps.push(BtNode::action(REPORT_COMPLETE));
    let root = BtNode::fallback(
        "Mission",
        false,
        vec![emergency_branch(), BtNode::sequence("Inspection", true, steps)],
    );
    seed_blackboard(bb, "hull_inspection", waypoints);
    BehaviorTree::new(root)
}

/// Single-waypoint transit with the same emergency branch.
pub fn build_goto(waypoint: Waypoint, bb: &mut Blackboard) -> Result<BehaviorTree, BtError> {
    let root = BtNode::fallback(
        "Mission",
        false,
        vec![
            emergency_branch(),
            BtNode::sequence(
                "Transit",
                true,
                vec![
                    BtNode::action_with(GO_TO_WAYPOINT, Some(0)),
                    BtNode::action(REPORT_COMPLETE),
                ],
            ),
        ],
    );
    seed_blackboard(bb, "goto", &[waypoint]);
    BehaviorTree::new(root)
}

type Builder = fn(&MissionParams, &mut Blackboard) -> Result<BehaviorTree, BtError>;

/// A named tree builder with a fixed parameter schema.
#[derive(Clone)]
pub struct MissionTemplate {
    pub name: &'static str,
    /// Human-readable parameter schema.
    pub parameters: &'static str,
    build: Builder,
}

impl MissionTemplate {
    pub fn instantiate(&self, params: &MissionParams, bb: &mut Blackboard) -> Result<BehaviorTree, BtError> {
        (self.build)(params, bb)
    }
}

pub struct MissionRegistry {
    templates: BTreeMap<&'static str, MissionTemplate>,
}

impl Default for MissionRegistry {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(
            "hull_inspection",
            MissionTemplate {
                name: "hull_inspection",
                parameters: "waypoints: non-empty ordered list of standoff poses",
                build: |p, bb| build_hull_inspection(&p.waypoints, bb),
            },
        );
        templates.insert(
            "goto",
            MissionTemplate {
                name: "goto",
                parameters: "waypoints: exactly one pose",
                build: |p, bb| match p.waypoints.as_slice() {
                    [w] => build_goto(*w, bb),
                    [] => Err(BtError::EmptyMission),
                    _ => Err(BtError::Malformed("goto takes exactly one waypoint".into())),
                },
            },
        );
        Self { templates }
    }
}

impl MissionRegistry {
    pub fn get(&self, name: &str) -> Result<&MissionTemplate, BtError> {
        self.templates
            .get(name)
            .ok_or_else(|| BtError::UnknownTemplate(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().copied()
    }

    pub fn instantiate(
        &self,
        name: &str,
        params: &MissionParams,
        bb: &mut Blackboard,
    ) -> Result<BehaviorTree, BtError> {
        self.get(name)?.instantiate(params, bb)
    }
}
