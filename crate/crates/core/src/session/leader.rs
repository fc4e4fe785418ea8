//! Behavior-tree leaf bindings that drive the leader during a mission.
//!
//! Leaves do not move the vehicle directly: each tick leaves a command for the
//! next simulation step in `command`.

use std::collections::BTreeMap;

use crate::bt::{
    Bindings, Blackboard, BtError, Leaf, NodeStatus, ABORT_KEY, ABORT_REQUESTED, COMPLETE_KEY,
    EXECUTE_ABORT, GO_TO_WAYPOINT, INSPECT_SEGMENT, REPORT_COMPLETE, TRANSIT_TO_START,
    WAYPOINTS_KEY,
};
use crate::geometry::Vec2;
use crate::guidance::{baseline_controller, next_via_point, pursue_point, ControllerGains, FormationTarget};
use crate::sonar::{target_visible, SonarConfig};
use crate::world::{ControlInput, LeaderMode, VehicleState, Waypoint, WorldConfig};

pub struct LeaderBindings<'a> {
    pub leader: &'a VehicleState,
    pub mode: LeaderMode,
    pub world: &'a WorldConfig,
    pub sonar: &'a SonarConfig,
    pub gains: &'a ControllerGains,
    pub retreat: Vec2,
    pub dwell: f64,
    /// Accumulated in-footprint time per InspectSegment node id.
    pub timers: &'a mut BTreeMap<u32, f64>,
    pub command: ControlInput,
    pub reported: bool,
}

impl LeaderBindings<'_> {
    fn waypoint(&self, leaf: Leaf<'_>, bb: &Blackboard) -> Result<Waypoint, BtError> {
        let wps = bb.waypoints(WAYPOINTS_KEY)?;
        let i = leaf.arg.unwrap_or(0);
        wps.get(i)
            .copied()
            .ok_or_else(|| BtError::Malformed(format!("{} refers to waypoint {i} of {}", leaf.name, wps.len())))
    }

    fn drive_to(&mut self, wp: Waypoint) -> NodeStatus {
        if self.mode == LeaderMode::Manual {
            return NodeStatus::Running;
        }
        if self.leader.position().distance(wp.position) <= self.gains.arrive_tol {
            self.command = ControlInput::ZERO;
            return NodeStatus::Success;
        }
        let via = self.via(wp.position);
        self.command = if via == wp.position {
            let target = FormationTarget {
                position: wp.position,
                heading: wp.heading,
            };
            baseline_controller(self.leader, &target, self.world, self.gains)
        } else {
            pursue_point(self.leader, via, self.world.v_max, self.world, self.gains)
        };
        NodeStatus::Running
    }

    fn via(&self, goal: Vec2) -> Vec2 {
        next_via_point(self.leader.position(), goal, self.world, 0.5 * self.gains.d_safe)
    }

    fn inspect(&mut self, leaf: Leaf<'_>, wp: Waypoint) -> NodeStatus {
        if self.mode == LeaderMode::Autonomous {
            let target = FormationTarget {
                position: wp.position,
                heading: wp.heading,
            };
            self.command = baseline_controller(self.leader, &target, self.world, self.gains);
        }
        let hull_point = wp.hull_point(self.world.standoff);
        let seen = target_visible(&self.leader.pose, hull_point, self.world, self.sonar).visible;
        let t = self.timers.entry(leaf.id).or_insert(0.0);
        if seen {
            *t += self.world.dt;
        }
        if *t + 1e-9 >= self.dwell {
            self.timers.remove(&leaf.id);
            self.command = ControlInput::ZERO;
            NodeStatus::Success
        } else {
            NodeStatus::Running
        }
    }
}

impl Bindings for LeaderBindings<'_> {
    fn condition(&mut self, leaf: Leaf<'_>, bb: &mut Blackboard) -> Result<bool, BtError> {
        match leaf.name {
            ABORT_REQUESTED => bb.flag(ABORT_KEY),
            other => Err(BtError::UnboundLeaf(other.to_string())),
        }
    }

    fn action(&mut self, leaf: Leaf<'_>, bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
        match leaf.name {
            TRANSIT_TO_START | GO_TO_WAYPOINT => {
                let wp = self.waypoint(leaf, bb)?;
                Ok(self.drive_to(wp))
            }
            INSPECT_SEGMENT => {
                let wp = self.waypoint(leaf, bb)?;
                Ok(self.inspect(leaf, wp))
            }
            EXECUTE_ABORT => {
                if self.mode == LeaderMode::Manual {
                    return Ok(NodeStatus::Running);
                }
                if self.leader.position().distance(self.retreat) <= self.gains.arrive_tol {
                    self.command = ControlInput::ZERO;
                    return Ok(NodeStatus::Success);
                }
                let via = self.via(self.retreat);
                self.command = pursue_point(self.leader, via, self.world.v_max, self.world, self.gains);
                Ok(NodeStatus::Running)
            }
            REPORT_COMPLETE => {
                bb.set(COMPLETE_KEY, crate::bt::Value::Bool(true));
                self.reported = true;
                self.command = ControlInput::ZERO;
                Ok(NodeStatus::Success)
            }
            other => Err(BtError::UnboundLeaf(other.to_string())),
        }
    }

    fn halt(&mut self, leaf: Leaf<'_>, _bb: &mut Blackboard) {
        self.timers.remove(&leaf.id);
    }

    fn has_condition(&self, name: &str) -> bool {
        name == ABORT_REQUESTED
    }

    fn has_action(&self, name: &str) -> bool {
        matches!(
            name,
            TRANSIT_TO_START | GO_TO_WAYPOINT | INSPECT_SEGMENT | EXECUTE_ABORT | REPORT_COMPLETE
        )
    }
}
