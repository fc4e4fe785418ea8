//! Behavior-tree mission executive.
//!
//! Trees are ticked synchronously by the session loop. Composite nodes keep
//! their own resume state (cursor, repeat counters, parallel completions);
//! leaves are resolved by name through [`Bindings`]. Any node may carry a
//! forced status that replaces its normal evaluation until cleared.

mod blackboard;
mod mission;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blackboard::{Blackboard, Value};
pub use mission::{
    build_goto, build_hull_inspection, MissionParams, MissionRegistry, MissionTemplate,
    ABORT_KEY, ABORT_REQUESTED, COMPLETE_KEY, EXECUTE_ABORT, GO_TO_WAYPOINT, INSPECT_SEGMENT,
    REPORT_COMPLETE, TRANSIT_TO_START, WAYPOINTS_KEY,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BtError {
    #[error("no binding for leaf `{0}`")]
    UnboundLeaf(String),
    #[error("no node with id {0}")]
    NoSuchNode(u32),
    #[error("blackboard has no key `{0}`")]
    MissingKey(String),
    #[error("blackboard key `{key}` holds {found}, expected {expected}")]
    TypeMismatch {
        key: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("mission has no waypoints")]
    EmptyMission,
    #[error("no mission template named `{0}`")]
    UnknownTemplate(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    Success,
    Failure,
    Running,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum NodeKind {
    /// `memory = true` resumes from the last running child; otherwise every
    /// tick restarts from the first child (reactive).
    Sequence { memory: bool },
    Fallback { memory: bool },
    Parallel { success_threshold: usize },
    Inverter,
    Repeat { n: u32 },
    Retry { n: u32 },
    Condition { name: String, arg: Option<usize> },
    Action { name: String, arg: Option<usize> },
}

impl NodeKind {
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Condition { .. } | NodeKind::Action { .. })
    }

    fn label(&self) -> String {
        match self {
            NodeKind::Sequence { memory: true } => "Sequence(memory)".into(),
            NodeKind::Sequence { memory: false } => "Sequence(reactive)".into(),
            NodeKind::Fallback { memory: true } => "Fallback(memory)".into(),
            NodeKind::Fallback { memory: false } => "Fallback(reactive)".into(),
            NodeKind::Parallel { success_threshold } => format!("Parallel({success_threshold})"),
            NodeKind::Inverter => "Inverter".into(),
            NodeKind::Repeat { n } => format!("Repeat({n})"),
            NodeKind::Retry { n } => format!("Retry({n})"),
            NodeKind::Condition { .. } => "Condition".into(),
            NodeKind::Action { .. } => "Action".into(),
        }
    }
}

/// A leaf as seen by its binding.
#[derive(Debug, Clone, Copy)]
pub struct Leaf<'a> {
    pub id: u32,
    pub name: &'a str,
    pub arg: Option<usize>,
}

/// Leaf implementations, looked up by name.
pub trait Bindings {
    fn condition(&mut self, leaf: Leaf<'_>, bb: &mut Blackboard) -> Result<bool, BtError>;
    fn action(&mut self, leaf: Leaf<'_>, bb: &mut Blackboard) -> Result<NodeStatus, BtError>;
    /// Called when a running action is preempted.
    fn halt(&mut self, _leaf: Leaf<'_>, _bb: &mut Blackboard) {}
    fn has_condition(&self, name: &str) -> bool;
    fn has_action(&self, name: &str) -> bool;
}

type ConditionFn = Box<dyn FnMut(Leaf<'_>, &mut Blackboard) -> bool>;
type ActionFn = Box<dyn FnMut(Leaf<'_>, &mut Blackboard) -> NodeStatus>;

/// Closure-backed bindings, mostly for tests and small tools.
#[derive(Default)]
pub struct FnBindings {
    conditions: HashMap<String, ConditionFn>,
    actions: HashMap<String, ActionFn>,
}

impl FnBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn condition(
        mut self,
        name: &str,
        f: impl FnMut(Leaf<'_>, &mut Blackboard) -> bool + 'static,
    ) -> Self {
        self.conditions.insert(name.to_string(), Box::new(f));
        self
    }

    pub fn action(
        mut self,
        name: &str,
        f: impl FnMut(Leaf<'_>, &mut Blackboard) -> NodeStatus + 'static,
    ) -> Self {
        self.actions.insert(name.to_string(), Box::new(f));
        self
    }
}

impl Bindings for FnBindings {
    fn condition(&mut self, leaf: Leaf<'_>, bb: &mut Blackboard) -> Result<bool, BtError> {
        let f = self
            .conditions
            .get_mut(leaf.name)
            .ok_or_else(|| BtError::UnboundLeaf(leaf.name.to_string()))?;
        Ok(f(leaf, bb))
    }

    fn action(&mut self, leaf: Leaf<'_>, bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
        let f = self
            .actions
            .get_mut(leaf.name)
            .ok_or_else(|| BtError::UnboundLeaf(leaf.name.to_string()))?;
        Ok(f(leaf, bb))
    }

    fn has_condition(&self, name: &str) -> bool {
        self.conditions.contains_key(name)
    }

    fn has_action(&self, name: &str) -> bool {
        self.actions.contains_key(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtNode {
    pub id: u32,
    pub name: String,
    pub kind: NodeKind,
    pub children: Vec<BtNode>,
    pub last_status: Option<NodeStatus>,
    pub forced: Option<NodeStatus>,
    cursor: usize,
    counter: u32,
    completed: Vec<Option<NodeStatus>>,
}

impl BtNode {
    pub fn new(name: impl Into<String>, kind: NodeKind, children: Vec<BtNode>) -> Self {
        Self {
            id: 0,
            name: name.into(),
            kind,
            children,
            last_status: None,
            forced: None,
            cursor: 0,
            counter: 0,
            completed: Vec::new(),
        }
    }

    pub fn sequence(name: &str, memory: bool, children: Vec<BtNode>) -> Self {
        Self::new(name, NodeKind::Sequence { memory }, children)
    }

    pub fn fallback(name: &str, memory: bool, children: Vec<BtNode>) -> Self {
        Self::new(name, NodeKind::Fallback { memory }, children)
    }

    pub fn parallel(name: &str, success_threshold: usize, children: Vec<BtNode>) -> Self {
        Self::new(name, NodeKind::Parallel { success_threshold }, children)
    }

    pub fn inverter(name: &str, child: BtNode) -> Self {
        Self::new(name, NodeKind::Inverter, vec![child])
    }

    pub fn repeat(name: &str, n: u32, child: BtNode) -> Self {
        Self::new(name, NodeKind::Repeat { n }, vec![child])
    }

    pub fn retry(name: &str, n: u32, child: BtNode) -> Self {
        Self::new(name, NodeKind::Retry { n }, vec![child])
    }

    pub fn condition(name: &str) -> Self {
        Self::condition_with(name, None)
    }

    pub fn condition_with(name: &str, arg: Option<usize>) -> Self {
        let label = display_name(name, arg);
        Self::new(
            label,
            NodeKind::Condition {
                name: name.to_string(),
                arg,
            },
            Vec::new(),
        )
    }

    pub fn action(name: &str) -> Self {
        Self::action_with(name, None)
    }

    pub fn action_with(name: &str, arg: Option<usize>) -> Self {
        let label = display_name(name, arg);
        Self::new(
            label,
            NodeKind::Action {
                name: name.to_string(),
                arg,
            },
            Vec::new(),
        )
    }

    fn reset_state(&mut self) {
        self.cursor = 0;
        self.counter = 0;
        self.completed.clear();
    }

    /// Resets resume state in this subtree and notifies bindings of running actions.
    fn halt(&mut self, bb: &mut Blackboard, bindings: &mut dyn Bindings) {
        if let NodeKind::Action { name, arg } = &self.kind {
            if self.last_status == Some(NodeStatus::Running) {
                bindings.halt(
                    Leaf {
                        id: self.id,
                        name,
                        arg: *arg,
                    },
                    bb,
                );
            }
        }
        self.reset_state();
        for c in &mut self.children {
            c.halt(bb, bindings);
        }
    }

    fn halt_children(&mut self, bb: &mut Blackboard, bindings: &mut dyn Bindings) {
        for c in &mut self.children {
            c.halt(bb, bindings);
        }
    }

    fn halt_children_from(&mut self, start: usize, bb: &mut Blackboard, bindings: &mut dyn Bindings) {
        for c in self.children.iter_mut().skip(start) {
            c.halt(bb, bindings);
        }
    }

    pub fn tick(&mut self, bb: &mut Blackboard, bindings: &mut dyn Bindings) -> Result<NodeStatus, BtError> {
        if let Some(forced) = self.forced {
            self.halt_children(bb, bindings);
            self.reset_state();
            self.last_status = Some(forced);
            return Ok(forced);
        }
        let status = self.evaluate(bb, bindings)?;
        self.last_status = Some(status);
        Ok(status)
    }

    fn evaluate(&mut self, bb: &mut Blackboard, bindings: &mut dyn Bindings) -> Result<NodeStatus, BtError> {
        use NodeStatus::*;
        match self.kind.clone() {
            NodeKind::Condition { name, arg } => {
                let leaf = Leaf {
                    id: self.id,
                    name: &name,
                    arg,
                };
                Ok(if bindings.condition(leaf, bb)? { Success } else { Failure })
            }
            NodeKind::Action { name, arg } => {
                let leaf = Leaf {
                    id: self.id,
                    name: &name,
                    arg,
                };
                bindings.action(leaf, bb)
            }
            NodeKind::Sequence { memory } => self.run_composite(memory, Success, bb, bindings),
            NodeKind::Fallback { memory } => self.run_composite(memory, Failure, bb, bindings),
            NodeKind::Parallel { success_threshold } => {
                let n = self.children.len();
                if self.completed.len() != n {
                    self.completed = vec![None; n];
                }
                for i in 0..n {
                    if self.completed[i].is_some() {
                        continue;
                    }
                    let s = self.children[i].tick(bb, bindings)?;
                    if s != Running {
                        self.completed[i] = Some(s);
                    }
                }
                let successes = self.completed.iter().filter(|s| **s == Some(Success)).count();
                let failures = self.completed.iter().filter(|s| **s == Some(Failure)).count();
                let result = if successes >= success_threshold {
                    Success
                } else if failures > n - success_threshold {
                    Failure
                } else {
                    Running
                };
                if result != Running {
                    self.halt_children(bb, bindings);
                    self.reset_state();
                }
                Ok(result)
            }
            NodeKind::Inverter => Ok(match self.children[0].tick(bb, bindings)? {
                Success => Failure,
                Failure => Success,
                Running => Running,
            }),
            NodeKind::Repeat { n } => loop {
                if self.counter >= n {
                    self.counter = 0;
                    return Ok(Success);
                }
                match self.children[0].tick(bb, bindings)? {
                    Success => {
                        self.counter += 1;
                        self.children[0].halt(bb, bindings);
                    }
                    Failure => {
                        self.counter = 0;
                        self.children[0].halt(bb, bindings);
                        return Ok(Failure);
                    }
                    Running => return Ok(Running),
                }
            },
            NodeKind::Retry { n } => loop {
                match self.children[0].tick(bb, bindings)? {
                    Success => {
                        self.counter = 0;
                        self.children[0].halt(bb, bindings);
                        return Ok(Success);
                    }
                    Running => return Ok(Running),
                    Failure => {
                        self.counter += 1;
                        self.children[0].halt(bb, bindings);
                        if self.counter >= n {
                            self.counter = 0;
                            return Ok(Failure);
                        }
                    }
                }
            },
        }
    }

    /// Sequence (`pass = Success`) and Fallback (`pass = Failure`) share one loop:
    /// children returning `pass` are skipped over, anything else short-circuits.
    fn run_composite(
        &mut self,
        memory: bool,
        pass: NodeStatus,
        bb: &mut Blackboard,
        bindings: &mut dyn Bindings,
    ) -> Result<NodeStatus, BtError> {
        let start = if memory { self.cursor } else { 0 };
        for i in start..self.children.len() {
            let s = self.children[i].tick(bb, bindings)?;
            if s == pass {
                continue;
            }
            if s == NodeStatus::Running {
                self.cursor = if memory { i } else { 0 };
                // Anything after the running child is no longer active.
                self.halt_children_from(i + 1, bb, bindings);
                return Ok(NodeStatus::Running);
            }
            self.cursor = 0;
            self.halt_children(bb, bindings);
            return Ok(s);
        }
        self.cursor = 0;
        self.halt_children(bb, bindings);
        Ok(pass)
    }

    pub fn find(&self, id: u32) -> Option<&BtNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    pub fn find_mut(&mut self, id: u32) -> Option<&mut BtNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    pub fn leaves(&self) -> Vec<&BtNode> {
        if self.kind.is_leaf() {
            return vec![self];
        }
        self.children.iter().flat_map(|c| c.leaves()).collect()
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a BtNode>) {
        out.push(self);
        for c in &self.children {
            c.visit(out);
        }
    }

    pub fn nodes(&self) -> Vec<&BtNode> {
        let mut out = Vec::new();
        self.visit(&mut out);
        out
    }

    fn assign_ids(&mut self, next: &mut u32) {
        self.id = *next;
        *next += 1;
        for c in &mut self.children {
            c.assign_ids(next);
        }
    }

    pub fn view(&self) -> TreeView {
        TreeView {
            id: self.id,
            name: self.name.clone(),
            kind: self.kind.label(),
            last_status: self.last_status,
            forced: self.forced,
            children: self.children.iter().map(BtNode::view).collect(),
        }
    }
}

fn display_name(name: &str, arg: Option<usize>) -> String {
    match arg {
        Some(i) => format!("{name}[{i}]"),
        None => name.to_string(),
    }
}

/// A validated tree with unique node ids (pre-order from 0).
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTree {
    root: BtNode,
}

impl BehaviorTree {
    /// Numbers nodes in pre-order and checks structural invariants.
    pub fn new(mut root: BtNode) -> Result<Self, BtError> {
        let mut next = 0;
        root.assign_ids(&mut next);
        let tree = Self { root };
        tree.validate()?;
        Ok(tree)
    }

    /// Keeps existing ids; fails if they are not unique.
    pub fn with_ids(root: BtNode) -> Result<Self, BtError> {
        let tree = Self { root };
        tree.validate()?;
        Ok(tree)
    }

    pub fn validate(&self) -> Result<(), BtError> {
        let mut seen = HashSet::new();
        for node in self.root.nodes() {
            if !seen.insert(node.id) {
                return Err(BtError::Malformed(format!("duplicate node id {}", node.id)));
            }
            let n = node.children.len();
            let bad = |m: &str| Err(BtError::Malformed(format!("{} ({}): {m}", node.name, node.id)));
            match &node.kind {
                NodeKind::Condition { .. } | NodeKind::Action { .. } if n != 0 => {
                    return bad("leaves cannot have children")
                }
                NodeKind::Parallel { success_threshold } if n == 0 || *success_threshold == 0 || *success_threshold > n => {
                    return bad("parallel needs children and 1 <= M <= child count")
                }
                NodeKind::Inverter | NodeKind::Repeat { .. } | NodeKind::Retry { .. } if n != 1 => {
                    return bad("decorators take exactly one child")
                }
                NodeKind::Repeat { n: 0 } | NodeKind::Retry { n: 0 } => return bad("count must be >= 1"),
                NodeKind::Sequence { .. } | NodeKind::Fallback { .. } if n == 0 => {
                    return bad("composites need at least one child")
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &BtNode {
        &self.root
    }

    pub fn tick(&mut self, bb: &mut Blackboard, bindings: &mut dyn Bindings) -> Result<NodeStatus, BtError> {
        self.root.tick(bb, bindings)
    }

    /// Names of leaves that `bindings` cannot resolve.
    pub fn unbound_leaves(&self, bindings: &dyn Bindings) -> Vec<String> {
        self.root
            .leaves()
            .into_iter()
            .filter_map(|l| match &l.kind {
                NodeKind::Condition { name, .. } if !bindings.has_condition(name) => Some(name.clone()),
                NodeKind::Action { name, .. } if !bindings.has_action(name) => Some(name.clone()),
                _ => None,
            })
            .collect()
    }

    /// Sets or clears a forced status; it applies from the next tick.
    pub fn override_node(&mut self, id: u32, forced: Option<NodeStatus>) -> Result<(), BtError> {
        let node = self.root.find_mut(id).ok_or(BtError::NoSuchNode(id))?;
        node.forced = forced;
        Ok(())
    }

    pub fn snapshot(&self) -> TreeView {
        self.root.view()
    }

    pub fn node_count(&self) -> usize {
        self.root.nodes().len()
    }
}

/// Serializable, read-only view of a tree for operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeView {
    pub id: u32,
    pub name: String,
    pub kind: String,
    pub last_status: Option<NodeStatus>,
    pub forced: Option<NodeStatus>,
    pub children: Vec<TreeView>,
}

impl TreeView {
    pub fn ids(&self) -> Vec<u32> {
        let mut out = vec![self.id];
        for c in &self.children {
            out.extend(c.ids());
        }
        out
    }

    /// Indented one-line-per-node rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, depth: usize, out: &mut String) {
        use std::fmt::Write;
        let status = self.last_status.map_or("-".to_string(), |s| format!("{s:?}"));
        let forced = self.forced.map_or(String::new(), |f| format!(" forced={f:?}"));
        let _ = writeln!(
            out,
            "{:indent$}#{} {} [{}] {}{}",
            "",
            self.id,
            self.name,
            self.kind,
            status,
            forced,
            indent = depth * 2
        );
        for c in &self.children {
            c.render_into(depth + 1, out);
        }
    }
}

impl fmt::Display for TreeView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
