//! Definitional truth tables and scenario checks for the behavior-tree executive.

use std::cell::RefCell;
use std::rc::Rc;

use hullwatch::bt::{BehaviorTree, Blackboard, BtNode, FnBindings, NodeStatus};
use NodeStatus::{Failure, Running, Success};

const ALL: [NodeStatus; 3] = [Success, Failure, Running];

pub type Shared<T> = Rc<RefCell<T>>;

/// Actions `a0..a{n}` return the shared script entry and count their ticks;
/// condition `c` reads the shared flag.
pub fn scripted(n: usize) -> (FnBindings, Shared<Vec<NodeStatus>>, Shared<Vec<usize>>, Shared<bool>) {
    let script = Rc::new(RefCell::new(vec![Success; n]));
    let counts = Rc::new(RefCell::new(vec![0; n]));
    let flag = Rc::new(RefCell::new(false));
    let f = flag.clone();
    let mut b = FnBindings::new().condition("c", move |_, _| *f.borrow());
    for i in 0..n {
        let s = script.clone();
        let c = counts.clone();
        b = b.action(&format!("a{i}"), move |_, _| {
            c.borrow_mut()[i] += 1;
            s.borrow()[i]
        });
    }
    (b, script, counts, flag)
}

fn leaves(n: usize) -> Vec<BtNode> {
    (0..n).map(|i| BtNode::action(&format!("a{i}"))).collect()
}

fn assignments(n: usize) -> Vec<Vec<NodeStatus>> {
    (0..3usize.pow(n as u32))
        .map(|mut k| {
            (0..n)
                .map(|_| {
                    let s = ALL[k % 3];
                    k /= 3;
                    s
                })
                .collect()
        })
        .collect()
}

fn sequence(s: &[NodeStatus]) -> NodeStatus {
    for x in s {
        if *x != Success {
            return *x;
        }
    }
    Success
}

fn fallback(s: &[NodeStatus]) -> NodeStatus {
    for x in s {
        if *x != Failure {
            return *x;
        }
    }
    Failure
}

fn parallel(s: &[NodeStatus], m: usize) -> NodeStatus {
    let ok = s.iter().filter(|x| **x == Success).count();
    let bad = s.iter().filter(|x| **x == Failure).count();
    if ok >= m {
        Success
    } else if bad > s.len() - m {
        Failure
    } else {
        Running
    }
}

fn invert(s: NodeStatus) -> NodeStatus {
    match s {
        Success => Failure,
        Failure => Success,
        Running => Running,
    }
}

fn tick_once(root: BtNode, script: &[NodeStatus]) -> Result<NodeStatus, String> {
    let (mut b, s, _, _) = scripted(script.len().max(1));
    s.borrow_mut()[..script.len()].copy_from_slice(script);
    let mut tree = BehaviorTree::new(root).map_err(|e| e.to_string())?;
    tree.tick(&mut Blackboard::default(), &mut b).map_err(|e| e.to_string())
}

/// Exhaustive single-tick conformance over every assignment to 1..=3 children.
/// Returns the number of cases checked.
pub fn truth_tables() -> Result<usize, String> {
    let mut cases = 0;
    for n in 1..=3 {
        for a in assignments(n) {
            let mut check = |name: &str, root: BtNode, want: NodeStatus| -> Result<(), String> {
                let got = tick_once(root, &a)?;
                cases += 1;
                if got == want {
                    Ok(())
                } else {
                    Err(format!("{name} over {a:?}: got {got:?}, want {want:?}"))
                }
            };
            for memory in [false, true] {
                check("sequence", BtNode::sequence("s", memory, leaves(n)), sequence(&a))?;
                check("fallback", BtNode::fallback("f", memory, leaves(n)), fallback(&a))?;
            }
            for m in 1..=n {
                check("parallel", BtNode::parallel("p", m, leaves(n)), parallel(&a, m))?;
            }
            if n == 1 {
                check("inverter", BtNode::inverter("i", BtNode::action("a0")), invert(a[0]))?;
            }
        }
    }
    Ok(cases)
}

/// Reactive fallback `[c, a0]`: once `c` holds, `a0` is never ticked again.
pub fn reactive_preemption() -> Result<(), String> {
    let (mut b, script, counts, flag) = scripted(1);
    script.borrow_mut()[0] = Running;
    let root = BtNode::fallback("f", false, vec![BtNode::condition("c"), BtNode::action("a0")]);
    let mut tree = BehaviorTree::new(root).map_err(|e| e.to_string())?;
    let mut bb = Blackboard::default();
    for _ in 0..3 {
        if tree.tick(&mut bb, &mut b).map_err(|e| e.to_string())? != Running {
            return Err("fallback should run its action while c is false".into());
        }
    }
    *flag.borrow_mut() = true;
    for _ in 0..5 {
        if tree.tick(&mut bb, &mut b).map_err(|e| e.to_string())? != Success {
            return Err("fallback should succeed once c holds".into());
        }
    }
    let n = counts.borrow()[0];
    match n {
        3 => Ok(()),
        n => Err(format!("a0 ticked {n} times, expected 3")),
    }
}

/// Memory sequence `[a0, a1]`: a succeeded child is not re-ticked while a
/// later one runs, and the next cycle starts over.
pub fn memory_resume() -> Result<(), String> {
    let (mut b, script, counts, _) = scripted(2);
    *script.borrow_mut() = vec![Success, Running];
    let mut tree = BehaviorTree::new(BtNode::sequence("s", true, leaves(2))).map_err(|e| e.to_string())?;
    let mut bb = Blackboard::default();
    let mut tick = |tree: &mut BehaviorTree| tree.tick(&mut bb, &mut b).map_err(|e| e.to_string());
    for _ in 0..4 {
        tick(&mut tree)?;
    }
    if *counts.borrow() != vec![1, 4] {
        return Err(format!("ticks while running: {:?}, expected [1, 4]", counts.borrow()));
    }
    script.borrow_mut()[1] = Success;
    if tick(&mut tree)? != Success {
        return Err("sequence should succeed when the last child does".into());
    }
    tick(&mut tree)?;
    if *counts.borrow() != vec![2, 6] {
        return Err(format!("ticks after completion: {:?}, expected [2, 6]", counts.borrow()));
    }
    Ok(())
}
