mod support;

use hullwatch::bt::{BehaviorTree, Blackboard, BtNode, NodeStatus};
use proptest::prelude::*;
use support::bt::*;

#[test]
fn composites_match_truth_tables() {
    assert_eq!(truth_tables().unwrap(), 3 * 5 + 9 * 6 + 27 * 7 + 3);
}

#[test]
fn reactive_fallback_preempts_lower_priority_child() {
    reactive_preemption().unwrap();
}

#[test]
fn memory_sequence_resumes_at_running_child() {
    memory_resume().unwrap();
}

fn arb_status() -> impl Strategy<Value = NodeStatus> {
    prop_oneof![Just(NodeStatus::Success), Just(NodeStatus::Failure), Just(NodeStatus::Running)]
}

fn sample_tree() -> BtNode {
    let a = |i: usize| BtNode::action(&format!("a{i}"));
    BtNode::fallback(
        "root",
        false,
        vec![
            BtNode::sequence("guard", false, vec![BtNode::condition("c"), a(0)]),
            BtNode::sequence("work", true, vec![a(1), BtNode::inverter("not", a(2)), a(3)]),
            BtNode::parallel("both", 1, vec![a(4), a(5)]),
        ],
    )
}

proptest! {
    #[test]
    fn snapshot_has_no_side_effects(
        ticks in prop::collection::vec((prop::collection::vec(arb_status(), 6), any::<bool>()), 0..20),
        next in prop::collection::vec(arb_status(), 6),
    ) {
        let (mut b, script, _, flag) = scripted(6);
        let mut tree = BehaviorTree::new(sample_tree()).unwrap();
        let mut bb = Blackboard::default();
        for (s, c) in ticks {
            *script.borrow_mut() = s;
            *flag.borrow_mut() = c;
            tree.tick(&mut bb, &mut b).unwrap();
        }
        *script.borrow_mut() = next;
        let mut twin = tree.clone();
        let first = tree.snapshot();
        prop_assert_eq!(&tree, &twin);
        prop_assert_eq!(&first, &tree.snapshot());
        prop_assert_eq!(tree.tick(&mut bb.clone(), &mut b).unwrap(), twin.tick(&mut bb, &mut b).unwrap());
    }

    #[test]
    fn reactive_fallback_never_ticks_second_child_while_first_holds(
        conds in prop::collection::vec(any::<bool>(), 1..40),
        s in arb_status(),
    ) {
        let (mut b, script, counts, flag) = scripted(1);
        script.borrow_mut()[0] = s;
        let root = BtNode::fallback("f", false, vec![BtNode::condition("c"), BtNode::action("a0")]);
        let mut tree = BehaviorTree::new(root).unwrap();
        let mut bb = Blackboard::default();
        for c in conds {
            *flag.borrow_mut() = c;
            let before = counts.borrow()[0];
            let out = tree.tick(&mut bb, &mut b).unwrap();
            let after = counts.borrow()[0];
            if c {
                prop_assert_eq!(out, NodeStatus::Success);
                prop_assert_eq!(after, before);
            } else {
                prop_assert_eq!(out, s);
                prop_assert_eq!(after, before + 1);
            }
        }
    }

    #[test]
    fn memory_sequence_never_reticks_a_succeeded_child(
        steps in prop::collection::vec(prop::collection::vec(arb_status(), 3), 1..40),
    ) {
        let (mut b, script, counts, _) = scripted(3);
        let leaves = (0..3).map(|i| BtNode::action(&format!("a{i}"))).collect();
        let mut tree = BehaviorTree::new(BtNode::sequence("s", true, leaves)).unwrap();
        let mut bb = Blackboard::default();
        // Oracle: index of the child the sequence resumes at.
        let mut cursor = 0usize;
        for s in steps {
            *script.borrow_mut() = s.clone();
            let before = counts.borrow().clone();
            let out = tree.tick(&mut bb, &mut b).unwrap();
            let after = counts.borrow().clone();
            let mut want = NodeStatus::Success;
            let mut ticked = vec![0; 3];
            let mut i = cursor;
            while i < 3 {
                ticked[i] = 1;
                if s[i] != NodeStatus::Success {
                    want = s[i];
                    break;
                }
                i += 1;
            }
            cursor = if want == NodeStatus::Running { i } else { 0 };
            prop_assert_eq!(out, want);
            for k in 0..3 {
                prop_assert_eq!(after[k] - before[k], ticked[k], "child {}", k);
            }
        }
    }
}
