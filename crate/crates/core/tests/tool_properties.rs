use std::sync::Arc;

use asp_core::sim::{generate_scene, NoiseConfig, SimWorld, TEMPLATES};
use asp_core::tools::{Session, ToolOutput, ToolValue};
use asp_core::AspConfig;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Retrieve(usize),
    Distance(usize, usize),
    DistanceTo(usize),
    Lateral(usize, usize),
    Size(usize),
    Interact(usize, usize),
    GoTo(usize, usize),
}

const ACTIONS: &[&str] = &["pick up", "place in", "drop into", "press the button", "open", "remove", "pick up by the handle"];

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => (0usize..16).prop_map(Op::Retrieve),
        1 => (0usize..8, 0usize..8).prop_map(|(a, b)| Op::Distance(a, b)),
        1 => (0usize..8).prop_map(Op::DistanceTo),
        1 => (0usize..8, 0usize..8).prop_map(|(a, b)| Op::Lateral(a, b)),
        1 => (0usize..8).prop_map(Op::Size),
        2 => (0usize..8, 0usize..ACTIONS.len()).prop_map(|(a, b)| Op::Interact(a, b)),
        1 => (0usize..8, 0usize..ACTIONS.len()).prop_map(|(a, b)| Op::GoTo(a, b)),
    ]
}

fn real(out: &ToolOutput) -> Option<f64> {
    match out.output {
        ToolValue::Real(v) if out.success => Some(v),
        _ => None,
    }
}

fn flag(out: &ToolOutput) -> Option<bool> {
    match out.output {
        ToolValue::Flag(v) if out.success => Some(v),
        _ => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn tool_sequences_keep_invariants(t in 0usize..TEMPLATES.len(), seed in 0u64..50, slip in any::<bool>(), ops in prop::collection::vec(op(), 1..25)) {
        let noise = NoiseConfig { p_slip: if slip { 0.5 } else { 0.0 }, ..NoiseConfig::default() };
        let world = SimWorld::new(Arc::new(generate_scene(TEMPLATES[t], seed).unwrap()), noise);
        let labels: Vec<String> = world.spec().objects.iter().map(|o| o.label.clone()).collect();
        let mut cfg = AspConfig::default();
        cfg.mode = world.mode();
        let mut s = Session::with_mocks(world, cfg).unwrap();
        for op in ops {
            let mut keys = s.state().inventory.clone();
            keys.push("nobody_0".into());
            let key = |i: usize| keys[i % keys.len()].clone();
            let stale = s.map().stale;
            let digest = s.world().digest();
            let out = match &op {
                Op::Retrieve(i) => s.object_retrieval(&labels[i % labels.len()]),
                Op::Distance(a, b) => {
                    let ab = s.distance_between(&key(*a), &key(*b));
                    let ba = s.distance_between(&key(*b), &key(*a));
                    prop_assert_eq!(real(&ab), real(&ba));
                    prop_assert!(real(&ab).is_none_or(|d| d >= 0.0));
                    ab
                }
                Op::DistanceTo(a) => {
                    let out = s.distance_to(&key(*a));
                    prop_assert!(real(&out).is_none_or(|d| d >= 0.0));
                    out
                }
                Op::Lateral(a, b) => {
                    let l = s.left_of(&key(*a), &key(*b));
                    let r = s.right_of(&key(*a), &key(*b));
                    if let (Some(l), Some(r)) = (flag(&l), flag(&r)) {
                        let (ca, cb) = (s.object(&key(*a)).unwrap().centroid(), s.object(&key(*b)).unwrap().centroid());
                        if s.lateral(&ca) != s.lateral(&cb) {
                            prop_assert!(l ^ r);
                        } else {
                            prop_assert!(!l && !r);
                        }
                    }
                    l
                }
                Op::Size(a) => {
                    let out = s.size_of(&key(*a));
                    prop_assert!(real(&out).is_none_or(|v| v >= 0.0));
                    out
                }
                Op::Interact(a, act) => s.interact(&key(*a), ACTIONS[*act]),
                Op::GoTo(a, act) => s.go_to(&key(*a), ACTIONS[*act]),
            };
            prop_assert!(s.state().check_invariants().is_ok());
            prop_assert!(out.success || !out.feedback.trim().is_empty());
            if stale && !matches!(op, Op::Retrieve(_)) {
                prop_assert!(!out.success);
                prop_assert!(out.feedback.contains("stale"));
                prop_assert_eq!(s.world().digest(), digest);
            }
        }
    }
}
