mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use wignersim::protocol::{builtin, compile_reverse, invert_step, lower_step, validate, Step};
use wignersim::statevec::{RegisterLayout, StateVector};

fn apply_steps(psi: &mut StateVector, steps: &[Step], layout: &RegisterLayout) {
    for step in steps {
        if let Some(op) = lower_step(step, layout).unwrap() {
            psi.apply_local_mut(&op).unwrap();
        }
    }
}

fn assert_range_reverses(steps: &[Step], layout: &RegisterLayout, from: usize, to: usize, seed: u64) {
    let reverse = compile_reverse(steps, layout, from, to).unwrap();
    let mut rng = rng(seed);
    for _ in 0..50 {
        let psi = random_state(&mut rng, layout);
        let mut phi = psi.clone();
        apply_steps(&mut phi, &steps[from - 1..to], layout);
        apply_steps(&mut phi, &reverse, layout);
        let f = psi.fidelity(&phi).unwrap();
        assert!(f >= 1.0 - 1e-10, "range {from}..{to}: fidelity {f}");
    }
}

#[test]
fn builtin_ranges_undo_on_random_states() {
    for name in ["deutsch-wigner", "which-outcome", "photon-mirror", "chain-5"] {
        let vp = validate(&builtin(name).unwrap()).unwrap();
        let steps = &vp.protocol().steps;
        let (from, to) = steps
            .iter()
            .find_map(|s| match s {
                Step::Reverse { from, to } => Some((*from, *to)),
                _ => None,
            })
            .unwrap();
        assert_range_reverses(steps, vp.layout(), from, to, 17);
    }
}

#[test]
fn deutsch_wigner_reverse_lists_inverses_in_reverse_order() {
    let vp = validate(&builtin("deutsch-wigner").unwrap()).unwrap();
    let steps = &vp.protocol().steps;
    let compiled = vp.compile_reverse(1, 4).unwrap();
    let mut expected = Vec::new();
    for k in (1..=4).rev() {
        expected.extend(invert_step(&steps[k - 1], vp.layout()).unwrap());
    }
    assert_eq!(compiled, expected);
    assert_eq!(compiled.len(), 4);
}

#[test]
fn superpose_inverse_composes_to_identity() {
    let layout = RegisterLayout::new([("atom", 2), ("x", 3)]).unwrap();
    let step = Step::Superpose {
        target: "atom".into(),
        theta: std::f64::consts::FRAC_PI_4,
        phi: 0.0,
    };
    let inv = invert_step(&step, &layout).unwrap();
    let mut rng = rng(5);
    for _ in 0..20 {
        let psi = random_state(&mut rng, &layout);
        let mut phi = psi.clone();
        apply_steps(&mut phi, std::slice::from_ref(&step), &layout);
        apply_steps(&mut phi, &inv, &layout);
        assert!(max_diff(psi.amplitudes(), phi.amplitudes()) <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_range_of_random_steps_reverses(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let p = random_protocol(&mut rng, GenOptions { control_steps: false, checks: true });
        prop_assume!(!p.steps.is_empty());
        let vp = validate(&p).unwrap();
        let from = rng.random_range(1..=p.steps.len());
        let to = rng.random_range(from..=p.steps.len());
        assert_range_reverses(&p.steps, vp.layout(), from, to, seed ^ 1);
    }

    #[test]
    fn generated_protocols_validate(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let p = random_protocol(&mut rng, GenOptions { control_steps: true, checks: true });
        prop_assert!(validate(&p).is_ok(), "{:?}", validate(&p).err());
    }

    #[test]
    fn expanded_protocols_act_like_the_original(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let p = random_protocol(&mut rng, GenOptions { control_steps: true, checks: false });
        let vp = validate(&p).unwrap();
        let expanded = vp.protocol().expand_reverses().unwrap();
        let has_reverse = expanded.steps.iter().any(|s| matches!(s, Step::Reverse { .. }));
        prop_assert!(!has_reverse);
        let ve = validate(&expanded).unwrap();
        let a = wignersim::engine::run_state_trace(&vp).unwrap();
        let b = wignersim::engine::run_state_trace(&ve).unwrap();
        let fa = a.last().unwrap();
        let fb = b.last().unwrap();
        prop_assert!(fa.fidelity(fb).unwrap() >= 1.0 - 1e-10);
    }
}
