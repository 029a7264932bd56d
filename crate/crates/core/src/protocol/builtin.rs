//! The built-in experiments.

use std::f64::consts::FRAC_PI_4;

use super::{MeasureTargets, Protocol, Step};

pub const BUILTIN_NAMES: &[&str] = &["deutsch-wigner", "which-outcome", "photon-mirror", "chain-N"];

/// Longest chain accepted by `chain-N`; anything past the dimension cap is
/// still constructible so that validation can report it.
const MAX_CHAIN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown builtin {0:?} (expected one of deutsch-wigner, which-outcome, photon-mirror, chain-N)")]
pub struct UnknownBuiltin(pub String);

fn s(x: &str) -> String {
    x.to_string()
}

fn all_zero(registers: &[(String, usize)]) -> Vec<(String, usize)> {
    registers.iter().map(|(n, _)| (n.clone(), 0)).collect()
}

fn lab_registers() -> Vec<(String, usize)> {
    vec![
        (s("atom"), 2),
        (s("poison"), 2),
        (s("cat"), 2),
        (s("bob"), 2),
        (s("paper"), 4),
    ]
}

/// Decay, poison release, death, and Bob's look: steps 1..=4 of both lab protocols.
fn lab_forward() -> Vec<Step> {
    vec![
        Step::Superpose {
            target: s("atom"),
            theta: FRAC_PI_4,
            phi: 0.0,
        },
        Step::Couple {
            control: s("atom"),
            target: s("poison"),
        },
        Step::Couple {
            control: s("poison"),
            target: s("cat"),
        },
        Step::Couple {
            control: s("cat"),
            target: s("bob"),
        },
    ]
}

fn deutsch_wigner() -> Protocol {
    let registers = lab_registers();
    let mut steps = lab_forward();
    steps.extend([
        Step::CollapseSite {
            registers: vec![s("bob")],
        },
        Step::RecordDefinite { dst: s("paper") },
        Step::CheckFactorized {
            register: s("paper"),
            tol: 1e-10,
        },
        Step::Reverse { from: 1, to: 4 },
        Step::Measure(MeasureTargets::All),
        Step::Expect {
            assignment: vec![
                (s("atom"), 0),
                (s("poison"), 0),
                (s("cat"), 0),
                (s("bob"), 0),
                (s("paper"), 1),
            ],
            prob: 1.0,
            tol: 1e-9,
        },
    ]);
    Protocol {
        name: s("deutsch-wigner"),
        init: all_zero(&registers),
        registers,
        steps,
    }
}

fn which_outcome() -> Protocol {
    let registers = lab_registers();
    let mut steps = lab_forward();
    steps.extend([
        Step::CollapseSite {
            registers: vec![s("bob")],
        },
        Step::RecordWhich {
            src: s("bob"),
            dst: s("paper"),
        },
        Step::Reverse { from: 1, to: 4 },
        Step::Measure(MeasureTargets::All),
        Step::Expect {
            assignment: vec![(s("atom"), 0), (s("poison"), 0), (s("cat"), 0), (s("bob"), 0)],
            prob: 0.5,
            tol: 0.01,
        },
    ]);
    Protocol {
        name: s("which-outcome"),
        init: all_zero(&registers),
        registers,
        steps,
    }
}

fn photon_mirror() -> Protocol {
    let registers = vec![(s("photon"), 2), (s("mirror"), 2)];
    Protocol {
        name: s("photon-mirror"),
        init: all_zero(&registers),
        registers,
        steps: vec![
            Step::Superpose {
                target: s("photon"),
                theta: FRAC_PI_4,
                phi: 0.0,
            },
            Step::Couple {
                control: s("photon"),
                target: s("mirror"),
            },
            Step::CollapseSite {
                registers: vec![s("mirror")],
            },
            Step::Reverse { from: 1, to: 2 },
            Step::Measure(MeasureTargets::All),
            Step::Expect {
                assignment: vec![(s("photon"), 0), (s("mirror"), 0)],
                prob: 1.0,
                tol: 1e-9,
            },
        ],
    }
}

fn chain(n: usize) -> Protocol {
    let registers: Vec<(String, usize)> = (0..n).map(|i| (format!("q{i}"), 2)).collect();
    let mut steps = vec![Step::Superpose {
        target: s("q0"),
        theta: FRAC_PI_4,
        phi: 0.0,
    }];
    for i in 1..n {
        steps.push(Step::Couple {
            control: format!("q{}", i - 1),
            target: format!("q{i}"),
        });
    }
    let forward = steps.len();
    steps.push(Step::Reverse { from: 1, to: forward });
    steps.push(Step::Measure(MeasureTargets::All));
    steps.push(Step::Expect {
        assignment: all_zero(&registers),
        prob: 1.0,
        tol: 1e-9,
    });
    Protocol {
        name: format!("chain-{n}"),
        init: all_zero(&registers),
        registers,
        steps,
    }
}

/// Looks up a built-in protocol by name: `deutsch-wigner`, `which-outcome`,
/// `photon-mirror`, or `chain-N` for `N` in `1..=64`.
pub fn builtin(name: &str) -> Result<Protocol, UnknownBuiltin> {
    match name {
        "deutsch-wigner" => Ok(deutsch_wigner()),
        "which-outcome" => Ok(which_outcome()),
        "photon-mirror" => Ok(photon_mirror()),
        _ => name
            .strip_prefix("chain-")
            .filter(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| (1..=MAX_CHAIN).contains(n))
            .map(chain)
            .ok_or_else(|| UnknownBuiltin(name.to_string())),
    }
}
