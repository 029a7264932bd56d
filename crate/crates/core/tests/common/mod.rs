#![allow(dead_code)]

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};

use wignersim::protocol::{MeasureTargets, Protocol, Step};
use wignersim::statevec::{CMatrix, RegisterLayout, StateVector};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// 1 to 5 registers of dimension 2..=6, total dimension at most `max_dim`.
pub fn random_layout(rng: &mut StdRng, max_dim: usize) -> RegisterLayout {
    loop {
        let n = rng.random_range(1..=5);
        let dims: Vec<usize> = (0..n).map(|_| rng.random_range(2..=6)).collect();
        if dims.iter().product::<usize>() <= max_dim {
            return RegisterLayout::new(dims.into_iter().enumerate().map(|(k, d)| (format!("r{k}"), d))).unwrap();
        }
    }
}

pub fn random_complex(rng: &mut StdRng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Haar-ish unitary from Gram-Schmidt on random complex columns.
pub fn random_unitary(rng: &mut StdRng, n: usize) -> CMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<Complex64> = (0..n).map(|_| random_complex(rng)).collect();
        for c in &cols {
            let proj: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(c) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|z| z / norm).collect());
        }
    }
    let rows = (0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect();
    CMatrix::from_rows(rows).unwrap()
}

pub fn random_amplitudes(rng: &mut StdRng, dim: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..dim).map(|_| random_complex(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

pub fn random_state(rng: &mut StdRng, layout: &RegisterLayout) -> StateVector {
    StateVector::from_amplitudes(layout, random_amplitudes(rng, layout.total_dim())).unwrap()
}

/// Distinct random subset of register names, in random order.
pub fn random_targets(rng: &mut StdRng, layout: &RegisterLayout, max_local: usize) -> Vec<String> {
    loop {
        let mut names: Vec<String> = layout.names().map(str::to_string).collect();
        names.shuffle(rng);
        let k = rng.random_range(1..=names.len());
        names.truncate(k);
        let local: usize = names.iter().map(|n| layout.dim_of(n).unwrap()).product();
        if local <= max_local {
            return names;
        }
    }
}

/// Digits of `index` in the mixed radix `dims`, first digit most significant.
pub fn digits(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
    out
}

pub fn undigits(values: &[usize], dims: &[usize]) -> usize {
    values.iter().zip(dims).fold(0, |acc, (v, d)| acc * d + v)
}

/// Applies `m` on `targets` by summing over every basis index, straight
/// from the definition of a local operator on a tensor product.
pub fn brute_force_apply(dims: &[usize], positions: &[usize], m: &CMatrix, amps: &[Complex64]) -> Vec<Complex64> {
    let local_dims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let di = digits(i, dims);
        let row = undigits(&positions.iter().map(|&p| di[p]).collect::<Vec<_>>(), &local_dims);
        for col in 0..m.dim() {
            let local = digits(col, &local_dims);
            let mut dj = di.clone();
            for (k, &p) in positions.iter().enumerate() {
                dj[p] = local[k];
            }
            *slot += m.get(row, col) * amps[undigits(&dj, dims)];
        }
    }
    out
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

const NAME_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCXYZ0123456789_-";

fn random_name(rng: &mut StdRng, prefix: &str) -> String {
    let len = rng.random_range(0..6);
    let tail: String = (0..len)
        .map(|_| NAME_CHARS[rng.random_range(0..NAME_CHARS.len())] as char)
        .collect();
    format!("{prefix}{tail}")
}

/// Float with a wide spread of magnitudes and signs.
fn random_float(rng: &mut StdRng) -> f64 {
    let mantissa: f64 = rng.random_range(-1.0..1.0);
    match rng.random_range(0..5) {
        0 => 0.0,
        1 => mantissa,
        2 => mantissa * 10f64.powi(rng.random_range(-30..30)),
        3 => f64::from(rng.random_range(-8i32..8)) * std::f64::consts::FRAC_PI_8,
        _ => mantissa * 1e17,
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GenOptions {
    /// Allow `reverse`, `measure` and `expect` in addition to matrix steps and markers.
    pub control_steps: bool,
    /// Allow `check-factorized`, which may fail at run time.
    pub checks: bool,
}

/// Random protocol that passes validation.
pub fn random_protocol(rng: &mut StdRng, opts: GenOptions) -> Protocol {
    let n = rng.random_range(1..=4);
    let mut registers = Vec::new();
    for k in 0..n {
        let dim = *[2usize, 2, 3, 4, 5].choose(rng).unwrap();
        registers.push((random_name(rng, &format!("q{k}")), dim));
    }
    let init = registers
        .iter()
        .map(|(name, d)| (name.clone(), rng.random_range(0..*d)))
        .collect();
    let names: Vec<String> = registers.iter().map(|(n, _)| n.clone()).collect();
    let dim_of = |name: &str| registers.iter().find(|(n, _)| n == name).unwrap().1;
    let pair = |rng: &mut StdRng| {
        let mut v = names.clone();
        v.shuffle(rng);
        (v[0].clone(), v[1].clone())
    };

    let mut steps: Vec<Step> = Vec::new();
    // 1-based index of the last reverse; ranges must start after it
    let mut last_reverse = 0usize;
    let count = rng.random_range(0..10);
    for _ in 0..count {
        let roll = rng.random_range(0..10);
        let step = match roll {
            0 | 1 => Step::Superpose {
                target: names.choose(rng).unwrap().clone(),
                theta: random_float(rng),
                phi: random_float(rng),
            },
            2 if n >= 2 => {
                let (control, target) = pair(rng);
                Step::Couple { control, target }
            }
            3 if n >= 2 => {
                let (src, dst) = pair(rng);
                let perms = (0..dim_of(&src))
                    .map(|_| {
                        let mut p: Vec<usize> = (0..dim_of(&dst)).collect();
                        p.shuffle(rng);
                        p
                    })
                    .collect();
                Step::CopyInto { src, dst, perms }
            }
            4 => Step::RecordDefinite {
                dst: names.choose(rng).unwrap().clone(),
            },
            5 => {
                let srcs: Vec<&String> = names.iter().filter(|s| dim_of(s) == 2).collect();
                let dsts: Vec<&String> = names.iter().filter(|s| dim_of(s) >= 4).collect();
                match (srcs.choose(rng), dsts.choose(rng)) {
                    (Some(s), Some(d)) if s != d => Step::RecordWhich {
                        src: (*s).clone(),
                        dst: (*d).clone(),
                    },
                    _ => continue,
                }
            }
            6 => {
                let mut targets = names.clone();
                targets.shuffle(rng);
                targets.truncate(rng.random_range(1..=2));
                let size: usize = targets.iter().map(|t| dim_of(t)).product();
                if size > 16 {
                    continue;
                }
                Step::Unitary {
                    targets,
                    matrix: random_unitary(rng, size),
                }
            }
            7 => {
                let mut regs = names.clone();
                regs.shuffle(rng);
                regs.truncate(rng.random_range(1..=n));
                Step::CollapseSite { registers: regs }
            }
            8 if opts.checks => Step::CheckFactorized {
                register: names.choose(rng).unwrap().clone(),
                tol: rng.random_range(1e-12..1e-3),
            },
            9 if opts.control_steps && steps.len() > last_reverse => {
                let from = rng.random_range(last_reverse + 1..=steps.len());
                let to = rng.random_range(from..=steps.len());
                Step::Reverse { from, to }
            }
            _ => continue,
        };
        if matches!(step, Step::Reverse { .. }) {
            last_reverse = steps.len() + 1;
        }
        steps.push(step);
    }
    if opts.control_steps && rng.random_bool(0.7) {
        let measured = if rng.random_bool(0.5) {
            steps.push(Step::Measure(MeasureTargets::All));
            names.clone()
        } else {
            let mut regs = names.clone();
            regs.shuffle(rng);
            regs.truncate(rng.random_range(1..=n));
            steps.push(Step::Measure(MeasureTargets::Registers(regs.clone())));
            regs
        };
        for _ in 0..rng.random_range(0..3) {
            let mut regs = measured.clone();
            regs.shuffle(rng);
            regs.truncate(rng.random_range(1..=regs.len()));
            steps.push(Step::Expect {
                assignment: regs
                    .iter()
                    .map(|r| (r.clone(), rng.random_range(0..dim_of(r))))
                    .collect(),
                prob: rng.random_range(0.0..=1.0),
                tol: rng.random_range(0.0..0.5),
            });
        }
    }
    Protocol {
        name: random_name(rng, "p"),
        registers,
        init,
        steps,
    }
}
