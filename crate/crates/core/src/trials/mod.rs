//! Seeded Monte Carlo trials and the statistics that tell the two dynamics apart.

mod rng;

pub use rng::{RngStream, GOLDEN_GAMMA};

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{Dynamics, DynamicsModel, EngineError, Runner};
use crate::protocol::ValidatedProtocol;

/// Return probability per trial under global unitary evolution.
pub const P_RETURN_UNITARY: f64 = 1.0;
/// Return probability per trial when the observation collapses the state.
pub const P_RETURN_COLLAPSE: f64 = 0.5;
/// Width of the binomial slack added to empirical expectation checks.
pub const SIGMA_SLACK: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialError {
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("trial {trial}: {source}")]
    Engine { trial: u64, source: EngineError },
    #[error("setup: {0}")]
    Setup(EngineError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("invalid counts: {k} successes out of {n} trials")]
    InvalidCounts { k: u64, n: u64 },
    #[error("invalid hypothesis probability {0}")]
    InvalidProbability(f64),
    #[error("Bayes-factor threshold must be a finite number above 1, got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationVerdict {
    pub step: usize,
    pub target_prob: f64,
    pub observed_prob: f64,
    pub tol: f64,
    pub pass: bool,
    /// Decided from amplitudes rather than sampled frequencies.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub protocol: String,
    pub model: Dynamics,
    pub trials: u64,
    pub seed: u64,
    /// Registers of the final readout, in readout order; empty if none.
    pub measured: Vec<String>,
    /// Readout tuple -> count, ascending by tuple.
    pub histogram: Vec<(Vec<usize>, u64)>,
    pub expectations: Vec<ExpectationVerdict>,
    pub returns: u64,
    pub return_rate: f64,
    pub bayes_factor: f64,
    pub wall_ms: u64,
}

impl TrialReport {
    pub fn all_expectations_pass(&self) -> bool {
        self.expectations.iter().all(|e| e.pass)
    }

    /// Count of trials whose readout has `value` in register `name`.
    pub fn count_where(&self, name: &str, value: usize) -> u64 {
        let Some(k) = self.measured.iter().position(|m| m == name) else {
            return 0;
        };
        self.histogram
            .iter()
            .filter(|(t, _)| t[k] == value)
            .map(|(_, c)| c)
            .sum()
    }
}

struct TrialOutcome {
    readout: Option<Vec<usize>>,
    returned: bool,
    /// Exact probability of each expectation in the final state.
    expect_probs: Vec<f64>,
}

fn run_one(
    runner: &Runner<'_>,
    protocol: &ValidatedProtocol,
    seed: u64,
    trial: u64,
) -> Result<TrialOutcome, TrialError> {
    let wrap = |source| TrialError::Engine { trial, source };
    let mut rng = RngStream::new(seed, trial);
    let result = runner.run(Some(&mut rng)).map_err(wrap)?;
    let expect_probs = protocol
        .expectations()
        .iter()
        .map(|e| {
            result
                .final_state
                .marginal_probability(e.assignment.iter().map(|(n, v)| (n.as_str(), *v)))
                .map_err(|source| TrialError::Engine {
                    trial,
                    source: EngineError::State { step: e.step, source },
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(TrialOutcome {
        readout: result.readout.map(|r| r.values),
        returned: result.log.returned,
        expect_probs,
    })
}

/// Runs `n` independent trials and aggregates them.
///
/// Trial `i` always draws from `RngStream::new(seed, i)`, and aggregation
/// walks trials in index order, so the report does not depend on how the
/// trials were scheduled across threads.
pub fn run_trials(
    protocol: &ValidatedProtocol,
    model: &DynamicsModel,
    n: u64,
    seed: u64,
) -> Result<TrialReport, TrialError> {
    if n == 0 {
        return Err(TrialError::NoTrials);
    }
    let started = Instant::now();
    let runner = Runner::new(protocol, model.clone()).map_err(TrialError::Setup)?;
    let outcomes = (0..n)
        .into_par_iter()
        .map(|i| run_one(&runner, protocol, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = aggregate(protocol, model.dynamics, seed, &outcomes);
    report.wall_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

/// Single-threaded reference of [`run_trials`].
pub fn run_trials_sequential(
    protocol: &ValidatedProtocol,
    model: &DynamicsModel,
    n: u64,
    seed: u64,
) -> Result<TrialReport, TrialError> {
    if n == 0 {
        return Err(TrialError::NoTrials);
    }
    let started = Instant::now();
    let runner = Runner::new(protocol, model.clone()).map_err(TrialError::Setup)?;
    let outcomes = (0..n)
        .map(|i| run_one(&runner, protocol, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = aggregate(protocol, model.dynamics, seed, &outcomes);
    report.wall_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

fn aggregate(protocol: &ValidatedProtocol, model: Dynamics, seed: u64, outcomes: &[TrialOutcome]) -> TrialReport {
    let n = outcomes.len() as u64;
    let measured: Vec<String> = protocol
        .measured_registers()
        .map(<[String]>::to_vec)
        .unwrap_or_default();

    let mut histogram: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for o in outcomes {
        *histogram.entry(o.readout.clone().unwrap_or_default()).or_default() += 1;
    }
    let returns = outcomes.iter().filter(|o| o.returned).count() as u64;

    let expectations = protocol
        .expectations()
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let certain = e.prob == 0.0 || e.prob == 1.0;
            if model == Dynamics::Unitary && certain {
                // unitary evolution is deterministic up to the readout
                let observed = outcomes[0].expect_probs[j];
                return ExpectationVerdict {
                    step: e.step,
                    target_prob: e.prob,
                    observed_prob: observed,
                    tol: e.tol,
                    pass: (observed - e.prob).abs() <= e.tol,
                    exact: true,
                };
            }
            let positions: Option<Vec<(usize, usize)>> = e
                .assignment
                .iter()
                .map(|(name, v)| measured.iter().position(|m| m == name).map(|k| (k, *v)))
                .collect();
            let observed = match positions {
                Some(pos) if !measured.is_empty() => {
                    let hits: u64 = histogram
                        .iter()
                        .filter(|(t, _)| pos.iter().all(|&(k, v)| t[k] == v))
                        .map(|(_, c)| c)
                        .sum();
                    hits as f64 / n as f64
                }
                // not read out: average the exact per-trial probability
                _ => outcomes.iter().map(|o| o.expect_probs[j]).sum::<f64>() / n as f64,
            };
            let slack = SIGMA_SLACK * (e.prob * (1.0 - e.prob) / n as f64).sqrt();
            ExpectationVerdict {
                step: e.step,
                target_prob: e.prob,
                observed_prob: observed,
                tol: e.tol,
                pass: (observed - e.prob).abs() <= e.tol + slack,
                exact: false,
            }
        })
        .collect();

    TrialReport {
        protocol: protocol.name().to_string(),
        model,
        trials: n,
        seed,
        measured,
        histogram: histogram.into_iter().collect(),
        expectations,
        returns,
        return_rate: returns as f64 / n as f64,
        bayes_factor: bayes_factor(returns, n).expect("returns never exceed trials"),
        wall_ms: 0,
    }
}

fn check_prob(p: f64, open: bool) -> Result<(), StatsError> {
    let ok = if open {
        p > 0.0 && p < 1.0
    } else {
        (0.0..=1.0).contains(&p)
    };
    if ok {
        Ok(())
    } else {
        Err(StatsError::InvalidProbability(p))
    }
}

fn ratio_pow(num: f64, den: f64, count: u64) -> f64 {
    if count == 0 {
        return 1.0;
    }
    let r = num / den;
    match i32::try_from(count) {
        Ok(c) => r.powi(c),
        Err(_) => r.powf(count as f64),
    }
}

/// Likelihood ratio `L(unitary) / L(collapse)` after `k` returns in `n` trials.
pub fn bayes_factor_with(k: u64, n: u64, p_unitary: f64, p_collapse: f64) -> Result<f64, StatsError> {
    if k > n {
        return Err(StatsError::InvalidCounts { k, n });
    }
    check_prob(p_unitary, false)?;
    check_prob(p_collapse, true)?;
    let misses = ratio_pow(1.0 - p_unitary, 1.0 - p_collapse, n - k);
    if misses == 0.0 {
        // avoid inf * 0 when the hit term overflows
        return Ok(0.0);
    }
    Ok(ratio_pow(p_unitary, p_collapse, k) * misses)
}

/// Likelihood ratio for return probability 1 against 1/2: `2^n` when every
/// trial returned, 0 otherwise.
pub fn bayes_factor(k: u64, n: u64) -> Result<f64, StatsError> {
    bayes_factor_with(k, n, P_RETURN_UNITARY, P_RETURN_COLLAPSE)
}

/// Smallest `n` with `2^n >= threshold`.
pub fn trials_to_threshold(threshold: f64) -> Result<u32, StatsError> {
    if !threshold.is_finite() || threshold <= 1.0 {
        return Err(StatsError::InvalidThreshold(threshold));
    }
    let mut n = 0;
    while 2f64.powi(n as i32) < threshold {
        n += 1;
    }
    Ok(n)
}
