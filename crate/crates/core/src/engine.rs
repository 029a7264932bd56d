//! The two interpreters: global unitary evolution, and Born-sampled collapse
//! at declared collapse sites. Both share every other step's semantics.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::protocol::{InstrKind, ValidatedProtocol};
use crate::statevec::{MeasurementOutcome, StateError, StateVector, NORM_TOL};

/// Largest joint dimension for which [`run_state_trace`] keeps snapshots.
pub const TRACE_MAX_DIM: usize = 1 << 16;
/// Fidelity at or above `1 - RETURN_TOL` counts as a perfect return.
pub const RETURN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dynamics {
    Unitary,
    Collapse,
}

impl Dynamics {
    pub fn as_str(self) -> &'static str {
        match self {
            Dynamics::Unitary => "unitary",
            Dynamics::Collapse => "collapse",
        }
    }
}

impl std::str::FromStr for Dynamics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unitary" => Ok(Dynamics::Unitary),
            "collapse" => Ok(Dynamics::Collapse),
            other => Err(format!("unknown model {other:?} (expected unitary or collapse)")),
        }
    }
}

/// Which collapse-site markers fire under the collapse dynamics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CollapseSites {
    All,
    /// 1-based step indices of the markers that fire.
    Steps(BTreeSet<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicsModel {
    pub dynamics: Dynamics,
    pub sites: CollapseSites,
}

impl DynamicsModel {
    pub fn unitary() -> Self {
        DynamicsModel {
            dynamics: Dynamics::Unitary,
            sites: CollapseSites::All,
        }
    }

    pub fn collapse() -> Self {
        DynamicsModel {
            dynamics: Dynamics::Collapse,
            sites: CollapseSites::All,
        }
    }

    /// Collapse dynamics restricted to the markers at the given steps.
    pub fn collapse_at(steps: impl IntoIterator<Item = usize>) -> Self {
        DynamicsModel {
            dynamics: Dynamics::Collapse,
            sites: CollapseSites::Steps(steps.into_iter().collect()),
        }
    }

    fn fires(&self, step: usize) -> bool {
        match (&self.dynamics, &self.sites) {
            (Dynamics::Unitary, _) => false,
            (Dynamics::Collapse, CollapseSites::All) => true,
            (Dynamics::Collapse, CollapseSites::Steps(s)) => s.contains(&step),
        }
    }
}

impl From<Dynamics> for DynamicsModel {
    fn from(d: Dynamics) -> Self {
        match d {
            Dynamics::Unitary => DynamicsModel::unitary(),
            Dynamics::Collapse => DynamicsModel::collapse(),
        }
    }
}

/// A stream of uniforms in `[0, 1)`.
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Collapse,
    FinalMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub step: usize,
    pub kind: EventKind,
    pub registers: Vec<String>,
    pub values: Vec<usize>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    /// Fidelity of the final (pre-readout) state with the return target.
    pub return_fidelity: f64,
    /// Whether this run counts as a successful return.
    pub returned: bool,
}

impl EventLog {
    pub fn collapses(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Collapse)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// State after the last step, before any final readout.
    pub final_state: StateVector,
    pub readout: Option<MeasurementOutcome>,
    pub log: EventLog,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("a random stream is required for collapse dynamics or measuring protocols")]
    MissingRng,
    #[error("step {step}: register {register:?} is entangled (purity {purity} below 1 - {tol:e})")]
    FactorizationAssertFailed {
        step: usize,
        register: String,
        purity: f64,
        tol: f64,
    },
    #[error("step {step}: squared norm drifted to {norm_sqr}")]
    EngineAssert { step: usize, norm_sqr: f64 },
    #[error("state trace limited to dimension {cap}, got {dim}")]
    SystemTooLargeForTrace { dim: usize, cap: usize },
    #[error("step {step}: {source}")]
    State { step: usize, source: StateError },
}

fn at(step: usize) -> impl Fn(StateError) -> EngineError {
    move |source| EngineError::State { step, source }
}

/// Executes a validated protocol under one dynamics model.
///
/// Construction computes the return target once: the initial basis state
/// acted on by every matrix-bearing step that no reverse range undoes.
#[derive(Debug, Clone)]
pub struct Runner<'a> {
    protocol: &'a ValidatedProtocol,
    model: DynamicsModel,
    init: StateVector,
    target: StateVector,
}

impl<'a> Runner<'a> {
    pub fn new(protocol: &'a ValidatedProtocol, model: DynamicsModel) -> Result<Self, EngineError> {
        let init = StateVector::from_basis_index(protocol.layout(), protocol.init_index()).map_err(at(0))?;
        let mut target = init.clone();
        for op in protocol.retained_operators() {
            target.apply_bound_mut(op).map_err(at(0))?;
        }
        Ok(Runner {
            protocol,
            model,
            init,
            target,
        })
    }

    pub fn model(&self) -> &DynamicsModel {
        &self.model
    }

    pub fn return_target(&self) -> &StateVector {
        &self.target
    }

    fn needs_rng(&self) -> bool {
        self.model.dynamics == Dynamics::Collapse || self.protocol.measured_registers().is_some()
    }

    pub fn run(&self, mut rng: Option<&mut dyn UniformSource>) -> Result<RunResult, EngineError> {
        if self.needs_rng() && rng.is_none() {
            return Err(EngineError::MissingRng);
        }
        let mut state = self.init.clone();
        let mut events = Vec::new();
        let mut readout = None;
        for instr in self.protocol.program() {
            let step = instr.step;
            match &instr.kind {
                InstrKind::Apply(op) => {
                    state.apply_bound_mut(op).map_err(at(step))?;
                    let norm_sqr = state.norm_sqr();
                    if (norm_sqr - 1.0).abs() > NORM_TOL {
                        return Err(EngineError::EngineAssert { step, norm_sqr });
                    }
                }
                InstrKind::CollapseSite(registers) => {
                    if self.model.fires(step) {
                        let u = rng.as_mut().ok_or(EngineError::MissingRng)?.next_uniform();
                        let (outcome, post) = state.measure(registers, u).map_err(at(step))?;
                        events.push(Event {
                            step,
                            kind: EventKind::Collapse,
                            registers: outcome.registers,
                            values: outcome.values,
                            probability: outcome.probability,
                        });
                        state = post;
                    }
                }
                InstrKind::CheckFactorized { register, tol } => {
                    check_factorized(&state, step, register, *tol)?;
                }
                InstrKind::Measure(registers) => {
                    let u = rng.as_mut().ok_or(EngineError::MissingRng)?.next_uniform();
                    let (outcome, _) = state.measure(registers, u).map_err(at(step))?;
                    events.push(Event {
                        step,
                        kind: EventKind::FinalMeasure,
                        registers: outcome.registers.clone(),
                        values: outcome.values.clone(),
                        probability: outcome.probability,
                    });
                    readout = Some(outcome);
                }
            }
        }
        let return_fidelity = state.fidelity(&self.target).map_err(at(0))?;
        let returned = match &readout {
            Some(r) => {
                let p = self
                    .target
                    .marginal_probability(r.registers.iter().zip(r.values.iter().copied()))
                    .map_err(at(0))?;
                p >= 1.0 - RETURN_TOL
            }
            None => return_fidelity >= 1.0 - RETURN_TOL,
        };
        Ok(RunResult {
            final_state: state,
            readout,
            log: EventLog {
                events,
                return_fidelity,
                returned,
            },
        })
    }
}

fn check_factorized(state: &StateVector, step: usize, register: &str, tol: f64) -> Result<(), EngineError> {
    // a lone register is trivially unentangled
    if state.layout().len() == 1 {
        return Ok(());
    }
    let purity = state.reduced_purity(&[register]).map_err(at(step))?;
    if purity < 1.0 - tol {
        return Err(EngineError::FactorizationAssertFailed {
            step,
            register: register.to_string(),
            purity,
            tol,
        });
    }
    Ok(())
}

/// One-shot form of [`Runner::run`].
pub fn run(
    protocol: &ValidatedProtocol,
    model: DynamicsModel,
    rng: Option<&mut dyn UniformSource>,
) -> Result<RunResult, EngineError> {
    Runner::new(protocol, model)?.run(rng)
}

/// Unitary-model snapshots: index 0 is the initial state, index `k` the
/// state after step `k`. Markers, measure and expect leave the state as is.
pub fn run_state_trace(protocol: &ValidatedProtocol) -> Result<Vec<StateVector>, EngineError> {
    let dim = protocol.layout().total_dim();
    if dim > TRACE_MAX_DIM {
        return Err(EngineError::SystemTooLargeForTrace {
            dim,
            cap: TRACE_MAX_DIM,
        });
    }
    let mut state = StateVector::from_basis_index(protocol.layout(), protocol.init_index()).map_err(at(0))?;
    let n_steps = protocol.protocol().steps.len();
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(state.clone());
    let program = protocol.program();
    let mut pc = 0;
    for step in 1..=n_steps {
        while pc < program.len() && program[pc].step == step {
            match &program[pc].kind {
                InstrKind::Apply(op) => {
                    state.apply_bound_mut(op).map_err(at(step))?;
                    let norm_sqr = state.norm_sqr();
                    if (norm_sqr - 1.0).abs() > NORM_TOL {
                        return Err(EngineError::EngineAssert { step, norm_sqr });
                    }
                }
                InstrKind::CheckFactorized { register, tol } => check_factorized(&state, step, register, *tol)?,
                InstrKind::CollapseSite(_) | InstrKind::Measure(_) => {}
            }
            pc += 1;
        }
        snapshots.push(state.clone());
    }
    Ok(snapshots)
}
