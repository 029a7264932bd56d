//! Experiment IR: step vocabulary, validation, and reversal.

mod builtin;

pub use builtin::{builtin, UnknownBuiltin, BUILTIN_NAMES};

use num_complex::Complex64;
use thiserror::Error;

use crate::statevec::{BoundOperator, CMatrix, LocalOperator, RegisterLayout, StateError, MAX_TOTAL_DIM};

/// Largest matrix accepted by the `unitary` escape hatch.
pub const MAX_INLINE_MATRIX: usize = 16;

/// `name = level` pairs.
pub type Assignment = Vec<(String, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureTargets {
    All,
    Registers(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// `|0> -> cos t|0> + e^{i phi} sin t|1>`, `|1> -> -e^{-i phi} sin t|0> + cos t|1>`;
    /// levels above 1 untouched.
    Superpose {
        target: String,
        theta: f64,
        phi: f64,
    },
    /// If control is 1, increment target mod its dimension.
    Couple {
        control: String,
        target: String,
    },
    /// For each source level `s`, apply the permutation `perms[s]` to the destination.
    CopyInto {
        src: String,
        dst: String,
        perms: Vec<Vec<usize>>,
    },
    /// Unconditional swap of destination levels 0 and 1.
    RecordDefinite {
        dst: String,
    },
    /// Swap destination 0<->2 if source is 0, 0<->3 if source is 1.
    RecordWhich {
        src: String,
        dst: String,
    },
    Unitary {
        targets: Vec<String>,
        matrix: CMatrix,
    },
    CollapseSite {
        registers: Vec<String>,
    },
    CheckFactorized {
        register: String,
        tol: f64,
    },
    /// 1-based inclusive range over earlier steps; `to == from - 1` is empty.
    Reverse {
        from: usize,
        to: usize,
    },
    Measure(MeasureTargets),
    Expect {
        assignment: Assignment,
        prob: f64,
        tol: f64,
    },
}

impl Step {
    pub fn keyword(&self) -> &'static str {
        match self {
            Step::Superpose { .. } => "superpose",
            Step::Couple { .. } => "couple",
            Step::CopyInto { .. } => "copy-into",
            Step::RecordDefinite { .. } => "record-definite",
            Step::RecordWhich { .. } => "record-which",
            Step::Unitary { .. } => "unitary",
            Step::CollapseSite { .. } => "collapse-site",
            Step::CheckFactorized { .. } => "check-factorized",
            Step::Reverse { .. } => "reverse",
            Step::Measure(_) => "measure",
            Step::Expect { .. } => "expect",
        }
    }

    pub fn is_matrix_bearing(&self) -> bool {
        matches!(
            self,
            Step::Superpose { .. }
                | Step::Couple { .. }
                | Step::CopyInto { .. }
                | Step::RecordDefinite { .. }
                | Step::RecordWhich { .. }
                | Step::Unitary { .. }
        )
    }

    pub fn is_marker(&self) -> bool {
        matches!(self, Step::CollapseSite { .. } | Step::CheckFactorized { .. })
    }
}

/// Unvalidated experiment description, as parsed or built in code.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub name: String,
    pub registers: Vec<(String, usize)>,
    pub init: Assignment,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationErrorKind {
    #[error("invalid protocol name {0:?}")]
    InvalidName(String),
    #[error("system too large: total dimension {dim} exceeds cap {cap}")]
    SystemTooLarge { dim: u128, cap: usize },
    #[error("invalid register declaration: {0}")]
    Layout(StateError),
    #[error("invalid init assignment: {0}")]
    Init(StateError),
    #[error("unknown register {0:?}")]
    UnknownRegister(String),
    #[error("register {0:?} referenced twice")]
    DuplicateRegister(String),
    #[error("value {value} out of range for register {register:?} of dimension {dim}")]
    ValueOutOfRange { register: String, value: usize, dim: usize },
    #[error("register {register:?} has dimension {dim}; {requirement}")]
    WrongDimension {
        register: String,
        dim: usize,
        requirement: &'static str,
    },
    #[error("expected {expected} permutations (one per source level), found {found}")]
    PermutationCount { expected: usize, found: usize },
    #[error("level map for source level {source_level} is not a permutation of 0..{dim}")]
    NonPermutation { source_level: usize, dim: usize },
    #[error("matrix is {found}x{found}, targets need {expected}x{expected}")]
    MatrixSize { expected: usize, found: usize },
    #[error("inline matrix larger than {MAX_INLINE_MATRIX}x{MAX_INLINE_MATRIX}")]
    MatrixTooLarge,
    #[error("matrix is not unitary (deviation {0:e})")]
    NonUnitary(f64),
    #[error("non-finite angle")]
    NonFiniteAngle,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("tolerance {0} must be finite and non-negative")]
    InvalidTolerance(f64),
    #[error("register list is empty")]
    EmptyRegisterList,
    #[error("reverse range {from}..{to} is malformed")]
    InvalidRange { from: usize, to: usize },
    #[error("reverse range {from}..{to} includes the reverse step itself")]
    SelfReferentialReverse { from: usize, to: usize },
    #[error("reverse range {from}..{to} refers to later steps")]
    ForwardReverse { from: usize, to: usize },
    #[error("reverse range contains step {step} ({keyword}), which has no inverse")]
    NotInvertible { step: usize, keyword: &'static str },
    #[error("at most one measure step is allowed")]
    MultipleMeasure,
    #[error("only expect steps may follow measure")]
    StepAfterMeasure,
    #[error("expect steps must come after measure or at the end")]
    ExpectNotTrailing,
}

/// A validation failure, positioned at a 1-based step index where applicable.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationError {
    pub step: Option<usize>,
    pub kind: ValidationErrorKind,
}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.step {
            Some(s) => write!(f, "step {s}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl ValidationError {
    fn at(step: usize, kind: ValidationErrorKind) -> Self {
        ValidationError { step: Some(step), kind }
    }

    fn global(kind: ValidationErrorKind) -> Self {
        ValidationError { step: None, kind }
    }
}

fn from_state_error(e: StateError) -> ValidationErrorKind {
    match e {
        StateError::UnknownRegister(n) => ValidationErrorKind::UnknownRegister(n),
        StateError::DuplicateTarget(n) | StateError::DuplicateRegister(n) => ValidationErrorKind::DuplicateRegister(n),
        StateError::ValueOutOfRange { register, value, dim } => {
            ValidationErrorKind::ValueOutOfRange { register, value, dim }
        }
        StateError::DimensionMismatch { expected, found } => ValidationErrorKind::MatrixSize { expected, found },
        StateError::NonUnitaryMatrix { deviation } => ValidationErrorKind::NonUnitary(deviation),
        StateError::EmptyTargets => ValidationErrorKind::EmptyRegisterList,
        other => ValidationErrorKind::Layout(other),
    }
}

/// A registered expectation about the final readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    /// 1-based index of the expect step.
    pub step: usize,
    pub assignment: Assignment,
    pub prob: f64,
    pub tol: f64,
}

/// One executable instruction; `step` is the 1-based source step it came from.
#[derive(Debug, Clone)]
pub struct Instr {
    pub step: usize,
    pub kind: InstrKind,
}

#[derive(Debug, Clone)]
pub enum InstrKind {
    Apply(BoundOperator),
    CollapseSite(Vec<String>),
    CheckFactorized { register: String, tol: f64 },
    Measure(Vec<String>),
}

/// A protocol whose invariants have all been checked, lowered to bound operators.
#[derive(Debug, Clone)]
pub struct ValidatedProtocol {
    protocol: Protocol,
    layout: RegisterLayout,
    init_index: usize,
    program: Vec<Instr>,
    expectations: Vec<Expectation>,
    retained: Vec<BoundOperator>,
}

impl ValidatedProtocol {
    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn name(&self) -> &str {
        &self.protocol.name
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn init_index(&self) -> usize {
        self.init_index
    }

    pub fn program(&self) -> &[Instr] {
        &self.program
    }

    pub fn expectations(&self) -> &[Expectation] {
        &self.expectations
    }

    /// Registers read out by the trailing measure, if any.
    pub fn measured_registers(&self) -> Option<&[String]> {
        self.program.iter().find_map(|i| match &i.kind {
            InstrKind::Measure(r) => Some(r.as_slice()),
            _ => None,
        })
    }

    /// Matrix-bearing steps not covered by any reverse range, in order.
    ///
    /// Applied to the initial state they give the state a perfect reversal
    /// should return to.
    pub fn retained_operators(&self) -> &[BoundOperator] {
        &self.retained
    }

    pub fn has_collapse_sites(&self) -> bool {
        self.program
            .iter()
            .any(|i| matches!(i.kind, InstrKind::CollapseSite(_)))
    }

    pub fn compile_reverse(&self, from: usize, to: usize) -> Result<Vec<Step>, ValidationErrorKind> {
        compile_reverse(&self.protocol.steps, &self.layout, from, to)
    }
}

fn check_perm(perm: &[usize], dim: usize) -> bool {
    let mut seen = vec![false; dim];
    perm.len() == dim && perm.iter().all(|&v| v < dim && !std::mem::replace(&mut seen[v], true))
}

fn require_dim(layout: &RegisterLayout, name: &str) -> Result<usize, ValidationErrorKind> {
    layout
        .dim_of(name)
        .ok_or_else(|| ValidationErrorKind::UnknownRegister(name.to_string()))
}

/// Joint permutation over (src, dst) levels, src most significant.
fn controlled_permutation(src_dim: usize, dst_dim: usize, map: impl Fn(usize, usize) -> usize) -> CMatrix {
    let mut image = Vec::with_capacity(src_dim * dst_dim);
    for s in 0..src_dim {
        for d in 0..dst_dim {
            image.push(s * dst_dim + map(s, d));
        }
    }
    CMatrix::permutation(&image)
}

/// Lowers a matrix-bearing step to a checked unitary; markers and control
/// steps yield `None`.
pub fn lower_step(step: &Step, layout: &RegisterLayout) -> Result<Option<LocalOperator>, ValidationErrorKind> {
    let op = match step {
        Step::Superpose { target, theta, phi } => {
            if !theta.is_finite() || !phi.is_finite() {
                return Err(ValidationErrorKind::NonFiniteAngle);
            }
            let d = require_dim(layout, target)?;
            let (s, c) = theta.sin_cos();
            let mut m = CMatrix::identity(d);
            m.set(0, 0, Complex64::new(c, 0.0));
            m.set(1, 0, Complex64::from_polar(s, *phi));
            m.set(0, 1, -Complex64::from_polar(s, -phi));
            m.set(1, 1, Complex64::new(c, 0.0));
            LocalOperator::unitary(vec![target.clone()], m)
        }
        Step::Couple { control, target } => {
            let dc = require_dim(layout, control)?;
            let dt = require_dim(layout, target)?;
            if control == target {
                return Err(ValidationErrorKind::DuplicateRegister(control.clone()));
            }
            let m = controlled_permutation(dc, dt, |c, t| if c == 1 { (t + 1) % dt } else { t });
            LocalOperator::unitary(vec![control.clone(), target.clone()], m)
        }
        Step::CopyInto { src, dst, perms } => {
            let ds = require_dim(layout, src)?;
            let dd = require_dim(layout, dst)?;
            if src == dst {
                return Err(ValidationErrorKind::DuplicateRegister(src.clone()));
            }
            if perms.len() != ds {
                return Err(ValidationErrorKind::PermutationCount {
                    expected: ds,
                    found: perms.len(),
                });
            }
            for (s, p) in perms.iter().enumerate() {
                if !check_perm(p, dd) {
                    return Err(ValidationErrorKind::NonPermutation {
                        source_level: s,
                        dim: dd,
                    });
                }
            }
            let m = controlled_permutation(ds, dd, |s, d| perms[s][d]);
            LocalOperator::unitary(vec![src.clone(), dst.clone()], m)
        }
        Step::RecordDefinite { dst } => {
            let d = require_dim(layout, dst)?;
            let mut image: Vec<usize> = (0..d).collect();
            image.swap(0, 1);
            LocalOperator::unitary(vec![dst.clone()], CMatrix::permutation(&image))
        }
        Step::RecordWhich { src, dst } => {
            let ds = require_dim(layout, src)?;
            let dd = require_dim(layout, dst)?;
            if src == dst {
                return Err(ValidationErrorKind::DuplicateRegister(src.clone()));
            }
            if ds != 2 {
                return Err(ValidationErrorKind::WrongDimension {
                    register: src.clone(),
                    dim: ds,
                    requirement: "record-which source must be 2-level",
                });
            }
            if dd < 4 {
                return Err(ValidationErrorKind::WrongDimension {
                    register: dst.clone(),
                    dim: dd,
                    requirement: "record-which destination needs at least 4 levels",
                });
            }
            let m = controlled_permutation(2, dd, |s, d| {
                let other = 2 + s;
                if d == 0 {
                    other
                } else if d == other {
                    0
                } else {
                    d
                }
            });
            LocalOperator::unitary(vec![src.clone(), dst.clone()], m)
        }
        Step::Unitary { targets, matrix } => {
            if matrix.dim() > MAX_INLINE_MATRIX {
                return Err(ValidationErrorKind::MatrixTooLarge);
            }
            let mut expected = 1usize;
            for t in targets {
                expected = expected.saturating_mul(require_dim(layout, t)?);
            }
            if expected != matrix.dim() {
                return Err(ValidationErrorKind::MatrixSize {
                    expected,
                    found: matrix.dim(),
                });
            }
            LocalOperator::unitary(targets.clone(), matrix.clone())
        }
        _ => return Ok(None),
    };
    op.map(Some).map_err(from_state_error)
}

/// Inverse of a single step as a list of steps.
///
/// Markers invert to nothing. A `couple` on a 2-level target is its own
/// inverse; on larger targets the decrement is expressed as a `copy-into`.
pub fn invert_step(step: &Step, layout: &RegisterLayout) -> Result<Vec<Step>, ValidationErrorKind> {
    Ok(match step {
        Step::Superpose { target, theta, phi } => vec![Step::Superpose {
            target: target.clone(),
            theta: -theta,
            phi: *phi,
        }],
        Step::Couple { control, target } => {
            let dc = require_dim(layout, control)?;
            let dt = require_dim(layout, target)?;
            if dt == 2 {
                vec![step.clone()]
            } else {
                let perms = (0..dc)
                    .map(|c| (0..dt).map(|t| if c == 1 { (t + dt - 1) % dt } else { t }).collect())
                    .collect();
                vec![Step::CopyInto {
                    src: control.clone(),
                    dst: target.clone(),
                    perms,
                }]
            }
        }
        Step::CopyInto { src, dst, perms } => {
            let inverse = perms
                .iter()
                .map(|p| {
                    let mut inv = vec![0; p.len()];
                    for (level, &image) in p.iter().enumerate() {
                        if image < inv.len() {
                            inv[image] = level;
                        }
                    }
                    inv
                })
                .collect();
            vec![Step::CopyInto {
                src: src.clone(),
                dst: dst.clone(),
                perms: inverse,
            }]
        }
        Step::RecordDefinite { .. } | Step::RecordWhich { .. } => vec![step.clone()],
        Step::Unitary { targets, matrix } => vec![Step::Unitary {
            targets: targets.clone(),
            matrix: matrix.adjoint(),
        }],
        Step::CollapseSite { .. } | Step::CheckFactorized { .. } => vec![],
        Step::Reverse { .. } | Step::Measure(_) | Step::Expect { .. } => {
            return Err(ValidationErrorKind::NotInvertible {
                step: 0,
                keyword: step.keyword(),
            })
        }
    })
}

/// Inverse steps of `steps[from..=to]` (1-based), last step first.
pub fn compile_reverse(
    steps: &[Step],
    layout: &RegisterLayout,
    from: usize,
    to: usize,
) -> Result<Vec<Step>, ValidationErrorKind> {
    if to + 1 == from {
        return Ok(vec![]);
    }
    if from == 0 || to < from || to > steps.len() {
        return Err(ValidationErrorKind::InvalidRange { from, to });
    }
    let mut out = Vec::new();
    for idx in (from..=to).rev() {
        let inv = invert_step(&steps[idx - 1], layout).map_err(|e| match e {
            ValidationErrorKind::NotInvertible { keyword, .. } => {
                ValidationErrorKind::NotInvertible { step: idx, keyword }
            }
            other => other,
        })?;
        out.extend(inv);
    }
    Ok(out)
}

fn check_assignment(layout: &RegisterLayout, assignment: &Assignment) -> Result<(), ValidationErrorKind> {
    if assignment.is_empty() {
        return Err(ValidationErrorKind::EmptyRegisterList);
    }
    for (i, (name, v)) in assignment.iter().enumerate() {
        let dim = require_dim(layout, name)?;
        if assignment[..i].iter().any(|(n, _)| n == name) {
            return Err(ValidationErrorKind::DuplicateRegister(name.clone()));
        }
        if *v >= dim {
            return Err(ValidationErrorKind::ValueOutOfRange {
                register: name.clone(),
                value: *v,
                dim,
            });
        }
    }
    Ok(())
}

fn check_register_list(layout: &RegisterLayout, names: &[String]) -> Result<(), ValidationErrorKind> {
    if names.is_empty() {
        return Err(ValidationErrorKind::EmptyRegisterList);
    }
    for (i, name) in names.iter().enumerate() {
        require_dim(layout, name)?;
        if names[..i].contains(name) {
            return Err(ValidationErrorKind::DuplicateRegister(name.clone()));
        }
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<(), ValidationErrorKind> {
    if tol.is_finite() && tol >= 0.0 {
        Ok(())
    } else {
        Err(ValidationErrorKind::InvalidTolerance(tol))
    }
}

pub fn validate(protocol: &Protocol) -> Result<ValidatedProtocol, ValidationError> {
    validate_with_cap(protocol, MAX_TOTAL_DIM)
}

/// Validation with a joint-dimension cap at or below the default.
pub fn validate_with_cap(protocol: &Protocol, cap: usize) -> Result<ValidatedProtocol, ValidationError> {
    if !crate::statevec::is_identifier(&protocol.name) {
        return Err(ValidationError::global(ValidationErrorKind::InvalidName(
            protocol.name.clone(),
        )));
    }
    let layout = RegisterLayout::with_cap(protocol.registers.iter().cloned(), cap).map_err(|e| {
        ValidationError::global(match e {
            StateError::SystemTooLarge { dim, cap } => ValidationErrorKind::SystemTooLarge { dim, cap },
            other => ValidationErrorKind::Layout(other),
        })
    })?;
    let init_index = layout
        .index_of(protocol.init.iter().map(|(n, v)| (n.as_str(), *v)))
        .map_err(|e| ValidationError::global(ValidationErrorKind::Init(e)))?;

    let steps = &protocol.steps;
    let mut program = Vec::new();
    let mut expectations = Vec::new();
    let mut reversed = vec![false; steps.len()];
    let mut seen_measure = false;
    let mut seen_expect = false;

    for (i, step) in steps.iter().enumerate() {
        let idx = i + 1;
        let err = |kind| ValidationError::at(idx, kind);
        match step {
            Step::Expect { .. } => {}
            Step::Measure(_) if seen_measure => return Err(err(ValidationErrorKind::MultipleMeasure)),
            _ if seen_expect => return Err(err(ValidationErrorKind::ExpectNotTrailing)),
            Step::Measure(_) => {}
            _ if seen_measure => return Err(err(ValidationErrorKind::StepAfterMeasure)),
            _ => {}
        }
        match step {
            s if s.is_matrix_bearing() => {
                let op = lower_step(s, &layout)
                    .map_err(err)?
                    .expect("matrix-bearing step lowers");
                let bound = op.bind(&layout).map_err(|e| err(from_state_error(e)))?;
                program.push(Instr {
                    step: idx,
                    kind: InstrKind::Apply(bound),
                });
            }
            Step::CollapseSite { registers } => {
                check_register_list(&layout, registers).map_err(err)?;
                program.push(Instr {
                    step: idx,
                    kind: InstrKind::CollapseSite(registers.clone()),
                });
            }
            Step::CheckFactorized { register, tol } => {
                require_dim(&layout, register).map_err(err)?;
                check_tol(*tol).map_err(err)?;
                program.push(Instr {
                    step: idx,
                    kind: InstrKind::CheckFactorized {
                        register: register.clone(),
                        tol: *tol,
                    },
                });
            }
            Step::Reverse { from, to } => {
                let (from, to) = (*from, *to);
                if from == 0 || to + 1 < from {
                    return Err(err(ValidationErrorKind::InvalidRange { from, to }));
                }
                if to >= idx {
                    return Err(err(if from <= idx {
                        ValidationErrorKind::SelfReferentialReverse { from, to }
                    } else {
                        ValidationErrorKind::ForwardReverse { from, to }
                    }));
                }
                for j in from..=to {
                    if matches!(
                        steps[j - 1],
                        Step::Reverse { .. } | Step::Measure(_) | Step::Expect { .. }
                    ) {
                        return Err(err(ValidationErrorKind::NotInvertible {
                            step: j,
                            keyword: steps[j - 1].keyword(),
                        }));
                    }
                    reversed[j - 1] = true;
                }
                for inv in compile_reverse(steps, &layout, from, to).map_err(err)? {
                    let op = lower_step(&inv, &layout)
                        .map_err(err)?
                        .expect("inverse steps carry matrices");
                    let bound = op.bind(&layout).map_err(|e| err(from_state_error(e)))?;
                    program.push(Instr {
                        step: idx,
                        kind: InstrKind::Apply(bound),
                    });
                }
            }
            Step::Measure(targets) => {
                let regs = match targets {
                    MeasureTargets::All => layout.names().map(str::to_string).collect(),
                    MeasureTargets::Registers(r) => {
                        check_register_list(&layout, r).map_err(err)?;
                        r.clone()
                    }
                };
                seen_measure = true;
                program.push(Instr {
                    step: idx,
                    kind: InstrKind::Measure(regs),
                });
            }
            Step::Expect { assignment, prob, tol } => {
                check_assignment(&layout, assignment).map_err(err)?;
                if !(0.0..=1.0).contains(prob) {
                    return Err(err(ValidationErrorKind::InvalidProbability(*prob)));
                }
                check_tol(*tol).map_err(err)?;
                seen_expect = true;
                expectations.push(Expectation {
                    step: idx,
                    assignment: assignment.clone(),
                    prob: *prob,
                    tol: *tol,
                });
            }
            _ => unreachable!("all step kinds handled"),
        }
    }

    let retained = program
        .iter()
        .filter(|instr| {
            let src = &steps[instr.step - 1];
            src.is_matrix_bearing() && !reversed[instr.step - 1]
        })
        .filter_map(|instr| match &instr.kind {
            InstrKind::Apply(op) => Some(op.clone()),
            _ => None,
        })
        .collect();

    Ok(ValidatedProtocol {
        protocol: protocol.clone(),
        layout,
        init_index,
        program,
        expectations,
        retained,
    })
}

impl Protocol {
    /// Same protocol with each `reverse` replaced by its explicit inverse steps.
    pub fn expand_reverses(&self) -> Result<Protocol, ValidationError> {
        let vp = validate(self)?;
        let mut steps = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            match step {
                Step::Reverse { from, to } => {
                    steps.extend(vp.compile_reverse(*from, *to).map_err(ValidationError::global)?)
                }
                other => steps.push(other.clone()),
            }
        }
        Ok(Protocol { steps, ..self.clone() })
    }
}
