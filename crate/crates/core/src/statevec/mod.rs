//! Mixed-radix state-vector engine over named qudit registers.
//!
//! Basis indices are mixed-radix with the first declared register most
//! significant. Everything that evolves a state goes through
//! [`StateVector::apply_local`] (or its bound/in-place variants); the dense
//! [`dense_embed`] path exists to check it on small systems.

mod layout;
mod matrix;
mod operator;

pub use layout::{is_identifier, Register, RegisterLayout, MAX_REGISTER_DIM, MAX_TOTAL_DIM};
pub use matrix::CMatrix;
pub use operator::{dense_embed, BoundOperator, LocalOperator, ORACLE_MAX_DIM, UNITARY_TOL};

use num_complex::Complex64;
use thiserror::Error;

/// Allowed drift of the squared norm away from 1.
pub const NORM_TOL: f64 = 1e-9;
/// Below this total probability a measurement is considered degenerate.
pub const DEGENERATE_PROB: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("invalid register name {0:?}")]
    InvalidName(String),
    #[error("duplicate register {0:?}")]
    DuplicateRegister(String),
    #[error("register {name:?} has dimension {dim}; allowed range is 2..=16")]
    DimOutOfRange { name: String, dim: usize },
    #[error("layout declares no registers")]
    EmptyLayout,
    #[error("system too large: total dimension {dim} exceeds cap {cap}")]
    SystemTooLarge { dim: u128, cap: usize },
    #[error("unknown register {0:?}")]
    UnknownRegister(String),
    #[error("no value given for register {0:?}")]
    MissingRegister(String),
    #[error("value {value} out of range for register {register:?} of dimension {dim}")]
    ValueOutOfRange { register: String, value: usize, dim: usize },
    #[error("expected {expected} values, found {found}")]
    WrongArity { expected: usize, found: usize },
    #[error("basis index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("operator has no targets")]
    EmptyTargets,
    #[error("register {0:?} listed twice")]
    DuplicateTarget(String),
    #[error("matrix size {found} does not match target dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix flagged unitary deviates from unitarity by {deviation:e}")]
    NonUnitaryMatrix { deviation: f64 },
    #[error("dense oracle limited to dimension {cap}, got {dim}")]
    SystemTooLargeForOracle { dim: usize, cap: usize },
    #[error("amplitude vector has length {found}, layout needs {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("state is not normalized (squared norm {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("total measured probability {total:e} is degenerate")]
    DegenerateState { total: f64 },
    #[error("uniform draw {0} is outside [0, 1)")]
    InvalidUniform(f64),
    #[error("states or operator refer to different layouts")]
    LayoutMismatch,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

/// Result of a projective measurement on a list of registers.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub registers: Vec<String>,
    pub values: Vec<usize>,
    pub probability: f64,
}

/// A normalized pure state over a [`RegisterLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Product basis state for a complete `name -> level` assignment.
    pub fn basis_state<I, K>(layout: &RegisterLayout, assignment: I) -> Result<Self, StateError>
    where
        I: IntoIterator<Item = (K, usize)>,
        K: AsRef<str>,
    {
        let index = layout.index_of(assignment)?;
        Self::from_basis_index(layout, index)
    }

    pub fn from_basis_index(layout: &RegisterLayout, index: usize) -> Result<Self, StateError> {
        let d = layout.total_dim();
        if index >= d {
            return Err(StateError::IndexOutOfRange { index, dim: d });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); d];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            layout: layout.clone(),
            amps,
        })
    }

    /// Wraps amplitudes that are already normalized to within [`NORM_TOL`].
    pub fn from_amplitudes(layout: &RegisterLayout, amps: Vec<Complex64>) -> Result<Self, StateError> {
        let state = Self::unchecked(layout, amps)?;
        let n = state.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(StateError::NotNormalized { norm_sqr: n });
        }
        Ok(state)
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(layout: &RegisterLayout, amps: Vec<Complex64>) -> Result<Self, StateError> {
        let mut state = Self::unchecked(layout, amps)?;
        let n = state.norm_sqr();
        if !n.is_finite() || n <= DEGENERATE_PROB {
            return Err(StateError::NotNormalized { norm_sqr: n });
        }
        let scale = 1.0 / n.sqrt();
        state.amps.iter_mut().for_each(|a| *a *= scale);
        Ok(state)
    }

    fn unchecked(layout: &RegisterLayout, amps: Vec<Complex64>) -> Result<Self, StateError> {
        if amps.len() != layout.total_dim() {
            return Err(StateError::LengthMismatch {
                expected: layout.total_dim(),
                found: amps.len(),
            });
        }
        Ok(StateVector {
            layout: layout.clone(),
            amps,
        })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, values: &[usize]) -> Result<Complex64, StateError> {
        Ok(self.amps[self.layout.encode(values)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Indices whose probability exceeds `threshold`, ascending.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.amps.len())
            .filter(|&i| self.amps[i].norm_sqr() > threshold)
            .collect()
    }

    pub fn apply_local(&self, op: &LocalOperator) -> Result<StateVector, StateError> {
        let mut out = self.clone();
        out.apply_local_mut(op)?;
        Ok(out)
    }

    pub fn apply_local_mut(&mut self, op: &LocalOperator) -> Result<(), StateError> {
        let bound = op.bind(&self.layout)?;
        bound.apply_to(&mut self.amps);
        Ok(())
    }

    /// Applies an operator already bound to this state's layout.
    pub fn apply_bound_mut(&mut self, op: &BoundOperator) -> Result<(), StateError> {
        if op.layout() != &self.layout {
            return Err(StateError::LayoutMismatch);
        }
        op.apply_to(&mut self.amps);
        Ok(())
    }

    /// Joint Born probabilities of `registers`, indexed mixed-radix in the
    /// listed order (first listed register most significant).
    pub fn marginal_distribution<S: AsRef<str>>(&self, registers: &[S]) -> Result<Vec<f64>, StateError> {
        let (positions, dims) = self.measured(registers)?;
        let size: usize = dims.iter().product();
        let mut probs = vec![0.0; size];
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p != 0.0 {
                probs[self.joint_index(i, &positions, &dims)] += p;
            }
        }
        Ok(probs)
    }

    /// Probability that the listed registers hold the given levels.
    pub fn marginal_probability<I, K>(&self, assignment: I) -> Result<f64, StateError>
    where
        I: IntoIterator<Item = (K, usize)>,
        K: AsRef<str>,
    {
        let mut wanted: Vec<(usize, usize)> = Vec::new();
        for (name, v) in assignment {
            let k = self.layout.require(name.as_ref())?;
            let dim = self.layout.registers()[k].dim();
            if v >= dim {
                return Err(StateError::ValueOutOfRange {
                    register: name.as_ref().to_string(),
                    value: v,
                    dim,
                });
            }
            if wanted.iter().any(|&(j, _)| j == k) {
                return Err(StateError::DuplicateTarget(name.as_ref().to_string()));
            }
            wanted.push((k, v));
        }
        let strides = self.layout.strides();
        let regs = self.layout.registers();
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| wanted.iter().all(|&(k, v)| (i / strides[k]) % regs[k].dim() == v))
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projective measurement of `registers` driven by one uniform `u` in [0, 1).
    ///
    /// The outcome is picked by inverse CDF over joint values in ascending
    /// mixed-radix order; the returned state is the renormalized projection.
    pub fn measure<S: AsRef<str>>(
        &self,
        registers: &[S],
        u: f64,
    ) -> Result<(MeasurementOutcome, StateVector), StateError> {
        if !(0.0..1.0).contains(&u) {
            return Err(StateError::InvalidUniform(u));
        }
        let (positions, dims) = self.measured(registers)?;
        let probs = self.marginal_distribution(registers)?;
        let total: f64 = probs.iter().sum();
        if total.is_nan() || total < DEGENERATE_PROB {
            return Err(StateError::DegenerateState { total });
        }
        let threshold = u * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (j, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            acc += p;
            chosen = Some(j);
            if threshold < acc {
                break;
            }
        }
        // nonempty: total > 0 guarantees at least one positive entry
        let chosen = chosen.expect("positive probability mass");
        let p = probs[chosen];
        let scale = 1.0 / p.sqrt();
        let mut amps = self.amps.clone();
        for (i, a) in amps.iter_mut().enumerate() {
            if self.joint_index(i, &positions, &dims) == chosen {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        let mut values = vec![0; dims.len()];
        let mut rem = chosen;
        for (v, &d) in values.iter_mut().zip(&dims).rev() {
            *v = rem % d;
            rem /= d;
        }
        let outcome = MeasurementOutcome {
            registers: registers.iter().map(|s| s.as_ref().to_string()).collect(),
            values,
            probability: (p / total).clamp(0.0, 1.0),
        };
        Ok((
            outcome,
            StateVector {
                layout: self.layout.clone(),
                amps,
            },
        ))
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64, StateError> {
        if self.layout != other.layout {
            return Err(StateError::LayoutMismatch);
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Squared overlap `|<a|b>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64, StateError> {
        Ok(self.inner(other)?.norm_sqr().clamp(0.0, 1.0))
    }

    /// Purity `Tr(rho^2)` of the reduced state on `part`.
    ///
    /// Uses whichever side of the bipartition is smaller for the Gram matrix;
    /// both sides share the same nonzero spectrum.
    pub fn reduced_purity<S: AsRef<str>>(&self, part: &[S]) -> Result<f64, StateError> {
        if part.is_empty() {
            return Err(StateError::InvalidPartition("part is empty".into()));
        }
        let mut positions = Vec::with_capacity(part.len());
        for name in part {
            let k = self
                .layout
                .position(name.as_ref())
                .ok_or_else(|| StateError::InvalidPartition(format!("unknown register {:?}", name.as_ref())))?;
            if positions.contains(&k) {
                return Err(StateError::InvalidPartition(format!(
                    "register {:?} listed twice",
                    name.as_ref()
                )));
            }
            positions.push(k);
        }
        if positions.len() == self.layout.len() {
            return Err(StateError::InvalidPartition(
                "part must be a proper subset of the registers".into(),
            ));
        }
        positions.sort_unstable();
        let rest: Vec<usize> = (0..self.layout.len()).filter(|k| !positions.contains(k)).collect();
        let dims = |ks: &[usize]| -> Vec<usize> { ks.iter().map(|&k| self.layout.registers()[k].dim()).collect() };
        let (part_dims, rest_dims) = (dims(&positions), dims(&rest));
        let d_part: usize = part_dims.iter().product();
        let d_rest: usize = rest_dims.iter().product();

        // Reshape into a d_part x d_rest matrix, row-major.
        let mut m = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            let p = self.joint_index(i, &positions, &part_dims);
            let r = self.joint_index(i, &rest, &rest_dims);
            m[p * d_rest + r] = a;
        }
        let gram_entry = |i: usize, j: usize| -> Complex64 {
            if d_part <= d_rest {
                let (ri, rj) = (&m[i * d_rest..(i + 1) * d_rest], &m[j * d_rest..(j + 1) * d_rest]);
                ri.iter().zip(rj).map(|(a, b)| a * b.conj()).sum()
            } else {
                (0..d_part).map(|p| m[p * d_rest + i].conj() * m[p * d_rest + j]).sum()
            }
        };
        let n = d_part.min(d_rest);
        let mut purity = 0.0;
        for i in 0..n {
            purity += gram_entry(i, i).norm_sqr();
            for j in i + 1..n {
                purity += 2.0 * gram_entry(i, j).norm_sqr();
            }
        }
        Ok(purity.clamp(0.0, 1.0))
    }

    fn measured<S: AsRef<str>>(&self, registers: &[S]) -> Result<(Vec<usize>, Vec<usize>), StateError> {
        if registers.is_empty() {
            return Err(StateError::EmptyTargets);
        }
        let positions = self.layout.resolve_distinct(registers)?;
        let dims = positions.iter().map(|&k| self.layout.registers()[k].dim()).collect();
        Ok((positions, dims))
    }

    fn joint_index(&self, index: usize, positions: &[usize], dims: &[usize]) -> usize {
        let strides = self.layout.strides();
        positions
            .iter()
            .zip(dims)
            .fold(0, |acc, (&k, &d)| acc * d + (index / strides[k]) % d)
    }
}

/// Free-function form of [`StateVector::basis_state`].
pub fn basis_state<I, K>(layout: &RegisterLayout, assignment: I) -> Result<StateVector, StateError>
where
    I: IntoIterator<Item = (K, usize)>,
    K: AsRef<str>,
{
    StateVector::basis_state(layout, assignment)
}

pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64, StateError> {
    a.fidelity(b)
}
