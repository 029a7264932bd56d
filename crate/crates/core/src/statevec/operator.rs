use num_complex::Complex64;

use super::{CMatrix, RegisterLayout, StateError};

/// Entry-wise tolerance for `M^dagger M - I` on operators flagged unitary.
pub const UNITARY_TOL: f64 = 1e-10;
/// Largest joint dimension for which [`dense_embed`] builds a full matrix.
pub const ORACLE_MAX_DIM: usize = 1 << 12;

/// A dense operator acting on an ordered list of named registers.
///
/// The local basis of the matrix is the mixed-radix product of the target
/// dimensions, first target most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    targets: Vec<String>,
    matrix: CMatrix,
    unitary: bool,
}

impl LocalOperator {
    /// Fails with `NonUnitaryMatrix` when `unitary` is set and the check fails.
    pub fn new<S: Into<String>>(targets: Vec<S>, matrix: CMatrix, unitary: bool) -> Result<Self, StateError> {
        let targets: Vec<String> = targets.into_iter().map(Into::into).collect();
        if targets.is_empty() {
            return Err(StateError::EmptyTargets);
        }
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].contains(t) {
                return Err(StateError::DuplicateTarget(t.clone()));
            }
        }
        if unitary {
            let deviation = matrix.unitarity_deviation();
            if deviation.is_nan() || deviation > UNITARY_TOL {
                return Err(StateError::NonUnitaryMatrix { deviation });
            }
        }
        Ok(LocalOperator {
            targets,
            matrix,
            unitary,
        })
    }

    pub fn unitary<S: Into<String>>(targets: Vec<S>, matrix: CMatrix) -> Result<Self, StateError> {
        Self::new(targets, matrix, true)
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    /// Resolves targets against `layout` and precomputes the gather offsets.
    pub fn bind(&self, layout: &RegisterLayout) -> Result<BoundOperator, StateError> {
        let positions = layout.resolve_distinct(&self.targets)?;
        let dims: Vec<usize> = positions.iter().map(|&k| layout.registers()[k].dim()).collect();
        let local_dim: usize = dims.iter().product();
        if local_dim != self.matrix.dim() {
            return Err(StateError::DimensionMismatch {
                expected: local_dim,
                found: self.matrix.dim(),
            });
        }
        let strides = layout.strides();
        let mut offsets = Vec::with_capacity(local_dim);
        for local in 0..local_dim {
            let mut rem = local;
            let mut offset = 0;
            for (&k, &d) in positions.iter().zip(&dims).rev() {
                offset += (rem % d) * strides[k];
                rem /= d;
            }
            offsets.push(offset);
        }
        let rest = (0..layout.len())
            .filter(|k| !positions.contains(k))
            .map(|k| (strides[k], layout.registers()[k].dim()))
            .collect();
        Ok(BoundOperator {
            layout: layout.clone(),
            matrix: self.matrix.clone(),
            unitary: self.unitary,
            offsets,
            rest,
        })
    }
}

/// A [`LocalOperator`] resolved against one layout, ready to apply.
#[derive(Debug, Clone)]
pub struct BoundOperator {
    layout: RegisterLayout,
    matrix: CMatrix,
    unitary: bool,
    offsets: Vec<usize>,
    /// (stride, dim) of every non-target register, in layout order.
    rest: Vec<(usize, usize)>,
}

impl BoundOperator {
    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    /// Strided gather, local multiply, scatter; once per non-target configuration.
    pub(crate) fn apply_to(&self, amps: &mut [Complex64]) {
        let m = self.offsets.len();
        let mut gathered = vec![Complex64::new(0.0, 0.0); m];
        let mut counter = vec![0usize; self.rest.len()];
        let mut base = 0usize;
        loop {
            for (g, &o) in gathered.iter_mut().zip(&self.offsets) {
                *g = amps[base + o];
            }
            for (r, &o) in self.offsets.iter().enumerate() {
                amps[base + o] = self.matrix.row(r).iter().zip(&gathered).map(|(a, b)| a * b).sum();
            }
            // odometer over the non-target registers, last one fastest
            let mut k = self.rest.len();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                let (stride, dim) = self.rest[k];
                counter[k] += 1;
                base += stride;
                if counter[k] < dim {
                    break;
                }
                base -= stride * dim;
                counter[k] = 0;
            }
        }
    }
}

/// Full `D x D` embedding of `op` (identity on all other registers).
///
/// Built entry by entry from decoded digit tuples, independently of the
/// gather kernel, so it can serve as a check on [`BoundOperator`].
pub fn dense_embed(op: &LocalOperator, layout: &RegisterLayout) -> Result<CMatrix, StateError> {
    let d = layout.total_dim();
    if d > ORACLE_MAX_DIM {
        return Err(StateError::SystemTooLargeForOracle {
            dim: d,
            cap: ORACLE_MAX_DIM,
        });
    }
    let positions = layout.resolve_distinct(op.targets())?;
    let dims: Vec<usize> = positions.iter().map(|&k| layout.registers()[k].dim()).collect();
    let local_dim: usize = dims.iter().product();
    if local_dim != op.matrix().dim() {
        return Err(StateError::DimensionMismatch {
            expected: local_dim,
            found: op.matrix().dim(),
        });
    }
    let local_of = |digits: &[usize]| {
        positions
            .iter()
            .zip(&dims)
            .fold(0, |acc, (&k, &dim)| acc * dim + digits[k])
    };
    let decoded: Vec<Vec<usize>> = (0..d).map(|i| layout.digits(i)).collect();
    let mut out = CMatrix::zeros(d);
    for (r, rd) in decoded.iter().enumerate() {
        for (c, cd) in decoded.iter().enumerate() {
            let spectators_agree = (0..layout.len())
                .filter(|k| !positions.contains(k))
                .all(|k| rd[k] == cd[k]);
            if spectators_agree {
                out.set(r, c, op.matrix().get(local_of(rd), local_of(cd)));
            }
        }
    }
    Ok(out)
}
