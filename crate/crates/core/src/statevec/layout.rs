use super::StateError;

/// Hard ceiling on the joint Hilbert-space dimension.
pub const MAX_TOTAL_DIM: usize = 1 << 24;
/// Largest admissible single-register dimension.
pub const MAX_REGISTER_DIM: usize = 16;

/// A named qudit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    name: String,
    dim: usize,
}

impl Register {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Ordered register list fixing the mixed-radix basis indexing.
///
/// The first declared register is the most significant digit: the stride of
/// the last register is 1 and each earlier stride is the product of all
/// later dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterLayout {
    registers: Vec<Register>,
    strides: Vec<usize>,
    total_dim: usize,
}

/// Returns true if `name` matches `[A-Za-z_][A-Za-z0-9_-]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl RegisterLayout {
    pub fn new<I, S>(registers: I) -> Result<Self, StateError>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        Self::with_cap(registers, MAX_TOTAL_DIM)
    }

    /// Builds a layout with a joint-dimension cap below the default one.
    /// Caps above [`MAX_TOTAL_DIM`] are clamped to it.
    pub fn with_cap<I, S>(registers: I, cap: usize) -> Result<Self, StateError>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let cap = cap.min(MAX_TOTAL_DIM);
        let mut regs: Vec<Register> = Vec::new();
        // u128 so that absurd layouts report a size instead of overflowing.
        let mut total: u128 = 1;
        for (name, dim) in registers {
            let name = name.into();
            if !is_identifier(&name) {
                return Err(StateError::InvalidName(name));
            }
            if regs.iter().any(|r| r.name == name) {
                return Err(StateError::DuplicateRegister(name));
            }
            if !(2..=MAX_REGISTER_DIM).contains(&dim) {
                return Err(StateError::DimOutOfRange { name, dim });
            }
            total = total.saturating_mul(dim as u128);
            regs.push(Register { name, dim });
        }
        if regs.is_empty() {
            return Err(StateError::EmptyLayout);
        }
        if total > cap as u128 {
            return Err(StateError::SystemTooLarge { dim: total, cap });
        }
        let mut strides = vec![1usize; regs.len()];
        for k in (0..regs.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * regs[k + 1].dim;
        }
        Ok(RegisterLayout {
            registers: regs,
            strides,
            total_dim: total as usize,
        })
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn len(&self) -> usize {
        self.registers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registers.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.registers.iter().position(|r| r.name == name)
    }

    /// Position of `name`, or `UnknownRegister`.
    pub fn require(&self, name: &str) -> Result<usize, StateError> {
        self.position(name)
            .ok_or_else(|| StateError::UnknownRegister(name.to_string()))
    }

    pub fn dim_of(&self, name: &str) -> Option<usize> {
        self.position(name).map(|k| self.registers[k].dim)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.registers.iter().map(|r| r.name.as_str())
    }

    /// Mixed-radix index of a full value tuple.
    pub fn encode(&self, values: &[usize]) -> Result<usize, StateError> {
        if values.len() != self.registers.len() {
            return Err(StateError::WrongArity {
                expected: self.registers.len(),
                found: values.len(),
            });
        }
        let mut index = 0;
        for ((reg, &stride), &v) in self.registers.iter().zip(&self.strides).zip(values) {
            if v >= reg.dim {
                return Err(StateError::ValueOutOfRange {
                    register: reg.name.clone(),
                    value: v,
                    dim: reg.dim,
                });
            }
            index += v * stride;
        }
        Ok(index)
    }

    pub fn decode(&self, index: usize) -> Result<Vec<usize>, StateError> {
        if index >= self.total_dim {
            return Err(StateError::IndexOutOfRange {
                index,
                dim: self.total_dim,
            });
        }
        Ok(self.digits(index))
    }

    /// Digits of an index known to be in range.
    pub(crate) fn digits(&self, index: usize) -> Vec<usize> {
        self.registers
            .iter()
            .zip(&self.strides)
            .map(|(r, &s)| (index / s) % r.dim)
            .collect()
    }

    /// Index of a full `name -> value` assignment.
    pub fn index_of<I, K>(&self, assignment: I) -> Result<usize, StateError>
    where
        I: IntoIterator<Item = (K, usize)>,
        K: AsRef<str>,
    {
        let mut values: Vec<Option<usize>> = vec![None; self.registers.len()];
        for (name, v) in assignment {
            let name = name.as_ref();
            let k = self.require(name)?;
            if values[k].is_some() {
                return Err(StateError::DuplicateRegister(name.to_string()));
            }
            if v >= self.registers[k].dim {
                return Err(StateError::ValueOutOfRange {
                    register: name.to_string(),
                    value: v,
                    dim: self.registers[k].dim,
                });
            }
            values[k] = Some(v);
        }
        let mut index = 0;
        for (k, v) in values.into_iter().enumerate() {
            let v = v.ok_or_else(|| StateError::MissingRegister(self.registers[k].name.clone()))?;
            index += v * self.strides[k];
        }
        Ok(index)
    }

    /// Resolves a list of distinct register names to positions.
    pub(crate) fn resolve_distinct<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>, StateError> {
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let k = self.require(name.as_ref())?;
            if out.contains(&k) {
                return Err(StateError::DuplicateTarget(name.as_ref().to_string()));
            }
            out.push(k);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dw() -> RegisterLayout {
        RegisterLayout::new([("atom", 2), ("poison", 2), ("cat", 2), ("bob", 2), ("paper", 4)]).unwrap()
    }

    #[test]
    fn strides_first_register_most_significant() {
        let l = dw();
        assert_eq!(l.strides(), &[32, 16, 8, 4, 1]);
        assert_eq!(l.total_dim(), 64);
    }

    #[test]
    fn encode_examples() {
        let l = dw();
        assert_eq!(l.encode(&[0, 0, 0, 0, 0]).unwrap(), 0);
        assert_eq!(l.encode(&[1, 1, 1, 1, 0]).unwrap(), 60);
        let ab = RegisterLayout::new([("a", 2), ("b", 3)]).unwrap();
        assert_eq!(ab.encode(&[1, 2]).unwrap(), 5);
        assert!(matches!(
            ab.encode(&[0, 3]),
            Err(StateError::ValueOutOfRange { value: 3, dim: 3, .. })
        ));
    }

    #[test]
    fn enumeration_order_matches_strides() {
        // Nested loops with the first register outermost give ascending indices.
        let ab = RegisterLayout::new([("a", 2), ("b", 3)]).unwrap();
        let mut expected = 0;
        for a in 0..2 {
            for b in 0..3 {
                assert_eq!(ab.encode(&[a, b]).unwrap(), expected);
                assert_eq!(ab.decode(expected).unwrap(), vec![a, b]);
                expected += 1;
            }
        }
        let l = dw();
        let mut idx = 0;
        for a in 0..2 {
            for p in 0..2 {
                for c in 0..2 {
                    for b in 0..2 {
                        for q in 0..4 {
                            assert_eq!(l.encode(&[a, p, c, b, q]).unwrap(), idx);
                            idx += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(idx, 64);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(matches!(
            RegisterLayout::new([("a", 2), ("a", 2)]),
            Err(StateError::DuplicateRegister(_))
        ));
        assert!(matches!(
            RegisterLayout::new([("a", 1)]),
            Err(StateError::DimOutOfRange { .. })
        ));
        assert!(matches!(
            RegisterLayout::new([("a", 17)]),
            Err(StateError::DimOutOfRange { .. })
        ));
        assert!(matches!(
            RegisterLayout::new([("9a", 2)]),
            Err(StateError::InvalidName(_))
        ));
        assert!(matches!(
            RegisterLayout::new(Vec::<(String, usize)>::new()),
            Err(StateError::EmptyLayout)
        ));
        let many: Vec<(String, usize)> = (0..25).map(|i| (format!("q{i}"), 2)).collect();
        assert!(matches!(
            RegisterLayout::new(many.clone()),
            Err(StateError::SystemTooLarge { .. })
        ));
        assert!(RegisterLayout::new(many[..24].to_vec()).is_ok());
        assert!(matches!(
            RegisterLayout::with_cap(many[..10].to_vec(), 512),
            Err(StateError::SystemTooLarge { dim: 1024, cap: 512 })
        ));
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("deutsch-wigner"));
        assert!(is_identifier("_q0"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("-a"));
        assert!(!is_identifier("a b"));
    }

    #[test]
    fn index_of_errors() {
        let ab = RegisterLayout::new([("a", 2), ("b", 3)]).unwrap();
        assert_eq!(ab.index_of([("b", 2), ("a", 1)]).unwrap(), 5);
        assert!(matches!(ab.index_of([("a", 1)]), Err(StateError::MissingRegister(n)) if n == "b"));
        assert!(matches!(
            ab.index_of([("a", 1), ("c", 0)]),
            Err(StateError::UnknownRegister(n)) if n == "c"
        ));
    }
}
