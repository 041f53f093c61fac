use crate::error::{Error, Result};

/// A parameter-shaped gradient, stored densely or as sorted `(index, value)`
/// pairs when most coordinates are structurally zero (hashed features,
/// embedding rows of absent tokens).
#[derive(Debug, Clone, PartialEq)]
pub enum GradVec {
    Dense(Vec<f64>),
    Sparse { len: usize, entries: Vec<(usize, f64)> },
}

impl GradVec {
    pub fn len(&self) -> usize {
        match self {
            GradVec::Dense(v) => v.len(),
            GradVec::Sparse { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            GradVec::Dense(v) => Box::new(v.iter().copied()),
            GradVec::Sparse { entries, .. } => Box::new(entries.iter().map(|&(_, v)| v)),
        }
    }

    /// Squared Euclidean norm, summed in index order.
    pub fn norm_sq(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn scale(&mut self, factor: f64) {
        match self {
            GradVec::Dense(v) => v.iter_mut().for_each(|x| *x *= factor),
            GradVec::Sparse { entries, .. } => entries.iter_mut().for_each(|(_, x)| *x *= factor),
        }
    }

    /// `out += self`.
    pub fn add_to(&self, out: &mut [f64]) -> Result<()> {
        if out.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                got: self.len(),
            });
        }
        match self {
            GradVec::Dense(v) => out.iter_mut().zip(v).for_each(|(o, g)| *o += g),
            GradVec::Sparse { entries, .. } => {
                for &(i, g) in entries {
                    out[i] += g;
                }
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            GradVec::Dense(v) => v.clone(),
            GradVec::Sparse { len, entries } => {
                let mut out = vec![0.0; *len];
                for &(i, g) in entries {
                    out[i] += g;
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_and_dense_agree() {
        let s = GradVec::Sparse {
            len: 5,
            entries: vec![(1, 3.0), (4, -4.0)],
        };
        let d = GradVec::Dense(s.to_dense());
        assert_eq!(d, GradVec::Dense(vec![0.0, 3.0, 0.0, 0.0, -4.0]));
        assert_eq!(s.norm(), 5.0);
        assert_eq!(d.norm(), 5.0);
        let mut acc = vec![1.0; 5];
        s.add_to(&mut acc).unwrap();
        assert_eq!(acc, vec![1.0, 4.0, 1.0, 1.0, -3.0]);
        assert!(s.add_to(&mut [0.0; 4]).is_err());
    }
}
