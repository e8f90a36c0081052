use crate::error::{Error, Result};

/// An ordered set of equal-weight particles in `R^dim`, stored row-major.
///
/// Order is stable: no operation in this crate reorders or resamples rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl ParticleSet {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "particle set needs n >= 1 and dim >= 1, got {n}x{dim}"
            )));
        }
        if data.len() != n * dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} coordinates for {n}x{dim}, got {}",
                n * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "particle {} has a non-finite coordinate",
                pos / dim
            )));
        }
        Ok(Self { n, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("ragged particle rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.rows().map(|r| r[d]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.rows() {
            for (acc, x) in m.iter_mut().zip(row) {
                *acc += x;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Unbiased per-dimension sample variance (zero for a single particle).
    pub fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.dim];
        }
        let mean = self.mean();
        let mut v = vec![0.0; self.dim];
        for row in self.rows() {
            for d in 0..self.dim {
                v[d] += (row[d] - mean[d]).powi(2);
            }
        }
        v.iter_mut().for_each(|x| *x /= (self.n - 1) as f64);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(ParticleSet::new(0, 1, vec![]).is_err());
        assert!(ParticleSet::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ParticleSet::new(1, 1, vec![f64::INFINITY]).is_err());
        assert!(ParticleSet::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn moments() {
        let ps = ParticleSet::from_rows(&[vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(ps.mean(), vec![2.0, 0.0]);
        assert_eq!(ps.variance(), vec![2.0, 0.0]);
        assert_eq!(ps.column(0), vec![1.0, 3.0]);
    }
}
