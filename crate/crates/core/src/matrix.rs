use crate::error::{Error, Result};

/// Largest tolerated asymmetry `|d(i,j) - d(j,i)|`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Dense symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    labels: Vec<String>,
}

impl DistanceMatrix {
    /// Validate a row-major `n x n` matrix.
    pub fn new(labels: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if data.len() != n * n {
            return Err(Error::InvalidDistanceMatrix(format!(
                "{} labels but {} cells",
                n,
                data.len()
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::InvalidDistanceMatrix(format!(
                    "non-zero diagonal at `{}`",
                    labels[i]
                )));
            }
            for j in 0..n {
                let d = data[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidDistanceMatrix(format!(
                        "invalid distance {d} between `{}` and `{}`",
                        labels[i], labels[j]
                    )));
                }
                if (d - data[j * n + i]).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::InvalidDistanceMatrix(format!(
                        "asymmetric entries between `{}` and `{}`",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(DistanceMatrix { n, data, labels })
    }

    /// Fill from a pairwise function evaluated on the upper triangle only.
    pub fn from_fn<F>(labels: Vec<String>, mut dist: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<f64>,
    {
        let n = labels.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = dist(i, j)?;
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self::new(labels, data)
    }

    /// Build from precomputed upper-triangle rows: `rows[i][k]` is `d(i, i + 1 + k)`.
    pub fn from_upper_rows(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            debug_assert_eq!(row.len(), n - i - 1);
            for (k, d) in row.into_iter().enumerate() {
                let j = i + 1 + k;
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self::new(labels, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Matrix restricted to the given rows/columns, in the given order.
    pub fn select(&self, indices: &[usize]) -> DistanceMatrix {
        let m = indices.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in indices {
            for &j in indices {
                data.push(self.get(i, j));
            }
        }
        DistanceMatrix {
            n: m,
            data,
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn validation() {
        assert!(DistanceMatrix::new(labels(2), vec![0.0, 1.0, 1.0, 0.0]).is_ok());
        assert!(DistanceMatrix::new(labels(2), vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(labels(2), vec![0.1, 1.0, 1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(labels(2), vec![0.0, -1.0, -1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(labels(2), vec![0.0, 1.0]).is_err());
        assert!(DistanceMatrix::new(labels(2), vec![0.0, 1.0, 1.0 + 1e-13, 0.0]).is_ok());
    }

    #[test]
    fn from_fn_and_select() {
        let m = DistanceMatrix::from_fn(labels(3), |i, j| Ok((j - i) as f64)).unwrap();
        assert_eq!(m.get(2, 0), 2.0);
        assert_eq!(m.row(1), &[1.0, 0.0, 1.0]);
        let s = m.select(&[2, 0]);
        assert_eq!(s.labels(), &["c2".to_string(), "c0".to_string()]);
        assert_eq!(s.get(0, 1), 2.0);
        let u = DistanceMatrix::from_upper_rows(labels(3), vec![vec![1.0, 2.0], vec![1.0], vec![]]).unwrap();
        assert_eq!(u, m);
    }
}
