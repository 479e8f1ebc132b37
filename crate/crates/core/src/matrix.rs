//! Small dense matrices of scalar expressions, inverted through the adjugate.

use crate::expr::ScalarExpr;

/// Square matrix of expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    n: usize,
    entries: Vec<ScalarExpr>,
}

impl ExprMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> ScalarExpr) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        Self { n, entries }
    }

    pub fn from_rows(rows: Vec<Vec<ScalarExpr>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| ScalarExpr::constant(if i == j { 1.0 } else { 0.0 }))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarExpr {
        &self.entries[i * self.n + j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_fn(self.n, |i, j| {
            (0..self.n).fold(ScalarExpr::zero(), |acc, k| {
                acc.add(&self.get(i, k).mul(other.get(k, j)))
            })
        })
    }

    pub fn map(&self, f: impl Fn(&ScalarExpr) -> ScalarExpr) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, crate::expr::EvalError> {
        self.entries.iter().map(|e| e.eval(point)).collect()
    }

    /// Determinant by cofactor expansion along the first row; structural
    /// zeros are skipped so sparse matrices stay cheap.
    pub fn det(&self) -> ScalarExpr {
        let rows: Vec<usize> = (0..self.n).collect();
        let cols: Vec<usize> = (0..self.n).collect();
        self.minor_det(&rows, &cols)
    }

    fn minor_det(&self, rows: &[usize], cols: &[usize]) -> ScalarExpr {
        match rows.len() {
            0 => ScalarExpr::one(),
            1 => self.get(rows[0], cols[0]).clone(),
            _ => {
                let r = rows[0];
                let sub_rows = &rows[1..];
                let mut acc = ScalarExpr::zero();
                for (pos, &c) in cols.iter().enumerate() {
                    let entry = self.get(r, c);
                    if entry.is_zero() {
                        continue;
                    }
                    let sub_cols: Vec<usize> = cols.iter().copied().filter(|&k| k != c).collect();
                    let term = entry.mul(&self.minor_det(sub_rows, &sub_cols));
                    acc = if pos % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
                }
                acc
            }
        }
    }

    /// Classical adjugate: `adj(A)[i][j] = (-1)^(i+j) det(A without row j, col i)`.
    pub fn adjugate(&self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| {
            let rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
            let cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
            let minor = self.minor_det(&rows, &cols);
            if (i + j) % 2 == 0 {
                minor
            } else {
                minor.neg()
            }
        })
    }

    /// `adj(A) / det(A)` together with the determinant expression.
    pub fn inverse(&self) -> (Self, ScalarExpr) {
        let det = self.det();
        let inv = self.adjugate().map(|e| e.div(&det));
        (inv, det)
    }
}
