//! Growable Cholesky factor of the active-set Gram block `G_AA`.

#[derive(Debug, Clone, Default)]
pub(super) struct ActiveCholesky {
    /// Row-major lower triangle; row `i` holds entries `0..=i`.
    rows: Vec<Vec<f64>>,
}

impl ActiveCholesky {
    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Appends a column with cross terms `cross[k] = G(new, A[k])` and
    /// diagonal `diag`. Returns `false` (leaving the factor unchanged) when
    /// the new column is numerically dependent on the current ones.
    pub fn push(&mut self, cross: &[f64], diag: f64) -> bool {
        let m = self.rows.len();
        debug_assert_eq!(cross.len(), m);
        let mut row = Vec::with_capacity(m + 1);
        for i in 0..m {
            let s: f64 = (0..i).map(|k| self.rows[i][k] * row[k]).sum();
            row.push((cross[i] - s) / self.rows[i][i]);
        }
        let pivot = diag - row.iter().map(|v| v * v).sum::<f64>();
        // pivot = diag − crossᵀz with G_AA z = cross; its rounding error
        // grows with the size of that expansion
        let z = self.back_substitute(row.clone());
        let scale: f64 = diag.abs() + z.iter().zip(cross).map(|(a, b)| (a * b).abs()).sum::<f64>();
        if !(pivot > 1e-10 * scale.max(f64::MIN_POSITIVE)) {
            return false;
        }
        row.push(pivot.sqrt());
        self.rows.push(row);
        true
    }

    /// Solves `G_AA x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.rows.len();
        let mut y = rhs.to_vec();
        for i in 0..m {
            let s: f64 = (0..i).map(|k| self.rows[i][k] * y[k]).sum();
            y[i] = (y[i] - s) / self.rows[i][i];
        }
        self.back_substitute(y)
    }

    /// Solves `Lᵀx = y`.
    fn back_substitute(&self, mut y: Vec<f64>) -> Vec<f64> {
        let m = y.len();
        for i in (0..m).rev() {
            let s: f64 = (i + 1..m).map(|k| self.rows[k][i] * y[k]).sum();
            y[i] = (y[i] - s) / self.rows[i][i];
        }
        y
    }

    /// Rebuilds the factor for a Gram block given by `entry(i, j)`. Returns
    /// the positions that had to be dropped as dependent.
    pub fn rebuild(m: usize, entry: impl Fn(usize, usize) -> f64) -> (Self, Vec<usize>) {
        let mut chol = ActiveCholesky::default();
        let mut kept = Vec::with_capacity(m);
        let mut dropped = Vec::new();
        for j in 0..m {
            let cross: Vec<f64> = kept.iter().map(|&k| entry(k, j)).collect();
            if chol.push(&cross, entry(j, j)) {
                kept.push(j);
            } else {
                dropped.push(j);
            }
        }
        (chol, dropped)
    }
}
