//! Self-representation matrix `C` and the affinity `W = |C| + |Cᵀ|`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solvers::{solve_problem, Dictionary, SelfRepMethod, SolveStats, SolverConfig};

/// `N × N` self-representation matrix. Column `j` holds the coefficients
/// expressing patch `j` through the others; the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefMatrix {
    c: DMatrix<f64>,
}

impl CoefMatrix {
    /// Wraps a square matrix, rejecting a nonzero diagonal.
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::Dimension(format!(
                "coefficient matrix is {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if let Some(i) = (0..c.nrows()).find(|&i| c[(i, i)] != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coefficient matrix has nonzero diagonal at {i}"
            )));
        }
        Ok(CoefMatrix { c })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.c.ncols() == 0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.c
    }
}

/// Result of [`build_coef_matrix`]: the matrix plus per-patch diagnostics.
#[derive(Debug, Clone)]
pub struct SelfRepresentation {
    pub coefs: CoefMatrix,
    pub stats: Vec<SolveStats>,
}

/// Solves the self-representation problem of every column of `patches`
/// against the remaining columns.
///
/// The first failing patch (lowest index) aborts the build and is named in
/// the error.
pub fn build_coef_matrix(
    patches: &DMatrix<f64>,
    method: SelfRepMethod,
    cfg: &SolverConfig,
) -> Result<SelfRepresentation> {
    cfg.validate()?;
    let dict = Dictionary::new(patches.clone());
    let n = dict.len();
    let columns: Vec<Result<_>> = (0..n)
        .into_par_iter()
        .map(|i| solve_problem(method, &dict.self_problem(i), cfg))
        .collect();
    let mut c = DMatrix::zeros(n, n);
    let mut stats = Vec::with_capacity(n);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col.map_err(|e| Error::Patch {
            patch: j,
            source: Box::new(e),
        })?;
        c.set_column(j, &nalgebra::DVector::from_vec(col.values));
        stats.push(col.stats);
    }
    Ok(SelfRepresentation {
        coefs: CoefMatrix { c },
        stats,
    })
}

/// Symmetric non-negative affinity with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    w: DMatrix<f64>,
}

impl AffinityMatrix {
    /// Validates a user-supplied affinity: square, exactly symmetric,
    /// non-negative, finite, zero diagonal.
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension(format!(
                "affinity is {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let n = w.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "affinity entry ({i}, {j}) = {v}"
                    )));
                }
                if (i == j && v != 0.0) || v != w[(j, i)] {
                    return Err(Error::InvalidParameter(format!(
                        "affinity not symmetric with zero diagonal at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(AffinityMatrix { w })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }

    /// Row sums.
    pub fn degrees(&self) -> Vec<f64> {
        self.w.column_sum().iter().copied().collect()
    }

    /// Same graph with rows and columns reordered: new node `i` is old node
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidParameter("not a permutation".into()));
        }
        Ok(AffinityMatrix {
            w: DMatrix::from_fn(n, n, |i, j| self.w[(perm[i], perm[j])]),
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter("scale must be positive".into()));
        }
        Ok(AffinityMatrix {
            w: &self.w * factor,
        })
    }
}

/// `W = |C| + |Cᵀ|`.
pub fn build_affinity(c: &CoefMatrix) -> AffinityMatrix {
    let c = &c.c;
    let n = c.nrows();
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = c[(i, j)].abs() + c[(j, i)].abs();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    AffinityMatrix { w }
}
