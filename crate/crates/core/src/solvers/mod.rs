//! Sparse self-representation solvers.
//!
//! Three ways of writing a patch `x̄` as a combination `Xc` of the other
//! patches:
//!
//! * **BPDN**: `min ‖c‖₁ s.t. ‖Xc − x̄‖₂ ≤ σ` ([`solve_bpdn`]).
//! * **NNC lasso**: `min ‖Xc − x̄‖₂ s.t. c ⪰ 0, ‖c‖₁ ≤ τ`
//!   ([`solve_nnc_lasso`]). With `τ = 1` and `x̄` inside an affine subspace
//!   spanned by its neighbours the optimum satisfies `1ᵀc = 1`.
//! * **NN lasso**: `min ½‖Xc − x̄‖₂² + α‖c‖₁ s.t. c ⪰ 0`
//!   ([`solve_nn_lasso`], [`solve_nn_lasso_gridsearch`]).
//!
//! All solvers work on the Gram form `½cᵀGc − bᵀc + ½‖x̄‖²` with
//! `G = XᵀX` and `b = Xᵀx̄`. A [`Dictionary`] computes `G` once so that the
//! `N` per-patch problems of a self-representation share it; the target
//! column is then excluded by pinning its coefficient to zero.

mod bpdn;
mod chol;
mod homotopy;
mod nn_lasso;
mod nnc;
mod projection;

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
pub use nnc::frank_wolfe_gap;

pub use projection::{
    project_l1_ball_in_place, project_l2_ball, project_simplex_cap, project_simplex_cap_in_place,
};

/// Parameters shared by the three solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Residual bound σ of the BPDN constraint.
    pub sigma_fit: f64,
    /// ℓ₁ budget τ of the NNC lasso.
    pub tau: f64,
    /// Candidate ℓ₁ weights for the NN lasso grid search, ascending.
    pub alpha_grid: Vec<f64>,
    pub max_iter: usize,
    /// Relative optimality tolerance.
    pub tol: f64,
    /// Algorithm used for the NN lasso.
    pub nn_engine: NnEngine,
}

/// Algorithm behind [`solve_nn_lasso`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnEngine {
    /// Exact non-negative lasso homotopy stopped at `λ = α`.
    #[default]
    Homotopy,
    /// Cyclic coordinate descent with active-set polishing.
    CoordinateDescent,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma_fit: 0.0,
            tau: 1.0,
            alpha_grid: vec![0.001, 0.01, 0.1, 1.0, 10.0],
            max_iter: 2000,
            tol: 1e-6,
            nn_engine: NnEngine::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_fit >= 0.0) {
            return Err(Error::InvalidParameter("sigma_fit must be >= 0".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter("tau must be > 0".into()));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::InvalidParameter("alpha grid is empty".into()));
        }
        if self.alpha_grid.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidParameter(
                "alpha grid must be positive".into(),
            ));
        }
        if self.alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "alpha grid must be strictly ascending".into(),
            ));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(
                "max_iter and tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Which self-representation problem to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelfRepMethod {
    Bpdn,
    Nnc,
    Nn,
}

impl SelfRepMethod {
    pub fn name(self) -> &'static str {
        match self {
            SelfRepMethod::Bpdn => "bpdn",
            SelfRepMethod::Nnc => "nnc",
            SelfRepMethod::Nn => "nn",
        }
    }

    pub fn is_nonnegative(self) -> bool {
        !matches!(self, SelfRepMethod::Bpdn)
    }
}

impl std::str::FromStr for SelfRepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpdn" => Ok(SelfRepMethod::Bpdn),
            "nnc" | "nnc-lasso" => Ok(SelfRepMethod::Nnc),
            "nn" | "nn-lasso" => Ok(SelfRepMethod::Nn),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Diagnostics returned with every solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Optimality gap certificate at return (duality or KKT residual,
    /// depending on the solver).
    pub gap: f64,
    /// Objective value at return.
    pub objective: f64,
    /// Residual norm `‖Xc − x̄‖₂`.
    pub residual: f64,
    /// ℓ₁ weight used (NN lasso only).
    pub alpha: Option<f64>,
}

/// Self-representation coefficients of one patch.
///
/// `values` is indexed by dictionary column. When the dictionary contains the
/// target patch itself (`target = Some(i)`), `values[i]` is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVector {
    pub values: Vec<f64>,
    pub target: Option<usize>,
    pub stats: SolveStats,
}

impl CoefVector {
    /// Coefficients over the other patches only, length `N − 1` when a target
    /// is set.
    pub fn reduced(&self) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != self.target)
            .map(|(_, &v)| v)
            .collect()
    }

    /// Inserts a zero at `target` into coefficients computed on a dictionary
    /// that excluded it.
    pub fn embed(mut self, target: usize) -> Self {
        assert!(self.target.is_none(), "coefficients are already embedded");
        self.values.insert(target, 0.0);
        self.target = Some(target);
        self
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// A dictionary `X` (columns are atoms) together with its Gram matrix.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>) -> Self {
        let gram = atoms.tr_mul(&atoms);
        Dictionary { atoms, gram }
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    /// Problem of representing an external vector with every atom.
    pub fn problem(&self, target: &DVector<f64>) -> Result<GramProblem<'_>> {
        if target.len() != self.atoms.nrows() {
            return Err(Error::Dimension(format!(
                "target has length {}, atoms have length {}",
                target.len(),
                self.atoms.nrows()
            )));
        }
        let b = self.atoms.tr_mul(target);
        Ok(GramProblem {
            gram: &self.gram,
            b: Cow::Owned(b.as_slice().to_vec()),
            target_sq: target.norm_squared(),
            excluded: None,
            rank_bound: self.atoms.nrows().min(self.atoms.ncols()),
        })
    }

    /// Problem of representing atom `index` with the remaining atoms.
    pub fn self_problem(&self, index: usize) -> GramProblem<'_> {
        let n = self.len();
        let col = &self.gram.as_slice()[index * n..(index + 1) * n];
        GramProblem {
            gram: &self.gram,
            b: Cow::Borrowed(col),
            target_sq: self.gram[(index, index)],
            excluded: Some(index),
            rank_bound: self.atoms.nrows().min(self.atoms.ncols()),
        }
    }
}

/// Quadratic `½cᵀGc − bᵀc + ½‖x̄‖²` over the columns of a shared Gram matrix,
/// with an optional column pinned at zero.
#[derive(Debug, Clone)]
pub struct GramProblem<'a> {
    gram: &'a DMatrix<f64>,
    b: Cow<'a, [f64]>,
    target_sq: f64,
    excluded: Option<usize>,
    /// Upper bound on the rank of `G`.
    rank_bound: usize,
}

impl GramProblem<'_> {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn excluded(&self) -> Option<usize> {
        self.excluded
    }

    /// `‖x̄‖₂`.
    pub fn target_norm(&self) -> f64 {
        self.target_sq.sqrt()
    }

    /// `max_j |Xⱼᵀx̄|` over free columns.
    pub fn max_correlation(&self) -> f64 {
        self.free().map(|j| self.b[j].abs()).fold(0.0, f64::max)
    }

    /// `½‖Xc − x̄‖₂²`.
    pub fn value(&self, c: &[f64]) -> f64 {
        let mut q = vec![0.0; self.len()];
        self.gram_times(c, &mut q);
        self.half_residual_sq(c, &q)
    }

    /// `Xᵀ(Xc − x̄) = Gc − Xᵀx̄`.
    pub fn gradient(&self, c: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.len()];
        self.gram_times(c, &mut q);
        for (qi, bi) in q.iter_mut().zip(self.b.iter()) {
            *qi -= bi;
        }
        q
    }

    fn free(&self) -> impl Iterator<Item = usize> + '_ {
        let excluded = self.excluded;
        (0..self.len()).filter(move |&j| Some(j) != excluded)
    }

    #[inline]
    fn column(&self, j: usize) -> &[f64] {
        let n = self.len();
        &self.gram.as_slice()[j * n..(j + 1) * n]
    }

    #[inline]
    fn diag(&self, j: usize) -> f64 {
        self.gram[(j, j)]
    }

    /// `q = Gc`, exploiting sparsity of `c`.
    fn gram_times(&self, c: &[f64], q: &mut [f64]) {
        q.fill(0.0);
        for (k, &ck) in c.iter().enumerate() {
            if ck != 0.0 {
                for (qi, gi) in q.iter_mut().zip(self.column(k)) {
                    *qi += ck * gi;
                }
            }
        }
    }

    /// `½‖Xc − x̄‖²` from `c` and `q = Gc`.
    fn half_residual_sq(&self, c: &[f64], q: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for ((&ci, &qi), &bi) in c.iter().zip(q).zip(self.b.iter()) {
            if ci != 0.0 {
                quad += ci * qi;
                lin += ci * bi;
            }
        }
        (0.5 * quad - lin + 0.5 * self.target_sq).max(0.0)
    }

    fn pin_excluded(&self, v: &mut [f64]) {
        if let Some(i) = self.excluded {
            v[i] = 0.0;
        }
    }
}

fn check_dictionary(x: &DMatrix<f64>, xbar: &DVector<f64>) -> Result<()> {
    if x.nrows() != xbar.len() {
        return Err(Error::Dimension(format!(
            "dictionary rows {} != target length {}",
            x.nrows(),
            xbar.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::Dimension("empty dictionary".into()));
    }
    Ok(())
}

/// BPDN on an explicit dictionary whose columns exclude the target.
pub fn solve_bpdn(x: &DMatrix<f64>, xbar: &DVector<f64>, cfg: &SolverConfig) -> Result<CoefVector> {
    check_dictionary(x, xbar)?;
    cfg.validate()?;
    let dict = Dictionary::new(x.clone());
    solve_bpdn_problem(&dict.problem(xbar)?, cfg)
}

/// NNC lasso on an explicit dictionary whose columns exclude the target.
pub fn solve_nnc_lasso(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<CoefVector> {
    check_dictionary(x, xbar)?;
    cfg.validate()?;
    let dict = Dictionary::new(x.clone());
    solve_nnc_problem(&dict.problem(xbar)?, cfg)
}

/// NN lasso with a single weight `alpha` on an explicit dictionary.
pub fn solve_nn_lasso(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<CoefVector> {
    check_dictionary(x, xbar)?;
    cfg.validate()?;
    let dict = Dictionary::new(x.clone());
    solve_nn_problem(&dict.problem(xbar)?, alpha, cfg)
}

/// NN lasso over `cfg.alpha_grid`, keeping the solution whose coefficient
/// sum is closest to one.
pub fn solve_nn_lasso_gridsearch(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<CoefVector> {
    check_dictionary(x, xbar)?;
    cfg.validate()?;
    let dict = Dictionary::new(x.clone());
    solve_nn_gridsearch_problem(&dict.problem(xbar)?, cfg)
}

pub fn solve_bpdn_problem(p: &GramProblem<'_>, cfg: &SolverConfig) -> Result<CoefVector> {
    let (values, stats) = bpdn::solve(p, cfg.sigma_fit, cfg)?;
    Ok(CoefVector {
        values,
        target: p.excluded,
        stats,
    })
}

pub fn solve_nnc_problem(p: &GramProblem<'_>, cfg: &SolverConfig) -> Result<CoefVector> {
    let (values, stats) = nnc::solve(p, cfg.tau, cfg)?;
    Ok(CoefVector {
        values,
        target: p.excluded,
        stats,
    })
}

pub fn solve_nn_problem(p: &GramProblem<'_>, alpha: f64, cfg: &SolverConfig) -> Result<CoefVector> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter("alpha must be > 0".into()));
    }
    let (values, stats) = nn_lasso::solve(p, alpha, None, cfg)?;
    Ok(CoefVector {
        values,
        target: p.excluded,
        stats,
    })
}

pub fn solve_nn_gridsearch_problem(p: &GramProblem<'_>, cfg: &SolverConfig) -> Result<CoefVector> {
    let (values, stats) = nn_lasso::gridsearch(p, cfg)?;
    Ok(CoefVector {
        values,
        target: p.excluded,
        stats,
    })
}

/// Dispatches to the solver for `method`.
pub fn solve_problem(
    method: SelfRepMethod,
    p: &GramProblem<'_>,
    cfg: &SolverConfig,
) -> Result<CoefVector> {
    match method {
        SelfRepMethod::Bpdn => solve_bpdn_problem(p, cfg),
        SelfRepMethod::Nnc => solve_nnc_problem(p, cfg),
        SelfRepMethod::Nn => solve_nn_gridsearch_problem(p, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            alpha_grid: vec![1.0, 0.1],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            tau: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            sigma_fit: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn embedding_puts_zero_on_diagonal() {
        let c = CoefVector {
            values: vec![0.5, 0.25],
            target: None,
            stats: SolveStats::default(),
        }
        .embed(1);
        assert_eq!(c.values, vec![0.5, 0.0, 0.25]);
        assert_eq!(c.reduced(), vec![0.5, 0.25]);
    }

    #[test]
    fn self_problem_excludes_target() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let dict = Dictionary::new(x);
        let p = dict.self_problem(2);
        assert_eq!(p.excluded(), Some(2));
        assert_eq!(p.target_norm(), 2f64.sqrt());
        assert_eq!(p.max_correlation(), 1.0);
    }
}
