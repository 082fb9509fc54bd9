//! Non-negative constrained lasso `min ‖Xc − x̄‖₂ s.t. c ⪰ 0, 1ᵀc ≤ τ`.
//!
//! Its KKT system is that of the non-negative lasso with penalty equal to
//! the budget multiplier, so the solution is the point of the non-negative
//! homotopy path where `1ᵀc` reaches `τ` (or the path's end when the
//! non-negative least-squares fit already fits in the budget).

use super::homotopy::{follow, Stop};
use super::{GramProblem, SolveStats, SolverConfig};
use crate::error::{Error, Result};

pub(super) fn solve(
    p: &GramProblem<'_>,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let point = follow(p, true, Stop::Budget(tau), cfg.max_iter)?;
    let kkt_tol = cfg.tol * p.max_correlation().max(1.0);
    if point.kkt > kkt_tol {
        return Err(Error::NonConvergence {
            solver: "nnc lasso",
            iterations: point.steps,
            gap: point.kkt,
        });
    }
    Ok((
        point.c,
        SolveStats {
            iterations: point.steps,
            gap: point.kkt,
            objective: point.residual,
            residual: point.residual,
            alpha: Some(point.lambda),
        },
    ))
}

/// Frank–Wolfe gap `gᵀc − τ·min(0, minⱼ gⱼ) ≥ f(c) − f*` for
/// `f = ½‖Xc − x̄‖²` over `{c ⪰ 0, 1ᵀc ≤ τ}`.
pub fn frank_wolfe_gap(p: &GramProblem<'_>, c: &[f64], tau: f64) -> f64 {
    let grad = p.gradient(c);
    let mut inner = 0.0;
    let mut min_grad = 0.0f64;
    for j in p.free() {
        let g = grad[j];
        inner += g * c[j];
        min_grad = min_grad.min(g);
    }
    (inner - tau * min_grad).max(0.0)
}
