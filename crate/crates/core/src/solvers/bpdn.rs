//! Basis pursuit denoising `min ‖c‖₁ s.t. ‖Xc − x̄‖₂ ≤ σ`.
//!
//! Root-finding on the Pareto curve `φ(t) = min {‖Xc − x̄‖₂ : ‖c‖₁ ≤ t}`:
//! the lasso homotopy traces that curve exactly, one linear segment of `c`
//! at a time, and the root `φ(t) = σ` is located in closed form on the
//! segment where the residual crosses `σ`. A bound below the least-squares
//! floor returns the least-squares end of the path.

use super::homotopy::{follow, Stop};
use super::{GramProblem, SolveStats, SolverConfig};
use crate::error::{Error, Result};

pub(super) fn solve(
    p: &GramProblem<'_>,
    sigma: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let point = follow(p, false, Stop::Residual(sigma), cfg.max_iter)?;
    let stationarity = stationarity(p, &point.c);
    if stationarity > cfg.tol * p.max_correlation().max(1.0) {
        return Err(Error::NonConvergence {
            solver: "bpdn",
            iterations: point.steps,
            gap: stationarity,
        });
    }
    Ok((
        point.c.clone(),
        SolveStats {
            iterations: point.steps,
            gap: stationarity,
            objective: point.c.iter().map(|v| v.abs()).sum(),
            residual: point.residual,
            alpha: Some(point.lambda),
        },
    ))
}

/// Largest deviation from `Xᵀr ∈ ‖Xᵀr‖∞·∂‖c‖₁` on the support of `c`.
fn stationarity(p: &GramProblem<'_>, c: &[f64]) -> f64 {
    let mut q = vec![0.0; c.len()];
    p.gram_times(c, &mut q);
    let corr: Vec<f64> = (0..c.len())
        .map(|j| {
            if Some(j) == p.excluded {
                0.0
            } else {
                p.b[j] - q[j]
            }
        })
        .collect();
    let nu = corr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    c.iter()
        .zip(&corr)
        .filter(|(cj, _)| **cj != 0.0)
        .map(|(cj, r)| (r - nu * cj.signum()).abs())
        .fold(0.0f64, f64::max)
}
