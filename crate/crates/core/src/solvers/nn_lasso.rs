//! Non-negative lasso `min ½‖Xc − x̄‖² + α‖c‖₁ s.t. c ⪰ 0`.
//!
//! Two engines give the same optimum: the non-negative homotopy stopped at
//! `λ = α`, and cyclic coordinate descent. The latter is slow on patch
//! dictionaries, whose columns are all strongly correlated through their
//! common positive mean, but serves as an independent cross-check.
//!
//! Coordinate descent
//! works in covariance mode: `q = Gc` is kept up to date so that the
//! correlation `Xⱼᵀrⱼ = bⱼ − qⱼ + Gⱼⱼcⱼ` of coordinate `j` costs O(1), and
//! only a coefficient change costs a Gram column update. Sweeps alternate
//! between the active set and the full set until a full sweep finds no KKT
//! violation above `tol · max(1, ‖Xᵀx̄‖∞)`.

use super::chol::ActiveCholesky;
use super::homotopy::{follow_all, PathPoint, Stop};
use super::{GramProblem, NnEngine, SolveStats, SolverConfig};
use crate::error::{Error, Result};

/// Active-set sweeps between direct solves on the support.
const POLISH_EVERY: usize = 8;

pub(super) fn solve(
    p: &GramProblem<'_>,
    alpha: f64,
    warm: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    match cfg.nn_engine {
        NnEngine::Homotopy => by_homotopy(p, alpha, cfg),
        NnEngine::CoordinateDescent => coordinate_descent(p, alpha, warm, cfg),
    }
}

fn by_homotopy(
    p: &GramProblem<'_>,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let point = follow_all(p, true, &[Stop::Penalty(alpha)], cfg.max_iter)
        .pop()
        .expect("one stop gives one point")?;
    certify(p, alpha, point, cfg)
}

fn certify(
    p: &GramProblem<'_>,
    alpha: f64,
    point: PathPoint,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let kkt_tol = cfg.tol * p.max_correlation().max(1.0);
    if point.kkt > kkt_tol {
        return Err(Error::NonConvergence {
            solver: "nn lasso",
            iterations: point.steps,
            gap: point.kkt,
        });
    }
    let objective = 0.5 * point.residual * point.residual + alpha * point.c.iter().sum::<f64>();
    Ok((
        point.c,
        SolveStats {
            iterations: point.steps,
            gap: point.kkt,
            objective,
            residual: point.residual,
            alpha: Some(alpha),
        },
    ))
}

fn coordinate_descent(
    p: &GramProblem<'_>,
    alpha: f64,
    warm: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = p.len();
    let kkt_tol = cfg.tol * p.max_correlation().max(1.0);
    let mut c = match warm {
        Some(w) => w.to_vec(),
        None => vec![0.0; n],
    };
    p.pin_excluded(&mut c);
    let mut q = vec![0.0; n];
    p.gram_times(&c, &mut q);

    let usable: Vec<bool> = (0..n)
        .map(|j| Some(j) != p.excluded && p.diag(j) > 0.0)
        .collect();
    let mut objective = lasso_objective(p, &c, &q, alpha);

    let mut sweeps = 0;
    let mut active_sweeps = 0;
    let mut full_sweep = true;
    loop {
        if sweeps >= cfg.max_iter {
            return Err(Error::NonConvergence {
                solver: "nn lasso",
                iterations: sweeps,
                gap: kkt_violation(p, &c, &q, alpha, &usable, false),
            });
        }
        sweeps += 1;
        if !full_sweep {
            active_sweeps += 1;
        }
        for j in 0..n {
            if !usable[j] || (!full_sweep && c[j] == 0.0) {
                continue;
            }
            let gjj = p.diag(j);
            let corr = p.b[j] - q[j] + gjj * c[j];
            let updated = ((corr - alpha) / gjj).max(0.0);
            let delta = updated - c[j];
            if delta != 0.0 {
                for (qi, gi) in q.iter_mut().zip(p.column(j)) {
                    *qi += delta * gi;
                }
                c[j] = updated;
            }
        }
        if cfg!(debug_assertions) {
            let next = lasso_objective(p, &c, &q, alpha);
            debug_assert!(
                next <= objective + 1e-9 * objective.abs().max(1.0),
                "coordinate descent increased the objective: {objective} -> {next}"
            );
            objective = next;
        }
        if full_sweep {
            let violation = kkt_violation(p, &c, &q, alpha, &usable, false);
            if violation <= kkt_tol {
                let objective = lasso_objective(p, &c, &q, alpha);
                let residual = (2.0 * p.half_residual_sq(&c, &q)).sqrt();
                return Ok((
                    c,
                    SolveStats {
                        iterations: sweeps,
                        gap: violation,
                        objective,
                        residual,
                        alpha: Some(alpha),
                    },
                ));
            }
            full_sweep = false;
            active_sweeps = 0;
        } else if kkt_violation(p, &c, &q, alpha, &usable, true) <= 0.5 * kkt_tol
            || active_sweeps >= POLISH_EVERY
        {
            polish(p, alpha, &mut c, &mut q);
            if cfg!(debug_assertions) {
                objective = lasso_objective(p, &c, &q, alpha);
            }
            full_sweep = true;
        }
    }
}

/// Moves towards the exact minimizer on the current support, shrinking the
/// support whenever a coefficient reaches zero first. The result is kept only
/// if it does not increase the objective.
fn polish(p: &GramProblem<'_>, alpha: f64, c: &mut [f64], q: &mut [f64]) {
    let mut candidate = c.to_vec();
    loop {
        let support: Vec<usize> = (0..c.len()).filter(|&j| candidate[j] > 0.0).collect();
        if support.is_empty() {
            break;
        }
        if support.len() > p.rank_bound {
            return;
        }
        let (chol, dropped) =
            ActiveCholesky::rebuild(support.len(), |a, b| p.column(support[b])[support[a]]);
        let kept: Vec<usize> = support
            .iter()
            .enumerate()
            .filter(|(pos, _)| !dropped.contains(pos))
            .map(|(_, &j)| j)
            .collect();
        for (pos, &j) in support.iter().enumerate() {
            if dropped.contains(&pos) {
                candidate[j] = 0.0;
            }
        }
        let rhs: Vec<f64> = kept.iter().map(|&j| p.b[j] - alpha).collect();
        let z = chol.solve(&rhs);
        // largest step towards z that keeps every coefficient non-negative
        let mut theta = 1.0f64;
        for (&j, &zj) in kept.iter().zip(&z) {
            if zj <= 0.0 {
                theta = theta.min(candidate[j] / (candidate[j] - zj));
            }
        }
        for (&j, &zj) in kept.iter().zip(&z) {
            let v = candidate[j] + theta * (zj - candidate[j]);
            candidate[j] = if zj <= 0.0 && candidate[j] / (candidate[j] - zj) <= theta {
                0.0
            } else {
                v.max(0.0)
            };
        }
        if theta >= 1.0 {
            break;
        }
    }
    let mut q_candidate = vec![0.0; c.len()];
    p.gram_times(&candidate, &mut q_candidate);
    if lasso_objective(p, &candidate, &q_candidate, alpha) <= lasso_objective(p, c, q, alpha) {
        c.copy_from_slice(&candidate);
        q.copy_from_slice(&q_candidate);
    }
}

fn lasso_objective(p: &GramProblem<'_>, c: &[f64], q: &[f64], alpha: f64) -> f64 {
    p.half_residual_sq(c, q) + alpha * c.iter().sum::<f64>()
}

/// Largest KKT violation over usable coordinates, or over the active ones
/// only.
fn kkt_violation(
    p: &GramProblem<'_>,
    c: &[f64],
    q: &[f64],
    alpha: f64,
    usable: &[bool],
    active_only: bool,
) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..c.len() {
        if !usable[j] || (active_only && c[j] == 0.0) {
            continue;
        }
        let corr = p.b[j] - q[j];
        let v = if c[j] > 0.0 {
            (corr - alpha).abs()
        } else {
            (corr - alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Runs the grid from the largest weight down, warm-starting each solve.
/// Ties in `|1ᵀc − 1|` go to the larger weight.
pub(super) fn gridsearch(
    p: &GramProblem<'_>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let mut alphas = cfg.alpha_grid.clone();
    alphas.sort_by(|a, b| b.total_cmp(a));
    // one path visits every grid value
    let mut along_path = match cfg.nn_engine {
        NnEngine::Homotopy => {
            let stops: Vec<Stop> = alphas.iter().map(|&a| Stop::Penalty(a)).collect();
            Some(follow_all(p, true, &stops, cfg.max_iter).into_iter())
        }
        NnEngine::CoordinateDescent => None,
    };
    let mut best: Option<(f64, Vec<f64>, SolveStats)> = None;
    let mut failures = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for &alpha in &alphas {
        let attempt = match along_path.as_mut() {
            Some(points) => points
                .next()
                .expect("one point per stop")
                .and_then(|point| certify(p, alpha, point, cfg)),
            None => solve(p, alpha, warm.as_deref(), cfg),
        };
        match attempt {
            Ok((c, stats)) => {
                let gap = (c.iter().sum::<f64>() - 1.0).abs();
                // strictly better required: earlier entries have larger alpha
                if best.as_ref().is_none_or(|(g, _, _)| gap < *g) {
                    best = Some((gap, c.clone(), stats));
                }
                warm = Some(c);
            }
            Err(e) => failures.push(format!("alpha={alpha}: {e}")),
        }
    }
    match best {
        Some((_, c, stats)) => Ok((c, stats)),
        None => Err(Error::GridSearch(failures.join("; "))),
    }
}
