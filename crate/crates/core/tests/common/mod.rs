//! Synthetic data generators and brute-force oracles shared by the
//! integration tests. Nothing here calls into the solver or clustering code
//! it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `d × r` matrix with orthonormal columns.
pub fn orthonormal_basis(rng: &mut ChaCha8Rng, d: usize, r: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, d, r);
    g.qr().q().columns(0, r).into_owned()
}

/// Points drawn from a union of affine subspaces `{μₖ + Uₖw}`.
pub struct AffineUnion {
    /// One point per column.
    pub points: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub means: Vec<DVector<f64>>,
    pub bases: Vec<DMatrix<f64>>,
}

/// `per` points on each subspace of dimension `dims[k]` in `ℝ^ambient`.
/// Coordinates `w` are standard normal. Means are independent
/// `N(0, mean_scale² I)` draws, or one shared draw when `shared_mean` is set.
pub fn affine_union(
    seed: u64,
    ambient: usize,
    dims: &[usize],
    per: usize,
    mean_scale: f64,
    shared_mean: bool,
) -> AffineUnion {
    let mut rng = rng(seed);
    let common = gaussian_vector(&mut rng, ambient) * mean_scale;
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    let mut means = Vec::new();
    let mut bases = Vec::new();
    for (k, &r) in dims.iter().enumerate() {
        let mean = if shared_mean {
            common.clone()
        } else {
            gaussian_vector(&mut rng, ambient) * mean_scale
        };
        let basis = orthonormal_basis(&mut rng, ambient, r);
        for _ in 0..per {
            let w = gaussian_vector(&mut rng, r);
            cols.push(&mean + &basis * w);
            labels.push(k);
        }
        means.push(mean);
        bases.push(basis);
    }
    AffineUnion {
        points: DMatrix::from_columns(&cols),
        labels,
        means,
        bases,
    }
}

/// Random dictionary with unit-norm columns.
pub fn unit_dictionary(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
    let mut x = gaussian_matrix(rng, d, n);
    for mut c in x.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    x
}

/// Exhaustive active-set solution of `min ½‖u − v‖²` over
/// `{u ⪰ 0, 1ᵀu ≤ τ}`.
///
/// For every support set `S`, try the two KKT systems (sum constraint slack:
/// `u_S = v_S`; sum constraint tight: `u_S = v_S − θ` with `1ᵀu_S = τ`) and
/// keep the feasible candidate of least objective.
pub fn simplex_cap_active_set(v: &[f64], tau: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n <= 16, "enumeration is exponential");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let mut candidates = vec![vec![0.0; n]];
        for &i in &support {
            candidates[0][i] = v[i];
        }
        if !support.is_empty() {
            let sum: f64 = support.iter().map(|&i| v[i]).sum();
            let theta = (sum - tau) / support.len() as f64;
            let mut u = vec![0.0; n];
            for &i in &support {
                u[i] = v[i] - theta;
            }
            candidates.push(u);
        }
        for u in candidates {
            let feasible = u.iter().all(|&x| x >= -1e-12) && u.iter().sum::<f64>() <= tau + 1e-12;
            if !feasible {
                continue;
            }
            let obj: f64 = u.iter().zip(v).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, u));
            }
        }
    }
    best.expect("zero is always feasible").1
}

/// Largest eigenvalue of `XᵀX`.
fn lipschitz(x: &DMatrix<f64>) -> f64 {
    let g = x.transpose() * x;
    g.symmetric_eigenvalues().max().max(1e-12)
}

/// Accelerated proximal gradient on `½‖Xc − x̄‖² + h(c)` where `prox` is the
/// proximal map of `step · h`. Restarts momentum whenever the objective
/// rises (a plain proximal step is always taken). Stops once `certificate(c)`, an upper bound on the suboptimality
/// of `c`, is at most `tol`; panics if that never happens.
///
/// Every few hundred iterations `polish` may propose an exact point built
/// from the current support, which is accepted only if it is certified.
#[allow(clippy::too_many_arguments)]
pub fn fista(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    start: DVector<f64>,
    objective: impl Fn(&DVector<f64>) -> f64,
    prox: impl Fn(&mut DVector<f64>, f64),
    certificate: impl Fn(&DVector<f64>) -> f64,
    polish: impl Fn(&DVector<f64>) -> Vec<DVector<f64>>,
    tol: f64,
) -> DVector<f64> {
    const MAX_ITER: usize = 2_000_000;
    let step = 1.0 / lipschitz(x);
    let xt = x.transpose();
    let mut c = start;
    let mut y = c.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&c);
    for it in 0..MAX_ITER {
        if it % 20 == 0 && certificate(&c) <= tol {
            return c;
        }
        if it % 500 == 499 {
            if let Some(p) = polish(&c).into_iter().find(|p| certificate(p) <= tol) {
                return p;
            }
        }
        let grad = &xt * (x * &y - xbar);
        let mut next = &y - grad * step;
        prox(&mut next, step);
        let f = objective(&next);
        if f > f_prev && t > 1.0 {
            // momentum restart
            y = c.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &c) * ((t - 1.0) / t_next);
        c = next;
        t = t_next;
        f_prev = f;
    }
    panic!(
        "no certificate within {MAX_ITER} iterations: bound {:e}, wanted {tol:e}",
        certificate(&c)
    );
}

/// `Xᵀ(Xc − x̄)`.
fn gradient(x: &DMatrix<f64>, xbar: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
    x.transpose() * (x * c - xbar)
}

/// Candidate exact points from the supports of `c` at several cut-offs.
fn support_candidates(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    c: &DVector<f64>,
    alpha: f64,
    budget: Option<f64>,
) -> Vec<DVector<f64>> {
    [1e-10, 1e-8, 1e-6, 1e-4]
        .iter()
        .filter_map(|&cut| support_solve(x, xbar, c, cut, alpha, budget))
        .collect()
}

/// Stationary point of `½‖X_S c_S − x̄‖² + α·sᵀc_S` on the support `S`
/// (entries above `cut · max|c|`) and signs `s` of `c`, optionally under
/// `sᵀc_S = t`. Solved through the pseudo-inverse of the KKT matrix; `None`
/// if a sign flips.
fn support_solve(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    c: &DVector<f64>,
    cut: f64,
    alpha: f64,
    budget: Option<f64>,
) -> Option<DVector<f64>> {
    let big = c.amax();
    if big == 0.0 {
        return None;
    }
    let support: Vec<usize> = (0..c.len()).filter(|&i| c[i].abs() > cut * big).collect();
    let signs: Vec<f64> = support.iter().map(|&i| c[i].signum()).collect();
    let m = support.len();
    let a = DMatrix::from_columns(&support.iter().map(|&i| x.column(i)).collect::<Vec<_>>());
    let extra = budget.is_some() as usize;
    let mut kkt = DMatrix::zeros(m + extra, m + extra);
    kkt.view_mut((0, 0), (m, m))
        .copy_from(&(a.transpose() * &a));
    let mut rhs = DVector::zeros(m + extra);
    let atb = a.transpose() * xbar;
    for k in 0..m {
        rhs[k] = atb[k] - alpha * signs[k];
    }
    if let Some(t) = budget {
        for k in 0..m {
            kkt[(m, k)] = signs[k];
            kkt[(k, m)] = signs[k];
        }
        rhs[m] = t;
    }
    let svd = kkt.svd(true, true);
    let cut = 1e-12 * svd.singular_values.max();
    let sol = svd.solve(&rhs, cut).ok()?;
    let mut out = DVector::zeros(c.len());
    for (k, &i) in support.iter().enumerate() {
        if sol[k] * signs[k] < 0.0 {
            return None;
        }
        out[i] = sol[k];
    }
    Some(out)
}

/// `½‖Xc − x̄‖² + α·1ᵀc` over `c ⪰ 0` by proximal gradient, certified by
/// the duality gap against the scaled residual.
pub fn nn_lasso_oracle(x: &DMatrix<f64>, xbar: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let primal = |c: &DVector<f64>| nn_lasso_objective(x, xbar, c, alpha);
    let gap = |c: &DVector<f64>| {
        // dual: max uᵀx̄ − ½‖u‖² s.t. Xᵀu ⪯ α
        let u = xbar - x * c;
        let worst = (x.transpose() * &u).max();
        let u = if worst > alpha {
            u * (alpha / worst)
        } else {
            u
        };
        primal(c) - (u.dot(xbar) - 0.5 * u.norm_squared())
    };
    let scale = 0.5 * xbar.norm_squared();
    fista(
        x,
        xbar,
        DVector::zeros(x.ncols()),
        primal,
        |v, step| v.apply(|e| *e = (*e - step * alpha).max(0.0)),
        gap,
        |c| support_candidates(x, xbar, c, alpha, None),
        1e-12 * scale.max(1.0),
    )
}

pub fn nn_lasso_objective(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    c: &DVector<f64>,
    alpha: f64,
) -> f64 {
    0.5 * (x * c - xbar).norm_squared() + alpha * c.sum()
}

/// Threshold `θ ≥ 0` with `Σ max(|vᵢ| − θ, 0) = τ`, by bisection.
fn l1_threshold(v: &[f64], tau: f64) -> f64 {
    let mass = |theta: f64| v.iter().map(|x| (x.abs() - theta).max(0.0)).sum::<f64>();
    if mass(0.0) <= tau {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Projection onto `{c ⪰ 0, 1ᵀc ≤ τ}` by clipping and threshold bisection.
pub fn project_nonneg_budget(v: &mut DVector<f64>, tau: f64) {
    v.apply(|e| *e = e.max(0.0));
    let theta = l1_threshold(v.as_slice(), tau);
    v.apply(|e| *e = (*e - theta).max(0.0));
}

/// Projection onto `{‖c‖₁ ≤ τ}`.
pub fn project_l1(v: &mut DVector<f64>, tau: f64) {
    let theta = l1_threshold(v.as_slice(), tau);
    v.apply(|e| *e = e.signum() * (e.abs() - theta).max(0.0));
}

/// `min ‖Xc − x̄‖₂` over `{c ⪰ 0, 1ᵀc ≤ τ}` by projected gradient,
/// certified by the Frank–Wolfe gap.
pub fn nnc_oracle(x: &DMatrix<f64>, xbar: &DVector<f64>, tau: f64) -> DVector<f64> {
    let gap = |c: &DVector<f64>| {
        let g = gradient(x, xbar, c);
        g.dot(c) - tau * g.min().min(0.0)
    };
    fista(
        x,
        xbar,
        DVector::zeros(x.ncols()),
        |c| 0.5 * (x * c - xbar).norm_squared(),
        |v, _| project_nonneg_budget(v, tau),
        gap,
        |c| {
            support_candidates(
                x,
                xbar,
                c,
                0.0,
                (c.sum() > tau * (1.0 - 1e-6)).then_some(tau),
            )
        },
        1e-12 * (0.5 * xbar.norm_squared()).max(1.0),
    )
}

/// `φ(t) = min ‖Xc − x̄‖₂` over `‖c‖₁ ≤ t` and its minimizer, certified by
/// the Frank–Wolfe gap.
pub fn lasso_residual(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    t: f64,
    start: DVector<f64>,
) -> (f64, DVector<f64>) {
    let gap = |c: &DVector<f64>| {
        let g = gradient(x, xbar, c);
        g.dot(c) + t * g.amax()
    };
    let c = fista(
        x,
        xbar,
        start,
        |c| 0.5 * (x * c - xbar).norm_squared(),
        |v, _| project_l1(v, t),
        gap,
        |c| {
            support_candidates(
                x,
                xbar,
                c,
                0.0,
                (c.lp_norm(1) > t * (1.0 - 1e-6)).then_some(t),
            )
        },
        1e-12 * (0.5 * xbar.norm_squared()).max(1.0),
    );
    ((x * &c - xbar).norm(), c)
}

/// BPDN optimum `min ‖c‖₁ s.t. ‖Xc − x̄‖₂ ≤ σ` by bisecting the Pareto curve
/// `φ(t) = σ`. Returns `(t*, c)`.
pub fn bpdn_pareto_oracle(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    sigma: f64,
) -> (f64, DVector<f64>) {
    let n = x.ncols();
    if xbar.norm() <= sigma {
        return (0.0, DVector::zeros(n));
    }
    let mut hi = 1.0;
    let mut c_hi = DVector::zeros(n);
    loop {
        let (phi, c) = lasso_residual(x, xbar, hi, c_hi.clone());
        c_hi = c;
        if phi <= sigma {
            break;
        }
        hi *= 2.0;
        assert!(hi < 1e8, "sigma below the reachable residual");
    }
    let mut lo = 0.0;
    let mut c_lo = DVector::zeros(n);
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        let (phi, c) = lasso_residual(x, xbar, mid, c_lo.clone());
        if phi > sigma {
            lo = mid;
            c_lo = c;
        } else {
            hi = mid;
            c_hi = c;
        }
    }
    (hi, c_hi)
}

/// Lloyd's algorithm from uniformly drawn distinct initial centroids,
/// repeated `restarts` times; returns the least inertia seen.
pub fn kmeans_restarts_oracle(points: &[[f64; 2]], k: usize, restarts: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let n = points.len();
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let init = rand::seq::index::sample(&mut rng, n, k);
        let mut centers: Vec<[f64; 2]> = init.iter().map(|i| points[i]).collect();
        let mut labels = vec![usize::MAX; n];
        loop {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let l = (0..k)
                    .min_by(|&a, &b| d2(*p, centers[a]).total_cmp(&d2(*p, centers[b])))
                    .unwrap();
                if labels[i] != l {
                    labels[i] = l;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<&[f64; 2]> = points
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == c)
                    .map(|(p, _)| p)
                    .collect();
                if !members.is_empty() {
                    let m = members.len() as f64;
                    *center = [
                        members.iter().map(|p| p[0]).sum::<f64>() / m,
                        members.iter().map(|p| p[1]).sum::<f64>() / m,
                    ];
                }
            }
        }
        let inertia: f64 = points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| d2(*p, centers[l]))
            .sum();
        best = best.min(inertia);
    }
    best
}
