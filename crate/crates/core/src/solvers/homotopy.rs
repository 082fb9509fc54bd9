//! Exact lasso homotopy (LARS with the lasso modification).
//!
//! Follows the piecewise-linear solution path of
//! `min ½‖Xc − x̄‖² + λ‖c‖₁` (optionally with `c ⪰ 0`) from
//! `λ = ‖Xᵀx̄‖∞` downwards. Along the path the residual norm decreases and
//! the ℓ₁ norm increases monotonically, so the path is the Pareto curve
//! between the two and each stopping rule below is met at a unique point:
//!
//! * [`Stop::Residual`]: `‖Xc − x̄‖₂ = σ` (basis pursuit denoising),
//! * [`Stop::Budget`]: `‖c‖₁ = τ` (constrained lasso), or the end of the
//!   path if the budget is never exhausted,
//! * [`Stop::Penalty`]: `λ = α` (penalized lasso).
//!
//! On each segment the active coefficients move along `G_AA d = s_A`.
//! Columns that are numerically dependent on the active set (for example
//! duplicated patches) are never admitted; their correlations stay tied to
//! the active ones.

use super::chol::ActiveCholesky;
use super::GramProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(super) enum Stop {
    Residual(f64),
    Budget(f64),
    Penalty(f64),
}

#[derive(Debug, Clone)]
pub(super) struct PathPoint {
    pub c: Vec<f64>,
    /// Penalty level at the returned point (the constraint multiplier).
    pub lambda: f64,
    pub steps: usize,
    pub residual: f64,
    /// Largest violation of the lasso optimality conditions at `lambda`.
    pub kkt: f64,
}

struct Path<'p, 'a> {
    p: &'p GramProblem<'a>,
    nonneg: bool,
    c: Vec<f64>,
    corr: Vec<f64>,
    lambda: f64,
    active: Vec<usize>,
    in_active: Vec<bool>,
    signs: Vec<f64>,
    chol: ActiveCholesky,
    /// Excluded target and zero columns.
    blocked: Vec<bool>,
    /// Columns found dependent on the current active set; cleared whenever
    /// the active set changes.
    dependent: Vec<bool>,
    /// Column that left on the previous step and the sign it left with;
    /// it may not rejoin with that sign straight away.
    just_left: Option<(usize, f64)>,
}

/// Exact correlations are recomputed this often; in between they are
/// updated along the segment direction.
const REFRESH_EVERY: usize = 16;

pub(super) fn follow(
    p: &GramProblem<'_>,
    nonneg: bool,
    stop: Stop,
    max_steps: usize,
) -> Result<PathPoint> {
    follow_all(p, nonneg, &[stop], max_steps)
        .pop()
        .expect("one stop gives one point")
}

/// Follows one path through several stops, which must be met in the given
/// order along the path (for penalties: descending). The step budget is
/// shared; stops not reached within it report the failure.
pub(super) fn follow_all(
    p: &GramProblem<'_>,
    nonneg: bool,
    stops: &[Stop],
    max_steps: usize,
) -> Vec<Result<PathPoint>> {
    let n = p.len();
    let mut blocked = vec![false; n];
    for j in 0..n {
        if Some(j) == p.excluded || p.diag(j) <= 0.0 {
            blocked[j] = true;
        }
    }
    let mut path = Path {
        p,
        nonneg,
        c: vec![0.0; n],
        corr: p.b.to_vec(),
        lambda: 0.0,
        active: Vec::new(),
        in_active: vec![false; n],
        signs: Vec::new(),
        chol: ActiveCholesky::default(),
        blocked,
        dependent: vec![false; n],
        just_left: None,
    };
    let mut out = Vec::with_capacity(stops.len());
    let mut pending = stops.iter().copied().peekable();

    let top = path.best_inactive().filter(|&(_, _, v)| v > 0.0);
    path.lambda = top.map_or(0.0, |(_, _, v)| v);
    // stops already met at c = 0
    while let Some(&stop) = pending.peek() {
        let met = match stop {
            Stop::Residual(sigma) => p.target_norm() <= sigma,
            Stop::Budget(tau) => tau <= 0.0,
            Stop::Penalty(alpha) => path.lambda <= alpha,
        };
        if !met {
            break;
        }
        pending.next();
        out.push(Ok(path.snapshot(0, stop)));
    }
    let Some((first, sign, _)) = top else {
        out.extend(pending.map(|s| path.end_of_path(s, 0)));
        return out;
    };
    if pending.peek().is_none() {
        return out;
    }
    path.admit(first, sign);

    let mut since_refresh = 0;
    for step in 1..=max_steps {
        let Some(&stop) = pending.peek() else {
            return out;
        };
        if path.active.is_empty() {
            match path.best_inactive() {
                Some((j, s, v)) if v > 0.0 => {
                    path.lambda = v;
                    path.admit(j, s);
                    continue;
                }
                _ => {
                    out.extend(pending.map(|s| path.end_of_path(s, step)));
                    return out;
                }
            }
        }
        let dir = path.chol.solve(&path.signs);
        // a_j = G_jA d
        let mut slope = vec![0.0; n];
        for (&k, &dk) in path.active.iter().zip(&dir) {
            for (s, g) in slope.iter_mut().zip(p.column(k)) {
                *s += dk * g;
            }
        }
        let lambda = path.lambda;

        let mut gamma = lambda;
        let mut event = Event::PathEnd;
        for j in 0..n {
            if path.blocked[j] || path.dependent[j] || path.in_active[j] {
                continue;
            }
            let up = 1.0 - slope[j];
            if up > 1e-12 && path.just_left != Some((j, 1.0)) {
                let g = ((lambda - path.corr[j]) / up).max(0.0);
                if g < gamma {
                    gamma = g;
                    event = Event::Join(j, 1.0);
                }
            }
            if !nonneg {
                let down = 1.0 + slope[j];
                if down > 1e-12 && path.just_left != Some((j, -1.0)) {
                    let g = ((lambda + path.corr[j]) / down).max(0.0);
                    if g < gamma {
                        gamma = g;
                        event = Event::Join(j, -1.0);
                    }
                }
            }
        }
        for (pos, (&k, &dk)) in path.active.iter().zip(&dir).enumerate() {
            let ck = path.c[k];
            if ck * dk < 0.0 {
                let g = -ck / dk;
                if g < gamma {
                    gamma = g;
                    event = Event::Leave(pos);
                }
            }
        }
        // growth rate of both ‖c‖₁ and ‖X d‖² along the segment
        let u: f64 = path.signs.iter().zip(&dir).map(|(s, d)| s * d).sum();
        let stop_at = match stop {
            Stop::Residual(sigma) => {
                let r2 = path.residual_sq();
                let excess = r2 - sigma * sigma;
                if excess <= 0.0 {
                    Some(0.0)
                } else {
                    let disc = lambda * lambda - excess / u;
                    if disc >= 0.0 {
                        Some(lambda - disc.sqrt())
                    } else {
                        None
                    }
                }
            }
            Stop::Budget(tau) => {
                let l1 = path.l1();
                Some(((tau - l1) / u).max(0.0))
            }
            Stop::Penalty(alpha) => Some((lambda - alpha).max(0.0)),
        };
        let mut reached = false;
        if let Some(g) = stop_at {
            if g <= gamma {
                gamma = g;
                reached = true;
            }
        }

        for (&k, &dk) in path.active.iter().zip(&dir) {
            path.c[k] += gamma * dk;
        }
        path.lambda = (lambda - gamma).max(0.0);
        since_refresh += 1;
        if reached || since_refresh >= REFRESH_EVERY {
            path.refresh_correlations();
            since_refresh = 0;
        } else {
            for (r, s) in path.corr.iter_mut().zip(&slope) {
                *r -= gamma * s;
            }
        }
        path.just_left = None;

        if reached {
            pending.next();
            out.push(Ok(path.snapshot(step, stop)));
            // the same segment may serve the next stop too
            continue;
        }
        match event {
            Event::PathEnd => {
                path.refresh_correlations();
                out.extend(pending.map(|s| path.end_of_path(s, step)));
                return out;
            }
            Event::Join(j, s) => {
                if !path.admit(j, s) {
                    path.dependent[j] = true;
                }
            }
            Event::Leave(pos) => path.retire(pos),
        }
    }
    if pending.peek().is_some() {
        path.refresh_correlations();
        let gap = path.kkt();
        out.extend(pending.map(|_| {
            Err(Error::NonConvergence {
                solver: "lasso homotopy",
                iterations: max_steps,
                gap,
            })
        }));
    }
    out
}

enum Event {
    PathEnd,
    Join(usize, f64),
    Leave(usize),
}

impl Path<'_, '_> {
    /// Inactive column with the largest admissible correlation.
    fn best_inactive(&self) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.c.len() {
            if self.blocked[j] || self.dependent[j] || self.in_active[j] {
                continue;
            }
            let cj = self.corr[j];
            let (v, s) = if self.nonneg {
                (cj, 1.0)
            } else {
                (cj.abs(), cj.signum())
            };
            if best.is_none_or(|(_, _, b)| v > b) {
                best = Some((j, s, v));
            }
        }
        best
    }

    fn admit(&mut self, j: usize, sign: f64) -> bool {
        let cross: Vec<f64> = self.active.iter().map(|&k| self.p.column(j)[k]).collect();
        if !self.chol.push(&cross, self.p.diag(j)) {
            return false;
        }
        self.dependent.fill(false);
        self.active.push(j);
        self.in_active[j] = true;
        self.signs.push(sign);
        true
    }

    fn retire(&mut self, pos: usize) {
        let k = self.active.remove(pos);
        let sign = self.signs.remove(pos);
        self.in_active[k] = false;
        self.c[k] = 0.0;
        self.just_left = Some((k, sign));
        let p = self.p;
        let active = &self.active;
        let (chol, dropped) =
            ActiveCholesky::rebuild(active.len(), |a, b| p.column(active[b])[active[a]]);
        self.chol = chol;
        self.dependent.fill(false);
        for &pos in dropped.iter().rev() {
            let j = self.active.remove(pos);
            self.signs.remove(pos);
            self.in_active[j] = false;
            self.c[j] = 0.0;
            self.dependent[j] = true;
        }
    }

    fn refresh_correlations(&mut self) {
        self.corr.copy_from_slice(&self.p.b);
        for &k in &self.active {
            let ck = self.c[k];
            if ck != 0.0 {
                for (r, g) in self.corr.iter_mut().zip(self.p.column(k)) {
                    *r -= ck * g;
                }
            }
        }
    }

    /// `‖x̄‖² − bᵀc − cᵀ(Xᵀr)` using the current correlations.
    fn residual_sq(&self) -> f64 {
        let mut acc = self.p.target_sq;
        for &k in &self.active {
            acc -= self.c[k] * (self.p.b[k] + self.corr[k]);
        }
        acc.max(0.0)
    }

    fn l1(&self) -> f64 {
        self.c.iter().map(|v| v.abs()).sum()
    }

    fn kkt(&self) -> f64 {
        self.kkt_at(self.lambda)
    }

    fn kkt_at(&self, lambda: f64) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.c.len() {
            if Some(j) == self.p.excluded || self.p.diag(j) <= 0.0 {
                continue;
            }
            let cj = self.c[j];
            let r = self.corr[j];
            let v = if cj != 0.0 {
                (r - lambda * cj.signum()).abs()
            } else if self.nonneg {
                (r - lambda).max(0.0)
            } else {
                (r.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    /// The least-squares end of the path. A residual bound below the
    /// least-squares floor cannot be met and settles here too.
    fn end_of_path(&self, stop: Stop, steps: usize) -> Result<PathPoint> {
        let point = self.point(steps, 0.0);
        if let Stop::Residual(sigma) = stop {
            if point.residual > sigma {
                log::debug!(
                    "residual bound {sigma:.3e} below the least-squares floor {:.3e}",
                    point.residual
                );
            }
        }
        Ok(point)
    }

    /// Point at which `stop` was met; a penalty stop fixes `λ` exactly.
    fn snapshot(&self, steps: usize, stop: Stop) -> PathPoint {
        let lambda = match stop {
            Stop::Penalty(alpha) => alpha,
            _ => self.lambda,
        };
        self.point(steps, lambda)
    }

    fn point(&self, steps: usize, lambda: f64) -> PathPoint {
        let mut at = PathPoint {
            c: self.c.clone(),
            lambda,
            steps,
            residual: self.residual_sq().sqrt(),
            kkt: 0.0,
        };
        at.kkt = self.kkt_at(lambda);
        at
    }
}
