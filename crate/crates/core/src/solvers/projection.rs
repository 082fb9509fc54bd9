//! Euclidean projections onto the constraint sets used by the solvers.

/// Projection of `v` onto the ball `{u : ‖u − center‖₂ ≤ radius}`.
pub fn project_l2_ball(v: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    assert_eq!(v.len(), center.len(), "vector and center lengths differ");
    assert!(radius >= 0.0, "radius must be non-negative");
    let dist = v
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dist <= radius {
        return v.to_vec();
    }
    let scale = radius / dist;
    v.iter()
        .zip(center)
        .map(|(a, b)| b + scale * (a - b))
        .collect()
}

/// Projection onto `{u ⪰ 0, 1ᵀu ≤ τ}`.
pub fn project_simplex_cap(v: &[f64], tau: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    project_simplex_cap_in_place(&mut out, tau);
    out
}

/// In-place variant of [`project_simplex_cap`].
pub fn project_simplex_cap_in_place(v: &mut [f64], tau: f64) {
    assert!(tau > 0.0, "tau must be positive");
    let mut sum = 0.0;
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
        sum += *x;
    }
    if sum <= tau {
        return;
    }
    let theta = simplex_threshold(v.iter().copied().filter(|&x| x > 0.0), tau);
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Projection onto the ℓ₁ ball `{u : ‖u‖₁ ≤ τ}`.
pub fn project_l1_ball_in_place(v: &mut [f64], tau: f64) {
    assert!(tau >= 0.0, "tau must be non-negative");
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= tau {
        return;
    }
    if tau == 0.0 {
        v.fill(0.0);
        return;
    }
    let theta = simplex_threshold(v.iter().map(|x| x.abs()).filter(|&x| x > 0.0), tau);
    for x in v.iter_mut() {
        let mag = (x.abs() - theta).max(0.0);
        *x = mag.copysign(*x);
    }
}

/// Sorted-threshold rule: the `θ` with `Σ max(uᵢ − θ, 0) = τ`, for positive
/// entries whose sum exceeds `τ`.
fn simplex_threshold(values: impl Iterator<Item = f64>, tau: f64) -> f64 {
    let mut u: Vec<f64> = values.collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cumsum += x;
        let candidate = (cumsum - tau) / (j + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta
}
