//! Normalized spectral clustering, seeded k-means and the elbow heuristic.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::patch::PatchGrid;

/// Accuracy required of every eigenpair used for the embedding.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// A hard partition of `N` items into `k` labelled groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub k: usize,
    pub sizes: Vec<usize>,
}

impl Clustering {
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0; k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::InvalidParameter(format!(
                    "label {l} of item {i} is not below k = {k}"
                )));
            }
            sizes[l] += 1;
        }
        Ok(Clustering { labels, k, sizes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indices carrying label `label`, ascending.
    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == label)
            .collect()
    }
}

/// Writes `patch_index,row,col,label` rows, one per patch.
pub fn write_labels_csv<W: Write>(out: W, clustering: &Clustering, grid: &PatchGrid) -> Result<()> {
    if clustering.len() != grid.num_patches() {
        return Err(Error::Dimension(format!(
            "{} labels for {} patches",
            clustering.len(),
            grid.num_patches()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patch_index", "row", "col", "label"])?;
    for (i, &label) in clustering.labels.iter().enumerate() {
        let (row, col) = grid.origin(i);
        w.write_record([
            i.to_string(),
            row.to_string(),
            col.to_string(),
            label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `L = I − D^{-1/2} W D^{-1/2}`; isolated nodes get a zero in `D^{-1/2}`,
/// so their row of `L` is the identity row.
pub fn normalized_laplacian(w: &AffinityMatrix) -> DMatrix<f64> {
    let n = w.len();
    let inv_sqrt: Vec<f64> = w
        .degrees()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let w = w.matrix();
    DMatrix::from_fn(n, n, |i, j| {
        let off = inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    })
}

/// Eigenpairs of the normalized Laplacian, ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Column `i` belongs to `values[i]`.
    pub vectors: DMatrix<f64>,
    /// Largest `‖Lv − λv‖₂` over the returned pairs.
    pub residual: f64,
}

/// Full eigendecomposition of the normalized Laplacian, sorted ascending
/// (ties by original position), with the residual check applied to the
/// `check` smallest pairs.
pub fn laplacian_spectrum(w: &AffinityMatrix, check: usize) -> Result<Spectrum> {
    let lap = normalized_laplacian(w);
    let n = lap.nrows();
    let eig = faer::Mat::<f64>::from_fn(n, n, |i, j| lap[(i, j)])
        .selfadjoint_eigendecomposition(faer::Side::Lower);
    let (u, s) = (eig.u(), eig.s().column_vector());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.read(a).total_cmp(&s.read(b)).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| s.read(i)).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| u.read(r, order[c]));
    let mut residual = 0.0f64;
    for c in 0..check.min(n) {
        let v = vectors.column(c);
        let r = (&lap * v - v * values[c]).norm();
        residual = residual.max(r);
    }
    if !residual.is_finite() || residual > EIGEN_RESIDUAL_TOL {
        return Err(Error::Eigen { residual });
    }
    Ok(Spectrum {
        values,
        vectors,
        residual,
    })
}

/// Spectral embedding: the `k` eigenvectors of smallest eigenvalue as
/// columns, each row scaled to unit length (zero rows stay zero).
pub fn spectral_embedding(w: &AffinityMatrix, k: usize) -> Result<DMatrix<f64>> {
    let spectrum = laplacian_spectrum(w, k)?;
    let mut emb = spectrum.vectors.columns(0, k).into_owned();
    for mut row in emb.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(emb)
}

/// Normalized spectral clustering into `k` groups.
///
/// Nodes with zero degree are left out of k-means and assigned to the
/// nearest centroid of the embedding afterwards.
pub fn spectral_cluster(w: &AffinityMatrix, k: usize, seed: u64) -> Result<Clustering> {
    let n = w.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "cannot form {k} clusters from {n} nodes"
        )));
    }
    if k == 1 {
        return Clustering::from_labels(vec![0; n], 1);
    }
    let emb = spectral_embedding(w, k)?;
    let degrees = w.degrees();
    let connected: Vec<usize> = (0..n).filter(|&i| degrees[i] > 0.0).collect();
    if connected.len() < k || connected.len() == n {
        return Ok(kmeans(&emb, k, seed)?.clustering);
    }
    let sub = emb.select_rows(&connected);
    let fit = kmeans(&sub, k, seed)?;
    let mut labels = vec![0; n];
    for (&i, &l) in connected.iter().zip(&fit.clustering.labels) {
        labels[i] = l;
    }
    for i in (0..n).filter(|&i| degrees[i] <= 0.0) {
        labels[i] = nearest(&emb, i, &fit.centroids).0;
    }
    Clustering::from_labels(labels, k)
}

/// k-means settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    /// Independent k-means++ starts; the lowest inertia wins (ties go to
    /// the earliest start).
    pub restarts: usize,
    /// Lloyd iterations per start.
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 10,
            max_iter: 300,
        }
    }
}

/// Outcome of [`kmeans`].
#[derive(Debug, Clone)]
pub struct KMeans {
    pub clustering: Clustering,
    /// `k × m`, one centroid per row.
    pub centroids: DMatrix<f64>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
}

/// k-means on the rows of `points` with the default configuration.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeans> {
    kmeans_with(points, k, seed, &KMeansConfig::default())
}

/// Lloyd's algorithm from k-means++ starts. Start `r` draws from a ChaCha8
/// generator seeded with `seed` on stream `r`, so results do not depend on
/// scheduling.
pub fn kmeans_with(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    if cfg.restarts == 0 || cfg.max_iter == 0 {
        return Err(Error::InvalidParameter(
            "k-means needs at least one restart and iteration".into(),
        ));
    }
    let runs: Vec<(Vec<usize>, DMatrix<f64>, f64)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(points, k, &mut rng, cfg.max_iter)
        })
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.2 < runs[best].2 {
            best = r;
        }
    }
    let (labels, centroids, inertia) = runs.into_iter().nth(best).expect("at least one run");
    Ok(KMeans {
        clustering: Clustering::from_labels(labels, k)?,
        centroids,
        inertia,
    })
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|j| {
            let d = points[(i, j)] - centroids[(c, j)];
            d * d
        })
        .sum()
}

/// Closest centroid to row `i` (lowest index on ties) and its squared
/// distance.
fn nearest(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = sq_dist(points, i, centroids, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centroids = DMatrix::zeros(k, points.ncols());
    let first = rng.gen_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // rounding can run off the end; fall back to the last positive
            if d2[chosen] == 0.0 {
                chosen = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.set_row(c, &points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

fn lloyd(
    points: &DMatrix<f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
) -> (Vec<usize>, DMatrix<f64>, f64) {
    let n = points.nrows();
    let m = points.ncols();
    let mut centroids = plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(points, i, &centroids);
            dist[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        // an empty cluster takes the point farthest from its centroid
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                counts[c] = 1;
                labels[i] = c;
                dist[i] = 0.0;
                changed = true;
            }
        }
        let mut sums = DMatrix::zeros(k, m);
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += points.row(i);
        }
        for c in 0..k {
            let row = sums.row(c) / counts[c] as f64;
            centroids.set_row(c, &row);
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points, i, &centroids, labels[i]))
        .sum();
    (labels, centroids, inertia)
}

/// Inertia curve over `k_range` and the elbow picked from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Elbow {
    pub k: usize,
    /// `(k, inertia)` for every candidate.
    pub curve: Vec<(usize, f64)>,
}

/// Runs k-means for each `k` in `k_range` (ascending) and picks the point of
/// the inertia curve farthest from the chord joining its endpoints, after
/// scaling both axes to `[0, 1]`. A flat curve selects the smallest `k`.
pub fn elbow_estimate_k(points: &DMatrix<f64>, k_range: &[usize], seed: u64) -> Result<Elbow> {
    if k_range.is_empty() {
        return Err(Error::InvalidParameter("empty k range".into()));
    }
    if k_range.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("k range must be ascending".into()));
    }
    let mut curve = Vec::with_capacity(k_range.len());
    for &k in k_range {
        curve.push((k, kmeans(points, k, seed)?.inertia));
    }
    Ok(Elbow {
        k: elbow_of_curve(&curve),
        curve,
    })
}

/// Elbow of an already computed curve (see [`elbow_estimate_k`]).
pub fn elbow_of_curve(curve: &[(usize, f64)]) -> usize {
    let (k0, i0) = curve[0];
    let (k1, i1) = curve[curve.len() - 1];
    let (lo, hi) = curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
            (lo.min(v), hi.max(v))
        });
    if curve.len() < 3 || !(hi > lo) {
        return k0;
    }
    let x = |k: usize| (k - k0) as f64 / (k1 - k0) as f64;
    let y = |v: f64| (v - lo) / (hi - lo);
    let (ax, ay) = (x(k0), y(i0));
    let (bx, by) = (x(k1), y(i1));
    let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
    let mut best = (k0, f64::NEG_INFINITY);
    for &(k, v) in curve {
        let (px, py) = (x(k), y(v));
        let d = ((bx - ax) * (ay - py) - (ax - px) * (by - ay)).abs() / len;
        if d > best.1 + 1e-12 {
            best = (k, d);
        }
    }
    best.0
}
