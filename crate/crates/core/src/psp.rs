//! Patch subspace projection: one affine subspace per cluster, each patch
//! replaced by its least-squares projection onto the closest one.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::affinity::{build_affinity, build_coef_matrix};
use crate::cluster::{spectral_cluster, Clustering};
use crate::error::{Error, Result};
use crate::noise::estimate_noise_sigma;
use crate::patch::{extract_patches, reassemble, PatchMatrix};
use crate::solvers::{SelfRepMethod, SolverConfig};
use crate::Image;

/// How many principal directions each cluster keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimPolicy {
    /// Smallest `r` whose leading singular values carry at least `theta` of
    /// the centered energy, capped at `cap`.
    Energy { theta: f64, cap: usize },
    /// The same `r` everywhere (clamped to what the cluster supports).
    Fixed(usize),
}

impl Default for DimPolicy {
    fn default() -> Self {
        DimPolicy::Energy {
            theta: 0.9,
            cap: 16,
        }
    }
}

impl DimPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DimPolicy::Energy { theta, .. } if !(theta > 0.0 && theta <= 1.0) => Err(
                Error::InvalidParameter(format!("energy threshold {theta} not in (0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    /// Dimension chosen from descending singular values, before clamping to
    /// the cluster's rank bound.
    fn choose(&self, singular: &[f64]) -> usize {
        match *self {
            DimPolicy::Fixed(r) => r,
            DimPolicy::Energy { theta, cap } => {
                let total: f64 = singular.iter().map(|s| s * s).sum();
                if total <= 0.0 {
                    return 0;
                }
                let mut acc = 0.0;
                let mut r = singular.len();
                for (i, s) in singular.iter().enumerate() {
                    acc += s * s;
                    if acc >= theta * total {
                        r = i + 1;
                        break;
                    }
                }
                r.min(cap)
            }
        }
    }
}

/// `{μ + Uw}` fitted to one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    pub cluster_id: usize,
    pub mean: DVector<f64>,
    /// `d × r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// All singular values of the centered cluster block, descending.
    pub singular_values: Vec<f64>,
    /// Share of the centered energy captured by `basis` (1 when the cluster
    /// has none).
    pub energy_fraction: f64,
    /// Number of patches the subspace was fitted to.
    pub size: usize,
}

impl AffineSubspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `UUᵀ(y − μ)`.
    fn project_centered(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let centered = y - &self.mean;
        let coords = self.basis.tr_mul(&centered);
        let proj = &self.basis * coords;
        (centered, proj)
    }

    /// Euclidean distance from `y` to the subspace.
    pub fn distance(&self, y: &DVector<f64>) -> f64 {
        let (centered, proj) = self.project_centered(y);
        (centered - proj).norm()
    }

    /// Closest point of the subspace to `y`.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        let (_, proj) = self.project_centered(y);
        proj + &self.mean
    }
}

/// One subspace per non-empty cluster, ordered by cluster id.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    pub subspaces: Vec<AffineSubspace>,
    /// Cluster ids that had no members and therefore no subspace.
    pub skipped: Vec<usize>,
    pub k: usize,
}

impl SubspaceModel {
    pub fn get(&self, cluster_id: usize) -> Option<&AffineSubspace> {
        self.subspaces.iter().find(|s| s.cluster_id == cluster_id)
    }

    /// Writes `cluster_id,size,dim,energy_fraction,singular_values,mean`,
    /// with vector fields space-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let join = |v: &mut dyn Iterator<Item = f64>| {
            v.map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "cluster_id",
            "size",
            "dim",
            "energy_fraction",
            "singular_values",
            "mean",
        ])?;
        for s in &self.subspaces {
            w.write_record([
                s.cluster_id.to_string(),
                s.size.to_string(),
                s.dim().to_string(),
                format!("{:.6}", s.energy_fraction),
                join(&mut s.singular_values.iter().copied()),
                join(&mut s.mean.iter().copied()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits the affine subspace of every cluster to the columns of `patches`.
///
/// Empty clusters are skipped and listed in [`SubspaceModel::skipped`].
pub fn fit_subspaces(
    patches: &DMatrix<f64>,
    clustering: &Clustering,
    policy: DimPolicy,
) -> Result<SubspaceModel> {
    policy.validate()?;
    if clustering.len() != patches.ncols() {
        return Err(Error::Dimension(format!(
            "{} labels for {} patches",
            clustering.len(),
            patches.ncols()
        )));
    }
    let fitted: Vec<Option<AffineSubspace>> = (0..clustering.k)
        .into_par_iter()
        .map(|id| {
            let members = clustering.members(id);
            (!members.is_empty()).then(|| fit_one(patches, &members, id, policy))
        })
        .collect();
    let mut subspaces = Vec::new();
    let mut skipped = Vec::new();
    for (id, s) in fitted.into_iter().enumerate() {
        match s {
            Some(s) => subspaces.push(s),
            None => {
                log::warn!("cluster {id} is empty; no subspace fitted");
                skipped.push(id);
            }
        }
    }
    Ok(SubspaceModel {
        subspaces,
        skipped,
        k: clustering.k,
    })
}

fn fit_one(
    patches: &DMatrix<f64>,
    members: &[usize],
    id: usize,
    policy: DimPolicy,
) -> AffineSubspace {
    let d = patches.nrows();
    let block = patches.select_columns(members);
    let n = members.len();
    let mean = block.column_sum() / n as f64;
    let centered = DMatrix::from_fn(d, n, |i, j| block[(i, j)] - mean[i]);
    let svd = faer::Mat::<f64>::from_fn(d, n, |i, j| centered[(i, j)]).thin_svd();
    // values at rounding level (the mean itself is inexact) count as zero
    let floor = d.max(n) as f64 * f64::EPSILON * block.amax() * (n as f64).sqrt();
    let singular: Vec<f64> = (0..d.min(n))
        .map(|i| svd.s_diagonal().read(i))
        .map(|s| if s > floor { s } else { 0.0 })
        .collect();
    // the centered block has rank at most n - 1
    let r = policy.choose(&singular).min(d).min(n - 1);
    let basis = DMatrix::from_fn(d, r, |i, j| svd.u().read(i, j));
    let total: f64 = singular.iter().map(|s| s * s).sum();
    let kept: f64 = singular[..r].iter().map(|s| s * s).sum();
    AffineSubspace {
        cluster_id: id,
        mean,
        basis,
        energy_fraction: if total > 0.0 { kept / total } else { 1.0 },
        singular_values: singular,
        size: n,
    }
}

/// Cluster id of the subspace nearest to `y`; ties go to the lower id.
pub fn closest_subspace(y: &DVector<f64>, model: &SubspaceModel) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for s in &model.subspaces {
        let d = s.distance(y);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((s.cluster_id, d));
        }
    }
    best.map(|(id, _)| id)
        .ok_or_else(|| Error::InvalidParameter("subspace model is empty".into()))
}

/// `μ_S + U_S U_Sᵀ(y − μ_S)` for the closest subspace `S`.
pub fn psp_denoise_patch(y: &DVector<f64>, model: &SubspaceModel) -> Result<DVector<f64>> {
    let id = closest_subspace(y, model)?;
    Ok(model
        .get(id)
        .expect("closest id is in the model")
        .project(y))
}

/// Settings for the full denoising pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PspConfig {
    pub patch_side: usize,
    pub stride: usize,
    /// Number of clusters.
    pub k: usize,
    pub dim_policy: DimPolicy,
    /// Solver settings; `sigma_fit` is overwritten from the noise estimate.
    pub solver: SolverConfig,
    /// BPDN residual bound is `fit_scale · σ̂ · L` (that is, `σ̂ √d`).
    pub fit_scale: f64,
    /// Noise level to use instead of estimating it.
    pub sigma_hat: Option<f64>,
    /// Seed for the k-means stage.
    pub seed: u64,
}

impl Default for PspConfig {
    fn default() -> Self {
        PspConfig {
            patch_side: 8,
            stride: 8,
            k: 20,
            dim_policy: DimPolicy::default(),
            solver: SolverConfig::default(),
            fit_scale: 1.0,
            sigma_hat: None,
            seed: 0,
        }
    }
}

/// Wall-clock time of each pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub extract: Duration,
    pub self_representation: Duration,
    pub affinity: Duration,
    pub clustering: Duration,
    pub fit: Duration,
    pub projection: Duration,
    pub reassembly: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.extract
            + self.self_representation
            + self.affinity
            + self.clustering
            + self.fit
            + self.projection
            + self.reassembly
    }

    /// `(stage name, duration)` in pipeline order.
    pub fn stages(&self) -> [(&'static str, Duration); 7] {
        [
            ("extract", self.extract),
            ("self_representation", self.self_representation),
            ("affinity", self.affinity),
            ("clustering", self.clustering),
            ("fit", self.fit),
            ("projection", self.projection),
            ("reassembly", self.reassembly),
        ]
    }
}

/// Everything the pipeline produced.
#[derive(Debug, Clone)]
pub struct PspOutput {
    pub image: Image,
    pub patches: PatchMatrix,
    pub clustering: Clustering,
    pub model: SubspaceModel,
    pub sigma_hat: f64,
    pub timings: StageTimings,
}

/// Patches of an image grouped by self-representation clustering.
#[derive(Debug, Clone)]
pub struct PatchClusters {
    pub patches: PatchMatrix,
    pub clustering: Clustering,
    pub sigma_hat: f64,
    pub timings: StageTimings,
}

/// First half of the pipeline: extract patches, solve every
/// self-representation problem, build the affinity and cluster it.
pub fn cluster_image_patches(
    noisy: &Image,
    method: SelfRepMethod,
    cfg: &PspConfig,
) -> Result<PatchClusters> {
    if !(cfg.fit_scale > 0.0) {
        return Err(Error::InvalidParameter("fit_scale must be positive".into()));
    }
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let patches = extract_patches(noisy, cfg.patch_side, cfg.stride)?;
    timings.extract = t.elapsed();
    if cfg.k == 0 || cfg.k > patches.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot form {} clusters from {} patches",
            cfg.k,
            patches.len()
        )));
    }

    let sigma_hat = match cfg.sigma_hat {
        Some(s) if s >= 0.0 => s,
        Some(s) => {
            return Err(Error::InvalidParameter(format!(
                "sigma_hat {s} is negative"
            )))
        }
        None => estimate_noise_sigma(noisy),
    };
    let t = Instant::now();
    // solvers see intensities in [0, 1]
    let solver = SolverConfig {
        sigma_fit: cfg.fit_scale * sigma_hat * cfg.patch_side as f64 / 255.0,
        ..cfg.solver.clone()
    };
    let unit = patches.data.map(|v| v / 255.0);
    let rep = build_coef_matrix(&unit, method, &solver)?;
    timings.self_representation = t.elapsed();

    let t = Instant::now();
    let w = build_affinity(&rep.coefs);
    timings.affinity = t.elapsed();

    let t = Instant::now();
    let clustering = spectral_cluster(&w, cfg.k, cfg.seed)?;
    timings.clustering = t.elapsed();

    Ok(PatchClusters {
        patches,
        clustering,
        sigma_hat,
        timings,
    })
}

/// Clusters the patches of `noisy` with `method` and projects each onto its
/// closest cluster subspace.
pub fn psp_denoise_image(
    noisy: &Image,
    method: SelfRepMethod,
    cfg: &PspConfig,
) -> Result<PspOutput> {
    cfg.dim_policy.validate()?;
    let PatchClusters {
        patches,
        clustering,
        sigma_hat,
        mut timings,
    } = cluster_image_patches(noisy, method, cfg)?;

    let t = Instant::now();
    let model = fit_subspaces(&patches.data, &clustering, cfg.dim_policy)?;
    timings.fit = t.elapsed();

    let t = Instant::now();
    let columns: Vec<DVector<f64>> = (0..patches.len())
        .into_par_iter()
        .map(|j| psp_denoise_patch(&patches.column(j), &model))
        .collect::<Result<_>>()?;
    let denoised = DMatrix::from_columns(&columns);
    timings.projection = t.elapsed();

    let t = Instant::now();
    let image = reassemble(&patches.with_data(denoised)?)?.clip();
    timings.reassembly = t.elapsed();

    Ok(PspOutput {
        image,
        patches,
        clustering,
        model,
        sigma_hat,
        timings,
    })
}
