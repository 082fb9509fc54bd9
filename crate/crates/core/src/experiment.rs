//! Experiment grid (image × σ × method), seed derivation, CSV artifacts and
//! cluster montages.
//!
//! # Seeds
//!
//! Every random draw in a run is derived from the master seed with
//! [`derive_seed`]: the first eight bytes (little endian) of
//!
//! ```text
//! SHA-256("psp-seed-v1" ‖ master_le64 ‖ len_le64(image) ‖ image
//!         ‖ sigma_bits_le64 ‖ len_le64(stream) ‖ stream)
//! ```
//!
//! The noise for `(image, σ)` uses stream `"noise"`, so every method sees the
//! same noisy image; each method's own randomness (k-means starts) uses the
//! method name as stream. No seed depends on execution order.
//!
//! # CSV files
//!
//! * `results.csv`: `image,method,sigma,sigma_hat,psnr_noisy,psnr_denoised,error`
//! * `summary.csv`: `sigma` followed by one column per method holding the
//!   mean denoised PSNR over the images that succeeded
//! * `timings.csv`: `image,method,sigma,stage,seconds`
//!
//! The first two are byte-identical across runs with the same
//! configuration; wall-clock timings are kept apart for that reason.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::Clustering;
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::nlm::{nlm_denoise, NlmConfig};
use crate::noise::{corrupt, estimate_noise_sigma, NoiseSpec};
use crate::patch::PatchMatrix;
use crate::psp::{psp_denoise_image, DimPolicy, PspConfig};
use crate::solvers::{NnEngine, SelfRepMethod, SolverConfig};
use crate::Image;

/// A denoiser taking part in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Psp(SelfRepMethod),
    Nlm,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Psp(SelfRepMethod::Nnc),
        Method::Psp(SelfRepMethod::Nn),
        Method::Psp(SelfRepMethod::Bpdn),
        Method::Nlm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Psp(SelfRepMethod::Bpdn) => "psp-bpdn",
            Method::Psp(SelfRepMethod::Nnc) => "psp-nnc",
            Method::Psp(SelfRepMethod::Nn) => "psp-nn",
            Method::Nlm => "nlm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        if s == "nlm" {
            return Ok(Method::Nlm);
        }
        let inner = s.strip_prefix("psp-").unwrap_or(&s);
        inner.parse().map(Method::Psp).map_err(|_| {
            Error::InvalidParameter(format!(
                "unknown method '{s}' (expected psp-nnc, psp-nn, psp-bpdn or nlm)"
            ))
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

/// Sub-seed for one `(image, σ, stream)` combination; see the module docs.
pub fn derive_seed(master: u64, image: &str, sigma: f64, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"psp-seed-v1");
    h.update(master.to_le_bytes());
    h.update((image.len() as u64).to_le_bytes());
    h.update(image.as_bytes());
    h.update(sigma.to_bits().to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `[solver]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tau: f64,
    pub alpha_grid: Vec<f64>,
    pub max_iter: usize,
    pub tol: f64,
    /// BPDN bound multiplier: `σ_fit = fit_scale · σ̂ · √d`.
    pub fit_scale: f64,
    /// `"homotopy"` or `"cd"`.
    pub nn_engine: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverSection {
            tau: s.tau,
            alpha_grid: s.alpha_grid,
            max_iter: s.max_iter,
            tol: s.tol,
            fit_scale: 1.0,
            nn_engine: "homotopy".into(),
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> Result<SolverConfig> {
        let nn_engine = match self.nn_engine.as_str() {
            "homotopy" => NnEngine::Homotopy,
            "cd" | "coordinate-descent" => NnEngine::CoordinateDescent,
            other => {
                return Err(Error::Config(format!(
                    "unknown nn_engine '{other}' (expected homotopy or cd)"
                )))
            }
        };
        let cfg = SolverConfig {
            sigma_fit: 0.0,
            tau: self.tau,
            alpha_grid: self.alpha_grid.clone(),
            max_iter: self.max_iter,
            tol: self.tol,
            nn_engine,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `[subspace]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceSection {
    /// `"energy"` or `"fixed"`.
    pub policy: String,
    pub theta: f64,
    pub cap: usize,
    pub rank: usize,
}

impl Default for SubspaceSection {
    fn default() -> Self {
        SubspaceSection {
            policy: "energy".into(),
            theta: 0.9,
            cap: 16,
            rank: 4,
        }
    }
}

impl SubspaceSection {
    pub fn to_policy(&self) -> Result<DimPolicy> {
        let p = match self.policy.as_str() {
            "energy" => DimPolicy::Energy {
                theta: self.theta,
                cap: self.cap,
            },
            "fixed" => DimPolicy::Fixed(self.rank),
            other => {
                return Err(Error::Config(format!(
                    "unknown subspace policy '{other}' (expected energy or fixed)"
                )))
            }
        };
        p.validate()?;
        Ok(p)
    }
}

/// `[nlm]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlmSection {
    pub filter_k: f64,
    pub patch_size: usize,
    pub search_window: usize,
}

impl Default for NlmSection {
    fn default() -> Self {
        let n = NlmConfig::default();
        NlmSection {
            filter_k: n.filter_k,
            patch_size: n.patch_size,
            search_window: n.search_window,
        }
    }
}

impl NlmSection {
    pub fn to_config(&self) -> Result<NlmConfig> {
        let cfg = NlmConfig {
            filter_k: self.filter_k,
            patch_size: self.patch_size,
            search_window: self.search_window,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Full description of a comparison run; loadable from TOML.
///
/// ```toml
/// images = ["data/corpus/camera.pgm"]
/// sigmas = [10, 20, 30]
/// methods = ["psp-nnc", "psp-nn", "psp-bpdn", "nlm"]
/// k = 20
/// seed = 7
///
/// [solver]
/// alpha_grid = [0.001, 0.01, 0.1, 1, 10]
///
/// [subspace]
/// policy = "energy"
/// theta = 0.9
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub images: Vec<PathBuf>,
    pub sigmas: Vec<f64>,
    pub methods: Vec<Method>,
    pub k: usize,
    pub patch_side: usize,
    pub stride: usize,
    pub seed: u64,
    /// Where artifacts go; [`DEFAULT_OUTPUT_DIR`] when unset.
    pub output_dir: Option<PathBuf>,
    /// Grid cells run concurrently on this many threads (0: all cores).
    pub workers: usize,
    /// Also write noisy and denoised PGMs under `output_dir/images`.
    pub save_images: bool,
    pub solver: SolverSection,
    pub subspace: SubspaceSection,
    pub nlm: NlmSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            images: Vec::new(),
            sigmas: vec![10.0, 20.0, 30.0],
            methods: Method::ALL.to_vec(),
            k: 20,
            patch_side: 8,
            stride: 8,
            seed: 0,
            output_dir: None,
            workers: 0,
            save_images: false,
            solver: SolverSection::default(),
            subspace: SubspaceSection::default(),
            nlm: NlmSection::default(),
        }
    }
}

/// Output directory used when none is configured.
pub const DEFAULT_OUTPUT_DIR: &str = "psp-output";

impl ExperimentConfig {
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything except the presence of input images.
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::Config("sigma list is empty".into()));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("sigma {s} must be finite and >= 0")));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.patch_side == 0 || self.stride == 0 {
            return Err(Error::Config(
                "patch_side and stride must be positive".into(),
            ));
        }
        self.solver.to_config()?;
        self.subspace.to_policy()?;
        self.nlm.to_config()?;
        Ok(())
    }

    /// Pipeline settings for one PSP run.
    pub fn psp_config(&self, seed: u64, sigma_hat: Option<f64>) -> Result<PspConfig> {
        Ok(PspConfig {
            patch_side: self.patch_side,
            stride: self.stride,
            k: self.k,
            dim_policy: self.subspace.to_policy()?,
            solver: self.solver.to_config()?,
            fit_scale: self.solver.fit_scale,
            sigma_hat,
            seed,
        })
    }

    /// Runs `method` on `noisy`, returning the image and stage timings in
    /// seconds.
    pub fn denoise(
        &self,
        noisy: &Image,
        method: Method,
        seed: u64,
        sigma_hat: f64,
    ) -> Result<(Image, Vec<(&'static str, f64)>)> {
        match method {
            Method::Nlm => {
                let t = Instant::now();
                let out = nlm_denoise(noisy, &self.nlm.to_config()?, sigma_hat)?;
                Ok((out, vec![("nlm", t.elapsed().as_secs_f64())]))
            }
            Method::Psp(m) => {
                let out = psp_denoise_image(noisy, m, &self.psp_config(seed, Some(sigma_hat))?)?;
                let timings = out
                    .timings
                    .stages()
                    .iter()
                    .map(|&(name, d)| (name, d.as_secs_f64()))
                    .collect();
                Ok((out.image, timings))
            }
        }
    }
}

/// Short identifier of an input image: its file stem.
pub fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub image: String,
    pub method: Method,
    pub sigma: f64,
    pub sigma_hat: f64,
    pub psnr_noisy: f64,
    /// `None` when the cell failed; `error` then says why.
    pub psnr_denoised: Option<f64>,
    pub error: Option<String>,
    /// `(stage, seconds)`.
    pub timings: Vec<(&'static str, f64)>,
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn write_results_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "image",
        "method",
        "sigma",
        "sigma_hat",
        "psnr_noisy",
        "psnr_denoised",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.image.clone(),
            r.method.name().into(),
            r.sigma.to_string(),
            format!("{:.6}", r.sigma_hat),
            fmt_db(r.psnr_noisy),
            r.psnr_denoised.map(fmt_db).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean denoised PSNR per `(σ, method)`, σ in first-seen order.
pub fn summarize(rows: &[ResultRow], methods: &[Method]) -> Vec<(f64, Vec<Option<f64>>)> {
    let mut sigmas: Vec<f64> = Vec::new();
    for r in rows {
        if !sigmas.contains(&r.sigma) {
            sigmas.push(r.sigma);
        }
    }
    sigmas
        .into_iter()
        .map(|s| {
            let means = methods
                .iter()
                .map(|&m| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.sigma == s && r.method == m)
                        .filter_map(|r| r.psnr_denoised)
                        .collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect();
            (s, means)
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[ResultRow], methods: &[Method]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sigma".to_string()];
    header.extend(methods.iter().map(|m| m.name().to_string()));
    w.write_record(&header)?;
    for (sigma, means) in summarize(rows, methods) {
        let mut rec = vec![sigma.to_string()];
        rec.extend(means.into_iter().map(|m| m.map(fmt_db).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image", "method", "sigma", "stage", "seconds"])?;
    for r in rows {
        for &(stage, secs) in &r.timings {
            w.write_record([
                r.image.clone(),
                r.method.name().into(),
                r.sigma.to_string(),
                stage.into(),
                format!("{secs:.6}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// All rows of a comparison, in grid order (image, σ, method).
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<ResultRow>,
}

impl CompareReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

struct NoisyInput {
    image: String,
    sigma: f64,
    clean: Image,
    noisy: Image,
    sigma_hat: f64,
    psnr_noisy: f64,
}

/// Runs the whole grid and writes `results.csv`, `summary.csv` and
/// `timings.csv` (plus images when requested) into the output directory.
///
/// Individual cell failures are recorded in their rows; only I/O and
/// configuration problems abort the run.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareReport> {
    cfg.validate()?;
    if cfg.images.is_empty() {
        return Err(Error::Config("no input images".into()));
    }
    let mut seen = HashSet::new();
    let mut inputs = Vec::new();
    for path in &cfg.images {
        let id = image_id(path);
        if !seen.insert(id.clone()) {
            return Err(Error::Config(format!("two inputs share the name '{id}'")));
        }
        let clean = Image::read_pgm(path)?;
        for &sigma in &cfg.sigmas {
            let noisy = corrupt(
                &clean,
                NoiseSpec {
                    sigma,
                    seed: derive_seed(cfg.seed, &id, sigma, "noise"),
                },
            );
            let sigma_hat = estimate_noise_sigma(&noisy);
            let psnr_noisy = psnr(&clean, &noisy)?;
            inputs.push(NoisyInput {
                image: id.clone(),
                sigma,
                clean: clean.clone(),
                noisy,
                sigma_hat,
                psnr_noisy,
            });
        }
    }
    let cells: Vec<(usize, Method)> = (0..inputs.len())
        .flat_map(|i| cfg.methods.iter().map(move |&m| (i, m)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<(ResultRow, Option<Image>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, method)| {
                let input = &inputs[i];
                let seed = derive_seed(cfg.seed, &input.image, input.sigma, method.name());
                let mut row = ResultRow {
                    image: input.image.clone(),
                    method,
                    sigma: input.sigma,
                    sigma_hat: input.sigma_hat,
                    psnr_noisy: input.psnr_noisy,
                    psnr_denoised: None,
                    error: None,
                    timings: Vec::new(),
                };
                match cfg
                    .denoise(&input.noisy, method, seed, input.sigma_hat)
                    .and_then(|(img, t)| Ok((psnr(&input.clean, &img)?, img, t)))
                {
                    Ok((p, img, t)) => {
                        log::info!(
                            "{} sigma={} {}: {:.2} dB",
                            input.image,
                            input.sigma,
                            method,
                            p
                        );
                        row.psnr_denoised = Some(p);
                        row.timings = t;
                        (row, Some(img))
                    }
                    Err(e) => {
                        log::error!("{} sigma={} {}: {e}", input.image, input.sigma, method);
                        row.error = Some(e.to_string());
                        (row, None)
                    }
                }
            })
            .collect()
    });

    let out_dir = cfg.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    if cfg.save_images {
        let dir = out_dir.join("images");
        std::fs::create_dir_all(&dir)?;
        for input in &inputs {
            input
                .noisy
                .write_pgm(dir.join(format!("{}_s{}_noisy.pgm", input.image, input.sigma)))?;
        }
        for (row, img) in &results {
            if let Some(img) = img {
                img.write_pgm(
                    dir.join(format!("{}_s{}_{}.pgm", row.image, row.sigma, row.method)),
                )?;
            }
        }
    }
    let rows: Vec<ResultRow> = results.into_iter().map(|(r, _)| r).collect();
    let create = |name: &str| std::fs::File::create(out_dir.join(name));
    write_results_csv(create("results.csv")?, &rows)?;
    write_summary_csv(create("summary.csv")?, &rows, &cfg.methods)?;
    write_timings_csv(create("timings.csv")?, &rows)?;
    Ok(CompareReport { rows })
}

/// Upscaling factor of montage patches.
pub const MONTAGE_SCALE: usize = 4;
/// Separator width between montage tiles, in output pixels.
pub const MONTAGE_GAP: usize = 2;
/// Patches shown per cluster.
pub const MONTAGE_SLOTS: usize = 4;
const SEPARATOR: f64 = 255.0;

/// Up to [`MONTAGE_SLOTS`] members of cluster `label`, drawn without
/// replacement by a ChaCha8 generator on stream `label`.
pub fn sample_members(clustering: &Clustering, label: usize, seed: u64) -> Vec<usize> {
    let members = clustering.members(label);
    let take = members.len().min(MONTAGE_SLOTS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label as u64);
    rand::seq::index::sample(&mut rng, members.len(), take)
        .into_iter()
        .map(|i| members[i])
        .collect()
}

/// Patches side by side, each upscaled by [`MONTAGE_SCALE`] with
/// nearest-neighbour sampling and separated by white bars.
pub fn patch_strip(patches: &PatchMatrix, indices: &[usize], slots: usize) -> Image {
    let side = patches.grid.patch_side();
    let tile = side * MONTAGE_SCALE;
    let slots = slots.max(indices.len()).max(1);
    let width = slots * tile + (slots - 1) * MONTAGE_GAP;
    let mut img = Image::filled(width, tile, SEPARATOR);
    for (slot, &j) in indices.iter().enumerate() {
        let x0 = slot * (tile + MONTAGE_GAP);
        for r in 0..tile {
            for c in 0..tile {
                let v = patches.data[((r / MONTAGE_SCALE) * side + c / MONTAGE_SCALE, j)];
                img.set(r, x0 + c, v);
            }
        }
    }
    img
}

/// One montage per non-empty cluster: `(label, size, image)`.
pub fn cluster_montages(
    patches: &PatchMatrix,
    clustering: &Clustering,
    seed: u64,
) -> Vec<(usize, usize, Image)> {
    (0..clustering.k)
        .filter(|&l| clustering.sizes[l] > 0)
        .map(|l| {
            let picks = sample_members(clustering, l, seed);
            (
                l,
                clustering.sizes[l],
                patch_strip(patches, &picks, picks.len()),
            )
        })
        .collect()
}

/// All cluster strips stacked into one sheet, one row per non-empty
/// cluster, rows separated by white bars.
pub fn montage_sheet(patches: &PatchMatrix, clustering: &Clustering, seed: u64) -> Image {
    let strips: Vec<Image> = (0..clustering.k)
        .filter(|&l| clustering.sizes[l] > 0)
        .map(|l| patch_strip(patches, &sample_members(clustering, l, seed), MONTAGE_SLOTS))
        .collect();
    let width = strips.first().map_or(1, Image::width);
    let tile = strips.first().map_or(1, Image::height);
    let height = strips.len() * tile + strips.len().saturating_sub(1) * MONTAGE_GAP;
    let mut sheet = Image::filled(width, height.max(1), SEPARATOR);
    for (k, strip) in strips.iter().enumerate() {
        let y0 = k * (tile + MONTAGE_GAP);
        for r in 0..strip.height() {
            for c in 0..strip.width() {
                sheet.set(y0 + r, c, strip.get(r, c));
            }
        }
    }
    sheet
}
