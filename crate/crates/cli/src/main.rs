use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use psp_core::cluster::write_labels_csv;
use psp_core::experiment::{
    cluster_montages, derive_seed, image_id, montage_sheet, run_compare, write_results_csv,
    ExperimentConfig, Method, ResultRow,
};
use psp_core::metrics::psnr;
use psp_core::noise::{corrupt, estimate_noise_sigma, NoiseSpec};
use psp_core::psp::{cluster_image_patches, fit_subspaces};
use psp_core::Image;

/// Affine subspace clustering of image patches and patch subspace
/// projection denoising.
#[derive(Parser)]
#[command(name = "psp", version)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add seeded Gaussian noise and clip to [0, 255].
    Corrupt {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the wavelet noise estimate of an image.
    EstimateSigma {
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Cluster the patches of an image; write labels and montages.
    Cluster {
        #[arg(short, long)]
        input: PathBuf,
        /// Self-representation: nnc, nn or bpdn.
        #[arg(short, long, default_value = "nnc")]
        method: String,
        #[command(flatten)]
        common: Common,
    },
    /// Denoise one image with one or more methods.
    Denoise {
        #[arg(short, long)]
        input: PathBuf,
        /// psp-nnc, psp-nn, psp-bpdn or nlm; repeat or separate by commas.
        #[arg(short, long, value_delimiter = ',', default_value = "psp-nnc")]
        method: Vec<String>,
        /// Output PGM; a directory when several methods are given.
        #[arg(short, long)]
        output: PathBuf,
        /// Clean image for PSNR reporting.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// True noise level, recorded in the results file.
        #[arg(long)]
        sigma: Option<f64>,
        /// Use this noise level instead of estimating it.
        #[arg(long)]
        sigma_hat: Option<f64>,
        /// Write one results row per method (needs --reference).
        #[arg(long)]
        results: Option<PathBuf>,
        /// Dump the fitted subspaces of each PSP method as CSV here.
        #[arg(long)]
        model_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the image x sigma x method grid and write CSV summaries.
    Compare {
        /// Input image; repeatable.
        #[arg(long = "image")]
        images: Vec<PathBuf>,
        /// Noise level; repeat or separate by commas.
        #[arg(long = "sigma", value_delimiter = ',')]
        sigmas: Vec<f64>,
        /// Method; repeat or separate by commas.
        #[arg(long = "method", value_delimiter = ',')]
        methods: Vec<String>,
        /// Concurrent grid cells (0: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Also write noisy and denoised images.
        #[arg(long)]
        save_images: bool,
        #[command(flatten)]
        common: Common,
    },
}

/// Settings shared by the pipeline commands; flags override the config file.
#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Artifact directory [default: config value, then $PSP_OUTPUT_DIR, then psp-output].
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patch_side: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// NNC l1 budget.
    #[arg(long)]
    tau: Option<f64>,
    /// BPDN bound multiplier on sigma_hat * sqrt(d).
    #[arg(long)]
    fit_scale: Option<f64>,
    /// NN lasso engine: homotopy or cd.
    #[arg(long)]
    nn_engine: Option<String>,
    /// Subspace dimension policy: energy or fixed.
    #[arg(long)]
    dim_policy: Option<String>,
    /// Energy threshold of the energy policy.
    #[arg(long)]
    theta: Option<f64>,
    /// Dimension cap of the energy policy.
    #[arg(long)]
    cap: Option<usize>,
    /// Dimension of the fixed policy.
    #[arg(long)]
    rank: Option<usize>,
    /// NLM filter constant k in h = k * sigma_hat.
    #[arg(long)]
    nlm_k: Option<f64>,
    #[arg(long)]
    nlm_patch: Option<usize>,
    #[arg(long)]
    nlm_window: Option<usize>,
}

const OUTPUT_DIR_ENV: &str = "PSP_OUTPUT_DIR";

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = Some(dir.clone());
        } else if cfg.output_dir.is_none() {
            cfg.output_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
        }
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag.clone() {
                    cfg.$($field).+ = v;
                }
            };
        }
        set!(k => k);
        set!(seed => seed);
        set!(patch_side => patch_side);
        set!(stride => stride);
        set!(tau => solver.tau);
        set!(fit_scale => solver.fit_scale);
        set!(nn_engine => solver.nn_engine);
        set!(dim_policy => subspace.policy);
        set!(theta => subspace.theta);
        set!(cap => subspace.cap);
        set!(rank => subspace.rank);
        set!(nlm_k => nlm.filter_k);
        set!(nlm_patch => nlm.patch_size);
        set!(nlm_window => nlm.search_window);
        Ok(cfg)
    }
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names
        .iter()
        .map(|m| m.parse::<Method>().map_err(Into::into))
        .collect()
}

fn read(path: &Path) -> Result<Image> {
    Image::read_pgm(path).with_context(|| format!("reading {}", path.display()))
}

fn write(img: &Image, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    img.write_pgm(path)
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_corrupt(input: &Path, sigma: f64, seed: u64, output: &Path) -> Result<()> {
    if !(sigma >= 0.0) {
        bail!("sigma must be >= 0");
    }
    let noisy = corrupt(&read(input)?, NoiseSpec { sigma, seed });
    write(&noisy, output)?;
    println!("sigma_hat {:.4}", estimate_noise_sigma(&noisy));
    Ok(())
}

fn cmd_cluster(input: &Path, method: &str, common: &Common) -> Result<()> {
    let cfg = common.load()?;
    cfg.validate()?;
    let method = match method.parse::<Method>()? {
        Method::Psp(m) => m,
        Method::Nlm => bail!("nlm does not cluster patches"),
    };
    let img = read(input)?;
    let clusters = cluster_image_patches(&img, method, &cfg.psp_config(cfg.seed, None)?)?;
    let dir = cfg.output_dir();
    fs::create_dir_all(dir.join("montages"))?;
    write_labels_csv(
        File::create(dir.join("labels.csv"))?,
        &clusters.clustering,
        &clusters.patches.grid,
    )?;
    let montage_seed = derive_seed(cfg.seed, &image_id(input), 0.0, "montage");
    for (label, size, strip) in
        cluster_montages(&clusters.patches, &clusters.clustering, montage_seed)
    {
        write(
            &strip,
            &dir.join("montages")
                .join(format!("cluster_{label:02}_n{size}.pgm")),
        )?;
    }
    write(
        &montage_sheet(&clusters.patches, &clusters.clustering, montage_seed),
        &dir.join("montage.pgm"),
    )?;
    println!("sigma_hat {:.4}", clusters.sigma_hat);
    for (label, size) in clusters.clustering.sizes.iter().enumerate() {
        println!("cluster {label:2}: n = {size}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_denoise(
    input: &Path,
    methods: &[String],
    output: &Path,
    reference: Option<&Path>,
    sigma: Option<f64>,
    sigma_hat: Option<f64>,
    results: Option<&Path>,
    model_dir: Option<&Path>,
    common: &Common,
) -> Result<()> {
    let cfg = common.load()?;
    cfg.validate()?;
    let methods = parse_methods(methods)?;
    if methods.is_empty() {
        bail!("no method given");
    }
    if results.is_some() && reference.is_none() {
        bail!("--results needs --reference");
    }
    let noisy = read(input)?;
    let clean = reference.map(read).transpose()?;
    let sigma_hat = sigma_hat.unwrap_or_else(|| estimate_noise_sigma(&noisy));
    let id = image_id(input);
    let psnr_noisy = clean.as_ref().map(|c| psnr(c, &noisy)).transpose()?;
    let mut rows = Vec::new();
    for &method in &methods {
        let seed = derive_seed(cfg.seed, &id, sigma.unwrap_or(0.0), method.name());
        let (out, timings) = cfg.denoise(&noisy, method, seed, sigma_hat)?;
        let path = if methods.len() == 1 {
            output.to_path_buf()
        } else {
            output.join(format!("{id}_{method}.pgm"))
        };
        write(&out, &path)?;
        let mut line = format!("{method}: wrote {}", path.display());
        if let (Some(c), Some(pn)) = (&clean, psnr_noisy) {
            let pd = psnr(c, &out)?;
            line += &format!(" (psnr {pd:.2} dB, noisy {pn:.2} dB)");
            rows.push(ResultRow {
                image: id.clone(),
                method,
                sigma: sigma.unwrap_or(f64::NAN),
                sigma_hat,
                psnr_noisy: pn,
                psnr_denoised: Some(pd),
                error: None,
                timings,
            });
        }
        println!("{line}");
        if let (Some(dir), Method::Psp(m)) = (model_dir, method) {
            // refit on the same clustering to expose the subspaces
            let psp_cfg = cfg.psp_config(seed, Some(sigma_hat))?;
            let clusters = cluster_image_patches(&noisy, m, &psp_cfg)?;
            let model = fit_subspaces(
                &clusters.patches.data,
                &clusters.clustering,
                psp_cfg.dim_policy,
            )?;
            fs::create_dir_all(dir)?;
            model.write_csv(File::create(dir.join(format!("{id}_{method}_model.csv")))?)?;
        }
    }
    println!("sigma_hat {sigma_hat:.4}");
    if let Some(path) = results {
        write_results_csv(File::create(path)?, &rows)?;
    }
    Ok(())
}

fn cmd_compare(
    images: &[PathBuf],
    sigmas: &[f64],
    methods: &[String],
    workers: Option<usize>,
    save_images: bool,
    common: &Common,
) -> Result<bool> {
    let mut cfg = common.load()?;
    if !images.is_empty() {
        cfg.images = images.to_vec();
    }
    if !sigmas.is_empty() {
        cfg.sigmas = sigmas.to_vec();
    }
    if !methods.is_empty() {
        cfg.methods = parse_methods(methods)?;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.save_images |= save_images;
    let report = run_compare(&cfg)?;
    for row in &report.rows {
        match (row.psnr_denoised, &row.error) {
            (Some(p), _) => println!(
                "{} sigma={} {}: {:.2} dB (noisy {:.2} dB)",
                row.image, row.sigma, row.method, p, row.psnr_noisy
            ),
            (None, Some(e)) => println!(
                "{} sigma={} {}: FAILED {e}",
                row.image, row.sigma, row.method
            ),
            (None, None) => unreachable!("a row has either a PSNR or an error"),
        }
    }
    println!("wrote {}", cfg.output_dir().display());
    let failed = report.failures();
    if failed > 0 {
        eprintln!("{failed} cell(s) failed");
    }
    Ok(failed == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Corrupt {
            input,
            sigma,
            seed,
            output,
        } => cmd_corrupt(&input, sigma, seed, &output).map(|_| true),
        Command::EstimateSigma { input } => {
            println!("{:.4}", estimate_noise_sigma(&read(&input)?));
            Ok(true)
        }
        Command::Cluster {
            input,
            method,
            common,
        } => cmd_cluster(&input, &method, &common).map(|_| true),
        Command::Denoise {
            input,
            method,
            output,
            reference,
            sigma,
            sigma_hat,
            results,
            model_dir,
            common,
        } => cmd_denoise(
            &input,
            &method,
            &output,
            reference.as_deref(),
            sigma,
            sigma_hat,
            results.as_deref(),
            model_dir.as_deref(),
            &common,
        )
        .map(|_| true),
        Command::Compare {
            images,
            sigmas,
            methods,
            workers,
            save_images,
            common,
        } => cmd_compare(&images, &sigmas, &methods, workers, save_images, &common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
