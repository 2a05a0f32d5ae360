use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specmeasure::gram::{delta_bound, from_precomputed};
use specmeasure::harness::{
    bench_series_vs_eigen, build_dataset, cross_validate_many, load_mnist_idx, render_table,
    select_per_class, CvConfig, CvReport, SamplingLaw,
};
use specmeasure::io::{dataset_digest, matrix_to_csv, read_cloud, read_precomputed, write_cache};
use specmeasure::kernels::{choose_delta, evaluate_centered, kernel_matrices};
use specmeasure::{evaluate, BaseKernel, Error, KernelConfig, KernelKind, PointCloud};

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "specmeasure", version, about = "Spectral kernels between weighted point clouds")]
struct Cli {
    /// Worker threads for pairwise kernels and cross-validation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel value between two clouds, or on a precomputed mixture Gram matrix.
    Kernel(KernelCmd),
    /// Kernel matrix over a set of clouds, written as a binary cache and CSV.
    Matrix(MatrixCmd),
    /// Cross-validated digit classification on MNIST pixel clouds.
    Classify(ClassifyCmd),
    /// Largest admissible series parameter for mixtures of `d` points.
    DeltaBound(DeltaBoundCmd),
    /// Timing of the series kernel against an eigendecomposition.
    Bench(BenchCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Tr,
    Igv,
    Series,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    Gaussian,
    Linear,
    Polynomial,
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Uniform,
    Intensity,
}

#[derive(Args)]
struct BaseFlags {
    /// Kernel between points.
    #[arg(long, value_enum, default_value = "gaussian")]
    base: BaseArg,
    /// Gaussian width.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long, default_value_t = 1.0)]
    offset: f64,
}

impl BaseFlags {
    fn base(&self) -> Result<BaseKernel, Error> {
        let k = match self.base {
            BaseArg::Gaussian => BaseKernel::Gaussian { sigma: self.sigma },
            BaseArg::Linear => BaseKernel::Linear,
            BaseArg::Polynomial => BaseKernel::Polynomial { degree: self.degree, offset: self.offset },
        };
        k.validate()?;
        Ok(k)
    }
}

#[derive(Args)]
struct KindFlags {
    /// Trace parameter of k_tr.
    #[arg(long, default_value_t = 0.1)]
    t: f64,
    /// Regularization of k_0.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Series parameter of k_M (default: chosen from the clouds when possible, else 1).
    #[arg(long)]
    delta: Option<f64>,
    /// Maximum number of series terms.
    #[arg(long, default_value_t = 64)]
    n_max: usize,
    /// Series stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    eps: f64,
}

impl KindFlags {
    fn kind(&self, arg: KindArg, fallback_delta: f64) -> KernelKind {
        match arg {
            KindArg::Tr => KernelKind::tr(self.t),
            KindArg::Igv => KernelKind::igv(self.eta),
            KindArg::Series => KernelKind::Series {
                delta: self.delta.unwrap_or(fallback_delta),
                n_max: self.n_max,
                eps: self.eps,
            },
        }
    }
}

#[derive(Args)]
struct KernelCmd {
    /// Cloud files (.json or .csv).
    #[arg(num_args = 0..=2)]
    clouds: Vec<PathBuf>,
    /// Precomputed Gram matrix of the joint support (CSV), instead of two clouds.
    #[arg(long, requires = "weights", conflicts_with = "clouds")]
    gram: Option<PathBuf>,
    /// Mixture weights matching --gram.
    #[arg(long, requires = "gram")]
    weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    kernel: KindArg,
    #[command(flatten)]
    kind: KindFlags,
    #[command(flatten)]
    base: BaseFlags,
}

#[derive(Args)]
struct MatrixCmd {
    /// Cloud files, or directories whose .json/.csv files are read in name order.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Binary cache path; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// CSV copy of the matrix (default: the cache path with a .csv extension).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum)]
    kernel: KindArg,
    /// Divide by the square roots of the diagonal.
    #[arg(long)]
    normalize: bool,
    /// Report the smallest eigenvalue of the kernel matrix.
    #[arg(long)]
    check_psd: bool,
    #[command(flatten)]
    kind: KindFlags,
    #[command(flatten)]
    base: BaseFlags,
}

#[derive(Args)]
struct ClassifyCmd {
    /// IDX image file.
    #[arg(long)]
    images: PathBuf,
    /// IDX label file.
    #[arg(long)]
    labels: PathBuf,
    /// Pixels sampled per image; repeat for several table rows.
    #[arg(long, default_values_t = [40])]
    samples: Vec<usize>,
    /// Images per digit (100 reproduces the full 1000-image protocol).
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, env = "SPECMEASURE_SEED", default_value_t = 0)]
    seed: u64,
    /// SVM regularization.
    #[arg(long = "C", default_value_t = 10.0)]
    c: f64,
    /// Kernels to compare; repeat for several columns (default: igv, tr, series).
    #[arg(long, value_enum)]
    kernel: Vec<KindArg>,
    #[arg(long)]
    normalize: bool,
    /// Pixel sampling law.
    #[arg(long, value_enum, default_value = "uniform")]
    law: LawArg,
    /// Ink threshold on intensities in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Write every report as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    kind: KindFlags,
    #[command(flatten)]
    base: BaseFlags,
}

#[derive(Args)]
struct DeltaBoundCmd {
    /// Number of points in the mixture.
    #[arg(long)]
    d: usize,
    /// Largest mixture weight.
    #[arg(long)]
    omega: f64,
}

#[derive(Args)]
struct BenchCmd {
    /// Mixture sizes.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 11)]
    trials: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, env = "SPECMEASURE_SEED", default_value_t = 0)]
    seed: u64,
    /// CSV output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Kernel(c) => cmd_kernel(c),
        Command::Matrix(c) => cmd_matrix(c),
        Command::Classify(c) => cmd_classify(c),
        Command::DeltaBound(c) => cmd_delta_bound(c),
        Command::Bench(c) => cmd_bench(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE })
        }
    }
}

/// Rounds to 12 significant digits.
fn sig12(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn cmd_kernel(c: KernelCmd) -> Result<(), Error> {
    let base = c.base.base()?;
    let value = match (&c.gram, &c.weights) {
        (Some(g), Some(w)) => {
            let (k, w) = read_precomputed(g, w)?;
            let centered = from_precomputed(k, &w)?;
            let kind = c.kind.kind(c.kernel, 1.0);
            evaluate_centered(&centered, &kind)?.value
        }
        _ => {
            let [a, b] = c.clouds.as_slice() else {
                return Err(Error::InvalidParameter("expected two cloud files or --gram/--weights".into()));
            };
            let (a, b) = (read_cloud(a)?, read_cloud(b)?);
            let delta = default_delta(&c.kind, &[a.clone(), b.clone()], &base);
            let config = KernelConfig::new(c.kind.kind(c.kernel, delta), base);
            evaluate(&a, &b, &config)?.value
        }
    };
    println!("{:?}", sig12(value));
    Ok(())
}

/// `--delta` if given, else the admissible value for these clouds, else 1.
fn default_delta(flags: &KindFlags, clouds: &[PointCloud<f64>], base: &BaseKernel) -> f64 {
    flags.delta.unwrap_or_else(|| choose_delta(clouds, base).unwrap_or(1.0))
}

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Error> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| matches!(f.extension().and_then(|e| e.to_str()), Some("json" | "csv")))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::InvalidParameter("no cloud files found".into()));
    }
    Ok(files)
}

fn cmd_matrix(c: MatrixCmd) -> Result<(), Error> {
    let base = c.base.base()?;
    let files = collect_inputs(&c.inputs)?;
    let clouds = files.iter().map(|f| read_cloud(f)).collect::<Result<Vec<_>, _>>()?;
    let kind = c.kind.kind(c.kernel, default_delta(&c.kind, &clouds, &base));
    let config = KernelConfig::new(kind, base).normalized(c.normalize);
    let km = kernel_matrices(&clouds, &base, &[kind], c.normalize)?.remove(0);
    write_cache(&c.out, &km.values, &config, &dataset_digest(&clouds))?;
    let csv_path = c.csv.unwrap_or_else(|| c.out.with_extension("csv"));
    matrix_to_csv(&km.values, std::fs::File::create(&csv_path)?)?;
    println!("{} clouds, {kind}", clouds.len());
    println!("cache: {}", c.out.display());
    println!("csv: {}", csv_path.display());
    if c.check_psd {
        let m = km.values.nrows();
        let min = km.values.clone().symmetric_eigenvalues().min();
        let threshold = -1e-8 * m as f64;
        let verdict = if min >= threshold { "ok" } else { "NOT PSD" };
        println!("min eigenvalue: {min:e} (threshold {threshold:e}) {verdict}");
    }
    Ok(())
}

fn cmd_classify(c: ClassifyCmd) -> Result<(), Error> {
    let base = c.base.base()?;
    if !(0.0..1.0).contains(&c.threshold) {
        return Err(Error::InvalidParameter(format!("threshold must lie in [0, 1), got {}", c.threshold)));
    }
    if c.samples.contains(&0) || c.per_class == 0 {
        return Err(Error::InvalidParameter("--samples and --per-class must be positive".into()));
    }
    let kinds: Vec<KernelKind> = if c.kernel.is_empty() {
        vec![KindArg::Igv, KindArg::Tr, KindArg::Series]
    } else {
        c.kernel.clone()
    }
    .into_iter()
    .map(|k| c.kind.kind(k, 1.0))
    .collect();
    for k in &kinds {
        k.validate()?;
    }
    let cv = CvConfig { folds: c.folds, repeats: c.repeats, c: c.c, seed: c.seed };
    let law = match c.law {
        LawArg::Uniform => SamplingLaw::Uniform,
        LawArg::Intensity => SamplingLaw::Intensity,
    };
    let data = load_mnist_idx(&c.images, &c.labels)?;
    let images = select_per_class(&data, c.per_class);
    eprintln!("{} images, {} per class", images.len(), c.per_class);

    let mut rows: Vec<(usize, Vec<CvReport>)> = Vec::new();
    for &m in &c.samples {
        let dataset = build_dataset(&images, m, c.threshold, law, c.seed)?;
        let reports = cross_validate_many(&dataset, &base, &kinds, c.normalize, &cv)?;
        eprintln!("samples {m}: kernels {:.1}s, total {:.1}s", reports[0].kernel_seconds, reports[0].seconds);
        rows.push((m, reports));
    }
    print!("{}", render_table(&rows));
    for (m, reports) in &rows {
        for r in reports {
            if let Some(h) = &r.terms_histogram {
                let total: usize = h.values().sum();
                let within: usize = h.range(..=30).map(|(_, n)| n).sum();
                let cells: Vec<String> = h.iter().map(|(k, n)| format!("{k}:{n}")).collect();
                println!(
                    "series terms at {m} samples: {:.2}% of {total} pairs with N <= 30; histogram {}",
                    100.0 * within as f64 / total as f64,
                    cells.join(" ")
                );
            }
        }
    }
    if let Some(path) = &c.json {
        let out: Vec<serde_json::Value> = rows
            .iter()
            .map(|(m, r)| serde_json::json!({ "samples": m, "reports": r }))
            .collect();
        std::fs::write(path, serde_json::to_string_pretty(&out)?)?;
    }
    Ok(())
}

fn cmd_delta_bound(c: DeltaBoundCmd) -> Result<(), Error> {
    if c.d == 0 || !(c.omega > 0.0 && c.omega <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need d >= 1 and 0 < omega <= 1 (got d = {}, omega = {})",
            c.d, c.omega
        )));
    }
    println!("{:?}", sig12(delta_bound(c.d, c.omega)));
    Ok(())
}

fn cmd_bench(c: BenchCmd) -> Result<(), Error> {
    let report = bench_series_vs_eigen(&c.sizes, c.trials, c.sigma, c.seed)?;
    match &c.out {
        Some(p) => report.write_csv(std::fs::File::create(Path::new(p))?)?,
        None => report.write_csv(std::io::stdout().lock())?,
    }
    for (d, r) in report.ratios() {
        eprintln!("d = {d}: median series/eigen = {r:.3}");
    }
    eprintln!("max |series - eigen| = {:e}", report.max_abs_diff);
    Ok(())
}
