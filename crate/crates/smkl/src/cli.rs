//! The `smkl` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smkl_core::conic::{SolveStatus, SolverSettings};
use smkl_core::fit::{fit, solve_combined, Init, SmklConfig, SmklResult, StopReason};
use smkl_core::kernel::{default_bank_specs, GramOptions, KernelBank, KernelSpec};
use smkl_core::linalg::dot;
use smkl_core::relax::{build, certify_gap, extract_warm_start, solve_relaxation, Instance, Pin, RelaxationLevel};

use crate::data::{load_csv, split_standardize, RawDataset, Schema, SplitDataset};
use crate::dump::save_program;
use crate::error::{Error, Result};
use crate::kernels::load_bank;
use crate::report::Report;
use crate::select::{cross_validate, evaluate, write_cv_log, CvGrid, EvalReport};

#[derive(Debug, Parser)]
#[command(name = "smkl", version, about = "Sparse multiple kernel learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one configuration and evaluate it on the held-out split.
    Train(TrainArgs),
    /// Lower-bound the objective with convex relaxations.
    Certify(CertifyArgs),
    /// Grid search by k-fold cross-validation, refit, evaluate.
    Cv(CvArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Random,
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelName {
    SocBasis,
    SocRand,
    #[value(name = "sdp-3x3")]
    Sdp3x3,
    SdpFull,
    SocpDiag,
}

impl LevelName {
    fn level(self, rand_vectors: usize, seed: u64) -> RelaxationLevel {
        match self {
            LevelName::SocBasis => RelaxationLevel::SocBasis,
            LevelName::SocRand => RelaxationLevel::SocRandomized { num_random: rand_vectors, seed },
            LevelName::Sdp3x3 => RelaxationLevel::Sdp3x3,
            LevelName::SdpFull => RelaxationLevel::SdpFull,
            LevelName::SocpDiag => RelaxationLevel::SocpDiagonal,
        }
    }

    fn label(self) -> &'static str {
        match self {
            LevelName::SocBasis => "soc-basis",
            LevelName::SocRand => "soc-rand",
            LevelName::Sdp3x3 => "sdp-3x3",
            LevelName::SdpFull => "sdp-full",
            LevelName::SocpDiag => "socp-diag",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, env = "SMKL_DATA")]
    pub data: PathBuf,
    /// TOML column schema. Without one the last column is the label.
    #[arg(long, env = "SMKL_SCHEMA")]
    pub schema: Option<PathBuf>,
    /// TOML kernel bank. Defaults to the built-in ten-kernel bank.
    #[arg(long, env = "SMKL_KERNELS")]
    pub kernels: Option<PathBuf>,
    /// Seed for the split, folds, random starts and random cuts.
    #[arg(long, env = "SMKL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "SMKL_TRAIN_FRAC", default_value_t = 0.8)]
    pub train_frac: f64,
    /// Report destination. The report always goes to stdout as well.
    #[arg(long, env = "SMKL_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, env = "SMKL_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long = "C", env = "SMKL_C", default_value_t = 10.0)]
    pub c: f64,
    #[arg(long, env = "SMKL_LAMBDA", default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, env = "SMKL_K0", default_value_t = 1)]
    pub k0: usize,
    #[arg(long, env = "SMKL_EPS", default_value_t = 1e-6)]
    pub eps: f64,
    /// Sweeps without progress before stopping.
    #[arg(long, env = "SMKL_PATIENCE", default_value_t = 3)]
    pub patience: usize,
    #[arg(long, env = "SMKL_MAX_ITER", default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, env = "SMKL_INIT", value_enum, default_value_t = InitKind::Random)]
    pub init: InitKind,
}

#[derive(Debug, Clone, Args)]
pub struct RelaxArgs {
    /// Relaxation levels, comma separated.
    #[arg(long, env = "SMKL_RELAX", value_enum, value_delimiter = ',')]
    pub relax: Vec<LevelName>,
    #[arg(long, env = "SMKL_RAND_VECTORS", default_value_t = RelaxationLevel::DEFAULT_RANDOM_VECTORS)]
    pub rand_vectors: usize,
    /// Conic programs larger than this are reported as unavailable.
    #[arg(long, env = "SMKL_MEM_BUDGET_MB", default_value_t = 2048)]
    pub mem_budget_mb: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub relax: RelaxArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub relax: RelaxArgs,
    /// Report of an earlier `train` or `cv` run to certify instead of fitting.
    #[arg(long, env = "SMKL_MODEL")]
    pub model: Option<PathBuf>,
    /// Directory that receives each relaxation as a conic program dump.
    #[arg(long, env = "SMKL_DUMP")]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub relax: RelaxArgs,
    /// `standard`, `single` (the --C/--lambda/--k0 point) or a TOML grid file.
    #[arg(long, env = "SMKL_GRID", default_value = "standard")]
    pub grid: String,
    #[arg(long, env = "SMKL_FOLDS", default_value_t = 10)]
    pub folds: usize,
    /// Per-grid-point accuracy log (CSV).
    #[arg(long, env = "SMKL_CV_LOG")]
    pub cv_log: Option<PathBuf>,
}

/// Parses `args`, runs the command and maps failures to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(report) => {
            print!("{}", report.render());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("smkl: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Cv(a) => cmd_cv(a),
    }
}

/// Wall-clock stages, kept apart from the deterministic fields.
#[derive(Default)]
struct Clock {
    start: Option<Instant>,
    stages: Vec<(String, f64)>,
}

impl Clock {
    fn new() -> Self {
        Clock { start: Some(Instant::now()), stages: Vec::new() }
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((name.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    fn seconds(&self, name: &str) -> f64 {
        self.stages.iter().filter(|s| s.0 == name).map(|s| s.1).sum()
    }

    fn field(&self) -> String {
        let mut parts: Vec<String> = self.stages.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        if let Some(s) = self.start {
            parts.push(format!("total={:.6}", s.elapsed().as_secs_f64()));
        }
        parts.join(" ")
    }
}

struct Loaded {
    raw: RawDataset,
    split: SplitDataset,
    specs: Vec<KernelSpec>,
    bank: KernelBank,
}

fn last_header_column(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    let h = r.headers().map_err(|e| Error::format(path, e.to_string()))?;
    h.iter().next_back().map(str::to_string).ok_or_else(|| Error::format(path, "empty header"))
}

fn load(a: &DataArgs, clock: &mut Clock) -> Result<Loaded> {
    clock.time("load", || {
        let schema = match &a.schema {
            Some(p) => Schema::load(p)?,
            None => Schema::with_label(&last_header_column(&a.data)?),
        };
        let specs = match &a.kernels {
            Some(p) => load_bank(p)?,
            None => default_bank_specs(),
        };
        let raw = load_csv(&a.data, &schema)?;
        let split = split_standardize(&raw, a.seed, a.train_frac)?;
        Ok::<_, Error>((raw, split, specs))
    })
    .and_then(|(raw, split, specs)| {
        let bank = clock.time("kernels", || KernelBank::compute(&specs, &split.train.x, &GramOptions::default()))?;
        Ok(Loaded { raw, split, specs, bank })
    })
}

fn check_fit_args(f: &FitArgs, q: usize) -> Result<()> {
    let bad = |m: String| Err(Error::Usage(m));
    if !(f.c > 0.0 && f.c.is_finite()) {
        return bad(format!("--C must be positive, got {}", f.c));
    }
    if !(f.lambda > 0.0 && f.lambda.is_finite()) {
        return bad(format!("--lambda must be positive, got {}", f.lambda));
    }
    if f.k0 < 1 || f.k0 > q {
        return bad(format!("--k0 must lie in 1..={q}, got {}", f.k0));
    }
    if !(f.eps >= 0.0) || f.patience == 0 || f.max_iter == 0 {
        return bad("--eps must be nonnegative, --patience and --max-iter positive".into());
    }
    Ok(())
}

fn config(f: &FitArgs, seed: u64) -> SmklConfig {
    let mut cfg = SmklConfig::new(f.c, f.lambda, f.k0);
    cfg.eps = f.eps;
    cfg.patience = f.patience;
    cfg.max_iter = f.max_iter;
    cfg.init = Init::KSparseRandom { seed };
    cfg
}

fn settings(r: &RelaxArgs) -> SolverSettings {
    SolverSettings { memory_budget: r.mem_budget_mb.saturating_mul(1 << 20), ..SolverSettings::default() }
}

fn header(command: &str, a: &DataArgs, ld: &Loaded) -> Report {
    let mut r = Report::new();
    r.set("command", command);
    r.set("tool_version", env!("CARGO_PKG_VERSION"));
    r.set("dataset", a.data.display().to_string());
    r.set("schema", a.schema.as_ref().map_or("none".into(), |p| p.display().to_string()));
    r.set("kernels", a.kernels.as_ref().map_or("default".into(), |p| p.display().to_string()));
    r.set("kernel_specs", ld.specs.iter().map(|s| s.describe()).collect::<Vec<_>>().join(";"));
    r.set_int("n_train", ld.split.train.y.len());
    r.set_int("n_test", ld.split.test.y.len());
    r.set("seed", a.seed.to_string());
    for (i, w) in ld.raw.warnings.iter().enumerate() {
        r.set(&format!("warning.{}", i + 1), w.as_str());
    }
    r
}

fn push_warning(r: &mut Report, msg: &str) {
    let n = r.entries().iter().filter(|(k, _)| k.starts_with("warning.")).count();
    r.set(&format!("warning.{}", n + 1), msg);
}

fn record_model(r: &mut Report, cfg: &SmklConfig, model: &SmklResult, eval: &EvalReport) {
    r.set_real("C", cfg.c);
    r.set_real("lambda", cfg.lambda);
    r.set_int("k0", cfg.k0);
    r.set_real("eps", cfg.eps);
    r.set_int("patience", cfg.patience);
    r.set_int("max_iter", cfg.max_iter);
    r.set_reals("beta", &model.beta);
    let support: Vec<String> = (0..model.beta.len()).filter(|&i| model.beta[i] > 0.0).map(|i| i.to_string()).collect();
    r.set("support", support.join(","));
    r.set_reals("incumbent_beta", &model.incumbent_beta);
    r.set_real("objective_best", model.best_objective);
    r.set_real("objective_upper", model.upper_objective);
    r.set_int("iterations", model.iterations_run);
    r.set(
        "stop_reason",
        match model.stop_reason {
            StopReason::Stalled => "stalled",
            StopReason::MaxIter => "max_iter",
        },
    );
    r.set_reals("trace_objective", &model.trace.iter().map(|t| t.objective).collect::<Vec<_>>());
    r.set_real("accuracy", eval.accuracy);
    r.set_int("nnz_beta", eval.nnz_beta);
}

/// Starting weights from a relaxation, or `None` when it cannot be solved.
fn warm_start(ld: &Loaded, cfg: &SmklConfig, relax: &RelaxArgs, seed: u64) -> Result<(Option<Vec<f64>>, String)> {
    let name = relax.relax.first().copied().unwrap_or(LevelName::SdpFull);
    let inst = Instance { bank: &ld.bank, y: &ld.split.train.y, c: cfg.c, lambda: cfg.lambda, k0: cfg.k0 };
    match solve_relaxation(&inst, name.level(relax.rand_vectors, seed), &settings(relax)) {
        Ok(out) => Ok((Some(extract_warm_start(&out.z, &out.beta, cfg.k0)?), format!("warm:{}", name.label()))),
        Err(smkl_core::Error::Capacity(m)) => Ok((None, format!("random (warm start via {} unavailable: {m})", name.label()))),
        Err(e) => Err(e.into()),
    }
}

/// Fits with the requested initialization and evaluates on the test split.
fn fit_and_evaluate(
    ld: &Loaded,
    mut cfg: SmklConfig,
    f: &FitArgs,
    relax: &RelaxArgs,
    seed: u64,
    r: &mut Report,
    clock: &mut Clock,
) -> Result<(SmklConfig, SmklResult, EvalReport)> {
    let mut init_name = "random".to_string();
    if f.init == InitKind::Warm {
        let (beta0, name) = clock.time("warm_start", || warm_start(ld, &cfg, relax, seed))?;
        match beta0 {
            Some(b) => cfg.init = Init::WarmStart(b),
            None => push_warning(r, &name),
        }
        init_name = name.split(' ').next().unwrap_or("random").to_string();
    }
    r.set("init", init_name);
    let model = clock.time("fit", || fit(&ld.bank, &ld.split.train.y, &cfg))?;
    let eval = clock.time("evaluate", || evaluate(&model, &ld.specs, &ld.split, &cfg, 0.0))?;
    let eval = EvalReport { train_time: clock.seconds("fit") + clock.seconds("warm_start"), ..eval };
    record_model(r, &cfg, &model, &eval);
    Ok((cfg, model, eval))
}

fn finish(mut r: Report, clock: &Clock, out: Option<&Path>) -> Result<Report> {
    r.set("wall_times", clock.field());
    r.validate()?;
    if let Some(p) = out {
        r.write(p)?;
    }
    Ok(r)
}

pub fn cmd_train(a: &TrainArgs) -> Result<Report> {
    let mut clock = Clock::new();
    let ld = load(&a.data, &mut clock)?;
    check_fit_args(&a.fit, ld.specs.len())?;
    let mut r = header("train", &a.data, &ld);
    let cfg = config(&a.fit, a.data.seed);
    fit_and_evaluate(&ld, cfg, &a.fit, &a.relax, a.data.seed, &mut r, &mut clock)?;
    finish(r, &clock, a.data.out.as_deref())
}

fn relaxation_status(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "ok",
        SolveStatus::MaxIter => "maxiter",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
    }
}

pub fn cmd_certify(a: &CertifyArgs) -> Result<Report> {
    let mut clock = Clock::new();
    let ld = load(&a.data, &mut clock)?;
    let mut r = header("certify", &a.data, &ld);
    let seed = a.data.seed;

    let (cfg, upper) = match &a.model {
        Some(path) => {
            let m = Report::load(path)?;
            let mut cfg = config(&a.fit, seed);
            cfg.c = m.real("C")?;
            cfg.lambda = m.real("lambda")?;
            cfg.k0 = m.int("k0")?;
            let beta = m.reals("incumbent_beta")?;
            if beta.len() != ld.bank.len() {
                return Err(Error::format(path, format!("model has {} weights, bank has {}", beta.len(), ld.bank.len())));
            }
            let upper = clock.time("fit", || solve_combined(&ld.bank, &ld.split.train.y, &beta, &cfg))?.objective
                + cfg.lambda * dot(&beta, &beta);
            r.set_real("C", cfg.c);
            r.set_real("lambda", cfg.lambda);
            r.set_int("k0", cfg.k0);
            r.set_reals("incumbent_beta", &beta);
            r.set_real("objective_upper", upper);
            (cfg, upper)
        }
        None => {
            check_fit_args(&a.fit, ld.specs.len())?;
            let cfg = config(&a.fit, seed);
            let (cfg, model, _) = fit_and_evaluate(&ld, cfg, &a.fit, &a.relax, seed, &mut r, &mut clock)?;
            (cfg, model.upper_objective)
        }
    };

    let names = if a.relax.relax.is_empty() {
        vec![LevelName::SocBasis, LevelName::Sdp3x3, LevelName::SdpFull]
    } else {
        a.relax.relax.clone()
    };
    let inst = Instance { bank: &ld.bank, y: &ld.split.train.y, c: cfg.c, lambda: cfg.lambda, k0: cfg.k0 };
    let solver = settings(&a.relax);
    if let Some(dir) = &a.dump {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    r.set("cert.levels", names.iter().map(|n| n.label()).collect::<Vec<_>>().join(","));
    r.set_int("rand_vectors", a.relax.rand_vectors);
    r.set_real("cert.upper_bound", upper);
    let mut best_lower = f64::NEG_INFINITY;
    for name in &names {
        let key = |f: &str| format!("cert.{}.{f}", name.label());
        let level = name.level(a.relax.rand_vectors, seed);
        if let Some(dir) = &a.dump {
            if let Ok((prog, _)) = build(&inst, level, &Pin::Free) {
                save_program(&prog, &dir.join(format!("{}.conic", name.label())))?;
            }
        }
        let outcome = clock.time(&format!("cert.{}", name.label()), || solve_relaxation(&inst, level, &solver));
        match outcome {
            Ok(out) => {
                let status = relaxation_status(out.status);
                r.set(&key("status"), status);
                r.set_real(&key("lower_bound"), out.lower_bound);
                r.set_real(&key("primal_residual"), out.primal_residual);
                r.set_real(&key("dual_residual"), out.dual_residual);
                r.set_int(&key("iterations"), out.iterations);
                if status == "ok" {
                    let gap = certify_gap(upper, out.lower_bound)?;
                    r.set_real(&key("gap_over_upper"), gap.gap_over_upper);
                    r.set_real(&key("gap_over_lower"), gap.gap_over_lower);
                    best_lower = best_lower.max(out.lower_bound);
                }
            }
            Err(smkl_core::Error::Capacity(m)) => {
                r.set(&key("status"), "unavailable");
                r.set(&key("reason"), m);
            }
            Err(smkl_core::Error::InvalidParameter(m)) if *name == LevelName::SocpDiag => {
                r.set(&key("status"), "inapplicable");
                r.set(&key("reason"), m);
            }
            Err(e) => return Err(e.into()),
        }
    }
    r.set("cert.globally_optimal", "false");
    if best_lower.is_finite() {
        let gap = certify_gap(upper, best_lower)?;
        r.set_real("cert.best_lower_bound", best_lower);
        r.set_real("cert.gap_over_upper", gap.gap_over_upper);
        r.set_real("cert.gap_over_lower", gap.gap_over_lower);
        r.set("cert.globally_optimal", gap.certified_optimal.to_string());
    }
    finish(r, &clock, a.data.out.as_deref())
}

pub fn cmd_cv(a: &CvArgs) -> Result<Report> {
    let mut clock = Clock::new();
    let ld = load(&a.data, &mut clock)?;
    let mut r = header("cv", &a.data, &ld);
    let seed = a.data.seed;
    let grid = match a.grid.as_str() {
        "standard" => CvGrid { folds: a.folds, ..CvGrid::standard() },
        "single" => CvGrid::single(a.fit.c, a.fit.lambda, a.fit.k0, a.folds),
        path => CvGrid::load(Path::new(path))?,
    };
    let base = config(&a.fit, seed);
    let cv = clock.time("cv", || cross_validate(&ld.split.train, &ld.specs, &grid, &base, seed, a.data.threads))?;
    if let Some(p) = &a.cv_log {
        write_cv_log(p, &cv)?;
        r.set("cv.log", p.display().to_string());
    }
    for w in &cv.warnings {
        push_warning(&mut r, w);
    }
    let sel = cv.selected();
    r.set_int("cv.folds", grid.folds);
    r.set_int("cv.points", cv.points.len());
    r.set_int("cv.selected", cv.best);
    r.set_real("cv.best_mean_accuracy", sel.mean_accuracy);
    let mut cfg = base;
    cfg.c = sel.c;
    cfg.lambda = sel.lambda;
    cfg.k0 = sel.k0;
    fit_and_evaluate(&ld, cfg, &a.fit, &a.relax, seed, &mut r, &mut clock)?;
    finish(r, &clock, a.data.out.as_deref())
}
