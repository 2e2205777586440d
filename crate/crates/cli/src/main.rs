use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use xmc::harness::{self, DiagOptions, ExperimentConfig, RankRule};
use xmc::io;
use xmc::observation::{observe, Noise, QuotaPreset, SamplingPlan};
use xmc::solver::svt::svt_baseline;
use xmc::solver::{hazan_cmc, solve_noise_free, SolverConfig};
use xmc::{CollectiveSchema, FactorSet};

#[derive(Parser)]
#[command(name = "xmc", version, about = "Collective matrix completion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build factors and the collective matrix they generate.
    Gen(GenArgs),
    /// Draw observations from a matrix according to a plan.
    Sample(SampleArgs),
    /// Complete a collective matrix from observations.
    Solve(SolveArgs),
    /// Incoherence, sampling and concentration diagnostics.
    Diag(DiagArgs),
    /// Error-versus-sample-size sweep on synthetic data.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Schema JSON file.
    #[arg(long, conflicts_with = "preset")]
    schema: Option<PathBuf>,
    /// Four-entity preset with this many instances per entity.
    #[arg(long)]
    preset: Option<usize>,
}

impl SchemaArgs {
    fn load(&self) -> Result<Arc<CollectiveSchema>> {
        let schema = match (&self.schema, self.preset) {
            (Some(p), _) => io::read_schema(p).with_context(|| format!("reading schema {}", p.display()))?,
            (None, Some(n)) => CollectiveSchema::four_entity_preset(n)?,
            (None, None) => bail!("either --schema or --preset is required"),
        };
        Ok(Arc::new(schema))
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Existing factor CSV; random Gaussian factors are drawn otherwise.
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuotaArg {
    Proportional,
    Balanced,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Collective matrix CSV to sample from.
    #[arg(long)]
    matrix: PathBuf,
    /// Plan JSON; otherwise built from --total and --quota.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    total: Option<usize>,
    #[arg(long, value_enum, default_value = "proportional")]
    quota: QuotaArg,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Observation CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Observation CSV.
    #[arg(long)]
    obs: PathBuf,
    /// Solver config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Penalty of the proximal baseline.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    factors: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Custom schema instead of the four-entity preset.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Flag, then `XMC_SEED`, then the fallback.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => io::seed_override()?.unwrap_or(fallback),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn gen(args: GenArgs) -> Result<()> {
    let schema = args.schema.load()?;
    schema.require_bipartite()?;
    let seed = resolve_seed(args.seed, 0)?;
    let factors = match &args.factors {
        Some(p) => io::read_factors(schema.clone(), open(p)?, None)?,
        None => FactorSet::random_gaussian(schema.clone(), args.rank, seed),
    };
    fs::create_dir_all(&args.out)?;
    io::write_schema(&schema, args.out.join("schema.json"))?;
    io::write_factors(&factors, create(&args.out.join("factors.csv"))?)?;
    io::write_collective(&factors.synthesize(), create(&args.out.join("matrix.csv"))?)?;
    eprintln!("wrote schema.json, factors.csv, matrix.csv to {}", args.out.display());
    Ok(())
}

fn sample(args: SampleArgs) -> Result<()> {
    let schema = args.schema.load()?;
    let m = io::read_collective(schema.clone(), open(&args.matrix)?)?;
    let plan = match (&args.plan, args.total) {
        (Some(p), _) => io::plan_from_json(schema.clone(), &io::read_to_string(p)?)?,
        (None, Some(total)) => {
            let preset = match args.quota {
                QuotaArg::Proportional => QuotaPreset::Proportional,
                QuotaArg::Balanced => QuotaPreset::Balanced,
            };
            SamplingPlan::with_preset(schema.clone(), preset, total, 0)?
        }
        (None, None) => bail!("either --plan or --total is required"),
    };
    let seed = resolve_seed(args.seed, plan.seed())?;
    let plan = plan.with_seed(seed);
    let noise = if args.sigma > 0.0 {
        Noise::Gaussian { sigma: args.sigma }
    } else {
        Noise::None
    };
    let obs = observe(&m, &plan.sample(), noise, harness::mix_seed(seed))?;
    io::write_observations(&obs, create(&args.out)?)?;
    eprintln!("wrote {} observations to {}", obs.len(), args.out.display());
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let schema = args.schema.load()?;
    let obs = io::read_observations(schema, open(&args.obs)?, Noise::None)?;
    let mut cfg = match &args.config {
        Some(p) => io::solver_config_from_json(&io::read_to_string(p)?)?,
        None => SolverConfig::default(),
    };
    cfg.seed = resolve_seed(args.seed, cfg.seed)?;
    fs::create_dir_all(&args.out)?;

    let (report, sweep) = match cfg.eta {
        Some(_) => (hazan_cmc(&obs, &cfg)?, Vec::new()),
        None => {
            let sol = solve_noise_free(&obs, &cfg)?;
            (sol.report, sol.sweep)
        }
    };
    io::write_collective(&report.estimate, create(&args.out.join("estimate.csv"))?)?;
    io::write_history(&report.history, create(&args.out.join("report.csv"))?)?;
    if !sweep.is_empty() {
        io::write_rows(&sweep, create(&args.out.join("eta_sweep.csv"))?)?;
    }
    let mut summary = json!({
        "eta": report.eta,
        "iterations": report.iterations,
        "termination": report.termination,
        "objective": report.objective,
        "gap": report.gap,
        "training_residual": report.training_residual(),
        "observations": obs.len(),
        "seed": cfg.seed,
    });
    if cfg.baseline {
        let base = svt_baseline(&obs, args.gamma, cfg.max_iters)?;
        io::write_collective(&base.estimate, create(&args.out.join("baseline_estimate.csv"))?)?;
        io::write_history(&base.history, create(&args.out.join("baseline_report.csv"))?)?;
        summary["baseline"] = json!({
            "gamma": args.gamma,
            "iterations": base.iterations,
            "objective": base.objective,
            "loss": base.loss,
            "trace": base.trace(),
        });
    }
    io::write_string(args.out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    eprintln!(
        "{} iterations, objective {:.6e}, gap {:.3e}; results in {}",
        report.iterations,
        report.objective,
        report.gap,
        args.out.display()
    );
    Ok(())
}

fn diag(args: DiagArgs) -> Result<()> {
    let schema = args.schema.load()?;
    let factors = io::read_factors(schema.clone(), open(&args.factors)?, None)?;
    let plan = io::plan_from_json(schema, &io::read_to_string(&args.plan)?)?;
    let opts = DiagOptions {
        beta: args.beta,
        lemma3_trials: args.trials,
        seed: resolve_seed(args.seed, plan.seed())?,
    };
    let report = harness::diag_report(&factors, &plan, &opts)?;
    fs::create_dir_all(&args.out)?;
    let text = report.to_text();
    io::write_string(args.out.join("diag.txt"), &text)?;
    io::write_key_values(&report.rows(), create(&args.out.join("diag.csv"))?)?;
    print!("{text}");
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => serde_json::from_str(&io::read_to_string(p)?).context("parsing experiment config")?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &args.schema {
        cfg.schema = Some(Arc::new(io::read_schema(p)?));
    }
    cfg.seed = resolve_seed(args.seed, cfg.seed)?;
    let rows = harness::run_sweep(&cfg)?;
    fs::create_dir_all(&args.out)?;
    io::write_rows(&rows, create(&args.out.join("sweep.csv"))?)?;
    io::write_rows(&harness::median_curve(&rows, true), create(&args.out.join("curve.csv"))?)?;
    let meta = json!({
        "config": cfg,
        "rank_rule": match cfg.rank {
            RankRule::TwoLogN => "round(2 ln n)".to_string(),
            RankRule::Fixed(r) => format!("fixed {r}"),
        },
        "log_base": "e",
        "rows": rows.len(),
    });
    io::write_string(args.out.join("meta.json"), &serde_json::to_string_pretty(&meta)?)?;
    eprintln!("wrote {} rows to {}", rows.len(), args.out.join("sweep.csv").display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => gen(a),
        Command::Sample(a) => sample(a),
        Command::Solve(a) => solve(a),
        Command::Diag(a) => diag(a),
        Command::Sweep(a) => sweep(a),
    }
}
