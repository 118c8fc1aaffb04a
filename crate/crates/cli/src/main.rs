use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ewens_core::dpmm::{DpmmConfig, PoissonGammaBase};
use ewens_core::harness::{
    parse_counts, prior_summary, run_coverage, run_dpmm_arms, total_variation, CoverageConfig,
    FitMethod, PriorSeries, RunManifest, SimulatedCounts, Table,
};
use ewens_core::posterior::{
    chain_summary, default_proposal_sd, sample_posterior, MCMCConfig, PosteriorDensity, PriorSpec,
};
use ewens_core::quadrature::QuadratureConfig;
use ewens_core::EwensError;

#[derive(Parser)]
#[command(name = "ewens", version, about = "Jeffreys-prior inference for the Ewens concentration parameter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate properties of the Jeffreys prior.
    PriorSummary(PriorSummaryArgs),
    /// Posterior summary for β given n and the number of clusters K.
    Posterior(PosteriorArgs),
    /// Frequentist coverage of equal-tail credible intervals.
    Coverage(CoverageArgs),
    /// Dirichlet-process Poisson mixture on count data.
    Dpmm(DpmmArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed.
    #[arg(long, env = "EWENS_SEED", default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum What {
    Density,
    Const,
    Median,
    Kmoments,
    Kdist,
    Eta,
}

impl From<What> for PriorSeries {
    fn from(w: What) -> Self {
        match w {
            What::Density => Self::Density,
            What::Const => Self::Const,
            What::Median => Self::Median,
            What::Kmoments => Self::KMoments,
            What::Kdist => Self::KDist,
            What::Eta => Self::Eta,
        }
    }
}

#[derive(Args)]
struct PriorSummaryArgs {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, value_enum)]
    what: What,
    #[command(flatten)]
    common: Common,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PriorKind {
    Jeffreys,
    Gamma,
}

#[derive(Args, Clone, Copy)]
struct PriorArgs {
    #[arg(long, value_enum, default_value_t = PriorKind::Jeffreys)]
    prior: PriorKind,
    /// Gamma prior shape.
    #[arg(long, default_value_t = 0.001)]
    a: f64,
    /// Gamma prior rate.
    #[arg(long, default_value_t = 0.001)]
    b: f64,
}

impl PriorArgs {
    fn spec(&self, n: usize) -> PriorSpec {
        match self.prior {
            PriorKind::Jeffreys => PriorSpec::jeffreys(n),
            PriorKind::Gamma => PriorSpec::gamma(self.a, self.b),
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Method {
    Quadrature,
    Mcmc,
}

#[derive(Args, Clone, Copy)]
struct McmcArgs {
    /// Retained draws per chain.
    #[arg(long, default_value_t = 100_000)]
    iterations: usize,
    #[arg(long, default_value_t = 5_000)]
    burn_in: usize,
    /// Proposal standard deviation on ln β; defaults by sample size.
    #[arg(long)]
    proposal_sd: Option<f64>,
}

#[derive(Args)]
struct PosteriorArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, value_enum, default_value_t = Method::Quadrature)]
    method: Method,
    #[command(flatten)]
    mcmc: McmcArgs,
    /// Credible level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long)]
    beta_true: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95")]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, value_enum, default_value_t = Method::Quadrature)]
    method: Method,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum DpmmPrior {
    Jeffreys,
    Gamma,
    Both,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Simulate {
    Negbin,
    Poisson,
}

#[derive(Args)]
struct DpmmArgs {
    /// Count data: one integer per line, or a CSV with header `y`.
    #[arg(long, required_unless_present = "simulate", conflicts_with = "simulate")]
    data: Option<PathBuf>,
    /// Simulate data instead of reading a file.
    #[arg(long, value_enum)]
    simulate: Option<Simulate>,
    #[arg(long, default_value_t = 50)]
    sim_n: usize,
    #[arg(long, default_value_t = 20.0)]
    sim_mean: f64,
    #[arg(long, default_value_t = 220.0)]
    sim_var: f64,
    /// Mean of the Gamma base measure on the Poisson rate.
    #[arg(long, default_value_t = 20.0)]
    base_mean: f64,
    /// Variance of the Gamma base measure.
    #[arg(long, default_value_t = 200.0)]
    base_var: f64,
    #[arg(long, value_enum, default_value_t = DpmmPrior::Both)]
    prior: DpmmPrior,
    /// Gamma prior shape.
    #[arg(long, default_value_t = 0.001)]
    a: f64,
    /// Gamma prior rate.
    #[arg(long, default_value_t = 0.001)]
    b: f64,
    #[arg(long, default_value_t = 2_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    #[command(flatten)]
    common: Common,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<EwensError> for CliError {
    fn from(e: EwensError) -> Self {
        match e {
            EwensError::Domain { .. }
            | EwensError::Config(_)
            | EwensError::Data { .. }
            | EwensError::EmptyData
            | EwensError::InvalidPartition(_) => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// A finished command: CSV body, JSON payload and the run manifest.
struct Output {
    csv: String,
    json: Value,
    manifest: RunManifest,
}

fn emit(out: Output, common: &Common, started: Instant) -> CliResult<()> {
    let mut manifest = out.manifest;
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let manifest_json = serde_json::to_value(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    let body = match common.format {
        Format::Csv => out.csv,
        Format::Json => {
            let mut v = out.json;
            v["manifest"] = manifest_json.clone();
            let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Runtime(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    let sidecar = serde_json::to_string_pretty(&manifest_json).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    match &common.out {
        Some(path) => {
            fs::write(path, body).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            if common.format == Format::Csv {
                let mut side = path.clone().into_os_string();
                side.push(".manifest.json");
                fs::write(&side, sidecar).map_err(|e| CliError::Runtime(format!("{side:?}: {e}")))?;
            }
        }
        None => {
            print!("{body}");
            if common.format == Format::Csv {
                eprint!("{sidecar}");
            }
        }
    }
    Ok(())
}

fn table_json(t: &Table) -> Value {
    json!({ "columns": t.columns, "rows": t.rows })
}

fn prior_label(p: &PriorSpec) -> String {
    match p {
        PriorSpec::Jeffreys { n } => format!("jeffreys(n={n})"),
        PriorSpec::Gamma { shape, rate } => format!("gamma(shape={shape}, rate={rate})"),
    }
}

fn mcmc_config(args: &McmcArgs, n: usize, seed: u64) -> MCMCConfig {
    MCMCConfig {
        iterations: args.iterations,
        burn_in: args.burn_in,
        proposal_sd: args.proposal_sd.unwrap_or_else(|| default_proposal_sd(n)),
        seed,
    }
}

fn cmd_prior_summary(args: &PriorSummaryArgs) -> CliResult<Output> {
    if let Some(&n) = args.n.iter().find(|&&n| n < 2) {
        return Err(CliError::Usage(format!("--n must be at least 2, got {n}")));
    }
    let what = PriorSeries::from(args.what);
    let table = prior_summary(&args.n, what, args.common.jobs)?;
    let ns: Vec<String> = args.n.iter().map(usize::to_string).collect();
    let manifest = RunManifest::new("prior-summary", args.common.seed)
        .param("n", ns.join(","))
        .param("what", format!("{what:?}"));
    Ok(Output {
        csv: table.to_csv(what.integer_columns()),
        json: table_json(&table),
        manifest,
    })
}

fn cmd_posterior(args: &PosteriorArgs) -> CliResult<Output> {
    if args.k == 0 || args.k > args.n {
        return Err(CliError::Usage(format!(
            "need 1 <= k <= n, got n = {}, k = {}",
            args.n, args.k
        )));
    }
    let prior = args.prior.spec(args.n);
    prior.validate_for(args.n)?;
    let mut manifest = RunManifest::new("posterior", args.common.seed)
        .param("n", args.n)
        .param("k", args.k)
        .param("prior", prior_label(&prior))
        .param("level", args.level);
    let (summary, acceptance, mc_se) = match args.method {
        Method::Quadrature => {
            manifest = manifest.param("method", "quadrature");
            let post = PosteriorDensity::new(args.n, args.k, &prior, &QuadratureConfig::default())?;
            (post.summary(args.level)?, None, None)
        }
        Method::Mcmc => {
            let cfg = mcmc_config(&args.mcmc, args.n, args.common.seed);
            manifest = manifest
                .param("method", "mcmc")
                .param("iterations", cfg.iterations)
                .param("burn_in", cfg.burn_in)
                .param("proposal_sd", cfg.proposal_sd);
            let chain = sample_posterior(args.n, args.k, &prior, &cfg)?;
            if let Some(w) = chain.diagnostic() {
                eprintln!("warning: {w}");
            }
            (
                chain_summary(&chain, args.n, args.level)?,
                Some(chain.acceptance_rate),
                Some(chain.mc_standard_error()),
            )
        }
    };
    let mut t = Table::new(&[
        "beta_mean", "beta_lo", "beta_hi", "eta_mean", "eta_lo", "eta_hi", "acceptance_rate",
    ]);
    t.push(vec![
        summary.beta_mean,
        summary.beta_ci.0,
        summary.beta_ci.1,
        summary.eta_mean,
        summary.eta_ci.0,
        summary.eta_ci.1,
        acceptance.unwrap_or(f64::NAN),
    ]);
    Ok(Output {
        csv: t.to_csv(&[]),
        json: json!({
            "summary": summary,
            "acceptance_rate": acceptance,
            "beta_mean_mc_se": mc_se,
        }),
        manifest,
    })
}

fn cmd_coverage(args: &CoverageArgs) -> CliResult<Output> {
    let prior = args.prior.spec(args.n);
    let mut cfg = CoverageConfig::new(args.beta_true, args.n, prior, args.replicates, args.common.seed);
    cfg.levels = args.levels.clone();
    cfg.jobs = args.common.jobs;
    cfg.method = match args.method {
        Method::Quadrature => FitMethod::Quadrature,
        Method::Mcmc => FitMethod::Mcmc,
    };
    cfg.mcmc_iterations = args.mcmc.iterations;
    cfg.mcmc_burn_in = args.mcmc.burn_in;
    let results = run_coverage(&cfg)?;
    let failures = results.first().map_or(0, |r| r.failures);
    if failures > 0 {
        eprintln!("warning: {failures} of {} replicates failed and were excluded", args.replicates);
    }
    let mut t = Table::new(&[
        "beta_true", "n", "level", "replicates", "covered", "coverage", "mean_width", "sd_width", "failures",
    ]);
    for r in &results {
        t.push(vec![
            r.beta_true,
            r.n as f64,
            r.level,
            r.replicates as f64,
            r.covered as f64,
            r.coverage,
            r.mean_width,
            r.sd_width,
            r.failures as f64,
        ]);
    }
    let levels: Vec<String> = args.levels.iter().map(f64::to_string).collect();
    let manifest = RunManifest::new("coverage", args.common.seed)
        .param("beta_true", args.beta_true)
        .param("n", args.n)
        .param("levels", levels.join(","))
        .param("replicates", args.replicates)
        .param("prior", prior_label(&prior))
        .param("method", format!("{:?}", cfg.method).to_lowercase());
    Ok(Output {
        csv: t.to_csv(&["n", "replicates", "covered", "failures"]),
        json: json!({ "results": results }),
        manifest,
    })
}

fn cmd_dpmm(args: &DpmmArgs) -> CliResult<Output> {
    let mut manifest = RunManifest::new("dpmm", args.common.seed);
    let data = match (&args.data, args.simulate) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            manifest = manifest.param("data", path.display());
            parse_counts(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(kind)) => {
            let sim = match kind {
                Simulate::Negbin => SimulatedCounts::NegBin {
                    mean: args.sim_mean,
                    variance: args.sim_var,
                },
                Simulate::Poisson => SimulatedCounts::Poisson { mean: args.sim_mean },
            };
            let sim_seed = ewens_core::parallel::derive_seed(args.common.seed, u64::MAX);
            manifest = manifest
                .param("simulate", format!("{sim:?}"))
                .param("sim_n", args.sim_n);
            sim.generate(args.sim_n, sim_seed)?
        }
        (None, None) => return Err(CliError::Usage("either --data or --simulate is required".into())),
    };
    let base = PoissonGammaBase::from_moments(args.base_mean, args.base_var)?;
    let n = data.len();
    let mut arms = Vec::new();
    if matches!(args.prior, DpmmPrior::Jeffreys | DpmmPrior::Both) {
        arms.push(("jeffreys".to_string(), PriorSpec::jeffreys(n)));
    }
    if matches!(args.prior, DpmmPrior::Gamma | DpmmPrior::Both) {
        arms.push(("gamma".to_string(), PriorSpec::gamma(args.a, args.b)));
    }
    let configs: Vec<(String, DpmmConfig)> = arms
        .iter()
        .enumerate()
        .map(|(i, (label, prior))| {
            let mut cfg = DpmmConfig::new(base, *prior, ewens_core::parallel::derive_seed(args.common.seed, i as u64));
            cfg.burn_in = args.burn_in;
            cfg.sweeps = args.sweeps;
            (label.clone(), cfg)
        })
        .collect();
    for (_, cfg) in &configs {
        cfg.prior.validate()?;
    }
    let results = run_dpmm_arms(&data, &configs, args.common.jobs)?;
    let pmfs = results
        .iter()
        .map(|a| a.run.posterior_k())
        .collect::<Result<Vec<_>, _>>()?;
    let kmax = pmfs.iter().map(Vec::len).max().unwrap_or(0);
    let mut columns = vec!["k"];
    columns.extend(results.iter().map(|a| a.label.as_str()));
    let mut t = Table::new(&columns);
    for k in 0..kmax {
        let mut row = vec![(k + 1) as f64];
        row.extend(pmfs.iter().map(|p| p.get(k).copied().unwrap_or(0.0)));
        t.push(row);
    }
    let tv = (pmfs.len() == 2).then(|| total_variation(&pmfs[0], &pmfs[1]));
    let arms_json: Vec<Value> = results
        .iter()
        .zip(&pmfs)
        .map(|(a, p)| json!({ "prior": a.label, "mean_k": a.run.mean_k(), "posterior_k": p }))
        .collect();
    for a in &results {
        eprintln!("{}: posterior mean K = {:.4}", a.label, a.run.mean_k());
    }
    manifest = manifest
        .param("n", n)
        .param("base_shape", base.shape)
        .param("base_rate", base.rate)
        .param("prior", format!("{:?}", arms.iter().map(|(_, p)| prior_label(p)).collect::<Vec<_>>()))
        .param("burn_in", args.burn_in)
        .param("sweeps", args.sweeps);
    Ok(Output {
        csv: t.to_csv(&["k"]),
        json: json!({ "n": n, "arms": arms_json, "total_variation": tv }),
        manifest,
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let started = Instant::now();
    let (out, common) = match &cli.command {
        Command::PriorSummary(a) => (cmd_prior_summary(a)?, &a.common),
        Command::Posterior(a) => (cmd_posterior(a)?, &a.common),
        Command::Coverage(a) => (cmd_coverage(a)?, &a.common),
        Command::Dpmm(a) => (cmd_dpmm(a)?, &a.common),
    };
    emit(out, common, started)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
