use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Value};

use igt_core::error::Error as CoreError;
use igt_core::games::{sample_instance, Family, GameInstance, ParamMode};
use igt_core::harness::{
    ingest_timeseries, read_observations, recovery_check, run_benchmark_with_traces,
    write_observations, BenchSpec, Split, TimeseriesSchema, REPORT_VERSION,
};
use igt_core::markov::{sgda_solve, InverseMarkovGame, MarkovGameSpec, PolicySpec, SgdaConfig};
use igt_core::planner::{gda_solve, relative_error};
use igt_core::spaces::Rng;
use igt_core::simulacra::{simulacral_solve, InverseSimulation, ObservationMap, SimulacraConfig};

#[derive(Parser)]
#[command(name = "igt", version, about = "Inverse game theory solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the parameters of one sampled game instance (JSON).
    Solve(SolveArgs),
    /// Run a recovery benchmark over sampled instances.
    Bench(BenchArgs),
    /// Inverse multiagent RL on a serialized Markov game.
    Marl(MarlArgs),
    /// Fit a simulacrum to an observation CSV.
    Simulacra(SimulacraArgs),
    /// Cut a timestamped CSV into observation windows.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// GameInstance JSON; without it an instance of `--family` is sampled.
    input: Option<PathBuf>,
    #[arg(long, conflicts_with = "input")]
    family: Option<Family>,
    /// Sampling seed for `--family`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    mode: Option<ParamMode>,
    #[arg(long)]
    iters: Option<usize>,
    /// Step size for both players.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// BenchSpec as TOML or JSON; missing fields take the family defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    mode: Option<ParamMode>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// 500 instances.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    early_stop: bool,
    /// Skip the per-instance trace files.
    #[arg(long)]
    no_traces: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MarlArgs {
    /// JSON with `game`, `policy`, `observed_params` and optional `sgda`.
    input: PathBuf,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulacraArgs {
    /// JSON with `game`, `map`, `horizon`, `policy` and optional `config`.
    input: PathBuf,
    /// One observation per row.
    #[arg(long)]
    observations: PathBuf,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    input: PathBuf,
    /// TimeseriesSchema as TOML or JSON; overrides the column flags.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value = "timestamp")]
    timestamp: String,
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    train_end: Option<NaiveDate>,
    #[arg(long)]
    validation_end: Option<NaiveDate>,
    #[arg(long)]
    out: PathBuf,
}

/// A failed command and its exit status.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let run = e.chain().any(|c| {
            matches!(
                c.downcast_ref::<CoreError>(),
                Some(
                    CoreError::NonFinite { .. }
                        | CoreError::Certification { .. }
                        | CoreError::UnboundedDemand { .. }
                )
            )
        });
        if run {
            Failure::Run(e)
        } else {
            Failure::Config(e)
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Marl(a) => marl(a),
        Command::Simulacra(a) => simulacra(a),
        Command::Ingest(a) => ingest(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("failed: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Parses TOML or JSON by extension into a generic value.
fn read_value(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    let value = if is_toml {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(value)
}

/// Overlays `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn with_defaults<T: Serialize + DeserializeOwned>(defaults: &T, patch: Option<Value>) -> anyhow::Result<T> {
    let mut value = serde_json::to_value(defaults)?;
    if let Some(p) = patch {
        merge(&mut value, p);
    }
    Ok(serde_json::from_value(value)?)
}

fn prepare_out(out: &Path) -> anyhow::Result<PathBuf> {
    let traces = out.join("traces");
    fs::create_dir_all(&traces).with_context(|| format!("creating {}", traces.display()))?;
    Ok(traces)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Two-line CSV from a flat JSON object.
fn write_summary_csv(path: &Path, fields: &[(&str, String)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(fields.iter().map(|(k, _)| *k))?;
    w.write_record(fields.iter().map(|(_, v)| v.as_str()))?;
    w.flush()?;
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn solve(a: SolveArgs) -> CmdResult {
    let instance = match (&a.input, a.family) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            GameInstance::from_json(&text)?
        }
        (None, Some(family)) => sample_instance(family, &mut Rng::new(a.seed))?,
        (None, None) => return Err(anyhow!("give an instance file or --family").into()),
    };
    let mode = a.mode.unwrap_or(instance.family.default_mode());
    let mut gda = BenchSpec::family_defaults(instance.family, mode).gda;
    if let Some(n) = a.iters {
        gda.iters = n;
    }
    if let Some(lr) = a.lr {
        gda.eta_theta = lr;
        gda.eta_y = lr;
    }
    let (inv, truth) = instance.inverse_game(mode)?;
    let traces = prepare_out(&a.out)?;
    fs::write(a.out.join("instance.json"), instance.to_json()?).map_err(anyhow::Error::from)?;
    let trace = gda_solve(&inv, &gda)?;
    let rel_error = relative_error(&trace.estimate, &truth)?;
    let recovered = recovery_check(&trace.estimate, &truth)?;
    let summary = trace.summary();
    write_json(
        &a.out.join("report.json"),
        &json!({
            "version": REPORT_VERSION,
            "family": instance.family,
            "mode": mode,
            "gda": gda,
            "theta_star": truth,
            "rel_error": rel_error,
            "recovered": recovered,
            "result": summary,
        }),
    )?;
    write_summary_csv(
        &a.out.join("report.csv"),
        &[
            ("recovered", recovered.to_string()),
            ("rel_error", rel_error.to_string()),
            ("certificate", summary.certificate.to_string()),
            ("iters", summary.iters.to_string()),
            ("wall_ms", summary.wall_ms.to_string()),
            ("estimate", join(&summary.estimate)),
        ],
    )?;
    trace.write_csv(fs::File::create(traces.join("solve.csv")).map_err(anyhow::Error::from)?)?;
    log::info!("rel_error {rel_error:.4} certificate {:.3e}", summary.certificate);
    Ok(ExitCode::SUCCESS)
}

/// Fields of a bench file; everything except the family is optional.
#[derive(Deserialize)]
struct BenchFile {
    family: Option<Family>,
    mode: Option<ParamMode>,
    #[serde(flatten)]
    rest: serde_json::Map<String, Value>,
}

fn bench_spec(a: &BenchArgs) -> anyhow::Result<BenchSpec> {
    let file: Option<BenchFile> = match &a.config {
        Some(p) => Some(serde_json::from_value(read_value(p)?)?),
        None => None,
    };
    let family = a
        .family
        .or(file.as_ref().and_then(|f| f.family))
        .ok_or_else(|| anyhow!("a family is required (--family or the config file)"))?;
    let mode = a
        .mode
        .or(file.as_ref().and_then(|f| f.mode))
        .unwrap_or(family.default_mode());
    let mut spec = with_defaults(
        &BenchSpec::family_defaults(family, mode),
        file.map(|f| Value::Object(f.rest)),
    )?;
    spec.family = family;
    spec.mode = mode;
    if a.full {
        spec.n_instances = 500;
    }
    if let Some(n) = a.n {
        spec.n_instances = n;
    }
    if let Some(n) = a.iters {
        spec.gda.iters = n;
    }
    if let Some(lr) = a.lr {
        spec.gda.eta_theta = lr;
        spec.gda.eta_y = lr;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if a.threads.is_some() {
        spec.threads = a.threads;
    }
    spec.early_stop |= a.early_stop;
    Ok(spec)
}

fn bench(a: BenchArgs) -> CmdResult {
    let spec = bench_spec(&a)?;
    spec.validate()?;
    let traces_dir = prepare_out(&a.out)?;
    let (report, traces) = run_benchmark_with_traces(&spec, !a.no_traces)?;
    report.write_json(&a.out.join("report.json"))?;
    report.write_csv(&a.out.join("report.csv"))?;
    for (row, trace) in report.rows.iter().zip(&traces) {
        if let Some(t) = trace {
            let path = traces_dir.join(format!("instance_{:04}.csv", row.index));
            t.write_csv(fs::File::create(&path).map_err(anyhow::Error::from)?)?;
        }
    }
    log::info!(
        "{:?}/{:?}: {:.1}% recovered, avg exploitability {:.4e}, {} failed",
        spec.family,
        spec.mode,
        report.pct_recovered,
        report.avg_exploitability,
        report.n_failed
    );
    Ok(if report.n_failed > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Deserialize)]
struct MarlFile {
    game: MarkovGameSpec,
    policy: PolicySpec,
    observed_params: Vec<f64>,
    /// Policy class of the observed play; defaults to `policy`.
    observed_policy: Option<PolicySpec>,
    sgda: Option<Value>,
}

fn marl(a: MarlArgs) -> CmdResult {
    let file: MarlFile = serde_json::from_value(read_value(&a.input)?).map_err(anyhow::Error::from)?;
    let mut cfg = with_defaults(&SgdaConfig::default(), file.sgda)?;
    if let Some(n) = a.iters {
        cfg.iters = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let game = file.game.build()?;
    let policy = file.policy.build(game.as_ref())?;
    let observed = match &file.observed_policy {
        Some(p) => p.build(game.as_ref())?,
        None => Arc::clone(&policy),
    };
    let inv = InverseMarkovGame::new(game, observed, file.observed_params)?;
    let traces = prepare_out(&a.out)?;
    let trace = sgda_solve(&inv, policy.as_ref(), &cfg)?;
    write_json(
        &a.out.join("report.json"),
        &json!({
            "version": REPORT_VERSION,
            "sgda": cfg,
            "theta_bar": trace.theta_bar,
            "x_final": trace.x_final,
            "certificate": trace.certificate,
            "horizon": trace.horizon,
            "iters": trace.iters,
            "wall_ms": trace.wall_ms,
        }),
    )?;
    write_summary_csv(
        &a.out.join("report.csv"),
        &[
            ("certificate", trace.certificate.value.to_string()),
            ("certificate_std_err", trace.certificate.std_err.to_string()),
            ("horizon", trace.horizon.to_string()),
            ("iters", trace.iters.to_string()),
            ("wall_ms", trace.wall_ms.to_string()),
            ("theta_bar", join(&trace.theta_bar)),
        ],
    )?;
    trace.write_csv(fs::File::create(traces.join("marl.csv")).map_err(anyhow::Error::from)?)?;
    log::info!("certificate {:.3e}", trace.certificate.value);
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize)]
struct SimulacraFile {
    game: MarkovGameSpec,
    map: ObservationMap,
    horizon: usize,
    policy: PolicySpec,
    config: Option<Value>,
}

fn simulacra(a: SimulacraArgs) -> CmdResult {
    let file: SimulacraFile = serde_json::from_value(read_value(&a.input)?).map_err(anyhow::Error::from)?;
    let mut cfg = with_defaults(&SimulacraConfig::default(), file.config)?;
    if let Some(n) = a.iters {
        cfg.iters = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let game = file.game.build()?;
    let policy = file.policy.build(game.as_ref())?;
    let samples = read_observations(&a.observations)
        .with_context(|| format!("reading {}", a.observations.display()))?;
    let sim = InverseSimulation::new(game, file.map, file.horizon, samples)?;
    let traces = prepare_out(&a.out)?;
    let trace = simulacral_solve(&sim, policy.as_ref(), &cfg)?;
    let best_surrogate = trace.best_surrogate();
    write_json(
        &a.out.join("report.json"),
        &json!({
            "version": REPORT_VERSION,
            "config": cfg,
            "n_observations": sim.samples.len(),
            "theta_best": trace.theta_best,
            "x_best": trace.x_best,
            "best_iter": trace.best_iter,
            "final_loss": trace.final_loss,
            "certificate": trace.certificate,
            "prox_lambda": trace.prox_lambda,
            "best_surrogate": best_surrogate,
            "checkpoints": trace.checkpoints,
            "iters": trace.iters,
            "wall_ms": trace.wall_ms,
        }),
    )?;
    write_summary_csv(
        &a.out.join("report.csv"),
        &[
            ("observation", trace.final_loss.observation.to_string()),
            ("regret", trace.final_loss.regret.to_string()),
            ("certificate", trace.certificate.value.to_string()),
            ("best_surrogate", best_surrogate.to_string()),
            ("best_iter", trace.best_iter.to_string()),
            ("iters", trace.iters.to_string()),
            ("wall_ms", trace.wall_ms.to_string()),
            ("theta_best", join(&trace.theta_best)),
        ],
    )?;
    trace.write_csv(fs::File::create(traces.join("simulacra.csv")).map_err(anyhow::Error::from)?)?;
    log::info!(
        "observation {:.4e} regret {:.4e}",
        trace.final_loss.observation,
        trace.final_loss.regret
    );
    Ok(ExitCode::SUCCESS)
}

fn ingest(a: IngestArgs) -> CmdResult {
    let schema: TimeseriesSchema = match &a.schema {
        Some(p) => serde_json::from_value(read_value(p)?).map_err(anyhow::Error::from)?,
        None => {
            let horizon = a.horizon.ok_or_else(|| anyhow!("--horizon is required without --schema"))?;
            serde_json::from_value(json!({
                "timestamp": a.timestamp,
                "columns": a.columns,
                "horizon": horizon,
                "train_end": a.train_end,
                "validation_end": a.validation_end,
            }))
            .map_err(anyhow::Error::from)?
        }
    };
    let set = ingest_timeseries(&a.input, &schema)?;
    fs::create_dir_all(&a.out).map_err(anyhow::Error::from)?;
    write_observations(&a.out.join("observations.csv"), &set.all())?;
    let mut counts = serde_json::Map::new();
    for (split, name) in [
        (Split::Train, "train"),
        (Split::Validation, "validation"),
        (Split::Test, "test"),
    ] {
        let part = set.split(split);
        if !part.is_empty() {
            write_observations(&a.out.join(format!("observations_{name}.csv")), &part)?;
        }
        counts.insert(name.into(), part.len().into());
    }
    write_json(
        &a.out.join("report.json"),
        &json!({
            "version": REPORT_VERSION,
            "schema": schema,
            "n_windows": set.windows.len(),
            "dim": set.dim(),
            "splits": counts,
            "starts": set.windows.iter().map(|w| w.start).collect::<Vec<_>>(),
        }),
    )?;
    log::info!("{} windows of dimension {}", set.windows.len(), set.dim());
    Ok(ExitCode::SUCCESS)
}
