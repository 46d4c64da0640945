//! Headless driver: every subcommand is a thin wrapper over one core operation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use systemic_core::generator::{generate, sweep_seeds, MarginalSampler};
use systemic_core::intervention::{relief_table, RankedAssessment};
use systemic_core::metrics::MetricsConfig;
use systemic_core::render::render_svg;
use systemic_core::{
    Assessment, Error, EstimationMethod, GeneratorConfig, InterventionBase, InterventionPlan,
    LayoutConfig, Network, Operation, PropagationModel, RankingKey, Scenario, ShockMagnitude,
    ShockSpec, ShockTargets, Stage,
};
use systemic_service::ServiceConfig;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    Io(PathBuf, std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

impl CliError {
    /// 1 for invalid input, 3 for infeasible requests, 4 for I/O failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Infeasible(_) | Error::Numerical(_)) => 3,
            CliError::Core(Error::Io(_)) | CliError::Io(..) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Parser)]
#[command(
    name = "systemic",
    version,
    about = "Interbank systemic-risk simulation and intervention"
)]
pub struct Cli {
    /// Seed for generation and layout.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file (directory for `casestudy`). Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate an exposure network from interbank marginals.
    Generate(GenerateArgs),
    /// Shock a network and report per-bank stress.
    Shock(ShockCommand),
    /// Per-bank risk matrix of the original or shocked network.
    Metrics(MetricsCommand),
    /// Risk-island layout as JSON or SVG.
    Layout(LayoutCommand),
    /// Apply one intervention plan and assess it.
    Intervene(InterveneCommand),
    /// Rank several plans against the same shock.
    Compare(CompareCommand),
    /// Run the HTTP service.
    Serve(ServiceConfig),
    /// Full pipeline on a generated 125-bank instance, written to a directory.
    Casestudy(CasestudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    MaxEntropy,
    MinDensity,
}

impl From<Method> for EstimationMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::MaxEntropy => EstimationMethod::MaxEntropy,
            Method::MinDensity => EstimationMethod::MinDensity,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "min-density")]
    pub method: Method,
    /// Explicit interbank assets (row sums), comma separated.
    #[arg(long, value_delimiter = ',', requires = "liabilities")]
    pub assets: Option<Vec<f64>>,
    /// Explicit interbank liabilities (column sums), comma separated.
    #[arg(long, value_delimiter = ',', requires = "assets")]
    pub liabilities: Option<Vec<f64>>,
    /// Generator configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sweep seeds upward until the edge count is within `--tolerance` of this.
    #[arg(long)]
    pub target_edges: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 200)]
    pub max_attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Threshold,
    Linear,
    Hybrid,
}

impl From<Model> for PropagationModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Threshold => PropagationModel::Threshold,
            Model::Linear => PropagationModel::Linear,
            Model::Hybrid => PropagationModel::Hybrid,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ShockArgs {
    /// Shock specification file; replaces the flags below.
    #[arg(long, conflicts_with_all = ["model", "target", "phi", "absolute", "lgd"])]
    pub shock: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear")]
    pub model: Model,
    /// Shocked bank ids, comma separated. Defaults to every bank.
    #[arg(long, value_delimiter = ',')]
    pub target: Vec<String>,
    /// Fraction of each target's buffer destroyed.
    #[arg(long, conflicts_with = "absolute")]
    pub phi: Option<f64>,
    /// Currency amount destroyed per target.
    #[arg(long)]
    pub absolute: Option<f64>,
    #[arg(long)]
    pub lgd: Option<f64>,
}

impl ShockArgs {
    pub fn spec(&self) -> CliResult<ShockSpec> {
        if let Some(path) = &self.shock {
            let spec: ShockSpec = serde_json::from_str(&read(path)?)?;
            spec.validate()?;
            return Ok(spec);
        }
        let targets = if self.target.is_empty() {
            ShockTargets::All
        } else {
            ShockTargets::Banks(self.target.clone())
        };
        let mut spec = ShockSpec::new(self.model.into(), targets, self.phi.unwrap_or(0.1));
        if let Some(a) = self.absolute {
            spec.magnitude = ShockMagnitude::Absolute(a);
        }
        if let Some(lgd) = self.lgd {
            spec.lgd = lgd;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct ShockCommand {
    /// Network document.
    #[arg(long)]
    pub network: PathBuf,
    #[command(flatten)]
    pub shock: ShockArgs,
    /// Also write the settled FN_s network here.
    #[arg(long)]
    pub settled: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsCommand {
    #[arg(long)]
    pub network: PathBuf,
    #[command(flatten)]
    pub shock: ShockArgs,
    #[arg(long, default_value = "FN_s", value_parser = parse_stage)]
    pub stage: Stage,
    /// Intervention plan, needed for FN_i and FN_is.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LayoutCommand {
    #[arg(long)]
    pub network: PathBuf,
    #[command(flatten)]
    pub shock: ShockArgs,
    #[arg(long, default_value = "FN_s", value_parser = parse_stage)]
    pub stage: Stage,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Layout configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    /// Plan file `{label, operations}`.
    #[arg(long, conflicts_with_all = ["remove", "cut"])]
    pub plan: Option<PathBuf>,
    /// Bank ids to remove, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub remove: Vec<String>,
    /// Edges to cut as `lender:borrower`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub cut: Vec<String>,
    #[arg(long, default_value = "plan")]
    pub label: String,
}

impl PlanArgs {
    pub fn plan(&self) -> CliResult<InterventionPlan> {
        if let Some(path) = &self.plan {
            return Ok(serde_json::from_str(&read(path)?)?);
        }
        let mut ops: Vec<Operation> = self
            .remove
            .iter()
            .map(|id| Operation::RemoveNode { id: id.clone() })
            .collect();
        for edge in &self.cut {
            let (from, to) = edge.split_once(':').ok_or_else(|| {
                CliError::Usage(format!("--cut expects lender:borrower, got `{edge}`"))
            })?;
            ops.push(Operation::CutEdge {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        Ok(InterventionPlan::new(self.label.clone(), ops))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Base {
    Original,
    Shocked,
}

impl From<Base> for InterventionBase {
    fn from(b: Base) -> Self {
        match b {
            Base::Original => InterventionBase::Original,
            Base::Shocked => InterventionBase::Shocked,
        }
    }
}

#[derive(Debug, Args)]
pub struct InterveneCommand {
    #[arg(long)]
    pub network: PathBuf,
    #[command(flatten)]
    pub shock: ShockArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, value_enum, default_value = "original")]
    pub base: Base,
}

#[derive(Debug, Args)]
pub struct CompareCommand {
    #[arg(long)]
    pub network: PathBuf,
    #[command(flatten)]
    pub shock: ShockArgs,
    /// JSON array of plans. Defaults to the S0..S4 candidates.
    #[arg(long)]
    pub plans: Option<PathBuf>,
    #[arg(long, default_value = "total_loss")]
    pub indicator: String,
    /// Rank by raw relief instead of relief per unit cost.
    #[arg(long)]
    pub absolute_relief: bool,
    #[arg(long, value_enum, default_value = "original")]
    pub base: Base,
}

#[derive(Debug, Args)]
pub struct CasestudyArgs {
    #[arg(long, default_value_t = 125)]
    pub n: usize,
    #[arg(long, default_value_t = 249)]
    pub target_edges: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0.1)]
    pub phi: f64,
    /// Layout configuration file.
    #[arg(long)]
    pub layout_config: Option<PathBuf>,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    Stage::parse(s).ok_or_else(|| format!("unknown stage `{s}` (FN_o, FN_s, FN_i, FN_is)"))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn load_network(path: &Path) -> CliResult<Network> {
    Ok(Network::from_json(&read(path)?)?)
}

fn pretty<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult<()> {
    match out {
        Some(path) => write(path, contents),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e)),
    }
}

fn reject_format(format: Format, allowed: &[Format], command: &str) -> CliResult<()> {
    if allowed.contains(&format) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "`{command}` cannot write {format:?}; choose one of {allowed:?}"
        )))
    }
}

fn layout_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<LayoutConfig> {
    let mut cfg = match path {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => LayoutConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// FN_o and FN_s, plus FN_i and FN_is when a plan is supplied.
fn scenario(
    network: &Path,
    shock: &ShockArgs,
    plan: Option<&InterventionPlan>,
) -> CliResult<Scenario> {
    let net = load_network(network)?;
    let mut s = Scenario::shock("cli", network.display().to_string(), net, shock.spec()?, 0)?;
    if let Some(plan) = plan {
        s.intervene(plan, InterventionBase::Original, false)?;
    }
    Ok(s)
}

fn load_plan(path: Option<&Path>) -> CliResult<Option<InterventionPlan>> {
    path.map(|p| Ok(serde_json::from_str(&read(p)?)?))
        .transpose()
}

pub fn run(cli: Cli) -> CliResult<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Generate(args) => {
            let format = cli.format.unwrap_or(Format::Json);
            reject_format(format, &[Format::Json, Format::Csv], "generate")?;
            let mut cfg: GeneratorConfig = match &args.config {
                Some(p) => serde_json::from_str(&read(p)?)?,
                None => GeneratorConfig::default(),
            };
            cfg.method = args.method.into();
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let (Some(assets), Some(liabilities)) = (args.assets, args.liabilities) {
                cfg.marginal_sampler = MarginalSampler::Explicit {
                    assets,
                    liabilities,
                };
            }
            let net: Network = match args.target_edges {
                Some(target) => {
                    let (seed, net) =
                        sweep_seeds(args.n, &cfg, target, args.tolerance, args.max_attempts)?;
                    eprintln!("accepted seed {seed}: {} edges", net.edge_count());
                    net
                }
                None => generate(args.n, &cfg)?,
            };
            match format {
                Format::Csv => emit(out, &net.to_edge_csv()?),
                _ => emit(out, &net.to_json()?),
            }
        }
        Command::Shock(args) => {
            let format = cli.format.unwrap_or(Format::Csv);
            reject_format(format, &[Format::Json, Format::Csv], "shock")?;
            let s = scenario(&args.network, &args.shock, None)?;
            if let Some(path) = &args.settled {
                write(path, &s.shocked.to_json()?)?;
            }
            match format {
                Format::Csv => emit(out, &s.propagation.to_csv()?),
                _ => emit(out, &pretty(&s.shock_outcome()?)?),
            }
        }
        Command::Metrics(args) => {
            let format = cli.format.unwrap_or(Format::Csv);
            reject_format(format, &[Format::Json, Format::Csv], "metrics")?;
            let plan = load_plan(args.plan.as_deref())?;
            let s = scenario(&args.network, &args.shock, plan.as_ref())?;
            let risk = s.metrics(args.stage, &MetricsConfig::default())?;
            match format {
                Format::Csv => emit(out, &risk.to_csv()?),
                _ => emit(out, &pretty(&risk)?),
            }
        }
        Command::Layout(args) => {
            let format = cli.format.unwrap_or(Format::Svg);
            reject_format(format, &[Format::Json, Format::Svg], "layout")?;
            let plan = load_plan(args.plan.as_deref())?;
            let s = scenario(&args.network, &args.shock, plan.as_ref())?;
            let cfg = layout_config(args.config.as_deref(), cli.seed)?;
            let metrics = MetricsConfig::default();
            let layout = s.layout(args.stage, &metrics, &cfg, &mut |_, _| {})?;
            match format {
                Format::Svg => {
                    let risk = s.metrics(args.stage, &metrics)?;
                    emit(out, &render_svg(&layout, &risk, cfg.canvas)?)
                }
                _ => emit(out, &pretty(&layout)?),
            }
        }
        Command::Intervene(args) => {
            let format = cli.format.unwrap_or(Format::Json);
            reject_format(format, &[Format::Json, Format::Csv], "intervene")?;
            let mut s = scenario(&args.network, &args.shock, None)?;
            let outcome = s.intervene(&args.plan.plan()?, args.base.into(), false)?;
            match format {
                Format::Csv => emit(out, &relief_table(&[&outcome.assessment])?),
                _ => emit(out, &pretty(&outcome)?),
            }
        }
        Command::Compare(args) => {
            let format = cli.format.unwrap_or(Format::Csv);
            reject_format(format, &[Format::Json, Format::Csv], "compare")?;
            let s = scenario(&args.network, &args.shock, None)?;
            let plans: Vec<InterventionPlan> = match &args.plans {
                Some(p) => serde_json::from_str(&read(p)?)?,
                None => s.candidate_plans(&MetricsConfig::default())?,
            };
            let key = RankingKey {
                indicator: args.indicator.clone(),
                per_cost: !args.absolute_relief,
            };
            let ranked = s.compare(&plans, &key, args.base.into())?;
            match format {
                Format::Csv => emit(out, &ranked_relief_table(&ranked)?),
                _ => emit(out, &pretty(&ranked)?),
            }
        }
        Command::Serve(config) => {
            let _ = tracing_subscriber::fmt()
                .with_max_level(tracing_subscriber::filter::LevelFilter::INFO)
                .try_init();
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::Io(PathBuf::from("<runtime>"), e))?;
            runtime
                .block_on(systemic_service::serve(config))
                .map_err(|e| CliError::Usage(e.to_string()))
        }
        Command::Casestudy(args) => {
            if cli.format.is_some() {
                return Err(CliError::Usage(
                    "`casestudy` writes a fixed set of files; drop --format".into(),
                ));
            }
            let dir = out.unwrap_or(Path::new("casestudy"));
            casestudy(&args, cli.seed.unwrap_or(0), dir)
        }
    }
}

/// Relief rows in rank order.
pub fn ranked_relief_table(ranked: &[RankedAssessment<f64>]) -> CliResult<String> {
    let rows: Vec<&Assessment> = ranked.iter().map(|r| &r.assessment).collect();
    Ok(relief_table(&rows)?)
}

#[derive(Debug, Serialize)]
struct Manifest {
    requested_seed: u64,
    seed: u64,
    n: usize,
    edges: usize,
    target_edges: usize,
    shock: ShockSpec,
    layout_config_hash: String,
    files: Vec<&'static str>,
}

const CASESTUDY_FILES: [&str; 13] = [
    "manifest.json",
    "network.json",
    "network_FN_s.json",
    "propagation.csv",
    "metrics_FN_o.csv",
    "metrics_FN_s.csv",
    "layout_FN_s.json",
    "layout_FN_s.svg",
    "strategies.json",
    "ranking.json",
    "relief.csv",
    "intervention_S0.json",
    "layout_FN_is.svg",
];

/// Generate, shock, measure, lay out, plan S0..S4 and rank them. Output is a pure function of
/// the arguments and `seed`.
pub fn casestudy(args: &CasestudyArgs, seed: u64, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    let gen = GeneratorConfig {
        method: EstimationMethod::MinDensity,
        seed,
        ..GeneratorConfig::default()
    };
    let (accepted, net) = sweep_seeds::<f64>(args.n, &gen, args.target_edges, args.tolerance, 200)?;
    let spec = ShockSpec::new(PropagationModel::Linear, ShockTargets::All, args.phi);
    let layout_cfg = layout_config(args.layout_config.as_deref(), Some(seed))?;
    let metrics = MetricsConfig::default();
    let file = |name: &str| dir.join(name);

    write(&file("network.json"), &net.to_json()?)?;
    let mut s = Scenario::shock("casestudy", "network.json", net, spec.clone(), 0)?;
    write(&file("network_FN_s.json"), &s.shocked.to_json()?)?;
    write(&file("propagation.csv"), &s.propagation.to_csv()?)?;
    write(
        &file("metrics_FN_o.csv"),
        &s.metrics(Stage::Original, &metrics)?.to_csv()?,
    )?;
    let risk = s.metrics(Stage::Shocked, &metrics)?;
    write(&file("metrics_FN_s.csv"), &risk.to_csv()?)?;

    let layout = s.layout(Stage::Shocked, &metrics, &layout_cfg, &mut |_, _| {})?;
    write(&file("layout_FN_s.json"), &pretty(&layout)?)?;
    write(
        &file("layout_FN_s.svg"),
        &render_svg(&layout, &risk, layout_cfg.canvas)?,
    )?;

    let plans = s.candidate_plans(&metrics)?;
    write(&file("strategies.json"), &pretty(&plans)?)?;
    let ranked = s.compare(&plans, &RankingKey::default(), InterventionBase::Original)?;
    write(&file("ranking.json"), &pretty(&ranked)?)?;
    write(&file("relief.csv"), &ranked_relief_table(&ranked)?)?;

    let outcome = s.intervene(&plans[0], InterventionBase::Original, false)?;
    write(&file("intervention_S0.json"), &pretty(&outcome)?)?;
    let after = s.layout(
        Stage::IntervenedShocked,
        &metrics,
        &layout_cfg,
        &mut |_, _| {},
    )?;
    let after_risk = s.metrics(Stage::IntervenedShocked, &metrics)?;
    write(
        &file("layout_FN_is.svg"),
        &render_svg(&after, &after_risk, layout_cfg.canvas)?,
    )?;

    let manifest = Manifest {
        requested_seed: seed,
        seed: accepted,
        n: args.n,
        edges: s.original.edge_count(),
        target_edges: args.target_edges,
        shock: spec,
        layout_config_hash: format!("{:016x}", layout_cfg.fingerprint()),
        files: CASESTUDY_FILES.to_vec(),
    };
    write(&file("manifest.json"), &pretty(&manifest)?)?;
    Ok(())
}
