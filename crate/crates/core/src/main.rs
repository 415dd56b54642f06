use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toolamp::amplifier::{self, score_candidate, write_library, ValidationEvaluator};
use toolamp::composition::{instantiate_with, parse_name, serialize_name, CompositionTree, PolicyFactory};
use toolamp::config::RunConfig;
use toolamp::dataset::{gold_map, load_dataset, save_dataset, ValidationInstance};
use toolamp::metrics::MetricId;
use toolamp::report::{amp_rows, render_amp_table, render_mas_table, write_jsonl, ReportFile};
use toolamp::simenv::{gen_simenv, SimEnvSpec, SimPolicy};
use toolamp::toolkit::{CostLedger, ToolDescriptor, ToolRegistry};
use toolamp::topology::{build_topology, evaluate_network, TopologyKind};
use toolamp::Error;

#[derive(Parser)]
#[command(name = "toolamp", version, about = "Build and evaluate hierarchical agent-composite tools")]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for the best composite tool on a validation set.
    Amplify(AmplifyArgs),
    /// Score one named composition on a test set.
    Evaluate(EvaluateArgs),
    /// Run a baseline multi-agent network.
    Mas(MasArgs),
    /// Parse a composition name and print its structure.
    ParseName { name: String },
    /// Generate a synthetic environment (dataset and tool registry).
    GenEnv(GenEnvArgs),
    /// Print tables for every JSON Lines file in a run directory.
    Report { run_dir: PathBuf },
}

#[derive(Args, Clone, Default)]
struct Source {
    /// JSON list of tool descriptors.
    #[arg(long)]
    tools: Option<PathBuf>,
    /// Synthetic environment spec; supplies tools, policy and a default dataset.
    #[arg(long)]
    env: Option<PathBuf>,
}

#[derive(Args)]
struct AmplifyArgs {
    #[command(flatten)]
    source: Source,
    /// Validation set (JSON Lines); defaults to the environment's dataset.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Fitness metric; must be higher-is-better.
    #[arg(long)]
    metric: Option<MetricId>,
    /// Minimum gain for another stage-1 layer.
    #[arg(long)]
    delta: Option<f64>,
    /// Entries paired with the leader in each stage-2 round.
    #[arg(long)]
    k: Option<usize>,
    /// Cap on stage-1 layers per tool.
    #[arg(long)]
    max_layers: Option<u32>,
    /// Cap on stage-2 rounds.
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Base seed for tool and planner randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Score instances and stage-2 candidates on the rayon pool.
    #[arg(long)]
    parallel: bool,
    /// Library output (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    /// Also write one report row per candidate here.
    #[arg(long)]
    rows: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    source: Source,
    /// Composition name, e.g. "['A_0', 'B_1']".
    #[arg(long)]
    name: String,
    /// Test set (JSON Lines); defaults to the environment's dataset.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Metric reported as fitness.
    #[arg(long)]
    metric: Option<MetricId>,
    /// Base seed for tool and planner randomness.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MasArgs {
    #[command(flatten)]
    source: Source,
    /// Topology kind.
    #[arg(long)]
    kind: Option<TopologyKind>,
    /// Number of agents.
    #[arg(long)]
    num: Option<usize>,
    /// Interaction rounds; defaults per kind.
    #[arg(long)]
    rounds: Option<u32>,
    /// Seed for random topologies and planner sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation set (JSON Lines); defaults to the environment's dataset.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Metric reported as fitness.
    #[arg(long)]
    metric: Option<MetricId>,
    /// Give every agent the atomic tools.
    #[arg(long)]
    with_tools: bool,
    /// Write the result row here (JSON Lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenEnvArgs {
    /// Environment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for dataset.jsonl and tools.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Writes to stdout; a closed pipe (e.g. `| head`) ends the process quietly.
fn emit(args: std::fmt::Arguments<'_>) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: stdout: {e}");
        std::process::exit(1);
    }
}

macro_rules! out {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!("{}\n", format_args!($($arg)*))) };
}

fn read_text(path: &Path, wrap: fn(String) -> Error) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| wrap(format!("{}: {e}", path.display())))
}

fn load_env_spec(path: &Path) -> Result<SimEnvSpec, Error> {
    serde_json::from_str(&read_text(path, Error::Config)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_descriptors(path: &Path) -> Result<Vec<ToolDescriptor>, Error> {
    serde_json::from_str(&read_text(path, Error::Config)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Tools, planner policies and (for synthetic environments) a default dataset.
struct Toolbox {
    descriptors: Vec<ToolDescriptor>,
    policy: SimPolicy,
    default_data: Option<Vec<ValidationInstance>>,
}

impl Toolbox {
    fn resolve(source: &Source, config: &RunConfig) -> Result<Self, Error> {
        let env_spec = match &source.env {
            Some(path) => Some(load_env_spec(path)?),
            None if source.tools.is_none() => config.env.clone(),
            None => None,
        };
        if let Some(spec) = env_spec {
            let env = gen_simenv(&spec)?;
            return Ok(Toolbox { descriptors: env.descriptors, policy: spec.policy, default_data: Some(env.dataset) });
        }
        let path = source
            .tools
            .clone()
            .or_else(|| config.tools.registry.clone())
            .ok_or_else(|| Error::Config("no tools: pass --tools or --env, or set them in the config".into()))?;
        Ok(Toolbox { descriptors: load_descriptors(&path)?, policy: config.tools.policy, default_data: None })
    }

    fn policies(&self) -> Box<dyn PolicyFactory> {
        let policy = self.policy;
        Box::new(move |_: &CompositionTree, layers: u32| policy.at_layer(layers))
    }

    fn data(&self, path: Option<&Path>) -> Result<Vec<ValidationInstance>, Error> {
        match (path, &self.default_data) {
            (Some(p), _) => Ok(load_dataset(p)?),
            (None, Some(d)) => Ok(d.clone()),
            (None, None) => Err(Error::Config("no dataset given".into())),
        }
    }

    /// Registry with the atomic tools and the answer key of `data`.
    fn registry(&self, data: &[ValidationInstance]) -> Result<ToolRegistry, Error> {
        let mut registry = ToolRegistry::new(data[0].task_kind.as_str());
        registry.set_gold(gold_map(data));
        for d in &self.descriptors {
            registry.register_tool(d.clone())?;
        }
        Ok(registry)
    }

    fn tool_ids(&self) -> Vec<String> {
        self.descriptors.iter().map(|d| d.tool_id.clone()).collect()
    }
}

/// Fails fast with the right exit code if an atomic tool cannot answer at all.
fn probe_tools(registry: &ToolRegistry, ids: &[String], query: &str) -> Result<(), Error> {
    for id in ids {
        registry.invoke(id, query, &mut CostLedger::default(), 0)?;
    }
    Ok(())
}

fn amplify(args: AmplifyArgs, config: RunConfig) -> Result<(), Error> {
    let mut search = config.search.clone();
    if let Some(m) = args.metric {
        search.fitness_metric = m;
    }
    search.delta = args.delta.unwrap_or(search.delta);
    search.top_k = args.k.unwrap_or(search.top_k);
    search.max_layers = args.max_layers.unwrap_or(search.max_layers);
    search.max_stage2_rounds = args.max_rounds.unwrap_or(search.max_stage2_rounds);
    search.seed = args.seed.unwrap_or(search.seed);
    search.parallel |= args.parallel;
    search.validate()?;
    let toolbox = Toolbox::resolve(&args.source, &config)?;
    let data = toolbox.data(args.val.as_deref())?;
    let registry = toolbox.registry(&data)?;
    let ids = toolbox.tool_ids();
    probe_tools(&registry, &ids, &data[0].input)?;
    let mut evaluator = ValidationEvaluator::new(registry, data, toolbox.policies(), &search);
    let result = amplifier::run(&search, &ids, &mut evaluator)?;
    write_library(&args.out, &result.library)?;
    let rows = amp_rows(&result);
    if let Some(path) = &args.rows {
        write_jsonl(path, &rows).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    out!("{}", render_amp_table(&rows));
    outln!("best: {} ({} = {:.4})", result.best.name(), result.best.metric, result.best.score);
    outln!("validation tokens: {}", result.total_ledger.total_tokens());
    Ok(())
}

fn evaluate(args: EvaluateArgs, config: RunConfig) -> Result<(), Error> {
    let tree = parse_name(&args.name)?;
    let toolbox = Toolbox::resolve(&args.source, &config)?;
    let data = toolbox.data(args.test.as_deref())?;
    let mut registry = toolbox.registry(&data)?;
    let id = instantiate_with(&tree, &mut registry, toolbox.policies().as_ref(), config.search.stage1_arity)?;
    let metric = args.metric.unwrap_or(config.search.fitness_metric);
    let seed = args.seed.unwrap_or(config.search.seed);
    let (report, ledger) = score_candidate(&registry, &id, &data, metric, seed, config.search.parallel)?;
    let out = serde_json::json!({ "name": serialize_name(&tree), "report": report, "ledger": ledger });
    outln!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}

fn mas(args: MasArgs, config: RunConfig) -> Result<(), Error> {
    let kind = args.kind.unwrap_or(config.mas.kind);
    let num = args.num.unwrap_or(config.mas.num);
    let rounds = args.rounds.or(config.mas.rounds).unwrap_or(kind.default_rounds());
    let seed = args.seed.unwrap_or(config.search.seed);
    let metric = args.metric.unwrap_or(config.search.fitness_metric);
    let toolbox = Toolbox::resolve(&args.source, &config)?;
    let data = toolbox.data(args.val.as_deref())?;
    let registry = toolbox.registry(&data)?;
    let spec = build_topology(kind, num, rounds, seed)?;
    let ids = toolbox.tool_ids();
    let toolset = (args.with_tools || config.mas.with_tools).then_some(ids.as_slice());
    let policy = toolbox.policy.at_layer(1);
    let row = evaluate_network(&spec, &data, &policy, &registry, toolset, metric, seed)?;
    if let Some(path) = &args.out {
        write_jsonl(path, std::slice::from_ref(&row)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    out!("{}", render_mas_table(&[row]));
    Ok(())
}

fn gen_env(args: GenEnvArgs) -> Result<(), Error> {
    let mut spec = load_env_spec(&args.spec)?;
    spec.seed = args.seed.unwrap_or(spec.seed);
    let env = gen_simenv(&spec)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Data(format!("{}: {e}", args.out_dir.display())))?;
    let data_path = args.out_dir.join("dataset.jsonl");
    let tools_path = args.out_dir.join("tools.json");
    save_dataset(&data_path, &env.dataset)?;
    let tools = serde_json::to_string_pretty(&env.descriptors).expect("descriptors serialize") + "\n";
    std::fs::write(&tools_path, tools).map_err(|e| Error::Data(format!("{}: {e}", tools_path.display())))?;
    outln!("wrote {} instances to {}", env.dataset.len(), data_path.display());
    outln!("wrote {} tools to {}", env.descriptors.len(), tools_path.display());
    Ok(())
}

fn parse_name_cmd(name: &str) -> Result<(), Error> {
    let tree = parse_name(name)?;
    let leaves: Vec<String> = tree.leaves().iter().filter_map(|l| l.leaf_id()).collect();
    let out = serde_json::json!({
        "name": serialize_name(&tree),
        "leaves": leaves,
        "depth": tree.depth(),
        "layers": tree.layers(),
        "nodes": tree.node_count(),
    });
    outln!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}

fn report(run_dir: &Path) -> Result<(), Error> {
    let entries = std::fs::read_dir(run_dir).map_err(|e| Error::Data(format!("{}: {e}", run_dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no .jsonl files in {}", run_dir.display())));
    }
    let mut rendered = 0;
    for path in files {
        let text = read_text(&path, Error::Data)?;
        match ReportFile::parse(&text) {
            Ok(parsed) => {
                outln!("== {} ==", path.display());
                out!("{}", parsed.render());
                rendered += 1;
            }
            Err(e) => eprintln!("skipping {}: {e}", path.display()),
        }
    }
    if rendered == 0 {
        return Err(Error::Data(format!("no report files in {}", run_dir.display())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let result = config.and_then(|config| match cli.command {
        Command::Amplify(args) => amplify(args, config),
        Command::Evaluate(args) => evaluate(args, config),
        Command::Mas(args) => mas(args, config),
        Command::ParseName { name } => parse_name_cmd(&name),
        Command::GenEnv(args) => gen_env(args),
        Command::Report { run_dir } => report(&run_dir),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
