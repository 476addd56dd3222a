use std::fs;
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rewardnet_core::abm::{self, AbmError, GridResult, GridSpec};
use rewardnet_core::analysis::{self, AnalysisError};
use rewardnet_core::dqn::{train_with, Checkpoint, TrainConfig, TrainError};
use rewardnet_core::experiment::{run_design, Engine, ExperimentError, MachinePlayer, Pool, PopulationRun};
use rewardnet_core::network::{generate_batch, read_pool, write_pool, GenError, Network};
use rewardnet_core::strategies::RulePolicy;

use crate::config::{self, AbmFile, ExperimentFile, GenFile};
use crate::manifest::RunManifest;
use crate::{
    AbmArgs, AnalyzeArgs, Cli, CliError, Command, Common, ExperimentArgs, GenArgs, ScoreArgs, ServeArgs, TrainArgs,
};

pub const POOLS: [&str; 3] = ["training", "validation", "experiment"];
pub const RUNS_FILE: &str = "runs.json";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let root = cli.out_root;
    match cli.command {
        Command::Gen(a) => gen(&root, a),
        Command::Score(a) => score(a),
        Command::Train(a) => train(&root, a),
        Command::Abm(a) => abm_cmd(&root, a),
        Command::Experiment(a) => experiment(&root, a),
        Command::Analyze(a) => analyze(&root, a),
        Command::Serve(a) => serve(a),
    }
}

fn out_dir(root: &Path, common: &Common, sub: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| root.join(sub))
}

fn pool_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.jsonl"))
}

pub fn load_pool(path: &Path) -> Result<Vec<Network>, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open pool {}: {e}", path.display())))?;
    read_pool(BufReader::new(f)).with_context(|| format!("reading {}", path.display())).map_err(CliError::Runtime)
}

pub fn load_machines(paths: &[PathBuf]) -> Result<Vec<MachinePlayer>, CliError> {
    paths
        .iter()
        .map(|p| {
            if !p.is_file() {
                return Err(CliError::Usage(format!("checkpoint {} not found", p.display())));
            }
            let ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            let net = ck.network().with_context(|| format!("loading {}", p.display()))?;
            Ok(MachinePlayer { seed: ck.seed, net })
        })
        .collect()
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::InvalidSpec(_) | ExperimentError::PoolExhausted { .. } | ExperimentError::MissingMachines { .. } => {
            CliError::Config(e.to_string())
        }
        other => CliError::runtime(other),
    }
}

fn gen(root: &Path, a: GenArgs) -> Result<(), CliError> {
    let mut file: GenFile = config::load(a.common.config.as_deref())?;
    file.generator.seed = a.common.seed;
    if let Some(c) = a.count {
        file.count = c;
    }
    let dir = out_dir(root, &a.common, "gen");
    let mut m = RunManifest::start("gen", a.common.config.as_deref(), a.common.seed, &dir)?;
    m.output("config.toml", config::render(&file)?.as_bytes())?;
    let mut stats = serde_json::Map::new();
    for name in POOLS {
        let (nets, s) = generate_batch(&file.generator, name, file.count).map_err(|e| match e {
            GenError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::runtime(other),
        })?;
        let mut buf = Vec::new();
        write_pool(&mut buf, &nets).map_err(CliError::runtime)?;
        m.output(&format!("{name}.jsonl"), &buf)?;
        println!(
            "{name}: kept {} of {} candidates (degree rejections {}, constraint rejections {}, filter rejections {}, filter fraction {:.3})",
            s.accepted,
            s.candidates(),
            s.degree_rejections,
            s.constraint_rejections,
            s.filter_rejections,
            s.filter_fraction()
        );
        stats.insert(name.to_string(), serde_json::to_value(s).map_err(CliError::runtime)?);
    }
    let mut text = serde_json::to_string_pretty(&stats).map_err(CliError::runtime)?;
    text.push('\n');
    m.output("stats.json", text.as_bytes())?;
    m.finish()?;
    Ok(())
}

fn score(a: ScoreArgs) -> Result<(), CliError> {
    let nets = load_pool(&a.pool)?;
    let policy = RulePolicy { kind: a.policy, seed: a.seed };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut sum = 0i64;
    for n in &nets {
        let t = policy.run(n);
        sum += t.total as i64;
        writeln!(out, "{},{},{}", n.id(), a.policy, t.total).map_err(CliError::runtime)?;
    }
    if !nets.is_empty() {
        eprintln!("mean {:.1} over {} networks", sum as f64 / nets.len() as f64, nets.len());
    }
    Ok(())
}

fn train(root: &Path, a: TrainArgs) -> Result<(), CliError> {
    let mut cfg: TrainConfig = config::load(a.common.config.as_deref())?;
    cfg.seed = a.common.seed;
    if let Some(e) = a.episodes {
        cfg.episodes = e;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let training = load_pool(&pool_file(&a.pools, "training"))?;
    let validation = load_pool(&pool_file(&a.pools, "validation"))?;
    let dir = out_dir(root, &a.common, "train");
    let mut m = RunManifest::start("train", a.common.config.as_deref(), cfg.seed, &dir)?;
    m.output("config.toml", config::render(&cfg)?.as_bytes())?;
    let outcome = train_with(&cfg, &training, &validation, |p| {
        eprintln!("episode {:>6}  reward {:>7.1}  max level {:.2}  epsilon {:.3}", p.episode, p.mean_reward, p.mean_max_level, p.epsilon)
    })
    .map_err(|e| match e {
        TrainError::InvalidConfig(_) => CliError::Config(e.to_string()),
        other => CliError::runtime(other),
    })?;
    let curve = analysis::to_csv(&outcome.curve).map_err(CliError::runtime)?;
    m.output(&format!("curve-{}.csv", cfg.seed), &curve)?;
    let ck = Checkpoint::new(&outcome.policy, &cfg);
    m.output(&format!("machine-{}.json", cfg.seed), ck.to_json().as_bytes())?;
    m.finish()?;
    Ok(())
}

fn grid_spec(arg: Option<&str>, fallback: GridSpec) -> Result<GridSpec, CliError> {
    match arg {
        None | Some("default") => Ok(fallback),
        Some(path) => {
            let p = Path::new(path);
            if !p.is_file() {
                return Err(CliError::Usage(format!("grid `{path}` is neither `default` nor a file")));
            }
            let text = fs::read_to_string(p).map_err(CliError::runtime)?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))
        }
    }
}

fn write_grid(m: &mut RunManifest, prefix: &str, g: &GridResult) -> Result<(), CliError> {
    let mut buf = Vec::new();
    g.write_heatmap_csv(&mut buf).map_err(CliError::runtime)?;
    m.output(&format!("{prefix}heatmap.csv"), &buf)?;
    buf.clear();
    g.write_boundary_csv(&mut buf).map_err(CliError::runtime)?;
    m.output(&format!("{prefix}boundary.csv"), &buf)?;
    buf.clear();
    g.write_uplift_csv(&mut buf).map_err(CliError::runtime)?;
    m.output(&format!("{prefix}uplift.csv"), &buf)?;
    Ok(())
}

fn abm_cmd(root: &Path, a: AbmArgs) -> Result<(), CliError> {
    if let Some(f) = a.figure {
        if f != 4 {
            return Err(CliError::Usage(format!("no grid for figure {f}; only 4 is available")));
        }
    }
    let mut file: AbmFile = config::load(a.common.config.as_deref())?;
    file.grid = grid_spec(a.grid.as_deref(), file.grid)?;
    file.model.seed = a.common.seed;
    if let Some(r) = a.reps {
        file.model.replications = r;
    }
    let invalid = |e: AbmError| CliError::Config(e.to_string());
    file.model.validate().map_err(invalid)?;
    file.grid.validate().map_err(invalid)?;
    let dir = out_dir(root, &a.common, "abm");
    let mut m = RunManifest::start("abm", a.common.config.as_deref(), a.common.seed, &dir)?;
    m.output("config.toml", config::render(&file)?.as_bytes())?;
    let (grid, records) = abm::run_grid_detailed(&file.model, &file.grid).map_err(invalid)?;
    let mut buf = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut buf, r).map_err(CliError::runtime)?;
        buf.push(b'\n');
    }
    m.output("records.jsonl", &buf)?;
    write_grid(&mut m, "", &grid)?;
    eprintln!("{} replication records", records.len());
    if a.sensitivity {
        let suite = abm::sensitivity_suite(&file.model, &file.grid).map_err(invalid)?;
        write_grid(&mut m, "one_machine/", &suite.one_machine)?;
        write_grid(&mut m, "sixteen_agents/", &suite.sixteen_agents)?;
        write_grid(&mut m, "all_candidates/", &suite.all_candidates)?;
    }
    m.finish()?;
    Ok(())
}

/// Parses `f=<value>` (a bare number is accepted too).
pub fn parse_fidelity(s: &str) -> Result<f64, CliError> {
    let v = s.strip_prefix("f=").unwrap_or(s);
    let f: f64 = v.parse().map_err(|_| CliError::Usage(format!("--scripted expects f=<fidelity>, got `{s}`")))?;
    if !(0.0..=1.0).contains(&f) {
        return Err(CliError::Config(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f)
}

fn experiment(root: &Path, a: ExperimentArgs) -> Result<(), CliError> {
    let mut file: ExperimentFile = config::load(a.common.config.as_deref())?;
    file.scripted.fidelity = parse_fidelity(&a.scripted)?;
    if let Some(n) = a.populations {
        file.populations = n;
    }
    if let Some(d) = a.discovery {
        file.scripted.discovery_prob = d;
    }
    if let Some(s) = a.selection {
        file.scripted.selection = s;
    }
    if file.populations == 0 || file.populations % 2 != 0 {
        return Err(CliError::Config(format!("{} populations cannot be split evenly between conditions", file.populations)));
    }
    file.scripted.validate().map_err(experiment_error)?;
    let networks = load_pool(&pool_file(&a.pools, "experiment"))?;
    let machines = load_machines(&a.machines)?;
    let dir = out_dir(root, &a.common, "experiment");
    let mut m = RunManifest::start("experiment", a.common.config.as_deref(), a.common.seed, &dir)?;
    m.output("config.toml", config::render(&file)?.as_bytes())?;

    let mut buf = Vec::new();
    write_pool(&mut buf, &networks).map_err(CliError::runtime)?;
    m.output("experiment.jsonl", &buf)?;
    for (i, p) in a.machines.iter().enumerate() {
        m.output(&format!("machines/machine-{i}.json"), &fs::read(p).map_err(CliError::runtime)?)?;
    }

    let pool = Pool::new(networks).map_err(experiment_error)?;
    let mut engine = Engine::new(pool, machines, a.common.seed);
    let ids = run_design(&mut engine, file.populations / 2, &file.population, &file.scripted, a.common.seed)
        .map_err(experiment_error)?;
    let mut classes = String::new();
    for id in &ids {
        let pop = engine.population(id).map_err(CliError::runtime)?;
        m.output(&format!("ledgers/{id}.jsonl"), pop.ledger().to_jsonl().as_bytes())?;
        let c = analysis::classify(pop.run()).map_err(CliError::runtime)?;
        classes.push_str(&serde_json::to_string(&c).map_err(CliError::runtime)?);
        classes.push('\n');
        println!("{id} {} {}", c.condition, c.outcome);
    }
    m.output("classification.jsonl", classes.as_bytes())?;
    let runs = engine.runs();
    m.output(RUNS_FILE, serde_json::to_string(&runs).map_err(CliError::runtime)?.as_bytes())?;
    m.finish()?;
    Ok(())
}

/// Loads a finished experiment directory: runs, its pool and its machines.
pub fn load_experiment(dir: &Path) -> Result<(Vec<PopulationRun>, Pool, Vec<MachinePlayer>), CliError> {
    let runs_path = dir.join(RUNS_FILE);
    if !runs_path.is_file() {
        return Err(CliError::Usage(format!("{} holds no experiment runs", dir.display())));
    }
    let text = fs::read_to_string(&runs_path).map_err(CliError::runtime)?;
    let runs: Vec<PopulationRun> = serde_json::from_str(&text).with_context(|| format!("parsing {}", runs_path.display()))?;
    let pool = Pool::new(load_pool(&dir.join("experiment.jsonl"))?).map_err(CliError::runtime)?;
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir.join("machines")) {
        Ok(entries) => entries.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(_) => Vec::new(),
    };
    // machine-<i>.json, ordered by i
    paths.sort_by_key(|p| {
        p.file_stem().and_then(|s| s.to_str()).and_then(|s| s.strip_prefix("machine-")).and_then(|i| i.parse::<usize>().ok())
    });
    Ok((runs, pool, load_machines(&paths)?))
}

fn analyze(root: &Path, a: AnalyzeArgs) -> Result<(), CliError> {
    let (mut runs, pool, machines) = load_experiment(&a.input)?;
    if let Some(p) = &a.annotations {
        if !p.is_file() {
            return Err(CliError::Usage(format!("annotation file {} not found", p.display())));
        }
        let notes = analysis::read_annotations(p).map_err(|e| CliError::Config(e.to_string()))?;
        let applied = analysis::annotate(&mut runs, &notes);
        eprintln!("applied {applied} of {} annotations", notes.len());
    }
    let analysis_err = |e: AnalysisError| match e {
        AnalysisError::NoReferenceMachine => CliError::Config(e.to_string()),
        other => CliError::runtime(other),
    };
    let seed = RunManifest::read(&a.input).map(|m| m.seed).unwrap_or(0);
    let dir = a.export.clone().unwrap_or_else(|| root.join("analyze"));
    let mut m = RunManifest::start("analyze", None, seed, &dir)?;
    let tidy = analysis::tidy(&runs, &machines, &pool, a.from_generation).map_err(analysis_err)?;
    let paths = analysis::export_tidy(&tidy, &dir).map_err(analysis_err)?;
    for p in [&paths.trials, &paths.moves, &paths.participants] {
        m.outputs.push(p.file_name().expect("file").to_string_lossy().into_owned());
    }
    let metrics = analysis::aggregate(&tidy);
    m.output("metrics.csv", &analysis::to_csv(&metrics).map_err(analysis_err)?)?;
    let (mut classes, mut lineages) = (String::new(), String::new());
    for run in &runs {
        let c = analysis::classify(run).map_err(analysis_err)?;
        classes.push_str(&serde_json::to_string(&c).map_err(CliError::runtime)?);
        classes.push('\n');
        let l = analysis::lineage_stats(run).map_err(analysis_err)?;
        lineages.push_str(&serde_json::to_string(&l).map_err(CliError::runtime)?);
        lineages.push('\n');
    }
    m.output("classification.jsonl", classes.as_bytes())?;
    m.output("lineage.jsonl", lineages.as_bytes())?;
    println!("{} trial rows, {} move rows, {} participant rows", tidy.trials.len(), tidy.moves.len(), tidy.participants.len());
    m.finish()?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let networks = load_pool(&pool_file(&a.pools, "experiment"))?;
    let machines = load_machines(&a.machines)?;
    let pool = Pool::new(networks).map_err(experiment_error)?;
    let engine = Engine::new(pool, machines, a.seed);
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    rt.block_on(crate::server::serve(engine, &a.host, a.port)).map_err(CliError::Runtime)
}
