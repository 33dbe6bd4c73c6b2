use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use otnas_core::dataio::{generate_synthetic, load_dataset, save_dataset, Split, SyntheticTaskSpec, MANIFEST_FILE};
use otnas_core::pipeline::{
    distance_matrix, grid_search_oracle, loo_pretrain_run, ot_transfer_run, scratch_run, write_reports,
    RunResult,
};
use otnas_core::supernet::{evaluate, init_supernet, train_supernet};
use otnas_core::zoo::{EntryMetadata, ZooIndex};
use otnas_core::{Error, LabeledDataset, Result};

use crate::config::CliConfig;
use crate::{Cli, Command};

struct Context {
    config: CliConfig,
    out: PathBuf,
    seeds: Vec<u64>,
}

pub fn run(cli: &Cli) -> Result<Value> {
    let config = CliConfig::load(&cli.config)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let ctx = Context {
        out: cli.out.clone().unwrap_or_else(|| config.output_dir.clone()),
        seeds: cli.seed.map_or_else(|| config.seeds.clone(), |s| vec![s]),
        config,
    };
    match &cli.command {
        Command::GenData { spec } => gen_data(&ctx, spec.as_deref()),
        Command::Pretrain { target } => pretrain(&ctx, target.as_deref(), cli.seed),
        Command::Dist => dist(&ctx),
        Command::Transfer { target } => transfer(&ctx, target),
        Command::Scratch { target } => scratch(&ctx, target),
        Command::Oracle { target } => oracle(&ctx, target),
        Command::Loo { target } => loo(&ctx, target),
        Command::Report => report(&ctx),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// Every dataset under the dataset directory, ordered by name.
fn load_all(dir: &Path) -> Result<Vec<LabeledDataset>> {
    let entries = fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::NotFound(format!("dataset directory {} does not exist", dir.display()))
        }
        _ => io_error(dir, e),
    })?;
    let mut dirs = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| io_error(dir, e))?.path();
        if p.join(MANIFEST_FILE).is_file() {
            dirs.push(p);
        }
    }
    let mut datasets = dirs.iter().map(load_dataset).collect::<Result<Vec<_>>>()?;
    datasets.sort_by(|a, b| a.name().cmp(b.name()));
    Ok(datasets)
}

fn find<'a>(datasets: &'a [LabeledDataset], name: &str) -> Result<&'a LabeledDataset> {
    datasets
        .iter()
        .find(|d| d.name() == name)
        .ok_or_else(|| Error::NotFound(format!("no dataset named {name}")))
}

fn save_run(out: &Path, run: &RunResult) -> Result<()> {
    let id = run.run_id();
    let mut json = serde_json::to_vec_pretty(run)?;
    json.push(b'\n');
    write(&out.join("runs").join(format!("{id}.json")), &json)?;
    write(&out.join("curves").join(format!("{id}.csv")), run.curve.to_csv().as_bytes())?;
    eprintln!("{id}: accuracy {:.4}", run.final_accuracy);
    Ok(())
}

fn run_summaries(runs: &[RunResult]) -> Value {
    runs.iter()
        .map(|r| json!({"id": r.run_id(), "source": r.source, "accuracy": r.final_accuracy}))
        .collect()
}

fn gen_data(ctx: &Context, spec: Option<&Path>) -> Result<Value> {
    let tasks: Vec<SyntheticTaskSpec> = match spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read spec {}: {e}", path.display())))?;
            let tasks: Vec<SyntheticTaskSpec> = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            for t in &tasks {
                t.validate()?;
            }
            tasks
        }
        None => ctx.config.tasks.clone(),
    };
    if tasks.is_empty() {
        return Err(Error::Config("no synthetic tasks to generate".into()));
    }
    let mut names = Vec::new();
    for t in &tasks {
        let ds = generate_synthetic(t)?;
        save_dataset(&ds, ctx.config.dataset_dir.join(ds.name()))?;
        eprintln!("generated {} ({} samples)", ds.name(), ds.len());
        names.push(ds.name().to_string());
    }
    Ok(json!({"command": "gen-data", "datasets": names}))
}

fn pretrain(ctx: &Context, target: Option<&str>, seed: Option<u64>) -> Result<Value> {
    let datasets = load_all(&ctx.config.dataset_dir)?;
    let selected: Vec<&LabeledDataset> = match target {
        Some(name) => vec![find(&datasets, name)?],
        None => datasets.iter().collect(),
    };
    let mut cfg = ctx.config.pretrain_config();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let space = &ctx.config.search_space;
    let mut zoo = ZooIndex::open(ctx.config.zoo_root())?;
    let mut entries = Vec::new();
    for ds in selected {
        if let Some(existing) = zoo.get(ds.name()) {
            if existing.dataset_fingerprint == ds.fingerprint()
                && existing.search_space_fingerprint == space.fingerprint()
            {
                eprintln!("{} already in zoo, skipped", ds.name());
                entries.push(json!({"dataset": ds.name(), "status": "existing"}));
                continue;
            }
        }
        let mut state = init_supernet(space, ds.num_classes(), cfg.seed)?;
        train_supernet(&mut state, ds, &cfg)?;
        let acc = evaluate(&state, ds, Split::Val)?;
        zoo.save_entry(ds, &state, EntryMetadata::now(cfg.epochs, cfg.seed, acc))?;
        eprintln!("pretrained {}: val accuracy {acc:.4}", ds.name());
        entries.push(json!({"dataset": ds.name(), "status": "trained", "accuracy": acc}));
    }
    Ok(json!({"command": "pretrain", "zoo": zoo.root(), "entries": entries}))
}

fn dist(ctx: &Context) -> Result<Value> {
    let datasets = load_all(&ctx.config.dataset_dir)?;
    let report = distance_matrix(&datasets, &ctx.config.ot)?;
    let path = ctx.out.join("distances.csv");
    write(&path, report.to_csv().as_bytes())?;
    Ok(json!({"command": "dist", "datasets": report.names, "file": path}))
}

fn scratch(ctx: &Context, target: &str) -> Result<Value> {
    let datasets = load_all(&ctx.config.dataset_dir)?;
    let t = find(&datasets, target)?;
    let mut runs = Vec::new();
    for &s in &ctx.seeds {
        let run = scratch_run(t, &ctx.config.search_space, &ctx.config.train_with_seed(s))?;
        save_run(&ctx.out, &run)?;
        runs.push(run);
    }
    Ok(json!({"command": "scratch", "target": target, "runs": run_summaries(&runs)}))
}

fn transfer(ctx: &Context, target: &str) -> Result<Value> {
    let datasets = load_all(&ctx.config.dataset_dir)?;
    let t = find(&datasets, target)?;
    let zoo = ZooIndex::open(ctx.config.zoo_root())?;
    let mut runs = Vec::new();
    let mut distances = Vec::new();
    for &s in &ctx.seeds {
        let (run, selection) = ot_transfer_run(
            t,
            &zoo,
            &datasets,
            &ctx.config.ot,
            &ctx.config.search_space,
            &ctx.config.train_with_seed(s),
        )?;
        save_run(&ctx.out, &run)?;
        distances = selection.distances;
        runs.push(run);
    }
    let distances: serde_json::Map<String, Value> = distances.into_iter().map(|(n, d)| (n, json!(d))).collect();
    Ok(json!({"command": "transfer", "target": target, "distances": distances, "runs": run_summaries(&runs)}))
}

fn oracle(ctx: &Context, target: &str) -> Result<Value> {
    let datasets = load_all(&ctx.config.dataset_dir)?;
    let t = find(&datasets, target)?;
    let zoo = ZooIndex::open(ctx.config.zoo_root())?;
    let mut per_seed = Vec::new();
    let mut runs = Vec::new();
    for &s in &ctx.seeds {
        let result = grid_search_oracle(t, &zoo, &ctx.config.search_space, &ctx.config.train_with_seed(s))?;
        for run in &result.runs {
            save_run(&ctx.out, run)?;
        }
        per_seed.push(json!({"seed": s, "best": result.best, "worst": result.worst}));
        runs.extend(result.runs);
    }
    Ok(json!({"command": "oracle", "target": target, "seeds": per_seed, "runs": run_summaries(&runs)}))
}

fn loo(ctx: &Context, target: &str) -> Result<Value> {
    let datasets = load_all(&ctx.config.dataset_dir)?;
    let t = find(&datasets, target)?;
    let pretrain = ctx.config.pretrain_config();
    let mut runs = Vec::new();
    for &s in &ctx.seeds {
        let pre = otnas_core::supernet::TrainConfig { seed: s, ..pretrain.clone() };
        let result = loo_pretrain_run(t, &datasets, &ctx.config.search_space, &pre, &ctx.config.train_with_seed(s))?;
        save_run(&ctx.out, &result.run)?;
        runs.push(result.run);
    }
    Ok(json!({"command": "loo", "target": target, "runs": run_summaries(&runs)}))
}

fn report(ctx: &Context) -> Result<Value> {
    let dir = ctx.out.join("runs");
    let entries = fs::read_dir(&dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(format!("no run files under {}", dir.display())),
        _ => io_error(&dir, e),
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| io_error(&dir, e))?.path();
        if p.extension().is_some_and(|x| x == "json") {
            paths.push(p);
        }
    }
    paths.sort();
    let runs = paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| io_error(p, e))?;
            serde_json::from_slice::<RunResult>(&bytes)
                .map_err(|e| Error::Format(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    if runs.is_empty() {
        return Err(Error::NotFound(format!("no run files under {}", dir.display())));
    }
    let comparison = write_reports(&ctx.out, None, &runs, ctx.config.speedup_threshold)?;
    Ok(json!({
        "command": "report",
        "runs": runs.len(),
        "rows": comparison.rows.len(),
        "oracle_gap_count": comparison.gap_count,
        "targets": comparison.gap_targets,
    }))
}
