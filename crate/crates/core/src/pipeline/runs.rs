use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{eligible_sources, select_source, Selection};
use crate::dataio::{LabeledDataset, Split};
use crate::diffcore::Parameter;
use crate::error::{Error, Result};
use crate::ot::OtSettings;
use crate::seed;
use crate::supernet::{
    evaluate, init_supernet, train_step, train_supernet, Batch, SearchSpaceConfig, SupernetState,
    TrainConfig, TrainingCurve,
};
use crate::zoo::{transfer_trunk, transfer_weights, ZooIndex};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Scratch,
    OtTransfer,
    LooTransfer,
    /// One arm of the exhaustive search over zoo sources.
    GridSource(String),
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunMode::Scratch => f.write_str("scratch"),
            RunMode::OtTransfer => f.write_str("ot_transfer"),
            RunMode::LooTransfer => f.write_str("loo_transfer"),
            RunMode::GridSource(s) => write!(f, "grid_{s}"),
        }
    }
}

/// One training run on a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: RunMode,
    pub target: String,
    pub source: Option<String>,
    /// Supernet accuracy on the target's val split after training.
    pub final_accuracy: f64,
    pub retrained_accuracy: Option<f64>,
    pub curve: TrainingCurve,
    pub seed: u64,
    /// Not persisted, so that run files stay byte-identical across re-runs.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl RunResult {
    /// File-name friendly identifier, e.g. `shapes-s1-k3__ot_transfer__s2`.
    pub fn run_id(&self) -> String {
        format!("{}__{}__s{}", self.target, self.mode, self.seed)
    }
}

fn finish(
    mode: RunMode,
    target: &LabeledDataset,
    source: Option<String>,
    mut state: SupernetState,
    train: &TrainConfig,
    started: Instant,
) -> Result<(RunResult, SupernetState)> {
    let curve = train_supernet(&mut state, target, train)?;
    let final_accuracy = evaluate(&state, target, Split::Val)?;
    Ok((
        RunResult {
            mode,
            target: target.name().to_string(),
            source,
            final_accuracy,
            retrained_accuracy: None,
            curve,
            seed: train.seed,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
        state,
    ))
}

/// Train a fresh supernet on `target`. `train.seed` seeds both the
/// initialization and the batch order.
pub fn scratch_run(target: &LabeledDataset, space: &SearchSpaceConfig, train: &TrainConfig) -> Result<RunResult> {
    let started = Instant::now();
    let state = init_supernet(space, target.num_classes(), seed::derive(train.seed, "init"))?;
    Ok(finish(RunMode::Scratch, target, None, state, train, started)?.0)
}

/// Warm-start from `source`, fine-tune on `target` and report the result.
pub fn evaluate_transfer(
    source: &SupernetState,
    source_name: &str,
    target: &LabeledDataset,
    space: &SearchSpaceConfig,
    train: &TrainConfig,
    mode: RunMode,
) -> Result<RunResult> {
    let started = Instant::now();
    let state = transfer_weights(source, space, target.num_classes(), seed::derive(train.seed, "head"))?;
    Ok(finish(mode, target, Some(source_name.to_string()), state, train, started)?.0)
}

/// Select the closest zoo source by dataset distance and warm-start from it.
pub fn ot_transfer_run(
    target: &LabeledDataset,
    zoo: &ZooIndex,
    pool: &[LabeledDataset],
    settings: &OtSettings,
    space: &SearchSpaceConfig,
    train: &TrainConfig,
) -> Result<(RunResult, Selection)> {
    let selection = select_source(target, zoo, pool, settings)?;
    let source = zoo.load_entry(&selection.source)?;
    let run = evaluate_transfer(&source, &selection.source, target, space, train, RunMode::OtTransfer)?;
    Ok((run, selection))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// One run per eligible zoo entry, sorted by source name.
    pub runs: Vec<RunResult>,
    pub best: String,
    pub worst: String,
}

/// Best and worst run by accuracy; ties go to the lexicographically smaller source.
pub(crate) fn best_and_worst(runs: &[RunResult]) -> Option<(String, String)> {
    let name = |r: &RunResult| r.source.clone().unwrap_or_default();
    let best = runs.iter().min_by(|a, b| {
        b.final_accuracy.total_cmp(&a.final_accuracy).then_with(|| name(a).cmp(&name(b)))
    })?;
    let worst = runs.iter().min_by(|a, b| {
        a.final_accuracy.total_cmp(&b.final_accuracy).then_with(|| name(a).cmp(&name(b)))
    })?;
    Some((name(best), name(worst)))
}

/// Transfer from every eligible zoo entry.
pub fn grid_search_oracle(
    target: &LabeledDataset,
    zoo: &ZooIndex,
    space: &SearchSpaceConfig,
    train: &TrainConfig,
) -> Result<OracleResult> {
    let names = eligible_sources(target, zoo);
    if names.len() < 2 {
        return Err(Error::Precondition(format!(
            "grid search needs at least 2 zoo sources besides {}, found {}",
            target.name(),
            names.len()
        )));
    }
    let runs = names
        .par_iter()
        .map(|name| {
            let source = zoo.load_entry(name)?;
            evaluate_transfer(&source, name, target, space, train, RunMode::GridSource(name.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (best, worst) = best_and_worst(&runs).expect("non-empty");
    Ok(OracleResult { runs, best, worst })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LooResult {
    pub run: RunResult,
    /// Dataset name of every pretraining batch, in step order.
    pub provenance: Vec<String>,
}

struct Stream<'a> {
    dataset: &'a LabeledDataset,
    head: (Parameter, Parameter),
    order: Vec<usize>,
    cursor: usize,
    val_order: Vec<usize>,
    val_cursor: usize,
    epoch: u64,
    val_epoch: u64,
    seed: u64,
}

fn next_indices(order: &mut [usize], cursor: &mut usize, n: usize, rng_seed: u64, epoch: &mut u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n.min(order.len()) {
        if *cursor == 0 {
            order.shuffle(&mut seed::rng(seed::derive_indexed(rng_seed, "order", *epoch)));
            *epoch += 1;
        }
        out.push(order[*cursor]);
        *cursor = (*cursor + 1) % order.len();
    }
    out
}

/// Pretrain one supernet on every dataset except `target` (shared trunk and
/// logits, one head per dataset, round-robin batches), then transfer the
/// trunk to `target` with a fresh head and fine-tune.
///
/// Pretraining runs `pretrain.epochs` times the total number of train
/// batches of the sources, which matches pretraining each source separately
/// for `pretrain.epochs` epochs.
pub fn loo_pretrain_run(
    target: &LabeledDataset,
    datasets: &[LabeledDataset],
    space: &SearchSpaceConfig,
    pretrain: &TrainConfig,
    finetune: &TrainConfig,
) -> Result<LooResult> {
    pretrain.validate()?;
    let started = Instant::now();
    let fp = target.fingerprint();
    let sources: Vec<&LabeledDataset> = datasets
        .iter()
        .filter(|d| d.name() != target.name() && d.fingerprint() != fp)
        .collect();
    if sources.len() < 2 {
        return Err(Error::Precondition(format!(
            "leave-one-out needs at least 2 datasets besides {}, found {}",
            target.name(),
            sources.len()
        )));
    }
    let mut state = init_supernet(space, sources[0].num_classes(), seed::derive(pretrain.seed, "init"))?;
    let mut streams: Vec<Stream> = sources
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut head_state = state.clone();
            head_state.reset_head(d.num_classes(), seed::derive_indexed(pretrain.seed, "loo-head", i as u64));
            Stream {
                dataset: d,
                head: (head_state.head_w, head_state.head_b),
                order: d.split(Split::Train).to_vec(),
                cursor: 0,
                val_order: d.split(Split::Val).to_vec(),
                val_cursor: 0,
                epoch: 0,
                val_epoch: 0,
                seed: seed::derive_indexed(pretrain.seed, "loo-stream", i as u64),
            }
        })
        .collect();
    let total_steps: usize = pretrain.epochs
        * sources
            .iter()
            .map(|d| d.split(Split::Train).len().div_ceil(pretrain.batch_size))
            .sum::<usize>();
    let mut provenance = Vec::with_capacity(total_steps);
    for step in 0..total_steps {
        let s = &mut streams[step % sources.len()];
        let train_idx = next_indices(&mut s.order, &mut s.cursor, pretrain.batch_size, s.seed, &mut s.epoch);
        let val_seed = seed::derive(s.seed, "val");
        let val_idx = next_indices(&mut s.val_order, &mut s.val_cursor, pretrain.batch_size, val_seed, &mut s.val_epoch);
        std::mem::swap(&mut state.head_w, &mut s.head.0);
        std::mem::swap(&mut state.head_b, &mut s.head.1);
        state.num_classes = s.dataset.num_classes();
        let result = train_step(
            &mut state,
            &Batch::from_dataset(s.dataset, &train_idx),
            &Batch::from_dataset(s.dataset, &val_idx),
            pretrain,
        );
        std::mem::swap(&mut state.head_w, &mut s.head.0);
        std::mem::swap(&mut state.head_b, &mut s.head.1);
        result?;
        provenance.push(s.dataset.name().to_string());
    }
    let fresh = transfer_trunk(&state, space, target.num_classes(), seed::derive(finetune.seed, "head"))?;
    let source = sources.iter().map(|d| d.name()).collect::<Vec<_>>().join("+");
    let (run, _) = finish(RunMode::LooTransfer, target, Some(source), fresh, finetune, started)?;
    Ok(LooResult { run, provenance })
}
