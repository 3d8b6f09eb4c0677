//! Optimization: Adam with global-norm clipping, task alternation, the
//! dev-evaluation cadence with model selection and early stopping.

mod adam;
mod learner;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Task, HOLDER, TARGET};
use crate::error::{Error, Result};
use crate::metrics::SpanMetricsReport;
use crate::mtl::{ArchKind, ArchSpec};

pub use adam::{adam_step, clip_global_norm, global_norm, AdamState};
pub use learner::{ModelLearner, OrlDevEvaluator, StepEvent};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    /// Defaults to 10k iterations for single-task and 20k for multi-task
    /// models.
    pub max_iters: Option<usize>,
    /// Evaluation ticks without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            batch_size: 32,
            max_iters: None,
            patience: 25,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.eps, self.clip_norm];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::contract("lr, eps and clip_norm must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::contract("Adam betas must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_iters == Some(0) {
            return Err(Error::contract("batch_size, patience and max_iters must be at least 1"));
        }
        Ok(())
    }

    pub fn max_iters_for(&self, kind: ArchKind) -> usize {
        self.max_iters
            .unwrap_or(if kind == ArchKind::Stl { 10_000 } else { 20_000 })
    }
}

/// Task order of one alternation cycle: SRL first when present, then the
/// remaining tasks in spec order.
pub fn task_cycle(arch: &ArchSpec) -> Vec<Task> {
    let mut cycle: Vec<Task> = arch.task_ids().filter(|&t| t == Task::Srl).collect();
    cycle.extend(arch.task_ids().filter(|&t| t != Task::Srl));
    cycle
}

pub fn schedule(arch: &ArchSpec, iter: usize) -> Task {
    let cycle = task_cycle(arch);
    cycle[iter % cycle.len()]
}

/// Iterations between dev evaluations: one pass over the ORL training set.
pub fn eval_every(orl_train_size: usize, batch_size: usize) -> usize {
    orl_train_size.div_ceil(batch_size).max(1)
}

/// The dev numbers that drive model selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DevScores {
    pub holder_binary_f1: f64,
    pub target_binary_f1: f64,
    pub holder_prop_f1: f64,
    pub target_prop_f1: f64,
}

impl DevScores {
    pub fn from_report(r: &SpanMetricsReport) -> Self {
        let get = |l: &str| r.role(l).map(|s| (s.binary.f1, s.proportional.f1)).unwrap_or_default();
        let (hb, hp) = get(HOLDER);
        let (tb, tp) = get(TARGET);
        Self {
            holder_binary_f1: hb,
            target_binary_f1: tb,
            holder_prop_f1: hp,
            target_prop_f1: tp,
        }
    }

    /// Mean of holder and target proportional F1.
    pub fn selection(&self) -> f64 {
        (self.holder_prop_f1 + self.target_prop_f1) / 2.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub task: f64,
    pub adversarial: Option<f64>,
}

/// Something that can take optimization steps and hand out copies of its
/// current parameters.
pub trait Learner {
    type Snapshot;
    fn train_step(&mut self, task: Task) -> Result<StepLoss>;
    fn snapshot(&self) -> Self::Snapshot;
}

pub trait DevEvaluator<L: ?Sized> {
    fn evaluate(&mut self, learner: &L) -> Result<DevScores>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopConfig {
    pub cycle: Vec<Task>,
    pub eval_every: usize,
    pub max_iters: usize,
    pub patience: usize,
}

/// One line of the training log, written at every evaluation tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: usize,
    /// Iterations completed so far.
    pub iteration: usize,
    /// Mean task loss per task since the previous tick.
    pub train_loss: BTreeMap<String, f64>,
    pub adversarial_loss: Option<f64>,
    pub dev: DevScores,
    pub dev_score: f64,
    pub best_dev_score: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

pub struct Best<S> {
    pub snapshot: S,
    pub score: f64,
    pub iteration: usize,
}

pub struct LoopOutcome<S> {
    pub best: Option<Best<S>>,
    pub log: TrainLog,
    pub iterations: usize,
    pub stopped_early: bool,
}

#[derive(Default)]
struct LossAccumulator {
    sums: BTreeMap<Task, (f64, usize)>,
    adv: Option<(f64, usize)>,
}

impl LossAccumulator {
    fn push(&mut self, task: Task, loss: StepLoss) {
        let e = self.sums.entry(task).or_insert((0.0, 0));
        e.0 += loss.task;
        e.1 += 1;
        if let Some(a) = loss.adversarial {
            let e = self.adv.get_or_insert((0.0, 0));
            e.0 += a;
            e.1 += 1;
        }
    }

    fn drain(&mut self) -> (BTreeMap<String, f64>, Option<f64>) {
        let means = self
            .sums
            .iter()
            .map(|(t, (s, n))| (String::from(t.name()), s / *n as f64))
            .collect();
        let adv = self.adv.map(|(s, n)| s / n as f64);
        *self = Self::default();
        (means, adv)
    }
}

/// Runs the schedule for up to `max_iters` iterations, evaluating every
/// `eval_every` iterations. A snapshot is kept only when the dev score
/// strictly improves; training stops after `patience` consecutive ticks
/// without improvement.
pub fn run_loop<L, E>(
    learner: &mut L,
    evaluator: &mut E,
    cfg: &LoopConfig,
    mut on_record: impl FnMut(&LogRecord),
) -> Result<LoopOutcome<L::Snapshot>>
where
    L: Learner,
    E: DevEvaluator<L>,
{
    if cfg.cycle.is_empty() || cfg.eval_every == 0 || cfg.patience == 0 {
        return Err(Error::contract("loop needs tasks, a positive cadence and patience"));
    }
    let mut best: Option<Best<L::Snapshot>> = None;
    let mut best_score = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut log = TrainLog::default();
    let mut acc = LossAccumulator::default();
    let mut iterations = 0;
    let mut stopped_early = false;
    for iter in 0..cfg.max_iters {
        let task = cfg.cycle[iter % cfg.cycle.len()];
        let loss = learner.train_step(task)?;
        acc.push(task, loss);
        iterations = iter + 1;
        if iterations % cfg.eval_every != 0 {
            continue;
        }
        let dev = evaluator.evaluate(learner)?;
        let score = dev.selection();
        let improved = score > best_score;
        if improved {
            best_score = score;
            stale = 0;
            best = Some(Best {
                snapshot: learner.snapshot(),
                score,
                iteration: iterations,
            });
        } else {
            stale += 1;
        }
        let (train_loss, adversarial_loss) = acc.drain();
        let rec = LogRecord {
            tick: log.records.len() + 1,
            iteration: iterations,
            train_loss,
            adversarial_loss,
            dev,
            dev_score: score,
            best_dev_score: best_score,
            improved,
        };
        on_record(&rec);
        log.records.push(rec);
        if stale >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    Ok(LoopOutcome {
        best,
        log,
        iterations,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelScheme;
    use alloc::vec;

    #[test]
    fn alternation_starts_with_srl() {
        let arch = ArchSpec::new(
            ArchKind::Fs,
            vec![LabelScheme::orl(), LabelScheme::from_labels(Task::Srl, ["A0", "V"])],
        );
        let got: Vec<Task> = (0..4).map(|i| schedule(&arch, i)).collect();
        assert_eq!(got, [Task::Srl, Task::Orl, Task::Srl, Task::Orl]);
        let srl = (0..20_000).filter(|&i| schedule(&arch, i) == Task::Srl).count();
        assert_eq!(srl, 10_000);
        let stl = ArchSpec::stl(LabelScheme::orl());
        assert!((0..5).all(|i| schedule(&stl, i) == Task::Orl));
    }

    #[test]
    fn cadence() {
        assert_eq!(eval_every(96, 32), 3);
        assert_eq!(eval_every(97, 32), 4);
        assert_eq!(eval_every(5, 32), 1);
    }
}
