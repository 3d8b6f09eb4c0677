//! Data preparation, single training runs and evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rolemtl_core::corpus::{
    build_vocab, make_folds, window_instance, CvPlan, EmbeddingMatrix, EncodedInstance, LabelScheme, LabeledSpan,
    RoleInstance, Task, Vocabulary, WINDOW_MAX_LEN, WINDOW_RADIUS,
};
use rolemtl_core::metrics::{evaluate_orl, evaluate_srl, Prf, SpanMetricsReport};
use rolemtl_core::mtl::{ArchKind, ArchSpec, MtlModel};
use rolemtl_core::train::{
    eval_every, run_loop, task_cycle, DevEvaluator, LogRecord, LoopConfig, ModelLearner, OrlDevEvaluator, TrainLog,
};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{load_corpus, load_embeddings, Checkpoint};

/// Everything loaded from disk for one configuration.
pub struct Corpora {
    pub orl: Vec<RoleInstance>,
    pub srl_train: Vec<RoleInstance>,
    pub srl_dev: Vec<RoleInstance>,
    pub srl_test: Vec<RoleInstance>,
}

impl Corpora {
    /// `srl_train` is required only when some architecture in `kinds` uses
    /// SRL.
    pub fn load(cfg: &RunConfig, kinds: &[ArchKind]) -> Result<Self> {
        let orl = load_corpus(cfg.data.require("orl_json")?)?;
        if let Some(bad) = orl.iter().find(|i| i.task() != Task::Orl) {
            return Err(Error::Config(format!("data.orl_json holds a non-opinion record {}", bad.sentence().record_id())));
        }
        let needs_srl = kinds.iter().any(|k| *k != ArchKind::Stl);
        let opt = |p: &Option<std::path::PathBuf>| p.as_deref().map(load_corpus).transpose().map(Option::unwrap_or_default);
        let srl_train = if needs_srl {
            load_corpus(cfg.data.require("srl_train")?)?
        } else {
            opt(&cfg.data.srl_train)?
        };
        Ok(Self {
            orl,
            srl_train,
            srl_dev: opt(&cfg.data.srl_dev)?,
            srl_test: opt(&cfg.data.srl_test)?,
        })
    }
}

/// Shared vocabulary, frozen embeddings and label schemes.
pub struct Resources {
    pub vocab: Vocabulary,
    pub emb: Arc<EmbeddingMatrix>,
    pub srl_scheme: LabelScheme,
}

impl Resources {
    /// The vocabulary covers every word of both tasks.
    pub fn build(corpora: &Corpora, embeddings: &std::path::Path, dim: usize) -> Result<Self> {
        let vocab = build_vocab(
            corpora
                .orl
                .iter()
                .chain(&corpora.srl_train)
                .chain(&corpora.srl_dev)
                .chain(&corpora.srl_test),
        );
        let emb = load_embeddings(embeddings, &vocab, dim)?;
        Ok(Self::new(vocab, emb, &corpora.srl_train))
    }

    pub fn new(vocab: Vocabulary, emb: EmbeddingMatrix, srl_train: &[RoleInstance]) -> Self {
        Self { vocab, emb: Arc::new(emb), srl_scheme: LabelScheme::srl_from_instances(srl_train) }
    }

    pub fn arch(&self, cfg: &RunConfig, kind: ArchKind) -> ArchSpec {
        let mut a = match kind {
            ArchKind::Stl => ArchSpec::stl(LabelScheme::orl()),
            k => ArchSpec::new(k, vec![self.srl_scheme.clone(), LabelScheme::orl()]),
        };
        a.tap_layer = cfg.arch.tap_layer;
        a.adv_scale = cfg.arch.adv_scale;
        a
    }
}

/// Document-level split of the opinion corpus.
#[derive(Clone, Debug)]
pub struct OrlSplit {
    pub train: Vec<RoleInstance>,
    pub dev: Vec<RoleInstance>,
    pub test: Vec<RoleInstance>,
}

pub fn plan_folds(orl: &[RoleInstance], cfg: &RunConfig) -> Result<CvPlan> {
    let docs: Vec<String> = orl.iter().map(|i| i.sentence().doc_id.clone()).collect();
    make_folds(&docs, cfg.cv.k, cfg.cv.dev_count, cfg.seed).map_err(|e| Error::Config(format!("cv: {e}")))
}

pub fn split(orl: &[RoleInstance], plan: &CvPlan, fold: usize) -> OrlSplit {
    let f = &plan.folds[fold];
    let pick = |docs: &[String]| {
        let set: BTreeSet<&str> = docs.iter().map(String::as_str).collect();
        orl.iter().filter(|i| set.contains(i.sentence().doc_id.as_str())).cloned().collect()
    };
    OrlSplit { train: pick(&f.train), dev: pick(&plan.dev), test: pick(&f.test) }
}

/// Windows long sentences; returns the kept instances and how many roles
/// fell outside their window.
pub fn window_all(instances: &[RoleInstance]) -> (Vec<RoleInstance>, usize) {
    let mut dropped = 0;
    let kept = instances
        .iter()
        .map(|i| {
            let w = window_instance(i, WINDOW_MAX_LEN, WINDOW_RADIUS);
            dropped += w.dropped.len();
            w.instance
        })
        .collect();
    (kept, dropped)
}

fn encode(instances: &[RoleInstance], vocab: &Vocabulary, scheme: &LabelScheme) -> Vec<EncodedInstance> {
    instances.iter().map(|i| EncodedInstance::new(i, vocab, scheme)).collect()
}

/// Roles predicted for each instance, in the coordinates of the original
/// (unwindowed) sentence.
pub fn predict(
    model: &MtlModel,
    emb: &EmbeddingMatrix,
    vocab: &Vocabulary,
    task: Task,
    instances: &[RoleInstance],
    batch_size: usize,
) -> Result<Vec<Vec<LabeledSpan>>> {
    let scheme = model.arch.scheme(task)?;
    let windows: Vec<_> = instances.iter().map(|i| window_instance(i, WINDOW_MAX_LEN, WINDOW_RADIUS)).collect();
    let encoded: Vec<EncodedInstance> = windows.iter().map(|w| EncodedInstance::new(&w.instance, vocab, scheme)).collect();
    let pred = model.predict_roles(emb, task, &encoded, batch_size)?;
    Ok(pred
        .into_iter()
        .zip(&windows)
        .map(|(roles, w)| {
            roles
                .into_iter()
                .map(|r| LabeledSpan::new(r.label, r.span.start + w.offset, r.span.end + w.offset))
                .collect()
        })
        .collect())
}

pub fn evaluate_orl_model(ck: &Checkpoint, gold: &[RoleInstance], batch_size: usize) -> Result<SpanMetricsReport> {
    let pred = predict(&ck.model, &ck.embeddings, &ck.vocab, Task::Orl, gold, batch_size)?;
    Ok(evaluate_orl(&pred, gold)?)
}

pub fn evaluate_srl_model(ck: &Checkpoint, gold: &[RoleInstance], batch_size: usize) -> Result<Prf> {
    let pred = predict(&ck.model, &ck.embeddings, &ck.vocab, Task::Srl, gold, batch_size)?;
    Ok(evaluate_srl(&pred, gold)?)
}

/// Inputs of one training run.
pub struct RunInputs<'a> {
    pub resources: &'a Resources,
    pub orl_train: &'a [RoleInstance],
    pub orl_dev: &'a [RoleInstance],
    pub srl_train: &'a [RoleInstance],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub arch: ArchKind,
    pub seed: u64,
    pub iterations: usize,
    pub stopped_early: bool,
    pub best_iteration: usize,
    pub best_dev_score: f64,
    /// Training roles that fell outside their window.
    pub dropped_roles: usize,
}

pub struct RunOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    pub summary: RunSummary,
}

/// Trains one architecture with one seed: alternating task batches,
/// evaluation on the ORL dev set after every pass over the ORL training set,
/// the best model kept.
pub fn train_run(
    cfg: &RunConfig,
    kind: ArchKind,
    seed: u64,
    inputs: &RunInputs,
    on_record: impl FnMut(&LogRecord),
) -> Result<RunOutcome> {
    let res = inputs.resources;
    if inputs.orl_train.is_empty() || inputs.orl_dev.is_empty() {
        return Err(Error::Runtime("the opinion training and dev sets must be nonempty".into()));
    }
    let arch = res.arch(cfg, kind);
    let model = MtlModel::build(arch.clone(), cfg.model.clone(), seed)?;
    let (orl_train, mut dropped) = window_all(inputs.orl_train);
    let mut train = BTreeMap::new();
    train.insert(Task::Orl, encode(&orl_train, &res.vocab, &LabelScheme::orl()));
    if kind != ArchKind::Stl {
        let (srl, d) = window_all(inputs.srl_train);
        dropped += d;
        if srl.is_empty() {
            return Err(Error::Runtime(format!("{kind} needs SRL training data")));
        }
        train.insert(Task::Srl, encode(&srl, &res.vocab, &res.srl_scheme));
    }
    let optim = rolemtl_core::train::OptimConfig { seed, ..cfg.optim.clone() };
    let mut learner = ModelLearner::new(model, Arc::clone(&res.emb), train, optim.clone(), seed)?;
    let (dev, _) = window_all(inputs.orl_dev);
    let dev_encoded = encode(&dev, &res.vocab, &LabelScheme::orl());
    let mut evaluator = OrlDevEvaluator::new(dev, dev_encoded, optim.batch_size)?;
    let loop_cfg = LoopConfig {
        cycle: task_cycle(&arch),
        eval_every: eval_every(orl_train.len(), optim.batch_size),
        max_iters: optim.max_iters_for(kind),
        patience: optim.patience,
    };
    let outcome = run_loop(&mut learner, &mut evaluator, &loop_cfg, on_record)?;
    let (params, score, best_iteration) = match outcome.best {
        Some(b) => (b.snapshot, b.score, b.iteration),
        None => {
            // fewer iterations than one evaluation period
            let s = evaluator.evaluate(&learner)?.selection();
            (learner.model.params.clone(), s, outcome.iterations)
        }
    };
    let checkpoint = Checkpoint {
        model: MtlModel { params, ..learner.model.clone() },
        vocab: res.vocab.clone(),
        embeddings: (*res.emb).clone(),
        best_dev_score: score,
        iteration: best_iteration,
    };
    Ok(RunOutcome {
        checkpoint,
        log: outcome.log,
        summary: RunSummary {
            arch: kind,
            seed,
            iterations: outcome.iterations,
            stopped_early: outcome.stopped_early,
            best_iteration,
            best_dev_score: score,
            dropped_roles: dropped,
        },
    })
}
