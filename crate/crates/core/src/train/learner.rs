use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{adam_step, clip_global_norm, global_norm, AdamState, DevEvaluator, DevScores, Learner, OptimConfig, StepLoss};
use crate::corpus::{Batcher, EmbeddingMatrix, EncodedInstance, RoleInstance, Task};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::evaluate_orl;
use crate::model::Dropout;
use crate::mtl::MtlModel;
use crate::params::ParamStore;
use crate::rng;

/// Observable points inside one optimization step, in order.
#[derive(Clone, Debug, PartialEq)]
pub enum StepEvent {
    Clipped { task: Task, norm_before: f64, norm_after: f64 },
    Updated { task: Task, t: u64, parameters: Vec<String> },
}

type Probe = Box<dyn FnMut(&StepEvent) + Send>;

/// An [`MtlModel`] with its optimizer state, batch streams and dropout
/// sampler. Embeddings stay frozen: they are never part of the parameter
/// store.
pub struct ModelLearner {
    pub model: MtlModel,
    pub adam: AdamState,
    emb: Arc<EmbeddingMatrix>,
    batchers: BTreeMap<Task, Batcher>,
    optim: OptimConfig,
    dropout: Dropout,
    probe: Option<Probe>,
}

impl ModelLearner {
    /// `train` must hold nonempty encoded data for every task of the model.
    /// Batch order and dropout masks come from sub-streams of `seed`.
    pub fn new(
        model: MtlModel,
        emb: Arc<EmbeddingMatrix>,
        train: BTreeMap<Task, Vec<EncodedInstance>>,
        optim: OptimConfig,
        seed: u64,
    ) -> Result<Self> {
        optim.validate()?;
        let mut batchers = BTreeMap::new();
        let mut train = train;
        for task in model.arch.task_ids() {
            let data = train.remove(&task).unwrap_or_default();
            if data.is_empty() {
                return Err(Error::Contract(format!("no training data for task {task}")));
            }
            let s = rng::derive_seed(seed, task.name());
            batchers.insert(task, Batcher::new(task, data, optim.batch_size, s));
        }
        let dropout = Dropout::new(model.config.dropout.clone(), seed);
        Ok(Self {
            model,
            adam: AdamState::default(),
            emb,
            batchers,
            optim,
            dropout,
            probe: None,
        })
    }

    pub fn set_probe(&mut self, probe: impl FnMut(&StepEvent) + Send + 'static) {
        self.probe = Some(Box::new(probe));
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.emb
    }

    fn emit(&mut self, e: StepEvent) {
        if let Some(p) = self.probe.as_mut() {
            p(&e);
        }
    }
}

impl Learner for ModelLearner {
    type Snapshot = ParamStore;

    /// Forward and backward on the next batch of `task`, clipping, then one
    /// Adam update of the task's trainable parameters that the loss reaches.
    fn train_step(&mut self, task: Task) -> Result<StepLoss> {
        let batch = self
            .batchers
            .get_mut(&task)
            .ok_or_else(|| Error::Contract(format!("task {task} is not scheduled for this model")))?
            .next()
            .expect("endless");
        let mut g = Graph::new();
        let loss = self.model.batch_loss(&mut g, &self.emb, &batch, Some(&mut self.dropout))?;
        let task_loss = g.value(loss.task).item();
        let adversarial = loss.adversarial.map(|a| g.value(a).item());
        g.value(loss.total).check_finite("loss")?;
        let trainable: BTreeSet<String> = self.model.trainable_parameters(task)?.into_iter().collect();
        let mut grads = g.backward(loss.total)?.reached();
        grads.retain(|k, _| trainable.contains(k));
        let norm_before = clip_global_norm(&mut grads, self.optim.clip_norm);
        let norm_after = global_norm(&grads);
        self.emit(StepEvent::Clipped { task, norm_before, norm_after });
        adam_step(&mut self.model.params, &grads, &mut self.adam, &self.optim)?;
        let parameters = if self.probe.is_some() { grads.into_keys().collect() } else { Vec::new() };
        let t = self.adam.t;
        self.emit(StepEvent::Updated { task, t, parameters });
        Ok(StepLoss {
            task: task_loss,
            adversarial,
        })
    }

    fn snapshot(&self) -> ParamStore {
        self.model.params.clone()
    }
}

/// Scores a model on the ORL dev set.
pub struct OrlDevEvaluator {
    gold: Vec<RoleInstance>,
    encoded: Vec<EncodedInstance>,
    batch_size: usize,
}

impl OrlDevEvaluator {
    pub fn new(gold: Vec<RoleInstance>, encoded: Vec<EncodedInstance>, batch_size: usize) -> Result<Self> {
        if gold.is_empty() || gold.len() != encoded.len() {
            return Err(Error::contract("dev set must be nonempty and fully encoded"));
        }
        Ok(Self {
            gold,
            encoded,
            batch_size,
        })
    }

    pub fn score(&self, model: &MtlModel, emb: &EmbeddingMatrix) -> Result<DevScores> {
        let pred = model.predict_roles(emb, Task::Orl, &self.encoded, self.batch_size)?;
        Ok(DevScores::from_report(&evaluate_orl(&pred, &self.gold)?))
    }
}

impl DevEvaluator<ModelLearner> for OrlDevEvaluator {
    fn evaluate(&mut self, learner: &ModelLearner) -> Result<DevScores> {
        self.score(&learner.model, learner.embeddings())
    }
}
