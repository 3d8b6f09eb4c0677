//! Single-task and multi-task architectures over the BiLSTM-CRF labeler:
//! fully shared (FS), hierarchical (H), shared-private (SP) and adversarial
//! shared-private (ASP), with parameters partitioned into shared,
//! per-task and discriminator groups by name prefix.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingMatrix, EncodedInstance, LabelScheme, LabeledSpan, PaddedBatch, RoleInstance, Task};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::model::{
    batch_features, crf_nll_graph, encode, init, init_encoder, project, viterbi, CrfParams, Dropout, ModelConfig,
};
use crate::params::ParamStore;
use crate::rng;
use crate::tensor::Tensor;

pub const SHARED_ENCODER: &str = "shared.enc";
pub const DISCRIMINATOR: &str = "disc";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Stl,
    Fs,
    H,
    Sp,
    Asp,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Stl => "stl",
            ArchKind::Fs => "fs",
            ArchKind::H => "h",
            ArchKind::Sp => "sp",
            ArchKind::Asp => "asp",
        }
    }

    /// Whether each task owns a private encoder stack.
    pub fn has_private(self) -> bool {
        matches!(self, ArchKind::Sp | ArchKind::Asp)
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "stl" => ArchKind::Stl,
            "fs" => ArchKind::Fs,
            "h" | "h-mtl" | "hmtl" => ArchKind::H,
            "sp" => ArchKind::Sp,
            "asp" => ArchKind::Asp,
            _ => return Err(Error::Contract(format!("unknown architecture `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ArchKind,
    /// One label scheme per task, in discriminator-class order.
    pub tasks: Vec<LabelScheme>,
    /// H only: the layer (1-based, bottom-up) that `tap_task` reads.
    pub tap_layer: usize,
    pub tap_task: Task,
    /// ASP only: gradient-reversal scale of the discriminator loss.
    pub adv_scale: f64,
}

impl ArchSpec {
    pub fn new(kind: ArchKind, tasks: Vec<LabelScheme>) -> Self {
        Self {
            kind,
            tasks,
            tap_layer: 2,
            tap_task: Task::Srl,
            adv_scale: 0.1,
        }
    }

    pub fn stl(scheme: LabelScheme) -> Self {
        Self::new(ArchKind::Stl, vec![scheme])
    }

    pub fn validate(&self, layers: usize) -> Result<()> {
        let n = self.tasks.len();
        match self.kind {
            ArchKind::Stl if n != 1 => return Err(Error::contract("STL needs exactly one task")),
            ArchKind::Stl => {}
            _ if n < 2 => return Err(Error::Contract(format!("{} needs at least two tasks", self.kind))),
            _ => {}
        }
        for (i, s) in self.tasks.iter().enumerate() {
            s.validate()?;
            if self.tasks[..i].iter().any(|o| o.task == s.task) {
                return Err(Error::Contract(format!("task {} listed twice", s.task)));
            }
        }
        if self.kind == ArchKind::H {
            if !(1..layers).contains(&self.tap_layer) {
                return Err(Error::Contract(format!(
                    "tap layer must lie in [1, {layers}), got {}",
                    self.tap_layer
                )));
            }
            self.task_index(self.tap_task)?;
        }
        if self.kind == ArchKind::Asp && !(self.adv_scale > 0.0) {
            return Err(Error::contract("adv_scale must be > 0"));
        }
        Ok(())
    }

    pub fn task_index(&self, task: Task) -> Result<usize> {
        self.tasks
            .iter()
            .position(|s| s.task == task)
            .ok_or_else(|| Error::Contract(format!("task {task} is not part of this {} model", self.kind)))
    }

    pub fn scheme(&self, task: Task) -> Result<&LabelScheme> {
        Ok(&self.tasks[self.task_index(task)?])
    }

    pub fn task_ids(&self) -> impl Iterator<Item = Task> + '_ {
        self.tasks.iter().map(|s| s.task)
    }
}

/// Which partition a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Shared,
    Task(Task),
    Discriminator,
}

pub fn task_prefix(task: Task) -> String {
    format!("task.{}", task.name())
}

pub fn param_group(name: &str) -> Option<ParamGroup> {
    if name.starts_with("shared.") {
        Some(ParamGroup::Shared)
    } else if name.starts_with("disc.") {
        Some(ParamGroup::Discriminator)
    } else if name.starts_with("task.srl.") {
        Some(ParamGroup::Task(Task::Srl))
    } else if name.starts_with("task.orl.") {
        Some(ParamGroup::Task(Task::Orl))
    } else {
        None
    }
}

/// Whether the discriminator input passes through the gradient-reversal
/// layer. `Identity` exists to compare against the non-reversed gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adversary {
    Reversed,
    Identity,
}

/// Graph handles produced by one task forward pass. All sequences are
/// time-major with `[B, ·]` entries.
pub struct TaskForward {
    pub task: Task,
    pub emissions: Vec<Var>,
    /// Top layer of the shared encoder, `[B, 2H]` per step.
    pub shared_repr: Vec<Var>,
    pub private_repr: Option<Vec<Var>>,
    /// `[B, n_tasks]`, ASP only.
    pub discriminator_logits: Option<Var>,
    pub crf: (Var, Var, Var),
}

pub struct BatchLoss {
    pub total: Var,
    pub task: Var,
    pub adversarial: Option<Var>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtlModel {
    pub arch: ArchSpec,
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl MtlModel {
    /// Fresh parameters drawn from the `init` stream of `seed`.
    pub fn build(arch: ArchSpec, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        arch.validate(config.layers)?;
        let mut r = rng::stream(seed, "init");
        let h = config.hidden;
        let mut params = ParamStore::new();
        init_encoder(&mut params, SHARED_ENCODER, config.input_dim(), h, config.layers, &mut r);
        let head_in = if arch.kind.has_private() { 4 * h } else { 2 * h };
        for scheme in &arch.tasks {
            let p = task_prefix(scheme.task);
            if arch.kind.has_private() {
                init_encoder(&mut params, &format!("{p}.enc"), config.input_dim(), h, config.layers, &mut r);
            }
            let y = scheme.len();
            params.insert(format!("{p}.head.w"), init::he_normal(&[head_in, y], &mut r));
            params.insert(format!("{p}.head.b"), Tensor::zeros(&[y]));
            params.insert(format!("{p}.crf.trans"), init::he_normal(&[y, y], &mut r));
            params.insert(format!("{p}.crf.start"), Tensor::zeros(&[y]));
            params.insert(format!("{p}.crf.stop"), Tensor::zeros(&[y]));
        }
        if arch.kind == ArchKind::Asp {
            let n = arch.tasks.len();
            params.insert("disc.w", init::he_normal(&[2 * h, n], &mut r));
            params.insert("disc.b", Tensor::zeros(&[n]));
        }
        Ok(Self { arch, config, params })
    }

    /// Reassembles a model from stored parts, checking every parameter name
    /// and shape against what `build` would produce.
    pub fn from_parts(arch: ArchSpec, config: ModelConfig, params: ParamStore) -> Result<Self> {
        let template = Self::build(arch, config, 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter arrays, got {}",
                template.params.len(),
                params.len()
            )));
        }
        for (name, t) in template.params.iter() {
            match params.get(name) {
                None => return Err(Error::Contract(format!("missing parameter `{name}`"))),
                Some(p) if p.shape() != t.shape() => return Err(Error::shape("parameter", t.shape(), p.shape())),
                Some(_) => {}
            }
        }
        Ok(Self { params, ..template })
    }

    pub fn group_count(&self, group: ParamGroup) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| param_group(n) == Some(group))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Parameters updated on a batch of `task`: the shared group, that
    /// task's own group and, for ASP, the discriminator.
    pub fn trainable_parameters(&self, task: Task) -> Result<Vec<String>> {
        self.arch.task_index(task)?;
        Ok(self
            .params
            .names()
            .filter(|n| match param_group(n) {
                Some(ParamGroup::Shared) | Some(ParamGroup::Discriminator) => true,
                Some(ParamGroup::Task(t)) => t == task,
                None => false,
            })
            .map(String::from)
            .collect())
    }

    fn encode_stack(
        &self,
        g: &mut Graph,
        prefix: &str,
        inputs: &[Var],
        lengths: &[usize],
        dropout: Option<&mut Dropout>,
    ) -> Result<crate::model::EncoderOutput> {
        encode(g, &self.params, prefix, self.config.layers, inputs, lengths, dropout, None)
    }

    /// Emissions (and, for ASP, discriminator logits) for `batch`, whose
    /// task selects the head. Passing `dropout` means training mode.
    pub fn forward_task(
        &self,
        g: &mut Graph,
        emb: &EmbeddingMatrix,
        batch: &PaddedBatch,
        mut dropout: Option<&mut Dropout>,
        adversary: Adversary,
    ) -> Result<TaskForward> {
        let task = batch.task;
        self.arch.task_index(task)?;
        if emb.dim() != self.config.embedding_dim {
            return Err(Error::shape("embeddings", &[self.config.embedding_dim], &[emb.dim()]));
        }
        let feats = match dropout.as_deref_mut() {
            Some(d) if d.spec.input_keep < 1.0 => {
                let keep = d.spec.input_keep;
                let mut sample = |n: usize| d.mask(&[n], keep).expect("keep < 1").into_data();
                batch_features(batch, emb, Some(&mut sample))
            }
            _ => batch_features(batch, emb, None),
        };
        let inputs: Vec<Var> = feats.into_iter().map(|t| g.constant(t)).collect();
        let lengths = &batch.lengths;

        let shared = self.encode_stack(g, SHARED_ENCODER, &inputs, lengths, dropout.as_deref_mut())?;
        let p = task_prefix(task);
        let (head_in, private_repr) = if self.arch.kind.has_private() {
            let private = self.encode_stack(g, &format!("{p}.enc"), &inputs, lengths, dropout.as_deref_mut())?;
            let top = private.top().to_vec();
            let joined = shared
                .top()
                .iter()
                .zip(&top)
                .map(|(&s, &q)| g.concat(&[s, q]))
                .collect::<Result<Vec<_>>>()?;
            (joined, Some(top))
        } else if self.arch.kind == ArchKind::H && task == self.arch.tap_task {
            (shared.layer(self.arch.tap_layer)?.to_vec(), None)
        } else {
            (shared.top().to_vec(), None)
        };

        let w_name = format!("{p}.head.w");
        let mut w = g.param(&w_name, self.params.expect(&w_name));
        if let Some(d) = dropout.as_deref_mut() {
            let keep = d.spec.classifier_keep;
            if let Some(m) = d.mask(self.params.expect(&w_name).shape(), keep) {
                w = g.mask(w, m)?;
            }
        }
        let b_name = format!("{p}.head.b");
        let b = g.param(&b_name, self.params.expect(&b_name));
        let emissions = project(g, &head_in, w, b)?;

        let discriminator_logits = if self.arch.kind == ArchKind::Asp {
            let pooled = masked_mean(g, shared.top(), lengths)?;
            let x = match adversary {
                Adversary::Reversed => g.gradient_reversal(pooled, self.arch.adv_scale)?,
                Adversary::Identity => pooled,
            };
            let dw = g.param("disc.w", self.params.expect("disc.w"));
            let db = g.param("disc.b", self.params.expect("disc.b"));
            let z = g.matmul(x, dw)?;
            Some(g.add(z, db)?)
        } else {
            None
        };

        let crf_var = |g: &mut Graph, s: &str| {
            let n = format!("{p}.crf.{s}");
            g.param(&n, self.params.expect(&n))
        };
        let crf = (crf_var(g, "trans"), crf_var(g, "start"), crf_var(g, "stop"));
        Ok(TaskForward {
            task,
            emissions,
            shared_repr: shared.top().to_vec(),
            private_repr,
            discriminator_logits,
            crf,
        })
    }

    /// Mean CRF negative log-likelihood over the batch rows.
    pub fn task_loss(&self, g: &mut Graph, fwd: &TaskForward, batch: &PaddedBatch) -> Result<Var> {
        let (tr, st, sp) = fwd.crf;
        crf_nll_graph(g, &fwd.emissions, tr, st, sp, &batch.tag_ids, &batch.lengths)
    }

    /// Mean cross-entropy of the discriminator against `true_task`.
    pub fn adversarial_loss(&self, g: &mut Graph, fwd: &TaskForward, true_task: Task) -> Result<Var> {
        let logits = fwd
            .discriminator_logits
            .ok_or_else(|| Error::Contract(format!("{} model has no discriminator", self.arch.kind)))?;
        let k = self.arch.task_index(true_task)?;
        let (rows, n) = g.value(logits).dims2()?;
        let mut onehot = Tensor::zeros(&[rows, n]);
        for r in 0..rows {
            onehot.data_mut()[r * n + k] = 1.0;
        }
        let lse = g.log_sum_exp(logits);
        let picked = g.mask(logits, onehot)?;
        let picked = g.sum_last(picked);
        let ce = g.sub(lse, picked)?;
        Ok(g.mean(ce))
    }

    /// The training objective for one batch: task loss, plus the
    /// adversarial term for ASP.
    pub fn batch_loss(
        &self,
        g: &mut Graph,
        emb: &EmbeddingMatrix,
        batch: &PaddedBatch,
        dropout: Option<&mut Dropout>,
    ) -> Result<BatchLoss> {
        let fwd = self.forward_task(g, emb, batch, dropout, Adversary::Reversed)?;
        let task = self.task_loss(g, &fwd, batch)?;
        if fwd.discriminator_logits.is_some() {
            let adv = self.adversarial_loss(g, &fwd, batch.task)?;
            let total = g.add(task, adv)?;
            Ok(BatchLoss { total, task, adversarial: Some(adv) })
        } else {
            Ok(BatchLoss { total: task, task, adversarial: None })
        }
    }

    /// Viterbi tag ids per row (unpadded), without dropout.
    pub fn predict(&self, emb: &EmbeddingMatrix, batch: &PaddedBatch) -> Result<Vec<Vec<usize>>> {
        let mut g = Graph::new();
        let fwd = self.forward_task(&mut g, emb, batch, None, Adversary::Reversed)?;
        let p = task_prefix(batch.task);
        let crf = CrfParams::new(
            self.params.expect(&format!("{p}.crf.trans")),
            self.params.expect(&format!("{p}.crf.start")),
            self.params.expect(&format!("{p}.crf.stop")),
        )?;
        let y = crf.num_tags;
        let steps: Vec<&Tensor> = fwd.emissions.iter().map(|&v| g.value(v)).collect();
        Ok(batch
            .lengths
            .iter()
            .enumerate()
            .map(|(b, &len)| {
                let mut em = Vec::with_capacity(len * y);
                for s in &steps[..len] {
                    em.extend_from_slice(&s.data()[b * y..(b + 1) * y]);
                }
                viterbi(&em, len, &crf).0
            })
            .collect())
    }

    /// Decoded role spans for each instance, batched `batch_size` at a time
    /// in input order.
    pub fn predict_roles(
        &self,
        emb: &EmbeddingMatrix,
        task: Task,
        instances: &[EncodedInstance],
        batch_size: usize,
    ) -> Result<Vec<Vec<LabeledSpan>>> {
        let scheme = self.arch.scheme(task)?;
        let idx: Vec<usize> = (0..instances.len()).collect();
        let mut out = Vec::with_capacity(instances.len());
        for chunk in idx.chunks(batch_size.max(1)) {
            let batch = PaddedBatch::new(task, instances, chunk);
            for tags in self.predict(emb, &batch)? {
                out.push(RoleInstance::roles_from_tags(task, &scheme.decode(&tags)));
            }
        }
        Ok(out)
    }
}

/// Average over each row's valid steps.
fn masked_mean(g: &mut Graph, seq: &[Var], lengths: &[usize]) -> Result<Var> {
    let width = g.value(seq[0]).last_dim();
    let mut acc: Option<Var> = None;
    for (t, &h) in seq.iter().enumerate() {
        let mut w = Tensor::zeros(&[lengths.len(), width]);
        for (b, &len) in lengths.iter().enumerate() {
            if t < len {
                w.data_mut()[b * width..(b + 1) * width].fill(1.0 / len as f64);
            }
        }
        let term = g.mask(h, w)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    acc.ok_or_else(|| Error::contract("empty sequence"))
}
