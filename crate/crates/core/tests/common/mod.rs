#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rolemtl_core::corpus::{build_vocab, EmbeddingMatrix, EncodedInstance, LabelScheme, RoleInstance, Task, Vocabulary};
use rolemtl_core::model::{DropoutSpec, ModelConfig};
use rolemtl_core::mtl::{ArchKind, ArchSpec};
use rolemtl_core::synth::{generate, synth_embeddings, Pattern, SynthSpec};

pub struct Setup {
    pub vocab: Vocabulary,
    pub emb: Arc<EmbeddingMatrix>,
    pub orl: Vec<RoleInstance>,
    pub srl: Vec<RoleInstance>,
    pub srl_scheme: LabelScheme,
}

impl Setup {
    pub fn new(orl_pattern: Pattern, n_orl: usize, n_srl: usize, dim: usize, seed: u64) -> Self {
        let orl = generate(&SynthSpec::new(orl_pattern, n_orl, seed)).unwrap().instances;
        let srl = generate(&SynthSpec::new(Pattern::SrlA0a1, n_srl.max(1), seed + 1)).unwrap().instances;
        let vocab = build_vocab(orl.iter().chain(&srl));
        let vectors: BTreeMap<String, Vec<f64>> = synth_embeddings(40, dim, "", seed);
        let emb = EmbeddingMatrix::from_vectors(&vocab, dim, &vectors).unwrap();
        let srl_scheme = LabelScheme::srl_from_instances(&srl);
        Self { vocab, emb: Arc::new(emb), orl, srl, srl_scheme }
    }

    pub fn arch(&self, kind: ArchKind) -> ArchSpec {
        match kind {
            ArchKind::Stl => ArchSpec::stl(LabelScheme::orl()),
            k => ArchSpec::new(k, vec![self.srl_scheme.clone(), LabelScheme::orl()]),
        }
    }

    pub fn encoded(&self, task: Task) -> Vec<EncodedInstance> {
        let (inst, scheme) = match task {
            Task::Orl => (&self.orl, LabelScheme::orl()),
            Task::Srl => (&self.srl, self.srl_scheme.clone()),
        };
        inst.iter().map(|i| EncodedInstance::new(i, &self.vocab, &scheme)).collect()
    }

    pub fn train_data(&self, arch: &ArchSpec) -> BTreeMap<Task, Vec<EncodedInstance>> {
        arch.task_ids().map(|t| (t, self.encoded(t))).collect()
    }
}

pub fn small_config(dim: usize, hidden: usize) -> ModelConfig {
    ModelConfig { embedding_dim: dim, hidden, layers: 3, dropout: DropoutSpec::default() }
}
