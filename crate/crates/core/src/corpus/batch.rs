use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{LabelScheme, RoleInstance, Span, Task, Vocabulary};
use crate::rng::{self, StreamRng};

/// An instance mapped to vocabulary and tag indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedInstance {
    pub token_ids: Vec<usize>,
    pub trigger: Span,
    pub tag_ids: Vec<usize>,
}

impl EncodedInstance {
    pub fn new(instance: &RoleInstance, vocab: &Vocabulary, scheme: &LabelScheme) -> Self {
        Self {
            token_ids: instance.tokens().iter().map(|t| vocab.id(t)).collect(),
            trigger: instance.trigger(),
            tag_ids: scheme.encode(instance),
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Right-padded batch. Row `i` has `lengths[i]` leading ones in its mask;
/// padded positions carry token id 0 (padding) and tag id 0 (`O`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedBatch {
    pub task: Task,
    pub token_ids: Vec<Vec<usize>>,
    pub tag_ids: Vec<Vec<usize>>,
    pub mask: Vec<Vec<u8>>,
    pub trigger_spans: Vec<Span>,
    pub lengths: Vec<usize>,
    /// Positions of the rows in the source instance list.
    pub members: Vec<usize>,
}

impl PaddedBatch {
    pub fn new(task: Task, source: &[EncodedInstance], members: &[usize]) -> Self {
        let t_max = members.iter().map(|&i| source[i].len()).max().unwrap_or(0);
        let mut b = PaddedBatch {
            task,
            token_ids: Vec::with_capacity(members.len()),
            tag_ids: Vec::with_capacity(members.len()),
            mask: Vec::with_capacity(members.len()),
            trigger_spans: Vec::with_capacity(members.len()),
            lengths: Vec::with_capacity(members.len()),
            members: members.to_vec(),
        };
        for &i in members {
            let inst = &source[i];
            let n = inst.len();
            let mut toks = vec![0; t_max];
            toks[..n].copy_from_slice(&inst.token_ids);
            let mut tags = vec![0; t_max];
            tags[..n].copy_from_slice(&inst.tag_ids);
            let mut mask = vec![0u8; t_max];
            mask[..n].iter_mut().for_each(|m| *m = 1);
            b.token_ids.push(toks);
            b.tag_ids.push(tags);
            b.mask.push(mask);
            b.trigger_spans.push(inst.trigger);
            b.lengths.push(n);
        }
        b
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.token_ids.first().map_or(0, Vec::len)
    }
}

/// One epoch: a seeded permutation of `0..n` cut into consecutive chunks;
/// the last chunk may be short.
pub fn epoch_order<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Endless stream of padded batches, reshuffled every epoch.
pub struct Batcher {
    task: Task,
    instances: Vec<EncodedInstance>,
    batch_size: usize,
    rng: StreamRng,
    pending: Vec<Vec<usize>>,
    epoch: usize,
}

impl Batcher {
    pub fn new(task: Task, instances: Vec<EncodedInstance>, batch_size: usize, seed: u64) -> Self {
        assert!(!instances.is_empty(), "batcher needs at least one instance");
        Self {
            task,
            instances,
            batch_size,
            rng: rng::stream(seed, "batches"),
            pending: Vec::new(),
            epoch: 0,
        }
    }

    pub fn instances(&self) -> &[EncodedInstance] {
        &self.instances
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.instances.len().div_ceil(self.batch_size)
    }
}

impl Iterator for Batcher {
    type Item = PaddedBatch;

    fn next(&mut self) -> Option<PaddedBatch> {
        if self.pending.is_empty() {
            self.pending = epoch_order(self.instances.len(), self.batch_size, &mut self.rng);
            self.pending.reverse();
            self.epoch += 1;
        }
        let members = self.pending.pop()?;
        Some(PaddedBatch::new(self.task, &self.instances, &members))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoded(n: usize) -> Vec<EncodedInstance> {
        (0..n)
            .map(|i| {
                let len = 1 + i % 7;
                EncodedInstance {
                    token_ids: (0..len).map(|t| 2 + t).collect(),
                    trigger: Span::new(0, 0),
                    tag_ids: vec![5; len],
                }
            })
            .collect()
    }

    #[test]
    fn seventy_instances_make_three_batches() {
        let b = Batcher::new(Task::Orl, encoded(70), 32, 9);
        let sizes: Vec<usize> = b.take(3).map(|b| b.size()).collect();
        assert_eq!(sizes, [32, 32, 6]);
    }

    #[test]
    fn masks_match_lengths_and_padding() {
        let data = encoded(70);
        for batch in Batcher::new(Task::Orl, data.clone(), 32, 9).take(6) {
            for i in 0..batch.size() {
                let len = data[batch.members[i]].len();
                assert_eq!(batch.lengths[i], len);
                let ones: usize = batch.mask[i].iter().map(|&m| usize::from(m)).sum();
                assert_eq!(ones, len);
                assert!(batch.mask[i][..len].iter().all(|&m| m == 1));
                assert!(batch.tag_ids[i][len..].iter().all(|&t| t == 0));
                assert!(batch.token_ids[i][len..].iter().all(|&t| t == 0));
            }
        }
    }

    #[test]
    fn same_seed_same_order() {
        let a: Vec<Vec<usize>> = Batcher::new(Task::Srl, encoded(70), 32, 4).take(9).map(|b| b.members).collect();
        let b: Vec<Vec<usize>> = Batcher::new(Task::Srl, encoded(70), 32, 4).take(9).map(|b| b.members).collect();
        let c: Vec<Vec<usize>> = Batcher::new(Task::Srl, encoded(70), 32, 5).take(9).map(|b| b.members).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn every_epoch_covers_all_instances() {
        let mut b = Batcher::new(Task::Srl, encoded(70), 32, 4);
        for _ in 0..2 {
            let mut seen: Vec<usize> = (0..3).flat_map(|_| b.next().unwrap().members).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..70).collect::<Vec<_>>());
        }
        assert_eq!(b.epoch(), 2);
    }
}
