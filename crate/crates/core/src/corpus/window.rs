use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{LabeledSpan, RoleInstance, Sentence, Span};

pub const WINDOW_MAX_LEN: usize = 150;
pub const WINDOW_RADIUS: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct Windowed {
    pub instance: RoleInstance,
    /// Roles that fell completely outside the window.
    pub dropped: Vec<LabeledSpan>,
    /// Token offset of the window in the original sentence.
    pub offset: usize,
}

/// Crops sentences longer than `max_len` to `radius` tokens either side of
/// the trigger (clamped). Roles partly inside the window are clipped to it;
/// roles fully outside are returned in [`Windowed::dropped`].
pub fn window_instance(instance: &RoleInstance, max_len: usize, radius: usize) -> Windowed {
    let n = instance.len();
    if n <= max_len {
        return Windowed {
            instance: instance.clone(),
            dropped: Vec::new(),
            offset: 0,
        };
    }
    let t = instance.trigger();
    let lo = t.start.saturating_sub(radius);
    let hi = (t.end + radius).min(n - 1);
    let window = Span::new(lo, hi);
    let s = instance.sentence();
    let sentence = Sentence {
        doc_id: s.doc_id.clone(),
        sent_id: s.sent_id,
        tokens: s.tokens[lo..=hi].to_vec(),
    };
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for r in instance.roles() {
        if r.span.overlaps(&window) {
            let start = r.span.start.max(lo) - lo;
            let end = r.span.end.min(hi) - lo;
            kept.push(LabeledSpan::new(r.label.clone(), start, end));
        } else {
            dropped.push(r.clone());
        }
    }
    let trigger = Span::new(t.start - lo, t.end - lo);
    let instance = RoleInstance::new(Arc::new(sentence), instance.task(), trigger, kept)
        .expect("cropping preserves validity");
    Windowed {
        instance,
        dropped,
        offset: lo,
    }
}
