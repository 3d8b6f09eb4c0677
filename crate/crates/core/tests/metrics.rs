use std::sync::Arc;

use num_rational::Ratio;
use proptest::prelude::*;
use rand::Rng;
use rolemtl_core::corpus::{LabeledSpan, RoleInstance, Sentence, Span, Task};
use rolemtl_core::metrics::{
    aggregate_cv, binary_prf, distance_stats, ks_test, proportional_prf, span_distance, srl_prf, stability_analysis,
    Credit, Prf, SpanCounts, Stability, StabilityConfig,
};
use rolemtl_core::rng::stream;

type Q = Ratio<i128>;

/// Exact P/R/F1 from a brute-force count over token positions: every span
/// is checked token by token against a coverage array of the other side.
#[derive(Default)]
struct TokenOracle {
    n_pred: i128,
    n_gold: i128,
    bin_p: i128,
    bin_r: i128,
    prop_p: Q,
    prop_r: Q,
}

fn coverage(spans: &[Span], len: usize) -> Vec<bool> {
    let mut on = vec![false; len];
    for s in spans {
        for slot in on.iter_mut().take(s.end + 1).skip(s.start) {
            *slot = true;
        }
    }
    on
}

impl TokenOracle {
    fn add(&mut self, pred: &[Span], gold: &[Span], sent_len: usize) {
        let (pc, gc) = (coverage(pred, sent_len), coverage(gold, sent_len));
        let side = |spans: &[Span], other: &[bool], n: &mut i128, bin: &mut i128, prop: &mut Q| {
            for s in spans {
                *n += 1;
                let hit = (s.start..=s.end).filter(|&i| other[i]).count() as i128;
                if hit > 0 {
                    *bin += 1;
                }
                *prop += Q::new(hit, (s.end - s.start + 1) as i128);
            }
        };
        side(pred, &gc, &mut self.n_pred, &mut self.bin_p, &mut self.prop_p);
        side(gold, &pc, &mut self.n_gold, &mut self.bin_r, &mut self.prop_r);
    }

    fn prf(num_p: Q, n_p: i128, num_r: Q, n_r: i128) -> (Q, Q, Q) {
        let div = |a: Q, n: i128| if n == 0 { Q::from(0) } else { a / n };
        let (p, r) = (div(num_p, n_p), div(num_r, n_r));
        let f = if p + r == Q::from(0) { Q::from(0) } else { Q::from(2) * p * r / (p + r) };
        (p, r, f)
    }

    fn binary(&self) -> (Q, Q, Q) {
        Self::prf(Q::from(self.bin_p), self.n_pred, Q::from(self.bin_r), self.n_gold)
    }

    fn proportional(&self) -> (Q, Q, Q) {
        Self::prf(self.prop_p, self.n_pred, self.prop_r, self.n_gold)
    }
}

fn exact(c: &Credit) -> Q {
    c.0.iter().map(|(&len, &n)| Q::new(n as i128, len as i128)).sum()
}

/// The same formulas applied to the implementation's exact tallies.
fn exact_scores(c: &SpanCounts) -> ((Q, Q, Q), (Q, Q, Q)) {
    let (np, ng) = (c.n_pred as i128, c.n_gold as i128);
    (
        TokenOracle::prf(Q::from(c.pred_overlapping as i128), np, Q::from(c.gold_overlapped as i128), ng),
        TokenOracle::prf(exact(&c.pred_credit), np, exact(&c.gold_credit), ng),
    )
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn close(got: Prf, want: (Q, Q, Q)) -> bool {
    let tol = |a: f64, b: Q| (a - to_f64(b)).abs() <= 1e-14;
    tol(got.p, want.0) && tol(got.r, want.1) && tol(got.f1, want.2)
}

fn random_spans<R: Rng>(r: &mut R, len: usize) -> Vec<Span> {
    (0..r.gen_range(0..4))
        .map(|_| {
            let a = r.gen_range(0..len);
            let b = r.gen_range(a..len.min(a + 6));
            Span::new(a, b)
        })
        .collect()
}

#[test]
fn span_scores_match_token_oracle_exactly() {
    let mut r = stream(21, "metric-oracle");
    for _ in 0..1000 {
        let mut oracle = TokenOracle::default();
        let mut counts = SpanCounts::default();
        for _ in 0..r.gen_range(1..5) {
            let len = r.gen_range(1..=20);
            let (pred, gold) = (random_spans(&mut r, len), random_spans(&mut r, len));
            oracle.add(&pred, &gold, len);
            counts.add(&SpanCounts::of(&pred, &gold));
        }
        let (bin, prop) = exact_scores(&counts);
        assert_eq!(bin, oracle.binary());
        assert_eq!(prop, oracle.proportional());
        assert!(close(counts.binary(), oracle.binary()));
        assert!(close(counts.proportional(), oracle.proportional()));
    }
}

#[test]
fn worked_examples() {
    let s = Span::new;
    let prop = proportional_prf(&[s(2, 5)], &[s(0, 5)]);
    assert_eq!(prop.p, 1.0);
    assert!((prop.r - 4.0 / 6.0).abs() < 1e-15);
    assert!((prop.f1 - 0.8).abs() < 1e-15);
    let (_, exact_prop) = exact_scores(&SpanCounts::of(&[s(2, 5)], &[s(0, 5)]));
    assert_eq!(exact_prop.2, Q::new(4, 5));

    assert_eq!(binary_prf(&[s(4, 7)], &[s(3, 5)]), Prf::new(1.0, 1.0));
    assert_eq!(binary_prf(&[s(5, 6)], &[s(0, 1)]), Prf::default());
    assert_eq!(binary_prf(&[s(1, 2)], &[s(1, 2)]), Prf::new(1.0, 1.0));
    assert_eq!(proportional_prf(&[s(1, 2)], &[s(1, 2)]), Prf::new(1.0, 1.0));
    assert_eq!(binary_prf(&[], &[]), Prf::default());

    let l = |label: &str, a, b| LabeledSpan::new(label, a, b);
    let f = srl_prf(&[l("A0", 0, 1)], &[l("A0", 0, 1), l("A1", 3, 4)]);
    assert_eq!((f.p, f.r), (1.0, 0.5));
    assert!((f.f1 - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(srl_prf(&[l("A1", 0, 1)], &[l("A0", 0, 1)]).f1, 0.0);
    // predicate spans do not count
    assert_eq!(srl_prf(&[l("V", 2, 2), l("A0", 0, 1)], &[l("A0", 0, 1), l("V", 2, 2)]), Prf::new(1.0, 1.0));
}

fn spans(max_len: usize) -> impl Strategy<Value = Vec<Span>> {
    prop::collection::vec((0..max_len, 0usize..6), 0..5)
        .prop_map(move |v| v.into_iter().map(|(a, w)| Span::new(a, (a + w).min(max_len - 1))).collect())
}

proptest! {
    #[test]
    fn proportional_never_exceeds_binary(pred in spans(20), gold in spans(20)) {
        let (b, p) = (binary_prf(&pred, &gold), proportional_prf(&pred, &gold));
        prop_assert!(p.p <= b.p && p.r <= b.r && p.f1 <= b.f1 + 1e-15);
        for s in [b, p] {
            for x in [s.p, s.r, s.f1] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            if s.p > 0.0 && s.r > 0.0 {
                prop_assert!(s.f1 <= s.p.max(s.r) + 1e-15 && s.f1 >= s.p.min(s.r) - 1e-15);
            }
        }
    }

    #[test]
    fn ks_is_symmetric_and_bounded(
        a in prop::collection::vec(-5.0f64..5.0, 1..12),
        b in prop::collection::vec(-5.0f64..5.0, 1..12),
    ) {
        let (x, y) = (ks_test(&a, &b).unwrap(), ks_test(&b, &a).unwrap());
        prop_assert_eq!(x.d, y.d);
        prop_assert_eq!(x.p_value, y.p_value);
        prop_assert!((0.0..=1.0).contains(&x.d) && (0.0..=1.0).contains(&x.p_value));
    }
}

/// D by evaluating both ECDFs at every pooled point with rational steps.
fn hand_d(a: &[f64], b: &[f64]) -> Q {
    let ecdf = |s: &[f64], x: f64| Q::new(s.iter().filter(|&&v| v <= x).count() as i128, s.len() as i128);
    a.iter()
        .chain(b)
        .map(|&x| {
            let d = ecdf(a, x) - ecdf(b, x);
            if d < Q::from(0) { -d } else { d }
        })
        .max()
        .unwrap()
}

#[test]
fn ks_examples_and_hand_ecdf() {
    let cases: [(&[f64], &[f64], Q); 3] = [
        (&[0.3, 0.1, 0.2], &[0.1, 0.2, 0.3], Q::from(0)),
        (&[0.1, 0.2, 0.3, 0.4], &[0.6, 0.7, 0.8, 0.9], Q::from(1)),
        (&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], Q::new(1, 3)),
    ];
    for (a, b, want) in cases {
        assert_eq!(hand_d(a, b), want);
        assert_eq!(ks_test(a, b).unwrap().d, to_f64(want));
    }
    assert_eq!(ks_test(&[0.5, 0.5], &[0.5, 0.5]).unwrap().p_value, 1.0);

    let mut r = stream(3, "ks");
    for _ in 0..300 {
        let a: Vec<f64> = (0..r.gen_range(1..9)).map(|_| r.gen_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..r.gen_range(1..9)).map(|_| r.gen_range(0..6) as f64).collect();
        assert_eq!(ks_test(&a, &b).unwrap().d, to_f64(hand_d(&a, &b)));
    }
    assert!(ks_test(&[], &[1.0]).is_err());
    assert!(ks_test(&[f64::NAN], &[1.0]).is_err());
}

#[test]
fn ks_p_value_falls_as_samples_separate() {
    // eight scores each, as in a 4-fold x 2-seed comparison
    let base: Vec<f64> = (0..8).map(|i| 0.5 + 0.01 * i as f64).collect();
    let mut last = (0.0, 1.0 + 1e-12);
    for shift in 0..=8 {
        let other: Vec<f64> = base.iter().map(|x| x + 0.01 * shift as f64 + 0.005).collect();
        let k = ks_test(&base, &other).unwrap();
        assert!(k.d >= last.0 && k.p_value <= last.1, "shift {shift}");
        last = (k.d, k.p_value);
    }
    assert_eq!(last.0, 1.0);
    assert!(last.1 < 0.05);
}

fn instance(roles: Vec<LabeledSpan>) -> RoleInstance {
    let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let s = Arc::new(Sentence::new("doc", 0, words).unwrap());
    RoleInstance::new(s, Task::Orl, Span::new(5, 5), roles).unwrap()
}

#[test]
fn stability_categories() {
    let gold = vec![
        instance(vec![LabeledSpan::new("H", 3, 4), LabeledSpan::new("T", 6, 8)]),
        instance(vec![LabeledSpan::new("H", 0, 0)]),
    ];
    let cfg = StabilityConfig::default();
    // holder of sentence 0 found in 7 trials, target in 4, holder of sentence 1 in 1
    let trials: Vec<Vec<Vec<LabeledSpan>>> = (0..8)
        .map(|k| {
            let mut first = Vec::new();
            if k < 7 {
                first.push(LabeledSpan::new("H", 4, 4));
            }
            if k % 2 == 0 {
                first.push(LabeledSpan::new("T", 8, 10));
            } else {
                // right span, wrong label
                first.push(LabeledSpan::new("H", 6, 8));
            }
            let second = if k == 3 { vec![LabeledSpan::new("H", 0, 1)] } else { vec![] };
            vec![first, second]
        })
        .collect();
    let rep = stability_analysis(&trials, &gold, &cfg).unwrap();
    let cats: Vec<(usize, Stability)> = rep.verdicts.iter().map(|v| (v.correct_trials, v.category)).collect();
    assert_eq!(
        cats,
        [(7, Stability::EasyCorrect), (4, Stability::Unstable), (1, Stability::HardIncorrect)]
    );
    assert_eq!(rep.easy_correct + rep.hard_incorrect + rep.unstable, rep.verdicts.len());
    assert!(stability_analysis(&trials[..7], &gold, &cfg).is_err());

    let d = distance_stats(&rep.verdicts, "H");
    assert_eq!(d.easy_correct.mean, Some(1.0));
    assert_eq!(d.hard_incorrect.mean, Some(5.0));
    assert_eq!(d.unstable.count, 0);
    assert_eq!(d.unstable.mean, None);
}

#[test]
fn category_thresholds() {
    let cfg = StabilityConfig::default();
    let cats: Vec<Stability> = (0..=8).map(|n| cfg.categorize(n)).collect();
    use Stability::*;
    assert_eq!(
        cats,
        [HardIncorrect, HardIncorrect, HardIncorrect, Unstable, Unstable, Unstable, EasyCorrect, EasyCorrect, EasyCorrect]
    );
}

#[test]
fn distances() {
    assert_eq!(span_distance(Span::new(2, 2), Span::new(4, 4)), 2);
    assert_eq!(span_distance(Span::new(3, 3), Span::new(4, 4)), 1);
    assert_eq!(span_distance(Span::new(5, 9), Span::new(4, 4)), 1);
    assert_eq!(span_distance(Span::new(3, 6), Span::new(4, 4)), 0);
}

#[test]
fn cross_validation_summary() {
    let s = aggregate_cv(&[0.7, 0.9]).unwrap();
    assert!((s.mean - 0.8).abs() < 1e-15);
    assert!((s.sd - 0.02f64.sqrt()).abs() < 1e-15);
    assert_eq!(aggregate_cv(&[0.8, 0.8]).unwrap().sd, 0.0);
    assert!(aggregate_cv(&[0.8]).is_err());
}
