//! Linear-chain CRF inference checked against brute-force enumeration of
//! every tag path.

use rand::Rng;
use rolemtl_core::graph::Graph;
use rolemtl_core::model::{crf_nll, crf_nll_graph, log_partition, marginals, path_score, viterbi, CrfParams};
use rolemtl_core::rng::stream;
use rolemtl_core::Tensor;

struct Instance {
    t: usize,
    y: usize,
    em: Vec<f64>,
    trans: Tensor,
    start: Tensor,
    stop: Tensor,
}

fn random_instance<R: Rng>(r: &mut R, integer: bool) -> Instance {
    let t = r.gen_range(1..=6);
    let y = r.gen_range(1..=5);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| if integer { r.gen_range(-2..=2) as f64 } else { r.gen_range(-3.0..3.0) })
            .collect()
    };
    let em = draw(t * y);
    let trans = Tensor::new(vec![y, y], draw(y * y)).unwrap();
    let start = Tensor::vector(draw(y));
    let stop = Tensor::vector(draw(y));
    Instance { t, y, em, trans, start, stop }
}

/// Every path in `0..y^t`, first tag most significant.
fn all_paths(t: usize, y: usize) -> Vec<Vec<usize>> {
    let total = y.pow(t as u32);
    (0..total)
        .map(|mut k| {
            let mut p = vec![0; t];
            for i in (0..t).rev() {
                p[i] = k % y;
                k /= y;
            }
            p
        })
        .collect()
}

fn score(inst: &Instance, path: &[usize]) -> f64 {
    let y = inst.y;
    let mut s = inst.start.data()[path[0]] + inst.stop.data()[path[inst.t - 1]];
    for (i, &tag) in path.iter().enumerate() {
        s += inst.em[i * y + tag];
        if i > 0 {
            s += inst.trans.data()[path[i - 1] * y + tag];
        }
    }
    s
}

fn brute_log_z(inst: &Instance) -> f64 {
    let scores: Vec<f64> = all_paths(inst.t, inst.y).iter().map(|p| score(inst, p)).collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

fn crf(inst: &Instance) -> CrfParams<'_> {
    CrfParams::new(&inst.trans, &inst.start, &inst.stop).unwrap()
}

#[test]
fn partition_matches_enumeration() {
    let mut r = stream(1, "crf-oracle");
    let began = std::time::Instant::now();
    for _ in 0..500 {
        let inst = random_instance(&mut r, false);
        let got = log_partition(&inst.em, inst.t, &crf(&inst));
        let want = brute_log_z(&inst);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
    assert!(began.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn path_probabilities_sum_to_one() {
    let mut r = stream(2, "crf-oracle");
    for _ in 0..100 {
        let inst = random_instance(&mut r, false);
        let c = crf(&inst);
        let log_z = log_partition(&inst.em, inst.t, &c);
        let total: f64 = all_paths(inst.t, inst.y)
            .iter()
            .map(|p| (path_score(&inst.em, &c, p) - log_z).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-8);
    }
}

#[test]
fn viterbi_matches_enumeration() {
    let mut r = stream(3, "crf-oracle");
    for _ in 0..500 {
        let inst = random_instance(&mut r, false);
        let (path, best) = viterbi(&inst.em, inst.t, &crf(&inst));
        let paths = all_paths(inst.t, inst.y);
        let (arg, max) = paths
            .iter()
            .map(|p| (p, score(&inst, p)))
            .fold((&paths[0], f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        assert!((best - max).abs() < 1e-9);
        assert_eq!(&path, arg);
        assert!((score(&inst, &path) - best).abs() < 1e-9);
    }
}

/// With integer scores many paths tie. Lowest-index backpointers select the
/// optimal path that is smallest when read from the last tag backwards.
#[test]
fn viterbi_tie_break_on_integer_scores() {
    let mut r = stream(4, "crf-oracle");
    let mut saw_tie = false;
    for _ in 0..500 {
        let inst = random_instance(&mut r, true);
        let (path, best) = viterbi(&inst.em, inst.t, &crf(&inst));
        let scored: Vec<(Vec<usize>, f64)> = all_paths(inst.t, inst.y)
            .into_iter()
            .map(|p| {
                let s = score(&inst, &p);
                (p, s)
            })
            .collect();
        let max = scored.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let optimal: Vec<&Vec<usize>> = scored.iter().filter(|x| x.1 == max).map(|x| &x.0).collect();
        saw_tie |= optimal.len() > 1;
        let want = optimal
            .iter()
            .min_by_key(|p| p.iter().rev().cloned().collect::<Vec<_>>())
            .unwrap();
        assert_eq!(best, max);
        assert_eq!(&&path, want);
    }
    assert!(saw_tie);
}

#[test]
fn all_zero_scores_decode_to_tag_zero() {
    let (tr, s, e) = (Tensor::zeros(&[4, 4]), Tensor::zeros(&[4]), Tensor::zeros(&[4]));
    let c = CrfParams::new(&tr, &s, &e).unwrap();
    assert_eq!(viterbi(&[0.0; 20], 5, &c).0, vec![0; 5]);
}

#[test]
fn decoupled_case_is_per_position_argmax() {
    let (tr, s, e) = (Tensor::zeros(&[3, 3]), Tensor::zeros(&[3]), Tensor::zeros(&[3]));
    let c = CrfParams::new(&tr, &s, &e).unwrap();
    let em = [0.1, 2.0, 0.3, 5.0, 0.0, 0.0, 0.0, 0.0, 1.5];
    assert_eq!(viterbi(&em, 3, &c).0, vec![1, 0, 2]);
}

#[test]
fn emission_gradient_is_marginals_minus_gold() {
    let mut r = stream(5, "crf-grad");
    for _ in 0..50 {
        let inst = random_instance(&mut r, false);
        let gold: Vec<usize> = (0..inst.t).map(|_| r.gen_range(0..inst.y)).collect();
        let mut g = Graph::new();
        let steps: Vec<_> = (0..inst.t)
            .map(|t| g.variable(Tensor::new(vec![1, inst.y], inst.em[t * inst.y..(t + 1) * inst.y].to_vec()).unwrap()))
            .collect();
        let tr = g.variable(inst.trans.clone());
        let st = g.variable(inst.start.clone());
        let sp = g.variable(inst.stop.clone());
        let loss = crf_nll_graph(&mut g, &steps, tr, st, sp, &[gold.clone()], &[inst.t]).unwrap();
        let grads = g.backward(loss).unwrap();
        let marg = marginals(&inst.em, inst.t, &crf(&inst));
        let em_t = Tensor::new(vec![inst.t, inst.y], inst.em.clone()).unwrap();
        for t in 0..inst.t {
            let d = grads.wrt(steps[t]);
            for k in 0..inst.y {
                let expect = marg[t * inst.y + k] - if gold[t] == k { 1.0 } else { 0.0 };
                assert!((d.data()[k] - expect).abs() < 1e-10);
                // central finite difference of the scalar NLL
                let eps = 1e-5;
                let mut up = em_t.clone();
                up.data_mut()[t * inst.y + k] += eps;
                let mut down = em_t.clone();
                down.data_mut()[t * inst.y + k] -= eps;
                let c = crf(&inst);
                let fd = (crf_nll(&up, &c, &gold).unwrap() - crf_nll(&down, &c, &gold).unwrap()) / (2.0 * eps);
                assert!((fd - expect).abs() < 1e-5, "{fd} vs {expect}");
            }
        }
        // transitions, start and stop against finite differences too
        for (which, var) in [tr, st, sp].into_iter().enumerate() {
            let d = grads.wrt(var);
            for i in 0..d.len() {
                let eps = 1e-5;
                let bump = |delta: f64| {
                    let mut parts = [inst.trans.clone(), inst.start.clone(), inst.stop.clone()];
                    parts[which].data_mut()[i] += delta;
                    let c = CrfParams::new(&parts[0], &parts[1], &parts[2]).unwrap();
                    crf_nll(&em_t, &c, &gold).unwrap()
                };
                let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
                assert!((fd - d.data()[i]).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn batched_loss_ignores_padding() {
    let mut r = stream(6, "crf-batch");
    let y = 3;
    let a = (0..4 * y).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let b = (0..2 * y).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let trans = Tensor::new(vec![y, y], (0..y * y).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let (start, stop) = (Tensor::zeros(&[y]), Tensor::vector(vec![0.2, -0.1, 0.0]));
    let c = CrfParams::new(&trans, &start, &stop).unwrap();
    let (ga, gb) = (vec![0, 1, 2, 1], vec![2, 2, 0, 0]);
    let la = crf_nll(&Tensor::new(vec![4, y], a.clone()).unwrap(), &c, &ga).unwrap();
    let lb = crf_nll(&Tensor::new(vec![2, y], b.clone()).unwrap(), &c, &gb[..2]).unwrap();
    let mut g = Graph::new();
    let steps: Vec<_> = (0..4)
        .map(|t| {
            let mut row = a[t * y..(t + 1) * y].to_vec();
            // garbage beyond row b's length must not matter
            row.extend(if t < 2 { b[t * y..(t + 1) * y].to_vec() } else { vec![99.0; y] });
            g.constant(Tensor::new(vec![2, y], row).unwrap())
        })
        .collect();
    let tr = g.constant(trans.clone());
    let st = g.constant(start.clone());
    let sp = g.constant(stop.clone());
    let loss = crf_nll_graph(&mut g, &steps, tr, st, sp, &[ga, gb], &[4, 2]).unwrap();
    assert!((g.value(loss).item() - (la + lb) / 2.0).abs() < 1e-12);
}
