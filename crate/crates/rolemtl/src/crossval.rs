//! Repeated k-fold cross-validation over several architectures, with
//! Kolmogorov-Smirnov tests between them.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use rolemtl_core::corpus::{CvPlan, RoleInstance};
use rolemtl_core::metrics::{aggregate_cv, ks_test, CvSummary, KsResult, SpanMetricsReport};
use rolemtl_core::mtl::ArchKind;
use rolemtl_core::train::TrainLog;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::predictions::PredictionRecord;
use crate::formats::report::{metric_values, ORL_METRICS};
use crate::pipeline::{evaluate_orl_model, predict, split, train_run, Resources, RunInputs, RunSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Job {
    pub arch: ArchKind,
    pub seed: u64,
    pub fold: usize,
}

impl Job {
    pub fn name(&self) -> String {
        format!("{}-s{}-f{}", self.arch, self.seed, self.fold)
    }
}

/// Result of one (architecture, seed, fold) run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub summary: RunSummary,
    pub dev: SpanMetricsReport,
    pub test: SpanMetricsReport,
    #[serde(skip)]
    pub log: TrainLog,
    #[serde(skip)]
    pub dev_predictions: Vec<PredictionRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArchSummary {
    pub arch: ArchKind,
    /// Metric name → summary over every fold and seed.
    pub dev: BTreeMap<String, CvSummary>,
    pub test: BTreeMap<String, CvSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub a: ArchKind,
    pub b: ArchKind,
    pub split: String,
    pub metric: String,
    pub ks: KsResult,
    pub significant: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvOutcome {
    pub plan: CvPlan,
    pub runs: Vec<FoldResult>,
    /// In the order of `cv.archs`, repeats included.
    pub summaries: Vec<ArchSummary>,
    /// Every pair of listed architectures, every split and metric.
    pub comparisons: Vec<Comparison>,
}

/// Every distinct job, architectures in first-listed order, then seeds,
/// then folds.
pub fn jobs(cfg: &RunConfig) -> Vec<Job> {
    let mut archs: Vec<ArchKind> = Vec::new();
    for a in &cfg.cv.archs {
        if !archs.contains(a) {
            archs.push(*a);
        }
    }
    let mut out = Vec::new();
    for arch in archs {
        for &seed in &cfg.cv.seeds {
            for fold in 0..cfg.cv.k {
                out.push(Job { arch, seed, fold });
            }
        }
    }
    out
}

fn run_job(cfg: &RunConfig, res: &Resources, orl: &[RoleInstance], srl: &[RoleInstance], plan: &CvPlan, job: Job) -> Result<FoldResult> {
    let s = split(orl, plan, job.fold);
    if s.train.is_empty() || s.test.is_empty() {
        return Err(Error::Runtime(format!("{}: empty training or test split", job.name())));
    }
    let inputs = RunInputs { resources: res, orl_train: &s.train, orl_dev: &s.dev, srl_train: srl };
    let out = train_run(cfg, job.arch, job.seed, &inputs, |_| {})?;
    let bs = cfg.optim.batch_size;
    let ck = &out.checkpoint;
    let dev_pred = predict(&ck.model, &ck.embeddings, &ck.vocab, rolemtl_core::corpus::Task::Orl, &s.dev, bs)?;
    let dev = rolemtl_core::metrics::evaluate_orl(&dev_pred, &s.dev)?;
    let test = evaluate_orl_model(ck, &s.test, bs)?;
    Ok(FoldResult {
        fold: job.fold,
        summary: out.summary,
        dev,
        test,
        log: out.log,
        dev_predictions: s.dev.iter().zip(&dev_pred).map(|(g, p)| PredictionRecord::new(g, p)).collect(),
    })
}

/// Runs every job on up to `jobs` worker threads. Results come back in job
/// order whatever the thread count.
pub fn run_crossval(
    cfg: &RunConfig,
    res: &Resources,
    orl: &[RoleInstance],
    srl: &[RoleInstance],
    plan: &CvPlan,
    threads: usize,
    progress: impl Fn(&Job, &FoldResult) + Sync,
) -> Result<CvOutcome> {
    let jobs = jobs(cfg);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<FoldResult>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let r = run_job(cfg, res, orl, srl, plan, *job);
                if let Ok(fr) = &r {
                    progress(job, fr);
                }
                let failed = r.is_err();
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
                if failed {
                    // let the other workers drain quickly
                    next.store(jobs.len(), Ordering::SeqCst);
                }
            });
        }
    });
    let mut runs = Vec::with_capacity(jobs.len());
    for (job, slot) in jobs.iter().zip(slots.into_inner().expect("workers joined")) {
        match slot {
            Some(r) => runs.push(r?),
            None => return Err(Error::Runtime(format!("{} did not run", job.name()))),
        }
    }
    summarize(cfg, plan.clone(), runs)
}

fn values(runs: &[FoldResult], arch: ArchKind, test: bool, m: usize) -> Vec<f64> {
    runs.iter()
        .filter(|r| r.summary.arch == arch)
        .map(|r| metric_values(if test { &r.test } else { &r.dev })[m])
        .collect()
}

/// Aggregates finished runs and compares every pair of listed
/// architectures.
pub fn summarize(cfg: &RunConfig, plan: CvPlan, runs: Vec<FoldResult>) -> Result<CvOutcome> {
    let mut summaries = Vec::new();
    for &arch in &cfg.cv.archs {
        let mut dev = BTreeMap::new();
        let mut test = BTreeMap::new();
        for (m, name) in ORL_METRICS.iter().enumerate() {
            dev.insert(name.to_string(), aggregate_cv(&values(&runs, arch, false, m))?);
            test.insert(name.to_string(), aggregate_cv(&values(&runs, arch, true, m))?);
        }
        summaries.push(ArchSummary { arch, dev, test });
    }
    let mut comparisons = Vec::new();
    let archs = &cfg.cv.archs;
    for i in 0..archs.len() {
        for j in i + 1..archs.len() {
            for (split, test) in [("dev", false), ("test", true)] {
                for (m, name) in ORL_METRICS.iter().enumerate() {
                    let ks = ks_test(&values(&runs, archs[i], test, m), &values(&runs, archs[j], test, m))?;
                    comparisons.push(Comparison {
                        a: archs[i],
                        b: archs[j],
                        split: split.into(),
                        metric: name.to_string(),
                        significant: ks.p_value < cfg.cv.significance_level,
                        ks,
                    });
                }
            }
        }
    }
    Ok(CvOutcome { plan, runs, summaries, comparisons })
}

impl CvOutcome {
    /// Tables of mean ± sd for dev and test, `*` marking a significant
    /// difference to the first listed architecture.
    pub fn tables(&self) -> String {
        use crate::formats::report::{cv_table, CvRow};
        let reference = self.summaries.first().map(|s| s.arch);
        let mut out = String::new();
        for (split, test) in [("dev", false), ("test", true)] {
            let rows: Vec<CvRow> = self
                .summaries
                .iter()
                .enumerate()
                .map(|(idx, s)| {
                    let map = if test { &s.test } else { &s.dev };
                    let cells = ORL_METRICS.map(|m| &map[m]);
                    let significant = ORL_METRICS.map(|m| {
                        idx > 0
                            && self.comparisons.iter().any(|c| {
                                Some(c.a) == reference && c.b == s.arch && c.split == split && c.metric == m && c.significant
                            })
                    });
                    CvRow { name: s.arch.to_string(), cells, significant }
                })
                .collect();
            out.push_str(&format!("{split}\n{}\n", cv_table(&rows)));
        }
        out
    }
}
