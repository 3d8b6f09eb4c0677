//! The `rolemtl` command line.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use rolemtl_core::corpus::{
    build_vocab, EmbeddingMatrix, EncodedInstance, LabelScheme, PaddedBatch, RoleInstance, Span, Task,
};
use rolemtl_core::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use rolemtl_core::metrics::{distance_stats, ks_test, stability_analysis, DistanceStats, StabilityReport};
use rolemtl_core::model::{Dropout, ModelConfig};
use rolemtl_core::mtl::{Adversary, ArchKind, ArchSpec, MtlModel, ParamGroup};
use rolemtl_core::rng::{standard_normal, stream};
use rolemtl_core::synth::{generate, synth_embeddings, Pattern, SynthSpec};
use rolemtl_core::Tensor;

use crate::config::RunConfig;
use crate::crossval::run_crossval;
use crate::error::{read_to_string, write, Error, Result};
use crate::formats::predictions::{align, PredictionRecord};
use crate::formats::report::{detail_table, orl_table};
use crate::formats::{
    load_corpus, read_predictions, record_line, trainlog_lines, write_embeddings, write_orl_json, write_predictions,
    write_srl_columns, Checkpoint,
};
use crate::pipeline::{
    evaluate_orl_model, evaluate_srl_model, plan_folds, predict, split, train_run, Corpora, Resources, RunInputs,
};

#[derive(Parser, Debug)]
#[command(name = "rolemtl", version, about = "Multi-task BiLSTM-CRF opinion role labeling with SRL as auxiliary task")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set optim.lr=0.01`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for crossval.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Print the resolved config and parameter counts, then stop.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one architecture on the configured fold.
    Train,
    /// Score a checkpoint on gold data.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Gold file; defaults to the configured fold's dev and test sets.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Label a corpus file with a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Opinion JSON (`*.json`) or SRL columns.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated k-fold cross-validation of the configured architectures.
    Crossval,
    /// Two-sample Kolmogorov-Smirnov test of two JSON arrays of scores.
    Significance { a: PathBuf, b: PathBuf },
    /// Which gold roles are found consistently across prediction dumps.
    Stability {
        /// Opinion JSON holding (at least) the gold instances of the dumps.
        #[arg(long)]
        gold: PathBuf,
        /// Where to write every verdict; only the totals are printed.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        dumps: Vec<PathBuf>,
    },
    /// Finite-difference check of backpropagation on a small model.
    Gradcheck,
    /// Write a synthetic corpus, embeddings and a matching config.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "holder-left")]
    pub pattern: String,
    #[arg(long, default_value_t = 200)]
    pub orl_sentences: usize,
    #[arg(long, default_value_t = 2000)]
    pub srl_sentences: usize,
    #[arg(long, default_value_t = 40)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub disjoint_vocab: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = RunConfig::resolve(g.config.as_deref(), &g.sets, g.seed)?;
    match &cli.command {
        Command::Train => cmd_train(&cfg, g.dry_run),
        Command::Evaluate { checkpoint, input } => cmd_evaluate(&cfg, checkpoint, input.as_deref()),
        Command::Predict { checkpoint, input, out } => cmd_predict(&cfg, checkpoint, input, out.as_deref()),
        Command::Crossval => cmd_crossval(&cfg, g.jobs, g.dry_run),
        Command::Significance { a, b } => cmd_significance(a, b),
        Command::Stability { gold, out, dumps } => cmd_stability(&cfg, gold, dumps, out.as_deref()),
        Command::Gradcheck => cmd_gradcheck(&cfg),
        Command::Synth(args) => cmd_synth(&cfg, args),
    }
}

fn print_json(v: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("plain data"));
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    write(&cfg.data.output_dir.join("config.json"), cfg.to_json())
}

#[derive(Serialize)]
struct ParamCounts {
    arch: ArchKind,
    total: usize,
    shared: usize,
    orl: usize,
    srl: usize,
    discriminator: usize,
}

fn param_counts(model: &MtlModel) -> ParamCounts {
    ParamCounts {
        arch: model.arch.kind,
        total: model.params.count(),
        shared: model.group_count(ParamGroup::Shared),
        orl: model.group_count(ParamGroup::Task(Task::Orl)),
        srl: model.group_count(ParamGroup::Task(Task::Srl)),
        discriminator: model.group_count(ParamGroup::Discriminator),
    }
}

fn dry_run(cfg: &RunConfig, kinds: &[ArchKind]) -> Result<()> {
    println!("{}", cfg.to_json());
    // the SRL label inventory sizes the SRL head, so read the corpus if given
    let srl = match &cfg.data.srl_train {
        Some(p) if kinds.iter().any(|k| *k != ArchKind::Stl) => load_corpus(p)?,
        _ => Vec::new(),
    };
    let res_scheme = LabelScheme::srl_from_instances(&srl);
    let counts: Vec<ParamCounts> = kinds
        .iter()
        .map(|&k| {
            let mut a = match k {
                ArchKind::Stl => ArchSpec::stl(LabelScheme::orl()),
                k => ArchSpec::new(k, vec![res_scheme.clone(), LabelScheme::orl()]),
            };
            a.tap_layer = cfg.arch.tap_layer;
            a.adv_scale = cfg.arch.adv_scale;
            Ok(param_counts(&MtlModel::build(a, cfg.model.clone(), cfg.seed)?))
        })
        .collect::<Result<_>>()?;
    print_json(&counts);
    Ok(())
}

fn load_resources(cfg: &RunConfig, kinds: &[ArchKind]) -> Result<(Corpora, Resources)> {
    let corpora = Corpora::load(cfg, kinds)?;
    let res = Resources::build(&corpora, cfg.data.require("embeddings")?, cfg.model.embedding_dim)?;
    Ok((corpora, res))
}

#[derive(Serialize)]
struct TrainReport<'a> {
    summary: &'a crate::pipeline::RunSummary,
    fold: usize,
    dev: rolemtl_core::metrics::SpanMetricsReport,
    test: Option<rolemtl_core::metrics::SpanMetricsReport>,
    srl_test: Option<rolemtl_core::metrics::Prf>,
}

fn cmd_train(cfg: &RunConfig, dry: bool) -> Result<()> {
    let kind = cfg.arch.kind;
    if dry {
        return dry_run(cfg, &[kind]);
    }
    let (corpora, res) = load_resources(cfg, &[kind])?;
    let plan = plan_folds(&corpora.orl, cfg)?;
    let s = split(&corpora.orl, &plan, cfg.cv.fold);
    let out = &cfg.data.output_dir;
    echo_config(cfg)?;
    let log_path = out.join("trainlog.jsonl");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut io_err = None;
    let inputs = RunInputs { resources: &res, orl_train: &s.train, orl_dev: &s.dev, srl_train: &corpora.srl_train };
    let run = train_run(cfg, kind, cfg.seed, &inputs, |r| {
        eprintln!(
            "tick {:>4}  iter {:>6}  dev {:.4}  best {:.4}{}",
            r.tick,
            r.iteration,
            r.dev_score,
            r.best_dev_score,
            if r.improved { "  *" } else { "" }
        );
        if let Err(e) = writeln!(log, "{}", record_line(r)) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(Error::io(&log_path, e));
    }
    run.checkpoint.save(&out.join("checkpoint.json"))?;
    let bs = cfg.optim.batch_size;
    let dev = evaluate_orl_model(&run.checkpoint, &s.dev, bs)?;
    let test = if s.test.is_empty() { None } else { Some(evaluate_orl_model(&run.checkpoint, &s.test, bs)?) };
    let srl_test = if kind != ArchKind::Stl && !corpora.srl_test.is_empty() {
        Some(evaluate_srl_model(&run.checkpoint, &corpora.srl_test, bs)?)
    } else {
        None
    };
    let report = TrainReport { summary: &run.summary, fold: cfg.cv.fold, dev, test, srl_test };
    write(&out.join("report.json"), serde_json::to_string_pretty(&report).expect("plain data"))?;
    let mut rows = vec![(format!("{kind} dev"), report.dev.clone())];
    if let Some(t) = &report.test {
        rows.push((format!("{kind} test"), t.clone()));
    }
    let table = orl_table(&rows);
    write(&out.join("report.txt"), &table)?;
    print!("{table}");
    if let Some(p) = report.srl_test {
        println!("srl test F1 {:.2}", 100.0 * p.f1);
    }
    Ok(())
}

fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    if ck.model.config != cfg.model && cfg != &RunConfig::default() {
        eprintln!("note: checkpoint model settings differ from the config; using the checkpoint's");
    }
    Ok(ck)
}

fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, input: Option<&Path>) -> Result<()> {
    let ck = load_checkpoint(cfg, checkpoint)?;
    let bs = cfg.optim.batch_size;
    match input {
        Some(p) => {
            let gold = load_corpus(p)?;
            match gold.first().map(RoleInstance::task) {
                Some(Task::Srl) => {
                    let prf = evaluate_srl_model(&ck, &gold, bs)?;
                    print_json(&prf);
                }
                _ => {
                    let r = evaluate_orl_model(&ck, &gold, bs)?;
                    print!("{}", detail_table(&r));
                    print_json(&r);
                }
            }
        }
        None => {
            let corpora = Corpora::load(cfg, &[ArchKind::Stl])?;
            let plan = plan_folds(&corpora.orl, cfg)?;
            let s = split(&corpora.orl, &plan, cfg.cv.fold);
            let dev = evaluate_orl_model(&ck, &s.dev, bs)?;
            let test = evaluate_orl_model(&ck, &s.test, bs)?;
            let name = ck.model.arch.kind.to_string();
            print!("{}", orl_table(&[(format!("{name} dev"), dev), (format!("{name} test"), test)]));
        }
    }
    Ok(())
}

fn cmd_predict(cfg: &RunConfig, checkpoint: &Path, input: &Path, out: Option<&Path>) -> Result<()> {
    let ck = load_checkpoint(cfg, checkpoint)?;
    let instances = load_corpus(input)?;
    let task = instances.first().map(RoleInstance::task).unwrap_or(Task::Orl);
    let pred = predict(&ck.model, &ck.embeddings, &ck.vocab, task, &instances, cfg.optim.batch_size)?;
    let records: Vec<PredictionRecord> = instances.iter().zip(&pred).map(|(i, p)| PredictionRecord::new(i, p)).collect();
    let text = write_predictions(&records);
    match out {
        Some(p) => write(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_crossval(cfg: &RunConfig, jobs: usize, dry: bool) -> Result<()> {
    if dry {
        return dry_run(cfg, &cfg.cv.archs);
    }
    let (corpora, res) = load_resources(cfg, &cfg.cv.archs)?;
    let plan = plan_folds(&corpora.orl, cfg)?;
    let out = &cfg.data.output_dir;
    echo_config(cfg)?;
    let outcome = run_crossval(cfg, &res, &corpora.orl, &corpora.srl_train, &plan, jobs, |job, r| {
        eprintln!("{}: best dev {:.4} at iteration {}", job.name(), r.summary.best_dev_score, r.summary.best_iteration);
    })?;
    let dev_gold = split(&corpora.orl, &plan, 0).dev;
    write(&out.join("dev_gold.json"), write_orl_json(&dev_gold))?;
    for r in &outcome.runs {
        let dir = out.join("runs").join(format!("{}-s{}-f{}", r.summary.arch, r.summary.seed, r.fold));
        write(&dir.join("trainlog.jsonl"), trainlog_lines(&r.log))?;
        write(&dir.join("dev_predictions.json"), write_predictions(&r.dev_predictions))?;
    }
    write(&out.join("crossval.json"), serde_json::to_string_pretty(&outcome).expect("plain data"))?;
    let tables = outcome.tables();
    write(&out.join("crossval.txt"), &tables)?;
    print!("{tables}");
    Ok(())
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path.display().to_string(), e.line(), e.to_string()))
}

fn cmd_significance(a: &Path, b: &Path) -> Result<()> {
    let r = ks_test(&read_scores(a)?, &read_scores(b)?)?;
    print_json(&r);
    Ok(())
}

#[derive(Serialize)]
struct StabilityOutput {
    report: StabilityReport,
    distances: BTreeMap<String, DistanceStats>,
}

fn cmd_stability(cfg: &RunConfig, gold_path: &Path, dumps: &[PathBuf], out: Option<&Path>) -> Result<()> {
    if dumps.len() != cfg.stability.trials {
        return Err(Error::Runtime(format!(
            "{} prediction dumps given but stability.trials is {}",
            dumps.len(),
            cfg.stability.trials
        )));
    }
    let all = load_corpus(gold_path)?;
    let mut trials_raw = Vec::new();
    for d in dumps {
        trials_raw.push(read_predictions(&read_to_string(d)?, &d.display().to_string())?);
    }
    // only the documents the dumps cover are gold for this analysis
    let docs: std::collections::BTreeSet<&str> = trials_raw[0].iter().map(|r| r.doc_id.as_str()).collect();
    let gold: Vec<RoleInstance> = all.into_iter().filter(|i| docs.contains(i.sentence().doc_id.as_str())).collect();
    let trials = trials_raw
        .iter()
        .zip(dumps)
        .map(|(t, d)| align(t, &gold, &d.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    let report = stability_analysis(&trials, &gold, &cfg.stability)?;
    let distances = [rolemtl_core::corpus::HOLDER, rolemtl_core::corpus::TARGET]
        .iter()
        .map(|l| (l.to_string(), distance_stats(&report.verdicts, l)))
        .collect();
    print_json(&serde_json::json!({
        "easy_correct": report.easy_correct,
        "hard_incorrect": report.hard_incorrect,
        "unstable": report.unstable,
        "distances": distances,
    }));
    if let Some(p) = out {
        write(p, serde_json::to_string_pretty(&StabilityOutput { report, distances }).expect("plain data"))?;
    }
    Ok(())
}

fn random_instance(len: usize, vocab: usize, tags: usize, seed: u64) -> EncodedInstance {
    let mut r = stream(seed, "gradcheck-data");
    EncodedInstance {
        token_ids: (0..len).map(|_| r.gen_range(2..vocab)).collect(),
        trigger: Span::new(len / 2, len / 2),
        tag_ids: (0..len).map(|_| r.gen_range(0..tags)).collect(),
    }
}

/// Finite differences on a fresh model of the configured reduced size.
/// The adversarial term is checked without the reversal, which by design
/// does not match the forward function.
pub fn gradcheck(cfg: &RunConfig) -> Result<GradCheckReport> {
    let gc = &cfg.gradcheck;
    if gc.length < 1 || gc.vocab_size < 3 {
        return Err(Error::Config("gradcheck.length must be positive and gradcheck.vocab_size at least 3".into()));
    }
    let orl = LabelScheme::from_labels(Task::Orl, ["H", "T"]);
    let srl = LabelScheme::from_labels(Task::Srl, ["A0", "A1"]);
    let mut arch = match gc.arch {
        ArchKind::Stl => ArchSpec::stl(orl),
        k => ArchSpec::new(k, vec![srl, orl]),
    };
    arch.tap_layer = cfg.arch.tap_layer;
    arch.adv_scale = cfg.arch.adv_scale;
    let config = ModelConfig { embedding_dim: gc.embedding_dim, hidden: gc.hidden, ..cfg.model.clone() };
    let model = MtlModel::build(arch, config.clone(), cfg.seed)?;
    let mut r = stream(cfg.seed, "gradcheck-embeddings");
    let rows = (0..gc.vocab_size * gc.embedding_dim).map(|_| standard_normal(&mut r)).collect();
    let emb = EmbeddingMatrix::from_tensor(Tensor::new(vec![gc.vocab_size, gc.embedding_dim], rows)?)?;
    let batches: Vec<PaddedBatch> = model
        .arch
        .tasks
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let short = gc.length.div_ceil(2);
            let src = vec![
                random_instance(gc.length, gc.vocab_size, s.len(), cfg.seed + 2 * k as u64),
                random_instance(short, gc.vocab_size, s.len(), cfg.seed + 2 * k as u64 + 1),
            ];
            PaddedBatch::new(s.task, &src, &[0, 1])
        })
        .collect();
    let opts = GradCheckOptions { epsilon: gc.epsilon, seed: cfg.seed, ..GradCheckOptions::default() };
    let report = grad_check(
        |g, p| {
            let m = MtlModel { params: p.clone(), ..model.clone() };
            let mut d = Dropout::new(config.dropout.clone(), cfg.seed);
            let mut total = None;
            for b in &batches {
                let fwd = m.forward_task(g, &emb, b, Some(&mut d), Adversary::Identity)?;
                let mut l = m.task_loss(g, &fwd, b)?;
                if fwd.discriminator_logits.is_some() {
                    let a = m.adversarial_loss(g, &fwd, b.task)?;
                    l = g.add(l, a)?;
                }
                total = Some(match total {
                    None => l,
                    Some(t) => g.add(t, l)?,
                });
            }
            Ok(total.expect("at least one task"))
        },
        &model.params,
        &opts,
    )?;
    Ok(report)
}

fn cmd_gradcheck(cfg: &RunConfig) -> Result<()> {
    let report = gradcheck(cfg)?;
    print_json(&report);
    if report.max_relative_error < cfg.gradcheck.tolerance {
        Ok(())
    } else {
        Err(Error::Runtime(format!(
            "max relative error {:e} exceeds {:e}",
            report.max_relative_error, cfg.gradcheck.tolerance
        )))
    }
}

fn cmd_synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let pattern: Pattern = serde_json::from_value(serde_json::Value::String(a.pattern.clone()))
        .map_err(|_| Error::Config(format!("unknown pattern {:?}", a.pattern)))?;
    if pattern == Pattern::SrlA0a1 {
        return Err(Error::Config("--pattern names the opinion pattern; SRL data is always srl-a0a1".into()));
    }
    let orl_spec = SynthSpec {
        vocab_size: a.vocab_size,
        noise_rate: a.noise,
        disjoint_vocab: a.disjoint_vocab,
        ..SynthSpec::new(pattern, a.orl_sentences, cfg.seed)
    };
    let srl_spec = SynthSpec { pattern: Pattern::SrlA0a1, n_sentences: a.srl_sentences, seed: cfg.seed + 1, ..orl_spec.clone() };
    let wrap = |e: rolemtl_core::Error| Error::Config(e.to_string());
    orl_spec.validate().map_err(wrap)?;
    let orl = generate(&orl_spec).map_err(wrap)?.instances;
    let srl = if a.srl_sentences > 0 { generate(&srl_spec).map_err(wrap)?.instances } else { Vec::new() };
    let mut vectors = BTreeMap::new();
    let prefixes: Vec<String> = if a.disjoint_vocab { vec!["orl:".into(), "srl:".into()] } else { vec![String::new()] };
    for p in &prefixes {
        vectors.extend(synth_embeddings(a.vocab_size, a.dim, p, cfg.seed));
    }
    // sanity: every generated word has a vector
    let vocab = build_vocab(orl.iter().chain(&srl));
    if let Some(w) = vocab.tokens().iter().skip(2).find(|w| !vectors.contains_key(*w)) {
        return Err(Error::Runtime(format!("no synthetic vector for {w:?}")));
    }
    let out = &a.out;
    write(&out.join("orl.json"), write_orl_json(&orl))?;
    write(&out.join("srl.txt"), write_srl_columns(&srl)?)?;
    write(&out.join("embeddings.txt"), write_embeddings(&vectors))?;
    write(
        &out.join("synth.json"),
        serde_json::to_string_pretty(&serde_json::json!({"orl": orl_spec, "srl": srl_spec})).expect("plain data"),
    )?;
    let docs = orl.iter().map(|i| i.sentence().doc_id.as_str()).collect::<std::collections::BTreeSet<_>>().len();
    let mut run = cfg.clone();
    run.model.embedding_dim = a.dim;
    run.cv.dev_count = (docs / 5).max(1);
    run.data.orl_json = Some("orl.json".into());
    run.data.srl_train = if srl.is_empty() { None } else { Some("srl.txt".into()) };
    run.data.embeddings = Some("embeddings.txt".into());
    run.data.output_dir = PathBuf::from("runs");
    write(&out.join("config.json"), run.to_json())?;
    println!(
        "wrote {} opinion and {} SRL instances ({} documents) to {}",
        orl.len(),
        srl.len(),
        docs,
        out.display()
    );
    std::io::stdout().flush().ok();
    Ok(())
}
