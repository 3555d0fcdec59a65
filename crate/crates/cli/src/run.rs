use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use pagectx::corpus::{
    class_page_counts, generate_synthetic, load_corpus, load_manifest, run_length_stats, transition_self_prob,
    CorpusSplit, DocumentSequence, LabelMode, SplitName, SynthConfig,
};
use pagectx::encoder::{CheckpointMeta, Encoder};
use pagectx::eval::{compare_traces, render_comparison, render_scores_table, score, ScoreRow};
use pagectx::features::FeatureModel;
use pagectx::recurrence::{infer_all, read_traces, write_traces, PredictionTrace};
use pagectx::seqbaselines::{
    bilstm_train, crf_decode_all, crf_fit, read_saved_predictions, write_saved_predictions, ScoreSequence,
};
use pagectx::training::{build_token_space, train_encoder};
use pagectx::TOOLKIT_VERSION;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_run_config, read_config, sha256_file, sha256_hex, RunConfig, UsageError};
use crate::{BilstmArgs, CompareArgs, CrfArgs, EvalArgs, InferArgs, RunArgs, StatsArgs, SynthArgs, TrainArgs};

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Corpus {
    split: CorpusSplit,
    sha256: String,
}

/// Loads a manifest and its splits. The hash covers the manifest and all three
/// split files, so it identifies the data independent of where it lives.
fn open_corpus(manifest: &Path) -> Result<Corpus> {
    let m = load_manifest(manifest)?;
    let split = load_corpus(manifest, &m.vocabulary()?)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut digest = sha256_file(manifest)?;
    for p in [&m.train, &m.validation, &m.test] {
        digest.push_str(&sha256_file(&base.join(p))?);
    }
    Ok(Corpus {
        split,
        sha256: sha256_hex(digest.as_bytes()),
    })
}

/// Identity of one run: the resolved config plus the hashes of everything it read.
#[derive(Serialize)]
struct Provenance {
    toolkit_version: &'static str,
    command: String,
    run_id: String,
    config_hash: String,
    seed: u64,
    config: RunConfig,
    inputs: BTreeMap<String, String>,
}

impl Provenance {
    fn new(command: &str, run_id: Option<&str>, config: RunConfig, inputs: BTreeMap<String, String>) -> Result<Self> {
        let hashed = json!({ "command": command, "config": config, "inputs": inputs });
        let config_hash = sha256_hex(serde_json::to_string(&hashed)?.as_bytes());
        let run_id = match run_id {
            Some(id) => id.to_string(),
            None => format!("{command}-{}", &config_hash[..12]),
        };
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
            return Err(usage(format!("invalid run id {run_id:?}")));
        }
        Ok(Provenance {
            toolkit_version: TOOLKIT_VERSION,
            command: command.to_string(),
            run_id,
            config_hash,
            seed: config.train.seed,
            config,
            inputs,
        })
    }

    fn stamp(&self) -> Value {
        json!({
            "toolkit_version": self.toolkit_version,
            "config_hash": self.config_hash,
            "seed": self.seed,
        })
    }

    fn create_dir(&self, parent: &Path) -> Result<PathBuf> {
        let dir = parent.join(&self.run_id);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("provenance.json"), self)?;
        Ok(dir)
    }
}

/// Wall clock goes to its own file so the JSON artifacts stay reproducible.
fn write_timing(dir: &Path, started: Instant) -> Result<()> {
    write_json(&dir.join("timing.json"), &json!({ "wall_clock_secs": started.elapsed().as_secs_f64() }))
}

fn resolve_config(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = load_run_config(run.config.as_ref())?;
    if let Some(seed) = run.seed {
        cfg.train.seed = seed;
        cfg.encoder.init_seed = seed;
        cfg.bilstm.init_seed = seed;
        cfg.features.seed = seed;
    }
    if let Some(e) = run.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = run.lr {
        cfg.train.peak_lr = lr;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn require_multiclass(split: &CorpusSplit, what: &str) -> Result<()> {
    if split.vocabulary.label_mode() != LabelMode::Multiclass {
        return Err(usage(format!("{what} needs a multiclass corpus")));
    }
    Ok(())
}

fn score_sequences(traces: &[PredictionTrace]) -> Vec<(String, ScoreSequence)> {
    traces
        .iter()
        .map(|t| {
            let scores: Vec<_> = t.steps.iter().map(|s| s.scores.clone()).collect();
            (t.doc_id.clone(), ScoreSequence::from_scores(&scores))
        })
        .collect()
}

fn check_alignment(traces: &[PredictionTrace], docs: &[DocumentSequence]) -> Result<()> {
    if traces.len() != docs.len() {
        return Err(usage(format!("{} traces for {} documents", traces.len(), docs.len())));
    }
    for (t, d) in traces.iter().zip(docs) {
        if t.doc_id != d.doc_id || t.len() != d.len() {
            return Err(usage(format!(
                "trace {:?} ({} pages) does not match document {:?} ({} pages)",
                t.doc_id,
                t.len(),
                d.doc_id,
                d.len()
            )));
        }
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => read_config::<SynthConfig>(p)?,
        None => SynthConfig::with_self_transition(args.classes, args.self_prob, args.ambiguity, 0),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let split = generate_synthetic(&cfg)?;
    let config_hash = sha256_hex(serde_json::to_string(&cfg)?.as_bytes());
    let provenance = json!({
        "toolkit_version": TOOLKIT_VERSION,
        "config_hash": config_hash,
        "seed": cfg.seed,
        "generator": cfg,
    });
    let manifest = pagectx::corpus::write_corpus(&split, &args.out, Some(provenance))?;
    println!(
        "wrote {} ({} / {} / {} documents)",
        manifest.display(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = resolve_config(&args.run)?;
    if let Some(v) = args.variant {
        cfg.encoder.variant = v;
    }
    let recurrent = !args.oblivious;
    let corpus = open_corpus(&args.run.corpus)?;
    let split = &corpus.split;
    let v = &split.vocabulary;

    let command = if recurrent { "train-recurrent" } else { "train-oblivious" };
    let inputs = BTreeMap::from([("corpus".to_string(), corpus.sha256.clone())]);
    let prov = Provenance::new(command, args.run.run_id.as_deref(), cfg.clone(), inputs)?;

    let space = build_token_space(&split.train, cfg.vocab_cap, v.len())?;
    let out = train_encoder(&cfg.encoder, space, &split.train, &split.validation, v, recurrent, &cfg.train)?;

    let dir = prov.create_dir(&args.run.out)?;
    let meta = CheckpointMeta {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        label_mode: v.label_mode(),
        class_names: v.class_names().to_vec(),
        recurrent,
        train_seed: cfg.train.seed,
    };
    out.encoder.save(&dir.join("checkpoint.json"), &meta)?;
    write_json(&dir.join("report.json"), &json!({ "provenance": prov.stamp(), "report": out.report }))?;
    write_timing(&dir, started)?;

    let last = out.report.epochs.last();
    println!("run {} ({})", prov.run_id, dir.display());
    println!(
        "{} steps, final epoch loss {:.4}, validation macro-F1 {}",
        out.report.total_steps,
        last.map_or(f64::NAN, |e| e.mean_loss),
        last.and_then(|e| e.validation_macro_f1)
            .map_or("n/a".to_string(), |f| format!("{:.2}", 100.0 * f))
    );
    Ok(())
}

fn load_checkpoint(path: &Path, split: &CorpusSplit) -> Result<(Encoder, CheckpointMeta)> {
    let (enc, meta) = Encoder::load(path).with_context(|| format!("loading {}", path.display()))?;
    if meta.class_names != split.vocabulary.class_names() || meta.label_mode != split.vocabulary.label_mode() {
        return Err(usage(format!("{} was trained on a different class list", path.display())));
    }
    Ok((enc, meta))
}

pub fn infer(args: InferArgs) -> Result<()> {
    let corpus = open_corpus(&args.corpus)?;
    let (enc, meta) = load_checkpoint(&args.checkpoint, &corpus.split)?;
    let docs = corpus.split.get(args.split);
    let traces = infer_all(&enc, docs, meta.label_mode, meta.recurrent);
    write_traces(&args.out, &traces, &corpus.split.vocabulary)?;
    if let Some(saved) = &args.saved {
        write_saved_predictions(saved, &sha256_file(&args.checkpoint)?, &traces)?;
    }
    println!(
        "{} {} pages of {} documents ({}) -> {}",
        if meta.recurrent { "recurrent" } else { "context-oblivious" },
        traces.iter().map(|t| t.len()).sum::<usize>(),
        traces.len(),
        args.split.as_str(),
        args.out.display()
    );
    Ok(())
}

pub fn crf(args: CrfArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = resolve_config(&args.run)?;
    if let Some(s) = args.fit_split {
        cfg.crf_fit_split = s;
    }
    if let Some(l2) = args.l2 {
        cfg.crf.l2 = l2;
    }
    let corpus = open_corpus(&args.run.corpus)?;
    let split = &corpus.split;
    require_multiclass(split, "the CRF")?;
    let (enc, meta) = load_checkpoint(&args.checkpoint, split)?;
    if meta.recurrent {
        return Err(usage("the CRF needs a context-oblivious checkpoint"));
    }
    let checkpoint_id = sha256_file(&args.checkpoint)?;
    let inputs = BTreeMap::from([
        ("corpus".to_string(), corpus.sha256.clone()),
        ("checkpoint".to_string(), checkpoint_id.clone()),
    ]);
    let prov = Provenance::new("crf", args.run.run_id.as_deref(), cfg.clone(), inputs)?;
    let dir = prov.create_dir(&args.run.out)?;

    // Fit from the saved predictions as written, so the file is the only interface.
    let fit_docs = split.get(cfg.crf_fit_split);
    let saved_fit = dir.join(format!("saved-{}.jsonl", cfg.crf_fit_split.as_str()));
    write_saved_predictions(&saved_fit, &checkpoint_id, &infer_all(&enc, fit_docs, LabelMode::Multiclass, false))?;
    let (_, saved) = read_saved_predictions(&saved_fit)?;
    let data: Vec<(ScoreSequence, Vec<usize>)> =
        saved.iter().zip(fit_docs).map(|(s, d)| (s.score_sequence(), d.labels())).collect();
    let fit = crf_fit(split.vocabulary.len(), &data, &cfg.crf)?;
    if !fit.converged {
        warn!("CRF stopped after {} iterations without converging", fit.iterations);
    }
    fit.model.save(&dir.join("crf.json"))?;

    let test_traces = infer_all(&enc, &split.test, LabelMode::Multiclass, false);
    if cfg.crf_fit_split != SplitName::Test {
        write_saved_predictions(&dir.join("saved-test.jsonl"), &checkpoint_id, &test_traces)?;
    }
    let crf_traces = crf_decode_all(&fit.model, &score_sequences(&test_traces));
    write_traces(&dir.join("crf.traces.jsonl"), &crf_traces, &split.vocabulary)?;
    write_json(
        &dir.join("fit.json"),
        &json!({
            "provenance": prov.stamp(),
            "fit_split": cfg.crf_fit_split,
            "objective": fit.objective,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "emission_scale": fit.model.emission_scale,
        }),
    )?;
    write_timing(&dir, started)?;
    info!("CRF objective {:.6} after {} iterations", fit.objective, fit.iterations);
    println!("run {} ({})", prov.run_id, dir.display());
    println!(
        "fitted on {} ({} documents), converged: {}; test traces in crf.traces.jsonl",
        cfg.crf_fit_split.as_str(),
        fit_docs.len(),
        fit.converged
    );
    Ok(())
}

pub fn bilstm(args: BilstmArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = resolve_config(&args.run)?;
    if let Some(h) = args.hidden {
        cfg.bilstm.hidden = h;
    }
    let corpus = open_corpus(&args.run.corpus)?;
    let split = &corpus.split;
    require_multiclass(split, "the BiLSTM")?;
    let inputs = BTreeMap::from([("corpus".to_string(), corpus.sha256.clone())]);
    let prov = Provenance::new("bilstm", args.run.run_id.as_deref(), cfg.clone(), inputs)?;

    let fs = &cfg.features;
    let features = FeatureModel::fit(&split.train, fs.vocab_cap, fs.svd_rank, fs.seed)?;
    let seqs: Vec<_> = split.train.iter().map(|d| (features.document_vectors(d), d.labels())).collect();
    let out = bilstm_train(&seqs, split.vocabulary.len(), &cfg.bilstm, &cfg.train)?;

    let dir = prov.create_dir(&args.run.out)?;
    features.save(&dir.join("features.json"))?;
    out.model.save(&dir.join("bilstm.json"))?;
    let test: Vec<_> = split.test.iter().map(|d| (d.doc_id.clone(), features.document_vectors(d))).collect();
    write_traces(&dir.join("bilstm.traces.jsonl"), &out.model.predict_all(&test), &split.vocabulary)?;
    write_json(
        &dir.join("report.json"),
        &json!({
            "provenance": prov.stamp(),
            "feature_dim": features.dim(),
            "step_losses": out.log.losses,
            "learning_rates": out.log.learning_rates,
            "train_accuracy": out.train_accuracy,
        }),
    )?;
    write_timing(&dir, started)?;
    println!("run {} ({})", prov.run_id, dir.display());
    println!(
        "{} steps over {} features, train accuracy {:.2}; test traces in bilstm.traces.jsonl",
        out.log.losses.len(),
        features.dim(),
        100.0 * out.train_accuracy
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let corpus = open_corpus(&args.corpus)?;
    let v = &corpus.split.vocabulary;
    let docs = corpus.split.get(args.split);
    let traces = read_traces(&args.traces, v)?;
    check_alignment(&traces, docs)?;
    let preds: Vec<Vec<usize>> = traces.iter().flat_map(|t| t.decided()).collect();
    let golds: Vec<Vec<usize>> = docs.iter().flat_map(|d| d.label_sets()).collect();
    let scores = score(&preds, &golds, v)?;
    print!("{}", render_scores_table(&[ScoreRow { model: &args.name, scores: &scores }]));
    if let Some(out) = &args.out {
        write_json(
            out,
            &json!({
                "toolkit_version": TOOLKIT_VERSION,
                "corpus_sha256": corpus.sha256,
                "traces_sha256": sha256_file(&args.traces)?,
                "split": args.split,
                "model": args.name,
                "scores": scores,
            }),
        )?;
    }
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let corpus = open_corpus(&args.corpus)?;
    let v = &corpus.split.vocabulary;
    let docs = corpus.split.get(args.split);
    let a = read_traces(&args.a, v)?;
    let b = read_traces(&args.b, v)?;
    check_alignment(&a, docs)?;
    check_alignment(&b, docs)?;
    let cmp = compare_traces(&a, &b, docs, v)?;
    print!("{}", render_comparison(&args.name_a, &args.name_b, &cmp));
    if let Some(out) = &args.out {
        write_json(
            out,
            &json!({
                "toolkit_version": TOOLKIT_VERSION,
                "corpus_sha256": corpus.sha256,
                "a": { "name": args.name_a, "traces_sha256": sha256_file(&args.a)? },
                "b": { "name": args.name_b, "traces_sha256": sha256_file(&args.b)? },
                "split": args.split,
                "comparison": cmp,
            }),
        )?;
    }
    Ok(())
}

pub fn stats(args: StatsArgs) -> Result<()> {
    let corpus = open_corpus(&args.corpus)?;
    let split = &corpus.split;
    let v = &split.vocabulary;
    let counts = class_page_counts(split);
    println!("{:<20} {:>8} {:>10} {:>8}", "class", "train", "validation", "test");
    for (c, name) in counts.classes.iter().enumerate() {
        println!("{name:<20} {:>8} {:>10} {:>8}", counts.train[c], counts.validation[c], counts.test[c]);
    }
    let (runs, transitions) = if v.label_mode() == LabelMode::Multiclass {
        (Some(run_length_stats(&split.train, v)?), Some(transition_self_prob(&split.train, v)?))
    } else {
        (None, None)
    };
    if let (Some(runs), Some(tr)) = (&runs, &transitions) {
        println!();
        println!("{:<20} {:>8} {:>8} {:>8} {:>10}", "class (train)", "runs", "median", "max", "P(stay)");
        for (c, r) in runs.iter().enumerate() {
            let median = r.median_run.map_or("-".to_string(), |m| format!("{m:.1}"));
            let stay = tr.per_class[c].map_or("-".to_string(), |p| format!("{p:.3}"));
            println!("{:<20} {:>8} {median:>8} {:>8} {stay:>10}", r.class, r.num_runs, r.max_run);
        }
        if let Some(m) = tr.macro_avg {
            println!("macro-average self-transition {m:.3}");
        }
    }
    if let Some(out) = &args.out {
        write_json(
            out,
            &json!({
                "toolkit_version": TOOLKIT_VERSION,
                "corpus_sha256": corpus.sha256,
                "class_counts": counts,
                "train_runs": runs,
                "train_self_transition": transitions,
            }),
        )?;
    }
    Ok(())
}
