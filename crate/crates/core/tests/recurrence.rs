use std::cell::Cell;

use pagectx::corpus::{generate_synthetic, DocumentSequence, LabelMode, PageRecord, SynthConfig, TypeVocabulary};
use pagectx::encoder::{predict, Encoder, EncoderConfig, EncoderVariant, PageModel, ScoreVector, TokenSequence, TokenSpace};
use pagectx::recurrence::{
    augment_input, infer_all, infer_context_oblivious, infer_document, plain_input, read_traces, write_traces,
    PrevPageContext,
};
use pagectx::training::{build_token_space, train_encoder, TrainConfig};

struct Counting<'a> {
    inner: &'a Encoder,
    calls: Cell<usize>,
}

impl PageModel for Counting<'_> {
    fn token_space(&self) -> &TokenSpace {
        self.inner.token_space()
    }
    fn max_len(&self) -> usize {
        self.inner.max_len()
    }
    fn score(&self, seq: &TokenSequence) -> ScoreVector {
        self.calls.set(self.calls.get() + 1);
        self.inner.score(seq)
    }
}

fn trained(variant: EncoderVariant, recurrent: bool) -> (Encoder, pagectx::corpus::CorpusSplit) {
    let mut cfg = SynthConfig::with_self_transition(3, 0.8, 0.6, 12);
    cfg.docs_per_split = (25, 5, 8);
    let split = generate_synthetic(&cfg).unwrap();
    let space = build_token_space(&split.train, 1000, 3).unwrap();
    let ecfg = EncoderConfig { variant, d: 12, ..EncoderConfig::default() };
    let tcfg = TrainConfig { epochs: 3, peak_lr: 1e-2, ..TrainConfig::default() };
    let enc = train_encoder(&ecfg, space, &split.train, &split.validation, &split.vocabulary, recurrent, &tcfg)
        .unwrap()
        .encoder;
    (enc, split)
}

/// Independent sequential driver.
fn manual(enc: &Encoder, doc: &DocumentSequence) -> Vec<(PrevPageContext, Vec<f64>, Vec<usize>)> {
    let mut out: Vec<(PrevPageContext, Vec<f64>, Vec<usize>)> = Vec::new();
    for page in &doc.pages {
        let ctx = match out.last() {
            None => PrevPageContext::FirstPage,
            Some((_, _, prev)) => PrevPageContext::Labels(prev.clone()),
        };
        let s = enc.forward(&augment_input(&ctx, &page.text, &enc.space, enc.config.max_len));
        let labels = predict(&s, LabelMode::Multiclass);
        out.push((ctx, s.0, labels));
    }
    out
}

#[test]
fn trained_models_match_manual_driver() {
    for variant in [EncoderVariant::Linear, EncoderVariant::TinyTransformer] {
        let (enc, split) = trained(variant, true);
        for doc in &split.test {
            let trace = infer_document(&enc, doc, LabelMode::Multiclass);
            let want = manual(&enc, doc);
            assert_eq!(trace.len(), doc.len());
            assert!(trace.is_consistent());
            for (step, (ctx, scores, labels)) in trace.steps.iter().zip(want) {
                assert_eq!(step.context.as_ref(), Some(&ctx));
                assert_eq!(step.scores.0, scores);
                assert_eq!(step.labels, labels);
            }
        }
    }
}

#[test]
fn one_forward_call_per_page() {
    let (enc, split) = trained(EncoderVariant::Linear, true);
    let counting = Counting { inner: &enc, calls: Cell::new(0) };
    for doc in &split.test {
        counting.calls.set(0);
        infer_document(&counting, doc, LabelMode::Multiclass);
        assert_eq!(counting.calls.get(), doc.len());
    }
}

#[test]
fn oblivious_inference_equals_per_page_calls() {
    let (enc, split) = trained(EncoderVariant::Linear, false);
    for doc in &split.test {
        let trace = infer_context_oblivious(&enc, doc, LabelMode::Multiclass);
        for (step, page) in trace.steps.iter().zip(&doc.pages) {
            assert!(step.context.is_none());
            let s = enc.forward(&plain_input(&page.text, &enc.space, enc.config.max_len));
            assert_eq!(step.scores, s);
        }
    }
}

#[test]
fn traces_survive_jsonl_round_trip() {
    let (enc, split) = trained(EncoderVariant::Linear, true);
    let traces = infer_all(&enc, &split.test, LabelMode::Multiclass, true);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.jsonl");
    write_traces(&p, &traces, &split.vocabulary).unwrap();
    let lines = std::fs::read_to_string(&p).unwrap().lines().count();
    assert_eq!(lines, split.test.iter().map(|d| d.len()).sum::<usize>());
    assert_eq!(read_traces(&p, &split.vocabulary).unwrap(), traces);
}

#[test]
fn multilabel_contexts_carry_every_previous_label() {
    let v = TypeVocabulary::new(["a", "b", "c", "d", "e"], LabelMode::Multilabel).unwrap();
    let doc = DocumentSequence::new(
        "m",
        vec![
            PageRecord::new("m", 0, "alpha beta", [1, 4]),
            PageRecord::new("m", 1, "gamma", [0]),
            PageRecord::new("m", 2, "delta", [2, 3]),
        ],
    )
    .unwrap();
    let space = build_token_space(std::slice::from_ref(&doc), 100, 5).unwrap();
    let ecfg = EncoderConfig { d: 8, ..EncoderConfig::default() };
    let split_docs = vec![doc.clone()];
    let tcfg = TrainConfig { epochs: 40, peak_lr: 5e-2, ..TrainConfig::default() };
    let enc = train_encoder(&ecfg, space, &split_docs, &[], &v, true, &tcfg).unwrap().encoder;
    let trace = infer_document(&enc, &doc, LabelMode::Multilabel);
    assert!(trace.is_consistent());
    for w in trace.steps.windows(2) {
        let seq_ctx = w[1].context.as_ref().unwrap();
        assert_eq!(seq_ctx, &PrevPageContext::Labels(w[0].labels.clone()));
        let toks = seq_ctx.tokens(&enc.space);
        assert!(toks.windows(2).all(|p| p[0] < p[1]));
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.jsonl");
    write_traces(&p, std::slice::from_ref(&trace), &v).unwrap();
    assert_eq!(read_traces(&p, &v).unwrap(), vec![trace]);
}
