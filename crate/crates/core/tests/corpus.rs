use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pagectx::corpus::{
    class_page_counts, generate_synthetic, load_corpus, run_length_stats, transition_self_prob, write_corpus,
    CorpusSplit, DocumentSequence, LabelMode, PageRecord, SynthConfig, TypeVocabulary,
};
use pagectx::Error;

fn vocab(names: &[&str]) -> TypeVocabulary {
    TypeVocabulary::new(names.iter().copied(), LabelMode::Multiclass).unwrap()
}

fn doc(id: &str, labels: &[usize]) -> DocumentSequence {
    DocumentSequence::from_labeled(id, labels.iter().enumerate().map(|(i, &c)| (format!("page {i}"), c))).unwrap()
}

#[test]
fn loads_three_page_document() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab(&["A", "B"]);
    let line = |i: usize, l: &str| format!("{{\"doc_id\":\"d1\",\"labels\":[\"{l}\"],\"page_index\":{i},\"text\":\"p{i}\"}}\n");
    std::fs::write(dir.path().join("train.jsonl"), line(0, "A") + &line(1, "A") + &line(2, "B")).unwrap();
    std::fs::write(dir.path().join("validation.jsonl"), "").unwrap();
    std::fs::write(dir.path().join("test.jsonl"), "").unwrap();
    std::fs::write(
        dir.path().join("manifest.json"),
        r#"{"classes":["A","B"],"label_mode":"multiclass","test":"test.jsonl","train":"train.jsonl","validation":"validation.jsonl"}"#,
    )
    .unwrap();
    let split = load_corpus(&dir.path().join("manifest.json"), &v).unwrap();
    assert_eq!(split.train.len(), 1);
    assert_eq!(split.train[0].len(), 3);
    assert_eq!(split.train[0].labels(), vec![0, 0, 1]);
}

#[test]
fn unknown_label_reports_label_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let v = vocab(&["A", "B"]);
    let body = "{\"doc_id\":\"d\",\"labels\":[\"A\"],\"page_index\":0,\"text\":\"x\"}\n\
                {\"doc_id\":\"d\",\"labels\":[\"Z\"],\"page_index\":1,\"text\":\"y\"}\n";
    let p = dir.path().join("pages.jsonl");
    std::fs::write(&p, body).unwrap();
    match pagectx::corpus::read_documents(&p, &v) {
        Err(Error::UnknownLabel { line, label, .. }) => {
            assert_eq!(line, 2);
            assert_eq!(label, "Z");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn write_then_load_is_identity_and_stable() {
    let mut cfg = SynthConfig::with_self_transition(3, 0.7, 0.4, 17);
    cfg.docs_per_split = (12, 4, 5);
    let split = generate_synthetic(&cfg).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let manifest = write_corpus(&split, a.path(), None).unwrap();
    let loaded = load_corpus(&manifest, &split.vocabulary).unwrap();
    assert_eq!(loaded, split);
    write_corpus(&loaded, b.path(), None).unwrap();
    for f in ["train.jsonl", "validation.jsonl", "test.jsonl", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn multilabel_round_trip() {
    let v = TypeVocabulary::new(["A", "B", "C"], LabelMode::Multilabel).unwrap();
    let d = DocumentSequence::new(
        "m",
        vec![PageRecord::new("m", 0, "x", [2, 0]), PageRecord::new("m", 1, "y", [1])],
    )
    .unwrap();
    let split = CorpusSplit::new(vec![d], vec![], vec![], v.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(&split, dir.path(), None).unwrap();
    assert_eq!(load_corpus(&manifest, &v).unwrap(), split);
}

#[test]
fn zero_ambiguity_class_pools_are_disjoint() {
    let mut cfg = SynthConfig::with_self_transition(4, 0.6, 0.0, 2);
    cfg.docs_per_split = (40, 1, 1);
    let split = generate_synthetic(&cfg).unwrap();
    // oracle: a token never appears on pages of two different classes
    let mut owner: HashMap<&str, usize> = HashMap::new();
    for page in split.train.iter().flat_map(|d| &d.pages) {
        for tok in page.text.split_whitespace() {
            let prev = *owner.entry(tok).or_insert(page.label());
            assert_eq!(prev, page.label(), "token {tok} shared between classes");
        }
    }
}

#[test]
fn generated_self_transition_matches_configuration() {
    let mut cfg = SynthConfig::with_self_transition(3, 0.85, 0.3, 8);
    cfg.docs_per_split = (1500, 1, 1);
    let split = generate_synthetic(&cfg).unwrap();
    let st = transition_self_prob(&split.train, &split.vocabulary).unwrap();
    assert!(st.with_successor.iter().sum::<usize>() >= 10_000);
    for p in &st.per_class {
        assert!((p.unwrap() - 0.85).abs() <= 0.02, "{p:?}");
    }
}

#[test]
fn self_transition_of_are_fixture() {
    // 10000 ARE pages with a successor, 8914 of them followed by ARE
    let v = vocab(&["ARE", "Other"]);
    let mut labels = Vec::new();
    for k in 0..10_000 {
        labels.push(0);
        if k >= 8914 {
            labels.push(1);
        }
    }
    labels.push(1);
    let st = transition_self_prob(&[doc("d", &labels)], &v).unwrap();
    assert_eq!(st.with_successor[0], 10_000);
    assert!((st.per_class[0].unwrap() - 0.8914).abs() < 1e-12);
}

#[test]
fn class_without_successor_is_undefined_and_excluded() {
    let v = vocab(&["A", "B"]);
    let st = transition_self_prob(&[doc("d", &[0, 0, 1])], &v).unwrap();
    assert_eq!(st.per_class[1], None);
    assert_eq!(st.macro_avg, Some(0.5));
}

#[test]
fn caption_counts_fixture() {
    let v = TypeVocabulary::new(["Caption", "Argument"], LabelMode::Multilabel).unwrap();
    let make = |prefix: &str, n: usize| -> Vec<DocumentSequence> {
        (0..n)
            .map(|i| {
                let id = format!("{prefix}{i}");
                let pages = vec![
                    PageRecord::new(&id, 0, "caption", [0]),
                    PageRecord::new(&id, 1, "argument", if i % 2 == 0 { vec![1] } else { vec![0, 1] }),
                ];
                DocumentSequence::new(id, pages).unwrap()
            })
            .collect()
    };
    // n docs give n + n/2 Caption pages
    let split = CorpusSplit::new(make("tr", 515), make("va", 60), make("te", 69), v).unwrap();
    let c = class_page_counts(&split);
    assert_eq!((c.train[0], c.validation[0], c.test[0]), (772, 90, 103));
    assert_eq!(c.train[1], 515);
}

#[test]
fn empty_split_counts_zero() {
    let split = CorpusSplit::new(vec![], vec![], vec![], vocab(&["A", "B", "C"])).unwrap();
    let c = class_page_counts(&split);
    assert!(c.train.iter().chain(&c.validation).chain(&c.test).all(|&x| x == 0));
}

#[test]
fn acordao_run_fixture() {
    // one run of 5 and 268 single pages: total 273, max 5, median 1
    let v = vocab(&["Acórdão", "Outro"]);
    let mut docs = vec![doc("long", &[1, 0, 0, 0, 0, 0, 1])];
    for i in 0..134 {
        docs.push(doc(&format!("d{i}"), &[0, 1, 0]));
    }
    let rs = run_length_stats(&docs, &v).unwrap();
    assert_eq!(rs[0].total_pages, 273);
    assert_eq!(rs[0].max_run, 5);
    assert_eq!(rs[0].median_run, Some(1.0));
}

/// Independent scanner: compare each page to its predecessor.
fn scan_runs(docs: &[Vec<usize>], n: usize) -> Vec<Vec<usize>> {
    let mut runs = vec![Vec::new(); n];
    for d in docs {
        let mut len = 0;
        for i in 0..d.len() {
            len += 1;
            if i + 1 == d.len() || d[i + 1] != d[i] {
                runs[d[i]].push(len);
                len = 0;
            }
        }
    }
    runs
}

fn median(mut xs: Vec<usize>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_unstable();
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] as f64 } else { (xs[m - 1] + xs[m]) as f64 / 2.0 })
}

#[test]
fn run_stats_match_scanner_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let v = vocab(&["A", "B", "C"]);
    for _ in 0..50 {
        let labels: Vec<Vec<usize>> = (0..rng.gen_range(1..8))
            .map(|_| (0..rng.gen_range(1..15)).map(|_| rng.gen_range(0..3)).collect())
            .collect();
        let docs: Vec<DocumentSequence> = labels.iter().enumerate().map(|(i, l)| doc(&format!("d{i}"), l)).collect();
        let rs = run_length_stats(&docs, &v).unwrap();
        for (c, runs) in scan_runs(&labels, 3).into_iter().enumerate() {
            assert_eq!(rs[c].total_pages, runs.iter().sum::<usize>());
            assert_eq!(rs[c].max_run, runs.iter().copied().max().unwrap_or(0));
            assert_eq!(rs[c].num_runs, runs.len());
            assert_eq!(rs[c].median_run, median(runs));
            if let Some(m) = rs[c].median_run {
                assert!(m <= rs[c].max_run as f64 && rs[c].total_pages >= rs[c].max_run);
            }
        }
    }
}

#[test]
fn identity_chain_self_prob_is_one() {
    let mut cfg = SynthConfig::with_self_transition(3, 1.0, 0.5, 3);
    cfg.docs_per_split = (30, 1, 1);
    let split = generate_synthetic(&cfg).unwrap();
    let st = transition_self_prob(&split.train, &split.vocabulary).unwrap();
    assert!(st.per_class.iter().flatten().all(|&p| p == 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn generation_is_a_pure_function_of_config(seed in 0u64..1000, p in 0.0f64..1.0) {
        let mut cfg = SynthConfig::with_self_transition(3, p, 0.5, seed);
        cfg.docs_per_split = (4, 2, 2);
        prop_assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
    }
}
