mod common;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pagectx::corpus::{generate_synthetic, DocumentSequence, SynthConfig};
use pagectx::features::{fit_svd, fit_vocabulary, tokenize, FeatureModel, SparseVec, TfIdfModel};

use common::jacobi_eigenvalues;

fn docs_from(pages: &[&str]) -> Vec<DocumentSequence> {
    vec![DocumentSequence::from_labeled("d", pages.iter().map(|t| (t.to_string(), 0))).unwrap()]
}

/// Sort-based reference: count, order by (-count, token), keep `cap`.
fn reference_vocab(docs: &[DocumentSequence], cap: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in docs.iter().flat_map(|d| &d.pages) {
        for t in tokenize(&p.text) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(cap).map(|(t, _)| t).collect()
}

#[test]
fn vocabulary_matches_reference_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let words = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
    for _ in 0..40 {
        let pages: Vec<String> = (0..rng.gen_range(1..8))
            .map(|_| (0..rng.gen_range(1..6)).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" "))
            .collect();
        let refs: Vec<&str> = pages.iter().map(String::as_str).collect();
        let docs = docs_from(&refs);
        let cap = rng.gen_range(1..12);
        assert_eq!(fit_vocabulary(&docs, cap).unwrap().tokens(), reference_vocab(&docs, cap).as_slice());
    }
}

#[test]
fn ubiquitous_tokens_have_minimum_idf() {
    let docs = docs_from(&["the cat", "the dog dog", "the bird", "a the"]);
    let vocab = fit_vocabulary(&docs, 100).unwrap();
    let model = TfIdfModel::fit(vocab.clone(), &docs).unwrap();
    let the = vocab.id("the").unwrap();
    let min = model.idf.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(model.idf[the], min);
    assert!((min - 1.0).abs() < 1e-15);
    assert!(model.idf.iter().all(|x| x.is_finite() && *x > 0.0));
}

#[test]
fn features_ignore_validation_and_test_tokens() {
    let mut cfg = SynthConfig::with_self_transition(3, 0.7, 0.5, 4);
    cfg.docs_per_split = (10, 5, 5);
    let mut split = generate_synthetic(&cfg).unwrap();
    split.test[0].pages[0].text.push_str(" zzunseen");
    let fm = FeatureModel::fit(&split.train, 1000, 8, 0).unwrap();
    assert!(fm.tfidf.vocabulary.id("zzunseen").is_none());
    let mut also = split.clone();
    also.validation.clear();
    also.test.clear();
    assert_eq!(FeatureModel::fit(&also.train, 1000, 8, 0).unwrap(), fm);
}

fn random_rows(m: usize, d: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<SparseVec>) {
    let a: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let rows = a.iter().map(|r| r.iter().copied().enumerate().collect()).collect();
    (a, rows)
}

#[test]
fn svd_matches_gram_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (a, rows) = random_rows(50, 30, &mut rng);
    let svd = fit_svd(&rows, 30, 5, 1).unwrap();
    let gram: Vec<Vec<f64>> = (0..30).map(|i| (0..30).map(|j| (0..50).map(|r| a[r][i] * a[r][j]).sum()).collect()).collect();
    let ev = jacobi_eigenvalues(gram);
    for j in 0..5 {
        assert!((svd.singular_values[j] - ev[j].sqrt()).abs() <= 1e-5);
    }
    assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn sparse_rows_give_the_same_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let d = 40;
    let a: Vec<Vec<f64>> = (0..60)
        .map(|_| (0..d).map(|_| if rng.gen_bool(0.2) { rng.gen_range(0.0..2.0) } else { 0.0 }).collect())
        .collect();
    let rows: Vec<SparseVec> = a.iter().map(|r| r.iter().copied().enumerate().filter(|x| x.1 != 0.0).collect()).collect();
    let svd = fit_svd(&rows, d, 6, 3).unwrap();
    let gram: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| (0..60).map(|r| a[r][i] * a[r][j]).sum()).collect()).collect();
    let ev = jacobi_eigenvalues(gram);
    for j in 0..6 {
        assert!((svd.singular_values[j] - ev[j].sqrt()).abs() <= 1e-5, "{j}");
    }
}

#[test]
fn projection_properties() {
    let mut cfg = SynthConfig::with_self_transition(3, 0.7, 0.5, 6);
    cfg.docs_per_split = (20, 2, 10);
    let split = generate_synthetic(&cfg).unwrap();
    let fm = FeatureModel::fit(&split.train, 1000, 10, 0).unwrap();
    assert_eq!(fm.page_vector("qqq rrr").values, vec![0.0; fm.dim()]);
    let dim = fm.tfidf.dim();
    let k = fm.dim();
    for page in split.test.iter().flat_map(|d| &d.pages) {
        let x = fm.tfidf.vector(&page.text);
        let z = fm.svd.project(&x);
        // ‖x − B Bᵀ x‖ ≤ ‖x‖
        let mut dense = vec![0.0; dim];
        for &(i, v) in &x {
            dense[i] = v;
        }
        let mut resid = dense.clone();
        for (i, r) in resid.iter_mut().enumerate() {
            for j in 0..k {
                *r -= fm.svd.basis[i * k + j] * z.values[j];
            }
        }
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm(&resid) <= norm(&dense) + 1e-12);
    }
    // linearity
    let x = fm.tfidf.vector(&split.test[0].pages[0].text);
    let y = fm.tfidf.vector(&split.test[1].pages[0].text);
    let mut comb: HashMap<usize, f64> = HashMap::new();
    for &(i, v) in &x {
        *comb.entry(i).or_default() += 2.0 * v;
    }
    for &(i, v) in &y {
        *comb.entry(i).or_default() -= 0.5 * v;
    }
    let comb: SparseVec = comb.into_iter().collect();
    let (px, py, pc) = (fm.svd.project(&x), fm.svd.project(&y), fm.svd.project(&comb));
    for j in 0..k {
        assert!((pc.values[j] - (2.0 * px.values[j] - 0.5 * py.values[j])).abs() < 1e-9);
    }
}

#[test]
fn feature_model_round_trip_and_version_check() {
    let mut cfg = SynthConfig::with_self_transition(3, 0.7, 0.5, 6);
    cfg.docs_per_split = (8, 1, 1);
    let split = generate_synthetic(&cfg).unwrap();
    let fm = FeatureModel::fit(&split.train, 500, 6, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.json");
    fm.save(&p).unwrap();
    assert_eq!(FeatureModel::load(&p).unwrap(), fm);
    let text = std::fs::read_to_string(&p).unwrap().replace(&fm.tokenizer_version, "other/0");
    std::fs::write(&p, text).unwrap();
    assert!(FeatureModel::load(&p).is_err());
}

#[test]
fn rank_deficient_training_matrix_lowers_k() {
    // two distinct page texts: rank 2
    let docs = docs_from(&["alpha beta", "alpha beta", "gamma", "gamma gamma"]);
    let fm = FeatureModel::fit(&docs, 100, 3, 0).unwrap();
    assert_eq!(fm.dim(), 2);
}
