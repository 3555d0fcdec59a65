use serde::{Deserialize, Serialize};

use crate::corpus::TypeVocabulary;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerClassScores {
    pub classes: Vec<ClassScore>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    /// Fraction of pages whose decided label set equals the gold set.
    pub accuracy: f64,
    pub pages: usize,
}

impl PerClassScores {
    pub fn f1s(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.f1).collect()
    }
}

pub fn macro_average(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Support-weighted mean; `0` when every support is zero.
pub fn weighted_average(values: &[f64], supports: &[usize]) -> f64 {
    let total: usize = supports.iter().sum();
    if total == 0 {
        return 0.0;
    }
    values.iter().zip(supports).map(|(v, &s)| v * s as f64).sum::<f64>() / total as f64
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class binary decisions over label-set membership. For singleton label sets
/// this is the usual confusion-matrix precision/recall.
pub fn score(preds: &[Vec<usize>], golds: &[Vec<usize>], vocabulary: &TypeVocabulary) -> Result<PerClassScores> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch(format!("{} predictions for {} gold pages", preds.len(), golds.len())));
    }
    let n = vocabulary.len();
    let mut tp = vec![0usize; n];
    let mut fp = vec![0usize; n];
    let mut fn_ = vec![0usize; n];
    let mut exact = 0;
    for (p, g) in preds.iter().zip(golds) {
        for c in 0..n {
            match (p.contains(&c), g.contains(&c)) {
                (true, true) => tp[c] += 1,
                (true, false) => fp[c] += 1,
                (false, true) => fn_[c] += 1,
                (false, false) => {}
            }
        }
        let mut ps = p.clone();
        ps.sort_unstable();
        let mut gs = g.clone();
        gs.sort_unstable();
        if ps == gs {
            exact += 1;
        }
    }
    let classes: Vec<ClassScore> = (0..n)
        .map(|c| {
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fn_[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScore {
                class: vocabulary.name(c).to_string(),
                precision,
                recall,
                f1,
                support: tp[c] + fn_[c],
            }
        })
        .collect();
    let f1s: Vec<f64> = classes.iter().map(|c| c.f1).collect();
    let supports: Vec<usize> = classes.iter().map(|c| c.support).collect();
    Ok(PerClassScores {
        macro_f1: macro_average(&f1s),
        weighted_f1: weighted_average(&f1s, &supports),
        accuracy: ratio(exact, preds.len()),
        pages: preds.len(),
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelMode;

    fn vocab(n: usize) -> TypeVocabulary {
        TypeVocabulary::new((0..n).map(|i| format!("c{i}")), LabelMode::Multiclass).unwrap()
    }

    fn single(xs: &[usize]) -> Vec<Vec<usize>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn perfect_predictions() {
        let g = single(&[0, 1, 2, 1]);
        let s = score(&g, &g, &vocab(3)).unwrap();
        assert_eq!(s.macro_f1, 1.0);
        assert_eq!(s.weighted_f1, 1.0);
        assert_eq!(s.accuracy, 1.0);
        assert!(s.classes.iter().all(|c| c.precision == 1.0 && c.recall == 1.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(score(&single(&[0]), &single(&[0, 1]), &vocab(2)).is_err());
    }

    #[test]
    fn zero_division_gives_zero() {
        // class 2 never predicted nor present
        let s = score(&single(&[0, 1]), &single(&[0, 0]), &vocab(3)).unwrap();
        assert_eq!(s.classes[2].f1, 0.0);
        assert_eq!(s.classes[1].precision, 0.0);
        assert_eq!(s.classes[0].recall, 0.5);
    }

    #[test]
    fn equal_supports_weighted_equals_macro() {
        let f = [0.3, 0.9, 0.5];
        assert!((weighted_average(&f, &[4, 4, 4]) - macro_average(&f)).abs() < 1e-15);
    }
}
