use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::{Error, Result};

/// `counts[i][j]`: pages where the first model decided `i` and the second `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!(
                "contingency table must be square, got {} rows with lengths {:?}",
                n,
                counts.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
        Ok(ContingencyTable { counts })
    }

    /// Cross-tabulates paired decisions.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut counts = vec![vec![0u64; n]; n];
        for (a, b) in pairs {
            counts[a][b] += 1;
        }
        ContingencyTable { counts }
    }

    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn transpose(&self) -> Self {
        let n = self.size();
        ContingencyTable {
            counts: (0..n).map(|i| (0..n).map(|j| self.counts[j][i]).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Upper-tail chi-square probability `Q(k/2, x/2)`. `1` at `x = 0` and for `k = 0`.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 || x <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Bowker's test of symmetry. Off-diagonal pairs with no discordant counts are left
/// out and do not contribute degrees of freedom.
pub fn mcnemar_bowker(table: &ContingencyTable) -> Result<TestResult> {
    let t = ContingencyTable::new(table.counts.clone())?;
    let n = t.size();
    let mut statistic = 0.0;
    let mut dof = 0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (t.counts[i][j] as f64, t.counts[j][i] as f64);
            if a + b > 0.0 {
                statistic += (a - b) * (a - b) / (a + b);
                dof += 1;
            }
        }
    }
    Ok(TestResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_table() {
        let t = ContingencyTable::new(vec![vec![5, 3, 2], vec![3, 9, 1], vec![2, 1, 4]]).unwrap();
        let r = mcnemar_bowker(&t).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.dof, 3);
    }

    #[test]
    fn two_by_two_is_mcnemar() {
        let t = ContingencyTable::new(vec![vec![40, 12], vec![5, 30]]).unwrap();
        let r = mcnemar_bowker(&t).unwrap();
        assert!((r.statistic - 49.0 / 17.0).abs() < 1e-15);
        assert_eq!(r.dof, 1);
    }

    #[test]
    fn empty_pairs_drop_dof() {
        let t = ContingencyTable::new(vec![vec![5, 0, 2], vec![0, 9, 0], vec![1, 0, 4]]).unwrap();
        assert_eq!(mcnemar_bowker(&t).unwrap().dof, 1);
    }

    #[test]
    fn non_square_rejected() {
        assert!(ContingencyTable::new(vec![vec![1, 2], vec![3]]).is_err());
        let bad = ContingencyTable { counts: vec![vec![1, 2, 3], vec![1, 2, 3]] };
        assert!(mcnemar_bowker(&bad).is_err());
    }

    #[test]
    fn survival_basics() {
        for k in 1..10 {
            assert_eq!(chi_square_sf(0.0, k), 1.0);
        }
        // chi2(1) at 3.841458820694124 is the 5% point
        assert!((chi_square_sf(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-12);
        // chi2(2) survival is exp(-x/2)
        assert!((chi_square_sf(5.0, 2) - (-2.5f64).exp()).abs() < 1e-14);
    }
}
