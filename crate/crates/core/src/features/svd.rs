//! Truncated SVD by block power (subspace) iteration with Rayleigh-Ritz extraction.
//!
//! The data matrix `A` (pages × vocabulary) is only touched through sparse products
//! `A·Q` and `Aᵀ·W`, so the vocabulary dimension can be large.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PageVector, SparseVec};
use crate::{Error, Result};

pub const SVD_TOL: f64 = 1e-8;
pub const SVD_MAX_ITERS: usize = 500;
const OVERSAMPLE: usize = 8;
const RANK_TOL: f64 = 1e-10;

/// Top-`k` right-singular subspace of the training TF-IDF matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdProjector {
    /// `dim × k`, row-major; columns orthonormal.
    pub basis: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub dim: usize,
    pub iterations: usize,
}

impl SvdProjector {
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    /// `basisᵀ · x`.
    pub fn project(&self, x: &SparseVec) -> PageVector {
        let k = self.k();
        let mut values = vec![0.0; k];
        for &(id, v) in x {
            let row = &self.basis[id * k..(id + 1) * k];
            for (o, b) in values.iter_mut().zip(row) {
                *o += v * b;
            }
        }
        PageVector { values }
    }

    /// `basisᵀ · x` for a dense input.
    pub fn project_dense(&self, x: &[f64]) -> PageVector {
        let sparse: SparseVec = x.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        self.project(&sparse)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let k = self.k();
        (0..self.dim).map(|i| self.basis[i * k + j]).collect()
    }
}

/// Column-major dense block: `cols` vectors of length `rows`.
struct Block {
    rows: usize,
    cols: Vec<Vec<f64>>,
}

impl Block {
    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        Block {
            rows,
            cols: (0..cols).map(|_| random_vec(rows, rng)).collect(),
        }
    }

    /// Rotates the block: new column j = Σ_i col_i · u[i][j].
    fn rotate(&self, u: &DMatrix<f64>, keep: usize) -> Block {
        let cols = (0..keep)
            .map(|j| {
                let mut v = vec![0.0; self.rows];
                for (i, col) in self.cols.iter().enumerate() {
                    let c = u[(i, j)];
                    for (o, x) in v.iter_mut().zip(col) {
                        *o += c * x;
                    }
                }
                v
            })
            .collect();
        Block { rows: self.rows, cols }
    }
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns that collapse are
/// replaced with fresh random directions.
fn orthonormalize(block: &mut Block, rng: &mut ChaCha8Rng) {
    for j in 0..block.cols.len() {
        let mut attempts = 0;
        loop {
            let original = crate::linalg::norm(&block.cols[j]);
            for _ in 0..2 {
                for i in 0..j {
                    let (done, rest) = block.cols.split_at_mut(j);
                    let proj = dot(&done[i], &rest[0]);
                    for (x, q) in rest[0].iter_mut().zip(&done[i]) {
                        *x -= proj * q;
                    }
                }
            }
            let nrm = crate::linalg::norm(&block.cols[j]);
            if nrm > 1e-10 * original.max(f64::MIN_POSITIVE) && nrm > 0.0 {
                block.cols[j].iter_mut().for_each(|x| *x /= nrm);
                break;
            }
            attempts += 1;
            assert!(attempts < 100, "cannot extend orthonormal block");
            block.cols[j] = random_vec(block.rows, rng);
        }
    }
}

/// `A · Q` with `A` given as sparse rows.
fn mul_a(rows: &[SparseVec], q: &Block) -> Block {
    let cols = q
        .cols
        .iter()
        .map(|col| rows.iter().map(|r| r.iter().map(|&(id, v)| v * col[id]).sum()).collect())
        .collect();
    Block { rows: rows.len(), cols }
}

/// `Aᵀ · W`.
fn mul_at(rows: &[SparseVec], dim: usize, w: &Block) -> Block {
    let cols = w
        .cols
        .iter()
        .map(|col| {
            let mut out = vec![0.0; dim];
            for (r, &c) in rows.iter().zip(col) {
                for &(id, v) in r {
                    out[id] += v * c;
                }
            }
            out
        })
        .collect();
    Block { rows: dim, cols }
}

/// Fits the top-`k` right-singular subspace of the matrix whose rows are `rows`
/// (each a sparse vector of length `dim`).
pub fn fit_svd(rows: &[SparseVec], dim: usize, k: usize, seed: u64) -> Result<SvdProjector> {
    let limit = rows.len().min(dim);
    if k == 0 || k > limit {
        return Err(Error::RankTooLarge { requested: k, limit });
    }
    let b = (k + OVERSAMPLE).min(limit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Block::random(dim, b, &mut rng);
    orthonormalize(&mut q, &mut rng);
    let mut w = mul_a(rows, &q);
    let mut prev: Option<Vec<f64>> = None;

    for iter in 1..=SVD_MAX_ITERS {
        // Rayleigh-Ritz on the current subspace: H = WᵀW = QᵀAᵀAQ.
        let h = DMatrix::from_fn(b, b, |i, j| dot(&w.cols[i], &w.cols[j]));
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
        let u = DMatrix::from_fn(b, b, |i, j| eig.eigenvectors[(i, order[j])]);
        let sigma: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
        q = q.rotate(&u, b);
        w = w.rotate(&u, b);

        let top = &sigma[..k];
        let scale = sigma[0].max(f64::MIN_POSITIVE);
        let residual = prev
            .as_ref()
            .map(|p| p.iter().zip(top).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale)
            .unwrap_or(f64::INFINITY);
        if residual <= SVD_TOL {
            return finish(q, top.to_vec(), dim, k, iter);
        }
        if iter == SVD_MAX_ITERS {
            return Err(Error::NonConvergence {
                what: "svd block power iteration",
                iterations: iter,
                residual,
            });
        }
        prev = Some(top.to_vec());

        let mut z = mul_at(rows, dim, &w);
        orthonormalize(&mut z, &mut rng);
        q = z;
        w = mul_a(rows, &q);
    }
    unreachable!()
}

fn finish(q: Block, sigma: Vec<f64>, dim: usize, k: usize, iterations: usize) -> Result<SvdProjector> {
    let top = sigma[0];
    let rank = sigma.iter().filter(|&&s| s > RANK_TOL * top.max(f64::MIN_POSITIVE) && s > 0.0).count();
    if rank < k {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    let mut basis = vec![0.0; dim * k];
    for (j, col) in q.cols.iter().take(k).enumerate() {
        // sign convention: largest-magnitude entry positive
        let pivot = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (i, &x) in col.iter().enumerate() {
            basis[i * k + j] = sign * x;
        }
    }
    Ok(SvdProjector {
        basis,
        singular_values: sigma,
        dim,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_rows(m: &[Vec<f64>]) -> Vec<SparseVec> {
        m.iter()
            .map(|r| r.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect())
            .collect()
    }

    #[test]
    fn rank_one_matches_frobenius() {
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, 0.0, 1.0, 2.0];
        let m: Vec<Vec<f64>> = u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect();
        let fro = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        let p = fit_svd(&dense_rows(&m), 4, 1, 3).unwrap();
        assert!((p.singular_values[0] - fro).abs() < 1e-9 * fro);
    }

    #[test]
    fn orthogonal_equal_norm_rows() {
        let m = vec![
            vec![2.0, 0.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 2.0],
        ];
        let p = fit_svd(&dense_rows(&m), 4, 3, 1).unwrap();
        for s in &p.singular_values {
            assert!((s - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn k_too_large_and_rank_deficient() {
        let m = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(matches!(fit_svd(&dense_rows(&m), 2, 3, 0), Err(Error::RankTooLarge { .. })));
        assert!(matches!(fit_svd(&dense_rows(&m), 2, 2, 0), Err(Error::RankDeficient { rank: 1, .. })));
    }

    #[test]
    fn identity_basis_picks_coordinate() {
        let p = SvdProjector {
            basis: vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            singular_values: vec![1.0, 1.0],
            dim: 3,
            iterations: 0,
        };
        let v = p.project(&vec![(1, 7.0), (2, 3.0)]);
        assert_eq!(v.values, vec![0.0, 7.0]);
        assert_eq!(p.project(&vec![]).values, vec![0.0, 0.0]);
    }
}
