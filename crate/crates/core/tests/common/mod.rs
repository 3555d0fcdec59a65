//! Reference implementations used as test oracles. None of these call into the
//! library's numerical code.
#![allow(dead_code)]

use pagectx::params::ParamStore;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central differences of `f` over every parameter; returns the worst relative error
/// against `analytic` and the flat index where it occurred.
pub fn max_fd_error(params: &ParamStore, analytic: &ParamStore, f: impl Fn(&ParamStore) -> f64) -> (f64, usize) {
    let mut p = params.clone();
    let mut worst = (0.0, 0);
    for i in 0..params.num_values() {
        let x = params.flat_get(i);
        p.flat_set(i, x + FD_STEP);
        let up = f(&p);
        p.flat_set(i, x - FD_STEP);
        let down = f(&p);
        p.flat_set(i, x);
        let e = rel_err(analytic.flat_get(i), (up - down) / (2.0 * FD_STEP));
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

/// Same over a plain vector of parameters.
pub fn max_fd_error_vec(theta: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut p = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        p[i] = theta[i] + FD_STEP;
        let up = f(&p);
        p[i] = theta[i] - FD_STEP;
        let down = f(&p);
        p[i] = theta[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`: power series below `a + 1`,
/// Lentz continued fraction above.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let lead = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        1.0 - sum * lead.exp()
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-17 {
                break;
            }
        }
        lead.exp() * h
    }
}

pub fn chi2_sf_oracle(x: f64, dof: usize) -> f64 {
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

/// Every label path of length `l` over `n` labels, in lexicographic order.
pub fn all_paths(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..l {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// Path score computed directly from the model fields.
pub fn brute_path_score(transition: &[f64], start: &[f64], scale: f64, em: &[Vec<f64>], path: &[usize]) -> f64 {
    let n = start.len();
    let mut s = start[path[0]];
    for (t, &y) in path.iter().enumerate() {
        s += scale * em[t][y];
        if t > 0 {
            s += transition[path[t - 1] * n + y];
        }
    }
    s
}

/// `(best path, best score, log Z, unary marginals)` by enumeration. The first path
/// in lexicographic order wins ties.
pub fn brute_crf(transition: &[f64], start: &[f64], scale: f64, em: &[Vec<f64>]) -> (Vec<usize>, f64, f64, Vec<Vec<f64>>) {
    let n = start.len();
    let paths = all_paths(n, em.len());
    let scores: Vec<f64> = paths.iter().map(|p| brute_path_score(transition, start, scale, em, p)).collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    let log_z = m + z.ln();
    let mut unary = vec![vec![0.0; n]; em.len()];
    for (p, s) in paths.iter().zip(&scores) {
        let w = (s - log_z).exp();
        for (t, &y) in p.iter().enumerate() {
            unary[t][y] += w;
        }
    }
    (paths[best].clone(), scores[best], log_z, unary)
}
