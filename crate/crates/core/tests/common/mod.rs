//! Independent reference implementations for the integration tests. Plain
//! `Vec` arithmetic and Gauss–Jordan elimination, sharing no code with the
//! library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

/// Inverse by Gauss–Jordan with partial pivoting.
pub fn invert(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        assert!(d.abs() > 1e-300, "singular matrix");
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..p).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

fn sigmoid(e: f64) -> f64 {
    1.0 / (1.0 + (-e).exp())
}

/// Logistic MLE by undamped Newton–Raphson; returns (β, (XᵀWX)⁻¹).
pub fn newton_logit(x: &Mat, y: &[f64]) -> (Vec<f64>, Mat) {
    let p = x[0].len();
    let mut b = vec![0.0; p];
    for _ in 0..100 {
        let mu: Vec<f64> = x.iter().map(|r| sigmoid(r.iter().zip(&b).map(|(a, c)| a * c).sum())).collect();
        let mut g = vec![0.0; p];
        let mut h = vec![vec![0.0; p]; p];
        for (i, r) in x.iter().enumerate() {
            let w = mu[i] * (1.0 - mu[i]);
            for j in 0..p {
                g[j] += r[j] * (y[i] - mu[i]);
                for k in 0..p {
                    h[j][k] += w * r[j] * r[k];
                }
            }
        }
        let hi = invert(&h);
        let step = mat_vec(&hi, &g);
        for j in 0..p {
            b[j] += step[j];
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-13 {
            break;
        }
    }
    let mu: Vec<f64> = x.iter().map(|r| sigmoid(r.iter().zip(&b).map(|(a, c)| a * c).sum())).collect();
    let mut h = vec![vec![0.0; p]; p];
    for (i, r) in x.iter().enumerate() {
        for j in 0..p {
            for k in 0..p {
                h[j][k] += mu[i] * (1.0 - mu[i]) * r[j] * r[k];
            }
        }
    }
    (b, invert(&h))
}

/// Cluster sandwich written out term by term:
/// V = G/(G−1)·(n−1)/(n−p) · A⁻¹ (Σ_g u_g u_gᵀ) A⁻¹, u_g = Σ_{i∈g} x_i (y_i − μ_i).
pub fn sandwich(x: &Mat, y: &[f64], b: &[f64], clusters: &[String]) -> Mat {
    let (n, p) = (x.len(), x[0].len());
    let mu: Vec<f64> = x.iter().map(|r| sigmoid(r.iter().zip(b).map(|(a, c)| a * c).sum())).collect();
    let mut a = vec![vec![0.0; p]; p];
    for (i, r) in x.iter().enumerate() {
        for j in 0..p {
            for k in 0..p {
                a[j][k] += mu[i] * (1.0 - mu[i]) * r[j] * r[k];
            }
        }
    }
    let ai = invert(&a);
    let mut ids: Vec<&String> = clusters.iter().collect();
    ids.sort();
    ids.dedup();
    let mut meat = vec![vec![0.0; p]; p];
    for id in &ids {
        let mut u = vec![0.0; p];
        for i in (0..n).filter(|&i| &clusters[i] == *id) {
            for j in 0..p {
                u[j] += x[i][j] * (y[i] - mu[i]);
            }
        }
        for j in 0..p {
            for k in 0..p {
                meat[j][k] += u[j] * u[k];
            }
        }
    }
    let g = ids.len() as f64;
    let c = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - p as f64);
    mat_mul(&mat_mul(&ai, &meat), &ai).into_iter().map(|r| r.into_iter().map(|v| v * c).collect()).collect()
}

/// Conditional logit for strata with exactly one positive: maximises
/// Σ_s [x_{s,+}·β − log Σ_{i∈s} exp(x_i·β)] by Newton.
pub fn newton_clogit(x: &Mat, y: &[f64], strata: &[usize]) -> Vec<f64> {
    let p = x[0].len();
    let n_strata = strata.iter().max().map_or(0, |m| m + 1);
    let mut b = vec![0.0; p];
    for _ in 0..100 {
        let mut g = vec![0.0; p];
        let mut h = vec![vec![0.0; p]; p];
        for s in 0..n_strata {
            let rows: Vec<usize> = (0..x.len()).filter(|&i| strata[i] == s).collect();
            let w: Vec<f64> =
                rows.iter().map(|&i| x[i].iter().zip(&b).map(|(a, c)| a * c).sum::<f64>().exp()).collect();
            let tot: f64 = w.iter().sum();
            let mean: Vec<f64> =
                (0..p).map(|j| rows.iter().zip(&w).map(|(&i, wi)| wi * x[i][j]).sum::<f64>() / tot).collect();
            for (&i, wi) in rows.iter().zip(&w) {
                for j in 0..p {
                    g[j] += y[i] * (x[i][j] - mean[j]);
                    for k in 0..p {
                        h[j][k] += wi / tot * (x[i][j] - mean[j]) * (x[i][k] - mean[k]);
                    }
                }
            }
        }
        let step = mat_vec(&invert(&h), &g);
        for j in 0..p {
            b[j] += step[j];
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-13 {
            break;
        }
    }
    b
}

/// Pearson χ² via n·(Σ o²/(rᵢcⱼ) − 1) and Cramér's V.
pub fn chi2_v(table: &[Vec<f64>]) -> (f64, f64) {
    let n: f64 = table.iter().flatten().sum();
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut s = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            s += o * o / (rows[i] * cols[j]);
        }
    }
    let chi2 = n * (s - 1.0);
    let k = (table.len().min(table[0].len()) - 1) as f64;
    (chi2, (chi2 / (n * k)).sqrt())
}

fn entropy<K: Ord>(labels: impl Iterator<Item = K>) -> f64 {
    let mut counts = std::collections::BTreeMap::new();
    let mut n = 0.0;
    for l in labels {
        *counts.entry(l).or_insert(0.0) += 1.0;
        n += 1.0;
    }
    -counts.values().map(|&c: &f64| c / n * (c / n).ln()).sum::<f64>()
}

/// Mutual information (nats) as H(A) + H(B) − H(A, B) over the expanded observations.
pub fn mutual_information(table: &[Vec<f64>]) -> f64 {
    let mut obs = Vec::new();
    for (i, r) in table.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            obs.extend(std::iter::repeat_n((i, j), o as usize));
        }
    }
    entropy(obs.iter().map(|o| o.0)) + entropy(obs.iter().map(|o| o.1)) - entropy(obs.iter().copied())
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller, kept local so the oracle data path does not share the
    // library's distribution code.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A random logistic dataset: intercept plus `p − 1` standard-normal
/// columns, moderate true coefficients, and cluster labels of size ~4.
pub struct LogitData {
    pub x: Mat,
    pub y: Vec<f64>,
    pub clusters: Vec<String>,
}

pub fn logit_dataset(seed: u64) -> LogitData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(60..=200);
    let p = rng.random_range(2..=6);
    let beta: Vec<f64> = (0..p).map(|_| 0.6 * normal(&mut rng)).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut clusters = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = vec![1.0];
        r.extend((1..p).map(|_| normal(&mut rng)));
        let eta: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
        y.push(if rng.random::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 });
        x.push(r);
        clusters.push(format!("c{}", i / 4));
    }
    LogitData { x, y, clusters }
}

/// Triads with exactly one positive each; strata-level nuisance shifts so a
/// pooled model would be wrong.
pub fn triad_dataset(seed: u64, n_strata: usize, p: usize) -> (Mat, Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..p).map(|_| 0.8 * normal(&mut rng)).collect();
    let (mut x, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..n_strata {
        let shift: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..p).map(|j| shift[j] + normal(&mut rng)).collect()).collect();
        let w: Vec<f64> = rows.iter().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().exp()).collect();
        let u = rng.random::<f64>() * w.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut pos = 2;
        for (i, wi) in w.iter().enumerate() {
            acc += wi;
            if u < acc {
                pos = i;
                break;
            }
        }
        for (i, r) in rows.into_iter().enumerate() {
            x.push(r);
            y.push(if i == pos { 1.0 } else { 0.0 });
            s.push(k);
        }
    }
    (x, y, s)
}
