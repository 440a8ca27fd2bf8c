#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ordered pairs `(i, j)`, `i != j`, row-major.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// Statistics `(edges, Σ x_i over edges, Σ |x_i − x_j| over edges)`.
pub fn stats_edges_sender_absdiff(adj: &[Vec<bool>], x: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; 3];
    for (i, row) in adj.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            if e {
                s[0] += 1.0;
                s[1] += x[i];
                s[2] += (x[i] - x[j]).abs();
            }
        }
    }
    s
}

/// Statistics `(edges, reciprocated pairs)`.
pub fn stats_edges_mutual(adj: &[Vec<bool>]) -> Vec<f64> {
    let n = adj.len();
    let mut s = vec![0.0; 2];
    for i in 0..n {
        for j in 0..n {
            if adj[i][j] {
                s[0] += 1.0;
                if i < j && adj[j][i] {
                    s[1] += 1.0;
                }
            }
        }
    }
    s
}

/// Statistics of every graph on `n` nodes.
pub fn graph_space(n: usize, stats: impl Fn(&[Vec<bool>]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let p = pairs(n);
    (0u64..1 << p.len())
        .map(|mask| {
            let mut adj = vec![vec![false; n]; n];
            for (b, &(i, j)) in p.iter().enumerate() {
                adj[i][j] = mask >> b & 1 == 1;
            }
            stats(&adj)
        })
        .collect()
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Exact MLE over an enumerated graph space by Newton's method on the
/// log-likelihood; `None` if it does not exist (iterates drift off).
pub fn exact_mle(space: &[Vec<f64>], observed: &[f64]) -> Option<Vec<f64>> {
    let p = observed.len();
    let mut theta = vec![0.0; p];
    for _ in 0..200 {
        let scores: Vec<f64> = space
            .iter()
            .map(|s| s.iter().zip(&theta).map(|(a, b)| a * b).sum())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut mean = vec![0.0; p];
        for (s, wi) in space.iter().zip(&w) {
            for k in 0..p {
                mean[k] += wi * s[k] / total;
            }
        }
        let mut cov = vec![vec![0.0; p]; p];
        for (s, wi) in space.iter().zip(&w) {
            for a in 0..p {
                for b in 0..p {
                    cov[a][b] += wi / total * (s[a] - mean[a]) * (s[b] - mean[b]);
                }
            }
        }
        let grad: Vec<f64> = observed.iter().zip(&mean).map(|(o, m)| o - m).collect();
        if grad.iter().all(|g| g.abs() < 1e-13) {
            return Some(theta);
        }
        let step = solve(cov, grad);
        theta.iter_mut().zip(&step).for_each(|(t, s)| *t += s);
        if theta.iter().any(|t| !t.is_finite() || t.abs() > 25.0) {
            return None;
        }
    }
    None
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bernoulli(`p`) adjacency on `n` nodes.
pub fn random_adjacency(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    (0..n)
        .map(|i| (0..n).map(|j| i != j && rng.random_bool(p)).collect())
        .collect()
}

pub fn edge_list(adj: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let n = adj.len();
    pairs(n).into_iter().filter(|&(i, j)| adj[i][j]).collect()
}

/// Pair-counting Rand index adjusted for chance, computed from the four
/// pair categories directly.
pub fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let total = both + only_a + only_b + neither;
    let expected = (both + only_a) * (both + only_b) / total;
    let max = ((both + only_a) + (both + only_b)) / 2.0;
    (both - expected) / (max - expected)
}
