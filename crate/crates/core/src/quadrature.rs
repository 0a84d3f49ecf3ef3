//! Gaussian quadrature rules built with the Golub–Welsch eigenvalue method.
//!
//! Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix of the
//! orthogonal polynomial family; weights are `mu0 * v0²` where `v0` is the first
//! component of the normalized eigenvector.

use nalgebra::{DMatrix, SymmetricEigen};

/// A one-dimensional rule: `∫ f dw ≈ Σ weights[i] · f(nodes[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to `f`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = diag[i];
        if i + 1 < n {
            jacobi[(i, i + 1)] = offdiag[i];
            jacobi[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, weights) = pairs.into_iter().unzip();
    Rule { nodes, weights }
}

/// Gauss–Legendre rule on `[-1, 1]` with `n` nodes (weights sum to 2).
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let mut rule = golub_welsch(&diag, &offdiag, 2.0);
    symmetrize(&mut rule);
    rule
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule {
    let base = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Rule {
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| half * w).collect(),
    }
}

/// Gauss rule for a nonnegative weight `w` on `[a, b]`, by the discretized
/// Stieltjes procedure: recurrence coefficients of the orthogonal polynomials
/// are computed against a fine Gauss–Legendre discretization of `w`, then
/// turned into nodes and weights by Golub–Welsch.
pub fn gauss_for_weight(n: usize, a: f64, b: f64, w: impl Fn(f64) -> f64) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let fine = gauss_legendre_on((40 * n).max(400), a, b);
    let xs = &fine.nodes;
    let ws: Vec<f64> = fine.nodes.iter().zip(&fine.weights).map(|(&x, &q)| q * w(x)).collect();
    let mu0: f64 = ws.iter().sum();
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    let mut p_prev = vec![0.0; xs.len()];
    let mut p = vec![1.0; xs.len()];
    let mut norm_prev = 1.0;
    for k in 0..n {
        let norm: f64 = ws.iter().zip(&p).map(|(w, v)| w * v * v).sum();
        let a_k = ws.iter().zip(&p).zip(xs).map(|((w, v), x)| w * x * v * v).sum::<f64>() / norm;
        alpha.push(a_k);
        let b_k = if k == 0 { 0.0 } else { norm / norm_prev };
        if k > 0 {
            beta.push(b_k.sqrt());
        }
        let next: Vec<f64> = (0..xs.len())
            .map(|i| (xs[i] - a_k) * p[i] - b_k * p_prev[i])
            .collect();
        p_prev = std::mem::replace(&mut p, next);
        norm_prev = norm;
    }
    golub_welsch(&alpha, &beta, mu0)
}

/// Gauss–Hermite rule for the standard normal law (probabilists' Hermite
/// polynomials); weights sum to 1.
pub fn gauss_hermite_normal(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let mut rule = golub_welsch(&diag, &offdiag, 1.0);
    symmetrize(&mut rule);
    rule
}

// Eigen-solvers leave O(eps) asymmetry; force exact mirror symmetry so odd
// moments of symmetric rules vanish exactly.
fn symmetrize(rule: &mut Rule) {
    let n = rule.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
}
