//! Gauss–Legendre quadrature, composite over fixed breakpoints.

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let (pn, pn1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (x * pn - pn1) / (x * x - 1.0);
    (pn, d)
}

/// Composite rule: `nodes` points on each interval between consecutive breakpoints.
pub fn integrate_scalar(f: impl Fn(f64) -> f64, breakpoints: &[f64], nodes: usize) -> f64 {
    let (x, w) = gauss_legendre(nodes);
    breakpoints
        .windows(2)
        .map(|ab| {
            let (a, b) = (ab[0], ab[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            x.iter()
                .zip(&w)
                .map(|(xi, wi)| wi * f(mid + half * xi))
                .sum::<f64>()
                * half
        })
        .sum()
}

/// Composite rule for matrix-valued integrands.
pub fn integrate_matrix(
    f: &dyn Fn(f64) -> Result<ComplexMatrix>,
    breakpoints: &[f64],
    nodes: usize,
) -> Result<ComplexMatrix> {
    let (x, w) = gauss_legendre(nodes);
    let mut acc: Option<ComplexMatrix> = None;
    for ab in breakpoints.windows(2) {
        let (a, b) = (ab[0], ab[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in x.iter().zip(&w) {
            let term = f(mid + half * xi)?.scale_re(wi * half);
            match acc.as_mut() {
                Some(m) => *m += &term,
                None => acc = Some(term),
            }
        }
    }
    acc.ok_or_else(|| Error::Parameter("integration range has no intervals".into()))
}

/// Doubles the node count from `start_nodes` until successive results differ by
/// less than `tol` (max-abs entry norm). Returns the result and the node count used.
pub fn integrate_matrix_adaptive(
    f: &dyn Fn(f64) -> Result<ComplexMatrix>,
    breakpoints: &[f64],
    start_nodes: usize,
    tol: f64,
    max_nodes: usize,
) -> Result<(ComplexMatrix, usize)> {
    let mut nodes = start_nodes.max(1);
    let mut prev = integrate_matrix(f, breakpoints, nodes)?;
    loop {
        let next_nodes = nodes * 2;
        if next_nodes > max_nodes {
            return Err(Error::Convergence {
                what: "gauss-legendre quadrature".into(),
                achieved: f64::NAN,
            });
        }
        let next = integrate_matrix(f, breakpoints, next_nodes)?;
        let change = (&next - &prev).max_abs();
        if change < tol {
            return Ok((next, next_nodes));
        }
        if next_nodes * 2 > max_nodes {
            return Err(Error::Convergence {
                what: "gauss-legendre quadrature".into(),
                achieved: change,
            });
        }
        prev = next;
        nodes = next_nodes;
    }
}
