//! Averaged Hamiltonians of a cycle: the bangbang average `H0`, the
//! pulse-window average `H1`, their blend `Hλ` and the decoupled generator `B`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{c, eigh, opnorm, ComplexMatrix};
use crate::model::{Cycle, Hamiltonian};
use crate::pulses::PulsePath;
use crate::quadrature::{integrate_matrix_adaptive, integrate_scalar};

/// Minimum Gauss–Legendre nodes per smooth piece.
pub const MIN_NODES: usize = 8;

/// Largest node count tried before giving up.
pub const MAX_NODES: usize = 1 << 14;

/// Stopping tolerance on successive quadrature results.
pub const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AveragedHamiltonians {
    pub h0: ComplexMatrix,
    pub h1: ComplexMatrix,
    pub lambda: f64,
    pub hlambda: ComplexMatrix,
    pub quadrature_nodes: usize,
}

impl AveragedHamiltonians {
    pub fn new(h: &Hamiltonian, cycle: &Cycle, pulses: &[PulsePath], lambda: f64) -> Result<Self> {
        let h0 = compute_h0(h, cycle)?;
        let (h1, quadrature_nodes) = compute_h1_with_nodes(h, cycle, pulses, MIN_NODES)?;
        let hlambda = compute_hlambda(&h0, &h1, lambda)?;
        Ok(Self {
            h0,
            h1,
            lambda,
            hlambda,
            quadrature_nodes,
        })
    }

    /// `‖H1 − H0‖`
    pub fn gap(&self) -> f64 {
        opnorm(&(&self.h1 - &self.h0))
    }
}

fn check_space(h: &Hamiltonian, cycle: &Cycle) -> Result<()> {
    if h.space() != cycle.space() {
        return Err(Error::Dimension(
            "hamiltonian and cycle live on different spaces".into(),
        ));
    }
    Ok(())
}

/// `(1/N) Σ_k v_k H v_k*`
pub fn compute_h0(h: &Hamiltonian, cycle: &Cycle) -> Result<ComplexMatrix> {
    check_space(h, cycle)?;
    let space = cycle.space();
    let n = space.full_dim();
    let mut acc = ComplexMatrix::zeros(n, n);
    for v in cycle.frames() {
        acc += &h.full().conjugate_by(&space.embed(v));
    }
    Ok(acc.scale_re(1.0 / cycle.len() as f64).hermitian_part())
}

/// `(1/N) Σ_k v_{k-1} [∫₀¹ γ_k(s)* H γ_k(s) ds] v_{k-1}*`
pub fn compute_h1(
    h: &Hamiltonian,
    cycle: &Cycle,
    pulses: &[PulsePath],
    nodes: usize,
) -> Result<ComplexMatrix> {
    compute_h1_with_nodes(h, cycle, pulses, nodes).map(|(m, _)| m)
}

/// [`compute_h1`] together with the largest node count any step needed.
pub fn compute_h1_with_nodes(
    h: &Hamiltonian,
    cycle: &Cycle,
    pulses: &[PulsePath],
    nodes: usize,
) -> Result<(ComplexMatrix, usize)> {
    check_space(h, cycle)?;
    if nodes < MIN_NODES {
        return Err(Error::Parameter(format!(
            "at least {MIN_NODES} quadrature nodes required, got {nodes}"
        )));
    }
    if pulses.len() != cycle.len() {
        return Err(Error::Validation(format!(
            "{} pulse paths for a cycle of length {}",
            pulses.len(),
            cycle.len()
        )));
    }
    let space = cycle.space();
    let n = space.full_dim();
    let mut acc = ComplexMatrix::zeros(n, n);
    let mut max_nodes = 0;
    for (k, path) in pulses.iter().enumerate() {
        if path.dim() != space.dim_s() {
            return Err(Error::Dimension(format!(
                "pulse path {k} does not act on the system"
            )));
        }
        let (window, used) = window_average(h, path, nodes)?;
        max_nodes = max_nodes.max(used);
        acc += &window.conjugate_by(&space.embed(cycle.frame_before(k)));
    }
    Ok((
        acc.scale_re(1.0 / cycle.len() as f64).hermitian_part(),
        max_nodes,
    ))
}

/// `∫₀¹ γ(s)* H γ(s) ds` on the composite space.
fn window_average(
    h: &Hamiltonian,
    path: &PulsePath,
    nodes: usize,
) -> Result<(ComplexMatrix, usize)> {
    let space = h.space();
    if path.segments().is_some() {
        let f = |s: f64| -> Result<ComplexMatrix> {
            let g = space.embed(&path.at(s)?);
            Ok(h.full().conjugate_by(&g.adjoint()))
        };
        let scale = h.full().max_abs().max(1.0);
        return integrate_matrix_adaptive(
            &f,
            &path.breakpoints(),
            nodes,
            QUADRATURE_TOL / scale,
            MAX_NODES,
        );
    }

    let a = space.embed(path.generator());
    let commutator = h.full().commutator(&a).max_abs();
    if commutator <= 1e-14 * (1.0 + h.full().max_abs() * a.max_abs()) {
        return Ok((h.full().clone(), 0));
    }

    // γ(s) = Q e^{-iΦ(s)D} Q*, so in the eigenbasis of A the (i, j) block of
    // γ* H γ picks up the scalar e^{iΦ(s)(a_i - a_j)}.
    let (eigvals, q) = eigh(path.generator())?;
    let de = space.dim_e();
    let qe = space.embed(&q);
    let hq = h.full().conjugate_by(&qe.adjoint());
    let ds = eigvals.len();
    let tol = QUADRATURE_TOL / opnorm(h.full()).max(1.0);
    let shape = path.shape().clone();
    let breaks = shape.breakpoints();
    let mut weights = vec![vec![c(1.0, 0.0); ds]; ds];
    let mut nodes_used = 0;
    for i in 0..ds {
        for j in 0..ds {
            let omega = eigvals[i] - eigvals[j];
            if omega == 0.0 {
                continue;
            }
            let (w, used) = if path.is_rectangular_geodesic() {
                (oscillatory_mean(omega), 0)
            } else {
                adaptive_phase_integral(|s| shape.cumulative(s), omega, &breaks, nodes, tol)?
            };
            nodes_used = nodes_used.max(used);
            weights[i][j] = w;
        }
    }
    let mut mixed = hq;
    for r in 0..mixed.rows() {
        for col in 0..mixed.cols() {
            mixed[(r, col)] *= weights[r / de][col / de];
        }
    }
    Ok((mixed.conjugate_by(&qe), nodes_used))
}

/// `∫₀¹ e^{iωs} ds`
fn oscillatory_mean(omega: f64) -> C64 {
    if omega.abs() < 1e-8 {
        return c(1.0, omega / 2.0);
    }
    (c(0.0, omega).exp() - 1.0) / c(0.0, omega)
}

/// `∫₀¹ e^{iωΦ(s)} ds` by node doubling.
fn adaptive_phase_integral(
    phi: impl Fn(f64) -> f64,
    omega: f64,
    breaks: &[f64],
    nodes: usize,
    tol: f64,
) -> Result<(C64, usize)> {
    let eval = |n: usize| {
        let re = integrate_scalar(|s| (omega * phi(s)).cos(), breaks, n);
        let im = integrate_scalar(|s| (omega * phi(s)).sin(), breaks, n);
        c(re, im)
    };
    let mut n = nodes;
    let mut prev = eval(n);
    loop {
        let next_n = n * 2;
        if next_n > MAX_NODES {
            return Err(Error::Convergence {
                what: "pulse-window average".into(),
                achieved: f64::NAN,
            });
        }
        let next = eval(next_n);
        let change = (next - prev).norm();
        if change < tol {
            return Ok((next, next_n));
        }
        if next_n * 2 > MAX_NODES {
            return Err(Error::Convergence {
                what: "pulse-window average".into(),
                achieved: change,
            });
        }
        prev = next;
        n = next_n;
    }
}

/// `λ H1 + (1 − λ) H0`
pub fn compute_hlambda(
    h0: &ComplexMatrix,
    h1: &ComplexMatrix,
    lambda: f64,
) -> Result<ComplexMatrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!(
            "relative pulse width {lambda} outside [0, 1]"
        )));
    }
    if h0.rows() != h1.rows() || h0.cols() != h1.cols() {
        return Err(Error::Dimension("H0 and H1 shapes differ".into()));
    }
    Ok(&h1.scale_re(lambda) + &h0.scale_re(1.0 - lambda))
}

/// `B = tr_s(H) / d` on the environment.
pub fn decoupled_generator(h: &Hamiltonian) -> ComplexMatrix {
    h.partial_trace_from_terms()
        .scale_re(1.0 / h.space().dim_s() as f64)
}
