//! Error bounds, decoupling measures and convergence sweeps over `(m, λ)`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::averages::{compute_hlambda, decoupled_generator, AveragedHamiltonians};
use crate::error::{Error, Result};
use crate::linalg::{
    dist, exp_hermitian, kron, opnorm, partial_trace_system, polar_unitary, ComplexMatrix,
};
use crate::model::{Hamiltonian, SpaceSpec, DECOUPLING_TOL};
use crate::propagate::{bangbang_evolution, repeated_evolution, Schedule};

/// Slack added to every bound comparison.
pub const BOUND_SLACK: f64 = 1e-8;

/// Allowed deviation of a fitted `λ` slope from 1 and of an `m` slope from -1.
pub const SLOPE_TOL: f64 = 0.2;

/// Value reported when the environment block of `U` is too singular to project.
pub const SATURATED_ERROR: f64 = 2.0;

fn check_run(t: f64, m: u64) -> Result<()> {
    if m == 0 {
        return Err(Error::Parameter("repetitions must be at least 1".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Parameter(format!("total time {t} must be positive")));
    }
    Ok(())
}

/// `(2t/m)‖H‖(1 + 2t‖H‖)`
pub fn bound_rate1(h: &Hamiltonian, t: f64, m: u64) -> Result<f64> {
    check_run(t, m)?;
    let n = h.norm();
    Ok(2.0 * t / m as f64 * n * (1.0 + 2.0 * t * n))
}

/// `bound_rate1 + λ t ‖H1 − H0‖`
pub fn bound_rate2(
    h: &Hamiltonian,
    t: f64,
    m: u64,
    lambda: f64,
    h0: &ComplexMatrix,
    h1: &ComplexMatrix,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!(
            "relative pulse width {lambda} outside [0, 1]"
        )));
    }
    Ok(bound_rate1(h, t, m)? + lambda * t * opnorm(&(h1 - h0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecouplingError {
    pub value: f64,
    /// `tr_s(U)/d` was too close to singular to define a nearest `1 ⊗ W`.
    pub saturated: bool,
}

/// `‖U − 1⊗W‖` with `W` the polar factor of `tr_s(U)/d`.
pub fn decoupling_error(u: &ComplexMatrix, space: SpaceSpec) -> Result<DecouplingError> {
    if u.rows() != space.full_dim() || !u.is_square() {
        return Err(Error::Dimension(format!(
            "{}x{} operator on a space of dimension {}",
            u.rows(),
            u.cols(),
            space.full_dim()
        )));
    }
    let block =
        partial_trace_system(u, space.dim_s(), space.dim_e())?.scale_re(1.0 / space.dim_s() as f64);
    match polar_unitary(&block) {
        Ok(w) => {
            let lifted = kron(&ComplexMatrix::identity(space.dim_s()), &w);
            Ok(DecouplingError {
                value: opnorm(&(u - &lifted)),
                saturated: false,
            })
        }
        Err(Error::RankDeficient { .. }) => Ok(DecouplingError {
            value: SATURATED_ERROR,
            saturated: true,
        }),
        Err(e) => Err(e),
    }
}

/// Whether `x` has the decoupled form `1 ⊗ tr_s(x)/d`.
pub fn is_decoupled_generator(x: &ComplexMatrix, space: SpaceSpec) -> Result<bool> {
    let b =
        partial_trace_system(x, space.dim_s(), space.dim_e())?.scale_re(1.0 / space.dim_s() as f64);
    let lifted = kron(&ComplexMatrix::identity(space.dim_s()), &b);
    Ok(opnorm(&(x - &lifted)) <= DECOUPLING_TOL * x.max_abs().max(1.0))
}

/// A piecewise-constant Hamiltonian: consecutive `(duration, H)` pieces.
pub type PiecewiseHamiltonian = [(f64, ComplexMatrix)];

/// Both sides of the ring inequality for one pair of piecewise-constant Hamiltonians.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RingCheck {
    /// Sampled `sup_t ‖U_a(t) − U_b(t)‖`.
    pub propagator_gap: f64,
    /// `sup_t ‖∫₀ᵗ (H_a − H_b)‖`, exact.
    pub integrated_gap: f64,
    pub action_a: f64,
    pub action_b: f64,
    pub bound: f64,
}

impl RingCheck {
    pub fn holds(&self) -> bool {
        self.propagator_gap <= self.bound + BOUND_SLACK
    }
}

/// Checks `sup ‖U_a − U_b‖ ≤ sup ‖S_ab‖ (1 + ‖H_a‖₁ + ‖H_b‖₁)` on a common interval.
///
/// `S_ab` is piecewise linear, so its norm peaks at a breakpoint; propagators are
/// sampled at the breakpoints and `samples` interior points per piece.
pub fn ring_bound(
    a: &PiecewiseHamiltonian,
    b: &PiecewiseHamiltonian,
    samples: usize,
) -> Result<RingCheck> {
    let total = |p: &PiecewiseHamiltonian| p.iter().map(|(d, _)| *d).sum::<f64>();
    let n = a
        .first()
        .or(b.first())
        .map(|(_, h)| h.rows())
        .ok_or_else(|| Error::Parameter("empty piecewise hamiltonian".into()))?;
    for (d, h) in a.iter().chain(b) {
        if !(d.is_finite() && *d >= 0.0) {
            return Err(Error::Parameter(format!(
                "piece duration {d} must be non-negative"
            )));
        }
        if h.rows() != n || !h.is_square() {
            return Err(Error::Dimension("pieces of different dimension".into()));
        }
        h.require_hermitian(1e-12 * h.max_abs().max(1.0), "piece hamiltonian")?;
    }
    let (ta, tb) = (total(a), total(b));
    if (ta - tb).abs() > 1e-12 * ta.max(1.0) {
        return Err(Error::Parameter(format!("intervals differ: {ta} vs {tb}")));
    }

    let mut cuts: Vec<f64> = Vec::new();
    for p in [a, b] {
        let mut acc = 0.0;
        for (d, _) in p {
            acc += d;
            cuts.push(acc);
        }
    }
    cuts.push(0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);

    let piece_at = |p: &PiecewiseHamiltonian, t: f64| -> usize {
        let mut acc = 0.0;
        for (i, (d, _)) in p.iter().enumerate() {
            acc += d;
            if t < acc {
                return i;
            }
        }
        p.len() - 1
    };

    let mut ua = ComplexMatrix::identity(n);
    let mut ub = ComplexMatrix::identity(n);
    let mut s = ComplexMatrix::zeros(n, n);
    let mut prop_gap: f64 = 0.0;
    let mut int_gap: f64 = 0.0;
    for w in cuts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let len = t1 - t0;
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (t0 + t1);
        let ha = &a[piece_at(a, mid)].1;
        let hb = &b[piece_at(b, mid)].1;
        for j in 1..=samples {
            let dt = len * j as f64 / (samples + 1) as f64;
            let va = exp_hermitian(ha, dt)? * &ua;
            let vb = exp_hermitian(hb, dt)? * &ub;
            prop_gap = prop_gap.max(dist(&va, &vb));
        }
        ua = exp_hermitian(ha, len)? * &ua;
        ub = exp_hermitian(hb, len)? * &ub;
        prop_gap = prop_gap.max(dist(&ua, &ub));
        s += &(ha - hb).scale_re(len);
        int_gap = int_gap.max(opnorm(&s));
    }
    let action = |p: &PiecewiseHamiltonian| p.iter().map(|(d, h)| d * opnorm(h)).sum::<f64>();
    let (action_a, action_b) = (action(a), action(b));
    Ok(RingCheck {
        propagator_gap: prop_gap,
        integrated_gap: int_gap,
        action_a,
        action_b,
        bound: int_gap * (1.0 + action_a + action_b),
    })
}

/// Least-squares slope of `ln y` against `ln x`; non-positive values are skipped.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Indices of the asymptotic half of a grid: the larger half when `towards_large`.
fn asymptotic_half(values: &[f64], towards_large: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    if towards_large {
        idx.reverse();
    }
    let keep = values.len().div_ceil(2).max(2.min(values.len()));
    idx.truncate(keep);
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub m: u64,
    pub lambda: f64,
    pub dist_hlambda: f64,
    pub dist_h0: f64,
    pub dist_bb: f64,
    pub bound1: f64,
    pub bound2: f64,
    pub dd_error: f64,
    pub dd_saturated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct FittedRates {
    /// `dist_Hλ` against `m` at the largest `λ`.
    pub slope_m: Option<f64>,
    /// `dist_bb` against `λ > 0` at the largest `m`.
    pub slope_lambda: Option<f64>,
    /// `dd_error` against `m` at the largest `λ`.
    pub slope_dd: Option<f64>,
}

/// `None` marks a flag that does not apply to the sampled grid.
#[derive(Debug, Clone, Serialize)]
pub struct PassFlags {
    pub bound1: bool,
    pub bound2: bool,
    pub lambda_rate: Option<bool>,
    pub decoupling: Option<bool>,
    pub trend: Option<bool>,
}

impl PassFlags {
    pub fn bounds_hold(&self) -> bool {
        self.bound1 && self.bound2
    }

    pub fn all_hold(&self) -> bool {
        self.bounds_hold()
            && ![self.lambda_rate, self.decoupling, self.trend].contains(&Some(false))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub t: f64,
    pub points: Vec<GridPoint>,
    pub h0: ComplexMatrix,
    pub h1: ComplexMatrix,
    pub b: ComplexMatrix,
    pub gap: f64,
    pub quadrature_nodes: usize,
    /// Per `λ` in the grid: whether `Hλ` has the decoupled form.
    pub predicted_decoupling: Vec<(f64, bool)>,
    pub fitted_rates: FittedRates,
    pub pass_flags: PassFlags,
}

impl ConvergenceReport {
    pub fn has_point_errors(&self) -> bool {
        self.points.iter().any(|p| p.error.is_some())
    }

    pub fn column(&self, lambda: f64) -> Vec<&GridPoint> {
        self.points.iter().filter(|p| p.lambda == lambda).collect()
    }

    /// The predicted `m → ∞` evolution `e^{-itHλ}` at the largest grid `λ`.
    pub fn predicted_limit(&self) -> Result<ComplexMatrix> {
        let lambda = self.points.iter().map(|p| p.lambda).fold(0.0, f64::max);
        exp_hermitian(&compute_hlambda(&self.h0, &self.h1, lambda)?, self.t)
    }
}

fn check_grids(m_grid: &[u64], lambda_grid: &[f64]) -> Result<()> {
    if m_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::Parameter("sweep grids must be nonempty".into()));
    }
    if m_grid.contains(&0) {
        return Err(Error::Parameter("repetitions must be at least 1".into()));
    }
    if !m_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Parameter(
            "m grid must be strictly increasing".into(),
        ));
    }
    if let Some(l) = lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Parameter(format!(
            "relative pulse width {l} outside [0, 1]"
        )));
    }
    if !lambda_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Parameter(
            "λ grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Evaluates every `(m, λ)` grid point of `template` (its own `λ`, `m` are ignored)
/// at the template's total time. `λ = 0` stands for the bangbang evolution.
pub fn sweep(
    h: &Hamiltonian,
    template: &Schedule,
    m_grid: &[u64],
    lambda_grid: &[f64],
) -> Result<ConvergenceReport> {
    check_grids(m_grid, lambda_grid)?;
    let t = template.total_time();
    let space = h.space();
    let cycle = template.cycle();
    let paths = template.paths();
    let averages = AveragedHamiltonians::new(h, cycle, &paths, 1.0)?;
    let (h0, h1) = (&averages.h0, &averages.h1);
    let limit_h0 = exp_hermitian(h0, t)?;
    let limits: Vec<ComplexMatrix> = lambda_grid
        .iter()
        .map(|&l| exp_hermitian(&compute_hlambda(h0, h1, l)?, t))
        .collect::<Result<_>>()?;
    let bangbang: Vec<Result<ComplexMatrix>> = m_grid
        .par_iter()
        .map(|&m| bangbang_evolution(h, cycle, t, m))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..lambda_grid.len())
        .flat_map(|li| (0..m_grid.len()).map(move |mi| (li, mi)))
        .collect();
    let points: Vec<GridPoint> = jobs
        .par_iter()
        .map(|&(li, mi)| {
            let (m, lambda) = (m_grid[mi], lambda_grid[li]);
            let blank = |e: String| GridPoint {
                m,
                lambda,
                dist_hlambda: f64::NAN,
                dist_h0: f64::NAN,
                dist_bb: f64::NAN,
                bound1: f64::NAN,
                bound2: f64::NAN,
                dd_error: f64::NAN,
                dd_saturated: false,
                error: Some(e),
            };
            let eval = || -> Result<GridPoint> {
                let bb = bangbang[mi]
                    .as_ref()
                    .map_err(|e| Error::Parameter(e.to_string()))?;
                let u = if lambda == 0.0 {
                    bb.clone()
                } else {
                    repeated_evolution(h, &template.with_run(t, m, lambda)?)?
                };
                let dd = decoupling_error(&u, space)?;
                Ok(GridPoint {
                    m,
                    lambda,
                    dist_hlambda: dist(&u, &limits[li]),
                    dist_h0: dist(&u, &limit_h0),
                    dist_bb: dist(&u, bb),
                    bound1: bound_rate1(h, t, m)?,
                    bound2: bound_rate2(h, t, m, lambda, h0, h1)?,
                    dd_error: dd.value,
                    dd_saturated: dd.saturated,
                    error: None,
                })
            };
            eval().unwrap_or_else(|e| blank(e.to_string()))
        })
        .collect();

    let predicted_decoupling: Vec<(f64, bool)> = lambda_grid
        .iter()
        .map(|&l| {
            Ok((
                l,
                is_decoupled_generator(&compute_hlambda(h0, h1, l)?, space)?,
            ))
        })
        .collect::<Result<_>>()?;
    let limit_dd: Vec<f64> = limits
        .iter()
        .map(|u| decoupling_error(u, space).map(|d| d.value))
        .collect::<Result<_>>()?;

    let (fitted_rates, pass_flags) = evaluate(
        &points,
        m_grid,
        lambda_grid,
        &predicted_decoupling,
        &limit_dd,
    );
    Ok(ConvergenceReport {
        t,
        points,
        h0: h0.clone(),
        h1: h1.clone(),
        b: decoupled_generator(h),
        gap: averages.gap(),
        quadrature_nodes: averages.quadrature_nodes,
        predicted_decoupling,
        fitted_rates,
        pass_flags,
    })
}

fn evaluate(
    points: &[GridPoint],
    m_grid: &[u64],
    lambda_grid: &[f64],
    predicted: &[(f64, bool)],
    limit_dd: &[f64],
) -> (FittedRates, PassFlags) {
    let ok: Vec<&GridPoint> = points.iter().filter(|p| p.error.is_none()).collect();
    let bound1 = ok.iter().all(|p| p.dist_hlambda <= p.bound1 + BOUND_SLACK);
    let bound2 = ok.iter().all(|p| p.dist_h0 <= p.bound2 + BOUND_SLACK);

    let ms: Vec<f64> = m_grid.iter().map(|&m| m as f64).collect();
    let column = |lambda: f64| -> Vec<&GridPoint> {
        ok.iter().copied().filter(|p| p.lambda == lambda).collect()
    };
    let m_fit = |col: &[&GridPoint], value: fn(&GridPoint) -> f64| -> Option<f64> {
        let xs: Vec<f64> = col.iter().map(|p| p.m as f64).collect();
        let keep = asymptotic_half(&xs, true);
        let xs: Vec<f64> = keep.iter().map(|&i| xs[i]).collect();
        let ys: Vec<f64> = keep.iter().map(|&i| value(col[i])).collect();
        fit_slope(&xs, &ys)
    };

    let lambda_max = *lambda_grid.last().expect("nonempty grid");
    let top = column(lambda_max);
    let slope_m = m_fit(&top, |p| p.dist_hlambda);
    let slope_dd = m_fit(&top, |p| p.dd_error);

    let m_max = *m_grid.last().expect("nonempty grid");
    let row: Vec<&GridPoint> = ok
        .iter()
        .copied()
        .filter(|p| p.m == m_max && p.lambda > 0.0)
        .collect();
    let slope_lambda = if row.len() >= 2 && row.iter().any(|p| p.dist_bb > 1e-12) {
        let ls: Vec<f64> = row.iter().map(|p| p.lambda).collect();
        let keep = asymptotic_half(&ls, false);
        fit_slope(
            &keep.iter().map(|&i| ls[i]).collect::<Vec<_>>(),
            &keep.iter().map(|&i| row[i].dist_bb).collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let lambda_rate = slope_lambda.map(|s| (s - 1.0).abs() <= SLOPE_TOL);

    let mut decoupling: Option<bool> = None;
    let mut trend: Option<bool> = None;
    let spans_decade = ms.len() >= 2 && ms[ms.len() - 1] / ms[0] >= 10.0;
    for (li, &(lambda, works)) in predicted.iter().enumerate() {
        let col = column(lambda);
        let (Some(first), Some(last)) = (col.first(), col.last()) else {
            continue;
        };
        let verdict = if works {
            if last.dd_error <= 1e-8 {
                Some(true)
            } else {
                m_fit(&col, |p| p.dd_error)
                    .map(|s| s <= -1.0 + SLOPE_TOL && last.dd_error < first.dd_error)
            }
        } else {
            Some(last.dd_error >= 0.5 * limit_dd[li])
        };
        if let Some(v) = verdict {
            decoupling = Some(decoupling.unwrap_or(true) && v);
        }
        if spans_decade && col.len() >= 2 {
            let v = first.dist_hlambda <= 1e-12 || last.dist_hlambda < 0.1 * first.dist_hlambda;
            trend = Some(trend.unwrap_or(true) && v);
        }
    }

    (
        FittedRates {
            slope_m,
            slope_lambda,
            slope_dd,
        },
        PassFlags {
            bound1,
            bound2,
            lambda_rate,
            decoupling,
            trend,
        },
    )
}

/// `‖bangbang(m) − e^{-itHλ}‖`: the corner shared by taking `λ → 0` first and `m → ∞` first.
pub fn limit_swap_gap(h: &Hamiltonian, template: &Schedule, m: u64, lambda: f64) -> Result<f64> {
    let t = template.total_time();
    let paths = template.paths();
    let av = AveragedHamiltonians::new(h, template.cycle(), &paths, lambda)?;
    let bb = bangbang_evolution(h, template.cycle(), t, m)?;
    Ok(dist(&bb, &exp_hermitian(&av.hlambda, t)?))
}

pub const CSV_HEADER: &str = "m,lambda,dist_Hlambda,dist_H0,dist_bb,bound1,bound2,dd_error";

/// One row per grid point in grid order.
fn num(x: f64) -> String {
    if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn write_csv(report: &ConvergenceReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in &report.points {
        let cols = [
            p.lambda,
            p.dist_hlambda,
            p.dist_h0,
            p.dist_bb,
            p.bound1,
            p.bound2,
            p.dd_error,
        ]
        .map(num);
        writeln!(out, "{},{}", p.m, cols.join(","))?;
    }
    Ok(())
}
