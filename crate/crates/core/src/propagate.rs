//! Time-ordered propagation of the pulsed Schrödinger equation.
//!
//! Convention: later times act on the left, so a cycle evolves as
//! `F(t) = u_N ⋯ u_2 u_1` and each step as `u_k = e^{-i(1-λ)τH} · W_k`,
//! where `W_k` covers the pulse window `[0, λτ]`.

use crate::error::{Error, Result};
use crate::linalg::{self, c, exp_hermitian, polar_unitary, ComplexMatrix, C64};
use crate::model::{Cycle, Hamiltonian, SpaceSpec};
use crate::pulses::{PulsePath, ScaledPulse, PATH_TOL};

/// Richardson-verified tolerance for a single pulse window.
pub const STEP_TOL: f64 = 1e-9;

/// Largest number of midpoint substeps spent on one pulse window.
pub const SUBSTEP_CAP: usize = 1 << 20;

/// Substep length times generator norm.
const SUBSTEP_SCALE: f64 = 0.1;

/// Products between re-unitarisations in [`unitary_power`].
pub const REUNITARIZE_EVERY: u64 = 64;

/// Unitary for one step together with integrator diagnostics.
#[derive(Debug, Clone)]
pub struct PropagatorResult {
    pub unitary: ComplexMatrix,
    pub substep_count: usize,
    pub step_error_estimate: f64,
}

/// A pulse path lifted to the composite space.
#[derive(Debug, Clone)]
struct EmbeddedPulse {
    generator: ComplexMatrix,
    segments: Option<Vec<(f64, f64, ComplexMatrix)>>,
    base: PulsePath,
    /// For smooth geodesic paths: `A = Q diag(a) Q*` with `Q` lifted to the composite space.
    spectral: Option<(ComplexMatrix, Vec<f64>)>,
}

impl EmbeddedPulse {
    fn same_motion(&self, other: &EmbeddedPulse) -> bool {
        self.generator == other.generator
            && self.segments == other.segments
            && self.base.shape() == other.base.shape()
    }

    fn new(path: &PulsePath, space: SpaceSpec) -> Result<Self> {
        let segments = path.segments().map(|segs| {
            segs.into_iter()
                .map(|(a, b, l)| (a, b, space.embed(l)))
                .collect()
        });
        let smooth = segments.is_none()
            && !path.is_rectangular_geodesic()
            && path.generator().max_abs() > 0.0;
        let spectral = if smooth {
            let (a, q) = linalg::eigh(path.generator())?;
            Some((space.embed(&q), a))
        } else {
            None
        };
        Ok(Self {
            generator: space.embed(path.generator()),
            segments,
            base: path.clone(),
            spectral,
        })
    }
}

/// One run of a cycle: the cycle, a pulse per step, the shared relative width,
/// the total time and the number of repetitions.
#[derive(Debug, Clone)]
pub struct Schedule {
    cycle: Cycle,
    pulses: Vec<ScaledPulse>,
    embedded: Vec<EmbeddedPulse>,
    lambda: f64,
    total_time: f64,
    repetitions: u64,
}

impl Schedule {
    pub fn new(
        cycle: Cycle,
        pulses: Vec<ScaledPulse>,
        total_time: f64,
        repetitions: u64,
    ) -> Result<Self> {
        if pulses.len() != cycle.len() {
            return Err(Error::Validation(format!(
                "{} pulses for a cycle of length {}",
                pulses.len(),
                cycle.len()
            )));
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::Parameter(format!(
                "total time {total_time} must be positive"
            )));
        }
        if repetitions == 0 {
            return Err(Error::Parameter("repetitions must be at least 1".into()));
        }
        let lambda = pulses[0].lambda();
        if pulses.iter().any(|p| p.lambda() != lambda) {
            return Err(Error::Validation(
                "all pulses of a schedule must share one relative width".into(),
            ));
        }
        let space = cycle.space();
        for (k, (p, gamma)) in pulses.iter().zip(cycle.pulses()).enumerate() {
            let target = p.base().target();
            if target.rows() != space.dim_s() {
                return Err(Error::Dimension(format!(
                    "pulse {k} does not act on the system"
                )));
            }
            let err = (target - gamma).max_abs();
            if err > PATH_TOL {
                return Err(Error::Validation(format!(
                    "pulse {k} ends {err:.3e} away from the cycle's γ_{}",
                    k + 1
                )));
            }
        }
        let embedded = pulses
            .iter()
            .map(|p| EmbeddedPulse::new(p.base(), space))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cycle,
            pulses,
            embedded,
            lambda,
            total_time,
            repetitions,
        })
    }

    /// Convenience constructor from unscaled paths and one relative width.
    pub fn from_paths(
        cycle: Cycle,
        paths: Vec<PulsePath>,
        lambda: f64,
        total_time: f64,
        repetitions: u64,
    ) -> Result<Self> {
        let pulses = paths
            .into_iter()
            .map(|p| ScaledPulse::new(p, lambda))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cycle, pulses, total_time, repetitions)
    }

    pub fn cycle(&self) -> &Cycle {
        &self.cycle
    }

    pub fn pulses(&self) -> &[ScaledPulse] {
        &self.pulses
    }

    pub fn paths(&self) -> Vec<PulsePath> {
        self.pulses.iter().map(|p| p.base().clone()).collect()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn repetitions(&self) -> u64 {
        self.repetitions
    }

    /// Same cycle and pulses with different time, repetitions or width.
    pub fn with_run(&self, total_time: f64, repetitions: u64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Parameter(format!(
                "relative pulse width {lambda} outside (0, 1]"
            )));
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::Parameter(format!(
                "total time {total_time} must be positive"
            )));
        }
        if repetitions == 0 {
            return Err(Error::Parameter("repetitions must be at least 1".into()));
        }
        let pulses = self
            .pulses
            .iter()
            .map(|p| ScaledPulse::new(p.base().clone(), lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cycle: self.cycle.clone(),
            pulses,
            embedded: self.embedded.clone(),
            lambda,
            total_time,
            repetitions,
        })
    }
}

fn check_space(h: &Hamiltonian, space: SpaceSpec) -> Result<()> {
    if h.space() != space {
        return Err(Error::Dimension(format!(
            "hamiltonian space {}x{} differs from cycle space {}x{}",
            h.space().dim_s(),
            h.space().dim_e(),
            space.dim_s(),
            space.dim_e()
        )));
    }
    Ok(())
}

/// `T-exp(-i ∫_{sa}^{sb} [A(s) + α H] ds)` over a piece of the unit pulse window,
/// with `α = λτ`.
fn window_unitary(
    h: &ComplexMatrix,
    h_norm: f64,
    pulse: &EmbeddedPulse,
    alpha: f64,
    sa: f64,
    sb: f64,
) -> Result<PropagatorResult> {
    let n = h.rows();
    if sb <= sa {
        return Ok(PropagatorResult {
            unitary: ComplexMatrix::identity(n),
            substep_count: 0,
            step_error_estimate: 0.0,
        });
    }
    let scaled_h = h.scale_re(alpha);

    if let Some(segments) = &pulse.segments {
        // Piecewise-constant generator: exact exponentials per segment.
        let mut u = ComplexMatrix::identity(n);
        let mut count = 0;
        for (a, b, l) in segments {
            let lo = a.max(sa);
            let hi = b.min(sb);
            if hi <= lo {
                continue;
            }
            let frac = (hi - lo) / (b - a);
            let g = &l.scale_re(frac) + &scaled_h.scale_re(hi - lo);
            u = exp_hermitian(&g, 1.0)? * &u;
            count += 1;
        }
        return Ok(PropagatorResult {
            unitary: u,
            substep_count: count,
            step_error_estimate: 0.0,
        });
    }

    let Some((qe, eig)) = &pulse.spectral else {
        // Rectangular or zero generator: constant over the window.
        let shape = pulse.base.shape();
        let rise = shape.cumulative(sb) - shape.cumulative(sa);
        let g = &pulse.generator.scale_re(rise) + &scaled_h.scale_re(sb - sa);
        return Ok(PropagatorResult {
            unitary: exp_hermitian(&g, 1.0)?,
            substep_count: 1,
            step_error_estimate: 0.0,
        });
    };

    // Pulse interaction picture: W = γ(sb) Ũ γ(sa)*, where Ũ is generated by
    // α γ(s)* H γ(s). In the eigenbasis of A its (i, j) system block is
    // α H_ij e^{iΦ(s)(a_i - a_j)}. Each substep exponentiates the exact first
    // Magnus term plus the two-node commutator correction (fourth order,
    // symmetric), so Richardson removes the h^4 term.
    let shape = pulse.base.shape().clone();
    let ds_dim = eig.len();
    let de = n / ds_dim;
    let hq = scaled_h.conjugate_by(&qe.adjoint());
    let spread = eig.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
        - eig.iter().fold(f64::INFINITY, |m, &x| m.min(x));

    let mut pieces: Vec<f64> = vec![sa];
    pieces.extend(
        shape
            .breakpoints()
            .into_iter()
            .filter(|b| *b > sa && *b < sb),
    );
    pieces.push(sb);
    let rate = alpha * h_norm / SUBSTEP_SCALE + 0.5 * spread * shape.peak();
    let mut base: Vec<usize> = pieces
        .windows(2)
        .map(|w| (((w[1] - w[0]) * rate).ceil() as usize).max(1))
        .collect();

    let (gl_x, gl_w) = crate::quadrature::gauss_legendre(8);
    let phase_integral = |omega: f64, s0: f64, s1: f64| -> C64 {
        let half = 0.5 * (s1 - s0);
        let mid = 0.5 * (s0 + s1);
        gl_x.iter()
            .zip(&gl_w)
            .map(|(x, w)| c(0.0, omega * shape.cumulative(mid + half * x)).exp() * (w * half))
            .sum()
    };

    let rotated = |s: f64| -> ComplexMatrix {
        let phi = shape.cumulative(s);
        let mut m = hq.clone();
        for r in 0..n {
            for col in 0..n {
                let freq = eig[r / de] - eig[col / de];
                if freq != 0.0 {
                    m[(r, col)] *= c(0.0, phi * freq).exp();
                }
            }
        }
        m
    };
    let node = 0.5 / 3f64.sqrt();
    let evolve = |per_piece: &[usize], factor: usize| -> Result<ComplexMatrix> {
        let mut u = ComplexMatrix::identity(n);
        let mut omega = hq.clone();
        for (w, &cnt) in pieces.windows(2).zip(per_piece) {
            let steps = cnt * factor;
            let ds = (w[1] - w[0]) / steps as f64;
            for j in 0..steps {
                let s0 = w[0] + j as f64 * ds;
                let s1 = if j + 1 == steps { w[1] } else { s0 + ds };
                let len = s1 - s0;
                let mut weights = vec![c(len, 0.0); ds_dim * ds_dim];
                for a in 0..ds_dim {
                    for b in 0..ds_dim {
                        let freq = eig[a] - eig[b];
                        if freq != 0.0 {
                            weights[a * ds_dim + b] = phase_integral(freq, s0, s1);
                        }
                    }
                }
                for r in 0..n {
                    for col in 0..n {
                        omega[(r, col)] = hq[(r, col)] * weights[(r / de) * ds_dim + col / de];
                    }
                }
                // Fourth-order commutator term from the two Gauss nodes.
                let mid = 0.5 * (s0 + s1);
                let early = rotated(mid - node * len);
                let late = rotated(mid + node * len);
                let comm = &(&late * &early) - &(&early * &late);
                let k = &omega + &comm.scale(c(0.0, -len * len * 3f64.sqrt() / 12.0));
                u = exp_hermitian(&k, 1.0)? * &u;
            }
        }
        Ok(u)
    };

    let frame = |s: f64, sign: f64| -> ComplexMatrix {
        let phi = shape.cumulative(s);
        let d: Vec<C64> = (0..n)
            .map(|r| c(0.0, sign * phi * eig[r / de]).exp())
            .collect();
        ComplexMatrix::diag(&d)
    };
    let lab = |u: &ComplexMatrix| -> ComplexMatrix {
        let inner = frame(sb, -1.0) * u * &frame(sa, 1.0);
        inner.conjugate_by(qe)
    };

    let richardson = |coarse: &ComplexMatrix, fine: &ComplexMatrix| -> ComplexMatrix {
        (&fine.scale_re(16.0) - coarse).scale_re(1.0 / 15.0)
    };

    let mut u1 = evolve(&base, 1)?;
    let mut u2 = evolve(&base, 2)?;
    loop {
        let total: usize = base.iter().sum::<usize>() * 4;
        if total > SUBSTEP_CAP {
            return Err(Error::Convergence {
                what: "pulse window integration".into(),
                achieved: f64::NAN,
            });
        }
        let u4 = evolve(&base, 4)?;
        let r1 = richardson(&u1, &u2);
        let r2 = richardson(&u2, &u4);
        let change = linalg::opnorm(&(&r2 - &r1));
        if change < STEP_TOL {
            return Ok(PropagatorResult {
                unitary: lab(&polar_unitary(&r2)?),
                substep_count: total,
                step_error_estimate: change,
            });
        }
        if total * 2 > SUBSTEP_CAP {
            return Err(Error::Convergence {
                what: "pulse window integration".into(),
                achieved: change,
            });
        }
        base.iter_mut().for_each(|b| *b *= 2);
        u1 = u2;
        u2 = u4;
    }
}

/// Propagator `u(r1, r0)` of one pulsed step of length `tau` restricted to `[r0, r1] ⊆ [0, tau]`.
fn step_segment(
    h: &ComplexMatrix,
    h_norm: f64,
    pulse: &EmbeddedPulse,
    lambda: f64,
    tau: f64,
    r0: f64,
    r1: f64,
) -> Result<PropagatorResult> {
    let window = lambda * tau;
    let mut result = window_unitary(
        h,
        h_norm,
        pulse,
        window,
        (r0 / window).min(1.0),
        (r1 / window).min(1.0),
    )?;
    let drift_len = r1 - r0.max(window);
    if drift_len > 0.0 {
        result.unitary = exp_hermitian(h, drift_len)? * &result.unitary;
    }
    Ok(result)
}

/// `u_k(τ, λ; τ)`: one step of length `tau` with the pulse in its first `λτ`.
pub fn pulse_step(h: &Hamiltonian, pulse: &ScaledPulse, tau: f64) -> Result<PropagatorResult> {
    pulse_step_segment(h, pulse, tau, 0.0, tau)
}

/// Propagator from `r0` to `r1` within one step of length `tau`.
pub fn pulse_step_segment(
    h: &Hamiltonian,
    pulse: &ScaledPulse,
    tau: f64,
    r0: f64,
    r1: f64,
) -> Result<PropagatorResult> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Parameter(format!(
            "step length {tau} must be positive"
        )));
    }
    if !(0.0 <= r0 && r0 <= r1 && r1 <= tau) {
        return Err(Error::Parameter(format!(
            "segment [{r0}, {r1}] outside [0, {tau}]"
        )));
    }
    if pulse.base().dim() != h.space().dim_s() {
        return Err(Error::Dimension(
            "pulse does not act on the hamiltonian's system".into(),
        ));
    }
    let embedded = EmbeddedPulse::new(pulse.base(), h.space())?;
    step_segment(h.full(), h.norm(), &embedded, pulse.lambda(), tau, r0, r1)
}

fn cycle_unitary(h: &Hamiltonian, schedule: &Schedule, cycle_time: f64) -> Result<ComplexMatrix> {
    check_space(h, schedule.cycle.space())?;
    let tau = cycle_time / schedule.cycle.len() as f64;
    let h_norm = h.norm();
    let mut f = ComplexMatrix::identity(h.space().full_dim());
    let mut seen: Vec<(&EmbeddedPulse, ComplexMatrix)> = Vec::new();
    for pulse in &schedule.embedded {
        let u = match seen.iter().find(|(p, _)| p.same_motion(pulse)) {
            Some((_, u)) => u.clone(),
            None => {
                let u =
                    step_segment(h.full(), h_norm, pulse, schedule.lambda, tau, 0.0, tau)?.unitary;
                seen.push((pulse, u.clone()));
                u
            }
        };
        f = u * &f;
    }
    Ok(f)
}

/// `F_λ(t) = u_N ⋯ u_1` over the schedule's total time, ignoring repetitions.
pub fn cycle_evolution(h: &Hamiltonian, schedule: &Schedule) -> Result<ComplexMatrix> {
    cycle_unitary(h, schedule, schedule.total_time)
}

/// `F_λ(t/m)^m`
pub fn repeated_evolution(h: &Hamiltonian, schedule: &Schedule) -> Result<ComplexMatrix> {
    let m = schedule.repetitions;
    let f = cycle_unitary(h, schedule, schedule.total_time / m as f64)?;
    unitary_power(&f, m)
}

/// `(e^{-iτH} γ_N ⋯ e^{-iτH} γ_1)^m` with `τ = t/(mN)`.
pub fn bangbang_evolution(h: &Hamiltonian, cycle: &Cycle, t: f64, m: u64) -> Result<ComplexMatrix> {
    check_space(h, cycle.space())?;
    if m == 0 {
        return Err(Error::Parameter("repetitions must be at least 1".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Parameter(format!("total time {t} must be positive")));
    }
    let space = cycle.space();
    let tau = t / (m as f64 * cycle.len() as f64);
    let drift = exp_hermitian(h.full(), tau)?;
    let mut f = ComplexMatrix::identity(space.full_dim());
    for gamma in cycle.pulses() {
        f = &drift * &(space.embed(gamma) * &f);
    }
    unitary_power(&f, m)
}

/// `U^m` by repeated squaring, re-projected onto the unitary group once every
/// [`REUNITARIZE_EVERY`] accumulated products.
pub fn unitary_power(u: &ComplexMatrix, m: u64) -> Result<ComplexMatrix> {
    if m == 0 {
        return Ok(ComplexMatrix::identity(u.rows()));
    }
    let mut result: Option<ComplexMatrix> = None;
    let mut base = u.clone();
    let mut exp = m;
    let mut base_power: u64 = 1;
    while exp > 0 {
        if exp & 1 == 1 {
            result = Some(match result {
                Some(r) => &base * &r,
                None => base.clone(),
            });
        }
        exp >>= 1;
        if exp > 0 {
            base = &base * &base;
            base_power *= 2;
            if base_power.is_multiple_of(REUNITARIZE_EVERY) {
                base = polar_unitary(&base)?;
            }
        }
    }
    let result = result.expect("m > 0");
    if m >= REUNITARIZE_EVERY {
        polar_unitary(&result)
    } else {
        Ok(result)
    }
}
