//! Pulse shapes, unitary pulse paths `γ(s)` from `1` to a target, their
//! generators `A(s) = i γ'(s) γ(s)*`, and relative-width scaling.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, c, exp_hermitian, unitary_eigenphases, ComplexMatrix};
use crate::quadrature;

/// Tolerance for endpoint and normalisation checks.
pub const PATH_TOL: f64 = 1e-10;

/// Eigenphases this close to `-π` are placed at `+π`.
pub const BRANCH_TIE_TOL: f64 = 1e-9;

/// Normalised pulse profile `φ` supported on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseShape {
    /// `φ ≡ 1`
    Rectangular,
    /// `φ(s) = 4 min(s, 1 - s)`
    Triangular,
    /// `φ(s) = 1 - cos(2πs)`
    RaisedCosine,
    /// Piecewise-linear interpolation of samples on a uniform grid over `[0, 1]`.
    Custom(Vec<f64>),
}

impl PulseShape {
    pub fn custom(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Parameter(
                "custom pulse shape needs at least two samples".into(),
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(
                "custom pulse shape has non-finite samples".into(),
            ));
        }
        let shape = PulseShape::Custom(samples);
        let area = shape.integral_by_quadrature();
        if (area - 1.0).abs() > PATH_TOL {
            return Err(Error::Parameter(format!(
                "custom pulse shape integrates to {area}, expected 1"
            )));
        }
        Ok(shape)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PulseShape::Rectangular => "rectangular",
            PulseShape::Triangular => "triangular",
            PulseShape::RaisedCosine => "raised_cosine",
            PulseShape::Custom(_) => "custom",
        }
    }

    /// `φ(s)`; zero outside `[0, 1]`.
    pub fn density(&self, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        match self {
            PulseShape::Rectangular => 1.0,
            PulseShape::Triangular => 4.0 * s.min(1.0 - s),
            PulseShape::RaisedCosine => 1.0 - (2.0 * PI * s).cos(),
            PulseShape::Custom(samples) => {
                let cells = samples.len() - 1;
                let x = s * cells as f64;
                let i = (x.floor() as usize).min(cells - 1);
                let u = x - i as f64;
                samples[i] * (1.0 - u) + samples[i + 1] * u
            }
        }
    }

    /// `Φ(s) = ∫_0^s φ`, clamped to `0` below and to the total area above.
    pub fn cumulative(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match self {
            PulseShape::Rectangular => s,
            PulseShape::Triangular => {
                if s <= 0.5 {
                    2.0 * s * s
                } else {
                    1.0 - 2.0 * (1.0 - s) * (1.0 - s)
                }
            }
            PulseShape::RaisedCosine => s - (2.0 * PI * s).sin() / (2.0 * PI),
            PulseShape::Custom(samples) => {
                let cells = samples.len() - 1;
                let h = 1.0 / cells as f64;
                let x = s * cells as f64;
                let i = (x.floor() as usize).min(cells - 1);
                let mut acc = 0.0;
                for j in 0..i {
                    acc += 0.5 * h * (samples[j] + samples[j + 1]);
                }
                let u = x - i as f64;
                let slope = samples[i + 1] - samples[i];
                acc + h * (samples[i] * u + 0.5 * slope * u * u)
            }
        }
    }

    /// Points in `[0, 1]` (endpoints included) between which `φ` is smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PulseShape::Rectangular | PulseShape::RaisedCosine => vec![0.0, 1.0],
            PulseShape::Triangular => vec![0.0, 0.5, 1.0],
            PulseShape::Custom(samples) => {
                let cells = samples.len() - 1;
                (0..=cells).map(|i| i as f64 / cells as f64).collect()
            }
        }
    }

    /// `sup |φ|`
    pub fn peak(&self) -> f64 {
        match self {
            PulseShape::Rectangular => 1.0,
            PulseShape::Triangular | PulseShape::RaisedCosine => 2.0,
            PulseShape::Custom(samples) => samples.iter().map(|v| v.abs()).fold(0.0, f64::max),
        }
    }

    pub fn integral_by_quadrature(&self) -> f64 {
        quadrature::integrate_scalar(|s| self.density(s), &self.breakpoints(), 16)
    }
}

/// How the path between `1` and the target is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMode {
    /// `γ(s) = exp(-i Φ(s) A)` with `e^{-iA}` the target.
    Geodesic,
    /// Sampled path, geodesic between consecutive samples.
    CustomPath,
}

#[derive(Debug, Clone)]
struct SampledPath {
    samples: Vec<ComplexMatrix>,
    /// `L_i` with `e^{-i L_i} = samples[i+1] samples[i]*`.
    segments: Vec<ComplexMatrix>,
}

/// A unitary path on the system with `γ(0) = 1` and `γ(1) = target`.
#[derive(Debug, Clone)]
pub struct PulsePath {
    target: ComplexMatrix,
    generator: ComplexMatrix,
    shape: PulseShape,
    sampled: Option<SampledPath>,
}

/// Principal Hermitian logarithm: `A` with `e^{-iA} = γ` and spectrum in `[-π, π)`.
///
/// Eigenphases of `γ` lie in `(-π, π]`; a phase at the cut is placed at `+π`,
/// i.e. `A` gets eigenvalue `-π` there. A degenerate `-1` eigenvalue is logged
/// as a branch warning.
pub fn generator_from_target(gamma: &ComplexMatrix) -> Result<ComplexMatrix> {
    gamma.require_unitary(PATH_TOL, "pulse target")?;
    let (phases, q, degenerate_tie) = unitary_eigenphases(gamma, BRANCH_TIE_TOL)?;
    if degenerate_tie {
        log::warn!(
            "pulse target has a degenerate eigenvalue -1; placing every copy at eigenphase +pi"
        );
    }
    let d: Vec<_> = phases.iter().map(|theta| c(-theta, 0.0)).collect();
    let a = (&q * &ComplexMatrix::diag(&d) * q.adjoint()).hermitian_part();
    let back = exp_hermitian(&a, 1.0)?;
    let err = (&back - gamma).max_abs();
    if err > PATH_TOL {
        return Err(Error::Convergence {
            what: "matrix logarithm of pulse target".into(),
            achieved: err,
        });
    }
    Ok(a)
}

impl PulsePath {
    /// Geodesic path using the principal logarithm of `target`.
    pub fn geodesic(target: ComplexMatrix, shape: PulseShape) -> Result<Self> {
        let generator = generator_from_target(&target)?;
        Ok(Self {
            target,
            generator,
            shape,
            sampled: None,
        })
    }

    /// Geodesic path along a caller-chosen Hermitian generator with `e^{-iA} = target`.
    pub fn geodesic_with_generator(
        target: ComplexMatrix,
        generator: ComplexMatrix,
        shape: PulseShape,
    ) -> Result<Self> {
        target.require_unitary(PATH_TOL, "pulse target")?;
        generator.require_hermitian(PATH_TOL, "pulse generator")?;
        if generator.rows() != target.rows() {
            return Err(Error::Dimension(
                "pulse generator and target differ in size".into(),
            ));
        }
        let err = (&exp_hermitian(&generator, 1.0)? - &target).max_abs();
        if err > PATH_TOL {
            return Err(Error::Validation(format!(
                "exp(-iA) misses the pulse target by {err:.3e}"
            )));
        }
        Ok(Self {
            target,
            generator: generator.hermitian_part(),
            shape,
            sampled: None,
        })
    }

    /// Sampled path on a uniform grid over `[0, 1]`. The first sample must be
    /// the identity and the last the target, both to [`PATH_TOL`].
    pub fn custom_path(target: ComplexMatrix, samples: Vec<ComplexMatrix>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Parameter(
                "custom path needs at least two samples".into(),
            ));
        }
        let d = target.require_square("pulse target")?;
        target.require_unitary(PATH_TOL, "pulse target")?;
        for (i, u) in samples.iter().enumerate() {
            if u.rows() != d || u.cols() != d {
                return Err(Error::Dimension(format!(
                    "path sample {i} has the wrong size"
                )));
            }
            u.require_unitary(PATH_TOL, &format!("path sample {i}"))?;
        }
        let start_err = (&samples[0] - &ComplexMatrix::identity(d)).max_abs();
        if start_err > PATH_TOL {
            return Err(Error::Validation(format!(
                "custom path starts {start_err:.3e} away from the identity"
            )));
        }
        let end_err = (samples.last().unwrap() - &target).max_abs();
        if end_err > PATH_TOL {
            return Err(Error::Validation(format!(
                "custom path ends {end_err:.3e} away from its target"
            )));
        }
        let mut samples = samples;
        samples[0] = ComplexMatrix::identity(d);
        *samples.last_mut().unwrap() = target.clone();
        let segments = samples
            .windows(2)
            .map(|w| generator_from_target(&(&w[1] * &w[0].adjoint())))
            .collect::<Result<Vec<_>>>()?;
        let generator = generator_from_target(&target)?;
        Ok(Self {
            target,
            generator,
            shape: PulseShape::Rectangular,
            sampled: Some(SampledPath { samples, segments }),
        })
    }

    /// The trivial pulse: constant identity path.
    pub fn identity(d: usize) -> Self {
        Self {
            target: ComplexMatrix::identity(d),
            generator: ComplexMatrix::zeros(d, d),
            shape: PulseShape::Rectangular,
            sampled: None,
        }
    }

    pub fn mode(&self) -> PathMode {
        if self.sampled.is_some() {
            PathMode::CustomPath
        } else {
            PathMode::Geodesic
        }
    }

    pub fn target(&self) -> &ComplexMatrix {
        &self.target
    }

    /// `A` with `e^{-iA}` the target.
    pub fn generator(&self) -> &ComplexMatrix {
        &self.generator
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.target.rows()
    }

    pub fn is_rectangular_geodesic(&self) -> bool {
        self.sampled.is_none() && self.shape == PulseShape::Rectangular
    }

    /// Sampled-path segments as `(start, end, L)` with constant generator `L / (end - start)`.
    pub fn segments(&self) -> Option<Vec<(f64, f64, &ComplexMatrix)>> {
        self.sampled.as_ref().map(|sp| {
            let cells = sp.segments.len();
            sp.segments
                .iter()
                .enumerate()
                .map(|(i, l)| (i as f64 / cells as f64, (i + 1) as f64 / cells as f64, l))
                .collect()
        })
    }

    /// Points in `[0, 1]` between which `A(s)` is smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.sampled {
            Some(sp) => {
                let cells = sp.segments.len();
                (0..=cells).map(|i| i as f64 / cells as f64).collect()
            }
            None => self.shape.breakpoints(),
        }
    }

    fn check_s(s: f64) -> Result<()> {
        if (0.0..=1.0).contains(&s) {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "path parameter {s} outside [0, 1]"
            )))
        }
    }

    fn segment_index(&self, s: f64) -> (usize, f64) {
        let cells = self.sampled.as_ref().map_or(1, |sp| sp.segments.len());
        let x = s * cells as f64;
        let i = (x.floor() as usize).min(cells - 1);
        (i, x - i as f64)
    }

    /// `γ(s)`
    pub fn at(&self, s: f64) -> Result<ComplexMatrix> {
        Self::check_s(s)?;
        if s == 0.0 {
            return Ok(ComplexMatrix::identity(self.dim()));
        }
        if s == 1.0 {
            return Ok(self.target.clone());
        }
        match &self.sampled {
            None => exp_hermitian(&self.generator, self.shape.cumulative(s)),
            Some(sp) => {
                let (i, u) = self.segment_index(s);
                Ok(exp_hermitian(&sp.segments[i], u)? * &sp.samples[i])
            }
        }
    }

    /// `A(s) = i γ'(s) γ(s)*`
    pub fn generator_at(&self, s: f64) -> Result<ComplexMatrix> {
        Self::check_s(s)?;
        match &self.sampled {
            None => Ok(self.generator.scale_re(self.shape.density(s))),
            Some(sp) => {
                let (i, _) = self.segment_index(s);
                Ok(sp.segments[i].scale_re(sp.segments.len() as f64))
            }
        }
    }

    /// Upper bound on `sup_s ‖A(s)‖`.
    pub fn generator_norm_bound(&self) -> f64 {
        match &self.sampled {
            None => self.shape.peak() * linalg::opnorm(&self.generator),
            Some(sp) => {
                let cells = sp.segments.len() as f64;
                sp.segments
                    .iter()
                    .map(|l| linalg::opnorm(l) * cells)
                    .fold(0.0, f64::max)
            }
        }
    }

    /// The same path multiplied by a scalar phase running from 1 to `e^{iθ}`.
    ///
    /// The generator shifts by `-θ·1`, which commutes with everything, so
    /// conjugation averages along the path are unchanged.
    pub fn with_phase_offset(&self, theta: f64) -> Self {
        let d = self.dim();
        let shift = ComplexMatrix::identity(d).scale_re(theta);
        let target = self.target.scale(c(0.0, theta).exp());
        let generator = &self.generator - &shift;
        let sampled = self.sampled.as_ref().map(|sp| {
            let cells = sp.segments.len();
            let samples = sp
                .samples
                .iter()
                .enumerate()
                .map(|(i, u)| u.scale(c(0.0, theta * i as f64 / cells as f64).exp()))
                .collect();
            let seg_shift = shift.scale_re(1.0 / cells as f64);
            let segments = sp.segments.iter().map(|l| l - &seg_shift).collect();
            SampledPath { samples, segments }
        });
        let mut sampled = sampled;
        if let Some(sp) = sampled.as_mut() {
            *sp.samples.last_mut().unwrap() = target.clone();
        }
        Self {
            target,
            generator,
            shape: self.shape.clone(),
            sampled,
        }
    }
}

/// `γ(s)` for a pulse path.
pub fn path_at(p: &PulsePath, s: f64) -> Result<ComplexMatrix> {
    p.at(s)
}

/// A pulse compressed into the window `[0, λ]` with unchanged total action.
#[derive(Debug, Clone)]
pub struct ScaledPulse {
    base: PulsePath,
    lambda: f64,
}

impl ScaledPulse {
    pub fn new(base: PulsePath, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Parameter(format!(
                "relative pulse width {lambda} outside (0, 1]"
            )));
        }
        Ok(Self { base, lambda })
    }

    pub fn base(&self) -> &PulsePath {
        &self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `A^{(λ)}(s) = A(s/λ)/λ` on `[0, λ]`, zero on `(λ, 1]`.
    pub fn generator_at(&self, s: f64) -> Result<ComplexMatrix> {
        PulsePath::check_s(s)?;
        if s > self.lambda {
            let d = self.base.dim();
            return Ok(ComplexMatrix::zeros(d, d));
        }
        let inner = (s / self.lambda).min(1.0);
        Ok(self.base.generator_at(inner)?.scale_re(1.0 / self.lambda))
    }

    /// `γ_λ(s) = γ(s/λ)` (constant at the target after the window).
    pub fn path_at(&self, s: f64) -> Result<ComplexMatrix> {
        PulsePath::check_s(s)?;
        self.base.at((s / self.lambda).min(1.0))
    }
}

/// `A^{(λ)}(s)` for a scaled pulse.
pub fn scaled_generator_at(p: &ScaledPulse, s: f64) -> Result<ComplexMatrix> {
    p.generator_at(s)
}
