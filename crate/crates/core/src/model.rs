//! System/environment split, Hamiltonians, decoupling sets and gauge-fixed cycles.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, c, embed_system, kron, opnorm, partial_trace_system, ComplexMatrix};

/// Tolerance for the averaging identity of a decoupling set.
pub const DECOUPLING_TOL: f64 = 1e-10;

/// Tolerance used when matching matrices up to a global phase.
pub const PHASE_MATCH_TOL: f64 = 1e-10;

/// Largest composite dimension accepted from scenario input.
pub const MAX_FULL_DIM: usize = 1024;

/// Dimensions of the finite system and the (truncated) environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceSpec {
    dim_s: usize,
    dim_e: usize,
}

impl SpaceSpec {
    pub fn new(dim_s: usize, dim_e: usize) -> Result<Self> {
        if dim_s < 2 {
            return Err(Error::Parameter(format!(
                "system dimension must be at least 2, got {dim_s}"
            )));
        }
        if dim_e < 1 {
            return Err(Error::Parameter(
                "environment dimension must be at least 1".into(),
            ));
        }
        match dim_s.checked_mul(dim_e) {
            Some(n) if n <= MAX_FULL_DIM => Ok(Self { dim_s, dim_e }),
            _ => Err(Error::Parameter(format!(
                "composite dimension {dim_s}x{dim_e} exceeds {MAX_FULL_DIM}"
            ))),
        }
    }

    pub fn dim_s(&self) -> usize {
        self.dim_s
    }

    pub fn dim_e(&self) -> usize {
        self.dim_e
    }

    pub fn full_dim(&self) -> usize {
        self.dim_s * self.dim_e
    }

    /// `u ⊗ 1` on the composite space.
    pub fn embed(&self, u: &ComplexMatrix) -> ComplexMatrix {
        embed_system(u, self.dim_e)
    }
}

/// A bounded Hamiltonian `H = Σ_k H_{s,k} ⊗ H_{e,k}` on `H_s ⊗ H_e`.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    space: SpaceSpec,
    terms: Vec<(ComplexMatrix, ComplexMatrix)>,
    full: ComplexMatrix,
}

impl Hamiltonian {
    pub fn new(space: SpaceSpec, terms: Vec<(ComplexMatrix, ComplexMatrix)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Validation(
                "hamiltonian needs at least one term".into(),
            ));
        }
        let n = space.full_dim();
        let mut full = ComplexMatrix::zeros(n, n);
        for (k, (hs, he)) in terms.iter().enumerate() {
            if hs.rows() != space.dim_s() || hs.cols() != space.dim_s() {
                return Err(Error::Dimension(format!(
                    "term {k}: system factor is {}x{}, expected {}x{}",
                    hs.rows(),
                    hs.cols(),
                    space.dim_s(),
                    space.dim_s()
                )));
            }
            if he.rows() != space.dim_e() || he.cols() != space.dim_e() {
                return Err(Error::Dimension(format!(
                    "term {k}: environment factor is {}x{}, expected {}x{}",
                    he.rows(),
                    he.cols(),
                    space.dim_e(),
                    space.dim_e()
                )));
            }
            full += &kron(hs, he);
        }
        let tol = linalg::DEFAULT_TOL * full.max_abs().max(1.0);
        full.require_hermitian(tol, "hamiltonian")?;
        Ok(Self { space, terms, full })
    }

    /// Wraps a full composite matrix, keeping a matrix-unit factorisation
    /// `H = Σ_{ij} E_ij ⊗ H^{ij}` with `H^{ij}` the `(i, j)` environment block.
    pub fn from_full(space: SpaceSpec, full: ComplexMatrix) -> Result<Self> {
        let n = full.require_square("hamiltonian")?;
        if n != space.full_dim() {
            return Err(Error::Dimension(format!(
                "hamiltonian is {n}x{n}, space is {}x{}",
                space.dim_s(),
                space.dim_e()
            )));
        }
        let (ds, de) = (space.dim_s(), space.dim_e());
        let mut terms = Vec::new();
        for i in 0..ds {
            for j in 0..ds {
                let block = ComplexMatrix::from_fn(de, de, |a, b| full[(i * de + a, j * de + b)]);
                if block.max_abs() == 0.0 {
                    continue;
                }
                let unit = ComplexMatrix::from_fn(ds, ds, |a, b| {
                    if a == i && b == j {
                        c(1.0, 0.0)
                    } else {
                        c(0.0, 0.0)
                    }
                });
                terms.push((unit, block));
            }
        }
        if terms.is_empty() {
            terms.push((ComplexMatrix::zeros(ds, ds), ComplexMatrix::zeros(de, de)));
        }
        Self::new(space, terms)
    }

    pub fn space(&self) -> SpaceSpec {
        self.space
    }

    pub fn terms(&self) -> &[(ComplexMatrix, ComplexMatrix)] {
        &self.terms
    }

    pub fn full(&self) -> &ComplexMatrix {
        &self.full
    }

    pub fn norm(&self) -> f64 {
        opnorm(&self.full)
    }

    /// `tr_s(H)` assembled from the stored factorisation.
    pub fn partial_trace_from_terms(&self) -> ComplexMatrix {
        let de = self.space.dim_e();
        let mut acc = ComplexMatrix::zeros(de, de);
        for (hs, he) in &self.terms {
            acc += &he.scale(hs.trace());
        }
        acc
    }
}

/// A finite set of system unitaries with the twirling property, possibly reduced
/// to a declared list of test operators.
#[derive(Debug, Clone)]
pub struct DecouplingSet {
    space: SpaceSpec,
    elements: Vec<ComplexMatrix>,
    reduced: bool,
    test_operators: Vec<ComplexMatrix>,
}

/// Outcome of [`verify_decoupling_set`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetVerification {
    pub passed: bool,
    pub max_violation: f64,
}

impl DecouplingSet {
    pub fn new(space: SpaceSpec, elements: Vec<ComplexMatrix>) -> Result<Self> {
        Self::build(space, elements, false, Vec::new())
    }

    /// Reduced set: the averaging identity is required only for `test_operators`,
    /// which may act on the system alone or on the composite space.
    pub fn reduced(
        space: SpaceSpec,
        elements: Vec<ComplexMatrix>,
        test_operators: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        if test_operators.is_empty() {
            return Err(Error::Validation(
                "reduced decoupling set needs test operators".into(),
            ));
        }
        Self::build(space, elements, true, test_operators)
    }

    fn build(
        space: SpaceSpec,
        elements: Vec<ComplexMatrix>,
        reduced: bool,
        test_operators: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Validation("decoupling set is empty".into()));
        }
        for (k, v) in elements.iter().enumerate() {
            if v.rows() != space.dim_s() || v.cols() != space.dim_s() {
                return Err(Error::Dimension(format!(
                    "element {k} is {}x{}, expected {}x{}",
                    v.rows(),
                    v.cols(),
                    space.dim_s(),
                    space.dim_s()
                )));
            }
            v.require_unitary(linalg::DEFAULT_TOL, &format!("decoupling element {k}"))?;
        }
        for (k, x) in test_operators.iter().enumerate() {
            let n = x.require_square(&format!("test operator {k}"))?;
            if n != space.dim_s() && n != space.full_dim() {
                return Err(Error::Dimension(format!(
                    "test operator {k} is {n}x{n}; expected system or composite size"
                )));
            }
        }
        Ok(Self {
            space,
            elements,
            reduced,
            test_operators,
        })
    }

    /// `{1, X, Y, Z}` modulo phase.
    pub fn pauli(dim_e: usize) -> Result<Self> {
        let space = SpaceSpec::new(2, dim_e)?;
        Self::new(
            space,
            vec![
                ComplexMatrix::identity(2),
                linalg::pauli::x(),
                linalg::pauli::y(),
                linalg::pauli::z(),
            ],
        )
    }

    /// Weyl–Heisenberg set `{X^a Z^b}` on a qudit, indexed `a·d + b`.
    pub fn weyl(d: usize, dim_e: usize) -> Result<Self> {
        let space = SpaceSpec::new(d, dim_e)?;
        let shift = weyl_shift(d);
        let clock = weyl_clock(d);
        let mut elements = Vec::with_capacity(d * d);
        let mut xa = ComplexMatrix::identity(d);
        for _a in 0..d {
            let mut zb = ComplexMatrix::identity(d);
            for _b in 0..d {
                elements.push(&xa * &zb);
                zb = &zb * &clock;
            }
            xa = &xa * &shift;
        }
        Self::new(space, elements)
    }

    /// Reduced parity set `{1, X_0}` with `X_0` acting as `X ⊗ 1`.
    pub fn parity(dim_e: usize, test_operators: Vec<ComplexMatrix>) -> Result<Self> {
        let space = SpaceSpec::new(2, dim_e)?;
        Self::reduced(
            space,
            vec![ComplexMatrix::identity(2), linalg::pauli::x()],
            test_operators,
        )
    }

    pub fn space(&self) -> SpaceSpec {
        self.space
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn test_operators(&self) -> &[ComplexMatrix] {
        &self.test_operators
    }

    /// Index and phase `θ` with `elements[i] ≈ e^{iθ} u`, if any element matches.
    pub fn find_up_to_phase(&self, u: &ComplexMatrix) -> Option<(usize, f64)> {
        self.elements.iter().enumerate().find_map(|(i, v)| {
            let theta = linalg::aligning_phase(v, u);
            let d = opnorm(&(v - &u.scale(c(0.0, theta).exp())));
            (d <= PHASE_MATCH_TOL).then_some((i, theta))
        })
    }

    /// `(1/|V|) Σ_v (v ⊗ 1) x (v ⊗ 1)*` for a system or composite operator.
    pub fn twirl(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let composite = x.rows() != self.space.dim_s();
        let mut acc = ComplexMatrix::zeros(x.rows(), x.cols());
        for v in &self.elements {
            let v = if composite {
                self.space.embed(v)
            } else {
                v.clone()
            };
            acc += &x.conjugate_by(&v);
        }
        acc.scale_re(1.0 / self.elements.len() as f64)
    }
}

pub fn weyl_shift(d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |i, j| {
        if i == (j + 1) % d {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    })
}

pub fn weyl_clock(d: usize) -> ComplexMatrix {
    let omega = 2.0 * PI / d as f64;
    ComplexMatrix::from_fn(d, d, |i, j| {
        if i == j {
            c(0.0, omega * i as f64).exp()
        } else {
            c(0.0, 0.0)
        }
    })
}

/// Checks `(1/|V|) Σ v x v* = tr(x)/d · 1` over the matrix-unit basis, or over
/// the declared test operators of a reduced set.
pub fn verify_decoupling_set(set: &DecouplingSet) -> Result<SetVerification> {
    for (k, v) in set.elements.iter().enumerate() {
        v.require_unitary(linalg::DEFAULT_TOL, &format!("decoupling element {k}"))?;
    }
    let space = set.space;
    let d = space.dim_s();
    let mut worst = 0.0f64;
    if set.reduced {
        for x in &set.test_operators {
            let lhs = set.twirl(x);
            let rhs = if x.rows() == d {
                ComplexMatrix::identity(d).scale(x.trace() / d as f64)
            } else {
                let pt = partial_trace_system(x, d, space.dim_e())?;
                kron(&ComplexMatrix::identity(d), &pt.scale_re(1.0 / d as f64))
            };
            worst = worst.max(opnorm(&(&lhs - &rhs)));
        }
    } else {
        for i in 0..d {
            for j in 0..d {
                let mut unit = ComplexMatrix::zeros(d, d);
                unit[(i, j)] = c(1.0, 0.0);
                let lhs = set.twirl(&unit);
                let rhs = if i == j {
                    ComplexMatrix::identity(d).scale_re(1.0 / d as f64)
                } else {
                    ComplexMatrix::zeros(d, d)
                };
                worst = worst.max(opnorm(&(&lhs - &rhs)));
            }
        }
    }
    Ok(SetVerification {
        passed: worst <= DECOUPLING_TOL,
        max_violation: worst,
    })
}

/// Whether a cycle is required to visit every element equally often.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    Decoupling,
    Plain,
}

/// A gauge-fixed cycle `(v_1, …, v_N = 1)` with pulses `γ_k = v_k* v_{k-1}`.
#[derive(Debug, Clone)]
pub struct Cycle {
    space: SpaceSpec,
    kind: CycleKind,
    visits: Vec<usize>,
    frames: Vec<ComplexMatrix>,
    pulses: Vec<ComplexMatrix>,
}

/// Builds a gauge-fixed cycle from visit indices into `set`.
///
/// The visits are re-gauged by `w = v_N`, i.e. `ṽ_k = w* v_k`, so that the last
/// frame is exactly the identity. The pulses do not depend on the gauge.
pub fn build_cycle(set: &DecouplingSet, visits: &[usize], kind: CycleKind) -> Result<Cycle> {
    if visits.is_empty() {
        return Err(Error::Validation("cycle has no visits".into()));
    }
    if let Some(&bad) = visits.iter().find(|&&i| i >= set.len()) {
        return Err(Error::Validation(format!(
            "visit index {bad} out of range for a set of {} elements",
            set.len()
        )));
    }
    if kind == CycleKind::Decoupling {
        let n = visits.len();
        if !n.is_multiple_of(set.len()) {
            return Err(Error::Validation(format!(
                "decoupling cycle length {n} is not a multiple of |V| = {}",
                set.len()
            )));
        }
        let per = n / set.len();
        let mut counts = vec![0usize; set.len()];
        for &i in visits {
            counts[i] += 1;
        }
        if let Some((i, &cnt)) = counts.iter().enumerate().find(|(_, &cnt)| cnt != per) {
            return Err(Error::Validation(format!(
                "element {i} appears {cnt} times, expected {per} (each element must appear equally often)"
            )));
        }
    }
    let d = set.space.dim_s();
    let w_adj = set.elements[*visits.last().unwrap()].adjoint();
    let n = visits.len();
    let mut frames: Vec<ComplexMatrix> =
        visits.iter().map(|&i| &w_adj * &set.elements[i]).collect();
    frames[n - 1] = ComplexMatrix::identity(d);
    let pulses = (0..n)
        .map(|k| {
            let prev = if k == 0 {
                &frames[n - 1]
            } else {
                &frames[k - 1]
            };
            frames[k].adjoint() * prev
        })
        .collect();
    Ok(Cycle {
        space: set.space,
        kind,
        visits: visits.to_vec(),
        frames,
        pulses,
    })
}

impl Cycle {
    pub fn space(&self) -> SpaceSpec {
        self.space
    }

    pub fn kind(&self) -> CycleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.visits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }

    /// Indices into the decoupling set, as supplied.
    pub fn visits(&self) -> &[usize] {
        &self.visits
    }

    /// Gauge-fixed frames `ṽ_1, …, ṽ_N` (the last is the identity).
    pub fn frames(&self) -> &[ComplexMatrix] {
        &self.frames
    }

    /// Frame `ṽ_{k-1}` preceding step `k` (0-based), with `ṽ_0 = ṽ_N = 1`.
    pub fn frame_before(&self, k: usize) -> &ComplexMatrix {
        if k == 0 {
            &self.frames[self.frames.len() - 1]
        } else {
            &self.frames[k - 1]
        }
    }

    /// Pulses `γ_1, …, γ_N`.
    pub fn pulses(&self) -> &[ComplexMatrix] {
        &self.pulses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli;

    fn proportional(a: &ComplexMatrix, b: &ComplexMatrix) -> bool {
        linalg::dist_up_to_phase(a, b) < 1e-14
    }

    #[test]
    fn pauli_set_passes() {
        let set = DecouplingSet::pauli(1).unwrap();
        let rep = verify_decoupling_set(&set).unwrap();
        assert!(rep.passed);
        assert!(rep.max_violation <= 1e-15);
        // x = X twirls to zero
        assert!(set.twirl(&pauli::x()).max_abs() < 1e-16);
    }

    #[test]
    fn trivial_set_fails_with_unit_violation() {
        let space = SpaceSpec::new(2, 1).unwrap();
        let set = DecouplingSet::new(space, vec![ComplexMatrix::identity(2)]).unwrap();
        let rep = verify_decoupling_set(&set).unwrap();
        assert!(!rep.passed);
        // off-diagonal matrix units survive untouched with norm 1
        assert!((rep.max_violation - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weyl_sets_pass() {
        for d in 2..=4 {
            let rep = verify_decoupling_set(&DecouplingSet::weyl(d, 1).unwrap()).unwrap();
            assert!(rep.passed, "d = {d}: {}", rep.max_violation);
        }
    }

    #[test]
    fn non_unitary_element_rejected() {
        let space = SpaceSpec::new(2, 1).unwrap();
        let err =
            DecouplingSet::new(space, vec![ComplexMatrix::identity(2).scale_re(2.0)]).unwrap_err();
        assert!(matches!(err, Error::NonUnitary { .. }));
    }

    #[test]
    fn space_limits() {
        assert!(SpaceSpec::new(1, 4).is_err());
        assert!(SpaceSpec::new(2, 0).is_err());
        assert!(SpaceSpec::new(2, 4096).is_err());
    }

    #[test]
    fn pauli_cycle_xyz1_pulses() {
        let set = DecouplingSet::pauli(1).unwrap();
        let cyc = build_cycle(&set, &[1, 2, 3, 0], CycleKind::Decoupling).unwrap();
        assert_eq!(cyc.len(), 4);
        assert!(cyc.pulses()[0].approx_eq(&pauli::x(), 0.0));
        assert!(proportional(&cyc.pulses()[1], &pauli::z()));
        assert!(proportional(&cyc.pulses()[2], &pauli::x()));
        assert!(proportional(&cyc.pulses()[3], &pauli::z()));
    }

    #[test]
    fn euler_literal_cycle_pulses() {
        let set = DecouplingSet::pauli(1).unwrap();
        let cyc = build_cycle(&set, &[3, 2, 1, 0, 1, 2, 3, 0], CycleKind::Decoupling).unwrap();
        let (x, z) = (pauli::x(), pauli::z());
        let expect = [&z, &x, &z, &x, &x, &z, &x, &z];
        for (k, e) in expect.iter().enumerate() {
            assert!(proportional(&cyc.pulses()[k], e), "step {k}");
        }
        // exact products: γ_2 = Y Z = iX
        assert!(cyc.pulses()[1].approx_eq(&x.scale(c(0.0, 1.0)), 0.0));
    }

    #[test]
    fn single_identity_cycle() {
        let space = SpaceSpec::new(2, 1).unwrap();
        let set = DecouplingSet::new(space, vec![ComplexMatrix::identity(2)]).unwrap();
        let cyc = build_cycle(&set, &[0], CycleKind::Decoupling).unwrap();
        assert!(cyc.pulses()[0].approx_eq(&ComplexMatrix::identity(2), 0.0));
    }

    #[test]
    fn cycle_errors() {
        let set = DecouplingSet::pauli(1).unwrap();
        assert!(build_cycle(&set, &[], CycleKind::Plain).is_err());
        assert!(build_cycle(&set, &[4], CycleKind::Plain).is_err());
        assert!(build_cycle(&set, &[1, 0], CycleKind::Decoupling).is_err());
        assert!(build_cycle(&set, &[1, 1, 2, 0], CycleKind::Decoupling).is_err());
        assert!(build_cycle(&set, &[1, 0], CycleKind::Plain).is_ok());
    }

    #[test]
    fn regauging_leaves_pulses_unchanged() {
        let set = DecouplingSet::pauli(1).unwrap();
        // ends at Z: gauge w = Z is applied
        let cyc = build_cycle(&set, &[1, 2, 0, 3], CycleKind::Decoupling).unwrap();
        assert!(cyc.frames()[3].approx_eq(&ComplexMatrix::identity(2), 0.0));
        let raw: Vec<ComplexMatrix> = [1usize, 2, 0, 3]
            .iter()
            .map(|&i| set.elements()[i].clone())
            .collect();
        for k in 0..4 {
            let prev = if k == 0 { &raw[3] } else { &raw[k - 1] };
            let g = raw[k].adjoint() * prev;
            assert!(cyc.pulses()[k].approx_eq(&g, 0.0), "step {k}");
        }
    }

    #[test]
    fn parity_set_reduced_passes_for_anticommuting_h() {
        // H = Z ⊗ B anticommutes with X ⊗ 1
        let b = ComplexMatrix::from_real_rows(&[&[0.3, 1.0], &[1.0, -0.2]]);
        let h = kron(&pauli::z(), &b);
        let set = DecouplingSet::parity(2, vec![h]).unwrap();
        assert!(verify_decoupling_set(&set).unwrap().passed);
    }

    #[test]
    fn from_full_round_trips() {
        let space = SpaceSpec::new(2, 2).unwrap();
        let h = kron(
            &pauli::x(),
            &ComplexMatrix::from_real_rows(&[&[1.0, 0.5], &[0.5, -1.0]]),
        ) + kron(
            &ComplexMatrix::identity(2),
            &ComplexMatrix::diag(&[c(2.0, 0.0), c(-3.0, 0.0)]),
        );
        let ham = Hamiltonian::from_full(space, h.clone()).unwrap();
        assert!(ham.full().approx_eq(&h, 1e-15));
        let pt = partial_trace_system(&h, 2, 2).unwrap();
        assert!(ham.partial_trace_from_terms().approx_eq(&pt, 1e-14));
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let space = SpaceSpec::new(2, 1).unwrap();
        let bad = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let one = ComplexMatrix::identity(1);
        assert!(matches!(
            Hamiltonian::new(space, vec![(bad, one)]),
            Err(Error::NonHermitian { .. })
        ));
    }

    #[test]
    fn find_up_to_phase_matches_projectively() {
        let set = DecouplingSet::pauli(1).unwrap();
        let iy = pauli::y().scale(c(0.0, 1.0));
        let (idx, _) = set.find_up_to_phase(&iy).unwrap();
        assert_eq!(idx, 2);
        let h =
            ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, -1.0]]).scale_re(1.0 / 2f64.sqrt());
        assert!(set.find_up_to_phase(&h).is_none());
    }
}
