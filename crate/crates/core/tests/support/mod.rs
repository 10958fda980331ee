//! Random generators and property suites shared by the `properties` and
//! `acceptance` targets.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ddsim::analysis::{bound_rate1, bound_rate2, decoupling_error, sweep, write_csv};
use ddsim::averages::{compute_h0, compute_h1, compute_hlambda, decoupled_generator};
use ddsim::euler::{build_cayley, euler_cycle, to_cycle, validate_euler_cycle};
use ddsim::linalg::{
    c, dist, dist_up_to_phase, exp_hermitian, expm, kron, opnorm, partial_trace_system,
    polar_unitary, ComplexMatrix,
};
use ddsim::model::{
    build_cycle, verify_decoupling_set, Cycle, CycleKind, DecouplingSet, Hamiltonian, SpaceSpec,
};
use ddsim::propagate::{pulse_step, pulse_step_segment, repeated_evolution, Schedule};
use ddsim::pulses::{PulsePath, PulseShape, ScaledPulse};
use ddsim::quadrature::gauss_legendre;
use ddsim::scenario::{parse_scenario, preset, PRESET_NAMES};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Suite = fn(u32) -> Result<(), String>;

pub const SUITES: &[(&str, Suite)] = &[
    ("expm_unitary", expm_unitary),
    ("expm_commuting", expm_commuting),
    (
        "opnorm_submultiplicative_invariant",
        opnorm_submultiplicative_invariant,
    ),
    ("partial_trace_kron", partial_trace_kron),
    ("cycle_telescoping", cycle_telescoping),
    ("cycle_gauge_invariance", cycle_gauge_invariance),
    ("weyl_sets_decouple", weyl_sets_decouple),
    ("area_preservation", area_preservation),
    ("custom_path_generator", custom_path_generator),
    ("geodesic_endpoint", geodesic_endpoint),
    ("propagator_unitary", propagator_unitary),
    ("propagator_composition", propagator_composition),
    ("h0_decoupled", h0_decoupled),
    ("euler_h1_equals_h0", euler_h1_equals_h0),
    ("averages_linear", averages_linear),
    ("euler_cycle_valid", euler_cycle_valid),
    ("bound_dominance", bound_dominance),
    (
        "decoupling_error_env_invariance",
        decoupling_error_env_invariance,
    ),
    ("scenario_roundtrip", scenario_roundtrip),
    ("csv_deterministic", csv_deterministic),
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut impl Rng, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| {
        c(r.sample(StandardNormal), r.sample(StandardNormal))
    })
}

pub fn hermitian(r: &mut impl Rng, n: usize) -> ComplexMatrix {
    gaussian(r, n).hermitian_part()
}

pub fn unitary(r: &mut impl Rng, n: usize) -> ComplexMatrix {
    polar_unitary(&gaussian(r, n)).expect("gaussian matrices are almost surely invertible")
}

/// `Σ_k H_s,k ⊗ H_e,k` with two random terms.
pub fn hamiltonian(r: &mut impl Rng, space: SpaceSpec) -> Hamiltonian {
    let terms = (0..2)
        .map(|_| (hermitian(r, space.dim_s()), hermitian(r, space.dim_e())))
        .collect();
    Hamiltonian::new(space, terms).unwrap()
}

/// Nonnegative piecewise-linear density with unit trapezoid area.
pub fn custom_shape(r: &mut impl Rng) -> PulseShape {
    let cells = r.random_range(1..6);
    let raw: Vec<f64> = (0..=cells).map(|_| r.random_range(0.1..2.0)).collect();
    let h = 1.0 / cells as f64;
    let area: f64 = raw.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    PulseShape::custom(raw.iter().map(|v| v / area).collect()).unwrap()
}

pub fn shape(r: &mut impl Rng) -> PulseShape {
    match r.random_range(0..4) {
        0 => PulseShape::Rectangular,
        1 => PulseShape::Triangular,
        2 => PulseShape::RaisedCosine,
        _ => custom_shape(r),
    }
}

pub fn smooth_shape(r: &mut impl Rng) -> PulseShape {
    match r.random_range(0..3) {
        0 => PulseShape::Triangular,
        1 => PulseShape::RaisedCosine,
        _ => custom_shape(r),
    }
}

/// A sampled path `e^{-isK} e^{-is²L}` on `cells + 1` grid points.
pub fn sampled_path(r: &mut impl Rng, d: usize) -> PulsePath {
    let k = hermitian(r, d).scale_re(0.7);
    let l = hermitian(r, d).scale_re(0.4);
    let cells = r.random_range(2..10);
    let samples: Vec<ComplexMatrix> = (0..=cells)
        .map(|i| {
            let s = i as f64 / cells as f64;
            exp_hermitian(&k, s).unwrap() * &exp_hermitian(&l, s * s).unwrap()
        })
        .collect();
    PulsePath::custom_path(samples.last().unwrap().clone(), samples).unwrap()
}

pub fn conjugated(set: &DecouplingSet, u: &ComplexMatrix) -> DecouplingSet {
    let elements = set.elements().iter().map(|v| v.conjugate_by(u)).collect();
    DecouplingSet::new(set.space(), elements).unwrap()
}

/// Pauli or Weyl set on a random small space, optionally rotated.
pub fn random_set(r: &mut impl Rng) -> DecouplingSet {
    let dim_e = r.random_range(1..3);
    let set = match r.random_range(0..3) {
        0 => DecouplingSet::pauli(dim_e).unwrap(),
        1 => DecouplingSet::weyl(3, dim_e).unwrap(),
        _ => DecouplingSet::weyl(4, dim_e).unwrap(),
    };
    if r.random_bool(0.5) {
        let u = unitary(r, set.space().dim_s());
        conjugated(&set, &u)
    } else {
        set
    }
}

/// Every element `reps` times in random order.
pub fn random_visits(r: &mut impl Rng, n: usize, reps: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, reps)).collect();
    v.shuffle(r);
    v
}

/// Draws generator pairs until one spans a strongly connected Cayley graph.
pub fn generating_pair(r: &mut impl Rng, set: &DecouplingSet) -> Vec<usize> {
    loop {
        let mut g: Vec<usize> = (1..set.len()).collect();
        g.shuffle(r);
        g.truncate(2);
        g.sort_unstable();
        if build_cayley(set, &g).is_ok() {
            return g;
        }
    }
}

/// Euler cycle with edge-uniform paths of random smooth shapes.
pub fn euler_schedule_parts(
    r: &mut impl Rng,
    set: &DecouplingSet,
    gens: &[usize],
) -> (Cycle, Vec<PulsePath>) {
    let g = build_cayley(set, gens).unwrap();
    let start = r.random_range(0..set.len());
    let e = euler_cycle(&g, set, start).unwrap();
    let per: BTreeMap<usize, PulsePath> = gens
        .iter()
        .map(|&k| {
            let p = PulsePath::geodesic(set.elements()[k].clone(), smooth_shape(r)).unwrap();
            (k, p)
        })
        .collect();
    to_cycle(&e, &g, set, &per).unwrap()
}

fn lib<T>(r: ddsim::Result<T>) -> Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

fn check_le(what: &str, value: f64, tol: f64) -> Result<(), TestCaseError> {
    if value <= tol {
        Ok(())
    } else {
        Err(TestCaseError::fail(format!("{what}: {value:e} > {tol:e}")))
    }
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run_seeded(
    cases: u32,
    test: impl Fn(&mut ChaCha8Rng) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases)
        .run(&any::<u64>(), |seed| test(&mut rng(seed)))
        .map_err(|e| e.to_string())
}

fn identity_gap(u: &ComplexMatrix) -> f64 {
    opnorm(&(&(u.adjoint() * u) - &ComplexMatrix::identity(u.rows())))
}

pub fn expm_unitary(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let n = r.random_range(1..7);
        let h = hermitian(r, n);
        let h = h.scale_re(r.random_range(0.0..10.0) / opnorm(&h));
        let u = lib(expm(&h.scale(c(0.0, -1.0))))?;
        check_le("‖U*U − 1‖", identity_gap(&u), 1e-12)
    })
}

pub fn expm_commuting(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let n = r.random_range(1..6);
        let h = hermitian(r, n);
        let h = h.scale_re(r.random_range(0.1..3.0) / opnorm(&h));
        let (p, q) = (r.random_range(-1.0..1.0), r.random_range(-0.5..0.5));
        let a = h.scale(c(0.0, -1.0));
        let b = (&h.scale_re(p) + &(&h * &h).scale_re(q)).scale(c(0.0, -1.0));
        let lhs = lib(expm(&a))? * &lib(expm(&b))?;
        let rhs = lib(expm(&(&a + &b)))?;
        check_le("‖e^A e^B − e^{A+B}‖", dist(&lhs, &rhs), 1e-10)
    })
}

pub fn opnorm_submultiplicative_invariant(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let n = r.random_range(1..7);
        let a = gaussian(r, n);
        let b = gaussian(r, n);
        let (na, nb) = (opnorm(&a), opnorm(&b));
        check_le(
            "‖AB‖ − ‖A‖‖B‖",
            opnorm(&(&a * &b)) - na * nb,
            1e-10 * na * nb,
        )?;
        let (u, v) = (unitary(r, n), unitary(r, n));
        check_le(
            "|‖UAV‖ − ‖A‖|",
            (opnorm(&(&(&u * &a) * &v)) - na).abs(),
            1e-10 * na,
        )
    })
}

pub fn partial_trace_kron(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let (ds, de) = (r.random_range(1..5), r.random_range(1..5));
        let a = gaussian(r, ds);
        let b = gaussian(r, de);
        let pt = lib(partial_trace_system(&kron(&a, &b), ds, de))?;
        let expected = b.scale(a.trace());
        check_le(
            "tr_s(A⊗B) − tr(A)B",
            dist(&pt, &expected),
            1e-10 * opnorm(&expected).max(1.0),
        )
    })
}

pub fn cycle_telescoping(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let set = random_set(r);
        let reps = r.random_range(1..3);
        let visits = random_visits(r, set.len(), reps);
        let cycle = lib(build_cycle(&set, &visits, CycleKind::Decoupling))?;
        let d = set.space().dim_s();
        let product = cycle
            .pulses()
            .iter()
            .fold(ComplexMatrix::identity(d), |acc, g| g * &acc);
        check_le(
            "‖γ_N⋯γ_1 − 1‖",
            dist(&product, &ComplexMatrix::identity(d)),
            1e-12,
        )?;
        check_le(
            "‖v_N − 1‖",
            dist(cycle.frames().last().unwrap(), &ComplexMatrix::identity(d)),
            0.0,
        )?;
        for k in 0..cycle.len() {
            let lhs = &cycle.frames()[k] * &cycle.pulses()[k];
            check_le(
                "‖v_k γ_k − v_{k−1}‖",
                dist(&lhs, cycle.frame_before(k)),
                1e-12,
            )?;
        }
        Ok(())
    })
}

pub fn cycle_gauge_invariance(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let set = random_set(r);
        let visits = random_visits(r, set.len(), 1);
        let w = &set.elements()[r.random_range(0..set.len())];
        let regauged: Vec<usize> = visits
            .iter()
            .map(|&i| set.find_up_to_phase(&(w * &set.elements()[i])).unwrap().0)
            .collect();
        let a = lib(build_cycle(&set, &visits, CycleKind::Decoupling))?;
        let b = lib(build_cycle(&set, &regauged, CycleKind::Decoupling))?;
        for (x, y) in a.pulses().iter().zip(b.pulses()) {
            check_le(
                "pulse change under re-gauging",
                dist_up_to_phase(x, y),
                1e-12,
            )?;
        }
        Ok(())
    })
}

pub fn weyl_sets_decouple(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let d = r.random_range(2..5);
        let set = lib(DecouplingSet::weyl(d, r.random_range(1..3)))?;
        let set = if r.random_bool(0.5) {
            conjugated(&set, &unitary(r, d))
        } else {
            set
        };
        let v = lib(verify_decoupling_set(&set))?;
        if v.passed {
            Ok(())
        } else {
            Err(TestCaseError::fail(format!(
                "weyl set d={d} violates the averaging identity by {:e}",
                v.max_violation
            )))
        }
    })
}

/// Composite Gauss–Legendre integral of `f` over `[0, 1]` split at `cuts`.
fn integrate(
    f: impl Fn(f64) -> ddsim::Result<ComplexMatrix>,
    cuts: &[f64],
) -> ddsim::Result<ComplexMatrix> {
    let (x, w) = gauss_legendre(16);
    let mut acc: Option<ComplexMatrix> = None;
    for ab in cuts.windows(2) {
        let (half, mid) = (0.5 * (ab[1] - ab[0]), 0.5 * (ab[0] + ab[1]));
        for (xi, wi) in x.iter().zip(&w) {
            let term = f(mid + half * xi)?.scale_re(wi * half);
            acc = Some(match acc {
                Some(m) => &m + &term,
                None => term,
            });
        }
    }
    Ok(acc.unwrap())
}

fn path_cuts(p: &PulsePath) -> Vec<f64> {
    p.breakpoints()
}

pub fn area_preservation(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let d = r.random_range(2..4);
        let path = if r.random_bool(0.25) {
            sampled_path(r, d)
        } else {
            lib(PulsePath::geodesic(unitary(r, d), shape(r)))?
        };
        let lambda = r.random_range(0.01..=1.0);
        let scaled = lib(ScaledPulse::new(path.clone(), lambda))?;
        let base_cuts = path_cuts(&path);
        let mut cuts: Vec<f64> = base_cuts.iter().map(|b| b * lambda).collect();
        if lambda < 1.0 {
            cuts.push(1.0);
        }
        let full = lib(integrate(|s| path.generator_at(s), &base_cuts))?;
        let squeezed = lib(integrate(|s| scaled.generator_at(s), &cuts))?;
        check_le("‖∫A^(λ) − ∫A‖", dist(&full, &squeezed), 1e-8)
    })
}

pub fn custom_path_generator(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let d = r.random_range(2..4);
        let path = sampled_path(r, d);
        let cells = path.breakpoints().len() - 1;
        let h = 1e-5;
        for i in 0..cells {
            let s = (i as f64 + 0.5) / cells as f64;
            let fwd = lib(path.at(s + h))?;
            let bwd = lib(path.at(s - h))?;
            let here = lib(path.at(s))?;
            let fd = (&(&fwd - &bwd).scale(c(0.0, 0.5 / h)) * &here.adjoint()).clone();
            let anti = (&fd - &fd.adjoint()).max_abs() * 0.5;
            check_le("anti-Hermitian part of iγ'γ*", anti, 1e-8)?;
            check_le("iγ'γ* − A(s)", dist(&fd, &lib(path.generator_at(s))?), 1e-6)?;
        }
        Ok(())
    })
}

pub fn geodesic_endpoint(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let d = r.random_range(2..5);
        let target = unitary(r, d);
        let path = lib(PulsePath::geodesic(target.clone(), shape(r)))?;
        let end = lib(exp_hermitian(
            path.generator(),
            path.shape().cumulative(1.0),
        ))?;
        check_le("‖γ(1) − target‖", dist(&end, &target), 1e-12)?;
        let theta = r.random_range(-3.0..3.0);
        let shifted = path.with_phase_offset(theta);
        let end = lib(exp_hermitian(shifted.generator(), 1.0))?;
        check_le("‖γ_θ(1) − target_θ‖", dist(&end, shifted.target()), 1e-12)
    })
}

fn random_pulse(r: &mut ChaCha8Rng, d: usize) -> Result<PulsePath, TestCaseError> {
    if r.random_bool(0.2) {
        Ok(sampled_path(r, d))
    } else {
        lib(PulsePath::geodesic(unitary(r, d), shape(r)))
    }
}

pub fn propagator_unitary(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let space = lib(SpaceSpec::new(r.random_range(2..4), r.random_range(1..3)))?;
        let h = hamiltonian(r, space);
        let pulse = lib(ScaledPulse::new(
            random_pulse(r, space.dim_s())?,
            r.random_range(0.05..=1.0),
        ))?;
        let tau = r.random_range(0.01..1.0);
        let step = lib(pulse_step(&h, &pulse, tau))?;
        check_le("‖u*u − 1‖", identity_gap(&step.unitary), 1e-9)
    })
}

pub fn propagator_composition(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let space = lib(SpaceSpec::new(2, r.random_range(1..3)))?;
        let h = hamiltonian(r, space);
        let base = random_pulse(r, 2)?;
        let exact = base.is_rectangular_geodesic();
        let pulse = lib(ScaledPulse::new(base, r.random_range(0.05..=1.0)))?;
        let tau = r.random_range(0.01..1.0);
        let split = tau * r.random_range(0.05..0.95);
        let whole = lib(pulse_step(&h, &pulse, tau))?.unitary;
        let first = lib(pulse_step_segment(&h, &pulse, tau, 0.0, split))?.unitary;
        let second = lib(pulse_step_segment(&h, &pulse, tau, split, tau))?.unitary;
        let tol = if exact { 1e-12 } else { 1e-8 };
        check_le(
            "‖u(τ,r)u(r,0) − u(τ,0)‖",
            dist(&(second * &first), &whole),
            tol,
        )
    })
}

pub fn h0_decoupled(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let set = random_set(r);
        let reps = r.random_range(1..3);
        let visits = random_visits(r, set.len(), reps);
        let cycle = lib(build_cycle(&set, &visits, CycleKind::Decoupling))?;
        let h = hamiltonian(r, set.space());
        let h0 = lib(compute_h0(&h, &cycle))?;
        let lifted = kron(
            &ComplexMatrix::identity(set.space().dim_s()),
            &decoupled_generator(&h),
        );
        check_le("‖H0 − 1⊗B‖", dist(&h0, &lifted), 1e-10)
    })
}

pub fn euler_h1_equals_h0(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let set = random_set(r);
        let gens = generating_pair(r, &set);
        let (cycle, paths) = euler_schedule_parts(r, &set, &gens);
        let h = hamiltonian(r, set.space());
        let h0 = lib(compute_h0(&h, &cycle))?;
        let h1 = lib(compute_h1(&h, &cycle, &paths, 8))?;
        check_le("‖H1 − H0‖", opnorm(&(&h1 - &h0)), 1e-8)
    })
}

pub fn averages_linear(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let space = lib(SpaceSpec::new(2, r.random_range(1..3)))?;
        let set = lib(DecouplingSet::pauli(space.dim_e()))?;
        let cycle = lib(build_cycle(
            &set,
            &random_visits(r, 4, 1),
            CycleKind::Decoupling,
        ))?;
        let paths: Vec<PulsePath> = cycle
            .pulses()
            .iter()
            .map(|g| lib(PulsePath::geodesic(g.clone(), shape(r))))
            .collect::<Result<_, _>>()?;
        let (x, y) = (hamiltonian(r, space), hamiltonian(r, space));
        let (a, b) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let combo = lib(Hamiltonian::from_full(
            space,
            &x.full().scale_re(a) + &y.full().scale_re(b),
        ))?;
        let scale = 1e-12 * (a.abs() * x.norm() + b.abs() * y.norm()).max(1.0);
        let h0 = |h: &Hamiltonian| lib(compute_h0(h, &cycle));
        let h1 = |h: &Hamiltonian| lib(compute_h1(h, &cycle, &paths, 8));
        let lin0 = &h0(&x)?.scale_re(a) + &h0(&y)?.scale_re(b);
        check_le("H0 linearity", dist(&h0(&combo)?, &lin0), scale)?;
        let lin1 = &h1(&x)?.scale_re(a) + &h1(&y)?.scale_re(b);
        check_le("H1 linearity", dist(&h1(&combo)?, &lin1), 10.0 * scale)?;
        let lambda = r.random_range(0.0..=1.0);
        let (m0, m1) = (h0(&combo)?, h1(&combo)?);
        let hl = lib(compute_hlambda(&m0, &m1, lambda))?;
        let expected = &m1.scale_re(lambda) + &m0.scale_re(1.0 - lambda);
        check_le("Hλ − (λH1 + (1−λ)H0)", dist(&hl, &expected), 0.0)?;
        for m in [&m0, &m1, &hl] {
            check_le("anti-Hermitian part", (m - &m.adjoint()).max_abs(), 1e-10)?;
        }
        Ok(())
    })
}

pub fn euler_cycle_valid(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let set = random_set(r);
        let gens = if r.random_bool(0.5) {
            generating_pair(r, &set)
        } else {
            (1..set.len()).collect()
        };
        let g = lib(build_cayley(&set, &gens))?;
        let start = r.random_range(0..set.len());
        let e = lib(euler_cycle(&g, &set, start))?;
        lib(validate_euler_cycle(&g, &e))?;
        if e.edge_sequence.len() != g.edges().len() {
            return Err(TestCaseError::fail("walk length differs from edge count"));
        }
        let mut counts = vec![0usize; set.len()];
        for &v in &e.induced_visits {
            counts[v] += 1;
        }
        if counts.iter().any(|&n| n != gens.len()) {
            return Err(TestCaseError::fail(format!("visit counts {counts:?}")));
        }
        if lib(euler_cycle(&g, &set, start))? != e {
            return Err(TestCaseError::fail("euler_cycle is not deterministic"));
        }
        Ok(())
    })
}

pub fn bound_dominance(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let space = lib(SpaceSpec::new(2, *[1usize, 2, 4].choose(r).unwrap()))?;
        let set = lib(DecouplingSet::pauli(space.dim_e()))?;
        let cycle = lib(build_cycle(
            &set,
            &random_visits(r, 4, 1),
            CycleKind::Decoupling,
        ))?;
        let paths: Vec<PulsePath> = cycle
            .pulses()
            .iter()
            .map(|g| lib(PulsePath::geodesic(g.clone(), shape(r))))
            .collect::<Result<_, _>>()?;
        let h = hamiltonian(r, space);
        let h0 = lib(compute_h0(&h, &cycle))?;
        let h1 = lib(compute_h1(&h, &cycle, &paths, 8))?;
        let t = r.random_range(0.1..2.0);
        let m = r.random_range(1..65);
        let lambda = *[1.0, 0.5, 0.25].choose(r).unwrap();
        let schedule = lib(Schedule::from_paths(cycle, paths, lambda, t, m))?;
        let f = lib(repeated_evolution(&h, &schedule))?;
        let hl = lib(compute_hlambda(&h0, &h1, lambda))?;
        let d1 = dist(&f, &lib(exp_hermitian(&hl, t))?);
        let d2 = dist(&f, &lib(exp_hermitian(&h0, t))?);
        check_le("dist_Hλ − bound1", d1 - lib(bound_rate1(&h, t, m))?, 1e-8)?;
        check_le(
            "dist_H0 − bound2",
            d2 - lib(bound_rate2(&h, t, m, lambda, &h0, &h1))?,
            1e-8,
        )
    })
}

pub fn decoupling_error_env_invariance(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let space = lib(SpaceSpec::new(r.random_range(2..4), r.random_range(1..4)))?;
        let u = unitary(r, space.full_dim());
        let w = kron(
            &ComplexMatrix::identity(space.dim_s()),
            &unitary(r, space.dim_e()),
        );
        let a = lib(decoupling_error(&u, space))?;
        let b = lib(decoupling_error(&(&w * &u), space))?;
        check_le("|dd(1⊗W·U) − dd(U)|", (a.value - b.value).abs(), 1e-10)
    })
}

pub fn scenario_roundtrip(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let mut s = lib(preset(PRESET_NAMES.choose(r).unwrap()))?;
        s.t = r.random_range(0.01..10.0);
        s.name = format!("case-{}", r.random::<u32>());
        let mut grid: Vec<u64> = (0..r.random_range(1..6))
            .map(|_| r.random_range(1..100_000))
            .collect();
        grid.sort_unstable();
        grid.dedup();
        s.m_grid = grid;
        let mut lambdas: Vec<f64> = (0..r.random_range(1..5))
            .map(|_| r.random_range(0.0..=1.0))
            .collect();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        s.lambda_grid = lambdas;
        let back = lib(parse_scenario(&s.to_json()))?;
        if back == s {
            Ok(())
        } else {
            Err(TestCaseError::fail(format!("round trip changed {s:?}")))
        }
    })
}

pub fn csv_deterministic(cases: u32) -> Result<(), String> {
    run_seeded(cases, |r| {
        let space = lib(SpaceSpec::new(2, r.random_range(1..3)))?;
        let set = lib(DecouplingSet::pauli(space.dim_e()))?;
        let cycle = lib(build_cycle(
            &set,
            &random_visits(r, 4, 1),
            CycleKind::Decoupling,
        ))?;
        let paths: Vec<PulsePath> = cycle
            .pulses()
            .iter()
            .map(|g| lib(PulsePath::geodesic(g.clone(), shape(r))))
            .collect::<Result<_, _>>()?;
        let h = hamiltonian(r, space);
        let template = lib(Schedule::from_paths(cycle, paths, 1.0, 1.0, 1))?;
        let csv = || -> Result<Vec<u8>, TestCaseError> {
            let report = lib(sweep(&h, &template, &[1, 3], &[0.0, 0.5, 1.0]))?;
            let mut out = Vec::new();
            lib(write_csv(&report, &mut out))?;
            Ok(out)
        };
        if csv()? == csv()? {
            Ok(())
        } else {
            Err(TestCaseError::fail(
                "CSV output differs between identical runs",
            ))
        }
    })
}
