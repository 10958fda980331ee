//! Scenario files: a JSON description of one decoupling experiment, its
//! validation, and the built-in example scenarios.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler::{build_cayley, euler_cycle, to_cycle, EulerCycle};
use crate::linalg::{self, c, pauli, ComplexMatrix};
use crate::model::{
    build_cycle, Cycle, CycleKind, DecouplingSet, Hamiltonian, SpaceSpec, PHASE_MATCH_TOL,
};
use crate::propagate::Schedule;
use crate::pulses::{PulsePath, PulseShape};

pub const MAX_GRID_LEN: usize = 64;
pub const MAX_REPETITIONS: u64 = 1_000_000_000;
pub const MAX_TIME: f64 = 1e6;
pub const MAX_DEEP_POCKET_GRID: usize = 512;
pub const MAX_PATH_SAMPLES: usize = 4096;
pub const MAX_CYCLE_LEN: usize = 4096;

pub const PRESET_NAMES: [&str; 5] = [
    "counterexample-4.1",
    "euler-5.1",
    "factorized-5.6",
    "deep-pocket",
    "pauli-bangbang",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub space: SpaceJson,
    pub hamiltonian: HamiltonianSpec,
    pub decoupling_set: SetSpec,
    pub cycle: CycleSpec,
    pub pulse: PulseSpec,
    pub lambda_grid: Vec<f64>,
    pub m_grid: Vec<u64>,
    pub t: f64,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceJson {
    pub dim_s: usize,
    pub dim_e: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum HamiltonianSpec {
    /// `"pauli_x"`, `"pauli_y"`, `"pauli_z"` or `"deep_pocket(n)"`.
    Preset(String),
    Terms {
        terms: Vec<Term>,
    },
    Full {
        full: ComplexMatrix,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub system: ComplexMatrix,
    pub environment: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SetSpec {
    /// `"pauli"`, `"weyl"` or `"parity"`.
    Preset(String),
    Inline {
        elements: Vec<ComplexMatrix>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        test_operators: Vec<ComplexMatrix>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visits: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euler: Option<EulerSpec>,
    #[serde(default)]
    pub kind: KindSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerSpec {
    pub generators: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    #[default]
    Decoupling,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub shape: ShapeSpec,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Rectangular,
    Triangular,
    RaisedCosine,
    Custom(Vec<f64>),
}

/// `geodesic`: each step takes the geodesic to its own pulse `γ_k`.
/// `edge_uniform`: each step reuses the path of the set element `γ_k` equals up to phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Geodesic,
    EdgeUniform,
}

/// Replaces the path used for steps labelled by `element`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideSpec {
    pub element: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<ComplexMatrix>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub csv: String,
    pub summary: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            csv: "results.csv".into(),
            summary: "summary.json".into(),
        }
    }
}

/// Named Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamiltonianPreset {
    PauliX,
    PauliY,
    PauliZ,
    DeepPocket(usize),
}

impl FromStr for HamiltonianPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pauli_x" => Ok(Self::PauliX),
            "pauli_y" => Ok(Self::PauliY),
            "pauli_z" => Ok(Self::PauliZ),
            _ => {
                let n = s
                    .strip_prefix("deep_pocket(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parameter(format!("unknown hamiltonian preset `{s}`")))?;
                let n: usize = n.trim().parse().map_err(|_| {
                    Error::Parameter(format!("grid size in `{s}` is not a positive integer"))
                })?;
                if !(2..=MAX_DEEP_POCKET_GRID).contains(&n) {
                    return Err(Error::Parameter(format!(
                        "deep-pocket grid size {n} outside [2, {MAX_DEEP_POCKET_GRID}]"
                    )));
                }
                Ok(Self::DeepPocket(n))
            }
        }
    }
}

impl fmt::Display for HamiltonianPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PauliX => write!(f, "pauli_x"),
            Self::PauliY => write!(f, "pauli_y"),
            Self::PauliZ => write!(f, "pauli_z"),
            Self::DeepPocket(n) => write!(f, "deep_pocket({n})"),
        }
    }
}

impl HamiltonianPreset {
    pub fn build(&self, space: SpaceSpec) -> Result<Hamiltonian> {
        let qubit_term = |p: ComplexMatrix| -> Result<Hamiltonian> {
            if space.dim_s() != 2 {
                return Err(Error::Dimension(format!(
                    "`{self}` needs a two-level system"
                )));
            }
            Hamiltonian::new(space, vec![(p, ComplexMatrix::identity(space.dim_e()))])
        };
        match self {
            Self::PauliX => qubit_term(pauli::x()),
            Self::PauliY => qubit_term(pauli::y()),
            Self::PauliZ => qubit_term(pauli::z()),
            Self::DeepPocket(n) => {
                if space.dim_s() != 2 || space.dim_e() != *n {
                    return Err(Error::Dimension(format!(
                        "`{self}` lives on a 2 x {n} space, scenario declares {} x {}",
                        space.dim_s(),
                        space.dim_e()
                    )));
                }
                deep_pocket_hamiltonian(*n)
            }
        }
    }
}

/// Discretised deep-pocket Hamiltonian on a mirrored grid of `2n` points with unit spacing.
///
/// The mirrored line is folded onto a spin times half-line: point `j < n` is
/// `(0, j)` and point `2n-1-j` is `(1, j)`, so reflection becomes `X ⊗ 1`.
/// `i d/dx` by central differences with zero boundary then reads
/// `Z ⊗ iD − Y ⊗ E/2`, with `D` the half-line central difference and `E`
/// the projector on the point next to the fold. The relation `X₀HX₀ = −H` is
/// checked to hold exactly.
pub fn deep_pocket_hamiltonian(n: usize) -> Result<Hamiltonian> {
    if !(2..=MAX_DEEP_POCKET_GRID).contains(&n) {
        return Err(Error::Parameter(format!(
            "deep-pocket grid size {n} outside [2, {MAX_DEEP_POCKET_GRID}]"
        )));
    }
    let space = SpaceSpec::new(2, n)?;
    let h = 1.0;
    let i_d = ComplexMatrix::from_fn(n, n, |r, col| {
        if col == r + 1 {
            c(0.0, 0.5 / h)
        } else if r == col + 1 {
            c(0.0, -0.5 / h)
        } else {
            c(0.0, 0.0)
        }
    });
    let mut edge = ComplexMatrix::zeros(n, n);
    edge[(n - 1, n - 1)] = c(1.0 / (2.0 * h), 0.0);
    let ham = Hamiltonian::new(space, vec![(pauli::z(), i_d), (-&pauli::y(), edge)])?;
    let defect = parity_defect(&ham);
    if defect != 0.0 {
        return Err(Error::Validation(format!(
            "deep-pocket discretisation violates X₀HX₀ = −H by {defect:e}"
        )));
    }
    Ok(ham)
}

/// `‖H + X₀HX₀‖` with `X₀ = X ⊗ 1`.
pub fn parity_defect(h: &Hamiltonian) -> f64 {
    let x0 = h.space().embed(&pauli::x());
    linalg::opnorm(&(h.full() + &h.full().conjugate_by(&x0)))
}

/// `(π/2)(X − 1)`: generator of the parity pulse, `e^{-i(π/2)(X−1)} = X`.
pub fn parity_generator() -> ComplexMatrix {
    (&pauli::x() - &ComplexMatrix::identity(2)).scale_re(PI / 2.0)
}

/// Everything a run needs, built from a validated scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub hamiltonian: Hamiltonian,
    pub set: DecouplingSet,
    pub cycle: Cycle,
    pub paths: Vec<PulsePath>,
    pub euler: Option<EulerCycle>,
    pub schedule: Schedule,
}

fn check_matrix(m: &ComplexMatrix, rows: usize, path: &str) -> Result<()> {
    if m.rows() != rows || m.cols() != rows {
        return Err(Error::scenario(
            path,
            format!(
                "expected a {rows}x{rows} matrix, got {}x{}",
                m.rows(),
                m.cols()
            ),
        ));
    }
    if m.row_major()
        .iter()
        .any(|z| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(Error::scenario(path, "entries must be finite"));
    }
    Ok(())
}

fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Scenario { .. } => e,
        other => Error::scenario(path, other.to_string()),
    })
}

fn is_plain_file_name(s: &str) -> bool {
    !s.is_empty() && s.len() <= 255 && s != "." && s != ".." && !s.contains(['/', '\\', '\0'])
}

impl Scenario {
    pub fn space_spec(&self) -> Result<SpaceSpec> {
        at("space", SpaceSpec::new(self.space.dim_s, self.space.dim_e))
    }

    /// Structural checks that need no linear algebra.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() || self.name.len() > 256 {
            return Err(Error::scenario("name", "must be 1 to 256 characters"));
        }
        let space = self.space_spec()?;
        let (ds, full) = (space.dim_s(), space.full_dim());

        if !(self.t.is_finite() && self.t > 0.0 && self.t <= MAX_TIME) {
            return Err(Error::scenario("t", format!("must lie in (0, {MAX_TIME}]")));
        }
        for (name, len) in [
            ("m_grid", self.m_grid.len()),
            ("lambda_grid", self.lambda_grid.len()),
        ] {
            if len == 0 || len > MAX_GRID_LEN {
                return Err(Error::scenario(
                    name,
                    format!("must have 1 to {MAX_GRID_LEN} entries"),
                ));
            }
        }
        for (i, &m) in self.m_grid.iter().enumerate() {
            if m == 0 || m > MAX_REPETITIONS {
                return Err(Error::scenario(
                    format!("m_grid[{i}]"),
                    format!("must lie in [1, {MAX_REPETITIONS}]"),
                ));
            }
            if i > 0 && m <= self.m_grid[i - 1] {
                return Err(Error::scenario(
                    format!("m_grid[{i}]"),
                    "grid must be strictly increasing",
                ));
            }
        }
        for (i, &l) in self.lambda_grid.iter().enumerate() {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::scenario(
                    format!("lambda_grid[{i}]"),
                    "must lie in [0, 1]",
                ));
            }
            if i > 0 && l <= self.lambda_grid[i - 1] {
                return Err(Error::scenario(
                    format!("lambda_grid[{i}]"),
                    "grid must be strictly increasing",
                ));
            }
        }

        match &self.hamiltonian {
            HamiltonianSpec::Preset(s) => {
                at("hamiltonian", s.parse::<HamiltonianPreset>())?;
            }
            HamiltonianSpec::Terms { terms } => {
                if terms.is_empty() {
                    return Err(Error::scenario(
                        "hamiltonian.terms",
                        "needs at least one term",
                    ));
                }
                for (i, t) in terms.iter().enumerate() {
                    check_matrix(&t.system, ds, &format!("hamiltonian.terms[{i}].system"))?;
                    check_matrix(
                        &t.environment,
                        space.dim_e(),
                        &format!("hamiltonian.terms[{i}].environment"),
                    )?;
                }
            }
            HamiltonianSpec::Full { full: m } => check_matrix(m, full, "hamiltonian.full")?,
        }

        let set_len = match &self.decoupling_set {
            SetSpec::Preset(s) => match s.as_str() {
                "pauli" => 4,
                "weyl" => ds * ds,
                "parity" => 2,
                _ => {
                    return Err(Error::scenario(
                        "decoupling_set",
                        format!("unknown preset `{s}`"),
                    ))
                }
            },
            SetSpec::Inline {
                elements,
                test_operators,
            } => {
                if elements.is_empty() || elements.len() > 1024 {
                    return Err(Error::scenario(
                        "decoupling_set.elements",
                        "must have 1 to 1024 elements",
                    ));
                }
                for (i, e) in elements.iter().enumerate() {
                    check_matrix(e, ds, &format!("decoupling_set.elements[{i}]"))?;
                }
                for (i, x) in test_operators.iter().enumerate() {
                    check_matrix(x, full, &format!("decoupling_set.test_operators[{i}]"))?;
                }
                elements.len()
            }
        };

        match (&self.cycle.visits, &self.cycle.euler) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::scenario(
                    "cycle",
                    "give exactly one of `visits` and `euler`",
                ));
            }
            (Some(v), None) => {
                if v.is_empty() || v.len() > MAX_CYCLE_LEN {
                    return Err(Error::scenario(
                        "cycle.visits",
                        format!("must have 1 to {MAX_CYCLE_LEN} entries"),
                    ));
                }
                if let Some(i) = v.iter().position(|&x| x >= set_len) {
                    return Err(Error::scenario(
                        format!("cycle.visits[{i}]"),
                        format!("index out of range for a set of {set_len} elements"),
                    ));
                }
            }
            (None, Some(e)) => {
                if e.generators.is_empty() {
                    return Err(Error::scenario(
                        "cycle.euler.generators",
                        "needs at least one generator",
                    ));
                }
                if let Some(i) = e.generators.iter().position(|&x| x >= set_len) {
                    return Err(Error::scenario(
                        format!("cycle.euler.generators[{i}]"),
                        format!("index out of range for a set of {set_len} elements"),
                    ));
                }
                if set_len * e.generators.len() > MAX_CYCLE_LEN {
                    return Err(Error::scenario(
                        "cycle.euler",
                        "euler cycle would be too long",
                    ));
                }
                if e.start.is_some_and(|s| s >= set_len) {
                    return Err(Error::scenario("cycle.euler.start", "index out of range"));
                }
                if self.cycle.kind == KindSpec::Plain {
                    return Err(Error::scenario(
                        "cycle.kind",
                        "euler cycles are decoupling cycles",
                    ));
                }
            }
        }

        if let ShapeSpec::Custom(samples) = &self.pulse.shape {
            if samples.len() > MAX_PATH_SAMPLES {
                return Err(Error::scenario("pulse.shape.custom", "too many samples"));
            }
        }
        let mut seen = Vec::new();
        for (i, o) in self.pulse.overrides.iter().enumerate() {
            let path = format!("pulse.overrides[{i}]");
            if o.element >= set_len {
                return Err(Error::scenario(
                    format!("{path}.element"),
                    "index out of range",
                ));
            }
            if seen.contains(&o.element) {
                return Err(Error::scenario(
                    format!("{path}.element"),
                    "element overridden twice",
                ));
            }
            seen.push(o.element);
            match (&o.generator, &o.samples) {
                (Some(g), None) => check_matrix(g, ds, &format!("{path}.generator"))?,
                (None, Some(s)) => {
                    if s.len() < 2 || s.len() > MAX_PATH_SAMPLES {
                        return Err(Error::scenario(
                            format!("{path}.samples"),
                            "needs 2 or more samples",
                        ));
                    }
                    for (j, m) in s.iter().enumerate() {
                        check_matrix(m, ds, &format!("{path}.samples[{j}]"))?;
                    }
                }
                _ => {
                    return Err(Error::scenario(
                        path,
                        "give exactly one of `generator` and `samples`",
                    ))
                }
            }
        }

        for (name, file) in [
            ("outputs.csv", &self.outputs.csv),
            ("outputs.summary", &self.outputs.summary),
        ] {
            if !is_plain_file_name(file) {
                return Err(Error::scenario(name, "must be a plain file name"));
            }
        }
        Ok(())
    }

    pub fn build_hamiltonian(&self) -> Result<Hamiltonian> {
        let space = self.space_spec()?;
        match &self.hamiltonian {
            HamiltonianSpec::Preset(s) => {
                at("hamiltonian", s.parse::<HamiltonianPreset>()?.build(space))
            }
            HamiltonianSpec::Terms { terms } => at(
                "hamiltonian.terms",
                Hamiltonian::new(
                    space,
                    terms
                        .iter()
                        .map(|t| (t.system.clone(), t.environment.clone()))
                        .collect(),
                ),
            ),
            HamiltonianSpec::Full { full } => at(
                "hamiltonian.full",
                Hamiltonian::from_full(space, full.clone()),
            ),
        }
    }

    pub fn build_set(&self, h: &Hamiltonian) -> Result<DecouplingSet> {
        let space = self.space_spec()?;
        let r = match &self.decoupling_set {
            SetSpec::Preset(s) => match s.as_str() {
                "pauli" if space.dim_s() == 2 => DecouplingSet::pauli(space.dim_e()),
                "weyl" => DecouplingSet::weyl(space.dim_s(), space.dim_e()),
                "parity" if space.dim_s() == 2 => {
                    DecouplingSet::parity(space.dim_e(), vec![h.full().clone()])
                }
                "pauli" | "parity" => {
                    Err(Error::Dimension(format!("`{s}` needs a two-level system")))
                }
                _ => Err(Error::Parameter(format!("unknown preset `{s}`"))),
            },
            SetSpec::Inline {
                elements,
                test_operators,
            } if test_operators.is_empty() => DecouplingSet::new(space, elements.clone()),
            SetSpec::Inline {
                elements,
                test_operators,
            } => DecouplingSet::reduced(space, elements.clone(), test_operators.clone()),
        };
        at("decoupling_set", r)
    }

    fn shape(&self) -> Result<PulseShape> {
        at(
            "pulse.shape",
            match &self.pulse.shape {
                ShapeSpec::Rectangular => Ok(PulseShape::Rectangular),
                ShapeSpec::Triangular => Ok(PulseShape::Triangular),
                ShapeSpec::RaisedCosine => Ok(PulseShape::RaisedCosine),
                ShapeSpec::Custom(s) => PulseShape::custom(s.clone()),
            },
        )
    }

    /// Base path for steps labelled by each set element.
    fn element_paths(
        &self,
        set: &DecouplingSet,
        shape: &PulseShape,
    ) -> Result<BTreeMap<usize, PulsePath>> {
        let mut map = BTreeMap::new();
        for (i, o) in self.pulse.overrides.iter().enumerate() {
            let target = set.elements()[o.element].clone();
            let path = match (&o.generator, &o.samples) {
                (Some(g), _) => {
                    PulsePath::geodesic_with_generator(target, g.clone(), shape.clone())
                }
                (_, Some(s)) => PulsePath::custom_path(target, s.clone()),
                _ => Err(Error::Validation(
                    "override needs a generator or samples".into(),
                )),
            };
            map.insert(o.element, at(&format!("pulse.overrides[{i}]"), path)?);
        }
        Ok(map)
    }

    /// Validates and builds the full run description.
    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let hamiltonian = self.build_hamiltonian()?;
        let set = self.build_set(&hamiltonian)?;
        let shape = self.shape()?;
        let mut labelled = self.element_paths(&set, &shape)?;
        let label_path = |map: &mut BTreeMap<usize, PulsePath>, e: usize| -> Result<PulsePath> {
            if let Some(p) = map.get(&e) {
                return Ok(p.clone());
            }
            let p = PulsePath::geodesic(set.elements()[e].clone(), shape.clone())?;
            map.insert(e, p.clone());
            Ok(p)
        };

        let (cycle, paths, euler) = if let Some(spec) = &self.cycle.euler {
            let graph = at("cycle.euler", build_cayley(&set, &spec.generators))?;
            let start = spec.start.unwrap_or(graph.identity());
            let walk = at("cycle.euler", euler_cycle(&graph, &set, start))?;
            let mut per_generator = BTreeMap::new();
            for &g in &spec.generators {
                per_generator.insert(g, at("pulse", label_path(&mut labelled, g))?);
            }
            let (cycle, paths) = at("pulse", to_cycle(&walk, &graph, &set, &per_generator))?;
            (cycle, paths, Some(walk))
        } else {
            let visits = self.cycle.visits.as_ref().expect("validated");
            let kind = match self.cycle.kind {
                KindSpec::Decoupling => CycleKind::Decoupling,
                KindSpec::Plain => CycleKind::Plain,
            };
            let cycle = at("cycle.visits", build_cycle(&set, visits, kind))?;
            let mut paths = Vec::with_capacity(cycle.len());
            for (k, gamma) in cycle.pulses().iter().enumerate() {
                let label = set.find_up_to_phase(gamma).map(|(i, _)| i);
                let uniform = self.pulse.mode == ModeSpec::EdgeUniform;
                let path = match label {
                    Some(e) if uniform || labelled.contains_key(&e) => {
                        let base = at("pulse", label_path(&mut labelled, e))?;
                        phase_matched(&base, gamma).ok_or_else(|| {
                            Error::scenario(
                                "pulse",
                                format!("path for element {e} cannot reach γ_{}", k + 1),
                            )
                        })?
                    }
                    None if uniform => {
                        return Err(Error::scenario(
                            "pulse.mode",
                            format!("γ_{} is not a set element up to phase", k + 1),
                        ));
                    }
                    _ => at("pulse", PulsePath::geodesic(gamma.clone(), shape.clone()))?,
                };
                paths.push(path);
            }
            (cycle, paths, None)
        };

        let lambda = self.lambda_grid.iter().copied().fold(0.0, f64::max);
        let lambda = if lambda > 0.0 { lambda } else { 1.0 };
        let schedule = at(
            "pulse",
            Schedule::from_paths(cycle.clone(), paths.clone(), lambda, self.t, 1),
        )?;
        Ok(Prepared {
            scenario: self.clone(),
            hamiltonian,
            set,
            cycle,
            paths,
            euler,
            schedule,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }
}

fn phase_matched(base: &PulsePath, gamma: &ComplexMatrix) -> Option<PulsePath> {
    let theta = linalg::aligning_phase(gamma, base.target());
    let p = base.with_phase_offset(theta);
    ((p.target() - gamma).max_abs() <= PHASE_MATCH_TOL).then_some(p)
}

fn json_error<T>(
    r: std::result::Result<T, serde_path_to_error::Error<serde_json::Error>>,
) -> Result<T> {
    r.map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::scenario(path, format!("{inner}"))
    })
}

/// Parses and structurally validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let s: Scenario = json_error(serde_path_to_error::deserialize(de))?;
    s.validate()?;
    Ok(s)
}

/// A matrix as a JSON list of rows of `[re, im]` pairs, entries finite.
pub fn parse_matrix(text: &str) -> Result<ComplexMatrix> {
    let m: ComplexMatrix = serde_json::from_str(text)?;
    check_matrix(&m, m.rows(), "matrix")?;
    Ok(m)
}

/// A cycle as a JSON list of set indices.
pub fn parse_visits(text: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = serde_json::from_str(text)?;
    if v.is_empty() || v.len() > MAX_CYCLE_LEN {
        return Err(Error::scenario(
            "visits",
            format!("must have 1 to {MAX_CYCLE_LEN} entries"),
        ));
    }
    Ok(v)
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<Scenario> {
    let m_grid = vec![10, 20, 50, 100, 200, 500, 1000];
    let rect = PulseSpec {
        shape: ShapeSpec::Rectangular,
        mode: ModeSpec::Geodesic,
        overrides: vec![],
    };
    let visits = |v: &[usize]| CycleSpec {
        visits: Some(v.to_vec()),
        euler: None,
        kind: KindSpec::Decoupling,
    };
    let euler = |g: &[usize]| CycleSpec {
        visits: None,
        euler: Some(EulerSpec {
            generators: g.to_vec(),
            start: None,
        }),
        kind: KindSpec::Decoupling,
    };
    let s = match name {
        "counterexample-4.1" => Scenario {
            name: name.into(),
            space: SpaceJson { dim_s: 2, dim_e: 1 },
            hamiltonian: HamiltonianSpec::Preset("pauli_x".into()),
            decoupling_set: SetSpec::Preset("pauli".into()),
            cycle: visits(&[1, 2, 3, 0]),
            pulse: rect,
            lambda_grid: vec![0.0625, 0.125, 0.25, 0.5, 1.0],
            m_grid,
            t: 1.0,
            outputs: Outputs::default(),
        },
        "euler-5.1" => Scenario {
            name: name.into(),
            space: SpaceJson { dim_s: 2, dim_e: 1 },
            hamiltonian: HamiltonianSpec::Preset("pauli_x".into()),
            decoupling_set: SetSpec::Preset("pauli".into()),
            cycle: visits(&[3, 2, 1, 0, 1, 2, 3, 0]),
            pulse: PulseSpec {
                mode: ModeSpec::EdgeUniform,
                ..rect
            },
            lambda_grid: vec![1.0],
            m_grid,
            t: 1.0,
            outputs: Outputs::default(),
        },
        "factorized-5.6" => {
            let hs = ComplexMatrix::from_real_rows(&[&[1.3, 0.4], &[0.4, -0.1]]);
            let he = ComplexMatrix::from_real_rows(&[&[0.5, 0.0], &[0.0, -0.2]])
                + pauli::y().scale_re(0.3);
            Scenario {
                name: name.into(),
                space: SpaceJson { dim_s: 2, dim_e: 2 },
                hamiltonian: HamiltonianSpec::Terms {
                    terms: vec![Term {
                        system: hs,
                        environment: he,
                    }],
                },
                decoupling_set: SetSpec::Preset("pauli".into()),
                cycle: euler(&[1, 3]),
                pulse: PulseSpec {
                    shape: ShapeSpec::RaisedCosine,
                    mode: ModeSpec::EdgeUniform,
                    overrides: vec![],
                },
                lambda_grid: vec![0.25, 0.5, 1.0],
                m_grid,
                t: 1.0,
                outputs: Outputs::default(),
            }
        }
        "deep-pocket" => Scenario {
            name: name.into(),
            space: SpaceJson {
                dim_s: 2,
                dim_e: 64,
            },
            hamiltonian: HamiltonianSpec::Preset("deep_pocket(64)".into()),
            decoupling_set: SetSpec::Preset("parity".into()),
            cycle: euler(&[1]),
            pulse: PulseSpec {
                shape: ShapeSpec::RaisedCosine,
                mode: ModeSpec::EdgeUniform,
                overrides: vec![OverrideSpec {
                    element: 1,
                    generator: Some(parity_generator()),
                    samples: None,
                }],
            },
            lambda_grid: vec![0.0, 1.0],
            m_grid: vec![10, 100, 1000],
            t: 1.0,
            outputs: Outputs::default(),
        },
        "pauli-bangbang" => {
            let terms = vec![
                Term {
                    system: pauli::x(),
                    environment: ComplexMatrix::from_real_rows(&[&[0.3, 0.1], &[0.1, -0.2]]),
                },
                Term {
                    system: pauli::z(),
                    environment: pauli::y().scale_re(0.25),
                },
                Term {
                    system: ComplexMatrix::identity(2),
                    environment: ComplexMatrix::from_real_rows(&[&[0.4, 0.2], &[0.2, 0.1]]),
                },
            ];
            Scenario {
                name: name.into(),
                space: SpaceJson { dim_s: 2, dim_e: 2 },
                hamiltonian: HamiltonianSpec::Terms { terms },
                decoupling_set: SetSpec::Preset("pauli".into()),
                cycle: visits(&[1, 2, 3, 0]),
                pulse: rect,
                lambda_grid: vec![0.0],
                m_grid,
                t: 1.0,
                outputs: Outputs::default(),
            }
        }
        _ => {
            return Err(Error::Parameter(format!(
                "unknown preset `{name}`; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deep_pocket_parity_is_exact() {
        for n in [2, 5, 32] {
            let h = deep_pocket_hamiltonian(n).unwrap();
            assert_eq!(parity_defect(&h), 0.0);
            assert!(h.norm() <= 1.0 + 1e-12);
        }
        assert!(deep_pocket_hamiltonian(1).is_err());
        assert!(deep_pocket_hamiltonian(MAX_DEEP_POCKET_GRID + 1).is_err());
    }

    #[test]
    fn deep_pocket_matches_folded_central_difference() {
        let n = 4;
        let h = deep_pocket_hamiltonian(n).unwrap();
        // i d/dx on 2n points, then fold j < n -> (0, j), 2n-1-j -> (1, j)
        let fold = |j: usize| if j < n { j } else { n + (2 * n - 1 - j) };
        let mut want = ComplexMatrix::zeros(2 * n, 2 * n);
        for j in 0..2 * n - 1 {
            want[(fold(j), fold(j + 1))] = c(0.0, 0.5);
            want[(fold(j + 1), fold(j))] = c(0.0, -0.5);
        }
        assert!(h.full().approx_eq(&want, 0.0));
    }

    #[test]
    fn parity_generator_reaches_x() {
        let u = linalg::exp_hermitian(&parity_generator(), 1.0).unwrap();
        assert!(u.approx_eq(&pauli::x(), 1e-15));
    }

    #[test]
    fn preset_strings() {
        assert_eq!(
            "deep_pocket(64)".parse::<HamiltonianPreset>().unwrap(),
            HamiltonianPreset::DeepPocket(64)
        );
        assert_eq!(
            HamiltonianPreset::DeepPocket(7).to_string(),
            "deep_pocket(7)"
        );
        for bad in [
            "deep_pocket()",
            "deep_pocket(-1)",
            "deep_pocket(1)",
            "pauli_w",
            "deep_pocket(64",
        ] {
            assert!(bad.parse::<HamiltonianPreset>().is_err(), "{bad}");
        }
    }

    #[test]
    fn presets_prepare_and_roundtrip() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            let back = parse_scenario(&s.to_json()).unwrap();
            assert_eq!(back, s, "{name}");
            let p = s.prepare().unwrap();
            assert_eq!(p.paths.len(), p.cycle.len());
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn diagnostics_carry_paths() {
        let mut s = preset("euler-5.1").unwrap();
        s.m_grid = vec![10, 5];
        match s.validate() {
            Err(Error::Scenario { path, .. }) => assert_eq!(path, "m_grid[1]"),
            other => panic!("{other:?}"),
        }
        let text = preset("euler-5.1")
            .unwrap()
            .to_json()
            .replace("\"t\": 1.0", "\"t\": 1.0, \"bogus\": 3");
        assert!(matches!(parse_scenario(&text), Err(Error::Scenario { .. })));
        let mut s = preset("euler-5.1").unwrap();
        s.outputs.csv = "../x.csv".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn edge_uniform_paths_share_label_generators() {
        let p = preset("euler-5.1").unwrap().prepare().unwrap();
        for (path, gamma) in p.paths.iter().zip(p.cycle.pulses()) {
            let (label, _) = p.set.find_up_to_phase(gamma).unwrap();
            let base =
                PulsePath::geodesic(p.set.elements()[label].clone(), PulseShape::Rectangular)
                    .unwrap();
            let d = path.generator() - base.generator();
            assert!(d.approx_eq(&ComplexMatrix::identity(2).scale(d[(0, 0)]), 1e-12));
        }
    }

    #[test]
    fn matrix_and_visit_parsers() {
        let m = parse_matrix("[[[0,0],[1,0]],[[1,0],[0,0]]]").unwrap();
        assert!(m.approx_eq(&pauli::x(), 0.0));
        assert!(parse_matrix("[[[0,0]],[[1,0],[0,0]]]").is_err());
        assert!(parse_matrix("[]").is_err());
        assert_eq!(parse_visits("[1, 2, 0]").unwrap(), vec![1, 2, 0]);
        assert!(parse_visits("[]").is_err());
        assert!(parse_visits("[-1]").is_err());
    }
}
