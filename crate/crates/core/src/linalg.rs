//! Dense complex linear algebra on small operators.
//!
//! Every operator in the simulator (states, unitaries, Hamiltonians, pulse
//! generators) is a [`ComplexMatrix`]. Tensor products put the system factor
//! first, so system indices are the slow (outer) indices of a composite
//! matrix: the entry `(s, e), (s', e')` lives at `(s * dim_e + e, s' * dim_e + e')`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default tolerance for Hermiticity and unitarity predicates (max-abs entry norm).
pub const DEFAULT_TOL: f64 = 1e-12;

/// Smallest singular value accepted by [`polar_unitary`].
pub const POLAR_RANK_TOL: f64 = 1e-10;

pub type C64 = Complex64;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "  ")?;
            for j in 0..self.cols() {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty shape {rows}x{cols}")));
        }
        if rows.checked_mul(cols) != Some(entries.len()) {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let cl = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, cl, |i, j| c(rows[i][j], 0.0))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                entries[i]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_inner(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, z: C64) -> Self {
        Self(&self.0 * z)
    }

    pub fn scale_re(&self, x: f64) -> Self {
        self.scale(c(x, 0.0))
    }

    /// `A · B · A*`
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Self {
        Self(&u.0 * &self.0 * u.0.adjoint())
    }

    pub fn commutator(&self, other: &ComplexMatrix) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * c(0.5, 0.0))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.0 - self.0.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        (self.0.adjoint() * &self.0 - DMatrix::<C64>::identity(n, n))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn require_square(&self, context: &str) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows())
        } else {
            Err(Error::Dimension(format!(
                "{context}: expected a square matrix, got {}x{}",
                self.rows(),
                self.cols()
            )))
        }
    }

    pub fn require_unitary(&self, tol: f64, context: &str) -> Result<()> {
        self.require_square(context)?;
        let deviation = self.unitarity_defect();
        if deviation <= tol {
            Ok(())
        } else {
            Err(Error::NonUnitary {
                context: context.to_string(),
                deviation,
            })
        }
    }

    pub fn require_hermitian(&self, tol: f64, context: &str) -> Result<()> {
        self.require_square(context)?;
        let deviation = self.hermiticity_defect();
        if deviation <= tol {
            Ok(())
        } else {
            Err(Error::NonHermitian {
                context: context.to_string(),
                deviation,
            })
        }
    }

    /// `self` is within `tol` of `other` in max-abs entry norm.
    pub fn approx_eq(&self, other: &ComplexMatrix, tol: f64) -> bool {
        self.rows() == other.rows()
            && self.cols() == other.cols()
            && (self - other).max_abs() <= tol
    }
}

impl ComplexMatrix {
    /// Builds a matrix from a list of rows; all rows must have equal length.
    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let r = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|row| row.len() != cols) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} entries, row 0 has {cols}",
                rows[bad].len()
            )));
        }
        Self::new(r, cols, rows.into_iter().flatten().collect())
    }

    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self[(i, j)]).collect())
            .collect()
    }
}

/// Serialised as a list of rows of `[re, im]` pairs.
impl serde::Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<C64>>::deserialize(d)?;
        Self::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&ComplexMatrix> for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix(&self.0 $op &rhs.0)
            }
        }
        impl $trait<ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix(self.0 $op rhs.0)
            }
        }
        impl $trait<&ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix(self.0 $op &rhs.0)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        self.0 += &rhs.0;
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

/// Single-qubit Pauli matrices.
pub mod pauli {
    use super::{c, ComplexMatrix};

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn y() -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 1)] = c(0.0, -1.0);
        m[(1, 0)] = c(0.0, 1.0);
        m
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
    }
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.require_square("expm")?;
    Ok(ComplexMatrix(a.0.exp()))
}

/// `exp(-i t H)` for Hermitian `H`, through the spectral decomposition.
///
/// Unitary to rounding regardless of `t ‖H‖`. Only the Hermitian part of `h`
/// is used, so callers must validate Hermiticity themselves.
pub fn exp_hermitian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let n = h.require_square("exp_hermitian")?;
    if n == 1 {
        return Ok(ComplexMatrix::from_fn(1, 1, |_, _| {
            c(0.0, -t * h[(0, 0)].re).exp()
        }));
    }
    let eig = SymmetricEigen::new(h.hermitian_part().0);
    let q = eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = c(0.0, -t * lambda).exp();
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    Ok(ComplexMatrix(scaled * q.adjoint()))
}

/// Spectral decomposition of a Hermitian matrix: real eigenvalues (ascending)
/// and the unitary matrix of eigenvectors (columns).
pub fn eigh(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    h.require_square("eigh")?;
    let eig = SymmetricEigen::new(h.hermitian_part().0);
    let mut pairs: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = h.rows();
    let vecs = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, pairs[j].1)]);
    Ok((pairs.into_iter().map(|p| p.0).collect(), vecs))
}

/// Operator norm: the largest singular value.
pub fn opnorm(a: &ComplexMatrix) -> f64 {
    if a.rows() == 1 || a.cols() == 1 {
        return a.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    a.0.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Kronecker product, first factor outer.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix(a.0.kronecker(&b.0))
}

/// `A ⊗ 1_{dim_e}`
pub fn embed_system(a: &ComplexMatrix, dim_e: usize) -> ComplexMatrix {
    if dim_e == 1 {
        return a.clone();
    }
    kron(a, &ComplexMatrix::identity(dim_e))
}

/// Partial trace over the system (outer) factor of a `(dim_s·dim_e)`-square matrix.
pub fn partial_trace_system(
    a: &ComplexMatrix,
    dim_s: usize,
    dim_e: usize,
) -> Result<ComplexMatrix> {
    let n = a.require_square("partial_trace_system")?;
    if dim_s == 0 || dim_e == 0 || dim_s.checked_mul(dim_e) != Some(n) {
        return Err(Error::Dimension(format!(
            "partial trace of a {n}x{n} matrix over dims {dim_s}x{dim_e}"
        )));
    }
    let mut out = ComplexMatrix::zeros(dim_e, dim_e);
    for s in 0..dim_s {
        let base = s * dim_e;
        for i in 0..dim_e {
            for j in 0..dim_e {
                out[(i, j)] += a[(base + i, base + j)];
            }
        }
    }
    Ok(out)
}

/// Unitary factor `U` of the polar decomposition `A = U P`.
pub fn polar_unitary(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.require_square("polar_unitary")?;
    if n == 1 {
        let z = a[(0, 0)];
        if z.norm() <= POLAR_RANK_TOL {
            return Err(Error::RankDeficient { smallest: z.norm() });
        }
        return Ok(ComplexMatrix::from_fn(1, 1, |_, _| z / z.norm()));
    }
    let svd = a.0.clone().svd(true, true);
    let smallest = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if smallest <= POLAR_RANK_TOL {
        return Err(Error::RankDeficient { smallest });
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(Error::Convergence {
                what: "svd".into(),
                achieved: f64::NAN,
            })
        }
    };
    Ok(ComplexMatrix(u * v_t))
}

/// Phase `θ` minimising `‖A − e^{iθ} B‖` to first order, `arg tr(B* A)`.
pub fn aligning_phase(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let overlap = (b.adjoint() * a).trace();
    if overlap.norm() == 0.0 {
        0.0
    } else {
        overlap.arg()
    }
}

/// `min_θ ‖A − e^{iθ} B‖`, with the phase taken from `tr(B* A)`.
pub fn dist_up_to_phase(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let theta = aligning_phase(a, b);
    opnorm(&(a - &b.scale(c(0.0, theta).exp())))
}

/// Operator-norm distance.
pub fn dist(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    opnorm(&(a - b))
}

/// Fallback for unitaries on which the QR sweep stalls: `U` is normal, so the
/// Hermitian matrix `Re U + μ Im U` shares its eigenvectors for any real `μ`
/// that keeps distinct eigenphases apart. Returns `(Q, Q* U Q)`.
fn normal_eigenvectors(u: &ComplexMatrix) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let n = u.rows();
    let re = (u + &u.adjoint()).scale_re(0.5);
    let im = (u - &u.adjoint()).scale(c(0.0, -0.5));
    let mut best: Option<(f64, DMatrix<C64>, DMatrix<C64>)> = None;
    for mu in [
        0.618_033_988_749_895,
        -1.324_717_957_244_746,
        std::f64::consts::E,
        0.0,
    ] {
        let mix = &re + &im.scale_re(mu);
        let q = SymmetricEigen::new(mix.hermitian_part().0).eigenvectors;
        let t = q.adjoint() * &u.0 * &q;
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| t[(i, j)].norm())
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|b| off < b.0) {
            best = Some((off, q, t));
        }
        if off <= DEFAULT_TOL {
            break;
        }
    }
    let (off, q, t) = best.unwrap();
    if off > 1e-10 {
        return Err(Error::Convergence {
            what: "unitary eigendecomposition".into(),
            achieved: off,
        });
    }
    Ok((q, t))
}

/// Eigen-decomposition of a unitary matrix: eigenphases in `(-π, π]` and the
/// unitary eigenvector matrix. Phases within `tie_tol` of `-π` are moved to `+π`.
pub(crate) fn unitary_eigenphases(
    u: &ComplexMatrix,
    tie_tol: f64,
) -> Result<(Vec<f64>, ComplexMatrix, bool)> {
    let n = u.require_square("unitary_eigenphases")?;
    if n == 1 {
        let mut theta = u[(0, 0)].arg();
        let mut tie = false;
        if (theta + std::f64::consts::PI).abs() <= tie_tol
            || (theta - std::f64::consts::PI).abs() <= tie_tol
        {
            theta = std::f64::consts::PI;
            tie = true;
        }
        return Ok((vec![theta], ComplexMatrix::identity(1), tie));
    }
    let (q, t) = match Schur::try_new(u.0.clone(), f64::EPSILON, 10_000) {
        Some(schur) => schur.unpack(),
        None => normal_eigenvectors(u)?,
    };
    let mut tie_count = 0usize;
    let phases: Vec<f64> = (0..n)
        .map(|j| {
            let theta = t[(j, j)].arg();
            if (theta + std::f64::consts::PI).abs() <= tie_tol
                || (theta - std::f64::consts::PI).abs() <= tie_tol
            {
                tie_count += 1;
                std::f64::consts::PI
            } else {
                theta
            }
        })
        .collect();
    Ok((phases, ComplexMatrix(q), tie_count > 1))
}
