//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Everything here is immutable once built. Constructors validate the type
//! invariants against [`TOL`]; operations are free functions so they read
//! like the bra-ket expressions they implement.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub norm: f64,
    pub hermitian: f64,
    pub trace: f64,
    pub psd: f64,
    pub unitary: f64,
    pub projector: f64,
    pub orthonormal: f64,
    pub imaginary_residue: f64,
    /// Degeneracy gap, relative to the spectral scale.
    pub degeneracy_rel: f64,
}

pub const TOL: Tolerances = Tolerances {
    norm: 1e-12,
    hermitian: 1e-12,
    trace: 1e-12,
    psd: 1e-10,
    unitary: 1e-10,
    projector: 1e-10,
    orthonormal: 1e-10,
    imaginary_residue: 1e-10,
    degeneracy_rel: 1e-9,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOL
    }
}

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest elementwise deviation `|m_ij - conj(m_ji)|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest elementwise deviation `|m_ij + conj(m_ji)|`.
pub fn anti_hermitian_deviation(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] + m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m^dag) / 2`, used to strip roundoff from products that are Hermitian
/// in exact arithmetic.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// StateVector

/// A normalized pure state in `C^d`, `d >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: CVector,
}

impl StateVector {
    /// Wraps already-normalized amplitudes.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let amps = CVector::from_vec(amps);
        if amps.len() < 2 {
            return Err(Error::InvalidDimension(amps.len()));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > TOL.norm {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amps })
    }

    /// Scales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        Self::from_vector(CVector::from_vec(amps))
    }

    pub fn from_vector(v: CVector) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::InvalidDimension(v.len()));
        }
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self {
            amps: v.unscale(norm),
        })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::normalized(amps.iter().map(|&x| c(x, 0.0)).collect())
    }

    /// Computational basis vector `|k>` in dimension `d`.
    pub fn basis(d: usize, k: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        if k >= d {
            return Err(Error::InvalidArgument(format!(
                "basis index {k} out of range for dimension {d}"
            )));
        }
        let mut amps = CVector::zeros(d);
        amps[k] = c(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn with_global_phase(&self, phi: f64) -> Self {
        Self {
            amps: self.amps.map(|z| z * C64::from_polar(1.0, phi)),
        }
    }

    /// Applies a unitary; the result is renormalized to absorb roundoff.
    pub fn evolve(&self, u: &UnitaryOperator) -> Result<Self> {
        check_dim(u.dim(), self.dim())?;
        Self::from_vector(u.matrix() * &self.amps)
    }
}

// ---------------------------------------------------------------------------
// Operator types

/// A density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        let d = check_square(&m)?;
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        let deviation = hermitian_deviation(&m);
        if deviation > TOL.hermitian {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = trace(&m).re;
        if (tr - 1.0).abs() > TOL.trace {
            return Err(Error::WrongTrace {
                trace: tr,
                expected: 1.0,
            });
        }
        let min = min_eigenvalue(&m);
        if min < -TOL.psd {
            return Err(Error::NotPsd { eigenvalue: min });
        }
        Ok(Self { m })
    }

    pub fn pure(s: &StateVector) -> Self {
        Self {
            m: outer(s.amplitudes(), s.amplitudes()),
        }
    }

    pub fn maximally_mixed(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        Ok(Self {
            m: identity(d).unscale(d as f64),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    m: CMatrix,
}

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        let d = check_square(&m)?;
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        let deviation = hermitian_deviation(&m);
        if deviation > TOL.hermitian {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { m })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let diag = CVector::from_iterator(values.len(), values.iter().map(|&x| c(x, 0.0)));
        Self::new(CMatrix::from_diagonal(&diag))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    /// `exp(-i H t)`, built from the spectral decomposition.
    pub fn propagator(&self, t: f64) -> UnitaryOperator {
        let spec = spectral(self, default_gap_tol(&sorted_eigenvalues(&self.m)))
            .expect("Hermitian by construction");
        let v = spec.vectors_matrix();
        let phases = CVector::from_iterator(
            spec.eigenvalues.len(),
            spec.eigenvalues
                .iter()
                .map(|&e| C64::from_polar(1.0, -e * t)),
        );
        let m = &v * CMatrix::from_diagonal(&phases) * v.adjoint();
        UnitaryOperator { m }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator {
    m: CMatrix,
}

impl UnitaryOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        let d = check_square(&m)?;
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        let deviation = frobenius(&(m.adjoint() * &m - identity(d)));
        if deviation > TOL.unitary {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self { m })
    }

    pub fn identity(d: usize) -> Self {
        Self { m: identity(d) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: self.m.adjoint(),
        }
    }
}

/// A rank-one orthogonal projector `|a><a|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    m: CMatrix,
}

impl Projector {
    pub fn new(m: CMatrix) -> Result<Self> {
        let d = check_square(&m)?;
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        let deviation = hermitian_deviation(&m);
        if deviation > TOL.hermitian {
            return Err(Error::NotHermitian { deviation });
        }
        let idem = frobenius(&(&m * &m - &m));
        if idem > TOL.projector {
            return Err(Error::NotProjector { deviation: idem });
        }
        let tr = trace(&m).re;
        if (tr - 1.0).abs() > TOL.projector {
            return Err(Error::WrongTrace {
                trace: tr,
                expected: 1.0,
            });
        }
        Ok(Self { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    vectors: Vec<StateVector>,
}

impl OrthonormalBasis {
    pub fn new(vectors: Vec<StateVector>) -> Result<Self> {
        let d = vectors.first().map(StateVector::dim).unwrap_or(0);
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        check_dim(d, vectors.len())?;
        for v in &vectors {
            check_dim(d, v.dim())?;
        }
        let mut deviation = 0.0f64;
        for (i, x) in vectors.iter().enumerate() {
            for (j, y) in vectors.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                let ip = x.amplitudes().dotc(y.amplitudes());
                deviation = deviation.max((ip - c(target, 0.0)).norm());
            }
        }
        if deviation > TOL.orthonormal {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self { vectors })
    }

    pub fn computational(d: usize) -> Result<Self> {
        let vectors = (0..d)
            .map(|k| StateVector::basis(d, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { vectors })
    }

    /// The columns of a unitary.
    pub fn from_unitary(u: &UnitaryOperator) -> Result<Self> {
        let vectors = u
            .matrix()
            .column_iter()
            .map(|col| StateVector::from_vector(col.into_owned()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vectors)
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[StateVector] {
        &self.vectors
    }
}

// ---------------------------------------------------------------------------
// Operations

pub fn outer(x: &CVector, y: &CVector) -> CMatrix {
    x * y.adjoint()
}

/// `<x|y>`, conjugate-linear in `x`.
pub fn inner(x: &StateVector, y: &StateVector) -> Result<C64> {
    check_dim(x.dim(), y.dim())?;
    Ok(x.amplitudes().dotc(y.amplitudes()))
}

/// `|<x|y>|^2`.
pub fn overlap_sq(x: &StateVector, y: &StateVector) -> Result<f64> {
    inner(x, y).map(|z| z.norm_sqr())
}

pub fn projector_of(x: &StateVector) -> Projector {
    Projector {
        m: outer(x.amplitudes(), x.amplitudes()),
    }
}

/// `Tr[r P]` for Hermitian `r`. An imaginary part above tolerance means the
/// input was not Hermitian and is rejected.
pub fn trace_product(r: &CMatrix, p: &Projector) -> Result<f64> {
    let d = check_square(r)?;
    check_dim(p.dim(), d)?;
    let pm = p.matrix();
    let mut acc = c(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += r[(i, j)] * pm[(j, i)];
        }
    }
    if acc.im.abs() > TOL.imaginary_residue {
        return Err(Error::ImaginaryResidue { residue: acc.im });
    }
    Ok(acc.re)
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let d = check_square(a)?;
    check_dim(d, check_square(b)?)?;
    Ok(a * b - b * a)
}

/// Eigenvalues and eigenvectors of a Hermitian operator, sorted ascending,
/// with eigenvalues grouped into degeneracy blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: OrthonormalBasis,
    /// Contiguous index ranges whose consecutive eigenvalues differ by less
    /// than `gap_tol`.
    pub blocks: Vec<Range<usize>>,
    pub gap_tol: f64,
}

impl SpectralDecomposition {
    /// Eigenvectors as the columns of a unitary matrix.
    pub fn vectors_matrix(&self) -> CMatrix {
        let d = self.eigenvalues.len();
        CMatrix::from_fn(d, d, |i, j| self.eigenvectors.vectors()[j].amplitudes()[i])
    }

    pub fn reconstruct(&self) -> CMatrix {
        let v = self.vectors_matrix();
        let diag = CVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&e| c(e, 0.0)),
        );
        &v * CMatrix::from_diagonal(&diag) * v.adjoint()
    }

    pub fn block_of(&self, index: usize) -> Range<usize> {
        self.blocks
            .iter()
            .find(|b| b.contains(&index))
            .cloned()
            .unwrap_or(index..index + 1)
    }

    /// Expresses `m` in the eigenbasis: `V^dag m V`.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        let v = self.vectors_matrix();
        v.adjoint() * m * v
    }

    /// Inverse of [`Self::to_eigenbasis`].
    pub fn from_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        let v = self.vectors_matrix();
        &v * m * v.adjoint()
    }
}

/// Default degeneracy gap: `1e-9` times the spectral scale, where the scale is
/// the spectral range, or the largest magnitude when the range vanishes.
pub fn default_gap_tol(eigenvalues: &[f64]) -> f64 {
    let lo = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mag = eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let range = hi - lo;
    let scale = if range > TOL.degeneracy_rel * mag {
        range
    } else {
        mag.max(1.0)
    };
    TOL.degeneracy_rel * scale
}

fn sorted_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

pub(crate) fn min_eigenvalue(m: &CMatrix) -> f64 {
    sorted_eigenvalues(m)[0]
}

pub fn spectral(h: &HermitianOperator, gap_tol: f64) -> Result<SpectralDecomposition> {
    let d = h.dim();
    let eig = SymmetricEigen::new(hermitian_part(h.matrix()));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| StateVector::from_vector(eig.eigenvectors.column(k).into_owned()))
        .collect::<Result<Vec<_>>>()?;
    let eigenvectors = OrthonormalBasis::new(vectors)?;

    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=d {
        if i == d || eigenvalues[i] - eigenvalues[i - 1] >= gap_tol {
            blocks.push(start..i);
            start = i;
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        blocks,
        gap_tol,
    })
}

/// [`spectral`] with [`default_gap_tol`].
pub fn spectral_default(h: &HermitianOperator) -> Result<SpectralDecomposition> {
    let tol = default_gap_tol(&sorted_eigenvalues(h.matrix()));
    spectral(h, tol)
}

// ---------------------------------------------------------------------------
// Pauli matrices

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

// ---------------------------------------------------------------------------
// JSON fixture format: vectors are `[[re, im], ...]`, matrices are row-major
// `[[[re, im], ...], ...]`.

pub mod json {
    use super::*;

    pub fn vector_to_pairs(v: &CVector) -> Vec<[f64; 2]> {
        v.iter().map(|z| [z.re, z.im]).collect()
    }

    pub fn pairs_to_vector(pairs: &[[f64; 2]]) -> CVector {
        CVector::from_iterator(pairs.len(), pairs.iter().map(|p| c(p[0], p[1])))
    }

    pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
        m.row_iter()
            .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
            .collect()
    }

    pub fn rows_to_matrix(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
        let n = rows.len();
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        Ok(CMatrix::from_fn(n, cols, |i, j| {
            c(rows[i][j][0], rows[i][j][1])
        }))
    }

    pub fn serialize_matrix<S: Serializer>(
        m: &CMatrix,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize_matrix<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        rows_to_matrix(&rows).map_err(D::Error::custom)
    }
}

impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        json::vector_to_pairs(&self.amps).serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        let v = json::pairs_to_vector(&pairs);
        StateVector::new(v.iter().copied().collect()).map_err(D::Error::custom)
    }
}

macro_rules! matrix_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                json::serialize_matrix(&self.m, s)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let m = json::deserialize_matrix(d)?;
                <$ty>::new(m).map_err(D::Error::custom)
            }
        }
    };
}

matrix_serde!(DensityMatrix);
matrix_serde!(HermitianOperator);
matrix_serde!(UnitaryOperator);
matrix_serde!(Projector);
