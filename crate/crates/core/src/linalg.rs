//! Complex linear-algebra domain types: operators, pure states, Bloch vectors
//! and the doubled-real representation used by the information matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Max-abs tolerance for hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance for unit-norm checks on states.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance accepted by [`bloch_to_projector`] on |r|.
pub const BLOCH_NORM_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexOperator(CMatrix);

impl ComplexOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        Ok(Self(entries))
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(dim: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(Self(CMatrix::from_row_slice(dim, dim, entries)))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn pauli_x() -> Self {
        Self(CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]))
    }

    pub fn pauli_y() -> Self {
        Self(CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]))
    }

    pub fn pauli_z() -> Self {
        Self(CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.scale(factor))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    /// `A† self A`.
    pub fn conjugate_by_adjoint(&self, a: &Self) -> Self {
        Self(a.0.adjoint() * &self.0 * &a.0)
    }

    /// `A self A†`.
    pub fn conjugate_by(&self, a: &Self) -> Self {
        Self(&a.0 * &self.0 * a.0.adjoint())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max-abs entry of `self − self†`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                dev = dev.max((self.0[(r, c)] - self.0[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL
    }

    /// `(A + A†)/2`.
    pub fn symmetrized(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).scale(0.5))
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = SymmetricEigen::new(self.symmetrized().0)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    /// Eigenpairs of the hermitian part, sorted by descending eigenvalue.
    /// Ties keep the solver's order.
    pub fn eigenpairs_descending(&self) -> Vec<(f64, CVector)> {
        let eig = SymmetricEigen::new(self.symmetrized().0);
        let mut pairs: Vec<(f64, CVector)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, eig.eigenvectors.column(k).into_owned()))
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.0 * v
    }

    /// `⟨c|A|c⟩` (real part; exact for hermitian A).
    pub fn expectation(&self, state: &PureState) -> f64 {
        let c = &state.0;
        c.dotc(&(&self.0 * c)).re
    }

    /// `Tr(A ρ)` (real part).
    pub fn trace_with(&self, rho: &ComplexOperator) -> f64 {
        let n = self.dim();
        let mut acc = ZERO;
        for r in 0..n {
            for c in 0..n {
                acc += self.0[(r, c)] * rho.0[(c, r)];
            }
        }
        acc.re
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }
}

/// Normalized complex amplitude vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState(CVector);

impl PureState {
    /// Wraps amplitudes that are already unit-norm to within [`NORM_TOL`].
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self(amplitudes))
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self(amplitudes.unscale(norm)))
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Result<Self> {
        Self::normalized(CVector::from_column_slice(amplitudes))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Self(v)
    }

    /// Qubit state whose projector is `bloch_to_projector(BlochVector::from_angles(θ, φ))`,
    /// i.e. `cos(θ/2)|0⟩ + e^{−iφ} sin(θ/2)|1⟩`.
    pub fn from_bloch_angles(theta: f64, phi: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self(CVector::from_column_slice(&[
            Complex64::new(c, 0.0),
            Complex64::from_polar(s, -phi),
        ]))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn into_amplitudes(self) -> CVector {
        self.0
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.0.dotc(&other.0)
    }

    pub fn with_global_phase(&self, phi: f64) -> Self {
        let phase = Complex64::from_polar(1.0, phi);
        Self(self.0.map(|z| z * phase))
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// `|c⟩⟨c|`.
    pub fn density(&self) -> ComplexOperator {
        ComplexOperator(&self.0 * self.0.adjoint())
    }

    /// Returns `e^{iφ} self` with φ chosen so that `⟨reference|e^{iφ} self⟩` is real and non-negative.
    pub fn phase_aligned_to(&self, reference: &Self) -> Self {
        Self(align_phase(&self.0, &reference.0))
    }
}

/// Multiplies `v` by the global phase maximizing `Re⟨reference|v⟩`.
pub fn align_phase(v: &CVector, reference: &CVector) -> CVector {
    let overlap = reference.dotc(v);
    if overlap.norm() == 0.0 {
        return v.clone();
    }
    let phase = overlap.conj() / overlap.norm();
    v.map(|z| z * phase)
}

/// Amplitudes as `[re, im]` pairs, the on-disk form used by every JSON file.
pub fn to_pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn from_pairs(pairs: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(pairs.len(), pairs.iter().map(|p| Complex64::new(p[0], p[1])))
}

/// Real 3-vector on (or inside) the Bloch sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self::new(st * cp, st * sp, ct)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NonUnitVector(n));
        }
        Ok(Self::new(self.x / n, self.y / n, self.z / n))
    }

    pub fn ensure_unit(&self, tol: f64) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > tol || !n.is_finite() {
            return Err(Error::NonUnitVector(n));
        }
        Ok(())
    }

    /// `2·P(r) − I = r_x σ_x − r_y σ_y + r_z σ_z`, where `P(r)` is the
    /// projector of [`bloch_to_projector`]. The projector convention puts
    /// `(r_x + i r_y)/2` above the diagonal, which mirrors y relative to `r·σ`.
    pub fn operator(&self) -> ComplexOperator {
        ComplexOperator::pauli_x()
            .scale(self.x)
            .sub(&ComplexOperator::pauli_y().scale(self.y))
            .add(&ComplexOperator::pauli_z().scale(self.z))
    }

    /// Bloch vector of a 2×2 hermitian operator with unit trace.
    pub fn of_operator(op: &ComplexOperator) -> Self {
        let m = op.matrix();
        let off = m[(0, 1)] * 2.0;
        Self::new(off.re, off.im, (m[(0, 0)] - m[(1, 1)]).re)
    }
}

/// `½(I + r·σ)` for a unit Bloch vector.
pub fn bloch_to_projector(r: &BlochVector) -> Result<ComplexOperator> {
    r.ensure_unit(BLOCH_NORM_TOL)?;
    Ok(bloch_matrix(r))
}

pub(crate) fn bloch_matrix(r: &BlochVector) -> ComplexOperator {
    ComplexOperator(CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new((1.0 + r.z) / 2.0, 0.0),
            Complex64::new(r.x / 2.0, r.y / 2.0),
            Complex64::new(r.x / 2.0, -r.y / 2.0),
            Complex64::new((1.0 - r.z) / 2.0, 0.0),
        ],
    ))
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &PureState, b: &PureState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(a.inner(b).norm_sqr().min(1.0))
}

/// Doubled-real state `(Re c, Im c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealState(pub DVector<f64>);

/// Doubled-real operator `[[Re Λ, −Im Λ], [Im Λ, Re Λ]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealOperator(pub DMatrix<f64>);

pub fn realify_state(c: &PureState) -> RealState {
    RealState(realify_vector(c.amplitudes()))
}

pub fn realify_vector(v: &CVector) -> DVector<f64> {
    let s = v.len();
    DVector::from_fn(2 * s, |k, _| if k < s { v[k].re } else { v[k - s].im })
}

pub fn complexify_vector(v: &DVector<f64>) -> CVector {
    let s = v.len() / 2;
    CVector::from_fn(s, |k, _| Complex64::new(v[k], v[k + s]))
}

pub fn realify_operator(op: &ComplexOperator) -> Result<RealOperator> {
    let dev = op.hermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let s = op.dim();
    let m = op.matrix();
    Ok(RealOperator(DMatrix::from_fn(2 * s, 2 * s, |r, c| {
        let z = m[(r % s, c % s)];
        match (r < s, c < s) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })))
}
