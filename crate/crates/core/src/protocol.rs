//! Measurement protocols: instrumental matrices, weights, the decomposition of
//! unity, Bloch-sphere rotations and tensor-product multi-qubit protocols.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BlochVector, CMatrix, CVector, ComplexOperator, PureState};

/// Max-abs tolerance on `Σ t_j Λ_j − n·I`, relative to `max(n, 1)`.
pub const UNITY_TOL: f64 = 1e-10;

/// Bound on the size of tensor-product constructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResourceLimit {
    /// Maximum of `rows × dim` (protocols) or `kraus × dim²` (channels).
    pub max_entries: usize,
}

impl Default for ResourceLimit {
    /// Admits the 8-row protocol up to 4 qubits.
    fn default() -> Self {
        Self { max_entries: 1 << 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Tetrahedron,
    Cube,
    Octahedron,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [Self::Tetrahedron, Self::Cube, Self::Octahedron];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Tetrahedron => "tetrahedron",
            Self::Cube => "cube",
            Self::Octahedron => "octahedron",
        }
    }

    /// Rows of the instrumental matrix.
    ///
    /// The 6-row "cube" rows are the Pauli eigenstates (octahedron vertices on the
    /// Bloch sphere) and the 8-row "octahedron" rows sit at cube vertices; the
    /// names follow the customary labels for these protocols.
    pub fn rows(&self) -> Vec<CVector> {
        let s3 = 3f64.sqrt();
        let big = (s3 + 1.0).sqrt();
        let small = (s3 - 1.0).sqrt();
        let scale = 12f64.powf(-0.25);
        let e = |k: f64| Complex64::from_polar(1.0, k * PI / 4.0);
        let re = |x: f64| Complex64::new(x, 0.0);
        let row = |a: Complex64, b: Complex64| CVector::from_column_slice(&[a, b]);

        match self {
            Self::Tetrahedron => vec![
                row(re(big * scale), e(1.0) * small * scale),
                row(re(small * scale), e(3.0) * big * scale),
                row(re(big * scale), e(5.0) * small * scale),
                row(re(small * scale), e(7.0) * big * scale),
            ],
            Self::Cube => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let i = Complex64::new(0.0, h);
                vec![
                    row(re(1.0), re(0.0)),
                    row(re(0.0), re(1.0)),
                    row(re(h), re(h)),
                    row(re(h), re(-h)),
                    row(re(h), i),
                    row(re(h), -i),
                ]
            }
            Self::Octahedron => {
                let mut rows = Vec::with_capacity(8);
                for k in [1.0, 3.0, 5.0, 7.0] {
                    rows.push(row(re(big * scale), e(k) * small * scale));
                }
                for k in [1.0, 3.0, 5.0, 7.0] {
                    rows.push(row(re(small * scale), e(k) * big * scale));
                }
                rows
            }
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tetrahedron" | "tetra" => Ok(Self::Tetrahedron),
            "cube" => Ok(Self::Cube),
            "octahedron" | "octa" => Ok(Self::Octahedron),
            other => Err(Error::UnknownProtocol(other.to_string())),
        }
    }
}

/// Instrumental matrix rows `X_j`, weights `t_j` and total sample size `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    label: String,
    rows: Vec<CVector>,
    weights: Vec<f64>,
    n: f64,
}

impl Protocol {
    /// Validates shapes, positivity of the weights and `Σ t_j X_j†X_j = n·I`.
    pub fn new(label: impl Into<String>, rows: Vec<CVector>, weights: Vec<f64>, n: f64) -> Result<Self> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::param("n", format!("sample size must be positive, got {n}")));
        }
        if rows.is_empty() {
            return Err(Error::param("rows", "protocol has no rows"));
        }
        if rows.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: weights.len(),
            });
        }
        let dim = rows[0].len();
        if dim < 2 {
            return Err(Error::param("rows", "row length must be at least 2"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::param("weights", format!("weights must be positive, got {w}")));
        }
        let protocol = Self {
            label: label.into(),
            rows,
            weights,
            n,
        };
        let residual = protocol.unity_residual();
        if residual > UNITY_TOL * n.max(1.0) {
            return Err(Error::UnityViolated(residual));
        }
        Ok(protocol)
    }

    /// One of the built-in polyhedral qubit protocols with uniform weights `2n/m`.
    pub fn build(kind: ProtocolKind, n: f64) -> Result<Self> {
        let rows = kind.rows();
        let t = 2.0 * n / rows.len() as f64;
        let weights = vec![t; rows.len()];
        Self::new(kind.name(), rows, weights, n)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rows(&self) -> &[CVector] {
        &self.rows
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same rows and relative weights, rescaled to a new sample size.
    pub fn with_sample_size(&self, n: f64) -> Result<Self> {
        let factor = n / self.n;
        Self::new(
            self.label.clone(),
            self.rows.clone(),
            self.weights.iter().map(|t| t * factor).collect(),
            n,
        )
    }

    /// Max-abs entry of `Σ t_j X_j†X_j − n·I`.
    pub fn unity_residual(&self) -> f64 {
        unity_residual(&self.measurement_operators(), &self.weights, self.n)
    }

    /// `Λ_j = X_j†X_j`.
    pub fn measurement_operators(&self) -> Vec<ComplexOperator> {
        self.rows.iter().map(row_projector).collect()
    }

    /// Rotates every measurement direction by `angle` about `axis`
    /// (right-hand rule): `X_j ↦ X_j U†`, see [`rotation_unitary`].
    pub fn rotate(&self, axis: &BlochVector, angle: f64) -> Result<Self> {
        if self.dim() != 2 {
            return Err(Error::param(
                "protocol",
                "rotation is defined for single-qubit protocols",
            ));
        }
        let u = rotation_unitary(axis, angle)?;
        let u_dag = u.adjoint();
        let rows = self.rows.iter().map(|x| u_dag.matrix().transpose() * x).collect();
        Self::new(
            format!(
                "{} rot({:.6},{:.6},{:.6};{:.6})",
                self.label, axis.x, axis.y, axis.z, angle
            ),
            rows,
            self.weights.clone(),
            self.n,
        )
    }

    /// `q`-fold tensor power. Rows are Kronecker products in lexicographic order
    /// (first factor slowest); weights are `Π t_{j_i} / n^{q−1}`.
    pub fn tensor_power(&self, qubits: usize, limit: ResourceLimit) -> Result<Self> {
        if qubits == 0 {
            return Err(Error::param("qubits", "qubit count must be at least 1"));
        }
        let m = self.len();
        let rows_total = m.checked_pow(qubits as u32);
        let dim_total = self.dim().checked_pow(qubits as u32);
        let entries = rows_total.zip(dim_total).and_then(|(r, d)| r.checked_mul(d));
        match entries {
            Some(e) if e <= limit.max_entries => {}
            _ => {
                return Err(Error::ResourceLimit(format!(
                    "{}-fold tensor power of a {m}-row protocol exceeds {} entries",
                    qubits, limit.max_entries
                )))
            }
        }
        if qubits == 1 {
            return Ok(self.clone());
        }
        let mut rows = self.rows.clone();
        let mut weights = self.weights.clone();
        for _ in 1..qubits {
            let mut next_rows = Vec::with_capacity(rows.len() * m);
            let mut next_weights = Vec::with_capacity(rows.len() * m);
            for (r, w) in rows.iter().zip(&weights) {
                for (s, v) in self.rows.iter().zip(&self.weights) {
                    next_rows.push(r.kronecker(s));
                    next_weights.push(w * v / self.n);
                }
            }
            rows = next_rows;
            weights = next_weights;
        }
        Self::new(format!("{}^{}", self.label, qubits), rows, weights, self.n)
    }

    pub fn to_file(&self) -> ProtocolFile {
        ProtocolFile {
            label: self.label.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            weights: self.weights.clone(),
            n: self.n,
        }
    }

    pub fn from_file(file: &ProtocolFile) -> Result<Self> {
        let rows = file
            .rows
            .iter()
            .map(|r| CVector::from_iterator(r.len(), r.iter().map(|[re, im]| Complex64::new(*re, *im))))
            .collect();
        Self::new(file.label.clone(), rows, file.weights.clone(), file.n)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

/// On-disk protocol layout; complex entries are `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolFile {
    pub label: String,
    pub rows: Vec<Vec<[f64; 2]>>,
    pub weights: Vec<f64>,
    pub n: f64,
}

/// `X†X` for a row (bra) vector `X`.
pub fn row_projector(row: &CVector) -> ComplexOperator {
    let m: CMatrix = row.conjugate() * row.transpose();
    ComplexOperator::new(m).expect("outer product is square")
}

/// Unitary `U` with `Λ ↦ UΛU†` rotating Bloch vectors (in the frame of
/// [`bloch_to_projector`](crate::linalg::bloch_to_projector)) by `angle` about
/// `axis`, right-hand rule: `U = cos(angle/2)·I + i·sin(angle/2)·A`, with
/// `A = axis.operator()`.
pub fn rotation_unitary(axis: &BlochVector, angle: f64) -> Result<ComplexOperator> {
    axis.ensure_unit(crate::linalg::BLOCH_NORM_TOL)?;
    let (s, c) = (angle / 2.0).sin_cos();
    let gen = axis.operator().into_matrix() * Complex64::new(0.0, s);
    ComplexOperator::new(CMatrix::identity(2, 2) * Complex64::new(c, 0.0) + gen)
}

fn unity_residual(ops: &[ComplexOperator], weights: &[f64], n: f64) -> f64 {
    let dim = ops[0].dim();
    let mut acc = ComplexOperator::identity(dim).scale(-n);
    for (op, t) in ops.iter().zip(weights) {
        acc = acc.add(&op.scale(*t));
    }
    acc.max_abs()
}

/// Measurement operators `Λ_j` (clear or fuzzy) with their weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveMeasurement {
    label: String,
    operators: Vec<ComplexOperator>,
    weights: Vec<f64>,
    n: f64,
}

impl EffectiveMeasurement {
    /// Checks hermiticity, positivity and the decomposition of unity.
    pub fn new(label: impl Into<String>, operators: Vec<ComplexOperator>, weights: Vec<f64>, n: f64) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::param("operators", "measurement has no operators"));
        }
        if operators.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: operators.len(),
                found: weights.len(),
            });
        }
        let dim = operators[0].dim();
        for op in &operators {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
            let dev = op.hermitian_deviation();
            if dev > crate::linalg::HERMITIAN_TOL {
                return Err(Error::NotHermitian(dev));
            }
        }
        let residual = unity_residual(&operators, &weights, n);
        if residual > UNITY_TOL * n.max(1.0) {
            return Err(Error::UnityViolated(residual));
        }
        Ok(Self {
            label: label.into(),
            operators,
            weights,
            n,
        })
    }

    pub(crate) fn new_unchecked(label: String, operators: Vec<ComplexOperator>, weights: Vec<f64>, n: f64) -> Self {
        Self {
            label,
            operators,
            weights,
            n,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn operators(&self) -> &[ComplexOperator] {
        &self.operators
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.operators[0].dim()
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn unity_residual(&self) -> f64 {
        unity_residual(&self.operators, &self.weights, self.n)
    }

    /// `λ_j = c†Λ_j c`.
    pub fn probabilities(&self, state: &PureState) -> Result<Vec<f64>> {
        self.check_dim(state.dim())?;
        Ok(self.operators.iter().map(|op| op.expectation(state)).collect())
    }

    /// `λ_j = Tr(Λ_j ρ)`.
    pub fn probabilities_density(&self, rho: &ComplexOperator) -> Result<Vec<f64>> {
        self.check_dim(rho.dim())?;
        Ok(self.operators.iter().map(|op| op.trace_with(rho)).collect())
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }
}

impl From<&Protocol> for EffectiveMeasurement {
    fn from(p: &Protocol) -> Self {
        measurement_operators(p)
    }
}

/// Clear measurement operators of a protocol.
pub fn measurement_operators(p: &Protocol) -> EffectiveMeasurement {
    EffectiveMeasurement::new_unchecked(p.label.clone(), p.measurement_operators(), p.weights.clone(), p.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{bloch_to_projector, ComplexOperator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut impl Rng, dim: usize) -> PureState {
        PureState::normalized(CVector::from_fn(dim, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        }))
        .unwrap()
    }

    fn random_axis(rng: &mut impl Rng) -> BlochVector {
        BlochVector::from_angles(rng.random::<f64>() * PI, rng.random::<f64>() * 2.0 * PI)
    }

    #[test]
    fn tetrahedron_first_row() {
        let p = Protocol::build(ProtocolKind::Tetrahedron, 1.0).unwrap();
        let row = &p.rows()[0];
        let scale = 12f64.powf(-0.25);
        assert!((row[0].re - (3f64.sqrt() + 1.0).sqrt() * scale).abs() < 1e-15);
        let expected = Complex64::from_polar((3f64.sqrt() - 1.0).sqrt() * scale, PI / 4.0);
        assert!((row[1] - expected).norm() < 1e-15);
        for r in p.rows() {
            assert!((r.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cube_unity_with_n3() {
        let p = Protocol::build(ProtocolKind::Cube, 3.0).unwrap();
        assert!(p.weights().iter().all(|&t| (t - 1.0).abs() < 1e-15));
        // Oracle: explicit sum of the six printed projectors.
        let mut sum = ComplexOperator::zeros(2);
        for r in ProtocolKind::Cube.rows() {
            sum = sum.add(&row_projector(&r));
        }
        assert!(sum.max_abs_diff(&ComplexOperator::identity(2).scale(3.0)) < 1e-15);
        assert!(p.unity_residual() < 1e-14);
    }

    #[test]
    fn octahedron_rows_sum_to_four() {
        let rows = ProtocolKind::Octahedron.rows();
        assert_eq!(rows.len(), 8);
        let mut sum = ComplexOperator::zeros(2);
        for r in &rows {
            assert!((r.norm() - 1.0).abs() < 1e-15);
            sum = sum.add(&row_projector(r));
        }
        assert!(sum.max_abs_diff(&ComplexOperator::identity(2).scale(4.0)) < 1e-14);
    }

    #[test]
    fn octahedron_directions_are_cube_vertices() {
        for r in ProtocolKind::Octahedron.rows() {
            let b = BlochVector::of_operator(&row_projector(&r));
            let inv = 1.0 / 3f64.sqrt();
            for comp in [b.x, b.y, b.z] {
                assert!((comp.abs() - inv).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tetrahedron_directions_form_regular_tetrahedron() {
        let dirs: Vec<_> = ProtocolKind::Tetrahedron
            .rows()
            .iter()
            .map(|r| BlochVector::of_operator(&row_projector(r)))
            .collect();
        for i in 0..4 {
            for j in i + 1..4 {
                let dot = dirs[i].x * dirs[j].x + dirs[i].y * dirs[j].y + dirs[i].z * dirs[j].z;
                assert!((dot + 1.0 / 3.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cube_measurement_operators() {
        let p = Protocol::build(ProtocolKind::Cube, 1.0).unwrap();
        let ops = p.measurement_operators();
        let z = bloch_to_projector(&BlochVector::new(0.0, 0.0, 1.0)).unwrap();
        assert!(ops[0].max_abs_diff(&z) < 1e-15);
        let x = bloch_to_projector(&BlochVector::new(1.0, 0.0, 0.0)).unwrap();
        assert!(ops[2].max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn tetra_projector_diagonal() {
        let p = Protocol::build(ProtocolKind::Tetrahedron, 1.0).unwrap();
        let op = &p.measurement_operators()[0];
        let s3 = 3f64.sqrt();
        assert!((op.get(0, 0).re - (s3 + 1.0) / (2.0 * s3)).abs() < 1e-15);
        assert!((op.get(1, 1).re - (s3 - 1.0) / (2.0 * s3)).abs() < 1e-15);
        assert!(op.mul(op).max_abs_diff(op) < 1e-15);
    }

    #[test]
    fn probabilities_on_basis_state() {
        let zero = PureState::basis(2, 0);
        let cube = measurement_operators(&Protocol::build(ProtocolKind::Cube, 1.0).unwrap());
        let lam = cube.probabilities(&zero).unwrap();
        let expected = [1.0, 0.0, 0.5, 0.5, 0.5, 0.5];
        for (a, b) in lam.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }

        let tetra = measurement_operators(&Protocol::build(ProtocolKind::Tetrahedron, 1.0).unwrap());
        let lam = tetra.probabilities(&zero).unwrap();
        let hi = (3f64.sqrt() + 1.0) / (2.0 * 3f64.sqrt());
        let lo = (3f64.sqrt() - 1.0) / (2.0 * 3f64.sqrt());
        for (a, b) in lam.iter().zip([hi, lo, hi, lo]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((hi - 0.78868).abs() < 1e-5);
    }

    #[test]
    fn maximally_mixed_gives_one_half() {
        let rho = ComplexOperator::identity(2).scale(0.5);
        for kind in ProtocolKind::ALL {
            let meas = measurement_operators(&Protocol::build(kind, 10.0).unwrap());
            for l in meas.probabilities_density(&rho).unwrap() {
                assert!((l - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn probabilities_reject_dimension_mismatch() {
        let meas = measurement_operators(&Protocol::build(ProtocolKind::Cube, 1.0).unwrap());
        assert!(matches!(
            meas.probabilities(&PureState::basis(4, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn weighted_probabilities_sum_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in ProtocolKind::ALL {
            let n = 4000.0;
            let meas = measurement_operators(&Protocol::build(kind, n).unwrap());
            for _ in 0..1000 {
                let st = random_state(&mut rng, 2);
                let lam = meas.probabilities(&st).unwrap();
                assert!(lam.iter().all(|&l| (-1e-12..=1.0 + 1e-12).contains(&l)));
                let total: f64 = lam.iter().zip(meas.weights()).map(|(l, t)| l * t).sum();
                assert!((total - n).abs() <= 1e-9 * n);
            }
        }
    }

    #[test]
    fn unknown_kind_and_bad_n() {
        assert!(matches!(
            "dodecahedron".parse::<ProtocolKind>(),
            Err(Error::UnknownProtocol(_))
        ));
        assert!(Protocol::build(ProtocolKind::Cube, 0.0).is_err());
        assert!(Protocol::build(ProtocolKind::Cube, f64::NAN).is_err());
    }

    #[test]
    fn non_unity_protocol_rejected() {
        let rows = vec![CVector::from_column_slice(&[
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        ])];
        assert!(matches!(
            Protocol::new("bad", rows, vec![1.0], 1.0),
            Err(Error::UnityViolated(_))
        ));
    }

    #[test]
    fn rotation_trivial_angles() {
        let p = Protocol::build(ProtocolKind::Tetrahedron, 1.0).unwrap();
        let axis = BlochVector::new(0.6, 0.0, 0.8);
        let same = p.rotate(&axis, 0.0).unwrap();
        for (a, b) in same.rows().iter().zip(p.rows()) {
            assert!((a - b).norm() < 1e-15);
        }
        let full = p.rotate(&axis, 2.0 * PI).unwrap();
        for (a, b) in full.measurement_operators().iter().zip(p.measurement_operators()) {
            assert!(a.max_abs_diff(&b) < 1e-14);
        }
    }

    #[test]
    fn rotation_follows_right_hand_rule() {
        let p = Protocol::build(ProtocolKind::Cube, 1.0).unwrap();
        let close = |b: BlochVector, x: f64, y: f64, z: f64| {
            (b.x - x).abs() < 1e-15 && (b.y - y).abs() < 1e-15 && (b.z - z).abs() < 1e-15
        };
        // z about x by π/2 lands on −y.
        let r = p.rotate(&BlochVector::new(1.0, 0.0, 0.0), PI / 2.0).unwrap();
        let b = BlochVector::of_operator(&r.measurement_operators()[0]);
        assert!(close(b, 0.0, -1.0, 0.0), "{b:?}");
        // z about y by π/2 lands on +x.
        let r = p.rotate(&BlochVector::new(0.0, 1.0, 0.0), PI / 2.0).unwrap();
        let b = BlochVector::of_operator(&r.measurement_operators()[0]);
        assert!(close(b, 1.0, 0.0, 0.0), "{b:?}");
        // x about z by π/2 lands on +y.
        let r = p.rotate(&BlochVector::new(0.0, 0.0, 1.0), PI / 2.0).unwrap();
        let b = BlochVector::of_operator(&r.measurement_operators()[2]);
        assert!(close(b, 0.0, 1.0, 0.0), "{b:?}");
    }

    #[test]
    fn rotation_rejects_non_unit_axis() {
        let p = Protocol::build(ProtocolKind::Cube, 1.0).unwrap();
        assert!(matches!(
            p.rotate(&BlochVector::new(1.0, 1.0, 0.0), 0.3),
            Err(Error::NonUnitVector(_))
        ));
    }

    #[test]
    fn rotation_preserves_unity_and_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in ProtocolKind::ALL {
            let p = Protocol::build(kind, 7.0).unwrap();
            for _ in 0..50 {
                let axis = random_axis(&mut rng);
                let (a, b) = (rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0);
                let step = p.rotate(&axis, a).unwrap().rotate(&axis, b).unwrap();
                let once = p.rotate(&axis, a + b).unwrap();
                assert!(step.unity_residual() <= 1e-10);
                for (x, y) in step.measurement_operators().iter().zip(once.measurement_operators()) {
                    assert!(x.max_abs_diff(&y) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn tensor_protocol_shapes() {
        let n = 8.0;
        let t = Protocol::build(ProtocolKind::Tetrahedron, n).unwrap();
        let t2 = t.tensor_power(2, ResourceLimit::default()).unwrap();
        assert_eq!(t2.len(), 16);
        assert_eq!(t2.dim(), 4);
        assert!(t2.weights().iter().all(|&w| (w - n / 4.0).abs() < 1e-12));
        assert!(t2.unity_residual() <= 1e-10 * n);

        let c = Protocol::build(ProtocolKind::Cube, n).unwrap();
        assert_eq!(c.tensor_power(1, ResourceLimit::default()).unwrap(), c);

        let c2 = measurement_operators(&c.tensor_power(2, ResourceLimit::default()).unwrap());
        assert_eq!(c2.len(), 36);
        let lam = c2.probabilities(&PureState::basis(4, 0)).unwrap();
        assert!((lam[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_protocol_resource_guard() {
        let o = Protocol::build(ProtocolKind::Octahedron, 1.0).unwrap();
        assert!(o.tensor_power(4, ResourceLimit::default()).is_ok());
        assert!(matches!(
            o.tensor_power(5, ResourceLimit::default()),
            Err(Error::ResourceLimit(_))
        ));
        assert!(o.tensor_power(0, ResourceLimit::default()).is_err());
    }

    #[test]
    fn tensor_probabilities_factor_on_product_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in ProtocolKind::ALL {
            let p = Protocol::build(kind, 1.0).unwrap();
            let single = measurement_operators(&p);
            let double = measurement_operators(&p.tensor_power(2, ResourceLimit::default()).unwrap());
            let m = p.len();
            for _ in 0..20 {
                let a = random_state(&mut rng, 2);
                let b = random_state(&mut rng, 2);
                let la = single.probabilities(&a).unwrap();
                let lb = single.probabilities(&b).unwrap();
                let lab = double.probabilities(&a.tensor(&b)).unwrap();
                for j in 0..m {
                    for k in 0..m {
                        assert!((lab[j * m + k] - la[j] * lb[k]).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}
