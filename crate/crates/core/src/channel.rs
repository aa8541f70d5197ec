//! Decoherence channels in Kraus form and their folding into measurement
//! operators.
//!
//! A channel `ρ ↦ Σ_k E_k ρ E_k†` placed in front of a measurement with
//! operators `Λ_j` produces the same event statistics on the input state as
//! the fuzzy operators `Σ_k E_k† Λ_j E_k` do, which is what [`fold_channel`]
//! computes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{bloch_matrix, BlochVector, CMatrix, ComplexOperator, BLOCH_NORM_TOL};
use crate::protocol::{EffectiveMeasurement, ResourceLimit};

/// Max-abs tolerance on `Σ_k E_k†E_k − I`.
pub const TRACE_PRESERVATION_TOL: f64 = 1e-12;
/// Kraus operators with Frobenius norm below this are dropped.
pub const ZERO_KRAUS_NORM: f64 = 1e-15;

/// Single-qubit noise models; durations are ratios to the relaxation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Identity,
    AmplitudeRelaxation {
        #[serde(rename = "t_over_T1")]
        t_over_t1: f64,
    },
    PureDephasing {
        #[serde(rename = "t_over_T2pure")]
        t_over_t2: f64,
    },
    BitFlip {
        p: f64,
    },
    PhaseFlip {
        p: f64,
    },
}

impl ChannelKind {
    pub fn amplitude_relaxation(t: f64, t1: f64) -> Result<Self> {
        if t1.is_nan() || t1 <= 0.0 {
            return Err(Error::param("T1", format!("must be positive, got {t1}")));
        }
        let kind = Self::AmplitudeRelaxation { t_over_t1: t / t1 };
        kind.validate()?;
        Ok(kind)
    }

    pub fn pure_dephasing(t: f64, t2: f64) -> Result<Self> {
        if t2.is_nan() || t2 <= 0.0 {
            return Err(Error::param("T2pure", format!("must be positive, got {t2}")));
        }
        let kind = Self::PureDephasing { t_over_t2: t / t2 };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        let ratio = |name: &str, x: f64| {
            if x.is_nan() || x < 0.0 {
                Err(Error::param(
                    name,
                    format!("duration ratio must be non-negative, got {x}"),
                ))
            } else {
                Ok(())
            }
        };
        let prob = |x: f64| {
            if (0.0..=0.5).contains(&x) {
                Ok(())
            } else {
                Err(Error::param(
                    "p",
                    format!("flip probability must lie in [0, 1/2], got {x}"),
                ))
            }
        };
        match *self {
            Self::Identity => Ok(()),
            Self::AmplitudeRelaxation { t_over_t1 } => ratio("t_over_T1", t_over_t1),
            Self::PureDephasing { t_over_t2 } => ratio("t_over_T2pure", t_over_t2),
            Self::BitFlip { p } | Self::PhaseFlip { p } => prob(p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::AmplitudeRelaxation { .. } => "amplitude_relaxation",
            Self::PureDephasing { .. } => "pure_dephasing",
            Self::BitFlip { .. } => "bit_flip",
            Self::PhaseFlip { .. } => "phase_flip",
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match *self {
            Self::Identity => {}
            Self::AmplitudeRelaxation { t_over_t1 } => {
                m.insert("t_over_T1".into(), t_over_t1);
            }
            Self::PureDephasing { t_over_t2 } => {
                m.insert("t_over_T2pure".into(), t_over_t2);
            }
            Self::BitFlip { p } | Self::PhaseFlip { p } => {
                m.insert("p".into(), p);
            }
        }
        m
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Identity => f.write_str("identity"),
            Self::AmplitudeRelaxation { t_over_t1 } => write!(f, "amplitude:t={t_over_t1}T1"),
            Self::PureDephasing { t_over_t2 } => write!(f, "dephasing:t={t_over_t2}T2"),
            Self::BitFlip { p } => write!(f, "bitflip:p={p}"),
            Self::PhaseFlip { p } => write!(f, "phaseflip:p={p}"),
        }
    }
}

/// Parses the compact command-line form, e.g. `dephasing:t=0.8T2`,
/// `amplitude:t=1.5T1`, `bitflip:p=0.1`, `phaseflip:p=0.1`, `identity`.
impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a.trim().to_ascii_lowercase(), Some(b.trim())),
            None => (s.to_ascii_lowercase(), None),
        };
        let value = |key: &str, suffixes: &[&str]| -> Result<f64> {
            let arg = arg.ok_or_else(|| Error::UnknownChannel(s.to_string()))?;
            let (k, v) = arg
                .split_once('=')
                .ok_or_else(|| Error::UnknownChannel(s.to_string()))?;
            if !k.trim().eq_ignore_ascii_case(key) {
                return Err(Error::UnknownChannel(s.to_string()));
            }
            let mut v = v.trim();
            for suffix in suffixes {
                if let Some(stripped) = v.strip_suffix(suffix) {
                    v = stripped.trim_end_matches('*').trim();
                    break;
                }
            }
            v.parse::<f64>().map_err(|_| Error::UnknownChannel(s.to_string()))
        };
        let kind = match name.as_str() {
            "identity" | "none" | "ideal" => Self::Identity,
            "amplitude" | "amplitude_relaxation" | "ampl" => Self::AmplitudeRelaxation {
                t_over_t1: value("t", &["T1"])?,
            },
            "dephasing" | "pure_dephasing" | "phase" => Self::PureDephasing {
                t_over_t2: value("t", &["T2pure", "T2"])?,
            },
            "bitflip" | "bit_flip" => Self::BitFlip { p: value("p", &[])? },
            "phaseflip" | "phase_flip" => Self::PhaseFlip { p: value("p", &[])? },
            _ => return Err(Error::UnknownChannel(s.to_string())),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Trace-preserving channel given by Kraus operators.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumChannel {
    kraus: Vec<ComplexOperator>,
    label: String,
    params: BTreeMap<String, f64>,
}

impl QuantumChannel {
    /// Drops negligible operators and checks `Σ_k E_k†E_k = I`.
    pub fn from_kraus(label: impl Into<String>, kraus: Vec<ComplexOperator>) -> Result<Self> {
        Self::with_params(label, kraus, BTreeMap::new())
    }

    fn with_params(
        label: impl Into<String>,
        kraus: Vec<ComplexOperator>,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let dim = kraus
            .first()
            .map(|k| k.dim())
            .ok_or_else(|| Error::param("kraus", "channel needs at least one Kraus operator"))?;
        if let Some(bad) = kraus.iter().find(|k| k.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let kept: Vec<_> = kraus.into_iter().filter(|k| k.norm() >= ZERO_KRAUS_NORM).collect();
        if kept.is_empty() {
            return Err(Error::NotTracePreserving(1.0));
        }
        let channel = Self {
            kraus: kept,
            label: label.into(),
            params,
        };
        let dev = channel.trace_preservation_deviation();
        if dev > TRACE_PRESERVATION_TOL {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(channel)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kraus: vec![ComplexOperator::identity(dim)],
            label: "identity".into(),
            params: BTreeMap::new(),
        }
    }

    pub fn kraus(&self) -> &[ComplexOperator] {
        &self.kraus
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].dim()
    }

    /// Max-abs entry of `Σ_k E_k†E_k − I`.
    pub fn trace_preservation_deviation(&self) -> f64 {
        let dim = self.dim();
        let mut acc = ComplexOperator::identity(dim).scale(-1.0);
        for k in &self.kraus {
            acc = acc.add(&k.adjoint().mul(k));
        }
        acc.max_abs()
    }

    /// `Σ_k E_k ρ E_k†`.
    pub fn apply(&self, rho: &ComplexOperator) -> Result<ComplexOperator> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rho.dim(),
            });
        }
        let mut out = ComplexOperator::zeros(self.dim());
        for k in &self.kraus {
            out = out.add(&rho.conjugate_by(k));
        }
        Ok(out)
    }

    /// `Σ_k E_k† Λ E_k`.
    pub fn adjoint_apply(&self, op: &ComplexOperator) -> Result<ComplexOperator> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: op.dim(),
            });
        }
        let mut out = ComplexOperator::zeros(self.dim());
        for k in &self.kraus {
            out = out.add(&op.conjugate_by_adjoint(k));
        }
        Ok(out)
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Kraus sets: amplitude damping `{diag(1, √(1−γ)), √γ|0⟩⟨1|}` with
/// `γ = 1 − e^{−t/T1}`; dephasing as a phase flip with `p = (1 − e^{−t/T2})/2`;
/// bit and phase flips as `{√(1−p)·I, √p·σ}`.
pub fn make_channel(kind: ChannelKind) -> Result<QuantumChannel> {
    kind.validate()?;
    let id = ComplexOperator::identity(2);
    let flip = |p: f64, sigma: ComplexOperator| vec![id.scale((1.0 - p).sqrt()), sigma.scale(p.sqrt())];
    let kraus = match kind {
        ChannelKind::Identity => vec![id.clone()],
        ChannelKind::AmplitudeRelaxation { t_over_t1 } => {
            let gamma = 1.0 - (-t_over_t1).exp();
            vec![
                ComplexOperator::from_rows(2, &[c(1.0), c(0.0), c(0.0), c((1.0 - gamma).sqrt())])?,
                ComplexOperator::from_rows(2, &[c(0.0), c(gamma.sqrt()), c(0.0), c(0.0)])?,
            ]
        }
        ChannelKind::PureDephasing { t_over_t2 } => {
            let p = (1.0 - (-t_over_t2).exp()) / 2.0;
            flip(p, ComplexOperator::pauli_z())
        }
        ChannelKind::BitFlip { p } => flip(p, ComplexOperator::pauli_x()),
        ChannelKind::PhaseFlip { p } => flip(p, ComplexOperator::pauli_z()),
    };
    QuantumChannel::with_params(kind.to_string(), kraus, kind.params())
}

/// Replaces each `Λ_j` by `Σ_k E_k† Λ_j E_k`; weights are unchanged.
pub fn fold_channel(meas: &EffectiveMeasurement, ch: &QuantumChannel) -> Result<EffectiveMeasurement> {
    meas.check_dim(ch.dim())?;
    let dev = ch.trace_preservation_deviation();
    if dev > TRACE_PRESERVATION_TOL {
        return Err(Error::NotTracePreserving(dev));
    }
    let ops = meas
        .operators()
        .iter()
        .map(|op| ch.adjoint_apply(op).map(|m| m.symmetrized()))
        .collect::<Result<Vec<_>>>()?;
    let label = if ch.label() == "identity" {
        meas.label().to_string()
    } else {
        format!("{} | {}", meas.label(), ch.label())
    };
    Ok(EffectiveMeasurement::new_unchecked(
        label,
        ops,
        meas.weights().to_vec(),
        meas.n(),
    ))
}

/// Fuzzy qubit measurement operator for direction `r` in closed form.
pub fn closed_form_operator(r: &BlochVector, kind: ChannelKind) -> Result<ComplexOperator> {
    r.ensure_unit(BLOCH_NORM_TOL)?;
    kind.validate()?;
    let (x, y, z) = (r.x, r.y, r.z);
    let off = |f: f64| (Complex64::new(x, y) * f / 2.0, Complex64::new(x, -y) * f / 2.0);
    let op = match kind {
        ChannelKind::Identity => return Ok(bloch_matrix(r)),
        ChannelKind::AmplitudeRelaxation { t_over_t1 } => {
            let (a, b) = off((-t_over_t1 / 2.0).exp());
            [
                c((1.0 + z) / 2.0),
                a,
                b,
                c((1.0 - z * (2.0 * (-t_over_t1).exp() - 1.0)) / 2.0),
            ]
        }
        ChannelKind::PureDephasing { t_over_t2 } => {
            let (a, b) = off((-t_over_t2).exp());
            [c((1.0 + z) / 2.0), a, b, c((1.0 - z) / 2.0)]
        }
        ChannelKind::BitFlip { p } => {
            let s = 1.0 - 2.0 * p;
            [
                c((1.0 + z * s) / 2.0),
                Complex64::new(x, y * s) / 2.0,
                Complex64::new(x, -y * s) / 2.0,
                c((1.0 - z * s) / 2.0),
            ]
        }
        ChannelKind::PhaseFlip { p } => {
            let (a, b) = off(1.0 - 2.0 * p);
            [c((1.0 + z) / 2.0), a, b, c((1.0 - z) / 2.0)]
        }
    };
    ComplexOperator::new(CMatrix::from_row_slice(2, 2, &op))
}

/// Non-entangling product channel; Kraus operators are all Kronecker products
/// in lexicographic order (first factor slowest).
pub fn tensor_channel(chs: &[QuantumChannel], limit: ResourceLimit) -> Result<QuantumChannel> {
    let first = chs
        .first()
        .ok_or_else(|| Error::param("channels", "empty channel list"))?;
    let mut count: usize = 1;
    let mut dim: usize = 1;
    for ch in chs {
        let dev = ch.trace_preservation_deviation();
        if dev > TRACE_PRESERVATION_TOL {
            return Err(Error::NotTracePreserving(dev));
        }
        count = count.saturating_mul(ch.kraus.len());
        dim = dim.saturating_mul(ch.dim());
    }
    if count.saturating_mul(dim).saturating_mul(dim) > limit.max_entries.saturating_mul(16) {
        return Err(Error::ResourceLimit(format!(
            "{count} Kraus operators of dimension {dim} exceed the configured limit"
        )));
    }
    let mut kraus = first.kraus.clone();
    for ch in &chs[1..] {
        kraus = kraus
            .iter()
            .flat_map(|a| ch.kraus.iter().map(move |b| a.tensor(b)))
            .collect();
    }
    let label = chs.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(" ⊗ ");
    let mut params = BTreeMap::new();
    for (i, ch) in chs.iter().enumerate() {
        for (k, v) in &ch.params {
            params.insert(format!("q{}.{}", i + 1, k), *v);
        }
    }
    QuantumChannel::with_params(label, kraus, params)
}

/// Channel entry of a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Kind(ChannelKind),
    Kraus(KrausSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrausSpec {
    /// Always `"kraus"`.
    pub kind: String,
    /// Operators as row-major nested lists of `[re, im]` pairs.
    pub operators: Vec<Vec<Vec<[f64; 2]>>>,
}

impl ChannelSpec {
    pub fn build(&self) -> Result<QuantumChannel> {
        match self {
            Self::Kind(kind) => make_channel(*kind),
            Self::Kraus(spec) => {
                if spec.kind != "kraus" {
                    return Err(Error::UnknownChannel(spec.kind.clone()));
                }
                let ops = spec
                    .operators
                    .iter()
                    .map(|rows| {
                        let dim = rows.len();
                        let flat: Vec<Complex64> =
                            rows.iter().flatten().map(|[re, im]| Complex64::new(*re, *im)).collect();
                        ComplexOperator::from_rows(dim, &flat)
                    })
                    .collect::<Result<Vec<_>>>()?;
                QuantumChannel::from_kraus("kraus", ops)
            }
        }
    }
}

impl From<ChannelKind> for ChannelSpec {
    fn from(k: ChannelKind) -> Self {
        Self::Kind(k)
    }
}
