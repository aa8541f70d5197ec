//! Complete information matrix, loss spectrum, fidelity-loss distribution and
//! Bloch-sphere loss maps.
//!
//! For a pure state `c` measured with operators `Λ_j` and weights `t_j`, the
//! information matrix in the doubled-real representation is
//!
//! ```text
//! H = 2 Σ_j (t_j / λ_j) (Λ̃_j c̃)(Λ̃_j c̃)ᵀ
//! ```
//!
//! Its spectrum has one zero eigenvalue (global phase) and one eigenvalue `2n`
//! (normalization). The remaining `2s − 2` eigenvalues `S_j` give the
//! principal-component variances `d_j = 1/(2 S_j)`, and the fidelity loss is
//! distributed as `Σ_j d_j ξ_j²` with standard normal `ξ_j`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{fold_channel, QuantumChannel};
use crate::error::{Error, Result};
use crate::linalg::{align_phase, realify_vector, BlochVector, CVector, PureState};
use crate::protocol::{measurement_operators, EffectiveMeasurement, Protocol};

/// Rows with `λ_j` below this are left out of `H`.
pub const PROBABILITY_SKIP: f64 = 1e-12;
/// Relative threshold (times `n`) below which an eigenvalue of `H` counts as zero.
pub const ZERO_EIGEN_REL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct InformationMatrix {
    h: DMatrix<f64>,
    n: f64,
    dim: usize,
    skipped_rows: usize,
}

impl InformationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    /// Hilbert-space dimension `s`; the matrix is `2s × 2s`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn skipped_rows(&self) -> usize {
        self.skipped_rows
    }

    /// `c̃ᵀ H c̃`, equal to `2n` for the state the matrix was built at.
    pub fn quadratic_form(&self, v: &CVector) -> f64 {
        let r = realify_vector(v);
        r.dot(&(&self.h * &r))
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = SymmetricEigen::new(self.h.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        vals.sort_by(f64::total_cmp);
        vals
    }
}

/// Builds `H` at `state`; rows with vanishing probability are skipped and counted.
pub fn information_matrix(state: &PureState, meas: &EffectiveMeasurement) -> Result<InformationMatrix> {
    meas.check_dim(state.dim())?;
    let s = state.dim();
    let mut h = DMatrix::<f64>::zeros(2 * s, 2 * s);
    let mut skipped = 0;
    for (op, &t) in meas.operators().iter().zip(meas.weights()) {
        let lambda = op.expectation(state);
        if lambda < PROBABILITY_SKIP {
            skipped += 1;
            continue;
        }
        let v = realify_vector(&op.apply(state.amplitudes()));
        h.ger(2.0 * t / lambda, &v, &v, 1.0);
    }
    if skipped == meas.len() {
        return Err(Error::DegenerateInformation);
    }
    // Exact symmetry for the eigensolver.
    let h = (&h + h.transpose()) * 0.5;
    Ok(InformationMatrix {
        h,
        n: meas.n(),
        dim: s,
        skipped_rows: skipped,
    })
}

/// Principal-component variances of the reconstructed state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpectrum {
    /// `ν = 2s − 2` variances, descending.
    pub d: Vec<f64>,
    /// The dropped global-phase eigenvalue.
    pub excluded_zero: f64,
    /// The dropped normalization eigenvalue.
    pub excluded_max: f64,
    /// Sample size the spectrum refers to.
    pub n: f64,
}

impl LossSpectrum {
    /// Number of retained degrees of freedom `ν = 2s − 2`.
    pub fn nu(&self) -> usize {
        self.d.len()
    }

    /// `ν_H = 2s − 1`, degrees of freedom of `2⟨dc̃|H|dc̃⟩`.
    pub fn nu_h(&self) -> usize {
        self.d.len() + 1
    }

    pub fn mean(&self) -> f64 {
        self.d.iter().sum()
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.d.iter().map(|x| x * x).sum::<f64>()
    }

    /// `L = n Σ d_j`, independent of `n`.
    pub fn scaled_loss(&self) -> f64 {
        scaled_loss(self, self.n)
    }
}

/// Drops the smallest and the largest eigenvalue of `H` and maps the rest to `1/(2S)`.
pub fn loss_spectrum(info: &InformationMatrix) -> Result<LossSpectrum> {
    let vals = info.eigenvalues();
    let threshold = ZERO_EIGEN_REL * info.n;
    let below = vals.iter().filter(|&&v| v < threshold).count();
    if below > 1 {
        return Err(Error::Incomplete {
            count: below,
            threshold,
        });
    }
    let last = vals.len() - 1;
    if vals[0] > threshold {
        // The phase direction is an exact null vector; anything else means H is wrong.
        return Err(Error::Incomplete { count: 0, threshold });
    }
    let d = vals[1..last].iter().map(|s| 1.0 / (2.0 * s)).collect();
    Ok(LossSpectrum {
        d,
        excluded_zero: vals[0],
        excluded_max: vals[last],
        n: info.n,
    })
}

/// `(Σ d_j, 2 Σ d_j²)`.
pub fn loss_moments(spec: &LossSpectrum) -> (f64, f64) {
    (spec.mean(), spec.variance())
}

/// `L = n Σ d_j`.
pub fn scaled_loss(spec: &LossSpectrum, n: f64) -> f64 {
    n * spec.mean()
}

/// Generalized chi-squared law of `1 − F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    pub spectrum: LossSpectrum,
    pub mean: f64,
    pub variance: f64,
}

impl LossDistribution {
    pub fn new(spectrum: LossSpectrum) -> Self {
        let (mean, variance) = loss_moments(&spectrum);
        Self {
            spectrum,
            mean,
            variance,
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        sample_loss_distribution(&self.spectrum, count, seed)
    }
}

/// Draws `Σ_j d_j ξ_j²` with independent standard normal `ξ_j`.
pub fn sample_loss_distribution(spec: &LossSpectrum, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            spec.d
                .iter()
                .map(|d| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    d * xi * xi
                })
                .sum()
        })
        .collect()
}

/// `2⟨dc̃|H|dc̃⟩` with the estimate phase-aligned to the truth.
///
/// `estimate` need not be unit-norm: the likelihood normalization fixes
/// `|c|² = N/n` when the total count `N` is random.
pub fn chi2_statistic(truth: &PureState, estimate: &CVector, info: &InformationMatrix) -> Result<f64> {
    if truth.dim() != estimate.len() || truth.dim() != info.dim {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            found: estimate.len(),
        });
    }
    let aligned = align_phase(estimate, truth.amplitudes());
    let dc = realify_vector(&(aligned - truth.amplitudes()));
    Ok(2.0 * dc.dot(&(info.matrix() * &dc)))
}

/// `L` for a state under an effective measurement.
pub fn scaled_loss_at(state: &PureState, meas: &EffectiveMeasurement) -> Result<f64> {
    let info = information_matrix(state, meas)?;
    Ok(loss_spectrum(&info)?.scaled_loss())
}

/// Polar × azimuthal resolution of a Bloch-sphere grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta: usize,
    pub phi: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { theta: 61, phi: 120 }
    }
}

impl GridSpec {
    /// `θ_i = iπ/(T−1)`; the poles appear once (at `φ = 0`), every other
    /// latitude at `φ_k = 2πk/P`.
    pub fn points(&self) -> Result<Vec<(f64, f64)>> {
        if self.theta < 2 || self.phi < 1 {
            return Err(Error::param("grid", "need at least 2 polar and 1 azimuthal points"));
        }
        let mut pts = Vec::with_capacity((self.theta - 2) * self.phi + 2);
        for i in 0..self.theta {
            let theta = if i == self.theta - 1 {
                PI
            } else {
                i as f64 * PI / (self.theta - 1) as f64
            };
            if i == 0 || i == self.theta - 1 {
                pts.push((theta, 0.0));
                continue;
            }
            for k in 0..self.phi {
                pts.push((theta, 2.0 * PI * k as f64 / self.phi as f64));
            }
        }
        Ok(pts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochPoint {
    pub theta: f64,
    pub phi: f64,
    pub l: f64,
    /// Some row had vanishing probability here; `l` is the limit from nearby states.
    pub singular: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochMap {
    pub grid: GridSpec,
    pub points: Vec<BlochPoint>,
    pub l_min: f64,
    pub l_max: f64,
    pub argmin: (f64, f64),
    pub argmax: (f64, f64),
    pub protocol: String,
    pub channel: String,
}

impl BlochMap {
    pub fn singular_points(&self) -> usize {
        self.points.iter().filter(|p| p.singular).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,phi,L\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.theta, p.phi, p.l));
        }
        out
    }
}

/// Offset used to approach grid points where a row has zero probability.
const SINGULAR_STEP: f64 = 1e-4;

/// `L` at the qubit state with Bloch angles `(θ, φ)`.
///
/// Where a row has vanishing probability the skipped row would leave a
/// discontinuity, so the value is replaced by the mean over four states at
/// angular distance 1e-4.
pub fn loss_at_angles(meas: &EffectiveMeasurement, theta: f64, phi: f64) -> Result<(f64, bool)> {
    let state = PureState::from_bloch_angles(theta, phi);
    let info = information_matrix(&state, meas)?;
    if info.skipped_rows == 0 {
        return Ok((loss_spectrum(&info)?.scaled_loss(), false));
    }
    let h = SINGULAR_STEP;
    let neighbours: Vec<(f64, f64)> = if theta < h || PI - theta < h {
        let t = if theta < h { h } else { PI - h };
        (0..4).map(|k| (t, phi + k as f64 * PI / 2.0)).collect()
    } else {
        let dphi = h / theta.sin();
        vec![
            (theta + h, phi),
            (theta - h, phi),
            (theta, phi + dphi),
            (theta, phi - dphi),
        ]
    };
    let mut total = 0.0;
    for (t, p) in &neighbours {
        let info = information_matrix(&PureState::from_bloch_angles(*t, *p), meas)?;
        total += loss_spectrum(&info)?.scaled_loss();
    }
    Ok((total / neighbours.len() as f64, true))
}

/// Evaluates `L` over the Bloch sphere for a single-qubit protocol behind a channel.
pub fn bloch_loss_map(protocol: &Protocol, channel: &QuantumChannel, grid: GridSpec) -> Result<BlochMap> {
    if protocol.dim() != 2 {
        return Err(Error::param("protocol", "Bloch maps need a single-qubit protocol"));
    }
    let meas = fold_channel(&measurement_operators(protocol), channel)?;
    let pts = grid.points()?;
    let values: Vec<(f64, bool)> = pts
        .par_iter()
        .map(|&(t, p)| loss_at_angles(&meas, t, p))
        .collect::<Result<_>>()?;
    let points: Vec<BlochPoint> = pts
        .iter()
        .zip(values)
        .map(|(&(theta, phi), (l, singular))| BlochPoint {
            theta,
            phi,
            l,
            singular,
        })
        .collect();
    let (mut lo, mut hi) = (0, 0);
    for (i, p) in points.iter().enumerate() {
        if p.l < points[lo].l {
            lo = i;
        }
        if p.l > points[hi].l {
            hi = i;
        }
    }
    Ok(BlochMap {
        grid,
        l_min: points[lo].l,
        l_max: points[hi].l,
        argmin: (points[lo].theta, points[lo].phi),
        argmax: (points[hi].theta, points[hi].phi),
        points,
        protocol: protocol.label().to_string(),
        channel: channel.label().to_string(),
    })
}

/// Extrema of `L` polished by a local pattern search on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedExtrema {
    pub l_min: f64,
    pub l_max: f64,
    pub argmin: (f64, f64),
    pub argmax: (f64, f64),
}

/// Number of best grid points each refinement starts from.
const REFINE_SEEDS: usize = 8;

fn angles_of(r: &BlochVector) -> (f64, f64) {
    let theta = r.z.clamp(-1.0, 1.0).acos();
    let phi = r.y.atan2(r.x).rem_euclid(2.0 * PI);
    (theta, phi)
}

/// Compass search over the tangent plane; `sign = 1` maximizes, `-1` minimizes.
fn pattern_search(meas: &EffectiveMeasurement, start: (f64, f64), sign: f64) -> Result<(f64, (f64, f64))> {
    let mut r = BlochVector::from_angles(start.0, start.1);
    let mut best = sign * loss_at_angles(meas, start.0, start.1)?.0;
    let mut step = 0.02;
    while step > 1e-9 {
        // Tangent basis at r.
        let helper = if r.z.abs() < 0.9 {
            (0.0, 0.0, 1.0)
        } else {
            (1.0, 0.0, 0.0)
        };
        let e1 = BlochVector::new(
            helper.1 * r.z - helper.2 * r.y,
            helper.2 * r.x - helper.0 * r.z,
            helper.0 * r.y - helper.1 * r.x,
        )
        .normalized()?;
        let e2 = BlochVector::new(
            r.y * e1.z - r.z * e1.y,
            r.z * e1.x - r.x * e1.z,
            r.x * e1.y - r.y * e1.x,
        );
        let mut improved = false;
        for (a, b) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let cand = BlochVector::new(
                r.x + step * (a * e1.x + b * e2.x),
                r.y + step * (a * e1.y + b * e2.y),
                r.z + step * (a * e1.z + b * e2.z),
            )
            .normalized()?;
            let (t, p) = angles_of(&cand);
            let v = sign * loss_at_angles(meas, t, p)?.0;
            if v > best {
                best = v;
                r = cand;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((sign * best, angles_of(&r)))
}

/// Refines the extrema of a map starting from its best grid points.
pub fn refine_extrema(map: &BlochMap, meas: &EffectiveMeasurement) -> Result<RefinedExtrema> {
    let mut order: Vec<usize> = (0..map.points.len()).collect();
    order.sort_by(|&a, &b| map.points[a].l.total_cmp(&map.points[b].l).then(a.cmp(&b)));
    let seeds = |idx: &[usize]| -> Vec<(f64, f64)> {
        idx.iter()
            .take(REFINE_SEEDS)
            .map(|&i| (map.points[i].theta, map.points[i].phi))
            .collect()
    };
    let low = seeds(&order);
    let high = seeds(&order.iter().rev().copied().collect::<Vec<_>>());
    let pick = |starts: Vec<(f64, f64)>, sign: f64| -> Result<(f64, (f64, f64))> {
        let found = starts
            .par_iter()
            .map(|&s| pattern_search(meas, s, sign))
            .collect::<Result<Vec<_>>>()?;
        Ok(found.into_iter().fold((f64::NAN, (0.0, 0.0)), |acc, x| {
            if acc.0.is_nan() || sign * x.0 > sign * acc.0 {
                x
            } else {
                acc
            }
        }))
    };
    let (l_min, argmin) = pick(low, -1.0)?;
    let (l_max, argmax) = pick(high, 1.0)?;
    Ok(RefinedExtrema {
        l_min,
        l_max,
        argmin,
        argmax,
    })
}

/// Grid point with the largest `L` for a single-qubit effective measurement.
pub fn worst_state(meas: &EffectiveMeasurement, grid: GridSpec) -> Result<(PureState, f64)> {
    let pts = grid.points()?;
    let values: Vec<f64> = pts
        .par_iter()
        .map(|&(t, p)| loss_at_angles(meas, t, p).map(|v| v.0))
        .collect::<Result<_>>()?;
    let (idx, l) =
        values.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    let (t, p) = pts[idx];
    Ok((PureState::from_bloch_angles(t, p), l))
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
