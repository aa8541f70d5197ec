//! Count generation and maximum-likelihood reconstruction of pure states.
//!
//! The likelihood of counts `k_j` for a state `c` is `ℓ(c) = Σ_j k_j ln λ_j(c)`
//! with `λ_j(c) = c†Λ_j c`. Its stationary points satisfy `R(c) c = c`, where
//! `R(c) = (1/N) Σ_j (k_j / λ_j(c)) Λ_j` and `N = Σ_j k_j`. The estimator
//! iterates a damped version of that map and never accepts a step that lowers
//! the likelihood.

use std::collections::BTreeSet;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_pairs, to_pairs, CVector, ComplexOperator, PureState};
use crate::protocol::EffectiveMeasurement;

/// Tolerance on `Σ_j p_j = 1` before sampling.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

/// How count data are generated from the cell probabilities `p_j = t_j λ_j / n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingModel {
    /// Fixed total `n` spread over all cells.
    #[default]
    Multinomial,
    /// Independent `k_j ~ Poisson(t_j λ_j)`; the total fluctuates.
    Poisson,
    /// Expected counts rounded to integers (largest remainder), no randomness.
    Expected,
}

impl SamplingModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Multinomial => "multinomial",
            Self::Poisson => "poisson",
            Self::Expected => "expected",
        }
    }
}

impl FromStr for SamplingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multinomial" => Ok(Self::Multinomial),
            "poisson" => Ok(Self::Poisson),
            "expected" | "exact" => Ok(Self::Expected),
            other => Err(Error::param("sampling", format!("unknown model `{other}`"))),
        }
    }
}

/// Observed counts per measurement row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountVector {
    pub counts: Vec<u64>,
    pub weights: Vec<f64>,
    /// Nominal sample size of the protocol.
    pub n: f64,
    pub seed: u64,
    pub model: SamplingModel,
}

impl CountVector {
    pub fn new(counts: Vec<u64>, weights: Vec<f64>, n: f64) -> Result<Self> {
        if counts.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: counts.len(),
            });
        }
        Ok(Self {
            counts,
            weights,
            n,
            seed: 0,
            model: SamplingModel::Expected,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Observed total `N = Σ_j k_j`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with header `row,k,t`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (row, (&k, &t)) in self.counts.iter().zip(&self.weights).enumerate() {
            w.serialize(CountRow { row, k, t }).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Parses the CSV written by [`CountVector::to_csv`]; `n` is the sum of counts.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut counts = Vec::new();
        let mut weights = Vec::new();
        for (i, record) in csv::Reader::from_reader(text.as_bytes())
            .deserialize::<CountRow>()
            .enumerate()
        {
            let record = record.map_err(|e| Error::config(format!("row {i}"), e.to_string()))?;
            if record.row != i {
                return Err(Error::config(
                    format!("row {i}"),
                    "row indices must be consecutive from 0",
                ));
            }
            counts.push(record.k);
            weights.push(record.t);
        }
        let n = counts.iter().sum::<u64>() as f64;
        Self::new(counts, weights, n)
    }
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    row: usize,
    k: u64,
    t: f64,
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Stable per-trial seed derived from a master seed (splitmix64 finalizer).
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    let mut z = master_seed ^ trial_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Cell probabilities `p_j = t_j λ_j / n`, checked to sum to one.
pub fn cell_probabilities(meas: &EffectiveMeasurement, state: &PureState) -> Result<Vec<f64>> {
    let lambdas = meas.probabilities(state)?;
    let n = meas.n();
    let p: Vec<f64> = lambdas
        .iter()
        .zip(meas.weights())
        .map(|(l, t)| (t * l / n).max(0.0))
        .collect();
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::ProbabilitySum(total));
    }
    Ok(p)
}

/// Draws counts for `state` measured with `meas`.
pub fn sample_counts(
    meas: &EffectiveMeasurement,
    state: &PureState,
    seed: u64,
    model: SamplingModel,
) -> Result<CountVector> {
    let n = meas.n();
    if !(n >= 1.0 && n.fract() == 0.0 && n <= u64::MAX as f64) {
        return Err(Error::param(
            "n",
            format!("sample size must be a positive integer, got {n}"),
        ));
    }
    let total = n as u64;
    let p = cell_probabilities(meas, state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = match model {
        SamplingModel::Multinomial => multinomial(total, &p, &mut rng)?,
        SamplingModel::Poisson => p
            .iter()
            .map(|&pj| {
                let mean = pj * n;
                if mean <= 0.0 {
                    Ok(0)
                } else {
                    let d = Poisson::new(mean).map_err(|e| Error::param("poisson mean", e.to_string()))?;
                    Ok(d.sample(&mut rng) as u64)
                }
            })
            .collect::<Result<Vec<u64>>>()?,
        SamplingModel::Expected => largest_remainder(total, &p),
    };
    Ok(CountVector {
        counts,
        weights: meas.weights().to_vec(),
        n,
        seed,
        model,
    })
}

/// Sequential conditional binomials over suffix masses.
fn multinomial(total: u64, p: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    let mut suffix = vec![0.0; p.len() + 1];
    for j in (0..p.len()).rev() {
        suffix[j] = suffix[j + 1] + p[j];
    }
    let mut counts = vec![0u64; p.len()];
    let mut remaining = total;
    for (j, &pj) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let q = if suffix[j + 1] == 0.0 {
            1.0
        } else if suffix[j] > 0.0 {
            (pj / suffix[j]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = Binomial::new(remaining, q)
            .map_err(|e| Error::param("binomial", e.to_string()))?
            .sample(rng);
        counts[j] = k;
        remaining -= k;
    }
    Ok(counts)
}

/// Rounds `total·p_j` so that the integers sum to `total`.
fn largest_remainder(total: u64, p: &[f64]) -> Vec<u64> {
    let scaled: Vec<f64> = p.iter().map(|&pj| pj * total as f64).collect();
    let mut counts: Vec<u64> = scaled.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().take(total.saturating_sub(assigned) as usize) {
        counts[j] += 1;
    }
    counts
}

/// Numerical settings of the fixed-point iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    /// Initial damping factor α.
    pub alpha: f64,
    pub max_iterations: usize,
    /// Stop once `‖R(c)c − c‖` falls below this.
    pub tolerance: f64,
    /// Floor on `λ_j` inside logarithms and denominators.
    pub probability_floor: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            max_iterations: 10_000,
            tolerance: 1e-10,
            probability_floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    #[serde(with = "pure_state_pairs")]
    pub estimate: PureState,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub log_likelihood: f64,
    pub initial_log_likelihood: f64,
    /// `sqrt(N/n)`: the norm the likelihood assigns to the estimate when the
    /// observed total `N` differs from the nominal `n`.
    pub norm_scale: f64,
    /// Cells with nonzero counts whose probability hit the floor during the iteration.
    pub regularized_cells: Vec<usize>,
}

impl ReconstructionResult {
    /// Estimate multiplied by [`ReconstructionResult::norm_scale`].
    pub fn scaled_estimate(&self) -> CVector {
        self.estimate.amplitudes() * Complex64::from(self.norm_scale)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

mod pure_state_pairs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{from_pairs, to_pairs, PureState};

    pub fn serialize<S: Serializer>(state: &PureState, s: S) -> Result<S::Ok, S::Error> {
        to_pairs(state.amplitudes()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PureState, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        PureState::new(from_pairs(&pairs)).map_err(serde::de::Error::custom)
    }
}

fn check_counts(counts: &CountVector, meas: &EffectiveMeasurement) -> Result<()> {
    if counts.len() != meas.len() {
        return Err(Error::DimensionMismatch {
            expected: meas.len(),
            found: counts.len(),
        });
    }
    Ok(())
}

fn loglik(c: &CVector, counts: &[u64], ops: &[ComplexOperator], floor: f64) -> f64 {
    counts
        .iter()
        .zip(ops)
        .filter(|(&k, _)| k > 0)
        .map(|(&k, op)| k as f64 * c.dotc(&op.apply(c)).re.max(floor).ln())
        .sum()
}

/// `ℓ(c) = Σ_j k_j ln max(λ_j(c), ε)` with `ε = 1e-12`.
pub fn log_likelihood(c: &PureState, counts: &CountVector, meas: &EffectiveMeasurement) -> Result<f64> {
    meas.check_dim(c.dim())?;
    check_counts(counts, meas)?;
    let floor = ReconstructOptions::default().probability_floor;
    Ok(loglik(c.amplitudes(), &counts.counts, meas.operators(), floor))
}

/// `Λ_j c` and `λ_j = c†Λ_j c` for the cells with counts.
struct Evaluation {
    applied: Vec<Option<CVector>>,
    lambdas: Vec<f64>,
}

impl Evaluation {
    fn new(c: &CVector, counts: &[u64], ops: &[ComplexOperator]) -> Self {
        let mut applied = Vec::with_capacity(ops.len());
        let mut lambdas = Vec::with_capacity(ops.len());
        for (&k, op) in counts.iter().zip(ops) {
            if k == 0 {
                applied.push(None);
                lambdas.push(0.0);
            } else {
                let v = op.apply(c);
                lambdas.push(c.dotc(&v).re);
                applied.push(Some(v));
            }
        }
        Self { applied, lambdas }
    }

    /// `R(c)c`, recording which cells hit the floor.
    fn r_times_c(&self, dim: usize, counts: &[u64], total: f64, floor: f64, hit: &mut BTreeSet<usize>) -> CVector {
        let mut out = CVector::zeros(dim);
        for (j, v) in self.applied.iter().enumerate() {
            if let Some(v) = v {
                let lambda = self.lambdas[j];
                if lambda < floor {
                    hit.insert(j);
                }
                out += v * Complex64::from(counts[j] as f64 / (total * lambda.max(floor)));
            }
        }
        out
    }

    /// `ℓ(other) − ℓ(self)` summed as log ratios, which keeps small differences resolvable.
    fn gain_to(&self, other: &Self, counts: &[u64], floor: f64) -> f64 {
        counts
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(j, &k)| {
                let la = self.lambdas[j].max(floor);
                let lb = other.lambdas[j].max(floor);
                k as f64 * ((lb - la) / la).ln_1p()
            })
            .sum()
    }
}

/// `R(c)c`, also reporting which cells hit the floor.
#[cfg(test)]
fn apply_r(
    c: &CVector,
    counts: &[u64],
    ops: &[ComplexOperator],
    total: f64,
    floor: f64,
    hit: &mut BTreeSet<usize>,
) -> CVector {
    Evaluation::new(c, counts, ops).r_times_c(c.len(), counts, total, floor, hit)
}

/// Dominant eigenvector of `B = Σ_j (k_j/N) Λ_j`, nudged off degeneracies.
fn initial_guess(counts: &[u64], ops: &[ComplexOperator], total: f64) -> CVector {
    let dim = ops[0].dim();
    let mut b = ComplexOperator::zeros(dim);
    for (&k, op) in counts.iter().zip(ops) {
        if k > 0 {
            b = b.add(&op.scale(k as f64 / total));
        }
    }
    let pairs = b.eigenpairs_descending();
    let mut c = pairs[0].1.clone();
    if pairs.len() > 1 && (pairs[0].0 - pairs[1].0).abs() <= 1e-12 {
        c += &pairs[1].1 * Complex64::from(1e-8);
    }
    let norm = c.norm();
    c / Complex64::from(norm)
}

/// Maximum-likelihood pure state for `counts` under `meas`.
///
/// Non-convergence is reported through `converged = false`, not as an error.
pub fn reconstruct(
    counts: &CountVector,
    meas: &EffectiveMeasurement,
    options: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    reconstruct_inner(counts, meas, options, None)
}

/// Like [`reconstruct`], also returning `ℓ` after every accepted step.
pub fn reconstruct_traced(
    counts: &CountVector,
    meas: &EffectiveMeasurement,
    options: &ReconstructOptions,
) -> Result<(ReconstructionResult, Vec<f64>)> {
    let mut trace = Vec::new();
    let result = reconstruct_inner(counts, meas, options, Some(&mut trace))?;
    Ok((result, trace))
}

fn reconstruct_inner(
    counts: &CountVector,
    meas: &EffectiveMeasurement,
    options: &ReconstructOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<ReconstructionResult> {
    check_counts(counts, meas)?;
    if !(options.alpha > 0.0 && options.alpha <= 1.0) {
        return Err(Error::param("alpha", "must lie in (0, 1]"));
    }
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let total = total as f64;
    let ops = meas.operators();
    let k = &counts.counts;
    let floor = options.probability_floor;
    // Likelihood changes smaller than this are rounding noise.
    let resolution = 16.0 * f64::EPSILON * total;
    let mut hit = BTreeSet::new();

    let dim = meas.dim();
    let mut c = initial_guess(k, ops, total);
    let mut eval = Evaluation::new(&c, k, ops);
    let initial_ll = loglik(&c, k, ops, floor);
    let mut ll = initial_ll;
    if let Some(t) = trace.as_deref_mut() {
        t.push(ll);
    }
    let mut alpha = options.alpha;
    let mut rc = eval.r_times_c(dim, k, total, floor, &mut hit);
    let mut residual = (&rc - &c).norm();
    let mut iterations = 0;

    while residual > options.tolerance && iterations < options.max_iterations {
        iterations += 1;
        let a = Complex64::from(alpha);
        let step = &c * (Complex64::from(1.0) - a) + &rc * a;
        let norm = step.norm();
        let candidate = step / Complex64::from(norm);
        let next = Evaluation::new(&candidate, k, ops);
        let gain = eval.gain_to(&next, k, floor);
        if gain >= -resolution {
            c = candidate;
            eval = next;
            ll += gain.max(0.0);
            if let Some(t) = trace.as_deref_mut() {
                t.push(ll);
            }
            rc = eval.r_times_c(dim, k, total, floor, &mut hit);
            residual = (&rc - &c).norm();
            alpha = (alpha * 2.0).min(options.alpha);
        } else {
            alpha *= 0.5;
            if alpha < 1e-12 {
                break;
            }
        }
    }

    Ok(ReconstructionResult {
        estimate: PureState::normalized(c.clone())?,
        iterations,
        converged: residual <= options.tolerance,
        final_residual: residual,
        log_likelihood: loglik(&c, k, ops, floor).max(ll),
        initial_log_likelihood: initial_ll,
        norm_scale: (total / counts.n).sqrt(),
        regularized_cells: hit.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{fold_channel, make_channel, ChannelKind};
    use crate::linalg::fidelity;
    use crate::protocol::{measurement_operators, Protocol, ProtocolKind};
    use rand::Rng;

    fn tetra(n: f64) -> EffectiveMeasurement {
        measurement_operators(&Protocol::build(ProtocolKind::Tetrahedron, n).unwrap())
    }

    fn plus_i() -> PureState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        PureState::from_slice(&[Complex64::new(s, 0.0), Complex64::new(0.0, s)]).unwrap()
    }

    #[test]
    fn multinomial_counts_sum_to_n() {
        let meas = tetra(4000.0);
        for seed in 0..20 {
            let c = sample_counts(&meas, &plus_i(), seed, SamplingModel::Multinomial).unwrap();
            assert_eq!(c.total(), 4000);
        }
    }

    #[test]
    fn zero_probability_cell_gets_no_counts() {
        let meas = measurement_operators(&Protocol::build(ProtocolKind::Cube, 4000.0).unwrap());
        let zero = PureState::basis(2, 0);
        let lambdas = meas.probabilities(&zero).unwrap();
        let empty: Vec<usize> = (0..meas.len()).filter(|&j| lambdas[j] < 1e-15).collect();
        assert!(!empty.is_empty());
        for seed in 0..50 {
            let c = sample_counts(&meas, &zero, seed, SamplingModel::Multinomial).unwrap();
            for &j in &empty {
                assert_eq!(c.counts[j], 0);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let meas = tetra(4000.0);
        for model in [SamplingModel::Multinomial, SamplingModel::Poisson] {
            let a = sample_counts(&meas, &plus_i(), 17, model).unwrap();
            let b = sample_counts(&meas, &plus_i(), 17, model).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn first_cell_mean_matches_probability() {
        let meas = tetra(4000.0);
        let zero = PureState::basis(2, 0);
        let lambda = meas.probabilities(&zero).unwrap()[0];
        assert!((lambda - 0.788_675_134_594_812_9).abs() < 1e-12);
        let t = meas.weights()[0];
        let trials = 1000;
        let mean: f64 = (0..trials)
            .map(|s| {
                sample_counts(&meas, &zero, s, SamplingModel::Multinomial)
                    .unwrap()
                    .counts[0] as f64
                    / t
            })
            .sum::<f64>()
            / trials as f64;
        let p = t * lambda / 4000.0;
        let se = (4000.0 * p * (1.0 - p)).sqrt() / t / (trials as f64).sqrt();
        assert!((mean - lambda).abs() < 3.0 * se, "mean {mean} vs {lambda} (se {se})");
    }

    #[test]
    fn broken_unity_is_rejected() {
        let meas = tetra(4000.0);
        let broken = EffectiveMeasurement::new_unchecked(
            "broken".into(),
            meas.operators().to_vec(),
            meas.weights().iter().map(|w| w * 1.1).collect(),
            4000.0,
        );
        assert!(matches!(
            sample_counts(&broken, &plus_i(), 0, SamplingModel::Multinomial),
            Err(Error::ProbabilitySum(_))
        ));
    }

    #[test]
    fn expected_counts_round_to_total() {
        assert_eq!(largest_remainder(10, &[0.25, 0.25, 0.25, 0.25]), vec![3, 3, 2, 2]);
        assert_eq!(largest_remainder(7, &[0.5, 0.5]), vec![4, 3]);
    }

    #[test]
    fn noiseless_counts_recover_truth() {
        let meas = tetra(1e9);
        let truth = plus_i();
        let counts = sample_counts(&meas, &truth, 0, SamplingModel::Expected).unwrap();
        let r = reconstruct(&counts, &meas, &ReconstructOptions::default()).unwrap();
        assert!(r.converged);
        assert!(fidelity(&r.estimate, &truth).unwrap() >= 1.0 - 1e-9);
        assert!(r.final_residual <= 1e-10);
        assert!(r.log_likelihood >= r.initial_log_likelihood);
    }

    #[test]
    fn reconstruction_satisfies_likelihood_equation() {
        let meas = tetra(4000.0);
        let truth = PureState::from_bloch_angles(1.1, 0.4);
        for seed in 0..30 {
            let counts = sample_counts(&meas, &truth, seed, SamplingModel::Multinomial).unwrap();
            let r = reconstruct(&counts, &meas, &ReconstructOptions::default()).unwrap();
            assert!(r.converged, "seed {seed}: residual {}", r.final_residual);
            let mut hit = BTreeSet::new();
            let c = r.estimate.amplitudes();
            let rc = apply_r(
                c,
                &counts.counts,
                meas.operators(),
                counts.total() as f64,
                1e-12,
                &mut hit,
            );
            assert!((rc - c).norm() <= 1e-9);
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_likelihood_examples() {
        let meas = tetra(4000.0);
        let zeros = CountVector::new(vec![0; 4], meas.weights().to_vec(), 4000.0).unwrap();
        assert_eq!(log_likelihood(&plus_i(), &zeros, &meas).unwrap(), 0.0);

        let truth = PureState::from_bloch_angles(0.7, 2.0);
        // Un-rounded expected counts as weights of the objective.
        let lambdas = meas.probabilities(&truth).unwrap();
        let expected: Vec<f64> = lambdas.iter().zip(meas.weights()).map(|(l, t)| l * t).collect();
        let objective = |c: &PureState| -> f64 {
            let l = meas.probabilities(c).unwrap();
            expected.iter().zip(&l).map(|(k, l)| k * l.max(1e-12).ln()).sum()
        };
        let best = objective(&truth);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let eps = 0.05;
            let v = truth
                .amplitudes()
                .map(|z| z + Complex64::new(rng.random_range(-eps..eps), rng.random_range(-eps..eps)));
            let p = PureState::normalized(v).unwrap();
            assert!(objective(&p) <= best + 1e-9);
        }
        let integer = sample_counts(&meas, &truth, 0, SamplingModel::Expected).unwrap();
        let a = log_likelihood(&truth, &integer, &meas).unwrap();
        let b = log_likelihood(&truth.with_global_phase(1.3), &integer, &meas).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn likelihood_never_decreases() {
        let meas = tetra(4000.0);
        let truth = PureState::from_bloch_angles(2.0, 5.0);
        for seed in 0..20 {
            let counts = sample_counts(&meas, &truth, seed, SamplingModel::Poisson).unwrap();
            let (r, trace) = reconstruct_traced(&counts, &meas, &ReconstructOptions::default()).unwrap();
            assert_eq!(trace.len(), r.iterations + 1);
            for w in trace.windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn zero_cell_with_counts_is_regularized() {
        let meas = measurement_operators(&Protocol::build(ProtocolKind::Cube, 600.0).unwrap());
        let mut counts = sample_counts(&meas, &PureState::basis(2, 0), 1, SamplingModel::Expected).unwrap();
        let lambdas = meas.probabilities(&PureState::basis(2, 0)).unwrap();
        let empty = (0..meas.len()).find(|&j| lambdas[j] < 1e-15).unwrap();
        assert_eq!(counts.counts[empty], 0);
        counts.counts[empty] = 1;
        let r = reconstruct(&counts, &meas, &ReconstructOptions::default()).unwrap();
        assert!(r.log_likelihood.is_finite());
        assert!(r.log_likelihood >= r.initial_log_likelihood);
    }

    #[test]
    fn fuzzy_probabilities_match_channel_pipeline() {
        let proto = Protocol::build(ProtocolKind::Tetrahedron, 4000.0).unwrap();
        let clear = measurement_operators(&proto);
        for kind in [
            ChannelKind::AmplitudeRelaxation { t_over_t1: 0.5 },
            ChannelKind::PureDephasing { t_over_t2: 0.5 },
        ] {
            let ch = make_channel(kind).unwrap();
            let fuzzy = fold_channel(&clear, &ch).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..50 {
                let s = PureState::from_bloch_angles(
                    rng.random_range(0.0..std::f64::consts::PI),
                    rng.random_range(0.0..std::f64::consts::TAU),
                );
                let through = clear.probabilities_density(&ch.apply(&s.density()).unwrap()).unwrap();
                let folded = fuzzy.probabilities(&s).unwrap();
                for (a, b) in through.iter().zip(&folded) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn csv_and_json_round_trip() {
        let meas = tetra(4000.0);
        let counts = sample_counts(&meas, &plus_i(), 3, SamplingModel::Multinomial).unwrap();
        let csv = counts.to_csv().unwrap();
        assert!(csv.starts_with("row,k,t\n0,"));
        let back = CountVector::from_csv(&csv).unwrap();
        assert_eq!(back.counts, counts.counts);
        assert_eq!(back.weights, counts.weights);

        let r = reconstruct(&counts, &meas, &ReconstructOptions::default()).unwrap();
        let json = r.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["estimate"][0].as_array().unwrap().len(), 2);
        let parsed = ReconstructionResult::from_json(&json).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..1000).map(|i| trial_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }
}
