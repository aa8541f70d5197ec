//! Monte Carlo experiments: configuration, parallel trials, summaries and output files.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{fold_channel, tensor_channel, ChannelKind, ChannelSpec, QuantumChannel};
use crate::error::{Error, Result};
use crate::estimation::{csv_error, reconstruct, sample_counts, trial_seed, ReconstructOptions, SamplingModel};
use crate::information::{
    chi2_statistic, information_matrix, ks_distance, loss_spectrum, sample_loss_distribution, worst_state, GridSpec,
    InformationMatrix, LossSpectrum,
};
use crate::linalg::{fidelity, from_pairs, BlochVector, PureState};
use crate::protocol::{measurement_operators, EffectiveMeasurement, Protocol, ProtocolKind, ResourceLimit};
use crate::report::{freedman_diaconis_bins, histogram_svg, uniform_edges, Histogram};

/// Number of theoretical samples the empirical losses are compared against.
pub const THEORY_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationSpec {
    /// Any nonzero vector; normalized before use.
    pub axis: [f64; 3],
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    #[serde(default = "one")]
    pub qubits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<RotationSpec>,
}

fn one() -> usize {
    1
}

/// One channel for every qubit, or one per qubit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelsConfig {
    PerQubit(Vec<ChannelSpec>),
    Shared(ChannelSpec),
}

impl Default for ChannelsConfig {
    fn default() -> Self {
        Self::Shared(ChannelSpec::Kind(ChannelKind::Identity))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatePreset {
    /// `|0…0⟩`
    Zero,
    /// `|1…1⟩`
    One,
    /// `|+⟩^{⊗q}`
    Plus,
    /// `((|0⟩ + i|1⟩)/√2)^{⊗q}`
    PlusI,
    /// `(|00⟩ + i|01⟩ + |11⟩)/√3`
    ThreeTerm,
    /// Grid-searched state of largest `L` (single qubit).
    Worst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum StateSpec {
    Preset { preset: StatePreset },
    Amplitudes { amplitudes: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub channels: ChannelsConfig,
    pub state: StateSpec,
    pub n: u64,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub sampling: SamplingModel,
    /// Replace sampling by rounded expected counts.
    #[serde(default)]
    pub exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Histogram bins; Freedman–Diaconis when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sampling_model(&self) -> SamplingModel {
        if self.exact {
            SamplingModel::Expected
        } else {
            self.sampling
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("n", "sample size must be at least 1"));
        }
        if self.trials < 1 {
            return Err(Error::config("trials", "at least one trial is required"));
        }
        if self.protocol.qubits < 1 {
            return Err(Error::config("protocol.qubits", "at least one qubit is required"));
        }
        if let ChannelsConfig::PerQubit(list) = &self.channels {
            if list.len() != self.protocol.qubits {
                return Err(Error::config(
                    "channels",
                    format!("{} channels given for {} qubits", list.len(), self.protocol.qubits),
                ));
            }
        }
        if self.bins == Some(0) {
            return Err(Error::config("bins", "must be positive"));
        }
        Ok(())
    }
}

/// Everything a run needs, built once from the configuration.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub protocol: Protocol,
    pub channel: QuantumChannel,
    pub clear: EffectiveMeasurement,
    pub fuzzy: EffectiveMeasurement,
    pub truth: PureState,
}

fn tag(path: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let q = config.protocol.qubits;
    let n = config.n as f64;
    let mut single = Protocol::build(config.protocol.kind, n).map_err(|e| tag("protocol.kind", e))?;
    if let Some(rot) = &config.protocol.rotation {
        let [x, y, z] = rot.axis;
        single = BlochVector::new(x, y, z)
            .normalized()
            .and_then(|axis| single.rotate(&axis, rot.angle))
            .map_err(|e| tag("protocol.rotation", e))?;
    }
    let protocol = single
        .tensor_power(q, ResourceLimit::default())
        .map_err(|e| tag("protocol.qubits", e))?;

    let specs: Vec<(String, &ChannelSpec)> = match &config.channels {
        ChannelsConfig::Shared(spec) => (0..q).map(|_| ("channels".to_string(), spec)).collect(),
        ChannelsConfig::PerQubit(list) => list
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("channels[{i}]"), s))
            .collect(),
    };
    let singles = specs
        .iter()
        .map(|(path, spec)| {
            let ch = spec.build().map_err(|e| tag(path, e))?;
            if ch.dim() != 2 {
                return Err(Error::config(path.as_str(), "channels act on single qubits"));
            }
            Ok(ch)
        })
        .collect::<Result<Vec<_>>>()?;
    let channel = if q == 1 {
        singles.into_iter().next().expect("one channel")
    } else {
        tensor_channel(&singles, ResourceLimit::default()).map_err(|e| tag("channels", e))?
    };

    let clear = measurement_operators(&protocol);
    let fuzzy = fold_channel(&clear, &channel)?;
    let truth = build_state(&config.state, q, &fuzzy)?;
    Ok(Prepared {
        config: config.clone(),
        protocol,
        channel,
        clear,
        fuzzy,
        truth,
    })
}

fn build_state(spec: &StateSpec, qubits: usize, fuzzy: &EffectiveMeasurement) -> Result<PureState> {
    let single = |a: Complex64, b: Complex64| -> PureState {
        let s = PureState::from_slice(&[a, b]).expect("unit single-qubit state");
        let mut out = s.clone();
        for _ in 1..qubits {
            out = out.tensor(&s);
        }
        out
    };
    let zero = Complex64::new(0.0, 0.0);
    let unit = Complex64::new(1.0, 0.0);
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    match spec {
        StateSpec::Preset { preset } => match preset {
            StatePreset::Zero => Ok(single(unit, zero)),
            StatePreset::One => Ok(single(zero, unit)),
            StatePreset::Plus => Ok(single(h, h)),
            StatePreset::PlusI => Ok(single(h, Complex64::new(0.0, FRAC_1_SQRT_2))),
            StatePreset::ThreeTerm => {
                if qubits != 2 {
                    return Err(Error::config("state.preset", "`three_term` is a two-qubit state"));
                }
                let a = 1.0 / 3f64.sqrt();
                Ok(PureState::from_slice(&[
                    Complex64::new(a, 0.0),
                    Complex64::new(0.0, a),
                    zero,
                    Complex64::new(a, 0.0),
                ])?)
            }
            StatePreset::Worst => {
                if qubits != 1 {
                    return Err(Error::config("state.preset", "`worst` is only defined for one qubit"));
                }
                Ok(worst_state(fuzzy, GridSpec::default())?.0)
            }
        },
        StateSpec::Amplitudes { amplitudes } => {
            let dim = 1usize << qubits;
            if amplitudes.len() != dim {
                return Err(Error::config(
                    "state.amplitudes",
                    format!("expected {dim} amplitudes, found {}", amplitudes.len()),
                ));
            }
            PureState::normalized(from_pairs(amplitudes)).map_err(|e| tag("state.amplitudes", e))
        }
    }
}

/// Sampling-free predictions for the configured experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub spectrum: LossSpectrum,
    pub mean: f64,
    pub variance: f64,
    /// `L = n Σ d_j`.
    pub l: f64,
    pub nu: usize,
    pub nu_h: usize,
    pub skipped_rows: usize,
}

pub fn theory(prep: &Prepared) -> Result<(TheoryReport, InformationMatrix)> {
    let info = information_matrix(&prep.truth, &prep.fuzzy)?;
    let spectrum = loss_spectrum(&info)?;
    let report = TheoryReport {
        mean: spectrum.mean(),
        variance: spectrum.variance(),
        l: spectrum.scaled_loss(),
        nu: spectrum.nu(),
        nu_h: spectrum.nu_h(),
        skipped_rows: info.skipped_rows(),
        spectrum,
    };
    Ok((report, info))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub fidelity: Option<f64>,
    pub loss: Option<f64>,
    pub chi2: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub completed: usize,
    pub failed: usize,
    pub converged: usize,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    /// Standard error of the empirical mean.
    pub standard_error: f64,
    pub theoretical_mean: f64,
    pub theoretical_variance: f64,
    /// `(empirical − theoretical) / standard_error`.
    pub mean_z: f64,
    pub ks_distance: f64,
    pub chi2_mean: f64,
    pub nu_h: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub protocol: String,
    pub channel: String,
    pub theory: TheoryReport,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
    /// Samples of the theoretical loss law used for the KS distance; not serialized.
    #[serde(skip)]
    pub theory_samples: Vec<f64>,
}

impl ExperimentResult {
    pub fn losses(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.loss).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn run_trial(prep: &Prepared, info: &InformationMatrix, index: usize, opts: &ReconstructOptions) -> TrialRecord {
    let seed = trial_seed(prep.config.master_seed, index as u64);
    let outcome = (|| -> Result<(f64, f64, bool, usize)> {
        let counts = sample_counts(&prep.fuzzy, &prep.truth, seed, prep.config.sampling_model())?;
        let r = reconstruct(&counts, &prep.fuzzy, opts)?;
        let f = fidelity(&r.estimate, &prep.truth)?;
        let chi2 = chi2_statistic(&prep.truth, &r.scaled_estimate(), info)?;
        Ok((f, chi2, r.converged, r.iterations))
    })();
    match outcome {
        Ok((f, chi2, converged, iterations)) => TrialRecord {
            index,
            seed,
            fidelity: Some(f),
            loss: Some(1.0 - f),
            chi2: Some(chi2),
            converged,
            iterations,
            error: None,
        },
        Err(e) => TrialRecord {
            index,
            seed,
            fidelity: None,
            loss: None,
            chi2: None,
            converged: false,
            iterations: 0,
            error: Some(e.to_string()),
        },
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64;
    (m, v)
}

pub fn summarize(trials: &[TrialRecord], theory: &TheoryReport, theory_samples: &[f64]) -> Summary {
    let losses: Vec<f64> = trials.iter().filter_map(|t| t.loss).collect();
    let chi2: Vec<f64> = trials.iter().filter_map(|t| t.chi2).collect();
    let (mean, var) = mean_var(&losses);
    let se = (var / losses.len().max(1) as f64).sqrt();
    Summary {
        completed: losses.len(),
        failed: trials.len() - losses.len(),
        converged: trials.iter().filter(|t| t.converged).count(),
        empirical_mean: mean,
        empirical_variance: var,
        standard_error: se,
        theoretical_mean: theory.mean,
        theoretical_variance: theory.variance,
        mean_z: (mean - theory.mean) / se,
        ks_distance: ks_distance(&losses, theory_samples),
        chi2_mean: mean_var(&chi2).0,
        nu_h: theory.nu_h,
    }
}

/// Runs all trials; per-trial failures are recorded, configuration errors abort.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let prep = prepare(config)?;
    run_prepared(&prep)
}

pub fn run_prepared(prep: &Prepared) -> Result<ExperimentResult> {
    let (theory, info) = theory(prep)?;
    let opts = ReconstructOptions::default();
    let trials: Vec<TrialRecord> = (0..prep.config.trials)
        .into_par_iter()
        .map(|i| run_trial(prep, &info, i, &opts))
        .collect();
    let theory_samples = sample_loss_distribution(
        &theory.spectrum,
        THEORY_SAMPLES,
        trial_seed(prep.config.master_seed, u64::MAX),
    );
    let summary = summarize(&trials, &theory, &theory_samples);
    Ok(ExperimentResult {
        config: prep.config.clone(),
        protocol: prep.protocol.label().to_string(),
        channel: prep.channel.label().to_string(),
        theory,
        trials,
        summary,
        theory_samples,
    })
}

#[derive(Serialize)]
struct HistRow {
    bin_left: f64,
    bin_right: f64,
    empirical_density: f64,
    theory_density: f64,
}

/// Empirical and theoretical histograms on shared bins.
pub fn loss_histograms(result: &ExperimentResult) -> (Histogram, Histogram) {
    let losses = result.losses();
    let bins = result.config.bins.unwrap_or_else(|| freedman_diaconis_bins(&losses));
    let upper = losses.iter().copied().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let edges = uniform_edges(upper, bins);
    (
        Histogram::new(&losses, edges.clone()),
        Histogram::new(&result.theory_samples, edges),
    )
}

/// Writes `result.json`, `metadata.json`, `trials.csv`, `loss_hist.csv` and `loss_hist.svg`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("result.json", result.to_json()?.as_bytes())?;

    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let metadata = serde_json::json!({
        "created_unix": created,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
    });
    put("metadata.json", serde_json::to_string_pretty(&metadata)?.as_bytes())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for t in &result.trials {
        w.serialize(t).map_err(csv_error)?;
    }
    put("trials.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let (emp, theo) = loss_histograms(result);
    let mut w = csv::Writer::from_writer(Vec::new());
    for ((e, t), edge) in emp.density.iter().zip(&theo.density).zip(emp.edges.windows(2)) {
        w.serialize(HistRow {
            bin_left: edge[0],
            bin_right: edge[1],
            empirical_density: *e,
            theory_density: *t,
        })
        .map_err(csv_error)?;
    }
    put("loss_hist.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let title = format!(
        "1 − F: {} | {}, n = {}, {} trials",
        result.protocol, result.channel, result.config.n, result.config.trials
    );
    put("loss_hist.svg", histogram_svg(&title, &emp, &theo).as_bytes())?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_qubit_json(trials: usize) -> String {
        format!(
            r#"{{
                "protocol": {{"kind": "tetrahedron"}},
                "channels": {{"kind": "pure_dephasing", "t_over_T2pure": 0.5}},
                "state": {{"preset": "plus_i"}},
                "n": 4000,
                "trials": {trials},
                "master_seed": 7
            }}"#
        )
    }

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_json(&one_qubit_json(3)).unwrap();
        assert_eq!(cfg.protocol.qubits, 1);
        assert_eq!(cfg.sampling, SamplingModel::Multinomial);
        assert!(!cfg.exact);
    }

    #[test]
    fn config_errors_carry_field_path() {
        let bad = one_qubit_json(3).replace("\"tetrahedron\"", "\"dodecahedron\"");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "protocol.kind"),
            other => panic!("unexpected {other:?}"),
        }
        let zero = one_qubit_json(0);
        match ExperimentConfig::from_json(&zero) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "trials"),
            other => panic!("unexpected {other:?}"),
        }
        let amp = one_qubit_json(1).replace(r#"{"preset": "plus_i"}"#, r#"{"amplitudes": [[1, 0]]}"#);
        let cfg = ExperimentConfig::from_json(&amp).unwrap();
        match prepare(&cfg) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "state.amplitudes"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn amplitudes_are_normalized_at_load() {
        let text = one_qubit_json(1).replace(r#"{"preset": "plus_i"}"#, r#"{"amplitudes": [[3, 0], [0, 4]]}"#);
        let prep = prepare(&ExperimentConfig::from_json(&text).unwrap()).unwrap();
        assert!((prep.truth.amplitudes().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_recovers_truth() {
        let text = r#"{
            "protocol": {"kind": "tetrahedron"},
            "state": {"preset": "plus_i"},
            "n": 4000, "trials": 1, "exact": true
        }"#;
        let result = run_experiment(&ExperimentConfig::from_json(text).unwrap()).unwrap();
        assert!(result.trials[0].loss.unwrap() <= 1e-6);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = ExperimentConfig::from_json(&one_qubit_json(24)).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_experiment(&cfg).unwrap().to_json().unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn two_qubit_preset_and_channels() {
        let text = r#"{
            "protocol": {"kind": "tetrahedron", "qubits": 2},
            "channels": [{"kind": "amplitude_relaxation", "t_over_T1": 0.5},
                         {"kind": "amplitude_relaxation", "t_over_T1": 0.5}],
            "state": {"preset": "three_term"},
            "n": 5000, "trials": 2
        }"#;
        let prep = prepare(&ExperimentConfig::from_json(text).unwrap()).unwrap();
        let (t, _) = theory(&prep).unwrap();
        assert_eq!(t.nu, 6);
        assert_eq!(t.nu_h, 7);
    }
}
