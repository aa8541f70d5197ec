//! Cross-module consistency checks run by `noisy-tomo selfcheck`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{closed_form_operator, fold_channel, make_channel, ChannelKind};
use crate::error::Result;
use crate::information::information_matrix;
use crate::linalg::{bloch_to_projector, BlochVector, PureState};
use crate::protocol::{measurement_operators, EffectiveMeasurement, Protocol, ProtocolKind, UNITY_TOL};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst deviation seen.
    pub worst: f64,
    pub tolerance: f64,
}

fn random_unit(rng: &mut ChaCha8Rng) -> BlochVector {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    BlochVector::new(s * phi.cos(), s * phi.sin(), z)
}

/// One random parameter set for each channel family.
pub fn random_channel_kinds(rng: &mut ChaCha8Rng) -> [ChannelKind; 4] {
    [
        ChannelKind::AmplitudeRelaxation {
            t_over_t1: rng.random_range(0.0..5.0),
        },
        ChannelKind::PureDephasing {
            t_over_t2: rng.random_range(0.0..5.0),
        },
        ChannelKind::BitFlip {
            p: rng.random_range(0.0..=0.5),
        },
        ChannelKind::PhaseFlip {
            p: rng.random_range(0.0..=0.5),
        },
    ]
}

/// Largest entrywise gap between the Kraus fold `Σ E†ΛE` and the closed form.
pub fn closed_form_gap(r: &BlochVector, kind: ChannelKind) -> Result<f64> {
    let ch = make_channel(kind)?;
    let folded = ch.adjoint_apply(&bloch_to_projector(r)?)?;
    Ok(folded.max_abs_diff(&closed_form_operator(r, kind)?))
}

pub fn check_closed_forms(draws: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let r = random_unit(&mut rng);
        for kind in random_channel_kinds(&mut rng) {
            worst = worst.max(closed_form_gap(&r, kind)?);
        }
    }
    Ok(Check {
        name: format!("closed-form operators match Kraus folding ({draws} draws x 4 channels)"),
        passed: worst <= 1e-12,
        worst,
        tolerance: 1e-12,
    })
}

/// Built-in channels exercised by the sweeps.
pub fn reference_channels() -> Vec<ChannelKind> {
    vec![
        ChannelKind::Identity,
        ChannelKind::AmplitudeRelaxation { t_over_t1: 0.5 },
        ChannelKind::AmplitudeRelaxation { t_over_t1: 1.5 },
        ChannelKind::PureDephasing { t_over_t2: 0.8 },
        ChannelKind::BitFlip { p: 0.1 },
        ChannelKind::PhaseFlip { p: 0.3 },
    ]
}

/// Every built-in protocol, optionally rotated, behind every reference channel.
pub fn reference_measurements(rotations: usize, seed: u64) -> Result<Vec<EffectiveMeasurement>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for kind in ProtocolKind::ALL {
        let base = Protocol::build(kind, 1000.0)?;
        let mut variants = vec![base.clone()];
        variants.push(base.rotate(&BlochVector::new(1.0, 1.0, 0.0).normalized()?, PI / 4.0)?);
        for _ in 0..rotations {
            let axis = random_unit(&mut rng);
            variants.push(base.rotate(&axis, rng.random_range(0.0..2.0 * PI))?);
        }
        for p in &variants {
            let clear = measurement_operators(p);
            for ch in reference_channels() {
                out.push(fold_channel(&clear, &make_channel(ch)?)?);
            }
        }
    }
    Ok(out)
}

pub fn check_unity(rotations: usize, seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let meas = reference_measurements(rotations, seed)?;
    for m in &meas {
        worst = worst.max(m.unity_residual() / m.n().max(1.0));
    }
    Ok(Check {
        name: format!("decomposition of unity after folding ({} measurements)", meas.len()),
        passed: worst <= UNITY_TOL,
        worst,
        tolerance: UNITY_TOL,
    })
}

pub fn check_normalization(states: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meas = reference_measurements(1, seed)?;
    let mut worst: f64 = 0.0;
    for m in &meas {
        for _ in 0..states {
            let r = random_unit(&mut rng);
            let theta = r.z.acos();
            let phi = r.y.atan2(r.x);
            let s = PureState::from_bloch_angles(theta, phi);
            let info = information_matrix(&s, m)?;
            let gap = (info.quadratic_form(s.amplitudes()) - 2.0 * m.n()).abs() / m.n();
            worst = worst.max(gap);
        }
    }
    Ok(Check {
        name: format!("normalization identity c^T H c = 2n ({} states)", meas.len() * states),
        passed: worst <= 1e-6,
        worst,
        tolerance: 1e-6,
    })
}

/// All checks with fixed seeds.
pub fn run_all() -> Result<Vec<Check>> {
    Ok(vec![
        check_closed_forms(500, 1)?,
        check_unity(3, 2)?,
        check_normalization(20, 3)?,
    ])
}
