//! Detector failure simulation: pixel noise, hand dropout and hand swaps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::bodymodel::{Joint, MeasurementFrame};
use crate::dataio::MeasurementSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionModel {
    /// Standard deviation of i.i.d. pixel noise on every coordinate.
    pub noise_sigma_px: f64,
    /// Per-frame probability that a hand is reported invisible, per hand.
    pub p_drop: f64,
    /// Probability that a swap run starts on a frame that is not swapped.
    pub p_swap_onset: f64,
    /// Mean length in frames of a swap run (geometric).
    pub swap_mean_duration: f64,
}

impl Default for CorruptionModel {
    fn default() -> Self {
        Self {
            noise_sigma_px: 0.0,
            p_drop: 0.0,
            p_swap_onset: 0.0,
            swap_mean_duration: 10.0,
        }
    }
}

impl CorruptionModel {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.noise_sigma_px.is_finite() && self.noise_sigma_px >= 0.0) {
            return Err(Error::InvalidParameter("noise_sigma_px must be non-negative".into()));
        }
        if !prob(self.p_drop) || !prob(self.p_swap_onset) {
            return Err(Error::InvalidParameter("p_drop and p_swap_onset must lie in [0, 1]".into()));
        }
        if !(self.swap_mean_duration.is_finite() && self.swap_mean_duration >= 1.0) {
            return Err(Error::InvalidParameter("swap_mean_duration must be at least 1 frame".into()));
        }
        Ok(())
    }
}

/// What the simulator did to each frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorruptionLog {
    pub swapped: Vec<bool>,
    /// Number of swap runs started.
    pub onsets: usize,
    /// Frames on which a run could have started.
    pub eligible: usize,
}

impl CorruptionLog {
    pub fn onset_frequency(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.onsets as f64 / self.eligible as f64
        }
    }
}

/// Exchanges the two hand entries of a frame, visibility included. Frames
/// missing either hand are left alone.
pub fn swap_hands(frame: &mut MeasurementFrame) {
    let l = frame.joints.iter().position(|m| m.joint == Joint::LeftHand);
    let r = frame.joints.iter().position(|m| m.joint == Joint::RightHand);
    if let (Some(l), Some(r)) = (l, r) {
        let (a, b) = (frame.joints[l], frame.joints[r]);
        frame.joints[l] = crate::bodymodel::JointMeasurement { joint: Joint::LeftHand, ..b };
        frame.joints[r] = crate::bodymodel::JointMeasurement { joint: Joint::RightHand, ..a };
    }
}

pub fn corrupt_measurements_logged(
    clean: &MeasurementSequence,
    model: &CorruptionModel,
    rng_seed: u64,
) -> Result<(MeasurementSequence, CorruptionLog)> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Normal::new(0.0, model.noise_sigma_px).expect("validated deviation");
    // failures before the first success, so the run length is this plus one
    let run = Geometric::new(1.0 / model.swap_mean_duration).expect("validated duration");

    let mut out = clean.clone();
    let mut log = CorruptionLog {
        swapped: Vec::with_capacity(out.frames.len()),
        ..Default::default()
    };
    let mut remaining: u64 = 0;
    for frame in &mut out.frames {
        if model.noise_sigma_px > 0.0 {
            for m in frame.joints.iter_mut().filter(|m| m.visible) {
                m.u += noise.sample(&mut rng);
                m.v += noise.sample(&mut rng);
            }
        }
        if remaining == 0 {
            log.eligible += 1;
            if model.p_swap_onset > 0.0 && rng.random_bool(model.p_swap_onset) {
                log.onsets += 1;
                remaining = run.sample(&mut rng) + 1;
            }
        }
        let swapped = remaining > 0;
        if swapped {
            swap_hands(frame);
            remaining -= 1;
        }
        log.swapped.push(swapped);
        if model.p_drop > 0.0 {
            for m in frame.joints.iter_mut() {
                if matches!(m.joint, Joint::LeftHand | Joint::RightHand) && rng.random_bool(model.p_drop) {
                    m.visible = false;
                }
            }
        }
    }
    out.provenance.insert(
        "corruption".to_string(),
        format!(
            "noise_sigma_px={} p_drop={} p_swap_onset={} swap_mean_duration={} seed={rng_seed}",
            model.noise_sigma_px, model.p_drop, model.p_swap_onset, model.swap_mean_duration
        ),
    );
    Ok((out, log))
}

pub fn corrupt_measurements(
    clean: &MeasurementSequence,
    model: &CorruptionModel,
    rng_seed: u64,
) -> Result<MeasurementSequence> {
    corrupt_measurements_logged(clean, model, rng_seed).map(|(seq, _)| seq)
}
