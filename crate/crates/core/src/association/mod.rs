//! Edge-based validation of hand assignments.
//!
//! Straight edge segments near an estimated limb count as support for it.
//! Comparing the forearm support of the estimate against the estimate with
//! its hands exchanged reveals left/right hand swaps made by the detector.

mod corrupt;

pub use corrupt::{corrupt_measurements, corrupt_measurements_logged, swap_hands, CorruptionLog, CorruptionModel};

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bodymodel::{FullBodyEstimate, Joint, Side};
use crate::error::{Error, Result};
use crate::gaussian::LN_2PI;

/// An undirected straight edge in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSegment {
    pub mid_x: f64,
    pub mid_y: f64,
    /// Radians in `[0, π)`.
    pub orientation: f64,
}

impl EdgeSegment {
    /// Normalises the orientation modulo π.
    pub fn new(mid_x: f64, mid_y: f64, orientation: f64) -> Self {
        Self {
            mid_x,
            mid_y,
            orientation: normalize_orientation(orientation),
        }
    }
}

pub fn normalize_orientation(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly π
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Difference of two undirected orientations, wrapped to `[-π/2, π/2]`.
pub fn orientation_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    if d > FRAC_PI_2 {
        d - PI
    } else {
        d
    }
}

/// A limb estimate as an image segment between two joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbHypothesis {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl LimbHypothesis {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidParameter("limb endpoints coincide".into()));
        }
        Ok(Self { a, b })
    }

    pub fn between(est: &FullBodyEstimate, from: Joint, to: Joint) -> Result<Self> {
        let p = est.get(from);
        let q = est.get(to);
        Self::new((p.u_over_lambda, p.v_over_lambda), (q.u_over_lambda, q.v_over_lambda))
    }

    pub fn midpoint(&self) -> (f64, f64) {
        (0.5 * (self.a.0 + self.b.0), 0.5 * (self.a.1 + self.b.1))
    }

    pub fn orientation(&self) -> f64 {
        normalize_orientation((self.b.1 - self.a.1).atan2(self.b.0 - self.a.0))
    }

    pub fn length(&self) -> f64 {
        (self.b.0 - self.a.0).hypot(self.b.1 - self.a.1)
    }
}

/// Diagonal Gaussian kernel over `(Δθ, Δx, Δy)` and the support threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSupportParams {
    pub sigma_theta: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub tau: f64,
}

impl EdgeSupportParams {
    /// Threshold set to the kernel density at two standard deviations on every axis.
    pub fn new(sigma_theta: f64, sigma_x: f64, sigma_y: f64) -> Result<Self> {
        let mut p = Self {
            sigma_theta,
            sigma_x,
            sigma_y,
            tau: 1.0,
        };
        p.tau = p.peak_density() * (-6.0f64).exp();
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.sigma_theta) && ok(self.sigma_x) && ok(self.sigma_y) && ok(self.tau)) {
            return Err(Error::InvalidParameter(
                "edge kernel deviations and threshold must be positive".into(),
            ));
        }
        Ok(())
    }

    fn log_peak(&self) -> f64 {
        -1.5 * LN_2PI - (self.sigma_theta * self.sigma_x * self.sigma_y).ln()
    }

    pub fn peak_density(&self) -> f64 {
        self.log_peak().exp()
    }

    pub fn density(&self, e: &EdgeSegment, l: &LimbHypothesis) -> f64 {
        let (mx, my) = l.midpoint();
        let dt = orientation_difference(e.orientation, l.orientation()) / self.sigma_theta;
        let dx = (e.mid_x - mx) / self.sigma_x;
        let dy = (e.mid_y - my) / self.sigma_y;
        (self.log_peak() - 0.5 * (dt * dt + dx * dx + dy * dy)).exp()
    }
}

impl Default for EdgeSupportParams {
    fn default() -> Self {
        Self::new(15f64.to_radians(), 20.0, 20.0).expect("default edge kernel is valid")
    }
}

pub fn edge_supports(e: &EdgeSegment, l: &LimbHypothesis, p: &EdgeSupportParams) -> bool {
    p.density(e, l) > p.tau
}

pub fn support_count(edges: &[EdgeSegment], limbs: &[LimbHypothesis], p: &EdgeSupportParams) -> Vec<usize> {
    limbs
        .iter()
        .map(|l| edges.iter().filter(|e| edge_supports(e, l, p)).count())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapDecision {
    Keep,
    Swap,
}

/// Forearm support totals for the estimate as given and with its hands exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapEvidence {
    pub as_is: usize,
    pub swapped: usize,
}

fn forearm_support(est: &FullBodyEstimate, edges: &[EdgeSegment], p: &EdgeSupportParams) -> usize {
    Side::BOTH
        .iter()
        .filter_map(|s| LimbHypothesis::between(est, s.elbow(), s.hand()).ok())
        .map(|l| edges.iter().filter(|e| edge_supports(e, &l, p)).count())
        .sum()
}

pub fn swap_evidence(estimate: &FullBodyEstimate, edges: &[EdgeSegment], p: &EdgeSupportParams) -> SwapEvidence {
    SwapEvidence {
        as_is: forearm_support(estimate, edges, p),
        swapped: forearm_support(&estimate.with_hands_swapped(), edges, p),
    }
}

/// Swaps when exchanging the hands gains at least `margin` supporting
/// edges, and always requires a strict gain.
pub fn check_hand_swap(
    estimate: &FullBodyEstimate,
    edges: &[EdgeSegment],
    p: &EdgeSupportParams,
    margin: usize,
) -> SwapDecision {
    let ev = swap_evidence(estimate, edges, p);
    if ev.swapped > ev.as_is && ev.swapped - ev.as_is >= margin {
        SwapDecision::Swap
    } else {
        SwapDecision::Keep
    }
}

/// Noise and clutter settings for synthetic edge maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSynthParams {
    pub per_limb: usize,
    /// Edges are placed uniformly on this central fraction of the limb.
    pub span: f64,
    pub position_noise_px: f64,
    pub orientation_noise: f64,
    /// Edges with uniform position and orientation.
    pub clutter: usize,
    pub width: f64,
    pub height: f64,
}

impl Default for EdgeSynthParams {
    fn default() -> Self {
        Self {
            per_limb: 5,
            span: 0.6,
            position_noise_px: 2.0,
            orientation_noise: 3f64.to_radians(),
            clutter: 0,
            width: 640.0,
            height: 480.0,
        }
    }
}

/// Edge segments scattered along the given limbs, plus clutter.
pub fn synth_limb_edges<R: Rng + ?Sized>(limbs: &[LimbHypothesis], cfg: &EdgeSynthParams, rng: &mut R) -> Vec<EdgeSegment> {
    let pos = Normal::new(0.0, cfg.position_noise_px.max(0.0)).expect("finite deviation");
    let ang = Normal::new(0.0, cfg.orientation_noise.max(0.0)).expect("finite deviation");
    let mut out = Vec::with_capacity(limbs.len() * cfg.per_limb + cfg.clutter);
    let half = 0.5 * cfg.span.clamp(0.0, 1.0);
    for l in limbs {
        let theta = l.orientation();
        for _ in 0..cfg.per_limb {
            let s = if half > 0.0 { rng.random_range(0.5 - half..=0.5 + half) } else { 0.5 };
            let x = l.a.0 + s * (l.b.0 - l.a.0) + pos.sample(rng);
            let y = l.a.1 + s * (l.b.1 - l.a.1) + pos.sample(rng);
            out.push(EdgeSegment::new(x, y, theta + ang.sample(rng)));
        }
    }
    for _ in 0..cfg.clutter {
        out.push(EdgeSegment::new(
            rng.random_range(0.0..cfg.width),
            rng.random_range(0.0..cfg.height),
            rng.random_range(0.0..PI),
        ));
    }
    out
}

/// The four arm limbs (upper arms and forearms) of an estimate.
pub fn arm_limbs(est: &FullBodyEstimate) -> Vec<LimbHypothesis> {
    let mut out = Vec::with_capacity(4);
    for side in Side::BOTH {
        for (a, b) in [(side.shoulder(), side.elbow()), (side.elbow(), side.hand())] {
            if let Ok(l) = LimbHypothesis::between(est, a, b) {
                out.push(l);
            }
        }
    }
    out
}
