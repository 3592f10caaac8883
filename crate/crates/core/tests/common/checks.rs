//! Scenario runners shared by the integration tests (small sizes) and the
//! acceptance harness (full sizes). Each returns the measured quantity and
//! leaves the pass/fail decision to the caller.

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use posetrack::association::{check_hand_swap, corrupt_measurements_logged, synth_limb_edges, arm_limbs, CorruptionModel, EdgeSupportParams, EdgeSynthParams, SwapDecision};
use posetrack::bodymodel::{transition_logpdf, FullBodyEstimate, Joint, SelectedObservation, Side, StateLayout, TransitionParams};
use posetrack::dataio::{make_measurements, synth_skeleton, Camera, MotionSpec};
use posetrack::eval::{error_3d, procrustes_fixed_scale, DEFAULT_ALIGN_JOINTS};
use posetrack::gaussian::{em_fit, gaussian_product, EmConfig, Gaussian, GaussianMixture};
use posetrack::geometry::{backproject, build_projection, project, CameraIntrinsics, CameraPose, Joint3D, JointImage};
use posetrack::pipeline::project_recording;
use posetrack::trackers::{initial_tracks, mkf_step, pf_step, KernelScratch, ParticleSet, TrackerConfig, TransitionKernel, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn diag_q<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

fn selected(o: &RefObs, d: usize) -> SelectedObservation {
    SelectedObservation::new(d, o.idx.clone(), o.z.clone(), o.r.clone()).expect("valid observation")
}

/// Largest relative deviation between `c N(x | mu_c, S_c)` and the product
/// `N(x | x_prev, Q) N(x | mu, S)` over random cases.
pub fn gaussian_product_error(cases: usize, points: usize, dims: &[usize], seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let d = dims[case % dims.len()];
        let s = random_spd(&mut r, d, 0.3, 3.0);
        let q = random_spd(&mut r, d, 0.2, 2.0);
        let mu = random_vec(&mut r, d, 1.0);
        let x_prev = random_vec(&mut r, d, 1.0);
        let g = Gaussian::new(mu.clone(), s.clone()).unwrap();
        let p = gaussian_product(&g, &x_prev, &q).unwrap();
        for _ in 0..points {
            let x = random_vec(&mut r, d, 1.5);
            let lhs = p.log_scale + p.product.logpdf(&x).unwrap();
            let rhs = gauss_logpdf(&x, &x_prev, &q) + gauss_logpdf(&x, &mu, &s);
            worst = worst.max(((lhs - rhs).exp() - 1.0).abs());
        }
    }
    worst
}

fn random_prior<R: Rng>(rng: &mut R, d: usize, k: usize) -> GaussianMixture {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let comps = (0..k)
        .map(|_| Gaussian::new(random_vec(rng, d, 2.5), random_spd(rng, d, 0.3, 2.0)).unwrap())
        .collect();
    GaussianMixture::normalized(w, comps).unwrap()
}

/// Trapezoid integrals of the transition density on a grid, for both the
/// literal implementation and the tracker kernel. Returns the worst
/// `|integral - 1|` over all cases.
pub fn transition_normalisation_error(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let mut worst = (0.0f64, 0.0f64);
    for d in [1usize, 2] {
        for k in [2usize, 5] {
            let prior = random_prior(&mut r, d, k);
            let tp = TransitionParams::new(diag_q(&mut r, d, 0.3, 1.5)).unwrap();
            let kernel = TransitionKernel::new(&prior, &tp).unwrap();
            let mut scratch = KernelScratch::new(d, k);
            let x_prev = random_vec(&mut r, d, 2.0);
            let (h, half) = if d == 1 { (0.01, 1200) } else { (0.05, 240) };
            let grid: Vec<f64> = (-half..=half).map(|i| i as f64 * h).collect();
            let mut lit = 0.0;
            let mut ker = 0.0;
            let mut add = |x: DVector<f64>, wt: f64| {
                lit += wt * transition_logpdf(&prior, &tp, &x_prev, &x).unwrap().exp();
                ker += wt * kernel.logpdf(&x_prev, &x, &mut scratch).exp();
            };
            let edge = |i: usize| if i == 0 || i == grid.len() - 1 { 0.5 } else { 1.0 };
            if d == 1 {
                for (i, &a) in grid.iter().enumerate() {
                    add(DVector::from_vec(vec![a]), edge(i) * h);
                }
            } else {
                for (i, &a) in grid.iter().enumerate() {
                    for (j, &b) in grid.iter().enumerate() {
                        add(DVector::from_vec(vec![a, b]), edge(i) * edge(j) * h * h);
                    }
                }
            }
            worst.0 = worst.0.max((lit - 1.0).abs());
            worst.1 = worst.1.max((ker - 1.0).abs());
        }
    }
    worst
}

/// Runs an MKF variant with a one-component prior next to the reference
/// Kalman filter and returns the worst mean and covariance deviation over
/// all tracks and steps, relative to `max(1, |reference|)`.
pub fn kalman_equivalence(variant: Variant, d: usize, steps: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let g = Gaussian::new(random_vec(&mut r, d, 2.0), random_spd(&mut r, d, 0.5, 3.0)).unwrap();
    let prior = GaussianMixture::single(g.clone());
    let q = diag_q(&mut r, d, 0.1, 1.0);
    let tp = TransitionParams::new(q.clone()).unwrap();
    let kernel = TransitionKernel::new(&prior, &tp).unwrap();
    let cond = ref_conditional(&g, &DMatrix::from_diagonal(&DVector::from_vec(q)));
    let init = Gaussian::new(random_vec(&mut r, d, 1.0), random_spd(&mut r, d, 0.5, 2.0)).unwrap();
    let idx: Vec<usize> = (0..d).filter(|i| i % 2 == 0 || *i == d - 1).collect();
    let obs = simulate_conditional(&mut r, &cond, init.mean(), &idx, 0.4, steps);

    let cfg = TrackerConfig {
        rng_seed: seed,
        ..TrackerConfig::new(variant)
    };
    let mut tracks = initial_tracks(variant, 1, &cfg, &init).unwrap();
    let mut kf = RefKalman {
        mean: init.mean().clone(),
        cov: init.cov().clone(),
    };
    let (mut dm, mut dc) = (0.0f64, 0.0f64);
    for (t, o) in obs.iter().enumerate() {
        let step = mkf_step(&tracks, prior.weights(), &kernel, Some(&selected(o, d)), variant, &cfg, seed, t).unwrap();
        kf.predict(&cond);
        kf.update(o);
        let ms = kf.mean.amax().max(1.0);
        let cs = kf.cov.amax().max(1.0);
        dm = dm.max((&step.estimate - &kf.mean).amax() / ms);
        for tr in &step.tracks {
            dm = dm.max((&tr.mean - &kf.mean).amax() / ms);
            dc = dc.max(max_abs_diff(&tr.cov, &kf.cov) / cs);
        }
        tracks = step.tracks;
    }
    (dm, dc)
}

/// Two-component switching problem in two dimensions with five
/// observed frames.
pub struct SwitchingProblem {
    pub prior: GaussianMixture,
    pub q: Vec<f64>,
    pub init: Gaussian,
    pub obs: Vec<RefObs>,
}

pub fn switching_problem() -> SwitchingProblem {
    let c1 = Gaussian::new(DVector::from_vec(vec![-2.0, 1.0]), DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.6])).unwrap();
    let c2 = Gaussian::new(DVector::from_vec(vec![2.5, -0.5]), DMatrix::from_row_slice(2, 2, &[0.5, -0.2, -0.2, 1.2])).unwrap();
    let prior = GaussianMixture::new(vec![0.4, 0.6], vec![c1, c2]).unwrap();
    let init = Gaussian::new(DVector::from_vec(vec![0.0, 0.0]), DMatrix::identity(2, 2) * 2.0).unwrap();
    let zs = [[-1.0, 0.5], [0.4, 0.0], [1.8, -0.2], [0.9, 0.3], [-0.6, 0.8]];
    let obs = zs
        .iter()
        .enumerate()
        .map(|(t, z)| {
            // the second coordinate is seen on odd frames only
            let idx = if t % 2 == 1 { vec![0, 1] } else { vec![0] };
            RefObs {
                z: DVector::from_iterator(idx.len(), idx.iter().map(|&i| z[i])),
                r: DVector::from_element(idx.len(), 0.5),
                idx,
            }
        })
        .collect();
    SwitchingProblem {
        prior,
        q: vec![0.4, 0.3],
        init,
        obs,
    }
}

impl SwitchingProblem {
    pub fn oracle(&self) -> Vec<DVector<f64>> {
        let q = DMatrix::from_diagonal(&DVector::from_vec(self.q.clone()));
        exhaustive_posterior_means(&self.prior, &q, &self.init, &self.obs)
    }

    /// Per-frame estimates of one mkf-sampled run.
    pub fn run_sampled(&self, tracks: usize, seed: u64) -> Vec<DVector<f64>> {
        let tp = TransitionParams::new(self.q.clone()).unwrap();
        let kernel = TransitionKernel::new(&self.prior, &tp).unwrap();
        let cfg = TrackerConfig {
            n_tracks: Some(tracks),
            rng_seed: seed,
            ..TrackerConfig::new(Variant::MkfSampled)
        };
        let mut state = initial_tracks(Variant::MkfSampled, self.prior.len(), &cfg, &self.init).unwrap();
        let mut out = Vec::with_capacity(self.obs.len());
        for (t, o) in self.obs.iter().enumerate() {
            let step = mkf_step(&state, self.prior.weights(), &kernel, Some(&selected(o, 2)), Variant::MkfSampled, &cfg, seed, t).unwrap();
            out.push(step.estimate);
            state = step.tracks;
        }
        out
    }
}

/// Largest `|ensemble mean - oracle| / standard error` over every frame
/// and coordinate.
pub fn exhaustive_z_score(p: &SwitchingProblem, tracks: usize, seeds: u64) -> f64 {
    let oracle = p.oracle();
    let runs: Vec<Vec<DVector<f64>>> = (0..seeds).map(|s| p.run_sampled(tracks, 1000 + s)).collect();
    let mut worst: f64 = 0.0;
    for (t, exact) in oracle.iter().enumerate() {
        for c in 0..exact.len() {
            let xs: Vec<f64> = runs.iter().map(|r| r[t][c]).collect();
            let (m, se) = mean_and_se(&xs);
            worst = worst.max((m - exact[c]).abs() / se.max(1e-300));
        }
    }
    worst
}

/// One-joint linear-Gaussian problem for the random-walk particle filter.
pub struct WalkProblem {
    pub layout: StateLayout,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub q: Vec<f64>,
    pub init: Gaussian,
    pub obs: Vec<RefObs>,
}

pub fn walk_problem(frames: usize) -> WalkProblem {
    let mut r = rng(77);
    let mu = DVector::from_vec(vec![1.0, -0.5, 0.8]);
    let sigma = random_spd(&mut r, 3, 1.0, 4.0);
    let q = vec![0.5, 0.5, 0.2];
    let obs = (0..frames)
        .map(|t| RefObs {
            idx: vec![0, 1],
            z: DVector::from_vec(vec![1.0 + 0.3 * t as f64, -0.5 - 0.1 * t as f64]),
            r: DVector::from_element(2, 0.5),
        })
        .collect();
    WalkProblem {
        layout: StateLayout::new(Side::Left, vec![Joint::LeftHand]).unwrap(),
        mu,
        sigma,
        q,
        init: Gaussian::new(DVector::zeros(3), DMatrix::identity(3, 3) * 2.0).unwrap(),
        obs,
    }
}

impl WalkProblem {
    pub fn oracle(&self) -> Vec<DVector<f64>> {
        let q = DMatrix::from_diagonal(&DVector::from_vec(self.q.clone()));
        unscaled_pf_oracle(&self.init, &self.mu, &self.sigma, &q, &self.obs)
    }

    pub fn run(&self, variant: Variant, particles: usize, seed: u64) -> Vec<DVector<f64>> {
        let prior = GaussianMixture::single(Gaussian::new(self.mu.clone(), self.sigma.clone()).unwrap());
        let tp = TransitionParams::new(self.q.clone()).unwrap();
        let kernel = TransitionKernel::new(&prior, &tp).unwrap();
        let cfg = TrackerConfig {
            n_particles: particles,
            rng_seed: seed,
            ..TrackerConfig::new(variant)
        };
        let mut ps = ParticleSet::from_gaussian(self.layout.clone(), &self.init, particles, seed).unwrap();
        self.obs
            .iter()
            .enumerate()
            .map(|(t, o)| {
                let step = pf_step(&ps, &prior, &kernel, Some(&selected(o, 3)), variant, &cfg, seed, t).unwrap();
                ps = step.set;
                step.estimate
            })
            .collect()
    }
}

/// Root-mean-square deviation from the oracle over seeds, frames and
/// coordinates.
pub fn pf_rmse(p: &WalkProblem, particles: usize, seeds: u64) -> f64 {
    let oracle = p.oracle();
    let mut ss = 0.0;
    let mut n = 0usize;
    for s in 0..seeds {
        for (est, exact) in p.run(Variant::PfSimpleUnscaled, particles, 500 + s).iter().zip(&oracle) {
            ss += (est - exact).norm_squared();
            n += exact.len();
        }
    }
    (ss / n as f64).sqrt()
}

pub struct EmRecovery {
    pub means: [f64; 2],
    pub weights: [f64; 2],
    pub monotone: bool,
    pub iterations: usize,
}

/// Fits two components to draws from `0.3 N(-5, 1) + 0.7 N(5, 1)`.
pub fn em_planted(n: usize, seed: u64) -> EmRecovery {
    let mut r = rng(seed);
    let data: Vec<DVector<f64>> = (0..n)
        .map(|_| {
            let m = if r.random_bool(0.3) { -5.0 } else { 5.0 };
            DVector::from_vec(vec![m + standard_normal(&mut r)])
        })
        .collect();
    let fit = em_fit(&data, &EmConfig { k: 2, init_seed: seed, ..EmConfig::default() }).unwrap();
    let mut comps: Vec<(f64, f64)> = fit
        .mixture
        .components()
        .iter()
        .zip(fit.mixture.weights())
        .map(|(g, w)| (g.mean()[0], *w))
        .collect();
    comps.sort_by(|a, b| a.0.total_cmp(&b.0));
    // rounding slack only: one part in 10^12 of the log-likelihood
    let monotone = fit
        .log_likelihoods
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-12 * w[0].abs());
    EmRecovery {
        means: [comps[0].0, comps[1].0],
        weights: [comps[0].1, comps[1].1],
        monotone,
        iterations: fit.iterations,
    }
}

/// Worst 3D and image-plane round-trip errors over random cameras.
pub fn geometry_round_trip(cases: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let intr = CameraIntrinsics::new(
            r.random_range(200.0..1500.0),
            r.random_range(200.0..1500.0),
            r.random_range(0.0..800.0),
            r.random_range(0.0..600.0),
        )
        .unwrap();
        let pose = CameraPose {
            tx: r.random_range(-1.0..1.0),
            ty: r.random_range(-1.0..1.0),
            tz: r.random_range(1.0..4.0),
            alpha: r.random_range(-1.0..1.0),
            beta: r.random_range(-1.0..1.0),
            gamma: r.random_range(-1.0..1.0),
        };
        let pm = build_projection(&intr, &pose);
        // a point in front of the camera, mapped back to world coordinates
        let cam = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.5..5.0));
        let j = Joint3D::from_vector(&(pose.rotation().transpose() * (cam - pose.translation())));
        let ji = project(&pm, &j).unwrap();
        assert!((ji.lambda - cam.z).abs() < 1e-9);
        let back = backproject(&pm, &ji).unwrap();
        worst.0 = worst.0.max(back.distance(&j));
        let again = project(&pm, &back).unwrap();
        worst.1 = worst.1.max(again.pixel_distance(&ji));
    }
    worst
}

/// Residual of recovered random rigid transforms, and the 3D error of a
/// rigidly moved ground truth after alignment.
pub fn procrustes_residuals(cases: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let mut worst_fit: f64 = 0.0;
    for _ in 0..cases {
        let axis = Vector3::new(standard_normal(&mut r), standard_normal(&mut r), standard_normal(&mut r));
        let rot = Rotation3::from_scaled_axis(axis.normalize() * r.random_range(-3.0..3.0)).into_inner();
        let t = Vector3::new(standard_normal(&mut r), standard_normal(&mut r), standard_normal(&mut r));
        let src: Vec<Vector3<f64>> = (0..8)
            .map(|_| Vector3::new(standard_normal(&mut r), standard_normal(&mut r), standard_normal(&mut r)))
            .collect();
        let dst: Vec<_> = src.iter().map(|p| rot * p + t).collect();
        let a = procrustes_fixed_scale(&src, &dst).unwrap();
        worst_fit = worst_fit.max(a.residual_rms(&src, &dst)).max((a.rotation - rot).amax());
    }

    let rec = synth_skeleton(&MotionSpec::default(), 60, seed).unwrap();
    let cam = Camera::default();
    let pm = cam.projection();
    let rot = Rotation3::from_euler_angles(0.1, -0.2, 0.15).into_inner();
    let shift = Vector3::new(0.05, -0.03, 0.1);
    let moved: Vec<FullBodyEstimate> = rec
        .frames
        .iter()
        .map(|joints| {
            let mut out = FullBodyEstimate {
                joints: [JointImage::new(0.0, 0.0, 1.0); Joint::COUNT],
            };
            for j in Joint::ALL {
                let p = rot * joints[j.index()].to_vector() + shift;
                out.set(j, project(&pm, &Joint3D::from_vector(&p)).unwrap());
            }
            out
        })
        .collect();
    let e = error_3d(&moved, &rec.frames, &pm, &DEFAULT_ALIGN_JOINTS).unwrap();
    let worst_3d = e.series.iter().flatten().fold(0.0f64, |a, b| a.max(*b));
    (worst_fit, worst_3d)
}

pub struct SwapRates {
    pub swapped_frames: usize,
    pub clean_frames: usize,
    pub swap_hit_rate: f64,
    pub keep_rate: f64,
}

/// Injects persistent hand swaps into exact measurements, builds each
/// frame's estimate from the true skeleton with the measured hands, and
/// draws edges along the true limbs.
pub fn edge_association(frames: usize, seed: u64, synth: &EdgeSynthParams, params: &EdgeSupportParams) -> SwapRates {
    let rec = synth_skeleton(&MotionSpec::default(), frames, seed).unwrap();
    let cam = Camera::default();
    let truth = project_recording(&rec, &cam.projection()).unwrap();
    let clean = make_measurements(&rec, &cam, &Joint::ALL).unwrap();
    let model = CorruptionModel {
        p_swap_onset: 0.05,
        swap_mean_duration: 15.0,
        ..Default::default()
    };
    let (swapped, log) = corrupt_measurements_logged(&clean, &model, seed ^ 0x5a5a).unwrap();
    let mut r = rng(seed ^ 0xed9e);
    let (mut hit, mut n_swap, mut keep, mut n_clean) = (0usize, 0usize, 0usize, 0usize);
    for (t, frame) in swapped.frames.iter().enumerate() {
        let mut est = truth[t];
        for hand in [Joint::LeftHand, Joint::RightHand] {
            let (u, v) = frame.visible(hand).expect("hands visible");
            let lambda = est.get(hand).lambda;
            est.set(hand, JointImage::new(u, v, lambda));
        }
        let edges = synth_limb_edges(&arm_limbs(&truth[t]), synth, &mut r);
        let d = check_hand_swap(&est, &edges, params, 2);
        if log.swapped[t] {
            n_swap += 1;
            hit += (d == SwapDecision::Swap) as usize;
        } else {
            n_clean += 1;
            keep += (d == SwapDecision::Keep) as usize;
        }
    }
    SwapRates {
        swapped_frames: n_swap,
        clean_frames: n_clean,
        swap_hit_rate: hit as f64 / n_swap.max(1) as f64,
        keep_rate: keep as f64 / n_clean.max(1) as f64,
    }
}

fn body(points: [(f64, f64); Joint::COUNT]) -> FullBodyEstimate {
    FullBodyEstimate {
        joints: points.map(|(u, v)| JointImage::new(u, v, 1.0)),
    }
}

/// Two-frame fixture whose curve is worked out by hand: per (limb, frame)
/// the worst endpoint error over limb length is 0.1, 0.25, 0.3, 0.3 on the
/// first frame and 0.5, 0.0625, 0, 1.0 on the second.
pub fn pcp_fixture() -> (Vec<FullBodyEstimate>, Vec<FullBodyEstimate>, Vec<f64>, Vec<f64>) {
    // head, neck, then shoulder, elbow, hand of the left and right arms
    let t = body([
        (100.0, -80.0),
        (100.0, -20.0),
        (0.0, 0.0),
        (0.0, 100.0),
        (0.0, 180.0),
        (200.0, 0.0),
        (200.0, 100.0),
        (200.0, 200.0),
    ]);
    let mut e0 = t;
    let mut e1 = t;
    let shift = |e: &mut FullBodyEstimate, j: Joint, du: f64| {
        let p = e.get(j);
        e.set(j, JointImage::new(p.u_over_lambda + du, p.v_over_lambda, p.lambda));
    };
    shift(&mut e0, Joint::LeftShoulder, 10.0);
    shift(&mut e0, Joint::LeftHand, -20.0);
    shift(&mut e0, Joint::RightElbow, 30.0);
    shift(&mut e1, Joint::LeftShoulder, -50.0);
    shift(&mut e1, Joint::LeftElbow, 5.0);
    shift(&mut e1, Joint::RightHand, 100.0);
    let thresholds = vec![0.0, 0.05, 0.1, 0.25, 0.3, 0.5, 0.75, 1.0];
    let expected = [1.0, 1.0, 3.0, 4.0, 6.0, 7.0, 7.0, 8.0].iter().map(|c| c / 8.0).collect();
    (vec![e0, e1], vec![t, t], thresholds, expected)
}

/// Checks that random estimate sets give non-decreasing curves in `[0, 1]`.
pub fn pcp_monotone_on_random(cases: usize, seed: u64) -> bool {
    use posetrack::eval::{default_pcp_thresholds, pcp, ARM_LIMBS};
    let mut r = rng(seed);
    (0..cases).all(|_| {
        let frames = r.random_range(1..20);
        let mut est = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..frames {
            let t = body(std::array::from_fn(|_| (r.random_range(0.0..640.0), r.random_range(0.0..480.0))));
            let e = body(std::array::from_fn(|i| {
                let p = t.joints[i];
                (p.u_over_lambda + 40.0 * standard_normal(&mut r), p.v_over_lambda + 40.0 * standard_normal(&mut r))
            }));
            truth.push(t);
            est.push(e);
        }
        let c = pcp(&est, &truth, &ARM_LIMBS, &default_pcp_thresholds()).unwrap();
        c.values.windows(2).all(|w| w[1] >= w[0]) && c.values.iter().all(|v| (0.0..=1.0).contains(v))
    })
}
