//! Independent reference computations used by the integration and
//! acceptance suites. Everything here uses the textbook closed forms with
//! explicit matrix inverses, so it shares no numerical code with the
//! production filters.

#![allow(dead_code)]

pub mod checks;

use nalgebra::{DMatrix, DVector};
use posetrack::gaussian::{Gaussian, GaussianMixture};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}

pub fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Random SPD matrix with eigenvalues roughly in `[lo, hi]`.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let ev = DVector::from_fn(d, |_, _| rng.random_range(lo..hi));
    sym(&q * DMatrix::from_diagonal(&ev) * q.transpose())
}

pub fn random_vec<R: Rng>(rng: &mut R, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn gauss_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    gauss_logpdf(x, mean, cov).exp()
}

pub fn gauss_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let r = x - mean;
    let m = (r.transpose() * inv(cov) * &r)[(0, 0)];
    -0.5 * (m + cov.determinant().ln() + d * (2.0 * std::f64::consts::PI).ln())
}

pub fn draw<R: Rng>(rng: &mut R, mean: &DVector<f64>, cov: &DMatrix<f64>) -> DVector<f64> {
    let l = cov.clone().cholesky().expect("SPD").l();
    mean + l * random_vec(rng, mean.len(), 1.0)
}

/// Conditional transition of one prior component, literal forms:
/// `Sc = (S^-1 + Q^-1)^-1`, `F = Sc Q^-1`, `Bmu = Sc S^-1 mu`.
pub struct RefConditional {
    pub f: DMatrix<f64>,
    pub b_mu: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub fn ref_conditional(g: &Gaussian, q: &DMatrix<f64>) -> RefConditional {
    let s_inv = inv(g.cov());
    let q_inv = inv(q);
    let cov = sym(inv(&(&s_inv + &q_inv)));
    RefConditional {
        f: &cov * q_inv,
        b_mu: &cov * s_inv * g.mean(),
        cov,
    }
}

/// Observation rows for a reference update: which state entries are seen,
/// their values and variances.
#[derive(Clone, Debug)]
pub struct RefObs {
    pub idx: Vec<usize>,
    pub z: DVector<f64>,
    pub r: DVector<f64>,
}

impl RefObs {
    pub fn h(&self, d: usize) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.idx.len(), d);
        for (row, &i) in self.idx.iter().enumerate() {
            h[(row, i)] = 1.0;
        }
        h
    }
}

#[derive(Clone, Debug)]
pub struct RefKalman {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl RefKalman {
    pub fn predict(&mut self, c: &RefConditional) {
        self.mean = &c.f * &self.mean + &c.b_mu;
        self.cov = sym(&c.f * &self.cov * c.f.transpose() + &c.cov);
    }

    /// Random-walk predict `x ~ N(x_prev, Q)`.
    pub fn predict_walk(&mut self, q: &DMatrix<f64>) {
        self.cov = &self.cov + q;
    }

    /// Gain-form update; returns `log N(z | H m, H P H' + R)`.
    pub fn update(&mut self, o: &RefObs) -> f64 {
        let d = self.mean.len();
        let h = o.h(d);
        let s = &h * &self.cov * h.transpose() + DMatrix::from_diagonal(&o.r);
        let y = &o.z - &h * &self.mean;
        let k = &self.cov * h.transpose() * inv(&s);
        let ll = gauss_logpdf(&o.z, &(&h * &self.mean), &s);
        self.mean = &self.mean + &k * y;
        self.cov = sym((DMatrix::identity(d, d) - &k * &h) * &self.cov);
        ll
    }

    /// Multiplies the belief by `N(mu, sigma)` treated as a full-state
    /// pseudo-measurement.
    pub fn fuse(&mut self, mu: &DVector<f64>, sigma: &DMatrix<f64>) {
        let p_inv = inv(&self.cov);
        let s_inv = inv(sigma);
        let cov = sym(inv(&(&p_inv + &s_inv)));
        self.mean = &cov * (p_inv * &self.mean + s_inv * mu);
        self.cov = cov;
    }
}

/// Exact posterior means of the switching model solved by the mixture
/// Kalman filter with indicators drawn independently from `pi` at every
/// frame. Enumerates all `N^T` indicator trajectories, each with its own
/// Kalman filter, and returns the weighted mean at every frame.
pub fn exhaustive_posterior_means(
    prior: &GaussianMixture,
    q: &DMatrix<f64>,
    init: &Gaussian,
    obs: &[RefObs],
) -> Vec<DVector<f64>> {
    let conds: Vec<RefConditional> = prior.components().iter().map(|g| ref_conditional(g, q)).collect();
    // (log weight, filter) for every trajectory prefix
    let mut paths = vec![(
        0.0f64,
        RefKalman {
            mean: init.mean().clone(),
            cov: init.cov().clone(),
        },
    )];
    let mut means = Vec::with_capacity(obs.len());
    for o in obs {
        let mut next = Vec::with_capacity(paths.len() * prior.len());
        for (lw, kf) in &paths {
            for (i, c) in conds.iter().enumerate() {
                let mut k = kf.clone();
                k.predict(c);
                let ll = k.update(o);
                next.push((lw + prior.weights()[i].ln() + ll, k));
            }
        }
        paths = next;
        let top = paths.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = paths.iter().map(|p| (p.0 - top).exp()).sum();
        let mut m = DVector::zeros(init.dim());
        for (lw, k) in &paths {
            m += &k.mean * ((lw - top).exp() / total);
        }
        means.push(m);
    }
    means
}

/// Posterior means targeted by the unscaled random-walk particle filter
/// with a single-component prior `N(mu, sigma)`: random-walk predict,
/// multiply by the prior density, then the measurement update.
pub fn unscaled_pf_oracle(
    init: &Gaussian,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    q: &DMatrix<f64>,
    obs: &[RefObs],
) -> Vec<DVector<f64>> {
    let mut kf = RefKalman {
        mean: init.mean().clone(),
        cov: init.cov().clone(),
    };
    obs.iter()
        .map(|o| {
            kf.predict_walk(q);
            kf.fuse(mu, sigma);
            kf.update(o);
            kf.mean.clone()
        })
        .collect()
}

/// Simulates `T` frames of the single-component conditional model and
/// returns observations of the listed state entries.
pub fn simulate_conditional<R: Rng>(
    rng: &mut R,
    c: &RefConditional,
    x0: &DVector<f64>,
    idx: &[usize],
    r: f64,
    t: usize,
) -> Vec<RefObs> {
    let mut x = x0.clone();
    (0..t)
        .map(|_| {
            x = draw(rng, &(&c.f * &x + &c.b_mu), &c.cov);
            let z = DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i] + r.sqrt() * rng.sample::<f64, _>(StandardNormal)));
            RefObs {
                idx: idx.to_vec(),
                z,
                r: DVector::from_element(idx.len(), r),
            }
        })
        .collect()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
