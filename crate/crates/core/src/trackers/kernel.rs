//! Per-frame cache of the particle-independent parts of the transition.
//!
//! For a fixed prior and random-walk covariance `Q`, component `i` of the
//! transition has mean `F_i x_prev + B_i mu_i` and covariance `Sigma_c` that
//! do not depend on the particle, and a weight `pi_i N(x_prev | mu_i, Sigma_i + Q)`.
//! Everything except the final matrix-vector products is computed once here.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bodymodel::TransitionParams;
use crate::error::{check_dim, Result};
use crate::gaussian::{Gaussian, GaussianMixture, LN_2PI};
use crate::linalg::{self, cholesky, log_det, logsumexp, PackedLower};

#[derive(Debug, Clone)]
struct Component {
    log_weight: f64,
    f: DMatrix<f64>,
    b: DMatrix<f64>,
    b_mu: DVector<f64>,
    cond_cov: DMatrix<f64>,
    cond_chol: PackedLower,
    cond_log_norm: f64,
    /// `N(mu, Sigma + Q)`, the scale factor as a function of `x_prev`.
    evidence: Gaussian,
}

#[derive(Debug, Clone)]
pub struct TransitionKernel {
    q_diag: Vec<f64>,
    comps: Vec<Component>,
}

/// Reusable buffers for [`TransitionKernel`] evaluations.
#[derive(Debug, Clone)]
pub struct KernelScratch {
    vec: DVector<f64>,
    log_terms: Vec<f64>,
    means: Vec<DVector<f64>>,
}

impl KernelScratch {
    pub fn new(dim: usize, components: usize) -> Self {
        Self {
            vec: DVector::zeros(dim),
            log_terms: Vec::with_capacity(components),
            means: vec![DVector::zeros(dim); components],
        }
    }
}

impl TransitionKernel {
    pub fn new(prior: &GaussianMixture, tp: &TransitionParams) -> Result<Self> {
        let d = prior.dim();
        check_dim(d, tp.dim())?;
        let q = tp.q();
        let mut comps = Vec::with_capacity(prior.len());
        for (w, g) in prior.weights().iter().zip(prior.components()) {
            // With S = Sigma + Q: B = Q S^-1, F = I - B and
            // (Q^-1 + Sigma^-1)^-1 = Q - Q S^-1 Q. No inverse of Sigma is
            // formed, so nearly singular prior components stay usable.
            let evidence = Gaussian::new(g.mean().clone(), g.cov() + &q)?;
            let s_chol = cholesky(evidence.cov())?;
            let s_inv_q = s_chol.solve(&q);
            let b = s_inv_q.transpose();
            let f = DMatrix::identity(d, d) - &b;
            let cond_cov = linalg::symmetrize(&(&q - &q * &s_inv_q));
            let chol = cholesky(&cond_cov)?;
            let b_mu = &b * g.mean();
            comps.push(Component {
                log_weight: w.ln(),
                f,
                b,
                b_mu,
                cond_log_norm: -0.5 * (d as f64 * LN_2PI + log_det(&chol)),
                cond_chol: PackedLower::from_lower(&chol.l()),
                cond_cov,
                evidence,
            });
        }
        Ok(Self {
            q_diag: tp.diag().to_vec(),
            comps,
        })
    }

    pub fn dim(&self) -> usize {
        self.q_diag.len()
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn q_diag(&self) -> &[f64] {
        &self.q_diag
    }

    /// `(Q^-1 + Sigma^-1)^-1 Q^-1`
    pub fn f(&self, i: usize) -> &DMatrix<f64> {
        &self.comps[i].f
    }

    /// `(Q^-1 + Sigma^-1)^-1 Sigma^-1`
    pub fn b(&self, i: usize) -> &DMatrix<f64> {
        &self.comps[i].b
    }

    pub fn b_mu(&self, i: usize) -> &DVector<f64> {
        &self.comps[i].b_mu
    }

    /// `(Q^-1 + Sigma^-1)^-1`
    pub fn conditional_cov(&self, i: usize) -> &DMatrix<f64> {
        &self.comps[i].cond_cov
    }

    pub fn conditional_mean(&self, i: usize, x_prev: &DVector<f64>) -> DVector<f64> {
        let c = &self.comps[i];
        &c.f * x_prev + &c.b_mu
    }

    fn conditional_mean_into(&self, i: usize, x_prev: &DVector<f64>, out: &mut DVector<f64>) {
        let c = &self.comps[i];
        out.copy_from(&c.b_mu);
        out.gemv(1.0, &c.f, x_prev, 1.0);
    }

    /// `log pi_i + log c_i(x_prev)` for every component.
    pub fn log_evidence_terms(&self, x_prev: &DVector<f64>, scratch: &mut KernelScratch) {
        scratch.log_terms.clear();
        for c in &self.comps {
            let lc = c.evidence.logpdf_scratch(x_prev, &mut scratch.vec);
            scratch.log_terms.push(c.log_weight + lc);
        }
    }

    /// `log sum_i pi_i c_i(x_prev)`
    pub fn log_evidence(&self, x_prev: &DVector<f64>, scratch: &mut KernelScratch) -> f64 {
        self.log_evidence_terms(x_prev, scratch);
        logsumexp(&scratch.log_terms)
    }

    /// Draws from the full transition mixture. The mixture is built in
    /// full first (all component weights and means), then sampled.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        x_prev: &DVector<f64>,
        rng: &mut R,
        scratch: &mut KernelScratch,
    ) -> DVector<f64> {
        self.log_evidence_terms(x_prev, scratch);
        for (i, mean) in scratch.means.iter_mut().enumerate() {
            self.conditional_mean_into(i, x_prev, mean);
        }
        let lse = logsumexp(&scratch.log_terms);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.comps.len() - 1;
        for (i, lt) in scratch.log_terms.iter().enumerate() {
            acc += (lt - lse).exp();
            if u < acc {
                pick = i;
                break;
            }
        }
        for v in scratch.vec.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let mut out = scratch.means[pick].clone();
        self.comps[pick].cond_chol.mul_add(scratch.vec.as_slice(), out.as_mut_slice());
        out
    }

    /// `log p(x | x_prev)` of the normalised transition mixture.
    pub fn logpdf(&self, x_prev: &DVector<f64>, x: &DVector<f64>, scratch: &mut KernelScratch) -> f64 {
        self.log_evidence_terms(x_prev, scratch);
        let denom = logsumexp(&scratch.log_terms);
        let mut numer = Vec::with_capacity(self.comps.len());
        let mut mean = DVector::zeros(self.dim());
        for (i, c) in self.comps.iter().enumerate() {
            self.conditional_mean_into(i, x_prev, &mut mean);
            let mut diff = x - &mean;
            let lp = c.cond_log_norm - 0.5 * c.cond_chol.mahalanobis_sq(diff.as_mut_slice());
            numer.push(scratch.log_terms[i] + lp);
        }
        logsumexp(&numer) - denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodymodel::{transition_conditional, transition_logpdf};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prior() -> GaussianMixture {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 4;
        let comps = (0..3)
            .map(|k| {
                let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
                Gaussian::new(DVector::from_fn(d, |i, _| (k * 3 + i) as f64 * 0.4), cov).unwrap()
            })
            .collect();
        GaussianMixture::new(vec![0.2, 0.5, 0.3], comps).unwrap()
    }

    #[test]
    fn f_plus_b_is_identity() {
        let tp = TransitionParams::new(vec![0.5, 1.0, 2.0, 0.1]).unwrap();
        let k = TransitionKernel::new(&prior(), &tp).unwrap();
        for i in 0..k.len() {
            let s = k.f(i) + k.b(i);
            assert!((s - DMatrix::identity(4, 4)).amax() < 1e-12);
        }
    }

    #[test]
    fn agrees_with_reference_densities() {
        let p = prior();
        let tp = TransitionParams::new(vec![0.5, 1.0, 2.0, 0.1]).unwrap();
        let k = TransitionKernel::new(&p, &tp).unwrap();
        let mut scratch = KernelScratch::new(4, 3);
        let x_prev = DVector::from_vec(vec![0.3, -0.2, 1.0, 2.0]);
        for i in 0..3 {
            let g = transition_conditional(&p.components()[i], &tp, &x_prev).unwrap();
            assert!((g.mean() - k.conditional_mean(i, &x_prev)).amax() < 1e-12);
            assert!((g.cov() - k.conditional_cov(i)).amax() < 1e-12);
        }
        for x in [x_prev.clone(), DVector::from_vec(vec![1.0, 0.0, 0.5, 1.5])] {
            let a = k.logpdf(&x_prev, &x, &mut scratch);
            let b = transition_logpdf(&p, &tp, &x_prev, &x).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn samples_follow_transition_mean() {
        let p = prior();
        let tp = TransitionParams::new(vec![0.5, 1.0, 2.0, 0.1]).unwrap();
        let k = TransitionKernel::new(&p, &tp).unwrap();
        let mut scratch = KernelScratch::new(4, 3);
        let x_prev = DVector::from_vec(vec![0.3, -0.2, 1.0, 2.0]);
        k.log_evidence_terms(&x_prev, &mut scratch);
        let lse = logsumexp(&scratch.log_terms);
        let mut expected = DVector::zeros(4);
        for i in 0..3 {
            expected += k.conditional_mean(i, &x_prev) * (scratch.log_terms[i] - lse).exp();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40_000;
        let mut mean = DVector::zeros(4);
        for _ in 0..n {
            mean += k.sample(&x_prev, &mut rng, &mut scratch);
        }
        mean /= n as f64;
        assert!((mean - expected).amax() < 0.03);
    }
}
