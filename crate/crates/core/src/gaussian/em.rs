//! Expectation maximisation for Gaussian mixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gaussian, GaussianMixture};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, logsumexp};

/// Components whose effective count falls below this fraction of the data
/// are re-seeded.
const EMPTY_FRACTION: f64 = 1e-6;
const RIDGE_FACTOR: f64 = 1e-8;
const MAX_RIDGE_ATTEMPTS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub k: usize,
    pub init_seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// After each M-step, this fraction of the data variance along each
    /// coordinate is added to the matching covariance diagonal entry.
    pub reg_covar: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            k: 15,
            init_seed: 0,
            max_iters: 200,
            tol: 1e-6,
            reg_covar: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    /// Data log-likelihood evaluated at the start of each iteration; the last
    /// entry belongs to `mixture`.
    pub log_likelihoods: Vec<f64>,
    /// Number of M-steps performed.
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, component)` for every re-seeded component.
    pub reinitialised: Vec<(usize, usize)>,
}

impl EmFit {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihoods.last().expect("at least one E-step")
    }
}

struct Params {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

/// Data stored column-wise (d x n).
struct DataMatrix {
    x: DMatrix<f64>,
}

impl DataMatrix {
    fn n(&self) -> usize {
        self.x.ncols()
    }
    fn d(&self) -> usize {
        self.x.nrows()
    }
}

/// Per-point log-densities `ln pi_k + ln N(x_i | mu_k, Sigma_k)`, laid out
/// n x k row-major.
fn weighted_log_densities(data: &DataMatrix, weights: &[f64], comps: &[Gaussian]) -> Vec<f64> {
    let (n, k) = (data.n(), comps.len());
    let mut out = vec![0.0; n * k];
    for (j, (w, g)) in weights.iter().zip(comps).enumerate() {
        let mut centred = data.x.clone();
        for mut col in centred.column_iter_mut() {
            col -= g.mean();
        }
        g.chol_lower()
            .solve_lower_triangular_mut(&mut centred);
        let lw = w.ln();
        for (i, col) in centred.column_iter().enumerate() {
            out[i * k + j] = lw + g.log_norm() - 0.5 * col.norm_squared();
        }
    }
    out
}

/// Posterior component probabilities for each point (rows sum to one).
pub fn responsibilities(m: &GaussianMixture, data: &[DVector<f64>]) -> Result<Vec<Vec<f64>>> {
    let dm = to_matrix(data, m.dim())?;
    let k = m.len();
    let lw = weighted_log_densities(&dm, m.weights(), m.components());
    Ok(lw
        .chunks(k)
        .map(|row| {
            let lse = logsumexp(row);
            row.iter().map(|v| (v - lse).exp()).collect()
        })
        .collect())
}

fn to_matrix(data: &[DVector<f64>], d: usize) -> Result<DataMatrix> {
    let mut x = DMatrix::zeros(d, data.len());
    for (i, p) in data.iter().enumerate() {
        check_dim(d, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InsufficientData(format!("data point {i} is not finite")));
        }
        x.set_column(i, p);
    }
    Ok(DataMatrix { x })
}

fn weighted_moments(data: &DataMatrix, resp: &[f64], k: usize, comp: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
    let (n, d) = (data.n(), data.d());
    let mut nk = 0.0;
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        let g = resp[i * k + comp];
        nk += g;
        mean.axpy(g, &data.x.column(i), 1.0);
    }
    if nk > 0.0 {
        mean /= nk;
    }
    let mut scaled = data.x.clone();
    for (i, mut col) in scaled.column_iter_mut().enumerate() {
        col -= &mean;
        col *= resp[i * k + comp].sqrt();
    }
    let mut cov = &scaled * scaled.transpose();
    if nk > 0.0 {
        cov /= nk;
    }
    (nk, mean, linalg::symmetrize(&cov))
}

/// Builds a Gaussian, adding an increasing ridge to the diagonal when the
/// covariance is not numerically positive definite.
fn regularised_gaussian(mean: DVector<f64>, cov: DMatrix<f64>, fallback_trace: f64) -> Result<Gaussian> {
    let d = cov.nrows();
    if let Ok(g) = Gaussian::new(mean.clone(), cov.clone()) {
        return Ok(g);
    }
    let trace = if cov.trace() > 0.0 { cov.trace() } else { fallback_trace };
    let mut ridge = RIDGE_FACTOR * trace / d as f64;
    if !(ridge > 0.0) {
        ridge = RIDGE_FACTOR;
    }
    for _ in 0..MAX_RIDGE_ATTEMPTS {
        let c = &cov + DMatrix::identity(d, d) * ridge;
        if let Ok(g) = Gaussian::new(mean.clone(), c) {
            return Ok(g);
        }
        ridge *= 10.0;
    }
    Err(Error::SingularCovariance)
}

/// k-means++ seeding: first centre uniform, the rest with probability
/// proportional to squared distance from the nearest chosen centre.
fn kmeanspp_seeds<R: Rng>(data: &DataMatrix, k: usize, rng: &mut R) -> Vec<usize> {
    let n = data.n();
    let mut seeds = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| (data.x.column(i) - data.x.column(seeds[0])).norm_squared())
        .collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                acc += v;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        seeds.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            let dd = (data.x.column(i) - data.x.column(next)).norm_squared();
            if dd < *v {
                *v = dd;
            }
        }
    }
    seeds
}

/// Fits a `k`-component mixture by EM.
///
/// Iterates until the log-likelihood improves by less than `tol` or
/// `max_iters` M-steps have run. A component that loses (almost) all its
/// responsibility is moved onto the worst-explained data point; if the same
/// component collapses a second time the fit fails with `EmptyCluster`.
pub fn em_fit(data: &[DVector<f64>], cfg: &EmConfig) -> Result<EmFit> {
    let k = cfg.k;
    if k == 0 {
        return Err(Error::InvalidParameter("component count must be at least 1".into()));
    }
    if data.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} points for {} components",
            data.len(),
            k
        )));
    }
    let d = data[0].len();
    if d == 0 {
        return Err(Error::InsufficientData("zero-dimensional data".into()));
    }
    if !(cfg.reg_covar.is_finite() && cfg.reg_covar >= 0.0) {
        return Err(Error::InvalidParameter("reg_covar must be non-negative".into()));
    }
    let dm = to_matrix(data, d)?;
    let n = dm.n();

    let uniform = vec![1.0; n];
    let (_, global_mean, global_cov) = weighted_moments(&dm, &uniform, 1, 0);
    let global_trace = global_cov.trace();
    let global = regularised_gaussian(global_mean, global_cov.clone(), global_trace)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let seeds = kmeanspp_seeds(&dm, k, &mut rng);
    let mut params = Params {
        weights: vec![1.0 / k as f64; k],
        components: seeds
            .iter()
            .map(|&i| Gaussian::new(dm.x.column(i).into_owned(), global.cov().clone()))
            .collect::<Result<_>>()?,
    };

    let mut history = Vec::new();
    let mut reinitialised: Vec<(usize, usize)> = Vec::new();
    let mut reinit_count = vec![0usize; k];
    let mut iterations = 0;
    let mut converged = false;
    let mut reseeded_last = false;

    loop {
        // E-step
        let mut log_resp = weighted_log_densities(&dm, &params.weights, &params.components);
        let mut point_ll = Vec::with_capacity(n);
        for row in log_resp.chunks_mut(k) {
            let lse = logsumexp(row);
            point_ll.push(lse);
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let ll: f64 = point_ll.iter().sum();
        if !ll.is_finite() {
            return Err(Error::SingularCovariance);
        }
        if let Some(&prev) = history.last() {
            if !reseeded_last && ll - prev < cfg.tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iterations >= cfg.max_iters {
            break;
        }
        let resp = log_resp;

        // M-step
        let mut weights = Vec::with_capacity(k);
        let mut comps = Vec::with_capacity(k);
        reseeded_last = false;
        for j in 0..k {
            let (nk, mean, cov) = weighted_moments(&dm, &resp, k, j);
            if nk < EMPTY_FRACTION * n as f64 {
                reinit_count[j] += 1;
                if reinit_count[j] > 1 {
                    return Err(Error::EmptyCluster { component: j });
                }
                let worst = point_ll
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .expect("non-empty data");
                reinitialised.push((iterations, j));
                reseeded_last = true;
                weights.push(1.0 / n as f64);
                comps.push(Gaussian::new(dm.x.column(worst).into_owned(), global.cov().clone())?);
                continue;
            }
            weights.push(nk / n as f64);
            let cov = if cfg.reg_covar > 0.0 {
                cov + DMatrix::from_diagonal(&(global_cov.diagonal() * cfg.reg_covar))
            } else {
                cov
            };
            comps.push(regularised_gaussian(mean, cov, global_trace)?);
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        params = Params {
            weights,
            components: comps,
        };
        iterations += 1;
    }

    Ok(EmFit {
        mixture: GaussianMixture::normalized(params.weights, params.components)?,
        log_likelihoods: history,
        iterations,
        converged,
        reinitialised,
    })
}
