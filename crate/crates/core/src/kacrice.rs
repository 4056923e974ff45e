//! The two-point correlation engine: Monte Carlo evaluation of the
//! Gaussian |determinant|-product expectation q(a) (plain and
//! value-restricted), the kernel K_2(phi), the Taylor term integrals
//! A_{i_1..i_k} and the long-range variance integral.
//!
//! Monte Carlo uses ChaCha8 substreams, one per batch, so that results
//! are deterministic for a fixed config and so that one shared batch of
//! normals can be pushed through many covariance factorizations (common
//! random numbers). Reductions run over batches in index order.

use crate::covariance::{
    self, delta_from_a, gradient_cov_from, lambda, perturbation_from, ConditionalCovariance,
    PerturbationVector,
};
use crate::error::{Error, Result};
use crate::gaussmoments;
use crate::quad::{neumaier_sum, GL16_NODES, GL16_WEIGHTS};
use nalgebra::{Matrix4, Matrix6, Vector4, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Default cutoff constant for the non-degenerate range (C/l, pi - C/l):
/// the smallest integer for which the gradient covariance stays positive
/// definite over the range for all tested l >= 10.
pub const DEFAULT_C: f64 = 6.0;

/// Monte Carlo configuration. Estimates below 10^4 samples are noise;
/// every estimate carries a standard error.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 200_000,
            seed: 0,
            antithetic: false,
        }
    }
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        McConfig {
            samples,
            seed,
            antithetic: false,
        }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
}

/// Quadrature configuration for the phi-integrals. The perturbing
/// elements oscillate with period 2 pi / (l + 1/2); each 16-node Gauss
/// panel must carry at least 12 nodes per period.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    /// Nodes per oscillation period (>= 12).
    pub nodes_per_period: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            nodes_per_period: 16.0,
        }
    }
}

impl QuadConfig {
    fn panels(&self, l: u32, lo: f64, hi: f64) -> usize {
        let period = 2.0 * PI / (l as f64 + 0.5);
        let panels = (hi - lo) / period * self.nodes_per_period / 16.0;
        (panels.ceil() as usize).max(4)
    }
}

const N_BATCHES: usize = 64;

/// Symmetric square root via the spectral decomposition. Basis-free, so
/// it varies continuously with the matrix, which common-random-number
/// differencing relies on.
fn spectral_sqrt(cov: &ConditionalCovariance) -> Result<Matrix6<f64>> {
    if !cov.psd {
        return Err(Error::NotPositiveSemidefinite {
            min_eig: cov.min_eigenvalue,
        });
    }
    let eig = cov.assembled.symmetric_eigen();
    let mut m = Matrix6::zeros();
    for k in 0..6 {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        let v = eig.eigenvectors.column(k);
        for i in 0..6 {
            for j in 0..6 {
                m[(i, j)] += lam * v[i] * v[j];
            }
        }
    }
    Ok(m)
}

/// |z1 z3 - z2^2| |w1 w3 - w2^2| at v = (z1,z2,z3,w1,w2,w3).
#[inline]
fn det_product(v: &Vector6<f64>) -> f64 {
    ((v[0] * v[2] - v[1] * v[1]) * (v[3] * v[5] - v[4] * v[4])).abs()
}

fn batch_sizes(samples: usize) -> Vec<usize> {
    let base = samples / N_BATCHES;
    let extra = samples % N_BATCHES;
    (0..N_BATCHES)
        .map(|k| base + usize::from(k < extra))
        .filter(|&n| n > 0)
        .collect()
}

/// Per-batch means of q under each factor in `factors`, with one shared
/// normal sample batch per stream index (common random numbers).
/// Returned as `means[factor][batch]`.
fn mc_q_batch_means(factors: &[Matrix6<f64>], cfg: &McConfig) -> Vec<Vec<f64>> {
    let sizes = batch_sizes(cfg.samples);
    let per_batch: Vec<Vec<f64>> = sizes
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut sums = vec![0.0f64; factors.len()];
            let draws = if cfg.antithetic { n.div_ceil(2) } else { n };
            for _ in 0..draws {
                let xi = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                for (fi, fac) in factors.iter().enumerate() {
                    let v = fac * xi;
                    let mut val = det_product(&v);
                    if cfg.antithetic {
                        val = 0.5 * (val + det_product(&(-v)));
                    }
                    sums[fi] += val;
                }
            }
            sums.iter().map(|s| s / draws as f64).collect()
        })
        .collect();
    // transpose to factor-major, batch order fixed
    (0..factors.len())
        .map(|fi| per_batch.iter().map(|b| b[fi]).collect())
        .collect()
}

fn estimate_from_batches(batch_means: &[f64]) -> Estimate {
    let nb = batch_means.len() as f64;
    let mean = neumaier_sum(batch_means.iter().copied()) / nb;
    let var = batch_means
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .sum::<f64>()
        / (nb - 1.0);
    Estimate {
        value: mean,
        standard_error: (var / nb).sqrt(),
    }
}

/// Monte Carlo estimate of
/// q(a) = E[|z1 z3 - z2^2| |w1 w3 - w2^2|] under N(0, Delta(a)).
pub fn q_of_a(a: &PerturbationVector, cfg: &McConfig) -> Result<Estimate> {
    let factor = spectral_sqrt(&delta_from_a(a))?;
    let means = mc_q_batch_means(&[factor], cfg);
    Ok(estimate_from_batches(&means[0]))
}

/// Value-restricted q(a; t1, t2): the 4-dimensional integral
/// (2 pi)^{-3} det(Delta)^{-1/2} int |z1 s t1 - z1^2 - z2^2|
/// |w1 s t2 - w1^2 - w2^2| exp(-v' Delta^{-1} v / 2) dz dw with
/// s = sqrt(8) and v = (z1, z2, s t1 - z1, w1, w2, s t2 - w1), computed
/// by completing the square and sampling the resulting 4-dim Gaussian.
pub fn q_of_a_restricted(
    a: &PerturbationVector,
    t1: f64,
    t2: f64,
    cfg: &McConfig,
) -> Result<Estimate> {
    let cov = delta_from_a(a);
    if !cov.psd {
        return Err(Error::NotPositiveSemidefinite {
            min_eig: cov.min_eigenvalue,
        });
    }
    let eig = cov.assembled.symmetric_eigen();
    let min_lam = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min_lam <= 1e-12 * cov.assembled.trace() {
        return Err(Error::DegenerateGeometry(
            "q_of_a_restricted: Delta(a) numerically singular".into(),
        ));
    }
    let mut inv = Matrix6::zeros();
    let mut det = 1.0;
    for k in 0..6 {
        det *= eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        let w = 1.0 / eig.eigenvalues[k];
        for i in 0..6 {
            for j in 0..6 {
                inv[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    let s8 = 8f64.sqrt();
    // v = M u + c with u = (z1, z2, w1, w2)
    let mut m = nalgebra::SMatrix::<f64, 6, 4>::zeros();
    m[(0, 0)] = 1.0;
    m[(1, 1)] = 1.0;
    m[(2, 0)] = -1.0;
    m[(3, 2)] = 1.0;
    m[(4, 3)] = 1.0;
    m[(5, 2)] = -1.0;
    let c = Vector6::new(0.0, 0.0, s8 * t1, 0.0, 0.0, s8 * t2);
    let a4 = m.transpose() * inv * m; // S^{-1}
    let b = m.transpose() * inv * c;
    let s = a4
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("restricted covariance singular".into()))?;
    let mu = -(s * b);
    let r = (c.transpose() * inv * c)[(0, 0)] + (b.transpose() * mu)[(0, 0)];
    // spectral sqrt of S
    let seig = s.symmetric_eigen();
    let mut ls = Matrix4::zeros();
    for k in 0..4 {
        let lam = seig.eigenvalues[k].max(0.0).sqrt();
        let v = seig.eigenvectors.column(k);
        for i in 0..4 {
            for j in 0..4 {
                ls[(i, j)] += lam * v[i] * v[j];
            }
        }
    }
    let prefactor = (s.determinant() / det).sqrt() / (2.0 * PI) * (-r / 2.0).exp();

    let sizes = batch_sizes(cfg.samples);
    let per_batch: Vec<f64> = sizes
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let g = |u: Vector4<f64>| {
                ((u[0] * s8 * t1 - u[0] * u[0] - u[1] * u[1])
                    * (u[2] * s8 * t2 - u[2] * u[2] - u[3] * u[3]))
                    .abs()
            };
            let mut sum = 0.0;
            let draws = if cfg.antithetic { n.div_ceil(2) } else { n };
            for _ in 0..draws {
                let xi = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                let mut val = g(mu + ls * xi);
                if cfg.antithetic {
                    val = 0.5 * (val + g(mu - ls * xi));
                }
                sum += val;
            }
            sum / draws as f64
        })
        .collect();
    let est = estimate_from_batches(&per_batch);
    Ok(Estimate {
        value: prefactor * est.value,
        standard_error: prefactor * est.standard_error,
    })
}

/// One point of the two-point correlation kernel.
#[derive(Debug, Clone, Copy)]
pub struct KernelPoint {
    pub phi: f64,
    pub k2: f64,
    pub standard_error: f64,
    pub degenerate: bool,
}

/// K_2(phi) = (lambda^4/8^2) q(a(phi)) /
/// (pi^2 sqrt((lambda^2 - 4 alpha_2^2)(lambda^2 - 4 alpha_1^2))).
///
/// Returns a degenerate-flagged point when the gradient covariance is
/// not positive definite; errors when the conditional covariance fails
/// the PSD check.
pub fn k2(l: u32, phi: f64, cfg: &McConfig) -> Result<KernelPoint> {
    let ing = covariance::abg(l, phi)?;
    let grad = gradient_cov_from(&ing);
    if !grad.is_positive_definite() {
        return Ok(KernelPoint {
            phi,
            k2: f64::NAN,
            standard_error: f64::NAN,
            degenerate: true,
        });
    }
    let a = perturbation_from(&ing)?;
    let q = q_of_a(&a, cfg)?;
    let lam = lambda(l);
    let pref = lam.powi(4) / 64.0 / (PI * PI * (grad.gaps.0 * grad.gaps.1).sqrt());
    Ok(KernelPoint {
        phi,
        k2: pref * q.value,
        standard_error: pref * q.standard_error,
        degenerate: false,
    })
}

/// Integration weight sin(phi) / sqrt((1 - 4a2^2/l^2)(1 - 4a1^2/l^2))
/// and the perturbation vector at one node.
fn node_weight_and_a(l: u32, phi: f64) -> Result<(f64, PerturbationVector)> {
    let ing = covariance::abg(l, phi)?;
    let grad = gradient_cov_from(&ing);
    if !grad.is_positive_definite() {
        return Err(Error::DegenerateGeometry(format!(
            "integration node phi = {phi} degenerate at l = {l}"
        )));
    }
    let lam = lambda(l);
    let w = phi.sin() / ((grad.gaps.0 / (lam * lam)) * (grad.gaps.1 / (lam * lam))).sqrt();
    Ok((w, perturbation_from(&ing)?))
}

fn gl_nodes(l: u32, c: f64, quad: &QuadConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if c <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "cutoff constant C must be positive".into(),
        ));
    }
    let lf = l as f64;
    let (lo, hi) = (c / lf, PI - c / lf);
    if lo >= hi {
        return Err(Error::Domain(format!("empty integration range at l = {l}, C = {c}")));
    }
    let panels = quad.panels(l, lo, hi);
    let h = (hi - lo) / panels as f64;
    let mut xs = Vec::with_capacity(panels * 16);
    let mut ws = Vec::with_capacity(panels * 16);
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for (x, w) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
            xs.push(mid + 0.5 * h * x);
            ws.push(0.5 * h * w);
        }
    }
    Ok((xs, ws))
}

/// Taylor term integral
/// A_{i_1..i_k} = int_{C/l}^{pi-C/l} a_{i_1}(phi) ... a_{i_k}(phi)
/// sin phi / sqrt((1-4a2^2/l^2)(1-4a1^2/l^2)) dphi,
/// with `index` a multiset over {1..8} of size 0..=4 (empty = A_0).
pub fn a_terms(l: u32, c: f64, index: &[u8], quad: &QuadConfig) -> Result<f64> {
    if l < 2 {
        return Err(Error::Domain(format!("a_terms: l = {l} < 2")));
    }
    if index.len() > 4 || index.iter().any(|&i| !(1..=8).contains(&i)) {
        return Err(Error::Domain(format!("a_terms: bad index {index:?}")));
    }
    let (xs, ws) = gl_nodes(l, c, quad)?;
    let terms: Result<Vec<f64>> = xs
        .par_iter()
        .zip(ws.par_iter())
        .map(|(&phi, &w)| {
            let (weight, a) = node_weight_and_a(l, phi)?;
            let prod: f64 = index.iter().map(|&i| a.a[i as usize - 1]).product();
            Ok(w * weight * prod)
        })
        .collect();
    Ok(neumaier_sum(terms?))
}

/// How the squared expectation is removed from the variance integral.
#[derive(Debug, Clone, Copy)]
pub enum ExpectationMode {
    /// Pair (lambda^2/8) A_0 q(0) against the squared expectation through
    /// its high-degree expansion, leaving
    /// (1/8)[2 l^3 + (18/pi^2) l^2 log l] q(0).
    Pairing,
    /// Subtract an externally supplied expected count squared.
    Empirical { expected_count: f64 },
}

/// Long-range variance integral
/// (lambda^2/8) int w(phi) q(a(phi)) dphi - E[N]^2
/// over (C/l, pi - C/l), with the expectation handled per `mode`.
///
/// In pairing mode the integrand is evaluated as q(a(phi)) - q(0) under
/// common random numbers, which cancels most Monte Carlo noise, and the
/// paired remainder uses the closed-form q(0) = 16/3.
pub fn variance_integral(
    l: u32,
    c: f64,
    cfg: &McConfig,
    quad: &QuadConfig,
    mode: ExpectationMode,
) -> Result<Estimate> {
    let (xs, ws) = gl_nodes(l, c, quad)?;
    let mut factors = Vec::with_capacity(xs.len() + 1);
    let mut weights = Vec::with_capacity(xs.len());
    for &phi in &xs {
        let (w, a) = node_weight_and_a(l, phi)?;
        weights.push(w);
        factors.push(spectral_sqrt(&delta_from_a(&a))?);
    }
    factors.push(spectral_sqrt(&covariance::u_matrix())?); // q(0) reference
    let means = mc_q_batch_means(&factors, cfg);
    let lam = lambda(l);
    let lf = l as f64;
    let q0_closed = gaussmoments::closed_moments().q0;

    let nb = means[0].len();
    let mut per_batch = Vec::with_capacity(nb);
    for b in 0..nb {
        let q0_hat = means[xs.len()][b];
        let integral = neumaier_sum(
            (0..xs.len()).map(|j| ws[j] * weights[j] * (means[j][b] - q0_hat)),
        );
        let value = match mode {
            ExpectationMode::Pairing => {
                lam * lam / 8.0 * integral
                    + (2.0 * lf.powi(3) + 18.0 / (PI * PI) * lf * lf * lf.ln()) * q0_closed / 8.0
            }
            ExpectationMode::Empirical { expected_count } => {
                let a0 = neumaier_sum((0..xs.len()).map(|j| ws[j] * weights[j]));
                lam * lam / 8.0 * (integral + a0 * q0_hat) - expected_count * expected_count
            }
        };
        per_batch.push(value);
    }
    Ok(estimate_from_batches(&per_batch))
}

/// Finite-difference Monte Carlo estimates of the five derivative
/// combinations of q at a = 0 (central stencils, common random numbers):
/// (dq/da3, d2q/da7^2, d2q/da3^2, d3q/da3 da7^2, d4q/da7^4).
pub fn q_derivatives_fd(cfg: &McConfig, h: f64) -> Result<[Estimate; 5]> {
    let e = |i: usize, s: f64| {
        let mut a = PerturbationVector::zero();
        a.a[i] = s;
        a
    };
    let e2 = |i: usize, si: f64, j: usize, sj: f64| {
        let mut a = PerturbationVector::zero();
        a.a[i] = si;
        a.a[j] = sj;
        a
    };
    // stencil points, indexed
    let points: Vec<PerturbationVector> = vec![
        PerturbationVector::zero(),  // 0
        e(2, h),                     // 1: a3 = +h
        e(2, -h),                    // 2
        e(6, h),                     // 3: a7 = +h
        e(6, -h),                    // 4
        e(6, 2.0 * h),               // 5
        e(6, -2.0 * h),              // 6
        e2(2, h, 6, h),              // 7
        e2(2, h, 6, -h),             // 8
        e2(2, -h, 6, h),             // 9
        e2(2, -h, 6, -h),            // 10
    ];
    let factors: Result<Vec<_>> = points.iter().map(|a| spectral_sqrt(&delta_from_a(a))).collect();
    let means = mc_q_batch_means(&factors?, cfg);
    let nb = means[0].len();
    let combos: [Box<dyn Fn(&dyn Fn(usize) -> f64) -> f64>; 5] = [
        Box::new(move |q| (q(1) - q(2)) / (2.0 * h)),
        Box::new(move |q| (q(3) - 2.0 * q(0) + q(4)) / (h * h)),
        Box::new(move |q| (q(1) - 2.0 * q(0) + q(2)) / (h * h)),
        Box::new(move |q| {
            ((q(7) - 2.0 * q(1) + q(8)) - (q(9) - 2.0 * q(2) + q(10))) / (2.0 * h * h * h)
        }),
        Box::new(move |q| {
            (q(5) - 4.0 * q(3) + 6.0 * q(0) - 4.0 * q(4) + q(6)) / (h * h * h * h)
        }),
    ];
    let mut out = Vec::with_capacity(5);
    for combo in &combos {
        let per_batch: Vec<f64> = (0..nb)
            .map(|b| combo(&|pt: usize| means[pt][b]))
            .collect();
        out.push(estimate_from_batches(&per_batch));
    }
    Ok(out.try_into().unwrap())
}

/// First-order finite-difference estimates of dq/da_i at a = 0 for all
/// eight directions, and the mixed d2q/da3 da7.
pub fn q_first_derivs_fd(cfg: &McConfig, h: f64) -> Result<([Estimate; 8], Estimate)> {
    let mut points = Vec::with_capacity(20);
    for i in 0..8 {
        for s in [h, -h] {
            let mut a = PerturbationVector::zero();
            a.a[i] = s;
            points.push(a);
        }
    }
    for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
        let mut a = PerturbationVector::zero();
        a.a[2] = si;
        a.a[6] = sj;
        points.push(a);
    }
    let factors: Result<Vec<_>> = points.iter().map(|a| spectral_sqrt(&delta_from_a(a))).collect();
    let means = mc_q_batch_means(&factors?, cfg);
    let nb = means[0].len();
    let mut firsts = Vec::with_capacity(8);
    for i in 0..8 {
        let per_batch: Vec<f64> = (0..nb)
            .map(|b| (means[2 * i][b] - means[2 * i + 1][b]) / (2.0 * h))
            .collect();
        firsts.push(estimate_from_batches(&per_batch));
    }
    let per_batch: Vec<f64> = (0..nb)
        .map(|b| {
            (means[16][b] - means[17][b] - means[18][b] + means[19][b]) / (4.0 * h * h)
        })
        .collect();
    let mixed = estimate_from_batches(&per_batch);
    Ok((firsts.try_into().unwrap(), mixed))
}

/// Which Taylor terms the reconstruction assembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermSet {
    /// Only the terms that survive at the l^2 log l scale: A_0 (paired),
    /// A_3, A_33, A_77, A_377, A_7777, all with closed-form derivatives.
    Leading,
    /// Leading plus every other first-order term and A_37, with
    /// finite-difference derivatives (step 1e-2).
    Extended,
}

/// Variance estimate assembled from numerically integrated Taylor terms
/// and the derivatives of q at zero:
/// (1/8)[2 l^3 + (18/pi^2) l^2 log l] q(0)
/// + (lambda^2/8) [sum_i A_i q_i + (1/2) sum A_{ij} q_{ij} + ...].
pub fn taylor_reconstruction(
    l: u32,
    c: f64,
    cfg: &McConfig,
    quad: &QuadConfig,
    terms: TermSet,
) -> Result<Estimate> {
    let lam = lambda(l);
    let lf = l as f64;
    let q0 = gaussmoments::closed_moments().q0;
    let [d3, d77, d33, d377, d7777] = gaussmoments::q_derivatives_at_zero();

    let mut value =
        (2.0 * lf.powi(3) + 18.0 / (PI * PI) * lf * lf * lf.ln()) * q0 / 8.0;
    let mut var_se = 0.0f64;
    let scale = lam * lam / 8.0;

    value += scale * a_terms(l, c, &[3], quad)? * d3;
    value += scale * 0.5 * a_terms(l, c, &[3, 3], quad)? * d33;
    value += scale * 0.5 * a_terms(l, c, &[7, 7], quad)? * d77;
    value += scale * 0.5 * a_terms(l, c, &[3, 7, 7], quad)? * d377;
    value += scale / 24.0 * a_terms(l, c, &[7, 7, 7, 7], quad)? * d7777;

    if terms == TermSet::Extended {
        let (firsts, mixed) = q_first_derivs_fd(cfg, 0.01)?;
        for i in 1..=8u8 {
            if i == 3 {
                continue;
            }
            let ai = a_terms(l, c, &[i], quad)?;
            let est = firsts[i as usize - 1];
            value += scale * ai * est.value;
            var_se += (scale * ai * est.standard_error).powi(2);
        }
        let a37 = a_terms(l, c, &[3, 7], quad)?;
        value += scale * a37 * mixed.value;
        var_se += (scale * a37 * mixed.standard_error).powi(2);
    }
    Ok(Estimate {
        value,
        standard_error: var_se.sqrt(),
    })
}

/// Single-block moment E[|z1 z3 - z2^2|] under N(0, U_1), estimated by
/// Monte Carlo; the independence factorization check at a = 0.
pub fn single_block_moment(cfg: &McConfig) -> Estimate {
    let u1 = nalgebra::Matrix3::<f64>::new(3.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 3.0);
    let eig = u1.symmetric_eigen();
    let mut fac = nalgebra::Matrix3::<f64>::zeros();
    for k in 0..3 {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        let v = eig.eigenvectors.column(k);
        for i in 0..3 {
            for j in 0..3 {
                fac[(i, j)] += lam * v[i] * v[j];
            }
        }
    }
    let sizes = batch_sizes(cfg.samples);
    let per_batch: Vec<f64> = sizes
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                let xi =
                    nalgebra::Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                let z = fac * xi;
                sum += (z[0] * z[2] - z[1] * z[1]).abs();
            }
            sum / n as f64
        })
        .collect();
    estimate_from_batches(&per_batch)
}

/// Integral of q_of_a_restricted over [-8, 8]^2 by tensor Gauss panels;
/// used by the marginalization consistency check (the exact relation is
/// a factor 1/8 against the plain q).
pub fn restricted_marginal_integral(
    a: &PerturbationVector,
    cfg: &McConfig,
    panels: usize,
) -> Result<Estimate> {
    let mut value = 0.0;
    let mut var = 0.0;
    let h = 16.0 / panels as f64;
    for p1 in 0..panels {
        for (x1, w1) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
            let t1 = -8.0 + (p1 as f64 + 0.5) * h + 0.5 * h * x1;
            for p2 in 0..panels {
                for (x2, w2) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
                    let t2 = -8.0 + (p2 as f64 + 0.5) * h + 0.5 * h * x2;
                    let est = q_of_a_restricted(a, t1, t2, cfg)?;
                    let w = w1 * w2 * h * h / 4.0;
                    value += w * est.value;
                    var += (w * est.standard_error).powi(2);
                }
            }
        }
    }
    Ok(Estimate {
        value,
        standard_error: var.sqrt(),
    })
}

/// Convenience: exact perturbation vector at (l, phi) (re-export of the
/// covariance-layer call used throughout the tests).
pub fn perturbation(l: u32, phi: f64) -> Result<PerturbationVector> {
    covariance::perturbation(l, phi)
}

/// E[N^c] leading asymptotics 2/sqrt(3) l^2, used as the default
/// expected count in empirical mode.
pub fn expected_critical_count(l: u32) -> f64 {
    2.0 / 3f64.sqrt() * (l as f64) * (l as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(samples: usize, seed: u64) -> McConfig {
        McConfig::new(samples, seed)
    }

    #[test]
    fn q_at_zero_matches_i0_squared() {
        let est = q_of_a(&PerturbationVector::zero(), &cfg(1_000_000, 7)).unwrap();
        let want = 16.0 / 3.0;
        assert!(
            (est.value - want).abs() <= 3.0 * est.standard_error,
            "q(0) = {} +- {}, want {want}",
            est.value,
            est.standard_error
        );
        assert!(est.standard_error < 0.05);
    }

    #[test]
    fn q_zero_independence_factorization() {
        let block = single_block_moment(&cfg(400_000, 3));
        let want = 4.0 / 3f64.sqrt();
        assert!((block.value - want).abs() <= 3.0 * block.standard_error);
        let q = q_of_a(&PerturbationVector::zero(), &cfg(400_000, 3)).unwrap();
        let prod = block.value * block.value;
        assert!((q.value - prod).abs() <= 4.0 * (q.standard_error + 2.0 * block.standard_error));
    }

    #[test]
    fn q_determinism() {
        let a = perturbation(50, 1.0).unwrap();
        let e1 = q_of_a(&a, &cfg(50_000, 42)).unwrap();
        let e2 = q_of_a(&a, &cfg(50_000, 42)).unwrap();
        assert_eq!(e1.value.to_bits(), e2.value.to_bits());
        assert_eq!(e1.standard_error.to_bits(), e2.standard_error.to_bits());
    }

    #[test]
    fn q_near_zero_perturbation_continuity() {
        let a = perturbation(400, 1.2).unwrap();
        let est = q_of_a(&a, &cfg(400_000, 11)).unwrap();
        let q0 = 16.0 / 3.0;
        assert!(
            (est.value - q0).abs() / q0 < 0.02,
            "q(a) = {} vs q(0) = {q0}",
            est.value
        );
    }

    #[test]
    fn q_rejects_non_psd() {
        let mut a = PerturbationVector::zero();
        a.a[0] = -5.0;
        assert!(matches!(
            q_of_a(&a, &cfg(10_000, 0)),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn q_lipschitz_on_small_ball() {
        // fit L on training pairs, verify on fresh pairs with MC slack
        let c = cfg(400_000, 5);
        let pairs = |seed: u64, n: usize| -> Vec<(PerturbationVector, PerturbationVector)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let mut a = PerturbationVector::zero();
                    let mut b = PerturbationVector::zero();
                    for i in 0..8 {
                        a.a[i] = 0.07 * (rng.random::<f64>() - 0.5);
                        b.a[i] = a.a[i] + 0.05 * (rng.random::<f64>() - 0.5);
                    }
                    (a, b)
                })
                .collect()
        };
        let slope = |a: &PerturbationVector, b: &PerturbationVector| {
            let qa = q_of_a(a, &c).unwrap();
            let qb = q_of_a(b, &c).unwrap();
            let dist = a
                .a
                .iter()
                .zip(b.a.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            ((qa.value - qb.value).abs(), dist, qa.standard_error + qb.standard_error)
        };
        let mut lip: f64 = 0.0;
        for (a, b) in pairs(1, 8) {
            let (d, dist, _) = slope(&a, &b);
            lip = lip.max(d / dist);
        }
        for (a, b) in pairs(99, 4) {
            let (d, dist, se) = slope(&a, &b);
            assert!(
                d <= 2.0 * lip * dist + 3.0 * se,
                "|dq| = {d} vs L*dist = {}",
                lip * dist
            );
        }
    }

    #[test]
    fn restricted_positive_at_origin() {
        let est =
            q_of_a_restricted(&PerturbationVector::zero(), 0.0, 0.0, &cfg(50_000, 1)).unwrap();
        assert!(est.value.is_finite() && est.value > 0.0);
    }

    #[test]
    fn restricted_tail_smaller_than_center() {
        let c = cfg(100_000, 2);
        let center = q_of_a_restricted(&PerturbationVector::zero(), 0.0, 0.0, &c).unwrap();
        let tail = q_of_a_restricted(&PerturbationVector::zero(), 5.0, -5.0, &c).unwrap();
        assert!(tail.value < center.value);
    }

    #[test]
    fn restricted_marginalizes_to_eighth_of_plain() {
        let a = perturbation(50, 1.0).unwrap();
        let c = cfg(30_000, 4);
        let marginal = restricted_marginal_integral(&a, &c, 3).unwrap();
        let plain = q_of_a(&a, &cfg(400_000, 4)).unwrap();
        let ratio = marginal.value / plain.value;
        assert!(
            (ratio - 0.125).abs() / 0.125 < 0.05,
            "marginal/plain = {ratio}, want 1/8"
        );
    }

    #[test]
    fn marginalization_factor_stable_across_a() {
        let c = cfg(20_000, 9);
        let mut ratios = Vec::new();
        for (l, phi) in [(50u32, 1.0), (50, 1.8), (80, 0.9), (120, 1.4), (200, 2.0)] {
            let a = perturbation(l, phi).unwrap();
            let marginal = restricted_marginal_integral(&a, &c, 3).unwrap();
            let plain = q_of_a(&a, &cfg(300_000, 9)).unwrap();
            ratios.push(marginal.value / plain.value);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        for r in &ratios {
            assert!((r - mean).abs() / mean < 0.03, "ratios: {ratios:?}");
        }
    }

    #[test]
    fn kernel_nonnegative_and_degenerate_flag() {
        let c = cfg(50_000, 6);
        let kp = k2(50, 1.0, &c).unwrap();
        assert!(!kp.degenerate);
        assert!(kp.k2 >= -3.0 * kp.standard_error);
        assert!(kp.k2 >= 0.0); // the estimator averages nonnegative draws
        let degen = k2(50, 1e-8, &c).unwrap();
        assert!(degen.degenerate);
    }

    #[test]
    fn kernel_antipodal_scan() {
        let c = cfg(100_000, 8);
        let k_a = k2(50, 1.0, &c).unwrap();
        let k_b = k2(50, PI - 1.0, &c).unwrap();
        // antipodal counterpart has the same order of magnitude; record the
        // measured ratio rather than asserting symmetry
        let ratio = k_a.k2 / k_b.k2;
        assert!(ratio > 0.2 && ratio < 5.0, "ratio = {ratio}");
    }

    #[test]
    fn a0_term_matches_prediction() {
        let quad = QuadConfig::default();
        let a0 = a_terms(128, 6.0, &[], &quad).unwrap();
        let pred = gaussmoments::lemma_term_predictions(128, 6.0)["A0"];
        // remainder is O(l^-2)
        assert!(
            (a0 - pred).abs() < 20.0 / (128.0f64 * 128.0),
            "A0 = {a0}, prediction = {pred}"
        );
    }

    #[test]
    fn a3_term_residual_bounded() {
        let quad = QuadConfig::default();
        let mut residuals = Vec::new();
        for l in [64u32, 128, 256] {
            let lam = lambda(l);
            let a3 = a_terms(l, 6.0, &[3], &quad).unwrap();
            let pred = gaussmoments::lemma_term_predictions(l, 6.0)["A3"];
            residuals.push((lam * lam * a3 - pred) / (l as f64 * l as f64));
        }
        for r in &residuals {
            assert!(r.abs() < 60.0, "residuals: {residuals:?}");
        }
    }

    #[test]
    fn a1_term_small() {
        let quad = QuadConfig::default();
        let l = 128u32;
        let a1 = a_terms(l, 6.0, &[1], &quad).unwrap();
        let lam = lambda(l);
        assert!(
            (lam * lam * a1 / (l as f64 * l as f64)).abs() < 60.0,
            "lambda^2 A_1 / l^2 = {}",
            lam * lam * a1 / (l as f64 * l as f64)
        );
    }

    #[test]
    fn a_terms_quadrature_resolution() {
        let coarse = QuadConfig { nodes_per_period: 16.0 };
        let fine = QuadConfig { nodes_per_period: 32.0 };
        for idx in [vec![], vec![3u8], vec![7, 7]] {
            let v1 = a_terms(96, 6.0, &idx, &coarse).unwrap();
            let v2 = a_terms(96, 6.0, &idx, &fine).unwrap();
            assert!(
                (v1 - v2).abs() <= 1e-3 * v2.abs().max(1e-12),
                "{idx:?}: {v1} vs {v2}"
            );
        }
    }

    #[test]
    fn a_terms_degenerate_c() {
        assert!(a_terms(64, 0.0, &[], &QuadConfig::default()).is_err());
    }

    #[test]
    fn a_terms_bad_index() {
        assert!(a_terms(64, 6.0, &[9], &QuadConfig::default()).is_err());
        assert!(a_terms(64, 6.0, &[1, 1, 1, 1, 1], &QuadConfig::default()).is_err());
    }

    #[test]
    fn variance_integral_smoke_and_trend() {
        let c = cfg(60_000, 12);
        let quad = QuadConfig::default();
        let v16 = variance_integral(16, 6.0, &c, &quad, ExpectationMode::Pairing).unwrap();
        let v64 = variance_integral(64, 6.0, &c, &quad, ExpectationMode::Pairing).unwrap();
        assert!(v16.value.is_finite() && v64.value.is_finite());
        // growth consistent with l^2 log l within a factor 2
        let model = |l: f64| l * l * l.ln();
        let expected_ratio = model(64.0) / model(16.0);
        let got_ratio = v64.value / v16.value;
        assert!(
            got_ratio > expected_ratio / 2.0 && got_ratio < expected_ratio * 2.0,
            "ratio {got_ratio}, l^2 log l predicts {expected_ratio}"
        );
    }

    #[test]
    fn taylor_reconstruction_small_degree_smoke() {
        let est = taylor_reconstruction(
            8,
            6.0,
            &cfg(50_000, 1),
            &QuadConfig::default(),
            TermSet::Leading,
        )
        .unwrap();
        assert!(est.value.is_finite());
    }

    #[test]
    fn taylor_vs_integral_at_64() {
        let c = cfg(400_000, 21);
        let quad = QuadConfig::default();
        let direct = variance_integral(64, 6.0, &c, &quad, ExpectationMode::Pairing).unwrap();
        let taylor = taylor_reconstruction(64, 6.0, &c, &quad, TermSet::Extended).unwrap();
        let rel = (direct.value - taylor.value).abs() / direct.value.abs();
        assert!(
            rel < 0.10,
            "variance integral {} vs taylor {} (rel {rel})",
            direct.value,
            taylor.value
        );
    }

    #[test]
    fn taylor_leading_vs_extended_bounded() {
        let c = cfg(200_000, 31);
        let quad = QuadConfig::default();
        let l = 64u32;
        let lead = taylor_reconstruction(l, 6.0, &c, &quad, TermSet::Leading).unwrap();
        let ext = taylor_reconstruction(l, 6.0, &c, &quad, TermSet::Extended).unwrap();
        let diff = (lead.value - ext.value).abs();
        assert!(
            diff < 60.0 * (l as f64 * l as f64) / 100.0,
            "difference {diff} not O(l^2)-sized"
        );
    }
}
