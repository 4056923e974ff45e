//! Covariance objects of the two-point computation along an equatorial
//! geodesic: the nine ingredient functions alpha/beta/gamma, the 4x4
//! gradient covariance A_l(phi), the conditional Hessian covariance
//! Delta = [[Delta_1, Delta_2], [Delta_2, Delta_1]] of the scaled vector
//! sqrt(8)/lambda (Hess f(x), Hess f(y) | grad f(x) = grad f(y) = 0), and
//! the 8-vector of perturbing elements by which Delta deviates from its
//! high-degree limit U.
//!
//! Everything here lives on the equator: the frame is (d/dtheta, d/dphi)
//! at two points geodesic distance phi apart, where that coordinate frame
//! is orthonormal. phi is the geodesic distance, never a longitude.

use crate::error::{Error, Result};
use crate::legendre::{self, hilb_a1, hilb_h, hilb_psi};
use nalgebra::{Matrix3, Matrix4, Matrix6};

/// Relative floor for the positive-semidefiniteness verdict: minimum
/// eigenvalue down to -`PSD_TOL` * trace is accepted as roundoff.
pub const PSD_TOL: f64 = 1e-9;

/// lambda_l = l(l+1), the Laplace eigenvalue.
pub fn lambda(l: u32) -> f64 {
    l as f64 * (l as f64 + 1.0)
}

/// The nine covariance ingredient functions at (l, phi).
///
/// With P = P_l and derivatives taken at cos phi:
///   alpha_1 = P', alpha_2 = -sin^2 P'' + cos P';
///   beta_1 = sin P'', beta_2 = sin cos P'' + sin P',
///   beta_3 = -sin^3 P''' + 3 sin cos P'' + sin P';
///   gamma_1 = (2+cos^2) P'' + cos P',
///   gamma_2 = -sin^2 P''' + cos P'',
///   gamma_3 = -sin^2 cos P''' + (cos^2 - 2 sin^2) P'' + cos P',
///   gamma_4 = sin^4 P'''' - 6 sin^2 cos P''' + (3 cos^2 - 4 sin^2) P'' + cos P'.
#[derive(Debug, Clone, Copy)]
pub struct AlphaBetaGamma {
    pub degree: u32,
    pub phi: f64,
    pub alpha: [f64; 2],
    pub beta: [f64; 3],
    pub gamma: [f64; 4],
}

/// Evaluate the nine ingredient functions from the Legendre jet.
pub fn abg(l: u32, phi: f64) -> Result<AlphaBetaGamma> {
    if l < 1 {
        return Err(Error::Domain(format!("abg: l = {l} < 1")));
    }
    if !(phi > 0.0 && phi < std::f64::consts::PI) {
        return Err(Error::Domain(format!("abg: phi = {phi} outside (0, pi)")));
    }
    let (sin, cos) = phi.sin_cos();
    let jet = legendre::eval_jet(l, cos)?;
    let [_, d1, d2, d3, d4] = jet.values;
    let s2 = sin * sin;
    Ok(AlphaBetaGamma {
        degree: l,
        phi,
        alpha: [d1, -s2 * d2 + cos * d1],
        beta: [
            sin * d2,
            sin * cos * d2 + sin * d1,
            -s2 * sin * d3 + 3.0 * sin * cos * d2 + sin * d1,
        ],
        gamma: [
            (2.0 + cos * cos) * d2 + cos * d1,
            -s2 * d3 + cos * d2,
            -s2 * cos * d3 + (cos * cos - 2.0 * s2) * d2 + cos * d1,
            s2 * s2 * d4 - 6.0 * s2 * cos * d3 + (3.0 * cos * cos - 4.0 * s2) * d2 + cos * d1,
        ],
    })
}

/// Covariance of (grad f(x), grad f(y)) in the equatorial frame:
/// diagonal lambda/2, theta-theta cross block alpha_1, phi-phi cross
/// block alpha_2.
#[derive(Debug, Clone)]
pub struct GradientCovariance {
    pub matrix: Matrix4<f64>,
    /// (lambda^2 - 4 alpha_1^2, lambda^2 - 4 alpha_2^2); positive definite
    /// iff both are > 0.
    pub gaps: (f64, f64),
}

impl GradientCovariance {
    pub fn is_positive_definite(&self) -> bool {
        self.gaps.0 > 0.0 && self.gaps.1 > 0.0
    }

    pub fn det(&self) -> f64 {
        (self.gaps.0 / 4.0) * (self.gaps.1 / 4.0)
    }
}

pub fn gradient_cov(l: u32, phi: f64) -> Result<GradientCovariance> {
    let ing = abg(l, phi)?;
    Ok(gradient_cov_from(&ing))
}

pub fn gradient_cov_from(ing: &AlphaBetaGamma) -> GradientCovariance {
    let lam = lambda(ing.degree);
    let h = lam / 2.0;
    let (a1, a2) = (ing.alpha[0], ing.alpha[1]);
    let matrix = Matrix4::new(
        h, 0.0, a1, 0.0, //
        0.0, h, 0.0, a2, //
        a1, 0.0, h, 0.0, //
        0.0, a2, 0.0, h,
    );
    GradientCovariance {
        matrix,
        gaps: (lam * lam - 4.0 * a1 * a1, lam * lam - 4.0 * a2 * a2),
    }
}

/// The eight perturbing elements of the conditional covariance:
/// Delta_1 = [[3+a1, 0, 1+a4], [0, 1+a2, 0], [1+a4, 0, 3+a3]],
/// Delta_2 = [[a5, 0, a8], [0, a6, 0], [a8, 0, a7]].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationVector {
    pub a: [f64; 8],
}

impl PerturbationVector {
    pub fn zero() -> Self {
        PerturbationVector { a: [0.0; 8] }
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Conditional covariance of the scaled Hessian pair, as the two 3x3
/// blocks and the assembled symmetrized 6x6.
#[derive(Debug, Clone)]
pub struct ConditionalCovariance {
    pub block1: Matrix3<f64>,
    pub block2: Matrix3<f64>,
    pub assembled: Matrix6<f64>,
    /// Minimum eigenvalue of the assembled matrix.
    pub min_eigenvalue: f64,
    /// True when min_eigenvalue >= -PSD_TOL * trace.
    pub psd: bool,
}

fn assemble(block1: Matrix3<f64>, block2: Matrix3<f64>) -> ConditionalCovariance {
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = block1[(i, j)];
            m[(i + 3, j + 3)] = block1[(i, j)];
            m[(i, j + 3)] = block2[(i, j)];
            m[(i + 3, j)] = block2[(i, j)];
        }
    }
    // explicit symmetrization before anything downstream factorizes it
    let m = (m + m.transpose()) * 0.5;
    let min_eigenvalue = m
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let psd = min_eigenvalue >= -PSD_TOL * m.trace();
    ConditionalCovariance {
        block1,
        block2,
        assembled: m,
        min_eigenvalue,
        psd,
    }
}

/// Rebuild Delta(a) from a perturbation vector. At a = 0 this is the
/// block-diagonal limit U with U_1 = [[3,0,1],[0,1,0],[1,0,3]].
pub fn delta_from_a(a: &PerturbationVector) -> ConditionalCovariance {
    let [a1, a2, a3, a4, a5, a6, a7, a8] = a.a;
    let block1 = Matrix3::new(
        3.0 + a1, 0.0, 1.0 + a4, //
        0.0, 1.0 + a2, 0.0, //
        1.0 + a4, 0.0, 3.0 + a3,
    );
    let block2 = Matrix3::new(
        a5, 0.0, a8, //
        0.0, a6, 0.0, //
        a8, 0.0, a7,
    );
    assemble(block1, block2)
}

/// The perturbing elements at (l, phi), read off from the entry formulas
/// of Delta_1 and Delta_2.
pub fn perturbation(l: u32, phi: f64) -> Result<PerturbationVector> {
    let ing = abg(l, phi)?;
    perturbation_from(&ing)
}

pub fn perturbation_from(ing: &AlphaBetaGamma) -> Result<PerturbationVector> {
    let grad = gradient_cov_from(ing);
    if !grad.is_positive_definite() {
        return Err(Error::DegenerateGeometry(format!(
            "gradient covariance not positive definite at l = {}, phi = {} (gaps {:?})",
            ing.degree, ing.phi, grad.gaps
        )));
    }
    let lam = lambda(ing.degree);
    let (g1, g2) = grad.gaps; // lambda^2 - 4 alpha_i^2
    let [a1s, a2s] = ing.alpha;
    let [b1, b2, b3] = ing.beta;
    let [c1, c2, c3, c4] = ing.gamma;
    let a = [
        -16.0 * b2 * b2 / (lam * g2) - 2.0 / lam,
        -16.0 * b1 * b1 / (lam * g1),
        -16.0 * b3 * b3 / (lam * g2) - 2.0 / lam,
        -16.0 * b2 * b3 / (lam * g2) + 2.0 / lam,
        8.0 * (c1 + 4.0 * a2s * b2 * b2 / (4.0 * a2s * a2s - lam * lam)) / (lam * lam),
        8.0 * (c2 + 4.0 * a1s * b1 * b1 / (4.0 * a1s * a1s - lam * lam)) / (lam * lam),
        8.0 * (c4 + 4.0 * a2s * b3 * b3 / (4.0 * a2s * a2s - lam * lam)) / (lam * lam),
        8.0 * (c3 + 4.0 * a2s * b2 * b3 / (4.0 * a2s * a2s - lam * lam)) / (lam * lam),
    ];
    Ok(PerturbationVector { a })
}

/// Conditional covariance at (l, phi); requires the gradient covariance
/// to be positive definite.
pub fn cond_cov(l: u32, phi: f64) -> Result<ConditionalCovariance> {
    Ok(delta_from_a(&perturbation(l, phi)?))
}

/// The high-degree limit U of the conditional covariance.
pub fn u_matrix() -> ConditionalCovariance {
    delta_from_a(&PerturbationVector::zero())
}

/// Leading asymptotic approximations of the eight normalized ingredient
/// combinations entering a_1..a_8, in that order:
///
///   beta_2^2/lambda^3, beta_1^2/lambda^3, beta_3^2/lambda^3,
///   beta_2 beta_3/lambda^3, gamma_1/lambda^2, gamma_2/lambda^2,
///   gamma_4/lambda^2, gamma_3/lambda^2.
///
/// Combinations whose entire displayed expansion is remainder-sized
/// (beta_1^2, beta_2^2, gamma_1) approximate to zero. All remainders are
/// dropped; comparisons against exact values go through fitted bands.
pub fn perturbation_asympt(l: u32, phi: f64) -> Result<[f64; 8]> {
    let lf = l as f64;
    if !(phi >= legendre::ASYMPT_C / lf && phi <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "perturbation_asympt: phi = {phi} outside [C/l, pi/2]"
        )));
    }
    let s = phi.sin();
    let cos = phi.cos();
    let h00 = hilb_h(0, 0);
    let h01 = hilb_h(0, 1);
    let h10 = hilb_h(1, 0);
    let psi0 = |u: i64| hilb_psi(0, lf + u as f64, phi);
    let psi1 = |u: i64| hilb_psi(1, lf + u as f64, phi);
    let (sp0, cp0) = psi0(0).sin_cos();

    // beta_3^2 / lambda^3 (squares are insensitive to the sign of beta_3)
    let b3sq = h00 * h00 * sp0 * sp0 / (lf * s)
        - 6.0 * h00 * h00 * sp0 * psi0(1).cos() / (lf * lf * s * s)
        + 2.0 * h00 * h01 * sp0 * cp0 / (lf * lf * phi * s)
        - 0.25 * h00 * h10 * sp0 * psi1(0).sin() * (cos / (lf * lf * s * s) - 1.0 / (lf * lf * phi * s))
        + h00 * h00 * sp0 * (psi0(1).cos() + 5.0 * psi0(-1).cos()) / (lf * lf * s * s)
        + 6.0 * h00 * h00 * sp0 * cos * cp0 / (lf * lf * s * s);

    // beta_2 beta_3 / lambda^3: product of the two leading terms,
    // beta_2 ~ -h cos(psi) cos(phi), beta_3 ~ +h sin(psi) l (the
    // third-derivative family enters with sin^6 = -(x^2-1)^3)
    let b2b3 = -h00 * h00 * sp0 * cp0 * cos / (lf * lf * s * s);

    // gamma_2 / lambda^2 and gamma_3 / lambda^2 (same sin^6 sign)
    let g2 = h00 * sp0 / (lf.powf(1.5) * s.powf(1.5));
    let g3 = h00 * sp0 * cos / (lf.powf(1.5) * s.powf(1.5));

    // gamma_4 / lambda^2; the cos(phi) sin(psi) term descends from the
    // third derivative and flips with it
    let g4 = h00 * cp0 / (lf.sqrt() * s.sqrt()) * (1.0 - 1.0 / (4.0 * lf))
        - 2.0 * h00 * cp0 / (lf.powf(1.5) * s.sqrt())
        + 4.0 * h00 * psi1(1).cos() / (lf.powf(1.5) * s.powf(1.5))
        + h00 * cp0 / (lf.powf(1.5) * s.sqrt())
        - h01 * sp0 / (lf.powf(1.5) * phi * s.sqrt())
        + h10 * psi1(0).cos() * hilb_a1(phi) / (lf.powf(1.5) * s.sqrt())
        - 1.5 * h00 * (psi0(1).sin() + 3.0 * psi0(-1).sin()) / (lf.powf(1.5) * s.powf(1.5))
        + 6.0 * h00 * cos * sp0 / (lf.powf(1.5) * s.powf(1.5));

    Ok([0.0, 0.0, b3sq, b2b3, 0.0, g2, g4, g3])
}

/// Lemma-style leading form of alpha_2^2/lambda^2, used by band tests and
/// the Taylor-term predictions: h_0(0)^2 cos^2 psi_{0,l} / (l sin phi)
/// plus the displayed second-order oscillatory terms.
pub fn alpha2_sq_asympt(l: u32, phi: f64) -> f64 {
    let lf = l as f64;
    let s = phi.sin();
    let h00 = hilb_h(0, 0);
    let h01 = hilb_h(0, 1);
    let psi = |u: i64| hilb_psi(0, lf + u as f64, phi);
    let (sp, cp) = psi(0).sin_cos();
    h00 * h00 * cp * cp / (lf * s)
        + 2.0 * h00 * h00 * psi(1).sin() * cp / (lf * lf * s * s)
        - h00 * h01 * sp * cp / (lf * lf * phi * s)
        - h00 * h00 * psi(-1).sin() * cp / (lf * lf * s * s)
        + h00 * h00 * phi.cos() * cp * sp / (lf * lf * s * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::eval_p;

    /// Two-point covariance C(theta_x, phi_x, theta_y, phi_y) =
    /// P_l(cos d(x, y)); the exchange-symmetry oracle differentiates this
    /// directly.
    fn c_fn(l: u32, tx: f64, px: f64, ty: f64, py: f64) -> f64 {
        let cosd = tx.cos() * ty.cos() + tx.sin() * ty.sin() * (px - py).cos();
        eval_p(l, cosd.clamp(-1.0, 1.0)).unwrap()
    }

    /// Mixed central difference of the two-point covariance at an
    /// equatorial pair, with per-variable derivative orders (<= 2 each).
    fn fd_mixed(l: u32, phi: f64, orders: [u32; 4], h: f64) -> f64 {
        fn rec(l: u32, base: [f64; 4], orders: [u32; 4], var: usize, h: f64) -> f64 {
            if var == 4 {
                return c_fn(l, base[0], base[1], base[2], base[3]);
            }
            let mut shifted = base;
            match orders[var] {
                0 => rec(l, base, orders, var + 1, h),
                1 => {
                    shifted[var] = base[var] + h;
                    let up = rec(l, shifted, orders, var + 1, h);
                    shifted[var] = base[var] - h;
                    let dn = rec(l, shifted, orders, var + 1, h);
                    (up - dn) / (2.0 * h)
                }
                2 => {
                    shifted[var] = base[var] + h;
                    let up = rec(l, shifted, orders, var + 1, h);
                    let mid = rec(l, base, orders, var + 1, h);
                    shifted[var] = base[var] - h;
                    let dn = rec(l, shifted, orders, var + 1, h);
                    (up - 2.0 * mid + dn) / (h * h)
                }
                _ => unreachable!(),
            }
        }
        let base = [std::f64::consts::FRAC_PI_2, phi, std::f64::consts::FRAC_PI_2, 0.0];
        rec(l, base, orders, 0, h)
    }

    #[test]
    fn alpha1_at_degree_one() {
        let ing = abg(1, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((ing.alpha[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ingredients_match_two_point_derivatives() {
        // orders are (theta_x, phi_x, theta_y, phi_y)
        let cases: [([u32; 4], fn(&AlphaBetaGamma) -> f64); 9] = [
            ([1, 0, 1, 0], |g| g.alpha[0]),
            ([0, 1, 0, 1], |g| g.alpha[1]),
            ([1, 0, 1, 1], |g| g.beta[0]),
            ([0, 1, 2, 0], |g| g.beta[1]),
            ([0, 1, 0, 2], |g| g.beta[2]),
            ([2, 0, 2, 0], |g| g.gamma[0]),
            ([1, 1, 1, 1], |g| g.gamma[1]),
            ([2, 0, 0, 2], |g| g.gamma[2]),
            ([0, 2, 0, 2], |g| g.gamma[3]),
        ];
        for &l in &[5u32, 20, 50] {
            let h = 0.005 / l as f64;
            for &phi in &[0.3, 0.9, 2.1] {
                let ing = abg(l, phi).unwrap();
                for (orders, pick) in cases.iter() {
                    let fd = fd_mixed(l, phi, *orders, h);
                    let want = pick(&ing);
                    let scale = lambda(l).powf(orders.iter().sum::<u32>() as f64 / 2.0);
                    let rel = (fd - want).abs() / want.abs().max(1e-3 * scale);
                    assert!(
                        rel < 1e-4,
                        "l={l} phi={phi} orders={orders:?}: got {fd}, want {want}, rel {rel}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_cov_diag_and_symmetry() {
        let g = gradient_cov(5, std::f64::consts::FRAC_PI_2).unwrap();
        for i in 0..4 {
            assert_eq!(g.matrix[(i, i)], 15.0);
        }
        assert_eq!(g.matrix, g.matrix.transpose());
        // determinant identity
        let want = g.det();
        let got = g.matrix.determinant();
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn gradient_cov_pd_at_working_distance() {
        let g = gradient_cov(40, 2.0 * 6.0 / 40.0).unwrap();
        assert!(g.is_positive_definite());
        let eigs = g.matrix.symmetric_eigenvalues();
        assert!(eigs.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn gradient_cov_degenerate_at_tiny_phi() {
        let g = gradient_cov(40, 1e-6).unwrap();
        assert!(!g.is_positive_definite());
    }

    #[test]
    fn delta_at_zero_is_u_and_det_u1_is_8() {
        let u = u_matrix();
        assert_eq!(u.block1, Matrix3::new(3.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 3.0));
        assert_eq!(u.block2, Matrix3::zeros());
        // direct 3x3 expansion: 3(1*3-0) - 0 + 1(0-1) = 8
        let m = u.block1;
        let det_direct = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
            - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
        assert_eq!(det_direct, 8.0);
        assert!((u.assembled.determinant() - 64.0).abs() < 1e-10);
        assert!(u.psd);
    }

    #[test]
    fn delta_singular_flagged() {
        let mut a = PerturbationVector::zero();
        a.a[0] = -3.0; // zeroes the (1,1) diagonal entry
        let d = delta_from_a(&a);
        assert!(!d.psd || d.min_eigenvalue <= 0.0);
        assert!(d.assembled.determinant().abs() < 1e-9);
    }

    #[test]
    fn perturbation_round_trip() {
        for (l, phi) in [(20u32, 0.9), (60, 1.0), (113, 2.2)] {
            let a = perturbation(l, phi).unwrap();
            let direct = cond_cov(l, phi).unwrap();
            let rebuilt = delta_from_a(&a);
            for i in 0..6 {
                for j in 0..6 {
                    assert!(
                        (direct.assembled[(i, j)] - rebuilt.assembled[(i, j)]).abs() < 1e-12,
                        "entry ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn delta22_two_code_paths() {
        let l = 20;
        let phi = 0.9;
        let d = cond_cov(l, phi).unwrap();
        let ing = abg(l, phi).unwrap();
        let lam = lambda(l);
        let want = 1.0 - 16.0 * ing.beta[0] * ing.beta[0]
            / (lam * (lam * lam - 4.0 * ing.alpha[0] * ing.alpha[0]));
        assert_eq!(d.block1[(1, 1)], want);
    }

    #[test]
    fn delta_near_u_at_high_degree() {
        let d = cond_cov(400, 1.2).unwrap();
        let u = u_matrix();
        let mut max_diff = 0.0f64;
        for i in 0..6 {
            for j in 0..6 {
                max_diff = max_diff.max((d.assembled[(i, j)] - u.assembled[(i, j)]).abs());
            }
        }
        assert!(max_diff <= 0.05, "max entrywise deviation {max_diff}");
        assert!(perturbation(400, 1.2).unwrap().max_abs() <= 0.1);
    }

    #[test]
    fn delta_psd_at_moderate_degrees() {
        for (l, phi) in [(50u32, 0.5), (60, 1.0)] {
            let d = cond_cov(l, phi).unwrap();
            assert!(d.min_eigenvalue >= -1e-9, "l={l} phi={phi}: {}", d.min_eigenvalue);
            assert!(d.psd);
            let a = perturbation(l, phi).unwrap();
            assert!(delta_from_a(&a).psd);
        }
    }

    #[test]
    fn degeneracy_boundary_within_c10() {
        // for each l there is C* <= 10 with PD on (C*/l, pi - C*/l)
        for &l in &[10u32, 50, 100] {
            let c_star = 6.0;
            let lo = c_star / l as f64;
            let hi = std::f64::consts::PI - lo;
            let n = 10_000;
            for i in 0..n {
                let phi = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
                let g = gradient_cov(l, phi).unwrap();
                assert!(
                    g.is_positive_definite(),
                    "l={l} phi={phi}: gaps {:?}",
                    g.gaps
                );
            }
        }
    }

    #[test]
    fn perturbation_sup_decreases_in_degree() {
        let sup = |l: u32| {
            let lo = 6.0 / l as f64;
            let hi = std::f64::consts::FRAC_PI_2;
            // ~24 points per oscillation period
            let n = ((hi - lo) / (2.0 * std::f64::consts::PI / (l as f64 + 0.5)) * 24.0) as usize;
            let mut m = 0.0f64;
            for i in 0..n {
                let phi = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
                m = m.max(perturbation(l, phi).unwrap().max_abs());
            }
            m
        };
        let vals: Vec<f64> = [50u32, 100, 200, 400].iter().map(|&l| sup(l)).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] * 1.0001, "sup sequence not nonincreasing: {vals:?}");
        }
    }

    #[test]
    fn asympt_alpha2_band_and_trend() {
        let exact = |l: u32, phi: f64| {
            let ing = abg(l, phi).unwrap();
            let lam = lambda(l);
            ing.alpha[1] * ing.alpha[1] / (lam * lam)
        };
        let err = |l: u32, phi: f64| (exact(l, phi) - alpha2_sq_asympt(l, phi)).abs();
        // fitted band: remainder model 1/(phi l^2)
        let model = |l: u32, phi: f64| 1.0 / (phi * (l as f64) * (l as f64));
        let mut c: f64 = 0.0;
        for l in [60u32, 90, 130] {
            for i in 0..10 {
                let phi = 0.25 + 1.2 * i as f64 / 10.0;
                c = c.max(err(l, phi) / model(l, phi));
            }
        }
        for (l, phi) in [(150u32, 0.6), (220, 1.0)] {
            assert!(err(l, phi) <= 3.0 * c * model(l, phi), "l={l} phi={phi}");
        }
        // doubling l at fixed phi shrinks the error by >= 1.5
        let ratio = err(100, 0.5) / err(200, 0.5);
        assert!(ratio >= 1.5, "ratio = {ratio}");
    }

    #[test]
    fn asympt_beta1_remainder_bound() {
        // beta_1^2/lambda^3 is remainder-sized: |.| <= c / (l^3 phi^3)
        let val = |l: u32, phi: f64| {
            let ing = abg(l, phi).unwrap();
            let lam = lambda(l);
            ing.beta[0] * ing.beta[0] / (lam * lam * lam)
        };
        let mut c: f64 = 0.0;
        for l in [60u32, 90, 130] {
            for i in 0..10 {
                let phi = 0.25 + 1.2 * i as f64 / 10.0;
                c = c.max(val(l, phi) * (l as f64).powi(3) * phi.powi(3));
            }
        }
        for (l, phi) in [(150u32, 0.6), (250, 0.4)] {
            assert!(val(l, phi) <= 2.0 * c / ((l as f64).powi(3) * phi.powi(3)));
        }
    }

    #[test]
    fn asympt_a3_band() {
        // a_3 ~ -16 beta_3^2/lambda^3 - 2/lambda within a fitted band
        let err = |l: u32, phi: f64| {
            let a = perturbation(l, phi).unwrap().a[2];
            let approx = -16.0 * perturbation_asympt(l, phi).unwrap()[2] - 2.0 / lambda(l);
            (a - approx).abs()
        };
        let model = |l: u32, phi: f64| 1.0 / (phi.powi(3) * (l as f64).powi(2));
        let mut c: f64 = 0.0;
        for l in [60u32, 90, 130] {
            for i in 0..10 {
                let phi = 0.3 + 1.2 * i as f64 / 10.0;
                c = c.max(err(l, phi) / model(l, phi));
            }
        }
        let (l, phi) = (100u32, 0.8);
        assert!(err(l, phi) <= 3.0 * c * model(l, phi));
    }

    #[test]
    fn asympt_domain_error() {
        assert!(perturbation_asympt(100, 0.001).is_err());
        assert!(perturbation_asympt(100, 2.0).is_err());
    }
}
