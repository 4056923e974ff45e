//! Closed-form Gaussian moment constants, the derivatives of the
//! conditional expectation q at zero perturbation, the variance law and
//! the value-restricted densities.
//!
//! The central constants are I_r = E[|Y1 Y3 - Y2^2| (Y1 - 3 Y3)^r] for
//! r = 0, 2, 4, where Y is centred Gaussian with covariance
//! U_1 = [[3,0,1],[0,1,0],[1,0,3]]. Each closed form is backed by an
//! independent two-level quadrature oracle built from the conditional
//! decomposition through W3 = Y1 + Y3: conditionally on W3 = t the inner
//! expectation reduces to E[|t^2/4 - Z1^2 - Z2^2| (4 Z1 - t)^r] with
//! Z1, Z2 standard normal, and the (Z1, Z1^2+Z2^2) density is
//! e^{-v/2} / (2 pi sqrt(v - u^2)).

use crate::error::{Error, Result};
use crate::quad::adaptive_gk15;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// An interval of field values; infinite endpoints allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn full() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn is_full(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }
}

/// Which critical points are being counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    Critical,
    Extremum,
    Saddle,
}

/// The moment constants and the derived q(0).
#[derive(Debug, Clone, Copy)]
pub struct MomentSet {
    pub i0: f64,
    pub i2: f64,
    pub i4: f64,
    /// q(0) = I_0^2.
    pub q0: f64,
}

/// Exact values: I_0 = 2^2/sqrt(3), I_2 = 2^5*5/sqrt(3),
/// I_4 = 2^8*5^2*7/(3 sqrt(3)).
pub fn closed_moments() -> MomentSet {
    let s3 = 3f64.sqrt();
    let i0 = 4.0 / s3;
    MomentSet {
        i0,
        i2: 160.0 / s3,
        i4: 44_800.0 / (3.0 * s3),
        q0: i0 * i0,
    }
}

/// Gaussian density of W3 = Y1 + Y3 (variance 8).
fn w3_density(t: f64) -> f64 {
    (-t * t / 16.0).exp() / (4.0 * PI.sqrt())
}

/// Inner conditional expectation E[|t^2/4 - zeta| k_r(zeta, t)] where
/// zeta = Z1^2 + Z2^2; the angular integral over Z1/sqrt(zeta) is done in
/// closed form (polar coordinates absorb the 1/sqrt(v - u^2) endpoint
/// singularity), and the v-integral splits at the kink v = t^2/4.
fn inner_expectation(r: u32, t: f64) -> Result<f64> {
    let c = t * t / 4.0;
    let kernel = move |v: f64| -> f64 {
        let base = (-v / 2.0).exp() * (c - v).abs();
        match r {
            0 => base,
            2 => base * (8.0 * v + t * t),
            4 => base * (96.0 * v * v + 48.0 * v * t * t + t.powi(4)),
            _ => unreachable!(),
        }
    };
    let vmax = c + 90.0;
    let tol = 1e-12 * (1.0 + c * c * c);
    let left = if c > 0.0 {
        adaptive_gk15(kernel, 0.0, c, tol)?
    } else {
        0.0
    };
    let right = adaptive_gk15(kernel, c, vmax, tol)?;
    Ok(0.5 * (left + right))
}

/// Independent quadrature oracle for I_r, r in {0, 2, 4}.
pub fn numeric_moment(r: u32) -> Result<f64> {
    if !matches!(r, 0 | 2 | 4) {
        return Err(Error::Domain(format!("numeric_moment: r = {r} not in {{0,2,4}}")));
    }
    // integrand is even in t; 34 ~ 12 standard deviations of W3
    let f = |t: f64| w3_density(t) * inner_expectation(r, t).unwrap_or(f64::NAN);
    let half = adaptive_gk15(f, 0.0, 34.0, 1e-10)?;
    Ok(2.0 * half)
}

/// The five derivative combinations of q at a = 0 that carry the
/// variance law, evaluated with the closed-form I_r:
/// (dq/da3, d2q/da7^2, d2q/da3^2, d3q/da3 da7^2, d4q/da7^4).
pub fn q_derivatives_at_zero() -> [f64; 5] {
    let m = closed_moments();
    let (i0, i2, i4) = (m.i0, m.i2, m.i4);
    let d3 = (-3.0 * i0 * i0 + i0 * i2 / 8.0) / 8.0;
    let d77 = (3.0 * i0 - i2 / 8.0).powi(2) / 64.0;
    let d33 = (576.0 * i0 * i0 - 48.0 * i0 * i2 + 0.25 * i0 * i4 + 0.25 * i2 * i2) / 2f64.powi(11);
    let d377 = (-82_944.0 * i0 * i0 + 10_368.0 * i0 * i2 - 48.0 * i0 * i4 + 2.0 * i2 * i4
        - 288.0 * i2 * i2)
        / 2f64.powi(19);
    let d7777 = (1728.0 * i0 + i4 - 144.0 * i2).powi(2) / 2f64.powi(24);
    [d3, d77, d33, d377, d7777]
}

/// Closed-form densities of the value-restricted machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    P0,
    P2,
    P4,
    MuC,
    MuE,
    MuS,
}

/// Evaluate one of the densities p_r / mu^a at t.
pub fn density(kind: DensityKind, t: f64) -> f64 {
    let root = (2.0 / PI).sqrt();
    let t2 = t * t;
    let g = (-t2 / 2.0).exp();
    let e = (-t2).exp();
    match kind {
        DensityKind::P0 => root * (2.0 * e + t2 - 1.0) * g,
        DensityKind::P2 => root * (-4.0 + t2 + t2 * t2 + 2.0 * e * (4.0 + 3.0 * t2)) * g,
        DensityKind::P4 => {
            root * ((72.0 + 96.0 * t2 + 38.0 * t2 * t2) * e - 36.0 - 12.0 * t2
                + 11.0 * t2 * t2
                + t2 * t2 * t2)
                * g
        }
        DensityKind::MuC => {
            root / (8.0 * PI)
                * ((-2.0 - 36.0 * t2 + 38.0 * t2 * t2) * e + 1.0 + 17.0 * t2 - 11.0 * t2 * t2
                    + t2 * t2 * t2)
                * g
        }
        DensityKind::MuE => {
            root / (8.0 * PI)
                * ((-1.0 - 18.0 * t2 + 19.0 * t2 * t2) * e + 1.0 + 17.0 * t2 - 11.0 * t2 * t2
                    + t2 * t2 * t2)
                * g
        }
        DensityKind::MuS => {
            root / (8.0 * PI) * (-1.0 - 18.0 * t2 + 19.0 * t2 * t2) * (-1.5 * t2).exp()
        }
    }
}

/// Integrate a density over an interval. The integrand decays like
/// exp(-t^2/2), so integration truncates to [-12, 12].
pub fn density_integral(kind: DensityKind, interval: Interval) -> Result<f64> {
    let lo = interval.lo.max(-12.0);
    let hi = interval.hi.min(12.0);
    if lo >= hi {
        return Ok(0.0);
    }
    adaptive_gk15(move |t| density(kind, t), lo, hi, 1e-12)
}

/// Interval moment I_{I,r} = integral of p_r over I.
pub fn interval_moment(interval: Interval, r: u32) -> Result<f64> {
    let kind = match r {
        0 => DensityKind::P0,
        2 => DensityKind::P2,
        4 => DensityKind::P4,
        _ => return Err(Error::Domain(format!("interval_moment: r = {r}"))),
    };
    density_integral(kind, interval)
}

/// Leading variance coefficients for the number of critical points,
/// extrema or saddles with value in an interval:
/// Var = cubic_coeff * l^3 + log_coeff * l^2 log l + O(l^2).
#[derive(Debug, Clone, Copy)]
pub struct VarianceLaw {
    /// Coefficient of l^3. Known in closed form for critical points
    /// ((1/2^4)[5 I_{I,0} - I_{I,2}]^2); for extrema/saddles it is only
    /// available on the full line, where the Morse relation forces it to
    /// a quarter of the critical one.
    pub cubic_coeff: Option<f64>,
    /// Coefficient of l^2 log l: the squared mu^a mass of the interval.
    pub log_coeff: f64,
    pub interval: Interval,
    pub kind: CriticalKind,
}

/// Variance law over an interval (None = full line) for the given kind.
pub fn variance_law(interval: Option<Interval>, kind: CriticalKind) -> Result<VarianceLaw> {
    let interval = interval.unwrap_or_else(Interval::full);
    let mu_kind = match kind {
        CriticalKind::Critical => DensityKind::MuC,
        CriticalKind::Extremum => DensityKind::MuE,
        CriticalKind::Saddle => DensityKind::MuS,
    };
    let mu_mass = density_integral(mu_kind, interval)?;
    let log_coeff = mu_mass * mu_mass;
    let cubic_coeff = match kind {
        CriticalKind::Critical => {
            let i0 = interval_moment(interval, 0)?;
            let i2 = interval_moment(interval, 2)?;
            Some((5.0 * i0 - i2).powi(2) / 16.0)
        }
        _ if interval.is_full() => {
            // Var(N^e) = Var(N^s) = Var(N^c)/4 on the full line by the
            // Morse relation; the critical cubic coefficient vanishes.
            let i0 = interval_moment(interval, 0)?;
            let i2 = interval_moment(interval, 2)?;
            Some((5.0 * i0 - i2).powi(2) / 64.0)
        }
        _ => None,
    };
    Ok(VarianceLaw {
        cubic_coeff,
        log_coeff,
        interval,
        kind,
    })
}

/// Asymptotic predictions for the Taylor term integrals, keyed by term
/// name. "A0" is the prediction for the plain A_0 integral at cutoff
/// constant `c`; the rest predict lambda^2 times the multiplicity-scaled
/// integrals:
///   A3:    lambda^2 A_3          = -16 l^3 - (2^5*3/pi^2) l^2 log l,
///   A33:   lambda^2 A_33 / 2     = (3*2^7/pi^2) l^2 log l,
///   A77:   lambda^2 A_77 / 2     = 32 l^3 - (2^6/pi^2) l^2 log l,
///   A377:  lambda^2 A_377 * 3/3! = -(2^9/pi^2) l^2 log l,
///   A7777: lambda^2 A_7777 / 4!  = (2^9/pi^2) l^2 log l,
/// and zero at this scale for every other first-order index.
pub fn lemma_term_predictions(l: u32, c: f64) -> BTreeMap<String, f64> {
    let lf = l as f64;
    let l2log = lf * lf * lf.ln();
    let pi2 = PI * PI;
    let mut map = BTreeMap::new();
    map.insert(
        "A0".to_string(),
        (c / lf).cos() + 2.0 / lf + 18.0 / pi2 * lf.ln() / (lf * lf),
    );
    map.insert("A3".to_string(), -16.0 * lf.powi(3) - 96.0 / pi2 * l2log);
    map.insert("A33".to_string(), 384.0 / pi2 * l2log);
    map.insert("A77".to_string(), 32.0 * lf.powi(3) - 64.0 / pi2 * l2log);
    map.insert("A377".to_string(), -512.0 / pi2 * l2log);
    map.insert("A7777".to_string(), 512.0 / pi2 * l2log);
    for i in [1u32, 2, 4, 5, 6, 7, 8] {
        map.insert(format!("A{i}"), 0.0);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    const S3: f64 = 1.732_050_807_568_877_3;

    #[test]
    fn closed_values() {
        let m = closed_moments();
        assert!((m.i0 - 2.309_401_076_758_503).abs() < 1e-12);
        assert!((m.i2 - 92.376_043_070_340_12).abs() < 1e-10);
        assert!((m.i4 - 44_800.0 / (3.0 * S3)).abs() < 1e-8);
        assert!((m.i4 - 8_621.76).abs() < 0.1);
        assert_eq!(m.q0, m.i0 * m.i0);
    }

    #[test]
    fn oracle_matches_closed_forms() {
        let m = closed_moments();
        let n0 = numeric_moment(0).unwrap();
        let n2 = numeric_moment(2).unwrap();
        let n4 = numeric_moment(4).unwrap();
        assert!((n0 - m.i0).abs() / m.i0 < 1e-6, "I0: {n0}");
        assert!((n2 - m.i2).abs() / m.i2 < 1e-5, "I2: {n2}");
        assert!((n4 - m.i4).abs() / m.i4 < 1e-5, "I4: {n4}");
    }

    #[test]
    fn oracle_rejects_odd_r() {
        assert!(numeric_moment(1).is_err());
        assert!(numeric_moment(3).is_err());
    }

    #[test]
    fn q_derivative_values() {
        let [d3, d77, d33, d377, d7777] = q_derivatives_at_zero();
        assert!((d3 - 4.0 / 3.0).abs() < 1e-12);
        assert!((d77 - 1.0 / 3.0).abs() < 1e-12);
        assert!((d33 + 1.0 / 36.0).abs() < 1e-12);
        assert!((d377 + 7.0 / 72.0).abs() < 1e-12);
        assert!((d7777 - 49.0 / 1728.0).abs() < 1e-12);
        // the perfect-square combinations are nonnegative
        assert!(d77 >= 0.0 && d7777 >= 0.0);
    }

    #[test]
    fn cubic_cancellation_exact() {
        let m = closed_moments();
        assert!((m.i2 - 40.0 * m.i0).abs() < 1e-12);
    }

    #[test]
    fn log_coefficient_identity() {
        let m = closed_moments();
        let combo = 3264.0 * m.i0 - 176.0 * m.i2 + m.i4;
        let log = combo * combo / (2f64.powi(18) * PI * PI);
        assert!((log - 1.0 / (27.0 * PI * PI)).abs() < 1e-10);
    }

    #[test]
    fn density_p0_at_zero() {
        assert!((density(DensityKind::P0, 0.0) - (2.0 / PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn density_moment_consistency() {
        let m = closed_moments();
        let p0 = density_integral(DensityKind::P0, Interval::full()).unwrap();
        let p2 = density_integral(DensityKind::P2, Interval::full()).unwrap();
        let p4 = density_integral(DensityKind::P4, Interval::full()).unwrap();
        assert!((p0 - m.i0).abs() < 1e-8);
        assert!((5.0 * p0 - p2).abs() < 1e-8);
        assert!((p4 - 700.0 / (3.0 * S3)).abs() < 1e-8);
    }

    #[test]
    fn mu_c_mass_and_square() {
        let mc = density_integral(DensityKind::MuC, Interval::full()).unwrap();
        // the mass itself is negative; only its square enters the law
        assert!((mc - (-1.0 / (3.0 * S3 * PI))).abs() < 1e-10);
        assert!((mc * mc - 1.0 / (27.0 * PI * PI)).abs() < 1e-10);
    }

    #[test]
    fn morse_split_pointwise() {
        for i in 0..1000 {
            let t = -8.0 + 16.0 * (i as f64 + 0.5) / 1000.0;
            let c = density(DensityKind::MuC, t);
            let e = density(DensityKind::MuE, t);
            let s = density(DensityKind::MuS, t);
            assert!((c - (e + s)).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn variance_law_full_line() {
        let law = variance_law(None, CriticalKind::Critical).unwrap();
        assert!(law.cubic_coeff.unwrap().abs() < 1e-10);
        assert!((law.log_coeff - 1.0 / (27.0 * PI * PI)).abs() < 1e-10);
        assert!((law.log_coeff - 0.003_752_636_431_197_695).abs() < 1e-10);
    }

    #[test]
    fn variance_law_extrema_saddles() {
        for kind in [CriticalKind::Extremum, CriticalKind::Saddle] {
            let law = variance_law(None, kind).unwrap();
            assert!(
                (law.log_coeff - 1.0 / (4.0 * 27.0 * PI * PI)).abs() < 1e-10,
                "{kind:?}: {}",
                law.log_coeff
            );
            assert!(law.cubic_coeff.unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn variance_law_interval_cubic() {
        // the p_r are even in t, so the half-line moments are half the full
        // ones and the cubic cancellation survives on [0, inf)
        let half = variance_law(Some(Interval::new(0.0, f64::INFINITY)), CriticalKind::Critical)
            .unwrap();
        assert!(half.cubic_coeff.unwrap().abs() < 1e-10);
        // a generic interval has a strictly positive cubic coefficient
        let law = variance_law(Some(Interval::new(1.0, f64::INFINITY)), CriticalKind::Critical)
            .unwrap();
        assert!(law.cubic_coeff.unwrap() > 1e-4, "{:?}", law.cubic_coeff);
        // no closed cubic for extrema off the full line
        let e = variance_law(Some(Interval::new(0.0, f64::INFINITY)), CriticalKind::Extremum)
            .unwrap();
        assert!(e.cubic_coeff.is_none());
    }

    #[test]
    fn predictions_at_128() {
        let map = lemma_term_predictions(128, 6.0);
        let lf = 128f64;
        let want_a3 = -16.0 * lf.powi(3) - 96.0 / (PI * PI) * lf * lf * lf.ln();
        assert!((map["A3"] - want_a3).abs() < 1e-6);
        let want_a7777 = 512.0 / (PI * PI) * lf * lf * lf.ln();
        assert!((map["A7777"] - want_a7777).abs() < 1e-6);
        assert_eq!(map["A1"], 0.0);
        assert_eq!(map["A2"], 0.0);
        let want_a0 = (6.0 / lf).cos() + 2.0 / lf + 18.0 / (PI * PI) * lf.ln() / (lf * lf);
        assert!((map["A0"] - want_a0).abs() < 1e-15);
    }

    #[test]
    fn empty_interval() {
        let i = Interval::new(1.0, -1.0);
        assert!(i.is_empty());
        assert_eq!(interval_moment(i, 0).unwrap(), 0.0);
    }
}
