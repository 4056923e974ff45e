//! Random spherical harmonics: sampling, pointwise value/gradient/Hessian
//! jets, critical point location and classification, and epsilon-nets.
//!
//! A degree-l field is f = sum_m a_m B_m with 2l+1 iid standard Gaussian
//! coefficients in the real basis B normalized so that
//! E[f(x) f(y)] = P_l(cos d(x, y)) (addition theorem) and Var f = 1.
//!
//! Evaluation works through the Cartesian factorization
//! B_m^{c,s} = u_m(x, y) W_m(z) (resp. v_m) where u_m + i v_m = (x+iy)^m
//! and W_m is the normalized m-th derivative polynomial of P_l. All
//! pieces extend smoothly off the sphere, so ambient derivatives exist
//! everywhere and covariant jets follow by tangential projection - there
//! is no coordinate singularity anywhere on the sphere. The polar
//! (d/dtheta, (1/sin theta) d/dphi) frame itself is still singular at the
//! poles; the public jet uses it away from the pole caps and switches to
//! a rotated orthonormal frame inside them.

use crate::error::{Error, Result};
use crate::gaussmoments::Interval;
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Angular radius of the caps where the polar frame is refused.
pub const POLE_GUARD: f64 = 1e-3;

/// Hessian-determinant floor (times lambda^2) below which a critical
/// point counts as degenerate and the sample is rejected.
pub const DEGENERATE_DET_TOL: f64 = 1e-12;

/// One sampled random spherical harmonic.
#[derive(Debug, Clone)]
pub struct HarmonicField {
    pub degree: u32,
    /// Real-basis coefficients, layout [a_0, a_1^c, a_1^s, ..., a_l^c, a_l^s].
    pub coeffs: Vec<f64>,
    pub seed: u64,
}

/// A point on the unit sphere in colatitude/longitude coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    /// Colatitude in [0, pi].
    pub theta: f64,
    /// Longitude in [0, 2 pi).
    pub phi_lon: f64,
}

impl SpherePoint {
    pub fn new(theta: f64, phi_lon: f64) -> Self {
        SpherePoint { theta, phi_lon }
    }

    pub fn to_unit(self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi_lon.sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }

    pub fn from_unit(v: &Vector3<f64>) -> Self {
        let theta = v.z.clamp(-1.0, 1.0).acos();
        let mut phi = v.y.atan2(v.x);
        if phi < 0.0 {
            phi += 2.0 * std::f64::consts::PI;
        }
        SpherePoint {
            theta,
            phi_lon: phi,
        }
    }

    /// Geodesic distance via the chord (accurate at small separations).
    pub fn geodesic_distance(self, other: SpherePoint) -> f64 {
        geodesic(&self.to_unit(), &other.to_unit())
    }
}

fn geodesic(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    2.0 * ((a - b).norm() / 2.0).clamp(-1.0, 1.0).asin()
}

/// Value, covariant gradient and covariant Hessian at a point, expressed
/// in an orthonormal tangent frame. For `eval_jet` the frame is
/// (d/dtheta, (1/sin theta) d/dphi).
#[derive(Debug, Clone, Copy)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 2],
    /// Symmetric 2x2 covariant Hessian [[h11, h12], [h12, h22]].
    pub hess: [[f64; 2]; 2],
}

impl Jet2 {
    pub fn grad_norm(&self) -> f64 {
        (self.grad[0] * self.grad[0] + self.grad[1] * self.grad[1]).sqrt()
    }

    pub fn hess_det(&self) -> f64 {
        self.hess[0][0] * self.hess[1][1] - self.hess[0][1] * self.hess[1][0]
    }

    pub fn hess_trace(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1]
    }
}

/// Classification of a nondegenerate critical point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Maximum,
    Minimum,
    Saddle,
}

/// A located critical point.
#[derive(Debug, Clone, Copy)]
pub struct CriticalPoint {
    pub position: SpherePoint,
    pub value: f64,
    pub kind: PointKind,
}

/// The classified critical set of one field sample.
#[derive(Debug, Clone)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    /// (N^c, N^e, N^s).
    pub counts: (usize, usize, usize),
    /// Max gradient norm over accepted points.
    pub quality: f64,
    /// Newton seeds that failed to converge (informational).
    pub newton_failures: usize,
    /// True if any accepted point had |det Hess| < tol * lambda^2; such
    /// samples should be redrawn.
    pub degenerate: bool,
}

impl CriticalSet {
    pub fn maxima(&self) -> usize {
        self.points.iter().filter(|p| p.kind == PointKind::Maximum).count()
    }

    pub fn minima(&self) -> usize {
        self.points.iter().filter(|p| p.kind == PointKind::Minimum).count()
    }
}

/// Draw a degree-l field with iid standard Gaussian coefficients.
pub fn sample(l: u32, seed: u64) -> HarmonicField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..2 * l + 1)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    HarmonicField {
        degree: l,
        coeffs,
        seed,
    }
}

// Normalized colatitude polynomials: W_m(z) = sqrt(2 (l-m)!/(l+m)!)
// d^m P_l / dz^m for m >= 1, W_0 = P_l. Computed by the degree
// recurrence at fixed m,
//   W_{n,m} = alpha z W_{n-1,m} - beta W_{n-2,m},
//   alpha = (2n-1)/sqrt(n^2-m^2), beta = sqrt(((n-1)^2-m^2)/(n^2-m^2)),
// together with first and second z-derivatives. Returns [W, W', W''] for
// m = 0..=l.
fn colat_polys(l: u32, z: f64) -> Vec<[f64; 3]> {
    let l = l as usize;
    let mut out = vec![[0.0; 3]; l + 1];
    // m = 0: plain Legendre with derivatives of the recurrence
    {
        let (mut p0, mut d0, mut s0) = (1.0, 0.0, 0.0); // P_{n-1}, P'_{n-1}, P''_{n-1}
        let (mut p1, mut d1, mut s1) = (z, 1.0, 0.0);
        if l == 0 {
            out[0] = [1.0, 0.0, 0.0];
        } else {
            for n in 2..=l {
                let nf = n as f64;
                let a = (2.0 * nf - 1.0) / nf;
                let b = (nf - 1.0) / nf;
                let p2 = a * z * p1 - b * p0;
                let d2 = a * (z * d1 + p1) - b * d0;
                let s2 = a * (z * s1 + 2.0 * d1) - b * s0;
                p0 = p1;
                d0 = d1;
                s0 = s1;
                p1 = p2;
                d1 = d2;
                s1 = s2;
            }
            out[0] = [p1, d1, s1];
        }
    }
    // m >= 1: seeds W_{m,m} = sqrt(2 (2m-1)!!/(2m)!!) (constant in z)
    let mut seed = 1.0f64; // (2m-1)!!/(2m)!! running product
    for m in 1..=l {
        let mf = m as f64;
        seed *= (2.0 * mf - 1.0) / (2.0 * mf);
        let wmm = (2.0 * seed).sqrt();
        if m == l {
            out[m] = [wmm, 0.0, 0.0];
            break;
        }
        // W_{m+1,m} = sqrt(2m+1) z W_{m,m}
        let c = (2.0 * mf + 1.0).sqrt();
        let (mut p0, mut d0, mut s0) = (wmm, 0.0, 0.0);
        let (mut p1, mut d1, mut s1) = (c * z * wmm, c * wmm, 0.0);
        if m + 1 == l {
            out[m] = [p1, d1, s1];
            continue;
        }
        for n in m + 2..=l {
            let nf = n as f64;
            let denom = nf * nf - mf * mf;
            let a = (2.0 * nf - 1.0) / denom.sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / denom).sqrt();
            let p2 = a * z * p1 - b * p0;
            let d2 = a * (z * d1 + p1) - b * d0;
            let s2 = a * (z * s1 + 2.0 * d1) - b * s0;
            p0 = p1;
            d0 = d1;
            s0 = s1;
            p1 = p2;
            d1 = d2;
            s1 = s2;
        }
        out[m] = [p1, d1, s1];
    }
    out
}

/// Ambient value, gradient and Hessian of the smooth extension
/// F(x, y, z) = sum_m [a_m^c u_m + a_m^s v_m](x, y) W_m(z).
fn ambient_jet(field: &HarmonicField, p: &Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let l = field.degree as usize;
    let w = colat_polys(field.degree, p.z);
    // u_m + i v_m = (x + i y)^m
    let mut u = vec![0.0; l + 1];
    let mut v = vec![0.0; l + 1];
    u[0] = 1.0;
    for m in 1..=l {
        u[m] = u[m - 1] * p.x - v[m - 1] * p.y;
        v[m] = u[m - 1] * p.y + v[m - 1] * p.x;
    }
    let coeff = |m: usize, s: usize| -> f64 {
        if m == 0 {
            field.coeffs[0]
        } else {
            field.coeffs[2 * m - 1 + s]
        }
    };
    let mut val = 0.0;
    let mut g = Vector3::zeros();
    let mut h = Matrix3::zeros();
    for m in 0..=l {
        let (ac, as_) = (coeff(m, 0), if m == 0 { 0.0 } else { coeff(m, 1) });
        let t = ac * u[m] + as_ * v[m]; // angular part
        // d/dx (u_m, v_m) = m (u_{m-1}, v_{m-1}); d/dy = m (-v_{m-1}, u_{m-1})
        let (tx, ty) = if m == 0 {
            (0.0, 0.0)
        } else {
            let mf = m as f64;
            (
                mf * (ac * u[m - 1] + as_ * v[m - 1]),
                mf * (-ac * v[m - 1] + as_ * u[m - 1]),
            )
        };
        let (txx, txy) = if m < 2 {
            (0.0, 0.0)
        } else {
            let c = (m * (m - 1)) as f64;
            (
                c * (ac * u[m - 2] + as_ * v[m - 2]),
                c * (-ac * v[m - 2] + as_ * u[m - 2]),
            )
        };
        let [wm, dwm, ddwm] = w[m];
        val += t * wm;
        g.x += tx * wm;
        g.y += ty * wm;
        g.z += t * dwm;
        h[(0, 0)] += txx * wm;
        h[(0, 1)] += txy * wm;
        h[(1, 1)] -= txx * wm; // u, v are harmonic in (x, y): u_yy = -u_xx
        h[(0, 2)] += tx * dwm;
        h[(1, 2)] += ty * dwm;
        h[(2, 2)] += t * ddwm;
    }
    h[(1, 0)] = h[(0, 1)];
    h[(2, 0)] = h[(0, 2)];
    h[(2, 1)] = h[(1, 2)];
    (val, g, h)
}

/// Covariant jet in the orthonormal tangent frame (e1, e2) at unit p:
/// grad_i = e_i . grad F, hess_ij = e_i' (Hess F) e_j - (p . grad F) d_ij.
fn jet_in_frame(
    field: &HarmonicField,
    p: &Vector3<f64>,
    e1: &Vector3<f64>,
    e2: &Vector3<f64>,
) -> Jet2 {
    let (val, g, h) = ambient_jet(field, p);
    let radial = p.dot(&g);
    let g1 = e1.dot(&g);
    let g2 = e2.dot(&g);
    let h11 = (h * e1).dot(e1) - radial;
    let h12 = (h * e2).dot(e1);
    let h22 = (h * e2).dot(e2) - radial;
    Jet2 {
        value: val,
        grad: [g1, g2],
        hess: [[h11, h12], [h12, h22]],
    }
}

/// Any orthonormal tangent frame at p, stable for all p.
fn stable_frame(p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if p.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let e1 = (helper - p * p.dot(&helper)).normalize();
    let e2 = p.cross(&e1);
    (e1, e2)
}

/// Polar frame (d/dtheta, (1/sin theta) d/dphi) at p; undefined at the
/// poles.
fn polar_frame(p: &SpherePoint) -> (Vector3<f64>, Vector3<f64>) {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi_lon.sin_cos();
    (
        Vector3::new(ct * cp, ct * sp, -st),
        Vector3::new(-sp, cp, 0.0),
    )
}

/// Jet in the polar frame. Errors inside the pole caps (sin theta below
/// `POLE_GUARD`); use `eval_jet_rotated_chart` there.
pub fn eval_jet(field: &HarmonicField, p: &SpherePoint) -> Result<Jet2> {
    let st = p.theta.sin();
    if st < POLE_GUARD {
        return Err(Error::PoleProximity {
            sin_theta: st,
            guard: POLE_GUARD,
        });
    }
    let unit = p.to_unit();
    let (e1, e2) = polar_frame(p);
    Ok(jet_in_frame(field, &unit, &e1, &e2))
}

/// Jet in a rotated orthonormal frame that is well defined everywhere,
/// covering the pole caps. Classification, gradient norm, Hessian
/// determinant and trace are frame-invariant.
pub fn eval_jet_rotated_chart(field: &HarmonicField, p: &SpherePoint) -> Jet2 {
    let unit = p.to_unit();
    let (e1, e2) = stable_frame(&unit);
    jet_in_frame(field, &unit, &e1, &e2)
}

/// Search configuration for `find_critical`.
#[derive(Debug, Clone, Copy)]
pub struct FindConfig {
    pub grid_per_wavelength: u32,
    pub newton_tol: f64,
    pub max_steps: u32,
}

impl Default for FindConfig {
    fn default() -> Self {
        FindConfig {
            grid_per_wavelength: 4,
            newton_tol: 1e-10,
            max_steps: 50,
        }
    }
}

/// Locate, deduplicate, classify and count the critical points of one
/// sample. Newton iterations run in local tangent coordinates from a
/// latitude-longitude seed grid with arc spacing (2 pi / l)/gpw; the
/// Morse relation N^e = N^c/2 + 1 and the Euler characteristic
/// #max + #min - #saddle = 2 are enforced and any violation is an error.
pub fn find_critical(
    field: &HarmonicField,
    grid_per_wavelength: u32,
    newton_tol: f64,
) -> Result<CriticalSet> {
    let cfg = FindConfig {
        grid_per_wavelength,
        newton_tol,
        ..FindConfig::default()
    };
    find_critical_cfg(field, &cfg, None)
}

/// As `find_critical`, with the seed grid rotated by `rotation` (the
/// rotation-invariance harness).
///
/// If the first pass breaks the Morse relation (a missed or spurious
/// point), one deterministic retry runs at doubled seed density before
/// the integrity error is raised.
pub fn find_critical_cfg(
    field: &HarmonicField,
    cfg: &FindConfig,
    rotation: Option<&nalgebra::Rotation3<f64>>,
) -> Result<CriticalSet> {
    let mut last = locate_pass(field, cfg, rotation, 1);
    for density in [2u32, 4] {
        match last {
            Err(Error::Integrity(_)) => last = locate_pass(field, cfg, rotation, density),
            other => return other,
        }
    }
    last
}

fn locate_pass(
    field: &HarmonicField,
    cfg: &FindConfig,
    rotation: Option<&nalgebra::Rotation3<f64>>,
    density: u32,
) -> Result<CriticalSet> {
    if cfg.grid_per_wavelength < 3 {
        return Err(Error::Domain(
            "grid_per_wavelength must be at least 3".into(),
        ));
    }
    let l = field.degree;
    let lf = l as f64;
    let lambda = lf * (lf + 1.0);
    let h = (2.0 * std::f64::consts::PI / lf) / (cfg.grid_per_wavelength * density) as f64;
    let dedup_radius = 0.2 / lf;
    let grad_tol = cfg.newton_tol * lambda;

    // seed grid: equal-arc latitude bands, plus the poles themselves
    let mut seeds: Vec<Vector3<f64>> = Vec::new();
    seeds.push(Vector3::z());
    seeds.push(-Vector3::z());
    let n_theta = (std::f64::consts::PI / h).ceil() as usize;
    for i in 0..n_theta {
        let theta = (i as f64 + 0.5) * std::f64::consts::PI / n_theta as f64;
        let circumference = 2.0 * std::f64::consts::PI * theta.sin();
        let n_phi = ((circumference / h).ceil() as usize).max(4);
        for j in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64;
            seeds.push(SpherePoint::new(theta, phi).to_unit());
        }
    }
    if let Some(r) = rotation {
        for s in &mut seeds {
            *s = r * *s;
        }
    }

    // Newton refinement, chunked in parallel with deterministic order
    let chunks: Vec<(Vec<(Vector3<f64>, Jet2)>, usize)> = seeds
        .par_chunks(512)
        .map(|chunk| {
            let mut found = Vec::new();
            let mut failures = 0usize;
            for seed in chunk {
                match refine_with_restarts(field, seed, h, grad_tol, cfg.max_steps) {
                    Some(pj) => found.push(pj),
                    None => failures += 1,
                }
            }
            (found, failures)
        })
        .collect();
    let mut candidates = Vec::new();
    let mut newton_failures = 0;
    for (found, fails) in chunks {
        candidates.extend(found);
        newton_failures += fails;
    }

    // deduplicate by geodesic radius using latitude bands
    candidates.sort_by(|a, b| a.0.z.total_cmp(&b.0.z).then(a.0.x.total_cmp(&b.0.x)));
    let mut accepted: Vec<(Vector3<f64>, Jet2)> = Vec::new();
    let mut start = 0usize;
    for (p, jet) in candidates {
        // only compare against accepted points with z within the chord
        let chord = 2.0 * (dedup_radius / 2.0).sin();
        while start < accepted.len() && accepted[start].0.z < p.z - chord {
            start += 1;
        }
        let dup = accepted[start..]
            .iter()
            .any(|(q, _)| geodesic(q, &p) <= dedup_radius);
        if !dup {
            accepted.push((p, jet));
        }
    }

    let mut quality = 0.0f64;
    let mut degenerate = false;
    let mut points = Vec::with_capacity(accepted.len());
    let (mut n_max, mut n_min, mut n_sad) = (0usize, 0usize, 0usize);
    for (p, jet) in &accepted {
        quality = quality.max(jet.grad_norm());
        let det = jet.hess_det();
        if det.abs() < DEGENERATE_DET_TOL * lambda * lambda {
            degenerate = true;
        }
        let kind = if det > 0.0 {
            if jet.hess_trace() < 0.0 {
                n_max += 1;
                PointKind::Maximum
            } else {
                n_min += 1;
                PointKind::Minimum
            }
        } else {
            n_sad += 1;
            PointKind::Saddle
        };
        points.push(CriticalPoint {
            position: SpherePoint::from_unit(p),
            value: jet.value,
            kind,
        });
    }
    let n_c = points.len();
    let n_e = n_max + n_min;
    if !degenerate {
        if 2 * n_e != n_c + 2 {
            return Err(Error::Integrity(format!(
                "Morse relation violated: N^c = {n_c}, N^e = {n_e} (seed {})",
                field.seed
            )));
        }
        if n_max + n_min != n_sad + 2 {
            return Err(Error::Integrity(format!(
                "Euler characteristic violated: max {n_max} + min {n_min} - saddles {n_sad} != 2"
            )));
        }
    }
    Ok(CriticalSet {
        points,
        counts: (n_c, n_e, n_sad),
        quality,
        newton_failures,
        degenerate,
    })
}

// Damped (Levenberg-Marquardt) Newton on |grad f|^2. Raw Newton on
// grad f = 0 has fractal basins and loses critical points at the default
// seeding density; the damped iteration decreases |grad f| monotonically,
// so each seed converges into the valley it starts in, and near a
// nondegenerate zero the damping vanishes and quadratic convergence takes
// over.
// A seed occasionally lands on a ridge of singular Hessian where the
// damped iteration stalls; restarting from small offsets slides it into
// one of the adjacent valleys.
fn refine_with_restarts(
    field: &HarmonicField,
    seed: &Vector3<f64>,
    max_step: f64,
    grad_tol: f64,
    max_steps: u32,
) -> Option<(Vector3<f64>, Jet2)> {
    if let Some(hit) = newton_refine(field, seed, max_step, grad_tol, max_steps) {
        return Some(hit);
    }
    let (e1, e2) = stable_frame(seed);
    let r = 0.35 * max_step;
    for (s1, s2) in [(r, r), (r, -r), (-r, r), (-r, -r)] {
        let shifted = (seed + s1 * e1 + s2 * e2).normalize();
        if let Some(hit) = newton_refine(field, &shifted, max_step, grad_tol, max_steps) {
            return Some(hit);
        }
    }
    None
}

fn newton_refine(
    field: &HarmonicField,
    seed: &Vector3<f64>,
    max_step: f64,
    grad_tol: f64,
    max_steps: u32,
) -> Option<(Vector3<f64>, Jet2)> {
    let mut p = *seed;
    let (mut e1, mut e2) = stable_frame(&p);
    let mut jet = jet_in_frame(field, &p, &e1, &e2);
    let mut mu = 0.0f64;
    let budget = 4 * max_steps;
    for _ in 0..budget {
        let gn = jet.grad_norm();
        if gn <= grad_tol {
            return Some((p, jet));
        }
        let [[a, b], [_, d]] = jet.hess;
        let hess_scale = a * a + 2.0 * b * b + d * d;
        // (H^2 + mu I) step = -H grad
        let (h11, h12, h22) = (a * a + b * b + mu, b * (a + d), b * b + d * d + mu);
        let det = h11 * h22 - h12 * h12;
        if det <= 0.0 {
            mu = (mu * 4.0).max(1e-6 * hess_scale);
            continue;
        }
        let r1 = -(a * jet.grad[0] + b * jet.grad[1]);
        let r2 = -(b * jet.grad[0] + d * jet.grad[1]);
        let mut d1 = (h22 * r1 - h12 * r2) / det;
        let mut d2 = (-h12 * r1 + h11 * r2) / det;
        let norm = (d1 * d1 + d2 * d2).sqrt();
        if norm > max_step {
            d1 *= max_step / norm;
            d2 *= max_step / norm;
        }
        let p_new = (p + d1 * e1 + d2 * e2).normalize();
        let (f1, f2) = stable_frame(&p_new);
        let jet_new = jet_in_frame(field, &p_new, &f1, &f2);
        if jet_new.grad_norm() < gn {
            p = p_new;
            e1 = f1;
            e2 = f2;
            jet = jet_new;
            mu /= 3.0;
        } else {
            mu = (mu * 4.0).max(1e-6 * hess_scale);
            if mu > 1e9 * hess_scale {
                // stuck at a spurious |grad| minimum (singular Hessian
                // ridge); plain Newton can jump across it
                return newton_plain(field, &p, max_step, grad_tol, max_steps);
            }
        }
    }
    newton_plain(field, &p, max_step, grad_tol, max_steps)
}

// Undamped Newton on grad f = 0, used to finish off seeds the damped
// iteration leaves stranded near a det H = 0 ridge.
fn newton_plain(
    field: &HarmonicField,
    start: &Vector3<f64>,
    max_step: f64,
    grad_tol: f64,
    max_steps: u32,
) -> Option<(Vector3<f64>, Jet2)> {
    let mut p = *start;
    for _ in 0..max_steps {
        let (e1, e2) = stable_frame(&p);
        let jet = jet_in_frame(field, &p, &e1, &e2);
        if jet.grad_norm() <= grad_tol {
            return Some((p, jet));
        }
        let [[a, b], [_, d]] = jet.hess;
        let det = a * d - b * b;
        if det.abs() < 1e-13 * (a * a + 2.0 * b * b + d * d) {
            return None;
        }
        let mut d1 = -(d * jet.grad[0] - b * jet.grad[1]) / det;
        let mut d2 = -(-b * jet.grad[0] + a * jet.grad[1]) / det;
        let norm = (d1 * d1 + d2 * d2).sqrt();
        if norm > 2.0 * max_step {
            d1 *= 2.0 * max_step / norm;
            d2 *= 2.0 * max_step / norm;
        }
        p = (p + d1 * e1 + d2 * e2).normalize();
    }
    None
}

/// Count points of `kind` with value in `interval`; kind 'c' counts all.
pub fn count_in_interval(set: &CriticalSet, interval: Interval, kind: char) -> usize {
    set.points
        .iter()
        .filter(|p| match kind {
            'c' => true,
            'e' => p.kind != PointKind::Saddle,
            's' => p.kind == PointKind::Saddle,
            _ => false,
        })
        .filter(|p| interval.contains(p.value))
        .count()
}

/// Fibonacci lattice on the sphere (near-uniform candidate set).
fn fibonacci_points(n: usize) -> Vec<Vector3<f64>> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

// Latitude-band buckets for nearest-distance queries during greedy
// selection.
struct BandIndex {
    bands: Vec<Vec<Vector3<f64>>>,
    band_width: f64,
}

impl BandIndex {
    fn new(eps: f64) -> Self {
        let n = (std::f64::consts::PI / eps).ceil() as usize + 1;
        BandIndex {
            bands: vec![Vec::new(); n],
            band_width: std::f64::consts::PI / n as f64,
        }
    }

    fn band_of(&self, p: &Vector3<f64>) -> usize {
        let theta = p.z.clamp(-1.0, 1.0).acos();
        ((theta / self.band_width) as usize).min(self.bands.len() - 1)
    }

    fn insert(&mut self, p: Vector3<f64>) {
        let b = self.band_of(&p);
        self.bands[b].push(p);
    }

    /// True if any stored point is within eps of p.
    fn has_within(&self, p: &Vector3<f64>, eps: f64) -> bool {
        let b = self.band_of(p) as isize;
        let reach = (eps / self.band_width).ceil() as isize + 1;
        for bb in (b - reach).max(0)..=(b + reach).min(self.bands.len() as isize - 1) {
            for q in &self.bands[bb as usize] {
                if geodesic(p, q) <= eps {
                    return true;
                }
            }
        }
        false
    }
}

/// Greedy maximal eps-separated set over a dense candidate lattice:
/// pairwise separation is > eps exactly; the eps-balls cover the sphere
/// up to the candidate fineness (eps/50). Cardinality satisfies
/// 4/eps^2 <= N <= 4 pi^2/eps^2.
pub fn epsilon_net(eps: f64) -> Result<Vec<SpherePoint>> {
    if !(eps > 0.0 && eps < std::f64::consts::FRAC_PI_4) {
        return Err(Error::Domain(format!(
            "epsilon_net: eps = {eps} outside (0, pi/4)"
        )));
    }
    let delta = eps / 50.0;
    let n_cand = (8.0 / (delta * delta)).ceil() as usize;
    let mut index = BandIndex::new(eps);
    let mut net = Vec::new();
    for cand in fibonacci_points(n_cand) {
        if !index.has_within(&cand, eps) {
            index.insert(cand);
            net.push(SpherePoint::from_unit(&cand));
        }
    }
    Ok(net)
}

/// Empirical mean and variance of per-sample critical counts.
pub fn count_statistics(counts: &[usize]) -> (f64, f64) {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean) * (c as f64 - mean))
        .sum::<f64>()
        / (n - 1.0);
    (mean, var)
}
