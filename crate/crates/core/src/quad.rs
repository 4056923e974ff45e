//! Shared quadrature kernels: fixed 16-point Gauss-Legendre panels for
//! oscillatory integrands and an adaptive 15-point Gauss-Kronrod rule for
//! smooth decaying ones.

use crate::error::{Error, Result};

/// 16-point Gauss-Legendre nodes on [-1, 1].
pub const GL16_NODES: [f64; 16] = [
    -0.989_400_934_991_649_933,
    -0.944_575_023_073_232_576,
    -0.865_631_202_387_831_744,
    -0.755_404_408_355_003_034,
    -0.617_876_244_402_643_748,
    -0.458_016_777_657_227_386,
    -0.281_603_550_779_258_913,
    -0.095_012_509_837_637_440_2,
    0.095_012_509_837_637_440_2,
    0.281_603_550_779_258_913,
    0.458_016_777_657_227_386,
    0.617_876_244_402_643_748,
    0.755_404_408_355_003_034,
    0.865_631_202_387_831_744,
    0.944_575_023_073_232_576,
    0.989_400_934_991_649_933,
];

/// 16-point Gauss-Legendre weights on [-1, 1].
pub const GL16_WEIGHTS: [f64; 16] = [
    0.027_152_459_411_754_094_9,
    0.062_253_523_938_647_892_9,
    0.095_158_511_682_492_784_8,
    0.124_628_971_255_533_872,
    0.149_595_988_816_576_732,
    0.169_156_519_395_002_538,
    0.182_603_415_044_923_589,
    0.189_450_610_455_068_496,
    0.189_450_610_455_068_496,
    0.182_603_415_044_923_589,
    0.169_156_519_395_002_538,
    0.149_595_988_816_576_732,
    0.124_628_971_255_533_872,
    0.095_158_511_682_492_784_8,
    0.062_253_523_938_647_892_9,
    0.027_152_459_411_754_094_9,
];

/// Integrate `f` over `[a, b]` with `panels` equal 16-point Gauss panels.
///
/// Panel width must resolve the integrand's oscillation; callers pick
/// `panels` from the oscillation frequency.
pub fn composite_gl16<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = NeumaierSum::new();
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (x, w) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
            sum.add(w * half * f(mid + half * x));
        }
    }
    sum.total()
}

// QUADPACK 15-point Kronrod abscissae and weights (7-point Gauss embedded).
const XGK15: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_838_258_73,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.0,
];
const WG7: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_97,
    0.417_959_183_673_469_387_755_102_040_816_33,
];
const WGK15: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];

/// One Gauss-Kronrod 15(7) panel; returns (integral, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK15[7];
    let mut gauss = fc * WG7[3];
    for j in 0..7 {
        let x = half * XGK15[j];
        let fsum = f(center - x) + f(center + x);
        kronrod += WGK15[j] * fsum;
        if j % 2 == 1 {
            gauss += WG7[j / 2] * fsum;
        }
    }
    let integral = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    // QUADPACK-style sharpening of the raw difference.
    let err = if err != 0.0 {
        let scale = (200.0 * err / (kronrod.abs() * half.abs() + 1e-300)).powf(1.5);
        if scale < 1.0 {
            kronrod.abs() * half.abs() * scale
        } else {
            err
        }
    } else {
        0.0
    };
    (integral, err)
}

/// Adaptive bisection over GK15 panels until the summed error estimate is
/// below `tol` (absolute). Errors out instead of returning a bad value.
pub fn adaptive_gk15<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let mut heap: Vec<(f64, f64, f64, f64)> = Vec::new(); // (err, a, b, val)
    let (v, e) = gk15(&f, a, b);
    heap.push((e, a, b, v));
    loop {
        let total_err: f64 = heap.iter().map(|t| t.0).sum();
        if total_err <= tol {
            let mut sum = NeumaierSum::new();
            for t in &heap {
                sum.add(t.3);
            }
            return Ok(sum.total());
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailure {
                achieved: total_err,
                requested: tol,
            });
        }
        // split the worst interval
        let (imax, _) = heap
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
            .unwrap();
        let (_, lo, hi, _) = heap.swap_remove(imax);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        heap.push((e1, lo, mid, v1));
        heap.push((e2, mid, hi, v2));
    }
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated dot-product style sum of `terms`.
pub fn neumaier_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = NeumaierSum::new();
    for t in terms {
        s.add(t);
    }
    s.total()
}
