use spherecrits_core::kacrice::*;
use spherecrits_core::covariance::{perturbation, lambda};
use spherecrits_core::gaussmoments::lemma_term_predictions;
use spherecrits_core::legendre::{asympt_derivatives, eval_jet, eval_p, hilb_p};
use spherecrits_core::field::{sample, find_critical};

fn main() {
    let quad = QuadConfig::default();
    // A0
    let a0 = a_terms(128, 6.0, &[], &quad).unwrap();
    let pred = lemma_term_predictions(128, 6.0)["A0"];
    println!("A0(128) = {a0:.9}, pred = {pred:.9}, diff*l^2 = {:.4}", (a0-pred)*128.0*128.0);
    // variance integral trend
    let c = McConfig::new(60_000, 12);
    for l in [16u32, 64] {
        let v = variance_integral(l, 6.0, &c, &quad, ExpectationMode::Pairing).unwrap();
        println!("variance_integral({l}) = {:.3} +- {:.3}", v.value, v.standard_error);
    }
    let t = taylor_reconstruction(64, 6.0, &McConfig::new(200_000, 21), &quad, TermSet::Leading).unwrap();
    println!("taylor leading(64) = {:.3}", t.value);
    let t2 = taylor_reconstruction(64, 6.0, &McConfig::new(200_000, 21), &quad, TermSet::Extended).unwrap();
    println!("taylor extended(64) = {:.3} +- {:.3}", t2.value, t2.standard_error);
    // asympt 4th derivative trend
    for l in [64u32, 128, 256] {
        let phi = 0.4f64;
        let exact = eval_jet(l, phi.cos()).unwrap().values[4];
        let (_,_,_,d4) = asympt_derivatives(l, phi).unwrap();
        println!("l={l}: P4 exact {exact:.6e} asympt {d4:.6e} rel {:.3e}", ((exact-d4)/exact).abs());
    }
    // hilb doubling
    for m in 1..=3u32 {
        for phi in [0.33, 0.77, 1.21] {
            let e = |l: u32| (hilb_p(l, 0, phi, m).unwrap() - eval_p(l, phi.cos()).unwrap()).abs();
            println!("m={m} phi={phi}: ratios {:.2} {:.2}", e(64)/e(128), e(128)/e(256));
        }
    }
    // delta near U at 400
    let a = perturbation(400, 1.2).unwrap();
    println!("max|a| at (400,1.2) = {:.4}, a = {:?}", a.max_abs(), a.a);
    // sup decreasing
    for l in [50u32, 100, 200, 400] {
        let lo = 6.0/l as f64; let hi = std::f64::consts::FRAC_PI_2;
        let n = ((hi-lo)/(2.0*std::f64::consts::PI/(l as f64+0.5))*24.0) as usize;
        let mut m = 0.0f64;
        for i in 0..n {
            let phi = lo + (hi-lo)*(i as f64+0.5)/n as f64;
            m = m.max(perturbation(l, phi).unwrap().max_abs());
        }
        println!("sup|a| l={l}: {m:.5}");
    }
    // mean count l=10
    let mut tot = 0usize;
    for s in 0..200u64 { tot += find_critical(&sample(10, s), 4, 1e-10).unwrap().counts.0; }
    println!("mean N^c(10) over 200 = {:.3} vs {:.3}", tot as f64/200.0, 2.0/3f64.sqrt()*100.0);
    let _ = lambda(2);
}
