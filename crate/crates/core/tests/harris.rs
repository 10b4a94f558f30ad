use std::f64::consts::LN_2;

use mitosim_core::dual_semigroup::evolve_dual;
use mitosim_core::harris::{
    certify, chain_distribution, drift_constants, minorization, sweep_radius, validate_certificate, validate_measure, LyapunovParams,
    DEFAULT_Q1, DEFAULT_Q2,
};
use mitosim_core::measures::AtomicMeasure;
use mitosim_core::{DivisionRate, GridFunction, LogGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rate(r: f64) -> DivisionRate {
    DivisionRate::monomial(1.0, r).unwrap()
}

#[test]
fn drift_holds_on_random_probes() {
    let g = LogGrid::new(2f64.powi(-12), 24, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for r in [1.0, 2.0, 3.0] {
        let b = rate(r);
        let d = drift_constants(&b, DEFAULT_Q1, DEFAULT_Q2, 0.5).unwrap();
        // P_L V = M_L(φV)/(e^L φ), and φV = 1 + x²
        let out = evolve_dual(&GridFunction::sample(&g, |x| 1.0 + x * x), &b, LN_2).unwrap();
        let w = out.window();
        for _ in 0..50 {
            let j = rng.random_range(w.lo..=w.hi);
            let x = g.node(j);
            let pv = out.value(j) / (2.0 * x);
            let v = 1.0 / x + x;
            assert!(pv <= d.gamma * v + d.k + 1e-6, "r = {r}, x = {x}: {pv} > {}", d.gamma * v + d.k);
        }
    }
}

#[test]
fn minorization_mass_reaches_the_top() {
    let b = DivisionRate::monomial(0.2, 2.0).unwrap();
    let d = drift_constants(&b, -1.0, 1.0, 0.5).unwrap();
    let r_min = 2.0 * d.k / (1.0 - d.gamma);
    for r in [1.01 * r_min, 2.0 * r_min] {
        let p = LyapunovParams::with_radius(-1.0, 1.0, 0.5, d.k, d.gamma, r).unwrap();
        let m = minorization(&b, &p, 1.0).unwrap();
        for &y in &m.sublevel {
            let dist = chain_distribution(&b, y, m.n0).unwrap();
            let top: f64 = dist.iter().filter(|a| (a.0 - m.xi2).abs() <= 1e-12 * m.xi2).map(|a| a.1).sum();
            assert!(top >= m.alpha() - 1e-9, "y = {y}: {top} < {}", m.alpha());
        }
    }
}

#[test]
fn certificate_soundness_matrix() {
    for r in [1.0, 2.0, 3.0] {
        let b = rate(r);
        let p = LyapunovParams::defaults(&b).unwrap();
        for x0 in [0.5, 1.0, 3.0] {
            let cert = certify(&b, &p, Some(x0)).unwrap();
            assert!(cert.is_valid());
            let rep = validate_certificate(&cert, &b, x0, 30).unwrap_or_else(|e| panic!("r = {r}, x0 = {x0}: {e}"));
            assert!(rep.log_margin >= 0.0);
            assert!(rep.rate_within(&cert), "r = {r}, x0 = {x0}");
        }
    }
}

#[test]
fn larger_radius_never_helps() {
    let b = rate(2.0);
    let factors: Vec<f64> = (0..8).map(|i| 1.01 * 2f64.powi(i)).collect();
    for x_ref in [Some(1.0), None] {
        let sweep = sweep_radius(&b, DEFAULT_Q1, DEFAULT_Q2, 0.5, &factors, x_ref).unwrap();
        let certs: Vec<_> = sweep.into_iter().map(|(_, c)| c.unwrap()).collect();
        for pair in certs.windows(2) {
            assert!(pair[1].minorization.log_alpha <= pair[0].minorization.log_alpha, "{x_ref:?}");
            assert!(pair[1].log_gap() <= pair[0].log_gap(), "{x_ref:?}");
        }
    }
}

#[test]
fn uniform_certificate_covers_spread_data() {
    let b = rate(2.0);
    let cert = certify(&b, &LyapunovParams::defaults(&b).unwrap(), None).unwrap();
    let mu0 = AtomicMeasure::density_quadrature(1.0, 2.0, 512, |x| x.powi(-2)).unwrap();
    let rep = validate_measure(&cert, &b, &mu0, 12).unwrap();
    assert!(rep.log_margin >= 0.0);
    assert!(rep.rate_within(&cert));
}
