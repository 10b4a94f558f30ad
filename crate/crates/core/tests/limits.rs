use std::f64::consts::LN_2;
use std::sync::Arc;

use mitosim_core::dual_semigroup::DualEvolution;
use mitosim_core::entropy::{dissipation, EntropyFunctional};
use mitosim_core::measures::AtomicMeasure;
use mitosim_core::spectral::{compute_perron, invariant_comb, periodic_limit_fejer, phi_sup_norm, projection, PerronSolution};
use mitosim_core::testfns::{Bump, TestFunction};
use mitosim_core::{DivisionRate, GridFunction, LogGrid};

fn setup() -> (DivisionRate, LogGrid, PerronSolution) {
    let b = DivisionRate::monomial(1.0, 2.0).unwrap();
    let g = LogGrid::desk();
    let p = compute_perron(&b, &g).unwrap();
    (b, g, p)
}

fn dictionary() -> Vec<TestFunction> {
    vec![
        TestFunction::Phi,
        TestFunction::One,
        TestFunction::Power(2.0),
        TestFunction::Bump(Bump::new(1.0, 0.5)),
        TestFunction::Bump(Bump::new(3.0, 1.0)),
        TestFunction::Gaussian { center: 0.7, width: 0.3 },
        TestFunction::PhiK { k: 1, imag: false },
        TestFunction::PhiK { k: 2, imag: true },
    ]
}

#[test]
fn weak_star_convergence_to_projection() {
    let (b, g, p) = setup();
    // wide in log x, so the Fejér bias at N = 32 is far below the target
    let f = GridFunction::sample(&g, |x| Bump::new(1.5, 2.0).eval(x));
    let r0 = projection(&f, &p, 32, 0.0).unwrap();
    let mut ev = DualEvolution::new(f, b).unwrap();
    let mut devs = Vec::new();
    for m in 1..=12 {
        ev.advance_to(m as f64 * LN_2).unwrap();
        let e = (-ev.time()).exp();
        let s = ev.state();
        let dev = s
            .window()
            .indices()
            .filter(|&j| (0.5..=4.0).contains(&g.node(j)))
            .map(|j| (e * s.value(j) - r0.eval_real(g.node(j))).abs())
            .fold(0.0, f64::max);
        devs.push(dev);
    }
    assert!(devs[11] < 1e-3, "{devs:?}");
    assert!(devs[11] < 1e-2 * devs[0], "{devs:?}");
}

#[test]
fn periodic_limits_are_periodic() {
    let (b, _, p) = setup();
    let fejer = periodic_limit_fejer(&AtomicMeasure::dirac(1.0).unwrap(), Arc::new(p), 64);
    let (comb, _) = invariant_comb(1.0, &b, 1e-10).unwrap();
    let f = |x: f64| Bump::new(1.2, 0.8).eval(x);
    for t in [0.0, 0.1, 0.37, 0.6] {
        for k in [1.0, 2.0, 5.0] {
            for rho in [&fejer, &comb] {
                let a = rho.evaluate(&f, t).unwrap();
                let c = rho.evaluate(&f, t + k * LN_2).unwrap();
                assert_eq!(a.to_bits(), c.to_bits(), "t = {t}, shift {k}");
            }
        }
    }
}

#[test]
fn projection_contracts_phi_norm() {
    let (_, g, p) = setup();
    for tf in dictionary() {
        let f = GridFunction::sample(&g, |x| tf.eval(x));
        let norm = phi_sup_norm(&f);
        if !norm.is_finite() {
            continue;
        }
        for t in [0.0, 0.3] {
            let r = projection(&f, &p, 32, t).unwrap();
            let rn = g.nodes().iter().copied().filter(|x| (1e-3..=1e3).contains(x)).map(|x| (r.eval_real(x) / x).abs()).fold(0.0, f64::max);
            assert!(rn <= norm + 1e-6, "{tf}: {rn} > {norm}");
        }
    }
}

#[test]
fn dissipation_is_nonnegative() {
    let (b, g, p) = setup();
    let hs = [EntropyFunctional::Square, EntropyFunctional::CenteredSquare, EntropyFunctional::SmoothAbs { eps: 1e-6 }];
    for tf in dictionary() {
        let f = GridFunction::sample(&g, |x| tf.eval(x));
        for h in &hs {
            let d = dissipation(&f, &b, &p, h).unwrap();
            assert!(d.value >= -1e-10, "{tf}, {h}: {}", d.value);
        }
    }
}

/// `max |f(x/2)/(x/2) − f(x)/x|` over the nodes in `[lo, hi]`.
fn dyadic_defect(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    LogGrid::desk()
        .nodes()
        .iter()
        .copied()
        .filter(|x| (lo..=hi).contains(x))
        .map(|x| (f(x / 2.0) / (x / 2.0) - f(x) / x).abs())
        .fold(0.0, f64::max)
}

#[test]
fn square_dissipation_vanishes_on_dyadic_functions() {
    let (b, g, p) = setup();
    let h = EntropyFunctional::Square;
    let mut cases: Vec<(String, Box<dyn Fn(f64) -> f64>)> = Vec::new();
    for k in 0..=3 {
        let tf = TestFunction::PhiK { k, imag: k % 2 == 1 };
        cases.push((tf.to_string(), Box::new(move |x| tf.eval(x))));
    }
    for eps in [1e-2, 1e-4, 1e-5] {
        cases.push((format!("phi + {eps} bump"), Box::new(move |x| x + eps * Bump::new(1.0, 0.7).eval(x))));
    }
    for (name, f) in &cases {
        let d = dissipation(&GridFunction::sample(&g, f), &b, &p, &h).unwrap().value;
        let defect = dyadic_defect(f, 1e-4, 1e4);
        let zero = d.abs() <= 1e-12;
        assert_eq!(zero, defect <= 1e-6, "{name}: D = {d:e}, defect {defect:e}");
    }
}
