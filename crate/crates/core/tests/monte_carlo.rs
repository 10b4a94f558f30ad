use std::f64::consts::E;

use mitosim_core::branching::{many_to_one, observe, Estimate, ReplicaPlan};
use mitosim_core::dual_semigroup::evolve_dual;
use mitosim_core::testfns::Bump;
use mitosim_core::{DivisionRate, GridFunction, LogGrid};

#[test]
fn yule_population_mean() {
    // constant rate: N_t is geometric with mean e^{B0 t}
    let b = DivisionRate::constant(1.0).unwrap();
    let plan = ReplicaPlan::new(10_000, 7);
    let obs = observe(1.0, &b, 1.0, &|_| 1.0, &plan).unwrap();
    let est = Estimate::from_samples(&obs.iter().map(|o| o.count as f64).collect::<Vec<_>>());
    assert!(est.agrees(E, 3.0), "{} ± {}", est.mean, est.stderr);
    assert!(obs.iter().all(|o| o.value == o.count as f64));
}

#[test]
fn phi_is_conserved_per_replica() {
    // Σ X_i = x0 e^t on every realisation
    let b = DivisionRate::monomial(1.0, 2.0).unwrap();
    let est = many_to_one(0.8, &b, 1.5, &|x| x, &ReplicaPlan::new(200, 1)).unwrap();
    assert!((est.mean - 0.8 * 1.5f64.exp()).abs() <= 1e-12 * est.mean);
    assert!(est.stderr <= 1e-12 * est.mean);
}

#[test]
fn bump_matches_dual_solver() {
    let g = LogGrid::new(2f64.powi(-12), 24, 64).unwrap();
    for (r, x0) in [(1.0, 1.0), (2.0, 0.7), (3.0, 1.3)] {
        let b = DivisionRate::monomial(1.0, r).unwrap();
        let f = Bump::new(1.2, 0.6);
        let t = 1.0;
        let ft = evolve_dual(&GridFunction::sample(&g, |x| f.eval(x)), &b, t).unwrap();
        let target = ft.interpolate_smooth(x0).unwrap();
        let est = many_to_one(x0, &b, t, &|x| f.eval(x), &ReplicaPlan::new(10_000, 42)).unwrap();
        assert!(est.agrees(target, 4.0), "r = {r}: {} ± {} vs {target}", est.mean, est.stderr);
    }
}
