use std::f64::consts::LN_2;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mitosim_core::branching::{many_to_one, ReplicaPlan};
use mitosim_core::dual_semigroup::evolve_dual;
use mitosim_core::harris::{certify, LyapunovParams};
use mitosim_core::measures::{period_map, DyadicComb, DEFAULT_COMB_TOL};
use mitosim_core::spectral::compute_perron;
use mitosim_core::testfns::Bump;
use mitosim_core::{DivisionRate, GridFunction, LogGrid};

fn kernels(c: &mut Criterion) {
    let b = DivisionRate::monomial(1.0, 2.0).unwrap();
    let g = LogGrid::desk();
    let f = GridFunction::sample(&g, |x| Bump::new(1.0, 0.5).eval(x));

    c.bench_function("evolve_dual desk one period", |bn| bn.iter(|| evolve_dual(black_box(&f), &b, LN_2).unwrap()));
    c.bench_function("compute_perron desk", |bn| bn.iter(|| compute_perron(black_box(&b), &g).unwrap()));

    let comb = DyadicComb::dirac(1.0).unwrap();
    c.bench_function("period_map from dirac", |bn| bn.iter(|| period_map(black_box(&comb), &b, DEFAULT_COMB_TOL).unwrap()));

    let params = LyapunovParams::defaults(&b).unwrap();
    c.bench_function("harris certify", |bn| bn.iter(|| certify(&b, black_box(&params), Some(1.0)).unwrap()));

    let plan = ReplicaPlan::new(1000, 42);
    let bump = Bump::new(1.0, 0.5);
    c.bench_function("many_to_one 1000 replicas", |bn| bn.iter(|| many_to_one(1.0, &b, 1.0, &|x| bump.eval(x), black_box(&plan)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = kernels
}
criterion_main!(benches);
