//! Monte Carlo simulation of the size-structured branching process: cells
//! grow like `dX/dt = X` and split into two halves at rate `B(X)`.
//! Replica averages estimate `M_t f(x0) = E[Σ_i f(X^i_t)]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rates::DivisionRate;

pub const DEFAULT_CAP: usize = 10_000_000;

/// Time to the next division of a cell of size `x` given a uniform draw `u`:
/// the `τ` with `∫_0^τ B(x e^s) ds = −ln u`.
pub fn sample_division_time(x: f64, rate: &DivisionRate, u: f64) -> f64 {
    rate.inverse_hazard(x, -u.ln())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    /// Sizes at `time`, in depth-first order of the genealogy.
    pub sizes: Vec<f64>,
    pub time: f64,
    /// Divisions that occurred.
    pub births: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// `Z_t(f)`.
    pub fn pair(&self, f: impl Fn(f64) -> f64) -> f64 {
        pairwise_sum(&self.sizes.iter().map(|&x| f(x)).collect::<Vec<_>>())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Replica count and seeds; replica `i` draws from ChaCha8 seeded with
/// `splitmix64(base_seed + i·0x9E3779B97F4A7C15)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplicaPlan {
    pub replicas: usize,
    pub base_seed: u64,
    pub cap: usize,
}

impl ReplicaPlan {
    pub fn new(replicas: usize, base_seed: u64) -> Self {
        Self { replicas, base_seed, cap: DEFAULT_CAP }
    }

    pub fn seed(&self, i: usize) -> u64 {
        splitmix64(self.base_seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
    }

    pub fn rng(&self, i: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed(i))
    }
}

/// One realisation started from a single cell of size `x0`.
///
/// Cells are tracked by generation `k` and birth time, so a survivor's size
/// is `x0 e^t 2^{−k}` exactly.
pub fn simulate(x0: f64, rate: &DivisionRate, t: f64, rng: &mut impl Rng, cap: usize) -> Result<Population> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::Domain(format!("initial size must be positive, got {x0}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("negative horizon {t}")));
    }
    let top = x0 * t.exp();
    let mut stack: Vec<(i32, f64)> = vec![(0, 0.0)];
    let mut sizes = Vec::new();
    let mut births = 0;
    while let Some((k, born)) = stack.pop() {
        let x = x0 * born.exp() * 2f64.powi(-k);
        let u = 1.0 - rng.random::<f64>();
        let tau = sample_division_time(x, rate, u);
        if born + tau >= t {
            sizes.push(top * 2f64.powi(-k));
        } else {
            births += 1;
            let at = born + tau;
            stack.push((k + 1, at));
            stack.push((k + 1, at));
        }
        if sizes.len() + stack.len() > cap {
            return Err(Error::Horizon { cap, time: born + tau.min(t - born) });
        }
    }
    Ok(Population { sizes, time: t, births })
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub value: f64,
    pub count: usize,
}

/// `(Z_t(f), N_t)` for every replica of the plan, in replica order.
pub fn observe(x0: f64, rate: &DivisionRate, t: f64, f: &(dyn Fn(f64) -> f64 + Sync), plan: &ReplicaPlan) -> Result<Vec<Observation>> {
    (0..plan.replicas)
        .into_par_iter()
        .map(|i| {
            let pop = simulate(x0, rate, t, &mut plan.rng(i), plan.cap)?;
            Ok(Observation { value: pop.pair(f), count: pop.len() })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len();
        let mean = pairwise_sum(v) / n as f64;
        let dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self { mean, stderr: (var / n as f64).sqrt(), replicas: n }
    }

    /// `|mean − target| ≤ z·stderr`, with a `1e−12` relative floor for
    /// estimates whose spread is pure round-off.
    pub fn agrees(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.stderr + 1e-12 * target.abs().max(self.mean.abs())
    }
}

/// Mean and standard error of `Z_t(f)` over the plan's replicas.
pub fn many_to_one(x0: f64, rate: &DivisionRate, t: f64, f: &(dyn Fn(f64) -> f64 + Sync), plan: &ReplicaPlan) -> Result<Estimate> {
    if plan.replicas == 0 {
        return Err(Error::Parameter("need at least one replica".into()));
    }
    let obs = observe(x0, rate, t, f, plan)?;
    Ok(Estimate::from_samples(&obs.iter().map(|o| o.value).collect::<Vec<_>>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    #[test]
    fn division_time_examples() {
        let b = DivisionRate::monomial(1.0, 1.0).unwrap();
        assert_eq!(sample_division_time(1.0, &b, 1.0), 0.0);
        assert!(sample_division_time(1.0, &b, 1.0 - 1e-12) < 1e-11);
        assert_relative_eq!(sample_division_time(1.0, &b, (-1f64).exp()), LN_2, max_relative = 1e-14);
        assert!(sample_division_time(1.0, &DivisionRate::zero(), 0.5).is_infinite());
    }

    #[test]
    fn survival_curve_ks() {
        let b = DivisionRate::monomial(1.0, 2.0).unwrap();
        let x = 0.7;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut taus: Vec<f64> = (0..100_000).map(|_| sample_division_time(x, &b, 1.0 - rng.random::<f64>())).collect();
        taus.sort_by(f64::total_cmp);
        let n = taus.len() as f64;
        let ks = taus
            .iter()
            .enumerate()
            .map(|(i, &tau)| {
                let cdf = -(-b.hazard(x, tau)).exp_m1();
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn no_division_is_transport() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = simulate(1.5, &DivisionRate::zero(), 2.0, &mut rng, 10).unwrap();
        assert_eq!(p.sizes, vec![1.5 * 2f64.exp()]);
        assert_eq!(p.births, 0);
    }

    #[test]
    fn sizes_are_dyadic() {
        let b = DivisionRate::monomial(1.0, 2.0).unwrap();
        let plan = ReplicaPlan::new(20, 3);
        for i in 0..plan.replicas {
            let p = simulate(0.8, &b, 3.0, &mut plan.rng(i), DEFAULT_CAP).unwrap();
            let top = 0.8 * 3f64.exp();
            for &x in &p.sizes {
                let k = (top / x).log2().round();
                assert!((x * 2f64.powf(k) - top).abs() <= 1e-12 * top);
            }
            assert_eq!(p.len(), p.births + 1);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let b = DivisionRate::constant(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(simulate(1.0, &b, 10.0, &mut rng, 1000), Err(Error::Horizon { cap: 1000, .. })));
    }

    #[test]
    fn plan_is_deterministic_across_pools() {
        let b = DivisionRate::monomial(1.0, 1.0).unwrap();
        let plan = ReplicaPlan::new(64, 99);
        let f = |x: f64| x.sin();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| many_to_one(1.0, &b, 1.5, &f, &plan)).unwrap();
        let c = four.install(|| many_to_one(1.0, &b, 1.5, &f, &plan)).unwrap();
        assert_eq!(a.mean.to_bits(), c.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), c.stderr.to_bits());
        assert_ne!(plan.seed(0), plan.seed(1));
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert_relative_eq!(pairwise_sum(&v), v.iter().sum::<f64>(), max_relative = 1e-14);
    }
}
