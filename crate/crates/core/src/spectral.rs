//! Perron eigenfunction, boundary eigenelements, Fejér projection and the
//! log 2-periodic limit.
//!
//! With `s = log x` and `q = x²U` the Perron problem becomes
//! `q' = −B(x) q(s) + B(2x) q(s + log 2)`, and integrating from `s` to
//! infinity gives the renewal form `q(s) = ∫_s^{s+log 2} B(e^σ) q(σ) dσ`.
//! The solver sweeps leftward through that identity.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{evolve_comb, period_map, AtomicMeasure, DyadicComb, WeightFunction};
use crate::numerics::{GridFunction, LogGrid, Window, TAIL_TOL};
use crate::rates::DivisionRate;
use crate::testfns::{cycle_phase, OMEGA};

/// Fourier coefficients indexed by mode `k`; absent modes are zero.
pub type Coefficients = BTreeMap<i64, Complex64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerronOptions {
    /// Hazard accumulated from `x = 1` at which the solution is cut off.
    pub hazard_cutoff: f64,
    pub residual_tol: f64,
    pub tail_tol: f64,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self { hazard_cutoff: 600.0, residual_tol: 1e-4, tail_tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct PerronSolution {
    pub u: GridFunction,
    /// `∫ x U dx` after normalization.
    pub normalization: f64,
    /// Largest defect of the eigen-equation divided by `max(U, 1e-6·max U)`.
    pub residual: f64,
    /// Relative sup change of `x²U` when the cutoff moves down one octave.
    pub tail_sensitivity: f64,
    /// Observed power-law slopes of `U` near the left end and below the cutoff.
    pub tail_exponents: (f64, f64),
    /// Slope of `x²U` in `log x` at the left end, used for the analytic tail.
    left_slope: f64,
}

impl PerronSolution {
    pub fn grid(&self) -> &LogGrid {
        self.u.grid()
    }

    /// `x²U` at node `j`.
    pub fn q(&self, j: usize) -> f64 {
        let x = self.u.x(j);
        x * x * self.u.value(j)
    }
}

// Gregory end corrections: coefficients of the forward differences at the
// left end (mirrored at the right), giving an eighth-order rule.
const GREGORY: [f64; 6] = [1.0 / 12.0, 1.0 / 24.0, 19.0 / 720.0, 3.0 / 160.0, 863.0 / 60480.0, 275.0 / 24192.0];

fn gregory(m: usize) -> Vec<f64> {
    let mut g = vec![1.0; m + 1];
    g[0] = 0.5;
    g[m] = 0.5;
    for (k, c) in GREGORY.iter().enumerate() {
        let k = k + 1;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        // Δ^k f_0 = Σ_i C(k, i) (−1)^{k−i} f_i
        let mut binom = 1.0;
        for i in 0..=k {
            let term = sign * c * binom * if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
            g[i] += term;
            g[m - i] += term;
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
    }
    g
}

/// Leftward sweep for `q = x²U` from a unit seed at `cut`.
fn sweep(rate: &DivisionRate, grid: &LogGrid, cut: usize) -> Vec<f64> {
    let m = grid.per_octave();
    let h = grid.log_step();
    let n = grid.len();
    let b: Vec<f64> = grid.nodes().iter().map(|&x| rate.value(x)).collect();
    let g = gregory(m);
    let mut q = vec![0.0; n];
    q[cut] = 1.0;
    let at = |q: &[f64], i: usize| if i <= cut { b[i] * q[i] } else { 0.0 };
    for j in (0..cut).rev() {
        let bj = b[j];
        let next = if g[0] * h * bj > 0.5 {
            // stiff end: exponential step of the differential form
            let e = rate.hazard(grid.node(j), h).exp();
            let (s1, s0) = (if j + 1 + m < n { at(&q, j + 1 + m) } else { 0.0 }, if j + m < n { at(&q, j + m) } else { 0.0 });
            e * q[j + 1] - 0.5 * h * (e * s1 + s0)
        } else {
            let mut acc = 0.0;
            for i in 1..=m {
                if j + i < n {
                    acc += g[i] * at(&q, j + i);
                }
            }
            h * acc / (1.0 - g[0] * h * bj)
        };
        q[j] = next.max(0.0);
        if q[j] > 1e200 {
            q[j..=cut].iter_mut().for_each(|v| *v *= 1e-200);
        }
    }
    q
}

fn left_slope(q: &[f64], m: usize) -> f64 {
    if q.len() > m && q[0] > 0.0 && q[m] > 0.0 {
        (q[m] / q[0]).ln() / LN_2
    } else {
        f64::INFINITY
    }
}

/// `∫ q ds` by the trapezoid rule plus the analytic left tail `q_0/ρ`.
fn total(q: &[f64], h: f64, slope: f64) -> f64 {
    let n = q.len();
    let inner: f64 = q.iter().sum::<f64>() - 0.5 * (q[0] + q[n - 1]);
    let tail = if slope.is_finite() && slope > 0.0 { q[0] / slope } else { 0.0 };
    h * inner + tail
}

fn cutoff_index(rate: &DivisionRate, grid: &LogGrid, hazard: f64) -> usize {
    let xref = 1f64.clamp(grid.x_min(), grid.x_max());
    (0..grid.len())
        .find(|&j| {
            let x = grid.node(j);
            x >= xref && rate.hazard(xref, (x / xref).ln()) >= hazard
        })
        .unwrap_or(grid.len() - 1)
}

/// Solves the eigen-problem with `λ = 1` and normalizes `∫ x U dx = 1`.
pub fn compute_perron(rate: &DivisionRate, grid: &LogGrid) -> Result<PerronSolution> {
    compute_perron_with(rate, grid, PerronOptions::default())
}

pub fn compute_perron_with(rate: &DivisionRate, grid: &LogGrid, opts: PerronOptions) -> Result<PerronSolution> {
    let m = grid.per_octave();
    if m < 16 {
        return Err(Error::Parameter(format!("Perron sweep needs at least 16 nodes per octave, got {m}")));
    }
    if rate.is_zero() {
        return Err(Error::Parameter("Perron problem has no solution for B ≡ 0".into()));
    }
    let h = grid.log_step();
    let cut = cutoff_index(rate, grid, opts.hazard_cutoff);
    if cut < 2 * m {
        return Err(Error::Parameter("grid too short for the Perron cutoff".into()));
    }
    let mut q = sweep(rate, grid, cut);
    let slope = left_slope(&q, m);
    let z = total(&q, h, slope);
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Numerical(format!("Perron normalization {z} is degenerate")));
    }
    q.iter_mut().for_each(|v| *v /= z);

    let mut alt = sweep(rate, grid, cut - m);
    let za = total(&alt, h, left_slope(&alt, m));
    alt.iter_mut().for_each(|v| *v /= za);
    let qmax = q.iter().copied().fold(0.0, f64::max);
    let tail_sensitivity = q.iter().zip(&alt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / qmax;

    let values: Vec<f64> = grid.nodes().iter().zip(&q).map(|(&x, &v)| v / (x * x)).collect();
    let u = GridFunction::new(grid.clone(), values, Window::new(0, cut))?;
    let normalization = total(&q, h, slope);
    let residual = residual(rate, &u, cut);
    let near_zero = slope - 2.0;
    let hi = cut.saturating_sub(m);
    let lo = hi.saturating_sub(m);
    let at_inf = if u.value(lo) > 0.0 && u.value(hi) > 0.0 { (u.value(hi) / u.value(lo)).ln() / LN_2 } else { f64::NEG_INFINITY };

    let sol = PerronSolution {
        u,
        normalization,
        residual,
        tail_sensitivity,
        tail_exponents: (near_zero, at_inf),
        left_slope: slope,
    };
    if residual > opts.residual_tol || tail_sensitivity > opts.tail_tol {
        return Err(Error::NotConverged(format!(
            "Perron residual {residual:.3e} (limit {:.1e}), tail sensitivity {tail_sensitivity:.3e} (limit {:.1e}); try a larger or finer grid",
            opts.residual_tol, opts.tail_tol
        )));
    }
    Ok(sol)
}

/// Defect of `(xU)' + (B + 1)U − 4B(2x)U(2x)` over `max(U, 1e-6·max U)`.
fn residual(rate: &DivisionRate, u: &GridFunction, cut: usize) -> f64 {
    let grid = u.grid();
    let m = grid.per_octave();
    let h = grid.log_step();
    let v: Vec<f64> = (0..grid.len()).map(|j| grid.node(j) * u.value(j)).collect();
    let umax = u.values().iter().copied().fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for j in crate::numerics::STENCIL..=cut.saturating_sub(m + crate::numerics::STENCIL) {
        let x = grid.node(j);
        let dv = crate::numerics::centered_derivative(&v, j, h) / x;
        let d = dv + (rate.value(x) + 1.0) * u.value(j) - 4.0 * rate.value(2.0 * x) * u.value(j + m);
        worst = worst.max(d.abs() / u.value(j).max(1e-6 * umax));
    }
    worst
}

/// `(λ_k, U_k, φ_k)` on the boundary of the spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEigen {
    pub k: i64,
}

impl BoundaryEigen {
    pub fn new(k: i64) -> Self {
        Self { k }
    }

    /// `1 + 2πik/log 2`.
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(1.0, self.k as f64 * OMEGA)
    }

    /// `x·e^{ikω log x}`; the phase is reduced per octave so `φ_k(2x) = 2φ_k(x)`.
    pub fn phi(&self, x: f64) -> Complex64 {
        x * unit(self.k, x.log2())
    }

    /// `e^{−ikω log x} U(x)` at node `j`.
    pub fn u(&self, perron: &PerronSolution, j: usize) -> Complex64 {
        perron.u.value(j) * unit(self.k, perron.u.x(j).log2()).conj()
    }
}

/// `e^{2πiky}`, with conjugate symmetry in `k` exact.
fn unit(k: i64, y: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, cycle_phase(k.abs(), y));
    if k < 0 {
        z.conj()
    } else {
        z
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moment {
    pub value: Complex64,
    /// Estimate of the neglected tails.
    pub tail: f64,
    pub tail_warning: bool,
}

/// `ν_k(f) = ∫ U_k f dx`, by the trapezoid rule in `log x`.
///
/// Modes with `|k|` near the number of nodes per octave alias; keep
/// `|k| ≤ m/4`.
pub fn moment_nu(k: i64, f: &GridFunction, perron: &PerronSolution) -> Result<Moment> {
    if f.grid() != perron.grid() {
        return Err(Error::Parameter("moment_nu needs f on the Perron grid".into()));
    }
    let w = f.window().intersect(&perron.u.window());
    if w.is_empty() {
        return Ok(Moment { value: Complex64::new(0.0, 0.0), tail: 0.0, tail_warning: false });
    }
    let h = perron.grid().log_step();
    let term = |j: usize| {
        let x = f.x(j);
        perron.q(j) * (f.value(j) / x) * unit(k.abs(), x.log2()).conj()
    };
    let mut sum = Complex64::new(0.0, 0.0);
    for j in w.indices() {
        sum += term(j);
    }
    sum -= 0.5 * (term(w.lo) + term(w.hi));
    let mut value = sum * h;
    if k < 0 {
        value = value.conj();
    }
    let left = term(w.lo).norm();
    let left = if w.lo == 0 && perron.left_slope.is_finite() && perron.left_slope > 0.0 { left / perron.left_slope } else { left };
    let tail = left + term(w.hi).norm();
    let tail_warning = tail > TAIL_TOL * value.norm().max(f64::MIN_POSITIVE);
    Ok(Moment { value, tail, tail_warning })
}

/// Fraction of a period, snapped to a `2^-32` grid so that `t` and
/// `t + log 2` give the same phase bit for bit.
pub fn period_phase(t: f64) -> f64 {
    let scale = 4294967296.0;
    let y = (t / LN_2 * scale).round() / scale;
    y - y.floor()
}

/// `x ↦ Σ_{|k|<N} (1 − |k|/N) c_k φ_k(x) e^{2πikt/log 2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FejerSum {
    terms: Vec<(i64, Complex64)>,
    symmetric: bool,
}

pub fn fejer_sum(coeffs: &Coefficients, n: usize, t: f64) -> Result<FejerSum> {
    if n == 0 {
        return Err(Error::Parameter("Fejér order must be positive".into()));
    }
    let theta = period_phase(t);
    let scale = coeffs.values().map(|c| c.norm()).fold(0.0, f64::max);
    let mut symmetric = true;
    let mut terms = Vec::new();
    for (&k, &c) in coeffs {
        if k.unsigned_abs() as usize >= n {
            continue;
        }
        let mirror = coeffs.get(&-k).copied().unwrap_or_default();
        if (mirror - c.conj()).norm() > 1e-12 * scale {
            symmetric = false;
        }
        let weight = 1.0 - k.unsigned_abs() as f64 / n as f64;
        terms.push((k, weight * c * unit(k, theta)));
    }
    Ok(FejerSum { terms, symmetric })
}

/// As [`fejer_sum`], rejecting coefficients that are not conjugate-symmetric.
pub fn fejer_sum_real(coeffs: &Coefficients, n: usize, t: f64) -> Result<FejerSum> {
    let s = fejer_sum(coeffs, n, t)?;
    if !s.symmetric {
        let scale = coeffs.values().map(|c| c.norm()).fold(0.0, f64::max);
        let k = coeffs
            .iter()
            .find(|(&k, &c)| (coeffs.get(&-k).copied().unwrap_or_default() - c.conj()).norm() > 1e-12 * scale)
            .map(|(&k, _)| k)
            .unwrap_or(0);
        return Err(Error::Symmetry { k });
    }
    Ok(s)
}

impl FejerSum {
    pub fn is_conjugate_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let y = x.log2();
        self.terms.iter().map(|&(k, c)| c * unit(k, y)).sum::<Complex64>() * x
    }

    /// Real part; exact value for conjugate-symmetric coefficients.
    pub fn eval_real(&self, x: f64) -> f64 {
        self.eval(x).re
    }
}

/// `ν_k(f)` for `|k| < n`, computed in parallel.
pub fn moments(f: &GridFunction, perron: &PerronSolution, n: usize) -> Result<Coefficients> {
    let n = n as i64;
    let vals: Vec<(i64, Moment)> =
        (-(n - 1)..n).into_par_iter().map(|k| moment_nu(k, f, perron).map(|m| (k, m))).collect::<Result<_>>()?;
    Ok(vals.into_iter().map(|(k, m)| (k, m.value)).collect())
}

/// `R_t f` as a Fejér sum of the moments of `f`.
pub fn projection(f: &GridFunction, perron: &PerronSolution, n: usize, t: f64) -> Result<FejerSum> {
    fejer_sum_real(&moments(f, perron, n)?, n, t)
}

/// The log 2-periodic family `ρ_t`.
#[derive(Clone, Debug)]
pub enum PeriodicLimit {
    /// `ρ_t(f) = Σ (1 − |k|/N) c_k ν_k(f) e^{2πikt/log 2}`.
    FejerMoments { coeffs: Coefficients, n: usize, perron: Arc<PerronSolution> },
    /// `ρ_0` as a comb; `ρ_t = e^{−t} ρ_0 M_t` within a period.
    InvariantComb { comb: DyadicComb, rate: DivisionRate, tol: f64 },
}

impl PeriodicLimit {
    pub const PERIOD: f64 = LN_2;

    /// `ρ_t(f)`.
    pub fn evaluate(&self, f: &(dyn Fn(f64) -> f64 + Sync), t: f64) -> Result<f64> {
        let theta = period_phase(t);
        match self {
            PeriodicLimit::FejerMoments { coeffs, n, perron } => {
                let g = GridFunction::sample(perron.grid(), f);
                let nu = moments(&g, perron, *n)?;
                let mut s = Complex64::new(0.0, 0.0);
                for (k, v) in &nu {
                    let c = coeffs.get(k).copied().unwrap_or_default();
                    let weight = 1.0 - k.unsigned_abs() as f64 / *n as f64;
                    s += weight * c * v * unit(*k, theta);
                }
                Ok(s.re)
            }
            PeriodicLimit::InvariantComb { comb, rate, tol } => {
                if theta == 0.0 {
                    return Ok(comb.pair(f));
                }
                let s = theta * LN_2;
                Ok((-s).exp() * evolve_comb(comb, rate, s, *tol)?.pair(f))
            }
        }
    }

    /// `ρ_t(φ)`.
    pub fn phi_mass(&self, t: f64) -> Result<f64> {
        match self {
            PeriodicLimit::FejerMoments { coeffs, .. } => Ok(coeffs.get(&0).map(|c| c.re).unwrap_or(0.0)),
            PeriodicLimit::InvariantComb { .. } => self.evaluate(&|x| x, t),
        }
    }
}

/// Fejér form of `ρ_t` with `c_k = μ0(φ_k)`.
pub fn periodic_limit_fejer(mu0: &AtomicMeasure, perron: Arc<PerronSolution>, n: usize) -> PeriodicLimit {
    let n_i = n as i64;
    let coeffs = (-(n_i - 1)..n_i)
        .map(|k| {
            let e = BoundaryEigen::new(k);
            (k, mu0.atoms().iter().map(|&(x, w)| w * e.phi(x)).sum::<Complex64>())
        })
        .collect();
    PeriodicLimit::FejerMoments { coeffs, n, perron }
}

#[derive(Clone, Debug)]
pub struct PowerIteration {
    pub iterations: usize,
    /// `‖ρ_{i+1} − ρ_i‖_w` per iteration.
    pub distances: Vec<f64>,
    /// Geometric decay of the distances over the last iterations.
    pub rate_emp: f64,
}

pub const INVARIANT_MAX_ITER: usize = 200;

/// Iterates the one-period map from `δ_{x0}` to its fixed point.
pub fn invariant_comb(x0: f64, rate: &DivisionRate, tol: f64) -> Result<(PeriodicLimit, PowerIteration)> {
    let w = WeightFunction::new(0.0, 2.0)?;
    let ode_tol = (1e-2 * tol).max(1e-13);
    let mut rho = DyadicComb::dirac(x0)?;
    let mut distances = Vec::new();
    for it in 1..=INVARIANT_MAX_ITER {
        let next = period_map(&rho, rate, ode_tol)?;
        let d = next.to_atomic().difference(&rho.to_atomic()).weighted_tv_norm(&w);
        distances.push(d);
        rho = next;
        if d < tol {
            let k = distances.len().min(10);
            let tail = &distances[distances.len() - k..];
            let rate_emp = if k >= 2 && tail[0] > 0.0 { (tail[k - 1] / tail[0]).powf(1.0 / (k - 1) as f64) } else { 0.0 };
            let report = PowerIteration { iterations: it, distances, rate_emp };
            return Ok((PeriodicLimit::InvariantComb { comb: rho, rate: rate.clone(), tol: ode_tol }, report));
        }
    }
    Err(Error::Divergence { iterations: INVARIANT_MAX_ITER, distance: distances.last().copied().unwrap_or(f64::NAN) })
}

/// `(1/log 2)∫_t^{t+log 2} e^{−s} μ_s(f) ds` for `μ_0 = δ_{x0}` by the
/// trapezoid rule on `samples` intervals, for each `f`.
pub fn period_average(
    x0: f64,
    rate: &DivisionRate,
    t: f64,
    fs: &[&(dyn Fn(f64) -> f64 + Sync)],
    samples: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let marks: Vec<f64> = (0..=samples).map(|i| t + LN_2 * i as f64 / samples as f64).collect();
    let snaps = crate::measures::evolve_through(&DyadicComb::dirac(x0)?, rate, &marks, tol)?;
    Ok(fs
        .iter()
        .map(|f| {
            let vals: Vec<f64> = snaps.iter().zip(&marks).map(|(c, &s)| (-s).exp() * c.pair(f)).collect();
            let inner: f64 = vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[samples]);
            inner / samples as f64
        })
        .collect())
}

/// `sup |f(x)/x|` over the window.
pub fn phi_sup_norm(f: &GridFunction) -> f64 {
    f.window().indices().map(|j| (f.value(j) / f.x(j)).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gregory_rule_order() {
        let m = 64;
        let g = gregory(m);
        let h = 1.0 / m as f64;
        for p in 0..8 {
            let q: f64 = (0..=m).map(|i| g[i] * (i as f64 * h).powi(p)).sum::<f64>() * h;
            assert!((q - 1.0 / (p + 1) as f64).abs() < 1e-13, "degree {p}: {q}");
        }
    }

    fn perron2() -> PerronSolution {
        compute_perron(&DivisionRate::monomial(1.0, 2.0).unwrap(), &LogGrid::desk()).unwrap()
    }

    #[test]
    fn perron_normalized_and_small_residual() {
        let p = perron2();
        assert!((p.normalization - 1.0).abs() < 1e-8);
        let direct = p.u.integrate(|x| x).value;
        assert!((direct - 1.0).abs() < 1e-8, "{direct}");
        assert!(p.residual < 1e-4, "{}", p.residual);
        assert!(p.u.values().iter().all(|&v| v >= 0.0));
        // U is flat at 0 and decays faster than any power at infinity
        assert!(p.tail_exponents.0 > 2.0 && p.tail_exponents.1 < -10.0, "{:?}", p.tail_exponents);
    }

    #[test]
    fn eigen_identities() {
        for k in -3..=3 {
            let e = BoundaryEigen::new(k);
            for x in [0.37, 1.0, 5.5] {
                assert!((e.phi(2.0 * x) - 2.0 * e.phi(x)).norm() <= 1e-14 * x);
                assert!((e.phi(x).norm() - x).abs() < 1e-14 * x);
            }
        }
        assert_eq!(BoundaryEigen::new(1).lambda(), Complex64::new(1.0, 2.0 * PI / LN_2));
    }

    #[test]
    fn fejer_examples() {
        let coeffs: Coefficients = [(1, Complex64::new(1.0, 0.0))].into_iter().collect();
        let s = fejer_sum(&coeffs, 4, 0.0).unwrap();
        for x in [0.3, 1.0, 2.5] {
            assert!((s.eval(x) - 0.75 * BoundaryEigen::new(1).phi(x)).norm() < 1e-15);
        }
        assert!(matches!(fejer_sum_real(&coeffs, 4, 0.0), Err(Error::Symmetry { k: 1 })));
        let t = 0.3;
        assert_eq!(fejer_sum(&coeffs, 4, t).unwrap(), fejer_sum(&coeffs, 4, t + LN_2).unwrap());
    }

    #[test]
    fn conjugate_moments() {
        let p = perron2();
        let f = GridFunction::sample(p.grid(), |x| (-(x.ln()).powi(2)).exp());
        for k in 1..=3 {
            let a = moment_nu(k, &f, &p).unwrap().value;
            let b = moment_nu(-k, &f, &p).unwrap().value;
            assert_eq!(a, b.conj());
        }
    }
}
