//! Explicit Harris constants for the rescaled Markov semigroup
//! `P_t f = M_t(φf)/(e^t φ)`: Lyapunov drift, minorization on the dyadic
//! lattice, the resulting contraction certificate, and a check of the
//! certificate against measured decay.
//!
//! Minorization constants are products of survival probabilities over many
//! periods and routinely fall below the smallest positive double, so the
//! pipeline carries `α`, `1 − ϱ`, `C` and `a` as logarithms.

use std::f64::consts::LN_2;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{period_map, AtomicMeasure, DyadicComb, LatticeMeasure, WeightFunction};
use crate::numerics::quad::gauss_kronrod;
use crate::rates::{AssumptionConstants, DivisionRate, RateKind};

pub const DEFAULT_Q1: f64 = -1.0;
pub const DEFAULT_Q2: f64 = 1.0;
/// `R = r_factor · 2K/(1 − γ)`.
pub const DEFAULT_R_FACTOR: f64 = 2.0;
/// `α0 = θα`.
pub const DEFAULT_THETA: f64 = 0.5;
/// `γ0 = γ + 2K/R + κ(1 − γ − 2K/R)`.
pub const DEFAULT_KAPPA: f64 = 0.5;

const GRID_PER_OCTAVE: usize = 128;
const VALIDATION_TOL: f64 = 1e-12;

/// `V(x) = x^{q1} + x^{q2}`.
pub fn lyapunov(q1: f64, q2: f64, x: f64) -> f64 {
    x.powf(q1) + x.powf(q2)
}

/// `ÃV(x) = Σ [q_i + (2^{−q_i} − 1)B(x)] x^{q_i}`.
pub fn drift_generator(rate: &DivisionRate, q1: f64, q2: f64, x: f64) -> f64 {
    let b = rate.value(x);
    (q1 + (2f64.powf(-q1) - 1.0) * b) * x.powf(q1) + (q2 + (2f64.powf(-q2) - 1.0) * b) * x.powf(q2)
}

fn check_exponents(q1: f64, q2: f64, omega: f64) -> Result<()> {
    if !(q1 < 0.0 && q2 > 0.0) {
        return Err(Error::Parameter(format!("need q1 < 0 < q2, got q1 = {q1}, q2 = {q2}")));
    }
    if !(omega > 0.0 && omega < -q1) {
        return Err(Error::Parameter(format!("need 0 < ω < −q1 = {}, got {omega}", -q1)));
    }
    Ok(())
}

fn constants(rate: &DivisionRate) -> Result<AssumptionConstants> {
    rate.assumption_constants()
        .ok_or_else(|| Error::Certification("the rate declares no power-law envelope constants".into()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftConstants {
    pub k: f64,
    /// `2^{−ω}`.
    pub gamma: f64,
    /// Where `ÃV + ωV` peaks.
    pub argmax: f64,
    /// `ÃV + ωV ≤ 0` is proved analytically outside this interval.
    pub certified: (f64, f64),
}

/// Finds `x_lo` with `ÃV + ωV ≤ 0` on `(0, x_lo]` from `B ≤ K0 x^{g0}`.
fn lower_tail(c: &AssumptionConstants, q1: f64, q2: f64, omega: f64) -> Result<f64> {
    if !(c.gamma0 > 0.0) {
        return Err(Error::Certification(format!("near-zero exponent {} must be positive", c.gamma0)));
    }
    let half = 0.5 * (q1 + omega).abs();
    let up = 2f64.powf(-q1) - 1.0;
    let mut x = c.b0.min(1.0) * 0.5;
    for _ in 0..400 {
        let split = up * c.k0 * x.powf(c.gamma0) <= half && (q2 + omega).max(0.0) * x.powf(q2 - q1) <= half;
        if split {
            return Ok(x);
        }
        x *= 0.5;
    }
    Err(Error::Certification("could not dominate the drift near zero".into()))
}

/// Finds `x_hi` with `ÃV + ωV ≤ 0` on `[x_hi, ∞)` from
/// `K1 x^{g1} ≤ B ≤ K2 x^{g2}`.
fn upper_tail(c: &AssumptionConstants, q1: f64, q2: f64, omega: f64) -> Result<f64> {
    if !(c.gamma1 > 0.0 && c.k1 > 0.0) {
        return Err(Error::Certification("B must grow like a positive power at infinity".into()));
    }
    if !(c.gamma1 + q2 > c.gamma2 + q1) {
        return Err(Error::Certification(format!(
            "envelope exponents g1 = {}, g2 = {} too far apart for q = ({q1}, {q2})",
            c.gamma1, c.gamma2
        )));
    }
    let up = 2f64.powf(-q1) - 1.0;
    let down = 1.0 - 2f64.powf(-q2);
    let mut x = (2.0 * c.b1).max(2.0);
    for _ in 0..400 {
        let a = up * c.k2 * x.powf(c.gamma2 + q1);
        let b = (q2 + omega).max(0.0) * x.powf(q2);
        let n = down * c.k1 * x.powf(c.gamma1 + q2);
        if a + b <= n {
            return Ok(x);
        }
        x *= 2.0;
    }
    Err(Error::Certification("could not dominate the drift at infinity".into()))
}

/// `K = sup (ÃV + ωV)/ω` and `γ = 2^{−ω}`, so that `P_t V ≤ e^{−ωt} V + K`.
pub fn drift_constants(rate: &DivisionRate, q1: f64, q2: f64, omega: f64) -> Result<DriftConstants> {
    check_exponents(q1, q2, omega)?;
    let c = constants(rate)?;
    let (lo, hi) = (lower_tail(&c, q1, q2, omega)?, upper_tail(&c, q1, q2, omega)?);
    let g = |y: f64| {
        let x = y.exp();
        drift_generator(rate, q1, q2, x) + omega * lyapunov(q1, q2, x)
    };
    let (ylo, yhi) = (lo.ln(), hi.ln());
    let n = ((yhi - ylo) / LN_2 * GRID_PER_OCTAVE as f64).ceil() as usize;
    let h = (yhi - ylo) / n as f64;
    let vals: Vec<f64> = (0..=n).into_par_iter().map(|i| g(ylo + i as f64 * h)).collect();
    let (imax, mut best) = vals.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let mut argmax = ylo + imax as f64 * h;
    // golden-section refinement around the sampled peak
    let (mut a, mut b) = (argmax - h, argmax + h);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (u, v) = (b - r * (b - a), a + r * (b - a));
        let (gu, gv) = (g(u), g(v));
        for (y, gy) in [(u, gu), (v, gv)] {
            if gy > best {
                best = gy;
                argmax = y;
            }
        }
        if gu > gv {
            b = v;
        } else {
            a = u;
        }
    }
    if !best.is_finite() {
        return Err(Error::Numerical("drift functional is not finite on the grid".into()));
    }
    let k = best.max(0.0) / omega * (1.0 + 1e-9);
    Ok(DriftConstants { k, gamma: 2f64.powf(-omega), argmax: argmax.exp(), certified: (lo, hi) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovParams {
    pub q1: f64,
    pub q2: f64,
    pub omega: f64,
    pub k: f64,
    pub gamma: f64,
    pub r: f64,
}

impl LyapunovParams {
    /// Drift constants for `(q1, q2, ω)` and `R = r_factor · 2K/(1 − γ)`.
    pub fn new(rate: &DivisionRate, q1: f64, q2: f64, omega: f64, r_factor: f64) -> Result<Self> {
        if !(r_factor > 1.0) {
            return Err(Error::Parameter(format!("r_factor must exceed 1, got {r_factor}")));
        }
        let d = drift_constants(rate, q1, q2, omega)?;
        Self::with_radius(q1, q2, omega, d.k, d.gamma, r_factor * 2.0 * d.k / (1.0 - d.gamma))
    }

    pub fn defaults(rate: &DivisionRate) -> Result<Self> {
        Self::new(rate, DEFAULT_Q1, DEFAULT_Q2, -0.5 * DEFAULT_Q1, DEFAULT_R_FACTOR)
    }

    pub fn with_radius(q1: f64, q2: f64, omega: f64, k: f64, gamma: f64, r: f64) -> Result<Self> {
        check_exponents(q1, q2, omega)?;
        if !(gamma > 0.0 && gamma < 1.0) || !(k >= 0.0) {
            return Err(Error::Parameter(format!("need 0 < γ < 1 and K ≥ 0, got γ = {gamma}, K = {k}")));
        }
        if !(r > 2.0 * k / (1.0 - gamma)) {
            return Err(Error::Parameter(format!("R = {r} must exceed 2K/(1−γ) = {}", 2.0 * k / (1.0 - gamma))));
        }
        Ok(Self { q1, q2, omega, k, gamma, r })
    }

    pub fn v(&self, x: f64) -> f64 {
        lyapunov(self.q1, self.q2, x)
    }

    /// `w = φV`, i.e. exponents `r_i = 1 + q_i`.
    pub fn weight(&self) -> Result<WeightFunction> {
        WeightFunction::new(1.0 + self.q1, 1.0 + self.q2)
    }

    /// Minimizer of `V`.
    pub fn v_argmin(&self) -> f64 {
        (-self.q1 / self.q2).powf(1.0 / (self.q2 - self.q1))
    }

    pub fn v_min(&self) -> f64 {
        self.v(self.v_argmin())
    }

    /// Endpoints of `{V ≤ R}` in `(0, ∞)`.
    pub fn sublevel_interval(&self) -> Result<(f64, f64)> {
        let ystar = self.v_argmin().ln();
        if self.v(ystar.exp()) > self.r {
            return Err(Error::Parameter(format!("sub-level set {{V ≤ {}}} is empty", self.r)));
        }
        let root = |dir: f64| {
            let mut far = ystar + dir;
            while self.v(far.exp()) <= self.r {
                far += dir * (far - ystar).abs();
            }
            let (mut inside, mut outside) = (ystar, far);
            for _ in 0..200 {
                let mid = 0.5 * (inside + outside);
                if mid == inside || mid == outside {
                    break;
                }
                if self.v(mid.exp()) <= self.r {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            inside.exp()
        };
        Ok((root(-1.0), root(1.0)))
    }
}

/// Form of the `c_n` recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recursion {
    /// `c_{n+1} = c_n · min(η, s)`: a chain parked at the top must stay there
    /// each period, so its probability compounds.
    Product,
    /// `c_{n+1} = min(c_n η, s)`, kept for comparison.
    AsStated,
}

/// `ln c_0, …, ln c_n` from `ln η` and the log of the stay-at-top branch `s`.
pub fn c_sequence(log_eta: f64, log_second: f64, n: usize, form: Recursion) -> Vec<f64> {
    let mut c = vec![0.0];
    for _ in 0..n {
        let last = *c.last().expect("c_0 present");
        c.push(match form {
            Recursion::Product => last + log_eta.min(log_second),
            Recursion::AsStated => (last + log_eta).min(log_second),
        });
    }
    c
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minorization {
    /// Lattice base, or `None` for the bound uniform over all lattices.
    pub x_ref: Option<f64>,
    pub xi1: f64,
    pub xi2: f64,
    pub log_eta: f64,
    /// Log of `η² K1 ξ2^{g1}(2^{g1} − 1)/g1`, capped at 0.
    pub log_second: f64,
    pub log_c: Vec<f64>,
    pub n0: usize,
    pub log_alpha: f64,
    /// Lattice points of `S = {V ≤ R}`; empty for the uniform bound.
    pub sublevel: Vec<f64>,
}

impl Minorization {
    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn eta(&self) -> f64 {
        self.log_eta.exp()
    }
}

/// `∫_a^b B(x) dx`.
pub fn rate_integral(rate: &DivisionRate, a: f64, b: f64) -> f64 {
    let a = a.max(rate.support());
    if b <= a {
        return 0.0;
    }
    match rate.kind() {
        RateKind::Monomial { k, r } => k * (b.powf(r + 1.0) - a.powf(r + 1.0)) / (r + 1.0),
        RateKind::Constant { b0 } => b0 * (b - a),
        RateKind::Tabulated(_) => {
            // substitute x = e^y to keep the integrand tame across octaves
            gauss_kronrod(|y: f64| rate.value(y.exp()) * y.exp(), a.ln(), b.ln(), 0.0, 1e-12).value
        }
    }
}

/// `max(∫_{ξ1}^{2ξ2} B dx, ∫_{ξ1/2}^{2ξ2} B dz/z)`: survival bound for one
/// period started anywhere in `[ξ1/2, ξ2]`.
fn log_eta(rate: &DivisionRate, xi1: f64, xi2: f64) -> f64 {
    let dx = rate_integral(rate, xi1, 2.0 * xi2);
    let dlog = rate.hazard(0.5 * xi1, (4.0 * xi2 / xi1).ln());
    -dx.max(dlog)
}

fn log_second(c: &AssumptionConstants, log_eta: f64, xi2: f64) -> f64 {
    let g1 = c.gamma1;
    let s = c.k1.ln() + g1 * xi2.ln() + (2f64.powf(g1) - 1.0).ln() - g1.ln();
    (2.0 * log_eta + s).min(0.0)
}

fn check_b1(c: &AssumptionConstants, xi2: f64) -> Result<()> {
    if xi2 > c.b1 {
        Ok(())
    } else {
        Err(Error::Certification(format!("ξ2 = {xi2} does not exceed b1 = {}", c.b1)))
    }
}

/// Minorization of `P^{n0}` on `X = {x_ref 2^n}`:
/// `δ_y P^{n0} ≥ α δ_{ξ2}` for every lattice point `y` with `V(y) ≤ R`.
pub fn minorization(rate: &DivisionRate, params: &LyapunovParams, x_ref: f64) -> Result<Minorization> {
    if !(x_ref > 0.0 && x_ref.is_finite()) {
        return Err(Error::Parameter(format!("lattice base must be positive, got {x_ref}")));
    }
    let c = constants(rate)?;
    let (ylo, yhi) = params.sublevel_interval()?;
    let mut n_lo = (ylo / x_ref).log2().ceil() as i64;
    let mut n_hi = (yhi / x_ref).log2().floor() as i64;
    let point = |n: i64| x_ref * 2f64.powi(n as i32);
    while params.v(point(n_lo)) > params.r && n_lo <= n_hi {
        n_lo += 1;
    }
    while params.v(point(n_hi)) > params.r && n_hi >= n_lo {
        n_hi -= 1;
    }
    if n_lo > n_hi {
        return Err(Error::Parameter(format!("no lattice point of X_{x_ref} has V ≤ R = {}", params.r)));
    }
    let sublevel: Vec<f64> = (n_lo..=n_hi).map(point).collect();
    let xi1 = sublevel[0];
    let mut xi2 = *sublevel.last().expect("nonempty");
    while xi2 <= c.b1 {
        xi2 *= 2.0;
    }
    check_b1(&c, xi2)?;
    let n0 = (xi2 / xi1).log2().round() as usize + 1;
    let le = log_eta(rate, xi1, xi2);
    let ls = log_second(&c, le, xi2);
    let log_c = c_sequence(le, ls, n0, Recursion::Product);
    Ok(Minorization { x_ref: Some(x_ref), xi1, xi2, log_eta: le, log_second: ls, log_alpha: log_c[n0], log_c, n0, sublevel })
}

/// Minorization valid on every lattice at once: `ξ1` is the left end of
/// `{V ≤ R}`, `ξ2` bounds every lattice's top point from above, and the
/// stay-at-top branch uses the smallest possible top point.
pub fn minorization_uniform(rate: &DivisionRate, params: &LyapunovParams) -> Result<Minorization> {
    let c = constants(rate)?;
    let (ylo, yhi) = params.sublevel_interval()?;
    if yhi < 2.0 * ylo {
        return Err(Error::Parameter(format!("{{V ≤ {}}} is too narrow to meet every lattice", params.r)));
    }
    let top_min = (0.5 * yhi).max(c.b1 * (1.0 + f64::EPSILON));
    let xi1 = ylo;
    let xi2 = 2.0 * yhi.max(c.b1);
    check_b1(&c, top_min)?;
    let n0 = (xi2 / xi1).log2().floor() as usize + 1;
    let le = log_eta(rate, xi1, xi2);
    let ls = log_second(&c, le, top_min);
    let log_c = c_sequence(le, ls, n0, Recursion::Product);
    Ok(Minorization { x_ref: None, xi1, xi2, log_eta: le, log_second: ls, log_alpha: log_c[n0], log_c, n0, sublevel: Vec::new() })
}

/// Contraction constants of one chain step, in logs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteBound {
    /// `ln(1 − ϱ)`.
    pub log_gap: f64,
    /// `ln β` for the norm `∫(1 + βV) d|μ|`; infinite in the Doeblin case.
    pub log_beta: f64,
    /// `ln C_d` with `C_d = 1 + 1/(β V_min)`.
    pub log_cd: f64,
}

impl DiscreteBound {
    pub fn rho(&self) -> f64 {
        1.0 - self.log_gap.exp()
    }
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// `ϱ = max(1 − (α − α0), (2 + Rβγ0)/(2 + Rβ))` with `α0 = θα`, `β = α0/K`
/// and `γ0 = γ + 2K/R + κ(1 − γ − 2K/R)`, for a chain with
/// `PV ≤ γV + K` and `inf_{V ≤ R} δ_y P ≥ α ν`. With `K = 0` the chain is
/// Doeblin and `ϱ = 1 − (1 − θ)α` in total variation.
pub fn discrete_bound(gamma: f64, k: f64, r: f64, log_alpha: f64, v_min: f64, theta: f64, kappa: f64) -> Result<DiscreteBound> {
    if !(theta > 0.0 && theta < 1.0 && kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Parameter(format!("θ = {theta}, κ = {kappa} must lie in (0, 1)")));
    }
    if !(log_alpha <= 0.0) || log_alpha == f64::NEG_INFINITY {
        return Err(Error::Certification(format!("α = exp({log_alpha}) outside (0, 1]")));
    }
    let gap1 = log_alpha + (1.0 - theta).ln();
    if k == 0.0 {
        return Ok(DiscreteBound { log_gap: gap1, log_beta: f64::INFINITY, log_cd: 0.0 });
    }
    let s = 2.0 * k / r;
    if !(gamma + s < 1.0) {
        return Err(Error::Certification(format!("γ + 2K/R = {} is not below 1", gamma + s)));
    }
    let one_minus_gamma0 = (1.0 - kappa) * (1.0 - gamma - s);
    let log_beta = theta.ln() + log_alpha - k.ln();
    let log_rb = r.ln() + log_beta;
    let gap2 = log_rb + one_minus_gamma0.ln() - ln_add_exp(2f64.ln(), log_rb);
    let log_gap = gap1.min(gap2);
    let log_cd = ln_add_exp(0.0, -log_beta - v_min.ln());
    Ok(DiscreteBound { log_gap, log_beta, log_cd })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarrisCertificate {
    pub params: LyapunovParams,
    pub minorization: Minorization,
    pub theta: f64,
    pub kappa: f64,
    /// Drift of the `n0`-period chain: `γ^{n0}` and `K(1 − γ^{n0})/(1 − γ)`.
    pub gamma_n0: f64,
    pub k_n0: f64,
    pub discrete: DiscreteBound,
    /// `ln C` with `C = (1 + K) C_d / ϱ`.
    pub log_c: f64,
    /// `ln a` with `a = −ln ϱ/(n0 log 2)`.
    pub log_a: f64,
}

/// `ln(−ln(1 − e^{g}))`, accurate when `e^g` underflows.
fn log_neg_log1m(g: f64) -> f64 {
    let gap = g.exp();
    if gap < 1e-8 {
        g + 0.5 * gap
    } else {
        (-(-gap).ln_1p()).ln()
    }
}

/// Harris certificate for `P^{n0}` and its continuous-time form
/// `‖e^{−t}μ_t − ρ_t‖_w ≤ C e^{−at} ‖μ0 − ρ0‖_w`.
pub fn certificate(params: &LyapunovParams, minor: &Minorization) -> Result<HarrisCertificate> {
    certificate_with(params, minor, DEFAULT_THETA, DEFAULT_KAPPA)
}

pub fn certificate_with(params: &LyapunovParams, minor: &Minorization, theta: f64, kappa: f64) -> Result<HarrisCertificate> {
    let n0 = minor.n0 as i32;
    let gamma_n0 = params.gamma.powi(n0);
    let k_n0 = params.k * (1.0 - gamma_n0) / (1.0 - params.gamma);
    let discrete = discrete_bound(gamma_n0, k_n0, params.r, minor.log_alpha, params.v_min(), theta, kappa)?;
    if !(discrete.log_gap < 0.0) || discrete.log_gap == f64::NEG_INFINITY {
        return Err(Error::Certification(format!(
            "ϱ = 1 − exp({:.6e}) is not in (0, 1) (α = exp({:.6e}), n0 = {})",
            discrete.log_gap, minor.log_alpha, minor.n0
        )));
    }
    let log_neg_ln_rho = log_neg_log1m(discrete.log_gap);
    let log_c = (1.0 + params.k).ln() + discrete.log_cd + log_neg_ln_rho.exp();
    let log_a = log_neg_ln_rho - (minor.n0 as f64 * LN_2).ln();
    Ok(HarrisCertificate { params: *params, minorization: minor.clone(), theta, kappa, gamma_n0, k_n0, discrete, log_c, log_a })
}

impl HarrisCertificate {
    pub fn rho(&self) -> f64 {
        self.discrete.rho()
    }

    pub fn log_gap(&self) -> f64 {
        self.discrete.log_gap
    }

    pub fn alpha(&self) -> f64 {
        self.minorization.alpha()
    }

    pub fn a(&self) -> f64 {
        self.log_a.exp()
    }

    pub fn c(&self) -> f64 {
        self.log_c.exp()
    }

    /// `ln ϱ`, computed without forming `ϱ`.
    pub fn ln_rho(&self) -> f64 {
        -log_neg_log1m(self.discrete.log_gap).exp()
    }

    /// `ln(C ϱ^{m/n0})`.
    pub fn log_bound(&self, periods: usize) -> f64 {
        self.log_c + periods as f64 / self.minorization.n0 as f64 * self.ln_rho()
    }

    /// All validity conditions, checked in log form.
    pub fn is_valid(&self) -> bool {
        let m = &self.minorization;
        m.log_alpha <= 0.0
            && m.log_alpha > f64::NEG_INFINITY
            && self.log_gap() < 0.0
            && self.log_gap() > f64::NEG_INFINITY
            && self.log_c >= 0.0
            && self.log_a.is_finite()
    }
}

impl fmt::Display for HarrisCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        let m = &self.minorization;
        let line = |f: &mut fmt::Formatter<'_>, k: &str, v: String| writeln!(f, "{k} = {v}");
        line(f, "q1", format!("{}", p.q1))?;
        line(f, "q2", format!("{}", p.q2))?;
        line(f, "omega", format!("{}", p.omega))?;
        line(f, "K", format!("{:.16e}", p.k))?;
        line(f, "gamma", format!("{:.16e}", p.gamma))?;
        line(f, "R", format!("{:.16e}", p.r))?;
        line(f, "x_ref", m.x_ref.map_or("uniform".to_string(), |x| format!("{x}")))?;
        line(f, "xi1", format!("{:.16e}", m.xi1))?;
        line(f, "xi2", format!("{:.16e}", m.xi2))?;
        line(f, "log_eta", format!("{:.16e}", m.log_eta))?;
        line(f, "n0", format!("{}", m.n0))?;
        line(f, "log_alpha", format!("{:.16e}", m.log_alpha))?;
        line(f, "x_n0", format!("{:.16e}", m.xi2))?;
        line(f, "theta", format!("{}", self.theta))?;
        line(f, "kappa", format!("{}", self.kappa))?;
        line(f, "log_cd", format!("{:.16e}", self.discrete.log_cd))?;
        line(f, "log_one_minus_rho", format!("{:.16e}", self.log_gap()))?;
        line(f, "rho", format!("{:.16e}", self.rho()))?;
        line(f, "log_C", format!("{:.16e}", self.log_c))?;
        line(f, "log_a", format!("{:.16e}", self.log_a))?;
        line(f, "a", format!("{:.16e}", self.a()))?;
        line(f, "valid", format!("{}", self.is_valid()))
    }
}

/// Runs the whole pipeline for one lattice.
pub fn certify(rate: &DivisionRate, params: &LyapunovParams, x_ref: Option<f64>) -> Result<HarrisCertificate> {
    let minor = match x_ref {
        Some(x) => minorization(rate, params, x)?,
        None => minorization_uniform(rate, params)?,
    };
    certificate(params, &minor)
}

/// Certificates for `R = f · 2K/(1 − γ)` over the given factors, in order.
pub fn sweep_radius(
    rate: &DivisionRate,
    q1: f64,
    q2: f64,
    omega: f64,
    factors: &[f64],
    x_ref: Option<f64>,
) -> Result<Vec<(f64, Result<HarrisCertificate>)>> {
    let d = drift_constants(rate, q1, q2, omega)?;
    Ok(factors
        .par_iter()
        .map(|&f| {
            let cert = LyapunovParams::with_radius(q1, q2, omega, d.k, d.gamma, f * 2.0 * d.k / (1.0 - d.gamma))
                .and_then(|p| certify(rate, &p, x_ref));
            (f, cert)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRow {
    pub period: usize,
    pub measured: f64,
    /// `ln(C ϱ^{m/n0} ‖μ0 − ρ0‖_w)`.
    pub log_bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub initial: f64,
    /// Per-period geometric decay fitted to the measured distances.
    pub rate_emp: f64,
    /// `ln(1 − rate_emp^{n0})`, comparable with `ln(1 − ϱ)`.
    pub log_gap_emp: f64,
    /// Smallest `ln(bound) − ln(measured)` over the rows.
    pub log_margin: f64,
}

impl ValidationReport {
    /// `ϱ_emp ≤ ϱ` for the `n0`-period chain.
    pub fn rate_within(&self, cert: &HarrisCertificate) -> bool {
        self.log_gap_emp >= cert.log_gap()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "m,measured,bound,log_bound")?;
        for r in &self.rows {
            writeln!(out, "{},{:.16e},{:.16e},{:.16e}", r.period, r.measured, r.log_bound.exp(), r.log_bound)?;
        }
        Ok(())
    }
}

/// Iterates the period map from `comb` until successive iterates are within
/// `tol` in `w`, returning the fixed point `ρ_0`.
pub fn limit_comb(comb: &DyadicComb, rate: &DivisionRate, w: &WeightFunction, tol: f64) -> Result<DyadicComb> {
    let mut rho = comb.clone();
    let mut d = f64::INFINITY;
    for _ in 0..crate::spectral::INVARIANT_MAX_ITER {
        let next = period_map(&rho, rate, VALIDATION_TOL)?;
        d = next.to_atomic().difference(&rho.to_atomic()).weighted_tv_norm(w);
        rho = next;
        if d < tol {
            return Ok(rho);
        }
    }
    Err(Error::Divergence { iterations: crate::spectral::INVARIANT_MAX_ITER, distance: d })
}

fn on_lattice(x: f64, x_ref: f64) -> bool {
    let n = (x / x_ref).log2().round();
    (x_ref * 2f64.powi(n as i32) - x).abs() <= 1e-14 * x
}

/// [`validate_measure`] for `μ0 = δ_{x0}`.
pub fn validate_certificate(cert: &HarrisCertificate, rate: &DivisionRate, x0: f64, m_max: usize) -> Result<ValidationReport> {
    validate_measure(cert, rate, &AtomicMeasure::dirac(x0)?, m_max)
}

/// Evolves `μ0 ≥ 0` and its limit `ρ0` over `m_max` periods and checks
/// `‖e^{−t}μ_t − ρ_t‖_w ≤ C ϱ^{m/n0} ‖μ0 − ρ0‖_w` at every `t = m log 2`.
pub fn validate_measure(cert: &HarrisCertificate, rate: &DivisionRate, mu0: &AtomicMeasure, m_max: usize) -> Result<ValidationReport> {
    if mu0.atoms().iter().any(|a| a.1 < 0.0) || mu0.is_empty() {
        return Err(Error::Parameter("initial measure must be nonnegative and nonempty".into()));
    }
    if let Some(x_ref) = cert.minorization.x_ref {
        if let Some(&(x, _)) = mu0.atoms().iter().find(|a| !on_lattice(a.0, x_ref)) {
            return Err(Error::Parameter(format!("atom at {x} is off the certified lattice X_{x_ref}")));
        }
    }
    let w = cert.params.weight()?;
    let scale = mu0.weighted_tv_norm(&w);
    let mu = LatticeMeasure::from_atomic(mu0)?;
    let limits = mu
        .positive
        .par_iter()
        .map(|c| limit_comb(c, rate, &w, VALIDATION_TOL * scale))
        .collect::<Result<Vec<_>>>()?;
    let rho = LatticeMeasure::from_parts(limits, Vec::new()).to_atomic();
    let mut state = mu;
    let mut rows = Vec::with_capacity(m_max + 1);
    let mut initial = 0.0;
    for m in 0..=m_max {
        if m > 0 {
            state = state.period_map(rate, VALIDATION_TOL)?;
        }
        let measured = state.to_atomic().difference(&rho).weighted_tv_norm(&w);
        if m == 0 {
            initial = measured;
        }
        let log_bound = cert.log_bound(m) + initial.ln();
        if measured > 0.0 && measured.ln() > log_bound {
            return Err(Error::Refuted { period: m, measured, bound: log_bound.exp() });
        }
        rows.push(ValidationRow { period: m, measured, log_bound });
    }
    let log_margin = rows
        .iter()
        .filter(|r| r.measured > 0.0)
        .map(|r| r.log_bound - r.measured.ln())
        .fold(f64::INFINITY, f64::min);
    let rate_emp = fit_rate(&rows, initial);
    let log_gap_emp = (-(cert.minorization.n0 as f64 * rate_emp.ln()).exp_m1()).ln();
    Ok(ValidationReport { rows, initial, rate_emp, log_gap_emp, log_margin })
}

/// Least-squares slope of `ln(measured)` over the rows well above round-off.
fn fit_rate(rows: &[ValidationRow], initial: f64) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .take_while(|r| r.measured > 1e-7 * initial)
        .map(|r| (r.period as f64, r.measured.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    (sxy / sxx).exp()
}

/// Mass that `δ_y P^n` puts on each lattice point, from the comb evolution.
pub fn chain_distribution(rate: &DivisionRate, y: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    let mut comb = DyadicComb::dirac(y)?;
    for _ in 0..n {
        comb = period_map(&comb, rate, VALIDATION_TOL)?;
    }
    Ok(comb.to_atomic().atoms().iter().map(|&(x, w)| (x, w * x / y)).collect())
}
