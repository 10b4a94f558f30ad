//! Division-rate models, cumulative hazards along the exponential flow, and
//! the assumption audit gating the spectral and Harris modules.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::LogGrid;

/// Envelope constants: `B(x) <= K0 x^g0` for `x < b0`, and
/// `K1 x^g1 <= B(x) <= K2 x^g2` for `x > b1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumptionConstants {
    pub b0: f64,
    pub gamma0: f64,
    pub k0: f64,
    pub b1: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Samples of `B` at strictly increasing `x`, interpolated linearly in `log x`
/// and extended by power laws with the declared exponents.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    log_x: Vec<f64>,
    values: Vec<f64>,
    exp_lo: f64,
    exp_hi: f64,
}

impl RateTable {
    pub fn new(xs: &[f64], values: &[f64], exp_lo: f64, exp_hi: f64) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(Error::Parameter(
                "rate table needs at least two (x, B) rows of equal length".into(),
            ));
        }
        if xs.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Domain("rate table positions must be positive".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("rate table x must be strictly increasing".into()));
        }
        if values.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::Domain("rate table values must be finite and nonnegative".into()));
        }
        if !exp_lo.is_finite() || !exp_hi.is_finite() {
            return Err(Error::Parameter("extrapolation exponents must be finite".into()));
        }
        Ok(Self {
            log_x: xs.iter().map(|x| x.ln()).collect(),
            values: values.to_vec(),
            exp_lo,
            exp_hi,
        })
    }

    /// Reads a two-column `x, B(x)` CSV. Lines starting with `#` and a
    /// non-numeric header row are skipped.
    pub fn from_csv(path: &Path, exp_lo: f64, exp_hi: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut bs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(Error::Parse(format!("{}:{}: expected two columns", path.display(), lineno + 1)));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(v)) => {
                    xs.push(x);
                    bs.push(v);
                }
                _ if xs.is_empty() => continue,
                _ => {
                    return Err(Error::Parse(format!("{}:{}: bad number", path.display(), lineno + 1)))
                }
            }
        }
        Self::new(&xs, &bs, exp_lo, exp_hi)
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.exp_lo, self.exp_hi)
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.log_x.iter().zip(&self.values).map(|(l, v)| (l.exp(), *v))
    }

    fn value_at_log(&self, u: f64) -> f64 {
        let n = self.log_x.len();
        if u <= self.log_x[0] {
            return self.values[0] * (self.exp_lo * (u - self.log_x[0])).exp();
        }
        if u >= self.log_x[n - 1] {
            return self.values[n - 1] * (self.exp_hi * (u - self.log_x[n - 1])).exp();
        }
        let i = self.log_x.partition_point(|&l| l <= u) - 1;
        let (u0, u1) = (self.log_x[i], self.log_x[i + 1]);
        let w = (u - u0) / (u1 - u0);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Exact integral of `B(e^u)` over `u` in `[a, b]`: linear pieces between
    /// knots, exponentials outside.
    fn integral_log(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let n = self.log_x.len();
        let mut total = 0.0;
        let (first, last) = (self.log_x[0], self.log_x[n - 1]);
        if a < first {
            let hi = b.min(first);
            total += power_piece(self.values[0], self.exp_lo, a - first, hi - first);
        }
        if b > last {
            let lo = a.max(last);
            total += power_piece(self.values[n - 1], self.exp_hi, lo - last, b - last);
        }
        let (lo, hi) = (a.max(first), b.min(last));
        if hi > lo {
            let mut i = self.log_x.partition_point(|&l| l <= lo).saturating_sub(1).min(n - 2);
            let mut u = lo;
            while u < hi && i < n - 1 {
                let seg_end = self.log_x[i + 1].min(hi);
                if seg_end > u {
                    total += 0.5 * (seg_end - u) * (self.value_at_log(u) + self.value_at_log(seg_end));
                }
                u = seg_end;
                i += 1;
            }
        }
        total
    }
}

// ∫_{a}^{b} v e^{p s} ds
fn power_piece(v: f64, p: f64, a: f64, b: f64) -> f64 {
    if (p * (b - a)).abs() < 1e-12 {
        v * (p * a).exp() * (b - a)
    } else {
        v * (p * a).exp() * (p * (b - a)).exp_m1() / p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateKind {
    Monomial { k: f64, r: f64 },
    Constant { b0: f64 },
    Tabulated(RateTable),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivisionRate {
    kind: RateKind,
    support: f64,
    constants: Option<AssumptionConstants>,
}

impl fmt::Display for DivisionRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RateKind::Monomial { k, r } => write!(f, "monomial:K={k},r={r}")?,
            RateKind::Constant { b0 } => write!(f, "constant:B0={b0}")?,
            RateKind::Tabulated(t) => write!(f, "tabulated:{} knots", t.log_x.len())?,
        }
        if self.support > 0.0 {
            write!(f, ",b={}", self.support)?;
        }
        Ok(())
    }
}

impl DivisionRate {
    pub fn monomial(k: f64, r: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) || !(r > 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!("monomial rate needs K > 0 and r > 0 (got K={k}, r={r})")));
        }
        Ok(Self { kind: RateKind::Monomial { k, r }, support: 0.0, constants: None })
    }

    pub fn constant(b0: f64) -> Result<Self> {
        if !(b0 >= 0.0 && b0.is_finite()) {
            return Err(Error::Parameter(format!("constant rate needs B0 >= 0 (got {b0})")));
        }
        Ok(Self { kind: RateKind::Constant { b0 }, support: 0.0, constants: None })
    }

    pub fn zero() -> Self {
        Self { kind: RateKind::Constant { b0: 0.0 }, support: 0.0, constants: None }
    }

    pub fn tabulated(table: RateTable) -> Self {
        Self { kind: RateKind::Tabulated(table), support: 0.0, constants: None }
    }

    /// Sets the support lower bound `b`: the rate vanishes below it.
    pub fn with_support(mut self, b: f64) -> Result<Self> {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::Parameter(format!("support bound must be >= 0 (got {b})")));
        }
        self.support = b;
        Ok(self)
    }

    pub fn with_constants(mut self, c: AssumptionConstants) -> Self {
        self.constants = Some(c);
        self
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, RateKind::Constant { b0 } if b0 == 0.0)
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("rate evaluated at non-positive x = {x}")));
        }
        Ok(self.value(x))
    }

    /// Unchecked evaluation for hot loops; `x` must be positive.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if x < self.support {
            return 0.0;
        }
        match &self.kind {
            RateKind::Monomial { k, r } => {
                if *r == 1.0 {
                    k * x
                } else if *r == 2.0 {
                    k * x * x
                } else if *r == 3.0 {
                    k * x * x * x
                } else {
                    k * x.powf(*r)
                }
            }
            RateKind::Constant { b0 } => *b0,
            RateKind::Tabulated(t) => t.value_at_log(x.ln()),
        }
    }

    /// `∫_0^t B(x e^s) ds`.
    pub fn cumulative_hazard(&self, x: f64, t: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("hazard at non-positive x = {x}")));
        }
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("hazard over negative time t = {t}")));
        }
        Ok(self.hazard(x, t))
    }

    /// Unchecked hazard; `x > 0`, `t >= 0`.
    pub fn hazard(&self, x: f64, t: f64) -> f64 {
        let s0 = if self.support > x { (self.support / x).ln() } else { 0.0 };
        if t <= s0 {
            return 0.0;
        }
        match &self.kind {
            RateKind::Monomial { k, r } => {
                let y = if s0 > 0.0 { self.support } else { x };
                k * y.powf(*r) * (r * (t - s0)).exp_m1() / r
            }
            RateKind::Constant { b0 } => b0 * (t - s0),
            RateKind::Tabulated(tab) => {
                let lx = x.ln();
                tab.integral_log(lx + s0, lx + t)
            }
        }
    }

    /// Smallest `τ` with `hazard(x, τ) = e`; infinite when the hazard stays below `e`.
    pub fn inverse_hazard(&self, x: f64, e: f64) -> f64 {
        if e <= 0.0 {
            return 0.0;
        }
        let s0 = if self.support > x { (self.support / x).ln() } else { 0.0 };
        match &self.kind {
            RateKind::Monomial { k, r } => {
                let y = if s0 > 0.0 { self.support } else { x };
                s0 + (r * e / (k * y.powf(*r))).ln_1p() / r
            }
            RateKind::Constant { b0 } => {
                if *b0 == 0.0 {
                    f64::INFINITY
                } else {
                    s0 + e / b0
                }
            }
            RateKind::Tabulated(_) => {
                let mut hi = s0 + 1.0;
                while self.hazard(x, hi) < e {
                    hi *= 2.0;
                    if hi > 1e6 {
                        return f64::INFINITY;
                    }
                }
                let mut lo = s0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.hazard(x, mid) < e {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }

    /// Declared constants, or the exact ones implied by the model when it
    /// has a power-law form.
    pub fn assumption_constants(&self) -> Option<AssumptionConstants> {
        if self.constants.is_some() {
            return self.constants;
        }
        match &self.kind {
            RateKind::Monomial { k, r } => Some(AssumptionConstants {
                b0: 1.0,
                gamma0: *r,
                k0: *k,
                b1: self.support.max(f64::MIN_POSITIVE),
                gamma1: *r,
                gamma2: *r,
                k1: *k,
                k2: *k,
            }),
            RateKind::Constant { .. } => None,
            RateKind::Tabulated(t) => {
                let n = t.log_x.len();
                let (x_first, x_last) = (t.log_x[0].exp(), t.log_x[n - 1].exp());
                let (v_first, v_last) = (t.values[0], t.values[n - 1]);
                if t.exp_lo <= 0.0 || t.exp_hi <= 0.0 || v_last <= 0.0 {
                    return None;
                }
                let k_hi = v_last / x_last.powf(t.exp_hi);
                Some(AssumptionConstants {
                    b0: x_first,
                    gamma0: t.exp_lo,
                    k0: (v_first / x_first.powf(t.exp_lo)).max(f64::MIN_POSITIVE),
                    b1: x_last.max(self.support),
                    gamma1: t.exp_hi,
                    gamma2: t.exp_hi,
                    k1: k_hi,
                    k2: k_hi,
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clause {
    LocallyIntegrable,
    Support,
    NearZero,
    Growth,
    ContinuousBounded,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Clause::LocallyIntegrable => "locally integrable",
            Clause::Support => "supp B = [b, inf)",
            Clause::NearZero => "B <= K0 x^g0 near 0",
            Clause::Growth => "K1 x^g1 <= B <= K2 x^g2 at inf",
            Clause::ContinuousBounded => "continuous, bounded near 0",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClauseCheck {
    pub clause: Clause,
    pub passed: bool,
    pub witness: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<ClauseCheck>,
    pub constants: Option<AssumptionConstants>,
}

impl AssumptionReport {
    fn clause(&self, c: Clause) -> Option<&ClauseCheck> {
        self.checks.iter().find(|k| k.clause == c)
    }

    /// Growth/decay hypothesis needed for the Perron problem.
    pub fn hyp_b(&self) -> bool {
        [Clause::LocallyIntegrable, Clause::Support, Clause::NearZero, Clause::Growth]
            .iter()
            .all(|c| self.clause(*c).is_some_and(|k| k.passed))
    }

    /// Continuity hypothesis needed for measure solutions.
    pub fn hyp_bsol(&self) -> bool {
        self.clause(Clause::ContinuousBounded).is_some_and(|k| k.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ClauseCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check(clause: Clause, passed: bool, witness: Option<f64>, detail: impl Into<String>) -> ClauseCheck {
    ClauseCheck { clause, passed, witness, detail: detail.into() }
}

/// Whether `c x^p <= C x^q` holds on the open interval `(lo, hi)`; returns a
/// witness otherwise. `hi` may be infinite and `lo` zero.
fn power_dominated(c: f64, p: f64, cap: f64, q: f64, lo: f64, hi: f64) -> std::result::Result<(), f64> {
    // ratio c x^p / (C x^q) = (c/C) x^(p-q) is monotone, so endpoints decide.
    let ratio = |x: f64| (c / cap) * x.powf(p - q);
    let tol = 1.0 + 1e-12;
    let d = p - q;
    if d > 0.0 {
        if hi.is_infinite() {
            return Err(f64::MAX.sqrt());
        }
        if ratio(hi) > tol {
            return Err(hi);
        }
    } else if d < 0.0 {
        if lo == 0.0 {
            return Err(f64::MIN_POSITIVE.sqrt());
        }
        if ratio(lo) > tol {
            return Err(lo);
        }
    } else if c > cap * tol {
        return Err(if lo > 0.0 { lo } else { 1.0 });
    }
    Ok(())
}

/// Checks the standing hypotheses clause by clause.
pub fn audit_assumptions(rate: &DivisionRate, probe: &LogGrid) -> Result<AssumptionReport> {
    if probe.x_min() > 1e-4 || probe.x_max() < 1e4 {
        return Err(Error::Parameter("probe grid must span at least [1e-4, 1e4]".into()));
    }
    let constants = rate.assumption_constants();
    let b = rate.support();
    let mut checks = Vec::new();
    match rate.kind() {
        RateKind::Monomial { k, r } => {
            checks.push(check(Clause::LocallyIntegrable, true, None, "power law"));
            checks.push(check(Clause::Support, true, None, format!("positive on [{b}, inf)")));
            checks.push(near_zero_exact(constants.as_ref(), *k, *r, b));
            checks.push(growth_exact(constants.as_ref(), *k, *r, b));
            checks.push(if b > 0.0 {
                check(Clause::ContinuousBounded, false, Some(b), "jump at the support bound")
            } else {
                check(Clause::ContinuousBounded, true, None, "continuous power law")
            });
        }
        RateKind::Constant { b0 } => {
            checks.push(check(Clause::LocallyIntegrable, true, None, "constant"));
            checks.push(if *b0 > 0.0 {
                check(Clause::Support, true, None, format!("positive on [{b}, inf)"))
            } else {
                check(Clause::Support, false, Some(1.0), "rate vanishes identically")
            });
            checks.push(match &constants {
                Some(c) if *b0 > 0.0 => match power_dominated(*b0, 0.0, c.k0, c.gamma0, b, c.b0) {
                    Ok(()) => check(Clause::NearZero, true, None, "declared bound holds"),
                    Err(w) => check(Clause::NearZero, false, Some(w), "constant exceeds K0 x^g0"),
                },
                _ if *b0 == 0.0 => check(Clause::NearZero, true, None, "vanishing rate"),
                _ => check(Clause::NearZero, false, Some(f64::MIN_POSITIVE.sqrt()), "positive constant near 0"),
            });
            checks.push(check(Clause::Growth, false, Some(f64::MAX.sqrt()), "no polynomial growth at infinity"));
            checks.push(if b > 0.0 && *b0 > 0.0 {
                check(Clause::ContinuousBounded, false, Some(b), "jump at the support bound")
            } else {
                check(Clause::ContinuousBounded, true, None, "constant")
            });
        }
        RateKind::Tabulated(_) => checks.extend(audit_numeric(rate, constants.as_ref(), probe)),
    }
    Ok(AssumptionReport { checks, constants })
}

fn near_zero_exact(c: Option<&AssumptionConstants>, k: f64, r: f64, b: f64) -> ClauseCheck {
    let Some(c) = c else {
        return check(Clause::NearZero, false, None, "constants missing");
    };
    if !(c.b0 > 0.0 && c.gamma0 > 0.0 && c.k0 > 0.0) {
        return check(Clause::NearZero, false, None, "b0, g0, K0 must be positive");
    }
    if b >= c.b0 {
        return check(Clause::NearZero, true, None, "rate vanishes below b0");
    }
    match power_dominated(k, r, c.k0, c.gamma0, b, c.b0) {
        Ok(()) => check(Clause::NearZero, true, None, format!("K x^{r} <= {} x^{}", c.k0, c.gamma0)),
        Err(w) => check(Clause::NearZero, false, Some(w), "bound violated"),
    }
}

fn growth_exact(c: Option<&AssumptionConstants>, k: f64, r: f64, b: f64) -> ClauseCheck {
    let Some(c) = c else {
        return check(Clause::Growth, false, None, "constants missing");
    };
    if !(c.b1 > 0.0 && c.gamma1 > 0.0 && c.gamma2 > 0.0 && c.k1 > 0.0 && c.k2 > 0.0) {
        return check(Clause::Growth, false, None, "b1, g1, g2, K1, K2 must be positive");
    }
    if c.b1 < b {
        return check(Clause::Growth, false, Some(0.5 * (c.b1 + b)), "rate vanishes above b1");
    }
    if let Err(w) = power_dominated(c.k1, c.gamma1, k, r, c.b1, f64::INFINITY) {
        return check(Clause::Growth, false, Some(w), "lower envelope violated");
    }
    if let Err(w) = power_dominated(k, r, c.k2, c.gamma2, c.b1, f64::INFINITY) {
        return check(Clause::Growth, false, Some(w), "upper envelope violated");
    }
    check(
        Clause::Growth,
        true,
        None,
        format!("g1={} g2={} K1={} K2={}", c.gamma1, c.gamma2, c.k1, c.k2),
    )
}

fn audit_numeric(rate: &DivisionRate, c: Option<&AssumptionConstants>, probe: &LogGrid) -> Vec<ClauseCheck> {
    let xs: Vec<f64> = (0..probe.len()).map(|j| probe.node(j)).collect();
    let b = rate.support();
    let mut out = Vec::new();

    let bad_hazard = xs.iter().find(|&&x| !rate.hazard(x, std::f64::consts::LN_2).is_finite());
    out.push(match bad_hazard {
        Some(&x) => check(Clause::LocallyIntegrable, false, Some(x), "hazard not finite"),
        None => check(Clause::LocallyIntegrable, true, None, "finite hazard on probes"),
    });

    let below = xs.iter().find(|&&x| x < b && rate.value(x) != 0.0);
    let knots: Vec<f64> = match rate.kind() {
        RateKind::Tabulated(t) => t.knots().map(|(x, _)| x).collect(),
        _ => Vec::new(),
    };
    let above = xs.iter().chain(&knots).find(|&&x| x > b && rate.value(x) <= 0.0);
    out.push(match (below, above) {
        (Some(&x), _) => check(Clause::Support, false, Some(x), "nonzero below b"),
        (_, Some(&x)) => check(Clause::Support, false, Some(x), "zero inside [b, inf)"),
        _ => check(Clause::Support, true, None, "positive above b on probes"),
    });

    out.push(match c {
        None => check(Clause::NearZero, false, None, "constants missing"),
        Some(c) => {
            let viol = xs
                .iter()
                .find(|&&x| x < c.b0 && rate.value(x) > c.k0 * x.powf(c.gamma0) * (1.0 + 1e-9));
            match viol {
                Some(&x) => check(Clause::NearZero, false, Some(x), "bound violated on probe"),
                None => check(Clause::NearZero, true, None, "bound holds on probes"),
            }
        }
    });

    out.push(match c {
        None => check(Clause::Growth, false, None, "constants missing"),
        Some(c) => {
            let viol = xs.iter().find(|&&x| {
                let v = rate.value(x);
                x > c.b1
                    && (v < c.k1 * x.powf(c.gamma1) * (1.0 - 1e-9)
                        || v > c.k2 * x.powf(c.gamma2) * (1.0 + 1e-9))
            });
            match viol {
                Some(&x) => check(Clause::Growth, false, Some(x), "envelope violated on probe"),
                None => check(Clause::Growth, true, None, "envelopes hold on probes"),
            }
        }
    });

    let (exp_lo, _) = match rate.kind() {
        RateKind::Tabulated(t) => t.exponents(),
        _ => (0.0, 0.0),
    };
    out.push(if b > 0.0 && rate.value(b) > 0.0 {
        check(Clause::ContinuousBounded, false, Some(b), "jump at the support bound")
    } else if exp_lo < 0.0 && rate.value(xs[0]) > 0.0 {
        check(Clause::ContinuousBounded, false, Some(xs[0]), "unbounded near 0")
    } else {
        check(Clause::ContinuousBounded, true, None, "piecewise linear in log x")
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn evaluate_examples() {
        assert_eq!(DivisionRate::monomial(1.0, 2.0).unwrap().evaluate(3.0).unwrap(), 9.0);
        assert_eq!(DivisionRate::constant(0.7).unwrap().evaluate(10.0).unwrap(), 0.7);
        assert_eq!(DivisionRate::monomial(1.0, 1.0).unwrap().evaluate(0.5).unwrap(), 0.5);
        assert!(DivisionRate::constant(1.0).unwrap().evaluate(0.0).is_err());
        assert!(DivisionRate::constant(1.0).unwrap().evaluate(-2.0).is_err());
    }

    #[test]
    fn support_bound_zeroes_rate() {
        let b = DivisionRate::monomial(1.0, 1.0).unwrap().with_support(2.0).unwrap();
        assert_eq!(b.value(1.5), 0.0);
        assert_eq!(b.value(3.0), 3.0);
        // hazard from 1 over log 4: integrand vanishes until x e^s = 2
        assert_relative_eq!(b.hazard(1.0, 4f64.ln()), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn hazard_examples() {
        let b = DivisionRate::monomial(1.0, 1.0).unwrap();
        assert_relative_eq!(b.cumulative_hazard(1.0, std::f64::consts::LN_2).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(b.cumulative_hazard(3.0, 0.0).unwrap(), 0.0);
        let c = DivisionRate::constant(0.3).unwrap();
        assert_relative_eq!(c.cumulative_hazard(17.0, 2.5).unwrap(), 0.75, max_relative = 1e-15);
    }

    #[test]
    fn inverse_hazard_monomial() {
        let b = DivisionRate::monomial(1.0, 1.0).unwrap();
        assert_relative_eq!(b.inverse_hazard(1.0, 1.0), std::f64::consts::LN_2, max_relative = 1e-15);
        assert_eq!(b.inverse_hazard(1.0, 0.0), 0.0);
        assert!(DivisionRate::zero().inverse_hazard(1.0, 1.0).is_infinite());
    }

    fn sample_table() -> RateTable {
        let xs: Vec<f64> = (0..=20).map(|i| 2f64.powf(i as f64 * 0.5 - 5.0)).collect();
        let bs: Vec<f64> = xs.iter().map(|x| x * x).collect();
        RateTable::new(&xs, &bs, 2.0, 2.0).unwrap()
    }

    #[test]
    fn tabulated_matches_power_law_outside_and_interpolates_inside() {
        let b = DivisionRate::tabulated(sample_table());
        assert_relative_eq!(b.value(1e-3), 1e-6, max_relative = 1e-12);
        assert_relative_eq!(b.value(1e3), 1e6, max_relative = 1e-12);
        // knot
        assert_relative_eq!(b.value(1.0), 1.0, max_relative = 1e-14);
        let mid = 2f64.powf(0.25);
        let expected = 0.5 * (1.0 + 2.0);
        assert_relative_eq!(b.value(mid), expected, max_relative = 1e-14);
    }

    #[test]
    fn tabulated_hazard_agrees_with_fine_trapezoid() {
        let b = DivisionRate::tabulated(sample_table());
        let (x, t) = (0.01, 8.0);
        let n = 400_000;
        let h = t / n as f64;
        let fine: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * b.value(x * (i as f64 * h).exp())
            })
            .sum::<f64>()
            * h;
        assert_relative_eq!(b.hazard(x, t), fine, max_relative = 1e-8);
        let tau = b.inverse_hazard(x, 3.0);
        assert_relative_eq!(b.hazard(x, tau), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn audit_examples() {
        let probe = LogGrid::new(1e-5, 34, 4).unwrap();
        let rep = audit_assumptions(&DivisionRate::monomial(1.0, 1.0).unwrap(), &probe).unwrap();
        assert!(rep.hyp_b() && rep.hyp_bsol());
        let c = rep.constants.unwrap();
        assert_eq!((c.gamma1, c.gamma2, c.k1, c.k2), (1.0, 1.0, 1.0, 1.0));

        let rep = audit_assumptions(&DivisionRate::constant(0.5).unwrap(), &probe).unwrap();
        assert!(rep.hyp_bsol());
        assert!(!rep.hyp_b());
        let growth = rep.checks.iter().find(|c| c.clause == Clause::Growth).unwrap();
        assert!(!growth.passed && growth.witness.is_some());

        let declared = AssumptionConstants {
            b0: 1.0,
            gamma0: 3.0,
            k0: 1.0,
            b1: 1.0,
            gamma1: 3.0,
            gamma2: 3.0,
            k1: 1.0,
            k2: 1.0,
        };
        let b = DivisionRate::monomial(1.0, 3.0).unwrap().with_constants(declared);
        let rep = audit_assumptions(&b, &probe).unwrap();
        assert!(rep.checks.iter().find(|c| c.clause == Clause::NearZero).unwrap().passed);

        let wrong = AssumptionConstants { gamma0: 4.0, ..declared };
        let rep = audit_assumptions(&DivisionRate::monomial(1.0, 3.0).unwrap().with_constants(wrong), &probe).unwrap();
        let nz = rep.checks.iter().find(|c| c.clause == Clause::NearZero).unwrap();
        assert!(!nz.passed && nz.witness.is_some());
    }

    #[test]
    fn audit_tabulated_flags_noisy_zero() {
        let probe = LogGrid::new(1e-5, 34, 8).unwrap();
        let rep = audit_assumptions(&DivisionRate::tabulated(sample_table()), &probe).unwrap();
        assert!(rep.hyp_b(), "{:?}", rep.failures().collect::<Vec<_>>());
        let xs = [0.1, 1.0, 2.0, 4.0];
        let bs = [0.01, 0.0, 4.0, 16.0];
        let noisy = DivisionRate::tabulated(RateTable::new(&xs, &bs, 2.0, 2.0).unwrap());
        let rep = audit_assumptions(&noisy, &probe).unwrap();
        let s = rep.checks.iter().find(|c| c.clause == Clause::Support).unwrap();
        assert!(!s.passed);
    }

    #[test]
    fn audit_monomial_is_grid_independent() {
        let b = DivisionRate::monomial(2.0, 1.5).unwrap();
        let a = audit_assumptions(&b, &LogGrid::new(1e-5, 40, 2).unwrap()).unwrap();
        let c = audit_assumptions(&b, &LogGrid::new(1e-6, 50, 16).unwrap()).unwrap();
        assert_eq!(a, c);
    }

    proptest! {
        #[test]
        fn monomial_hazard_closed_form(x in 1e-3f64..1e2, t in 0.0f64..3.0, r in 0.2f64..3.0) {
            let b = DivisionRate::monomial(1.3, r).unwrap();
            let exact = 1.3 * x.powf(r) * ((r * t).exp() - 1.0) / r;
            let got = b.hazard(x, t);
            prop_assert!((got - exact).abs() <= 1e-13 * exact.max(1e-300) + 1e-300);
        }

        #[test]
        fn hazard_monotone(x in 1e-3f64..1e2, t in 0.0f64..3.0, dt in 0.0f64..1.0, dx in 1.0f64..2.0) {
            for b in [DivisionRate::monomial(1.0, 2.0).unwrap(), DivisionRate::tabulated(sample_table())] {
                prop_assert!(b.hazard(x, t + dt) >= b.hazard(x, t));
                prop_assert!(b.hazard(x * dx, t) >= b.hazard(x, t) * (1.0 - 1e-12));
            }
        }

        #[test]
        fn inverse_hazard_roundtrip(x in 1e-2f64..1e1, e in 1e-6f64..20.0) {
            for b in [DivisionRate::monomial(1.0, 1.0).unwrap(), DivisionRate::tabulated(sample_table())] {
                let tau = b.inverse_hazard(x, e);
                prop_assert!((b.hazard(x, tau) - e).abs() <= 1e-9 * e);
            }
        }

        #[test]
        fn rate_nonnegative(x in 1e-8f64..1e8) {
            prop_assert!(DivisionRate::tabulated(sample_table()).value(x) >= 0.0);
            prop_assert!(DivisionRate::monomial(1.0, 2.5).unwrap().value(x) >= 0.0);
        }
    }
}
