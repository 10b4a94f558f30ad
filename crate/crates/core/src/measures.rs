//! Weighted signed measures and exact measure solutions on dyadic lattices.
//!
//! A Dirac mass stays a Dirac comb under the flow: starting from `δ_{x0}` the
//! solution at time `t` lives on `{x0·e^t·2^{-n}}`. [`DyadicComb`] integrates
//! the resulting lattice ODE
//! `a_n' = −B(x_n) a_n + 2 B(x_{n−1}) a_{n−1}` with an embedded Runge–Kutta
//! 4(5) pair.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::GridFunction;
use crate::rates::DivisionRate;

pub const DEFAULT_COMB_TOL: f64 = 1e-10;

const MAX_STEPS: usize = 2_000_000;

/// `w(x) = x^{r1} + x^{r2}` with `r1 < 1 < r2`, or the φ-weight `w(x) = x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightFunction {
    Phi,
    Power { r1: f64, r2: f64 },
}

impl WeightFunction {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 < 1.0 && 1.0 < r2) || !r1.is_finite() || !r2.is_finite() {
            return Err(Error::Parameter(format!("weight exponents need r1 < 1 < r2, got ({r1}, {r2})")));
        }
        Ok(WeightFunction::Power { r1, r2 })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WeightFunction::Phi => x,
            WeightFunction::Power { r1, r2 } => x.powf(r1) + x.powf(r2),
        }
    }
}

/// Finite signed sum of Dirac masses, sorted by position with duplicates merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut v: Vec<(f64, f64)> = Vec::new();
        for (x, w) in atoms {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Domain(format!("atom position {x} must be positive and finite")));
            }
            if !w.is_finite() {
                return Err(Error::Domain(format!("atom weight {w} at {x} is not finite")));
            }
            v.push((x, w));
        }
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (x, w) in v {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        merged.retain(|a| a.1 != 0.0);
        Ok(Self { atoms: merged })
    }

    pub fn dirac(x: f64) -> Result<Self> {
        Self::new([(x, 1.0)])
    }

    /// Midpoint rule in `log x` for `density(x) dx` on `[a, b]` with `n` atoms.
    pub fn density_quadrature(a: f64, b: f64, n: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        if !(0.0 < a && a < b) || n == 0 {
            return Err(Error::Parameter(format!("density quadrature needs 0 < a < b and n > 0, got [{a}, {b}], n={n}")));
        }
        let h = (b / a).ln() / n as f64;
        Self::new((0..n).map(|i| {
            let x = a * ((i as f64 + 0.5) * h).exp();
            (x, density(x) * x * h)
        }))
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positive_part(&self) -> Self {
        Self { atoms: self.atoms.iter().copied().filter(|a| a.1 > 0.0).collect() }
    }

    pub fn negative_part(&self) -> Self {
        Self { atoms: self.atoms.iter().filter(|a| a.1 < 0.0).map(|&(x, w)| (x, -w)).collect() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self { atoms: self.atoms.iter().map(|&(x, w)| (x, c * w)).collect() };
        out.atoms.retain(|a| a.1 != 0.0);
        out
    }

    /// `self − other`.
    pub fn difference(&self, other: &Self) -> Self {
        let atoms = self.atoms.iter().copied().chain(other.atoms.iter().map(|&(x, w)| (x, -w)));
        Self::new(atoms).expect("atoms already validated")
    }

    /// `μ(f) = Σ w_i f(x_i)`.
    pub fn pair(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * f(x)).sum()
    }

    /// Pairing with a sampled function; atoms off the nodes are interpolated.
    pub fn pair_grid(&self, g: &GridFunction) -> Result<f64> {
        let mut s = 0.0;
        for &(x, w) in &self.atoms {
            s += w * grid_value(g, x)?;
        }
        Ok(s)
    }

    /// `∫ w d|μ|`.
    pub fn weighted_tv_norm(&self, w: &WeightFunction) -> f64 {
        self.atoms.iter().map(|&(x, a)| a.abs() * w.eval(x)).sum()
    }
}

pub fn weighted_tv_norm(mu: &AtomicMeasure, w: &WeightFunction) -> f64 {
    mu.weighted_tv_norm(w)
}

fn grid_value(g: &GridFunction, x: f64) -> Result<f64> {
    match g.grid().index_of(x) {
        Some(j) if g.window().contains(j) => Ok(g.value(j)),
        _ => g.interpolate_smooth(x),
    }
}

/// Atomic measure on the lattice `{x0·e^t·2^{-n}}`; level `n` runs over
/// `first..first + a.len()` and may be negative after period maps.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicComb {
    x0: f64,
    t: f64,
    first: i64,
    a: Vec<f64>,
    budget: f64,
}

impl DyadicComb {
    pub fn new(x0: f64, t: f64, first: i64, a: Vec<f64>) -> Result<Self> {
        if !(x0 > 0.0) || !x0.is_finite() {
            return Err(Error::Domain(format!("comb base {x0} must be positive")));
        }
        if !t.is_finite() {
            return Err(Error::Domain(format!("comb time {t} is not finite")));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("comb weights must be finite".into()));
        }
        Ok(Self { x0, t, first, a, budget: 0.0 })
    }

    pub fn dirac(x0: f64) -> Result<Self> {
        Self::new(x0, 0.0, 0, vec![1.0])
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn first(&self) -> i64 {
        self.first
    }

    pub fn weights(&self) -> &[f64] {
        &self.a
    }

    /// Accumulated φ-mass of dropped levels, carried forward in time.
    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Weight at level `n` (zero outside the stored range).
    pub fn weight(&self, n: i64) -> f64 {
        let i = n - self.first;
        if i < 0 {
            0.0
        } else {
            self.a.get(i as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn position(&self, n: i64) -> f64 {
        self.x0 * self.t.exp() * (-(n as f64)).exp2()
    }

    /// `(n, x_n, a_n)` for every stored level.
    pub fn levels(&self) -> impl Iterator<Item = (i64, f64, f64)> + '_ {
        let base = self.x0 * self.t.exp();
        self.a.iter().enumerate().map(move |(i, &w)| {
            let n = self.first + i as i64;
            (n, base * (-(n as f64)).exp2(), w)
        })
    }

    pub fn phi_mass(&self) -> f64 {
        self.levels().map(|(_, x, w)| w * x).sum()
    }

    pub fn pair(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.levels().map(|(_, x, w)| w * f(x)).sum()
    }

    pub fn pair_grid(&self, g: &GridFunction) -> Result<f64> {
        self.to_atomic().pair_grid(g)
    }

    pub fn to_atomic(&self) -> AtomicMeasure {
        AtomicMeasure::new(self.levels().map(|(_, x, w)| (x, w))).expect("comb positions are positive")
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.a.iter_mut().for_each(|v| *v *= c);
        out.budget *= c.abs();
        out
    }

    /// Evolves by `dt` (see [`evolve_comb`]).
    pub fn evolve(&self, rate: &DivisionRate, dt: f64, tol: f64) -> Result<Self> {
        evolve_comb(self, rate, dt, tol)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# x0={:.16e}", self.x0)?;
        writeln!(out, "# t={:.16e}", self.t)?;
        writeln!(out, "# budget={:.16e}", self.budget)?;
        writeln!(out, "n,position,weight")?;
        for (n, x, w) in self.levels() {
            writeln!(out, "{n},{x:.16e},{w:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let (mut x0, mut t, mut budget) = (None, None, 0.0);
        let mut rows: Vec<(i64, f64)> = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad header value `{v}`")))?;
                    match k.trim() {
                        "x0" => x0 = Some(v),
                        "t" => t = Some(v),
                        "budget" => budget = v,
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() || line.starts_with("n,") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("expected n,position,weight in `{line}`")));
            }
            let n: i64 = cols[0].parse().map_err(|_| Error::Parse(format!("bad level `{}`", cols[0])))?;
            let w: f64 = cols[2].parse().map_err(|_| Error::Parse(format!("bad weight `{}`", cols[2])))?;
            rows.push((n, w));
        }
        let x0 = x0.ok_or_else(|| Error::Parse("missing `# x0=` header".into()))?;
        let t = t.ok_or_else(|| Error::Parse("missing `# t=` header".into()))?;
        let first = rows.iter().map(|r| r.0).min().unwrap_or(0);
        let last = rows.iter().map(|r| r.0).max().unwrap_or(-1);
        let mut a = vec![0.0; (last - first + 1).max(0) as usize];
        for (n, w) in rows {
            a[(n - first) as usize] += w;
        }
        let mut comb = Self::new(x0, t, first, a)?;
        comb.budget = budget;
        Ok(comb)
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Lattice<'a> {
    rate: &'a DivisionRate,
    x0: f64,
    first: i64,
}

impl Lattice<'_> {
    // The last level does not divide, which keeps Σ 2^{-n} a_n exactly
    // conserved.
    fn rhs(&self, s: f64, a: &[f64], b: &mut [f64], out: &mut [f64]) {
        let base = self.x0 * s.exp();
        for (i, bi) in b.iter_mut().enumerate() {
            *bi = self.rate.value(base * (-((self.first + i as i64) as f64)).exp2());
        }
        let n = a.len();
        for i in 0..n {
            let loss = if i + 1 < n { b[i] * a[i] } else { 0.0 };
            let gain = if i > 0 { 2.0 * b[i - 1] * a[i - 1] } else { 0.0 };
            out[i] = gain - loss;
        }
    }
}

/// Integrates the lattice ODE from `comb.time()` over `dt`.
///
/// Top levels whose φ-mass falls below `1e-3·tol` of the total are dropped
/// into the budget; the bottom level grows on demand.
pub fn evolve_comb(comb: &DyadicComb, rate: &DivisionRate, dt: f64, tol: f64) -> Result<DyadicComb> {
    Ok(evolve_through(comb, rate, &[dt], tol)?.pop().expect("one snapshot"))
}

/// Snapshots after each of the increasing durations in `marks`.
pub fn evolve_through(comb: &DyadicComb, rate: &DivisionRate, marks: &[f64], tol: f64) -> Result<Vec<DyadicComb>> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("comb tolerance {tol} must be positive")));
    }
    if marks.iter().any(|m| !(*m >= 0.0)) || marks.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("evolution times must be nonnegative and increasing".into()));
    }
    let mut c = comb.clone();
    let start = c.t;
    let mut out = Vec::with_capacity(marks.len());
    let mut h = 1e-3;
    let mut steps = 0usize;
    for &mark in marks {
        let target = start + mark;
        if rate.is_zero() {
            c.budget *= (target - c.t).exp();
            c.t = target;
            out.push(trimmed(&c));
            continue;
        }
        ensure_bottom(&mut c, tol);
        while c.t < target {
            let rest = target - c.t;
            let last = h >= rest;
            let hs = if last { rest } else { h };
            let (next, err) = dopri_step(&c, rate, hs, tol);
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Numerical(format!("comb evolution exceeded {MAX_STEPS} steps")));
            }
            if !err.is_finite() {
                return Err(Error::Numerical("non-finite comb weights".into()));
            }
            if err <= 1.0 {
                c.a = next;
                c.t = if last { target } else { c.t + hs };
                c.budget *= hs.exp();
                prune_top(&mut c, tol)?;
                ensure_bottom(&mut c, tol);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (hs * factor).max(1e-14);
            if last && err <= 1.0 {
                // do not let a short final step shrink the next interval's step
                h = h.max(1e-3);
            }
        }
        out.push(trimmed(&c));
    }
    Ok(out)
}

fn dopri_step(c: &DyadicComb, rate: &DivisionRate, h: f64, tol: f64) -> (Vec<f64>, f64) {
    let n = c.a.len();
    let lat = Lattice { rate, x0: c.x0, first: c.first };
    let mut k = vec![vec![0.0; n]; 7];
    let mut b = vec![0.0; n];
    let mut y = vec![0.0; n];
    lat.rhs(c.t, &c.a, &mut b, &mut k[0]);
    for s in 1..7 {
        for i in 0..n {
            let mut acc = c.a[i];
            for (l, kl) in k.iter().enumerate().take(s) {
                acc += h * A[s][l] * kl[i];
            }
            y[i] = acc;
        }
        lat.rhs(c.t + C[s] * h, &y, &mut b, &mut k[s]);
    }
    // y now holds the fifth-order solution (stage 7 is evaluated there).
    let base = c.x0 * c.t.exp();
    let mass: f64 = c.levels().map(|(_, x, w)| (w * x).abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut err = 0.0f64;
    for i in 0..n {
        let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
        let x = base * (-((c.first + i as i64) as f64)).exp2();
        let sc = tol * (c.a[i].abs().max(y[i].abs()) + mass / x);
        err = err.max(e.abs() / sc);
    }
    (y, err)
}

fn prune_top(c: &mut DyadicComb, tol: f64) -> Result<()> {
    let mass: f64 = c.levels().map(|(_, x, w)| (w * x).abs()).sum();
    let floor = 1e-3 * tol * mass;
    let mut drop = 0;
    while drop + 1 < c.a.len() {
        let x = c.position(c.first + drop as i64);
        let m = c.a[drop].abs() * x;
        if m >= floor {
            break;
        }
        c.budget += m;
        drop += 1;
    }
    if drop > 0 {
        c.a.drain(..drop);
        c.first += drop as i64;
    }
    let allowance = 10.0 * tol * (mass + c.budget);
    if c.budget > allowance {
        return Err(Error::Truncation { budget: c.budget, allowance });
    }
    Ok(())
}

fn ensure_bottom(c: &mut DyadicComb, tol: f64) {
    let mass: f64 = c.levels().map(|(_, x, w)| (w * x).abs()).sum();
    let floor = 1e-3 * tol * mass;
    // the two lowest levels stay below the floor so the non-dividing last
    // level never holds appreciable mass
    loop {
        let len = c.a.len();
        let negligible = |i: usize| c.a[i] == 0.0 || c.a[i].abs() * c.position(c.first + i as i64) < floor;
        if len >= 3 && negligible(len - 1) && negligible(len - 2) {
            break;
        }
        c.a.push(0.0);
    }
}

fn trimmed(c: &DyadicComb) -> DyadicComb {
    let mut c = c.clone();
    while c.a.len() > 1 && c.a.last() == Some(&0.0) {
        c.a.pop();
    }
    c
}

/// One period of the rescaled flow: evolve over `log 2`, halve the weights
/// and shift levels by one so the atoms again sit on `{x0·e^t·2^{-n}}`.
pub fn period_map(comb: &DyadicComb, rate: &DivisionRate, tol: f64) -> Result<DyadicComb> {
    let mut out = evolve_comb(comb, rate, LN_2, tol)?.scaled(0.5);
    out.t = comb.t;
    out.first -= 1;
    Ok(out)
}

/// A signed atomic measure split into combs on distinct dyadic lattices.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeMeasure {
    pub positive: Vec<DyadicComb>,
    pub negative: Vec<DyadicComb>,
}

fn lattice_key(x: f64) -> Result<(u64, i64)> {
    if !x.is_normal() {
        return Err(Error::Domain(format!("atom position {x} is not a normal float")));
    }
    let bits = x.to_bits();
    Ok((bits & ((1u64 << 52) - 1), ((bits >> 52) & 0x7ff) as i64))
}

fn group(mu: &AtomicMeasure) -> Result<Vec<DyadicComb>> {
    let mut groups: BTreeMap<u64, Vec<(i64, f64, f64)>> = BTreeMap::new();
    for &(x, w) in mu.atoms() {
        let (mantissa, exp) = lattice_key(x)?;
        groups.entry(mantissa).or_default().push((exp, x, w));
    }
    groups
        .into_values()
        .map(|atoms| {
            let (top, x0, _) = atoms.iter().copied().max_by_key(|a| a.0).expect("nonempty group");
            let depth = atoms.iter().map(|a| top - a.0).max().unwrap_or(0) as usize;
            let mut a = vec![0.0; depth + 1];
            for (e, _, w) in atoms {
                a[(top - e) as usize] += w;
            }
            DyadicComb::new(x0, 0.0, 0, a)
        })
        .collect()
}

impl LatticeMeasure {
    /// Groups atoms whose positions differ by powers of two onto one comb.
    pub fn from_atomic(mu: &AtomicMeasure) -> Result<Self> {
        Ok(Self { positive: group(&mu.positive_part())?, negative: group(&mu.negative_part())? })
    }

    pub fn from_parts(positive: Vec<DyadicComb>, negative: Vec<DyadicComb>) -> Self {
        Self { positive, negative }
    }

    fn map_parallel(&self, f: impl Fn(&DyadicComb) -> Result<DyadicComb> + Sync) -> Result<Self> {
        let positive = self.positive.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
        let negative = self.negative.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
        Ok(Self { positive, negative })
    }

    pub fn evolve(&self, rate: &DivisionRate, dt: f64, tol: f64) -> Result<Self> {
        self.map_parallel(|c| evolve_comb(c, rate, dt, tol))
    }

    pub fn period_map(&self, rate: &DivisionRate, tol: f64) -> Result<Self> {
        self.map_parallel(|c| period_map(c, rate, tol))
    }

    /// Snapshots after each duration in `marks`.
    pub fn evolve_through(&self, rate: &DivisionRate, marks: &[f64], tol: f64) -> Result<Vec<Self>> {
        let run = |cs: &Vec<DyadicComb>| -> Result<Vec<Vec<DyadicComb>>> {
            cs.par_iter().map(|c| evolve_through(c, rate, marks, tol)).collect()
        };
        let (pos, neg) = (run(&self.positive)?, run(&self.negative)?);
        Ok((0..marks.len())
            .map(|i| Self {
                positive: pos.iter().map(|s| s[i].clone()).collect(),
                negative: neg.iter().map(|s| s[i].clone()).collect(),
            })
            .collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            positive: self.positive.iter().map(|k| k.scaled(c)).collect(),
            negative: self.negative.iter().map(|k| k.scaled(c)).collect(),
        }
    }

    pub fn to_atomic(&self) -> AtomicMeasure {
        let pos = self.positive.iter().flat_map(|c| c.levels().map(|(_, x, w)| (x, w)).collect::<Vec<_>>());
        let neg = self.negative.iter().flat_map(|c| c.levels().map(|(_, x, w)| (x, -w)).collect::<Vec<_>>());
        AtomicMeasure::new(pos.chain(neg)).expect("comb positions are positive")
    }

    pub fn pair(&self, f: impl Fn(f64) -> f64) -> f64 {
        let p: f64 = self.positive.iter().map(|c| c.pair(&f)).sum();
        let n: f64 = self.negative.iter().map(|c| c.pair(&f)).sum();
        p - n
    }

    pub fn phi_mass(&self) -> f64 {
        self.pair(|x| x)
    }

    pub fn budget(&self) -> f64 {
        self.positive.iter().chain(&self.negative).map(|c| c.budget()).sum()
    }

    pub fn weighted_tv_norm(&self, w: &WeightFunction) -> f64 {
        self.to_atomic().weighted_tv_norm(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::LogGrid;
    use approx::assert_relative_eq;

    #[test]
    fn tv_norm_examples() {
        let mu = AtomicMeasure::new([(1.0, 1.0), (2.0, -1.0)]).unwrap();
        let w = WeightFunction::new(0.5, 2.0).unwrap();
        assert_relative_eq!(mu.weighted_tv_norm(&w), 2.0 + 2f64.sqrt() + 4.0, max_relative = 1e-15);
        assert!((weighted_tv_norm(&mu, &w) - 7.41421).abs() < 1e-5);
        let zero = AtomicMeasure::new([(1.0, 1.0), (1.0, -1.0)]).unwrap();
        assert_eq!(zero.weighted_tv_norm(&w), 0.0);
        assert_eq!(AtomicMeasure::dirac(3.5).unwrap().weighted_tv_norm(&WeightFunction::Phi), 3.5);
        assert!(WeightFunction::new(1.0, 2.0).is_err());
    }

    #[test]
    fn pair_examples() {
        let d = AtomicMeasure::dirac(1.7).unwrap();
        assert_eq!(d.pair(|x| x * x), 1.7 * 1.7);
        let mu = AtomicMeasure::density_quadrature(1.0, 2.0, 512, |x| x.powi(-2)).unwrap();
        assert!((mu.pair(|x| x) - LN_2).abs() < 1e-8);
        for k in 1..=3 {
            let w = 2.0 * std::f64::consts::PI * k as f64 / LN_2;
            assert!(mu.pair(|x| x * (w * x.ln()).cos()).abs() < 1e-8);
            assert!(mu.pair(|x| x * (w * x.ln()).sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn pair_grid_window() {
        let grid = LogGrid::new(0.25, 4, 16).unwrap();
        let g = GridFunction::sample(&grid, |x| x * x);
        let mu = AtomicMeasure::new([(1.0, 2.0), (1.3, -1.0)]).unwrap();
        assert!((mu.pair_grid(&g).unwrap() - (2.0 - 1.69)).abs() < 1e-6);
        assert!(AtomicMeasure::dirac(100.0).unwrap().pair_grid(&g).is_err());
    }

    #[test]
    fn constant_rate_two_levels() {
        let b = DivisionRate::constant(1.0).unwrap();
        let c = evolve_comb(&DyadicComb::dirac(1.0).unwrap(), &b, 1.0, 1e-12).unwrap();
        let e = (-1f64).exp();
        assert_relative_eq!(c.weight(0), e, max_relative = 1e-8);
        assert_relative_eq!(c.weight(1), 2.0 * e, max_relative = 1e-8);
        assert!((c.weight(0) - 0.367879).abs() < 1e-6 && (c.weight(1) - 0.735759).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_transports() {
        let c = evolve_comb(&DyadicComb::dirac(0.7).unwrap(), &DivisionRate::zero(), 2.0, 1e-10).unwrap();
        assert_eq!(c.weights(), &[1.0]);
        assert_relative_eq!(c.position(0), 0.7 * 2f64.exp(), max_relative = 1e-15);
        let p = period_map(&DyadicComb::dirac(0.7).unwrap(), &DivisionRate::zero(), 1e-10).unwrap();
        assert_eq!((p.first(), p.weights()), (-1, &[0.5][..]));
        assert_relative_eq!(p.position(-1), 1.4, max_relative = 1e-15);
    }

    #[test]
    fn balance_law() {
        for rate in [DivisionRate::monomial(1.0, 1.0).unwrap(), DivisionRate::monomial(1.0, 2.0).unwrap()] {
            let c0 = DyadicComb::dirac(1.0).unwrap();
            let t = 3.0 * LN_2;
            let c = evolve_comb(&c0, &rate, t, 1e-10).unwrap();
            let m = c.phi_mass() + c.budget();
            assert!((m - t.exp()).abs() <= 10.0 * 1e-10 * t.exp(), "{rate}: {m}");
            assert!(c.weights().iter().all(|&w| w >= -1e-10));
            let p = period_map(&c0, &rate, 1e-10).unwrap();
            assert!((p.phi_mass() + p.budget() - 1.0).abs() <= 1e-9);
            // atoms stay on the lattice of x0
            for (_, x, _) in p.levels() {
                let l = x.log2();
                assert!((l - l.round()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grouping_by_mantissa() {
        let mu = AtomicMeasure::new([(1.0, 1.0), (0.25, 2.0), (3.0, 1.0), (0.5, -1.0)]).unwrap();
        let lm = LatticeMeasure::from_atomic(&mu).unwrap();
        assert_eq!(lm.positive.len(), 2);
        assert_eq!(lm.negative.len(), 1);
        assert_eq!(lm.to_atomic(), mu);
        assert_eq!(lm.pair(|x| x), mu.pair(|x| x));
    }

    #[test]
    fn csv_roundtrip() {
        let rate = DivisionRate::monomial(1.0, 2.0).unwrap();
        let c = evolve_comb(&DyadicComb::dirac(1.0).unwrap(), &rate, 1.0, 1e-10).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = DyadicComb::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }
}
