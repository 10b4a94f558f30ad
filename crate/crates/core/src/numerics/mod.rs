//! Log-uniform dyadic grids, sampled functions, monotone interpolation and
//! trapezoid quadrature in `log x`.

pub mod quad;

use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Nodes `x_j = x_min·2^(j/m)` for `j = 0..=octaves·m`.
#[derive(Clone, Debug)]
pub struct LogGrid {
    x_min: f64,
    octaves: usize,
    per_octave: usize,
    nodes: Arc<[f64]>,
}

impl PartialEq for LogGrid {
    fn eq(&self, other: &Self) -> bool {
        self.x_min == other.x_min && self.octaves == other.octaves && self.per_octave == other.per_octave
    }
}

impl LogGrid {
    pub fn new(x_min: f64, octaves: usize, per_octave: usize) -> Result<Self> {
        if !(x_min > 0.0 && x_min.is_finite()) {
            return Err(Error::Parameter(format!("grid x_min must be positive (got {x_min})")));
        }
        if octaves == 0 || per_octave == 0 {
            return Err(Error::Parameter("grid needs at least one octave and one point per octave".into()));
        }
        // Octave factors are exact powers of two so x_{j-m} = x_j / 2 bit for bit.
        let frac: Vec<f64> = (0..per_octave).map(|r| x_min * (r as f64 / per_octave as f64).exp2()).collect();
        let n = octaves * per_octave + 1;
        let nodes: Vec<f64> = (0..n)
            .map(|j| {
                let (q, r) = (j / per_octave, j % per_octave);
                frac[r] * 2f64.powi(q as i32)
            })
            .collect();
        if !nodes[n - 1].is_finite() {
            return Err(Error::Parameter("grid overflows f64".into()));
        }
        Ok(Self { x_min, octaves, per_octave, nodes: nodes.into() })
    }

    /// `x_min = 2^-20`, 40 octaves, 64 points per octave.
    pub fn desk() -> Self {
        Self::new(2f64.powi(-20), 40, 64).expect("valid default grid")
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn octaves(&self) -> usize {
        self.octaves
    }

    pub fn per_octave(&self) -> usize {
        self.per_octave
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Spacing in `log x`.
    pub fn log_step(&self) -> f64 {
        LN_2 / self.per_octave as f64
    }

    /// Continuous index of `x`: `m·log2(x / x_min)`.
    pub fn position(&self, x: f64) -> f64 {
        (x / self.x_min).log2() * self.per_octave as f64
    }

    /// Index of the node equal to `x` up to relative `1e-12`.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let p = self.position(x).round();
        if p < 0.0 || p as usize >= self.len() {
            return None;
        }
        let j = p as usize;
        ((self.nodes[j] - x).abs() <= 1e-12 * x).then_some(j)
    }
}

/// Inclusive index range; empty when `lo > hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub lo: usize,
    pub hi: usize,
}

impl Window {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.hi - self.lo + 1
        }
    }

    pub fn contains(&self, j: usize) -> bool {
        j >= self.lo && j <= self.hi
    }

    pub fn intersect(&self, other: &Window) -> Window {
        Window { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) }
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        if self.is_empty() {
            // an empty inclusive range
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        self.lo..=self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Trapezoid,
    /// One Richardson step `(4 T_h - T_2h) / 3`.
    Richardson,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Magnitude of the log-variable integrand at the window ends.
    pub tail: f64,
    pub tail_warning: bool,
}

/// Default bound on the end-point integrand before a tail warning is raised.
pub const TAIL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: LogGrid,
    values: Vec<f64>,
    window: Window,
}

impl GridFunction {
    pub fn new(grid: LogGrid, values: Vec<f64>, window: Window) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !window.is_empty() && window.hi >= grid.len() {
            return Err(Error::Parameter("window exceeds grid".into()));
        }
        Ok(Self { grid, values, window })
    }

    pub fn sample(grid: &LogGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        let window = Window::new(0, grid.len() - 1);
        Self { grid: grid.clone(), values, window }
    }

    /// Samples `1_[a,b](x)·f(x)` where `a`, `b` are nodes, taking half the
    /// value at the two edges.
    pub fn sample_indicator(grid: &LogGrid, a: f64, b: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let (Some(ja), Some(jb)) = (grid.index_of(a), grid.index_of(b)) else {
            return Err(Error::Parameter("indicator edges must be grid nodes".into()));
        };
        let mut g = Self::sample(grid, |_| 0.0);
        for j in ja..=jb {
            let w = if j == ja || j == jb { 0.5 } else { 1.0 };
            g.values[j] = w * f(grid.node(j));
        }
        Ok(g)
    }

    pub fn grid(&self) -> &LogGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Narrows the window; it can never grow.
    pub fn restrict(&mut self, w: Window) {
        self.window = self.window.intersect(&w);
    }

    pub fn x(&self, j: usize) -> f64 {
        self.grid.node(j)
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn window_span(&self) -> Option<(f64, f64)> {
        (!self.window.is_empty()).then(|| (self.grid.node(self.window.lo), self.grid.node(self.window.hi)))
    }

    /// Pointwise map over all nodes, keeping the window.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self.grid.nodes().iter().zip(&self.values).map(|(&x, &v)| f(x, v)).collect();
        Self { grid: self.grid.clone(), values, window: self.window }
    }

    /// Combines two functions on the same grid over the intersected window.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Parameter("grid functions live on different grids".into()));
        }
        let values = (0..self.values.len())
            .map(|j| f(self.grid.node(j), self.values[j], other.values[j]))
            .collect();
        Ok(Self { grid: self.grid.clone(), values, window: self.window.intersect(&other.window) })
    }

    fn window_error(&self, x: f64) -> Error {
        match self.window_span() {
            Some((lo, hi)) => Error::Window { x, lo, hi },
            None => Error::Window { x, lo: f64::NAN, hi: f64::NAN },
        }
    }

    /// Monotone piecewise-cubic (Fritsch–Butland slopes) interpolation in `log x`.
    pub fn interpolate(&self, x: f64) -> Result<f64> {
        let Some((xlo, xhi)) = self.window_span() else {
            return Err(self.window_error(x));
        };
        if !(x >= xlo * (1.0 - 1e-14) && x <= xhi * (1.0 + 1e-14)) {
            return Err(self.window_error(x));
        }
        let Window { lo, hi } = self.window;
        if lo == hi {
            return Ok(self.values[lo]);
        }
        let p = self.grid.position(x);
        let mut j = (p.floor().max(0.0) as usize).clamp(lo, hi - 1);
        let mut t = p - j as f64;
        if t < 0.0 {
            t = 0.0;
        }
        if t > 1.0 {
            t = 1.0;
        }
        if (self.grid.node(j) - x).abs() <= 1e-15 * x {
            return Ok(self.values[j]);
        }
        if (self.grid.node(j + 1) - x).abs() <= 1e-15 * x {
            j += 1;
            return Ok(self.values[j]);
        }
        let v0 = self.values[j];
        let v1 = self.values[j + 1];
        let d0 = self.slope(j);
        let d1 = self.slope(j + 1);
        Ok(hermite(v0, v1, d0, d1, t))
    }

    /// Six-point Lagrange interpolation in `log x`; the stencil is shifted
    /// inward near window ends. Results are clipped at zero when every stencil
    /// value is nonnegative.
    pub fn interpolate_smooth(&self, x: f64) -> Result<f64> {
        let Some((xlo, xhi)) = self.window_span() else {
            return Err(self.window_error(x));
        };
        if !(x >= xlo * (1.0 - 1e-14) && x <= xhi * (1.0 + 1e-14)) {
            return Err(self.window_error(x));
        }
        let Window { lo, hi } = self.window;
        if hi - lo < 5 {
            return self.interpolate(x);
        }
        let p = self.grid.position(x);
        let j = (p.floor().max(0.0) as usize).clamp(lo, hi);
        if (self.grid.node(j) - x).abs() <= 1e-15 * x {
            return Ok(self.values[j]);
        }
        let start = j.saturating_sub(2).clamp(lo, hi - 5);
        let mut sum = 0.0;
        let mut nonneg = true;
        for a in start..start + 6 {
            let mut w = 1.0;
            for b in start..start + 6 {
                if a != b {
                    w *= (p - b as f64) / (a as f64 - b as f64);
                }
            }
            nonneg &= self.values[a] >= 0.0;
            sum += w * self.values[a];
        }
        Ok(if nonneg { sum.max(0.0) } else { sum })
    }

    // Derivative per unit index at node j (monotone limited).
    fn slope(&self, j: usize) -> f64 {
        let Window { lo, hi } = self.window;
        let v = &self.values;
        if j > lo && j < hi {
            let a = v[j] - v[j - 1];
            let b = v[j + 1] - v[j];
            if a * b <= 0.0 {
                0.0
            } else {
                2.0 / (1.0 / a + 1.0 / b)
            }
        } else if hi - lo == 1 {
            v[hi] - v[lo]
        } else if j == lo {
            edge_slope(v[lo + 1] - v[lo], v[lo + 2] - v[lo + 1])
        } else {
            edge_slope(v[hi] - v[hi - 1], v[hi - 1] - v[hi - 2])
        }
    }

    /// `f(x/2)` by shifting indices up by one octave.
    pub fn shift_halve(&self) -> Self {
        let m = self.grid.per_octave();
        let n = self.values.len();
        let mut values = vec![0.0; n];
        values[m..n].copy_from_slice(&self.values[..(n - m)]);
        let window = Window::new(self.window.lo + m, self.window.hi);
        Self { grid: self.grid.clone(), values, window }
    }

    /// `∫ g(x) w(x) dx` over the window as a trapezoid in `log x`.
    pub fn integrate(&self, weight: impl Fn(f64) -> f64) -> Integral {
        self.integrate_with(weight, Rule::Trapezoid, TAIL_TOL)
    }

    pub fn integrate_with(&self, weight: impl Fn(f64) -> f64, rule: Rule, tail_tol: f64) -> Integral {
        let Window { lo, hi } = self.window;
        if self.window.is_empty() {
            return Integral { value: 0.0, tail: 0.0, tail_warning: false };
        }
        let h = self.grid.log_step();
        let integrand = |j: usize| {
            let x = self.grid.node(j);
            let v = self.values[j];
            if v == 0.0 {
                0.0
            } else {
                x * v * weight(x)
            }
        };
        let vals: Vec<f64> = (lo..=hi).map(integrand).collect();
        let trap = |stride: usize| -> f64 {
            let last = vals.len() - 1;
            let mut s = 0.0;
            let mut i = 0;
            while i <= last {
                let w = if i == 0 || i == last { 0.5 } else { 1.0 };
                s += w * vals[i];
                i += stride;
            }
            s * h * stride as f64
        };
        let fine = trap(1);
        let value = match rule {
            Rule::Trapezoid => fine,
            Rule::Richardson if (hi - lo) >= 2 && (hi - lo) % 2 == 0 => (4.0 * fine - trap(2)) / 3.0,
            Rule::Richardson => fine,
        };
        let tail = vals[0].abs() + vals[vals.len() - 1].abs();
        Integral { value, tail, tail_warning: tail > tail_tol }
    }

    /// Writes `x,value` rows (17 significant digits) after `#` metadata lines.
    pub fn write_csv<W: Write>(&self, out: &mut W, meta: &[(&str, String)]) -> Result<()> {
        write_grid_header(out, &self.grid, self.window, meta)?;
        writeln!(out, "x,value")?;
        for j in self.window.indices() {
            writeln!(out, "{:.16e},{:.16e}", self.grid.node(j), self.values[j])?;
        }
        Ok(())
    }

    /// Reads a file produced by [`GridFunction::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut x_min = None;
        let mut octaves = None;
        let mut m = None;
        let mut rows = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "x_min" => x_min = v.parse::<f64>().ok(),
                        "octaves" => octaves = v.parse::<usize>().ok(),
                        "per_octave" => m = v.parse::<usize>().ok(),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() || line.starts_with('x') {
                continue;
            }
            let mut cols = line.split(',');
            let x: f64 = parse_col(cols.next())?;
            let v: f64 = parse_col(cols.next())?;
            rows.push((x, v));
        }
        let (Some(x_min), Some(octaves), Some(m)) = (x_min, octaves, m) else {
            return Err(Error::Parse("missing grid metadata (x_min, octaves, per_octave)".into()));
        };
        let grid = LogGrid::new(x_min, octaves, m)?;
        let mut values = vec![0.0; grid.len()];
        let mut lo = usize::MAX;
        let mut hi = 0;
        for (x, v) in rows {
            let j = grid.index_of(x).ok_or_else(|| Error::Parse(format!("x = {x} is not a grid node")))?;
            values[j] = v;
            lo = lo.min(j);
            hi = hi.max(j);
        }
        let window = if lo == usize::MAX { Window::new(1, 0) } else { Window::new(lo, hi) };
        Self::new(grid, values, window)
    }
}

fn parse_col(s: Option<&str>) -> Result<f64> {
    s.ok_or_else(|| Error::Parse("missing column".into()))?
        .trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad number: {e}")))
}

pub fn write_grid_header<W: Write>(out: &mut W, grid: &LogGrid, window: Window, meta: &[(&str, String)]) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# x_min={:.16e}", grid.x_min());
    let _ = writeln!(s, "# octaves={}", grid.octaves());
    let _ = writeln!(s, "# per_octave={}", grid.per_octave());
    let _ = writeln!(s, "# window={}..={}", window.lo, window.hi);
    for (k, v) in meta {
        let _ = writeln!(s, "# {k}={v}");
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn edge_slope(d_near: f64, d_far: f64) -> f64 {
    // three-point one-sided estimate, limited to keep monotonicity
    let d = 0.5 * (3.0 * d_near - d_far);
    if d * d_near <= 0.0 {
        0.0
    } else if d_near * d_far <= 0.0 && d.abs() > 3.0 * d_near.abs() {
        3.0 * d_near
    } else {
        d
    }
}

fn hermite(v0: f64, v1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * v0 + h10 * d0 + h01 * v1 + h11 * d1
}

/// Centred eighth-order derivative `d/ds` at index `j` for uniform spacing `h`.
pub fn centered_derivative(v: &[f64], j: usize, h: f64) -> f64 {
    const C: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let mut s = 0.0;
    for (k, c) in C.iter().enumerate() {
        s += c * (v[j + k + 1] - v[j - k - 1]);
    }
    s / h
}

/// Stencil half-width of [`centered_derivative`].
pub const STENCIL: usize = 4;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn small() -> LogGrid {
        LogGrid::new(2f64.powi(-20), 26, 64).unwrap()
    }

    #[test]
    fn grid_layout() {
        let g = LogGrid::new(0.5, 3, 4).unwrap();
        assert_eq!(g.len(), 13);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        for j in 4..g.len() {
            assert_eq!(g.node(j - 4), g.node(j) / 2.0);
        }
        assert_eq!(LogGrid::desk().index_of(1.0), Some(1280));
        assert!(LogGrid::new(0.0, 3, 4).is_err());
    }

    #[test]
    fn interpolation_exact_at_nodes_and_accurate_between() {
        let g = GridFunction::sample(&small(), |x| x);
        for j in [0, 17, 640, 1663, 1664] {
            assert_eq!(g.interpolate(g.x(j)).unwrap(), g.x(j));
        }
        let mut worst: f64 = 0.0;
        for j in 0..small().len() - 1 {
            let x = (g.x(j) * g.x(j + 1)).sqrt();
            worst = worst.max((g.interpolate(x).unwrap() / x - 1.0).abs());
        }
        assert!(worst <= 1e-6, "midpoint error {worst}");
    }

    #[test]
    fn interpolation_outside_window_errors() {
        let mut g = GridFunction::sample(&small(), |x| x);
        g.restrict(Window::new(100, 200));
        assert!(matches!(g.interpolate(g.x(99)), Err(Error::Window { .. })));
        assert!(g.interpolate(g.x(201)).is_err());
        assert!(g.interpolate(g.x(150)).is_ok());
    }

    #[test]
    fn interpolation_order_at_least_two() {
        let f = |x: f64| (1.0 + x * x).ln() * x.sqrt();
        let mut errs = Vec::new();
        for m in [8, 16, 32] {
            let grid = LogGrid::new(0.25, 4, m).unwrap();
            let g = GridFunction::sample(&grid, f);
            let e = (0..grid.len() - 1)
                .map(|j| {
                    let x = (grid.node(j) * grid.node(j + 1)).sqrt();
                    (g.interpolate(x).unwrap() - f(x)).abs()
                })
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 2.0, "{errs:?}");
        }
    }

    #[test]
    fn integrate_examples() {
        let grid = small();
        assert_relative_eq!(grid.x_max(), 64.0);
        let g = GridFunction::sample(&grid, |x| x * (-x).exp());
        let r = g.integrate(|_| 1.0);
        assert!((r.value - 1.0).abs() < 1e-8, "{}", r.value);
        assert!(!r.tail_warning);
        assert_eq!(GridFunction::sample(&grid, |_| 0.0).integrate(|_| 1.0).value, 0.0);
        let ind = GridFunction::sample_indicator(&grid, 1.0, 2.0, |x| x.powi(-2)).unwrap();
        let r = ind.integrate(|x| x);
        assert!((r.value - std::f64::consts::LN_2).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn integrate_reports_tails() {
        let g = GridFunction::sample(&small(), |x| 1.0 / (1.0 + x));
        assert!(g.integrate(|_| 1.0).tail_warning);
    }

    #[test]
    fn shift_halve_examples() {
        let grid = small();
        let g = GridFunction::sample(&grid, |x| x);
        let h = g.shift_halve();
        assert_eq!(h.window(), Window::new(64, grid.len() - 1));
        for j in h.window().indices() {
            assert_eq!(h.value(j), grid.node(j) / 2.0);
        }
        let q = h.shift_halve();
        for j in q.window().indices() {
            assert_eq!(q.value(j), grid.node(j) / 4.0);
        }
        let mut w = g.clone();
        w.restrict(Window::new(200, 900));
        assert_eq!(w.shift_halve().window(), Window::new(264, 900));
    }

    #[test]
    fn csv_roundtrip() {
        let grid = LogGrid::new(0.125, 5, 8).unwrap();
        let mut g = GridFunction::sample(&grid, |x| x.sin());
        g.restrict(Window::new(3, 30));
        let mut buf = Vec::new();
        g.write_csv(&mut buf, &[("t", "1".into())]).unwrap();
        let back = GridFunction::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.window(), g.window());
        for j in g.window().indices() {
            assert_eq!(back.value(j), g.value(j));
        }
    }

    #[test]
    fn eighth_order_derivative() {
        let h = 0.01;
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * h).sin()).collect();
        assert_relative_eq!(centered_derivative(&v, 10, h), (0.1f64).cos(), max_relative = 1e-13);
    }

    proptest! {
        #[test]
        fn integrate_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, c in 0.5f64..4.0) {
            let grid = small();
            let f = GridFunction::sample(&grid, |x| (-x).exp());
            let g = GridFunction::sample(&grid, |x| x * (-c * x).exp());
            let comb = f.zip_with(&g, |_, u, v| a * u + b * v).unwrap();
            let lhs = comb.integrate(|x| x.sqrt()).value;
            let rhs = a * f.integrate(|x| x.sqrt()).value + b * g.integrate(|x| x.sqrt()).value;
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        }

        #[test]
        fn interpolation_monotone_on_monotone_data(seed in proptest::collection::vec(0.0f64..1.0, 16), q in 0.0f64..1.0) {
            let grid = LogGrid::new(1.0, 1, 15).unwrap();
            let mut acc = 0.0;
            let vals: Vec<f64> = seed.iter().map(|d| { acc += d; acc }).collect();
            let g = GridFunction::new(grid.clone(), vals, Window::new(0, 15)).unwrap();
            let x0 = 2f64.powf(q * 0.99);
            let x1 = 2f64.powf(q * 0.99 + 0.01);
            prop_assert!(g.interpolate(x1).unwrap() >= g.interpolate(x0).unwrap() - 1e-12);
        }
    }
}
