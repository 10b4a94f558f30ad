//! The dual (backward) equation `∂_t φ = x ∂_x φ + B(x)(2φ(x/2) − φ(x))`,
//! advanced by its Duhamel fixed point one grid cell at a time.
//!
//! Along the characteristic reaching node `j` after a step of length `δ`,
//! `y_j(σ) = φ(t+σ, x_j e^{δ−σ})` obeys `y_j' = b_j(σ)(2 y_{j−m}(σ) − y_j(σ))`.
//! The memory term is collocated on `σ ∈ {0, δ/3, 2δ/3, δ}` with the hazard
//! factor integrated exactly, so transport has no error at all and `φ(x) = x`
//! is reproduced to rounding.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::quad::gauss_kronrod_n;
use crate::numerics::{centered_derivative, GridFunction, LogGrid, Window, STENCIL};
use crate::rates::DivisionRate;

pub const DEFAULT_PICARD_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 50;
const NODES: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];

fn lagrange(l: usize, tau: f64) -> f64 {
    let [a, b, c, d] = NODES;
    match l {
        0 => -4.5 * (tau - b) * (tau - c) * (tau - d),
        1 => 13.5 * (tau - a) * (tau - c) * (tau - d),
        2 => -13.5 * (tau - a) * (tau - b) * (tau - d),
        _ => 4.5 * (tau - a) * (tau - b) * (tau - c),
    }
}

/// Hazard factors and memory weights for one step of length `delta`.
#[derive(Debug)]
pub struct StepWeights {
    delta: f64,
    first: usize,
    decay: Vec<[f64; 3]>,
    memory: Vec<[[f64; 4]; 3]>,
}

impl StepWeights {
    /// Weights for nodes `lo..=hi` of `grid`.
    pub fn new(rate: &DivisionRate, grid: &LogGrid, delta: f64, lo: usize, hi: usize) -> Self {
        let rows: Vec<([f64; 3], [[f64; 4]; 3])> = (lo..=hi)
            .into_par_iter()
            .map(|j| node_weights(rate, grid.node(j), delta))
            .collect();
        let (decay, memory) = rows.into_iter().unzip();
        Self { delta, first: lo, decay, memory }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn covers(&self, lo: usize, hi: usize) -> bool {
        lo >= self.first && hi < self.first + self.decay.len()
    }
}

fn node_weights(rate: &DivisionRate, x: f64, delta: f64) -> ([f64; 3], [[f64; 4]; 3]) {
    let mut decay = [1.0; 3];
    let mut memory = [[0.0; 4]; 3];
    if rate.is_zero() {
        return (decay, memory);
    }
    for i in 0..3 {
        let sigma = NODES[i + 1] * delta;
        let foot = x * (delta - sigma).exp();
        let g = rate.hazard(foot, sigma);
        decay[i] = (-g).exp();
        let total = -2.0 * (-g).exp_m1();
        if total == 0.0 {
            continue;
        }
        // In the remaining-hazard variable v = G(σ) − G(u) the kernel is 2e^{−v},
        // whatever the stiffness; hazard beyond 50 contributes below 1e-21.
        let top = g.min(50.0);
        memory[i] = gauss_kronrod_n(
            |v: f64| {
                let u = sigma - rate.inverse_hazard(foot, v).min(sigma);
                let k = 2.0 * (-v).exp();
                let tau = u / delta;
                [0, 1, 2, 3].map(|l| k * lagrange(l, tau))
            },
            0.0,
            top,
            1e-15 * total,
        );
        // The weights must sum to 2(1 − e^{−G}) so that φ(x) = x is exact.
        let sum: f64 = memory[i].iter().sum();
        memory[i][i + 1] += total - sum;
    }
    (decay, memory)
}

/// Stepper for `M_t f` on a fixed grid.
#[derive(Debug, Clone)]
pub struct DualEvolution {
    rate: DivisionRate,
    state: GridFunction,
    steps: usize,
    extra: f64,
    picard_tol: f64,
    weights: Arc<StepWeights>,
    last_sweeps: usize,
}

impl DualEvolution {
    pub fn new(f: GridFunction, rate: DivisionRate) -> Result<Self> {
        Self::with_tol(f, rate, DEFAULT_PICARD_TOL)
    }

    pub fn with_tol(f: GridFunction, rate: DivisionRate, picard_tol: f64) -> Result<Self> {
        let w = f.window();
        if w.is_empty() {
            return Err(Error::Parameter("initial function has an empty window".into()));
        }
        let weights = Arc::new(StepWeights::new(&rate, f.grid(), f.grid().log_step(), w.lo, w.hi));
        Self::with_weights(f, rate, picard_tol, weights)
    }

    /// Reuses precomputed full-step weights (same rate and grid).
    pub fn with_weights(f: GridFunction, rate: DivisionRate, picard_tol: f64, weights: Arc<StepWeights>) -> Result<Self> {
        if !(picard_tol > 0.0) {
            return Err(Error::Parameter("picard_tol must be positive".into()));
        }
        let w = f.window();
        if (weights.delta - f.grid().log_step()).abs() > 1e-15 || !weights.covers(w.lo, w.hi.saturating_sub(1)) {
            return Err(Error::Parameter("step weights do not match the grid window".into()));
        }
        Ok(Self { rate, state: f, steps: 0, extra: 0.0, picard_tol, weights, last_sweeps: 0 })
    }

    pub fn weights(&self) -> Arc<StepWeights> {
        Arc::clone(&self.weights)
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.step() + self.extra
    }

    pub fn step(&self) -> f64 {
        self.state.grid().log_step()
    }

    pub fn state(&self) -> &GridFunction {
        &self.state
    }

    pub fn into_state(self) -> GridFunction {
        self.state
    }

    pub fn rate(&self) -> &DivisionRate {
        &self.rate
    }

    /// Picard sweeps used by the most recent step.
    pub fn last_sweeps(&self) -> usize {
        self.last_sweeps
    }

    /// Largest horizon reachable before the window empties.
    pub fn max_time(&self) -> f64 {
        let w = self.state.window();
        self.time() + (w.hi - w.lo) as f64 * self.step()
    }

    /// Advances by one cell `Δ = log 2 / m`.
    pub fn duhamel_step(&mut self) -> Result<()> {
        let weights = Arc::clone(&self.weights);
        self.advance(&weights, None)?;
        self.steps += 1;
        Ok(())
    }

    /// Advances by `delta < Δ`, interpolating `f/x` at the feet of the
    /// characteristics with six-point Lagrange (the monotone limiter would
    /// flatten extrema to second order).
    pub fn partial_step(&mut self, delta: f64) -> Result<()> {
        let full = self.step();
        if !(delta > 0.0 && delta < full) {
            return Err(Error::Parameter(format!("partial step {delta} not in (0, {full})")));
        }
        let w = self.state.window();
        if w.hi <= w.lo {
            return Err(self.exhausted(self.time() + delta));
        }
        let weights = StepWeights::new(&self.rate, self.state.grid(), delta, w.lo, w.hi - 1);
        let ratio = self.state.map(|x, v| v / x);
        let feet: Vec<f64> = (w.lo..w.hi)
            .map(|j| {
                let y = self.state.x(j) * delta.exp();
                ratio.interpolate_smooth(y.min(self.state.x(j + 1))).map(|r| r * y)
            })
            .collect::<Result<_>>()?;
        self.advance(&weights, Some(&feet))?;
        self.extra += delta;
        Ok(())
    }

    fn exhausted(&self, requested: f64) -> Error {
        Error::WindowExhausted { max_t: self.max_time(), requested }
    }

    /// Steps until `time() == t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let now = self.time();
        if t < now - 1e-12 {
            return Err(Error::Parameter(format!("cannot step backwards from {now} to {t}")));
        }
        if t > self.max_time() + 1e-12 {
            return Err(self.exhausted(t));
        }
        let dt = self.step();
        let remaining = t - now;
        let n = ((remaining / dt) + 1e-9).floor() as usize;
        for _ in 0..n {
            self.duhamel_step()?;
        }
        let rest = t - self.time();
        if rest > 1e-12 * t.max(1.0) {
            self.partial_step(rest)?;
        }
        Ok(())
    }

    fn advance(&mut self, weights: &StepWeights, feet: Option<&[f64]>) -> Result<()> {
        let Window { lo, hi } = self.state.window();
        if hi <= lo {
            return Err(self.exhausted(self.time() + weights.delta));
        }
        let m = self.state.grid().per_octave();
        let old = self.state.values();
        let nh = hi - 1;
        let y0: Vec<f64> = match feet {
            Some(f) => f.to_vec(),
            None => (lo..=nh).map(|j| old[j + 1]).collect(),
        };
        // Foot value of the characteristic of node v, extended below the
        // window by f(x/2) = f(x)/2.
        let full = feet.is_none();
        let foot = |v: isize| -> f64 {
            if v >= lo as isize {
                y0[v as usize - lo]
            } else if full && v + 1 == lo as isize {
                old[lo]
            } else {
                0.5 * y0[(v + m as isize) as usize - lo]
            }
        };
        let mut stages: Vec<[f64; 3]> = y0.iter().map(|&y| [y; 3]).collect();
        let scale = (lo..=hi)
            .map(|j| (old[j] / self.state.x(j)).abs())
            .fold(1.0f64, f64::max);
        let tol = self.picard_tol * scale;
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut change = 0.0f64;
            for j in lo..=nh {
                let k = j - lo;
                let v = j as isize - m as isize;
                let (dec, mem) = (&weights.decay[j - weights.first], &weights.memory[j - weights.first]);
                let (src0, src) = if v >= lo as isize {
                    (foot(v), stages[v as usize - lo])
                } else {
                    let s = stages[k];
                    (foot(v), [0.5 * s[0], 0.5 * s[1], 0.5 * s[2]])
                };
                let mut next = [0.0; 3];
                for i in 0..3 {
                    next[i] = y0[k] * dec[i]
                        + mem[i][0] * src0
                        + mem[i][1] * src[0]
                        + mem[i][2] * src[1]
                        + mem[i][3] * src[2];
                }
                let x = self.state.x(j);
                for i in 0..3 {
                    change = change.max((next[i] - stages[k][i]).abs() / x);
                }
                stages[k] = next;
            }
            if !change.is_finite() {
                return Err(Error::Numerical("non-finite value in Picard sweep".into()));
            }
            if change < tol {
                break;
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::Numerical(format!(
                    "Picard iteration did not converge in {MAX_SWEEPS} sweeps (change {change:.3e})"
                )));
            }
        }
        self.last_sweeps = sweeps;
        let values = self.state.values_mut();
        for j in lo..=nh {
            values[j] = stages[j - lo][2];
        }
        values[hi] = 0.0;
        self.state.restrict(Window::new(lo, nh));
        Ok(())
    }
}

/// `M_t f` on the surviving window.
pub fn evolve_dual(f: &GridFunction, rate: &DivisionRate, t: f64) -> Result<GridFunction> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("negative horizon {t}")));
    }
    let mut ev = DualEvolution::new(f.clone(), rate.clone())?;
    ev.advance_to(t)?;
    Ok(ev.into_state())
}

/// `A f = x f' + B(x)(2 f(x/2) − f(x))` with eighth-order differences in `log x`.
pub fn apply_generator(f: &GridFunction, rate: &DivisionRate) -> Result<GridFunction> {
    let grid = f.grid();
    let m = grid.per_octave();
    let Window { lo, hi } = f.window();
    let new_lo = lo + m.max(STENCIL);
    if f.window().is_empty() || hi < new_lo + STENCIL {
        return Err(Error::Parameter("window too narrow for the generator stencil".into()));
    }
    let new_hi = hi - STENCIL;
    let h = grid.log_step();
    let v = f.values();
    let mut out = vec![0.0; grid.len()];
    for j in new_lo..=new_hi {
        let x = grid.node(j);
        out[j] = centered_derivative(v, j, h) + rate.value(x) * (2.0 * v[j - m] - v[j]);
    }
    GridFunction::new(grid.clone(), out, Window::new(new_lo, new_hi))
}

/// `P_t f = M_t(φ f) / (e^t φ)` given `evolved = M_t(φ f)`.
pub fn rescale_markov(_f: &GridFunction, t: f64, evolved: &GridFunction) -> GridFunction {
    let e = t.exp();
    evolved.map(|x, v| v / (e * x))
}
