//! General relative entropy along the dual flow.
//!
//! For convex `H`, `E_H(t) = ∫ x U H(M_t f/(x e^t)) dx` is nonincreasing with
//! `dE/dt = −D^H[e^{−t} M_t f]`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual_semigroup::DualEvolution;
use crate::error::{Error, Result};
use crate::numerics::{GridFunction, Window};
use crate::rates::DivisionRate;
use crate::spectral::PerronSolution;

pub const DEFAULT_SMOOTHING: f64 = 1e-6;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A differentiable convex `H` with its derivative.
#[derive(Clone)]
pub enum EntropyFunctional {
    /// `s²`
    Square,
    /// `(s − 1)²`
    CenteredSquare,
    /// `√(s² + ε²)`
    SmoothAbs { eps: f64 },
    Custom { name: String, h: ScalarFn, dh: ScalarFn },
}

impl fmt::Debug for EntropyFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EntropyFunctional({self})")
    }
}

impl fmt::Display for EntropyFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntropyFunctional::Square => write!(f, "square"),
            EntropyFunctional::CenteredSquare => write!(f, "centered"),
            EntropyFunctional::SmoothAbs { eps } => write!(f, "smoothabs:eps={eps}"),
            EntropyFunctional::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl FromStr for EntropyFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, pairs) = crate::testfns::split_spec(s);
        match (name, pairs.as_slice()) {
            ("square", []) => Ok(EntropyFunctional::Square),
            ("centered", []) => Ok(EntropyFunctional::CenteredSquare),
            ("smoothabs", []) => Ok(EntropyFunctional::SmoothAbs { eps: DEFAULT_SMOOTHING }),
            ("smoothabs", [("eps", v)]) => {
                let eps: f64 = v.parse().map_err(|_| Error::Parse(format!("key `eps`: `{v}` is not a number")))?;
                if !(eps > 0.0) {
                    return Err(Error::Parse(format!("key `eps`: must be positive, got {eps}")));
                }
                Ok(EntropyFunctional::SmoothAbs { eps })
            }
            (n, [(k, _), ..]) if ["square", "centered", "smoothabs"].contains(&n) => {
                Err(Error::Parse(format!("unknown key `{k}` for entropy `{n}`")))
            }
            (other, _) => Err(Error::Parse(format!("unknown entropy `{other}` (square|centered|smoothabs)"))),
        }
    }
}

impl EntropyFunctional {
    pub fn custom(name: &str, h: impl Fn(f64) -> f64 + Send + Sync + 'static, dh: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        EntropyFunctional::Custom { name: name.to_string(), h: Arc::new(h), dh: Arc::new(dh) }
    }

    pub fn h(&self, s: f64) -> f64 {
        match self {
            EntropyFunctional::Square => s * s,
            EntropyFunctional::CenteredSquare => (s - 1.0) * (s - 1.0),
            EntropyFunctional::SmoothAbs { eps } => s.hypot(*eps),
            EntropyFunctional::Custom { h, .. } => h(s),
        }
    }

    pub fn dh(&self, s: f64) -> f64 {
        match self {
            EntropyFunctional::Square => 2.0 * s,
            EntropyFunctional::CenteredSquare => 2.0 * (s - 1.0),
            EntropyFunctional::SmoothAbs { eps } => s / s.hypot(*eps),
            EntropyFunctional::Custom { dh, .. } => dh(s),
        }
    }

    /// `H(b) − H(a) − H'(a)(b − a)`, which is nonnegative for convex `H`.
    pub fn bregman(&self, a: f64, b: f64) -> f64 {
        match self {
            EntropyFunctional::Square | EntropyFunctional::CenteredSquare => (b - a) * (b - a),
            _ => self.h(b) - self.h(a) - self.dh(a) * (b - a),
        }
    }

    /// Spot-checks `H((a+b)/2) ≤ (H(a) + H(b))/2 + 1e-12` on random secants
    /// in `[−range, range]`.
    pub fn check_convexity(&self, samples: usize, range: f64, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let a = range * (2.0 * rng.random::<f64>() - 1.0);
            let b = range * (2.0 * rng.random::<f64>() - 1.0);
            let mid = self.h(0.5 * (a + b));
            let chord = 0.5 * (self.h(a) + self.h(b));
            if mid > chord + 1e-12 * (1.0 + chord.abs()) {
                return Err(Error::Entropy(format!("{self} is not convex on [{a}, {b}]")));
            }
        }
        Ok(())
    }
}

/// A quadrature value with a bound on what the window leaves out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub tail: f64,
}

fn check_grid(f: &GridFunction, perron: &PerronSolution) -> Result<()> {
    if f.grid() != perron.grid() {
        return Err(Error::Parameter("entropy quantities need f on the Perron grid".into()));
    }
    Ok(())
}

/// `∫ q` outside the window `[lo, hi]`, with `q = x²U`.
fn outside_mass(perron: &PerronSolution, w: Window) -> f64 {
    let h = perron.grid().log_step();
    let uw = perron.u.window();
    let mut s = 0.0;
    for j in uw.indices() {
        if !w.contains(j) {
            s += perron.q(j);
        }
    }
    s * h
}

fn trapezoid(vals: &[f64], h: f64) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[vals.len() - 1]))
}

/// `∫ x U H(f_t/(x e^t)) dx` for `f_t = M_t f`.
pub fn relative_entropy(ft: &GridFunction, t: f64, perron: &PerronSolution, h: &EntropyFunctional) -> Result<Quantity> {
    check_grid(ft, perron)?;
    let w = ft.window().intersect(&perron.u.window());
    let e = t.exp();
    let hs: Vec<f64> = w.indices().map(|j| h.h(ft.value(j) / (ft.x(j) * e))).collect();
    let hmax = hs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let vals: Vec<f64> = w.indices().zip(&hs).map(|(j, v)| perron.q(j) * v).collect();
    Ok(Quantity { value: trapezoid(&vals, perron.grid().log_step()), tail: outside_mass(perron, w) * hmax })
}

/// `D^H[f] = ∫ x B U [H'(g(x))(g(x) − g(x/2)) + H(g(x/2)) − H(g(x))] dx`
/// with `g = f/x`.
pub fn dissipation(f: &GridFunction, rate: &DivisionRate, perron: &PerronSolution, h: &EntropyFunctional) -> Result<Quantity> {
    dissipation_scaled(f, 1.0, rate, perron, h)
}

/// Dissipation of `c·f`.
fn dissipation_scaled(f: &GridFunction, c: f64, rate: &DivisionRate, perron: &PerronSolution, h: &EntropyFunctional) -> Result<Quantity> {
    check_grid(f, perron)?;
    let m = perron.grid().per_octave();
    let fw = f.window();
    if fw.is_empty() || fw.hi < fw.lo + m {
        return Err(Error::Parameter("window too narrow for the x/2 shift".into()));
    }
    let w = Window::new(fw.lo + m, fw.hi).intersect(&perron.u.window());
    let mut vals = Vec::with_capacity(w.len());
    let mut scale = 0.0f64;
    for j in w.indices() {
        let x = f.x(j);
        let g = c * f.value(j) / x;
        let g_half = c * f.value(j - m) / (0.5 * x);
        let weight = perron.q(j) * rate.value(x);
        let v = weight * h.bregman(g, g_half);
        scale = scale.max(weight * (h.h(g).abs() + h.h(g_half).abs()));
        vals.push(v);
    }
    let value = trapezoid(&vals, perron.grid().log_step());
    let floor = -1e-10 * scale.max(1.0);
    if value < floor {
        return Err(Error::Entropy(format!("negative dissipation {value:.3e}: H not convex or window fault")));
    }
    let lost = outside_mass(perron, w);
    Ok(Quantity { value, tail: lost * scale.max(1.0) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyRecord {
    pub t: f64,
    pub entropy: f64,
    pub dissipation: f64,
    /// Centered difference of the entropy; `NaN` near the ends.
    pub rate_of_change: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<EntropyRecord>,
    /// Indices into `records` that were checked.
    pub checkpoints: Vec<usize>,
    /// Largest `|dE/dt + D|/(1 + |D|)` over the checkpoints.
    pub identity_defect: f64,
    /// Largest increase of `E` between consecutive records.
    pub max_increase: f64,
}

pub const IDENTITY_TOL: f64 = 1e-4;

/// Evolves `f0` to `horizon`, recording `E` and `D` at every step.
///
/// Fails if `E` increases by more than round-off or the identity
/// `dE/dt = −D` is violated beyond `1e-4·(1 + |D|)` at a checkpoint.
pub fn monitor_trajectory(
    f0: &GridFunction,
    rate: &DivisionRate,
    perron: &PerronSolution,
    h: &EntropyFunctional,
    horizon: f64,
    checkpoints: usize,
) -> Result<Trajectory> {
    check_grid(f0, perron)?;
    let mut ev = DualEvolution::new(f0.clone(), rate.clone())?;
    let dt = ev.step();
    let steps = (horizon / dt + 1e-9).floor() as usize;
    if steps < 8 {
        return Err(Error::Parameter("horizon shorter than eight steps".into()));
    }
    if ev.max_time() < steps as f64 * dt {
        return Err(Error::WindowExhausted { max_t: ev.max_time(), requested: horizon });
    }
    let mut records = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        if i > 0 {
            ev.duhamel_step()?;
        }
        let t = ev.time();
        let state = ev.state();
        let e = relative_entropy(state, t, perron, h)?;
        let d = dissipation_scaled(state, (-t).exp(), rate, perron, h)?;
        records.push(EntropyRecord { t, entropy: e.value, dissipation: d.value, rate_of_change: f64::NAN });
    }
    // sixth-order centered first derivative
    const C: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    for i in 3..records.len().saturating_sub(3) {
        let mut s = 0.0;
        for (k, c) in C.iter().enumerate() {
            s += c * (records[i + k + 1].entropy - records[i - k - 1].entropy);
        }
        records[i].rate_of_change = s / dt;
    }
    let interior: Vec<usize> = (3..records.len() - 3).collect();
    let stride = (interior.len() / checkpoints.max(1)).max(1);
    let checks: Vec<usize> = interior.iter().copied().step_by(stride).take(checkpoints.max(1)).collect();
    let mut identity_defect = 0.0f64;
    for &i in &checks {
        let r = records[i];
        identity_defect = identity_defect.max((r.rate_of_change + r.dissipation).abs() / (1.0 + r.dissipation.abs()));
    }
    let mut max_increase = 0.0f64;
    for w in records.windows(2) {
        max_increase = max_increase.max(w[1].entropy - w[0].entropy);
    }
    let scale = records.iter().map(|r| r.entropy.abs()).fold(1.0, f64::max);
    if max_increase > 1e-10 * scale {
        return Err(Error::Entropy(format!("entropy increased by {max_increase:.3e}")));
    }
    if identity_defect > IDENTITY_TOL {
        return Err(Error::Entropy(format!("dE/dt + D defect {identity_defect:.3e} exceeds {IDENTITY_TOL:.0e}")));
    }
    Ok(Trajectory { records, checkpoints: checks, identity_defect, max_increase })
}
