//! Observables used as initial data and test functions.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Frequency `2π / log 2` of the boundary modes.
pub const OMEGA: f64 = 2.0 * PI / LN_2;

/// `2π·frac(k·frac(y))`: the angle of `e^{2πiky}` reduced through the
/// fractional part of `y` first, so shifting `y` by an integer leaves it
/// unchanged bit for bit.
pub fn cycle_phase(k: i64, y: f64) -> f64 {
    2.0 * PI * (k as f64 * y.rem_euclid(1.0)).rem_euclid(1.0)
}

/// Smooth compactly supported bump in `log x`:
/// `a·exp(1 − 1/(1 − u²))` for `u = log(x/c)/w`, `|u| < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub half_width: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self { center, half_width, amplitude: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x / self.center).ln() / self.half_width;
        if u.abs() >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - u * u)).exp()
        }
    }

    pub fn support(&self) -> (f64, f64) {
        let e = self.half_width.exp();
        (self.center / e, self.center * e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction {
    /// `φ(x) = x`
    Phi,
    One,
    Power(f64),
    Bump(Bump),
    /// `exp(−u²/2)` with `u = log(x/c)/w`.
    Gaussian { center: f64, width: f64 },
    /// Real or imaginary part of `φ_k(x) = x·e^{ikω log x}`.
    PhiK { k: i64, imag: bool },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Phi => x,
            TestFunction::One => 1.0,
            TestFunction::Power(p) => x.powf(p),
            TestFunction::Bump(b) => b.eval(x),
            TestFunction::Gaussian { center, width } => {
                let u = (x / center).ln() / width;
                (-0.5 * u * u).exp()
            }
            TestFunction::PhiK { k, imag } => {
                let a = cycle_phase(k, x.log2());
                if imag {
                    x * a.sin()
                } else {
                    x * a.cos()
                }
            }
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Phi => write!(f, "phi"),
            TestFunction::One => write!(f, "one"),
            TestFunction::Power(p) => write!(f, "power:p={p}"),
            TestFunction::Bump(b) => write!(f, "bump:c={},w={},a={}", b.center, b.half_width, b.amplitude),
            TestFunction::Gaussian { center, width } => write!(f, "gaussian:c={center},w={width}"),
            TestFunction::PhiK { k, imag } => write!(f, "phik:k={k},part={}", if *imag { "im" } else { "re" }),
        }
    }
}

/// Parses `name:key=value,key=value` into a name and pairs.
pub fn split_spec(spec: &str) -> (&str, Vec<(&str, &str)>) {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let pairs = rest
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| kv.split_once('=').map(|(k, v)| (k.trim(), v.trim())).unwrap_or((kv.trim(), "")))
        .collect();
    (name.trim(), pairs)
}

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::Parse(format!("key `{key}`: `{v}` is not a number")))
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, pairs) = split_spec(s);
        let get = |key: &str, default: Option<f64>| -> Result<f64> {
            match pairs.iter().find(|(k, _)| *k == key) {
                Some((k, v)) => num(k, v),
                None => default.ok_or_else(|| Error::Parse(format!("`{name}` needs key `{key}`"))),
            }
        };
        for (k, _) in &pairs {
            let allowed: &[&str] = match name {
                "bump" => &["c", "w", "a"],
                "gaussian" => &["c", "w"],
                "power" => &["p"],
                "phik" => &["k", "part"],
                _ => &[],
            };
            if !allowed.contains(k) {
                return Err(Error::Parse(format!("unknown key `{k}` for test function `{name}`")));
            }
        }
        match name {
            "phi" | "x" => Ok(TestFunction::Phi),
            "one" | "1" => Ok(TestFunction::One),
            "power" => Ok(TestFunction::Power(get("p", None)?)),
            "bump" => Ok(TestFunction::Bump(Bump {
                center: get("c", Some(1.0))?,
                half_width: get("w", Some(0.5))?,
                amplitude: get("a", Some(1.0))?,
            })),
            "gaussian" => Ok(TestFunction::Gaussian { center: get("c", Some(1.0))?, width: get("w", Some(0.3))? }),
            "phik" => {
                let k = get("k", None)?;
                let imag = match pairs.iter().find(|(k, _)| *k == "part").map(|p| p.1) {
                    None | Some("re") => false,
                    Some("im") => true,
                    Some(other) => return Err(Error::Parse(format!("key `part`: expected re|im, got `{other}`"))),
                };
                Ok(TestFunction::PhiK { k: k as i64, imag })
            }
            other => Err(Error::Parse(format!("unknown test function `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_shape() {
        let b = Bump::new(2.0, 0.5);
        assert_eq!(b.eval(2.0), 1.0);
        assert_eq!(b.eval(2.0 * 0.5f64.exp()), 0.0);
        assert!(b.eval(2.1) > 0.0 && b.eval(2.1) < 1.0);
    }

    #[test]
    fn phik_doubles() {
        for k in -3..=3 {
            for imag in [false, true] {
                let f = TestFunction::PhiK { k, imag };
                for x in [0.3, 1.0, 7.5] {
                    let (a, b) = (f.eval(2.0 * x), 2.0 * f.eval(x));
                    assert!((a - b).abs() <= 1e-14 * x, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn parse_roundtrip() {
        for s in ["phi", "one", "power:p=2", "bump:c=1.5,w=0.6,a=2", "phik:k=2,part=im", "gaussian:c=1,w=0.3"] {
            let f: TestFunction = s.parse().unwrap();
            let back: TestFunction = f.to_string().parse().unwrap();
            assert_eq!(f, back);
        }
        assert!("bump:c=1,zz=3".parse::<TestFunction>().is_err());
        assert!("power".parse::<TestFunction>().is_err());
    }
}
