//! Flat `key = value` configuration with layered overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mitosim_core::measures::AtomicMeasure;
use mitosim_core::rates::{DivisionRate, RateTable};
use mitosim_core::testfns::split_spec;
use mitosim_core::LogGrid;

/// A usage or configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub type Result<T> = std::result::Result<T, Usage>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()))
}

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Every configuration key. Each is also a `--<key>` flag.
pub const KEYS: &[Key] = &[
    key("rate", "monomial:K=1,r=2", "rate shorthand: monomial:K=..,r=.. | constant:B0=.. | tabulated:table_path=..,exp_lo=..,exp_hi=..; expands into the rate.* keys"),
    key("rate.kind", "monomial", "monomial | constant | tabulated"),
    key("rate.K", "1", "monomial prefactor"),
    key("rate.r", "2", "monomial exponent"),
    key("rate.B0", "1", "constant rate value"),
    key("rate.table_path", "", "two-column CSV x,B(x) with strictly increasing x"),
    key("rate.exp_lo", "", "power-law exponent used below the table (required for tabulated)"),
    key("rate.exp_hi", "", "power-law exponent used above the table (required for tabulated)"),
    key("rate.b", "0", "support bound: B vanishes below b"),
    key("grid.x_min", "9.5367431640625e-7", "left grid end (2^-20)"),
    key("grid.octaves", "40", "number of octaves covered by the grid"),
    key("grid.m", "64", "nodes per octave"),
    key("f", "bump:c=1,w=0.5", "test function: phi | one | power:p=.. | bump:c=..,w=..[,a=..] | gaussian:c=..,w=.. | phik:k=..,part=re|im"),
    key("t", "0.6931471805599453", "horizon"),
    key("checkpoints", "1", "dual: output times t·i/checkpoints; entropy: identity checkpoints"),
    key("init", "dirac:x0=1", "initial measure: dirac:x0=.. | density:a=..,b=..,n=..,p=.. (x^p on [a,b]) | atoms:x@w;x@w;... (flag alias --mu)"),
    key("N", "64", "Fejér order"),
    key("H", "square", "entropy: square | centered | smoothabs[:eps=..]"),
    key("q1", "-1", "Lyapunov exponent q1 < 0"),
    key("q2", "1", "Lyapunov exponent q2 > 0"),
    key("omega", "auto", "drift rate; auto means -q1/2"),
    key("r_factor", "2", "sub-level radius R as a multiple of 2K/(1-γ)"),
    key("x_ref", "1", "lattice of the certificate, or `uniform` for all lattices"),
    key("periods", "30", "validation periods for harris"),
    key("x0", "1", "initial size for mc, and validation start for a uniform certificate"),
    key("replicas", "10000", "Monte Carlo replicas"),
    key("seed", "42", "base seed"),
    key("cap", "10000000", "population cap per replica"),
    key("picard_tol", "1e-10", "dual solver Picard tolerance"),
    key("comb_tol", "1e-10", "comb ODE tolerance"),
    key("out", "", "output path; defaults: dual traj.csv, measure comb.csv, eigen U.csv, project rho.csv, entropy ent.csv, harris cert.txt, mc mc.csv"),
    key("report", "validation.csv", "harris validation report (m, measured, bound)"),
    key("profile", "desk", "acceptance profile"),
    key("criterion", "all", "acceptance: a single criterion id 1..10, or all"),
];

/// Resolved string values for every key.
#[derive(Clone, Debug)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

fn lookup(name: &str) -> Result<&'static Key> {
    KEYS.iter().find(|k| k.name == name).map_or_else(|| usage(format!("unknown config key `{name}`")), Ok)
}

impl Default for Config {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|k| (k.name, k.default.to_string())).collect() }
    }
}

impl Config {
    /// Sets one key; `rate` expands into the `rate.*` keys.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let k = lookup(name)?;
        let value = value.trim();
        if k.name == "rate" {
            let (kind, pairs) = split_spec(value);
            let allowed: &[&str] = match kind {
                "monomial" => &["K", "r", "b"],
                "constant" => &["B0", "b"],
                "tabulated" => &["table_path", "exp_lo", "exp_hi", "b"],
                _ => return usage(format!("key `rate.kind`: unknown rate kind `{kind}`")),
            };
            self.values.insert("rate.kind", kind.to_string());
            for (pk, pv) in pairs {
                if !allowed.contains(&pk) {
                    return usage(format!("key `rate.{pk}` is not valid for a {kind} rate"));
                }
                if pv.is_empty() {
                    return usage(format!("key `rate.{pk}` has no value"));
                }
                self.values.insert(lookup(&format!("rate.{pk}"))?.name, pv.to_string());
            }
        }
        self.values.insert(k.name, value.to_string());
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return usage(format!("{}:{}: expected key = value", path.display(), i + 1));
            };
            self.set(k.trim(), v.trim().trim_matches('"'))?;
        }
        Ok(())
    }

    pub fn str(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn parse<T: FromStr>(&self, name: &str) -> Result<T> {
        let v = self.str(name);
        v.parse().map_err(|_| Usage(format!("key `{name}`: cannot parse `{v}`")))
    }

    pub fn f64(&self, name: &str) -> Result<f64> {
        let v: f64 = self.parse(name)?;
        if !v.is_finite() {
            return usage(format!("key `{name}` must be finite"));
        }
        Ok(v)
    }

    pub fn usize(&self, name: &str) -> Result<usize> {
        self.parse(name)
    }

    pub fn positive(&self, name: &str) -> Result<f64> {
        let v = self.f64(name)?;
        if v <= 0.0 {
            return usage(format!("key `{name}` must be positive, got {v}"));
        }
        Ok(v)
    }

    pub fn out(&self, default: &str) -> PathBuf {
        let o = self.str("out");
        PathBuf::from(if o.is_empty() { default } else { o })
    }

    pub fn rate(&self) -> Result<DivisionRate> {
        let wrap = |key: &str, e: mitosim_core::Error| Usage(format!("key `{key}`: {e}"));
        let rate = match self.str("rate.kind") {
            "monomial" => DivisionRate::monomial(self.f64("rate.K")?, self.f64("rate.r")?).map_err(|e| wrap("rate.K", e))?,
            "constant" => DivisionRate::constant(self.f64("rate.B0")?).map_err(|e| wrap("rate.B0", e))?,
            "tabulated" => {
                let path = self.str("rate.table_path");
                if path.is_empty() {
                    return usage("key `rate.table_path` is required for a tabulated rate");
                }
                for k in ["rate.exp_lo", "rate.exp_hi"] {
                    if self.str(k).is_empty() {
                        return usage(format!("key `{k}` is required for a tabulated rate"));
                    }
                }
                let table = RateTable::from_csv(Path::new(path), self.f64("rate.exp_lo")?, self.f64("rate.exp_hi")?)
                    .map_err(|e| wrap("rate.table_path", e))?;
                DivisionRate::tabulated(table)
            }
            other => return usage(format!("key `rate.kind`: unknown rate kind `{other}`")),
        };
        rate.with_support(self.f64("rate.b")?).map_err(|e| wrap("rate.b", e))
    }

    pub fn grid(&self) -> Result<LogGrid> {
        LogGrid::new(self.positive("grid.x_min")?, self.usize("grid.octaves")?, self.usize("grid.m")?)
            .map_err(|e| Usage(format!("key `grid.*`: {e}")))
    }

    pub fn horizon(&self) -> Result<f64> {
        let t = self.f64("t")?;
        if t < 0.0 {
            return usage(format!("key `t` must be nonnegative, got {t}"));
        }
        Ok(t)
    }

    pub fn test_function(&self) -> Result<mitosim_core::testfns::TestFunction> {
        self.str("f").parse().map_err(|e| Usage(format!("key `f`: {e}")))
    }

    pub fn omega(&self) -> Result<f64> {
        match self.str("omega") {
            "auto" => Ok(-0.5 * self.f64("q1")?),
            _ => self.f64("omega"),
        }
    }

    pub fn x_ref(&self) -> Result<Option<f64>> {
        match self.str("x_ref") {
            "uniform" => Ok(None),
            _ => self.positive("x_ref").map(Some),
        }
    }

    pub fn init(&self) -> Result<AtomicMeasure> {
        parse_measure(self.str("init")).map_err(|e| Usage(format!("key `init`: {}", e.0)))
    }
}

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Usage(format!("`{key}`: `{v}` is not a number")))
}

/// `dirac:x0=..`, `density:a=..,b=..,n=..,p=..` or `atoms:x@w;x@w`.
pub fn parse_measure(spec: &str) -> Result<AtomicMeasure> {
    let core = |e: mitosim_core::Error| Usage(e.to_string());
    if let Some(list) = spec.strip_prefix("atoms:") {
        let mut atoms = Vec::new();
        for item in list.split(';').filter(|s| !s.trim().is_empty()) {
            let Some((x, w)) = item.split_once('@') else {
                return usage(format!("atom `{item}` is not x@w"));
            };
            atoms.push((num("x", x.trim())?, num("w", w.trim())?));
        }
        return AtomicMeasure::new(atoms).map_err(core);
    }
    let (name, pairs) = split_spec(spec);
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        match pairs.iter().find(|p| p.0 == key) {
            Some((k, v)) => num(k, v),
            None => default.map_or_else(|| usage(format!("`{name}` needs `{key}`")), Ok),
        }
    };
    let allowed: &[&str] = match name {
        "dirac" => &["x0"],
        "density" => &["a", "b", "n", "p"],
        _ => return usage(format!("unknown measure `{name}` (dirac, density, atoms)")),
    };
    if let Some((k, _)) = pairs.iter().find(|p| !allowed.contains(&p.0)) {
        return usage(format!("`{name}` has no key `{k}`"));
    }
    match name {
        "dirac" => AtomicMeasure::dirac(get("x0", None)?).map_err(core),
        _ => {
            let n = get("n", Some(512.0))?;
            if n < 1.0 || n.fract() != 0.0 {
                return usage(format!("`n` must be a positive integer, got {n}"));
            }
            let p = get("p", Some(-2.0))?;
            AtomicMeasure::density_quadrature(get("a", Some(1.0))?, get("b", Some(2.0))?, n as usize, |x| x.powf(p)).map_err(core)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_key() {
        let c = Config::default();
        for k in KEYS {
            assert_eq!(c.str(k.name), k.default);
        }
        let r = c.rate().unwrap();
        assert_eq!(r.to_string(), "monomial:K=1,r=2");
        assert_eq!(c.grid().unwrap().len(), 2561);
        assert_eq!(c.omega().unwrap(), 0.5);
    }

    #[test]
    fn shorthand_expands() {
        let mut c = Config::default();
        c.set("rate", "constant:B0=3").unwrap();
        assert_eq!(c.str("rate.kind"), "constant");
        assert_eq!(c.rate().unwrap().to_string(), "constant:B0=3");
        c.set("rate.kind", "monomial").unwrap();
        c.set("rate.r", "1").unwrap();
        assert_eq!(c.rate().unwrap().to_string(), "monomial:K=1,r=1");
    }

    #[test]
    fn malformed_rate_names_the_key() {
        let mut c = Config::default();
        let e = c.set("rate", "monomial:K=1,s=2").unwrap_err();
        assert!(e.0.contains("rate.s"), "{e}");
        c.set("rate", "monomial:K=abc").unwrap();
        let e = c.rate().unwrap_err();
        assert!(e.0.contains("rate.K"), "{e}");
        c.set("rate", "monomial:K=-1").unwrap();
        assert!(c.rate().unwrap_err().0.contains("rate.K"));
        assert!(c.set("rate", "cubic:K=1").unwrap_err().0.contains("rate.kind"));
        assert!(c.set("nonsense", "1").is_err());
    }

    #[test]
    fn measures_parse() {
        assert_eq!(parse_measure("dirac:x0=2").unwrap().atoms(), &[(2.0, 1.0)]);
        assert_eq!(parse_measure("atoms:1@0.5;3@-1").unwrap().len(), 2);
        assert_eq!(parse_measure("density:n=16").unwrap().len(), 16);
        assert!(parse_measure("dirac:y=1").is_err());
        assert!(parse_measure("atoms:1").is_err());
        assert!(parse_measure("density:n=2.5").is_err());
    }

    #[test]
    fn file_layer() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "# experiment\nrate = monomial:K=2,r=3\nt = 1.5  # horizon\n").unwrap();
        let mut c = Config::default();
        c.load_file(&p).unwrap();
        assert_eq!(c.rate().unwrap().to_string(), "monomial:K=2,r=3");
        assert_eq!(c.horizon().unwrap(), 1.5);
        std::fs::write(&p, "rate monomial\n").unwrap();
        assert!(c.load_file(&p).is_err());
    }
}
