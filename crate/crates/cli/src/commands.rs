//! One function per subcommand. Each returns whether its checks passed.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use num_complex::Complex64;

use mitosim_core::acceptance::{run_all, run_criterion, Profile};
use mitosim_core::branching::{observe, Estimate, ReplicaPlan};
use mitosim_core::dual_semigroup::DualEvolution;
use mitosim_core::entropy::{monitor_trajectory, EntropyFunctional};
use mitosim_core::harris::{certify, validate_certificate, LyapunovParams};
use mitosim_core::measures::{DyadicComb, LatticeMeasure};
use mitosim_core::spectral::{compute_perron, period_phase, periodic_limit_fejer, BoundaryEigen, PeriodicLimit};
use mitosim_core::{GridFunction, LogGrid};

use crate::config::{Config, Usage};

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn grid_header(out: &mut impl Write, g: &LogGrid) -> Result<()> {
    writeln!(out, "# grid x_min={:.16e} octaves={} m={}", g.x_min(), g.octaves(), g.per_octave())?;
    Ok(())
}

pub fn dual(cfg: &Config) -> Result<bool> {
    let rate = cfg.rate()?;
    let grid = cfg.grid()?;
    let f = cfg.test_function()?;
    let t = cfg.horizon()?;
    let n = cfg.usize("checkpoints")?.max(1);
    let f0 = GridFunction::sample(&grid, |x| f.eval(x));
    let mut ev = DualEvolution::with_tol(f0, rate.clone(), cfg.positive("picard_tol")?)?;
    if ev.max_time() < t {
        return Err(Usage(format!("grid reaches t = {:.6} only; key `t` = {t} needs more octaves (`grid.octaves`)", ev.max_time())).into());
    }
    let path = cfg.out("traj.csv");
    let mut out = create(&path)?;
    writeln!(out, "# rate={rate}")?;
    writeln!(out, "# f={f}")?;
    grid_header(&mut out, &grid)?;
    writeln!(out, "t,x,value")?;
    for i in 0..=n {
        let ti = t * i as f64 / n as f64;
        ev.advance_to(ti)?;
        let s = ev.state();
        for j in s.window().indices() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", ti, s.x(j), s.value(j))?;
        }
    }
    out.flush()?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn write_combs(out: &mut impl Write, m: &LatticeMeasure) -> Result<()> {
    let combs: Vec<DyadicComb> = m.positive.iter().cloned().chain(m.negative.iter().map(|c| c.scaled(-1.0))).collect();
    if let [c] = combs.as_slice() {
        c.write_csv(out)?;
        return Ok(());
    }
    for (i, c) in combs.iter().enumerate() {
        writeln!(out, "# comb={i} x0={:.16e} t={:.16e} budget={:.16e}", c.x0(), c.time(), c.budget())?;
    }
    writeln!(out, "comb,n,position,weight")?;
    for (i, c) in combs.iter().enumerate() {
        for (n, x, w) in c.levels() {
            writeln!(out, "{i},{n},{x:.16e},{w:.16e}")?;
        }
    }
    Ok(())
}

pub fn measure(cfg: &Config) -> Result<bool> {
    let rate = cfg.rate()?;
    let mu = cfg.init()?;
    let t = cfg.horizon()?;
    let m = LatticeMeasure::from_atomic(&mu)?.evolve(&rate, t, cfg.positive("comb_tol")?)?;
    let path = cfg.out("comb.csv");
    let mut out = create(&path)?;
    write_combs(&mut out, &m)?;
    out.flush()?;
    println!("e^-t mu_t(phi) = {:.16e}", (-t).exp() * m.phi_mass());
    println!("dropped budget = {:.3e}", m.budget());
    println!("wrote {}", path.display());
    Ok(true)
}

pub fn eigen(cfg: &Config) -> Result<bool> {
    let rate = cfg.rate()?;
    let grid = cfg.grid()?;
    let p = compute_perron(&rate, &grid)?;
    let path = cfg.out("U.csv");
    let mut out = create(&path)?;
    writeln!(out, "# rate={rate}")?;
    grid_header(&mut out, &grid)?;
    writeln!(out, "x,U")?;
    for j in p.u.window().indices() {
        writeln!(out, "{:.16e},{:.16e}", p.u.x(j), p.u.value(j))?;
    }
    out.flush()?;
    println!("int x U dx = {:.16e}", p.normalization);
    println!("residual = {:.3e}", p.residual);
    println!("tail sensitivity = {:.3e}", p.tail_sensitivity);
    println!("wrote {}", path.display());
    Ok(true)
}

pub fn project(cfg: &Config) -> Result<bool> {
    let rate = cfg.rate()?;
    let grid = cfg.grid()?;
    let mu = cfg.init()?;
    let n = cfg.usize("N")?;
    if n == 0 {
        return Err(Usage("key `N` must be positive".into()).into());
    }
    let t = cfg.f64("t")?;
    let f = cfg.test_function()?;
    let perron = Arc::new(compute_perron(&rate, &grid)?);
    let rho = periodic_limit_fejer(&mu, perron.clone(), n);
    let PeriodicLimit::FejerMoments { coeffs, .. } = &rho else { unreachable!("Fejér form") };
    let theta = period_phase(t);
    // density of ρ_t against dx
    let terms: Vec<(BoundaryEigen, Complex64)> = coeffs
        .iter()
        .map(|(&k, &c)| {
            let w = 1.0 - k.unsigned_abs() as f64 / n as f64;
            (BoundaryEigen::new(k), w * c * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * theta))
        })
        .collect();
    let path = cfg.out("rho.csv");
    let mut out = create(&path)?;
    writeln!(out, "# rate={rate}")?;
    writeln!(out, "# N={n} t={t:.16e}")?;
    grid_header(&mut out, &grid)?;
    writeln!(out, "x,rho")?;
    for j in perron.u.window().indices() {
        let d: f64 = terms.iter().map(|(e, c)| (c * e.u(&perron, j)).re).sum();
        writeln!(out, "{:.16e},{:.16e}", perron.u.x(j), d)?;
    }
    out.flush()?;
    println!("rho_t(phi) = {:.16e}", rho.phi_mass(t)?);
    println!("rho_t({f}) = {:.16e}", rho.evaluate(&|x| f.eval(x), t)?);
    println!("wrote {}", path.display());
    Ok(true)
}

pub fn entropy(cfg: &Config) -> Result<bool> {
    let rate = cfg.rate()?;
    let grid = cfg.grid()?;
    let f = cfg.test_function()?;
    let h: EntropyFunctional = cfg.str("H").parse().map_err(|e| Usage(format!("key `H`: {e}")))?;
    let t = cfg.horizon()?;
    let perron = compute_perron(&rate, &grid)?;
    let f0 = GridFunction::sample(&grid, |x| f.eval(x));
    let traj = monitor_trajectory(&f0, &rate, &perron, &h, t, cfg.usize("checkpoints")?)?;
    let path = cfg.out("ent.csv");
    let mut out = create(&path)?;
    writeln!(out, "# rate={rate}")?;
    writeln!(out, "# f={f} H={h}")?;
    writeln!(out, "t,E,D")?;
    for r in &traj.records {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", r.t, r.entropy, r.dissipation)?;
    }
    out.flush()?;
    println!("identity defect = {:.3e}", traj.identity_defect);
    println!("largest increase = {:.3e}", traj.max_increase);
    println!("wrote {}", path.display());
    Ok(true)
}

pub fn harris(cfg: &Config) -> Result<bool> {
    let rate = cfg.rate()?;
    let params = LyapunovParams::new(&rate, cfg.f64("q1")?, cfg.f64("q2")?, cfg.omega()?, cfg.f64("r_factor")?)
        .map_err(|e| Usage(format!("keys `q1`, `q2`, `omega`, `r_factor`: {e}")))?;
    let x_ref = cfg.x_ref()?;
    let cert = certify(&rate, &params, x_ref)?;
    let path = cfg.out("cert.txt");
    let mut out = create(&path)?;
    writeln!(out, "rate = {rate}")?;
    write!(out, "{cert}")?;
    out.flush()?;
    print!("{cert}");
    let x0 = x_ref.map_or_else(|| cfg.positive("x0"), Ok)?;
    let report = validate_certificate(&cert, &rate, x0, cfg.usize("periods")?)?;
    let rpath = Path::new(cfg.str("report")).to_path_buf();
    let mut rout = create(&rpath)?;
    report.write_csv(&mut rout)?;
    rout.flush()?;
    let within = report.rate_within(&cert);
    println!("rate_emp = {:.6} per period", report.rate_emp);
    println!("log margin = {:.6e}", report.log_margin);
    println!("empirical rate within certificate: {within}");
    println!("wrote {} and {}", path.display(), rpath.display());
    Ok(cert.is_valid() && within)
}

pub fn mc(cfg: &Config) -> Result<bool> {
    let rate = cfg.rate()?;
    let f = cfg.test_function()?;
    let plan = ReplicaPlan { replicas: cfg.usize("replicas")?, base_seed: cfg.parse("seed")?, cap: cfg.usize("cap")? };
    if plan.replicas == 0 {
        return Err(Usage("key `replicas` must be positive".into()).into());
    }
    let x0 = cfg.positive("x0")?;
    let t = cfg.horizon()?;
    let obs = observe(x0, &rate, t, &|x| f.eval(x), &plan)?;
    let path = cfg.out("mc.csv");
    let mut out = create(&path)?;
    writeln!(out, "# rate={rate} x0={x0:.16e} t={t:.16e} f={f} seed={}", plan.base_seed)?;
    writeln!(out, "replica,Z,N")?;
    for (i, o) in obs.iter().enumerate() {
        writeln!(out, "{i},{:.16e},{}", o.value, o.count)?;
    }
    out.flush()?;
    let est = Estimate::from_samples(&obs.iter().map(|o| o.value).collect::<Vec<_>>());
    println!("mean Z_t(f) = {:.16e} +- {:.3e}", est.mean, est.stderr);
    println!("wrote {}", path.display());
    Ok(true)
}

pub fn acceptance(cfg: &Config) -> Result<bool> {
    let profile: Profile = cfg.str("profile").parse().map_err(|e| Usage(format!("key `profile`: {e}")))?;
    let outcomes = match cfg.str("criterion") {
        "all" => run_all(profile),
        _ => {
            let id: usize = cfg.parse("criterion")?;
            vec![run_criterion(id, profile).map_err(|e| Usage(format!("key `criterion` = {id}: {e}")))?]
        }
    };
    for o in &outcomes {
        println!("{o}");
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed} of {} criteria passed", outcomes.len());
    Ok(passed == outcomes.len())
}

/// Looks up the handler for a subcommand name.
pub fn handler(name: &str) -> Option<fn(&Config) -> Result<bool>> {
    Some(match name {
        "dual" => dual,
        "measure" => measure,
        "eigen" => eigen,
        "project" => project,
        "entropy" => entropy,
        "harris" => harris,
        "mc" => mc,
        "acceptance" => acceptance,
        _ => return None,
    })
}

pub const SUBCOMMANDS: [(&str, &str); 8] = [
    ("dual", "evolve a test function with the dual solver; CSV t,x,value"),
    ("measure", "evolve an atomic measure on its dyadic combs; CSV n,position,weight"),
    ("eigen", "compute the Perron eigenfunction U; CSV x,U"),
    ("project", "Fejér form of the periodic limit of a measure; CSV x,rho"),
    ("entropy", "relative entropy and dissipation along a trajectory; CSV t,E,D"),
    ("harris", "Harris certificate and its validation report"),
    ("mc", "Monte Carlo branching replicas; CSV replica,Z,N"),
    ("acceptance", "run the acceptance criteria"),
];

