//! `mitosim`: experiment runner. Exit codes: 0 success, 1 a check or
//! criterion failed, 2 usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Arg, ArgAction, ArgMatches, Command};
use mitosim_core::Error as CoreError;

use config::{Config, Usage, KEYS};

fn keys_table() -> String {
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (file `key = value`, or --<key> VALUE, or --set key=value):\n");
    for k in KEYS {
        let d = if k.default.is_empty() { "(none)" } else { k.default };
        s.push_str(&format!("  {:<width$}  default {d}\n      {}\n", k.name, k.help));
    }
    s.push_str("\nEnvironment: MITOSIM_THREADS caps the worker threads.\n");
    s
}

fn key_args() -> Vec<Arg> {
    let mut args = vec![
        Arg::new("config").long("config").value_name("FILE").value_parser(clap::value_parser!(PathBuf)).help("flat key = value config file"),
        Arg::new("set").long("set").value_name("KEY=VALUE").action(ArgAction::Append).help("override any key"),
    ];
    for k in KEYS {
        let d = if k.default.is_empty() { "(none)" } else { k.default };
        let mut a = Arg::new(k.name).long(k.name).value_name("VALUE").allow_hyphen_values(true).help(format!("{} [default: {d}]", k.help));
        if k.name == "init" {
            a = a.visible_alias("mu");
        }
        args.push(a);
    }
    args
}

fn cli() -> Command {
    let mut cmd = Command::new("mitosim")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Numerical lab for the equal-mitosis growth-fragmentation equation")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help(keys_table());
    for (name, about) in commands::SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(name).about(about).args(key_args()).after_help(keys_table()));
    }
    cmd
}

/// Defaults, then the config file, then `--set`, then per-key flags.
fn resolve(m: &ArgMatches) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(p) = m.get_one::<PathBuf>("config") {
        cfg.load_file(p)?;
    }
    for kv in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    // `rate` first so explicit rate.* flags win over the shorthand
    let mut flagged: Vec<&str> = KEYS.iter().map(|k| k.name).filter(|n| m.contains_id(n) && m.get_one::<String>(n).is_some()).collect();
    flagged.sort_by_key(|n| *n != "rate");
    for n in flagged {
        cfg.set(n, m.get_one::<String>(n).expect("present"))?;
    }
    Ok(cfg)
}

fn set_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MITOSIM_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Usage(format!("MITOSIM_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for c in e.chain() {
        if c.downcast_ref::<Usage>().is_some() || c.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
        if let Some(ce) = c.downcast_ref::<CoreError>() {
            return match ce {
                CoreError::Domain(_)
                | CoreError::Window { .. }
                | CoreError::WindowExhausted { .. }
                | CoreError::Parameter(_)
                | CoreError::Parse(_)
                | CoreError::Io(_)
                | CoreError::Horizon { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run() -> Result<bool> {
    let matches = cli().try_get_matches().unwrap_or_else(|e| e.exit());
    set_threads()?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cfg = resolve(sub)?;
    let handler = commands::handler(name).expect("registered subcommand");
    handler(&cfg)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        cli().debug_assert();
    }

    #[test]
    fn flags_override_file_and_shorthand() {
        let m = cli().try_get_matches_from(["mitosim", "mc", "--rate", "monomial:K=2,r=3", "--rate.r", "1", "--set", "seed=7"]).unwrap();
        let cfg = resolve(m.subcommand().unwrap().1).unwrap();
        assert_eq!(cfg.rate().unwrap().to_string(), "monomial:K=2,r=1");
        assert_eq!(cfg.str("seed"), "7");
        let m = cli().try_get_matches_from(["mitosim", "harris", "--q1", "-1.5", "--omega", "0.5"]).unwrap();
        let cfg = resolve(m.subcommand().unwrap().1).unwrap();
        assert_eq!(cfg.f64("q1").unwrap(), -1.5);
    }

    #[test]
    fn help_lists_every_key() {
        let help = cli().find_subcommand_mut("eigen").unwrap().render_long_help().to_string();
        for k in KEYS {
            assert!(help.contains(&format!("--{}", k.name)), "{}", k.name);
        }
        assert!(keys_table().contains("monomial:K=1,r=2"));
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&Usage("x".into()).into()), 2);
        assert_eq!(exit_code(&CoreError::Parameter("x".into()).into()), 2);
        assert_eq!(exit_code(&CoreError::Refuted { period: 1, measured: 2.0, bound: 1.0 }.into()), 1);
    }
}
