//! Reproducible experiment runner behind the `navier-cpi` binary.
//!
//! A run resolves a flat [`ExperimentConfig`], executes one subcommand into
//! an output directory and writes `manifest.json` next to the outputs. On
//! failure the partial outputs stay and a `FAILED` marker is added.

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::ExperimentConfig;
pub use manifest::{InputRecord, Manifest, RunDir, FAILURE_MARKER, MANIFEST_FILE};

use crate::error::{Error, Result};
use crate::scalar::on_axis;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "NAVIER_CPI_OUT";
pub const DEFAULT_OUT: &str = "navier-cpi-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::QuadratureNonConvergence { .. }
        | Error::StepUnderflow { .. }
        | Error::NonConvergence(_)
        | Error::Degenerate(_) => EXIT_NUMERICAL,
        Error::DimensionOutOfRange(_)
        | Error::InvalidInput(_)
        | Error::UnknownField { .. }
        | Error::CoincidentPoints(_)
        | Error::NearBoundary(_)
        | Error::Io(_)
        | Error::Parse(_) => EXIT_VALIDATION,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Constants,
    Green,
    VerifyExpansion,
    Flow,
    FlowBatch,
    EnumerateCpi,
    CheckAssumptions,
    Decompose,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Constants,
        Command::Green,
        Command::VerifyExpansion,
        Command::Flow,
        Command::FlowBatch,
        Command::EnumerateCpi,
        Command::CheckAssumptions,
        Command::Decompose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Green => "green",
            Command::VerifyExpansion => "verify-expansion",
            Command::Flow => "flow",
            Command::FlowBatch => "flow-batch",
            Command::EnumerateCpi => "enumerate-cpi",
            Command::CheckAssumptions => "check-assumptions",
            Command::Decompose => "decompose",
        }
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown command {s:?}")))
    }
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub command: Command,
    pub config: ExperimentConfig,
    pub inputs: BTreeMap<String, InputRecord>,
}

impl Request {
    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        for r in m.inputs.values() {
            r.verify()?;
        }
        let req = Request {
            command: m.command.parse()?,
            config: m.config.clone(),
            inputs: m.inputs.clone(),
        };
        if req.config_hash() != m.config_hash {
            return Err(Error::InvalidInput(
                "manifest config does not match its recorded hash".into(),
            ));
        }
        Ok(req)
    }

    pub fn config_hash(&self) -> String {
        manifest::config_hash(self.command.name(), &self.config, &self.inputs)
    }
}

/// Parses `x1,...,xn;y1,...,yn`, or `s,t` for the points `s e₁` and `t e₁`.
pub fn parse_probe(text: &str, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let list = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {v:?} in probe")))
            })
            .collect()
    };
    if let Some((x, y)) = text.split_once(';') {
        return Ok((list(x)?, list(y)?));
    }
    match list(text)?.as_slice() {
        [s, t] => Ok((on_axis(dim, *s), on_axis(dim, *t))),
        _ => Err(Error::Parse(
            "probe is \"x1,..,xn;y1,..,yn\" or \"s,t\"".into(),
        )),
    }
}

/// `--out`, then the config's `output_dir`, then `$NAVIER_CPI_OUT`, then
/// `./navier-cpi-out`.
pub fn output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return PathBuf::from(p);
    }
    match std::env::var(OUT_ENV) {
        Ok(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub exit_code: i32,
    pub summary: Option<serde_json::Value>,
    pub error: Option<String>,
    pub dir: PathBuf,
}

fn dispatch(req: &Request, out: &mut RunDir) -> Result<serde_json::Value> {
    let cfg = &req.config;
    cfg.validate()?;
    match req.command {
        Command::Constants => commands::constants(cfg, out),
        Command::Green => commands::green(cfg, out),
        Command::VerifyExpansion => commands::verify_expansion(cfg, out),
        Command::Flow => commands::flow(cfg, &req.inputs, out),
        Command::FlowBatch => commands::flow_batch(cfg, out),
        Command::EnumerateCpi => commands::enumerate_cpi(cfg, out),
        Command::CheckAssumptions => commands::check_assumptions(cfg, out),
        Command::Decompose => commands::decompose_cmd(cfg, &req.inputs, out),
    }
}

/// Runs one request into `dir`, always leaving a manifest behind.
pub fn run(req: &Request, dir: &Path) -> RunReport {
    let mut out = match RunDir::create(dir) {
        Ok(o) => o,
        Err(e) => {
            return RunReport {
                exit_code: exit_code(&e),
                summary: None,
                error: Some(e.to_string()),
                dir: dir.into(),
            };
        }
    };
    let result = dispatch(req, &mut out);
    let (code, summary, error) = match result {
        Ok(v) => (EXIT_OK, Some(v), None),
        Err(e) => (exit_code(&e), None, Some(e.to_string())),
    };
    let m = Manifest {
        schema: manifest::MANIFEST_SCHEMA,
        command: req.command.name().to_string(),
        config_hash: req.config_hash(),
        seed: req.config.seed,
        versions: manifest::versions(),
        config: ExperimentConfig {
            output_dir: None,
            ..req.config.clone()
        },
        inputs: req.inputs.clone(),
        status: if code == EXIT_OK { "ok" } else { "failed" }.to_string(),
        exit_code: code,
        outputs: out.outputs.clone(),
    };
    let mut error = error;
    if let Err(e) = out.write_json(MANIFEST_FILE, &m) {
        error.get_or_insert(e.to_string());
    }
    if let Some(msg) = &error {
        let _ = out.mark_failed(code, msg);
    }
    let code = if code == EXIT_OK && error.is_some() {
        EXIT_VALIDATION
    } else {
        code
    };
    RunReport {
        exit_code: code,
        summary,
        error,
        dir: dir.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("nope".parse::<Command>().is_err());
    }

    #[test]
    fn probe_forms() {
        let (x, y) = parse_probe("0.1,-0.2", 6).unwrap();
        assert_eq!(x, on_axis(6, 0.1));
        assert_eq!(y, on_axis(6, -0.2));
        let (x, y) = parse_probe("0.1,0;0,0.3", 2).unwrap();
        assert_eq!((x, y), (vec![0.1, 0.0], vec![0.0, 0.3]));
        assert!(parse_probe("0.1", 6).is_err());
        assert!(parse_probe("a,b", 6).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            exit_code(&Error::UnknownField {
                name: "x".into(),
                catalogue: String::new()
            }),
            2
        );
        assert_eq!(exit_code(&Error::NonConvergence("x".into())), 3);
        assert_eq!(exit_code(&Error::StepUnderflow { t: 0.0, steps: 1 }), 3);
    }

    #[test]
    fn unknown_field_writes_marker() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            k_field: "nope".into(),
            ..Default::default()
        };
        let req = Request {
            command: Command::EnumerateCpi,
            config: cfg,
            inputs: BTreeMap::new(),
        };
        let r = run(&req, tmp.path());
        assert_eq!(r.exit_code, 2);
        assert!(r.error.unwrap().contains("single-bump"));
        assert!(tmp.path().join(FAILURE_MARKER).exists());
        let m = manifest::load_manifest(&tmp.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.status, "failed");
        assert_eq!(Request::from_manifest(&m).unwrap(), req);
    }

    #[test]
    fn constants_run_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let req = Request {
            command: Command::Constants,
            config: ExperimentConfig {
                dim: 6,
                ..Default::default()
            },
            inputs: BTreeMap::new(),
        };
        assert_eq!(run(&req, a.path()).exit_code, 0);
        let m = manifest::load_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(
            run(&Request::from_manifest(&m).unwrap(), b.path()).exit_code,
            0
        );
        for f in ["constants.json", MANIFEST_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
    }
}
