use clap::{Parser, Subcommand};
use navier_cpi::cli::{self, manifest, Command, ExperimentConfig, InputRecord, Request};
use navier_cpi::Error;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Bubbles, Green functions, energy expansions and pseudogradient flows for
/// the critical Navier bilaplacian problem on the unit ball.
#[derive(Parser)]
#[command(name = "navier-cpi", version)]
struct Args {
    /// Flat TOML experiment config; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $NAVIER_CPI_OUT, then ./navier-cpi-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long = "k-field", global = true)]
    k_field: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form constant set as JSON.
    Constants {
        /// Also estimate c4 from a quadrature pairing.
        #[arg(long)]
        estimate_c4: bool,
    },
    /// G, H and ∇H at a pair of points.
    Green {
        /// `x1,..,xn;y1,..,yn`, or `s,t` for points on the first axis.
        #[arg(long, allow_hyphen_values = true)]
        probe: Option<String>,
    },
    /// Quadrature vs expansion energy along a λ ladder.
    VerifyExpansion {
        #[arg(long, value_delimiter = ',')]
        lambda_ladder: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        center: Option<Vec<f64>>,
    },
    /// Integrates one flow from a JSON initial state.
    Flow {
        #[arg(long)]
        init: PathBuf,
        /// Flat TOML with flow constants, overriding the config.
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Sampling estimate of intersection numbers from f_λ initial data.
    FlowBatch {
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Critical points at infinity with the assumption report.
    EnumerateCpi,
    /// Assumption checks only.
    CheckAssumptions,
    /// Bubble decomposition of a grid function or synthetic field (JSON).
    Decompose {
        #[arg(long)]
        field: PathBuf,
    },
    /// Re-executes the run recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn build(args: Args) -> Result<(Request, Option<PathBuf>), Error> {
    let out = args.out.clone();
    if let Cmd::Rerun { manifest } = &args.cmd {
        let m = manifest::load_manifest(manifest)?;
        return Ok((Request::from_manifest(&m)?, out));
    }
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = args.dim {
        cfg.dim = n;
    }
    if let Some(k) = args.k_field {
        cfg.k_field = k;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let mut inputs = BTreeMap::new();
    let constants_file = |cfg: &mut ExperimentConfig, p: &Option<PathBuf>| -> Result<(), Error> {
        if let Some(p) = p {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            cfg.merge_constants(&text)?;
        }
        Ok(())
    };
    let command = match &args.cmd {
        Cmd::Constants { estimate_c4 } => {
            cfg.estimate_c4 |= estimate_c4;
            Command::Constants
        }
        Cmd::Green { probe } => {
            if let Some(p) = probe {
                (cfg.probe_x, cfg.probe_y) = cli::parse_probe(p, cfg.dim)?;
            }
            Command::Green
        }
        Cmd::VerifyExpansion {
            lambda_ladder,
            center,
        } => {
            if let Some(l) = lambda_ladder {
                cfg.lambda_ladder = l.clone();
            }
            if let Some(c) = center {
                cfg.center = c.clone();
            }
            Command::VerifyExpansion
        }
        Cmd::Flow { init, constants } => {
            constants_file(&mut cfg, constants)?;
            inputs.insert("init".to_string(), InputRecord::from_file(init)?);
            Command::Flow
        }
        Cmd::FlowBatch { constants } => {
            constants_file(&mut cfg, constants)?;
            Command::FlowBatch
        }
        Cmd::EnumerateCpi => Command::EnumerateCpi,
        Cmd::CheckAssumptions => Command::CheckAssumptions,
        Cmd::Decompose { field } => {
            inputs.insert("field".to_string(), InputRecord::from_file(field)?);
            Command::Decompose
        }
        Cmd::Rerun { .. } => unreachable!(),
    };
    Ok((
        Request {
            command,
            config: cfg,
            inputs,
        },
        out,
    ))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (req, out) = match build(args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(cli::exit_code(&e) as u8);
        }
    };
    let dir = cli::output_dir(out.as_deref(), &req.config);
    let report = cli::run(&req, &dir);
    if let Some(s) = &report.summary {
        let text = serde_json::to_string_pretty(s).expect("serializable");
        // A closed pipe is not an error worth reporting.
        let _ = writeln!(std::io::stdout(), "{text}");
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
        eprintln!(
            "partial outputs and a {} marker are in {}",
            cli::FAILURE_MARKER,
            dir.display()
        );
    }
    ExitCode::from(report.exit_code as u8)
}
