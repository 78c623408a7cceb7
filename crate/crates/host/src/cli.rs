//! `empc design | simulate | serve | report`.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use empc_core::harness::{compute_metrics, run_closed_loop, Controller, Scenario};
use empc_core::runtime::{footprint_from_counts, ControlLaw, LawTables, ScalarWidth, CODE_ALLOWANCE_BYTES};

use crate::config::ProjectConfig;
use crate::design::{design_report, footprint_lines, run_design, LoopModel};
use crate::scenario::load_scenario;
use crate::serve::{serve_listener, TcpTransport};
use crate::trace::{metrics_text, write_trace};

/// Exit status of `simulate` when the trace breaks the input bounds.
pub const EXIT_VIOLATION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "empc", version, about = "Explicit MPC design, co-simulation and table tooling")]
pub struct Cli {
    /// Project config (key = value); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides `out` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Validation sampling seed for `design`; replaces every noise seed for `simulate`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scalar width of the written table file.
    #[arg(long, global = true, value_parser = ["4", "8"])]
    pub scalar_width: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    Empc,
    Pi,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the explicit law, validate it and write the table files.
    Design,
    /// Run a closed-loop scenario and write a CSV trace plus metrics.
    Simulate {
        #[arg(long, value_enum, default_value = "empc")]
        controller: ControllerKind,
        /// Scenario file; the built-in tracking scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Route every sample through the request/response frames.
        #[arg(long)]
        protocol: bool,
        /// Talk to a running `empc serve` instead of an in-process law.
        #[arg(long, value_name = "ADDR")]
        connect: Option<String>,
    },
    /// Answer request frames over TCP from the table file.
    Serve {
        /// Listen address, overrides `serve.endpoint`.
        #[arg(long)]
        listen: Option<String>,
        /// Exit after this many connections.
        #[arg(long)]
        connections: Option<usize>,
    },
    /// Summarize a table file: regions, half-spaces, bytes, search cost.
    Report {
        /// Table file; the configured one when omitted.
        artifact: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<ProjectConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ProjectConfig::load(p)?,
        None => ProjectConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
        cfg.table = None;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = &cli.scalar_width {
        cfg.scalar_width = ScalarWidth::from_bytes(w.parse()?).ok_or_else(|| anyhow!("bad scalar width {w}"))?;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Design => design(&cfg),
        Command::Simulate {
            controller,
            scenario,
            protocol,
            connect,
        } => simulate(&cfg, *controller, scenario.as_deref(), *protocol, connect.as_deref(), cli.seed),
        Command::Serve { listen, connections } => serve(&cfg, listen.as_deref(), *connections),
        Command::Report { artifact } => report(&artifact.clone().unwrap_or_else(|| cfg.table_path())),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn design(cfg: &ProjectConfig) -> anyhow::Result<ExitCode> {
    let d = run_design(cfg)?;
    let tables = LawTables::from_law(&d.law, cfg.scalar_width)?;
    let table_path = cfg.table_path();
    write(&table_path, tables.to_bytes())?;
    write(&table_path.with_extension("h"), tables.to_static_source("empc"))?;
    let mut text = design_report(cfg, &d);
    text.push_str(&format!(
        "table file {} ({}-byte scalars)\n",
        table_path.file_name().unwrap_or_default().to_string_lossy(),
        cfg.scalar_width.bytes()
    ));
    write(&cfg.out.join("design.txt"), &text)?;
    print!("{text}");
    if d.validation.coverage < 1.0 || d.validation.qp_failures > 0 {
        bail!("validation failed: coverage {:.6}", d.validation.coverage);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn load_tables(path: &Path) -> anyhow::Result<LawTables> {
    let bytes = fs::read(path).with_context(|| format!("missing table file {}", path.display()))?;
    LawTables::from_bytes(&bytes).map_err(|e| anyhow!("corrupt table file {}: {e}", path.display()))
}

fn simulate(
    cfg: &ProjectConfig,
    kind: ControllerKind,
    scenario: Option<&Path>,
    protocol: bool,
    connect: Option<&str>,
    seed: Option<u64>,
) -> anyhow::Result<ExitCode> {
    let model = LoopModel::build(cfg)?;
    let mut sc = match scenario.map(Path::to_path_buf).or_else(|| cfg.scenario.clone()) {
        Some(p) => load_scenario(&p, cfg.ts)?,
        None => Scenario::default_tracking(cfg.ts),
    };
    sc.protocol_in_loop |= protocol;
    if let Some(s) = seed {
        for n in &mut sc.noise {
            n.seed = s;
        }
    }
    let tables;
    let mut controller = match (kind, connect) {
        (ControllerKind::Pi, None) => {
            let pi = cfg.pi();
            pi.validate()?;
            Controller::Pi(pi)
        }
        (ControllerKind::Pi, Some(_)) => bail!("--connect needs --controller empc"),
        (ControllerKind::Empc, Some(addr)) => {
            let link = TcpTransport::connect(addr, Duration::from_secs(5))
                .with_context(|| format!("cannot reach controller at {addr}"))?;
            sc.protocol_in_loop = true;
            Controller::Remote(Box::new(link))
        }
        (ControllerKind::Empc, None) => {
            tables = load_tables(&cfg.table_path())?;
            let layout = model.layout();
            if tables.dim() != layout.dim() || tables.inputs() != layout.inputs {
                bail!(
                    "table file {} is for dim {} / {} inputs, config needs {} / {}; rerun design",
                    cfg.table_path().display(),
                    tables.dim(),
                    tables.inputs(),
                    layout.dim(),
                    layout.inputs
                );
            }
            Controller::Explicit(&tables)
        }
    };
    let trace = run_closed_loop(&model.setup(), &sc, &mut controller)?;
    let metrics = compute_metrics(&trace).ok_or_else(|| anyhow!("empty trace"))?;
    let violations = trace.input_violations(cfg.u_min, cfg.u_max);
    let name = trace.controller.clone();
    let mut csv = Vec::new();
    write_trace(&trace, &mut csv)?;
    write(&cfg.out.join(format!("trace_{name}.csv")), csv)?;
    let text = metrics_text(&trace, &metrics, violations);
    write(&cfg.out.join(format!("metrics_{name}.txt")), &text)?;
    print!("{text}");
    if violations > 0 {
        eprintln!("input bounds violated at {violations} samples");
        return Ok(ExitCode::from(EXIT_VIOLATION));
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(cfg: &ProjectConfig, listen: Option<&str>, connections: Option<usize>) -> anyhow::Result<ExitCode> {
    let tables = load_tables(&cfg.table_path())?;
    let addr = listen.unwrap_or(&cfg.endpoint);
    let listener = TcpListener::bind(addr).with_context(|| format!("cannot listen on {addr}"))?;
    eprintln!("serving {} regions on {}", tables.regions(), listener.local_addr()?);
    let stats = serve_listener(&tables, &listener, connections)?;
    eprintln!(
        "{} requests answered, {} malformed, {} outside all regions",
        stats.answered, stats.frame_errors, stats.search_errors
    );
    Ok(ExitCode::SUCCESS)
}

pub fn report_text(tables: &LawTables) -> String {
    let mut out = String::new();
    let h: Vec<usize> = tables.halfspaces.iter().map(|&h| h as usize).collect();
    let total = tables.total_halfspaces();
    out.push_str(&format!(
        "regions M = {}\nparameter dim = {}, inputs = {}, stored scalars {} bytes\n",
        h.len(),
        tables.dim(),
        tables.inputs(),
        tables.footprint().scalar_width
    ));
    let list: Vec<String> = h.iter().map(usize::to_string).collect();
    out.push_str(&format!("half-spaces per region: {}\ntotal half-spaces = {total}\n", list.join(" ")));
    out.push_str(&format!("worst-case dot products per evaluation = {total}\n"));
    for w in [ScalarWidth::Four, ScalarWidth::Eight] {
        footprint_lines(&mut out, &footprint_from_counts(&h, tables.dim(), tables.inputs(), w));
    }
    out.push_str(&format!("code allowance (estimate, not in table bytes) = {CODE_ALLOWANCE_BYTES}\n"));
    out
}

fn report(path: &Path) -> anyhow::Result<ExitCode> {
    let tables = load_tables(path)?;
    print!("{}", report_text(&tables));
    Ok(ExitCode::SUCCESS)
}
