//! `panelwise` command line: the HTTP server plus offline tools over the
//! data directory.

pub mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use panelwise_core::analytics::usage_for_profile;
use panelwise_core::replay::{run_with_store, ReplayScript};
use panelwise_core::scene::svg::render_scene;
use panelwise_core::store::Store;
use panelwise_core::{JournalEntry, SceneDocument};
use serde::Serialize;

pub use config::{Config, ConfigError};

pub type Error = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser)]
#[command(name = "panelwise", version, about = "Guided comic journaling engine")]
pub struct Cli {
    /// TOML config file; `PANELWISE_*` variables override it.
    #[arg(long, global = true, env = "PANELWISE_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        /// Address to bind; the port comes from config.
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Run a replay script against the mock provider and print a summary.
    Replay {
        script: PathBuf,
        /// Write the transcript here.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Fail unless the transcript equals this file byte for byte.
        #[arg(long)]
        check: Option<PathBuf>,
        /// Keep the session and journal in the configured data directory.
        #[arg(long)]
        persist: bool,
    },
    /// Write a journal as a portable JSON bundle.
    Export {
        journal_id: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Leave out the rendered panel SVGs.
        #[arg(long)]
        no_svg: bool,
    },
    /// Print usage statistics over a profile's finished sessions.
    Stats { profile_id: String },
    /// Render one scene document as SVG.
    RenderScene {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Serialize)]
pub struct ExportBundle {
    pub format: &'static str,
    pub journal: JournalEntry,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub svgs: BTreeMap<String, String>,
}

pub const BUNDLE_FORMAT: &str = "panelwise-journal/1";

pub fn export_bundle(journal: JournalEntry, with_svg: bool) -> ExportBundle {
    let svgs = if with_svg {
        journal
            .panels
            .iter()
            .map(|p| (p.scene.slot.to_string(), render_scene(&p.scene)))
            .collect()
    } else {
        BTreeMap::new()
    };
    ExportBundle {
        format: BUNDLE_FORMAT,
        journal,
        svgs,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()).into())
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display()).into())
}

fn emit(output: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), Error> {
    match output {
        Some(path) => write(path, text),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn replay(
    cfg: &Config,
    script: &Path,
    golden: Option<&Path>,
    check: Option<&Path>,
    persist: bool,
    out: &mut dyn Write,
) -> Result<(), Error> {
    let script = ReplayScript::from_json(&read(script)?).map_err(|e| format!("{}: {e}", script.display()))?;
    let store = if persist { cfg.store()? } else { Store::in_memory() };
    let report = run_with_store(&script, store)?;
    let text = report.to_golden();
    let unmatched = report.calls.iter().filter(|c| !c.matched).count();
    let errors = report.steps.iter().filter(|s| s.error.is_some()).count();
    writeln!(
        out,
        "steps {}  errors {}  provider calls {} ({} unmatched)  phase {:?}",
        report.steps.len(),
        errors,
        report.calls.len(),
        unmatched,
        report.session.phase
    )?;
    if let Some(j) = &report.journal {
        writeln!(out, "journal {}  \"{}\"", j.id, j.title)?;
        for p in &j.panels {
            writeln!(out, "  {}: {}", p.scene.slot, p.description.sentences.join(" "))?;
        }
    }
    if let Some(path) = golden {
        write(path, &text)?;
    }
    if let Some(path) = check {
        if read(path)? != text {
            return Err(format!("transcript differs from {}", path.display()).into());
        }
        writeln!(out, "matches {}", path.display())?;
    }
    Ok(())
}

async fn serve(cfg: &Config, host: std::net::IpAddr) -> Result<(), Error> {
    let engine = cfg.engine()?;
    let app = panelwise_api::router(panelwise_api::AppState::new(engine));
    let addr = SocketAddr::new(host, cfg.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, data_dir = %cfg.data_dir.display(), "listening");
    axum::serve(listener, app).await?;
    Ok(())
}

/// Runs one command, writing its report to `out`.
pub fn run(cli: Cli, env: impl Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<(), Error> {
    let cfg = Config::load(cli.config.as_deref(), env)?;
    match cli.command {
        Command::Serve { host } => tokio::runtime::Runtime::new()?.block_on(serve(&cfg, host)),
        Command::Replay {
            script,
            golden,
            check,
            persist,
        } => replay(&cfg, &script, golden.as_deref(), check.as_deref(), persist, out),
        Command::Export {
            journal_id,
            output,
            no_svg,
        } => {
            let journal = cfg.store()?.load_journal(&journal_id)?;
            let mut text = serde_json::to_string_pretty(&export_bundle(journal, !no_svg))?;
            text.push('\n');
            emit(output.as_deref(), &text, out)
        }
        Command::Stats { profile_id } => {
            let stats = usage_for_profile(&cfg.store()?, Some(&profile_id))?;
            let mut text = serde_json::to_string_pretty(&stats)?;
            text.push('\n');
            emit(None, &text, out)
        }
        Command::RenderScene { scene, output } => {
            let doc: SceneDocument =
                serde_json::from_str(&read(&scene)?).map_err(|e| format!("{}: {e}", scene.display()))?;
            write(&output, &render_scene(&doc))
        }
    }
}
