//! `doclayout`: ingest, build tasks, train, generate, evaluate and render
//! document layouts. Every command writes `<output>.manifest.json`, and
//! `doclayout rerun --manifest <file>` repeats a run and checks its outputs.
//!
//! Exit codes: 0 success, 1 data or validation failure, 2 usage error.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::manifest::{manifest_path, Manifest};

#[derive(Debug, Parser)]
#[command(name = "doclayout", version, about = "Document layout generation and evaluation pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Label list as JSON (array, or object with `labels`). Defaults to the built-in coarse set.
    #[arg(long, global = true)]
    pub taxonomy: Option<PathBuf>,
    /// Coarse/fine expansion map as JSON; records are read with fine labels and projected.
    #[arg(long, global = true)]
    pub label_map: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Base directory for relative input and output paths.
    #[arg(long, global = true, env = "DOCLAYOUT_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate, normalize and deduplicate raw JSONL layout records.
    Ingest(commands::IngestArgs),
    /// Corpus statistics as JSON, with optional per-page feature CSV.
    Stats(commands::StatsArgs),
    /// Build task instances from clean layouts.
    BuildTasks(commands::BuildTasksArgs),
    /// Train the n-gram baseline.
    Train(commands::TrainArgs),
    /// Generate layouts from task prompts.
    Generate(commands::GenerateArgs),
    /// Snap noisy layouts to the training coordinate histograms.
    Refine(commands::RefineArgs),
    /// Score generated layouts against a reference set.
    Evaluate(commands::EvaluateArgs),
    /// Draw layouts as SVG.
    Render(commands::RenderArgs),
    /// Write a synthetic layout corpus.
    Synth(commands::SynthArgs),
    /// Repeat the run recorded in a manifest and verify its outputs.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Marks an error as a usage problem (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Stats(_) => "stats",
            Command::BuildTasks(_) => "build-tasks",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Refine(_) => "refine",
            Command::Evaluate(_) => "evaluate",
            Command::Render(_) => "render",
            Command::Synth(_) => "synth",
            Command::Rerun(_) => "rerun",
        }
    }

    fn seed_slot(&mut self) -> Option<&mut Option<u64>> {
        match self {
            Command::BuildTasks(a) => Some(&mut a.seed),
            Command::Generate(a) => Some(&mut a.seed),
            Command::Synth(a) => Some(&mut a.seed),
            _ => None,
        }
    }
}

/// Parses `args` (program name first), runs the command and writes its
/// manifest. Returns the manifest on success.
fn execute(args: Vec<OsString>) -> Result<Option<Manifest>> {
    let mut cli = Cli::try_parse_from(&args).map_err(|e| {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            let _ = e.print();
            std::process::exit(0);
        }
        usage(e.to_string())
    })?;
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        // Fails only if the pool already exists, as on a rerun in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    if let Command::Rerun(r) = &cli.command {
        rerun(&cli.global.resolve(&r.manifest))?;
        return Ok(None);
    }
    let seed = match cli.command.seed_slot() {
        Some(slot @ None) => {
            let s: u64 = rand::random();
            *slot = Some(s);
            recorded.extend(["--seed".to_string(), s.to_string()]);
            Some(s)
        }
        Some(Some(s)) => Some(*s),
        None => None,
    };
    let name = cli.command.name();
    let (record, failure) = commands::dispatch(&cli.global, &cli.command)?;
    let output = record.outputs_root.clone();
    let manifest = Manifest::build(name, recorded, seed, &record.record)?;
    manifest.write(&manifest_path(&output))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(Some(manifest)),
    }
}

fn rerun(path: &std::path::Path) -> Result<()> {
    let recorded = Manifest::read(path)?;
    let mut args: Vec<OsString> = vec!["doclayout".into()];
    args.extend(recorded.args.iter().map(OsString::from));
    let fresh = execute(args)?.ok_or_else(|| usage("manifest records a rerun"))?;
    let mut mismatched = Vec::new();
    for (old, new) in recorded.outputs.iter().zip(&fresh.outputs) {
        if old != new {
            mismatched.push(old.path.clone());
        }
    }
    if recorded.outputs.len() != fresh.outputs.len() {
        mismatched.push(format!("{} outputs recorded, {} produced", recorded.outputs.len(), fresh.outputs.len()));
    }
    if !mismatched.is_empty() {
        anyhow::bail!("rerun differs from manifest: {}", mismatched.join(", "));
    }
    println!("rerun reproduced {} output(s) byte-exactly", fresh.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    match execute(std::env::args_os().collect()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<Usage>() {
                eprint!("{}", u.0);
                if !u.0.ends_with('\n') {
                    eprintln!();
                }
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}
