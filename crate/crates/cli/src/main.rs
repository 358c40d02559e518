mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Masked BNN accelerator simulation and side-channel evaluation.
///
/// Exit status: 0 pass, 1 leakage detected (or weights recovered, or a
/// probing violation), 2 usage or data error.
#[derive(Parser)]
#[command(name = "maskbnn", version)]
struct Cli {
    /// Worker threads; defaults to the available parallelism. Results do not
    /// depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a trace campaign and write traces, images, model and manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output prefix; files get .sctr, .images, .bnn and .manifest
        /// suffixes.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed-vs-random Welch t-test on a trace file.
    Tvla {
        traces: PathBuf,
        #[arg(long, default_value = "1", value_parser = ["1", "2", "freq"])]
        order: String,
        /// START..END, or `input` / `hidden-output` from --manifest.
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// CSV report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlation attack on the first k weights of node 0.
    Attack {
        traces: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Model holding the true weights; defaults to the run's model file.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Target samples START..END; defaults to the manifest's window.
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive probing check of a masked gadget.
    ProbeCheck {
        /// tg-sync, tg-glitchy, tg-lut, fa, rca2 or ksa2.
        gadget: String,
        #[arg(long, default_value = "transient", value_parser = ["settled", "transient"])]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a run manifest and any TVLA or attack CSV reports.
    Report {
        manifest: PathBuf,
        csv: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            anyhow::bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.cmd {
        Cmd::Simulate { config, out } => commands::simulate(&config, out),
        Cmd::Tvla {
            traces,
            order,
            window,
            manifest,
            out,
        } => commands::tvla(
            &traces,
            &order,
            window.as_deref(),
            manifest.as_deref(),
            out.as_deref(),
        ),
        Cmd::Attack {
            traces,
            images,
            manifest,
            k,
            model,
            window,
            out,
        } => commands::attack(commands::AttackArgs {
            traces: &traces,
            images: &images,
            manifest: &manifest,
            k,
            model: model.as_deref(),
            window: window.as_deref(),
            out: out.as_deref(),
        }),
        Cmd::ProbeCheck { gadget, mode, out } => {
            commands::probe_check(&gadget, &mode, out.as_deref())
        }
        Cmd::Report { manifest, csv } => commands::report(&manifest, &csv),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
