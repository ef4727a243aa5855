use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use settlemap::pipeline::{
    run_allocate, run_clusters, run_detect, run_render, run_synth, run_train, run_validate,
    PipelineConfig, StageOutput, Style,
};
use settlemap::{Error, Result};

/// Settlement detection and population mapping pipeline.
///
/// Each subcommand runs one stage. Stages read their inputs from and write
/// their outputs to the paths named in the config file, so they can be run
/// one after another or resumed from any point.
#[derive(Parser, Debug)]
#[command(name = "settlemap", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Key-value config file; relative paths inside it resolve against its
    /// directory. Without it, defaults apply relative to the working directory.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Overrides `threads`.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic world, its census and truth layers, and a training corpus.
    Synth,
    /// Train the patch classifier and the feedback segmenter on the corpus.
    Train,
    /// Classify imagery tiles into built and built-fraction rasters.
    Detect,
    /// Spread census counts over the detected settled cells.
    Allocate,
    /// Find urban clusters and rural distance distributions.
    Clusters,
    /// Score the detected settlement layer against the references.
    Validate,
    /// Render an ASCII grid to a PPM image with a legend.
    Render {
        /// Raster to draw. Overrides `render_input`.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// binary, fraction, population-log or clusters. Overrides `render_style`.
        #[arg(long)]
        style: Option<Style>,
        /// Image path. Overrides `render_output`.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

fn load(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(out: &StageOutput) {
    for n in &out.notes {
        println!("{}: {n}", out.stage);
    }
    for f in &out.files {
        println!("{}: wrote {}", out.stage, f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load(&cli.global)?;
    log::debug!("config hash {}", cfg.hash());
    match cli.command {
        Command::Synth => report(&run_synth(&cfg)?),
        Command::Train => report(&run_train(&cfg)?),
        Command::Detect => {
            let (out, cov) = run_detect(&cfg)?;
            report(&out);
            println!(
                "detect: analyzed {:.4} of cells, {:.4} built",
                cov.analyzed_fraction, cov.built_fraction
            );
        }
        Command::Allocate => report(&run_allocate(&cfg)?.0),
        Command::Clusters => report(&run_clusters(&cfg)?),
        Command::Validate => {
            let (out, summary) = run_validate(&cfg)?;
            report(&out);
            println!("{}", summary.to_json());
        }
        Command::Render { input, style, output } => {
            // command-line paths are relative to the working directory
            let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
            if let Some(p) = input {
                cfg.render_input = Some(cwd.join(p));
            }
            if let Some(p) = output {
                cfg.render_output = Some(cwd.join(p));
            }
            if let Some(s) = style {
                cfg.render_style = s;
            }
            report(&run_render(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("settlemap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
