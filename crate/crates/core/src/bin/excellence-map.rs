use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use excellence_map::address::CountMode;
use excellence_map::pipeline::{self, GeocoderChoice, PipelineConfig, PipelineError, RunReport};
use excellence_map::stats::Share;

/// Map the cities whose authors publish more top-cited papers than expected.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and merge export files into corpus.tsv and cities.txt.
    Parse {
        /// Export files or directories of export files.
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Resolve the cities of a corpus dump into geo.tsv.
    Geocode {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Compute the per-city statistics table.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        geo: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Render map overlays from a statistics table.
    Map {
        #[arg(long)]
        table: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Run every stage.
    Run {
        /// Export files or directories of export files.
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Args)]
struct Opts {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Top share of papers counted as highly cited, e.g. 0.10 or 10%.
    #[arg(long)]
    percentile: Option<Share>,
    /// Significance level, default 0.05.
    #[arg(long)]
    alpha: Option<f64>,
    /// Divide alpha by the number of testable cities.
    #[arg(long)]
    bonferroni: bool,
    /// Use the realized top share (ties included) as the expected share.
    #[arg(long)]
    empirical_share: bool,
    /// paper | occurrence
    #[arg(long)]
    count_mode: Option<CountMode>,
    /// offline | gazetteer:PATH | http:URL
    #[arg(long)]
    geocoder: Option<GeocoderChoice>,
    /// HTTP geocoder endpoint (implies the http backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// Persistent geocoding cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Cities per geocoding batch, default 1000.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Minimum spacing between geocoding batches, default 100.
    #[arg(long)]
    rate_limit_ms: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of gpsviz,geojson,table,html.
    #[arg(long)]
    formats: Option<String>,
    /// article | any | comma-separated document types.
    #[arg(long)]
    doc_types: Option<String>,
    /// Title of the HTML map.
    #[arg(long)]
    title: Option<String>,
    /// Background tiles for the HTML map, e.g. https://tile.example.org/{z}/{x}/{y}.png
    #[arg(long)]
    tile_url: Option<String>,
    /// Print every warning.
    #[arg(long, short)]
    verbose: bool,
}

impl Opts {
    fn config(&self, inputs: &[PathBuf]) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_config_file(path)?;
        }
        if !inputs.is_empty() {
            cfg.inputs = inputs.to_vec();
        }
        if let Some(p) = self.percentile {
            cfg.percentile = p;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg.bonferroni |= self.bonferroni;
        cfg.empirical_share |= self.empirical_share;
        if let Some(m) = self.count_mode {
            cfg.count_mode = m;
        }
        if let Some(g) = &self.geocoder {
            cfg.geocoder = g.clone();
        }
        if let Some(e) = &self.endpoint {
            cfg.geocoder = GeocoderChoice::Http {
                endpoint: e.clone(),
            };
        }
        if let Some(c) = &self.cache {
            cfg.cache = Some(c.clone());
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(ms) = self.rate_limit_ms {
            cfg.batch_interval = Duration::from_millis(ms);
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(f) = &self.formats {
            cfg.formats = pipeline::parse_formats(f).map_err(PipelineError::Config)?;
        }
        if let Some(d) = &self.doc_types {
            cfg.doc_types = d.parse().map_err(PipelineError::Config)?;
        }
        if let Some(t) = &self.title {
            cfg.title = t.clone();
        }
        if let Some(t) = &self.tile_url {
            cfg.tile_url = Some(t.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: &Command) -> Result<(RunReport, bool), PipelineError> {
    Ok(match command {
        Command::Parse { inputs, opts } => {
            (pipeline::run_parse(&opts.config(inputs)?)?, opts.verbose)
        }
        Command::Geocode { corpus, opts } => (
            pipeline::run_geocode(corpus, &opts.config(&[])?)?,
            opts.verbose,
        ),
        Command::Stats { corpus, geo, opts } => (
            pipeline::run_stats(corpus, geo, &opts.config(&[])?)?,
            opts.verbose,
        ),
        Command::Map { table, opts } => {
            (pipeline::run_map(table, &opts.config(&[])?)?, opts.verbose)
        }
        Command::Run { inputs, opts } => {
            (pipeline::run_pipeline(&opts.config(inputs)?)?, opts.verbose)
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok((report, verbose)) => {
            if verbose {
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
            } else if !report.warnings.is_empty() {
                eprintln!(
                    "{} warnings (use --verbose to list them)",
                    report.warnings.len()
                );
            }
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
