use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use triplet_core::analysis::{run_analysis, AnalysisConfig};
use triplet_core::report::write_report;
use triplet_core::returns::{CovarianceMode, DateRange};
use triplet_core::simplex::HeronMode;
use triplet_core::synthetic::{synthetic_panel, write_panel_csv, SyntheticAsset, SyntheticSpec};

/// Portfolio selection on mean return, volatility and Hurst exponent.
#[derive(Debug, Parser)]
#[command(name = "triplet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full analysis on a price panel and write the report.
    Analyze(AnalyzeArgs),
    /// Write a synthetic fractional-noise price panel as CSV.
    Synth(SynthArgs),
}

/// Every flag can also be set through the environment variable shown, or
/// through a TOML/JSON config file. Flags beat the environment, which beats
/// the file.
#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// CSV with a date column followed by one price column per asset.
    #[arg(long, env = "TRIPLET_INPUT")]
    input: Option<PathBuf>,
    /// Sampling intervals in days: `1..10`, `1..=10` or `1,2,5`.
    #[arg(long, env = "TRIPLET_INTERVALS")]
    intervals: Option<String>,
    /// Simplex grid resolution q (step 1/q).
    #[arg(long, env = "TRIPLET_GRID")]
    grid: Option<u32>,
    /// Order of the detrending polynomial.
    #[arg(long, env = "TRIPLET_DFA_ORDER")]
    dfa_order: Option<usize>,
    /// DFA scales as `MIN:MAX[:COUNT]`; MAX may be `auto` (a quarter of the series).
    #[arg(long, env = "TRIPLET_SCALES")]
    scales: Option<String>,
    /// Output directory.
    #[arg(long, env = "TRIPLET_OUT")]
    out: Option<PathBuf>,
    /// First date to keep (YYYY-MM-DD).
    #[arg(long, env = "TRIPLET_FROM")]
    from: Option<NaiveDate>,
    /// Last date to keep (YYYY-MM-DD).
    #[arg(long, env = "TRIPLET_TO")]
    to: Option<NaiveDate>,
    /// Covariance normalization: sample or population.
    #[arg(long, env = "TRIPLET_COVARIANCE")]
    covariance: Option<CovarianceMode>,
    /// Risk aversion γ in R − γσ².
    #[arg(long, env = "TRIPLET_GAMMA")]
    gamma: Option<f64>,
    /// Heron semi-perimeter: standard (P/2) or third (P/3).
    #[arg(long, env = "TRIPLET_HERON")]
    heron: Option<HeronMode>,
    /// Keep every k-th grid point in the investing-space files.
    #[arg(long, env = "TRIPLET_STRIDE")]
    stride: Option<usize>,
    /// TOML or JSON config file, chosen by extension.
    #[arg(long, env = "TRIPLET_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Destination CSV file.
    #[arg(long)]
    out: PathBuf,
    /// Number of business days.
    #[arg(long, default_value_t = 1293)]
    length: usize,
    #[arg(long, default_value_t = 20130104)]
    seed: u64,
    /// First date (YYYY-MM-DD).
    #[arg(long, default_value = "2013-01-04")]
    start: NaiveDate,
    /// Assets as `NAME:HURST:DRIFT:VOL`, comma separated.
    #[arg(long)]
    assets: Option<String>,
}

fn parse_intervals(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let lo: usize = a.trim().parse().with_context(|| format!("bad interval range '{s}'"))?;
        let hi: usize = b.trim().parse().with_context(|| format!("bad interval range '{s}'"))?;
        if hi < lo {
            bail!("empty interval range '{s}'");
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().with_context(|| format!("bad interval '{t}'")))
        .collect()
}

fn parse_scales(s: &str) -> Result<(usize, Option<usize>, Option<usize>)> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if !(2..=3).contains(&parts.len()) {
        bail!("scales must look like MIN:MAX or MIN:MAX:COUNT, got '{s}'");
    }
    let min = parts[0]
        .parse()
        .with_context(|| format!("bad minimum scale '{}'", parts[0]))?;
    let max = match parts[1] {
        "auto" => None,
        m => Some(m.parse().with_context(|| format!("bad maximum scale '{m}'"))?),
    };
    let count = parts
        .get(2)
        .map(|c| c.parse().with_context(|| format!("bad scale count '{c}'")))
        .transpose()?;
    Ok((min, max, count))
}

fn read_config_file(path: &Path) -> Result<AnalysisConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("[config] cannot read {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let mut config: AnalysisConfig = match ext.as_deref() {
        Some("toml") => {
            toml::from_str(&text).with_context(|| format!("[config] invalid TOML in {}", path.display()))?
        }
        Some("json") => {
            serde_json::from_str(&text).with_context(|| format!("[config] invalid JSON in {}", path.display()))?
        }
        _ => bail!("[config] {} must end in .toml or .json", path.display()),
    };
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut config.input, &mut config.output_dir] {
        if !p.as_os_str().is_empty() && p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}

fn build_config(args: AnalyzeArgs) -> Result<AnalysisConfig> {
    let mut config = match &args.config {
        Some(path) => read_config_file(path)?,
        None => AnalysisConfig::default(),
    };
    if let Some(p) = args.input {
        config.input = p;
    }
    if let Some(s) = &args.intervals {
        config.intervals = parse_intervals(s).context("[config] --intervals")?;
    }
    if let Some(q) = args.grid {
        config.grid_resolution = q;
    }
    if let Some(o) = args.dfa_order {
        config.dfa.poly_order = o;
    }
    if let Some(s) = &args.scales {
        let (min, max, count) = parse_scales(s).context("[config] --scales")?;
        config.dfa.min_scale = min;
        config.dfa.max_scale = max;
        config.dfa.scales = None;
        if let Some(c) = count {
            config.dfa.scale_count = c;
        }
    }
    if let Some(o) = args.out {
        config.output_dir = o;
    }
    if args.from.is_some() || args.to.is_some() {
        let mut range = config.date_range.unwrap_or_default();
        range.from = args.from.or(range.from);
        range.to = args.to.or(range.to);
        config.date_range = Some(range);
    }
    if let Some(c) = args.covariance {
        config.covariance_mode = c;
    }
    if let Some(g) = args.gamma {
        config.risk_aversion = g;
    }
    if let Some(h) = args.heron {
        config.heron_mode = h;
    }
    if let Some(s) = args.stride {
        config.investing_space_stride = s;
    }
    if config.input.as_os_str().is_empty() {
        bail!("[config] no input file given (use --input, TRIPLET_INPUT or the config file)");
    }
    if let Some(DateRange {
        from: Some(f),
        to: Some(t),
    }) = config.date_range
    {
        if f > t {
            bail!("[config] --from {f} is after --to {t}");
        }
    }
    Ok(config)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let config = build_config(args)?;
    let report = run_analysis(&config)?;
    let files = write_report(&report, &config.output_dir)?;
    println!(
        "wrote {} files to {} ({} assets, intervals {:?})",
        files.len(),
        config.output_dir.display(),
        report.assets.len(),
        config.intervals
    );
    for block in &report.blocks {
        if let Some(row) = &block.pareto.row {
            println!(
                "  τ = {:>2}: pareto {} [{}]",
                block.interval_days,
                triplet_core::report::format_weight(&row.weight),
                row.method
            );
        } else {
            println!("  τ = {:>2}: no pareto weight", block.interval_days);
        }
    }
    Ok(())
}

fn parse_assets(s: &str) -> Result<Vec<SyntheticAsset>> {
    s.split(',')
        .map(|item| {
            let f: Vec<&str> = item.split(':').map(str::trim).collect();
            if f.len() != 4 {
                bail!("asset '{item}' must look like NAME:HURST:DRIFT:VOL");
            }
            let num = |x: &str| {
                x.parse::<f64>()
                    .with_context(|| format!("bad number '{x}' in '{item}'"))
            };
            Ok(SyntheticAsset::new(f[0], num(f[1])?, num(f[2])?, num(f[3])?))
        })
        .collect()
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec {
        length: args.length,
        seed: args.seed,
        start: args.start,
        ..SyntheticSpec::default()
    };
    if let Some(a) = &args.assets {
        spec.assets = parse_assets(a)?;
    }
    let panel = synthetic_panel(&spec)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let file = fs::File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_panel_csv(&panel, std::io::BufWriter::new(file))?;
    println!(
        "wrote {} rows for {} assets to {}",
        panel.len(),
        panel.n_assets(),
        args.out.display()
    );
    Ok(())
}

/// Joins the cause chain, skipping causes already quoted by their parent.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Synth(s) => synth(s),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::FAILURE
        }
    }
}
