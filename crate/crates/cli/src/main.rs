use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use spekit::correlator::{self, Binning, DecayHistogram, G2Curve};
use spekit::fit::{self, FitError, G2Init, IrfModel, LifetimeInit, OdmrInit, SaturationInit};
use spekit::odmr::{self, LineShape, OdmrSpectrum, SensitivityInputs};
use spekit::pipeline::{self, Format, Manifest, PipelineError};
use spekit::scenario::{self, Mode, Product, Scenario};
use spekit::sim::PulseTrain;
use spekit::stream::PhotonStream;

/// Simulate, correlate and fit photon statistics of cavity-coupled emitters.
#[derive(Parser, Debug)]
#[command(name = "spekit", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for data products.
    #[arg(long, global = true, default_value = "spekit-out")]
    out_dir: PathBuf,
    /// Format of tabular products.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Concurrent sweep instances (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a scenario (preset name, TOML file, or manifest.json to reproduce).
    Run { scenario: String },
    /// Simulate photon streams for a scenario and write them as PTSM files.
    Simulate { scenario: String },
    /// Correlate two streams into g2, or fold one stream into a decay histogram.
    Correlate(CorrelateArgs),
    /// Fit a measured product.
    Fit(FitArgs),
    /// ODMR spectrum of a scenario, or the sensitivity for given line parameters.
    Odmr(OdmrArgs),
    /// Run a scenario once per value of a numeric parameter.
    Sweep(SweepArgs),
    /// List built-in scenarios, or print one.
    Presets { name: Option<String> },
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    /// Stream files (.ptsm or .csv). Two for g2, one with --period for a decay histogram.
    #[arg(required = true, num_args = 1..=2)]
    streams: Vec<PathBuf>,
    /// Correlation window, ps.
    #[arg(long, default_value_t = 1_000_000)]
    window: u64,
    /// Uniform bin width, ps.
    #[arg(long, default_value_t = 100)]
    bin_width: u64,
    /// Use log-spaced bins starting at this edge, ps.
    #[arg(long)]
    log_first_edge: Option<u64>,
    #[arg(long, default_value_t = 20)]
    per_decade: u32,
    /// Pulse period, ps: build a decay histogram instead of g2.
    #[arg(long)]
    period: Option<u64>,
    /// Split the first stream into this many pieces swept in parallel.
    #[arg(long, default_value_t = 0)]
    chunks: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitKind {
    Lifetime,
    Saturation,
    G2,
    Odmr,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(value_enum)]
    kind: FitKind,
    /// Input table (.csv or .json).
    input: PathBuf,
    /// IRF standard deviation for lifetime fits, ps.
    #[arg(long, default_value_t = 0.0)]
    irf_sigma: f64,
    /// IRF centre for lifetime fits, ps.
    #[arg(long, default_value_t = 0.0)]
    irf_t0: f64,
    /// Initial lifetime, ps.
    #[arg(long, default_value_t = 1000.0)]
    tau_init: f64,
}

#[derive(Args, Debug)]
struct OdmrArgs {
    /// Scenario in odmr mode; omit to evaluate the sensitivity alone.
    scenario: Option<String>,
    /// Linewidth (FWHM), MHz.
    #[arg(long, requires_all = ["contrast", "rate"], conflicts_with = "scenario")]
    delta_nu_mhz: Option<f64>,
    #[arg(long)]
    contrast: Option<f64>,
    /// Detected rate, cts/s.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, value_enum, default_value = "lorentzian")]
    line_shape: ShapeArg,
    /// Explicit lineshape factor, overriding --line-shape.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    g_factor: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeArg {
    Lorentzian,
    Gaussian,
}

#[derive(Args, Debug)]
struct SweepArgs {
    scenario: String,
    /// Dotted path of a numeric field, e.g. cavity.context.d.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated values; defaults to the scenario's [sweep] table.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Also write a full bundle per sweep point under out-dir.
    #[arg(long)]
    bundles: bool,
}

/// Exit code 1: the input or configuration is invalid.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(e: impl std::fmt::Display) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

fn pipeline_err(e: PipelineError) -> anyhow::Error {
    if e.is_validation() {
        invalid(e)
    } else {
        e.into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load(name: &str, seed: Option<u64>) -> anyhow::Result<Scenario> {
    let mut s = Scenario::load(name).map_err(invalid)?;
    if seed.is_some() {
        s.acquisition.seed = seed;
    }
    Ok(s)
}

fn report(m: &Manifest, dir: &Path) -> anyhow::Result<ExitCode> {
    println!("wrote {} products to {}", m.products.len(), dir.display());
    if m.complete {
        Ok(ExitCode::SUCCESS)
    } else {
        for e in &m.errors {
            eprintln!("failed: {e}");
        }
        eprintln!("manifest marked incomplete");
        Ok(ExitCode::from(2))
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    let format: Format = cli.format.into();
    let dir = cli.out_dir.as_path();
    match cli.cmd {
        Cmd::Run { scenario } => {
            let m = if scenario.ends_with(".json") {
                let text = std::fs::read_to_string(&scenario).with_context(|| format!("reading {scenario}"))?;
                let m = Manifest::from_json(&text).map_err(invalid)?;
                let mut s = m.scenario;
                if cli.seed.is_some() {
                    s.acquisition.seed = cli.seed;
                }
                pipeline::run(s, dir, m.format).map_err(pipeline_err)?
            } else {
                pipeline::run(load(&scenario, cli.seed)?, dir, format).map_err(pipeline_err)?
            };
            report(&m, dir)
        }
        Cmd::Simulate { scenario } => {
            let mut s = load(&scenario, cli.seed)?;
            s.outputs = match s.acquisition.mode {
                Mode::Odmr => vec![Product::Spectrum, Product::Summary],
                _ => vec![Product::Streams, Product::Summary],
            };
            let m = pipeline::run(s, dir, format).map_err(pipeline_err)?;
            report(&m, dir)
        }
        Cmd::Correlate(a) => correlate(a, format, dir),
        Cmd::Fit(a) => fit_cmd(a, dir),
        Cmd::Odmr(a) => odmr_cmd(a, cli.seed, format, dir),
        Cmd::Sweep(a) => sweep_cmd(a, cli.seed, cli.jobs, format, dir),
        Cmd::Presets { name } => {
            match name {
                None => scenario::preset_names().for_each(|n| println!("{n}")),
                Some(n) => print!("{}", scenario::preset_source(&n).ok_or_else(|| invalid(format!("unknown preset `{n}`")))?),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_stream(path: &Path) -> anyhow::Result<PhotonStream> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e == "csv") {
        let text = String::from_utf8(bytes).map_err(|_| invalid(format!("{}: not UTF-8", path.display())))?;
        PhotonStream::from_csv(&text)
    } else {
        PhotonStream::from_ptsm_bytes(&bytes)
    };
    parsed.map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn correlate(a: CorrelateArgs, format: Format, dir: &Path) -> anyhow::Result<ExitCode> {
    let streams = a.streams.iter().map(|p| read_stream(p)).collect::<anyhow::Result<Vec<_>>>()?;
    if let Some(period) = a.period {
        let [s] = streams.as_slice() else { return Err(invalid("--period takes exactly one stream")) };
        let train = PulseTrain { period, pulse_width: 0, pulses: s.duration().div_ceil(period.max(1)), p_exc: 1.0 };
        let h = correlator::decay_histogram(s, &train, a.bin_width).map_err(invalid)?;
        let bytes = match format {
            Format::Csv => h.to_csv().into_bytes(),
            Format::Json => to_json(&h),
        };
        let path = write(dir, &format!("decay.{}", format.ext()), &bytes)?;
        println!("{} photons in {} bins -> {}", h.total(), h.counts.len(), path.display());
        return Ok(ExitCode::SUCCESS);
    }
    let [x, y] = streams.as_slice() else { return Err(invalid("g2 needs two streams (or --period for one)")) };
    let binning = match a.log_first_edge {
        Some(first) => Binning::log(first, a.window, a.per_decade),
        None => Binning::uniform(a.bin_width, a.window),
    }
    .map_err(invalid)?;
    let curve = correlator::cross_correlate_parallel(x, y, &binning, a.chunks).map_err(invalid)?;
    let bytes = match format {
        Format::Csv => curve.to_csv().into_bytes(),
        Format::Json => to_json(&curve),
    };
    let path = write(dir, &format!("g2.{}", format.ext()), &bytes)?;
    let g0 = curve.value_at_zero().unwrap_or(f64::NAN);
    println!("g2(0) = {g0:.4} over {} bins -> {}", curve.bins(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn fit_cmd(a: FitArgs, dir: &Path) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let json = is_json(&a.input);
    let result = match a.kind {
        FitKind::Lifetime => {
            let h = if json { DecayHistogram::from_json(&text) } else { DecayHistogram::from_csv(&text) }.map_err(invalid)?;
            let irf = IrfModel { sigma: a.irf_sigma, t0: a.irf_t0 };
            fit::fit_lifetime(&h, irf, LifetimeInit::tau(a.tau_init))
        }
        FitKind::Saturation => {
            let pts = fit::parse_saturation_points(&text).map_err(invalid)?;
            fit::fit_saturation(&pts, SaturationInit { i_inf: None, p_sat: None })
        }
        FitKind::G2 => {
            let c = if json { G2Curve::from_json(&text) } else { G2Curve::from_csv(&text) }.map_err(invalid)?;
            fit::fit_g2(&c, G2Init::default())
        }
        FitKind::Odmr => {
            let s = if json { OdmrSpectrum::from_json(&text) } else { OdmrSpectrum::from_csv(&text) }.map_err(invalid)?;
            fit::fit_odmr(&s, OdmrInit::default())
        }
    };
    let result = result.map_err(|e| match e {
        FitError::TooFewPoints { .. } | FitError::InvalidInput(_) => invalid(e),
        other => anyhow::Error::new(other),
    })?;
    let name = format!("{}_fit.json", result.model);
    let json = result.to_json();
    write(dir, &name, json.as_bytes())?;
    println!("{json}");
    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn odmr_cmd(a: OdmrArgs, seed: Option<u64>, format: Format, dir: &Path) -> anyhow::Result<ExitCode> {
    if let Some(dnu) = a.delta_nu_mhz {
        let shape = match a.line_shape {
            ShapeArg::Lorentzian => LineShape::Lorentzian,
            ShapeArg::Gaussian => LineShape::Gaussian,
        };
        let mut i = SensitivityInputs::new(shape, dnu * 1e6, a.contrast.unwrap_or_default(), a.rate.unwrap_or_default());
        i.g_factor = a.g_factor;
        if let Some(v) = a.a {
            i.a = v;
        }
        let r = odmr::sensitivity_report(&i).map_err(invalid)?;
        let bytes = to_json(&r);
        write(dir, "sensitivity.json", &bytes)?;
        println!("eta = {:.4} uT/sqrt(Hz)", r.eta_ut);
        return Ok(ExitCode::SUCCESS);
    }
    let name = a.scenario.ok_or_else(|| invalid("give a scenario, or --delta-nu-mhz/--contrast/--rate"))?;
    let s = load(&name, seed)?;
    if s.acquisition.mode != Mode::Odmr {
        return Err(invalid(format!("scenario `{}` is not in odmr mode", s.name)));
    }
    let m = pipeline::run(s, dir, format).map_err(pipeline_err)?;
    for v in &m.summary.variants {
        if let Some(eta) = v.eta_fit_ut {
            println!("{}: C = {:.4}, width = {:.1} MHz, eta = {eta:.1} uT/sqrt(Hz)", v.variant, v.contrast_fit.unwrap_or(f64::NAN), v.linewidth_fit_mhz.unwrap_or(f64::NAN));
        }
    }
    report(&m, dir)
}

fn sweep_cmd(a: SweepArgs, seed: Option<u64>, jobs: usize, format: Format, dir: &Path) -> anyhow::Result<ExitCode> {
    let s = load(&a.scenario, seed)?;
    let cfg = s.sweep.clone();
    let param = a.param.or(cfg.as_ref().map(|c| c.parameter.clone())).ok_or_else(|| invalid("no --param and no [sweep] table"))?;
    let values = a.values.or(cfg.map(|c| c.values)).ok_or_else(|| invalid("no --values and no [sweep] table"))?;
    let bundles = a.bundles.then_some(dir);
    let table = pipeline::sweep(&s, &param, &values, jobs, format, bundles).map_err(pipeline_err)?;
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    let path = write(dir, &format!("sweep.{}", format.ext()), text.as_bytes())?;
    println!("{} rows -> {}", table.rows.len(), path.display());
    Ok(if table.is_complete() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
