//! Runs a resolved scenario: simulate, correlate or histogram, fit, and
//! write the requested products with a manifest of checksums.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cavity::Regime;
use crate::correlator::{self, G2Curve};
use crate::fit::{self, FitResult, G2Init, IrfModel, LifetimeInit, OdmrInit, SaturationInit};
use crate::odmr::{self, SensitivityInputs, SensitivityReport};
use crate::photophysics::{self, g2_analytical, steady_state};
use crate::scenario::{Mode, Product, Scenario, ScenarioError, Variant};
use crate::sim::{self, RngSeed};

pub const TOOL: &str = "spekit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("I/O error on `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad manifest: {0}")]
    Manifest(String),
}

impl PipelineError {
    /// Configuration problems, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(self, PipelineError::Scenario(_) | PipelineError::Manifest(_))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

/// One file of a bundle, held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub f_p: f64,
    pub xi_exc: f64,
    pub regime: Option<Regime>,
    /// Emitted photon rate `gamma_r p_e`, Hz.
    pub emission_rate: Option<f64>,
    /// Expected registered rate summed over detectors, cts/s.
    pub detected_rate: Option<f64>,
    /// Registered rate in the simulated streams, cts/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2_0_model: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2_max_model: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2_0_fit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2_0_fit_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2_max_fit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2_0_raw: Option<f64>,
    pub lifetime_ps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_fit_ps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_fit_stderr_ps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_photons: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sat_model_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sat_fit_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_inf_fit: Option<f64>,
    /// Rate at the highest power of the saturation curve, cts/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_model: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth_model_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_fit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth_fit_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odmr_rate_fit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_model_ut: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_fit_ut: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub variants: Vec<VariantSummary>,
}

impl Summary {
    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == name)
    }
}

/// Everything a run produced, before it touches the file system.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Summary,
    pub errors: Vec<String>,
}

impl RunOutput {
    pub fn complete(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub format: Format,
    /// Fully resolved scenario; re-running it reproduces the products.
    pub scenario: Scenario,
    pub seed: Option<u64>,
    pub complete: bool,
    pub products: Vec<ProductRecord>,
    pub errors: Vec<String>,
    pub summary: Summary,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Manifest(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("product serializes");
    s.push('\n');
    s.into_bytes()
}

struct VariantRun<'a> {
    s: &'a Scenario,
    v: &'a Variant,
    seed: Option<u64>,
    format: Format,
    artifacts: Vec<Artifact>,
    errors: Vec<String>,
    sum: VariantSummary,
}

impl VariantRun<'_> {
    fn put(&mut self, product: Product, ext: &str, bytes: Vec<u8>) {
        if self.s.outputs.contains(&product) {
            self.artifacts.push(Artifact { path: format!("{}_{}.{ext}", self.v.name, product.name()), bytes });
        }
    }

    fn fail(&mut self, what: &str, e: impl std::fmt::Display) {
        self.errors.push(format!("{}: {what}: {e}", self.v.name));
    }

    fn seed(&self) -> RngSeed {
        RngSeed(self.seed.expect("validated: stochastic runs carry a seed"))
    }

    fn model(&mut self) {
        let v = self.v;
        let det = &v.detector;
        self.sum.lifetime_ps = 1e12 / v.emitter.excited_decay_rate();
        let emission = match (self.s.acquisition.mode, self.s.spin_system(v)) {
            (Mode::Odmr, Some(spin)) => odmr::odmr_steady_rates(&spin, false).ok(),
            _ => steady_state(&v.emitter).ok().map(|p| v.emitter.gamma_r * p.p_e),
        };
        let Some(emission) = emission else { return };
        self.sum.emission_rate = Some(emission);
        let noise = det.dark_rate + det.background_rate;
        self.sum.detected_rate = Some(match self.s.acquisition.mode {
            Mode::Cw => det.efficiency * emission + 2.0 * noise,
            _ => det.efficiency * emission + noise,
        });
        if self.s.acquisition.mode == Mode::Cw {
            let split = self.s.detector.splitter;
            let sig = |f: f64| det.efficiency * f * emission;
            let rho = |f: f64| {
                let s = sig(f);
                if s + noise > 0.0 { s / (s + noise) } else { 0.0 }
            };
            let rr = rho(split) * rho(1.0 - split);
            if let Ok(g) = g2_analytical(&v.emitter) {
                self.sum.g2_0_model = Some(1.0 - rr);
                self.sum.g2_max_model = Some(1.0 + rr * (g.max_value() - 1.0));
            }
        }
    }

    fn cw(&mut self) {
        let s = self.s;
        if !s.wants(&[Product::Streams, Product::G2, Product::G2Fit]) {
            return;
        }
        let v = self.v;
        let (a, b) = match sim::simulate_cw(&v.emitter, s.acquisition.duration_ps, &v.detector, self.seed(), s.detector.splitter) {
            Ok(x) => x,
            Err(e) => return self.fail("simulate", e),
        };
        self.sum.measured_rate = Some((a.len() + b.len()) as f64 / (s.acquisition.duration_ps as f64 * 1e-12));
        if s.outputs.contains(&Product::Streams) {
            let (na, nb) = (format!("{}_streams_ch0.ptsm", v.name), format!("{}_streams_ch1.ptsm", v.name));
            self.artifacts.push(Artifact { path: na, bytes: a.to_ptsm_bytes() });
            self.artifacts.push(Artifact { path: nb, bytes: b.to_ptsm_bytes() });
        }
        if !s.wants(&[Product::G2, Product::G2Fit]) {
            return;
        }
        let binning = s.analysis.g2.binning().expect("validated binning");
        let curve = match correlator::cross_correlate_parallel(&a, &b, &binning, 0) {
            Ok(c) => c,
            Err(e) => return self.fail("correlate", e),
        };
        let bytes = match self.format {
            Format::Csv => curve.to_csv().into_bytes(),
            Format::Json => json(&curve),
        };
        self.put(Product::G2, self.format.ext(), bytes);
        if s.outputs.contains(&Product::G2Fit) {
            self.g2_fit(&curve);
        }
    }

    fn g2_fit(&mut self, curve: &G2Curve) {
        match fit::fit_g2(curve, G2Init::default()) {
            Ok(f) => {
                self.sum.g2_0_fit = Some(f.value("g2_0_effective"));
                self.sum.g2_0_fit_stderr = Some(f.stderr("g2_0_effective"));
                self.sum.g2_0_raw = Some(f.value("g2_0_raw"));
                self.sum.g2_max_fit = Some(fit::g2_model_max(&f, self.s.analysis.g2.window_ps as f64));
                self.put(Product::G2Fit, "json", f.to_json().into_bytes());
            }
            Err(e) => self.fail("fit_g2", e),
        }
    }

    fn pulsed(&mut self) {
        let s = self.s;
        if !s.wants(&[Product::Streams, Product::Decay, Product::LifetimeFit]) {
            return;
        }
        let v = self.v;
        let train = s.acquisition.pulse.expect("validated pulse train");
        let stream = match sim::simulate_pulsed(&v.emitter, &train, &v.detector, self.seed()) {
            Ok(x) => x,
            Err(e) => return self.fail("simulate", e),
        };
        self.sum.measured_rate = Some(stream.rate_hz());
        if s.outputs.contains(&Product::Streams) {
            self.artifacts.push(Artifact { path: format!("{}_streams_ch0.ptsm", v.name), bytes: stream.to_ptsm_bytes() });
        }
        if !s.wants(&[Product::Decay, Product::LifetimeFit]) {
            return;
        }
        let lt = s.analysis.lifetime;
        let hist = match correlator::decay_histogram(&stream, &train, lt.bin_width_ps) {
            Ok(h) => h,
            Err(e) => return self.fail("histogram", e),
        };
        self.sum.decay_photons = Some(hist.total());
        let bytes = match self.format {
            Format::Csv => hist.to_csv().into_bytes(),
            Format::Json => json(&hist),
        };
        self.put(Product::Decay, self.format.ext(), bytes);
        if s.outputs.contains(&Product::LifetimeFit) {
            // excitation instants are uniform over the pulse window
            let irf = IrfModel { sigma: v.detector.irf_sigma, t0: train.pulse_width as f64 / 2.0 };
            match fit::fit_lifetime(&hist, irf, LifetimeInit::tau(lt.init_tau_ps)) {
                Ok(f) => {
                    self.sum.tau_fit_ps = Some(f.value("tau"));
                    self.sum.tau_fit_stderr_ps = Some(f.stderr("tau"));
                    self.put(Product::LifetimeFit, "json", f.to_json().into_bytes());
                }
                Err(e) => self.fail("fit_lifetime", e),
            }
        }
    }

    fn saturation(&mut self) {
        let Some(cfg) = self.s.saturation else { return };
        let v = self.v;
        let per_mw = cfg.pump_per_mw * v.enhancement.xi_exc;
        let powers: Vec<f64> = (1..=cfg.points).map(|i| cfg.max_power_mw * i as f64 / cfg.points as f64).collect();
        let pumps: Vec<f64> = powers.iter().map(|p| p * per_mw).collect();
        let curve = match photophysics::emission_rate_vs_pump(&v.emitter, &pumps) {
            Ok(c) => c,
            Err(e) => return self.fail("saturation", e),
        };
        let points: Vec<(f64, f64)> =
            powers.iter().zip(&curve).map(|(&p, &(_, r))| (p, v.detector.expected_rate(r))).collect();
        if let Ok((_, k_sat)) = photophysics::effective_saturation(&v.emitter) {
            self.sum.p_sat_model_mw = Some(k_sat / per_mw);
        }
        self.sum.max_rate = points.last().map(|p| p.1);
        let bytes = match self.format {
            Format::Csv => {
                let mut t = String::from("power_mw,rate_cts_s\n");
                for (p, r) in &points {
                    writeln!(t, "{p},{r}").unwrap();
                }
                t.into_bytes()
            }
            Format::Json => json(&serde_json::json!({ "power_mw": powers, "rate_cts_s": points.iter().map(|p| p.1).collect::<Vec<_>>() })),
        };
        self.put(Product::Saturation, self.format.ext(), bytes);
        match fit::fit_saturation(&points, SaturationInit { i_inf: None, p_sat: None }) {
            Ok(f) => {
                self.sum.p_sat_fit_mw = Some(f.value("p_sat"));
                self.sum.i_inf_fit = Some(f.value("i_inf"));
            }
            Err(e) => self.fail("fit_saturation", e),
        }
    }

    fn odmr(&mut self) {
        let s = self.s;
        let (Some(cfg), Some(spin)) = (s.odmr, s.spin_system(self.v)) else { return };
        let det = self.v.detector;
        let sens = |c: f64, w_mhz: f64, r: f64| -> Result<SensitivityReport, odmr::OdmrError> {
            let mut i = SensitivityInputs::new(cfg.line_shape, w_mhz * 1e6, c, r);
            i.g_factor = cfg.g_factor;
            odmr::sensitivity_report(&i)
        };
        let model = (|| {
            let c = odmr::odmr_contrast(&spin)?;
            let w = odmr::observed_linewidth(&spin)?;
            let r = det.expected_rate(odmr::odmr_steady_rates(&spin, false)?);
            Ok::<_, odmr::OdmrError>((c, w, sens(c, w, r).ok()))
        })();
        let model_report = match model {
            Ok((c, w, rep)) => {
                self.sum.contrast_model = Some(c);
                self.sum.linewidth_model_mhz = Some(w);
                self.sum.eta_model_ut = rep.map(|r| r.eta_ut);
                rep
            }
            Err(e) => {
                self.fail("odmr model", e);
                None
            }
        };
        if !s.wants(&[Product::Spectrum, Product::OdmrFit, Product::Sensitivity]) {
            return;
        }
        let freqs = cfg.frequencies();
        let spectrum = match cfg.dwell_s {
            Some(dwell) => odmr::odmr_spectrum_sampled(&spin, &freqs, &det, dwell, self.seed()),
            None => odmr::odmr_spectrum(&spin, &freqs, &det),
        };
        let spectrum = match spectrum {
            Ok(x) => x,
            Err(e) => return self.fail("odmr spectrum", e),
        };
        let bytes = match self.format {
            Format::Csv => spectrum.to_csv().into_bytes(),
            Format::Json => json(&spectrum),
        };
        self.put(Product::Spectrum, self.format.ext(), bytes);
        if !s.wants(&[Product::OdmrFit, Product::Sensitivity]) {
            return;
        }
        let f: FitResult = match fit::fit_odmr(&spectrum, OdmrInit::default()) {
            Ok(f) => f,
            Err(e) => return self.fail("fit_odmr", e),
        };
        let (c, w, r) = (f.value("contrast"), f.value("delta_nu"), f.value("baseline_rate"));
        self.sum.contrast_fit = Some(c);
        self.sum.linewidth_fit_mhz = Some(w);
        self.sum.odmr_rate_fit = Some(r);
        self.put(Product::OdmrFit, "json", f.to_json().into_bytes());
        match sens(c, w, r) {
            Ok(rep) => {
                self.sum.eta_fit_ut = Some(rep.eta_ut);
                self.put(Product::Sensitivity, "json", json(&serde_json::json!({ "fit": rep, "model": model_report })));
            }
            Err(e) => self.fail("sensitivity", e),
        }
    }
}

/// Runs every variant of a resolved scenario in memory.
pub fn execute(s: &Scenario, format: Format) -> RunOutput {
    let variants = s.variants();
    let runs: Vec<(Vec<Artifact>, Vec<String>, VariantSummary)> = variants
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut r = VariantRun {
                s,
                v,
                seed: s.acquisition.seed.map(|x| x.wrapping_add(i as u64)),
                format,
                artifacts: Vec::new(),
                errors: Vec::new(),
                sum: VariantSummary {
                    variant: v.name.into(),
                    f_p: v.enhancement.f_p,
                    xi_exc: v.enhancement.xi_exc,
                    regime: (i > 0).then_some(v.enhancement.regime),
                    ..Default::default()
                },
            };
            r.model();
            match s.acquisition.mode {
                Mode::Cw => r.cw(),
                Mode::Pulsed => r.pulsed(),
                Mode::Odmr => r.odmr(),
            }
            r.saturation();
            (r.artifacts, r.errors, r.sum)
        })
        .collect();
    let mut out = RunOutput { artifacts: Vec::new(), summary: Summary { scenario: s.name.clone(), variants: Vec::new() }, errors: Vec::new() };
    for (a, e, sum) in runs {
        out.artifacts.extend(a);
        out.errors.extend(e);
        out.summary.variants.push(sum);
    }
    if s.outputs.contains(&Product::Summary) {
        out.artifacts.push(Artifact { path: "summary.json".into(), bytes: json(&out.summary) });
    }
    out.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    out
}

/// Writes the artifacts and `manifest.json` into `dir`.
pub fn write_bundle(dir: &Path, s: &Scenario, format: Format, out: &RunOutput) -> Result<Manifest, PipelineError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut products = Vec::with_capacity(out.artifacts.len());
    for a in &out.artifacts {
        let path = dir.join(&a.path);
        std::fs::write(&path, &a.bytes).map_err(io_err(&path))?;
        products.push(ProductRecord { path: a.path.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() as u64 });
    }
    let manifest = Manifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        format,
        scenario: s.clone(),
        seed: s.acquisition.seed,
        complete: out.complete(),
        products,
        errors: out.errors.clone(),
        summary: out.summary.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, json(&manifest)).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Resolves, executes and writes a scenario.
pub fn run(s: Scenario, dir: &Path, format: Format) -> Result<Manifest, PipelineError> {
    let s = s.resolve()?;
    let out = execute(&s, format);
    write_bundle(dir, &s, format, &out)
}

/// Re-runs the scenario recorded in a manifest.
pub fn rerun_manifest(manifest_path: &Path, dir: &Path) -> Result<Manifest, PipelineError> {
    let text = std::fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let m = Manifest::from_json(&text)?;
    run(m.scenario, dir, m.format)
}

/// Checks every product listed in a manifest against its checksum.
pub fn verify_bundle(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let path = dir.join(MANIFEST_FILE);
    let m = Manifest::from_json(&std::fs::read_to_string(&path).map_err(io_err(&path))?)?;
    let mut bad = Vec::new();
    for p in &m.products {
        let file = dir.join(&p.path);
        match std::fs::read(&file) {
            Ok(b) if sha256_hex(&b) == p.sha256 => {}
            _ => bad.push(p.path.clone()),
        }
    }
    Ok(bad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub summary: Option<VariantSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

const SWEEP_COLUMNS: &[&str] = &[
    "f_p",
    "xi_exc",
    "regime",
    "emission_rate",
    "detected_rate",
    "measured_rate",
    "g2_0_model",
    "g2_0_fit",
    "g2_max_fit",
    "lifetime_ps",
    "tau_fit_ps",
    "p_sat_fit_mw",
    "contrast_model",
    "contrast_fit",
    "eta_model_ut",
    "eta_fit_ut",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepTable {
    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.error.is_none())
    }

    pub fn to_csv(&self) -> String {
        let mut t = format!("value,variant,{},error\n", SWEEP_COLUMNS.join(","));
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            match &r.summary {
                Some(s) => {
                    let regime = s.regime.map(|g| g.to_string()).unwrap_or_default();
                    writeln!(
                        t,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        r.value,
                        s.variant,
                        s.f_p,
                        s.xi_exc,
                        regime,
                        opt(s.emission_rate),
                        opt(s.detected_rate),
                        opt(s.measured_rate),
                        opt(s.g2_0_model),
                        opt(s.g2_0_fit),
                        opt(s.g2_max_fit),
                        s.lifetime_ps,
                        opt(s.tau_fit_ps),
                        opt(s.p_sat_fit_mw),
                        opt(s.contrast_model),
                        opt(s.contrast_fit),
                        opt(s.eta_model_ut),
                        opt(s.eta_fit_ut),
                        err
                    )
                    .unwrap();
                }
                None => {
                    writeln!(t, "{},,{}{}", r.value, ",".repeat(SWEEP_COLUMNS.len()), err).unwrap();
                }
            }
        }
        t
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| serde_json::json!({ "value": r.value, "summary": r.summary, "error": r.error }))
            .collect();
        let mut s = serde_json::to_string_pretty(&serde_json::json!({ "parameter": self.parameter, "rows": rows })).unwrap();
        s.push('\n');
        s
    }

    /// Values at which the regime label changes between consecutive points of `variant`.
    pub fn regime_flips(&self, variant: &str) -> Vec<(f64, f64)> {
        let pts: Vec<(f64, Regime)> = self
            .rows
            .iter()
            .filter_map(|r| r.summary.as_ref().filter(|s| s.variant == variant).and_then(|s| Some((r.value, s.regime?))))
            .collect();
        pts.windows(2).filter(|w| w[0].1 != w[1].1).map(|w| (w[0].0, w[1].0)).collect()
    }
}

/// Runs the scenario once per value of the numeric field at `path`.
///
/// Instance `i` gets seed `seed + i`. With `dir`, each instance writes its
/// bundle to `dir/point_<i>`. Up to `jobs` instances run at once (0 = all cores).
pub fn sweep(s: &Scenario, path: &str, values: &[f64], jobs: usize, format: Format, dir: Option<&Path>) -> Result<SweepTable, PipelineError> {
    let instances: Vec<Scenario> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut inst = s.with_parameter(path, v)?;
            inst.acquisition.seed = inst.acquisition.seed.map(|x| x.wrapping_add(i as u64));
            inst.sweep = None;
            Ok(inst)
        })
        .collect::<Result<_, ScenarioError>>()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    let results: Vec<Result<RunOutput, PipelineError>> = pool.install(|| {
        instances
            .par_iter()
            .enumerate()
            .map(|(i, inst)| {
                let out = execute(inst, format);
                if let Some(d) = dir {
                    write_bundle(&d.join(format!("point_{i:04}")), inst, format, &out)?;
                }
                Ok(out)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for (&value, r) in values.iter().zip(results) {
        let out = r?;
        let error = (!out.errors.is_empty()).then(|| out.errors.join("; "));
        for v in out.summary.variants {
            rows.push(SweepRow { value, summary: Some(v), error: error.clone() });
        }
    }
    Ok(SweepTable { parameter: path.into(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cw() -> Scenario {
        let mut s = Scenario::load("fig3c").unwrap();
        s.acquisition.duration_ps = 200_000_000;
        s.outputs = vec![Product::Streams, Product::G2, Product::Summary];
        s
    }

    #[test]
    fn empty_outputs_give_manifest_only() {
        let mut s = quick_cw();
        s.outputs.clear();
        let dir = tempfile::tempdir().unwrap();
        let m = run(s, dir.path(), Format::Csv).unwrap();
        assert!(m.complete);
        assert!(m.products.is_empty());
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(files, vec![std::ffi::OsString::from(MANIFEST_FILE)]);
    }

    #[test]
    fn execution_is_deterministic() {
        let s = quick_cw();
        let a = execute(&s, Format::Csv);
        let b = execute(&s, Format::Csv);
        assert!(a.complete(), "{:?}", a.errors);
        assert_eq!(a, b);
        let names: Vec<_> = a.artifacts.iter().map(|x| x.path.as_str()).collect();
        assert!(names.contains(&"coupled_g2.csv") && names.contains(&"uncoupled_streams_ch1.ptsm"), "{names:?}");
    }

    #[test]
    fn variants_get_distinct_seeds() {
        let mut s = quick_cw();
        s.cavity = None;
        let one = execute(&s, Format::Csv);
        s.acquisition.seed = Some(s.acquisition.seed.unwrap() + 1);
        let other = execute(&s, Format::Csv);
        assert_ne!(one.artifact("uncoupled_streams_ch0.ptsm"), other.artifact("uncoupled_streams_ch0.ptsm"));
    }

    #[test]
    fn formats() {
        assert_eq!("json".parse::<Format>().unwrap(), Format::Json);
        assert!("xml".parse::<Format>().is_err());
        let s = quick_cw();
        let out = execute(&s, Format::Json);
        let g2 = out.artifact("uncoupled_g2.json").unwrap();
        let curve = G2Curve::from_json(std::str::from_utf8(&g2.bytes).unwrap()).unwrap();
        assert!(curve.bins() > 10);
    }

    #[test]
    fn partial_failure_keeps_products() {
        // a curve with no coincidences cannot be fitted but the histogram is still written
        let mut s = quick_cw();
        s.detector.efficiency = 0.0;
        s.detector.dark_rate = 0.0;
        s.detector.background_rate = 0.0;
        s.outputs = vec![Product::G2, Product::G2Fit];
        let dir = tempfile::tempdir().unwrap();
        let m = run(s, dir.path(), Format::Csv).unwrap();
        assert!(!m.complete);
        assert!(m.errors.iter().any(|e| e.contains("fit_g2")), "{:?}", m.errors);
        assert!(m.products.iter().any(|p| p.path == "uncoupled_g2.csv"));
        assert!(verify_bundle(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn empty_sweep() {
        let s = Scenario::load("fig3b-sweep").unwrap();
        let t = sweep(&s, "cavity.mode.e_p", &[], 2, Format::Csv, None).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.to_csv().lines().count(), 1);
    }
}
