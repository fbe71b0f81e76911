//! Scenario configuration: a TOML document describing one emitter, an
//! optional tip cavity, the detectors, the acquisition and which data
//! products to write.
//!
//! A scenario is resolved before it runs: presets are expanded inline and
//! every field is validated, with errors naming the offending key. The
//! resolved form serializes back to a document that resolves to itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cavity::{self, CavityError, CouplingContext, EnhancementResult, PlasmonMode, DEFAULT_BALANCED_BAND};
use crate::correlator::Binning;
use crate::odmr::{LineShape, SpinLevelSystem};
use crate::photophysics::{LevelSystem, PhotophysicsError};
use crate::sim::{DetectorModel, PulseTrain, MAX_DURATION_PS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("unknown scenario preset `{0}` (and no such file)")]
    UnknownPreset(String),
    #[error("cannot read `{path}`: {msg}")]
    Io { path: String, msg: String },
}

impl ScenarioError {
    fn invalid(key: impl Into<String>, msg: impl Into<String>) -> Self {
        ScenarioError::Invalid { key: key.into(), msg: msg.into() }
    }

    /// Dotted key the diagnostic refers to, when known.
    pub fn key(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Product {
    /// Raw detector streams (PTSM).
    Streams,
    G2,
    G2Fit,
    Decay,
    LifetimeFit,
    Saturation,
    Spectrum,
    OdmrFit,
    Sensitivity,
    Summary,
}

impl Product {
    pub fn name(self) -> &'static str {
        match self {
            Product::Streams => "streams",
            Product::G2 => "g2",
            Product::G2Fit => "g2_fit",
            Product::Decay => "decay",
            Product::LifetimeFit => "lifetime_fit",
            Product::Saturation => "saturation",
            Product::Spectrum => "spectrum",
            Product::OdmrFit => "odmr_fit",
            Product::Sensitivity => "sensitivity",
            Product::Summary => "summary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Cw,
    Pulsed,
    Odmr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    /// Name of a built-in plasmon mode; replaced by `mode` on resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PlasmonMode>,
    #[serde(default = "CouplingContext::paper_geometry")]
    pub context: CouplingContext,
    /// Relative half-width of the balanced regime band.
    #[serde(default = "default_band")]
    pub band: f64,
}

fn default_band() -> f64 {
    DEFAULT_BALANCED_BAND
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    #[serde(default)]
    pub dark_rate: f64,
    #[serde(default)]
    pub dead_time_ps: u64,
    #[serde(default)]
    pub irf_sigma_ps: f64,
    /// Uncorrelated background per detector, Hz, for the uncoupled emitter.
    #[serde(default)]
    pub background_rate: f64,
    /// Scale the background by the excitation enhancement when coupled
    /// (laser-induced background is pumped by the same near field).
    #[serde(default)]
    pub background_scales_with_excitation: bool,
    /// Probability that a photon goes to detector 0 in CW (HBT) mode.
    #[serde(default = "half")]
    pub splitter: f64,
}

fn half() -> f64 {
    0.5
}

impl DetectorConfig {
    pub fn model(&self) -> DetectorModel {
        DetectorModel {
            efficiency: self.efficiency,
            dark_rate: self.dark_rate,
            dead_time: self.dead_time_ps,
            irf_sigma: self.irf_sigma_ps,
            background_rate: self.background_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    pub mode: Mode,
    /// CW acquisition span, ps.
    #[serde(default)]
    pub duration_ps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseTrain>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Analysis {
    /// Correlation window, ps.
    #[serde(default = "default_window")]
    pub window_ps: u64,
    /// Uniform bin width, ps; ignored when `log_first_edge_ps` is set.
    #[serde(default = "default_bin")]
    pub bin_width_ps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_first_edge_ps: Option<u64>,
    #[serde(default = "default_per_decade")]
    pub per_decade: u32,
}

fn default_window() -> u64 {
    1_000_000
}
fn default_bin() -> u64 {
    100
}
fn default_per_decade() -> u32 {
    20
}

impl Default for G2Analysis {
    fn default() -> Self {
        Self { window_ps: default_window(), bin_width_ps: default_bin(), log_first_edge_ps: None, per_decade: default_per_decade() }
    }
}

impl G2Analysis {
    pub fn binning(&self) -> Result<Binning, ScenarioError> {
        let r = match self.log_first_edge_ps {
            Some(first) => Binning::log(first, self.window_ps, self.per_decade),
            None => Binning::uniform(self.bin_width_ps, self.window_ps),
        };
        r.map_err(|e| ScenarioError::invalid("analysis.g2", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeAnalysis {
    #[serde(default = "default_decay_bin")]
    pub bin_width_ps: u64,
    /// Initial guess for the fitted lifetime, ps.
    #[serde(default = "default_tau_init")]
    pub init_tau_ps: f64,
}

fn default_decay_bin() -> u64 {
    4
}
fn default_tau_init() -> f64 {
    1000.0
}

impl Default for LifetimeAnalysis {
    fn default() -> Self {
        Self { bin_width_ps: default_decay_bin(), init_tau_ps: default_tau_init() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default)]
    pub g2: G2Analysis,
    #[serde(default)]
    pub lifetime: LifetimeAnalysis,
}

/// Power-dependent emission curve, evaluated from the steady state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationConfig {
    /// Uncoupled pump rate per mW of excitation power, Hz/mW.
    pub pump_per_mw: f64,
    pub max_power_mw: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    20
}

/// Spin-selective rates added to the emitter for ODMR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinConfig {
    pub k_isc_bright: f64,
    pub k_isc_dark: f64,
    pub branch_to_bright: f64,
    pub nu0_mhz: f64,
    pub delta_nu_mhz: f64,
    pub k_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrConfig {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub points: usize,
    /// Integration time per point, s; omitted means noiseless expected rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell_s: Option<f64>,
    #[serde(default = "lorentzian_shape")]
    pub line_shape: LineShape,
    #[serde(default = "two")]
    pub g_factor: f64,
}

fn lorentzian_shape() -> LineShape {
    LineShape::Lorentzian
}
fn two() -> f64 {
    2.0
}

impl OdmrConfig {
    pub fn frequencies(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start_mhz];
        }
        let step = (self.stop_mhz - self.start_mhz) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.start_mhz + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub emitter: LevelSystem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityConfig>,
    pub detector: DetectorConfig,
    pub acquisition: Acquisition,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spin: Option<SpinConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odmr: Option<OdmrConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub outputs: Vec<Product>,
}

fn default_name() -> String {
    "scenario".into()
}

/// One emitter configuration a scenario runs: uncoupled, or under the tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub name: &'static str,
    pub emitter: LevelSystem,
    pub enhancement: EnhancementResult,
    pub detector: DetectorModel,
}

const PRESETS: &[(&str, &str)] = &[
    ("fig2e", include_str!("../presets/scenarios/fig2e.toml")),
    ("fig2f", include_str!("../presets/scenarios/fig2f.toml")),
    ("fig3b-sweep", include_str!("../presets/scenarios/fig3b-sweep.toml")),
    ("fig3c", include_str!("../presets/scenarios/fig3c.toml")),
    ("fig3d", include_str!("../presets/scenarios/fig3d.toml")),
    ("fig4f", include_str!("../presets/scenarios/fig4f.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

fn photophysics_key(prefix: &str, e: &PhotophysicsError) -> ScenarioError {
    match e {
        PhotophysicsError::InvalidRate { name, .. } => ScenarioError::invalid(format!("{prefix}.{name}"), e.to_string()),
        _ => ScenarioError::invalid(prefix, e.to_string()),
    }
}

fn cavity_key(prefix: &str, e: &CavityError) -> ScenarioError {
    let msg = match e {
        CavityError::InvalidMode(m) | CavityError::InvalidContext(m) => m.as_str(),
        _ => return ScenarioError::invalid(prefix, e.to_string()),
    };
    // messages start with the field name: "e_p = ..."
    let field = msg
        .split_once(" = ")
        .map(|(f, _)| f)
        .filter(|f| !f.is_empty() && f.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'));
    match field {
        Some(f) => ScenarioError::invalid(format!("{prefix}.{f}"), msg),
        None => ScenarioError::invalid(prefix, msg),
    }
}

fn check(cond: bool, key: &str, msg: impl FnOnce() -> String) -> Result<(), ScenarioError> {
    if cond {
        Ok(())
    } else {
        Err(ScenarioError::invalid(key, msg()))
    }
}

impl Scenario {
    /// Parses a TOML document without validating it.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string().trim_end().to_string()))
    }

    /// Parses and resolves a built-in preset or a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self, ScenarioError> {
        let path = std::path::Path::new(name_or_path);
        let text = if path.is_file() {
            std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: name_or_path.into(), msg: e.to_string() })?
        } else if let Some(src) = preset_source(name_or_path) {
            src.to_string()
        } else {
            return Err(ScenarioError::UnknownPreset(name_or_path.into()));
        };
        Self::from_toml_str(&text)?.resolve()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Expands presets and validates every field.
    pub fn resolve(mut self) -> Result<Self, ScenarioError> {
        if let Some(cav) = self.cavity.as_mut() {
            match (&cav.preset, &cav.mode) {
                (Some(_), Some(_)) => return Err(ScenarioError::invalid("cavity", "give either `preset` or `mode`, not both")),
                (None, None) => return Err(ScenarioError::invalid("cavity", "needs `preset` or `mode`")),
                (Some(name), None) => {
                    let mode = cavity::builtin_preset(name).map_err(|e| ScenarioError::invalid("cavity.preset", e.to_string()))?;
                    cav.mode = Some(mode);
                    cav.preset = None;
                }
                (None, Some(_)) => {}
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.emitter.validate().map_err(|e| photophysics_key("emitter", &e))?;
        if let Some(cav) = &self.cavity {
            let mode = cav.mode.as_ref().ok_or_else(|| ScenarioError::invalid("cavity.mode", "unresolved preset"))?;
            mode.validate().map_err(|e| cavity_key("cavity.mode", &e))?;
            cav.context.validate().map_err(|e| cavity_key("cavity.context", &e))?;
            check(cav.band >= 0.0 && cav.band < 1.0, "cavity.band", || format!("{} outside [0, 1)", cav.band))?;
        }
        let d = &self.detector;
        check((0.0..=1.0).contains(&d.efficiency), "detector.efficiency", || format!("{} outside [0, 1]", d.efficiency))?;
        for (k, v) in [("dark_rate", d.dark_rate), ("irf_sigma_ps", d.irf_sigma_ps), ("background_rate", d.background_rate)] {
            check(v.is_finite() && v >= 0.0, &format!("detector.{k}"), || format!("{v} must be finite and >= 0"))?;
        }
        check(d.splitter > 0.0 && d.splitter < 1.0, "detector.splitter", || format!("{} outside (0, 1)", d.splitter))?;

        let acq = &self.acquisition;
        let simulated = match acq.mode {
            Mode::Cw => self.wants(&[Product::Streams, Product::G2, Product::G2Fit]),
            Mode::Pulsed => self.wants(&[Product::Streams, Product::Decay, Product::LifetimeFit]),
            Mode::Odmr => self.odmr.is_some_and(|o| o.dwell_s.is_some()),
        };
        if simulated {
            check(acq.seed.is_some(), "acquisition.seed", || "a seed is required for stochastic runs".into())?;
        }
        if acq.mode == Mode::Cw && simulated {
            check(acq.duration_ps > 0 && acq.duration_ps <= MAX_DURATION_PS, "acquisition.duration_ps", || {
                format!("{} must be in (0, 2^53]", acq.duration_ps)
            })?;
        }
        if acq.mode == Mode::Pulsed {
            let train = acq.pulse.ok_or_else(|| ScenarioError::invalid("acquisition.pulse", "required in pulsed mode"))?;
            train.validate().map_err(|e| ScenarioError::invalid("acquisition.pulse", e.to_string()))?;
            let lt = &self.analysis.lifetime;
            check(lt.bin_width_ps > 0 && lt.bin_width_ps < train.period, "analysis.lifetime.bin_width_ps", || {
                format!("{} must be in (0, period)", lt.bin_width_ps)
            })?;
            check(lt.init_tau_ps > 0.0, "analysis.lifetime.init_tau_ps", || "must be > 0".into())?;
        }
        if self.wants(&[Product::G2, Product::G2Fit]) {
            self.analysis.g2.binning()?;
        }

        for &p in &self.outputs {
            let ok = match p {
                Product::G2 | Product::G2Fit => acq.mode == Mode::Cw,
                Product::Decay | Product::LifetimeFit => acq.mode == Mode::Pulsed,
                Product::Spectrum | Product::OdmrFit | Product::Sensitivity => acq.mode == Mode::Odmr,
                Product::Saturation => self.saturation.is_some(),
                Product::Streams => acq.mode != Mode::Odmr,
                Product::Summary => true,
            };
            check(ok, "outputs", || format!("product `{}` is not available for this acquisition mode/configuration", p.name()))?;
        }
        if let Some(s) = &self.saturation {
            check(s.pump_per_mw > 0.0 && s.pump_per_mw.is_finite(), "saturation.pump_per_mw", || "must be > 0".into())?;
            check(s.max_power_mw > 0.0 && s.max_power_mw.is_finite(), "saturation.max_power_mw", || "must be > 0".into())?;
            check(s.points >= 3, "saturation.points", || "need at least 3 points".into())?;
        }
        if acq.mode == Mode::Odmr {
            let o = self.odmr.ok_or_else(|| ScenarioError::invalid("odmr", "required in odmr mode"))?;
            check(self.spin.is_some(), "spin", || "required in odmr mode".into())?;
            check(o.points >= 5, "odmr.points", || "need at least 5 frequencies".into())?;
            check(o.start_mhz.is_finite() && o.stop_mhz > o.start_mhz, "odmr.stop_mhz", || "must exceed start_mhz".into())?;
            if let Some(dw) = o.dwell_s {
                check(dw > 0.0 && dw.is_finite(), "odmr.dwell_s", || "must be > 0".into())?;
            }
            check(o.g_factor > 0.0, "odmr.g_factor", || "must be > 0".into())?;
            for v in self.variants() {
                let spin = self.spin_system(&v).expect("spin present");
                spin.validate().map_err(|e| match e {
                    crate::odmr::OdmrError::InvalidSpin { name, .. } => {
                        let key = match name {
                            "nu0" => "nu0_mhz",
                            "delta_nu" => "delta_nu_mhz",
                            other => other,
                        };
                        ScenarioError::invalid(format!("spin.{key}"), e.to_string())
                    }
                    other => ScenarioError::invalid("spin", other.to_string()),
                })?;
            }
        }
        if let Some(sw) = &self.sweep {
            check(!sw.parameter.is_empty(), "sweep.parameter", || "must name a numeric field".into())?;
        }
        Ok(())
    }

    pub fn wants(&self, any: &[Product]) -> bool {
        self.outputs.iter().any(|p| any.contains(p))
    }

    /// Uncoupled emitter, plus the tip-coupled one when a cavity is configured.
    pub fn variants(&self) -> Vec<Variant> {
        let base_det = self.detector.model();
        let mut out = vec![Variant {
            name: "uncoupled",
            emitter: self.emitter,
            enhancement: EnhancementResult::unity(),
            detector: base_det,
        }];
        if let Some(cav) = &self.cavity {
            if let Some(mode) = &cav.mode {
                let enh = cavity::enhancement_with_band(mode, &cav.context, cav.band);
                let mut det = base_det;
                if self.detector.background_scales_with_excitation {
                    det.background_rate *= enh.xi_exc;
                }
                out.push(Variant { name: "coupled", emitter: cavity::couple(&self.emitter, &enh), enhancement: enh, detector: det });
            }
        }
        out
    }

    pub fn spin_system(&self, v: &Variant) -> Option<SpinLevelSystem> {
        self.spin.map(|s| SpinLevelSystem {
            base: v.emitter,
            k_isc_bright: s.k_isc_bright,
            k_isc_dark: s.k_isc_dark,
            branch_to_bright: s.branch_to_bright,
            nu0: s.nu0_mhz,
            delta_nu: s.delta_nu_mhz,
            k_mw: s.k_mw,
        })
    }

    /// Copy with the numeric field at dotted `path` set to `value`, re-resolved.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Self, ScenarioError> {
        let mut doc = serde_json::to_value(self).expect("scenario serializes");
        let mut node = &mut doc;
        for seg in path.split('.') {
            node = node
                .get_mut(seg)
                .ok_or_else(|| ScenarioError::invalid(path, format!("no field `{seg}` in the resolved scenario")))?;
        }
        let new = match node {
            serde_json::Value::Number(n) if n.is_u64() || n.is_i64() => {
                if value.fract() != 0.0 || value < 0.0 || value > u64::MAX as f64 {
                    return Err(ScenarioError::invalid(path, format!("integer field cannot take {value}")));
                }
                serde_json::Value::from(value as u64)
            }
            serde_json::Value::Number(_) => serde_json::Number::from_f64(value)
                .map(serde_json::Value::Number)
                .ok_or_else(|| ScenarioError::invalid(path, format!("{value} is not finite")))?,
            _ => return Err(ScenarioError::invalid(path, "not a numeric field")),
        };
        *node = new;
        let s: Scenario = serde_json::from_value(doc).map_err(|e| ScenarioError::invalid(path, e.to_string()))?;
        s.resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for name in preset_names() {
            let s = Scenario::load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn resolved_form_round_trips() {
        for name in preset_names() {
            let s = Scenario::load(name).unwrap();
            let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap().resolve().unwrap();
            assert_eq!(s, again, "{name}");
            let json = serde_json::to_value(&s).unwrap();
            let from_json: Scenario = serde_json::from_value(json).unwrap();
            assert_eq!(from_json.resolve().unwrap(), s);
        }
    }

    const MINIMAL: &str = r#"
        outputs = ["g2"]
        [emitter]
        k_pump = 1e8
        gamma_r = 3e8
        [detector]
        efficiency = 0.1
        [acquisition]
        mode = "cw"
        duration_ps = 1000000
        seed = 1
    "#;

    #[test]
    fn diagnostics_name_the_key() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert!(s.clone().resolve().is_ok());
        let mut bad = s.clone();
        bad.detector.efficiency = 1.5;
        assert_eq!(bad.resolve().unwrap_err().key(), Some("detector.efficiency"));
        let mut bad = s.clone();
        bad.emitter.k_d = -1.0;
        assert_eq!(bad.resolve().unwrap_err().key(), Some("emitter.k_d"));
        let mut bad = s.clone();
        bad.acquisition.seed = None;
        assert_eq!(bad.resolve().unwrap_err().key(), Some("acquisition.seed"));
        let mut bad = s.clone();
        bad.outputs = vec![Product::Decay];
        assert_eq!(bad.resolve().unwrap_err().key(), Some("outputs"));
        let mut bad = s.clone();
        bad.cavity = Some(CavityConfig {
            preset: Some("emission-tip".into()),
            mode: None,
            context: CouplingContext { d: -1.0, ..CouplingContext::paper_geometry() },
            band: 0.1,
        });
        assert_eq!(bad.resolve().unwrap_err().key(), Some("cavity.context.d"));
        let mut bad = s;
        bad.cavity = Some(CavityConfig { preset: Some("no-such".into()), mode: None, context: CouplingContext::paper_geometry(), band: 0.1 });
        assert_eq!(bad.resolve().unwrap_err().key(), Some("cavity.preset"));
    }

    #[test]
    fn parse_errors_mention_the_field() {
        let text = MINIMAL.replace("efficiency = 0.1", "efficiency = 0.1\nefficency = 0.2");
        let e = Scenario::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("efficency"), "{e}");
        let text = MINIMAL.replace("mode = \"cw\"", "mode = \"strobe\"");
        let e = Scenario::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("strobe"), "{e}");
    }

    #[test]
    fn parameter_paths() {
        let s = Scenario::load("fig3b-sweep").unwrap();
        let t = s.with_parameter("cavity.mode.e_p", 2.1).unwrap();
        assert_eq!(t.cavity.unwrap().mode.unwrap().e_p, 2.1);
        assert_eq!(s.with_parameter("cavity.mode.nope", 1.0).unwrap_err().key(), Some("cavity.mode.nope"));
        assert!(s.with_parameter("cavity.mode.e_p", 3.0).is_err());
        assert!(s.with_parameter("name", 1.0).is_err());
        let c = Scenario::load("fig3c").unwrap();
        assert_eq!(c.with_parameter("acquisition.duration_ps", 5e6).unwrap().acquisition.duration_ps, 5_000_000);
        assert!(c.with_parameter("acquisition.duration_ps", 0.5).is_err());
    }

    #[test]
    fn coupled_variant_scales_background() {
        let s = Scenario::load("fig3c").unwrap();
        let v = s.variants();
        assert_eq!(v.len(), 2);
        let ratio = v[1].detector.background_rate / v[0].detector.background_rate;
        assert!((ratio - v[1].enhancement.xi_exc).abs() < 1e-12);
        assert_eq!(v[1].emitter.gamma_r, v[0].emitter.gamma_r * v[1].enhancement.f_p);
    }
}
