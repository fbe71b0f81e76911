//! Phenomenological plasmonic tip-cavity.
//!
//! Excitation-rate enhancement and Purcell factor are offset Lorentzians in
//! photon energy, attenuated exponentially with tip-sample distance. The
//! excitation enhancement additionally depends on the excitation
//! polarization relative to the tip axis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photophysics::LevelSystem;

/// Fractional band `|F_P - xi_exc| <= band * max(F_P, xi_exc)` classified as balanced.
pub const DEFAULT_BALANCED_BAND: f64 = 0.1;

/// Range of plasmon energies the model accepts, eV.
pub const PLASMON_ENERGY_RANGE: (f64, f64) = (1.5, 2.5);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CavityError {
    #[error("invalid plasmon mode: {0}")]
    InvalidMode(String),
    #[error("invalid coupling context: {0}")]
    InvalidContext(String),
    #[error("preset file: {0}")]
    Preset(String),
    #[error("unknown plasmon preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlasmonMode {
    /// Plasmon peak energy, eV.
    pub e_p: f64,
    /// Plasmon full width, eV.
    pub gamma_p: f64,
    /// Peak excitation-rate enhancement.
    pub xi_max: f64,
    /// Peak Purcell factor.
    pub f_max: f64,
    /// Offset of the excitation-enhancement peak from the Purcell peak, eV.
    #[serde(default)]
    pub delta_em: f64,
    /// Near-field decay length, nm.
    pub d0: f64,
    /// p- over s-polarized intensity enhancement.
    #[serde(default = "one")]
    pub pol_contrast: f64,
    /// Peak nonradiative quenching rate added to `gamma_nr`, Hz.
    #[serde(default)]
    pub quench_max: f64,
}

fn one() -> f64 {
    1.0
}

impl PlasmonMode {
    pub fn validate(&self) -> Result<(), CavityError> {
        let bad = |msg: String| Err(CavityError::InvalidMode(msg));
        let (lo, hi) = PLASMON_ENERGY_RANGE;
        if !(self.e_p >= lo && self.e_p <= hi) {
            return bad(format!("e_p = {} eV outside [{lo}, {hi}]", self.e_p));
        }
        if !(self.gamma_p > 0.0 && self.gamma_p.is_finite()) {
            return bad(format!("gamma_p = {} must be > 0", self.gamma_p));
        }
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return bad(format!("d0 = {} must be > 0", self.d0));
        }
        if !(self.xi_max >= 1.0 && self.xi_max.is_finite()) {
            return bad(format!("xi_max = {} must be >= 1", self.xi_max));
        }
        if !(self.f_max >= 1.0 && self.f_max.is_finite()) {
            return bad(format!("f_max = {} must be >= 1", self.f_max));
        }
        if !(self.pol_contrast >= 1.0 && self.pol_contrast.is_finite()) {
            return bad(format!("pol_contrast = {} must be >= 1", self.pol_contrast));
        }
        if !self.delta_em.is_finite() {
            return bad("delta_em must be finite".into());
        }
        if !(self.quench_max >= 0.0 && self.quench_max.is_finite()) {
            return bad(format!("quench_max = {} must be >= 0", self.quench_max));
        }
        Ok(())
    }
}

/// Geometric and spectral state of one emitter under the tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingContext {
    /// Tip-sample distance, nm.
    pub d: f64,
    /// Excitation polarization angle, degrees; 0 is parallel to the tip axis.
    #[serde(default)]
    pub theta: f64,
    /// Emitter zero-phonon-line energy, eV.
    pub e_zpl: f64,
    /// Excitation photon energy, eV.
    pub e_laser: f64,
}

impl CouplingContext {
    /// 650 nm emitter, 594 nm laser, tip 2 nm above the emitter, p-polarized.
    pub fn paper_geometry() -> Self {
        Self { d: 2.0, theta: 0.0, e_zpl: 1.91, e_laser: 2.09 }
    }

    pub fn validate(&self) -> Result<(), CavityError> {
        let bad = |msg: String| Err(CavityError::InvalidContext(msg));
        if !(self.d >= 0.0) {
            return bad(format!("d = {} must be >= 0", self.d));
        }
        if !(0.0..=90.0).contains(&self.theta) {
            return bad(format!("theta = {} outside [0, 90]", self.theta));
        }
        if !(self.e_zpl > 0.0 && self.e_laser.is_finite()) {
            return bad("photon energies must be positive and finite".into());
        }
        if !(self.e_laser > self.e_zpl) {
            return bad(format!(
                "e_laser = {} must exceed e_zpl = {} (above-ZPL excitation)",
                self.e_laser, self.e_zpl
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    EmissionDominated,
    Balanced,
    ExcitationDominated,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::EmissionDominated => "EmissionDominated",
            Regime::Balanced => "Balanced",
            Regime::ExcitationDominated => "ExcitationDominated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementResult {
    pub xi_exc: f64,
    pub f_p: f64,
    pub regime: Regime,
    /// Additional nonradiative rate from the metal, Hz.
    #[serde(default)]
    pub quench_rate: f64,
}

impl EnhancementResult {
    /// No enhancement at all.
    pub fn unity() -> Self {
        Self { xi_exc: 1.0, f_p: 1.0, regime: Regime::Balanced, quench_rate: 0.0 }
    }
}

/// Unit-peak Lorentzian of full width `gamma`.
pub fn lorentzian(e: f64, e0: f64, gamma: f64) -> f64 {
    let hw2 = 0.25 * gamma * gamma;
    hw2 / ((e - e0).powi(2) + hw2)
}

pub fn distance_decay(d: f64, d0: f64) -> f64 {
    (-d / d0).exp()
}

/// `cos^2 theta + sin^2 theta / pol_contrast`, with `theta` in degrees.
pub fn polarization_factor(theta_deg: f64, pol_contrast: f64) -> f64 {
    let (s, c) = theta_deg.to_radians().sin_cos();
    c * c + s * s / pol_contrast
}

pub fn classify_regime(f_p: f64, xi_exc: f64, band: f64) -> Regime {
    let diff = f_p - xi_exc;
    if diff.abs() <= band * f_p.max(xi_exc) {
        Regime::Balanced
    } else if diff > 0.0 {
        Regime::EmissionDominated
    } else {
        Regime::ExcitationDominated
    }
}

pub fn enhancement_at(mode: &PlasmonMode, ctx: &CouplingContext) -> EnhancementResult {
    enhancement_with_band(mode, ctx, DEFAULT_BALANCED_BAND)
}

pub fn enhancement_with_band(mode: &PlasmonMode, ctx: &CouplingContext, band: f64) -> EnhancementResult {
    let decay = distance_decay(ctx.d, mode.d0);
    let xi_exc = 1.0
        + (mode.xi_max - 1.0)
            * lorentzian(ctx.e_laser, mode.e_p + mode.delta_em, mode.gamma_p)
            * decay
            * polarization_factor(ctx.theta, mode.pol_contrast);
    let emission_overlap = lorentzian(ctx.e_zpl, mode.e_p, mode.gamma_p) * decay;
    let f_p = 1.0 + (mode.f_max - 1.0) * emission_overlap;
    EnhancementResult {
        xi_exc,
        f_p,
        regime: classify_regime(f_p, xi_exc, band),
        quench_rate: mode.quench_max * emission_overlap,
    }
}

/// Coupled counterpart of `sys`: Purcell on `gamma_r`, near-field pumping on `k_pump`.
pub fn couple(sys: &LevelSystem, enh: &EnhancementResult) -> LevelSystem {
    LevelSystem {
        k_pump: sys.k_pump * enh.xi_exc,
        gamma_r: sys.gamma_r * enh.f_p,
        gamma_nr: sys.gamma_nr + enh.quench_rate,
        k_isc: sys.k_isc,
        k_d: sys.k_d,
    }
}

/// Plasmon energy in `[lo, hi]` where `F_P - xi_exc` changes sign, by bisection.
///
/// Returns `None` if the sign does not change between the endpoints.
pub fn crossover_energy(mode: &PlasmonMode, ctx: &CouplingContext, lo: f64, hi: f64) -> Option<f64> {
    let diff = |e_p: f64| {
        let r = enhancement_at(&PlasmonMode { e_p, ..*mode }, ctx);
        r.f_p - r.xi_exc
    };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (diff(a), diff(b));
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if diff(m).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-13 {
            break;
        }
    }
    Some(0.5 * (a + b))
}

#[derive(Debug, Deserialize)]
struct PresetFile {
    #[serde(default)]
    modes: BTreeMap<String, PlasmonMode>,
}

/// Parses a preset file: one `[modes.<name>]` table per plasmon mode.
pub fn parse_mode_presets(text: &str) -> Result<BTreeMap<String, PlasmonMode>, CavityError> {
    let file: PresetFile = toml::from_str(text).map_err(|e| CavityError::Preset(e.message().to_string()))?;
    for (name, mode) in &file.modes {
        mode.validate().map_err(|e| CavityError::Preset(format!("modes.{name}: {e}")))?;
    }
    Ok(file.modes)
}

const BUILTIN_PRESETS: &str = include_str!("../presets/plasmon_modes.toml");

/// Plasmon modes shipped with the crate.
pub fn builtin_presets() -> BTreeMap<String, PlasmonMode> {
    parse_mode_presets(BUILTIN_PRESETS).expect("built-in presets are valid")
}

pub fn builtin_preset(name: &str) -> Result<PlasmonMode, CavityError> {
    builtin_presets()
        .remove(name)
        .ok_or_else(|| CavityError::UnknownPreset(name.to_string()))
}
