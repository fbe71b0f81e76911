//! Spin-resolved photophysics: the three-level cycle duplicated over a bright
//! and a dark spin manifold, linked by metastable-state branching and by
//! microwave-driven ground-state mixing. Produces CW ODMR spectra, contrast,
//! and the shot-noise-limited field sensitivity.
//!
//! The drive enters as a single rank-one term in the generator, so the
//! detected rate is a Moebius function of the mixing rate and the spectrum is
//! an exact Lorentzian, power-broadened relative to `delta_nu`.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cavity::lorentzian;
use crate::linalg;
use crate::photophysics::{LevelSystem, PhotophysicsError};
use crate::sim::{DetectorModel, RngSeed};

pub const G_BRIGHT: usize = 0;
pub const E_BRIGHT: usize = 1;
pub const S_BRIGHT: usize = 2;
pub const G_DARK: usize = 3;
pub const E_DARK: usize = 4;
pub const S_DARK: usize = 5;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdmrError {
    #[error(transparent)]
    Photophysics(#[from] PhotophysicsError),
    #[error("invalid spin parameter `{name}` = {value}: {why}")]
    InvalidSpin { name: &'static str, value: f64, why: &'static str },
    #[error("rate matrix has more than one closed class; steady state is not unique")]
    Absorbing,
    #[error("mw-off emission rate is zero; contrast undefined")]
    ZeroRate,
    #[error("frequency grid is empty")]
    EmptyGrid,
    #[error("invalid detector: {0}")]
    InvalidDetector(String),
    #[error("invalid sensitivity input `{name}` = {value}")]
    InvalidSensitivity { name: &'static str, value: f64 },
    #[error("cannot parse ODMR spectrum: {0}")]
    Parse(String),
}

/// Three-level emitter with spin-selective shelving.
///
/// `base.k_isc` is ignored; shelving is set per manifold by `k_isc_bright`
/// and `k_isc_dark`. `base.k_d` is the metastable decay rate, split between
/// the two ground manifolds by `branch_to_bright`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinLevelSystem {
    pub base: LevelSystem,
    pub k_isc_bright: f64,
    pub k_isc_dark: f64,
    pub branch_to_bright: f64,
    /// Resonance centre, MHz.
    pub nu0: f64,
    /// Intrinsic (weak-drive) linewidth, MHz.
    pub delta_nu: f64,
    /// Ground-state mixing rate at resonance, Hz.
    pub k_mw: f64,
}

impl SpinLevelSystem {
    pub fn validate(&self) -> Result<(), OdmrError> {
        self.base.validate()?;
        let bad = |name, value, why| Err(OdmrError::InvalidSpin { name, value, why });
        for (name, v) in [("k_isc_bright", self.k_isc_bright), ("k_isc_dark", self.k_isc_dark), ("k_mw", self.k_mw)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name, v, "must be finite and >= 0");
            }
        }
        if self.k_isc_dark < self.k_isc_bright {
            return bad("k_isc_dark", self.k_isc_dark, "must be >= k_isc_bright");
        }
        if !(0.0..=1.0).contains(&self.branch_to_bright) {
            return bad("branch_to_bright", self.branch_to_bright, "must lie in [0, 1]");
        }
        if !(self.delta_nu.is_finite() && self.delta_nu > 0.0) {
            return bad("delta_nu", self.delta_nu, "must be > 0");
        }
        if !self.nu0.is_finite() {
            return bad("nu0", self.nu0, "must be finite");
        }
        if self.base.k_pump > 0.0 && self.base.gamma_r + self.base.gamma_nr + self.k_isc_bright == 0.0 {
            return Err(PhotophysicsError::AbsorbingState("excited state cannot decay").into());
        }
        if self.k_isc_dark > 0.0 && self.base.k_d == 0.0 {
            return Err(PhotophysicsError::AbsorbingState("metastable state cannot decay (k_d = 0)").into());
        }
        Ok(())
    }

    /// Same system with `gamma_r` multiplied by `f_p`.
    pub fn with_purcell(&self, f_p: f64) -> Self {
        let mut s = *self;
        s.base.gamma_r *= f_p;
        s
    }

    pub fn with_pump(&self, k_pump: f64) -> Self {
        let mut s = *self;
        s.base.k_pump = k_pump;
        s
    }

    /// Mixing rate at microwave frequency `nu` (MHz).
    pub fn mixing_rate(&self, nu: f64) -> f64 {
        self.k_mw * lorentzian(nu, self.nu0, self.delta_nu)
    }
}

/// Six-level generator for a given ground-state mixing rate, `m[to][from]`.
pub fn rate_matrix(sys: &SpinLevelSystem, k_mix: f64) -> [[f64; 6]; 6] {
    let b = &sys.base;
    let mut m = [[0.0; 6]; 6];
    let mut add = |from: usize, to: usize, rate: f64| {
        m[to][from] += rate;
        m[from][from] -= rate;
    };
    let relax = b.gamma_r + b.gamma_nr;
    let beta = sys.branch_to_bright;
    for (g, e, s, k_isc) in [(G_BRIGHT, E_BRIGHT, S_BRIGHT, sys.k_isc_bright), (G_DARK, E_DARK, S_DARK, sys.k_isc_dark)] {
        add(g, e, b.k_pump);
        add(e, g, relax);
        add(e, s, k_isc);
        add(s, G_BRIGHT, beta * b.k_d);
        add(s, G_DARK, (1.0 - beta) * b.k_d);
    }
    add(G_BRIGHT, G_DARK, k_mix);
    add(G_DARK, G_BRIGHT, k_mix);
    m
}

/// Steady-state populations for mixing rate `k_mix`.
pub fn steady_populations(sys: &SpinLevelSystem, k_mix: f64) -> Result<[f64; 6], OdmrError> {
    sys.validate()?;
    linalg::stationary(&rate_matrix(sys, k_mix)).ok_or(OdmrError::Absorbing)
}

fn emission_rate(sys: &SpinLevelSystem, k_mix: f64) -> Result<f64, OdmrError> {
    let p = steady_populations(sys, k_mix)?;
    Ok(sys.base.gamma_r * (p[E_BRIGHT] + p[E_DARK]))
}

/// Photon emission rate (photons/s) with the drive on resonance or off.
pub fn odmr_steady_rates(sys: &SpinLevelSystem, mw_on: bool) -> Result<f64, OdmrError> {
    emission_rate(sys, if mw_on { sys.k_mw } else { 0.0 })
}

/// `(R_off - R_on) / R_off` on resonance.
pub fn odmr_contrast(sys: &SpinLevelSystem) -> Result<f64, OdmrError> {
    let off = odmr_steady_rates(sys, false)?;
    if off <= 0.0 {
        return Err(OdmrError::ZeroRate);
    }
    let on = odmr_steady_rates(sys, true)?;
    Ok(((off - on) / off).max(0.0))
}

/// Mixing rate at which half of the saturated contrast is reached.
///
/// Contrast follows `C(k) = C_inf k / (k + k_half)` exactly; two solves fix both constants.
pub fn mixing_half_rate(sys: &SpinLevelSystem) -> Result<Option<f64>, OdmrError> {
    let off = emission_rate(sys, 0.0)?;
    if off <= 0.0 {
        return Err(OdmrError::ZeroRate);
    }
    let k1 = sys.k_mw.max(1.0);
    let k2 = 2.0 * k1;
    let c1 = (off - emission_rate(sys, k1)?) / off;
    let c2 = (off - emission_rate(sys, k2)?) / off;
    if !(c1 > 0.0 && c2 > 0.0) {
        return Ok(None);
    }
    let slope = (1.0 / c1 - 1.0 / c2) / (1.0 / k1 - 1.0 / k2);
    let intercept = 1.0 / c1 - slope / k1;
    Ok(if intercept > 0.0 && slope > 0.0 { Some(slope / intercept) } else { None })
}

/// Full width of the spectral dip, MHz: `delta_nu * sqrt(1 + k_mw / k_half)`.
pub fn observed_linewidth(sys: &SpinLevelSystem) -> Result<f64, OdmrError> {
    Ok(match mixing_half_rate(sys)? {
        Some(kh) => sys.delta_nu * (1.0 + sys.k_mw / kh).sqrt(),
        None => sys.delta_nu,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmrSpectrum {
    /// Microwave frequencies, MHz.
    pub frequencies: Vec<f64>,
    /// Detected rates, cts/s.
    pub rates: Vec<f64>,
    /// On-resonance contrast of the underlying system, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<f64>,
}

impl OdmrSpectrum {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nu_MHz,rate_cts_s\n");
        for (f, r) in self.frequencies.iter().zip(&self.rates) {
            s.push_str(&format!("{f},{r}\n"));
        }
        s
    }

    /// Reads `nu_MHz,rate_cts_s` rows; the header line is optional.
    pub fn from_csv(text: &str) -> Result<Self, OdmrError> {
        let rows = crate::correlator::parse_csv_rows(text, "odmr csv", 2).map_err(|e| OdmrError::Parse(e.to_string()))?;
        let spec = OdmrSpectrum {
            frequencies: rows.iter().map(|r| r[0]).collect(),
            rates: rows.iter().map(|r| r[1]).collect(),
            contrast: None,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self, OdmrError> {
        let spec: OdmrSpectrum = serde_json::from_str(text).map_err(|e| OdmrError::Parse(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), OdmrError> {
        if self.frequencies.len() != self.rates.len() {
            return Err(OdmrError::Parse("frequencies and rates differ in length".into()));
        }
        if self.frequencies.is_empty() {
            return Err(OdmrError::EmptyGrid);
        }
        if !self.frequencies.iter().chain(&self.rates).all(|v| v.is_finite()) {
            return Err(OdmrError::Parse("non-finite value".into()));
        }
        Ok(())
    }
}

/// Expected detected rate at each frequency.
pub fn odmr_spectrum(sys: &SpinLevelSystem, freqs: &[f64], det: &DetectorModel) -> Result<OdmrSpectrum, OdmrError> {
    if freqs.is_empty() {
        return Err(OdmrError::EmptyGrid);
    }
    det.validate().map_err(|e| OdmrError::InvalidDetector(e.to_string()))?;
    let contrast = odmr_contrast(sys)?;
    let rates = freqs
        .par_iter()
        .map(|&nu| emission_rate(sys, sys.mixing_rate(nu)).map(|r| det.expected_rate(r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OdmrSpectrum { frequencies: freqs.to_vec(), rates, contrast: Some(contrast) })
}

/// Like [`odmr_spectrum`], with each point replaced by Poisson counts over `dwell_s` seconds.
pub fn odmr_spectrum_sampled(
    sys: &SpinLevelSystem,
    freqs: &[f64],
    det: &DetectorModel,
    dwell_s: f64,
    seed: RngSeed,
) -> Result<OdmrSpectrum, OdmrError> {
    if !(dwell_s > 0.0 && dwell_s.is_finite()) {
        return Err(OdmrError::InvalidDetector(format!("dwell time must be > 0, got {dwell_s}")));
    }
    let mut spec = odmr_spectrum(sys, freqs, det)?;
    let mut rng = seed.rng();
    for r in spec.rates.iter_mut() {
        let mean = *r * dwell_s;
        let counts = if mean > 0.0 { Poisson::new(mean).expect("finite positive mean").sample(&mut rng) } else { 0.0 };
        *r = counts / dwell_s;
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineShape {
    Lorentzian,
    Gaussian,
}

impl LineShape {
    /// Ratio of linewidth to maximum-slope point, in the sensitivity prefactor.
    pub fn factor(self) -> f64 {
        match self {
            LineShape::Lorentzian => 4.0 / (3.0 * 3f64.sqrt()),
            LineShape::Gaussian => (std::f64::consts::E / (8.0 * std::f64::consts::LN_2)).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInputs {
    /// Lineshape factor.
    pub a: f64,
    /// Linewidth, Hz.
    pub delta_nu: f64,
    pub contrast: f64,
    /// Detected count rate, cts/s.
    pub rate: f64,
    #[serde(default = "default_g")]
    pub g_factor: f64,
}

fn default_g() -> f64 {
    2.0
}

impl SensitivityInputs {
    pub fn new(shape: LineShape, delta_nu_hz: f64, contrast: f64, rate: f64) -> Self {
        Self { a: shape.factor(), delta_nu: delta_nu_hz, contrast, rate, g_factor: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub inputs: SensitivityInputs,
    pub planck: f64,
    pub bohr_magneton: f64,
    /// `h / (g mu_B)`, T/Hz.
    pub field_per_frequency: f64,
    /// `delta_nu / (C sqrt(R))`, Hz/sqrt(Hz).
    pub linewidth_term: f64,
    /// T/sqrt(Hz).
    pub eta: f64,
    pub eta_ut: f64,
}

/// Shot-noise-limited DC field sensitivity, T/sqrt(Hz).
pub fn sensitivity(inputs: &SensitivityInputs) -> Result<f64, OdmrError> {
    sensitivity_report(inputs).map(|r| r.eta)
}

pub fn sensitivity_report(inputs: &SensitivityInputs) -> Result<SensitivityReport, OdmrError> {
    let i = inputs;
    let check = |name, v: f64| if v.is_finite() && v > 0.0 { Ok(()) } else { Err(OdmrError::InvalidSensitivity { name, value: v }) };
    check("a", i.a)?;
    check("delta_nu", i.delta_nu)?;
    check("contrast", i.contrast)?;
    check("rate", i.rate)?;
    check("g_factor", i.g_factor)?;
    if i.contrast >= 1.0 {
        return Err(OdmrError::InvalidSensitivity { name: "contrast", value: i.contrast });
    }
    let field_per_frequency = PLANCK / (i.g_factor * BOHR_MAGNETON);
    let linewidth_term = i.delta_nu / (i.contrast * i.rate.sqrt());
    let eta = i.a * field_per_frequency * linewidth_term;
    Ok(SensitivityReport {
        inputs: *i,
        planck: PLANCK,
        bohr_magneton: BOHR_MAGNETON,
        field_per_frequency,
        linewidth_term,
        eta,
        eta_ut: eta * 1e6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::rk4_long_time;
    use crate::photophysics::steady_state;
    use proptest::prelude::*;

    fn sys(k_pump: f64) -> SpinLevelSystem {
        SpinLevelSystem {
            base: LevelSystem { k_pump, gamma_r: 3.45e8, gamma_nr: 2e7, k_isc: 0.0, k_d: 3e6 },
            k_isc_bright: 1e6,
            k_isc_dark: 3e6,
            branch_to_bright: 0.6,
            nu0: 2870.0,
            delta_nu: 50.0,
            k_mw: 1e8,
        }
    }

    #[test]
    fn columns_conserve_probability() {
        let m = rate_matrix(&sys(1e8), 1e7);
        for col in 0..6 {
            let s: f64 = (0..6).map(|r| m[r][col]).sum();
            assert!(s.abs() < 1e-6);
        }
        let p = steady_populations(&sys(1e8), 1e7).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_rk4_long_time() {
        for (kp, mix) in [(1e7, 0.0), (1e8, 1e7), (3e9, 1e9)] {
            let s = sys(kp);
            let exact = steady_populations(&s, mix).unwrap();
            let ode = rk4_long_time(&rate_matrix(&s, mix), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
            for k in 0..6 {
                assert!((exact[k] - ode[k]).abs() < 1e-8, "kp={kp} level {k}: {} vs {}", exact[k], ode[k]);
            }
        }
    }

    #[test]
    fn no_selectivity_no_contrast() {
        let mut s = sys(1e8);
        s.k_isc_dark = s.k_isc_bright;
        assert!(odmr_contrast(&s).unwrap() < 1e-12);
    }

    #[test]
    fn decoupled_limit_is_three_level() {
        let mut s = sys(2e8);
        s.k_mw = 0.0;
        s.branch_to_bright = 1.0;
        let three = LevelSystem { k_isc: s.k_isc_bright, ..s.base };
        let pe = steady_state(&three).unwrap().p_e;
        let six = steady_populations(&s, 0.0).unwrap();
        assert!((six[E_BRIGHT] - pe).abs() < 1e-12);
        assert!(six[E_DARK].abs() < 1e-12);
        let ode = rk4_long_time(&rate_matrix(&s, 0.0), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((ode[E_BRIGHT] - pe).abs() < 1e-8);
    }

    #[test]
    fn absorbing_configurations_rejected() {
        let mut s = sys(1e8);
        s.base.k_d = 0.0;
        assert!(odmr_contrast(&s).is_err());
        let mut s = sys(1e8);
        s.k_isc_dark = 0.5 * s.k_isc_bright;
        assert!(matches!(s.validate(), Err(OdmrError::InvalidSpin { name: "k_isc_dark", .. })));
        assert!(matches!(odmr_contrast(&sys(0.0)), Err(OdmrError::Absorbing) | Err(OdmrError::ZeroRate)));
    }

    #[test]
    fn spectrum_dip_and_wings() {
        let s = sys(1e8);
        let det = DetectorModel::ideal();
        let spec = odmr_spectrum(&s, &[s.nu0 - 1e9, s.nu0], &det).unwrap();
        let off = odmr_steady_rates(&s, false).unwrap();
        assert!((spec.rates[0] / off - 1.0).abs() < 1e-9);
        assert!((spec.rates[1] - off * (1.0 - spec.contrast.unwrap())).abs() < 1e-9 * off);
        assert!(matches!(odmr_spectrum(&s, &[], &det), Err(OdmrError::EmptyGrid)));
    }

    #[test]
    fn spectrum_is_power_broadened_lorentzian() {
        let s = sys(1e8);
        let off = odmr_steady_rates(&s, false).unwrap();
        let c = odmr_contrast(&s).unwrap();
        let w = observed_linewidth(&s).unwrap();
        assert!(w > s.delta_nu);
        for nu in [2700.0, 2850.0, 2869.0, 2990.0] {
            let r = emission_rate(&s, s.mixing_rate(nu)).unwrap();
            let model = off * (1.0 - c * lorentzian(nu, s.nu0, w));
            assert!((r - model).abs() < 1e-9 * off, "{nu}");
        }
    }

    #[test]
    fn sampled_spectrum_is_deterministic() {
        let s = sys(1e8);
        let det = DetectorModel { efficiency: 1e-3, ..DetectorModel::ideal() };
        let f: Vec<f64> = (0..20).map(|i| 2800.0 + 7.0 * i as f64).collect();
        let a = odmr_spectrum_sampled(&s, &f, &det, 1.0, RngSeed(3)).unwrap();
        let b = odmr_spectrum_sampled(&s, &f, &det, 1.0, RngSeed(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.rates.iter().all(|r| r.fract() == 0.0 && *r >= 0.0));
    }

    #[test]
    fn eq1_value_and_homogeneity() {
        let i = SensitivityInputs::new(LineShape::Lorentzian, 110e6, 0.023, 1.88e5);
        let r = sensitivity_report(&i).unwrap();
        // h / (2 mu_B) from the defining constants
        assert!((r.field_per_frequency - 3.5723e-11).abs() < 1e-14);
        assert!((r.eta_ut - 303.0).abs() / 303.0 < 0.01, "{}", r.eta_ut);
        let doubled = sensitivity(&SensitivityInputs { rate: 2.0 * i.rate, ..i }).unwrap();
        assert!((r.eta / doubled - 2f64.sqrt()).abs() < 1e-12);
        let wide = sensitivity(&SensitivityInputs { delta_nu: 3.0 * i.delta_nu, ..i }).unwrap();
        assert!((wide / r.eta - 3.0).abs() < 1e-12);
        let p = SensitivityInputs::new(LineShape::Lorentzian, 179.5e6, 0.083, 2.63e5);
        assert!((sensitivity(&p).unwrap() * 1e6 - 116.0).abs() / 116.0 < 0.01);
        assert!((LineShape::Gaussian.factor() - 0.700).abs() < 1e-3);
        assert!(sensitivity(&SensitivityInputs { contrast: 0.0, ..i }).is_err());
        assert!(sensitivity(&SensitivityInputs { rate: -1.0, ..i }).is_err());
        assert!(sensitivity(&SensitivityInputs { contrast: 1.0, ..i }).is_err());
    }

    proptest! {
        #[test]
        fn contrast_bounded_and_conserving(kp in 1e5f64..1e11, kib in 0.0f64..1e7, extra in 0.0f64..3e7,
                                           beta in 0.0f64..=1.0, kd in 1e5f64..1e8, kmw in 0.0f64..1e12) {
            let s = SpinLevelSystem {
                base: LevelSystem { k_pump: kp, gamma_r: 3e8, gamma_nr: 1e7, k_isc: 0.0, k_d: kd },
                k_isc_bright: kib, k_isc_dark: kib + extra, branch_to_bright: beta,
                nu0: 2870.0, delta_nu: 100.0, k_mw: kmw,
            };
            if let Ok(p) = steady_populations(&s, kmw) {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!(p.iter().all(|&v| v >= 0.0));
            }
            if let Ok(c) = odmr_contrast(&s) {
                prop_assert!((0.0..1.0).contains(&c));
            }
        }

        #[test]
        fn contrast_grows_with_dark_shelving(kp in 1e6f64..1e10, kib in 1e4f64..1e6, d1 in 0.0f64..1e7, d2 in 0.0f64..1e7) {
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let mut s = sys(kp);
            s.k_isc_bright = kib;
            s.k_isc_dark = kib + lo;
            let c_lo = odmr_contrast(&s).unwrap();
            s.k_isc_dark = kib + hi;
            let c_hi = odmr_contrast(&s).unwrap();
            prop_assert!(c_hi >= c_lo - 1e-12, "{c_lo} -> {c_hi}");
        }
    }
}
