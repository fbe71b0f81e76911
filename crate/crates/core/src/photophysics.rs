//! Closed-form three-level emitter model.
//!
//! Levels are ground `g`, excited `e` and metastable `s`. Optical pumping
//! drives `g -> e`, the excited state relaxes radiatively or nonradiatively
//! to `g` or shelves into `s`, and `s` returns to `g`. Everything here is a
//! pure function of a [`LevelSystem`]; the stochastic simulator and the
//! fitting code use these results as their reference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of the ground level in state vectors.
pub const GROUND: usize = 0;
/// Index of the excited level in state vectors.
pub const EXCITED: usize = 1;
/// Index of the metastable (shelving) level in state vectors.
pub const METASTABLE: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhotophysicsError {
    #[error("rate `{name}` must be finite and non-negative, got {value}")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("absorbing state: {0}")]
    AbsorbingState(&'static str),
    #[error("emitter is not pumped (k_pump = 0); g2 is undefined")]
    NotPumped,
    #[error("excitation power must be finite and non-negative, got {0}")]
    NegativePower(f64),
    #[error("saturation model requires I_inf > 0 and P_sat > 0 (got {i_inf}, {p_sat})")]
    InvalidSaturation { i_inf: f64, p_sat: f64 },
}

/// Intrinsic transition rates of a three-level emitter, all in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSystem {
    /// `g -> e` optical pumping, proportional to excitation intensity.
    pub k_pump: f64,
    /// Radiative `e -> g`.
    pub gamma_r: f64,
    /// Nonradiative `e -> g`.
    #[serde(default)]
    pub gamma_nr: f64,
    /// Shelving `e -> s`.
    #[serde(default)]
    pub k_isc: f64,
    /// Deshelving `s -> g`.
    #[serde(default)]
    pub k_d: f64,
}

impl LevelSystem {
    /// A radiatively limited emitter with the given excited-state lifetime (seconds).
    pub fn radiative_limit(lifetime_s: f64, k_pump: f64) -> Self {
        Self {
            k_pump,
            gamma_r: 1.0 / lifetime_s,
            gamma_nr: 0.0,
            k_isc: 0.0,
            k_d: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PhotophysicsError> {
        for (name, value) in [
            ("k_pump", self.k_pump),
            ("gamma_r", self.gamma_r),
            ("gamma_nr", self.gamma_nr),
            ("k_isc", self.k_isc),
            ("k_d", self.k_d),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(PhotophysicsError::InvalidRate { name, value });
            }
        }
        Ok(())
    }

    /// Total out-rate of the excited state.
    pub fn excited_decay_rate(&self) -> f64 {
        self.gamma_r + self.gamma_nr + self.k_isc
    }

    /// Excited-state lifetime in seconds (infinite if nothing depopulates `e`).
    pub fn lifetime(&self) -> f64 {
        1.0 / self.excited_decay_rate()
    }

    /// `gamma_r / (gamma_r + gamma_nr + k_isc)`, `None` when the excited state cannot decay.
    pub fn quantum_efficiency(&self) -> Option<f64> {
        let total = self.excited_decay_rate();
        (total > 0.0).then(|| self.gamma_r / total)
    }

    pub fn with_pump(self, k_pump: f64) -> Self {
        Self { k_pump, ..self }
    }

    /// Rejects configurations whose long-time state is absorbing under pumping.
    fn check_ergodic(&self) -> Result<(), PhotophysicsError> {
        self.validate()?;
        if self.k_pump > 0.0 {
            if self.excited_decay_rate() == 0.0 {
                return Err(PhotophysicsError::AbsorbingState(
                    "excited state has no decay channel",
                ));
            }
            if self.k_isc > 0.0 && self.k_d == 0.0 {
                return Err(PhotophysicsError::AbsorbingState(
                    "metastable state has no deshelving (k_isc > 0, k_d = 0)",
                ));
            }
        }
        Ok(())
    }
}

/// Occupation probabilities of the three levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub p_g: f64,
    pub p_e: f64,
    pub p_s: f64,
}

impl Populations {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p_g, self.p_e, self.p_s]
    }

    pub fn total(&self) -> f64 {
        self.p_g + self.p_e + self.p_s
    }
}

/// Generator of the level dynamics, `dp/dt = M p`, indexed `M[to][from]`.
pub fn rate_matrix(sys: &LevelSystem) -> [[f64; 3]; 3] {
    let relax = sys.gamma_r + sys.gamma_nr;
    [
        [-sys.k_pump, relax, sys.k_d],
        [sys.k_pump, -(relax + sys.k_isc), 0.0],
        [0.0, sys.k_isc, -sys.k_d],
    ]
}

/// Stationary populations under continuous pumping.
pub fn steady_state(sys: &LevelSystem) -> Result<Populations, PhotophysicsError> {
    sys.check_ergodic()?;
    if sys.k_pump == 0.0 {
        return Ok(Populations { p_g: 1.0, p_e: 0.0, p_s: 0.0 });
    }
    // Balance of e and s relative to p_e: p_g = G/k_pump * p_e, p_s = k_isc/k_d * p_e.
    let g_rel = sys.excited_decay_rate() / sys.k_pump;
    let s_rel = if sys.k_isc == 0.0 { 0.0 } else { sys.k_isc / sys.k_d };
    let p_e = 1.0 / (g_rel + 1.0 + s_rel);
    let p_s = s_rel * p_e;
    let p_g = 1.0 - p_e - p_s;
    Ok(Populations { p_g, p_e, p_s })
}

/// Bi-exponential parameters of `g2(tau) = 1 - (1+a) e^{-lambda_1 tau} + a e^{-lambda_2 tau}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Params {
    /// Antibunching rate, Hz.
    pub lambda_1: f64,
    /// Bunching (shelving) rate, Hz. Meaningless when `a == 0`.
    pub lambda_2: f64,
    /// Bunching amplitude.
    pub a: f64,
}

/// Shape of the relaxation of `p_e(tau)` after a detection event.
///
/// The reduced 2x2 system (p_g eliminated) has either two real eigenrates,
/// a degenerate pair, or a complex pair for strongly cyclic rate sets.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Relaxation {
    Real { lambda_1: f64, lambda_2: f64, a: f64 },
    Critical { lambda: f64, b: f64 },
    Oscillatory { sigma: f64, omega: f64, c: f64 },
}

/// Analytical second-order correlation of a single three-level emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Function {
    shape: Relaxation,
    p_e_inf: f64,
}

impl G2Function {
    /// `g2(tau)` for a delay in seconds; symmetric in `tau`.
    pub fn eval(&self, tau: f64) -> f64 {
        let t = tau.abs();
        match self.shape {
            // 1 - (1+a)e1 + a e2 == -(1+a)(e1-1) + a(e2-1); expm1 keeps small-tau accuracy.
            Relaxation::Real { lambda_1, lambda_2, a } => {
                -(1.0 + a) * (-lambda_1 * t).exp_m1() + a * (-lambda_2 * t).exp_m1()
            }
            Relaxation::Critical { lambda, b } => {
                -(-lambda * t).exp_m1() - b * t * (-lambda * t).exp()
            }
            Relaxation::Oscillatory { sigma, omega, c } => {
                let decay = (-sigma * t).exp();
                let wt = omega * t;
                // 1 - e(cos + c sin) = -(e-1) + e(1-cos) - e c sin
                -(-sigma * t).exp_m1() + decay * (2.0 * (0.5 * wt).sin().powi(2)) - decay * c * wt.sin()
            }
        }
    }

    /// Bi-exponential parameters; `None` for the degenerate or oscillatory cases.
    pub fn params(&self) -> Option<G2Params> {
        match self.shape {
            Relaxation::Real { lambda_1, lambda_2, a } => Some(G2Params { lambda_1, lambda_2, a }),
            _ => None,
        }
    }

    /// Steady-state excited population used for normalization.
    pub fn p_e_steady(&self) -> f64 {
        self.p_e_inf
    }

    /// Largest value on a log grid spanning the relaxation timescales.
    pub fn max_value(&self) -> f64 {
        let (fast, slow) = match self.shape {
            Relaxation::Real { lambda_1, lambda_2, .. } => (lambda_1, lambda_2.max(lambda_1 * 1e-9)),
            Relaxation::Critical { lambda, .. } => (lambda, lambda),
            Relaxation::Oscillatory { sigma, .. } => (sigma, sigma),
        };
        let lo = (0.01 / fast).ln();
        let hi = (50.0 / slow).ln();
        (0..=2000)
            .map(|i| self.eval((lo + (hi - lo) * i as f64 / 2000.0).exp()))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Closed-form `g2(tau) = p_e(tau | p(0) = g) / p_e(inf)`.
pub fn g2_analytical(sys: &LevelSystem) -> Result<G2Function, PhotophysicsError> {
    let pops = steady_state(sys)?;
    if sys.k_pump == 0.0 {
        return Err(PhotophysicsError::NotPumped);
    }
    let total = sys.excited_decay_rate();
    let fast = sys.k_pump + total;

    // Initial slope of p_e is k_pump; divided by p_e(inf) this is `kappa`.
    let kappa = sys.k_pump / pops.p_e;

    if sys.k_isc == 0.0 {
        return Ok(G2Function {
            shape: Relaxation::Real { lambda_1: fast, lambda_2: sys.k_d, a: 0.0 },
            p_e_inf: pops.p_e,
        });
    }

    // Characteristic polynomial of [[-(k_p + G), -k_p], [k_isc, -k_d]]:
    // lambda^2 - S lambda + P = 0.
    let sum = fast + sys.k_d;
    let prod = fast * sys.k_d + sys.k_pump * sys.k_isc;
    let disc = (fast - sys.k_d).powi(2) - 4.0 * sys.k_pump * sys.k_isc;

    let shape = if disc.abs() <= 1e-12 * sum * sum {
        let lambda = 0.5 * sum;
        Relaxation::Critical { lambda, b: lambda - kappa }
    } else if disc > 0.0 {
        let root = disc.sqrt();
        // Stable root pair: larger via sum, smaller via product.
        let lambda_1 = 0.5 * (sum + root);
        let lambda_2 = prod / lambda_1;
        let a = (kappa - lambda_1) / (lambda_1 - lambda_2);
        Relaxation::Real { lambda_1, lambda_2, a }
    } else {
        let sigma = 0.5 * sum;
        let omega = 0.5 * (-disc).sqrt();
        Relaxation::Oscillatory { sigma, omega, c: (sigma - kappa) / omega }
    };
    Ok(G2Function { shape, p_e_inf: pops.p_e })
}

/// First-order saturation law `I_inf * P / (P + P_sat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationModel {
    /// Count rate at infinite power, cts/s.
    pub i_inf: f64,
    /// Saturation power, mW.
    pub p_sat: f64,
}

impl SaturationModel {
    pub fn new(i_inf: f64, p_sat: f64) -> Result<Self, PhotophysicsError> {
        if !(i_inf > 0.0 && p_sat > 0.0 && i_inf.is_finite() && p_sat.is_finite()) {
            return Err(PhotophysicsError::InvalidSaturation { i_inf, p_sat });
        }
        Ok(Self { i_inf, p_sat })
    }

    /// The model whose count rate at `power` equals `rate`.
    pub fn through_point(p_sat: f64, power: f64, rate: f64) -> Result<Self, PhotophysicsError> {
        Self::new(rate * (power + p_sat) / power, p_sat)
    }
}

pub fn saturation_curve(model: &SaturationModel, power: f64) -> Result<f64, PhotophysicsError> {
    if !(power >= 0.0) || !power.is_finite() {
        return Err(PhotophysicsError::NegativePower(power));
    }
    Ok(model.i_inf * power / (power + model.p_sat))
}

/// Emitted photon rate `gamma_r * p_e` for each pump rate in `sweep`.
pub fn emission_rate_vs_pump(
    template: &LevelSystem,
    sweep: &[f64],
) -> Result<Vec<(f64, f64)>, PhotophysicsError> {
    sweep
        .iter()
        .map(|&k| {
            if !(k >= 0.0) {
                return Err(PhotophysicsError::InvalidRate { name: "k_pump", value: k });
            }
            let pops = steady_state(&template.with_pump(k))?;
            Ok((k, template.gamma_r * pops.p_e))
        })
        .collect()
}

/// Exact first-order saturation parameters `(I_inf, k_sat)` of the pump curve, in pump-rate units.
///
/// The three-level steady state gives `R = I_inf k / (k + k_sat)` with
/// `I_inf = gamma_r / (1 + k_isc/k_d)` and `k_sat = (gamma_r+gamma_nr+k_isc) / (1 + k_isc/k_d)`.
pub fn effective_saturation(sys: &LevelSystem) -> Result<(f64, f64), PhotophysicsError> {
    sys.with_pump(1.0).check_ergodic()?;
    let shelf = if sys.k_isc == 0.0 { 0.0 } else { sys.k_isc / sys.k_d };
    Ok((sys.gamma_r / (1.0 + shelf), sys.excited_decay_rate() / (1.0 + shelf)))
}
