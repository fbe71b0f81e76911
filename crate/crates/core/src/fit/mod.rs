//! Weighted nonlinear least squares for the four measurement models:
//! IRF-reconvolved exponential decay, first-order saturation, three-level
//! g2 with background, and Lorentzian ODMR dip.

pub mod lm;
mod special;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cavity::lorentzian;
use crate::correlator::{DecayHistogram, G2Curve};
use crate::odmr::OdmrSpectrum;
pub use lm::{LmOptions, Model};
pub use special::erfcx;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model is not finite at the initial parameters")]
    NonFiniteStart,
    #[error("singular Jacobian: data carry no information on `{0}`")]
    SingularJacobian(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    /// NaN when the normal matrix is singular or there are no spare degrees of freedom.
    pub stderr: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FitParam>,
    /// Weighted sum of squared residuals at the optimum.
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub cost_history: Vec<f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Value of a named parameter; panics on an unknown name.
    pub fn value(&self, name: &str) -> f64 {
        self.param(name).unwrap_or_else(|| panic!("no parameter `{name}` in {} fit", self.model)).value
    }

    pub fn stderr(&self, name: &str) -> f64 {
        self.param(name).unwrap_or_else(|| panic!("no parameter `{name}` in {} fit", self.model)).stderr
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}

fn param(name: &str, value: f64, stderr: f64, unit: &str) -> FitParam {
    FitParam { name: name.into(), value, stderr, unit: unit.into() }
}

fn stderrs(out: &lm::LmOutcome, n: usize) -> Vec<f64> {
    match &out.covariance {
        Some(c) => (0..n).map(|j| c[j * n + j].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; n],
    }
}

fn run<M: Model>(
    model: &M,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    p0: &[f64],
    names: &[&str],
) -> Result<lm::LmOutcome, FitError> {
    if x.iter().chain(y).chain(w).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("non-finite data".into()));
    }
    let fixed = vec![false; p0.len()];
    lm::minimize(model, x, y, w, p0, &fixed, &LmOptions::default()).map_err(|e| match e {
        lm::LmFailure::NonFiniteStart => FitError::NonFiniteStart,
        lm::LmFailure::SingularJacobian(j) => FitError::SingularJacobian(names[j].into()),
    })
}

fn result(model: &str, out: &lm::LmOutcome, params: Vec<FitParam>) -> FitResult {
    FitResult {
        model: model.into(),
        params,
        residual_norm: out.cost,
        reduced_chi2: out.reduced_chi2,
        gradient_norm: out.gradient_norm,
        converged: out.converged,
        iterations: out.iterations,
        cost_history: out.cost_history.clone(),
    }
}

// ---------------------------------------------------------------- lifetime

/// Gaussian instrument response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrfModel {
    /// Standard deviation, ps.
    pub sigma: f64,
    /// Offset of the excitation instant, ps.
    #[serde(default)]
    pub t0: f64,
}

impl IrfModel {
    pub fn delta() -> Self {
        Self { sigma: 0.0, t0: 0.0 }
    }
}

/// `amplitude * ExpGauss(t; tau, sigma, t0) + baseline`, with `ExpGauss` the
/// convolution of `exp(-t/tau)` (t >= 0) with a unit-area Gaussian.
///
/// With a nonzero `period` the response is periodic: tails of earlier pulses
/// and the jittered leading edge of the next pulse are added.
///
/// Parameters: `[tau, amplitude, baseline]`, `x` in ps.
#[derive(Debug, Clone, Copy)]
pub struct LifetimeModel {
    pub irf: IrfModel,
    /// Repetition period, ps; 0 for a single excitation.
    pub period: f64,
}

impl LifetimeModel {
    /// `ExpGauss` and its derivative with respect to `tau`.
    pub fn exp_gauss(&self, t: f64, tau: f64) -> (f64, f64) {
        let u = t - self.irf.t0;
        let s = self.irf.sigma;
        if s == 0.0 {
            return match u.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => {
                    let h = (-u / tau).exp();
                    (h, h * u / (tau * tau))
                }
                Some(std::cmp::Ordering::Equal) => (0.5, 0.0),
                _ => (0.0, 0.0),
            };
        }
        let z = (s / tau - u / s) / std::f64::consts::SQRT_2;
        let gauss = (-u * u / (2.0 * s * s)).exp();
        let h = if z < 0.0 {
            0.5 * (s * s / (2.0 * tau * tau) - u / tau).exp() * libm::erfc(z)
        } else {
            0.5 * gauss * erfcx(z)
        };
        let dh = h * (u / (tau * tau) - s * s / (tau * tau * tau))
            + gauss * s / (std::f64::consts::SQRT_2 * std::f64::consts::PI.sqrt() * tau * tau);
        (h, dh)
    }
}

impl Model for LifetimeModel {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, x: f64, p: &[f64], g: &mut [f64]) -> f64 {
        if !(p[0] > 0.0) {
            return f64::NAN;
        }
        let (mut h, mut dh) = self.exp_gauss(x, p[0]);
        if self.period > 0.0 {
            let (hn, dn) = self.exp_gauss(x - self.period, p[0]);
            h += hn;
            dh += dn;
            let earlier = ((60.0 * p[0] + 10.0 * self.irf.sigma) / self.period).ceil().min(1e4) as usize;
            for k in 1..=earlier {
                let (hk, dk) = self.exp_gauss(x + k as f64 * self.period, p[0]);
                h += hk;
                dh += dk;
            }
        }
        g[0] = p[1] * dh;
        g[1] = h;
        g[2] = 1.0;
        p[1] * h + p[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeInit {
    pub tau_ps: f64,
    pub amplitude: Option<f64>,
    pub baseline: Option<f64>,
}

impl LifetimeInit {
    pub fn tau(tau_ps: f64) -> Self {
        Self { tau_ps, amplitude: None, baseline: None }
    }
}

/// Reconvolution fit of a decay histogram: weights `1/(counts + 1)`, then
/// iteratively `1/model` until the lifetime settles.
pub fn fit_lifetime(h: &DecayHistogram, irf: IrfModel, init: LifetimeInit) -> Result<FitResult, FitError> {
    if h.counts.len() < 4 || h.counts.iter().all(|&c| c == 0) {
        return Err(FitError::TooFewPoints { needed: 4, got: h.counts.iter().filter(|&&c| c > 0).count() });
    }
    if !(init.tau_ps > 0.0) || !(irf.sigma >= 0.0) {
        return Err(FitError::InvalidInput("tau init must be > 0 and sigma >= 0".into()));
    }
    let x = h.centers();
    let y: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let w: Vec<f64> = h.counts.iter().map(|&c| 1.0 / (c as f64 + 1.0)).collect();
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[..sorted.len().div_ceil(10)].iter().sum::<f64>() / sorted.len().div_ceil(10) as f64;
    let base0 = init.baseline.unwrap_or(floor);
    let amp0 = init.amplitude.unwrap_or((sorted[sorted.len() - 1] - base0).max(1.0));
    let names = ["tau", "amplitude", "baseline"];
    let period = h.bin_edges[h.bin_edges.len() - 1] - h.bin_edges[0];
    let model = LifetimeModel { irf, period };
    let mut out = run(&model, &x, &y, &w, &[init.tau_ps, amp0, base0], &names)?;
    // Count-based weights bias sparse histograms toward low counts. Reweight
    // by the fitted model instead; the fixed point is the Poisson likelihood maximum.
    for _ in 0..20 {
        let w: Vec<f64> = x.iter().map(|&t| 1.0 / model.value(t, &out.params).max(0.1)).collect();
        if w.iter().any(|v| !v.is_finite()) {
            break;
        }
        let next = run(&model, &x, &y, &w, &out.params, &names)?;
        let moved = (next.params[0] - out.params[0]).abs() / out.params[0].abs();
        out = next;
        if moved < 1e-9 {
            break;
        }
    }
    // weights are now Poisson variances, so the covariance needs no chi2 rescaling
    let unscale = if out.reduced_chi2 > 0.0 { out.reduced_chi2.sqrt().recip() } else { 1.0 };
    let se: Vec<f64> = stderrs(&out, 3).iter().map(|s| s * unscale).collect();
    let p = &out.params;
    Ok(result(
        "lifetime",
        &out,
        vec![param("tau", p[0], se[0], "ps"), param("amplitude", p[1], se[1], "counts"), param("baseline", p[2], se[2], "counts")],
    ))
}

/// Fits many histograms in parallel with a shared IRF and initial guess.
pub fn fit_lifetimes(hs: &[DecayHistogram], irf: IrfModel, init: LifetimeInit) -> Vec<Result<FitResult, FitError>> {
    hs.par_iter().map(|h| fit_lifetime(h, irf, init)).collect()
}

// ---------------------------------------------------------------- saturation

/// `I_inf * P / (P + P_sat)`; parameters `[i_inf, p_sat]`.
#[derive(Debug, Clone, Copy)]
pub struct SaturationFitModel;

impl Model for SaturationFitModel {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, x: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let d = x + p[1];
        if !(d > 0.0) && x != 0.0 {
            return f64::NAN;
        }
        if x == 0.0 {
            g[0] = 0.0;
            g[1] = 0.0;
            return 0.0;
        }
        g[0] = x / d;
        g[1] = -p[0] * x / (d * d);
        p[0] * x / d
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SaturationInit {
    pub i_inf: Option<f64>,
    pub p_sat: Option<f64>,
}

/// Reads `power_mw,rate_cts_s` rows (header optional) or a JSON object with
/// `power_mw` and `rate_cts_s` arrays.
pub fn parse_saturation_points(text: &str) -> Result<Vec<(f64, f64)>, FitError> {
    let bad = |m: String| FitError::InvalidInput(m);
    let pts: Vec<(f64, f64)> = if text.trim_start().starts_with('{') {
        #[derive(Deserialize)]
        struct Table {
            power_mw: Vec<f64>,
            rate_cts_s: Vec<f64>,
        }
        let t: Table = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if t.power_mw.len() != t.rate_cts_s.len() {
            return Err(bad("power_mw and rate_cts_s differ in length".into()));
        }
        t.power_mw.into_iter().zip(t.rate_cts_s).collect()
    } else {
        crate::correlator::parse_csv_rows(text, "saturation csv", 2)
            .map_err(|e| bad(e.to_string()))?
            .into_iter()
            .map(|r| (r[0], r[1]))
            .collect()
    };
    if pts.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(bad("non-finite value".into()));
    }
    Ok(pts)
}

/// Fits `(power mW, rate cts/s)` points. Weights are `1/rate^2` when every rate is
/// positive (relative errors), uniform otherwise.
pub fn fit_saturation(points: &[(f64, f64)], init: SaturationInit) -> Result<FitResult, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints { needed: 3, got: points.len() });
    }
    if points.iter().any(|&(p, r)| !(p >= 0.0) || !r.is_finite()) {
        return Err(FitError::InvalidInput("powers must be >= 0 and rates finite".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let w: Vec<f64> = if y.iter().all(|&r| r > 0.0) { y.iter().map(|r| 1.0 / (r * r)).collect() } else { vec![1.0; y.len()] };
    let (i0, p0) = saturation_guess(points);
    let start = [init.i_inf.unwrap_or(i0), init.p_sat.unwrap_or(p0)];
    let out = run(&SaturationFitModel, &x, &y, &w, &start, &["i_inf", "p_sat"])?;
    let se = stderrs(&out, 2);
    Ok(result(
        "saturation",
        &out,
        vec![param("i_inf", out.params[0], se[0], "cts/s"), param("p_sat", out.params[1], se[1], "mW")],
    ))
}

/// Lineweaver-Burk style guess: `1/R = 1/I + (P_sat/I) / P`.
fn saturation_guess(points: &[(f64, f64)]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(p, r)| *p > 0.0 && *r > 0.0).map(|&(p, r)| (1.0 / p, 1.0 / r)).collect();
    let max_r = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let mean_p = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let fallback = (1.5 * max_r.max(1e-12), mean_p.max(1e-12));
    if pts.len() < 2 {
        return fallback;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    if sxx == 0.0 {
        return fallback;
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    if icpt > 0.0 && slope > 0.0 {
        (1.0 / icpt, slope / icpt)
    } else {
        fallback
    }
}

// ---------------------------------------------------------------- g2

/// `1 - rho^2 [(1+a) e^{-l1|t|} - a e^{-l2|t|}]`; parameters `[rho, l1, l2, a]`,
/// `x` in ns and rates in 1/ns.
#[derive(Debug, Clone, Copy)]
pub struct G2FitModel;

impl Model for G2FitModel {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let t = x.abs();
        let (rho, l1, l2, a) = (p[0], p[1], p[2], p[3]);
        let e1 = (-l1 * t).exp();
        let e2 = (-l2 * t).exp();
        let k = (1.0 + a) * e1 - a * e2;
        let r2 = rho * rho;
        g[0] = -2.0 * rho * k;
        g[1] = r2 * (1.0 + a) * t * e1;
        g[2] = -r2 * a * t * e2;
        g[3] = -r2 * (e1 - e2);
        1.0 - r2 * k
    }
}

/// `(1 - e^{-x}) / x` and its derivative, stable near 0.
fn relax_mean(x: f64) -> (f64, f64) {
    if x.abs() < 1e-3 {
        (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0, -0.5 + x / 3.0 - x * x / 8.0)
    } else {
        let g = -(-x).exp_m1() / x;
        (g, ((-x).exp() - g) / x)
    }
}

/// Mean of `e^{-l|t|}` over `[u, v]` and its derivative in `l`.
fn exp_bin_mean(l: f64, u: f64, v: f64) -> (f64, f64) {
    let (u, v) = if v <= 0.0 { (-v, -u) } else { (u, v) };
    let w = v - u;
    if u >= 0.0 {
        let (g, dg) = relax_mean(l * w);
        let e = (-l * u).exp();
        (e * g, -u * e * g + e * w * dg)
    } else {
        // straddles zero: the two one-sided integrals from 0
        let side = |len: f64| {
            let (g, dg) = relax_mean(l * len);
            (len * g, len * len * dg)
        };
        let (i1, d1) = side(-u);
        let (i2, d2) = side(v);
        ((i1 + i2) / w, (d1 + d2) / w)
    }
}

/// [`G2FitModel`] averaged over histogram bins; `x` is the bin index and
/// `bins` holds the `(lo, hi)` lag edges in ns.
#[derive(Debug, Clone)]
pub struct G2BinnedModel {
    pub bins: Vec<(f64, f64)>,
}

impl Model for G2BinnedModel {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let (u, v) = self.bins[x as usize];
        let (rho, l1, l2, a) = (p[0], p[1], p[2], p[3]);
        let (m1, dm1) = exp_bin_mean(l1, u, v);
        let (m2, dm2) = exp_bin_mean(l2, u, v);
        let k = (1.0 + a) * m1 - a * m2;
        let r2 = rho * rho;
        g[0] = -2.0 * rho * k;
        g[1] = -r2 * (1.0 + a) * dm1;
        g[2] = r2 * a * dm2;
        g[3] = -r2 * (m1 - m2);
        1.0 - r2 * k
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct G2Init {
    pub rho: Option<f64>,
    pub lambda_1_hz: Option<f64>,
    pub lambda_2_hz: Option<f64>,
    pub a: Option<f64>,
}

struct G2Guess {
    starts: Vec<[f64; 4]>,
}

fn g2_guess(x: &[f64], y: &[f64], init: &G2Init) -> G2Guess {
    let (i0, g0) = x
        .iter()
        .zip(y)
        .enumerate()
        .min_by(|a, b| a.1 .0.abs().total_cmp(&b.1 .0.abs()))
        .map(|(i, (_, &v))| (i, v))
        .unwrap();
    let rho = init.rho.unwrap_or((1.0 - g0).clamp(0.05, 1.0).sqrt());
    let span = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-6);
    // positive side, ordered by lag
    let pos: Vec<(f64, f64)> = x[i0..].iter().zip(&y[i0..]).map(|(&a, &b)| (a.abs(), b)).collect();
    let target = 1.0 - (1.0 - g0) / std::f64::consts::E;
    let t_rise = pos.iter().find(|p| p.1 >= target).map(|p| p.0).filter(|&t| t > 0.0).unwrap_or(span / 20.0);
    let l1 = init.lambda_1_hz.map(|v| v * 1e-9).unwrap_or(1.0 / t_rise);
    let (imax, &(tmax, gmax)) = pos.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap();
    let mut starts = Vec::new();
    let a_given = init.a;
    let l2_given = init.lambda_2_hz.map(|v| v * 1e-9);
    if gmax > 1.0 {
        let excess = gmax - 1.0;
        let t_fall = pos[imax..].iter().find(|p| p.1 - 1.0 <= excess / std::f64::consts::E).map(|p| p.0 - tmax);
        let l2 = l2_given.unwrap_or(1.0 / t_fall.filter(|&t| t > 0.0).unwrap_or(span / 3.0));
        starts.push([rho, l1, l2.min(0.5 * l1), a_given.unwrap_or(excess / (rho * rho))]);
    }
    starts.push([rho, l1, l2_given.unwrap_or(l1 / 30.0), a_given.unwrap_or(0.05)]);
    starts.push([rho, l1, l2_given.unwrap_or(3.0 / span), a_given.unwrap_or(0.5)]);
    G2Guess { starts }
}

/// Fits the background-diluted three-level g2 to a normalized curve.
///
/// Reports `g2_0_effective = 1 - rho^2` from the model and `g2_0_raw`, the
/// measured value of the bin containing zero lag.
pub fn fit_g2(curve: &G2Curve, init: G2Init) -> Result<FitResult, FitError> {
    if curve.bins() < 5 {
        return Err(FitError::TooFewPoints { needed: 5, got: curve.bins() });
    }
    if curve.zero_denominator() {
        return Err(FitError::InvalidInput("curve has no normalization (empty stream)".into()));
    }
    let x: Vec<f64> = curve.centers().iter().map(|t| t * 1e-3).collect();
    let y = curve.normalized.clone();
    let w: Vec<f64> = curve
        .counts
        .iter()
        .zip(&curve.denominators)
        .map(|(&c, &d)| if d > 0.0 { d * d / (c as f64 + 1.0) } else { 1.0 })
        .collect();
    let names = ["rho", "lambda_1", "lambda_2", "a"];
    let guess = g2_guess(&x, &y, &init);
    let binned = G2BinnedModel { bins: curve.bin_edges.windows(2).map(|e| (e[0] * 1e-3, e[1] * 1e-3)).collect() };
    let index: Vec<f64> = (0..curve.bins()).map(|i| i as f64).collect();
    let mut best: Option<lm::LmOutcome> = None;
    let mut first_err = None;
    for start in &guess.starts {
        match run(&binned, &index, &y, &w, start, &names) {
            Ok(out) => {
                if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                    best = Some(out);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let mut out = match best {
        Some(b) => b,
        None => return Err(first_err.unwrap()),
    };
    let mut se = stderrs(&out, 4);
    // (l1, l2, a) and (l2, l1, -1-a) describe the same curve; report l1 >= l2
    if out.params[2] > out.params[1] {
        out.params.swap(1, 2);
        out.params[3] = -1.0 - out.params[3];
        se.swap(1, 2);
    }
    out.params[0] = out.params[0].abs();
    let p = &out.params;
    let g0_eff = 1.0 - p[0] * p[0];
    let raw_idx = curve.bin_edges.windows(2).position(|e| e[0] <= 0.0 && 0.0 < e[1]);
    let (g0_raw, g0_raw_se) = match raw_idx {
        Some(i) => (curve.normalized[i], curve.std_errors()[i]),
        None => (f64::NAN, f64::NAN),
    };
    Ok(result(
        "g2",
        &out,
        vec![
            param("g2_0_effective", g0_eff, 2.0 * p[0] * se[0], ""),
            param("lambda_1", p[1] * 1e9, se[1] * 1e9, "1/s"),
            param("lambda_2", p[2] * 1e9, se[2] * 1e9, "1/s"),
            param("a", p[3], se[3], ""),
            param("rho", p[0], se[0], ""),
            param("g2_0_raw", g0_raw, g0_raw_se, ""),
        ],
    ))
}

/// Evaluates the fitted g2 model at `tau_ps`.
pub fn g2_model_eval(fit: &FitResult, tau_ps: f64) -> f64 {
    let p = [fit.value("rho"), fit.value("lambda_1") * 1e-9, fit.value("lambda_2") * 1e-9, fit.value("a")];
    G2FitModel.value(tau_ps * 1e-3, &p)
}

/// Maximum of the fitted g2 model over `|tau| <= window_ps`.
pub fn g2_model_max(fit: &FitResult, window_ps: f64) -> f64 {
    (0..=4000)
        .map(|i| g2_model_eval(fit, window_ps * (i as f64 / 4000.0).powi(3)))
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------- ODMR

/// `baseline * (1 - C * L(nu; nu0, delta_nu))`; parameters `[nu0, delta_nu, contrast, baseline]`.
#[derive(Debug, Clone, Copy)]
pub struct OdmrFitModel;

impl Model for OdmrFitModel {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let (nu0, width, c, b) = (p[0], p[1], p[2], p[3]);
        if !(width > 0.0) {
            return f64::NAN;
        }
        let d = x - nu0;
        let hw = 0.5 * width;
        let den = d * d + hw * hw;
        let l = lorentzian(x, nu0, width);
        let dl_dnu0 = 2.0 * d * hw * hw / (den * den);
        let dl_dw = hw * d * d / (den * den);
        g[0] = -b * c * dl_dnu0;
        g[1] = -b * c * dl_dw;
        g[2] = -b * l;
        g[3] = 1.0 - c * l;
        b * (1.0 - c * l)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OdmrInit {
    pub nu0: Option<f64>,
    pub delta_nu: Option<f64>,
    pub contrast: Option<f64>,
    pub baseline: Option<f64>,
}

/// Fits a Lorentzian dip; weights `1/rate` (shot noise) when rates are positive.
pub fn fit_odmr(spectrum: &OdmrSpectrum, init: OdmrInit) -> Result<FitResult, FitError> {
    let x = &spectrum.frequencies;
    let y = &spectrum.rates;
    if x.len() < 5 || x.len() != y.len() {
        return Err(FitError::TooFewPoints { needed: 5, got: x.len().min(y.len()) });
    }
    let w: Vec<f64> = if y.iter().all(|&r| r > 0.0) { y.iter().map(|r| 1.0 / r).collect() } else { vec![1.0; y.len()] };
    let base0 = init.baseline.unwrap_or_else(|| {
        let mut s = y.clone();
        s.sort_by(f64::total_cmp);
        let top = &s[s.len() * 3 / 4..];
        top.iter().sum::<f64>() / top.len() as f64
    });
    let (imin, &rmin) = y.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let nu0 = init.nu0.unwrap_or(x[imin]);
    let c0 = init.contrast.unwrap_or(if base0 > 0.0 { (1.0 - rmin / base0).max(0.0) } else { 0.0 });
    let half = base0 - 0.5 * (base0 - rmin);
    let below: Vec<f64> = x.iter().zip(y).filter(|(_, &r)| r <= half).map(|(&f, _)| f).collect();
    let step = x.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
    let grid_span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    let width_guess = match (below.first(), below.last()) {
        (Some(a), Some(b)) if b > a => b - a + step,
        _ => (grid_span / 10.0).max(step),
    };
    let width0 = init.delta_nu.unwrap_or(width_guess);
    let names = ["nu0", "delta_nu", "contrast", "baseline"];
    let out = run(&OdmrFitModel, x, y, &w, &[nu0, width0, c0, base0], &names)?;
    let se = stderrs(&out, 4);
    let p = &out.params;
    Ok(result(
        "odmr",
        &out,
        vec![
            param("nu0", p[0], se[0], "MHz"),
            param("delta_nu", p[1].abs(), se[1], "MHz"),
            param("contrast", p[2], se[2], ""),
            param("baseline_rate", p[3], se[3], "cts/s"),
        ],
    ))
}
