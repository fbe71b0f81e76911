//! Exact stochastic simulation of the three-level emitter and the detection chain.
//!
//! The emitter trajectory is generated event by event: the waiting time in
//! the current level is exponential in that level's total out-rate and the
//! transition is chosen in proportion to the individual rates. No time
//! step is involved. Radiative events become photons, which a Hanbury
//! Brown-Twiss beamsplitter routes to one of two detectors; each detector
//! thins by efficiency, adds Gaussian timing jitter, superposes Poissonian
//! dark and background counts and enforces a non-paralyzable dead time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photophysics::{steady_state, LevelSystem, PhotophysicsError, EXCITED, GROUND, METASTABLE};
use crate::stream::PhotonStream;

/// Largest duration whose picosecond timestamps are exact in `f64`.
pub const MAX_DURATION_PS: u64 = 1 << 53;

const PS_PER_S: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Photophysics(#[from] PhotophysicsError),
    #[error("duration {0} ps must be in (0, 2^53]")]
    InvalidDuration(u64),
    #[error("splitter ratio {0} must lie in (0, 1)")]
    InvalidSplitter(f64),
    #[error("invalid detector: {0}")]
    InvalidDetector(String),
    #[error("invalid pulse train: {0}")]
    InvalidPulseTrain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Detection probability per photon.
    pub efficiency: f64,
    /// Dark counts, Hz.
    #[serde(default)]
    pub dark_rate: f64,
    /// Dead time after each registered count, ps.
    #[serde(default)]
    pub dead_time: u64,
    /// Gaussian timing jitter standard deviation, ps.
    #[serde(default)]
    pub irf_sigma: f64,
    /// Uncorrelated signal-like counts, Hz.
    #[serde(default)]
    pub background_rate: f64,
}

impl DetectorModel {
    /// Unit efficiency, no noise, no jitter, no dead time.
    pub fn ideal() -> Self {
        Self { efficiency: 1.0, dark_rate: 0.0, dead_time: 0, irf_sigma: 0.0, background_rate: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(SimError::InvalidDetector(format!("efficiency {} outside [0, 1]", self.efficiency)));
        }
        for (name, v) in [
            ("dark_rate", self.dark_rate),
            ("irf_sigma", self.irf_sigma),
            ("background_rate", self.background_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidDetector(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Mean registered count rate for an incident photon rate, ignoring dead time.
    pub fn expected_rate(&self, photon_rate: f64) -> f64 {
        self.efficiency * photon_rate + self.dark_rate + self.background_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseTrain {
    /// Repetition period, ps.
    pub period: u64,
    /// Width of the window in which the excitation instant falls, ps (0 = delta pulse).
    #[serde(default)]
    pub pulse_width: u64,
    pub pulses: u64,
    /// Probability that a pulse promotes a ground-state emitter to the excited state.
    pub p_exc: f64,
}

impl PulseTrain {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.period == 0 || self.period <= self.pulse_width {
            return Err(SimError::InvalidPulseTrain(format!(
                "period {} must exceed pulse width {}",
                self.period, self.pulse_width
            )));
        }
        if !(0.0..=1.0).contains(&self.p_exc) {
            return Err(SimError::InvalidPulseTrain(format!("p_exc {} outside [0, 1]", self.p_exc)));
        }
        Ok(())
    }

    pub fn duration(&self) -> Result<u64, SimError> {
        match self.period.checked_mul(self.pulses) {
            Some(d) if d > 0 && d <= MAX_DURATION_PS => Ok(d),
            Some(d) => Err(SimError::InvalidDuration(d)),
            None => Err(SimError::InvalidDuration(u64::MAX)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    Pump,
    Radiative,
    Nonradiative,
    Shelve,
    Deshelve,
}

impl Transition {
    pub fn endpoints(self) -> (usize, usize) {
        match self {
            Transition::Pump => (GROUND, EXCITED),
            Transition::Radiative | Transition::Nonradiative => (EXCITED, GROUND),
            Transition::Shelve => (EXCITED, METASTABLE),
            Transition::Deshelve => (METASTABLE, GROUND),
        }
    }
}

/// One jump of the raw (pre-detector) trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// Time of the jump, ps.
    pub time: f64,
    pub transition: Transition,
}

/// Rates in 1/ps, split per level.
#[derive(Debug, Clone, Copy)]
struct LevelRates {
    pump: f64,
    radiative: f64,
    nonradiative: f64,
    shelve: f64,
    deshelve: f64,
}

impl LevelRates {
    fn new(sys: &LevelSystem) -> Self {
        let s = 1.0 / PS_PER_S;
        Self {
            pump: sys.k_pump * s,
            radiative: sys.gamma_r * s,
            nonradiative: sys.gamma_nr * s,
            shelve: sys.k_isc * s,
            deshelve: sys.k_d * s,
        }
    }

    fn out_rate(&self, level: usize) -> f64 {
        match level {
            GROUND => self.pump,
            EXCITED => self.radiative + self.nonradiative + self.shelve,
            _ => self.deshelve,
        }
    }

    fn pick<R: Rng>(&self, level: usize, rng: &mut R) -> Transition {
        match level {
            GROUND => Transition::Pump,
            EXCITED => {
                let u = rng.random::<f64>() * self.out_rate(EXCITED);
                if u < self.radiative {
                    Transition::Radiative
                } else if u < self.radiative + self.nonradiative {
                    Transition::Nonradiative
                } else {
                    Transition::Shelve
                }
            }
            _ => Transition::Deshelve,
        }
    }
}

/// Event-driven trajectory of a continuously pumped emitter.
///
/// Iteration ends only when the current level has no way out.
pub struct JumpProcess<'a, R: Rng> {
    rates: LevelRates,
    level: usize,
    time: f64,
    rng: &'a mut R,
}

impl<'a, R: Rng> JumpProcess<'a, R> {
    pub fn new(sys: &LevelSystem, initial_level: usize, start_ps: f64, rng: &'a mut R) -> Self {
        Self { rates: LevelRates::new(sys), level: initial_level, time: start_ps, rng }
    }

    pub fn level(&self) -> usize {
        self.level
    }
}

impl<R: Rng> Iterator for JumpProcess<'_, R> {
    type Item = Jump;

    fn next(&mut self) -> Option<Jump> {
        let out = self.rates.out_rate(self.level);
        if out <= 0.0 {
            return None;
        }
        let wait: f64 = self.rng.sample(Exp1);
        self.time += wait / out;
        let transition = self.rates.pick(self.level, self.rng);
        self.level = transition.endpoints().1;
        Some(Jump { time: self.time, transition })
    }
}

fn sample_level<R: Rng>(sys: &LevelSystem, rng: &mut R) -> Result<usize, PhotophysicsError> {
    let p = steady_state(sys)?;
    let u: f64 = rng.random();
    Ok(if u < p.p_g {
        GROUND
    } else if u < p.p_g + p.p_e {
        EXCITED
    } else {
        METASTABLE
    })
}

fn check_duration(duration: u64) -> Result<(), SimError> {
    if duration == 0 || duration > MAX_DURATION_PS {
        return Err(SimError::InvalidDuration(duration));
    }
    Ok(())
}

/// Applies efficiency thinning and jitter to one photon; `None` if lost.
fn detect<R: Rng>(t: f64, det: &DetectorModel, duration: u64, rng: &mut R) -> Option<u64> {
    if det.efficiency < 1.0 && rng.random::<f64>() >= det.efficiency {
        return None;
    }
    let t = if det.irf_sigma > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        t + det.irf_sigma * z
    } else {
        t
    };
    let t = t.round();
    (t >= 0.0 && t < duration as f64).then_some(t as u64)
}

/// Adds dark and background counts, sorts, and enforces the dead time.
fn finish_channel<R: Rng>(
    mut counts: Vec<u64>,
    channel: u8,
    duration: u64,
    det: &DetectorModel,
    rng: &mut R,
) -> PhotonStream {
    let noise_rate = (det.dark_rate + det.background_rate) / PS_PER_S;
    if noise_rate > 0.0 {
        let mut t = 0.0;
        loop {
            let wait: f64 = rng.sample(Exp1);
            t += wait / noise_rate;
            if t >= duration as f64 {
                break;
            }
            counts.push(t as u64);
        }
    }
    counts.sort_unstable();
    let gap = det.dead_time.max(1);
    let mut kept = Vec::with_capacity(counts.len());
    let mut last: Option<u64> = None;
    for t in counts {
        if last.is_none_or(|l| t - l >= gap) {
            kept.push(t);
            last = Some(t);
        }
    }
    PhotonStream::from_sorted_unchecked(channel, kept, duration)
}

/// Continuous-wave HBT acquisition; returns the streams of detectors 0 and 1.
///
/// `splitter` is the probability that a photon is routed to detector 0.
pub fn simulate_cw(
    sys: &LevelSystem,
    duration: u64,
    det: &DetectorModel,
    seed: RngSeed,
    splitter: f64,
) -> Result<(PhotonStream, PhotonStream), SimError> {
    check_duration(duration)?;
    if !(splitter > 0.0 && splitter < 1.0) {
        return Err(SimError::InvalidSplitter(splitter));
    }
    det.validate()?;
    let mut rng = seed.rng();
    let initial = sample_level(sys, &mut rng)?;

    let end = duration as f64;
    let mut raw: Vec<f64> = Vec::new();
    {
        let process = JumpProcess::new(sys, initial, 0.0, &mut rng);
        for jump in process {
            if jump.time >= end {
                break;
            }
            if jump.transition == Transition::Radiative {
                raw.push(jump.time);
            }
        }
    }
    let mut ch0 = Vec::with_capacity(raw.len() / 2);
    let mut ch1 = Vec::with_capacity(raw.len() / 2);
    for t in raw {
        let to_zero = rng.random::<f64>() < splitter;
        if let Some(ts) = detect(t, det, duration, &mut rng) {
            if to_zero { ch0.push(ts) } else { ch1.push(ts) }
        }
    }
    let a = finish_channel(ch0, 0, duration, det, &mut rng);
    let b = finish_channel(ch1, 1, duration, det, &mut rng);
    Ok((a, b))
}

/// Pulsed (TCSPC) acquisition on a single detector.
///
/// Between pulses the emitter evolves without pumping. At each pulse, an
/// emitter found in the ground level is promoted with probability `p_exc`
/// at an instant drawn uniformly within the pulse width.
pub fn simulate_pulsed(
    sys: &LevelSystem,
    train: &PulseTrain,
    det: &DetectorModel,
    seed: RngSeed,
) -> Result<PhotonStream, SimError> {
    train.validate()?;
    det.validate()?;
    sys.validate()?;
    let duration = train.duration()?;
    // The unpumped dynamics must relax back to ground for every pulse to count.
    if sys.k_isc > 0.0 && sys.k_d == 0.0 {
        return Err(PhotophysicsError::AbsorbingState("metastable state has no deshelving (k_isc > 0, k_d = 0)").into());
    }
    let rates = LevelRates { pump: 0.0, ..LevelRates::new(sys) };
    let mut rng = seed.rng();
    let mut level = GROUND;
    let mut time = 0.0_f64;
    let mut photons = Vec::new();

    let evolve_until = |level: &mut usize, time: &mut f64, until: f64, rng: &mut ChaCha8Rng, photons: &mut Vec<f64>| loop {
        let out = rates.out_rate(*level);
        if out <= 0.0 {
            *time = until;
            return;
        }
        let wait: f64 = rng.sample(Exp1);
        let next = *time + wait / out;
        if next >= until {
            *time = until;
            return;
        }
        *time = next;
        let tr = rates.pick(*level, rng);
        if tr == Transition::Radiative {
            photons.push(next);
        }
        *level = tr.endpoints().1;
    };

    for k in 0..train.pulses {
        let onset = (k * train.period) as f64
            + if train.pulse_width > 0 { rng.random::<f64>() * train.pulse_width as f64 } else { 0.0 };
        evolve_until(&mut level, &mut time, onset, &mut rng, &mut photons);
        if level == GROUND && train.p_exc > 0.0 && rng.random::<f64>() < train.p_exc {
            level = EXCITED;
        }
    }
    evolve_until(&mut level, &mut time, duration as f64, &mut rng, &mut photons);

    let detected: Vec<u64> = photons.into_iter().filter_map(|t| detect(t, det, duration, &mut rng)).collect();
    Ok(finish_channel(detected, 0, duration, det, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emitter() -> LevelSystem {
        LevelSystem { k_pump: 5e7, gamma_r: 3.45e8, gamma_nr: 1e7, k_isc: 5e6, k_d: 2e6 }
    }

    #[test]
    fn dark_emitter_gives_empty_streams() {
        let sys = LevelSystem { gamma_r: 0.0, gamma_nr: 1e8, ..emitter() };
        let (a, b) = simulate_cw(&sys, 1_000_000_000, &DetectorModel::ideal(), RngSeed(1), 0.5).unwrap();
        assert!(a.is_empty() && b.is_empty());
        assert_eq!(a.duration(), 1_000_000_000);
    }

    #[test]
    fn same_seed_same_streams() {
        let det = DetectorModel { efficiency: 0.3, dark_rate: 1e3, dead_time: 100, irf_sigma: 40.0, background_rate: 1e4 };
        let run = |seed| simulate_cw(&emitter(), 100_000_000_000, &det, RngSeed(seed), 0.5).unwrap();
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn dead_time_is_enforced() {
        let det = DetectorModel { dead_time: 5_000, ..DetectorModel::ideal() };
        let (a, b) = simulate_cw(&emitter().with_pump(1e9), 50_000_000_000, &det, RngSeed(3), 0.5).unwrap();
        for s in [&a, &b] {
            assert!(!s.is_empty());
            assert!(s.timestamps().windows(2).all(|w| w[1] - w[0] >= 5_000));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let det = DetectorModel::ideal();
        assert!(matches!(simulate_cw(&emitter(), 0, &det, RngSeed(0), 0.5), Err(SimError::InvalidDuration(0))));
        assert!(matches!(
            simulate_cw(&emitter(), MAX_DURATION_PS + 1, &det, RngSeed(0), 0.5),
            Err(SimError::InvalidDuration(_))
        ));
        assert!(matches!(simulate_cw(&emitter(), 10, &det, RngSeed(0), 1.0), Err(SimError::InvalidSplitter(_))));
        let absorbing = LevelSystem { k_d: 0.0, ..emitter() };
        assert!(matches!(
            simulate_cw(&absorbing, 10, &det, RngSeed(0), 0.5),
            Err(SimError::Photophysics(PhotophysicsError::AbsorbingState(_)))
        ));
        let train = PulseTrain { period: 100, pulse_width: 100, pulses: 10, p_exc: 0.5 };
        assert!(matches!(simulate_pulsed(&emitter(), &train, &det, RngSeed(0)), Err(SimError::InvalidPulseTrain(_))));
        let train = PulseTrain { period: u64::MAX, pulse_width: 0, pulses: 2, p_exc: 0.5 };
        assert!(matches!(simulate_pulsed(&emitter(), &train, &det, RngSeed(0)), Err(SimError::InvalidDuration(_))));
    }

    #[test]
    fn no_excitation_leaves_only_dark_counts() {
        let train = PulseTrain { period: 50_000, pulse_width: 0, pulses: 100_000, p_exc: 0.0 };
        let det = DetectorModel { dark_rate: 1e4, ..DetectorModel::ideal() };
        let s = simulate_pulsed(&emitter(), &train, &det, RngSeed(11)).unwrap();
        let expected = 1e4 * 5e-3;
        assert!((s.len() as f64 - expected).abs() < 5.0 * expected.sqrt(), "{}", s.len());
        let quiet = simulate_pulsed(&emitter(), &train, &DetectorModel::ideal(), RngSeed(11)).unwrap();
        assert!(quiet.is_empty());
    }

    #[test]
    fn jump_process_follows_transition_topology() {
        let mut rng = RngSeed(5).rng();
        let mut level = GROUND;
        for jump in JumpProcess::new(&emitter(), GROUND, 0.0, &mut rng).take(10_000) {
            let (from, to) = jump.transition.endpoints();
            assert_eq!(from, level);
            level = to;
        }
    }
}
