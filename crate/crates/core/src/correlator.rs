//! Coincidence histograms: cross-correlation g2(tau) between two detectors
//! and TCSPC delay histograms for pulsed acquisitions.
//!
//! Both streams are sorted, so all pairs within the correlation window are
//! found by a single merge-style sweep: a lower pointer into `b` only ever
//! moves forward, which keeps the cost at O(N + M + C) for C coincidences.
//!
//! Lags are integer picoseconds. Every bin is an explicit, contiguous range
//! of integer lags and the binning is mirror-symmetric about zero, so
//! swapping the two inputs mirrors the histogram exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::PulseTrain;
use crate::stream::PhotonStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelatorError {
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("input {which} not strictly increasing at index {index}")]
    Unsorted { which: char, index: usize },
    #[error("bin width {bin_width} ps must be below the pulse period {period} ps")]
    BinWiderThanPeriod { bin_width: u64, period: u64 },
    #[error("malformed {format} input: {msg}")]
    Parse { format: &'static str, msg: String },
}

/// How coincidence lags are grouped into bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binning {
    /// Width-`width` bins centred on multiples of `width`, covering `|tau| <= window`.
    Uniform { width: u64, window: u64 },
    /// A central bin `|tau| < edges[0]`, then `[edges[i], edges[i+1])` and its mirror image.
    Log { edges: Vec<u64> },
}

impl Binning {
    pub fn uniform(width: u64, window: u64) -> Result<Self, CorrelatorError> {
        if width == 0 || window <= width {
            return Err(CorrelatorError::InvalidBinning(format!(
                "need window > bin_width > 0 (window {window}, bin_width {width})"
            )));
        }
        Ok(Binning::Uniform { width, window })
    }

    /// Roughly `per_decade` log-spaced bins from `first_edge` out to `window`.
    ///
    /// Edges are rounded to integer picoseconds and deduplicated.
    pub fn log(first_edge: u64, window: u64, per_decade: u32) -> Result<Self, CorrelatorError> {
        if first_edge == 0 || window < first_edge || per_decade == 0 {
            return Err(CorrelatorError::InvalidBinning(format!(
                "need window >= first_edge > 0 and per_decade > 0 (first_edge {first_edge}, window {window})"
            )));
        }
        let ratio = 10f64.powf(1.0 / per_decade as f64);
        let mut edges = vec![first_edge];
        let mut x = first_edge as f64;
        while *edges.last().unwrap() <= window {
            x *= ratio;
            let e = (x.round() as u64).max(edges.last().unwrap() + 1);
            edges.push(e.min(window + 1));
            if e > window {
                break;
            }
        }
        Self::from_edges(edges)
    }

    pub fn from_edges(edges: Vec<u64>) -> Result<Self, CorrelatorError> {
        if edges.len() < 2 || edges[0] == 0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CorrelatorError::InvalidBinning(
                "log edges must be positive, strictly increasing, at least two".into(),
            ));
        }
        Ok(Binning::Log { edges })
    }

    /// Bins on each side of zero.
    fn half_bins(&self) -> usize {
        match self {
            Binning::Uniform { width, window } => ((2 * window + width) / (2 * width)) as usize,
            Binning::Log { edges } => edges.len() - 1,
        }
    }

    pub fn bins(&self) -> usize {
        2 * self.half_bins() + 1
    }

    /// Largest `|tau|` that is counted.
    pub fn window(&self) -> u64 {
        match self {
            Binning::Uniform { window, .. } => *window,
            Binning::Log { edges } => edges[edges.len() - 1] - 1,
        }
    }

    /// Magnitude index: 0 is the central bin.
    #[inline]
    fn magnitude_index(&self, abs_tau: u64) -> usize {
        match self {
            Binning::Uniform { width, .. } => ((2 * abs_tau + width) / (2 * width)) as usize,
            Binning::Log { edges } => edges.partition_point(|&e| e <= abs_tau),
        }
    }

    /// Bin index for a lag, or `None` outside the window.
    #[inline]
    pub fn bin_of(&self, tau: i64) -> Option<usize> {
        let abs = tau.unsigned_abs();
        if abs > self.window() {
            return None;
        }
        let half = self.half_bins();
        let m = self.magnitude_index(abs);
        Some(if tau >= 0 { half + m } else { half - m })
    }

    /// Inclusive integer lag range `(lo, hi)` of magnitude bin `m >= 1` on the positive side.
    fn positive_range(&self, m: usize) -> (u64, u64) {
        let window = self.window();
        match self {
            Binning::Uniform { width, .. } => {
                let m = m as u64;
                let lo = ((2 * m - 1) * width).div_ceil(2);
                let hi = ((2 * m + 1) * width).div_ceil(2) - 1;
                (lo, hi.min(window))
            }
            Binning::Log { edges } => (edges[m - 1], (edges[m] - 1).min(window)),
        }
    }

    fn central_half_width(&self) -> u64 {
        match self {
            Binning::Uniform { width, .. } => width.div_ceil(2) - 1,
            Binning::Log { edges } => edges[0] - 1,
        }
    }

    /// Inclusive signed lag range of bin `index`.
    pub fn lag_range(&self, index: usize) -> (i64, i64) {
        let half = self.half_bins();
        if index == half {
            let c = self.central_half_width() as i64;
            return (-c, c);
        }
        if index > half {
            let (lo, hi) = self.positive_range(index - half);
            (lo as i64, hi as i64)
        } else {
            let (lo, hi) = self.positive_range(half - index);
            (-(hi as i64), -(lo as i64))
        }
    }
}

/// Correlation histogram with its normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    /// Bin boundaries in ps (half-integers; bins tile the integer lags).
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub normalized: Vec<f64>,
    /// `r_a * r_b * T`: expected coincidences per ps of lag at zero delay for uncorrelated inputs.
    pub total_pairs_norm: f64,
    /// Expected coincidences per bin for uncorrelated inputs, including the finite-span correction.
    pub denominators: Vec<f64>,
    pub rate_a_hz: f64,
    pub rate_b_hz: f64,
    /// Overlapping acquisition span, ps.
    pub span_ps: u64,
    pub binning: Option<Binning>,
}

impl G2Curve {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// True when either input was empty, so no normalization exists.
    pub fn zero_denominator(&self) -> bool {
        self.total_pairs_norm == 0.0
    }

    /// Poisson standard error of each normalized bin.
    pub fn std_errors(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.denominators)
            .map(|(&c, &d)| if d > 0.0 { (c.max(1) as f64).sqrt() / d } else { f64::INFINITY })
            .collect()
    }

    /// Normalized value of the bin containing zero lag, if any.
    pub fn value_at_zero(&self) -> Option<f64> {
        self.bin_edges
            .windows(2)
            .position(|w| w[0] <= 0.0 && 0.0 < w[1])
            .map(|i| self.normalized[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau_lo_ps,tau_hi_ps,counts,g2,expected\n");
        for (k, w) in self.bin_edges.windows(2).enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                w[0], w[1], self.counts[k], self.normalized[k], self.denominators[k]
            ));
        }
        s
    }

    /// Reads the CSV export. Rates, span and binning are not recoverable from it.
    pub fn from_csv(text: &str) -> Result<Self, CorrelatorError> {
        let rows = parse_csv_rows(text, "g2 csv", 5)?;
        let bin_edges = edges_from_rows(&rows, "g2 csv")?;
        let counts = counts_from_rows(&rows, 2, "g2 csv")?;
        Ok(Self {
            bin_edges,
            counts,
            normalized: rows.iter().map(|r| r[3]).collect(),
            total_pairs_norm: f64::NAN,
            denominators: rows.iter().map(|r| r[4].max(0.0)).collect(),
            rate_a_hz: f64::NAN,
            rate_b_hz: f64::NAN,
            span_ps: 0,
            binning: None,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CorrelatorError> {
        let curve: Self = serde_json::from_str(text)
            .map_err(|e| CorrelatorError::Parse { format: "g2 json", msg: e.to_string() })?;
        let n = curve.counts.len();
        if curve.bin_edges.len() != n + 1 || curve.normalized.len() != n || curve.denominators.len() != n {
            return Err(CorrelatorError::Parse { format: "g2 json", msg: "inconsistent array lengths".into() });
        }
        Ok(curve)
    }
}

pub(crate) fn parse_csv_rows(text: &str, format: &'static str, cols: usize) -> Result<Vec<Vec<f64>>, CorrelatorError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols {
            return Err(CorrelatorError::Parse { format, msg: format!("line {}: expected {cols} fields", i + 1) });
        }
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.iter().all(|x| x.is_finite()) => rows.push(v),
            // header line
            Err(_) if rows.is_empty() && i == 0 => continue,
            _ => return Err(CorrelatorError::Parse { format, msg: format!("line {}: not numeric", i + 1) }),
        }
    }
    Ok(rows)
}

fn edges_from_rows(rows: &[Vec<f64>], format: &'static str) -> Result<Vec<f64>, CorrelatorError> {
    if rows.is_empty() {
        return Err(CorrelatorError::Parse { format, msg: "no data rows".into() });
    }
    let mut edges = vec![rows[0][0]];
    for r in rows {
        if !(r[1] > r[0]) || r[0] != *edges.last().unwrap() {
            return Err(CorrelatorError::Parse { format, msg: "bins must be contiguous and increasing".into() });
        }
        edges.push(r[1]);
    }
    Ok(edges)
}

fn counts_from_rows(rows: &[Vec<f64>], col: usize, format: &'static str) -> Result<Vec<u64>, CorrelatorError> {
    rows.iter()
        .map(|r| {
            let c = r[col];
            if c >= 0.0 && c.fract() == 0.0 && c < 2f64.powi(63) {
                Ok(c as u64)
            } else {
                Err(CorrelatorError::Parse { format, msg: format!("bad count {c}") })
            }
        })
        .collect()
}

fn check_sorted(ts: &[u64], which: char) -> Result<(), CorrelatorError> {
    match ts.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(CorrelatorError::Unsorted { which, index: i + 1 }),
        None => Ok(()),
    }
}

/// Expected uncorrelated coincidences in a bin: `N_a N_b sum_{tau in bin}(T - |tau|) / T^2`.
///
/// `lag_weight` is that sum, computed exactly in integers.
pub fn pair_expectation(n_a: u64, n_b: u64, span: u64, lag_weight: u128) -> f64 {
    if span == 0 {
        return 0.0;
    }
    let t = span as f64;
    (n_a as f64) * (n_b as f64) * (lag_weight as f64) / (t * t)
}

/// `sum (T - |tau|)` over the inclusive lag range, clipped at zero.
#[cfg(test)]
fn lag_weight(lo: i64, hi: i64, span: u64) -> u128 {
    let span = span as i128;
    (lo..=hi)
        .map(|tau| (span - (tau as i128).abs()).max(0) as u128)
        .sum::<u128>()
}

fn lag_weight_closed(lo: i64, hi: i64, span: u64) -> u128 {
    // sum over a lag range of (T - |tau|), exact; split at zero.
    let t = span as i128;
    let seg = |a: i128, b: i128| -> i128 {
        // sum_{x=a}^{b} (T - x) for 0 <= a <= b, clipped where x >= T
        let b = b.min(t - 1);
        if b < a {
            return 0;
        }
        let n = b - a + 1;
        n * t - (a + b) * n / 2
    };
    let (lo, hi) = (lo as i128, hi as i128);
    let total = if lo >= 0 {
        seg(lo, hi)
    } else if hi <= 0 {
        seg(-hi, -lo)
    } else {
        seg(0, hi) + seg(1, -lo)
    };
    total as u128
}

/// Counts only; shared by the serial and chunked sweeps.
fn sweep_counts(a: &[u64], b: &[u64], binning: &Binning, counts: &mut [u64]) {
    let (Some(&first), Some(&last)) = (b.first(), b.last()) else {
        return;
    };
    let span = (last - first).max(1) as f64;
    let pairs_per_event = b.len() as f64 * 2.0 * binning.window() as f64 / span;
    if pairs_per_event > 2.0 * (binning.bins() + 1) as f64 {
        sweep_boundaries(a, b, binning, counts);
    } else {
        sweep_pairs(a, b, binning, counts);
    }
}

/// One cursor per bin boundary; each advances monotonically through `b`.
fn sweep_boundaries(a: &[u64], b: &[u64], binning: &Binning, counts: &mut [u64]) {
    let bins = binning.bins();
    let mut lower: Vec<i64> = (0..bins).map(|k| binning.lag_range(k).0).collect();
    lower.push(binning.lag_range(bins - 1).1 + 1);
    let mut cursor = vec![0usize; bins + 1];
    for &ta in a {
        let ta = ta as i64;
        for (c, &lo) in cursor.iter_mut().zip(&lower) {
            let edge = ta + lo;
            while *c < b.len() && (b[*c] as i64) < edge {
                *c += 1;
            }
        }
        for (k, n) in counts.iter_mut().enumerate() {
            *n += (cursor[k + 1] - cursor[k]) as u64;
        }
    }
}

fn sweep_pairs(a: &[u64], b: &[u64], binning: &Binning, counts: &mut [u64]) {
    let window = binning.window();
    let mut start = match a.first() {
        Some(&t0) => b.partition_point(|&tb| tb.saturating_add(window) < t0),
        None => return,
    };
    for &ta in a {
        while start < b.len() && b[start].saturating_add(window) < ta {
            start += 1;
        }
        let limit = ta.saturating_add(window);
        for &tb in &b[start..] {
            if tb > limit {
                break;
            }
            let tau = tb as i64 - ta as i64;
            if let Some(k) = binning.bin_of(tau) {
                counts[k] += 1;
            }
        }
    }
}

fn overlap<'a>(a: &'a PhotonStream, b: &'a PhotonStream) -> (&'a [u64], &'a [u64], u64) {
    let span = a.duration().min(b.duration());
    let ta = &a.timestamps()[..a.timestamps().partition_point(|&t| t < span)];
    let tb = &b.timestamps()[..b.timestamps().partition_point(|&t| t < span)];
    (ta, tb, span)
}

fn assemble(counts: Vec<u64>, n_a: u64, n_b: u64, span: u64, binning: &Binning) -> G2Curve {
    let bins = binning.bins();
    let mut bin_edges = Vec::with_capacity(bins + 1);
    let mut denominators = Vec::with_capacity(bins);
    for k in 0..bins {
        let (lo, hi) = binning.lag_range(k);
        if k == 0 {
            bin_edges.push(lo as f64 - 0.5);
        }
        bin_edges.push(hi as f64 + 0.5);
        denominators.push(pair_expectation(n_a, n_b, span, lag_weight_closed(lo, hi, span)));
    }
    let normalized = counts
        .iter()
        .zip(&denominators)
        .map(|(&c, &d)| if d > 0.0 { c as f64 / d } else { 0.0 })
        .collect();
    let secs = span as f64 * 1e-12;
    let (rate_a_hz, rate_b_hz) = if span > 0 { (n_a as f64 / secs, n_b as f64 / secs) } else { (0.0, 0.0) };
    let total_pairs_norm = if span > 0 { (n_a as f64) * (n_b as f64) / span as f64 } else { 0.0 };
    G2Curve {
        bin_edges,
        counts,
        normalized,
        total_pairs_norm,
        denominators,
        rate_a_hz,
        rate_b_hz,
        span_ps: span,
        binning: Some(binning.clone()),
    }
}

/// Full cross-correlation of two raw sorted timestamp lists over `[0, span)`.
pub fn cross_correlate_timestamps(
    a: &[u64],
    b: &[u64],
    span: u64,
    binning: &Binning,
) -> Result<G2Curve, CorrelatorError> {
    check_sorted(a, 'a')?;
    check_sorted(b, 'b')?;
    let a = &a[..a.partition_point(|&t| t < span)];
    let b = &b[..b.partition_point(|&t| t < span)];
    let mut counts = vec![0u64; binning.bins()];
    sweep_counts(a, b, binning, &mut counts);
    Ok(assemble(counts, a.len() as u64, b.len() as u64, span, binning))
}

/// Uniform-bin cross-correlation of detector `a` against detector `b` (`tau = t_b - t_a`).
pub fn cross_correlate(
    a: &PhotonStream,
    b: &PhotonStream,
    window: u64,
    bin_width: u64,
) -> Result<G2Curve, CorrelatorError> {
    cross_correlate_binned(a, b, &Binning::uniform(bin_width, window)?)
}

pub fn cross_correlate_binned(a: &PhotonStream, b: &PhotonStream, binning: &Binning) -> Result<G2Curve, CorrelatorError> {
    let (ta, tb, span) = overlap(a, b);
    let mut counts = vec![0u64; binning.bins()];
    sweep_counts(ta, tb, binning, &mut counts);
    Ok(assemble(counts, ta.len() as u64, tb.len() as u64, span, binning))
}

/// Same result as [`cross_correlate_binned`], with `a` split into `chunks` time-ordered pieces swept in parallel.
pub fn cross_correlate_parallel(
    a: &PhotonStream,
    b: &PhotonStream,
    binning: &Binning,
    chunks: usize,
) -> Result<G2Curve, CorrelatorError> {
    let (ta, tb, span) = overlap(a, b);
    let chunk_len = ta.len().div_ceil(chunks.max(1)).max(1);
    let bins = binning.bins();
    let counts = ta
        .par_chunks(chunk_len)
        .map(|piece| {
            let mut c = vec![0u64; bins];
            sweep_counts(piece, tb, binning, &mut c);
            c
        })
        .reduce(
            || vec![0u64; bins],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
                x
            },
        );
    Ok(assemble(counts, ta.len() as u64, tb.len() as u64, span, binning))
}

/// Photon delays folded onto one excitation period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayHistogram {
    /// Delay bin boundaries, ps; the last bin may be narrower than the others.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_pulses: u64,
}

impl DecayHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("delay_lo_ps,delay_hi_ps,counts\n");
        for (c, w) in self.counts.iter().zip(self.bin_edges.windows(2)) {
            s.push_str(&format!("{},{},{c}\n", w[0], w[1]));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, CorrelatorError> {
        let rows = parse_csv_rows(text, "decay csv", 3)?;
        Ok(Self {
            bin_edges: edges_from_rows(&rows, "decay csv")?,
            counts: counts_from_rows(&rows, 2, "decay csv")?,
            n_pulses: 0,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CorrelatorError> {
        let h: Self = serde_json::from_str(text)
            .map_err(|e| CorrelatorError::Parse { format: "decay json", msg: e.to_string() })?;
        if h.bin_edges.len() != h.counts.len() + 1 {
            return Err(CorrelatorError::Parse { format: "decay json", msg: "inconsistent array lengths".into() });
        }
        Ok(h)
    }
}

/// Folds each timestamp modulo the pulse period into `bin_width` ps delay bins.
pub fn decay_histogram(s: &PhotonStream, train: &PulseTrain, bin_width: u64) -> Result<DecayHistogram, CorrelatorError> {
    let period = train.period;
    if period == 0 || bin_width == 0 {
        return Err(CorrelatorError::InvalidBinning("period and bin width must be positive".into()));
    }
    if bin_width >= period {
        return Err(CorrelatorError::BinWiderThanPeriod { bin_width, period });
    }
    let bins = period.div_ceil(bin_width) as usize;
    let mut counts = vec![0u64; bins];
    for &t in s.timestamps() {
        counts[((t % period) / bin_width) as usize] += 1;
    }
    let bin_edges = (0..=bins).map(|i| ((i as u64 * bin_width).min(period)) as f64).collect();
    Ok(DecayHistogram { bin_edges, counts, n_pulses: train.pulses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(ts: Vec<u64>, duration: u64) -> PhotonStream {
        PhotonStream::new(0, ts, duration).unwrap()
    }

    #[test]
    fn coincident_pair_lands_in_zero_bin() {
        let a = stream(vec![1_000], 10_000);
        let b = stream(vec![1_000], 10_000);
        let c = cross_correlate(&a, &b, 500, 100).unwrap();
        let zero = c.bin_edges.windows(2).position(|w| w[0] <= 0.0 && 0.0 < w[1]).unwrap();
        assert_eq!(c.counts[zero], 1);
        assert_eq!(c.counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn empty_input_flags_zero_denominator() {
        let a = stream(vec![], 10_000);
        let b = stream(vec![5], 10_000);
        let c = cross_correlate(&a, &b, 500, 100).unwrap();
        assert!(c.zero_denominator());
        assert!(c.normalized.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_binning_rejected() {
        let a = stream(vec![1], 10);
        assert!(cross_correlate(&a, &a, 100, 100).is_err());
        assert!(cross_correlate(&a, &a, 100, 0).is_err());
        assert!(matches!(
            cross_correlate_timestamps(&[3, 2], &[1], 10, &Binning::uniform(1, 5).unwrap()),
            Err(CorrelatorError::Unsorted { which: 'a', index: 1 })
        ));
    }

    #[test]
    fn bins_tile_the_window() {
        for binning in [
            Binning::uniform(100, 1000).unwrap(),
            Binning::uniform(7, 50).unwrap(),
            Binning::uniform(2, 9).unwrap(),
            Binning::log(10, 100_000, 8).unwrap(),
        ] {
            let w = binning.window() as i64;
            let mut next = -w;
            for k in 0..binning.bins() {
                let (lo, hi) = binning.lag_range(k);
                assert_eq!(lo, next, "{binning:?} bin {k}");
                assert!(hi >= lo);
                for tau in [lo, hi] {
                    assert_eq!(binning.bin_of(tau), Some(k));
                }
                next = hi + 1;
            }
            assert_eq!(next, w + 1);
            assert_eq!(binning.bin_of(w + 1), None);
        }
    }

    #[test]
    fn closed_form_lag_weight() {
        for (lo, hi, span) in [(-5, 5, 100), (3, 9, 100), (-9, -3, 100), (-3, 120, 100), (0, 0, 1), (-200, 200, 50)] {
            assert_eq!(lag_weight_closed(lo, hi, span), lag_weight(lo, hi, span));
        }
    }

    #[test]
    fn decay_histogram_folds_by_period() {
        let train = PulseTrain { period: 1_000, pulse_width: 0, pulses: 3, p_exc: 1.0 };
        let s = stream(vec![1_010], 3_000);
        let h = decay_histogram(&s, &train, 10).unwrap();
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.bin_edges[1], 10.0);
        assert_eq!(h.total(), 1);
        assert!(matches!(
            decay_histogram(&s, &train, 1_000),
            Err(CorrelatorError::BinWiderThanPeriod { .. })
        ));
        // partial last bin
        let h = decay_histogram(&s, &PulseTrain { period: 1_005, ..train }, 10).unwrap();
        assert_eq!(h.bin_edges.last(), Some(&1005.0));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let a = stream(vec![10, 200, 450, 900], 1_000);
        let b = stream(vec![15, 230, 440, 905], 1_000);
        let c = cross_correlate(&a, &b, 100, 10).unwrap();
        let back = G2Curve::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back.counts, c.counts);
        assert_eq!(back.bin_edges, c.bin_edges);
        assert_eq!(back.normalized, c.normalized);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(G2Curve::from_json(&json).unwrap(), c);
    }

    fn arb_ts(max: u64) -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::btree_set(0..max, 0..300).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn mirror_symmetry(a in arb_ts(20_000), b in arb_ts(20_000), w in 1u64..300, per in 1u32..10, log in any::<bool>()) {
            let binning = if log { Binning::log(w, 2_000, per).unwrap() } else { Binning::uniform(w, 2_000).unwrap() };
            let sa = stream(a, 20_000);
            let sb = stream(b, 20_000);
            let ab = cross_correlate_binned(&sa, &sb, &binning).unwrap();
            let ba = cross_correlate_binned(&sb, &sa, &binning).unwrap();
            let rev: Vec<u64> = ba.counts.iter().rev().copied().collect();
            prop_assert_eq!(&ab.counts, &rev);
            let rev_norm: Vec<f64> = ba.normalized.iter().rev().copied().collect();
            prop_assert_eq!(ab.normalized, rev_norm);
        }

        #[test]
        fn shift_invariance(a in arb_ts(20_000), b in arb_ts(20_000), off in 0u64..1_000_000_000) {
            let binning = Binning::uniform(50, 1_000).unwrap();
            let base = cross_correlate_binned(&stream(a.clone(), 20_000), &stream(b.clone(), 20_000), &binning).unwrap();
            let sa = stream(a.iter().map(|t| t + off).collect(), 20_000 + off);
            let sb = stream(b.iter().map(|t| t + off).collect(), 20_000 + off);
            let shifted = cross_correlate_binned(&sa, &sb, &binning).unwrap();
            prop_assert_eq!(base.counts, shifted.counts);
        }

        #[test]
        fn sweep_strategies_agree(a in arb_ts(5_000), b in arb_ts(5_000), w in 1u64..200, per in 1u32..10, log in any::<bool>()) {
            let binning = if log { Binning::log(w, 3_000, per).unwrap() } else { Binning::uniform(w, 3_000).unwrap() };
            let mut by_pair = vec![0u64; binning.bins()];
            let mut by_edge = vec![0u64; binning.bins()];
            sweep_pairs(&a, &b, &binning, &mut by_pair);
            sweep_boundaries(&a, &b, &binning, &mut by_edge);
            prop_assert_eq!(by_pair, by_edge);
        }

        #[test]
        fn parallel_equals_serial(a in arb_ts(50_000), b in arb_ts(50_000), chunks in 1usize..9) {
            let binning = Binning::log(20, 5_000, 5).unwrap();
            let sa = stream(a, 50_000);
            let sb = stream(b, 50_000);
            prop_assert_eq!(
                cross_correlate_binned(&sa, &sb, &binning).unwrap(),
                cross_correlate_parallel(&sa, &sb, &binning, chunks).unwrap()
            );
        }
    }
}
