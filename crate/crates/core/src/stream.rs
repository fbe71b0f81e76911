//! Photon timestamp streams and their on-disk formats.
//!
//! The binary `PTSM` layout is little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PTSM"
//!      4     2  version (u16, currently 1)
//!      6     1  channel (u8)
//!      7     1  reserved (written as 0, ignored on read)
//!      8     8  duration in ps (u64)
//!     16     8  record count (u64)
//!     24  8*n   timestamps in ps (u64), strictly increasing, < duration
//! ```
//!
//! The CSV form is one timestamp per line, optionally preceded by `#`
//! comment lines; `# channel=<c> duration_ps=<d>` is written on export.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PTSM_MAGIC: [u8; 4] = *b"PTSM";
pub const PTSM_VERSION: u16 = 1;
pub const PTSM_HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("timestamps not strictly increasing at index {index} ({prev} then {next})")]
    Unsorted { index: usize, prev: u64, next: u64 },
    #[error("timestamp {timestamp} at index {index} is not below duration {duration}")]
    BeyondDuration { index: usize, timestamp: u64, duration: u64 },
    #[error("bad magic {0:?}, expected \"PTSM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported PTSM version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sorted, channel-tagged photon arrival times in integer picoseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonStream {
    channel: u8,
    timestamps: Vec<u64>,
    duration: u64,
}

fn check_sorted(timestamps: &[u64], duration: u64) -> Result<(), StreamError> {
    for (i, w) in timestamps.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(StreamError::Unsorted { index: i + 1, prev: w[0], next: w[1] });
        }
    }
    if let Some(&last) = timestamps.last() {
        if last >= duration {
            return Err(StreamError::BeyondDuration {
                index: timestamps.len() - 1,
                timestamp: last,
                duration,
            });
        }
    }
    Ok(())
}

impl PhotonStream {
    pub fn new(channel: u8, timestamps: Vec<u64>, duration: u64) -> Result<Self, StreamError> {
        check_sorted(&timestamps, duration)?;
        Ok(Self { channel, timestamps, duration })
    }

    pub fn empty(channel: u8, duration: u64) -> Self {
        Self { channel, timestamps: Vec::new(), duration }
    }

    /// Caller guarantees the invariants; used by the simulator after it has sorted and deduplicated.
    pub(crate) fn from_sorted_unchecked(channel: u8, timestamps: Vec<u64>, duration: u64) -> Self {
        debug_assert!(check_sorted(&timestamps, duration).is_ok());
        Self { channel, timestamps, duration }
    }

    pub fn channel(&self) -> u8 {
        self.channel
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Mean count rate in counts per second.
    pub fn rate_hz(&self) -> f64 {
        if self.duration == 0 {
            0.0
        } else {
            self.timestamps.len() as f64 / (self.duration as f64 * 1e-12)
        }
    }

    /// Same events shifted by `offset` ps; duration grows by the same amount.
    pub fn shifted(&self, offset: u64) -> Self {
        Self {
            channel: self.channel,
            timestamps: self.timestamps.iter().map(|t| t + offset).collect(),
            duration: self.duration + offset,
        }
    }

    /// Concatenates consecutive acquisition segments of one channel.
    ///
    /// Each segment's timestamps are offset by the summed durations of the
    /// segments before it. Panics if channels differ.
    pub fn concat(segments: &[PhotonStream]) -> Self {
        let channel = segments.first().map_or(0, |s| s.channel);
        let mut timestamps = Vec::with_capacity(segments.iter().map(|s| s.len()).sum());
        let mut offset = 0u64;
        for seg in segments {
            assert_eq!(seg.channel, channel, "cannot concatenate different channels");
            timestamps.extend(seg.timestamps.iter().map(|t| t + offset));
            offset += seg.duration;
        }
        Self { channel, timestamps, duration: offset }
    }

    pub fn to_ptsm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PTSM_HEADER_LEN + 8 * self.timestamps.len());
        out.extend_from_slice(&PTSM_MAGIC);
        out.extend_from_slice(&PTSM_VERSION.to_le_bytes());
        out.push(self.channel);
        out.push(0);
        out.extend_from_slice(&self.duration.to_le_bytes());
        out.extend_from_slice(&(self.timestamps.len() as u64).to_le_bytes());
        for t in &self.timestamps {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_ptsm_bytes(bytes: &[u8]) -> Result<Self, StreamError> {
        if bytes.len() < PTSM_HEADER_LEN {
            return Err(StreamError::Truncated {
                needed: PTSM_HEADER_LEN as u64,
                available: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != PTSM_MAGIC {
            return Err(StreamError::BadMagic(magic));
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != PTSM_VERSION {
            return Err(StreamError::UnsupportedVersion(version));
        }
        let channel = bytes[6];
        let duration = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let body = &bytes[PTSM_HEADER_LEN..];
        let needed = count.saturating_mul(8);
        if (body.len() as u64) < needed {
            return Err(StreamError::Truncated {
                needed: needed.saturating_add(PTSM_HEADER_LEN as u64),
                available: bytes.len() as u64,
            });
        }
        if body.len() as u64 > needed {
            return Err(StreamError::TrailingBytes(body.len() - needed as usize));
        }
        let timestamps: Vec<u64> = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(channel, timestamps, duration)
    }

    pub fn write_ptsm<W: Write>(&self, mut w: W) -> Result<(), StreamError> {
        w.write_all(&self.to_ptsm_bytes())?;
        Ok(())
    }

    pub fn read_ptsm<R: Read>(mut r: R) -> Result<Self, StreamError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_ptsm_bytes(&bytes)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# channel={} duration_ps={}\n", self.channel, self.duration);
        for t in &self.timestamps {
            s.push_str(&t.to_string());
            s.push('\n');
        }
        s
    }

    /// Parses the CSV form. Without a `duration_ps` comment the duration is
    /// taken as one past the last timestamp.
    pub fn from_csv(text: &str) -> Result<Self, StreamError> {
        let mut channel = 0u8;
        let mut duration = None;
        let mut timestamps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                for token in comment.split_whitespace() {
                    let Some((key, value)) = token.split_once('=') else { continue };
                    let err = |msg: String| StreamError::Csv { line: i + 1, msg };
                    match key {
                        "channel" => channel = value.parse().map_err(|e| err(format!("channel: {e}")))?,
                        "duration_ps" => {
                            duration = Some(value.parse().map_err(|e| err(format!("duration_ps: {e}")))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let t: u64 = line.parse().map_err(|e| StreamError::Csv {
                line: i + 1,
                msg: format!("`{line}`: {e}"),
            })?;
            timestamps.push(t);
        }
        let duration = match duration {
            Some(d) => d,
            None => timestamps.last().map_or(0, |&t| t.saturating_add(1)),
        };
        Self::new(channel, timestamps, duration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let s = PhotonStream::new(3, vec![1, 5, 9], 10).unwrap();
        let b = s.to_ptsm_bytes();
        assert_eq!(&b[0..4], b"PTSM");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 3);
        assert_eq!(b[7], 0);
        assert_eq!(&b[8..16], &10u64.to_le_bytes());
        assert_eq!(&b[16..24], &3u64.to_le_bytes());
        assert_eq!(b.len(), 24 + 24);
        assert_eq!(&b[24..32], &1u64.to_le_bytes());
    }

    #[test]
    fn rejects_malformed_binary() {
        let good = PhotonStream::new(0, vec![1, 2], 3).unwrap().to_ptsm_bytes();
        assert!(matches!(PhotonStream::from_ptsm_bytes(&good[..10]), Err(StreamError::Truncated { .. })));
        assert!(matches!(PhotonStream::from_ptsm_bytes(&good[..30]), Err(StreamError::Truncated { .. })));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(PhotonStream::from_ptsm_bytes(&bad), Err(StreamError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(PhotonStream::from_ptsm_bytes(&bad), Err(StreamError::UnsupportedVersion(2))));
        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(PhotonStream::from_ptsm_bytes(&bad), Err(StreamError::TrailingBytes(1))));
        let mut bad = good.clone();
        bad[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(PhotonStream::from_ptsm_bytes(&bad), Err(StreamError::Truncated { .. })));
        let mut bad = good;
        bad[24..32].copy_from_slice(&7u64.to_le_bytes());
        assert!(matches!(PhotonStream::from_ptsm_bytes(&bad), Err(StreamError::Unsorted { .. })));
    }

    #[test]
    fn invariants_checked_on_construction() {
        assert!(matches!(PhotonStream::new(0, vec![2, 2], 5), Err(StreamError::Unsorted { index: 1, .. })));
        assert!(matches!(PhotonStream::new(0, vec![5], 5), Err(StreamError::BeyondDuration { .. })));
    }

    #[test]
    fn csv_without_header_infers_duration() {
        let s = PhotonStream::from_csv("10\n20\n\n35\n").unwrap();
        assert_eq!(s.timestamps(), &[10, 20, 35]);
        assert_eq!(s.duration(), 36);
        assert!(matches!(PhotonStream::from_csv("1\nx\n"), Err(StreamError::Csv { line: 2, .. })));
    }

    #[test]
    fn concat_offsets_segments() {
        let a = PhotonStream::new(1, vec![0, 5], 10).unwrap();
        let b = PhotonStream::new(1, vec![1], 4).unwrap();
        let c = PhotonStream::concat(&[a, b]);
        assert_eq!(c.timestamps(), &[0, 5, 11]);
        assert_eq!(c.duration(), 14);
    }

    fn arb_stream() -> impl Strategy<Value = PhotonStream> {
        (any::<u8>(), proptest::collection::btree_set(0u64..1_000_000_000, 0..200), 0u64..1000).prop_map(
            |(ch, set, pad)| {
                let ts: Vec<u64> = set.into_iter().collect();
                let duration = ts.last().map_or(pad, |&t| t + 1 + pad);
                PhotonStream::new(ch, ts, duration).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(s in arb_stream()) {
            prop_assert_eq!(PhotonStream::from_ptsm_bytes(&s.to_ptsm_bytes()).unwrap(), s.clone());
            prop_assert_eq!(PhotonStream::from_csv(&s.to_csv()).unwrap(), s);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            let _ = PhotonStream::from_ptsm_bytes(&bytes);
        }
    }
}
