use proptest::prelude::*;

use spekit::correlator::{self, Binning};
use spekit::stream::PhotonStream;

fn brute(a: &[u64], b: &[u64], span: u64, binning: &Binning) -> Vec<u64> {
    let mut counts = vec![0; binning.bins()];
    for &ta in a.iter().filter(|&&t| t < span) {
        for &tb in b.iter().filter(|&&t| t < span) {
            if let Some(k) = binning.bin_of(tb as i64 - ta as i64) {
                counts[k] += 1;
            }
        }
    }
    counts
}

fn timestamps(max: u64, n: usize) -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::btree_set(0..max, 0..n).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn counts_match_double_loop(
        a in timestamps(200_000, 400),
        b in timestamps(200_000, 2_000),
        dur_a in 100_000u64..200_001,
        dur_b in 100_000u64..200_001,
        width in 1u64..2_000,
        window_bins in 2u64..60,
        log in any::<bool>(),
    ) {
        let window = width * window_bins;
        let binning = if log { Binning::log(width, window, 6).unwrap() } else { Binning::uniform(width, window).unwrap() };
        let sa = PhotonStream::new(0, a.iter().copied().filter(|&t| t < dur_a).collect(), dur_a).unwrap();
        let sb = PhotonStream::new(1, b.iter().copied().filter(|&t| t < dur_b).collect(), dur_b).unwrap();
        let span = dur_a.min(dur_b);
        let curve = correlator::cross_correlate_binned(&sa, &sb, &binning).unwrap();
        prop_assert_eq!(&curve.counts, &brute(sa.timestamps(), sb.timestamps(), span, &binning));
        prop_assert_eq!(curve.span_ps, span);
        prop_assert_eq!(&correlator::cross_correlate_parallel(&sa, &sb, &binning, 3).unwrap(), &curve);
    }
}
