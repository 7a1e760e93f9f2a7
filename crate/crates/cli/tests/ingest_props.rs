//! Ingestion is lossless for integer counts.

use cleam::Observations;
use cleam_cli::ingest::{ingest_labels, write_labels};
use proptest::prelude::*;

fn batches() -> impl Strategy<Value = (u64, Vec<Vec<u64>>)> {
    (2usize..5, 1u64..500, 1usize..12).prop_flat_map(|(k, n, s)| {
        let batch = proptest::collection::vec(0u64..1000, k).prop_map(move |w| {
            // Spread n over k classes in proportion to the random weights.
            let total: u64 = w.iter().sum::<u64>().max(1);
            let mut counts: Vec<u64> = w.iter().map(|x| x * n / total).collect();
            let short = n - counts.iter().sum::<u64>();
            counts[0] += short;
            counts
        });
        (Just(n), proptest::collection::vec(batch, s))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_ingest_is_exact((n, raw) in batches()) {
        let k = raw[0].len();
        let obs = Observations::new(n, raw).unwrap();
        let ids: Vec<String> = (0..obs.s()).map(|i| format!("id-{i}")).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        write_labels(&path, &ids, &obs).unwrap();
        let back = ingest_labels(&path, k, None).unwrap();
        prop_assert_eq!(&back.batch_ids, &ids);
        prop_assert_eq!(&back.observations, &obs);
        for class in 0..k {
            let series = back.observations.series(class).unwrap();
            for (v, counts) in series.values().iter().zip(obs.batches()) {
                prop_assert_eq!((v * n as f64).round() as u64, counts[class]);
            }
        }
    }
}
