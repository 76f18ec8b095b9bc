use proptest::prelude::*;
use shardnet_core::data::{fit_scaler, read_cache_from, split, write_cache_to, Dataset};
use shardnet_core::eval::{EarlyStopMonitor, StopDecision};
use shardnet_core::Matrix;

fn matrix(rows: usize, cols: usize, values: Vec<f32>) -> Matrix {
    Matrix::from_vec(rows, cols, values[..rows * cols].to_vec()).unwrap()
}

fn dataset(rows: usize, users: u32, seed: u64) -> Dataset {
    let x: Vec<f32> = (0..rows * 3).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f32 / 7.0).collect();
    Dataset::new(
        Matrix::from_vec(rows, 3, x).unwrap(),
        (0..rows).map(|i| if i % 5 == 4 { None } else { Some(i % 6) }).collect(),
        (0..rows).map(|i| (i as u32 * 7 + seed as u32) % users).collect(),
        6,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scaler_maps_training_rows_into_unit_box_and_back(
        rows in 1usize..20, cols in 1usize..8,
        values in prop::collection::vec(-1e3f32..1e3, 160),
    ) {
        let x = matrix(rows, cols, values);
        let s = fit_scaler(&x).unwrap();
        let scaled = s.apply(&x).unwrap();
        prop_assert!(scaled.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let back = s.unscale(&scaled).unwrap();
        for (r, (a, b)) in x.as_slice().iter().zip(back.as_slice()).enumerate() {
            let d = r % cols;
            let range = s.maxs[d] - s.mins[d];
            if range > 0.0 {
                prop_assert!((a - b).abs() <= 1e-5 * range.max(a.abs()).max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn split_is_a_disjoint_cover(rows in 2usize..120, users in 2u32..9, seed in any::<u64>(), frac in 0.05f64..0.95, by_user in any::<bool>()) {
        let data = dataset(rows, users, seed);
        let distinct = { let mut u = data.users.clone(); u.sort_unstable(); u.dedup(); u.len() };
        prop_assume!(!by_user || distinct >= 2);
        let (train, test) = split(&data, frac, seed, by_user).unwrap();
        prop_assert_eq!(train.len() + test.len(), rows);
        let mut all: Vec<(Vec<f32>, Option<usize>, u32)> = train.features.row_iter().zip(&train.labels).zip(&train.users)
            .chain(test.features.row_iter().zip(&test.labels).zip(&test.users))
            .map(|((f, l), u)| (f.to_vec(), *l, *u)).collect();
        let mut orig: Vec<(Vec<f32>, Option<usize>, u32)> = data.features.row_iter().zip(&data.labels).zip(&data.users)
            .map(|((f, l), u)| (f.to_vec(), *l, *u)).collect();
        let key = |a: &(Vec<f32>, Option<usize>, u32), b: &(Vec<f32>, Option<usize>, u32)| {
            a.0.iter().zip(&b.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        all.sort_by(key);
        orig.sort_by(key);
        prop_assert_eq!(all, orig);
        if by_user {
            prop_assert!(!train.users.iter().any(|u| test.users.contains(u)));
            prop_assert!(!train.is_empty() && !test.is_empty());
        }
        let (train2, test2) = split(&data, frac, seed, by_user).unwrap();
        prop_assert_eq!(train, train2);
        prop_assert_eq!(test, test2);
    }

    #[test]
    fn cache_round_trip(rows in 0usize..40, users in 1u32..5, seed in any::<u64>()) {
        let data = dataset(rows, users, seed);
        let mut buf = Vec::new();
        write_cache_to(&mut buf, &data).unwrap();
        let back = read_cache_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.features.as_slice(), data.features.as_slice());
        prop_assert_eq!(back.labels, data.labels);
        prop_assert_eq!(back.label_count, data.label_count);
    }

    #[test]
    fn early_stop_best_round_is_an_argmin(metrics in prop::collection::vec(0.0f64..1.0, 1..40), patience in 0usize..6) {
        let mut m = EarlyStopMonitor::new(patience);
        let mut seen = Vec::new();
        for (r, &v) in metrics.iter().enumerate() {
            seen.push(v);
            let d = m.update(r, v);
            let best = m.best_round().unwrap();
            let min = seen.iter().cloned().fold(f64::INFINITY, f64::min);
            let first_min = seen.iter().position(|&x| x == min).unwrap();
            prop_assert!(best <= r);
            prop_assert!(best >= first_min);
            prop_assert!(seen[best] <= min + 1e-6);
            prop_assert_eq!(d == StopDecision::Stop, r - best > patience);
            if d == StopDecision::Stop {
                break;
            }
        }
    }
}

#[test]
fn truncated_cache_is_rejected() {
    let data = dataset(10, 2, 1);
    let mut buf = Vec::new();
    write_cache_to(&mut buf, &data).unwrap();
    for cut in [0, 4, buf.len() / 2, buf.len() - 1] {
        assert!(read_cache_from(&buf[..cut]).is_err(), "cut at {cut}");
    }
}
