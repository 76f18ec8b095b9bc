use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shardnet_core::data::{channel_spectrum, spectrogram, ActivityWindow};

const N: usize = 200;

/// Mean-removed, periodic-Hann-weighted signal, as the pipeline defines it.
fn prepared(signal: &[f32]) -> Vec<f64> {
    let n = signal.len();
    let mean = signal.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    signal
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            (v as f64 - mean) * w
        })
        .collect()
}

/// Direct O(n²) DFT.
fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let a = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

fn oracle_features(w: &ActivityWindow) -> Vec<f64> {
    w.channels
        .iter()
        .flat_map(|c| {
            dft(&prepared(c))[..N / 2 + 1]
                .iter()
                .map(|(re, im)| (re * re + im * im).sqrt().ln_1p())
                .collect::<Vec<_>>()
        })
        .collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-3)
}

fn random_window(rng: &mut ChaCha8Rng) -> ActivityWindow {
    let offset = rng.random_range(-10.0f32..10.0);
    let scale = rng.random_range(0.1f32..5.0);
    let triples: Vec<[f32; 3]> = (0..N)
        .map(|_| std::array::from_fn(|_| offset + scale * rng.random_range(-1.0f32..1.0)))
        .collect();
    ActivityWindow::from_triples(&triples, None, 0)
}

#[test]
fn thousand_random_windows_match_the_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let w = random_window(&mut rng);
        let got = spectrogram(&w, N).unwrap().values;
        let want = oracle_features(&w);
        assert_eq!(got.len(), 303);
        for (k, (&g, &o)) in got.iter().zip(&want).enumerate() {
            assert!(rel_close(g as f64, o, 1e-4), "window {i} feature {k}: {g} vs {o}");
        }
    }
}

#[test]
fn two_hertz_tone_peaks_at_bin_twenty() {
    let tone: Vec<[f32; 3]> = (0..N)
        .map(|t| {
            let v = (2.0 * std::f64::consts::PI * 2.0 * t as f64 / 20.0).sin() as f32;
            [v, 0.5 * v, 1.0]
        })
        .collect();
    let w = ActivityWindow::from_triples(&tone, None, 0);
    let f = spectrogram(&w, N).unwrap().values;
    let x = &f[..101];
    let peak = (0..101).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
    assert_eq!(peak, 20);
    let oracle = oracle_features(&w);
    let oracle_peak = (0..101).max_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap();
    assert_eq!(oracle_peak, 20);
    assert!(rel_close(x[20] as f64, oracle[20], 1e-4));
    // Constant z axis: DC removed, nothing left.
    assert!(f[202..].iter().all(|&v| v < 1e-5));
}

proptest! {
    #[test]
    fn parseval_holds_against_the_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal: Vec<f32> = (0..N).map(|_| rng.random_range(-3.0f32..3.0)).collect();
        let spectrum = channel_spectrum(&signal).unwrap();
        let energy_freq: f64 = spectrum.iter().map(|c| c.norm_sqr()).sum();
        let x = prepared(&signal);
        let energy_time: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!(rel_close(energy_freq, N as f64 * energy_time, 1e-3));
        let oracle: f64 = dft(&x).iter().map(|(re, im)| re * re + im * im).sum();
        prop_assert!(rel_close(energy_freq, oracle, 1e-3));
    }

    #[test]
    fn features_match_oracle_on_random_windows(seed in any::<u64>()) {
        let w = random_window(&mut ChaCha8Rng::seed_from_u64(seed));
        let got = spectrogram(&w, N).unwrap().values;
        for (g, o) in got.iter().zip(oracle_features(&w)) {
            prop_assert!(rel_close(*g as f64, o, 1e-4));
        }
    }
}
