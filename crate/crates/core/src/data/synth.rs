//! Synthetic six-activity accelerometer streams.
//!
//! Each class is a gravity offset plus a dominant tone whose frequency sits on
//! a distinct spectrogram bin for 200-sample windows at 20 Hz. Active classes
//! get strong 1.5-3 Hz tones, static ones weak sub-Hz tones and a different
//! gravity orientation. `noise_sigma` scales additive Gaussian noise as well
//! as per-window amplitude and per-run frequency jitter, so `sigma = 0` is
//! perfectly clean.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AccelSample, DEFAULT_WINDOW_LEN, SAMPLING_HZ};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProfile {
    pub name: &'static str,
    pub freq_hz: f32,
    pub amplitude: [f32; 3],
    pub gravity: [f32; 3],
}

pub const CLASS_PROFILES: [ClassProfile; 6] = [
    ClassProfile {
        name: "walking",
        freq_hz: 2.0,
        amplitude: [1.0, 2.0, 0.8],
        gravity: [0.0, 9.8, 0.0],
    },
    ClassProfile {
        name: "jogging",
        freq_hz: 3.0,
        amplitude: [2.5, 4.0, 1.8],
        gravity: [0.0, 9.8, 0.0],
    },
    ClassProfile {
        name: "climbing stairs",
        freq_hz: 1.5,
        amplitude: [1.1, 2.2, 0.9],
        gravity: [0.0, 9.8, 0.0],
    },
    ClassProfile {
        name: "sitting",
        freq_hz: 0.4,
        amplitude: [0.2, 0.1, 0.1],
        gravity: [0.0, 4.9, 8.5],
    },
    ClassProfile {
        name: "standing",
        freq_hz: 0.7,
        amplitude: [0.1, 0.2, 0.1],
        gravity: [0.0, 9.8, 0.5],
    },
    ClassProfile {
        name: "lying down",
        freq_hz: 0.2,
        amplitude: [0.1, 0.1, 0.2],
        gravity: [9.8, 0.0, 1.0],
    },
];

impl ClassProfile {
    /// Spectrogram bin of the tone for a window of `window_len` samples.
    pub fn bin(&self, window_len: usize, sampling_hz: f32) -> usize {
        (self.freq_hz * window_len as f32 / sampling_hz).round() as usize
    }

    /// Axis carrying the largest tone.
    pub fn dominant_axis(&self) -> usize {
        (0..3)
            .max_by(|&a, &b| self.amplitude[a].total_cmp(&self.amplitude[b]))
            .expect("three axes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Non-overlapping windows generated per class.
    pub per_class: usize,
    pub noise_sigma: f32,
    pub users: u32,
    pub window_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            per_class: 500,
            noise_sigma: 0.1,
            users: 6,
            window_len: DEFAULT_WINDOW_LEN,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn new(per_class: usize, noise_sigma: f32, seed: u64) -> Self {
        SynthConfig {
            per_class,
            noise_sigma,
            seed,
            ..SynthConfig::default()
        }
    }
}

/// Labeled 20 Hz stream, ordered by user, then class. Every (user, class) run
/// is contiguous in time and holds a whole number of windows.
pub fn synth_generate(cfg: &SynthConfig) -> Vec<AccelSample> {
    assert!(cfg.per_class >= 1 && cfg.users >= 1 && cfg.window_len >= 1);
    let mut rng = rng::seeded(cfg.seed);
    let sigma = cfg.noise_sigma as f64;
    let period_ns = (1e9 / SAMPLING_HZ as f64) as i64;
    let users = cfg.users as usize;
    let mut out = Vec::with_capacity(6 * cfg.per_class * cfg.window_len);
    for user in 0..users {
        let mut t = 0i64;
        for (label, profile) in CLASS_PROFILES.iter().enumerate() {
            // Windows w = user, user + users, ... of this class belong to this user.
            let windows = (cfg.per_class + users - 1 - user) / users;
            if windows == 0 {
                continue;
            }
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = profile.freq_hz as f64 * (1.0 + 0.1 * sigma * normal(&mut rng));
            let omega = std::f64::consts::TAU * freq / SAMPLING_HZ as f64;
            let mut n = 0usize;
            for _ in 0..windows {
                let mut amp = [0.0f64; 3];
                for (a, base) in amp.iter_mut().zip(profile.amplitude) {
                    *a = base as f64 * (1.0 + sigma * normal(&mut rng)).max(0.0);
                }
                for _ in 0..cfg.window_len {
                    let tone = (omega * n as f64 + phase).sin();
                    let mut xyz = [0.0f32; 3];
                    for axis in 0..3 {
                        let v = profile.gravity[axis] as f64 + amp[axis] * tone + sigma * normal(&mut rng);
                        xyz[axis] = v as f32;
                    }
                    out.push(AccelSample {
                        timestamp: t,
                        x: xyz[0],
                        y: xyz[1],
                        z: xyz[2],
                        user_id: user as u32,
                        label: Some(label),
                    });
                    t += period_ns;
                    n += 1;
                }
            }
        }
    }
    out
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
