//! Synthetic speech-like corpus: voiced segments are pulse trains and
//! unvoiced segments are noise, both through randomized resonator cascades.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::features::narrowband_of;
use crate::poly;
use crate::signal::{peak, AudioBuffer, FixedFilters, NB_RATE, WB_RATE};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub min_segment_s: f64,
    pub max_segment_s: f64,
    pub voiced_prob: f64,
    pub pause_prob: f64,
    /// Output peak level.
    pub peak: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 1.0,
            min_segment_s: 0.06,
            max_segment_s: 0.16,
            voiced_prob: 0.6,
            pause_prob: 0.1,
            peak: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment {
    Voiced,
    Unvoiced,
    Pause,
}

/// Order of every segment's all-pole filter; shorter ones are zero-padded
/// so the recursion state carries across segment boundaries.
const FILTER_ORDER: usize = 12;

fn resonator(freq_hz: f64, bandwidth_hz: f64) -> [f64; 3] {
    let r = (-PI * bandwidth_hz / WB_RATE as f64).exp();
    let w = 2.0 * PI * freq_hz / WB_RATE as f64;
    [1.0, -2.0 * r * w.cos(), r * r]
}

fn segment_filter<R: Rng>(rng: &mut R, kind: Segment) -> Vec<f64> {
    let mut den = vec![1.0];
    let bands: &[(f64, f64, f64, f64)] = match kind {
        // (low, high) formant range and bandwidth range in Hz.
        Segment::Voiced => &[
            (300.0, 900.0, 60.0, 150.0),
            (900.0, 2300.0, 80.0, 200.0),
            (2300.0, 3300.0, 100.0, 300.0),
            (3500.0, 5000.0, 150.0, 400.0),
            (5000.0, 7000.0, 200.0, 600.0),
        ],
        Segment::Unvoiced | Segment::Pause => &[
            (1500.0, 3000.0, 300.0, 700.0),
            (3000.0, 5000.0, 300.0, 900.0),
            (5000.0, 7200.0, 400.0, 1200.0),
        ],
    };
    for &(lo, hi, bw_lo, bw_hi) in bands {
        let sec = resonator(rng.random_range(lo..hi), rng.random_range(bw_lo..bw_hi));
        den = poly::convolve(&den, &sec);
    }
    if kind == Segment::Voiced {
        // Glottal roll-off.
        den = poly::convolve(&den, &[1.0, -rng.random_range(0.85..0.95)]);
    }
    den.resize(FILTER_ORDER + 1, 0.0);
    den
}

/// Mean output power per unit input power of `1/den` for white input.
fn power_gain(den: &[f64]) -> f64 {
    let mut imp = vec![0.0; 4096];
    imp[0] = 1.0;
    poly::lfilter(&[1.0], den, &imp).iter().map(|v| v * v).sum()
}

/// One wideband utterance at 16 kHz.
pub fn synth_utterance<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Result<AudioBuffer> {
    let total = (cfg.duration_s * WB_RATE as f64).round() as usize;
    let mut out = Vec::with_capacity(total);
    let mut state = [0.0; FILTER_ORDER];
    let mut phase = 0.0;
    while out.len() < total {
        let len = ((rng.random_range(cfg.min_segment_s..=cfg.max_segment_s) * WB_RATE as f64) as usize)
            .min(total - out.len())
            .max(1);
        let u: f64 = rng.random();
        let kind = if u < cfg.pause_prob {
            Segment::Pause
        } else if u < cfg.pause_prob + cfg.voiced_prob {
            Segment::Voiced
        } else {
            Segment::Unvoiced
        };
        let den = segment_filter(rng, kind);
        let gain = power_gain(&den);
        let f0 = rng.random_range(80.0..300.0);
        let f0_end = f0 * rng.random_range(0.9..1.1);
        // Target RMS levels before the final peak normalization.
        let level = match kind {
            Segment::Voiced => 0.1,
            Segment::Unvoiced => 0.02,
            Segment::Pause => 1e-4,
        };
        let excitation: Vec<f64> = match kind {
            Segment::Voiced => {
                let mut e = vec![0.0; len];
                for (n, slot) in e.iter_mut().enumerate() {
                    let f = f0 + (f0_end - f0) * n as f64 / len as f64;
                    phase += f / WB_RATE as f64;
                    if phase >= 1.0 {
                        phase -= 1.0;
                        *slot = 1.0;
                    }
                    *slot += 0.02 * (rng.random::<f64>() - 0.5);
                }
                let period = WB_RATE as f64 / f0;
                let scale = level / (gain / period).sqrt();
                e.iter().map(|v| v * scale).collect()
            }
            _ => {
                // Uniform noise on [-0.5, 0.5) has variance 1/12.
                let scale = level / (gain / 12.0).sqrt();
                (0..len).map(|_| scale * (rng.random::<f64>() - 0.5)).collect()
            }
        };
        for e in excitation {
            let y = e - den[1..].iter().zip(&state).map(|(a, s)| a * s).sum::<f64>();
            state.rotate_right(1);
            state[0] = y;
            out.push(y);
        }
    }
    let p = peak(&out);
    if p > 0.0 {
        out.iter_mut().for_each(|v| *v *= cfg.peak / p);
    }
    AudioBuffer::new(out, WB_RATE)
}

/// Narrowband counterpart: zero-phase LPF over the whole file, then
/// decimation by two.
pub fn derive_narrowband(wb: &AudioBuffer, filters: &FixedFilters) -> Result<AudioBuffer> {
    wb.expect_rate(WB_RATE)?;
    AudioBuffer::new(narrowband_of(wb.samples(), filters), NB_RATE)
}
