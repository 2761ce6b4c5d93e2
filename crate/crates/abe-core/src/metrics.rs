//! Log-spectral distance and segmental SNR, per frame and split by voicing.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::signal::{energy, frame_signal, AudioBuffer, Frame};
use crate::sysid::{classify_excitation, Excitation};
use crate::{AbeError, Result};

pub const LSD_DFT_SIZE: usize = 512;
pub const POWER_FLOOR: f64 = 1e-10;
pub const SEGSNR_MIN: f64 = -10.0;
pub const SEGSNR_MAX: f64 = 35.0;
/// -60 dBFS as a frame mean square.
pub const SILENCE_MEAN_SQUARE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetric {
    pub index: usize,
    pub lsd: f64,
    /// `None` for frames below the silence threshold.
    pub segsnr: Option<f64>,
    pub voicing: Excitation,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubRecord {
    pub lsd: f64,
    pub segsnr: Option<f64>,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub lsd: f64,
    pub segsnr: Option<f64>,
    pub per_frame: Vec<FrameMetric>,
    /// (voiced, unvoiced)
    pub voicing_split: Option<(SubRecord, SubRecord)>,
}

fn paired_frames(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<(Vec<Frame>, Vec<Frame>)> {
    if reference.rate() != estimate.rate() {
        return Err(AbeError::RateMismatch {
            expected: reference.rate(),
            got: estimate.rate(),
        });
    }
    let n = reference.len().min(estimate.len());
    if n == 0 {
        return Err(AbeError::Empty("overlap of reference and estimate"));
    }
    let trim = |b: &AudioBuffer| AudioBuffer::new(b.samples()[..n].to_vec(), b.rate());
    Ok((frame_signal(&trim(reference)?)?, frame_signal(&trim(estimate)?)?))
}

struct PowerSpectrum {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    n: usize,
}

impl PowerSpectrum {
    fn new(n: usize) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(n),
            n,
        }
    }

    /// One-sided power spectrum (bins `0..=n/2`), floored.
    fn compute(&self, x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().take(self.n).map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.n, Complex64::new(0.0, 0.0));
        self.fft.process(&mut buf);
        buf[..=self.n / 2].iter().map(|c| c.norm_sqr().max(POWER_FLOOR)).collect()
    }
}

fn frame_lsd(spec: &PowerSpectrum, r: &[f64], e: &[f64]) -> f64 {
    let pr = spec.compute(r);
    let pe = spec.compute(e);
    let mean = pr
        .iter()
        .zip(&pe)
        .map(|(a, b)| (10.0 * (a / b).log10()).powi(2))
        .sum::<f64>()
        / pr.len() as f64;
    mean.sqrt()
}

fn frame_segsnr(r: &[f64], e: &[f64]) -> Option<f64> {
    if !(energy(r) / r.len() as f64 > SILENCE_MEAN_SQUARE) {
        return None;
    }
    let noise: f64 = r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
    let snr = 10.0 * (energy(r) / noise).log10();
    Some(if snr.is_nan() { SEGSNR_MAX } else { snr.clamp(SEGSNR_MIN, SEGSNR_MAX) })
}

/// Mean over frames of the per-frame log-spectral distance.
pub fn lsd(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    let (rf, ef) = paired_frames(reference, estimate)?;
    let spec = PowerSpectrum::new(LSD_DFT_SIZE);
    let total: f64 = rf.iter().zip(&ef).map(|(r, e)| frame_lsd(&spec, &r.samples, &e.samples)).sum();
    Ok(total / rf.len() as f64)
}

/// Mean of clamped per-frame SNRs over non-silent reference frames.
pub fn segsnr(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    let (rf, ef) = paired_frames(reference, estimate)?;
    let vals: Vec<f64> = rf
        .iter()
        .zip(&ef)
        .filter_map(|(r, e)| frame_segsnr(&r.samples, &e.samples))
        .collect();
    if vals.is_empty() {
        return Err(AbeError::Degenerate("no non-silent reference frames".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn summarize<'a>(frames: impl Iterator<Item = &'a FrameMetric>) -> SubRecord {
    let (mut lsd, mut n, mut snr, mut n_snr) = (0.0, 0usize, 0.0, 0usize);
    for f in frames {
        lsd += f.lsd;
        n += 1;
        if let Some(s) = f.segsnr {
            snr += s;
            n_snr += 1;
        }
    }
    SubRecord {
        lsd: if n > 0 { lsd / n as f64 } else { 0.0 },
        segsnr: (n_snr > 0).then(|| snr / n_snr as f64),
        frames: n,
    }
}

/// Per-frame metrics with the voicing decision taken on the reference.
/// `reference_energy` defaults to the largest reference frame energy.
pub fn evaluate_pair(
    reference: &AudioBuffer,
    estimate: &AudioBuffer,
    reference_energy: Option<f64>,
) -> Result<MetricsRecord> {
    let (rf, ef) = paired_frames(reference, estimate)?;
    let spec = PowerSpectrum::new(LSD_DFT_SIZE);
    let ref_energy = reference_energy.unwrap_or_else(|| rf.iter().map(|f| f.energy()).fold(0.0, f64::max));
    let per_frame: Vec<FrameMetric> = rf
        .iter()
        .zip(&ef)
        .map(|(r, e)| FrameMetric {
            index: r.index,
            lsd: frame_lsd(&spec, &r.samples, &e.samples),
            segsnr: frame_segsnr(&r.samples, &e.samples),
            voicing: classify_excitation(&r.samples, ref_energy),
        })
        .collect();
    Ok(record_from_frames(per_frame))
}

pub fn record_from_frames(per_frame: Vec<FrameMetric>) -> MetricsRecord {
    let all = summarize(per_frame.iter());
    let voiced = summarize(per_frame.iter().filter(|f| f.voicing == Excitation::Voiced));
    let unvoiced = summarize(per_frame.iter().filter(|f| f.voicing == Excitation::Unvoiced));
    MetricsRecord {
        lsd: all.lsd,
        segsnr: all.segsnr,
        per_frame,
        voicing_split: Some((voiced, unvoiced)),
    }
}

/// Pools the frames of several records into one.
pub fn pool(records: &[MetricsRecord]) -> MetricsRecord {
    record_from_frames(records.iter().flat_map(|r| r.per_frame.iter().copied()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn buf(x: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(x, 16_000).unwrap()
    }

    fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    /// Straight from the definitions: explicit framing, naive DFT.
    fn oracle_metrics(r: &[f64], e: &[f64]) -> (f64, f64) {
        let n = r.len().min(e.len());
        let (len, hop) = (400, 200);
        let count = if n <= len { 1 } else { (n - len + hop - 1) / hop + 1 };
        let seg = |x: &[f64], i: usize| -> Vec<f64> { (0..len).map(|k| x.get(i * hop + k).copied().filter(|_| i * hop + k < n).unwrap_or(0.0)).collect() };
        let power = |x: &[f64]| -> Vec<f64> {
            (0..=256)
                .map(|k| {
                    let c: Complex64 = x
                        .iter()
                        .enumerate()
                        .map(|(t, &v)| Complex64::from_polar(v, -2.0 * PI * (k * t) as f64 / 512.0))
                        .sum();
                    c.norm_sqr().max(1e-10)
                })
                .collect()
        };
        let (mut lsd, mut snr, mut n_snr) = (0.0, 0.0, 0);
        for i in 0..count {
            let (a, b) = (seg(r, i), seg(e, i));
            let (pa, pb) = (power(&a), power(&b));
            let d: f64 = pa.iter().zip(&pb).map(|(x, y)| (10.0 * x.log10() - 10.0 * y.log10()).powi(2)).sum();
            lsd += (d / 257.0).sqrt();
            let es: f64 = a.iter().map(|v| v * v).sum();
            if es / 400.0 > 1e-6 {
                let en: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
                snr += (10.0 * (es / en).log10()).clamp(-10.0, 35.0);
                n_snr += 1;
            }
        }
        (lsd / count as f64, snr / n_snr as f64)
    }

    #[test]
    fn identical_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = buf(noise(&mut rng, 3000));
        assert_eq!(lsd(&x, &x).unwrap(), 0.0);
        assert_eq!(segsnr(&x, &x).unwrap(), 35.0);
    }

    #[test]
    fn constant_power_ratio_gives_ten_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = noise(&mut rng, 2000);
        let y: Vec<f64> = x.iter().map(|v| v / 10f64.sqrt()).collect();
        let d = lsd(&buf(x), &buf(y)).unwrap();
        assert!((d - 10.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn equal_noise_gives_zero_db() {
        let x = buf(vec![1.0; 800]);
        let y = buf(vec![0.0; 800]);
        assert!(segsnr(&x, &y).unwrap().abs() < 1e-12);
        let silent = buf(vec![0.0; 800]);
        assert!(segsnr(&silent, &x).is_err());
        assert!(lsd(&silent, &AudioBuffer::new(vec![0.0; 800], 8_000).unwrap()).is_err());
    }

    #[test]
    fn random_pairs_match_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let n = rng.random_range(500..1500);
            let r = noise(&mut rng, n);
            let e: Vec<f64> = r.iter().map(|v| v + 0.3 * (rng.random::<f64>() - 0.5)).collect();
            let (l, s) = oracle_metrics(&r, &e);
            assert!((lsd(&buf(r.clone()), &buf(e.clone())).unwrap() - l).abs() < 1e-9);
            assert!((segsnr(&buf(r), &buf(e)).unwrap() - s).abs() < 1e-9);
        }
    }

    #[test]
    fn record_split_and_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let voiced: Vec<f64> = (0..1600).map(|n| (2.0 * PI * 200.0 * n as f64 / 16000.0).sin()).collect();
        let mut x = voiced;
        x.extend(noise(&mut rng, 1600));
        let est: Vec<f64> = x.iter().map(|v| 0.9 * v).collect();
        let rec = evaluate_pair(&buf(x.clone()), &buf(est.clone()), None).unwrap();
        let (v, u) = rec.voicing_split.unwrap();
        assert!(v.frames > 0 && u.frames > 0);
        assert_eq!(v.frames + u.frames, rec.per_frame.len());
        assert!((rec.lsd - lsd(&buf(x), &buf(est)).unwrap()).abs() < 1e-12);
        let pooled = pool(&[rec.clone(), rec.clone()]);
        assert_eq!(pooled.per_frame.len(), 2 * rec.per_frame.len());
        assert!((pooled.lsd - rec.lsd).abs() < 1e-12);
    }
}
