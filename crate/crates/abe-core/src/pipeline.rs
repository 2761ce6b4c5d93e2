//! Extension block: high-band estimation from the NB residue, gain
//! adjustment, NB interpolation, band addition and overlap-add.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::features::{analyze_frame, FeatureConfig, SkipReason};
use crate::hbfilter::SynthesisFilter;
use crate::mrss::StateSpace;
use crate::signal::{
    energy, frame_signal, inverse_filter, levinson_lpc_with_floor, overlap_add, peak, upsample2, AudioBuffer,
    FirFilter, FixedFilters, LpcModel, LPC_FLOOR, NB_LPC_ORDER, NB_RATE, WB_RATE,
};
use crate::{AbeError, Result};

pub const DFT_SIZE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Regressor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterForm {
    Iir,
    Fir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Addition {
    Time,
    Dft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionConfig {
    pub mode: Mode,
    pub filter_form: FilterForm,
    pub addition: Addition,
    pub gain_adjust: bool,
    pub dft_size: usize,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Regressor,
            filter_form: FilterForm::Fir,
            addition: Addition::Dft,
            gain_adjust: true,
            dft_size: DFT_SIZE,
        }
    }
}

impl ExtensionConfig {
    pub fn validate(&self, frame_len: usize) -> Result<()> {
        if !self.dft_size.is_power_of_two() || self.dft_size < frame_len {
            return Err(AbeError::Config(format!(
                "dft_size {} must be a power of two of at least {frame_len}",
                self.dft_size
            )));
        }
        Ok(())
    }
}

/// High-band filter applied to the upsampled residue.
#[derive(Debug, Clone)]
pub enum HbFilter {
    Fir(Vec<f64>),
    Iir(StateSpace),
}

impl HbFilter {
    /// Filters with zero initial state, advanced by `advance` samples.
    pub fn apply(&self, x: &[f64], advance: usize) -> Result<Vec<f64>> {
        match self {
            HbFilter::Fir(taps) => Ok(FirFilter::causal(taps.clone()).filter_advanced(x, advance)),
            HbFilter::Iir(sys) => {
                let mut padded = x.to_vec();
                padded.resize(x.len() + advance, 0.0);
                Ok(sys.filter(&padded)?[advance..].to_vec())
            }
        }
    }
}

/// Estimated high-band filter and log-energy ratio for one frame.
#[derive(Debug, Clone)]
pub struct HbEstimate {
    pub filter: HbFilter,
    pub g1: f64,
}

/// Source of per-frame high-band estimates.
pub trait HbSource: Sync {
    /// `None` leaves the frame without a high band.
    fn estimate(&self, frame_index: usize, nb: &[f64], lpc: &LpcModel, form: FilterForm) -> Result<Option<HbEstimate>>;
}

/// Per-frame filters synthesized from the wideband reference.
#[derive(Debug, Clone)]
pub struct OracleFrame {
    pub filter: SynthesisFilter,
    pub g1: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OracleSource {
    pub frames: Vec<Option<OracleFrame>>,
    pub skipped: Vec<(usize, SkipReason)>,
}

impl OracleSource {
    pub fn from_wideband(wb: &AudioBuffer, filters: &FixedFilters, cfg: &FeatureConfig) -> Result<Self> {
        wb.expect_rate(WB_RATE)?;
        let frames = frame_signal(wb)?;
        let analyzed: Vec<_> = frames
            .par_iter()
            .map(|f| analyze_frame(f, filters, cfg))
            .collect::<Result<_>>()?;
        let mut out = OracleSource::default();
        for (i, a) in analyzed.into_iter().enumerate() {
            match a {
                Ok(a) => out.frames.push(Some(OracleFrame {
                    filter: a.filter,
                    g1: a.pair.g1,
                })),
                Err(reason) => {
                    out.frames.push(None);
                    out.skipped.push((i, reason));
                }
            }
        }
        Ok(out)
    }
}

impl HbSource for OracleSource {
    fn estimate(&self, frame_index: usize, _nb: &[f64], _lpc: &LpcModel, form: FilterForm) -> Result<Option<HbEstimate>> {
        Ok(self.frames.get(frame_index).and_then(|f| f.as_ref()).map(|f| HbEstimate {
            filter: match form {
                FilterForm::Fir => HbFilter::Fir(f.filter.fir.clone()),
                FilterForm::Iir => HbFilter::Iir(f.filter.k_hpf.clone()),
            },
            g1: f.g1,
        }))
    }
}

/// `K_HPF(↑2(A(nb)))`, advanced by `advance`, optionally rescaled so that
/// the HB/NB log-energy ratio equals `g1_target`.
pub fn estimate_hb_signal(
    nb: &[f64],
    lpc: &LpcModel,
    filter: &HbFilter,
    advance: usize,
    g1_target: Option<f64>,
) -> Result<Vec<f64>> {
    let e_nb = energy(nb);
    if !(e_nb > 0.0) {
        return Ok(vec![0.0; 2 * nb.len()]);
    }
    let residue = inverse_filter(nb, lpc);
    let hb = filter.apply(&upsample2(&residue), advance)?;
    let Some(g1) = g1_target else {
        return Ok(hb);
    };
    let e_hb = energy(&hb);
    if !(e_hb > 0.0) {
        return Ok(hb);
    }
    let g2 = (e_hb / e_nb).log10();
    let gain = 10f64.powf(0.5 * (g1 - g2));
    if !gain.is_finite() {
        return Err(AbeError::NonFinite("gain correction"));
    }
    Ok(hb.iter().map(|v| v * gain).collect())
}

/// Upsampling followed by the zero-phase LPF, without level correction.
pub fn interpolate_nb(nb: &[f64], lpf: &FirFilter) -> Vec<f64> {
    lpf.filter(&upsample2(nb))
}

/// Interpolated NB signal scaled so its peak equals the input peak.
pub fn process_nb(nb: &[f64], lpf: &FirFilter) -> Vec<f64> {
    let y = interpolate_nb(nb, lpf);
    let p = peak(&y);
    let g3 = if p > 0.0 { peak(nb) / p } else { 1.0 };
    y.iter().map(|v| v * g3).collect()
}

/// Splices the spectra: NB bins on `[0, N/4]` and `[3N/4, N)`, HB bins on
/// `(N/4, 3N/4)`. Returns `nb.len()` samples.
pub fn dft_add(nb: &[f64], hb: &[f64], n: usize) -> Result<Vec<f64>> {
    if nb.len() > n || hb.len() > n || n % 4 != 0 {
        return Err(AbeError::Config(format!(
            "DFT size {n} too small for frames of {} and {} samples",
            nb.len(),
            hb.len()
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let spectrum = |x: &[f64]| {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        fft.process(&mut buf);
        buf
    };
    let nb_spec = spectrum(nb);
    let hb_spec = spectrum(hb);
    let mut out: Vec<Complex64> = (0..n)
        .map(|k| {
            if k <= n / 4 || k >= 3 * n / 4 {
                nb_spec[k]
            } else {
                hb_spec[k]
            }
        })
        .collect();
    ifft.process(&mut out);
    Ok(out[..nb.len()].iter().map(|c| c.re / n as f64).collect())
}

/// Spectral folding: zero-insertion image of the NB frame, high-passed and
/// scaled to the energy of `nb_reference` (the 16 kHz NB signal).
pub fn fold_baseline(nb: &[f64], nb_reference: &[f64], hpf: &FirFilter) -> Vec<f64> {
    let image = hpf.filter_advanced(&upsample2(nb), hpf.group_delay());
    let e = energy(&image);
    if !(e > 0.0) {
        return image;
    }
    let gain = (energy(nb_reference) / e).sqrt();
    image.iter().map(|v| v * gain).collect()
}

/// What supplies the high band.
#[derive(Clone, Copy)]
pub enum Extension<'a> {
    /// Interpolated NB signal only, without level correction.
    NbOnly,
    Fold,
    Estimated(&'a dyn HbSource),
}

fn combine(nb: &[f64], hb: &[f64], cfg: &ExtensionConfig) -> Result<Vec<f64>> {
    match cfg.addition {
        Addition::Time => Ok(nb.iter().zip(hb).map(|(a, b)| a + b).collect()),
        Addition::Dft => dft_add(nb, hb, cfg.dft_size),
    }
}

/// Extends one 8 kHz frame to 16 kHz (twice the length).
pub fn extend_frame(
    nb: &[f64],
    frame_index: usize,
    ext: Extension<'_>,
    cfg: &ExtensionConfig,
    filters: &FixedFilters,
) -> Result<Vec<f64>> {
    if let Extension::NbOnly = ext {
        return Ok(interpolate_nb(nb, &filters.lpf));
    }
    let nb16 = process_nb(nb, &filters.lpf);
    if !(energy(nb) > 0.0) {
        return Ok(nb16);
    }
    let hb = match ext {
        Extension::Fold => fold_baseline(nb, &nb16, &filters.hpf),
        Extension::Estimated(source) => {
            let lpc = levinson_lpc_with_floor(nb, NB_LPC_ORDER, LPC_FLOOR)?;
            match source.estimate(frame_index, nb, &lpc, cfg.filter_form)? {
                Some(est) => {
                    let target = cfg.gain_adjust.then_some(est.g1);
                    estimate_hb_signal(nb, &lpc, &est.filter, filters.hpf.group_delay(), target)?
                }
                None => return Ok(nb16),
            }
        }
        Extension::NbOnly => unreachable!(),
    };
    combine(&nb16, &hb, cfg)
}

/// Frame-wise extension of an 8 kHz buffer with overlap-add; the output has
/// twice as many samples.
pub fn extend_file(
    nb: &AudioBuffer,
    ext: Extension<'_>,
    cfg: &ExtensionConfig,
    filters: &FixedFilters,
) -> Result<AudioBuffer> {
    nb.expect_rate(NB_RATE)?;
    let frames = frame_signal(nb)?;
    cfg.validate(2 * frames[0].len())?;
    let segments: Vec<Vec<f64>> = frames
        .par_iter()
        .map(|f| extend_frame(&f.samples, f.index, ext, cfg, filters))
        .collect::<Result<_>>()?;
    let hop = 2 * frames[0].hop;
    AudioBuffer::new(overlap_add(&segments, hop, 2 * nb.len()), WB_RATE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{downsample2, LpcModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| Complex64::from_polar(v, -2.0 * PI * (k * t) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn unit_gain_when_ratios_match() {
        let nb = noise(1, 200);
        let lpc = levinson_lpc_with_floor(&nb, 11, LPC_FLOOR).unwrap();
        let filter = HbFilter::Fir(vec![0.3, -0.2, 0.1]);
        let raw = estimate_hb_signal(&nb, &lpc, &filter, 0, None).unwrap();
        let g2 = (energy(&raw) / energy(&nb)).log10();
        let same = estimate_hb_signal(&nb, &lpc, &filter, 0, Some(g2)).unwrap();
        for (a, b) in raw.iter().zip(&same) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gain_adjustment_realizes_target_ratio() {
        let nb = noise(2, 200);
        let lpc = levinson_lpc_with_floor(&nb, 11, LPC_FLOOR).unwrap();
        for (filter, target) in [
            (HbFilter::Fir(vec![0.5, -0.5]), -1.3),
            (HbFilter::Iir(StateSpace::from_tf(&[1.0], &[1.0, 0.6]).unwrap()), 0.4),
        ] {
            let hb = estimate_hb_signal(&nb, &lpc, &filter, 3, Some(target)).unwrap();
            assert_eq!(hb.len(), 400);
            let realized = (energy(&hb) / energy(&nb)).log10();
            assert!((realized - target).abs() < 1e-9, "{realized} vs {target}");
        }
    }

    #[test]
    fn zero_nb_gives_zero_hb() {
        let hb = estimate_hb_signal(&[0.0; 200], &LpcModel::identity(11), &HbFilter::Fir(vec![1.0]), 0, Some(1.0));
        assert!(hb.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iir_and_fir_forms_agree_on_fir_systems() {
        let taps = [0.4, -0.1, 0.25, 0.05];
        let x = noise(3, 50);
        let a = HbFilter::Fir(taps.to_vec()).apply(&x, 2).unwrap();
        let b = HbFilter::Iir(StateSpace::fir(&taps)).apply(&x, 2).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn nb_processing_matches_peak_and_rejects_high_band() {
        let filters = FixedFilters::default();
        let nb = noise(4, 200);
        let y = process_nb(&nb, &filters.lpf);
        assert_eq!(y.len(), 400);
        assert!((peak(&y) - peak(&nb)).abs() <= 1e-15 * peak(&nb));
        assert!(process_nb(&[0.0; 200], &filters.lpf).iter().all(|&v| v == 0.0));

        // Image of a 3 kHz tone lands at 5 kHz and must be 40 dB down.
        let tone: Vec<f64> = (0..200).map(|n| (2.0 * PI * 3000.0 / 8000.0 * n as f64).sin()).collect();
        let out = process_nb(&tone, &filters.lpf);
        let spec = naive_dft(&out[50..350], 300);
        let k_tone = 3000 * 300 / 16000;
        let k_image = 5000 * 300 / 16000;
        let band = |k: usize| (k - 2..=k + 2).map(|i| spec[i].norm()).fold(0.0, f64::max);
        assert!(20.0 * (band(k_tone) / band(k_image)).log10() >= 40.0);
    }

    #[test]
    fn dft_addition_band_selection() {
        let nb = noise(5, 400);
        let hb = noise(6, 400);
        let n = 512;
        let zero = vec![0.0; 400];

        // HB zero: output is NB band-limited to [0, N/4].
        let out = dft_add(&nb, &zero, n).unwrap();
        let mut spec = naive_dft(&nb, n);
        for (k, s) in spec.iter_mut().enumerate() {
            if k > n / 4 && k < 3 * n / 4 {
                *s = Complex64::new(0.0, 0.0);
            }
        }
        let expect: Vec<f64> = (0..400)
            .map(|t| {
                spec.iter()
                    .enumerate()
                    .map(|(k, s)| (s * Complex64::from_polar(1.0, 2.0 * PI * (k * t) as f64 / n as f64)).re)
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }

        // NB zero: all energy in (N/4, 3N/4).
        let out = dft_add(&zero, &hb, n).unwrap();
        let mut padded = out.clone();
        padded.resize(n, 0.0);
        let full = naive_dft(&padded, n);
        let total: f64 = full.iter().map(|c| c.norm_sqr()).sum();
        let low: f64 = full
            .iter()
            .enumerate()
            .filter(|(k, _)| *k <= n / 4 || *k >= 3 * n / 4)
            .map(|(_, c)| c.norm_sqr())
            .sum();
        assert!(low / total < 0.05, "{}", low / total);
    }

    #[test]
    fn dft_addition_parseval_before_truncation() {
        let nb = noise(7, 400);
        let hb = noise(8, 400);
        let n = 512;
        // With frames of length n nothing is truncated.
        let nb_full = noise(9, n);
        let hb_full = noise(10, n);
        let out = dft_add(&nb_full, &hb_full, n).unwrap();
        let a = naive_dft(&nb_full, n);
        let b = naive_dft(&hb_full, n);
        let selected: f64 = (0..n)
            .map(|k| if k <= n / 4 || k >= 3 * n / 4 { a[k].norm_sqr() } else { b[k].norm_sqr() })
            .sum::<f64>()
            / n as f64;
        assert!((energy(&out) - selected).abs() < 1e-9 * selected);
        assert!(dft_add(&nb, &hb, 256).is_err());
    }

    #[test]
    fn fold_places_image_and_matches_energy() {
        let hpf = FixedFilters::default().hpf;
        let f0 = 1000.0;
        let tone: Vec<f64> = (0..200).map(|n| (2.0 * PI * f0 / 8000.0 * n as f64).sin()).collect();
        let reference = process_nb(&tone, &FixedFilters::default().lpf);
        let hb = fold_baseline(&tone, &reference, &hpf);
        let spec = naive_dft(&hb, 400);
        let peak_bin = (0..=200).max_by(|&i, &j| spec[i].norm().total_cmp(&spec[j].norm())).unwrap();
        assert_eq!(peak_bin, ((16000.0 / 2.0 - f0) / 40.0) as usize);
        assert!((energy(&hb) / energy(&reference) - 1.0).abs() < 1e-12);

        let white = noise(11, 200);
        let reference = process_nb(&white, &FixedFilters::default().lpf);
        let hb = fold_baseline(&white, &reference, &hpf);
        assert!((10.0 * (energy(&hb) / energy(&reference)).log10()).abs() < 1.0);
        assert!(fold_baseline(&[0.0; 200], &[0.0; 400], &hpf).iter().all(|&v| v == 0.0));
    }

    struct ConstSource(Vec<f64>, f64);

    impl HbSource for ConstSource {
        fn estimate(&self, _: usize, _: &[f64], _: &LpcModel, _: FilterForm) -> Result<Option<HbEstimate>> {
            Ok(Some(HbEstimate {
                filter: HbFilter::Fir(self.0.clone()),
                g1: self.1,
            }))
        }
    }

    #[test]
    fn file_extension_shapes_and_silence() {
        let filters = FixedFilters::default();
        let cfg = ExtensionConfig::default();
        let src = ConstSource(vec![0.2, -0.3, 0.1], -1.0);
        let silent = AudioBuffer::new(vec![0.0; 1234], NB_RATE).unwrap();
        let out = extend_file(&silent, Extension::Estimated(&src), &cfg, &filters).unwrap();
        assert_eq!(out.len(), 2468);
        assert_eq!(out.rate(), WB_RATE);
        assert!(out.samples().iter().all(|&v| v == 0.0));
        let wrong = AudioBuffer::new(vec![0.0; 100], WB_RATE).unwrap();
        assert!(extend_file(&wrong, Extension::Fold, &cfg, &filters).is_err());
    }

    #[test]
    fn extended_file_keeps_narrowband_content() {
        let filters = FixedFilters::default();
        let cfg = ExtensionConfig::default();
        let src = ConstSource(vec![0.2, -0.3, 0.1], -1.0);
        // Low-pass content so that the NB input is band-limited.
        let x: Vec<f64> = crate::poly::lfilter(&[1.0], &[1.0, -0.9], &noise(12, 1600));
        let nb = AudioBuffer::new(x.clone(), NB_RATE).unwrap();
        let out = extend_file(&nb, Extension::Estimated(&src), &cfg, &filters).unwrap();
        let back = downsample2(&filters.lpf.filter(out.samples()));
        let dot: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        let corr = dot / (energy(&back) * energy(&x)).sqrt();
        assert!(corr > 0.95, "{corr}");
    }
}
