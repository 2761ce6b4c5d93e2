//! Training features for one wideband frame: NB LPC coefficients, the
//! 21-tap high-band filter and the HB/NB log-energy ratio.

use serde::{Deserialize, Serialize};

use crate::hbfilter::{assemble_synthesis_filter, extract_highband_filter, SynthesisFilter, FIR_LEN};
use crate::hinf::hinf_synthesize;
use crate::mrss::build_generalized_plant;
use crate::signal::{
    downsample2, energy, levinson_lpc_with_floor, FixedFilters, Frame, LpcModel, LPC_FLOOR, NB_LPC_ORDER, WB_RATE,
};
use crate::sysid::{prony_fit, SignalModel, MAX_POLES, MAX_ZEROS};
use crate::{AbeError, Result};

pub const NB_DIM: usize = NB_LPC_ORDER;
pub const HB_DIM: usize = FIR_LEN;
/// Frames whose wideband mean square is below this are treated as silent.
const SILENCE_MEAN_SQUARE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePair {
    pub nb: Vec<f64>,
    pub hb: Vec<f64>,
    pub g1: f64,
}

impl FeaturePair {
    pub fn new(nb: Vec<f64>, hb: Vec<f64>, g1: f64) -> Result<Self> {
        if nb.len() != NB_DIM || hb.len() != HB_DIM {
            return Err(AbeError::Dimension(format!(
                "feature pair dims ({}, {}), expected ({NB_DIM}, {HB_DIM})",
                nb.len(),
                hb.len()
            )));
        }
        if !(nb.iter().chain(&hb).all(|v| v.is_finite()) && g1.is_finite()) {
            return Err(AbeError::NonFinite("feature pair"));
        }
        Ok(Self { nb, hb, g1 })
    }

    /// Regression target `[hb; g1]`.
    pub fn target(&self) -> Vec<f64> {
        let mut t = self.hb.clone();
        t.push(self.g1);
        t
    }
}

/// Why a frame produced no training sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkipReason {
    Silent,
    DegenerateModel,
    UnstableModel,
    SynthesisFailed,
    NonFinite,
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SkipReason::Silent => "silent",
            SkipReason::DegenerateModel => "degenerate-model",
            SkipReason::UnstableModel => "unstable-model",
            SkipReason::SynthesisFailed => "synthesis-failed",
            SkipReason::NonFinite => "non-finite",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub max_poles: usize,
    pub max_zeros: usize,
    pub lpc_order: usize,
    pub fir_len: usize,
    /// Relative tolerance of the level bisection.
    pub rel_tol: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_poles: MAX_POLES,
            max_zeros: MAX_ZEROS,
            lpc_order: NB_LPC_ORDER,
            fir_len: FIR_LEN,
            rel_tol: 1e-3,
        }
    }
}

/// Everything computed for one analyzed frame.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub pair: FeaturePair,
    pub model: SignalModel,
    pub lpc: LpcModel,
    pub filter: SynthesisFilter,
    /// Achieved closed-loop bound of the synthesized filter.
    pub gamma: f64,
    /// Narrowband frame (8 kHz) the features were computed from.
    pub nb_frame: Vec<f64>,
}

/// `log10(energy(hb) / energy(nb))`.
pub fn gain_g1(hb: &[f64], nb: &[f64]) -> Result<f64> {
    let e_nb = energy(nb);
    if !(e_nb > 0.0) {
        return Err(AbeError::Degenerate("zero narrowband energy".into()));
    }
    let g = (energy(hb) / e_nb).log10();
    if !g.is_finite() {
        return Err(AbeError::NonFinite("gain ratio"));
    }
    Ok(g)
}

/// Narrowband version of a wideband frame: zero-phase LPF then decimation.
pub fn narrowband_of(wb: &[f64], filters: &FixedFilters) -> Vec<f64> {
    downsample2(&filters.lpf.filter(wb))
}

/// High band of a wideband frame: causal HPF advanced by its group delay.
pub fn highband_of(wb: &[f64], filters: &FixedFilters) -> Vec<f64> {
    filters.hpf.filter_advanced(wb, filters.hpf.group_delay())
}

/// Full analysis of one wideband frame, or the reason it was skipped.
pub fn analyze_frame(
    wb_frame: &Frame,
    filters: &FixedFilters,
    cfg: &FeatureConfig,
) -> Result<std::result::Result<FrameAnalysis, SkipReason>> {
    wb_frame.expect_rate(WB_RATE)?;
    let wb = &wb_frame.samples;
    if !wb.iter().all(|v| v.is_finite()) {
        return Ok(Err(SkipReason::NonFinite));
    }
    if !(wb_frame.mean_square() > SILENCE_MEAN_SQUARE) {
        return Ok(Err(SkipReason::Silent));
    }
    let nb = narrowband_of(wb, filters);
    if !(energy(&nb) > 0.0) {
        return Ok(Err(SkipReason::Silent));
    }
    let lpc = levinson_lpc_with_floor(&nb, cfg.lpc_order, LPC_FLOOR)?;
    let model = prony_fit(wb_frame, cfg.max_poles, cfg.max_zeros)?;
    if model.degenerate {
        return Ok(Err(SkipReason::DegenerateModel));
    }
    let plant = match build_generalized_plant(&model, &filters.lpf, &lpc) {
        Ok(p) => p,
        Err(AbeError::Unstable(_)) => return Ok(Err(SkipReason::UnstableModel)),
        Err(e) => return Err(e),
    };
    let solution = match hinf_synthesize(&plant, cfg.rel_tol) {
        Ok(s) => s,
        Err(e) => {
            log::debug!("frame {}: synthesis failed: {e}", wb_frame.index);
            return Ok(Err(SkipReason::SynthesisFailed));
        }
    };
    let k = assemble_synthesis_filter(&solution.controller)?;
    let filter = match extract_highband_filter(&k, &filters.hpf, cfg.fir_len) {
        Ok(f) => f,
        Err(AbeError::Unstable(_)) => return Ok(Err(SkipReason::SynthesisFailed)),
        Err(e) => return Err(e),
    };
    let g1 = gain_g1(&highband_of(wb, filters), &nb)?;
    let pair = match FeaturePair::new(lpc.coeffs.clone(), filter.fir.clone(), g1) {
        Ok(p) => p,
        Err(AbeError::NonFinite(_)) => return Ok(Err(SkipReason::NonFinite)),
        Err(e) => return Err(e),
    };
    Ok(Ok(FrameAnalysis {
        pair,
        model,
        lpc,
        filter,
        gamma: solution.gamma,
        nb_frame: nb,
    }))
}

pub fn extract_feature_pair(
    wb_frame: &Frame,
    filters: &FixedFilters,
) -> Result<std::result::Result<FeaturePair, SkipReason>> {
    Ok(analyze_frame(wb_frame, filters, &FeatureConfig::default())?.map(|a| a.pair))
}
