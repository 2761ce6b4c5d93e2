use std::sync::OnceLock;

use abe_core::features::{analyze_frame, narrowband_of, FeatureConfig, FeaturePair};
use abe_core::hinf::{hinf_norm, hinf_synthesize};
use abe_core::metrics::lsd;
use abe_core::mrss::{build_generalized_plant, closed_loop};
use abe_core::pipeline::{extend_file, Addition, Extension, ExtensionConfig, FilterForm, Mode, OracleSource};
use abe_core::regressor::{train_mlp, RegressorModel, TrainConfig};
use abe_core::signal::{frame_signal, levinson_lpc_with_floor, AudioBuffer, FixedFilters, LPC_FLOOR, NB_LPC_ORDER};
use abe_core::synth::{derive_narrowband, synth_utterance, SynthConfig};
use abe_core::sysid::prony_fit;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Shared {
    filters: FixedFilters,
    wb: AudioBuffer,
    nb: AudioBuffer,
    oracle: OracleSource,
    pairs: Vec<FeaturePair>,
}

fn shared() -> &'static Shared {
    static S: OnceLock<Shared> = OnceLock::new();
    S.get_or_init(|| {
        let filters = FixedFilters::default();
        let cfg = SynthConfig {
            duration_s: 0.25,
            ..Default::default()
        };
        let wb = synth_utterance(&mut ChaCha8Rng::seed_from_u64(31), &cfg).unwrap();
        let nb = derive_narrowband(&wb, &filters).unwrap();
        let features = FeatureConfig::default();
        let oracle = OracleSource::from_wideband(&wb, &filters, &features).unwrap();
        let pairs = frame_signal(&wb)
            .unwrap()
            .iter()
            .filter_map(|f| analyze_frame(f, &filters, &features).unwrap().ok().map(|a| a.pair))
            .collect();
        Shared {
            filters,
            wb,
            nb,
            oracle,
            pairs,
        }
    })
}

fn config(filter_form: FilterForm, addition: Addition, gain_adjust: bool) -> ExtensionConfig {
    ExtensionConfig {
        mode: Mode::Oracle,
        filter_form,
        addition,
        gain_adjust,
        ..Default::default()
    }
}

#[test]
fn oracle_extension_beats_narrowband_only() {
    let s = shared();
    assert!(s.oracle.frames.iter().filter(|f| f.is_some()).count() > s.oracle.frames.len() / 2);
    let nb_only = extend_file(&s.nb, Extension::NbOnly, &ExtensionConfig::default(), &s.filters).unwrap();
    let base = lsd(&s.wb, &nb_only).unwrap();
    for form in [FilterForm::Iir, FilterForm::Fir] {
        for addition in [Addition::Dft, Addition::Time] {
            let out = extend_file(&s.nb, Extension::Estimated(&s.oracle), &config(form, addition, true), &s.filters).unwrap();
            assert_eq!(out.len(), 2 * s.nb.len());
            let d = lsd(&s.wb, &out).unwrap();
            assert!(d < base, "{form:?}/{addition:?}: {d} vs NB-only {base}");
        }
    }
}

#[test]
fn fold_fills_the_high_band() {
    let s = shared();
    let cfg = ExtensionConfig::default();
    let fold = extend_file(&s.nb, Extension::Fold, &cfg, &s.filters).unwrap();
    let nb_only = extend_file(&s.nb, Extension::NbOnly, &cfg, &s.filters).unwrap();
    let hb_energy = |x: &AudioBuffer| -> f64 {
        let hb = abe_core::features::highband_of(x.samples(), &s.filters);
        hb.iter().map(|v| v * v).sum()
    };
    assert!(hb_energy(&fold) > 10.0 * hb_energy(&nb_only));
}

#[test]
fn regressor_survives_serialization() {
    let s = shared();
    let cfg = TrainConfig {
        hidden_layers: 2,
        hidden_units: 16,
        batch_size: 8,
        epochs: 5,
        ..Default::default()
    };
    let model = train_mlp(&s.pairs, &cfg).unwrap();
    let text = serde_json::to_string(&model).unwrap();
    let back: RegressorModel = serde_json::from_str(&text).unwrap();
    back.validate().unwrap();
    assert_eq!(back, model);
    let ext = ExtensionConfig::default();
    let a = extend_file(&s.nb, Extension::Estimated(&model), &ext, &s.filters).unwrap();
    let b = extend_file(&s.nb, Extension::Estimated(&back), &ext, &s.filters).unwrap();
    assert_eq!(a, b);
    assert!(a.samples().iter().all(|v| v.is_finite()));
}

#[test]
fn speech_frame_controllers_meet_their_level() {
    let s = shared();
    let frames = frame_signal(&s.wb).unwrap();
    let mut checked = 0;
    for f in frames.iter().step_by(5) {
        let model = prony_fit(f, 16, 8).unwrap();
        if model.degenerate {
            continue;
        }
        let nb = narrowband_of(&f.samples, &s.filters);
        let lpc = levinson_lpc_with_floor(&nb, NB_LPC_ORDER, LPC_FLOOR).unwrap();
        let plant = build_generalized_plant(&model, &s.filters.lpf, &lpc).unwrap();
        let sol = hinf_synthesize(&plant, 1e-3).unwrap();
        let achieved = hinf_norm(&closed_loop(&plant, &sol.controller).unwrap(), 1e-6).unwrap();
        let open = hinf_norm(&plant.p11(), 1e-9).unwrap();
        assert!(achieved <= sol.gamma * 1.001, "frame {}: {achieved} > {}", f.index, sol.gamma);
        assert!(sol.gamma <= open, "frame {}: {} > {open}", f.index, sol.gamma);
        checked += 1;
    }
    assert!(checked >= 2);
}

#[test]
fn frame_analysis_is_repeatable() {
    let s = shared();
    let frame = &frame_signal(&s.wb).unwrap()[3];
    let cfg = FeatureConfig::default();
    let a = analyze_frame(frame, &s.filters, &cfg).unwrap().unwrap();
    let b = analyze_frame(frame, &s.filters, &cfg).unwrap().unwrap();
    assert_eq!(a.pair, b.pair);
    assert_eq!(a.filter.fir, b.filter.fir);
}
