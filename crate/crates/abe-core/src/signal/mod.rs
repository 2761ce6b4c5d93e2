//! Framing, fixed filters, 2:1 rate conversion and linear prediction.

mod audio;
mod filters;
mod lpc;
mod resample;

pub use audio::{frame_signal, frame_length, overlap_add, AudioBuffer, Frame, NB_RATE, WB_RATE};
pub use filters::{design_fixed_filters, FirFilter, FixedFilters, HPF_LEN, LPF_LEN};
pub use lpc::{autocorrelation, inverse_filter, levinson_lpc, levinson_lpc_with_floor, LpcModel, LPC_FLOOR, NB_LPC_ORDER};
pub use resample::{downsample2, resample2, upsample2, Direction};

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn frames_sum_to_twice_the_interior(x in prop::collection::vec(-1.0f64..1.0, 1..2000)) {
            let buf = AudioBuffer::new(x.clone(), NB_RATE).unwrap();
            let frames = frame_signal(&buf).unwrap();
            let mut acc = vec![0.0; x.len() + 400];
            for f in &frames {
                for (k, v) in f.samples.iter().enumerate() {
                    acc[f.start + k] += v;
                }
            }
            let hop = frames[0].hop;
            let covered = frames.last().unwrap().start + frames[0].len();
            for n in hop..x.len().min(covered - hop) {
                prop_assert!((acc[n] - 2.0 * x[n]).abs() < 1e-12);
            }
        }

        #[test]
        fn down_after_up_is_identity(x in prop::collection::vec(-1.0f64..1.0, 0..300)) {
            let buf = AudioBuffer::new(x, NB_RATE).unwrap();
            let up = resample2(&buf, Direction::Up).unwrap();
            prop_assert_eq!(resample2(&up, Direction::Down).unwrap(), buf);
        }

        #[test]
        fn zero_phase_lpf_commutes_with_time_reversal(x in prop::collection::vec(-1.0f64..1.0, 1..300)) {
            let lpf = FixedFilters::default().lpf;
            let mut a = lpf.filter(&x);
            a.reverse();
            let mut xr = x.clone();
            xr.reverse();
            let b = lpf.filter(&xr);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
