use super::{AudioBuffer, NB_RATE, WB_RATE};
use crate::{AbeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

/// Keeps even-index samples. No anti-alias filtering.
pub fn downsample2(x: &[f64]) -> Vec<f64> {
    x.iter().step_by(2).copied().collect()
}

/// Inserts a zero after every sample.
pub fn upsample2(x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; 2 * x.len()];
    for (i, v) in x.iter().enumerate() {
        y[2 * i] = *v;
    }
    y
}

pub fn resample2(buf: &AudioBuffer, direction: Direction) -> Result<AudioBuffer> {
    match direction {
        Direction::Down => {
            if buf.rate() != WB_RATE {
                return Err(AbeError::RateMismatch {
                    expected: WB_RATE,
                    got: buf.rate(),
                });
            }
            AudioBuffer::new(downsample2(buf.samples()), NB_RATE)
        }
        Direction::Up => {
            if buf.rate() != NB_RATE {
                return Err(AbeError::RateMismatch {
                    expected: NB_RATE,
                    got: buf.rate(),
                });
            }
            AudioBuffer::new(upsample2(buf.samples()), WB_RATE)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_insertion_and_decimation() {
        let up = AudioBuffer::new(vec![1.0, 2.0], NB_RATE).unwrap();
        let u = resample2(&up, Direction::Up).unwrap();
        assert_eq!(u.samples(), &[1.0, 0.0, 2.0, 0.0]);
        assert_eq!(u.rate(), WB_RATE);
        let d = resample2(&u, Direction::Down).unwrap();
        assert_eq!(d.samples(), &[1.0, 2.0]);

        let wb = AudioBuffer::new(vec![1.0, 2.0, 3.0, 4.0], WB_RATE).unwrap();
        assert_eq!(resample2(&wb, Direction::Down).unwrap().samples(), &[1.0, 3.0]);
    }

    #[test]
    fn wrong_rate_is_an_error() {
        let wb = AudioBuffer::new(vec![1.0], WB_RATE).unwrap();
        assert!(resample2(&wb, Direction::Up).is_err());
        let nb = AudioBuffer::new(vec![1.0], NB_RATE).unwrap();
        assert!(resample2(&nb, Direction::Down).is_err());
    }
}
