use crate::{AbeError, Result};

pub const WB_RATE: u32 = 16_000;
pub const NB_RATE: u32 = 8_000;

/// Mono audio at 8 or 16 kHz, amplitudes nominally in [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, rate: u32) -> Result<Self> {
        if rate != WB_RATE && rate != NB_RATE {
            return Err(AbeError::UnsupportedRate(rate));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(AbeError::NonFinite("audio samples"));
        }
        Ok(Self { samples, rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn expect_rate(&self, expected: u32) -> Result<()> {
        if self.rate != expected {
            return Err(AbeError::RateMismatch {
                expected,
                got: self.rate,
            });
        }
        Ok(())
    }
}

/// One analysis segment. `start` is the offset of `samples[0]` in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub samples: Vec<f64>,
    pub rate: u32,
    pub index: usize,
    pub hop: usize,
    pub start: usize,
}

impl Frame {
    /// A stand-alone frame (index 0, no source signal).
    pub fn from_samples(samples: Vec<f64>, rate: u32) -> Self {
        let hop = samples.len() / 2;
        Self {
            samples,
            rate,
            index: 0,
            hop,
            start: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        super::energy(&self.samples)
    }

    pub fn expect_rate(&self, expected: u32) -> Result<()> {
        if self.rate != expected {
            return Err(AbeError::RateMismatch {
                expected,
                got: self.rate,
            });
        }
        Ok(())
    }

    pub fn mean_square(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }
}

/// 25 ms at the given rate: 400 samples at 16 kHz, 200 at 8 kHz.
pub fn frame_length(rate: u32) -> usize {
    (0.025 * rate as f64).round() as usize
}

/// Splits into 25 ms rectangular frames with 50% overlap. The last frame
/// reaches past the end when needed and is zero-padded, so every input
/// sample lies in at least one frame.
pub fn frame_signal(buf: &AudioBuffer) -> Result<Vec<Frame>> {
    if buf.is_empty() {
        return Err(AbeError::Empty("audio buffer"));
    }
    let len = frame_length(buf.rate());
    let hop = len / 2;
    let n = buf.len();
    let count = if n <= len { 1 } else { (n - len).div_ceil(hop) + 1 };
    let frames = (0..count)
        .map(|i| {
            let start = i * hop;
            let mut samples = vec![0.0; len];
            let end = (start + len).min(n);
            samples[..end - start].copy_from_slice(&buf.samples()[start..end]);
            Frame {
                samples,
                rate: buf.rate(),
                index: i,
                hop,
                start,
            }
        })
        .collect();
    Ok(frames)
}

/// Overlap-adds frame-aligned segments (segment `i` starts at `i * hop`),
/// dividing each output sample by the number of segments covering it.
pub fn overlap_add(segments: &[Vec<f64>], hop: usize, out_len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; out_len];
    let mut cover = vec![0u32; out_len];
    for (i, seg) in segments.iter().enumerate() {
        let start = i * hop;
        for (k, v) in seg.iter().enumerate() {
            let t = start + k;
            if t >= out_len {
                break;
            }
            acc[t] += v;
            cover[t] += 1;
        }
    }
    acc.iter()
        .zip(&cover)
        .map(|(a, &c)| if c > 0 { a / c as f64 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(n: usize, rate: u32) -> AudioBuffer {
        AudioBuffer::new((0..n).map(|i| (i as f64 * 0.01).sin()).collect(), rate).unwrap()
    }

    #[test]
    fn frame_geometry_at_16k() {
        assert_eq!(frame_length(16_000), 400);
        let frames = frame_signal(&buf(400, 16_000)).unwrap();
        assert_eq!(frames.len(), 1);
        let frames = frame_signal(&buf(800, 16_000)).unwrap();
        assert_eq!(frames.len(), 3);
        let starts: Vec<usize> = frames.iter().map(|f| f.start).collect();
        assert_eq!(starts, vec![0, 200, 400]);
        assert!(frames.iter().all(|f| f.len() == 400 && f.hop == 200));
    }

    #[test]
    fn trailing_partial_frame_is_zero_padded() {
        let b = buf(900, 16_000);
        let frames = frame_signal(&b).unwrap();
        assert_eq!(frames.len(), 4);
        let last = frames.last().unwrap();
        assert_eq!(last.start, 600);
        assert_eq!(&last.samples[..300], &b.samples()[600..900]);
        assert!(last.samples[300..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_signal_gives_one_padded_frame() {
        let frames = frame_signal(&buf(10, 8_000)).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].len(), 200);
    }

    #[test]
    fn empty_buffer_is_rejected() {
        let b = AudioBuffer::new(vec![], 16_000).unwrap();
        assert!(frame_signal(&b).is_err());
    }

    #[test]
    fn invalid_rate_and_nan_rejected() {
        assert!(AudioBuffer::new(vec![0.0], 44_100).is_err());
        assert!(AudioBuffer::new(vec![f64::NAN], 8_000).is_err());
    }

    #[test]
    fn overlap_add_of_frames_reconstructs() {
        let b = buf(1000, 16_000);
        let frames = frame_signal(&b).unwrap();
        let segs: Vec<Vec<f64>> = frames.iter().map(|f| f.samples.clone()).collect();
        let y = overlap_add(&segs, 200, 1000);
        for (a, c) in y.iter().zip(b.samples()) {
            assert!((a - c).abs() < 1e-15);
        }
    }
}
