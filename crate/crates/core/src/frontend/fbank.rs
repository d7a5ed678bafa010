use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FeatureMatrix, Waveform};
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FbankConfig {
    pub n_mels: usize,
    pub frame_ms: f64,
    pub shift_ms: f64,
    pub fft_size: usize,
    pub low_hz: f64,
    /// Upper mel edge; `None` means Nyquist.
    pub high_hz: Option<f64>,
    /// Per-utterance mean/variance normalization of each dimension.
    pub cmvn: bool,
}

impl Default for FbankConfig {
    fn default() -> Self {
        FbankConfig {
            n_mels: 80,
            frame_ms: 25.0,
            shift_ms: 10.0,
            fft_size: 512,
            low_hz: 0.0,
            high_hz: None,
            cmvn: false,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the `fft_size / 2 + 1` power bins, in the mel domain.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: f64, low_hz: f64, high_hz: f64) -> Vec<Vec<f64>> {
    let n_bins = fft_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
    let step = (hi - lo) / (n_mels + 1) as f64;
    let edges: Vec<f64> = (0..n_mels + 2).map(|i| lo + step * i as f64).collect();
    (0..n_mels)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|b| {
                    let mel = hz_to_mel(b as f64 * sample_rate / fft_size as f64);
                    if mel <= left || mel >= right {
                        0.0
                    } else if mel <= center {
                        (mel - left) / (center - left)
                    } else {
                        (right - mel) / (right - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Log mel filterbank energies of Hamming-windowed frames.
pub fn compute_fbank(wave: &Waveform, config: &FbankConfig) -> Result<FeatureMatrix> {
    if config.n_mels == 0 {
        return Err(Error::invalid("n_mels must be at least 1"));
    }
    let sr = wave.sample_rate as f64;
    let frame_len = (sr * config.frame_ms / 1000.0).round() as usize;
    let shift = (sr * config.shift_ms / 1000.0).round() as usize;
    if frame_len == 0 || shift == 0 {
        return Err(Error::invalid("frame length and shift must cover at least one sample"));
    }
    let n = wave.samples.len();
    if n < frame_len {
        return Err(Error::invalid(format!(
            "waveform of {n} samples is shorter than one {frame_len}-sample frame"
        )));
    }
    let fft_size = config.fft_size.max(frame_len.next_power_of_two());
    let n_frames = (n - frame_len) / shift + 1;
    let window: Vec<f64> = (0..frame_len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (frame_len - 1).max(1) as f64).cos())
        .collect();
    let filters = mel_filterbank(config.n_mels, fft_size, sr, config.low_hz, config.high_hz.unwrap_or(sr / 2.0));
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);

    let mut data = Vec::with_capacity(n_frames * config.n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut power = vec![0.0; fft_size / 2 + 1];
    for t in 0..n_frames {
        let frame = &wave.samples[t * shift..t * shift + frame_len];
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < frame_len { frame[i] * window[i] } else { 0.0 };
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for filt in &filters {
            let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            data.push(e.max(LOG_FLOOR).ln());
        }
    }
    let mut feats = FeatureMatrix::new(n_frames, config.n_mels, data)?;
    feats.frame_length_ms = config.frame_ms;
    feats.frame_shift_ms = config.shift_ms;
    if config.cmvn {
        feats.normalize_mean_variance();
    }
    Ok(feats)
}
