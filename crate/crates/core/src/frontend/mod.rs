//! Acoustic features: log-mel filterbanks, frame splicing and subsampling,
//! audio/feature file formats, and the synthetic speech task.

mod fbank;
mod io;
mod synth;

pub use fbank::{compute_fbank, hz_to_mel, mel_filterbank, mel_to_hz, FbankConfig, LOG_FLOOR};
pub use io::{read_feature_cache, read_wav, write_feature_cache, write_wav, FEATURE_MAGIC};
pub use synth::{synth_dataset, synth_text, synth_utterances, Domain, SynthGrammar, SynthTask};

use crate::corpus::TokenSeq;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("non-finite sample"));
        }
        Ok(Waveform { samples, sample_rate })
    }
}

/// `rows x dim` frames, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    pub frame_shift_ms: f64,
    pub frame_length_ms: f64,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 || rows * dim != data.len() {
            return Err(Error::invalid(format!(
                "feature matrix {rows}x{dim} from {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(FeatureMatrix {
            rows,
            dim,
            data,
            frame_shift_ms: 10.0,
            frame_length_ms: 25.0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.rows, self.dim, self.data.clone())
    }

    pub(crate) fn normalize_mean_variance(&mut self) {
        for d in 0..self.dim {
            let col = (0..self.rows).map(|r| self.data[r * self.dim + d]);
            let mean = col.clone().sum::<f64>() / self.rows as f64;
            let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / self.rows as f64;
            let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
            for r in 0..self.rows {
                let v = &mut self.data[r * self.dim + d];
                *v = (*v - mean) * scale;
            }
        }
    }
}

/// Stacks each frame with `left_context` preceding frames (oldest first),
/// then keeps every `factor`-th stacked frame starting at 0. Frames before
/// the start are copies of frame 0.
pub fn splice_subsample(f: &FeatureMatrix, left_context: usize, factor: usize) -> FeatureMatrix {
    assert!(factor >= 1, "subsampling factor must be at least 1");
    let dim = f.dim * (left_context + 1);
    let kept: Vec<usize> = (0..f.rows).step_by(factor).collect();
    let mut data = Vec::with_capacity(kept.len() * dim);
    for &t in &kept {
        for back in (0..=left_context).rev() {
            data.extend_from_slice(f.row(t.saturating_sub(back)));
        }
    }
    FeatureMatrix {
        rows: kept.len(),
        dim,
        data,
        frame_shift_ms: f.frame_shift_ms * factor as f64,
        frame_length_ms: f.frame_length_ms,
    }
}

/// One speech example: network-ready features and its `<sos> ... <eos>` transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: FeatureMatrix,
    pub tokens: TokenSeq,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(rows: usize, dim: usize) -> FeatureMatrix {
        FeatureMatrix::new(rows, dim, (0..rows * dim).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn single_frame_is_replicated() {
        let f = ramp(1, 80);
        let s = splice_subsample(&f, 3, 3);
        assert_eq!((s.rows(), s.dim()), (1, 320));
        for b in 0..4 {
            assert_eq!(&s.row(0)[b * 80..(b + 1) * 80], f.row(0));
        }
    }

    #[test]
    fn subsample_indices() {
        let s = splice_subsample(&ramp(6, 80), 3, 3);
        assert_eq!(s.rows(), 2);
    }

    #[test]
    fn retained_row_matches_brute_force_splice() {
        let f = FeatureMatrix::new(5, 80, (0..400).map(|i| ((i * 37) % 101) as f64 * 0.1).collect()).unwrap();
        let s = splice_subsample(&f, 3, 3);
        let expect: Vec<f64> = [0, 1, 2, 3].iter().flat_map(|&t| f.row(t).to_vec()).collect();
        assert_eq!(s.row(1), &expect[..]);
    }

    proptest! {
        #[test]
        fn splice_only_copies_values(rows in 1usize..20, dim in 1usize..6, left in 0usize..5, factor in 1usize..5) {
            let f = ramp(rows, dim);
            let s = splice_subsample(&f, left, factor);
            prop_assert_eq!(s.rows(), rows.div_ceil(factor));
            prop_assert_eq!(s.dim(), dim * (left + 1));
            prop_assert!(s.data().iter().all(|v| f.data().contains(v)));
        }
    }
}
