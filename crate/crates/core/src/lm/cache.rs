//! Soft-label cache, little-endian: `b"LSTL"`, `u32` K, `u32` n_sentences,
//! then per sentence a `u32` length followed by `length * K` `f32` values.

use std::path::Path;

use super::{soft_labels, RecurrentLM};
use crate::corpus::text::{read_bytes, write_bytes};
use crate::corpus::TokenSeq;
use crate::error::{Error, Result};
use crate::numerics::LabelDistribution;

pub const SOFT_LABEL_MAGIC: &[u8; 4] = b"LSTL";

/// Teacher distributions for every sentence, optionally cut to the `top_m`
/// most likely tokens and renormalized.
pub fn precompute_soft_labels(
    teacher: &RecurrentLM,
    corpus: &[TokenSeq],
    temperature: f64,
    top_m: Option<usize>,
) -> Result<Vec<Vec<LabelDistribution>>> {
    corpus
        .iter()
        .map(|s| {
            let labels = soft_labels(teacher, s, temperature)?;
            Ok(match top_m {
                Some(m) => labels.iter().map(|d| d.truncated_top(m)).collect(),
                None => labels,
            })
        })
        .collect()
}

pub fn write_soft_labels(path: &Path, k: usize, labels: &[Vec<LabelDistribution>]) -> Result<()> {
    let values: usize = labels.iter().map(|s| s.len() * k).sum();
    let mut bytes = Vec::with_capacity(12 + 4 * labels.len() + 4 * values);
    bytes.extend_from_slice(SOFT_LABEL_MAGIC);
    bytes.extend_from_slice(&(k as u32).to_le_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for sent in labels {
        bytes.extend_from_slice(&(sent.len() as u32).to_le_bytes());
        for d in sent {
            if d.len() != k {
                return Err(Error::invalid(format!("distribution of size {} in a K={k} cache", d.len())));
            }
            for &p in d.probs() {
                bytes.extend_from_slice(&(p as f32).to_le_bytes());
            }
        }
    }
    write_bytes(path, &bytes)
}

/// Reads a cache back; each distribution is renormalized in double precision.
pub fn read_soft_labels(path: &Path) -> Result<(usize, Vec<Vec<LabelDistribution>>)> {
    let bytes = read_bytes(path)?;
    let bad = |reason: &str| Error::format("soft-label cache", format!("{}: {reason}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != SOFT_LABEL_MAGIC {
        return Err(bad("missing LSTL header"));
    }
    let word = |at: usize| -> Result<usize> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| bad("truncated"))
    };
    let k = word(4)?;
    let n = word(8)?;
    if k == 0 {
        return Err(bad("K is zero"));
    }
    let mut pos = 12;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = word(pos)?;
        pos += 4;
        let end = pos + len * k * 4;
        let payload = bytes.get(pos..end).ok_or_else(|| bad("truncated"))?;
        let sent = payload
            .chunks_exact(k * 4)
            .map(|row| {
                let w = row
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect();
                LabelDistribution::normalized(w).map_err(|e| bad(&e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(sent);
        pos = end;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((k, out))
}
