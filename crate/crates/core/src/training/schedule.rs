use crate::error::{Error, Result};

/// `k * d_model^-0.5 * min(n^-0.5, n * warmup^-1.5)`: linear warmup, then
/// inverse square-root decay.
pub fn adam_warmup_lr(n: u64, k: f64, d_model: usize, warmup: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("learning-rate step counts from 1"));
    }
    if !(k > 0.0) || d_model == 0 || warmup == 0 {
        return Err(Error::invalid("k, d_model and warmup must be positive"));
    }
    let n = n as f64;
    let decay = n.powf(-0.5);
    let ramp = n * (warmup as f64).powf(-1.5);
    Ok(k * (d_model as f64).powf(-0.5) * decay.min(ramp))
}
