//! Browser bindings for three small views of the library: teacher soft
//! labels under temperature and interpolation, the warmup learning-rate
//! schedule, and the character alignment behind CER.

use wasm_bindgen::prelude::*;

use lst_core::decoding::{align, EditOp};
use lst_core::numerics::softmax_with_temperature;
use lst_core::training::{adam_warmup_lr, interpolate};

/// Teacher distribution at `temperature`, followed by the training target
/// `lambda * one_hot(truth) + (1 - lambda) * teacher`; `2 * K` values.
pub fn soft_targets(logits: &[f64], truth: usize, lambda: f64, temperature: f64) -> Result<Vec<f64>, String> {
    let teacher = softmax_with_temperature(logits, temperature).map_err(|e| e.to_string())?;
    let target = interpolate(truth, &teacher, lambda).map_err(|e| e.to_string())?;
    let mut out = teacher.into_probs();
    out.extend_from_slice(target.probs());
    Ok(out)
}

/// Learning rate at steps `1..=steps`.
pub fn warmup_schedule(k: f64, d_model: usize, warmup: u64, steps: u64) -> Result<Vec<f64>, String> {
    (1..=steps).map(|n| adam_warmup_lr(n, k, d_model, warmup).map_err(|e| e.to_string())).collect()
}

/// Alignment of two strings (whitespace ignored), one `op<TAB>ref<TAB>hyp`
/// line per step, then `S D I N CER%`.
pub fn cer_alignment(reference: &str, hypothesis: &str) -> Result<String, String> {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    if r.is_empty() {
        return Err("reference is empty".into());
    }
    let (mut s, mut d, mut i) = (0, 0, 0);
    let mut out = String::new();
    for op in align(&r, &h) {
        let line = match op {
            EditOp::Match(a, b) => format!("=\t{}\t{}", r[a], h[b]),
            EditOp::Substitute(a, b) => {
                s += 1;
                format!("S\t{}\t{}", r[a], h[b])
            }
            EditOp::Delete(a) => {
                d += 1;
                format!("D\t{}\t", r[a])
            }
            EditOp::Insert(b) => {
                i += 1;
                format!("I\t\t{}", h[b])
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    let rate = 100.0 * (s + d + i) as f64 / r.len() as f64;
    out.push_str(&format!("{s} {d} {i} {} {rate:.2}", r.len()));
    Ok(out)
}

#[wasm_bindgen(js_name = softTargets)]
pub fn soft_targets_js(logits: Vec<f64>, truth: usize, lambda: f64, temperature: f64) -> Result<Vec<f64>, JsValue> {
    soft_targets(&logits, truth, lambda, temperature).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = warmupSchedule)]
pub fn warmup_schedule_js(k: f64, d_model: usize, warmup: u32, steps: u32) -> Result<Vec<f64>, JsValue> {
    warmup_schedule(k, d_model, warmup.into(), steps.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = cerAlignment)]
pub fn cer_alignment_js(reference: &str, hypothesis: &str) -> Result<String, JsValue> {
    cer_alignment(reference, hypothesis).map_err(|e| JsValue::from_str(&e))
}
