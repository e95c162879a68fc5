//! Browser bindings for the interactive page in `www/`.
//!
//! Every export takes plain numbers or strings and returns a JSON string.
//! The `*_json` functions carry the logic and run natively; the
//! `#[wasm_bindgen]` wrappers only convert errors to JS values.

use latent_scan::demo::shift_sweep;
use latent_scan::ita::{categorize_ita, ita_from_means, srgb_to_lab};
use latent_scan::scan::{prefix_curve, scan_pvalues};
use latent_scan::Statistic;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Upper bound on samples per class in [`shift_sweep_json`].
pub const MAX_SWEEP_SAMPLES: usize = 2000;

fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: `{t}`")))
        .collect()
}

/// Prefix curve and best subset of a list of p-values.
pub fn prefix_scan_json(pvalues: &str, alpha_max: f64, statistic: &str) -> Result<String, String> {
    let stat: Statistic = statistic.parse().map_err(|e: latent_scan::Error| e.to_string())?;
    if !(alpha_max > 0.0 && alpha_max <= 1.0) {
        return Err(format!("alpha_max must lie in (0, 1], got {alpha_max}"));
    }
    let p = parse_numbers(pvalues)?;
    if let Some(bad) = p.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(format!("p-values must lie in (0, 1], got {bad}"));
    }
    let curve = prefix_curve(&p, alpha_max, stat);
    let best = scan_pvalues(&p, alpha_max, stat);
    Ok(json!({ "curve": curve, "best": best }).to_string())
}

/// Lab coordinates, ITA and skin tone category of one sRGB colour.
pub fn ita_json(r: u8, g: u8, b: u8) -> String {
    let (l, a, b_star) = srgb_to_lab(r, g, b);
    let ita = ita_from_means(l, b_star);
    json!({
        "l": l,
        "a": a,
        "b": b_star,
        "ita": ita,
        "category": categorize_ita(ita).as_str(),
    })
    .to_string()
}

/// Subset-scan and softmax AUROC of the synthetic problem at each shift.
pub fn shift_sweep_json(seed: u64, shifts: &str, samples: usize) -> Result<String, String> {
    if samples == 0 || samples > MAX_SWEEP_SAMPLES {
        return Err(format!("samples must lie in 1..={MAX_SWEEP_SAMPLES}, got {samples}"));
    }
    let shifts = parse_numbers(shifts)?;
    let rows = shift_sweep(seed, &shifts, samples).map_err(|e| e.to_string())?;
    let rows: Vec<_> = rows
        .into_iter()
        .map(|(shift, ss, softmax)| json!({ "shift": shift, "subset_scan": ss, "softmax": softmax }))
        .collect();
    Ok(serde_json::Value::from(rows).to_string())
}

#[wasm_bindgen(js_name = prefixScan)]
pub fn prefix_scan(pvalues: &str, alpha_max: f64, statistic: &str) -> Result<String, JsValue> {
    prefix_scan_json(pvalues, alpha_max, statistic).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = itaFromRgb)]
pub fn ita_from_rgb(r: u8, g: u8, b: u8) -> String {
    ita_json(r, g, b)
}

#[wasm_bindgen(js_name = shiftSweep)]
pub fn shift_sweep_js(seed: u32, shifts: &str, samples: u32) -> Result<String, JsValue> {
    shift_sweep_json(u64::from(seed), shifts, samples as usize).map_err(|e| JsValue::from_str(&e))
}
