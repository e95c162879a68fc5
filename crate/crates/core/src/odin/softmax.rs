/// Softmax of `logits / tau`, shifted by the maximum logit for stability.
pub fn temperature_softmax(logits: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau > 0.0);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Maximum softmax probability; low values suggest an OOD input.
pub fn softmax_score(probs: &[f64]) -> f64 {
    probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_logits_are_uniform() {
        for tau in [0.1, 1.0, 7.0] {
            assert_eq!(temperature_softmax(&[0.0, 0.0], tau), [0.5, 0.5]);
        }
    }

    #[test]
    fn ln2_logit() {
        let p = temperature_softmax(&[2f64.ln(), 0.0], 1.0);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn large_temperature_flattens() {
        let p = temperature_softmax(&[5.0, -3.0, 12.0, 0.0], 1e6);
        assert!(p.iter().all(|&q| (q - 0.25).abs() < 1e-5));
    }

    #[test]
    fn huge_logits_stay_finite() {
        let p = temperature_softmax(&[1000.0, 999.0], 1.0);
        assert!(p.iter().all(|q| q.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scores() {
        assert_eq!(softmax_score(&[0.7, 0.2, 0.1]), 0.7);
        assert!((softmax_score(&[1.0 / 7.0; 7]) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(softmax_score(&[0.0, 1.0, 0.0]), 1.0);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
