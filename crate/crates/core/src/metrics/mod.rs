//! Detection metrics (AUROC, maximum F1) and evaluation reports.

mod binary;
mod report;

pub use binary::{auroc, max_f1, MetricBundle};
pub use report::{
    per_layer_report, stratified_report, summarize_runs, EvaluationReport, LayerGroupDelta,
    LayerMetrics, SummaryRow, REPORT_CSV_HEADER,
};

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`
/// and `"nan"`, since JSON has no literal for them.
pub(crate) mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
