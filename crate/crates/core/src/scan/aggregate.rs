use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ltss::ScanResult;
use crate::error::{Error, Result};

/// How per-layer scores combine into one score per sample.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Aggregation {
    #[default]
    Sum,
    Layer(String),
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregation::Sum => f.write_str("sum"),
            Aggregation::Layer(name) => write!(f, "layer:{name}"),
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sum" | "sum_all" => Ok(Aggregation::Sum),
            other => match other.strip_prefix("layer:") {
                Some(name) if !name.is_empty() => Ok(Aggregation::Layer(name.to_owned())),
                _ => Err(Error::InvalidArgument(format!(
                    "aggregation must be `sum` or `layer:<name>`, got `{s}`"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub sample_id: String,
    pub aggregate_score: f64,
    pub is_ood: Option<bool>,
    pub group: Option<String>,
}

/// Aggregated anomaly scores, one record per unique sample id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionTable {
    records: Vec<DetectionRecord>,
}

impl DetectionTable {
    pub fn new(records: Vec<DetectionRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::SampleMismatch(format!("duplicate sample id `{}`", r.sample_id)));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[DetectionRecord] {
        &self.records
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.aggregate_score).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Attaches ground-truth labels. Every sample must have one.
    pub fn with_labels(mut self, labels: &HashMap<String, bool>) -> Result<Self> {
        for r in &mut self.records {
            let label = labels
                .get(&r.sample_id)
                .ok_or_else(|| Error::SampleMismatch(format!("no label for sample `{}`", r.sample_id)))?;
            r.is_ood = Some(*label);
        }
        Ok(self)
    }

    /// Attaches groups where known; samples absent from `groups` keep theirs.
    pub fn with_groups(mut self, groups: &HashMap<String, String>) -> Self {
        for r in &mut self.records {
            if let Some(g) = groups.get(&r.sample_id) {
                r.group = Some(g.clone());
            }
        }
        self
    }
}

/// Combines per-layer scan results into a detection table.
pub fn aggregate_scores(results: &[ScanResult], mode: &Aggregation) -> Result<DetectionTable> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidArgument("no scan results to aggregate".to_owned()))?;
    let ids: Vec<&str> = first.records.iter().map(|r| r.sample_id.as_str()).collect();

    // index of each sample id in every other layer, to tolerate differing row order
    let mut lookups = Vec::with_capacity(results.len());
    for res in results {
        let map: HashMap<&str, f64> = res
            .records
            .iter()
            .map(|r| (r.sample_id.as_str(), r.subset.score))
            .collect();
        if map.len() != ids.len() || ids.iter().any(|id| !map.contains_key(id)) {
            return Err(Error::SampleMismatch(format!(
                "layer `{}` covers a different sample set than layer `{}`",
                res.layer_name, first.layer_name
            )));
        }
        lookups.push((res.layer_name.as_str(), map));
    }

    let scores: Vec<f64> = match mode {
        Aggregation::Sum => ids
            .iter()
            .map(|id| lookups.iter().map(|(_, m)| m[id]).sum())
            .collect(),
        Aggregation::Layer(name) => {
            let (_, map) = lookups.iter().find(|(l, _)| l == name).ok_or_else(|| {
                Error::UnknownLayer {
                    requested: name.clone(),
                    available: results.iter().map(|r| r.layer_name.clone()).collect(),
                }
            })?;
            ids.iter().map(|id| map[id]).collect()
        }
    };

    DetectionTable::new(
        ids.iter()
            .zip(scores)
            .map(|(id, s)| DetectionRecord {
                sample_id: (*id).to_owned(),
                aggregate_score: s,
                is_ood: None,
                group: None,
            })
            .collect(),
    )
}

/// Flags samples whose aggregate score strictly exceeds `threshold`.
pub fn threshold_detect(table: &DetectionTable, threshold: f64) -> Vec<bool> {
    table.records.iter().map(|r| r.aggregate_score > threshold).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::ltss::{SampleScan, SubsetScore};

    fn result(layer: &str, scores: &[(&str, f64)]) -> ScanResult {
        ScanResult {
            layer_name: layer.to_owned(),
            records: scores
                .iter()
                .map(|&(id, s)| SampleScan {
                    sample_id: id.to_owned(),
                    subset: SubsetScore {
                        score: s,
                        k_star: 1,
                        alpha_star: 0.1,
                        node_indices: vec![0],
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn sum_and_single_layer() {
        let l1 = result("conv_1", &[("a", 1.0), ("b", 2.0)]);
        let l2 = result("softmax", &[("b", 0.0), ("a", 0.5)]);
        let both = [l1, l2];
        let sum = aggregate_scores(&both, &Aggregation::Sum).unwrap();
        assert_eq!(sum.scores(), [1.5, 2.0]);
        let single = aggregate_scores(&both, &Aggregation::Layer("softmax".into())).unwrap();
        assert_eq!(single.scores(), [0.5, 0.0]);
        assert!(matches!(
            aggregate_scores(&both, &Aggregation::Layer("gp".into())),
            Err(Error::UnknownLayer { .. })
        ));
    }

    #[test]
    fn disjoint_ids_rejected() {
        let l1 = result("x", &[("a", 1.0)]);
        let l2 = result("y", &[("b", 1.0)]);
        assert!(matches!(
            aggregate_scores(&[l1, l2], &Aggregation::Sum),
            Err(Error::SampleMismatch(_))
        ));
    }

    #[test]
    fn thresholding_is_strict() {
        let t = aggregate_scores(&[result("x", &[("a", 1.0), ("b", 2.0), ("c", 3.0)])], &Aggregation::Sum)
            .unwrap();
        assert_eq!(threshold_detect(&t, 2.0), [false, false, true]);
        assert_eq!(threshold_detect(&t, 0.0), [true, true, true]);
        assert_eq!(threshold_detect(&t, 3.0), [false, false, false]);
    }

    #[test]
    fn parse_aggregation() {
        assert_eq!("sum".parse::<Aggregation>().unwrap(), Aggregation::Sum);
        assert_eq!(
            "layer:conv_3".parse::<Aggregation>().unwrap(),
            Aggregation::Layer("conv_3".into())
        );
        assert!("layer:".parse::<Aggregation>().is_err());
        assert!("mean".parse::<Aggregation>().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let rec = DetectionRecord {
            sample_id: "a".into(),
            aggregate_score: 0.0,
            is_ood: None,
            group: None,
        };
        assert!(DetectionTable::new(vec![rec.clone(), rec]).is_err());
    }
}
