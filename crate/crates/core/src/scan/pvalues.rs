//! Empirical p-values of evaluation activations against a background set.
//!
//! For node `j` and evaluation sample `i`,
//! `p_ij = (#{z : A_zj >= A_ij} + 1) / (M + 1)` where `M` is the number of
//! background samples. Larger activations get smaller p-values.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor_io::LayerActivations;

/// Per-node sorted background columns, built once per layer and shared
/// read-only between scans.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    layer_name: String,
    sample_count: usize,
    sorted_columns: Vec<Vec<f64>>,
}

impl BackgroundModel {
    pub fn new(background: &LayerActivations) -> Self {
        let sorted_columns = (0..background.cols())
            .map(|j| {
                let mut col = background.column(j);
                col.sort_by(f64::total_cmp);
                col
            })
            .collect();
        Self {
            layer_name: background.name().to_owned(),
            sample_count: background.rows(),
            sorted_columns,
        }
    }

    pub fn layer_name(&self) -> &str {
        &self.layer_name
    }

    /// Number of background samples `M`.
    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn node_count(&self) -> usize {
        self.sorted_columns.len()
    }

    /// Number of background values in column `node` that are `>= value`.
    pub fn count_at_least(&self, node: usize, value: f64) -> usize {
        let col = &self.sorted_columns[node];
        col.len() - col.partition_point(|&b| b < value)
    }

    /// p-values of `evaluation` against this background.
    pub fn pvalues(&self, evaluation: &LayerActivations) -> Result<PValueMatrix> {
        if evaluation.cols() != self.node_count() {
            return Err(Error::Shape(format!(
                "layer `{}`: background has {} nodes, evaluation has {}",
                self.layer_name,
                self.node_count(),
                evaluation.cols()
            )));
        }
        let cols = evaluation.cols();
        let rows: Vec<Vec<u32>> = par::map_range(evaluation.rows(), |i| {
            (0..cols)
                .map(|j| (self.count_at_least(j, evaluation.get(i, j)) + 1) as u32)
                .collect()
        });
        Ok(PValueMatrix {
            layer_name: evaluation.name().to_owned(),
            rows: evaluation.rows(),
            cols,
            background_count: self.sample_count,
            numerators: rows.into_iter().flatten().collect(),
        })
    }
}

/// Empirical p-values for one layer, stored as integer numerators over
/// `M + 1` so every value sits exactly on the grid `{1/(M+1), ..., 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix {
    layer_name: String,
    rows: usize,
    cols: usize,
    background_count: usize,
    numerators: Vec<u32>,
}

impl PValueMatrix {
    /// Builds a matrix directly from numerators `1..=M+1`.
    pub fn from_numerators(
        layer_name: impl Into<String>,
        rows: usize,
        cols: usize,
        background_count: usize,
        numerators: Vec<u32>,
    ) -> Result<Self> {
        if numerators.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} numerators for a {rows}x{cols} p-value matrix",
                numerators.len()
            )));
        }
        if let Some(bad) = numerators
            .iter()
            .find(|&&n| n == 0 || n as usize > background_count + 1)
        {
            return Err(Error::InvalidArgument(format!(
                "p-value numerator {bad} outside 1..={}",
                background_count + 1
            )));
        }
        Ok(Self {
            layer_name: layer_name.into(),
            rows,
            cols,
            background_count,
            numerators,
        })
    }

    pub fn layer_name(&self) -> &str {
        &self.layer_name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn background_count(&self) -> usize {
        self.background_count
    }

    pub fn numerator(&self, row: usize, col: usize) -> u32 {
        self.numerators[row * self.cols + col]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        f64::from(self.numerator(row, col)) / (self.background_count + 1) as f64
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(row, j)).collect()
    }
}

/// Computes the p-value matrix of `evaluation` against `background`.
pub fn compute_pvalues(
    background: &LayerActivations,
    evaluation: &LayerActivations,
) -> Result<PValueMatrix> {
    if background.cols() != evaluation.cols() {
        return Err(Error::Shape(format!(
            "background layer `{}` has {} nodes, evaluation layer `{}` has {}",
            background.name(),
            background.cols(),
            evaluation.name(),
            evaluation.cols()
        )));
    }
    BackgroundModel::new(background).pvalues(evaluation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(name: &str, values: &[f32]) -> LayerActivations {
        LayerActivations::new(name, values.len(), 1, values.to_vec()).unwrap()
    }

    // direct counting, independent of the sorted-column search
    fn count_oracle(bg: &[f32], test: f32) -> f64 {
        let c = bg.iter().filter(|&&b| b >= test).count();
        (c + 1) as f64 / (bg.len() + 1) as f64
    }

    #[test]
    fn counts_against_background() {
        let bg = [0.1, 0.2, 0.3, 0.4];
        let p = compute_pvalues(&column("l", &bg), &column("l", &[0.25, 0.5, 0.0])).unwrap();
        assert_eq!(p.get(0, 0), 0.6);
        assert_eq!(p.get(0, 0), count_oracle(&bg, 0.25));
        assert_eq!(p.get(1, 0), 1.0 / 5.0);
        assert_eq!(p.get(2, 0), 1.0);
    }

    #[test]
    fn ties_count_as_at_least() {
        let bg = [1.0, 1.0, 2.0];
        let p = compute_pvalues(&column("l", &bg), &column("l", &[1.0, 2.0])).unwrap();
        assert_eq!(p.numerator(0, 0), 4);
        assert_eq!(p.numerator(1, 0), 2);
    }

    #[test]
    fn constant_background_column() {
        let bg = [3.0; 10];
        let p = compute_pvalues(&column("l", &bg), &column("l", &[3.0, 2.9, 3.1])).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.get(1, 0), 1.0);
        assert_eq!(p.get(2, 0), 1.0 / 11.0);
    }

    #[test]
    fn column_mismatch() {
        let bg = LayerActivations::new("l", 1, 2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            compute_pvalues(&bg, &column("l", &[1.0])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn numerator_range_checked() {
        assert!(PValueMatrix::from_numerators("l", 1, 1, 3, vec![5]).is_err());
        assert!(PValueMatrix::from_numerators("l", 1, 1, 3, vec![0]).is_err());
        assert!(PValueMatrix::from_numerators("l", 1, 1, 3, vec![4]).is_ok());
    }
}
