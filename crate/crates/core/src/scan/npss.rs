//! Nonparametric scan statistics.
//!
//! Both statistics compare the observed number of p-values at or below a
//! level `alpha` (`n_alpha` out of `n`) with its null expectation
//! `n * alpha`, and return zero when the observed fraction does not exceed
//! `alpha`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    #[default]
    BerkJones,
    HigherCriticism,
}

impl Statistic {
    /// Scores `n_alpha` significant p-values out of `n` at level `alpha`.
    pub fn score(self, alpha: f64, n_alpha: usize, n: usize) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if n == 0 || n_alpha > n {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= n_alpha <= n and n >= 1, got n_alpha={n_alpha}, n={n}"
            )));
        }
        Ok(self.score_unchecked(alpha, n_alpha, n))
    }

    /// `score` without the domain checks, for the inner scan loop where
    /// arguments are valid by construction.
    pub(crate) fn score_unchecked(self, alpha: f64, n_alpha: usize, n: usize) -> f64 {
        let n_f = n as f64;
        let frac = n_alpha as f64 / n_f;
        if frac <= alpha {
            return 0.0;
        }
        match self {
            Statistic::BerkJones => n_f * bernoulli_kl(frac, alpha),
            Statistic::HigherCriticism => {
                (n_alpha as f64 - n_f * alpha) / (n_f * alpha * (1.0 - alpha)).sqrt()
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::BerkJones => "berk_jones",
            Statistic::HigherCriticism => "higher_criticism",
        }
    }
}

/// KL divergence between Bernoulli(a) and Bernoulli(b), with `0 ln 0 = 0`.
fn bernoulli_kl(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "berk_jones" | "berkjones" | "bj" => Ok(Statistic::BerkJones),
            "higher_criticism" | "highercriticism" | "hc" => Ok(Statistic::HigherCriticism),
            _ => Err(Error::InvalidArgument(format!(
                "unknown statistic `{s}` (expected berk_jones or higher_criticism)"
            ))),
        }
    }
}

/// Convenience wrapper over [`Statistic::score`].
pub fn npss_score(alpha: f64, n_alpha: usize, n: usize, statistic: Statistic) -> Result<f64> {
    statistic.score(alpha, n_alpha, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn berk_jones_closed_forms() {
        let bj = Statistic::BerkJones;
        assert!((bj.score(0.5, 1, 1).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((bj.score(0.1, 3, 3).unwrap() - 3.0 * 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn berk_jones_partial_fraction() {
        // 4 of 10 at alpha 0.2: 10 * (0.4 ln 2 + 0.6 ln 0.75)
        let expected = 10.0 * (0.4 * 2f64.ln() + 0.6 * 0.75f64.ln());
        let got = Statistic::BerkJones.score(0.2, 4, 10).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn higher_criticism_value() {
        // (3 - 1) / sqrt(10 * 0.1 * 0.9)
        let got = Statistic::HigherCriticism.score(0.1, 3, 10).unwrap();
        assert!((got - 2.0 / 0.9f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_at_or_below_expectation() {
        for s in [Statistic::BerkJones, Statistic::HigherCriticism] {
            assert_eq!(s.score(0.5, 1, 2).unwrap(), 0.0);
            assert_eq!(s.score(0.5, 0, 4).unwrap(), 0.0);
            assert_eq!(s.score(0.3, 2, 10).unwrap(), 0.0);
        }
    }

    #[test]
    fn domain_errors() {
        let bj = Statistic::BerkJones;
        assert!(bj.score(0.0, 1, 1).is_err());
        assert!(bj.score(1.0, 1, 1).is_err());
        assert!(bj.score(0.5, 2, 1).is_err());
        assert!(bj.score(0.5, 0, 0).is_err());
        assert!(bj.score(f64::NAN, 0, 1).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("BerkJones".parse::<Statistic>().unwrap(), Statistic::BerkJones);
        assert_eq!("higher-criticism".parse::<Statistic>().unwrap(), Statistic::HigherCriticism);
        assert!("chi2".parse::<Statistic>().is_err());
    }
}
