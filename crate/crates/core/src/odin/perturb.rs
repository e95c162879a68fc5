use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::network::{DifferentiableClassifier, TargetLoss};
use super::softmax::{argmax, softmax_score, temperature_softmax};
use crate::error::{Error, Result};
use crate::metrics::auroc;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdinMode {
    /// Tuned to maximise softmax-score detection.
    #[default]
    Standard,
    /// Tuned to push softmax-score detection to chance level.
    Low,
}

impl OdinMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OdinMode::Standard => "standard",
            OdinMode::Low => "low",
        }
    }
}

impl fmt::Display for OdinMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OdinMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(OdinMode::Standard),
            "low" => Ok(OdinMode::Low),
            _ => Err(Error::InvalidArgument(format!(
                "odin mode must be `standard` or `low`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdinConfig {
    pub tau: f64,
    pub epsilon: f64,
    pub mode: OdinMode,
}

impl OdinConfig {
    pub fn new(tau: f64, epsilon: f64, mode: OdinMode) -> Result<Self> {
        let cfg = Self { tau, epsilon, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    /// No perturbation and no temperature scaling.
    pub fn identity() -> Self {
        Self {
            tau: 1.0,
            epsilon: 0.0,
            mode: OdinMode::Standard,
        }
    }

    /// Strong perturbation preset for the low variant (tau 2, epsilon 0.2).
    pub fn low() -> Self {
        Self {
            tau: 2.0,
            epsilon: 0.2,
            mode: OdinMode::Low,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// Rounding in `v - eps` can leave the measured distance an ulp above eps.
fn pull_within(origin: f64, mut value: f64, eps: f64) -> f64 {
    while (value - origin).abs() > eps {
        value = if value > origin { value.next_down() } else { value.next_up() };
    }
    value
}

/// Moves `x` by `epsilon` against the sign of the gradient of the
/// temperature-scaled loss of the predicted class, then clips to `[0, 1]`.
///
/// Clipping never moves a component further than `epsilon` from its
/// original value, so inputs already outside `[0, 1]` are pulled towards the
/// range by at most `epsilon`.
pub fn odin_perturb<M: DifferentiableClassifier + ?Sized>(
    model: &M,
    x: &[f64],
    config: &OdinConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if x.len() != model.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} components, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite input component {bad}")));
    }
    if config.epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    let logits = model.forward(x)?;
    let target = argmax(&temperature_softmax(&logits, config.tau));
    log::trace!("odin target class {target} (tau {})", config.tau);
    let grad = model.input_gradient(x, &TargetLoss::new(target, config.tau))?;
    let eps = config.epsilon;
    Ok(x.iter()
        .zip(&grad)
        .map(|(&v, &g)| {
            let moved = v - eps * sign(g);
            pull_within(v, moved.clamp(0.0, 1.0).clamp(v - eps, v + eps), eps)
        })
        .collect())
}

/// Softmax score of `x` after ODIN preprocessing under `config`.
pub fn odin_softmax_score<M: DifferentiableClassifier + ?Sized>(
    model: &M,
    x: &[f64],
    config: &OdinConfig,
) -> Result<f64> {
    let perturbed = odin_perturb(model, x, config)?;
    Ok(softmax_score(&temperature_softmax(&model.forward(&perturbed)?, config.tau)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneObjective {
    /// Best softmax-score AUROC.
    Maximize,
    /// Softmax-score AUROC closest to 0.5.
    Minimize,
}

impl FromStr for TuneObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maximize" | "max" => Ok(TuneObjective::Maximize),
            "minimize" | "min" => Ok(TuneObjective::Minimize),
            _ => Err(Error::InvalidArgument(format!(
                "objective must be `maximize` or `minimize`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub tau: f64,
    pub epsilon: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdinTuning {
    pub best: OdinConfig,
    pub best_auroc: f64,
    pub grid: Vec<GridPoint>,
}

/// Picks the best grid point for `objective`. Ties go to the smaller
/// epsilon, then the smaller tau.
pub fn select_odin(points: &[GridPoint], objective: TuneObjective) -> Result<(OdinConfig, f64)> {
    let mut ordered: Vec<&GridPoint> = points.iter().collect();
    ordered.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon).then(a.tau.total_cmp(&b.tau)));
    let key = |p: &GridPoint| match objective {
        TuneObjective::Maximize => p.auroc,
        TuneObjective::Minimize => -(p.auroc - 0.5).abs(),
    };
    let mut best: Option<&GridPoint> = None;
    for p in ordered {
        if best.is_none_or(|b| key(p) > key(b)) {
            best = Some(p);
        }
    }
    let best = best.ok_or_else(|| Error::InvalidArgument("empty tuning grid".to_owned()))?;
    let mode = match objective {
        TuneObjective::Maximize => OdinMode::Standard,
        TuneObjective::Minimize => OdinMode::Low,
    };
    Ok((OdinConfig::new(best.tau, best.epsilon, mode)?, best.auroc))
}

/// Grid search over (tau, epsilon) scored by the softmax-score AUROC of
/// OOD (`ood_val`, positive) against ID (`id_val`) validation inputs.
pub fn tune_odin<M: DifferentiableClassifier + ?Sized>(
    model: &M,
    id_val: &[Vec<f64>],
    ood_val: &[Vec<f64>],
    tau_grid: &[f64],
    eps_grid: &[f64],
    objective: TuneObjective,
) -> Result<OdinTuning> {
    if tau_grid.is_empty() || eps_grid.is_empty() {
        return Err(Error::InvalidArgument("tau and epsilon grids must be nonempty".to_owned()));
    }
    if id_val.is_empty() || ood_val.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one ID and one OOD validation input".to_owned(),
        ));
    }
    let labels: Vec<bool> = id_val
        .iter()
        .map(|_| false)
        .chain(ood_val.iter().map(|_| true))
        .collect();
    let inputs: Vec<&Vec<f64>> = id_val.iter().chain(ood_val).collect();

    let mut grid = Vec::with_capacity(tau_grid.len() * eps_grid.len());
    for &epsilon in eps_grid {
        for &tau in tau_grid {
            let cfg = OdinConfig::new(tau, epsilon, OdinMode::Standard)?;
            let scores = par::map_range(inputs.len(), |i| odin_softmax_score(model, inputs[i], &cfg))
                .into_iter()
                // low confidence means OOD, so negate to keep "higher = OOD"
                .map(|s| s.map(|v| -v))
                .collect::<Result<Vec<f64>>>()?;
            grid.push(GridPoint {
                tau,
                epsilon,
                auroc: auroc(&scores, &labels)?,
            });
        }
    }
    let (best, best_auroc) = select_odin(&grid, objective)?;
    Ok(OdinTuning {
        best,
        best_auroc,
        grid,
    })
}
