//! Split-conformal calibration with absolute-residual scores: one global
//! quantile (the inductive baseline) or one quantile per partition region.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gbm::BoostedEnsemble;
use crate::partition::{compute_tree_weights, PartitionModel, RegionId, WeightScheme};
use crate::scalar::Real;

/// Nonconformity scores `|y - g(x)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores<T: Real>(Vec<T>);

impl<T: Real> Scores<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::Config(
                "scores must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn from_model(model: &BoostedEnsemble<T>, data: &Dataset<T>) -> Result<Self> {
        let values = data
            .rows()
            .zip(data.targets())
            .map(|(x, &y)| model.predict(x).map(|p| (y - p).abs()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn subset(&self, idx: &[usize]) -> Vec<T> {
        idx.iter().map(|&i| self.0[i]).collect()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

/// Order-statistic rank `ceil((m + 1)(1 - alpha))`. Products within 1e-9
/// (relative) of an integer are taken as that integer so representation
/// error in `1 - alpha` cannot bump the rank.
pub fn conformal_rank(m: usize, alpha: f64) -> usize {
    let x = (m as f64 + 1.0) * (1.0 - alpha);
    let r = if (x - x.round()).abs() <= 1e-9 * x.max(1.0) {
        x.round()
    } else {
        x.ceil()
    };
    (r as usize).max(1)
}

/// The rank-`ceil((m+1)(1-alpha))` smallest score, or `+inf` when that rank
/// exceeds `m`.
pub fn conformal_quantile<T: Real>(scores: &[T], alpha: f64) -> Result<T> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let r = conformal_rank(scores.len(), alpha);
    if r > scores.len() {
        return Ok(T::infinity());
    }
    let mut buf = scores.to_vec();
    let (_, kth, _) =
        buf.select_nth_unstable_by(r - 1, |a, b| a.partial_cmp(b).expect("finite scores"));
    Ok(*kth)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval<T: Real> {
    pub lower: T,
    pub upper: T,
    pub center: T,
}

impl<T: Real> PredictionInterval<T> {
    pub fn symmetric(center: T, half_width: T) -> Self {
        Self {
            lower: center - half_width,
            upper: center + half_width,
            center,
        }
    }

    pub fn contains(&self, y: T) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn length(&self) -> T {
        self.upper - self.lower
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// Anything that turns a point into a conformal half-width.
pub trait IntervalPredictor<T: Real> {
    fn half_width(&self, model: &BoostedEnsemble<T>, x: &[T]) -> Result<T>;

    fn alpha(&self) -> f64;
}

pub fn predict_interval<T: Real, C: IntervalPredictor<T> + ?Sized>(
    calibrator: &C,
    model: &BoostedEnsemble<T>,
    x: &[T],
) -> Result<PredictionInterval<T>> {
    let center = model.predict(x)?;
    Ok(PredictionInterval::symmetric(
        center,
        calibrator.half_width(model, x)?,
    ))
}

pub fn predict_intervals<T: Real, C: IntervalPredictor<T> + ?Sized>(
    calibrator: &C,
    model: &BoostedEnsemble<T>,
    data: &Dataset<T>,
) -> Result<Vec<PredictionInterval<T>>> {
    data.rows()
        .map(|x| predict_interval(calibrator, model, x))
        .collect()
}

/// Inductive conformal baseline: one quantile for the whole space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalCalibrator<T: Real> {
    pub quantile: T,
    pub alpha: f64,
}

impl<T: Real> IntervalPredictor<T> for GlobalCalibrator<T> {
    fn half_width(&self, _model: &BoostedEnsemble<T>, _x: &[T]) -> Result<T> {
        Ok(self.quantile)
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn calibrate_global<T: Real>(
    model: &BoostedEnsemble<T>,
    cal: &Dataset<T>,
    alpha: f64,
) -> Result<GlobalCalibrator<T>> {
    let scores = Scores::from_model(model, cal)?;
    Ok(GlobalCalibrator {
        quantile: conformal_quantile(scores.values(), alpha)?,
        alpha,
    })
}

/// Per-region conformal quantiles over a boosting-induced partition.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCalibrator<T: Real> {
    partition: PartitionModel<T>,
    region_quantiles: Vec<T>,
    alpha: f64,
    global_quantile: T,
}

impl<T: Real> LocalCalibrator<T> {
    pub fn partition(&self) -> &PartitionModel<T> {
        &self.partition
    }

    pub fn region_quantiles(&self) -> &[T] {
        &self.region_quantiles
    }

    pub fn region_quantile(&self, id: RegionId) -> T {
        self.region_quantiles[id.0]
    }

    /// The pooled quantile over all calibration rows, kept for reporting.
    pub fn global_quantile(&self) -> T {
        self.global_quantile
    }

    /// Regions whose calibration sample is too small for a finite quantile.
    pub fn infinite_regions(&self) -> Vec<RegionId> {
        self.region_quantiles
            .iter()
            .enumerate()
            .filter(|(_, q)| q.is_infinite())
            .map(|(i, _)| RegionId(i))
            .collect()
    }

    pub fn region_of(&self, model: &BoostedEnsemble<T>, x: &[T]) -> Result<RegionId> {
        Ok(self.partition.locate(&model.leaf_path(x)?))
    }
}

impl<T: Real> IntervalPredictor<T> for LocalCalibrator<T> {
    fn half_width(&self, model: &BoostedEnsemble<T>, x: &[T]) -> Result<T> {
        Ok(self.region_quantile(self.region_of(model, x)?))
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Quantile of each region's member scores. `partition` must have been
/// built (or reassigned) from the leaf paths of `cal`'s rows in order.
/// Regions left without members get an infinite half-width.
pub fn calibrate_local<T: Real>(
    model: &BoostedEnsemble<T>,
    partition: &PartitionModel<T>,
    cal: &Dataset<T>,
    alpha: f64,
) -> Result<LocalCalibrator<T>> {
    check_alpha(alpha)?;
    let scores = Scores::from_model(model, cal)?;
    let covered: usize = partition.regions().iter().map(|r| r.len()).sum();
    if covered != cal.n_rows() {
        return Err(Error::LengthMismatch {
            left: covered,
            right: cal.n_rows(),
        });
    }
    let region_quantiles = partition
        .regions()
        .iter()
        .map(|r| {
            if r.is_empty() {
                Ok(T::infinity())
            } else {
                conformal_quantile(&scores.subset(&r.members), alpha)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalCalibrator {
        partition: partition.clone(),
        region_quantiles,
        alpha,
        global_quantile: conformal_quantile(scores.values(), alpha)?,
    })
}

/// Partition and merge settings for the local method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoBoostConfig {
    pub alpha: f64,
    pub n_part: usize,
    pub n_merge: usize,
    pub weights: WeightScheme,
}

impl Default for LoBoostConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            n_part: 200,
            n_merge: 200,
            weights: WeightScheme::Variance,
        }
    }
}

/// Full local calibration: leaf paths, partition, tree weights, merge and
/// per-region quantiles.
pub fn calibrate_loboost<T: Real>(
    model: &BoostedEnsemble<T>,
    cal: &Dataset<T>,
    config: &LoBoostConfig,
) -> Result<LocalCalibrator<T>> {
    check_alpha(config.alpha)?;
    let paths = model.leaf_paths(cal)?;
    let weights = compute_tree_weights(model, cal, config.weights)?;
    let partition =
        PartitionModel::build(&paths, config.n_part)?.merge(config.n_merge, &weights)?;
    calibrate_local(model, &partition, cal, config.alpha)
}
