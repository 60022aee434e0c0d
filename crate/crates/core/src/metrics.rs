//! Interval evaluation: marginal coverage, interval length, the interval
//! score and its test-set mean, point MSE, and relative comparisons.

use std::collections::BTreeMap;

use crate::conformal::PredictionInterval;
use crate::error::{Error, Result};
use crate::scalar::Real;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::EmptyInput("no evaluation points"));
    }
    Ok(())
}

/// Fraction of targets inside their closed interval.
pub fn amc<T: Real>(intervals: &[PredictionInterval<T>], y: &[T]) -> Result<f64> {
    same_len(intervals.len(), y.len())?;
    let hit = intervals
        .iter()
        .zip(y)
        .filter(|(iv, &v)| iv.contains(v))
        .count();
    Ok(hit as f64 / y.len() as f64)
}

/// Width plus `2/alpha` times the distance by which `y` misses the interval.
/// Infinite endpoints give an infinite score.
pub fn interval_score<T: Real>(iv: &PredictionInterval<T>, y: T, alpha: f64) -> T {
    let k = T::lit(2.0 / alpha);
    let mut s = iv.upper - iv.lower;
    if y < iv.lower {
        s += k * (iv.lower - y);
    }
    if y > iv.upper {
        s += k * (y - iv.upper);
    }
    s
}

/// Mean interval score over the test points.
pub fn smis<T: Real>(intervals: &[PredictionInterval<T>], y: &[T], alpha: f64) -> Result<T> {
    same_len(intervals.len(), y.len())?;
    let total: T = intervals
        .iter()
        .zip(y)
        .map(|(iv, &v)| interval_score(iv, v, alpha))
        .sum();
    Ok(total / T::from_usize_lossy(y.len()))
}

pub fn mean_interval_length<T: Real>(intervals: &[PredictionInterval<T>]) -> Result<T> {
    if intervals.is_empty() {
        return Err(Error::EmptyInput("no intervals"));
    }
    Ok(intervals.iter().map(PredictionInterval::length).sum::<T>()
        / T::from_usize_lossy(intervals.len()))
}

pub fn mse<T: Real>(pred: &[T], y: &[T]) -> Result<T> {
    same_len(pred.len(), y.len())?;
    Ok(pred
        .iter()
        .zip(y)
        .map(|(&p, &v)| (p - v) * (p - v))
        .sum::<T>()
        / T::from_usize_lossy(y.len()))
}

/// Coverage within each group label; labels without points are absent.
pub fn conditional_coverage<T: Real, L: Ord + Clone>(
    intervals: &[PredictionInterval<T>],
    y: &[T],
    groups: &[L],
) -> Result<BTreeMap<L, f64>> {
    same_len(intervals.len(), y.len())?;
    same_len(groups.len(), y.len())?;
    let mut tally: BTreeMap<L, (usize, usize)> = BTreeMap::new();
    for ((iv, &v), g) in intervals.iter().zip(y).zip(groups) {
        let e = tally.entry(g.clone()).or_default();
        e.0 += usize::from(iv.contains(v));
        e.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(g, (hit, n))| (g, hit as f64 / n as f64))
        .collect())
}

/// Summary of one method on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub amc: f64,
    pub mean_interval_length: f64,
    pub smis: f64,
    pub mse: f64,
    pub calibration_seconds: f64,
    /// Intervals with an infinite endpoint.
    pub n_infinite: usize,
    pub per_group_coverage: Option<BTreeMap<String, f64>>,
}

impl EvaluationReport {
    pub fn evaluate<T: Real>(
        intervals: &[PredictionInterval<T>],
        y: &[T],
        alpha: f64,
        calibration_seconds: f64,
    ) -> Result<Self> {
        let centers: Vec<T> = intervals.iter().map(|iv| iv.center).collect();
        Ok(Self {
            amc: amc(intervals, y)?,
            mean_interval_length: mean_interval_length(intervals)?.as_f64(),
            smis: smis(intervals, y, alpha)?.as_f64(),
            mse: mse(&centers, y)?.as_f64(),
            calibration_seconds,
            n_infinite: intervals.iter().filter(|iv| !iv.is_finite()).count(),
            per_group_coverage: None,
        })
    }

    pub fn with_groups<T: Real, L: Ord + Clone + ToString>(
        mut self,
        intervals: &[PredictionInterval<T>],
        y: &[T],
        groups: &[L],
    ) -> Result<Self> {
        let cov = conditional_coverage(intervals, y, groups)?;
        self.per_group_coverage = Some(cov.into_iter().map(|(k, v)| (k.to_string(), v)).collect());
        Ok(self)
    }
}

/// Comparison of a method against the best competitor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeMetrics {
    /// `100 * smis(best) / smis(ours)`.
    pub smis_efficiency: f64,
    /// `seconds(best) / seconds(ours)`.
    pub speedup: f64,
    /// `100 * (mse(best) / mse(ours) - 1)`.
    pub mse_improvement: f64,
}

pub fn relative_metrics(
    ours: &EvaluationReport,
    best: &EvaluationReport,
) -> Result<RelativeMetrics> {
    if ours.smis == 0.0 {
        return Err(Error::DivisionByZero("SMIS efficiency"));
    }
    if ours.calibration_seconds == 0.0 {
        return Err(Error::DivisionByZero("speedup"));
    }
    if ours.mse == 0.0 {
        return Err(Error::DivisionByZero("MSE improvement"));
    }
    Ok(RelativeMetrics {
        smis_efficiency: 100.0 * best.smis / ours.smis,
        speedup: best.calibration_seconds / ours.calibration_seconds,
        mse_improvement: 100.0 * (best.mse / ours.mse - 1.0),
    })
}
