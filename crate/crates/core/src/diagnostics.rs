//! Within-region second moment of individual tree contributions and its
//! exponential decay fit.
//!
//! For a reference point `x` and depth `k`, `R_k(x)` holds the evaluation
//! points whose first `k` leaf indices equal those of `x`. For each later
//! tree `t` the curve records `V(t) = mean (h_t(X) - h_t(x))^2` over
//! `R_k(x)`, and [`fit_exponential`] fits `V(t) ~ C rho^t` by least squares
//! on `ln V`.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gbm::{BoostedEnsemble, LeafPath};
use crate::scalar::Real;

pub const DEFAULT_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub reference_x: Vec<f64>,
    pub k: usize,
    /// 1-based tree indices `k+1..=T`.
    pub t_values: Vec<usize>,
    pub v_values: Vec<f64>,
    /// Evaluation points in `R_k(x)`, summed over averaged curves.
    pub n_region: usize,
    /// Number of curves averaged into this one.
    pub n_curves: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub c: f64,
    pub rho: f64,
    pub r_squared: f64,
    pub n_points_used: usize,
    pub n_zero_excluded: usize,
}

impl DecayFit {
    pub fn is_decaying(&self) -> bool {
        self.rho < 1.0
    }

    pub fn fitted(&self, t: usize) -> f64 {
        self.c * self.rho.powf(t as f64)
    }
}

/// Indices of `paths` agreeing with `x_path` on the first `k` trees.
/// `k = 0` selects everything.
pub fn fixed_k_region(paths: &[LeafPath], x_path: &LeafPath, k: usize) -> Result<Vec<usize>> {
    if k > x_path.len() {
        return Err(Error::Config(format!(
            "depth {k} exceeds path length {}",
            x_path.len()
        )));
    }
    let key = &x_path.as_slice()[..k];
    paths
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            if p.len() < k {
                Some(Err(Error::Dimension {
                    expected: x_path.len(),
                    got: p.len(),
                }))
            } else if &p.as_slice()[..k] == key {
                Some(Ok(i))
            } else {
                None
            }
        })
        .collect()
}

pub fn decay_curve<T: Real>(
    model: &BoostedEnsemble<T>,
    eval: &Dataset<T>,
    x: &[T],
    k: usize,
) -> Result<DecayCurve> {
    let n_trees = model.n_trees();
    if k > n_trees {
        return Err(Error::Config(format!(
            "depth {k} exceeds the {n_trees} fitted trees"
        )));
    }
    let x_path = model.leaf_path(x)?;
    let paths = model.leaf_paths(eval)?;
    let members = fixed_k_region(&paths, &x_path, k)?;
    if members.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let trees = model.trees();
    let mut t_values = Vec::with_capacity(n_trees - k);
    let mut v_values = Vec::with_capacity(n_trees - k);
    for (t0, tree) in trees.iter().enumerate().skip(k) {
        let hx = tree.value(x).as_f64();
        let sum: f64 = members
            .iter()
            .map(|&i| {
                let d = tree.value(eval.row(i)).as_f64() - hx;
                d * d
            })
            .sum();
        t_values.push(t0 + 1);
        v_values.push(sum / members.len() as f64);
    }
    Ok(DecayCurve {
        reference_x: x.iter().map(|v| v.as_f64()).collect(),
        k,
        t_values,
        v_values,
        n_region: members.len(),
        n_curves: 1,
    })
}

/// Pointwise mean of curves for the same reference point and depth, e.g.
/// from independent replications. The result stops at the shortest curve
/// so every entry averages all inputs.
pub fn average_curves(curves: &[DecayCurve]) -> Result<DecayCurve> {
    let first = curves
        .first()
        .ok_or(Error::EmptyInput("no curves to average"))?;
    if curves
        .iter()
        .any(|c| c.k != first.k || c.reference_x != first.reference_x)
    {
        return Err(Error::Config(
            "averaged curves must share reference point and depth".into(),
        ));
    }
    let len = curves.iter().map(|c| c.t_values.len()).min().unwrap_or(0);
    let n = curves.len() as f64;
    let v_values = (0..len)
        .map(|j| curves.iter().map(|c| c.v_values[j]).sum::<f64>() / n)
        .collect();
    Ok(DecayCurve {
        reference_x: first.reference_x.clone(),
        k: first.k,
        t_values: first.t_values[..len].to_vec(),
        v_values,
        n_region: curves.iter().map(|c| c.n_region).sum(),
        n_curves: curves.iter().map(|c| c.n_curves).sum(),
    })
}

/// Curves for several reference points, computed in parallel.
pub fn decay_curves<T: Real>(
    model: &BoostedEnsemble<T>,
    eval: &Dataset<T>,
    points: &[Vec<T>],
    k: usize,
) -> Vec<Result<DecayCurve>> {
    points
        .par_iter()
        .map(|x| decay_curve(model, eval, x, k))
        .collect()
}

/// Log-linear least squares over the strictly positive entries of the curve.
pub fn fit_exponential(curve: &DecayCurve) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = curve
        .t_values
        .iter()
        .zip(&curve.v_values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t as f64, v.ln()))
        .collect();
    let n_zero_excluded = curve.v_values.len() - pts.len();
    if pts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} positive points, need at least 2",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let constant = pts.iter().all(|p| p.1 == pts[0].1);
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(sxx, sxy), &(t, y)| {
        let dt = t - t_mean;
        (sxx + dt * dt, sxy + dt * (y - y_mean))
    });
    let (slope, intercept) = if constant {
        (0.0, pts[0].1)
    } else {
        let slope = sxy / sxx;
        (slope, y_mean - slope * t_mean)
    };
    let (ss_res, ss_tot) = pts.iter().fold((0.0, 0.0), |(r, s), &(t, y)| {
        let e = y - (intercept + slope * t);
        (r + e * e, s + (y - y_mean) * (y - y_mean))
    });
    let r_squared = if constant || ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(DecayFit {
        c: intercept.exp(),
        rho: slope.exp(),
        r_squared,
        n_points_used: pts.len(),
        n_zero_excluded,
    })
}

/// Reference points at the given probabilities of feature `column`, taken as
/// observed order statistics (nearest rank) so they always lie on the data.
pub fn quantile_reference_points<T: Real>(
    data: &Dataset<T>,
    column: usize,
    probs: &[f64],
) -> Result<Vec<Vec<T>>> {
    if data.n_rows() == 0 {
        return Err(Error::EmptyInput("reference data"));
    }
    if column >= data.n_features() {
        return Err(Error::Index {
            index: column,
            len: data.n_features(),
        });
    }
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    order.sort_by(|&a, &b| {
        data.row(a)[column]
            .partial_cmp(&data.row(b)[column])
            .expect("dataset values are finite")
            .then(a.cmp(&b))
    });
    probs
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
            let rank = ((p * data.n_rows() as f64).ceil() as usize).clamp(1, data.n_rows());
            Ok(data.row(order[rank - 1]).to_vec())
        })
        .collect()
}
