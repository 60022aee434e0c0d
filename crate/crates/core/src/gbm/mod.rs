//! Squared-loss gradient boosting over CART regression trees.
//!
//! The fitted model is `g(x) = g0 + lr * sum_t h_t(x)` where `g0` is the
//! mean training target and each `h_t` is fit to the current residuals.
//! Besides predictions the ensemble exposes each point's leaf path, the
//! sequence of depth-first leaf indices it visits tree by tree.

mod text;
mod tree;

use log::debug;

pub use text::{FORMAT_HEADER, FORMAT_VERSION};
pub use tree::{NodeId, RegressionTree, TreeNode};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Real;
use tree::GrowParams;

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    /// Held-out share of the training rows scored for early stopping.
    pub validation_fraction: f64,
    /// Stop after this many trees without a validation improvement; 0 disables.
    pub n_iter_no_change: usize,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_estimators: 300,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 20,
            subsample: 0.8,
            validation_fraction: 0.1,
            n_iter_no_change: 15,
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_estimators == 0 {
            return bad("n_estimators must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    fn early_stopping(&self) -> bool {
        self.n_iter_no_change > 0 && self.validation_fraction > 0.0
    }
}

/// Leaf indices `(L_1(x), ..., L_T(x))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafPath(pub Vec<u32>);

impl LeafPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for LeafPath {
    fn from(v: Vec<u32>) -> Self {
        LeafPath(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedEnsemble<T: Real> {
    base_value: T,
    learning_rate: T,
    n_features: usize,
    trees: Vec<RegressionTree<T>>,
}

/// Per-iteration losses recorded while fitting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace<T: Real> {
    /// Training MSE on the non-validation rows after each tree.
    pub train_mse: Vec<T>,
    /// Validation MSE after each tree; empty without early stopping.
    pub validation_mse: Vec<T>,
    pub stopped_early: bool,
}

impl<T: Real> BoostedEnsemble<T> {
    pub fn from_parts(
        base_value: T,
        learning_rate: T,
        n_features: usize,
        trees: Vec<RegressionTree<T>>,
    ) -> Self {
        Self {
            base_value,
            learning_rate,
            n_features,
            trees,
        }
    }

    pub fn base_value(&self) -> T {
        self.base_value
    }

    pub fn learning_rate(&self) -> T {
        self.learning_rate
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTree<T>] {
        &self.trees
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        let sum: T = self.trees.iter().map(|t| t.value(x)).sum();
        Ok(self.base_value + self.learning_rate * sum)
    }

    pub fn leaf_path(&self, x: &[T]) -> Result<LeafPath> {
        self.check_dim(x)?;
        Ok(LeafPath(self.trees.iter().map(|t| t.leaf(x).0).collect()))
    }

    /// Raw leaf value of tree `t` (0-based) at `x`, without the learning rate.
    pub fn tree_contribution(&self, t: usize, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        let tree = self.trees.get(t).ok_or(Error::Index {
            index: t,
            len: self.trees.len(),
        })?;
        Ok(tree.value(x))
    }

    pub fn predict_dataset(&self, data: &Dataset<T>) -> Result<Vec<T>> {
        data.rows().map(|r| self.predict(r)).collect()
    }

    pub fn leaf_paths(&self, data: &Dataset<T>) -> Result<Vec<LeafPath>> {
        data.rows().map(|r| self.leaf_path(r)).collect()
    }

    pub fn to_text(&self) -> String {
        text::write(self)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        text::read(s)
    }
}

pub fn fit<T: Real>(train: &Dataset<T>, config: &BoostConfig) -> Result<BoostedEnsemble<T>> {
    fit_with_trace(train, config).map(|(m, _)| m)
}

/// Fits the ensemble and returns the per-tree loss trace alongside it.
pub fn fit_with_trace<T: Real>(
    train: &Dataset<T>,
    config: &BoostConfig,
) -> Result<(BoostedEnsemble<T>, FitTrace<T>)> {
    config.validate()?;
    let root = RngStream::new(config.seed);
    let n = train.n_rows();

    let (fit_rows, val_rows) = if config.early_stopping() {
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(
            order.as_mut_slice(),
            &mut root.derive("gbm-validation").generator(),
        );
        let n_val = (n as f64 * config.validation_fraction).floor() as usize;
        let val = order.split_off(n - n_val);
        (order, val)
    } else {
        ((0..n).collect::<Vec<_>>(), Vec::new())
    };
    if fit_rows.len() < 2 * config.min_samples_leaf {
        return Err(Error::InsufficientData(format!(
            "{} fitting rows, need at least 2 * min_samples_leaf = {}",
            fit_rows.len(),
            2 * config.min_samples_leaf
        )));
    }

    let y = train.targets();
    let base_value =
        fit_rows.iter().map(|&i| y[i]).sum::<T>() / T::from_usize_lossy(fit_rows.len());
    let lr = T::lit(config.learning_rate);
    let mut model = BoostedEnsemble::from_parts(base_value, lr, train.n_features(), Vec::new());
    let mut trace = FitTrace::default();

    let first = y[fit_rows[0]];
    if fit_rows.iter().all(|&i| y[i] == first) {
        debug!("constant training target {first}; fitted zero trees");
        return Ok((model, trace));
    }

    let mut pred = vec![base_value; n];
    let mut residual = vec![T::zero(); n];
    let n_sub =
        ((fit_rows.len() as f64 * config.subsample).round() as usize).clamp(1, fit_rows.len());
    let params = GrowParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
    };
    let mut best_val = T::infinity();
    let mut since_best = 0usize;

    for t in 0..config.n_estimators {
        for &i in &fit_rows {
            residual[i] = y[i] - pred[i];
        }
        let rows = if n_sub < fit_rows.len() {
            let mut g = root.derive(&format!("tree-subsample:{t}")).generator();
            let mut pool = fit_rows.clone();
            for k in 0..n_sub {
                let j = k + g.below(pool.len() - k);
                pool.swap(k, j);
            }
            pool.truncate(n_sub);
            pool.sort_unstable();
            pool
        } else {
            fit_rows.clone()
        };
        let tree = tree::grow(train, &residual, &rows, params);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += lr * tree.value(train.row(i));
        }
        model.trees.push(tree);
        trace.train_mse.push(mse_on(&pred, y, &fit_rows));

        if config.early_stopping() {
            let v = mse_on(&pred, y, &val_rows);
            trace.validation_mse.push(v);
            if v < best_val {
                best_val = v;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.n_iter_no_change {
                    trace.stopped_early = true;
                    debug!("early stop after {} trees", t + 1);
                    break;
                }
            }
        }
    }
    Ok((model, trace))
}

fn mse_on<T: Real>(pred: &[T], y: &[T], rows: &[usize]) -> T {
    rows.iter().map(|&i| (y[i] - pred[i]).powi(2)).sum::<T>() / T::from_usize_lossy(rows.len())
}
