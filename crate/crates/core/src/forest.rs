//! Random forest over 0/1 indicator rows: CART trees with Gini impurity,
//! bootstrap bagging, Gini importance, stratified k-fold tuning and
//! recursive feature elimination.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::auc;

/// Column-major 0/1 matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    n_rows: usize,
    columns: Vec<Vec<u8>>,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(rows: &[Vec<u8>], labels: &[bool]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let width = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); width];
        for row in rows {
            if row.len() != width {
                return Err(Error::Shape {
                    expected: width,
                    got: row.len(),
                });
            }
            for (col, v) in columns.iter_mut().zip(row) {
                if *v > 1 {
                    return Err(Error::InvalidValue(format!("indicator value {v}")));
                }
                col.push(*v);
            }
        }
        Ok(Dataset {
            n_rows: rows.len(),
            columns,
            labels: labels.to_vec(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_indicators(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> Vec<u8> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows `rows` restricted to indicator columns `cols`, in the given order.
    pub fn subset(&self, rows: &[usize], cols: &[usize]) -> Dataset {
        Dataset {
            n_rows: rows.len(),
            columns: cols
                .iter()
                .map(|c| rows.iter().map(|r| self.columns[*c][*r]).collect())
                .collect(),
            labels: rows.iter().map(|r| self.labels[*r]).collect(),
        }
    }
}

/// How many indicators each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    /// ⌈√F⌉ of the F usable indicators.
    #[default]
    Sqrt,
    Fixed(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            FeaturesPerSplit::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            FeaturesPerSplit::Fixed(m) => m,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_trees: usize,
    /// `None` grows until purity or the leaf-size limit.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub features_per_split: FeaturesPerSplit,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            n_trees: 100,
            max_depth: Some(16),
            min_samples_leaf: 1,
            features_per_split: FeaturesPerSplit::Sqrt,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 || self.max_depth == Some(0) {
            return Err(Error::Config(format!("hyper-parameters must be positive: {self:?}")));
        }
        if self.features_per_split == FeaturesPerSplit::Fixed(0) {
            return Err(Error::Config("features_per_split must be positive".into()));
        }
        Ok(())
    }

    /// Ordering used to break CV ties: smaller models first.
    fn size_key(&self) -> (usize, usize, std::cmp::Reverse<usize>) {
        (
            self.n_trees,
            self.max_depth.unwrap_or(usize::MAX),
            std::cmp::Reverse(self.min_samples_leaf),
        )
    }
}

/// The tuning grid used when none is configured.
pub fn default_grid() -> Vec<HyperParams> {
    let mut grid = Vec::new();
    for n_trees in [100, 300] {
        for max_depth in [Some(8), Some(16), None] {
            for min_samples_leaf in [1, 5] {
                grid.push(HyperParams {
                    n_trees,
                    max_depth,
                    min_samples_leaf,
                    features_per_split: FeaturesPerSplit::Sqrt,
                });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with the indicator at 0 go left, at 1 go right.
    Split {
        indicator: u32,
        left: u32,
        right: u32,
    },
    Leaf {
        positive_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Root first.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[u8]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { positive_fraction } => return positive_fraction,
                Node::Split { indicator, left, right } => {
                    at = if row[indicator as usize] == 0 { left } else { right } as usize;
                }
            }
        }
    }

    fn predict_column_major(&self, data: &Dataset, i: usize) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { positive_fraction } => return positive_fraction,
                Node::Split { indicator, left, right } => {
                    at = if data.columns[indicator as usize][i] == 0 {
                        left
                    } else {
                        right
                    } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Gini impurity of a node with `pos` positives among `n` rows.
pub fn gini(n: usize, pos: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    m: usize,
    max_depth: Option<usize>,
    min_samples_leaf: usize,
    nodes: Vec<Node>,
    /// Per-indicator sum of `n_node * gain`.
    importance: Vec<f64>,
    scratch: Vec<usize>,
}

impl TreeBuilder<'_> {
    fn positives(&self, rows: &[u32]) -> usize {
        rows.iter().filter(|r| self.data.labels[**r as usize]).count()
    }

    fn build<R: Rng>(&mut self, rows: &mut [u32], depth: usize, rng: &mut R) -> u32 {
        let id = self.nodes.len() as u32;
        let n = rows.len();
        let pos = self.positives(rows);
        self.nodes.push(Node::Leaf {
            positive_fraction: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
        });
        let depth_left = self.max_depth.is_none_or(|d| depth < d);
        if !depth_left || pos == 0 || pos == n || n < 2 * self.min_samples_leaf {
            return id;
        }
        let Some((indicator, gain)) = self.best_split(rows, pos, rng) else {
            return id;
        };
        let col = &self.data.columns[indicator];
        // Stable partition: zeros first.
        let split_at = {
            let (mut zeros, mut ones): (Vec<u32>, Vec<u32>) = (Vec::with_capacity(n), Vec::new());
            for r in rows.iter() {
                if col[*r as usize] == 0 {
                    zeros.push(*r);
                } else {
                    ones.push(*r);
                }
            }
            let z = zeros.len();
            rows[..z].copy_from_slice(&zeros);
            rows[z..].copy_from_slice(&ones);
            z
        };
        self.importance[indicator] += n as f64 * gain;
        let (left_rows, right_rows) = rows.split_at_mut(split_at);
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[id as usize] = Node::Split {
            indicator: indicator as u32,
            left,
            right,
        };
        id
    }

    /// Draws pool indicators without replacement until `m` that vary inside
    /// the node have been evaluated; returns the first best positive gain.
    /// `scratch` holds a permutation of the pool that persists across nodes;
    /// a partial Fisher-Yates pass over any arrangement is a uniform draw.
    fn best_split<R: Rng>(&mut self, rows: &[u32], pos: usize, rng: &mut R) -> Option<(usize, f64)> {
        let n = rows.len();
        let parent = gini(n, pos);
        let mut best: Option<(usize, f64)> = None;
        let mut evaluated = 0;
        let mut drawn = 0;
        while evaluated < self.m && drawn < self.scratch.len() {
            let j = rng.random_range(drawn..self.scratch.len());
            self.scratch.swap(drawn, j);
            let indicator = self.scratch[drawn];
            drawn += 1;
            let col = &self.data.columns[indicator];
            let labels = &self.data.labels;
            let (mut ones, mut pos_ones) = (0usize, 0usize);
            for r in rows {
                let v = col[*r as usize] as usize;
                ones += v;
                pos_ones += v & labels[*r as usize] as usize;
            }
            if ones == 0 || ones == n {
                continue;
            }
            evaluated += 1;
            let zeros = n - ones;
            if ones < self.min_samples_leaf || zeros < self.min_samples_leaf {
                continue;
            }
            let weighted = (zeros as f64 * gini(zeros, pos - pos_ones) + ones as f64 * gini(ones, pos_ones)) / n as f64;
            let gain = parent - weighted;
            if gain > 1e-12 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((indicator, gain));
            }
        }
        best
    }
}

/// Indicators that take both values somewhere in the data.
fn varying_indicators(data: &Dataset) -> Vec<usize> {
    (0..data.n_indicators())
        .filter(|c| {
            let col = &data.columns[*c];
            col.contains(&1) && col.contains(&0)
        })
        .collect()
}

fn grow_tree(
    data: &Dataset,
    sample: &mut [u32],
    pool: &[usize],
    params: &HyperParams,
    rng: &mut ChaCha8Rng,
) -> (DecisionTree, Vec<f64>) {
    let mut builder = TreeBuilder {
        data,
        m: params.features_per_split.resolve(pool.len()),
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        nodes: Vec::new(),
        importance: vec![0.0; data.n_indicators()],
        scratch: pool.to_vec(),
    };
    builder.build(sample, 0, rng);
    (
        DecisionTree {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            nodes: builder.nodes,
        },
        builder.importance,
    )
}

/// Grows one tree on all rows of `data` (no bootstrap), drawing split
/// candidates from `rng`.
pub fn train_tree(data: &Dataset, params: &HyperParams, rng: &mut ChaCha8Rng) -> DecisionTree {
    let pool = varying_indicators(data);
    let mut sample: Vec<u32> = (0..data.n_rows() as u32).collect();
    grow_tree(data, &mut sample, &pool, params, rng).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: HyperParams,
    pub seed: u64,
    pub n_indicators: usize,
    pub features_per_split: usize,
    /// Normalized to sum to 1 when the forest has any split.
    pub importances: Vec<f64>,
    pub trees: Vec<DecisionTree>,
}

/// The RNG stream of tree `index`; independent of training order.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn train_forest(data: &Dataset, params: &HyperParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    let pos = data.labels.iter().filter(|l| **l).count();
    if data.n_rows == 0 || pos == 0 || pos == data.n_rows {
        return Err(Error::DegenerateTraining(format!(
            "{pos} positive(s) among {} rows; both classes are required",
            data.n_rows
        )));
    }
    let pool = varying_indicators(data);
    let n = data.n_rows;
    let grown: Vec<(DecisionTree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut sample: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            sample.sort_unstable();
            grow_tree(data, &mut sample, &pool, params, &mut rng)
        })
        .collect();
    let mut importances = vec![0.0; data.n_indicators()];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (total, v) in importances.iter_mut().zip(imp) {
            *total += v;
        }
        trees.push(tree);
    }
    let sum: f64 = importances.iter().sum();
    if sum > 0.0 {
        importances.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(ForestModel {
        params: *params,
        seed,
        n_indicators: data.n_indicators(),
        features_per_split: params.features_per_split.resolve(pool.len()),
        importances,
        trees,
    })
}

impl ForestModel {
    /// Mean leaf positive fraction over the trees: the DSAT probability.
    pub fn predict(&self, row: &[u8]) -> Result<f64> {
        if row.len() != self.n_indicators {
            return Err(Error::Shape {
                expected: self.n_indicators,
                got: row.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.n_indicators() != self.n_indicators {
            return Err(Error::Shape {
                expected: self.n_indicators,
                got: data.n_indicators(),
            });
        }
        let n_trees = self.trees.len() as f64;
        Ok((0..data.n_rows())
            .map(|i| self.trees.iter().map(|t| t.predict_column_major(data, i)).sum::<f64>() / n_trees)
            .collect())
    }
}

/// The `n` most important indicators, descending; ties by name.
pub fn top_importances(model: &ForestModel, names: &[String], n: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = model
        .importances
        .iter()
        .enumerate()
        .map(|(i, v)| (names.get(i).cloned().unwrap_or_else(|| format!("indicator_{i}")), *v))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}

/// Label-stratified fold assignment: fold of each row.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("k = {k}; need at least 2 folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
        if members.len() < k {
            return Err(Error::Stratification(format!(
                "class {} has {} row(s), fewer than {k} folds",
                if class { "DSAT" } else { "SAT" },
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, row) in members.into_iter().enumerate() {
            fold[row] = pos % k;
        }
    }
    Ok(fold)
}

/// Per-fold forests on `cols`; returns mean validation AUC and the summed
/// (unnormalized) importances of the fold models.
fn cross_validate(
    data: &Dataset,
    cols: &[usize],
    folds: &[usize],
    k: usize,
    params: &HyperParams,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let mut total_auc = 0.0;
    let mut importance = vec![0.0; cols.len()];
    for f in 0..k {
        let train: Vec<usize> = (0..data.n_rows()).filter(|i| folds[*i] != f).collect();
        let valid: Vec<usize> = (0..data.n_rows()).filter(|i| folds[*i] == f).collect();
        let model = train_forest(&data.subset(&train, cols), params, seed.wrapping_add(f as u64))?;
        let valid = data.subset(&valid, cols);
        total_auc += auc(&model.predict_dataset(&valid)?, valid.labels())?;
        for (acc, v) in importance.iter_mut().zip(&model.importances) {
            *acc += v;
        }
    }
    Ok((total_auc / k as f64, importance))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: HyperParams,
    pub cv_auc: f64,
}

/// Stratified k-fold search; the best mean AUC wins, ties going to fewer
/// trees, then shallower trees, then larger leaves.
pub fn cv_tune(data: &Dataset, grid: &[HyperParams], k: usize, seed: u64) -> Result<(HyperParams, Vec<GridPoint>)> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyper-parameter grid".into()));
    }
    let folds = stratified_folds(data.labels(), k, seed)?;
    let all: Vec<usize> = (0..data.n_indicators()).collect();
    let mut points = Vec::with_capacity(grid.len());
    for params in grid {
        params.validate()?;
        let (cv_auc, _) = cross_validate(data, &all, &folds, k, params, seed)?;
        log::debug!("cv {params:?}: auc {cv_auc:.4}");
        points.push(GridPoint {
            params: *params,
            cv_auc,
        });
    }
    let best = points
        .iter()
        .min_by(|a, b| {
            b.cv_auc
                .total_cmp(&a.cv_auc)
                .then_with(|| a.params.size_key().cmp(&b.params.size_key()))
        })
        .expect("grid is non-empty");
    Ok((best.params, points))
}

/// Candidate subset sizes visited by elimination from `n_features`.
pub fn rfe_schedule(n_features: usize, drop_fraction: f64, min_features: usize) -> Vec<usize> {
    let floor = min_features.clamp(1, n_features.max(1));
    let mut sizes = vec![n_features];
    let mut size = n_features;
    while size > floor {
        let drop = ((size as f64 * drop_fraction).floor() as usize).max(1);
        size = size.saturating_sub(drop).max(floor);
        sizes.push(size);
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeStep {
    pub n_features: usize,
    pub cv_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    /// Ascending indicator indices of the best subset.
    pub selected: Vec<usize>,
    pub history: Vec<RfeStep>,
}

/// Recursive feature elimination with fixed `params`. Each step scores the
/// current subset by k-fold CV AUC, then drops the least important
/// `drop_fraction` (ties drop the higher index). The best-scoring subset
/// wins, ties going to the smaller one.
pub fn rfe(
    data: &Dataset,
    params: &HyperParams,
    drop_fraction: f64,
    min_features: usize,
    k: usize,
    seed: u64,
) -> Result<RfeResult> {
    if !(drop_fraction > 0.0 && drop_fraction < 1.0) {
        return Err(Error::Config(format!("drop fraction {drop_fraction} outside (0, 1)")));
    }
    let folds = stratified_folds(data.labels(), k, seed)?;
    let schedule = rfe_schedule(data.n_indicators(), drop_fraction, min_features);
    let mut current: Vec<usize> = (0..data.n_indicators()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (step, size) in schedule.iter().enumerate() {
        if step > 0 {
            current.truncate(*size);
            current.sort_unstable();
        }
        let (cv_auc, importance) = cross_validate(data, &current, &folds, k, params, seed)?;
        log::debug!("rfe {} features: auc {cv_auc:.4}", current.len());
        history.push(RfeStep {
            n_features: current.len(),
            cv_auc,
        });
        if best.as_ref().is_none_or(|(b, _)| cv_auc >= *b) {
            best = Some((cv_auc, current.clone()));
        }
        // Reorder most important first so truncation drops the tail.
        let mut ranked: Vec<(usize, f64)> = current.iter().copied().zip(importance).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        current = ranked.into_iter().map(|(c, _)| c).collect();
    }
    let (_, selected) = best.expect("schedule is non-empty");
    Ok(RfeResult { selected, history })
}
