//! Seeded random forest of CART regression trees.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 5, min_leaf: 5, max_features: None, seed: 1 }
    }
}

impl ForestConfig {
    pub fn features_per_split(&self, d: usize) -> usize {
        let default = (d as f64).sqrt().ceil() as usize;
        self.max_features.unwrap_or(default).clamp(1, d.max(1))
    }
}

/// Rows of features with one target each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.x.push(x);
        self.y.push(y);
    }
}

/// Mean that stays within `[min, max]` of its inputs, so a constant input
/// returns that constant exactly.
pub fn bounded_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter();
    let Some(first) = it.next() else { return f64::NAN };
    let (mut lo, mut hi, mut n, mut acc) = (first, first, 1.0, 0.0);
    for v in it {
        lo = lo.min(v);
        hi = hi.max(v);
        acc += v - first;
        n += 1.0;
    }
    (first + acc / n).clamp(lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf { value: f64, n: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Sum of squared errors of both children around their means.
    pub sse: f64,
}

/// Best axis-aligned split of `rows` over `features`, by total child SSE.
/// Thresholds sit halfway between adjacent distinct values; both children
/// keep at least `min_leaf` rows. Earlier features and lower thresholds
/// win exact ties.
pub fn best_split(data: &Dataset, rows: &[usize], features: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = rows.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let centre = bounded_mean(rows.iter().map(|&r| data.y[r]));
    let mut best: Option<SplitChoice> = None;
    let mut sorted = rows.to_vec();
    for &f in features {
        sorted.sort_by(|&a, &b| data.x[a][f].total_cmp(&data.x[b][f]).then(a.cmp(&b)));
        let total: f64 = sorted.iter().map(|&r| data.y[r] - centre).sum();
        let total_sq: f64 = sorted.iter().map(|&r| (data.y[r] - centre).powi(2)).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        for i in 1..n {
            let v = data.y[sorted[i - 1]] - centre;
            s += v;
            sq += v * v;
            let (lo, hi) = (data.x[sorted[i - 1]][f], data.x[sorted[i]][f]);
            if i < min_leaf || n - i < min_leaf || lo >= hi {
                continue;
            }
            let (nl, nr) = (i as f64, (n - i) as f64);
            let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s).powi(2) / nr);
            if best.is_none_or(|b| sse < b.sse) {
                best = Some(SplitChoice { feature: f, threshold: lo + (hi - lo) / 2.0, sse });
            }
        }
    }
    best
}

impl RegressionTree {
    /// Grows a tree on `rows` (indices into `data`, repeats allowed).
    pub fn fit(data: &Dataset, rows: &[usize], cfg: &ForestConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.grow(data, rows.to_vec(), 0, cfg, rng);
        tree
    }

    fn grow(&mut self, data: &Dataset, rows: Vec<usize>, depth: usize, cfg: &ForestConfig, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let value = bounded_mean(rows.iter().map(|&r| data.y[r]));
        self.nodes.push(Node::Leaf { value, n: rows.len() });
        let constant = rows.iter().all(|&r| data.y[r] == data.y[rows[0]]);
        if depth >= cfg.max_depth || constant {
            return id;
        }
        let d = data.n_features();
        let mut features = index::sample(rng, d, cfg.features_per_split(d)).into_vec();
        features.sort_unstable();
        let Some(split) = best_split(data, &rows, &features, cfg.min_leaf) else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| data.x[i][split.feature] <= split.threshold);
        let left = self.grow(data, l, depth + 1, cfg, rng);
        let right = self.grow(data, r, depth + 1, cfg, rng);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<RegressionTree>,
    n_features: usize,
    target_range: (f64, f64),
    config: ForestConfig,
}

impl ForestModel {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_features, "feature count mismatch");
        let mean = bounded_mean(self.trees.iter().map(|t| t.predict(x)));
        mean.clamp(self.target_range.0, self.target_range.1)
    }
}

/// Fits the forest, or `None` for an empty panel.
///
/// Tree `i` draws its bootstrap sample and feature subsets from stream `i`
/// of a ChaCha8 generator seeded with `cfg.seed`, so the result does not
/// depend on thread scheduling.
pub fn fit_forest(data: &Dataset, cfg: &ForestConfig) -> Option<ForestModel> {
    if data.is_empty() || cfg.n_trees == 0 {
        return None;
    }
    let n = data.len();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            RegressionTree::fit(data, &sample, cfg, &mut rng)
        })
        .collect();
    let lo = data.y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(ForestModel { trees, n_features: data.n_features(), target_range: (lo, hi), config: *cfg })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_mean_of_constant_is_exact() {
        let v = [0.1 + 0.2; 7];
        assert_eq!(bounded_mean(v.iter().copied()), 0.1 + 0.2);
        assert_eq!(bounded_mean([1.0, 3.0]), 2.0);
    }

    #[test]
    fn split_respects_min_leaf() {
        let mut d = Dataset::default();
        for i in 0..6 {
            d.push(vec![i as f64], if i == 0 { 10.0 } else { 0.0 });
        }
        let rows: Vec<usize> = (0..6).collect();
        let s = best_split(&d, &rows, &[0], 2).unwrap();
        assert_eq!(s.threshold, 1.5);
        assert!(best_split(&d, &rows, &[0], 4).is_none());
    }
}
