use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 10,
            min_leaf: 20,
        }
    }
}

/// Flat node; samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Positive-class fraction of the training samples in the leaf reached by `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left as usize).max(go(t, right as usize)),
            }
        }
        go(self, 0)
    }
}

/// Bagged Gini trees; the score is the mean leaf positive fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    params: ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> u32 {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        self.nodes.push(Node::Leaf {
            value: pos as f64 / idx.len() as f64,
        });
        (self.nodes.len() - 1) as u32
    }

    /// Best split over `features` (ascending). Ties keep the earlier
    /// candidate: lowest feature index, then lowest threshold.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<Split> {
        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.y[i]).count();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Split> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                left_pos += usize::from(self.y[order[k]]);
                let nl = k + 1;
                let (v, next) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if nl < min_leaf || n - nl < min_leaf || v == next {
                    continue;
                }
                let nr = n - nl;
                let imp = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(total_pos - left_pos, nr)) / n as f64;
                if best.as_ref().map_or(true, |b| imp < b.impurity) {
                    let mid = 0.5 * (v + next);
                    best = Some(Split {
                        feature: f,
                        threshold: if mid < next { mid } else { v },
                        impurity: imp,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf || pos == 0 || pos == n {
            return self.leaf(&idx);
        }
        let d = self.x[0].len();
        let mut features = rand::seq::index::sample(rng, d, self.mtry).into_vec();
        features.sort_unstable();
        let Some(split) = self.best_split(&idx, &features) else {
            return self.leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: f64::NAN });
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left,
            right,
        };
        me as u32
    }
}

/// Train a forest. Tree `t` draws its bootstrap sample and candidate
/// features from ChaCha8 stream `t` of `seed`, so the result does not
/// depend on thread scheduling. Single-class input yields trees that are
/// one constant leaf.
pub fn train_forest(x: &[Vec<f64>], y: &[bool], params: ForestParams, seed: u64) -> Forest {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        tracing::warn!(samples = n, "single-class training data; forest is constant");
    }
    let mtry = ((d as f64).sqrt().floor() as usize).clamp(1, d.max(1));
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = Builder {
                x,
                y,
                params,
                mtry,
                nodes: Vec::new(),
            };
            b.grow(boot, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Forest {
        n_features: d,
        params,
        trees,
    }
}
