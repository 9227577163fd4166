//! Gradient-boosted regression trees on squared error, grown level by level
//! with exact splits over presorted features.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { trees: 250, max_depth: 6, shrinkage: 0.1, min_leaf: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
                Node::Leaf { value } => return value,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

pub struct GbtFit {
    pub model: GbtModel,
    /// Training MSE before any tree and after each tree.
    pub train_loss: Vec<f64>,
    /// Validation MSE on the same schedule (empty without validation rows).
    pub val_loss: Vec<f64>,
}

struct NodeBuild {
    index: usize,
    sum: f64,
    count: usize,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one tree on `resid`. Leaf values are residual means.
fn grow_tree(x: &[Vec<f64>], sorted: &[Vec<usize>], resid: &[f64], params: &GbtParams) -> Tree {
    let n = x.len();
    let d = sorted.len();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut node_of = vec![0usize; n];
    let mut open = vec![NodeBuild { index: 0, sum: resid.iter().sum(), count: n }];
    let mut slot_of_node = vec![0usize];
    // Splits must beat rounding noise relative to the residual energy.
    let min_gain = 1e-12 * resid.iter().map(|r| r * r).sum::<f64>();
    for _depth in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let k = open.len();
        let mut best: Vec<Option<Best>> = (0..k).map(|_| None).collect();
        let mut left_sum = vec![0.0; k];
        let mut left_cnt = vec![0usize; k];
        let mut last_val = vec![f64::NAN; k];
        for f in 0..d {
            left_sum.iter_mut().for_each(|s| *s = 0.0);
            left_cnt.iter_mut().for_each(|c| *c = 0);
            last_val.iter_mut().for_each(|v| *v = f64::NAN);
            for &r in &sorted[f] {
                let node = node_of[r];
                if node == usize::MAX {
                    continue;
                }
                let s = slot_of_node[node];
                let v = x[r][f];
                let nb = &open[s];
                if left_cnt[s] >= params.min_leaf && v > last_val[s] && nb.count - left_cnt[s] >= params.min_leaf {
                    let (sl, nl) = (left_sum[s], left_cnt[s] as f64);
                    let (sr, nr) = (nb.sum - sl, (nb.count - left_cnt[s]) as f64);
                    let gain = sl * sl / nl + sr * sr / nr - nb.sum * nb.sum / nb.count as f64;
                    if gain > best[s].as_ref().map_or(min_gain, |b| b.gain) {
                        let threshold = 0.5 * (last_val[s] + v);
                        // Guard against midpoints that round onto the right value.
                        let threshold = if threshold < v { threshold } else { last_val[s] };
                        best[s] = Some(Best { gain, feature: f, threshold });
                    }
                }
                left_sum[s] += resid[r];
                left_cnt[s] += 1;
                last_val[s] = v;
            }
        }
        let mut next = Vec::new();
        let mut new_slot: Vec<(usize, usize)> = Vec::new();
        for (s, b) in best.into_iter().enumerate() {
            let idx = open[s].index;
            match b {
                Some(b) => {
                    let (l, r) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[idx] = Node::Split { feature: b.feature, threshold: b.threshold, left: l, right: r };
                    new_slot.push((l, next.len()));
                    next.push(NodeBuild { index: l, sum: 0.0, count: 0 });
                    new_slot.push((r, next.len()));
                    next.push(NodeBuild { index: r, sum: 0.0, count: 0 });
                }
                None => {
                    nodes[idx] = Node::Leaf { value: open[s].sum / open[s].count as f64 };
                }
            }
        }
        slot_of_node.resize(nodes.len(), usize::MAX);
        for &(node, slot) in &new_slot {
            slot_of_node[node] = slot;
        }
        for r in 0..n {
            let node = node_of[r];
            if node == usize::MAX {
                continue;
            }
            match nodes[node] {
                Node::Split { feature, threshold, left, right } => {
                    let child = if x[r][feature] <= threshold { left } else { right };
                    node_of[r] = child;
                    let nb = &mut next[slot_of_node[child]];
                    nb.sum += resid[r];
                    nb.count += 1;
                }
                Node::Leaf { .. } => node_of[r] = usize::MAX,
            }
        }
        open = next;
    }
    for nb in open {
        nodes[nb.index] = Node::Leaf { value: if nb.count > 0 { nb.sum / nb.count as f64 } else { 0.0 } };
    }
    Tree { nodes }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len().max(1) as f64
}

/// Boosts up to `params.trees` trees; with validation rows the ensemble is
/// cut at the first tree count minimizing validation MSE.
pub fn fit(x: &[Vec<f64>], y: &[f64], val: Option<(&[Vec<f64>], &[f64])>, params: &GbtParams) -> GbtFit {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let base = y.iter().sum::<f64>() / n as f64;
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut pred = vec![base; n];
    let mut vpred: Vec<f64> = val.map_or(Vec::new(), |(vx, _)| vec![base; vx.len()]);
    let mut train_loss = vec![mse(&pred, y)];
    let mut val_loss: Vec<f64> = val.map_or(Vec::new(), |(_, vy)| vec![mse(&vpred, vy)]);
    let mut trees = Vec::with_capacity(params.trees);
    let mut resid = vec![0.0; n];
    for _ in 0..params.trees {
        for i in 0..n {
            resid[i] = y[i] - pred[i];
        }
        let tree = grow_tree(x, &sorted, &resid, params);
        for i in 0..n {
            pred[i] += params.shrinkage * tree.predict(&x[i]);
        }
        train_loss.push(mse(&pred, y));
        if let Some((vx, vy)) = val {
            for (p, r) in vpred.iter_mut().zip(vx) {
                *p += params.shrinkage * tree.predict(r);
            }
            val_loss.push(mse(&vpred, vy));
        }
        trees.push(tree);
    }
    if !val_loss.is_empty() {
        let keep = (0..val_loss.len()).fold(0, |b, i| if val_loss[i] < val_loss[b] { i } else { b });
        trees.truncate(keep);
    }
    GbtFit { model: GbtModel { base, shrinkage: params.shrinkage, trees }, train_loss, val_loss }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_function_fit_exactly() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] < 17.0 { 1.0 } else { 5.0 }).collect();
        let p = GbtParams { trees: 60, max_depth: 1, shrinkage: 0.5, min_leaf: 1 };
        let fit = fit(&x, &y, None, &p);
        for (r, t) in x.iter().zip(&y) {
            assert!((fit.model.predict(r) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn validation_cut_never_worse_than_any_prefix() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 13) as f64, (i * 7 % 11) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 0.3 + (r[1] * 0.9).sin()).collect();
        let vx: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 5) as f64 + 0.5, (i % 9) as f64]).collect();
        let vy: Vec<f64> = vx.iter().map(|r| r[0] * 0.3 + (r[1] * 0.9).sin() + 0.4).collect();
        let fit = fit(&x, &y, Some((&vx, &vy)), &GbtParams::default());
        let chosen = fit.val_loss[fit.model.trees.len()];
        assert!(fit.val_loss.iter().all(|&l| chosen <= l));
    }
}
