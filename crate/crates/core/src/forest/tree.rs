use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafValue {
    Mean(f64),
    /// Training-sample count per class.
    Counts(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "node")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: LeafValue },
}

/// Binary tree stored as an arena; node 0 is the root and children always
/// have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(EdfError::EmptyInput);
        }
        for (i, node) in nodes.iter().enumerate() {
            match node {
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    if *left <= i || *right <= i || *left >= nodes.len() || *right >= nodes.len() || left == right {
                        return Err(EdfError::InvalidParameter(format!(
                            "node {i} has invalid children {left}, {right}"
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(EdfError::InvalidParameter(format!("node {i} has a non-finite threshold")));
                    }
                }
                Node::Leaf {
                    value: LeafValue::Counts(c),
                } if c.is_empty() || c.iter().all(|&v| v == 0) => {
                    return Err(EdfError::InvalidParameter(format!("leaf {i} has no class counts")));
                }
                Node::Leaf { .. } => {}
            }
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf(&self, x: ArrayView1<f64>) -> &LeafValue {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.split_features().max()
    }
}

pub(crate) struct GrowParams<'a> {
    pub min_node_size: usize,
    pub mtry: usize,
    pub weights: &'a [f64],
    /// `None` for regression, otherwise the number of classes.
    pub n_classes: Option<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Draws up to `count` distinct features, each draw proportional to the
/// weights of the features not drawn yet. Returned in increasing order.
pub(crate) fn sample_features<R: Rng>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] > 0.0).collect();
    let mut chosen = Vec::with_capacity(count.min(pool.len()));
    while chosen.len() < count && !pool.is_empty() {
        let total: f64 = pool.iter().map(|&j| weights[j]).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (pos, &j) in pool.iter().enumerate() {
            if u < weights[j] {
                pick = pos;
                break;
            }
            u -= weights[j];
        }
        chosen.push(pool.remove(pick));
    }
    chosen.sort_unstable();
    chosen
}

pub(crate) fn grow<R: Rng>(
    x: ArrayView2<f64>,
    y: &Array1<f64>,
    samples: Vec<usize>,
    params: &GrowParams<'_>,
    rng: &mut R,
) -> Tree {
    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, samples)
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, samples)];
    nodes.push(Node::Leaf {
        value: LeafValue::Mean(0.0),
    });
    while let Some((slot, idx)) = stack.pop() {
        let split = if idx.len() <= params.min_node_size || is_pure(y, &idx) {
            None
        } else {
            let candidates = sample_features(params.weights, params.mtry, rng);
            best_split(x, y, &idx, &candidates, params.n_classes)
        };
        match split {
            None => nodes[slot] = Node::Leaf { value: leaf_value(y, &idx, params.n_classes) },
            Some(best) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| x[[i, best.feature]] <= best.threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: LeafValue::Mean(0.0) });
                nodes.push(Node::Leaf { value: LeafValue::Mean(0.0) });
                nodes[slot] = Node::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
                stack.push((right, r));
                stack.push((left, l));
            }
        }
    }
    Tree { nodes }
}

fn is_pure(y: &Array1<f64>, idx: &[usize]) -> bool {
    let first = y[idx[0]];
    idx.iter().all(|&i| y[i] == first)
}

fn leaf_value(y: &Array1<f64>, idx: &[usize], n_classes: Option<usize>) -> LeafValue {
    match n_classes {
        None => LeafValue::Mean(idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64),
        Some(k) => {
            let mut counts = vec![0u32; k];
            for &i in idx {
                counts[y[i] as usize] += 1;
            }
            LeafValue::Counts(counts)
        }
    }
}

/// Exhaustive midpoint search over the candidate features. Gains are the
/// variance reduction (regression) or Gini decrease (classification), both
/// scaled by node size. Ties keep the lowest feature, then lowest threshold.
fn best_split(
    x: ArrayView2<f64>,
    y: &Array1<f64>,
    idx: &[usize],
    candidates: &[usize],
    n_classes: Option<usize>,
) -> Option<BestSplit> {
    let n = idx.len() as f64;
    let parent = match n_classes {
        None => {
            let s: f64 = idx.iter().map(|&i| y[i]).sum();
            s * s / n
        }
        Some(k) => {
            let mut c = vec![0.0; k];
            for &i in idx {
                c[y[i] as usize] += 1.0;
            }
            c.iter().map(|v| v * v).sum::<f64>() / n
        }
    };
    let min_gain = 1e-10 * parent.abs().max(f64::MIN_POSITIVE);
    let mut best: Option<BestSplit> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
    for &feature in candidates {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (x[[i, feature]], y[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs[0].0 == pairs[pairs.len() - 1].0 {
            continue;
        }
        let mut consider = |gain: f64, threshold: f64| {
            if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        };
        match n_classes {
            None => {
                let total: f64 = pairs.iter().map(|p| p.1).sum();
                let mut left_sum = 0.0;
                for k in 0..pairs.len() - 1 {
                    left_sum += pairs[k].1;
                    if pairs[k].0 == pairs[k + 1].0 {
                        continue;
                    }
                    let nl = (k + 1) as f64;
                    let nr = n - nl;
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent;
                    consider(gain, midpoint(pairs[k].0, pairs[k + 1].0));
                }
            }
            Some(kc) => {
                let mut total = vec![0.0; kc];
                for p in pairs.iter() {
                    total[p.1 as usize] += 1.0;
                }
                let mut left = vec![0.0; kc];
                for k in 0..pairs.len() - 1 {
                    left[pairs[k].1 as usize] += 1.0;
                    if pairs[k].0 == pairs[k + 1].0 {
                        continue;
                    }
                    let nl = (k + 1) as f64;
                    let nr = n - nl;
                    let (mut sl, mut sr) = (0.0, 0.0);
                    for c in 0..kc {
                        sl += left[c] * left[c];
                        let r = total[c] - left[c];
                        sr += r * r;
                    }
                    let gain = sl / nl + sr / nr - parent;
                    consider(gain, midpoint(pairs[k].0, pairs[k + 1].0));
                }
            }
        }
    }
    best
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // guard against rounding up to b for adjacent floats
    if m >= b { a } else { m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampling_skips_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = sample_features(&[1.0, 0.0, 2.0, 0.5], 3, &mut rng);
            assert_eq!(s, vec![0, 2, 3]);
        }
        let s = sample_features(&[0.0, 1.0], 2, &mut rng);
        assert_eq!(s, vec![1]);
    }

    #[test]
    fn sampling_frequency_follows_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            counts[sample_features(&[1.0, 2.0, 1.0], 1, &mut rng)[0]] += 1;
        }
        let share = counts[1] as f64 / draws as f64;
        assert!((share - 0.5).abs() < 0.02, "share {share}");
    }

    #[test]
    fn finds_step_split() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = GrowParams {
            min_node_size: 1,
            mtry: 1,
            weights: &[1.0],
            n_classes: Some(2),
        };
        let tree = grow(x.view(), &y, (0..6).collect(), &params, &mut rng);
        match &tree.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.nodes().len(), 3);
    }

    #[test]
    fn from_nodes_validates_children() {
        let bad = vec![Node::Split {
            feature: 0,
            threshold: 0.0,
            left: 0,
            right: 1,
        }];
        assert!(Tree::from_nodes(bad).is_err());
        let empty_counts = vec![Node::Leaf {
            value: LeafValue::Counts(vec![0, 0]),
        }];
        assert!(Tree::from_nodes(empty_counts).is_err());
    }

    #[test]
    fn midpoint_stays_below_upper() {
        let a = 1.0_f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert!(midpoint(a, b) < b);
        assert_eq!(midpoint(1.0, 2.0), 1.5);
    }
}
