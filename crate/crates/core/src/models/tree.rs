//! CART regression trees grown by exhaustive variance-reduction search.

use serde::{Deserialize, Serialize};

use super::rng::StreamRng;
use super::Regressor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 4,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn check(&self) -> Result<()> {
        if self.max_depth < 1 || self.min_samples_leaf < 1 {
            return Err(Error::InvalidParams(format!(
                "tree needs max_depth >= 1 and min_samples_leaf >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub n_features: usize,
    /// Pre-order node list; the root is node 0.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Features used by any split.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

impl Regressor for RegressionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

pub fn fit_tree(x: &Matrix, y: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    check_data(x, y)?;
    params.check()?;
    let indices: Vec<usize> = (0..x.rows()).collect();
    Ok(grow(x, y, params, indices, None))
}

pub(crate) fn check_data(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() == 0 || x.rows() != y.len() {
        return Err(Error::InvalidParams(format!(
            "need matching non-empty data ({} rows, {} targets)",
            x.rows(),
            y.len()
        )));
    }
    Ok(())
}

/// Per-split feature sampling used by forests.
pub(crate) struct FeatureSampler<'a> {
    pub rng: &'a mut StreamRng,
    pub k: usize,
}

/// Grows a tree over `indices` (ascending; duplicates allowed for bootstrap
/// samples).
pub(crate) fn grow(
    x: &Matrix,
    y: &[f64],
    params: &TreeParams,
    indices: Vec<usize>,
    sampler: Option<FeatureSampler<'_>>,
) -> RegressionTree {
    let mut builder = Builder {
        x,
        y,
        params,
        sampler,
        nodes: Vec::new(),
    };
    builder.build(indices, 0);
    RegressionTree {
        n_features: x.cols(),
        nodes: builder.nodes,
    }
}

struct Builder<'a, 'r> {
    x: &'a Matrix,
    y: &'a [f64],
    params: &'a TreeParams,
    sampler: Option<FeatureSampler<'r>>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_, '_> {
    fn build(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = indices.iter().map(|&i| self.y[i]).sum::<f64>() / indices.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });

        if depth >= self.params.max_depth || indices.len() < 2 * self.params.min_samples_leaf {
            return id;
        }
        let Some(best) = self.best_split(&indices, mean) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&mut self, indices: &[usize], mean: f64) -> Option<Candidate> {
        let d = self.x.cols();
        let features: Vec<usize> = match self.sampler.as_mut() {
            Some(s) if s.k < d => s.rng.choose_sorted(d, s.k),
            _ => (0..d).collect(),
        };

        let n = indices.len();
        let sse: f64 = indices.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let tol = 1e-12 * sse;
        if !(sse > 0.0) {
            return None;
        }
        let msl = self.params.min_samples_leaf;
        let mut best: Option<Candidate> = None;
        let mut order = indices.to_vec();
        for &f in &features {
            order.copy_from_slice(indices);
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            // Gain of a split is n * S_L^2 / (n_L * n_R), with S_L the
            // left-side sum of centred targets.
            let mut s_left = 0.0;
            for pos in 1..n {
                s_left += self.y[order[pos - 1]] - mean;
                if pos < msl || n - pos < msl {
                    continue;
                }
                let lo = self.x.get(order[pos - 1], f);
                let hi = self.x.get(order[pos], f);
                if lo == hi {
                    continue;
                }
                let (nl, nr) = (pos as f64, (n - pos) as f64);
                let gain = n as f64 * s_left * s_left / (nl * nr);
                if gain > tol && best.is_none_or(|b| gain > b.gain + tol) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(lo, hi),
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Split threshold between consecutive distinct values; always `lo <= t < hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = (lo + hi) / 2.0;
    if t >= hi {
        lo
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn step_function() {
        let t = fit_tree(
            &col(&[0.0, 1.0, 2.0, 3.0]),
            &[0.0, 0.0, 10.0, 10.0],
            &TreeParams {
                max_depth: 1,
                min_samples_leaf: 1,
            },
        )
        .unwrap();
        assert_eq!(
            t.nodes,
            vec![
                Node::Split {
                    feature: 0,
                    threshold: 1.5,
                    left: 1,
                    right: 2
                },
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 10.0 },
            ]
        );
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let t = fit_tree(&col(&[0.0, 1.0, 2.0]), &[4.0; 3], &TreeParams::default()).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 4.0 }]);
    }

    #[test]
    fn alternating_target_depth_one() {
        // Splits at 0.5 and 2.5 both remove 100/3 of the 100 SSE; 1.5 removes
        // nothing. The lower threshold wins the tie.
        let t = fit_tree(
            &col(&[0.0, 1.0, 2.0, 3.0]),
            &[0.0, 10.0, 0.0, 10.0],
            &TreeParams {
                max_depth: 1,
                min_samples_leaf: 1,
            },
        )
        .unwrap();
        assert_eq!(
            t.nodes,
            vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2
                },
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 20.0 / 3.0 },
            ]
        );
    }

    #[test]
    fn zero_gain_split_is_refused() {
        let t = fit_tree(
            &col(&[0.0, 1.0, 2.0, 3.0]),
            &[0.0, 10.0, 0.0, 10.0],
            &TreeParams {
                max_depth: 1,
                min_samples_leaf: 2,
            },
        )
        .unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 5.0 }]);
    }

    #[test]
    fn min_leaf_and_bad_params() {
        let t = fit_tree(
            &col(&[0.0, 1.0, 2.0]),
            &[0.0, 0.0, 9.0],
            &TreeParams {
                max_depth: 3,
                min_samples_leaf: 2,
            },
        )
        .unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!(fit_tree(
            &col(&[0.0]),
            &[0.0],
            &TreeParams {
                max_depth: 0,
                min_samples_leaf: 1
            }
        )
        .is_err());
    }

    #[test]
    fn midpoint_of_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = midpoint(lo, hi);
        assert!(lo <= t && t < hi);
    }
}
