//! Composite Simpson quadrature on a uniform grid over `[0, 1]`.

use crate::error::{invalid, Result};

/// Default node count for every integral on `[0, 1]`: 2^12 + 1.
pub const DEFAULT_NODES: usize = 4097;

/// Nodes and weights of a composite Simpson rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simpson {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Simpson {
    /// Builds the rule with `nodes` points. An even count is bumped to the next
    /// odd number so the number of intervals is even.
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(invalid(format!("simpson rule needs at least 3 nodes, got {nodes}")));
        }
        let count = if nodes.is_multiple_of(2) { nodes + 1 } else { nodes };
        let intervals = count - 1;
        let h = 1.0 / intervals as f64;
        let nodes: Vec<f64> = (0..count).map(|i| i as f64 * h).collect();
        let weights = (0..count)
            .map(|i| {
                let w = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over `[0, 1]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

impl Default for Simpson {
    fn default() -> Self {
        Self::new(DEFAULT_NODES).expect("default node count is valid")
    }
}
