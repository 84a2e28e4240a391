//! Per-vertex event rates in a binary sum tree.
//!
//! Internal nodes are always recomputed from their two children, never
//! adjusted by deltas, so the root equals the tree-ordered sum of the current
//! leaves and incremental updates cannot drift.

use crate::model::{GraphState, VertexId};

#[derive(Debug, Clone)]
pub struct RateIndex {
    len: usize,
    size: usize,
    tree: Vec<f64>,
}

impl RateIndex {
    pub fn new(len: usize) -> Self {
        let size = len.next_power_of_two().max(1);
        Self {
            len,
            size,
            tree: vec![0.0; 2 * size],
        }
    }

    /// Index holding `vertex_rate(x)` for every vertex of `state`.
    pub fn from_state(state: &GraphState, lambda: f64) -> Self {
        let mut idx = Self::new(state.len());
        for x in 0..state.len() {
            idx.tree[idx.size + x] = state.vertex_rate(x, lambda);
        }
        for node in (1..idx.size).rev() {
            idx.tree[node] = idx.tree[2 * node] + idx.tree[2 * node + 1];
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    #[inline]
    pub fn get(&self, x: VertexId) -> f64 {
        self.tree[self.size + x]
    }

    pub fn set(&mut self, x: VertexId, rate: f64) {
        debug_assert!(rate >= 0.0 && rate.is_finite());
        let mut node = self.size + x;
        self.tree[node] = rate;
        node /= 2;
        while node >= 1 {
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
            node /= 2;
        }
    }

    /// Refreshes the entry of `x` from the state.
    #[inline]
    pub fn refresh(&mut self, state: &GraphState, x: VertexId, lambda: f64) {
        self.set(x, state.vertex_rate(x, lambda));
    }

    /// Vertex whose cumulative rate interval contains `target`, for
    /// `target` in `[0, total)`. Never returns a zero-rate leaf while the
    /// total is positive.
    pub fn sample(&self, mut target: f64) -> Option<VertexId> {
        if !(self.total() > 0.0) {
            return None;
        }
        let mut node = 1;
        while node < self.size {
            let left = self.tree[2 * node];
            let right = self.tree[2 * node + 1];
            if left > 0.0 && (target < left || !(right > 0.0)) {
                node *= 2;
            } else {
                target -= left;
                node = 2 * node + 1;
            }
        }
        Some(node - self.size)
    }
}
