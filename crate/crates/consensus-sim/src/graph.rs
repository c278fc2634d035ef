//! Directed weighted graphs over agent index sets.
//!
//! Edge convention: a positive weight `a[i][j]` encodes the edge
//! `(v_j, v_i)`, i.e. an information channel from agent `j` to agent `i`.
//! Vertices are 0-indexed throughout the crate.

use crate::{Error, Real, Result};

/// Directed weighted graph with no self-loops and weight bounds
/// `0 < a_min <= a_ij <= a_max` on every nonzero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedWeightedGraph<S> {
    n: usize,
    weights: Vec<S>,
    bounds: (S, S),
}

impl<S: Real> DirectedWeightedGraph<S> {
    /// Build a graph from a row-major `n x n` weight matrix. Weight bounds
    /// are taken as the min/max over the nonzero entries.
    pub fn new(n: usize, weights: Vec<S>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} weights, got {}",
                n * n,
                weights.len()
            )));
        }
        let mut lo = S::infinity();
        let mut hi = S::zero();
        for i in 0..n {
            for j in 0..n {
                let w = weights[i * n + j];
                if w < S::zero() {
                    return Err(Error::InvalidParameter(format!(
                        "negative weight at ({i}, {j})"
                    )));
                }
                if i == j && w > S::zero() {
                    return Err(Error::InvalidParameter(format!("self-loop at vertex {i}")));
                }
                if w > S::zero() {
                    lo = lo.min(w);
                    hi = hi.max(w);
                }
            }
        }
        if !lo.is_finite() {
            // no edges at all; bounds are vacuous
            lo = S::one();
            hi = S::one();
        }
        Ok(Self {
            n,
            weights,
            bounds: (lo, hi),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight_bounds(&self) -> (S, S) {
        self.bounds
    }

    /// Weight of the channel from `j` to `i`.
    pub fn weight(&self, i: usize, j: usize) -> S {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Indices of agents whose information `i` can receive.
    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.n,
            });
        }
        Ok((0..self.n)
            .filter(|&j| j != i && self.weight(i, j) > S::zero())
            .collect())
    }

    /// Smallest vertex from which every vertex is reachable, if any.
    pub fn has_spanning_tree(&self) -> Option<usize> {
        (0..self.n)
            .find(|&r| reach_count(self.n, |i, j| self.weight(i, j) > S::zero(), r) == self.n)
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.n > 0
            && (0..self.n)
                .all(|r| reach_count(self.n, |i, j| self.weight(i, j) > S::zero(), r) == self.n)
    }

    /// Union on edge sets; the weight of a shared edge is the maximum over
    /// the contributing graphs, which preserves the weight bounds.
    pub fn union(gs: &[Self]) -> Result<Self> {
        let n = match gs.first() {
            Some(g) => g.n,
            None => return Err(Error::InvalidParameter("union of empty sequence".into())),
        };
        if gs.iter().any(|g| g.n != n) {
            return Err(Error::DimensionMismatch(
                "union over graphs of different orders".into(),
            ));
        }
        let mut weights = vec![S::zero(); n * n];
        for g in gs {
            for (w, gw) in weights.iter_mut().zip(&g.weights) {
                *w = w.max(*gw);
            }
        }
        Self::new(n, weights)
    }
}

/// Number of vertices reachable from `root` by directed paths, following
/// edges `j -> i` whenever `edge(i, j)` holds. `root` counts as reached.
fn reach_count(n: usize, edge: impl Fn(usize, usize) -> bool, root: usize) -> usize {
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    seen[root] = true;
    let mut count = 0;
    while let Some(j) = stack.pop() {
        count += 1;
        for i in 0..n {
            if !seen[i] && edge(i, j) {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    count
}

/// Membership in the class of square nonnegative matrices whose graph has a
/// spanning tree rooted at a vertex with a self-loop. Unlike
/// [`DirectedWeightedGraph`], diagonal entries count as edges here.
pub fn in_gamma_s<S: Real>(n: usize, entries: &[S]) -> bool {
    assert_eq!(entries.len(), n * n, "matrix must be square");
    (0..n).any(|r| {
        entries[r * n + r] > S::zero()
            && reach_count(n, |i, j| entries[i * n + j] > S::zero(), r) == n
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example2_graph() -> DirectedWeightedGraph<f64> {
        DirectedWeightedGraph::new(
            4,
            vec![
                0., 1., 1., 0., //
                1., 0., 0., 0., //
                0., 1., 0., 0., //
                0., 0., 1., 0.,
            ],
        )
        .unwrap()
    }

    #[test]
    fn neighbors_of_example_graph() {
        let g = example2_graph();
        assert_eq!(g.neighbors(0).unwrap(), vec![1, 2]);
        assert_eq!(g.neighbors(1).unwrap(), vec![0]);
        assert!(g.neighbors(4).is_err());
    }

    #[test]
    fn neighbors_of_zero_matrix() {
        let g = DirectedWeightedGraph::<f64>::new(3, vec![0.; 9]).unwrap();
        for i in 0..3 {
            assert!(g.neighbors(i).unwrap().is_empty());
        }
    }

    #[test]
    fn example_graph_has_spanning_tree() {
        assert!(example2_graph().has_spanning_tree().is_some());
    }

    #[test]
    fn single_vertex_is_its_own_root() {
        let g = DirectedWeightedGraph::<f64>::new(1, vec![0.]).unwrap();
        assert_eq!(g.has_spanning_tree(), Some(0));
    }

    #[test]
    fn isolated_pair_has_no_root() {
        let g = DirectedWeightedGraph::<f64>::new(2, vec![0.; 4]).unwrap();
        assert_eq!(g.has_spanning_tree(), None);
    }

    #[test]
    fn union_of_disjoint_edges() {
        let a = DirectedWeightedGraph::new(2, vec![0., 1., 0., 0.]).unwrap();
        let b = DirectedWeightedGraph::new(2, vec![0., 0., 1., 0.]).unwrap();
        let u = DirectedWeightedGraph::union(&[a, b]).unwrap();
        assert!(u.weight(0, 1) > 0. && u.weight(1, 0) > 0.);
        assert_eq!(u.has_spanning_tree(), Some(0));
    }

    #[test]
    fn self_loop_rejected() {
        assert!(DirectedWeightedGraph::new(2, vec![1., 0., 0., 0.]).is_err());
    }

    #[test]
    fn gamma_s_examples() {
        // identity: no cross edges, cannot reach the other vertex
        assert!(!in_gamma_s(2, &[1., 0., 0., 1.]));
        // root v0 has a self-loop and reaches v1
        assert!(in_gamma_s(2, &[1., 1., 1., 0.]));
        assert!(in_gamma_s(2, &[1., 0., 1., 0.]));
    }

    /// Transitive-closure oracle for reachability.
    fn closure(n: usize, entries: &[f64]) -> Vec<bool> {
        let mut reach: Vec<bool> = entries.iter().map(|&w| w > 0.).collect();
        for i in 0..n {
            reach[i * n + i] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    // j -> k -> i
                    if reach[i * n + k] && reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
        reach
    }

    fn arb_pattern(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], n * n)
    }

    proptest! {
        #[test]
        fn spanning_tree_matches_closure_oracle(mut w in arb_pattern(5)) {
            let n = 5;
            for i in 0..n { w[i * n + i] = 0.0; }
            let g = DirectedWeightedGraph::new(n, w.clone()).unwrap();
            let reach = closure(n, &w);
            let oracle = (0..n).find(|&r| (0..n).all(|i| reach[i * n + r]));
            prop_assert_eq!(g.has_spanning_tree(), oracle);
        }

        #[test]
        fn gamma_s_matches_root_enumeration(w in arb_pattern(4)) {
            let n = 4;
            let reach = closure(n, &w);
            let oracle = (0..n).any(|r| w[r * n + r] > 0. && (0..n).all(|i| reach[i * n + r]));
            prop_assert_eq!(in_gamma_s(n, &w), oracle);
        }

        #[test]
        fn union_matches_entrywise_or(a in arb_pattern(4), b in arb_pattern(4), c in arb_pattern(4)) {
            let n = 4;
            let clear = |mut w: Vec<f64>| { for i in 0..n { w[i * n + i] = 0.; } w };
            let (a, b, c) = (clear(a), clear(b), clear(c));
            let gs: Vec<_> = [&a, &b, &c]
                .iter()
                .map(|w| DirectedWeightedGraph::new(n, w.to_vec()).unwrap())
                .collect();
            let u = DirectedWeightedGraph::union(&gs).unwrap();
            for idx in 0..n * n {
                prop_assert_eq!(u.weights()[idx] > 0., a[idx] > 0. || b[idx] > 0. || c[idx] > 0.);
            }
            // idempotence and commutativity at the edge-set level
            let uu = DirectedWeightedGraph::union(&[u.clone(), u.clone()]).unwrap();
            prop_assert_eq!(&uu, &u);
            let rev: Vec<_> = gs.iter().rev().cloned().collect();
            let ur = DirectedWeightedGraph::union(&rev).unwrap();
            prop_assert_eq!(&ur, &u);
        }
    }

    #[test]
    fn strongly_connected_implies_spanning_tree() {
        let g = DirectedWeightedGraph::new(3, vec![0., 1., 0., 0., 0., 1., 1., 0., 0.]).unwrap();
        assert!(g.is_strongly_connected());
        assert!(g.has_spanning_tree().is_some());
    }
}
