//! Undirected simple graphs and their Betti numbers.
//!
//! A graph is treated as a 1-dimensional simplicial complex, so the only
//! nonzero Betti numbers are β0 (connected components, isolated vertices
//! included) and β1 (independent cycles). [`betti`] uses a union-find pass
//! and the Euler relation β1 = |E| − |V| + β0; [`betti_oracle`] recomputes
//! both numbers from scratch by traversal and GF(2) elimination of the
//! boundary matrix, and exists to check the fast path.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::union_find::UnionFind;

/// Largest vertex count accepted by [`betti_oracle`].
pub const ORACLE_MAX_VERTICES: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UndirectedGraph {
    vertex_count: usize,
    // Normalized as (min, max).
    edges: BTreeSet<(usize, usize)>,
}

impl UndirectedGraph {
    /// Graph with `vertex_count` vertices and no edges.
    pub fn empty(vertex_count: usize) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidGraph("vertex count must be positive".into()));
        }
        Ok(Self {
            vertex_count,
            edges: BTreeSet::new(),
        })
    }

    /// Builds a graph from unordered pairs. Duplicate pairs (in either
    /// orientation) collapse; self-loops and out-of-range endpoints are rejected.
    pub fn new(vertex_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(vertex_count)?;
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    /// Complete graph on `vertex_count` vertices.
    pub fn complete(vertex_count: usize) -> Result<Self> {
        let n = vertex_count;
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Inserts `{a, b}`. Returns `Ok(false)` if the edge was already present.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<bool> {
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
        }
        let hi = a.max(b);
        if hi >= self.vertex_count {
            return Err(Error::InvalidGraph(format!(
                "endpoint {hi} out of range for {} vertices",
                self.vertex_count
            )));
        }
        Ok(self.edges.insert((a.min(b), hi)))
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Edges as `(lo, hi)` pairs in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn is_subgraph_of(&self, other: &UndirectedGraph) -> bool {
        self.vertex_count == other.vertex_count && self.edges.is_subset(&other.edges)
    }
}

/// The two Betti numbers of a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BettiPair {
    pub beta0: usize,
    pub beta1: usize,
}

impl BettiPair {
    pub const fn new(beta0: usize, beta1: usize) -> Self {
        Self { beta0, beta1 }
    }
}

/// Betti numbers via union-find over the edge set.
pub fn betti(g: &UndirectedGraph) -> BettiPair {
    let mut uf = UnionFind::new(g.vertex_count);
    for (a, b) in g.edges() {
        uf.union(a, b);
    }
    let beta0 = uf.components();
    BettiPair {
        beta0,
        beta1: g.edge_count() + beta0 - g.vertex_count,
    }
}

/// Independent recomputation for small graphs.
///
/// β0 comes from a depth-first traversal. β1 is the dimension of the cycle
/// space, `|E| − rank(∂1)`, with the vertex-edge boundary matrix reduced over
/// GF(2). Each column of ∂1 fits in one `u64` because of the vertex cap.
pub fn betti_oracle(g: &UndirectedGraph) -> Result<BettiPair> {
    let n = g.vertex_count;
    if n > ORACLE_MAX_VERTICES {
        return Err(Error::OracleTooLarge {
            vertices: n,
            cap: ORACLE_MAX_VERTICES,
        });
    }

    let mut adjacency = vec![Vec::new(); n];
    for (a, b) in g.edges() {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut beta0 = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        beta0 += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }

    let columns: Vec<u64> = g.edges().map(|(a, b)| (1u64 << a) | (1u64 << b)).collect();
    let rank = gf2_rank(columns);

    Ok(BettiPair {
        beta0,
        beta1: g.edge_count() - rank,
    })
}

/// Rank over GF(2) of a set of bit-packed column vectors.
fn gf2_rank(mut columns: Vec<u64>) -> usize {
    let mut rank = 0;
    for bit in 0..64 {
        let mask = 1u64 << bit;
        let Some(pivot) = (rank..columns.len()).find(|&c| columns[c] & mask != 0) else {
            continue;
        };
        columns.swap(rank, pivot);
        let pivot_col = columns[rank];
        for col in columns[rank + 1..].iter_mut() {
            if *col & mask != 0 {
                *col ^= pivot_col;
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edgeless_graph() {
        let g = UndirectedGraph::empty(4).unwrap();
        assert_eq!(betti(&g), BettiPair::new(4, 0));
    }

    #[test]
    fn triangle() {
        let g = UndirectedGraph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(betti(&g), BettiPair::new(1, 1));
        assert_eq!(betti_oracle(&g).unwrap(), BettiPair::new(1, 1));
    }

    #[test]
    fn triangle_incidence_rank_is_two() {
        let cols = vec![0b011, 0b110, 0b101];
        assert_eq!(gf2_rank(cols), 2);
    }

    #[test]
    fn k5() {
        let g = UndirectedGraph::complete(5).unwrap();
        assert_eq!(g.edge_count(), 10);
        assert_eq!(betti(&g), BettiPair::new(1, 6));
        assert_eq!(betti_oracle(&g).unwrap(), BettiPair::new(1, 6));
    }

    #[test]
    fn single_edge_is_a_tree() {
        let g = UndirectedGraph::new(2, [(0, 1)]).unwrap();
        assert_eq!(betti_oracle(&g).unwrap(), BettiPair::new(1, 0));
    }

    #[test]
    fn rejects_loops_and_out_of_range() {
        assert!(matches!(
            UndirectedGraph::new(3, [(1, 1)]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            UndirectedGraph::new(3, [(0, 3)]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(UndirectedGraph::empty(0).is_err());
    }

    #[test]
    fn duplicate_edges_collapse() {
        let g = UndirectedGraph::new(3, [(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn oracle_rejects_large_graphs() {
        let g = UndirectedGraph::empty(65).unwrap();
        assert!(matches!(
            betti_oracle(&g),
            Err(Error::OracleTooLarge { vertices: 65, .. })
        ));
        let g = UndirectedGraph::complete(64).unwrap();
        assert_eq!(betti_oracle(&g).unwrap(), betti(&g));
    }

    fn arb_graph(max_n: usize) -> impl Strategy<Value = UndirectedGraph> {
        (1..=max_n)
            .prop_flat_map(|n| {
                let pairs = n * (n - 1) / 2;
                (Just(n), proptest::collection::vec(any::<bool>(), pairs))
            })
            .prop_map(|(n, mask)| {
                let all = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
                let edges = all.zip(mask).filter(|(_, keep)| *keep).map(|(e, _)| e);
                UndirectedGraph::new(n, edges).unwrap()
            })
    }

    proptest! {
        #[test]
        fn fast_path_matches_oracle(g in arb_graph(10)) {
            prop_assert_eq!(betti(&g), betti_oracle(&g).unwrap());
        }

        #[test]
        fn beta0_bounds(g in arb_graph(12)) {
            let b = betti(&g);
            prop_assert!(b.beta0 >= 1 && b.beta0 <= g.vertex_count());
            prop_assert_eq!(b.beta1 + g.vertex_count(), g.edge_count() + b.beta0);
        }

        #[test]
        fn adding_an_edge_changes_exactly_one_number(
            g in arb_graph(10),
            a in 0usize..10,
            b in 0usize..10,
        ) {
            let n = g.vertex_count();
            let (a, b) = (a % n, b % n);
            prop_assume!(a != b && !g.has_edge(a, b));
            let before = betti(&g);
            let mut h = g.clone();
            h.add_edge(a, b).unwrap();
            let after = betti(&h);
            let merged = after.beta0 + 1 == before.beta0 && after.beta1 == before.beta1;
            let cycled = after.beta0 == before.beta0 && after.beta1 == before.beta1 + 1;
            prop_assert!(merged ^ cycled);
        }

        #[test]
        fn forests_have_no_cycles(n in 1usize..30, seeds in proptest::collection::vec(any::<u32>(), 30)) {
            // Each vertex i > 0 optionally attaches to one earlier vertex.
            let edges = (1..n).filter_map(|i| {
                let s = seeds[i] as usize;
                (!s.is_multiple_of(3)).then(|| (s % i, i))
            });
            let g = UndirectedGraph::new(n, edges).unwrap();
            prop_assert_eq!(betti(&g).beta1, 0);
        }

        #[test]
        fn connected_graphs_have_one_component(g in arb_graph(10)) {
            // Add a spanning path to force connectivity.
            let mut h = g.clone();
            for i in 1..h.vertex_count() {
                h.add_edge(i - 1, i).unwrap();
            }
            prop_assert_eq!(betti(&h).beta0, 1);
        }
    }
}
