//! Graph construction, normalization, partitioning and sampling.

mod generate;
mod normalize;
mod partition;
mod sample;

pub use generate::{complete, erdos_renyi, path, sbm, star, Sbm};
pub use normalize::{normalize, NormKind, SparseOperator};
pub use partition::{neighbor_split, partition, PartitionStrategy, Partitioning};
pub use sample::{sample_neighborhood, SampledSubgraph};

use std::fmt::Write as _;

use crate::error::{GnnError, Result};

/// Undirected graph in CSR form with both edge directions stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    m: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    degrees: Vec<usize>,
}

/// Builds a symmetric CSR graph from an undirected edge list.
///
/// Duplicate edges (in either orientation) collapse; self-loops are rejected
/// because the diagonal is owned by normalization.
pub fn build_csr(edges: &[(usize, usize)], n: usize) -> Result<Graph> {
    let mut directed = Vec::with_capacity(edges.len() * 2);
    for &(u, v) in edges {
        for x in [u, v] {
            if x >= n {
                return Err(GnnError::InvalidVertex { vertex: x, n });
            }
        }
        if u == v {
            return Err(GnnError::SelfLoopInput(u));
        }
        directed.push((u, v));
        directed.push((v, u));
    }
    directed.sort_unstable();
    directed.dedup();

    let mut row_offsets = vec![0usize; n + 1];
    for &(u, _) in &directed {
        row_offsets[u + 1] += 1;
    }
    for i in 0..n {
        row_offsets[i + 1] += row_offsets[i];
    }
    let col_indices: Vec<usize> = directed.iter().map(|&(_, v)| v).collect();
    let degrees = (0..n).map(|i| row_offsets[i + 1] - row_offsets[i]).collect();
    Ok(Graph {
        n,
        m: col_indices.len() / 2,
        row_offsets,
        col_indices,
        degrees,
    })
}

impl Graph {
    /// Vertex count.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Undirected edge count.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Stored (directed) entries, `2m`.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    /// Sorted neighbors `N(i)`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Undirected edges with `u < v`, in CSR order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect()
    }

    /// Relabels vertex `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let edges: Vec<_> = self.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        build_csr(&edges, self.n)
    }

    /// Serializes to the edge-list text format. The leading `# n=` comment
    /// preserves trailing isolated vertices.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# n={}\n", self.n);
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }
}

/// Parses the edge-list text format: one `u v` pair per line, `#` comments.
///
/// The vertex count is the largest id plus one, or the value of a
/// `# n=<count>` comment when one is present and larger.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut n = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("n=") {
                if let Ok(declared) = v.trim().parse::<usize>() {
                    n = n.max(declared);
                }
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next = |what: &str| -> Result<usize> {
            it.next()
                .ok_or_else(|| GnnError::Parse {
                    line: lineno + 1,
                    msg: format!("missing {what}"),
                })?
                .parse::<usize>()
                .map_err(|e| GnnError::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                })
        };
        let u = next("source")?;
        let v = next("target")?;
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v));
    }
    build_csr(&edges, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> Graph {
        build_csr(&[(0, 1), (0, 2), (1, 2)], 3).unwrap()
    }

    #[test]
    fn triangle_offsets_and_degrees() {
        let g = k3();
        assert_eq!(g.row_offsets(), &[0, 2, 4, 6]);
        assert_eq!(g.degrees(), &[2, 2, 2]);
        assert_eq!(g.m(), 3);
        assert_eq!(g.nnz(), 6);
    }

    #[test]
    fn isolated_vertex() {
        let g = build_csr(&[], 1).unwrap();
        assert_eq!(g.row_offsets(), &[0, 0]);
        assert_eq!(g.degrees(), &[0]);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let g = build_csr(&[(0, 1), (1, 0)], 2).unwrap();
        assert_eq!(g.m(), 1);
        assert_eq!(g.degrees(), &[1, 1]);
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(
            build_csr(&[(0, 3)], 3),
            Err(GnnError::InvalidVertex { vertex: 3, n: 3 })
        );
        assert_eq!(build_csr(&[(1, 1)], 3), Err(GnnError::SelfLoopInput(1)));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = build_csr(&[(0, 1), (2, 3)], 6).unwrap();
        let text = g.to_edge_list();
        assert_eq!(parse_edge_list(&text).unwrap(), g);
        let parsed = parse_edge_list("# comment\n0 1\n\n1   2\n").unwrap();
        assert_eq!(parsed.n(), 3);
        assert!(matches!(parse_edge_list("0 x\n"), Err(GnnError::Parse { line: 1, .. })));
    }
}
