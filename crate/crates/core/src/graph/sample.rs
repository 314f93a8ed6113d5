use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;

use super::Graph;
use crate::error::{GnnError, Result};
use crate::rng::{stream_rng, vertex_hop_stream};

/// Fixed-fanout multi-hop neighborhood sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledSubgraph {
    pub targets: Vec<usize>,
    /// `layers[h - 1]` maps every vertex expanded at hop `h` to its sampled
    /// neighbors (ascending).
    pub layers: Vec<BTreeMap<usize, Vec<usize>>>,
    pub fanout: usize,
    pub seed: u64,
}

/// Sampled neighbors of `v` at `hop`; a pure function of `(seed, v, hop)`.
fn sample_one(g: &Graph, v: usize, hop: usize, fanout: usize, seed: u64) -> Vec<usize> {
    let nbrs = g.neighbors(v);
    if nbrs.len() <= fanout {
        return nbrs.to_vec();
    }
    let mut rng = stream_rng(seed, vertex_hop_stream(v, hop));
    let mut picked: Vec<usize> = index::sample(&mut rng, nbrs.len(), fanout)
        .into_iter()
        .map(|p| nbrs[p])
        .collect();
    picked.sort_unstable();
    picked
}

/// GraphSAGE-style uniform sampling without replacement, `fanout` neighbors
/// per expanded vertex per hop, `depth` hops.
pub fn sample_neighborhood(
    g: &Graph,
    targets: &[usize],
    fanout: usize,
    depth: usize,
    seed: u64,
) -> Result<SampledSubgraph> {
    if targets.is_empty() {
        return Err(GnnError::EmptyTargets);
    }
    if fanout == 0 || depth == 0 {
        return Err(GnnError::InvalidParameter(format!(
            "fanout {fanout} and depth {depth} must be >= 1"
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= g.n()) {
        return Err(GnnError::InvalidVertex { vertex: t, n: g.n() });
    }
    let mut frontier: BTreeSet<usize> = targets.iter().copied().collect();
    let mut layers = Vec::with_capacity(depth);
    for hop in 1..=depth {
        let layer: BTreeMap<usize, Vec<usize>> = frontier
            .iter()
            .map(|&v| (v, sample_one(g, v, hop, fanout, seed)))
            .collect();
        frontier = layer.values().flatten().copied().collect();
        layers.push(layer);
    }
    Ok(SampledSubgraph {
        targets: targets.to_vec(),
        layers,
        fanout,
        seed,
    })
}

impl SampledSubgraph {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Distinct vertices in the sampled computation tree of `target`.
    pub fn support(&self, target: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([target]);
        let mut frontier = BTreeSet::from([target]);
        for layer in &self.layers {
            let next: BTreeSet<usize> = frontier
                .iter()
                .flat_map(|v| layer.get(v).into_iter().flatten().copied())
                .collect();
            seen.extend(next.iter().copied());
            frontier = next;
        }
        seen
    }

    /// Nodes of the (unrolled) sampled computation tree of `target`: the
    /// per-target feature work of a sampled forward pass scales with this.
    pub fn tree_size(&self, target: usize) -> usize {
        let mut level = vec![target];
        let mut total = 1;
        for layer in &self.layers {
            level = level
                .iter()
                .flat_map(|v| layer.get(v).into_iter().flatten().copied())
                .collect();
            total += level.len();
        }
        total
    }

    /// `Σ_{l=0..depth} fanout^l`.
    pub fn explosion_bound(&self) -> usize {
        explosion_bound(self.fanout, self.depth())
    }
}

pub(crate) fn explosion_bound(fanout: usize, depth: usize) -> usize {
    (0..=depth).map(|l| fanout.pow(l as u32)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, erdos_renyi};

    #[test]
    fn saturated_fanout_returns_full_neighborhoods() {
        let g = erdos_renyi(30, 4.0, 5).unwrap();
        let s = sample_neighborhood(&g, &[0, 1, 2], g.max_degree().max(1), 2, 9).unwrap();
        for layer in &s.layers {
            for (v, nb) in layer {
                assert_eq!(nb.as_slice(), g.neighbors(*v));
            }
        }
    }

    #[test]
    fn geometric_bound() {
        let g = complete(10);
        let s = sample_neighborhood(&g, &[0], 2, 2, 1).unwrap();
        assert!(s.support(0).len() <= 7);
        assert_eq!(s.explosion_bound(), 7);
        assert_eq!(s.tree_size(0), 7);
    }

    #[test]
    fn k3_single_sample_is_stable() {
        let g = complete(3);
        let a = sample_neighborhood(&g, &[0], 1, 1, 42).unwrap();
        let b = sample_neighborhood(&g, &[0], 1, 1, 42).unwrap();
        assert_eq!(a, b);
        let picked = &a.layers[0][&0];
        assert_eq!(picked.len(), 1);
        assert!(picked[0] == 1 || picked[0] == 2);
    }

    #[test]
    fn errors() {
        let g = complete(3);
        assert_eq!(sample_neighborhood(&g, &[], 1, 1, 0), Err(GnnError::EmptyTargets));
        assert!(sample_neighborhood(&g, &[0], 0, 1, 0).is_err());
        assert!(sample_neighborhood(&g, &[5], 1, 1, 0).is_err());
    }
}
