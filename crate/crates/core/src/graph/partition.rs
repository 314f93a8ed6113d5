use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{GnnError, Result};

/// 1D vertex-assignment strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    /// `owner = id mod P`.
    Hash,
    /// Contiguous blocks of `⌈n/P⌉` vertices.
    Range,
    /// Descending degree, each vertex to the part with the smallest assigned
    /// degree sum (ties to the lowest part id).
    GreedyBalance,
}

/// Owner map from vertices to parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partitioning {
    num_parts: usize,
    owner: Vec<usize>,
    part_sizes: Vec<usize>,
}

pub fn partition(g: &Graph, parts: usize, strategy: PartitionStrategy) -> Result<Partitioning> {
    let n = g.n();
    if parts < 1 || parts > n {
        return Err(GnnError::InvalidPartCount { parts, n });
    }
    let owner = match strategy {
        PartitionStrategy::Hash => (0..n).map(|i| i % parts).collect(),
        PartitionStrategy::Range => {
            let block = n.div_ceil(parts);
            (0..n).map(|i| i / block).collect()
        }
        PartitionStrategy::GreedyBalance => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| std::cmp::Reverse(g.degree(i)));
            let mut load = vec![0usize; parts];
            let mut owner = vec![0usize; n];
            for i in order {
                let (p, _) = load
                    .iter()
                    .enumerate()
                    .min_by_key(|&(p, &l)| (l, p))
                    .expect("parts >= 1");
                owner[i] = p;
                load[p] += g.degree(i);
            }
            owner
        }
    };
    Partitioning::from_owners(owner, parts)
}

impl Partitioning {
    /// Wraps an explicit owner map.
    pub fn from_owners(owner: Vec<usize>, num_parts: usize) -> Result<Self> {
        if num_parts == 0 {
            return Err(GnnError::InvalidPartCount {
                parts: 0,
                n: owner.len(),
            });
        }
        let mut part_sizes = vec![0usize; num_parts];
        for &p in &owner {
            if p >= num_parts {
                return Err(GnnError::InvalidPartCount {
                    parts: p + 1,
                    n: owner.len(),
                });
            }
            part_sizes[p] += 1;
        }
        Ok(Self {
            num_parts,
            owner,
            part_sizes,
        })
    }

    /// Single part owning every vertex.
    pub fn single(n: usize) -> Self {
        Self::from_owners(vec![0; n], 1).expect("one part")
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    #[inline]
    pub fn owner(&self, i: usize) -> usize {
        self.owner[i]
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn part_sizes(&self) -> &[usize] {
        &self.part_sizes
    }

    /// Vertices of part `p`, ascending.
    pub fn members(&self, p: usize) -> Vec<usize> {
        (0..self.owner.len()).filter(|&i| self.owner[i] == p).collect()
    }

    /// Directed edges `(i, j)` with `owner(i) != owner(j)`.
    pub fn directed_cut_edges(&self, g: &Graph) -> usize {
        (0..g.n())
            .map(|i| {
                g.neighbors(i)
                    .iter()
                    .filter(|&&j| self.owner[j] != self.owner[i])
                    .count()
            })
            .sum()
    }
}

/// Splits `N(i)` into same-owner (local) and other-owner (remote) neighbors.
pub fn neighbor_split(p: &Partitioning, g: &Graph, i: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if i >= g.n() {
        return Err(GnnError::InvalidVertex { vertex: i, n: g.n() });
    }
    Ok(g.neighbors(i).iter().partition(|&&j| p.owner(j) == p.owner(i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, path, star};

    #[test]
    fn single_partition() {
        for s in [
            PartitionStrategy::Hash,
            PartitionStrategy::Range,
            PartitionStrategy::GreedyBalance,
        ] {
            let p = partition(&complete(3), 1, s).unwrap();
            assert_eq!(p.owners(), &[0, 0, 0]);
        }
    }

    #[test]
    fn hash_and_range() {
        assert_eq!(
            partition(&complete(3), 3, PartitionStrategy::Hash).unwrap().owners(),
            &[0, 1, 2]
        );
        assert_eq!(
            partition(&path(5), 2, PartitionStrategy::Range).unwrap().owners(),
            &[0, 0, 0, 1, 1]
        );
    }

    #[test]
    fn greedy_balance_star() {
        // center (degree 4) -> part 0; each leaf goes to the lighter part,
        // which stays part 1 until its degree sum reaches 4.
        let p = partition(&star(5), 2, PartitionStrategy::GreedyBalance).unwrap();
        assert_eq!(p.owners(), &[0, 1, 1, 1, 1]);
        assert_eq!(p.part_sizes(), &[1, 4]);
    }

    #[test]
    fn greedy_ties_to_lowest_part() {
        let p = partition(&path(4), 4, PartitionStrategy::GreedyBalance).unwrap();
        // degrees [1,2,2,1]: 1 -> 0, 2 -> 1, 0 -> 2, 3 -> 3
        assert_eq!(p.owners(), &[2, 0, 1, 3]);
    }

    #[test]
    fn bad_part_counts() {
        let g = complete(3);
        assert!(matches!(
            partition(&g, 0, PartitionStrategy::Hash),
            Err(GnnError::InvalidPartCount { .. })
        ));
        assert!(matches!(
            partition(&g, 4, PartitionStrategy::Hash),
            Err(GnnError::InvalidPartCount { .. })
        ));
    }

    #[test]
    fn splits() {
        let g = complete(3);
        let one = Partitioning::single(3);
        assert_eq!(neighbor_split(&one, &g, 0).unwrap(), (vec![1, 2], vec![]));
        let three = Partitioning::from_owners(vec![0, 1, 2], 3).unwrap();
        assert_eq!(neighbor_split(&three, &g, 0).unwrap(), (vec![], vec![1, 2]));
        let pg = path(3);
        let two = Partitioning::from_owners(vec![0, 0, 1], 2).unwrap();
        assert_eq!(neighbor_split(&two, &pg, 1).unwrap(), (vec![0], vec![2]));
        assert!(neighbor_split(&two, &pg, 3).is_err());
    }
}
