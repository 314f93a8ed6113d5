//! Synthetic graph families.

use rand::Rng;

use super::{build_csr, Graph};
use crate::error::{GnnError, Result};
use crate::rng::stream_rng;

pub fn complete(n: usize) -> Graph {
    let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    build_csr(&edges, n).expect("valid by construction")
}

pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    build_csr(&edges, n).expect("valid by construction")
}

/// Star with center 0 and leaves `1..n`.
pub fn star(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|v| (0, v)).collect();
    build_csr(&edges, n).expect("valid by construction")
}

fn check_prob(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GnnError::InvalidParameter(format!("{name} = {p} not in [0,1]")));
    }
    Ok(())
}

/// G(n, p) with `p = expected_degree / (n - 1)`. Pair `(u, v)`, `u < v`, is
/// drawn from stream `u`.
pub fn erdos_renyi(n: usize, expected_degree: f64, seed: u64) -> Result<Graph> {
    if n == 0 || expected_degree < 0.0 {
        return Err(GnnError::InvalidParameter(format!("er(n={n}, d={expected_degree})")));
    }
    let p = if n > 1 { expected_degree / (n - 1) as f64 } else { 0.0 };
    check_prob(p, "edge probability")?;
    let mut edges = Vec::new();
    for u in 0..n {
        let mut rng = stream_rng(seed, u as u64);
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    build_csr(&edges, n)
}

/// A stochastic block model sample with its ground-truth communities.
#[derive(Debug, Clone)]
pub struct Sbm {
    pub graph: Graph,
    pub community: Vec<usize>,
}

/// Stochastic block model with contiguous, near-equal communities.
pub fn sbm(n: usize, communities: usize, p_in: f64, p_out: f64, seed: u64) -> Result<Sbm> {
    if n == 0 || communities == 0 || communities > n {
        return Err(GnnError::InvalidParameter(format!(
            "sbm(n={n}, communities={communities})"
        )));
    }
    check_prob(p_in, "p_in")?;
    check_prob(p_out, "p_out")?;
    let community: Vec<usize> = (0..n).map(|i| i * communities / n).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        let mut rng = stream_rng(seed, u as u64);
        for v in u + 1..n {
            let p = if community[u] == community[v] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok(Sbm {
        graph: build_csr(&edges, n)?,
        community,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(complete(4).m(), 6);
        assert_eq!(path(4).m(), 3);
        let s = star(5);
        assert_eq!(s.degrees(), &[4, 1, 1, 1, 1]);
    }

    #[test]
    fn er_is_deterministic_and_near_expected_degree() {
        let a = erdos_renyi(256, 8.0, 11).unwrap();
        assert_eq!(a, erdos_renyi(256, 8.0, 11).unwrap());
        let avg = a.nnz() as f64 / 256.0;
        assert!((avg - 8.0).abs() < 1.5, "avg degree {avg}");
    }

    #[test]
    fn sbm_communities() {
        let s = sbm(60, 2, 0.5, 0.02, 3).unwrap();
        assert_eq!(s.community[29], 0);
        assert_eq!(s.community[30], 1);
        assert!(sbm(10, 2, 1.5, 0.0, 0).is_err());
    }
}
