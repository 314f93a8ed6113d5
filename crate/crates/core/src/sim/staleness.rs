//! Staleness bounds and versioned feature storage.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{GnnError, Result};

/// Iteration (`T`) and layer (`L`) staleness bounds for the self term (φ)
/// and the local and remote neighbor terms (ψ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StalenessConfig {
    pub t_phi: usize,
    pub t_psi_local: usize,
    pub t_psi_remote: usize,
    pub l_phi: usize,
    pub l_psi_local: usize,
    pub l_psi_remote: usize,
}

impl Default for StalenessConfig {
    fn default() -> Self {
        Self::synchronous()
    }
}

/// Which term of the update a read feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadKind {
    Phi,
    PsiLocal,
    PsiRemote,
    GradLocal,
    GradRemote,
}

impl StalenessConfig {
    /// `T_* = 0`, `L_* = 1`.
    pub fn synchronous() -> Self {
        Self {
            t_phi: 0,
            t_psi_local: 0,
            t_psi_remote: 0,
            l_phi: 1,
            l_psi_local: 1,
            l_psi_remote: 1,
        }
    }

    pub fn is_synchronous(&self) -> bool {
        *self == Self::synchronous()
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_phi == 0 || self.l_psi_local == 0 || self.l_psi_remote == 0 {
            return Err(GnnError::InvalidStaleness(
                "layer bounds must be >= 1 (0 would forbid every input version)".into(),
            ));
        }
        Ok(())
    }

    /// `(T, L)` bound for a feature read of `kind`.
    pub fn bound(&self, kind: ReadKind) -> (usize, usize) {
        match kind {
            ReadKind::Phi => (self.t_phi, self.l_phi),
            ReadKind::PsiLocal => (self.t_psi_local, self.l_psi_local),
            ReadKind::PsiRemote => (self.t_psi_remote, self.l_psi_remote),
            ReadKind::GradLocal | ReadKind::GradRemote => (0, 1),
        }
    }

    pub fn max_t(&self) -> usize {
        self.t_phi.max(self.t_psi_local).max(self.t_psi_remote)
    }

    pub fn max_l(&self) -> usize {
        self.l_phi.max(self.l_psi_local).max(self.l_psi_remote)
    }
}

/// Iteration and layer bounds on gradient reads: `∇h^{(t,l)}` combines
/// upstream gradients of versions `(t', l+1)` with `t − T ≤ t' ≤ t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientStaleness {
    pub t_local: usize,
    pub t_remote: usize,
    pub l_local: usize,
    pub l_remote: usize,
}

impl GradientStaleness {
    pub fn synchronous() -> Self {
        Self {
            t_local: 0,
            t_remote: 0,
            l_local: 1,
            l_remote: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_local != 1 || self.l_remote != 1 {
            return Err(GnnError::InvalidStaleness(
                "gradient layer bounds other than 1 are not supported".into(),
            ));
        }
        Ok(())
    }

    pub fn bound(&self, kind: ReadKind) -> (usize, usize) {
        match kind {
            ReadKind::GradRemote => (self.t_remote, self.l_remote),
            _ => (self.t_local, self.l_local),
        }
    }
}

/// A version `(iteration, layer)`, ordered lexicographically.
pub type Version = (usize, usize);

/// Per-vertex store of feature vectors keyed by version. Versions of one
/// vertex arrive in increasing order; [`VersionedBuffer::retire_before`]
/// drops versions no reader can still accept.
#[derive(Debug, Clone)]
pub struct VersionedBuffer {
    rings: Vec<VecDeque<(Version, Vec<f64>)>>,
    peak: usize,
}

impl VersionedBuffer {
    pub fn new(n: usize) -> Self {
        Self {
            rings: vec![VecDeque::new(); n],
            peak: 0,
        }
    }

    pub fn insert(&mut self, vertex: usize, version: Version, value: Vec<f64>) {
        let ring = &mut self.rings[vertex];
        debug_assert!(ring.back().is_none_or(|(v, _)| *v < version));
        ring.push_back((version, value));
        self.peak = self.peak.max(ring.len());
    }

    pub fn get(&self, vertex: usize, version: Version) -> Option<&[f64]> {
        let ring = &self.rings[vertex];
        ring.binary_search_by(|(v, _)| v.cmp(&version))
            .ok()
            .map(|idx| ring[idx].1.as_slice())
    }

    /// Stored versions of `vertex`, oldest first.
    pub fn versions(&self, vertex: usize) -> impl Iterator<Item = Version> + '_ {
        self.rings[vertex].iter().map(|(v, _)| *v)
    }

    pub fn len(&self, vertex: usize) -> usize {
        self.rings[vertex].len()
    }

    /// Drops every version with iteration `< t`.
    pub fn retire_before(&mut self, t: usize) {
        for ring in &mut self.rings {
            while ring.front().is_some_and(|((ti, _), _)| *ti < t) {
                ring.pop_front();
            }
        }
    }

    /// Largest number of versions any vertex held at once.
    pub fn peak(&self) -> usize {
        self.peak
    }
}

/// Whether `read` is an admissible input for computing `at` under `(T, L)`.
pub fn within_bounds(at: Version, read: Version, (bt, bl): (usize, usize)) -> bool {
    let (t, l) = at;
    let (tr, lr) = read;
    tr <= t && t - tr <= bt && lr < l && l - lr <= bl
}
