//! Versioned JSON envelope for fitted transport maps. JSON floats use the
//! shortest round-trip encoding, so a write/read cycle reproduces the exact
//! coefficient bits.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use transport_lasso::prior_pce::{LaplacianPrior, PceBasis};
use transport_lasso::transport_admm::{FitResult, TransportMap};

pub const MAP_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IndexEntry {
    pub degrees: Vec<u32>,
    pub parities: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BasisDescriptor {
    pub dim: usize,
    pub order: u32,
    pub rate: f64,
    pub indices: Vec<IndexEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitMetadata {
    pub n_train: usize,
    pub seed: u64,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: Option<f64>,
    pub final_max_primal_residual: Option<f64>,
    pub min_train_jacobian_det: f64,
}

/// On-disk form of a fitted map: basis descriptor, row-major coefficients,
/// the regularization pair, and fit metadata.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MapFile {
    pub version: u32,
    pub basis: BasisDescriptor,
    /// Row-major d x K coefficient matrix.
    pub coeffs: Vec<f64>,
    pub lambda: f64,
    pub sigma2: f64,
    pub metadata: FitMetadata,
}

impl MapFile {
    pub fn from_fit(fit: &FitResult, n_train: usize, seed: u64, rho: f64) -> Self {
        let map = &fit.map;
        let basis = map.basis();
        let (d, k) = map.coefficients().shape();
        let mut coeffs = Vec::with_capacity(d * k);
        for r in 0..d {
            for c in 0..k {
                coeffs.push(map.coefficients()[(r, c)]);
            }
        }
        let last = fit.trace.last();
        MapFile {
            version: MAP_FILE_VERSION,
            basis: BasisDescriptor {
                dim: basis.dim(),
                order: basis.order(),
                rate: basis.prior().rate(),
                indices: basis
                    .indices()
                    .iter()
                    .map(|m| IndexEntry {
                        degrees: m.degrees().to_vec(),
                        parities: m.parities().to_vec(),
                    })
                    .collect(),
            },
            coeffs,
            lambda: map.lambda(),
            sigma2: map.sigma2(),
            metadata: FitMetadata {
                n_train,
                seed,
                rho,
                iterations: fit.iterations,
                converged: fit.converged,
                final_objective: last.map(|s| s.objective),
                final_max_primal_residual: last.map(|s| s.max_primal_residual),
                min_train_jacobian_det: fit.min_train_jacobian_det,
            },
        }
    }

    /// Rebuilds the in-memory map, re-deriving the basis from `(dim, order,
    /// rate)` and checking it against the stored index list.
    pub fn to_map(&self) -> Result<TransportMap> {
        if self.version != MAP_FILE_VERSION {
            bail!("unsupported map file version {}", self.version);
        }
        let prior = LaplacianPrior::new(self.basis.dim, self.basis.rate)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let basis = PceBasis::total_degree(prior, self.basis.order)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        if basis.len() != self.basis.indices.len() {
            bail!(
                "stored index list ({}) does not match the (dim, order) basis ({})",
                self.basis.indices.len(),
                basis.len()
            );
        }
        for (m, e) in basis.indices().iter().zip(&self.basis.indices) {
            if m.degrees() != e.degrees.as_slice() || m.parities() != e.parities.as_slice() {
                bail!("stored index list does not match the canonical enumeration");
            }
        }
        let d = self.basis.dim;
        let k = basis.len();
        if self.coeffs.len() != d * k {
            bail!("coefficient count {} does not match d*K = {}", self.coeffs.len(), d * k);
        }
        let coeffs = DMatrix::from_row_slice(d, k, &self.coeffs);
        TransportMap::from_coefficients(coeffs, basis, self.lambda, self.sigma2)
            .map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body.as_bytes())
            .with_context(|| format!("cannot write map file {}", path.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read map file {}", path.display()))?;
        let file: MapFile = serde_json::from_str(&body)
            .with_context(|| format!("malformed map file {}", path.display()))?;
        Ok(file)
    }
}
