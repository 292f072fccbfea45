use nalgebra::{DMatrix, SymmetricEigen};

use super::Tessellation;
use crate::error::{Error, Result};

/// Singular values of the stacked outer-normal matrix of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellConditioning {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_neighbors: usize,
    /// `σ_max σ_min⁻² sqrt(|N|)`.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningReport {
    pub cells: Vec<CellConditioning>,
    /// Supremum of the per-cell constants.
    pub constant: f64,
}

/// Conditioning of a cell given its outer unit normals (one per neighbour).
pub fn cell_conditioning(
    normals: &[Vec<f64>],
    dim: usize,
    cell: usize,
) -> Result<CellConditioning> {
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    for n in normals {
        for a in 0..dim {
            for b in 0..dim {
                gram[(a, b)] += n[a] * n[b];
            }
        }
    }
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let top = eig.iter().copied().fold(0.0, f64::max);
    let rank = eig.iter().filter(|&&e| e > 1e-10 * top.max(1.0)).count();
    if rank < dim {
        return Err(Error::RankDeficientCell { cell, rank, dim });
    }
    let low = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let (sigma_min, sigma_max) = (low.sqrt(), top.sqrt());
    Ok(CellConditioning {
        sigma_min,
        sigma_max,
        n_neighbors: normals.len(),
        constant: sigma_max / (sigma_min * sigma_min) * (normals.len() as f64).sqrt(),
    })
}

/// Per-cell singular values of `N_i` and the global constant; fails if any
/// `N_i` has rank below the dimension.
pub fn conditioning(tess: &Tessellation) -> Result<ConditioningReport> {
    let cells = (0..tess.n_cells())
        .map(|i| {
            let normals: Vec<Vec<f64>> = tess
                .neighbors(i)
                .iter()
                .map(|&k| tess.normal(i, k).expect("neighbour has a facet"))
                .collect();
            cell_conditioning(&normals, tess.dim(), i)
        })
        .collect::<Result<Vec<_>>>()?;
    let constant = cells.iter().map(|c| c.constant).fold(0.0, f64::max);
    Ok(ConditioningReport { cells, constant })
}
