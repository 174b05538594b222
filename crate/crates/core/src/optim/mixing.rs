use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Doubly stochastic mixing matrix with its lazy version and spectral gap.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingSpec {
    pub p: DMatrix<f64>,
    pub beta: f64,
    /// `(1 - beta) I + beta P`.
    pub w: DMatrix<f64>,
    /// Second-largest eigenvalue magnitude of `P`.
    pub lambda2: f64,
    /// Set when `lambda2` is numerically one.
    pub disconnected: bool,
}

const TOL: f64 = 1e-10;

fn second_eigen_magnitude(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    if n < 2 {
        return 0.0;
    }
    let symmetric = (p - p.transpose()).amax() <= 1e-12;
    if symmetric {
        let mut ev: Vec<f64> = SymmetricEigen::new(p.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        // largest is the Perron root 1
        ev[1].max(-ev[n - 1]).clamp(0.0, 1.0)
    } else {
        let mut mags: Vec<f64> = p.complex_eigenvalues().iter().map(|c| c.norm()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        mags[1].clamp(0.0, 1.0)
    }
}

/// Validate `P` and derive `W` and `lambda2`.
pub fn build_mixing(p: DMatrix<f64>, beta: f64) -> Result<MixingSpec> {
    if !p.is_square() || p.nrows() == 0 {
        return Err(Error::NotDoublyStochastic(format!("{}x{} is not square", p.nrows(), p.ncols())));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
    }
    if p.iter().any(|&v| v < -TOL || !v.is_finite()) {
        return Err(Error::NotDoublyStochastic("negative or non-finite entry".into()));
    }
    for (i, row) in p.row_iter().enumerate() {
        if (row.sum() - 1.0).abs() > TOL {
            return Err(Error::NotDoublyStochastic(format!("row {i} sums to {}", row.sum())));
        }
    }
    for (j, col) in p.column_iter().enumerate() {
        if (col.sum() - 1.0).abs() > TOL {
            return Err(Error::NotDoublyStochastic(format!("column {j} sums to {}", col.sum())));
        }
    }
    let n = p.nrows();
    let w = DMatrix::identity(n, n) * (1.0 - beta) + &p * beta;
    let lambda2 = second_eigen_magnitude(&p);
    let disconnected = lambda2 >= 1.0 - 1e-12;
    if disconnected {
        log::warn!("mixing matrix has lambda2 = {lambda2}: the graph is disconnected");
    }
    Ok(MixingSpec { p, beta, w, lambda2, disconnected })
}

/// Uniform averaging over all peers, the pattern realized by AirComp.
pub fn peer_uniform(devices: usize, beta: f64) -> Result<MixingSpec> {
    let off = 1.0 / (devices as f64 - 1.0);
    let p = DMatrix::from_fn(devices, devices, |i, j| if i == j { 0.0 } else { off });
    build_mixing(p, beta)
}
