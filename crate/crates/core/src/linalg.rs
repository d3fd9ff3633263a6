//! Fixed-size matrix aliases for the five-state longitudinal model
//! `(r, V, gamma, R, rho)`.

use nalgebra::{SMatrix, SVector};

pub type Mat5 = SMatrix<f64, 5, 5>;
pub type Vec5 = SVector<f64, 5>;
pub type Row5 = nalgebra::RowSVector<f64, 5>;

pub const IDX_R: usize = 0;
pub const IDX_V: usize = 1;
pub const IDX_GAMMA: usize = 2;
pub const IDX_RANGE: usize = 3;
pub const IDX_RHO: usize = 4;

pub fn symmetrize(p: &Mat5) -> Mat5 {
    (p + p.transpose()) * 0.5
}

pub fn unit(i: usize) -> Vec5 {
    let mut v = Vec5::zeros();
    v[i] = 1.0;
    v
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(p: &Mat5) -> f64 {
    symmetrize(p).symmetric_eigenvalues().min()
}
