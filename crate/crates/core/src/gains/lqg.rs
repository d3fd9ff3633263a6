//! Finite-horizon discrete LQ regulator with scalar control and the
//! expected quadratic costs of a gain sequence.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::lincov::{propagate_covariance, DiscreteLinearModel};
use crate::linalg::{min_eigenvalue, Mat5, Row5, Vec5};

type RowN<const N: usize> = SMatrix<f64, 1, N>;

/// Backward Riccati recursion from `S_N = Q`:
/// `K_k = -(B^T S B + R_k)^-1 B^T S A`, `S_k = A^T S A - K^T (R_k + B^T S B) K`.
/// Runs in square-root form, `S = L^T L`, with the Joseph update
/// `S_k = (A + B K)^T S (A + B K) + R_k K^T K` re-triangularized by QR, so
/// every `S_k` is PSD by construction. Returns the gains and `S_0 .. S_N`.
pub fn riccati<const N: usize>(
    a: &[SMatrix<f64, N, N>],
    b: &[SVector<f64, N>],
    q: &SMatrix<f64, N, N>,
    r: &[f64],
) -> Result<(Vec<RowN<N>>, Vec<SMatrix<f64, N, N>>)> {
    let n = a.len();
    if b.len() != n || r.len() != n {
        return Err(Error::Argument(format!(
            "LQ problem has {n} state matrices, {} input vectors and {} control weights",
            b.len(),
            r.len()
        )));
    }
    if let Some(k) = r.iter().position(|&rk| !(rk > 0.0)) {
        return Err(Error::Argument(format!("control weight at step {k} must be positive")));
    }
    let mut l = psd_factor(q)?;
    let mut gains = vec![RowN::<N>::zeros(); n];
    let mut ss = vec![SMatrix::<f64, N, N>::zeros(); n + 1];
    ss[n] = SMatrix::<f64, N, N>::from_iterator((l.transpose() * &l).iter().copied());
    for k in (0..n).rev() {
        let (ak, bk) = (&a[k], &b[k]);
        let lb = &l * bk;
        let la = &l * ak;
        let denom = r[k] + lb.norm_squared();
        let gain = RowN::<N>::from_iterator((lb.transpose() * &la).iter().map(|v| -v / denom));
        let closed = ak + bk * gain;
        let mut stacked = DMatrix::<f64>::zeros(N + 1, N);
        stacked.view_mut((0, 0), (N, N)).copy_from(&(&l * closed));
        stacked.row_mut(N).copy_from(&(gain * r[k].sqrt()));
        let tri = stacked.qr().r();
        l = DMatrix::from_fn(N, N, |i, j| if i < tri.nrows() { tri[(i, j)] } else { 0.0 });
        if !l.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical {
                node: k,
                msg: "Riccati recursion produced non-finite values".into(),
            });
        }
        gains[k] = gain;
        ss[k] = SMatrix::<f64, N, N>::from_iterator((l.transpose() * &l).iter().copied());
    }
    Ok((gains, ss))
}

/// `L` (N x N) with `L^T L = q` for a symmetric PSD `q`; errors when `q`
/// has an eigenvalue below `-1e-12` times its largest.
fn psd_factor<const N: usize>(q: &SMatrix<f64, N, N>) -> Result<DMatrix<f64>> {
    let sym = DMatrix::from_fn(N, N, |i, j| 0.5 * (q[(i, j)] + q[(j, i)]));
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eig.eigenvalues.iter().any(|v| *v < -1e-12 * top) {
        return Err(Error::Argument("terminal weight must be positive semidefinite".into()));
    }
    let mut l = eig.eigenvectors.transpose();
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        l.row_mut(i).scale_mut(s);
    }
    Ok(l)
}

/// LQ weights: terminal state weight and per-step control weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LqWeights {
    pub q: Mat5,
    pub r: Vec<f64>,
}

/// Per-node coordinate scales: the open-loop standard deviation of each
/// state driven by the process noise alone, floored at a small fraction of
/// its largest value. The Riccati recursion runs in these coordinates,
/// which keeps states with very different magnitudes well conditioned.
pub fn state_scales(model: &DiscreteLinearModel) -> Vec<Vec5> {
    let n = model.len();
    let mut p = Mat5::zeros();
    let mut diag = Vec::with_capacity(n + 1);
    diag.push(p.diagonal());
    for step in &model.steps {
        p = step.a * p * step.a.transpose() + step.w;
        p = (p + p.transpose()) * 0.5;
        diag.push(p.diagonal());
    }
    let mut peak = Vec5::zeros();
    for d in &diag {
        peak = peak.zip_map(d, |a, b| a.max(b.max(0.0).sqrt()));
    }
    let mut scales: Vec<Vec5> = diag
        .iter()
        .map(|d| {
            Vec5::from_fn(|i, _| {
                if peak[i] > 0.0 {
                    d[i].max(0.0).sqrt().max(1e-6 * peak[i])
                } else {
                    1.0
                }
            })
        })
        .collect();
    if n > 0 {
        scales[0] = scales[1];
    }
    scales
}

/// Riccati recursion on `model` in the coordinates `x = D_k z`. Returns the
/// gains in original coordinates and `S_0 .. S_N` in scaled coordinates.
pub fn riccati_scaled(
    model: &DiscreteLinearModel,
    weights: &LqWeights,
    scales: &[Vec5],
) -> Result<(Vec<Row5>, Vec<Mat5>)> {
    let n = model.len();
    if scales.len() != n + 1 {
        return Err(Error::Argument(format!("{} scale vectors for {n} steps", scales.len())));
    }
    let d = |k: usize| Mat5::from_diagonal(&scales[k]);
    let dinv = |k: usize| Mat5::from_diagonal(&scales[k].map(|v| 1.0 / v));
    let a: Vec<Mat5> = (0..n).map(|k| dinv(k + 1) * model.steps[k].a * d(k)).collect();
    let b: Vec<Vec5> = (0..n).map(|k| dinv(k + 1) * model.steps[k].b).collect();
    let q = d(n) * weights.q * d(n);
    let (gains, s) = riccati(&a, &b, &q, &weights.r)?;
    let gains = gains.iter().enumerate().map(|(k, g)| g * dinv(k)).collect();
    Ok((gains, s))
}

pub fn lqg_gains(model: &DiscreteLinearModel, weights: &LqWeights) -> Result<Vec<Row5>> {
    Ok(riccati_scaled(model, weights, &state_scales(model))?.0)
}

/// Expected LQ cost `tr(Q P_N) + sum_k R_k K_k P_k K_k^T` of a gain sequence.
pub fn lq_cost(
    model: &DiscreteLinearModel,
    p0: &Mat5,
    gains: &[Row5],
    weights: &LqWeights,
) -> Result<f64> {
    let cov = propagate_covariance(p0, model, gains)?;
    let terminal = (weights.q * cov.final_covariance()).trace();
    let control: f64 = weights
        .r
        .iter()
        .zip(&cov.control_variance)
        .map(|(r, v)| r * v)
        .sum();
    Ok(terminal + control)
}

/// Whether every matrix in `mats` is PSD to the relative tolerance used by the recursion.
pub fn all_psd(mats: &[Mat5]) -> bool {
    mats.iter()
        .all(|m| min_eigenvalue(m) >= -1e-9 * m.trace().abs().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix1, Vector1};

    #[test]
    fn scalar_one_step() {
        let (k, s) = riccati(
            &[Matrix1::new(1.0)],
            &[Vector1::new(1.0)],
            &Matrix1::new(1.0),
            &[1.0],
        )
        .unwrap();
        assert!((k[0][0] + 0.5).abs() < 1e-15);
        assert!((s[0][0] - 0.5).abs() < 1e-15);
        // grid search over the one-step cost (1 + k)^2 + k^2 for unit state
        let best = (0..=20000)
            .map(|i| -2.0 + 2.0 * i as f64 / 20000.0)
            .min_by(|x, y| {
                let c = |k: f64| (1.0 + k).powi(2) + k * k;
                c(*x).total_cmp(&c(*y))
            })
            .unwrap();
        assert!((best - k[0][0]).abs() < 1e-4);
    }

    #[test]
    fn zero_terminal_weight_gives_zero_gains() {
        let a = vec![Mat5::identity() * 1.1; 4];
        let b = vec![nalgebra::Vector5::new(0.0, 0.0, 1.0, 0.0, 0.0); 4];
        let (k, s) = riccati(&a, &b, &Mat5::zeros(), &[1.0; 4]).unwrap();
        assert!(k.iter().all(|g| *g == Row5::zeros()));
        assert!(all_psd(&s));
    }

    #[test]
    fn rejects_bad_weights() {
        let a = [Matrix1::new(1.0)];
        let b = [Vector1::new(1.0)];
        assert!(riccati(&a, &b, &Matrix1::new(1.0), &[0.0]).is_err());
        assert!(riccati(&a, &b, &Matrix1::new(1.0), &[1.0, 1.0]).is_err());
    }
}
