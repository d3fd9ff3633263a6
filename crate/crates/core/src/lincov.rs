//! Linearization of the augmented longitudinal dynamics `(r, V, gamma, R, rho)`
//! about a reference trajectory, discretization on a control partition, and
//! closed-loop covariance propagation.

use serde::Serialize;

use crate::atmosphere::AtmosphereModel;
use crate::dynamics::{sink_rate, Aero, PlanetParams};
use crate::error::{Error, Result};
use crate::flight::ReferenceTrajectory;
use crate::linalg::{min_eigenvalue, symmetrize, Mat5, Row5, Vec5, IDX_GAMMA, IDX_RHO};
use crate::table::bracket;

/// Drift of the augmented longitudinal system `[f_z; f_rho * s_dot]`.
pub fn longitudinal_drift(
    x: &Vec5,
    u: f64,
    planet: &PlanetParams,
    aero: &Aero,
    atmosphere: &AtmosphereModel,
) -> Vec5 {
    let (r, v, gamma, rho) = (x[0], x[1], x[2], x[4]);
    let (sg, cg) = gamma.sin_cos();
    let g = planet.mu / (r * r);
    let s = atmosphere.sink_distance(r);
    let (f_rho, _) = atmosphere.density_sde_coefficients(s, rho);
    Vec5::new(
        v * sg,
        -rho * v * v * aero.drag_factor() - g * sg,
        rho * v * aero.lift_factor() * u - (g - v * v / r) * cg / v,
        v * cg,
        f_rho * sink_rate(v, gamma),
    )
}

/// Analytic `(A, B, G)` at state `x` with nominal control `u`. `G` uses the
/// sink rate clamped at zero so a briefly lofting reference adds no noise.
pub fn jacobians(
    x: &Vec5,
    u: f64,
    planet: &PlanetParams,
    aero: &Aero,
    atmosphere: &AtmosphereModel,
) -> (Mat5, Vec5, Vec5) {
    let (r, v, gamma, rho) = (x[0], x[1], x[2], x[4]);
    let (sg, cg) = gamma.sin_cos();
    let mu = planet.mu;
    let kd = aero.drag_factor();
    let kl = aero.lift_factor();
    let s = atmosphere.sink_distance(r);
    let s_dot = sink_rate(v, gamma);
    let (f_rho, g_rho) = atmosphere.density_sde_coefficients(s, rho);
    let (df_ds, df_drho) = atmosphere.density_drift_partials(s, rho);

    let mut a = Mat5::zeros();
    // r_dot = V sin(gamma)
    a[(0, 1)] = sg;
    a[(0, 2)] = v * cg;
    // V_dot = -rho V^2 k_D - mu sin(gamma) / r^2
    a[(1, 0)] = 2.0 * mu * sg / (r * r * r);
    a[(1, 1)] = -2.0 * rho * v * kd;
    a[(1, 2)] = -mu * cg / (r * r);
    a[(1, 4)] = -v * v * kd;
    // gamma_dot = rho V k_L u - (mu / r^2 - V^2 / r) cos(gamma) / V
    a[(2, 0)] = (2.0 * mu / (r * r * r) - v * v / (r * r)) * cg / v;
    a[(2, 1)] = rho * kl * u + cg * (mu / (r * r * v * v) + 1.0 / r);
    a[(2, 2)] = (mu / (r * r) - v * v / r) * sg / v;
    a[(2, 4)] = v * kl * u;
    // R_dot = V cos(gamma)
    a[(3, 1)] = cg;
    a[(3, 2)] = -v * sg;
    // rho_dot = f_rho(s, rho) s_dot with s = r_atm - r, s_dot = -V sin(gamma)
    a[(4, 0)] = -df_ds * s_dot;
    a[(4, 1)] = -f_rho * sg;
    a[(4, 2)] = -f_rho * v * cg;
    a[(4, 4)] = df_drho * s_dot;

    let mut b = Vec5::zeros();
    b[IDX_GAMMA] = rho * v * kl;
    let mut g = Vec5::zeros();
    g[IDX_RHO] = g_rho * s_dot.max(0.0).sqrt();
    (a, b, g)
}

/// Central finite-difference `(A, B)` of `longitudinal_drift`, for verifying
/// the analytic Jacobians.
pub fn jacobians_fd(
    x: &Vec5,
    u: f64,
    planet: &PlanetParams,
    aero: &Aero,
    atmosphere: &AtmosphereModel,
) -> (Mat5, Vec5) {
    let f = |x: &Vec5, u: f64| longitudinal_drift(x, u, planet, aero, atmosphere);
    let mut a = Mat5::zeros();
    for j in 0..5 {
        let h = 1e-6 * x[j].abs().max(1e-8);
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        a.set_column(j, &((f(&xp, u) - f(&xm, u)) / (2.0 * h)));
    }
    let hu = 1e-6;
    let b = (f(x, u + hu) - f(x, u - hu)) / (2.0 * hu);
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearNode {
    pub t: f64,
    pub a: Mat5,
    pub b: Vec5,
    pub g: Vec5,
}

/// Time-varying linear model sampled at the reference nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLinearModel {
    pub nodes: Vec<LinearNode>,
    times: Vec<f64>,
}

impl ContinuousLinearModel {
    pub fn from_nodes(nodes: Vec<LinearNode>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Argument(
                "linear model needs at least two strictly increasing nodes".into(),
            ));
        }
        let times = nodes.iter().map(|n| n.t).collect();
        Ok(Self { nodes, times })
    }

    /// Linearizes along `reference`; control has no effect from
    /// `control_cutoff` onward.
    pub fn linearize(
        reference: &ReferenceTrajectory,
        planet: &PlanetParams,
        aero: &Aero,
        atmosphere: &AtmosphereModel,
        control_cutoff: f64,
    ) -> Result<Self> {
        let nodes = reference
            .nodes
            .iter()
            .map(|n| {
                let (a, mut b, g) = jacobians(&n.x, n.u_nominal, planet, aero, atmosphere);
                if n.t >= control_cutoff - 1e-9 {
                    b = Vec5::zeros();
                }
                LinearNode { t: n.t, a, b, g }
            })
            .collect();
        Self::from_nodes(nodes)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn tf(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `(A, B, G G^T)` linearly interpolated at `t`.
    pub fn at(&self, t: f64) -> (Mat5, Vec5, Mat5) {
        let (i, w) = bracket(&self.times, t);
        let n0 = &self.nodes[i];
        let ggt0 = n0.g * n0.g.transpose();
        if w == 0.0 {
            return (n0.a, n0.b, ggt0);
        }
        let n1 = &self.nodes[i + 1];
        let ggt1 = n1.g * n1.g.transpose();
        (
            n0.a * (1.0 - w) + n1.a * w,
            n0.b * (1.0 - w) + n1.b * w,
            ggt0 * (1.0 - w) + ggt1 * w,
        )
    }

    /// Integration grid from `t_from` to `t_to` (either direction) split at
    /// every reference node in between.
    fn grid(&self, t_from: f64, t_to: f64) -> Vec<f64> {
        let (lo, hi) = if t_from <= t_to { (t_from, t_to) } else { (t_to, t_from) };
        let tol = 1e-9 * (1.0 + hi.abs());
        let mut g = vec![lo];
        g.extend(self.times.iter().copied().filter(|&t| t > lo + tol && t < hi - tol));
        g.push(hi);
        if t_from > t_to {
            g.reverse();
        }
        g
    }

    /// Joint RK4 integration over `[t0, t1]` of `Phi' = A Phi`,
    /// `Gamma' = A Gamma + B`, `W' = A W + W A^T + G G^T` from `(I, 0, 0)`.
    pub fn integrate_interval(&self, t0: f64, t1: f64) -> (Mat5, Vec5, Mat5) {
        let mut phi = Mat5::identity();
        let mut gam = Vec5::zeros();
        let mut w = Mat5::zeros();
        let grid = self.grid(t0, t1);
        for seg in grid.windows(2) {
            let (ta, tb) = (seg[0], seg[1]);
            let h = tb - ta;
            let ea = self.at(ta);
            let em = self.at(ta + 0.5 * h);
            let eb = self.at(tb);
            let rate = |e: &(Mat5, Vec5, Mat5), phi: &Mat5, gam: &Vec5, w: &Mat5| {
                let (a, b, q) = e;
                (a * phi, a * gam + b, a * w + w * a.transpose() + q)
            };
            let k1 = rate(&ea, &phi, &gam, &w);
            let k2 = rate(&em, &(phi + k1.0 * (0.5 * h)), &(gam + k1.1 * (0.5 * h)), &(w + k1.2 * (0.5 * h)));
            let k3 = rate(&em, &(phi + k2.0 * (0.5 * h)), &(gam + k2.1 * (0.5 * h)), &(w + k2.2 * (0.5 * h)));
            let k4 = rate(&eb, &(phi + k3.0 * h), &(gam + k3.1 * h), &(w + k3.2 * h));
            phi += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
            gam += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0);
            w += (k1.2 + k2.2 * 2.0 + k3.2 * 2.0 + k4.2) * (h / 6.0);
        }
        (phi, gam, symmetrize(&w))
    }

    /// State transition matrix `Phi(t, tau)`.
    pub fn stm(&self, t: f64, tau: f64) -> Mat5 {
        self.integrate_interval(tau, t).0
    }
}

/// Control partition `t_0 < t_1 < ... < t_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "partition needs at least two strictly increasing times".into(),
            ));
        }
        Ok(Self { times })
    }

    /// Uniform spacing `dt` from `t0`, with a shorter last interval ending at
    /// `tf`. Intervals shorter than 1e-6 s are merged into their neighbor.
    pub fn uniform(t0: f64, tf: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && tf > t0) {
            return Err(Error::Argument("partition needs dt > 0 and tf > t0".into()));
        }
        let mut times = Vec::new();
        let mut k = 0usize;
        loop {
            let t = t0 + k as f64 * dt;
            if t >= tf - 1e-6 {
                break;
            }
            times.push(t);
            k += 1;
        }
        times.push(tf);
        Self::new(times)
    }

    /// Number of control steps.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn tf(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteStep {
    pub a: Mat5,
    pub b: Vec5,
    pub w: Mat5,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteLinearModel {
    pub partition: Partition,
    pub steps: Vec<DiscreteStep>,
}

impl DiscreteLinearModel {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// JSON dump of the per-step matrices.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn discretize(model: &ContinuousLinearModel, partition: &Partition) -> Result<DiscreteLinearModel> {
    let tol = 1e-6;
    if partition.t0() < model.t0() - tol || partition.tf() > model.tf() + tol {
        return Err(Error::Argument(format!(
            "partition [{}, {}] exceeds the linear model span [{}, {}]",
            partition.t0(),
            partition.tf(),
            model.t0(),
            model.tf()
        )));
    }
    let mut steps = Vec::with_capacity(partition.steps());
    for (k, w) in partition.times.windows(2).enumerate() {
        let (a, b, wk) = model.integrate_interval(w[0], w[1]);
        if !(a.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite()) && wk.iter().all(|v| v.is_finite())) {
            return Err(Error::Numerical {
                node: k,
                msg: "non-finite transition matrix".into(),
            });
        }
        steps.push(DiscreteStep { a, b, w: wk });
    }
    Ok(DiscreteLinearModel {
        partition: partition.clone(),
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceTrajectory {
    /// `P_k` at each partition node (`N + 1` entries).
    pub p: Vec<Mat5>,
    /// `K_k P_k K_k^T` for each step (`N` entries).
    pub control_variance: Vec<f64>,
}

impl CovarianceTrajectory {
    pub fn final_covariance(&self) -> &Mat5 {
        self.p.last().unwrap()
    }
}

/// `P_{k+1} = (A_k + B_k K_k) P_k (A_k + B_k K_k)^T + W_k`.
pub fn propagate_covariance(
    p0: &Mat5,
    model: &DiscreteLinearModel,
    gains: &[Row5],
) -> Result<CovarianceTrajectory> {
    if gains.len() != model.len() {
        return Err(Error::Argument(format!(
            "{} gains for {} steps",
            gains.len(),
            model.len()
        )));
    }
    let mut p = symmetrize(p0);
    let mut ps = Vec::with_capacity(model.len() + 1);
    let mut control_variance = Vec::with_capacity(model.len());
    check_psd(&p, 0)?;
    ps.push(p);
    for (k, (step, gain)) in model.steps.iter().zip(gains).enumerate() {
        control_variance.push((gain * p * gain.transpose())[(0, 0)]);
        let closed = step.a + step.b * gain;
        p = symmetrize(&(closed * p * closed.transpose() + step.w));
        check_psd(&p, k + 1)?;
        ps.push(p);
    }
    Ok(CovarianceTrajectory {
        p: ps,
        control_variance,
    })
}

fn check_psd(p: &Mat5, node: usize) -> Result<()> {
    let trace = p.trace();
    let min = min_eigenvalue(p);
    if !p.iter().all(|v| v.is_finite()) || min < -1e-12 * trace.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical {
            node,
            msg: format!("covariance lost positive semidefiniteness (min eigenvalue {min:e})"),
        });
    }
    Ok(())
}

/// Initial covariance: no radius dispersion, speed / flight-path / range
/// variances from the entry dispersions, and the density variance at the
/// atmosphere edge, uncorrelated with the vehicle states.
pub fn initial_covariance(
    sigma_v: f64,
    sigma_gamma: f64,
    sigma_range: f64,
    atmosphere: &AtmosphereModel,
) -> Mat5 {
    let rho_bar = atmosphere.mean_density_at_sink(0.0);
    Mat5::from_diagonal(&Vec5::new(
        0.0,
        sigma_v * sigma_v,
        sigma_gamma * sigma_gamma,
        sigma_range * sigma_range,
        atmosphere.variation_variance(0.0) * rho_bar * rho_bar,
    ))
}
