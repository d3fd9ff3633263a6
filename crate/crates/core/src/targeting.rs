//! Planet-fixed / inertial frame transformations and the downrange and
//! crossrange angles to a surface target.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::FullState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Target longitude, rad.
    pub theta: f64,
    /// Target latitude, rad.
    pub phi: f64,
    /// Planet rotation angle at the initial time, rad.
    pub eta0: f64,
    /// Radius converting angles to distances, m.
    pub reference_radius: f64,
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.phi.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Argument("target latitude must lie in [-90, 90] deg".into()));
        }
        if !(self.reference_radius > 0.0) {
            return Err(Error::Argument("reference radius must be positive".into()));
        }
        Ok(())
    }

    /// Target unit vector in inertial coordinates at time `t`.
    pub fn inertial_direction(&self, t: f64, omega: f64) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        planet_to_inertial(self.eta0 + t * omega) * Vector3::new(cp * ct, cp * st, sp)
    }
}

/// Rotation from planet-fixed to inertial coordinates for rotation angle `eta`.
pub fn planet_to_inertial(eta: f64) -> Matrix3<f64> {
    let (s, c) = eta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation from the local up-east-north frame at `(theta, phi)` to
/// planet-fixed coordinates.
pub fn local_to_planet(theta: f64, phi: f64) -> Matrix3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Matrix3::new(
        ct * cp, -st, -ct * sp, //
        cp * st, ct, -st * sp, //
        sp, 0.0, cp,
    )
}

pub fn inertial_position(x: &FullState, eta: f64) -> Vector3<f64> {
    planet_to_inertial(eta) * local_to_planet(x.theta, x.phi) * Vector3::new(x.r, 0.0, 0.0)
}

/// Inertial velocity: the rotated planet-relative velocity plus `Omega x r`.
pub fn inertial_velocity(x: &FullState, eta: f64, omega: f64) -> Vector3<f64> {
    let (sg, cg) = x.gamma.sin_cos();
    let (ss, cs) = x.psi.sin_cos();
    let relative_local = Vector3::new(x.v * sg, x.v * cg * ss, x.v * cg * cs);
    let rotation = planet_to_inertial(eta) * local_to_planet(x.theta, x.phi);
    rotation * relative_local + Vector3::new(0.0, 0.0, omega).cross(&inertial_position(x, eta))
}

/// Downrange angle `delta_go` and crossrange angle `epsilon` to the target,
/// with the target placed in inertial space at time `t`. Positive crossrange
/// means the target lies to the left of the velocity-defined great circle.
pub fn downrange_crossrange(
    x: &FullState,
    target: &TargetSpec,
    t: f64,
    omega: f64,
) -> Result<(f64, f64)> {
    let eta = target.eta0 + t * omega;
    let r = inertial_position(x, eta);
    let v = inertial_velocity(x, eta, omega);
    let h = r.cross(&v);
    let h_norm = h.norm();
    if h_norm <= 1e-12 * r.norm() * v.norm() || h_norm == 0.0 {
        return Err(Error::Geometry("zero angular momentum".into()));
    }
    let target_dir = target.inertial_direction(t, omega);
    let along = (target_dir.dot(&r) / r.norm()).clamp(-1.0, 1.0);
    let across = (target_dir.dot(&h) / h_norm).clamp(-1.0, 1.0);
    Ok((along.acos(), std::f64::consts::FRAC_PI_2 - across.acos()))
}
