//! Three-degree-of-freedom entry dynamics about a spherical rotating planet,
//! the longitudinal reduction used for covariance work, and the aerodynamic
//! force model.

use std::path::Path;

use nalgebra::{Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::Table1D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanetParams {
    /// Gravitational parameter, m^3/s^2.
    pub mu: f64,
    /// Rotation rate, rad/s.
    pub omega: f64,
    /// Surface radius, m.
    pub r_p: f64,
    /// Radius of the sensible-atmosphere edge, m.
    pub r_atm: f64,
}

impl PlanetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::Argument("gravitational parameter must be positive".into()));
        }
        if !(self.r_atm > self.r_p && self.r_p > 0.0) {
            return Err(Error::Argument("need r_atm > r_p > 0".into()));
        }
        Ok(())
    }

    pub fn non_rotating(self) -> Self {
        Self { omega: 0.0, ..self }
    }
}

/// Vehicle mass properties and an affine aerodynamic model about the
/// reference trim angle of attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub mass: f64,
    pub area: f64,
    pub cl0: f64,
    pub cd0: f64,
    /// Lift-coefficient slope per degree of angle of attack.
    pub cl_per_deg: f64,
    /// Drag-coefficient slope per degree of angle of attack.
    pub cd_per_deg: f64,
    /// Trim angle of attack at which `cl0`, `cd0` apply, deg.
    pub trim_alpha_deg: f64,
}

impl VehicleParams {
    /// Builds the coefficients from lift-to-drag ratio and ballistic
    /// coefficient `m / (C_D A)` at trim.
    pub fn from_trim_performance(
        mass: f64,
        area: f64,
        lift_to_drag: f64,
        ballistic_coefficient: f64,
        trim_alpha_deg: f64,
        cl_per_deg: f64,
        cd_per_deg: f64,
    ) -> Result<Self> {
        if !(mass > 0.0 && area > 0.0 && ballistic_coefficient > 0.0) {
            return Err(Error::Argument(
                "mass, area and ballistic coefficient must be positive".into(),
            ));
        }
        let cd0 = mass / (ballistic_coefficient * area);
        Ok(Self {
            mass,
            area,
            cl0: lift_to_drag * cd0,
            cd0,
            cl_per_deg,
            cd_per_deg,
            trim_alpha_deg,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.area > 0.0 && self.cd0 > 0.0) {
            return Err(Error::Argument("mass, area and C_D0 must be positive".into()));
        }
        Ok(())
    }

    /// `(C_L, C_D)` at angle of attack `alpha_deg`.
    pub fn aero_coefficients(&self, alpha_deg: f64) -> (f64, f64) {
        let d = alpha_deg - self.trim_alpha_deg;
        (self.cl0 + self.cl_per_deg * d, self.cd0 + self.cd_per_deg * d)
    }

    /// Force model for a flight trimmed at `alpha_deg`.
    pub fn trimmed(&self, alpha_deg: f64) -> Aero {
        let (cl, cd) = self.aero_coefficients(alpha_deg);
        Aero {
            mass: self.mass,
            area: self.area,
            cl,
            cd,
        }
    }

    pub fn nominal_aero(&self) -> Aero {
        self.trimmed(self.trim_alpha_deg)
    }
}

/// Aerodynamic force model at a fixed trim point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aero {
    pub mass: f64,
    pub area: f64,
    pub cl: f64,
    pub cd: f64,
}

impl Aero {
    /// Lift acceleration per unit density per unit speed: `A C_L / (2 m)`.
    pub fn lift_factor(&self) -> f64 {
        self.area * self.cl / (2.0 * self.mass)
    }

    pub fn drag_factor(&self) -> f64 {
        self.area * self.cd / (2.0 * self.mass)
    }
}

/// Planet-relative state: radius, longitude, latitude, speed, flight-path
/// angle and heading (clockwise from north).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub v: f64,
    pub gamma: f64,
    pub psi: f64,
}

impl FullState {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.r, self.theta, self.phi, self.v, self.gamma, self.psi)
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            r: x[0],
            theta: x[1],
            phi: x[2],
            v: x[3],
            gamma: x[4],
            psi: x[5],
        }
    }
}

/// Rate of increase of sink distance, `-V sin(gamma)`.
pub fn sink_rate(v: f64, gamma: f64) -> f64 {
    -v * gamma.sin()
}

/// Time derivative of the full state for bank angle `sigma` and density `rho`.
pub fn full_derivative(
    x: &FullState,
    sigma: f64,
    rho: f64,
    planet: &PlanetParams,
    aero: &Aero,
) -> Result<Vector6<f64>> {
    let cg = x.gamma.cos();
    if x.v <= 0.0 || cg.abs() < 1e-12 {
        return Err(Error::Singularity(format!(
            "V = {} m/s, gamma = {} rad",
            x.v, x.gamma
        )));
    }
    Ok(full_derivative_unchecked(x, sigma, rho, planet, aero))
}

pub(crate) fn full_derivative_unchecked(
    x: &FullState,
    sigma: f64,
    rho: f64,
    planet: &PlanetParams,
    aero: &Aero,
) -> Vector6<f64> {
    let FullState {
        r,
        phi,
        v,
        gamma,
        psi,
        ..
    } = *x;
    let (sg, cg) = gamma.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (ss, cs) = psi.sin_cos();
    let (sb, cb) = sigma.sin_cos();
    let w = planet.omega;
    let g = planet.mu / (r * r);
    let q_over_m = 0.5 * rho * v * v / aero.mass;
    let lift = q_over_m * aero.area * aero.cl;
    let drag = q_over_m * aero.area * aero.cd;

    let r_dot = v * sg;
    let theta_dot = v * cg * ss / (r * cp);
    let phi_dot = v * cg * cs / r;
    let v_dot = -drag - g * sg + w * w * r * cp * (sg * cp - cg * sp * cs);
    let gamma_dot = (lift * cb - g * cg
        + v * v * cg / r
        + 2.0 * w * v * cp * ss
        + w * w * r * cp * (cg * cp + sg * sp * cs))
        / v;
    let psi_dot = (lift * sb / cg + v * v * cg * ss * (sp / cp) / r
        - 2.0 * w * v * (sg / cg * cp * cs - sp)
        + w * w * r * sp * cp * ss / cg)
        / v;
    Vector6::new(r_dot, theta_dot, phi_dot, v_dot, gamma_dot, psi_dot)
}

/// Longitudinal vehicle state `(r, V, gamma, R)` with the density it flies in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalState {
    pub r: f64,
    pub v: f64,
    pub gamma: f64,
    pub range: f64,
    pub rho: f64,
}

impl LongitudinalState {
    pub fn to_vector(&self) -> crate::linalg::Vec5 {
        crate::linalg::Vec5::new(self.r, self.v, self.gamma, self.range, self.rho)
    }

    pub fn from_vector(x: &crate::linalg::Vec5) -> Self {
        Self {
            r: x[0],
            v: x[1],
            gamma: x[2],
            range: x[3],
            rho: x[4],
        }
    }
}

/// Non-rotating longitudinal dynamics with `u = cos(sigma)` as control.
pub fn long_derivative(
    z: &LongitudinalState,
    u: f64,
    planet: &PlanetParams,
    aero: &Aero,
) -> Result<Vector4<f64>> {
    if z.v <= 0.0 {
        return Err(Error::Singularity(format!("V = {} m/s", z.v)));
    }
    let (sg, cg) = z.gamma.sin_cos();
    let g = planet.mu / (z.r * z.r);
    Ok(Vector4::new(
        z.v * sg,
        -z.rho * z.v * z.v * aero.drag_factor() - g * sg,
        z.rho * z.v * aero.lift_factor() * u - (g - z.v * z.v / z.r) * cg / z.v,
        z.v * cg,
    ))
}

/// Nominal bank-angle cosine as a function of planet-relative speed.
#[derive(Debug, Clone, PartialEq)]
pub struct BankProfile {
    table: Table1D,
}

#[derive(Debug, Deserialize)]
struct BankRow {
    velocity_mps: f64,
    cos_bank: f64,
}

impl BankProfile {
    pub fn new(table: Table1D) -> Result<Self> {
        if table.ys().iter().any(|c| c.abs() > 1.0) {
            return Err(Error::Argument("bank cosine must lie in [-1, 1]".into()));
        }
        Ok(Self { table })
    }

    /// Constant `cos(high_deg)` above `v_high`, `cos(low_deg)` below `v_low`,
    /// linear in cosine between.
    pub fn ramp(v_low: f64, low_deg: f64, v_high: f64, high_deg: f64) -> Result<Self> {
        Self::new(Table1D::new(
            vec![v_low, v_high],
            vec![low_deg.to_radians().cos(), high_deg.to_radians().cos()],
        )?)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut v = Vec::new();
        let mut c = Vec::new();
        for row in rdr.deserialize::<BankRow>() {
            let row = row?;
            v.push(row.velocity_mps);
            c.push(row.cos_bank);
        }
        Self::new(Table1D::new(v, c)?)
    }

    pub fn cos_bank(&self, v: f64) -> f64 {
        self.table.eval(v)
    }

    pub fn table(&self) -> &Table1D {
        &self.table
    }
}

/// Classical fourth-order Runge–Kutta step for `x' = f(x)`.
pub fn rk4_step<const N: usize>(
    x: &nalgebra::SVector<f64, N>,
    h: f64,
    f: impl Fn(&nalgebra::SVector<f64, N>) -> nalgebra::SVector<f64, N>,
) -> nalgebra::SVector<f64, N> {
    let k1 = f(x);
    let k2 = f(&(x + k1 * (0.5 * h)));
    let k3 = f(&(x + k2 * (0.5 * h)));
    let k4 = f(&(x + k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn mars() -> PlanetParams {
        PlanetParams {
            mu: 4.2828e13,
            omega: 7.0882e-5,
            r_p: 3_396_200.0,
            r_atm: 3_521_200.0,
        }
    }

    fn msl() -> VehicleParams {
        let area = std::f64::consts::PI * 4.5 * 4.5 / 4.0;
        VehicleParams::from_trim_performance(3200.0, area, 0.24, 135.0, -15.5, 0.15, 0.02)
            .unwrap()
    }

    #[test]
    fn trim_coefficients_from_table_values() {
        let v = msl();
        let area = std::f64::consts::PI * 4.5 * 4.5 / 4.0;
        let cd0 = 3200.0 / (135.0 * area);
        assert!((v.cd0 - cd0).abs() < 1e-15);
        assert!((v.cd0 - 1.4905).abs() < 2e-4);
        assert!((v.cl0 - 0.3577).abs() < 1e-4);
        assert_eq!(v.aero_coefficients(-15.5), (v.cl0, v.cd0));
        let (cl, cd) = v.aero_coefficients(-14.5);
        assert!((cl - v.cl0 - 0.15).abs() < 1e-12);
        assert!((cd - v.cd0 - 0.02).abs() < 1e-12);
    }

    #[test]
    fn ballistic_vertical_drop() {
        let p = mars().non_rotating();
        let x = FullState {
            r: 3.5e6,
            theta: 0.3,
            phi: 0.1,
            v: 1000.0,
            gamma: -FRAC_PI_2 + 1e-9,
            psi: 1.0,
        };
        let d = full_derivative(&x, 0.0, 0.0, &p, &msl().nominal_aero()).unwrap();
        assert!((d[0] + 1000.0).abs() < 1e-6);
        assert!((d[3] - p.mu / (3.5e6 * 3.5e6)).abs() < 1e-9);
        assert!(d[1].abs() < 1e-9 && d[2].abs() < 1e-9);
    }

    #[test]
    fn circular_orbit_balance() {
        let p = mars().non_rotating();
        let r = 3.6e6;
        let x = FullState {
            r,
            theta: 0.0,
            phi: 0.2,
            v: (p.mu / r).sqrt(),
            gamma: 0.0,
            psi: 0.7,
        };
        let d = full_derivative(&x, 0.3, 0.0, &p, &msl().nominal_aero()).unwrap();
        assert!(d[4].abs() < 1e-15);
    }

    #[test]
    fn singular_states_are_rejected() {
        let x = FullState {
            r: 3.5e6,
            theta: 0.0,
            phi: 0.0,
            v: 0.0,
            gamma: 0.0,
            psi: 0.0,
        };
        let a = msl().nominal_aero();
        assert!(full_derivative(&x, 0.0, 0.0, &mars(), &a).is_err());
        let x = FullState { v: 10.0, gamma: FRAC_PI_2, ..x };
        assert!(full_derivative(&x, 0.0, 0.0, &mars(), &a).is_err());
        let z = LongitudinalState {
            r: 3.5e6,
            v: 0.0,
            gamma: 0.0,
            range: 0.0,
            rho: 0.0,
        };
        assert!(long_derivative(&z, 1.0, &mars(), &a).is_err());
    }

    /// Independent formulation: inertial-frame Newton's law in Cartesian
    /// coordinates, mapped back to spherical rates by finite differences of
    /// the coordinate transformation.
    fn cartesian_oracle(x: &FullState, sigma: f64, rho: f64, p: &PlanetParams, a: &Aero) -> Vector6<f64> {
        use nalgebra::Vector3;
        // Planet-fixed position/velocity from spherical state.
        let to_cart = |s: &Vector6<f64>| -> (Vector3<f64>, Vector3<f64>) {
            let (r, th, ph, v, ga, ps) = (s[0], s[1], s[2], s[3], s[4], s[5]);
            let up = Vector3::new(ph.cos() * th.cos(), ph.cos() * th.sin(), ph.sin());
            let east = Vector3::new(-th.sin(), th.cos(), 0.0);
            let north = Vector3::new(-ph.sin() * th.cos(), -ph.sin() * th.sin(), ph.cos());
            let vel = up * (v * ga.sin()) + east * (v * ga.cos() * ps.sin()) + north * (v * ga.cos() * ps.cos());
            (up * r, vel)
        };
        let s0 = x.to_vector();
        let (pos, vel) = to_cart(&s0);
        let w = Vector3::new(0.0, 0.0, p.omega);
        let r = pos.norm();
        let v = vel.norm();
        let vhat = vel / v;
        let up = pos / r;
        // Lift direction: rotate the in-plane normal about velocity by sigma.
        let side = vhat.cross(&up).normalize();
        let lift_up = side.cross(&vhat);
        let lift_dir = lift_up * sigma.cos() + side * sigma.sin();
        let q = 0.5 * rho * v * v;
        let acc = -pos * (p.mu / r.powi(3)) - vhat * (q * a.area * a.cd / a.mass)
            + lift_dir * (q * a.area * a.cl / a.mass)
            - w.cross(&vel) * 2.0
            - w.cross(&w.cross(&pos));
        // Spherical state as a function of Cartesian state.
        let to_sph = |pos: &Vector3<f64>, vel: &Vector3<f64>| -> Vector6<f64> {
            let r = pos.norm();
            let th = pos.y.atan2(pos.x);
            let ph = (pos.z / r).asin();
            let up = pos / r;
            let east = Vector3::new(-th.sin(), th.cos(), 0.0);
            let north = up.cross(&east);
            let v = vel.norm();
            let ga = (vel.dot(&up) / v).asin();
            let ps = vel.dot(&east).atan2(vel.dot(&north));
            Vector6::new(r, th, ph, v, ga, ps)
        };
        let h = 1e-3;
        let plus = to_sph(&(pos + vel * h), &(vel + acc * h));
        let minus = to_sph(&(pos - vel * h), &(vel - acc * h));
        (plus - minus) / (2.0 * h)
    }

    #[test]
    fn full_derivative_matches_cartesian_formulation() {
        let p = mars();
        let a = msl().trimmed(-15.0);
        let states = [
            (FullState { r: 3.45e6, theta: 2.1, phi: 0.3, v: 4500.0, gamma: -0.12, psi: 1.2 }, 0.9, 2e-4),
            (FullState { r: 3.41e6, theta: -0.4, phi: -0.5, v: 1200.0, gamma: 0.05, psi: 2.9 }, -1.4, 4e-3),
            (FullState { r: 3.50e6, theta: 0.7, phi: 0.9, v: 5800.0, gamma: -0.27, psi: -0.6 }, 2.5, 1e-6),
        ];
        for (x, sigma, rho) in states {
            let got = full_derivative(&x, sigma, rho, &p, &a).unwrap();
            let oracle = cartesian_oracle(&x, sigma, rho, &p, &a);
            for i in 0..6 {
                let scale = got[i].abs().max(1e-9);
                assert!(
                    (got[i] - oracle[i]).abs() / scale < 1e-6,
                    "component {i}: {} vs {}",
                    got[i],
                    oracle[i]
                );
            }
        }
    }

    #[test]
    fn longitudinal_matches_full_without_rotation() {
        let p = mars().non_rotating();
        let a = msl().nominal_aero();
        let x = FullState { r: 3.44e6, theta: 2.0, phi: 0.0, v: 3000.0, gamma: -0.08, psi: FRAC_PI_2 };
        let sigma = 1.1f64;
        let rho = 3e-4;
        let full = full_derivative(&x, sigma, rho, &p, &a).unwrap();
        let z = LongitudinalState { r: x.r, v: x.v, gamma: x.gamma, range: 0.0, rho };
        let long = long_derivative(&z, sigma.cos(), &p, &a).unwrap();
        assert!((full[0] - long[0]).abs() <= 1e-12 * long[0].abs());
        assert!((full[3] - long[1]).abs() <= 1e-12 * long[1].abs());
        assert!((full[4] - long[2]).abs() <= 1e-12 * long[2].abs());
        assert_eq!(long[3], x.v * x.gamma.cos());
    }

    #[test]
    fn longitudinal_vacuum_and_drag() {
        let p = mars();
        let a = msl().nominal_aero();
        let z = LongitudinalState { r: 3.5e6, v: 2000.0, gamma: -0.2, range: 0.0, rho: 0.0 };
        let d = long_derivative(&z, 1.0, &p, &a).unwrap();
        assert!((d[1] + p.mu * (-0.2f64).sin() / (3.5e6 * 3.5e6)).abs() < 1e-12);
        // q = 5 kPa at level flight: drag deceleration = q A C_D / m
        let v = 2000.0;
        let rho = 2.0 * 5000.0 / (v * v);
        let z = LongitudinalState { gamma: 0.0, rho, ..z };
        let d = long_derivative(&z, 1.0, &p, &a).unwrap();
        let oracle = 5000.0 * a.area * a.cd / a.mass;
        assert!((d[1] + oracle).abs() < 1e-10);
    }

    #[test]
    fn sink_rate_signs() {
        assert!((sink_rate(100.0, -FRAC_PI_2) - 100.0).abs() < 1e-12);
        assert_eq!(sink_rate(100.0, 0.0), 0.0);
        assert!(sink_rate(100.0, 5f64.to_radians()) < 0.0);
    }

    #[test]
    fn vacuum_energy_conserved() {
        let p = mars().non_rotating();
        let a = msl().nominal_aero();
        let mut x = FullState { r: 3.52e6, theta: 0.0, phi: 0.1, v: 3000.0, gamma: 0.1, psi: 0.5 }.to_vector();
        let energy = |x: &Vector6<f64>| 0.5 * x[3] * x[3] - p.mu / x[0];
        let e0 = energy(&x);
        for _ in 0..1000 {
            x = rk4_step(&x, 0.1, |y| {
                full_derivative_unchecked(&FullState::from_vector(y), 0.0, 0.0, &p, &a)
            });
        }
        assert!(((energy(&x) - e0) / e0).abs() < 1e-9);
    }

    #[test]
    fn bank_profile_reproduces_breakpoints() {
        let b = BankProfile::ramp(2500.0, 45.0, 5500.0, 75.0).unwrap();
        assert_eq!(b.cos_bank(5800.0), 75f64.to_radians().cos());
        assert_eq!(b.cos_bank(5500.0), 75f64.to_radians().cos());
        assert_eq!(b.cos_bank(2500.0), 45f64.to_radians().cos());
        assert_eq!(b.cos_bank(400.0), 45f64.to_radians().cos());
        let mid = 0.5 * (75f64.to_radians().cos() + 45f64.to_radians().cos());
        assert!((b.cos_bank(4000.0) - mid).abs() < 1e-15);
        let csv = "velocity_mps,cos_bank\n2500,0.7\n5500,0.2\n";
        let from_csv = BankProfile::from_reader(csv.as_bytes()).unwrap();
        assert!((from_csv.cos_bank(4000.0) - 0.45).abs() < 1e-15);
        assert!(BankProfile::from_reader("velocity_mps,cos_bank\n1,1.5\n".as_bytes()).is_err());
    }
}
