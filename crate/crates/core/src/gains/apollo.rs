//! Apollo final-phase baseline: adjoint sensitivities of a terminal quantity
//! to state and control deviations, turned into speed-indexed feedback gains.

use crate::dynamics::{Aero, PlanetParams};
use crate::atmosphere::AtmosphereModel;
use crate::error::{Error, Result};
use crate::flight::ReferenceTrajectory;
use crate::gains::schedule::{GainSchedule, ScheduleIndex, ScheduleRow, SynthesisMethod};
use crate::lincov::{longitudinal_drift, ContinuousLinearModel, Partition};
use crate::linalg::{Row5, Vec5, IDX_V};
use crate::triggers::{trigger_transform, TriggerSpec};

/// Backward solution of `theta' = -A^T theta`, `theta_u' = -B^T theta` from
/// `(theta_f, 0)` at the final time, on the model's node grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub times: Vec<f64>,
    pub theta: Vec<Vec5>,
    pub theta_u: Vec<f64>,
}

pub fn adjoint(model: &ContinuousLinearModel, terminal: &Vec5) -> AdjointSolution {
    let times = model.times().to_vec();
    let n = times.len();
    let mut theta = vec![Vec5::zeros(); n];
    let mut theta_u = vec![0.0; n];
    theta[n - 1] = *terminal;
    let rate = |t: f64, th: &Vec5| {
        let (a, b, _) = model.at(t);
        (-(a.transpose() * th), -b.dot(th))
    };
    for i in (0..n - 1).rev() {
        let (t1, t0) = (times[i + 1], times[i]);
        let h = t0 - t1;
        let th = theta[i + 1];
        let k1 = rate(t1, &th);
        let k2 = rate(t1 + 0.5 * h, &(th + k1.0 * (0.5 * h)));
        let k3 = rate(t1 + 0.5 * h, &(th + k2.0 * (0.5 * h)));
        let k4 = rate(t0, &(th + k3.0 * h));
        theta[i] = th + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
        theta_u[i] = theta_u[i + 1] + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * (h / 6.0);
    }
    AdjointSolution {
        times,
        theta,
        theta_u,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApolloOptions {
    pub overcontrol_gain: f64,
    /// Gains are zero where `|theta_u|` is below this fraction of its peak.
    pub floor_fraction: f64,
    /// Feedback engages once the nominal deceleration reaches this level, m/s^2.
    pub engage_deceleration: f64,
    /// Spacing of schedule rows along the reference, s.
    pub row_spacing: f64,
}

impl ApolloOptions {
    pub fn new(overcontrol_gain: f64) -> Self {
        Self {
            overcontrol_gain,
            floor_fraction: 1e-6,
            engage_deceleration: 1.96,
            row_spacing: 1.0,
        }
    }
}

/// `K(t) = -K_oc theta^T(t) / theta_u(t)`, zero where `|theta_u|` is under the floor.
pub fn adjoint_gains(adj: &AdjointSolution, overcontrol_gain: f64, floor_fraction: f64) -> Result<Vec<Row5>> {
    let peak = adj.theta_u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return Err(Error::Synthesis(
            "control sensitivity of the terminal quantity vanishes over the whole trajectory".into(),
        ));
    }
    let floor = floor_fraction * peak;
    Ok(adj
        .theta
        .iter()
        .zip(&adj.theta_u)
        .map(|(th, tu)| {
            if tu.abs() < floor {
                Row5::zeros()
            } else {
                th.transpose() * (-overcontrol_gain / tu)
            }
        })
        .collect())
}

/// Speed-indexed Apollo schedule over the decelerating range-control part
/// of the reference. `terminal` is the terminal weight before any trigger
/// transform; for a hyperplane trigger it is mapped through `Z^T`.
#[allow(clippy::too_many_arguments)]
pub fn apollo_gains(
    model: &ContinuousLinearModel,
    reference: &ReferenceTrajectory,
    terminal: &Vec5,
    trigger: &TriggerSpec,
    planet: &PlanetParams,
    aero: &Aero,
    atmosphere: &AtmosphereModel,
    options: &ApolloOptions,
) -> Result<GainSchedule> {
    if model.times().len() != reference.nodes.len() {
        return Err(Error::Argument(
            "linear model and reference trajectory have different node grids".into(),
        ));
    }
    let theta_f = match trigger {
        TriggerSpec::Fixed { .. } => *terminal,
        TriggerSpec::Hyperplane { nu, .. } => {
            let last = reference.terminal();
            let drift = longitudinal_drift(&last.x, last.u_nominal, planet, aero, atmosphere);
            trigger_transform(nu, &drift)?.z.transpose() * terminal
        }
    };
    let adj = adjoint(model, &theta_f);
    let gains = adjoint_gains(&adj, options.overcontrol_gain, options.floor_fraction)?;

    let t_ha = reference.heading_alignment_start();
    let peak = reference
        .nodes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.x[IDX_V].total_cmp(&b.1.x[IDX_V]))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut rows: Vec<ScheduleRow> = Vec::new();
    for (i, node) in reference.nodes.iter().enumerate().skip(peak) {
        if node.t > t_ha + 1e-9 {
            break;
        }
        let phase = node.t / options.row_spacing;
        if (phase - phase.round()).abs() > 1e-6 {
            continue;
        }
        let v = node.x[IDX_V];
        if rows.last().is_some_and(|r| v >= r.index_value) {
            continue;
        }
        let decel = -longitudinal_drift(&node.x, node.u_nominal, planet, aero, atmosphere)[IDX_V];
        let gain = if decel >= options.engage_deceleration {
            gains[i]
        } else {
            Row5::zeros()
        };
        rows.push(ScheduleRow {
            index_value: v,
            gain,
            nominal: node.x,
            nominal_cos: node.u_nominal,
        });
    }
    if rows.iter().all(|r| r.gain == Row5::zeros()) {
        return Err(Error::Synthesis(
            "Apollo gains vanish over the whole range-control phase".into(),
        ));
    }
    GainSchedule::new(ScheduleIndex::Velocity, SynthesisMethod::Apollo, *trigger, rows)
}

/// Time-indexed gains equivalent to a speed-indexed schedule for linear
/// covariance analysis: `K(V_hat(t_k)) Z_V(t_k)`, with
/// `Z_V = I - f_hat e_V^T / f_hat_V` mapping a time-indexed deviation to the
/// speed-indexed one. Zero before the nominal starts decelerating and from
/// heading alignment on.
pub fn effective_time_gains(
    schedule: &GainSchedule,
    reference: &ReferenceTrajectory,
    partition: &Partition,
    planet: &PlanetParams,
    aero: &Aero,
    atmosphere: &AtmosphereModel,
) -> Result<Vec<Row5>> {
    let t_ha = reference.heading_alignment_start();
    let peak_t = reference
        .nodes
        .iter()
        .max_by(|a, b| a.x[IDX_V].total_cmp(&b.x[IDX_V]))
        .map_or(0.0, |n| n.t);
    let mut out = Vec::with_capacity(partition.steps());
    for &t in &partition.times[..partition.steps()] {
        if t <= peak_t || t >= t_ha - 1e-9 {
            out.push(Row5::zeros());
            continue;
        }
        let x = reference.state_at(t);
        let u = reference.cos_at(t);
        let lookup = schedule.lookup_velocity(x[IDX_V]);
        if lookup.gain == Row5::zeros() {
            out.push(Row5::zeros());
            continue;
        }
        let drift = longitudinal_drift(&x, u, planet, aero, atmosphere);
        let z = trigger_transform(&crate::linalg::unit(IDX_V), &drift)?.z;
        out.push(lookup.gain * z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lincov::LinearNode;
    use crate::linalg::Mat5;

    fn model() -> ContinuousLinearModel {
        let nodes = (0..=200)
            .map(|i| {
                let t = i as f64 * 0.5;
                let mut a = Mat5::zeros();
                a[(3, 1)] = 1.0;
                a[(1, 2)] = -3.7;
                a[(0, 2)] = 5000.0 / (1.0 + 0.01 * t);
                a[(1, 1)] = -0.01;
                a[(2, 4)] = 2e3;
                let b = Vec5::new(0.0, 0.0, 0.01 * (1.0 + (0.05 * t).sin()), 0.0, 0.0);
                LinearNode { t, a, b, g: Vec5::zeros() }
            })
            .collect();
        ContinuousLinearModel::from_nodes(nodes).unwrap()
    }

    #[test]
    fn terminal_condition_and_floor() {
        let m = model();
        let tf = Vec5::new(0.0, 0.0, 0.0, 1.0, 0.0);
        let adj = adjoint(&m, &tf);
        assert_eq!(*adj.theta.last().unwrap(), tf);
        assert_eq!(*adj.theta_u.last().unwrap(), 0.0);
        let k = adjoint_gains(&adj, 5.0, 1e-6).unwrap();
        assert_eq!(*k.last().unwrap(), Row5::zeros());
        assert!(k[0].norm() > 0.0);
    }

    #[test]
    fn adjoint_identity_holds_along_linear_trajectories() {
        let m = model();
        let adj = adjoint(&m, &Vec5::new(0.0, 0.0, 0.0, 1.0, 0.0));
        // forward-propagate x' = A x + B u with constant u using fine RK4
        let u = 0.07;
        let mut x = Vec5::new(100.0, -3.0, 0.002, 500.0, 1e-5);
        let invariant = |i: usize, x: &Vec5| adj.theta[i].dot(x) + adj.theta_u[i] * u;
        let c0 = invariant(0, &x);
        let times = m.times().to_vec();
        for i in 0..times.len() - 1 {
            let sub = 20;
            let h = (times[i + 1] - times[i]) / sub as f64;
            for j in 0..sub {
                let t = times[i] + j as f64 * h;
                let f = |t: f64, x: &Vec5| {
                    let (a, b, _) = m.at(t);
                    a * x + b * u
                };
                let k1 = f(t, &x);
                let k2 = f(t + 0.5 * h, &(x + k1 * (0.5 * h)));
                let k3 = f(t + 0.5 * h, &(x + k2 * (0.5 * h)));
                let k4 = f(t + h, &(x + k3 * h));
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
        }
        let c1 = invariant(times.len() - 1, &x);
        assert!((c1 - c0).abs() < 1e-6 * c0.abs().max(1.0), "{c0} vs {c1}");
    }

    #[test]
    fn gains_scale_with_overcontrol() {
        let adj = adjoint(&model(), &Vec5::new(0.0, 0.0, 0.0, 1.0, 0.0));
        let k1 = adjoint_gains(&adj, 1.0, 1e-6).unwrap();
        let k2 = adjoint_gains(&adj, 2.0, 1e-6).unwrap();
        for (a, b) in k1.iter().zip(&k2) {
            assert_eq!(a * 2.0, *b);
        }
    }

    #[test]
    fn vanishing_control_sensitivity_is_an_error() {
        let nodes = (0..3)
            .map(|i| LinearNode { t: i as f64, a: Mat5::zeros(), b: Vec5::zeros(), g: Vec5::zeros() })
            .collect();
        let m = ContinuousLinearModel::from_nodes(nodes).unwrap();
        let adj = adjoint(&m, &Vec5::new(0.0, 0.0, 0.0, 1.0, 0.0));
        assert!(matches!(adjoint_gains(&adj, 5.0, 1e-6), Err(Error::Synthesis(_))));
    }
}
