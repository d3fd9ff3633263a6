//! Closed-loop trajectory simulation: fixed-step RK4 on the full equations of
//! motion with guidance commands at a fixed cadence, density from either the
//! mean profile or a sampled variation path, and trigger-based termination.

use nalgebra::Vector6;
use serde::Serialize;

use crate::atmosphere::{AtmosphereModel, VariationPath};
use crate::dynamics::{full_derivative_unchecked, Aero, BankProfile, FullState, PlanetParams};
use crate::error::{Error, Result};
use crate::guidance::{Command, CommandInput, Controller, GuidanceMode, LateralConfig, LongitudinalLaw};
use crate::linalg::Vec5;
use crate::targeting::{downrange_crossrange, TargetSpec};
use crate::triggers::TriggerSpec;

/// Integration settings shared by all flights of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrationConfig {
    /// RK4 step, s. Must divide the guidance command period.
    pub step: f64,
    /// Flight is abandoned past this time, s.
    pub max_time: f64,
    /// Grid spacing of sampled density variation paths, m.
    pub variation_step: f64,
}

impl IntegrationConfig {
    pub fn validate(&self, command_period: f64) -> Result<usize> {
        if !(self.step > 0.0 && self.max_time > 0.0 && self.variation_step > 0.0) {
            return Err(Error::Argument("integration settings must be positive".into()));
        }
        let ratio = command_period / self.step;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::Argument(format!(
                "command period {command_period} s is not a multiple of the step {} s",
                self.step
            )));
        }
        Ok(n as usize)
    }
}

/// Everything fixed for one flight except the initial state and density.
#[derive(Debug, Clone, Copy)]
pub struct FlightContext<'a> {
    pub planet: &'a PlanetParams,
    pub atmosphere: &'a AtmosphereModel,
    pub target: &'a TargetSpec,
    pub lateral: &'a LateralConfig,
    pub integration: &'a IntegrationConfig,
    /// Downrange angle at which the range coordinate is zero, rad.
    pub range_origin: f64,
}

#[derive(Debug, Clone)]
pub enum Density {
    Mean,
    Sampled(VariationPath),
}

#[derive(Debug, Clone)]
pub enum Recording {
    /// Every integration node.
    All,
    /// Longitudinal state interpolated at the given increasing times.
    At(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlightNode {
    pub t: f64,
    pub state: FullState,
    /// `(r, V, gamma, R, rho)` with the flown density.
    pub x: Vec5,
    /// Nominal bank cosine in force (flown cosine during heading alignment).
    pub u_nominal: f64,
    pub sigma: f64,
    pub b_dir: f64,
    pub mode: GuidanceMode,
    pub delta_go: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ClimbDiagnostic {
    /// Total altitude regained while climbing, m.
    pub climb_distance: f64,
    /// Fraction of flight time with negative sink rate.
    pub climb_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct FlightRecord {
    pub nodes: Vec<FlightNode>,
    pub samples: Vec<(f64, Vec5)>,
    pub commands: Vec<Command>,
    pub terminal: FlightNode,
    pub reversals: usize,
    pub new_corrections: usize,
    pub saturations: usize,
    pub climb: ClimbDiagnostic,
}

/// Runs one closed-loop flight from `x0` until `stop` fires.
#[allow(clippy::too_many_arguments)]
pub fn fly(
    ctx: &FlightContext,
    aero: &Aero,
    law: LongitudinalLaw,
    x0: &FullState,
    density: Density,
    stop: &TriggerSpec,
    recording: Recording,
    keep_commands: bool,
) -> Result<FlightRecord> {
    let steps_per_command = ctx.integration.validate(ctx.lateral.command_period)?;
    let mut sim = Simulator {
        ctx,
        aero,
        density,
    };
    let mut controller = Controller::new(ctx.lateral, law);
    let h = ctx.integration.step;
    let mut x = x0.to_vector();
    let mut step_index: usize = 0;
    let mut t = 0.0;
    let mut sigma = 0.0;
    let mut last_cmd: Option<Command> = None;

    let mut nodes = Vec::new();
    let mut samples = Vec::new();
    let mut commands = Vec::new();
    let mut new_corrections = 0;
    let mut saturations = 0;
    let mut climb = ClimbDiagnostic::default();
    let mut climb_time = 0.0;
    let mut pending: std::collections::VecDeque<f64> = match &recording {
        Recording::All => Default::default(),
        Recording::At(times) => times.iter().copied().collect(),
    };

    let mut node = sim.node(t, &x, None)?;
    let mut margin = stop.margin(t, &node.x);
    if margin <= 0.0 {
        return Err(Error::Argument("flight starts past its trigger".into()));
    }

    loop {
        if step_index % steps_per_command == 0 {
            let cmd = controller.command(&CommandInput {
                t,
                x: node.x,
                delta_go: node.delta_go,
                eps: node.eps,
            });
            sigma = cmd.sigma;
            if cmd.new_correction {
                new_corrections += 1;
                if cmd.saturated {
                    saturations += 1;
                }
            }
            if keep_commands {
                commands.push(cmd);
            }
            last_cmd = Some(cmd);
            node = sim.annotate(node, &cmd);
        }
        if matches!(recording, Recording::All) {
            nodes.push(node);
        }
        while pending.front().is_some_and(|&ts| ts <= t + 1e-9) {
            let ts = pending.pop_front().unwrap();
            if (ts - t).abs() <= 1e-9 {
                samples.push((ts, node.x));
            }
        }

        // Step length: shortened to land exactly on a fixed final time.
        let mut dt = h;
        if let TriggerSpec::Fixed { t_final } = stop {
            let remaining = t_final - t;
            if remaining < h * (1.0 + 1e-9) {
                dt = remaining;
            }
        }
        let x_next = sim.rk4(&x, sigma, dt);
        let t_next = if dt == h {
            (step_index + 1) as f64 * h
        } else {
            t + dt
        };
        let s_rate_now = -x[3] * x[4].sin();
        if s_rate_now < 0.0 {
            climb_time += dt;
            climb.climb_distance += (x_next[0] - x[0]).max(0.0);
        }
        let next = sim.node(t_next, &x_next, last_cmd.as_ref())?;
        let margin_next = stop.margin(t_next, &next.x);

        // Samples strictly inside the step are interpolated.
        while let Some(&ts) = pending.front() {
            if ts < t_next - 1e-9 && ts > t {
                let w = (ts - t) / (t_next - t);
                samples.push((ts, node.x + (next.x - node.x) * w));
                pending.pop_front();
            } else {
                break;
            }
        }

        if margin_next <= 0.0 {
            let terminal = if stop.is_fixed() {
                next
            } else {
                let w = margin / (margin - margin_next);
                let xt = x + (x_next - x) * w;
                let tt = t + w * (t_next - t);
                let mut n = sim.node(tt, &xt, last_cmd.as_ref())?;
                // Interpolate the longitudinal state too so the trigger
                // coordinate lands on the hyperplane.
                n.x = node.x + (next.x - node.x) * w;
                n
            };
            samples.retain(|(ts, _)| *ts <= terminal.t + 1e-9);
            if pending.front().is_some_and(|&ts| (ts - terminal.t).abs() <= 1e-6) {
                samples.push((terminal.t, terminal.x));
            }
            if matches!(recording, Recording::All) {
                let mut last = terminal;
                if let Some(cmd) = last_cmd.as_ref() {
                    last = sim.annotate(last, cmd);
                }
                nodes.push(last);
            }
            climb.climb_fraction = if terminal.t > 0.0 { climb_time / terminal.t } else { 0.0 };
            return Ok(FlightRecord {
                nodes,
                samples,
                commands,
                terminal,
                reversals: controller.reversals(),
                new_corrections,
                saturations,
                climb,
            });
        }
        if x_next[0] < ctx.planet.r_p {
            return Err(Error::Propagation(format!(
                "surface impact at t = {t_next:.1} s before the trigger"
            )));
        }
        if t_next > ctx.integration.max_time || !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::Propagation(format!(
                "trigger not reached by t = {t_next:.1} s (margin {margin_next})"
            )));
        }
        if x_next[3] <= 0.0 {
            return Err(Error::Propagation("speed dropped to zero".into()));
        }
        x = x_next;
        t = t_next;
        node = next;
        margin = margin_next;
        step_index += 1;
    }
}

struct Simulator<'a, 'b> {
    ctx: &'b FlightContext<'a>,
    aero: &'b Aero,
    density: Density,
}

impl Simulator<'_, '_> {
    fn density_at(&mut self, r: f64) -> f64 {
        let atm = self.ctx.atmosphere;
        let s = atm.sink_distance(r);
        let mean = atm.mean_density_at_sink(s);
        match &mut self.density {
            Density::Mean => mean,
            Density::Sampled(path) => (mean * (1.0 + path.value_at(atm, s))).max(0.0),
        }
    }

    fn derivative(&mut self, x: &Vector6<f64>, sigma: f64) -> Vector6<f64> {
        let rho = self.density_at(x[0]);
        full_derivative_unchecked(&FullState::from_vector(x), sigma, rho, self.ctx.planet, self.aero)
    }

    fn rk4(&mut self, x: &Vector6<f64>, sigma: f64, h: f64) -> Vector6<f64> {
        let k1 = self.derivative(x, sigma);
        let k2 = self.derivative(&(x + k1 * (0.5 * h)), sigma);
        let k3 = self.derivative(&(x + k2 * (0.5 * h)), sigma);
        let k4 = self.derivative(&(x + k3 * h), sigma);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    fn node(&mut self, t: f64, x: &Vector6<f64>, cmd: Option<&Command>) -> Result<FlightNode> {
        let state = FullState::from_vector(x);
        let (delta_go, eps) =
            downrange_crossrange(&state, self.ctx.target, t, self.ctx.planet.omega)?;
        let rho = self.density_at(state.r);
        let range = self.ctx.target.reference_radius * (self.ctx.range_origin - delta_go);
        let node = FlightNode {
            t,
            state,
            x: Vec5::new(state.r, state.v, state.gamma, range, rho),
            u_nominal: 0.0,
            sigma: 0.0,
            b_dir: 0.0,
            mode: GuidanceMode::RangeControl,
            delta_go,
            eps,
        };
        Ok(match cmd {
            Some(c) => self.annotate(node, c),
            None => node,
        })
    }

    fn annotate(&self, mut node: FlightNode, cmd: &Command) -> FlightNode {
        node.sigma = cmd.sigma;
        node.b_dir = cmd.b_dir;
        node.mode = cmd.mode;
        node.u_nominal = match cmd.mode {
            GuidanceMode::RangeControl => cmd.nominal_cos,
            GuidanceMode::HeadingAlignment => cmd.sigma.cos(),
        };
        node
    }
}

/// Nominal trajectory flown with the mean density and the speed-scheduled
/// bank cosine, with bank reversals from the deadband logic.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub nodes: Vec<FlightNode>,
    pub range_origin: f64,
    pub reversals: usize,
    pub climb: ClimbDiagnostic,
}

impl ReferenceTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    pub fn final_time(&self) -> f64 {
        self.nodes.last().unwrap().t
    }

    pub fn terminal(&self) -> &FlightNode {
        self.nodes.last().unwrap()
    }

    /// Start of heading alignment, or the final time if never entered.
    pub fn heading_alignment_start(&self) -> f64 {
        self.nodes
            .iter()
            .find(|n| n.mode == GuidanceMode::HeadingAlignment)
            .map_or(self.final_time(), |n| n.t)
    }

    /// Longitudinal nominal state at time `t`, linear between nodes.
    pub fn state_at(&self, t: f64) -> Vec5 {
        let times = self.times();
        let (i, w) = crate::table::bracket(&times, t);
        if self.nodes.len() == 1 || w == 0.0 {
            return self.nodes[i].x;
        }
        if w == 1.0 {
            return self.nodes[i + 1].x;
        }
        self.nodes[i].x * (1.0 - w) + self.nodes[i + 1].x * w
    }

    /// Nominal bank cosine in force at `t` (zero-order hold between commands).
    pub fn cos_at(&self, t: f64) -> f64 {
        let idx = self
            .nodes
            .partition_point(|n| n.t <= t + 1e-9)
            .saturating_sub(1);
        self.nodes[idx].u_nominal
    }

    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        let io = |e| Error::io("trajectory", e);
        writeln!(
            out,
            "t_s,r_m,theta_rad,phi_rad,V_mps,gamma_rad,psi_rad,range_m,rho_kgpm3,\
             cos_bank_nominal,bank_rad,bank_dir,mode,delta_go_rad,crossrange_rad,dynamic_pressure_pa"
        )
        .map_err(io)?;
        for n in &self.nodes {
            let s = &n.state;
            writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{:?},{:?},{:?}",
                n.t,
                s.r,
                s.theta,
                s.phi,
                s.v,
                s.gamma,
                s.psi,
                n.x[3],
                n.x[4],
                n.u_nominal,
                n.sigma,
                n.b_dir,
                n.mode.as_str(),
                n.delta_go,
                n.eps,
                0.5 * n.x[4] * s.v * s.v
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Range coordinate origin: the downrange angle at the initial state.
pub fn range_origin(x0: &FullState, target: &TargetSpec, omega: f64) -> Result<f64> {
    Ok(downrange_crossrange(x0, target, 0.0, omega)?.0)
}

#[allow(clippy::too_many_arguments)]
pub fn propagate_nominal(
    x0: &FullState,
    bank_profile: &BankProfile,
    planet: &PlanetParams,
    aero: &Aero,
    atmosphere: &AtmosphereModel,
    target: &TargetSpec,
    lateral: &LateralConfig,
    integration: &IntegrationConfig,
    stop: &TriggerSpec,
) -> Result<ReferenceTrajectory> {
    let origin = range_origin(x0, target, planet.omega)?;
    let ctx = FlightContext {
        planet,
        atmosphere,
        target,
        lateral,
        integration,
        range_origin: origin,
    };
    let rec = fly(
        &ctx,
        aero,
        LongitudinalLaw::Profile(bank_profile),
        x0,
        Density::Mean,
        stop,
        Recording::All,
        false,
    )?;
    Ok(ReferenceTrajectory {
        nodes: rec.nodes,
        range_origin: origin,
        reversals: rec.reversals,
        climb: rec.climb,
    })
}
