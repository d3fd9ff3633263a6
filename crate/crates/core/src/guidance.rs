//! Flight guidance: longitudinal bank-cosine command from a gain schedule or
//! the nominal profile, bank-angle reconstruction, bank-rate limiting,
//! deadband bank-direction logic and heading alignment.

use serde::{Deserialize, Serialize};

use crate::dynamics::BankProfile;
use crate::error::{Error, Result};
use crate::gains::schedule::{GainSchedule, ScheduleIndex};
use crate::linalg::Vec5;
use crate::table::Table1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuidanceMode {
    RangeControl,
    HeadingAlignment,
}

impl GuidanceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            GuidanceMode::RangeControl => "range_control",
            GuidanceMode::HeadingAlignment => "heading_alignment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadbandIndex {
    Time,
    Velocity,
}

/// Crossrange corridor half-width (rad) against time or speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Deadband {
    pub index: DeadbandIndex,
    pub table: Table1D,
}

impl Deadband {
    pub fn new(index: DeadbandIndex, table: Table1D) -> Result<Self> {
        if table.min_y() <= 0.0 {
            return Err(Error::Argument("deadband half-width must be positive".into()));
        }
        Ok(Self { index, table })
    }

    pub fn half_width(&self, t: f64, v: f64) -> f64 {
        match self.index {
            DeadbandIndex::Time => self.table.eval(t),
            DeadbandIndex::Velocity => self.table.eval(v),
        }
    }
}

/// Heading-alignment bank limit: `inner_limit` for speeds within
/// `[band_low, band_high]`, `outer_limit` otherwise (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankLimitSchedule {
    pub band_low: f64,
    pub band_high: f64,
    pub inner_limit: f64,
    pub outer_limit: f64,
}

impl BankLimitSchedule {
    pub fn limit(&self, v: f64) -> f64 {
        if (self.band_low..=self.band_high).contains(&v) {
            self.inner_limit
        } else {
            self.outer_limit
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LateralConfig {
    pub deadband: Deadband,
    pub heading_gain: f64,
    /// Speed at which heading alignment begins, m/s.
    pub heading_entry_speed: f64,
    pub heading_limits: BankLimitSchedule,
    /// Bank-rate limit, rad/s.
    pub bank_rate_limit: f64,
    /// Interval between guidance commands, s.
    pub command_period: f64,
    /// Allowed deviation of the bank cosine from nominal before a command
    /// counts as saturated (capped by the distance to +/-1).
    pub correction_limit: f64,
}

impl LateralConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.heading_gain > 0.0) {
            return Err(Error::Argument("heading-alignment gain must be positive".into()));
        }
        if !(self.bank_rate_limit > 0.0 && self.command_period > 0.0) {
            return Err(Error::Argument(
                "bank-rate limit and command period must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Allowed bank-cosine deviation at nominal cosine `c`: the smaller of the
/// configured limit and the distance to either end of `[-1, 1]`.
pub fn correction_bound(limit: f64, nominal_cos: f64) -> f64 {
    limit.min(1.0 - nominal_cos).min(nominal_cos + 1.0)
}

/// `sigma = b_dir * acos(u)`.
pub fn bank_from_cosine(u: f64, b_dir: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::Argument(format!("bank cosine {u} outside [-1, 1]")));
    }
    Ok(b_dir.signum() * u.acos())
}

/// Moves the flown bank angle toward the command by at most `rate * dt`.
pub fn rate_limit(sigma_cmd: f64, sigma_prev: f64, dt: f64, rate: f64) -> f64 {
    let step = rate * dt;
    sigma_cmd.clamp(sigma_prev - step, sigma_prev + step)
}

/// Deadband bank-reversal logic.
pub fn update_bank_direction(eps: f64, eps_max: f64, b_dir: f64) -> f64 {
    if b_dir < 0.0 && eps < -eps_max {
        1.0
    } else if b_dir > 0.0 && eps > eps_max {
        -1.0
    } else {
        b_dir
    }
}

/// Proportional heading-alignment law. The bank magnitude is
/// `gain * atan2(|delta_go|, |eps|)`, saturated at `limit`, and the bank
/// turns toward the target: negative (left) when the target is left
/// (`eps > 0`). When `eps` is exactly zero the current direction is kept.
pub fn heading_alignment_command(
    delta_go: f64,
    eps: f64,
    gain: f64,
    limit: f64,
    b_dir: f64,
) -> f64 {
    let magnitude = (gain * delta_go.abs().atan2(eps.abs())).min(limit);
    let direction = if eps > 0.0 {
        -1.0
    } else if eps < 0.0 {
        1.0
    } else {
        b_dir.signum()
    };
    direction * magnitude
}

/// Source of the longitudinal command during range control.
#[derive(Debug, Clone, Copy)]
pub enum LongitudinalLaw<'a> {
    /// Nominal bank cosine as a function of speed; no feedback.
    Profile(&'a BankProfile),
    /// Feedback about a designed nominal.
    Schedule(&'a GainSchedule),
}

/// Schedule-based longitudinal command `cos(sigma_hat) + K x_tilde`, clamped
/// to `[-1, 1]`, without the zero-order hold applied during flight.
pub fn longitudinal_command(t: f64, x: &Vec5, schedule: &GainSchedule) -> f64 {
    let lookup = match schedule.index {
        ScheduleIndex::Time => schedule.lookup_time(t),
        ScheduleIndex::Velocity => schedule.lookup_velocity(x[crate::linalg::IDX_V]),
    };
    let correction = (lookup.gain * (x - lookup.nominal))[(0, 0)];
    (lookup.nominal_cos + correction).clamp(-1.0, 1.0)
}

/// Per-flight guidance state.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceState {
    pub mode: GuidanceMode,
    pub b_dir: f64,
    /// Last flown (rate-limited) bank angle; `None` before the first command.
    pub sigma_prev: Option<f64>,
    pub t_prev_cmd: Option<f64>,
}

/// Inputs sampled at a command time.
#[derive(Debug, Clone, Copy)]
pub struct CommandInput {
    pub t: f64,
    /// Longitudinal state `(r, V, gamma, R, rho)`.
    pub x: Vec5,
    pub delta_go: f64,
    pub eps: f64,
}

/// One guidance command with bookkeeping for logs and statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Command {
    pub t: f64,
    pub mode: GuidanceMode,
    pub nominal_cos: f64,
    /// Feedback correction before clamping (0 when not in feedback).
    pub correction: f64,
    /// True when `correction` was freshly computed at this command.
    pub new_correction: bool,
    /// `|correction|` exceeded the allowed deviation.
    pub saturated: bool,
    /// Clamped bank cosine (cosine of the commanded bank in heading alignment).
    pub u: f64,
    pub sigma_cmd: f64,
    pub sigma: f64,
    pub b_dir: f64,
    pub eps: f64,
    pub delta_go: f64,
}

/// Closed-loop guidance for one flight.
#[derive(Debug, Clone)]
pub struct Controller<'a> {
    config: &'a LateralConfig,
    law: LongitudinalLaw<'a>,
    state: GuidanceState,
    held: Option<(usize, f64)>,
    speed_prev: Option<f64>,
    decelerating: bool,
    reversals: usize,
}

impl<'a> Controller<'a> {
    pub fn new(config: &'a LateralConfig, law: LongitudinalLaw<'a>) -> Self {
        Self {
            config,
            law,
            state: GuidanceState {
                mode: GuidanceMode::RangeControl,
                b_dir: 0.0,
                sigma_prev: None,
                t_prev_cmd: None,
            },
            held: None,
            speed_prev: None,
            decelerating: false,
            reversals: 0,
        }
    }

    pub fn state(&self) -> &GuidanceState {
        &self.state
    }

    /// Deadband-commanded bank reversals during range control.
    pub fn reversals(&self) -> usize {
        self.reversals
    }

    pub fn command(&mut self, input: &CommandInput) -> Command {
        let cfg = self.config;
        let v = input.x[crate::linalg::IDX_V];
        if self.state.b_dir == 0.0 {
            // Initial direction turns toward the target.
            self.state.b_dir = if input.eps > 0.0 { -1.0 } else { 1.0 };
        }
        if let Some(prev) = self.speed_prev {
            if v < prev {
                self.decelerating = true;
            }
        }
        self.speed_prev = Some(v);
        if self.state.mode == GuidanceMode::RangeControl && v <= cfg.heading_entry_speed {
            self.state.mode = GuidanceMode::HeadingAlignment;
        }

        let (nominal_cos, correction, new_correction, u, sigma_cmd) = match self.state.mode {
            GuidanceMode::RangeControl => {
                let eps_max = cfg.deadband.half_width(input.t, v);
                let b_new = update_bank_direction(input.eps, eps_max, self.state.b_dir);
                if b_new != self.state.b_dir {
                    self.reversals += 1;
                }
                self.state.b_dir = b_new;
                let (nominal_cos, correction, fresh) = self.longitudinal(input);
                let u = (nominal_cos + correction).clamp(-1.0, 1.0);
                (nominal_cos, correction, fresh, u, self.state.b_dir * u.acos())
            }
            GuidanceMode::HeadingAlignment => {
                let sigma = heading_alignment_command(
                    input.delta_go,
                    input.eps,
                    cfg.heading_gain,
                    cfg.heading_limits.limit(v),
                    self.state.b_dir,
                );
                if sigma != 0.0 {
                    self.state.b_dir = sigma.signum();
                }
                let nominal_cos = match self.law {
                    LongitudinalLaw::Profile(p) => p.cos_bank(v),
                    LongitudinalLaw::Schedule(_) => sigma.cos(),
                };
                (nominal_cos, 0.0, false, sigma.cos(), sigma)
            }
        };

        let sigma = match (self.state.sigma_prev, self.state.t_prev_cmd) {
            (Some(prev), Some(t_prev)) => {
                rate_limit(sigma_cmd, prev, input.t - t_prev, cfg.bank_rate_limit)
            }
            _ => sigma_cmd,
        };
        self.state.sigma_prev = Some(sigma);
        self.state.t_prev_cmd = Some(input.t);
        let saturated =
            new_correction && correction.abs() > correction_bound(cfg.correction_limit, nominal_cos);
        Command {
            t: input.t,
            mode: self.state.mode,
            nominal_cos,
            correction,
            new_correction,
            saturated,
            u,
            sigma_cmd,
            sigma,
            b_dir: self.state.b_dir,
            eps: input.eps,
            delta_go: input.delta_go,
        }
    }

    /// Nominal cosine and feedback correction for range control.
    fn longitudinal(&mut self, input: &CommandInput) -> (f64, f64, bool) {
        match self.law {
            LongitudinalLaw::Profile(p) => (p.cos_bank(input.x[crate::linalg::IDX_V]), 0.0, false),
            LongitudinalLaw::Schedule(s) => match s.index {
                ScheduleIndex::Time => {
                    let lookup = s.lookup_time(input.t);
                    // The correction is computed on entering a partition
                    // subinterval and held across it.
                    match self.held {
                        Some((row, du)) if row == lookup.row => (lookup.nominal_cos, du, false),
                        _ => {
                            let du = (lookup.gain * (input.x - lookup.nominal))[(0, 0)];
                            self.held = Some((lookup.row, du));
                            (lookup.nominal_cos, du, true)
                        }
                    }
                }
                ScheduleIndex::Velocity => {
                    let lookup = s.lookup_velocity(input.x[crate::linalg::IDX_V]);
                    if !self.decelerating {
                        return (lookup.nominal_cos, 0.0, false);
                    }
                    let du = (lookup.gain * (input.x - lookup.nominal))[(0, 0)];
                    (lookup.nominal_cos, du, true)
                }
            },
        }
    }
}
