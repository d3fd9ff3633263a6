//! Scenario-level gain design: the reference trajectory, its linear model on
//! the control partition, and Apollo / stochastic / zero schedules for the
//! fixed-time and velocity triggers together with their predicted
//! closed-loop covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::{propagate_nominal, ReferenceTrajectory};
use crate::gains::apollo::{apollo_gains, effective_time_gains, ApolloOptions};
use crate::gains::schedule::{GainSchedule, ScheduleIndex, ScheduleRow, SynthesisMethod};
use crate::gains::synthesis::{
    synthesize_stochastic_gains, ConstraintSet, ControlConstraint, RangeCost, StateConstraint,
    SynthesisOptions, SynthesisReport,
};
use crate::guidance::correction_bound;
use crate::lincov::{
    discretize, initial_covariance, longitudinal_drift, propagate_covariance, ContinuousLinearModel,
    CovarianceTrajectory, DiscreteLinearModel, Partition,
};
use crate::linalg::{unit, Mat5, Row5, Vec5, IDX_GAMMA, IDX_R, IDX_RANGE};
use crate::scenario::{Dispersions, Scenario};
use crate::triggers::{transform_for, TriggerSpec, TriggerTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerKind {
    Time,
    Velocity,
}

impl TriggerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriggerKind::Time => "time",
            TriggerKind::Velocity => "velocity",
        }
    }
}

/// Reference trajectory and its linearization for one scenario.
#[derive(Debug, Clone)]
pub struct DesignContext {
    pub reference: ReferenceTrajectory,
    pub linear: ContinuousLinearModel,
    pub partition: Partition,
    pub discrete: DiscreteLinearModel,
    pub p0: Mat5,
    /// Nominal longitudinal drift at the final time.
    pub terminal_drift: Vec5,
}

impl DesignContext {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Self::with_dispersions(scenario, &scenario.dispersions)
    }

    /// As `new`, with the initial covariance built from `dispersions`.
    pub fn with_dispersions(scenario: &Scenario, dispersions: &Dispersions) -> Result<Self> {
        let aero = scenario.vehicle.nominal_aero();
        let reference = propagate_nominal(
            &scenario.initial,
            &scenario.bank_profile,
            &scenario.planet,
            &aero,
            &scenario.atmosphere,
            &scenario.target,
            &scenario.lateral,
            &scenario.integration,
            &TriggerSpec::velocity(scenario.trigger_velocity),
        )?;
        let linear = ContinuousLinearModel::linearize(
            &reference,
            &scenario.planet,
            &aero,
            &scenario.atmosphere,
            reference.heading_alignment_start(),
        )?;
        let partition = Partition::uniform(0.0, reference.final_time(), scenario.synthesis.partition_step)?;
        let discrete = discretize(&linear, &partition)?;
        let p0 = initial_covariance(
            dispersions.velocity,
            dispersions.flight_path,
            dispersions.downrange,
            &scenario.atmosphere,
        );
        let last = reference.terminal();
        let terminal_drift =
            longitudinal_drift(&last.x, last.u_nominal, &scenario.planet, &aero, &scenario.atmosphere);
        Ok(Self {
            reference,
            linear,
            partition,
            discrete,
            p0,
            terminal_drift,
        })
    }

    pub fn trigger(&self, kind: TriggerKind, scenario: &Scenario) -> TriggerSpec {
        match kind {
            TriggerKind::Time => TriggerSpec::Fixed {
                t_final: self.reference.final_time(),
            },
            TriggerKind::Velocity => TriggerSpec::velocity(scenario.trigger_velocity),
        }
    }

    pub fn transform(&self, kind: TriggerKind, scenario: &Scenario) -> Result<TriggerTransform> {
        transform_for(&self.trigger(kind, scenario), &self.terminal_drift)
    }

    /// Time-indexed schedule with one row per partition step.
    pub fn time_schedule(
        &self,
        method: SynthesisMethod,
        trigger: TriggerSpec,
        gains: &[Row5],
    ) -> Result<GainSchedule> {
        if gains.len() != self.partition.steps() {
            return Err(Error::Argument(format!(
                "{} gains for {} partition steps",
                gains.len(),
                self.partition.steps()
            )));
        }
        let rows = self.partition.times[..self.partition.steps()]
            .iter()
            .zip(gains)
            .map(|(&t, k)| ScheduleRow {
                index_value: t,
                gain: *k,
                nominal: self.reference.state_at(t),
                nominal_cos: self.reference.cos_at(t),
            })
            .collect();
        GainSchedule::new(ScheduleIndex::Time, method, trigger, rows)
    }
}

/// A designed schedule with its linear-covariance prediction.
#[derive(Debug, Clone)]
pub struct Design {
    pub kind: TriggerKind,
    pub schedule: GainSchedule,
    /// Time-indexed gains used for the covariance prediction.
    pub lc_gains: Vec<Row5>,
    pub covariance: CovarianceTrajectory,
    /// Predicted covariance of the state at the trigger, `Z P_N Z^T`.
    pub terminal_covariance: Mat5,
    pub report: Option<SynthesisReport>,
}

impl Design {
    pub fn terminal_sigma(&self, index: usize) -> f64 {
        self.terminal_covariance[(index, index)].max(0.0).sqrt()
    }

    pub fn terminal_correlation(&self, i: usize, j: usize) -> f64 {
        correlation(&self.terminal_covariance, i, j)
    }

    /// Correlation of two states at the nominal final time.
    pub fn final_correlation(&self, i: usize, j: usize) -> f64 {
        correlation(self.covariance.final_covariance(), i, j)
    }
}

fn correlation(p: &Mat5, i: usize, j: usize) -> f64 {
    p[(i, j)] / (p[(i, i)] * p[(j, j)]).sqrt()
}

/// Time-indexed gains on the partition equivalent to `schedule`, for
/// covariance prediction.
pub fn lc_gains_for(ctx: &DesignContext, scenario: &Scenario, schedule: &GainSchedule) -> Result<Vec<Row5>> {
    match schedule.index {
        ScheduleIndex::Time => Ok(ctx.partition.times[..ctx.partition.steps()]
            .iter()
            .map(|&t| schedule.lookup_time(t).gain)
            .collect()),
        ScheduleIndex::Velocity => effective_time_gains(
            schedule,
            &ctx.reference,
            &ctx.partition,
            &scenario.planet,
            &scenario.vehicle.nominal_aero(),
            &scenario.atmosphere,
        ),
    }
}

/// Linear-covariance prediction for an arbitrary schedule.
pub fn predict(ctx: &DesignContext, scenario: &Scenario, kind: TriggerKind, schedule: GainSchedule) -> Result<Design> {
    let transform = ctx.transform(kind, scenario)?;
    let lc_gains = lc_gains_for(ctx, scenario, &schedule)?;
    finish(ctx, kind, schedule, lc_gains, &transform, None)
}

/// Cost and constraints from the scenario's synthesis settings. The range
/// weight is mapped through the trigger transform; the altitude and flight
/// path constraints apply to the state at the nominal final time.
pub fn range_problem(
    ctx: &DesignContext,
    scenario: &Scenario,
    transform: &TriggerTransform,
) -> (RangeCost, ConstraintSet) {
    let s = &scenario.synthesis;
    let zt = transform.z.transpose();
    let final_weight = zt * (unit(IDX_RANGE) * s.range_weight);
    let state = vec![
        StateConstraint {
            name: "altitude".into(),
            direction: unit(IDX_R),
            limit: s.altitude_limit,
            probability: s.state_violation_probability,
        },
        StateConstraint {
            name: "flight_path_angle".into(),
            direction: unit(IDX_GAMMA),
            limit: s.flight_path_limit,
            probability: s.state_violation_probability,
        },
    ];
    let control = ctx.partition.times[..ctx.partition.steps()]
        .iter()
        .map(|&t| ControlConstraint {
            limit: correction_bound(scenario.lateral.correction_limit, ctx.reference.cos_at(t)),
            probability: s.control_violation_probability,
        })
        .collect();
    (
        RangeCost {
            final_weight,
            control_weight: vec![s.control_weight; ctx.partition.steps()],
        },
        ConstraintSet { state, control },
    )
}

fn finish(
    ctx: &DesignContext,
    kind: TriggerKind,
    schedule: GainSchedule,
    lc_gains: Vec<Row5>,
    transform: &TriggerTransform,
    report: Option<SynthesisReport>,
) -> Result<Design> {
    let covariance = propagate_covariance(&ctx.p0, &ctx.discrete, &lc_gains)?;
    let terminal_covariance = transform.z * covariance.final_covariance() * transform.z.transpose();
    Ok(Design {
        kind,
        schedule,
        lc_gains,
        covariance,
        terminal_covariance,
        report,
    })
}

pub fn design_stochastic(
    ctx: &DesignContext,
    scenario: &Scenario,
    kind: TriggerKind,
    options: &SynthesisOptions,
) -> Result<Design> {
    let transform = ctx.transform(kind, scenario)?;
    let (cost, constraints) = range_problem(ctx, scenario, &transform);
    let synthesis = synthesize_stochastic_gains(&ctx.discrete, &ctx.p0, &cost, &constraints, options)?;
    let schedule = ctx.time_schedule(SynthesisMethod::Stochastic, ctx.trigger(kind, scenario), &synthesis.gains)?;
    finish(ctx, kind, schedule, synthesis.gains, &transform, Some(synthesis.report))
}

pub fn design_apollo(ctx: &DesignContext, scenario: &Scenario, kind: TriggerKind) -> Result<Design> {
    let aero = scenario.vehicle.nominal_aero();
    let transform = ctx.transform(kind, scenario)?;
    let trigger = ctx.trigger(kind, scenario);
    let schedule = apollo_gains(
        &ctx.linear,
        &ctx.reference,
        &unit(IDX_RANGE),
        &trigger,
        &scenario.planet,
        &aero,
        &scenario.atmosphere,
        &ApolloOptions::new(scenario.synthesis.overcontrol_gain),
    )?;
    let lc_gains = effective_time_gains(
        &schedule,
        &ctx.reference,
        &ctx.partition,
        &scenario.planet,
        &aero,
        &scenario.atmosphere,
    )?;
    finish(ctx, kind, schedule, lc_gains, &transform, None)
}

/// Open-loop schedule: the nominal bank profile with no feedback.
pub fn design_zero(ctx: &DesignContext, scenario: &Scenario, kind: TriggerKind) -> Result<Design> {
    let transform = ctx.transform(kind, scenario)?;
    let gains = vec![Row5::zeros(); ctx.partition.steps()];
    let schedule = ctx.time_schedule(SynthesisMethod::Zero, ctx.trigger(kind, scenario), &gains)?;
    finish(ctx, kind, schedule, gains, &transform, None)
}
