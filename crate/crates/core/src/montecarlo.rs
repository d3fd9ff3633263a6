//! Monte Carlo evaluation of gain schedules: seeded entry dispersions,
//! closed-loop trials in a sampled atmosphere, and ensemble statistics.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::atmosphere::VariationPath;
use crate::dynamics::FullState;
use crate::error::{Error, Result};
use crate::flight::{fly, ClimbDiagnostic, Density, FlightContext, FlightRecord, Recording, ReferenceTrajectory};
use crate::gains::schedule::GainSchedule;
use crate::guidance::LongitudinalLaw;
use crate::lincov::CovarianceTrajectory;
use crate::linalg::{Mat5, Vec5};
use crate::scenario::{Dispersions, Scenario};

/// Flagged fraction above which an ensemble is reported as degraded.
pub const MAX_FLAGGED_FRACTION: f64 = 0.01;

/// Per-trial random inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialInputs {
    pub trial: u64,
    pub initial: FullState,
    pub alpha_deg: f64,
    pub atmosphere_seed: u64,
}

/// Draws the entry state, trim angle of attack and atmosphere seed of one
/// trial from the stream `trial` of the master seed. Downrange and
/// crossrange (positive to the left) offsets move the entry point along and
/// across the nominal heading on a sphere of radius `reference_radius`;
/// the entry radius is not dispersed.
pub fn sample_trial_inputs(
    nominal: &FullState,
    dispersions: &Dispersions,
    reference_radius: f64,
    master_seed: u64,
    trial: u64,
) -> TrialInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let dv = dispersions.velocity * normal();
    let dgamma = dispersions.flight_path * normal();
    let dpsi = dispersions.heading * normal();
    let down = dispersions.downrange * normal();
    let cross = dispersions.crossrange * normal();
    let (lo, hi) = (dispersions.trim_alpha_min_deg, dispersions.trim_alpha_max_deg);
    let u: f64 = rng.random();
    let alpha_deg = if hi > lo { lo + u * (hi - lo) } else { lo };
    let atmosphere_seed = rng.next_u64();

    let (s, c) = nominal.psi.sin_cos();
    let north = down * c + cross * s;
    let east = down * s - cross * c;
    let initial = FullState {
        r: nominal.r,
        theta: nominal.theta + east / (reference_radius * nominal.phi.cos()),
        phi: nominal.phi + north / reference_radius,
        v: nominal.v + dv,
        gamma: nominal.gamma + dgamma,
        psi: nominal.psi + dpsi,
    };
    TrialInputs {
        trial,
        initial,
        alpha_deg,
        atmosphere_seed,
    }
}

/// Terminal errors relative to the reference terminal state, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FinalErrors {
    pub altitude: f64,
    pub velocity: f64,
    pub flight_path: f64,
    pub range: f64,
    pub crossrange: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub atmosphere_seed: u64,
    pub alpha_deg: f64,
    /// Reason the trial was excluded, if it was.
    pub flag: Option<String>,
    pub t_final: f64,
    pub terminal: Vec5,
    pub errors: FinalErrors,
    pub corrections: usize,
    pub saturations: usize,
    pub reversals: usize,
    pub climb: ClimbDiagnostic,
    /// Longitudinal state at the recording times reached before the trigger.
    #[serde(skip)]
    pub samples: Vec<(f64, Vec5)>,
}

impl TrialResult {
    pub fn completed(&self) -> bool {
        self.flag.is_none()
    }
}

/// What stays fixed across the trials of one ensemble.
#[derive(Debug, Clone, Copy)]
pub struct TrialSetup<'a> {
    pub scenario: &'a Scenario,
    pub reference: &'a ReferenceTrajectory,
    pub dispersions: &'a Dispersions,
    pub seed: u64,
    /// Times at which the longitudinal state is recorded.
    pub record_times: &'a [f64],
}

/// Climb diagnostic of a completed flight.
pub fn lofting_guard(record: &FlightRecord) -> ClimbDiagnostic {
    record.climb
}

/// Flies one trial with `schedule` in its own sampled atmosphere.
pub fn run_trial(setup: &TrialSetup, schedule: &GainSchedule, trial: u64) -> TrialResult {
    let sc = setup.scenario;
    let inputs = sample_trial_inputs(
        &sc.initial,
        setup.dispersions,
        sc.target.reference_radius,
        setup.seed,
        trial,
    );
    let ctx = FlightContext {
        planet: &sc.planet,
        atmosphere: &sc.atmosphere,
        target: &sc.target,
        lateral: &sc.lateral,
        integration: &sc.integration,
        range_origin: setup.reference.range_origin,
    };
    let path = VariationPath::new(&sc.atmosphere, sc.integration.variation_step, inputs.atmosphere_seed);
    let flown = fly(
        &ctx,
        &sc.vehicle.trimmed(inputs.alpha_deg),
        LongitudinalLaw::Schedule(schedule),
        &inputs.initial,
        Density::Sampled(path),
        &schedule.trigger,
        Recording::At(setup.record_times.to_vec()),
        false,
    );
    let mut result = TrialResult {
        trial,
        atmosphere_seed: inputs.atmosphere_seed,
        alpha_deg: inputs.alpha_deg,
        flag: None,
        t_final: f64::NAN,
        terminal: Vec5::repeat(f64::NAN),
        errors: FinalErrors::default(),
        corrections: 0,
        saturations: 0,
        reversals: 0,
        climb: ClimbDiagnostic::default(),
        samples: Vec::new(),
    };
    match flown {
        Ok(record) => {
            let nominal = setup.reference.terminal();
            let end = &record.terminal;
            let dx = end.x - nominal.x;
            result.t_final = end.t;
            result.terminal = end.x;
            result.errors = FinalErrors {
                altitude: dx[0],
                velocity: dx[1],
                flight_path: dx[2],
                range: dx[3],
                crossrange: sc.target.reference_radius * (end.eps - nominal.eps),
            };
            result.corrections = record.new_corrections;
            result.saturations = record.saturations;
            result.reversals = record.reversals;
            result.climb = lofting_guard(&record);
            result.samples = record.samples;
        }
        Err(e) => result.flag = Some(e.to_string()),
    }
    result
}

/// Inclusive linear-interpolation percentile of sorted data, `p` in [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub p01: f64,
    pub p50: f64,
    pub p99: f64,
}

impl Percentiles {
    /// Percentiles of `values`; NaN for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                p01: f64::NAN,
                p50: f64::NAN,
                p99: f64::NAN,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            p01: percentile(&v, 1.0),
            p50: percentile(&v, 50.0),
            p99: percentile(&v, 99.0),
        }
    }
}

/// Summary of one terminal error quantity in reporting units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityStats {
    pub name: &'static str,
    pub percentiles: Percentiles,
    pub mean: f64,
    pub std_dev: f64,
}

/// Sample statistics of the deviation from the reference at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeStats {
    pub t: f64,
    pub count: usize,
    pub mean: Vec5,
    pub covariance: Mat5,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub trials: usize,
    pub completed: usize,
    pub flagged: usize,
    pub quantities: Vec<QuantityStats>,
    pub corrections: usize,
    pub saturations: usize,
    /// Fraction of fresh feedback corrections beyond the allowed deviation.
    pub saturation_frequency: f64,
    pub time_stats: Vec<TimeStats>,
    pub warnings: Vec<String>,
}

impl EnsembleStats {
    pub fn quantity(&self, name: &str) -> Option<&QuantityStats> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn degraded(&self) -> bool {
        self.flagged as f64 > MAX_FLAGGED_FRACTION * self.trials as f64
    }
}

/// Terminal error quantities in reporting order: name and extractor.
pub const QUANTITIES: [(&str, fn(&FinalErrors) -> f64); 5] = [
    ("altitude_m", |e| e.altitude),
    ("velocity_mps", |e| e.velocity),
    ("flight_path_deg", |e| e.flight_path.to_degrees()),
    ("range_m", |e| e.range),
    ("crossrange_m", |e| e.crossrange),
];

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub trials: Vec<TrialResult>,
    pub stats: EnsembleStats,
}

impl Ensemble {
    /// Fraction of completed trials with `|error| <= limit` for `quantity`.
    pub fn fraction_within(&self, quantity: &str, limit: f64) -> f64 {
        let Some((_, get)) = QUANTITIES.iter().find(|(n, _)| *n == quantity) else {
            return f64::NAN;
        };
        let done: Vec<_> = self.trials.iter().filter(|t| t.completed()).collect();
        let inside = done.iter().filter(|t| get(&t.errors).abs() <= limit).count();
        inside as f64 / done.len() as f64
    }
}

/// Runs `trials` trials on `workers` threads. Results are ordered by trial
/// id and do not depend on the worker count.
pub fn run_ensemble(setup: &TrialSetup, schedule: &GainSchedule, trials: usize, workers: usize) -> Result<Ensemble> {
    if trials == 0 {
        return Err(Error::Argument("an ensemble needs at least one trial".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    let results: Vec<TrialResult> = pool.install(|| {
        (0..trials as u64)
            .into_par_iter()
            .map(|id| run_trial(setup, schedule, id))
            .collect()
    });
    let stats = ensemble_stats(&results, setup.reference, setup.record_times);
    Ok(Ensemble { trials: results, stats })
}

/// Statistics over the completed trials; quantities are NaN when none completed.
pub fn ensemble_stats(results: &[TrialResult], reference: &ReferenceTrajectory, record_times: &[f64]) -> EnsembleStats {
    let done: Vec<&TrialResult> = results.iter().filter(|r| r.completed()).collect();
    let flagged = results.len() - done.len();
    let quantities = QUANTITIES
        .iter()
        .map(|(name, get)| {
            let v: Vec<f64> = done.iter().map(|r| get(&r.errors)).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            QuantityStats {
                name,
                percentiles: Percentiles::of(&v),
                mean,
                std_dev: var.sqrt(),
            }
        })
        .collect();
    let corrections: usize = done.iter().map(|r| r.corrections).sum();
    let saturations: usize = done.iter().map(|r| r.saturations).sum();

    let mut time_stats = Vec::with_capacity(record_times.len());
    for &t in record_times {
        let nominal = reference.state_at(t);
        let devs: Vec<Vec5> = done
            .iter()
            .filter_map(|r| r.samples.iter().find(|(ts, _)| (*ts - t).abs() <= 1e-9))
            .map(|(_, x)| x - nominal)
            .collect();
        let count = devs.len();
        let mut mean = Vec5::zeros();
        let mut covariance = Mat5::zeros();
        if count > 0 {
            mean = devs.iter().sum::<Vec5>() / count as f64;
        }
        if count > 1 {
            for d in &devs {
                let c = d - mean;
                covariance += c * c.transpose();
            }
            covariance /= (count - 1) as f64;
        }
        time_stats.push(TimeStats {
            t,
            count,
            mean,
            covariance,
        });
    }

    let mut warnings = Vec::new();
    let stats_trials = results.len();
    if flagged as f64 > MAX_FLAGGED_FRACTION * stats_trials as f64 {
        warnings.push(format!("{flagged} of {stats_trials} trials flagged and excluded"));
    }
    EnsembleStats {
        trials: stats_trials,
        completed: done.len(),
        flagged,
        quantities,
        corrections,
        saturations,
        saturation_frequency: if corrections > 0 {
            saturations as f64 / corrections as f64
        } else {
            0.0
        },
        time_stats,
        warnings,
    }
}

fn io_err(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(what, e)
}

/// One row per trial.
pub fn write_trials_csv(mut out: impl Write, results: &[TrialResult]) -> Result<()> {
    let io = io_err("trial table");
    writeln!(
        out,
        "trial,status,atmosphere_seed,alpha_deg,t_final_s,altitude_err_m,velocity_err_mps,\
         flight_path_err_deg,range_err_m,crossrange_err_m,corrections,saturations,reversals,\
         climb_distance_m,climb_fraction,message"
    )
    .map_err(&io)?;
    for r in results {
        let e = &r.errors;
        let message = r.flag.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{},{:?},{:?},{}",
            r.trial,
            if r.completed() { "ok" } else { "flagged" },
            r.atmosphere_seed,
            r.alpha_deg,
            r.t_final,
            e.altitude,
            e.velocity,
            e.flight_path.to_degrees(),
            e.range,
            e.crossrange,
            r.corrections,
            r.saturations,
            r.reversals,
            r.climb.climb_distance,
            r.climb.climb_fraction,
            message
        )
        .map_err(&io)?;
    }
    Ok(())
}

/// Percentile table with one row per (quantity, percentile) and one column
/// per labelled ensemble.
pub fn write_summary_csv(mut out: impl Write, columns: &[(&str, &EnsembleStats)]) -> Result<()> {
    let io = io_err("summary table");
    let header: Vec<&str> = columns.iter().map(|(label, _)| *label).collect();
    writeln!(out, "quantity,percentile,{}", header.join(",")).map_err(&io)?;
    for (name, _) in QUANTITIES {
        for (tag, pick) in [
            ("p01", (|p: &Percentiles| p.p01) as fn(&Percentiles) -> f64),
            ("p50", |p| p.p50),
            ("p99", |p| p.p99),
        ] {
            let cells: Vec<String> = columns
                .iter()
                .map(|(_, s)| s.quantity(name).map_or("nan".into(), |q| format!("{:?}", pick(&q.percentiles))))
                .collect();
            writeln!(out, "{name},{tag},{}", cells.join(",")).map_err(&io)?;
        }
    }
    let rows: [(&str, fn(&EnsembleStats) -> String); 4] = [
        ("completed", |s| s.completed.to_string()),
        ("flagged", |s| s.flagged.to_string()),
        ("saturation_frequency", |s| format!("{:?}", s.saturation_frequency)),
        ("corrections", |s| s.corrections.to_string()),
    ];
    for (name, get) in rows {
        let cells: Vec<String> = columns.iter().map(|(_, s)| get(s)).collect();
        writeln!(out, "{name},,{}", cells.join(",")).map_err(&io)?;
    }
    Ok(())
}

/// Monte Carlo mean and standard deviation of the deviation from the
/// reference next to the linear-covariance standard deviation, per
/// recording time. `lc` must share the recording times as its partition.
pub fn write_overlay_csv(mut out: impl Write, stats: &EnsembleStats, lc: &CovarianceTrajectory) -> Result<()> {
    let io = io_err("overlay table");
    let names = ["r_m", "V_mps", "gamma_rad", "R_m", "rho_kgpm3"];
    let mut header = vec!["t_s".to_string(), "count".to_string()];
    for n in names {
        header.push(format!("mc_mean_{n}"));
        header.push(format!("mc_sd_{n}"));
        header.push(format!("lc_sd_{n}"));
    }
    writeln!(out, "{}", header.join(",")).map_err(&io)?;
    for (k, ts) in stats.time_stats.iter().enumerate() {
        let mut cells = vec![format!("{:?}", ts.t), ts.count.to_string()];
        for i in 0..5 {
            cells.push(format!("{:?}", ts.mean[i]));
            cells.push(format!("{:?}", ts.covariance[(i, i)].max(0.0).sqrt()));
            let lc_sd = lc.p.get(k).map_or(f64::NAN, |p| p[(i, i)].max(0.0).sqrt());
            cells.push(format!("{lc_sd:?}"));
        }
        writeln!(out, "{}", cells.join(",")).map_err(&io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal() -> FullState {
        FullState {
            r: 3_500_000.0,
            theta: 2.0,
            phi: 0.0,
            v: 5800.0,
            gamma: -0.27,
            psi: std::f64::consts::FRAC_PI_2,
        }
    }

    fn zero() -> Dispersions {
        Dispersions {
            velocity: 0.0,
            flight_path: 0.0,
            heading: 0.0,
            downrange: 0.0,
            crossrange: 0.0,
            trim_alpha_min_deg: -15.5,
            trim_alpha_max_deg: -15.5,
        }
    }

    #[test]
    fn zero_dispersions_give_the_nominal_state() {
        for trial in 0..5 {
            let inp = sample_trial_inputs(&nominal(), &zero(), 3.4e6, 11, trial);
            assert_eq!(inp.initial, nominal());
            assert_eq!(inp.alpha_deg, -15.5);
        }
    }

    #[test]
    fn downrange_offset_moves_along_the_heading() {
        let d = Dispersions { downrange: 1.0, ..zero() };
        let inp = sample_trial_inputs(&nominal(), &d, 3.4e6, 3, 0);
        // recover the standard normal draw used for downrange
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        rng.set_stream(0);
        let z: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let expected = z[3] / 3.4e6;
        assert!((inp.initial.theta - nominal().theta - expected).abs() < 1e-15);
        assert!(inp.initial.phi.abs() < 1e-15);
    }

    #[test]
    fn inputs_depend_only_on_seed_and_trial() {
        let d = Dispersions {
            velocity: 6.0,
            flight_path: 0.003,
            heading: 1e-4,
            downrange: 1000.0,
            crossrange: 100.0,
            trim_alpha_min_deg: -16.5,
            trim_alpha_max_deg: -14.5,
        };
        let a = sample_trial_inputs(&nominal(), &d, 3.4e6, 9, 17);
        let b = sample_trial_inputs(&nominal(), &d, 3.4e6, 9, 17);
        let c = sample_trial_inputs(&nominal(), &d, 3.4e6, 9, 18);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((-16.5..=-14.5).contains(&a.alpha_deg));
    }

    #[test]
    fn percentiles_interpolate_order_statistics() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        let p = Percentiles::of(&v);
        assert_eq!(p.p50, 3.0);
        assert!((p.p01 - 1.04).abs() < 1e-12);
        assert!((p.p99 - 4.96).abs() < 1e-12);
        let single = Percentiles::of(&[7.5]);
        assert_eq!((single.p01, single.p50, single.p99), (7.5, 7.5, 7.5));
    }
}
