//! Mean density profile and the multiplicative Ornstein–Uhlenbeck density
//! variation `rho = rho_bar(s) * (1 + delta_rho(s))`, indexed by sink
//! distance `s = r_atm - r`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::table::Table1D;

/// Grid spacing of the precomputed variance solution, m.
const VARIANCE_GRID_STEP: f64 = 25.0;

/// Where the OU drift and diffusion coefficients come from.
#[derive(Debug, Clone, PartialEq)]
pub enum OuCoefficients {
    /// `lambda = 2/H(s)`, `phi = 4 zeta_d(s)/H(s)`: stationary variance tracks
    /// the desired profile.
    ScaleHeightMatched,
    /// Explicit tables against sink distance (1/m).
    Tables { lambda: Table1D, phi: Table1D },
}

/// Scale height and desired variation variance against sink distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub scale_height: Table1D,
    pub variance: Table1D,
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    sink_distance_m: f64,
    scale_height_m: f64,
    variance: f64,
}

impl DensityProfile {
    pub fn new(scale_height: Table1D, variance: Table1D) -> Result<Self> {
        if scale_height.min_y() <= 0.0 {
            return Err(Error::Argument("scale height must be positive".into()));
        }
        if variance.min_y() < 0.0 {
            return Err(Error::Argument("desired variance must be non-negative".into()));
        }
        Ok(Self {
            scale_height,
            variance,
        })
    }

    /// Reads a profile CSV with columns `sink_distance_m, scale_height_m, variance`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut s = Vec::new();
        let mut h = Vec::new();
        let mut z = Vec::new();
        for row in rdr.deserialize::<ProfileRow>() {
            let row = row?;
            s.push(row.sink_distance_m);
            h.push(row.scale_height_m);
            z.push(row.variance);
        }
        Self::new(Table1D::new(s.clone(), h)?, Table1D::new(s, z)?)
    }

    pub fn to_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        writeln!(out, "sink_distance_m,scale_height_m,variance").map_err(|e| Error::io("profile", e))?;
        // Both columns share the scale-height breakpoints when written.
        for &s in self.scale_height.xs() {
            writeln!(
                out,
                "{:?},{:?},{:?}",
                s,
                self.scale_height.eval(s),
                self.variance.eval(s)
            )
            .map_err(|e| Error::io("profile", e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AtmosphereModel {
    r_atm: f64,
    r_p: f64,
    surface_density: f64,
    profile: DensityProfile,
    zeta0: f64,
    coefficients: OuCoefficients,
    /// `int_{x_0}^{x_i} ds / H(s)` at the scale-height breakpoints.
    inv_h_cumulative: Vec<f64>,
    variance: VarianceGrid,
}

impl AtmosphereModel {
    /// Builds a model with scale-height-matched OU coefficients. `zeta0`
    /// defaults to `zeta_d(0)` so the process starts stationary.
    pub fn new(
        r_p: f64,
        r_atm: f64,
        surface_density: f64,
        profile: DensityProfile,
        zeta0: Option<f64>,
    ) -> Result<Self> {
        if !(r_atm > r_p && r_p > 0.0) {
            return Err(Error::Argument(format!(
                "need r_atm > r_p > 0 (r_p = {r_p}, r_atm = {r_atm})"
            )));
        }
        if surface_density <= 0.0 {
            return Err(Error::Argument("surface density must be positive".into()));
        }
        let zeta0 = zeta0.unwrap_or_else(|| profile.variance.eval(0.0));
        if zeta0 < 0.0 || !zeta0.is_finite() {
            return Err(Error::Argument("initial variance must be non-negative".into()));
        }
        let inv_h_cumulative = cumulative_inverse_scale_height(&profile.scale_height);
        let mut model = Self {
            r_atm,
            r_p,
            surface_density,
            profile,
            zeta0,
            coefficients: OuCoefficients::ScaleHeightMatched,
            inv_h_cumulative,
            variance: VarianceGrid::default(),
        };
        model.variance = VarianceGrid::solve(&model);
        Ok(model)
    }

    /// Replaces the OU coefficients with explicit tables.
    pub fn with_ou_coefficients(mut self, lambda: Table1D, phi: Table1D) -> Result<Self> {
        if lambda.min_y() < 0.0 || phi.min_y() < 0.0 {
            return Err(Error::Argument("OU coefficients must be non-negative".into()));
        }
        self.coefficients = OuCoefficients::Tables { lambda, phi };
        self.variance = VarianceGrid::solve(&self);
        Ok(self)
    }

    pub fn with_zeta0(mut self, zeta0: f64) -> Result<Self> {
        if zeta0 < 0.0 {
            return Err(Error::Argument("initial variance must be non-negative".into()));
        }
        self.zeta0 = zeta0;
        self.variance = VarianceGrid::solve(&self);
        Ok(self)
    }

    pub fn r_atm(&self) -> f64 {
        self.r_atm
    }

    pub fn r_p(&self) -> f64 {
        self.r_p
    }

    pub fn surface_density(&self) -> f64 {
        self.surface_density
    }

    pub fn zeta0(&self) -> f64 {
        self.zeta0
    }

    pub fn profile(&self) -> &DensityProfile {
        &self.profile
    }

    pub fn coefficients(&self) -> &OuCoefficients {
        &self.coefficients
    }

    pub fn sink_distance(&self, r: f64) -> f64 {
        self.r_atm - r
    }

    pub fn scale_height(&self, s: f64) -> f64 {
        self.profile.scale_height.eval(s)
    }

    /// Mean density at radius `r`, the solution of `d rho_bar/dr = -rho_bar/H`
    /// through the surface boundary value.
    pub fn mean_density(&self, r: f64) -> Result<f64> {
        if !(self.r_p..=self.r_atm).contains(&r) {
            return Err(Error::Domain(format!(
                "radius {r} m outside [{}, {}]",
                self.r_p, self.r_atm
            )));
        }
        Ok(self.mean_density_at_sink(self.sink_distance(r)))
    }

    /// Unchecked mean density by sink distance; extrapolates with the end
    /// scale heights outside the atmosphere.
    pub fn mean_density_at_sink(&self, s: f64) -> f64 {
        let s_surface = self.r_atm - self.r_p;
        let exponent = self.inverse_h_integral(s_surface) - self.inverse_h_integral(s);
        self.surface_density * (-exponent).exp()
    }

    /// `int_{x_0}^{s} ds' / H(s')` with clamped scale height outside the table.
    fn inverse_h_integral(&self, s: f64) -> f64 {
        let table = &self.profile.scale_height;
        let xs = table.xs();
        let ys = table.ys();
        let n = xs.len();
        if s <= xs[0] {
            return (s - xs[0]) / ys[0];
        }
        if s >= xs[n - 1] {
            return self.inv_h_cumulative[n - 1] + (s - xs[n - 1]) / ys[n - 1];
        }
        let i = xs.partition_point(|&b| b <= s) - 1;
        let slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        self.inv_h_cumulative[i] + linear_segment_integral(ys[i], slope, s - xs[i])
    }

    /// OU coefficients `(lambda, phi)` at sink distance `s` (clamped to `s >= 0`).
    pub fn ou_coefficients(&self, s: f64) -> (f64, f64) {
        let s = s.max(0.0);
        match &self.coefficients {
            OuCoefficients::ScaleHeightMatched => {
                let h = self.scale_height(s);
                (2.0 / h, 4.0 * self.profile.variance.eval(s) / h)
            }
            OuCoefficients::Tables { lambda, phi } => (lambda.eval(s), phi.eval(s)),
        }
    }

    fn ou_lambda_slope(&self, s: f64) -> f64 {
        match &self.coefficients {
            OuCoefficients::ScaleHeightMatched => {
                let h = self.scale_height(s);
                -2.0 * self.profile.scale_height.slope(s) / (h * h)
            }
            OuCoefficients::Tables { lambda, .. } => lambda.slope(s),
        }
    }

    /// Exact second moment of `delta_rho(s)`, from `dzeta/ds = -2 lambda zeta + phi`.
    pub fn variation_variance(&self, s: f64) -> f64 {
        self.variance.eval(s.max(0.0))
    }

    /// One Euler–Maruyama path of the variation process on `s_grid`.
    pub fn sample_variation(&self, s_grid: &[f64], seed: u64) -> Result<VariationSample> {
        if s_grid.first() != Some(&0.0) {
            return Err(Error::Argument("sink-distance grid must start at 0".into()));
        }
        if s_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "sink-distance grid must be strictly increasing".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(s_grid.len());
        values.push(self.initial_variation(&mut rng));
        for w in s_grid.windows(2) {
            let z: f64 = StandardNormal.sample(&mut rng);
            let prev = *values.last().unwrap();
            values.push(self.euler_maruyama_step(prev, w[0], w[1] - w[0], z));
        }
        Ok(VariationSample {
            s_grid: s_grid.to_vec(),
            delta_rho: values,
        })
    }

    fn initial_variation(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.zeta0.sqrt() * z
    }

    fn euler_maruyama_step(&self, delta: f64, s: f64, ds: f64, z: f64) -> f64 {
        let (lambda, phi) = self.ou_coefficients(s);
        delta - lambda * delta * ds + (phi * ds).sqrt() * z
    }

    /// Drift and diffusion of the density process in sink distance:
    /// `f = (1/H - lambda) rho + lambda rho_bar`, `g = rho_bar sqrt(phi)`.
    pub fn density_sde_coefficients(&self, s: f64, rho: f64) -> (f64, f64) {
        let rho_bar = self.mean_density_at_sink(s);
        let h = self.scale_height(s);
        let (lambda, phi) = self.ou_coefficients(s);
        ((1.0 / h - lambda) * rho + lambda * rho_bar, rho_bar * phi.sqrt())
    }

    /// Partial derivatives `(df/ds, df/drho)` of the density drift.
    pub fn density_drift_partials(&self, s: f64, rho: f64) -> (f64, f64) {
        let rho_bar = self.mean_density_at_sink(s);
        let h = self.scale_height(s);
        let dh = self.profile.scale_height.slope(s);
        let (lambda, _) = self.ou_coefficients(s);
        let dlambda = self.ou_lambda_slope(s);
        let df_ds = (-dh / (h * h) - dlambda) * rho + dlambda * rho_bar + lambda * rho_bar / h;
        (df_ds, 1.0 / h - lambda)
    }
}

/// One sampled variation path.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationSample {
    pub s_grid: Vec<f64>,
    pub delta_rho: Vec<f64>,
}

/// Variation path generated lazily on a uniform sink-distance grid as a
/// vehicle descends. Values already generated are replayed on re-ascent.
#[derive(Debug, Clone)]
pub struct VariationPath {
    step: f64,
    values: Vec<f64>,
    rng: ChaCha8Rng,
}

impl VariationPath {
    pub fn new(model: &AtmosphereModel, step: f64, seed: u64) -> Self {
        assert!(step > 0.0, "variation grid step must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = model.initial_variation(&mut rng);
        Self {
            step,
            values: vec![first],
            rng,
        }
    }

    /// Deepest sink distance generated so far.
    pub fn max_sink_distance(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    pub fn value_at(&mut self, model: &AtmosphereModel, s: f64) -> f64 {
        if s <= 0.0 {
            return self.values[0];
        }
        let pos = s / self.step;
        let i = pos.floor() as usize;
        while self.values.len() < i + 2 {
            let n = self.values.len() - 1;
            let z: f64 = StandardNormal.sample(&mut self.rng);
            let next = model.euler_maruyama_step(self.values[n], n as f64 * self.step, self.step, z);
            self.values.push(next);
        }
        let w = pos - i as f64;
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

fn linear_segment_integral(h0: f64, slope: f64, d: f64) -> f64 {
    if slope == 0.0 {
        d / h0
    } else {
        (slope * d / h0).ln_1p() / slope
    }
}

fn cumulative_inverse_scale_height(h: &Table1D) -> Vec<f64> {
    let xs = h.xs();
    let ys = h.ys();
    let mut out = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        let d = xs[i] - xs[i - 1];
        let slope = (ys[i] - ys[i - 1]) / d;
        out[i] = out[i - 1] + linear_segment_integral(ys[i - 1], slope, d);
    }
    out
}

/// Variance ODE solved once on a fixed grid; cubic Hermite between nodes and
/// the closed-form constant-coefficient solution past the last node.
#[derive(Debug, Clone, Default)]
struct VarianceGrid {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    tail: (f64, f64),
}

impl VarianceGrid {
    fn solve(model: &AtmosphereModel) -> Self {
        let mut s_end = model.r_atm - model.r_p;
        for t in [&model.profile.scale_height, &model.profile.variance] {
            s_end = s_end.max(*t.xs().last().unwrap());
        }
        if let OuCoefficients::Tables { lambda, phi } = &model.coefficients {
            s_end = s_end.max(*lambda.xs().last().unwrap());
            s_end = s_end.max(*phi.xs().last().unwrap());
        }
        let n = (s_end / VARIANCE_GRID_STEP).ceil().max(1.0) as usize;
        let step = s_end / n as f64;
        let rate = |s: f64, z: f64| {
            let (lambda, phi) = model.ou_coefficients(s);
            -2.0 * lambda * z + phi
        };
        let mut values = Vec::with_capacity(n + 1);
        let mut slopes = Vec::with_capacity(n + 1);
        let mut z = model.zeta0;
        for i in 0..=n {
            let s = i as f64 * step;
            values.push(z);
            slopes.push(rate(s, z));
            if i == n {
                break;
            }
            let k1 = rate(s, z);
            let k2 = rate(s + 0.5 * step, z + 0.5 * step * k1);
            let k3 = rate(s + 0.5 * step, z + 0.5 * step * k2);
            let k4 = rate(s + step, z + step * k3);
            z += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        Self {
            step,
            values,
            slopes,
            tail: model.ou_coefficients(s_end + 1.0),
        }
    }

    fn eval(&self, s: f64) -> f64 {
        let n = self.values.len() - 1;
        let s_end = n as f64 * self.step;
        if s >= s_end {
            let (lambda, phi) = self.tail;
            let d = s - s_end;
            let z_end = self.values[n];
            if lambda == 0.0 {
                return z_end + phi * d;
            }
            let z_inf = phi / (2.0 * lambda);
            return z_inf + (z_end - z_inf) * (-2.0 * lambda * d).exp();
        }
        let i = ((s / self.step).floor() as usize).min(n - 1);
        let h = self.step;
        let t = (s - i as f64 * h) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[i]
            + h10 * h * self.slopes[i]
            + h01 * self.values[i + 1]
            + h11 * h * self.slopes[i + 1]
    }
}
