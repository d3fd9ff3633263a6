//! Feedback gain tables indexed by time or by planet-relative speed, with
//! the nominal state and bank cosine they were designed about.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Row5, Vec5};
use crate::table::bracket;
use crate::triggers::TriggerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleIndex {
    /// Rows at partition times; each gain is held over its subinterval.
    Time,
    /// Rows in descending nominal speed; gains interpolated linearly in speed.
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisMethod {
    Apollo,
    Stochastic,
    Lqg,
    Zero,
}

impl SynthesisMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthesisMethod::Apollo => "apollo",
            SynthesisMethod::Stochastic => "stochastic",
            SynthesisMethod::Lqg => "lqg",
            SynthesisMethod::Zero => "zero",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "apollo" => Ok(Self::Apollo),
            "stochastic" => Ok(Self::Stochastic),
            "lqg" => Ok(Self::Lqg),
            "zero" => Ok(Self::Zero),
            other => Err(Error::Config(format!("unknown synthesis method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    /// Time (s) or nominal speed (m/s).
    pub index_value: f64,
    pub gain: Row5,
    pub nominal: Vec5,
    pub nominal_cos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub index: ScheduleIndex,
    pub method: SynthesisMethod,
    pub trigger: TriggerSpec,
    /// Time-indexed: increasing times. Velocity-indexed: decreasing speeds.
    pub rows: Vec<ScheduleRow>,
}

/// Gain, nominal state and nominal bank cosine at one lookup point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleLookup {
    pub row: usize,
    pub gain: Row5,
    pub nominal: Vec5,
    pub nominal_cos: f64,
}

const COLUMNS: [&str; 12] = [
    "index_value",
    "K_r",
    "K_V",
    "K_gamma",
    "K_R",
    "K_rho",
    "nom_r_m",
    "nom_V_mps",
    "nom_gamma_rad",
    "nom_R_m",
    "nom_rho_kgpm3",
    "nom_cos_bank",
];

impl GainSchedule {
    pub fn new(
        index: ScheduleIndex,
        method: SynthesisMethod,
        trigger: TriggerSpec,
        rows: Vec<ScheduleRow>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Argument("gain schedule has no rows".into()));
        }
        let ordered = match index {
            ScheduleIndex::Time => rows.windows(2).all(|w| w[1].index_value > w[0].index_value),
            ScheduleIndex::Velocity => {
                rows.windows(2).all(|w| w[1].index_value < w[0].index_value)
            }
        };
        if !ordered {
            return Err(Error::Argument(
                "schedule rows must be strictly ordered (times increasing, speeds decreasing)"
                    .into(),
            ));
        }
        Ok(Self {
            index,
            method,
            trigger,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_scaled_gains(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.gain *= factor;
        }
        out
    }

    /// Subinterval index holding time `t`; clamped to the table.
    pub fn segment(&self, t: f64) -> usize {
        let tol = 1e-9 * (1.0 + t.abs());
        self.rows
            .partition_point(|r| r.index_value <= t + tol)
            .saturating_sub(1)
    }

    /// Time-indexed lookup: zero-order-hold gain, nominal linearly interpolated.
    pub fn lookup_time(&self, t: f64) -> ScheduleLookup {
        let k = self.segment(t);
        let times: Vec<f64> = self.rows.iter().map(|r| r.index_value).collect();
        let (i, w) = bracket(&times, t);
        let (nominal, nominal_cos) = self.blend(i, w);
        ScheduleLookup {
            row: k,
            gain: self.rows[k].gain,
            nominal,
            nominal_cos,
        }
    }

    /// Velocity-indexed lookup: gains and nominal interpolated linearly in
    /// speed; outside the table the boundary row is held.
    pub fn lookup_velocity(&self, v: f64) -> ScheduleLookup {
        // Rows are stored in descending speed; bracket on the negated speeds.
        let keys: Vec<f64> = self.rows.iter().map(|r| -r.index_value).collect();
        let (i, w) = bracket(&keys, -v);
        let (nominal, nominal_cos) = self.blend(i, w);
        let gain = if w == 0.0 || i + 1 == self.rows.len() {
            self.rows[i].gain
        } else if w == 1.0 {
            self.rows[i + 1].gain
        } else {
            self.rows[i].gain * (1.0 - w) + self.rows[i + 1].gain * w
        };
        ScheduleLookup {
            row: if w < 0.5 { i } else { (i + 1).min(self.rows.len() - 1) },
            gain,
            nominal,
            nominal_cos,
        }
    }

    fn blend(&self, i: usize, w: f64) -> (Vec5, f64) {
        let a = &self.rows[i];
        if w == 0.0 || i + 1 == self.rows.len() {
            return (a.nominal, a.nominal_cos);
        }
        let b = &self.rows[i + 1];
        if w == 1.0 {
            return (b.nominal, b.nominal_cos);
        }
        (
            a.nominal * (1.0 - w) + b.nominal * w,
            a.nominal_cos + w * (b.nominal_cos - a.nominal_cos),
        )
    }

    /// Writes the schedule as CSV with `#`-prefixed metadata lines. Floats
    /// use the shortest round-trip representation so a re-read is bit-exact.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let io = |e| Error::io("gain table", e);
        writeln!(out, "# index = {}", match self.index {
            ScheduleIndex::Time => "time",
            ScheduleIndex::Velocity => "velocity",
        })
        .map_err(io)?;
        writeln!(out, "# method = {}", self.method.as_str()).map_err(io)?;
        match &self.trigger {
            TriggerSpec::Fixed { t_final } => {
                writeln!(out, "# trigger = fixed").map_err(io)?;
                writeln!(out, "# t_final_s = {t_final:?}").map_err(io)?;
            }
            TriggerSpec::Hyperplane { nu, beta } => {
                writeln!(out, "# trigger = hyperplane").map_err(io)?;
                let nu: Vec<String> = nu.iter().map(|x| format!("{x:?}")).collect();
                writeln!(out, "# nu = {}", nu.join(" ")).map_err(io)?;
                writeln!(out, "# beta = {beta:?}").map_err(io)?;
            }
        }
        writeln!(out, "{}", COLUMNS.join(",")).map_err(io)?;
        for row in &self.rows {
            let mut fields = vec![format!("{:?}", row.index_value)];
            fields.extend(row.gain.iter().map(|x| format!("{x:?}")));
            fields.extend(row.nominal.iter().map(|x| format!("{x:?}")));
            fields.push(format!("{:?}", row.nominal_cos));
            writeln!(out, "{}", fields.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("schedule CSV is ASCII")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut meta = std::collections::BTreeMap::new();
        let mut body = String::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io("gain table", e))?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
            } else if !line.trim().is_empty() {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::Config(format!("gain table missing `{k}` metadata")))
        };
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid number `{s}` in gain table")))
        };
        let index = match get("index")?.as_str() {
            "time" => ScheduleIndex::Time,
            "velocity" => ScheduleIndex::Velocity,
            other => return Err(Error::Config(format!("unknown index kind `{other}`"))),
        };
        let method = SynthesisMethod::parse(&get("method")?)?;
        let trigger = match get("trigger")?.as_str() {
            "fixed" => TriggerSpec::Fixed {
                t_final: parse_f(&get("t_final_s")?)?,
            },
            "hyperplane" => {
                let nu: Vec<f64> = get("nu")?
                    .split_whitespace()
                    .map(parse_f)
                    .collect::<Result<_>>()?;
                if nu.len() != 5 {
                    return Err(Error::Config("trigger nu must have 5 entries".into()));
                }
                TriggerSpec::Hyperplane {
                    nu: Vec5::from_column_slice(&nu),
                    beta: parse_f(&get("beta")?)?,
                }
            }
            other => return Err(Error::Config(format!("unknown trigger kind `{other}`"))),
        };
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != COLUMNS {
            return Err(Error::Config(format!(
                "gain table columns must be {}",
                COLUMNS.join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec.iter().map(parse_f).collect::<Result<_>>()?;
            rows.push(ScheduleRow {
                index_value: vals[0],
                gain: Row5::from_row_slice(&vals[1..6]),
                nominal: Vec5::from_column_slice(&vals[6..11]),
                nominal_cos: vals[11],
            });
        }
        Self::new(index, method, trigger, rows)
    }
}
