//! Synthetic one-minute SCADA from a hidden farm model.
//!
//! Wind is drawn from a Gaussian-copula AR(1) process with a configurable
//! rose, per-sector Weibull speeds and truncated-normal turbulence. Each
//! turbine's yaw controller tracks its set-point with a deadband, and the
//! hidden wake model turns the realized yaw into power.

use std::io::{Read, Write};

use chrono::{NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::farm::{ingest_error, wrap_deg, FarmLayout, ProfileShape, WindCondition};
use crate::optimizer::{lookup, LookupTable};
use crate::rotor::RotorResponse;
use crate::wake::{FarmSnapshot, WakeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Normal,
    Curtailed,
    Fault,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Normal => "normal",
            Status::Curtailed => "curtailed",
            Status::Fault => "fault",
        }
    }
}

/// One-minute averaged telemetry of one turbine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScadaRecord {
    pub timestamp: NaiveDateTime,
    pub turbine_id: u32,
    pub power: f64,
    pub nacelle_deg: f64,
    pub speed: f64,
    /// Wind direction relative to the nacelle.
    pub vane_deg: f64,
    pub ti: f64,
    pub status: Status,
    pub commanded_yaw: f64,
}

pub const SCADA_HEADER: [&str; 9] = [
    "timestamp",
    "turbine_id",
    "power_w",
    "nacelle_deg",
    "speed_ms",
    "vane_deg",
    "ti",
    "status",
    "commanded_yaw_deg",
];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Writes records under the SCADA header, preceded by `# ` comment lines.
pub fn write_scada<W: Write>(mut writer: W, records: &[ScadaRecord], comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(writer, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SCADA_HEADER)?;
    for r in records {
        w.write_record(&[
            r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            r.turbine_id.to_string(),
            r.power.to_string(),
            r.nacelle_deg.to_string(),
            r.speed.to_string(),
            r.vane_deg.to_string(),
            r.ti.to_string(),
            r.status.as_str().to_string(),
            r.commanded_yaw.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads SCADA CSV; `#` lines are skipped. Errors name the offending line.
pub fn read_scada<R: Read>(reader: R) -> Result<Vec<ScadaRecord>> {
    #[derive(Deserialize)]
    struct Row {
        timestamp: String,
        turbine_id: u32,
        power_w: f64,
        nacelle_deg: f64,
        speed_ms: f64,
        vane_deg: f64,
        ti: f64,
        status: Status,
        commanded_yaw_deg: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| ingest_error(&e))?.clone();
    if headers.iter().ne(SCADA_HEADER.iter().copied()) {
        return Err(Error::Ingest {
            line: 1,
            message: format!("expected header {}", SCADA_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ingest_error(&e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec.deserialize(Some(&headers)).map_err(|e| Error::Ingest {
            line,
            message: e.to_string(),
        })?;
        let bad = |message: String| Error::Ingest { line, message };
        let ts = NaiveDateTime::parse_from_str(&row.timestamp, TIMESTAMP_FORMAT)
            .map_err(|e| bad(format!("bad timestamp {:?}: {e}", row.timestamp)))?;
        if ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(bad(format!("timestamp {} is not minute-aligned", row.timestamp)));
        }
        if row.status == Status::Normal && !(row.power_w >= 0.0) {
            return Err(bad("negative power for a turbine in normal operation".into()));
        }
        out.push(ScadaRecord {
            timestamp: ts,
            turbine_id: row.turbine_id,
            power: row.power_w,
            nacelle_deg: row.nacelle_deg,
            speed: row.speed_ms,
            vane_deg: row.vane_deg,
            ti: row.ti,
            status: row.status,
            commanded_yaw: row.commanded_yaw_deg,
        });
    }
    Ok(out)
}

/// Stochastic wind climate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindProcess {
    /// Relative frequency of equal-width direction sectors, the first
    /// starting at -180 deg.
    pub rose: Vec<f64>,
    pub weibull_shape: f64,
    /// Weibull scale per sector, interpolated between sector centers.
    pub weibull_scale: Vec<f64>,
    pub ti_mean: f64,
    pub ti_sd: f64,
    pub ti_range: (f64, f64),
    /// e-folding time of the latent AR(1) processes, minutes.
    pub correlation_minutes: f64,
}

impl Default for WindProcess {
    /// Northerly dominated rose over 36 sectors, mean speed near 7 m/s.
    fn default() -> Self {
        let rose = (0..36)
            .map(|k| {
                let center = (-175.0 + 10.0 * k as f64).to_radians();
                0.15 + (3.0 * (center.cos() - 1.0)).exp()
            })
            .collect();
        WindProcess {
            rose,
            weibull_shape: 2.2,
            weibull_scale: vec![8.0; 36],
            ti_mean: 0.07,
            ti_sd: 0.03,
            ti_range: (0.01, 0.3),
            correlation_minutes: 30.0,
        }
    }
}

impl WindProcess {
    pub fn validate(&self) -> Result<()> {
        let n = self.rose.len();
        if n == 0 || self.weibull_scale.len() != n {
            return Err(invalid("wind rose and Weibull scales need one entry per sector"));
        }
        if self.rose.iter().any(|w| !(*w >= 0.0)) || !(self.rose.iter().sum::<f64>() > 0.0) {
            return Err(invalid("wind rose weights must be non-negative with a positive sum"));
        }
        if !(self.weibull_shape > 0.0) || self.weibull_scale.iter().any(|c| !(*c > 0.0)) {
            return Err(invalid("Weibull parameters must be positive"));
        }
        if !(self.ti_sd > 0.0) || !(self.ti_range.0 < self.ti_range.1) || self.ti_range.0 < 0.0 || self.ti_range.1 >= 1.0 {
            return Err(invalid("TI distribution is invalid"));
        }
        if !(self.correlation_minutes >= 1.0) {
            return Err(invalid("correlation time must be at least one minute"));
        }
        Ok(())
    }

    /// Normalized sector probabilities.
    pub fn sector_probabilities(&self) -> Vec<f64> {
        let s: f64 = self.rose.iter().sum();
        self.rose.iter().map(|w| w / s).collect()
    }

    pub fn sector_width(&self) -> f64 {
        360.0 / self.rose.len() as f64
    }

    pub fn sampler(&self, seed: u64) -> Result<WindSampler> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latent = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let probs = self.sector_probabilities();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in probs {
            acc += p;
            cdf.push(acc);
        }
        Ok(WindSampler {
            process: self.clone(),
            cdf,
            phi: (-1.0 / self.correlation_minutes).exp(),
            latent,
            rng,
            normal: Normal::standard(),
        })
    }
}

/// Minute-by-minute draws from a [`WindProcess`].
pub struct WindSampler {
    process: WindProcess,
    cdf: Vec<f64>,
    phi: f64,
    latent: [f64; 3],
    rng: ChaCha8Rng,
    normal: Normal,
}

impl WindSampler {
    fn direction(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let lo = if k == 0 { 0.0 } else { self.cdf[k - 1] };
        let frac = if self.cdf[k] > lo { (u - lo) / (self.cdf[k] - lo) } else { 0.5 };
        let w = self.process.sector_width();
        wrap_deg(-180.0 + w * (k as f64 + frac.clamp(0.0, 1.0)))
    }

    fn scale_at(&self, direction: f64) -> f64 {
        let n = self.process.weibull_scale.len();
        let w = self.process.sector_width();
        let pos = (direction + 180.0) / w - 0.5;
        let i = pos.floor();
        let t = pos - i;
        let a = (i as i64).rem_euclid(n as i64) as usize;
        let b = (a + 1) % n;
        let c = &self.process.weibull_scale;
        c[a] + t * (c[b] - c[a])
    }

    pub fn next_condition(&mut self) -> WindCondition {
        let s = (1.0 - self.phi * self.phi).sqrt();
        for z in self.latent.iter_mut() {
            let e: f64 = self.rng.sample(StandardNormal);
            *z = self.phi * *z + s * e;
        }
        let clamp = |p: f64| p.clamp(1e-12, 1.0 - 1e-12);
        let ud = clamp(self.normal.cdf(self.latent[0]));
        let uu = clamp(self.normal.cdf(self.latent[1]));
        let ut = clamp(self.normal.cdf(self.latent[2]));
        let direction = self.direction(ud);
        let k = self.process.weibull_shape;
        let speed = self.scale_at(direction) * (-(1.0 - uu).ln()).powf(1.0 / k);
        let p = &self.process;
        let (lo, hi) = p.ti_range;
        let fa = self.normal.cdf((lo - p.ti_mean) / p.ti_sd);
        let fb = self.normal.cdf((hi - p.ti_mean) / p.ti_sd);
        let q = clamp(fa + ut * (fb - fa));
        let ti = (p.ti_mean + p.ti_sd * self.normal.inverse_cdf(q)).clamp(lo, hi);
        WindCondition {
            speed,
            direction,
            turbulence_intensity: ti,
        }
    }
}

/// Alternation between baseline and control phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToggleSchedule {
    pub period_minutes: i64,
    pub origin: NaiveDateTime,
}

impl ToggleSchedule {
    pub fn new(period_minutes: i64, origin: NaiveDateTime) -> Result<Self> {
        if period_minutes <= 0 {
            return Err(invalid("toggle period must be positive"));
        }
        Ok(ToggleSchedule { period_minutes, origin })
    }

    /// Even phases run baseline control, odd phases the tested control.
    pub fn is_control(&self, t: NaiveDateTime) -> bool {
        (t - self.origin).num_minutes().div_euclid(self.period_minutes).rem_euclid(2) == 1
    }
}

pub fn default_start() -> NaiveDateTime {
    NaiveDateTime::parse_from_str("2021-01-01T00:00:00Z", TIMESTAMP_FORMAT).unwrap()
}

impl Default for ToggleSchedule {
    fn default() -> Self {
        ToggleSchedule {
            period_minutes: 150,
            origin: default_start(),
        }
    }
}

/// Nacelle heading after one minute of yaw control.
///
/// The nacelle turns toward `direction - commanded` by at most `max_step`
/// when the heading error exceeds `deadband`; otherwise it holds.
pub fn yaw_tracking(commanded: f64, nacelle: f64, direction: f64, deadband: f64, max_step: f64) -> f64 {
    let err = wrap_deg(direction - commanded - nacelle);
    if err.abs() <= deadband {
        return nacelle;
    }
    wrap_deg(nacelle + err.signum() * err.abs().min(max_step))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ControlMode {
    Baseline,
    /// Cycle `angles` on one turbine, each held `hold_minutes`, regardless
    /// of wind or toggle phase.
    FixedSequence {
        turbine_id: u32,
        angles: Vec<f64>,
        hold_minutes: i64,
    },
    /// Table set-points in control phases, zero in baseline phases.
    Lookup { table: LookupTable },
}

impl ControlMode {
    /// The -25..25 deg staircase in 5 deg steps, one hour each.
    pub fn fixed_staircase(turbine_id: u32) -> Self {
        ControlMode::FixedSequence {
            turbine_id,
            angles: (-5..=5).map(|k| 5.0 * k as f64).collect(),
            hold_minutes: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Relative standard deviation of multiplicative power noise.
    pub power_sd: f64,
    pub vane_sd: f64,
    pub speed_sd: f64,
    /// Per-minute probability that a running turbine faults.
    pub fault_probability: f64,
    pub fault_mean_minutes: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            power_sd: 0.0,
            vane_sd: 0.0,
            speed_sd: 0.0,
            fault_probability: 0.0,
            fault_mean_minutes: 60.0,
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            power_sd: 0.03,
            vane_sd: 2.0,
            speed_sd: 0.0,
            fault_probability: 2e-4,
            fault_mean_minutes: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YawControllerModel {
    pub deadband: f64,
    /// Largest nacelle rotation per minute, deg.
    pub max_step: f64,
}

impl Default for YawControllerModel {
    fn default() -> Self {
        YawControllerModel {
            deadband: 5.0,
            max_step: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindInput {
    Process(WindProcess),
    Constant(WindCondition),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub start: NaiveDateTime,
    pub duration_minutes: usize,
    pub wind: WindInput,
    pub shape: ProfileShape,
    pub noise: NoiseModel,
    pub controller: YawControllerModel,
    pub schedule: ToggleSchedule,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            start: default_start(),
            duration_minutes: 0,
            wind: WindInput::Process(WindProcess::default()),
            shape: ProfileShape::default(),
            noise: NoiseModel::default(),
            controller: YawControllerModel::default(),
            schedule: ToggleSchedule::default(),
            seed: 0,
        }
    }
}

/// Hidden ground truth of a synthetic farm.
pub struct TrueFarm<'a, R: RotorResponse> {
    pub layout: &'a FarmLayout,
    pub params: &'a WakeParams,
    pub rotor: &'a R,
}

/// Largest realized yaw passed to the rotor model.
const MAX_REALIZED_YAW: f64 = 60.0;

pub fn simulate<R: RotorResponse>(
    truth: &TrueFarm<R>,
    control: &ControlMode,
    config: &SimulationConfig,
) -> Result<Vec<ScadaRecord>> {
    let layout = truth.layout;
    let n = layout.len();
    truth.params.validate(n)?;
    let hub = layout
        .turbines()
        .first()
        .map(|t| t.hub_height)
        .ok_or_else(|| invalid("layout has no turbines"))?;
    let reference = layout.reference_index();
    if matches!(control, ControlMode::Lookup { .. }) && reference.is_none() {
        return Err(invalid("lookup control needs a reference turbine"));
    }
    let mut sampler = match &config.wind {
        WindInput::Process(p) => Some(p.sampler(config.seed)?),
        WindInput::Constant(c) => {
            c.validate()?;
            None
        }
    };
    let table_index: Option<Vec<Option<usize>>> = match control {
        ControlMode::Lookup { table } => Some(
            layout
                .turbines()
                .iter()
                .map(|t| table.turbine_ids.iter().position(|&id| id == t.id))
                .collect(),
        ),
        _ => None,
    };
    let fixed_index = match control {
        ControlMode::FixedSequence { turbine_id, hold_minutes, angles } => {
            if *hold_minutes <= 0 || angles.is_empty() {
                return Err(invalid("fixed sequence needs angles and a positive hold time"));
            }
            Some(
                layout
                    .index_of(*turbine_id)
                    .ok_or_else(|| invalid(format!("unknown turbine {turbine_id}")))?,
            )
        }
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_f1e1d);
    let noise = config.noise;
    let fault_end = 1.0 / noise.fault_mean_minutes.max(1.0);
    let mut nacelle: Vec<Option<f64>> = vec![None; n];
    let mut faulted = vec![false; n];
    let mut last_ref: Option<WindCondition> = None;
    let mut records = Vec::with_capacity(config.duration_minutes * n);
    let specs = layout.turbines();
    for minute in 0..config.duration_minutes {
        let t = config.start + chrono::Duration::minutes(minute as i64);
        let wind = match sampler.as_mut() {
            Some(s) => s.next_condition(),
            None => match &config.wind {
                WindInput::Constant(c) => *c,
                WindInput::Process(_) => unreachable!(),
            },
        };
        let profile = config.shape.profile(wind.speed, wind.direction, hub)?;
        let vane_noise: Vec<f64> = (0..n).map(|_| gauss(&mut rng, noise.vane_sd)).collect();
        let commanded: Vec<f64> = match control {
            ControlMode::Baseline => vec![0.0; n],
            ControlMode::FixedSequence { angles, hold_minutes, .. } => {
                let mut c = vec![0.0; n];
                let k = (minute as i64 / hold_minutes) as usize % angles.len();
                c[fixed_index.unwrap()] = angles[k];
                c
            }
            ControlMode::Lookup { table } => {
                if config.schedule.is_control(t) {
                    let measured = last_ref.unwrap_or(wind);
                    let s = lookup(table, &measured);
                    table_index
                        .as_ref()
                        .unwrap()
                        .iter()
                        .map(|k| k.map_or(0.0, |k| s.yaw[k]))
                        .collect()
                } else {
                    vec![0.0; n]
                }
            }
        };
        let mut yaw = vec![0.0; n];
        for i in 0..n {
            let seen = wind.direction + vane_noise[i];
            let nac = match nacelle[i] {
                None => wrap_deg(seen - commanded[i]),
                Some(prev) => yaw_tracking(commanded[i], prev, seen, config.controller.deadband, config.controller.max_step),
            };
            nacelle[i] = Some(nac);
            yaw[i] = wrap_deg(wind.direction - nac).clamp(-MAX_REALIZED_YAW, MAX_REALIZED_YAW);
        }
        let snap = FarmSnapshot::new(layout, &profile, wind.direction, &yaw, truth.rotor)?;
        let solved = snap.solve(truth.params);
        for i in 0..n {
            if faulted[i] {
                if rng.random::<f64>() < fault_end {
                    faulted[i] = false;
                }
            } else if noise.fault_probability > 0.0 && rng.random::<f64>() < noise.fault_probability {
                faulted[i] = true;
            }
            let pn = gauss(&mut rng, noise.power_sd);
            let sn = gauss(&mut rng, noise.speed_sd);
            let (power, status) = if faulted[i] {
                (0.0, Status::Fault)
            } else {
                ((solved.power[i] * (1.0 + pn)).max(0.0), Status::Normal)
            };
            let nac = nacelle[i].unwrap();
            let speed = (wind.speed * solved.inflow_ratio[i] + sn).max(0.0);
            records.push(ScadaRecord {
                timestamp: t,
                turbine_id: specs[i].id,
                power,
                nacelle_deg: nac,
                speed,
                vane_deg: wrap_deg(yaw[i] + vane_noise[i]),
                ti: wind.turbulence_intensity,
                status,
                commanded_yaw: commanded[i],
            });
            if Some(i) == reference {
                last_ref = Some(WindCondition {
                    speed,
                    direction: wrap_deg(nac + yaw[i] + vane_noise[i]),
                    turbulence_intensity: wind.turbulence_intensity,
                });
            }
        }
    }
    Ok(records)
}

fn gauss(rng: &mut impl Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        sd * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotor::{RotorModel, TabulatedRotor};
    use statrs::distribution::ChiSquared;

    fn truth_parts() -> (FarmLayout, WakeParams, TabulatedRotor) {
        let layout = FarmLayout::reference_site();
        let rotor = TabulatedRotor::build(
            &RotorModel::generic_for(&layout.turbines()[0]),
            layout.turbines(),
            &ProfileShape::default(),
            60.0,
            0.5,
        )
        .unwrap();
        (layout, WakeParams::uniform(4, 0.03), rotor)
    }

    #[test]
    fn tracking_rules() {
        // inside the deadband nothing moves
        assert_eq!(yaw_tracking(0.0, 10.0, 13.0, 5.0, 30.0), 10.0);
        // a large step converges monotonically into the deadband
        let mut nac = 0.0;
        let mut prev_err = f64::INFINITY;
        for _ in 0..10 {
            nac = yaw_tracking(20.0, nac, 100.0, 5.0, 30.0);
            let err = wrap_deg(80.0 - nac).abs();
            assert!(err <= prev_err);
            prev_err = err;
        }
        assert!(prev_err <= 5.0);
        // wraps across +-180
        assert_eq!(yaw_tracking(0.0, 175.0, -170.0, 5.0, 30.0), -170.0);
        assert_eq!(yaw_tracking(0.0, 175.0, -170.0, 5.0, 10.0), -175.0);
    }

    #[test]
    fn noise_free_constant_wind_matches_model() {
        let (layout, params, rotor) = truth_parts();
        let wind = WindCondition::new(7.0, 0.0, 0.06).unwrap();
        let cfg = SimulationConfig {
            duration_minutes: 20,
            wind: WindInput::Constant(wind),
            noise: NoiseModel::none(),
            ..Default::default()
        };
        let truth = TrueFarm {
            layout: &layout,
            params: &params,
            rotor: &rotor,
        };
        let recs = simulate(&truth, &ControlMode::Baseline, &cfg).unwrap();
        assert_eq!(recs.len(), 80);
        let profile = cfg.shape.profile(7.0, 0.0, 100.0).unwrap();
        let expected = FarmSnapshot::new(&layout, &profile, 0.0, &[0.0; 4], &rotor).unwrap().solve(&params);
        for (k, r) in recs.iter().enumerate() {
            assert_eq!(r.power, expected.power[k % 4]);
            assert_eq!(r.vane_deg, 0.0);
        }
    }

    #[test]
    fn fixed_sequence_holds_an_hour() {
        let (layout, params, rotor) = truth_parts();
        let cfg = SimulationConfig {
            duration_minutes: 180,
            seed: 4,
            ..Default::default()
        };
        let truth = TrueFarm {
            layout: &layout,
            params: &params,
            rotor: &rotor,
        };
        let recs = simulate(&truth, &ControlMode::fixed_staircase(1), &cfg).unwrap();
        let t1: Vec<f64> = recs.iter().filter(|r| r.turbine_id == 1).map(|r| r.commanded_yaw).collect();
        assert!(t1[..60].iter().all(|g| *g == -25.0));
        assert!(t1[60..120].iter().all(|g| *g == -20.0));
        assert!(t1[120..].iter().all(|g| *g == -15.0));
        assert!(recs.iter().filter(|r| r.turbine_id != 1).all(|r| r.commanded_yaw == 0.0));
    }

    #[test]
    fn toggle_alternates_every_period() {
        let s = ToggleSchedule::default();
        let at = |m: i64| s.origin + chrono::Duration::minutes(m);
        assert!(!s.is_control(at(0)));
        assert!(!s.is_control(at(149)));
        assert!(s.is_control(at(150)));
        assert!(s.is_control(at(299)));
        assert!(!s.is_control(at(300)));
        assert!(s.is_control(at(-1)));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (layout, params, rotor) = truth_parts();
        let cfg = SimulationConfig {
            duration_minutes: 300,
            seed: 77,
            ..Default::default()
        };
        let truth = TrueFarm {
            layout: &layout,
            params: &params,
            rotor: &rotor,
        };
        let a = simulate(&truth, &ControlMode::Baseline, &cfg).unwrap();
        let b = simulate(&truth, &ControlMode::Baseline, &cfg).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_scada(&mut ba, &a, &[]).unwrap();
        write_scada(&mut bb, &b, &[]).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn realized_yaw_spread_near_deadband() {
        let (layout, params, rotor) = truth_parts();
        let cfg = SimulationConfig {
            duration_minutes: 20_000,
            seed: 2,
            ..Default::default()
        };
        let truth = TrueFarm {
            layout: &layout,
            params: &params,
            rotor: &rotor,
        };
        let recs = simulate(&truth, &ControlMode::Baseline, &cfg).unwrap();
        // inside the main lobe of the rose, where minute-to-minute direction
        // changes are small
        let yaw: Vec<f64> = recs
            .iter()
            .filter(|r| r.turbine_id == 1 && wrap_deg(r.nacelle_deg + r.vane_deg).abs() < 30.0)
            .map(|r| r.vane_deg)
            .collect();
        assert!(yaw.len() > 5000);
        let mean = yaw.iter().sum::<f64>() / yaw.len() as f64;
        let sd = (yaw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / yaw.len() as f64).sqrt();
        assert!(mean.abs() < 0.5);
        assert!(sd > 2.0 && sd < 5.0, "sd {sd}");
        let within = yaw.iter().filter(|v| v.abs() <= 7.5).count() as f64 / yaw.len() as f64;
        assert!(within > 0.9);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let (layout, params, rotor) = truth_parts();
        let cfg = SimulationConfig {
            duration_minutes: 30,
            seed: 1,
            ..Default::default()
        };
        let truth = TrueFarm {
            layout: &layout,
            params: &params,
            rotor: &rotor,
        };
        let recs = simulate(&truth, &ControlMode::Baseline, &cfg).unwrap();
        let mut buf = Vec::new();
        write_scada(&mut buf, &recs, &["seed 1".into()]).unwrap();
        let back = read_scada(&buf[..]).unwrap();
        assert_eq!(back, recs);

        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("2021-01-01T01:00:30Z,1,100,0,7,0,0.05,normal,0\n");
        match read_scada(text.as_bytes()) {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 123),
            other => panic!("{other:?}"),
        }
        let bad = "timestamp,turbine_id,power_w,nacelle_deg,speed_ms,vane_deg,ti,status,commanded_yaw_deg\n\
                   2021-01-01T00:00:00Z,1,100,0,7,0,0.05,normal,0\n\
                   2021-01-01T00:01:00Z,1,abc,0,7,0,0.05,normal,0\n";
        match read_scada(bad.as_bytes()) {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_duration_gives_no_records() {
        let (layout, params, rotor) = truth_parts();
        let truth = TrueFarm {
            layout: &layout,
            params: &params,
            rotor: &rotor,
        };
        let recs = simulate(&truth, &ControlMode::Baseline, &SimulationConfig::default()).unwrap();
        assert!(recs.is_empty());
        let mut buf = Vec::new();
        write_scada(&mut buf, &recs, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), SCADA_HEADER.join(","));
    }

    #[test]
    fn wind_rose_converges() {
        let process = WindProcess {
            correlation_minutes: 1.0,
            ..Default::default()
        };
        let mut s = process.sampler(123).unwrap();
        let probs = process.sector_probabilities();
        let mut counts = vec![0.0; probs.len()];
        let n = 100_000;
        for _ in 0..n {
            let mut c = s.next_condition();
            for _ in 0..9 {
                c = s.next_condition();
            }
            let k = (((c.direction + 180.0) / process.sector_width()).floor() as usize).min(probs.len() - 1);
            counts[k] += 1.0;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(o, p)| (o - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        let dist = ChiSquared::new((probs.len() - 1) as f64).unwrap();
        let p_value = 1.0 - dist.cdf(chi2);
        assert!(p_value > 0.01, "chi2 {chi2}, p {p_value}");
    }
}
