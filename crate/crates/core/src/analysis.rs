//! SCADA filtering, conditional power ratios and the toggle-experiment
//! energy statistics with stratified bootstrap intervals.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationDataset, CalibrationSample};
use crate::error::{invalid, Error, Result};
use crate::farm::{wrap_deg, FarmLayout, ProfileShape, WindCondition};
use crate::rotor::RotorResponse;
use crate::synthetic::{ScadaRecord, Status, ToggleSchedule};
use crate::wake::{FarmSnapshot, WakeParams};

/// All turbines' telemetry for one minute, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct Minute {
    pub timestamp: NaiveDateTime,
    pub power: Vec<f64>,
    pub vane: Vec<f64>,
    pub commanded: Vec<f64>,
    pub all_normal: bool,
    /// Freestream conditions as measured by the reference turbine.
    pub condition: WindCondition,
    /// Circular mean of every turbine's nacelle plus vane direction.
    pub farm_direction: f64,
}

/// Groups records by timestamp. Minutes missing any turbine are dropped.
pub fn assemble_minutes(records: &[ScadaRecord], layout: &FarmLayout) -> Result<Vec<Minute>> {
    let reference = layout
        .reference_index()
        .ok_or_else(|| invalid("analysis needs a reference turbine"))?;
    let n = layout.len();
    let mut by_time: BTreeMap<NaiveDateTime, Vec<Option<&ScadaRecord>>> = BTreeMap::new();
    for r in records {
        let i = layout
            .index_of(r.turbine_id)
            .ok_or_else(|| invalid(format!("record for unknown turbine {}", r.turbine_id)))?;
        by_time.entry(r.timestamp).or_insert_with(|| vec![None; n])[i] = Some(r);
    }
    let mut out = Vec::with_capacity(by_time.len());
    for (timestamp, row) in by_time {
        if row.iter().any(|r| r.is_none()) {
            continue;
        }
        let row: Vec<&ScadaRecord> = row.into_iter().flatten().collect();
        let rf = row[reference];
        let (sin, cos) = row.iter().fold((0.0, 0.0), |(s, c), r| {
            let a = (r.nacelle_deg + r.vane_deg).to_radians();
            (s + a.sin(), c + a.cos())
        });
        out.push(Minute {
            farm_direction: wrap_deg(sin.atan2(cos).to_degrees()),
            timestamp,
            power: row.iter().map(|r| r.power).collect(),
            vane: row.iter().map(|r| r.vane_deg).collect(),
            commanded: row.iter().map(|r| r.commanded_yaw).collect(),
            all_normal: row.iter().all(|r| r.status == Status::Normal),
            condition: WindCondition {
                speed: rf.speed,
                direction: wrap_deg(rf.nacelle_deg + rf.vane_deg),
                turbulence_intensity: rf.ti,
            },
        });
    }
    Ok(out)
}

fn usable(m: &Minute, reference: usize) -> bool {
    m.all_normal && m.power[reference] > 0.0
}

/// Grid and thresholds of the fixed-yaw conditional averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub speed_range: (f64, f64),
    pub ti_range: (f64, f64),
    pub direction_centers: Vec<f64>,
    pub direction_halfwidth: f64,
    pub yaw_centers: Vec<f64>,
    pub yaw_halfwidth: f64,
    /// Cells need strictly more samples than this.
    pub min_samples: usize,
    /// Turbine whose vane defines the realized yaw.
    pub yaw_turbine: u32,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            speed_range: (6.0, 8.0),
            ti_range: (0.025, 0.075),
            direction_centers: (-4..=1).map(|k| 2.5 * k as f64).collect(),
            direction_halfwidth: 1.25,
            yaw_centers: (-5..=5).map(|k| 5.0 * k as f64).collect(),
            yaw_halfwidth: 2.5,
            min_samples: 25,
            yaw_turbine: 1,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_range.0 < self.speed_range.1) || !(self.ti_range.0 < self.ti_range.1) {
            return Err(invalid("filter ranges must be non-empty"));
        }
        if self.min_samples < 1 {
            return Err(invalid("minimum samples per cell must be at least one"));
        }
        if self.direction_centers.is_empty() || self.yaw_centers.is_empty() {
            return Err(invalid("filter grids must be non-empty"));
        }
        Ok(())
    }
}

/// Minutes falling in one (direction, yaw) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedYawCell {
    pub direction_center: f64,
    pub yaw_center: f64,
    /// Turbine powers per minute, layout order.
    pub samples: Vec<Vec<f64>>,
}

/// Index of the centered bin `(c - hw, c + hw]` containing `value`.
fn centered_bin(centers: &[f64], halfwidth: f64, value: f64) -> Option<usize> {
    centers
        .iter()
        .position(|&c| value > c - halfwidth && value <= c + halfwidth)
}

pub fn filter_fixed_yaw(minutes: &[Minute], layout: &FarmLayout, spec: &FilterSpec) -> Result<Vec<FixedYawCell>> {
    spec.validate()?;
    let reference = layout
        .reference_index()
        .ok_or_else(|| invalid("analysis needs a reference turbine"))?;
    let yt = layout
        .index_of(spec.yaw_turbine)
        .ok_or_else(|| invalid(format!("unknown turbine {}", spec.yaw_turbine)))?;
    let mut cells: BTreeMap<(usize, usize), Vec<Vec<f64>>> = BTreeMap::new();
    for m in minutes {
        let c = &m.condition;
        if !usable(m, reference)
            || c.speed < spec.speed_range.0
            || c.speed >= spec.speed_range.1
            || c.turbulence_intensity < spec.ti_range.0
            || c.turbulence_intensity > spec.ti_range.1
        {
            continue;
        }
        let (Some(d), Some(y)) = (
            centered_bin(&spec.direction_centers, spec.direction_halfwidth, c.direction),
            centered_bin(&spec.yaw_centers, spec.yaw_halfwidth, m.vane[yt]),
        ) else {
            continue;
        };
        cells.entry((d, y)).or_default().push(m.power.clone());
    }
    Ok(cells
        .into_iter()
        .filter(|(_, s)| s.len() > spec.min_samples)
        .map(|((d, y), samples)| FixedYawCell {
            direction_center: spec.direction_centers[d],
            yaw_center: spec.yaw_centers[y],
            samples,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    /// Resample blocks instead of single samples: minutes sharing a block
    /// of this many minutes in the energy analysis, runs of this many
    /// consecutive samples elsewhere.
    pub block: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 2000,
            level: 0.95,
            seed: 0,
            block: None,
        }
    }
}

/// Draws one stratified resample: for every stratum, as many indices as it
/// holds, with replacement from that stratum.
pub fn resample_strata(strata: &[Vec<usize>], block: Option<usize>, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    strata
        .iter()
        .map(|s| {
            let n = s.len();
            if n == 0 {
                return Vec::new();
            }
            match block {
                Some(b) if b > 1 && n > 2 => {
                    // a block covering the whole stratum would only rotate it
                    let b = b.min(n / 2);
                    let mut out = Vec::with_capacity(n);
                    while out.len() < n {
                        let start = rng.random_range(0..n);
                        for k in 0..b.min(n - out.len()) {
                            out.push(s[(start + k) % n]);
                        }
                    }
                    out
                }
                _ => (0..n).map(|_| s[rng.random_range(0..n)]).collect(),
            }
        })
        .collect()
}

/// Draws one resample of whole clusters: every stratum gets as many
/// clusters as it holds, with replacement from that stratum.
pub fn resample_clusters(strata: &[Vec<Vec<usize>>], rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::new();
    for s in strata {
        for _ in 0..s.len() {
            out.extend_from_slice(&s[rng.random_range(0..s.len())]);
        }
    }
    out
}

/// Percentile interval of `values` at the given two-sided level.
pub fn percentile_interval(values: &mut [f64], level: f64) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (values.len() - 1) as f64;
        let i = pos.floor() as usize;
        let j = (i + 1).min(values.len() - 1);
        values[i] + (pos - i as f64) * (values[j] - values[i])
    };
    let a = 0.5 * (1.0 - level);
    (q(a), q(1.0 - a))
}

/// Percentile bootstrap interval of `statistic` under stratified
/// resampling. The statistic may return `None` for degenerate resamples,
/// which are skipped.
pub fn bootstrap_ci(
    strata: &[Vec<usize>],
    mut statistic: impl FnMut(&[Vec<usize>]) -> Option<f64>,
    config: &BootstrapConfig,
) -> Result<(f64, f64)> {
    let total: usize = strata.iter().map(|s| s.len()).sum();
    if total < 2 {
        return Err(Error::TooFewSamples(total));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut values = Vec::with_capacity(config.resamples);
    for _ in 0..config.resamples {
        let r = resample_strata(strata, config.block, &mut rng);
        if let Some(v) = statistic(&r) {
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::TooFewSamples(total));
    }
    Ok(percentile_interval(&mut values, config.level))
}

/// Widens `ci` to contain `point`.
fn containing(ci: (f64, f64), point: f64) -> (f64, f64) {
    (ci.0.min(point), ci.1.max(point))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRatioStats {
    pub mean: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub samples: usize,
}

/// Mean power of every turbine over the simultaneous reference power,
/// with bootstrap intervals. Samples with non-positive reference power are
/// dropped.
pub fn conditional_power_ratio(samples: &[Vec<f64>], reference: usize, config: &BootstrapConfig) -> Result<PowerRatioStats> {
    let ratios: Vec<Vec<f64>> = samples
        .iter()
        .filter(|s| s[reference] > 0.0)
        .map(|s| s.iter().map(|p| p / s[reference]).collect())
        .collect();
    if ratios.is_empty() {
        return Err(Error::EmptyData("power-ratio cell".into()));
    }
    let n_t = ratios[0].len();
    let n = ratios.len() as f64;
    let mean: Vec<f64> = (0..n_t).map(|i| ratios.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let strata = vec![(0..ratios.len()).collect::<Vec<_>>()];
    let ci = (0..n_t)
        .map(|i| {
            let ci = bootstrap_ci(
                &strata,
                |r| Some(r[0].iter().map(|&k| ratios[k][i]).sum::<f64>() / r[0].len() as f64),
                &BootstrapConfig {
                    seed: config.seed.wrapping_add(i as u64),
                    ..*config
                },
            )?;
            Ok(containing(ci, mean[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerRatioStats {
        mean,
        ci,
        samples: ratios.len(),
    })
}

/// Speed-bin weights taken from the opposite mode's counts.
pub fn switched_weights(opposite_counts: &[usize]) -> Vec<f64> {
    let total: usize = opposite_counts.iter().sum();
    opposite_counts
        .iter()
        .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
        .collect()
}

/// Weighted test energy over weighted reference energy.
pub fn energy_ratio(test_means: &[f64], ref_means: &[f64], weights: &[f64]) -> Result<f64> {
    if test_means.len() != weights.len() || ref_means.len() != weights.len() {
        return Err(invalid("energy ratio inputs differ in length"));
    }
    if weights.is_empty() || weights.iter().all(|w| *w == 0.0) {
        return Err(Error::UndefinedRatio);
    }
    let num: f64 = weights.iter().zip(test_means).map(|(w, p)| w * p).sum();
    let den: f64 = weights.iter().zip(ref_means).map(|(w, p)| w * p).sum();
    if !(den > 0.0) {
        return Err(Error::UndefinedRatio);
    }
    Ok(num / den)
}

pub fn ratio_gain(steer: f64, base: f64) -> Result<f64> {
    if base == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(steer / base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorGain {
    pub gain: f64,
    pub weights: Vec<f64>,
}

/// Energy-weighted mean of per-direction gains.
pub fn sector_gain(ratios: &[f64], ref_energy: &[f64], ref_counts: &[usize]) -> Result<SectorGain> {
    if ratios.is_empty() {
        return Err(Error::EmptySector { dropped: Vec::new() });
    }
    if ref_energy.len() != ratios.len() || ref_counts.len() != ratios.len() {
        return Err(invalid("sector gain inputs differ in length"));
    }
    let raw: Vec<f64> = ref_energy.iter().zip(ref_counts).map(|(e, &n)| e * n as f64).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedRatio);
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let gain = weights.iter().zip(ratios).map(|(w, r)| w * r).sum();
    Ok(SectorGain { gain, weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Base,
    Steer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    /// Reference-measured direction interval `[lo, hi)`.
    pub sector: (f64, f64),
    pub speed_range: (f64, f64),
    pub direction_step: f64,
    pub speed_step: f64,
    pub ti_max: f64,
    /// Directions need strictly more samples than this in both modes.
    pub min_direction_samples: usize,
    /// Speed bins need strictly more samples than this in both modes.
    pub min_speed_samples: usize,
    /// Turbines summed as the test power; empty means every non-reference
    /// turbine.
    pub test_ids: Vec<u32>,
}

impl EnergySpec {
    pub fn new(sector: (f64, f64), speed_range: (f64, f64)) -> Self {
        EnergySpec {
            sector,
            speed_range,
            direction_step: 2.5,
            speed_step: 1.0,
            ti_max: 0.2,
            min_direction_samples: 20,
            min_speed_samples: 5,
            test_ids: Vec::new(),
        }
    }

    fn direction_bins(&self) -> usize {
        ((self.sector.1 - self.sector.0) / self.direction_step).round() as usize
    }

    fn speed_bins(&self) -> usize {
        ((self.speed_range.1 - self.speed_range.0) / self.speed_step).round() as usize
    }
}

/// One usable minute reduced to what the energy statistics need.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EnergySample {
    /// Minutes since the epoch.
    minute: i64,
    mode: Mode,
    direction: usize,
    speed: usize,
    test: f64,
    reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub dir_lo: f64,
    pub dir_hi: f64,
    pub energy_ratio_base: f64,
    pub energy_ratio_steer: f64,
    pub ratio: f64,
    pub ci: (f64, f64),
    pub counts_base: Vec<usize>,
    pub counts_steer: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAnalysis {
    pub sector: (f64, f64),
    pub speed_range: (f64, f64),
    pub gain: f64,
    pub ci: (f64, f64),
    pub directions: Vec<DirectionResult>,
    /// Lower edges of direction bins that failed the sample thresholds.
    pub dropped: Vec<f64>,
    pub samples_base: usize,
    pub samples_steer: usize,
}

struct Cells {
    n_dir: usize,
    n_speed: usize,
    /// per (direction, speed, mode): (count, sum test, sum ref)
    stats: Vec<[(usize, f64, f64); 2]>,
}

impl Cells {
    fn new(n_dir: usize, n_speed: usize) -> Self {
        Cells {
            n_dir,
            n_speed,
            stats: vec![[(0, 0.0, 0.0); 2]; n_dir * n_speed],
        }
    }

    fn add(&mut self, s: &EnergySample) {
        let c = &mut self.stats[s.direction * self.n_speed + s.speed][s.mode as usize];
        c.0 += 1;
        c.1 += s.test;
        c.2 += s.reference;
    }
}

/// Per-direction statistics and sector gain from accumulated cells.
struct Evaluated {
    gain: f64,
    per_direction: Vec<(usize, f64, f64, f64, f64)>,
    dropped: Vec<usize>,
}

fn evaluate(cells: &Cells, spec: &EnergySpec) -> Result<Evaluated> {
    let mut per_direction = Vec::new();
    let mut dropped = Vec::new();
    let mut ratios = Vec::new();
    let mut energies = Vec::new();
    let mut counts = Vec::new();
    for d in 0..cells.n_dir {
        let row = &cells.stats[d * cells.n_speed..(d + 1) * cells.n_speed];
        let kept: Vec<&[(usize, f64, f64); 2]> = row
            .iter()
            .filter(|c| c[0].0 > spec.min_speed_samples && c[1].0 > spec.min_speed_samples)
            .collect();
        let n_base: usize = kept.iter().map(|c| c[0].0).sum();
        let n_steer: usize = kept.iter().map(|c| c[1].0).sum();
        if kept.is_empty() || n_base <= spec.min_direction_samples || n_steer <= spec.min_direction_samples {
            dropped.push(d);
            continue;
        }
        let mean = |c: &(usize, f64, f64)| (c.1 / c.0 as f64, c.2 / c.0 as f64);
        let w_base = switched_weights(&kept.iter().map(|c| c[1].0).collect::<Vec<_>>());
        let w_steer = switched_weights(&kept.iter().map(|c| c[0].0).collect::<Vec<_>>());
        let (tb, rb): (Vec<f64>, Vec<f64>) = kept.iter().map(|c| mean(&c[0])).unzip();
        let (ts, rs): (Vec<f64>, Vec<f64>) = kept.iter().map(|c| mean(&c[1])).unzip();
        let e_base = energy_ratio(&tb, &rb, &w_base)?;
        let e_steer = energy_ratio(&ts, &rs, &w_steer)?;
        let r = ratio_gain(e_steer, e_base)?;
        let n_ref = n_base + n_steer;
        let e_ref = kept.iter().map(|c| c[0].2 + c[1].2).sum::<f64>() / n_ref as f64;
        ratios.push(r);
        energies.push(e_ref);
        counts.push(n_ref);
        per_direction.push((d, e_base, e_steer, r, 0.0));
    }
    if ratios.is_empty() {
        return Err(Error::EmptySector {
            dropped: dropped.iter().map(|&d| spec.sector.0 + d as f64 * spec.direction_step).collect(),
        });
    }
    let sg = sector_gain(&ratios, &energies, &counts)?;
    for (p, w) in per_direction.iter_mut().zip(&sg.weights) {
        p.4 = *w;
    }
    Ok(Evaluated {
        gain: sg.gain,
        per_direction,
        dropped,
    })
}

fn energy_samples(minutes: &[Minute], layout: &FarmLayout, schedule: &ToggleSchedule, spec: &EnergySpec) -> Result<Vec<EnergySample>> {
    let reference = layout
        .reference_index()
        .ok_or_else(|| invalid("analysis needs a reference turbine"))?;
    let test: Vec<usize> = if spec.test_ids.is_empty() {
        layout.test_indices()
    } else {
        spec.test_ids
            .iter()
            .map(|&id| layout.index_of(id).ok_or_else(|| invalid(format!("unknown turbine {id}"))))
            .collect::<Result<_>>()?
    };
    let (nd, ns) = (spec.direction_bins(), spec.speed_bins());
    let mut out = Vec::new();
    for m in minutes {
        let c = &m.condition;
        if !usable(m, reference) || !(c.turbulence_intensity < spec.ti_max) {
            continue;
        }
        let d = ((c.direction - spec.sector.0) / spec.direction_step).floor();
        let s = ((c.speed - spec.speed_range.0) / spec.speed_step).floor();
        if d < 0.0 || d >= nd as f64 || s < 0.0 || s >= ns as f64 {
            continue;
        }
        out.push(EnergySample {
            minute: m.timestamp.and_utc().timestamp().div_euclid(60),
            mode: if schedule.is_control(m.timestamp) { Mode::Steer } else { Mode::Base },
            direction: d as usize,
            speed: s as usize,
            test: test.iter().map(|&i| m.power[i]).sum(),
            reference: m.power[reference],
        });
    }
    Ok(out)
}

/// Energy ratios per direction bin, their gains and the sector gain, with
/// intervals from a bootstrap stratified by (mode, direction, speed).
/// With a block length set, the minutes of a stratum falling in one block
/// of wall-clock time are resampled together.
pub fn energy_analysis(
    minutes: &[Minute],
    layout: &FarmLayout,
    schedule: &ToggleSchedule,
    spec: &EnergySpec,
    bootstrap: &BootstrapConfig,
) -> Result<EnergyAnalysis> {
    if !(spec.sector.0 < spec.sector.1) || !(spec.speed_range.0 < spec.speed_range.1) {
        return Err(invalid("energy analysis ranges must be non-empty"));
    }
    let samples = energy_samples(minutes, layout, schedule, spec)?;
    let (nd, ns) = (spec.direction_bins(), spec.speed_bins());
    let mut cells = Cells::new(nd, ns);
    for s in &samples {
        cells.add(s);
    }
    let point = evaluate(&cells, spec)?;

    let block = bootstrap.block.unwrap_or(1).max(1) as i64;
    let mut strata_map: BTreeMap<(Mode, usize, usize), BTreeMap<i64, Vec<usize>>> = BTreeMap::new();
    for (k, s) in samples.iter().enumerate() {
        strata_map
            .entry((s.mode, s.direction, s.speed))
            .or_default()
            .entry(s.minute.div_euclid(block))
            .or_default()
            .push(k);
    }
    let strata: Vec<Vec<Vec<usize>>> = strata_map.into_values().map(|c| c.into_values().collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap.seed);
    let mut gains = Vec::with_capacity(bootstrap.resamples);
    let mut dir_draws: Vec<Vec<f64>> = vec![Vec::new(); nd];
    for _ in 0..bootstrap.resamples {
        let mut c = Cells::new(nd, ns);
        for k in &resample_clusters(&strata, &mut rng) {
            c.add(&samples[*k]);
        }
        if let Ok(ev) = evaluate(&c, spec) {
            gains.push(ev.gain);
            for p in ev.per_direction {
                dir_draws[p.0].push(p.3);
            }
        }
    }
    if gains.is_empty() {
        return Err(Error::TooFewSamples(samples.len()));
    }
    let ci = containing(percentile_interval(&mut gains, bootstrap.level), point.gain);
    let directions = point
        .per_direction
        .iter()
        .map(|&(d, e_base, e_steer, r, w)| {
            let row = &cells.stats[d * ns..(d + 1) * ns];
            let draws = &mut dir_draws[d];
            let ci = if draws.is_empty() {
                (r, r)
            } else {
                containing(percentile_interval(draws, bootstrap.level), r)
            };
            DirectionResult {
                dir_lo: spec.sector.0 + d as f64 * spec.direction_step,
                dir_hi: spec.sector.0 + (d + 1) as f64 * spec.direction_step,
                energy_ratio_base: e_base,
                energy_ratio_steer: e_steer,
                ratio: r,
                ci,
                counts_base: row.iter().map(|c| c[0].0).collect(),
                counts_steer: row.iter().map(|c| c[1].0).collect(),
                weight: w,
            }
        })
        .collect();
    Ok(EnergyAnalysis {
        sector: spec.sector,
        speed_range: spec.speed_range,
        gain: point.gain,
        ci,
        directions,
        dropped: point
            .dropped
            .iter()
            .map(|&d| spec.sector.0 + d as f64 * spec.direction_step)
            .collect(),
        samples_base: samples.iter().filter(|s| s.mode == Mode::Base).count(),
        samples_steer: samples.iter().filter(|s| s.mode == Mode::Steer).count(),
    })
}

/// Model counterpart of a measured sector gain. For every retained
/// direction bin, the predicted gain is the model test power at the
/// measured yaw over the model test power at zero yaw, summed over the
/// control minutes in retained speed bins and evaluated at the
/// reference-measured conditions. Bins are combined with the measured
/// analysis weights.
pub fn predicted_gain(
    minutes: &[Minute],
    layout: &FarmLayout,
    schedule: &ToggleSchedule,
    spec: &EnergySpec,
    analysis: &EnergyAnalysis,
    params: &WakeParams,
    shape: &ProfileShape,
    rotor: &impl RotorResponse,
) -> Result<f64> {
    let reference = layout
        .reference_index()
        .ok_or_else(|| invalid("analysis needs a reference turbine"))?;
    let test = layout.test_indices();
    let hub = layout.turbines()[reference].hub_height;
    let zero = vec![0.0; layout.len()];
    let mut sums = vec![(0.0, 0.0); analysis.directions.len()];
    for m in minutes {
        let c = &m.condition;
        if !usable(m, reference) || !schedule.is_control(m.timestamp) || !(c.turbulence_intensity < spec.ti_max) {
            continue;
        }
        let Some(d) = analysis
            .directions
            .iter()
            .position(|d| c.direction >= d.dir_lo && c.direction < d.dir_hi)
        else {
            continue;
        };
        let s = ((c.speed - spec.speed_range.0) / spec.speed_step).floor();
        let dr = &analysis.directions[d];
        if s < 0.0 || s >= dr.counts_base.len() as f64 {
            continue;
        }
        let s = s as usize;
        if dr.counts_base[s] <= spec.min_speed_samples || dr.counts_steer[s] <= spec.min_speed_samples {
            continue;
        }
        let profile = shape.profile(c.speed, c.direction, hub)?;
        let yawed = FarmSnapshot::new(layout, &profile, c.direction, &m.vane, rotor)?.solve(params);
        let aligned = FarmSnapshot::new(layout, &profile, c.direction, &zero, rotor)?.solve(params);
        sums[d].0 += test.iter().map(|&i| yawed.power[i]).sum::<f64>();
        sums[d].1 += test.iter().map(|&i| aligned.power[i]).sum::<f64>();
    }
    let mut gain = 0.0;
    for (dr, (num, den)) in analysis.directions.iter().zip(sums) {
        if !(den > 0.0) {
            return Err(Error::EmptyData(format!("no control minutes in direction bin {}", dr.dir_lo)));
        }
        gain += dr.weight * num / den;
    }
    Ok(gain)
}

/// Power fraction above which a turbine counts as rated; power ratios are
/// only insensitive to the inflow speed scale below rated.
const NEAR_RATED: f64 = 0.95;

/// Baseline-control minutes turned into calibration samples: powers over
/// the reference power, measured vane yaw, the farm-mean direction and a
/// synthesized profile.
pub fn calibration_dataset(
    minutes: &[Minute],
    layout: &FarmLayout,
    shape: &ProfileShape,
    speed_range: (f64, f64),
    ti_max: f64,
) -> Result<CalibrationDataset> {
    let reference = layout
        .reference_index()
        .ok_or_else(|| invalid("calibration needs a reference turbine"))?;
    let hub = layout.turbines()[reference].hub_height;
    let mut samples = Vec::new();
    for m in minutes {
        let c = &m.condition;
        if !usable(m, reference)
            || m.commanded.iter().any(|g| *g != 0.0)
            || c.speed < speed_range.0
            || c.speed >= speed_range.1
            || !(c.turbulence_intensity < ti_max)
            || m.power.iter().any(|p| !(*p > 0.0))
            || m
                .power
                .iter()
                .zip(layout.turbines())
                .any(|(p, t)| *p >= NEAR_RATED * t.rated_power)
            || m.vane.iter().any(|g| g.abs() > 30.0)
        {
            continue;
        }
        let condition = WindCondition {
            direction: m.farm_direction,
            ..*c
        };
        samples.push(CalibrationSample {
            condition,
            profile: shape.profile(c.speed, condition.direction, hub)?,
            yaw: m.vane.clone(),
            normalized_power: m
                .power
                .iter()
                .enumerate()
                .map(|(i, p)| if i == reference { None } else { Some(p / m.power[reference]) })
                .collect(),
        });
    }
    Ok(CalibrationDataset {
        layout: layout.clone(),
        samples,
    })
}

/// One cell of the sector-by-speed gain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTableEntry {
    pub sector: (f64, f64),
    pub speed_range: (f64, f64),
    pub gain: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub samples_base: usize,
    pub samples_steer: usize,
    pub directions_used: usize,
    pub error: Option<String>,
}

pub const REPORT_SECTORS: [(f64, f64); 2] = [(-20.0, 15.0), (-180.0, 180.0)];
pub const REPORT_SPEEDS: [(f64, f64); 2] = [(6.0, 8.0), (0.0, 20.0)];

/// Gain table over the standard sectors and speed ranges.
pub fn gain_table(
    minutes: &[Minute],
    layout: &FarmLayout,
    schedule: &ToggleSchedule,
    bootstrap: &BootstrapConfig,
) -> (Vec<GainTableEntry>, Vec<EnergyAnalysis>) {
    let mut entries = Vec::new();
    let mut analyses = Vec::new();
    for sector in REPORT_SECTORS {
        for speed in REPORT_SPEEDS {
            let spec = EnergySpec::new(sector, speed);
            match energy_analysis(minutes, layout, schedule, &spec, bootstrap) {
                Ok(a) => {
                    entries.push(GainTableEntry {
                        sector,
                        speed_range: speed,
                        gain: Some(a.gain),
                        ci: Some(a.ci),
                        samples_base: a.samples_base,
                        samples_steer: a.samples_steer,
                        directions_used: a.directions.len(),
                        error: None,
                    });
                    analyses.push(a);
                }
                Err(e) => entries.push(GainTableEntry {
                    sector,
                    speed_range: speed,
                    gain: None,
                    ci: None,
                    samples_base: 0,
                    samples_steer: 0,
                    directions_used: 0,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    (entries, analyses)
}

/// Per-direction rows of every analysis as CSV.
pub fn write_direction_csv<W: Write>(writer: W, analyses: &[EnergyAnalysis]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "sector_lo", "sector_hi", "u_lo", "u_hi", "dir_lo", "dir_hi", "energy_ratio_base", "energy_ratio_steer",
        "gain", "ci_lo", "ci_hi", "n_base", "n_steer", "weight",
    ])?;
    for a in analyses {
        for d in &a.directions {
            w.write_record(&[
                a.sector.0.to_string(),
                a.sector.1.to_string(),
                a.speed_range.0.to_string(),
                a.speed_range.1.to_string(),
                d.dir_lo.to_string(),
                d.dir_hi.to_string(),
                d.energy_ratio_base.to_string(),
                d.energy_ratio_steer.to_string(),
                d.ratio.to_string(),
                d.ci.0.to_string(),
                d.ci.1.to_string(),
                d.counts_base.iter().sum::<usize>().to_string(),
                d.counts_steer.iter().sum::<usize>().to_string(),
                d.weight.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
