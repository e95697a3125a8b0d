//! Yaw set-point optimization and the condition-binned lookup table.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::farm::{ingest_error, to_wind_frame, AblProfile, BinAxis, BinGrid, BinKey, Closed, FarmLayout, ProfileShape, WindCondition};
use crate::rotor::{RotorOutput, RotorResponse};
use crate::wake::{FarmSnapshot, WakeParams};

pub const DEFAULT_YAW_BOUND: f64 = 25.0;

/// Direction window where wake steering is active, open at both ends.
pub const DEFAULT_ACTIVE_WINDOW: (f64, f64) = (-17.5, 12.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YawStrategy {
    pub yaw: Vec<f64>,
}

impl YawStrategy {
    pub fn zero(n: usize) -> Self {
        YawStrategy { yaw: vec![0.0; n] }
    }

    pub fn validate(&self, bound: f64) -> Result<()> {
        if self.yaw.iter().any(|g| !(g.abs() <= bound)) {
            return Err(invalid(format!("yaw strategy exceeds the {bound} deg bound")));
        }
        Ok(())
    }
}

/// Which turbines the optimizer may misalign. Reference turbines are never
/// free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeTurbines {
    /// Every non-reference turbine except the one furthest downwind.
    AllButDownwindMost,
    All,
    /// Turbines by id.
    Explicit(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub yaw_bound: f64,
    /// Central finite-difference step, deg.
    pub fd_step: f64,
    /// Starting angles tried for every free turbine.
    pub starts: Vec<f64>,
    /// Number of best starts refined by gradient ascent.
    pub refine_top: usize,
    pub max_iterations: usize,
    /// Stop once a full step moves less than this, deg.
    pub step_tolerance: f64,
    pub free: FreeTurbines,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            yaw_bound: DEFAULT_YAW_BOUND,
            fd_step: 0.5,
            starts: vec![0.0, -12.5, 12.5, -25.0, 25.0],
            refine_top: 5,
            max_iterations: 200,
            step_tolerance: 1e-3,
            free: FreeTurbines::AllButDownwindMost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub strategy: YawStrategy,
    pub powers: Vec<f64>,
    pub total_power: f64,
    pub baseline_power: f64,
}

/// Farm power for one inflow with rotor outputs memoized by yaw.
pub struct FarmObjective<'a, R: RotorResponse> {
    layout: &'a FarmLayout,
    profile: &'a AblProfile,
    direction: f64,
    params: &'a WakeParams,
    rotor: &'a R,
    cache: RefCell<HashMap<(usize, u64), RotorOutput>>,
    aligned_ct: Vec<f64>,
}

impl<'a, R: RotorResponse> FarmObjective<'a, R> {
    pub fn new(
        layout: &'a FarmLayout,
        profile: &'a AblProfile,
        direction: f64,
        params: &'a WakeParams,
        rotor: &'a R,
    ) -> Result<Self> {
        params.validate(layout.len())?;
        let mut cache = HashMap::new();
        let mut aligned_ct = Vec::with_capacity(layout.len());
        for (i, t) in layout.turbines().iter().enumerate() {
            let out = rotor.freestream(t, profile, 0.0)?;
            aligned_ct.push(out.thrust_coefficient);
            cache.insert((i, 0f64.to_bits()), out);
        }
        Ok(FarmObjective {
            layout,
            profile,
            direction,
            params,
            rotor,
            cache: RefCell::new(cache),
            aligned_ct,
        })
    }

    fn output(&self, i: usize, yaw: f64) -> Result<RotorOutput> {
        // +0.0 and -0.0 share an entry
        let key = (i, (yaw + 0.0).to_bits());
        if let Some(o) = self.cache.borrow().get(&key) {
            return Ok(*o);
        }
        let o = self.rotor.freestream(&self.layout.turbines()[i], self.profile, yaw)?;
        self.cache.borrow_mut().insert(key, o);
        Ok(o)
    }

    pub fn powers(&self, yaw: &[f64]) -> Result<Vec<f64>> {
        let outputs = yaw
            .iter()
            .enumerate()
            .map(|(i, &g)| self.output(i, g))
            .collect::<Result<Vec<_>>>()?;
        let snap = FarmSnapshot::with_outputs(self.layout, self.profile, self.direction, yaw, &outputs, &self.aligned_ct)?;
        Ok(snap.solve(self.params).power)
    }

    pub fn total(&self, yaw: &[f64]) -> Result<f64> {
        Ok(self.powers(yaw)?.iter().sum())
    }

    /// Central-difference gradient of total power with respect to the
    /// turbines in `free`, W/deg.
    pub fn gradient(&self, yaw: &[f64], free: &[usize], step: f64) -> Result<Vec<f64>> {
        let mut g = Vec::with_capacity(free.len());
        let mut y = yaw.to_vec();
        for &i in free {
            y[i] = yaw[i] + step;
            let up = self.total(&y)?;
            y[i] = yaw[i] - step;
            let down = self.total(&y)?;
            y[i] = yaw[i];
            g.push((up - down) / (2.0 * step));
        }
        Ok(g)
    }
}

/// Layout indices of the turbines the optimizer may move for inflow from
/// `direction`.
pub fn free_indices(layout: &FarmLayout, direction: f64, free: &FreeTurbines) -> Vec<usize> {
    let candidates: Vec<usize> = to_wind_frame(layout, direction)
        .into_iter()
        .map(|(i, _, _)| i)
        .filter(|&i| !layout.is_reference(layout.turbines()[i].id))
        .collect();
    let mut out: Vec<usize> = match free {
        FreeTurbines::All => candidates,
        FreeTurbines::AllButDownwindMost => {
            let n = candidates.len();
            candidates.into_iter().take(n.saturating_sub(1)).collect()
        }
        FreeTurbines::Explicit(ids) => candidates
            .into_iter()
            .filter(|&i| ids.contains(&layout.turbines()[i].id))
            .collect(),
    };
    out.sort_unstable();
    out
}

fn ascend<R: RotorResponse>(
    obj: &FarmObjective<R>,
    start: Vec<f64>,
    free: &[usize],
    config: &OptimizerConfig,
) -> Result<(Vec<f64>, f64)> {
    let b = config.yaw_bound;
    let mut x = start;
    let mut fx = obj.total(&x)?;
    let mut trust = 5.0;
    for _ in 0..config.max_iterations {
        let g = obj.gradient(&x, free, config.fd_step)?;
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax == 0.0 {
            break;
        }
        let mut t = trust;
        let mut moved = None;
        while t >= config.step_tolerance {
            let mut y = x.clone();
            for (k, &i) in free.iter().enumerate() {
                y[i] = (x[i] + t * g[k] / gmax).clamp(-b, b);
            }
            let shift = free.iter().map(|&i| (y[i] - x[i]).abs()).fold(0.0, f64::max);
            if shift < config.step_tolerance {
                break;
            }
            let fy = obj.total(&y)?;
            if fy > fx {
                moved = Some((y, fy, shift));
                break;
            }
            t *= 0.5;
        }
        match moved {
            Some((y, fy, shift)) => {
                x = y;
                fx = fy;
                trust = (2.0 * t).min(10.0);
                if shift < config.step_tolerance {
                    break;
                }
            }
            None => break,
        }
    }
    Ok((x, fx))
}

/// Yaw strategy maximizing total model power, never worse than zero yaw.
pub fn optimize_yaw<R: RotorResponse>(
    condition: &WindCondition,
    params: &WakeParams,
    layout: &FarmLayout,
    profile: &AblProfile,
    rotor: &R,
    config: &OptimizerConfig,
) -> Result<OptimizationResult> {
    condition.validate()?;
    let obj = FarmObjective::new(layout, profile, condition.direction, params, rotor)?;
    let n = layout.len();
    let zero = vec![0.0; n];
    let baseline = obj.powers(&zero)?;
    let baseline_total: f64 = baseline.iter().sum();
    let free = free_indices(layout, condition.direction, &config.free);
    let finish = |yaw: Vec<f64>, powers: Vec<f64>| {
        let total: f64 = powers.iter().sum();
        OptimizationResult {
            strategy: YawStrategy { yaw },
            powers,
            total_power: total,
            baseline_power: baseline_total,
        }
    };
    if free.is_empty() {
        return Ok(finish(zero, baseline));
    }

    // screen every combination of start angles, refine the best few
    let b = config.yaw_bound;
    let starts: Vec<f64> = config.starts.iter().map(|s| s.clamp(-b, b)).collect();
    let combos = starts.len().pow(free.len() as u32);
    let mut screened = Vec::with_capacity(combos);
    for c in 0..combos {
        let mut y = zero.clone();
        let mut rem = c;
        for &i in &free {
            y[i] = starts[rem % starts.len()];
            rem /= starts.len();
        }
        let f = obj.total(&y)?;
        screened.push((f, y));
    }
    screened.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = (baseline_total, zero.clone());
    for (_, start) in screened.into_iter().take(config.refine_top.max(1)) {
        let (x, fx) = ascend(&obj, start, &free, config)?;
        if fx > best.0 {
            best = (fx, x);
        }
    }
    if best.0 > baseline_total {
        let powers = obj.powers(&best.1)?;
        Ok(finish(best.1, powers))
    } else {
        Ok(finish(zero, baseline))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub calibration_id: String,
    pub model_version: String,
    pub active_window: (f64, f64),
    /// Bins whose optimization failed and were set to zero yaw.
    pub failed_bins: Vec<BinKey>,
}

/// Yaw set-points over a (speed, direction, TI) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub grid: BinGrid,
    pub turbine_ids: Vec<u32>,
    /// Per bin in `grid.keys()` order, per turbine in `turbine_ids` order.
    entries: Vec<Vec<f64>>,
    pub metadata: TableMetadata,
}

pub const LUT_HEADER: [&str; 8] = [
    "u_lo",
    "u_hi",
    "dir_center",
    "dir_halfwidth",
    "ti_lo",
    "ti_hi",
    "turbine_id",
    "yaw_deg",
];

fn key_index(grid: &BinGrid, key: BinKey) -> usize {
    (key.speed * grid.direction.count + key.direction) * grid.ti.count + key.ti
}

/// Whether a bin lies entirely inside the open direction window.
pub fn in_active_window(center: f64, halfwidth: f64, window: (f64, f64)) -> bool {
    center - halfwidth >= window.0 && center + halfwidth <= window.1
}

impl LookupTable {
    pub fn entry(&self, key: BinKey) -> &[f64] {
        &self.entries[key_index(&self.grid, key)]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LUT_HEADER)?;
        for key in self.grid.keys() {
            let bin = self.grid.bin(key);
            for (id, yaw) in self.turbine_ids.iter().zip(self.entry(key)) {
                w.write_record(&[
                    bin.speed_bin.0.to_string(),
                    bin.speed_bin.1.to_string(),
                    bin.direction_center.to_string(),
                    bin.direction_halfwidth.to_string(),
                    bin.ti_bin.0.to_string(),
                    bin.ti_bin.1.to_string(),
                    id.to_string(),
                    yaw.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`LookupTable::write_csv`]; the grid is
    /// inferred from the rows and must be complete.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            u_lo: f64,
            u_hi: f64,
            dir_center: f64,
            dir_halfwidth: f64,
            ti_lo: f64,
            ti_hi: f64,
            turbine_id: u32,
            yaw_deg: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let rows = rdr
            .deserialize::<Row>()
            .map(|r| r.map_err(|e| ingest_error(&e)))
            .collect::<Result<Vec<Row>>>()?;
        if rows.is_empty() {
            return Err(Error::EmptyData("lookup table".into()));
        }
        let uniq = |v: Vec<f64>| {
            let mut v = v;
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let axis = |lows: Vec<f64>, width: f64, what: &str| -> Result<BinAxis> {
            let lows = uniq(lows);
            let step = if lows.len() > 1 { lows[1] - lows[0] } else { width };
            if !(step > 0.0) || (step - width).abs() > 1e-9 {
                return Err(invalid(format!("{what} bins in the lookup table are not uniform")));
            }
            BinAxis::new(lows[0], step, lows.len(), Closed::Left)
        };
        let first = &rows[0];
        let speed = axis(rows.iter().map(|r| r.u_lo).collect(), first.u_hi - first.u_lo, "speed")?;
        let ti = axis(rows.iter().map(|r| r.ti_lo).collect(), first.ti_hi - first.ti_lo, "TI")?;
        let direction = BinAxis::full_circle(2.0 * first.dir_halfwidth)?;
        let mut ids: Vec<u32> = rows.iter().map(|r| r.turbine_id).collect();
        ids.sort_unstable();
        ids.dedup();
        let grid = BinGrid {
            speed,
            direction,
            ti,
            catch_all: true,
        };
        let mut entries = vec![vec![f64::NAN; ids.len()]; grid.len()];
        for (line, r) in rows.iter().enumerate() {
            let c = WindCondition {
                speed: 0.5 * (r.u_lo + r.u_hi),
                direction: r.dir_center,
                turbulence_intensity: 0.5 * (r.ti_lo + r.ti_hi),
            };
            let key = grid.key_of(&c).map_err(|e| Error::Ingest {
                line: line as u64 + 2,
                message: e.to_string(),
            })?;
            let t = ids.binary_search(&r.turbine_id).expect("collected above");
            entries[key_index(&grid, key)][t] = r.yaw_deg;
        }
        if entries.iter().flatten().any(|v| v.is_nan()) {
            return Err(invalid("lookup table does not cover every bin of its grid"));
        }
        Ok(LookupTable {
            grid,
            turbine_ids: ids,
            entries,
            metadata: TableMetadata {
                calibration_id: String::new(),
                model_version: String::new(),
                active_window: DEFAULT_ACTIVE_WINDOW,
                failed_bins: Vec::new(),
            },
        })
    }
}

/// Yaw strategy for `condition`, in the table's turbine order; zero when the
/// condition falls outside the grid.
pub fn lookup(table: &LookupTable, condition: &WindCondition) -> YawStrategy {
    match table.grid.key_of(condition) {
        Ok(key) => YawStrategy {
            yaw: table.entry(key).to_vec(),
        },
        Err(_) => YawStrategy::zero(table.turbine_ids.len()),
    }
}

/// Inputs for tabulating optimal yaw over a grid. Bins sharing the same
/// wake parameters and bin-center speed and direction reuse one
/// optimization.
pub struct TableSpec<'a> {
    pub grid: &'a BinGrid,
    pub layout: &'a FarmLayout,
    pub shape: &'a ProfileShape,
    pub active_window: (f64, f64),
    pub config: &'a OptimizerConfig,
    pub calibration_id: String,
}

pub fn build_lookup_table<R: RotorResponse>(
    spec: &TableSpec,
    params_for: impl Fn(&BinKey) -> WakeParams,
    rotor: &R,
) -> Result<LookupTable> {
    let layout = spec.layout;
    let n = layout.len();
    let hub = layout
        .turbines()
        .first()
        .map(|t| t.hub_height)
        .ok_or_else(|| invalid("layout has no turbines"))?;
    let mut entries = Vec::with_capacity(spec.grid.len());
    let mut failed = Vec::new();
    let mut memo: Vec<(WakeParams, usize, usize, Vec<f64>)> = Vec::new();
    for key in spec.grid.keys() {
        let bin = spec.grid.bin(key);
        let c = bin.center();
        let region2 = layout.turbines().iter().all(|t| {
            let (lo, hi) = t.region2_speed_range;
            bin.speed_bin.0 >= lo && bin.speed_bin.1 <= hi
        });
        if !region2 || !in_active_window(bin.direction_center, bin.direction_halfwidth, spec.active_window) {
            entries.push(vec![0.0; n]);
            continue;
        }
        let params = params_for(&key);
        if let Some(m) = memo
            .iter()
            .find(|m| m.1 == key.speed && m.2 == key.direction && m.0 == params)
        {
            entries.push(m.3.clone());
            continue;
        }
        let result = spec
            .shape
            .profile(c.speed, c.direction, hub)
            .and_then(|profile| optimize_yaw(&c, &params, layout, &profile, rotor, spec.config));
        let yaw = match result {
            Ok(r) => r.strategy.yaw,
            Err(_) => {
                failed.push(key);
                vec![0.0; n]
            }
        };
        memo.push((params, key.speed, key.direction, yaw.clone()));
        entries.push(yaw);
    }
    Ok(LookupTable {
        grid: spec.grid.clone(),
        turbine_ids: layout.turbines().iter().map(|t| t.id).collect(),
        entries,
        metadata: TableMetadata {
            calibration_id: spec.calibration_id.clone(),
            model_version: env!("CARGO_PKG_VERSION").to_string(),
            active_window: spec.active_window,
            failed_bins: failed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farm::{default_profile_heights, TurbineSpec};
    use crate::rotor::{PowerYawModelChoice, RotorModel, TabulatedRotor};

    fn cosine(t: &TurbineSpec) -> RotorModel {
        RotorModel::generic_for(t)
            .with_choice(PowerYawModelChoice::CosineExponent { exponent: 2.0 })
            .unwrap()
    }

    #[test]
    fn isolated_turbine_stays_aligned() {
        let t = TurbineSpec::new(1, [0.0, 0.0], 120.0, 100.0, 2.2e6).unwrap();
        let layout = FarmLayout::new(vec![t.clone()], vec![]).unwrap();
        let profile = AblProfile::uniform(8.0, 0.0, &default_profile_heights()).unwrap();
        let cfg = OptimizerConfig {
            free: FreeTurbines::All,
            ..Default::default()
        };
        let c = WindCondition::new(8.0, 0.0, 0.06).unwrap();
        let r = optimize_yaw(&c, &WakeParams::uniform(1, 0.05), &layout, &profile, &RotorModel::generic_for(&t), &cfg).unwrap();
        assert!(r.strategy.yaw[0].abs() <= 0.5);
        assert!(r.total_power >= r.baseline_power);
    }

    #[test]
    fn reference_row_steers_upwind_turbines() {
        let layout = FarmLayout::reference_site();
        let t = layout.turbines()[0].clone();
        let shape = ProfileShape::default();
        let rotor = TabulatedRotor::build(&RotorModel::generic_for(&t), layout.turbines(), &shape, 40.0, 0.25).unwrap();
        let c = WindCondition::new(7.0, 0.0, 0.05).unwrap();
        let profile = shape.profile(7.0, 0.0, 100.0).unwrap();
        let r = optimize_yaw(&c, &WakeParams::uniform(4, 0.03), &layout, &profile, &rotor, &OptimizerConfig::default()).unwrap();
        assert!(r.strategy.yaw[0] > 0.0);
        assert_eq!(r.strategy.yaw[2], 0.0);
        assert_eq!(r.strategy.yaw[3], 0.0);
        assert!(r.total_power > r.baseline_power);
    }

    #[test]
    fn mirrored_layout_negates_strategy() {
        let mk = |sign: f64| {
            let ts = vec![
                TurbineSpec::new(1, [0.0, 0.0], 120.0, 100.0, 2.2e6).unwrap(),
                TurbineSpec::new(2, [sign * 40.0, -600.0], 120.0, 100.0, 2.2e6).unwrap(),
            ];
            FarmLayout::new(ts, vec![]).unwrap()
        };
        let profile = AblProfile::uniform(8.0, 0.0, &default_profile_heights()).unwrap();
        let c = WindCondition::new(8.0, 0.0, 0.06).unwrap();
        let a = mk(1.0);
        let rotor = cosine(&a.turbines()[0]);
        let p = WakeParams::uniform(2, 0.04);
        let cfg = OptimizerConfig::default();
        let ra = optimize_yaw(&c, &p, &a, &profile, &rotor, &cfg).unwrap();
        let rb = optimize_yaw(&c, &p, &mk(-1.0), &profile, &rotor, &cfg).unwrap();
        assert!(ra.strategy.yaw[0].abs() > 5.0);
        assert!((ra.strategy.yaw[0] + rb.strategy.yaw[0]).abs() < 1.0);
    }

    #[test]
    fn two_turbine_matches_grid_search() {
        let ts = vec![
            TurbineSpec::new(1, [0.0, 0.0], 120.0, 100.0, 2.2e6).unwrap(),
            TurbineSpec::new(2, [30.0, -700.0], 120.0, 100.0, 2.2e6).unwrap(),
        ];
        let layout = FarmLayout::new(ts, vec![]).unwrap();
        let shape = ProfileShape::default();
        let rotor = TabulatedRotor::build(&RotorModel::generic_for(&layout.turbines()[0]), layout.turbines(), &shape, 40.0, 0.25).unwrap();
        let profile = shape.profile(7.0, 0.0, 100.0).unwrap();
        let p = WakeParams::uniform(2, 0.04);
        let c = WindCondition::new(7.0, 0.0, 0.06).unwrap();
        let r = optimize_yaw(&c, &p, &layout, &profile, &rotor, &OptimizerConfig::default()).unwrap();
        let obj = FarmObjective::new(&layout, &profile, 0.0, &p, &rotor).unwrap();
        let (mut gbest, mut pbest) = (0.0, f64::MIN);
        for g in -25..=25 {
            let v = obj.total(&[g as f64, 0.0]).unwrap();
            if v > pbest {
                pbest = v;
                gbest = g as f64;
            }
        }
        assert!((r.strategy.yaw[0] - gbest).abs() <= 2.0);
        assert!((pbest - r.total_power) / pbest <= 2e-3);
    }

    fn small_table() -> LookupTable {
        let layout = FarmLayout::reference_site();
        let t = layout.turbines()[0].clone();
        let grid = BinGrid {
            speed: BinAxis::new(6.0, 1.0, 2, Closed::Left).unwrap(),
            direction: BinAxis::full_circle(30.0).unwrap(),
            ti: BinAxis::new(0.0, 0.1, 2, Closed::Left).unwrap(),
            catch_all: true,
        };
        let shape = ProfileShape::default();
        let rotor = TabulatedRotor::build(&RotorModel::generic_for(&t), layout.turbines(), &shape, 40.0, 0.5).unwrap();
        let spec = TableSpec {
            grid: &grid,
            layout: &layout,
            shape: &shape,
            active_window: (-20.0, 20.0),
            config: &OptimizerConfig::default(),
            calibration_id: "test".into(),
        };
        build_lookup_table(&spec, |_| WakeParams::uniform(4, 0.03), &rotor).unwrap()
    }

    #[test]
    fn table_window_and_round_trip() {
        let table = small_table();
        // 90 deg is outside the window
        let s = lookup(&table, &WindCondition::new(6.5, 90.0, 0.05).unwrap());
        assert!(s.yaw.iter().all(|g| *g == 0.0));
        // 180 deg as well, and out-of-grid speeds
        assert!(lookup(&table, &WindCondition::new(6.5, 180.0, 0.05).unwrap()).yaw.iter().all(|g| *g == 0.0));
        assert!(lookup(&table, &WindCondition::new(15.0, 0.0, 0.05).unwrap()).yaw.iter().all(|g| *g == 0.0));
        let s0 = lookup(&table, &WindCondition::new(6.5, 0.0, 0.05).unwrap());
        assert!(s0.yaw[0] > 0.0);
        // TI bins share the optimization
        assert_eq!(s0, lookup(&table, &WindCondition::new(6.5, 0.0, 0.15).unwrap()));

        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("u_lo,u_hi,dir_center,dir_halfwidth,ti_lo,ti_hi,turbine_id,yaw_deg"));
        let back = LookupTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back.grid, table.grid);
        for key in table.grid.keys() {
            assert_eq!(back.entry(key), table.entry(key));
        }
    }

    #[test]
    fn incomplete_table_rejected() {
        let table = small_table();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: Vec<&str> = text.lines().take(10).collect();
        assert!(LookupTable::read_csv(truncated.join("\n").as_bytes()).is_err());
    }
}
