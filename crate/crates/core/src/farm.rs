//! Farm geometry, inflow conditions and condition binning.
//!
//! Directions follow the meteorological convention: the angle the wind blows
//! *from*, 0 deg = north, positive clockwise, wrapped to (-180, 180]. All wake
//! math happens in a wind-aligned frame where `x` points downwind, `y` points
//! to the left when looking downwind and `z` is up.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap_deg(angle: f64) -> f64 {
    let a = (angle + 180.0).rem_euclid(360.0) - 180.0;
    if a == -180.0 {
        180.0
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbineSpec {
    pub id: u32,
    /// Site frame (east, north) in meters.
    pub position: [f64; 2],
    pub rotor_diameter: f64,
    pub hub_height: f64,
    pub rated_power: f64,
    pub region2_speed_range: (f64, f64),
}

impl TurbineSpec {
    pub fn new(
        id: u32,
        position: [f64; 2],
        rotor_diameter: f64,
        hub_height: f64,
        rated_power: f64,
    ) -> Result<Self> {
        let spec = TurbineSpec {
            id,
            position,
            rotor_diameter,
            hub_height,
            rated_power,
            region2_speed_range: (4.0, 12.0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rotor_diameter > 0.0) {
            return Err(invalid(format!("turbine {}: rotor diameter must be positive", self.id)));
        }
        if !(self.hub_height > self.rotor_diameter / 2.0) {
            return Err(invalid(format!(
                "turbine {}: hub height {} m does not clear the rotor radius",
                self.id, self.hub_height
            )));
        }
        if !(self.rated_power > 0.0) {
            return Err(invalid(format!("turbine {}: rated power must be positive", self.id)));
        }
        let (lo, hi) = self.region2_speed_range;
        if !(lo < hi) {
            return Err(invalid(format!("turbine {}: empty Region II speed range", self.id)));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.rotor_diameter
    }

    pub fn in_region2(&self, speed: f64) -> bool {
        speed >= self.region2_speed_range.0 && speed <= self.region2_speed_range.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmLayout {
    turbines: Vec<TurbineSpec>,
    reference_ids: Vec<u32>,
}

impl FarmLayout {
    pub fn new(turbines: Vec<TurbineSpec>, reference_ids: Vec<u32>) -> Result<Self> {
        if turbines.is_empty() {
            return Err(invalid("layout has no turbines"));
        }
        let mut seen = HashSet::new();
        for t in &turbines {
            t.validate()?;
            if !seen.insert(t.id) {
                return Err(invalid(format!("duplicate turbine id {}", t.id)));
            }
        }
        for (i, a) in turbines.iter().enumerate() {
            for b in &turbines[i + 1..] {
                let d = (a.position[0] - b.position[0]).hypot(a.position[1] - b.position[1]);
                let min_d = 0.1 * a.rotor_diameter.max(b.rotor_diameter);
                if d < min_d {
                    return Err(invalid(format!(
                        "turbines {} and {} are {:.2} m apart (minimum {:.2} m)",
                        a.id, b.id, d, min_d
                    )));
                }
            }
        }
        for id in &reference_ids {
            if !seen.contains(id) {
                return Err(invalid(format!("reference id {id} is not in the layout")));
            }
        }
        Ok(FarmLayout {
            turbines,
            reference_ids,
        })
    }

    /// Representative three-turbine row plus an unwaked reference turbine.
    ///
    /// Coordinates are approximate: the row is aligned for inflow from -5 deg
    /// and the reference sits well to the east. Rotor 120 m, hub 100 m, 2.2 MW.
    pub fn reference_site() -> Self {
        let d = REFERENCE_DIAMETER;
        let align = (-5.0f64).to_radians();
        // downwind unit vector for inflow from -5 deg
        let dx = -align.sin();
        let dy = -align.cos();
        let mk = |id: u32, e: f64, n: f64| TurbineSpec {
            id,
            position: [e, n],
            rotor_diameter: d,
            hub_height: REFERENCE_HUB_HEIGHT,
            rated_power: REFERENCE_RATED_POWER,
            region2_speed_range: (4.0, 12.0),
        };
        let s1 = REFERENCE_SPACING_D[0] * d;
        let s2 = (REFERENCE_SPACING_D[0] + REFERENCE_SPACING_D[1]) * d;
        let turbines = vec![
            mk(1, 0.0, 0.0),
            mk(2, s1 * dx, s1 * dy),
            mk(3, s2 * dx, s2 * dy),
            mk(4, 9.0 * d, -2.0 * d),
        ];
        FarmLayout::new(turbines, vec![4]).expect("reference layout is valid")
    }

    pub fn turbines(&self) -> &[TurbineSpec] {
        &self.turbines
    }

    pub fn len(&self) -> usize {
        self.turbines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbines.is_empty()
    }

    pub fn reference_ids(&self) -> &[u32] {
        &self.reference_ids
    }

    pub fn is_reference(&self, id: u32) -> bool {
        self.reference_ids.contains(&id)
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.turbines.iter().position(|t| t.id == id)
    }

    /// Indices of turbines that are not references.
    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.turbines.len())
            .filter(|&i| !self.is_reference(self.turbines[i].id))
            .collect()
    }

    /// Index of the first reference turbine, if any.
    pub fn reference_index(&self) -> Option<usize> {
        self.reference_ids.first().and_then(|&id| self.index_of(id))
    }

    /// Copy of the layout with every turbine removed except `keep`.
    pub fn subset(&self, keep: &[u32]) -> Result<Self> {
        let turbines: Vec<_> = self
            .turbines
            .iter()
            .filter(|t| keep.contains(&t.id))
            .cloned()
            .collect();
        let refs = self
            .reference_ids
            .iter()
            .copied()
            .filter(|id| keep.contains(id))
            .collect();
        FarmLayout::new(turbines, refs)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != LAYOUT_HEADER {
            return Err(Error::Ingest {
                line: 1,
                message: format!("expected header {}", LAYOUT_HEADER.join(",")),
            });
        }
        let mut turbines = Vec::new();
        let mut refs = Vec::new();
        for row in rdr.deserialize::<LayoutRow>() {
            let row = row.map_err(|e| ingest_error(&e))?;
            turbines.push(TurbineSpec {
                id: row.id,
                position: [row.x_m, row.y_m],
                rotor_diameter: row.rotor_diameter_m,
                hub_height: row.hub_height_m,
                rated_power: row.rated_power_w,
                region2_speed_range: (4.0, 12.0),
            });
            if row.is_reference != 0 {
                refs.push(row.id);
            }
        }
        FarmLayout::new(turbines, refs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for t in &self.turbines {
            w.serialize(LayoutRow {
                id: t.id,
                x_m: t.position[0],
                y_m: t.position[1],
                rotor_diameter_m: t.rotor_diameter,
                hub_height_m: t.hub_height,
                rated_power_w: t.rated_power,
                is_reference: u8::from(self.is_reference(t.id)),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const REFERENCE_DIAMETER: f64 = 120.0;
pub const REFERENCE_HUB_HEIGHT: f64 = 100.0;
pub const REFERENCE_RATED_POWER: f64 = 2.2e6;
/// Row spacing T1->T2 and T2->T3 in rotor diameters.
pub const REFERENCE_SPACING_D: [f64; 2] = [4.0, 4.0];

pub const LAYOUT_HEADER: [&str; 7] = [
    "id",
    "x_m",
    "y_m",
    "rotor_diameter_m",
    "hub_height_m",
    "rated_power_w",
    "is_reference",
];

#[derive(Debug, Serialize, Deserialize)]
struct LayoutRow {
    id: u32,
    x_m: f64,
    y_m: f64,
    rotor_diameter_m: f64,
    hub_height_m: f64,
    rated_power_w: f64,
    is_reference: u8,
}

pub(crate) fn ingest_error(e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Ingest {
        line,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindCondition {
    /// Hub-height speed, m/s.
    pub speed: f64,
    /// Degrees, meteorological convention.
    pub direction: f64,
    pub turbulence_intensity: f64,
}

impl WindCondition {
    pub fn new(speed: f64, direction: f64, turbulence_intensity: f64) -> Result<Self> {
        let c = WindCondition {
            speed,
            direction,
            turbulence_intensity,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed >= 0.0) {
            return Err(invalid(format!("wind speed {} is negative", self.speed)));
        }
        if !(-180.0..=180.0).contains(&self.direction) {
            return Err(invalid(format!("wind direction {} outside [-180, 180]", self.direction)));
        }
        if !(0.0..1.0).contains(&self.turbulence_intensity) {
            return Err(invalid(format!(
                "turbulence intensity {} outside [0, 1)",
                self.turbulence_intensity
            )));
        }
        Ok(())
    }
}

/// Height-resolved inflow: speed and direction per height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblProfile {
    heights: Vec<f64>,
    speeds: Vec<f64>,
    directions: Vec<f64>,
}

impl AblProfile {
    pub fn new(heights: Vec<f64>, speeds: Vec<f64>, directions: Vec<f64>) -> Result<Self> {
        if heights.len() < 2 || speeds.len() != heights.len() || directions.len() != heights.len() {
            return Err(invalid("profile needs at least two heights with matching speeds and directions"));
        }
        if heights.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("profile heights must be strictly ascending"));
        }
        if speeds.iter().any(|&s| !(s >= 0.0)) {
            return Err(invalid("profile speeds must be non-negative"));
        }
        Ok(AblProfile {
            heights,
            speeds,
            directions,
        })
    }

    pub fn uniform(speed: f64, direction: f64, heights: &[f64]) -> Result<Self> {
        Self::new(
            heights.to_vec(),
            vec![speed; heights.len()],
            vec![direction; heights.len()],
        )
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn span(&self) -> (f64, f64) {
        (self.heights[0], self.heights[self.heights.len() - 1])
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let (a, b) = self.span();
        a <= lo + 1e-9 && b >= hi - 1e-9
    }

    fn locate(&self, z: f64) -> (usize, f64) {
        let h = &self.heights;
        if z <= h[0] {
            return (0, 0.0);
        }
        if z >= h[h.len() - 1] {
            return (h.len() - 2, 1.0);
        }
        let i = h.partition_point(|&x| x <= z) - 1;
        (i, (z - h[i]) / (h[i + 1] - h[i]))
    }

    /// Linearly interpolated speed at height `z` (clamped to the ends).
    pub fn speed_at(&self, z: f64) -> f64 {
        let (i, t) = self.locate(z);
        self.speeds[i] + t * (self.speeds[i + 1] - self.speeds[i])
    }

    /// Linearly interpolated direction at height `z` (clamped to the ends).
    pub fn direction_at(&self, z: f64) -> f64 {
        let (i, t) = self.locate(z);
        let d0 = self.directions[i];
        d0 + t * wrap_deg(self.directions[i + 1] - d0)
    }

    /// Every speed multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> AblProfile {
        AblProfile {
            heights: self.heights.clone(),
            speeds: self.speeds.iter().map(|s| s * factor).collect(),
            directions: self.directions.clone(),
        }
    }

    /// Profile reflected about height `center` (top and bottom swapped).
    pub fn mirrored(&self, center: f64) -> Result<AblProfile> {
        let n = self.heights.len();
        let heights = (0..n).map(|i| 2.0 * center - self.heights[n - 1 - i]).collect();
        let speeds = (0..n).map(|i| self.speeds[n - 1 - i]).collect();
        let directions = (0..n).map(|i| self.directions[n - 1 - i]).collect();
        AblProfile::new(heights, speeds, directions)
    }
}

/// Power-law shear with linear veer, pinned to the hub values at `hub_height`.
///
/// The hub height is inserted into the height list when missing so that the
/// profile reproduces the hub values exactly.
pub fn shear_veer_profile(
    u_hub: f64,
    direction_hub: f64,
    shear_exponent: f64,
    veer_rate: f64,
    hub_height: f64,
    heights: &[f64],
) -> Result<AblProfile> {
    if !(u_hub >= 0.0) {
        return Err(invalid("hub speed must be non-negative"));
    }
    if !(hub_height > 0.0) || heights.iter().any(|&z| !(z > 0.0)) {
        return Err(invalid("profile heights must be positive"));
    }
    let mut zs: Vec<f64> = heights.to_vec();
    zs.push(hub_height);
    zs.sort_by(|a, b| a.total_cmp(b));
    zs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let speeds = zs
        .iter()
        .map(|&z| {
            if z == hub_height {
                u_hub
            } else {
                u_hub * (z / hub_height).powf(shear_exponent)
            }
        })
        .collect();
    let directions = zs
        .iter()
        .map(|&z| direction_hub + veer_rate * (z - hub_height))
        .collect();
    AblProfile::new(zs, speeds, directions)
}

/// Shape of a synthesized inflow profile, independent of the hub speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileShape {
    pub shear_exponent: f64,
    /// deg/m, positive = clockwise turning with height.
    pub veer_rate: f64,
    pub heights: Vec<f64>,
}

impl ProfileShape {
    pub fn uniform() -> Self {
        ProfileShape {
            shear_exponent: 0.0,
            veer_rate: 0.0,
            heights: default_profile_heights(),
        }
    }

    pub fn profile(&self, u_hub: f64, direction: f64, hub_height: f64) -> Result<AblProfile> {
        shear_veer_profile(
            u_hub,
            direction,
            self.shear_exponent,
            self.veer_rate,
            hub_height,
            &self.heights,
        )
    }
}

impl Default for ProfileShape {
    /// Moderately sheared, backing profile used by the synthetic site.
    fn default() -> Self {
        ProfileShape {
            shear_exponent: DEFAULT_SHEAR_EXPONENT,
            veer_rate: DEFAULT_VEER_RATE,
            heights: default_profile_heights(),
        }
    }
}

pub const DEFAULT_SHEAR_EXPONENT: f64 = 0.2;
pub const DEFAULT_VEER_RATE: f64 = -0.1;

pub fn default_profile_heights() -> Vec<f64> {
    (1..=25).map(|k| 10.0 * k as f64).collect()
}

/// Rotates the layout into the wind frame for inflow from `direction`.
///
/// Returns `(layout index, downwind x, crosswind y)` sorted upwind first.
pub fn to_wind_frame(layout: &FarmLayout, direction: f64) -> Vec<(usize, f64, f64)> {
    let mut out: Vec<_> = layout
        .turbines()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (x, y) = site_to_wind(t.position, direction);
            (i, x, y)
        })
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Site (east, north) to wind frame (downwind, crosswind-left).
pub fn site_to_wind(p: [f64; 2], direction: f64) -> (f64, f64) {
    let a = direction.to_radians();
    let (s, c) = a.sin_cos();
    // downwind = (-sin a, -cos a); crosswind-left = (cos a, -sin a)
    (-p[0] * s - p[1] * c, p[0] * c - p[1] * s)
}

/// Inverse of [`site_to_wind`].
pub fn wind_to_site(x: f64, y: f64, direction: f64) -> [f64; 2] {
    let a = direction.to_radians();
    let (s, c) = a.sin_cos();
    [-x * s + y * c, -x * c - y * s]
}

/// Which side of a bin is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Closed {
    /// `[lo, hi)`: an edge value belongs to the bin above it.
    Left,
    /// `(lo, hi]`: an edge value belongs to the bin below it.
    Right,
}

/// Uniform bins `start + k*step .. start + (k+1)*step`, `k < count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAxis {
    pub start: f64,
    pub step: f64,
    pub count: usize,
    pub closed: Closed,
    /// Treat the axis as periodic with period `step * count` (full circle).
    pub periodic: bool,
}

impl BinAxis {
    pub fn new(start: f64, step: f64, count: usize, closed: Closed) -> Result<Self> {
        if !(step > 0.0) || count == 0 {
            return Err(invalid("bin axis needs a positive step and at least one bin"));
        }
        Ok(BinAxis {
            start,
            step,
            count,
            closed,
            periodic: false,
        })
    }

    /// Bins of width `step` centered on `first_center + k*step`.
    pub fn centered(first_center: f64, step: f64, count: usize, closed: Closed) -> Result<Self> {
        Self::new(first_center - 0.5 * step, step, count, closed)
    }

    /// Full-circle direction axis with bins centered on multiples of `step`.
    pub fn full_circle(step: f64) -> Result<Self> {
        let count = (360.0 / step).round() as usize;
        if ((count as f64) * step - 360.0).abs() > 1e-9 {
            return Err(invalid("full-circle step must divide 360"));
        }
        let mut axis = Self::centered(-180.0, step, count, Closed::Right)?;
        axis.periodic = true;
        Ok(axis)
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * self.count as f64
    }

    pub fn lo(&self, k: usize) -> f64 {
        self.start + self.step * k as f64
    }

    pub fn hi(&self, k: usize) -> f64 {
        self.start + self.step * (k + 1) as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.start + self.step * (k as f64 + 0.5)
    }

    pub fn index(&self, value: f64) -> Option<usize> {
        if !value.is_finite() {
            return None;
        }
        let mut v = value;
        if self.periodic {
            let period = self.step * self.count as f64;
            v = self.start + (v - self.start).rem_euclid(period);
            if self.closed == Closed::Right && v == self.start {
                v += period;
            }
        }
        let u = (v - self.start) / self.step;
        let k = match self.closed {
            Closed::Left => u.floor(),
            Closed::Right => u.ceil() - 1.0,
        };
        if k < 0.0 || k >= self.count as f64 {
            None
        } else {
            Some(k as usize)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionBin {
    pub speed_bin: (f64, f64),
    pub direction_center: f64,
    pub direction_halfwidth: f64,
    pub ti_bin: (f64, f64),
}

impl ConditionBin {
    pub fn center(&self) -> WindCondition {
        WindCondition {
            speed: 0.5 * (self.speed_bin.0 + self.speed_bin.1),
            direction: wrap_deg(self.direction_center),
            turbulence_intensity: 0.5 * (self.ti_bin.0 + self.ti_bin.1),
        }
    }

    pub fn catch_all() -> Self {
        ConditionBin {
            speed_bin: (0.0, f64::INFINITY),
            direction_center: 0.0,
            direction_halfwidth: 180.0,
            ti_bin: (0.0, 1.0),
        }
    }
}

/// Grid position of a condition bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinKey {
    pub speed: usize,
    pub direction: usize,
    pub ti: usize,
}

/// Three-axis binning grid over (speed, direction, TI).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub speed: BinAxis,
    pub direction: BinAxis,
    pub ti: BinAxis,
    pub catch_all: bool,
}

impl BinGrid {
    /// 1 m/s speed bins on [0, 20), 2.5 deg direction bins around the full
    /// circle and 2.5 % TI bins on [0, 20) % plus one [20, 100) % bin.
    pub fn lookup_default() -> Self {
        BinGrid {
            speed: BinAxis::new(0.0, 1.0, 20, Closed::Left).unwrap(),
            direction: BinAxis::full_circle(2.5).unwrap(),
            ti: BinAxis::new(0.0, 0.025, 8, Closed::Left).unwrap(),
            catch_all: true,
        }
    }

    pub fn key_of(&self, c: &WindCondition) -> Result<BinKey> {
        let speed = self.speed.index(c.speed).ok_or(Error::OutOfGrid {
            what: "speed",
            value: c.speed,
        })?;
        let direction = self.direction.index(c.direction).ok_or(Error::OutOfGrid {
            what: "direction",
            value: c.direction,
        })?;
        let ti = self.ti.index(c.turbulence_intensity).ok_or(Error::OutOfGrid {
            what: "turbulence intensity",
            value: c.turbulence_intensity,
        })?;
        Ok(BinKey {
            speed,
            direction,
            ti,
        })
    }

    pub fn bin(&self, key: BinKey) -> ConditionBin {
        ConditionBin {
            speed_bin: (self.speed.lo(key.speed), self.speed.hi(key.speed)),
            direction_center: self.direction.center(key.direction),
            direction_halfwidth: 0.5 * self.direction.step,
            ti_bin: (self.ti.lo(key.ti), self.ti.hi(key.ti)),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = BinKey> + '_ {
        (0..self.speed.count).flat_map(move |s| {
            (0..self.direction.count)
                .flat_map(move |d| (0..self.ti.count).map(move |t| BinKey {
                    speed: s,
                    direction: d,
                    ti: t,
                }))
        })
    }

    pub fn len(&self) -> usize {
        self.speed.count * self.direction.count * self.ti.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bin containing `condition`; falls back to the catch-all bin when allowed.
pub fn bin_of(condition: &WindCondition, grid: &BinGrid) -> Result<ConditionBin> {
    condition.validate()?;
    match grid.key_of(condition) {
        Ok(key) => Ok(grid.bin(key)),
        Err(_) if grid.catch_all => Ok(ConditionBin::catch_all()),
        Err(e) => Err(e),
    }
}
