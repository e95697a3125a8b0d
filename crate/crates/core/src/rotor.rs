//! Power and thrust of a turbine in freestream inflow under yaw misalignment.
//!
//! The blade-element model resolves the inflow profile at every radial and
//! azimuthal station, so shear and veer make the power response asymmetric
//! in yaw. The empirical `cos^Pp` model is kept as a comparison baseline.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::farm::{ingest_error, wrap_deg, AblProfile, ProfileShape, TurbineSpec};

/// Lift and drag coefficients tabulated against angle of attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polar {
    aoa_deg: Vec<f64>,
    cl: Vec<f64>,
    cd: Vec<f64>,
}

impl Polar {
    pub fn new(aoa_deg: Vec<f64>, cl: Vec<f64>, cd: Vec<f64>) -> Result<Self> {
        if aoa_deg.len() < 2 || cl.len() != aoa_deg.len() || cd.len() != aoa_deg.len() {
            return Err(invalid("polar needs at least two rows with cl and cd"));
        }
        if aoa_deg.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("polar angles of attack must be strictly ascending"));
        }
        Ok(Polar { aoa_deg, cl, cd })
    }

    /// Generic thick-airfoil polar: attached flow up to about 12 deg, blended
    /// into flat-plate behaviour past stall.
    pub fn generic() -> Self {
        let aoa: Vec<f64> = (-60..=90).map(|a| a as f64).collect();
        let (cl, cd): (Vec<f64>, Vec<f64>) = aoa
            .iter()
            .map(|&a| {
                let ar = a.to_radians();
                let cl_att = 6.0 * (ar + 2f64.to_radians()).sin();
                let cd_att = 0.008 + 0.012 * (a / 10.0).powi(2);
                let cl_fp = 1.1 * (2.0 * ar).sin();
                let cd_fp = 0.02 + 1.3 * ar.sin().powi(2);
                // attached weight falls off past +13 deg and below -10 deg
                let f = 1.0 / (1.0 + ((a - 13.0) / 1.5).exp()) / (1.0 + ((-10.0 - a) / 1.5).exp());
                (f * cl_att + (1.0 - f) * cl_fp, f * cd_att + (1.0 - f) * cd_fp)
            })
            .unzip();
        Polar::new(aoa, cl, cd).unwrap()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.aoa_deg[0], self.aoa_deg[self.aoa_deg.len() - 1])
    }

    /// Linear interpolation; returns `(cl, cd, clamped)`.
    pub fn lookup(&self, aoa_deg: f64) -> (f64, f64, bool) {
        let a = &self.aoa_deg;
        let n = a.len();
        if aoa_deg <= a[0] {
            return (self.cl[0], self.cd[0], aoa_deg < a[0]);
        }
        if aoa_deg >= a[n - 1] {
            return (self.cl[n - 1], self.cd[n - 1], aoa_deg > a[n - 1]);
        }
        let i = a.partition_point(|&x| x <= aoa_deg) - 1;
        let t = (aoa_deg - a[i]) / (a[i + 1] - a[i]);
        (
            self.cl[i] + t * (self.cl[i + 1] - self.cl[i]),
            self.cd[i] + t * (self.cd[i + 1] - self.cd[i]),
            false,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BladeSection {
    pub r: f64,
    pub chord: f64,
    pub twist_deg: f64,
    pub polar: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BladeGeometry {
    sections: Vec<BladeSection>,
    polars: Vec<Polar>,
    blade_count: usize,
    hub_radius: f64,
    tip_radius: f64,
}

impl BladeGeometry {
    pub fn new(
        sections: Vec<BladeSection>,
        polars: Vec<Polar>,
        blade_count: usize,
        hub_radius: f64,
    ) -> Result<Self> {
        if blade_count == 0 {
            return Err(invalid("blade count must be at least one"));
        }
        if sections.len() < 2 {
            return Err(invalid("blade needs at least two sections"));
        }
        if !(hub_radius >= 0.0) || sections[0].r <= hub_radius {
            return Err(invalid("blade sections must lie outside the hub radius"));
        }
        if sections.windows(2).any(|w| !(w[1].r > w[0].r)) {
            return Err(invalid("blade section radii must be strictly ascending"));
        }
        if sections.iter().any(|s| s.polar >= polars.len() || !(s.chord > 0.0)) {
            return Err(invalid("blade section has an unknown polar or non-positive chord"));
        }
        let tip_radius = sections[sections.len() - 1].r;
        Ok(BladeGeometry {
            sections,
            polars,
            blade_count,
            hub_radius,
            tip_radius,
        })
    }

    /// Three-bladed rotor of the given radius, designed for tip-speed ratio 8
    /// at a 6 deg angle of attack with the generic polar.
    pub fn generic(tip_radius: f64) -> Self {
        let polar = Polar::generic();
        let design_aoa = 6.0;
        let (cl_design, _, _) = polar.lookup(design_aoa);
        let tsr = DEFAULT_TIP_SPEED_RATIO;
        let blades = 3usize;
        let hub = 0.05 * tip_radius;
        let n = 18;
        let sections = (0..n)
            .map(|k| {
                let r = hub + (tip_radius - hub) * (k as f64 + 1.0) / n as f64;
                let local_tsr = tsr * r / tip_radius;
                let phi = (2.0 / 3.0) * (1.0 / local_tsr).atan();
                let chord = (8.0 * PI * r * (1.0 - phi.cos()) / (blades as f64 * cl_design))
                    .min(0.075 * tip_radius);
                BladeSection {
                    r,
                    chord,
                    twist_deg: phi.to_degrees() - design_aoa,
                    polar: 0,
                }
            })
            .collect();
        BladeGeometry::new(sections, vec![polar], blades, hub).unwrap()
    }

    pub fn sections(&self) -> &[BladeSection] {
        &self.sections
    }

    pub fn polars(&self) -> &[Polar] {
        &self.polars
    }

    pub fn blade_count(&self) -> usize {
        self.blade_count
    }

    pub fn hub_radius(&self) -> f64 {
        self.hub_radius
    }

    pub fn tip_radius(&self) -> f64 {
        self.tip_radius
    }

    /// Chord, twist and polar index at radius `r`.
    fn section_at(&self, r: f64) -> (f64, f64, usize) {
        let s = &self.sections;
        if r <= s[0].r {
            return (s[0].chord, s[0].twist_deg, s[0].polar);
        }
        if r >= s[s.len() - 1].r {
            let last = s[s.len() - 1];
            return (last.chord, last.twist_deg, last.polar);
        }
        let i = s.partition_point(|x| x.r <= r) - 1;
        let t = (r - s[i].r) / (s[i + 1].r - s[i].r);
        let polar = if t < 0.5 { s[i].polar } else { s[i + 1].polar };
        (
            s[i].chord + t * (s[i + 1].chord - s[i].chord),
            s[i].twist_deg + t * (s[i + 1].twist_deg - s[i].twist_deg),
            polar,
        )
    }

    /// Reads `r_m,chord_m,twist_deg,polar_id` sections; polar `k` is read from
    /// `polar_<k>.csv` (`aoa_deg,cl,cd`) next to the sections file.
    pub fn load(sections_path: &Path, blade_count: usize, hub_radius: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct SectionRow {
            r_m: f64,
            chord_m: f64,
            twist_deg: f64,
            polar_id: usize,
        }
        #[derive(Deserialize)]
        struct PolarRow {
            aoa_deg: f64,
            cl: f64,
            cd: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(sections_path)?;
        let mut sections = Vec::new();
        for row in rdr.deserialize::<SectionRow>() {
            let row = row.map_err(|e| ingest_error(&e))?;
            sections.push(BladeSection {
                r: row.r_m,
                chord: row.chord_m,
                twist_deg: row.twist_deg,
                polar: row.polar_id,
            });
        }
        let n_polars = sections.iter().map(|s| s.polar + 1).max().unwrap_or(0);
        let dir = sections_path.parent().unwrap_or(Path::new("."));
        let mut polars = Vec::with_capacity(n_polars);
        for k in 0..n_polars {
            let mut rdr = csv::ReaderBuilder::new()
                .comment(Some(b'#'))
                .trim(csv::Trim::All)
                .from_path(dir.join(format!("polar_{k}.csv")))?;
            let (mut a, mut l, mut d) = (Vec::new(), Vec::new(), Vec::new());
            for row in rdr.deserialize::<PolarRow>() {
                let row = row.map_err(|e| ingest_error(&e))?;
                a.push(row.aoa_deg);
                l.push(row.cl);
                d.push(row.cd);
            }
            polars.push(Polar::new(a, l, d)?);
        }
        BladeGeometry::new(sections, polars, blade_count, hub_radius)
    }

    pub fn save(&self, sections_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(sections_path)?;
        w.write_record(["r_m", "chord_m", "twist_deg", "polar_id"])?;
        for s in &self.sections {
            w.write_record(&[
                s.r.to_string(),
                s.chord.to_string(),
                s.twist_deg.to_string(),
                s.polar.to_string(),
            ])?;
        }
        w.flush()?;
        let dir = sections_path.parent().unwrap_or(Path::new("."));
        for (k, p) in self.polars.iter().enumerate() {
            let mut w = csv::Writer::from_path(dir.join(format!("polar_{k}.csv")))?;
            w.write_record(["aoa_deg", "cl", "cd"])?;
            for i in 0..p.aoa_deg.len() {
                w.write_record(&[p.aoa_deg[i].to_string(), p.cl[i].to_string(), p.cd[i].to_string()])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

pub const DEFAULT_TIP_SPEED_RATIO: f64 = 8.0;
pub const AIR_DENSITY: f64 = 1.225;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorState {
    /// rad/s
    pub angular_velocity: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

impl RotorState {
    pub fn validate(&self) -> Result<()> {
        if !(self.angular_velocity >= 0.0) {
            return Err(invalid("angular velocity must be non-negative"));
        }
        if !(self.yaw_deg.abs() <= 90.0) {
            return Err(invalid(format!("yaw {} deg exceeds 90 deg", self.yaw_deg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolarPolicy {
    /// Clamp to the table ends and count the event.
    Clamp,
    /// Fail on the first out-of-table angle of attack.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BladeElementConfig {
    /// Uniform axial induction factor.
    pub induction: f64,
    pub air_density: f64,
    pub radial_stations: usize,
    pub azimuthal_stations: usize,
    pub polar_policy: PolarPolicy,
}

impl Default for BladeElementConfig {
    fn default() -> Self {
        BladeElementConfig {
            induction: 1.0 / 3.0,
            air_density: AIR_DENSITY,
            radial_stations: 20,
            azimuthal_stations: 36,
            polar_policy: PolarPolicy::Clamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BladeElementOutput {
    pub power: f64,
    pub thrust: f64,
    pub thrust_coefficient: f64,
    /// Rotor-averaged speed normal to the rotor plane (before induction).
    pub normal_speed: f64,
    pub clamped_lookups: usize,
}

struct Station {
    r: f64,
    dr: f64,
    chord: f64,
    twist: f64,
    polar: usize,
}

fn stations(geometry: &BladeGeometry, n: usize) -> Vec<Station> {
    let (hub, tip) = (geometry.hub_radius, geometry.tip_radius);
    let dr = (tip - hub) / n as f64;
    (0..n)
        .map(|k| {
            let r = hub + (k as f64 + 0.5) * dr;
            let (chord, twist, polar) = geometry.section_at(r);
            Station {
                r,
                dr,
                chord,
                twist,
                polar,
            }
        })
        .collect()
}

/// Rotor-averaged normal inflow for yaw `yaw_deg`, on the quadrature used by
/// [`power_blade_element`]. Used by the speed controller.
pub fn rotor_normal_speed(
    profile: &AblProfile,
    hub_height: f64,
    geometry: &BladeGeometry,
    yaw_deg: f64,
    config: &BladeElementConfig,
) -> f64 {
    let st = stations(geometry, config.radial_stations);
    let nt = config.azimuthal_stations;
    let hub_dir = profile.direction_at(hub_height);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..nt {
        let theta = (k as f64 + 0.5) * 2.0 * PI / nt as f64;
        let c = theta.cos();
        for s in &st {
            let z = hub_height + s.r * c;
            let eff = (yaw_deg + wrap_deg(profile.direction_at(z) - hub_dir)).to_radians();
            let w = s.r * s.dr;
            num += w * profile.speed_at(z) * eff.cos();
            den += w;
        }
    }
    num / den
}

/// Blade-element power `Omega * sum(r dF_t)` and thrust over the rotor disk.
///
/// Azimuth is measured from the upward blade position in the direction of
/// rotation (clockwise seen from upwind). Positive yaw turns the rotor normal
/// toward the wind-frame `+y` side.
pub fn power_blade_element(
    profile: &AblProfile,
    hub_height: f64,
    geometry: &BladeGeometry,
    state: &RotorState,
    config: &BladeElementConfig,
) -> Result<BladeElementOutput> {
    state.validate()?;
    let tip = geometry.tip_radius;
    if !profile.covers(hub_height - tip, hub_height + tip) {
        let (lo, hi) = profile.span();
        return Err(Error::ProfileCoverage {
            lo,
            hi,
            need_lo: hub_height - tip,
            need_hi: hub_height + tip,
        });
    }
    let st = stations(geometry, config.radial_stations);
    let nt = config.azimuthal_stations;
    let hub_dir = profile.direction_at(hub_height);
    let omega = state.angular_velocity;
    let rho = config.air_density;
    let a = config.induction;
    let b = geometry.blade_count as f64;

    let mut torque = 0.0;
    let mut thrust = 0.0;
    let mut normal_num = 0.0;
    let mut speed_num = 0.0;
    let mut area_den = 0.0;
    let mut clamped = 0usize;
    for k in 0..nt {
        let theta = (k as f64 + 0.5) * 2.0 * PI / nt as f64;
        let ct = theta.cos();
        for s in &st {
            let z = hub_height + s.r * ct;
            let u = profile.speed_at(z);
            let eff = (state.yaw_deg + wrap_deg(profile.direction_at(z) - hub_dir)).to_radians();
            let (se, ce) = eff.sin_cos();
            let v_axial = u * ce * (1.0 - a);
            let v_tan = omega * s.r - u * se * ct;
            let w2 = v_axial * v_axial + v_tan * v_tan;
            let phi = v_axial.atan2(v_tan);
            let aoa = phi.to_degrees() - s.twist - state.pitch_deg;
            let polar = &geometry.polars[s.polar];
            let (cl, cd, was_clamped) = polar.lookup(aoa);
            if was_clamped {
                if config.polar_policy == PolarPolicy::Error {
                    let (lo, hi) = polar.range();
                    return Err(Error::PolarExtrapolation {
                        polar: s.polar,
                        aoa_deg: aoa,
                        lo,
                        hi,
                    });
                }
                clamped += 1;
            }
            let q = 0.5 * rho * w2 * s.chord * s.dr;
            let (sp, cp) = phi.sin_cos();
            torque += s.r * q * (cl * sp - cd * cp);
            thrust += q * (cl * cp + cd * sp);
            let wa = s.r * s.dr;
            normal_num += wa * u * ce;
            speed_num += wa * u;
            area_den += wa;
        }
    }
    // each azimuth sample stands for 1/nt of a revolution of every blade
    let torque = b * torque / nt as f64;
    let thrust = b * thrust / nt as f64;
    let u_ref = speed_num / area_den;
    let area = PI * tip * tip;
    let ct = if u_ref > 0.0 {
        thrust / (0.5 * rho * area * u_ref * u_ref)
    } else {
        0.0
    };
    Ok(BladeElementOutput {
        power: omega * torque,
        thrust,
        thrust_coefficient: ct,
        normal_speed: normal_num / area_den,
        clamped_lookups: clamped,
    })
}

/// Empirical yaw power model `P(gamma) = P(0) cos^Pp(gamma)`.
pub fn power_cosine(p_aligned: f64, yaw_deg: f64, exponent: f64) -> f64 {
    p_aligned * yaw_deg.to_radians().cos().max(0.0).powf(exponent)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PowerYawModelChoice {
    BladeElement,
    CosineExponent { exponent: f64 },
}

/// Freestream output of one turbine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorOutput {
    /// Electrical power after the rated-power cap, W.
    pub power: f64,
    /// Aerodynamic power before the cap, W.
    pub aero_power: f64,
    /// Thrust coefficient at this yaw.
    pub thrust_coefficient: f64,
    pub clamped_lookups: usize,
}

/// Anything that can predict a turbine's freestream power and thrust.
///
/// Implementations must scale aerodynamic power with the cube of a uniform
/// scaling of the inflow profile and keep the thrust coefficient unchanged;
/// the wake solver relies on that to rescale waked turbines.
pub trait RotorResponse {
    fn freestream(&self, turbine: &TurbineSpec, profile: &AblProfile, yaw_deg: f64) -> Result<RotorOutput>;
}

/// Blade-element (or cosine) rotor with a tip-speed-ratio tracking controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotorModel {
    pub geometry: BladeGeometry,
    pub choice: PowerYawModelChoice,
    pub config: BladeElementConfig,
    pub tip_speed_ratio: f64,
}

impl RotorModel {
    pub fn new(geometry: BladeGeometry) -> Self {
        RotorModel {
            geometry,
            choice: PowerYawModelChoice::BladeElement,
            config: BladeElementConfig::default(),
            tip_speed_ratio: DEFAULT_TIP_SPEED_RATIO,
        }
    }

    /// Generic rotor sized for `turbine`.
    pub fn generic_for(turbine: &TurbineSpec) -> Self {
        Self::new(BladeGeometry::generic(turbine.radius()))
    }

    pub fn with_choice(mut self, choice: PowerYawModelChoice) -> Result<Self> {
        if let PowerYawModelChoice::CosineExponent { exponent } = choice {
            if !(exponent > 0.0) {
                return Err(invalid("cosine exponent must be positive"));
            }
        }
        self.choice = choice;
        Ok(self)
    }

    /// Blade-element evaluation with the controller picking `Omega` so the
    /// tip-speed ratio against the rotor-normal inflow is held constant.
    pub fn blade_element(&self, turbine: &TurbineSpec, profile: &AblProfile, yaw_deg: f64) -> Result<BladeElementOutput> {
        let un = rotor_normal_speed(profile, turbine.hub_height, &self.geometry, yaw_deg, &self.config);
        let state = RotorState {
            angular_velocity: self.tip_speed_ratio * un.max(0.0) / self.geometry.tip_radius,
            pitch_deg: 0.0,
            yaw_deg,
        };
        power_blade_element(profile, turbine.hub_height, &self.geometry, &state, &self.config)
    }

    /// `P(gamma)/P(0)` on `yaw_grid`; exactly 1 at zero yaw.
    pub fn power_ratio_curve(&self, turbine: &TurbineSpec, profile: &AblProfile, yaw_grid: &[f64]) -> Result<Vec<f64>> {
        let p0 = self.freestream(turbine, profile, 0.0)?.aero_power;
        if !(p0 > 0.0) {
            return Err(Error::DegenerateNormalization);
        }
        yaw_grid
            .iter()
            .map(|&g| {
                if g == 0.0 {
                    Ok(1.0)
                } else {
                    let p = self.freestream(turbine, profile, g)?.aero_power / p0;
                    if p.is_finite() {
                        Ok(p)
                    } else {
                        Err(Error::DegenerateNormalization)
                    }
                }
            })
            .collect()
    }
}

impl RotorResponse for RotorModel {
    fn freestream(&self, turbine: &TurbineSpec, profile: &AblProfile, yaw_deg: f64) -> Result<RotorOutput> {
        let (aero, ct, clamped) = match self.choice {
            PowerYawModelChoice::BladeElement => {
                let out = self.blade_element(turbine, profile, yaw_deg)?;
                (out.power.max(0.0), out.thrust_coefficient, out.clamped_lookups)
            }
            PowerYawModelChoice::CosineExponent { exponent } => {
                let out = self.blade_element(turbine, profile, 0.0)?;
                let ct = out.thrust_coefficient * yaw_deg.to_radians().cos().powi(2);
                (power_cosine(out.power.max(0.0), yaw_deg, exponent), ct, out.clamped_lookups)
            }
        };
        Ok(RotorOutput {
            power: aero.min(turbine.rated_power),
            aero_power: aero,
            thrust_coefficient: ct,
            clamped_lookups: clamped,
        })
    }
}

/// Yaw response of a rotor tabulated for one profile shape.
///
/// Valid for any profile that is a uniform scaling of the tabulated shape;
/// power is rescaled with the cube of the hub-speed ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YawPowerTable {
    hub_height: f64,
    rotor_diameter: f64,
    reference_speed: f64,
    yaw_start: f64,
    yaw_step: f64,
    aero_power: Vec<f64>,
    thrust_coefficient: Vec<f64>,
}

impl YawPowerTable {
    pub fn build(
        rotor: &impl RotorResponse,
        turbine: &TurbineSpec,
        shape: &ProfileShape,
        max_yaw: f64,
        yaw_step: f64,
    ) -> Result<Self> {
        let reference_speed = 10.0;
        let profile = shape.profile(reference_speed, 0.0, turbine.hub_height)?;
        let n = (2.0 * max_yaw / yaw_step).round() as usize + 1;
        let mut aero_power = Vec::with_capacity(n);
        let mut thrust_coefficient = Vec::with_capacity(n);
        for k in 0..n {
            let g = -max_yaw + k as f64 * yaw_step;
            let out = rotor.freestream(turbine, &profile, g)?;
            aero_power.push(out.aero_power);
            thrust_coefficient.push(out.thrust_coefficient);
        }
        Ok(YawPowerTable {
            hub_height: turbine.hub_height,
            rotor_diameter: turbine.rotor_diameter,
            reference_speed,
            yaw_start: -max_yaw,
            yaw_step,
            aero_power,
            thrust_coefficient,
        })
    }

    fn matches(&self, turbine: &TurbineSpec) -> bool {
        self.hub_height == turbine.hub_height && self.rotor_diameter == turbine.rotor_diameter
    }

    /// Catmull-Rom interpolation of a tabulated column.
    fn interp(&self, values: &[f64], yaw: f64) -> Option<f64> {
        let u = (yaw - self.yaw_start) / self.yaw_step;
        let n = values.len();
        if u < 0.0 || u > (n - 1) as f64 {
            return None;
        }
        let i = (u.floor() as usize).min(n - 2);
        let t = u - i as f64;
        let p1 = values[i];
        let p2 = values[i + 1];
        let p0 = if i > 0 { values[i - 1] } else { 2.0 * p1 - p2 };
        let p3 = if i + 2 < n { values[i + 2] } else { 2.0 * p2 - p1 };
        let t2 = t * t;
        let t3 = t2 * t;
        Some(
            0.5 * (2.0 * p1
                + (-p0 + p2) * t
                + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
                + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3),
        )
    }
}

/// Set of yaw tables, one per distinct rotor, used as a fast stand-in for
/// the blade-element model when the profile shape is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedRotor {
    tables: Vec<YawPowerTable>,
}

impl TabulatedRotor {
    pub fn build(
        rotor: &impl RotorResponse,
        turbines: &[TurbineSpec],
        shape: &ProfileShape,
        max_yaw: f64,
        yaw_step: f64,
    ) -> Result<Self> {
        let mut tables: Vec<YawPowerTable> = Vec::new();
        for t in turbines {
            if !tables.iter().any(|tab| tab.matches(t)) {
                tables.push(YawPowerTable::build(rotor, t, shape, max_yaw, yaw_step)?);
            }
        }
        Ok(TabulatedRotor { tables })
    }
}

impl RotorResponse for TabulatedRotor {
    fn freestream(&self, turbine: &TurbineSpec, profile: &AblProfile, yaw_deg: f64) -> Result<RotorOutput> {
        let table = self
            .tables
            .iter()
            .find(|t| t.matches(turbine))
            .ok_or_else(|| invalid(format!("no yaw table for turbine {}", turbine.id)))?;
        let out_of_range = || invalid(format!("yaw {yaw_deg} deg outside the tabulated range"));
        let p = table.interp(&table.aero_power, yaw_deg).ok_or_else(out_of_range)?;
        let ct = table.interp(&table.thrust_coefficient, yaw_deg).ok_or_else(out_of_range)?;
        let scale = profile.speed_at(turbine.hub_height) / table.reference_speed;
        let aero = (p * scale.powi(3)).max(0.0);
        Ok(RotorOutput {
            power: aero.min(turbine.rated_power),
            aero_power: aero,
            thrust_coefficient: ct,
            clamped_lookups: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farm::{default_profile_heights, FarmLayout};

    fn turbine() -> TurbineSpec {
        FarmLayout::reference_site().turbines()[0].clone()
    }

    fn uniform(u: f64) -> AblProfile {
        AblProfile::uniform(u, 0.0, &default_profile_heights()).unwrap()
    }

    fn sheared() -> AblProfile {
        ProfileShape::default().profile(8.0, 0.0, 100.0).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(power_cosine(1.0, 0.0, 3.0), 1.0);
        assert!((power_cosine(1.0, 20.0, 3.0) - 0.8298).abs() < 1e-4);
        assert_eq!(power_cosine(1.0, -20.0, 3.0), power_cosine(1.0, 20.0, 3.0));
    }

    #[test]
    fn cosine_monotone_in_yaw() {
        let mut prev = f64::INFINITY;
        for k in 0..=90 {
            let p = power_cosine(1.0, k as f64, 2.5);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn region2_operating_point_is_sane() {
        let model = RotorModel::generic_for(&turbine());
        let out = model.blade_element(&turbine(), &uniform(8.0), 0.0).unwrap();
        let area = PI * 60.0f64.powi(2);
        let cp = out.power / (0.5 * AIR_DENSITY * area * 8.0f64.powi(3));
        assert!(cp > 0.35 && cp < 0.593, "cp = {cp}");
        assert!(out.thrust_coefficient > 0.0 && out.thrust_coefficient < 1.2);
        assert_eq!(out.clamped_lookups, 0);
    }

    #[test]
    fn uniform_inflow_is_even_in_yaw() {
        let model = RotorModel::generic_for(&turbine());
        let p0 = model.freestream(&turbine(), &uniform(8.0), 0.0).unwrap().aero_power;
        for g in [5.0, 12.5, 20.0, 25.0] {
            let a = model.freestream(&turbine(), &uniform(8.0), g).unwrap().aero_power;
            let b = model.freestream(&turbine(), &uniform(8.0), -g).unwrap().aero_power;
            assert!((a - b).abs() / p0 < 1e-6);
        }
    }

    #[test]
    fn mirrored_uniform_profile_same_power() {
        let model = RotorModel::generic_for(&turbine());
        let p = uniform(7.0);
        let m = p.mirrored(100.0).unwrap();
        let a = model.freestream(&turbine(), &p, 0.0).unwrap().aero_power;
        let b = model.freestream(&turbine(), &m, 0.0).unwrap().aero_power;
        assert!((a - b).abs() / a < 1e-12);
    }

    #[test]
    fn sheared_veered_inflow_favours_positive_yaw() {
        let model = RotorModel::generic_for(&turbine());
        let plus = model.freestream(&turbine(), &sheared(), 20.0).unwrap().aero_power;
        let minus = model.freestream(&turbine(), &sheared(), -20.0).unwrap().aero_power;
        assert!(plus > minus, "P(+20) = {plus}, P(-20) = {minus}");
    }

    #[test]
    fn power_scales_with_cube_of_inflow() {
        let model = RotorModel::generic_for(&turbine());
        let a = model.freestream(&turbine(), &sheared(), 15.0).unwrap();
        let b = model.freestream(&turbine(), &sheared().scaled(0.7), 15.0).unwrap();
        assert!((b.aero_power / a.aero_power - 0.343).abs() < 1e-9);
        assert!((b.thrust_coefficient - a.thrust_coefficient).abs() < 1e-12);
    }

    #[test]
    fn ratio_curve_properties() {
        let model = RotorModel::generic_for(&turbine());
        let grid: Vec<f64> = (-5..=5).map(|k| 5.0 * k as f64).collect();
        let r = model.power_ratio_curve(&turbine(), &uniform(8.0), &grid).unwrap();
        assert_eq!(r[5], 1.0);
        for k in 0..5 {
            assert!((r[k] - r[10 - k]).abs() < 1e-9);
        }
        let cos = model
            .clone()
            .with_choice(PowerYawModelChoice::CosineExponent { exponent: 3.0 })
            .unwrap();
        let rc = cos.power_ratio_curve(&turbine(), &sheared(), &grid).unwrap();
        for (g, r) in grid.iter().zip(&rc) {
            assert!((r - g.to_radians().cos().powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_inflow_is_degenerate() {
        let model = RotorModel::generic_for(&turbine());
        assert!(matches!(
            model.power_ratio_curve(&turbine(), &uniform(0.0), &[0.0, 10.0]),
            Err(Error::DegenerateNormalization)
        ));
    }

    #[test]
    fn coverage_error() {
        let model = RotorModel::generic_for(&turbine());
        let short = AblProfile::uniform(8.0, 0.0, &[60.0, 150.0]).unwrap();
        assert!(matches!(
            model.freestream(&turbine(), &short, 0.0),
            Err(Error::ProfileCoverage { .. })
        ));
    }

    #[test]
    fn polar_policy() {
        let mut model = RotorModel::generic_for(&turbine());
        let narrow = Polar::new(vec![0.0, 5.0], vec![0.5, 1.0], vec![0.01, 0.01]).unwrap();
        let sections = model.geometry.sections().to_vec();
        model.geometry = BladeGeometry::new(sections, vec![narrow], 3, model.geometry.hub_radius()).unwrap();
        let out = model.freestream(&turbine(), &uniform(8.0), 0.0).unwrap();
        assert!(out.clamped_lookups > 0);
        model.config.polar_policy = PolarPolicy::Error;
        assert!(matches!(
            model.freestream(&turbine(), &uniform(8.0), 0.0),
            Err(Error::PolarExtrapolation { .. })
        ));
    }

    #[test]
    fn quadrature_converges() {
        let model = RotorModel::generic_for(&turbine());
        let mut fine = model.clone();
        fine.config.radial_stations *= 2;
        fine.config.azimuthal_stations *= 2;
        for g in [0.0, 20.0, -20.0] {
            let a = model.freestream(&turbine(), &sheared(), g).unwrap().aero_power;
            let b = fine.freestream(&turbine(), &sheared(), g).unwrap().aero_power;
            assert!((a - b).abs() / b < 1e-3, "yaw {g}: {a} vs {b}");
        }
    }

    #[test]
    fn table_matches_direct_model() {
        let model = RotorModel::generic_for(&turbine());
        let shape = ProfileShape::default();
        let tab = TabulatedRotor::build(&model, &[turbine()], &shape, 40.0, 0.25).unwrap();
        let p = shape.profile(6.5, 0.0, 100.0).unwrap();
        for g in [-23.3, -4.1, 0.0, 7.77, 19.9] {
            let a = model.freestream(&turbine(), &p, g).unwrap();
            let b = tab.freestream(&turbine(), &p, g).unwrap();
            assert!((a.aero_power - b.aero_power).abs() / a.aero_power < 1e-4);
            assert!((a.thrust_coefficient - b.thrust_coefficient).abs() < 1e-4);
        }
    }

    #[test]
    fn geometry_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("wakesteer-blade-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = BladeGeometry::generic(60.0);
        let path = dir.join("sections.csv");
        g.save(&path).unwrap();
        let back = BladeGeometry::load(&path, 3, g.hub_radius()).unwrap();
        assert_eq!(back.sections().len(), g.sections().len());
        for (a, b) in back.sections().iter().zip(g.sections()) {
            assert!((a.chord - b.chord).abs() < 1e-12 && (a.twist_deg - b.twist_deg).abs() < 1e-12);
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
