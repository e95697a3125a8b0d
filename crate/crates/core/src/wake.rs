//! Gaussian wake model with yaw deflection, secondary steering and
//! superposition, and the farm power solver built on it.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::farm::{to_wind_frame, AblProfile, FarmLayout, TurbineSpec, WindCondition};
use crate::rotor::{RotorOutput, RotorResponse};

/// Largest combined deficit; keeps the waked velocity positive.
pub const MAX_COMBINED_DEFICIT: f64 = 0.99;

pub const DEFAULT_SIGMA0_OVER_D: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Superposition {
    /// Sum of deficits relative to the freestream, clipped below one.
    ModifiedLinear,
    /// Each source deficit is first scaled by the rotor-averaged inflow
    /// ratio seen by that source.
    InflowWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WakeParams {
    /// Wake spreading rate, one per turbine in layout order.
    pub k_w: Vec<f64>,
    pub sigma0_over_d: f64,
    pub superposition: Superposition,
    /// Exponent `n` in `C_T(gamma) = C_T(0) cos^n(gamma)`.
    pub thrust_yaw_exponent: f64,
    pub secondary_steering: bool,
}

impl WakeParams {
    pub fn uniform(n: usize, k_w: f64) -> Self {
        WakeParams {
            k_w: vec![k_w; n],
            sigma0_over_d: DEFAULT_SIGMA0_OVER_D,
            superposition: Superposition::ModifiedLinear,
            thrust_yaw_exponent: 2.0,
            secondary_steering: true,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_w.len() != n {
            return Err(invalid(format!(
                "{} wake spreading rates given for {n} turbines",
                self.k_w.len()
            )));
        }
        if self.k_w.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(invalid("wake spreading rates must be positive"));
        }
        if !(self.sigma0_over_d > 0.0) {
            return Err(invalid("initial wake width must be positive"));
        }
        if !(self.thrust_yaw_exponent >= 0.0) {
            return Err(invalid("thrust yaw exponent must be non-negative"));
        }
        Ok(())
    }
}

/// Wake standard deviation `sigma0 + k_w x` in meters.
pub fn wake_width(x: f64, diameter: f64, k_w: f64, sigma0_over_d: f64) -> f64 {
    sigma0_over_d * diameter + k_w * x.max(0.0)
}

/// Centerline deficit from momentum conservation for a Gaussian of width
/// `sigma_over_d`. Capped at the actuator-disk value `1 - sqrt(1 - C_T)`.
pub fn deficit_amplitude(ct: f64, sigma_over_d: f64) -> f64 {
    let ct = ct.clamp(0.0, 0.999_999);
    let loading = (ct / (8.0 * sigma_over_d * sigma_over_d)).min(ct);
    1.0 - (1.0 - loading).sqrt()
}

/// Lateral velocity ratio leaving a rotor at yaw `yaw_deg`.
///
/// `ct` is the thrust coefficient against the freestream; the lifting-line
/// strength uses the disk-local coefficient `C_T / (1 - a)^2`.
pub fn lateral_velocity(ct: f64, yaw_deg: f64) -> f64 {
    let g = yaw_deg.to_radians();
    -0.25 * local_thrust_coefficient(ct) * g.cos().powi(2) * g.sin()
}

/// Thrust coefficient against the disk velocity, from actuator-disk theory.
pub fn local_thrust_coefficient(ct: f64) -> f64 {
    let ct = ct.clamp(0.0, 0.999_999);
    let a = 0.5 * (1.0 - (1.0 - ct).sqrt());
    ct / ((1.0 - a) * (1.0 - a))
}

/// Decay of lateral velocity with wake expansion, `(D / (D + 2 k_w x))^2`.
pub fn lateral_decay(x: f64, diameter: f64, k_w: f64) -> f64 {
    let g = 1.0 + 2.0 * k_w * x.max(0.0) / diameter;
    1.0 / (g * g)
}

/// Centerline offset for a lateral velocity ratio `w`, integrating
/// [`lateral_decay`] downstream.
pub fn deflection_from_velocity(w: f64, x: f64, diameter: f64, k_w: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    w * x / (1.0 + 2.0 * k_w * x / diameter)
}

/// Lifting-line wake centerline offset `y_c(x)` in meters.
pub fn deflection(x: f64, ct: f64, yaw_deg: f64, diameter: f64, k_w: f64) -> f64 {
    deflection_from_velocity(lateral_velocity(ct, yaw_deg), x, diameter, k_w)
}

/// Velocity deficit ratio of one wake at offset `(x, y, z)` from the source
/// hub, with `y` crosswind and `z` vertical.
pub fn deficit(
    x: f64,
    y: f64,
    z: f64,
    source: &TurbineSpec,
    ct: f64,
    yaw_deg: f64,
    k_w: f64,
    params: &WakeParams,
) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let d = source.rotor_diameter;
    let ct_yawed = ct * yaw_deg.to_radians().cos().abs().powf(params.thrust_yaw_exponent);
    let yc = deflection(x, ct, yaw_deg, d, k_w);
    gaussian_deficit(x, y - yc, z, d, ct_yawed, k_w, params.sigma0_over_d)
}

fn gaussian_deficit(x: f64, dy: f64, dz: f64, d: f64, ct: f64, k_w: f64, sigma0_over_d: f64) -> f64 {
    let sigma = wake_width(x, d, k_w, sigma0_over_d);
    let amp = deficit_amplitude(ct, sigma / d);
    amp * (-(dy * dy + dz * dz) / (2.0 * sigma * sigma)).exp()
}

/// Combines weighted deficits at one point by linear summation, clipped.
pub fn superpose(deficits: &[f64]) -> f64 {
    deficits.iter().sum::<f64>().min(MAX_COMBINED_DEFICIT)
}

/// Lateral velocity ratio carried from an upwind wake to a downwind rotor.
///
/// `w_upwind` is the upwind turbine's total lateral velocity ratio, decayed
/// over the separation `x` and weighted by the rotor's offset `(dy, dz)` from
/// the wake center with the deficit's Gaussian of width `sigma`.
pub fn secondary_steering_offset(w_upwind: f64, x: f64, diameter: f64, k_w: f64, sigma: f64, dy: f64, dz: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    w_upwind * lateral_decay(x, diameter, k_w) * (-(dy * dy + dz * dz) / (2.0 * sigma * sigma)).exp()
}

/// Equal-area polar quadrature over a rotor disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskQuadrature {
    /// Offsets `(dy, dz)` relative to a unit-radius disk.
    points: Vec<(f64, f64)>,
}

impl DiskQuadrature {
    pub fn new(rings: usize, sectors: usize) -> Self {
        let mut points = Vec::with_capacity(rings * sectors);
        for i in 0..rings {
            let rho = ((i as f64 + 0.5) / rings as f64).sqrt();
            for k in 0..sectors {
                let theta = (k as f64 + 0.5) * 2.0 * PI / sectors as f64;
                points.push((rho * theta.sin(), rho * theta.cos()));
            }
        }
        DiskQuadrature { points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

impl Default for DiskQuadrature {
    fn default() -> Self {
        DiskQuadrature::new(6, 16)
    }
}

/// Area-weighted average of `field(y, z)` over the disk of `turbine`
/// centered at crosswind `y0`.
pub fn rotor_averaged_speed(
    turbine: &TurbineSpec,
    y0: f64,
    quadrature: &DiskQuadrature,
    field: impl Fn(f64, f64) -> f64,
) -> f64 {
    let r = turbine.radius();
    let pts = quadrature.points();
    pts.iter()
        .map(|&(dy, dz)| field(y0 + r * dy, turbine.hub_height + r * dz))
        .sum::<f64>()
        / pts.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmFlowQuery {
    pub layout: FarmLayout,
    pub condition: WindCondition,
    pub yaw: Vec<f64>,
    pub params: WakeParams,
}

impl FarmFlowQuery {
    pub fn validate(&self) -> Result<()> {
        self.condition.validate()?;
        if self.yaw.len() != self.layout.len() {
            return Err(invalid(format!(
                "{} yaw angles given for {} turbines",
                self.yaw.len(),
                self.layout.len()
            )));
        }
        if self.yaw.iter().any(|g| !(g.abs() <= 90.0)) {
            return Err(invalid("yaw angles must lie within +-90 deg"));
        }
        self.params.validate(self.layout.len())
    }
}

/// Per-turbine result of a farm solve, in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmPowers {
    pub power: Vec<f64>,
    /// Rotor-averaged waked over freestream speed.
    pub inflow_ratio: Vec<f64>,
    /// Wind-frame position of each turbine.
    pub frame: Vec<(f64, f64)>,
    /// Total lateral velocity ratio leaving each rotor.
    pub lateral_velocity: Vec<f64>,
}

impl FarmPowers {
    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }
}

#[derive(Debug, Clone)]
struct SnapTurbine {
    index: usize,
    x: f64,
    y: f64,
    hub_height: f64,
    diameter: f64,
    rated: f64,
    yaw: f64,
    freestream: RotorOutput,
    aligned_ct: f64,
    /// Freestream speed at each disk quadrature point.
    inflow: Vec<f64>,
    inflow_sum: f64,
}

/// Everything about a farm flow that does not depend on the wake parameters.
///
/// Built once per (layout, inflow, yaw) and solved for many parameter sets.
#[derive(Debug, Clone)]
pub struct FarmSnapshot {
    turbines: Vec<SnapTurbine>,
    quadrature: DiskQuadrature,
}

impl FarmSnapshot {
    pub fn new(
        layout: &FarmLayout,
        profile: &AblProfile,
        direction: f64,
        yaw: &[f64],
        rotor: &impl RotorResponse,
    ) -> Result<Self> {
        if yaw.len() != layout.len() {
            return Err(invalid("yaw vector length differs from turbine count"));
        }
        let specs = layout.turbines();
        let mut outputs = Vec::with_capacity(specs.len());
        let mut aligned = Vec::with_capacity(specs.len());
        for (t, &g) in specs.iter().zip(yaw) {
            let out = rotor.freestream(t, profile, g)?;
            let ct0 = if g == 0.0 {
                out.thrust_coefficient
            } else {
                rotor.freestream(t, profile, 0.0)?.thrust_coefficient
            };
            outputs.push(out);
            aligned.push(ct0);
        }
        Self::with_outputs(layout, profile, direction, yaw, &outputs, &aligned)
    }

    /// Builds a snapshot from precomputed freestream rotor outputs and
    /// aligned thrust coefficients, both in layout order.
    pub fn with_outputs(
        layout: &FarmLayout,
        profile: &AblProfile,
        direction: f64,
        yaw: &[f64],
        outputs: &[RotorOutput],
        aligned_ct: &[f64],
    ) -> Result<Self> {
        let n = layout.len();
        if yaw.len() != n || outputs.len() != n || aligned_ct.len() != n {
            return Err(invalid("snapshot inputs differ in length from the turbine count"));
        }
        let quadrature = DiskQuadrature::default();
        let specs = layout.turbines();
        let turbines = to_wind_frame(layout, direction)
            .into_iter()
            .map(|(i, x, y)| {
                let t = &specs[i];
                let r = t.radius();
                let inflow: Vec<f64> = quadrature
                    .points()
                    .iter()
                    .map(|&(_, dz)| profile.speed_at(t.hub_height + r * dz))
                    .collect();
                let inflow_sum = inflow.iter().sum();
                SnapTurbine {
                    index: i,
                    x,
                    y,
                    hub_height: t.hub_height,
                    diameter: t.rotor_diameter,
                    rated: t.rated_power,
                    yaw: yaw[i],
                    freestream: outputs[i],
                    aligned_ct: aligned_ct[i],
                    inflow,
                    inflow_sum,
                }
            })
            .collect();
        Ok(FarmSnapshot { turbines, quadrature })
    }

    pub fn len(&self) -> usize {
        self.turbines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbines.is_empty()
    }

    /// Solves all wakes upwind first.
    pub fn solve(&self, params: &WakeParams) -> FarmPowers {
        self.solve_inner(params, None)
    }

    fn solve_inner(&self, params: &WakeParams, mut centers: Option<&mut Vec<WakeState>>) -> FarmPowers {
        let n = self.turbines.len();
        let mut power = vec![0.0; n];
        let mut ratio = vec![1.0; n];
        let mut frame = vec![(0.0, 0.0); n];
        let mut lateral = vec![0.0; n];
        let mut states: Vec<WakeState> = Vec::with_capacity(n);
        let mut weighted = Vec::with_capacity(n);
        for t in &self.turbines {
            let mut w = lateral_velocity(t.aligned_ct, t.yaw);
            // deficits of upwind wakes over this disk
            let sources: Vec<&WakeState> = states.iter().filter(|s| t.x - s.x > 0.0).collect();
            let s = if sources.is_empty() {
                1.0
            } else {
                let r = 0.5 * t.diameter;
                let mut acc = 0.0;
                for (p, &(dy, dz)) in self.quadrature.points().iter().enumerate() {
                    let y = t.y + r * dy;
                    let z = t.hub_height + r * dz;
                    weighted.clear();
                    for src in &sources {
                        weighted.push(src.weight * src.deficit_at(t.x, y, z));
                    }
                    acc += t.inflow[p] * (1.0 - superpose(&weighted));
                }
                if params.secondary_steering {
                    for src in &sources {
                        let dx = t.x - src.x;
                        let sigma = src.sigma0 + src.k_w * dx;
                        let dy = t.y - src.center_y(dx);
                        let dz = t.hub_height - src.z;
                        w += secondary_steering_offset(src.lateral, dx, src.diameter, src.k_w, sigma, dy, dz);
                    }
                }
                acc / t.inflow_sum
            };
            let k_w = params.k_w[t.index];
            let aero = t.freestream.aero_power * s * s * s;
            power[t.index] = aero.min(t.rated);
            ratio[t.index] = s;
            frame[t.index] = (t.x, t.y);
            lateral[t.index] = w;
            let weight = match params.superposition {
                Superposition::ModifiedLinear => 1.0,
                Superposition::InflowWeighted => s,
            };
            let ct = t.aligned_ct * t.yaw.to_radians().cos().abs().powf(params.thrust_yaw_exponent);
            states.push(WakeState {
                x: t.x,
                y: t.y,
                z: t.hub_height,
                diameter: t.diameter,
                sigma0: params.sigma0_over_d * t.diameter,
                k_w,
                ct,
                lateral: w,
                weight,
            });
        }
        if let Some(c) = centers.as_mut() {
            **c = states;
        }
        FarmPowers {
            power,
            inflow_ratio: ratio,
            frame,
            lateral_velocity: lateral,
        }
    }

    /// Waked speed at wind-frame points `(x, y, z)` for a profile-dependent
    /// freestream `u_inf(z)`.
    pub fn flow_at(
        &self,
        params: &WakeParams,
        profile: &AblProfile,
        points: &[(f64, f64, f64)],
    ) -> Vec<f64> {
        let mut states = Vec::new();
        self.solve_inner(params, Some(&mut states));
        let mut weighted = Vec::with_capacity(states.len());
        points
            .iter()
            .map(|&(x, y, z)| {
                weighted.clear();
                for s in &states {
                    weighted.push(s.weight * s.deficit_at(x, y, z));
                }
                profile.speed_at(z) * (1.0 - superpose(&weighted))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct WakeState {
    x: f64,
    y: f64,
    z: f64,
    diameter: f64,
    sigma0: f64,
    k_w: f64,
    ct: f64,
    lateral: f64,
    weight: f64,
}

impl WakeState {
    fn center_y(&self, dx: f64) -> f64 {
        self.y + deflection_from_velocity(self.lateral, dx, self.diameter, self.k_w)
    }

    fn deficit_at(&self, x: f64, y: f64, z: f64) -> f64 {
        let dx = x - self.x;
        if dx <= 0.0 {
            return 0.0;
        }
        let sigma0_over_d = self.sigma0 / self.diameter;
        gaussian_deficit(dx, y - self.center_y(dx), z - self.z, self.diameter, self.ct, self.k_w, sigma0_over_d)
    }
}

/// Per-turbine power for a yaw strategy.
pub fn farm_power(query: &FarmFlowQuery, profile: &AblProfile, rotor: &impl RotorResponse) -> Result<FarmPowers> {
    query.validate()?;
    let snap = FarmSnapshot::new(&query.layout, profile, query.condition.direction, &query.yaw, rotor)?;
    Ok(snap.solve(&query.params))
}

/// Writes `x_m,y_m,z_m,u_ms` over a wind-frame grid.
pub fn write_flow_field<W: Write>(
    writer: W,
    snapshot: &FarmSnapshot,
    params: &WakeParams,
    profile: &AblProfile,
    xs: &[f64],
    ys: &[f64],
    zs: &[f64],
) -> Result<()> {
    let mut points = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in zs {
        for &y in ys {
            for &x in xs {
                points.push((x, y, z));
            }
        }
    }
    let u = snapshot.flow_at(params, profile, &points);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x_m", "y_m", "z_m", "u_ms"])?;
    for (p, u) in points.iter().zip(u) {
        w.write_record(&[p.0.to_string(), p.1.to_string(), p.2.to_string(), u.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farm::{default_profile_heights, ProfileShape};
    use crate::rotor::{PowerYawModelChoice, RotorModel};

    fn spec() -> TurbineSpec {
        TurbineSpec::new(1, [0.0, 0.0], 120.0, 100.0, 2.2e6).unwrap()
    }

    #[test]
    fn far_field_decays() {
        let p = WakeParams::uniform(1, 0.05);
        assert!(deficit(1000.0 * 120.0, 0.0, 0.0, &spec(), 0.8, 0.0, 0.05, &p) < 1e-3);
        assert_eq!(deficit(0.0, 0.0, 0.0, &spec(), 0.8, 0.0, 0.05, &p), 0.0);
        assert_eq!(deficit(-50.0, 0.0, 0.0, &spec(), 0.8, 0.0, 0.05, &p), 0.0);
    }

    #[test]
    fn centerline_at_seven_diameters() {
        let p = WakeParams::uniform(1, 0.05);
        let got = deficit(7.0 * 120.0, 0.0, 0.0, &spec(), 0.8, 0.0, 0.05, &p);
        // sigma/D = 0.25 + 0.05 * 7 = 0.6
        let expected = 1.0 - (1.0f64 - 0.8 / (8.0 * 0.36)).sqrt();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_yaw_no_deflection() {
        for x in [1.0, 100.0, 1e4] {
            assert_eq!(deflection(x, 0.8, 0.0, 120.0, 0.05), 0.0);
        }
    }

    #[test]
    fn deflection_sign_symmetry_and_growth() {
        let mut prev = 0.0;
        for k in 1..200 {
            let x = 10.0 * k as f64;
            let a = deflection(x, 0.8, 20.0, 120.0, 0.05);
            let b = deflection(x, 0.8, -20.0, 120.0, 0.05);
            assert!(a < 0.0);
            assert_eq!(a, -b);
            assert!(a.abs() >= prev);
            prev = a.abs();
        }
    }

    #[test]
    fn deflection_matches_quadrature() {
        let (ct, yaw, d, k) = (0.8, 20.0f64, 120.0, 0.05);
        let x = 7.0 * d;
        let g = yaw.to_radians();
        let a = 0.5 * (1.0 - (1.0f64 - ct).sqrt());
        let w0 = -0.25 * ct / (1.0 - a).powi(2) * g.cos().powi(2) * g.sin();
        let n = 100_000;
        let h = x / n as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let xi = (i as f64 + 0.5) * h;
                (d / (d + 2.0 * k * xi)).powi(2)
            })
            .sum::<f64>()
            * h;
        let got = deflection(x, ct, yaw, d, k);
        assert!((got - w0 * integral).abs() < 1e-6 * got.abs());
    }

    #[test]
    fn superposition_rules() {
        assert_eq!(superpose(&[0.3]), 0.3);
        assert!((superpose(&[0.3, 0.2]) - 0.5).abs() < 1e-15);
        assert!(superpose(&[0.8, 0.8]) < 1.0);
        assert_eq!(superpose(&[]), 0.0);
    }

    #[test]
    fn secondary_offset_is_odd_and_zero_without_yaw() {
        assert_eq!(secondary_steering_offset(0.0, 480.0, 120.0, 0.05, 60.0, 5.0, 0.0), 0.0);
        let w = lateral_velocity(0.8, 20.0);
        let a = secondary_steering_offset(w, 480.0, 120.0, 0.05, 60.0, 5.0, 0.0);
        let b = secondary_steering_offset(-w, 480.0, 120.0, 0.05, 60.0, -5.0, 0.0);
        assert_eq!(a, -b);
    }

    #[test]
    fn rotor_average_basics() {
        let q = DiskQuadrature::default();
        let t = spec();
        assert!((rotor_averaged_speed(&t, 0.0, &q, |_, _| 7.0) - 7.0).abs() < 1e-12);
        let half = rotor_averaged_speed(&t, 0.0, &q, |_, z| if z > 100.0 { 7.0 } else { 0.0 });
        assert!((half - 3.5).abs() < 1e-12);
    }

    #[test]
    fn rotor_average_matches_fine_quadrature() {
        let t = spec();
        let p = WakeParams::uniform(1, 0.05);
        let field = |y: f64, z: f64| 8.0 * (1.0 - deficit(480.0, y, z - 100.0, &t, 0.8, 15.0, 0.05, &p));
        for y0 in [0.0, 30.0, 70.0, 140.0] {
            let coarse = rotor_averaged_speed(&t, y0, &DiskQuadrature::default(), field);
            let fine = rotor_averaged_speed(&t, y0, &DiskQuadrature::new(60, 160), field);
            assert!((coarse - fine).abs() / fine < 5e-3, "y0 {y0}: {coarse} vs {fine}");
        }
    }

    fn row() -> FarmLayout {
        let ts = (0..3)
            .map(|k| TurbineSpec::new(k + 1, [0.0, -(k as f64) * 600.0], 120.0, 100.0, 2.2e6).unwrap())
            .collect();
        FarmLayout::new(ts, vec![]).unwrap()
    }

    fn cosine_rotor() -> RotorModel {
        RotorModel::generic_for(&spec())
            .with_choice(PowerYawModelChoice::CosineExponent { exponent: 2.0 })
            .unwrap()
    }

    #[test]
    fn isolated_turbine_equals_rotor_output() {
        let layout = FarmLayout::new(vec![spec()], vec![]).unwrap();
        let profile = ProfileShape::default().profile(7.0, 0.0, 100.0).unwrap();
        let rotor = RotorModel::generic_for(&spec());
        let q = FarmFlowQuery {
            layout,
            condition: WindCondition::new(7.0, 0.0, 0.06).unwrap(),
            yaw: vec![0.0],
            params: WakeParams::uniform(1, 0.05),
        };
        let out = farm_power(&q, &profile, &rotor).unwrap();
        assert_eq!(out.power[0], rotor.freestream(&spec(), &profile, 0.0).unwrap().power);
    }

    #[test]
    fn secondary_steering_moves_third_wake() {
        let layout = row();
        let profile = AblProfile::uniform(8.0, 0.0, &default_profile_heights()).unwrap();
        let snap = FarmSnapshot::new(&layout, &profile, 0.0, &[20.0, 0.0, 0.0], &cosine_rotor()).unwrap();
        let mut p = WakeParams::uniform(3, 0.05);
        let with = snap.solve(&p);
        p.secondary_steering = false;
        let without = snap.solve(&p);
        assert!(with.lateral_velocity[1] < 0.0);
        assert_eq!(without.lateral_velocity[1], 0.0);
        assert!(with.power[2] != without.power[2]);
        assert!(with.power[2] > without.power[2]);
    }

    #[test]
    fn large_spreading_dilutes_wakes() {
        let layout = row();
        let profile = AblProfile::uniform(8.0, 0.0, &default_profile_heights()).unwrap();
        let snap = FarmSnapshot::new(&layout, &profile, 0.0, &[0.0; 3], &cosine_rotor()).unwrap();
        let out = snap.solve(&WakeParams::uniform(3, 1e4));
        for r in out.inflow_ratio {
            assert!(r > 0.999);
        }
    }

    #[test]
    fn flow_field_csv() {
        let layout = row();
        let profile = AblProfile::uniform(8.0, 0.0, &default_profile_heights()).unwrap();
        let snap = FarmSnapshot::new(&layout, &profile, 0.0, &[0.0; 3], &cosine_rotor()).unwrap();
        let mut buf = Vec::new();
        write_flow_field(&mut buf, &snap, &WakeParams::uniform(3, 0.05), &profile, &[-100.0, 300.0], &[0.0], &[100.0])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_m,y_m,z_m,u_ms");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",8"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn superposition_is_bounded_and_monotone(ds in proptest::collection::vec(0f64..0.6, 0..6), extra in 0f64..0.6) {
                let base = superpose(&ds);
                prop_assert!((0.0..=MAX_COMBINED_DEFICIT).contains(&base));
                let mut more = ds.clone();
                more.push(extra);
                prop_assert!(superpose(&more) >= base);
            }

            #[test]
            fn deficit_is_mirror_symmetric(x in 0.5f64..20.0, y in -3f64..3.0, z in -1f64..1.0, yaw in -30f64..30.0, k in 0.01f64..0.1) {
                let p = WakeParams::uniform(1, k);
                let d = 120.0;
                let a = deficit(x * d, y * d, z * d, &spec(), 0.8, yaw, k, &p);
                let b = deficit(x * d, -y * d, z * d, &spec(), 0.8, -yaw, k, &p);
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((0.0..1.0).contains(&a));
            }

            #[test]
            fn deficit_falls_off_from_the_centerline(x in 0.5f64..20.0, dy in 0f64..2.0, step in 0.01f64..1.0, yaw in -30f64..30.0) {
                let p = WakeParams::uniform(1, 0.05);
                let d = 120.0;
                let yc = deflection(x * d, 0.8, yaw, d, 0.05);
                let near = deficit(x * d, yc + dy * d, 0.0, &spec(), 0.8, yaw, 0.05, &p);
                let far = deficit(x * d, yc + (dy + step) * d, 0.0, &spec(), 0.8, yaw, 0.05, &p);
                prop_assert!(far <= near);
            }

            #[test]
            fn deficit_is_continuous_downwind(x in 0.5f64..20.0, y in -2f64..2.0, yaw in -30f64..30.0) {
                let p = WakeParams::uniform(1, 0.05);
                let d = 120.0;
                let a = deficit(x * d, y * d, 0.0, &spec(), 0.8, yaw, 0.05, &p);
                let b = deficit(x * d + 1e-3, y * d, 0.0, &spec(), 0.8, yaw, 0.05, &p);
                prop_assert!((a - b).abs() < 1e-5);
            }

            // A yawed lead turbine also steers the wakes behind it, which
            // can push them onto a rotor; without that the wakes only remove
            // momentum.
            #[test]
            fn removing_the_lead_turbine_never_hurts(
                dir in -30f64..30.0,
                yaw in -25f64..25.0,
                k in 0.02f64..0.1,
                steering in any::<bool>(),
            ) {
                let yaw = if steering { 0.0 } else { yaw };
                let layout = row();
                let profile = AblProfile::uniform(8.0, dir, &default_profile_heights()).unwrap();
                let rotor = cosine_rotor();
                let mut p3 = WakeParams::uniform(3, k);
                p3.secondary_steering = steering;
                let mut p2 = WakeParams::uniform(2, k);
                p2.secondary_steering = steering;
                let full = FarmSnapshot::new(&layout, &profile, dir, &[yaw, 0.0, 0.0], &rotor)
                    .unwrap()
                    .solve(&p3);
                let sub = layout.subset(&[2, 3]).unwrap();
                let without = FarmSnapshot::new(&sub, &profile, dir, &[0.0, 0.0], &rotor)
                    .unwrap()
                    .solve(&p2);
                prop_assert!(without.power[0] >= full.power[1] - 1e-9);
                prop_assert!(without.power[1] >= full.power[2] - 1e-9);
            }
        }
    }
}
