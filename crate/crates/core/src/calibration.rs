//! Offline ensemble Kalman calibration of wake spreading rates from
//! yaw-aligned operating data.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::farm::{AblProfile, FarmLayout, WindCondition};
use crate::rotor::RotorResponse;
use crate::wake::{FarmSnapshot, WakeParams};

/// One yaw-aligned operating instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub condition: WindCondition,
    pub profile: AblProfile,
    /// Measured yaw of every turbine, nominally zero.
    pub yaw: Vec<f64>,
    /// Power of each turbine over the reference power, `None` where absent.
    pub normalized_power: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDataset {
    pub layout: FarmLayout,
    pub samples: Vec<CalibrationSample>,
}

impl CalibrationDataset {
    pub fn validate(&self) -> Result<()> {
        if self.layout.reference_index().is_none() {
            return Err(invalid("calibration needs a reference turbine"));
        }
        let n = self.layout.len();
        for (k, s) in self.samples.iter().enumerate() {
            if s.yaw.len() != n || s.normalized_power.len() != n {
                return Err(invalid(format!("sample {k} does not cover every turbine")));
            }
            if s.normalized_power.iter().flatten().any(|p| !(*p > 0.0 && p.is_finite())) {
                return Err(invalid(format!("sample {k} has a non-positive normalized power")));
            }
        }
        Ok(())
    }

    pub fn observation_count(&self) -> usize {
        let refs: Vec<usize> = self.reference_indices();
        self.samples
            .iter()
            .map(|s| {
                s.normalized_power
                    .iter()
                    .enumerate()
                    .filter(|(i, p)| p.is_some() && !refs.contains(i))
                    .count()
            })
            .sum()
    }

    fn reference_indices(&self) -> Vec<usize> {
        self.layout
            .reference_ids()
            .iter()
            .filter_map(|&id| self.layout.index_of(id))
            .collect()
    }
}

/// Ensemble of parameter vectors with box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<Vec<f64>>,
    pub bounds: Vec<(f64, f64)>,
}

pub const MIN_ENSEMBLE_SIZE: usize = 10;

fn lhs_quantiles(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n).map(|k| (k as f64 + rng.random::<f64>()) / n as f64).collect();
    q.shuffle(rng);
    q
}

impl Ensemble {
    pub fn new(members: Vec<Vec<f64>>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if members.len() < MIN_ENSEMBLE_SIZE {
            return Err(invalid(format!(
                "ensemble needs at least {MIN_ENSEMBLE_SIZE} members, got {}",
                members.len()
            )));
        }
        let p = bounds.len();
        if p == 0 || members.iter().any(|m| m.len() != p) {
            return Err(invalid("ensemble members must match the parameter dimension"));
        }
        if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(invalid("ensemble bounds must be increasing"));
        }
        Ok(Ensemble { members, bounds })
    }

    /// Latin-hypercube draw from a uniform prior on `prior` boxes.
    pub fn uniform(prior: &[(f64, f64)], bounds: Vec<(f64, f64)>, n: usize, rng: &mut impl Rng) -> Result<Self> {
        let cols: Vec<Vec<f64>> = prior
            .iter()
            .map(|&(lo, hi)| lhs_quantiles(n, rng).into_iter().map(|q| lo + q * (hi - lo)).collect())
            .collect();
        let members = (0..n).map(|m| cols.iter().map(|c| c[m]).collect()).collect();
        Ensemble::new(members, bounds)
    }

    /// Latin-hypercube draw from independent Gaussians.
    pub fn gaussian(mean: &[f64], sd: &[f64], n: usize, rng: &mut impl Rng) -> Result<Self> {
        let std = Normal::standard();
        let cols: Vec<Vec<f64>> = mean
            .iter()
            .zip(sd)
            .map(|(&m, &s)| {
                lhs_quantiles(n, rng)
                    .into_iter()
                    .map(|q| m + s * std.inverse_cdf(q))
                    .collect()
            })
            .collect();
        let members = (0..n).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
        Ensemble::new(members, vec![(f64::NEG_INFINITY, f64::INFINITY); mean.len()])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim())
            .map(|j| self.members.iter().map(|m| m[j]).sum::<f64>() / n)
            .collect()
    }

    /// Sample standard deviation of each parameter.
    pub fn spread(&self) -> Vec<f64> {
        let mean = self.mean();
        let n = self.len() as f64;
        (0..self.dim())
            .map(|j| {
                (self.members.iter().map(|m| (m[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            })
            .collect()
    }
}

/// One perturbed-observation ensemble Kalman analysis step.
///
/// `predictions[m]` is the observation-operator output of member `m`,
/// `noise_sd` the observation error standard deviation. The gain is applied
/// in ensemble space, so the cost is linear in the number of observations.
/// Members leaving the bounds are clamped and nudged inward by a small
/// random jitter.
pub fn enkf_update(
    ensemble: &Ensemble,
    predictions: &[Vec<f64>],
    observations: &[f64],
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Result<Ensemble> {
    let n = ensemble.len();
    let m = observations.len();
    if m == 0 {
        return Err(Error::EmptyData("observation batch".into()));
    }
    if predictions.len() != n || predictions.iter().any(|p| p.len() != m) {
        return Err(invalid("predictions must have one row per member and one column per observation"));
    }
    if !(noise_sd > 0.0) {
        return Err(invalid("observation noise must be positive"));
    }
    let spread = ensemble.spread();
    let min_spread = spread.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_spread >= 1e-12) {
        return Err(Error::EnsembleCollapse { spread: min_spread });
    }
    let p = ensemble.dim();
    let theta_mean = ensemble.mean();
    let g_mean: Vec<f64> = (0..m)
        .map(|k| predictions.iter().map(|row| row[k]).sum::<f64>() / n as f64)
        .collect();
    let theta_anom = DMatrix::from_fn(p, n, |j, i| ensemble.members[i][j] - theta_mean[j]);
    let g_anom = DMatrix::from_fn(m, n, |k, i| predictions[i][k] - g_mean[k]);
    let r_inv = 1.0 / (noise_sd * noise_sd);
    // B = G'^T R^-1 G', inner = (N-1) I + B
    let b = g_anom.transpose() * &g_anom * r_inv;
    let inner = DMatrix::identity(n, n) * (n as f64 - 1.0) + &b;
    let chol = inner
        .cholesky()
        .ok_or(Error::EnsembleCollapse { spread: min_spread })?;

    // zero-mean observation perturbations
    let mut eps = DMatrix::from_fn(m, n, |_, _| noise_sd * rng.sample::<f64, _>(StandardNormal));
    for k in 0..m {
        let mu = eps.row(k).mean();
        for i in 0..n {
            eps[(k, i)] -= mu;
        }
    }
    let mut members = Vec::with_capacity(n);
    for i in 0..n {
        let d = DVector::from_fn(m, |k, _| observations[k] + eps[(k, i)] - predictions[i][k]);
        let a = g_anom.transpose() * &d * r_inv;
        // G'^T (C + R)^-1 d = a - B inner^-1 a
        let proj = &a - &b * chol.solve(&a);
        let shift = &theta_anom * proj / (n as f64 - 1.0);
        let mut member: Vec<f64> = (0..p).map(|j| ensemble.members[i][j] + shift[j]).collect();
        for (j, v) in member.iter_mut().enumerate() {
            let (lo, hi) = ensemble.bounds[j];
            if *v <= lo || *v >= hi || !v.is_finite() {
                let width = if (hi - lo).is_finite() { hi - lo } else { 1.0 };
                let jitter = 0.01 * width * rng.random::<f64>();
                *v = if *v <= lo || v.is_nan() { lo + jitter } else { hi - jitter };
            }
        }
        members.push(member);
    }
    Ensemble::new(members, ensemble.bounds.clone())
}

/// Observation-noise inflation that limits one analysis step to shrinking
/// the ensemble variance by at most `max_shrink` in any direction.
///
/// Ensemble-space eigenvalues of `G'^T R^-1 G' / (N - 1)` give the variance
/// reduction `1 + lambda` an uninflated step would apply.
pub fn adaptive_inflation(predictions: &[Vec<f64>], noise_sd: f64, max_shrink: f64) -> f64 {
    let n = predictions.len();
    if n < 2 || predictions[0].is_empty() || !(max_shrink > 1.0) {
        return 1.0;
    }
    let m = predictions[0].len();
    let g_mean: Vec<f64> = (0..m)
        .map(|k| predictions.iter().map(|row| row[k]).sum::<f64>() / n as f64)
        .collect();
    let g_anom = DMatrix::from_fn(m, n, |k, i| predictions[i][k] - g_mean[k]);
    let b = g_anom.transpose() * &g_anom / (noise_sd * noise_sd * (n as f64 - 1.0));
    let lambda = b.symmetric_eigenvalues().max();
    (lambda / (max_shrink - 1.0)).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub ensemble_size: usize,
    /// Uniform prior for every spreading rate.
    pub prior: (f64, f64),
    pub bounds: (f64, f64),
    pub observation_sd: f64,
    pub max_iterations: usize,
    /// Stop once an update moves the ensemble mean by less than this
    /// fraction.
    pub tolerance: f64,
    /// Largest variance reduction of one update; noise is inflated to
    /// respect it so the ensemble contracts over several iterations.
    pub max_shrink: f64,
    pub min_samples: usize,
    /// Estimate a single spreading rate for the farm.
    pub tie: bool,
    /// Estimate the initial wake width too, with this uniform prior.
    pub sigma0_prior: Option<(f64, f64)>,
    /// Upper limit on the number of samples used, taken evenly in time.
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            ensemble_size: 50,
            prior: (0.02, 0.12),
            bounds: (0.005, 0.5),
            observation_sd: 0.02,
            max_iterations: 50,
            tolerance: 1e-4,
            max_shrink: 4.0,
            min_samples: 50,
            tie: false,
            sigma0_prior: None,
            max_samples: 3000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataCounts {
    pub samples: usize,
    pub observations: usize,
    pub waked_observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: WakeParams,
    /// Loss of the ensemble mean: prior first, then after every update.
    pub loss_trace: Vec<f64>,
    pub ensemble_spread: Vec<f64>,
    /// Turbines whose spreading rate the data constrain, by layout index.
    pub identified: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    pub data_counts: DataCounts,
    pub seed: u64,
}

/// JSON report with `k_w`, `loss_trace`, `ensemble_spread`, `seed`,
/// `data_counts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub k_w: Vec<f64>,
    pub sigma0_over_d: f64,
    pub loss_trace: Vec<f64>,
    pub ensemble_spread: Vec<f64>,
    pub seed: u64,
    pub data_counts: DataCounts,
    pub converged: bool,
    pub identified_turbines: Vec<u32>,
}

impl CalibrationResult {
    pub fn report(&self, layout: &FarmLayout) -> CalibrationReport {
        CalibrationReport {
            k_w: self.params.k_w.clone(),
            sigma0_over_d: self.params.sigma0_over_d,
            loss_trace: self.loss_trace.clone(),
            ensemble_spread: self.ensemble_spread.clone(),
            seed: self.seed,
            data_counts: self.data_counts.clone(),
            converged: self.converged,
            identified_turbines: self.identified.iter().map(|&i| layout.turbines()[i].id).collect(),
        }
    }
}

struct Prepared {
    snapshots: Vec<FarmSnapshot>,
    /// (snapshot, observed turbine)
    obs_index: Vec<(usize, usize)>,
    observations: Vec<f64>,
    reference: usize,
}

impl Prepared {
    fn build(data: &CalibrationDataset, rotor: &impl RotorResponse, max_samples: usize) -> Result<Prepared> {
        data.validate()?;
        let reference = data.layout.reference_index().expect("validated");
        let refs = data.reference_indices();
        let stride = data.samples.len().div_ceil(max_samples.max(1)).max(1);
        let mut snapshots = Vec::new();
        let mut obs_index = Vec::new();
        let mut observations = Vec::new();
        for s in data.samples.iter().step_by(stride) {
            let obs: Vec<(usize, f64)> = s
                .normalized_power
                .iter()
                .enumerate()
                .filter(|(i, _)| !refs.contains(i))
                .filter_map(|(i, p)| p.map(|p| (i, p)))
                .collect();
            if obs.is_empty() {
                continue;
            }
            let snap = FarmSnapshot::new(&data.layout, &s.profile, s.condition.direction, &s.yaw, rotor)?;
            let k = snapshots.len();
            snapshots.push(snap);
            for (i, p) in obs {
                obs_index.push((k, i));
                observations.push(p);
            }
        }
        Ok(Prepared {
            snapshots,
            obs_index,
            observations,
            reference,
        })
    }

    fn predict(&self, params: &WakeParams) -> Vec<f64> {
        let solved: Vec<Vec<f64>> = self.snapshots.iter().map(|s| s.solve(params).power).collect();
        self.obs_index
            .iter()
            .map(|&(k, i)| {
                let p = &solved[k];
                p[i] / p[self.reference]
            })
            .collect()
    }
}

fn mse(pred: &[f64], obs: &[f64]) -> f64 {
    pred.iter().zip(obs).map(|(p, o)| (p - o).powi(2)).sum::<f64>() / obs.len() as f64
}

/// Mean squared mismatch over observations whose prediction depends on the
/// wake parameters.
pub fn loss(params: &WakeParams, data: &CalibrationDataset, rotor: &impl RotorResponse) -> Result<f64> {
    if data.samples.is_empty() {
        return Err(Error::EmptyData("calibration dataset".into()));
    }
    params.validate(data.layout.len())?;
    let prep = Prepared::build(data, rotor, usize::MAX)?;
    let base = WakeParams {
        k_w: vec![1e4; data.layout.len()],
        ..params.clone()
    };
    let free = prep.predict(&base);
    let pred = prep.predict(params);
    let waked: Vec<usize> = (0..pred.len()).filter(|&k| (free[k] - pred[k]).abs() > 1e-9).collect();
    if waked.is_empty() {
        return Err(Error::Unidentifiable);
    }
    let p: Vec<f64> = waked.iter().map(|&k| pred[k]).collect();
    let o: Vec<f64> = waked.iter().map(|&k| prep.observations[k]).collect();
    Ok(mse(&p, &o))
}

/// Maps an ensemble member onto full wake parameters.
struct ParamMap {
    n_turbines: usize,
    /// parameter slot for each turbine's k_w; `None` keeps the fallback
    slots: Vec<Option<usize>>,
    sigma0_slot: Option<usize>,
    template: WakeParams,
}

impl ParamMap {
    fn params(&self, theta: &[f64]) -> WakeParams {
        let kw: Vec<Option<f64>> = self.slots.iter().map(|s| s.map(|j| theta[j])).collect();
        let known: Vec<f64> = kw.iter().flatten().cloned().collect();
        let fallback = known.iter().sum::<f64>() / known.len().max(1) as f64;
        let mut p = self.template.clone();
        p.k_w = (0..self.n_turbines).map(|i| kw[i].unwrap_or(fallback)).collect();
        if let Some(j) = self.sigma0_slot {
            p.sigma0_over_d = theta[j];
        }
        p
    }
}

/// Calibrates wake spreading rates by iterated ensemble Kalman updates over
/// the whole batch.
///
/// Turbines whose wakes never reach an observed turbine are not identifiable
/// and take the mean of the identified rates.
pub fn calibrate(
    data: &CalibrationDataset,
    rotor: &impl RotorResponse,
    template: &WakeParams,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let n_t = data.layout.len();
    template.validate(n_t)?;
    if config.ensemble_size < MIN_ENSEMBLE_SIZE {
        return Err(invalid(format!("ensemble size must be at least {MIN_ENSEMBLE_SIZE}")));
    }
    if data.samples.is_empty() {
        return Err(Error::EmptyData("calibration dataset".into()));
    }
    let prep = Prepared::build(data, rotor, config.max_samples)?;
    let total_obs = prep.observations.len();

    // sensitivity of each observation to each turbine's spreading rate
    let (lo, hi) = config.prior;
    let base = WakeParams {
        k_w: vec![lo; n_t],
        ..template.clone()
    };
    let pred_lo = prep.predict(&base);
    let mut waked = vec![false; total_obs];
    let mut identified = Vec::new();
    for i in 0..n_t {
        let mut p = base.clone();
        p.k_w[i] = hi;
        let pred = prep.predict(&p);
        let mut any = false;
        for k in 0..total_obs {
            if (pred[k] - pred_lo[k]).abs() > 1e-6 {
                waked[k] = true;
                any = true;
            }
        }
        if any {
            identified.push(i);
        }
    }
    let waked_idx: Vec<usize> = (0..total_obs).filter(|&k| waked[k]).collect();
    if waked_idx.is_empty() {
        return Err(Error::Unidentifiable);
    }
    if waked_idx.len() < config.min_samples {
        return Err(Error::InsufficientData {
            needed: config.min_samples,
            found: waked_idx.len(),
        });
    }
    let counts = DataCounts {
        samples: prep.snapshots.len(),
        observations: total_obs,
        waked_observations: waked_idx.len(),
    };
    let obs: Vec<f64> = waked_idx.iter().map(|&k| prep.observations[k]).collect();

    let mut slots = vec![None; n_t];
    let mut dim = 0;
    if config.tie {
        for s in slots.iter_mut() {
            *s = Some(0);
        }
        dim = 1;
    } else {
        for &i in &identified {
            slots[i] = Some(dim);
            dim += 1;
        }
    }
    let mut prior = vec![config.prior; dim];
    let mut bounds = vec![config.bounds; dim];
    let sigma0_slot = config.sigma0_prior.map(|p| {
        prior.push(p);
        bounds.push((0.05, 1.0));
        dim
    });
    let map = ParamMap {
        n_turbines: n_t,
        slots,
        sigma0_slot,
        template: template.clone(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ens = Ensemble::uniform(&prior, bounds, config.ensemble_size, &mut rng)?;
    let eval = |theta: &[f64]| -> Vec<f64> {
        let full = prep.predict(&map.params(theta));
        waked_idx.iter().map(|&k| full[k]).collect()
    };
    let mut mean = ens.mean();
    let mut best = (mse(&eval(&mean), &obs), mean.clone());
    let mut trace = vec![best.0];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let preds: Vec<Vec<f64>> = ens.members.iter().map(|m| eval(m)).collect();
        let inflation = adaptive_inflation(&preds, config.observation_sd, config.max_shrink);
        ens = enkf_update(&ens, &preds, &obs, config.observation_sd * inflation.sqrt(), &mut rng)?;
        iterations += 1;
        let prev_mean = std::mem::replace(&mut mean, ens.mean());
        let l = mse(&eval(&mean), &obs);
        trace.push(l);
        if l < best.0 {
            best = (l, mean.clone());
        }
        let step = mean
            .iter()
            .zip(&prev_mean)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        if inflation <= 1.0 && step < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(CalibrationResult {
        params: map.params(&best.1),
        loss_trace: trace,
        ensemble_spread: ens.spread(),
        identified,
        converged,
        iterations,
        data_counts: counts,
        seed: config.seed,
    })
}
