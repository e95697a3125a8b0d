//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wakesteer::analysis::{
    assemble_minutes, bootstrap_ci, calibration_dataset, conditional_power_ratio, energy_analysis, energy_ratio,
    predicted_gain, ratio_gain, sector_gain, switched_weights, BootstrapConfig, EnergySpec,
};
use wakesteer::calibration::{calibrate, enkf_update, CalibrationConfig, Ensemble};
use wakesteer::farm::{BinGrid, FarmLayout, ProfileShape, WindCondition};
use wakesteer::optimizer::{
    build_lookup_table, optimize_yaw, FarmObjective, OptimizerConfig, TableSpec, DEFAULT_ACTIVE_WINDOW,
};
use wakesteer::rotor::{power_cosine, BladeElementConfig, RotorModel, TabulatedRotor};
use wakesteer::synthetic::{simulate, ControlMode, NoiseModel, SimulationConfig, TrueFarm};
use wakesteer::wake::{FarmSnapshot, WakeParams};

const TRUE_K_W: f64 = 0.03;

struct Bench {
    layout: FarmLayout,
    shape: ProfileShape,
    rotor: TabulatedRotor,
    truth: WakeParams,
}

impl Bench {
    fn new() -> Bench {
        let layout = FarmLayout::reference_site();
        let shape = ProfileShape::default();
        let model = RotorModel::generic_for(&layout.turbines()[0]);
        let rotor = TabulatedRotor::build(&model, layout.turbines(), &shape, 90.0, 0.25).unwrap();
        let truth = WakeParams::uniform(layout.len(), TRUE_K_W);
        Bench {
            layout,
            shape,
            rotor,
            truth,
        }
    }

    fn simulate(&self, control: &ControlMode, config: &SimulationConfig) -> Vec<wakesteer::synthetic::ScadaRecord> {
        let truth = TrueFarm {
            layout: &self.layout,
            params: &self.truth,
            rotor: &self.rotor,
        };
        simulate(&truth, control, config).unwrap()
    }

    fn calibrate_from(&self, days: usize, seed: u64, noise: NoiseModel) -> f64 {
        let sim = SimulationConfig {
            duration_minutes: days * 1440,
            noise,
            seed,
            ..SimulationConfig::default()
        };
        let records = self.simulate(&ControlMode::Baseline, &sim);
        let minutes = assemble_minutes(&records, &self.layout).unwrap();
        let data = calibration_dataset(&minutes, &self.layout, &self.shape, (4.0, 12.0), 0.2).unwrap();
        let config = CalibrationConfig {
            tie: true,
            ensemble_size: 25,
            max_samples: 800,
            seed,
            ..CalibrationConfig::default()
        };
        let template = WakeParams::uniform(self.layout.len(), 0.05);
        calibrate(&data, &self.rotor, &template, &config).unwrap().params.k_w[0]
    }

    fn params(&self, k_w: f64) -> WakeParams {
        WakeParams::uniform(self.layout.len(), k_w)
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn closed_loop_recovery(bench: &Bench, calibrated: &mut f64) -> Outcome {
    let start = Instant::now();
    let mut noisy = Vec::new();
    let mut clean = Vec::new();
    for seed in 0..20u64 {
        let k = bench.calibrate_from(7, seed, NoiseModel::default());
        if seed == 0 {
            *calibrated = k;
        }
        noisy.push((k - TRUE_K_W).abs() / TRUE_K_W);
        clean.push((bench.calibrate_from(7, 100 + seed, NoiseModel::none()) - TRUE_K_W).abs() / TRUE_K_W);
    }
    let (mn, mc) = (median(noisy), median(clean));
    let elapsed = start.elapsed();
    Outcome {
        pass: mn < 0.10 && mc < 0.02 && elapsed < Duration::from_secs(300),
        detail: format!(
            "median relative error {:.2}% noisy, {:.3}% noiseless over 20 seeds in {:.0?}",
            100.0 * mn,
            100.0 * mc,
            elapsed
        ),
    }
}

fn three_turbines(bench: &Bench) -> FarmLayout {
    bench.layout.subset(&[1, 2, 3]).unwrap()
}

fn optimality_fidelity(bench: &Bench, k_w: f64) -> Outcome {
    let start = Instant::now();
    let layout = three_turbines(bench);
    let params = WakeParams::uniform(3, k_w);
    let config = OptimizerConfig::default();
    let mut worst: f64 = 0.0;
    let mut bins = 0;
    for k in 0..6 {
        let dir = -10.0 + 2.5 * k as f64;
        let c = WindCondition::new(7.0, dir, 0.06).unwrap();
        let profile = bench.shape.profile(7.0, dir, 100.0).unwrap();
        let opt = optimize_yaw(&c, &params, &layout, &profile, &bench.rotor, &config).unwrap();
        let obj = FarmObjective::new(&layout, &profile, dir, &params, &bench.rotor).unwrap();
        let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
        for g1 in -25..=25 {
            for g2 in -25..=25 {
                let yaw = [g1 as f64, g2 as f64, 0.0];
                let p = obj.total(&yaw).unwrap();
                if p > best.0 {
                    best = (p, [yaw[0], yaw[1]]);
                }
            }
        }
        let dev = (opt.strategy.yaw[0] - best.1[0]).abs().max((opt.strategy.yaw[1] - best.1[1]).abs());
        worst = worst.max(dev);
        if dev <= 5.0 {
            bins += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: bins == 6 && elapsed < Duration::from_secs(600),
        detail: format!("{bins}/6 direction bins within 5 deg of the 1 deg grid optimum (worst {worst:.2} deg) in {elapsed:.0?}"),
    }
}

fn directional_asymmetry(bench: &Bench, k_w: f64) -> Outcome {
    let layout = three_turbines(bench);
    let params = WakeParams::uniform(3, k_w);
    let profile = bench.shape.profile(7.0, 0.0, 100.0).unwrap();
    let solve = |g: f64| {
        FarmSnapshot::new(&layout, &profile, 0.0, &[g, 0.0, 0.0], &bench.rotor)
            .unwrap()
            .solve(&params)
    };
    let base = solve(0.0);
    let plus = solve(20.0).total() / base.total() - 1.0;
    let minus = solve(-20.0).total() / base.total() - 1.0;
    let (r2, r3) = (base.power[1] / base.power[0], base.power[2] / base.power[0]);
    Outcome {
        pass: plus > 0.10 && minus < 0.0,
        detail: format!(
            "baseline T2/T1 {r2:.2}, T3/T1 {r3:.2}; array change {:+.1}% at +20 deg, {:+.1}% at -20 deg",
            100.0 * plus,
            100.0 * minus
        ),
    }
}

fn end_to_end_gain(bench: &Bench, k_w: f64) -> Outcome {
    let start = Instant::now();
    let params = bench.params(k_w);
    let grid = BinGrid::lookup_default();
    let config = OptimizerConfig::default();
    let spec = TableSpec {
        grid: &grid,
        layout: &bench.layout,
        shape: &bench.shape,
        active_window: DEFAULT_ACTIVE_WINDOW,
        config: &config,
        calibration_id: "acceptance".into(),
    };
    let table = build_lookup_table(&spec, |_| params.clone(), &bench.rotor).unwrap();
    let sim = SimulationConfig {
        duration_minutes: 90 * 1440,
        seed: 2024,
        ..SimulationConfig::default()
    };
    let records = bench.simulate(&ControlMode::Lookup { table }, &sim);
    let minutes = assemble_minutes(&records, &bench.layout).unwrap();
    let es = EnergySpec::new((-20.0, 15.0), (6.0, 8.0));
    let a = energy_analysis(&minutes, &bench.layout, &sim.schedule, &es, &BootstrapConfig::default()).unwrap();
    let predicted = predicted_gain(&minutes, &bench.layout, &sim.schedule, &es, &a, &params, &bench.shape, &bench.rotor).unwrap();
    let hidden = predicted_gain(&minutes, &bench.layout, &sim.schedule, &es, &a, &bench.truth, &bench.shape, &bench.rotor).unwrap();
    let elapsed = start.elapsed();
    Outcome {
        pass: a.gain > 1.0 && a.ci.0 > 1.0 && a.ci.0 <= predicted && predicted <= a.ci.1 && elapsed < Duration::from_secs(900),
        detail: format!(
            "sector gain {:+.2}% CI [{:+.2}%, {:+.2}%], calibrated model prediction {:+.2}% (hidden model {:+.2}%) in {elapsed:.0?}",
            100.0 * (a.gain - 1.0),
            100.0 * (a.ci.0 - 1.0),
            100.0 * (a.ci.1 - 1.0),
            100.0 * (predicted - 1.0),
            100.0 * (hidden - 1.0)
        ),
    }
}

fn null_experiment(bench: &Bench) -> Outcome {
    let start = Instant::now();
    let es = EnergySpec::new((-20.0, 15.0), (6.0, 8.0));
    let mut covered = 0;
    for seed in 0..100u64 {
        let sim = SimulationConfig {
            duration_minutes: 90 * 1440,
            seed: 5000 + seed,
            ..SimulationConfig::default()
        };
        let records = bench.simulate(&ControlMode::Baseline, &sim);
        let minutes = assemble_minutes(&records, &bench.layout).unwrap();
        let boot = BootstrapConfig {
            seed,
            ..BootstrapConfig::default()
        };
        if let Ok(a) = energy_analysis(&minutes, &bench.layout, &sim.schedule, &es, &boot) {
            if a.ci.0 <= 1.0 && 1.0 <= a.ci.1 {
                covered += 1;
            }
        }
    }
    Outcome {
        pass: covered >= 93,
        detail: format!("{covered}/100 baseline-vs-baseline intervals contain 1 in {:.0?}", start.elapsed()),
    }
}

fn enkf_toy() -> Outcome {
    let (m0, s0, h, r, y) = (1.0, 0.8, 2.0, 0.5, 3.1);
    let k = s0 * s0 * h / (h * h * s0 * s0 + r * r);
    let post_mean = m0 + k * (y - h * m0);
    let post_var = (1.0 - k * h) * s0 * s0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ens = Ensemble::gaussian(&[m0], &[s0], 1000, &mut rng).unwrap();
    let preds: Vec<Vec<f64>> = ens.members.iter().map(|m| vec![h * m[0]]).collect();
    let out = enkf_update(&ens, &preds, &[y], r, &mut rng).unwrap();
    let mean = out.mean()[0];
    let var = out.spread()[0].powi(2);
    let (em, ev) = ((mean - post_mean).abs() / post_mean, (var - post_var).abs() / post_var);
    Outcome {
        pass: em < 0.05 && ev < 0.05,
        detail: format!("posterior mean off by {:.2}%, variance by {:.2}%", 100.0 * em, 100.0 * ev),
    }
}

fn numerical_hygiene(bench: &Bench) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let params = bench.truth.clone();
    let mut worst_fd: f64 = 0.0;
    for _ in 0..20 {
        let dir = rng.random_range(-20.0..15.0);
        let speed = rng.random_range(5.0..8.0);
        let profile = bench.shape.profile(speed, dir, 100.0).unwrap();
        let obj = FarmObjective::new(&bench.layout, &profile, dir, &params, &bench.rotor).unwrap();
        let yaw: Vec<f64> = (0..bench.layout.len())
            .map(|i| if i < 2 { rng.random_range(-20.0..20.0) } else { 0.0 })
            .collect();
        let free = [0usize, 1, 2];
        let coarse = obj.gradient(&yaw, &free, 0.5).unwrap();
        let fine = obj.gradient(&yaw, &free, 0.05).unwrap();
        let scale = fine.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-9);
        for (a, b) in coarse.iter().zip(&fine) {
            worst_fd = worst_fd.max((a - b).abs() / scale);
        }
    }
    let t = &bench.layout.turbines()[0];
    let profile = bench.shape.profile(8.0, 0.0, t.hub_height).unwrap();
    let model = RotorModel::generic_for(t);
    let base = model.config.clone();
    let doubled = BladeElementConfig {
        radial_stations: 2 * base.radial_stations,
        azimuthal_stations: 2 * base.azimuthal_stations,
        ..base.clone()
    };
    let mut worst_quad: f64 = 0.0;
    for yaw in [0.0, 20.0] {
        let a = model.blade_element(t, &profile, yaw).unwrap().power;
        let fine = RotorModel {
            config: doubled.clone(),
            ..model.clone()
        };
        let b = fine.blade_element(t, &profile, yaw).unwrap().power;
        worst_quad = worst_quad.max((a - b).abs() / b);
    }
    let cos_ratio = power_cosine(1.0, 20.0, 3.0);
    Outcome {
        pass: worst_fd < 0.01 && worst_quad < 1e-3 && (cos_ratio - 0.8298).abs() <= 1e-4,
        detail: format!(
            "gradient step refinement {:.3}%, quadrature doubling {:.4}%, cos^3(20 deg) {:.5}",
            100.0 * worst_fd,
            100.0 * worst_quad,
            cos_ratio
        ),
    }
}

fn statistics_oracles() -> Outcome {
    let er = energy_ratio(&[1.0, 2.0], &[2.0, 2.0], &switched_weights(&[5, 5])).unwrap();
    let g = sector_gain(&[1.02, 1.00], &[1.0, 1.0], &[10, 10]).unwrap().gain;
    let r = ratio_gain(1.05, 1.00).unwrap();
    let exact = er == 0.75 && (g - 1.01).abs() < 1e-15 && r == 1.05;

    let normal = Normal::new(2.0, 0.5).unwrap();
    let mut covered = 0;
    for trial in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        // reference turbine at 1, test turbine power ~ N(2, 0.5)
        let samples: Vec<Vec<f64>> = (0..200).map(|_| vec![normal.sample(&mut rng), 1.0]).collect();
        let stats = conditional_power_ratio(
            &samples,
            1,
            &BootstrapConfig {
                seed: trial,
                ..BootstrapConfig::default()
            },
        )
        .unwrap();
        let ci = stats.ci[0];
        if ci.0 <= 2.0 && 2.0 <= ci.1 {
            covered += 1;
        }
    }
    let constant = bootstrap_ci(&[vec![0, 1, 2]], |_| Some(4.0), &BootstrapConfig::default()).unwrap();
    Outcome {
        pass: exact && covered >= 465 && constant == (4.0, 4.0),
        detail: format!(
            "E_r {er}, G_r {g:.4}, R {r}; bootstrap coverage {covered}/500 ({:.1}%)",
            covered as f64 / 5.0
        ),
    }
}

fn main() {
    let total = Instant::now();
    let bench = Bench::new();
    let mut calibrated = TRUE_K_W;
    let mut results = Vec::new();
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("criterion {n} {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push(o.pass);
    };
    report(1, "closed-loop recovery", closed_loop_recovery(&bench, &mut calibrated));
    report(2, "optimality fidelity", optimality_fidelity(&bench, calibrated));
    report(3, "directional asymmetry", directional_asymmetry(&bench, calibrated));
    report(4, "end-to-end gain", end_to_end_gain(&bench, calibrated));
    report(5, "null experiment", null_experiment(&bench));
    report(6, "ensemble Kalman toy", enkf_toy());
    report(7, "numerical hygiene", numerical_hygiene(&bench));
    report(8, "statistics oracles", statistics_oracles());
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed in {:.0?}", results.len(), total.elapsed());
    if passed != results.len() {
        std::process::exit(1);
    }
}
