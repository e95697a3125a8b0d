use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use wakesteer::analysis::{
    assemble_minutes, calibration_dataset, gain_table, predicted_gain, write_direction_csv, BootstrapConfig, EnergySpec,
    GainTableEntry,
};
use wakesteer::calibration::{calibrate, CalibrationConfig, CalibrationReport};
use wakesteer::farm::{BinGrid, FarmLayout, WindCondition};
use wakesteer::optimizer::{build_lookup_table, optimize_yaw, LookupTable, TableSpec};
use wakesteer::rotor::{BladeGeometry, RotorModel, TabulatedRotor};
use wakesteer::synthetic::{
    read_scada, simulate, write_scada, ControlMode, ScadaRecord, SimulationConfig, ToggleSchedule, TrueFarm,
    WindInput,
};
use wakesteer::wake::WakeParams;
use wakesteer::Error;

use crate::config::{ControlKind, Loaded};

/// Missing inputs and unusable data; reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

fn layout(run: &Loaded) -> Result<FarmLayout> {
    match &run.config.farm.layout {
        Some(p) => {
            let path = run.input(&Some(p.clone()), "");
            FarmLayout::load(&path).with_context(|| format!("reading layout {}", path.display()))
        }
        None => Ok(FarmLayout::reference_site()),
    }
}

fn rotor(run: &Loaded, layout: &FarmLayout) -> Result<TabulatedRotor> {
    let farm = &run.config.farm;
    let first = layout
        .turbines()
        .first()
        .ok_or_else(|| DataError("layout has no turbines".into()))?;
    let model = match &farm.blade {
        Some(p) => {
            let path = run.input(&Some(p.clone()), "");
            let geometry = BladeGeometry::load(&path, farm.blade_count, farm.hub_radius_m)
                .with_context(|| format!("reading blade {}", path.display()))?;
            RotorModel::new(geometry)
        }
        None => RotorModel::generic_for(first),
    };
    Ok(TabulatedRotor::build(&model, layout.turbines(), &farm.shape, farm.max_yaw_deg, farm.yaw_step_deg)?)
}

fn read_records(path: &Path) -> Result<Vec<ScadaRecord>> {
    let file = File::open(path).map_err(|e| DataError(format!("cannot open {}: {e}", path.display())))?;
    read_scada(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_stamped(path: &Path, run: &Loaded, extra: &[String], body: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    for line in run.stamp().iter().chain(extra) {
        writeln!(w, "# {line}")?;
    }
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub config_hash: String,
    pub seed: u64,
    pub report: CalibrationReport,
}

fn load_calibration(path: &Path, layout: &FarmLayout) -> Result<(CalibrationArtifact, WakeParams)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DataError(format!("calibration report {} unavailable: {e}", path.display())))?;
    let art: CalibrationArtifact =
        serde_json::from_str(&text).map_err(|e| DataError(format!("malformed calibration report {}: {e}", path.display())))?;
    if art.report.k_w.len() != layout.len() {
        return Err(DataError(format!(
            "calibration report has {} spreading rates for {} turbines",
            art.report.k_w.len(),
            layout.len()
        ))
        .into());
    }
    let mut params = WakeParams::uniform(layout.len(), 0.05);
    params.k_w = art.report.k_w.clone();
    params.sigma0_over_d = art.report.sigma0_over_d;
    Ok((art, params))
}

pub fn cmd_simulate(run: &Loaded) -> Result<()> {
    let cfg = &run.config.simulate;
    let layout = layout(run)?;
    let rotor = rotor(run, &layout)?;
    let control = match cfg.control {
        ControlKind::Baseline => ControlMode::Baseline,
        ControlKind::Fixed => ControlMode::fixed_staircase(cfg.fixed_turbine),
        ControlKind::Table => {
            let path = run.input(&cfg.table, "lut.csv");
            let file = File::open(&path).map_err(|e| DataError(format!("lookup table {} unavailable: {e}", path.display())))?;
            let table = LookupTable::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
            ControlMode::Lookup { table }
        }
    };
    let params = WakeParams::uniform(layout.len(), cfg.true_k_w);
    let sim = SimulationConfig {
        duration_minutes: cfg.duration_minutes,
        wind: WindInput::Process(cfg.wind.clone()),
        shape: run.config.farm.shape.clone(),
        noise: cfg.noise,
        controller: cfg.controller,
        schedule: ToggleSchedule {
            period_minutes: cfg.toggle_period_minutes,
            ..ToggleSchedule::default()
        },
        seed: run.config.seed,
        ..SimulationConfig::default()
    };
    let truth = TrueFarm {
        layout: &layout,
        params: &params,
        rotor: &rotor,
    };
    let records = simulate(&truth, &control, &sim)?;
    let mut comments = run.stamp();
    comments.push(format!(
        "controller deadband={} max_step={} (assumed)",
        cfg.controller.deadband, cfg.controller.max_step
    ));
    let out = run.output(&cfg.output);
    let mut w = create(&out)?;
    write_scada(&mut w, &records, &comments)?;
    w.flush()?;
    eprintln!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

pub fn cmd_calibrate(run: &Loaded) -> Result<()> {
    let cfg = &run.config.calibrate;
    let layout = layout(run)?;
    let records = read_records(&run.input(&cfg.scada, "scada.csv"))?;
    if records.is_empty() {
        return Err(Error::EmptyData("SCADA input has no records".into()).into());
    }
    let rotor = rotor(run, &layout)?;
    let minutes = assemble_minutes(&records, &layout)?;
    let data = calibration_dataset(&minutes, &layout, &run.config.farm.shape, cfg.speed_range, cfg.ti_max)?;
    let template = WakeParams::uniform(layout.len(), 0.05);
    let config = CalibrationConfig {
        seed: run.config.seed,
        ..cfg.settings.clone()
    };
    let result = calibrate(&data, &rotor, &template, &config)?;
    let art = CalibrationArtifact {
        config_hash: run.hash.clone(),
        seed: run.config.seed,
        report: result.report(&layout),
    };
    let out = run.output("calibration.json");
    write_json(&out, &art)?;
    eprintln!("k_w = {:?}, wrote {}", art.report.k_w, out.display());
    Ok(())
}

pub fn cmd_table(run: &Loaded) -> Result<()> {
    let cfg = &run.config.table;
    let layout = layout(run)?;
    let (art, params) = load_calibration(&run.input(&cfg.calibration, "calibration.json"), &layout)?;
    let rotor = rotor(run, &layout)?;
    let grid = BinGrid::lookup_default();
    let spec = TableSpec {
        grid: &grid,
        layout: &layout,
        shape: &run.config.farm.shape,
        active_window: cfg.active_window,
        config: &cfg.optimizer,
        calibration_id: art.config_hash.clone(),
    };
    let table = build_lookup_table(&spec, |_| params.clone(), &rotor)?;
    let mut body = Vec::new();
    table.write_csv(&mut body)?;
    let extra = vec![
        format!("calibration_id={}", table.metadata.calibration_id),
        format!("active_window={:?}", table.metadata.active_window),
        format!("failed_bins={}", table.metadata.failed_bins.len()),
    ];
    write_stamped(&run.output("lut.csv"), run, &extra, &body)?;

    // direction slice at one speed and TI for plotting
    let mut slice = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut slice);
        let mut header = vec!["direction_deg".to_string()];
        header.extend(table.turbine_ids.iter().map(|id| format!("yaw_t{id}_deg")));
        w.write_record(&header)?;
        for k in 0..grid.direction.count {
            let dir = grid.direction.center(k);
            let c = WindCondition::new(cfg.slice_speed, dir, cfg.slice_ti)?;
            let key = grid.key_of(&c)?;
            let mut row = vec![dir.to_string()];
            row.extend(table.entry(key).iter().map(|y| y.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    write_stamped(&run.output("lut_slice.csv"), run, &[], &slice)?;
    eprintln!("wrote {} bins to {}", table.len(), run.output("lut.csv").display());
    Ok(())
}

pub fn cmd_optimize(run: &Loaded) -> Result<()> {
    let cfg = &run.config.optimize;
    let layout = layout(run)?;
    let (_, params) = load_calibration(&run.input(&cfg.calibration, "calibration.json"), &layout)?;
    let rotor = rotor(run, &layout)?;
    let hub = layout.turbines()[0].hub_height;
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["direction_deg".to_string()];
        header.extend(layout.turbines().iter().map(|t| format!("yaw_t{}_deg", t.id)));
        header.push("baseline_power_w".into());
        header.push("optimized_power_w".into());
        w.write_record(&header)?;
        for &dir in &cfg.directions {
            let c = WindCondition::new(cfg.speed, dir, cfg.ti)?;
            let profile = run.config.farm.shape.profile(cfg.speed, dir, hub)?;
            let r = optimize_yaw(&c, &params, &layout, &profile, &rotor, &cfg.optimizer)?;
            let mut row = vec![dir.to_string()];
            row.extend(r.strategy.yaw.iter().map(|y| y.to_string()));
            row.push(r.baseline_power.to_string());
            row.push(r.total_power.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let path = run.output("optimize.csv");
    write_stamped(&path, run, &[], &out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct AnalysisArtifact {
    config_hash: String,
    seed: u64,
    records: usize,
    minutes: usize,
    gains: Vec<GainRow>,
}

#[derive(Debug, Clone, Serialize)]
struct GainRow {
    #[serde(flatten)]
    entry: GainTableEntry,
    predicted_gain: Option<f64>,
}

pub fn cmd_analyze(run: &Loaded) -> Result<()> {
    let cfg = &run.config.analyze;
    let layout = layout(run)?;
    let records = read_records(&run.input(&cfg.scada, "scada.csv"))?;
    if records.is_empty() {
        return Err(Error::EmptyData("SCADA input has no records".into()).into());
    }
    let minutes = assemble_minutes(&records, &layout)?;
    let schedule = ToggleSchedule {
        period_minutes: cfg.toggle_period_minutes,
        ..ToggleSchedule::default()
    };
    let bootstrap = BootstrapConfig {
        resamples: cfg.resamples,
        seed: run.config.seed,
        block: cfg.block_minutes,
        ..BootstrapConfig::default()
    };
    let (entries, analyses) = gain_table(&minutes, &layout, &schedule, &bootstrap);
    let model = match &cfg.calibration {
        Some(p) => {
            let (_, params) = load_calibration(&run.input(&Some(p.clone()), ""), &layout)?;
            Some((params, rotor(run, &layout)?))
        }
        None => None,
    };
    let mut gains = Vec::new();
    for entry in entries {
        let predicted = match (&model, analyses.iter().find(|a| a.sector == entry.sector && a.speed_range == entry.speed_range)) {
            (Some((params, rotor)), Some(a)) => {
                let spec = EnergySpec::new(entry.sector, entry.speed_range);
                Some(predicted_gain(&minutes, &layout, &schedule, &spec, a, params, &run.config.farm.shape, rotor)?)
            }
            _ => None,
        };
        gains.push(GainRow {
            entry,
            predicted_gain: predicted,
        });
    }
    let art = AnalysisArtifact {
        config_hash: run.hash.clone(),
        seed: run.config.seed,
        records: records.len(),
        minutes: minutes.len(),
        gains,
    };
    write_json(&run.output("analysis.json"), &art)?;
    let mut body = Vec::new();
    write_direction_csv(&mut body, &analyses)?;
    write_stamped(&run.output("directions.csv"), run, &[], &body)?;
    for g in &art.gains {
        match (g.entry.gain, g.entry.ci) {
            (Some(v), Some(ci)) => eprintln!(
                "sector {:?} speed {:?}: gain {:.4} [{:.4}, {:.4}]",
                g.entry.sector, g.entry.speed_range, v, ci.0, ci.1
            ),
            _ => eprintln!(
                "sector {:?} speed {:?}: {}",
                g.entry.sector,
                g.entry.speed_range,
                g.entry.error.as_deref().unwrap_or("no result")
            ),
        }
    }
    Ok(())
}
