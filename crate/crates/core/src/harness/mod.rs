//! Experiment driver: config in, `roc.csv`, `energy.csv` and
//! `manifest.txt` out.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::frontend::{measure, quantize_samples, remove_offset, Code};
use crate::matrices::{build_phi_kl, MatrixParams};
use crate::pipeline::{roc_sweep, ContextAwareReadout, FrameOutcome, RocCurve, SweepSettings};
use crate::power::{sweep_energy_savings, EnergyTable};
use crate::scene::{SceneConfig, TouchFrame};
use crate::seed::{derive_seed, stream_id};

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use output::{EnergyCsvRow, RocRow, ENERGY_HEADER, ROC_HEADER};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const ROC_KIND: u64 = 1;
const ENERGY_KIND: u64 = 2;

fn params_stream(kind: u64, p: &MatrixParams) -> u64 {
    stream_id(&[kind, p.m as u64, p.k as u64, p.l as u64, p.n_sensors as u64])
}

/// Random stream of the ROC sweep for one parameter set.
pub fn roc_stream(p: &MatrixParams) -> u64 {
    params_stream(ROC_KIND, p)
}

/// Random stream of the energy sweep for one parameter set.
pub fn energy_stream(p: &MatrixParams) -> u64 {
    params_stream(ENERGY_KIND, p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocSet {
    pub params: MatrixParams,
    pub curves: Vec<RocCurve>,
}

pub fn roc_rows(set: &RocSet, settings: &SweepSettings) -> Vec<RocRow> {
    let p = &set.params;
    set.curves
        .iter()
        .flat_map(|curve| {
            curve.points.iter().map(move |pt| RocRow {
                scheme: curve.scheme.name().to_string(),
                n_sensors: p.n_sensors,
                m: p.m,
                k: p.k,
                l: p.l,
                snr_tsp_db: settings.scene.snr_tsp_db,
                snr_ro_db: settings.snr_readout_db,
                vth: pt.vth,
                trials: pt.trials,
                tpr: pt.tpr,
                fpr: pt.fpr,
                precision: pt.precision,
                mean_measurements: pt.mean_measurements,
                seed: settings.master_seed,
            })
        })
        .collect()
}

pub fn energy_rows(table: &EnergyTable) -> Vec<EnergyCsvRow> {
    table
        .rows
        .iter()
        .map(|r| EnergyCsvRow {
            n_sensors: r.params.n_sensors,
            m: r.params.m,
            k: r.params.k,
            l: r.params.l,
            sampling_ratio: r.sampling_ratio(),
            vth_op: r.vth_op,
            recall: r.recall,
            fpr: r.fpr,
            p_conv_mw: r.report.p_conventional_mw,
            p_prop_mw: r.report.p_proposed_mw,
            saving: r.report.saving_ratio,
        })
        .collect()
}

/// ROC sweeps for every parameter set of the config.
pub fn run_roc(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<RocSet>> {
    cfg.param_sets()
        .into_iter()
        .map(|params| {
            Ok(RocSet {
                params,
                curves: roc_sweep(&params, &cfg.sweep, roc_stream(&params), exec)?,
            })
        })
        .collect()
}

pub fn run_energy(cfg: &ExperimentConfig, exec: Execution) -> Result<EnergyTable> {
    sweep_energy_savings(
        &cfg.param_sets(),
        &cfg.energy_sweep(),
        &cfg.power,
        cfg.energy_postprocess,
        energy_stream,
        exec,
    )
}

pub fn roc_csv(sets: &[RocSet], settings: &SweepSettings) -> String {
    output::render(
        ROC_HEADER,
        sets.iter()
            .flat_map(|s| roc_rows(s, settings))
            .map(|r| r.to_line()),
    )
}

pub fn energy_csv(table: &EnergyTable) -> String {
    output::render(
        ENERGY_HEADER,
        energy_rows(table).into_iter().map(|r| r.to_line()),
    )
}

/// Resolved config, seed and tool version. Independent of thread count.
pub fn manifest(cfg: &ExperimentConfig, energy: Option<&EnergyTable>) -> String {
    let mut out = format!(
        "# touchroi {VERSION}\ntool.version = {VERSION}\nseed = {}\n",
        cfg.sweep.master_seed
    );
    for p in cfg.param_sets() {
        out.push_str(&format!(
            "# params m={} k={} l={} N={} sampling_ratio={}\n",
            p.m,
            p.k,
            p.l,
            p.n_sensors,
            p.sampling_ratio()
        ));
    }
    if let Some(table) = energy {
        for p in &table.unmet {
            out.push_str(&format!(
                "# recall floor unmet: m={} k={} l={} N={}\n",
                p.m, p.k, p.l, p.n_sensors
            ));
        }
    }
    out.push_str(&cfg.to_text());
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub roc: Vec<RocSet>,
    pub energy: EnergyTable,
    pub roc_csv: String,
    pub energy_csv: String,
    pub manifest: String,
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<RunSummary> {
    let roc = run_roc(cfg, exec)?;
    let energy = run_energy(cfg, exec)?;
    Ok(RunSummary {
        roc_csv: roc_csv(&roc, &cfg.sweep),
        energy_csv: energy_csv(&energy),
        manifest: manifest(cfg, Some(&energy)),
        roc,
        energy,
    })
}

/// Writes `name` under `dir`, creating the directory.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn write_summary(summary: &RunSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write_file(dir, "roc.csv", &summary.roc_csv)?,
        write_file(dir, "energy.csv", &summary.energy_csv)?,
        write_file(dir, "manifest.txt", &summary.manifest)?,
    ])
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_config(&text)?)
}

/// Every intermediate of one context-aware frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTrace {
    pub params: MatrixParams,
    pub frame: TouchFrame,
    /// Sensor values after panel noise.
    pub sensed: Vec<f64>,
    /// Detection samples after offset removal.
    pub samples: Vec<f64>,
    pub codes: Vec<Code>,
    pub outcome: FrameOutcome,
}

/// One frame with the given active chunks, traced end to end.
pub fn trace_frame(
    params: &MatrixParams,
    scene: &SceneConfig,
    active: &[usize],
    snr_readout_db: f64,
    vth: f64,
    detector: Detector,
    seed: u64,
) -> Result<FrameTrace> {
    let (matrix, chunks) = build_phi_kl(params)?;
    if let Some(&c) = active.iter().find(|&&c| c >= chunks.n_chunks()) {
        return Err(Error::InvalidParams(format!(
            "chunk {c} out of range (n = {})",
            chunks.n_chunks()
        )));
    }
    let frame = TouchFrame::with_active_chunks(&chunks, active, scene.amplitude, scene.dc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensed = scene.apply_tsp_noise(&frame, &mut rng);
    let observed = frame.with_values(sensed.clone());

    // The readout replays the same stream, so its detection matches the
    // samples reported here.
    let readout_seed = derive_seed(seed, 1, 0);
    let mut probe = ChaCha8Rng::seed_from_u64(readout_seed);
    let mut samples = measure(&matrix, &sensed, snr_readout_db, &mut probe)?.samples;
    remove_offset(&mut samples, &matrix.row_sums(), frame.dc);
    let codes = quantize_samples(&samples, vth)?.codes;

    let readout = ContextAwareReadout::new(&matrix, &chunks, *params, detector)?;
    let mut rng = ChaCha8Rng::seed_from_u64(readout_seed);
    let outcome = readout.run_frame(&observed, snr_readout_db, vth, &mut rng)?;
    Ok(FrameTrace {
        params: *params,
        frame,
        sensed,
        samples,
        codes,
        outcome,
    })
}
