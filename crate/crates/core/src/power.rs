//! Readout power for conventional full-panel scanning versus context-aware
//! operation, and the resulting energy-saving ratio.
//!
//! Analog power is taken to scale with the number of measurements taken per
//! frame: the detection phase pays for its `m` samples (optionally
//! discounted by `detection_power_factor`), the re-read pays per flagged
//! sensor, and the always-on digital detector adds a fixed overhead.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrices::MatrixParams;
use crate::pipeline::{roc_sweep, ReadoutScheme, RocPoint, SweepSettings};

/// Recall below which no saving is reported.
pub const MIN_RECALL: f64 = 0.9;

/// Maximum panel frame rate the detector is clocked for.
pub const MAX_FRAME_RATE_HZ: f64 = 200.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConventionalScheme {
    Tdm,
    Cdm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerModel {
    /// mW per channel at `f_ref_hz`.
    pub p_driver_mw: f64,
    pub p_amp_mw: f64,
    pub p_adc_mw: f64,
    pub f_ref_hz: f64,
    pub f_frame_hz: f64,
    /// Whole-detector digital power, mW.
    pub p_detector_mw: f64,
    /// Driver power scale for CDM, whose drivers toggle for the whole
    /// sensing period.
    pub cdm_driver_multiplier: f64,
    /// Fraction of per-measurement analog power spent by the coarse
    /// detection front end, in `(0, 1]`.
    pub detection_power_factor: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            p_driver_mw: 0.3,
            p_amp_mw: 0.2,
            p_adc_mw: 0.4,
            f_ref_hz: 120.0,
            f_frame_hz: 120.0,
            p_detector_mw: 0.01,
            cdm_driver_multiplier: 1.0,
            detection_power_factor: 1.0,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("p_driver_mw", self.p_driver_mw),
            ("p_amp_mw", self.p_amp_mw),
            ("p_adc_mw", self.p_adc_mw),
            ("p_detector_mw", self.p_detector_mw),
            ("cdm_driver_multiplier", self.cdm_driver_multiplier),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if !(self.f_frame_hz > 0.0 && self.f_frame_hz <= MAX_FRAME_RATE_HZ) {
            return Err(Error::InvalidParams(format!(
                "frame rate {} Hz outside (0, {MAX_FRAME_RATE_HZ}]",
                self.f_frame_hz
            )));
        }
        if !(self.f_ref_hz > 0.0 && self.f_ref_hz.is_finite()) {
            return Err(Error::InvalidParams(
                "reference frame rate must be positive".into(),
            ));
        }
        if !(self.detection_power_factor > 0.0 && self.detection_power_factor <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "detection_power_factor {} outside (0, 1]",
                self.detection_power_factor
            )));
        }
        Ok(())
    }

    fn rate_scale(&self) -> f64 {
        self.f_frame_hz / self.f_ref_hz
    }

    /// Full-panel readout, every channel every frame.
    pub fn conventional_power(&self, n_channels: usize, scheme: ConventionalScheme) -> f64 {
        let driver = match scheme {
            ConventionalScheme::Tdm => self.p_driver_mw,
            ConventionalScheme::Cdm => self.p_driver_mw * self.cdm_driver_multiplier,
        };
        n_channels as f64 * (driver + self.p_amp_mw + self.p_adc_mw) * self.rate_scale()
    }

    /// Context-aware readout for the given per-frame measurement count.
    pub fn proposed_power(&self, stats: &ProposedStats) -> f64 {
        let discount = (1.0 - self.detection_power_factor) * stats.detection_measurements;
        let effective = (stats.mean_measurements_per_frame - discount).max(0.0);
        self.p_detector_mw
            + effective / stats.n_sensors as f64
                * self.conventional_power(stats.n_sensors, ConventionalScheme::Tdm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProposedStats {
    pub n_sensors: usize,
    /// `m`, the detection-phase sample count.
    pub detection_measurements: f64,
    /// Detection plus re-read samples, averaged over frames.
    pub mean_measurements_per_frame: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConventionalStats {
    pub scheme: ConventionalScheme,
    pub n_channels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    pub p_conventional_mw: f64,
    pub p_proposed_mw: f64,
    pub saving_ratio: f64,
    pub recall: f64,
}

pub fn energy_saving(
    pm: &PowerModel,
    conv: &ConventionalStats,
    prop: &ProposedStats,
    recall: f64,
) -> Result<EnergyReport> {
    if recall.is_nan() || recall < MIN_RECALL {
        return Err(Error::RecallConstraintUnmet {
            required: MIN_RECALL,
            best: recall,
        });
    }
    let p_conventional_mw = pm.conventional_power(conv.n_channels, conv.scheme);
    let p_proposed_mw = pm.proposed_power(prop);
    Ok(EnergyReport {
        p_conventional_mw,
        p_proposed_mw,
        saving_ratio: p_conventional_mw / p_proposed_mw,
        recall,
    })
}

/// Among points with recall at least [`MIN_RECALL`], the one with the
/// largest saving (smallest threshold on ties).
pub fn select_operating_point(
    points: &[RocPoint],
    params: &MatrixParams,
    pm: &PowerModel,
) -> Result<(RocPoint, EnergyReport)> {
    let conv = ConventionalStats {
        scheme: ConventionalScheme::Tdm,
        n_channels: params.n_sensors,
    };
    let mut best: Option<(RocPoint, EnergyReport)> = None;
    for p in points {
        let prop = ProposedStats {
            n_sensors: params.n_sensors,
            detection_measurements: params.m as f64,
            mean_measurements_per_frame: p.mean_measurements,
        };
        let Ok(report) = energy_saving(pm, &conv, &prop, p.tpr) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((bp, br)) => {
                report.saving_ratio > br.saving_ratio
                    || (report.saving_ratio == br.saving_ratio && p.vth < bp.vth)
            }
        };
        if better {
            best = Some((*p, report));
        }
    }
    best.ok_or_else(|| Error::RecallConstraintUnmet {
        required: MIN_RECALL,
        best: points.iter().map(|p| p.tpr).fold(0.0, f64::max),
    })
}

/// One `energy.csv` row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRow {
    pub params: MatrixParams,
    pub vth_op: f64,
    pub recall: f64,
    pub fpr: f64,
    pub report: EnergyReport,
}

impl EnergyRow {
    pub fn sampling_ratio(&self) -> f64 {
        self.params.sampling_ratio()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyTable {
    pub rows: Vec<EnergyRow>,
    /// Parameter sets where no threshold reached the recall floor.
    pub unmet: Vec<MatrixParams>,
}

/// Runs a context-aware sweep per parameter set and reports the best
/// saving that keeps recall at or above the floor. `stream_of` names the
/// random stream for each set.
pub fn sweep_energy_savings(
    sets: &[MatrixParams],
    settings: &SweepSettings,
    pm: &PowerModel,
    postprocess: bool,
    stream_of: impl Fn(&MatrixParams) -> u64,
    exec: Execution,
) -> Result<EnergyTable> {
    pm.validate()?;
    let scheme = if postprocess {
        ReadoutScheme::ContextAwarePostprocessed
    } else {
        ReadoutScheme::ContextAware
    };
    let settings = SweepSettings {
        schemes: vec![scheme],
        ..settings.clone()
    };
    let mut table = EnergyTable::default();
    for params in sets {
        let curves = roc_sweep(params, &settings, stream_of(params), exec)?;
        match select_operating_point(&curves[0].points, params, pm) {
            Ok((point, report)) => table.rows.push(EnergyRow {
                params: *params,
                vth_op: point.vth,
                recall: point.tpr,
                fpr: point.fpr,
                report,
            }),
            Err(Error::RecallConstraintUnmet { .. }) => table.unmet.push(*params),
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::BranchRule;
    use crate::scene::SceneConfig;

    fn idle(n: usize, m: f64) -> ProposedStats {
        ProposedStats {
            n_sensors: n,
            detection_measurements: m,
            mean_measurements_per_frame: m,
        }
    }

    #[test]
    fn conventional_per_channel() {
        let pm = PowerModel::default();
        assert!((pm.conventional_power(1, ConventionalScheme::Tdm) - 0.9).abs() < 1e-12);
        assert!((pm.conventional_power(10, ConventionalScheme::Tdm) - 9.0).abs() < 1e-12);
        assert_eq!(
            pm.conventional_power(10, ConventionalScheme::Cdm),
            pm.conventional_power(10, ConventionalScheme::Tdm)
        );
        let cdm = PowerModel {
            cdm_driver_multiplier: 3.0,
            ..pm
        };
        assert!((cdm.conventional_power(1, ConventionalScheme::Cdm) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn power_scales_with_frame_rate() {
        let pm = PowerModel {
            f_frame_hz: 60.0,
            ..PowerModel::default()
        };
        assert!((pm.conventional_power(1, ConventionalScheme::Tdm) - 0.45).abs() < 1e-12);
    }

    #[test]
    fn full_readout_saves_nothing() {
        let pm = PowerModel {
            p_detector_mw: 0.0,
            ..PowerModel::default()
        };
        let conv = ConventionalStats {
            scheme: ConventionalScheme::Tdm,
            n_channels: 1000,
        };
        let r = energy_saving(&pm, &conv, &idle(1000, 1000.0), 1.0).unwrap();
        assert!((r.saving_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idle_saving_is_inverse_sampling_ratio() {
        let pm = PowerModel {
            p_detector_mw: 0.0,
            ..PowerModel::default()
        };
        let conv = ConventionalStats {
            scheme: ConventionalScheme::Tdm,
            n_channels: 10_000,
        };
        let r = energy_saving(&pm, &conv, &idle(10_000, 10_000.0 / 42.4), 1.0).unwrap();
        assert!((r.saving_ratio - 42.4).abs() < 1e-9);
        let r = energy_saving(&pm, &conv, &idle(10_000, 4670.0), 1.0).unwrap();
        assert!((r.saving_ratio - 2.141).abs() < 1e-3);
        let r = energy_saving(&pm, &conv, &idle(10_000, 420.0), 1.0).unwrap();
        assert!((r.saving_ratio - 23.81).abs() < 1e-2);
        // default detector overhead barely moves it
        let r = energy_saving(&PowerModel::default(), &conv, &idle(10_000, 420.0), 1.0).unwrap();
        assert!((r.saving_ratio - 23.81).abs() < 1e-2);
    }

    #[test]
    fn recall_floor_is_enforced() {
        let pm = PowerModel::default();
        let conv = ConventionalStats {
            scheme: ConventionalScheme::Tdm,
            n_channels: 100,
        };
        assert!(matches!(
            energy_saving(&pm, &conv, &idle(100, 10.0), 0.5),
            Err(Error::RecallConstraintUnmet { .. })
        ));
    }

    #[test]
    fn proposed_power_is_monotone() {
        let pm = PowerModel::default();
        let mut last = 0.0;
        for extra in 0..50 {
            let p = pm.proposed_power(&ProposedStats {
                n_sensors: 1000,
                detection_measurements: 100.0,
                mean_measurements_per_frame: 100.0 + extra as f64 * 3.5,
            });
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn detection_discount() {
        let pm = PowerModel {
            p_detector_mw: 0.0,
            detection_power_factor: 0.5,
            ..PowerModel::default()
        };
        let p = pm.proposed_power(&idle(1000, 100.0));
        assert!((p - 0.05 * 900.0).abs() < 1e-9);
    }

    #[test]
    fn model_validation() {
        assert!(PowerModel::default().validate().is_ok());
        assert!(PowerModel {
            f_frame_hz: 250.0,
            ..PowerModel::default()
        }
        .validate()
        .is_err());
        assert!(PowerModel {
            p_adc_mw: -1.0,
            ..PowerModel::default()
        }
        .validate()
        .is_err());
        assert!(PowerModel {
            detection_power_factor: 0.0,
            ..PowerModel::default()
        }
        .validate()
        .is_err());
    }

    fn pt(vth: f64, tpr: f64, meas: f64) -> RocPoint {
        RocPoint {
            vth,
            tpr,
            fpr: 0.0,
            precision: 1.0,
            sensor_tpr: tpr,
            mean_measurements: meas,
            trials: 1,
        }
    }

    #[test]
    fn operating_point_maximizes_saving_under_recall_floor() {
        let p = MatrixParams::new(12, 3, 2, 32).unwrap();
        let pm = PowerModel::default();
        let pts = [
            pt(0.1, 1.0, 30.0),
            pt(0.2, 0.95, 14.0),
            pt(0.3, 0.95, 14.0),
            pt(0.4, 0.5, 12.0),
        ];
        let (op, _) = select_operating_point(&pts, &p, &pm).unwrap();
        assert_eq!(op.vth, 0.2);
        assert!(select_operating_point(&[pt(0.1, 0.5, 12.0)], &p, &pm).is_err());
    }

    #[test]
    fn energy_table_rows() {
        let sets = [
            MatrixParams::for_sampling_ratio(5, 600, 0.2).unwrap(),
            MatrixParams::for_sampling_ratio(5, 600, 0.2).unwrap(),
        ];
        let mut scene = SceneConfig::new(0, 0);
        scene.event_probability = 0.1;
        let settings = SweepSettings {
            scene,
            snr_readout_db: 40.0,
            vth_grid: vec![0.5, 1.0, 2.0],
            trials: 200,
            master_seed: 1,
            schemes: vec![],
            rule: BranchRule::PerRow,
            paired: true,
        };
        let pm = PowerModel::default();
        let table =
            sweep_energy_savings(&sets, &settings, &pm, false, |_| 5, Execution::Sequential)
                .unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0], table.rows[1]);
        let row = table.rows[0];
        let bound = pm.conventional_power(600, ConventionalScheme::Tdm)
            / (pm.p_detector_mw
                + row.sampling_ratio() * pm.conventional_power(600, ConventionalScheme::Tdm));
        assert!(row.report.saving_ratio <= bound);
        assert!(row.report.saving_ratio > 1.0);

        let empty =
            sweep_energy_savings(&[], &settings, &pm, false, |_| 5, Execution::Sequential).unwrap();
        assert!(empty.rows.is_empty());
    }
}
