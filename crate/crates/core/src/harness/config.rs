//! Experiment configuration: flat `section.key = value` lines, `#`
//! comments. See the README for the full key list.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::detector::BranchRule;
use crate::matrices::MatrixParams;
use crate::pipeline::{ReadoutScheme, SweepSettings};
use crate::power::PowerModel;
use crate::scene::{Placement, SceneConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { key: String, line: usize },
    #[error("`{key}`: cannot parse `{value}`: {msg}")]
    InvalidValue {
        key: String,
        value: String,
        msg: String,
    },
    #[error("`{key}`: {msg}")]
    Constraint { key: String, msg: String },
}

const KEYS: &[&str] = &[
    "experiment.id",
    "experiment.trials",
    "experiment.seed",
    "experiment.schemes",
    "experiment.paired",
    "matrix.m",
    "matrix.k",
    "matrix.l",
    "matrix.n_sensors",
    "grid.k",
    "grid.n_sensors",
    "grid.sampling_ratios",
    "scene.placement",
    "scene.amplitude",
    "scene.dc",
    "scene.event_probability",
    "scene.snr_tsp_db",
    "readout.snr_db",
    "readout.vth_grid",
    "detector.rule",
    "energy.event_probability",
    "energy.postprocess",
    "power.p_driver_mw",
    "power.p_amp_mw",
    "power.p_adc_mw",
    "power.f_ref_hz",
    "power.f_frame_hz",
    "power.p_detector_mw",
    "power.cdm_driver_multiplier",
    "power.detection_power_factor",
    "output.dir",
];

/// Parameter sets generated from target sampling ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub k: Vec<usize>,
    pub n_sensors: Vec<usize>,
    pub sampling_ratios: Vec<f64>,
}

impl GridSpec {
    /// Ordered by `N`, then `k`, then sampling ratio as listed.
    pub fn expand(&self) -> Result<Vec<MatrixParams>, ConfigError> {
        let mut sets = Vec::new();
        for &n in &self.n_sensors {
            for &k in &self.k {
                for &sr in &self.sampling_ratios {
                    let p = MatrixParams::for_sampling_ratio(k, n, sr).map_err(|e| {
                        ConfigError::Constraint {
                            key: "grid.sampling_ratios".into(),
                            msg: format!("k = {k}, N = {n}, ratio {sr}: {e}"),
                        }
                    })?;
                    sets.push(p);
                }
            }
        }
        Ok(sets)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub matrix: Option<MatrixParams>,
    pub grid: Option<GridSpec>,
    /// Scene template, `n_sensors`/`sparsity_k` filled per parameter set.
    pub sweep: SweepSettings,
    pub energy_event_probability: f64,
    pub energy_postprocess: bool,
    pub power: PowerModel,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// The explicit matrix (if any) followed by the grid expansion.
    pub fn param_sets(&self) -> Vec<MatrixParams> {
        let mut sets: Vec<MatrixParams> = self.matrix.into_iter().collect();
        if let Some(grid) = &self.grid {
            // validated at parse time
            sets.extend(grid.expand().unwrap_or_default());
        }
        sets
    }

    /// Settings for the duty-cycled energy runs.
    pub fn energy_sweep(&self) -> SweepSettings {
        let mut s = self.sweep.clone();
        s.scene.event_probability = self.energy_event_probability;
        s
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let s = &self.sweep;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("experiment.id", self.id.clone());
        kv("experiment.trials", s.trials.to_string());
        kv("experiment.seed", s.master_seed.to_string());
        kv(
            "experiment.schemes",
            join(s.schemes.iter().map(|r| r.name())),
        );
        kv("experiment.paired", s.paired.to_string());
        if let Some(p) = &self.matrix {
            kv("matrix.m", p.m.to_string());
            kv("matrix.k", p.k.to_string());
            kv("matrix.l", p.l.to_string());
            kv("matrix.n_sensors", p.n_sensors.to_string());
        }
        if let Some(g) = &self.grid {
            kv("grid.k", join(g.k.iter()));
            kv("grid.n_sensors", join(g.n_sensors.iter()));
            kv("grid.sampling_ratios", join(g.sampling_ratios.iter()));
        }
        kv("scene.placement", s.scene.placement.name().into());
        kv("scene.amplitude", s.scene.amplitude.to_string());
        kv("scene.dc", s.scene.dc.to_string());
        kv(
            "scene.event_probability",
            s.scene.event_probability.to_string(),
        );
        kv("scene.snr_tsp_db", s.scene.snr_tsp_db.to_string());
        kv("readout.snr_db", s.snr_readout_db.to_string());
        kv("readout.vth_grid", join(s.vth_grid.iter()));
        kv("detector.rule", s.rule.name().into());
        kv(
            "energy.event_probability",
            self.energy_event_probability.to_string(),
        );
        kv("energy.postprocess", self.energy_postprocess.to_string());
        let p = &self.power;
        kv("power.p_driver_mw", p.p_driver_mw.to_string());
        kv("power.p_amp_mw", p.p_amp_mw.to_string());
        kv("power.p_adc_mw", p.p_adc_mw.to_string());
        kv("power.f_ref_hz", p.f_ref_hz.to_string());
        kv("power.f_frame_hz", p.f_frame_hz.to_string());
        kv("power.p_detector_mw", p.p_detector_mw.to_string());
        kv(
            "power.cdm_driver_multiplier",
            p.cdm_driver_multiplier.to_string(),
        );
        kv(
            "power.detection_power_factor",
            p.detection_power_factor.to_string(),
        );
        kv("output.dir", self.output_dir.display().to_string());
        out
    }
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

/// Raw entries with their line numbers, in file order.
struct Entries(Vec<(String, String, usize)>);

impl Entries {
    fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::InvalidValue {
                    key: key.into(),
                    value: v.into(),
                    msg: e.to_string(),
                })
            })
            .transpose()
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|item| {
                item.trim()
                    .parse::<T>()
                    .map_err(|e| ConfigError::InvalidValue {
                        key: key.into(),
                        value: v.into(),
                        msg: e.to_string(),
                    })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}

fn constraint(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        key: key.into(),
        msg: msg.into(),
    }
}

fn invalid(key: &str, value: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        msg: msg.into(),
    }
}

/// Parses `logspace(a, b, n)`, `linspace(a, b, n)` or a comma list.
pub fn parse_vth_grid(value: &str) -> Result<Vec<f64>, ConfigError> {
    let key = "readout.vth_grid";
    let v = value.trim();
    let spaced = |body: &str, log: bool| -> Result<Vec<f64>, ConfigError> {
        let args: Vec<&str> = body.split(',').map(str::trim).collect();
        if args.len() != 3 {
            return Err(invalid(key, value, "expected (start, stop, count)"));
        }
        let a: f64 = args[0]
            .parse()
            .map_err(|_| invalid(key, value, "bad start"))?;
        let b: f64 = args[1]
            .parse()
            .map_err(|_| invalid(key, value, "bad stop"))?;
        let n: usize = args[2]
            .parse()
            .map_err(|_| invalid(key, value, "bad count"))?;
        if n == 0 {
            return Err(invalid(key, value, "count must be at least 1"));
        }
        if log && !(a > 0.0 && b > 0.0) {
            return Err(invalid(key, value, "logspace bounds must be positive"));
        }
        Ok((0..n)
            .map(|i| {
                if i == 0 {
                    return a;
                }
                if i == n - 1 {
                    return b;
                }
                let t = i as f64 / (n - 1) as f64;
                if log {
                    a * (b / a).powf(t)
                } else {
                    a + t * (b - a)
                }
            })
            .collect())
    };
    if let Some(body) = v
        .strip_prefix("logspace(")
        .and_then(|r| r.strip_suffix(')'))
    {
        spaced(body, true)
    } else if let Some(body) = v
        .strip_prefix("linspace(")
        .and_then(|r| r.strip_suffix(')'))
    {
        spaced(body, false)
    } else {
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(key, value, e.to_string()))
            })
            .collect()
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey {
                key: k.into(),
                line,
            });
        }
        if entries
            .iter()
            .any(|(prev, _, _): &(String, String, usize)| prev == k)
        {
            return Err(ConfigError::Duplicate {
                key: k.into(),
                line,
            });
        }
        entries.push((k.to_string(), v.to_string(), line));
    }
    let e = Entries(entries);

    let matrix = match (
        e.parsed::<usize>("matrix.m")?,
        e.parsed::<usize>("matrix.k")?,
        e.parsed::<usize>("matrix.n_sensors")?,
    ) {
        (None, None, None) if e.get("matrix.l").is_none() => None,
        (Some(m), Some(k), Some(n)) => {
            if k == 0 {
                return Err(constraint("matrix.k", "k must be at least 1"));
            }
            if m == 0 || m % k != 0 {
                return Err(constraint("matrix.m", "m must be multiple of k"));
            }
            let chunks = m + m / k;
            let l = e.or("matrix.l", n.div_ceil(chunks).max(1))?;
            Some(
                MatrixParams::new(m, k, l, n)
                    .map_err(|err| constraint("matrix.n_sensors", err.to_string()))?,
            )
        }
        _ => {
            return Err(constraint(
                "matrix",
                "matrix.m, matrix.k and matrix.n_sensors must be given together",
            ))
        }
    };

    let grid = match (
        e.list::<usize>("grid.k")?,
        e.list::<usize>("grid.n_sensors")?,
        e.list::<f64>("grid.sampling_ratios")?,
    ) {
        (None, None, None) => None,
        (Some(k), Some(n_sensors), Some(sampling_ratios)) => {
            let g = GridSpec {
                k,
                n_sensors,
                sampling_ratios,
            };
            g.expand()?;
            Some(g)
        }
        _ => {
            return Err(constraint(
                "grid",
                "grid.k, grid.n_sensors and grid.sampling_ratios must be given together",
            ))
        }
    };
    if matrix.is_none() && grid.is_none() {
        return Err(constraint(
            "matrix",
            "no matrix.* or grid.* parameters given",
        ));
    }

    let trials: u64 = e.or("experiment.trials", 1000)?;
    if trials == 0 {
        return Err(constraint("experiment.trials", "trials must be at least 1"));
    }

    let schemes = match e.get("experiment.schemes") {
        None => vec![
            ReadoutScheme::ContextAware,
            ReadoutScheme::ContextAwarePostprocessed,
        ],
        Some(v) => v
            .split(',')
            .map(|s| {
                ReadoutScheme::from_name(s.trim()).ok_or_else(|| {
                    invalid(
                        "experiment.schemes",
                        v,
                        format!("unknown scheme `{}`", s.trim()),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
    };

    let placement = match e.get("scene.placement") {
        None => Placement::Random,
        Some(v) => Placement::from_name(v).ok_or_else(|| {
            invalid(
                "scene.placement",
                v,
                "expected random, contiguous or sensor_random",
            )
        })?,
    };
    let rule = match e.get("detector.rule") {
        None => BranchRule::PerRow,
        Some(v) => BranchRule::from_name(v)
            .ok_or_else(|| invalid("detector.rule", v, "expected per_row or all_rows"))?,
    };

    let scene = SceneConfig {
        n_sensors: 0,
        sparsity_k: 1,
        placement,
        amplitude: e.or("scene.amplitude", 1.0)?,
        snr_tsp_db: e.or("scene.snr_tsp_db", 30.0)?,
        dc: e.or("scene.dc", 0.0)?,
        event_probability: e.or("scene.event_probability", 1.0)?,
    };
    scene
        .validate()
        .map_err(|err| constraint("scene", err.to_string()))?;

    let vth_grid = match e.get("readout.vth_grid") {
        None => parse_vth_grid("logspace(0.05, 50, 40)")?,
        Some(v) => parse_vth_grid(v)?,
    };
    if vth_grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(constraint(
            "readout.vth_grid",
            "thresholds must be positive and finite",
        ));
    }
    if vth_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(constraint(
            "readout.vth_grid",
            "thresholds must be strictly increasing",
        ));
    }

    let sweep = SweepSettings {
        scene,
        snr_readout_db: e.or("readout.snr_db", 40.0)?,
        vth_grid,
        trials,
        master_seed: e.or("experiment.seed", 1)?,
        schemes,
        rule,
        paired: e.or("experiment.paired", true)?,
    };
    if sweep.snr_readout_db.is_nan() {
        return Err(constraint("readout.snr_db", "must be a number"));
    }

    let energy_event_probability: f64 = e.or("energy.event_probability", 0.05)?;
    if !(0.0..=1.0).contains(&energy_event_probability) {
        return Err(constraint("energy.event_probability", "must lie in [0, 1]"));
    }

    let d = PowerModel::default();
    let power = PowerModel {
        p_driver_mw: e.or("power.p_driver_mw", d.p_driver_mw)?,
        p_amp_mw: e.or("power.p_amp_mw", d.p_amp_mw)?,
        p_adc_mw: e.or("power.p_adc_mw", d.p_adc_mw)?,
        f_ref_hz: e.or("power.f_ref_hz", d.f_ref_hz)?,
        f_frame_hz: e.or("power.f_frame_hz", d.f_frame_hz)?,
        p_detector_mw: e.or("power.p_detector_mw", d.p_detector_mw)?,
        cdm_driver_multiplier: e.or("power.cdm_driver_multiplier", d.cdm_driver_multiplier)?,
        detection_power_factor: e.or("power.detection_power_factor", d.detection_power_factor)?,
    };
    power
        .validate()
        .map_err(|err| constraint("power", err.to_string()))?;

    Ok(ExperimentConfig {
        id: e.get("experiment.id").unwrap_or("experiment").to_string(),
        matrix,
        grid,
        sweep,
        energy_event_probability,
        energy_postprocess: e.or("energy.postprocess", false)?,
        power,
        output_dir: PathBuf::from(e.get("output.dir").unwrap_or("out")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "matrix.m = 4\nmatrix.k = 2\nmatrix.n_sensors = 12\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.matrix, Some(MatrixParams::new(4, 2, 2, 12).unwrap()));
        assert_eq!(cfg.sweep.trials, 1000);
        assert_eq!(cfg.sweep.scene.snr_tsp_db, 30.0);
        assert_eq!(cfg.sweep.snr_readout_db, 40.0);
        assert_eq!(cfg.sweep.vth_grid.len(), 40);
        assert_eq!(cfg.power, PowerModel::default());
        assert_eq!(cfg.param_sets().len(), 1);
    }

    #[test]
    fn m_not_multiple_of_k() {
        let err = parse_config("matrix.m = 5\nmatrix.k = 2\nmatrix.n_sensors = 12\n").unwrap_err();
        assert_eq!(err, constraint("matrix.m", "m must be multiple of k"));
        assert!(err.to_string().contains("m must be multiple of k"));
    }

    #[test]
    fn too_many_sensors() {
        let err = parse_config("matrix.m = 4\nmatrix.k = 2\nmatrix.l = 2\nmatrix.n_sensors = 13\n")
            .unwrap_err();
        assert!(
            matches!(err, ConfigError::Constraint { ref key, .. } if key == "matrix.n_sensors")
        );
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let err = parse_config(&format!("{MINIMAL}scene.colour = red\n")).unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                key: "scene.colour".into(),
                line: 4
            }
        );
        let err = parse_config(&format!("{MINIMAL}matrix.k = 2\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Duplicate { .. }));
        assert!(matches!(
            parse_config("just words\n"),
            Err(ConfigError::Syntax { line: 1 })
        ));
    }

    #[test]
    fn zero_trials_rejected() {
        let err = parse_config(&format!("{MINIMAL}experiment.trials = 0\n")).unwrap_err();
        assert!(
            matches!(err, ConfigError::Constraint { ref key, .. } if key == "experiment.trials")
        );
    }

    #[test]
    fn unsorted_grid_rejected() {
        let err = parse_config(&format!("{MINIMAL}readout.vth_grid = 1, 0.5\n")).unwrap_err();
        assert!(
            matches!(err, ConfigError::Constraint { ref key, .. } if key == "readout.vth_grid")
        );
    }

    #[test]
    fn vth_grid_forms() {
        assert_eq!(parse_vth_grid("0.5, 1, 2").unwrap(), vec![0.5, 1.0, 2.0]);
        assert_eq!(
            parse_vth_grid("linspace(1, 3, 3)").unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let g = parse_vth_grid("logspace(0.1, 10, 3)").unwrap();
        assert!((g[1] - 1.0).abs() < 1e-12);
        assert_eq!((g[0], g[2]), (0.1, 10.0));
        assert!(parse_vth_grid("logspace(0, 1, 3)").is_err());
        assert!(parse_vth_grid("linspace(1, 2)").is_err());
    }

    #[test]
    fn grid_expansion() {
        let cfg = parse_config(
            "grid.k = 5, 8\ngrid.n_sensors = 5000, 10000\ngrid.sampling_ratios = 0.47, 0.042, 0.024\n",
        )
        .unwrap();
        let sets = cfg.param_sets();
        assert_eq!(sets.len(), 12);
        assert_eq!(sets.iter().filter(|p| p.n_sensors == 10_000).count(), 6);
        assert!(sets.contains(&MatrixParams::new(420, 5, 20, 10_000).unwrap()));
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = format!(
            "{MINIMAL}grid.k = 5\ngrid.n_sensors = 1000\ngrid.sampling_ratios = 0.1\n\
             experiment.schemes = tdm, context_aware\nscene.snr_tsp_db = inf\nscene.dc = 2.5\n\
             readout.vth_grid = logspace(0.05, 50, 7)\n"
        );
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.sweep.scene.snr_tsp_db, f64::INFINITY);
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = parse_config(&format!("{MINIMAL}scene.placement = diagonal\n")).unwrap_err();
        assert!(
            matches!(err, ConfigError::InvalidValue { ref key, .. } if key == "scene.placement")
        );
        let err = parse_config(&format!("{MINIMAL}power.f_frame_hz = 500\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { ref key, .. } if key == "power"));
    }
}
