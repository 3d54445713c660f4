//! Per-frame readout under the context-aware, TDM and CDM schemes, chunk
//! level scoring, and paired Monte Carlo threshold sweeps.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::{expand_flags, BranchRule, DetectionResult, Detector};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::frontend::{check_vth, measure, quantize, quantize_sample, remove_offset, Code};
use crate::matrices::{build_phi_kl, fast_hadamard, ChunkMap, MatrixParams, TernaryMatrix};
use crate::scene::{add_gaussian_noise, generate_frame, snr_to_sigma, SceneConfig, TouchFrame};
use crate::seed::{derive_seed, trial_rng};

/// A complete readout strategy as it appears in the CSV `scheme` column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReadoutScheme {
    ContextAware,
    /// Context-aware with mixed-sign block flags dropped.
    ContextAwarePostprocessed,
    Tdm,
    Cdm,
}

impl ReadoutScheme {
    pub const ALL: [ReadoutScheme; 4] = [
        ReadoutScheme::ContextAware,
        ReadoutScheme::ContextAwarePostprocessed,
        ReadoutScheme::Tdm,
        ReadoutScheme::Cdm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReadoutScheme::ContextAware => "context_aware",
            ReadoutScheme::ContextAwarePostprocessed => "context_aware_pp",
            ReadoutScheme::Tdm => "tdm",
            ReadoutScheme::Cdm => "cdm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }

    pub fn is_context_aware(self) -> bool {
        matches!(
            self,
            ReadoutScheme::ContextAware | ReadoutScheme::ContextAwarePostprocessed
        )
    }

    /// Fixed per-scheme sub-stream so adding a scheme to a run never
    /// changes the others' draws.
    fn stream_tag(self) -> u64 {
        match self {
            ReadoutScheme::ContextAware | ReadoutScheme::ContextAwarePostprocessed => 1,
            ReadoutScheme::Tdm => 2,
            ReadoutScheme::Cdm => 3,
        }
    }
}

impl fmt::Display for ReadoutScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutcome {
    pub scheme: ReadoutScheme,
    pub measurements_used: usize,
    pub recovered: Vec<f64>,
    /// Present for context-aware schemes.
    pub detection: Option<DetectionResult>,
    /// Active chunks.
    pub truth_support: Vec<usize>,
}

/// Detection phase plus TDM re-read of flagged chunks.
#[derive(Clone, Debug)]
pub struct ContextAwareReadout<'a> {
    matrix: &'a TernaryMatrix,
    chunks: &'a ChunkMap,
    params: MatrixParams,
    detector: Detector,
    row_sums: Vec<i64>,
}

impl<'a> ContextAwareReadout<'a> {
    pub fn new(
        matrix: &'a TernaryMatrix,
        chunks: &'a ChunkMap,
        params: MatrixParams,
        detector: Detector,
    ) -> Result<Self> {
        params.validate()?;
        if matrix.rows() != params.m || matrix.cols() != params.n_sensors {
            return Err(Error::DimensionMismatch {
                expected: params.n_sensors,
                got: matrix.cols(),
            });
        }
        if chunks.n_sensors() != params.n_sensors || chunks.n_chunks() != params.n_chunks() {
            return Err(Error::InvalidParams(
                "chunk map does not match matrix parameters".into(),
            ));
        }
        Ok(ContextAwareReadout {
            matrix,
            chunks,
            params,
            detector,
            row_sums: matrix.row_sums(),
        })
    }

    /// Detect on `frame.values`, then re-read every sensor of each flagged
    /// chunk with one fresh readout-noise draw.
    pub fn run_frame<R: Rng + ?Sized>(
        &self,
        frame: &TouchFrame,
        snr_readout_db: f64,
        vth: f64,
        rng: &mut R,
    ) -> Result<FrameOutcome> {
        let mut meas = measure(self.matrix, &frame.values, snr_readout_db, rng)?;
        remove_offset(&mut meas.samples, &self.row_sums, frame.dc);
        let q = quantize(&meas, vth)?;
        let detection = self.detector.detect(&q, &self.params, self.chunks)?;

        let sigma = snr_to_sigma(snr_readout_db, 1.0);
        let mut recovered = vec![0.0; frame.values.len()];
        let mut reread = 0;
        for c in detection.flagged_chunks() {
            let span = self.chunks.sensors(c);
            reread += span.len();
            recovered[span.clone()].copy_from_slice(&frame.values[span.clone()]);
            add_gaussian_noise(&mut recovered[span], sigma, rng);
        }
        Ok(FrameOutcome {
            scheme: if self.detector.postprocess {
                ReadoutScheme::ContextAwarePostprocessed
            } else {
                ReadoutScheme::ContextAware
            },
            measurements_used: self.params.m + reread,
            recovered,
            detection: Some(detection),
            truth_support: frame.chunks.clone(),
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_context_aware_frame<R: Rng + ?Sized>(
    mat: &TernaryMatrix,
    chunk_map: &ChunkMap,
    params: &MatrixParams,
    frame: &TouchFrame,
    snr_readout_db: f64,
    vth: f64,
    postprocess: bool,
    rng: &mut R,
) -> Result<FrameOutcome> {
    ContextAwareReadout::new(
        mat,
        chunk_map,
        *params,
        Detector::new(BranchRule::PerRow, postprocess),
    )?
    .run_frame(frame, snr_readout_db, vth, rng)
}

/// Reads every sensor once.
pub fn run_tdm_frame<R: Rng + ?Sized>(
    frame: &TouchFrame,
    snr_readout_db: f64,
    rng: &mut R,
) -> FrameOutcome {
    let mut recovered = frame.values.clone();
    add_gaussian_noise(&mut recovered, snr_to_sigma(snr_readout_db, 1.0), rng);
    FrameOutcome {
        scheme: ReadoutScheme::Tdm,
        measurements_used: frame.values.len(),
        recovered,
        detection: None,
        truth_support: frame.chunks.clone(),
    }
}

/// Sylvester-Hadamard code applied through the fast transform. Sensors
/// beyond `N` up to the order are phantom zeros.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HadamardCode {
    order: usize,
}

impl HadamardCode {
    pub fn new(order: usize) -> Result<Self> {
        if !order.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(order));
        }
        Ok(HadamardCode { order })
    }

    /// Smallest code covering `n_sensors`.
    pub fn for_sensors(n_sensors: usize) -> Self {
        HadamardCode {
            order: n_sensors.max(1).next_power_of_two(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `H x` for `x` zero-padded to the order.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() > self.order {
            return Err(Error::DimensionMismatch {
                expected: self.order,
                got: x.len(),
            });
        }
        let mut y = x.to_vec();
        y.resize(self.order, 0.0);
        fast_hadamard(&mut y)?;
        Ok(y)
    }

    /// `Hᵀ y / n`, truncated to `n_sensors`.
    pub fn decode(&self, y: &[f64], n_sensors: usize) -> Result<Vec<f64>> {
        if y.len() != self.order {
            return Err(Error::DimensionMismatch {
                expected: self.order,
                got: y.len(),
            });
        }
        let mut x = y.to_vec();
        // Sylvester H is symmetric.
        fast_hadamard(&mut x)?;
        let scale = 1.0 / self.order as f64;
        x.truncate(n_sensors);
        x.iter_mut().for_each(|v| *v *= scale);
        Ok(x)
    }
}

/// All sensors driven with orthogonal codes, then decoded.
pub fn run_cdm_frame<R: Rng + ?Sized>(
    frame: &TouchFrame,
    code: &HadamardCode,
    snr_readout_db: f64,
    rng: &mut R,
) -> Result<FrameOutcome> {
    let mut y = code.encode(&frame.values)?;
    add_gaussian_noise(&mut y, snr_to_sigma(snr_readout_db, 1.0), rng);
    Ok(FrameOutcome {
        scheme: ReadoutScheme::Cdm,
        measurements_used: frame.values.len(),
        recovered: code.decode(&y, frame.values.len())?,
        detection: None,
        truth_support: frame.chunks.clone(),
    })
}

/// Chunk-level confusion counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    /// `truth` must be ascending.
    pub fn from_flags(flags: &[bool], truth: &[usize]) -> Self {
        let mut c = Confusion::default();
        let mut t = truth.iter().peekable();
        for (i, &f) in flags.iter().enumerate() {
            let active = t.next_if_eq(&&i).is_some();
            match (f, active) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn score(&self) -> Score {
        Score {
            tpr: ratio_or(self.tp, self.tp + self.fn_, 1.0),
            fpr: ratio_or(self.fp, self.fp + self.tn, 0.0),
            precision: ratio_or(self.tp, self.tp + self.fp, 1.0),
        }
    }
}

fn ratio_or(num: u64, den: u64, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Rates in `[0, 1]`. With no active chunks tpr is 1; with no inactive
/// chunks fpr is 0; with nothing flagged precision is 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
}

pub fn score(detection: &DetectionResult, truth_support: &[usize]) -> Score {
    let mut truth = truth_support.to_vec();
    truth.sort_unstable();
    truth.dedup();
    Confusion::from_flags(&detection.chunk_flags, &truth).score()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub vth: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    /// Recall over sensors rather than chunks.
    pub sensor_tpr: f64,
    pub mean_measurements: f64,
    pub trials: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub scheme: ReadoutScheme,
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the curve through `(0,0)` and `(1,1)`.
    pub fn auc(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        pts.push((0.0, 0.0));
        pts.push((1.0, 1.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// Everything a threshold sweep needs apart from the matrix dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    /// `n_sensors` and `sparsity_k` are taken from the matrix parameters.
    pub scene: SceneConfig,
    pub snr_readout_db: f64,
    /// Strictly increasing.
    pub vth_grid: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
    pub schemes: Vec<ReadoutScheme>,
    pub rule: BranchRule,
    /// Reuse the same frames at every threshold.
    pub paired: bool,
}

impl SweepSettings {
    /// Context-aware scheme, 30 dB panel and 40 dB readout SNR, paired
    /// frames, seed 1.
    pub fn new(vth_grid: Vec<f64>, trials: u64) -> Self {
        SweepSettings {
            scene: SceneConfig::new(0, 1),
            snr_readout_db: 40.0,
            vth_grid,
            trials,
            master_seed: 1,
            schemes: vec![ReadoutScheme::ContextAware],
            rule: BranchRule::PerRow,
            paired: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be at least 1".into()));
        }
        if self.vth_grid.is_empty() {
            return Err(Error::InvalidParams("vth grid is empty".into()));
        }
        for &v in &self.vth_grid {
            check_vth(v)?;
        }
        if self.vth_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(
                "vth grid must be strictly increasing".into(),
            ));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidParams("no readout schemes selected".into()));
        }
        if self.snr_readout_db.is_nan() {
            return Err(Error::InvalidParams("readout SNR is NaN".into()));
        }
        // sparsity comes from the matrix parameters
        SceneConfig {
            sparsity_k: 1,
            ..self.scene.clone()
        }
        .validate()
    }

    pub fn scene_for(&self, params: &MatrixParams) -> SceneConfig {
        SceneConfig {
            n_sensors: params.n_sensors,
            sparsity_k: params.k,
            ..self.scene.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Tally {
    confusion: Confusion,
    sensor_tp: u64,
    sensor_truth: u64,
    measurements: u64,
    frames: u64,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        self.confusion.add(&o.confusion);
        self.sensor_tp += o.sensor_tp;
        self.sensor_truth += o.sensor_truth;
        self.measurements += o.measurements;
        self.frames += o.frames;
    }

    fn point(&self, vth: f64) -> RocPoint {
        let s = self.confusion.score();
        RocPoint {
            vth,
            tpr: s.tpr,
            fpr: s.fpr,
            precision: s.precision,
            sensor_tpr: ratio_or(self.sensor_tp, self.sensor_truth, 1.0),
            mean_measurements: ratio_or(self.measurements, self.frames, 0.0),
            trials: self.frames,
        }
    }
}

/// Immutable per-sweep state shared by all workers.
struct SweepContext<'a> {
    params: MatrixParams,
    matrix: TernaryMatrix,
    chunks: ChunkMap,
    row_sums: Vec<i64>,
    scene: SceneConfig,
    settings: &'a SweepSettings,
    hadamard: HadamardCode,
    stream: u64,
}

impl SweepContext<'_> {
    /// Simulates one frame and tallies it at every threshold in `vths`
    /// (indices into the grid). `acc` is `[scheme][vth]`, flattened.
    fn trial(&self, rng: &mut ChaCha8Rng, vths: &[usize], acc: &mut [Tally]) -> Result<()> {
        let s = self.settings;
        let grid = s.vth_grid.len();
        let frame = generate_frame(&self.scene, &self.chunks, rng);
        let sensed = self.scene.apply_tsp_noise(&frame, rng);
        let base_seed: u64 = rng.random();
        let sigma_ro = snr_to_sigma(s.snr_readout_db, 1.0);
        let truth = &frame.chunks;
        let truth_sensors = frame.support.len() as u64;
        let n_chunks = self.chunks.n_chunks();

        let mut y = Vec::new();
        let mut chunk_sums = Vec::new();
        let mut flags = vec![false; n_chunks];
        let mut codes = vec![Code::NearZero; self.params.m];

        for (si, &scheme) in s.schemes.iter().enumerate() {
            let mut srng =
                ChaCha8Rng::seed_from_u64(derive_seed(base_seed, scheme.stream_tag(), 0));
            match scheme {
                ReadoutScheme::ContextAware | ReadoutScheme::ContextAwarePostprocessed => {
                    y.resize(self.params.m, 0.0);
                    self.matrix.mul_vec_into(&sensed, &mut y)?;
                    add_gaussian_noise(&mut y, sigma_ro, &mut srng);
                    remove_offset(&mut y, &self.row_sums, frame.dc);
                    let det =
                        Detector::new(s.rule, scheme == ReadoutScheme::ContextAwarePostprocessed);
                    for &v in vths {
                        let vth = s.vth_grid[v];
                        for (c, &yj) in codes.iter_mut().zip(&y) {
                            *c = quantize_sample(yj, vth);
                        }
                        det.flag_chunks(&codes, self.params.k, &mut flags)?;
                        self.tally(&flags, truth, truth_sensors, true, &mut acc[si * grid + v]);
                    }
                }
                ReadoutScheme::Tdm | ReadoutScheme::Cdm => {
                    let recovered = if scheme == ReadoutScheme::Tdm {
                        let mut r = sensed.clone();
                        add_gaussian_noise(&mut r, sigma_ro, &mut srng);
                        r
                    } else {
                        let mut enc = self.hadamard.encode(&sensed)?;
                        add_gaussian_noise(&mut enc, sigma_ro, &mut srng);
                        self.hadamard.decode(&enc, self.params.n_sensors)?
                    };
                    // Full readouts threshold each chunk's offset-free sum,
                    // the same statistic a detection row sees.
                    chunk_sums.clear();
                    chunk_sums.extend((0..n_chunks).map(|c| {
                        let span = self.chunks.sensors(c);
                        let len = span.len() as f64;
                        recovered[span].iter().sum::<f64>() - len * frame.dc
                    }));
                    for &v in vths {
                        let vth = s.vth_grid[v];
                        for (f, &sum) in flags.iter_mut().zip(&chunk_sums) {
                            *f = sum > vth;
                        }
                        self.tally(&flags, truth, truth_sensors, false, &mut acc[si * grid + v]);
                    }
                }
            }
        }
        Ok(())
    }

    fn tally(
        &self,
        flags: &[bool],
        truth: &[usize],
        truth_sensors: u64,
        selective: bool,
        t: &mut Tally,
    ) {
        let conf = Confusion::from_flags(flags, truth);
        let sensor_tp: usize = truth
            .iter()
            .filter(|&&c| flags[c])
            .map(|&c| self.chunks.len(c))
            .sum();
        t.confusion.add(&conf);
        t.sensor_tp += sensor_tp as u64;
        t.sensor_truth += truth_sensors;
        t.frames += 1;
        t.measurements += if selective {
            let reread: usize = flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(c, _)| self.chunks.len(c))
                .sum();
            (self.params.m + reread) as u64
        } else {
            self.params.n_sensors as u64
        };
    }
}

/// Monte Carlo ROC sweep for one matrix configuration. Trial `t` of stream
/// `stream` always sees the same frame, so curves are reproducible and
/// independent of the execution mode.
pub fn roc_sweep(
    params: &MatrixParams,
    settings: &SweepSettings,
    stream: u64,
    exec: Execution,
) -> Result<Vec<RocCurve>> {
    settings.validate()?;
    let (matrix, chunks) = build_phi_kl(params)?;
    let ctx = SweepContext {
        params: *params,
        row_sums: matrix.row_sums(),
        matrix,
        chunks,
        scene: settings.scene_for(params),
        settings,
        hadamard: HadamardCode::for_sensors(params.n_sensors),
        stream,
    };
    let grid = settings.vth_grid.len();
    let cells = settings.schemes.len() * grid;
    let all: Vec<usize> = (0..grid).collect();

    let acc = exec.fold_trials(
        settings.trials,
        || vec![Tally::default(); cells],
        |acc, t| {
            if settings.paired {
                let mut rng = trial_rng(settings.master_seed, ctx.stream, t);
                ctx.trial(&mut rng, &all, acc)
            } else {
                for v in 0..grid {
                    let stream = ctx.stream ^ crate::seed::mix64(v as u64 + 1);
                    let mut rng = trial_rng(settings.master_seed, stream, t);
                    ctx.trial(&mut rng, &[v], acc)?;
                }
                Ok(())
            }
        },
        |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y));
            a
        },
    )?;

    Ok(settings
        .schemes
        .iter()
        .enumerate()
        .map(|(si, &scheme)| RocCurve {
            scheme,
            points: (0..grid)
                .map(|v| acc[si * grid + v].point(settings.vth_grid[v]))
                .collect(),
        })
        .collect())
}

/// Chunk flags of a noiseless frame at unit amplitude; used by the
/// exhaustive small-instance check.
pub fn noiseless_flags(
    matrix: &TernaryMatrix,
    chunks: &ChunkMap,
    params: &MatrixParams,
    active: &[usize],
    dc: f64,
    vth: f64,
    detector: Detector,
) -> Result<Vec<bool>> {
    let frame = TouchFrame::with_active_chunks(chunks, active, 1.0, dc);
    let mut y = matrix.mul_vec(&frame.values)?;
    remove_offset(&mut y, &matrix.row_sums(), dc);
    check_vth(vth)?;
    let codes: Vec<Code> = y.iter().map(|&v| quantize_sample(v, vth)).collect();
    let mut flags = vec![false; params.n_chunks()];
    detector.flag_chunks(&codes, params.k, &mut flags)?;
    Ok(flags)
}

/// Sensor flags for a chunk flag vector.
pub fn sensor_flags(chunk_flags: &[bool], chunks: &ChunkMap) -> Vec<bool> {
    expand_flags(chunk_flags, chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::build_hadamard;
    use rand::SeedableRng;

    fn phi2() -> (TernaryMatrix, ChunkMap, MatrixParams) {
        let p = MatrixParams::new(4, 2, 1, 6).unwrap();
        let (m, c) = build_phi_kl(&p).unwrap();
        (m, c, p)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn idle_frame_uses_m_measurements() {
        let (mat, map, p) = phi2();
        let frame = TouchFrame::idle(6, 0.0);
        let out = run_context_aware_frame(
            &mat,
            &map,
            &p,
            &frame,
            f64::INFINITY,
            0.5,
            false,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(out.measurements_used, 4);
        assert!(out.recovered.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flagged_chunk_is_reread() {
        let (mat, map, p) = phi2();
        let frame = TouchFrame::with_active_chunks(&map, &[4], 1.0, 0.0);
        let out = run_context_aware_frame(
            &mat,
            &map,
            &p,
            &frame,
            f64::INFINITY,
            0.5,
            false,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(out.detection.as_ref().unwrap().flagged_chunks(), vec![4]);
        assert_eq!(out.measurements_used, 5);
        assert_eq!(out.recovered, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(out.truth_support, vec![4]);
    }

    #[test]
    fn large_panel_single_chunk_cost() {
        let p = MatrixParams::new(420, 5, 20, 10_000).unwrap();
        let (mat, map) = build_phi_kl(&p).unwrap();
        let frame = TouchFrame::with_active_chunks(&map, &[17], 1.0, 0.0);
        let out = run_context_aware_frame(
            &mat,
            &map,
            &p,
            &frame,
            f64::INFINITY,
            5.0,
            false,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(out.detection.unwrap().flagged_chunks(), vec![17]);
        assert_eq!(out.measurements_used, 440);
        assert_eq!(
            run_tdm_frame(&frame, 40.0, &mut rng()).measurements_used,
            10_000
        );
    }

    #[test]
    fn trimmed_matrix_with_offset_compensation() {
        let p = MatrixParams::new(420, 5, 20, 10_000).unwrap();
        let (mat, map) = build_phi_kl(&p).unwrap();
        // trimmed block chunk together with a unit chunk of its group
        let frame = TouchFrame::with_active_chunks(&map, &[500, 400], 1.0, 7.0);
        let out = run_context_aware_frame(
            &mat,
            &map,
            &p,
            &frame,
            f64::INFINITY,
            5.0,
            false,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(out.detection.unwrap().flagged_chunks(), vec![400, 500]);
    }

    #[test]
    fn tdm_is_exact_without_noise() {
        let (_, map, _) = phi2();
        let frame = TouchFrame::with_active_chunks(&map, &[1, 5], 1.0, 2.0);
        let out = run_tdm_frame(&frame, f64::INFINITY, &mut rng());
        assert_eq!(out.recovered, frame.values);
        assert_eq!(out.measurements_used, 6);
    }

    #[test]
    fn tdm_noise_level() {
        let frame = TouchFrame::idle(100_000, 0.0);
        let out = run_tdm_frame(&frame, 40.0, &mut rng());
        let var = out.recovered.iter().map(|v| v * v).sum::<f64>() / 1e5;
        assert!((var.sqrt() / 0.01 - 1.0).abs() < 0.05);
    }

    #[test]
    fn cdm_is_exact_without_noise() {
        let code = HadamardCode::new(4).unwrap();
        let frame = TouchFrame {
            values: vec![0.0, 1.0, 0.0, 0.0],
            support: vec![1],
            chunks: vec![1],
            dc: 0.0,
        };
        let out = run_cdm_frame(&frame, &code, f64::INFINITY, &mut rng()).unwrap();
        assert_eq!(out.recovered, frame.values);

        let padded = TouchFrame::idle(6, 0.25);
        let out = run_cdm_frame(
            &padded,
            &HadamardCode::for_sensors(6),
            f64::INFINITY,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(out.recovered, padded.values);
        assert_eq!(out.measurements_used, 6);
    }

    #[test]
    fn cdm_rejects_small_code() {
        let code = HadamardCode::new(4).unwrap();
        let frame = TouchFrame::idle(6, 0.0);
        assert!(run_cdm_frame(&frame, &code, 40.0, &mut rng()).is_err());
        assert!(HadamardCode::new(12).is_err());
    }

    #[test]
    fn hadamard_code_matches_dense_matrix() {
        let h = build_hadamard(8).unwrap();
        let code = HadamardCode::new(8).unwrap();
        let x: Vec<f64> = (0..8).map(|i| i as f64 - 2.5).collect();
        assert_eq!(code.encode(&x).unwrap(), h.mul_vec(&x).unwrap());
        let back = code.decode(&h.mul_vec(&x).unwrap(), 8).unwrap();
        assert_eq!(
            back,
            h.transpose_mul_vec(&h.mul_vec(&x).unwrap())
                .unwrap()
                .iter()
                .map(|v| v / 8.0)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn scoring() {
        let det = |flags: Vec<bool>| DetectionResult {
            sensor_flags: flags.clone(),
            chunk_flags: flags,
            elapsed_ops: 0,
        };
        let s = score(&det(vec![false, true, false, false]), &[1]);
        assert_eq!((s.tpr, s.fpr, s.precision), (1.0, 0.0, 1.0));
        let s = score(&det(vec![true; 4]), &[2]);
        assert_eq!((s.tpr, s.fpr), (1.0, 1.0));
        assert_eq!(s.precision, 0.25);
        let s = score(&det(vec![false; 4]), &[0, 3]);
        assert_eq!((s.tpr, s.fpr), (0.0, 0.0));
        let s = score(&det(vec![false; 4]), &[]);
        assert_eq!(s.tpr, 1.0);
        let s = score(&det(vec![true; 2]), &[0, 1]);
        assert_eq!(s.fpr, 0.0);
    }

    #[test]
    fn auc_of_simple_curves() {
        let pt = |fpr, tpr| RocPoint {
            vth: 1.0,
            tpr,
            fpr,
            precision: 1.0,
            sensor_tpr: tpr,
            mean_measurements: 0.0,
            trials: 1,
        };
        let perfect = RocCurve {
            scheme: ReadoutScheme::ContextAware,
            points: vec![pt(0.0, 1.0)],
        };
        assert_eq!(perfect.auc(), 1.0);
        let diag = RocCurve {
            scheme: ReadoutScheme::ContextAware,
            points: vec![pt(0.5, 0.5)],
        };
        assert!((diag.auc() - 0.5).abs() < 1e-12);
    }

    fn small_settings(schemes: Vec<ReadoutScheme>) -> SweepSettings {
        let mut scene = SceneConfig::new(0, 0);
        scene.snr_tsp_db = 20.0;
        SweepSettings {
            scene,
            snr_readout_db: 30.0,
            vth_grid: vec![0.05, 0.5, 1.0, 5.0, 1e6],
            trials: 300,
            master_seed: 7,
            schemes,
            rule: BranchRule::PerRow,
            paired: true,
        }
    }

    #[test]
    fn sweep_extremes() {
        let p = MatrixParams::new(12, 3, 2, 32).unwrap();
        let s = small_settings(ReadoutScheme::ALL.to_vec());
        let curves = roc_sweep(&p, &s, 1, Execution::Sequential).unwrap();
        assert_eq!(curves.len(), 4);
        for c in &curves {
            let last = c.points.last().unwrap();
            assert_eq!(last.tpr, 0.0);
            assert_eq!(last.fpr, 0.0);
            assert_eq!(last.trials, 300);
            // a tiny threshold trips on noise
            assert!(c.points[0].fpr > 0.3, "{} {}", c.scheme, c.points[0].fpr);
            assert!(c.points[0].tpr > 0.9);
        }
        let tdm = &curves[2];
        assert!(tdm.points.iter().all(|p| p.mean_measurements == 32.0));
    }

    #[test]
    fn sweep_schemes_do_not_interact() {
        let p = MatrixParams::new(12, 3, 2, 32).unwrap();
        let alone = roc_sweep(
            &p,
            &small_settings(vec![ReadoutScheme::ContextAware]),
            3,
            Execution::Sequential,
        )
        .unwrap();
        let mixed = roc_sweep(
            &p,
            &small_settings(ReadoutScheme::ALL.to_vec()),
            3,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(alone[0], mixed[0]);
    }

    #[test]
    fn unpaired_sweep_runs() {
        let p = MatrixParams::new(12, 3, 2, 32).unwrap();
        let mut s = small_settings(vec![ReadoutScheme::ContextAware]);
        s.paired = false;
        let paired = roc_sweep(
            &p,
            &small_settings(vec![ReadoutScheme::ContextAware]),
            3,
            Execution::Sequential,
        )
        .unwrap();
        let unpaired = roc_sweep(&p, &s, 3, Execution::Sequential).unwrap();
        assert_eq!(unpaired[0].points.len(), 5);
        assert_ne!(paired, unpaired);
    }

    #[test]
    fn sweep_rejects_bad_settings() {
        let p = MatrixParams::new(12, 3, 2, 32).unwrap();
        let mut s = small_settings(vec![ReadoutScheme::Tdm]);
        s.vth_grid = vec![1.0, 0.5];
        assert!(roc_sweep(&p, &s, 0, Execution::Sequential).is_err());
        s.vth_grid = vec![0.5];
        s.trials = 0;
        assert!(roc_sweep(&p, &s, 0, Execution::Sequential).is_err());
    }
}
