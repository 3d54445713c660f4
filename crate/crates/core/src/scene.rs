//! Ground-truth touch frames and panel-side noise.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrices::ChunkMap;

/// Noise standard deviation for a given SNR, `ref_amplitude · 10^(-snr/20)`.
/// An infinite SNR gives zero.
pub fn snr_to_sigma(snr_db: f64, ref_amplitude: f64) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    ref_amplitude * 10f64.powf(-snr_db / 20.0)
}

/// Adds i.i.d. zero-mean Gaussian noise. Draws nothing when `sigma == 0`.
pub fn add_gaussian_noise<R: Rng + ?Sized>(values: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for v in values {
        let g: f64 = StandardNormal.sample(rng);
        *v += sigma * g;
    }
}

/// How active chunks are placed in a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Distinct chunks chosen uniformly.
    Random,
    /// A run of adjacent chunks.
    Contiguous,
    /// Individual sensors chosen uniformly; stress mode only, truth is no
    /// longer chunk-aligned.
    SensorRandom,
}

impl Placement {
    pub fn name(self) -> &'static str {
        match self {
            Placement::Random => "random",
            Placement::Contiguous => "contiguous",
            Placement::SensorRandom => "sensor_random",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "random" => Some(Placement::Random),
            "contiguous" => Some(Placement::Contiguous),
            "sensor_random" => Some(Placement::SensorRandom),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub n_sensors: usize,
    /// Maximum number of active chunks in a frame.
    pub sparsity_k: usize,
    pub placement: Placement,
    /// Touch amplitude, a.u.; also the SNR reference.
    pub amplitude: f64,
    pub snr_tsp_db: f64,
    /// Offset common to every sensor.
    pub dc: f64,
    /// Probability that a frame contains any touch.
    pub event_probability: f64,
}

impl SceneConfig {
    pub fn new(n_sensors: usize, sparsity_k: usize) -> Self {
        SceneConfig {
            n_sensors,
            sparsity_k,
            placement: Placement::Random,
            amplitude: 1.0,
            snr_tsp_db: 30.0,
            dc: 0.0,
            event_probability: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if self.sparsity_k == 0 {
            return fail("sparsity_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.event_probability) {
            return fail(format!(
                "event_probability {} outside [0, 1]",
                self.event_probability
            ));
        }
        if self.snr_tsp_db.is_nan() || self.snr_tsp_db == f64::NEG_INFINITY {
            return fail("snr_tsp_db must be a number or +inf".into());
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return fail(format!("amplitude {} must be positive", self.amplitude));
        }
        if !self.dc.is_finite() {
            return fail("dc must be finite".into());
        }
        Ok(())
    }

    pub fn tsp_sigma(&self) -> f64 {
        snr_to_sigma(self.snr_tsp_db, self.amplitude)
    }

    /// Frame values plus panel noise on every sensor.
    pub fn apply_tsp_noise<R: Rng + ?Sized>(&self, frame: &TouchFrame, rng: &mut R) -> Vec<f64> {
        let mut values = frame.values.clone();
        add_gaussian_noise(&mut values, self.tsp_sigma(), rng);
        values
    }
}

/// One frame of sensor values with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct TouchFrame {
    pub values: Vec<f64>,
    /// Active sensors, ascending.
    pub support: Vec<usize>,
    /// Chunks containing an active sensor, ascending.
    pub chunks: Vec<usize>,
    pub dc: f64,
}

impl TouchFrame {
    pub fn idle(n_sensors: usize, dc: f64) -> Self {
        TouchFrame {
            values: vec![dc; n_sensors],
            support: Vec::new(),
            chunks: Vec::new(),
            dc,
        }
    }

    /// Frame with every sensor of the given chunks at `amplitude`.
    pub fn with_active_chunks(
        chunk_map: &ChunkMap,
        active: &[usize],
        amplitude: f64,
        dc: f64,
    ) -> Self {
        let mut frame = Self::idle(chunk_map.n_sensors(), dc);
        let mut chunks = active.to_vec();
        chunks.sort_unstable();
        chunks.dedup();
        for &c in &chunks {
            for s in chunk_map.sensors(c) {
                frame.values[s] += amplitude;
                frame.support.push(s);
            }
        }
        frame.chunks = chunks;
        frame
    }

    pub fn is_idle(&self) -> bool {
        self.support.is_empty()
    }

    /// Same truth, different observed values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        TouchFrame {
            values,
            support: self.support.clone(),
            chunks: self.chunks.clone(),
            dc: self.dc,
        }
    }
}

/// Draws one frame. The event coin, the activity count and the placement
/// are drawn in that order regardless of `dc`.
pub fn generate_frame<R: Rng + ?Sized>(
    cfg: &SceneConfig,
    chunk_map: &ChunkMap,
    rng: &mut R,
) -> TouchFrame {
    let n = chunk_map.n_sensors();
    let event = rng.random::<f64>() < cfg.event_probability;
    let available = match cfg.placement {
        Placement::SensorRandom => n,
        _ => chunk_map.occupied_chunks(),
    };
    if !event || available == 0 {
        return TouchFrame::idle(n, cfg.dc);
    }
    let s = rng.random_range(1..=cfg.sparsity_k.min(available));
    match cfg.placement {
        Placement::Random => {
            let picks = index::sample(rng, available, s).into_vec();
            TouchFrame::with_active_chunks(chunk_map, &picks, cfg.amplitude, cfg.dc)
        }
        Placement::Contiguous => {
            let start = rng.random_range(0..=available - s);
            let picks: Vec<usize> = (start..start + s).collect();
            TouchFrame::with_active_chunks(chunk_map, &picks, cfg.amplitude, cfg.dc)
        }
        Placement::SensorRandom => {
            let mut support = index::sample(rng, n, s).into_vec();
            support.sort_unstable();
            let mut frame = TouchFrame::idle(n, cfg.dc);
            for &i in &support {
                frame.values[i] += cfg.amplitude;
            }
            frame.chunks = chunk_map.chunks_of(&support);
            frame.support = support;
            frame
        }
    }
}
