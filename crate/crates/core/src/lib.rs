//! Context-aware readout simulation for large, sparsely touched sensor
//! arrays: a small ternary detection matrix finds the active regions, and
//! only those are read out in full.
//!
//! Typical flow:
//!
//! ```
//! use touchroi::{build_phi_kl, roc_sweep, Execution, MatrixParams, SweepSettings};
//!
//! let params = MatrixParams::full(8, 2, 4).unwrap();
//! let (phi, chunks) = build_phi_kl(&params).unwrap();
//! assert_eq!(phi.rows(), 8);
//! assert_eq!(chunks.n_chunks(), 12);
//!
//! let settings = SweepSettings::new(vec![0.5, 2.0, 8.0], 20);
//! let curves = roc_sweep(&params, &settings, 7, Execution::Sequential).unwrap();
//! assert_eq!(curves[0].points.len(), settings.vth_grid.len());
//! ```

pub mod detector;
pub mod error;
pub mod exec;
pub mod frontend;
pub mod harness;
pub mod matrices;
pub mod oracle;
pub mod pipeline;
pub mod power;
pub mod scene;
pub mod seed;

pub use detector::{detect, detect_with_postprocess, BranchRule, DetectionResult, Detector};
pub use error::{Error, Result};
pub use exec::Execution;
pub use frontend::{measure, quantize, Code, Measurement, QuantizedMeasurement};
pub use matrices::{
    build_bernoulli, build_hadamard, build_identity, build_phi_k, build_phi_kl,
    find_dependent_columns, verify_k_independence, ChunkMap, MatrixParams, Scheme, TernaryMatrix,
};
pub use pipeline::{roc_sweep, ReadoutScheme, RocCurve, RocPoint, Score, SweepSettings};
pub use power::{energy_saving, sweep_energy_savings, PowerModel};
pub use scene::{generate_frame, Placement, SceneConfig, TouchFrame};
