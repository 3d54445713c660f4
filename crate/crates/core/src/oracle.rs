//! Exhaustive noiseless check of the detector on small matrices: every
//! chunk support of size at most `k`, at every requested offset.

use crate::detector::Detector;
use crate::error::Result;
use crate::matrices::{build_phi_kl, next_combination, MatrixParams};
use crate::pipeline::noiseless_flags;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleFailure {
    pub active: Vec<usize>,
    pub dc: f64,
    pub flagged: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub params: MatrixParams,
    /// Supports tried, counted once per offset.
    pub supports_checked: u64,
    pub failures: Vec<OracleFailure>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every support of size `0..=params.k` through the noiseless
/// readout and compares the flagged chunks with the support.
pub fn exhaustive_check(
    params: &MatrixParams,
    detector: Detector,
    vth: f64,
    dcs: &[f64],
) -> Result<OracleReport> {
    let (matrix, chunks) = build_phi_kl(params)?;
    let n = chunks.occupied_chunks();
    let mut report = OracleReport {
        params: *params,
        supports_checked: 0,
        failures: Vec::new(),
    };
    for size in 0..=params.k.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            for &dc in dcs {
                let flags = noiseless_flags(&matrix, &chunks, params, &idx, dc, vth, detector)?;
                let flagged: Vec<usize> = (0..flags.len()).filter(|&c| flags[c]).collect();
                report.supports_checked += 1;
                if flagged != idx {
                    report.failures.push(OracleFailure {
                        active: idx.clone(),
                        dc,
                        flagged,
                    });
                }
            }
            if size == 0 || !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    Ok(report)
}
