//! Readout front end: `y = Φx + n` and the 2-bit quantizer feeding the
//! detector.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrices::{Scheme, TernaryMatrix};
use crate::scene::{add_gaussian_noise, snr_to_sigma};

/// Quantizer output, ordered from most negative to most positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Code {
    /// `y < -vth`
    StrongNeg,
    /// `-vth <= y < -vth/2`
    MidNeg,
    /// `-vth/2 <= y <= vth`
    NearZero,
    /// `y > vth`
    StrongPos,
}

impl Code {
    pub fn symbol(self) -> &'static str {
        match self {
            Code::StrongNeg => "SN",
            Code::MidNeg => "MN",
            Code::NearZero => "NZ",
            Code::StrongPos => "SP",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub samples: Vec<f64>,
    pub scheme: Scheme,
    pub snr_readout_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMeasurement {
    pub codes: Vec<Code>,
    pub vth: f64,
}

/// Samples `Φ·sensor_values` plus one readout-noise draw per row (sigma
/// relative to unit touch amplitude).
pub fn measure<R: Rng + ?Sized>(
    mat: &TernaryMatrix,
    sensor_values: &[f64],
    snr_readout_db: f64,
    rng: &mut R,
) -> Result<Measurement> {
    let mut samples = mat.mul_vec(sensor_values)?;
    add_gaussian_noise(&mut samples, snr_to_sigma(snr_readout_db, 1.0), rng);
    Ok(Measurement {
        samples,
        scheme: mat.scheme(),
        snr_readout_db,
    })
}

/// Removes the contribution of a known common offset `dc` from rows whose
/// `±1` entries do not balance (trimmed repeated-column matrices).
pub fn remove_offset(samples: &mut [f64], row_sums: &[i64], dc: f64) {
    if dc == 0.0 {
        return;
    }
    for (y, &s) in samples.iter_mut().zip(row_sums) {
        if s != 0 {
            *y -= s as f64 * dc;
        }
    }
}

pub fn quantize_sample(y: f64, vth: f64) -> Code {
    if y < -vth {
        Code::StrongNeg
    } else if y < -vth / 2.0 {
        Code::MidNeg
    } else if y <= vth {
        Code::NearZero
    } else {
        Code::StrongPos
    }
}

pub(crate) fn check_vth(vth: f64) -> Result<()> {
    if vth > 0.0 && vth.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "vth must be positive and finite, got {vth}"
        )))
    }
}

pub fn quantize(meas: &Measurement, vth: f64) -> Result<QuantizedMeasurement> {
    quantize_samples(&meas.samples, vth)
}

pub fn quantize_samples(samples: &[f64], vth: f64) -> Result<QuantizedMeasurement> {
    check_vth(vth)?;
    Ok(QuantizedMeasurement {
        codes: samples.iter().map(|&y| quantize_sample(y, vth)).collect(),
        vth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::build_phi_k;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use Code::*;

    fn noiseless(mat: &TernaryMatrix, x: &[f64]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        measure(mat, x, f64::INFINITY, &mut rng).unwrap().samples
    }

    #[test]
    fn zero_input_gives_zero() {
        let phi = build_phi_k(4, 2).unwrap();
        assert_eq!(noiseless(&phi, &[0.0; 6]), vec![0.0; 4]);
    }

    #[test]
    fn block_column_hits_its_group() {
        let phi = build_phi_k(4, 2).unwrap();
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let y = noiseless(&phi, &x);
        assert_eq!(y, vec![-1.0, -1.0, 0.0, 0.0]);
        // dense oracle
        let dense: Vec<f64> = phi
            .to_dense()
            .iter()
            .map(|row| row.iter().zip(&x).map(|(&a, &b)| f64::from(a) * b).sum())
            .collect();
        assert_eq!(y, dense);
    }

    #[test]
    fn dc_cancels() {
        let phi = build_phi_k(4, 2).unwrap();
        for dc in [0.0, 1.0, 5.0, -2.5, 1e6] {
            assert_eq!(noiseless(&phi, &[dc; 6]), vec![0.0; 4]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let phi = build_phi_k(4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            measure(&phi, &[0.0; 5], 40.0, &mut rng),
            Err(Error::DimensionMismatch {
                expected: 6,
                got: 5
            })
        ));
    }

    #[test]
    fn readout_noise_is_seeded() {
        let phi = build_phi_k(4, 2).unwrap();
        let a = measure(&phi, &[0.0; 6], 40.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = measure(&phi, &[0.0; 6], 40.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|&y| y != 0.0 && y.abs() < 0.1));
    }

    #[test]
    fn quantizer_levels() {
        let q = quantize_samples(&[-1.5, -0.7, 0.0, 1.2], 1.0).unwrap();
        assert_eq!(q.codes, vec![StrongNeg, MidNeg, NearZero, StrongPos]);
        let q = quantize_samples(&[-1.0, 1.0], 1.0).unwrap();
        assert_eq!(q.codes, vec![MidNeg, NearZero]);
        let q = quantize_samples(&[-0.5], 1.0).unwrap();
        assert_eq!(q.codes, vec![NearZero]);
        let q = quantize_samples(&[0.0; 5], 1.0).unwrap();
        assert!(q.codes.iter().all(|&c| c == NearZero));
    }

    #[test]
    fn quantizer_rejects_bad_threshold() {
        assert!(quantize_samples(&[0.0], 0.0).is_err());
        assert!(quantize_samples(&[0.0], -1.0).is_err());
        assert!(quantize_samples(&[0.0], f64::NAN).is_err());
    }

    #[test]
    fn offset_removal_uses_row_imbalance() {
        let mut y = vec![2.0, 3.0, 4.0];
        remove_offset(&mut y, &[0, 1, -2], 0.5);
        assert_eq!(y, vec![2.0, 2.5, 5.0]);
    }
}
