//! Region-of-interest detection from 2-bit measurement codes.
//!
//! Rows are processed in groups of `k`, one group per block column. A
//! strongly negative code anywhere in a group means the group's block
//! chunk is active; rows of that group that stay above `-vth/2` then mark
//! their own unit chunks as active too, since the positive unit
//! contribution cancelled the block's `-1`. Groups without a strongly
//! negative code flag only rows that are strongly positive.

use crate::error::{Error, Result};
use crate::frontend::{Code, QuantizedMeasurement};
use crate::matrices::{ChunkMap, MatrixParams};

/// How the "above `-vth/2`" test inside a tripped group is quantified.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BranchRule {
    /// Each qualifying row flags its own unit chunk.
    #[default]
    PerRow,
    /// All rows of the group must qualify, then all are flagged. Kept for
    /// sensitivity runs only.
    AllRows,
}

impl BranchRule {
    pub fn name(self) -> &'static str {
        match self {
            BranchRule::PerRow => "per_row",
            BranchRule::AllRows => "all_rows",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "per_row" => Some(BranchRule::PerRow),
            "all_rows" => Some(BranchRule::AllRows),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectionResult {
    pub chunk_flags: Vec<bool>,
    pub sensor_flags: Vec<bool>,
    /// Code comparisons performed; the digital activity proxy.
    pub elapsed_ops: u64,
}

impl DetectionResult {
    pub fn flagged_chunks(&self) -> Vec<usize> {
        flagged(&self.chunk_flags)
    }

    pub fn flagged_sensors(&self) -> Vec<usize> {
        flagged(&self.sensor_flags)
    }
}

fn flagged(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| f.then_some(i))
        .collect()
}

/// Detection settings shared by every frame of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Detector {
    pub rule: BranchRule,
    /// Drop block-chunk flags of groups holding both strongly positive and
    /// strongly negative codes.
    pub postprocess: bool,
}

impl Detector {
    pub fn new(rule: BranchRule, postprocess: bool) -> Self {
        Detector { rule, postprocess }
    }

    /// Chunk flags for `codes` (length `m`), written into `flags`
    /// (length `m + m/k`, cleared first). Returns the comparison count.
    pub fn flag_chunks(&self, codes: &[Code], k: usize, flags: &mut [bool]) -> Result<u64> {
        let m = codes.len();
        if k == 0 || !m.is_multiple_of(k) {
            return Err(Error::InvalidParams(format!(
                "{m} codes do not split into groups of {k}"
            )));
        }
        if flags.len() != m + m / k {
            return Err(Error::DimensionMismatch {
                expected: m + m / k,
                got: flags.len(),
            });
        }
        flags.fill(false);
        Ok((0..m / k)
            .map(|g| self.flag_group(codes, k, g, flags))
            .sum())
    }

    /// Processes one group. Groups touch disjoint flags, so order is free.
    pub(crate) fn flag_group(&self, codes: &[Code], k: usize, g: usize, flags: &mut [bool]) -> u64 {
        let m = codes.len();
        let rows = g * k..(g + 1) * k;
        let group = &codes[rows.clone()];
        let mut ops = k as u64;
        if group.contains(&Code::StrongNeg) {
            flags[m + g] = true;
            ops += k as u64;
            match self.rule {
                BranchRule::PerRow => {
                    for (row, &code) in rows.clone().zip(group) {
                        if code >= Code::NearZero {
                            flags[row] = true;
                        }
                    }
                }
                BranchRule::AllRows => {
                    if group.iter().all(|&c| c >= Code::NearZero) {
                        rows.clone().for_each(|row| flags[row] = true);
                    }
                }
            }
            if self.postprocess {
                ops += k as u64;
                if group.contains(&Code::StrongPos) {
                    flags[m + g] = false;
                }
            }
        } else {
            ops += k as u64;
            for (row, &code) in rows.zip(group) {
                if code == Code::StrongPos {
                    flags[row] = true;
                }
            }
        }
        ops
    }

    pub fn detect(
        &self,
        q: &QuantizedMeasurement,
        params: &MatrixParams,
        chunk_map: &ChunkMap,
    ) -> Result<DetectionResult> {
        if q.codes.len() != params.m {
            return Err(Error::DimensionMismatch {
                expected: params.m,
                got: q.codes.len(),
            });
        }
        if chunk_map.n_chunks() != params.n_chunks() || chunk_map.k() != params.k {
            return Err(Error::InvalidParams(
                "chunk map does not match matrix parameters".into(),
            ));
        }
        let mut chunk_flags = vec![false; params.n_chunks()];
        let elapsed_ops = self.flag_chunks(&q.codes, params.k, &mut chunk_flags)?;
        let sensor_flags = expand_flags(&chunk_flags, chunk_map);
        Ok(DetectionResult {
            chunk_flags,
            sensor_flags,
            elapsed_ops,
        })
    }
}

/// Per-sensor flags: every sensor of a flagged chunk.
pub fn expand_flags(chunk_flags: &[bool], chunk_map: &ChunkMap) -> Vec<bool> {
    let mut sensors = vec![false; chunk_map.n_sensors()];
    for (c, _) in chunk_flags.iter().enumerate().filter(|(_, &f)| f) {
        sensors[chunk_map.sensors(c)].fill(true);
    }
    sensors
}

/// Detection with the per-row rule and no post-processing.
pub fn detect(
    q: &QuantizedMeasurement,
    params: &MatrixParams,
    chunk_map: &ChunkMap,
) -> Result<DetectionResult> {
    Detector::new(BranchRule::PerRow, false).detect(q, params, chunk_map)
}

/// [`detect`] followed by clearing block flags of mixed-sign groups.
pub fn detect_with_postprocess(
    q: &QuantizedMeasurement,
    params: &MatrixParams,
    chunk_map: &ChunkMap,
) -> Result<DetectionResult> {
    Detector::new(BranchRule::PerRow, true).detect(q, params, chunk_map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::quantize_samples;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use Code::*;

    fn phi2() -> (MatrixParams, ChunkMap) {
        let p = MatrixParams::new(4, 2, 1, 6).unwrap();
        (p, ChunkMap::new(&p).unwrap())
    }

    fn codes(c: &[Code]) -> QuantizedMeasurement {
        QuantizedMeasurement {
            codes: c.to_vec(),
            vth: 0.5,
        }
    }

    #[test]
    fn idle_codes_flag_nothing() {
        let (p, map) = phi2();
        let r = detect(&codes(&[NearZero; 4]), &p, &map).unwrap();
        assert!(r.flagged_chunks().is_empty());
        assert!(r.flagged_sensors().is_empty());
        assert_eq!(r.elapsed_ops, 8);
    }

    #[test]
    fn block_chunk_alone() {
        let (p, map) = phi2();
        let q = quantize_samples(&[-1.0, -1.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(q.codes, vec![StrongNeg, StrongNeg, NearZero, NearZero]);
        assert_eq!(detect(&q, &p, &map).unwrap().flagged_chunks(), vec![4]);
    }

    #[test]
    fn block_and_unit_chunk() {
        let (p, map) = phi2();
        let q = quantize_samples(&[0.0, -1.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(detect(&q, &p, &map).unwrap().flagged_chunks(), vec![0, 4]);
    }

    #[test]
    fn unit_chunk_alone() {
        let (p, map) = phi2();
        let q = quantize_samples(&[0.0, 0.0, 1.0, 0.0], 0.5).unwrap();
        assert_eq!(detect(&q, &p, &map).unwrap().flagged_chunks(), vec![2]);
    }

    #[test]
    fn postprocess_clears_mixed_groups() {
        let (p, map) = phi2();
        let q = codes(&[StrongPos, StrongNeg, NearZero, NearZero]);
        let plain = detect(&q, &p, &map).unwrap();
        assert_eq!(plain.flagged_chunks(), vec![0, 4]);
        let pp = detect_with_postprocess(&q, &p, &map).unwrap();
        assert_eq!(pp.flagged_chunks(), vec![0]);

        let q = codes(&[StrongNeg, NearZero, NearZero, NearZero]);
        assert_eq!(
            detect(&q, &p, &map).unwrap().chunk_flags,
            detect_with_postprocess(&q, &p, &map).unwrap().chunk_flags
        );
    }

    #[test]
    fn all_rows_rule_never_fires_inside_tripped_group() {
        let (p, map) = phi2();
        let q = codes(&[NearZero, StrongNeg, NearZero, NearZero]);
        let r = Detector::new(BranchRule::AllRows, false)
            .detect(&q, &p, &map)
            .unwrap();
        assert_eq!(r.flagged_chunks(), vec![4]);
    }

    #[test]
    fn mid_negative_rows_are_not_flagged() {
        let (p, map) = phi2();
        let q = codes(&[MidNeg, StrongNeg, MidNeg, StrongPos]);
        assert_eq!(detect(&q, &p, &map).unwrap().flagged_chunks(), vec![3, 4]);
    }

    #[test]
    fn sensor_flags_follow_chunks() {
        let p = MatrixParams::new(4, 2, 2, 11).unwrap();
        let map = ChunkMap::new(&p).unwrap();
        let q = codes(&[NearZero, StrongNeg, NearZero, StrongNeg]);
        let r = detect(&q, &p, &map).unwrap();
        assert_eq!(r.flagged_chunks(), vec![0, 2, 4, 5]);
        // chunk 5 is the trimmed one
        assert_eq!(r.flagged_sensors(), vec![0, 1, 4, 5, 8, 9, 10]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let (p, map) = phi2();
        assert!(matches!(
            detect(&codes(&[NearZero; 3]), &p, &map),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn group_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let all = [StrongNeg, MidNeg, NearZero, StrongPos];
        let k = 3;
        for _ in 0..200 {
            let c: Vec<Code> = (0..12)
                .map(|_| all[rand::Rng::random_range(&mut rng, 0..4)])
                .collect();
            for det in [
                Detector::new(BranchRule::PerRow, false),
                Detector::new(BranchRule::PerRow, true),
            ] {
                let mut reference = vec![false; 16];
                det.flag_chunks(&c, k, &mut reference).unwrap();
                let mut order: Vec<usize> = (0..4).collect();
                order.shuffle(&mut rng);
                let mut shuffled = vec![false; 16];
                for g in order {
                    det.flag_group(&c, k, g, &mut shuffled);
                }
                assert_eq!(reference, shuffled);
            }
        }
    }
}
