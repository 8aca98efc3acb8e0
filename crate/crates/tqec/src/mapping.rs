//! Tensor views of syndromes and recoveries.
//!
//! The decoders exchange data as dense `(2, d, d)` tensors: syndromes carry
//! one bit per stabilizer (channel 0 = plaquettes, channel 1 = stars) and
//! recoveries carry one Pauli code per data qubit (channel = sublattice,
//! codes `I=0, X=1, Z=2, Y=3`). Both use the row-major layout
//! `channel·d² + row·d + col`, matching [`crate::toric`] qubit indexing, so
//! conversion between frames and tensors is a relabeling, not a recoding.
//!
//! The module also hosts the two lattice-symmetry transforms the learned
//! decoders rely on — cyclic translation and circular padding — plus the
//! translation-based training-data augmentation.

use crate::toric::{LogicalClass, Pauli, PauliFrame};
use rand::Rng;

/// Stabilizer measurement outcomes as a binary `(2, d, d)` tensor.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SyndromeTensor {
    d: usize,
    bits: Vec<bool>,
}

impl SyndromeTensor {
    pub fn zeros(d: usize) -> SyndromeTensor {
        SyndromeTensor {
            d,
            bits: vec![false; 2 * d * d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn idx(&self, ch: usize, r: usize, c: usize) -> usize {
        assert!(
            ch < 2 && r < self.d && c < self.d,
            "syndrome index ({ch},{r},{c}) out of range for d={}",
            self.d
        );
        ch * self.d * self.d + r * self.d + c
    }

    pub fn get(&self, ch: usize, r: usize, c: usize) -> bool {
        self.bits[self.idx(ch, r, c)]
    }

    pub fn set(&mut self, ch: usize, r: usize, c: usize, v: bool) {
        let i = self.idx(ch, r, c);
        self.bits[i] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Flipped sites of one channel in row-major order.
    pub fn defects(&self, ch: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.d {
            for c in 0..self.d {
                if self.get(ch, r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Entrywise XOR; used to track the residual syndrome while a decoder
    /// accumulates partial recoveries.
    pub fn xor(&self, other: &SyndromeTensor) -> SyndromeTensor {
        assert_eq!(self.d, other.d, "syndrome distance mismatch");
        SyndromeTensor {
            d: self.d,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a ^ b)
                .collect(),
        }
    }

    /// Cyclic translation by `(dr, dc)`, the torus symmetry: entry `(r, c)`
    /// of the result reads entry `(r-dr, c-dc)` of the input, wrapped.
    pub fn shifted(&self, dr: isize, dc: isize) -> SyndromeTensor {
        let mut out = SyndromeTensor::zeros(self.d);
        let d = self.d as isize;
        for ch in 0..2 {
            for r in 0..self.d {
                for c in 0..self.d {
                    let sr = (r as isize - dr).rem_euclid(d) as usize;
                    let sc = (c as isize - dc).rem_euclid(d) as usize;
                    let v = self.get(ch, sr, sc);
                    out.set(ch, r, c, v);
                }
            }
        }
        out
    }
}

/// Per-qubit recovery operations as a `(2, d, d)` tensor of Pauli codes.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RecoveryTensor {
    d: usize,
    codes: Vec<u8>,
}

impl RecoveryTensor {
    pub fn identity(d: usize) -> RecoveryTensor {
        RecoveryTensor {
            d,
            codes: vec![0; 2 * d * d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn idx(&self, ch: usize, r: usize, c: usize) -> usize {
        assert!(
            ch < 2 && r < self.d && c < self.d,
            "recovery index ({ch},{r},{c}) out of range for d={}",
            self.d
        );
        ch * self.d * self.d + r * self.d + c
    }

    pub fn get(&self, ch: usize, r: usize, c: usize) -> u8 {
        self.codes[self.idx(ch, r, c)]
    }

    pub fn set(&mut self, ch: usize, r: usize, c: usize, code: u8) {
        assert!(code < 4, "invalid Pauli code {code}");
        let i = self.idx(ch, r, c);
        self.codes[i] = code;
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn weight(&self) -> usize {
        self.codes.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_identity(&self) -> bool {
        self.codes.iter().all(|&v| v == 0)
    }

    pub fn shifted(&self, dr: isize, dc: isize) -> RecoveryTensor {
        let mut out = RecoveryTensor::identity(self.d);
        let d = self.d as isize;
        for ch in 0..2 {
            for r in 0..self.d {
                for c in 0..self.d {
                    let sr = (r as isize - dr).rem_euclid(d) as usize;
                    let sc = (c as isize - dc).rem_euclid(d) as usize;
                    let v = self.get(ch, sr, sc);
                    out.set(ch, r, c, v);
                }
            }
        }
        out
    }
}

/// Relabel a Pauli frame as a recovery tensor (channel = sublattice).
pub fn frame_to_recovery(frame: &PauliFrame) -> RecoveryTensor {
    RecoveryTensor {
        d: frame.d(),
        codes: frame.ops().iter().map(|p| p.code()).collect(),
    }
}

/// Inverse of [`frame_to_recovery`].
pub fn recovery_to_frame(rec: &RecoveryTensor) -> PauliFrame {
    let mut frame = PauliFrame::identity(rec.d);
    for (q, &code) in rec.codes.iter().enumerate() {
        frame.set_flat(q, Pauli::from_code(code));
    }
    frame
}

/// Circularly pad both channels by `k` on each side, returning two
/// row-major `(d+2k) × (d+2k)` byte matrices. Entry `(r, c)` of a padded
/// channel reads entry `((r-k) mod d, (c-k) mod d)` of the original, so the
/// interior block `[k, k+d)²` reproduces the input and the border wraps
/// around the torus — the padding used in front of every valid convolution
/// in the learned decoders.
pub fn circular_pad(t: &SyndromeTensor, k: usize) -> [Vec<u8>; 2] {
    let d = t.d;
    let m = d + 2 * k;
    let mut out = [vec![0u8; m * m], vec![0u8; m * m]];
    for (ch, plane) in out.iter_mut().enumerate() {
        for r in 0..m {
            for c in 0..m {
                let sr = (r as isize - k as isize).rem_euclid(d as isize) as usize;
                let sc = (c as isize - k as isize).rem_euclid(d as isize) as usize;
                plane[r * m + c] = t.get(ch, sr, sc) as u8;
            }
        }
    }
    out
}

/// One training example for the learned decoders.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Sample {
    pub syndrome: SyndromeTensor,
    pub recovery: RecoveryTensor,
    pub logical: LogicalClass,
}

/// Translation augmentation: with probability `probability`, apply one
/// random cyclic shift with `dr, dc` drawn uniformly from
/// `[-⌊d/2⌋, ⌊d/2⌋]` to the syndrome and recovery together. The logical
/// class is translation invariant, so the label is reused unchanged.
pub fn augment<R: Rng>(sample: &Sample, probability: f64, rng: &mut R) -> Sample {
    assert!((0.0..=1.0).contains(&probability));
    if !rng.gen_bool(probability) {
        return sample.clone();
    }
    let half = (sample.syndrome.d() / 2) as isize;
    let dr = rng.gen_range(-half..=half);
    let dc = rng.gen_range(-half..=half);
    Sample {
        syndrome: sample.syndrome.shifted(dr, dc),
        recovery: sample.recovery.shifted(dr, dc),
        logical: sample.logical,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toric::{compose, extract_syndrome, logical_class};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The frozen d = 3 reference syndrome (defects at (0,1) and (2,0)).
    fn reference_syndrome() -> SyndromeTensor {
        let mut s = SyndromeTensor::zeros(3);
        s.set(0, 0, 1, true);
        s.set(0, 2, 0, true);
        s
    }

    #[test]
    fn identity_frame_maps_to_all_zero_codes_and_back() {
        let f = PauliFrame::identity(4);
        let rec = frame_to_recovery(&f);
        assert!(rec.is_identity());
        assert_eq!(recovery_to_frame(&rec), f);
    }

    #[test]
    fn reference_recovery_tensor_matches_its_frame() {
        // X on qubit (0,2,1) and on (1,0,1): codes 1 at exactly those slots.
        let mut f = PauliFrame::identity(3);
        f.set(0, 2, 1, Pauli::X);
        f.set(1, 0, 1, Pauli::X);
        let rec = frame_to_recovery(&f);
        let mut expect = RecoveryTensor::identity(3);
        expect.set(0, 2, 1, 1);
        expect.set(1, 0, 1, 1);
        assert_eq!(rec, expect);
        assert_eq!(recovery_to_frame(&rec), f);
    }

    #[test]
    fn shift_by_zero_and_by_full_period_are_identity() {
        let s = reference_syndrome();
        assert_eq!(s.shifted(0, 0), s);
        assert_eq!(s.shifted(3, -3), s);
    }

    #[test]
    fn reference_syndrome_shifted_one_left() {
        // Shifting the reference syndrome one column to the left moves the
        // defects to (0,0) and (2,2) (the second one wraps).
        let shifted = reference_syndrome().shifted(0, -1);
        let mut expect = SyndromeTensor::zeros(3);
        expect.set(0, 0, 0, true);
        expect.set(0, 2, 2, true);
        assert_eq!(shifted, expect);
    }

    #[test]
    fn circular_pad_of_shifted_reference_syndrome() {
        // Frozen 7×7 expansion of the shifted reference syndrome at k = 2.
        let shifted = reference_syndrome().shifted(0, -1);
        let [ch0, ch1] = circular_pad(&shifted, 2);
        let mut expect = vec![0u8; 49];
        for (r, c) in [(2, 2), (2, 5), (5, 2), (5, 5), (1, 1), (1, 4), (4, 1), (4, 4)] {
            expect[r * 7 + c] = 1;
        }
        assert_eq!(ch0, expect);
        assert_eq!(ch1, vec![0u8; 49]);
    }

    #[test]
    fn circular_pad_zero_is_identity_layout() {
        let s = reference_syndrome();
        let [ch0, _] = circular_pad(&s, 0);
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(ch0[r * 3 + c] == 1, s.get(0, r, c));
            }
        }
    }

    #[test]
    fn circular_pad_interior_and_wrapped_border() {
        let mut s = SyndromeTensor::zeros(5);
        for (r, c) in [(0, 0), (1, 3), (4, 2), (2, 2)] {
            s.set(0, r, c, true);
            s.set(1, c, r, true);
        }
        let k = 1;
        let m = 5 + 2 * k;
        let padded = circular_pad(&s, k);
        for (ch, plane) in padded.iter().enumerate() {
            for r in 0..m {
                for c in 0..m {
                    let sr = (r as isize - k as isize).rem_euclid(5) as usize;
                    let sc = (c as isize - k as isize).rem_euclid(5) as usize;
                    assert_eq!(plane[r * m + c] == 1, s.get(ch, sr, sc));
                }
            }
        }
        // Column -1 of the padded tensor is column d-1 of the input.
        for r in 0..5 {
            assert_eq!(padded[0][(r + k) * m] == 1, s.get(0, r, 4));
        }
    }

    #[test]
    fn augment_with_zero_probability_is_identity() {
        let sample = Sample {
            syndrome: reference_syndrome(),
            recovery: RecoveryTensor::identity(3),
            logical: LogicalClass::TRIVIAL,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            assert_eq!(augment(&sample, 0.0, &mut rng), sample);
        }
    }

    #[test]
    fn augment_preserves_syndrome_recovery_consistency() {
        // Build samples where the recovery clears the syndrome, shift them,
        // and check the shifted recovery still clears the shifted syndrome.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = 5;
        for _ in 0..200 {
            let mut err = PauliFrame::identity(d);
            for _ in 0..rng.gen_range(0..6) {
                let q = rng.gen_range(0..2 * d * d);
                err.set_flat(q, Pauli::from_code(rng.gen_range(1..4)));
            }
            let sample = Sample {
                syndrome: extract_syndrome(&err),
                recovery: frame_to_recovery(&err),
                logical: LogicalClass::TRIVIAL,
            };
            let aug = augment(&sample, 1.0, &mut rng);
            let frame = recovery_to_frame(&aug.recovery);
            assert_eq!(extract_syndrome(&frame), aug.syndrome);
        }
    }

    #[test]
    fn augment_shift_distribution_is_uniform() {
        // d = 5 admits 25 (dr, dc) combinations; with 10⁴ forced shifts each
        // combination should land within 4σ of the uniform expectation
        // (25 simultaneous comparisons, so 3σ per bucket would be flaky).
        let d = 5;
        let mut base = SyndromeTensor::zeros(d);
        base.set(0, 0, 0, true);
        base.set(0, 1, 2, true);
        let sample = Sample {
            syndrome: base,
            recovery: RecoveryTensor::identity(d),
            logical: LogicalClass::TRIVIAL,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000usize;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..n {
            let aug = augment(&sample, 1.0, &mut rng);
            let defects = aug.syndrome.defects(0);
            *counts.entry(defects).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 25, "every shift should be reachable");
        let p = 1.0 / 25.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (defects, count) in counts {
            let dev = (count as f64 - n as f64 * p).abs();
            assert!(dev < 4.0 * sigma, "shift {defects:?}: count {count}");
        }
    }

    #[test]
    fn augment_keeps_logical_label_valid() {
        // For samples whose recovery composes with the error to a logical
        // loop, the stored class must stay correct after augmentation.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 5;
        let lat = crate::toric::Lattice::new(d);
        for _ in 0..100 {
            let mut err = PauliFrame::identity(d);
            for _ in 0..rng.gen_range(0..5) {
                let q = rng.gen_range(0..2 * d * d);
                err.set_flat(q, Pauli::from_code(rng.gen_range(1..4)));
            }
            // Recovery = error composed with a random logical loop.
            let op = [
                crate::toric::LogicalOp::X1,
                crate::toric::LogicalOp::X2,
                crate::toric::LogicalOp::Z1,
                crate::toric::LogicalOp::Z2,
            ][rng.gen_range(0..4)];
            let rec_frame = compose(&err, &lat.logical_representative(op));
            let sample = Sample {
                syndrome: extract_syndrome(&err),
                recovery: frame_to_recovery(&rec_frame),
                logical: logical_class(&compose(&err, &rec_frame)),
            };
            let aug = augment(&sample, 1.0, &mut rng);
            // Reconstruct the shifted error from the shifted syndrome data:
            // shifting err by the same amount reproduces aug exactly.
            let shifted_err_syndrome = aug.syndrome.clone();
            let rec = recovery_to_frame(&aug.recovery);
            let residual = extract_syndrome(&rec);
            // recovery clears the shifted syndrome...
            assert_eq!(residual, shifted_err_syndrome);
            // ...and the class label is untouched by construction.
            assert_eq!(aug.logical, sample.logical);
        }
    }

    proptest! {
        #[test]
        fn frame_recovery_round_trip(picks in prop::collection::vec((0..50usize, 0..4u8), 0..30)) {
            let d = 5;
            let mut f = PauliFrame::identity(d);
            for (q, code) in picks {
                f.set_flat(q, Pauli::from_code(code));
            }
            let rec = frame_to_recovery(&f);
            prop_assert_eq!(recovery_to_frame(&rec), f);
        }

        #[test]
        fn shifts_compose_additively(
            dr1 in -6isize..7, dc1 in -6isize..7,
            dr2 in -6isize..7, dc2 in -6isize..7,
        ) {
            let mut s = SyndromeTensor::zeros(5);
            s.set(0, 1, 2, true);
            s.set(1, 4, 0, true);
            let a = s.shifted(dr1, dc1).shifted(dr2, dc2);
            let b = s.shifted(dr1 + dr2, dc1 + dc2);
            prop_assert_eq!(a, b);
        }
    }
}
