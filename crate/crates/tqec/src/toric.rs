//! Toric-code lattice geometry and Pauli-frame algebra.
//!
//! The code of distance `d` lives on a `d × d` square lattice with periodic
//! boundary conditions. Data qubits sit on the edges, so there are `2d²` of
//! them, split into two sublattices of `d²` each: sublattice 0 collects the
//! qubits read out column-wise, sublattice 1 the qubits read out row-wise.
//! A qubit is addressed as `(s, r, c)` with flat index `s·d² + r·d + c`.
//!
//! Two commuting stabilizer families generate the check group:
//!
//! * plaquette operators (Z-type, syndrome channel 0) detect `X`/`Y` errors,
//! * star operators (X-type, syndrome channel 1) detect `Z`/`Y` errors.
//!
//! Each stabilizer touches four qubits and each qubit belongs to exactly two
//! plaquettes and two stars. The index convention below is fixed so that the
//! canonical straight logical loops run along row 0 / column 0 of the two
//! sublattices, and so that tensor layouts agree with the serialized syndrome
//! and recovery formats used elsewhere in the crate (see the frozen reference
//! vectors in the tests). All coordinate arithmetic wraps modulo `d`.
//!
//! A flipped stabilizer is called a *defect* (anyon). An error chain creates
//! defect pairs at its end points; closed chains are invisible to the
//! syndrome and either belong to the stabilizer group (contractible) or wind
//! around the torus and implement one of the four logical operators.

use crate::mapping::SyndromeTensor;

/// Single-qubit Pauli operator. The discriminants match the serialized
/// recovery codes used across the crate: `I=0, X=1, Z=2, Y=3`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Pauli {
    I = 0,
    X = 1,
    Z = 2,
    Y = 3,
}

impl Pauli {
    /// Decode a serialized recovery code. Panics on codes outside `0..=3`.
    pub fn from_code(code: u8) -> Pauli {
        match code {
            0 => Pauli::I,
            1 => Pauli::X,
            2 => Pauli::Z,
            3 => Pauli::Y,
            _ => panic!("invalid Pauli code {code}"),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Group product up to phase: `X·Z = Y`, `X·Y = Z`, and so on.
    pub fn product(self, other: Pauli) -> Pauli {
        // Phase-free Pauli multiplication is XOR on the (x, z) bit pairs.
        let x = self.has_x() ^ other.has_x();
        let z = self.has_z() ^ other.has_z();
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (false, true) => Pauli::Z,
            (true, true) => Pauli::Y,
        }
    }

    /// True for `X` and `Y`: the operators that anticommute with `Z` checks.
    pub fn has_x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// True for `Z` and `Y`: the operators that anticommute with `X` checks.
    pub fn has_z(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }
}

/// The two stabilizer families.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StabilizerKind {
    /// Z-type check around a face; flips signal `X`/`Y` errors (channel 0).
    Plaquette,
    /// X-type check around a vertex; flips signal `Z`/`Y` errors (channel 1).
    Star,
}

/// The four canonical logical operators, one per homology generator.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LogicalOp {
    X1,
    X2,
    Z1,
    Z2,
}

/// Homology class of a syndrome-free Pauli frame, as four bits
/// `(X̄₁, X̄₂, Z̄₁, Z̄₂)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct LogicalClass(pub [bool; 4]);

impl LogicalClass {
    pub const TRIVIAL: LogicalClass = LogicalClass([false; 4]);

    pub fn is_trivial(self) -> bool {
        self == Self::TRIVIAL
    }

    pub fn xor(self, other: LogicalClass) -> LogicalClass {
        let mut out = [false; 4];
        for (bit, (&a, &b)) in out.iter_mut().zip(self.0.iter().zip(&other.0)) {
            *bit = a ^ b;
        }
        LogicalClass(out)
    }

    /// Pack as a 4-bit integer, bit 0 = X̄₁ flag.
    pub fn to_bits(self) -> u8 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as u8) << i))
    }

    pub fn from_bits(bits: u8) -> LogicalClass {
        assert!(bits < 16, "logical class uses only 4 bits, got {bits}");
        LogicalClass([bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, bits & 8 != 0])
    }
}

/// Geometry of a distance-`d` toric code: stabilizer supports, logical
/// representatives, and the qubit indexing shared by every other module.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Lattice {
    d: usize,
}

impl Lattice {
    pub fn new(d: usize) -> Lattice {
        assert!(d >= 2, "toric code needs distance >= 2, got {d}");
        Lattice { d }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.d * self.d
    }

    /// Flat index of qubit `(s, r, c)`; all three coordinates are checked.
    pub fn qubit(&self, s: usize, r: usize, c: usize) -> usize {
        assert!(
            s < 2 && r < self.d && c < self.d,
            "qubit ({s},{r},{c}) out of range for d={}",
            self.d
        );
        s * self.d * self.d + r * self.d + c
    }

    /// Like [`Lattice::qubit`] but wrapping `r`/`c` modulo `d`, which keeps
    /// the stabilizer-support formulas free of explicit modular clutter.
    fn qubit_wrapped(&self, s: usize, r: isize, c: isize) -> usize {
        let d = self.d as isize;
        let r = r.rem_euclid(d) as usize;
        let c = c.rem_euclid(d) as usize;
        s * self.d * self.d + r * self.d + c
    }

    /// The four qubits of the stabilizer at `(r, c)`.
    ///
    /// The plaquette at `(r, c)` couples a vertically adjacent pair on
    /// sublattice 0 and a horizontally adjacent pair on sublattice 1; the
    /// star does the opposite. The row offsets pin the stabilizer grids to
    /// the qubit grids; together with the logical representatives below they
    /// are fixed by the frozen reference vectors in the test module.
    pub fn stabilizer_support(&self, kind: StabilizerKind, r: usize, c: usize) -> [usize; 4] {
        assert!(
            r < self.d && c < self.d,
            "stabilizer ({r},{c}) out of range for d={}",
            self.d
        );
        let (r, c) = (r as isize, c as isize);
        match kind {
            StabilizerKind::Plaquette => [
                self.qubit_wrapped(0, r, c),
                self.qubit_wrapped(0, r - 1, c),
                self.qubit_wrapped(1, r - 2, c),
                self.qubit_wrapped(1, r - 2, c + 1),
            ],
            StabilizerKind::Star => [
                self.qubit_wrapped(0, r, c - 1),
                self.qubit_wrapped(0, r, c),
                self.qubit_wrapped(1, r - 2, c),
                self.qubit_wrapped(1, r - 1, c),
            ],
        }
    }

    /// Qubit shared by the channel-0 (plaquette) defect sites `(r, c)` and
    /// `(r+1, c)`. An `X` here moves a channel-0 defect one row.
    pub fn plaquette_edge_down(&self, r: usize, c: usize) -> usize {
        self.qubit_wrapped(0, r as isize, c as isize)
    }

    /// Qubit shared by the channel-0 defect sites `(r, c)` and `(r, c+1)`.
    pub fn plaquette_edge_right(&self, r: usize, c: usize) -> usize {
        self.qubit_wrapped(1, r as isize - 2, c as isize + 1)
    }

    /// Qubit shared by the channel-1 (star) defect sites `(r, c)` and
    /// `(r+1, c)`. A `Z` here moves a channel-1 defect one row.
    pub fn star_edge_down(&self, r: usize, c: usize) -> usize {
        self.qubit_wrapped(1, r as isize - 1, c as isize)
    }

    /// Qubit shared by the channel-1 defect sites `(r, c)` and `(r, c+1)`.
    pub fn star_edge_right(&self, r: usize, c: usize) -> usize {
        self.qubit_wrapped(0, r as isize, c as isize)
    }

    /// Canonical representative of a logical operator: a straight
    /// non-contractible loop along row 0 or column 0 of one sublattice.
    pub fn logical_representative(&self, op: LogicalOp) -> PauliFrame {
        let mut frame = PauliFrame::identity(self.d);
        for k in 0..self.d {
            match op {
                LogicalOp::X1 => frame.set(0, k, 0, Pauli::X),
                LogicalOp::X2 => frame.set(1, 0, k, Pauli::X),
                LogicalOp::Z1 => frame.set(1, k, 0, Pauli::Z),
                LogicalOp::Z2 => frame.set(0, 0, k, Pauli::Z),
            }
        }
        frame
    }

    /// Apply (compose onto `frame`) the stabilizer at `(r, c)`.
    pub fn apply_stabilizer(&self, frame: &mut PauliFrame, kind: StabilizerKind, r: usize, c: usize) {
        let op = match kind {
            StabilizerKind::Plaquette => Pauli::Z,
            StabilizerKind::Star => Pauli::X,
        };
        for q in self.stabilizer_support(kind, r, c) {
            frame.ops[q] = frame.ops[q].product(op);
        }
    }
}

/// A Pauli operator on all `2d²` data qubits, stored up to global phase.
///
/// Frames model both error chains and recovery chains; composing the two
/// should land in the stabilizer group when decoding succeeds.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PauliFrame {
    d: usize,
    ops: Vec<Pauli>,
}

impl PauliFrame {
    pub fn identity(d: usize) -> PauliFrame {
        PauliFrame {
            d,
            ops: vec![Pauli::I; 2 * d * d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.ops
    }

    pub fn get(&self, s: usize, r: usize, c: usize) -> Pauli {
        self.ops[Lattice::new(self.d).qubit(s, r, c)]
    }

    pub fn set(&mut self, s: usize, r: usize, c: usize, op: Pauli) {
        let q = Lattice::new(self.d).qubit(s, r, c);
        self.ops[q] = op;
    }

    pub fn get_flat(&self, q: usize) -> Pauli {
        self.ops[q]
    }

    pub fn set_flat(&mut self, q: usize, op: Pauli) {
        self.ops[q] = op;
    }

    /// Multiply `op` onto qubit `q` (used when accumulating chains that may
    /// cross: an `X` chain over a `Z` chain leaves a `Y`).
    pub fn mul_flat(&mut self, q: usize, op: Pauli) {
        self.ops[q] = self.ops[q].product(op);
    }

    /// Number of non-identity single-qubit operators.
    pub fn weight(&self) -> usize {
        self.ops.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(|&p| p == Pauli::I)
    }

    /// Cyclically translate the frame by `(dr, dc)` on both sublattices.
    /// The syndrome translates with it and the homology class is preserved.
    pub fn shifted(&self, dr: isize, dc: isize) -> PauliFrame {
        let d = self.d as isize;
        let mut out = PauliFrame::identity(self.d);
        for s in 0..2 {
            for r in 0..self.d {
                for c in 0..self.d {
                    let src_r = (r as isize - dr).rem_euclid(d) as usize;
                    let src_c = (c as isize - dc).rem_euclid(d) as usize;
                    out.set(s, r, c, self.get(s, src_r, src_c));
                }
            }
        }
        out
    }
}

/// Entrywise Pauli product of two frames (phases dropped). Composition is
/// how recoveries are audited: `compose(error, recovery)` must be a
/// stabilizer for a fully successful correction.
pub fn compose(a: &PauliFrame, b: &PauliFrame) -> PauliFrame {
    assert_eq!(a.d, b.d, "cannot compose frames of distance {} and {}", a.d, b.d);
    let ops = a
        .ops
        .iter()
        .zip(&b.ops)
        .map(|(&p, &q)| p.product(q))
        .collect();
    PauliFrame { d: a.d, ops }
}

/// Measure every stabilizer against `frame` and collect the flip parities:
/// channel 0 holds the plaquette outcomes, channel 1 the star outcomes.
pub fn extract_syndrome(frame: &PauliFrame) -> SyndromeTensor {
    let lat = Lattice::new(frame.d);
    let mut syn = SyndromeTensor::zeros(frame.d);
    for r in 0..frame.d {
        for c in 0..frame.d {
            let mut plaq = false;
            for q in lat.stabilizer_support(StabilizerKind::Plaquette, r, c) {
                plaq ^= frame.ops[q].has_x();
            }
            syn.set(0, r, c, plaq);
            let mut star = false;
            for q in lat.stabilizer_support(StabilizerKind::Star, r, c) {
                star ^= frame.ops[q].has_z();
            }
            syn.set(1, r, c, star);
        }
    }
    syn
}

/// Homology class of a syndrome-free frame.
///
/// Each flag is the anticommutation parity of the frame with the dual
/// canonical loop that crosses the flagged operator exactly once: the `X̄₁`
/// flag counts `X`/`Y` entries over the support of `Z̄₂` (sublattice 0,
/// row 0), the `X̄₂` flag over `Z̄₁` (sublattice 1, column 0), the `Z̄₁`
/// flag counts `Z`/`Y` entries over `X̄₂` (sublattice 1, row 0), and the
/// `Z̄₂` flag over `X̄₁` (sublattice 0, column 0). Panics if the frame has
/// a non-trivial syndrome, since homology is only defined on the code space.
pub fn logical_class(frame: &PauliFrame) -> LogicalClass {
    assert!(
        extract_syndrome(frame).is_zero(),
        "logical_class is undefined for frames with a non-trivial syndrome"
    );
    let d = frame.d;
    let mut bits = [false; 4];
    for k in 0..d {
        bits[0] ^= frame.get(0, 0, k).has_x();
        bits[1] ^= frame.get(1, k, 0).has_x();
        bits[2] ^= frame.get(1, 0, k).has_z();
        bits[3] ^= frame.get(0, k, 0).has_z();
    }
    LogicalClass(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference vectors freezing the layout convention at d = 3: an error
    /// with `X` on qubits (0,2,1) and (1,0,1) must produce channel-0 defects
    /// at (0,1) and (2,0) and a clean channel 1.
    fn reference_error_d3() -> PauliFrame {
        let mut e = PauliFrame::identity(3);
        e.set(0, 2, 1, Pauli::X);
        e.set(1, 0, 1, Pauli::X);
        e
    }

    #[test]
    fn reference_syndrome_d3() {
        let syn = extract_syndrome(&reference_error_d3());
        let mut expect = SyndromeTensor::zeros(3);
        expect.set(0, 0, 1, true);
        expect.set(0, 2, 0, true);
        assert_eq!(syn, expect);
    }

    #[test]
    fn reference_recovery_clears_reference_syndrome() {
        // A different weight-2 chain with the same end points: composing it
        // with the reference error leaves the star stabilizer at (2, 1).
        let mut other = PauliFrame::identity(3);
        other.set(1, 1, 1, Pauli::X);
        other.set(0, 2, 0, Pauli::X);
        assert_eq!(extract_syndrome(&other), extract_syndrome(&reference_error_d3()));

        let net = compose(&reference_error_d3(), &other);
        assert!(extract_syndrome(&net).is_zero());
        assert!(logical_class(&net).is_trivial());

        let lat = Lattice::new(3);
        let mut stab = PauliFrame::identity(3);
        lat.apply_stabilizer(&mut stab, StabilizerKind::Star, 2, 1);
        assert_eq!(net, stab);
    }

    #[test]
    fn supports_have_four_distinct_qubits() {
        for d in [2, 3, 5, 8] {
            let lat = Lattice::new(d);
            for kind in [StabilizerKind::Plaquette, StabilizerKind::Star] {
                for r in 0..d {
                    for c in 0..d {
                        let mut s = lat.stabilizer_support(kind, r, c).to_vec();
                        s.sort_unstable();
                        s.dedup();
                        assert_eq!(s.len(), 4, "degenerate support at d={d} ({r},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn every_qubit_sits_in_two_plaquettes_and_two_stars() {
        for d in [3, 5, 7] {
            let lat = Lattice::new(d);
            for kind in [StabilizerKind::Plaquette, StabilizerKind::Star] {
                let mut count = vec![0usize; lat.n_qubits()];
                for r in 0..d {
                    for c in 0..d {
                        for q in lat.stabilizer_support(kind, r, c) {
                            count[q] += 1;
                        }
                    }
                }
                assert!(count.iter().all(|&n| n == 2), "d={d} {kind:?}");
            }
        }
    }

    #[test]
    fn distinct_stars_share_at_most_one_qubit() {
        let d = 5;
        let lat = Lattice::new(d);
        let stars: Vec<Vec<usize>> = (0..d * d)
            .map(|i| {
                let mut s = lat
                    .stabilizer_support(StabilizerKind::Star, i / d, i % d)
                    .to_vec();
                s.sort_unstable();
                s
            })
            .collect();
        for i in 0..stars.len() {
            for j in i + 1..stars.len() {
                let shared = stars[i].iter().filter(|q| stars[j].contains(q)).count();
                assert!(shared <= 1, "stars {i} and {j} share {shared} qubits");
            }
        }
    }

    #[test]
    fn stabilizers_commute() {
        // Any plaquette/star pair overlaps on an even number of qubits, so
        // every stabilizer, viewed as an error, has a silent syndrome.
        for d in [3, 5, 6] {
            let lat = Lattice::new(d);
            for kind in [StabilizerKind::Plaquette, StabilizerKind::Star] {
                for r in 0..d {
                    for c in 0..d {
                        let mut f = PauliFrame::identity(d);
                        lat.apply_stabilizer(&mut f, kind, r, c);
                        assert!(extract_syndrome(&f).is_zero(), "d={d} {kind:?} ({r},{c})");
                        assert!(logical_class(&f).is_trivial());
                    }
                }
            }
        }
    }

    #[test]
    fn identity_frame_has_zero_syndrome_and_trivial_class() {
        let f = PauliFrame::identity(5);
        assert!(extract_syndrome(&f).is_zero());
        assert!(logical_class(&f).is_trivial());
    }

    #[test]
    fn single_x_error_creates_one_adjacent_defect_pair() {
        let d = 5;
        for s in 0..2 {
            for r in 0..d {
                for c in 0..d {
                    let mut f = PauliFrame::identity(d);
                    f.set(s, r, c, Pauli::X);
                    let syn = extract_syndrome(&f);
                    let ch0 = syn.defects(0);
                    assert_eq!(ch0.len(), 2, "qubit ({s},{r},{c})");
                    assert!(syn.defects(1).is_empty());
                    // The pair sits on neighboring sites of the defect graph.
                    let (a, b) = (ch0[0], ch0[1]);
                    let dr = (a.0 as isize - b.0 as isize).rem_euclid(d as isize);
                    let dc = (a.1 as isize - b.1 as isize).rem_euclid(d as isize);
                    let adjacent = (dr == 0 && (dc == 1 || dc == d as isize - 1))
                        || (dc == 0 && (dr == 1 || dr == d as isize - 1));
                    assert!(adjacent, "defects {a:?} {b:?} not adjacent");
                }
            }
        }
    }

    #[test]
    fn single_z_error_flags_only_stars_and_y_flags_both() {
        let d = 4;
        let mut f = PauliFrame::identity(d);
        f.set(0, 1, 2, Pauli::Z);
        let syn = extract_syndrome(&f);
        assert!(syn.defects(0).is_empty());
        assert_eq!(syn.defects(1).len(), 2);

        let mut g = PauliFrame::identity(d);
        g.set(1, 3, 0, Pauli::Y);
        let syn = extract_syndrome(&g);
        assert_eq!(syn.defects(0).len(), 2);
        assert_eq!(syn.defects(1).len(), 2);
    }

    #[test]
    fn defect_step_edges_connect_their_sites() {
        let d = 5;
        let lat = Lattice::new(d);
        for r in 0..d {
            for c in 0..d {
                // Channel 0 steps are X chains, channel 1 steps are Z chains.
                let cases = [
                    (Pauli::X, lat.plaquette_edge_down(r, c), 0, ((r + 1) % d, c)),
                    (Pauli::X, lat.plaquette_edge_right(r, c), 0, (r, (c + 1) % d)),
                    (Pauli::Z, lat.star_edge_down(r, c), 1, ((r + 1) % d, c)),
                    (Pauli::Z, lat.star_edge_right(r, c), 1, (r, (c + 1) % d)),
                ];
                for (op, q, ch, other) in cases {
                    let mut f = PauliFrame::identity(d);
                    f.set_flat(q, op);
                    let syn = extract_syndrome(&f);
                    let mut expect = vec![(r, c), other];
                    expect.sort_unstable();
                    assert_eq!(syn.defects(ch), expect, "step from ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn logical_representatives_are_syndrome_free_and_one_hot() {
        for d in [3, 5, 7] {
            let lat = Lattice::new(d);
            let expect = [
                (LogicalOp::X1, [true, false, false, false]),
                (LogicalOp::X2, [false, true, false, false]),
                (LogicalOp::Z1, [false, false, true, false]),
                (LogicalOp::Z2, [false, false, false, true]),
            ];
            for (op, bits) in expect {
                let rep = lat.logical_representative(op);
                assert!(extract_syndrome(&rep).is_zero(), "d={d} {op:?}");
                assert_eq!(logical_class(&rep), LogicalClass(bits), "d={d} {op:?}");
            }
        }
    }

    #[test]
    fn pauli_products_follow_the_group_table() {
        use Pauli::*;
        assert_eq!(X.product(Z), Y);
        assert_eq!(Z.product(X), Y);
        assert_eq!(X.product(Y), Z);
        assert_eq!(Y.product(Z), X);
        for p in [I, X, Y, Z] {
            assert_eq!(p.product(p), I);
            assert_eq!(p.product(I), p);
        }
    }

    #[test]
    fn compose_is_entrywise_and_self_inverse() {
        let mut a = PauliFrame::identity(3);
        a.set(0, 0, 0, Pauli::X);
        a.set(1, 2, 2, Pauli::Z);
        let mut b = PauliFrame::identity(3);
        b.set(0, 0, 0, Pauli::Z);
        let ab = compose(&a, &b);
        assert_eq!(ab.get(0, 0, 0), Pauli::Y);
        assert_eq!(ab.get(1, 2, 2), Pauli::Z);
        assert!(compose(&a, &a).is_identity());
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn stabilizer_coordinates_are_validated() {
        Lattice::new(3).stabilizer_support(StabilizerKind::Star, 3, 0);
    }

    #[test]
    #[should_panic(expected = "non-trivial syndrome")]
    fn logical_class_rejects_noncode_frames() {
        let mut f = PauliFrame::identity(3);
        f.set(0, 1, 1, Pauli::Y);
        logical_class(&f);
    }

    #[test]
    fn logical_class_bits_pack_and_unpack() {
        for bits in 0..16u8 {
            assert_eq!(LogicalClass::from_bits(bits).to_bits(), bits);
        }
    }

    /// Random frame on a small lattice, as (sublattice, row, col, op) picks.
    fn arb_frame(d: usize, max_ops: usize) -> impl Strategy<Value = PauliFrame> {
        prop::collection::vec((0..2usize, 0..d, 0..d, 1..4u8), 0..max_ops).prop_map(
            move |picks| {
                let mut f = PauliFrame::identity(d);
                for (s, r, c, code) in picks {
                    let q = Lattice::new(d).qubit(s, r, c);
                    f.mul_flat(q, Pauli::from_code(code));
                }
                f
            },
        )
    }

    /// Zero-syndrome frame: a random product of stabilizers and logicals.
    fn arb_code_frame(d: usize) -> impl Strategy<Value = PauliFrame> {
        (
            prop::collection::vec((prop::bool::ANY, 0..d, 0..d), 0..12),
            prop::collection::vec(0..4usize, 0..3),
        )
            .prop_map(move |(stabs, logicals)| {
                let lat = Lattice::new(d);
                let mut f = PauliFrame::identity(d);
                for (plaq, r, c) in stabs {
                    let kind = if plaq {
                        StabilizerKind::Plaquette
                    } else {
                        StabilizerKind::Star
                    };
                    lat.apply_stabilizer(&mut f, kind, r, c);
                }
                for which in logicals {
                    let op = [LogicalOp::X1, LogicalOp::X2, LogicalOp::Z1, LogicalOp::Z2][which];
                    f = compose(&f, &lat.logical_representative(op));
                }
                f
            })
    }

    proptest! {
        #[test]
        fn syndrome_channel_parity_is_even(f in arb_frame(4, 20)) {
            // Every error flips pairs of checks, so defect counts are even.
            let syn = extract_syndrome(&f);
            prop_assert_eq!(syn.defects(0).len() % 2, 0);
            prop_assert_eq!(syn.defects(1).len() % 2, 0);
        }

        #[test]
        fn syndrome_ignores_stabilizer_factors(
            f in arb_frame(4, 12),
            plaq in prop::bool::ANY,
            r in 0..4usize,
            c in 0..4usize,
        ) {
            let lat = Lattice::new(4);
            let mut g = f.clone();
            let kind = if plaq { StabilizerKind::Plaquette } else { StabilizerKind::Star };
            lat.apply_stabilizer(&mut g, kind, r, c);
            prop_assert_eq!(extract_syndrome(&f), extract_syndrome(&g));
        }

        #[test]
        fn syndrome_translates_with_the_frame(
            f in arb_frame(5, 16),
            dr in -5isize..6,
            dc in -5isize..6,
        ) {
            let shifted = f.shifted(dr, dc);
            let expect = extract_syndrome(&f).shifted(dr, dc);
            prop_assert_eq!(extract_syndrome(&shifted), expect);
        }

        #[test]
        fn logical_class_is_a_homomorphism(a in arb_code_frame(4), b in arb_code_frame(4)) {
            let ab = compose(&a, &b);
            prop_assert!(extract_syndrome(&ab).is_zero());
            prop_assert_eq!(
                logical_class(&ab),
                logical_class(&a).xor(logical_class(&b))
            );
        }

        #[test]
        fn logical_class_is_translation_invariant(
            f in arb_code_frame(5),
            dr in -4isize..5,
            dc in -4isize..5,
        ) {
            prop_assert_eq!(logical_class(&f.shifted(dr, dc)), logical_class(&f));
        }
    }
}
