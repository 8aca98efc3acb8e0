//! Minimum-weight perfect-matching (MWPM) reference decoder.
//!
//! A syndrome flags defect sites on the two `d × d` check grids; with perfect
//! measurements each channel flags an even number of sites. This decoder
//! pairs up the defects of each channel so that the summed wrap-around grid
//! distance is minimal, then joins every pair with a shortest corrective
//! chain: `X` chains move channel-0 (plaquette) defects, `Z` chains move
//! channel-1 (star) defects. The two per-channel chain sets are composed
//! qubit-wise, so a qubit crossed by both an `X` and a `Z` chain ends up
//! with a `Y`.
//!
//! The pairing is an exact minimum-weight perfect matching obtained from the
//! [`blossom`] maximum-weight matcher run on negated-and-offset weights; an
//! exhaustive bitmask dynamic program over defect subsets is kept alongside
//! as an oracle for cross-checking the matcher on small instances.
//!
//! Because the two channels are decoded independently, correlated `Y` errors
//! are handled suboptimally — each `Y` is paid for twice. This is the usual
//! MWPM treatment and the main weakness that learned decoders exploit under
//! biased noise.

pub mod blossom;

use thiserror::Error;

use crate::mapping::{frame_to_recovery, RecoveryTensor, SyndromeTensor};
use crate::toric::{Lattice, Pauli, PauliFrame};

/// The flagged check sites of one syndrome channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefectSet {
    /// Syndrome channel the defects were read from: 0 = plaquette, 1 = star.
    pub channel: usize,
    /// Distinct defect coordinates `(r, c)`, in row-major order.
    pub coords: Vec<(usize, usize)>,
}

impl DefectSet {
    /// Collect the flagged sites of `channel` in row-major order.
    pub fn from_syndrome(syndrome: &SyndromeTensor, channel: usize) -> DefectSet {
        assert!(channel < 2, "channel must be 0 or 1, got {channel}");
        DefectSet {
            channel,
            coords: syndrome.defects(channel),
        }
    }
}

/// A perfect matching of defect coordinates and its total toric distance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    /// Matched pairs; each pair is ordered row-major and the list is sorted,
    /// so equal matchings compare equal regardless of discovery order.
    pub pairs: Vec<((usize, usize), (usize, usize))>,
    /// Sum of [`toric_distance`] over all pairs.
    pub total_weight: usize,
}

/// Failure modes of matching-based decoding.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MwpmError {
    /// A channel flagged an odd number of defects, so no perfect matching
    /// exists. This happens only with noisy measurements; the evaluation
    /// policy is to count such samples as decoding failures.
    #[error("channel {channel} has {count} defects; a perfect matching needs an even count")]
    OddParity { channel: usize, count: usize },
}

/// Shortest wrap-around grid distance between two check sites.
///
/// Each axis contributes the shorter of the direct and the wrapped arc:
/// `min(|Δr|, d − |Δr|) + min(|Δc|, d − |Δc|)`.
pub fn toric_distance(a: (usize, usize), b: (usize, usize), d: usize) -> usize {
    debug_assert!(a.0 < d && a.1 < d && b.0 < d && b.1 < d);
    let dr = a.0.abs_diff(b.0);
    let dc = a.1.abs_diff(b.1);
    dr.min(d - dr) + dc.min(d - dc)
}

/// Exact minimum-weight perfect matching of a defect set.
///
/// Runs the blossom maximum-weight matcher on the complete defect graph with
/// weights `(max toric distance + 1) − toric_distance`, which makes every
/// weight positive; together with the maximum-cardinality mode this yields a
/// perfect matching of minimum total distance. The result is deterministic
/// for a given coordinate order.
pub fn min_weight_matching(defects: &DefectSet, d: usize) -> Result<Matching, MwpmError> {
    let coords = &defects.coords;
    let n = coords.len();
    if !n.is_multiple_of(2) {
        return Err(MwpmError::OddParity {
            channel: defects.channel,
            count: n,
        });
    }
    if n == 0 {
        return Ok(Matching {
            pairs: Vec::new(),
            total_weight: 0,
        });
    }

    let offset = 2 * (d / 2) + 1; // strictly above the largest toric distance
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = (offset - toric_distance(coords[i], coords[j], d)) as blossom::Weight;
            edges.push((i, j, w));
        }
    }
    let mate = blossom::Matching::new(edges).max_cardinality().solve();

    let mut pairs = Vec::with_capacity(n / 2);
    let mut total_weight = 0;
    for (i, &j) in mate.iter().enumerate() {
        assert!(
            j != blossom::SENTINEL,
            "complete graph with an even vertex count must match perfectly"
        );
        if i < j {
            let (a, b) = (coords[i], coords[j]);
            pairs.push(if a <= b { (a, b) } else { (b, a) });
            total_weight += toric_distance(a, b, d);
        }
    }
    pairs.sort_unstable();
    Ok(Matching {
        pairs,
        total_weight,
    })
}

/// Minimum perfect-matching weight by exhaustive dynamic programming.
///
/// `dp[mask]` is the optimal weight of pairing up the defects selected by
/// `mask`; the lowest set bit is paired with every other member in turn.
/// Exponential in the defect count — this is a cross-check oracle for the
/// blossom matcher, not a decoder.
///
/// # Panics
/// If the defect count is odd or greater than 20.
pub fn exhaustive_matching_weight(coords: &[(usize, usize)], d: usize) -> usize {
    let n = coords.len();
    assert!(n.is_multiple_of(2), "perfect matching needs an even defect count");
    assert!(n <= 20, "exhaustive oracle is exponential in the defect count");
    if n == 0 {
        return 0;
    }

    let mut dist = vec![0usize; n * n];
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] = toric_distance(coords[i], coords[j], d);
        }
    }

    let full = (1usize << n) - 1;
    let mut dp = vec![usize::MAX; 1 << n];
    dp[0] = 0;
    for mask in 1..=full {
        if !mask.count_ones().is_multiple_of(2) {
            continue;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut best = usize::MAX;
        let mut others = rest;
        while others != 0 {
            let j = others.trailing_zeros() as usize;
            others &= others - 1;
            let sub = dp[rest & !(1 << j)];
            if sub != usize::MAX {
                best = best.min(sub + dist[i * n + j]);
            }
        }
        dp[mask] = best;
    }
    dp[full]
}

/// Corrective chain joining one matched pair of defects.
///
/// The chain is an "L" on the torus: it first walks rows (at the first
/// defect's column), then columns (at the second defect's row), each leg
/// along its shorter wrap-around arc with ties broken toward increasing
/// index. Channel-0 pairs get `X` operators, channel-1 pairs get `Z`; the
/// resulting partial recovery's syndrome toggles exactly the two paired
/// sites.
pub fn path_recovery(
    pair: ((usize, usize), (usize, usize)),
    channel: usize,
    d: usize,
) -> RecoveryTensor {
    let mut frame = PauliFrame::identity(d);
    apply_path(&mut frame, pair, channel, d);
    frame_to_recovery(&frame)
}

/// Compose the chain for `pair` onto `frame` (shared helper so that a full
/// decode can accumulate all chains in one frame, letting crossing chains
/// cancel or merge by Pauli product).
fn apply_path(frame: &mut PauliFrame, pair: ((usize, usize), (usize, usize)), channel: usize, d: usize) {
    assert!(channel < 2, "channel must be 0 or 1, got {channel}");
    let lattice = Lattice::new(d);
    let ((mut r, c0), (r1, c1)) = pair;
    let op = if channel == 0 { Pauli::X } else { Pauli::Z };

    // Row leg at column c0: walk from row r to row r1.
    let down = (r1 + d - r) % d;
    let up = (r + d - r1) % d;
    let steps = down.min(up);
    let go_down = down <= up; // tie -> increasing index
    for _ in 0..steps {
        let q = if go_down {
            let q = edge_down(&lattice, channel, r, c0);
            r = (r + 1) % d;
            q
        } else {
            r = (r + d - 1) % d;
            edge_down(&lattice, channel, r, c0)
        };
        frame.mul_flat(q, op);
    }

    // Column leg at row r1: walk from column c0 to column c1.
    let mut c = c0;
    let right = (c1 + d - c) % d;
    let left = (c + d - c1) % d;
    let steps = right.min(left);
    let go_right = right <= left;
    for _ in 0..steps {
        let q = if go_right {
            let q = edge_right(&lattice, channel, r1, c);
            c = (c + 1) % d;
            q
        } else {
            c = (c + d - 1) % d;
            edge_right(&lattice, channel, r1, c)
        };
        frame.mul_flat(q, op);
    }
}

/// Qubit whose flip moves a defect of `channel` between `(r, c)` and `(r+1, c)`.
fn edge_down(lattice: &Lattice, channel: usize, r: usize, c: usize) -> usize {
    if channel == 0 {
        lattice.plaquette_edge_down(r, c)
    } else {
        lattice.star_edge_down(r, c)
    }
}

/// Qubit whose flip moves a defect of `channel` between `(r, c)` and `(r, c+1)`.
fn edge_right(lattice: &Lattice, channel: usize, r: usize, c: usize) -> usize {
    if channel == 0 {
        lattice.plaquette_edge_right(r, c)
    } else {
        lattice.star_edge_right(r, c)
    }
}

/// Full MWPM decode: match and join the defects of both channels.
///
/// Returns the composed recovery; its syndrome equals the input whenever both
/// channels have even parity. Odd parity (possible only with measurement
/// noise) is reported as an error for the caller's failure accounting.
pub fn mwpm_decode(syndrome: &SyndromeTensor) -> Result<RecoveryTensor, MwpmError> {
    let d = syndrome.d();
    let mut frame = PauliFrame::identity(d);
    for channel in 0..2 {
        let defects = DefectSet::from_syndrome(syndrome, channel);
        let matching = min_weight_matching(&defects, d)?;
        for &pair in &matching.pairs {
            apply_path(&mut frame, pair, channel, d);
        }
    }
    Ok(frame_to_recovery(&frame))
}
