//! Pauli noise channels and measurement readout noise.
//!
//! Data qubits suffer independent single-qubit Pauli errors with total rate
//! `p`. The channel family is parameterized by the bias
//! `η = p_y / (p_x + p_z)` with `p_x = p_z`:
//!
//! * `p_y = η/(η+1) · p`, `p_x = p_z = p / (2(η+1))`,
//! * `η = 1/2` is the depolarizing channel `(p/3, p/3, p/3)`,
//! * `η → ∞` is pure `Y` noise `(0, p, 0)`,
//!
//! plus the two degenerate single-axis channels (`X`-only and `Z`-only)
//! that the biased form cannot express. Syndrome measurement noise is
//! modeled as an independent flip of each readout bit with probability
//! `p_m = p`, i.e. an `X` error on the measurement qubit right before it is
//! read out.
//!
//! Sampling uses counter-based streams: sample `i` of a run with seed `s`
//! always draws from the same generator `stream(s, i)` regardless of thread
//! count or batch order, which keeps every experiment replayable.

use crate::mapping::SyndromeTensor;
use crate::toric::{Pauli, PauliFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("error rate p must lie in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("bias eta must be positive, got {0}")]
    InvalidBias(f64),
}

/// Bias parameter `η`; `Infinite` selects the pure-`Y` channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bias {
    Finite(f64),
    Infinite,
}

/// Which Pauli channel to sample from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChannelKind {
    /// `X` errors only: `(p, 0, 0)`.
    BitFlip,
    /// `Z` errors only: `(0, 0, p)`.
    PhaseFlip,
    /// The η-biased family described in the module docs.
    Biased(Bias),
}

impl ChannelKind {
    /// Depolarizing noise is the biased channel at `η = 1/2`.
    pub fn depolarizing() -> ChannelKind {
        ChannelKind::Biased(Bias::Finite(0.5))
    }

    /// Simultaneous bit-and-phase flips: the biased channel at `η = ∞`.
    pub fn bit_phase_flip() -> ChannelKind {
        ChannelKind::Biased(Bias::Infinite)
    }
}

/// Full description of a noise setting: channel, strength, and whether the
/// syndrome readout is itself noisy (with flip rate `p_m = p`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub p: f64,
    pub channel: ChannelKind,
    pub measurement_noise: bool,
}

impl NoiseSpec {
    pub fn new(p: f64, channel: ChannelKind, measurement_noise: bool) -> Result<NoiseSpec, NoiseError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NoiseError::InvalidRate(p));
        }
        if let ChannelKind::Biased(Bias::Finite(eta)) = channel {
            // NaN fails both the range test and `is_finite`.
            if eta <= 0.0 || !eta.is_finite() {
                return Err(NoiseError::InvalidBias(eta));
            }
        }
        Ok(NoiseSpec {
            p,
            channel,
            measurement_noise,
        })
    }

    /// Readout flip probability; zero when measurement noise is disabled.
    pub fn p_m(&self) -> f64 {
        if self.measurement_noise {
            self.p
        } else {
            0.0
        }
    }

    /// Per-qubit probabilities `(p_x, p_y, p_z)`.
    pub fn channel_probs(&self) -> (f64, f64, f64) {
        match self.channel {
            ChannelKind::BitFlip => (self.p, 0.0, 0.0),
            ChannelKind::PhaseFlip => (0.0, 0.0, self.p),
            ChannelKind::Biased(Bias::Infinite) => (0.0, self.p, 0.0),
            ChannelKind::Biased(Bias::Finite(eta)) => {
                let py = eta / (eta + 1.0) * self.p;
                let px = self.p / (2.0 * (eta + 1.0));
                (px, py, px)
            }
        }
    }
}

/// Deterministic per-sample generator: all randomness of sample `index` in
/// a run seeded with `seed` comes from this stream.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draw one iid Pauli error pattern on the `2d²` data qubits.
pub fn sample_error<R: Rng>(d: usize, spec: &NoiseSpec, rng: &mut R) -> PauliFrame {
    let (px, py, pz) = spec.channel_probs();
    let mut frame = PauliFrame::identity(d);
    for q in 0..2 * d * d {
        let u: f64 = rng.gen();
        let op = if u < px {
            Pauli::X
        } else if u < px + py {
            Pauli::Y
        } else if u < px + py + pz {
            Pauli::Z
        } else {
            Pauli::I
        };
        if op != Pauli::I {
            frame.set_flat(q, op);
        }
    }
    frame
}

/// Push a syndrome through noisy readout: each bit flips independently
/// with probability `p_m`. With measurement noise disabled this is the
/// identity and consumes no randomness.
pub fn flip_measurements<R: Rng>(
    syndrome: &SyndromeTensor,
    spec: &NoiseSpec,
    rng: &mut R,
) -> SyndromeTensor {
    let p_m = spec.p_m();
    if p_m == 0.0 {
        return syndrome.clone();
    }
    let d = syndrome.d();
    let mut out = syndrome.clone();
    for ch in 0..2 {
        for r in 0..d {
            for c in 0..d {
                if rng.gen_bool(p_m) {
                    let v = out.get(ch, r, c);
                    out.set(ch, r, c, !v);
                }
            }
        }
    }
    out
}
