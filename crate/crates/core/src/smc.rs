//! Secure multiparty summation by additive secret sharing.
//!
//! Each agent splits its private vector into `N` random shares that sum to
//! the vector modulo a fixed ring size, keeps one share, and sends one to
//! every other agent. Each agent then publishes only the sum of the shares
//! it holds; the operator adds those sums and obtains `Σ_n x_n` without
//! seeing any individual vector. Any strict subset of an agent's shares is
//! jointly uniform, so the scheme hides inputs information-theoretically
//! against semi-honest parties.
//!
//! All arithmetic happens in exact fixed-point (scale `2^20`, modulus
//! `2^61`): modular integer addition is associative and commutative, so
//! aggregates are bit-identical regardless of share randomness, message
//! order, or agent numbering — the property the transcript-equality tests
//! rely on. Floating-point "mod R" would break that.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Ring size for share arithmetic.
pub const MODULUS: u64 = 1 << 61;

/// Fixed-point scale: values are quantized to multiples of `2^-20`.
pub const SCALE_BITS: u32 = 20;
pub const SCALE: f64 = (1u64 << SCALE_BITS) as f64;

/// Largest encodable magnitude: signed values must stay in `(−M/4, M/4)`
/// after scaling so that sums of `N` in-range inputs still decode
/// unambiguously.
pub const MAX_ENCODABLE: f64 = (MODULUS / 4) as f64 / SCALE;

/// One ring element: a quantized real, stored as its residue mod `2^61`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixedPoint {
    pub raw: u64,
}

impl FixedPoint {
    pub const ZERO: FixedPoint = FixedPoint { raw: 0 };

    pub fn from_raw(raw: u64) -> Self {
        debug_assert!(raw < MODULUS, "raw word out of ring range");
        FixedPoint { raw: raw % MODULUS }
    }

    /// Quantize a real to the nearest multiple of `2^-20` and reduce into
    /// the ring. Aborts if the magnitude cannot be represented safely.
    pub fn encode(v: f64) -> Self {
        assert!(
            v.is_finite() && v.abs() < MAX_ENCODABLE,
            "magnitude overflow: |{v}| does not fit the fixed-point range"
        );
        let q = (v * SCALE).round() as i128;
        FixedPoint {
            raw: q.rem_euclid(MODULUS as i128) as u64,
        }
    }

    /// Interpret the residue as a signed quantity (values in the upper
    /// half of the ring are negative) and undo the scaling.
    pub fn decode(self) -> f64 {
        let signed = if self.raw >= MODULUS / 2 {
            self.raw as i128 - MODULUS as i128
        } else {
            self.raw as i128
        };
        signed as f64 / SCALE
    }

    pub fn add(self, other: FixedPoint) -> FixedPoint {
        FixedPoint {
            raw: (self.raw + other.raw) % MODULUS,
        }
    }

    pub fn sub(self, other: FixedPoint) -> FixedPoint {
        FixedPoint {
            raw: (self.raw + MODULUS - other.raw) % MODULUS,
        }
    }

    pub fn sum<I: IntoIterator<Item = FixedPoint>>(items: I) -> FixedPoint {
        items
            .into_iter()
            .fold(FixedPoint::ZERO, |acc, v| acc.add(v))
    }
}

/// The share vector agent `sender` hands to agent `receiver`: coordinate
/// `t` holds `s_{sender,t,receiver}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareBundle {
    pub sender: usize,
    pub receiver: usize,
    pub shares: Vec<FixedPoint>,
}

/// The published per-agent partial sum: coordinate `t` holds
/// `σ_{owner,t} = Σ_senders s_{sender,t,owner}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaVector {
    pub owner: usize,
    pub values: Vec<FixedPoint>,
}

/// Split a private vector into `n_agents` additive share bundles. The
/// first `n_agents − 1` bundles are uniform over the ring; the last one
/// fixes each coordinate's total to the encoded input.
pub fn split<R: Rng>(
    sender: usize,
    x: &[f64],
    n_agents: usize,
    rng: &mut R,
) -> Vec<ShareBundle> {
    assert!(n_agents >= 1, "need at least one agent");
    let per_input_cap = MAX_ENCODABLE / n_agents as f64;
    for v in x {
        assert!(
            v.is_finite() && v.abs() < per_input_cap,
            "magnitude overflow: |{v}| too large for a fleet of {n_agents}"
        );
    }
    let mut bundles: Vec<ShareBundle> = (0..n_agents)
        .map(|receiver| ShareBundle {
            sender,
            receiver,
            shares: Vec::with_capacity(x.len()),
        })
        .collect();
    for &v in x {
        let mut running = FixedPoint::ZERO;
        for bundle in bundles.iter_mut().take(n_agents - 1) {
            let draw = FixedPoint::from_raw(rng.random_range(0..MODULUS));
            running = running.add(draw);
            bundle.shares.push(draw);
        }
        bundles[n_agents - 1]
            .shares
            .push(FixedPoint::encode(v).sub(running));
    }
    bundles
}

/// Fold the bundles an agent received into its published partial sum.
pub fn sigma_from_bundles(owner: usize, received: &[ShareBundle]) -> SigmaVector {
    assert!(!received.is_empty(), "agent received no bundles");
    let horizon = received[0].shares.len();
    let mut values = vec![FixedPoint::ZERO; horizon];
    for bundle in received {
        assert_eq!(bundle.receiver, owner, "bundle routed to the wrong agent");
        assert_eq!(bundle.shares.len(), horizon, "bundle length mismatch");
        for (acc, share) in values.iter_mut().zip(&bundle.shares) {
            *acc = acc.add(*share);
        }
    }
    SigmaVector { owner, values }
}

/// Ring-level aggregate of the published partial sums; one word per
/// period. Exactly the encoded plain sum, independent of share randomness.
pub fn aggregate_words(sigmas: &[SigmaVector]) -> Vec<FixedPoint> {
    assert!(!sigmas.is_empty(), "no partial sums to aggregate");
    let mut seen = vec![false; sigmas.len()];
    for s in sigmas {
        assert!(s.owner < sigmas.len(), "owner id out of range: missing agent");
        assert!(!seen[s.owner], "duplicate owner {}", s.owner);
        seen[s.owner] = true;
    }
    let horizon = sigmas[0].values.len();
    let mut out = vec![FixedPoint::ZERO; horizon];
    for s in sigmas {
        assert_eq!(s.values.len(), horizon, "partial sum length mismatch");
        for (acc, v) in out.iter_mut().zip(&s.values) {
            *acc = acc.add(*v);
        }
    }
    out
}

/// Decoded aggregate `Σ_n x_n` at fixed-point resolution.
pub fn aggregate(sigmas: &[SigmaVector]) -> Vec<f64> {
    aggregate_words(sigmas)
        .into_iter()
        .map(FixedPoint::decode)
        .collect()
}

/// One complete scalar summation round: share, exchange, publish, add.
pub fn smc_sum_scalar<R: Rng>(values: &[f64], rng: &mut R) -> f64 {
    let n = values.len();
    assert!(n >= 1, "need at least one value");
    let mut inbox: Vec<Vec<ShareBundle>> = vec![Vec::with_capacity(n); n];
    for (sender, &v) in values.iter().enumerate() {
        for bundle in split(sender, &[v], n, rng) {
            inbox[bundle.receiver].push(bundle);
        }
    }
    let sigmas: Vec<SigmaVector> = inbox
        .iter()
        .enumerate()
        .map(|(owner, received)| sigma_from_bundles(owner, received))
        .collect();
    aggregate(&sigmas)[0]
}
