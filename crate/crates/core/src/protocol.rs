//! The two-party simulation protocol.
//!
//! Each round Alice and Bob draw two fresh shared directions `v1`, `v2`.
//! Alice picks her outcome `i` with probability `|a_i|/2` and sends the two
//! bits `c = Θ(−a_i·v1)`, `d = Θ(−a_i·v2)`. Bob picks `j` with probability
//! `|b_j|/2` and accepts iff `b_j·((−1)^c v1 + (−1)^d v2) ≥ 0`, answering with
//! one bit. On rejection both start over. Conditioned on acceptance the
//! outcome pair is distributed as `(|a_i||b_j| + a_i·b_j)/4`, and each round
//! accepts with probability exactly 1/2.
//!
//! On the wire a round is Alice's 2-bit payload (`c` then `d`) followed by
//! Bob's 1-bit accept flag.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bloch::{sample_unit_vector, signed_combination, theta, Vec3, UnitVec3};
use crate::povm::Povm;

pub const DEFAULT_MAX_ROUNDS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("no round accepted within {max_rounds} rounds")]
    MaxRoundsExceeded { max_rounds: u32 },
    #[error("max_rounds must be at least 1")]
    ZeroMaxRounds,
}

/// The pair of shared directions for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedRandomness {
    pub v1: UnitVec3,
    pub v2: UnitVec3,
}

impl SharedRandomness {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let v1 = sample_unit_vector(rng);
        let v2 = sample_unit_vector(rng);
        SharedRandomness { v1, v2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

/// One message of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundMessage {
    Signs { c: bool, d: bool },
    Verdict { accept: bool },
}

impl RoundMessage {
    pub fn direction(self) -> Direction {
        match self {
            RoundMessage::Signs { .. } => Direction::AliceToBob,
            RoundMessage::Verdict { .. } => Direction::BobToAlice,
        }
    }

    pub fn bit_len(self) -> u64 {
        match self {
            RoundMessage::Signs { .. } => 2,
            RoundMessage::Verdict { .. } => 1,
        }
    }

    fn write_bits(self, tape: &mut Vec<bool>) {
        match self {
            RoundMessage::Signs { c, d } => tape.extend([c, d]),
            RoundMessage::Verdict { accept } => tape.push(accept),
        }
    }
}

/// Bit-counting link between the parties, optionally keeping every bit sent.
#[derive(Debug, Default, Clone)]
pub struct Channel {
    bits_a_to_b: u64,
    bits_b_to_a: u64,
    tape: Option<Vec<bool>>,
}

impl Channel {
    pub fn new() -> Self {
        Channel::default()
    }

    pub fn recording() -> Self {
        Channel {
            tape: Some(Vec::new()),
            ..Channel::default()
        }
    }

    pub fn send(&mut self, msg: RoundMessage) {
        match msg.direction() {
            Direction::AliceToBob => self.bits_a_to_b += msg.bit_len(),
            Direction::BobToAlice => self.bits_b_to_a += msg.bit_len(),
        }
        if let Some(tape) = self.tape.as_mut() {
            msg.write_bits(tape);
        }
    }

    pub fn bits_a_to_b(&self) -> u64 {
        self.bits_a_to_b
    }

    pub fn bits_b_to_a(&self) -> u64 {
        self.bits_b_to_a
    }

    /// Every bit sent so far, in order. `None` unless built with [`Channel::recording`].
    pub fn tape(&self) -> Option<&[bool]> {
        self.tape.as_deref()
    }
}

/// Outcome and cost of one complete protocol execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub outcome_a: usize,
    pub outcome_b: usize,
    pub rounds: u32,
    pub bits_a_to_b: u64,
    pub bits_b_to_a: u64,
    /// Rounds in which Alice's block-coded bit `d′` was 1.
    pub dprime_ones: u32,
}

impl Transcript {
    pub fn total_bits(&self) -> u64 {
        self.bits_a_to_b + self.bits_b_to_a
    }
}

/// Draws an outcome index with probability proportional to `|b_i|`.
/// Zero-weight elements are never drawn.
pub fn sample_outcome<R: Rng + ?Sized>(p: &Povm, rng: &mut R) -> usize {
    let weights = p.weights();
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            if u < acc {
                return i;
            }
            last_nonzero = i;
        }
    }
    last_nonzero
}

/// Alice's two sign bits `(Θ(−a_i·v1), Θ(−a_i·v2))`.
pub fn alice_round(a: &Povm, i: usize, s: &SharedRandomness) -> (bool, bool) {
    let ai = a.element(i);
    (theta(-ai.dot(s.v1.as_vec())), theta(-ai.dot(s.v2.as_vec())))
}

/// Bob's accept bit: `b_j·((−1)^c v1 + (−1)^d v2) ≥ 0`.
pub fn bob_round(b: &Povm, j: usize, s: &SharedRandomness, c: bool, d: bool) -> bool {
    b.element(j).dot(signed_combination(c, d, s.v1, s.v2)) >= 0.0
}

/// Block-coded second bit `Θ(a_i·v1) ⊕ Θ(a_i·v2)`.
pub fn dprime(ai: Vec3, s: &SharedRandomness) -> bool {
    theta(ai.dot(s.v1.as_vec())) ^ theta(ai.dot(s.v2.as_vec()))
}

/// Recovers `d` from `c` and `d′`.
pub fn recover_d(c: bool, dp: bool) -> bool {
    c ^ dp
}

/// Expected bits per run when `d` is replaced by an entropy-coded `d′`:
/// `mean_rounds × (1 + h_dprime + 1)`.
pub fn blockcoded_cost(mean_rounds: f64, h_dprime: f64) -> f64 {
    mean_rounds * (1.0 + h_dprime + 1.0)
}

/// Runs the protocol until Bob accepts.
pub fn run_protocol<R: Rng + ?Sized>(
    a: &Povm,
    b: &Povm,
    rng: &mut R,
    max_rounds: u32,
) -> Result<Transcript, ProtocolError> {
    run_protocol_in_frame(a, b, rng, max_rounds, |s| s)
}

/// Same as [`run_protocol`], with each round's shared directions passed
/// through `frame` after being drawn. The rng is consumed identically
/// whatever `frame` does.
pub fn run_protocol_in_frame<R, F>(
    a: &Povm,
    b: &Povm,
    rng: &mut R,
    max_rounds: u32,
    frame: F,
) -> Result<Transcript, ProtocolError>
where
    R: Rng + ?Sized,
    F: Fn(SharedRandomness) -> SharedRandomness,
{
    run_rounds(a, b, rng, max_rounds, frame, &mut Channel::new())
}

/// Same as [`run_protocol`], also returning every bit exchanged.
pub fn run_protocol_recorded<R: Rng + ?Sized>(
    a: &Povm,
    b: &Povm,
    rng: &mut R,
    max_rounds: u32,
) -> Result<(Transcript, Vec<bool>), ProtocolError> {
    let mut channel = Channel::recording();
    let t = run_rounds(a, b, rng, max_rounds, |s| s, &mut channel)?;
    Ok((t, channel.tape.unwrap_or_default()))
}

fn run_rounds<R, F>(
    a: &Povm,
    b: &Povm,
    rng: &mut R,
    max_rounds: u32,
    frame: F,
    channel: &mut Channel,
) -> Result<Transcript, ProtocolError>
where
    R: Rng + ?Sized,
    F: Fn(SharedRandomness) -> SharedRandomness,
{
    if max_rounds == 0 {
        return Err(ProtocolError::ZeroMaxRounds);
    }
    let mut dprime_ones = 0;
    for round in 1..=max_rounds {
        let shared = frame(SharedRandomness::sample(rng));

        let i = sample_outcome(a, rng);
        let (c, d) = alice_round(a, i, &shared);
        dprime_ones += u32::from(dprime(a.element(i), &shared));
        channel.send(RoundMessage::Signs { c, d });

        let j = sample_outcome(b, rng);
        let accept = bob_round(b, j, &shared, c, d);
        channel.send(RoundMessage::Verdict { accept });

        if accept {
            return Ok(Transcript {
                outcome_a: i,
                outcome_b: j,
                rounds: round,
                bits_a_to_b: channel.bits_a_to_b(),
                bits_b_to_a: channel.bits_b_to_a(),
                dprime_ones,
            });
        }
    }
    Err(ProtocolError::MaxRoundsExceeded { max_rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::Rotation;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shared(v1: UnitVec3, v2: UnitVec3) -> SharedRandomness {
        SharedRandomness { v1, v2 }
    }

    fn frequencies(p: &Povm, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; p.len()];
        for _ in 0..n {
            counts[sample_outcome(p, &mut rng)] += 1;
        }
        counts.into_iter().map(|c| c as f64 / n as f64).collect()
    }

    #[test]
    fn sample_outcome_frequencies() {
        for f in frequencies(&Povm::projective(UnitVec3::Z), 1_000_000, 1) {
            assert!((0.498..=0.502).contains(&f), "{f}");
        }
        for f in frequencies(&Povm::sic_tetrahedron(), 1_000_000, 2) {
            assert!((0.2487..=0.2513).contains(&f), "{f}");
        }
    }

    #[test]
    fn zero_weight_outcome_never_drawn() {
        let z = Vec3::new(0.0, 0.0, 1.0);
        for zeros in [vec![0], vec![1], vec![2], vec![0, 3]] {
            let mut elements = vec![z, -z];
            for &k in &zeros {
                elements.insert(k, Vec3::ZERO);
            }
            let p = Povm::validate(elements, 1e-9).unwrap();
            let f = frequencies(&p, 100_000, 3);
            for &k in &zeros {
                assert_eq!(f[k], 0.0);
            }
        }
    }

    #[test]
    fn alice_bits() {
        let a = Povm::projective(UnitVec3::Z);
        let (c, _) = alice_round(&a, 0, &shared(UnitVec3::Z, UnitVec3::Z));
        assert!(!c);
        let (c, _) = alice_round(&a, 0, &shared(-UnitVec3::Z, UnitVec3::Z));
        assert!(c);
    }

    #[test]
    fn bob_verdict() {
        let b = Povm::projective(UnitVec3::Z);
        let s = shared(UnitVec3::Z, UnitVec3::Z);
        assert!(bob_round(&b, 0, &s, false, false));
        assert!(!bob_round(&b, 0, &s, true, true));
    }

    #[test]
    fn dprime_and_recovery_examples() {
        let z = UnitVec3::Z.as_vec();
        assert!(!dprime(z, &shared(UnitVec3::Z, UnitVec3::Z)));
        assert!(dprime(z, &shared(UnitVec3::Z, -UnitVec3::Z)));
        assert!(!recover_d(false, false));
        assert!(!recover_d(true, true));
        assert!(recover_d(true, false));
        assert!(recover_d(false, true));
    }

    #[test]
    fn blockcoded_cost_examples() {
        assert!((blockcoded_cost(2.0, 0.85) - 5.7).abs() < 1e-12);
        assert_eq!(blockcoded_cost(2.0, 1.0), 6.0);
        assert_eq!(blockcoded_cost(1.0, 0.0), 2.0);
    }

    #[test]
    fn zero_max_rounds_rejected() {
        let p = Povm::sic_tetrahedron();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(run_protocol(&p, &p, &mut rng, 0), Err(ProtocolError::ZeroMaxRounds));
    }

    #[test]
    fn max_rounds_exceeded_surfaces() {
        let p = Povm::sic_tetrahedron();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let failures = (0..2000)
            .filter(|_| run_protocol(&p, &p, &mut rng, 1) == Err(ProtocolError::MaxRoundsExceeded { max_rounds: 1 }))
            .count();
        // Half the single-round budgets fail.
        assert!((800..1200).contains(&failures), "{failures}");
    }

    #[test]
    fn tape_layout() {
        let p = Povm::random(3, &mut ChaCha8Rng::seed_from_u64(5));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let (t, tape) = run_protocol_recorded(&p, &p, &mut rng, DEFAULT_MAX_ROUNDS).unwrap();
            assert_eq!(tape.len() as u64, t.total_bits());
            for (k, round) in tape.chunks(3).enumerate() {
                let last = k + 1 == t.rounds as usize;
                assert_eq!(round[2], last, "accept flag is the third bit of each round");
            }
        }
    }

    #[test]
    fn per_round_acceptance_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 1_000_000;
        let mut accepted = 0u64;
        let mut a = Povm::random(4, &mut rng);
        let mut b = Povm::random(4, &mut rng);
        for k in 0..n {
            if k % 1000 == 0 {
                a = Povm::random(2 + k % 5, &mut rng);
                b = Povm::random(2 + (k / 1000) % 5, &mut rng);
            }
            let s = SharedRandomness::sample(&mut rng);
            let i = sample_outcome(&a, &mut rng);
            let (c, d) = alice_round(&a, i, &s);
            let j = sample_outcome(&b, &mut rng);
            accepted += u64::from(bob_round(&b, j, &s, c, d));
        }
        let rate = accepted as f64 / n as f64;
        assert!((0.498..=0.502).contains(&rate), "{rate}");
    }

    #[test]
    fn projective_same_axis_never_anticorrelates() {
        let p = Povm::projective(UnitVec3::Z);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100_000 {
            let t = run_protocol(&p, &p, &mut rng, DEFAULT_MAX_ROUNDS).unwrap();
            assert_eq!(t.outcome_a, t.outcome_b);
        }
    }

    #[test]
    fn rotation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = Povm::random(4, &mut rng);
        let b = Povm::random(5, &mut rng);
        let r = Rotation::random(&mut rng);
        let (ra, rb) = (a.rotated(&r), b.rotated(&r));
        let rotate = |s: SharedRandomness| shared(r.apply_unit(s.v1), r.apply_unit(s.v2));
        for seed in 0..2000 {
            let plain = run_protocol(&a, &b, &mut ChaCha8Rng::seed_from_u64(seed), 100).unwrap();
            let turned =
                run_protocol_in_frame(&ra, &rb, &mut ChaCha8Rng::seed_from_u64(seed), 100, rotate).unwrap();
            assert_eq!(plain, turned);
        }
    }

    proptest! {
        #[test]
        fn transcript_accounting(seed in any::<u64>(), na in 2usize..6, nb in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Povm::random(na, &mut rng);
            let b = Povm::random(nb, &mut rng);
            let t = run_protocol(&a, &b, &mut rng, DEFAULT_MAX_ROUNDS).unwrap();
            prop_assert!(t.rounds >= 1);
            prop_assert_eq!(t.bits_a_to_b, 2 * u64::from(t.rounds));
            prop_assert_eq!(t.bits_b_to_a, u64::from(t.rounds));
            prop_assert_eq!(t.total_bits(), 3 * u64::from(t.rounds));
            prop_assert!(t.dprime_ones <= t.rounds);
        }

        #[test]
        fn sign_bits_match_sign_of_projection(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Povm::random(3, &mut rng);
            let s = SharedRandomness::sample(&mut rng);
            for i in 0..a.len() {
                let (c, d) = alice_round(&a, i, &s);
                let x1 = a.element(i).dot(s.v1.as_vec());
                let x2 = a.element(i).dot(s.v2.as_vec());
                prop_assert_eq!(if c { -1.0 } else { 1.0 }, x1.signum());
                prop_assert_eq!(if d { -1.0 } else { 1.0 }, x2.signum());
                prop_assert_eq!(recover_d(c, dprime(a.element(i), &s)), d);
            }
        }
    }
}
