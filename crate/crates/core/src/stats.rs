//! Estimators that turn batches of transcripts into verdicts.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::oracle::JointDistribution;
use crate::protocol::{blockcoded_cost, SharedRandomness, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("no transcripts to aggregate")]
    EmptyInput,
    #[error("outcome ({0}, {1}) is outside the distribution's shape")]
    OutcomeOutOfRange(usize, usize),
}

/// Counts of accepted outcome pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmpiricalJoint {
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl EmpiricalJoint {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        EmpiricalJoint {
            counts: vec![vec![0; cols]; rows],
            n: 0,
        }
    }

    pub fn record(&mut self, i: usize, j: usize) {
        self.counts[i][j] += 1;
        self.n += 1;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.counts.len(), self.counts.first().map_or(0, Vec::len))
    }

    pub fn frequencies(&self) -> Vec<Vec<f64>> {
        let n = self.n.max(1) as f64;
        self.counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / n).collect())
            .collect()
    }

    pub fn row_counts(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn col_counts(&self) -> Vec<u64> {
        let (_, cols) = self.shape();
        (0..cols).map(|j| self.counts.iter().map(|row| row[j]).sum()).collect()
    }

    fn merge(&mut self, other: &EmpiricalJoint) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        self.n += other.n;
    }
}

fn shape_of(m: &[Vec<f64>]) -> (usize, usize) {
    (m.len(), m.first().map_or(0, Vec::len))
}

/// Total variation distance `½ Σ |p − q|`.
pub fn tvd(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64, StatsError> {
    let ragged = |m: &[Vec<f64>]| m.iter().any(|r| r.len() != shape_of(m).1);
    if shape_of(p) != shape_of(q) || ragged(p) || ragged(q) {
        return Err(StatsError::ShapeMismatch {
            left: shape_of(p),
            right: shape_of(q),
        });
    }
    let l1: f64 = p
        .iter()
        .flatten()
        .zip(q.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(0.5 * l1)
}

/// Pearson goodness-of-fit result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Set when a cell of zero expected probability was observed; `p_value`
    /// is then 0.
    pub zero_cell_violation: bool,
}

/// Survival function of the chi-square distribution, `Q(dof/2, x/2)`.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    if x <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(dof as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Pearson test of observed counts against `expected`, over cells with
/// positive expectation; `dof` is that cell count minus one.
pub fn chi_square_pvalue(
    e: &EmpiricalJoint,
    expected: &JointDistribution,
) -> Result<ChiSquareTest, StatsError> {
    if e.shape() != (expected.rows(), expected.cols()) {
        return Err(StatsError::ShapeMismatch {
            left: e.shape(),
            right: (expected.rows(), expected.cols()),
        });
    }
    let n = e.n as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    let mut zero_cell_violation = false;
    for (row, prow) in e.counts.iter().zip(expected.matrix()) {
        for (&obs, &p) in row.iter().zip(prow) {
            if p > 0.0 {
                let exp = n * p;
                let diff = obs as f64 - exp;
                statistic += diff * diff / exp;
                cells += 1;
            } else if obs > 0 {
                zero_cell_violation = true;
            }
        }
    }
    let dof = cells.saturating_sub(1);
    let p_value = if zero_cell_violation {
        0.0
    } else {
        chi_square_sf(statistic, dof)
    };
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value,
        zero_cell_violation,
    })
}

/// Binary entropy in bits, with `0·log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Sum of `H₂(θ/π)` over `n` fresh pairs of shared directions, `θ` being the
/// angle between them.
pub fn dprime_entropy_sum<R: Rng + ?Sized>(n: u64, rng: &mut R) -> f64 {
    (0..n)
        .map(|_| {
            let s = SharedRandomness::sample(rng);
            binary_entropy(s.v1.angle_to(s.v2) / std::f64::consts::PI)
        })
        .sum()
}

/// Monte Carlo estimate of the entropy of `d′` given the shared directions.
///
/// For a uniformly random direction `a`, `d′ = Θ(a·v1) ⊕ Θ(a·v2)` is 1 with
/// probability `θ/π`, so the conditional entropy is `E[H₂(θ/π)]`.
pub fn dprime_conditional_entropy<R: Rng + ?Sized>(n_samples: u64, rng: &mut R) -> f64 {
    assert!(n_samples >= 1);
    dprime_entropy_sum(n_samples, rng) / n_samples as f64
}

/// Mergeable running totals for a batch of transcripts. Holds integers only,
/// so merging shards in any order yields identical results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accumulator {
    joint: EmpiricalJoint,
    rounds: u64,
    bits_a_to_b: u64,
    bits_b_to_a: u64,
    dprime_ones: u64,
    round_histogram: Vec<u64>,
}

impl Accumulator {
    pub fn new(rows: usize, cols: usize) -> Self {
        Accumulator {
            joint: EmpiricalJoint::zeros(rows, cols),
            rounds: 0,
            bits_a_to_b: 0,
            bits_b_to_a: 0,
            dprime_ones: 0,
            round_histogram: Vec::new(),
        }
    }

    pub fn push(&mut self, t: &Transcript) -> Result<(), StatsError> {
        let (rows, cols) = self.joint.shape();
        if t.outcome_a >= rows || t.outcome_b >= cols {
            return Err(StatsError::OutcomeOutOfRange(t.outcome_a, t.outcome_b));
        }
        self.joint.record(t.outcome_a, t.outcome_b);
        self.rounds += u64::from(t.rounds);
        self.bits_a_to_b += t.bits_a_to_b;
        self.bits_b_to_a += t.bits_b_to_a;
        self.dprime_ones += u64::from(t.dprime_ones);
        let k = t.rounds as usize;
        if self.round_histogram.len() < k {
            self.round_histogram.resize(k, 0);
        }
        self.round_histogram[k - 1] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.joint.merge(&other.joint);
        self.rounds += other.rounds;
        self.bits_a_to_b += other.bits_a_to_b;
        self.bits_b_to_a += other.bits_b_to_a;
        self.dprime_ones += other.dprime_ones;
        if self.round_histogram.len() < other.round_histogram.len() {
            self.round_histogram.resize(other.round_histogram.len(), 0);
        }
        for (h, o) in self.round_histogram.iter_mut().zip(&other.round_histogram) {
            *h += o;
        }
    }

    pub fn runs(&self) -> u64 {
        self.joint.n
    }

    pub fn total_rounds(&self) -> u64 {
        self.rounds
    }

    pub fn total_bits(&self) -> u64 {
        self.bits_a_to_b + self.bits_b_to_a
    }

    pub fn finish(
        self,
        oracle_joint: &JointDistribution,
        dprime_entropy: f64,
    ) -> Result<RunReport, StatsError> {
        if self.joint.n == 0 {
            return Err(StatsError::EmptyInput);
        }
        let n = self.joint.n as f64;
        let rounds = self.rounds as f64;
        let frequencies = self.joint.frequencies();
        let tvd = tvd(&frequencies, oracle_joint.matrix())?;
        let chi_square = chi_square_pvalue(&self.joint, oracle_joint)?;
        let mean_rounds = rounds / n;
        let mean_bits = self.total_bits() as f64 / n;
        Ok(RunReport {
            trials: self.joint.n,
            marginal_a: self.joint.row_counts().iter().map(|&c| c as f64 / n).collect(),
            marginal_b: self.joint.col_counts().iter().map(|&c| c as f64 / n).collect(),
            oracle: oracle_joint.matrix().to_vec(),
            empirical: self.joint,
            tvd,
            chi_square,
            mean_rounds,
            mean_bits,
            mean_bits_a_to_b: self.bits_a_to_b as f64 / n,
            mean_bits_b_to_a: self.bits_b_to_a as f64 / n,
            acceptance_rate: n / rounds,
            dprime_one_rate: self.dprime_ones as f64 / rounds,
            h_dprime: dprime_entropy,
            blockcoded_bits: blockcoded_cost(mean_rounds, dprime_entropy),
            round_histogram: self.round_histogram,
        })
    }
}

/// Aggregate statistics of a batch of protocol runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub trials: u64,
    pub empirical: EmpiricalJoint,
    pub oracle: Vec<Vec<f64>>,
    pub marginal_a: Vec<f64>,
    pub marginal_b: Vec<f64>,
    pub tvd: f64,
    pub chi_square: ChiSquareTest,
    pub mean_rounds: f64,
    pub mean_bits: f64,
    pub mean_bits_a_to_b: f64,
    pub mean_bits_b_to_a: f64,
    /// Accepted runs per round played.
    pub acceptance_rate: f64,
    /// Fraction of rounds in which `d′` was 1.
    pub dprime_one_rate: f64,
    pub h_dprime: f64,
    pub blockcoded_bits: f64,
    /// `round_histogram[k - 1]` runs needed exactly `k` rounds.
    pub round_histogram: Vec<u64>,
}

/// Folds transcripts into a [`RunReport`] against `oracle_joint`.
pub fn aggregate<'a, I>(
    transcripts: I,
    oracle_joint: &JointDistribution,
    dprime_entropy: f64,
) -> Result<RunReport, StatsError>
where
    I: IntoIterator<Item = &'a Transcript>,
{
    let mut acc = Accumulator::new(oracle_joint.rows(), oracle_joint.cols());
    for t in transcripts {
        acc.push(t)?;
    }
    acc.finish(oracle_joint, dprime_entropy)
}
