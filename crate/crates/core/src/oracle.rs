//! Exact outcome statistics for local POVMs on the state (|00⟩ + |11⟩)/√2.

use serde::Serialize;

use crate::bloch::UnitVec3;
use crate::povm::Povm;

/// Outcome-pair probabilities `p[i][j]`, Alice's index first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDistribution {
    p: Vec<Vec<f64>>,
}

impl JointDistribution {
    pub fn rows(&self) -> usize {
        self.p.len()
    }

    pub fn cols(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i][j]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.p.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols())
            .map(|j| self.p.iter().map(|row| row[j]).sum())
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }
}

/// Single-party outcome probabilities `|b_i|/2`, renormalized to sum to 1.
pub fn marginal(p: &Povm) -> Vec<f64> {
    let total: f64 = p.weights().iter().sum();
    p.weights().iter().map(|w| w / total).collect()
}

/// `p[i][j] = (|a_i||b_j| + a_i·b_j)/4`, renormalized by its total.
pub fn joint(a: &Povm, b: &Povm) -> JointDistribution {
    let mut p: Vec<Vec<f64>> = a
        .elements()
        .iter()
        .zip(a.weights())
        .map(|(ai, wa)| {
            b.elements()
                .iter()
                .zip(b.weights())
                // Cauchy–Schwarz keeps this ≥ 0 up to rounding.
                .map(|(bj, wb)| ((wa * wb + ai.dot(*bj)) / 4.0).max(0.0))
                .collect()
        })
        .collect();
    // Summing in sorted order makes the total independent of orientation,
    // so joint(a, b) is exactly the transpose of joint(b, a).
    let mut cells: Vec<f64> = p.iter().flatten().copied().collect();
    cells.sort_by(f64::total_cmp);
    let total: f64 = cells.iter().sum();
    for x in p.iter_mut().flatten() {
        *x /= total;
    }
    JointDistribution { p }
}

/// Expectation of the product of ±1 outcomes for projective measurements
/// along `a_dir` and `b_dir`. Element 0 of each POVM scores +1, element 1
/// scores −1.
pub fn correlation(a_dir: UnitVec3, b_dir: UnitVec3) -> f64 {
    const SIGN: [f64; 2] = [1.0, -1.0];
    let p = joint(&Povm::projective(a_dir), &Povm::projective(b_dir));
    p.matrix()
        .iter()
        .zip(SIGN)
        .flat_map(|(row, si)| row.iter().zip(SIGN).map(move |(x, sj)| si * sj * x))
        .sum()
}

/// `E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)`.
pub fn chsh(a: UnitVec3, a_prime: UnitVec3, b: UnitVec3, b_prime: UnitVec3) -> f64 {
    correlation(a, b) + correlation(a, b_prime) + correlation(a_prime, b) - correlation(a_prime, b_prime)
}

/// The settings `a = ẑ, a′ = x̂, b = (ẑ+x̂)/√2, b′ = (ẑ−x̂)/√2` that reach 2√2.
pub fn optimal_chsh_settings() -> [UnitVec3; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        UnitVec3::Z,
        UnitVec3::X,
        UnitVec3::new(s, 0.0, s).expect("unit"),
        UnitVec3::new(-s, 0.0, s).expect("unit"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::sample_unit_vector;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

    #[test]
    fn marginal_examples() {
        assert_eq!(marginal(&Povm::projective(UnitVec3::Z)), vec![0.5, 0.5]);
        for m in marginal(&Povm::sic_tetrahedron()) {
            assert!((m - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_projective_examples() {
        let z = Povm::projective(UnitVec3::Z);
        let x = Povm::projective(UnitVec3::X);
        assert_eq!(joint(&z, &z).matrix(), &[vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(joint(&z, &x).matrix(), &[vec![0.25, 0.25], vec![0.25, 0.25]]);
    }

    #[test]
    fn joint_sic_values() {
        let sic = Povm::sic_tetrahedron();
        let p = joint(&sic, &sic);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 / 8.0 } else { 1.0 / 24.0 };
                assert!((p.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_examples() {
        assert!((correlation(UnitVec3::Z, UnitVec3::Z) - 1.0).abs() < 1e-15);
        assert!((correlation(UnitVec3::Z, -UnitVec3::Z) + 1.0).abs() < 1e-15);
        assert!(correlation(UnitVec3::Z, UnitVec3::X).abs() < 1e-15);
    }

    #[test]
    fn chsh_examples() {
        let [a, a2, b, b2] = optimal_chsh_settings();
        assert!((chsh(a, a2, b, b2) - TSIRELSON).abs() < 1e-12);
        let z = UnitVec3::Z;
        assert!((chsh(z, z, z, z) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn correlation_is_dot_product(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (sample_unit_vector(&mut rng), sample_unit_vector(&mut rng));
            prop_assert!((correlation(a, b) - a.dot(b)).abs() < 1e-12);
        }

        #[test]
        fn chsh_within_tsirelson(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<_> = (0..4).map(|_| sample_unit_vector(&mut rng)).collect();
            prop_assert!(chsh(s[0], s[1], s[2], s[3]).abs() <= TSIRELSON + 1e-9);
        }

        #[test]
        fn joint_is_consistent(na in 2usize..7, nb in 2usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Povm::random(na, &mut rng);
            let b = Povm::random(nb, &mut rng);
            let p = joint(&a, &b);
            prop_assert!(p.matrix().iter().flatten().all(|&x| x >= 0.0));
            prop_assert!((p.total() - 1.0).abs() < 1e-9);
            for (r, m) in p.row_sums().iter().zip(marginal(&a)) {
                prop_assert!((r - m).abs() < 1e-9);
            }
            for (c, m) in p.col_sums().iter().zip(marginal(&b)) {
                prop_assert!((c - m).abs() < 1e-9);
            }
            let q = joint(&b, &a);
            for i in 0..na {
                for j in 0..nb {
                    prop_assert_eq!(p.get(i, j), q.get(j, i));
                }
            }
        }
    }
}
