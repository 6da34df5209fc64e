//! Qubit POVMs in Bloch-vector form.
//!
//! Each element `B_i = (|b_i| I + b_i·σ)/2` is stored only as its Bloch vector
//! `b_i`. The family is complete iff `Σ|b_i| = 2` and `Σ b_i = 0`.

use rand::Rng;
use thiserror::Error;

use crate::bloch::{sample_unit_vector, Rotation, UnitVec3, Vec3};

/// Completeness tolerance for POVMs read from user input.
pub const USER_EPS: f64 = 1e-6;
/// Completeness tolerance for POVMs built by this crate.
pub const INTERNAL_EPS: f64 = 1e-9;

/// Centered vectors shorter than this make `random_povm` redraw.
const MIN_CENTERED_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PovmError {
    #[error("POVM needs at least 2 elements, got {0}")]
    TooFewElements(usize),
    #[error("element {index} has a non-finite component")]
    NonFinite { index: usize },
    #[error("element {index} has weight {weight} > 2")]
    WeightTooLarge { index: usize, weight: f64 },
    #[error("weights sum to {sum}, off from 2 by {deviation:e} (eps {eps:e})")]
    WeightSumViolation { sum: f64, deviation: f64, eps: f64 },
    #[error("Bloch vectors sum to {sum:?}, norm {norm:e} (eps {eps:e})")]
    VectorSumViolation { sum: [f64; 3], norm: f64, eps: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("malformed POVM text: {0}")]
    Parse(String),
}

/// A validated POVM. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<Vec3>,
    weights: Vec<f64>,
}

impl Povm {
    /// Checks both completeness conditions within `eps`.
    pub fn validate(elements: Vec<Vec3>, eps: f64) -> Result<Povm, PovmError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(PovmError::BadTolerance(eps));
        }
        if elements.len() < 2 {
            return Err(PovmError::TooFewElements(elements.len()));
        }
        let mut weights = Vec::with_capacity(elements.len());
        for (index, b) in elements.iter().enumerate() {
            if !b.is_finite() {
                return Err(PovmError::NonFinite { index });
            }
            let weight = b.norm();
            if weight > 2.0 + eps {
                return Err(PovmError::WeightTooLarge { index, weight });
            }
            weights.push(weight);
        }

        let sum: f64 = weights.iter().sum();
        let deviation = (sum - 2.0).abs();
        if deviation > eps {
            return Err(PovmError::WeightSumViolation { sum, deviation, eps });
        }
        let vsum: Vec3 = elements.iter().copied().sum();
        let norm = vsum.norm();
        if norm > eps {
            return Err(PovmError::VectorSumViolation {
                sum: vsum.to_array(),
                norm,
                eps,
            });
        }
        Ok(Povm { elements, weights })
    }

    /// Two-outcome projective measurement along `n`: elements `[n, -n]`.
    pub fn projective(n: UnitVec3) -> Povm {
        let n = n.as_vec();
        Povm::validate(vec![n, -n], INTERNAL_EPS).expect("antipodal unit pair is complete")
    }

    /// Four-outcome tetrahedral (SIC) POVM, each element of weight 1/2.
    pub fn sic_tetrahedron() -> Povm {
        let elements = tetrahedron_directions()
            .iter()
            .map(|t| t.as_vec() * 0.5)
            .collect();
        Povm::validate(elements, INTERNAL_EPS).expect("tetrahedron is complete")
    }

    /// Random `n`-outcome POVM: `n` uniform directions are centered on their
    /// mean and rescaled so the weights sum to 2.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Povm {
        assert!(n >= 2, "a POVM needs at least 2 outcomes");
        loop {
            let raw: Vec<Vec3> = (0..n).map(|_| sample_unit_vector(rng).as_vec()).collect();
            let mean = raw.iter().copied().sum::<Vec3>() * (1.0 / n as f64);
            let centered: Vec<Vec3> = raw.into_iter().map(|u| u - mean).collect();
            if centered.iter().any(|b| b.norm() < MIN_CENTERED_NORM) {
                continue;
            }
            let total: f64 = centered.iter().map(|b| b.norm()).sum();
            let scale = 2.0 / total;
            let elements = centered.into_iter().map(|b| b * scale).collect();
            if let Ok(p) = Povm::validate(elements, INTERNAL_EPS) {
                return p;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Vec3] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> Vec3 {
        self.elements[i]
    }

    /// Lengths `|b_i|`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies `r` to every element. Rotations preserve completeness.
    pub fn rotated(&self, r: &Rotation) -> Povm {
        let elements = self.elements.iter().map(|&b| r.apply(b)).collect();
        Povm::validate(elements, INTERNAL_EPS).expect("rotation preserves completeness")
    }
}

/// Unit tetrahedron vertices `(±1, ±1, ±1)/√3` with an even number of minus signs.
pub fn tetrahedron_directions() -> [UnitVec3; 4] {
    let s = 1.0 / 3f64.sqrt();
    [
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ]
    .map(|v| v.normalized().expect("nonzero"))
}

/// Parses a JSON array of `[x, y, z]` triples and validates it with `eps`.
pub fn read_povm(text: &str, eps: f64) -> Result<Povm, PovmError> {
    let triples: Vec<[f64; 3]> =
        serde_json::from_str(text).map_err(|e| PovmError::Parse(e.to_string()))?;
    Povm::validate(triples.into_iter().map(Vec3::from_array).collect(), eps)
}

/// Serializes as a compact JSON array of triples. Floats are written in
/// shortest round-trip form, so `read_povm(write_povm(p))` is exact.
pub fn write_povm(p: &Povm) -> String {
    let triples: Vec<[f64; 3]> = p.elements.iter().map(|b| b.to_array()).collect();
    serde_json::to_string(&triples).expect("finite floats serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn validate_examples() {
        assert!(Povm::validate(vec![v(0., 0., 1.), v(0., 0., -1.)], 1e-12).is_ok());
        assert!(matches!(
            Povm::validate(vec![v(0., 0., 1.), v(0., 0., 1.)], 1e-6),
            Err(PovmError::VectorSumViolation { .. })
        ));
        assert!(matches!(
            Povm::validate(vec![v(0., 0., 0.5), v(0., 0., -0.5)], 1e-6),
            Err(PovmError::WeightSumViolation { .. })
        ));
        assert_eq!(
            Povm::validate(vec![v(0., 0., 0.)], 1e-6),
            Err(PovmError::TooFewElements(1))
        );
        assert!(matches!(
            Povm::validate(vec![v(f64::NAN, 0., 0.), v(0., 0., 1.)], 1e-6),
            Err(PovmError::NonFinite { index: 0 })
        ));
        assert!(matches!(
            Povm::validate(vec![v(0., 0., 1.), v(0., 0., -1.)], 0.0),
            Err(PovmError::BadTolerance(_))
        ));
    }

    #[test]
    fn weight_sum_violation_reports_deviation() {
        match Povm::validate(vec![v(0., 0., 0.5), v(0., 0., -0.5)], 1e-6) {
            Err(PovmError::WeightSumViolation { sum, deviation, .. }) => {
                assert_eq!(sum, 1.0);
                assert_eq!(deviation, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_weight_elements_are_allowed() {
        let p = Povm::validate(vec![v(0., 0., 1.), v(0., 0., 0.), v(0., 0., -1.)], USER_EPS).unwrap();
        assert_eq!(p.weights(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn projective_examples() {
        let p = Povm::projective(UnitVec3::Z);
        assert_eq!(p.elements(), &[v(0., 0., 1.), v(0., 0., -1.)]);
        let p = Povm::projective(UnitVec3::X);
        assert_eq!(p.elements(), &[v(1., 0., 0.), v(-1., 0., 0.)]);
        assert!(Povm::validate(p.elements().to_vec(), 1e-12).is_ok());
    }

    #[test]
    fn sic_tetrahedron_geometry() {
        let p = Povm::sic_tetrahedron();
        assert!((p.weights().iter().sum::<f64>() - 2.0).abs() < 1e-15);
        assert!(p.elements().iter().copied().sum::<Vec3>().norm() < 1e-15);
        let t = tetrahedron_directions();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { -1.0 / 3.0 };
                assert!((t[i].dot(t[j]) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn random_two_outcome_is_antipodal_unit_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = Povm::random(2, &mut rng);
            let (a, b) = (p.element(0), p.element(1));
            assert!((a.norm() - 1.0).abs() < 1e-12);
            assert!((a + b).norm() < 1e-12);
        }
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let a = Povm::random(5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = Povm::random(5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn text_format() {
        let p = read_povm("[[0,0,1],[0,0,-1]]", USER_EPS).unwrap();
        assert_eq!(p, Povm::projective(UnitVec3::Z));
        assert!(matches!(read_povm("[[0,0,1],[0,0]]", USER_EPS), Err(PovmError::Parse(_))));
        assert!(matches!(read_povm("not json", USER_EPS), Err(PovmError::Parse(_))));
        assert!(matches!(read_povm("[[0,0,1],[0,0,1]]", USER_EPS), Err(PovmError::VectorSumViolation { .. })));
        let sic = Povm::sic_tetrahedron();
        assert_eq!(read_povm(&write_povm(&sic), INTERNAL_EPS).unwrap(), sic);
    }

    #[test]
    fn user_tolerance_admits_decimal_rounding() {
        let text = "[[0.288675,0.288675,0.288675],[0.288675,-0.288675,-0.288675],\
                    [-0.288675,0.288675,-0.288675],[-0.288675,-0.288675,0.288675]]";
        assert!(read_povm(text, USER_EPS).is_ok());
        assert!(read_povm(text, INTERNAL_EPS).is_err());
    }

    proptest! {
        #[test]
        fn random_povms_validate(n in 2usize..12, seed in any::<u64>()) {
            let p = Povm::random(n, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(p.len(), n);
            prop_assert!(Povm::validate(p.elements().to_vec(), INTERNAL_EPS).is_ok());
            let total: f64 = p.weights().iter().map(|w| w / 2.0).sum();
            prop_assert!((total - 1.0).abs() <= INTERNAL_EPS / 2.0);
        }

        #[test]
        fn rotated_povms_validate(n in 2usize..8, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Povm::random(n, &mut rng);
            let r = Rotation::random(&mut rng);
            prop_assert!(Povm::validate(p.rotated(&r).elements().to_vec(), INTERNAL_EPS).is_ok());
        }

        #[test]
        fn write_read_roundtrip(n in 2usize..8, seed in any::<u64>()) {
            let p = Povm::random(n, &mut ChaCha8Rng::seed_from_u64(seed));
            let q = read_povm(&write_povm(&p), INTERNAL_EPS).unwrap();
            for (a, b) in p.elements().iter().zip(q.elements()) {
                prop_assert!((*a - *b).norm() <= 1e-15);
            }
        }
    }
}
