//! Classical simulation of local qubit POVMs on the maximally entangled
//! state (|00⟩ + |11⟩)/√2.
//!
//! Two parties share pairs of uniformly random directions on the sphere and
//! exchange three bits per round: Alice sends the signs of her Bloch vector
//! against both directions, Bob answers accept or reject. Accepted rounds
//! reproduce the quantum joint distribution `(|a_i||b_j| + a_i·b_j)/4`, and
//! a run takes two rounds (six bits) on average.
//!
//! - [`bloch`]: vectors, sphere sampling, the step function.
//! - [`povm`]: validated POVMs, fixtures, random generation, file format.
//! - [`oracle`]: exact joint and marginal distributions, CHSH.
//! - [`protocol`]: the two-party protocol and its bit accounting.
//! - [`stats`]: distances, goodness of fit, d′ entropy, batch aggregation.
//! - [`experiment`]: seeded, thread-count independent batch runners and reports.

pub mod bloch;
pub mod experiment;
pub mod oracle;
pub mod povm;
pub mod protocol;
pub mod seeding;
pub mod stats;

pub use bloch::{UnitVec3, Vec3};
pub use oracle::JointDistribution;
pub use povm::{Povm, PovmError};
pub use protocol::{ProtocolError, SharedRandomness, Transcript};
pub use stats::{EmpiricalJoint, RunReport};
