//! Random rank-`r` extensions of a state on `C^n` to `C^m ⊗ C^n`, their
//! parameterization by isometry tuples, the wedge invariant, and sound
//! separability tests.
//!
//! Bipartite indices always follow `C^m ⊗ C^n` with the `C^m` index slow,
//! matching [`tensor::kron`].

pub mod error;
pub mod experiment;
pub mod io;
pub mod separability;
pub mod states;
pub mod stiefel;
pub mod tensor;
pub mod wedge;

pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, OmegaSpec};
pub use separability::{decide, SeparabilityVerdict, Status};
pub use states::{purify, state_from_tuple, tuple_from_state, DensityMatrix, MarginalState, Purification};
pub use stiefel::{sample_haar_tuple, IsometryTuple, SeededRng};
pub use tensor::{ComplexMatrix, ComplexVector, DEFAULT_REL_TOL};
pub use wedge::{wedge_invariants, witness_tuple, WedgeInvariant};
