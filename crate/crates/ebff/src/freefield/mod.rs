//! Free-field side: formal series, boson tables, contraction kernels of the
//! basic vertex operators and the scalar identities they satisfy.

pub mod bosonspec;
pub mod expr;
pub mod ope;
pub mod series;

pub use bosonspec::{BosonSpec, Rescale, Weight};
pub use ope::{
    contraction_series, delta_commutator_check, nilpotency_check, ope_check, ope_check_all, registered_pairs,
    Branch, Contraction, DeltaReport, FieldContext, NilpotencyReport, OpKind, OpeResidual, Prefactor, RegisteredPair, Target,
    VertexOpSymbol, ZeroModeState,
};
pub use series::LaurentSeries;
