//! Measurements on evaluated play: majority-symbol clustering and its
//! purity against a permutation baseline, the singular value spectrum of the
//! symbol usage matrix, the grounding match rate, and embedding export.

mod export;
mod grounding;
mod purity;
mod spectrum;

pub use export::export_embeddings;
pub use grounding::{grounding_match_rate, GroundingResult};
pub use purity::{
    majority_from_counts, majority_symbol_map, permutation_chance, purity, purity_of, PurityResult,
    SymbolAssignment, DEFAULT_PERMUTATIONS,
};
pub use spectrum::{jacobi_eigenvalues, singular_values, usage_spectrum};
