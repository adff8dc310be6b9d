//! Exact structural computations for amalgamated free products of
//! finite von Neumann algebras over finite-dimensional abelian subalgebras.

// Errors carry the exact values that caused them.
#![allow(clippy::result_large_err)]

pub mod algebra;
pub mod dimension;
pub mod embedding;
pub mod exactnum;
pub mod product;
pub mod series;

pub use algebra::{
    canonicalize, compress, rescale_trace, validate_algebra, AlgebraDesc, AlgebraIssue, CompressError, FamilyLimits,
    ProjectionSpec, Size, Summand, SummandKind, Truncation,
};
pub use dimension::{fdim, rdim, rdim_limit, DimensionError, LimitDim};
pub use embedding::{
    abelianize, decompose_simple_steps, multimatrix_chain, validate_embedding, AtomicSubalgebra, DBlock,
    EmbeddingIssue, EmbeddingSpec, SimpleStep,
};
pub use exactnum::{dim_combine, int, parse_rational, rat, DimOp, DimValue, ExtScalar, NumError, Rational};
pub use product::{
    chain_levels, check_compression_consistency, check_compression_consistency_all, closed_form_product, m2_rewrite,
    product, product_general, AdditivityCheck, Consistency, Convergence, ConvergenceStatus, Method, ProductError,
    ProductOptions, ProductResult, Rule, Schedule,
};
pub use series::{classify_series, partial_sum, IndexExpr, SeriesClass};
