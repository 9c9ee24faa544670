//! matspec — finite-rank self-adjoint perturbations through matrix-valued
//! spectral measures, at desk scale.
//!
//! The toolkit models a Hermitian `N×N` operator `A` observed through a rank-d
//! window `B`, forms the matrix-valued spectral measure `M(E) = B† E(E) B`,
//! and verifies numerically the identities that govern the perturbation family
//! `A_Γ = A + B Γ B†`: the Aronszajn–Krein formula for Cauchy transforms,
//! spectral averaging over the perturbation line, vector mutual singularity of
//! singular parts, the joint Poisson matrix A₂ condition, weighted-L² bounds
//! for the associated integral operators, and the explicit spectral
//! representation intertwining `A_Γ` with multiplication.
//!
//! Start with [`perturbation::OperatorModel`] and the `matspec` CLI; the
//! narrative guide lives in `book/` and its snippets run as doctests of this
//! crate.

pub mod averaging;
pub mod error;
pub mod herglotz;
pub mod linalg;
pub mod measure;
pub mod perturbation;
pub mod quad;
pub mod report;
pub mod representation;
pub mod scenario;
pub mod singularity;
pub mod suites;

pub use error::{Error, Result};

/// Book chapters compiled as doctests (kept in sync with `book/src`).
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(ch01_introduction, "../../../book/src/introduction.md");
    chapter!(ch02_models, "../../../book/src/models-and-measures.md");
    chapter!(ch03_transforms, "../../../book/src/transforms.md");
    chapter!(ch04_perturbations, "../../../book/src/perturbations.md");
    chapter!(ch05_averaging, "../../../book/src/averaging.md");
    chapter!(ch06_singularity, "../../../book/src/singularity.md");
    chapter!(ch07_representation, "../../../book/src/representation.md");
    chapter!(ch08_cli, "../../../book/src/cli.md");
}
