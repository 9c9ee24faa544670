//! Finite-rank perturbation machinery.
//!
//! An [`OperatorModel`] is a Hermitian `A` together with a full-column-rank
//! window `B`; the family `A_G = A + B G B†` is explored through two
//! independent routes kept permanently side by side: direct
//! eigendecomposition of `A_G`, and the Aronszajn–Krein transform
//! `F_G = (I + F G)⁻¹ F` of the unperturbed Cauchy transform. Their agreement
//! is the toolkit's built-in referee.

use crate::error::{Error, Result};
use crate::herglotz::{cauchy_transform, richardson_limit, HerglotzEval};
use crate::linalg::{
    condition_number, numerical_rank, operator_norm, smallest_singular_value, CMatrix, EigenSystem,
    HermitianMatrix, C64,
};
use crate::measure::{eigenvalue_clusters, MatrixMeasure, ATOM_MERGE_TOL};

/// Relative σ_min threshold for "B has full column rank".
pub const WINDOW_RANK_TOL: f64 = 1e-10;
/// Condition-number ceiling for `(I + F G)` solves off the real axis.
pub const AK_COND_LIMIT: f64 = 1e12;
/// λ_min threshold for "Γ is positive definite".
pub const GAMMA_PD_TOL: f64 = 1e-12;

/// Per-eigenvalue cyclicity deficiency: the window misses part of an
/// eigenspace.
#[derive(Clone, Debug)]
pub struct Deficiency {
    pub eigenvalue: f64,
    pub multiplicity: usize,
    pub window_rank: usize,
}

/// Outcome of the cyclicity criterion `rank(P_λ B) = rank(P_λ)` over all
/// distinct eigenvalues.
#[derive(Clone, Debug)]
pub struct CyclicityReport {
    pub cyclic: bool,
    pub deficiencies: Vec<Deficiency>,
}

/// A Hermitian `N×N` operator observed through an `N×d` window of full
/// column rank, with its eigendecomposition, spectral measure, and
/// cyclicity certificate computed at construction.
#[derive(Clone, Debug)]
pub struct OperatorModel {
    a: HermitianMatrix,
    b: CMatrix,
    eig: EigenSystem,
    measure: MatrixMeasure,
    cyclicity: CyclicityReport,
}

impl OperatorModel {
    pub fn new(a: HermitianMatrix, b: CMatrix) -> Result<Self> {
        let n = a.dim();
        if b.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "window has {} rows, operator dimension is {n}",
                b.rows()
            )));
        }
        let d = b.cols();
        if d == 0 || d > n {
            return Err(Error::Validation(format!(
                "perturbation rank d = {d} must satisfy 1 ≤ d ≤ N = {n}"
            )));
        }
        let smin = smallest_singular_value(&b);
        let smax = operator_norm(&b);
        if smin <= WINDOW_RANK_TOL * smax {
            return Err(Error::Validation(format!(
                "window is column-rank deficient: σ_min/σ_max = {:.3e}",
                smin / smax
            )));
        }
        let eig = a.eig();
        let measure = crate::measure::spectral_measure_from_parts(&eig, &b);
        let cyclicity = cyclicity_from_parts(&eig, &b);
        Ok(Self {
            a,
            b,
            eig,
            measure,
            cyclicity,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.a.dim()
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    pub fn operator(&self) -> &HermitianMatrix {
        &self.a
    }

    pub fn window(&self) -> &CMatrix {
        &self.b
    }

    pub fn eig(&self) -> &EigenSystem {
        &self.eig
    }

    pub fn spectral_measure(&self) -> &MatrixMeasure {
        &self.measure
    }

    pub fn cyclicity(&self) -> &CyclicityReport {
        &self.cyclicity
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclicity.cyclic
    }

    /// Unperturbed Cauchy transform `F(z) = B†(A−z)⁻¹B`, evaluated through
    /// the spectral measure.
    pub fn cauchy(&self, z: C64) -> Result<HerglotzEval> {
        cauchy_transform(&self.measure, z)
    }
}

/// The perturbation line `Γ(t) = Γ₀ + tΓ` with `Γ > 0`.
#[derive(Clone, Debug)]
pub struct PerturbationFamily {
    pub model: OperatorModel,
    gamma0: HermitianMatrix,
    gamma: HermitianMatrix,
}

impl PerturbationFamily {
    pub fn new(
        model: OperatorModel,
        gamma0: HermitianMatrix,
        gamma: HermitianMatrix,
    ) -> Result<Self> {
        let d = model.rank();
        if gamma0.dim() != d || gamma.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "Γ₀/Γ must be {d}×{d} to match the window rank"
            )));
        }
        let lmin = gamma.eig().values.first().copied().unwrap_or(0.0);
        if lmin <= GAMMA_PD_TOL {
            return Err(Error::Validation(format!(
                "Γ must be positive definite: λ_min = {lmin:.3e}"
            )));
        }
        Ok(Self {
            model,
            gamma0,
            gamma,
        })
    }

    pub fn gamma0(&self) -> &HermitianMatrix {
        &self.gamma0
    }

    pub fn gamma(&self) -> &HermitianMatrix {
        &self.gamma
    }

    /// `Γ₀ + tΓ`.
    pub fn gamma_at(&self, t: f64) -> HermitianMatrix {
        self.gamma0.add(&self.gamma.scale(t))
    }
}

/// `A + B G B†` (Hermitian by construction).
pub fn perturb(model: &OperatorModel, g: &HermitianMatrix) -> Result<HermitianMatrix> {
    if g.dim() != model.rank() {
        return Err(Error::DimensionMismatch(format!(
            "perturbation matrix is {}×{}, window rank is {}",
            g.dim(),
            g.dim(),
            model.rank()
        )));
    }
    let bg = model.window() * g.matrix();
    let bgb = &bg * &model.window().adjoint();
    HermitianMatrix::new((model.operator().matrix() + &bgb).hermitian_part())
}

/// The perturbed model `(A + B G B†, B)` with everything recomputed.
pub fn perturbed_model(model: &OperatorModel, g: &HermitianMatrix) -> Result<OperatorModel> {
    OperatorModel::new(perturb(model, g)?, model.window().clone())
}

/// Spectral measure of `A_G` by direct eigendecomposition.
pub fn perturbed_measure_direct(
    model: &OperatorModel,
    g: &HermitianMatrix,
) -> Result<MatrixMeasure> {
    Ok(perturbed_model(model, g)?.spectral_measure().clone())
}

/// Aronszajn–Krein transform `(I + F G)⁻¹ F` of a Cauchy-transform value.
pub fn aronszajn_krein(f: &HerglotzEval, g: &HermitianMatrix) -> Result<HerglotzEval> {
    let d = f.value.rows();
    if g.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "transform is {d}×{d}, perturbation matrix is {}×{}",
            g.dim(),
            g.dim()
        )));
    }
    let lhs = &CMatrix::identity(d) + &(&f.value * g.matrix());
    let cond = condition_number(&lhs);
    if cond > AK_COND_LIMIT {
        return Err(Error::IllConditioned {
            context: format!("(I + F G) at z = {}", f.z),
            cond,
        });
    }
    let value = lhs.solve(&f.value)?;
    Ok(HerglotzEval { z: f.z, value })
}

/// Right-hand Aronszajn–Krein form `F (I + G F)⁻¹`; kept as the algebraic
/// cross-check of [`aronszajn_krein`].
pub fn aronszajn_krein_right(f: &HerglotzEval, g: &HermitianMatrix) -> Result<HerglotzEval> {
    let d = f.value.rows();
    let lhs = &CMatrix::identity(d) + &(g.matrix() * &f.value);
    // F (I+GF)^{-1} = ((I+GF)^{-†} F†)†
    let xt = lhs.adjoint().solve(&f.value.adjoint())?;
    Ok(HerglotzEval {
        z: f.z,
        value: xt.adjoint(),
    })
}

/// Relative residual of the imaginary-part identity
/// `Im F_G = (I + F†G)⁻¹ · Im F · (I + G F)⁻¹`,
/// with `Im F_G` computed by the independent direct route.
pub fn im_transform_identity_residual(
    model: &OperatorModel,
    g: &HermitianMatrix,
    z: C64,
) -> Result<f64> {
    let f = model.cauchy(z)?;
    let mg = perturbed_measure_direct(model, g)?;
    let fg = cauchy_transform(&mg, z)?;
    let lhs = fg.imag_matrix();

    let d = model.rank();
    let a1 = &CMatrix::identity(d) + &(&f.value.adjoint() * g.matrix());
    let a2 = &CMatrix::identity(d) + &(g.matrix() * &f.value);
    let x = a1.solve(&f.imag_matrix())?;
    // X (I + G F)^{-1} computed through the adjoint system
    let rhs = a2.adjoint().solve(&x.adjoint())?.adjoint();

    Ok(operator_norm(&(&lhs - &rhs)) / (1.0 + operator_norm(&lhs)))
}

fn cyclicity_from_parts(eig: &EigenSystem, b: &CMatrix) -> CyclicityReport {
    let clusters = eigenvalue_clusters(&eig.values, ATOM_MERGE_TOL);
    let scale = operator_norm(b).max(1.0);
    let mut deficiencies = Vec::new();
    for (loc, idx) in clusters {
        // columns of (P_λ B) expressed in the eigenbasis: rows are ⟨v_i, b_j⟩
        let coords = CMatrix::from_fn(idx.len(), b.cols(), |i, j| {
            let k = idx[i];
            (0..b.rows())
                .map(|r| eig.vectors[(r, k)].conj() * b[(r, j)])
                .sum()
        });
        let mut rank = 0usize;
        // numerical rank through the Gram spectrum of the coordinate block
        let gram = HermitianMatrix::new((&coords * &coords.adjoint()).hermitian_part())
            .expect("Gram is Hermitian");
        for &l in &gram.eig().values {
            if l.max(0.0).sqrt() > WINDOW_RANK_TOL * scale {
                rank += 1;
            }
        }
        if rank < idx.len() {
            deficiencies.push(Deficiency {
                eigenvalue: loc,
                multiplicity: idx.len(),
                window_rank: rank,
            });
        }
    }
    CyclicityReport {
        cyclic: deficiencies.is_empty(),
        deficiencies,
    }
}

/// Cyclicity criterion: `rank(P_λ B) = rank(P_λ)` at every distinct
/// eigenvalue of `A`.
pub fn cyclicity_check(model: &OperatorModel) -> CyclicityReport {
    model.cyclicity().clone()
}

/// A cyclic window stays cyclic for the perturbed operator; recheck
/// directly on `(A_G, B)`.
pub fn cyclicity_preserved_check(model: &OperatorModel, g: &HermitianMatrix) -> Result<bool> {
    if !model.is_cyclic() {
        return Err(Error::Validation(
            "cyclicity_preserved_check requires a cyclic base model".into(),
        ));
    }
    Ok(perturbed_model(model, g)?.is_cyclic())
}

/// Result of the a.c. density congruence check at one point.
#[derive(Clone, Debug)]
pub struct AcTransformCheck {
    pub x: f64,
    /// Relative deviation between the congruence-transformed stored density
    /// and the boundary density of the transformed Herglotz function.
    pub residual: f64,
    pub rank_stored: usize,
    pub rank_transformed: usize,
}

impl AcTransformCheck {
    pub fn ranks_match(&self) -> bool {
        self.rank_stored == self.rank_transformed
    }
}

/// Compare `(I + F₊†G)⁻¹ W_ac(x) (I + G F₊)⁻¹` against the extrapolated
/// boundary density of the transformed function `(I + F G)⁻¹ F` at `x`.
pub fn ac_density_transform(
    m_ac: &MatrixMeasure,
    g: &HermitianMatrix,
    x: f64,
    ladder: &[f64],
) -> Result<AcTransformCheck> {
    let grid = m_ac
        .ac()
        .ok_or_else(|| Error::Validation("measure has no a.c. part".into()))?;
    let h = grid.spacing();
    if x < grid.start + h || x > grid.end - h {
        return Err(Error::Validation(format!(
            "x = {x} is not interior to the a.c. grid [{}, {}]",
            grid.start, grid.end
        )));
    }
    let d = m_ac.dim();
    let eps_min = *ladder
        .last()
        .ok_or_else(|| Error::Validation("ε-ladder must be non-empty".into()))?;

    // boundary value F₊ by extrapolation of F(x+iε)
    let f_samples: Vec<CMatrix> = ladder
        .iter()
        .map(|&eps| Ok(cauchy_transform(m_ac, C64::new(x, eps))?.value))
        .collect::<Result<_>>()?;
    let (f_plus, _) = richardson_limit(ladder, &f_samples)?;

    // Lemma-style invertibility surrogate at the finest rung
    let f_min = cauchy_transform(m_ac, C64::new(x, eps_min))?;
    let lhs_min = &CMatrix::identity(d) + &(g.matrix() * &f_min.value);
    let cond = condition_number(&lhs_min);
    if cond > 1e8 {
        return Err(Error::ExceptionalPoint {
            x,
            context: format!("(I + G F) condition number {cond:.3e} at the finest rung"),
        });
    }

    // congruence transform of the stored density
    let w = grid.density_at(x);
    let a_left = &CMatrix::identity(d) + &(&f_plus.adjoint() * g.matrix());
    let a_right = &CMatrix::identity(d) + &(g.matrix() * &f_plus);
    let tmp = a_left.solve(&w)?;
    let transformed = a_right.adjoint().solve(&tmp.adjoint())?.adjoint();

    // boundary density of the transformed Herglotz function
    let pi = std::f64::consts::PI;
    let fg_samples: Vec<CMatrix> = ladder
        .iter()
        .map(|&eps| {
            let f = cauchy_transform(m_ac, C64::new(x, eps))?;
            let fg = aronszajn_krein(&f, g)?;
            Ok(fg.imag_matrix().scale_re(1.0 / pi))
        })
        .collect::<Result<_>>()?;
    let (boundary, _) = richardson_limit(ladder, &fg_samples)?;

    let scale = operator_norm(&transformed)
        .max(operator_norm(&boundary))
        .max(1e-300);
    let residual = operator_norm(&(&transformed - &boundary)) / scale;

    // rank comparison with a cutoff wide enough to absorb extrapolation noise
    let rank_tol = 1e-3;
    let rank_stored = numerical_rank(&crate::herglotz::clamp_to_psd(&transformed), rank_tol);
    let rank_transformed = numerical_rank(&crate::herglotz::clamp_to_psd(&boundary), rank_tol);

    Ok(AcTransformCheck {
        x,
        residual,
        rank_stored,
        rank_transformed,
    })
}
