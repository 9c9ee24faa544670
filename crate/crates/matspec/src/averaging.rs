//! Spectral averaging over the perturbation line.
//!
//! For the family `Γ(t) = Γ₀ + tΓ` (Γ positive definite) the measures
//! `M^{Γ(t)}` average to `Γ⁻¹` times Lebesgue measure. Two routes are kept
//! side by side: `residue_total` integrates the profile
//! `h_z(t) = (1/π) Im F_{Γ(t)}(z)` written through `F(z)⁻¹`, while
//! `line_average` re-diagonalizes `A_{Γ(t)}` at every quadrature node and
//! integrates the kernel against the measure directly. Both must land on
//! `Γ⁻¹ ∫ f dx`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, operator_norm, CMatrix, HermitianMatrix, C64};
use crate::perturbation::{perturbed_measure_direct, PerturbationFamily};
use crate::quad::adaptive_gk;

/// Default absolute tolerance for the residue-route t-integral.
pub const RESIDUE_TOL: f64 = 1e-7;
/// Default absolute tolerance for the direct-route t-integral.
pub const LINE_TOL: f64 = 1e-6;
/// Condition ceiling above which `F(z)` is treated as non-invertible.
pub const F_COND_LIMIT: f64 = 1e12;
/// Atom-to-point proximity that counts as an exceptional hit.
pub const NULL_SET_PROXIMITY: f64 = 1e-9;

/// A finite combination of Poisson kernels `Σ c_j p_{w_j}`,
/// `p_w(x) = Im w / (π |x − w|²)`, each integrating to `c_j` over the line.
#[derive(Clone, Debug)]
pub struct LineKernel {
    terms: Vec<(f64, C64)>,
}

impl LineKernel {
    pub fn zero() -> Self {
        Self { terms: vec![] }
    }

    pub fn poisson(w: C64) -> Result<Self> {
        Self::combination(&[(1.0, w)])
    }

    pub fn combination(terms: &[(f64, C64)]) -> Result<Self> {
        for &(_, w) in terms {
            if w.im <= 0.0 {
                return Err(Error::Domain(format!(
                    "Poisson kernel point must lie in the upper half-plane, got {w}"
                )));
            }
        }
        Ok(Self {
            terms: terms.to_vec(),
        })
    }

    pub fn terms(&self) -> &[(f64, C64)] {
        &self.terms
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pi = std::f64::consts::PI;
        self.terms
            .iter()
            .map(|&(c, w)| c * w.im / (pi * (C64::new(x, 0.0) - w).norm_sqr()))
            .sum()
    }

    /// `∫ f dx = Σ c_j` (each Poisson kernel has unit mass).
    pub fn lebesgue_integral(&self) -> f64 {
        self.terms.iter().map(|&(c, _)| c).sum()
    }
}

/// Result of a line integral over the perturbation parameter.
#[derive(Clone, Debug)]
pub struct LineAverageResult {
    pub value: CMatrix,
    pub quadrature_error_estimate: f64,
    pub t_range_used: (f64, f64),
    pub tail_correction: CMatrix,
}

/// Evaluator for the profile `h_z(t) = (1/π) Im F_{Γ₀+tΓ}(z)`, precomputing
/// `F(z)` and (when well-conditioned) `F(z)⁻¹`.
pub struct HzEvaluator {
    d: usize,
    f: CMatrix,
    f_inv: Option<CMatrix>,
    gamma0: CMatrix,
    gamma: CMatrix,
}

impl HzEvaluator {
    pub fn new(family: &PerturbationFamily, z: C64) -> Result<Self> {
        if z.im <= 0.0 {
            return Err(Error::Domain(format!(
                "h_z profile needs Im z > 0, got z = {z}"
            )));
        }
        let f = family.model.cauchy(z)?.value;
        let f_inv = if condition_number(&f) < F_COND_LIMIT {
            Some(f.inverse()?)
        } else {
            None
        };
        Ok(Self {
            d: family.model.rank(),
            f,
            f_inv,
            gamma0: family.gamma0().matrix().clone(),
            gamma: family.gamma().matrix().clone(),
        })
    }

    pub fn uses_residue_form(&self) -> bool {
        self.f_inv.is_some()
    }

    /// Hermitian PSD profile value at parameter `t`.
    pub fn eval(&self, t: f64) -> Result<CMatrix> {
        let pi = std::f64::consts::PI;
        let gt = &self.gamma0 + &self.gamma.scale_re(t);
        let x = match &self.f_inv {
            Some(f_inv) => (f_inv + &gt).inverse()?,
            None => {
                // AK form (I + F Γ(t))⁻¹ F
                let lhs = &CMatrix::identity(self.d) + &(&self.f * &gt);
                lhs.solve(&self.f)?
            }
        };
        Ok(x.imag_part_matrix().scale_re(1.0 / pi).hermitian_part())
    }

    /// Residue and AK forms evaluated independently (for cross-checks).
    pub fn eval_both(&self, t: f64) -> Result<(Option<CMatrix>, CMatrix)> {
        let pi = std::f64::consts::PI;
        let gt = &self.gamma0 + &self.gamma.scale_re(t);
        let residue = match &self.f_inv {
            Some(f_inv) => Some(
                (f_inv + &gt)
                    .inverse()?
                    .imag_part_matrix()
                    .scale_re(1.0 / pi),
            ),
            None => None,
        };
        let lhs = &CMatrix::identity(self.d) + &(&self.f * &gt);
        let ak = lhs.solve(&self.f)?.imag_part_matrix().scale_re(1.0 / pi);
        Ok((residue, ak))
    }

    /// Asymptotic tail coefficient: `h_z(t) = C/t² + O(t⁻³)` with
    /// `C = (1/π) Γ⁻¹ (−Im F(z)⁻¹) Γ⁻¹` (PSD). Falls back to a probed
    /// estimate when `F(z)` is not invertible.
    pub fn tail_coefficient(&self) -> Result<CMatrix> {
        let pi = std::f64::consts::PI;
        let ginv = self.gamma.inverse()?;
        match &self.f_inv {
            Some(f_inv) => {
                let im = f_inv.imag_part_matrix().scale_re(-1.0 / pi);
                Ok((&(&ginv * &im) * &ginv).hermitian_part())
            }
            None => {
                let probe = 1e6;
                let h = self.eval(probe)?;
                Ok(h.scale_re(probe * probe))
            }
        }
    }

    /// Conservative scale below which the integrand still varies.
    pub fn feature_scale(&self) -> f64 {
        let num = 1.0
            + self
                .f_inv
                .as_ref()
                .map(operator_norm)
                .unwrap_or_else(|| operator_norm(&self.f))
            + operator_norm(&self.gamma0);
        let lmin = HermitianMatrix::new(self.gamma.clone())
            .expect("Γ is Hermitian")
            .eig()
            .values[0];
        num / lmin
    }
}

/// `h_z(t) = (1/π) Im F_{Γ₀+tΓ}(z)`, computed through `F(z)⁻¹` when
/// available and through the Aronszajn–Krein form otherwise.
pub fn h_z_profile(family: &PerturbationFamily, z: C64, t: f64) -> Result<CMatrix> {
    HzEvaluator::new(family, z)?.eval(t)
}

fn integrate_profile(
    eval: impl Fn(f64) -> Result<CMatrix>,
    tail: &CMatrix,
    feature_scale: f64,
    abs_tol: f64,
    context: &str,
) -> Result<LineAverageResult> {
    let tail_norm = operator_norm(tail);
    let t_raw = 20.0 * tail_norm / abs_tol;
    let t_min = 50.0 * feature_scale;
    let big_t = t_raw.max(t_min);
    let mut f = |t: f64| eval(t);
    let quad = adaptive_gk(&mut f, -big_t, big_t, abs_tol, 4000).map_err(|e| match e {
        Error::Quadrature { estimate, .. } => Error::Quadrature {
            context: context.to_string(),
            estimate,
        },
        other => other,
    })?;
    // ∫_{|t|>T} C/t² dt = 2C/T; the neglected remainder is O(T⁻²)
    let tail_correction = tail.scale_re(2.0 / big_t);
    let residual_bound = tail_norm * t_min / (big_t * big_t);
    Ok(LineAverageResult {
        value: &quad.value + &tail_correction,
        quadrature_error_estimate: quad.error_estimate + residual_bound,
        t_range_used: (-big_t, big_t),
        tail_correction,
    })
}

/// `∫ h_z(t) dt` by adaptive quadrature plus the analytic tail correction.
/// Equals `Γ⁻¹` for every `z` in the upper half-plane.
pub fn residue_total(
    family: &PerturbationFamily,
    z: C64,
    abs_tol: f64,
) -> Result<LineAverageResult> {
    let ev = HzEvaluator::new(family, z)?;
    let tail = ev.tail_coefficient()?;
    integrate_profile(
        |t| ev.eval(t),
        &tail,
        ev.feature_scale(),
        abs_tol,
        "residue_total",
    )
}

/// `∫ (∫ f dM^{Γ₀+tΓ}) dt` with the inner integral evaluated by direct
/// eigendecomposition of `A_{Γ(t)}` at each node. Lands on
/// `Γ⁻¹ ∫ f dx` within the reported estimate.
pub fn line_average(
    family: &PerturbationFamily,
    f: &LineKernel,
    abs_tol: f64,
) -> Result<LineAverageResult> {
    let d = family.model.rank();
    if f.terms().is_empty() {
        return Ok(LineAverageResult {
            value: CMatrix::zeros(d, d),
            quadrature_error_estimate: 0.0,
            t_range_used: (0.0, 0.0),
            tail_correction: CMatrix::zeros(d, d),
        });
    }
    // combined tail coefficient and feature scale over the kernel's points
    let mut tail = CMatrix::zeros(d, d);
    let mut feature = 0.0f64;
    for &(c, w) in f.terms() {
        let ev = HzEvaluator::new(family, w)?;
        tail = &tail + &ev.tail_coefficient()?.scale_re(c);
        feature = feature.max(ev.feature_scale());
    }
    let inner = |t: f64| -> Result<CMatrix> {
        let m = perturbed_measure_direct(&family.model, &family.gamma_at(t))?;
        m.integrate(|x| C64::new(f.eval(x), 0.0))
            .map_err(|e| Error::Evaluation {
                location: t,
                context: format!("inner spectral integral failed at t = {t}: {e}"),
            })
    };
    integrate_profile(inner, &tail, feature, abs_tol, "line_average")
}

/// Report for the uniform Poisson mass bound over a family of perturbations.
#[derive(Clone, Debug)]
pub struct PoissonMassReport {
    pub per_sample: Vec<f64>,
    pub max_mass: f64,
    /// `2 ‖(Im F(i)⁻¹)⁻¹‖` from the unperturbed transform.
    pub bound: f64,
    pub within_bound: bool,
}

/// `max over samples` of `‖∫ dM^G/(1+x²)‖`, checked against the uniform
/// bound `2‖(Im F(i)⁻¹)⁻¹‖` drawn from the unperturbed transform at `z = i`.
pub fn poisson_mass_bound(
    model: &crate::perturbation::OperatorModel,
    g_samples: &[HermitianMatrix],
) -> Result<PoissonMassReport> {
    let f_i = model.cauchy(C64::new(0.0, 1.0))?.value;
    let f_inv = f_i.inverse()?;
    let im_inv = f_inv.imag_part_matrix();
    let bound = 2.0 * operator_norm(&im_inv.inverse()?);
    let mut per_sample = Vec::with_capacity(g_samples.len());
    for g in g_samples {
        let m = perturbed_measure_direct(model, g)?;
        let mass = m
            .integrate(|x| C64::new(1.0 / (1.0 + x * x), 0.0))?
            .hermitian_part();
        per_sample.push(operator_norm(&mass));
    }
    let max_mass = per_sample.iter().copied().fold(0.0, f64::max);
    Ok(PoissonMassReport {
        per_sample,
        max_mass,
        within_bound: max_mass <= bound + 1e-8,
        bound,
    })
}

/// Least-squares slope of `log ‖∫ dM^{Γ(t)}/(1+x²)‖` against `log t` over a
/// log-spaced grid; the family bound caps this exponent at 2.
pub fn poisson_growth_exponent(
    family: &PerturbationFamily,
    t_lo: f64,
    t_hi: f64,
    points: usize,
) -> Result<f64> {
    assert!(points >= 2 && t_hi > t_lo && t_lo > 0.0);
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for k in 0..points {
        let frac = k as f64 / (points - 1) as f64;
        let t = t_lo * (t_hi / t_lo).powf(frac);
        let m = perturbed_measure_direct(&family.model, &family.gamma_at(t))?;
        let mass = operator_norm(
            &m.integrate(|x| C64::new(1.0 / (1.0 + x * x), 0.0))?
                .hermitian_part(),
        );
        xs.push(t.ln());
        ys.push(mass.max(1e-300).ln());
    }
    let n = points as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

// -- averaging over the orthogonal complement of Γ ---------------------------

/// Weight on `Γ⊥` used by [`orthogonal_weighted_average`].
#[derive(Clone, Debug)]
pub enum OrthogonalWeight {
    /// `Φ(ξ) = amplitude · exp(−‖ξ‖²/2)` in Frobenius coordinates of `Γ⊥`.
    Gaussian {
        amplitude: f64,
    },
    Zero,
}

impl OrthogonalWeight {
    /// Closed-form total `a = ∫ Φ` over the `dim`-dimensional complement.
    pub fn total(&self, dim: usize) -> f64 {
        match self {
            OrthogonalWeight::Gaussian { amplitude } => {
                amplitude * (2.0 * std::f64::consts::PI).powf(dim as f64 / 2.0)
            }
            OrthogonalWeight::Zero => 0.0,
        }
    }
}

/// Frobenius-orthonormal basis of `Γ⊥ = {S Hermitian : Re tr(ΓS) = 0}`,
/// built by Gram–Schmidt of the standard Hermitian basis against `Γ/‖Γ‖_F`.
pub fn gamma_orthogonal_basis(gamma: &HermitianMatrix) -> Vec<HermitianMatrix> {
    let d = gamma.dim();
    let mut candidates: Vec<CMatrix> = Vec::with_capacity(d * d);
    for k in 0..d {
        let mut m = CMatrix::zeros(d, d);
        m[(k, k)] = C64::new(1.0, 0.0);
        candidates.push(m);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in (j + 1)..d {
            let mut sym = CMatrix::zeros(d, d);
            sym[(j, k)] = C64::new(s, 0.0);
            sym[(k, j)] = C64::new(s, 0.0);
            candidates.push(sym);
            let mut asym = CMatrix::zeros(d, d);
            asym[(j, k)] = C64::new(0.0, s);
            asym[(k, j)] = C64::new(0.0, -s);
            candidates.push(asym);
        }
    }
    let fro = |a: &CMatrix, b: &CMatrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += (b[(i, j)].conj() * a[(i, j)]).re;
            }
        }
        acc
    };
    let gnorm = gamma.matrix().frobenius_norm();
    let mut ortho: Vec<CMatrix> = vec![gamma.matrix().scale_re(1.0 / gnorm)];
    for cand in candidates {
        let mut v = cand;
        for u in &ortho {
            let proj = fro(&v, u);
            v = &v - &u.scale_re(proj);
        }
        let norm = v.frobenius_norm();
        if norm > 1e-8 {
            ortho.push(v.scale_re(1.0 / norm));
        }
    }
    debug_assert_eq!(ortho.len(), d * d);
    ortho
        .into_iter()
        .skip(1)
        .map(|m| HermitianMatrix::new(m.hermitian_part()).expect("basis is Hermitian"))
        .collect()
}

/// Monte-Carlo estimate of the triply-integrated average over `Γ⊥`.
#[derive(Clone, Debug)]
pub struct OrthogonalAverageResult {
    pub estimate: CMatrix,
    /// Standard error of the estimate (Frobenius scale, weight included).
    pub stderr: f64,
    /// Weighted mean of the per-sample quadrature error estimates.
    pub quadrature_uncertainty: f64,
    pub samples: usize,
    pub total_weight: f64,
    /// Max deviation between the fast per-sample path and `line_average`
    /// on the deterministic cross-check subset.
    pub cross_check_deviation: f64,
}

/// Deterministic per-index standard normal draws (counter-based stream).
fn normal_draws(seed: u64, index: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let u2 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        out.push(r * th.cos());
        out.push(r * th.sin());
    }
    out.truncate(count);
    out
}

/// Per-sample tolerance of the residue-route line integral inside the
/// Monte-Carlo average.
pub const MC_SAMPLE_TOL: f64 = 1e-8;

/// Residue-route line integral with a precomputed `F(w)⁻¹` per kernel term:
/// the same adaptive profile integration as [`residue_total`], shared across
/// Monte-Carlo samples so only `Γ₀` varies.
fn residue_line_integral(
    family: &PerturbationFamily,
    gamma0: &HermitianMatrix,
    kernel_terms: &[(f64, C64, CMatrix)], // (coefficient, w, F(w)⁻¹)
    abs_tol: f64,
) -> Result<(CMatrix, f64)> {
    let d = family.model.rank();
    let gamma = family.gamma().matrix();
    let gamma_inv = gamma.inverse()?;
    let lmin = family.gamma().eig().values[0];
    let pi = std::f64::consts::PI;
    let mut total = CMatrix::zeros(d, d);
    let mut err = 0.0f64;
    for (c, _w, f_inv) in kernel_terms {
        let tail = {
            let im = f_inv.imag_part_matrix().scale_re(-1.0 / pi);
            (&(&gamma_inv * &im) * &gamma_inv).hermitian_part()
        };
        let feature = (1.0 + operator_norm(f_inv) + operator_norm(gamma0.matrix())) / lmin;
        let eval = |t: f64| -> Result<CMatrix> {
            let gt = &(gamma0.matrix() + &gamma.scale_re(t)) + f_inv;
            Ok(gt
                .inverse()?
                .imag_part_matrix()
                .scale_re(1.0 / pi)
                .hermitian_part())
        };
        let part = integrate_profile(eval, &tail, feature, abs_tol, "mc-line-integral")?;
        total = &total + &part.value.scale_re(*c);
        err += c.abs() * part.quadrature_error_estimate;
    }
    Ok((total, err))
}

/// Monte-Carlo average of the line integral over `Γ₀ ∈ Γ⊥` with weight `Φ`:
/// estimates `a · Γ⁻¹ · ∫ f dx` where `a = ∫ Φ`.
///
/// Per-sample values run the adaptive residue-route profile integral; the
/// first `cross_check` samples are recomputed with the direct
/// `line_average` and the maximum deviation is reported. When `stderr_tol`
/// is given and the standard error still exceeds it after the sample
/// budget, the call fails with a budget-exceeded report.
pub fn orthogonal_weighted_average(
    family: &PerturbationFamily,
    f: &LineKernel,
    phi: &OrthogonalWeight,
    mc_samples: usize,
    seed: u64,
    cross_check: usize,
) -> Result<OrthogonalAverageResult> {
    orthogonal_weighted_average_with_tol(family, f, phi, mc_samples, seed, cross_check, None)
}

/// [`orthogonal_weighted_average`] with an optional standard-error target.
#[allow(clippy::too_many_arguments)]
pub fn orthogonal_weighted_average_with_tol(
    family: &PerturbationFamily,
    f: &LineKernel,
    phi: &OrthogonalWeight,
    mc_samples: usize,
    seed: u64,
    cross_check: usize,
    stderr_tol: Option<f64>,
) -> Result<OrthogonalAverageResult> {
    let d = family.model.rank();
    let dim = d * d - 1;
    if let OrthogonalWeight::Zero = phi {
        return Ok(OrthogonalAverageResult {
            estimate: CMatrix::zeros(d, d),
            stderr: 0.0,
            quadrature_uncertainty: 0.0,
            samples: mc_samples,
            total_weight: 0.0,
            cross_check_deviation: 0.0,
        });
    }
    if mc_samples == 0 {
        return Err(Error::Validation("mc_samples must be positive".into()));
    }
    let a = phi.total(dim);
    if dim == 0 {
        // Γ⊥ is trivial: the weighted average reduces to a · line_average
        let la = line_average(family, f, LINE_TOL)?;
        return Ok(OrthogonalAverageResult {
            estimate: la.value.scale_re(a),
            stderr: 0.0,
            quadrature_uncertainty: a * la.quadrature_error_estimate,
            samples: mc_samples,
            total_weight: a,
            cross_check_deviation: 0.0,
        });
    }
    let basis = gamma_orthogonal_basis(family.gamma());
    // shared data: F(w)⁻¹ per kernel term
    let mut terms = Vec::with_capacity(f.terms().len());
    for &(c, w) in f.terms() {
        let ev = HzEvaluator::new(family, w)?;
        let f_inv = ev.f_inv.clone().ok_or_else(|| Error::IllConditioned {
            context: format!("F({w}) not invertible for the residue-route sampler"),
            cond: f64::INFINITY,
        })?;
        terms.push((c, w, f_inv));
    }
    let sample_gamma0 = |i: usize| -> HermitianMatrix {
        let xi = normal_draws(seed, i as u64, dim);
        let mut g0 = CMatrix::zeros(d, d);
        for (coef, b) in xi.iter().zip(&basis) {
            g0 = &g0 + &b.matrix().scale_re(*coef);
        }
        HermitianMatrix::new(g0.hermitian_part()).expect("sampled Γ₀ is Hermitian")
    };
    let evaluated: Vec<(CMatrix, f64)> = (0..mc_samples)
        .into_par_iter()
        .map(|i| {
            let g0 = sample_gamma0(i);
            residue_line_integral(family, &g0, &terms, MC_SAMPLE_TOL)
        })
        .collect::<Result<_>>()?;
    let values: Vec<CMatrix> = evaluated.iter().map(|(v, _)| v.clone()).collect();
    let mut quad_unc = evaluated.iter().map(|&(_, e)| e).fold(0.0f64, f64::max);
    // deterministic cross-check against the direct eigendecomposition route
    let mut cross_dev = 0.0f64;
    for (i, value) in values.iter().enumerate().take(cross_check.min(mc_samples)) {
        let g0 = sample_gamma0(i);
        let shifted = PerturbationFamily::new(family.model.clone(), g0, family.gamma().clone())?;
        let direct = line_average(&shifted, f, LINE_TOL)?;
        let dev = operator_norm(&(value - &direct.value));
        cross_dev = cross_dev.max(dev);
        quad_unc = quad_unc.max(direct.quadrature_error_estimate);
    }
    let n = mc_samples as f64;
    let mut mean = CMatrix::zeros(d, d);
    for v in &values {
        mean = &mean + v;
    }
    mean = mean.scale_re(1.0 / n);
    let var: f64 = values
        .iter()
        .map(|v| {
            let diff = v - &mean;
            diff.frobenius_norm().powi(2)
        })
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let stderr = a * (var / n).sqrt();
    if let Some(tol) = stderr_tol {
        if stderr > tol {
            return Err(Error::BudgetExceeded(format!(
                "standard error {stderr:.3e} above requested {tol:.3e} after {mc_samples} samples"
            )));
        }
    }
    Ok(OrthogonalAverageResult {
        estimate: mean.scale_re(a),
        stderr,
        quadrature_uncertainty: a * (quad_unc + cross_dev),
        samples: mc_samples,
        total_weight: a,
        cross_check_deviation: cross_dev,
    })
}

// -- exceptional parameter scans ----------------------------------------------

/// Eigenvalues of `A_{Γ(t)}` for each `t` in the grid (each row ascending).
pub fn eigenvalue_trajectories(
    family: &PerturbationFamily,
    t_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    t_grid
        .iter()
        .map(|&t| {
            Ok(
                crate::perturbation::perturb(&family.model, &family.gamma_at(t))?
                    .eig()
                    .values,
            )
        })
        .collect()
}

/// Grid values of `t` at which some atom of `M^{Γ(t)}` lands within
/// [`NULL_SET_PROXIMITY`] of one of the given points.
pub fn null_set_scan(
    family: &PerturbationFamily,
    points: &[f64],
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    let mut exceptional = Vec::new();
    for &t in t_grid {
        let m = perturbed_measure_direct(&family.model, &family.gamma_at(t))?;
        let hit = m.atoms().iter().any(|a| {
            points
                .iter()
                .any(|&p| (a.location - p).abs() <= NULL_SET_PROXIMITY)
        });
        if hit {
            exceptional.push(t);
        }
    }
    Ok(exceptional)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::OperatorModel;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rank_one_family() -> PerturbationFamily {
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0]),
            CMatrix::identity(1),
        )
        .unwrap();
        PerturbationFamily::new(
            model,
            HermitianMatrix::zeros(1),
            HermitianMatrix::from_real_diag(&[1.0]),
        )
        .unwrap()
    }

    fn diag01_family(gamma: HermitianMatrix) -> PerturbationFamily {
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0, 1.0]),
            CMatrix::identity(2),
        )
        .unwrap();
        PerturbationFamily::new(model, HermitianMatrix::zeros(2), gamma).unwrap()
    }

    #[test]
    fn h_z_profile_rank_one_is_poisson_kernel() {
        let fam = rank_one_family();
        for &t in &[-3.0, -0.5, 0.0, 1.0, 10.0] {
            let h = h_z_profile(&fam, c(0.0, 1.0), t).unwrap();
            let expect = 1.0 / (std::f64::consts::PI * (1.0 + t * t));
            assert!((h[(0, 0)].re - expect).abs() < 1e-14, "t = {t}");
        }
    }

    #[test]
    fn h_z_profile_unperturbed_member() {
        let fam = diag01_family(HermitianMatrix::identity(2));
        let z = c(0.3, 0.9);
        let h = h_z_profile(&fam, z, 0.0).unwrap();
        let f = fam.model.cauchy(z).unwrap();
        let expect = f.imag_matrix().scale_re(1.0 / std::f64::consts::PI);
        assert!(operator_norm(&(&h - &expect)) < 1e-12);
    }

    #[test]
    fn h_z_residue_and_ak_forms_agree() {
        let fam = diag01_family(
            HermitianMatrix::new(CMatrix::from_rows(&[
                vec![c(1.5, 0.0), c(0.3, 0.2)],
                vec![c(0.3, -0.2), c(0.8, 0.0)],
            ]))
            .unwrap(),
        );
        let ev = HzEvaluator::new(&fam, c(0.1, 0.7)).unwrap();
        assert!(ev.uses_residue_form());
        for &t in &[-20.0, -1.0, 0.0, 0.3, 5.0, 1e3] {
            let (residue, ak) = ev.eval_both(t).unwrap();
            let residue = residue.unwrap();
            let dev = operator_norm(&(&residue - &ak));
            assert!(
                dev <= 1e-10 * (1.0 + operator_norm(&ak)),
                "t = {t}, dev = {dev:.3e}"
            );
        }
    }

    #[test]
    fn h_z_tail_decay() {
        let fam = diag01_family(HermitianMatrix::identity(2));
        let ev = HzEvaluator::new(&fam, c(0.0, 1.0)).unwrap();
        let tail = ev.tail_coefficient().unwrap();
        for &t in &[1e3, 1e4, 1e5] {
            let h = ev.eval(t).unwrap();
            let expected = tail.scale_re(1.0 / (t * t));
            let rel = operator_norm(&(&h - &expected)) / operator_norm(&expected);
            assert!(
                rel < 2e-2 * (1e3 / t).max(1e-3) + 2e-3,
                "t = {t}, rel = {rel}"
            );
        }
    }

    #[test]
    fn residue_total_is_gamma_inverse() {
        let fam = rank_one_family();
        let r = residue_total(&fam, c(0.0, 1.0), RESIDUE_TOL).unwrap();
        assert!(
            (r.value[(0, 0)].re - 1.0).abs() < 1e-6,
            "value {}",
            r.value[(0, 0)].re
        );

        let fam = diag01_family(HermitianMatrix::from_real_diag(&[1.0, 2.0]));
        let r = residue_total(&fam, c(0.0, 1.0), RESIDUE_TOL).unwrap();
        assert!((r.value[(0, 0)].re - 1.0).abs() < 1e-6);
        assert!((r.value[(1, 1)].re - 0.5).abs() < 1e-6);
        assert!(r.value[(0, 1)].norm() < 1e-6);
    }

    #[test]
    fn residue_total_z_independent() {
        let fam = diag01_family(
            HermitianMatrix::new(CMatrix::from_rows(&[
                vec![c(1.2, 0.0), c(-0.2, 0.4)],
                vec![c(-0.2, -0.4), c(2.0, 0.0)],
            ]))
            .unwrap(),
        );
        let r1 = residue_total(&fam, c(0.0, 1.0), RESIDUE_TOL).unwrap();
        let r2 = residue_total(&fam, c(0.0, 2.0), RESIDUE_TOL).unwrap();
        let r3 = residue_total(&fam, c(1.0, 1.0), RESIDUE_TOL).unwrap();
        assert!(operator_norm(&(&r1.value - &r2.value)) < 2e-6);
        assert!(operator_norm(&(&r1.value - &r3.value)) < 2e-6);
    }

    #[test]
    fn residue_total_gamma_homogeneity_bitwise() {
        let gamma = HermitianMatrix::new(CMatrix::from_rows(&[
            vec![c(1.5, 0.0), c(0.25, -0.3)],
            vec![c(0.25, 0.3), c(1.0, 0.0)],
        ]))
        .unwrap();
        let f1 = diag01_family(gamma.clone());
        let f2 = diag01_family(gamma.scale(2.0));
        let r1 = residue_total(&f1, c(0.0, 1.0), RESIDUE_TOL).unwrap();
        let r2 = residue_total(&f2, c(0.0, 1.0), RESIDUE_TOL / 2.0).unwrap();
        let dev = operator_norm(&(&r2.value.scale_re(2.0) - &r1.value));
        assert!(dev <= 1e-10, "homogeneity deviation {dev:.3e}");
    }

    #[test]
    fn line_average_rank_one() {
        let fam = rank_one_family();
        let f = LineKernel::poisson(c(0.0, 1.0)).unwrap();
        let r = line_average(&fam, &f, LINE_TOL).unwrap();
        assert!(
            (r.value[(0, 0)].re - 1.0).abs() < 1e-5,
            "value {}",
            r.value[(0, 0)].re
        );
    }

    #[test]
    fn line_average_zero_kernel() {
        let fam = rank_one_family();
        let r = line_average(&fam, &LineKernel::zero(), LINE_TOL).unwrap();
        assert_eq!(r.value.max_abs_entry(), 0.0);
    }

    #[test]
    fn line_average_matches_residue_total() {
        let fam = diag01_family(HermitianMatrix::from_real_diag(&[1.0, 2.0]));
        let w = c(0.5, 1.5);
        let la = line_average(&fam, &LineKernel::poisson(w).unwrap(), LINE_TOL).unwrap();
        let rt = residue_total(&fam, w, RESIDUE_TOL).unwrap();
        assert!(operator_norm(&(&la.value - &rt.value)) < 1e-5);
    }

    #[test]
    fn line_average_linear_in_kernel() {
        let fam = rank_one_family();
        let w1 = c(0.0, 1.0);
        let w2 = c(1.0, 2.0);
        let combo = LineKernel::combination(&[(0.7, w1), (0.3, w2)]).unwrap();
        let r = line_average(&fam, &combo, LINE_TOL).unwrap();
        let r1 = line_average(&fam, &LineKernel::poisson(w1).unwrap(), LINE_TOL).unwrap();
        let r2 = line_average(&fam, &LineKernel::poisson(w2).unwrap(), LINE_TOL).unwrap();
        let sum = &r1.value.scale_re(0.7) + &r2.value.scale_re(0.3);
        assert!(operator_norm(&(&r.value - &sum)) < 3e-6);
    }

    #[test]
    fn poisson_mass_examples() {
        let fam = rank_one_family();
        // closed form: mass(γ) = 1/(1+γ²) ≤ 1
        let samples: Vec<HermitianMatrix> = [-5.0, -1.0, 0.0, 0.5, 3.0]
            .iter()
            .map(|&g| HermitianMatrix::from_real_diag(&[g]))
            .collect();
        let rep = poisson_mass_bound(&fam.model, &samples).unwrap();
        assert!(rep.within_bound);
        for (g, mass) in [-5.0, -1.0, 0.0, 0.5, 3.0].iter().zip(&rep.per_sample) {
            assert!((mass - 1.0 / (1.0 + g * g)).abs() < 1e-12);
        }
        assert!((rep.bound - 2.0).abs() < 1e-12);
    }

    #[test]
    fn growth_exponent_below_two() {
        let fam = diag01_family(HermitianMatrix::from_real_diag(&[1.0, 0.5]));
        let slope = poisson_growth_exponent(&fam, 10.0, 1e4, 12).unwrap();
        assert!(slope <= 2.1, "slope = {slope}");
    }

    #[test]
    fn gamma_orthogonal_basis_properties() {
        let gamma = HermitianMatrix::new(CMatrix::from_rows(&[
            vec![c(2.0, 0.0), c(0.5, 0.5)],
            vec![c(0.5, -0.5), c(1.0, 0.0)],
        ]))
        .unwrap();
        let basis = gamma_orthogonal_basis(&gamma);
        assert_eq!(basis.len(), 3);
        for (i, b) in basis.iter().enumerate() {
            // orthogonal to Γ in the Frobenius inner product
            let ip = (&gamma.matrix().adjoint() * b.matrix()).trace().re;
            assert!(ip.abs() < 1e-10, "basis {i} not orthogonal to Γ");
            assert!((b.matrix().frobenius_norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn residue_line_integral_matches_line_average() {
        let fam = diag01_family(HermitianMatrix::from_real_diag(&[1.0, 2.0]));
        let w = c(0.0, 1.0);
        let ev = HzEvaluator::new(&fam, w).unwrap();
        let terms = vec![(1.0, w, ev.f_inv.clone().unwrap())];
        // a shifted Γ₀ exercises the feature-scale handling
        let g0 = HermitianMatrix::new(CMatrix::from_rows(&[
            vec![c(1.7, 0.0), c(-0.4, 0.9)],
            vec![c(-0.4, -0.9), c(-2.3, 0.0)],
        ]))
        .unwrap();
        let (fast, _) = residue_line_integral(&fam, &g0, &terms, MC_SAMPLE_TOL).unwrap();
        let shifted = PerturbationFamily::new(fam.model.clone(), g0, fam.gamma().clone()).unwrap();
        let direct = line_average(&shifted, &LineKernel::poisson(w).unwrap(), LINE_TOL).unwrap();
        let dev = operator_norm(&(&fast - &direct.value));
        assert!(dev < 1e-6, "deviation {dev:.3e}");
    }

    #[test]
    fn orthogonal_average_d1_reduces_to_line_average() {
        let fam = rank_one_family();
        let f = LineKernel::poisson(c(0.0, 1.0)).unwrap();
        let phi = OrthogonalWeight::Gaussian { amplitude: 1.0 };
        let r = orthogonal_weighted_average(&fam, &f, &phi, 10, 7, 0).unwrap();
        // dim(Γ⊥) = 0, a = 1: estimate = Γ⁻¹ = 1
        assert!((r.estimate[(0, 0)].re - 1.0).abs() < 1e-5);
        assert!((r.total_weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_average_zero_weight() {
        let fam = rank_one_family();
        let f = LineKernel::poisson(c(0.0, 1.0)).unwrap();
        let r = orthogonal_weighted_average(&fam, &f, &OrthogonalWeight::Zero, 10, 7, 0).unwrap();
        assert_eq!(r.estimate.max_abs_entry(), 0.0);
    }

    #[test]
    fn orthogonal_average_d2_gaussian() {
        let fam = diag01_family(HermitianMatrix::identity(2));
        let f = LineKernel::poisson(c(0.0, 1.0)).unwrap();
        let phi = OrthogonalWeight::Gaussian { amplitude: 1.0 };
        let r = orthogonal_weighted_average(&fam, &f, &phi, 400, 42, 3).unwrap();
        let a = r.total_weight;
        assert!((a - (2.0 * std::f64::consts::PI).powf(1.5)).abs() < 1e-10);
        let target = CMatrix::identity(2).scale_re(a);
        let dev = operator_norm(&(&r.estimate - &target));
        let tol = 3.0 * r.stderr + r.quadrature_uncertainty + 1e-7 * a;
        assert!(dev <= tol, "dev {dev:.3e} vs tol {tol:.3e}");
        assert!(r.cross_check_deviation < 1e-6);
    }

    #[test]
    fn orthogonal_average_budget_exceeded() {
        let fam = diag01_family(HermitianMatrix::identity(2));
        let f = LineKernel::poisson(c(0.0, 1.0)).unwrap();
        let phi = OrthogonalWeight::Gaussian { amplitude: 1.0 };
        let err =
            orthogonal_weighted_average_with_tol(&fam, &f, &phi, 8, 5, 0, Some(0.0)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded(_)));
    }

    #[test]
    fn determinism_same_seed_same_result() {
        let fam = diag01_family(HermitianMatrix::identity(2));
        let f = LineKernel::poisson(c(0.0, 1.0)).unwrap();
        let phi = OrthogonalWeight::Gaussian { amplitude: 1.0 };
        let r1 = orthogonal_weighted_average(&fam, &f, &phi, 50, 99, 0).unwrap();
        let r2 = orthogonal_weighted_average(&fam, &f, &phi, 50, 99, 0).unwrap();
        assert_eq!(
            (&r1.estimate - &r2.estimate).max_abs_entry(),
            0.0,
            "MC must be bit-deterministic for a fixed seed"
        );
    }

    #[test]
    fn null_set_scan_worked_example() {
        let fam = diag01_family(HermitianMatrix::identity(2));
        // eigenvalue trajectories are t and 1 + t
        let t_grid: Vec<f64> = (0..=200).map(|k| -1.0 + k as f64 * 0.01).collect();
        let exc = null_set_scan(&fam, &[0.5], &t_grid).unwrap();
        assert_eq!(exc.len(), 2);
        assert!((exc[0] + 0.5).abs() < 1e-12);
        assert!((exc[1] - 0.5).abs() < 1e-12);

        let empty = null_set_scan(&fam, &[10.0], &t_grid).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn trajectories_monotone_for_positive_gamma() {
        let fam = diag01_family(
            HermitianMatrix::new(CMatrix::from_rows(&[
                vec![c(1.0, 0.0), c(0.4, 0.1)],
                vec![c(0.4, -0.1), c(0.7, 0.0)],
            ]))
            .unwrap(),
        );
        let t_grid: Vec<f64> = (0..=100).map(|k| -2.0 + k as f64 * 0.04).collect();
        let traj = eigenvalue_trajectories(&fam, &t_grid).unwrap();
        for j in 0..2 {
            for w in traj.windows(2) {
                assert!(w[1][j] >= w[0][j] - 1e-10);
            }
        }
    }
}
