//! Matrix Cauchy transforms, Poisson extensions, and boundary values.
//!
//! `F(z) = ∫ dM(t)/(t−z)` is evaluated exactly: atoms contribute
//! `W_k/(x_k−z)` and the piecewise-linear a.c. density is integrated in
//! closed form segment by segment, so there is no quadrature error in `z`.
//! Boundary values are recovered by evaluating on a vertical ε-ladder and
//! Richardson-extrapolating to ε → 0.

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, CMatrix, HermitianMatrix, C64};
use crate::measure::{AcPart, MatrixMeasure, ScalarMeasure, ATOM_MERGE_TOL};

/// Minimum `|Im z|` accepted by the direct transforms.
pub const MIN_IM_Z: f64 = 1e-8;
/// Relative slack on the Herglotz positivity invariant.
pub const HERGLOTZ_TOL_REL: f64 = 1e-12;

/// A `d×d` Cauchy-transform value at a point off the real axis.
#[derive(Clone, Debug)]
pub struct HerglotzEval {
    pub z: C64,
    pub value: CMatrix,
}

impl HerglotzEval {
    /// `Im F(z)` as a matrix: `(F − F†)/(2i)`.
    pub fn imag_matrix(&self) -> CMatrix {
        self.value.imag_part_matrix()
    }

    /// For `Im z > 0`: how far `Im F(z)` dips below PSD
    /// (0.0 when the Herglotz property holds exactly).
    pub fn herglotz_defect(&self) -> f64 {
        let im = HermitianMatrix::new(self.imag_matrix()).expect("Im F is Hermitian");
        let lmin = im.eig().values.first().copied().unwrap_or(0.0);
        (-lmin).max(0.0)
    }

    /// Checks `λ_min(Im F) ≥ −1e-12·(1+‖F‖)` for upper half-plane points.
    pub fn check_herglotz(&self) -> Result<()> {
        if self.z.im <= 0.0 {
            return Ok(());
        }
        let defect = self.herglotz_defect();
        let bound = HERGLOTZ_TOL_REL * (1.0 + operator_norm(&self.value));
        if defect > bound {
            return Err(Error::Validation(format!(
                "Herglotz violation at z = {}: λ_min(Im F) = -{defect:.3e}",
                self.z
            )));
        }
        Ok(())
    }
}

/// Closed-form integral of a linear matrix segment against `1/(t−z)`:
/// density `W(t) = W0 + (W1−W0)(t−t0)/h` on `[t0, t1]`.
fn segment_cauchy(t0: f64, t1: f64, w0: &CMatrix, w1: &CMatrix, z: C64) -> CMatrix {
    let h = t1 - t0;
    let log_ratio = ((C64::new(t1, 0.0) - z) / (C64::new(t0, 0.0) - z)).ln();
    let slope = &(w1 - w0).scale_re(1.0 / h);
    let affine = &(w0 + &slope.scale(z - C64::new(t0, 0.0)));
    &affine.scale(log_ratio) + &slope.scale_re(h)
}

fn ac_cauchy(g: &AcPart, z: C64) -> CMatrix {
    let d = g.densities[0].dim();
    let mut acc = CMatrix::zeros(d, d);
    for j in 0..g.nodes() - 1 {
        acc = &acc
            + &segment_cauchy(
                g.node_location(j),
                g.node_location(j + 1),
                g.densities[j].matrix(),
                g.densities[j + 1].matrix(),
                z,
            );
    }
    acc
}

/// `F(z) = Σ_k W_k/(x_k−z) + ∫ density(t)/(t−z) dt`.
///
/// Requires `|Im z| ≥ 1e-8`; for boundary values use [`boundary_density`].
pub fn cauchy_transform(m: &MatrixMeasure, z: C64) -> Result<HerglotzEval> {
    if z.im.abs() < MIN_IM_Z {
        return Err(Error::Precision(format!(
            "|Im z| = {:.3e} below {MIN_IM_Z:.0e}; use boundary_density for boundary values",
            z.im.abs()
        )));
    }
    let one = C64::new(1.0, 0.0);
    let mut acc = CMatrix::zeros(m.dim(), m.dim());
    for a in m.atoms() {
        acc = &acc
            + &a.weight
                .matrix()
                .scale(one / (C64::new(a.location, 0.0) - z));
    }
    if let Some(g) = m.ac() {
        acc = &acc + &ac_cauchy(g, z);
    }
    Ok(HerglotzEval { z, value: acc })
}

/// Poisson extension `M(z) = (1/π) ∫ Im z/|z−s|² dM(s)` for `Im z > 0`.
///
/// Agrees with `(1/π)·Im(cauchy_transform)` but is summed with the real
/// kernel on atoms, so the two paths cross-validate each other.
pub fn poisson_extension(m: &MatrixMeasure, z: C64) -> Result<HermitianMatrix> {
    if z.im <= 0.0 {
        return Err(Error::Domain(format!(
            "Poisson extension needs Im z > 0, got Im z = {}",
            z.im
        )));
    }
    let pi = std::f64::consts::PI;
    let mut acc = CMatrix::zeros(m.dim(), m.dim());
    for a in m.atoms() {
        let kernel = z.im / ((C64::new(a.location, 0.0) - z).norm_sqr() * pi);
        acc = &acc + &a.weight.matrix().scale_re(kernel);
    }
    if let Some(g) = m.ac() {
        acc = &acc + &ac_cauchy(g, z).imag_part_matrix().scale_re(1.0 / pi);
    }
    HermitianMatrix::new(acc.hermitian_part())
}

// -- ε-ladder extrapolation ---------------------------------------------------

/// Diagnostics from a Richardson extrapolation along a decreasing ε-ladder.
#[derive(Clone, Debug)]
pub struct ExtrapolationReport {
    pub ladder: Vec<f64>,
    /// Norms of successive raw-value increments down the ladder.
    pub raw_diffs: Vec<f64>,
    /// Norm of the last diagonal increment in the Neville table.
    pub error_estimate: f64,
}

fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 3 {
        return Err(Error::Validation(
            "ε-ladder needs at least three rungs".into(),
        ));
    }
    if !ladder.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0) {
        return Err(Error::Validation(
            "ε-ladder must be strictly decreasing and positive".into(),
        ));
    }
    Ok(())
}

/// Neville extrapolation of matrix samples `f(ε_i)` to ε = 0, assuming a
/// polynomial error expansion in ε. Errors out when the raw increments grow
/// down the ladder (divergent data).
pub fn richardson_limit(
    ladder: &[f64],
    values: &[CMatrix],
) -> Result<(CMatrix, ExtrapolationReport)> {
    validate_ladder(ladder)?;
    assert_eq!(ladder.len(), values.len());
    let n = ladder.len();
    let raw_diffs: Vec<f64> = values
        .windows(2)
        .map(|w| operator_norm(&(&w[1] - &w[0])))
        .collect();
    let scale = values
        .iter()
        .map(operator_norm)
        .fold(0.0, f64::max)
        .max(1e-300);
    let growing = raw_diffs.windows(2).all(|w| w[1] > w[0] * 1.2)
        && raw_diffs.last().copied().unwrap_or(0.0) > 1e-12 * scale;
    if growing {
        return Err(Error::NonConvergent(format!(
            "raw increments grow down the ladder: {raw_diffs:?}"
        )));
    }
    // Neville table evaluated at ε = 0
    let mut table: Vec<CMatrix> = values.to_vec();
    let mut prev_diag = table[0].clone();
    let mut last_diag_diff = f64::INFINITY;
    for j in 1..n {
        for i in (j..n).rev() {
            let xi = ladder[i];
            let xij = ladder[i - j];
            let num = &table[i].scale_re(0.0 - xij) - &table[i - 1].scale_re(0.0 - xi);
            table[i] = num.scale_re(1.0 / (xi - xij));
        }
        let diag = table[n - 1].clone();
        if j == n - 1 {
            last_diag_diff = operator_norm(&(&diag - &prev_diag));
        }
        prev_diag = diag;
    }
    let report = ExtrapolationReport {
        ladder: ladder.to_vec(),
        raw_diffs,
        error_estimate: last_diag_diff,
    };
    Ok((table[n - 1].clone(), report))
}

/// Boundary density `(1/π)·lim_{ε→0} Im F(x+iε)` by Richardson
/// extrapolation; eigenvalues are clamped to the PSD cone at the end.
pub fn boundary_density(
    m: &MatrixMeasure,
    x: f64,
    ladder: &[f64],
) -> Result<(HermitianMatrix, ExtrapolationReport)> {
    validate_ladder(ladder)?;
    let min_sep = m.ac().map(|g| g.spacing()).unwrap_or(ladder[0]);
    for a in m.atoms() {
        if (a.location - x).abs() < min_sep {
            return Err(Error::Precision(format!(
                "x = {x} is within one grid spacing of the atom at {}",
                a.location
            )));
        }
    }
    let values: Vec<CMatrix> = ladder
        .iter()
        .map(|&eps| poisson_extension(m, C64::new(x, eps)).map(|h| h.into_matrix()))
        .collect::<Result<_>>()?;
    let (limit, report) = richardson_limit(ladder, &values)?;
    Ok((clamp_to_psd(&limit), report))
}

/// Project a numerically-Hermitian matrix onto the PSD cone by clamping
/// negative eigenvalues to zero.
pub fn clamp_to_psd(m: &CMatrix) -> HermitianMatrix {
    let h = HermitianMatrix::new(m.hermitian_part()).expect("hermitian part");
    let e = h.eig();
    let clamped: Vec<f64> = e.values.iter().map(|&l| l.max(0.0)).collect();
    let d = CMatrix::from_real_diag(&clamped);
    let vd = &e.vectors * &d;
    let r = &vd * &e.vectors.adjoint();
    HermitianMatrix::new(r.hermitian_part()).expect("clamped PSD matrix")
}

/// Report for the singular blow-up law at an atom.
#[derive(Clone, Debug)]
pub struct BlowupReport {
    pub atom_mass: f64,
    /// `π ε μ(x+iε) / mass` per rung; tends to 1 as ε → 0.
    pub normalized_ratios: Vec<f64>,
    pub observed: bool,
}

/// Verify the `c/ε` blow-up of the Poisson extension at an atom of a scalar
/// measure: requires `μ(x+iε) ≥ (mass/2π)/ε` on every rung.
pub fn singular_blowup_check(mu: &ScalarMeasure, x: f64, ladder: &[f64]) -> Result<BlowupReport> {
    validate_ladder(ladder)?;
    let mass = mu
        .atoms
        .iter()
        .find(|&&(loc, _)| (loc - x).abs() <= ATOM_MERGE_TOL)
        .map(|&(_, m)| m)
        .ok_or_else(|| Error::Domain(format!("x = {x} is not an atom of the measure")))?;
    let pi = std::f64::consts::PI;
    let mm = mu.to_matrix();
    let mut ratios = Vec::with_capacity(ladder.len());
    let mut observed = true;
    for &eps in ladder {
        let p = poisson_extension(&mm, C64::new(x, eps))?.matrix()[(0, 0)].re;
        ratios.push(p * pi * eps / mass);
        if p < mass / (2.0 * pi) / eps {
            observed = false;
        }
    }
    Ok(BlowupReport {
        atom_mass: mass,
        normalized_ratios: ratios,
        observed,
    })
}

/// Reconstruct the a.c. part of a measure from a Herglotz function handle:
/// nodewise extrapolated `(1/π) Im F(x+iε)` on a uniform grid.
pub fn stieltjes_reconstruct(
    f: &dyn Fn(C64) -> CMatrix,
    d: usize,
    grid: (f64, f64, usize),
    ladder: &[f64],
) -> Result<MatrixMeasure> {
    validate_ladder(ladder)?;
    let (start, end, nodes) = grid;
    if nodes < 2 || end <= start {
        return Err(Error::Validation("reconstruction grid invalid".into()));
    }
    let h = (end - start) / (nodes as f64 - 1.0);
    let mut densities = Vec::with_capacity(nodes);
    let pi = std::f64::consts::PI;
    for j in 0..nodes {
        let x = start + h * j as f64;
        let samples: Vec<CMatrix> = ladder
            .iter()
            .map(|&eps| {
                let z = C64::new(x, eps);
                let val = f(z);
                let ev = HerglotzEval {
                    z,
                    value: val.clone(),
                };
                ev.check_herglotz().map_err(|_| {
                    Error::Validation(format!(
                        "Herglotz violation in reconstruction sample at z = {x}+{eps}i"
                    ))
                })?;
                Ok(val.imag_part_matrix().scale_re(1.0 / pi))
            })
            .collect::<Result<_>>()?;
        let (limit, _) = richardson_limit(ladder, &samples)?;
        densities.push(clamp_to_psd(&limit));
    }
    MatrixMeasure::new(
        d,
        vec![],
        Some(AcPart {
            start,
            end,
            densities,
        }),
    )
}
