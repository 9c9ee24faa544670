//! Matrix- and scalar-valued measures on the line.
//!
//! A [`MatrixMeasure`] is a finite list of matrix-weighted atoms plus an
//! optional absolutely continuous part given by a piecewise-linear
//! positive-semidefinite density on a uniform grid. Atoms model the singular
//! part, the grid models the a.c. part; there is no singular-continuous
//! component in this model.

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, operator_norm, CMatrix, HermitianMatrix, C64, RANK_TOL_REL};
use crate::perturbation::OperatorModel;

/// Atoms closer than this are treated as one atom with summed weight.
pub const ATOM_MERGE_TOL: f64 = 1e-12;
/// Location agreement tolerance when comparing supports of two measures.
pub const SUPPORT_MATCH_TOL: f64 = 1e-10;

/// A point mass with a PSD matrix weight.
#[derive(Clone, Debug)]
pub struct Atom {
    pub location: f64,
    pub weight: HermitianMatrix,
}

/// Piecewise-linear matrix density on a uniform grid over `[start, end]`.
#[derive(Clone, Debug)]
pub struct AcPart {
    pub start: f64,
    pub end: f64,
    pub densities: Vec<HermitianMatrix>,
}

impl AcPart {
    pub fn nodes(&self) -> usize {
        self.densities.len()
    }

    pub fn spacing(&self) -> f64 {
        (self.end - self.start) / (self.nodes() as f64 - 1.0)
    }

    pub fn node_location(&self, j: usize) -> f64 {
        self.start + self.spacing() * j as f64
    }

    /// Density at an arbitrary point by linear interpolation (zero outside).
    pub fn density_at(&self, x: f64) -> CMatrix {
        let d = self.densities[0].dim();
        if x < self.start || x > self.end {
            return CMatrix::zeros(d, d);
        }
        let h = self.spacing();
        let pos = (x - self.start) / h;
        let j = (pos.floor() as usize).min(self.nodes() - 2);
        let frac = pos - j as f64;
        let w0 = self.densities[j].matrix().scale_re(1.0 - frac);
        let w1 = self.densities[j + 1].matrix().scale_re(frac);
        &w0 + &w1
    }
}

/// Positive-semidefinite-matrix-valued measure: atoms plus optional a.c. grid.
#[derive(Clone, Debug)]
pub struct MatrixMeasure {
    d: usize,
    atoms: Vec<Atom>,
    ac: Option<AcPart>,
}

impl MatrixMeasure {
    /// Build a measure: atoms are sorted, merged below [`ATOM_MERGE_TOL`],
    /// zero weights dropped, and every weight/density is checked PSD (within
    /// the eigenvalue clamping tolerance).
    pub fn new(d: usize, atoms: Vec<Atom>, ac: Option<AcPart>) -> Result<Self> {
        for (k, a) in atoms.iter().enumerate() {
            if a.weight.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "atom {k} weight is {}x{}, measure dimension is {d}",
                    a.weight.dim(),
                    a.weight.dim()
                )));
            }
            check_psd(&a.weight, &format!("atom {k} at x = {}", a.location))?;
            if !a.location.is_finite() {
                return Err(Error::Validation(format!("atom {k} location not finite")));
            }
        }
        if let Some(g) = &ac {
            if g.nodes() < 2 || g.end <= g.start {
                return Err(Error::Validation(
                    "a.c. grid needs at least two nodes and end > start".into(),
                ));
            }
            for (j, w) in g.densities.iter().enumerate() {
                if w.dim() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "a.c. density {j} dimension {} ≠ {d}",
                        w.dim()
                    )));
                }
                check_psd(w, &format!("a.c. density node {j}"))?;
            }
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.location.partial_cmp(&b.location).unwrap());
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if (a.location - last.location).abs() <= ATOM_MERGE_TOL => {
                    last.weight = last.weight.add(&a.weight);
                }
                _ => merged.push(a),
            }
        }
        merged.retain(|a| operator_norm(a.weight.matrix()) > 0.0);
        Ok(Self {
            d,
            atoms: merged,
            ac,
        })
    }

    pub fn atomic(d: usize, atoms: Vec<Atom>) -> Result<Self> {
        Self::new(d, atoms, None)
    }

    /// Convenience: a single scalar-weighted atom family in dimension 1.
    pub fn scalar_atoms(pairs: &[(f64, f64)]) -> Result<Self> {
        let atoms = pairs
            .iter()
            .map(|&(x, m)| Atom {
                location: x,
                weight: HermitianMatrix::from_real_diag(&[m]),
            })
            .collect();
        Self::atomic(1, atoms)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn ac(&self) -> Option<&AcPart> {
        self.ac.as_ref()
    }

    pub fn is_purely_atomic(&self) -> bool {
        self.ac.is_none()
    }

    /// Drop atoms whose weight norm is below `rel_tol` times the largest
    /// weight norm. Used when conjugation by a singular matrix leaves
    /// numerically-zero residue at some atoms.
    pub fn pruned(&self, rel_tol: f64) -> Self {
        let scale = self
            .atoms
            .iter()
            .map(|a| operator_norm(a.weight.matrix()))
            .fold(0.0, f64::max);
        let atoms = self
            .atoms
            .iter()
            .filter(|a| operator_norm(a.weight.matrix()) > rel_tol * scale)
            .cloned()
            .collect();
        Self {
            d: self.d,
            atoms,
            ac: self.ac.clone(),
        }
    }

    /// Conjugated measure `Φ† M Φ` with a constant matrix `Φ` (atomwise and
    /// nodewise).
    pub fn conjugated(&self, phi: &CMatrix) -> Result<Self> {
        let conj = |w: &HermitianMatrix| -> HermitianMatrix {
            let m = &(&phi.adjoint() * w.matrix()) * phi;
            HermitianMatrix::new(m.hermitian_part()).expect("conjugation preserves Hermiticity")
        };
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                location: a.location,
                weight: conj(&a.weight),
            })
            .collect();
        let ac = self.ac.as_ref().map(|g| AcPart {
            start: g.start,
            end: g.end,
            densities: g.densities.iter().map(conj).collect(),
        });
        Self::new(phi.cols(), atoms, ac)
    }

    /// Total mass `∫ dM`.
    pub fn total_mass(&self) -> CMatrix {
        self.integrate(|_| C64::new(1.0, 0.0))
            .expect("constant integrand is finite")
    }

    /// `Σ_k f(x_k) W_k` plus trapezoid quadrature of `f` against the a.c.
    /// density. Exact on atoms, O(h²) on the grid for smooth `f`.
    pub fn integrate(&self, f: impl Fn(f64) -> C64) -> Result<CMatrix> {
        let mut acc = CMatrix::zeros(self.d, self.d);
        for a in &self.atoms {
            let v = f(a.location);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Evaluation {
                    location: a.location,
                    context: "integrand not finite at atom".into(),
                });
            }
            acc = &acc + &a.weight.matrix().scale(v);
        }
        if let Some(g) = &self.ac {
            let h = g.spacing();
            for j in 0..g.nodes() {
                let x = g.node_location(j);
                let v = f(x);
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::Evaluation {
                        location: x,
                        context: "integrand not finite at grid node".into(),
                    });
                }
                let w = if j == 0 || j == g.nodes() - 1 {
                    0.5 * h
                } else {
                    h
                };
                acc = &acc + &g.densities[j].matrix().scale(v * w);
            }
        }
        Ok(acc)
    }

    /// `‖∫ dM(t)/(|t|+1)‖` — finite by construction; reported for
    /// diagnostics of form boundedness.
    pub fn form_boundedness(&self) -> f64 {
        let m = self
            .integrate(|t| C64::new(1.0 / (t.abs() + 1.0), 0.0))
            .expect("kernel is finite");
        operator_norm(&m.hermitian_part())
    }
}

/// Scalar (1×1) measure: nonnegative atoms plus optional piecewise-linear
/// density.
#[derive(Clone, Debug)]
pub struct ScalarMeasure {
    pub atoms: Vec<(f64, f64)>,
    pub ac: Option<ScalarAc>,
}

/// Piecewise-linear nonnegative scalar density on a uniform grid.
#[derive(Clone, Debug)]
pub struct ScalarAc {
    pub start: f64,
    pub end: f64,
    pub values: Vec<f64>,
}

impl ScalarAc {
    pub fn spacing(&self) -> f64 {
        (self.end - self.start) / (self.values.len() as f64 - 1.0)
    }

    /// Exact integral of the piecewise-linear density over `[a, b]`.
    pub fn mass_on(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(self.start), b.min(self.end));
        if b <= a {
            return 0.0;
        }
        let h = self.spacing();
        let val = |x: f64| -> f64 {
            let pos = (x - self.start) / h;
            let j = (pos.floor() as usize).min(self.values.len() - 2);
            let frac = pos - j as f64;
            self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
        };
        // integrate segment-by-segment; the integrand is linear on each
        let mut total = 0.0;
        let mut x = a;
        while x < b {
            let j = (((x - self.start) / h).floor() as usize).min(self.values.len() - 2);
            let seg_end = (self.start + h * (j + 1) as f64).min(b);
            total += 0.5 * (val(x) + val(seg_end)) * (seg_end - x);
            x = seg_end;
        }
        total
    }
}

impl ScalarMeasure {
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.iter().any(|&(_, m)| m < 0.0) {
            return Err(Error::Validation("negative atom mass".into()));
        }
        let mut atoms = atoms.to_vec();
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (x, m) in atoms {
            match merged.last_mut() {
                Some(last) if (x - last.0).abs() <= ATOM_MERGE_TOL => last.1 += m,
                _ => merged.push((x, m)),
            }
        }
        merged.retain(|&(_, m)| m > 0.0);
        Ok(Self {
            atoms: merged,
            ac: None,
        })
    }

    pub fn with_ac(mut self, ac: ScalarAc) -> Result<Self> {
        if ac.values.len() < 2 || ac.end <= ac.start {
            return Err(Error::Validation("scalar a.c. grid invalid".into()));
        }
        if ac.values.iter().any(|&v| v < 0.0) {
            return Err(Error::Validation("negative scalar density".into()));
        }
        self.ac = Some(ac);
        Ok(self)
    }

    /// Mass of the half-open interval `[a, b)` (atoms) plus the density
    /// integral over `[a, b]`.
    pub fn mass_on(&self, a: f64, b: f64) -> f64 {
        let atom_mass: f64 = self
            .atoms
            .iter()
            .filter(|&&(x, _)| x >= a && x < b)
            .map(|&(_, m)| m)
            .sum();
        atom_mass + self.ac.as_ref().map_or(0.0, |g| g.mass_on(a, b))
    }

    pub fn total_mass(&self) -> f64 {
        let atom_mass: f64 = self.atoms.iter().map(|&(_, m)| m).sum();
        atom_mass + self.ac.as_ref().map_or(0.0, |g| g.mass_on(g.start, g.end))
    }

    /// View as a 1×1 matrix measure (shares the same transform code paths).
    pub fn to_matrix(&self) -> MatrixMeasure {
        let atoms = self
            .atoms
            .iter()
            .map(|&(x, m)| Atom {
                location: x,
                weight: HermitianMatrix::from_real_diag(&[m]),
            })
            .collect();
        let ac = self.ac.as_ref().map(|g| AcPart {
            start: g.start,
            end: g.end,
            densities: g
                .values
                .iter()
                .map(|&v| HermitianMatrix::from_real_diag(&[v]))
                .collect(),
        });
        MatrixMeasure::new(1, atoms, ac).expect("scalar measure is valid")
    }
}

/// Matrix-valued spectral measure of an operator model: one atom per
/// distinct eigenvalue `λ` of `A` with weight `B† P_λ B` (cached on the
/// model at construction).
pub fn spectral_measure(model: &OperatorModel) -> MatrixMeasure {
    model.spectral_measure().clone()
}

pub(crate) fn spectral_measure_from_parts(
    eig: &crate::linalg::EigenSystem,
    b: &CMatrix,
) -> MatrixMeasure {
    let clusters = eigenvalue_clusters(&eig.values, ATOM_MERGE_TOL);
    let d = b.cols();
    let mut atoms = Vec::with_capacity(clusters.len());
    for (loc, idx) in clusters {
        // W = Σ_i (B† v_i)(B† v_i)† over the eigenvector cluster: PSD by
        // construction.
        let mut w = CMatrix::zeros(d, d);
        for &k in &idx {
            let col = CMatrix::col_vec(&eig.vectors.column(k));
            let bv = &b.adjoint() * &col;
            w = &w + &(&bv * &bv.adjoint());
        }
        atoms.push(Atom {
            location: loc,
            weight: HermitianMatrix::new(w.hermitian_part()).expect("Gram weight is Hermitian"),
        });
    }
    MatrixMeasure::atomic(d, atoms).expect("spectral weights are PSD")
}

/// Cluster ascending values whose consecutive gaps are ≤ `tol`; returns
/// (cluster mean, member indices).
pub fn eigenvalue_clusters(values: &[f64], tol: f64) -> Vec<(f64, Vec<usize>)> {
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some((_, idx)) if (v - values[*idx.last().unwrap()]).abs() <= tol => idx.push(i),
            _ => out.push((v, vec![i])),
        }
    }
    for (loc, idx) in out.iter_mut() {
        *loc = idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64;
    }
    out
}

/// `μ = tr M`, atomwise and nodewise. Dominates every entry of `M`.
pub fn trace_measure(m: &MatrixMeasure) -> ScalarMeasure {
    let atoms: Vec<(f64, f64)> = m
        .atoms()
        .iter()
        .map(|a| (a.location, a.weight.trace()))
        .collect();
    let ac = m.ac().map(|g| ScalarAc {
        start: g.start,
        end: g.end,
        values: g.densities.iter().map(|w| w.trace()).collect(),
    });
    ScalarMeasure { atoms, ac }
}

/// Unitary-equivalence test for the multiplication operators in `L²(M)` and
/// `L²(N)`: supports must coincide and the weight ranks must agree at every
/// common point. The measures may have different matrix dimensions.
pub fn unitarily_equivalent(m: &MatrixMeasure, n: &MatrixMeasure) -> Result<bool> {
    match (m.ac(), n.ac()) {
        (None, None) => {
            let (ma, na) = (m.atoms(), n.atoms());
            if ma.len() != na.len() {
                return Ok(false);
            }
            for (a, b) in ma.iter().zip(na) {
                if (a.location - b.location).abs() > SUPPORT_MATCH_TOL {
                    return Ok(false);
                }
                if numerical_rank(&a.weight, RANK_TOL_REL)
                    != numerical_rank(&b.weight, RANK_TOL_REL)
                {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        (Some(ga), Some(gb)) if m.atoms().is_empty() && n.atoms().is_empty() => {
            let same_grid = (ga.start - gb.start).abs() <= SUPPORT_MATCH_TOL
                && (ga.end - gb.end).abs() <= SUPPORT_MATCH_TOL
                && ga.nodes() == gb.nodes();
            if !same_grid {
                return Err(Error::Unsupported(
                    "a.c. comparison requires matching grid discretizations".into(),
                ));
            }
            for (wa, wb) in ga.densities.iter().zip(&gb.densities) {
                if numerical_rank(wa, RANK_TOL_REL) != numerical_rank(wb, RANK_TOL_REL) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        _ => Err(Error::Unsupported(
            "mixed atomic/a.c. unitary-equivalence comparison is unsupported".into(),
        )),
    }
}

fn check_psd(w: &HermitianMatrix, what: &str) -> Result<()> {
    let e = w.eig();
    let lmax = e.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let lmin = e.values.iter().copied().fold(f64::INFINITY, f64::min);
    if lmin < -crate::linalg::PSD_CLAMP_REL * lmax {
        return Err(Error::Validation(format!(
            "{what}: not PSD, eigenvalue {lmin:.6e}"
        )));
    }
    Ok(())
}

// -- dyadic density utilities -----------------------------------------------

/// `μ(I)/|I|` for the level-`n` dyadic interval `I = [k 2^{-n}, (k+1) 2^{-n})`
/// containing `x`.
pub fn dyadic_expectation(mu: &ScalarMeasure, n: i32, x: f64) -> f64 {
    let len = 2f64.powi(-n);
    let k = (x / len).floor();
    mu.mass_on(k * len, (k + 1.0) * len) / len
}

/// Finite-level surrogate of the dyadic lower density:
/// `min over 0 ≤ n ≤ n_max` of the conditional expectations at `x`.
pub fn dyadic_lower_density(mu: &ScalarMeasure, n_max: i32, x: f64) -> f64 {
    (0..=n_max)
        .map(|n| dyadic_expectation(mu, n, x))
        .fold(f64::INFINITY, f64::min)
}

/// Outcome of the dyadic density bound check.
#[derive(Clone, Debug)]
pub enum DyadicDensityOutcome {
    /// Hypothesis held at every sampled point and `μ(E) ≤ α|E|`.
    Holds { mu_e: f64, bound: f64 },
    /// Hypothesis held but the measure bound failed.
    Violated { mu_e: f64, bound: f64 },
    /// The sampled lower density reached `α` somewhere; check skipped.
    HypothesisFailed { x: f64, density: f64 },
}

impl DyadicDensityOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, DyadicDensityOutcome::Holds { .. })
    }
}

/// Check `μ(E) ≤ α|E|` for a finite union of intervals `E`, under the sampled
/// hypothesis that the dyadic lower density stays below `α` on `E`. Sampling
/// uses midpoints of level-`n_max` dyadic cells (capped per interval).
pub fn dyadic_density_bound_check(
    mu: &ScalarMeasure,
    e: &[(f64, f64)],
    alpha: f64,
    n_max: i32,
) -> DyadicDensityOutcome {
    const MAX_SAMPLES_PER_INTERVAL: usize = 128;
    for &(a, b) in e {
        let cell = 2f64.powi(-n_max);
        let n_cells = ((b - a) / cell).ceil().max(1.0) as usize;
        let step = n_cells.div_ceil(MAX_SAMPLES_PER_INTERVAL).max(1);
        let mut k = (a / cell).floor();
        while k * cell < b {
            let x = (k + 0.5) * cell;
            if x >= a && x < b {
                let dens = dyadic_lower_density(mu, n_max, x);
                if dens >= alpha {
                    return DyadicDensityOutcome::HypothesisFailed { x, density: dens };
                }
            }
            k += step as f64;
        }
    }
    let mut mu_e = 0.0;
    let mut length = 0.0;
    for &(a, b) in e {
        mu_e += mu.mass_on(a, b);
        length += b - a;
    }
    let bound = alpha * length;
    if mu_e <= bound + 1e-12 * (1.0 + bound) {
        DyadicDensityOutcome::Holds { mu_e, bound }
    } else {
        DyadicDensityOutcome::Violated { mu_e, bound }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn e1e1() -> HermitianMatrix {
        HermitianMatrix::from_real_diag(&[1.0, 0.0])
    }

    fn e2e2() -> HermitianMatrix {
        HermitianMatrix::from_real_diag(&[0.0, 1.0])
    }

    #[test]
    fn spectral_measure_single_point() {
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0]),
            CMatrix::identity(1),
        )
        .unwrap();
        let m = spectral_measure(&model);
        assert_eq!(m.atoms().len(), 1);
        assert_eq!(m.atoms()[0].location, 0.0);
        assert!((m.atoms()[0].weight.matrix()[(0, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_measure_identity_window() {
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0, 1.0]),
            CMatrix::identity(2),
        )
        .unwrap();
        let m = spectral_measure(&model);
        assert_eq!(m.atoms().len(), 2);
        assert!(operator_norm(&(m.atoms()[0].weight.matrix() - e1e1().matrix())) < 1e-12);
        assert!(operator_norm(&(m.atoms()[1].weight.matrix() - e2e2().matrix())) < 1e-12);
    }

    #[test]
    fn spectral_measure_rank_one_window() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = CMatrix::from_rows(&[vec![c(s, 0.0)], vec![c(s, 0.0)]]);
        let model = OperatorModel::new(HermitianMatrix::from_real_diag(&[0.0, 1.0]), b).unwrap();
        let m = spectral_measure(&model);
        assert_eq!(m.atoms().len(), 2);
        for a in m.atoms() {
            assert!((a.weight.matrix()[(0, 0)].re - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_measure_examples() {
        let m = MatrixMeasure::atomic(
            2,
            vec![Atom {
                location: 0.0,
                weight: HermitianMatrix::identity(2),
            }],
        )
        .unwrap();
        let mu = trace_measure(&m);
        assert_eq!(mu.atoms, vec![(0.0, 2.0)]);

        let diag = HermitianMatrix::from_real_diag(&[0.5, 0.25]);
        let m = MatrixMeasure::new(
            2,
            vec![],
            Some(AcPart {
                start: -1.0,
                end: 1.0,
                densities: vec![diag.clone(), diag.clone(), diag],
            }),
        )
        .unwrap();
        let mu = trace_measure(&m);
        assert_eq!(mu.ac.as_ref().unwrap().values, vec![0.75, 0.75, 0.75]);
    }

    #[test]
    fn trace_dominates_entries() {
        // |W_jk| ≤ (W_jj + W_kk)/2 ≤ tr W for PSD weights
        for seed in 0..30u64 {
            let mut state = seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(11);
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state as f64 / u64::MAX as f64) * 2.0 - 1.0
            };
            let g = CMatrix::from_fn(3, 3, |_, _| c(next(), next()));
            let w = HermitianMatrix::new((&g * &g.adjoint()).hermitian_part()).unwrap();
            let tr = w.trace();
            for j in 0..3 {
                for k in 0..3 {
                    let entry = w.matrix()[(j, k)].norm();
                    let half_sum = 0.5 * (w.matrix()[(j, j)].re + w.matrix()[(k, k)].re);
                    assert!(entry <= half_sum + 1e-12);
                    assert!(half_sum <= tr + 1e-12);
                }
            }
        }
    }

    #[test]
    fn integrate_examples() {
        let m = MatrixMeasure::atomic(
            2,
            vec![Atom {
                location: 0.0,
                weight: HermitianMatrix::identity(2),
            }],
        )
        .unwrap();
        let total = m.integrate(|_| c(1.0, 0.0)).unwrap();
        assert!(operator_norm(&(&total - &CMatrix::identity(2))) < 1e-14);

        let m = MatrixMeasure::scalar_atoms(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let first_moment = m.integrate(|x| c(x, 0.0)).unwrap();
        assert!((first_moment[(0, 0)].re - 0.5).abs() < 1e-14);

        // Poisson kernel at i on a unit mass at 0: p_i(0) = 1/pi
        let m = MatrixMeasure::scalar_atoms(&[(0.0, 1.0)]).unwrap();
        let pi = std::f64::consts::PI;
        let v = m.integrate(|x| c(1.0 / (pi * (x * x + 1.0)), 0.0)).unwrap();
        assert!((v[(0, 0)].re - 1.0 / pi).abs() < 1e-15);
    }

    #[test]
    fn integrate_rejects_nonfinite() {
        let m = MatrixMeasure::scalar_atoms(&[(0.0, 1.0)]).unwrap();
        let err = m.integrate(|x| c(1.0 / x, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Evaluation { location, .. } if location == 0.0));
    }

    #[test]
    fn integrate_is_linear() {
        let m = MatrixMeasure::scalar_atoms(&[(0.0, 0.3), (2.0, 0.7)]).unwrap();
        let f = |x: f64| c(x * x, 0.5 * x);
        let g = |x: f64| c(1.0 - x, 0.0);
        let lhs = m.integrate(|x| f(x) + g(x)).unwrap();
        let rhs = &m.integrate(f).unwrap() + &m.integrate(g).unwrap();
        assert!(operator_norm(&(&lhs - &rhs)) < 1e-14);
    }

    #[test]
    fn unitary_equivalence_examples() {
        // rank-1 atom in d=2 vs rank-1 atom in d=1: equivalent
        let m = MatrixMeasure::atomic(
            2,
            vec![Atom {
                location: 0.0,
                weight: e1e1(),
            }],
        )
        .unwrap();
        let n = MatrixMeasure::scalar_atoms(&[(0.0, 5.0)]).unwrap();
        assert!(unitarily_equivalent(&m, &n).unwrap());

        // rank 2 vs rank 1 at the same point: not equivalent
        let m2 = MatrixMeasure::atomic(
            2,
            vec![Atom {
                location: 0.0,
                weight: HermitianMatrix::identity(2),
            }],
        )
        .unwrap();
        assert!(!unitarily_equivalent(&m2, &m).unwrap());

        // reflexivity
        assert!(unitarily_equivalent(&m, &m).unwrap());
    }

    #[test]
    fn unitary_equivalence_is_equivalence_relation() {
        // three fixed-support atomic measures with matching pointwise ranks
        let half = c(0.5, 0.0);
        let vvt = HermitianMatrix::new(CMatrix::from_rows(&[vec![half, half], vec![half, half]]))
            .unwrap();
        let mk = |w: HermitianMatrix| {
            MatrixMeasure::atomic(
                2,
                vec![
                    Atom {
                        location: 0.0,
                        weight: w,
                    },
                    Atom {
                        location: 1.0,
                        weight: HermitianMatrix::identity(2),
                    },
                ],
            )
            .unwrap()
        };
        let a = mk(e1e1());
        let b = mk(e2e2());
        let c3 = mk(vvt);
        assert!(unitarily_equivalent(&a, &a).unwrap());
        assert_eq!(
            unitarily_equivalent(&a, &b).unwrap(),
            unitarily_equivalent(&b, &a).unwrap()
        );
        assert!(
            unitarily_equivalent(&a, &b).unwrap()
                && unitarily_equivalent(&b, &c3).unwrap()
                && unitarily_equivalent(&a, &c3).unwrap()
        );
    }

    #[test]
    fn unitary_equivalence_rejects_mixed() {
        let atomic = MatrixMeasure::scalar_atoms(&[(0.0, 1.0)]).unwrap();
        let ac = MatrixMeasure::new(
            1,
            vec![],
            Some(AcPart {
                start: 0.0,
                end: 1.0,
                densities: vec![
                    HermitianMatrix::from_real_diag(&[1.0]),
                    HermitianMatrix::from_real_diag(&[1.0]),
                ],
            }),
        )
        .unwrap();
        assert!(unitarily_equivalent(&atomic, &ac).is_err());
    }

    #[test]
    fn form_boundedness_examples() {
        let m = MatrixMeasure::atomic(
            2,
            vec![Atom {
                location: 0.0,
                weight: HermitianMatrix::identity(2),
            }],
        )
        .unwrap();
        assert!((m.form_boundedness() - 1.0).abs() < 1e-14);

        let m = MatrixMeasure::scalar_atoms(&[(3.0, 2.0)]).unwrap();
        assert!((m.form_boundedness() - 0.5).abs() < 1e-14);

        let m = MatrixMeasure::scalar_atoms(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        assert!((m.form_boundedness() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn atom_merge_and_sort() {
        let m = MatrixMeasure::scalar_atoms(&[(1.0, 0.5), (0.0, 1.0), (1.0 + 1e-13, 0.5)]).unwrap();
        assert_eq!(m.atoms().len(), 2);
        assert_eq!(m.atoms()[0].location, 0.0);
        assert!((m.atoms()[1].weight.matrix()[(0, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dyadic_expectation_examples() {
        let delta = ScalarMeasure::from_atoms(&[(0.25, 1.0)]).unwrap();
        assert_eq!(dyadic_expectation(&delta, 1, 0.3), 2.0);
        assert_eq!(dyadic_expectation(&delta, 1, 0.7), 0.0);

        let unif = ScalarMeasure::from_atoms(&[])
            .unwrap()
            .with_ac(ScalarAc {
                start: 0.0,
                end: 1.0,
                values: vec![1.0; 11],
            })
            .unwrap();
        assert!((dyadic_expectation(&unif, 3, 0.1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dyadic_level_sum_recovers_mass() {
        // Σ_{I in D_n within [0,1]} E_n |I| = μ([0,1]) for supported-in-[0,1] μ
        let mu = ScalarMeasure::from_atoms(&[(0.3, 0.4), (0.8, 0.6)]).unwrap();
        for n in 0..6 {
            let len = 2f64.powi(-n);
            let cells = 2usize.pow(n as u32);
            let total: f64 = (0..cells)
                .map(|k| dyadic_expectation(&mu, n, (k as f64 + 0.5) * len) * len)
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dyadic_density_bound_examples() {
        let lebesgue = ScalarMeasure::from_atoms(&[])
            .unwrap()
            .with_ac(ScalarAc {
                start: 0.0,
                end: 1.0,
                values: vec![1.0; 9],
            })
            .unwrap();
        assert!(dyadic_density_bound_check(&lebesgue, &[(0.0, 1.0)], 2.0, 8).holds());

        let three = ScalarMeasure::from_atoms(&[])
            .unwrap()
            .with_ac(ScalarAc {
                start: 0.0,
                end: 1.0,
                values: vec![3.0; 9],
            })
            .unwrap();
        assert!(matches!(
            dyadic_density_bound_check(&three, &[(0.0, 1.0)], 2.0, 8),
            DyadicDensityOutcome::HypothesisFailed { .. }
        ));

        let mixed = ScalarMeasure::from_atoms(&[(0.5, 1.0)])
            .unwrap()
            .with_ac(ScalarAc {
                start: 2.0,
                end: 3.0,
                values: vec![1.0; 9],
            })
            .unwrap();
        assert!(dyadic_density_bound_check(&mixed, &[(2.0, 3.0)], 2.0, 8).holds());
    }
}
