//! Vector mutual singularity and the joint Poisson matrix A₂ condition.
//!
//! Two atomic matrix measures are vector mutually singular when a projection
//! field `Π` kills one as `Π M Π = 0` and the other as `(I−Π) N (I−Π) = 0`;
//! equivalently the weight ranges are orthogonal at every common atom. For a
//! perturbation pair the singular parts satisfy `M_s ⊥ Γ M^Γ_s Γ`, and the
//! quantitative engine behind that is the uniform A₂ bound
//! `‖M(z)^{1/2} (Γ M^Γ(z) Γ)^{1/2}‖ ≤ 8/π` on the upper half-plane.

use crate::error::{Error, Result};
use crate::linalg::{
    operator_norm, psd_sqrt, range_projection, subspace_overlap, CMatrix, HermitianMatrix, C64,
    RANK_TOL_REL,
};
use crate::measure::{trace_measure, MatrixMeasure, ScalarMeasure, SUPPORT_MATCH_TOL};
use crate::perturbation::{perturbed_measure_direct, OperatorModel, PerturbationFamily};

/// Subspace-overlap tolerance separating exact-zero theory values from
/// eigensolver noise.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;
/// The uniform joint Poisson matrix A₂ bound for perturbation pairs.
pub const A2_BOUND: f64 = 8.0 / std::f64::consts::PI;
/// Witness invariant tolerance.
pub const WITNESS_TOL: f64 = 1e-10;

/// Projection field certifying vector mutual singularity on the joint
/// atomic support.
#[derive(Clone, Debug)]
pub struct SingularityWitness {
    pub points: Vec<f64>,
    pub projections: Vec<HermitianMatrix>,
}

impl SingularityWitness {
    /// Check the witness invariants against the two measures:
    /// projections idempotent Hermitian, `‖Π M({x}) Π‖ ≤ 1e-10` and
    /// `‖(I−Π) N({x}) (I−Π)‖ ≤ 1e-10` at every listed point.
    pub fn verify(&self, m: &MatrixMeasure, n: &MatrixMeasure) -> Result<()> {
        let d = m.dim();
        let id = CMatrix::identity(d);
        for (x, p) in self.points.iter().zip(&self.projections) {
            let sq = p.matrix() * p.matrix();
            if operator_norm(&(&sq - p.matrix())) > WITNESS_TOL {
                return Err(Error::Validation(format!(
                    "witness projection at x = {x} is not idempotent"
                )));
            }
            let weight_at = |meas: &MatrixMeasure| -> CMatrix {
                meas.atoms()
                    .iter()
                    .find(|a| (a.location - x).abs() <= SUPPORT_MATCH_TOL)
                    .map(|a| a.weight.matrix().clone())
                    .unwrap_or_else(|| CMatrix::zeros(d, d))
            };
            let wm = weight_at(m);
            let pmp = &(p.matrix() * &wm) * p.matrix();
            if operator_norm(&pmp) > WITNESS_TOL {
                return Err(Error::Validation(format!(
                    "witness fails Π M Π = 0 at x = {x}: norm {:.3e}",
                    operator_norm(&pmp)
                )));
            }
            let comp = &id - p.matrix();
            let wn = weight_at(n);
            let qnq = &(&comp * &wn) * &comp;
            if operator_norm(&qnq) > WITNESS_TOL {
                return Err(Error::Validation(format!(
                    "witness fails (I−Π) N (I−Π) = 0 at x = {x}: norm {:.3e}",
                    operator_norm(&qnq)
                )));
            }
        }
        Ok(())
    }
}

/// A common atom whose weight ranges are not orthogonal.
#[derive(Clone, Debug)]
pub struct SingularityViolation {
    pub location: f64,
    pub overlap: f64,
}

/// Outcome of the vector-mutual-singularity test.
#[derive(Clone, Debug)]
pub enum MutualSingularityOutcome {
    Singular(SingularityWitness),
    NotSingular(Vec<SingularityViolation>),
}

impl MutualSingularityOutcome {
    pub fn is_singular(&self) -> bool {
        matches!(self, MutualSingularityOutcome::Singular(_))
    }
}

/// Decide `M ⊥ N` for purely atomic matrix measures and produce either a
/// witness `Π` or the list of common atoms violating range orthogonality.
pub fn vector_mutual_singularity(
    m: &MatrixMeasure,
    n: &MatrixMeasure,
) -> Result<MutualSingularityOutcome> {
    if !m.is_purely_atomic() || !n.is_purely_atomic() {
        return Err(Error::Unsupported(
            "vector mutual singularity is decided on purely atomic measures".into(),
        ));
    }
    if m.dim() != n.dim() {
        return Err(Error::DimensionMismatch(
            "measures must share the matrix dimension".into(),
        ));
    }
    let d = m.dim();
    let mut points = Vec::new();
    let mut projections = Vec::new();
    let mut violations = Vec::new();
    let (ma, na) = (m.atoms(), n.atoms());
    let (mut i, mut j) = (0usize, 0usize);
    while i < ma.len() || j < na.len() {
        let xm = ma.get(i).map(|a| a.location).unwrap_or(f64::INFINITY);
        let xn = na.get(j).map(|a| a.location).unwrap_or(f64::INFINITY);
        if (xm - xn).abs() <= SUPPORT_MATCH_TOL {
            // common atom: ranges must be orthogonal; Π projects onto Ran V
            let pw = range_projection(&ma[i].weight, RANK_TOL_REL);
            let pv = range_projection(&na[j].weight, RANK_TOL_REL);
            let overlap = subspace_overlap(&pw, &pv)?;
            if overlap <= ORTHOGONALITY_TOL {
                points.push(0.5 * (xm + xn));
                projections.push(pv);
            } else {
                violations.push(SingularityViolation {
                    location: 0.5 * (xm + xn),
                    overlap,
                });
            }
            i += 1;
            j += 1;
        } else if xm < xn {
            points.push(xm);
            projections.push(HermitianMatrix::zeros(d));
            i += 1;
        } else {
            points.push(xn);
            projections.push(HermitianMatrix::identity(d));
            j += 1;
        }
    }
    if violations.is_empty() {
        Ok(MutualSingularityOutcome::Singular(SingularityWitness {
            points,
            projections,
        }))
    } else {
        Ok(MutualSingularityOutcome::NotSingular(violations))
    }
}

/// Report from the matrix Aronszajn–Donoghue check.
#[derive(Clone, Debug)]
pub struct AdCheckReport {
    pub outcome: MutualSingularityOutcome,
    /// Range overlaps at every common atom of `M` and `G M^G G`.
    pub common_atom_overlaps: Vec<(f64, f64)>,
}

impl AdCheckReport {
    pub fn holds(&self) -> bool {
        self.outcome.is_singular()
    }
}

/// Check `M ⊥ G M^G G` for the (purely atomic) spectral measures of the
/// model and its perturbation by Hermitian `G`. Degenerate `G` is allowed:
/// conjugation then kills the relevant weights and the check degrades
/// gracefully.
pub fn ad_check(model: &OperatorModel, g: &HermitianMatrix) -> Result<AdCheckReport> {
    let m = model.spectral_measure().clone();
    let mg = perturbed_measure_direct(model, g)?;
    let n = mg.conjugated(g.matrix())?.pruned(1e-13);
    let outcome = vector_mutual_singularity(&m, &n)?;
    let mut overlaps = Vec::new();
    for a in m.atoms() {
        if let Some(b) = n
            .atoms()
            .iter()
            .find(|b| (b.location - a.location).abs() <= SUPPORT_MATCH_TOL)
        {
            let pw = range_projection(&a.weight, RANK_TOL_REL);
            let pv = range_projection(&b.weight, RANK_TOL_REL);
            overlaps.push((a.location, subspace_overlap(&pw, &pv)?));
        }
    }
    Ok(AdCheckReport {
        outcome,
        common_atom_overlaps: overlaps,
    })
}

// -- joint Poisson matrix A₂ ---------------------------------------------------

/// Sampled joint A₂ data for a pair of measures.
#[derive(Clone, Debug)]
pub struct A2Characteristic {
    /// `max_z ‖M(z)^{1/2} N(z)^{1/2}‖²` over the sample set.
    pub value: f64,
    pub argmax: C64,
    /// Largest deviation `|‖M½N½‖ − ‖N½M½‖|` seen (order symmetry).
    pub order_symmetry_dev: f64,
    pub samples: usize,
}

/// Default z-sample design: the joint atomic support anchors a log-spaced
/// ε-ladder in `[eps_min, 10]`, since the A₂ stress concentrates as
/// `z` approaches common atoms.
pub fn a2_default_samples(m: &MatrixMeasure, n: &MatrixMeasure, eps_min: f64) -> Vec<C64> {
    let mut anchors: Vec<f64> = m
        .atoms()
        .iter()
        .chain(n.atoms().iter())
        .map(|a| a.location)
        .collect();
    if anchors.is_empty() {
        anchors.push(0.0);
    }
    anchors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    anchors.dedup_by(|a, b| (*a - *b).abs() <= SUPPORT_MATCH_TOL);
    let eps_max = 10.0f64;
    let rungs = 6 * ((eps_max / eps_min).log10().ceil() as usize).max(1);
    let mut samples = Vec::with_capacity(anchors.len() * (rungs + 1));
    for &x in &anchors {
        for k in 0..=rungs {
            let frac = k as f64 / rungs as f64;
            let eps = eps_min * (eps_max / eps_min).powf(frac);
            samples.push(C64::new(x, eps));
        }
    }
    samples
}

/// `max_z ‖M(z)^{1/2} N(z)^{1/2}‖²` over the upper half-plane samples, with
/// the order-symmetry deviation tracked per sample.
pub fn a2_characteristic(
    m: &MatrixMeasure,
    n: &MatrixMeasure,
    z_samples: &[C64],
) -> Result<A2Characteristic> {
    if z_samples.is_empty() {
        return Err(Error::Validation("A₂ sample set is empty".into()));
    }
    let mut best = -1.0f64;
    let mut argmax = z_samples[0];
    let mut order_dev = 0.0f64;
    for &z in z_samples {
        if z.im <= 0.0 {
            return Err(Error::Domain(format!(
                "A₂ samples must lie in the upper half-plane, got {z}"
            )));
        }
        let pm = psd_sqrt(&crate::herglotz::poisson_extension(m, z)?)?;
        let pn = psd_sqrt(&crate::herglotz::poisson_extension(n, z)?)?;
        let forward = operator_norm(&(pm.matrix() * pn.matrix()));
        let backward = operator_norm(&(pn.matrix() * pm.matrix()));
        order_dev = order_dev.max((forward - backward).abs());
        let v = forward * forward;
        if v > best {
            best = v;
            argmax = z;
        }
    }
    Ok(A2Characteristic {
        value: best,
        argmax,
        order_symmetry_dev: order_dev,
        samples: z_samples.len(),
    })
}

/// Report from the perturbation-pair A₂ bound check.
#[derive(Clone, Debug)]
pub struct A2BoundReport {
    /// Sampled sup of `‖M(z)^{1/2} (G M^G(z) G)^{1/2}‖` (not squared).
    pub max_value: f64,
    pub argmax: C64,
    /// `8/π − max_value`.
    pub margin: f64,
    pub within_bound: bool,
    pub order_symmetry_dev: f64,
    /// Max deviation from the factored identity
    /// `‖M(z)^{1/2} G M^G(z)^{1/2}‖ = ‖M(z)^{1/2}(G M^G(z) G)^{1/2}‖`.
    pub factored_identity_dev: f64,
    pub samples: usize,
}

/// Check `sup_z ‖M(z)^{1/2} (G M^G(z) G)^{1/2}‖ ≤ 8/π` over the sample set
/// (defaults anchored at atoms when `z_samples` is empty), together with the
/// order-symmetry and factored-form identities.
pub fn a2_bound_check(
    model: &OperatorModel,
    g: &HermitianMatrix,
    z_samples: &[C64],
    eps_min: f64,
) -> Result<A2BoundReport> {
    let m = model.spectral_measure().clone();
    let mg = perturbed_measure_direct(model, g)?;
    let n = mg.conjugated(g.matrix())?;
    let mut samples = a2_default_samples(&m, &n, eps_min);
    samples.extend_from_slice(z_samples);
    let mut max_value = 0.0f64;
    let mut argmax = samples[0];
    let mut order_dev = 0.0f64;
    let mut factored_dev = 0.0f64;
    for &z in &samples {
        let pm = psd_sqrt(&crate::herglotz::poisson_extension(&m, z)?)?;
        let pn = psd_sqrt(&crate::herglotz::poisson_extension(&n, z)?)?;
        let forward = operator_norm(&(pm.matrix() * pn.matrix()));
        let backward = operator_norm(&(pn.matrix() * pm.matrix()));
        order_dev = order_dev.max((forward - backward).abs());
        // factored form through the un-conjugated perturbed extension
        let pg = psd_sqrt(&crate::herglotz::poisson_extension(&mg, z)?)?;
        let factored = operator_norm(&(&(pm.matrix() * g.matrix()) * pg.matrix()));
        factored_dev = factored_dev.max((forward - factored).abs());
        if forward > max_value {
            max_value = forward;
            argmax = z;
        }
    }
    Ok(A2BoundReport {
        max_value,
        argmax,
        margin: A2_BOUND - max_value,
        within_bound: max_value <= A2_BOUND + 1e-8,
        order_symmetry_dev: order_dev,
        factored_identity_dev: factored_dev,
        samples: samples.len(),
    })
}

/// Values of `t` on the grid where the atomic support of
/// `μ^{Γ(t)} = tr M^{Γ(t)}` meets an atom of `ν`.
pub fn exceptional_parameter_scan(
    family: &PerturbationFamily,
    nu: &ScalarMeasure,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    let mut exceptional = Vec::new();
    for &t in t_grid {
        let m = perturbed_measure_direct(&family.model, &family.gamma_at(t))?;
        let mu = trace_measure(&m);
        let hit = mu.atoms.iter().any(|&(x, _)| {
            nu.atoms
                .iter()
                .any(|&(y, _)| (x - y).abs() <= crate::averaging::NULL_SET_PROXIMITY)
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
    use crate::measure::Atom;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn atom2(x: f64, diag: [f64; 2]) -> Atom {
        Atom {
            location: x,
            weight: HermitianMatrix::from_real_diag(&diag),
        }
    }

    #[test]
    fn mutual_singularity_axis_orthogonal() {
        let m = MatrixMeasure::atomic(2, vec![atom2(1.0, [0.0, 1.0])]).unwrap();
        let n = MatrixMeasure::atomic(2, vec![atom2(1.0, [1.0, 0.0])]).unwrap();
        let out = vector_mutual_singularity(&m, &n).unwrap();
        match &out {
            MutualSingularityOutcome::Singular(w) => {
                assert_eq!(w.points, vec![1.0]);
                // Π(1) = e1e1† (the N-range projection)
                assert!((w.projections[0].matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
                w.verify(&m, &n).unwrap();
            }
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn mutual_singularity_identical_fails() {
        let m = MatrixMeasure::atomic(2, vec![atom2(0.0, [1.0, 0.0])]).unwrap();
        let out = vector_mutual_singularity(&m, &m).unwrap();
        match out {
            MutualSingularityOutcome::NotSingular(violations) => {
                assert_eq!(violations.len(), 1);
                assert!((violations[0].overlap - 1.0).abs() < 1e-10);
                assert_eq!(violations[0].location, 0.0);
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn mutual_singularity_disjoint_supports() {
        let m = MatrixMeasure::atomic(
            2,
            vec![Atom {
                location: 0.0,
                weight: HermitianMatrix::identity(2),
            }],
        )
        .unwrap();
        let n = MatrixMeasure::atomic(
            2,
            vec![Atom {
                location: 1.0,
                weight: HermitianMatrix::identity(2),
            }],
        )
        .unwrap();
        let out = vector_mutual_singularity(&m, &n).unwrap();
        assert!(out.is_singular());
        if let MutualSingularityOutcome::Singular(w) = &out {
            w.verify(&m, &n).unwrap();
            assert_eq!(w.points.len(), 2);
        }
    }

    #[test]
    fn mutual_singularity_rejects_ac() {
        let m = MatrixMeasure::scalar_atoms(&[(0.0, 1.0)]).unwrap();
        let ac = crate::measure::AcPart {
            start: 0.0,
            end: 1.0,
            densities: vec![HermitianMatrix::from_real_diag(&[1.0]); 3],
        };
        let n = MatrixMeasure::new(1, vec![], Some(ac)).unwrap();
        assert!(vector_mutual_singularity(&m, &n).is_err());
    }

    #[test]
    fn ad_check_worked_example() {
        // A = diag(0,1), B = I, G = diag(1,0): common atom at x = 1 with
        // W(1) = e2e2† and G W^G(1) G = e1e1†
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0, 1.0]),
            CMatrix::identity(2),
        )
        .unwrap();
        let g = HermitianMatrix::from_real_diag(&[1.0, 0.0]);
        let rep = ad_check(&model, &g).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.common_atom_overlaps.len(), 1);
        assert_eq!(rep.common_atom_overlaps[0].0, 1.0);
        assert!(rep.common_atom_overlaps[0].1 <= 1e-10);
    }

    #[test]
    fn ad_check_zero_perturbation() {
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0, 1.0]),
            CMatrix::identity(2),
        )
        .unwrap();
        let rep = ad_check(&model, &HermitianMatrix::zeros(2)).unwrap();
        assert!(rep.holds());
        assert!(rep.common_atom_overlaps.is_empty());
    }

    #[test]
    fn a2_characteristic_two_deltas() {
        let m = MatrixMeasure::scalar_atoms(&[(0.0, 1.0)]).unwrap();
        let n = MatrixMeasure::scalar_atoms(&[(1.0, 1.0)]).unwrap();
        let pi = std::f64::consts::PI;
        let ch = a2_characteristic(&m, &n, &[c(0.0, 1.0)]).unwrap();
        // M(i) = 1/π, N(i) = 1/(2π): product of roots squared = 1/(2π²)
        assert!((ch.value - 1.0 / (2.0 * pi * pi)).abs() < 1e-12);
        assert!(ch.order_symmetry_dev < 1e-12);
    }

    #[test]
    fn a2_characteristic_zero_measure() {
        let m = MatrixMeasure::scalar_atoms(&[(0.0, 1.0)]).unwrap();
        let n = MatrixMeasure::atomic(1, vec![]).unwrap();
        let ch = a2_characteristic(&m, &n, &[c(0.0, 1.0)]).unwrap();
        assert_eq!(ch.value, 0.0);
    }

    #[test]
    fn a2_monotone_in_measures() {
        let m = MatrixMeasure::scalar_atoms(&[(0.0, 1.0), (2.0, 0.5)]).unwrap();
        let n = MatrixMeasure::scalar_atoms(&[(0.0, 0.8), (1.0, 1.0)]).unwrap();
        let m_small = MatrixMeasure::scalar_atoms(&[(0.0, 0.5), (2.0, 0.25)]).unwrap();
        let n_small = MatrixMeasure::scalar_atoms(&[(0.0, 0.4), (1.0, 0.5)]).unwrap();
        let samples = a2_default_samples(&m, &n, 1e-4);
        let big = a2_characteristic(&m, &n, &samples).unwrap();
        let small = a2_characteristic(&m_small, &n_small, &samples).unwrap();
        assert!(small.value <= big.value + 1e-12);
    }

    #[test]
    fn a2_bound_rank_one() {
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0]),
            CMatrix::identity(1),
        )
        .unwrap();
        let g = HermitianMatrix::from_real_diag(&[1.0]);
        let rep = a2_bound_check(&model, &g, &[c(0.0, 1.0)], 1e-6).unwrap();
        assert!(rep.within_bound, "max {:.6}", rep.max_value);
        // at z = i the value is 1/(π√2)
        let pi = std::f64::consts::PI;
        let at_i = {
            let m = model.spectral_measure().clone();
            let mg = perturbed_measure_direct(&model, &g).unwrap();
            let n = mg.conjugated(g.matrix()).unwrap();
            let pm =
                psd_sqrt(&crate::herglotz::poisson_extension(&m, c(0.0, 1.0)).unwrap()).unwrap();
            let pn =
                psd_sqrt(&crate::herglotz::poisson_extension(&n, c(0.0, 1.0)).unwrap()).unwrap();
            operator_norm(&(pm.matrix() * pn.matrix()))
        };
        assert!((at_i - 1.0 / (pi * 2.0f64.sqrt())).abs() < 1e-12);
        assert!(rep.order_symmetry_dev <= 1e-10);
        assert!(rep.factored_identity_dev <= 1e-10);
    }

    #[test]
    fn a2_bound_diag_example() {
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0, 1.0]),
            CMatrix::identity(2),
        )
        .unwrap();
        let g = HermitianMatrix::identity(2);
        let pi = std::f64::consts::PI;
        // at z = i: diagonal Poisson values 1/π, 1/2π vs 1/2π, 1/5π →
        // max(1/(π√2), 1/(π√10))
        let m = model.spectral_measure().clone();
        let mg = perturbed_measure_direct(&model, &g).unwrap();
        let n = mg.conjugated(g.matrix()).unwrap();
        let pm = psd_sqrt(&crate::herglotz::poisson_extension(&m, c(0.0, 1.0)).unwrap()).unwrap();
        let pn = psd_sqrt(&crate::herglotz::poisson_extension(&n, c(0.0, 1.0)).unwrap()).unwrap();
        let v = operator_norm(&(pm.matrix() * pn.matrix()));
        assert!((v - 1.0 / (pi * 2.0f64.sqrt())).abs() < 1e-12);

        let rep = a2_bound_check(&model, &g, &[], 1e-6).unwrap();
        assert!(rep.within_bound, "max {:.6}", rep.max_value);

        // G = 0 gives a zero conjugated measure
        let rep0 = a2_bound_check(&model, &HermitianMatrix::zeros(2), &[], 1e-4).unwrap();
        assert_eq!(rep0.max_value, 0.0);
        assert!(rep0.within_bound);
    }

    #[test]
    fn a2_blowup_detector_on_broken_pair() {
        // deliberately NOT a perturbation pair: a shared atom with identical
        // rank-one weights blows up as z approaches the atom
        let m = MatrixMeasure::scalar_atoms(&[(0.0, 1.0)]).unwrap();
        let samples: Vec<C64> = [1e-2, 1e-4, 1e-6].iter().map(|&e| c(0.0, e)).collect();
        let ch = a2_characteristic(&m, &m, &samples).unwrap();
        assert!(
            ch.value > (A2_BOUND * A2_BOUND) * 1e6,
            "blow-up not detected: {}",
            ch.value
        );
        assert_eq!(ch.argmax, c(0.0, 1e-6));
    }

    #[test]
    fn exceptional_scan_worked_example() {
        let model = OperatorModel::new(
            HermitianMatrix::from_real_diag(&[0.0, 1.0]),
            CMatrix::identity(2),
        )
        .unwrap();
        let fam = PerturbationFamily::new(
            model,
            HermitianMatrix::zeros(2),
            HermitianMatrix::identity(2),
        )
        .unwrap();
        let nu = ScalarMeasure::from_atoms(&[(0.5, 1.0)]).unwrap();
        let t_grid: Vec<f64> = (0..=200).map(|k| -1.0 + 0.01 * k as f64).collect();
        let exc = exceptional_parameter_scan(&fam, &nu, &t_grid).unwrap();
        assert_eq!(exc.len(), 2);
        assert!((exc[0] + 0.5).abs() < 1e-12 && (exc[1] - 0.5).abs() < 1e-12);

        let nu_far = ScalarMeasure::from_atoms(&[(50.0, 1.0)]).unwrap();
        assert!(exceptional_parameter_scan(&fam, &nu_far, &t_grid)
            .unwrap()
            .is_empty());
    }
}
