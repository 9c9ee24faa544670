//! The spectral representation map and weighted integral operators.
//!
//! For an atomic pair `(M, M^Γ)` the unitary `V_Γ : L²(M) → L²(M^Γ)`
//! intertwining `A_Γ` with multiplication is pinned down on resolvent
//! functions by `V_Γ k_z e = k_z (I + Γ F(z)) e`, `k_z(s) = (s−z)⁻¹`. The
//! map is assembled from a spanning family of such tags; weighted operator
//! norms are computed by congruence with pseudo-inverse square roots
//! restricted to the weight ranges, i.e. `L²` vectors are identified modulo
//! the weight kernels.

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, psd_sqrt, CMatrix, HermitianMatrix, C64, RANK_TOL_REL};
use crate::measure::{MatrixMeasure, SUPPORT_MATCH_TOL};
use crate::perturbation::{perturbed_measure_direct, OperatorModel};

/// Minimum `|Im z|` for representation tags.
pub const TAG_MIN_IM: f64 = 1e-3;
/// Residual threshold during pivoted tag thinning, relative to the largest
/// candidate norm.
pub const TAG_SPAN_TOL: f64 = 1e-8;

// -- isometric coordinates of L²(M) for atomic M ------------------------------

struct RangeBlock {
    u_plus: CMatrix,
    vals: Vec<f64>,
}

/// Isometric coordinates of `L²(M)` for an atomic measure: per atom the
/// weight eigendirections above the rank cutoff, scaled by `λ^{1/2}`.
pub struct AtomSpaceBasis {
    d: usize,
    locations: Vec<f64>,
    blocks: Vec<RangeBlock>,
    dim: usize,
}

impl AtomSpaceBasis {
    pub fn from_measure(m: &MatrixMeasure) -> Result<Self> {
        if !m.is_purely_atomic() {
            return Err(Error::Unsupported(
                "representation space requires a purely atomic measure".into(),
            ));
        }
        let d = m.dim();
        let mut blocks = Vec::with_capacity(m.atoms().len());
        let mut dim = 0usize;
        for a in m.atoms() {
            let e = a.weight.eig();
            let lmax = e.values.iter().copied().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..e.values.len())
                .filter(|&k| e.values[k] > RANK_TOL_REL * lmax && e.values[k] > 0.0)
                .collect();
            let u_plus = CMatrix::from_fn(d, keep.len(), |i, j| e.vectors[(i, keep[j])]);
            let vals: Vec<f64> = keep.iter().map(|&k| e.values[k]).collect();
            dim += keep.len();
            blocks.push(RangeBlock { u_plus, vals });
        }
        Ok(Self {
            d,
            locations: m.atoms().iter().map(|a| a.location).collect(),
            blocks,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom_count(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    /// `D × d·n` map from atom values to isometric coordinates:
    /// per atom `Λ_+^{1/2} U_+†`.
    pub fn proj_matrix(&self) -> CMatrix {
        let n = self.atom_count();
        let mut m = CMatrix::zeros(self.dim, self.d * n);
        let mut row = 0;
        for (k, b) in self.blocks.iter().enumerate() {
            for r in 0..b.vals.len() {
                let s = b.vals[r].sqrt();
                for c in 0..self.d {
                    m[(row, k * self.d + c)] = b.u_plus[(c, r)].conj() * C64::new(s, 0.0);
                }
                row += 1;
            }
        }
        m
    }

    /// `d·n × D` section of [`Self::proj_matrix`]: isometric coordinates
    /// back to the range representative, per atom `U_+ Λ_+^{−1/2}`.
    pub fn lift_matrix(&self) -> CMatrix {
        let n = self.atom_count();
        let mut m = CMatrix::zeros(self.d * n, self.dim);
        let mut col = 0;
        for (k, b) in self.blocks.iter().enumerate() {
            for r in 0..b.vals.len() {
                let s = 1.0 / b.vals[r].sqrt();
                for c in 0..self.d {
                    m[(k * self.d + c, col)] = b.u_plus[(c, r)] * C64::new(s, 0.0);
                }
                col += 1;
            }
        }
        m
    }

    /// Block-diagonal Gram `diag(W_1, …, W_n)` in atom-value coordinates.
    pub fn gram_matrix(&self, m: &MatrixMeasure) -> CMatrix {
        let n = self.atom_count();
        let mut g = CMatrix::zeros(self.d * n, self.d * n);
        for (k, a) in m.atoms().iter().enumerate() {
            for i in 0..self.d {
                for j in 0..self.d {
                    g[(k * self.d + i, k * self.d + j)] = a.weight.matrix()[(i, j)];
                }
            }
        }
        g
    }
}

// -- resolvent-tag basis --------------------------------------------------------

/// A family of resolvent tags `k_z e` over an atomic measure, with its Gram
/// matrix `⟨k_z e, k_w e'⟩ = Σ_k (x_k−z)⁻¹ (x_k−w̄)⁻¹ e'† W_k e`.
pub struct WeightedSpaceBasis {
    pub measure: MatrixMeasure,
    /// Tags as (z, basis-vector index).
    pub tags: Vec<(C64, usize)>,
    pub gram: CMatrix,
}

impl WeightedSpaceBasis {
    pub fn new(measure: MatrixMeasure, tags: Vec<(C64, usize)>) -> Result<Self> {
        let d = measure.dim();
        for &(z, e) in &tags {
            if z.im.abs() < TAG_MIN_IM {
                return Err(Error::Validation(format!(
                    "tag point {z} too close to the axis (need |Im z| ≥ {TAG_MIN_IM})"
                )));
            }
            if e >= d {
                return Err(Error::Validation(format!(
                    "tag basis index {e} out of range for dimension {d}"
                )));
            }
        }
        let k = tags.len();
        let mut gram = CMatrix::zeros(k, k);
        for p in 0..k {
            for q in 0..k {
                let (zq, eq) = tags[q];
                let (zp, ep) = tags[p];
                let mut acc = C64::new(0.0, 0.0);
                for a in measure.atoms() {
                    let x = C64::new(a.location, 0.0);
                    let kern =
                        (C64::new(1.0, 0.0) / (x - zq)) * (C64::new(1.0, 0.0) / (x - zp)).conj();
                    acc += kern * a.weight.matrix()[(ep, eq)];
                }
                gram[(p, q)] = acc;
            }
        }
        let h = HermitianMatrix::new(gram.hermitian_part())?;
        let lmin = h.eig().values.first().copied().unwrap_or(0.0);
        let lmax = h.eig().values.last().copied().unwrap_or(0.0);
        if lmin < -1e-12 * (1.0 + lmax) {
            return Err(Error::Validation(format!(
                "tag Gram is not PSD: λ_min = {lmin:.3e}"
            )));
        }
        Ok(Self {
            measure,
            tags,
            gram,
        })
    }

    /// Numerical rank of the Gram; equals `dim L²(M)` when the tags span.
    pub fn gram_rank(&self) -> usize {
        let h = HermitianMatrix::new(self.gram.hermitian_part()).expect("Gram is Hermitian");
        crate::linalg::numerical_rank(&h, 1e-12)
    }
}

// -- weighted operators ---------------------------------------------------------

/// An operator between weighted atomic `L²` spaces, stored in atom-value
/// coordinates alongside its isometric-coordinate matrix, whose largest
/// singular value is the weighted operator norm.
pub struct WeightedOperator {
    pub in_space: AtomSpaceBasis,
    pub out_space: AtomSpaceBasis,
    pub matrix_iso: CMatrix,
    pub matrix_atom_values: CMatrix,
    pub norm: f64,
}

/// Build the weighted version of an integral operator with kernel
/// `κ(s, t)`: `f ↦ Σ_k κ(·, x_k) W_k f(x_k)` from `L²(M)` to `L²(N)`.
pub fn kernel_operator(
    m: &MatrixMeasure,
    n: &MatrixMeasure,
    kernel: &dyn Fn(f64, f64) -> C64,
) -> Result<WeightedOperator> {
    let in_space = AtomSpaceBasis::from_measure(m)?;
    let out_space = AtomSpaceBasis::from_measure(n)?;
    let d = m.dim();
    let (ni, nk) = (out_space.atom_count(), in_space.atom_count());
    let mut t_av = CMatrix::zeros(d * ni, d * nk);
    for (i, &s) in out_space.locations().iter().enumerate() {
        for (k, a) in m.atoms().iter().enumerate() {
            let kv = kernel(s, a.location);
            for r in 0..d {
                for c in 0..d {
                    t_av[(i * d + r, k * d + c)] = kv * a.weight.matrix()[(r, c)];
                }
            }
        }
    }
    let iso = &(&out_space.proj_matrix() * &t_av) * &in_space.lift_matrix();
    let norm = operator_norm(&iso);
    Ok(WeightedOperator {
        in_space,
        out_space,
        matrix_iso: iso,
        matrix_atom_values: t_av,
        norm,
    })
}

/// Report on a weighted operator against a theoretical norm bound.
#[derive(Clone, Debug)]
pub struct OperatorBoundReport {
    pub norm: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// `T^M_ε : L²(M) → L²(G M^G G)` with kernel `1/(s−t+iε)`; the sign of
/// `eps` selects the half-plane. Uniformly bounded with norm at most 2.
pub fn t_epsilon_operator(
    model: &OperatorModel,
    g: &HermitianMatrix,
    eps: f64,
) -> Result<(WeightedOperator, OperatorBoundReport)> {
    if eps == 0.0 {
        return Err(Error::Domain("ε must be nonzero".into()));
    }
    let m = model.spectral_measure().clone();
    let mg = perturbed_measure_direct(model, g)?;
    let n = mg.conjugated(g.matrix())?.pruned(1e-14);
    let op = kernel_operator(&m, &n, &|s, t| C64::new(1.0, 0.0) / C64::new(s - t, eps))?;
    let report = OperatorBoundReport {
        norm: op.norm,
        bound: 2.0,
        within_bound: op.norm <= 2.0 + 1e-8,
    };
    Ok((op, report))
}

/// `P_α^M : L²(M) → L²(G M^G G)` with kernel `2 Im α/((s−α)(t−ᾱ))`.
/// Uniformly bounded with norm at most 4.
pub fn p_alpha_operator(
    model: &OperatorModel,
    g: &HermitianMatrix,
    alpha: C64,
) -> Result<(WeightedOperator, OperatorBoundReport)> {
    if alpha.im == 0.0 {
        return Err(Error::Domain("α must be off the real axis".into()));
    }
    let m = model.spectral_measure().clone();
    let mg = perturbed_measure_direct(model, g)?;
    let n = mg.conjugated(g.matrix())?.pruned(1e-14);
    let two_im = C64::new(0.0, 0.0) + 2.0 * alpha.im;
    let op = kernel_operator(&m, &n, &|s, t| {
        two_im / ((C64::new(s, 0.0) - alpha) * (C64::new(t, 0.0) - alpha.conj()))
    })?;
    let report = OperatorBoundReport {
        norm: op.norm,
        bound: 4.0,
        within_bound: op.norm <= 4.0 + 1e-8,
    };
    Ok((op, report))
}

/// Factored-kernel lower bound: for `K(s,t) = k1(s) k2(t)`,
/// `‖(∫|k1|² dN)^{1/2} (∫|k2|² dM)^{1/2}‖ ≤ ‖T^M‖`.
#[derive(Clone, Debug)]
pub struct KernelBoundReport {
    pub lhs: f64,
    pub operator_norm: f64,
    pub holds: bool,
}

pub fn kernel_a2_lower_bound(
    k1: &dyn Fn(f64) -> C64,
    k2: &dyn Fn(f64) -> C64,
    m: &MatrixMeasure,
    n: &MatrixMeasure,
    t_norm: f64,
) -> Result<KernelBoundReport> {
    let int1 = n.integrate(|x| C64::new(k1(x).norm_sqr(), 0.0))?;
    let int2 = m.integrate(|x| C64::new(k2(x).norm_sqr(), 0.0))?;
    let r1 = psd_sqrt(&HermitianMatrix::new(int1.hermitian_part())?)?;
    let r2 = psd_sqrt(&HermitianMatrix::new(int2.hermitian_part())?)?;
    let lhs = operator_norm(&(r1.matrix() * r2.matrix()));
    Ok(KernelBoundReport {
        lhs,
        operator_norm: t_norm,
        holds: lhs <= t_norm + 1e-10 * (1.0 + t_norm),
    })
}

// -- the spectral representation map --------------------------------------------

/// Default tag points: `2·dim L²(M)` Chebyshev-spread points alternating
/// between the lines `Im z = ±1` over the (padded) atom hull.
pub fn default_tag_points(m: &MatrixMeasure, dim: usize) -> Vec<C64> {
    let lo = m.atoms().first().map(|a| a.location).unwrap_or(0.0);
    let hi = m.atoms().last().map(|a| a.location).unwrap_or(0.0);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo) + 1.0;
    let count = 2 * dim.max(1);
    (0..count)
        .map(|j| {
            let theta = std::f64::consts::PI * (2.0 * j as f64 + 1.0) / (2.0 * count as f64);
            let x = mid + half * theta.cos();
            let im = if j % 2 == 0 { 1.0 } else { -1.0 };
            C64::new(x, im)
        })
        .collect()
}

/// Build `V_Γ : L²(M) → L²(M^Γ)` from resolvent tags
/// `k_z e ↦ k_z (I + Γ F(z)) e`, thinned to a well-conditioned spanning
/// subset by pivoted Gram–Schmidt in the isometric coordinates.
pub fn build_spectral_map(
    model: &OperatorModel,
    g: &HermitianMatrix,
    z_tags: Option<&[C64]>,
) -> Result<WeightedOperator> {
    let m = model.spectral_measure().clone();
    let mg = perturbed_measure_direct(model, g)?;
    let in_space = AtomSpaceBasis::from_measure(&m)?;
    let out_space = AtomSpaceBasis::from_measure(&mg)?;
    let d = model.rank();
    let dim_in = in_space.dim();

    let points: Vec<C64> = match z_tags {
        Some(zs) => {
            let mut seen: Vec<C64> = Vec::new();
            for &z in zs {
                if z.im.abs() < TAG_MIN_IM {
                    return Err(Error::Validation(format!(
                        "tag point {z} too close to the axis"
                    )));
                }
                if seen.iter().any(|w| (w - z).norm() < 1e-14) {
                    return Err(Error::Validation(format!(
                        "tag points must be distinct ({z})"
                    )));
                }
                seen.push(z);
            }
            seen
        }
        None => default_tag_points(&m, dim_in),
    };

    // candidate tag vectors in input isometric coordinates, plus their images
    let proj_in = in_space.proj_matrix();
    let proj_out = out_space.proj_matrix();
    let one = C64::new(1.0, 0.0);
    let mut tag_cols: Vec<CMatrix> = Vec::with_capacity(points.len() * d);
    let mut img_cols: Vec<CMatrix> = Vec::with_capacity(points.len() * d);
    let id = CMatrix::identity(d);
    for &z in &points {
        let f = model.cauchy(z)?;
        let transfer = &id + &(g.matrix() * &f.value);
        for e in 0..d {
            // tag function values at input atoms
            let mut tag_av = CMatrix::zeros(d * in_space.atom_count(), 1);
            for (k, &x) in in_space.locations().iter().enumerate() {
                tag_av[(k * d + e, 0)] = one / (C64::new(x, 0.0) - z);
            }
            tag_cols.push(&proj_in * &tag_av);
            // image values at output atoms: k_z(y) (I + Γ F(z)) e
            let u = transfer.column(e);
            let mut img_av = CMatrix::zeros(d * out_space.atom_count(), 1);
            for (i, &y) in out_space.locations().iter().enumerate() {
                let kz = one / (C64::new(y, 0.0) - z);
                for r in 0..d {
                    img_av[(i * d + r, 0)] = kz * u[r];
                }
            }
            img_cols.push(&proj_out * &img_av);
        }
    }

    // pivoted modified Gram–Schmidt selection of a spanning subset
    let max_norm = tag_cols
        .iter()
        .map(|c| c.frobenius_norm())
        .fold(0.0, f64::max);
    let mut residuals: Vec<CMatrix> = tag_cols.clone();
    let mut selected: Vec<usize> = Vec::with_capacity(dim_in);
    let mut ortho: Vec<CMatrix> = Vec::with_capacity(dim_in);
    while selected.len() < dim_in {
        let (mut best, mut best_norm) = (usize::MAX, 0.0f64);
        for (idx, r) in residuals.iter().enumerate() {
            if selected.contains(&idx) {
                continue;
            }
            let nrm = r.frobenius_norm();
            if nrm > best_norm {
                best_norm = nrm;
                best = idx;
            }
        }
        if best == usize::MAX || best_norm <= TAG_SPAN_TOL * max_norm {
            return Err(Error::SpanningFailure(format!(
                "tag family spans only {}/{dim_in} directions; supply more tag points",
                selected.len()
            )));
        }
        let q = residuals[best].scale_re(1.0 / best_norm);
        for (idx, r) in residuals.iter_mut().enumerate() {
            if idx == best || selected.contains(&idx) {
                continue;
            }
            // r -= q ⟨q, r⟩
            let mut ip = C64::new(0.0, 0.0);
            for row in 0..dim_in {
                ip += q[(row, 0)].conj() * r[(row, 0)];
            }
            *r = &*r - &q.scale(ip);
        }
        ortho.push(q);
        selected.push(best);
    }

    // solve V T = I on the selected columns
    let t_sel = CMatrix::from_fn(dim_in, dim_in, |i, j| tag_cols[selected[j]][(i, 0)]);
    let i_sel = CMatrix::from_fn(out_space.dim(), dim_in, |i, j| {
        img_cols[selected[j]][(i, 0)]
    });
    // V = I_sel · T_sel⁻¹  ⟺  T_sel† V† = I_sel†
    let v_iso = t_sel.adjoint().solve(&i_sel.adjoint())?.adjoint();
    let v_av = &(&out_space.lift_matrix() * &v_iso) * &proj_in;
    let norm = operator_norm(&v_iso);
    Ok(WeightedOperator {
        in_space,
        out_space,
        matrix_iso: v_iso,
        matrix_atom_values: v_av,
        norm,
    })
}

/// `‖V† G_out V − G_in‖ / (1 + ‖G_in‖)` in atom-value coordinates: zero for
/// a weighted isometry.
pub fn unitarity_residual(v: &WeightedOperator, m: &MatrixMeasure, n: &MatrixMeasure) -> f64 {
    let g_in = v.in_space.gram_matrix(m);
    let g_out = v.out_space.gram_matrix(n);
    let vtgv = &(&v.matrix_atom_values.adjoint() * &g_out) * &v.matrix_atom_values;
    operator_norm(&(&vtgv - &g_in)) / (1.0 + operator_norm(&g_in))
}

/// `‖V A_Γ − M_s V‖` in isometric coordinates, where `A_Γ` acts on `L²(M)`
/// as `(t f)(t) + Γ ∫ [dM] f` and `M_s` multiplies by the atom location in
/// `L²(M^Γ)`.
pub fn intertwining_residual(v: &WeightedOperator, m: &MatrixMeasure, g: &HermitianMatrix) -> f64 {
    let d = m.dim();
    let n_in = v.in_space.atom_count();
    let mut a_av = CMatrix::zeros(d * n_in, d * n_in);
    for k in 0..n_in {
        let x = v.in_space.locations()[k];
        for r in 0..d {
            a_av[(k * d + r, k * d + r)] = C64::new(x, 0.0);
        }
    }
    for (j, atom) in m.atoms().iter().enumerate() {
        let gw = g.matrix() * atom.weight.matrix();
        for k in 0..n_in {
            for r in 0..d {
                for c in 0..d {
                    a_av[(k * d + r, j * d + c)] += gw[(r, c)];
                }
            }
        }
    }
    let a_iso = &(&v.in_space.proj_matrix() * &a_av) * &v.in_space.lift_matrix();
    let n_out = v.out_space.atom_count();
    let mut m_av = CMatrix::zeros(d * n_out, d * n_out);
    for i in 0..n_out {
        let y = v.out_space.locations()[i];
        for r in 0..d {
            m_av[(i * d + r, i * d + r)] = C64::new(y, 0.0);
        }
    }
    let m_iso = &(&v.out_space.proj_matrix() * &m_av) * &v.out_space.lift_matrix();
    let lhs = &v.matrix_iso * &a_iso;
    let rhs = &m_iso * &v.matrix_iso;
    operator_norm(&(&lhs - &rhs))
}

/// Apply the divided-difference form of the representation to a polynomial
/// `h` (real coefficients, ascending) on the basis vector `e`:
/// `(V h e)(s) = h(s) e − Γ Σ_k ((h(x_k) − h(s))/(x_k − s)) W_k e`,
/// with `h'(s)` on the diagonal `x_k = s`. Returns stacked atom values over
/// the output measure.
pub fn divided_difference_apply(
    m: &MatrixMeasure,
    out_locations: &[f64],
    g: &HermitianMatrix,
    h: &[f64],
    e: usize,
) -> CMatrix {
    let d = m.dim();
    let horner = |x: f64| -> f64 { h.iter().rev().fold(0.0, |acc, &c| acc * x + c) };
    let horner_deriv = |x: f64| -> f64 {
        h.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    };
    let mut out = CMatrix::zeros(d * out_locations.len(), 1);
    for (i, &s) in out_locations.iter().enumerate() {
        let hs = horner(s);
        // accumulate Γ Σ_k Δh(x_k, s) W_k e
        let mut corr = CMatrix::zeros(d, 1);
        for a in m.atoms() {
            let delta = if (a.location - s).abs() <= SUPPORT_MATCH_TOL {
                horner_deriv(s)
            } else {
                (horner(a.location) - hs) / (a.location - s)
            };
            for r in 0..d {
                corr[(r, 0)] += a.weight.matrix()[(r, e)] * C64::new(delta, 0.0);
            }
        }
        let gcorr = g.matrix() * &corr;
        for r in 0..d {
            let direct = if r == e {
                C64::new(hs, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            out[(i * d + r, 0)] = direct - gcorr[(r, 0)];
        }
    }
    out
}
