//! Self-contained dense complex linear algebra.
//!
//! Everything downstream runs through this module: Hermitian
//! eigendecomposition (cyclic Jacobi), PSD square roots and pseudo-inverse
//! roots, operator norms, range projections and subspace overlaps. Matrices
//! are small (dimension ≤ 64), dense, and complex; there is no attempt at
//! sparse or large-scale support.

use num_complex::Complex64;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute tolerance for the Hermiticity invariant `H = H†`.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Relative eigenvalue clamp for numerically-PSD matrices.
pub const PSD_CLAMP_REL: f64 = 1e-10;
/// Default relative rank cutoff (double-precision eigenvalue noise floor).
pub const RANK_TOL_REL: f64 = 1e-10;
/// Tolerance for "is an orthogonal projection" validation.
pub const PROJECTION_TOL: f64 = 1e-10;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// Standard basis column vector `e_k` in dimension `n`.
    pub fn basis_vec(n: usize, k: usize) -> Self {
        let mut m = Self::zeros(n, 1);
        m[(k, 0)] = C64::new(1.0, 0.0);
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Hermitian part `(M + M†)/2`; used to scrub rounding asymmetry from
    /// expressions that are Hermitian in exact arithmetic.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)].conj())
        })
    }

    /// Anti-Hermitian component divided by `2i`: `(M - M†)/(2i)`.
    /// For a Cauchy transform this is the matrix `Im F`.
    pub fn imag_part_matrix(&self) -> Self {
        assert!(self.is_square());
        let half_i_inv = C64::new(0.0, -0.5); // 1/(2i)
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] - self[(j, i)].conj()) * half_i_inv
        })
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Horizontal concatenation of column blocks.
    pub fn hcat(blocks: &[&CMatrix]) -> Self {
        assert!(!blocks.is_empty());
        let rows = blocks[0].rows;
        assert!(blocks.iter().all(|b| b.rows == rows));
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut m = Self::zeros(rows, cols);
        let mut off = 0;
        for b in blocks {
            for i in 0..rows {
                for j in 0..b.cols {
                    m[(i, off + j)] = b[(i, j)];
                }
            }
            off += b.cols;
        }
        m
    }

    /// Solve `self * X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &CMatrix) -> Result<CMatrix> {
        assert!(self.is_square());
        assert_eq!(self.rows, rhs.rows, "solve: rhs row mismatch");
        let n = self.rows;
        let mut lu = self.clone();
        let mut x = rhs.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut pmax, mut prow) = (0.0f64, k);
            for i in k..n {
                let v = lu[(i, k)].norm();
                if v > pmax {
                    pmax = v;
                    prow = i;
                }
            }
            if pmax == 0.0 {
                return Err(Error::IllConditioned {
                    context: "singular matrix in solve".into(),
                    cond: f64::INFINITY,
                });
            }
            if prow != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(prow, j)];
                    lu[(prow, j)] = t;
                }
                for j in 0..x.cols {
                    let t = x[(k, j)];
                    x[(k, j)] = x[(prow, j)];
                    x[(prow, j)] = t;
                }
                perm.swap(k, prow);
            }
            let piv = lu[(k, k)];
            for i in (k + 1)..n {
                let m = lu[(i, k)] / piv;
                lu[(i, k)] = m;
                for j in (k + 1)..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= m * v;
                }
                for j in 0..x.cols {
                    let v = x[(k, j)];
                    x[(i, j)] -= m * v;
                }
            }
        }
        // back substitution
        for j in 0..x.cols {
            for i in (0..n).rev() {
                let mut acc = x[(i, j)];
                for k in (i + 1)..n {
                    acc -= lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = acc / lu[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        self.solve(&CMatrix::identity(self.rows))
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let v = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Square complex matrix with the invariant `H[i][j] = conj(H[j][i])`
/// (checked to 1e-12 absolute at construction, then symmetrized exactly).
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    m: CMatrix,
}

impl HermitianMatrix {
    /// Validate and store. The stored matrix is the Hermitian part of the
    /// input so the invariant holds exactly afterwards.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let mut max_asym = 0.0f64;
        let (mut arow, mut acol) = (0, 0);
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let asym = (m[(i, j)] - m[(j, i)].conj()).norm();
                if asym > max_asym {
                    max_asym = asym;
                    arow = i;
                    acol = j;
                }
            }
        }
        if max_asym > HERMITICITY_TOL * (1.0 + m.max_abs_entry()) {
            return Err(Error::NotHermitian {
                max_asymmetry: max_asym,
                row: arow,
                col: acol,
            });
        }
        Ok(Self {
            m: m.hermitian_part(),
        })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self {
            m: CMatrix::from_real_diag(diag),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: CMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: CMatrix::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: self.m.scale_re(s),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// Eigendecomposition by cyclic Jacobi; values ascending.
    pub fn eig(&self) -> EigenSystem {
        hermitian_eig(self)
    }

    /// Largest `|eigenvalue|` (= operator norm for Hermitian matrices).
    pub fn operator_norm(&self) -> f64 {
        let e = self.eig();
        e.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Eigendecomposition of a Hermitian matrix: `H = V diag(values) V†`,
/// `values` ascending, `V` unitary.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_real_diag(&self.values);
        let vd = &self.vectors * &d;
        &vd * &self.vectors.adjoint()
    }

    /// Spectral projector onto the span of eigenvectors at positions `idx`.
    pub fn projector(&self, idx: &[usize]) -> CMatrix {
        let n = self.vectors.rows();
        let mut p = CMatrix::zeros(n, n);
        for &k in idx {
            for i in 0..n {
                for j in 0..n {
                    let v = self.vectors[(i, k)] * self.vectors[(j, k)].conj();
                    p[(i, j)] += v;
                }
            }
        }
        p
    }
}

/// Hermitian eigendecomposition by cyclic Jacobi with complex rotations.
///
/// Unconditionally convergent for the dimensions used here; eigenvalues are
/// returned ascending with matching orthonormal eigenvector columns.
pub fn hermitian_eig(h: &HermitianMatrix) -> EigenSystem {
    let n = h.dim();
    let mut a = h.matrix().clone();
    let mut v = CMatrix::identity(n);
    if n <= 1 {
        return EigenSystem {
            values: (0..n).map(|i| a[(i, i)].re).collect(),
            vectors: v,
        };
    }
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let stop = 1e-15 * scale;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let amod = apq.norm();
                if amod <= 1e-300 {
                    continue;
                }
                let phase = apq / amod; // e^{i phi}
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * amod);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G has columns: col p = (c, -s e^{-i phi}), col q = (s, c e^{-i phi})
                // in the (p,q) plane; update A <- G† A G and V <- V G.
                let se = phase.conj() * s; // s e^{-i phi}
                let ce = phase.conj() * c; // c e^{-i phi}
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * se;
                    a[(k, q)] = akp * s + akq * ce;
                    // mirror rows to keep exact Hermiticity
                    a[(p, k)] = a[(k, p)].conj();
                    a[(q, k)] = a[(k, q)].conj();
                }
                a[(p, p)] = C64::new(app - t * amod, 0.0);
                a[(q, q)] = C64::new(aqq + t * amod, 0.0);
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * se;
                    v[(k, q)] = vkp * s + vkq * ce;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    EigenSystem { values, vectors }
}

/// PSD square root. Eigenvalues in `[-PSD_CLAMP_REL*norm, 0)` are clamped to
/// zero; anything lower is rejected as not PSD.
pub fn psd_sqrt(p: &HermitianMatrix) -> Result<HermitianMatrix> {
    let clamped = clamped_psd_eig(p)?;
    let roots: Vec<f64> = clamped.values.iter().map(|&l| l.sqrt()).collect();
    let d = CMatrix::from_real_diag(&roots);
    let vd = &clamped.vectors * &d;
    let r = &vd * &clamped.vectors.adjoint();
    Ok(HermitianMatrix {
        m: r.hermitian_part(),
    })
}

/// Pseudo-inverse square root on the range: eigenvalues above
/// `rank_tol * lambda_max` map to `1/sqrt(lambda)`, the rest to `0`.
pub fn psd_pinv_sqrt(p: &HermitianMatrix, rank_tol: f64) -> Result<HermitianMatrix> {
    let clamped = clamped_psd_eig(p)?;
    let lmax = clamped.values.iter().copied().fold(0.0, f64::max);
    let cut = rank_tol * lmax;
    let roots: Vec<f64> = clamped
        .values
        .iter()
        .map(|&l| {
            if l > cut && l > 0.0 {
                1.0 / l.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let d = CMatrix::from_real_diag(&roots);
    let vd = &clamped.vectors * &d;
    let r = &vd * &clamped.vectors.adjoint();
    Ok(HermitianMatrix {
        m: r.hermitian_part(),
    })
}

fn clamped_psd_eig(p: &HermitianMatrix) -> Result<EigenSystem> {
    let mut e = p.eig();
    let norm = e.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = PSD_CLAMP_REL * norm;
    for l in e.values.iter_mut() {
        if *l < 0.0 {
            if *l < -tol {
                return Err(Error::NotPsd {
                    eigenvalue: *l,
                    tolerance: tol,
                });
            }
            *l = 0.0;
        }
    }
    Ok(e)
}

/// Largest singular value of a rectangular complex matrix.
pub fn operator_norm(t: &CMatrix) -> f64 {
    if t.rows() == 0 || t.cols() == 0 || t.max_abs_entry() == 0.0 {
        return 0.0;
    }
    // Gram on the smaller side; rescale to keep the Jacobi sweep
    // well-scaled for extreme entry magnitudes.
    let scale = t.max_abs_entry();
    let ts = t.scale_re(1.0 / scale);
    let g = if t.rows() >= t.cols() {
        &ts.adjoint() * &ts
    } else {
        &ts * &ts.adjoint()
    };
    let h = HermitianMatrix {
        m: g.hermitian_part(),
    };
    let lmax = h.eig().values.iter().copied().fold(0.0, f64::max);
    scale * lmax.max(0.0).sqrt()
}

/// Smallest singular value (same scheme as [`operator_norm`]).
pub fn smallest_singular_value(t: &CMatrix) -> f64 {
    if t.rows() == 0 || t.cols() == 0 {
        return 0.0;
    }
    if t.max_abs_entry() == 0.0 {
        return 0.0;
    }
    let scale = t.max_abs_entry();
    let ts = t.scale_re(1.0 / scale);
    let g = if t.rows() >= t.cols() {
        &ts.adjoint() * &ts
    } else {
        &ts * &ts.adjoint()
    };
    let h = HermitianMatrix {
        m: g.hermitian_part(),
    };
    let lmin = h.eig().values.iter().copied().fold(f64::INFINITY, f64::min);
    scale * lmin.max(0.0).sqrt()
}

/// `sigma_max / sigma_min`; infinite when numerically singular.
pub fn condition_number(t: &CMatrix) -> f64 {
    let smax = operator_norm(t);
    let smin = smallest_singular_value(t);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Orthogonal projection onto the span of eigenvectors with eigenvalue
/// above `rank_tol * lambda_max`. The zero matrix maps to the zero
/// projection.
pub fn range_projection(p: &HermitianMatrix, rank_tol: f64) -> HermitianMatrix {
    let e = p.eig();
    let lmax = e.values.iter().copied().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return HermitianMatrix::zeros(p.dim());
    }
    let cut = rank_tol * lmax;
    let idx: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] > cut).collect();
    HermitianMatrix {
        m: e.projector(&idx).hermitian_part(),
    }
}

/// Numerical rank related to [`range_projection`] with the same cutoff.
pub fn numerical_rank(p: &HermitianMatrix, rank_tol: f64) -> usize {
    let e = p.eig();
    let lmax = e.values.iter().copied().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return 0;
    }
    let cut = rank_tol * lmax;
    e.values.iter().filter(|&&l| l > cut).count()
}

/// `‖P1·P2‖` for two orthogonal projections: 0 iff the ranges are
/// orthogonal, and equals the cosine of the smallest principal angle.
pub fn subspace_overlap(p1: &HermitianMatrix, p2: &HermitianMatrix) -> Result<f64> {
    validate_projection(p1, "first argument")?;
    validate_projection(p2, "second argument")?;
    let prod = p1.matrix() * p2.matrix();
    Ok(operator_norm(&prod).min(1.0))
}

fn validate_projection(p: &HermitianMatrix, which: &str) -> Result<()> {
    let sq = p.matrix() * p.matrix();
    let dev = operator_norm(&(&sq - p.matrix()));
    if dev > PROJECTION_TOL * (1.0 + operator_norm(p.matrix())) {
        return Err(Error::Validation(format!(
            "{which} is not an orthogonal projection: ‖P² − P‖ = {dev:.3e}"
        )));
    }
    Ok(())
}
