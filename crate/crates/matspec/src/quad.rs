//! Matrix-valued adaptive Gauss–Kronrod quadrature on finite intervals.

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

// 15-point Kronrod abscissae (positive half, descending) with the embedded
// 7-point Gauss rule at the odd-index nodes. Literals carry the full
// published precision.
#[allow(clippy::excessive_precision)]
const XGK15: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WGK15: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

#[allow(clippy::excessive_precision)]
const WG7: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Result of an adaptive integration.
#[derive(Clone, Debug)]
pub struct QuadResult {
    pub value: CMatrix,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub segments: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: CMatrix,
    error: f64,
}

fn gk15_segment(
    f: &mut dyn FnMut(f64) -> Result<CMatrix>,
    a: f64,
    b: f64,
) -> Result<(CMatrix, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let (rows, cols) = (fc.rows(), fc.cols());
    let mut kron = fc.scale_re(WGK15[7]);
    let mut gauss = fc.scale_re(WG7[3]);
    for j in 0..7 {
        let dx = half * XGK15[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        let pair = &f1 + &f2;
        kron = &kron + &pair.scale_re(WGK15[j]);
        if j % 2 == 1 {
            gauss = &gauss + &pair.scale_re(WG7[j / 2]);
        }
    }
    debug_assert_eq!((kron.rows(), kron.cols()), (rows, cols));
    let err = (&kron - &gauss).scale_re(half).max_abs_entry();
    Ok((kron.scale_re(half), err))
}

/// Adaptive Gauss–Kronrod integration of a matrix-valued integrand over
/// `[a, b]` to absolute (max-entry) tolerance `abs_tol`.
///
/// Worst-segment-first bisection with a deterministic final summation in
/// left-to-right segment order.
pub fn adaptive_gk(
    f: &mut dyn FnMut(f64) -> Result<CMatrix>,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_segments: usize,
) -> Result<QuadResult> {
    let (v, e) = gk15_segment(f, a, b)?;
    let mut segments = vec![Segment {
        a,
        b,
        value: v,
        error: e,
    }];
    let mut evals = 15usize;
    loop {
        let total_err: f64 = segments.iter().map(|s| s.error).sum();
        if total_err <= abs_tol {
            break;
        }
        if segments.len() >= max_segments {
            return Err(Error::Quadrature {
                context: format!("segment budget {max_segments} exhausted on [{a}, {b}]"),
                estimate: total_err,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|(_, s), (_, t)| s.error.partial_cmp(&t.error).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            return Err(Error::Quadrature {
                context: "interval too small to bisect further".into(),
                estimate: total_err,
            });
        }
        let (v1, e1) = gk15_segment(f, seg.a, mid)?;
        let (v2, e2) = gk15_segment(f, mid, seg.b)?;
        evals += 30;
        segments.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        segments.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
    segments.sort_by(|s, t| s.a.partial_cmp(&t.a).unwrap());
    let mut value = CMatrix::zeros(segments[0].value.rows(), segments[0].value.cols());
    let mut error = 0.0;
    for s in &segments {
        value = &value + &s.value;
        error += s.error;
    }
    Ok(QuadResult {
        value,
        error_estimate: error,
        evaluations: evals,
        segments: segments.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn scalar(f: impl Fn(f64) -> f64) -> impl FnMut(f64) -> Result<CMatrix> {
        move |x| {
            let mut m = CMatrix::zeros(1, 1);
            m[(0, 0)] = C64::new(f(x), 0.0);
            Ok(m)
        }
    }

    #[test]
    fn integrates_polynomial_exactly() {
        let mut f = scalar(|x| x * x * x - 2.0 * x + 1.0);
        let r = adaptive_gk(&mut f, -1.0, 3.0, 1e-12, 100).unwrap();
        // ∫ (x³ - 2x + 1) dx over [-1,3] = [x⁴/4 - x² + x] = (81/4-9+3) - (1/4-1-1) = 16
        assert!((r.value[(0, 0)].re - 16.0).abs() < 1e-10);
    }

    #[test]
    fn integrates_peaked_lorentzian() {
        let eps = 1e-3;
        let mut f = scalar(move |x| eps / (x * x + eps * eps) / std::f64::consts::PI);
        let r = adaptive_gk(&mut f, -100.0, 100.0, 1e-9, 2000).unwrap();
        let exact = 2.0 * (100.0 / eps).atan() / std::f64::consts::PI;
        assert!((r.value[(0, 0)].re - exact).abs() < 1e-8);
    }

    #[test]
    fn reports_segment_exhaustion() {
        let mut f = scalar(|x| if x == 0.0 { 0.0 } else { 1.0 / x.abs().sqrt() });
        let r = adaptive_gk(&mut f, -1.0, 1.0, 1e-14, 8);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

}
