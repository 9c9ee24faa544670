//! Scenario ingestion: the JSON description of an operator model, a
//! perturbation line, and optional a.c. grid data, plus seeded random
//! scenario generation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, HermitianMatrix, C64};
use crate::measure::{AcPart, MatrixMeasure};
use crate::perturbation::{OperatorModel, PerturbationFamily};

/// Complex matrices are written as separate real rectangular arrays to keep
/// the format free of complex-literal conventions.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diag {
        diag: Vec<f64>,
    },
    Dense {
        re: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        im: Option<Vec<Vec<f64>>>,
    },
}

impl MatrixSpec {
    pub fn to_cmatrix(&self, rows: usize, cols: usize, field: &str) -> Result<CMatrix> {
        match self {
            MatrixSpec::Diag { diag } => {
                if rows != cols || diag.len() != rows {
                    return Err(Error::Validation(format!(
                        "{field}: diag spec of length {} cannot fill a {rows}x{cols} matrix",
                        diag.len()
                    )));
                }
                Ok(CMatrix::from_real_diag(diag))
            }
            MatrixSpec::Dense { re, im } => {
                let shape_err = |part: &str, r: usize, c: usize| {
                    Error::Validation(format!(
                        "{field}.{part}: row {r} has {c} entries, expected {rows}x{cols}"
                    ))
                };
                if re.len() != rows {
                    return Err(Error::Validation(format!(
                        "{field}.re has {} rows, expected {rows}",
                        re.len()
                    )));
                }
                for (r, row) in re.iter().enumerate() {
                    if row.len() != cols {
                        return Err(shape_err("re", r, row.len()));
                    }
                }
                if let Some(im) = im {
                    if im.len() != rows {
                        return Err(Error::Validation(format!(
                            "{field}.im has {} rows, expected {rows}",
                            im.len()
                        )));
                    }
                    for (r, row) in im.iter().enumerate() {
                        if row.len() != cols {
                            return Err(shape_err("im", r, row.len()));
                        }
                    }
                }
                Ok(CMatrix::from_fn(rows, cols, |i, j| {
                    C64::new(re[i][j], im.as_ref().map(|m| m[i][j]).unwrap_or(0.0))
                }))
            }
        }
    }

    pub fn from_cmatrix(m: &CMatrix) -> Self {
        let re: Vec<Vec<f64>> = (0..m.rows())
            .map(|i| (0..m.cols()).map(|j| m[(i, j)].re).collect())
            .collect();
        let any_im = (0..m.rows()).any(|i| (0..m.cols()).any(|j| m[(i, j)].im != 0.0));
        let im = any_im.then(|| {
            (0..m.rows())
                .map(|i| (0..m.cols()).map(|j| m[(i, j)].im).collect())
                .collect()
        });
        MatrixSpec::Dense { re, im }
    }
}

/// Optional synthetic a.c. grid carried by a scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcSpec {
    pub start: f64,
    pub end: f64,
    pub densities: Vec<MatrixSpec>,
}

/// Per-scenario tolerance overrides; absent fields keep the module defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub ak_rel: Option<f64>,
    pub ak_forms: Option<f64>,
    pub herglotz_rel: Option<f64>,
    pub im_identity: Option<f64>,
    pub residue_abs: Option<f64>,
    pub line_abs: Option<f64>,
    pub homogeneity: Option<f64>,
    pub poisson_bound_slack: Option<f64>,
    pub growth_exponent: Option<f64>,
    pub overlap: Option<f64>,
    pub a2_slack: Option<f64>,
    pub order_symmetry: Option<f64>,
    pub unitarity: Option<f64>,
    pub intertwining: Option<f64>,
    pub op_bound_slack: Option<f64>,
    pub boundary_recovery: Option<f64>,
    pub blowup_rel: Option<f64>,
    pub ac_transform: Option<f64>,
}

/// Check tolerances; the defaults are the acceptance-criteria values.
#[derive(Clone, Debug)]
pub struct ToleranceSet {
    pub ak_rel: f64,
    pub ak_forms: f64,
    pub herglotz_rel: f64,
    pub im_identity: f64,
    pub residue_abs: f64,
    pub line_abs: f64,
    pub homogeneity: f64,
    pub poisson_bound_slack: f64,
    pub growth_exponent: f64,
    pub overlap: f64,
    pub a2_slack: f64,
    pub order_symmetry: f64,
    pub unitarity: f64,
    pub intertwining: f64,
    pub op_bound_slack: f64,
    pub boundary_recovery: f64,
    pub blowup_rel: f64,
    pub ac_transform: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            ak_rel: 1e-9,
            ak_forms: 1e-10,
            herglotz_rel: 1e-12,
            im_identity: 1e-9,
            residue_abs: 1e-6,
            line_abs: 1e-5,
            homogeneity: 1e-10,
            poisson_bound_slack: 1e-8,
            growth_exponent: 2.1,
            overlap: 1e-8,
            a2_slack: 1e-8,
            order_symmetry: 1e-10,
            unitarity: 1e-8,
            intertwining: 1e-8,
            op_bound_slack: 1e-8,
            boundary_recovery: 1e-2,
            blowup_rel: 1e-2,
            ac_transform: 1e-4,
        }
    }
}

impl ToleranceSet {
    /// Apply per-scenario overrides (absolute values win over the scale).
    pub fn with_overrides(mut self, ov: &ToleranceOverrides, scale: f64) -> Self {
        macro_rules! apply {
            ($($f:ident),*) => {$(
                self.$f *= scale;
                if let Some(v) = ov.$f { self.$f = v; }
            )*}
        }
        apply!(
            ak_rel,
            ak_forms,
            herglotz_rel,
            im_identity,
            residue_abs,
            line_abs,
            homogeneity,
            poisson_bound_slack,
            overlap,
            a2_slack,
            order_symmetry,
            unitarity,
            intertwining,
            op_bound_slack,
            boundary_recovery,
            blowup_rel,
            ac_transform
        );
        // the growth exponent is a cap, not a precision knob: never scaled
        if let Some(v) = ov.growth_exponent {
            self.growth_exponent = v;
        }
        self
    }
}

/// A complete verification scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    #[serde(rename = "B")]
    pub b: MatrixSpec,
    #[serde(rename = "Gamma0")]
    pub gamma0: MatrixSpec,
    #[serde(rename = "Gamma")]
    pub gamma: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac: Option<AcSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceOverrides>,
}

impl Scenario {
    /// Parse and fully validate a scenario from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.d > self.n {
            return Err(Error::Validation(format!(
                "need 1 ≤ d ≤ N, got d = {}, N = {}",
                self.d, self.n
            )));
        }
        self.build()?;
        Ok(())
    }

    fn hermitian_field(
        &self,
        spec: &MatrixSpec,
        dim: usize,
        field: &str,
    ) -> Result<HermitianMatrix> {
        let m = spec.to_cmatrix(dim, dim, field)?;
        HermitianMatrix::new(m).map_err(|e| match e {
            Error::NotHermitian {
                max_asymmetry,
                row,
                col,
            } => Error::Validation(format!(
                "{field} is not Hermitian at ({row},{col}): asymmetry {max_asymmetry:.3e}"
            )),
            other => other,
        })
    }

    /// Instantiate the operator model, the perturbation family, and the
    /// optional synthetic a.c. measure.
    pub fn build(&self) -> Result<ScenarioData> {
        let a = self.hermitian_field(&self.a, self.n, "A")?;
        let b = self.b.to_cmatrix(self.n, self.d, "B")?;
        let gamma0 = self.hermitian_field(&self.gamma0, self.d, "Gamma0")?;
        let gamma = self.hermitian_field(&self.gamma, self.d, "Gamma")?;
        let lmin = gamma.eig().values.first().copied().unwrap_or(0.0);
        if lmin <= crate::perturbation::GAMMA_PD_TOL {
            return Err(Error::Validation(format!(
                "Gamma must be positive definite: λ_min = {lmin:.6e}"
            )));
        }
        let model = OperatorModel::new(a, b)?;
        let family = PerturbationFamily::new(model.clone(), gamma0, gamma)?;
        let ac_measure = match &self.ac {
            Some(spec) => {
                if spec.densities.len() < 2 || spec.end <= spec.start {
                    return Err(Error::Validation(
                        "ac: need at least two nodes and end > start".into(),
                    ));
                }
                let densities: Vec<HermitianMatrix> = spec
                    .densities
                    .iter()
                    .enumerate()
                    .map(|(j, ms)| self.hermitian_field(ms, self.d, &format!("ac.densities[{j}]")))
                    .collect::<Result<_>>()?;
                Some(MatrixMeasure::new(
                    self.d,
                    vec![],
                    Some(AcPart {
                        start: spec.start,
                        end: spec.end,
                        densities,
                    }),
                )?)
            }
            None => None,
        };
        Ok(ScenarioData {
            model,
            family,
            ac_measure,
        })
    }

    /// Canonical content digest (sha256 of the canonical JSON encoding).
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Fully-built scenario objects.
pub struct ScenarioData {
    pub model: OperatorModel,
    pub family: PerturbationFamily,
    pub ac_measure: Option<MatrixMeasure>,
}

fn gaussian_pairs(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
    let u2 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
    let r = (-2.0 * u1.ln()).sqrt();
    let th = 2.0 * std::f64::consts::PI * u2;
    (r * th.cos(), r * th.sin())
}

fn random_gue(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| {
        let (x, y) = gaussian_pairs(rng);
        C64::new(x, y)
    });
    HermitianMatrix::new(g.hermitian_part()).expect("GUE symmetrization")
}

/// Reproducible random scenario: GUE-style `A`, complex Gaussian full-rank
/// `B`, GUE-style `Γ₀`, shifted-Wishart `Γ > 0`; cyclicity enforced by
/// bounded resampling.
pub fn random_scenario(d: usize, n: usize, seed: u64) -> Result<Scenario> {
    if d == 0 || d > n || n > 64 {
        return Err(Error::Validation(format!(
            "need 1 ≤ d ≤ N ≤ 64, got d = {d}, N = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const MAX_RETRIES: u32 = 64;
    for _attempt in 0..MAX_RETRIES {
        let a = random_gue(&mut rng, n);
        let b = CMatrix::from_fn(n, d, |_, _| {
            let (x, y) = gaussian_pairs(&mut rng);
            C64::new(x, y)
        });
        let gamma0 = random_gue(&mut rng, d);
        let s = CMatrix::from_fn(d, d, |_, _| {
            let (x, y) = gaussian_pairs(&mut rng);
            C64::new(x, y)
        });
        let wishart = (&s * &s.adjoint()).scale_re(1.0 / d as f64);
        let gamma = HermitianMatrix::new(
            (&wishart + &CMatrix::identity(d).scale_re(0.25)).hermitian_part(),
        )
        .expect("shifted Wishart is Hermitian");
        let model = match OperatorModel::new(a.clone(), b.clone()) {
            Ok(m) => m,
            Err(_) => continue,
        };
        if !model.is_cyclic() {
            continue;
        }
        return Ok(Scenario {
            d,
            n,
            a: MatrixSpec::from_cmatrix(a.matrix()),
            b: MatrixSpec::from_cmatrix(&b),
            gamma0: MatrixSpec::from_cmatrix(gamma0.matrix()),
            gamma: MatrixSpec::from_cmatrix(gamma.matrix()),
            ac: None,
            seed,
            tolerances: None,
        });
    }
    Err(Error::Generation {
        retries: MAX_RETRIES,
        seed,
        context: "could not draw a cyclic model".into(),
    })
}
