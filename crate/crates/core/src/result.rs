//! Synthesized (or externally supplied) gains together with their Lyapunov certificate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{matrix_rows, matrix_rows_opt, matrix_rows_vec, vector};
use crate::sdp::{Backend, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Local stability with the energy bound, no disturbance or uncertainty.
    Nominal,
    /// Global stability (`Ḡ = 0`) for open-loop stable plants.
    Global,
    /// Energy-bounded disturbances.
    Disturbed,
    /// Polytopic uncertainty of the influence matrix.
    Robust,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Mode::Nominal),
            "global" => Ok(Mode::Global),
            "disturbed" => Ok(Mode::Disturbed),
            "robust" => Ok(Mode::Robust),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode '{other}' (expected nominal, global, disturbed or robust)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Nominal => "nominal",
            Mode::Global => "global",
            Mode::Disturbed => "disturbed",
            Mode::Robust => "robust",
        })
    }
}

/// Lyapunov certificate in closed-loop coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `P`, or one `P_i` per uncertainty vertex.
    #[serde(with = "matrix_rows_vec")]
    pub p: Vec<DMatrix<f64>>,
    #[serde(with = "matrix_rows")]
    pub g: DMatrix<f64>,
    /// Diagonal of `S`.
    #[serde(with = "vector")]
    pub s: DVector<f64>,
    pub gamma: f64,
    /// Ellipsoid level (disturbed mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Disturbance class parameter the certificate was computed for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Finsler multiplier `J̄` in the coordinates given by `state_scaling`.
    #[serde(default, with = "matrix_rows_opt", skip_serializing_if = "Option::is_none")]
    pub j_bar: Option<DMatrix<f64>>,
    /// Diagonal state scaling `D` (`x = D x̃`) under which `j_bar` was computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_scaling: Option<Vec<f64>>,
}

impl Certificate {
    /// Ellipsoid level `μ` (1 outside disturbed mode).
    pub fn level(&self) -> f64 {
        self.mu.unwrap_or(1.0)
    }

    pub fn s_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<Backend>,
    #[serde(default)]
    pub solve_time: f64,
    #[serde(default)]
    pub iterations: u32,
    /// Smallest constraint eigenvalue after margin.
    #[serde(default)]
    pub worst_residual: f64,
    #[serde(default)]
    pub worst_constraint: String,
    #[serde(default)]
    pub cond_j_bar: f64,
    #[serde(default)]
    pub cond_c_bar_j_f: f64,
    /// `(σ, accepted)` for every line-search step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub line_search: Vec<(f64, bool)>,
    #[serde(default)]
    pub message: String,
}

/// Allocator and anti-windup gains, optionally with their certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub mode: Mode,
    #[serde(with = "matrix_rows")]
    pub k_f: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub e_c: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub e_f: DMatrix<f64>,
    /// Absent for gains from external sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(default)]
    pub objective: f64,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl SynthesisResult {
    /// Gains without certificate.
    pub fn from_gains(mode: Mode, k_f: DMatrix<f64>, e_c: DMatrix<f64>, e_f: DMatrix<f64>) -> Self {
        Self {
            mode,
            k_f,
            e_c,
            e_f,
            certificate: None,
            objective: 0.0,
            diagnostics: Diagnostics::default(),
        }
    }

    /// `E = [E_c; E_f]`.
    pub fn e(&self) -> DMatrix<f64> {
        crate::linalg::block(&[&[&self.e_c], &[&self.e_f]])
    }

    pub fn certificate(&self) -> Result<&Certificate> {
        self.certificate
            .as_ref()
            .ok_or_else(|| Error::MissingField("certificate".into()))
    }

    /// Check the shapes against a closed loop of order `n` with `n_c`, `n_f`, `m_a`.
    pub fn check_dimensions(&self, n: usize, n_c: usize, n_f: usize, m_a: usize) -> Result<()> {
        let check = |name: &str, m: &DMatrix<f64>, r: usize, c: usize| {
            if m.shape() != (r, c) {
                Err(Error::dim(
                    name,
                    format!("{r}x{c}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ))
            } else {
                Ok(())
            }
        };
        check("k_f", &self.k_f, n_f, n_f)?;
        check("e_c", &self.e_c, n_c, m_a)?;
        check("e_f", &self.e_f, n_f, m_a)?;
        if let Some(cert) = &self.certificate {
            for (i, p) in cert.p.iter().enumerate() {
                check(&format!("certificate.p[{i}]"), p, n, n)?;
            }
            check("certificate.g", &cert.g, m_a, n)?;
            if cert.s.len() != m_a {
                return Err(Error::dim("certificate.s", m_a, cert.s.len()));
            }
        }
        Ok(())
    }
}
