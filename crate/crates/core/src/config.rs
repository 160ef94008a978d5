//! JSON problem description: explicit dimensions, row-major matrices, synthesis
//! settings and a simulation scenario.
//!
//! Units are whatever the data uses; the satellite benchmark uses mN for thrusts,
//! kg for masses, m for positions and s for time.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::benchmark::{self, Example};
use crate::error::{Error, Result};
use crate::io::{self, matrix_rows, matrix_rows_opt};
use crate::model::{
    assemble_closed_loop, AllocatorWeights, ClosedLoop, ControllerModel, DisturbanceClass, InfluenceModel, PlantModel,
};
use crate::result::Mode;
use crate::sim::{DisturbanceSignal, SaturationSpec};
use crate::synthesis::{LineSearch, SynthesisOptions, TraceBound};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    pub dimensions: Dimensions,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub influence: InfluenceConfig,
    /// Diagonal of `W`.
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceConfig>,
    pub synthesis: SynthesisConfig,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    pub n_p: usize,
    pub n_c: usize,
    /// Virtual control inputs.
    pub m_c: usize,
    /// Physical actuators.
    pub m_a: usize,
    /// Measured outputs.
    pub q: usize,
    #[serde(default)]
    pub n_w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(with = "matrix_rows")]
    pub a_p: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub b_p: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub c_p: DMatrix<f64>,
    #[serde(default, with = "matrix_rows_opt", skip_serializing_if = "Option::is_none")]
    pub b_w: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(with = "matrix_rows")]
    pub a_c: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub b_c: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub c_c: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub d_c: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfluenceConfig {
    #[serde(with = "matrix_rows")]
    pub m_n: DMatrix<f64>,
    /// Uncertainty vertices `M_i`.
    #[serde(default, with = "io::matrix_rows_vec", skip_serializing_if = "Vec::is_empty")]
    pub vertices: Vec<DMatrix<f64>>,
    /// Scalar parameter value at each vertex, allowing `--theta` for two-vertex polytopes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_vertices: Option<[f64; 2]>,
    /// Symmetric bounds `ū`.
    pub u_bar: Vec<f64>,
    /// Offset `ξ` to the physical range (zero when omitted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    /// Kernel basis `N` (an orthonormal basis is computed when omitted).
    #[serde(default, with = "matrix_rows_opt", skip_serializing_if = "Option::is_none")]
    pub kernel_basis: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    #[serde(with = "matrix_rows")]
    pub r: DMatrix<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceBoundConfig {
    Identity,
    /// `sᵀ P_0 s ≤ λ`.
    Selector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearchConfig {
    pub ratio: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub mode: Mode,
    /// Objective weights on `λ`, `γ` and `μ`; a missing third entry is zero.
    pub rho: Vec<f64>,
    #[serde(default = "identity_bound")]
    pub trace_bound: TraceBoundConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_search: Option<LineSearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default)]
    pub state_scaling: bool,
}

fn identity_bound() -> TraceBoundConfig {
    TraceBoundConfig::Identity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalConfig {
    Zero,
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Samples {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub x0: Vec<f64>,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "zero_signal")]
    pub disturbance: SignalConfig,
    /// Parameter values to simulate at (needs `influence.theta_vertices`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta: Vec<f64>,
}

fn zero_signal() -> SignalConfig {
    SignalConfig::Zero
}

fn shape_error(field: &str, m: &DMatrix<f64>, r: usize, c: usize) -> Error {
    Error::Config(format!(
        "field `{field}`: expected {r}x{c} matrix, got {}x{}",
        m.nrows(),
        m.ncols()
    ))
}

/// An empty `[]` stands for an `r × 0` matrix.
fn check_matrix(field: &str, m: &DMatrix<f64>, r: usize, c: usize) -> Result<DMatrix<f64>> {
    if m.shape() == (r, c) {
        Ok(m.clone())
    } else if c == 0 && m.is_empty() {
        Ok(DMatrix::zeros(r, 0))
    } else {
        Err(shape_error(field, m, r, c))
    }
}

fn check_len(field: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::Config(format!(
            "field `{field}`: expected {len} entries, got {}",
            v.len()
        )));
    }
    Ok(DVector::from_column_slice(v))
}

fn field_error(field: &str, e: Error) -> Error {
    Error::Config(format!("field `{field}`: {e}"))
}

impl Config {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let cfg: Config = io::parse_json(text, source)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Config = io::read_json(path)?;
        cfg.validate().map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        Ok(cfg)
    }

    /// Check every shape against `dimensions`.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dimensions;
        if d.m_a <= d.m_c {
            return Err(Error::Config(format!(
                "field `dimensions`: m_a ({}) must exceed m_c ({})",
                d.m_a, d.m_c
            )));
        }
        let n = self.n();
        let p = &self.plant;
        check_matrix("plant.a_p", &p.a_p, d.n_p, d.n_p)?;
        check_matrix("plant.b_p", &p.b_p, d.n_p, d.m_c)?;
        check_matrix("plant.c_p", &p.c_p, d.q, d.n_p)?;
        if let Some(b_w) = &p.b_w {
            check_matrix("plant.b_w", b_w, d.n_p, d.n_w)?;
        } else if d.n_w > 0 {
            return Err(Error::Config("field `plant.b_w`: required when n_w > 0".into()));
        }
        let c = &self.controller;
        check_matrix("controller.a_c", &c.a_c, d.n_c, d.n_c)?;
        check_matrix("controller.b_c", &c.b_c, d.n_c, d.q)?;
        check_matrix("controller.c_c", &c.c_c, d.m_c, d.n_c)?;
        check_matrix("controller.d_c", &c.d_c, d.m_c, d.q)?;
        let inf = &self.influence;
        check_matrix("influence.m_n", &inf.m_n, d.m_c, d.m_a)?;
        for (i, v) in inf.vertices.iter().enumerate() {
            check_matrix(&format!("influence.vertices[{i}]"), v, d.m_c, d.m_a)?;
        }
        if inf.theta_vertices.is_some() && inf.vertices.len() != 2 {
            return Err(Error::Config(
                "field `influence.theta_vertices`: needs exactly two vertices".into(),
            ));
        }
        if let Some([a, b]) = inf.theta_vertices {
            if !(a != b && a.is_finite() && b.is_finite()) {
                return Err(Error::Config(
                    "field `influence.theta_vertices`: values must differ".into(),
                ));
            }
        }
        check_len("influence.u_bar", &inf.u_bar, d.m_a)?;
        if let Some(xi) = &inf.xi {
            check_len("influence.xi", xi, d.m_a)?;
        }
        if let Some(k) = &inf.kernel_basis {
            check_matrix("influence.kernel_basis", k, d.m_a, d.m_a - d.m_c)?;
        }
        check_len("weights", &self.weights, d.m_a)?;
        if let Some(dist) = &self.disturbance {
            check_matrix("disturbance.r", &dist.r, d.n_w, d.n_w)?;
        }
        let s = &self.synthesis;
        if !(2..=3).contains(&s.rho.len()) {
            return Err(Error::Config(format!(
                "field `synthesis.rho`: expected 2 or 3 entries, got {}",
                s.rho.len()
            )));
        }
        if let TraceBoundConfig::Selector(sel) = &s.trace_bound {
            check_len("synthesis.trace_bound.selector", sel, n)?;
        }
        if s.mode == Mode::Disturbed && self.disturbance.is_none() {
            return Err(Error::Config("field `disturbance`: required in disturbed mode".into()));
        }
        if s.mode == Mode::Robust && inf.vertices.is_empty() {
            return Err(Error::Config(
                "field `influence.vertices`: required in robust mode".into(),
            ));
        }
        let sc = &self.scenario;
        check_len("scenario.x0", &sc.x0, n)?;
        if !sc.theta.is_empty() && inf.theta_vertices.is_none() {
            return Err(Error::Config(
                "field `scenario.theta`: needs `influence.theta_vertices`".into(),
            ));
        }
        self.signal().map_err(|e| field_error("scenario.disturbance", e))?;
        self.options()?.validate(n).map_err(|e| field_error("synthesis", e))?;
        self.closed_loop()?;
        Ok(())
    }

    /// Order of the augmented state.
    pub fn n(&self) -> usize {
        let d = &self.dimensions;
        d.n_p + d.n_c + d.m_a - d.m_c
    }

    pub fn closed_loop(&self) -> Result<ClosedLoop> {
        let d = &self.dimensions;
        let p = &self.plant;
        let b_w = match &p.b_w {
            Some(b_w) => check_matrix("plant.b_w", b_w, d.n_p, d.n_w)?,
            None => DMatrix::zeros(d.n_p, 0),
        };
        let plant =
            PlantModel::new(p.a_p.clone(), p.b_p.clone(), p.c_p.clone(), b_w).map_err(|e| field_error("plant", e))?;
        let c = &self.controller;
        let controller = ControllerModel::new(c.a_c.clone(), c.b_c.clone(), c.c_c.clone(), c.d_c.clone())
            .map_err(|e| field_error("controller", e))?;
        let inf = &self.influence;
        let mut influence = InfluenceModel::new(
            inf.m_n.clone(),
            inf.vertices.clone(),
            DVector::from_column_slice(&inf.u_bar),
        )
        .map_err(|e| field_error("influence", e))?;
        if let Some(k) = &inf.kernel_basis {
            influence = influence
                .with_kernel_basis(k.clone())
                .map_err(|e| field_error("influence.kernel_basis", e))?;
        }
        let weights =
            AllocatorWeights::new(DVector::from_column_slice(&self.weights)).map_err(|e| field_error("weights", e))?;
        assemble_closed_loop(&plant, &controller, &influence, &weights)
    }

    pub fn disturbance_class(&self) -> Result<Option<DisturbanceClass>> {
        self.disturbance
            .as_ref()
            .map(|d| DisturbanceClass::new(d.r.clone(), d.sigma).map_err(|e| field_error("disturbance", e)))
            .transpose()
    }

    pub fn options(&self) -> Result<SynthesisOptions> {
        let s = &self.synthesis;
        let mut rho = [0.0; 3];
        rho[..s.rho.len()].copy_from_slice(&s.rho);
        let trace_bound = match &s.trace_bound {
            TraceBoundConfig::Identity => TraceBound::Identity,
            TraceBoundConfig::Selector(v) => TraceBound::Selector(DVector::from_column_slice(v)),
        };
        Ok(SynthesisOptions {
            mode: s.mode,
            rho,
            trace_bound,
            line_search: s.line_search.map(|l| LineSearch {
                ratio: l.ratio,
                max_steps: l.max_steps,
            }),
            eps: s.eps,
            state_scaling: s.state_scaling,
            ..SynthesisOptions::default()
        })
    }

    pub fn saturation(&self) -> Result<SaturationSpec> {
        let u_bar = DVector::from_column_slice(&self.influence.u_bar);
        let xi = match &self.influence.xi {
            Some(xi) => DVector::from_column_slice(xi),
            None => DVector::zeros(u_bar.len()),
        };
        SaturationSpec::new(u_bar, xi).map_err(|e| field_error("influence", e))
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.scenario.x0)
    }

    pub fn signal(&self) -> Result<DisturbanceSignal> {
        let n_w = self.dimensions.n_w;
        let vectors = |values: &[Vec<f64>]| -> Result<Vec<DVector<f64>>> {
            values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    if v.len() != n_w {
                        return Err(Error::Config(format!(
                            "values[{k}]: expected {n_w} entries, got {}",
                            v.len()
                        )));
                    }
                    Ok(DVector::from_column_slice(v))
                })
                .collect()
        };
        match &self.scenario.disturbance {
            SignalConfig::Zero => Ok(DisturbanceSignal::Zero { n_w }),
            SignalConfig::PiecewiseConstant { breakpoints, values } => {
                DisturbanceSignal::piecewise_constant(breakpoints.clone(), vectors(values)?)
            }
            SignalConfig::Samples { times, values } => DisturbanceSignal::samples(times.clone(), vectors(values)?),
        }
    }

    /// Simplex weights for parameter value `theta` of a two-vertex polytope.
    pub fn theta_weights(&self, theta: f64) -> Result<Vec<f64>> {
        let [t0, t1] = self
            .influence
            .theta_vertices
            .ok_or_else(|| Error::Config("field `influence.theta_vertices`: not given".into()))?;
        let a = (t1 - theta) / (t1 - t0);
        if !(-1e-12..=1.0 + 1e-12).contains(&a) {
            return Err(Error::InvalidParameter(format!(
                "theta {theta} outside [{}, {}]",
                t0.min(t1),
                t0.max(t1)
            )));
        }
        let a = a.clamp(0.0, 1.0);
        Ok(vec![a, 1.0 - a])
    }

    /// Embedded satellite benchmark as a config.
    pub fn satellite(example: Example) -> Result<Self> {
        let plant = benchmark::plant(example)?;
        let controller = benchmark::controller()?;
        let influence = benchmark::influence(example)?;
        let sc = benchmark::scenario(example);
        let opts = benchmark::synthesis_options(example);
        let (n_p, n_c) = (plant.n_p(), controller.n_c());
        let (m_c, m_a) = (influence.m_c(), influence.m_a());
        let signal = match &sc.disturbance {
            DisturbanceSignal::Zero { .. } => SignalConfig::Zero,
            DisturbanceSignal::PiecewiseConstant { breakpoints, values } => SignalConfig::PiecewiseConstant {
                breakpoints: breakpoints.clone(),
                values: values.iter().map(|v| v.as_slice().to_vec()).collect(),
            },
            DisturbanceSignal::Samples { times, values } => SignalConfig::Samples {
                times: times.clone(),
                values: values.iter().map(|v| v.as_slice().to_vec()).collect(),
            },
        };
        let robust = example == Example::Robust;
        let cfg = Config {
            name: Some(example.name().into()),
            units: Some("thrust mN, mass kg, position m, time s".into()),
            dimensions: Dimensions {
                n_p,
                n_c,
                m_c,
                m_a,
                q: plant.q(),
                n_w: plant.n_w(),
            },
            plant: PlantConfig {
                a_p: plant.a_p.clone(),
                b_p: plant.b_p.clone(),
                c_p: plant.c_p.clone(),
                b_w: (plant.n_w() > 0).then(|| plant.b_w.clone()),
            },
            controller: ControllerConfig {
                a_c: controller.a_c.clone(),
                b_c: controller.b_c.clone(),
                c_c: controller.c_c.clone(),
                d_c: controller.d_c.clone(),
            },
            influence: InfluenceConfig {
                m_n: influence.m_n.clone(),
                vertices: influence.vertices.clone(),
                theta_vertices: robust.then_some([benchmark::THETA_RANGE.0, benchmark::THETA_RANGE.1]),
                u_bar: influence.u_bar.as_slice().to_vec(),
                xi: Some(benchmark::symmetrizing_offset().as_slice().to_vec()),
                kernel_basis: influence.kernel_basis.clone(),
            },
            weights: benchmark::weights().diag.as_slice().to_vec(),
            disturbance: (!robust).then(|| {
                let d = benchmark::disturbance_class().expect("static disturbance class");
                DisturbanceConfig { r: d.r, sigma: d.sigma }
            }),
            synthesis: SynthesisConfig {
                mode: opts.mode,
                rho: if robust {
                    opts.rho[..2].to_vec()
                } else {
                    opts.rho.to_vec()
                },
                trace_bound: match &opts.trace_bound {
                    TraceBound::Identity => TraceBoundConfig::Identity,
                    TraceBound::Selector(s) => TraceBoundConfig::Selector(s.as_slice().to_vec()),
                },
                line_search: opts.line_search.map(|l| LineSearchConfig {
                    ratio: l.ratio,
                    max_steps: l.max_steps,
                }),
                eps: opts.eps,
                state_scaling: opts.state_scaling,
            },
            scenario: ScenarioConfig {
                x0: sc.x0.as_slice().to_vec(),
                t_final: sc.t_final,
                dt: sc.dt,
                disturbance: signal,
                theta: if robust { vec![0.9, 0.95, 1.0] } else { vec![] },
            },
        };
        debug_assert_eq!(cfg.n(), n_p + n_c + m_a - m_c);
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn satellite_round_trip() {
        for ex in [Example::Disturbed, Example::Robust] {
            let cfg = Config::satellite(ex).unwrap();
            cfg.validate().unwrap();
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            let back = Config::from_json(&text, "mem").unwrap();
            assert_eq!(back, cfg);
            let cl = back.closed_loop().unwrap();
            let reference = benchmark::satellite_closed_loop(ex).unwrap();
            assert_eq!(cl.a, reference.a);
            assert_eq!(cl.c_bar, reference.c_bar);
            assert_eq!(cl.vertices, reference.vertices);
        }
    }

    #[test]
    fn wrong_shape_names_field() {
        let mut cfg = Config::satellite(Example::Disturbed).unwrap();
        cfg.controller.b_c = DMatrix::zeros(3, 1);
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("controller.b_c"), "{msg}");
    }

    #[test]
    fn ragged_matrix_names_field_and_line() {
        let cfg = Config::satellite(Example::Disturbed).unwrap();
        let mut value = serde_json::to_value(&cfg).unwrap();
        value["plant"]["a_p"][1] = serde_json::json!([0.0]);
        let broken = serde_json::to_string_pretty(&value).unwrap();
        let msg = Config::from_json(&broken, "sat.json").unwrap_err().to_string();
        assert!(msg.contains("plant.a_p"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn theta_weights_interpolate() {
        let cfg = Config::satellite(Example::Robust).unwrap();
        assert_eq!(cfg.theta_weights(0.9).unwrap(), vec![1.0, 0.0]);
        assert_eq!(cfg.theta_weights(1.0).unwrap(), vec![0.0, 1.0]);
        assert!(cfg.theta_weights(0.5).is_err());
    }
}
