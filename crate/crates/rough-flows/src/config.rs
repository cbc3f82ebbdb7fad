//! JSON-ingestible run configuration: driver, field and scheme specs plus
//! study parameters. Used by the command-line front end; the builders are
//! plain library calls so configured objects behave exactly like hand-built
//! ones.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::driver::{
    lift_smooth, make_holder_control, piecewise_linear_driver, pure_area_driver, Control,
    RoughDriver, SewingParameters,
};
use crate::error::{Error, Result};
use crate::fields::{linear_field, rotation_field, scalar_trig_field, sine_field, VectorFieldFamily};
use crate::schemes::SchemeSpec;

/// Named smooth paths selectable from a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PathSpec {
    /// `t -> (r cos t, r sin t)`.
    Circle { radius: f64 },
    /// `t -> t v`.
    Line { velocity: Vec<f64> },
}

impl PathSpec {
    pub fn dim(&self) -> usize {
        match self {
            PathSpec::Circle { .. } => 2,
            PathSpec::Line { velocity } => velocity.len(),
        }
    }

    pub fn build(&self) -> impl Fn(f64) -> Vec<f64> + Send + Sync + 'static {
        let spec = self.clone();
        move |t: f64| match &spec {
            PathSpec::Circle { radius } => vec![radius * t.cos(), radius * t.sin()],
            PathSpec::Line { velocity } => velocity.iter().map(|v| v * t).collect(),
        }
    }
}

/// Driver construction spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverSpec {
    Smooth {
        path: PathSpec,
        #[serde(default = "default_substeps")]
        substeps_per_unit: usize,
    },
    PureArea {
        area: Vec<Vec<f64>>,
    },
    PiecewiseLinear {
        vertices: Vec<Vec<f64>>,
    },
}

fn default_substeps() -> usize {
    64
}

/// Field construction spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Linear { matrices: Vec<Vec<Vec<f64>>> },
    Sine { dim: usize },
    ScalarTrig,
    Rotation,
}

/// Full study configuration. Flags of the command-line front end override
/// the corresponding fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub driver: DriverSpec,
    pub field: FieldSpec,
    pub schemes: Vec<SchemeSpec>,
    pub horizon: f64,
    pub p: f64,
    pub gamma: f64,
    #[serde(default)]
    pub delta_coeff: Option<f64>,
    #[serde(default)]
    pub control_scale: Option<f64>,
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub starts: Option<Vec<Vec<f64>>>,
    /// Half-width of the centered probe box and the number of probe points.
    #[serde(default)]
    pub probe_half_width: Option<f64>,
    #[serde(default)]
    pub probe_count: Option<usize>,
    /// Time window for `solve`; defaults to the full horizon.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    #[serde(default)]
    pub tol: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        let _ = params;
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes listed".into()));
        }
        for s in &self.schemes {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some((s, t)) = self.window {
            if !(0.0 <= s && s < t && t <= self.horizon) {
                return Err(Error::Config(format!(
                    "window ({s}, {t}) outside [0, {}]",
                    self.horizon
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SewingParameters> {
        let mut p = SewingParameters::new(self.p, self.gamma, self.horizon)
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(c) = self.delta_coeff {
            p = p.with_delta_coeff(c);
        }
        Ok(p)
    }

    pub fn control(&self) -> Result<Control> {
        make_holder_control(self.control_scale.unwrap_or(1.0))
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_driver(&self) -> Result<RoughDriver> {
        let params = self.params()?;
        let control = self.control()?;
        match &self.driver {
            DriverSpec::Smooth {
                path,
                substeps_per_unit,
            } => {
                let dim = path.dim();
                lift_smooth(path.build(), dim, *substeps_per_unit, params, control)
            }
            DriverSpec::PureArea { area } => pure_area_driver(area, params, control),
            DriverSpec::PiecewiseLinear { vertices } => {
                piecewise_linear_driver(vertices.clone(), params, control)
            }
        }
    }

    pub fn build_field(&self) -> Result<VectorFieldFamily> {
        Ok(match &self.field {
            FieldSpec::Linear { matrices } => {
                let mats: Vec<DMatrix<f64>> = matrices
                    .iter()
                    .map(|m| {
                        let rows = m.len();
                        let cols = m.first().map_or(0, |r| r.len());
                        if rows == 0 || m.iter().any(|r| r.len() != cols) {
                            return Err(Error::Config("ragged matrix".into()));
                        }
                        Ok(DMatrix::from_fn(rows, cols, |i, j| m[i][j]))
                    })
                    .collect::<Result<_>>()?;
                linear_field(mats)?
            }
            FieldSpec::Sine { dim } => sine_field(*dim),
            FieldSpec::ScalarTrig => scalar_trig_field(),
            FieldSpec::Rotation => rotation_field(),
        })
    }

    /// Driver/field compatibility and capability validation.
    pub fn build(&self) -> Result<(RoughDriver, VectorFieldFamily)> {
        let d = self.build_driver()?;
        let v = self.build_field()?;
        if v.driver_dim() != d.dim() {
            return Err(Error::Config(format!(
                "field drives {} channels, driver has {}",
                v.driver_dim(),
                d.dim()
            )));
        }
        Ok((d, v))
    }
}
