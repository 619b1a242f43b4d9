//! Flat experiment configuration.
//!
//! Every key is top level. Unknown keys are rejected so that a typo cannot
//! silently fall back to a default.

use crate::error::{check_dim, Error, Result};
use crate::flow::{default_ode_spec, FlowConstants};
use crate::morse::CheckOptions;
use crate::numerics::ode::OdeSpec;
use crate::numerics::QuadratureSpec;
use crate::projection::DecomposeOptions;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub k_field: String,
    pub seed: u64,
    /// Not part of the config hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,

    pub quad_radial_order: usize,
    pub quad_panel_width: f64,
    pub quad_angular_nodes: usize,
    pub quad_qmc_samples: usize,
    pub quad_tolerance: f64,
    pub quad_max_refinements: usize,

    pub ode_rtol: f64,
    pub ode_atol: f64,
    pub ode_h0: f64,
    pub ode_h_min: f64,
    pub ode_h_max: f64,
    pub ode_max_steps: usize,
    pub ode_t_max: f64,

    pub d0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    pub m: f64,
    pub epsilon: f64,
    pub lambda_cap: f64,
    pub eta: f64,
    pub cpi_tol: f64,

    pub estimate_c4: bool,
    pub probe_x: Vec<f64>,
    pub probe_y: Vec<f64>,
    pub lambda_ladder: Vec<f64>,
    /// Bubble center for `verify-expansion`; empty means the origin.
    pub center: Vec<f64>,

    pub batch_lambda: f64,
    pub batch_alphas: usize,
    pub batch_points: usize,
    pub batch_radius: f64,
    pub batch_refine: bool,

    pub seeds_per_axis: usize,
    pub boundary_samples: usize,
    pub shots: usize,
    /// Negative means "every qualifying point".
    pub a7_k: i64,

    pub decompose_bubbles: usize,
    pub decompose_level: usize,
    pub decompose_max_iterations: usize,
    /// Nodes per reduced axis when sampling a synthetic field onto a grid;
    /// 0 decomposes the synthetic field directly.
    pub decompose_grid_nodes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        let o = default_ode_spec();
        let f = FlowConstants::default();
        let c = CheckOptions::default();
        let d = DecomposeOptions::default();
        ExperimentConfig {
            dim: 7,
            k_field: "single-bump".into(),
            seed: q.seed,
            output_dir: None,
            quad_radial_order: q.radial_order,
            quad_panel_width: q.panel_width,
            quad_angular_nodes: q.angular_nodes,
            quad_qmc_samples: q.qmc_samples,
            quad_tolerance: q.tolerance,
            quad_max_refinements: q.max_refinements,
            ode_rtol: o.rtol,
            ode_atol: o.atol,
            ode_h0: o.h0,
            ode_h_min: o.h_min,
            ode_h_max: o.h_max,
            ode_max_steps: o.max_steps,
            ode_t_max: o.t_max,
            d0: f.d0,
            c1: f.c1,
            c2: f.c2,
            big_m: f.big_m,
            m1: f.m1,
            m2: f.m2,
            m: f.m,
            epsilon: f.epsilon,
            lambda_cap: f.lambda_cap,
            eta: f.eta,
            cpi_tol: f.cpi_tol,
            estimate_c4: false,
            probe_x: Vec::new(),
            probe_y: Vec::new(),
            lambda_ladder: vec![25.0, 50.0, 100.0, 200.0],
            center: Vec::new(),
            batch_lambda: 30.0,
            batch_alphas: 9,
            batch_points: 8,
            batch_radius: 0.6,
            batch_refine: true,
            seeds_per_axis: c.seeds_per_axis,
            boundary_samples: c.boundary_samples,
            shots: c.shots,
            a7_k: -1,
            decompose_bubbles: d.bubbles,
            decompose_level: d.level,
            decompose_max_iterations: d.max_iterations,
            decompose_grid_nodes: 0,
        }
    }
}

/// Flow-constant keys that may also come from a separate `--constants` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    d0: Option<f64>,
    #[serde(rename = "C1")]
    c1: Option<f64>,
    #[serde(rename = "C2")]
    c2: Option<f64>,
    #[serde(rename = "M")]
    big_m: Option<f64>,
    #[serde(rename = "M1")]
    m1: Option<f64>,
    #[serde(rename = "M2")]
    m2: Option<f64>,
    m: Option<f64>,
    epsilon: Option<f64>,
    lambda_cap: Option<f64>,
    eta: Option<f64>,
    cpi_tol: Option<f64>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Overlays the keys present in a flow-constants file.
    pub fn merge_constants(&mut self, text: &str) -> Result<()> {
        let c: ConstantsFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut self.d0, c.d0);
        set(&mut self.c1, c.c1);
        set(&mut self.c2, c.c2);
        set(&mut self.big_m, c.big_m);
        set(&mut self.m1, c.m1);
        set(&mut self.m2, c.m2);
        set(&mut self.m, c.m);
        set(&mut self.epsilon, c.epsilon);
        set(&mut self.lambda_cap, c.lambda_cap);
        set(&mut self.eta, c.eta);
        set(&mut self.cpi_tol, c.cpi_tol);
        Ok(())
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            radial_order: self.quad_radial_order,
            panel_width: self.quad_panel_width,
            angular_nodes: self.quad_angular_nodes,
            qmc_samples: self.quad_qmc_samples,
            tolerance: self.quad_tolerance,
            max_refinements: self.quad_max_refinements,
            seed: self.seed,
        }
    }

    pub fn ode(&self) -> OdeSpec {
        OdeSpec {
            rtol: self.ode_rtol,
            atol: self.ode_atol,
            h0: self.ode_h0,
            h_min: self.ode_h_min,
            h_max: self.ode_h_max,
            max_steps: self.ode_max_steps,
            t_max: self.ode_t_max,
        }
    }

    pub fn flow_constants(&self) -> FlowConstants {
        FlowConstants {
            d0: self.d0,
            c1: self.c1,
            c2: self.c2,
            big_m: self.big_m,
            m1: self.m1,
            m2: self.m2,
            m: self.m,
            epsilon: self.epsilon,
            lambda_cap: self.lambda_cap,
            eta: self.eta,
            cpi_tol: self.cpi_tol,
        }
    }

    pub fn check_options(&self) -> CheckOptions {
        CheckOptions {
            seeds_per_axis: self.seeds_per_axis,
            boundary_samples: self.boundary_samples,
            shots: self.shots,
            a7_k: usize::try_from(self.a7_k).ok(),
            seed: self.seed,
        }
    }

    pub fn decompose_options(&self) -> DecomposeOptions {
        DecomposeOptions {
            bubbles: self.decompose_bubbles,
            quadrature: QuadratureSpec {
                seed: self.seed,
                ..DecomposeOptions::default().quadrature
            },
            level: self.decompose_level,
            max_iterations: self.decompose_max_iterations,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim)?;
        self.quadrature().validate()?;
        self.flow_constants().validate()?;
        let o = self.ode();
        let pos = [
            o.rtol,
            o.atol,
            o.h0,
            o.h_min,
            o.h_max,
            o.t_max,
            self.batch_lambda,
            self.batch_radius,
        ];
        if pos.iter().any(|v| !(*v > 0.0)) || o.max_steps == 0 {
            return Err(Error::InvalidInput(
                "ODE settings and batch scales must be positive".into(),
            ));
        }
        if self.h_order_bad() {
            return Err(Error::InvalidInput(
                "need ode_h_min <= ode_h0 <= ode_h_max".into(),
            ));
        }
        if self
            .lambda_ladder
            .iter()
            .any(|l| !(*l > 0.0 && l.is_finite()))
        {
            return Err(Error::InvalidInput(
                "lambda_ladder entries must be positive".into(),
            ));
        }
        if self.batch_radius >= 1.0 || self.batch_alphas < 2 {
            return Err(Error::InvalidInput(
                "need batch_radius < 1 and batch_alphas >= 2".into(),
            ));
        }
        if self.seeds_per_axis == 0 || self.decompose_bubbles == 0 {
            return Err(Error::InvalidInput(
                "seeds_per_axis and decompose_bubbles must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn h_order_bad(&self) -> bool {
        !(self.ode_h_min <= self.ode_h0 && self.ode_h0 <= self.ode_h_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = ExperimentConfig::from_toml("dim = 6\nk_field = \"two-bump\"\nM = 50.0\n").unwrap();
        assert_eq!(c.dim, 6);
        assert_eq!(c.big_m, 50.0);
        assert_eq!(c.d0, 0.1);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("dimm = 7"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn nested_tables_rejected() {
        assert!(ExperimentConfig::from_toml("[flow]\nd0 = 0.2").is_err());
    }

    #[test]
    fn constants_overlay() {
        let mut c = ExperimentConfig::default();
        c.merge_constants("epsilon = 0.1\nC2 = 50.0").unwrap();
        assert_eq!(c.epsilon, 0.1);
        assert_eq!(c.c2, 50.0);
        assert!(c.merge_constants("dim = 7").is_err());
    }

    #[test]
    fn invalid_values() {
        let c = ExperimentConfig {
            dim: 11,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::DimensionOutOfRange(11))));
        let c = ExperimentConfig {
            epsilon: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
