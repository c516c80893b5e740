//! Run configuration: a single JSON document per run. Unknown fields are
//! rejected so a typo cannot silently fall back to a default, and the
//! manifest echoes every resolved value.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use kaclab_core::{
    coulomb, indicator_penalty, BarrierPrimitive, CMat, GaugeForm, GeometryError, MatrixPotential,
    Region, ScalarPotential,
};
use num_complex::Complex64;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Estimate,
    Gap,
    Battery,
    Grid,
    Kato,
    Monotone,
}

/// Region grammar: `{"ball": {...}}`, `{"box": {...}}`, `{"halfspace":
/// {...}}`, `{"all": {...}}`, `{"minus_segment": {...}}`, `{"comb": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum RegionSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Halfspace { normal: Vec<f64>, offset: f64 },
    All { dim: usize },
    /// The plane minus a closed segment.
    MinusSegment { a: [f64; 2], b: [f64; 2] },
    /// Unit square minus `teeth` vertical slits from the bottom edge up to
    /// height 1/2: a locally Lipschitz comb.
    Comb { teeth: usize },
}

impl RegionSpec {
    pub fn build(&self) -> Result<Region, GeometryError> {
        match self {
            RegionSpec::Ball { center, radius } => Region::ball(center, *radius),
            RegionSpec::Box { lo, hi } => Region::rect_box(lo, hi),
            RegionSpec::Halfspace { normal, offset } => Region::halfspace(normal, *offset),
            RegionSpec::All { dim } => Region::all(*dim),
            RegionSpec::MinusSegment { a, b } => Region::all(2)?
                .remove_barrier(BarrierPrimitive::segment(*a, *b)),
            RegionSpec::Comb { teeth } => {
                let mut region = Region::rect_box(&[0.0, 0.0], &[1.0, 1.0])?;
                for i in 1..=*teeth {
                    let x = i as f64 / (*teeth as f64 + 1.0);
                    region = region.remove_barrier(BarrierPrimitive::segment([x, 0.0], [x, 0.5]))?;
                }
                Ok(region)
            }
        }
    }
}

/// Potential grammar: `{"constant": c}`, `{"coulomb": {...}}`,
/// `{"penalty": {...}}`, `{"inverse_power": {...}}`,
/// `{"matrix_constant": [[[re,im],...],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum PotentialSpec {
    Constant(f64),
    Coulomb { z: f64, x0: Vec<f64>, #[serde(default)] cap: Option<f64> },
    Penalty { n: f64 },
    InversePower { p: f64, x0: Vec<f64> },
    MatrixConstant(Vec<Vec<[f64; 2]>>),
}

pub enum BuiltPotential {
    Scalar(ScalarPotential),
    Matrix(MatrixPotential),
}

impl PotentialSpec {
    pub fn build(&self, region: &Region) -> Result<BuiltPotential, CliError> {
        Ok(match self {
            PotentialSpec::Constant(c) => BuiltPotential::Scalar(ScalarPotential::Constant(*c)),
            PotentialSpec::Coulomb { z, x0, cap } => {
                let mut v = coulomb(*z, x0);
                if let Some(c) = cap {
                    v = v.with_cap(*c);
                }
                BuiltPotential::Scalar(v)
            }
            PotentialSpec::Penalty { n } => {
                BuiltPotential::Scalar(indicator_penalty(Arc::new(region.clone()), *n))
            }
            PotentialSpec::InversePower { p, x0 } => {
                BuiltPotential::Scalar(ScalarPotential::inverse_power(*p, x0))
            }
            PotentialSpec::MatrixConstant(rows) => {
                let m: Vec<Vec<Complex64>> = rows
                    .iter()
                    .map(|r| r.iter().map(|c| Complex64::new(c[0], c[1])).collect())
                    .collect();
                let cm = CMat::from_rows(&m)
                    .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
                BuiltPotential::Matrix(MatrixPotential::constant(cm)?)
            }
        })
    }
}

/// Gauge grammar: `{"gauge_linear": {"b": B}}` (uniform field, plane) or
/// `{"gauge_const": {"a": [...]}}` (exact form of a linear function).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum GaugeSpec {
    GaugeLinear { b: f64 },
    GaugeConst { a: Vec<f64> },
}

impl GaugeSpec {
    pub fn build(&self) -> GaugeForm {
        match self {
            GaugeSpec::GaugeLinear { b } => GaugeForm::AxiallyLinear { b: *b },
            GaugeSpec::GaugeConst { a } => GaugeForm::Constant(a.clone()),
        }
    }
}

/// Named field functions the CLI can evaluate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum FieldSpec {
    One,
    /// `prod_i sin(pi x_i)`
    SinPi,
    /// `exp(-Z|x|/2)`
    CoulombGround { z: f64 },
}

impl FieldSpec {
    pub fn build(&self) -> Box<dyn Fn(&[f64]) -> Vec<Complex64> + Sync + Send> {
        match self {
            FieldSpec::One => Box::new(|_| vec![Complex64::ONE]),
            FieldSpec::SinPi => Box::new(|x| {
                let v = x.iter().map(|&xi| (std::f64::consts::PI * xi).sin()).product::<f64>();
                vec![Complex64::new(v, 0.0)]
            }),
            FieldSpec::CoulombGround { z } => {
                let z = *z;
                Box::new(move |x| {
                    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    vec![Complex64::new((-z * r / 2.0).exp(), 0.0)]
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    Dirichlet,
    Penetration,
    Penalized,
    Free,
}

/// Grid sub-config for `grid` and `monotone` runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
    /// Gaussian-bump width for the default data vector.
    #[serde(default = "default_bump_width")]
    pub bump_width: f64,
    #[serde(default)]
    pub export_operator: bool,
    /// Decreasing-family windows `(1/n, 1-1/n)` for `monotone` runs.
    #[serde(default)]
    pub shrink_levels: Vec<u32>,
}

fn default_bump_width() -> f64 {
    0.08
}

/// One run of the laboratory; every optional field has an explicit default
/// echoed into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub gauge: Option<GaugeSpec>,
    #[serde(default)]
    pub f: Option<FieldSpec>,
    #[serde(default)]
    pub estimator: Option<EstimatorName>,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub paths: Option<u64>,
    #[serde(default)]
    pub n_penalty: Vec<f64>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub quadrature_n: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub out: Option<String>,
    /// Override of the calibrated discretization-budget coefficient.
    #[serde(default)]
    pub budget_coeff: Option<f64>,
}

/// The same config with every default resolved; serialized into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    pub resolved_h: f64,
    pub resolved_paths: u64,
    pub resolved_seed: u64,
    pub resolved_out: String,
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::InvalidConfig(e.to_string()))
}

impl RunConfig {
    pub fn resolve(&self, seed_flag: Option<u64>, h_flag: Option<f64>, paths_flag: Option<u64>, out_flag: Option<String>) -> ResolvedConfig {
        ResolvedConfig {
            run: self.clone(),
            resolved_h: h_flag.or(self.h).unwrap_or(1e-3),
            resolved_paths: paths_flag.or(self.paths).unwrap_or(10_000),
            resolved_seed: seed_flag.or(self.master_seed).unwrap_or(0),
            resolved_out: out_flag.or_else(|| self.out.clone()).unwrap_or_else(|| "results".into()),
        }
    }
}
