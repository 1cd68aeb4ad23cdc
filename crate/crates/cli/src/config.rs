//! Declarative experiment configuration: one TOML file holds the scene, a
//! table of named field presets, and one section per task kind.

use gaugetomo::dtn::{LinkQuadrature, RectObstacle, RectScene};
use gaugetomo::fields::{GaugeFunction, ScalarField, VectorField, C64};
use gaugetomo::scene::{ConvexShape, Scene};
use gaugetomo::Vec2;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scene: Option<SceneSpec>,
    pub rect_scene: Option<RectSceneSpec>,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldSpec>,
    pub trace: Option<TraceTask>,
    pub sinogram: Option<SinogramTask>,
    pub reconstruct: Option<ReconstructTask>,
    pub dtn: Option<DtnTask>,
    pub dtn_compare: Option<DtnCompareTask>,
    pub gauge_check: Option<GaugeCheckTask>,
    pub stability: Option<StabilityTask>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub outer: ShapeSpec,
    #[serde(default)]
    pub obstacles: Vec<ShapeSpec>,
    pub tangency_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Circle { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSceneSpec {
    pub width: f64,
    pub height: f64,
    pub h: f64,
    #[serde(default)]
    pub obstacles: Vec<RectSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// One named preset; the preset decides whether the name denotes a scalar
/// potential, a vector potential, or a gauge function.
#[derive(Debug, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    // scalar potentials
    Constant { value: ComplexSpec },
    Gaussian { center: [f64; 2], width: f64, amplitude: ComplexSpec },
    GridCsv { csv: String },
    // vector potentials
    Zero {},
    Uniform { a: [f64; 2] },
    UniformB { b: f64 },
    AbFlux { center: [f64; 2], alpha: f64 },
    // gauge functions
    Bump { center: [f64; 2], radius: f64, amplitude: f64 },
    Quadratic {
        #[serde(default)]
        xx: f64,
        #[serde(default)]
        xy: f64,
        #[serde(default)]
        yy: f64,
        #[serde(default)]
        x: f64,
        #[serde(default)]
        y: f64,
        #[serde(default)]
        c: f64,
    },
}

/// A real number or an [re, im] pair.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexSpec {
    fn to_c64(&self) -> C64 {
        match self {
            ComplexSpec::Real(re) => C64::new(*re, 0.0),
            ComplexSpec::Pair([re, im]) => C64::new(*re, *im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceTask {
    pub s0: f64,
    /// Launch direction angle from the positive x-axis, radians.
    pub angle: f64,
    #[serde(default = "default_max_reflections")]
    pub max_reflections: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinogramTask {
    pub field: String,
    pub kind: SinogramKindSpec,
    pub ns: usize,
    pub ntheta: usize,
    /// Direction sector; defaults to the full circle [0, 2 pi).
    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
    #[serde(default = "default_max_reflections")]
    pub max_reflections: usize,
    /// Optional gauge preset applied to the vector field before sampling.
    pub gauge: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinogramKindSpec {
    ScalarIntegral,
    MagneticPhase,
    PhaseFactor,
}

impl SinogramKindSpec {
    pub fn to_kind(self) -> gaugetomo::brt::SinogramKind {
        match self {
            SinogramKindSpec::ScalarIntegral => gaugetomo::brt::SinogramKind::ScalarIntegral,
            SinogramKindSpec::MagneticPhase => gaugetomo::brt::SinogramKind::MagneticPhase,
            SinogramKindSpec::PhaseFactor => gaugetomo::brt::SinogramKind::PhaseFactor,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructTask {
    /// Truth scalar field: forward data is generated from it and the report
    /// carries the reconstruction error against it.
    pub truth: String,
    pub ns: usize,
    pub ntheta: usize,
    #[serde(default = "default_max_reflections")]
    pub max_reflections: usize,
    pub nx: usize,
    pub ny: usize,
    pub lambda: f64,
    #[serde(default)]
    pub straight_only: bool,
    #[serde(default = "default_min_coverage")]
    pub min_coverage: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtnTask {
    pub a: Option<String>,
    pub v: Option<String>,
    pub k2: ComplexSpec,
    #[serde(default = "default_links")]
    pub links: LinkSpec,
    pub gauge: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkSpec {
    Analytic,
    Midpoint,
}

impl LinkSpec {
    pub fn to_rule(self) -> LinkQuadrature {
        match self {
            LinkSpec::Analytic => LinkQuadrature::Analytic,
            LinkSpec::Midpoint => LinkQuadrature::Midpoint,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtnSideSpec {
    pub a: Option<String>,
    pub v: Option<String>,
    pub gauge: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtnCompareTask {
    pub first: DtnSideSpec,
    pub second: DtnSideSpec,
    pub k2: ComplexSpec,
    #[serde(default = "default_links")]
    pub links: LinkSpec,
    pub tol: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeCheckTask {
    pub a1: String,
    pub a2: String,
    pub ns: usize,
    pub ntheta: usize,
    #[serde(default = "default_max_reflections")]
    pub max_reflections: usize,
    #[serde(default = "default_gauge_tol")]
    pub tol: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityTask {
    /// Explicit phantom name; mutually exclusive with n_phantoms.
    pub truth: Option<String>,
    /// Size of the random Gaussian phantom family (seeded by --seed).
    pub n_phantoms: Option<usize>,
    pub ns: usize,
    pub ntheta: usize,
    #[serde(default = "default_max_reflections")]
    pub max_reflections: usize,
    pub nx: usize,
    pub ny: usize,
}

fn default_max_reflections() -> usize {
    gaugetomo::tracer::DEFAULT_MAX_REFLECTIONS
}

fn default_min_coverage() -> u32 {
    4
}

fn default_links() -> LinkSpec {
    LinkSpec::Analytic
}

fn default_gauge_tol() -> f64 {
    gaugetomo::fields::DEFAULT_GAUGE_TOL
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn smooth_scene(&self) -> Result<Scene, CliError> {
        let spec = self
            .scene
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [scene] (this task needs a smooth scene)".into()))?;
        let outer = build_shape(&spec.outer);
        let obstacles = spec.obstacles.iter().map(build_shape).collect();
        let mut scene = Scene::new(outer, obstacles);
        if let Some(tol) = spec.tangency_tol {
            scene.tangency_tol = tol;
        }
        let violations = scene.validate();
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(CliError::Config(format!("scene: {}", list.join("; "))));
        }
        Ok(scene)
    }

    pub fn rect_scene(&self) -> Result<RectScene, CliError> {
        let spec = self.rect_scene.as_ref().ok_or_else(|| {
            CliError::Config("missing [rect_scene] (this task needs a rectilinear scene)".into())
        })?;
        let obstacles = spec
            .obstacles
            .iter()
            .map(|r| RectObstacle { x0: r.x0, y0: r.y0, x1: r.x1, y1: r.y1 })
            .collect();
        RectScene::new(spec.width, spec.height, spec.h, obstacles)
            .map_err(|e| CliError::Config(format!("rect_scene: {e}")))
    }

    fn field_spec(&self, name: &str) -> Result<&FieldSpec, CliError> {
        self.fields
            .get(name)
            .ok_or_else(|| CliError::Config(format!("fields.{name} is not defined")))
    }

    pub fn scalar(&self, name: &str, config_dir: &Path) -> Result<ScalarField, CliError> {
        match self.field_spec(name)? {
            FieldSpec::Constant { value } => Ok(ScalarField::Constant(value.to_c64())),
            FieldSpec::Gaussian { center, width, amplitude } => Ok(ScalarField::Gaussian {
                center: Vec2::new(center[0], center[1]),
                width: *width,
                amplitude: amplitude.to_c64(),
            }),
            FieldSpec::GridCsv { csv } => {
                let path = config_dir.join(csv);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(format!("fields.{name}: cannot read {}: {e}", path.display()))
                })?;
                let grid = gaugetomo::fields::GridField::from_csv(&text)
                    .map_err(|e| CliError::Config(format!("fields.{name}: {e}")))?;
                Ok(ScalarField::Grid(grid))
            }
            _ => Err(CliError::Config(format!(
                "fields.{name} is not a scalar potential preset"
            ))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<VectorField, CliError> {
        match self.field_spec(name)? {
            FieldSpec::Zero {} => Ok(VectorField::Zero),
            FieldSpec::Uniform { a } => Ok(VectorField::Constant(Vec2::new(a[0], a[1]))),
            FieldSpec::UniformB { b } => Ok(VectorField::UniformB(*b)),
            FieldSpec::AbFlux { center, alpha } => Ok(VectorField::AbFlux {
                center: Vec2::new(center[0], center[1]),
                alpha: *alpha,
            }),
            _ => Err(CliError::Config(format!(
                "fields.{name} is not a vector potential preset"
            ))),
        }
    }

    pub fn gauge(&self, name: &str) -> Result<GaugeFunction, CliError> {
        match self.field_spec(name)? {
            FieldSpec::Bump { center, radius, amplitude } => Ok(GaugeFunction::Bump {
                center: Vec2::new(center[0], center[1]),
                radius: *radius,
                amplitude: *amplitude,
            }),
            FieldSpec::Quadratic { xx, xy, yy, x, y, c } => Ok(GaugeFunction::Quadratic {
                xx: *xx,
                xy: *xy,
                yy: *yy,
                x: *x,
                y: *y,
                c: *c,
            }),
            FieldSpec::Constant { value } => Ok(GaugeFunction::Constant(value.to_c64().re)),
            _ => Err(CliError::Config(format!(
                "fields.{name} is not a gauge-function preset"
            ))),
        }
    }

    /// Vector potential with an optional gauge applied.
    pub fn vector_gauged(&self, name: &str, gauge: &Option<String>) -> Result<VectorField, CliError> {
        let base = self.vector(name)?;
        match gauge {
            None => Ok(base),
            Some(g) => Ok(gaugetomo::fields::apply_gauge(&base, &self.gauge(g)?)),
        }
    }
}

fn build_shape(spec: &ShapeSpec) -> ConvexShape {
    match spec {
        ShapeSpec::Circle { center, radius } => {
            ConvexShape::circle(Vec2::new(center[0], center[1]), *radius)
        }
        ShapeSpec::Polygon { vertices } => {
            ConvexShape::polygon(vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect())
        }
    }
}
