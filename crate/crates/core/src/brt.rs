//! Forward broken-ray transforms and bulk sinogram generation.
//!
//! A sinogram row is indexed by (s, theta): the arclength of the ray's
//! endpoint on the outer boundary and the direction of travel *at* that
//! endpoint. Data generation launches the reversed ray (direction -theta,
//! inward) from s and reverses it, so the tabulation matches the endpoint
//! convention exactly.

use crate::fields::{ScalarField, VectorField, C64};
use crate::quad::segment_scalar;
use crate::scene::Scene;
use crate::tracer::{reverse, trace, BrokenRay, TraceError, TraceOutcome};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Simpson panel width for leg integrals, as a fraction of the scene
/// diameter. Panels of 0.005 x diameter keep smooth-field leg integrals
/// below 1e-8 absolute error.
pub const DEFAULT_QUAD_STEP_FACTOR: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinogramKind {
    ScalarIntegral,
    MagneticPhase,
    PhaseFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOutcome {
    Ok,
    Trapped,
    Grazing,
}

impl RowOutcome {
    fn as_str(self) -> &'static str {
        match self {
            RowOutcome::Ok => "ok",
            RowOutcome::Trapped => "trapped",
            RowOutcome::Grazing => "grazing",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(RowOutcome::Ok),
            "trapped" => Some(RowOutcome::Trapped),
            "grazing" => Some(RowOutcome::Grazing),
            _ => None,
        }
    }
}

/// Uniform sampling grid over arclength x direction angle.
/// s_i = i * l0 / ns, theta_j = theta_min + j * (theta_max - theta_min) / ntheta,
/// both half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub ns: usize,
    pub ntheta: usize,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl SamplingSpec {
    pub fn full_circle(ns: usize, ntheta: usize) -> Self {
        SamplingSpec {
            ns,
            ntheta,
            theta_min: 0.0,
            theta_max: std::f64::consts::TAU,
        }
    }

    pub fn theta_step(&self) -> f64 {
        (self.theta_max - self.theta_min) / self.ntheta as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinogramRow {
    pub s: f64,
    pub theta: f64,
    /// Transform value; absent for trapped/grazing rows.
    pub value: Option<C64>,
    pub n_reflections: u32,
    pub total_length: f64,
    pub outcome: RowOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub kind: SinogramKind,
    pub spec: SamplingSpec,
    /// Perimeter of the outer boundary.
    pub l0: f64,
    pub max_reflections: usize,
    pub quad_step: f64,
    pub scene_hash: u64,
    /// Row-major over (s index, theta index).
    pub rows: Vec<SinogramRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SinogramMeta {
    pub kind: SinogramKind,
    pub sampling: SamplingSpec,
    pub l0: f64,
    pub max_reflections: usize,
    pub quad_step: f64,
    pub scene_hash: u64,
    pub trapped_fraction: f64,
    pub grazing_fraction: f64,
}

#[derive(Debug, Error)]
pub enum BrtError {
    #[error("sampling spec must have ns, ntheta >= 2 (got {0} x {1})")]
    BadSamplingSpec(usize, usize),
    #[error("scene is invalid: {0}")]
    InvalidScene(String),
    #[error("sinogram kind {kind:?} needs a {expected} field")]
    KindFieldMismatch { kind: SinogramKind, expected: &'static str },
    #[error("sampling specs differ: {0:?} vs {1:?}")]
    SpecMismatch(SamplingSpec, SamplingSpec),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Integral of V over the broken ray with respect to arclength,
/// leg by leg with composite Simpson panels of width <= max_step.
pub fn integrate_scalar(ray: &BrokenRay, v: &ScalarField, max_step: f64) -> C64 {
    ray.legs
        .iter()
        .map(|leg| segment_scalar(leg.start, leg.end, max_step, |p| v.eval(p)))
        .sum()
}

/// Work integral of A along the broken ray: exact leg integrals for presets
/// with closed forms, composite Simpson otherwise. Real-valued for real A;
/// the imaginary part is discarded.
pub fn magnetic_phase(ray: &BrokenRay, a: &VectorField, max_step: f64) -> f64 {
    ray.legs
        .iter()
        .map(|leg| crate::fields::line_integral(a, leg.start, leg.end, max_step))
        .sum::<Complex64>()
        .re
}

/// exp(i * magnetic_phase); unit modulus by construction.
pub fn phase_factor(ray: &BrokenRay, a: &VectorField, max_step: f64) -> C64 {
    C64::new(0.0, magnetic_phase(ray, a, max_step)).exp()
}

/// Which potential a sinogram samples.
#[derive(Debug, Clone, Copy)]
pub enum FieldRef<'a> {
    Scalar(&'a ScalarField),
    Vector(&'a VectorField),
}

/// Trace every (s, theta) sample and tabulate the requested transform.
/// Row order is row-major in (s index, theta index) and deterministic.
pub fn generate_sinogram(
    scene: &Scene,
    field: FieldRef<'_>,
    kind: SinogramKind,
    spec: &SamplingSpec,
    max_reflections: usize,
) -> Result<Sinogram, BrtError> {
    if spec.ns < 2 || spec.ntheta < 2 {
        return Err(BrtError::BadSamplingSpec(spec.ns, spec.ntheta));
    }
    let violations = scene.validate();
    if !violations.is_empty() {
        return Err(BrtError::InvalidScene(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    match (kind, field) {
        (SinogramKind::ScalarIntegral, FieldRef::Vector(_)) => {
            return Err(BrtError::KindFieldMismatch { kind, expected: "scalar" })
        }
        (SinogramKind::MagneticPhase | SinogramKind::PhaseFactor, FieldRef::Scalar(_)) => {
            return Err(BrtError::KindFieldMismatch { kind, expected: "vector" })
        }
        _ => {}
    }

    let l0 = scene.outer.perimeter();
    let max_step = DEFAULT_QUAD_STEP_FACTOR * scene.diameter();
    let indices: Vec<(usize, usize)> = (0..spec.ns)
        .flat_map(|i| (0..spec.ntheta).map(move |j| (i, j)))
        .collect();

    let rows: Vec<SinogramRow> = indices
        .par_iter()
        .map(|&(i, j)| {
            let s = i as f64 * l0 / spec.ns as f64;
            let theta = spec.theta_min + j as f64 * spec.theta_step();
            sample_row(scene, field, kind, s, theta, max_reflections, max_step)
        })
        .collect();

    Ok(Sinogram {
        kind,
        spec: *spec,
        l0,
        max_reflections,
        quad_step: max_step,
        scene_hash: scene_hash(scene),
        rows,
    })
}

fn sample_row(
    scene: &Scene,
    field: FieldRef<'_>,
    kind: SinogramKind,
    s: f64,
    theta: f64,
    max_reflections: usize,
    max_step: f64,
) -> SinogramRow {
    let theta_dir = crate::geom::Vec2::from_angle(theta);
    let (_, inward, _) = scene.boundary_point(0, s).expect("outer boundary exists");
    // The ray must arrive at (s, theta), so it is traced inward along -theta.
    // Directions that do not point into the domain have no ray; they are
    // flagged grazing and excluded, like tangential reflections.
    if inward.dot(-theta_dir) <= scene.tangency_tol {
        return SinogramRow {
            s,
            theta,
            value: None,
            n_reflections: 0,
            total_length: 0.0,
            outcome: RowOutcome::Grazing,
        };
    }
    match trace(scene, s, -theta_dir, max_reflections) {
        Ok(TraceOutcome::Ray(back)) => {
            let ray = reverse(&back);
            let value = match (kind, field) {
                (SinogramKind::ScalarIntegral, FieldRef::Scalar(v)) => {
                    integrate_scalar(&ray, v, max_step)
                }
                (SinogramKind::MagneticPhase, FieldRef::Vector(a)) => {
                    C64::new(magnetic_phase(&ray, a, max_step), 0.0)
                }
                (SinogramKind::PhaseFactor, FieldRef::Vector(a)) => {
                    phase_factor(&ray, a, max_step)
                }
                _ => unreachable!("kind/field checked by generate_sinogram"),
            };
            SinogramRow {
                s,
                theta,
                value: Some(value),
                n_reflections: ray.n_reflections() as u32,
                total_length: ray.total_length,
                outcome: RowOutcome::Ok,
            }
        }
        Ok(TraceOutcome::Trapped { reflections }) => SinogramRow {
            s,
            theta,
            value: None,
            n_reflections: reflections as u32,
            total_length: 0.0,
            outcome: RowOutcome::Trapped,
        },
        Ok(TraceOutcome::Grazing { .. }) | Err(_) => SinogramRow {
            s,
            theta,
            value: None,
            n_reflections: 0,
            total_length: 0.0,
            outcome: RowOutcome::Grazing,
        },
    }
}

/// FNV-1a over the serialized scene; identifies which geometry produced a file.
pub fn scene_hash(scene: &Scene) -> u64 {
    let text = serde_json::to_string(scene).expect("scene serializes");
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Gap metrics between two sinograms over rows where both outcomes are ok.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataDistance {
    pub max_abs: f64,
    pub l2_mean: f64,
    pub outcome_mismatches: usize,
    pub compared_rows: usize,
    /// (s, theta) of the row attaining max_abs.
    pub witness: Option<(f64, f64)>,
}

pub fn data_distance(w1: &Sinogram, w2: &Sinogram) -> Result<DataDistance, BrtError> {
    if w1.spec != w2.spec {
        return Err(BrtError::SpecMismatch(w1.spec, w2.spec));
    }
    let mut max_abs = 0.0_f64;
    let mut sum_sq = 0.0_f64;
    let mut compared = 0usize;
    let mut mismatches = 0usize;
    let mut witness = None;
    for (r1, r2) in w1.rows.iter().zip(w2.rows.iter()) {
        if r1.outcome != r2.outcome {
            mismatches += 1;
            continue;
        }
        if let (Some(v1), Some(v2)) = (r1.value, r2.value) {
            let gap = (v1 - v2).norm();
            if gap > max_abs {
                max_abs = gap;
                witness = Some((r1.s, r1.theta));
            }
            sum_sq += gap * gap;
            compared += 1;
        }
    }
    Ok(DataDistance {
        max_abs,
        l2_mean: if compared > 0 { (sum_sq / compared as f64).sqrt() } else { 0.0 },
        outcome_mismatches: mismatches,
        compared_rows: compared,
        witness,
    })
}

impl Sinogram {
    pub fn trapped_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.outcome == RowOutcome::Trapped).count() as f64
            / self.rows.len() as f64
    }

    pub fn grazing_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.outcome == RowOutcome::Grazing).count() as f64
            / self.rows.len() as f64
    }

    pub fn meta(&self) -> SinogramMeta {
        SinogramMeta {
            kind: self.kind,
            sampling: self.spec,
            l0: self.l0,
            max_reflections: self.max_reflections,
            quad_step: self.quad_step,
            scene_hash: self.scene_hash,
            trapped_fraction: self.trapped_fraction(),
            grazing_fraction: self.grazing_fraction(),
        }
    }

    pub fn row(&self, i: usize, j: usize) -> &SinogramRow {
        &self.rows[i * self.spec.ntheta + j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,theta,value_re,value_im,n_reflections,total_length,outcome\n");
        for r in &self.rows {
            let (re, im) = match r.value {
                Some(v) => (v.re.to_string(), v.im.to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.s,
                r.theta,
                re,
                im,
                r.n_reflections,
                r.total_length,
                r.outcome.as_str()
            ));
        }
        out
    }

    /// Write the CSV plus a `<path>.meta.json` sidecar.
    pub fn write(&self, path: &Path) -> Result<(), BrtError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())?;
        let meta_path = sidecar_path(path);
        let meta = serde_json::to_string_pretty(&self.meta())?;
        std::fs::write(meta_path, meta)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Sinogram, BrtError> {
        let csv = std::fs::read_to_string(path)?;
        let meta_text = std::fs::read_to_string(sidecar_path(path))?;
        let meta: SinogramMeta = serde_json::from_str(&meta_text)?;
        Sinogram::from_csv(&csv, &meta)
    }

    pub fn from_csv(csv: &str, meta: &SinogramMeta) -> Result<Sinogram, BrtError> {
        let mut rows = Vec::new();
        for (lineno, line) in csv.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(BrtError::Csv(format!("line {}: expected 7 columns", lineno + 1)));
            }
            let num = |s: &str| -> Result<f64, BrtError> {
                s.parse().map_err(|_| BrtError::Csv(format!("line {}: bad number {s:?}", lineno + 1)))
            };
            let value = if cols[2].is_empty() {
                None
            } else {
                Some(C64::new(num(cols[2])?, num(cols[3])?))
            };
            let outcome = RowOutcome::parse(cols[6].trim())
                .ok_or_else(|| BrtError::Csv(format!("line {}: bad outcome {:?}", lineno + 1, cols[6])))?;
            rows.push(SinogramRow {
                s: num(cols[0])?,
                theta: num(cols[1])?,
                value,
                n_reflections: num(cols[4])? as u32,
                total_length: num(cols[5])?,
                outcome,
            });
        }
        if rows.len() != meta.sampling.ns * meta.sampling.ntheta {
            return Err(BrtError::Csv(format!(
                "row count {} does not match sampling {}x{}",
                rows.len(),
                meta.sampling.ns,
                meta.sampling.ntheta
            )));
        }
        Ok(Sinogram {
            kind: meta.kind,
            spec: meta.sampling,
            l0: meta.l0,
            max_reflections: meta.max_reflections,
            quad_step: meta.quad_step,
            scene_hash: meta.scene_hash,
            rows,
        })
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}
