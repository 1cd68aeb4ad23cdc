//! Scalar and vector potentials, gauge functions, curvature, holonomy, and
//! the gauge-equivalence decision.
//!
//! Vector potentials A and A' are considered equivalent when A' = A + grad(phi)
//! for a real phi whose phase factor exp(i*phi) is 1 on the outer boundary.
//! On a multi-connected domain that splits into three computable checks:
//! matching curvature, obstacle holonomies in 2*pi*Z, and a vanishing
//! boundary trace (mod 2*pi) of the path-integrated witness.

use crate::geom::Vec2;
use crate::quad::{polyline_work, segment_scalar};
use crate::scene::{ConvexShape, Scene};
use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

/// Arclength quadrature step for path and loop integrals, as a fraction of
/// the scene diameter.
pub const PATH_STEP_FACTOR: f64 = 1e-3;

/// Default tolerance for the gauge-equivalence checks.
pub const DEFAULT_GAUGE_TOL: f64 = 1e-6;

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("finite-difference stencil at {0:?} leaves the domain")]
    StencilOutsideDomain(Vec2),
    #[error("loop leaves the domain near {0:?}")]
    LoopOutsideDomain(Vec2),
    #[error("loop must wind once counterclockwise around exactly one obstacle; windings {0:?}")]
    BadLoopWinding(Vec<i32>),
    #[error("could not route a path around the obstacles (from {from:?} to {to:?})")]
    PathBlocked { from: Vec2, to: Vec2 },
    #[error("grid field: {0}")]
    Grid(String),
}

// ---------------------------------------------------------------------------
// Grid-sampled fields
// ---------------------------------------------------------------------------

/// Complex values on a uniform node grid, evaluated by bilinear interpolation.
/// Evaluation at a node reproduces the node value exactly; points outside the
/// grid clamp to the nearest edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub origin: Vec2,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major: values[j * nx + i] at origin + (i*dx, j*dy).
    pub values: Vec<C64>,
}

impl GridField {
    pub fn new(origin: Vec2, dx: f64, dy: f64, nx: usize, ny: usize, values: Vec<C64>) -> Result<Self, FieldError> {
        if nx < 2 || ny < 2 {
            return Err(FieldError::Grid(format!("grid needs at least 2x2 nodes, got {nx}x{ny}")));
        }
        if values.len() != nx * ny {
            return Err(FieldError::Grid(format!(
                "expected {} values for a {nx}x{ny} grid, got {}",
                nx * ny,
                values.len()
            )));
        }
        Ok(GridField { origin, dx, dy, nx, ny, values })
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 * self.dx, j as f64 * self.dy)
    }

    pub fn eval(&self, p: Vec2) -> C64 {
        let fx = ((p.x - self.origin.x) / self.dx).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((p.y - self.origin.y) / self.dy).clamp(0.0, (self.ny - 1) as f64);
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let v = |i: usize, j: usize| self.values[j * self.nx + i];
        v(i, j) * ((1.0 - tx) * (1.0 - ty))
            + v(i + 1, j) * (tx * (1.0 - ty))
            + v(i, j + 1) * ((1.0 - tx) * ty)
            + v(i + 1, j + 1) * (tx * ty)
    }

    /// Parse `x,y,value[,value_im]` rows (header optional) into a uniform grid.
    pub fn from_csv(text: &str) -> Result<Self, FieldError> {
        let mut points: Vec<(f64, f64, C64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if lineno == 0 && cols[0].parse::<f64>().is_err() {
                continue; // header row
            }
            if cols.len() < 3 {
                return Err(FieldError::Grid(format!("line {}: expected x,y,value", lineno + 1)));
            }
            let parse = |s: &str| -> Result<f64, FieldError> {
                s.parse().map_err(|_| FieldError::Grid(format!("line {}: bad number {s:?}", lineno + 1)))
            };
            let x = parse(cols[0])?;
            let y = parse(cols[1])?;
            let re = parse(cols[2])?;
            let im = if cols.len() > 3 { parse(cols[3])? } else { 0.0 };
            points.push((x, y, C64::new(re, im)));
        }
        let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        ys.sort_by(f64::total_cmp);
        ys.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let (nx, ny) = (xs.len(), ys.len());
        if nx < 2 || ny < 2 || points.len() != nx * ny {
            return Err(FieldError::Grid(format!(
                "points do not form a full grid: {} points, {}x{} coordinates",
                points.len(),
                nx,
                ny
            )));
        }
        let dx = (xs[nx - 1] - xs[0]) / (nx - 1) as f64;
        let dy = (ys[ny - 1] - ys[0]) / (ny - 1) as f64;
        for (k, &x) in xs.iter().enumerate() {
            if (x - (xs[0] + k as f64 * dx)).abs() > 1e-9 * dx.abs().max(1.0) {
                return Err(FieldError::Grid("x coordinates are not uniformly spaced".into()));
            }
        }
        for (k, &y) in ys.iter().enumerate() {
            if (y - (ys[0] + k as f64 * dy)).abs() > 1e-9 * dy.abs().max(1.0) {
                return Err(FieldError::Grid("y coordinates are not uniformly spaced".into()));
            }
        }
        let mut values = vec![C64::new(0.0, 0.0); nx * ny];
        let mut seen = vec![false; nx * ny];
        for (x, y, v) in points {
            let i = ((x - xs[0]) / dx).round() as usize;
            let j = ((y - ys[0]) / dy).round() as usize;
            values[j * nx + i] = v;
            seen[j * nx + i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(FieldError::Grid("grid has missing nodes".into()));
        }
        GridField::new(Vec2::new(xs[0], ys[0]), dx, dy, nx, ny, values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value,value_im\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let p = self.node(i, j);
                let v = self.values[j * self.nx + i];
                out.push_str(&format!("{},{},{},{}\n", p.x, p.y, v.re, v.im));
            }
        }
        out
    }

    fn conjugate(&self) -> GridField {
        GridField {
            values: self.values.iter().map(|v| v.conj()).collect(),
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// Scalar potential
// ---------------------------------------------------------------------------

/// The scalar potential V (also the tomography unknown f), evaluated pointwise.
#[derive(Debug, Clone)]
pub enum ScalarField {
    Constant(C64),
    /// amplitude * exp(-|x - center|^2 / (2 width^2))
    Gaussian { center: Vec2, width: f64, amplitude: C64 },
    Grid(GridField),
    Sum(Box<ScalarField>, Box<ScalarField>),
    Scaled(C64, Box<ScalarField>),
}

impl ScalarField {
    pub fn zero() -> Self {
        ScalarField::Constant(C64::new(0.0, 0.0))
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::Constant(C64::new(c, 0.0))
    }

    pub fn eval(&self, p: Vec2) -> C64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Gaussian { center, width, amplitude } => {
                *amplitude * (-(p - *center).norm_sq() / (2.0 * width * width)).exp()
            }
            ScalarField::Grid(g) => g.eval(p),
            ScalarField::Sum(a, b) => a.eval(p) + b.eval(p),
            ScalarField::Scaled(c, f) => *c * f.eval(p),
        }
    }

    pub fn conjugate(&self) -> ScalarField {
        match self {
            ScalarField::Constant(c) => ScalarField::Constant(c.conj()),
            ScalarField::Gaussian { center, width, amplitude } => ScalarField::Gaussian {
                center: *center,
                width: *width,
                amplitude: amplitude.conj(),
            },
            ScalarField::Grid(g) => ScalarField::Grid(g.conjugate()),
            ScalarField::Sum(a, b) => {
                ScalarField::Sum(Box::new(a.conjugate()), Box::new(b.conjugate()))
            }
            ScalarField::Scaled(c, f) => ScalarField::Scaled(c.conj(), Box::new(f.conjugate())),
        }
    }
}

// ---------------------------------------------------------------------------
// Gauge functions
// ---------------------------------------------------------------------------

/// A real gauge function phi with an evaluable gradient; the gauge factor is
/// exp(i*phi), which has unit modulus.
#[derive(Debug, Clone)]
pub enum GaugeFunction {
    Constant(f64),
    /// xx*x^2 + xy*x*y + yy*y^2 + x_*x + y_*y + c
    Quadratic { xx: f64, xy: f64, yy: f64, x: f64, y: f64, c: f64 },
    /// Smooth bump compactly supported on |x - center| < radius:
    /// amplitude * exp(1 - 1/(1 - t^2)), t = |x - center| / radius.
    Bump { center: Vec2, radius: f64, amplitude: f64 },
    Sum(Box<GaugeFunction>, Box<GaugeFunction>),
    Scaled(f64, Box<GaugeFunction>),
    /// phi(p) = integral of a stored curl-free field along an obstacle-avoiding
    /// path from a boundary basepoint to p; produced as the equivalence witness.
    PathIntegral(Box<PathGauge>),
}

#[derive(Debug, Clone)]
pub struct PathGauge {
    pub field: VectorField,
    pub scene: Scene,
    pub base_s: f64,
    pub max_step: f64,
}

impl GaugeFunction {
    pub fn eval(&self, p: Vec2) -> f64 {
        match self {
            GaugeFunction::Constant(c) => *c,
            GaugeFunction::Quadratic { xx, xy, yy, x, y, c } => {
                xx * p.x * p.x + xy * p.x * p.y + yy * p.y * p.y + x * p.x + y * p.y + c
            }
            GaugeFunction::Bump { center, radius, amplitude } => {
                let t2 = (p - *center).norm_sq() / (radius * radius);
                if t2 >= 1.0 - 1e-12 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - t2)).exp()
                }
            }
            GaugeFunction::Sum(a, b) => a.eval(p) + b.eval(p),
            GaugeFunction::Scaled(c, f) => c * f.eval(p),
            GaugeFunction::PathIntegral(pg) => {
                let (base, _, _) = pg
                    .scene
                    .boundary_point(0, pg.base_s)
                    .expect("outer boundary exists");
                let path = detour_path(&pg.scene, base, p).expect("witness path routable");
                polyline_work_checked(&path, pg.max_step, |q| pg.field.eval(q)).re
            }
        }
    }

    /// Gradient: analytic for the closed-form presets, central differences
    /// for path-integral witnesses.
    pub fn grad(&self, p: Vec2) -> Vec2 {
        match self {
            GaugeFunction::Constant(_) => Vec2::ZERO,
            GaugeFunction::Quadratic { xx, xy, yy, x, y, .. } => Vec2::new(
                2.0 * xx * p.x + xy * p.y + x,
                xy * p.x + 2.0 * yy * p.y + y,
            ),
            GaugeFunction::Bump { center, radius, amplitude } => {
                let d = p - *center;
                let t2 = d.norm_sq() / (radius * radius);
                if t2 >= 1.0 - 1e-12 {
                    return Vec2::ZERO;
                }
                let one_minus = 1.0 - t2;
                let value = amplitude * (1.0 - 1.0 / one_minus).exp();
                // d/d(t^2) of the exponent is -1/(1-t^2)^2.
                let dexp_dt2 = -1.0 / (one_minus * one_minus);
                d * (value * dexp_dt2 * 2.0 / (radius * radius))
            }
            GaugeFunction::Sum(a, b) => a.grad(p) + b.grad(p),
            GaugeFunction::Scaled(c, f) => f.grad(p) * *c,
            GaugeFunction::PathIntegral(pg) => {
                let h = 1e-6 * pg.scene.diameter();
                let dx = Vec2::new(h, 0.0);
                let dy = Vec2::new(0.0, h);
                Vec2::new(
                    (self.eval(p + dx) - self.eval(p - dx)) / (2.0 * h),
                    (self.eval(p + dy) - self.eval(p - dy)) / (2.0 * h),
                )
            }
        }
    }

    /// Trace on the outer boundary at arclength `s`.
    pub fn trace_on_outer(&self, scene: &Scene, s: f64) -> f64 {
        let (p, _, _) = scene.boundary_point(0, s).expect("outer boundary exists");
        self.eval(p)
    }
}

// ---------------------------------------------------------------------------
// Vector potential
// ---------------------------------------------------------------------------

/// The vector potential A = (A1, A2), evaluated pointwise.
#[derive(Debug, Clone)]
pub enum VectorField {
    Zero,
    Constant(Vec2),
    /// Symmetric-gauge potential of a uniform field: (b/2) * (-y, x); curl = b.
    UniformB(f64),
    /// Aharonov-Bohm flux line: alpha * (-(y-cy), (x-cx)) / |x-c|^2.
    /// Curl-free away from the center, holonomy 2*pi*alpha around it.
    /// The center must sit inside an obstacle; the evaluator is singular there.
    AbFlux { center: Vec2, alpha: f64 },
    GradPhi(GaugeFunction),
    Grid { ax: GridField, ay: GridField },
    Sum(Box<VectorField>, Box<VectorField>),
    Scaled(C64, Box<VectorField>),
}

impl VectorField {
    pub fn eval(&self, p: Vec2) -> (C64, C64) {
        match self {
            VectorField::Zero => (C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
            VectorField::Constant(a) => (C64::new(a.x, 0.0), C64::new(a.y, 0.0)),
            VectorField::UniformB(b) => {
                (C64::new(-0.5 * b * p.y, 0.0), C64::new(0.5 * b * p.x, 0.0))
            }
            VectorField::AbFlux { center, alpha } => {
                let d = p - *center;
                let r2 = d.norm_sq();
                (
                    C64::new(-alpha * d.y / r2, 0.0),
                    C64::new(alpha * d.x / r2, 0.0),
                )
            }
            VectorField::GradPhi(phi) => {
                let g = phi.grad(p);
                (C64::new(g.x, 0.0), C64::new(g.y, 0.0))
            }
            VectorField::Grid { ax, ay } => (ax.eval(p), ay.eval(p)),
            VectorField::Sum(a, b) => {
                let (ax, ay) = a.eval(p);
                let (bx, by) = b.eval(p);
                (ax + bx, ay + by)
            }
            VectorField::Scaled(c, f) => {
                let (x, y) = f.eval(p);
                (*c * x, *c * y)
            }
        }
    }

    pub fn conjugate(&self) -> VectorField {
        match self {
            VectorField::Zero
            | VectorField::Constant(_)
            | VectorField::UniformB(_)
            | VectorField::AbFlux { .. }
            | VectorField::GradPhi(_) => self.clone(),
            VectorField::Grid { ax, ay } => VectorField::Grid {
                ax: ax.conjugate(),
                ay: ay.conjugate(),
            },
            VectorField::Sum(a, b) => {
                VectorField::Sum(Box::new(a.conjugate()), Box::new(b.conjugate()))
            }
            VectorField::Scaled(c, f) => VectorField::Scaled(c.conj(), Box::new(f.conjugate())),
        }
    }

    /// a - b, pointwise.
    pub fn difference(a: &VectorField, b: &VectorField) -> VectorField {
        VectorField::Sum(
            Box::new(a.clone()),
            Box::new(VectorField::Scaled(C64::new(-1.0, 0.0), Box::new(b.clone()))),
        )
    }
}

/// Shift A by the gradient of phi: the effect of the gauge factor exp(i*phi)
/// on the vector potential.
pub fn apply_gauge(a: &VectorField, phi: &GaugeFunction) -> VectorField {
    VectorField::Sum(
        Box::new(a.clone()),
        Box::new(VectorField::GradPhi(phi.clone())),
    )
}

/// Central-difference curl (d A2/dx - d A1/dy), second-order in `h`.
pub fn curl(a: &VectorField, p: Vec2, h: f64) -> C64 {
    let dx = Vec2::new(h, 0.0);
    let dy = Vec2::new(0.0, h);
    let (_, a2_px) = a.eval(p + dx);
    let (_, a2_mx) = a.eval(p - dx);
    let (a1_py, _) = a.eval(p + dy);
    let (a1_my, _) = a.eval(p - dy);
    (a2_px - a2_mx - a1_py + a1_my) / (2.0 * h)
}

/// `curl` with the stencil-in-domain precondition enforced.
pub fn curl_checked(a: &VectorField, scene: &Scene, p: Vec2, h: f64) -> Result<C64, FieldError> {
    for q in [
        p + Vec2::new(h, 0.0),
        p - Vec2::new(h, 0.0),
        p + Vec2::new(0.0, h),
        p - Vec2::new(0.0, h),
    ] {
        if !scene.contains(q) {
            return Err(FieldError::StencilOutsideDomain(p));
        }
    }
    Ok(curl(a, p, h))
}

// ---------------------------------------------------------------------------
// Loops, winding, holonomy
// ---------------------------------------------------------------------------

/// Winding number of a closed polyline around `p`.
pub fn winding_number(path: &[Vec2], p: Vec2) -> i32 {
    let mut total = 0.0;
    let n = path.len();
    for k in 0..n {
        let a = path[k] - p;
        let b = path[(k + 1) % n] - p;
        total += a.cross(b).atan2(a.dot(b));
    }
    (total / TAU).round() as i32
}

/// Bounding circle of an obstacle and the largest inflation that keeps the
/// inflated circle inside the domain and clear of the other obstacles.
fn obstacle_envelope(scene: &Scene, j: usize) -> (Vec2, f64, f64) {
    let obstacle = &scene.obstacles[j];
    let center = obstacle.interior_point();
    let bounding = obstacle.max_distance_from(center);
    let mut room = -scene.outer.signed_distance(center) - bounding;
    for (k, other) in scene.obstacles.iter().enumerate() {
        if k != j {
            room = room.min(other.signed_distance(center) - bounding);
        }
    }
    (center, bounding, room)
}

/// A closed counterclockwise polyline around obstacle `j`, strictly inside the
/// domain (last point equals the first).
pub fn loop_around_obstacle(scene: &Scene, j: usize, n_points: usize) -> Vec<Vec2> {
    let (center, bounding, room) = obstacle_envelope(scene, j);
    let radius = bounding + 0.5 * room;
    let n = n_points.max(16);
    (0..=n)
        .map(|k| center + Vec2::from_angle(TAU * k as f64 / n as f64) * radius)
        .collect()
}

/// Loop integral of A around one obstacle; for curvature-free real A this is
/// the holonomy classifying the gauge class, independent of the loop shape.
pub fn holonomy(
    a: &VectorField,
    scene: &Scene,
    loop_path: &[Vec2],
    max_step: f64,
) -> Result<f64, FieldError> {
    if loop_path.len() < 4 || loop_path[0].dist(*loop_path.last().unwrap()) > 1e-12 {
        return Err(FieldError::BadLoopWinding(Vec::new()));
    }
    for w in loop_path.windows(2) {
        for t in [0.0, 0.5] {
            let q = w[0] + (w[1] - w[0]) * t;
            if !scene.contains(q) {
                return Err(FieldError::LoopOutsideDomain(q));
            }
        }
    }
    let windings: Vec<i32> = scene
        .obstacles
        .iter()
        .map(|obstacle| winding_number(&loop_path[..loop_path.len() - 1], obstacle.interior_point()))
        .collect();
    let once: Vec<usize> = windings
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0)
        .map(|(k, _)| k)
        .collect();
    if once.len() != 1 || windings[once[0]] != 1 {
        return Err(FieldError::BadLoopWinding(windings));
    }
    Ok(polyline_work_checked(loop_path, max_step, |q| a.eval(q)).re)
}

/// Composite Simpson along a polyline with a Richardson check: the step is
/// halved until two consecutive levels agree, up to two refinements.
fn polyline_work_checked<F: FnMut(Vec2) -> (C64, C64)>(
    points: &[Vec2],
    max_step: f64,
    mut f: F,
) -> C64 {
    let mut step = max_step;
    let mut coarse = polyline_work(points, step, &mut f);
    for _ in 0..2 {
        step *= 0.5;
        let fine = polyline_work(points, step, &mut f);
        if (fine - coarse).norm() <= 1e-10 * (1.0 + fine.norm()) {
            return fine;
        }
        coarse = fine;
    }
    coarse
}

// ---------------------------------------------------------------------------
// Obstacle-avoiding paths
// ---------------------------------------------------------------------------

/// Polyline from `from` to `to` staying inside the closed domain, detouring
/// around obstacles along inflated bounding circles. Endpoints inside an
/// envelope are joined radially (safe: convex obstacles are star-shaped
/// around their interior point).
pub fn detour_path(scene: &Scene, from: Vec2, to: Vec2) -> Result<Vec<Vec2>, FieldError> {
    let envelopes: Vec<(Vec2, f64)> = (0..scene.obstacles.len())
        .map(|j| {
            let (center, bounding, room) = obstacle_envelope(scene, j);
            (center, bounding + 0.45 * room)
        })
        .collect();
    let mut path = vec![from];
    route(from, to, &envelopes, 0, &mut path).map_err(|_| FieldError::PathBlocked { from, to })?;
    Ok(path)
}

/// Appends the route from `a` (already in `out`) to `b` inclusive.
fn route(
    a: Vec2,
    b: Vec2,
    envelopes: &[(Vec2, f64)],
    depth: usize,
    out: &mut Vec<Vec2>,
) -> Result<(), ()> {
    if depth > 24 {
        return Err(());
    }
    // Hop radially out of an envelope containing an endpoint.
    for &(center, radius) in envelopes {
        if a.dist(center) < radius {
            let exit = center + (a - center).normalized() * (radius * (1.0 + 1e-9));
            out.push(exit);
            return route(exit, b, envelopes, depth + 1, out);
        }
    }
    for &(center, radius) in envelopes {
        if b.dist(center) < radius {
            let entry = center + (b - center).normalized() * (radius * (1.0 + 1e-9));
            route(a, entry, envelopes, depth + 1, out)?;
            out.push(b);
            return Ok(());
        }
    }
    // First envelope the open segment dips into.
    let mut first: Option<(Vec2, f64, f64, f64)> = None;
    for &(center, radius) in envelopes {
        if let Some((t1, t2)) = segment_circle_overlap(a, b, center, radius) {
            if first.map_or(true, |f| t1 < f.2) {
                first = Some((center, radius, t1, t2));
            }
        }
    }
    let (center, radius, t1, t2) = match first {
        None => {
            out.push(b);
            return Ok(());
        }
        Some(f) => f,
    };
    let p1 = a + (b - a) * t1;
    let p2 = a + (b - a) * t2;
    let (arc_start, arc) = arc_points(center, radius, p1, p2);
    route(a, arc_start, envelopes, depth + 1, out)?;
    let arc_end = *arc.last().expect("arc has points");
    out.extend(arc);
    route(arc_end, b, envelopes, depth + 1, out)
}

/// Parameters (t1, t2) in (0,1) where the open segment dips inside the circle.
fn segment_circle_overlap(a: Vec2, b: Vec2, center: Vec2, radius: f64) -> Option<(f64, f64)> {
    let d = b - a;
    let len_sq = d.norm_sq();
    if len_sq == 0.0 {
        return None;
    }
    let oc = a - center;
    let half_b = oc.dot(d);
    let c = oc.norm_sq() - radius * radius;
    let disc = half_b * half_b - len_sq * c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t1 = (-half_b - sq) / len_sq;
    let t2 = (-half_b + sq) / len_sq;
    let eps = 1e-9;
    let (t1, t2) = (t1.max(eps), t2.min(1.0 - eps));
    if t1 + 1e-9 < t2 {
        Some((t1, t2))
    } else {
        None
    }
}

/// Shorter arc from the ray of p1 to the ray of p2, placed on a slightly
/// larger radius so the arc's own chords never dip back inside `radius`.
/// Returns the first point separately (the connector target) plus the rest.
fn arc_points(center: Vec2, radius: f64, p1: Vec2, p2: Vec2) -> (Vec2, Vec<Vec2>) {
    let a1 = (p1 - center).angle();
    let mut delta = (p2 - center).angle() - a1;
    if delta > std::f64::consts::PI {
        delta -= TAU;
    } else if delta < -std::f64::consts::PI {
        delta += TAU;
    }
    let n = ((delta.abs() / (TAU / 64.0)).ceil() as usize).max(4);
    let step = delta / n as f64;
    let lifted = radius / (0.5 * step).cos() * (1.0 + 1e-9);
    let points: Vec<Vec2> = (0..=n)
        .map(|k| center + Vec2::from_angle(a1 + step * k as f64) * lifted)
        .collect();
    (points[0], points)
}

// ---------------------------------------------------------------------------
// Line integrals of vector potentials
// ---------------------------------------------------------------------------

/// Integral of A along the straight segment from `a` to `b`: exact for
/// presets with closed forms (constants, uniform fields, flux lines,
/// gradients), composite Simpson with panels <= max_step otherwise.
pub fn line_integral(field: &VectorField, a: Vec2, b: Vec2, max_step: f64) -> C64 {
    match field {
        VectorField::Zero => C64::new(0.0, 0.0),
        VectorField::Constant(c) => C64::new(c.dot(b - a), 0.0),
        VectorField::UniformB(bb) => C64::new(0.5 * bb * a.cross(b), 0.0),
        VectorField::AbFlux { center, alpha } => {
            // alpha * grad(angle): the signed angle swept around the center,
            // exact for segments missing the center (always < pi for a chord).
            let u = a - *center;
            let v = b - *center;
            C64::new(alpha * u.cross(v).atan2(u.dot(v)), 0.0)
        }
        VectorField::GradPhi(phi) => C64::new(phi.eval(b) - phi.eval(a), 0.0),
        VectorField::Grid { .. } => crate::quad::segment_work(a, b, max_step, |p| field.eval(p)),
        VectorField::Sum(f, g) => line_integral(f, a, b, max_step) + line_integral(g, a, b, max_step),
        VectorField::Scaled(c, f) => *c * line_integral(f, a, b, max_step),
    }
}

// ---------------------------------------------------------------------------
// Gauge-equivalence decision
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum InequivalenceReason {
    CurvatureMismatch { max_curl: f64, at: Vec2 },
    HolonomyNotInteger { obstacle: usize, holonomy: f64, defect: f64 },
    BoundaryTraceNonzero { max_defect: f64, at_s: f64 },
}

impl std::fmt::Display for InequivalenceReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InequivalenceReason::CurvatureMismatch { max_curl, at } => {
                write!(f, "curvature mismatch (|curl| {max_curl:.3e} at {at:?})")
            }
            InequivalenceReason::HolonomyNotInteger { obstacle, holonomy, defect } => write!(
                f,
                "holonomy not in 2piZ (obstacle {obstacle}: {holonomy:.6}, defect {defect:.3e})"
            ),
            InequivalenceReason::BoundaryTraceNonzero { max_defect, at_s } => write!(
                f,
                "boundary trace nonzero mod 2pi (defect {max_defect:.3e} at s={at_s:.4})"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub enum GaugeVerdict {
    Equivalent { witness: GaugeFunction },
    Inequivalent { reason: InequivalenceReason },
}

#[derive(Debug, Clone)]
pub struct GaugeDecision {
    pub verdict: GaugeVerdict,
    /// Obstacle holonomies of the difference field.
    pub holonomies: Vec<f64>,
    pub max_curl: f64,
}

impl GaugeDecision {
    pub fn is_equivalent(&self) -> bool {
        matches!(self.verdict, GaugeVerdict::Equivalent { .. })
    }
}

/// Distance from `x` to the nearest multiple of 2*pi.
pub fn mod_tau_defect(x: f64) -> f64 {
    (x - TAU * (x / TAU).round()).abs()
}

/// Decide whether a2 - a1 = grad(phi) for some real phi with exp(i*phi) = 1
/// on the outer boundary. Three checks, in order: vanishing curvature of the
/// difference on a test grid, obstacle holonomies in 2*pi*Z, and a boundary
/// trace of the path-integrated witness vanishing mod 2*pi.
pub fn gauge_equivalent(
    a1: &VectorField,
    a2: &VectorField,
    scene: &Scene,
    tol: f64,
) -> Result<GaugeDecision, FieldError> {
    let diff = VectorField::difference(a2, a1);
    let diameter = scene.diameter();
    // small enough that O(h^2) truncation stays below tol even for gauge
    // bumps with large third derivatives, large enough to beat roundoff
    let fd_h = 1e-6 * diameter;
    let max_step = PATH_STEP_FACTOR * diameter;

    // (i) curvature of the difference vanishes on a test grid
    let mut max_curl = 0.0_f64;
    let mut worst = Vec2::ZERO;
    for p in domain_test_grid(scene, 24, 2.0 * fd_h) {
        let c = curl(&diff, p, fd_h).norm();
        if c > max_curl {
            max_curl = c;
            worst = p;
        }
    }
    if max_curl > tol {
        return Ok(GaugeDecision {
            verdict: GaugeVerdict::Inequivalent {
                reason: InequivalenceReason::CurvatureMismatch { max_curl, at: worst },
            },
            holonomies: Vec::new(),
            max_curl,
        });
    }

    // (ii) holonomies around each obstacle lie in 2*pi*Z
    let mut holonomies = Vec::with_capacity(scene.obstacles.len());
    for j in 0..scene.obstacles.len() {
        let loop_path = loop_around_obstacle(scene, j, 128);
        let h = holonomy(&diff, scene, &loop_path, max_step)?;
        holonomies.push(h);
        let defect = mod_tau_defect(h);
        if defect > tol {
            return Ok(GaugeDecision {
                verdict: GaugeVerdict::Inequivalent {
                    reason: InequivalenceReason::HolonomyNotInteger {
                        obstacle: j + 1,
                        holonomy: h,
                        defect,
                    },
                },
                holonomies,
                max_curl,
            });
        }
    }

    // (iii) path-integrated witness vanishes (mod 2*pi) on the outer boundary
    let witness = GaugeFunction::PathIntegral(Box::new(PathGauge {
        field: diff,
        scene: scene.clone(),
        base_s: 0.0,
        max_step,
    }));
    let l0 = scene.outer.perimeter();
    let n_samples = 32;
    let mut max_defect = 0.0_f64;
    let mut worst_s = 0.0;
    for k in 0..n_samples {
        let s = k as f64 * l0 / n_samples as f64;
        let defect = mod_tau_defect(witness.trace_on_outer(scene, s));
        if defect > max_defect {
            max_defect = defect;
            worst_s = s;
        }
    }
    if max_defect > tol {
        return Ok(GaugeDecision {
            verdict: GaugeVerdict::Inequivalent {
                reason: InequivalenceReason::BoundaryTraceNonzero { max_defect, at_s: worst_s },
            },
            holonomies,
            max_curl,
        });
    }

    Ok(GaugeDecision {
        verdict: GaugeVerdict::Equivalent { witness },
        holonomies,
        max_curl,
    })
}

/// Lattice points of an n x n grid over the outer bounding box that lie in the
/// domain with at least `clearance` to spare.
pub fn domain_test_grid(scene: &Scene, n: usize, clearance: f64) -> Vec<Vec2> {
    let (lo, hi) = scene_bbox(scene);
    let mut points = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let p = Vec2::new(
                lo.x + (i as f64 + 0.5) * (hi.x - lo.x) / n as f64,
                lo.y + (j as f64 + 0.5) * (hi.y - lo.y) / n as f64,
            );
            if scene.signed_distance(p) < -clearance {
                points.push(p);
            }
        }
    }
    points
}

/// Axis-aligned bounding box of the outer shape.
pub fn scene_bbox(scene: &Scene) -> (Vec2, Vec2) {
    match &scene.outer {
        ConvexShape::Circle { center, radius } => (
            *center - Vec2::new(*radius, *radius),
            *center + Vec2::new(*radius, *radius),
        ),
        ConvexShape::Polygon { vertices } => {
            let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
            let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
            for v in vertices {
                lo.x = lo.x.min(v.x);
                lo.y = lo.y.min(v.y);
                hi.x = hi.x.max(v.x);
                hi.y = hi.y.max(v.y);
            }
            (lo, hi)
        }
    }
}

/// Line integral of a scalar field along a straight segment (test helper for
/// preset fields; the broken-ray transforms live in `brt`).
pub fn segment_integral(v: &ScalarField, a: Vec2, b: Vec2, max_step: f64) -> C64 {
    segment_scalar(a, b, max_step, |p| v.eval(p))
}
