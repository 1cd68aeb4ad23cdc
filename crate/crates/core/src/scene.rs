//! Geometry of the multi-connected domain: an outer convex boundary, disjoint
//! convex obstacles, and exact ray/boundary intersection queries.
//!
//! The domain is the outer shape minus the closed obstacles. Boundaries carry
//! an arclength parametrization `s in [0, perimeter)` running counterclockwise;
//! circles start at the point of largest x, polygons at their first vertex.

use crate::geom::{point_segment_distance, segment_segment_distance, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Default angular tolerance below which a reflection counts as tangential.
pub const DEFAULT_TANGENCY_TOL: f64 = 1e-6;

/// Departure tolerance factor: rays ignore intersections closer than
/// this fraction of the scene diameter so a boundary launch does not
/// re-detect its own origin.
pub const DEPARTURE_TOL_FACTOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexShape {
    Circle { center: Vec2, radius: f64 },
    /// Strictly convex polygon, vertices counterclockwise.
    Polygon { vertices: Vec<Vec2> },
}

impl ConvexShape {
    pub fn circle(center: Vec2, radius: f64) -> Self {
        ConvexShape::Circle { center, radius }
    }

    pub fn polygon(vertices: Vec<Vec2>) -> Self {
        ConvexShape::Polygon { vertices }
    }

    /// Total perimeter length.
    pub fn perimeter(&self) -> f64 {
        match self {
            ConvexShape::Circle { radius, .. } => TAU * radius,
            ConvexShape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).map(|i| vertices[i].dist(vertices[(i + 1) % n])).sum()
            }
        }
    }

    /// Point on the boundary at arclength `s` (taken modulo the perimeter),
    /// with the outward unit normal and the forward unit tangent.
    pub fn boundary_point(&self, s: f64) -> (Vec2, Vec2, Vec2) {
        let l0 = self.perimeter();
        let s = s.rem_euclid(l0);
        match self {
            ConvexShape::Circle { center, radius } => {
                let phi = s / radius;
                let outward = Vec2::from_angle(phi);
                (*center + outward * *radius, outward, outward.perp())
            }
            ConvexShape::Polygon { vertices } => {
                let n = vertices.len();
                let mut acc = 0.0;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let len = a.dist(b);
                    if s <= acc + len || i == n - 1 {
                        let t = ((s - acc) / len).clamp(0.0, 1.0);
                        let tangent = (b - a).normalized();
                        // CCW orientation: outward normal is the tangent rotated clockwise.
                        let outward = -tangent.perp();
                        return (a + (b - a) * t, outward, tangent);
                    }
                    acc += len;
                }
                unreachable!("s wrapped into [0, perimeter)")
            }
        }
    }

    /// Arclength of the boundary point closest to `p`.
    pub fn project_to_arclength(&self, p: Vec2) -> f64 {
        match self {
            ConvexShape::Circle { center, radius } => {
                let phi = (p - *center).angle().rem_euclid(TAU);
                phi * radius
            }
            ConvexShape::Polygon { vertices } => {
                let n = vertices.len();
                let mut best = (f64::INFINITY, 0.0);
                let mut acc = 0.0;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let len = a.dist(b);
                    let t = (((p - a).dot(b - a)) / (len * len)).clamp(0.0, 1.0);
                    let d = p.dist(a + (b - a) * t);
                    if d < best.0 {
                        best = (d, acc + t * len);
                    }
                    acc += len;
                }
                best.1.rem_euclid(self.perimeter())
            }
        }
    }

    /// Signed distance to the boundary: negative strictly inside the shape.
    /// Exact for circles; exact for convex polygons outside-or-near, and the
    /// correct sign everywhere.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match self {
            ConvexShape::Circle { center, radius } => p.dist(*center) - radius,
            ConvexShape::Polygon { vertices } => {
                let n = vertices.len();
                let mut max_plane = f64::NEG_INFINITY;
                let mut min_edge = f64::INFINITY;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let outward = -(b - a).normalized().perp();
                    max_plane = max_plane.max((p - a).dot(outward));
                    min_edge = min_edge.min(point_segment_distance(p, a, b));
                }
                if max_plane <= 0.0 {
                    max_plane // inside: the supporting-plane bound is exact for convex shapes
                } else {
                    min_edge
                }
            }
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.signed_distance(p) < 0.0
    }

    /// Support value: max of x . dir over the shape.
    fn support(&self, dir: Vec2) -> f64 {
        match self {
            ConvexShape::Circle { center, radius } => center.dot(dir) + radius,
            ConvexShape::Polygon { vertices } => vertices
                .iter()
                .map(|v| v.dot(dir))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Largest distance from `p` to the shape's boundary (support radius).
    pub fn max_distance_from(&self, p: Vec2) -> f64 {
        match self {
            ConvexShape::Circle { center, radius } => p.dist(*center) + radius,
            ConvexShape::Polygon { vertices } => vertices
                .iter()
                .map(|v| v.dist(p))
                .fold(0.0, f64::max),
        }
    }

    /// A point in the interior (circle center / vertex centroid).
    pub fn interior_point(&self) -> Vec2 {
        match self {
            ConvexShape::Circle { center, .. } => *center,
            ConvexShape::Polygon { vertices } => {
                let mut c = Vec2::ZERO;
                for v in vertices {
                    c += *v;
                }
                c / vertices.len() as f64
            }
        }
    }

    fn check_convex(&self) -> Result<(), String> {
        match self {
            ConvexShape::Circle { radius, .. } => {
                if *radius > 0.0 {
                    Ok(())
                } else {
                    Err(format!("circle radius {radius} is not positive"))
                }
            }
            ConvexShape::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(format!("polygon has {n} vertices, need at least 3"));
                }
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    if (b - a).cross(c - b) <= 0.0 {
                        return Err(format!(
                            "polygon is not strictly convex counterclockwise at vertex {}",
                            (i + 1) % n
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Minimum boundary-to-boundary distance between two disjoint shapes;
    /// zero or negative when they overlap or one contains the other.
    fn clearance_to(&self, other: &ConvexShape) -> f64 {
        use ConvexShape::*;
        match (self, other) {
            (Circle { center: c1, radius: r1 }, Circle { center: c2, radius: r2 }) => {
                c1.dist(*c2) - r1 - r2
            }
            (Circle { center, radius }, Polygon { vertices })
            | (Polygon { vertices }, Circle { center, radius }) => {
                let poly = ConvexShape::polygon(vertices.clone());
                if poly.contains(*center) {
                    return -radius;
                }
                let n = vertices.len();
                let d = (0..n)
                    .map(|i| point_segment_distance(*center, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min);
                d - radius
            }
            (Polygon { vertices: va }, Polygon { vertices: vb }) => {
                let pa = self;
                let pb = other;
                if pa.contains(pb.interior_point()) || pb.contains(pa.interior_point()) {
                    return -1.0;
                }
                let (na, nb) = (va.len(), vb.len());
                let mut d = f64::INFINITY;
                for i in 0..na {
                    for j in 0..nb {
                        d = d.min(segment_segment_distance(
                            va[i],
                            va[(i + 1) % na],
                            vb[j],
                            vb[(j + 1) % nb],
                        ));
                    }
                }
                d
            }
        }
    }

    /// Clearance of `inner` inside `self`: min over the inner boundary of the
    /// distance to the outer boundary, negative when `inner` pokes out.
    fn inner_clearance(&self, inner: &ConvexShape) -> f64 {
        match self {
            ConvexShape::Circle { center, radius } => radius - inner.max_distance_from(*center),
            ConvexShape::Polygon { vertices } => {
                let n = vertices.len();
                let mut clearance = f64::INFINITY;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let outward = -(b - a).normalized().perp();
                    clearance = clearance.min(a.dot(outward) - inner.support(outward));
                }
                clearance
            }
        }
    }
}

/// One ray/boundary intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// 0 for the outer boundary, j >= 1 for obstacle j.
    pub component: usize,
    pub point: Vec2,
    /// Unit normal pointing into the domain.
    pub inward_normal: Vec2,
    pub distance: f64,
    /// Angle between the ray and the boundary tangent, in [0, pi/2].
    pub grazing_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("unknown component index {0}")]
    UnknownComponent(usize),
    #[error("direction has norm {0}, expected a unit vector")]
    NonUnitDirection(f64),
    #[error("ray origin ({0:?}) lies outside the closed domain")]
    OriginOutside(Vec2),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneViolation {
    DegenerateShape { component: usize, detail: String },
    ObstacleNotInsideOuter { obstacle: usize, clearance: f64 },
    ObstaclesOverlap { a: usize, b: usize, clearance: f64 },
}

impl std::fmt::Display for SceneViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SceneViolation::DegenerateShape { component, detail } => {
                write!(f, "component {component}: {detail}")
            }
            SceneViolation::ObstacleNotInsideOuter { obstacle, clearance } => write!(
                f,
                "obstacle {obstacle} touches/exits outer boundary (clearance {clearance:.3e})"
            ),
            SceneViolation::ObstaclesOverlap { a, b, clearance } => {
                write!(f, "obstacles {a} and {b} overlap (clearance {clearance:.3e})")
            }
        }
    }
}

/// The multi-connected domain: outer shape minus closed obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub outer: ConvexShape,
    pub obstacles: Vec<ConvexShape>,
    /// Angle tolerance for tangential classification, radians.
    pub tangency_tol: f64,
}

impl Scene {
    pub fn new(outer: ConvexShape, obstacles: Vec<ConvexShape>) -> Self {
        Scene {
            outer,
            obstacles,
            tangency_tol: DEFAULT_TANGENCY_TOL,
        }
    }

    /// The standard test scene: outer circle R=2, obstacle circle r=1, both at the origin.
    pub fn concentric(outer_radius: f64, obstacle_radius: f64) -> Self {
        Scene::new(
            ConvexShape::circle(Vec2::ZERO, outer_radius),
            vec![ConvexShape::circle(Vec2::ZERO, obstacle_radius)],
        )
    }

    pub fn n_components(&self) -> usize {
        1 + self.obstacles.len()
    }

    /// Shape of a component: 0 is the outer boundary, j >= 1 obstacle j.
    pub fn component(&self, index: usize) -> Result<&ConvexShape, SceneError> {
        if index == 0 {
            Ok(&self.outer)
        } else {
            self.obstacles
                .get(index - 1)
                .ok_or(SceneError::UnknownComponent(index))
        }
    }

    /// Diameter of the outer shape; fixes the length scale for tolerances.
    pub fn diameter(&self) -> f64 {
        match &self.outer {
            ConvexShape::Circle { radius, .. } => 2.0 * radius,
            ConvexShape::Polygon { vertices } => {
                let mut d: f64 = 0.0;
                for (i, a) in vertices.iter().enumerate() {
                    for b in &vertices[i + 1..] {
                        d = d.max(a.dist(*b));
                    }
                }
                d
            }
        }
    }

    pub fn departure_tol(&self) -> f64 {
        DEPARTURE_TOL_FACTOR * self.diameter()
    }

    /// Every violated invariant; empty means the scene is valid.
    pub fn validate(&self) -> Vec<SceneViolation> {
        let mut violations = Vec::new();
        if let Err(detail) = self.outer.check_convex() {
            violations.push(SceneViolation::DegenerateShape {
                component: 0,
                detail,
            });
        }
        for (j, obstacle) in self.obstacles.iter().enumerate() {
            if let Err(detail) = obstacle.check_convex() {
                violations.push(SceneViolation::DegenerateShape {
                    component: j + 1,
                    detail,
                });
            }
        }
        if !violations.is_empty() {
            return violations; // clearance checks assume well-formed shapes
        }
        for (j, obstacle) in self.obstacles.iter().enumerate() {
            let clearance = self.outer.inner_clearance(obstacle);
            if clearance <= 0.0 {
                violations.push(SceneViolation::ObstacleNotInsideOuter {
                    obstacle: j + 1,
                    clearance,
                });
            }
        }
        for a in 0..self.obstacles.len() {
            for b in a + 1..self.obstacles.len() {
                let clearance = self.obstacles[a].clearance_to(&self.obstacles[b]);
                if clearance <= 0.0 {
                    violations.push(SceneViolation::ObstaclesOverlap {
                        a: a + 1,
                        b: b + 1,
                        clearance,
                    });
                }
            }
        }
        violations
    }

    /// True when `p` lies in the open domain (inside outer, outside all obstacles).
    pub fn contains(&self, p: Vec2) -> bool {
        self.signed_distance(p) < 0.0
    }

    /// Signed distance to the domain: negative inside Omega, positive in
    /// obstacles or outside the outer boundary.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let mut d = self.outer.signed_distance(p);
        for obstacle in &self.obstacles {
            d = d.max(-obstacle.signed_distance(p));
        }
        d
    }

    /// Boundary point of a component by arclength: point, inward unit normal
    /// (into the domain), forward unit tangent.
    pub fn boundary_point(
        &self,
        component: usize,
        s: f64,
    ) -> Result<(Vec2, Vec2, Vec2), SceneError> {
        let shape = self.component(component)?;
        let (point, outward, tangent) = shape.boundary_point(s);
        // Outer boundary: into the domain is inward to the shape.
        // Obstacles: into the domain is outward from the obstacle.
        let inward = if component == 0 { -outward } else { outward };
        Ok((point, inward, tangent))
    }

    /// Arclength of the nearest boundary point of a component.
    pub fn project_to_arclength(&self, component: usize, p: Vec2) -> Result<f64, SceneError> {
        Ok(self.component(component)?.project_to_arclength(p))
    }

    /// Nearest boundary intersection of the ray `origin + t * direction`
    /// with `t > departure_tol`. `None` only when no component is struck.
    pub fn first_hit(&self, origin: Vec2, direction: Vec2) -> Result<Option<Hit>, SceneError> {
        let norm = direction.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(SceneError::NonUnitDirection(norm));
        }
        let slack = 1e-9 * self.diameter();
        if self.signed_distance(origin) > slack {
            return Err(SceneError::OriginOutside(origin));
        }
        let tol = self.departure_tol();
        let mut best: Option<Hit> = None;
        for component in 0..self.n_components() {
            let shape = self.component(component).expect("component in range");
            if let Some(hit) = ray_shape_hit(shape, component, origin, direction, tol, self) {
                if best.as_ref().map_or(true, |b| hit.distance < b.distance) {
                    best = Some(hit);
                }
            }
        }
        Ok(best)
    }
}

fn ray_shape_hit(
    shape: &ConvexShape,
    component: usize,
    origin: Vec2,
    direction: Vec2,
    departure_tol: f64,
    scene: &Scene,
) -> Option<Hit> {
    match shape {
        ConvexShape::Circle { center, radius } => {
            // |origin + t d - c|^2 = r^2, with |d| = 1.
            let oc = origin - *center;
            let b = oc.dot(direction);
            let c = oc.norm_sq() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t = [-b - sq, -b + sq]
                .into_iter()
                .filter(|t| *t > departure_tol)
                .fold(f64::INFINITY, f64::min);
            if !t.is_finite() {
                return None;
            }
            let point = origin + direction * t;
            let outward = (point - *center).normalized();
            let inward = if component == 0 { -outward } else { outward };
            Some(Hit {
                component,
                point,
                inward_normal: inward,
                distance: t,
                grazing_angle: direction.dot(outward).abs().min(1.0).asin(),
            })
        }
        ConvexShape::Polygon { vertices } => {
            let n = vertices.len();
            let vertex_tol = scene.tangency_tol * scene.diameter();
            let mut best: Option<Hit> = None;
            for i in 0..n {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let edge = b - a;
                let denom = direction.cross(edge);
                if denom.abs() < 1e-15 {
                    continue; // ray parallel to the edge
                }
                let rel = a - origin;
                let t = rel.cross(edge) / denom;
                let u = rel.cross(direction) / denom;
                if t <= departure_tol || !(-1e-12..=1.0 + 1e-12).contains(&u) {
                    continue;
                }
                if best.as_ref().map_or(true, |h| t < h.distance) {
                    let point = origin + direction * t;
                    let tangent = edge.normalized();
                    let outward = -tangent.perp();
                    let inward = if component == 0 { -outward } else { outward };
                    let edge_len = edge.norm();
                    let near_vertex =
                        (u * edge_len).min((1.0 - u) * edge_len) < vertex_tol;
                    // Reflection normals are undefined at vertices: force the
                    // grazing classification there.
                    let grazing_angle = if near_vertex {
                        0.0
                    } else {
                        direction.dot(outward).abs().min(1.0).asin()
                    };
                    best = Some(Hit {
                        component,
                        point,
                        inward_normal: inward,
                        distance: t,
                        grazing_angle,
                    });
                }
            }
            best
        }
    }
}
