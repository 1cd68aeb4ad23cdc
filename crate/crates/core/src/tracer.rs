//! Broken-ray construction: straight legs between specular reflections at
//! obstacles, from one outer-boundary point to another.
//!
//! A ray terminates as soon as it returns to the outer boundary; reflections
//! happen only at obstacles. Tangential obstacle encounters and exhausted
//! reflection budgets are reported as explicit outcomes instead of rays.

use crate::geom::Vec2;
use crate::scene::{Hit, Scene, SceneError};
use thiserror::Error;

pub const DEFAULT_MAX_REFLECTIONS: usize = 64;

/// One straight segment of a broken ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub start: Vec2,
    pub end: Vec2,
    pub direction: Vec2,
    pub length: f64,
}

impl Leg {
    fn new(start: Vec2, end: Vec2) -> Self {
        let length = start.dist(end);
        Leg {
            start,
            end,
            direction: (end - start) / length,
            length,
        }
    }
}

/// A boundary point tagged with its arclength on the outer boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub s: f64,
    pub point: Vec2,
}

/// A boundary-to-boundary broken ray.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenRay {
    pub legs: Vec<Leg>,
    pub start: BoundaryPoint,
    pub end: BoundaryPoint,
    /// Direction of travel at the endpoint.
    pub end_direction: Vec2,
    pub total_length: f64,
}

impl BrokenRay {
    pub fn n_reflections(&self) -> usize {
        self.legs.len() - 1
    }

    /// Interior vertices (the reflection points).
    pub fn reflection_points(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.legs.iter().skip(1).map(|leg| leg.start)
    }

    /// All polyline vertices, start to end.
    pub fn vertices(&self) -> Vec<Vec2> {
        let mut v = Vec::with_capacity(self.legs.len() + 1);
        v.push(self.start.point);
        v.extend(self.legs.iter().map(|leg| leg.end));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceOutcome {
    Ray(BrokenRay),
    /// Reflection budget exhausted before the ray returned to the outer boundary.
    Trapped { reflections: usize },
    /// The ray met an obstacle (or the outer boundary) tangentially.
    Grazing { hit: Hit },
}

impl TraceOutcome {
    pub fn ray(self) -> Option<BrokenRay> {
        match self {
            TraceOutcome::Ray(ray) => Some(ray),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("launch direction is not strictly inward (inward component {0:.3e})")]
    NotInward(f64),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("ray escaped the domain without striking a boundary")]
    NoHit,
}

/// Specular reflection: d - 2 (d.n) n. The normal's sign does not matter.
pub fn reflect(direction: Vec2, normal: Vec2) -> Vec2 {
    direction - normal * (2.0 * direction.dot(normal))
}

/// Trace the broken ray launched from arclength `s0` on the outer boundary.
pub fn trace(
    scene: &Scene,
    s0: f64,
    direction: Vec2,
    max_reflections: usize,
) -> Result<TraceOutcome, TraceError> {
    let (start_point, inward, _) = scene.boundary_point(0, s0)?;
    let inward_component = inward.dot(direction);
    if inward_component <= scene.tangency_tol {
        return Err(TraceError::NotInward(inward_component));
    }

    let mut legs: Vec<Leg> = Vec::new();
    let mut position = start_point;
    let mut dir = direction.normalized();
    let mut reflections = 0usize;

    loop {
        let hit = scene
            .first_hit(position, dir)?
            .ok_or(TraceError::NoHit)?;
        if hit.component == 0 {
            // Back on the outer boundary: the ray is complete.
            legs.push(Leg::new(position, hit.point));
            let s_end = scene.project_to_arclength(0, hit.point)?;
            let total_length = legs.iter().map(|l| l.length).sum();
            // taken from the leg so that reverse() is a bit-exact involution
            let end_direction = legs.last().expect("one leg at least").direction;
            return Ok(TraceOutcome::Ray(BrokenRay {
                legs,
                start: BoundaryPoint {
                    s: s0.rem_euclid(scene.outer.perimeter()),
                    point: start_point,
                },
                end: BoundaryPoint {
                    s: s_end,
                    point: hit.point,
                },
                end_direction,
                total_length,
            }));
        }
        if hit.grazing_angle < scene.tangency_tol {
            return Ok(TraceOutcome::Grazing { hit });
        }
        if reflections == max_reflections {
            return Ok(TraceOutcome::Trapped { reflections });
        }
        legs.push(Leg::new(position, hit.point));
        position = hit.point;
        dir = reflect(dir, hit.inward_normal).normalized();
        reflections += 1;
    }
}

/// The same geometric ray traversed backwards. An involution.
pub fn reverse(ray: &BrokenRay) -> BrokenRay {
    let legs: Vec<Leg> = ray
        .legs
        .iter()
        .rev()
        .map(|leg| Leg {
            start: leg.end,
            end: leg.start,
            direction: -leg.direction,
            length: leg.length,
        })
        .collect();
    let end_direction = legs.last().expect("rays have at least one leg").direction;
    BrokenRay {
        legs,
        start: ray.end,
        end: ray.start,
        end_direction,
        total_length: ray.total_length,
    }
}
