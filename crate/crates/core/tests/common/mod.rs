//! Independent oracles for the integration and acceptance suites: an
//! adaptive Gauss-Kronrod quadrature and a bisection-based ray marcher.
//! Nothing here reuses the library's quadrature or intersection paths.
#![allow(dead_code)]

use gaugetomo::geom::Vec2;
use gaugetomo::scene::Scene;

// G7-K15 nodes and weights (positive half; symmetric).
const K15_NODES: [f64; 8] = [
    0.0,
    0.2077849550078985,
    0.4058451513773972,
    0.5860872354676911,
    0.7415311855993944,
    0.8648644233597691,
    0.9491079123427585,
    0.9914553711208126,
];
const K15_WEIGHTS: [f64; 8] = [
    0.2094821410847278,
    0.2044329400752989,
    0.1903505780647854,
    0.1690047266392679,
    0.1406532597155259,
    0.1047900103222502,
    0.0630920926299785,
    0.0229353220105292,
];
const G7_NODES: [f64; 4] = [
    0.0,
    0.4058451513773972,
    0.7415311855993944,
    0.9491079123427585,
];
const G7_WEIGHTS: [f64; 4] = [
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892767,
    0.1294849661688697,
];

fn gk15<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = 0.0;
    let mut gauss = 0.0;
    for (i, &x) in K15_NODES.iter().enumerate() {
        let w = K15_WEIGHTS[i];
        if x == 0.0 {
            let v = f(mid);
            kron += w * v;
            if let Some(j) = G7_NODES.iter().position(|&g| g == 0.0) {
                gauss += G7_WEIGHTS[j] * v;
            }
        } else {
            let v1 = f(mid - half * x);
            let v2 = f(mid + half * x);
            kron += w * (v1 + v2);
            if let Some(j) = G7_NODES.iter().position(|&g| g == x) {
                gauss += G7_WEIGHTS[j] * (v1 + v2);
            }
        }
    }
    (kron * half, (kron - gauss).abs() * half)
}

/// Adaptive Gauss-Kronrod quadrature of a real function over [a, b].
pub fn adaptive_quadrature<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, f: &mut F) -> f64 {
    fn recurse<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, f: &mut F, depth: usize) -> f64 {
        let (value, err) = gk15(a, b, f);
        if err <= tol || depth >= 30 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(a, mid, 0.5 * tol, f, depth + 1) + recurse(mid, b, 0.5 * tol, f, depth + 1)
    }
    recurse(a, b, tol, f, 0)
}

/// Line integral of a real scalar function along the segment [a, b].
pub fn oracle_segment_integral<F: Fn(Vec2) -> f64>(a: Vec2, b: Vec2, tol: f64, f: F) -> f64 {
    let length = a.dist(b);
    let dir = (b - a) / length;
    adaptive_quadrature(0.0, length, tol, &mut |t| f(a + dir * t))
}

/// Work integral of a real vector field along the segment [a, b].
pub fn oracle_segment_work<F: Fn(Vec2) -> Vec2>(a: Vec2, b: Vec2, tol: f64, f: F) -> f64 {
    let length = a.dist(b);
    let dir = (b - a) / length;
    adaptive_quadrature(0.0, length, tol, &mut |t| f(a + dir * t).dot(dir))
}

/// Closed counterclockwise loop integral over a circle of the given radius.
pub fn oracle_loop_integral<F: Fn(Vec2) -> Vec2>(center: Vec2, radius: f64, tol: f64, f: F) -> f64 {
    adaptive_quadrature(0.0, std::f64::consts::TAU, tol, &mut |t| {
        let p = center + Vec2::from_angle(t) * radius;
        let tangent = Vec2::from_angle(t).perp();
        f(p).dot(tangent) * radius
    })
}

/// First boundary crossing of the ray found by marching with a fixed step and
/// refining every sign change of the per-component signed distances by
/// bisection. Independent of the library's analytic intersections.
pub fn bisection_first_hit(
    scene: &Scene,
    origin: Vec2,
    dir: Vec2,
    step: f64,
) -> Option<(usize, Vec2, f64)> {
    let max_t = 2.0 * scene.diameter();
    let inside = |component: usize, t: f64| -> f64 {
        let p = origin + dir * t;
        let shape = scene.component(component).unwrap();
        // positive once the ray has crossed the component's boundary
        let d = shape.signed_distance(p);
        if component == 0 {
            d
        } else {
            -d
        }
    };
    let mut best: Option<(usize, Vec2, f64)> = None;
    for component in 0..scene.n_components() {
        let mut t_prev = step;
        let mut f_prev = inside(component, t_prev);
        let mut t = t_prev + step;
        while t <= max_t {
            let f = inside(component, t);
            if f_prev < 0.0 && f >= 0.0 {
                // refine by bisection
                let (mut lo, mut hi) = (t_prev, t);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if inside(component, mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let t_hit = 0.5 * (lo + hi);
                if best.as_ref().map_or(true, |b| t_hit < b.2) {
                    best = Some((component, origin + dir * t_hit, t_hit));
                }
                break;
            }
            t_prev = t;
            f_prev = f;
            t += step;
        }
    }
    best
}

/// Full broken-ray vertex list by the marching oracle: reflects with the
/// specular formula at each obstacle crossing until the outer boundary.
pub fn bisection_trace_vertices(
    scene: &Scene,
    start: Vec2,
    dir: Vec2,
    step: f64,
    max_reflections: usize,
) -> Option<Vec<Vec2>> {
    let mut vertices = vec![start];
    let mut position = start;
    let mut d = dir;
    for _ in 0..=max_reflections {
        let (component, point, _) = bisection_first_hit(scene, position, d, step)?;
        vertices.push(point);
        if component == 0 {
            return Some(vertices);
        }
        let shape = scene.component(component).unwrap();
        let s = shape.project_to_arclength(point);
        let (_, outward, _) = shape.boundary_point(s);
        d = d - outward * (2.0 * d.dot(outward));
        position = point;
    }
    None
}
