//! Composite Simpson quadrature along straight segments and polylines.

use crate::geom::Vec2;
use num_complex::Complex64;

/// Composite Simpson rule for `f` over [0, length], panel width <= max_step.
/// Fourth-order accurate for smooth integrands.
pub fn simpson<F: FnMut(f64) -> Complex64>(length: f64, max_step: f64, mut f: F) -> Complex64 {
    if length == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let panels = (length / max_step).ceil().max(1.0) as usize;
    let h = length / panels as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut left = f(0.0);
    for p in 0..panels {
        let a = p as f64 * h;
        let mid = f(a + 0.5 * h);
        let right = if p + 1 == panels { f(length) } else { f(a + h) };
        sum += (left + mid * 4.0 + right) * (h / 6.0);
        left = right;
    }
    sum
}

/// Line integral of a scalar function along the segment from `a` to `b`
/// with respect to arclength.
pub fn segment_scalar<F: FnMut(Vec2) -> Complex64>(
    a: Vec2,
    b: Vec2,
    max_step: f64,
    mut f: F,
) -> Complex64 {
    let length = a.dist(b);
    if length == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let dir = (b - a) / length;
    simpson(length, max_step, |t| f(a + dir * t))
}

/// Work integral of a vector function along the segment from `a` to `b`:
/// the tangential component integrated with respect to arclength.
pub fn segment_work<F: FnMut(Vec2) -> (Complex64, Complex64)>(
    a: Vec2,
    b: Vec2,
    max_step: f64,
    mut f: F,
) -> Complex64 {
    let length = a.dist(b);
    if length == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let dir = (b - a) / length;
    simpson(length, max_step, |t| {
        let (ax, ay) = f(a + dir * t);
        ax * dir.x + ay * dir.y
    })
}

/// Work integral along a polyline (open or closed as given).
pub fn polyline_work<F: FnMut(Vec2) -> (Complex64, Complex64)>(
    points: &[Vec2],
    max_step: f64,
    mut f: F,
) -> Complex64 {
    points
        .windows(2)
        .map(|w| segment_work(w[0], w[1], max_step, &mut f))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubics() {
        let val = simpson(2.0, 0.5, |t| Complex64::new(t * t * t - t, 0.0));
        // integral of t^3 - t over [0,2] = 4 - 2 = 2
        assert!((val.re - 2.0).abs() < 1e-13);
        assert!(val.im.abs() < 1e-15);
    }

    #[test]
    fn simpson_fourth_order() {
        let exact = 1.0 - (-2.0_f64).exp();
        let err = |step: f64| {
            (simpson(2.0, step, |t| Complex64::new((-t).exp(), 0.0)).re - exact).abs()
        };
        let coarse = err(0.2);
        let fine = err(0.1);
        assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn segment_work_of_constant_field() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(3.0, 4.0);
        let val = segment_work(a, b, 0.1, |_| {
            (Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0))
        });
        // (1,2).(3,4) = 11
        assert!((val.re - 11.0).abs() < 1e-12);
    }
}
