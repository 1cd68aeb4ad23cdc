//! Inverse side: recover the scalar potential from broken-ray integrals,
//! compare gauge classes from phase data, and probe the stability estimate
//! relating the potential's L2 mass to boundary derivatives of the data.

use crate::brt::{data_distance, BrtError, RowOutcome, Sinogram, SinogramKind, SinogramRow};
use crate::fields::{GridField, ScalarField, C64};
use crate::geom::Vec2;
use crate::linalg::{cg_normal_equations, CgReport, CsrMatrix};
use crate::scene::Scene;
use crate::tracer::{reverse, trace, TraceError, TraceOutcome};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("expected a {expected:?} sinogram, got {got:?}")]
    WrongKind { expected: SinogramKind, got: SinogramKind },
    #[error("sampling specs do not match")]
    SpecMismatch,
    #[error("grid too coarse: obstacle hides inside cells {0:?}")]
    GridTooCoarse(Vec<usize>),
    #[error("system has no usable rays")]
    EmptySystem,
    #[error("stability probe needs full-circle direction sampling")]
    NotFullCircle,
    #[error(transparent)]
    Brt(#[from] BrtError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Uniform pixelization of the outer bounding box with per-cell domain-area
/// fractions (16-point subsampling); fraction 0 marks exterior/obstacle cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major fraction[iy * nx + ix] in [0, 1].
    pub fraction: Vec<f64>,
}

impl PixelGrid {
    pub fn new(scene: &Scene, nx: usize, ny: usize) -> Self {
        let (lo, hi) = crate::fields::scene_bbox(scene);
        let dx = (hi.x - lo.x) / nx as f64;
        let dy = (hi.y - lo.y) / ny as f64;
        let mut fraction = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let mut inside = 0usize;
                for b in 0..4 {
                    for a in 0..4 {
                        let p = Vec2::new(
                            lo.x + (ix as f64 + (a as f64 + 0.5) / 4.0) * dx,
                            lo.y + (iy as f64 + (b as f64 + 0.5) / 4.0) * dy,
                        );
                        if scene.signed_distance(p) < 0.0 {
                            inside += 1;
                        }
                    }
                }
                fraction[iy * nx + ix] = inside as f64 / 16.0;
            }
        }
        PixelGrid { x0: lo.x, y0: lo.y, dx, dy, nx, ny, fraction }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn cell_center(&self, cell: usize) -> Vec2 {
        let ix = cell % self.nx;
        let iy = cell / self.nx;
        Vec2::new(
            self.x0 + (ix as f64 + 0.5) * self.dx,
            self.y0 + (iy as f64 + 0.5) * self.dy,
        )
    }

    /// Average of `f` over the in-domain subsamples of a cell: the natural
    /// piecewise-constant projection of the truth onto the grid.
    pub fn cell_average(&self, scene: &Scene, cell: usize, f: &ScalarField) -> C64 {
        let ix = cell % self.nx;
        let iy = cell / self.nx;
        let mut acc = C64::new(0.0, 0.0);
        let mut count = 0usize;
        for b in 0..4 {
            for a in 0..4 {
                let p = Vec2::new(
                    self.x0 + (ix as f64 + (a as f64 + 0.5) / 4.0) * self.dx,
                    self.y0 + (iy as f64 + (b as f64 + 0.5) / 4.0) * self.dy,
                );
                if scene.signed_distance(p) < 0.0 {
                    acc += f.eval(p);
                    count += 1;
                }
            }
        }
        if count == 0 {
            C64::new(0.0, 0.0)
        } else {
            acc / count as f64
        }
    }
}

/// Chord lengths of a segment across the grid cells it traverses.
/// The lengths partition the segment: they sum to its length exactly
/// (up to floating-point addition).
pub fn traverse_segment(grid: &PixelGrid, start: Vec2, end: Vec2) -> Vec<(usize, f64)> {
    let dir = end - start;
    let length = dir.norm();
    if length == 0.0 {
        return Vec::new();
    }
    let d = dir / length;
    let mut ix = (((start.x - grid.x0) / grid.dx).floor() as isize).clamp(0, grid.nx as isize - 1);
    let mut iy = (((start.y - grid.y0) / grid.dy).floor() as isize).clamp(0, grid.ny as isize - 1);
    let (step_x, mut t_max_x, t_delta_x) = if d.x > 0.0 {
        let next = grid.x0 + (ix + 1) as f64 * grid.dx;
        (1isize, (next - start.x) / d.x, grid.dx / d.x)
    } else if d.x < 0.0 {
        let next = grid.x0 + ix as f64 * grid.dx;
        (-1isize, (next - start.x) / d.x, -grid.dx / d.x)
    } else {
        (0isize, f64::INFINITY, f64::INFINITY)
    };
    let (step_y, mut t_max_y, t_delta_y) = if d.y > 0.0 {
        let next = grid.y0 + (iy + 1) as f64 * grid.dy;
        (1isize, (next - start.y) / d.y, grid.dy / d.y)
    } else if d.y < 0.0 {
        let next = grid.y0 + iy as f64 * grid.dy;
        (-1isize, (next - start.y) / d.y, -grid.dy / d.y)
    } else {
        (0isize, f64::INFINITY, f64::INFINITY)
    };
    let mut out = Vec::new();
    let mut t = 0.0_f64;
    loop {
        let t_exit = t_max_x.min(t_max_y).min(length);
        let chord = t_exit - t;
        if chord > 0.0 {
            out.push(((iy as usize) * grid.nx + ix as usize, chord));
        }
        if t_exit >= length {
            break;
        }
        if t_max_x < t_max_y {
            ix += step_x;
            t_max_x += t_delta_x;
        } else {
            iy += step_y;
            t_max_y += t_delta_y;
        }
        if ix < 0 || iy < 0 || ix >= grid.nx as isize || iy >= grid.ny as isize {
            break; // roundoff pushed the walker past the last cell
        }
        t = t_exit;
    }
    out
}

/// Sparse tomographic system: one row per usable sinogram row, one column per
/// unknown cell, entries are chord lengths.
#[derive(Debug, Clone)]
pub struct RaySystem {
    pub matrix: CsrMatrix,
    pub b: Vec<C64>,
    /// Cell index of each column.
    pub cols: Vec<usize>,
    /// Number of rays with positive chord length per column.
    pub coverage: Vec<u32>,
    /// (s, theta) of each kept row.
    pub row_meta: Vec<(f64, f64)>,
    pub grid: PixelGrid,
}

impl RaySystem {
    pub fn column_of_cell(&self, cell: usize) -> Option<usize> {
        self.cols.binary_search(&cell).ok()
    }
}

/// Assemble the system from every ok row of a scalar-integral sinogram.
pub fn build_system(
    scene: &Scene,
    grid: &PixelGrid,
    sinogram: &Sinogram,
) -> Result<RaySystem, ReconError> {
    build_system_with(scene, grid, sinogram, |_| true)
}

/// Assemble from the ok rows that also pass `keep` (for ablations such as
/// straight-rays-only).
pub fn build_system_with(
    scene: &Scene,
    grid: &PixelGrid,
    sinogram: &Sinogram,
    keep: impl Fn(&SinogramRow) -> bool + Sync,
) -> Result<RaySystem, ReconError> {
    if sinogram.kind != SinogramKind::ScalarIntegral {
        return Err(ReconError::WrongKind {
            expected: SinogramKind::ScalarIntegral,
            got: sinogram.kind,
        });
    }
    check_grid_resolution(scene, grid)?;

    let kept: Vec<&SinogramRow> = sinogram
        .rows
        .iter()
        .filter(|r| r.outcome == RowOutcome::Ok && keep(r))
        .collect();
    if kept.is_empty() {
        return Err(ReconError::EmptySystem);
    }

    let traced: Vec<Result<(BTreeMap<usize, f64>, C64, (f64, f64)), ReconError>> = kept
        .par_iter()
        .map(|row| {
            let theta_dir = Vec2::from_angle(row.theta);
            let outcome = trace(scene, row.s, -theta_dir, sinogram.max_reflections)?;
            let ray = match outcome {
                TraceOutcome::Ray(back) => reverse(&back),
                _ => return Err(ReconError::EmptySystem), // cannot happen: row was ok
            };
            let mut cells: BTreeMap<usize, f64> = BTreeMap::new();
            for leg in &ray.legs {
                for (cell, len) in traverse_segment(grid, leg.start, leg.end) {
                    *cells.entry(cell).or_insert(0.0) += len;
                }
            }
            Ok((cells, row.value.expect("ok rows carry values"), (row.s, row.theta)))
        })
        .collect();

    // Columns: cells the mask marks as domain plus any cell a ray actually
    // crossed (thin slivers the 16-point subsampling can miss).
    let mut is_col = vec![false; grid.n_cells()];
    for (cell, &f) in grid.fraction.iter().enumerate() {
        if f > 0.0 {
            is_col[cell] = true;
        }
    }
    for (cells, _, _) in traced.iter().flatten() {
        for &cell in cells.keys() {
            is_col[cell] = true;
        }
    }
    let cols: Vec<usize> = (0..grid.n_cells()).filter(|&c| is_col[c]).collect();
    let mut col_of_cell = vec![usize::MAX; grid.n_cells()];
    for (k, &cell) in cols.iter().enumerate() {
        col_of_cell[cell] = k;
    }

    let mut rows = Vec::with_capacity(traced.len());
    let mut b = Vec::with_capacity(traced.len());
    let mut row_meta = Vec::with_capacity(traced.len());
    let mut coverage = vec![0u32; cols.len()];
    for t in traced {
        let (cells, value, meta) = t?;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(cells.len());
        for (cell, len) in cells {
            let col = col_of_cell[cell];
            row.push((col, len));
            coverage[col] += 1;
        }
        rows.push(row);
        b.push(value);
        row_meta.push(meta);
    }

    Ok(RaySystem {
        matrix: CsrMatrix::from_rows(cols.len(), &rows),
        b,
        cols,
        coverage,
        row_meta,
        grid: grid.clone(),
    })
}

fn check_grid_resolution(scene: &Scene, grid: &PixelGrid) -> Result<(), ReconError> {
    let mut flagged = Vec::new();
    for obstacle in &scene.obstacles {
        let center = obstacle.interior_point();
        let radius = obstacle.max_distance_from(center);
        if 2.0 * radius < grid.dx.min(grid.dy) {
            let ix = (((center.x - grid.x0) / grid.dx).floor() as isize)
                .clamp(0, grid.nx as isize - 1) as usize;
            let iy = (((center.y - grid.y0) / grid.dy).floor() as isize)
                .clamp(0, grid.ny as isize - 1) as usize;
            flagged.push(iy * grid.nx + ix);
        }
    }
    if flagged.is_empty() {
        Ok(())
    } else {
        Err(ReconError::GridTooCoarse(flagged))
    }
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    /// Value per system column.
    pub values: Vec<C64>,
    /// Cell-centered grid field over the full pixel grid (zeros off-system).
    pub field: GridField,
    pub cg: CgReport,
}

/// Regularized least squares via conjugate gradient on the normal equations:
/// min |Mv - b|^2 + lambda |v|^2, stopping at relative residual 1e-8 or
/// 10 * n_cells iterations. Stagnation is reported, never silent.
pub fn reconstruct_scalar(system: &RaySystem, lambda: f64) -> Result<ReconResult, ReconError> {
    if system.matrix.n_rows == 0 || system.matrix.n_cols == 0 {
        return Err(ReconError::EmptySystem);
    }
    let (values, cg) = cg_normal_equations(
        &system.matrix,
        &system.b,
        lambda,
        1e-8,
        10 * system.matrix.n_cols,
    );
    let grid = &system.grid;
    let mut node_values = vec![C64::new(0.0, 0.0); grid.n_cells()];
    for (k, &cell) in system.cols.iter().enumerate() {
        node_values[cell] = values[k];
    }
    let field = GridField::new(
        Vec2::new(grid.x0 + 0.5 * grid.dx, grid.y0 + 0.5 * grid.dy),
        grid.dx,
        grid.dy,
        grid.nx,
        grid.ny,
        node_values,
    )
    .expect("grid dimensions are valid");
    Ok(ReconResult { values, field, cg })
}

/// Area-weighted relative L2 error of a reconstruction against the cell
/// averages of the truth, over columns with coverage >= `min_coverage`.
pub fn relative_l2_error(
    system: &RaySystem,
    result: &ReconResult,
    scene: &Scene,
    truth: &ScalarField,
    min_coverage: u32,
) -> f64 {
    let grid = &system.grid;
    let mut num = 0.0_f64;
    let mut den = 0.0_f64;
    for (k, &cell) in system.cols.iter().enumerate() {
        if system.coverage[k] < min_coverage {
            continue;
        }
        let weight = grid.cell_area() * grid.fraction[cell];
        if weight == 0.0 {
            continue;
        }
        let t = grid.cell_average(scene, cell, truth);
        num += (result.values[k] - t).norm_sqr() * weight;
        den += t.norm_sqr() * weight;
    }
    if den == 0.0 {
        return f64::NAN;
    }
    (num / den).sqrt()
}

/// Same error restricted to an explicit cell set (e.g. a shadow band).
pub fn relative_l2_error_on_cells(
    system: &RaySystem,
    result: &ReconResult,
    scene: &Scene,
    truth: &ScalarField,
    cells: &[usize],
) -> f64 {
    let grid = &system.grid;
    let mut num = 0.0_f64;
    let mut den = 0.0_f64;
    for &cell in cells {
        let weight = grid.cell_area() * grid.fraction[cell];
        if weight == 0.0 {
            continue;
        }
        let t = grid.cell_average(scene, cell, truth);
        let v = system
            .column_of_cell(cell)
            .map(|k| result.values[k])
            .unwrap_or_else(|| C64::new(0.0, 0.0));
        num += (v - t).norm_sqr() * weight;
        den += t.norm_sqr() * weight;
    }
    if den == 0.0 {
        return f64::NAN;
    }
    (num / den).sqrt()
}

// ---------------------------------------------------------------------------
// Gauge-class detection from phase data
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum GaugeClassDecision {
    Same { max_gap: f64 },
    Different { max_gap: f64, witness: (f64, f64) },
}

/// Compare two phase-factor sinograms row by row: the potentials' gauge
/// classes differ exactly when some broken ray picks up different phases.
pub fn detect_gauge_class(
    w1: &Sinogram,
    w2: &Sinogram,
    tol: f64,
) -> Result<GaugeClassDecision, ReconError> {
    for w in [w1, w2] {
        if w.kind != SinogramKind::PhaseFactor {
            return Err(ReconError::WrongKind { expected: SinogramKind::PhaseFactor, got: w.kind });
        }
    }
    if w1.spec != w2.spec {
        return Err(ReconError::SpecMismatch);
    }
    let d = data_distance(w1, w2)?;
    if d.max_abs > tol {
        Ok(GaugeClassDecision::Different {
            max_gap: d.max_abs,
            witness: d.witness.unwrap_or((0.0, 0.0)),
        })
    } else {
        Ok(GaugeClassDecision::Same { max_gap: d.max_abs })
    }
}

// ---------------------------------------------------------------------------
// Stability probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Integral of |f|^2 over the domain (area-weighted cells).
    pub lhs: f64,
    /// Boundary functional with |dw/ds| to the first power, as printed.
    pub rhs_first_power: f64,
    /// Variant with |dw/ds|^2, for the dimensional-consistency comparison.
    pub rhs_squared: f64,
    /// lhs / rhs; None when both sides vanish (reported, not invented).
    pub ratio_first_power: Option<f64>,
    pub ratio_squared: Option<f64>,
    pub used_samples: usize,
    pub skipped_samples: usize,
    /// Per-sample integrand rows (s, theta, |dw/ds|, |dw/dtheta|) over the
    /// samples whose stencils are complete.
    pub integrand: Vec<(f64, f64, f64, f64)>,
}

/// Evaluate both sides of the broken-ray stability estimate on a tabulated
/// scalar sinogram: central differences in s (period l0) and theta (period
/// 2 pi) on ok rows, trapezoidal quadrature over the boundary-direction grid.
pub fn stability_report(
    sinogram: &Sinogram,
    f: &ScalarField,
    scene: &Scene,
    grid: &PixelGrid,
) -> Result<StabilityReport, ReconError> {
    if sinogram.kind != SinogramKind::ScalarIntegral {
        return Err(ReconError::WrongKind {
            expected: SinogramKind::ScalarIntegral,
            got: sinogram.kind,
        });
    }
    let spec = &sinogram.spec;
    if (spec.theta_max - spec.theta_min - std::f64::consts::TAU).abs() > 1e-9 {
        return Err(ReconError::NotFullCircle);
    }
    let ns = spec.ns;
    let ntheta = spec.ntheta;
    let ds = sinogram.l0 / ns as f64;
    let dtheta = spec.theta_step();

    let value = |i: usize, j: usize| -> Option<C64> {
        let row = sinogram.row(i, j);
        if row.outcome == RowOutcome::Ok {
            row.value
        } else {
            None
        }
    };

    let mut rhs_first = 0.0_f64;
    let mut rhs_sq = 0.0_f64;
    let mut used = 0usize;
    let mut skipped = 0usize;
    let mut integrand = Vec::new();
    for i in 0..ns {
        for j in 0..ntheta {
            let stencil = (
                value(i, j),
                value((i + 1) % ns, j),
                value((i + ns - 1) % ns, j),
                value(i, (j + 1) % ntheta),
                value(i, (j + ntheta - 1) % ntheta),
            );
            match stencil {
                (Some(_), Some(s_plus), Some(s_minus), Some(t_plus), Some(t_minus)) => {
                    let dws = (s_plus - s_minus).norm() / (2.0 * ds);
                    let dwt = (t_plus - t_minus).norm() / (2.0 * dtheta);
                    rhs_first += (dws + dwt * dwt) * ds * dtheta;
                    rhs_sq += (dws * dws + dwt * dwt) * ds * dtheta;
                    let row = sinogram.row(i, j);
                    integrand.push((row.s, row.theta, dws, dwt));
                    used += 1;
                }
                _ => skipped += 1,
            }
        }
    }

    let mut lhs = 0.0_f64;
    for cell in 0..grid.n_cells() {
        let frac = grid.fraction[cell];
        if frac > 0.0 {
            lhs += f.eval(grid.cell_center(cell)).norm_sqr() * grid.cell_area() * frac;
        }
    }
    let ratio = |rhs: f64| if rhs > 0.0 { Some(lhs / rhs) } else { None };
    let _ = scene;
    Ok(StabilityReport {
        lhs,
        rhs_first_power: rhs_first,
        rhs_squared: rhs_sq,
        ratio_first_power: ratio(rhs_first),
        ratio_squared: ratio(rhs_sq),
        used_samples: used,
        skipped_samples: skipped,
        integrand,
    })
}

/// Deterministic family of random Gaussian phantoms supported in the domain.
pub fn random_phantoms(scene: &Scene, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = crate::fields::scene_bbox(scene);
    let diameter = scene.diameter();
    let mut phantoms = Vec::with_capacity(count);
    while phantoms.len() < count {
        let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        // keep the bulk of the bump inside the domain
        if scene.signed_distance(p) > -0.09 * diameter {
            continue;
        }
        let width = rng.gen_range(0.05..0.10) * diameter;
        let amplitude = rng.gen_range(0.5..2.0);
        phantoms.push(ScalarField::Gaussian {
            center: p,
            width,
            amplitude: C64::new(amplitude, 0.0),
        });
    }
    phantoms
}
