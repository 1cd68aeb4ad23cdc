//! Frequency-domain magnetic Schroedinger solver on grid-aligned rectangular
//! geometry, and the discrete Dirichlet-to-Neumann matrix it induces.
//!
//! The discretization is gauge-covariant: each grid edge carries a link phase
//! exp(-i * integral of A along the edge), so multiplying node values by
//! exp(i*phi_p) conjugates the assembled operator exactly. Dirichlet data on
//! the outer rectangle is eliminated into the right-hand side; obstacle nodes
//! are held at zero. The Neumann trace is the one-sided covariant difference
//! (g_p - U w_q) / h toward the unique interior neighbor, which expands to
//! dw/dnu + i (A.nu) w + O(h).

use crate::fields::{ScalarField, VectorField, C64};
use crate::geom::Vec2;
use crate::linalg::{BandLu, BandMatrix, LinalgError};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Factor on the median diagonal magnitude below which the smallest singular
/// value flags the frequency as near-singular.
pub const DEFAULT_SINGULAR_MARGIN: f64 = 1e-4;

/// Refusal threshold for solves: below this the factorization is hopeless.
const SOLVE_REFUSAL_MARGIN: f64 = 1e-11;

const TARGET_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectObstacle {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Outer rectangle `[0,a] x [0,b]` with axis-aligned rectangular obstacles,
/// all edges on grid lines of spacing h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectScene {
    pub width: f64,
    pub height: f64,
    pub h: f64,
    pub obstacles: Vec<RectObstacle>,
}

#[derive(Debug, Error)]
pub enum DtnError {
    #[error("invalid rectilinear scene: {0}")]
    InvalidScene(String),
    #[error("frequency is near-singular (sigma_min {sigma_min:.3e} < {threshold:.3e})")]
    NearSingular { sigma_min: f64, threshold: f64 },
    #[error("solve residual {residual:.3e} exceeds {TARGET_RESIDUAL:.0e}")]
    ResidualTooLarge { residual: f64 },
    #[error("boundary data has {got} entries, expected {expected}")]
    DataLength { got: usize, expected: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn near_integer(x: f64) -> Option<usize> {
    let r = x.round();
    if (x - r).abs() < 1e-9 * x.abs().max(1.0) && r >= 0.0 {
        Some(r as usize)
    } else {
        None
    }
}

impl RectScene {
    pub fn new(width: f64, height: f64, h: f64, obstacles: Vec<RectObstacle>) -> Result<Self, DtnError> {
        let scene = RectScene { width, height, h, obstacles };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), DtnError> {
        let bad = |msg: String| Err(DtnError::InvalidScene(msg));
        if !self.h.is_finite() || self.h <= 0.0 {
            return bad(format!("grid spacing {} must be positive", self.h));
        }
        let nx = match near_integer(self.width / self.h) {
            Some(n) if n >= 3 => n,
            _ => return bad(format!("width {} is not a multiple (>= 3) of h {}", self.width, self.h)),
        };
        let ny = match near_integer(self.height / self.h) {
            Some(n) if n >= 3 => n,
            _ => return bad(format!("height {} is not a multiple (>= 3) of h {}", self.height, self.h)),
        };
        let mut spans = Vec::new();
        for (k, ob) in self.obstacles.iter().enumerate() {
            let idx = [ob.x0, ob.y0, ob.x1, ob.y1]
                .iter()
                .map(|v| near_integer(v / self.h))
                .collect::<Option<Vec<usize>>>();
            let idx = match idx {
                Some(v) => v,
                None => return bad(format!("obstacle {k} edges are not on grid lines of h {}", self.h)),
            };
            let (ix0, iy0, ix1, iy1) = (idx[0], idx[1], idx[2], idx[3]);
            if ix0 >= ix1 || iy0 >= iy1 {
                return bad(format!("obstacle {k} is degenerate"));
            }
            if ix0 < 2 || iy0 < 2 || ix1 + 2 > nx || iy1 + 2 > ny {
                return bad(format!("obstacle {k} clearance to the outer boundary is below 2h"));
            }
            spans.push((ix0, iy0, ix1, iy1));
        }
        for a in 0..spans.len() {
            for b in a + 1..spans.len() {
                let (ax0, ay0, ax1, ay1) = spans[a];
                let (bx0, by0, bx1, by1) = spans[b];
                let gap_x = (bx0 as isize - ax1 as isize).max(ax0 as isize - bx1 as isize);
                let gap_y = (by0 as isize - ay1 as isize).max(ay0 as isize - by1 as isize);
                if gap_x.max(gap_y) < 2 {
                    return bad(format!("obstacles {a} and {b} are closer than 2h"));
                }
            }
        }
        Ok(())
    }

    /// Grid intervals along x and y.
    pub fn intervals(&self) -> (usize, usize) {
        (
            near_integer(self.width / self.h).expect("validated"),
            near_integer(self.height / self.h).expect("validated"),
        )
    }

    pub fn node_pos(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(i as f64 * self.h, j as f64 * self.h)
    }

    fn in_obstacle(&self, i: usize, j: usize) -> bool {
        let p = self.node_pos(i, j);
        let tol = 1e-9 * self.h;
        self.obstacles.iter().any(|ob| {
            p.x >= ob.x0 - tol && p.x <= ob.x1 + tol && p.y >= ob.y0 - tol && p.y <= ob.y1 + tol
        })
    }

    /// Outer-boundary grid nodes counterclockwise from the origin corner,
    /// corners excluded (the normal is undefined there).
    pub fn boundary_nodes(&self) -> Vec<BoundaryNode> {
        let (nx, ny) = self.intervals();
        let mut nodes = Vec::with_capacity(2 * (nx - 1) + 2 * (ny - 1));
        for i in 1..nx {
            nodes.push(BoundaryNode { i, j: 0, outward: Vec2::new(0.0, -1.0) });
        }
        for j in 1..ny {
            nodes.push(BoundaryNode { i: nx, j, outward: Vec2::new(1.0, 0.0) });
        }
        for i in (1..nx).rev() {
            nodes.push(BoundaryNode { i, j: ny, outward: Vec2::new(0.0, 1.0) });
        }
        for j in (1..ny).rev() {
            nodes.push(BoundaryNode { i: 0, j, outward: Vec2::new(-1.0, 0.0) });
        }
        nodes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub i: usize,
    pub j: usize,
    pub outward: Vec2,
}

/// Rule for the per-edge integral of A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkQuadrature {
    /// Closed-form edge integrals where the preset admits them
    /// (constants, gradients, flux lines); midpoint rule otherwise.
    Analytic,
    /// Midpoint rule everywhere: h * A(midpoint) . direction, O(h^2).
    Midpoint,
}

/// Integral of A along the grid edge from `from` to `to`.
pub fn edge_integral(a: &VectorField, from: Vec2, to: Vec2, rule: LinkQuadrature) -> C64 {
    match rule {
        LinkQuadrature::Analytic => {
            crate::fields::line_integral(a, from, to, from.dist(to))
        }
        LinkQuadrature::Midpoint => {
            let (ax, ay) = a.eval((from + to) * 0.5);
            let d = to - from;
            ax * d.x + ay * d.y
        }
    }
}

/// Where a stencil arm lands.
#[derive(Debug, Clone, Copy)]
enum Neighbor {
    /// Another unknown, with the transport phase U_{p<-q}.
    Unknown(usize, C64),
    /// An outer-boundary node (index into the boundary node list) with its
    /// transport phase; contributes U/h^2 * data to the right-hand side.
    Outer(usize, C64),
    /// An obstacle node: held at zero, contributes nothing beyond the diagonal.
    Obstacle,
}

/// The assembled interior system: gauge-covariant 5-point stencil plus
/// diagonal V - k^2.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub scene: RectScene,
    pub k2: C64,
    n_unknowns: usize,
    kl: usize,
    diag: Vec<C64>,
    neighbors: Vec<[Neighbor; 4]>,
    /// Grid coordinates of each unknown, exposed for stencil tests.
    pub node_of_unknown: Vec<(usize, usize)>,
    boundary: Vec<BoundaryNode>,
    /// exp(-i * edge integral from the interior neighbor q_p to boundary node p).
    trace_links: Vec<C64>,
    /// Unknown index of the interior neighbor of each boundary node.
    trace_neighbor: Vec<usize>,
}

/// Build the discrete operator for (sum_j (-i d_j + A_j)^2 + V - k^2) w = 0.
pub fn assemble(
    scene: &RectScene,
    a: &VectorField,
    v: &ScalarField,
    k2: C64,
    rule: LinkQuadrature,
) -> Result<DiscreteOperator, DtnError> {
    scene.validate()?;
    let (nx, ny) = scene.intervals();
    let n_nodes = (nx + 1) * (ny + 1);
    let node_id = |i: usize, j: usize| j * (nx + 1) + i;

    let boundary = scene.boundary_nodes();
    let mut boundary_index = vec![usize::MAX; n_nodes];
    for (b, node) in boundary.iter().enumerate() {
        boundary_index[node_id(node.i, node.j)] = b;
    }

    let mut unknown_of_node = vec![None; n_nodes];
    let mut node_of_unknown = Vec::new();
    for j in 1..ny {
        for i in 1..nx {
            if !scene.in_obstacle(i, j) {
                unknown_of_node[node_id(i, j)] = Some(node_of_unknown.len());
                node_of_unknown.push((i, j));
            }
        }
    }
    let n_unknowns = node_of_unknown.len();
    if n_unknowns == 0 {
        return Err(DtnError::InvalidScene("no interior unknowns".into()));
    }

    let h = scene.h;
    let inv_h2 = 1.0 / (h * h);
    let mut diag = Vec::with_capacity(n_unknowns);
    let mut neighbors = Vec::with_capacity(n_unknowns);
    let mut kl = 0usize;
    for (u, &(i, j)) in node_of_unknown.iter().enumerate() {
        let p = scene.node_pos(i, j);
        diag.push(C64::new(4.0 * inv_h2, 0.0) + v.eval(p) - k2);
        let steps = [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)];
        let mut arms = [Neighbor::Obstacle; 4];
        for (arm, &(di, dj)) in steps.iter().enumerate() {
            let qi = (i as isize + di) as usize;
            let qj = (j as isize + dj) as usize;
            let q = scene.node_pos(qi, qj);
            // transport q -> p
            let phase = (-C64::i() * edge_integral(a, q, p, rule)).exp();
            let qid = node_id(qi, qj);
            arms[arm] = if let Some(uq) = unknown_of_node[qid] {
                kl = kl.max(u.abs_diff(uq));
                Neighbor::Unknown(uq, phase)
            } else if boundary_index[qid] != usize::MAX {
                Neighbor::Outer(boundary_index[qid], phase)
            } else {
                Neighbor::Obstacle
            };
        }
        neighbors.push(arms);
    }

    let mut trace_links = Vec::with_capacity(boundary.len());
    let mut trace_neighbor = Vec::with_capacity(boundary.len());
    for node in &boundary {
        let p = scene.node_pos(node.i, node.j);
        let qi = (node.i as isize - node.outward.x as isize) as usize;
        let qj = (node.j as isize - node.outward.y as isize) as usize;
        let q = scene.node_pos(qi, qj);
        let u = unknown_of_node[node_id(qi, qj)]
            .ok_or_else(|| DtnError::InvalidScene("boundary node lacks an interior neighbor".into()))?;
        trace_links.push((-C64::i() * edge_integral(a, q, p, rule)).exp());
        trace_neighbor.push(u);
    }

    Ok(DiscreteOperator {
        scene: scene.clone(),
        k2,
        n_unknowns,
        kl,
        diag,
        neighbors,
        node_of_unknown,
        boundary,
        trace_links,
        trace_neighbor,
    })
}

impl DiscreteOperator {
    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    /// Matrix entry (p, q) of the interior system, for tests and probes.
    pub fn entry(&self, p: usize, q: usize) -> C64 {
        let inv_h2 = 1.0 / (self.scene.h * self.scene.h);
        if p == q {
            return self.diag[p];
        }
        for arm in &self.neighbors[p] {
            if let Neighbor::Unknown(uq, phase) = arm {
                if *uq == q {
                    return -*phase * inv_h2;
                }
            }
        }
        C64::new(0.0, 0.0)
    }

    /// y = M x for the interior system.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let inv_h2 = 1.0 / (self.scene.h * self.scene.h);
        let mut y = vec![C64::new(0.0, 0.0); self.n_unknowns];
        for p in 0..self.n_unknowns {
            let mut acc = self.diag[p] * x[p];
            for arm in &self.neighbors[p] {
                if let Neighbor::Unknown(q, phase) = arm {
                    acc -= *phase * x[*q] * inv_h2;
                }
            }
            y[p] = acc;
        }
        y
    }

    /// Right-hand side induced by Dirichlet data on the outer boundary.
    fn rhs(&self, data: &[C64]) -> Vec<C64> {
        let inv_h2 = 1.0 / (self.scene.h * self.scene.h);
        let mut rhs = vec![C64::new(0.0, 0.0); self.n_unknowns];
        for p in 0..self.n_unknowns {
            for arm in &self.neighbors[p] {
                if let Neighbor::Outer(b, phase) = arm {
                    rhs[p] += *phase * data[*b] * inv_h2;
                }
            }
        }
        rhs
    }

    fn band_matrix(&self) -> BandMatrix {
        let inv_h2 = 1.0 / (self.scene.h * self.scene.h);
        let mut band = BandMatrix::zeros(self.n_unknowns, self.kl, self.kl);
        for p in 0..self.n_unknowns {
            band.set(p, p, self.diag[p]);
            for arm in &self.neighbors[p] {
                if let Neighbor::Unknown(q, phase) = arm {
                    band.set(p, *q, -*phase * inv_h2);
                }
            }
        }
        band
    }

    pub fn factorize(&self) -> Result<BandLu, DtnError> {
        Ok(self.band_matrix().factorize()?)
    }

    pub fn median_diag(&self) -> f64 {
        let mut mags: Vec<f64> = self.diag.iter().map(|d| d.norm()).collect();
        mags.sort_by(f64::total_cmp);
        mags[mags.len() / 2]
    }

    /// Solve with iterative refinement; errors if the verified relative
    /// residual cannot be brought to 1e-10.
    fn solve_refined(&self, lu: &BandLu, rhs: &[C64]) -> Result<Vec<C64>, DtnError> {
        let rhs_norm = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let mut x = lu.solve(rhs);
        if rhs_norm == 0.0 {
            return Ok(x);
        }
        for _ in 0..4 {
            let ax = self.apply(&x);
            let r: Vec<C64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let res = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() / rhs_norm;
            if res <= TARGET_RESIDUAL {
                return Ok(x);
            }
            let dx = lu.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += *di;
            }
        }
        let ax = self.apply(&x);
        let res = rhs
            .iter()
            .zip(&ax)
            .map(|(b, a)| (b - a).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / rhs_norm;
        if res <= TARGET_RESIDUAL {
            Ok(x)
        } else {
            Err(DtnError::ResidualTooLarge { residual: res })
        }
    }

    /// Smallest-singular-value estimate via inverse iteration on M^H M,
    /// reusing a factorization. Also returns the iterated vector.
    fn sigma_min_with_vector(&self, lu: &BandLu, iterations: usize, seed: u64) -> (f64, Vec<C64>) {
        let n = self.n_unknowns;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = |x: &[C64]| x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let nv = norm(&v);
        for vi in v.iter_mut() {
            *vi /= nv;
        }
        let mut lambda = 0.0_f64;
        for _ in 0..iterations {
            let y = lu.solve_conj_transpose(&v);
            let z = lu.solve(&y);
            lambda = norm(&z);
            if !lambda.is_finite() || lambda == 0.0 {
                return (0.0, v);
            }
            for (vi, zi) in v.iter_mut().zip(&z) {
                *vi = zi / lambda;
            }
        }
        (1.0 / lambda.sqrt(), v)
    }

    fn sigma_min(&self, lu: &BandLu, iterations: usize, seed: u64) -> f64 {
        self.sigma_min_with_vector(lu, iterations, seed).0
    }
}

/// Full-grid solution with boundary and obstacle values filled in.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub nx_nodes: usize,
    pub ny_nodes: usize,
    pub h: f64,
    /// Row-major: values[j * nx_nodes + i].
    pub values: Vec<C64>,
}

impl GridSolution {
    pub fn value(&self, i: usize, j: usize) -> C64 {
        self.values[j * self.nx_nodes + i]
    }
}

/// Solve the Dirichlet problem for the given outer-boundary data
/// (ordered as `RectScene::boundary_nodes`, corners excluded and implicitly 0).
pub fn solve_dirichlet(op: &DiscreteOperator, data: &[C64]) -> Result<GridSolution, DtnError> {
    if data.len() != op.boundary.len() {
        return Err(DtnError::DataLength { got: data.len(), expected: op.boundary.len() });
    }
    let lu = op.factorize()?;
    let sigma = op.sigma_min(&lu, 6, 0x5eed);
    let refusal = SOLVE_REFUSAL_MARGIN * op.median_diag();
    if sigma < refusal {
        return Err(DtnError::NearSingular { sigma_min: sigma, threshold: refusal });
    }
    let x = op.solve_refined(&lu, &op.rhs(data))?;
    Ok(assemble_grid(op, data, &x))
}

fn assemble_grid(op: &DiscreteOperator, data: &[C64], x: &[C64]) -> GridSolution {
    let (nx, ny) = op.scene.intervals();
    let mut values = vec![C64::new(0.0, 0.0); (nx + 1) * (ny + 1)];
    for (u, &(i, j)) in op.node_of_unknown.iter().enumerate() {
        values[j * (nx + 1) + i] = x[u];
    }
    for (b, node) in op.boundary.iter().enumerate() {
        values[node.j * (nx + 1) + node.i] = data[b];
    }
    GridSolution {
        nx_nodes: nx + 1,
        ny_nodes: ny + 1,
        h: op.scene.h,
        values,
    }
}

/// Dense discrete Dirichlet-to-Neumann matrix at a fixed frequency:
/// column j is the covariant Neumann trace of the solution with unit hat
/// data at boundary node j.
#[derive(Debug, Clone, PartialEq)]
pub struct DtnMatrix {
    pub k2: C64,
    pub nodes: Vec<Vec2>,
    /// Row-major n x n.
    pub entries: Vec<C64>,
}

impl DtnMatrix {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.nodes.len() + col]
    }

    pub fn apply(&self, data: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(data.len(), n);
        (0..n)
            .map(|r| (0..n).map(|c| self.get(r, c) * data[c]).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn frobenius_gap(&self, other: &DtnMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_entry_gap(&self, other: &DtnMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// || L - L^H ||_F / || L ||_F.
    pub fn hermitian_residual(&self) -> f64 {
        let n = self.dim();
        let mut gap = 0.0_f64;
        for r in 0..n {
            for c in 0..n {
                gap += (self.get(r, c) - self.get(c, r).conj()).norm_sqr();
            }
        }
        gap.sqrt() / self.frobenius_norm()
    }

    pub fn conj_transpose(&self) -> DtnMatrix {
        let n = self.dim();
        let mut entries = vec![C64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                entries[r * n + c] = self.get(c, r).conj();
            }
        }
        DtnMatrix { k2: self.k2, nodes: self.nodes.clone(), entries }
    }

    pub fn write_json(&self, path: &Path) -> Result<(), DtnError> {
        let file = DtnMatrixFile {
            k2: (self.k2.re, self.k2.im),
            nodes: self.nodes.iter().map(|p| (p.x, p.y)).collect(),
            entries: self.entries.iter().map(|e| (e.re, e.im)).collect(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<DtnMatrix, DtnError> {
        let text = std::fs::read_to_string(path)?;
        let file: DtnMatrixFile = serde_json::from_str(&text)?;
        let n = file.nodes.len();
        if file.entries.len() != n * n {
            return Err(DtnError::InvalidScene(format!(
                "matrix file has {} entries for {} nodes",
                file.entries.len(),
                n
            )));
        }
        Ok(DtnMatrix {
            k2: C64::new(file.k2.0, file.k2.1),
            nodes: file.nodes.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            entries: file.entries.iter().map(|&(re, im)| C64::new(re, im)).collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DtnMatrixFile {
    k2: (f64, f64),
    nodes: Vec<(f64, f64)>,
    entries: Vec<(f64, f64)>,
}

/// Assemble and solve per boundary node to build the full D-to-N matrix.
/// One factorization is shared across the per-column solves.
pub fn dtn_matrix(
    scene: &RectScene,
    a: &VectorField,
    v: &ScalarField,
    k2: C64,
    rule: LinkQuadrature,
) -> Result<DtnMatrix, DtnError> {
    let op = assemble(scene, a, v, k2, rule)?;
    let lu = op.factorize()?;
    let sigma = op.sigma_min(&lu, 6, 0x5eed);
    let refusal = SOLVE_REFUSAL_MARGIN * op.median_diag();
    if sigma < refusal {
        return Err(DtnError::NearSingular { sigma_min: sigma, threshold: refusal });
    }
    let n = op.boundary.len();
    let h = op.scene.h;
    let columns: Vec<Result<Vec<C64>, DtnError>> = (0..n)
        .into_par_iter()
        .map(|col| {
            let mut data = vec![C64::new(0.0, 0.0); n];
            data[col] = C64::new(1.0, 0.0);
            let x = op.solve_refined(&lu, &op.rhs(&data))?;
            // covariant one-sided normal difference at every boundary node
            Ok((0..n)
                .map(|p| {
                    let g_p = data[p];
                    let w_q = x[op.trace_neighbor[p]];
                    (g_p - op.trace_links[p] * w_q) / h
                })
                .collect())
        })
        .collect();
    let mut entries = vec![C64::new(0.0, 0.0); n * n];
    for (col, column) in columns.into_iter().enumerate() {
        let column = column?;
        for (row, value) in column.into_iter().enumerate() {
            entries[row * n + col] = value;
        }
    }
    Ok(DtnMatrix {
        k2,
        nodes: op.boundary.iter().map(|b| op.scene.node_pos(b.i, b.j)).collect(),
        entries,
    })
}

/// || L(conj A, conj V) - L(A, V)^H ||_F / || L(A, V) ||_F at real k^2.
/// Zero in exact arithmetic: conjugating the potentials conjugate-transposes
/// the discrete operator, hence the D-to-N matrix.
pub fn adjoint_residual(
    scene: &RectScene,
    a: &VectorField,
    v: &ScalarField,
    k2: f64,
    rule: LinkQuadrature,
) -> Result<f64, DtnError> {
    let k2 = C64::new(k2, 0.0);
    let lam = dtn_matrix(scene, a, v, k2, rule)?;
    let lam_conj = dtn_matrix(scene, &a.conjugate(), &v.conjugate(), k2, rule)?;
    Ok(lam_conj.frobenius_gap(&lam.conj_transpose()) / lam.frobenius_norm())
}

#[derive(Debug, Clone)]
pub struct SingularityProbe {
    pub flagged: bool,
    pub sigma_min: f64,
    pub threshold: f64,
    /// Estimate of the k^2 value where the interior system is singular,
    /// from the Rayleigh quotient of the inverse-iteration vector.
    pub nearest_k2: C64,
}

/// Probe whether k^2 sits near a Dirichlet eigenvalue of the interior system.
pub fn near_singular(
    scene: &RectScene,
    a: &VectorField,
    v: &ScalarField,
    k2: C64,
    margin: f64,
    rule: LinkQuadrature,
) -> Result<SingularityProbe, DtnError> {
    let op = assemble(scene, a, v, k2, rule)?;
    let threshold = margin * op.median_diag();
    let lu = match op.band_matrix().factorize() {
        Ok(lu) => lu,
        // an exactly singular factorization is the strongest possible flag
        Err(LinalgError::Singular { .. }) => {
            return Ok(SingularityProbe {
                flagged: true,
                sigma_min: 0.0,
                threshold,
                nearest_k2: k2,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let (sigma, vvec) = op.sigma_min_with_vector(&lu, 12, 0x51994);
    // Rayleigh quotient of M with the smallest singular vector approximates
    // the eigenvalue of the interior operator nearest k^2 (shifted back).
    let mv = op.apply(&vvec);
    let mu: C64 = vvec.iter().zip(&mv).map(|(v, m)| v.conj() * m).sum();
    Ok(SingularityProbe {
        flagged: sigma < threshold,
        sigma_min: sigma,
        threshold,
        nearest_k2: k2 + mu,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticityProbe {
    pub k2_samples: Vec<(f64, f64)>,
    /// Tracked (row, col) entries.
    pub entries: Vec<(usize, usize)>,
    /// `values[entry][sample]`, as (re, im).
    pub values: Vec<Vec<(f64, f64)>>,
    /// Largest third divided difference over all tracked entries; bounded for
    /// smooth entry functions, exploding near a singular frequency.
    pub third_divided_max: f64,
    pub max_entry_magnitude: Vec<f64>,
}

/// Tabulate selected D-to-N entries over a set of frequencies and score their
/// smoothness by the maximal third divided difference.
pub fn analyticity_probe(
    scene: &RectScene,
    a: &VectorField,
    v: &ScalarField,
    k2_samples: &[f64],
    rule: LinkQuadrature,
) -> Result<AnalyticityProbe, DtnError> {
    let first = dtn_matrix(scene, a, v, C64::new(k2_samples[0], 0.0), rule)?;
    let n = first.dim();
    let entries = vec![(0, 0), (n / 3, n / 3), (0, n / 2), (n / 4, (3 * n) / 4)];
    let mut values: Vec<Vec<C64>> = vec![Vec::with_capacity(k2_samples.len()); entries.len()];
    let mut max_mag = Vec::with_capacity(k2_samples.len());
    for (s, &k2) in k2_samples.iter().enumerate() {
        let lam = if s == 0 {
            first.clone()
        } else {
            dtn_matrix(scene, a, v, C64::new(k2, 0.0), rule)?
        };
        let mut mag = 0.0_f64;
        for (e, &(r, c)) in entries.iter().enumerate() {
            let val = lam.get(r, c);
            values[e].push(val);
            mag = mag.max(val.norm());
        }
        max_mag.push(mag);
    }
    let mut third_max = 0.0_f64;
    for series in &values {
        for w in 0..series.len().saturating_sub(3) {
            let xs = &k2_samples[w..w + 4];
            let ys = &series[w..w + 4];
            third_max = third_max.max(divided_difference(xs, ys).norm());
        }
    }
    Ok(AnalyticityProbe {
        k2_samples: k2_samples.iter().map(|&k| (k, 0.0)).collect(),
        entries,
        values: values
            .iter()
            .map(|col| col.iter().map(|v| (v.re, v.im)).collect())
            .collect(),
        third_divided_max: third_max,
        max_entry_magnitude: max_mag,
    })
}

fn divided_difference(xs: &[f64], ys: &[C64]) -> C64 {
    let n = xs.len();
    let mut table: Vec<C64> = ys.to_vec();
    for order in 1..n {
        for k in 0..n - order {
            table[k] = (table[k + 1] - table[k]) / (xs[k + order] - xs[k]);
        }
    }
    table[0]
}
