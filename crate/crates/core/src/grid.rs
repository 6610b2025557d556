//! Uniform grids, grid functions with far-field tails, and the local
//! discrete calculus (Laplacian, gradients, level-set geometry, ball sums).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Clip slack allowed above |u| = 1 when the tails are declared as ±1.
pub const CLIP_EPS: f64 = 1e-9;

/// Uniform grid on `[-half_width, half_width]` with an odd number of nodes,
/// so that `x = 0` is always a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    half_width: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 || n_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_points must be odd and >= 3, got {n_points}"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half_width must be positive, got {half_width}")));
        }
        Ok(Self { half_width, n_points })
    }

    /// Grid with spacing as close as possible to `h` (rounded so the node count is odd).
    pub fn with_spacing(half_width: f64, h: f64) -> Result<Self> {
        let cells = (2.0 * half_width / h).round().max(2.0) as usize;
        let cells = cells + cells % 2;
        Self::new(half_width, cells + 1)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: isize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Index of the node at `x = 0`.
    pub fn center(&self) -> usize {
        self.n_points / 2
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points as isize).map(|i| self.node(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub x: Grid1D,
    pub y: Grid1D,
}

impl Grid2D {
    pub fn new(x: Grid1D, y: Grid1D) -> Self {
        Self { x, y }
    }

    pub fn square(half_width: f64, n_points: usize) -> Result<Self> {
        let g = Grid1D::new(half_width, n_points)?;
        Ok(Self { x: g, y: g })
    }
}

/// A 1D or 2D uniform grid. Values are stored row-major with the first
/// coordinate fastest: `index = i + nx * j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grid {
    One(Grid1D),
    Two(Grid2D),
}

impl From<Grid1D> for Grid {
    fn from(g: Grid1D) -> Self {
        Grid::One(g)
    }
}

impl From<Grid2D> for Grid {
    fn from(g: Grid2D) -> Self {
        Grid::Two(g)
    }
}

impl Grid {
    pub fn dim(&self) -> usize {
        match self {
            Grid::One(_) => 1,
            Grid::Two(_) => 2,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Grid::One(g) => (g.n_points, 1),
            Grid::Two(g) => (g.x.n_points, g.y.n_points),
        }
    }

    pub fn len(&self) -> usize {
        let (nx, ny) = self.shape();
        nx * ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> (f64, f64) {
        match self {
            Grid::One(g) => (g.spacing(), 1.0),
            Grid::Two(g) => (g.x.spacing(), g.y.spacing()),
        }
    }

    /// Volume of one cell (`h` in 1D, `hx hy` in 2D).
    pub fn cell_volume(&self) -> f64 {
        let (hx, hy) = self.spacing();
        hx * hy
    }

    /// Smallest half-width over the axes.
    pub fn min_half_width(&self) -> f64 {
        match self {
            Grid::One(g) => g.half_width,
            Grid::Two(g) => g.x.half_width.min(g.y.half_width),
        }
    }

    pub fn axis(&self, k: usize) -> Grid1D {
        match (self, k) {
            (Grid::One(g), 0) => *g,
            (Grid::Two(g), 0) => g.x,
            (Grid::Two(g), 1) => g.y,
            _ => panic!("axis {k} out of range"),
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.shape().0 * j
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        let nx = self.shape().0;
        (index % nx, index / nx)
    }

    /// Physical position of the (possibly out-of-grid) lattice point `(i, j)`.
    pub fn position(&self, i: isize, j: isize) -> [f64; 2] {
        match self {
            Grid::One(g) => [g.node(i), 0.0],
            Grid::Two(g) => [g.x.node(i), g.y.node(j)],
        }
    }

    pub fn position_of(&self, index: usize) -> [f64; 2] {
        let (i, j) = self.coords(index);
        self.position(i as isize, j as isize)
    }

    pub fn radius_of(&self, index: usize) -> f64 {
        let p = self.position_of(index);
        p[0].hypot(p[1])
    }

    pub fn contains(&self, i: isize, j: isize) -> bool {
        let (nx, ny) = self.shape();
        i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny
    }
}

/// Far-field behaviour of a grid function outside the computational window.
#[derive(Clone)]
pub enum Tail {
    /// The same constant in every direction.
    Constant(f64),
    /// Limits along the first axis. In 2D, points that leave the grid only
    /// through the second axis take the value at the nearest grid row, i.e.
    /// the function is extended constantly in `x₂`.
    Sides { left: f64, right: f64 },
    /// Exact values from a closed-form extension; `far_mean` stands in for
    /// the function beyond the quadrature cutoff.
    Analytic {
        f: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
        far_mean: f64,
    },
}

impl fmt::Debug for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tail::Constant(a) => write!(f, "Constant({a})"),
            Tail::Sides { left, right } => write!(f, "Sides {{ left: {left}, right: {right} }}"),
            Tail::Analytic { far_mean, .. } => write!(f, "Analytic {{ far_mean: {far_mean} }}"),
        }
    }
}

impl Tail {
    pub fn analytic<F: Fn([f64; 2]) -> f64 + Send + Sync + 'static>(f: F, far_mean: f64) -> Self {
        Tail::Analytic {
            f: Arc::new(f),
            far_mean,
        }
    }

    /// Layer tails `u → ∓1` as `x₁ → ∓∞`.
    pub fn layer() -> Self {
        Tail::Sides {
            left: -1.0,
            right: 1.0,
        }
    }

    /// Far values `(left, right)` used for jumps beyond the quadrature cutoff.
    pub fn far_values(&self) -> (f64, f64) {
        match *self {
            Tail::Constant(a) => (a, a),
            Tail::Sides { left, right } => (left, right),
            Tail::Analytic { far_mean, .. } => (far_mean, far_mean),
        }
    }

    fn is_unit_layer(&self) -> bool {
        match *self {
            Tail::Sides { left, right } => left.abs() == 1.0 && right.abs() == 1.0,
            Tail::Constant(a) => a.abs() == 1.0,
            Tail::Analytic { .. } => false,
        }
    }

    /// Tail with every value replaced by zero (used for perturbations).
    pub fn zero() -> Self {
        Tail::Constant(0.0)
    }
}

/// Where an out-of-grid lattice point takes its value from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ghost {
    Node(usize),
    Value(f64),
}

/// Function sampled on a grid together with its far-field tails.
#[derive(Debug, Clone)]
pub struct GridFn {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub tail: Tail,
}

impl GridFn {
    pub fn new(grid: impl Into<Grid>, values: Vec<f64>, tail: Tail) -> Result<Self> {
        let u = Self {
            grid: grid.into(),
            values,
            tail,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn from_fn(grid: impl Into<Grid>, tail: Tail, f: impl Fn([f64; 2]) -> f64) -> Self {
        let grid = grid.into();
        let values = (0..grid.len()).map(|k| f(grid.position_of(k))).collect();
        Self { grid, values, tail }
    }

    pub fn constant(grid: impl Into<Grid>, value: f64) -> Self {
        let grid = grid.into();
        Self {
            values: vec![value; grid.len()],
            grid,
            tail: Tail::Constant(value),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                self.values.len(),
                self.grid.len()
            )));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at node {k}")));
        }
        if self.tail.is_unit_layer() {
            if let Some(k) = self.values.iter().position(|v| v.abs() > 1.0 + CLIP_EPS) {
                return Err(Error::InvalidGrid(format!(
                    "|u| = {} > 1 at node {k} with unit tails",
                    self.values[k].abs()
                )));
            }
        }
        Ok(())
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            grid: self.grid,
            values,
            tail: self.tail.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value at lattice point `(i, j)`, inside or outside the grid.
    pub fn at(&self, i: isize, j: isize) -> f64 {
        match self.resolve(i, j) {
            Ghost::Node(k) => self.values[k],
            Ghost::Value(v) => v,
        }
    }

    pub fn resolve(&self, i: isize, j: isize) -> Ghost {
        let g = &self.grid;
        if g.contains(i, j) {
            return Ghost::Node(g.index(i as usize, j as usize));
        }
        let (nx, ny) = g.shape();
        match &self.tail {
            Tail::Constant(a) => Ghost::Value(*a),
            Tail::Sides { left, right } => {
                if i < 0 {
                    Ghost::Value(*left)
                } else if i >= nx as isize {
                    Ghost::Value(*right)
                } else {
                    let jc = j.clamp(0, ny as isize - 1) as usize;
                    Ghost::Node(g.index(i as usize, jc))
                }
            }
            Tail::Analytic { f, .. } => Ghost::Value(f(g.position(i, j))),
        }
    }

    /// Copy of the values padded by `pad` ghost nodes on every side of each
    /// grid axis (only the first axis in 1D).
    pub fn extended(&self, pad: usize) -> Extended {
        let (nx, ny) = self.grid.shape();
        let pad_y = if self.grid.dim() == 2 { pad } else { 0 };
        let ex = nx + 2 * pad;
        let ey = ny + 2 * pad_y;
        let mut data = Vec::with_capacity(ex * ey);
        for jj in 0..ey {
            for ii in 0..ex {
                data.push(self.at(ii as isize - pad as isize, jj as isize - pad_y as isize));
            }
        }
        Extended {
            data,
            pad,
            pad_y,
            stride: ex,
        }
    }
}

/// Ghost-padded copy of a grid function for stencil and pair sums.
#[derive(Debug, Clone)]
pub struct Extended {
    pub data: Vec<f64>,
    pub pad: usize,
    pub pad_y: usize,
    pub stride: usize,
}

impl Extended {
    #[inline]
    pub fn get(&self, i: isize, j: isize) -> f64 {
        let ii = (i + self.pad as isize) as usize;
        let jj = (j + self.pad_y as isize) as usize;
        self.data[ii + self.stride * jj]
    }
}

fn check_size(g: &Grid) -> Result<()> {
    let (nx, ny) = g.shape();
    if nx < 3 || (g.dim() == 2 && ny < 3) {
        return Err(Error::InvalidGrid("need at least 3 nodes per axis".into()));
    }
    Ok(())
}

/// Second-order centered Laplacian, with ghost values from the tails.
pub fn discrete_laplacian(u: &GridFn) -> Result<GridFn> {
    check_size(&u.grid)?;
    let ext = u.extended(1);
    let (hx, hy) = u.grid.spacing();
    let two_d = u.grid.dim() == 2;
    let values = (0..u.grid.len())
        .map(|k| {
            let (i, j) = u.grid.coords(k);
            let (i, j) = (i as isize, j as isize);
            let c = ext.get(i, j);
            let mut lap = (ext.get(i + 1, j) - 2.0 * c + ext.get(i - 1, j)) / (hx * hx);
            if two_d {
                lap += (ext.get(i, j + 1) - 2.0 * c + ext.get(i, j - 1)) / (hy * hy);
            }
            lap
        })
        .collect();
    Ok(GridFn {
        grid: u.grid,
        values,
        tail: Tail::Constant(0.0),
    })
}

/// Centered-difference gradient at every grid node.
pub fn gradient(u: &GridFn) -> Vec<[f64; 2]> {
    let ext = u.extended(1);
    gradient_extended(u, &ext, 0)
}

/// Gradient on the grid plus a ring of `ring` ghost nodes (requires `ext`
/// padded by at least `ring + 1`). Returned in the padded row-major layout.
pub(crate) fn gradient_extended(u: &GridFn, ext: &Extended, ring: usize) -> Vec<[f64; 2]> {
    let (nx, ny) = u.grid.shape();
    let (hx, hy) = u.grid.spacing();
    let two_d = u.grid.dim() == 2;
    let ry = if two_d { ring } else { 0 };
    let mut out = Vec::with_capacity((nx + 2 * ring) * (ny + 2 * ry));
    for jj in 0..ny + 2 * ry {
        for ii in 0..nx + 2 * ring {
            let i = ii as isize - ring as isize;
            let j = jj as isize - ry as isize;
            let gx = (ext.get(i + 1, j) - ext.get(i - 1, j)) / (2.0 * hx);
            let gy = if two_d {
                (ext.get(i, j + 1) - ext.get(i, j - 1)) / (2.0 * hy)
            } else {
                0.0
            };
            out.push([gx, gy]);
        }
    }
    out
}

/// Per-node level-set quantities on `{|∇u| > g_tol}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomPoint {
    pub index: usize,
    pub grad_norm: f64,
    /// Sum of squared principal curvatures of the level set.
    pub kappa2: f64,
    /// `|∇_T |∇u||²`.
    pub tangential: f64,
    /// `Σ_k |∇∂_k u|² − |∇|∇u||²` evaluated directly.
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetGeom {
    pub g_tol: f64,
    pub points: Vec<GeomPoint>,
}

/// Default gradient threshold `1e-8 · max |∇u|`.
pub fn default_gradient_tolerance(u: &GridFn) -> f64 {
    let gmax = gradient(u)
        .iter()
        .fold(0.0f64, |m, g| m.max(g[0].hypot(g[1])));
    1e-8 * gmax
}

/// Level-set curvature and tangential-gradient terms from the centered
/// Hessian. With `n = ∇u/|∇u|` and `t ⟂ n`, the left side of the
/// level-set identity is `‖H‖² − |Hn|² = H_tt² + H_nt²`; the first
/// piece is `|∇u|²κ²`, the second `|∇_T|∇u||²`.
pub fn sz_geometry(u: &GridFn, g_tol: f64) -> Result<LevelSetGeom> {
    if u.grid.dim() != 2 {
        return Err(Error::Unsupported("sz_geometry needs a 2D grid".into()));
    }
    check_size(&u.grid)?;
    let ext = u.extended(1);
    let (hx, hy) = u.grid.spacing();
    let mut points = Vec::new();
    for k in 0..u.grid.len() {
        let (i, j) = u.grid.coords(k);
        let (i, j) = (i as isize, j as isize);
        let c = ext.get(i, j);
        let gx = (ext.get(i + 1, j) - ext.get(i - 1, j)) / (2.0 * hx);
        let gy = (ext.get(i, j + 1) - ext.get(i, j - 1)) / (2.0 * hy);
        let g = gx.hypot(gy);
        if g <= g_tol {
            continue;
        }
        let hxx = (ext.get(i + 1, j) - 2.0 * c + ext.get(i - 1, j)) / (hx * hx);
        let hyy = (ext.get(i, j + 1) - 2.0 * c + ext.get(i, j - 1)) / (hy * hy);
        let hxy = (ext.get(i + 1, j + 1) - ext.get(i + 1, j - 1) - ext.get(i - 1, j + 1)
            + ext.get(i - 1, j - 1))
            / (4.0 * hx * hy);
        let (nx, ny) = (gx / g, gy / g);
        let (tx, ty) = (-ny, nx);
        // H n and H t
        let hn = [hxx * nx + hxy * ny, hxy * nx + hyy * ny];
        let h_tt = tx * (hxx * tx + hxy * ty) + ty * (hxy * tx + hyy * ty);
        let h_nt = hn[0] * tx + hn[1] * ty;
        let frob = hxx * hxx + 2.0 * hxy * hxy + hyy * hyy;
        let lhs = (frob - (hn[0] * hn[0] + hn[1] * hn[1])).max(0.0);
        points.push(GeomPoint {
            index: k,
            grad_norm: g,
            kappa2: h_tt * h_tt / (g * g),
            tangential: h_nt * h_nt,
            lhs,
        });
    }
    Ok(LevelSetGeom { g_tol, points })
}

/// Midpoint-rule sum of `u` over the nodes with `|x| ≤ R`.
pub fn ball_integral(u: &GridFn, radius: f64) -> Result<f64> {
    let hw = u.grid.min_half_width();
    if radius > hw * (1.0 + 1e-12) {
        return Err(Error::RadiusOutsideGrid {
            radius,
            half_width: hw,
        });
    }
    let vol = u.grid.cell_volume();
    let tol = 1e-12 * radius.max(1.0);
    Ok((0..u.grid.len())
        .filter(|&k| u.grid.radius_of(k) <= radius + tol)
        .map(|k| u.values[k])
        .sum::<f64>()
        * vol)
}
