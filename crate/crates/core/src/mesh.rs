//! Structured simplicial meshes of the padded domain `Omega_delta`.
//!
//! `Omega` is an interval or an axis-aligned rectangle. The mesh covers the
//! box obtained by padding `Omega` with `ceil(delta / h)` whole cells on every
//! side, so the volumetric layer is resolved exactly. Squares are split into
//! two triangles along the `(i, j) -> (i + 1, j + 1)` diagonal.
//!
//! Nodes strictly inside `Omega` carry `n` free degrees of freedom each; nodes
//! on `∂Omega` or in the layer are constrained to zero.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Relative tolerance used when checking that `h` divides the side lengths.
const DIVISIBILITY_TOL: f64 = 1e-9;

/// Default bound on diameter / inscribed diameter.
pub const DEFAULT_QUASI_UNIFORMITY: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rect { lo: [f64; 2], hi: [f64; 2] },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Domain(format!("interval ({a}, {b}) has empty interior")));
        }
        Ok(Domain::Interval { a, b })
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if !(0..2).all(|k| lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k]) {
            return Err(Error::Domain(format!("rectangle {lo:?} x {hi:?} has empty interior")));
        }
        Ok(Domain::Rect { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        match dim {
            1 => Domain::Interval { a: 0.0, b: 1.0 },
            _ => Domain::Rect {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rect { .. } => 2,
        }
    }

    pub fn lo(&self) -> [f64; 2] {
        match *self {
            Domain::Interval { a, .. } => [a, 0.0],
            Domain::Rect { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> [f64; 2] {
        match *self {
            Domain::Interval { b, .. } => [b, 0.0],
            Domain::Rect { hi, .. } => hi,
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rect { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
        }
    }

    /// Distance from `p` to the complement of `Omega` (zero outside).
    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        let (lo, hi) = (self.lo(), self.hi());
        (0..self.dim())
            .map(|k| (p[k] - lo[k]).min(hi[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRegion {
    /// Strictly inside `Omega`.
    Interior,
    /// On `∂Omega`.
    Boundary,
    /// In the padded layer outside the closure of `Omega`.
    Layer,
}

impl NodeRegion {
    pub fn label(self) -> &'static str {
        match self {
            NodeRegion::Interior => "interior",
            NodeRegion::Boundary => "boundary",
            NodeRegion::Layer => "layer",
        }
    }
}

/// Tensor-product lattice underlying the mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub origin: [f64; 2],
    pub spacing: f64,
    /// Cells per axis (`counts[1] == 0` in 1D).
    pub counts: [usize; 2],
    /// First lattice index of `∂Omega` on each axis.
    pub omega_start: [usize; 2],
    /// Cells of `Omega` per axis.
    pub omega_counts: [usize; 2],
}

impl Grid {
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.counts[0] + 1) + i
    }

    fn axis_cell(&self, t: f64, k: usize) -> usize {
        let c = ((t - self.origin[k]) / self.spacing).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.counts[k] - 1)
        }
    }
}

/// Maps `(node, component)` pairs to free or constrained unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    components: usize,
    free_of: Vec<Option<usize>>,
    constrained_of: Vec<Option<usize>>,
    free_owner: Vec<(usize, usize)>,
    constrained_owner: Vec<(usize, usize)>,
}

impl DofMap {
    fn new(regions: &[NodeRegion], components: usize) -> Self {
        let mut free_of = vec![None; regions.len() * components];
        let mut constrained_of = vec![None; regions.len() * components];
        let mut free_owner = Vec::new();
        let mut constrained_owner = Vec::new();
        for (node, region) in regions.iter().enumerate() {
            for c in 0..components {
                let slot = node * components + c;
                if *region == NodeRegion::Interior {
                    free_of[slot] = Some(free_owner.len());
                    free_owner.push((node, c));
                } else {
                    constrained_of[slot] = Some(constrained_owner.len());
                    constrained_owner.push((node, c));
                }
            }
        }
        DofMap {
            components,
            free_of,
            constrained_of,
            free_owner,
            constrained_owner,
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn free_count(&self) -> usize {
        self.free_owner.len()
    }

    pub fn constrained_count(&self) -> usize {
        self.constrained_owner.len()
    }

    pub fn free(&self, node: usize, component: usize) -> Option<usize> {
        self.free_of[node * self.components + component]
    }

    pub fn constrained(&self, node: usize, component: usize) -> Option<usize> {
        self.constrained_of[node * self.components + component]
    }

    /// `(node, component)` of free unknown `k`.
    pub fn free_owner(&self, k: usize) -> (usize, usize) {
        self.free_owner[k]
    }

    pub fn constrained_owner(&self, k: usize) -> (usize, usize) {
        self.constrained_owner[k]
    }
}

#[derive(Clone, Debug)]
pub struct MeshOptions {
    /// Upper bound on max cell diameter / min inscribed diameter.
    pub quasi_uniformity: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions {
            quasi_uniformity: DEFAULT_QUASI_UNIFORMITY,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    domain: Domain,
    delta: f64,
    padding_cells: usize,
    grid: Grid,
    points: Vec<[f64; 2]>,
    cells: Vec<usize>,
    regions: Vec<NodeRegion>,
    cell_in_omega: Vec<bool>,
    omega_cells: Vec<usize>,
    omega_position: Vec<Option<usize>>,
    dofs: DofMap,
}

fn cells_per_side(length: f64, h: f64) -> Result<usize> {
    let ratio = length / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > DIVISIBILITY_TOL * ratio.max(1.0) {
        return Err(Error::Config(format!(
            "mesh size h = {h} does not divide the side length {length}"
        )));
    }
    Ok(n as usize)
}

fn padding_for(delta: f64, h: f64) -> Result<usize> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("horizon must be non-negative, got {delta}")));
    }
    Ok((delta / h - 1e-10).ceil().max(0.0) as usize)
}

fn check_spacing(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config(format!("mesh size must be positive, got {h}")));
    }
    Ok(())
}

/// Uniform mesh of `[a - p, b + p]` with `p = ceil(delta / h) * h`.
pub fn build_interval_mesh(domain: Domain, delta: f64, h: f64) -> Result<Mesh> {
    build_interval_mesh_with(domain, delta, h, &MeshOptions::default())
}

pub fn build_interval_mesh_with(domain: Domain, delta: f64, h: f64, opts: &MeshOptions) -> Result<Mesh> {
    let Domain::Interval { a, b } = domain else {
        return Err(Error::Config("interval mesh requires a 1D domain".into()));
    };
    check_spacing(h)?;
    let n_omega = cells_per_side(b - a, h)?;
    let pad = padding_for(delta, h)?;
    check_quasi_uniformity(1, opts)?;
    let n_cells = n_omega + 2 * pad;
    let origin = a - pad as f64 * h;
    let grid = Grid {
        origin: [origin, 0.0],
        spacing: h,
        counts: [n_cells, 0],
        omega_start: [pad, 0],
        omega_counts: [n_omega, 0],
    };
    let points: Vec<[f64; 2]> = (0..=n_cells).map(|i| [lattice(origin, i, pad, a, h), 0.0]).collect();
    let regions = (0..=n_cells)
        .map(|i| axis_region(i, pad, pad + n_omega))
        .collect::<Vec<_>>();
    let mut cells = Vec::with_capacity(2 * n_cells);
    let mut cell_in_omega = Vec::with_capacity(n_cells);
    for i in 0..n_cells {
        cells.extend_from_slice(&[i, i + 1]);
        cell_in_omega.push(i >= pad && i < pad + n_omega);
    }
    Ok(Mesh::assemble(
        domain,
        delta,
        pad,
        grid,
        points,
        cells,
        regions,
        cell_in_omega,
    ))
}

/// Coordinates are computed from `Omega`'s corner so that nodes on `∂Omega`
/// are represented exactly.
fn lattice(origin: f64, i: usize, pad: usize, a: f64, h: f64) -> f64 {
    if i >= pad {
        a + (i - pad) as f64 * h
    } else {
        origin + i as f64 * h
    }
}

fn axis_region(i: usize, start: usize, end: usize) -> NodeRegion {
    if i > start && i < end {
        NodeRegion::Interior
    } else if i == start || i == end {
        NodeRegion::Boundary
    } else {
        NodeRegion::Layer
    }
}

/// Uniform padded grid of the rectangle, each square split into two triangles.
pub fn build_rect_mesh(domain: Domain, delta: f64, h: f64) -> Result<Mesh> {
    build_rect_mesh_with(domain, delta, h, &MeshOptions::default())
}

pub fn build_rect_mesh_with(domain: Domain, delta: f64, h: f64, opts: &MeshOptions) -> Result<Mesh> {
    let Domain::Rect { lo, hi } = domain else {
        return Err(Error::Config("rectangle mesh requires a 2D domain".into()));
    };
    check_spacing(h)?;
    let nx = cells_per_side(hi[0] - lo[0], h)?;
    let ny = cells_per_side(hi[1] - lo[1], h)?;
    let pad = padding_for(delta, h)?;
    check_quasi_uniformity(2, opts)?;
    let (cx, cy) = (nx + 2 * pad, ny + 2 * pad);
    let origin = [lo[0] - pad as f64 * h, lo[1] - pad as f64 * h];
    let grid = Grid {
        origin,
        spacing: h,
        counts: [cx, cy],
        omega_start: [pad, pad],
        omega_counts: [nx, ny],
    };
    let mut points = Vec::with_capacity((cx + 1) * (cy + 1));
    let mut regions = Vec::with_capacity((cx + 1) * (cy + 1));
    for j in 0..=cy {
        for i in 0..=cx {
            points.push([
                lattice(origin[0], i, pad, lo[0], h),
                lattice(origin[1], j, pad, lo[1], h),
            ]);
            let rx = axis_region(i, pad, pad + nx);
            let ry = axis_region(j, pad, pad + ny);
            regions.push(match (rx, ry) {
                (NodeRegion::Interior, NodeRegion::Interior) => NodeRegion::Interior,
                (NodeRegion::Layer, _) | (_, NodeRegion::Layer) => NodeRegion::Layer,
                _ => NodeRegion::Boundary,
            });
        }
    }
    let mut cells = Vec::with_capacity(6 * cx * cy);
    let mut cell_in_omega = Vec::with_capacity(2 * cx * cy);
    for j in 0..cy {
        for i in 0..cx {
            let n00 = grid.node_index(i, j);
            let n10 = grid.node_index(i + 1, j);
            let n11 = grid.node_index(i + 1, j + 1);
            let n01 = grid.node_index(i, j + 1);
            cells.extend_from_slice(&[n00, n10, n11]);
            cells.extend_from_slice(&[n00, n11, n01]);
            let inside = i >= pad && i < pad + nx && j >= pad && j < pad + ny;
            cell_in_omega.push(inside);
            cell_in_omega.push(inside);
        }
    }
    Ok(Mesh::assemble(
        domain,
        delta,
        pad,
        grid,
        points,
        cells,
        regions,
        cell_in_omega,
    ))
}

fn check_quasi_uniformity(dim: usize, opts: &MeshOptions) -> Result<()> {
    let ratio = shape_ratio(dim);
    if ratio > opts.quasi_uniformity {
        return Err(Error::Config(format!(
            "cell shape ratio {ratio:.3} exceeds the quasi-uniformity bound {}",
            opts.quasi_uniformity
        )));
    }
    Ok(())
}

/// Diameter over inscribed diameter of the reference cell.
fn shape_ratio(dim: usize) -> f64 {
    match dim {
        1 => 1.0,
        // Right isosceles triangle with legs h: diameter sqrt(2) h,
        // inscribed diameter (2 - sqrt(2)) h.
        _ => std::f64::consts::SQRT_2 / (2.0 - std::f64::consts::SQRT_2),
    }
}

/// Builds the mesh matching the dimension of `domain`.
pub fn build_mesh(domain: Domain, delta: f64, h: f64) -> Result<Mesh> {
    match domain.dim() {
        1 => build_interval_mesh(domain, delta, h),
        _ => build_rect_mesh(domain, delta, h),
    }
}

/// The `delta = 0` mesh of `Omega` with the same spacing: cells are exactly
/// those of the closure of `Omega`, free DOFs the interior nodes.
pub fn restrict_to_omega(mesh: &Mesh) -> Mesh {
    if mesh.padding_cells == 0 {
        return mesh.clone();
    }
    build_mesh(mesh.domain, 0.0, mesh.grid.spacing).expect("inputs already validated")
}

impl Mesh {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        domain: Domain,
        delta: f64,
        padding_cells: usize,
        grid: Grid,
        points: Vec<[f64; 2]>,
        cells: Vec<usize>,
        regions: Vec<NodeRegion>,
        cell_in_omega: Vec<bool>,
    ) -> Mesh {
        let omega_cells: Vec<usize> = (0..cell_in_omega.len()).filter(|&c| cell_in_omega[c]).collect();
        let mut omega_position = vec![None; cell_in_omega.len()];
        for (k, &c) in omega_cells.iter().enumerate() {
            omega_position[c] = Some(k);
        }
        let dofs = DofMap::new(&regions, domain.dim());
        Mesh {
            domain,
            delta,
            padding_cells,
            grid,
            points,
            cells,
            regions,
            cell_in_omega,
            omega_cells,
            omega_position,
            dofs,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Horizon the mesh was padded for.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn padding_cells(&self) -> usize {
        self.padding_cells
    }

    /// Lattice spacing (the leg length of the cells).
    pub fn spacing(&self) -> f64 {
        self.grid.spacing
    }

    /// Maximal cell diameter.
    pub fn diameter(&self) -> f64 {
        match self.dim() {
            1 => self.grid.spacing,
            _ => self.grid.spacing * std::f64::consts::SQRT_2,
        }
    }

    pub fn shape_ratio(&self) -> f64 {
        shape_ratio(self.dim())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, node: usize) -> [f64; 2] {
        self.points[node]
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn region(&self, node: usize) -> NodeRegion {
        self.regions[node]
    }

    pub fn cell_count(&self) -> usize {
        self.cell_in_omega.len()
    }

    pub fn vertices_per_cell(&self) -> usize {
        self.dim() + 1
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.vertices_per_cell();
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn cell_in_omega(&self, c: usize) -> bool {
        self.cell_in_omega[c]
    }

    /// Cells contained in the closure of `Omega`, in canonical lattice order.
    ///
    /// Controls and other `Omega`-supported cellwise data are indexed by the
    /// position in this list; it coincides with the cell order of
    /// [`restrict_to_omega`].
    pub fn omega_cells(&self) -> &[usize] {
        &self.omega_cells
    }

    /// Position of cell `c` in [`Mesh::omega_cells`].
    pub fn omega_position(&self, c: usize) -> Option<usize> {
        self.omega_position[c]
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn free_dof_count(&self) -> usize {
        self.dofs.free_count()
    }

    pub fn cell_volume(&self, _c: usize) -> f64 {
        let h = self.grid.spacing;
        match self.dim() {
            1 => h,
            _ => 0.5 * h * h,
        }
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        let vs = self.cell(c);
        let mut m = [0.0; 2];
        for &v in vs {
            m[0] += self.points[v][0];
            m[1] += self.points[v][1];
        }
        let k = vs.len() as f64;
        [m[0] / k, m[1] / k]
    }

    /// Affine map of barycentric coordinates: `lambda_k(y) = consts[k] + grads[k] . y`.
    pub fn barycentric(&self, c: usize) -> Barycentric {
        let vs = self.cell(c);
        match self.dim() {
            1 => {
                let (x0, x1) = (self.points[vs[0]][0], self.points[vs[1]][0]);
                let inv = 1.0 / (x1 - x0);
                Barycentric {
                    grads: [[-inv, 0.0], [inv, 0.0], [0.0, 0.0]],
                    consts: [x1 * inv, -x0 * inv, 0.0],
                    count: 2,
                }
            }
            _ => {
                let p = [self.points[vs[0]], self.points[vs[1]], self.points[vs[2]]];
                let (e1, e2) = (
                    [p[1][0] - p[0][0], p[1][1] - p[0][1]],
                    [p[2][0] - p[0][0], p[2][1] - p[0][1]],
                );
                let det = e1[0] * e2[1] - e1[1] * e2[0];
                // Rows of the inverse Jacobian are the gradients of lambda_1, lambda_2.
                let g1 = [e2[1] / det, -e2[0] / det];
                let g2 = [-e1[1] / det, e1[0] / det];
                let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
                let grads = [g0, g1, g2];
                let mut consts = [0.0; 3];
                for k in 0..3 {
                    // lambda_k(p_k) = 1.
                    consts[k] = 1.0 - (grads[k][0] * p[k][0] + grads[k][1] * p[k][1]);
                }
                Barycentric {
                    grads,
                    consts,
                    count: 3,
                }
            }
        }
    }

    /// Cell containing `p`; points outside the padded box are clamped.
    pub fn locate(&self, p: [f64; 2]) -> usize {
        let g = &self.grid;
        let i = g.axis_cell(p[0], 0);
        if self.dim() == 1 {
            return i;
        }
        let j = g.axis_cell(p[1], 1);
        let fx = p[0] - (g.origin[0] + i as f64 * g.spacing);
        let fy = p[1] - (g.origin[1] + j as f64 * g.spacing);
        let square = j * g.counts[0] + i;
        if fx >= fy {
            2 * square
        } else {
            2 * square + 1
        }
    }

    /// Full nodal vector (`node * n + component`) from free unknowns; constrained entries are zero.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut full = vec![0.0; self.node_count() * n];
        for (k, v) in free.iter().enumerate() {
            let (node, c) = self.dofs.free_owner(k);
            full[node * n + c] = *v;
        }
        full
    }

    /// Free unknowns of a full nodal vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..self.dofs.free_count())
            .map(|k| {
                let (node, c) = self.dofs.free_owner(k);
                full[node * n + c]
            })
            .collect()
    }

    /// Nodal interpolant of a vector field on all nodes, or only on the
    /// closure of `Omega` (zero extension) when `zero_outside` is set.
    pub fn interpolate(&self, field: &crate::expr::VectorField, zero_outside: bool) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; self.node_count() * n];
        for node in 0..self.node_count() {
            if zero_outside && self.regions[node] == NodeRegion::Layer {
                continue;
            }
            field.eval_into(self.points[node], &mut out[node * n..(node + 1) * n]);
        }
        out
    }

    /// For each node of `restrict_to_omega(self)`, the matching node of `self`.
    pub fn omega_node_map(&self) -> Vec<usize> {
        let g = &self.grid;
        let (nx, ny) = (g.omega_counts[0], g.omega_counts[1]);
        let p = self.padding_cells;
        match self.dim() {
            1 => (0..=nx).map(|i| i + p).collect(),
            _ => (0..=ny)
                .flat_map(|j| (0..=nx).map(move |i| (i, j)))
                .map(|(i, j)| g.node_index(i + p, j + p))
                .collect(),
        }
    }

    /// Plain-text export: `v <index> <coords>`, `c <index> <vertices>`, `t <index> <region>`.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let n = self.dim();
        writeln!(
            s,
            "# dim {n} spacing {:.17e} delta {:.17e}",
            self.grid.spacing, self.delta
        )
        .unwrap();
        for (i, p) in self.points.iter().enumerate() {
            write!(s, "v {i}").unwrap();
            for x in &p[..n] {
                write!(s, " {x:.17e}").unwrap();
            }
            s.push('\n');
        }
        for c in 0..self.cell_count() {
            write!(s, "c {c}").unwrap();
            for v in self.cell(c) {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
        for (i, r) in self.regions.iter().enumerate() {
            writeln!(s, "t {i} {}", r.label()).unwrap();
        }
        s
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Barycentric {
    pub grads: [[f64; 2]; 3],
    pub consts: [f64; 3],
    pub count: usize,
}

impl Barycentric {
    #[inline]
    pub fn eval(&self, k: usize, y: [f64; 2]) -> f64 {
        self.consts[k] + self.grads[k][0] * y[0] + self.grads[k][1] * y[1]
    }

    #[inline]
    pub fn directional(&self, k: usize, e: [f64; 2]) -> f64 {
        self.grads[k][0] * e[0] + self.grads[k][1] * e[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    fn unit_square() -> Domain {
        Domain::rect([0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn interval_with_layer() {
        let m = build_interval_mesh(unit_interval(), 0.25, 0.25).unwrap();
        assert_eq!(m.node_count(), 7);
        assert_eq!(m.cell_count(), 6);
        let xs: Vec<f64> = m.points().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![-0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25]);
        assert_eq!(m.free_dof_count(), 3);
        let free_x: Vec<f64> = (0..3).map(|k| m.point(m.dofs().free_owner(k).0)[0]).collect();
        assert_eq!(free_x, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn local_interval() {
        let m = build_interval_mesh(unit_interval(), 0.0, 0.5).unwrap();
        assert_eq!((m.node_count(), m.cell_count(), m.free_dof_count()), (3, 2, 1));
        assert_eq!(m.point(m.dofs().free_owner(0).0)[0], 0.5);
    }

    #[test]
    fn padding_rounds_up_to_whole_cells() {
        let m = build_interval_mesh(unit_interval(), 0.1, 0.25).unwrap();
        assert_eq!(m.padding_cells(), 1);
        assert_eq!(m.point(0)[0], -0.25);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            build_interval_mesh(unit_interval(), 0.1, 0.3),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_interval_mesh(unit_interval(), -0.1, 0.25),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            build_rect_mesh(unit_square(), 0.0, 0.3),
            Err(Error::Config(_))
        ));
        assert!(build_interval_mesh(unit_square(), 0.0, 0.25).is_err());
        assert!(Domain::interval(1.0, 1.0).is_err());
        let tight = MeshOptions { quasi_uniformity: 2.0 };
        assert!(build_rect_mesh_with(unit_square(), 0.0, 0.25, &tight).is_err());
    }

    #[test]
    fn rect_with_layer() {
        let m = build_rect_mesh(unit_square(), 0.25, 0.25).unwrap();
        assert_eq!(m.node_count(), 49);
        assert_eq!(m.cell_count(), 72);
        let interior = (0..49).filter(|&i| m.region(i) == NodeRegion::Interior).count();
        assert_eq!(interior, 9);
        assert_eq!(m.free_dof_count(), 18);
    }

    #[test]
    fn local_rect() {
        let m = build_rect_mesh(unit_square(), 0.0, 0.5).unwrap();
        assert_eq!((m.node_count(), m.cell_count(), m.free_dof_count()), (9, 8, 2));
    }

    #[test]
    fn shape_ratio_is_mesh_independent() {
        let a = build_rect_mesh(unit_square(), 0.0, 0.5).unwrap();
        let b = build_rect_mesh(unit_square(), 0.0, 0.125).unwrap();
        assert_eq!(a.shape_ratio(), b.shape_ratio());
        assert!(a.shape_ratio() <= DEFAULT_QUASI_UNIFORMITY);
    }

    #[test]
    fn restriction() {
        let m = build_interval_mesh(unit_interval(), 0.25, 0.25).unwrap();
        let r = restrict_to_omega(&m);
        assert_eq!((r.cell_count(), r.free_dof_count()), (4, 3));
        let local = build_interval_mesh(unit_interval(), 0.0, 0.25).unwrap();
        assert_eq!(restrict_to_omega(&local).cells, local.cells);

        let m2 = build_rect_mesh(unit_square(), 0.25, 0.25).unwrap();
        let r2 = restrict_to_omega(&m2);
        assert_eq!((r2.cell_count(), r2.free_dof_count()), (32, 18));
        assert_eq!(m2.omega_cells().len(), 32);
        // Node map sends Omega nodes to coincident nodes.
        for (k, &n) in m2.omega_node_map().iter().enumerate() {
            assert_eq!(r2.point(k), m2.point(n));
        }
    }

    #[test]
    fn barycentric_reproduces_vertices() {
        let m = build_rect_mesh(unit_square(), 0.25, 0.25).unwrap();
        for c in [0, 1, 17, 71] {
            let b = m.barycentric(c);
            for (k, &v) in m.cell(c).iter().enumerate() {
                for (l, &w) in m.cell(c).iter().enumerate() {
                    let expect = if k == l { 1.0 } else { 0.0 };
                    assert!((b.eval(k, m.point(w)) - expect).abs() < 1e-13, "{c} {v}");
                }
            }
            assert_eq!(m.locate(m.cell_centroid(c)), c);
        }
    }

    #[test]
    fn dof_map_is_a_bijection() {
        let m = build_rect_mesh(unit_square(), 0.125, 0.125).unwrap();
        let d = m.dofs();
        for k in 0..d.free_count() {
            let (node, c) = d.free_owner(k);
            assert_eq!(d.free(node, c), Some(k));
            assert_eq!(d.constrained(node, c), None);
        }
        for k in 0..d.constrained_count() {
            let (node, c) = d.constrained_owner(k);
            assert_eq!(d.constrained(node, c), Some(k));
        }
        assert_eq!(d.free_count() + d.constrained_count(), 2 * m.node_count());
    }

    #[test]
    fn export_lists_every_entity() {
        let m = build_interval_mesh(unit_interval(), 0.0, 0.5).unwrap();
        let text = m.export_text();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 3);
        assert_eq!(text.lines().filter(|l| l.starts_with("c ")).count(), 2);
        assert!(text.contains("t 1 interior"));
    }
}
