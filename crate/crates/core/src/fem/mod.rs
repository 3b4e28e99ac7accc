//! Taylor-Hood spaces on the extruded mesh, P1 on the surface grid, quadrature,
//! and assembly of every bilinear and linear form the time-stepping schemes use.

mod assembly;
mod bcs;
mod quadrature;
mod surface;

use std::collections::HashMap;
use std::sync::OnceLock;

pub use assembly::{
    assemble_gravity, assemble_stokes, strain_rate_sq, viscosity_field, ViscositySamples,
};
pub use bcs::{apply_velocity_bcs, constrained_velocity_dofs};
pub use quadrature::{gauss3_unit, gauss5_unit, triangle_degree4, QuadratureRule};
pub use surface::{
    advection_matrix, assemble_free_surface, assemble_fssa, assemble_normal_penalty,
    assemble_surface_coupling, edge_coefficients, edge_jump_matrix, load_vector,
    surface_mass_matrix, AdvectionMode, FreeSurfaceSystem,
};

use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::mesh::{BoundaryMarker, SurfaceGrid, VolumeMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// Continuous piecewise quadratic, two components per node.
    VelocityP2,
    /// Continuous piecewise linear on the triangulation.
    PressureP1,
    /// Continuous piecewise linear on the surface grid.
    SurfaceP1,
}

fn marker_slot(m: BoundaryMarker) -> usize {
    match m {
        BoundaryMarker::Surface => 0,
        BoundaryMarker::Bottom => 1,
        BoundaryMarker::Lateral => 2,
    }
}

/// Degree-of-freedom layout of a finite-element space.
///
/// Velocity nodes are the mesh vertices followed by one node per edge, numbered
/// in order of first appearance while sweeping triangles. Velocity dofs are
/// interleaved: `dof = 2 * node + component` with component 0 = x, 1 = z.
#[derive(Debug)]
pub struct FunctionSpace {
    kind: SpaceKind,
    components: usize,
    n_nodes: usize,
    nodes_per_cell: usize,
    cell_nodes: Vec<usize>,
    boundary: [Vec<usize>; 3],
    /// Endpoints of each edge node (P2 only), indexed by `node - n_vertices`.
    edge_vertices: Vec<[usize; 2]>,
    n_vertices: usize,
    /// Surface nodes `[left, mid, right]` above each surface cell (P2 only).
    surface_nodes: Vec<[usize; 3]>,
    velocity_pattern: OnceLock<SparseMatrix>,
    divergence_pattern: OnceLock<SparseMatrix>,
}

impl Clone for FunctionSpace {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            components: self.components,
            n_nodes: self.n_nodes,
            nodes_per_cell: self.nodes_per_cell,
            cell_nodes: self.cell_nodes.clone(),
            boundary: self.boundary.clone(),
            edge_vertices: self.edge_vertices.clone(),
            n_vertices: self.n_vertices,
            surface_nodes: self.surface_nodes.clone(),
            velocity_pattern: OnceLock::new(),
            divergence_pattern: OnceLock::new(),
        }
    }
}

impl FunctionSpace {
    pub fn velocity(mesh: &VolumeMesh) -> Self {
        let nv = mesh.vertices().len();
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * mesh.triangles().len() / 2 + 8);
        let mut edge_vertices = Vec::new();
        let mut cell_nodes = Vec::with_capacity(6 * mesh.triangles().len());
        let mut edge_node = |a: usize, b: usize, edges: &mut Vec<[usize; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            *edge_id.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                nv + edges.len() - 1
            })
        };
        for t in mesh.triangles() {
            let m01 = edge_node(t[0], t[1], &mut edge_vertices);
            let m12 = edge_node(t[1], t[2], &mut edge_vertices);
            let m20 = edge_node(t[2], t[0], &mut edge_vertices);
            cell_nodes.extend_from_slice(&[t[0], t[1], t[2], m01, m12, m20]);
        }
        let n_nodes = nv + edge_vertices.len();
        let mut boundary: [Vec<usize>; 3] = Default::default();
        let mut surface_nodes = vec![[0; 3]; mesh.columns()];
        for f in mesh.boundary_facets() {
            let [a, b] = f.vertices;
            let m = edge_node(a, b, &mut edge_vertices);
            let slot = &mut boundary[marker_slot(f.marker)];
            for node in [a, m, b] {
                slot.push(2 * node);
                slot.push(2 * node + 1);
            }
        }
        debug_assert_eq!(n_nodes, nv + edge_vertices.len(), "boundary facet with unknown edge");
        for (c, col) in mesh.column_map().iter().enumerate() {
            let [right, left] = mesh.boundary_facets()[col[0]].vertices;
            surface_nodes[c] = [left, edge_node(left, right, &mut edge_vertices), right];
        }
        for slot in boundary.iter_mut() {
            slot.sort_unstable();
            slot.dedup();
        }
        Self {
            kind: SpaceKind::VelocityP2,
            components: 2,
            n_nodes,
            nodes_per_cell: 6,
            cell_nodes,
            boundary,
            edge_vertices,
            n_vertices: nv,
            surface_nodes,
            velocity_pattern: OnceLock::new(),
            divergence_pattern: OnceLock::new(),
        }
    }

    pub fn pressure(mesh: &VolumeMesh) -> Self {
        let mut boundary: [Vec<usize>; 3] = Default::default();
        for f in mesh.boundary_facets() {
            boundary[marker_slot(f.marker)].extend_from_slice(&f.vertices);
        }
        for slot in boundary.iter_mut() {
            slot.sort_unstable();
            slot.dedup();
        }
        Self {
            kind: SpaceKind::PressureP1,
            components: 1,
            n_nodes: mesh.vertices().len(),
            nodes_per_cell: 3,
            cell_nodes: mesh.triangles().iter().flatten().copied().collect(),
            boundary,
            edge_vertices: Vec::new(),
            n_vertices: mesh.vertices().len(),
            surface_nodes: Vec::new(),
            velocity_pattern: OnceLock::new(),
            divergence_pattern: OnceLock::new(),
        }
    }

    pub fn surface(grid: &SurfaceGrid) -> Self {
        let n = grid.n_nodes();
        Self {
            kind: SpaceKind::SurfaceP1,
            components: 1,
            n_nodes: n,
            nodes_per_cell: 2,
            cell_nodes: (0..grid.n_cells()).flat_map(|c| [c, c + 1]).collect(),
            boundary: [Vec::new(), Vec::new(), vec![0, n - 1]],
            edge_vertices: Vec::new(),
            n_vertices: n,
            surface_nodes: Vec::new(),
            velocity_pattern: OnceLock::new(),
            divergence_pattern: OnceLock::new(),
        }
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn n_dofs(&self) -> usize {
        self.components * self.n_nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_cells(&self) -> usize {
        self.cell_nodes.len() / self.nodes_per_cell
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        &self.cell_nodes[cell * self.nodes_per_cell..(cell + 1) * self.nodes_per_cell]
    }

    /// Global dofs of a cell: nodes in local order, components interleaved.
    pub fn cell_dofs(&self, cell: usize) -> Vec<usize> {
        self.cell_nodes(cell)
            .iter()
            .flat_map(|&n| (0..self.components).map(move |c| self.components * n + c))
            .collect()
    }

    pub fn boundary_dofs(&self, marker: BoundaryMarker) -> &[usize] {
        &self.boundary[marker_slot(marker)]
    }

    /// `[left, mid, right]` velocity nodes on the top facet of a surface cell.
    pub fn surface_nodes(&self, cell: usize) -> [usize; 3] {
        self.surface_nodes[cell]
    }

    pub fn n_surface_cells(&self) -> usize {
        self.surface_nodes.len()
    }

    /// Coordinates of every node on the given mesh (edge nodes at midpoints).
    pub fn node_coords(&self, mesh: &VolumeMesh) -> Vec<[f64; 2]> {
        let v = mesh.vertices();
        let mut out = v.to_vec();
        out.extend(self.edge_vertices.iter().map(|&[a, b]| [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])]));
        out
    }

    /// Zero-valued velocity-velocity operator with the full element coupling pattern.
    pub(crate) fn velocity_pattern(&self) -> &SparseMatrix {
        self.velocity_pattern.get_or_init(|| {
            let n = self.n_dofs();
            let mut t = TripletBuilder::with_capacity(n, n, 144 * self.n_cells());
            for c in 0..self.n_cells() {
                let dofs = self.cell_dofs(c);
                for &r in &dofs {
                    for &col in &dofs {
                        t.push(r, col, 0.0);
                    }
                }
            }
            t.build()
        })
    }

    /// Zero-valued pressure-velocity operator pattern.
    pub(crate) fn divergence_pattern(&self) -> &SparseMatrix {
        self.divergence_pattern.get_or_init(|| {
            let mut t = TripletBuilder::with_capacity(self.n_vertices, self.n_dofs(), 36 * self.n_cells());
            for c in 0..self.n_cells() {
                let dofs = self.cell_dofs(c);
                for &k in &self.cell_nodes(c)[..3] {
                    for &col in &dofs {
                        t.push(k, col, 0.0);
                    }
                }
            }
            t.build()
        })
    }
}

/// Coefficient vector attached to a space kind.
#[derive(Debug, Clone, PartialEq)]
pub struct FEFunction {
    pub kind: SpaceKind,
    pub values: Vec<f64>,
}

impl FEFunction {
    pub fn zeros(space: &FunctionSpace) -> Self {
        Self { kind: space.kind(), values: vec![0.0; space.n_dofs()] }
    }

    pub fn new(space: &FunctionSpace, values: Vec<f64>) -> Result<Self, crate::error::AssemblyError> {
        if values.len() != space.n_dofs() {
            return Err(crate::error::AssemblyError::Size(format!(
                "{} coefficients for a space with {} dofs",
                values.len(),
                space.n_dofs()
            )));
        }
        Ok(Self { kind: space.kind(), values })
    }

    /// Nodal interpolation of a vector field into the P2 velocity space.
    pub fn interpolate_velocity(space: &FunctionSpace, mesh: &VolumeMesh, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut values = vec![0.0; space.n_dofs()];
        for (n, p) in space.node_coords(mesh).iter().enumerate() {
            let v = f(p[0], p[1]);
            values[2 * n] = v[0];
            values[2 * n + 1] = v[1];
        }
        Self { kind: SpaceKind::VelocityP2, values }
    }
}

/// Affine triangle with barycentric gradients.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Triangle {
    pub coords: [[f64; 2]; 3],
    /// Twice the signed area.
    pub det: f64,
    pub grad_l: [[f64; 2]; 3],
}

impl Triangle {
    pub fn new(coords: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let (a, b) = (p1[0] - p0[0], p2[0] - p0[0]);
        let (c, d) = (p1[1] - p0[1], p2[1] - p0[1]);
        let det = a * d - b * c;
        let g1 = [d / det, -b / det];
        let g2 = [-c / det, a / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        Self { coords, det, grad_l: [g0, g1, g2] }
    }

    pub fn of(mesh: &VolumeMesh, t: usize) -> Self {
        Self::new(mesh.triangle_coords(t))
    }

    /// Physical point of reference coordinates `(ξ, η) = (L1, L2)`.
    pub fn map(&self, xi: f64, eta: f64) -> [f64; 2] {
        let [p0, p1, p2] = self.coords;
        [
            p0[0] + xi * (p1[0] - p0[0]) + eta * (p2[0] - p0[0]),
            p0[1] + xi * (p1[1] - p0[1]) + eta * (p2[1] - p0[1]),
        ]
    }

    /// Barycentric coordinates of a physical point (may lie outside).
    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let [p0, ..] = self.coords;
        let (dx, dz) = (p[0] - p0[0], p[1] - p0[1]);
        let l1 = self.grad_l[1][0] * dx + self.grad_l[1][1] * dz;
        let l2 = self.grad_l[2][0] * dx + self.grad_l[2][1] * dz;
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Local P2 order: vertices 0,1,2 then edges 01, 12, 20.
pub(crate) const P2_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

#[inline]
pub(crate) fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

#[inline]
pub(crate) fn p2_grads(l: [f64; 3], gl: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        g[i] = [s * gl[i][0], s * gl[i][1]];
    }
    for (k, &(i, j)) in P2_EDGES.iter().enumerate() {
        g[3 + k] = [
            4.0 * (l[i] * gl[j][0] + l[j] * gl[i][0]),
            4.0 * (l[i] * gl[j][1] + l[j] * gl[i][1]),
        ];
    }
    g
}

/// 1D quadratic trace basis on a facet, `t ∈ [0, 1]` from left to right: `[left, mid, right]`.
#[inline]
pub(crate) fn p2_trace(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)]
}

/// Evaluates a P2 velocity at barycentric coordinates of a cell.
pub fn eval_velocity(space: &FunctionSpace, u: &[f64], cell: usize, l: [f64; 3]) -> [f64; 2] {
    let n = p2_values(l);
    let nodes = space.cell_nodes(cell);
    let mut v = [0.0; 2];
    for (a, &node) in nodes.iter().enumerate() {
        v[0] += n[a] * u[2 * node];
        v[1] += n[a] * u[2 * node + 1];
    }
    v
}

/// Velocity gradient `[[∂x ux, ∂z ux], [∂x uz, ∂z uz]]` at barycentric coordinates.
pub(crate) fn eval_velocity_gradient(space: &FunctionSpace, tri: &Triangle, u: &[f64], cell: usize, l: [f64; 3]) -> [[f64; 2]; 2] {
    let g = p2_grads(l, &tri.grad_l);
    let nodes = space.cell_nodes(cell);
    let mut out = [[0.0; 2]; 2];
    for (a, &node) in nodes.iter().enumerate() {
        for c in 0..2 {
            out[c][0] += g[a][0] * u[2 * node + c];
            out[c][1] += g[a][1] * u[2 * node + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_extruded_mesh;

    fn mesh(nx: usize, ny: usize) -> (SurfaceGrid, VolumeMesh) {
        let g = SurfaceGrid::uniform(-1.0, 1.0, nx, |x| 0.5 * (2.0 * x - 1.0).tanh() + 0.2, |_| -1.0).unwrap();
        let m = build_extruded_mesh(&g, ny).unwrap();
        (g, m)
    }

    #[test]
    fn p2_node_count_matches_structured_formula() {
        let (_, m) = mesh(5, 3);
        let s = FunctionSpace::velocity(&m);
        assert_eq!(s.n_nodes(), (2 * 5 + 1) * (2 * 3 + 1));
        assert_eq!(s.n_dofs(), 2 * s.n_nodes());
        let p = FunctionSpace::pressure(&m);
        assert_eq!(p.n_dofs(), 6 * 4);
    }

    #[test]
    fn cell_dofs_injective_and_midpoints_correct() {
        let (_, m) = mesh(4, 2);
        let s = FunctionSpace::velocity(&m);
        let coords = s.node_coords(&m);
        for c in 0..s.n_cells() {
            let mut d = s.cell_dofs(c);
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), 12);
            let nodes = s.cell_nodes(c);
            for (k, &(i, j)) in P2_EDGES.iter().enumerate() {
                let (a, b, mid) = (coords[nodes[i]], coords[nodes[j]], coords[nodes[3 + k]]);
                assert_eq!(mid, [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            }
        }
    }

    #[test]
    fn boundary_dofs_lie_on_boundary() {
        let (g, m) = mesh(6, 3);
        let s = FunctionSpace::velocity(&m);
        let coords = s.node_coords(&m);
        for &d in s.boundary_dofs(BoundaryMarker::Bottom) {
            assert_eq!(coords[d / 2][1], -1.0);
        }
        for &d in s.boundary_dofs(BoundaryMarker::Lateral) {
            let x = coords[d / 2][0];
            assert!(x == -1.0 || x == 1.0);
        }
        assert_eq!(s.boundary_dofs(BoundaryMarker::Bottom).len(), 2 * (2 * 6 + 1));
        for c in 0..g.n_cells() {
            let [l, mid, r] = s.surface_nodes(c);
            assert_eq!(coords[l], [g.nodes()[c], g.height()[c]]);
            assert_eq!(coords[r], [g.nodes()[c + 1], g.height()[c + 1]]);
            assert_eq!(coords[mid][0], 0.5 * (g.nodes()[c] + g.nodes()[c + 1]));
        }
    }

    #[test]
    fn p2_basis_partition_of_unity_and_nodal() {
        let l = [0.2, 0.3, 0.5];
        let v = p2_values(l);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let tri = Triangle::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let g = p2_grads(l, &tri.grad_l);
        let sx: f64 = g.iter().map(|x| x[0]).sum();
        let sz: f64 = g.iter().map(|x| x[1]).sum();
        assert!(sx.abs() < 1e-14 && sz.abs() < 1e-14);
        let nodal = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        for (i, p) in nodal.iter().enumerate() {
            let v = p2_values(*p);
            for (j, vj) in v.iter().enumerate() {
                assert!((vj - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p2_gradient_matches_finite_difference() {
        let tri = Triangle::new([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]]);
        let p = tri.map(0.3, 0.25);
        let g = p2_grads(tri.barycentric(p), &tri.grad_l);
        let eps = 1e-6;
        for dim in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[dim] += eps;
            pm[dim] -= eps;
            let (vp, vm) = (p2_values(tri.barycentric(pp)), p2_values(tri.barycentric(pm)));
            for a in 0..6 {
                assert!(((vp[a] - vm[a]) / (2.0 * eps) - g[a][dim]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn quadratic_field_reproduced() {
        let (_, m) = mesh(3, 2);
        let s = FunctionSpace::velocity(&m);
        let f = |x: f64, z: f64| [x * x - 0.5 * z, x * z + z * z];
        let u = FEFunction::interpolate_velocity(&s, &m, f);
        let tri = Triangle::of(&m, 4);
        let p = tri.map(0.2, 0.3);
        let v = eval_velocity(&s, &u.values, 4, tri.barycentric(p));
        let e = f(p[0], p[1]);
        assert!((v[0] - e[0]).abs() < 1e-14 && (v[1] - e[1]).abs() < 1e-14);
        let gr = eval_velocity_gradient(&s, &tri, &u.values, 4, tri.barycentric(p));
        assert!((gr[0][0] - 2.0 * p[0]).abs() < 1e-12 && (gr[0][1] + 0.5).abs() < 1e-12);
        assert!((gr[1][0] - p[1]).abs() < 1e-12 && (gr[1][1] - p[0] - 2.0 * p[1]).abs() < 1e-12);
    }
}
