//! Surface grid on the horizontal interval and the extruded triangulation of the
//! fluid domain between bedrock and free surface.
//!
//! The volume mesh is a structured extrusion: every surface cell owns one column
//! of `ny` quads, each split along the lower-left to upper-right diagonal. The
//! top facet of a column therefore lies exactly on the graph of the piecewise
//! linear height over that cell.

use crate::error::GeometryError;

/// 1D mesh of the horizontal domain carrying the height and bedrock profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    x: Vec<f64>,
    height: Vec<f64>,
    bed: Vec<f64>,
}

impl SurfaceGrid {
    pub fn new(x: Vec<f64>, height: Vec<f64>, bed: Vec<f64>) -> Result<Self, GeometryError> {
        if x.len() < 2 {
            return Err(GeometryError::TooFewNodes(x.len()));
        }
        for (what, v) in [("height", &height), ("bedrock", &bed)] {
            if v.len() != x.len() {
                return Err(GeometryError::LengthMismatch { what, got: v.len(), expected: x.len() });
            }
        }
        if x.iter().chain(&height).chain(&bed).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("surface grid"));
        }
        if let Some(node) = x.windows(2).position(|w| w[1] <= w[0]) {
            return Err(GeometryError::NonIncreasingNodes { node: node + 1 });
        }
        let grid = Self { x, height, bed };
        grid.check_thickness()?;
        Ok(grid)
    }

    /// Uniform grid with `cells` cells on `[x0, x1]`, profiles sampled at the nodes.
    pub fn uniform(
        x0: f64,
        x1: f64,
        cells: usize,
        height: impl Fn(f64) -> f64,
        bed: impl Fn(f64) -> f64,
    ) -> Result<Self, GeometryError> {
        let x = uniform_nodes(x0, x1, cells);
        let h = x.iter().map(|&xi| height(xi)).collect();
        let b = x.iter().map(|&xi| bed(xi)).collect();
        Self::new(x, h, b)
    }

    /// Same nodes and bedrock, new height coefficients.
    pub fn with_height(&self, height: Vec<f64>) -> Result<Self, GeometryError> {
        if height.len() != self.x.len() {
            return Err(GeometryError::LengthMismatch {
                what: "height",
                got: height.len(),
                expected: self.x.len(),
            });
        }
        if height.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("height"));
        }
        let grid = Self { x: self.x.clone(), height, bed: self.bed.clone() };
        grid.check_thickness()?;
        Ok(grid)
    }

    fn check_thickness(&self) -> Result<(), GeometryError> {
        first_thickness_violation(&self.x, &self.height, &self.bed).map_or(Ok(()), Err)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn height(&self) -> &[f64] {
        &self.height
    }

    pub fn bed(&self) -> &[f64] {
        &self.bed
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn n_cells(&self) -> usize {
        self.x.len() - 1
    }

    pub fn cell_nodes(&self, cell: usize) -> [usize; 2] {
        [cell, cell + 1]
    }

    /// Cell diameter (node distance).
    pub fn diameter(&self, cell: usize) -> f64 {
        self.x[cell + 1] - self.x[cell]
    }

    /// Per-cell slope of the piecewise-linear height.
    pub fn slope(&self, cell: usize) -> f64 {
        (self.height[cell + 1] - self.height[cell]) / self.diameter(cell)
    }

    pub fn thickness(&self, node: usize) -> f64 {
        self.height[node] - self.bed[node]
    }

    /// Cell index containing `x`; points outside the interval map to the end cells.
    pub fn locate(&self, x: f64) -> usize {
        let n = self.n_cells();
        match self.x.partition_point(|&xi| xi <= x) {
            0 => 0,
            k if k > n => n - 1,
            k => k - 1,
        }
    }

    /// Piecewise-linear interpolation of nodal values at `x` (extrapolating outside).
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let c = self.locate(x);
        let t = (x - self.x[c]) / self.diameter(c);
        values[c] * (1.0 - t) + values[c + 1] * t
    }

    pub fn length(&self) -> f64 {
        self.x[self.x.len() - 1] - self.x[0]
    }
}

pub(crate) fn uniform_nodes(x0: f64, x1: f64, cells: usize) -> Vec<f64> {
    let dx = (x1 - x0) / cells as f64;
    (0..=cells)
        .map(|i| if i == cells { x1 } else { x0 + dx * i as f64 })
        .collect()
}

pub(crate) fn first_thickness_violation(x: &[f64], h: &[f64], b: &[f64]) -> Option<GeometryError> {
    h.iter().zip(b).enumerate().find_map(|(node, (&hi, &bi))| {
        let thickness = hi - bi;
        (thickness <= 0.0 || thickness.is_nan()).then_some(GeometryError::NonPositiveThickness {
            node,
            x: x[node],
            thickness,
        })
    })
}

/// Outward unit normal and arclength weight `ω = |(-∂x h, 1)| = 1/n_z` of a surface cell.
pub fn surface_geometry(grid: &SurfaceGrid, cell: usize) -> ([f64; 2], f64) {
    normal_and_weight(grid.slope(cell))
}

pub(crate) fn normal_and_weight(slope: f64) -> ([f64; 2], f64) {
    let omega = slope.hypot(1.0);
    ([-slope / omega, 1.0 / omega], omega)
}

/// `∫ (h - b) dx`, exact for piecewise-linear profiles.
pub fn domain_volume(grid: &SurfaceGrid) -> f64 {
    (0..grid.n_cells())
        .map(|c| 0.5 * grid.diameter(c) * (grid.thickness(c) + grid.thickness(c + 1)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryMarker {
    Surface,
    Bottom,
    Lateral,
}

/// Boundary facet of the triangulation. Vertices are ordered so that the facet
/// is traversed with the domain on the left (counter-clockwise around the boundary).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFacet {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
    pub triangle: usize,
}

/// Extruded triangulation of the fluid domain.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    facets: Vec<BoundaryFacet>,
    column_map: Vec<Vec<usize>>,
    nx: usize,
    ny: usize,
}

impl VolumeMesh {
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.facets
    }

    /// For every surface cell, the top facets (indices into [`Self::boundary_facets`]) above it.
    pub fn column_map(&self) -> &[Vec<usize>] {
        &self.column_map
    }

    /// Top facet above a surface cell.
    pub fn top_facet(&self, cell: usize) -> &BoundaryFacet {
        &self.facets[self.column_map[cell][0]]
    }

    pub fn layers(&self) -> usize {
        self.ny
    }

    pub fn columns(&self) -> usize {
        self.nx
    }

    /// Vertex index of column node `i`, layer `j` (0 = bedrock, `ny` = surface).
    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Triangle of quad (column cell `i`, layer `j`); `upper` selects the triangle above the diagonal.
    pub(crate) fn quad_triangle(&self, i: usize, j: usize, upper: bool) -> usize {
        2 * (i * self.ny + j) + usize::from(upper)
    }
}

/// Extrudes `ny` layers between bedrock and surface.
pub fn build_extruded_mesh(grid: &SurfaceGrid, ny: usize) -> Result<VolumeMesh, GeometryError> {
    if ny == 0 {
        return Err(GeometryError::NoLayers);
    }
    grid.check_thickness()?;
    let nx = grid.n_cells();
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        let (x, h, b) = (grid.x[i], grid.height[i], grid.bed[i]);
        for j in 0..=ny {
            vertices.push([x, layer_height(b, h, j, ny)]);
        }
    }
    let vid = |i: usize, j: usize| i * (ny + 1) + j;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let tri = |i: usize, j: usize, upper: bool| 2 * (i * ny + j) + usize::from(upper);
    let mut facets = Vec::with_capacity(2 * nx + 2 * ny);
    let mut column_map = Vec::with_capacity(nx);
    for i in 0..nx {
        column_map.push(vec![facets.len()]);
        facets.push(BoundaryFacet {
            vertices: [vid(i + 1, ny), vid(i, ny)],
            marker: BoundaryMarker::Surface,
            triangle: tri(i, ny - 1, true),
        });
    }
    for i in 0..nx {
        facets.push(BoundaryFacet {
            vertices: [vid(i, 0), vid(i + 1, 0)],
            marker: BoundaryMarker::Bottom,
            triangle: tri(i, 0, false),
        });
    }
    for j in 0..ny {
        facets.push(BoundaryFacet {
            vertices: [vid(0, j + 1), vid(0, j)],
            marker: BoundaryMarker::Lateral,
            triangle: tri(0, j, true),
        });
        facets.push(BoundaryFacet {
            vertices: [vid(nx, j), vid(nx, j + 1)],
            marker: BoundaryMarker::Lateral,
            triangle: tri(nx - 1, j, false),
        });
    }
    Ok(VolumeMesh { vertices, triangles, facets, column_map, nx, ny })
}

fn layer_height(b: f64, h: f64, j: usize, ny: usize) -> f64 {
    if j == 0 {
        b
    } else if j == ny {
        h
    } else {
        b + (j as f64 / ny as f64) * (h - b)
    }
}

/// Moves every vertex along its column, keeping its relative height between
/// bedrock and surface.
pub fn remap_vertical(
    mesh: &VolumeMesh,
    grid_old: &SurfaceGrid,
    grid_new: &SurfaceGrid,
) -> Result<VolumeMesh, GeometryError> {
    if grid_old.x != grid_new.x || grid_old.bed != grid_new.bed || grid_old.n_cells() != mesh.nx {
        return Err(GeometryError::IncompatibleGrids);
    }
    grid_new.check_thickness()?;
    let mut out = mesh.clone();
    let ny = mesh.ny;
    for i in 0..=mesh.nx {
        let (b, h_old, h_new) = (grid_new.bed[i], grid_old.height[i], grid_new.height[i]);
        if h_old == h_new {
            continue;
        }
        for j in 0..=ny {
            let v = mesh.vertex_index(i, j);
            out.vertices[v][1] = match j {
                0 => b,
                j if j == ny => h_new,
                _ => {
                    let s = (mesh.vertices[v][1] - b) / (h_old - b);
                    b + s * (h_new - b)
                }
            };
        }
    }
    Ok(out)
}
