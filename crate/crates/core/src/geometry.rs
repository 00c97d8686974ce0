//! Surface meshes, their vertex graphs and the truncated graph Fourier basis.
//!
//! The vertex graph is the unweighted 1-ring adjacency of the triangulation.
//! [`normalized_laplacian`] builds `L = I - D^-1/2 A D^-1/2` over it and
//! [`spectral_basis`] keeps the `mu` lowest eigenpairs together with the
//! eigenvalues affinely rescaled so the largest retained one sits at `1`.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PrevisError, Result};

/// Eigenpair residual bound `||L v - lambda v|| <= EIGEN_RESIDUAL_TOL * ||v||`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Regular grid layout of a plate mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateLayout {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

/// Triangulated surface with unit per-vertex normals.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    id: String,
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<[f64; 3]>,
    plate: Option<PlateLayout>,
}

impl SurfaceMesh {
    /// Builds a mesh from raw geometry, computing area-weighted vertex normals.
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let normals = area_weighted_normals(&vertices, &triangles)?;
        Self::with_normals(vertices, triangles, normals, None)
    }

    /// Builds a mesh with caller-supplied normals. All invariants are checked.
    pub fn with_normals(
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
        normals: Vec<[f64; 3]>,
        plate: Option<PlateLayout>,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(PrevisError::InvalidMesh("no vertices".into()));
        }
        if triangles.is_empty() {
            return Err(PrevisError::InvalidMesh("no triangles".into()));
        }
        PrevisError::check_len("normals", vertices.len(), normals.len())?;
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(PrevisError::InvalidMesh(format!(
                    "triangle {t} references a vertex outside 0..{n}"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(PrevisError::InvalidMesh(format!(
                    "triangle {t} is degenerate: {tri:?}"
                )));
            }
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(PrevisError::InvalidMesh("non-finite vertex position".into()));
        }
        for (v, nrm) in normals.iter().enumerate() {
            let len = norm3(nrm);
            if (len - 1.0).abs() > 1e-12 {
                return Err(PrevisError::InvalidMesh(format!(
                    "normal {v} has length {len}"
                )));
            }
        }

        let mut mesh = SurfaceMesh {
            id: String::new(),
            vertices,
            triangles,
            normals,
            plate,
        };
        let graph = mesh.graph();
        if let Some(v) = graph.neighbors.iter().position(|nb| nb.is_empty()) {
            return Err(PrevisError::IsolatedVertex(v));
        }
        if !graph.is_connected() {
            return Err(PrevisError::InvalidMesh("vertex graph is not connected".into()));
        }
        mesh.id = mesh.content_hash();
        Ok(mesh)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }

    pub fn plate_layout(&self) -> Option<PlateLayout> {
        self.plate
    }

    /// Unweighted 1-ring vertex adjacency.
    pub fn graph(&self) -> VertexGraph {
        let mut sets = vec![BTreeSet::new(); self.vertices.len()];
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        VertexGraph {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    /// Bounding box `(min, max)` of the vertex positions.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.vertices {
            for x in v {
                hasher.update(x.to_le_bytes());
            }
        }
        for t in &self.triangles {
            for &i in t {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        for nrm in &self.normals {
            for x in nrm {
                hasher.update(x.to_le_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

/// Regular triangulated plate in the `z = 0` plane, normals `(0, 0, 1)`.
///
/// Vertices are laid out row by row (`index = row * nx + col`), every grid
/// cell split into two triangles along the same diagonal.
pub fn build_plate_mesh(nx: usize, ny: usize, width: f64, height: f64) -> Result<SurfaceMesh> {
    if nx < 2 || ny < 2 {
        return Err(PrevisError::invalid(format!(
            "plate needs at least 2x2 vertices, got {nx}x{ny}"
        )));
    }
    if !(width > 0.0 && width.is_finite() && height > 0.0 && height.is_finite()) {
        return Err(PrevisError::invalid(format!(
            "plate extent must be positive, got {width}x{height}"
        )));
    }
    let mut vertices = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        let y = height * row as f64 / (ny - 1) as f64;
        for col in 0..nx {
            let x = width * col as f64 / (nx - 1) as f64;
            vertices.push([x, y, 0.0]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for row in 0..ny - 1 {
        for col in 0..nx - 1 {
            let a = row * nx + col;
            let b = a + 1;
            let c = a + nx;
            let d = c + 1;
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let normals = vec![[0.0, 0.0, 1.0]; vertices.len()];
    SurfaceMesh::with_normals(
        vertices,
        triangles,
        normals,
        Some(PlateLayout {
            nx,
            ny,
            width,
            height,
        }),
    )
}

fn area_weighted_normals(vertices: &[[f64; 3]], triangles: &[[usize; 3]]) -> Result<Vec<[f64; 3]>> {
    let n = vertices.len();
    let mut acc = vec![[0.0; 3]; n];
    for tri in triangles {
        if tri.iter().any(|&i| i >= n) {
            return Err(PrevisError::InvalidMesh(format!(
                "triangle {tri:?} references a vertex outside 0..{n}"
            )));
        }
        let [p, q, r] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        let e1 = sub3(&q, &p);
        let e2 = sub3(&r, &p);
        // cross product length is twice the area, so this is area weighted
        let c = cross3(&e1, &e2);
        for &i in tri {
            for d in 0..3 {
                acc[i][d] += c[d];
            }
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(v, a)| {
            let len = norm3(&a);
            if len > 0.0 && len.is_finite() {
                Ok([a[0] / len, a[1] / len, a[2] / len])
            } else {
                Err(PrevisError::InvalidMesh(format!(
                    "vertex {v} has no well-defined normal"
                )))
            }
        })
        .collect()
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Undirected simple graph stored as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexGraph {
    pub neighbors: Vec<Vec<usize>>,
}

impl VertexGraph {
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); vertex_count];
        for &(a, b) in edges {
            if a >= vertex_count || b >= vertex_count {
                return Err(PrevisError::invalid(format!(
                    "edge ({a}, {b}) outside 0..{vertex_count}"
                )));
            }
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        Ok(Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }
}

/// Symmetric sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "vector length must match matrix dimension");
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

/// `L = I - D^-1/2 A D^-1/2` of the mesh vertex graph.
pub fn normalized_laplacian(mesh: &SurfaceMesh) -> Result<SparseSymmetric> {
    graph_normalized_laplacian(&mesh.graph())
}

/// Normalized Laplacian of an arbitrary graph. Isolated vertices are rejected.
pub fn graph_normalized_laplacian(graph: &VertexGraph) -> Result<SparseSymmetric> {
    let n = graph.vertex_count();
    if n == 0 {
        return Err(PrevisError::Empty("graph"));
    }
    if let Some(v) = (0..n).find(|&v| graph.degree(v) == 0) {
        return Err(PrevisError::IsolatedVertex(v));
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|v| 1.0 / (graph.degree(v) as f64).sqrt()).collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for v in 0..n {
        let mut entries: Vec<(usize, f64)> = graph.neighbors[v]
            .iter()
            .map(|&w| (w, -inv_sqrt[v] * inv_sqrt[w]))
            .collect();
        entries.push((v, 1.0));
        entries.sort_by_key(|e| e.0);
        for (c, x) in entries {
            col_idx.push(c);
            values.push(x);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseSymmetric {
        n,
        row_ptr,
        col_idx,
        values,
    })
}

/// Lowest `mu` eigenpairs of a normalized Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    pub mu: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `vertex_count x mu`, one orthonormal eigenvector per column.
    pub eigenvectors: DMatrix<f64>,
    /// `2 * lambda_i / lambda_mu - 1`; the last entry is exactly `1`.
    pub rescaled_eigenvalues: Vec<f64>,
}

impl SpectralOperator {
    pub fn vertex_count(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// Assembles an operator from stored eigenpairs, recomputing the rescaling.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>) -> Result<Self> {
        let mu = eigenvalues.len();
        if mu == 0 {
            return Err(PrevisError::Empty("spectral basis"));
        }
        PrevisError::check_len("eigenvector count", mu, eigenvectors.ncols())?;
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(PrevisError::invalid("eigenvalues must be ascending"));
        }
        let rescaled_eigenvalues = rescale_eigenvalues(&eigenvalues);
        Ok(Self {
            mu,
            eigenvalues,
            eigenvectors,
            rescaled_eigenvalues,
        })
    }

    /// Projects a per-vertex signal onto the retained eigenvectors.
    pub fn project(&self, signal: &[f64]) -> Vec<f64> {
        assert_eq!(signal.len(), self.vertex_count());
        self.eigenvectors
            .column_iter()
            .map(|col| col.iter().zip(signal).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn rescale_eigenvalues(eigenvalues: &[f64]) -> Vec<f64> {
    let mu = eigenvalues.len();
    let anchor = eigenvalues[mu - 1];
    let mut out: Vec<f64> = if anchor > 0.0 {
        eigenvalues
            .iter()
            .map(|&l| (2.0 * l / anchor - 1.0).clamp(-1.0, 1.0))
            .collect()
    } else {
        // only the zero eigenvalue is retained
        vec![1.0; mu]
    };
    out[mu - 1] = 1.0;
    out
}

/// First `mu` eigenpairs (ascending) of `laplacian` via a dense symmetric solve.
///
/// Eigenvectors are sign-normalized so their first non-negligible component is
/// positive. Every retained pair is checked against [`EIGEN_RESIDUAL_TOL`].
// TODO: switch to a sparse Lanczos solve for meshes beyond a few thousand vertices;
// the dense solve is cubic in the vertex count.
pub fn spectral_basis(laplacian: &SparseSymmetric, mu: usize) -> Result<SpectralOperator> {
    let n = laplacian.dim();
    if mu < 1 || mu > n {
        return Err(PrevisError::invalid(format!(
            "mu must lie in 1..={n}, got {mu}"
        )));
    }
    let dense = laplacian.to_dense();
    let eig = SymmetricEigen::try_new(dense, f64::EPSILON, 0)
        .ok_or(PrevisError::EigenNonConvergence {
            residual: f64::INFINITY,
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut eigenvalues = Vec::with_capacity(mu);
    let mut eigenvectors = DMatrix::zeros(n, mu);
    let mut worst = 0.0f64;
    for (slot, &idx) in order.iter().take(mu).enumerate() {
        let lambda = eig.eigenvalues[idx];
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        apply_sign_convention(&mut v);

        let lv = laplacian.mul_vec(&v);
        let residual = lv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(residual);

        eigenvalues.push(lambda);
        eigenvectors.column_mut(slot).copy_from_slice(&v);
    }
    if !(worst <= EIGEN_RESIDUAL_TOL) {
        return Err(PrevisError::EigenNonConvergence { residual: worst });
    }
    SpectralOperator::from_parts(eigenvalues, eigenvectors)
}

/// Flips `v` so its first component above `1e-10 * max|v|` is positive.
pub(crate) fn apply_sign_convention(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-10 * scale) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_dense_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn smallest_plate() {
        let mesh = build_plate_mesh(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.triangles().len(), 2);
    }

    #[test]
    fn plate_triangle_count_matches_grid_enumeration() {
        let mesh = build_plate_mesh(40, 25, 1200.0, 700.0).unwrap();
        assert_eq!(mesh.vertex_count(), 1000);
        // enumerate grid cells independently; each contributes two triangles
        let mut cells = 0;
        for row in 0..25 {
            for col in 0..40 {
                if row + 1 < 25 && col + 1 < 40 {
                    cells += 1;
                }
            }
        }
        assert_eq!(mesh.triangles().len(), 2 * cells);
        assert_eq!(mesh.triangles().len(), 1872);
    }

    #[test]
    fn planar_normals_point_up() {
        let mesh = build_plate_mesh(3, 2, 1.0, 1.0).unwrap();
        assert!(mesh.normals().iter().all(|n| *n == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn plate_is_deterministic() {
        let a = build_plate_mesh(7, 5, 3.0, 2.0).unwrap();
        let b = build_plate_mesh(7, 5, 3.0, 2.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id(), b.id());
        let c = build_plate_mesh(7, 5, 3.0, 2.5).unwrap();
        assert_ne!(a.id(), c.id());
    }

    #[test]
    fn rejects_tiny_grids_and_bad_extent() {
        assert!(build_plate_mesh(1, 5, 1.0, 1.0).is_err());
        assert!(build_plate_mesh(5, 1, 1.0, 1.0).is_err());
        assert!(build_plate_mesh(3, 3, 0.0, 1.0).is_err());
        assert!(build_plate_mesh(3, 3, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn rejects_degenerate_and_out_of_range_triangles() {
        let verts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(SurfaceMesh::new(verts.clone(), vec![[0, 1, 1]]).is_err());
        assert!(SurfaceMesh::new(verts.clone(), vec![[0, 1, 3]]).is_err());
        assert!(SurfaceMesh::new(verts, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn rejects_disconnected_and_isolated() {
        let verts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [5.0, 0.0, 0.0],
            [6.0, 0.0, 0.0],
            [5.0, 1.0, 0.0],
        ];
        let err = SurfaceMesh::new(verts.clone(), vec![[0, 1, 2], [3, 4, 5]]).unwrap_err();
        assert!(matches!(err, PrevisError::InvalidMesh(_)));
        let mut v4 = verts[..3].to_vec();
        v4.push([3.0, 3.0, 0.0]);
        let normals = vec![[0.0, 0.0, 1.0]; 4];
        let err = SurfaceMesh::with_normals(v4, vec![[0, 1, 2]], normals, None).unwrap_err();
        assert!(matches!(err, PrevisError::IsolatedVertex(3)));
    }

    #[test]
    fn general_mesh_normals_are_unit() {
        // tetrahedron surface
        let verts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let tris = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        let mesh = SurfaceMesh::new(verts, tris).unwrap();
        for n in mesh.normals() {
            assert!((norm3(n) - 1.0).abs() <= 1e-12);
        }
        // vertex 3 sits on the +z apex, its normal leans outward
        assert!(mesh.normals()[3][2] > 0.0);
    }

    #[test]
    fn k3_laplacian_spectrum() {
        let verts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let mesh = SurfaceMesh::new(verts, vec![[0, 1, 2]]).unwrap();
        let lap = normalized_laplacian(&mesh).unwrap();
        let ev = sorted_dense_eigenvalues(lap.to_dense());
        for (got, want) in ev.iter().zip([0.0, 1.5, 1.5]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
        let op = spectral_basis(&lap, 3).unwrap();
        for (got, want) in op.rescaled_eigenvalues.iter().zip([-1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{:?}", op.rescaled_eigenvalues);
        }
        assert_eq!(op.rescaled_eigenvalues[2], 1.0);
    }

    #[test]
    fn path_graph_spectrum() {
        let g = VertexGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let lap = graph_normalized_laplacian(&g).unwrap();
        let ev = sorted_dense_eigenvalues(lap.to_dense());
        for (got, want) in ev.iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn sqrt_degree_is_null_vector() {
        let mesh = build_plate_mesh(6, 4, 2.0, 1.0).unwrap();
        let g = mesh.graph();
        let lap = normalized_laplacian(&mesh).unwrap();
        let x: Vec<f64> = (0..g.vertex_count()).map(|v| (g.degree(v) as f64).sqrt()).collect();
        let lx = lap.mul_vec(&x);
        assert!(lx.iter().all(|y| y.abs() < 1e-12));
    }

    #[test]
    fn isolated_vertex_rejected() {
        let g = VertexGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(matches!(
            graph_normalized_laplacian(&g),
            Err(PrevisError::IsolatedVertex(2))
        ));
    }

    #[test]
    fn laplacian_is_symmetric_with_bounded_spectrum() {
        let mesh = build_plate_mesh(5, 4, 1.0, 1.0).unwrap();
        let lap = normalized_laplacian(&mesh).unwrap();
        let d = lap.to_dense();
        assert_eq!(d, d.transpose());
        let ev = sorted_dense_eigenvalues(d);
        assert!(ev.iter().all(|&l| l > -1e-12 && l < 2.0 + 1e-12));
    }

    #[test]
    fn mu_one_is_constant_sign() {
        let mesh = build_plate_mesh(5, 4, 1.0, 1.0).unwrap();
        let lap = normalized_laplacian(&mesh).unwrap();
        let op = spectral_basis(&lap, 1).unwrap();
        assert!(op.eigenvalues[0].abs() < 1e-10);
        assert!(op.eigenvectors.column(0).iter().all(|&x| x > 0.0));
        assert_eq!(op.rescaled_eigenvalues, vec![1.0]);
    }

    #[test]
    fn mu_out_of_range() {
        let mesh = build_plate_mesh(3, 3, 1.0, 1.0).unwrap();
        let lap = normalized_laplacian(&mesh).unwrap();
        assert!(spectral_basis(&lap, 0).is_err());
        assert!(spectral_basis(&lap, 10).is_err());
        assert!(spectral_basis(&lap, 9).is_ok());
    }

    #[test]
    fn desk_plate_spectral_basis() {
        let mesh = build_plate_mesh(40, 25, 1200.0, 700.0).unwrap();
        let lap = normalized_laplacian(&mesh).unwrap();
        let op = spectral_basis(&lap, 100).unwrap();
        assert_eq!(op.mu, 100);
        assert!(op.eigenvalues[0].abs() <= 1e-10);
        assert!(op.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..op.mu {
            let v: Vec<f64> = op.eigenvectors.column(i).iter().copied().collect();
            let lv = lap.mul_vec(&v);
            let r = lv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - op.eigenvalues[i] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(r < 1e-8, "residual {r} for pair {i}");
        }
        let gram = op.eigenvectors.transpose() * &op.eigenvectors;
        for i in 0..op.mu {
            for j in 0..op.mu {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-8);
            }
        }
        assert_eq!(op.rescaled_eigenvalues[op.mu - 1], 1.0);
        assert_eq!(op.rescaled_eigenvalues[0], -1.0);
        assert!(op.rescaled_eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
}
