//! Signed-magnitude condensation and the PCA basis with its parameter-space
//! twin.
//!
//! The PCA weights `w_ij = u_ij / s_j` reproduce each basis field exactly as a
//! combination of the centered training fields, `B_j = sum_i w_ij X_i`. The
//! same weights applied to the centered design rows give the basis parameter
//! sets `p_j`, which is what lets a least-squares fit in parameter space be
//! transferred to field space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleDesign, ParameterSpace, ParameterVector, Sample, VectorField};
use crate::error::{PrevisError, Result};
use crate::geometry::SurfaceMesh;

pub const DEFAULT_BASIS_SIZE: usize = 10;

/// Per-vertex scalar field in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub mesh_id: String,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(PrevisError::NonFinite("scalar field entry".into()));
        }
        Ok(Self {
            mesh_id: mesh_id.into(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Projects each displacement onto its vertex normal.
pub fn condense_signed_magnitude(field: &VectorField, mesh: &SurfaceMesh) -> Result<ScalarField> {
    field.check_mesh(mesh)?;
    let values = field
        .values
        .iter()
        .zip(mesh.normals())
        .map(|(u, n)| u[0] * n[0] + u[1] * n[1] + u[2] * n[2])
        .collect();
    ScalarField::new(mesh.id(), values)
}

/// Field-space half of a PCA fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPca {
    pub mean_field: ScalarField,
    /// Orthonormal, sign-normalized so the largest-magnitude entry is positive.
    pub basis_fields: Vec<ScalarField>,
    /// Non-increasing; `s_j^2 / ||X||_F^2`.
    pub explained_variance_ratio: Vec<f64>,
    pub singular_values: Vec<f64>,
}

/// Per-sample coefficients of a PCA fit (`samples x k`).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaScores {
    /// `u_ij / s_j`: builds `B_j` from the centered fields.
    pub weights: DMatrix<f64>,
    /// `u_ij * s_j`: reconstructs centered field `i` from the basis.
    pub projections: DMatrix<f64>,
}

/// Mean-centered PCA of a set of scalar fields.
///
/// Components whose singular value falls below the numerical-rank threshold
/// `s_max * max(rows, cols) * eps` are dropped, so the effective basis size
/// can be smaller than `k` (zero for constant input).
pub fn fit_pca(fields: &[ScalarField], k: usize) -> Result<(FieldPca, PcaScores)> {
    if fields.len() < 2 {
        return Err(PrevisError::invalid(format!(
            "PCA needs at least two fields, got {}",
            fields.len()
        )));
    }
    let mesh_id = fields[0].mesh_id.clone();
    let n_vertices = fields[0].len();
    for f in fields {
        if f.mesh_id != mesh_id {
            return Err(PrevisError::MeshMismatch {
                expected: mesh_id,
                found: f.mesh_id.clone(),
            });
        }
        PrevisError::check_len("scalar field", n_vertices, f.len())?;
    }
    let n_samples = fields.len();
    if k > n_samples.min(n_vertices) {
        return Err(PrevisError::invalid(format!(
            "k = {k} exceeds min(fields, vertices) = {}",
            n_samples.min(n_vertices)
        )));
    }

    let mut mean = vec![0.0; n_vertices];
    for f in fields {
        for (m, x) in mean.iter_mut().zip(&f.values) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_samples as f64);

    let data = DMatrix::from_fn(n_samples, n_vertices, |i, v| fields[i].values[v] - mean[v]);
    let total: f64 = data.iter().map(|x| x * x).sum();
    let mean_field = ScalarField::new(mesh_id.clone(), mean)?;

    let empty = |mean_field| {
        Ok((
            FieldPca {
                mean_field,
                basis_fields: vec![],
                explained_variance_ratio: vec![],
                singular_values: vec![],
            },
            PcaScores {
                weights: DMatrix::zeros(n_samples, 0),
                projections: DMatrix::zeros(n_samples, 0),
            },
        ))
    };
    if total == 0.0 || k == 0 {
        return empty(mean_field);
    }

    let svd = nalgebra::SVD::new(data, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let s_max = s.iter().fold(0.0f64, |m, &x| m.max(x));
    let tol = s_max * n_samples.max(n_vertices) as f64 * f64::EPSILON;

    // nalgebra returns singular values sorted descending
    let keep = (0..k).take_while(|&j| s[j] > tol).count();
    if keep == 0 {
        return empty(mean_field);
    }

    let mut basis_fields = Vec::with_capacity(keep);
    let mut weights = DMatrix::zeros(n_samples, keep);
    let mut projections = DMatrix::zeros(n_samples, keep);
    let mut ratios = Vec::with_capacity(keep);
    let mut singular_values = Vec::with_capacity(keep);
    for j in 0..keep {
        let mut b: Vec<f64> = v_t.row(j).iter().copied().collect();
        let (imax, _) = b
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bm), (i, x)| if x.abs() > bm { (i, x.abs()) } else { (bi, bm) });
        let sign = if b[imax] < 0.0 { -1.0 } else { 1.0 };
        if sign < 0.0 {
            b.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..n_samples {
            let uij = sign * u[(i, j)];
            weights[(i, j)] = uij / s[j];
            projections[(i, j)] = uij * s[j];
        }
        basis_fields.push(ScalarField::new(mesh_id.clone(), b)?);
        ratios.push(s[j] * s[j] / total);
        singular_values.push(s[j]);
    }

    Ok((
        FieldPca {
            mean_field,
            basis_fields,
            explained_variance_ratio: ratios,
            singular_values,
        },
        PcaScores {
            weights,
            projections,
        },
    ))
}

/// Parameter-space images of the basis fields.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisParameters {
    pub params: Vec<ParameterVector>,
    pub mean_params: ParameterVector,
}

/// `p_j = sum_i w_ij (a_i - mean_a)` with the PCA weights.
pub fn basis_parameter_sets(scores: &PcaScores, design: &EnsembleDesign) -> Result<BasisParameters> {
    PrevisError::check_len("design rows", scores.weights.nrows(), design.len())?;
    let dim = design.space.dim();
    for row in &design.rows {
        PrevisError::check_len("design row", dim, row.len())?;
    }
    let mean_params = design.column_means();
    let params = (0..scores.weights.ncols())
        .map(|j| {
            let mut p = vec![0.0; dim];
            for (i, row) in design.rows.iter().enumerate() {
                let w = scores.weights[(i, j)];
                for (pd, (a, m)) in p.iter_mut().zip(row.0.iter().zip(&mean_params.0)) {
                    *pd += w * (a - m);
                }
            }
            ParameterVector(p)
        })
        .collect();
    Ok(BasisParameters {
        params,
        mean_params,
    })
}

/// Reduced-order basis linking parameter space and condensed field space.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mesh_id: String,
    pub space: ParameterSpace,
    pub mean_field: ScalarField,
    pub basis_fields: Vec<ScalarField>,
    pub basis_params: Vec<ParameterVector>,
    pub mean_params: ParameterVector,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaBasis {
    pub fn new(space: ParameterSpace, fields: FieldPca, params: BasisParameters) -> Result<Self> {
        let k = fields.basis_fields.len();
        PrevisError::check_len("basis parameter sets", k, params.params.len())?;
        PrevisError::check_len("mean parameters", space.dim(), params.mean_params.len())?;
        Ok(Self {
            mesh_id: fields.mean_field.mesh_id.clone(),
            space,
            mean_field: fields.mean_field,
            basis_fields: fields.basis_fields,
            basis_params: params.params,
            mean_params: params.mean_params,
            explained_variance_ratio: fields.explained_variance_ratio,
        })
    }

    /// Condenses an ensemble, fits the PCA and derives the basis parameter sets.
    pub fn from_ensemble(
        mesh: &SurfaceMesh,
        samples: &[Sample],
        design: &EnsembleDesign,
        k: usize,
    ) -> Result<Self> {
        PrevisError::check_len("ensemble samples", design.len(), samples.len())?;
        let fields = samples
            .iter()
            .map(|s| condense_signed_magnitude(&s.field, mesh))
            .collect::<Result<Vec<_>>>()?;
        let (pca, scores) = fit_pca(&fields, k)?;
        let params = basis_parameter_sets(&scores, design)?;
        Self::new(design.space.clone(), pca, params)
    }

    pub fn k(&self) -> usize {
        self.basis_fields.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mean_field.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.space.dim()
    }

    /// Cumulative ratio of the first `count` components (0 for an empty basis).
    pub fn explained_variance(&self, count: usize) -> f64 {
        self.explained_variance_ratio.iter().take(count).sum()
    }
}

/// Prefix sums of the explained-variance ratios.
pub fn explained_variance(basis: &PcaBasis) -> Vec<f64> {
    basis
        .explained_variance_ratio
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect()
}
