//! Least-squares fit from parameter space to condensed field space, and the
//! field difference induced by a parameter error.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{ParameterVector, Sample};
use crate::error::{PrevisError, Result};
use crate::geometry::SurfaceMesh;
use crate::reduction::{condense_signed_magnitude, PcaBasis, ScalarField};

/// Relative singular-value cutoff of the parameter-space pseudoinverse.
pub const PINV_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LlsfSolution {
    pub coefficients: Vec<f64>,
    pub effective_rank: usize,
}

/// Precomputed pseudoinverse of the `n x k` basis-parameter matrix `P`.
#[derive(Debug, Clone)]
pub struct Interpolator<'a> {
    basis: &'a PcaBasis,
    pinv: DMatrix<f64>,
    effective_rank: usize,
}

impl<'a> Interpolator<'a> {
    pub fn new(basis: &'a PcaBasis) -> Result<Self> {
        if basis.k() == 0 {
            return Err(PrevisError::Empty("PCA basis"));
        }
        let n = basis.parameter_count();
        let p = DMatrix::from_fn(n, basis.k(), |r, c| basis.basis_params[c].0[r]);
        let (pinv, effective_rank) = pseudoinverse(&p, PINV_RCOND);
        Ok(Self {
            basis,
            pinv,
            effective_rank,
        })
    }

    pub fn basis(&self) -> &PcaBasis {
        self.basis
    }

    pub fn effective_rank(&self) -> usize {
        self.effective_rank
    }

    /// Minimum-norm `c = argmin ||P c - (target - mean_params)||`.
    pub fn solve(&self, target: &ParameterVector) -> Result<LlsfSolution> {
        PrevisError::check_len("target parameters", self.basis.parameter_count(), target.len())?;
        if target.0.iter().any(|x| !x.is_finite()) {
            return Err(PrevisError::NonFinite("target parameter".into()));
        }
        let rhs = DVector::from_iterator(
            target.len(),
            target.0.iter().zip(&self.basis.mean_params.0).map(|(t, m)| t - m),
        );
        let c = &self.pinv * rhs;
        Ok(LlsfSolution {
            coefficients: c.iter().copied().collect(),
            effective_rank: self.effective_rank,
        })
    }

    /// `U*(target) = mean_field + sum_j c_j B_j`.
    pub fn interpolate(&self, target: &ParameterVector) -> Result<ScalarField> {
        let sol = self.solve(target)?;
        Ok(self.reconstruct(&sol.coefficients))
    }

    pub fn reconstruct(&self, coefficients: &[f64]) -> ScalarField {
        let mut values = self.basis.mean_field.values.clone();
        for (c, b) in coefficients.iter().zip(&self.basis.basis_fields) {
            for (u, x) in values.iter_mut().zip(&b.values) {
                *u += c * x;
            }
        }
        ScalarField {
            mesh_id: self.basis.mesh_id.clone(),
            values,
        }
    }

    pub fn delta_field(&self, a_pred: &ParameterVector, a_true: &ParameterVector) -> Result<ImpactField> {
        let pred = self.interpolate(a_pred)?;
        let truth = self.interpolate(a_true)?;
        let values = pred.values.iter().zip(&truth.values).map(|(p, t)| p - t).collect();
        Ok(ImpactField {
            field: ScalarField::new(self.basis.mesh_id.clone(), values)?,
            meta: ImpactMeta {
                kind: ImpactKind::Delta,
                model_id: None,
                parameter: None,
                span: None,
                a_pred: Some(a_pred.clone()),
                a_true: Some(a_true.clone()),
            },
        })
    }
}

/// Moore-Penrose pseudoinverse with cutoff `rcond * s_max`; returns the
/// pseudoinverse and the number of retained singular values.
pub fn pseudoinverse(m: &DMatrix<f64>, rcond: f64) -> (DMatrix<f64>, usize) {
    let svd = nalgebra::SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let s_max = s.iter().fold(0.0f64, |a, &x| a.max(x));
    let cutoff = rcond * s_max;
    let mut pinv = DMatrix::zeros(m.ncols(), m.nrows());
    let mut rank = 0;
    for (j, &sj) in s.iter().enumerate() {
        if sj > cutoff && sj > 0.0 {
            rank += 1;
            pinv += (v_t.row(j).transpose() * u.column(j).transpose()) / sj;
        }
    }
    (pinv, rank)
}

pub fn llsf_solve(basis: &PcaBasis, target: &ParameterVector) -> Result<LlsfSolution> {
    Interpolator::new(basis)?.solve(target)
}

pub fn interpolate(basis: &PcaBasis, target: &ParameterVector) -> Result<ScalarField> {
    Interpolator::new(basis)?.interpolate(target)
}

/// Signed field difference `U*(a_pred) - U*(a_true)`.
pub fn delta_field(basis: &PcaBasis, a_pred: &ParameterVector, a_true: &ParameterVector) -> Result<ImpactField> {
    Interpolator::new(basis)?.delta_field(a_pred, a_true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactKind {
    Delta,
    Whisker,
    Outlier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactMeta {
    pub kind: ImpactKind,
    pub model_id: Option<String>,
    pub parameter: Option<usize>,
    /// Parameter-space span `[lo, hi]` in mm.
    pub span: Option<(f64, f64)>,
    pub a_pred: Option<ParameterVector>,
    pub a_true: Option<ParameterVector>,
}

/// Field change induced by a parameter-space difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactField {
    pub field: ScalarField,
    pub meta: ImpactMeta,
}

/// Node-error statistics of the interpolation against ground-truth fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub max_abs_error: f64,
    pub rms_error: f64,
    pub per_sample_max: Vec<f64>,
}

pub fn validate_interpolation(basis: &PcaBasis, mesh: &SurfaceMesh, test: &[Sample]) -> Result<InterpolationReport> {
    if test.is_empty() {
        return Err(PrevisError::Empty("test ensemble"));
    }
    if basis.mesh_id != mesh.id() {
        return Err(PrevisError::MeshMismatch {
            expected: basis.mesh_id.clone(),
            found: mesh.id().to_string(),
        });
    }
    let interp = Interpolator::new(basis)?;
    let per_sample: Vec<(f64, f64)> = test
        .par_iter()
        .map(|s| {
            let truth = condense_signed_magnitude(&s.field, mesh)?;
            let approx = interp.interpolate(&s.params)?;
            let (max, sq) = truth
                .values
                .iter()
                .zip(&approx.values)
                .fold((0.0f64, 0.0), |(m, q), (t, a)| {
                    let e = (t - a).abs();
                    (m.max(e), q + e * e)
                });
            Ok((max, sq))
        })
        .collect::<Result<_>>()?;
    let nodes = (test.len() * mesh.vertex_count()) as f64;
    let per_sample_max: Vec<f64> = per_sample.iter().map(|p| p.0).collect();
    let max_abs_error = per_sample_max.iter().fold(0.0f64, |m, &x| m.max(x));
    let rms_error = (per_sample.iter().map(|p| p.1).sum::<f64>() / nodes).sqrt();
    Ok(InterpolationReport {
        max_abs_error,
        rms_error,
        per_sample_max,
    })
}
