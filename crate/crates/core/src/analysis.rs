//! Per-parameter prediction error statistics and their footprint on the
//! geometry.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{ParameterSpace, Sample};
use crate::error::{PrevisError, Result};
use crate::interpolation::{ImpactField, ImpactKind, ImpactMeta, Interpolator};
use crate::reduction::{PcaBasis, ScalarField};
use crate::regressors::Predictor;

/// Tukey fence multiplier.
pub const WHISKER_IQR_FACTOR: f64 = 1.5;

/// Signed errors `a_hat - a`, one row per test sample.
pub fn prediction_errors<P: Predictor + ?Sized>(model: &P, test: &[Sample]) -> Result<DMatrix<f64>> {
    let first = test.first().ok_or(PrevisError::Empty("test ensemble"))?;
    let dim = first.params.len();
    let fields: Vec<_> = test.iter().map(|s| &s.field).collect();
    let predicted = model.predict_batch(&fields)?;
    let mut errors = DMatrix::zeros(test.len(), dim);
    for (row, (sample, pred)) in test.iter().zip(&predicted).enumerate() {
        PrevisError::check_len("true parameters", dim, sample.params.len())?;
        PrevisError::check_len("predicted parameters", dim, pred.len())?;
        for j in 0..dim {
            errors[(row, j)] = pred.0[j] - sample.params.0[j];
        }
    }
    Ok(errors)
}

/// Divides each column by the width of its parameter range.
pub fn relative_errors(errors: &DMatrix<f64>, space: &ParameterSpace) -> Result<DMatrix<f64>> {
    PrevisError::check_len("error columns", space.dim(), errors.ncols())?;
    let widths = space.widths();
    if let Some(j) = widths.iter().position(|w| !(*w > 0.0)) {
        return Err(PrevisError::invalid(format!("parameter {} has zero-width bounds", space.names[j])));
    }
    let mut out = errors.clone();
    for (j, w) in widths.iter().enumerate() {
        out.column_mut(j).iter_mut().for_each(|e| *e /= w);
    }
    Ok(out)
}

/// Five-number summary with Tukey whiskers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    /// Ascending.
    pub outliers: Vec<f64>,
    pub count: usize,
}

impl BoxplotStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    /// Smallest and largest value including outliers.
    pub fn full_range(&self) -> (f64, f64) {
        let lo = self.outliers.first().map_or(self.whisker_lo, |&o| o.min(self.whisker_lo));
        let hi = self.outliers.last().map_or(self.whisker_hi, |&o| o.max(self.whisker_hi));
        (lo, hi)
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n - 1) p`).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    match sorted.get(lo + 1) {
        Some(&next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    }
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(PrevisError::Empty("boxplot values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PrevisError::NonFinite("boxplot value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - WHISKER_IQR_FACTOR * iqr;
    let hi_fence = q3 + WHISKER_IQR_FACTOR * iqr;
    // q1 and q3 lie between data points inside the fences, so both exist
    let whisker_lo = *sorted.iter().find(|&&v| v >= lo_fence).expect("fence below q1");
    let whisker_hi = *sorted.iter().rev().find(|&&v| v <= hi_fence).expect("fence above q3");
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < whisker_lo || v > whisker_hi)
        .collect();
    Ok(BoxplotStats {
        median,
        q1,
        q3,
        whisker_lo,
        whisker_hi,
        outliers,
        count: sorted.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterErrorStats {
    pub name: String,
    #[serde(flatten)]
    pub stats: BoxplotStats,
    /// Millimetres per unit of the summarized errors (the range width for
    /// relative errors, `1` otherwise).
    pub scale_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub model_id: String,
    pub relative: bool,
    pub parameters: Vec<ParameterErrorStats>,
}

impl ErrorSummary {
    /// Boxplot per column of an error matrix. With `relative` set the matrix
    /// holds relative errors and the range widths are kept for converting back.
    pub fn from_errors(model_id: impl Into<String>, errors: &DMatrix<f64>, space: &ParameterSpace, relative: bool) -> Result<Self> {
        PrevisError::check_len("error columns", space.dim(), errors.ncols())?;
        let widths = space.widths();
        let parameters = (0..errors.ncols())
            .map(|j| {
                let column: Vec<f64> = errors.column(j).iter().copied().collect();
                Ok(ParameterErrorStats {
                    name: space.names[j].clone(),
                    stats: boxplot_stats(&column)?,
                    scale_mm: if relative { widths[j] } else { 1.0 },
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            model_id: model_id.into(),
            relative,
            parameters,
        })
    }

    pub fn parameter_names(&self) -> Vec<&str> {
        self.parameters.iter().map(|p| p.name.as_str()).collect()
    }
}

fn span_impact(
    basis: &PcaBasis,
    interp: &Interpolator<'_>,
    j: usize,
    span_mm: (f64, f64),
    meta: ImpactMeta,
) -> Result<ImpactField> {
    let shifted = |offset: f64| {
        let mut p = basis.mean_params.clone();
        p.0[j] += offset;
        p
    };
    let hi = interp.interpolate(&shifted(span_mm.1))?;
    let lo = interp.interpolate(&shifted(span_mm.0))?;
    let values = hi.values.iter().zip(&lo.values).map(|(a, b)| (a - b).abs()).collect();
    Ok(ImpactField {
        field: ScalarField::new(basis.mesh_id.clone(), values)?,
        meta,
    })
}

fn parameter_stats<'s>(basis: &PcaBasis, summary: &'s ErrorSummary, j: usize) -> Result<&'s ParameterErrorStats> {
    PrevisError::check_len("summary parameters", basis.parameter_count(), summary.parameters.len())?;
    summary
        .parameters
        .get(j)
        .ok_or_else(|| PrevisError::invalid(format!("parameter index {j} out of range")))
}

/// Nodewise `|U*(a_bar + hi e_j) - U*(a_bar + lo e_j)|` over the whisker span
/// of parameter `j`, with `a_bar` the basis mean parameters.
pub fn whisker_impact_field(basis: &PcaBasis, summary: &ErrorSummary, j: usize) -> Result<ImpactField> {
    let interp = Interpolator::new(basis)?;
    whisker_impact_with(basis, &interp, summary, j)
}

fn whisker_impact_with(basis: &PcaBasis, interp: &Interpolator<'_>, summary: &ErrorSummary, j: usize) -> Result<ImpactField> {
    let p = parameter_stats(basis, summary, j)?;
    let span = (p.stats.whisker_lo * p.scale_mm, p.stats.whisker_hi * p.scale_mm);
    let meta = ImpactMeta {
        kind: ImpactKind::Whisker,
        model_id: Some(summary.model_id.clone()),
        parameter: Some(j),
        span: Some(span),
        a_pred: None,
        a_true: None,
    };
    span_impact(basis, interp, j, span, meta)
}

/// Same construction as [`whisker_impact_field`] over the full error range
/// of parameter `j`, outliers included. Without outliers the two coincide.
pub fn outlier_impact_field(basis: &PcaBasis, summary: &ErrorSummary, j: usize) -> Result<ImpactField> {
    let interp = Interpolator::new(basis)?;
    outlier_impact_with(basis, &interp, summary, j)
}

fn outlier_impact_with(basis: &PcaBasis, interp: &Interpolator<'_>, summary: &ErrorSummary, j: usize) -> Result<ImpactField> {
    let p = parameter_stats(basis, summary, j)?;
    let (lo, hi) = p.stats.full_range();
    let span = (lo * p.scale_mm, hi * p.scale_mm);
    let meta = ImpactMeta {
        kind: ImpactKind::Outlier,
        model_id: Some(summary.model_id.clone()),
        parameter: Some(j),
        span: Some(span),
        a_pred: None,
        a_true: None,
    };
    span_impact(basis, interp, j, span, meta)
}

/// Per-parameter differences `b - a` of two summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDelta {
    pub model_a: String,
    pub model_b: String,
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
    pub whisker_span: Vec<f64>,
    pub outlier_count: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub parameter_names: Vec<String>,
    pub models: Vec<ErrorSummary>,
    pub deltas: Vec<PairwiseDelta>,
}

/// Aligns summaries over the same parameters into one table.
pub fn compare_models(summaries: &[ErrorSummary]) -> Result<ComparisonReport> {
    let first = summaries.first().ok_or(PrevisError::Empty("model summaries"))?;
    let names = first.parameter_names();
    if let Some(bad) = summaries.iter().find(|s| s.parameter_names() != names) {
        return Err(PrevisError::invalid(format!(
            "parameter names of {} do not match {}",
            bad.model_id, first.model_id
        )));
    }
    if let Some(bad) = summaries.iter().find(|s| s.relative != first.relative) {
        return Err(PrevisError::invalid(format!(
            "{} mixes relative and absolute errors",
            bad.model_id
        )));
    }
    let mut deltas = Vec::new();
    for (i, a) in summaries.iter().enumerate() {
        for b in &summaries[i + 1..] {
            let diff = |f: &dyn Fn(&ParameterErrorStats) -> f64| -> Vec<f64> {
                a.parameters.iter().zip(&b.parameters).map(|(x, y)| f(y) - f(x)).collect()
            };
            deltas.push(PairwiseDelta {
                model_a: a.model_id.clone(),
                model_b: b.model_id.clone(),
                median: diff(&|p| p.stats.median),
                iqr: diff(&|p| p.stats.iqr()),
                whisker_span: diff(&|p| p.stats.whisker_hi - p.stats.whisker_lo),
                outlier_count: a
                    .parameters
                    .iter()
                    .zip(&b.parameters)
                    .map(|(x, y)| y.stats.outliers.len() as i64 - x.stats.outliers.len() as i64)
                    .collect(),
            });
        }
    }
    Ok(ComparisonReport {
        parameter_names: names.into_iter().map(String::from).collect(),
        models: summaries.to_vec(),
        deltas,
    })
}

/// Whisker and full-range impact fields of one model and parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterImpact {
    pub model_id: String,
    pub parameter: usize,
    pub whisker: ImpactField,
    pub outlier: ImpactField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: ComparisonReport,
    /// Model-major, then parameter.
    pub impacts: Vec<ParameterImpact>,
}

/// Prediction errors, relative boxplots, comparison and impact fields for
/// every model and parameter.
pub fn evaluate_models(models: &[(String, &dyn Predictor)], basis: &PcaBasis, test: &[Sample]) -> Result<Evaluation> {
    if models.is_empty() {
        return Err(PrevisError::Empty("model list"));
    }
    if let Some(s) = test.iter().find(|s| s.field.mesh_id != basis.mesh_id) {
        return Err(PrevisError::MeshMismatch {
            expected: basis.mesh_id.clone(),
            found: s.field.mesh_id.clone(),
        });
    }
    let summaries = models
        .iter()
        .map(|(id, model)| {
            let errors = prediction_errors(*model, test)?;
            ErrorSummary::from_errors(id.clone(), &relative_errors(&errors, &basis.space)?, &basis.space, true)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = compare_models(&summaries)?;
    let interp = Interpolator::new(basis)?;
    let jobs: Vec<(usize, usize)> = (0..summaries.len())
        .flat_map(|m| (0..basis.parameter_count()).map(move |j| (m, j)))
        .collect();
    let impacts = jobs
        .par_iter()
        .map(|&(m, j)| {
            let s = &summaries[m];
            Ok(ParameterImpact {
                model_id: s.model_id.clone(),
                parameter: j,
                whisker: whisker_impact_with(basis, &interp, s, j)?,
                outlier: outlier_impact_with(basis, &interp, s, j)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation { report, impacts })
}

/// Per-parameter field sensitivity: the whisker impact of a symmetric span
/// `[-half_span, half_span]` (mm) applied to each parameter in turn.
pub fn equal_span_impacts(basis: &PcaBasis, half_span: f64) -> Result<Vec<ImpactField>> {
    let interp = Interpolator::new(basis)?;
    (0..basis.parameter_count())
        .map(|j| {
            let meta = ImpactMeta {
                kind: ImpactKind::Whisker,
                model_id: None,
                parameter: Some(j),
                span: Some((-half_span, half_span)),
                a_pred: None,
                a_true: None,
            };
            span_impact(basis, &interp, j, (-half_span, half_span), meta)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{
        generate_ensemble, latin_hypercube, synthesize_field, three_level_factorial, GeneratorSettings, ParameterVector,
        VectorField,
    };
    use crate::geometry::build_plate_mesh;
    use crate::reduction::condense_signed_magnitude;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Returns a fixed prediction per field.
    struct Table(Vec<(VectorField, ParameterVector)>);

    impl Predictor for Table {
        fn predict(&self, field: &VectorField) -> Result<ParameterVector> {
            self.0
                .iter()
                .find(|(f, _)| f == field)
                .map(|(_, p)| p.clone())
                .ok_or_else(|| PrevisError::NotFound("field".into()))
        }
    }

    struct Zero(usize);

    impl Predictor for Zero {
        fn predict(&self, _: &VectorField) -> Result<ParameterVector> {
            Ok(ParameterVector::zeros(self.0))
        }
    }

    fn tiny_samples() -> Vec<Sample> {
        let mesh = build_plate_mesh(4, 3, 10.0, 5.0).unwrap();
        let cfg = GeneratorSettings::default().build(&mesh).unwrap();
        let design = latin_hypercube(5, &ParameterSpace::default(), 1).unwrap();
        generate_ensemble(&mesh, &design, &cfg).unwrap()
    }

    #[test]
    fn perfect_and_zero_predictors() {
        let samples = tiny_samples();
        let perfect = Table(samples.iter().map(|s| (s.field.clone(), s.params.clone())).collect());
        let e = prediction_errors(&perfect, &samples).unwrap();
        assert_eq!(e.shape(), (5, 6));
        assert!(e.iter().all(|&x| x == 0.0));

        let mut s = samples[0].clone();
        s.params = ParameterVector(vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let e = prediction_errors(&Zero(6), &[s]).unwrap();
        assert_eq!(e.row(0).iter().copied().collect::<Vec<_>>(), vec![-0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(prediction_errors(&Zero(6), &[]).is_err());
        assert!(prediction_errors(&Zero(5), &samples).is_err());
    }

    #[test]
    fn relative_scaling() {
        let space = ParameterSpace::default();
        let mut e = DMatrix::zeros(1, 6);
        e[(0, 0)] = 0.5;
        assert_eq!(relative_errors(&e, &space).unwrap()[(0, 0)], 0.25);
        assert!(relative_errors(&DMatrix::zeros(3, 6), &space).unwrap().iter().all(|&x| x == 0.0));

        let bounds = vec![(-1.0, 1.0), (0.0, 4.0), (-0.5, 0.5)];
        let names = vec!["a".into(), "b".into(), "c".into()];
        let sp = ParameterSpace::new(names.clone(), bounds.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DMatrix::from_fn(40, 3, |_, _| rng.random_range(-3.0..3.0));
        let r = relative_errors(&m, &sp).unwrap();
        for i in 0..40 {
            for j in 0..3 {
                assert_eq!(r[(i, j)], m[(i, j)] / (bounds[j].1 - bounds[j].0));
            }
        }
        let degenerate = ParameterSpace {
            names,
            bounds: vec![(0.0, 1.0), (2.0, 2.0), (0.0, 1.0)],
        };
        assert!(relative_errors(&m, &degenerate).is_err());
    }

    #[test]
    fn boxplot_hand_cases() {
        let s = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.whisker_hi), (2.0, 3.0, 4.0, 4.0));
        assert_eq!(s.whisker_lo, 1.0);
        assert_eq!(s.outliers, vec![100.0]);

        let s = boxplot_stats(&[5.0]).unwrap();
        assert_eq!([s.q1, s.median, s.q3, s.whisker_lo, s.whisker_hi], [5.0; 5]);
        assert!(s.outliers.is_empty());

        let s = boxplot_stats(&[-2.5; 9]).unwrap();
        assert_eq!(s.iqr(), 0.0);
        assert_eq!((s.whisker_lo, s.whisker_hi), (-2.5, -2.5));
        assert!(s.outliers.is_empty());

        assert!(boxplot_stats(&[]).is_err());
        assert!(boxplot_stats(&[1.0, f64::NAN]).is_err());
    }

    /// Independent sort-and-index oracle.
    fn oracle(values: &[f64]) -> (f64, f64, f64, f64, f64, Vec<f64>) {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| {
            let pos = p * (v.len() as f64 - 1.0);
            let i = pos as usize;
            if i + 1 >= v.len() || pos == i as f64 {
                v[i]
            } else {
                v[i] + (pos - i as f64) * (v[i + 1] - v[i])
            }
        };
        let (q1, med, q3) = (q(0.25), q(0.5), q(0.75));
        let (lf, hf) = (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
        let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= lf && x <= hf).collect();
        let outside: Vec<f64> = v.iter().copied().filter(|&x| x < lf || x > hf).collect();
        (q1, med, q3, inside[0], inside[inside.len() - 1], outside)
    }

    #[test]
    fn boxplot_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..60);
            let heavy = rng.random_bool(0.5);
            let values: Vec<f64> = (0..n)
                .map(|_| {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    if heavy && rng.random_bool(0.1) { x * 50.0 } else { x }
                })
                .collect();
            let s = boxplot_stats(&values).unwrap();
            let o = oracle(&values);
            assert_eq!((s.q1, s.median, s.q3, s.whisker_lo, s.whisker_hi), (o.0, o.1, o.2, o.3, o.4));
            assert_eq!(s.outliers, o.5);
        }
    }

    proptest! {
        #[test]
        fn boxplot_invariants(values in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let s = boxplot_stats(&values).unwrap();
            prop_assert!(s.q1 <= s.median && s.median <= s.q3);
            prop_assert!(s.whisker_lo >= s.q1 - 1.5 * s.iqr());
            prop_assert!(s.whisker_hi <= s.q3 + 1.5 * s.iqr());
            prop_assert!(values.contains(&s.whisker_lo) && values.contains(&s.whisker_hi));
            prop_assert!(s.outliers.iter().all(|&o| o < s.whisker_lo || o > s.whisker_hi));
            let inside = values.iter().filter(|&&v| v >= s.whisker_lo && v <= s.whisker_hi).count();
            prop_assert_eq!(inside + s.outliers.len(), values.len());
        }
    }

    struct Desk {
        mesh: crate::geometry::SurfaceMesh,
        basis: PcaBasis,
        cfg: crate::ensemble::GeneratorConfig,
    }

    fn desk(gamma: f64) -> Desk {
        let mesh = build_plate_mesh(20, 12, 1200.0, 750.0).unwrap();
        let settings = GeneratorSettings { gamma, ..Default::default() };
        let cfg = settings.build(&mesh).unwrap();
        let design = three_level_factorial(&ParameterSpace::default()).unwrap();
        let samples = generate_ensemble(&mesh, &design, &cfg).unwrap();
        let basis = PcaBasis::from_ensemble(&mesh, &samples, &design, 10).unwrap();
        Desk { mesh, basis, cfg }
    }

    fn summary_with(j: usize, lo: f64, hi: f64, outliers: Vec<f64>, relative: bool) -> ErrorSummary {
        let space = ParameterSpace::default();
        let parameters = space
            .names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let (l, h) = if i == j { (lo, hi) } else { (0.0, 0.0) };
                ParameterErrorStats {
                    name: name.clone(),
                    stats: BoxplotStats {
                        median: 0.5 * (l + h),
                        q1: l,
                        q3: h,
                        whisker_lo: l,
                        whisker_hi: h,
                        outliers: if i == j { outliers.clone() } else { vec![] },
                        count: 10,
                    },
                    scale_mm: if relative { 2.0 } else { 1.0 },
                }
            })
            .collect();
        ErrorSummary {
            model_id: "m".into(),
            relative,
            parameters,
        }
    }

    #[test]
    fn whisker_impact_properties() {
        let d = desk(0.0);
        let zero = whisker_impact_field(&d.basis, &summary_with(1, 0.0, 0.0, vec![], false), 1).unwrap();
        assert!(zero.field.max_abs() < 1e-12);

        let one = whisker_impact_field(&d.basis, &summary_with(1, -0.1, 0.1, vec![], false), 1).unwrap();
        let two = whisker_impact_field(&d.basis, &summary_with(1, -0.2, 0.2, vec![], false), 1).unwrap();
        for (a, b) in one.field.values.iter().zip(&two.field.values) {
            assert!((2.0 * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
        assert_eq!(one.meta.span, Some((-0.1, 0.1)));
        assert_eq!(one.meta.kind, ImpactKind::Whisker);

        // relative summaries are converted back to millimetres
        let rel = whisker_impact_field(&d.basis, &summary_with(1, -0.05, 0.05, vec![], true), 1).unwrap();
        assert!(rel.field.max_abs_diff(&one.field) < 1e-12);

        // span 0.2 on Hinge_Y against the generator's own mode
        let mut a = ParameterVector::zeros(6);
        a.0[1] = 1.0;
        let unit = condense_signed_magnitude(&synthesize_field(&d.mesh, &a, &d.cfg).unwrap(), &d.mesh).unwrap();
        let base = condense_signed_magnitude(&VectorField::new(d.mesh.id(), d.cfg.baseline.clone()).unwrap(), &d.mesh).unwrap();
        let mode_peak = unit.values.iter().zip(&base.values).map(|(u, b)| (u - b).abs()).fold(0.0, f64::max);
        let got = whisker_impact_field(&d.basis, &summary_with(1, 0.0, 0.2, vec![], false), 1).unwrap();
        assert!((got.field.max_abs() - 0.2 * mode_peak).abs() < 1e-8);
    }

    #[test]
    fn outlier_impact_properties() {
        for gamma in [0.0, 0.2] {
            let d = desk(gamma);
            let plain = summary_with(0, -0.05, 0.05, vec![], false);
            let w = whisker_impact_field(&d.basis, &plain, 0).unwrap();
            let o = outlier_impact_field(&d.basis, &plain, 0).unwrap();
            assert_eq!(w.field, o.field);
            assert_eq!(o.meta.kind, ImpactKind::Outlier);

            let wide = summary_with(0, -0.05, 0.05, vec![-0.6, 0.5], false);
            let o = outlier_impact_field(&d.basis, &wide, 0).unwrap();
            assert_eq!(o.meta.span, Some((-0.6, 0.5)));
            assert!(o.field.max_abs() > w.field.max_abs());
            if gamma == 0.0 {
                let ratio = o.field.max_abs() / w.field.max_abs();
                assert!((ratio - 11.0).abs() < 1e-6, "{ratio}");
            }
        }
    }

    #[test]
    fn impact_rejects_mismatched_summary() {
        let d = desk(0.0);
        let mut s = summary_with(0, -0.1, 0.1, vec![], false);
        s.parameters.pop();
        assert!(whisker_impact_field(&d.basis, &s, 0).is_err());
        assert!(whisker_impact_field(&d.basis, &summary_with(0, -0.1, 0.1, vec![], false), 9).is_err());
    }

    #[test]
    fn comparison_tables() {
        let a = summary_with(2, -0.1, 0.3, vec![0.9], true);
        let single = compare_models(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.models.len(), 1);
        assert!(single.deltas.is_empty());

        let two = compare_models(&[a.clone(), a.clone()]).unwrap();
        let d = &two.deltas[0];
        assert!(d.median.iter().chain(&d.iqr).chain(&d.whisker_span).all(|&x| x == 0.0));
        assert!(d.outlier_count.iter().all(|&x| x == 0));

        let mut b = summary_with(2, -0.2, 0.3, vec![], true);
        b.model_id = "gcn".into();
        let r = compare_models(&[a.clone(), b]).unwrap();
        assert!((r.deltas[0].whisker_span[2] - 0.1).abs() < 1e-15);
        assert_eq!(r.deltas[0].outlier_count[2], -1);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<ComparisonReport>(&json).unwrap(), r);

        let mut renamed = a.clone();
        renamed.parameters[0].name = "other".into();
        assert!(compare_models(&[a.clone(), renamed]).is_err());
        assert!(compare_models(&[]).is_err());
    }

    #[test]
    fn evaluation_pipeline_shapes() {
        let d = desk(0.0);
        let cfg = d.cfg.clone();
        let test = generate_ensemble(&d.mesh, &latin_hypercube(30, &ParameterSpace::default(), 3).unwrap(), &cfg).unwrap();
        let zero = Zero(6);
        let perfect = Table(test.iter().map(|s| (s.field.clone(), s.params.clone())).collect());
        let models: Vec<(String, &dyn Predictor)> = vec![("zero".into(), &zero), ("perfect".into(), &perfect)];
        let ev = evaluate_models(&models, &d.basis, &test).unwrap();
        assert_eq!(ev.report.models.len(), 2);
        assert_eq!(ev.impacts.len(), 12);
        assert!(ev.report.models[0].relative);
        // a perfect model leaves no footprint
        for imp in ev.impacts.iter().filter(|i| i.model_id == "perfect") {
            assert!(imp.whisker.field.max_abs() < 1e-12);
        }
        assert!(evaluate_models(&[], &d.basis, &test).is_err());
    }
}
