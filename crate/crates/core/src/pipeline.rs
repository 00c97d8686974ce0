//! Store-backed pipeline steps shared by the HTTP service and the CLI. Each
//! step reads its inputs from an [`ArtifactStore`] and persists its output.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate_models, ComparisonReport};
use crate::ensemble::{
    generate_ensemble, latin_hypercube, three_level_factorial, EnsembleDesign, GeneratorSettings, ParameterSpace,
    ParameterVector,
};
use crate::error::{PrevisError, Result};
use crate::geometry::{build_plate_mesh, normalized_laplacian, spectral_basis, SurfaceMesh};
use crate::interpolation::Interpolator;
use crate::reduction::{explained_variance, PcaBasis, ScalarField, DEFAULT_BASIS_SIZE};
use crate::regressors::{
    gcn, init_gcn, init_olff, olff, train_with_progress, EpochProgress, OptimizerConfig, OptimizerKind, Predictor,
    Regressor, RegressorKind,
};
use crate::store::{
    ArtifactKind, ArtifactStore, BasisRecord, EnsembleRecord, ImpactRefs, ModelRecord, ReportRecord,
};

fn default_nx() -> usize {
    40
}
fn default_ny() -> usize {
    25
}
fn default_width() -> f64 {
    1200.0
}
fn default_height() -> f64 {
    700.0
}

/// Regular plate grid; the defaults give the 1000-vertex desk mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRequest {
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_ny")]
    pub ny: usize,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

impl Default for MeshRequest {
    fn default() -> Self {
        Self {
            nx: default_nx(),
            ny: default_ny(),
            width: default_width(),
            height: default_height(),
        }
    }
}

impl FromStr for MeshRequest {
    type Err = PrevisError;

    /// `plate:NXxNY`, optionally followed by `:WIDTHxHEIGHT` in mm.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || PrevisError::invalid(format!("mesh spec {s:?} is not plate:NXxNY[:WxH]"));
        let mut parts = s.split(':');
        if parts.next() != Some("plate") {
            return Err(bad());
        }
        let (nx, ny) = parts.next().and_then(|g| g.split_once('x')).ok_or_else(bad)?;
        let mut req = Self {
            nx: nx.parse().map_err(|_| bad())?,
            ny: ny.parse().map_err(|_| bad())?,
            ..Self::default()
        };
        if let Some(size) = parts.next() {
            let (w, h) = size.split_once('x').ok_or_else(bad)?;
            req.width = w.parse().map_err(|_| bad())?;
            req.height = h.parse().map_err(|_| bad())?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshInfo {
    pub id: String,
    pub mesh_id: String,
    pub vertex_count: usize,
    pub triangle_count: usize,
}

/// Artifact id of a stored mesh with this content hash, if any.
pub fn find_mesh(store: &ArtifactStore, mesh_id: &str) -> Result<Option<String>> {
    for entry in store.list_kind(ArtifactKind::Mesh)? {
        if store.manifest(&entry.id)?.meta["mesh_id"] == mesh_id {
            return Ok(Some(entry.id));
        }
    }
    Ok(None)
}

/// Builds a plate mesh, reusing an existing artifact with identical content.
pub fn create_plate_mesh(store: &ArtifactStore, req: &MeshRequest) -> Result<MeshInfo> {
    let mesh = build_plate_mesh(req.nx, req.ny, req.width, req.height)?;
    let id = match find_mesh(store, mesh.id())? {
        Some(id) => id,
        None => store.save(&mesh)?,
    };
    Ok(MeshInfo {
        id,
        mesh_id: mesh.id().to_string(),
        vertex_count: mesh.vertex_count(),
        triangle_count: mesh.triangles().len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignSpec {
    Factorial3,
    Lhs { samples: usize },
}

impl FromStr for DesignSpec {
    type Err = PrevisError;

    /// `factorial3` or `lhs:N`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "factorial3" => Ok(Self::Factorial3),
            Some(("lhs", n)) => n
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .map(|samples| Self::Lhs { samples })
                .ok_or_else(|| PrevisError::invalid(format!("bad LHS sample count in {s:?}"))),
            _ => Err(PrevisError::invalid(format!("design {s:?} is not factorial3 or lhs:N"))),
        }
    }
}

impl std::fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Factorial3 => f.write_str("factorial3"),
            Self::Lhs { samples } => write!(f, "lhs:{samples}"),
        }
    }
}

impl DesignSpec {
    pub fn build(&self, space: &ParameterSpace, seed: u64) -> Result<EnsembleDesign> {
        match *self {
            Self::Factorial3 => three_level_factorial(space),
            Self::Lhs { samples } => latin_hypercube(samples, space, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRequest {
    /// Mesh artifact id.
    pub mesh_id: String,
    pub design: DesignSpec,
    /// Seeds the LHS design.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub generator: GeneratorSettings,
    #[serde(default)]
    pub space: Option<ParameterSpace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleInfo {
    pub id: String,
    pub mesh_ref: String,
    pub samples: usize,
    pub parameters: Vec<String>,
}

pub fn create_ensemble(store: &ArtifactStore, req: &EnsembleRequest) -> Result<EnsembleInfo> {
    let mesh: SurfaceMesh = store.load(&req.mesh_id)?;
    let space = req.space.clone().unwrap_or_default();
    let design = req.design.build(&space, req.seed)?;
    let cfg = req.generator.build(&mesh)?;
    PrevisError::check_len("generator parameters", space.dim(), cfg.parameter_count())?;
    let samples = generate_ensemble(&mesh, &design, &cfg)?;
    let record = EnsembleRecord {
        mesh_ref: req.mesh_id.clone(),
        mesh_id: mesh.id().to_string(),
        design,
        generator: Some(req.generator.clone()),
        samples,
    };
    let id = store.save(&record)?;
    Ok(EnsembleInfo {
        id,
        mesh_ref: record.mesh_ref,
        samples: record.samples.len(),
        parameters: space.names,
    })
}

fn default_k() -> usize {
    DEFAULT_BASIS_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisRequest {
    pub ensemble_id: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisInfo {
    pub id: String,
    /// Retained components; below the request when the ensemble has lower rank.
    pub k: usize,
    pub explained_variance_ratio: Vec<f64>,
    pub cumulative_variance: Vec<f64>,
}

pub fn create_basis(store: &ArtifactStore, req: &BasisRequest) -> Result<BasisInfo> {
    let ensemble: EnsembleRecord = store.load(&req.ensemble_id)?;
    let mesh: SurfaceMesh = store.load(&ensemble.mesh_ref)?;
    let k = req.k.min(ensemble.samples.len()).min(mesh.vertex_count());
    let basis = PcaBasis::from_ensemble(&mesh, &ensemble.samples, &ensemble.design, k)?;
    let info = BasisInfo {
        id: String::new(),
        k: basis.k(),
        explained_variance_ratio: basis.explained_variance_ratio.clone(),
        cumulative_variance: explained_variance(&basis),
    };
    let id = store.save(&BasisRecord {
        mesh_ref: ensemble.mesh_ref,
        ensemble_ref: req.ensemble_id.clone(),
        basis,
    })?;
    Ok(BasisInfo { id, ..info })
}

/// Optional overrides of the per-kind optimizer defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerOverrides {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub shuffle_seed: Option<u64>,
    pub momentum: Option<f64>,
    pub eps: Option<f64>,
}

impl OptimizerOverrides {
    pub fn resolve(&self, kind: RegressorKind) -> Result<OptimizerConfig> {
        let mut opt = match kind {
            RegressorKind::Olff => OptimizerConfig::olff_default(),
            RegressorKind::Gcn => OptimizerConfig::gcn_default(),
        };
        if let Some(e) = self.epochs {
            opt.epochs = e;
        }
        if let Some(lr) = self.lr {
            opt = opt.with_lr(lr);
        }
        if let Some(b) = self.batch_size {
            opt.batch_size = b;
        }
        if let Some(s) = self.shuffle_seed {
            opt.shuffle_seed = s;
        }
        match (&mut opt.kind, self.momentum, self.eps) {
            (OptimizerKind::SgdNesterov { momentum, .. }, Some(m), _) => *momentum = m,
            (OptimizerKind::Adagrad { eps, .. }, _, Some(e)) => *eps = e,
            (OptimizerKind::SgdNesterov { .. }, _, Some(_)) => {
                return Err(PrevisError::invalid("eps applies to AdaGrad (gcn) only"))
            }
            (OptimizerKind::Adagrad { .. }, Some(_), _) => {
                return Err(PrevisError::invalid("momentum applies to SGD (olff) only"))
            }
            _ => {}
        }
        opt.validate()?;
        Ok(opt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub ensemble_id: String,
    pub kind: RegressorKind,
    /// Weight initialization seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerOverrides,
    pub hidden: Option<usize>,
    pub mu: Option<usize>,
    pub filters: Option<usize>,
    pub cheb_order: Option<usize>,
    pub fc: Option<usize>,
}

impl TrainRequest {
    pub fn new(ensemble_id: impl Into<String>, kind: RegressorKind) -> Self {
        Self {
            ensemble_id: ensemble_id.into(),
            kind,
            seed: 0,
            optimizer: OptimizerOverrides::default(),
            hidden: None,
            mu: None,
            filters: None,
            cheb_order: None,
            fc: None,
        }
    }

    /// Resolved optimizer settings; fails fast on invalid values.
    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        self.optimizer.resolve(self.kind)
    }
}

/// Initializes and trains a model, persisting it under `model_id` (an id
/// obtained from [`ArtifactStore::reserve`]).
pub fn train_model_into(
    store: &ArtifactStore,
    model_id: &str,
    req: &TrainRequest,
    progress: impl FnMut(&EpochProgress),
) -> Result<ModelRecord> {
    let opt = req.optimizer_config()?;
    let ensemble: EnsembleRecord = store.load(&req.ensemble_id)?;
    let mesh: SurfaceMesh = store.load(&ensemble.mesh_ref)?;
    let outputs = ensemble.design.space.dim();
    let model = match req.kind {
        RegressorKind::Olff => init_olff(
            mesh.vertex_count() * 3,
            req.hidden.unwrap_or(olff::DEFAULT_HIDDEN),
            outputs,
            req.seed,
        )?,
        RegressorKind::Gcn => {
            let mu = req.mu.unwrap_or(gcn::DEFAULT_MU.min(mesh.vertex_count()));
            let op = Arc::new(spectral_basis(&normalized_laplacian(&mesh)?, mu)?);
            init_gcn(
                op,
                req.filters.unwrap_or(gcn::DEFAULT_FILTERS),
                req.cheb_order.unwrap_or(gcn::DEFAULT_CHEB_ORDER),
                req.fc.unwrap_or(gcn::DEFAULT_FC),
                outputs,
                req.seed,
            )?
        }
    };
    let model = train_with_progress(model, &ensemble.samples, &opt, progress)?;
    let record = ModelRecord {
        mesh_ref: Some(ensemble.mesh_ref),
        ensemble_ref: Some(req.ensemble_id.clone()),
        model,
    };
    store.save_reserved(model_id, &record)?;
    Ok(record)
}

pub fn train_model(store: &ArtifactStore, req: &TrainRequest, progress: impl FnMut(&EpochProgress)) -> Result<String> {
    req.optimizer_config()?;
    let id = store.reserve(ArtifactKind::Model)?;
    train_model_into(store, &id, req, progress)?;
    Ok(id)
}

/// Most recently stored basis over the given mesh content.
pub fn latest_basis_for_mesh(store: &ArtifactStore, mesh_id: &str) -> Result<Option<String>> {
    for entry in store.list_kind(ArtifactKind::Basis)?.into_iter().rev() {
        if store.manifest(&entry.id)?.meta["mesh_id"] == mesh_id {
            return Ok(Some(entry.id));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    pub model_ids: Vec<String>,
    pub test_ensemble_id: String,
    /// Defaults to the latest basis on the test ensemble's mesh.
    #[serde(default)]
    pub basis_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutcome {
    pub report_id: String,
    pub basis_id: String,
    pub comparison: ComparisonReport,
    pub impacts: Vec<ImpactRefs>,
}

/// Relative-error boxplots per model and parameter plus their whisker and
/// full-range impact fields, all persisted.
pub fn compare(store: &ArtifactStore, req: &CompareRequest) -> Result<CompareOutcome> {
    if req.model_ids.is_empty() {
        return Err(PrevisError::invalid("model_ids must not be empty"));
    }
    let test: EnsembleRecord = store.load(&req.test_ensemble_id)?;
    let basis_id = match &req.basis_id {
        Some(id) => id.clone(),
        None => latest_basis_for_mesh(store, &test.mesh_id)?
            .ok_or_else(|| PrevisError::NotFound(format!("basis for mesh {}", test.mesh_id)))?,
    };
    let basis: BasisRecord = store.load(&basis_id)?;
    if basis.basis.mesh_id != test.mesh_id {
        return Err(PrevisError::MeshMismatch {
            expected: basis.basis.mesh_id.clone(),
            found: test.mesh_id.clone(),
        });
    }
    let models = req
        .model_ids
        .iter()
        .map(|id| {
            let rec: ModelRecord = store.load(id)?;
            if let Some(m) = &rec.model.mesh_id {
                if *m != test.mesh_id {
                    return Err(PrevisError::MeshMismatch {
                        expected: test.mesh_id.clone(),
                        found: m.clone(),
                    });
                }
            }
            Ok((id.clone(), rec.model))
        })
        .collect::<Result<Vec<(String, Regressor)>>>()?;
    let handles: Vec<(String, &dyn Predictor)> = models.iter().map(|(id, m)| (id.clone(), m as &dyn Predictor)).collect();
    let evaluation = evaluate_models(&handles, &basis.basis, &test.samples)?;

    let mut impacts = Vec::with_capacity(evaluation.impacts.len());
    for imp in &evaluation.impacts {
        impacts.push(ImpactRefs {
            model_id: imp.model_id.clone(),
            parameter: imp.parameter,
            parameter_name: basis.basis.space.names[imp.parameter].clone(),
            whisker_field: store.save(&imp.whisker)?,
            outlier_field: store.save(&imp.outlier)?,
        });
    }
    let record = ReportRecord {
        basis_ref: basis_id.clone(),
        test_ensemble_ref: req.test_ensemble_id.clone(),
        comparison: evaluation.report,
        impacts,
    };
    let report_id = store.save(&record)?;
    Ok(CompareOutcome {
        report_id,
        basis_id,
        comparison: record.comparison,
        impacts: record.impacts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolateOutcome {
    pub field: ScalarField,
    pub out_of_bounds: Vec<String>,
}

/// Interpolated condensed field; parameters outside the bounds are still
/// evaluated and reported by name.
pub fn interpolate_with(basis: &PcaBasis, params: &ParameterVector) -> Result<InterpolateOutcome> {
    let field = Interpolator::new(basis)?.interpolate(params)?;
    let out_of_bounds = basis
        .space
        .names
        .iter()
        .zip(&basis.space.bounds)
        .zip(&params.0)
        .filter(|((_, (lo, hi)), x)| *x < lo || *x > hi)
        .map(|((name, _), _)| name.clone())
        .collect();
    Ok(InterpolateOutcome { field, out_of_bounds })
}
