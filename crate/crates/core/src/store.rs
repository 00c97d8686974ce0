//! On-disk artifact store.
//!
//! Layout: `root/{kind}/{id}/manifest.json` next to one `{name}.bin` file per
//! blob (flat little-endian `f64`, row-major). The manifest records each
//! blob's length, shape and SHA-256; `root/index.json` lists every artifact.
//! A manifest is written last, so a directory without one is an aborted save.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::ComparisonReport;
use crate::ensemble::{EnsembleDesign, GeneratorSettings, Sample, VectorField};
use crate::error::{PrevisError, Result};
use crate::geometry::{PlateLayout, SpectralOperator, SurfaceMesh};
use crate::interpolation::{ImpactField, ImpactMeta};
use crate::reduction::{PcaBasis, ScalarField};
use crate::regressors::{Architecture, OptimizerConfig, OptimizerKind, OptimizerState, Regressor, Segment, Standardizer, WeightStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Mesh,
    Ensemble,
    Basis,
    Model,
    Report,
    Field,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 6] = [Self::Mesh, Self::Ensemble, Self::Basis, Self::Model, Self::Report, Self::Field];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mesh => "mesh",
            Self::Ensemble => "ensemble",
            Self::Basis => "basis",
            Self::Model => "model",
            Self::Report => "report",
            Self::Field => "field",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = PrevisError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PrevisError::invalid(format!("unknown artifact kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub file: String,
    pub len: usize,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub kind: ArtifactKind,
    pub created_at: String,
    pub meta: Value,
    pub blobs: Vec<BlobEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub kind: ArtifactKind,
    pub created_at: String,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Blob {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.to_string(),
            shape,
            data,
        }
    }

    pub fn flat(name: &str, data: Vec<f64>) -> Self {
        Self::new(name, vec![data.len()], data)
    }
}

/// JSON metadata plus named numeric blobs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArtifactParts {
    pub meta: Value,
    pub blobs: Vec<Blob>,
}

impl ArtifactParts {
    pub fn meta_as<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.meta.clone())?)
    }

    pub fn take(&mut self, name: &str) -> Result<Blob> {
        let i = self
            .blobs
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| PrevisError::Corrupt(format!("missing blob {name}")))?;
        Ok(self.blobs.swap_remove(i))
    }

    pub fn take_opt(&mut self, name: &str) -> Option<Blob> {
        self.take(name).ok()
    }

    fn take_len(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        let b = self.take(name)?;
        if b.data.len() != len {
            return Err(PrevisError::Corrupt(format!(
                "blob {name} holds {} values, expected {len}",
                b.data.len()
            )));
        }
        Ok(b.data)
    }
}

pub trait Artifact: Sized {
    const KIND: ArtifactKind;
    fn to_parts(&self) -> Result<ArtifactParts>;
    fn from_parts(parts: ArtifactParts) -> Result<Self>;
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode_f64(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode_f64(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(PrevisError::Corrupt(format!("blob length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Filesystem-backed store of immutable artifacts. Writes are serialized
/// through an internal lock; reads take no lock.
#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        for kind in ArtifactKind::ALL {
            fs::create_dir_all(root.join(kind.as_str()))?;
        }
        let store = Self {
            root,
            write_lock: Mutex::new(()),
        };
        if !store.index_path().exists() {
            write_atomic(&store.index_path(), b"[]")?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    /// Artifact ids are `{kind}-{serial}`; the kind is recoverable from the id.
    pub fn kind_of(id: &str) -> Result<ArtifactKind> {
        let (kind, serial) = id
            .rsplit_once('-')
            .ok_or_else(|| PrevisError::NotFound(id.to_string()))?;
        if serial.is_empty() || !serial.bytes().all(|b| b.is_ascii_digit()) {
            return Err(PrevisError::NotFound(id.to_string()));
        }
        kind.parse().map_err(|_| PrevisError::NotFound(id.to_string()))
    }

    fn dir_of(&self, id: &str) -> Result<PathBuf> {
        Ok(self.root.join(Self::kind_of(id)?.as_str()).join(id))
    }

    /// Claims the next free serial for `kind` by creating its directory.
    fn allocate(&self, kind: ArtifactKind) -> Result<(String, PathBuf)> {
        let kind_dir = self.root.join(kind.as_str());
        let prefix = format!("{}-", kind.as_str());
        let mut next = 1 + fs::read_dir(&kind_dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_prefix(&prefix)?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        loop {
            let id = format!("{prefix}{next:06}");
            let dir = kind_dir.join(&id);
            match fs::create_dir(&dir) {
                Ok(()) => return Ok((id, dir)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => next += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn save<A: Artifact>(&self, artifact: &A) -> Result<String> {
        let parts = artifact.to_parts()?;
        self.save_parts(A::KIND, parts)
    }

    pub fn save_parts(&self, kind: ArtifactKind, parts: ArtifactParts) -> Result<String> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let (id, dir) = self.allocate(kind)?;
        self.write_parts(&id, &dir, kind, parts)?;
        Ok(id)
    }

    /// Claims an id whose content is written later with [`Self::save_reserved`].
    /// Until then the id is known but loads report it as not found.
    pub fn reserve(&self, kind: ArtifactKind) -> Result<String> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        Ok(self.allocate(kind)?.0)
    }

    pub fn save_reserved<A: Artifact>(&self, id: &str, artifact: &A) -> Result<()> {
        if Self::kind_of(id)? != A::KIND {
            return Err(PrevisError::invalid(format!("{id} is not reserved for a {}", A::KIND)));
        }
        let parts = artifact.to_parts()?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let dir = self.dir_of(id)?;
        if !dir.is_dir() {
            return Err(PrevisError::NotFound(format!("reservation {id}")));
        }
        if dir.join("manifest.json").exists() {
            return Err(PrevisError::invalid(format!("{id} is already written")));
        }
        self.write_parts(id, &dir, A::KIND, parts)
    }

    fn write_parts(&self, id: &str, dir: &Path, kind: ArtifactKind, parts: ArtifactParts) -> Result<()> {
        let mut blobs = Vec::with_capacity(parts.blobs.len());
        for b in &parts.blobs {
            if b.shape.iter().product::<usize>() != b.data.len() {
                return Err(PrevisError::invalid(format!("blob {} shape does not match its length", b.name)));
            }
            let bytes = encode_f64(&b.data);
            let file = format!("{}.bin", b.name);
            write_atomic(&dir.join(&file), &bytes)?;
            blobs.push(BlobEntry {
                name: b.name.clone(),
                file,
                len: b.data.len(),
                shape: b.shape.clone(),
                sha256: sha256_hex(&bytes),
            });
        }
        let manifest = Manifest {
            id: id.to_string(),
            kind,
            created_at: chrono::Utc::now().to_rfc3339(),
            meta: parts.meta,
            blobs,
        };
        let manifest_path = dir.join("manifest.json");
        write_atomic(&manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;

        let mut index = self.list()?;
        index.push(IndexEntry {
            id: id.to_string(),
            kind,
            created_at: manifest.created_at,
            manifest: manifest_path.strip_prefix(&self.root).unwrap_or(&manifest_path).to_path_buf(),
        });
        write_atomic(&self.index_path(), &serde_json::to_vec_pretty(&index)?)?;
        Ok(())
    }

    pub fn list(&self) -> Result<Vec<IndexEntry>> {
        Ok(serde_json::from_slice(&fs::read(self.index_path())?)?)
    }

    pub fn list_kind(&self, kind: ArtifactKind) -> Result<Vec<IndexEntry>> {
        Ok(self.list()?.into_iter().filter(|e| e.kind == kind).collect())
    }

    pub fn exists(&self, id: &str) -> bool {
        self.dir_of(id).map(|d| d.join("manifest.json").is_file()).unwrap_or(false)
    }

    pub fn manifest(&self, id: &str) -> Result<Manifest> {
        let path = self.dir_of(id)?.join("manifest.json");
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PrevisError::NotFound(id.to_string()),
            _ => e.into(),
        })?;
        let manifest: Manifest = serde_json::from_slice(&bytes)?;
        if manifest.id != id {
            return Err(PrevisError::Corrupt(format!("manifest of {id} names {}", manifest.id)));
        }
        Ok(manifest)
    }

    /// Raw bytes of one blob after hash verification.
    pub fn blob_bytes(&self, id: &str, name: &str) -> Result<Vec<u8>> {
        let manifest = self.manifest(id)?;
        let entry = manifest
            .blobs
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| PrevisError::NotFound(format!("{id}/{name}")))?;
        self.read_verified(id, entry)
    }

    fn read_verified(&self, id: &str, entry: &BlobEntry) -> Result<Vec<u8>> {
        let path = self.dir_of(id)?.join(&entry.file);
        let bytes = fs::read(&path)?;
        let found = sha256_hex(&bytes);
        if found != entry.sha256 {
            return Err(PrevisError::Integrity {
                path,
                expected: entry.sha256.clone(),
                found,
            });
        }
        if bytes.len() != entry.len * 8 {
            return Err(PrevisError::Corrupt(format!("blob {} has {} bytes", entry.name, bytes.len())));
        }
        Ok(bytes)
    }

    pub fn load_parts(&self, id: &str) -> Result<(Manifest, ArtifactParts)> {
        let manifest = self.manifest(id)?;
        let blobs = manifest
            .blobs
            .iter()
            .map(|e| {
                Ok(Blob {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: decode_f64(&self.read_verified(id, e)?)?,
                })
            })
            .collect::<Result<_>>()?;
        let parts = ArtifactParts {
            meta: manifest.meta.clone(),
            blobs,
        };
        Ok((manifest, parts))
    }

    pub fn load<A: Artifact>(&self, id: &str) -> Result<A> {
        if Self::kind_of(id)? != A::KIND {
            return Err(PrevisError::NotFound(format!("{id} is not a {}", A::KIND)));
        }
        let (_, parts) = self.load_parts(id)?;
        A::from_parts(parts)
    }
}

fn flatten3(values: &[[f64; 3]]) -> Vec<f64> {
    values.iter().flatten().copied().collect()
}

fn unflatten3(data: &[f64]) -> Vec<[f64; 3]> {
    data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

impl Artifact for SurfaceMesh {
    const KIND: ArtifactKind = ArtifactKind::Mesh;

    fn to_parts(&self) -> Result<ArtifactParts> {
        let plate = self.plate_layout();
        let triangles: Vec<f64> = self.triangles().iter().flatten().map(|&i| i as f64).collect();
        Ok(ArtifactParts {
            meta: json!({
                "mesh_id": self.id(),
                "nx": plate.map(|p| p.nx),
                "ny": plate.map(|p| p.ny),
                "width": plate.map(|p| p.width),
                "height": plate.map(|p| p.height),
                "vertex_count": self.vertex_count(),
                "triangle_count": self.triangles().len(),
            }),
            blobs: vec![
                Blob::new("vertices", vec![self.vertex_count(), 3], flatten3(self.vertices())),
                Blob::new("normals", vec![self.vertex_count(), 3], flatten3(self.normals())),
                Blob::new("triangles", vec![self.triangles().len(), 3], triangles),
            ],
        })
    }

    fn from_parts(mut parts: ArtifactParts) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            mesh_id: String,
            nx: Option<usize>,
            ny: Option<usize>,
            width: Option<f64>,
            height: Option<f64>,
            vertex_count: usize,
            triangle_count: usize,
        }
        let m: Meta = parts.meta_as()?;
        let vertices = unflatten3(&parts.take_len("vertices", 3 * m.vertex_count)?);
        let normals = unflatten3(&parts.take_len("normals", 3 * m.vertex_count)?);
        let triangles = parts
            .take_len("triangles", 3 * m.triangle_count)?
            .chunks_exact(3)
            .map(|c| {
                let idx = |x: f64| {
                    if x >= 0.0 && x.fract() == 0.0 && x < usize::MAX as f64 {
                        Ok(x as usize)
                    } else {
                        Err(PrevisError::Corrupt(format!("bad triangle index {x}")))
                    }
                };
                Ok([idx(c[0])?, idx(c[1])?, idx(c[2])?])
            })
            .collect::<Result<Vec<_>>>()?;
        let plate = match (m.nx, m.ny, m.width, m.height) {
            (Some(nx), Some(ny), Some(width), Some(height)) => Some(PlateLayout { nx, ny, width, height }),
            _ => None,
        };
        let mesh = SurfaceMesh::with_normals(vertices, triangles, normals, plate)?;
        if mesh.id() != m.mesh_id {
            return Err(PrevisError::Corrupt(format!(
                "mesh content hash {} does not match manifest {}",
                mesh.id(),
                m.mesh_id
            )));
        }
        Ok(mesh)
    }
}

/// Stored ensemble: the design, how it was generated and the resulting fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRecord {
    pub mesh_ref: String,
    pub mesh_id: String,
    pub design: EnsembleDesign,
    pub generator: Option<GeneratorSettings>,
    pub samples: Vec<Sample>,
}

impl Artifact for EnsembleRecord {
    const KIND: ArtifactKind = ArtifactKind::Ensemble;

    fn to_parts(&self) -> Result<ArtifactParts> {
        PrevisError::check_len("ensemble samples", self.design.len(), self.samples.len())?;
        let vertex_count = self.samples.first().map_or(0, |s| s.field.len());
        let mut fields = Vec::with_capacity(self.samples.len() * vertex_count * 3);
        for s in &self.samples {
            PrevisError::check_len("ensemble field", vertex_count, s.field.len())?;
            fields.extend(s.field.flatten());
        }
        Ok(ArtifactParts {
            meta: json!({
                "mesh_ref": self.mesh_ref,
                "mesh_id": self.mesh_id,
                "design": self.design,
                "generator": self.generator,
                "vertex_count": vertex_count,
            }),
            blobs: vec![Blob::new("fields", vec![self.samples.len(), vertex_count, 3], fields)],
        })
    }

    fn from_parts(mut parts: ArtifactParts) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            mesh_ref: String,
            mesh_id: String,
            design: EnsembleDesign,
            generator: Option<GeneratorSettings>,
            vertex_count: usize,
        }
        let m: Meta = parts.meta_as()?;
        let width = 3 * m.vertex_count;
        let fields = parts.take_len("fields", m.design.len() * width)?;
        let samples = m
            .design
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                Ok(Sample {
                    params: row.clone(),
                    field: VectorField::new(m.mesh_id.clone(), unflatten3(&fields[i * width..(i + 1) * width]))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            mesh_ref: m.mesh_ref,
            mesh_id: m.mesh_id,
            design: m.design,
            generator: m.generator,
            samples,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisRecord {
    pub mesh_ref: String,
    pub ensemble_ref: String,
    pub basis: PcaBasis,
}

impl Artifact for BasisRecord {
    const KIND: ArtifactKind = ArtifactKind::Basis;

    fn to_parts(&self) -> Result<ArtifactParts> {
        let b = &self.basis;
        let v = b.vertex_count();
        let fields: Vec<f64> = b.basis_fields.iter().flat_map(|f| f.values.iter().copied()).collect();
        Ok(ArtifactParts {
            meta: json!({
                "mesh_ref": self.mesh_ref,
                "ensemble_ref": self.ensemble_ref,
                "mesh_id": b.mesh_id,
                "space": b.space,
                "k": b.k(),
                "vertex_count": v,
                "mean_params": b.mean_params,
                "basis_params": b.basis_params,
                "explained_variance_ratio": b.explained_variance_ratio,
            }),
            blobs: vec![
                Blob::flat("mean_field", b.mean_field.values.clone()),
                Blob::new("basis_fields", vec![b.k(), v], fields),
            ],
        })
    }

    fn from_parts(mut parts: ArtifactParts) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            mesh_ref: String,
            ensemble_ref: String,
            mesh_id: String,
            space: crate::ensemble::ParameterSpace,
            k: usize,
            vertex_count: usize,
            mean_params: crate::ensemble::ParameterVector,
            basis_params: Vec<crate::ensemble::ParameterVector>,
            explained_variance_ratio: Vec<f64>,
        }
        let m: Meta = parts.meta_as()?;
        let v = m.vertex_count;
        let mean_field = ScalarField::new(m.mesh_id.clone(), parts.take_len("mean_field", v)?)?;
        let flat = parts.take_len("basis_fields", m.k * v)?;
        let basis_fields = flat
            .chunks_exact(v.max(1))
            .take(m.k)
            .map(|c| ScalarField::new(m.mesh_id.clone(), c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        PrevisError::check_len("basis parameter sets", m.k, m.basis_params.len())?;
        Ok(Self {
            mesh_ref: m.mesh_ref,
            ensemble_ref: m.ensemble_ref,
            basis: PcaBasis {
                mesh_id: m.mesh_id,
                space: m.space,
                mean_field,
                basis_fields,
                basis_params: m.basis_params,
                mean_params: m.mean_params,
                explained_variance_ratio: m.explained_variance_ratio,
            },
        })
    }
}

/// Model checkpoint with the ensemble it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub mesh_ref: Option<String>,
    pub ensemble_ref: Option<String>,
    pub model: Regressor,
}

impl Artifact for ModelRecord {
    const KIND: ArtifactKind = ArtifactKind::Model;

    fn to_parts(&self) -> Result<ArtifactParts> {
        let m = &self.model;
        let mut blobs = vec![Blob::flat("weights", m.weights.data.clone())];
        for (prefix, std) in [("standardizer", &m.standardizer), ("spectral_standardizer", &m.spectral_standardizer)] {
            if let Some(s) = std {
                blobs.push(Blob::flat(&format!("{prefix}_mean"), s.mean.clone()));
                blobs.push(Blob::flat(&format!("{prefix}_scale"), s.scale.clone()));
            }
        }
        if let Some(op) = &m.spectral {
            let (v, mu) = op.eigenvectors.shape();
            let row_major: Vec<f64> = (0..v).flat_map(|r| (0..mu).map(move |c| op.eigenvectors[(r, c)])).collect();
            blobs.push(Blob::flat("eigenvalues", op.eigenvalues.clone()));
            blobs.push(Blob::new("eigenvectors", vec![v, mu], row_major));
        }
        if let Some(state) = &m.optimizer_state {
            blobs.push(Blob::flat("optimizer_state", state.values().to_vec()));
        }
        Ok(ArtifactParts {
            meta: json!({
                "kind": m.kind(),
                "architecture": m.arch,
                "seed": m.seed,
                "mesh_id": m.mesh_id,
                "mesh_ref": self.mesh_ref,
                "ensemble_ref": self.ensemble_ref,
                "segments": m.weights.segments,
                "optimizer": m.optimizer,
                "training_log": m.training_log,
            }),
            blobs,
        })
    }

    fn from_parts(mut parts: ArtifactParts) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            architecture: Architecture,
            seed: u64,
            mesh_id: Option<String>,
            mesh_ref: Option<String>,
            ensemble_ref: Option<String>,
            segments: Vec<Segment>,
            optimizer: Option<OptimizerConfig>,
            training_log: Vec<f64>,
        }
        let m: Meta = parts.meta_as()?;
        let n = m.architecture.weight_count();
        let weights = WeightStore {
            data: parts.take_len("weights", n)?,
            segments: m.segments,
        };
        let spectral = match (parts.take_opt("eigenvalues"), parts.take_opt("eigenvectors")) {
            (Some(vals), Some(vecs)) => {
                let mu = vals.data.len();
                if mu == 0 || vecs.data.len() % mu != 0 {
                    return Err(PrevisError::Corrupt("eigenvector blob does not match eigenvalues".into()));
                }
                let v = vecs.data.len() / mu;
                let u = DMatrix::from_row_slice(v, mu, &vecs.data);
                Some(Arc::new(SpectralOperator::from_parts(vals.data, u)?))
            }
            (None, None) => None,
            _ => return Err(PrevisError::Corrupt("incomplete spectral basis".into())),
        };
        let mut model = Regressor::from_parts(m.architecture, weights, m.seed, spectral)?;
        model.standardizer = take_standardizer(&mut parts, "standardizer")?;
        model.spectral_standardizer = take_standardizer(&mut parts, "spectral_standardizer")?;
        model.mesh_id = m.mesh_id;
        model.training_log = m.training_log;
        model.optimizer = m.optimizer;
        model.optimizer_state = match (m.optimizer, parts.take_opt("optimizer_state")) {
            (Some(opt), Some(b)) => {
                PrevisError::check_len("optimizer state", n, b.data.len())?;
                Some(match opt.kind {
                    OptimizerKind::SgdNesterov { .. } => OptimizerState::Nesterov { velocity: b.data },
                    OptimizerKind::Adagrad { .. } => OptimizerState::Adagrad { accumulator: b.data },
                })
            }
            _ => None,
        };
        Ok(Self {
            mesh_ref: m.mesh_ref,
            ensemble_ref: m.ensemble_ref,
            model,
        })
    }
}

fn take_standardizer(parts: &mut ArtifactParts, prefix: &str) -> Result<Option<Standardizer>> {
    match (parts.take_opt(&format!("{prefix}_mean")), parts.take_opt(&format!("{prefix}_scale"))) {
        (Some(mean), Some(scale)) if mean.data.len() == scale.data.len() => Ok(Some(Standardizer {
            mean: mean.data,
            scale: scale.data,
        })),
        (None, None) => Ok(None),
        _ => Err(PrevisError::Corrupt(format!("incomplete {prefix}"))),
    }
}

/// Impact-field artifact ids for one model and parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactRefs {
    pub model_id: String,
    pub parameter: usize,
    pub parameter_name: String,
    pub whisker_field: String,
    pub outlier_field: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub basis_ref: String,
    pub test_ensemble_ref: String,
    pub comparison: ComparisonReport,
    pub impacts: Vec<ImpactRefs>,
}

impl Artifact for ReportRecord {
    const KIND: ArtifactKind = ArtifactKind::Report;

    fn to_parts(&self) -> Result<ArtifactParts> {
        Ok(ArtifactParts {
            meta: serde_json::to_value(self)?,
            blobs: Vec::new(),
        })
    }

    fn from_parts(parts: ArtifactParts) -> Result<Self> {
        parts.meta_as()
    }
}

impl Artifact for ImpactField {
    const KIND: ArtifactKind = ArtifactKind::Field;

    fn to_parts(&self) -> Result<ArtifactParts> {
        Ok(ArtifactParts {
            meta: json!({
                "mesh_id": self.field.mesh_id,
                "vertex_count": self.field.len(),
                "impact": self.meta,
            }),
            blobs: vec![Blob::flat("values", self.field.values.clone())],
        })
    }

    fn from_parts(mut parts: ArtifactParts) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            mesh_id: String,
            vertex_count: usize,
            impact: ImpactMeta,
        }
        let m: Meta = parts.meta_as()?;
        Ok(Self {
            field: ScalarField::new(m.mesh_id, parts.take_len("values", m.vertex_count)?)?,
            meta: m.impact,
        })
    }
}
