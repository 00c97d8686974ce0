//! Sampling designs over the parameter space and the analytic field generator
//! that stands in for the structural simulation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PrevisError, Result};
use crate::geometry::SurfaceMesh;

pub const DEFAULT_PARAMETER_NAMES: [&str; 6] =
    ["Hinge_X", "Hinge_Y", "Lock_L", "Lock_R", "Buffer_L", "Buffer_R"];

/// Per-parameter mode amplitudes in mm per mm; `Hinge_Y` dominates.
pub const DEFAULT_AMPLITUDES: [f64; 6] = [1.0, 2.5, 0.8, 0.8, 0.4, 0.4];

/// Attribute vector in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Named parameters with closed bounds `[lo, hi]` in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
}

impl Default for ParameterSpace {
    fn default() -> Self {
        Self::uniform(
            DEFAULT_PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
            -1.0,
            1.0,
        )
        .expect("default space is valid")
    }
}

impl ParameterSpace {
    pub fn new(names: Vec<String>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        PrevisError::check_len("parameter bounds", names.len(), bounds.len())?;
        if names.is_empty() {
            return Err(PrevisError::Empty("parameter space"));
        }
        for (name, &(lo, hi)) in names.iter().zip(&bounds) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(PrevisError::invalid(format!(
                    "bounds of {name} must be finite with lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { names, bounds })
    }

    pub fn uniform(names: Vec<String>, lo: f64, hi: f64) -> Result<Self> {
        let bounds = vec![(lo, hi); names.len()];
        Self::new(names, bounds)
    }

    /// `n` parameters named `p0..` unless `n` matches the default six.
    pub fn with_dim(n: usize, lo: f64, hi: f64) -> Result<Self> {
        let names = if n == DEFAULT_PARAMETER_NAMES.len() {
            DEFAULT_PARAMETER_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..n).map(|i| format!("p{i}")).collect()
        };
        Self::uniform(names, lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn contains(&self, p: &ParameterVector) -> bool {
        p.len() == self.dim()
            && p.0
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| hi - lo).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DesignKind {
    Lhs { seed: u64 },
    Factorial3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDesign {
    pub kind: DesignKind,
    pub space: ParameterSpace,
    pub rows: Vec<ParameterVector>,
}

impl EnsembleDesign {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_means(&self) -> ParameterVector {
        let n = self.space.dim();
        let mut mean = vec![0.0; n];
        if self.rows.is_empty() {
            return ParameterVector(mean);
        }
        for row in &self.rows {
            for (m, x) in mean.iter_mut().zip(&row.0) {
                *m += x;
            }
        }
        let count = self.rows.len() as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        ParameterVector(mean)
    }
}

/// Latin hypercube design: per column, exactly one sample in each of the
/// `n_samples` equal-width strata, uniformly jittered inside its stratum.
pub fn latin_hypercube(n_samples: usize, space: &ParameterSpace, seed: u64) -> Result<EnsembleDesign> {
    if n_samples == 0 {
        return Err(PrevisError::invalid("latin hypercube needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = space.dim();
    let mut rows = vec![vec![0.0; dim]; n_samples];
    let mut strata: Vec<usize> = (0..n_samples).collect();
    for (j, &(lo, hi)) in space.bounds.iter().enumerate() {
        strata.shuffle(&mut rng);
        let width = (hi - lo) / n_samples as f64;
        for (row, &s) in rows.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            row[j] = (lo + (s as f64 + u) * width).min(hi);
        }
    }
    Ok(EnsembleDesign {
        kind: DesignKind::Lhs { seed },
        space: space.clone(),
        rows: rows.into_iter().map(ParameterVector).collect(),
    })
}

/// Full three-level factorial `{lo, mid, hi}^n` in lexicographic order
/// (last parameter varies fastest).
pub fn three_level_factorial(space: &ParameterSpace) -> Result<EnsembleDesign> {
    let dim = space.dim();
    if dim == 0 {
        return Err(PrevisError::Empty("parameter space"));
    }
    let count = 3usize
        .checked_pow(dim as u32)
        .filter(|&c| c <= 1 << 24)
        .ok_or_else(|| PrevisError::invalid(format!("3^{dim} rows is too many")))?;
    let levels: Vec<[f64; 3]> = space
        .bounds
        .iter()
        .map(|&(lo, hi)| [lo, 0.5 * (lo + hi), hi])
        .collect();
    let rows = (0..count)
        .map(|mut r| {
            let mut row = vec![0.0; dim];
            for j in (0..dim).rev() {
                row[j] = levels[j][r % 3];
                r /= 3;
            }
            ParameterVector(row)
        })
        .collect();
    Ok(EnsembleDesign {
        kind: DesignKind::Factorial3,
        space: space.clone(),
        rows,
    })
}

/// Per-vertex 3-vector displacement field in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub mesh_id: String,
    pub values: Vec<[f64; 3]>,
}

impl VectorField {
    pub fn new(mesh_id: impl Into<String>, values: Vec<[f64; 3]>) -> Result<Self> {
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(PrevisError::NonFinite("vector field entry".into()));
        }
        Ok(Self {
            mesh_id: mesh_id.into(),
            values,
        })
    }

    pub fn zeros(mesh: &SurfaceMesh) -> Self {
        Self {
            mesh_id: mesh.id().to_string(),
            values: vec![[0.0; 3]; mesh.vertex_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Vertex-major flattening `[v0.x, v0.y, v0.z, v1.x, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn check_mesh(&self, mesh: &SurfaceMesh) -> Result<()> {
        if self.mesh_id != mesh.id() {
            return Err(PrevisError::MeshMismatch {
                expected: mesh.id().to_string(),
                found: self.mesh_id.clone(),
            });
        }
        PrevisError::check_len("vector field", mesh.vertex_count(), self.values.len())
    }
}

/// Knobs for the default plate generator; expanded into a [`GeneratorConfig`]
/// by [`GeneratorSettings::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSettings {
    pub amplitudes: Vec<f64>,
    /// Peak magnitude of the baseline sag (mm).
    pub sag: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            amplitudes: DEFAULT_AMPLITUDES.to_vec(),
            sag: 1.0,
            gamma: 0.0,
            sigma: 0.0,
            seed: 0,
        }
    }
}

/// Bump centres in normalized plate coordinates: hinges at the rear, locks at
/// the front edge, buffers near the front corners.
const MODE_CENTERS: [(f64, f64); 6] = [
    (0.15, 0.85),
    (0.85, 0.85),
    (0.35, 0.06),
    (0.65, 0.06),
    (0.06, 0.22),
    (0.94, 0.22),
];
const MODE_WIDTH: f64 = 0.22;
const IN_PLANE_RATIO: f64 = 0.2;

impl GeneratorSettings {
    pub fn build(&self, mesh: &SurfaceMesh) -> Result<GeneratorConfig> {
        if self.amplitudes.is_empty() {
            return Err(PrevisError::Empty("generator amplitudes"));
        }
        let (lo, hi) = mesh.bounding_box();
        let span = [(hi[0] - lo[0]).max(f64::MIN_POSITIVE), (hi[1] - lo[1]).max(f64::MIN_POSITIVE)];
        let uv: Vec<(f64, f64)> = mesh
            .vertices()
            .iter()
            .map(|v| ((v[0] - lo[0]) / span[0], (v[1] - lo[1]) / span[1]))
            .collect();

        let baseline = uv
            .iter()
            .zip(mesh.normals())
            .map(|(&(u, v), n)| {
                let s = -self.sag * (std::f64::consts::PI * u).sin() * (std::f64::consts::PI * v).sin();
                [s * n[0], s * n[1], s * n[2]]
            })
            .collect();

        let modes = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, &amp)| {
                let (cu, cv) = if i < MODE_CENTERS.len() {
                    MODE_CENTERS[i]
                } else {
                    // golden-ratio scatter for extra parameters
                    let t = i as f64 * 0.618_033_988_749_894_9;
                    (0.1 + 0.8 * t.fract(), 0.1 + 0.8 * (t * 1.7).fract())
                };
                let angle = i as f64 * std::f64::consts::FRAC_PI_3;
                let (dir_u, dir_v) = (angle.cos(), angle.sin());
                uv.iter()
                    .zip(mesh.normals())
                    .map(|(&(u, v), n)| {
                        let r2 = (u - cu).powi(2) + (v - cv).powi(2);
                        let bump = amp * (-r2 / (2.0 * MODE_WIDTH * MODE_WIDTH)).exp();
                        let t = IN_PLANE_RATIO * bump;
                        [
                            bump * n[0] + t * dir_u,
                            bump * n[1] + t * dir_v,
                            bump * n[2],
                        ]
                    })
                    .collect()
            })
            .collect();

        GeneratorConfig::new(mesh.id(), baseline, modes, self.gamma, self.sigma, self.seed)
    }
}

/// Analytic field generator
/// `U(a) = U0 + sum_i a_i phi_i + gamma * sum_{i<=j} a_i a_j psi_ij + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub mesh_id: String,
    pub baseline: Vec<[f64; 3]>,
    pub modes: Vec<Vec<[f64; 3]>>,
    pub gamma: f64,
    pub sigma: f64,
    pub seed: u64,
    /// `psi_ij` for `i <= j` in row-major upper-triangular order.
    quadratic: Vec<Vec<[f64; 3]>>,
}

impl GeneratorConfig {
    pub fn new(
        mesh_id: impl Into<String>,
        baseline: Vec<[f64; 3]>,
        modes: Vec<Vec<[f64; 3]>>,
        gamma: f64,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(PrevisError::invalid(format!("gamma must be >= 0, got {gamma}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(PrevisError::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        for m in &modes {
            PrevisError::check_len("mode field", baseline.len(), m.len())?;
        }
        let quadratic = quadratic_modes(&modes);
        Ok(Self {
            mesh_id: mesh_id.into(),
            baseline,
            modes,
            gamma,
            sigma,
            seed,
            quadratic,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.modes.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.baseline.len()
    }

    /// `psi_ij`, symmetric in `(i, j)`.
    pub fn quadratic_mode(&self, i: usize, j: usize) -> &[[f64; 3]] {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.modes.len();
        // rows 0..i of the upper triangle hold n, n-1, ..., n-i+1 entries
        &self.quadratic[i * n - i * i.saturating_sub(1) / 2 + (j - i)]
    }
}

/// `psi_ij = phi_i (.) phi_j`, rescaled so its peak vertex magnitude equals
/// `sqrt(peak_i * peak_j)`.
fn quadratic_modes(modes: &[Vec<[f64; 3]>]) -> Vec<Vec<[f64; 3]>> {
    let peak = |f: &[[f64; 3]]| f.iter().map(crate::geometry::norm3).fold(0.0, f64::max);
    let peaks: Vec<f64> = modes.iter().map(|m| peak(m)).collect();
    let n = modes.len();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let raw: Vec<[f64; 3]> = modes[i]
                .iter()
                .zip(&modes[j])
                .map(|(a, b)| [a[0] * b[0], a[1] * b[1], a[2] * b[2]])
                .collect();
            let p = peak(&raw);
            let target = (peaks[i] * peaks[j]).sqrt();
            let scale = if p > 0.0 { target / p } else { 0.0 };
            out.push(raw.into_iter().map(|v| [v[0] * scale, v[1] * scale, v[2] * scale]).collect());
        }
    }
    out
}

/// Evaluates the generator at `params`. Deterministic per `(params, cfg)`.
pub fn synthesize_field(
    mesh: &SurfaceMesh,
    params: &ParameterVector,
    cfg: &GeneratorConfig,
) -> Result<VectorField> {
    if cfg.mesh_id != mesh.id() {
        return Err(PrevisError::MeshMismatch {
            expected: mesh.id().to_string(),
            found: cfg.mesh_id.clone(),
        });
    }
    PrevisError::check_len("generator vertex count", mesh.vertex_count(), cfg.vertex_count())?;
    PrevisError::check_len("parameter vector", cfg.parameter_count(), params.len())?;
    if params.0.iter().any(|x| !x.is_finite()) {
        return Err(PrevisError::NonFinite("parameter value".into()));
    }

    let a = &params.0;
    let mut values = cfg.baseline.clone();
    for (ai, mode) in a.iter().zip(&cfg.modes) {
        if *ai == 0.0 {
            continue;
        }
        for (u, m) in values.iter_mut().zip(mode) {
            for d in 0..3 {
                u[d] += ai * m[d];
            }
        }
    }
    if cfg.gamma > 0.0 {
        let n = a.len();
        let mut q = 0;
        for i in 0..n {
            for j in i..n {
                let w = cfg.gamma * a[i] * a[j];
                if w != 0.0 {
                    for (u, m) in values.iter_mut().zip(&cfg.quadratic[q]) {
                        for d in 0..3 {
                            u[d] += w * m[d];
                        }
                    }
                }
                q += 1;
            }
        }
    }
    if cfg.sigma > 0.0 {
        let mut hasher = Sha256::new();
        hasher.update(cfg.seed.to_le_bytes());
        for x in a {
            hasher.update(x.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let normal = Normal::new(0.0, cfg.sigma).map_err(|e| PrevisError::invalid(e.to_string()))?;
        for u in values.iter_mut() {
            for x in u.iter_mut() {
                *x += normal.sample(&mut rng);
            }
        }
    }
    VectorField::new(mesh.id(), values)
}

/// One ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub params: ParameterVector,
    pub field: VectorField,
}

/// Evaluates the generator on every design row, preserving row order.
pub fn generate_ensemble(
    mesh: &SurfaceMesh,
    design: &EnsembleDesign,
    cfg: &GeneratorConfig,
) -> Result<Vec<Sample>> {
    design
        .rows
        .par_iter()
        .map(|p| {
            Ok(Sample {
                params: p.clone(),
                field: synthesize_field(mesh, p, cfg)?,
            })
        })
        .collect()
}
