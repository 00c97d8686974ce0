//! Acceptance suite on the 1000-vertex desk plate.
//!
//! Runs every criterion in sequence (the timing checks assume an otherwise idle
//! machine) and prints one PASS/FAIL line each. Soft timing targets print WARN
//! in the detail instead of failing. Exits non-zero if any criterion fails.
//!
//! `cargo test -p previs-core --test acceptance`

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use previs_core::analysis::{boxplot_stats, equal_span_impacts, prediction_errors, relative_errors, BoxplotStats};
use previs_core::ensemble::{
    generate_ensemble, latin_hypercube, synthesize_field, three_level_factorial, EnsembleDesign, GeneratorConfig,
    GeneratorSettings, ParameterSpace, ParameterVector, Sample,
};
use previs_core::geometry::{build_plate_mesh, normalized_laplacian, spectral_basis, SpectralOperator, SurfaceMesh};
use previs_core::interpolation::{delta_field, interpolate, llsf_solve, validate_interpolation, Interpolator};
use previs_core::reduction::{
    condense_signed_magnitude, explained_variance, fit_pca, BasisParameters, FieldPca, PcaBasis, ScalarField,
};
use previs_core::regressors::{
    cheb_response, gcn_conv_weight_count, gradient_check_at, init_gcn, init_olff, olff_weight_count, train,
    Architecture, OptimizerConfig, Predictor, Regressor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const PCA_TOL_6: f64 = 1e-9;
const PCA_TOL_10: f64 = 1e-12;
const PCA_BUDGET: Duration = Duration::from_secs(10);
const LLSF_MAX_NODE_ERROR_MM: f64 = 1e-8;
const LLSF_BUDGET: Duration = Duration::from_secs(30);
const DELTA_TOL_MM: f64 = 1e-8;
const DELTA_PAIRS: usize = 50;
const LLSF_ORACLE_TOL: f64 = 1e-10;
const LLSF_ORACLE_INSTANCES: usize = 100;
const PCA_ORACLE_TOL: f64 = 1e-8;
const BOXPLOT_LISTS: usize = 1000;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_MIN_WEIGHTS: usize = 200;
const GRAD_STEP: f64 = 1e-5;
const CHEB_TRIALS: usize = 1000;
const LARGE_OLFF_WEIGHTS: usize = 42_426_306;
const MEDIAN_REL_ERROR: f64 = 0.05;
const LOSS_RATIO: f64 = 0.5;
const TRAIN_BUDGET: Duration = Duration::from_secs(15 * 60);
const INTERP_SOFT_MS: f64 = 50.0;
const PREDICT_SOFT_MS: f64 = 20.0;
const PARALLEL_INTERPOLATIONS: usize = 12;
const IMPACT_HALF_SPAN_MM: f64 = 1.0;

const MESH_NX: usize = 40;
const MESH_NY: usize = 25;
const DESK_WIDTH_MM: f64 = 1200.0;
const DESK_HEIGHT_MM: f64 = 700.0;
const LHS_SAMPLES: usize = 1400;
const LHS_SEED: u64 = 7;
const BASIS_K: usize = 10;
const OLFF_SEED: u64 = 1;
const GCN_SEED: u64 = 1;
const GCN_MU: usize = 100;
const GCN_FILTERS: usize = 25;
const GCN_ORDER: usize = 15;
const GCN_FC: usize = 2048;
const HINGE_Y: usize = 1;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("criterion {id:>2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn soft(ms: f64, budget: f64) -> &'static str {
    if ms <= budget {
        "ok"
    } else {
        "WARN over target"
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn median_ms(runs: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..runs)
        .map(|_| {
            let s = Instant::now();
            f();
            ms(s.elapsed())
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[runs / 2]
}

struct Desk {
    mesh: SurfaceMesh,
    space: ParameterSpace,
    cfg: GeneratorConfig,
    design: EnsembleDesign,
    train: Vec<Sample>,
    test: Vec<Sample>,
}

impl Desk {
    fn new(gamma: f64) -> Self {
        let mesh = build_plate_mesh(MESH_NX, MESH_NY, DESK_WIDTH_MM, DESK_HEIGHT_MM).unwrap();
        let space = ParameterSpace::default();
        let settings = GeneratorSettings {
            gamma,
            ..GeneratorSettings::default()
        };
        let cfg = settings.build(&mesh).unwrap();
        let design = three_level_factorial(&space).unwrap();
        let train = generate_ensemble(&mesh, &design, &cfg).unwrap();
        let test = generate_ensemble(&mesh, &latin_hypercube(LHS_SAMPLES, &space, LHS_SEED).unwrap(), &cfg).unwrap();
        Self {
            mesh,
            space,
            cfg,
            design,
            train,
            test,
        }
    }
}

struct Trained {
    olff: Regressor,
    gcn: Regressor,
    olff_time: Duration,
    gcn_time: Duration,
}

fn train_models(desk: &Desk, op: Arc<SpectralOperator>) -> Trained {
    let start = Instant::now();
    let olff = init_olff(desk.mesh.vertex_count() * 3, 75, desk.space.dim(), OLFF_SEED).unwrap();
    let olff = train(olff, &desk.train, &OptimizerConfig::olff_default()).unwrap();
    let olff_time = start.elapsed();
    let start = Instant::now();
    let gcn = init_gcn(op, GCN_FILTERS, GCN_ORDER, GCN_FC, desk.space.dim(), GCN_SEED).unwrap();
    let gcn = train(gcn, &desk.train, &OptimizerConfig::gcn_default()).unwrap();
    Trained {
        olff,
        gcn,
        olff_time,
        gcn_time: start.elapsed(),
    }
}

fn criterion_1(r: &mut Report, desk: &Desk) -> PcaBasis {
    let start = Instant::now();
    let basis = PcaBasis::from_ensemble(&desk.mesh, &desk.train, &desk.design, BASIS_K).unwrap();
    let elapsed = start.elapsed();
    let cum = explained_variance(&basis);
    let at = |n: usize| cum[n.min(cum.len()) - 1];
    let (c6, c10) = (at(6), at(10));
    r.line(
        1,
        "PCA variance",
        desk.train.len() == 729 && c6 >= 1.0 - PCA_TOL_6 && c10 >= 1.0 - PCA_TOL_10 && elapsed < PCA_BUDGET,
        format!(
            "{} fields, {} vertices, k = {}; 1 - cum6 = {:.3e} (<= {PCA_TOL_6:e}), 1 - cum10 = {:.3e} (<= {PCA_TOL_10:e}); {:.2}s (< {}s)",
            desk.train.len(),
            desk.mesh.vertex_count(),
            basis.k(),
            1.0 - c6,
            1.0 - c10,
            elapsed.as_secs_f64(),
            PCA_BUDGET.as_secs()
        ),
    );
    basis
}

fn criterion_2(r: &mut Report, desk: &Desk, basis: &PcaBasis) {
    let start = Instant::now();
    let linear = validate_interpolation(basis, &desk.mesh, &desk.test).unwrap();
    let quad = Desk::new(0.2);
    let quad_basis = PcaBasis::from_ensemble(&quad.mesh, &quad.train, &quad.design, BASIS_K).unwrap();
    let nonlinear = validate_interpolation(&quad_basis, &quad.mesh, &quad.test).unwrap();
    let elapsed = start.elapsed();
    r.line(
        2,
        "LLSF validation",
        desk.test.len() == LHS_SAMPLES
            && linear.max_abs_error <= LLSF_MAX_NODE_ERROR_MM
            && nonlinear.max_abs_error.is_finite()
            && nonlinear.rms_error.is_finite()
            && elapsed < LLSF_BUDGET,
        format!(
            "gamma=0 max node error {:.3e} mm (<= {LLSF_MAX_NODE_ERROR_MM:e}); gamma=0.2 max {:.4e} mm, rms {:.4e} mm (reported); {:.2}s (< {}s)",
            linear.max_abs_error,
            nonlinear.max_abs_error,
            nonlinear.rms_error,
            elapsed.as_secs_f64(),
            LLSF_BUDGET.as_secs()
        ),
    );
}

fn random_params(rng: &mut ChaCha8Rng, space: &ParameterSpace) -> ParameterVector {
    ParameterVector(space.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect())
}

fn criterion_3(r: &mut Report, desk: &Desk, basis: &PcaBasis) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let condensed = |p: &ParameterVector| {
        condense_signed_magnitude(&synthesize_field(&desk.mesh, p, &desk.cfg).unwrap(), &desk.mesh).unwrap()
    };
    let mut worst = 0.0f64;
    for _ in 0..DELTA_PAIRS {
        let a = random_params(&mut rng, &desk.space);
        let a_bar = random_params(&mut rng, &desk.space);
        let delta = delta_field(basis, &a, &a_bar).unwrap();
        let (ua, ub) = (condensed(&a), condensed(&a_bar));
        for ((d, x), y) in delta.field.values.iter().zip(&ua.values).zip(&ub.values) {
            worst = worst.max((d - (x - y)).abs());
        }
    }
    r.line(
        3,
        "delta identity",
        worst <= DELTA_TOL_MM,
        format!("{DELTA_PAIRS} pairs, max |dU - (U(a) - U(a_bar))| = {worst:.3e} mm (<= {DELTA_TOL_MM:e})"),
    );
}

/// Minimum-norm least squares through the normal equations of whichever side
/// of `P` has full rank.
fn normal_equations_solve(p: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if p.ncols() <= p.nrows() {
        let gram = p.transpose() * p;
        gram.cholesky().expect("full column rank").solve(&(p.transpose() * rhs))
    } else {
        let gram = p * p.transpose();
        p.transpose() * gram.cholesky().expect("full row rank").solve(rhs)
    }
}

fn random_basis(rng: &mut ChaCha8Rng, space: &ParameterSpace, k: usize, vertices: usize) -> PcaBasis {
    let field = |rng: &mut ChaCha8Rng| {
        ScalarField::new("oracle", (0..vertices).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let fields = FieldPca {
        mean_field: field(rng),
        basis_fields: (0..k).map(|_| field(rng)).collect(),
        explained_variance_ratio: vec![1.0 / k as f64; k],
        singular_values: vec![1.0; k],
    };
    let params = BasisParameters {
        params: (0..k)
            .map(|_| ParameterVector((0..space.dim()).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect(),
        mean_params: random_params(rng, space),
    };
    PcaBasis::new(space.clone(), fields, params).unwrap()
}

fn llsf_oracle_error(space: &ParameterSpace) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = 0.0f64;
    for _ in 0..LLSF_ORACLE_INSTANCES {
        let k = rng.random_range(1..=10);
        let basis = random_basis(&mut rng, space, k, 8);
        let target = random_params(&mut rng, space);
        let p = DMatrix::from_fn(space.dim(), k, |r, c| basis.basis_params[c].0[r]);
        let rhs = DVector::from_iterator(space.dim(), target.0.iter().zip(&basis.mean_params.0).map(|(t, m)| t - m));
        let expected = normal_equations_solve(&p, &rhs);
        let got = llsf_solve(&basis, &target).unwrap();
        for (g, e) in got.coefficients.iter().zip(expected.iter()) {
            worst = worst.max((g - e).abs());
        }
    }
    worst
}

/// Principal directions from the eigendecomposition of the covariance
/// `X^T X`, sign-normalized so each direction's largest entry is positive.
fn pca_oracle_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(12..40);
        let v = rng.random_range(10..50);
        let k = rng.random_range(1..=n.min(v).min(8));
        // decaying column scales keep the leading spectrum well separated
        let fields: Vec<ScalarField> = (0..n)
            .map(|_| {
                ScalarField::new(
                    "oracle",
                    (0..v).map(|j| rng.random_range(-1.0..1.0) * 0.8f64.powi(j as i32) + 3.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let (pca, scores) = fit_pca(&fields, k).unwrap();

        let mean: Vec<f64> = (0..v).map(|j| fields.iter().map(|f| f.values[j]).sum::<f64>() / n as f64).collect();
        let x = DMatrix::from_fn(n, v, |i, j| fields[i].values[j] - mean[j]);
        let total: f64 = x.iter().map(|e| e * e).sum();
        let eig = SymmetricEigen::new(x.transpose() * &x);
        let mut order: Vec<usize> = (0..v).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        for (got, want) in pca.mean_field.values.iter().zip(&mean) {
            worst = worst.max((got - want).abs());
        }
        if pca.basis_fields.len() != k {
            return f64::INFINITY;
        }
        for (j, &col) in order.iter().take(k).enumerate() {
            let mut dir: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
            let big = dir.iter().copied().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
            if big < 0.0 {
                dir.iter_mut().for_each(|e| *e = -*e);
            }
            let lambda = eig.eigenvalues[col];
            for (got, want) in pca.basis_fields[j].values.iter().zip(&dir) {
                worst = worst.max((got - want).abs());
            }
            worst = worst.max((pca.explained_variance_ratio[j] - lambda / total).abs());
            worst = worst.max((pca.singular_values[j] - lambda.sqrt()).abs() / lambda.sqrt());
            // weights w_ij = (X v_j)_i / s_j^2
            let xv = &x * DVector::from_vec(dir);
            for i in 0..n {
                worst = worst.max((scores.weights[(i, j)] - xv[i] / lambda).abs());
            }
        }
    }
    worst
}

/// Type-7 quartiles from a sorted copy; whiskers and outliers by scanning the
/// raw list against the fences.
fn boxplot_oracle(values: &[f64]) -> BoxplotStats {
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let h = (x.len() - 1) as f64 * p;
        let j = h.floor() as usize;
        let g = h - j as f64;
        if j + 1 < x.len() && g > 0.0 {
            x[j] + g * (x[j + 1] - x[j])
        } else {
            x[j]
        }
    };
    let (q1, median, q3) = (q(0.25), q(0.5), q(0.75));
    let (lo, hi) = (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
    let inside = values.iter().copied().filter(|v| (lo..=hi).contains(v));
    let whisker_lo = inside.clone().fold(f64::INFINITY, f64::min);
    let whisker_hi = inside.fold(f64::NEG_INFINITY, f64::max);
    let outliers = x.iter().copied().filter(|v| *v < lo || *v > hi).collect();
    BoxplotStats {
        median,
        q1,
        q3,
        whisker_lo,
        whisker_hi,
        outliers,
        count: values.len(),
    }
}

fn boxplot_mismatches() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    (0..BOXPLOT_LISTS)
        .filter(|_| {
            let n = rng.random_range(1..300);
            let heavy = rng.random_bool(0.3);
            let ints = rng.random_bool(0.2);
            let values: Vec<f64> = (0..n)
                .map(|_| {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    let v = if heavy { v.powi(7) * 50.0 } else { v };
                    if ints {
                        (v * 5.0).round()
                    } else {
                        v
                    }
                })
                .collect();
            boxplot_stats(&values).unwrap() != boxplot_oracle(&values)
        })
        .count()
}

fn criterion_4(r: &mut Report, desk: &Desk) {
    let llsf = llsf_oracle_error(&desk.space);
    let pca = pca_oracle_error();
    let boxplot = boxplot_mismatches();
    r.line(
        4,
        "oracle equivalence",
        llsf <= LLSF_ORACLE_TOL && pca <= PCA_ORACLE_TOL && boxplot == 0,
        format!(
            "llsf vs normal-equation solve {llsf:.3e} (<= {LLSF_ORACLE_TOL:e}, {LLSF_ORACLE_INSTANCES} instances); \
             pca vs covariance eigensolve {pca:.3e} (<= {PCA_ORACLE_TOL:e}); boxplot vs sort oracle {boxplot}/{BOXPLOT_LISTS} mismatches"
        ),
    );
}

/// Random weights from every segment so each layer is exercised.
fn stratified_indices(model: &Regressor, per_segment: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model
        .weights
        .segments
        .iter()
        .flat_map(|s| {
            let take = per_segment.min(s.len);
            rand::seq::index::sample(&mut rng, s.len, take)
                .into_iter()
                .map(|i| s.offset + i)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn criterion_5(r: &mut Report, desk: &Desk, trained: &Trained) {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, model) in [("OLFF", &trained.olff), ("GCN", &trained.gcn)] {
        let idx = stratified_indices(model, 80, 5);
        let sample = &desk.test[0];
        let rep = gradient_check_at(model, sample, GRAD_STEP, &idx).unwrap();
        pass &= rep.checked >= GRAD_MIN_WEIGHTS && rep.max_rel_error < GRAD_REL_TOL;
        details.push(format!(
            "{name} max rel error {:.3e} over {} weights",
            rep.max_rel_error, rep.checked
        ));
    }
    r.line(
        5,
        "gradient checks",
        pass,
        format!("{} (< {GRAD_REL_TOL:e}, >= {GRAD_MIN_WEIGHTS} weights, h = {GRAD_STEP:e})", details.join("; ")),
    );
}

fn criterion_6(r: &mut Report, op: &SpectralOperator, gcn: &Regressor, test: &[Sample]) {
    let top = op.rescaled_eigenvalues[op.mu - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let nonzero = (0..CHEB_TRIALS)
        .filter(|_| {
            let order = rng.random_range(1..=30);
            let scale = 10f64.powi(rng.random_range(-3..=6));
            let theta: Vec<f64> = (0..order).map(|_| rng.random_range(-scale..scale)).collect();
            cheb_response(&theta, top).unwrap() != 0.0
        })
        .count();
    // The trained filter bank's response also vanishes at the top frequency.
    let mu = op.mu;
    let feature_nonzero = test
        .iter()
        .take(20)
        .filter(|s| {
            let f = gcn.gcn_feature_map(&s.field).unwrap();
            f.chunks(mu).any(|row| row[mu - 1] != 0.0)
        })
        .count();
    r.line(
        6,
        "Chebyshev zero at top frequency",
        top == 1.0 && nonzero == 0 && feature_nonzero == 0,
        format!(
            "rescaled lambda_mu = {top}; {nonzero}/{CHEB_TRIALS} random filters nonzero; \
             {feature_nonzero}/20 trained feature maps nonzero at mu"
        ),
    );
}

fn criterion_7(r: &mut Report) {
    let olff = olff_weight_count(565_677, 75, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let formula_misses = (0..1000)
        .filter(|_| {
            let (f, c, k) = (rng.random_range(1..64), rng.random_range(1..8), rng.random_range(1..32));
            gcn_conv_weight_count(f, c, k) != f * c * k
        })
        .count();
    // Built models: the Chebyshev segment has exactly filters x 3 x order weights.
    let mesh = build_plate_mesh(6, 5, 100.0, 80.0).unwrap();
    let lap = normalized_laplacian(&mesh).unwrap();
    let mut layout_misses = 0;
    for _ in 0..20 {
        let mu = rng.random_range(2..=30);
        let (f, k, fc) = (rng.random_range(1..40), rng.random_range(1..20), rng.random_range(1..16));
        let op = Arc::new(spectral_basis(&lap, mu).unwrap());
        let m = init_gcn(op, f, k, fc, 6, 0).unwrap();
        let seg = m.weights.segment_info("cheb.theta").unwrap();
        let Architecture::Gcn(cfg) = m.arch else { unreachable!() };
        let total: usize = m.weights.segments.iter().map(|s| s.len).sum();
        if seg.len != f * 3 * k || cfg.conv_weight_count() != f * 3 * k || total != m.weights.len() || total != cfg.weight_count() {
            layout_misses += 1;
        }
    }
    let small = init_olff(57, 9, 6, 0).unwrap();
    let small_ok = small.weights.len() == 57 * 9 + 9 + 9 * 6 + 6;
    r.line(
        7,
        "architecture arithmetic",
        olff == LARGE_OLFF_WEIGHTS && formula_misses == 0 && layout_misses == 0 && small_ok,
        format!(
            "OLFF(565677, 75, 6) = {olff} (expect {LARGE_OLFF_WEIGHTS}); conv formula misses {formula_misses}/1000; \
             built GCN layout misses {layout_misses}/20"
        ),
    );
}

fn median_abs_by_param(model: &dyn Predictor, desk: &Desk) -> Vec<f64> {
    let rel = relative_errors(&prediction_errors(model, &desk.test).unwrap(), &desk.space).unwrap();
    (0..rel.ncols())
        .map(|j| {
            let col: Vec<f64> = rel.column(j).iter().map(|e| e.abs()).collect();
            boxplot_stats(&col).unwrap().median
        })
        .collect()
}

fn criterion_8(r: &mut Report, desk: &Desk, trained: &Trained) {
    let mut pass = trained.olff_time + trained.gcn_time < TRAIN_BUDGET;
    let mut details = Vec::new();
    for (name, model) in [("OLFF", &trained.olff), ("GCN", &trained.gcn)] {
        let medians = median_abs_by_param(model, desk);
        let log = &model.training_log;
        let (first, last) = (log[0], log[log.len() - 1]);
        pass &= medians.iter().all(|m| *m < MEDIAN_REL_ERROR) && last < LOSS_RATIO * first;
        details.push(format!(
            "{name} {} epochs, loss {first:.3e} -> {last:.3e}, median |rel err| [{}]",
            log.len(),
            medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", ")
        ));
    }
    r.line(
        8,
        "end-to-end learning",
        pass,
        format!(
            "{}; thresholds < {MEDIAN_REL_ERROR}, final < {LOSS_RATIO} x first; training {:.0}s + {:.0}s (< {}s)",
            details.join("; "),
            trained.olff_time.as_secs_f64(),
            trained.gcn_time.as_secs_f64(),
            TRAIN_BUDGET.as_secs()
        ),
    );
}

fn criterion_9(r: &mut Report, desk: &Desk, basis: &PcaBasis, trained: &Trained) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let targets: Vec<ParameterVector> =
        (0..PARALLEL_INTERPOLATIONS).map(|_| random_params(&mut rng, &desk.space)).collect();
    // The full request path: pseudoinverse plus reconstruction.
    let interp_ms = median_ms(21, || {
        interpolate(basis, &targets[0]).unwrap();
    });
    let serial: Vec<ScalarField> = targets.iter().map(|t| interpolate(basis, t).unwrap()).collect();
    let parallel: Vec<ScalarField> = std::thread::scope(|s| {
        let handles: Vec<_> = targets.iter().map(|t| s.spawn(move || interpolate(basis, t).unwrap())).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let identical = serial == parallel;
    let shared = Interpolator::new(basis).unwrap();
    let shared_identical = std::thread::scope(|s| {
        let handles: Vec<_> = targets.iter().map(|t| s.spawn(|| shared.interpolate(t).unwrap())).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
    }) == serial;

    let field = &desk.test[0].field;
    let olff_ms = median_ms(21, || {
        trained.olff.predict(field).unwrap();
    });
    let gcn_ms = median_ms(21, || {
        trained.gcn.predict(field).unwrap();
    });
    r.line(
        9,
        "runtime analogs",
        identical && shared_identical,
        format!(
            "{PARALLEL_INTERPOLATIONS} parallel interpolations identical to serial: {}; interpolation {interp_ms:.2} ms ({} <= {INTERP_SOFT_MS} ms); \
             prediction OLFF {olff_ms:.2} ms ({}), GCN {gcn_ms:.2} ms ({}) (<= {PREDICT_SOFT_MS} ms)",
            identical && shared_identical,
            soft(interp_ms, INTERP_SOFT_MS),
            soft(olff_ms, PREDICT_SOFT_MS),
            soft(gcn_ms, PREDICT_SOFT_MS)
        ),
    );
}

fn criterion_10(r: &mut Report, desk: &Desk, basis: &PcaBasis) {
    let impacts = equal_span_impacts(basis, IMPACT_HALF_SPAN_MM).unwrap();
    let maxima: Vec<f64> = impacts.iter().map(|f| f.field.max_abs()).collect();
    let dominant = desk.cfg.parameter_count() == maxima.len()
        && maxima.iter().enumerate().all(|(j, m)| j == HINGE_Y || maxima[HINGE_Y] > *m);
    r.line(
        10,
        "Hinge_Y sensitivity",
        dominant,
        format!(
            "whisker impact max over span [-{IMPACT_HALF_SPAN_MM}, {IMPACT_HALF_SPAN_MM}] mm: {}",
            desk.space
                .names
                .iter()
                .zip(&maxima)
                .map(|(n, m)| format!("{n} {m:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

fn main() -> ExitCode {
    let started = Instant::now();
    let desk = Desk::new(0.0);
    let op = Arc::new(spectral_basis(&normalized_laplacian(&desk.mesh).unwrap(), GCN_MU).unwrap());
    println!(
        "acceptance: desk plate {MESH_NX}x{MESH_NY} ({} vertices), {} training / {} test samples; training OLFF and GCN...",
        desk.mesh.vertex_count(),
        desk.train.len(),
        desk.test.len()
    );
    let trained = train_models(&desk, op.clone());

    let mut report = Report { failures: 0 };
    let basis = criterion_1(&mut report, &desk);
    criterion_2(&mut report, &desk, &basis);
    criterion_3(&mut report, &desk, &basis);
    criterion_4(&mut report, &desk);
    criterion_5(&mut report, &desk, &trained);
    criterion_6(&mut report, &op, &trained.gcn, &desk.test);
    criterion_7(&mut report);
    criterion_8(&mut report, &desk, &trained);
    criterion_9(&mut report, &desk, &basis, &trained);
    criterion_10(&mut report, &desk, &basis);

    println!(
        "acceptance: {} of 10 criteria passed in {:.0}s",
        10 - report.failures,
        started.elapsed().as_secs_f64()
    );
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
