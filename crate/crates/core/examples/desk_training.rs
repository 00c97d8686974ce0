//! Trains both regressors on the linear 40x25 plate problem and prints the
//! median absolute relative error per parameter on a held-out LHS set.
//!
//! `cargo run --release -p previs-core --example desk_training [olff|gcn] [epochs]`

use std::sync::Arc;
use std::time::Instant;

use previs_core::analysis::{prediction_errors, relative_errors};
use previs_core::ensemble::{
    generate_ensemble, latin_hypercube, three_level_factorial, GeneratorSettings, ParameterSpace,
};
use previs_core::geometry::{build_plate_mesh, normalized_laplacian, spectral_basis};
use previs_core::regressors::{init_gcn, init_olff, train_with_progress, OptimizerConfig};

fn main() -> previs_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "olff".into());
    let epochs: Option<usize> = args.next().and_then(|s| s.parse().ok());

    let mesh = build_plate_mesh(40, 25, 1200.0, 700.0)?;
    let space = ParameterSpace::default();
    let cfg = GeneratorSettings::default().build(&mesh)?;
    let train_set = generate_ensemble(&mesh, &three_level_factorial(&space)?, &cfg)?;
    let test_set = generate_ensemble(&mesh, &latin_hypercube(1400, &space, 7)?, &cfg)?;

    let (model, mut opt) = if which == "gcn" {
        let op = Arc::new(spectral_basis(&normalized_laplacian(&mesh)?, 100)?);
        (init_gcn(op, 25, 15, 2048, 6, 1)?, OptimizerConfig::gcn_default())
    } else {
        (init_olff(mesh.vertex_count() * 3, 75, 6, 1)?, OptimizerConfig::olff_default())
    };
    if let Some(e) = epochs {
        opt = opt.with_epochs(e);
    }
    let t0 = Instant::now();
    let model = train_with_progress(model, &train_set, &opt, |p| {
        if p.epoch == 1 || p.epoch % 10 == 0 {
            println!("epoch {:>5}  loss {:.6e}  {:.1}s", p.epoch, p.loss, t0.elapsed().as_secs_f64());
        }
    })?;
    println!("trained in {:.1}s", t0.elapsed().as_secs_f64());

    let rel = relative_errors(&prediction_errors(&model, &test_set)?, &space)?;
    for (j, name) in space.names.iter().enumerate() {
        let mut col: Vec<f64> = rel.column(j).iter().map(|e| e.abs()).collect();
        col.sort_by(f64::total_cmp);
        println!("{:<10} median |rel err| {:.4}", name, col[col.len() / 2]);
    }
    Ok(())
}
