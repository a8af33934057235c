//! Mesh arc descriptors step by step: the neighborhood table, a single
//! arc-weight estimate, the full MAD matrix, and the mad.bin round-trip.
//!
//! Run with: `cargo run --example extract_mad_features`

use meshmvpa::matrix::Matrix;
use meshmvpa::mesh::{
    estimate_arc_weights, extract_mad, read_mad_binary, write_mad_binary, MeshConfig,
};
use meshmvpa::neighborhood::build_neighborhood_table;
use meshmvpa::synthgen::{generate_synthetic, SynthConfig};

fn main() -> meshmvpa::Result<()> {
    // one mesh by hand: center 10 regressed on neighbors (3, 4) has the
    // minimum-norm solution c·x/|x|^2 = (1.2, 1.6) with zero residual
    let est = estimate_arc_weights(
        &[10.0],
        &Matrix::from_rows(&[vec![3.0, 4.0]]),
        &MeshConfig {
            p: 2,
            ..MeshConfig::default()
        },
    )?;
    println!(
        "single mesh: weights {:?}, residual {}",
        est.weights, est.residual
    );

    // a full dataset
    let cfg = SynthConfig {
        grid: [4, 4, 4],
        n_classes: 3,
        n_runs: 4,
        trials_per_run: 12,
        p_gen: 6,
        noise_sigma: 0.1,
        smoothness: 0.6,
        seed: 1,
    };
    let d = generate_synthetic(&cfg)?;
    let mesh = MeshConfig::default(); // p = 6, min-norm, window 1
    let table = build_neighborhood_table(d.coords(), mesh.p)?;
    println!(
        "neighborhood table: voxel 0 -> {:?} (nearest first)",
        table.row(0)
    );

    let mad = extract_mad(&d, &table, &mesh)?;
    println!(
        "MAD matrix: {} samples x {} features (N*p = {}*{})",
        mad.rows(),
        mad.cols(),
        d.n_voxels(),
        mesh.p
    );

    let path = std::env::temp_dir().join("meshmvpa_example_mad.bin");
    write_mad_binary(&mad, &path)?;
    let back = read_mad_binary(&path)?;
    let identical = mad
        .values()
        .data()
        .iter()
        .zip(back.values().data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("mad.bin round-trip bit-identical: {identical}");
    Ok(())
}
