//! A miniature feature-by-classifier benchmark grid, printed as a table.
//! The `meshmvpa bench` command runs the full grid (including the searched
//! SVM kernels) and writes bench_table.csv plus per-cell reports.
//!
//! Run with: `cargo run --example benchmark_grid`

use meshmvpa::classifiers::ClassifierSpec;
use meshmvpa::crossval::{run_cv, FeatureMethod, PipelineSpec};
use meshmvpa::synthgen::{generate_synthetic, SynthConfig};

fn main() -> meshmvpa::Result<()> {
    let d = generate_synthetic(&SynthConfig {
        grid: [3, 3, 3],
        n_classes: 3,
        n_runs: 4,
        trials_per_run: 12,
        p_gen: 5,
        noise_sigma: 0.1,
        smoothness: 0.6,
        seed: 9,
    })?;

    let classifiers = [
        ("knn", ClassifierSpec::knn_search()),
        ("gnb-kde", ClassifierSpec::gnb_kde()),
        ("svm-rbf", ClassifierSpec::svm_rbf_search()),
        ("nn", ClassifierSpec::nn_default()),
    ];
    let methods = [
        ("raw", FeatureMethod::Raw),
        ("mad", FeatureMethod::Mad),
        ("pca", FeatureMethod::Pca),
        ("searchlight", FeatureMethod::Searchlight),
    ];

    print!("{:<12}", "method");
    for (cname, _) in &classifiers {
        print!("{cname:>9}");
    }
    println!();
    for (mname, method) in &methods {
        print!("{mname:<12}");
        for (_, classifier) in &classifiers {
            let mut spec = PipelineSpec::new(*method, *classifier);
            spec.mesh.p = 5;
            let report = run_cv(&d, &spec)?;
            print!("{:>9.3}", report.mean_accuracy);
        }
        println!();
    }
    println!("(chance = {:.3})", 1.0 / d.n_classes() as f64);
    Ok(())
}
