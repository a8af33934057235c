//! Train each classifier family on the same features, compare their
//! training-set accuracy, and round-trip one model through its JSON
//! serialization.
//!
//! Run with: `cargo run --example train_classifiers`

use meshmvpa::classifiers::{
    load_model, save_model, train_classifier, ClassifierSpec, SvmKernelSpec,
};
use meshmvpa::crossval::accuracy;
use meshmvpa::mesh::{features_for, FeatureMode, MeshConfig};
use meshmvpa::param::Tunable;
use meshmvpa::synthgen::{generate_synthetic, SynthConfig};

fn main() -> meshmvpa::Result<()> {
    let cfg = SynthConfig {
        grid: [3, 3, 3],
        n_classes: 3,
        n_runs: 3,
        trials_per_run: 15,
        p_gen: 5,
        noise_sigma: 0.1,
        smoothness: 0.6,
        seed: 3,
    };
    let d = generate_synthetic(&cfg)?;
    let x = features_for(
        FeatureMode::Mad,
        &d,
        &MeshConfig {
            p: 5,
            ..MeshConfig::default()
        },
    )?;
    let y = d.labels();

    let specs = [
        (
            "knn (k=3)",
            ClassifierSpec::Knn {
                k: Tunable::Fixed(3),
            },
        ),
        ("gnb gaussian", ClassifierSpec::gnb_gaussian()),
        ("gnb kde", ClassifierSpec::gnb_kde()),
        (
            "svm linear (c=10)",
            ClassifierSpec::Svm {
                kernel: SvmKernelSpec::Linear,
                cost: Tunable::Fixed(10.0),
            },
        ),
        (
            "svm rbf (sigma=2, c=10)",
            ClassifierSpec::Svm {
                kernel: SvmKernelSpec::Rbf {
                    sigma: Tunable::Fixed(2.0),
                },
                cost: Tunable::Fixed(10.0),
            },
        ),
        ("nn (10 hidden)", ClassifierSpec::nn_default()),
    ];
    for (name, spec) in &specs {
        let model = train_classifier(spec, &x, y)?;
        let acc = accuracy(&model.predict(&x)?, y)?;
        println!("{name:<24} training accuracy {acc:.3}");
    }

    // serialization: the reloaded model predicts identically
    let model = train_classifier(&ClassifierSpec::gnb_kde(), &x, y)?;
    let reloaded = load_model(&save_model(&model))?;
    assert_eq!(model.predict(&x)?, reloaded.predict(&x)?);
    println!("model JSON round-trip: predictions identical");
    Ok(())
}
