//! The four classifier families behind one train/predict contract:
//! k-nearest neighbor, naive Bayes (Gaussian or kernel density), one-vs-one
//! SVM (linear or RBF kernel), and a two-layer backpropagation network.
//!
//! All tie-breaks resolve to the smallest class id or index, and all
//! training is deterministic in its inputs (plus the seed for the network),
//! so identical specs and data always reproduce identical models.

pub mod gnb;
pub mod knn;
pub mod nn;
pub mod svm;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::param::{AutoOr, Tunable};

use gnb::GnbFit;
use knn::KnnFit;
use nn::{NnFit, NnShape};
use svm::{ResolvedKernel, SvmFit};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GnbDensity {
    Gaussian,
    Kde { bandwidth: AutoOr<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SvmKernelSpec {
    Linear,
    Rbf { sigma: Tunable<f64> },
}

/// Which family to train and its (possibly searchable) settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ClassifierSpec {
    Knn {
        k: Tunable<usize>,
    },
    Gnb {
        density: GnbDensity,
    },
    Svm {
        kernel: SvmKernelSpec,
        cost: Tunable<f64>,
    },
    Nn {
        hidden_units: usize,
        learning_rate: f64,
        epochs: usize,
        seed: u64,
    },
}

impl ClassifierSpec {
    /// Protocol default: k is grid-searched by inner cross-validation.
    pub fn knn_search() -> Self {
        ClassifierSpec::Knn { k: Tunable::Search }
    }

    pub fn gnb_gaussian() -> Self {
        ClassifierSpec::Gnb {
            density: GnbDensity::Gaussian,
        }
    }

    pub fn gnb_kde() -> Self {
        ClassifierSpec::Gnb {
            density: GnbDensity::Kde {
                bandwidth: AutoOr::Auto,
            },
        }
    }

    pub fn svm_linear_search() -> Self {
        ClassifierSpec::Svm {
            kernel: SvmKernelSpec::Linear,
            cost: Tunable::Search,
        }
    }

    pub fn svm_rbf_search() -> Self {
        ClassifierSpec::Svm {
            kernel: SvmKernelSpec::Rbf {
                sigma: Tunable::Search,
            },
            cost: Tunable::Search,
        }
    }

    /// Network defaults: 10 hidden units, rate 0.1, 500 epochs. There is no
    /// canonical setting; these are explicit, overridable stand-ins.
    pub fn nn_default() -> Self {
        ClassifierSpec::Nn {
            hidden_units: 10,
            learning_rate: 0.1,
            epochs: 500,
            seed: 0,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::Gnb { .. } => "gnb",
            ClassifierSpec::Svm { .. } => "svm",
            ClassifierSpec::Nn { .. } => "nn",
        }
    }

    pub fn has_search(&self) -> bool {
        match self {
            ClassifierSpec::Knn { k } => k.is_search(),
            ClassifierSpec::Gnb { .. } => false,
            ClassifierSpec::Svm { kernel, cost } => {
                cost.is_search()
                    || matches!(
                        kernel,
                        SvmKernelSpec::Rbf {
                            sigma: Tunable::Search
                        }
                    )
            }
            ClassifierSpec::Nn { .. } => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Fitted {
    Knn(KnnFit),
    Gnb(GnbFit),
    Svm(SvmFit),
    Nn(NnFit),
}

/// A trained classifier: the resolved spec, the class ids seen in training,
/// and the family-specific fitted state.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ClassifierSpec,
    classes: Vec<usize>,
    n_features: usize,
    fitted: Fitted,
}

fn distinct_sorted(y: &[usize]) -> Vec<usize> {
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Train a model of the requested family.
pub fn train_classifier(spec: &ClassifierSpec, x: &Matrix, y: &[usize]) -> Result<Model> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() < 2 {
        return Err(Error::InvalidInput(
            "training requires at least two samples".into(),
        ));
    }
    if x.cols() == 0 {
        return Err(Error::InvalidInput(
            "training requires at least one feature".into(),
        ));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("training features".into()));
    }
    let classes = distinct_sorted(y);
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }

    let fitted = match spec {
        ClassifierSpec::Knn { k } => {
            let k = k.fixed("knn.k")?;
            if k == 0 || k > x.rows() {
                return Err(Error::InvalidConfig(format!(
                    "knn.k = {k} out of range [1, {}]",
                    x.rows()
                )));
            }
            Fitted::Knn(KnnFit {
                k,
                train: x.clone(),
                labels: y.to_vec(),
            })
        }
        ClassifierSpec::Gnb { density } => Fitted::Gnb(match density {
            GnbDensity::Gaussian => gnb::fit_gaussian(x, y, &classes),
            GnbDensity::Kde { bandwidth } => {
                let fixed = match bandwidth {
                    AutoOr::Auto => None,
                    AutoOr::Value(h) => {
                        if !(*h > 0.0) {
                            return Err(Error::InvalidConfig(
                                "kde bandwidth must be positive".into(),
                            ));
                        }
                        Some(*h)
                    }
                };
                gnb::fit_kde(x, y, &classes, fixed)
            }
        }),
        ClassifierSpec::Svm { kernel, cost } => {
            let cost = cost.fixed("svm.cost")?;
            if !(cost > 0.0) {
                return Err(Error::InvalidConfig("svm cost must be positive".into()));
            }
            let kernel = match kernel {
                SvmKernelSpec::Linear => ResolvedKernel::Linear,
                SvmKernelSpec::Rbf { sigma } => {
                    let sigma = sigma.fixed("svm.rbf.sigma")?;
                    if !(sigma > 0.0) {
                        return Err(Error::InvalidConfig("rbf sigma must be positive".into()));
                    }
                    ResolvedKernel::Rbf { sigma }
                }
            };
            Fitted::Svm(svm::fit_one_vs_one(x, y, &classes, kernel, cost))
        }
        ClassifierSpec::Nn {
            hidden_units,
            learning_rate,
            epochs,
            seed,
        } => {
            if !(*learning_rate > 0.0) {
                return Err(Error::InvalidConfig(
                    "nn learning rate must be positive".into(),
                ));
            }
            if *epochs == 0 {
                return Err(Error::InvalidConfig("nn epochs must be at least 1".into()));
            }
            let positions: Vec<usize> = y
                .iter()
                .map(|l| classes.binary_search(l).expect("label seen in classes"))
                .collect();
            let shape = NnShape {
                n_in: x.cols(),
                hidden: *hidden_units,
                n_out: classes.len(),
            };
            Fitted::Nn(nn::train(
                shape,
                x,
                &positions,
                *seed,
                *learning_rate,
                *epochs,
            ))
        }
    };

    Ok(Model {
        spec: *spec,
        classes,
        n_features: x.cols(),
        fitted: fitted,
    })
}

impl Model {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    /// Class ids seen in training, ascending.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn check_features(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Predicted class id per row.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.check_features(x)?;
        let n_classes = self.classes.last().copied().unwrap_or(0) + 1;
        Ok(x.iter_rows()
            .map(|row| match &self.fitted {
                Fitted::Knn(fit) => fit.predict_one(row, n_classes),
                Fitted::Gnb(fit) => self.classes[fit.predict_position(row)],
                Fitted::Svm(fit) => fit.predict_one(row, n_classes),
                Fitted::Nn(fit) => self.classes[fit.predict_position(row)],
            })
            .collect())
    }

    /// Normalized class posteriors (columns align with [`Model::classes`]).
    /// Only the probabilistic families (gnb, nn) expose these.
    pub fn posteriors(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        self.check_features(x)?;
        match &self.fitted {
            Fitted::Gnb(fit) => Ok(x.iter_rows().map(|row| fit.posteriors(row)).collect()),
            Fitted::Nn(fit) => Ok(x.iter_rows().map(|row| fit.posteriors_one(row)).collect()),
            Fitted::Knn(_) => Err(Error::NoPosteriors { family: "knn" }),
            Fitted::Svm(_) => Err(Error::NoPosteriors { family: "svm" }),
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization: JSON envelope with base64 little-endian f64 blocks.
// ---------------------------------------------------------------------------

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| Error::MalformedModel(format!("bad base64 block: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::MalformedModel(
            "f64 block length not a multiple of 8".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct MatrixBlock {
    rows: usize,
    cols: usize,
    data: String,
}

fn encode_matrix(m: &Matrix) -> MatrixBlock {
    MatrixBlock {
        rows: m.rows(),
        cols: m.cols(),
        data: encode_f64s(m.data()),
    }
}

fn decode_matrix(b: &MatrixBlock) -> Result<Matrix> {
    let data = decode_f64s(&b.data)?;
    if data.len() != b.rows * b.cols {
        return Err(Error::MalformedModel(format!(
            "matrix block declares {}x{} but carries {} values",
            b.rows,
            b.cols,
            data.len()
        )));
    }
    Ok(Matrix::from_flat(b.rows, b.cols, data))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
enum Payload {
    Knn {
        k: usize,
        labels: Vec<usize>,
        train: MatrixBlock,
    },
    GnbGaussian {
        log_priors: String,
        means: MatrixBlock,
        variances: MatrixBlock,
    },
    GnbKde {
        log_priors: String,
        bandwidths: MatrixBlock,
        class_samples: Vec<MatrixBlock>,
    },
    Svm {
        linear: bool,
        sigma: f64,
        cost: f64,
        pairs: Vec<PairBlock>,
    },
    Nn {
        n_in: usize,
        hidden: usize,
        n_out: usize,
        params: String,
    },
}

#[derive(Serialize, Deserialize)]
struct PairBlock {
    class_lo: usize,
    class_hi: usize,
    bias: f64,
    coef: String,
    support: MatrixBlock,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    family: String,
    spec: ClassifierSpec,
    classes: Vec<usize>,
    n_features: usize,
    payload: Payload,
}

/// Serialize a model to its JSON envelope.
pub fn save_model(model: &Model) -> String {
    let payload = match &model.fitted {
        Fitted::Knn(fit) => Payload::Knn {
            k: fit.k,
            labels: fit.labels.clone(),
            train: encode_matrix(&fit.train),
        },
        Fitted::Gnb(GnbFit::Gaussian {
            log_priors,
            means,
            variances,
        }) => Payload::GnbGaussian {
            log_priors: encode_f64s(log_priors),
            means: encode_matrix(means),
            variances: encode_matrix(variances),
        },
        Fitted::Gnb(GnbFit::Kde {
            log_priors,
            class_samples,
            bandwidths,
        }) => Payload::GnbKde {
            log_priors: encode_f64s(log_priors),
            bandwidths: encode_matrix(bandwidths),
            class_samples: class_samples.iter().map(encode_matrix).collect(),
        },
        Fitted::Svm(fit) => Payload::Svm {
            linear: fit.kernel == ResolvedKernel::Linear,
            sigma: match fit.kernel {
                ResolvedKernel::Linear => 0.0,
                ResolvedKernel::Rbf { sigma } => sigma,
            },
            cost: fit.cost,
            pairs: fit
                .pairs
                .iter()
                .map(|p| PairBlock {
                    class_lo: p.class_lo,
                    class_hi: p.class_hi,
                    bias: p.bias,
                    coef: encode_f64s(&p.coef),
                    support: encode_matrix(&p.support),
                })
                .collect(),
        },
        Fitted::Nn(fit) => Payload::Nn {
            n_in: fit.shape.n_in,
            hidden: fit.shape.hidden,
            n_out: fit.shape.n_out,
            params: encode_f64s(&fit.params),
        },
    };
    let envelope = Envelope {
        family: model.spec.family_name().to_string(),
        spec: model.spec,
        classes: model.classes.clone(),
        n_features: model.n_features,
        payload,
    };
    serde_json::to_string_pretty(&envelope).expect("model envelope serializes")
}

/// Rebuild a model from [`save_model`] output; predictions are identical.
pub fn load_model(text: &str) -> Result<Model> {
    let envelope: Envelope =
        serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
    let fitted = match &envelope.payload {
        Payload::Knn { k, labels, train } => {
            let train = decode_matrix(train)?;
            if labels.len() != train.rows() {
                return Err(Error::MalformedModel(
                    "knn payload labels/matrix mismatch".into(),
                ));
            }
            Fitted::Knn(KnnFit {
                k: *k,
                train,
                labels: labels.clone(),
            })
        }
        Payload::GnbGaussian {
            log_priors,
            means,
            variances,
        } => Fitted::Gnb(GnbFit::Gaussian {
            log_priors: decode_f64s(log_priors)?,
            means: decode_matrix(means)?,
            variances: decode_matrix(variances)?,
        }),
        Payload::GnbKde {
            log_priors,
            bandwidths,
            class_samples,
        } => Fitted::Gnb(GnbFit::Kde {
            log_priors: decode_f64s(log_priors)?,
            bandwidths: decode_matrix(bandwidths)?,
            class_samples: class_samples
                .iter()
                .map(decode_matrix)
                .collect::<Result<Vec<_>>>()?,
        }),
        Payload::Svm {
            linear,
            sigma,
            cost,
            pairs,
        } => {
            let kernel = if *linear {
                ResolvedKernel::Linear
            } else {
                ResolvedKernel::Rbf { sigma: *sigma }
            };
            Fitted::Svm(SvmFit {
                kernel,
                cost: *cost,
                pairs: pairs
                    .iter()
                    .map(|p| {
                        Ok(svm::PairFit {
                            class_lo: p.class_lo,
                            class_hi: p.class_hi,
                            bias: p.bias,
                            coef: decode_f64s(&p.coef)?,
                            support: decode_matrix(&p.support)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            })
        }
        Payload::Nn {
            n_in,
            hidden,
            n_out,
            params,
        } => {
            let shape = NnShape {
                n_in: *n_in,
                hidden: *hidden,
                n_out: *n_out,
            };
            let params = decode_f64s(params)?;
            if params.len() != shape.n_params() {
                return Err(Error::MalformedModel("nn parameter count mismatch".into()));
            }
            Fitted::Nn(NnFit { shape, params })
        }
    };
    Ok(Model {
        spec: envelope.spec,
        classes: envelope.classes,
        n_features: envelope.n_features,
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn blob_data(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = Rng::new(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..8 {
                rows.push(vec![
                    center[0] + rng.next_normal() * 0.5,
                    center[1] + rng.next_normal() * 0.5,
                ]);
                y.push(c);
            }
        }
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn knn_k1_reproduces_training_labels() {
        let (x, y) = blob_data(1);
        let model = train_classifier(
            &ClassifierSpec::Knn {
                k: Tunable::Fixed(1),
            },
            &x,
            &y,
        )
        .unwrap();
        assert_eq!(model.predict(&x).unwrap(), y);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        let err = train_classifier(
            &ClassifierSpec::Knn {
                k: Tunable::Fixed(1),
            },
            &x,
            &[0, 0],
        );
        assert!(matches!(err, Err(Error::SingleClass)));
    }

    #[test]
    fn unresolved_search_rejected() {
        let (x, y) = blob_data(2);
        assert!(matches!(
            train_classifier(&ClassifierSpec::knn_search(), &x, &y),
            Err(Error::UnresolvedParameter(_))
        ));
    }

    #[test]
    fn k_larger_than_training_set_rejected() {
        let (x, y) = blob_data(3);
        assert!(train_classifier(
            &ClassifierSpec::Knn {
                k: Tunable::Fixed(x.rows() + 1),
            },
            &x,
            &y,
        )
        .is_err());
    }

    #[test]
    fn feature_mismatch_detected() {
        let (x, y) = blob_data(4);
        let model = train_classifier(&ClassifierSpec::gnb_gaussian(), &x, &y).unwrap();
        let narrow = Matrix::from_rows(&[vec![1.0]]);
        assert!(matches!(
            model.predict(&narrow),
            Err(Error::FeatureMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn posteriors_only_for_probabilistic_families() {
        let (x, y) = blob_data(5);
        let knn = train_classifier(
            &ClassifierSpec::Knn {
                k: Tunable::Fixed(3),
            },
            &x,
            &y,
        )
        .unwrap();
        assert!(matches!(
            knn.posteriors(&x),
            Err(Error::NoPosteriors { family: "knn" })
        ));
        let gnb = train_classifier(&ClassifierSpec::gnb_kde(), &x, &y).unwrap();
        let post = gnb.posteriors(&x).unwrap();
        for p in &post {
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_families_roundtrip_and_predict_identically() {
        let (x, y) = blob_data(6);
        let (qx, _) = blob_data(7);
        let specs = [
            ClassifierSpec::Knn {
                k: Tunable::Fixed(3),
            },
            ClassifierSpec::gnb_gaussian(),
            ClassifierSpec::gnb_kde(),
            ClassifierSpec::Svm {
                kernel: SvmKernelSpec::Linear,
                cost: Tunable::Fixed(10.0),
            },
            ClassifierSpec::Svm {
                kernel: SvmKernelSpec::Rbf {
                    sigma: Tunable::Fixed(2.0),
                },
                cost: Tunable::Fixed(10.0),
            },
            ClassifierSpec::Nn {
                hidden_units: 6,
                learning_rate: 0.2,
                epochs: 200,
                seed: 42,
            },
        ];
        for spec in &specs {
            let model = train_classifier(spec, &x, &y).unwrap();
            let text = save_model(&model);
            let back = load_model(&text).unwrap();
            assert_eq!(
                model.predict(&qx).unwrap(),
                back.predict(&qx).unwrap(),
                "{}",
                spec.family_name()
            );
            assert_eq!(model.classes(), back.classes());
        }
    }

    #[test]
    fn classes_emitted_are_training_classes() {
        // non-contiguous class ids
        let x = Matrix::from_rows(&[vec![0.0], vec![0.1], vec![5.0], vec![5.1]]);
        let y = vec![2, 2, 7, 7];
        for spec in [
            ClassifierSpec::Knn {
                k: Tunable::Fixed(1),
            },
            ClassifierSpec::gnb_gaussian(),
            ClassifierSpec::Svm {
                kernel: SvmKernelSpec::Linear,
                cost: Tunable::Fixed(1.0),
            },
            ClassifierSpec::Nn {
                hidden_units: 0,
                learning_rate: 0.5,
                epochs: 300,
                seed: 1,
            },
        ] {
            let model = train_classifier(&spec, &x, &y).unwrap();
            let preds = model.predict(&x).unwrap();
            for p in preds {
                assert!(model.classes().contains(&p), "{}", spec.family_name());
            }
        }
    }

    #[test]
    fn nn_determinism_across_runs() {
        let (x, y) = blob_data(8);
        let spec = ClassifierSpec::Nn {
            hidden_units: 5,
            learning_rate: 0.1,
            epochs: 100,
            seed: 7,
        };
        let a = train_classifier(&spec, &x, &y).unwrap();
        let b = train_classifier(&spec, &x, &y).unwrap();
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        assert_eq!(save_model(&a), save_model(&b));
    }
}
