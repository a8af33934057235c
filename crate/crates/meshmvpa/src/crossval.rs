//! Leave-one-run-out cross-validation with nested hyperparameter search.
//!
//! Every fold holds out one run, fits all feature transforms (PCA models,
//! searchlight scores and masks, hyperparameter choices) on the training
//! portion only, trains the classifier, and evaluates on the held-out run.
//! The MAD neighborhood table depends only on voxel coordinates, so it is
//! shared across folds without leaking labels.
//!
//! Hyperparameter grids: k over [1, ⌊√M_tr⌋],
//! log(σ) and log(c) over the integers −10..5 (natural log), searched by
//! inner leave-one-run-out cross-validation on the training runs; ties
//! resolve to the smaller grid value.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines::searchlight::{masked_features, top_voxel};
use crate::baselines::{
    pca_fit, pca_fit_auto, pca_transform, searchlight_scores, searchlight_select, threshold_grid,
    SearchlightConfig,
};
use crate::classifiers::svm::{train_binary_on_kernel, KKT_TOL};
use crate::classifiers::{knn, train_classifier, ClassifierSpec, SvmKernelSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{dot, squared_distance, Matrix};
use crate::mesh::{extract_mad, MeshConfig};
use crate::neighborhood::build_neighborhood_table;
use crate::param::{AutoOr, Tunable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMethod {
    Raw,
    Mad,
    Pca,
    Searchlight,
}

impl FeatureMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureMethod::Raw => "raw",
            FeatureMethod::Mad => "mad",
            FeatureMethod::Pca => "pca",
            FeatureMethod::Searchlight => "searchlight",
        }
    }
}

/// One full pipeline: feature method, its settings, and the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub feature_method: FeatureMethod,
    pub mesh: MeshConfig,
    pub pca_k: AutoOr<usize>,
    pub searchlight: SearchlightConfig,
    pub classifier: ClassifierSpec,
}

impl PipelineSpec {
    pub fn new(feature_method: FeatureMethod, classifier: ClassifierSpec) -> Self {
        PipelineSpec {
            feature_method,
            mesh: MeshConfig::default(),
            pca_k: AutoOr::Auto,
            searchlight: SearchlightConfig::default(),
            classifier,
        }
    }
}

/// Outcome of one evaluated fold.
#[derive(Clone, Debug, Serialize)]
pub struct FoldReport {
    pub held_out_run: usize,
    pub accuracy: f64,
    pub chosen_hyperparams: BTreeMap<String, Value>,
    pub search_grids: BTreeMap<String, Vec<Value>>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SkippedFold {
    pub held_out_run: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub skipped_folds: Vec<SkippedFold>,
    pub per_fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Fraction of positions where the prediction matches the truth.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} truths",
            predicted.len(),
            truth.len()
        )));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// (run id, held-out sample indices) per distinct run, ascending by run id.
pub fn leave_one_run_out_folds(run_ids: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut runs: Vec<usize> = run_ids.to_vec();
    runs.sort_unstable();
    runs.dedup();
    runs.into_iter()
        .map(|r| (r, (0..run_ids.len()).filter(|&i| run_ids[i] == r).collect()))
        .collect()
}

/// Inner-CV fold test sets: leave-one-run-out, degrading to leave-one-sample-
/// out when the training slice holds a single run.
fn inner_fold_sets(run_ids: &[usize]) -> Vec<Vec<usize>> {
    let folds = leave_one_run_out_folds(run_ids);
    if folds.len() >= 2 {
        folds.into_iter().map(|(_, idx)| idx).collect()
    } else {
        (0..run_ids.len()).map(|i| vec![i]).collect()
    }
}

/// k search grid: integers in [1, ⌊√M_tr⌋].
pub fn knn_k_grid(m_tr: usize) -> Vec<usize> {
    let k_max = ((m_tr as f64).sqrt().floor() as usize).max(1);
    (1..=k_max).collect()
}

/// Log-scale grid exponents for σ and c: integers −10..=5 (natural log).
pub fn log_grid() -> Vec<i64> {
    (-10..=5).collect()
}

fn argmax_smallest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate().skip(1) {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

/// Result of hyperparameter selection.
#[derive(Clone, Debug)]
pub struct TuneOutcome {
    /// The spec with every searched field pinned.
    pub spec: ClassifierSpec,
    pub chosen: BTreeMap<String, Value>,
    pub grids: BTreeMap<String, Vec<Value>>,
    /// Mean inner-CV accuracy of the chosen point (None when nothing was
    /// searched).
    pub inner_accuracy: Option<f64>,
}

/// Mean inner-CV accuracy of a fully resolved classifier spec.
pub fn inner_cv_accuracy(
    x: &Matrix,
    y: &[usize],
    run_ids: &[usize],
    spec: &ClassifierSpec,
) -> Result<f64> {
    let folds = inner_fold_sets(run_ids);
    let mut sum = 0.0;
    for fold in &folds {
        let fit_rows: Vec<usize> = (0..x.rows()).filter(|i| !fold.contains(i)).collect();
        let fit_y: Vec<usize> = fit_rows.iter().map(|&i| y[i]).collect();
        let model = train_classifier(spec, &x.select_rows(&fit_rows), &fit_y)?;
        let preds = model.predict(&x.select_rows(fold))?;
        let truth: Vec<usize> = fold.iter().map(|&i| y[i]).collect();
        sum += accuracy(&preds, &truth)?;
    }
    Ok(sum / folds.len() as f64)
}

/// Grid-search the spec's searched fields by inner leave-one-run-out CV.
pub fn tune_hyperparams(
    x: &Matrix,
    y: &[usize],
    run_ids: &[usize],
    spec: &ClassifierSpec,
) -> Result<TuneOutcome> {
    let mut chosen = BTreeMap::new();
    let mut grids = BTreeMap::new();
    match spec {
        ClassifierSpec::Knn { k: Tunable::Search } => {
            let grid = knn_k_grid(x.rows());
            let folds = inner_fold_sets(run_ids);
            let k_max = *grid.last().unwrap();
            let n_class_ids = y.iter().copied().max().unwrap_or(0) + 1;
            let mut per_k_acc = vec![0.0f64; grid.len()];
            for fold in &folds {
                let fit_rows: Vec<usize> = (0..x.rows()).filter(|i| !fold.contains(i)).collect();
                let fit_x = x.select_rows(&fit_rows);
                let fit_y: Vec<usize> = fit_rows.iter().map(|&i| y[i]).collect();
                let k_cap = k_max.min(fit_rows.len());
                let mut per_k_correct = vec![0usize; grid.len()];
                let mut counts = vec![0usize; n_class_ids];
                for &i in fold {
                    let ranked = knn::nearest_labels(&fit_x, &fit_y, x.row(i), k_cap);
                    counts.fill(0);
                    let mut winner = 0;
                    for (pos, &lab) in ranked.iter().enumerate() {
                        counts[lab] += 1;
                        winner = argmax_smallest(&counts);
                        if winner == y[i] {
                            per_k_correct[pos] += 1; // grid index pos <-> k = pos+1
                        }
                    }
                    // candidates beyond the fold's size reuse the full vote
                    for gi in k_cap..grid.len() {
                        if winner == y[i] {
                            per_k_correct[gi] += 1;
                        }
                    }
                }
                for (acc, correct) in per_k_acc.iter_mut().zip(&per_k_correct) {
                    *acc += *correct as f64 / fold.len() as f64;
                }
            }
            let mut best = 0;
            for gi in 1..grid.len() {
                if per_k_acc[gi] > per_k_acc[best] {
                    best = gi;
                }
            }
            chosen.insert("knn_k".into(), json!(grid[best]));
            grids.insert("knn_k".into(), grid.iter().map(|&k| json!(k)).collect());
            Ok(TuneOutcome {
                spec: ClassifierSpec::Knn {
                    k: Tunable::Fixed(grid[best]),
                },
                chosen,
                grids,
                inner_accuracy: Some(per_k_acc[best] / folds.len() as f64),
            })
        }
        ClassifierSpec::Svm { kernel, cost } if spec.has_search() => {
            tune_svm(x, y, run_ids, *kernel, *cost)
        }
        // nothing searched: echo the concrete settings
        other => {
            record_fixed(other, &mut chosen);
            Ok(TuneOutcome {
                spec: *other,
                chosen,
                grids,
                inner_accuracy: None,
            })
        }
    }
}

fn record_fixed(spec: &ClassifierSpec, chosen: &mut BTreeMap<String, Value>) {
    match spec {
        ClassifierSpec::Knn {
            k: Tunable::Fixed(k),
        } => {
            chosen.insert("knn_k".into(), json!(k));
        }
        ClassifierSpec::Knn { .. } => {}
        ClassifierSpec::Gnb { density } => {
            chosen.insert("gnb_density".into(), json!(density));
        }
        ClassifierSpec::Svm { kernel, cost } => {
            if let Tunable::Fixed(c) = cost {
                chosen.insert("svm_cost".into(), json!(c));
            }
            match kernel {
                SvmKernelSpec::Linear => {
                    chosen.insert("svm_kernel".into(), json!("linear"));
                }
                SvmKernelSpec::Rbf { sigma } => {
                    chosen.insert("svm_kernel".into(), json!("rbf"));
                    if let Tunable::Fixed(s) = sigma {
                        chosen.insert("svm_sigma".into(), json!(s));
                    }
                }
            }
        }
        ClassifierSpec::Nn {
            hidden_units,
            learning_rate,
            epochs,
            seed,
        } => {
            chosen.insert("nn_hidden_units".into(), json!(hidden_units));
            chosen.insert("nn_learning_rate".into(), json!(learning_rate));
            chosen.insert("nn_epochs".into(), json!(epochs));
            chosen.insert("nn_seed".into(), json!(seed));
        }
    }
}

/// Per-pair cached Gram data for one inner fold: raw dot products for the
/// linear kernel, squared distances for RBF, so every (σ, c) candidate
/// reuses them.
struct PairCache {
    class_lo: usize,
    class_hi: usize,
    signed: Vec<f64>,
    gram_fit: Matrix,
    gram_eval: Matrix,
}

fn tune_svm(
    x: &Matrix,
    y: &[usize],
    run_ids: &[usize],
    kernel: SvmKernelSpec,
    cost: Tunable<f64>,
) -> Result<TuneOutcome> {
    let rbf = matches!(kernel, SvmKernelSpec::Rbf { .. });
    let sigma_candidates: Vec<(Option<i64>, f64)> = match kernel {
        SvmKernelSpec::Linear => vec![(None, 0.0)],
        SvmKernelSpec::Rbf {
            sigma: Tunable::Fixed(s),
        } => vec![(None, s)],
        SvmKernelSpec::Rbf {
            sigma: Tunable::Search,
        } => log_grid()
            .into_iter()
            .map(|g| (Some(g), (g as f64).exp()))
            .collect(),
    };
    let cost_candidates: Vec<(Option<i64>, f64)> = match cost {
        Tunable::Fixed(c) => vec![(None, c)],
        Tunable::Search => log_grid()
            .into_iter()
            .map(|g| (Some(g), (g as f64).exp()))
            .collect(),
    };

    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let n_class_ids = classes.last().unwrap() + 1;

    let folds = inner_fold_sets(run_ids);
    // cache pair Gram matrices per fold
    let mut fold_caches: Vec<(Vec<usize>, Vec<PairCache>)> = Vec::with_capacity(folds.len());
    for fold in &folds {
        let fit_rows: Vec<usize> = (0..x.rows()).filter(|i| !fold.contains(i)).collect();
        let mut pairs = Vec::new();
        for (ai, &a) in classes.iter().enumerate() {
            for &b in &classes[ai + 1..] {
                let local: Vec<usize> = (0..fit_rows.len())
                    .filter(|&t| y[fit_rows[t]] == a || y[fit_rows[t]] == b)
                    .collect();
                let rows_global: Vec<usize> = local.iter().map(|&t| fit_rows[t]).collect();
                let sub = x.select_rows(&rows_global);
                let signed: Vec<f64> = rows_global
                    .iter()
                    .map(|&i| if y[i] == a { 1.0 } else { -1.0 })
                    .collect();
                let n_sub = sub.rows();
                let mut gram_fit = Matrix::zeros(n_sub, n_sub);
                for i in 0..n_sub {
                    for j in i..n_sub {
                        let v = if rbf {
                            squared_distance(sub.row(i), sub.row(j))
                        } else {
                            dot(sub.row(i), sub.row(j))
                        };
                        gram_fit.set(i, j, v);
                        gram_fit.set(j, i, v);
                    }
                }
                let mut gram_eval = Matrix::zeros(fold.len(), n_sub);
                for (e, &i) in fold.iter().enumerate() {
                    let row = gram_eval.row_mut(e);
                    for t in 0..n_sub {
                        row[t] = if rbf {
                            squared_distance(x.row(i), sub.row(t))
                        } else {
                            dot(x.row(i), sub.row(t))
                        };
                    }
                }
                pairs.push(PairCache {
                    class_lo: a,
                    class_hi: b,
                    signed,
                    gram_fit,
                    gram_eval,
                });
            }
        }
        fold_caches.push((fold.clone(), pairs));
    }

    let to_kernel = |g: f64, sigma: f64| -> f64 {
        if rbf {
            (-g / (2.0 * sigma * sigma)).exp()
        } else {
            g
        }
    };

    let mut best: Option<(f64, usize, usize)> = None; // (acc, sigma idx, cost idx)
    for (si, &(_, sigma)) in sigma_candidates.iter().enumerate() {
        for (ci, &(_, c)) in cost_candidates.iter().enumerate() {
            let mut acc_sum = 0.0;
            for (fold, pairs) in &fold_caches {
                let mut votes = vec![vec![0usize; n_class_ids]; fold.len()];
                for pair in pairs {
                    let n_sub = pair.signed.len();
                    let mut k_fit = Matrix::zeros(n_sub, n_sub);
                    for i in 0..n_sub {
                        for j in 0..n_sub {
                            k_fit.set(i, j, to_kernel(pair.gram_fit.get(i, j), sigma));
                        }
                    }
                    let svm = train_binary_on_kernel(&k_fit, &pair.signed, c, KKT_TOL);
                    for (e, vote) in votes.iter_mut().enumerate() {
                        let mut f = svm.bias;
                        for t in 0..n_sub {
                            if svm.alphas[t] != 0.0 {
                                f += svm.alphas[t]
                                    * pair.signed[t]
                                    * to_kernel(pair.gram_eval.get(e, t), sigma);
                            }
                        }
                        let winner = if f >= 0.0 {
                            pair.class_lo
                        } else {
                            pair.class_hi
                        };
                        vote[winner] += 1;
                    }
                }
                let preds: Vec<usize> = votes.iter().map(|v| argmax_smallest(v)).collect();
                let truth: Vec<usize> = fold.iter().map(|&i| y[i]).collect();
                acc_sum += accuracy(&preds, &truth)?;
            }
            let mean = acc_sum / fold_caches.len() as f64;
            if best.map_or(true, |(b, _, _)| mean > b) {
                best = Some((mean, si, ci));
            }
        }
    }
    let (best_acc, si, ci) = best.expect("non-empty grid");
    let (sigma_log, sigma) = sigma_candidates[si];
    let (cost_log, c) = cost_candidates[ci];

    let mut chosen = BTreeMap::new();
    let mut grids = BTreeMap::new();
    chosen.insert("svm_cost".into(), json!(c));
    if let Some(g) = cost_log {
        chosen.insert("log_cost".into(), json!(g));
    }
    if matches!(cost, Tunable::Search) {
        grids.insert(
            "log_cost".into(),
            log_grid().into_iter().map(|g| json!(g)).collect(),
        );
    }
    let resolved_kernel = match kernel {
        SvmKernelSpec::Linear => {
            chosen.insert("svm_kernel".into(), json!("linear"));
            SvmKernelSpec::Linear
        }
        SvmKernelSpec::Rbf { sigma: spec_sigma } => {
            chosen.insert("svm_kernel".into(), json!("rbf"));
            chosen.insert("svm_sigma".into(), json!(sigma));
            if let Some(g) = sigma_log {
                chosen.insert("log_sigma".into(), json!(g));
            }
            if spec_sigma.is_search() {
                grids.insert(
                    "log_sigma".into(),
                    log_grid().into_iter().map(|g| json!(g)).collect(),
                );
            }
            SvmKernelSpec::Rbf {
                sigma: Tunable::Fixed(sigma),
            }
        }
    };
    Ok(TuneOutcome {
        spec: ClassifierSpec::Svm {
            kernel: resolved_kernel,
            cost: Tunable::Fixed(c),
        },
        chosen,
        grids,
        inner_accuracy: Some(best_acc),
    })
}

/// Feature matrices and bookkeeping for one outer fold.
struct FoldFeatures {
    train_x: Matrix,
    train_y: Vec<usize>,
    train_runs: Vec<usize>,
    test_x: Matrix,
    test_y: Vec<usize>,
    chosen: BTreeMap<String, Value>,
    grids: BTreeMap<String, Vec<Value>>,
    note: Option<String>,
    /// Set when feature tuning already pinned the classifier.
    resolved_classifier: Option<TuneOutcome>,
}

fn prepare_fold_features(
    d: &Dataset,
    spec: &PipelineSpec,
    full_mad: Option<&Matrix>,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<FoldFeatures> {
    let labels = d.labels();
    let run_ids = d.run_ids();
    let train_y: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let test_y: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
    let train_runs: Vec<usize> = train_idx.iter().map(|&i| run_ids[i]).collect();
    let mut chosen = BTreeMap::new();
    let mut grids = BTreeMap::new();

    match spec.feature_method {
        FeatureMethod::Raw => Ok(FoldFeatures {
            train_x: d.intensities().select_rows(train_idx),
            test_x: d.intensities().select_rows(test_idx),
            train_y,
            train_runs,
            test_y,
            chosen,
            grids,
            note: None,
            resolved_classifier: None,
        }),
        FeatureMethod::Mad => {
            chosen.insert("mesh_p".into(), json!(spec.mesh.p));
            if spec.mesh.p == 0 {
                return Ok(FoldFeatures {
                    train_x: d.intensities().select_rows(train_idx),
                    test_x: d.intensities().select_rows(test_idx),
                    train_y,
                    train_runs,
                    test_y,
                    chosen,
                    grids,
                    note: Some("p = 0 reduces the mesh to raw intensities".into()),
                    resolved_classifier: None,
                });
            }
            chosen.insert("mesh_estimator".into(), json!(spec.mesh.estimator.name()));
            chosen.insert("mesh_window".into(), json!(spec.mesh.window));
            if spec.mesh.window == 1 {
                let full = full_mad.expect("cached MAD for window 1");
                Ok(FoldFeatures {
                    train_x: full.select_rows(train_idx),
                    test_x: full.select_rows(test_idx),
                    train_y,
                    train_runs,
                    test_y,
                    chosen,
                    grids,
                    note: None,
                    resolved_classifier: None,
                })
            } else {
                // pooled estimates: labels and runs follow each group's
                // first sample
                let table = build_neighborhood_table(d.coords(), spec.mesh.p)?;
                let train_d = d.select_samples(train_idx)?;
                let test_d = d.select_samples(test_idx)?;
                let train_mad = extract_mad(&train_d, &table, &spec.mesh)?;
                let test_mad = extract_mad(&test_d, &table, &spec.mesh)?;
                let train_y = train_mad
                    .sample_indices()
                    .iter()
                    .map(|&i| train_d.labels()[i])
                    .collect();
                let train_runs = train_mad
                    .sample_indices()
                    .iter()
                    .map(|&i| train_d.run_ids()[i])
                    .collect();
                let test_y = test_mad
                    .sample_indices()
                    .iter()
                    .map(|&i| test_d.labels()[i])
                    .collect();
                Ok(FoldFeatures {
                    train_x: train_mad.values().clone(),
                    test_x: test_mad.values().clone(),
                    train_y,
                    train_runs,
                    test_y,
                    chosen,
                    grids,
                    note: None,
                    resolved_classifier: None,
                })
            }
        }
        FeatureMethod::Pca => {
            let train_x = d.intensities().select_rows(train_idx);
            let test_x = d.intensities().select_rows(test_idx);
            let model = match spec.pca_k {
                AutoOr::Auto => pca_fit_auto(&train_x)?,
                AutoOr::Value(k) => pca_fit(&train_x, k)?,
            };
            chosen.insert("pca_k".into(), json!(model.components.rows()));
            Ok(FoldFeatures {
                train_x: pca_transform(&model, &train_x)?,
                test_x: pca_transform(&model, &test_x)?,
                train_y,
                train_runs,
                test_y,
                chosen,
                grids,
                note: None,
                resolved_classifier: None,
            })
        }
        FeatureMethod::Searchlight => {
            let train_d = d.select_samples(train_idx)?;
            let inner = inner_fold_sets(train_d.run_ids());
            let scores = searchlight_scores(&train_d, &spec.searchlight, &inner)?;
            let train_x_raw = train_d.intensities();
            let test_x_raw = d.intensities().select_rows(test_idx);

            let mut note = None;
            let select_or_fallback = |threshold: f64, note: &mut Option<String>| -> Vec<usize> {
                searchlight_select(&scores, threshold).unwrap_or_else(|_| {
                    *note = Some(format!(
                        "threshold {threshold} selected no voxel; fell back to top-scoring voxel"
                    ));
                    vec![top_voxel(&scores)]
                })
            };

            match spec.searchlight.threshold {
                AutoOr::Value(t) => {
                    let mask = select_or_fallback(t, &mut note);
                    chosen.insert("searchlight_threshold".into(), json!(t));
                    chosen.insert("searchlight_mask_size".into(), json!(mask.len()));
                    Ok(FoldFeatures {
                        train_x: masked_features(train_x_raw, &mask),
                        test_x: masked_features(&test_x_raw, &mask),
                        train_y,
                        train_runs,
                        test_y,
                        chosen,
                        grids,
                        note,
                        resolved_classifier: None,
                    })
                }
                AutoOr::Auto => {
                    // joint grid over threshold (ascending) and any
                    // classifier grid; strict improvement keeps smaller values
                    let mut best: Option<(f64, f64, Vec<usize>, TuneOutcome, Option<String>)> =
                        None;
                    for t in threshold_grid() {
                        let mut cand_note = None;
                        let mask = select_or_fallback(t, &mut cand_note);
                        let cand_x = masked_features(train_x_raw, &mask);
                        let mut outcome =
                            tune_hyperparams(&cand_x, &train_y, &train_runs, &spec.classifier)?;
                        let score = match outcome.inner_accuracy {
                            Some(a) => a,
                            None => {
                                let a = inner_cv_accuracy(
                                    &cand_x,
                                    &train_y,
                                    &train_runs,
                                    &outcome.spec,
                                )?;
                                outcome.inner_accuracy = Some(a);
                                a
                            }
                        };
                        if best.as_ref().map_or(true, |(b, ..)| score > *b) {
                            best = Some((score, t, mask, outcome, cand_note));
                        }
                    }
                    let (_, t, mask, outcome, auto_note) = best.expect("non-empty threshold grid");
                    note = auto_note;
                    chosen.insert("searchlight_threshold".into(), json!(t));
                    chosen.insert("searchlight_mask_size".into(), json!(mask.len()));
                    grids.insert(
                        "searchlight_threshold".into(),
                        threshold_grid().into_iter().map(|v| json!(v)).collect(),
                    );
                    Ok(FoldFeatures {
                        train_x: masked_features(train_x_raw, &mask),
                        test_x: masked_features(&test_x_raw, &mask),
                        train_y,
                        train_runs,
                        test_y,
                        chosen,
                        grids,
                        note,
                        resolved_classifier: Some(outcome),
                    })
                }
            }
        }
    }
}

/// Run the full leave-one-run-out protocol.
pub fn run_cv(d: &Dataset, spec: &PipelineSpec) -> Result<CvReport> {
    let runs = d.runs();
    if runs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs at least 2 runs, found {}",
            runs.len()
        )));
    }
    spec.mesh.validate()?;
    spec.searchlight.validate()?;

    let mut dataset_classes: Vec<usize> = d.labels().to_vec();
    dataset_classes.sort_unstable();
    dataset_classes.dedup();
    let n_classes = d.n_classes();

    // the neighborhood table is coordinate-only, so one MAD extraction
    // serves every fold when estimates are per-sample
    let full_mad =
        if spec.feature_method == FeatureMethod::Mad && spec.mesh.p > 0 && spec.mesh.window == 1 {
            let table = build_neighborhood_table(d.coords(), spec.mesh.p)?;
            Some(extract_mad(d, &table, &spec.mesh)?.values().clone())
        } else {
            None
        };

    let mut folds = Vec::new();
    let mut skipped = Vec::new();
    for (run, test_idx) in leave_one_run_out_folds(d.run_ids()) {
        let train_idx: Vec<usize> = (0..d.n_samples())
            .filter(|&i| d.run_ids()[i] != run)
            .collect();
        let mut train_classes: Vec<usize> = train_idx.iter().map(|&i| d.labels()[i]).collect();
        train_classes.sort_unstable();
        train_classes.dedup();
        if train_classes != dataset_classes {
            let missing: Vec<usize> = dataset_classes
                .iter()
                .copied()
                .filter(|c| !train_classes.contains(c))
                .collect();
            skipped.push(SkippedFold {
                held_out_run: run,
                reason: format!("classes {missing:?} absent from the training fold"),
            });
            continue;
        }

        let ff = prepare_fold_features(d, spec, full_mad.as_ref(), &train_idx, &test_idx)?;
        let outcome = match ff.resolved_classifier {
            Some(o) => o,
            None => tune_hyperparams(&ff.train_x, &ff.train_y, &ff.train_runs, &spec.classifier)?,
        };
        let model = train_classifier(&outcome.spec, &ff.train_x, &ff.train_y)?;
        let predictions = model.predict(&ff.test_x)?;
        let acc = accuracy(&predictions, &ff.test_y)?;
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&p, &t) in predictions.iter().zip(&ff.test_y) {
            confusion[t][p] += 1;
        }
        let mut chosen = ff.chosen;
        chosen.extend(outcome.chosen);
        let mut grids = ff.grids;
        grids.extend(outcome.grids);
        folds.push(FoldReport {
            held_out_run: run,
            accuracy: acc,
            chosen_hyperparams: chosen,
            search_grids: grids,
            confusion,
            predictions,
            note: ff.note,
        });
    }

    if folds.is_empty() {
        return Err(Error::InvalidInput(
            "every fold was skipped (a class is missing from every training split)".into(),
        ));
    }
    let per_fold_accuracy: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let mean_accuracy = per_fold_accuracy.iter().sum::<f64>() / per_fold_accuracy.len() as f64;
    Ok(CvReport {
        folds,
        skipped_folds: skipped,
        per_fold_accuracy,
        mean_accuracy,
    })
}

/// report.json body: pipeline echo, fold reports, summary, provenance.
pub fn report_json(spec: &PipelineSpec, report: &CvReport, provenance: Value) -> Value {
    json!({
        "pipeline": spec,
        "provenance": provenance,
        "folds": report.folds,
        "skipped_folds": report.skipped_folds,
        "per_fold_accuracy": report.per_fold_accuracy,
        "mean_accuracy": report.mean_accuracy,
    })
}

pub fn write_report_json(
    spec: &PipelineSpec,
    report: &CvReport,
    provenance: Value,
    path: &Path,
) -> Result<()> {
    let body = serde_json::to_string_pretty(&report_json(spec, report, provenance))
        .expect("report serializes");
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// bench_table.csv: rows are feature methods, columns classifiers, cells
/// mean accuracy ("n/a" for methods outside this toolkit's scope).
pub fn write_bench_table(
    methods: &[String],
    classifiers: &[String],
    cells: &[Vec<Option<f64>>],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("method");
    for c in classifiers {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (m, row) in methods.iter().zip(cells) {
        out.push_str(m);
        for cell in row {
            out.push(',');
            match cell {
                Some(v) => out.push_str(&format!("{v}")),
                None => out.push_str("n/a"),
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::testutil::random_dataset;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2], &[2, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 0, 1], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn k_grid_is_one_to_sqrt() {
        assert_eq!(knn_k_grid(100), (1..=10).collect::<Vec<_>>());
        assert_eq!(knn_k_grid(99), (1..=9).collect::<Vec<_>>());
        assert_eq!(knn_k_grid(1), vec![1]);
    }

    #[test]
    fn log_grid_spans_minus_ten_to_five() {
        let g = log_grid();
        assert_eq!(g.first(), Some(&-10));
        assert_eq!(g.last(), Some(&5));
        assert_eq!(g.len(), 16);
    }

    #[test]
    fn fold_count_equals_run_count_and_partitions() {
        let d = random_dataset(1, 6, 5, 8, 2);
        let folds = leave_one_run_out_folds(d.run_ids());
        assert_eq!(folds.len(), 5);
        let mut seen = vec![false; d.n_samples()];
        for (_, idx) in &folds {
            for &i in idx {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn cv_reports_eight_folds_on_eight_runs() {
        let d = random_dataset(2, 8, 8, 6, 3);
        let spec = PipelineSpec::new(
            FeatureMethod::Raw,
            ClassifierSpec::Knn {
                k: Tunable::Fixed(3),
            },
        );
        let report = run_cv(&d, &spec).unwrap();
        assert_eq!(report.folds.len(), 8);
        let mean: f64 =
            report.per_fold_accuracy.iter().sum::<f64>() / report.per_fold_accuracy.len() as f64;
        assert!((report.mean_accuracy - mean).abs() < 1e-12);
        for fold in &report.folds {
            let m_te = fold.predictions.len();
            let total: usize = fold.confusion.iter().flatten().sum();
            assert_eq!(total, m_te);
            let trace: usize = (0..fold.confusion.len()).map(|c| fold.confusion[c][c]).sum();
            assert!((fold.accuracy - trace as f64 / m_te as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn fewer_than_two_runs_rejected() {
        let d = random_dataset(3, 5, 1, 10, 2);
        let spec = PipelineSpec::new(FeatureMethod::Raw, ClassifierSpec::gnb_gaussian());
        assert!(run_cv(&d, &spec).is_err());
    }

    #[test]
    fn missing_class_skips_fold() {
        // class 2 lives only in run 0, so holding out run 0 must skip
        let base = random_dataset(4, 4, 2, 9, 3);
        let labels: Vec<usize> = base
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                if base.run_ids()[i] == 1 && l == 2 {
                    0
                } else {
                    l
                }
            })
            .collect();
        let d = Dataset::new(
            base.coords().clone(),
            base.intensities().clone(),
            labels,
            base.run_ids().to_vec(),
            base.class_names().to_vec(),
        )
        .unwrap();
        let spec = PipelineSpec::new(FeatureMethod::Raw, ClassifierSpec::gnb_gaussian());
        let report = run_cv(&d, &spec).unwrap();
        assert_eq!(report.folds.len(), 1);
        assert_eq!(report.skipped_folds.len(), 1);
        assert_eq!(report.skipped_folds[0].held_out_run, 0);
    }

    #[test]
    fn knn_tie_prefers_smaller_k() {
        // trivially separable blobs: every k has inner accuracy 1.0
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut runs = Vec::new();
        let mut rng = crate::rng::Rng::new(9);
        for r in 0..3 {
            for t in 0..12 {
                let c = t % 2;
                rows.push(vec![c as f64 * 50.0 + rng.next_normal() * 0.01]);
                labels.push(c);
                runs.push(r);
            }
        }
        let x = Matrix::from_rows(&rows);
        let outcome = tune_hyperparams(&x, &labels, &runs, &ClassifierSpec::knn_search()).unwrap();
        assert_eq!(outcome.chosen["knn_k"], json!(1));
        assert_eq!(outcome.inner_accuracy, Some(1.0));
    }

    #[test]
    fn mad_p0_equals_raw_per_fold_predictions() {
        let d = random_dataset(7, 6, 3, 10, 2);
        let raw = PipelineSpec::new(FeatureMethod::Raw, ClassifierSpec::knn_search());
        let mut mad0 = PipelineSpec::new(FeatureMethod::Mad, ClassifierSpec::knn_search());
        mad0.mesh.p = 0;
        let a = run_cv(&d, &raw).unwrap();
        let b = run_cv(&d, &mad0).unwrap();
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.predictions, fb.predictions);
            assert_eq!(fa.accuracy, fb.accuracy);
        }
    }

    #[test]
    fn held_out_label_permutation_changes_no_choices() {
        let d = random_dataset(11, 5, 3, 12, 3);
        let spec = PipelineSpec::new(FeatureMethod::Pca, ClassifierSpec::knn_search());
        let report = run_cv(&d, &spec).unwrap();

        // reverse the labels inside run 1 (the held-out fold under test)
        let idx = d.run_sample_indices(1);
        let mut labels = d.labels().to_vec();
        let reversed: Vec<usize> = idx.iter().rev().map(|&i| labels[i]).collect();
        for (&i, &l) in idx.iter().zip(&reversed) {
            labels[i] = l;
        }
        let d2 = Dataset::new(
            d.coords().clone(),
            d.intensities().clone(),
            labels,
            d.run_ids().to_vec(),
            d.class_names().to_vec(),
        )
        .unwrap();
        let report2 = run_cv(&d2, &spec).unwrap();

        let f1 = report.folds.iter().find(|f| f.held_out_run == 1).unwrap();
        let f2 = report2.folds.iter().find(|f| f.held_out_run == 1).unwrap();
        assert_eq!(f1.chosen_hyperparams, f2.chosen_hyperparams);
        assert_eq!(f1.predictions, f2.predictions);
    }

    #[test]
    fn svm_tuning_resolves_both_axes() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut runs = Vec::new();
        let mut rng = crate::rng::Rng::new(20);
        for r in 0..2 {
            for t in 0..10 {
                let c = t % 2;
                rows.push(vec![
                    c as f64 * 4.0 + rng.next_normal() * 0.3,
                    rng.next_normal() * 0.3,
                ]);
                labels.push(c);
                runs.push(r);
            }
        }
        let x = Matrix::from_rows(&rows);
        let outcome =
            tune_hyperparams(&x, &labels, &runs, &ClassifierSpec::svm_rbf_search()).unwrap();
        assert!(outcome.chosen.contains_key("svm_sigma"));
        assert!(outcome.chosen.contains_key("svm_cost"));
        assert_eq!(outcome.grids["log_sigma"].len(), 16);
        assert_eq!(outcome.grids["log_cost"].len(), 16);
        assert!(matches!(outcome.spec, ClassifierSpec::Svm { .. }));
        assert!(outcome.inner_accuracy.unwrap() > 0.8);
    }
}
