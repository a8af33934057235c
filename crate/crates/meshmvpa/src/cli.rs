//! Command-line entry point: `synth`, `extract`, `cv`, and `bench`.
//!
//! Exit status: 0 on success, 2 on usage errors (unknown verb or flag,
//! malformed flag value, missing argument), 1 on runtime failures (bad
//! bundle, pipeline error). Partial output files are removed when a verb
//! fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::classifiers::{ClassifierSpec, GnbDensity, SvmKernelSpec};
use crate::crossval::{run_cv, write_bench_table, write_report_json, FeatureMethod, PipelineSpec};
use crate::dataset::{load_dataset, shift_labels, Dataset};
use crate::error::Result;
use crate::mesh::{
    build_table_and_extract, write_mad_binary, write_mad_csv, Estimator, MeshConfig,
};
use crate::param::{AutoOr, Tunable};
use crate::synthgen::{write_synthetic_bundle, SynthConfig};

const USAGE: &str = "\
usage: meshmvpa <command> [flags]

commands:
  synth    --out <dir> [--config <json>] [--seed <int>]
           generate a synthetic dataset bundle
  extract  --data <dir> --p <int> --out <file> [--estimator min-norm|ridge]
           [--lambda <float>] [--window <int>]
           extract mesh arc descriptors (mad.bin, or mad.csv by extension)
  cv       --data <dir> --features raw|mad|pca|searchlight
           --classifier knn|gnb|gnb-kde|svm-linear|svm-rbf|nn --out <file>
           [--lag <int=3>] [--p <int=6>] [--estimator min-norm|ridge]
           [--lambda <float>] [--window <int>] [--pca-k auto|<int>]
           [--threshold auto|<float>] [--k search|<int>]
           [--sigma search|<float>] [--cost search|<float>]
           [--bandwidth auto|<float>] [--hidden <int>] [--lr <float>]
           [--epochs <int>] [--nn-seed <int>]
           leave-one-run-out cross-validation, report.json out
  bench    --data <dir> --out <dir> [--lag <int=3>] [--p <int=6>]
           full feature-by-classifier accuracy grid";

enum CliError {
    Usage(String),
    Runtime(String),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<crate::error::Error> for CliError {
    fn from(e: crate::error::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Files written by the running verb, removed if it fails.
struct Outputs {
    created: Vec<PathBuf>,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            created: Vec::new(),
        }
    }

    fn track(&mut self, path: &Path) {
        self.created.push(path.to_path_buf());
    }

    fn discard_all(&self) {
        for path in self.created.iter().rev() {
            if path.is_dir() {
                let _ = fs::remove_dir_all(path);
            } else {
                let _ = fs::remove_file(path);
            }
        }
    }
}

fn parse_flags(args: &[String], allowed: &[&str]) -> CliResult<BTreeMap<String, String>> {
    let mut flags = BTreeMap::new();
    let mut it = args.iter();
    while let Some(token) = it.next() {
        let name = token
            .strip_prefix("--")
            .ok_or_else(|| usage(format!("expected a flag, found {token:?}")))?;
        if !allowed.contains(&name) {
            return Err(usage(format!("unknown flag --{name}")));
        }
        if flags.contains_key(name) {
            return Err(usage(format!("flag --{name} given twice")));
        }
        let value = it
            .next()
            .ok_or_else(|| usage(format!("flag --{name} needs a value")))?;
        flags.insert(name.to_string(), value.clone());
    }
    Ok(flags)
}

fn required<'a>(flags: &'a BTreeMap<String, String>, name: &str) -> CliResult<&'a str> {
    flags
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| usage(format!("missing required flag --{name}")))
}

fn parse_num<T: std::str::FromStr>(name: &str, raw: &str) -> CliResult<T> {
    raw.parse()
        .map_err(|_| usage(format!("flag --{name}: cannot parse value {raw:?}")))
}

fn opt_num<T: std::str::FromStr>(
    flags: &BTreeMap<String, String>,
    name: &str,
    default: T,
) -> CliResult<T> {
    match flags.get(name) {
        Some(raw) => parse_num(name, raw),
        None => Ok(default),
    }
}

fn tunable_f64(flags: &BTreeMap<String, String>, name: &str) -> CliResult<Tunable<f64>> {
    match flags.get(name).map(String::as_str) {
        None | Some("search") => Ok(Tunable::Search),
        Some(raw) => Ok(Tunable::Fixed(parse_num(name, raw)?)),
    }
}

/// The CLI entry point; returns the process exit status.
pub fn run(args: &[String]) -> i32 {
    let result = match args.first().map(String::as_str) {
        None => Err(usage("missing command")),
        Some("synth") => cmd_synth(&args[1..]),
        Some("extract") => cmd_extract(&args[1..]),
        Some("cv") => cmd_cv(&args[1..]),
        Some("bench") => cmd_bench(&args[1..]),
        Some("--help") | Some("-h") | Some("help") => {
            println!("{USAGE}");
            Ok(())
        }
        Some(other) => Err(usage(format!("unknown command {other:?}"))),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{USAGE}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn cmd_synth(args: &[String]) -> CliResult<()> {
    let flags = parse_flags(args, &["config", "out", "seed"])?;
    let out = PathBuf::from(required(&flags, "out")?);
    let mut cfg: SynthConfig = match flags.get("config") {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Runtime(format!("cannot read config {path}: {e}")))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Runtime(format!("malformed config {path}: {e}")))?
        }
        None => SynthConfig::default(),
    };
    if let Some(raw) = flags.get("seed") {
        cfg.seed = parse_num("seed", raw)?;
    }
    let mut outputs = Outputs::new();
    let created_dir = !out.exists();
    if created_dir {
        outputs.track(&out);
    } else {
        for name in [
            "manifest.json",
            "coords.csv",
            "data.csv",
            "labels.csv",
            "synth_config.json",
        ] {
            outputs.track(&out.join(name));
        }
    }
    match write_synthetic_bundle(&cfg, &out) {
        Ok(dataset) => {
            println!(
                "wrote bundle to {} ({} voxels, {} samples, {} classes, {} runs)",
                out.display(),
                dataset.n_voxels(),
                dataset.n_samples(),
                dataset.n_classes(),
                dataset.runs().len()
            );
            Ok(())
        }
        Err(e) => {
            outputs.discard_all();
            Err(e.into())
        }
    }
}

fn cmd_extract(args: &[String]) -> CliResult<()> {
    let flags = parse_flags(args, &["data", "p", "estimator", "lambda", "window", "out"])?;
    let data = PathBuf::from(required(&flags, "data")?);
    let out = PathBuf::from(required(&flags, "out")?);
    let p: usize = parse_num("p", required(&flags, "p")?)?;
    let estimator = match flags.get("estimator").map(String::as_str) {
        None => Estimator::MinNorm,
        Some(raw) => Estimator::parse(raw).map_err(|_| {
            usage(format!(
                "flag --estimator: expected min-norm or ridge, found {raw:?}"
            ))
        })?,
    };
    let cfg = MeshConfig {
        p,
        estimator,
        ridge_lambda: opt_num(&flags, "lambda", 0.0)?,
        window: opt_num(&flags, "window", 1)?,
    };
    let mut outputs = Outputs::new();
    outputs.track(&out);
    let run = || -> Result<(usize, usize)> {
        let dataset = load_dataset(&data)?;
        let mad = build_table_and_extract(&dataset, &cfg)?;
        if out.extension().map(|e| e == "csv").unwrap_or(false) {
            write_mad_csv(&mad, &out)?;
        } else {
            write_mad_binary(&mad, &out)?;
        }
        Ok((mad.rows(), mad.cols()))
    };
    match run() {
        Ok((rows, cols)) => {
            println!("wrote {} ({rows} x {cols})", out.display());
            Ok(())
        }
        Err(e) => {
            outputs.discard_all();
            Err(e.into())
        }
    }
}

fn classifier_from_flags(
    name: &str,
    flags: &BTreeMap<String, String>,
) -> CliResult<ClassifierSpec> {
    let k = match flags.get("k").map(String::as_str) {
        None | Some("search") => Tunable::Search,
        Some(raw) => Tunable::Fixed(parse_num("k", raw)?),
    };
    let bandwidth = match flags.get("bandwidth").map(String::as_str) {
        None | Some("auto") => AutoOr::Auto,
        Some(raw) => AutoOr::Value(parse_num("bandwidth", raw)?),
    };
    Ok(match name {
        "knn" => ClassifierSpec::Knn { k },
        "gnb" => ClassifierSpec::Gnb {
            density: GnbDensity::Gaussian,
        },
        "gnb-kde" => ClassifierSpec::Gnb {
            density: GnbDensity::Kde { bandwidth },
        },
        "svm-linear" => ClassifierSpec::Svm {
            kernel: SvmKernelSpec::Linear,
            cost: tunable_f64(flags, "cost")?,
        },
        "svm-rbf" => ClassifierSpec::Svm {
            kernel: SvmKernelSpec::Rbf {
                sigma: tunable_f64(flags, "sigma")?,
            },
            cost: tunable_f64(flags, "cost")?,
        },
        "nn" => ClassifierSpec::Nn {
            hidden_units: opt_num(flags, "hidden", 10)?,
            learning_rate: opt_num(flags, "lr", 0.1)?,
            epochs: opt_num(flags, "epochs", 500)?,
            seed: opt_num(flags, "nn-seed", 0)?,
        },
        other => {
            return Err(usage(format!(
                "flag --classifier: unknown value {other:?} (expected knn, gnb, gnb-kde, svm-linear, svm-rbf, or nn)"
            )))
        }
    })
}

fn pipeline_from_flags(flags: &BTreeMap<String, String>) -> CliResult<(PipelineSpec, usize)> {
    let feature_method = match required(flags, "features")? {
        "raw" => FeatureMethod::Raw,
        "mad" => FeatureMethod::Mad,
        "pca" => FeatureMethod::Pca,
        "searchlight" => FeatureMethod::Searchlight,
        other => {
            return Err(usage(format!(
                "flag --features: unknown value {other:?} (expected raw, mad, pca, or searchlight)"
            )))
        }
    };
    let classifier = classifier_from_flags(required(flags, "classifier")?, flags)?;
    let mut spec = PipelineSpec::new(feature_method, classifier);
    spec.mesh.p = opt_num(flags, "p", 6)?;
    if let Some(raw) = flags.get("estimator") {
        spec.mesh.estimator = Estimator::parse(raw).map_err(|_| {
            usage(format!(
                "flag --estimator: expected min-norm or ridge, found {raw:?}"
            ))
        })?;
    }
    spec.mesh.ridge_lambda = opt_num(flags, "lambda", 0.0)?;
    spec.mesh.window = opt_num(flags, "window", 1)?;
    spec.pca_k = match flags.get("pca-k").map(String::as_str) {
        None | Some("auto") => AutoOr::Auto,
        Some(raw) => AutoOr::Value(parse_num("pca-k", raw)?),
    };
    spec.searchlight.threshold = match flags.get("threshold").map(String::as_str) {
        None | Some("auto") => AutoOr::Auto,
        Some(raw) => AutoOr::Value(parse_num("threshold", raw)?),
    };
    let lag = opt_num(flags, "lag", 3)?;
    Ok((spec, lag))
}

fn load_shifted(data: &Path, lag: usize) -> Result<Dataset> {
    let dataset = load_dataset(data)?;
    shift_labels(&dataset, lag)
}

const CV_FLAGS: &[&str] = &[
    "data",
    "features",
    "classifier",
    "out",
    "lag",
    "p",
    "estimator",
    "lambda",
    "window",
    "pca-k",
    "threshold",
    "k",
    "sigma",
    "cost",
    "bandwidth",
    "hidden",
    "lr",
    "epochs",
    "nn-seed",
];

fn cmd_cv(args: &[String]) -> CliResult<()> {
    let flags = parse_flags(args, CV_FLAGS)?;
    let data = PathBuf::from(required(&flags, "data")?);
    let out = PathBuf::from(required(&flags, "out")?);
    let (spec, lag) = pipeline_from_flags(&flags)?;
    let mut outputs = Outputs::new();
    outputs.track(&out);
    let run = || -> Result<f64> {
        let dataset = load_shifted(&data, lag)?;
        let report = run_cv(&dataset, &spec)?;
        let provenance = json!({
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": "cv",
            "data": data.display().to_string(),
            "lag": lag,
            "resolved_config": &spec,
        });
        write_report_json(&spec, &report, provenance, &out)?;
        Ok(report.mean_accuracy)
    };
    match run() {
        Ok(mean) => {
            println!("wrote {} (mean accuracy {mean:.4})", out.display());
            Ok(())
        }
        Err(e) => {
            outputs.discard_all();
            Err(e.into())
        }
    }
}

fn cmd_bench(args: &[String]) -> CliResult<()> {
    let flags = parse_flags(args, &["data", "out", "lag", "p"])?;
    let data = PathBuf::from(required(&flags, "data")?);
    let out = PathBuf::from(required(&flags, "out")?);
    let lag: usize = opt_num(&flags, "lag", 3)?;
    let p: usize = opt_num(&flags, "p", 6)?;

    let mut outputs = Outputs::new();
    let created_dir = !out.exists();
    fs::create_dir_all(&out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    if created_dir {
        outputs.track(&out);
    }

    let classifiers: Vec<(&str, ClassifierSpec)> = vec![
        ("knn", ClassifierSpec::knn_search()),
        ("gnb-kde", ClassifierSpec::gnb_kde()),
        ("svm-linear", ClassifierSpec::svm_linear_search()),
        ("svm-rbf", ClassifierSpec::svm_rbf_search()),
        ("nn", ClassifierSpec::nn_default()),
    ];
    let implemented: Vec<(String, Option<FeatureMethod>)> = vec![
        ("raw".into(), Some(FeatureMethod::Raw)),
        (format!("mad(p={p})"), Some(FeatureMethod::Mad)),
        ("pca".into(), Some(FeatureMethod::Pca)),
        ("searchlight".into(), Some(FeatureMethod::Searchlight)),
        ("ica".into(), None),
        ("kernel-pca".into(), None),
        ("glm".into(), None),
    ];

    let run = |outputs: &mut Outputs| -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
        let dataset = load_shifted(&data, lag)?;
        let mut methods = Vec::new();
        let mut cells = Vec::new();
        for (label, method) in &implemented {
            methods.push(label.clone());
            let mut row = Vec::new();
            for (cname, classifier) in &classifiers {
                let Some(method) = method else {
                    row.push(None);
                    continue;
                };
                let mut spec = PipelineSpec::new(*method, *classifier);
                spec.mesh.p = p;
                let report = run_cv(&dataset, &spec)?;
                let file_label = label.replace("(p=", "-p").replace(')', "");
                let cell_path = out.join(format!("report_{file_label}_{cname}.json"));
                outputs.track(&cell_path);
                let provenance = json!({
                    "tool_version": env!("CARGO_PKG_VERSION"),
                    "command": "bench",
                    "data": data.display().to_string(),
                    "lag": lag,
                    "resolved_config": &spec,
                });
                write_report_json(&spec, &report, provenance, &cell_path)?;
                println!(
                    "{label} + {cname}: mean accuracy {:.4}",
                    report.mean_accuracy
                );
                row.push(Some(report.mean_accuracy));
            }
            cells.push(row);
        }
        Ok((methods, cells))
    };
    match run(&mut outputs) {
        Ok((methods, cells)) => {
            let names: Vec<String> = classifiers.iter().map(|(n, _)| n.to_string()).collect();
            let table_path = out.join("bench_table.csv");
            if let Err(e) = write_bench_table(&methods, &names, &cells, &table_path) {
                outputs.discard_all();
                return Err(e.into());
            }
            println!("wrote {}", table_path.display());
            Ok(())
        }
        Err(e) => {
            outputs.discard_all();
            Err(e.into())
        }
    }
}
