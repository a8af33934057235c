//! Voxel time-series datasets: the data model, the on-disk bundle format,
//! hemodynamic label shifting, and run-based splitting.
//!
//! A dataset bundle is a directory of four files:
//!
//! * `manifest.json` — `{"n_voxels", "n_samples", "n_classes", "class_names", "n_runs"}`
//! * `coords.csv` — header `voxel_id,x,y,z`, one row per voxel, ids 0-based strictly increasing
//! * `data.csv` — no header; `n_samples` rows of `n_voxels` comma-separated decimals
//! * `labels.csv` — header `sample_id,run_id,class_id`, ids 0-based strictly increasing
//!
//! Values are written with Rust's shortest round-trip formatting, so
//! `load_dataset(write_dataset(d)) == d` bit for bit.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Spatial voxel positions; pairwise distinct, finite.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelCoordinates {
    entries: Vec<[f64; 3]>,
}

impl VoxelCoordinates {
    pub fn new(entries: Vec<[f64; 3]>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("coordinate list is empty".into()));
        }
        for (j, e) in entries.iter().enumerate() {
            if !e.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("coordinates of voxel {j}")));
            }
        }
        // duplicate detection on exact bit patterns
        let mut seen: std::collections::HashMap<[u64; 3], usize> = std::collections::HashMap::new();
        for (j, e) in entries.iter().enumerate() {
            let key = [e[0].to_bits(), e[1].to_bits(), e[2].to_bits()];
            if let Some(&first) = seen.get(&key) {
                return Err(Error::DuplicateCoordinates {
                    first,
                    second: j,
                    x: e[0],
                    y: e[1],
                    z: e[2],
                });
            }
            seen.insert(key, j);
        }
        Ok(VoxelCoordinates { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, j: usize) -> [f64; 3] {
        self.entries[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64; 3]> {
        self.entries.iter()
    }
}

/// An immutable labeled voxel time-series dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    coords: VoxelCoordinates,
    intensities: Matrix,
    labels: Vec<usize>,
    run_ids: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        coords: VoxelCoordinates,
        intensities: Matrix,
        labels: Vec<usize>,
        run_ids: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let m = intensities.rows();
        let n = intensities.cols();
        if m == 0 {
            return Err(Error::DimensionMismatch("dataset has zero samples".into()));
        }
        if n != coords.len() {
            return Err(Error::DimensionMismatch(format!(
                "intensities have {n} columns but there are {} voxel coordinates",
                coords.len()
            )));
        }
        if labels.len() != m || run_ids.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} intensity rows, {} labels, {} run ids",
                labels.len(),
                run_ids.len()
            )));
        }
        if class_names.is_empty() {
            return Err(Error::InvalidInput("class name list is empty".into()));
        }
        let c = class_names.len();
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(Error::InvalidInput(format!(
                "sample {i} has class id {l} but only {c} classes are declared"
            )));
        }
        if !intensities.is_finite() {
            return Err(Error::NonFinite("intensity matrix".into()));
        }
        Ok(Dataset {
            coords,
            intensities,
            labels,
            run_ids,
            class_names,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.intensities.cols()
    }

    pub fn n_samples(&self) -> usize {
        self.intensities.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn coords(&self) -> &VoxelCoordinates {
        &self.coords
    }

    pub fn intensities(&self) -> &Matrix {
        &self.intensities
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn run_ids(&self) -> &[usize] {
        &self.run_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Distinct run ids, ascending.
    pub fn runs(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.run_ids.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Sample indices of one run, in dataset order.
    pub fn run_sample_indices(&self, run: usize) -> Vec<usize> {
        (0..self.n_samples())
            .filter(|&i| self.run_ids[i] == run)
            .collect()
    }

    /// New dataset holding the given samples (same coords and classes).
    pub fn select_samples(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.coords.clone(),
            self.intensities.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.run_ids[i]).collect(),
            self.class_names.clone(),
        )
    }
}

/// Re-associate labels with later intensity rows to absorb response lag.
///
/// Within each run independently, the label of the run's sample `i` moves to
/// the intensity row at the run's position `i + lag`; the first `lag`
/// intensity rows and the last `lag` labels of each run fall away, so every
/// run shrinks by `lag` samples. `lag = 0` is the identity.
pub fn shift_labels(d: &Dataset, lag: usize) -> Result<Dataset> {
    if lag == 0 {
        return Ok(d.clone());
    }
    let shortest = d
        .runs()
        .iter()
        .map(|&r| d.run_sample_indices(r).len())
        .min()
        .unwrap_or(0);
    if lag >= shortest {
        return Err(Error::LagTooLarge { lag, shortest });
    }
    let mut keep: Vec<usize> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for run in d.runs() {
        let idx = d.run_sample_indices(run);
        for q in lag..idx.len() {
            keep.push(idx[q]);
            labels.push(d.labels()[idx[q - lag]]);
        }
    }
    // restore dataset row order
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by_key(|&t| keep[t]);
    let keep_sorted: Vec<usize> = order.iter().map(|&t| keep[t]).collect();
    let labels_sorted: Vec<usize> = order.iter().map(|&t| labels[t]).collect();

    Dataset::new(
        d.coords().clone(),
        d.intensities().select_rows(&keep_sorted),
        labels_sorted,
        keep_sorted.iter().map(|&i| d.run_ids()[i]).collect(),
        d.class_names().to_vec(),
    )
}

/// Partition into (train, test) by holding out one run.
pub fn split_by_run(d: &Dataset, held_out_run: usize) -> Result<(Dataset, Dataset)> {
    if !d.runs().contains(&held_out_run) {
        return Err(Error::UnknownRun(held_out_run));
    }
    let test_idx = d.run_sample_indices(held_out_run);
    let train_idx: Vec<usize> = (0..d.n_samples())
        .filter(|&i| d.run_ids()[i] != held_out_run)
        .collect();
    Ok((d.select_samples(&train_idx)?, d.select_samples(&test_idx)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n_voxels: usize,
    n_samples: usize,
    n_classes: usize,
    class_names: Vec<String>,
    n_runs: usize,
}

fn read_lines(dir: &Path, name: &str) -> Result<Vec<String>> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn parse_f64(file: &str, line: usize, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::malformed(file, line, format!("cannot parse {field} value {raw:?}")))?;
    if !v.is_finite() {
        return Err(Error::malformed(
            file,
            line,
            format!("non-finite {field} value {raw:?}"),
        ));
    }
    Ok(v)
}

fn parse_usize(file: &str, line: usize, field: &str, raw: &str) -> Result<usize> {
    raw.trim()
        .parse()
        .map_err(|_| Error::malformed(file, line, format!("cannot parse {field} value {raw:?}")))
}

/// Load and validate a dataset bundle directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let manifest_text =
        fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::malformed("manifest.json", 1, e.to_string()))?;
    if manifest.class_names.len() != manifest.n_classes {
        return Err(Error::DimensionMismatch(format!(
            "manifest declares {} classes but lists {} class names",
            manifest.n_classes,
            manifest.class_names.len()
        )));
    }

    // coords.csv
    let coord_lines = read_lines(dir, "coords.csv")?;
    if coord_lines.first().map(String::as_str) != Some("voxel_id,x,y,z") {
        return Err(Error::malformed(
            "coords.csv",
            1,
            "expected header \"voxel_id,x,y,z\"",
        ));
    }
    if coord_lines.len() != manifest.n_voxels + 1 {
        return Err(Error::DimensionMismatch(format!(
            "coords.csv has {} rows but manifest declares {} voxels",
            coord_lines.len().saturating_sub(1),
            manifest.n_voxels
        )));
    }
    let mut entries = Vec::with_capacity(manifest.n_voxels);
    for (row, line) in coord_lines[1..].iter().enumerate() {
        let lineno = row + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::malformed(
                "coords.csv",
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let id = parse_usize("coords.csv", lineno, "voxel_id", fields[0])?;
        if id != row {
            return Err(Error::malformed(
                "coords.csv",
                lineno,
                format!("voxel_id {id} out of order (expected {row})"),
            ));
        }
        entries.push([
            parse_f64("coords.csv", lineno, "x", fields[1])?,
            parse_f64("coords.csv", lineno, "y", fields[2])?,
            parse_f64("coords.csv", lineno, "z", fields[3])?,
        ]);
    }
    let coords = VoxelCoordinates::new(entries)?;

    // data.csv (no header)
    let data_lines = read_lines(dir, "data.csv")?;
    if data_lines.len() != manifest.n_samples {
        return Err(Error::DimensionMismatch(format!(
            "data.csv has {} rows but manifest declares {} samples",
            data_lines.len(),
            manifest.n_samples
        )));
    }
    let mut intensities = Matrix::zeros(manifest.n_samples, manifest.n_voxels);
    for (row, line) in data_lines.iter().enumerate() {
        let lineno = row + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != manifest.n_voxels {
            return Err(Error::malformed(
                "data.csv",
                lineno,
                format!(
                    "expected {} values, found {}",
                    manifest.n_voxels,
                    fields.len()
                ),
            ));
        }
        let dst = intensities.row_mut(row);
        for (j, raw) in fields.iter().enumerate() {
            dst[j] = parse_f64("data.csv", lineno, "intensity", raw)?;
        }
    }

    // labels.csv
    let label_lines = read_lines(dir, "labels.csv")?;
    if label_lines.first().map(String::as_str) != Some("sample_id,run_id,class_id") {
        return Err(Error::malformed(
            "labels.csv",
            1,
            "expected header \"sample_id,run_id,class_id\"",
        ));
    }
    if label_lines.len() != manifest.n_samples + 1 {
        return Err(Error::DimensionMismatch(format!(
            "labels.csv has {} rows but manifest declares {} samples",
            label_lines.len().saturating_sub(1),
            manifest.n_samples
        )));
    }
    let mut labels = Vec::with_capacity(manifest.n_samples);
    let mut run_ids = Vec::with_capacity(manifest.n_samples);
    for (row, line) in label_lines[1..].iter().enumerate() {
        let lineno = row + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::malformed(
                "labels.csv",
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let id = parse_usize("labels.csv", lineno, "sample_id", fields[0])?;
        if id != row {
            return Err(Error::malformed(
                "labels.csv",
                lineno,
                format!("sample_id {id} out of order (expected {row})"),
            ));
        }
        run_ids.push(parse_usize("labels.csv", lineno, "run_id", fields[1])?);
        let class = parse_usize("labels.csv", lineno, "class_id", fields[2])?;
        if class >= manifest.n_classes {
            return Err(Error::malformed(
                "labels.csv",
                lineno,
                format!(
                    "class_id {class} out of range (manifest declares {} classes)",
                    manifest.n_classes
                ),
            ));
        }
        labels.push(class);
    }
    let distinct_runs: BTreeSet<usize> = run_ids.iter().copied().collect();
    if distinct_runs.len() != manifest.n_runs {
        return Err(Error::DimensionMismatch(format!(
            "labels.csv contains {} distinct runs but manifest declares {}",
            distinct_runs.len(),
            manifest.n_runs
        )));
    }

    Dataset::new(coords, intensities, labels, run_ids, manifest.class_names)
}

/// Write a dataset bundle directory (created if absent).
pub fn write_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        n_voxels: d.n_voxels(),
        n_samples: d.n_samples(),
        n_classes: d.n_classes(),
        class_names: d.class_names().to_vec(),
        n_runs: d.runs().len(),
    };
    let manifest_path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, body + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    let mut coords = String::from("voxel_id,x,y,z\n");
    for (j, e) in d.coords().iter().enumerate() {
        coords.push_str(&format!("{j},{},{},{}\n", e[0], e[1], e[2]));
    }
    let coords_path = dir.join("coords.csv");
    fs::write(&coords_path, coords).map_err(|e| Error::io(&coords_path, e))?;

    let mut data = String::new();
    for row in d.intensities().iter_rows() {
        let mut first = true;
        for v in row {
            if !first {
                data.push(',');
            }
            data.push_str(&format!("{v}"));
            first = false;
        }
        data.push('\n');
    }
    let data_path = dir.join("data.csv");
    fs::write(&data_path, data).map_err(|e| Error::io(&data_path, e))?;

    let mut labels = String::from("sample_id,run_id,class_id\n");
    for i in 0..d.n_samples() {
        labels.push_str(&format!("{i},{},{}\n", d.run_ids()[i], d.labels()[i]));
    }
    let labels_path = dir.join("labels.csv");
    fs::write(&labels_path, labels).map_err(|e| Error::io(&labels_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_dataset;

    fn toy_dataset() -> Dataset {
        // 4 voxels, 5 samples, 2 classes, 2 runs
        let coords = VoxelCoordinates::new(vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
        ])
        .unwrap();
        let intensities = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0, 6.0, 7.0, 8.0],
            vec![9.0, 10.0, 11.0, 12.0],
            vec![13.0, 14.0, 15.0, 16.0],
            vec![17.0, 18.0, 19.0, 20.0],
        ]);
        Dataset::new(
            coords,
            intensities,
            vec![0, 1, 0, 1, 0],
            vec![0, 0, 0, 1, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn load_reads_dimensions_back() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&toy_dataset(), dir.path()).unwrap();
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d.n_voxels(), 4);
        assert_eq!(d.n_samples(), 5);
        assert_eq!(d.n_classes(), 2);
        assert_eq!(d.runs(), vec![0, 1]);
    }

    #[test]
    fn short_data_row_names_row_one() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&toy_dataset(), dir.path()).unwrap();
        std::fs::write(
            dir.path().join("data.csv"),
            "1,2,3\n5,6,7,8\n9,10,11,12\n13,14,15,16\n17,18,19,20\n",
        )
        .unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("data.csv"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn duplicate_coordinates_rejected() {
        let coords = VoxelCoordinates::new(vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(matches!(
            coords,
            Err(Error::DuplicateCoordinates {
                first: 0,
                second: 1,
                ..
            })
        ));
    }

    #[test]
    fn roundtrip_is_exact() {
        for seed in 0..5u64 {
            let d = random_dataset(seed, 7, 3, 4, 3);
            let dir = tempfile::tempdir().unwrap();
            write_dataset(&d, dir.path()).unwrap();
            let back = load_dataset(dir.path()).unwrap();
            assert_eq!(d, back);
        }
    }

    #[test]
    fn crlf_accepted() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&toy_dataset(), dir.path()).unwrap();
        for name in ["coords.csv", "data.csv", "labels.csv"] {
            let p = dir.path().join(name);
            let text = std::fs::read_to_string(&p).unwrap().replace('\n', "\r\n");
            std::fs::write(&p, text).unwrap();
        }
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d, toy_dataset());
    }

    #[test]
    fn shift_zero_is_identity() {
        let d = toy_dataset();
        assert_eq!(shift_labels(&d, 0).unwrap(), d);
    }

    #[test]
    fn shift_three_on_single_run() {
        // one run of 5 samples, labels a,b,c,d,e -> rows 3,4 carry a,b
        let coords = VoxelCoordinates::new(vec![[0.0, 0.0, 0.0]]).unwrap();
        let intensities =
            Matrix::from_rows(&[vec![10.0], vec![11.0], vec![12.0], vec![13.0], vec![14.0]]);
        let d = Dataset::new(
            coords,
            intensities,
            vec![0, 1, 2, 3, 4],
            vec![0; 5],
            (0..5).map(|i| format!("c{i}")).collect(),
        )
        .unwrap();
        let s = shift_labels(&d, 3).unwrap();
        assert_eq!(s.n_samples(), 2);
        assert_eq!(s.intensities().row(0), &[13.0]);
        assert_eq!(s.intensities().row(1), &[14.0]);
        assert_eq!(s.labels(), &[0, 1]);
    }

    #[test]
    fn shift_reduces_every_run_by_lag() {
        let d = random_dataset(11, 5, 4, 9, 3);
        let s = shift_labels(&d, 3).unwrap();
        for run in d.runs() {
            assert_eq!(
                s.run_sample_indices(run).len(),
                d.run_sample_indices(run).len() - 3
            );
        }
    }

    #[test]
    fn shift_lag_too_large() {
        let d = toy_dataset(); // shortest run: 2 samples
        assert!(matches!(
            shift_labels(&d, 2),
            Err(Error::LagTooLarge {
                lag: 2,
                shortest: 2
            })
        ));
    }

    #[test]
    fn shift_composes_additively() {
        let d = random_dataset(3, 4, 2, 10, 2);
        let once = shift_labels(&shift_labels(&d, 2).unwrap(), 1).unwrap();
        let direct = shift_labels(&d, 3).unwrap();
        assert_eq!(once.labels(), direct.labels());
        assert_eq!(once.intensities(), direct.intensities());
        assert_eq!(once.run_ids(), direct.run_ids());
    }

    #[test]
    fn split_counts() {
        let d = random_dataset(5, 4, 8, 30, 4);
        let (train, test) = split_by_run(&d, 3).unwrap();
        assert_eq!(train.n_samples(), 210);
        assert_eq!(test.n_samples(), 30);
    }

    #[test]
    fn split_unknown_run() {
        let d = toy_dataset();
        assert!(matches!(split_by_run(&d, 9), Err(Error::UnknownRun(9))));
    }

    #[test]
    fn split_partitions_for_every_run() {
        let d = random_dataset(8, 6, 5, 7, 3);
        for run in d.runs() {
            let (train, test) = split_by_run(&d, run).unwrap();
            assert_eq!(train.n_samples() + test.n_samples(), d.n_samples());
            assert!(test.run_ids().iter().all(|&r| r == run));
            assert!(train.run_ids().iter().all(|&r| r != run));
        }
    }
}
