//! On-disk activation store.
//!
//! A store directory holds `manifest.json`, one headerless row-major
//! little-endian `f32` file per layer, and a `samples.txt` with one sample
//! id per line. Values stay `f32` in memory and a write/read round trip is
//! bit-exact; numerical code widens to `f64` on access.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.txt";
pub const DTYPE_F32LE: &str = "f32le";

/// Activations of one layer for a batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl LayerActivations {
    /// Builds a layer from row-major values, checking shape and finiteness.
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "layer `{name}` must have at least one row and one column, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "layer `{name}`: {} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: name,
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self {
            name,
            rows,
            cols,
            values,
        })
    }

    /// Builds a layer from `f64` rows, rounding each value to `f32`.
    pub fn from_rows_f64(name: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let name = name.into();
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "layer `{name}`: row {bad} has {} values, expected {cols}",
                rows[bad].len()
            )));
        }
        let values = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(name, rows.len(), cols, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        f64::from(self.values[row * self.cols + col])
    }

    /// Column `col` widened to `f64`.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }
}

/// A named batch of samples with activations for an ordered list of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    name: String,
    sample_ids: Vec<String>,
    layers: Vec<LayerActivations>,
}

impl ActivationSet {
    pub fn new(
        name: impl Into<String>,
        sample_ids: Vec<String>,
        layers: Vec<LayerActivations>,
    ) -> Result<Self> {
        let name = name.into();
        let mut seen = HashSet::new();
        for layer in &layers {
            if !seen.insert(layer.name()) {
                return Err(Error::Shape(format!(
                    "set `{name}`: duplicate layer name `{}`",
                    layer.name()
                )));
            }
            if layer.rows() != sample_ids.len() {
                return Err(Error::Shape(format!(
                    "set `{name}`: layer `{}` has {} rows but there are {} sample ids",
                    layer.name(),
                    layer.rows(),
                    sample_ids.len()
                )));
            }
        }
        Ok(Self {
            name,
            sample_ids,
            layers,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn layers(&self) -> &[LayerActivations] {
        &self.layers
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.name().to_owned()).collect()
    }

    pub fn layer(&self, name: &str) -> Result<&LayerActivations> {
        self.layers
            .iter()
            .find(|l| l.name() == name)
            .ok_or_else(|| Error::UnknownLayer {
                requested: name.to_owned(),
                available: self.layer_names(),
            })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub sets: Vec<SetEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetEntry {
    pub set_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_file: Option<String>,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub layer_name: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub file: String,
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `set` into `directory` (created if missing) and returns the manifest.
///
/// Non-finite values cannot reach this point: `LayerActivations::new`
/// rejects them.
pub fn write_activation_set(set: &ActivationSet, directory: &Path) -> Result<Manifest> {
    write_activation_sets(std::slice::from_ref(set), directory)
}

/// Writes several sets under one manifest. Set names must be unique.
pub fn write_activation_sets(sets: &[ActivationSet], directory: &Path) -> Result<Manifest> {
    let mut names = HashSet::new();
    if let Some(dup) = sets.iter().find(|s| !names.insert(s.name())) {
        return Err(Error::InvalidArgument(format!("duplicate set name `{}`", dup.name())));
    }
    fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;

    let mut set_entries = Vec::with_capacity(sets.len());
    for set in sets {
        let mut entries = Vec::with_capacity(set.layers().len());
        for (idx, layer) in set.layers().iter().enumerate() {
            let file = format!("{}_{idx:02}_{}.f32", sanitize(set.name()), sanitize(layer.name()));
            let mut bytes = Vec::with_capacity(layer.values().len() * 4);
            for v in layer.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let path = directory.join(&file);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            entries.push(LayerEntry {
                layer_name: layer.name().to_owned(),
                rows: layer.rows(),
                cols: layer.cols(),
                dtype: DTYPE_F32LE.to_owned(),
                file,
            });
        }

        let samples_file = if sets.len() == 1 {
            SAMPLES_FILE.to_owned()
        } else {
            format!("{}_samples.txt", sanitize(set.name()))
        };
        let samples_path = directory.join(&samples_file);
        let mut samples = String::new();
        for id in set.sample_ids() {
            if id.contains(['\n', '\r']) {
                return Err(Error::InvalidArgument(format!("sample id {id:?} contains a line break")));
            }
            samples.push_str(id);
            samples.push('\n');
        }
        fs::write(&samples_path, samples).map_err(|e| Error::io(&samples_path, e))?;
        set_entries.push(SetEntry {
            set_name: set.name().to_owned(),
            samples_file: Some(samples_file),
            layers: entries,
        });
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        sets: set_entries,
    };
    let manifest_path = directory.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Manifest {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

pub fn read_manifest(directory: &Path) -> Result<Manifest> {
    let path = directory.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: manifest.format_version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

/// Reads the single activation set stored in `directory`.
pub fn read_activation_set(directory: &Path) -> Result<ActivationSet> {
    let manifest = read_manifest(directory)?;
    match manifest.sets.as_slice() {
        [entry] => read_entry(directory, entry),
        sets => Err(Error::Manifest {
            path: directory.join(MANIFEST_FILE),
            message: format!("expected exactly one set, found {}", sets.len()),
        }),
    }
}

/// Reads every set listed in the manifest, in manifest order.
pub fn read_activation_sets(directory: &Path) -> Result<Vec<ActivationSet>> {
    let manifest = read_manifest(directory)?;
    manifest.sets.iter().map(|e| read_entry(directory, e)).collect()
}

/// Reads the set called `set_name` from a manifest that may list several.
pub fn read_named_activation_set(directory: &Path, set_name: &str) -> Result<ActivationSet> {
    let manifest = read_manifest(directory)?;
    let entry = manifest
        .sets
        .iter()
        .find(|s| s.set_name == set_name)
        .ok_or_else(|| Error::Manifest {
            path: directory.join(MANIFEST_FILE),
            message: format!("no set named `{set_name}`"),
        })?;
    read_entry(directory, entry)
}

fn read_entry(directory: &Path, entry: &SetEntry) -> Result<ActivationSet> {
    let mut layers = Vec::with_capacity(entry.layers.len());
    for le in &entry.layers {
        if le.dtype != DTYPE_F32LE {
            return Err(Error::Manifest {
                path: directory.join(MANIFEST_FILE),
                message: format!("layer `{}` has unsupported dtype `{}`", le.layer_name, le.dtype),
            });
        }
        let path = directory.join(&le.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = (le.rows as u64) * (le.cols as u64) * 4;
        if bytes.len() as u64 != expected {
            return Err(Error::ByteLength {
                file: path,
                expected,
                found: bytes.len() as u64,
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        layers.push(LayerActivations::new(le.layer_name.clone(), le.rows, le.cols, values)?);
    }

    let rows = layers.first().map_or(0, LayerActivations::rows);
    let samples_path: Option<PathBuf> = match &entry.samples_file {
        Some(f) => Some(directory.join(f)),
        None => Some(directory.join(SAMPLES_FILE)).filter(|p| p.exists()),
    };
    let sample_ids = match samples_path {
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            text.lines().map(str::to_owned).collect()
        }
        None => (0..rows).map(|i| i.to_string()).collect(),
    };
    ActivationSet::new(entry.set_name.clone(), sample_ids, layers)
}

/// Parses a CSV with header `sample_id,node_0,...` into a layer plus the
/// sample ids in file order.
pub fn import_csv_layer(file: &Path, layer_name: &str) -> Result<(LayerActivations, Vec<String>)> {
    let csv_err = |message: String| Error::Csv {
        path: file.to_owned(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(file)
        .map_err(|e| csv_err(e.to_string()))?;
    let header = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "sample_id" {
        return Err(csv_err(
            "header must be `sample_id,node_0,...,node_{J-1}`".to_owned(),
        ));
    }
    let cols = header.len() - 1;

    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        // line numbers are 1-based and the header occupies line 1
        let lineno = line + 2;
        if record.len() != cols + 1 {
            return Err(csv_err(format!(
                "ragged row at line {lineno}: {} values, expected {cols}",
                record.len().saturating_sub(1)
            )));
        }
        ids.push(record[0].to_owned());
        for cell in record.iter().skip(1) {
            let v: f32 = cell
                .parse()
                .map_err(|_| csv_err(format!("non-numeric cell {cell:?} at line {lineno}")))?;
            values.push(v);
        }
    }
    let layer = LayerActivations::new(layer_name, ids.len(), cols, values)?;
    Ok((layer, ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros_set() -> ActivationSet {
        let layer = LayerActivations::new("conv_1", 2, 3, vec![0.0; 6]).unwrap();
        ActivationSet::new("bg", vec!["a".into(), "b".into()], vec![layer]).unwrap()
    }

    #[test]
    fn zero_matrix_writes_24_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_activation_set(&zeros_set(), dir.path()).unwrap();
        let entry = &manifest.sets[0].layers[0];
        assert_eq!((entry.rows, entry.cols), (2, 3));
        assert_eq!(entry.dtype, "f32le");
        let len = fs::metadata(dir.path().join(&entry.file)).unwrap().len();
        assert_eq!(len, 24);
    }

    #[test]
    fn nan_is_rejected() {
        let err = LayerActivations::new("x", 1, 2, vec![0.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1, .. }));
        assert!(LayerActivations::new("x", 1, 1, vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn set_invariants() {
        let l1 = LayerActivations::new("a", 2, 1, vec![1.0, 2.0]).unwrap();
        let l2 = LayerActivations::new("a", 2, 1, vec![1.0, 2.0]).unwrap();
        assert!(ActivationSet::new("s", vec!["x".into(), "y".into()], vec![l1.clone(), l2]).is_err());
        assert!(ActivationSet::new("s", vec!["x".into()], vec![l1]).is_err());
        assert!(LayerActivations::new("a", 0, 1, vec![]).is_err());
    }

    #[test]
    fn missing_binary_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_activation_set(&zeros_set(), dir.path()).unwrap();
        fs::remove_file(dir.path().join(&manifest.sets[0].layers[0].file)).unwrap();
        assert!(matches!(read_activation_set(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn truncated_binary_is_a_length_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_activation_set(&zeros_set(), dir.path()).unwrap();
        let path = dir.path().join(&manifest.sets[0].layers[0].file);
        fs::write(&path, [0u8; 20]).unwrap();
        assert!(matches!(
            read_activation_set(dir.path()),
            Err(Error::ByteLength { expected: 24, found: 20, .. })
        ));
    }

    #[test]
    fn unsupported_version() {
        let dir = tempfile::tempdir().unwrap();
        write_activation_set(&zeros_set(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            read_activation_set(dir.path()),
            Err(Error::UnsupportedVersion { found: 7, .. })
        ));
    }

    #[test]
    fn manifest_without_samples_file_uses_row_indices() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("l.f32"), [0u8; 8]).unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"{"format_version":1,"sets":[{"set_name":"s","layers":[{"layer_name":"l","rows":2,"cols":1,"dtype":"f32le","file":"l.f32"}]}]}"#,
        )
        .unwrap();
        let set = read_activation_set(dir.path()).unwrap();
        assert_eq!(set.sample_ids(), ["0", "1"]);
    }

    #[test]
    fn csv_import() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        fs::write(&path, "sample_id,node_0,node_1\na,1.0,2.0\nb,3.0,4.0\n").unwrap();
        let (layer, ids) = import_csv_layer(&path, "dense").unwrap();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!((layer.rows(), layer.cols()), (2, 2));
        assert_eq!(layer.values(), [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_ragged_and_non_numeric() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = dir.path().join("r.csv");
        fs::write(&ragged, "sample_id,node_0,node_1\na,1.0\n").unwrap();
        let err = import_csv_layer(&ragged, "l").unwrap_err();
        assert!(err.to_string().contains("ragged"), "{err}");

        let bad = dir.path().join("b.csv");
        fs::write(&bad, "sample_id,node_0\na,abc\n").unwrap();
        let err = import_csv_layer(&bad, "l").unwrap_err();
        assert!(err.to_string().contains("abc"), "{err}");
    }
}
