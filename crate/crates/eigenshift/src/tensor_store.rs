//! Bit-exact reading and writing of checkpoint tensors and labeled
//! activation dumps in the safetensors container format.
//!
//! Layout: an 8-byte little-endian header length `N`, a UTF-8 JSON header
//! of `N` bytes mapping tensor names to `{dtype, shape, data_offsets}`
//! (plus an optional `__metadata__` string map), then the raw
//! little-endian payload buffer. `data_offsets` are relative to the start
//! of the payload buffer, so the file offset of a tensor is
//! `8 + N + begin`.
//!
//! The writer is canonical: names in lexicographic order, payload ranges
//! assigned contiguously from 0, no padding. Files written here therefore
//! survive write → read → write with byte identity. Writes land in a
//! sibling temp file and are renamed into place. Reads are lazy: opening a
//! file parses only the header; payloads are fetched per entry on demand.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read as _, Seek as _, SeekFrom, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Upper bound on the JSON header; anything larger is rejected as corrupt.
const MAX_HEADER_BYTES: u64 = 100 * 1024 * 1024;

/// Reserved entry name for activation-dump hidden states.
pub const HIDDEN_STATES_ENTRY: &str = "hidden_states";
/// Reserved entry name for activation-dump labels.
pub const LABELS_ENTRY: &str = "labels";

const METADATA_KEY: &str = "__metadata__";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    pub fn byte_size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "F32",
            Dtype::F64 => "F64",
            Dtype::U8 => "U8",
        }
    }

    fn parse(s: &str) -> Option<Dtype> {
        match s {
            "F32" => Some(Dtype::F32),
            "F64" => Some(Dtype::F64),
            "U8" => Some(Dtype::U8),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorEntry {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    begin: usize,
    end: usize,
}

impl TensorEntry {
    pub fn byte_len(&self) -> usize {
        self.end - self.begin
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

/// A parsed container: header and entry table only; payload access is lazy.
#[derive(Debug)]
pub struct TensorFile {
    path: PathBuf,
    data_start: u64,
    data_len: usize,
    entries: BTreeMap<String, TensorEntry>,
    metadata: BTreeMap<String, String>,
}

impl TensorFile {
    pub fn open(path: &Path) -> Result<TensorFile> {
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file
            .metadata()
            .map_err(|e| Error::io(path, e))?
            .len();
        if file_len < 8 {
            return Err(Error::Format(format!(
                "truncated header-length prefix at byte 0: file is only {file_len} bytes"
            )));
        }
        let mut prefix = [0u8; 8];
        file.read_exact(&mut prefix).map_err(|e| Error::io(path, e))?;
        let header_len = u64::from_le_bytes(prefix);
        if header_len > MAX_HEADER_BYTES {
            return Err(Error::Format(format!(
                "header length {header_len} at byte 0 exceeds the {MAX_HEADER_BYTES}-byte cap"
            )));
        }
        if 8 + header_len > file_len {
            return Err(Error::Format(format!(
                "header of {header_len} bytes at byte 8 overruns the {file_len}-byte file"
            )));
        }
        let mut header = vec![0u8; header_len as usize];
        file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        let data_start = 8 + header_len;
        let data_len = (file_len - data_start) as usize;

        let root: serde_json::Value = serde_json::from_slice(&header).map_err(|e| {
            Error::Format(format!(
                "invalid JSON header near byte {}: {e}",
                8 + e.column().saturating_sub(1)
            ))
        })?;
        let root = root.as_object().ok_or_else(|| {
            Error::Format("header JSON at byte 8 is not an object".to_string())
        })?;

        let mut metadata = BTreeMap::new();
        let mut entries = BTreeMap::new();
        for (name, value) in root {
            if name == METADATA_KEY {
                let map = value.as_object().ok_or_else(|| {
                    Error::Format(format!("{METADATA_KEY} is not an object"))
                })?;
                for (k, v) in map {
                    let s = v.as_str().ok_or_else(|| {
                        Error::Format(format!("{METADATA_KEY} value for \"{k}\" is not a string"))
                    })?;
                    metadata.insert(k.clone(), s.to_string());
                }
                continue;
            }
            entries.insert(name.clone(), parse_entry(name, value, data_len)?);
        }
        validate_coverage(&entries, data_len, data_start)?;

        Ok(TensorFile {
            path: path.to_path_buf(),
            data_start,
            data_len,
            entries,
            metadata,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Total payload bytes after the header.
    pub fn payload_len(&self) -> usize {
        self.data_len
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn entry(&self, name: &str) -> Result<&TensorEntry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::EntryNotFound(name.to_string()))
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// Raw little-endian payload bytes of one entry, read on demand.
    pub fn read_raw(&self, name: &str) -> Result<Vec<u8>> {
        let entry = self.entry(name)?;
        let mut file = fs::File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        file.seek(SeekFrom::Start(self.data_start + entry.begin as u64))
            .map_err(|e| Error::io(&self.path, e))?;
        let mut buf = vec![0u8; entry.byte_len()];
        file.read_exact(&mut buf).map_err(|e| Error::io(&self.path, e))?;
        Ok(buf)
    }

    /// Entry values widened to `f64` (lossless for F32 and F64 payloads).
    pub fn read_f64(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let entry = self.entry(name)?;
        let shape = entry.shape.clone();
        let dtype = entry.dtype;
        let raw = self.read_raw(name)?;
        let values = match dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
            Dtype::U8 => {
                return Err(Error::Format(format!(
                    "entry \"{name}\" has dtype U8 where a float tensor is required"
                )))
            }
        };
        Ok((shape, values))
    }

    pub fn read_u8(&self, name: &str) -> Result<(Vec<usize>, Vec<u8>)> {
        let entry = self.entry(name)?;
        if entry.dtype != Dtype::U8 {
            return Err(Error::Format(format!(
                "entry \"{name}\" has dtype {} where U8 is required",
                entry.dtype.name()
            )));
        }
        let shape = entry.shape.clone();
        Ok((shape, self.read_raw(name)?))
    }
}

fn parse_entry(name: &str, value: &serde_json::Value, data_len: usize) -> Result<TensorEntry> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Format(format!("entry \"{name}\" is not an object")))?;
    for key in obj.keys() {
        if key != "dtype" && key != "shape" && key != "data_offsets" {
            return Err(Error::Format(format!(
                "entry \"{name}\" has unknown field \"{key}\""
            )));
        }
    }
    let dtype_str = obj
        .get("dtype")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Format(format!("entry \"{name}\" is missing a string dtype")))?;
    let dtype = Dtype::parse(dtype_str).ok_or_else(|| {
        Error::Format(format!("unsupported dtype \"{dtype_str}\" for entry \"{name}\""))
    })?;
    let shape_val = obj
        .get("shape")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Format(format!("entry \"{name}\" is missing a shape array")))?;
    let mut shape = Vec::with_capacity(shape_val.len());
    for v in shape_val {
        let extent = v.as_u64().ok_or_else(|| {
            Error::Format(format!("entry \"{name}\" has a non-integer shape extent {v}"))
        })?;
        shape.push(extent as usize);
    }
    let offsets = obj
        .get("data_offsets")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Format(format!("entry \"{name}\" is missing data_offsets")))?;
    if offsets.len() != 2 {
        return Err(Error::Format(format!(
            "entry \"{name}\" data_offsets must be [begin, end]"
        )));
    }
    let begin = offsets[0].as_u64().ok_or_else(|| {
        Error::Format(format!("entry \"{name}\" has a non-integer begin offset"))
    })? as usize;
    let end = offsets[1]
        .as_u64()
        .ok_or_else(|| Error::Format(format!("entry \"{name}\" has a non-integer end offset")))?
        as usize;
    if begin > end {
        return Err(Error::Format(format!(
            "entry \"{name}\" has begin offset {begin} past end offset {end}"
        )));
    }
    if end > data_len {
        return Err(Error::Format(format!(
            "out-of-bounds tensor \"{name}\": end offset {end} exceeds the {data_len}-byte payload"
        )));
    }
    let elems: usize = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e)).ok_or_else(
        || Error::Format(format!("entry \"{name}\" shape product overflows")),
    )?;
    let expect = elems
        .checked_mul(dtype.byte_size())
        .ok_or_else(|| Error::Format(format!("entry \"{name}\" byte length overflows")))?;
    if expect != end - begin {
        return Err(Error::Format(format!(
            "entry \"{name}\" length mismatch: shape {shape:?} as {} needs {expect} bytes, range holds {}",
            dtype.name(),
            end - begin
        )));
    }
    Ok(TensorEntry {
        dtype,
        shape,
        begin,
        end,
    })
}

/// Entries must tile the payload exactly: non-overlapping, contiguous,
/// in-bounds. `data_start` is only used to report absolute file offsets.
fn validate_coverage(
    entries: &BTreeMap<String, TensorEntry>,
    data_len: usize,
    data_start: u64,
) -> Result<()> {
    let mut ranges: Vec<(&str, usize, usize)> = entries
        .iter()
        .map(|(name, e)| (name.as_str(), e.begin, e.end))
        .collect();
    ranges.sort_by_key(|&(_, begin, end)| (begin, end));
    let mut cursor = 0usize;
    for (name, begin, end) in ranges {
        if begin < cursor {
            return Err(Error::Format(format!(
                "overlapping tensor ranges: \"{name}\" begins at byte {} inside the previous entry",
                data_start as usize + begin
            )));
        }
        if begin > cursor {
            return Err(Error::Format(format!(
                "payload gap before \"{name}\" at byte {}: ranges must be contiguous",
                data_start as usize + cursor
            )));
        }
        cursor = end;
    }
    if cursor != data_len {
        return Err(Error::Format(format!(
            "payload bytes from {} to end of file are not covered by any entry",
            data_start as usize + cursor
        )));
    }
    Ok(())
}

/// One tensor headed for a container file.
#[derive(Clone, Debug)]
pub struct TensorPayload {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

impl TensorPayload {
    pub fn f64(shape: Vec<usize>, values: &[f64]) -> TensorPayload {
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        TensorPayload {
            dtype: Dtype::F64,
            shape,
            bytes,
        }
    }

    pub fn f32_from_f64(shape: Vec<usize>, values: &[f64]) -> TensorPayload {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        TensorPayload {
            dtype: Dtype::F32,
            shape,
            bytes,
        }
    }

    pub fn u8(shape: Vec<usize>, bytes: Vec<u8>) -> TensorPayload {
        TensorPayload {
            dtype: Dtype::U8,
            shape,
            bytes,
        }
    }

    /// Wrap already-encoded bytes (e.g. copied verbatim from another
    /// file) after checking they match the declared dtype and shape.
    pub fn raw(dtype: Dtype, shape: Vec<usize>, bytes: Vec<u8>) -> Result<TensorPayload> {
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .and_then(|c| c.checked_mul(dtype.byte_size()));
        if count != Some(bytes.len()) {
            return Err(Error::Shape(format!(
                "{} bytes cannot hold a {:?} tensor of {}",
                bytes.len(),
                shape,
                dtype.name()
            )));
        }
        Ok(TensorPayload {
            dtype,
            shape,
            bytes,
        })
    }
}

/// Write a container file canonically (sorted names, contiguous offsets,
/// no padding) via a temp file renamed into place.
pub fn write_tensor_file(
    path: &Path,
    tensors: &BTreeMap<String, TensorPayload>,
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let mut header = serde_json::Map::new();
    if !metadata.is_empty() {
        let meta: serde_json::Map<String, serde_json::Value> = metadata
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        header.insert(METADATA_KEY.to_string(), serde_json::Value::Object(meta));
    }
    let mut cursor = 0usize;
    for (name, t) in tensors {
        if name.is_empty() || name == METADATA_KEY {
            return Err(Error::InvalidArgument(format!(
                "\"{name}\" is not a valid tensor name"
            )));
        }
        let elems: usize = t
            .shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::InvalidArgument(format!("entry \"{name}\" shape overflows")))?;
        let expect = elems * t.dtype.byte_size();
        if expect != t.bytes.len() {
            return Err(Error::Shape(format!(
                "entry \"{name}\": shape {:?} as {} needs {expect} bytes, got {}",
                t.shape,
                t.dtype.name(),
                t.bytes.len()
            )));
        }
        let begin = cursor;
        cursor += t.bytes.len();
        let mut obj = serde_json::Map::new();
        obj.insert(
            "dtype".to_string(),
            serde_json::Value::String(t.dtype.name().to_string()),
        );
        obj.insert(
            "shape".to_string(),
            serde_json::Value::Array(
                t.shape
                    .iter()
                    .map(|&e| serde_json::Value::from(e as u64))
                    .collect(),
            ),
        );
        obj.insert(
            "data_offsets".to_string(),
            serde_json::Value::Array(vec![
                serde_json::Value::from(begin as u64),
                serde_json::Value::from(cursor as u64),
            ]),
        );
        header.insert(name.clone(), serde_json::Value::Object(obj));
    }
    let header_bytes = serde_json::to_vec(&serde_json::Value::Object(header))
        .expect("header serialization cannot fail");

    let mut out = Vec::with_capacity(8 + header_bytes.len() + cursor);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for t in tensors.values() {
        out.extend_from_slice(&t.bytes);
    }
    write_atomic(path, &out)
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write bytes to a sibling temp file, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("\"{}\" has no file name", path.display())))?;
    let tmp_name = format!(
        ".{}.tmp.{}.{}",
        file_name.to_string_lossy(),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    );
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => PathBuf::from(&tmp_name),
    };
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.flush().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// A rank-2 float tensor widened to `f64`, remembering its storage dtype.
#[derive(Clone, Debug)]
pub struct WeightMatrix {
    pub matrix: Matrix,
    pub dtype: Dtype,
}

impl WeightMatrix {
    /// Payload in the matrix's storage dtype (narrowing back to F32 when
    /// that is how the source stored it).
    pub fn to_payload(&self) -> TensorPayload {
        let shape = vec![self.matrix.rows(), self.matrix.cols()];
        match self.dtype {
            Dtype::F32 => TensorPayload::f32_from_f64(shape, self.matrix.data()),
            _ => TensorPayload::f64(shape, self.matrix.data()),
        }
    }
}

pub fn load_weight_matrix(tf: &TensorFile, name: &str) -> Result<WeightMatrix> {
    let entry = tf.entry(name)?;
    if entry.shape.len() != 2 {
        return Err(Error::Shape(format!(
            "rank mismatch: entry \"{name}\" has rank {}, expected a rank-2 matrix",
            entry.shape.len()
        )));
    }
    if entry.dtype == Dtype::U8 {
        return Err(Error::Format(format!(
            "entry \"{name}\" has dtype U8 where a float matrix is required"
        )));
    }
    let dtype = entry.dtype;
    let (shape, values) = tf.read_f64(name)?;
    if shape[0] == 0 || shape[1] == 0 {
        return Err(Error::Shape(format!(
            "entry \"{name}\" has empty shape {shape:?}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "entry \"{name}\" contains non-finite values"
        )));
    }
    Ok(WeightMatrix {
        matrix: Matrix::new(shape[0], shape[1], values)?,
        dtype,
    })
}

/// Labeled hidden states: one row per sample, label 1 marks the
/// concept-positive class.
#[derive(Clone, Debug)]
pub struct ActivationDataset {
    pub hidden: Matrix,
    pub labels: Vec<bool>,
    pub meta: BTreeMap<String, String>,
}

impl ActivationDataset {
    pub fn new(
        hidden: Matrix,
        labels: Vec<bool>,
        meta: BTreeMap<String, String>,
    ) -> Result<ActivationDataset> {
        if labels.len() != hidden.rows() {
            return Err(Error::Shape(format!(
                "shape mismatch: {} hidden states but {} labels",
                hidden.rows(),
                labels.len()
            )));
        }
        if !hidden.is_finite() {
            return Err(Error::NonFinite("hidden states contain non-finite values".into()));
        }
        Ok(ActivationDataset {
            hidden,
            labels,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.hidden.cols()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negative_count(&self) -> usize {
        self.len() - self.positive_count()
    }

    /// Rows of the requested class, in dataset order.
    pub fn class_rows(&self, label: bool) -> Vec<&[f64]> {
        (0..self.len())
            .filter(|&i| self.labels[i] == label)
            .map(|i| self.hidden.row(i))
            .collect()
    }
}

pub fn load_activation_dataset(tf: &TensorFile) -> Result<ActivationDataset> {
    let hidden_entry = tf.entry(HIDDEN_STATES_ENTRY)?;
    if hidden_entry.shape.len() != 2 {
        return Err(Error::Shape(format!(
            "rank mismatch: \"{HIDDEN_STATES_ENTRY}\" has rank {}, expected 2",
            hidden_entry.shape.len()
        )));
    }
    let (shape, values) = tf.read_f64(HIDDEN_STATES_ENTRY)?;
    let (labels_shape, raw_labels) = tf.read_u8(LABELS_ENTRY)?;
    if labels_shape.len() != 1 {
        return Err(Error::Shape(format!(
            "rank mismatch: \"{LABELS_ENTRY}\" has rank {}, expected 1",
            labels_shape.len()
        )));
    }
    if labels_shape[0] != shape[0] {
        return Err(Error::Shape(format!(
            "shape mismatch: {} hidden states but {} labels",
            shape[0], labels_shape[0]
        )));
    }
    if shape[0] == 0 || shape[1] == 0 {
        return Err(Error::Degenerate("activation dump is empty".into()));
    }
    let mut labels = Vec::with_capacity(raw_labels.len());
    for (i, &b) in raw_labels.iter().enumerate() {
        match b {
            0 => labels.push(false),
            1 => labels.push(true),
            other => {
                return Err(Error::Format(format!(
                    "invalid label {other} at row {i}: labels must be 0 or 1"
                )))
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "hidden states contain non-finite values".into(),
        ));
    }
    ActivationDataset::new(Matrix::new(shape[0], shape[1], values)?, labels, tf.metadata().clone())
}

pub fn write_activation_dataset(path: &Path, ds: &ActivationDataset) -> Result<()> {
    let mut tensors = BTreeMap::new();
    tensors.insert(
        HIDDEN_STATES_ENTRY.to_string(),
        TensorPayload::f64(vec![ds.hidden.rows(), ds.hidden.cols()], ds.hidden.data()),
    );
    tensors.insert(
        LABELS_ENTRY.to_string(),
        TensorPayload::u8(
            vec![ds.labels.len()],
            ds.labels.iter().map(|&l| l as u8).collect(),
        ),
    );
    write_tensor_file(path, &tensors, &ds.meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        (dir, path)
    }

    fn single_f32_file(path: &Path) {
        let values: Vec<f64> = (0..32).map(|i| i as f64 * 0.25 - 3.0).collect();
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "lm_head".to_string(),
            TensorPayload::f32_from_f64(vec![8, 4], &values),
        );
        write_tensor_file(path, &tensors, &BTreeMap::new()).unwrap();
    }

    #[test]
    fn single_entry_round_trip() {
        let (_d, path) = tmp("one.safetensors");
        single_f32_file(&path);
        let tf = TensorFile::open(&path).unwrap();
        assert_eq!(tf.len(), 1);
        let entry = tf.entry("lm_head").unwrap();
        assert_eq!(entry.shape, vec![8, 4]);
        assert_eq!(entry.dtype, Dtype::F32);

        let raw = tf.read_raw("lm_head").unwrap();
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "lm_head".to_string(),
            TensorPayload {
                dtype: Dtype::F32,
                shape: vec![8, 4],
                bytes: raw.clone(),
            },
        );
        let (_d2, path2) = tmp("two.safetensors");
        write_tensor_file(&path2, &tensors, &BTreeMap::new()).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn empty_header_is_a_valid_file() {
        let (_d, path) = tmp("empty.safetensors");
        write_tensor_file(&path, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        let tf = TensorFile::open(&path).unwrap();
        assert!(tf.is_empty());
    }

    #[test]
    fn f32_values_widen_losslessly() {
        let (_d, path) = tmp("widen.safetensors");
        single_f32_file(&path);
        let tf = TensorFile::open(&path).unwrap();
        let (shape, values) = tf.read_f64("lm_head").unwrap();
        assert_eq!(shape, vec![8, 4]);
        for (i, v) in values.iter().enumerate() {
            assert_eq!(*v, (i as f64 * 0.25 - 3.0) as f32 as f64);
        }
    }

    #[test]
    fn truncated_file_reports_out_of_bounds() {
        let (_d, path) = tmp("trunc.safetensors");
        single_f32_file(&path);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        let err = TensorFile::open(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let msg = err.to_string();
        assert!(msg.contains("out-of-bounds") || msg.contains("not covered"), "{msg}");
    }

    #[test]
    fn short_prefix_rejected() {
        let (_d, path) = tmp("short.safetensors");
        fs::write(&path, [1u8, 2, 3]).unwrap();
        let err = TensorFile::open(&path).unwrap_err();
        assert!(err.to_string().contains("byte 0"), "{err}");
    }

    fn hand_built(header: &str, payload: &[u8], path: &Path) {
        let mut out = Vec::new();
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(payload);
        fs::write(path, out).unwrap();
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let (_d, path) = tmp("overlap.safetensors");
        let header = r#"{"a":{"dtype":"U8","shape":[4],"data_offsets":[0,4]},"b":{"dtype":"U8","shape":[4],"data_offsets":[2,6]}}"#;
        hand_built(header, &[0u8; 6], &path);
        let err = TensorFile::open(&path).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn payload_gap_rejected() {
        let (_d, path) = tmp("gap.safetensors");
        let header = r#"{"a":{"dtype":"U8","shape":[2],"data_offsets":[0,2]},"b":{"dtype":"U8","shape":[2],"data_offsets":[4,6]}}"#;
        hand_built(header, &[0u8; 6], &path);
        let err = TensorFile::open(&path).unwrap_err();
        assert!(err.to_string().contains("gap"), "{err}");
    }

    #[test]
    fn unsupported_dtype_rejected() {
        let (_d, path) = tmp("dtype.safetensors");
        let header = r#"{"a":{"dtype":"BF16","shape":[2],"data_offsets":[0,4]}}"#;
        hand_built(header, &[0u8; 4], &path);
        let err = TensorFile::open(&path).unwrap_err();
        assert!(err.to_string().contains("BF16"), "{err}");
    }

    #[test]
    fn length_mismatch_rejected() {
        let (_d, path) = tmp("len.safetensors");
        let header = r#"{"a":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}}"#;
        hand_built(header, &[0u8; 8], &path);
        let err = TensorFile::open(&path).unwrap_err();
        assert!(err.to_string().contains("length mismatch"), "{err}");
    }

    #[test]
    fn invalid_json_rejected_with_offset() {
        let (_d, path) = tmp("json.safetensors");
        hand_built("{not json", &[], &path);
        let err = TensorFile::open(&path).unwrap_err();
        assert!(err.to_string().contains("invalid JSON header"), "{err}");
    }

    #[test]
    fn missing_entry_is_usage_error() {
        let (_d, path) = tmp("missing.safetensors");
        single_f32_file(&path);
        let tf = TensorFile::open(&path).unwrap();
        let err = tf.read_raw("nope").unwrap_err();
        assert!(matches!(err, Error::EntryNotFound(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rank_one_entry_rejected_as_matrix() {
        let (_d, path) = tmp("rank.safetensors");
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "vec".to_string(),
            TensorPayload::f64(vec![4], &[1.0, 2.0, 3.0, 4.0]),
        );
        write_tensor_file(&path, &tensors, &BTreeMap::new()).unwrap();
        let tf = TensorFile::open(&path).unwrap();
        let err = load_weight_matrix(&tf, "vec").unwrap_err();
        assert!(err.to_string().contains("rank mismatch"), "{err}");
    }

    #[test]
    fn weight_matrix_round_trip_bytes() {
        let (_d, path) = tmp("w.safetensors");
        let values: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let mut tensors = BTreeMap::new();
        tensors.insert("w".to_string(), TensorPayload::f64(vec![8, 4], &values));
        write_tensor_file(&path, &tensors, &BTreeMap::new()).unwrap();
        let tf = TensorFile::open(&path).unwrap();
        let w = load_weight_matrix(&tf, "w").unwrap();
        assert_eq!(w.matrix.data(), &values[..]);
        let back = w.to_payload();
        assert_eq!(back.bytes, tf.read_raw("w").unwrap());
    }

    #[test]
    fn non_finite_weights_rejected() {
        let (_d, path) = tmp("nan.safetensors");
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "w".to_string(),
            TensorPayload::f64(vec![1, 2], &[1.0, f64::NAN]),
        );
        write_tensor_file(&path, &tensors, &BTreeMap::new()).unwrap();
        let tf = TensorFile::open(&path).unwrap();
        assert!(matches!(
            load_weight_matrix(&tf, "w"),
            Err(Error::NonFinite(_))
        ));
    }

    fn dump_file(path: &Path, labels: &[u8]) {
        let n = labels.len();
        let values: Vec<f64> = (0..n * 3).map(|i| i as f64).collect();
        let mut tensors = BTreeMap::new();
        tensors.insert(
            HIDDEN_STATES_ENTRY.to_string(),
            TensorPayload::f64(vec![n, 3], &values),
        );
        tensors.insert(
            LABELS_ENTRY.to_string(),
            TensorPayload::u8(vec![n], labels.to_vec()),
        );
        let mut meta = BTreeMap::new();
        meta.insert("extraction_position".to_string(), "preceding-token".to_string());
        write_tensor_file(path, &tensors, &meta).unwrap();
    }

    #[test]
    fn activation_dataset_loads_with_class_counts() {
        let (_d, path) = tmp("dump.safetensors");
        dump_file(&path, &[1, 0, 1, 0]);
        let tf = TensorFile::open(&path).unwrap();
        let ds = load_activation_dataset(&tf).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.positive_count(), 2);
        assert_eq!(ds.negative_count(), 2);
        assert_eq!(ds.meta.get("extraction_position").unwrap(), "preceding-token");
        assert_eq!(ds.class_rows(true).len(), 2);
    }

    #[test]
    fn bad_label_value_rejected() {
        let (_d, path) = tmp("badlabel.safetensors");
        dump_file(&path, &[1, 0, 2, 0]);
        let tf = TensorFile::open(&path).unwrap();
        let err = load_activation_dataset(&tf).unwrap_err();
        assert!(err.to_string().contains("invalid label 2"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn label_count_mismatch_rejected() {
        let (_d, path) = tmp("mismatch.safetensors");
        let values: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let mut tensors = BTreeMap::new();
        tensors.insert(
            HIDDEN_STATES_ENTRY.to_string(),
            TensorPayload::f64(vec![4, 3], &values),
        );
        tensors.insert(
            LABELS_ENTRY.to_string(),
            TensorPayload::u8(vec![3], vec![1, 0, 1]),
        );
        write_tensor_file(&path, &tensors, &BTreeMap::new()).unwrap();
        let tf = TensorFile::open(&path).unwrap();
        let err = load_activation_dataset(&tf).unwrap_err();
        assert!(err.to_string().contains("shape mismatch"), "{err}");
    }

    #[test]
    fn dataset_write_read_write_is_byte_identical() {
        let (_d, path) = tmp("ds1.safetensors");
        let hidden = Matrix::new(4, 3, (0..12).map(|i| i as f64 * 0.5).collect()).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("labeling".to_string(), "token-lexicon".to_string());
        let ds = ActivationDataset::new(hidden, vec![true, false, true, false], meta).unwrap();
        write_activation_dataset(&path, &ds).unwrap();
        let tf = TensorFile::open(&path).unwrap();
        let ds2 = load_activation_dataset(&tf).unwrap();
        let (_d2, path2) = tmp("ds2.safetensors");
        write_activation_dataset(&path2, &ds2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }
}
