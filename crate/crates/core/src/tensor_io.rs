//! Loading and saving of embedding matrices.
//!
//! Two on-disk formats are supported: a little-endian binary format
//! (`.emb`, magic `EMB1`) and plain numeric CSV (`.csv`). Both decode
//! into [`EmbeddingMatrix`], which stores `f64` row-major values and
//! rejects non-finite entries up front so downstream distance code
//! never has to reason about NaN.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic "EMB1" (4 bytes) | version u32 = 1 | dtype u8 (0 = f32, 1 = f64)
//! | n u64 | d u64 | payload: n*d values, row-major
//! ```
//!
//! The header is 25 bytes; a 1x1 f64 file is exactly 33 bytes.

use std::fs;
use std::path::Path;

use thiserror::Error;

/// Magic bytes at the start of every binary embedding file.
pub const EMB_MAGIC: [u8; 4] = *b"EMB1";
/// The only supported binary format version.
pub const EMB_VERSION: u32 = 1;
/// Size in bytes of the fixed binary header.
pub const EMB_HEADER_LEN: usize = 25;

const OFFSET_MAGIC: usize = 0;
const OFFSET_VERSION: usize = 4;
const OFFSET_DTYPE: usize = 8;
const OFFSET_N: usize = 9;
const OFFSET_D: usize = 17;

/// Errors produced while decoding, validating, or loading embeddings.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic at byte {offset}: expected \"EMB1\", found {found:?}")]
    BadMagic { offset: usize, found: [u8; 4] },
    #[error("unsupported format version {found} at byte {offset} (expected {EMB_VERSION})")]
    UnsupportedVersion { offset: usize, found: u32 },
    #[error("unsupported dtype byte {found} at byte {offset} (expected 0 = f32 or 1 = f64)")]
    UnsupportedDtype { offset: usize, found: u8 },
    #[error("truncated payload: file ends at byte {actual}, expected {expected} bytes")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("non-finite value at byte offset {offset}")]
    NonFiniteValue { offset: usize },
    #[error("non-finite value at element index {index}")]
    NonFiniteElement { index: usize },
    #[error("invalid shape: n = {n}, d = {d}, values = {len}")]
    InvalidShape { n: usize, d: usize, len: usize },
    #[error("declared shape {n} x {d} overflows the payload size")]
    ShapeOverflow { n: u64, d: u64 },
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {col}: cell {cell:?} is not a finite number")]
    NonNumericCell { row: usize, col: usize, cell: String },
    #[error("no data rows")]
    EmptyInput,
    #[error("layer {path:?} has {found} examples, expected {expected}")]
    InconsistentExampleCount { path: String, expected: usize, found: usize },
    #[error("a layer stack needs at least one layer")]
    EmptyStack,
    #[error("unknown file extension for {path:?} (expected .emb or .csv)")]
    UnknownExtension { path: String },
}

/// Element type of a binary embedding payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

/// A dense `n x d` matrix of finite `f64` values, one embedded example
/// per row.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    /// Free-form label for diagnostics, ignored by equality.
    tag: Option<String>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major values.
    ///
    /// # Errors
    ///
    /// `InvalidShape` if `n` or `d` is zero or `values.len() != n * d`,
    /// `NonFiniteElement` if any value is NaN or infinite.
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self, TensorError> {
        if n == 0 || d == 0 || values.len() != n * d {
            return Err(TensorError::InvalidShape { n, d, len: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteElement { index });
        }
        Ok(Self { n, d, values, tag: None })
    }

    /// Number of examples (rows).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Embedding dimension (columns).
    pub fn d(&self) -> usize {
        self.d
    }

    /// All values, row-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One example as a slice of length `d`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    /// Iterator over rows.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    /// Diagnostic label, if any.
    pub fn tag(&self) -> Option<&str> {
        self.tag.as_deref()
    }

    /// Returns the same matrix with a diagnostic label attached.
    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }
}

impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.d == other.d && self.values == other.values
    }
}

/// Per-layer embeddings of one example set: every layer holds the same
/// examples, embedded in possibly different dimensions.
#[derive(Debug, Clone)]
pub struct LayerStack {
    layers: Vec<EmbeddingMatrix>,
}

impl LayerStack {
    /// Builds a stack, checking that every layer agrees on the example
    /// count.
    ///
    /// # Errors
    ///
    /// `EmptyStack` for an empty list, `InconsistentExampleCount` if a
    /// layer disagrees with the first on `n`.
    pub fn new(layers: Vec<EmbeddingMatrix>) -> Result<Self, TensorError> {
        if layers.is_empty() {
            return Err(TensorError::EmptyStack);
        }
        let expected = layers[0].n();
        for (i, layer) in layers.iter().enumerate() {
            if layer.n() != expected {
                return Err(TensorError::InconsistentExampleCount {
                    path: layer.tag().unwrap_or(&format!("layer {i}")).to_owned(),
                    expected,
                    found: layer.n(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Number of layers.
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Number of examples shared by all layers.
    pub fn example_count(&self) -> usize {
        self.layers[0].n()
    }

    /// The layers, in order.
    pub fn layers(&self) -> &[EmbeddingMatrix] {
        &self.layers
    }
}

/// Decodes a binary embedding buffer.
///
/// # Errors
///
/// `BadMagic`, `UnsupportedVersion`, `UnsupportedDtype`,
/// `TruncatedPayload`, `ShapeOverflow`, `InvalidShape`, or
/// `NonFiniteValue`; each error names the byte offset it was detected
/// at.
pub fn parse_emb(bytes: &[u8]) -> Result<EmbeddingMatrix, TensorError> {
    if bytes.len() < EMB_HEADER_LEN {
        return Err(TensorError::TruncatedPayload { expected: EMB_HEADER_LEN, actual: bytes.len() });
    }
    let magic: [u8; 4] = bytes[OFFSET_MAGIC..OFFSET_MAGIC + 4].try_into().unwrap();
    if magic != EMB_MAGIC {
        return Err(TensorError::BadMagic { offset: OFFSET_MAGIC, found: magic });
    }
    let version = u32::from_le_bytes(bytes[OFFSET_VERSION..OFFSET_VERSION + 4].try_into().unwrap());
    if version != EMB_VERSION {
        return Err(TensorError::UnsupportedVersion { offset: OFFSET_VERSION, found: version });
    }
    let dtype = match bytes[OFFSET_DTYPE] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        found => return Err(TensorError::UnsupportedDtype { offset: OFFSET_DTYPE, found }),
    };
    let n = u64::from_le_bytes(bytes[OFFSET_N..OFFSET_N + 8].try_into().unwrap());
    let d = u64::from_le_bytes(bytes[OFFSET_D..OFFSET_D + 8].try_into().unwrap());
    let count = n
        .checked_mul(d)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or(TensorError::ShapeOverflow { n, d })?;
    let width = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let expected = EMB_HEADER_LEN + count.checked_mul(width).ok_or(TensorError::ShapeOverflow { n, d })?;
    if bytes.len() != expected {
        return Err(TensorError::TruncatedPayload { expected, actual: bytes.len() });
    }
    let payload = &bytes[EMB_HEADER_LEN..];
    let mut values = Vec::with_capacity(count);
    match dtype {
        Dtype::F32 => {
            for (i, chunk) in payload.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(chunk.try_into().unwrap());
                if !v.is_finite() {
                    return Err(TensorError::NonFiniteValue { offset: EMB_HEADER_LEN + i * 4 });
                }
                values.push(f64::from(v));
            }
        }
        Dtype::F64 => {
            for (i, chunk) in payload.chunks_exact(8).enumerate() {
                let v = f64::from_le_bytes(chunk.try_into().unwrap());
                if !v.is_finite() {
                    return Err(TensorError::NonFiniteValue { offset: EMB_HEADER_LEN + i * 8 });
                }
                values.push(v);
            }
        }
    }
    EmbeddingMatrix::new(n as usize, d as usize, values)
}

/// Encodes a matrix in the binary format.
///
/// With `Dtype::F32` each value is rounded to the nearest `f32`.
///
/// # Errors
///
/// `NonFiniteElement` if a value overflows the `f32` range.
pub fn write_emb(matrix: &EmbeddingMatrix, dtype: Dtype) -> Result<Vec<u8>, TensorError> {
    let width = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut out = Vec::with_capacity(EMB_HEADER_LEN + matrix.values().len() * width);
    out.extend_from_slice(&EMB_MAGIC);
    out.extend_from_slice(&EMB_VERSION.to_le_bytes());
    out.push(dtype as u8);
    out.extend_from_slice(&(matrix.n() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.d() as u64).to_le_bytes());
    match dtype {
        Dtype::F32 => {
            for (index, &v) in matrix.values().iter().enumerate() {
                let narrowed = v as f32;
                if !narrowed.is_finite() {
                    return Err(TensorError::NonFiniteElement { index });
                }
                out.extend_from_slice(&narrowed.to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in matrix.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Parses a numeric CSV matrix.
///
/// Cells are comma-separated and whitespace-trimmed; rows are
/// newline-separated (CRLF tolerated) and blank lines are skipped. A
/// single leading header row is detected and dropped when none of its
/// cells parses as a number; NaN and infinite cells are rejected as
/// non-numeric, never mistaken for a header.
///
/// # Errors
///
/// `RaggedRows` or `NonNumericCell` (both carry 1-based file
/// coordinates), `EmptyInput` when no data rows remain.
pub fn parse_csv_matrix(text: &str) -> Result<EmbeddingMatrix, TensorError> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut width: Option<usize> = None;
    let mut saw_header = false;
    for (line_index, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, usize> = cells
            .iter()
            .enumerate()
            .map(|(col, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(col),
            })
            .collect();
        match parsed {
            Ok(values) => {
                let expected = *width.get_or_insert(values.len());
                if values.len() != expected {
                    return Err(TensorError::RaggedRows {
                        row: line_index + 1,
                        expected,
                        found: values.len(),
                    });
                }
                rows.push((line_index, values));
            }
            Err(col) => {
                let all_non_numeric =
                    cells.iter().all(|cell| cell.parse::<f64>().is_err());
                if rows.is_empty() && !saw_header && width.is_none() && all_non_numeric {
                    saw_header = true;
                    continue;
                }
                return Err(TensorError::NonNumericCell {
                    row: line_index + 1,
                    col: col + 1,
                    cell: cells[col].to_owned(),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(TensorError::EmptyInput);
    }
    let d = width.unwrap();
    let mut values = Vec::with_capacity(rows.len() * d);
    let n = rows.len();
    for (_, mut row) in rows {
        values.append(&mut row);
    }
    EmbeddingMatrix::new(n, d, values)
}

/// Loads one matrix from disk, dispatching on the file extension
/// (`.emb` binary, `.csv` text).
pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, TensorError> {
    let path = path.as_ref();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let matrix = match ext.as_deref() {
        Some("emb") => parse_emb(&fs::read(path)?)?,
        Some("csv") => parse_csv_matrix(&fs::read_to_string(path)?)?,
        _ => {
            return Err(TensorError::UnknownExtension { path: path.display().to_string() });
        }
    };
    let tag = path.file_stem().and_then(|s| s.to_str()).unwrap_or("layer").to_owned();
    Ok(matrix.with_tag(tag))
}

/// Loads an ordered list of per-layer files into a [`LayerStack`].
///
/// # Errors
///
/// `EmptyStack` for an empty list, `InconsistentExampleCount` when the
/// files disagree on the number of examples, plus any per-file parse
/// error.
pub fn load_layer_stack<P: AsRef<Path>>(paths: &[P]) -> Result<LayerStack, TensorError> {
    if paths.is_empty() {
        return Err(TensorError::EmptyStack);
    }
    let mut layers = Vec::with_capacity(paths.len());
    for path in paths {
        layers.push(load_matrix(path)?);
    }
    LayerStack::new(layers)
}
