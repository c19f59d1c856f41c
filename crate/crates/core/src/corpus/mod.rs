//! Embedding point clouds and their trajectory metadata.

mod meta;
mod npy;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::metric::{DistanceOracle, MetricSource};

pub use meta::{attach_meta, parse_meta, EpisodeIndex, MetaError, TokenMeta};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed array file at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("non-finite value at row {row}, column {col} (byte {offset})")]
    NonFinite { row: usize, col: usize, offset: u64 },
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("empty cloud: {0}")]
    Empty(String),
}

/// An immutable set of `n` tokens, either with ambient coordinates or an
/// explicit distance oracle.
///
/// Row `i` of the input is token `i` everywhere downstream.
#[derive(Clone)]
pub struct TokenCloud {
    id: String,
    n: usize,
    dim: usize,
    coords: Vec<f64>,
    metric: MetricSource,
    meta: Option<Arc<EpisodeIndex>>,
}

impl fmt::Debug for TokenCloud {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TokenCloud")
            .field("id", &self.id)
            .field("n", &self.n)
            .field("dim", &self.dim)
            .field("metric", &self.metric)
            .field("has_meta", &self.meta.is_some())
            .finish()
    }
}

impl TokenCloud {
    /// Builds an ambient-Euclidean cloud from row-major coordinates.
    pub fn from_rows(
        id: impl Into<String>,
        n: usize,
        dim: usize,
        coords: Vec<f64>,
    ) -> Result<Self, IngestError> {
        if n == 0 || dim == 0 {
            return Err(IngestError::Empty(format!("shape ({n}, {dim})")));
        }
        if coords.len() != n * dim {
            return Err(IngestError::Format {
                offset: 0,
                message: format!("{} values do not fill shape ({n}, {dim})", coords.len()),
            });
        }
        if let Some(k) = coords.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::NonFinite {
                row: k / dim,
                col: k % dim,
                offset: (k * 8) as u64,
            });
        }
        Ok(Self {
            id: id.into(),
            n,
            dim,
            coords,
            metric: MetricSource::AmbientEuclidean,
            meta: None,
        })
    }

    /// Builds a coordinate-free cloud whose distances come from `oracle`.
    pub fn from_oracle(id: impl Into<String>, oracle: Arc<dyn DistanceOracle>) -> Result<Self, IngestError> {
        let n = oracle.len();
        if n == 0 {
            return Err(IngestError::Empty("oracle has no tokens".into()));
        }
        Ok(Self {
            id: id.into(),
            n,
            dim: 0,
            coords: Vec::new(),
            metric: MetricSource::ExplicitOracle(oracle),
            meta: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Ambient dimension; zero for oracle-backed clouds.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> &MetricSource {
        &self.metric
    }

    /// Row-major coordinates (empty for oracle-backed clouds).
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn meta(&self) -> Option<&EpisodeIndex> {
        self.meta.as_deref()
    }

    pub(crate) fn with_index(mut self, index: EpisodeIndex) -> Self {
        self.meta = Some(Arc::new(index));
        self
    }

    /// Returns a copy whose distances are all multiplied by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        out.coords.iter_mut().for_each(|v| *v *= lambda);
        if let MetricSource::ExplicitOracle(inner) = &self.metric {
            out.metric = MetricSource::ExplicitOracle(Arc::new(ScaledOracle {
                inner: inner.clone(),
                lambda,
            }));
        }
        out
    }
}

#[derive(Debug)]
struct ScaledOracle {
    inner: Arc<dyn DistanceOracle>,
    lambda: f64,
}

impl DistanceOracle for ScaledOracle {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        self.lambda * self.inner.distance(i, j)
    }
}

/// Loads a rank-2 `<f4`/`<f8` npy file. Values are widened to f64.
pub fn load_array_file(path: impl AsRef<Path>) -> Result<TokenCloud, IngestError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let arr = npy::read(&bytes)?;
    TokenCloud::from_rows(path.display().to_string(), arr.rows, arr.cols, arr.data)
}

/// Decodes npy bytes from any reader.
pub fn read_array<R: std::io::Read>(id: &str, input: R) -> Result<TokenCloud, IngestError> {
    let arr = npy::read_from(input)?;
    TokenCloud::from_rows(id, arr.rows, arr.cols, arr.data)
}

pub fn write_array<W: Write>(out: &mut W, cloud: &TokenCloud) -> std::io::Result<()> {
    npy::write(out, cloud.n, cloud.dim, &cloud.coords)
}

pub fn write_array_file(path: impl AsRef<Path>, cloud: &TokenCloud) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_array(&mut out, cloud)?;
    out.flush()
}

/// Loads a rectangular numeric CSV; one token per row.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<TokenCloud, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(&path.display().to_string(), file, has_header)
}

pub fn read_csv<R: std::io::Read>(
    id: &str,
    input: R,
    has_header: bool,
) -> Result<TokenCloud, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut coords = Vec::new();
    let mut dim = None;
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let width = *dim.get_or_insert(record.len());
        if record.len() != width {
            return Err(IngestError::Csv {
                line,
                message: format!("ragged row: {} fields, expected {width}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| IngestError::Csv {
                line,
                message: format!("column {col}: {cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(IngestError::Csv {
                    line,
                    message: format!("column {col}: non-finite value"),
                });
            }
            coords.push(v);
        }
        n += 1;
    }
    TokenCloud::from_rows(id, n, dim.unwrap_or(0), coords)
}

/// Writes coordinates as headerless CSV using shortest round-trip formatting.
pub fn write_csv<W: Write>(out: &mut W, cloud: &TokenCloud) -> std::io::Result<()> {
    for i in 0..cloud.n {
        let row = cloud.row(i);
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{v:?}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_basic() {
        let cloud = read_csv("t", "0,0\n3,4\n".as_bytes(), false).unwrap();
        assert_eq!((cloud.len(), cloud.dim()), (2, 2));
        assert_eq!(cloud.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_ragged_row_names_line() {
        match read_csv("t", "0,0\n3\n".as_bytes(), false).unwrap_err() {
            IngestError::Csv { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_non_numeric() {
        let err = read_csv("t", "x,y\n1,2\n1,a\n".as_bytes(), true).unwrap_err();
        assert!(matches!(err, IngestError::Csv { line: 3, .. }), "{err}");
    }

    #[test]
    fn csv_grid_round_trip() {
        let coords: Vec<f64> = (0..20).map(|k| (k as f64) * 0.1 + 1.0 / 3.0).collect();
        let cloud = TokenCloud::from_rows("grid", 10, 2, coords.clone()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &cloud).unwrap();
        let back = read_csv("grid", buf.as_slice(), false).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.coords()), bits(&coords));
    }

    #[test]
    fn npy_round_trip() {
        let cloud = TokenCloud::from_rows("a", 2, 3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_array(&mut buf, &cloud).unwrap();
        let back = read_array("a", buf.as_slice()).unwrap();
        assert_eq!((back.len(), back.dim()), (2, 3));
        assert_eq!(back.coords(), cloud.coords());
    }

    #[test]
    fn npy_nan_names_row() {
        let mut coords = vec![0.0; 10 * 2];
        coords[7 * 2 + 1] = f64::NAN;
        let cloud = TokenCloud {
            id: "x".into(),
            n: 10,
            dim: 2,
            coords,
            metric: MetricSource::AmbientEuclidean,
            meta: None,
        };
        let mut buf = Vec::new();
        write_array(&mut buf, &cloud).unwrap();
        match read_array("x", buf.as_slice()).unwrap_err() {
            IngestError::NonFinite { row, col, offset } => {
                assert_eq!((row, col), (7, 1));
                assert_eq!(offset as usize, buf.len() - (20 - 15) * 8);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_empty() {
        assert!(TokenCloud::from_rows("e", 0, 3, vec![]).is_err());
        assert!(read_csv("e", "".as_bytes(), false).is_err());
    }
}
