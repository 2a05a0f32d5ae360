//! File formats: point clouds (JSON, CSV), precomputed Gram matrices, and
//! the binary kernel-matrix cache with its JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{KernelConfig, KernelKind};
use crate::measures::{Ingest, PointCloud, Points};

/// Magic bytes at the start of a kernel cache file.
pub const CACHE_MAGIC: &[u8; 4] = b"SSPD";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
enum CloudRecord {
    Euclidean {
        dim: usize,
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Opaque {
        items: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

impl CloudRecord {
    fn into_cloud(self) -> Result<PointCloud<f64>> {
        match self {
            CloudRecord::Euclidean { dim, points, weights } => {
                if let Some(bad) = points.iter().position(|p| p.len() != dim) {
                    return Err(Error::Format(format!(
                        "point {bad} has {} coordinates, expected {dim}",
                        points[bad].len()
                    )));
                }
                let w = weights.unwrap_or_else(|| uniform(points.len()));
                let coords = points.into_iter().flatten().collect();
                PointCloud::new(Points::Euclidean { dim, coords }, w, Ingest::Normalize)
            }
            CloudRecord::Opaque { items, weights } => {
                let w = weights.unwrap_or_else(|| uniform(items.len()));
                PointCloud::new(Points::Opaque(items), w, Ingest::Normalize)
            }
        }
    }

    fn from_cloud(c: &PointCloud<f64>) -> Self {
        let weights = Some(c.weights().to_vec());
        match c.points() {
            Points::Euclidean { dim, coords } => CloudRecord::Euclidean {
                dim: *dim,
                points: coords.chunks_exact(*dim).map(<[f64]>::to_vec).collect(),
                weights,
            },
            Points::Opaque(items) => CloudRecord::Opaque { items: items.clone(), weights },
        }
    }
}

/// Parses a cloud from its JSON form. Weights are optional (uniform if
/// absent) and are normalized to unit mass.
pub fn cloud_from_json(text: &str) -> Result<PointCloud<f64>> {
    serde_json::from_str::<CloudRecord>(text)?.into_cloud()
}

pub fn cloud_to_json(cloud: &PointCloud<f64>) -> Result<String> {
    Ok(serde_json::to_string(&CloudRecord::from_cloud(cloud))?)
}

/// Parses a CSV cloud with header `x1,...,xn` or `x1,...,xn,w`.
pub fn cloud_from_csv<R: Read>(reader: R) -> Result<PointCloud<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let weighted = names.last() == Some(&"w");
    let dim = names.len() - usize::from(weighted);
    for (k, name) in names.iter().take(dim).enumerate() {
        if *name != format!("x{}", k + 1) {
            return Err(Error::Format(format!(
                "column {} is {name:?}, expected \"x{}\"",
                k + 1,
                k + 1
            )));
        }
    }
    if dim == 0 {
        return Err(Error::Format("no coordinate columns".into()));
    }
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut values = rec.iter().map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::Format(format!("row {}: bad number {f:?}", row + 1)))
        });
        for _ in 0..dim {
            coords.push(values.next().ok_or_else(|| Error::Format(format!("row {}: too few fields", row + 1)))??);
        }
        weights.push(if weighted {
            values.next().ok_or_else(|| Error::Format(format!("row {}: missing weight", row + 1)))??
        } else {
            1.0
        });
    }
    PointCloud::new(Points::Euclidean { dim, coords }, weights, Ingest::Normalize)
}

pub fn cloud_to_csv<W: Write>(cloud: &PointCloud<f64>, writer: W) -> Result<()> {
    let (dim, coords) = match cloud.points() {
        Points::Euclidean { dim, coords } => (*dim, coords),
        Points::Opaque(_) => return Err(Error::Mode("CSV holds Euclidean clouds only".into())),
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
    header.push("w".into());
    w.write_record(&header)?;
    for (row, &a) in coords.chunks_exact(dim).zip(cloud.weights()) {
        let mut rec: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        rec.push(format!("{a:?}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a cloud, choosing the format from the file extension.
pub fn read_cloud(path: &Path) -> Result<PointCloud<f64>> {
    match extension(path).as_deref() {
        Some("json") => cloud_from_json(&std::fs::read_to_string(path)?),
        Some("csv") => cloud_from_csv(BufReader::new(File::open(path)?)),
        _ => Err(Error::Format(format!(
            "{}: unknown cloud format (use .json or .csv)",
            path.display()
        ))),
    }
}

pub fn write_cloud(path: &Path, cloud: &PointCloud<f64>) -> Result<()> {
    match extension(path).as_deref() {
        Some("json") => Ok(std::fs::write(path, cloud_to_json(cloud)?)?),
        Some("csv") => cloud_to_csv(cloud, BufWriter::new(File::create(path)?)),
        _ => Err(Error::Format(format!("{}: unknown cloud format", path.display()))),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// Dense headerless CSV matrix, one row per line.
pub fn matrix_from_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Format(format!("row {}: bad number {f:?}", r + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Format("rows have different lengths".into()));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

pub fn matrix_to_csv<W: Write>(m: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|x| format!("{x:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Weights file for a precomputed Gram matrix: numbers separated by commas,
/// whitespace or newlines.
pub fn weights_from_text(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("bad weight {s:?}"))))
        .collect()
}

/// Reads a precomputed Gram matrix and its weights sidecar. Weights are
/// rescaled to unit mass.
pub fn read_precomputed(gram: &Path, weights: &Path) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let k = matrix_from_csv(BufReader::new(File::open(gram)?))?;
    let mut w = weights_from_text(&std::fs::read_to_string(weights)?)?;
    let mass: f64 = w.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    w.iter_mut().for_each(|x| *x /= mass);
    Ok((k, w))
}

/// SHA-256 over every cloud's mode, coordinates and weights.
pub fn dataset_digest(clouds: &[PointCloud<f64>]) -> String {
    let mut h = Sha256::new();
    h.update((clouds.len() as u64).to_le_bytes());
    for c in clouds {
        match c.points() {
            Points::Euclidean { dim, coords } => {
                h.update([0u8]);
                h.update((*dim as u64).to_le_bytes());
                h.update((coords.len() as u64).to_le_bytes());
                coords.iter().for_each(|x| h.update(x.to_le_bytes()));
            }
            Points::Opaque(items) => {
                h.update([1u8]);
                h.update((items.len() as u64).to_le_bytes());
                items.iter().for_each(|x| h.update(x.to_le_bytes()));
            }
        }
        c.weights().iter().for_each(|x| h.update(x.to_le_bytes()));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Contents of the JSON file written next to a kernel cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheSidecar {
    pub version: u32,
    pub size: usize,
    pub config: KernelConfig,
    pub dataset_sha256: String,
}

pub fn kind_code(kind: &KernelKind) -> u32 {
    match kind {
        KernelKind::Tr { .. } => 0,
        KernelKind::Igv { .. } => 1,
        KernelKind::Series { .. } => 2,
    }
}

/// Path of the sidecar for a cache file: `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `m` as a cache file (16-byte header, then `m*m` little-endian
/// `f64`s in row-major order) plus its JSON sidecar.
pub fn write_cache(path: &Path, m: &DMatrix<f64>, config: &KernelConfig, digest: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidParameter("kernel matrix must be square".into()));
    }
    let n = u32::try_from(m.nrows())
        .map_err(|_| Error::InvalidParameter("matrix too large for the cache format".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&kind_code(&config.kind).to_le_bytes())?;
    for i in 0..m.nrows() {
        for x in m.row(i).iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    let sidecar = CacheSidecar {
        version: CACHE_VERSION,
        size: m.nrows(),
        config: *config,
        dataset_sha256: digest.to_string(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a cache file; returns the matrix and the kernel-kind code.
pub fn read_cache(path: &Path) -> Result<(DMatrix<f64>, u32)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != CACHE_MAGIC {
        return Err(Error::Format(format!("{}: not a kernel cache", path.display())));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4 bytes"));
    let (version, n, kind) = (word(1), word(2) as usize, word(3));
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let body = &bytes[16..];
    if body.len() != n * n * 8 {
        return Err(Error::Format(format!(
            "cache body has {} bytes, expected {}",
            body.len(),
            n * n * 8
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    Ok((DMatrix::from_row_iterator(n, n, values), kind))
}

pub fn read_sidecar(cache: &Path) -> Result<CacheSidecar> {
    Ok(serde_json::from_str(&std::fs::read_to_string(sidecar_path(cache))?)?)
}
