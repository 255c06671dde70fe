//! On-disk feature stores: a JSON manifest next to little-endian binary
//! payloads, each behind an 8-byte magic header.
//!
//! ```text
//! manifest.json
//! features.bin    "PFSTOR01" + N×L f32
//! labels.bin      "PFLABL01" + N u32
//! domains.bin     "PFDOMN01" + N u32       (optional)
//! targets.bin     "PFTARG01" + N×D f32     (optional)
//! sample_ids.bin  "PFSIDS01" + N u64       (optional; ids default to 0..N)
//! ```

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ranpac_core::feature_store::{validate_record, Dataset, DatasetManifest, FeatureRecord};
use ranpac_core::linalg::Matrix;
use thiserror::Error;

pub const MANIFEST: &str = "manifest.json";
pub const FEATURES: &str = "features.bin";
pub const LABELS: &str = "labels.bin";
pub const DOMAINS: &str = "domains.bin";
pub const TARGETS: &str = "targets.bin";
pub const SAMPLE_IDS: &str = "sample_ids.bin";

pub const MAGIC_FEATURES: &[u8; 8] = b"PFSTOR01";
pub const MAGIC_LABELS: &[u8; 8] = b"PFLABL01";
pub const MAGIC_DOMAINS: &[u8; 8] = b"PFDOMN01";
pub const MAGIC_TARGETS: &[u8; 8] = b"PFTARG01";
pub const MAGIC_SAMPLE_IDS: &[u8; 8] = b"PFSIDS01";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: invalid manifest: {source}", path.display())]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("invalid record: {0}")]
    Invalid(#[from] ranpac_core::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(bytes)?;
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn payload(magic: &[u8; 8], capacity: usize) -> Vec<u8> {
    let mut v = Vec::with_capacity(8 + capacity);
    v.extend_from_slice(magic);
    v
}

/// Validates `records` against `manifest` and writes the store into `dir`.
/// The manifest's split counts must add up to `records.len()`; dtype,
/// endianness and version are normalised. Returns the manifest written.
pub fn write_store(dir: &Path, manifest: &DatasetManifest, records: &[FeatureRecord], targets: Option<&Matrix>) -> Result<DatasetManifest> {
    let mut manifest = manifest.clone();
    manifest.dtype = DatasetManifest::DTYPE.to_string();
    manifest.endianness = DatasetManifest::ENDIANNESS.to_string();
    manifest.format_version = DatasetManifest::FORMAT_VERSION;
    if let Some(t) = targets {
        manifest.target_dim = Some(t.cols());
    }
    // Full validation (dimensions, finiteness, labels, ids, domains, targets).
    let dataset = Dataset::new(manifest, records.to_vec(), targets.cloned())?;
    let manifest = dataset.manifest;

    let with_domain = records.iter().filter(|r| r.domain_id.is_some()).count();
    if with_domain != 0 && with_domain != records.len() {
        return Err(StoreError::Invalid(ranpac_core::Error::InvalidParameter("domain ids must be given for all records or none".into())));
    }
    if with_domain != 0 && manifest.domains.is_none() {
        return Err(StoreError::Invalid(ranpac_core::Error::MissingDomains));
    }

    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let l = manifest.feature_dim;
    let mut features = payload(MAGIC_FEATURES, records.len() * l * 4);
    let mut labels = payload(MAGIC_LABELS, records.len() * 4);
    for r in records {
        for v in &r.features {
            features.extend_from_slice(&v.to_le_bytes());
        }
        labels.extend_from_slice(&r.label.to_le_bytes());
    }
    let put = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        write_atomic(&p, bytes).map_err(io_err(&p))
    };
    put(FEATURES, &features)?;
    put(LABELS, &labels)?;
    if with_domain != 0 {
        let mut domains = payload(MAGIC_DOMAINS, records.len() * 4);
        for r in records {
            domains.extend_from_slice(&r.domain_id.unwrap_or(0).to_le_bytes());
        }
        put(DOMAINS, &domains)?;
    }
    if let Some(t) = targets {
        let mut out = payload(MAGIC_TARGETS, t.rows() * t.cols() * 4);
        for v in t.as_slice() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        put(TARGETS, &out)?;
    }
    if records.iter().enumerate().any(|(i, r)| r.sample_id != i as u64) {
        let mut ids = payload(MAGIC_SAMPLE_IDS, records.len() * 8);
        for r in records {
            ids.extend_from_slice(&r.sample_id.to_le_bytes());
        }
        put(SAMPLE_IDS, &ids)?;
    }
    let json = serde_json::to_vec_pretty(&manifest).map_err(|source| StoreError::Manifest { path: dir.join(MANIFEST), source })?;
    put(MANIFEST, &json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read(&path).map_err(io_err(&path))?;
    let manifest: DatasetManifest = serde_json::from_slice(&text).map_err(|source| StoreError::Manifest { path: path.clone(), source })?;
    if manifest.dtype != DatasetManifest::DTYPE {
        return Err(StoreError::Unsupported(format!("dtype {:?}", manifest.dtype)));
    }
    if manifest.endianness != DatasetManifest::ENDIANNESS {
        return Err(StoreError::Unsupported(format!("endianness {:?}", manifest.endianness)));
    }
    if manifest.format_version != DatasetManifest::FORMAT_VERSION {
        return Err(StoreError::Unsupported(format!("format version {}", manifest.format_version)));
    }
    if manifest.feature_dim == 0 || manifest.num_classes == 0 {
        return Err(StoreError::Corrupt("feature_dim and num_classes must be positive".into()));
    }
    Ok(manifest)
}

/// Opens a payload, checks its magic and that its length is exactly
/// `8 + n·width` bytes.
fn open_payload(dir: &Path, name: &str, magic: &[u8; 8], n: u64, width: u64) -> Result<BufReader<File>> {
    let path = dir.join(name);
    let file = File::open(&path).map_err(io_err(&path))?;
    let len = file.metadata().map_err(io_err(&path))?.len();
    let expected = 8 + n * width;
    if len != expected {
        return Err(StoreError::Corrupt(format!("{name}: {len} bytes, expected {expected}")));
    }
    let mut r = BufReader::new(file);
    let mut head = [0u8; 8];
    r.read_exact(&mut head).map_err(io_err(&path))?;
    if &head != magic {
        return Err(StoreError::Corrupt(format!("{name}: bad magic {:?}", String::from_utf8_lossy(&head))));
    }
    Ok(r)
}

fn open_optional(dir: &Path, name: &str, magic: &[u8; 8], n: u64, width: u64) -> Result<Option<BufReader<File>>> {
    if dir.join(name).exists() {
        open_payload(dir, name, magic, n, width).map(Some)
    } else {
        Ok(None)
    }
}

/// Streams records in stored order, one row at a time.
pub struct RecordStream {
    dir: PathBuf,
    manifest: DatasetManifest,
    features: BufReader<File>,
    labels: BufReader<File>,
    domains: Option<BufReader<File>>,
    ids: Option<BufReader<File>>,
    row: Vec<u8>,
    next: u64,
    total: u64,
}

impl RecordStream {
    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    fn read_one(&mut self) -> Result<FeatureRecord> {
        let i = self.next;
        let err = |name: &str| {
            let path = self.dir.join(name);
            move |source| StoreError::Io { path, source }
        };
        self.features.read_exact(&mut self.row).map_err(err(FEATURES))?;
        let features = self.row.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        let mut w = [0u8; 4];
        self.labels.read_exact(&mut w).map_err(err(LABELS))?;
        let label = u32::from_le_bytes(w);
        let domain_id = match &mut self.domains {
            Some(d) => {
                d.read_exact(&mut w).map_err(err(DOMAINS))?;
                Some(u32::from_le_bytes(w))
            }
            None => None,
        };
        let sample_id = match &mut self.ids {
            Some(r) => {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(err(SAMPLE_IDS))?;
                u64::from_le_bytes(b)
            }
            None => i,
        };
        let rec = FeatureRecord { features, label, domain_id, sample_id };
        validate_record(&rec, self.manifest.feature_dim, self.manifest.num_classes, i as usize)?;
        if let (Some(d), Some(names)) = (rec.domain_id, &self.manifest.domains) {
            if d as usize >= names.len() {
                return Err(StoreError::Corrupt(format!("sample {i}: domain id {d} out of range")));
            }
        }
        Ok(rec)
    }
}

impl Iterator for RecordStream {
    type Item = Result<FeatureRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.total {
            return None;
        }
        let out = self.read_one();
        self.next = if out.is_ok() { self.next + 1 } else { self.total };
        Some(out)
    }
}

/// Opens a store for streaming. File lengths are checked up front.
pub fn read_store(dir: &Path) -> Result<(DatasetManifest, RecordStream)> {
    let manifest = read_manifest(dir)?;
    let n = manifest.total_samples();
    let l = manifest.feature_dim as u64;
    let features = open_payload(dir, FEATURES, MAGIC_FEATURES, n, 4 * l)?;
    let labels = open_payload(dir, LABELS, MAGIC_LABELS, n, 4)?;
    let domains = open_optional(dir, DOMAINS, MAGIC_DOMAINS, n, 4)?;
    let ids = open_optional(dir, SAMPLE_IDS, MAGIC_SAMPLE_IDS, n, 8)?;
    let stream = RecordStream {
        dir: dir.to_path_buf(),
        manifest: manifest.clone(),
        features,
        labels,
        domains,
        ids,
        row: vec![0u8; 4 * manifest.feature_dim],
        next: 0,
        total: n,
    };
    Ok((manifest, stream))
}

fn read_targets(dir: &Path, manifest: &DatasetManifest) -> Result<Option<Matrix>> {
    let Some(d) = manifest.target_dim else {
        return Ok(None);
    };
    let n = manifest.total_samples();
    let Some(mut r) = open_optional(dir, TARGETS, MAGIC_TARGETS, n, 4 * d as u64)? else {
        return Err(StoreError::Corrupt(format!("manifest declares target_dim {d} but {TARGETS} is missing")));
    };
    let mut bytes = Vec::new();
    let path = dir.join(TARGETS);
    r.read_to_end(&mut bytes).map_err(io_err(&path))?;
    let data: Vec<f64> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(StoreError::Invalid(ranpac_core::Error::NonFinite { sample: pos / d, index: pos % d }));
    }
    Ok(Some(Matrix::from_vec(n as usize, d, data)?))
}

/// Reads a whole store into memory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let (manifest, stream) = read_store(dir)?;
    let records = stream.collect::<Result<Vec<_>>>()?;
    let targets = read_targets(dir, &manifest)?;
    Ok(Dataset::new(manifest, records, targets)?)
}

/// Writes an in-memory dataset.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetManifest> {
    write_store(dir, &dataset.manifest, &dataset.records, dataset.targets.as_ref())
}
