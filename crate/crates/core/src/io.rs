//! CSV and JSON artifacts consumed by the plotting scripts.
//!
//! Every CSV starts with two comment lines:
//!
//! ```text
//! # spinkernel-csv v1
//! # config-hash: <sha256 hex>
//! ```
//!
//! followed by a header row. JSON files are envelopes with `format`,
//! `version` and `config_hash` fields around the payload. Floats are written
//! in shortest round-trip form, so identical inputs give identical bytes.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

pub const CSV_MAGIC: &str = "# spinkernel-csv v1";
pub const FORMAT_VERSION: u32 = 1;

/// Column header row plus data rows, written with the versioned preamble.
pub fn write_csv<P: AsRef<Path>>(path: P, config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{CSV_MAGIC}")?;
    writeln!(buf, "# config-hash: {config_hash}")?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            if r.len() != header.len() {
                return Err(Error::Format(format!(
                    "row has {} fields, header has {}",
                    r.len(),
                    header.len()
                )));
            }
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

/// A parsed CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub config_hash: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column {name}")))
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[c].parse::<f64>()
                    .map_err(|e| Error::Format(format!("column {name}: {e}")))
            })
            .collect()
    }
}

pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<CsvTable> {
    let path = path.as_ref();
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic != CSV_MAGIC {
        return Err(Error::Format(format!("{} lacks the {CSV_MAGIC} header", path.display())));
    }
    let hash_line = lines.next().transpose()?.unwrap_or_default();
    let config_hash = hash_line
        .strip_prefix("# config-hash: ")
        .ok_or_else(|| Error::Format(format!("{} lacks a config-hash line", path.display())))?
        .to_string();
    let body: Vec<String> = lines.collect::<std::io::Result<_>>()?;
    let joined = body.join("\n");
    let mut rdr = csv::ReaderBuilder::new().from_reader(joined.as_bytes());
    let header = rdr.headers()?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(CsvTable {
        config_hash,
        header,
        rows,
    })
}

/// Shortest round-trip decimal form; `inf`, `-inf` and `nan` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub payload: T,
}

pub fn write_json<T: Serialize, P: AsRef<Path>>(path: P, format: &str, config_hash: &str, seed: u64, payload: &T) -> Result<()> {
    let env = Envelope {
        format: format.to_string(),
        version: FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        seed,
        payload,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, P: AsRef<Path>>(path: P, format: &str) -> Result<Envelope<T>> {
    let env: Envelope<T> = serde_json::from_str(&fs::read_to_string(path)?)?;
    if env.format != format {
        return Err(Error::Format(format!("expected a {format} document, got {}", env.format)));
    }
    if env.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {}", env.version)));
    }
    Ok(env)
}

/// JSON payload of a Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramDocument {
    pub gram: GramMatrix,
    pub min_eigenvalue: f64,
}

/// CSV form of a Gram matrix: a `label` column, then one column per point.
pub fn gram_csv<P: AsRef<Path>>(path: P, config_hash: &str, gram: &GramMatrix, labels: &[String]) -> Result<()> {
    let mut header: Vec<&str> = vec!["label"];
    header.extend(labels.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = (0..gram.len())
        .map(|i| {
            std::iter::once(labels[i].clone())
                .chain(gram.row(i).iter().map(|&v| fmt_f64(v)))
                .collect()
        })
        .collect();
    write_csv(path, config_hash, &header, &rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: String,
    pub sha256: String,
}

/// Index of the artifacts of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub preset: String,
    pub files: Vec<ManifestEntry>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    pub fn new(config_hash: &str, seed: u64, preset: &str) -> Self {
        Manifest {
            config_hash: config_hash.to_string(),
            seed,
            preset: preset.to_string(),
            files: Vec::new(),
        }
    }

    /// Record a file under `root`; paths are stored relative to it.
    pub fn add(&mut self, root: &Path, path: &Path, kind: &str) -> Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.files.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            kind: kind.to_string(),
            sha256: file_sha256(path)?,
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Check that every listed file exists, matches its digest and carries
    /// this manifest's config hash.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for f in &self.files {
            let p: PathBuf = root.join(&f.path);
            if file_sha256(&p)? != f.sha256 {
                return Err(Error::Format(format!("{} changed since the manifest was written", f.path)));
            }
            let hash = if f.path.ends_with(".csv") {
                read_csv(&p)?.config_hash
            } else if f.path.ends_with(".json") {
                let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p)?)?;
                v.get("config_hash").and_then(|h| h.as_str()).unwrap_or_default().to_string()
            } else {
                continue;
            };
            if hash != self.config_hash {
                return Err(Error::Format(format!("{} has config hash {hash}", f.path)));
            }
        }
        Ok(())
    }
}
