//! On-disk artifacts: checkpoints, CSV and JSON outputs, and the run manifest.
//!
//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! "SKYRCKPT" | version u32 | header_len u64 | header JSON
//! | per tensor: ndims u32, dims u64 x ndims, f64 x prod(dims)
//! | SHA-256 of everything above
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PpoConfig;
use crate::error::PersistError;
use crate::ppo::{Adam, Policy, PolicySpec};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SKYRCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: PolicySpec,
    pub hyperparams: PpoConfig,
    pub seed: u64,
    pub episodes: usize,
    pub config_hash: String,
    pub adam_step: u64,
    /// Tensor names in file order.
    pub tensors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub policy: Policy,
    pub adam: Adam,
}

impl Checkpoint {
    pub fn new(policy: &Policy, adam: &Adam, hp: &PpoConfig, seed: u64, episodes: usize, config_hash: &str) -> Self {
        let mut names: Vec<String> = policy.tensors().into_iter().map(|t| t.0).collect();
        names.extend(["adam.m".to_string(), "adam.v".to_string()]);
        Self {
            header: CheckpointHeader {
                spec: policy.spec,
                hyperparams: hp.clone(),
                seed,
                episodes,
                config_hash: config_hash.to_string(),
                adam_step: adam.step,
                tensors: names,
            },
            policy: policy.clone(),
            adam: adam.clone(),
        }
    }

    /// Fails with the name of the first head whose size differs from `expected`.
    pub fn check_spec(&self, expected: &PolicySpec) -> Result<(), PersistError> {
        let got = &self.header.spec;
        let fields = [
            ("observation", expected.obs_dim, got.obs_dim),
            ("association", expected.assoc_heads, got.assoc_heads),
            ("association_choices", expected.assoc_choices, got.assoc_choices),
            ("key", expected.key_heads, got.key_heads),
            ("key_choices", expected.key_choices, got.key_choices),
            ("displacement", expected.continuous_dim, got.continuous_dim),
            ("hidden", expected.hidden, got.hidden),
        ];
        for (head, e, f) in fields {
            if e != f {
                return Err(PersistError::ShapeMismatch {
                    head: head.into(),
                    expected: e,
                    found: f,
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let mut put = |shape: &[usize], data: &[f64]| {
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        for (_, shape, range) in self.policy.tensors() {
            put(&shape, &self.policy.theta[range]);
        }
        put(&[self.adam.m.len()], &self.adam.m);
        put(&[self.adam.v.len()], &self.adam.v);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PersistError> {
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(PersistError::BadMagic);
        }
        let mut r = Reader { buf: bytes, pos: 8 };
        let version = r.u32()?;
        if version > CHECKPOINT_VERSION || version == 0 {
            return Err(PersistError::UnsupportedVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        if bytes.len() < 8 + 4 + 32 {
            return Err(PersistError::Integrity("file truncated".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(PersistError::Integrity("checksum mismatch (truncated or modified file)".into()));
        }
        let mut r = Reader { buf: body, pos: 12 };
        let hlen = r.u64()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?)?;

        let mut policy = Policy::zeros(header.spec);
        let layout = policy.tensors();
        if header.tensors.len() != layout.len() + 2 {
            return Err(PersistError::Integrity(format!(
                "expected {} tensors, header lists {}",
                layout.len() + 2,
                header.tensors.len()
            )));
        }
        for ((name, shape, range), listed) in layout.iter().zip(&header.tensors) {
            if name != listed {
                return Err(PersistError::Integrity(format!("tensor `{listed}` where `{name}` was expected")));
            }
            let data = r.tensor(name, shape)?;
            policy.theta[range.clone()].copy_from_slice(&data);
        }
        let n = policy.num_params();
        let hp = &header.hyperparams;
        let mut adam = Adam::new(n, hp.adam_beta1, hp.adam_beta2, hp.adam_eps);
        adam.m = r.tensor("adam.m", &[n])?;
        adam.v = r.tensor("adam.v", &[n])?;
        adam.step = header.adam_step;
        if r.pos != body.len() {
            return Err(PersistError::Integrity(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { header, policy, adam })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| PersistError::Integrity("file truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self, name: &str, want: &[usize]) -> Result<Vec<f64>, PersistError> {
        let nd = self.u32()? as usize;
        let mut shape = Vec::with_capacity(nd.min(8));
        for _ in 0..nd {
            shape.push(self.u64()? as usize);
        }
        if shape != want {
            return Err(PersistError::Integrity(format!(
                "tensor `{name}` has shape {shape:?}, expected {want:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(8).ok_or_else(|| PersistError::Integrity("tensor too large".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), PersistError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, PersistError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First line of every CSV artifact.
pub fn csv_preamble(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}\n")
}

/// Splits a CSV artifact into its preamble fields, header and data rows.
pub fn parse_csv(text: &str) -> Result<(BTreeMap<String, String>, Vec<String>, Vec<Vec<String>>), PersistError> {
    let mut lines = text.lines();
    let pre = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| PersistError::Integrity("missing CSV preamble".into()))?;
    let meta = pre
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let header = lines
        .next()
        .ok_or_else(|| PersistError::Integrity("missing CSV header".into()))?
        .split(',')
        .map(String::from)
        .collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    Ok((meta, header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` wins when set.
    pub timestamp: u64,
    pub seed: u64,
    pub config_hash: String,
    /// Canonical TOML of the full configuration.
    pub config: String,
    /// Subcommand arguments needed to re-run it.
    pub args: BTreeMap<String, String>,
    /// Relative path to hex SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, PersistError> {
        let m: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        if m.schema_version > MANIFEST_SCHEMA {
            return Err(PersistError::UnsupportedVersion {
                found: m.schema_version,
                supported: MANIFEST_SCHEMA,
            });
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<(), PersistError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(dir.join(MANIFEST_FILE), s)?;
        Ok(())
    }

    /// Checks every listed artifact against its recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<(), PersistError> {
        for (rel, want) in &self.artifacts {
            let bytes = fs::read(dir.join(rel)).map_err(|_| PersistError::HashMismatch { path: rel.clone() })?;
            if &sha256_hex(&bytes) != want {
                return Err(PersistError::HashMismatch { path: rel.clone() });
            }
        }
        Ok(())
    }
}

pub fn timestamp_now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes artifacts under one output directory and records their hashes.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    artifacts: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(root: &Path, config_hash: &str, seed: u64) -> Result<Self, PersistError> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            config_hash: config_hash.to_string(),
            seed,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, PersistError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.artifacts.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// `header` without a trailing newline; each row ends with one.
    pub fn write_csv(&mut self, rel: &str, header: &str, rows: &str) -> Result<PathBuf, PersistError> {
        let mut s = csv_preamble(&self.config_hash, self.seed);
        s.push_str(header);
        s.push('\n');
        s.push_str(rows);
        self.write_bytes(rel, s.as_bytes())
    }

    /// Serializes `value` with `config_hash` and `seed` fields added at the top level.
    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, PersistError> {
        let mut v = serde_json::to_value(value)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("config_hash".into(), self.config_hash.clone().into());
            map.insert("seed".into(), self.seed.into());
        }
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        self.write_bytes(rel, s.as_bytes())
    }

    pub fn write_checkpoint(&mut self, rel: &str, ckpt: &Checkpoint) -> Result<PathBuf, PersistError> {
        self.write_bytes(rel, &ckpt.to_bytes())
    }

    pub fn finish(
        self,
        subcommand: &str,
        config_toml: &str,
        args: BTreeMap<String, String>,
    ) -> Result<Manifest, PersistError> {
        let m = Manifest {
            schema_version: MANIFEST_SCHEMA,
            subcommand: subcommand.to_string(),
            version: crate::VERSION.to_string(),
            timestamp: timestamp_now(),
            seed: self.seed,
            config_hash: self.config_hash,
            config: config_toml.to_string(),
            args,
            artifacts: self.artifacts,
        };
        m.write(&self.root)?;
        Ok(m)
    }
}
