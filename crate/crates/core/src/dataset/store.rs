use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::revision::{decode, PRIVATE_MAPPING, PRIVATE_QA, PUBLIC_QUESTIONS, PUBLIC_TEXTS};
use super::{content_hash, DatasetError, DatasetRevision, DocumentRecord, PublicSplits, RawDocument, Version};

/// Environment variable naming the storage root.
pub const ROOT_ENV: &str = "RAGBENCH_ROOT";

const MANIFEST: &str = "manifest.jsonl";
const CORPUS: &str = "corpus/documents.jsonl";

/// One released revision in the append-only manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub version: Version,
    /// Unix seconds.
    pub created_at: u64,
    /// sha256 of each split file.
    pub files: BTreeMap<String, String>,
    /// sha256 over the sorted `name:hash` lines of `files`.
    pub root_hash: String,
    /// Content hashes of the revision's public texts.
    pub documents: Vec<String>,
}

/// File-system layout:
///
/// ```text
/// <root>/manifest.jsonl
/// <root>/corpus/documents.jsonl
/// <root>/inbox/*.txt
/// <root>/revisions/<version>/public/{public_texts,public_questions}.jsonl
/// <root>/revisions/<version>/private/{private_mapping,private_qa}.jsonl
/// <root>/sandbox/<version>/*.jsonl
/// ```
#[derive(Debug, Clone)]
pub struct DatasetStore {
    root: PathBuf,
}

struct WriteLock(PathBuf);

impl WriteLock {
    fn acquire(root: &Path) -> Result<Self, DatasetError> {
        let path = root.join(".write.lock");
        fs::File::create_new(&path).map_err(DatasetError::io(&path))?;
        Ok(Self(path))
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(DatasetError::io(path))
}

fn write(path: &Path, content: &str) -> Result<(), DatasetError> {
    fs::write(path, content).map_err(DatasetError::io(path))
}

fn mkdir(path: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(path).map_err(DatasetError::io(path))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Split {
                path: path.to_owned(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

fn append_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), DatasetError> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(DatasetError::io(path))?;
    let mut buf = String::new();
    for row in rows {
        buf.push_str(&serde_json::to_string(row).expect("row serializes"));
        buf.push('\n');
    }
    file.write_all(buf.as_bytes()).map_err(DatasetError::io(path))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl DatasetStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let root = root.into();
        for dir in ["corpus", "inbox", "revisions", "sandbox"] {
            mkdir(&root.join(dir))?;
        }
        Ok(Self { root })
    }

    /// Opens the store named by `RAGBENCH_ROOT`.
    pub fn from_env() -> Result<Self, DatasetError> {
        let root = std::env::var_os(ROOT_ENV).ok_or(DatasetError::NoRoot(ROOT_ENV))?;
        Self::open(PathBuf::from(root))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn inbox(&self) -> PathBuf {
        self.root.join("inbox")
    }

    fn revision_dir(&self, v: Version) -> PathBuf {
        self.root.join("revisions").join(v.to_string())
    }

    fn sandbox_dir(&self, v: Version) -> PathBuf {
        self.root.join("sandbox").join(v.to_string())
    }

    pub fn manifest(&self) -> Result<Vec<ManifestEntry>, DatasetError> {
        read_jsonl(&self.root.join(MANIFEST))
    }

    /// Released versions, ascending.
    pub fn versions(&self) -> Result<Vec<Version>, DatasetError> {
        let mut v: Vec<Version> = self.manifest()?.into_iter().map(|e| e.version).collect();
        v.sort();
        Ok(v)
    }

    pub fn latest_version(&self) -> Result<Option<Version>, DatasetError> {
        Ok(self.versions()?.pop())
    }

    /// Content hashes of every document published in a released revision.
    pub fn released_hashes(&self) -> Result<BTreeSet<String>, DatasetError> {
        Ok(self.manifest()?.into_iter().flat_map(|e| e.documents).collect())
    }

    pub fn documents(&self) -> Result<Vec<DocumentRecord>, DatasetError> {
        read_jsonl(&self.root.join(CORPUS))
    }

    pub fn next_internal_id(&self) -> Result<u64, DatasetError> {
        Ok(self.documents()?.iter().map(|d| d.internal_id + 1).max().unwrap_or(0))
    }

    /// Appends records whose hash the corpus does not hold yet; returns
    /// the ones written.
    pub fn append_documents(&self, records: &[DocumentRecord]) -> Result<Vec<DocumentRecord>, DatasetError> {
        let _lock = WriteLock::acquire(&self.root)?;
        let known: BTreeSet<String> = self.documents()?.into_iter().map(|d| d.content_hash).collect();
        let fresh: Vec<DocumentRecord> = records
            .iter()
            .filter(|r| !known.contains(&r.content_hash))
            .cloned()
            .collect();
        append_jsonl(&self.root.join(CORPUS), &fresh)?;
        Ok(fresh)
    }

    /// Text files dropped into the inbox, by file name.
    pub fn read_inbox(&self) -> Result<Vec<RawDocument>, DatasetError> {
        let dir = self.inbox();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(DatasetError::io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| {
                let fetched_at = fs::metadata(&p)
                    .and_then(|m| m.modified())
                    .ok()
                    .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
                    .map_or(0, |d| d.as_secs());
                Ok(RawDocument {
                    source: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                    text: read(&p)?,
                    fetched_at,
                })
            })
            .collect()
    }

    /// Writes a revision once and records it in the manifest. The split
    /// files are staged and moved into place, so readers see either no
    /// revision or a complete one.
    pub fn write_revision(&self, rev: &DatasetRevision) -> Result<ManifestEntry, DatasetError> {
        rev.check_invariants()?;
        let _lock = WriteLock::acquire(&self.root)?;
        let target = self.revision_dir(rev.version);
        if target.exists() || self.versions()?.contains(&rev.version) {
            return Err(DatasetError::RevisionExists(rev.version));
        }
        let staging = self.root.join("revisions").join(format!(".staging-{}", rev.version));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(DatasetError::io(&staging))?;
        }
        mkdir(&staging.join("public"))?;
        mkdir(&staging.join("private"))?;
        let mut files = BTreeMap::new();
        for (name, content) in rev.files() {
            let sub = if name.starts_with("public") {
                "public"
            } else {
                "private"
            };
            write(&staging.join(sub).join(name), &content)?;
            files.insert(name.to_owned(), sha256_hex(content.as_bytes()));
        }
        fs::rename(&staging, &target).map_err(DatasetError::io(&target))?;
        let root_hash = sha256_hex(
            files
                .iter()
                .map(|(n, h)| format!("{n}:{h}\n"))
                .collect::<String>()
                .as_bytes(),
        );
        let entry = ManifestEntry {
            version: rev.version,
            created_at: now(),
            files,
            root_hash,
            documents: rev.public_texts.iter().map(|t| content_hash(&t.text)).collect(),
        };
        append_jsonl(&self.root.join(MANIFEST), std::slice::from_ref(&entry))?;
        Ok(entry)
    }

    fn load(dir: &Path, public: &Path, private: &Path, v: Version) -> Result<DatasetRevision, DatasetError> {
        if !dir.exists() {
            return Err(DatasetError::UnknownRevision(v.to_string()));
        }
        let load = |base: &Path, name: &str| {
            let p = base.join(name);
            read(&p).map(|c| (p, c))
        };
        let (p, c) = load(public, PUBLIC_TEXTS)?;
        let public_texts = decode(&p, &c, v)?;
        let (p, c) = load(public, PUBLIC_QUESTIONS)?;
        let public_questions = decode(&p, &c, v)?;
        let (p, c) = load(private, PRIVATE_MAPPING)?;
        let private_mapping = decode(&p, &c, v)?;
        let (p, c) = load(private, PRIVATE_QA)?;
        let private_qa = decode(&p, &c, v)?;
        Ok(DatasetRevision {
            version: v,
            public_texts,
            public_questions,
            private_mapping,
            private_qa,
        })
    }

    /// Loads a released revision including its private splits.
    pub fn read_revision(&self, v: Version) -> Result<DatasetRevision, DatasetError> {
        let dir = self.revision_dir(v);
        Self::load(&dir, &dir.join("public"), &dir.join("private"), v)
    }

    pub fn read_public(&self, v: Version) -> Result<PublicSplits, DatasetError> {
        let dir = self.revision_dir(v).join("public");
        if !dir.exists() {
            return Err(DatasetError::UnknownRevision(v.to_string()));
        }
        let p = dir.join(PUBLIC_TEXTS);
        let public_texts = decode(&p, &read(&p)?, v)?;
        let p = dir.join(PUBLIC_QUESTIONS);
        let public_questions = decode(&p, &read(&p)?, v)?;
        Ok(PublicSplits {
            version: v,
            public_texts,
            public_questions,
        })
    }

    /// Writes a sandbox revision: the same four splits, all public. Sandbox
    /// revisions are written once and never replaced.
    pub fn write_sandbox(&self, rev: &DatasetRevision) -> Result<PathBuf, DatasetError> {
        rev.check_invariants()?;
        let dir = self.sandbox_dir(rev.version);
        if dir.exists() {
            return Err(DatasetError::RevisionExists(rev.version));
        }
        rev.write_dir(&dir)?;
        Ok(dir)
    }

    pub fn read_sandbox(&self, v: Version) -> Result<DatasetRevision, DatasetError> {
        let dir = self.sandbox_dir(v);
        if !dir.exists() {
            return Err(DatasetError::UnknownRevision(v.to_string()));
        }
        DatasetRevision::read_dir(&dir)
    }

    pub fn sandbox_versions(&self) -> Result<Vec<Version>, DatasetError> {
        let dir = self.root.join("sandbox");
        let mut v: Vec<Version> = fs::read_dir(&dir)
            .map_err(DatasetError::io(&dir))?
            .filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
            .collect();
        v.sort();
        Ok(v)
    }
}
