//! Dataset download by manifest.
//!
//! Each file is fetched to `<out>/<path>.part` (resumed with a range request
//! when the part exists), verified, then renamed into place. A digest mismatch
//! moves the download to `<out>/.quarantine/`. Files without a published
//! digest are pinned on first download in `<out>/.verified.toml`, so later
//! runs still verify them. Verified files are never fetched again.
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, Write};
use std::path::{Component, Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

const BUNDLED: [(&str, &str); 2] = [
    ("maestro-midi", include_str!("../manifests/maestro-midi.toml")),
    ("musicnet", include_str!("../manifests/musicnet.toml")),
];
const PINS_FILE: &str = ".verified.toml";
const QUARANTINE_DIR: &str = ".quarantine";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub license: String,
    #[serde(default)]
    pub homepage: Option<String>,
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    /// `http://`, `https://` or `file://`.
    pub url: String,
    /// Destination relative to the output directory.
    pub path: String,
    /// Lower-case hex SHA-256, when the publisher's archive is stable.
    #[serde(default)]
    pub sha256: Option<String>,
    /// Extract a `.tar` / `.tar.gz` archive into the output directory.
    #[serde(default)]
    pub unpack: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DownloadReport {
    pub files: Vec<PathBuf>,
    /// Bytes received over the network (or read from `file://` sources).
    pub bytes_fetched: u64,
    /// Files that were already present and verified.
    pub skipped: usize,
}

pub fn bundled_manifest_names() -> Vec<String> {
    BUNDLED.iter().map(|(n, _)| n.to_string()).collect()
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Input(format!("manifest: {}", e.message())))?;
        for f in &m.files {
            safe_relative(&f.path)?;
            if let Some(d) = &f.sha256 {
                if d.len() != 64 || !d.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
                    return Err(Error::Input(format!("manifest: bad sha256 for {}", f.path)));
                }
            }
        }
        Ok(m)
    }

    /// A bundled manifest by name, or a manifest file when `name` is a path
    /// to an existing `.toml` file.
    pub fn resolve(name: &str) -> Result<Self> {
        let p = Path::new(name);
        if p.extension().is_some_and(|e| e == "toml") && p.is_file() {
            let text = String::from_utf8(fsio::read(p)?).map_err(|e| Error::input(p, e))?;
            return Self::parse(&text);
        }
        match BUNDLED.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::parse(text),
            None => Err(Error::Manifest {
                name: name.to_string(),
                available: bundled_manifest_names(),
            }),
        }
    }
}

fn safe_relative(path: &str) -> Result<&Path> {
    let p = Path::new(path);
    if path.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(Error::Input(format!("manifest: unsafe path {path:?}")));
    }
    Ok(p)
}

fn digest_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut f = File::open(path).map_err(|e| Error::input(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::input(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(fsio::hex(&h.finalize()))
}

type Pins = BTreeMap<String, String>;

fn load_pins(out: &Path) -> Result<Pins> {
    let p = out.join(PINS_FILE);
    if !p.is_file() {
        return Ok(Pins::new());
    }
    let text = String::from_utf8(fsio::read(&p)?).map_err(|e| Error::data(&p, e))?;
    toml::from_str(&text).map_err(|e| Error::data(&p, e.message()))
}

/// Opens `url` for reading from byte `offset`. Returns the reader and whether
/// the source honoured the offset.
fn open_source(url: &str, offset: u64) -> Result<(Box<dyn Read + Send>, bool)> {
    if let Some(local) = url.strip_prefix("file://") {
        let mut f = File::open(local).map_err(|e| Error::Net(format!("{url}: {e}")))?;
        f.seek(io::SeekFrom::Start(offset)).map_err(|e| Error::Net(format!("{url}: {e}")))?;
        return Ok((Box::new(f), true));
    }
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(Error::Input(format!("manifest: unsupported url {url}")));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_connect(Some(Duration::from_secs(20)))
        .timeout_recv_body(Some(Duration::from_secs(60)))
        .build()
        .into();
    let mut req = agent.get(url);
    if offset > 0 {
        req = req.header("Range", format!("bytes={offset}-"));
    }
    let resp = req.call().map_err(|e| Error::Net(format!("{url}: {e}")))?;
    let resumed = resp.status().as_u16() == 206;
    Ok((Box::new(resp.into_body().into_reader()), resumed))
}

/// Appends the rest of `url` to `part`, returning the bytes received.
fn fetch(url: &str, part: &Path) -> Result<u64> {
    let have = fs::metadata(part).map(|m| m.len()).unwrap_or(0);
    let (mut src, resumed) = open_source(url, have)?;
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(!resumed)
        .append(resumed)
        .open(part)
        .map_err(|e| Error::input(part, e))?;
    if have > 0 && resumed {
        log::info!("resuming {url} at byte {have}");
    }
    let mut buf = vec![0u8; 1 << 16];
    let mut got = 0u64;
    loop {
        let n = match src.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => {
                let _ = f.flush();
                return Err(Error::Net(format!("{url}: {e} after {got} bytes; rerun to resume")));
            }
        };
        f.write_all(&buf[..n]).map_err(|e| Error::input(part, e))?;
        got += n as u64;
    }
    f.sync_all().map_err(|e| Error::input(part, e))?;
    Ok(got)
}

fn quarantine(out: &Path, rel: &Path, from: &Path) -> Result<PathBuf> {
    let q = out.join(QUARANTINE_DIR).join(rel);
    if let Some(d) = q.parent() {
        fs::create_dir_all(d).map_err(|e| Error::input(d, e))?;
    }
    fs::rename(from, &q).map_err(|e| Error::input(from, e))?;
    Ok(q)
}

fn unpack(archive: &Path, out: &Path) -> Result<()> {
    let marker = archive.with_extension("unpacked");
    if marker.is_file() {
        return Ok(());
    }
    let name = archive.to_string_lossy();
    let f = File::open(archive).map_err(|e| Error::input(archive, e))?;
    let reader: Box<dyn Read> = if name.ends_with(".tar.gz") || name.ends_with(".tgz") {
        Box::new(flate2::read::GzDecoder::new(f))
    } else if name.ends_with(".tar") {
        Box::new(f)
    } else {
        return Err(Error::data(archive, "only .tar and .tar.gz archives can be unpacked"));
    };
    tar::Archive::new(reader).unpack(out).map_err(|e| Error::data(archive, e))?;
    fsio::write_text(&marker, "")
}

/// Fetches and verifies every file of `manifest` into `out_dir`.
pub fn download_dataset(manifest: &DatasetManifest, out_dir: &Path) -> Result<DownloadReport> {
    fs::create_dir_all(out_dir).map_err(|e| Error::input(out_dir, e))?;
    let mut pins = load_pins(out_dir)?;
    let mut report = DownloadReport::default();
    for file in &manifest.files {
        let rel = safe_relative(&file.path)?;
        let dest = out_dir.join(rel);
        let expected = file.sha256.clone().or_else(|| pins.get(&file.path).cloned());
        if dest.is_file() {
            let actual = digest_file(&dest)?;
            match &expected {
                Some(e) if *e == actual => {
                    log::info!("{} already verified", dest.display());
                    report.skipped += 1;
                    if file.unpack {
                        unpack(&dest, out_dir)?;
                    }
                    report.files.push(dest);
                    continue;
                }
                Some(_) => {
                    let q = quarantine(out_dir, rel, &dest)?;
                    log::warn!("{} failed verification; moved to {}", dest.display(), q.display());
                }
                None => {
                    log::warn!("{} has no recorded digest; fetching again", dest.display());
                }
            }
        }
        if let Some(d) = dest.parent() {
            fs::create_dir_all(d).map_err(|e| Error::input(d, e))?;
        }
        let part = PathBuf::from(format!("{}.part", dest.display()));
        report.bytes_fetched += fetch(&file.url, &part)?;
        let actual = digest_file(&part)?;
        match expected {
            Some(e) if e != actual => {
                let q = quarantine(out_dir, rel, &part)?;
                return Err(Error::Checksum {
                    path: dest.display().to_string(),
                    expected: e,
                    actual,
                    quarantine: q.display().to_string(),
                });
            }
            Some(_) => {}
            None => {
                log::warn!("{} has no published digest; pinning sha256 {actual}", file.path);
                pins.insert(file.path.clone(), actual);
                fsio::write_text(&out_dir.join(PINS_FILE), &toml::to_string(&pins).expect("pins serialize"))?;
            }
        }
        fs::rename(&part, &dest).map_err(|e| Error::input(&dest, e))?;
        if file.unpack {
            unpack(&dest, out_dir)?;
        }
        report.files.push(dest);
    }
    Ok(report)
}
