//! On-disk formats.
//!
//! Feature file (little endian):
//!
//! ```text
//! b"CXFT"  magic
//! b'd'     dtype tag, f64
//! u32      rows
//! u32      cols
//! f64 * rows * cols, row-major
//! ```
//!
//! Checkpoint: `b"CXCK"`, `u32` version, `u64` length of a JSON header
//! holding the model config and the ordered `(name, shape)` list, then every
//! parameter's values as raw little-endian f64 in header order.
//!
//! Manifests, biasing lists and n-best lists are JSON lines.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use contextbias_core::data::Utterance;
use contextbias_core::eval::WerReport;
use contextbias_core::model::{ModelConfig, Transducer};
use contextbias_core::numkit::Tensor;
use contextbias_core::text::BiasingList;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"CXFT";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CXCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), line, msg: msg.into() }
}

fn shape_err(left: Vec<usize>, right: Vec<usize>) -> Error {
    Error::Core(contextbias_core::Error::Shape { op: "feature file", left, right })
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_features(path: &Path, x: &Tensor) -> Result<()> {
    let (rows, cols) = x.dims2()?;
    let mut buf = Vec::with_capacity(13 + 8 * x.numel());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.push(b'd');
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in x.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    create_parent(path)?;
    fs::write(path, buf).map_err(io_err(path))
}

fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 13 || &bytes[..4] != FEATURE_MAGIC {
        return Err(format_err(path, 0, "not a feature file"));
    }
    if bytes[4] != b'd' {
        return Err(format_err(path, 0, format!("unsupported dtype tag {:?}", bytes[4] as char)));
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    let body = &bytes[13..];
    if body.len() != 8 * rows * cols {
        return Err(shape_err(vec![rows, cols], vec![body.len() / 8]));
    }
    Ok(Tensor::new(&[rows, cols], f64s(body))?)
}

/// One manifest line; `features` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub features: String,
    pub transcript: String,
    pub rare_flags: Vec<bool>,
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    create_parent(path)?;
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    for it in items {
        serde_json::to_writer(&mut w, &it)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format_err(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Writes `<dir>/<name>.jsonl` and one feature file per utterance under
/// `<dir>/<name>/`.
pub fn write_manifest(dir: &Path, name: &str, utts: &[Utterance]) -> Result<PathBuf> {
    let manifest = dir.join(format!("{name}.jsonl"));
    let mut records = Vec::with_capacity(utts.len());
    for u in utts {
        let rel = format!("{name}/{}.feat", u.id);
        write_features(&dir.join(&rel), &u.features)?;
        records.push(ManifestRecord {
            id: u.id.clone(),
            features: rel,
            transcript: u.reference.clone(),
            rare_flags: u.rare_flags.clone(),
        });
    }
    write_jsonl(&manifest, &records)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Vec<Utterance>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let records: Vec<ManifestRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let words = r.transcript.split_whitespace().count();
            if words != r.rare_flags.len() {
                return Err(format_err(
                    path,
                    i + 1,
                    format!("{} rare flags for {words} words", r.rare_flags.len()),
                ));
            }
            Ok(Utterance {
                features: read_features(&base.join(&r.features))?,
                id: r.id,
                reference: r.transcript,
                rare_flags: r.rare_flags,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListRecord {
    pub id: String,
    pub entries: Vec<String>,
}

/// Per-utterance biasing lists keyed by utterance id.
pub fn write_lists(path: &Path, lists: &BTreeMap<String, BiasingList>) -> Result<()> {
    write_jsonl(path, lists.iter().map(|(id, l)| ListRecord { id: id.clone(), entries: l.entries().to_vec() }))
}

pub fn read_lists(path: &Path) -> Result<BTreeMap<String, BiasingList>> {
    let mut out = BTreeMap::new();
    for (i, r) in read_jsonl::<ListRecord>(path)?.into_iter().enumerate() {
        let list = BiasingList::new(r.entries).map_err(|e| format_err(path, i + 1, e.to_string()))?;
        if out.insert(r.id.clone(), list).is_some() {
            return Err(format_err(path, i + 1, format!("duplicate id {}", r.id)));
        }
    }
    Ok(out)
}

/// One word per line.
pub fn write_words<'a>(path: &Path, words: impl IntoIterator<Item = &'a String>) -> Result<()> {
    let mut text = String::new();
    for w in words {
        text.push_str(w);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_words(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// Raw `(pattern, replacement)` pairs from a TSV rules file. Blank lines
/// and `#` comments are skipped.
pub fn read_rule_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_rule_pairs(&text).map_err(|(line, msg)| format_err(path, line, msg))
}

pub fn parse_rule_pairs(text: &str) -> std::result::Result<Vec<(String, String)>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        match fields.as_slice() {
            [p, q] if !p.is_empty() && !q.is_empty() => {
                for pat in [p, q] {
                    if !pat.chars().all(|c| c.is_ascii_lowercase()) {
                        return Err((i + 1, format!("pattern {pat:?} must be lowercase letters")));
                    }
                }
                if p == q {
                    return Err((i + 1, format!("pattern {p:?} maps to itself")));
                }
                out.push((p.to_string(), q.to_string()));
            }
            _ => return Err((i + 1, format!("expected two tab-separated patterns, got {line:?}"))),
        }
    }
    Ok(out)
}

pub fn format_rule_pairs(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(p, q)| format!("{p}\t{q}\n")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbestEntry {
    pub text: String,
    pub score: f64,
    pub base_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NbestRecord {
    pub id: String,
    pub hypotheses: Vec<NbestEntry>,
}

pub fn write_nbest(path: &Path, records: &[NbestRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_nbest(path: &Path) -> Result<Vec<NbestRecord>> {
    read_jsonl(path)
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    params: Vec<(String, Vec<usize>)>,
}

pub fn save_checkpoint(path: &Path, model: &Transducer) -> Result<()> {
    let header = CheckpointHeader {
        config: model.config().clone(),
        params: model.params().iter().map(|(_, n, t)| (n.to_string(), t.shape().to_vec())).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, _, t) in model.params().iter() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    create_parent(path)?;
    fs::write(path, buf).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Transducer> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(io_err(path))?;
    let bad = |msg: &str| format_err(path, 0, msg);
    if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    let mut pos = 16 + len;
    let mut values = Vec::with_capacity(header.params.len());
    for (name, shape) in header.params {
        let n: usize = shape.iter().product();
        let chunk = bytes.get(pos..pos + 8 * n).ok_or_else(|| bad(&format!("truncated values of {name}")))?;
        pos += 8 * n;
        values.push((name, Tensor::new(&shape, f64s(chunk))?));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after parameters"));
    }
    Ok(Transducer::from_named(header.config, values)?)
}

/// Corpus report with its rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredReport {
    pub mode: String,
    pub wer: Option<f64>,
    pub u_wer: Option<f64>,
    pub b_wer: Option<f64>,
    pub counts: WerReport,
    pub decode_seconds: f64,
}

impl ScoredReport {
    pub fn new(mode: &str, counts: WerReport, decode_seconds: f64) -> Self {
        Self {
            mode: mode.into(),
            wer: counts.overall.rate(),
            u_wer: counts.u.rate(),
            b_wer: counts.b.rate(),
            counts,
            decode_seconds,
        }
    }
}

fn pct(r: Option<f64>) -> String {
    r.map_or_else(|| "-".into(), |r| format!("{:.2}", 100.0 * r))
}

/// Aligned text table of several reports.
pub fn format_table(reports: &[ScoredReport]) -> String {
    let mut out = format!(
        "{:<16} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6} {:>10}\n",
        "mode", "WER", "U-WER", "B-WER", "sub", "del", "ins", "seconds"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6} {:>10.2}\n",
            r.mode,
            pct(r.wer),
            pct(r.u_wer),
            pct(r.b_wer),
            r.counts.substitutions,
            r.counts.deletions,
            r.counts.insertions,
            r.decode_seconds
        ));
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.line(), e.to_string()))
}
