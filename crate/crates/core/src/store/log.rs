use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::{self, OpenOptions, TryLockError};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{RunFilter, RunRecord, StoreError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Skip malformed lines instead of failing.
    pub lenient: bool,
    /// Treat a missing file as an empty store.
    pub create: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub records: Vec<RunRecord>,
    /// Malformed lines skipped in lenient mode.
    pub skipped: usize,
    /// An unterminated, unparseable last line was ignored. It is moved to
    /// the quarantine file by the next append.
    pub partial_tail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppendAck {
    pub appended: usize,
    pub total: usize,
    pub quarantined_bytes: usize,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name: OsString = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn lock_path(path: &Path) -> PathBuf {
    sibling(path, ".lock")
}

pub fn quarantine_path(path: &Path) -> PathBuf {
    sibling(path, ".quarantine")
}

struct Parsed {
    records: Vec<RunRecord>,
    skipped: usize,
    /// Byte offset and contents of an unterminated, unparseable tail.
    partial_tail: Option<(usize, Vec<u8>)>,
    /// The file ends without a newline after a valid record.
    needs_newline: bool,
}

fn parse_line(bytes: &[u8]) -> Result<RunRecord, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let record: RunRecord = serde_json::from_str(text).map_err(|e| e.to_string())?;
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}

fn parse(content: &[u8], lenient: bool) -> Result<Parsed, StoreError> {
    let mut out = Parsed {
        records: Vec::new(),
        skipped: 0,
        partial_tail: None,
        needs_newline: false,
    };
    let mut offset = 0;
    let mut line_no = 0;
    while offset < content.len() {
        line_no += 1;
        let rest = &content[offset..];
        let (line, terminated) = match rest.iter().position(|&b| b == b'\n') {
            Some(n) => (&rest[..n], true),
            None => (rest, false),
        };
        let start = offset;
        offset += line.len() + usize::from(terminated);

        let trimmed = line.strip_suffix(b"\r").unwrap_or(line);
        if trimmed.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match parse_line(trimmed) {
            Ok(r) => {
                out.records.push(r);
                out.needs_newline = !terminated;
            }
            Err(_) if !terminated => {
                out.partial_tail = Some((start, line.to_vec()));
            }
            Err(_) if lenient => out.skipped += 1,
            Err(message) => {
                return Err(StoreError::Malformed {
                    line: line_no,
                    message,
                })
            }
        }
    }
    Ok(out)
}

/// Loads records in append order, keeping those accepted by `filter`.
pub fn load_runs(path: &Path, filter: &RunFilter, opts: LoadOptions) -> Result<LoadReport, StoreError> {
    let content = match fs::read(path) {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            if opts.create {
                return Ok(LoadReport::default());
            }
            return Err(StoreError::NotFound(path.display().to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    let parsed = parse(&content, opts.lenient)?;
    Ok(LoadReport {
        records: parsed.records.into_iter().filter(|r| filter.matches(r)).collect(),
        skipped: parsed.skipped,
        partial_tail: parsed.partial_tail.is_some(),
    })
}

pub fn append_run(path: &Path, record: &RunRecord) -> Result<AppendAck, StoreError> {
    append_runs(path, std::slice::from_ref(record))
}

/// Appends a batch atomically with respect to validation: either every
/// record is valid and new, or nothing is written.
pub fn append_runs(path: &Path, records: &[RunRecord]) -> Result<AppendAck, StoreError> {
    let mut seen = HashSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.run_id.as_str()) {
            return Err(StoreError::Duplicate(r.run_id.clone()));
        }
    }

    let lock_file = lock_path(path);
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_file)?;
    match lock.try_lock() {
        Ok(()) => {}
        Err(TryLockError::WouldBlock) => {
            return Err(StoreError::Busy(lock_file.display().to_string()))
        }
        Err(TryLockError::Error(e)) => return Err(e.into()),
    }

    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)?;
    let mut content = Vec::new();
    file.read_to_end(&mut content)?;
    let parsed = parse(&content, true)?;

    let existing: HashSet<&str> = parsed.records.iter().map(|r| r.run_id.as_str()).collect();
    if let Some(dup) = records.iter().find(|r| existing.contains(r.run_id.as_str())) {
        return Err(StoreError::Duplicate(dup.run_id.clone()));
    }

    let mut quarantined_bytes = 0;
    if let Some((offset, tail)) = &parsed.partial_tail {
        let mut q = OpenOptions::new()
            .create(true)
            .append(true)
            .open(quarantine_path(path))?;
        q.write_all(tail)?;
        q.write_all(b"\n")?;
        q.sync_data()?;
        file.set_len(*offset as u64)?;
        quarantined_bytes = tail.len();
    }

    let mut buf = Vec::new();
    if parsed.needs_newline && parsed.partial_tail.is_none() {
        buf.push(b'\n');
    }
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(std::io::Error::from)?;
        buf.push(b'\n');
    }
    file.seek(SeekFrom::End(0))?;
    file.write_all(&buf)?;
    file.sync_data()?;
    drop(file);
    drop(lock);

    Ok(AppendAck {
        appended: records.len(),
        total: parsed.records.len() + records.len(),
        quarantined_bytes,
    })
}

/// Opens the lock without releasing it; used to exercise the busy path.
#[cfg(test)]
fn hold_lock(path: &Path) -> fs::File {
    let f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(lock_path(path))
        .unwrap();
    f.lock().unwrap();
    f
}
