use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::AnnotationRecord;
use crate::error::{Error, Result};

/// Destination for committed record batches. A batch is written whole or not at all.
pub trait RecordSink: Send {
    fn append_batch(&mut self, batch: &[AnnotationRecord]) -> Result<()>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<AnnotationRecord>,
}

impl RecordSink for MemorySink {
    fn append_batch(&mut self, batch: &[AnnotationRecord]) -> Result<()> {
        self.records.extend_from_slice(batch);
        Ok(())
    }
}

/// Append-only JSONL log, one record per line, flushed and synced per batch.
#[derive(Debug)]
pub struct FileLog {
    path: PathBuf,
    file: File,
}

impl FileLog {
    /// Opens (creating if needed) the log at `path` and returns it with the
    /// records already committed. A torn trailing batch from an interrupted
    /// write is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<(FileLog, Vec<AnnotationRecord>)> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let (records, valid_len) = if path.exists() {
            scan(&path)?
        } else {
            (Vec::new(), 0)
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        file.set_len(valid_len).map_err(|e| Error::io(&path, e))?;
        Ok((FileLog { path, file }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl RecordSink for FileLog {
    fn append_batch(&mut self, batch: &[AnnotationRecord]) -> Result<()> {
        let mut buf = String::new();
        for r in batch {
            buf.push_str(&serde_json::to_string(r).expect("records serialize"));
            buf.push('\n');
        }
        self.file
            .write_all(buf.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads the committed records of a log without modifying it.
pub fn read_record_log(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    scan(path.as_ref()).map(|(r, _)| r)
}

/// Parses whole batches (runs of records sharing annotator and group). Returns
/// the records and the byte length of the committed prefix. Damage before the
/// final batch is an error.
fn scan(path: &Path) -> Result<(Vec<AnnotationRecord>, u64)> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;

    let mut parsed: Vec<(usize, usize, AnnotationRecord)> = Vec::new(); // (line no, end offset, record)
    let mut offset = 0usize;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        let complete = line.ends_with('\n');
        let body = line.trim_end();
        if body.is_empty() {
            continue;
        }
        match serde_json::from_str::<AnnotationRecord>(body) {
            Ok(r) if complete => parsed.push((i + 1, offset, r)),
            Ok(_) => {}
            Err(e) => {
                if complete && offset != text.len() {
                    return Err(Error::Record {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    });
                }
            }
        }
    }

    let mut records = Vec::with_capacity(parsed.len());
    let mut committed = 0u64;
    let mut i = 0;
    while i < parsed.len() {
        let key = (&parsed[i].2.annotator_id, &parsed[i].2.group_id);
        let mut j = i;
        while j < parsed.len() && (&parsed[j].2.annotator_id, &parsed[j].2.group_id) == key {
            j += 1;
        }
        if j - i != 4 {
            if j == parsed.len() && j - i < 4 {
                break; // torn tail
            }
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: parsed[i].0,
                message: format!("batch of {} records, expected 4", j - i),
            });
        }
        committed = parsed[j - 1].1 as u64;
        records.extend(parsed[i..j].iter().map(|(_, _, r)| r.clone()));
        i = j;
    }
    Ok((records, committed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annoservice::Label;

    fn batch(ann: &str, group: &str) -> Vec<AnnotationRecord> {
        (1..=4)
            .map(|v| AnnotationRecord {
                group_id: group.into(),
                variant_id: v,
                annotator_id: ann.into(),
                label: Label::Positive,
                elapsed_ms: 1000,
                display_order: [2, 1, 4, 3],
                submitted_at_ms: 7,
            })
            .collect()
    }

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let (mut log, old) = FileLog::open(&p).unwrap();
        assert!(old.is_empty());
        log.append_batch(&batch("a", "g1")).unwrap();
        log.append_batch(&batch("b", "g1")).unwrap();
        drop(log);
        let (_, old) = FileLog::open(&p).unwrap();
        assert_eq!(old.len(), 8);
        assert_eq!(read_record_log(&p).unwrap(), old);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let (mut log, _) = FileLog::open(&p).unwrap();
        log.append_batch(&batch("a", "g1")).unwrap();
        drop(log);
        let good_len = std::fs::metadata(&p).unwrap().len();
        // two complete lines of a second batch, then half a line
        let extra = batch("a", "g2");
        let mut tail = String::new();
        for r in &extra[..2] {
            tail.push_str(&serde_json::to_string(r).unwrap());
            tail.push('\n');
        }
        tail.push_str("{\"group_id\":\"g2\",\"vari");
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(tail.as_bytes()).unwrap();
        drop(f);

        let (mut log, old) = FileLog::open(&p).unwrap();
        assert_eq!(old.len(), 4);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), good_len);
        log.append_batch(&batch("a", "g2")).unwrap();
        assert_eq!(read_record_log(&p).unwrap().len(), 8);
    }

    #[test]
    fn damage_in_the_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let mut text = String::new();
        for r in batch("a", "g1").iter().take(3) {
            text.push_str(&serde_json::to_string(r).unwrap());
            text.push('\n');
        }
        for r in batch("a", "g2") {
            text.push_str(&serde_json::to_string(&r).unwrap());
            text.push('\n');
        }
        std::fs::write(&p, text).unwrap();
        assert!(read_record_log(&p).is_err());
        std::fs::write(&p, "garbage\n{}\n").unwrap();
        assert!(read_record_log(&p).is_err());
    }
}
