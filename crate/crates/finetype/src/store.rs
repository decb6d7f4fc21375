//! Append-only annotation store.
//!
//! One JSON record per line. A single writer thread owns the file: every
//! append is written and fsynced before the caller is acknowledged, then
//! published to readers as a new immutable snapshot.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, RwLock};
use std::thread;

use anyhow::{bail, Context, Result};
use log::warn;

use crate::formats::AnnotationLine;

type Ack = tokio::sync::oneshot::Sender<Result<(), String>>;

pub struct AnnotationStore {
    path: PathBuf,
    snapshot: Arc<RwLock<Arc<Vec<AnnotationLine>>>>,
    writer: mpsc::Sender<(AnnotationLine, Ack)>,
}

/// Parses the store file. A truncated final line (an interrupted append that
/// was never acknowledged) is dropped; any other bad line is an error.
fn load(path: &Path) -> Result<(Vec<AnnotationLine>, bool)> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), false)),
        Err(e) => return Err(e).with_context(|| format!("reading store {}", path.display())),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    let mut torn = false;
    for (i, l) in lines.iter().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(l) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !complete => {
                warn!("store {}: dropping truncated final line", path.display());
                torn = true;
            }
            Err(e) => bail!("store {} line {}: {e}", path.display(), i + 1),
        }
    }
    Ok((out, torn))
}

impl AnnotationStore {
    pub fn open(path: &Path) -> Result<Self> {
        let (records, torn) = load(path)?;
        // Make sure the next append starts on a fresh line.
        let on_disk = fs::read(path).unwrap_or_default();
        if !on_disk.is_empty() && !on_disk.ends_with(b"\n") {
            let mut f = OpenOptions::new().write(true).open(path)?;
            if torn {
                let keep = on_disk.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
                f.set_len(keep as u64)?;
            } else {
                use std::io::{Seek, SeekFrom};
                f.seek(SeekFrom::End(0))?;
                f.write_all(b"\n")?;
            }
            f.sync_all()?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening store {}", path.display()))?;
        let snapshot = Arc::new(RwLock::new(Arc::new(records)));
        let (tx, rx) = mpsc::channel::<(AnnotationLine, Ack)>();
        let published = Arc::clone(&snapshot);
        thread::Builder::new()
            .name("annotation-store".into())
            .spawn(move || writer_loop(file, rx, published))?;
        Ok(AnnotationStore {
            path: path.to_path_buf(),
            snapshot,
            writer: tx,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// All records in append order.
    pub fn records(&self) -> Arc<Vec<AnnotationLine>> {
        Arc::clone(&self.snapshot.read().expect("snapshot lock"))
    }

    /// Appends a record; returns once it is durable.
    pub async fn append(&self, record: AnnotationLine) -> Result<()> {
        let (ack, done) = tokio::sync::oneshot::channel();
        self.writer
            .send((record, ack))
            .map_err(|_| anyhow::anyhow!("annotation writer stopped"))?;
        match done.await {
            Ok(Ok(())) => Ok(()),
            Ok(Err(e)) => bail!("{e}"),
            Err(_) => bail!("annotation writer stopped"),
        }
    }

    /// Blocking variant of [`append`](Self::append) for synchronous callers.
    pub fn append_blocking(&self, record: AnnotationLine) -> Result<()> {
        let (ack, done) = tokio::sync::oneshot::channel();
        self.writer
            .send((record, ack))
            .map_err(|_| anyhow::anyhow!("annotation writer stopped"))?;
        match done.blocking_recv() {
            Ok(Ok(())) => Ok(()),
            Ok(Err(e)) => bail!("{e}"),
            Err(_) => bail!("annotation writer stopped"),
        }
    }
}

fn writer_loop(
    mut file: File,
    rx: mpsc::Receiver<(AnnotationLine, Ack)>,
    snapshot: Arc<RwLock<Arc<Vec<AnnotationLine>>>>,
) {
    while let Ok((record, ack)) = rx.recv() {
        let result = (|| -> std::io::Result<()> {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()
        })();
        match result {
            Ok(()) => {
                let mut guard = snapshot.write().expect("snapshot lock");
                let mut next = Vec::with_capacity(guard.len() + 1);
                next.extend_from_slice(&guard);
                next.push(record);
                *guard = Arc::new(next);
                drop(guard);
                let _ = ack.send(Ok(()));
            }
            Err(e) => {
                let _ = ack.send(Err(format!("writing annotation: {e}")));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(annotator: &str, mention: &str) -> AnnotationLine {
        AnnotationLine {
            annotator: annotator.into(),
            document: "d".into(),
            mention: mention.into(),
            labels: vec!["person".into()],
            timestamp: 1,
        }
    }

    #[test]
    fn appends_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        {
            let store = AnnotationStore::open(&path).unwrap();
            store.append_blocking(rec("a", "m1")).unwrap();
            store.append_blocking(rec("b", "m1")).unwrap();
            assert_eq!(store.records().len(), 2);
        }
        let store = AnnotationStore::open(&path).unwrap();
        assert_eq!(*store.records(), vec![rec("a", "m1"), rec("b", "m1")]);
    }

    #[test]
    fn torn_tail_is_dropped_and_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let good = serde_json::to_string(&rec("a", "m1")).unwrap();
        fs::write(&path, format!("{good}\n{{\"annotator\":\"b\",\"docu")).unwrap();
        let store = AnnotationStore::open(&path).unwrap();
        assert_eq!(store.records().len(), 1);
        store.append_blocking(rec("c", "m2")).unwrap();
        drop(store);
        let store = AnnotationStore::open(&path).unwrap();
        assert_eq!(*store.records(), vec![rec("a", "m1"), rec("c", "m2")]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let good = serde_json::to_string(&rec("a", "m1")).unwrap();
        fs::write(&path, format!("garbage\n{good}\n")).unwrap();
        assert!(AnnotationStore::open(&path).is_err());
    }
}
