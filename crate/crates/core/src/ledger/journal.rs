//! Append-only files of length-prefixed records.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub(crate) struct RecordFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RecordFile {
    /// Opens `path` for appending and returns the records already in it.
    pub(crate) fn open(path: &Path) -> io::Result<(Self, Vec<Vec<u8>>)> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut existing = Vec::new();
        if path.exists() {
            File::open(path)?.read_to_end(&mut existing)?;
        }
        let records = split_records(&existing)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
            },
            records,
        ))
    }

    pub(crate) fn append(&mut self, payload: &[u8]) -> io::Result<()> {
        let len = u32::try_from(payload.len()).map_err(|_| io::Error::other("record too large"))?;
        self.out.write_all(&len.to_be_bytes())?;
        self.out.write_all(payload)?;
        self.out.flush()
    }

    pub(crate) fn path(&self) -> &Path {
        &self.path
    }
}

fn split_records(mut bytes: &[u8]) -> io::Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated record header"));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let body = bytes
            .get(4..4 + len)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "truncated record body"))?;
        out.push(body.to_vec());
        bytes = &bytes[4 + len..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_survive_reopen_and_truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.log");
        {
            let (mut f, prior) = RecordFile::open(&path).unwrap();
            assert!(prior.is_empty());
            f.append(b"one").unwrap();
            f.append(b"").unwrap();
        }
        let (_, prior) = RecordFile::open(&path).unwrap();
        assert_eq!(prior, vec![b"one".to_vec(), Vec::new()]);

        let mut raw = std::fs::read(&path).unwrap();
        raw.extend_from_slice(&[0, 0, 0, 9, 1]);
        std::fs::write(&path, raw).unwrap();
        assert!(RecordFile::open(&path).is_err());
    }
}
