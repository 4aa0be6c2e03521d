//! Append-only block file.
//!
//! One block per line: the canonical encoding in standard base64, then a
//! newline. A record counts only once its newline is on disk, so a crash
//! mid-append leaves at most one unterminated tail, which `open` truncates.
//! Anything wrong with a terminated record is corruption and is never
//! repaired automatically.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use log::warn;
use sugarchain_core::codec::{Decode, Encode};
use sugarchain_core::ledger::{verify_encoded, Block, Chain, VerifyReport};

use crate::NodeError;

pub const BLOCKS_FILE: &str = "blocks.log";

#[derive(Debug)]
pub struct BlockStore {
    path: PathBuf,
    file: File,
}

/// What `open` had to discard from the end of the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TornTail {
    pub bytes: u64,
}

/// Split file contents into terminated records plus the unterminated tail.
fn split_records(raw: &[u8]) -> (Vec<&[u8]>, &[u8]) {
    let end = raw.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let (body, tail) = raw.split_at(end);
    let records = body
        .strip_suffix(b"\n")
        .map(|b| b.split(|&c| c == b'\n').collect())
        .unwrap_or_default();
    (records, tail)
}

fn corrupt(record: usize, reason: impl std::fmt::Display) -> NodeError {
    NodeError::CorruptStore(format!("record {record}: {reason}"))
}

fn decode_line(line: &[u8], record: usize) -> Result<Vec<u8>, NodeError> {
    STANDARD.decode(line).map_err(|e| corrupt(record, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, NodeError> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => NodeError::NotInitialized(path.display().to_string()),
            _ => NodeError::Io(format!("{}: {e}", path.display())),
        })?;
    Ok(raw)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> NodeError + '_ {
    move |e| NodeError::Io(format!("{}: {e}", path.display()))
}

impl BlockStore {
    /// Start a new store holding only `genesis`.
    pub fn create(dir: &Path, genesis: &Block) -> Result<Self, NodeError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(BLOCKS_FILE);
        let file = OpenOptions::new()
            .append(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => NodeError::AlreadyInitialized(path.display().to_string()),
                _ => NodeError::Io(format!("{}: {e}", path.display())),
            })?;
        let mut store = Self { path, file };
        store.append(genesis)?;
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(store)
    }

    /// Load and fully verify the stored chain. A torn final record is cut
    /// off (with a warning); any other damage is `CorruptStore`.
    pub fn open(dir: &Path) -> Result<(Self, Chain, Option<TornTail>), NodeError> {
        let path = dir.join(BLOCKS_FILE);
        let raw = read_file(&path)?;
        let (records, tail) = split_records(&raw);
        let mut blocks = Vec::with_capacity(records.len());
        for (i, line) in records.iter().enumerate() {
            let bytes = decode_line(line, i)?;
            blocks.push(Block::from_canonical_bytes(&bytes).map_err(|e| corrupt(i, e))?);
        }
        let chain = Chain::from_blocks(blocks).map_err(|f| NodeError::CorruptStore(f.to_string()))?;

        let torn = if tail.is_empty() {
            None
        } else {
            warn!(
                "{}: discarding {} bytes of an incomplete final record",
                path.display(),
                tail.len()
            );
            let f = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
            f.set_len((raw.len() - tail.len()) as u64).map_err(io_err(&path))?;
            f.sync_all().map_err(io_err(&path))?;
            Some(TornTail {
                bytes: tail.len() as u64,
            })
        };
        let file = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        Ok((Self { path, file }, chain, torn))
    }

    /// Durably append one block.
    pub fn append(&mut self, block: &Block) -> Result<(), NodeError> {
        let mut line = STANDARD.encode(block.to_canonical_bytes()).into_bytes();
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Re-verify the block file as it is on disk. An unterminated tail is not
/// part of the chain and is ignored.
pub fn verify_file(dir: &Path) -> Result<VerifyReport, NodeError> {
    let raw = read_file(&dir.join(BLOCKS_FILE))?;
    let (records, _) = split_records(&raw);
    let mut decoded = Vec::with_capacity(records.len());
    for line in &records {
        match STANDARD.decode(line) {
            Ok(b) => decoded.push(b),
            // let the verifier report this position as undecodable
            Err(_) => decoded.push(Vec::new()),
        }
    }
    Ok(verify_encoded(&decoded))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_terminated_records() {
        assert_eq!(split_records(b""), (vec![], &b""[..]));
        assert_eq!(split_records(b"ab\ncd\n"), (vec![&b"ab"[..], &b"cd"[..]], &b""[..]));
        assert_eq!(split_records(b"ab\ncd"), (vec![&b"ab"[..]], &b"cd"[..]));
        assert_eq!(split_records(b"ab\n\ncd\n").0.len(), 3);
    }
}
