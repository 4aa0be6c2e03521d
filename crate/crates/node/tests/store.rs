#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::io::Write;

use sugarchain_core::codec::Encode;
use sugarchain_node::store::{verify_file, BlockStore, TornTail, BLOCKS_FILE};
use sugarchain_node::NodeError;

fn write_chain(dir: &std::path::Path, blocks: usize) -> Vec<Vec<u8>> {
    let chain = support::chain_with_blocks(blocks, 1);
    let mut store = BlockStore::create(dir, chain.genesis()).unwrap();
    for b in &chain.blocks()[1..] {
        store.append(b).unwrap();
    }
    chain.blocks().iter().map(Encode::to_canonical_bytes).collect()
}

#[test]
fn round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let original = write_chain(dir.path(), 100);
    let file_before = fs::read(dir.path().join(BLOCKS_FILE)).unwrap();
    let (_, chain, torn) = BlockStore::open(dir.path()).unwrap();
    assert_eq!(torn, None);
    assert_eq!(chain.height(), 100);
    let reloaded: Vec<Vec<u8>> = chain.blocks().iter().map(Encode::to_canonical_bytes).collect();
    assert_eq!(reloaded, original);
    assert_eq!(fs::read(dir.path().join(BLOCKS_FILE)).unwrap(), file_before);
    assert!(verify_file(dir.path()).unwrap().is_ok());
}

#[test]
fn torn_tail_recovers_previous_height() {
    for cut in [1usize, 10, 100] {
        let dir = tempfile::tempdir().unwrap();
        write_chain(dir.path(), 20);
        let path = dir.path().join(BLOCKS_FILE);
        let full = fs::read(&path).unwrap();
        // a crash mid-append leaves part of the last record without its newline
        let keep = full.len() - cut.min(full.len() - 1);
        fs::write(&path, &full[..keep]).unwrap();
        let (mut store, chain, torn) = BlockStore::open(dir.path()).unwrap();
        assert_eq!(chain.height(), 19, "cut {cut}");
        let torn: TornTail = torn.expect("tail reported");
        assert!(torn.bytes > 0);
        let recovered = fs::read(&path).unwrap();
        assert!(full.starts_with(&recovered));
        assert_eq!(recovered.last(), Some(&b'\n'));

        // the store keeps working after recovery
        let again = support::chain_with_blocks(20, 1);
        store.append(again.block(20).unwrap()).unwrap();
        drop(store);
        let (_, chain, torn) = BlockStore::open(dir.path()).unwrap();
        assert_eq!((chain.height(), torn), (20, None));
    }
}

#[test]
fn mid_file_corruption_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    write_chain(dir.path(), 100);
    let path = dir.path().join(BLOCKS_FILE);
    let pristine = fs::read(&path).unwrap();
    let line_starts: Vec<usize> = std::iter::once(0)
        .chain(pristine.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1))
        .collect();
    // flip one byte in block 10
    let mut bytes = pristine.clone();
    let at = line_starts[10] + 5;
    bytes[at] = if bytes[at] == b'A' { b'B' } else { b'A' };
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(BlockStore::open(dir.path()), Err(NodeError::CorruptStore(_))));
    assert_eq!(fs::read(&path).unwrap(), bytes, "corruption is never auto-repaired");
    assert_eq!(verify_file(dir.path()).unwrap().failed_height(), Some(10));

    // a garbage line in the middle
    let mut bytes = pristine[..line_starts[50]].to_vec();
    bytes.extend_from_slice(b"not base64 at all\n");
    bytes.extend_from_slice(&pristine[line_starts[50]..]);
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(BlockStore::open(dir.path()), Err(NodeError::CorruptStore(_))));

    // a terminated but damaged final record is corruption, not a torn write
    let mut bytes = pristine.clone();
    let n = bytes.len();
    bytes[n - 3] = if bytes[n - 3] == b'A' { b'B' } else { b'A' };
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(BlockStore::open(dir.path()), Err(NodeError::CorruptStore(_))));
}

#[test]
fn create_refuses_existing_store() {
    let dir = tempfile::tempdir().unwrap();
    write_chain(dir.path(), 1);
    let chain = support::chain_with_blocks(1, 1);
    assert!(matches!(
        BlockStore::create(dir.path(), chain.genesis()),
        Err(NodeError::AlreadyInitialized(_))
    ));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(BlockStore::open(empty.path()), Err(NodeError::NotInitialized(_))));
    let mut f = fs::File::create(empty.path().join(BLOCKS_FILE)).unwrap();
    f.write_all(b"").unwrap();
    assert!(matches!(BlockStore::open(empty.path()), Err(NodeError::CorruptStore(_))));
}
