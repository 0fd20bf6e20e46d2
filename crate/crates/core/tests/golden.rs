//! Byte-level pin of the dataset file format. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test --test golden` after an intentional format change.

mod common;

use std::path::PathBuf;

use cdmarl::dataset::{load, read_dataset, write_dataset, Dataset};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_dataset.bin")
}

fn golden_dataset() -> Dataset {
    let env = common::tiny_env();
    let mut d = common::exhaustive_dataset(&env);
    d.transitions.truncate(5);
    d.meta.source_len = 5;
    d
}

#[test]
fn dataset_bytes_match_golden_file() {
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, &golden_dataset()).unwrap();
    let path = golden_path();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &bytes).unwrap();
    }
    let stored = std::fs::read(&path).unwrap();
    assert_eq!(stored, bytes);
    assert_eq!(load(&path).unwrap(), golden_dataset());
}

#[test]
fn golden_file_corruption_detected() {
    let mut stored = std::fs::read(golden_path()).unwrap();
    let last = stored.len() - 1;
    stored[last] ^= 0x01;
    assert!(read_dataset(&stored, &golden_path()).is_err());
}
