use std::collections::HashSet;
use std::path::Path;

use cfloss::dataset::{build_dataset, filter_min_interactions, SplitFractions};
use cfloss::io::{load_prepared, parse_interactions, save_prepared, InteractionFormat};
use cfloss::synthetic::{block_preferences, BlockConfig};

fn fractions() -> SplitFractions {
    SplitFractions::new(0.8, 0.1, 0.1).unwrap()
}

#[test]
fn ten_pairs_are_conserved() {
    let text = "a x\na y\na z\nb x\nb w\nb v\nc x\nc y\nc w\nc v\n";
    let pairs = parse_interactions(text.as_bytes(), Path::new("toy"), InteractionFormat::EdgeList, None).unwrap();
    let ds = build_dataset(&pairs, fractions(), 1).unwrap();
    assert_eq!(ds.train_pairs.len() + ds.valid_pairs.len() + ds.test_pairs.len(), 10);
    assert_eq!(ds.num_users, 3);
    assert_eq!(ds.num_items, 5);
    let again = build_dataset(&pairs, fractions(), 1).unwrap();
    assert_eq!(ds, again);
}

#[test]
fn splits_partition_the_synthetic_data() {
    let pairs = block_preferences(&BlockConfig::tiny(), 9).unwrap();
    let ds = build_dataset(&pairs, fractions(), 4).unwrap();
    let mut all: HashSet<(usize, usize)> = HashSet::new();
    for p in ds.train_pairs.iter().chain(&ds.valid_pairs).chain(&ds.test_pairs) {
        assert!(all.insert(*p));
    }
    assert_eq!(all.len(), pairs.len());
    for (u, items) in ds.user_train_items.iter().enumerate() {
        assert!(!items.is_empty(), "user {u} has no training items");
    }
}

#[test]
fn prepared_directory_round_trips() {
    let pairs = block_preferences(&BlockConfig::tiny(), 2).unwrap();
    let ds = build_dataset(&pairs, fractions(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_prepared(&ds, dir.path()).unwrap();
    let first = std::fs::read(dir.path().join("train.txt")).unwrap();
    assert_eq!(load_prepared(dir.path()).unwrap(), ds);
    save_prepared(&ds, dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join("train.txt")).unwrap(), first);
}

#[test]
fn min_interaction_filter_is_a_fixed_point() {
    let pairs = block_preferences(&BlockConfig::tiny(), 3).unwrap();
    let kept = filter_min_interactions(&pairs, 5);
    assert_eq!(filter_min_interactions(&kept, 5), kept);
}

#[test]
fn malformed_line_reports_location() {
    let err = parse_interactions("1 2\nlonely\n".as_bytes(), Path::new("bad.txt"), InteractionFormat::EdgeList, None)
        .unwrap_err()
        .to_string();
    assert!(err.contains("bad.txt:2"), "{err}");
}

#[test]
fn custom_delimiter() {
    let text = "1::10::5::978300760\n2::10::3::978300761\n";
    let pairs = parse_interactions(text.as_bytes(), Path::new("r"), InteractionFormat::EdgeList, Some("::")).unwrap();
    assert_eq!(pairs[1], ("2".to_string(), "10".to_string()));
}
