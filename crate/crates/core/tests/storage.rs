use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;

use coopmds::cluster::{run_scenario, ClusterConfig};
use coopmds::shard::{decode_bytes, encode_bytes, read_shards, repair_shards, shard_path, usable, verify_shards, write_shards};
use coopmds::{make_code, Error, Family, FieldSpec, Registry, RepairMode};

fn sample(len: usize) -> Vec<u8> {
    (0..len).map(|i| (i * 131 + i / 7) as u8).collect()
}

#[test]
fn shards_survive_disk_and_centralized_repair() {
    let dir = tempfile::tempdir().unwrap();
    let spec = make_code(Family::AnySubset, 4, 1, 2, 2, FieldSpec::GF256).unwrap();
    let data = sample(5000);
    write_shards(dir.path(), &encode_bytes(&spec, &data).unwrap()).unwrap();
    fs::remove_file(shard_path(dir.path(), 1)).unwrap();
    fs::remove_file(shard_path(dir.path(), 3)).unwrap();

    let found = usable(read_shards(dir.path()).unwrap());
    assert_eq!(found.keys().copied().collect::<Vec<_>>(), vec![2, 4]);
    let (rebuilt, report) = repair_shards(&found, &[1, 3], &[2, 4], RepairMode::Centralized).unwrap();
    // hdl/(h+d-k) = 2*2*729/3
    assert_eq!(report.per_stripe_total, 972);
    assert!(report.optimal);

    let mut all = found;
    for s in rebuilt {
        all.insert(s.node(), s);
    }
    assert_eq!(decode_bytes(&all).unwrap(), data);
}

#[test]
fn flipped_payload_byte_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let spec = make_code(Family::FixedSubset, 5, 2, 2, 3, FieldSpec::GF256).unwrap();
    write_shards(dir.path(), &encode_bytes(&spec, &sample(300)).unwrap()).unwrap();
    let path = shard_path(dir.path(), 4);
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    fs::write(&path, bytes).unwrap();

    let found = read_shards(dir.path()).unwrap();
    assert!(matches!(found[&4], Err(Error::Checksum { node: 4 })));
    let report = verify_shards(&found);
    assert!(!report.ok);
    assert_eq!(report.shards.iter().filter(|s| !s.ok).count(), 1);
}

#[test]
fn fixed_subset_refuses_other_failures() {
    let spec = make_code(Family::FixedSubset, 5, 2, 2, 3, FieldSpec::GF256).unwrap();
    let shards: BTreeMap<_, _> = encode_bytes(&spec, &sample(64)).unwrap().into_iter().map(|s| (s.node(), s)).collect();
    let err = repair_shards(&shards, &[2, 3], &[1, 4, 5], RepairMode::Cooperative).unwrap_err();
    assert!(matches!(err, Error::FamilyMismatch(_)), "{err:?}");
}

#[test]
fn scenario_with_too_many_failures_is_rejected() {
    let cfg = ClusterConfig::from_json(
        r#"{"code":{"family":"fixed-subset","n":5,"k":2,"h":2,"d":3},
            "events":[{"event":"fail","nodes":[1,2,3,4]},{"event":"repair","helpers":[5]}]}"#,
    )
    .unwrap();
    assert!(run_scenario(&cfg, &Registry::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_two_shards_rebuild_the_file(data in proptest::collection::vec(any::<u8>(), 1..2000), a in 1usize..=5, b in 1usize..=5) {
        prop_assume!(a != b);
        let spec = make_code(Family::FixedSubset, 5, 2, 1, 3, FieldSpec::GF256).unwrap();
        let shards: BTreeMap<_, _> = encode_bytes(&spec, &data)
            .unwrap()
            .into_iter()
            .filter(|s| s.node() == a || s.node() == b)
            .map(|s| (s.node(), s))
            .collect();
        prop_assert_eq!(decode_bytes(&shards).unwrap(), data);
    }
}
