use proptest::prelude::*;
use sensrec::binfmt::*;
use sensrec_core::kernel::{ParamStore, Tensor};
use sensrec_core::student::SensoryEmbeddingTable;

fn table(n: usize, dim: usize) -> SensoryEmbeddingTable {
    let rows = (0..n)
        .map(|i| {
            (
                format!("item{i:03}"),
                (0..dim).map(|j| (i * dim + j) as f32 * 0.25 - 3.0).collect(),
            )
        })
        .collect();
    SensoryEmbeddingTable::from_rows(dim, rows).unwrap()
}

#[test]
fn table_header_layout() {
    let t = table(3, 768);
    let b = encode_table(&t);
    assert_eq!(&b[0..4], b"SENS");
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 768);
    assert_eq!(u32::from_le_bytes(b[20..24].try_into().unwrap()), 0);
    assert_eq!(b.len(), 24 + 3 * 768 * 4);
    // row 1, column 0
    let off = 24 + 768 * 4;
    assert_eq!(f32::from_le_bytes(b[off..off + 4].try_into().unwrap()), t.row(1)[0]);
    let idx = String::from_utf8(encode_index(&t)).unwrap();
    assert_eq!(idx.lines().nth(2).unwrap(), r#"{"row":2,"item_id":"item002"}"#);
}

#[test]
fn table_file_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.sens");
    let mut rows: Vec<(String, Vec<f32>)> = (0..50)
        .map(|i| (format!("x{i}"), (0..768).map(|j| ((i * 31 + j) as f32).sin()).collect()))
        .collect();
    rows[7].1[3] = -0.0;
    rows[8].1[5] = f32::MIN_POSITIVE / 2.0;
    let t = SensoryEmbeddingTable::from_rows(768, rows).unwrap();
    write_table(&p, &t).unwrap();
    assert!(index_path(&p).ends_with("t.index.jsonl"));
    let back = read_table(&p).unwrap();
    assert_eq!(back.ids(), t.ids());
    let bits = |t: &SensoryEmbeddingTable| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&t));
}

#[test]
fn table_rejects_damage() {
    let t = table(2, 4);
    let b = encode_table(&t);
    let mut bad = b.clone();
    bad[0] = b'X';
    assert!(matches!(decode_table_payload(&bad), Err(FormatError::Magic { .. })));
    assert!(matches!(
        decode_table_payload(&b[..b.len() - 1]),
        Err(FormatError::Truncated { .. })
    ));
    let mut long = b.clone();
    long.push(0);
    assert!(matches!(decode_table_payload(&long), Err(FormatError::Trailing(1))));
    let mut v2 = b.clone();
    v2[4] = 2;
    assert!(matches!(decode_table_payload(&v2), Err(FormatError::Version(2))));
    assert!(decode_index("{\"row\":1,\"item_id\":\"a\"}\n").is_err());
}

/// Checkpoint bytes assembled by hand, field by field.
fn hand_checkpoint() -> Vec<u8> {
    let mut b = b"SRCK".to_vec();
    b.extend(1u32.to_le_bytes());
    b.extend(2u32.to_le_bytes());
    b.extend(1u32.to_le_bytes());
    b.push(b'w');
    b.push(0);
    b.extend(2u32.to_le_bytes());
    b.extend(2u64.to_le_bytes());
    b.extend(3u64.to_le_bytes());
    for v in [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0] {
        b.extend(v.to_le_bytes());
    }
    b.extend(4u32.to_le_bytes());
    b.extend(b"bias");
    b.push(1);
    b.extend(1u32.to_le_bytes());
    b.extend(2u64.to_le_bytes());
    for v in [0.5f32, -1.5] {
        b.extend(v.to_le_bytes());
    }
    b
}

#[test]
fn checkpoint_layout_matches_hand_encoding() {
    let store = decode_params(&hand_checkpoint()).unwrap();
    assert_eq!(store.len(), 2);
    let w = store.value(store.find("w").unwrap());
    assert_eq!(w.shape(), &[2, 3]);
    assert_eq!(w.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let b = store.value(store.find("bias").unwrap());
    assert_eq!(b.data(), &[0.5, -1.5]);

    let mut s = ParamStore::new();
    s.add("w", Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let enc = encode_params(&s);
    let hand = hand_checkpoint();
    assert_eq!(&enc[12..], &hand[12..12 + enc.len() - 12]);
    assert_eq!(u32::from_le_bytes(enc[8..12].try_into().unwrap()), 1);
}

#[test]
fn checkpoint_rejects_damage() {
    let b = hand_checkpoint();
    assert!(decode_params(&b[..b.len() - 3]).is_err());
    let mut t = b.clone();
    t[17] = 9;
    assert!(matches!(decode_params(&t), Err(FormatError::Dtype(9))));
    assert!(matches!(
        decode_params(b"SENS\x01\0\0\0\0\0\0\0"),
        Err(FormatError::Magic { .. })
    ));
}

fn store_strategy() -> impl Strategy<Value = ParamStore> {
    proptest::collection::vec(("[a-z0-9._]{1,16}", proptest::collection::vec(1usize..4, 0..4)), 0..6)
        .prop_flat_map(|specs| {
            let sizes: Vec<usize> = specs.iter().map(|(_, s)| s.iter().product()).collect();
            let total: usize = sizes.iter().sum();
            (Just(specs), proptest::collection::vec(any::<f64>(), total))
        })
        .prop_map(|(specs, data)| {
            let mut s = ParamStore::new();
            let mut at = 0;
            for (name, shape) in specs {
                let n: usize = shape.iter().product();
                s.add(name, Tensor::new(shape, data[at..at + n].to_vec()).unwrap());
                at += n;
            }
            s
        })
}

proptest! {
    #[test]
    fn checkpoint_round_trip(store in store_strategy()) {
        let back = decode_params(&encode_params(&store)).unwrap();
        prop_assert_eq!(back.len(), store.len());
        for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(a.value.shape(), b.value.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn decoders_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode_params(&bytes);
        let _ = decode_table_payload(&bytes);
        let mut framed = b"SRCK\x01\0\0\0".to_vec();
        framed.extend(&bytes);
        let _ = decode_params(&framed);
    }
}
