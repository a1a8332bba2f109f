use proptest::prelude::*;
use sensrec::annotations::{parse_annotations, serialize_annotations, serialize_issues};
use sensrec_core::schema::{IssueCode, ItemAnnotation, Polarity, SensoryFacet, SensoryRecord, Severity};

const LISTING: &str = include_str!("fixtures/sample_listing.json");

#[test]
fn listing_parses_to_three_records() {
    let p = parse_annotations(LISTING.as_bytes());
    assert!(p.issues.is_empty(), "{:?}", p.issues);
    assert_eq!(p.items.len(), 1);
    let a = &p.items[0];
    assert_eq!(a.item_id, "0");
    assert_eq!(a.attributes.len(), 3);
    let r = &a.attributes;
    assert_eq!(
        (r[0].attribute, r[0].value.as_str(), r[0].confidence),
        (SensoryFacet::Color, "matte black", 0.93)
    );
    assert_eq!(r[0].evidence, "matte black finish");
    assert_eq!(
        (r[1].attribute, r[1].value.as_str(), r[1].confidence),
        (SensoryFacet::Sound, "quiet click", 0.88)
    );
    assert_eq!((r[2].attribute, r[2].value.as_str()), (SensoryFacet::Scent, "none"));
    assert!(r[2].negated);
    assert_eq!(r[2].polarity, Polarity::Unknown);
    assert_eq!(r[2].confidence, 0.91);
}

#[test]
fn serialize_is_byte_stable() {
    let p = parse_annotations(LISTING.as_bytes());
    let once = serialize_annotations(&p.items);
    let again = parse_annotations(&once);
    assert!(again.issues.is_empty());
    assert_eq!(again.items, p.items);
    assert_eq!(serialize_annotations(&again.items), once);
    let line = String::from_utf8(once).unwrap();
    assert_eq!(
        line.lines().next().unwrap(),
        r#"{"id":"0","attributes":[{"attribute":"color","value":"matte black","evidence":"matte black finish","polarity":"positive","negated":false,"confidence":0.93},{"attribute":"sound","value":"quiet click","evidence":"quiet click when pressed","polarity":"positive","negated":false,"confidence":0.88},{"attribute":"scent","value":"none","evidence":"odorless","polarity":"unknown","negated":true,"confidence":0.91}]}"#
    );
}

#[test]
fn empty_attribute_list() {
    let p = parse_annotations(br#"{"items":[{"id":0,"attributes":[]}]}"#);
    assert!(p.issues.is_empty());
    assert_eq!(
        p.items,
        vec![ItemAnnotation {
            item_id: "0".into(),
            attributes: vec![]
        }]
    );
}

#[test]
fn empty_input_gives_empty_output() {
    let p = parse_annotations(b"");
    assert!(p.items.is_empty() && p.issues.is_empty());
    assert!(serialize_annotations(&[]).is_empty());
}

#[test]
fn two_items_two_lines_in_order() {
    let items = vec![
        ItemAnnotation {
            item_id: "b".into(),
            attributes: vec![],
        },
        ItemAnnotation {
            item_id: "a".into(),
            attributes: vec![],
        },
    ];
    let s = String::from_utf8(serialize_annotations(&items)).unwrap();
    assert_eq!(
        s,
        "{\"id\":\"b\",\"attributes\":[]}\n{\"id\":\"a\",\"attributes\":[]}\n"
    );
}

#[test]
fn unknown_facet_drops_record_only() {
    let p = parse_annotations(include_bytes!("fixtures/bad_facet.jsonl"));
    assert_eq!(p.items.len(), 1);
    assert_eq!(p.items[0].attributes.len(), 1);
    assert_eq!(p.n_errors(), 1);
    let i = &p.issues[0];
    assert_eq!(
        (i.code, i.severity, i.record_index, i.item_id.as_str()),
        (IssueCode::UnknownFacet, Severity::Error, Some(1), "a1")
    );
    let line = String::from_utf8(serialize_issues(&p.issues)).unwrap();
    assert!(
        line.starts_with(r#"{"item_id":"a1","record_index":1,"severity":"error","code":"UNKNOWN_FACET","message":"#)
    );
}

#[test]
fn bad_lines_are_reported_and_skipped() {
    let input = b"{\"id\":\"x\",\"attributes\":[]}\n{not json\n[1,2]\n{\"attributes\":[]}\n{\"id\":\"y\",\"attributes\":[7,{\"attribute\":\"color\"}]}\n";
    let p = parse_annotations(input);
    let ids: Vec<&str> = p.items.iter().map(|a| a.item_id.as_str()).collect();
    assert_eq!(ids, ["x", "y"]);
    let codes: Vec<IssueCode> = p.issues.iter().map(|i| i.code).collect();
    assert_eq!(codes[0], IssueCode::BadJson);
    assert!(p.issues[0].message.starts_with("line 2"));
    assert_eq!(codes[1], IssueCode::BadType);
    assert_eq!(codes[2], IssueCode::MissingField);
    // record 0 is a number; record 1 lacks five fields
    assert_eq!(p.issues.iter().filter(|i| i.record_index == Some(0)).count(), 1);
    assert_eq!(p.issues.iter().filter(|i| i.record_index == Some(1)).count(), 5);
}

#[test]
fn long_evidence_truncated_in_file() {
    let ev = "x".repeat(130);
    let line = format!(
        r#"{{"id":"e","attributes":[{{"attribute":"texture","value":"soft","evidence":"{ev}","polarity":"positive","negated":false,"confidence":0.5}}]}}"#
    );
    let p = parse_annotations(line.as_bytes());
    assert_eq!(p.n_errors(), 0);
    assert_eq!(p.n_warnings(), 1);
    assert_eq!(p.items[0].attributes[0].evidence.len(), 120);
}

fn record() -> impl Strategy<Value = SensoryRecord> {
    (
        0..16usize,
        "[a-z][a-z ]{0,12}[a-z]",
        "[ -~]{0,40}",
        0..4usize,
        any::<bool>(),
        0.0..=1.0f64,
    )
        .prop_map(|(f, value, evidence, p, negated, confidence)| SensoryRecord {
            attribute: SensoryFacet::ALL[f],
            value,
            evidence,
            polarity: Polarity::ALL[p],
            negated,
            confidence,
        })
}

proptest! {
    #[test]
    fn parse_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_annotations(&bytes);
    }

    #[test]
    fn parse_never_panics_on_jsonish(s in r#"[\{\}\[\]":,a-z0-9 \n.-]{0,200}"#) {
        let _ = parse_annotations(s.as_bytes());
    }

    #[test]
    fn round_trip(items in proptest::collection::vec(
        ("[a-zA-Z0-9]{1,8}", proptest::collection::vec(record(), 0..6)),
        0..5,
    )) {
        // distinct values keep every record under the per-item cap
        let items: Vec<ItemAnnotation> = items
            .into_iter()
            .map(|(item_id, attributes)| ItemAnnotation { item_id, attributes })
            .collect();
        let bytes = serialize_annotations(&items);
        let p = parse_annotations(&bytes);
        prop_assert!(p.issues.is_empty(), "{:?}", p.issues);
        prop_assert_eq!(&p.items, &items);
        prop_assert_eq!(serialize_annotations(&p.items), bytes);
    }
}
