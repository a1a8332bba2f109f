//! Annotation JSONL: decoding into validated [`ItemAnnotation`]s and the
//! canonical one-item-per-line encoding.

use serde_json::Value;

use sensrec_core::schema::{validate_item, Field, IssueCode, ItemAnnotation, RawRecord, ValidationIssue};

/// Result of reading an annotation stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parsed {
    pub items: Vec<ItemAnnotation>,
    pub issues: Vec<ValidationIssue>,
}

impl Parsed {
    pub fn n_errors(&self) -> usize {
        self.issues.iter().filter(|i| i.is_error()).count()
    }

    pub fn n_warnings(&self) -> usize {
        self.issues.len() - self.n_errors()
    }

    pub fn n_records(&self) -> usize {
        self.items.iter().map(|a| a.attributes.len()).sum()
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn field<T>(obj: &serde_json::Map<String, Value>, key: &str, get: impl Fn(&Value) -> Option<T>) -> Field<T> {
    match obj.get(key) {
        None => Field::Missing,
        Some(v) => match get(v) {
            Some(x) => Field::Value(x),
            None => Field::WrongType(type_name(v).into()),
        },
    }
}

fn raw_record(obj: &serde_json::Map<String, Value>) -> RawRecord {
    let string = |v: &Value| v.as_str().map(String::from);
    RawRecord {
        attribute: field(obj, "attribute", string),
        value: field(obj, "value", string),
        evidence: field(obj, "evidence", string),
        polarity: field(obj, "polarity", string),
        negated: field(obj, "negated", Value::as_bool),
        confidence: field(obj, "confidence", Value::as_f64),
    }
}

fn item_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn doc_error(line: Option<usize>, code: IssueCode, msg: String) -> ValidationIssue {
    let msg = match line {
        Some(l) => format!("line {l}: {msg}"),
        None => msg,
    };
    ValidationIssue::error("", None, code, msg)
}

fn decode_item(v: &Value, line: Option<usize>, out: &mut Parsed) {
    let Some(obj) = v.as_object() else {
        out.issues.push(doc_error(
            line,
            IssueCode::BadType,
            format!("item is a {}, expected object", type_name(v)),
        ));
        return;
    };
    let id = match obj.get("id").or_else(|| obj.get("item_id")) {
        None => {
            out.issues
                .push(doc_error(line, IssueCode::MissingField, "item has no \"id\"".into()));
            return;
        }
        Some(v) => match item_id(v) {
            Some(id) => id,
            None => {
                out.issues.push(doc_error(
                    line,
                    IssueCode::BadType,
                    format!("item id is a {}", type_name(v)),
                ));
                return;
            }
        },
    };
    let records = match obj.get("attributes") {
        None => {
            out.issues.push(ValidationIssue::error(
                &id,
                None,
                IssueCode::MissingField,
                "item has no \"attributes\"".into(),
            ));
            return;
        }
        Some(Value::Array(a)) => a,
        Some(v) => {
            out.issues.push(ValidationIssue::error(
                &id,
                None,
                IssueCode::BadType,
                format!("\"attributes\" is a {}, expected array", type_name(v)),
            ));
            return;
        }
    };
    // Non-object records are reported here and replaced by an all-missing
    // record so indices stay aligned with the input; its MISSING_FIELD
    // issues are suppressed.
    let mut raws = Vec::with_capacity(records.len());
    let mut bad = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match r.as_object() {
            Some(o) => raws.push(raw_record(o)),
            None => {
                bad.push(i);
                out.issues.push(ValidationIssue::error(
                    &id,
                    Some(i),
                    IssueCode::BadType,
                    format!("record is a {}, expected object", type_name(r)),
                ));
                raws.push(RawRecord::default());
            }
        }
    }
    let (ann, issues) = validate_item(&id, &raws);
    out.issues.extend(
        issues
            .into_iter()
            .filter(|i| !i.record_index.is_some_and(|r| bad.contains(&r))),
    );
    out.items.push(ann);
}

fn decode_document(v: &Value, line: Option<usize>, out: &mut Parsed) {
    match v.get("items") {
        Some(Value::Array(items)) => items.iter().for_each(|it| decode_item(it, line, out)),
        Some(other) => out.issues.push(doc_error(
            line,
            IssueCode::BadType,
            format!("\"items\" is a {}, expected array", type_name(other)),
        )),
        None => decode_item(v, line, out),
    }
}

/// Reads JSONL (one item or `{"items": [...]}` wrapper per line) or a single
/// pretty-printed document. Never fails: undecodable lines become `BAD_JSON`
/// issues and decoding continues with the next line.
pub fn parse_annotations(bytes: &[u8]) -> Parsed {
    let mut out = Parsed::default();
    let text = String::from_utf8_lossy(bytes);
    let whole: Result<Vec<Value>, _> = serde_json::Deserializer::from_str(&text).into_iter::<Value>().collect();
    match whole {
        Ok(docs) => docs.iter().for_each(|d| decode_document(d, None, &mut out)),
        Err(_) => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Value>(line) {
                    Ok(v) => decode_document(&v, Some(i + 1), &mut out),
                    Err(e) => out
                        .issues
                        .push(doc_error(Some(i + 1), IssueCode::BadJson, e.to_string())),
                }
            }
        }
    }
    out
}

/// Canonical JSONL: one `{"id", "attributes"}` object per line in input
/// order, record keys in schema order.
pub fn serialize_annotations(items: &[ItemAnnotation]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("annotation serializes");
        out.push(b'\n');
    }
    out
}

pub fn serialize_issues(issues: &[ValidationIssue]) -> Vec<u8> {
    let mut out = Vec::new();
    for i in issues {
        serde_json::to_writer(&mut out, i).expect("issue serializes");
        out.push(b'\n');
    }
    out
}
