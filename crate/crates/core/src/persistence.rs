//! Byte-canonical snapshots (`.mcs`).
//!
//! ```text
//! metacore-snapshot v1
//! capacity <Kind> <n>          one line per kind, kind order
//! fresh <Kind> <n>             one line per kind, kind order
//! <Kind:i> <feature>=<v>[,<v>...] ...
//! tombstone <Kind:i>
//! ```
//!
//! Body lines cover every issued index in (kind, index) order. Features
//! appear in catalog order, dynamic features after built-ins in id order.
//! Empty slots and the derived `identifier` are not written. UTF-8, LF line
//! endings, no trailing whitespace.
//!
//! A document is accepted only if re-serializing the loaded store reproduces
//! it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::kernel::{feature_catalog, FeatureDescriptor, MetaKind, ValueKind};
use crate::store::{parse_index, Capacities, ElementId, ElementRecord, FeatureKey, Slot, Store};
use crate::value::{end_of_quoted, looks_like_id, parse_value, Value};

pub const MAGIC: &str = "metacore-snapshot";
pub const VERSION: &str = "v1";
pub const EXTENSION: &str = "mcs";

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("MalformedSnapshot line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("UnsupportedVersion {0}")]
    UnsupportedVersion(String),
    #[error("ReferenceToMissingElement line {line}: {id}")]
    ReferenceToMissingElement { line: usize, id: ElementId },
}

fn malformed(line: usize, reason: impl Into<String>) -> SnapshotError {
    SnapshotError::Malformed {
        line,
        reason: reason.into(),
    }
}

/// Canonical bytes of `store`.
pub fn serialize(store: &Store) -> Vec<u8> {
    serialize_to_string(store).into_bytes()
}

pub fn serialize_to_string(store: &Store) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    for kind in MetaKind::ALL {
        let _ = writeln!(out, "capacity {kind} {}", store.capacity(kind));
    }
    for kind in MetaKind::ALL {
        let _ = writeln!(out, "fresh {kind} {}", store.next_fresh(kind));
    }
    for kind in MetaKind::ALL {
        for index in 1..store.next_fresh(kind) {
            let id = ElementId::new(kind, index);
            match store.slot(id) {
                Some(Slot::Live(record)) => write_record(&mut out, record),
                Some(Slot::Tombstone) => {
                    let _ = writeln!(out, "tombstone {id}");
                }
                _ => {}
            }
        }
    }
    out
}

fn write_record(out: &mut String, record: &ElementRecord) {
    let id = record.id();
    let _ = write!(out, "{id}");
    for (key, values) in record.slots() {
        let _ = write!(out, " {}=", key.token(id.kind));
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
    }
    out.push('\n');
}

/// Rebuilds a store from canonical bytes.
pub fn deserialize(bytes: &[u8]) -> Result<Store, SnapshotError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()]
            .iter()
            .filter(|b| **b == b'\n')
            .count()
            + 1;
        malformed(line, "invalid UTF-8")
    })?;
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    } else if !text.is_empty() {
        return Err(malformed(lines.len(), "missing final newline"));
    }

    let header = lines.first().copied().unwrap_or("");
    match header.strip_prefix(MAGIC).and_then(|r| r.strip_prefix(' ')) {
        Some(v) if v == VERSION => {}
        Some(v) if v.starts_with('v') => {
            return Err(SnapshotError::UnsupportedVersion(v.to_string()))
        }
        _ => return Err(malformed(1, "missing snapshot header")),
    }

    let mut caps = Capacities::default();
    let mut fresh = [0u32; MetaKind::COUNT];
    for (section, kind_index) in (0..2).flat_map(|s| (0..MetaKind::COUNT).map(move |k| (s, k))) {
        let kind = MetaKind::ALL[kind_index];
        let line_no = 2 + section * MetaKind::COUNT + kind_index;
        let word = if section == 0 { "capacity" } else { "fresh" };
        let line = lines
            .get(line_no - 1)
            .ok_or_else(|| malformed(line_no, format!("expected `{word} {kind}`")))?;
        let n = line
            .strip_prefix(word)
            .and_then(|r| r.strip_prefix(' '))
            .and_then(|r| r.strip_prefix(kind.name()))
            .and_then(|r| r.strip_prefix(' '))
            .and_then(parse_index)
            .ok_or_else(|| malformed(line_no, format!("expected `{word} {kind} <n>`")))?;
        if section == 0 {
            caps.set(kind, n);
        } else if n > caps.get(kind) + 1 {
            return Err(malformed(
                line_no,
                format!("fresh index beyond capacity of {kind}"),
            ));
        } else {
            fresh[kind_index] = n;
        }
    }

    let mut store = Store::unrooted(caps).map_err(|e| malformed(2, e.message))?;
    for kind in MetaKind::ALL {
        store.set_next_fresh(kind, fresh[kind.index()]);
    }

    let body_start = 2 + 2 * MetaKind::COUNT;
    let mut origin: BTreeMap<ElementId, usize> = BTreeMap::new();
    let mut previous: Option<ElementId> = None;
    for (offset, line) in lines.iter().enumerate().skip(body_start - 1) {
        let line_no = offset + 1;
        let (id, slot) = parse_body_line(line, line_no)?;
        if previous.is_some_and(|p| p >= id) {
            return Err(malformed(line_no, format!("{id} out of canonical order")));
        }
        if id.index >= fresh[id.kind.index()] {
            return Err(malformed(line_no, format!("{id} was never issued")));
        }
        previous = Some(id);
        origin.insert(id, line_no);
        store.install(id, slot);
    }

    for kind in MetaKind::ALL {
        for index in 1..fresh[kind.index()] {
            let id = ElementId::new(kind, index);
            if !origin.contains_key(&id) {
                return Err(malformed(
                    lines.len() + 1,
                    format!("no line for issued {id}"),
                ));
            }
        }
    }
    if !store.is_live(ElementId::ROOT) {
        return Err(malformed(lines.len() + 1, "RootFolder:1 is missing"));
    }

    for (id, line) in &origin {
        let Ok(record) = store.fetch(*id) else {
            continue;
        };
        let missing = record
            .references()
            .map(|(_, t)| t)
            .chain(record.dynamic_slots().map(|(f, _)| f))
            .find(|t| !store.is_live(*t));
        if let Some(target) = missing {
            return Err(SnapshotError::ReferenceToMissingElement {
                line: *line,
                id: target,
            });
        }
    }

    let canonical = serialize_to_string(&store);
    if canonical != text {
        let line = canonical
            .split('\n')
            .zip(text.split('\n'))
            .position(|(a, b)| a != b)
            .map_or(lines.len(), |i| i + 1);
        return Err(malformed(line, "not in canonical form"));
    }
    Ok(store)
}

fn parse_body_line(line: &str, line_no: usize) -> Result<(ElementId, Slot), SnapshotError> {
    let bad = |reason: String| malformed(line_no, reason);
    if let Some(rest) = line.strip_prefix("tombstone ") {
        let id = ElementId::parse(rest).map_err(|e| bad(e.message))?;
        return Ok((id, Slot::Tombstone));
    }
    let (head, mut rest) = line.split_once(' ').unwrap_or((line, ""));
    let id = ElementId::parse(head).map_err(|e| bad(e.message))?;
    let mut record = ElementRecord::new(id);
    let mut last_key: Option<FeatureKey> = None;
    while !rest.is_empty() {
        let (field, tail) = split_field(rest).ok_or_else(|| bad("unterminated string".into()))?;
        rest = tail;
        let (name, raw) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("expected feature=value, got `{field}`")))?;
        let (key, descriptor) =
            feature_key(id, name).ok_or_else(|| bad(format!("unknown feature {name}")))?;
        if last_key.is_some_and(|k| k >= key) {
            return Err(bad(format!("feature {name} out of order")));
        }
        last_key = Some(key);
        let values = split_values(raw)
            .ok_or_else(|| bad(format!("bad value list for {name}")))?
            .into_iter()
            .map(|t| parse_value(t).map_err(|e| bad(e.message)))
            .collect::<Result<Vec<Value>, _>>()?;
        if values.is_empty() {
            return Err(bad(format!("{name} has no values")));
        }
        if let Some(d) = descriptor {
            if !d.is_list() && values.len() != 1 {
                return Err(bad(format!("{name} is scalar")));
            }
            if d.is_derived() || !values.iter().all(|v| d.value_kind.accepts(v)) {
                return Err(bad(format!("invalid value for {name}")));
            }
            if d.value_kind == ValueKind::Potency && values.iter().any(|v| v.as_int() < Some(1)) {
                return Err(bad(format!("potency below 1 in {name}")));
            }
        } else if values.contains(&Value::Unbounded) {
            return Err(bad(format!("invalid value for {name}")));
        }
        record.set(key, values);
    }
    Ok((id, Slot::Live(record)))
}

fn feature_key(
    id: ElementId,
    name: &str,
) -> Option<(FeatureKey, Option<&'static FeatureDescriptor>)> {
    if looks_like_id(name) {
        let fid = ElementId::parse(name).ok()?;
        if id.kind == MetaKind::Instance && fid.kind.is_feature_declaration() {
            return Some((FeatureKey::Declared(fid), None));
        }
        return None;
    }
    let catalog = feature_catalog(id.kind);
    let i = catalog.iter().position(|d| d.name == name)?;
    Some((FeatureKey::Builtin(i as u8), Some(&catalog[i])))
}

/// Splits off one space-separated field, honouring quoted strings.
fn split_field(s: &str) -> Option<(&str, &str)> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() && bytes[i] != b' ' {
        if bytes[i] == b'"' {
            i = end_of_quoted(bytes, i)?;
        } else {
            i += 1;
        }
    }
    let rest = if i < bytes.len() { &s[i + 1..] } else { "" };
    Some((&s[..i], rest))
}

/// Splits a comma-separated value list, honouring quoted strings.
fn split_values(s: &str) -> Option<Vec<&str>> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => i = end_of_quoted(bytes, i)?,
            b',' => {
                out.push(&s[start..i]);
                i += 1;
                start = i;
            }
            _ => i += 1,
        }
    }
    if !s.is_empty() {
        out.push(&s[start..]);
    }
    Some(out)
}
