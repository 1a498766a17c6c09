//! Level semantics: effective features, instance conformance, whole-model
//! validation and runtime retyping of instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{crud_err, CrudResult};
use crate::graph;
use crate::kernel::{potency_at, Level, MetaKind, Potency, Primitive, Verdict, IDENTIFIER, NAME};
use crate::store::{ElementId, ElementRecord, FeatureKey, Store};
use crate::value::Value;

/// Identifies a feature as seen from an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureRef {
    /// `name` or `identifier`, declared on the meta-language itself.
    Builtin(&'static str),
    /// An Attribute, Composition or Association.
    Declared(ElementId),
}

impl fmt::Display for FeatureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureRef::Builtin(name) => f.write_str(name),
            FeatureRef::Declared(id) => id.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EffectiveFeature {
    pub feature: FeatureRef,
    /// Class declaring the feature; `None` for meta-language built-ins.
    pub origin: Option<ElementId>,
    pub verdict: Verdict,
    pub lower: u64,
    /// `None` is unbounded.
    pub upper: Option<u64>,
}

/// Potency that makes `name` and `identifier` reach every level below M3.
const BUILTIN_POTENCY: Potency = Potency::new(2, true);

/// Features an element typed by `class` carries at `level`: built-ins first,
/// then the class's own features, then those of each ancestor in turn. Within
/// a class: attributes, compositions, associations, each in list order.
pub fn effective_features(
    store: &Store,
    class: ElementId,
    level: Level,
) -> CrudResult<Vec<EffectiveFeature>> {
    if class.kind != MetaKind::Class || !store.is_live(class) {
        return Err(crud_err!(UnknownIdentifier, "{class}"));
    }
    let chain =
        graph::ancestry(store, class).ok_or_else(|| crud_err!(InheritanceCycle, "{class}"))?;

    let builtin_verdict =
        potency_at(Level::M3, BUILTIN_POTENCY, level).unwrap_or(Verdict::Forbidden);
    let mut out: Vec<EffectiveFeature> = [NAME, IDENTIFIER]
        .into_iter()
        .map(|name| EffectiveFeature {
            feature: FeatureRef::Builtin(name),
            origin: None,
            verdict: builtin_verdict,
            lower: 1,
            upper: Some(1),
        })
        .collect();

    for origin in chain {
        let class_record = store.fetch(origin)?;
        for list in ["attributes", "compositions", "associations"] {
            for v in class_record.get(list) {
                let Some(fid) = v.as_ref_id() else { continue };
                let Ok(decl) = store.fetch(fid) else { continue };
                out.push(declared_feature(decl, origin, level));
            }
        }
    }
    Ok(out)
}

fn declared_feature(decl: &ElementRecord, origin: ElementId, level: Level) -> EffectiveFeature {
    let id = decl.id();
    let lower = decl
        .scalar("lower")
        .and_then(Value::as_int)
        .map_or(0, |n| n.max(0) as u64);
    let default_upper = if id.kind == MetaKind::Attribute {
        Some(1)
    } else {
        None
    };
    let upper = match decl.scalar("upper") {
        Some(Value::Int(n)) => Some((*n).max(0) as u64),
        Some(Value::Unbounded) => None,
        _ => default_upper,
    };
    let verdict = if id.kind == MetaKind::Attribute {
        potency_at(Level::M2, attribute_potency(decl), level).unwrap_or(Verdict::Forbidden)
    } else if level == Level::M1 {
        Verdict::Allowed
    } else {
        Verdict::Forbidden
    };
    EffectiveFeature {
        feature: FeatureRef::Declared(id),
        origin: Some(origin),
        verdict,
        lower,
        upper,
    }
}

/// Potency of an Attribute record; unset means `@1`, not per level.
pub fn attribute_potency(attr: &ElementRecord) -> Potency {
    let value = attr
        .scalar("potency")
        .and_then(Value::as_int)
        .map_or(1, |n| n.clamp(0, i64::from(u32::MAX)) as u32);
    let per_level = attr
        .scalar("perlevel")
        .and_then(Value::as_bool)
        .unwrap_or(false);
    Potency::new(value, per_level)
}

/// Level stored on an instance; instances are M1 unless a snapshot says
/// otherwise.
pub(crate) fn instance_level(record: &ElementRecord) -> Level {
    record
        .scalar("level")
        .and_then(Value::as_int)
        .map_or(Level::M1, |n| Level(n.clamp(0, 255) as u8))
}

/// Primitive of an attribute via its DataType, if fully specified.
pub(crate) fn attribute_primitive(store: &Store, attr: &ElementRecord) -> Option<Primitive> {
    let dt = store.fetch(attr.scalar_ref("datatype")?).ok()?;
    Primitive::from_token(dt.scalar("primitive")?.as_str()?)
}

/// Live target class of a Composition or Association.
pub(crate) fn relation_target(store: &Store, rel: &ElementRecord) -> Option<ElementId> {
    rel.scalar_ref("target").filter(|t| store.is_live(*t))
}

/// `true` if `value` may be stored in the slot of `fid` on an instance.
pub(crate) fn value_fits(store: &Store, fid: ElementId, value: &Value) -> bool {
    let Ok(decl) = store.fetch(fid) else {
        return false;
    };
    if fid.kind == MetaKind::Attribute {
        return attribute_primitive(store, decl).is_some_and(|p| value.matches_primitive(p));
    }
    let (Some(target), Some(child)) = (relation_target(store, decl), value.as_ref_id()) else {
        return false;
    };
    child.kind == MetaKind::Instance
        && store
            .fetch(child)
            .ok()
            .and_then(|c| c.scalar_ref("meta"))
            .is_some_and(|meta| graph::conforms_to(store, meta, target))
}

/// Why a dynamic slot does not conform to its instance's type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SlotFault {
    Undeclared,
    Forbidden,
    Mismatch,
    TooMany,
}

fn slot_fault(
    store: &Store,
    features: Option<&[EffectiveFeature]>,
    fid: ElementId,
    values: &[Value],
) -> Option<SlotFault> {
    let Some(ef) =
        features.and_then(|fs| fs.iter().find(|f| f.feature == FeatureRef::Declared(fid)))
    else {
        return Some(SlotFault::Undeclared);
    };
    if ef.verdict == Verdict::Forbidden {
        return Some(SlotFault::Forbidden);
    }
    if !values.iter().all(|v| value_fits(store, fid, v)) {
        return Some(SlotFault::Mismatch);
    }
    if ef.upper.is_some_and(|u| values.len() as u64 > u) {
        return Some(SlotFault::TooMany);
    }
    None
}

/// Effective features of an instance's meta class, `None` when the meta is
/// missing or its inheritance chain is broken.
pub(crate) fn instance_features(
    store: &Store,
    instance: &ElementRecord,
) -> Option<Vec<EffectiveFeature>> {
    let meta = instance.scalar_ref("meta")?;
    effective_features(store, meta, instance_level(instance)).ok()
}

/// Every non-empty dynamic slot that does not conform, as `(instance, feature)`
/// in canonical order.
pub(crate) fn nonconforming_slots(store: &Store) -> Vec<(ElementId, ElementId)> {
    let mut cache: BTreeMap<(Option<ElementId>, Level), Option<Vec<EffectiveFeature>>> =
        BTreeMap::new();
    let mut out = Vec::new();
    for record in store.records(MetaKind::Instance) {
        if record.dynamic_slots().next().is_none() {
            continue;
        }
        let key = (record.scalar_ref("meta"), instance_level(record));
        let features = cache
            .entry(key)
            .or_insert_with(|| instance_features(store, record));
        for (fid, values) in record.dynamic_slots() {
            if slot_fault(store, features.as_deref(), fid, values).is_some() {
                out.push((record.id(), fid));
            }
        }
    }
    out
}

/// Instances owning at least one non-conforming slot.
pub(crate) fn nonconforming_instances(store: &Store) -> Vec<ElementId> {
    let mut ids: Vec<ElementId> = nonconforming_slots(store)
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    ids.dedup();
    ids
}

/// Dynamic slots of `instance` holding values that `new_meta` does not declare.
pub(crate) fn slots_dropped_by_retype(
    store: &Store,
    instance: &ElementRecord,
    new_meta: ElementId,
) -> CrudResult<Vec<ElementId>> {
    let features = effective_features(store, new_meta, instance_level(instance))?;
    Ok(instance
        .dynamic_slots()
        .map(|(fid, _)| fid)
        .filter(|fid| {
            !features
                .iter()
                .any(|f| f.feature == FeatureRef::Declared(*fid))
        })
        .collect())
}

/// Re-points the type of an M1 instance.
///
/// Slots shared with the new type keep their values. The change is refused
/// if any slot holding values would be dropped, or if the new type breaks a
/// reference held elsewhere.
pub fn retype(store: &mut Store, instance: ElementId, new_meta: ElementId) -> CrudResult<()> {
    let record = store.fetch(instance)?;
    if instance.kind != MetaKind::Instance {
        return Err(crud_err!(LevelViolation, "{instance}"));
    }
    store.fetch(new_meta)?;
    let level = instance_level(record);
    if new_meta.kind != MetaKind::Class || Level(level.0 + 1) != Level::M2 {
        return Err(crud_err!(LevelViolation, "{new_meta}"));
    }
    let dropped = slots_dropped_by_retype(store, record, new_meta)?;
    if !dropped.is_empty() {
        return Err(crud_err!(
            IntegrityViolation,
            "{instance} meta slots {}",
            join(&dropped)
        ));
    }
    let saved = record.clone();
    store
        .fetch_mut(instance)?
        .set_builtin("meta", Value::Ref(new_meta));
    let broken = nonconforming_instances(store);
    if !broken.is_empty() {
        *store.fetch_mut(instance)? = saved;
        return Err(crud_err!(
            IntegrityViolation,
            "{instance} meta instances {}",
            join(&broken)
        ));
    }
    Ok(())
}

pub(crate) fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        }
    }
}

/// Validation and reflection rules. Structural rules can only be violated by
/// hand-edited snapshots; the request engine refuses to create such states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    ContainmentMultiple,
    ContainmentCycle,
    InheritanceMultiple,
    InheritanceCycle,
    EndpointDangling,
    InstanceMeta,
    LevelMismatch,
    FeatureUndeclared,
    DatatypeMismatch,
    PotencyForbidden,
    CardinalityUpper,
    CardinalityLower,
    PotencyRequired,
    AttributeDatatypeMissing,
    AttributeUnitMissing,
    PrimitiveMissing,
    ClassificationMissing,
    RelationEndpointMissing,
    PotencyUnreachable,
    ReflectionSlot,
    ReflectionInstance,
}

impl Rule {
    pub fn token(self) -> &'static str {
        match self {
            Rule::ContainmentMultiple => "containment.multiple",
            Rule::ContainmentCycle => "containment.cycle",
            Rule::InheritanceMultiple => "inheritance.multiple",
            Rule::InheritanceCycle => "inheritance.cycle",
            Rule::EndpointDangling => "endpoint.dangling",
            Rule::InstanceMeta => "instance.meta",
            Rule::LevelMismatch => "level.mismatch",
            Rule::FeatureUndeclared => "feature.undeclared",
            Rule::DatatypeMismatch => "datatype.mismatch",
            Rule::PotencyForbidden => "potency.forbidden",
            Rule::CardinalityUpper => "cardinality.upper",
            Rule::CardinalityLower => "cardinality.lower",
            Rule::PotencyRequired => "potency.required",
            Rule::AttributeDatatypeMissing => "attribute.datatype.missing",
            Rule::AttributeUnitMissing => "attribute.unit.missing",
            Rule::PrimitiveMissing => "type.primitive.missing",
            Rule::ClassificationMissing => "classification.missing",
            Rule::RelationEndpointMissing => "relation.endpoint.missing",
            Rule::PotencyUnreachable => "attribute.potency.unreachable",
            Rule::ReflectionSlot => "reflection.slot",
            Rule::ReflectionInstance => "reflection.instance",
        }
    }

    /// Rules guarding well-formedness rather than completeness.
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            Rule::ContainmentMultiple
                | Rule::ContainmentCycle
                | Rule::InheritanceMultiple
                | Rule::InheritanceCycle
                | Rule::EndpointDangling
                | Rule::InstanceMeta
                | Rule::LevelMismatch
                | Rule::FeatureUndeclared
                | Rule::DatatypeMismatch
                | Rule::PotencyForbidden
                | Rule::CardinalityUpper
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub subject: ElementId,
    pub rule: Rule,
    pub message: String,
}

impl Diagnostic {
    pub fn new(
        severity: Severity,
        subject: ElementId,
        rule: Rule,
        message: impl Into<String>,
    ) -> Self {
        Diagnostic {
            severity,
            subject,
            rule,
            message: message.into(),
        }
    }

    fn error(subject: ElementId, rule: Rule, message: impl Into<String>) -> Self {
        Diagnostic::new(Severity::Error, subject, rule, message)
    }

    fn sort_key(&self) -> (ElementId, &'static str, &str) {
        (self.subject, self.rule.token(), &self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: {}",
            self.severity.as_str(),
            self.subject,
            self.rule.token(),
            self.message
        )
    }
}

/// Sorts diagnostics into canonical order.
pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Checks the whole model and reports every problem found, in canonical
/// order. Never mutates.
pub fn validate_model(store: &Store) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for record in store.all_records() {
        check_references(store, record, &mut out);
        check_completeness(record, &mut out);
    }
    check_containment(store, &mut out);
    check_inheritance(store, &mut out);
    for record in store.records(MetaKind::Instance) {
        check_instance(store, record, &mut out);
    }
    sort_diagnostics(&mut out);
    out
}

fn check_references(store: &Store, record: &ElementRecord, out: &mut Vec<Diagnostic>) {
    let id = record.id();
    let mut dangling = BTreeSet::new();
    for (_, target) in record.references() {
        if !store.is_live(target) {
            dangling.insert(target);
        }
    }
    for (fid, _) in record.dynamic_slots() {
        if !store.is_live(fid) {
            dangling.insert(fid);
        }
    }
    for target in dangling {
        out.push(Diagnostic::error(
            id,
            Rule::EndpointDangling,
            format!("{target} is not live"),
        ));
    }
}

fn check_completeness(record: &ElementRecord, out: &mut Vec<Diagnostic>) {
    let id = record.id();
    let kind = id.kind;
    let missing = |name: &str| record.get(name).is_empty();
    if kind != MetaKind::RootFolder && kind != MetaKind::Inheritance && missing(NAME) {
        out.push(Diagnostic::error(
            id,
            Rule::PotencyRequired,
            "name has no value",
        ));
    }
    match kind {
        MetaKind::Class | MetaKind::Instance if missing("classification") => {
            out.push(Diagnostic::error(
                id,
                Rule::ClassificationMissing,
                "no classification",
            ));
        }
        MetaKind::Attribute => {
            if missing("datatype") {
                out.push(Diagnostic::error(
                    id,
                    Rule::AttributeDatatypeMissing,
                    "no datatype",
                ));
            }
            if missing("unit") {
                out.push(Diagnostic::error(id, Rule::AttributeUnitMissing, "no unit"));
            }
            let potency = record
                .scalar("potency")
                .and_then(Value::as_int)
                .unwrap_or(1);
            if potency > 1 {
                out.push(Diagnostic::new(
                    Severity::Warning,
                    id,
                    Rule::PotencyUnreachable,
                    format!("potency {potency} reaches below M1"),
                ));
            }
        }
        MetaKind::DataType if missing("primitive") => {
            out.push(Diagnostic::error(
                id,
                Rule::PrimitiveMissing,
                "no primitive",
            ));
        }
        MetaKind::Composition | MetaKind::Association => {
            for end in ["source", "target"] {
                if missing(end) {
                    out.push(Diagnostic::error(
                        id,
                        Rule::RelationEndpointMissing,
                        format!("no {end}"),
                    ));
                }
            }
        }
        MetaKind::Inheritance => {
            for end in ["subclass", "superclass"] {
                if missing(end) {
                    out.push(Diagnostic::error(
                        id,
                        Rule::RelationEndpointMissing,
                        format!("no {end}"),
                    ));
                }
            }
        }
        _ => {}
    }
}

fn check_containment(store: &Store, out: &mut Vec<Diagnostic>) {
    let containers = graph::containers(store);
    for (child, entries) in &containers {
        if entries.len() > 1 {
            let owners: Vec<ElementId> = entries.iter().map(|e| e.0).collect();
            out.push(Diagnostic::error(
                *child,
                Rule::ContainmentMultiple,
                format!("contained by {}", join(&owners)),
            ));
        }
        if graph::is_contained_in(&containers, *child, *child) {
            out.push(Diagnostic::error(
                *child,
                Rule::ContainmentCycle,
                "contains itself",
            ));
        }
    }
}

fn check_inheritance(store: &Store, out: &mut Vec<Diagnostic>) {
    for class in store.scan(MetaKind::Class) {
        let parents = graph::inheritances_of(store, class);
        if parents.len() > 1 {
            out.push(Diagnostic::error(
                class,
                Rule::InheritanceMultiple,
                format!("subclass in {}", join(&parents)),
            ));
        }
        if graph::ancestry(store, class).is_none() {
            out.push(Diagnostic::error(
                class,
                Rule::InheritanceCycle,
                "ancestry loops",
            ));
        }
    }
}

fn check_instance(store: &Store, record: &ElementRecord, out: &mut Vec<Diagnostic>) {
    let id = record.id();
    let meta = record.scalar_ref("meta");
    let Some(meta) = meta.filter(|m| m.kind == MetaKind::Class && store.is_live(*m)) else {
        out.push(Diagnostic::error(
            id,
            Rule::InstanceMeta,
            "meta is not a live class",
        ));
        return;
    };
    let level = instance_level(record);
    if level != Level::M1 {
        out.push(Diagnostic::error(
            id,
            Rule::LevelMismatch,
            format!("level {} below {meta}", level.0),
        ));
    }
    let Ok(features) = effective_features(store, meta, level) else {
        return;
    };
    for (fid, values) in record.dynamic_slots() {
        let rule = match slot_fault(store, Some(&features), fid, values) {
            None => continue,
            Some(SlotFault::Undeclared) => Rule::FeatureUndeclared,
            Some(SlotFault::Forbidden) => Rule::PotencyForbidden,
            Some(SlotFault::Mismatch) => Rule::DatatypeMismatch,
            Some(SlotFault::TooMany) => Rule::CardinalityUpper,
        };
        out.push(Diagnostic::error(id, rule, fid.to_string()));
    }
    for ef in &features {
        let FeatureRef::Declared(fid) = ef.feature else {
            continue;
        };
        if ef.verdict == Verdict::Forbidden {
            continue;
        }
        let count = record.slot(FeatureKey::Declared(fid)).len() as u64;
        if ef.verdict == Verdict::Required && count == 0 {
            out.push(Diagnostic::error(
                id,
                Rule::PotencyRequired,
                format!("{fid} has no value"),
            ));
        } else if count < ef.lower {
            out.push(Diagnostic::error(
                id,
                Rule::CardinalityLower,
                format!("{fid} holds {count} of at least {}", ef.lower),
            ));
        }
    }
}
