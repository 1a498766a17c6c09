//! Reflective meta-model changes while M1 data exists.
//!
//! A change is first planned on a copy of the store. The plan yields an
//! [`ImpactReport`] listing every instance slot holding values that the change
//! would invalidate. In [`Mode::Restrict`] a change with any such slot (or any
//! instance to delete) is refused and the store is left untouched. In
//! [`Mode::Force`] exactly the reported slots are cleared, and nothing else.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{crud_err, CrudError, CrudResult};
use crate::graph;
use crate::kernel::MetaKind;
use crate::levels::{self, effective_features, join, Diagnostic, Rule, Severity};
use crate::metaconstructor::referencers_of;
use crate::store::{ElementId, FeatureKey, Store};
use crate::value::{parse_value, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum MetaChange {
    /// Attach an existing, unowned Attribute/Composition/Association to a class.
    AddFeature {
        class: ElementId,
        feature: ElementId,
    },
    /// Detach a feature from the class that owns it. The feature stays live.
    RemoveFeature {
        class: ElementId,
        feature: ElementId,
    },
    RetypeFeatureDatatype {
        attribute: ElementId,
        datatype: ElementId,
    },
    /// Delete a class and its owned features, together with its instances.
    RemoveClass { class: ElementId },
    /// Create a named class inside a namespace.
    AddClass { namespace: ElementId, name: String },
    ChangePotency {
        attribute: ElementId,
        potency: i64,
        per_level: Option<bool>,
    },
}

impl MetaChange {
    pub fn operation(&self) -> &'static str {
        match self {
            MetaChange::AddFeature { .. } => "add_feature",
            MetaChange::RemoveFeature { .. } => "remove_feature",
            MetaChange::RetypeFeatureDatatype { .. } => "retype_feature_datatype",
            MetaChange::RemoveClass { .. } => "remove_class",
            MetaChange::AddClass { .. } => "add_class",
            MetaChange::ChangePotency { .. } => "change_potency",
        }
    }

    pub fn subject(&self) -> ElementId {
        match self {
            MetaChange::AddFeature { class, .. }
            | MetaChange::RemoveFeature { class, .. }
            | MetaChange::RemoveClass { class } => *class,
            MetaChange::RetypeFeatureDatatype { attribute, .. }
            | MetaChange::ChangePotency { attribute, .. } => *attribute,
            MetaChange::AddClass { namespace, .. } => *namespace,
        }
    }

    /// Parses `<operation> <args...>` as typed at the CLI.
    pub fn parse(tokens: &[&str]) -> CrudResult<MetaChange> {
        let Some((&op, args)) = tokens.split_first() else {
            return Err(crud_err!(ParseError, "missing reflective operation"));
        };
        let want = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(crud_err!(
                    ParseError,
                    "{op} takes {n} argument(s), got {}",
                    args.len()
                ))
            }
        };
        let id = |i: usize| ElementId::parse(args[i]);
        Ok(match op {
            "add_feature" => {
                want(2)?;
                MetaChange::AddFeature {
                    class: id(0)?,
                    feature: id(1)?,
                }
            }
            "remove_feature" => {
                want(2)?;
                MetaChange::RemoveFeature {
                    class: id(0)?,
                    feature: id(1)?,
                }
            }
            "retype_feature_datatype" => {
                want(2)?;
                MetaChange::RetypeFeatureDatatype {
                    attribute: id(0)?,
                    datatype: id(1)?,
                }
            }
            "remove_class" => {
                want(1)?;
                MetaChange::RemoveClass { class: id(0)? }
            }
            "add_class" => {
                want(2)?;
                let Value::Str(name) = parse_value(args[1])? else {
                    return Err(crud_err!(ParseError, "add_class expects a quoted name"));
                };
                MetaChange::AddClass {
                    namespace: id(0)?,
                    name,
                }
            }
            "change_potency" => {
                if !(2..=3).contains(&args.len()) {
                    return Err(crud_err!(
                        ParseError,
                        "change_potency takes 2 or 3 arguments"
                    ));
                }
                let Value::Int(potency) = parse_value(args[1])? else {
                    return Err(crud_err!(ParseError, "potency must be an integer"));
                };
                let per_level = match args.get(2) {
                    None => None,
                    Some(t) => match parse_value(t)? {
                        Value::Bool(b) => Some(b),
                        _ => return Err(crud_err!(ParseError, "per-level flag must be a boolean")),
                    },
                };
                MetaChange::ChangePotency {
                    attribute: id(0)?,
                    potency,
                    per_level,
                }
            }
            _ => return Err(crud_err!(ParseError, "unknown reflective operation {op}")),
        })
    }
}

impl fmt::Display for MetaChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaChange::AddFeature { class, feature } => write!(f, "add_feature {class} {feature}"),
            MetaChange::RemoveFeature { class, feature } => {
                write!(f, "remove_feature {class} {feature}")
            }
            MetaChange::RetypeFeatureDatatype {
                attribute,
                datatype,
            } => {
                write!(f, "retype_feature_datatype {attribute} {datatype}")
            }
            MetaChange::RemoveClass { class } => write!(f, "remove_class {class}"),
            MetaChange::AddClass { namespace, name } => {
                write!(f, "add_class {namespace} {}", Value::Str(name.clone()))
            }
            MetaChange::ChangePotency {
                attribute,
                potency,
                per_level,
            } => {
                write!(f, "change_potency {attribute} {potency}")?;
                match per_level {
                    Some(b) => write!(f, " {b}"),
                    None => Ok(()),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    #[default]
    Restrict,
    Force,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ImpactReport {
    /// Instances whose type, slots or existence the change touches.
    pub affected_instances: Vec<ElementId>,
    /// Non-empty slots the change would clear, as `(instance, feature)`.
    pub affected_slots: Vec<(ElementId, ElementId)>,
    /// Instances the change deletes.
    pub deleted_instances: Vec<ElementId>,
}

impl ImpactReport {
    pub fn is_safe(&self) -> bool {
        self.affected_slots.is_empty() && self.deleted_instances.is_empty()
    }

    pub fn verdict(&self) -> &'static str {
        if self.is_safe() {
            "safe"
        } else {
            "destructive"
        }
    }

    /// One line per lost slot and per deleted instance. `applied` selects the
    /// wording (and severity) for a change that went through.
    pub fn diagnostics(&self, applied: bool) -> Vec<Diagnostic> {
        let severity = if applied {
            Severity::Warning
        } else {
            Severity::Error
        };
        let mut out: Vec<Diagnostic> = self
            .affected_slots
            .iter()
            .map(|(instance, feature)| {
                let what = if applied {
                    "cleared"
                } else {
                    "would be cleared"
                };
                Diagnostic::new(
                    severity,
                    *instance,
                    Rule::ReflectionSlot,
                    format!("{feature} {what}"),
                )
            })
            .collect();
        out.extend(self.deleted_instances.iter().map(|instance| {
            let what = if applied {
                "deleted"
            } else {
                "would be deleted"
            };
            Diagnostic::new(severity, *instance, Rule::ReflectionInstance, what)
        }));
        levels::sort_diagnostics(&mut out);
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "{} affected-instances={} affected-slots={} deleted-instances={}",
            self.verdict(),
            self.affected_instances.len(),
            self.affected_slots.len(),
            self.deleted_instances.len()
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChangeOutcome {
    pub report: ImpactReport,
    /// Class created by `add_class`.
    pub created: Option<ElementId>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct ReflectError {
    pub error: CrudError,
    /// Present when a restrict-mode change was refused as destructive.
    pub report: Option<ImpactReport>,
}

impl From<CrudError> for ReflectError {
    fn from(error: CrudError) -> Self {
        ReflectError {
            error,
            report: None,
        }
    }
}

/// What a change would do, computed without touching `store`.
pub fn impact_of(store: &Store, change: &MetaChange) -> CrudResult<ImpactReport> {
    plan(store, change).map(|p| p.report)
}

/// Applies a reflective change under `mode`.
pub fn apply_change(
    store: &mut Store,
    change: &MetaChange,
    mode: Mode,
) -> Result<ChangeOutcome, ReflectError> {
    let Plan {
        mut scratch,
        report,
        created,
        post_faults,
    } = plan(store, change)?;
    if mode == Mode::Restrict && !report.is_safe() {
        return Err(ReflectError {
            error: crud_err!(
                IntegrityViolation,
                "{} {} {}",
                change.subject(),
                change.operation(),
                report.summary()
            ),
            report: Some(report),
        });
    }
    for (instance, feature) in &post_faults {
        scratch
            .fetch_mut(*instance)?
            .clear(FeatureKey::Declared(*feature));
    }
    debug_assert!(levels::nonconforming_slots(&scratch).is_empty());
    *store = scratch;
    Ok(ChangeOutcome { report, created })
}

struct Plan {
    /// Store after the structural change, with slots invalidated by it still
    /// in place.
    scratch: Store,
    report: ImpactReport,
    created: Option<ElementId>,
    post_faults: Vec<(ElementId, ElementId)>,
}

fn expect_kind(store: &Store, id: ElementId, kind: MetaKind) -> CrudResult<()> {
    store.fetch(id)?;
    if id.kind == kind {
        Ok(())
    } else {
        Err(crud_err!(TypeMismatch, "{id} is not a {kind}"))
    }
}

fn feature_list(feature: ElementId) -> CrudResult<&'static str> {
    match feature.kind {
        MetaKind::Attribute => Ok("attributes"),
        MetaKind::Composition => Ok("compositions"),
        MetaKind::Association => Ok("associations"),
        _ => Err(crud_err!(TypeMismatch, "{feature} is not a feature")),
    }
}

fn plan(store: &Store, change: &MetaChange) -> CrudResult<Plan> {
    let mut scratch = store.clone();
    let mut created = None;
    let mut pre_slots: Vec<(ElementId, ElementId)> = Vec::new();
    let mut deleted: Vec<ElementId> = Vec::new();

    match change {
        MetaChange::AddFeature { class, feature } => {
            expect_kind(store, *class, MetaKind::Class)?;
            store.fetch(*feature)?;
            let list = feature_list(*feature)?;
            if let Some(owner) = graph::containers(store)
                .get(feature)
                .and_then(|e| e.first())
            {
                return Err(crud_err!(
                    IntegrityViolation,
                    "{feature} containment {}",
                    owner.0
                ));
            }
            let key = FeatureKey::builtin(MetaKind::Class, list).expect("catalog feature");
            scratch
                .fetch_mut(*class)?
                .slot_mut(key)
                .push(Value::Ref(*feature));
        }
        MetaChange::RemoveFeature { class, feature } => {
            expect_kind(store, *class, MetaKind::Class)?;
            store.fetch(*feature)?;
            let list = feature_list(*feature)?;
            let key = FeatureKey::builtin(MetaKind::Class, list).expect("catalog feature");
            let record = scratch.fetch_mut(*class)?;
            let slot = record.slot_mut(key);
            let Some(pos) = slot.iter().position(|v| v.as_ref_id() == Some(*feature)) else {
                record.compact();
                return Err(crud_err!(UnknownFeature, "{class} {feature}"));
            };
            slot.remove(pos);
            record.compact();
        }
        MetaChange::RetypeFeatureDatatype {
            attribute,
            datatype,
        } => {
            expect_kind(store, *attribute, MetaKind::Attribute)?;
            expect_kind(store, *datatype, MetaKind::DataType)?;
            scratch
                .fetch_mut(*attribute)?
                .set_builtin("datatype", Value::Ref(*datatype));
        }
        MetaChange::RemoveClass { class } => {
            expect_kind(store, *class, MetaKind::Class)?;
            let members = graph::subtree(store, *class);
            deleted = graph::instances_of(store, *class);
            let doomed: BTreeSet<ElementId> = deleted.iter().copied().collect();
            let m2_refs: Vec<ElementId> = referencers_of(store, &members, *class)
                .into_iter()
                .filter(|r| r.kind != MetaKind::Instance)
                .collect();
            if !m2_refs.is_empty() {
                return Err(crud_err!(
                    IntegrityViolation,
                    "{class} referenced-by {}",
                    join(&m2_refs)
                ));
            }
            for record in store.records(MetaKind::Instance) {
                let id = record.id();
                for (fid, values) in record.dynamic_slots() {
                    let points_at_doomed = values
                        .iter()
                        .any(|v| v.as_ref_id().is_some_and(|t| doomed.contains(&t)));
                    if doomed.contains(&id) || points_at_doomed {
                        pre_slots.push((id, fid));
                    }
                }
            }
            for (instance, fid) in &pre_slots {
                scratch
                    .fetch_mut(*instance)?
                    .clear(FeatureKey::Declared(*fid));
            }
            for instance in &deleted {
                scratch.tombstone(*instance)?;
            }
            crate::metaconstructor::delete(&mut scratch, *class)?;
        }
        MetaChange::AddClass { namespace, name } => {
            expect_kind(store, *namespace, MetaKind::Namespace)?;
            let class = crate::metaconstructor::create(
                &mut scratch,
                crate::metaconstructor::TypeTarget::Kind(MetaKind::Class),
            )?;
            scratch
                .fetch_mut(class)?
                .set_builtin("name", Value::Str(name.clone()));
            let key = FeatureKey::builtin(MetaKind::Namespace, "classes").expect("catalog feature");
            scratch
                .fetch_mut(*namespace)?
                .slot_mut(key)
                .push(Value::Ref(class));
            created = Some(class);
        }
        MetaChange::ChangePotency {
            attribute,
            potency,
            per_level,
        } => {
            expect_kind(store, *attribute, MetaKind::Attribute)?;
            if *potency < 1 {
                return Err(crud_err!(PotencyViolation, "{attribute} potency {potency}"));
            }
            let record = scratch.fetch_mut(*attribute)?;
            record.set_builtin("potency", Value::Int(*potency));
            if let Some(b) = per_level {
                record.set_builtin("perlevel", Value::Bool(*b));
            }
        }
    }

    let post_faults = levels::nonconforming_slots(&scratch);
    let mut affected_slots: Vec<(ElementId, ElementId)> = pre_slots
        .iter()
        .chain(post_faults.iter())
        .copied()
        .collect();
    affected_slots.sort();
    affected_slots.dedup();

    let mut affected: BTreeSet<ElementId> = deleted.iter().copied().collect();
    affected.extend(affected_slots.iter().map(|(i, _)| *i));
    for record in scratch.records(MetaKind::Instance) {
        let before = store
            .fetch(record.id())
            .ok()
            .and_then(|r| signature(store, r));
        if before != signature(&scratch, record) {
            affected.insert(record.id());
        }
    }

    Ok(Plan {
        scratch,
        report: ImpactReport {
            affected_instances: affected.into_iter().collect(),
            affected_slots,
            deleted_instances: deleted,
        },
        created,
        post_faults,
    })
}

fn signature(
    store: &Store,
    instance: &crate::store::ElementRecord,
) -> Option<Vec<levels::EffectiveFeature>> {
    let meta = instance.scalar_ref("meta")?;
    effective_features(store, meta, levels::instance_level(instance)).ok()
}
