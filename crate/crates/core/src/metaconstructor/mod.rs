//! The CRUD engine: the only way to edit M2 and M1 models.
//!
//! Every request is validated completely before anything is written. Checks
//! run in a fixed order (identifier, feature, type, position, potency,
//! cardinality, integrity) and the first failure is reported. Integrity
//! checks that need the post-state apply the change tentatively and restore
//! the touched slots on failure, so a failing request never alters the store.

mod request;

pub use request::{parse_request, CrudRequest, CrudResponse, FeatureToken, TypeTarget};

use std::collections::BTreeSet;

use crate::error::{crud_err, CrudResult};
use crate::graph;
use crate::kernel::{feature_catalog, FeatureDescriptor, MetaKind, ValueKind, Verdict};
use crate::levels::{self, join, EffectiveFeature, FeatureRef};
use crate::store::{ElementId, FeatureKey, Slot, Store};
use crate::value::{Literal, Value};

/// Parses and executes one request line.
pub fn execute_line(store: &mut Store, line: &str) -> CrudResponse {
    match parse_request(line) {
        Ok(request) => execute(store, &request),
        Err(e) => CrudResponse::Failed(e),
    }
}

/// Dispatches a request to its verb.
pub fn execute(store: &mut Store, request: &CrudRequest) -> CrudResponse {
    let result = match request {
        CrudRequest::Create { target } => create(store, *target).map(CrudResponse::Created),
        CrudRequest::Read { id, feature } => read(store, *id, feature).map(CrudResponse::Values),
        CrudRequest::Update {
            id,
            feature,
            position,
            value,
        } => update(store, *id, feature, *position, value).map(|()| CrudResponse::Done),
        CrudRequest::Delete { id } => delete(store, *id).map(|()| CrudResponse::Done),
    };
    result.unwrap_or_else(CrudResponse::Failed)
}

/// Creates an M2 element of an M3 kind, or an M1 instance of an M2 class.
pub fn create(store: &mut Store, target: TypeTarget) -> CrudResult<ElementId> {
    match target {
        TypeTarget::Kind(MetaKind::RootFolder) => Err(crud_err!(SingletonViolation, "RootFolder")),
        TypeTarget::Kind(MetaKind::Instance) => Err(crud_err!(LevelViolation, "Instance")),
        TypeTarget::Kind(kind) => {
            let id = store.allocate(kind)?;
            if kind == MetaKind::Class {
                store
                    .fetch_mut(id)?
                    .set_builtin("classification", Value::Str("logical".into()));
            }
            Ok(id)
        }
        TypeTarget::Class(class) => {
            let meta = store.fetch(class)?;
            if class.kind != MetaKind::Class {
                return Err(crud_err!(LevelViolation, "{class}"));
            }
            let classification = meta
                .scalar("classification")
                .cloned()
                .unwrap_or_else(|| Value::Str("logical".into()));
            let id = store.allocate(MetaKind::Instance)?;
            let record = store.fetch_mut(id)?;
            record.set_builtin("meta", Value::Ref(class));
            record.set_builtin("level", Value::Int(1));
            record.set_builtin("classification", classification);
            Ok(id)
        }
    }
}

/// Returns the values of one feature, in order. Never mutates.
pub fn read(store: &Store, id: ElementId, feature: &FeatureToken) -> CrudResult<Vec<Value>> {
    let record = store.fetch(id)?;
    let resolved = resolve(store, id, feature)?;
    Ok(record.values(resolved.key()))
}

/// A request feature resolved against the addressed element.
enum Resolved {
    Builtin(u8, &'static FeatureDescriptor),
    Dynamic(EffectiveFeature, ElementId),
}

impl Resolved {
    fn key(&self) -> FeatureKey {
        match self {
            Resolved::Builtin(i, _) => FeatureKey::Builtin(*i),
            Resolved::Dynamic(_, fid) => FeatureKey::Declared(*fid),
        }
    }

    fn is_scalar(&self) -> bool {
        match self {
            Resolved::Builtin(_, d) => !d.is_list(),
            Resolved::Dynamic(ef, _) => ef.upper == Some(1),
        }
    }

    fn upper(&self) -> Option<u64> {
        match self {
            Resolved::Builtin(..) => None,
            Resolved::Dynamic(ef, _) => ef.upper,
        }
    }

    fn is_containment(&self) -> bool {
        match self {
            Resolved::Builtin(_, d) => d.containment,
            Resolved::Dynamic(_, fid) => fid.kind == MetaKind::Composition,
        }
    }
}

fn resolve(store: &Store, id: ElementId, feature: &FeatureToken) -> CrudResult<Resolved> {
    let unknown = || crud_err!(UnknownFeature, "{id} {feature}");
    match feature {
        FeatureToken::Named(name) => {
            let catalog = feature_catalog(id.kind);
            let i = catalog
                .iter()
                .position(|d| d.name == name)
                .ok_or_else(unknown)?;
            Ok(Resolved::Builtin(i as u8, &catalog[i]))
        }
        FeatureToken::Declared(fid) => {
            if id.kind != MetaKind::Instance {
                return Err(unknown());
            }
            let record = store.fetch(id)?;
            levels::instance_features(store, record)
                .and_then(|fs| {
                    fs.into_iter()
                        .find(|f| f.feature == FeatureRef::Declared(*fid))
                })
                .map(|ef| Resolved::Dynamic(ef, *fid))
                .ok_or_else(unknown)
        }
    }
}

/// Writes `value` at the 1-based `position` of a feature slot.
///
/// `position == len + 1` appends, a smaller position replaces, and the
/// literal `void` removes the entry at `position`. Scalars only accept
/// position 1.
pub fn update(
    store: &mut Store,
    id: ElementId,
    feature: &FeatureToken,
    position: u32,
    value: &Literal,
) -> CrudResult<()> {
    let record = store.fetch(id)?;
    let resolved = resolve(store, id, feature)?;
    if let Resolved::Builtin(_, d) = &resolved {
        if d.is_frozen() {
            return Err(crud_err!(FrozenFeature, "{id} {feature}"));
        }
    }

    check_type(store, id, feature, &resolved, value)?;

    let key = resolved.key();
    let len = record.slot(key).len();
    let pos = position as usize;
    let in_range = match (value, resolved.is_scalar()) {
        (Literal::Void, true) => pos == 1 && len == 1,
        (Literal::Void, false) => pos <= len,
        (Literal::Value(_), true) => pos == 1,
        (Literal::Value(_), false) => pos <= len + 1,
    };
    if !in_range {
        return Err(crud_err!(PositionOutOfRange, "{id} {feature} {position}"));
    }

    if let Literal::Value(v) = value {
        let forbidden = matches!(&resolved, Resolved::Dynamic(ef, fid)
            if fid.kind == MetaKind::Attribute && ef.verdict == Verdict::Forbidden);
        let bad_potency = matches!(&resolved, Resolved::Builtin(_, d)
            if d.value_kind == ValueKind::Potency && v.as_int().is_some_and(|n| n < 1));
        if forbidden || bad_potency {
            return Err(crud_err!(PotencyViolation, "{id} {feature}"));
        }
        if pos == len + 1 && resolved.upper().is_some_and(|u| len as u64 + 1 > u) {
            return Err(crud_err!(CardinalityViolation, "{id} {feature}"));
        }
    }

    // Integrity checks on the pre-state.
    if let (Literal::Value(Value::Ref(child)), true) = (value, resolved.is_containment()) {
        check_containment(store, id, key, pos - 1, *child)
            .map_err(|()| crud_err!(IntegrityViolation, "{id} {feature} containment {child}"))?;
    }
    let retyping =
        id.kind == MetaKind::Instance && matches!(feature, FeatureToken::Named(n) if n == "meta");
    if let (true, Literal::Value(Value::Ref(new_meta))) = (retyping, value) {
        let dropped = levels::slots_dropped_by_retype(store, record, *new_meta)?;
        if !dropped.is_empty() {
            return Err(crud_err!(
                IntegrityViolation,
                "{id} meta slots {}",
                join(&dropped)
            ));
        }
    }

    let saved = record.clone();
    {
        let record = store.fetch_mut(id)?;
        let slot = record.slot_mut(key);
        match value {
            Literal::Void => {
                slot.remove(pos - 1);
            }
            Literal::Value(v) if pos == slot.len() + 1 => slot.push(v.clone()),
            Literal::Value(v) => slot[pos - 1] = v.clone(),
        }
        record.compact();
    }

    // Integrity checks on the post-state.
    let rollback = |store: &mut Store| {
        if let Some(slot) = store.slot_mut(id) {
            *slot = Slot::Live(saved.clone());
        }
    };
    if id.kind == MetaKind::Inheritance && !graph::inheritance_is_well_formed(store) {
        rollback(store);
        return Err(crud_err!(IntegrityViolation, "{id} {feature} inheritance"));
    }
    if id.kind != MetaKind::Instance || retyping {
        let broken = levels::nonconforming_instances(store);
        if !broken.is_empty() {
            rollback(store);
            return Err(crud_err!(
                IntegrityViolation,
                "{id} {feature} instances {}",
                join(&broken)
            ));
        }
    }
    Ok(())
}

fn check_type(
    store: &Store,
    id: ElementId,
    feature: &FeatureToken,
    resolved: &Resolved,
    value: &Literal,
) -> CrudResult<()> {
    let mismatch = || crud_err!(TypeMismatch, "{id} {feature}");
    let live = |target: ElementId| {
        if store.is_live(target) {
            Ok(())
        } else {
            Err(crud_err!(UnknownIdentifier, "{target}"))
        }
    };
    let v = match value {
        Literal::Void => {
            return match resolved {
                Resolved::Builtin(_, d) if d.name == "meta" => Err(mismatch()),
                _ => Ok(()),
            }
        }
        Literal::Value(v) => v,
    };
    match resolved {
        Resolved::Builtin(_, d) => {
            if !d.value_kind.accepts(v) {
                return Err(mismatch());
            }
            if let Some(target) = v.as_ref_id() {
                live(target)?;
            }
            Ok(())
        }
        Resolved::Dynamic(_, fid) if fid.kind == MetaKind::Attribute => {
            let decl = store.fetch(*fid)?;
            match levels::attribute_primitive(store, decl) {
                Some(p) if v.matches_primitive(p) => Ok(()),
                _ => Err(mismatch()),
            }
        }
        Resolved::Dynamic(_, fid) => {
            let child = v
                .as_ref_id()
                .filter(|c| c.kind == MetaKind::Instance)
                .ok_or_else(mismatch)?;
            live(child)?;
            if levels::value_fits(store, *fid, v) {
                Ok(())
            } else {
                Err(mismatch())
            }
        }
    }
}

/// Placing `child` at `(owner, key, index)` must keep containment a forest.
fn check_containment(
    store: &Store,
    owner: ElementId,
    key: FeatureKey,
    index: usize,
    child: ElementId,
) -> Result<(), ()> {
    if child == owner {
        return Err(());
    }
    let containers = graph::containers(store);
    if let Some(entries) = containers.get(&child) {
        if entries.iter().any(|e| *e != (owner, key, index)) {
            return Err(());
        }
    }
    if graph::is_contained_in(&containers, owner, child) {
        return Err(());
    }
    Ok(())
}

/// Deletes an element together with everything it owns.
///
/// Refused when anything outside the owned subtree still refers into it
/// (including instances typed by a deleted class and instance slots keyed by
/// a deleted feature), or when the removal would leave an instance
/// non-conforming.
pub fn delete(store: &mut Store, id: ElementId) -> CrudResult<()> {
    store.fetch(id)?;
    if id == ElementId::ROOT {
        return Err(crud_err!(RootDeletion, "{id}"));
    }
    let members = graph::subtree(store, id);
    let referencers = referencers_of(store, &members, id);
    if !referencers.is_empty() {
        let ids: Vec<ElementId> = referencers.into_iter().collect();
        return Err(crud_err!(
            IntegrityViolation,
            "{id} referenced-by {}",
            join(&ids)
        ));
    }

    let containers = graph::containers(store);
    let owners: BTreeSet<ElementId> = containers
        .get(&id)
        .map(|es| es.iter().map(|e| e.0).collect())
        .unwrap_or_default();
    let saved: Vec<(ElementId, Slot)> = owners
        .iter()
        .chain(members.iter())
        .filter_map(|i| store.slot(*i).map(|s| (*i, s.clone())))
        .collect();

    for owner in &owners {
        let record = store.fetch_mut(*owner)?;
        let keys: Vec<FeatureKey> = record.slots().map(|(k, _)| k).collect();
        for key in keys {
            if graph::is_containment(owner.kind, key) {
                record.slot_mut(key).retain(|v| v.as_ref_id() != Some(id));
            }
        }
        record.compact();
    }
    for member in &members {
        store.tombstone(*member)?;
    }

    let broken = levels::nonconforming_instances(store);
    if !broken.is_empty() {
        for (i, slot) in saved {
            if let Some(s) = store.slot_mut(i) {
                *s = slot;
            }
        }
        return Err(crud_err!(
            IntegrityViolation,
            "{id} instances {}",
            join(&broken)
        ));
    }
    Ok(())
}

/// Live elements outside `members` that refer into it, other than by owning
/// `root`.
pub(crate) fn referencers_of(
    store: &Store,
    members: &BTreeSet<ElementId>,
    root: ElementId,
) -> BTreeSet<ElementId> {
    let mut out = BTreeSet::new();
    for record in store.all_records() {
        let rid = record.id();
        if members.contains(&rid) {
            continue;
        }
        let by_reference = record.references().any(|(key, target)| {
            members.contains(&target) && !(target == root && graph::is_containment(rid.kind, key))
        });
        let by_slot = record
            .dynamic_slots()
            .any(|(fid, _)| members.contains(&fid));
        if by_reference || by_slot {
            out.insert(rid);
        }
    }
    out
}
