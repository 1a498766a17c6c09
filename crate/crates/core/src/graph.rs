//! Containment and inheritance queries over a store.
//!
//! References are unidirectional, so every inverse lookup here is a scan.

use std::collections::{BTreeMap, BTreeSet};

use crate::kernel::{feature_catalog, MetaKind};
use crate::store::{ElementId, FeatureKey, Store};

/// One entry of a containment slot: `(owner, feature, 0-based position)`.
pub(crate) type ContainerEntry = (ElementId, FeatureKey, usize);

pub(crate) fn is_containment(owner: MetaKind, key: FeatureKey) -> bool {
    match key {
        FeatureKey::Builtin(i) => feature_catalog(owner)[i as usize].containment,
        FeatureKey::Declared(fid) => {
            owner == MetaKind::Instance && fid.kind == MetaKind::Composition
        }
    }
}

/// Every containment entry in the store, grouped by contained element.
pub(crate) fn containers(store: &Store) -> BTreeMap<ElementId, Vec<ContainerEntry>> {
    let mut map: BTreeMap<ElementId, Vec<ContainerEntry>> = BTreeMap::new();
    for record in store.all_records() {
        let owner = record.id();
        for (key, values) in record.slots() {
            if !is_containment(owner.kind, key) {
                continue;
            }
            for (pos, v) in values.iter().enumerate() {
                if let Some(child) = v.as_ref_id() {
                    map.entry(child).or_default().push((owner, key, pos));
                }
            }
        }
    }
    map
}

/// `true` if `ancestor` is reached by walking up the containers of `start`
/// (`start` itself excluded).
pub(crate) fn is_contained_in(
    containers: &BTreeMap<ElementId, Vec<ContainerEntry>>,
    start: ElementId,
    ancestor: ElementId,
) -> bool {
    let mut seen = BTreeSet::new();
    let mut current = start;
    while let Some((owner, _, _)) = containers.get(&current).and_then(|c| c.first()) {
        if *owner == ancestor {
            return true;
        }
        if !seen.insert(*owner) {
            return false;
        }
        current = *owner;
    }
    false
}

/// `root` plus everything it transitively owns.
pub(crate) fn subtree(store: &Store, root: ElementId) -> BTreeSet<ElementId> {
    let mut members = BTreeSet::from([root]);
    let mut pending = vec![root];
    while let Some(id) = pending.pop() {
        let Ok(record) = store.fetch(id) else {
            continue;
        };
        for (key, child) in record.references() {
            if is_containment(id.kind, key) && store.is_live(child) && members.insert(child) {
                pending.push(child);
            }
        }
    }
    members
}

/// Superclass of `class`: the first live Inheritance naming it as subclass
/// with a superclass set.
pub(crate) fn parent_class(store: &Store, class: ElementId) -> Option<ElementId> {
    store.records(MetaKind::Inheritance).find_map(|r| {
        if r.scalar_ref("subclass") == Some(class) {
            r.scalar_ref("superclass")
        } else {
            None
        }
    })
}

/// Inheritance records naming `class` as subclass.
pub(crate) fn inheritances_of(store: &Store, class: ElementId) -> Vec<ElementId> {
    store
        .records(MetaKind::Inheritance)
        .filter(|r| r.scalar_ref("subclass") == Some(class))
        .map(|r| r.id())
        .collect()
}

/// `class` followed by its ancestors, or `None` if the chain loops.
pub(crate) fn ancestry(store: &Store, class: ElementId) -> Option<Vec<ElementId>> {
    let mut chain = vec![class];
    let mut current = class;
    while let Some(parent) = parent_class(store, current) {
        if chain.contains(&parent) {
            return None;
        }
        chain.push(parent);
        current = parent;
    }
    Some(chain)
}

/// `true` if `class` is `target` or inherits from it.
pub(crate) fn conforms_to(store: &Store, class: ElementId, target: ElementId) -> bool {
    ancestry(store, class).is_some_and(|chain| chain.contains(&target))
}

/// Single parent per class and no cycles.
pub(crate) fn inheritance_is_well_formed(store: &Store) -> bool {
    store.records(MetaKind::Class).all(|class| {
        inheritances_of(store, class.id()).len() <= 1 && ancestry(store, class.id()).is_some()
    })
}

/// Live instances whose meta is exactly `class`.
pub(crate) fn instances_of(store: &Store, class: ElementId) -> Vec<ElementId> {
    store
        .records(MetaKind::Instance)
        .filter(|r| r.scalar_ref("meta") == Some(class))
        .map(|r| r.id())
        .collect()
}
