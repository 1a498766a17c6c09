//! Object-relational repository: one fixed-capacity slot list per kind.
//!
//! An element's identifier is its position in the list of its kind. Slots are
//! never reused: a deleted element leaves a tombstone behind, so an id keeps
//! naming the same element for the whole life of the model.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{crud_err, CrudResult};
use crate::kernel::{feature_catalog, kind_of_token, MetaKind, IDENTIFIER};
use crate::value::Value;

pub const DEFAULT_CAPACITY: u32 = 1024;

/// `(kind, 1-based index)`; textual form `Kind:index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementId {
    pub kind: MetaKind,
    pub index: u32,
}

impl ElementId {
    pub const ROOT: ElementId = ElementId {
        kind: MetaKind::RootFolder,
        index: 1,
    };

    pub const fn new(kind: MetaKind, index: u32) -> Self {
        ElementId { kind, index }
    }

    pub fn parse(token: &str) -> CrudResult<ElementId> {
        let (kind, index) = token
            .split_once(':')
            .ok_or_else(|| crud_err!(ParseError, "invalid identifier: {token}"))?;
        if kind.is_empty() || !kind.bytes().all(|b| b.is_ascii_alphabetic()) {
            return Err(crud_err!(ParseError, "invalid identifier: {token}"));
        }
        let kind = kind_of_token(kind)?;
        let index = parse_index(index)
            .ok_or_else(|| crud_err!(ParseError, "invalid identifier: {token}"))?;
        Ok(ElementId::new(kind, index))
    }
}

/// Positive decimal without sign or leading zeros.
pub(crate) fn parse_index(digits: &str) -> Option<u32> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.index)
    }
}

/// Key of a feature slot inside a record.
///
/// Built-ins order by catalog position and come before dynamic features,
/// which order by the id of their declaring element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKey {
    Builtin(u8),
    Declared(ElementId),
}

impl FeatureKey {
    pub fn builtin(kind: MetaKind, name: &str) -> Option<FeatureKey> {
        crate::kernel::feature_index(kind, name).map(|i| FeatureKey::Builtin(i as u8))
    }

    /// Wire token of the feature on an element of `kind`.
    pub fn token(&self, kind: MetaKind) -> String {
        match self {
            FeatureKey::Builtin(i) => feature_catalog(kind)[*i as usize].name.to_string(),
            FeatureKey::Declared(id) => id.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementRecord {
    id: ElementId,
    slots: BTreeMap<FeatureKey, Vec<Value>>,
}

impl ElementRecord {
    pub(crate) fn new(id: ElementId) -> Self {
        ElementRecord {
            id,
            slots: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> ElementId {
        self.id
    }

    /// Values of a slot in order; empty when unset. `identifier` is derived.
    pub fn values(&self, key: FeatureKey) -> Vec<Value> {
        if let FeatureKey::Builtin(i) = key {
            if feature_catalog(self.id.kind)[i as usize].name == IDENTIFIER {
                return vec![Value::Str(self.id.to_string())];
            }
        }
        self.slot(key).to_vec()
    }

    /// Stored values of a slot; empty when unset.
    pub fn slot(&self, key: FeatureKey) -> &[Value] {
        self.slots.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Stored values of a built-in feature by name.
    pub fn get(&self, name: &str) -> &[Value] {
        match FeatureKey::builtin(self.id.kind, name) {
            Some(key) => self.slot(key),
            None => &[],
        }
    }

    /// First value of a scalar built-in.
    pub fn scalar(&self, name: &str) -> Option<&Value> {
        self.get(name).first()
    }

    pub fn scalar_ref(&self, name: &str) -> Option<ElementId> {
        self.scalar(name).and_then(Value::as_ref_id)
    }

    /// Non-empty slots in canonical order.
    pub fn slots(&self) -> impl Iterator<Item = (FeatureKey, &[Value])> {
        self.slots.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn dynamic_slots(&self) -> impl Iterator<Item = (ElementId, &[Value])> {
        self.slots().filter_map(|(k, v)| match k {
            FeatureKey::Declared(id) => Some((id, v)),
            FeatureKey::Builtin(_) => None,
        })
    }

    /// Every element id held as a value, in slot order.
    pub fn references(&self) -> impl Iterator<Item = (FeatureKey, ElementId)> + '_ {
        self.slots().flat_map(|(k, vs)| {
            vs.iter()
                .filter_map(move |v| v.as_ref_id().map(|id| (k, id)))
        })
    }

    pub(crate) fn slot_mut(&mut self, key: FeatureKey) -> &mut Vec<Value> {
        self.slots.entry(key).or_default()
    }

    /// Drops empty slots so that unset and empty are the same state.
    pub(crate) fn compact(&mut self) {
        self.slots.retain(|_, v| !v.is_empty());
    }

    pub(crate) fn set(&mut self, key: FeatureKey, values: Vec<Value>) {
        if values.is_empty() {
            self.slots.remove(&key);
        } else {
            self.slots.insert(key, values);
        }
    }

    pub(crate) fn set_builtin(&mut self, name: &str, value: Value) {
        let key = FeatureKey::builtin(self.id.kind, name).expect("catalog feature");
        self.set(key, vec![value]);
    }

    pub(crate) fn clear(&mut self, key: FeatureKey) -> usize {
        self.slots.remove(&key).map_or(0, |v| v.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Slot {
    Empty,
    Live(ElementRecord),
    Tombstone,
}

#[derive(Clone, Debug, PartialEq)]
struct SlotList {
    slots: Box<[Slot]>,
    next_fresh: u32,
}

/// Per-kind list sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capacities([u32; MetaKind::COUNT]);

impl Capacities {
    pub fn uniform(n: u32) -> Self {
        Capacities([n; MetaKind::COUNT])
    }

    pub fn get(&self, kind: MetaKind) -> u32 {
        self.0[kind.index()]
    }

    pub fn set(&mut self, kind: MetaKind, n: u32) -> &mut Self {
        self.0[kind.index()] = n;
        self
    }

    pub fn with(mut self, kind: MetaKind, n: u32) -> Self {
        self.set(kind, n);
        self
    }
}

impl Default for Capacities {
    fn default() -> Self {
        Capacities::uniform(DEFAULT_CAPACITY)
    }
}

/// The model repository.
///
/// Public methods only read. Mutation goes through the request engine in
/// [`crate::metaconstructor`] and the reflective operations in
/// [`crate::reflection`].
#[derive(Clone, Debug, PartialEq)]
pub struct Store {
    lists: Vec<SlotList>,
}

impl Store {
    /// An empty model holding only `RootFolder:1`.
    pub fn new(capacities: Capacities) -> CrudResult<Store> {
        let mut store = Store::unrooted(capacities)?;
        let root = store.list_mut(MetaKind::RootFolder);
        root.slots[0] = Slot::Live(ElementRecord::new(ElementId::ROOT));
        root.next_fresh = 2;
        Ok(store)
    }

    pub(crate) fn unrooted(capacities: Capacities) -> CrudResult<Store> {
        let mut lists = Vec::with_capacity(MetaKind::COUNT);
        for kind in MetaKind::ALL {
            let n = capacities.get(kind);
            if n == 0 {
                return Err(crud_err!(InvalidCapacity, "{kind} 0"));
            }
            lists.push(SlotList {
                slots: vec![Slot::Empty; n as usize].into_boxed_slice(),
                next_fresh: 1,
            });
        }
        Ok(Store { lists })
    }

    fn list(&self, kind: MetaKind) -> &SlotList {
        &self.lists[kind.index()]
    }

    fn list_mut(&mut self, kind: MetaKind) -> &mut SlotList {
        &mut self.lists[kind.index()]
    }

    pub fn capacities(&self) -> Capacities {
        let mut caps = Capacities::uniform(1);
        for kind in MetaKind::ALL {
            caps.set(kind, self.capacity(kind));
        }
        caps
    }

    pub fn capacity(&self, kind: MetaKind) -> u32 {
        self.list(kind).slots.len() as u32
    }

    /// Index the next allocation of `kind` will receive.
    pub fn next_fresh(&self, kind: MetaKind) -> u32 {
        self.list(kind).next_fresh
    }

    pub(crate) fn slot(&self, id: ElementId) -> Option<&Slot> {
        let i = id.index.checked_sub(1)? as usize;
        self.list(id.kind).slots.get(i)
    }

    pub(crate) fn slot_mut(&mut self, id: ElementId) -> Option<&mut Slot> {
        let i = id.index.checked_sub(1)? as usize;
        self.list_mut(id.kind).slots.get_mut(i)
    }

    pub fn is_live(&self, id: ElementId) -> bool {
        matches!(self.slot(id), Some(Slot::Live(_)))
    }

    pub fn is_tombstone(&self, id: ElementId) -> bool {
        matches!(self.slot(id), Some(Slot::Tombstone))
    }

    /// The live record of `id`.
    pub fn fetch(&self, id: ElementId) -> CrudResult<&ElementRecord> {
        match self.slot(id) {
            Some(Slot::Live(record)) => Ok(record),
            _ => Err(crud_err!(UnknownIdentifier, "{id}")),
        }
    }

    pub(crate) fn fetch_mut(&mut self, id: ElementId) -> CrudResult<&mut ElementRecord> {
        match self.slot_mut(id) {
            Some(Slot::Live(record)) => Ok(record),
            _ => Err(crud_err!(UnknownIdentifier, "{id}")),
        }
    }

    /// Live ids of `kind`, ascending. This is the canonical iteration order.
    pub fn scan(&self, kind: MetaKind) -> Vec<ElementId> {
        self.records(kind).map(ElementRecord::id).collect()
    }

    /// Live records of `kind`, ascending.
    pub fn records(&self, kind: MetaKind) -> impl Iterator<Item = &ElementRecord> {
        self.list(kind).slots.iter().filter_map(|s| match s {
            Slot::Live(r) => Some(r),
            _ => None,
        })
    }

    /// Live records of every kind in canonical order.
    pub fn all_records(&self) -> impl Iterator<Item = &ElementRecord> {
        MetaKind::ALL.into_iter().flat_map(|k| self.records(k))
    }

    /// Tombstoned ids of `kind`, ascending.
    pub fn tombstones(&self, kind: MetaKind) -> Vec<ElementId> {
        let list = self.list(kind);
        (1..list.next_fresh)
            .map(|i| ElementId::new(kind, i))
            .filter(|id| self.is_tombstone(*id))
            .collect()
    }

    pub(crate) fn allocate(&mut self, kind: MetaKind) -> CrudResult<ElementId> {
        if kind == MetaKind::RootFolder {
            return Err(crud_err!(SingletonViolation, "RootFolder"));
        }
        let list = self.list_mut(kind);
        let index = list.next_fresh;
        if index as usize > list.slots.len() {
            return Err(crud_err!(CapacityExceeded, "{kind}"));
        }
        let id = ElementId::new(kind, index);
        list.slots[index as usize - 1] = Slot::Live(ElementRecord::new(id));
        list.next_fresh += 1;
        Ok(id)
    }

    pub(crate) fn tombstone(&mut self, id: ElementId) -> CrudResult<()> {
        match self.slot_mut(id) {
            Some(slot @ Slot::Live(_)) => {
                *slot = Slot::Tombstone;
                Ok(())
            }
            _ => Err(crud_err!(UnknownIdentifier, "{id}")),
        }
    }

    /// Used by the snapshot loader, which restores slots verbatim.
    pub(crate) fn install(&mut self, id: ElementId, slot: Slot) {
        let list = self.list_mut(id.kind);
        list.slots[id.index as usize - 1] = slot;
    }

    pub(crate) fn set_next_fresh(&mut self, kind: MetaKind, next: u32) {
        self.list_mut(kind).next_fresh = next;
    }

    /// Number of non-empty dynamic slots over all live instances.
    pub fn set_value_count(&self) -> usize {
        self.records(MetaKind::Instance)
            .map(|r| r.dynamic_slots().count())
            .sum()
    }
}
