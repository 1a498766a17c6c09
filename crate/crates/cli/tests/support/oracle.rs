//! Naive reference model of the request engine: plain ordered maps, no slot
//! lists, and every query recomputed from scratch. It shares only the request
//! parser, value rendering and error codes with the kernel.

use std::collections::{BTreeMap, BTreeSet};

use metacore::metaconstructor::{FeatureToken, TypeTarget};
use metacore::{parse_request, CrudRequest, ElementId, ErrorCode, Literal, MetaKind, Value};
use MetaKind::*;

#[derive(Clone, Copy)]
enum Ty {
    Text,
    Choice(&'static [&'static str]),
    Int,
    Count,
    Pot,
    Bool,
    Bound,
    Ref(MetaKind),
}

struct F {
    name: &'static str,
    ty: Ty,
    list: bool,
    frozen: bool,
    owns: bool,
}

const CLS: &[&str] = &["logical", "physical"];
const PRIM: &[&str] = &["boolean", "integer", "real", "string"];

fn f(name: &'static str, ty: Ty) -> F {
    F {
        name,
        ty,
        list: false,
        frozen: false,
        owns: false,
    }
}

fn owns(name: &'static str, kind: MetaKind, list: bool) -> F {
    F {
        owns: true,
        list,
        ..f(name, Ty::Ref(kind))
    }
}

fn schema(kind: MetaKind) -> Vec<F> {
    let mut s = vec![
        f("name", Ty::Text),
        F {
            frozen: true,
            ..f("identifier", Ty::Text)
        },
    ];
    let rest = match kind {
        RootFolder => vec![owns("namespaces", Namespace, true)],
        Namespace => vec![
            owns("classes", Class, true),
            owns("namespaces", Namespace, true),
            owns("constraints", Constraint, true),
        ],
        Class => vec![
            f("classification", Ty::Choice(CLS)),
            owns("attributes", Attribute, true),
            owns("parent", Inheritance, false),
            owns("compositions", Composition, true),
            owns("associations", Association, true),
        ],
        Attribute => vec![
            f("datatype", Ty::Ref(DataType)),
            f("unit", Ty::Ref(Unit)),
            f("potency", Ty::Pot),
            f("perlevel", Ty::Bool),
            f("lower", Ty::Count),
            f("upper", Ty::Bound),
        ],
        DataType => vec![f("primitive", Ty::Choice(PRIM))],
        Unit => vec![f("symbol", Ty::Text)],
        Composition | Association => vec![
            f("source", Ty::Ref(Class)),
            f("target", Ty::Ref(Class)),
            f("lower", Ty::Count),
            f("upper", Ty::Bound),
        ],
        Inheritance => {
            s.remove(0);
            vec![
                f("subclass", Ty::Ref(Class)),
                f("superclass", Ty::Ref(Class)),
            ]
        }
        Constraint => vec![f("expression", Ty::Text)],
        Instance => vec![
            f("meta", Ty::Ref(Class)),
            F {
                frozen: true,
                ..f("level", Ty::Int)
            },
            f("classification", Ty::Choice(CLS)),
        ],
    };
    s.extend(rest);
    s
}

fn accepts(ty: Ty, v: &Value) -> bool {
    match (ty, v) {
        (Ty::Text, Value::Str(_)) | (Ty::Bool, Value::Bool(_)) => true,
        (Ty::Int | Ty::Pot, Value::Int(_)) | (Ty::Bound, Value::Unbounded) => true,
        (Ty::Count | Ty::Bound, Value::Int(n)) => *n >= 0,
        (Ty::Choice(c), Value::Str(s)) => c.contains(&s.as_str()),
        (Ty::Ref(k), Value::Ref(id)) => id.kind == k,
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    B(usize),
    D(ElementId),
}

type Rec = BTreeMap<Key, Vec<Value>>;
type Res<T> = Result<T, (ErrorCode, String)>;

macro_rules! fail {
    ($code:ident, $($t:tt)*) => { Err((ErrorCode::$code, format!($($t)*))) };
}

/// A feature an instance may carry, as seen at M1.
struct Dyn {
    fid: ElementId,
    allowed: bool,
    upper: Option<i64>,
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

#[derive(Clone)]
pub struct Oracle {
    cap: u32,
    next: BTreeMap<MetaKind, u32>,
    live: BTreeMap<ElementId, Rec>,
    dead: BTreeSet<ElementId>,
}

impl Oracle {
    pub fn new(cap: u32) -> Self {
        let mut next: BTreeMap<MetaKind, u32> = MetaKind::ALL.iter().map(|k| (*k, 1)).collect();
        next.insert(RootFolder, 2);
        let live = BTreeMap::from([(ElementId::new(RootFolder, 1), Rec::new())]);
        Oracle {
            cap,
            next,
            live,
            dead: BTreeSet::new(),
        }
    }

    pub fn execute(&mut self, line: &str) -> String {
        let result = match parse_request(line) {
            Err(e) => Err((e.code, e.message)),
            Ok(CrudRequest::Create { target }) => self.create(target).map(|id| id.to_string()),
            Ok(CrudRequest::Read { id, feature }) => {
                self.read(id, &feature).map(|vs| join(vs, " "))
            }
            Ok(CrudRequest::Update {
                id,
                feature,
                position,
                value,
            }) => self
                .update(id, &feature, position as usize, &value)
                .map(|()| String::new()),
            Ok(CrudRequest::Delete { id }) => self.delete(id).map(|()| String::new()),
        };
        match result {
            Ok(s) if s.is_empty() => "ok".into(),
            Ok(s) => format!("ok {s}"),
            Err((code, msg)) => format!("error {code} {msg}"),
        }
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("metacore-snapshot v1\n");
        for k in MetaKind::ALL {
            out += &format!("capacity {k} {}\n", self.cap);
        }
        for k in MetaKind::ALL {
            out += &format!("fresh {k} {}\n", self.next[&k]);
        }
        for k in MetaKind::ALL {
            let names = schema(k);
            for i in 1..self.next[&k] {
                let id = ElementId::new(k, i);
                if self.dead.contains(&id) {
                    out += &format!("tombstone {id}\n");
                    continue;
                }
                out += &id.to_string();
                for (key, vs) in &self.live[&id] {
                    let token = match key {
                        Key::B(i) => names[*i].name.to_string(),
                        Key::D(fid) => fid.to_string(),
                    };
                    out += &format!(" {token}={}", join(vs, ","));
                }
                out.push('\n');
            }
        }
        out
    }

    fn rec(&self, id: ElementId) -> Res<&Rec> {
        self.live
            .get(&id)
            .map_or_else(|| fail!(UnknownIdentifier, "{id}"), Ok)
    }

    fn key(kind: MetaKind, name: &str) -> Option<Key> {
        schema(kind).iter().position(|d| d.name == name).map(Key::B)
    }

    fn one(&self, id: ElementId, name: &str) -> Option<&Value> {
        self.live.get(&id)?.get(&Self::key(id.kind, name)?)?.first()
    }

    fn one_ref(&self, id: ElementId, name: &str) -> Option<ElementId> {
        self.one(id, name).and_then(Value::as_ref_id)
    }

    fn set(&mut self, id: ElementId, name: &str, v: Value) {
        let key = Self::key(id.kind, name).unwrap();
        self.live.get_mut(&id).unwrap().insert(key, vec![v]);
    }

    fn alloc(&mut self, kind: MetaKind) -> Res<ElementId> {
        let n = self.next[&kind];
        if n > self.cap {
            return fail!(CapacityExceeded, "{kind}");
        }
        self.next.insert(kind, n + 1);
        let id = ElementId::new(kind, n);
        self.live.insert(id, Rec::new());
        Ok(id)
    }

    fn create(&mut self, target: TypeTarget) -> Res<ElementId> {
        let logical = Value::Str("logical".into());
        match target {
            TypeTarget::Kind(RootFolder) => fail!(SingletonViolation, "RootFolder"),
            TypeTarget::Kind(Instance) => fail!(LevelViolation, "Instance"),
            TypeTarget::Kind(kind) => {
                let id = self.alloc(kind)?;
                if kind == Class {
                    self.set(id, "classification", logical);
                }
                Ok(id)
            }
            TypeTarget::Class(class) => {
                self.rec(class)?;
                if class.kind != Class {
                    return fail!(LevelViolation, "{class}");
                }
                let classification = self
                    .one(class, "classification")
                    .cloned()
                    .unwrap_or(logical);
                let id = self.alloc(Instance)?;
                self.set(id, "meta", Value::Ref(class));
                self.set(id, "level", Value::Int(1));
                self.set(id, "classification", classification);
                Ok(id)
            }
        }
    }

    /// The class and its ancestors, walking the first Inheritance naming each
    /// as subclass; `None` on a loop.
    fn chain(&self, class: ElementId) -> Option<Vec<ElementId>> {
        let mut chain = vec![class];
        loop {
            let current = *chain.last().unwrap();
            let parent = self
                .live
                .keys()
                .filter(|i| i.kind == Inheritance)
                .find_map(|i| {
                    (self.one_ref(*i, "subclass") == Some(current))
                        .then(|| self.one_ref(*i, "superclass"))
                        .flatten()
                });
            match parent {
                None => return Some(chain),
                Some(p) if chain.contains(&p) => return None,
                Some(p) => chain.push(p),
            }
        }
    }

    fn features(&self, class: ElementId) -> Option<Vec<Dyn>> {
        let mut out = Vec::new();
        for c in self.chain(class)? {
            for list in ["attributes", "compositions", "associations"] {
                let ids = self.live[&c]
                    .get(&Self::key(Class, list)?)
                    .cloned()
                    .unwrap_or_default();
                for fid in ids.iter().filter_map(Value::as_ref_id) {
                    // Potency counts down from M2; per-level keeps every level below.
                    let potency = self
                        .one(fid, "potency")
                        .and_then(Value::as_int)
                        .unwrap_or(1);
                    let per_level = self.one(fid, "perlevel") == Some(&Value::Bool(true));
                    let allowed =
                        fid.kind != Attribute || potency == 1 || (per_level && potency >= 1);
                    let upper = match self.one(fid, "upper") {
                        Some(Value::Int(n)) => Some(*n),
                        Some(Value::Unbounded) => None,
                        _ if fid.kind == Attribute => Some(1),
                        _ => None,
                    };
                    out.push(Dyn {
                        fid,
                        allowed,
                        upper,
                    });
                }
            }
        }
        Some(out)
    }

    fn instance_feature(&self, inst: ElementId, fid: ElementId) -> Option<Dyn> {
        let meta = self.one_ref(inst, "meta")?;
        self.features(meta)?.into_iter().find(|d| d.fid == fid)
    }

    fn fits(&self, fid: ElementId, v: &Value) -> bool {
        if fid.kind == Attribute {
            let prim = self
                .one_ref(fid, "datatype")
                .and_then(|dt| self.one(dt, "primitive"));
            let Some(Value::Str(p)) = prim else {
                return false;
            };
            return matches!(
                (p.as_str(), v),
                ("boolean", Value::Bool(_))
                    | ("integer", Value::Int(_))
                    | ("real", Value::Real(_))
                    | ("string", Value::Str(_))
            );
        }
        let (Some(target), Some(child)) = (self.one_ref(fid, "target"), v.as_ref_id()) else {
            return false;
        };
        let meta = self.one_ref(child, "meta");
        child.kind == Instance
            && meta
                .and_then(|m| self.chain(m))
                .is_some_and(|c| c.contains(&target))
    }

    /// Instances holding a value the current model no longer admits.
    fn broken(&self) -> Vec<ElementId> {
        let mut out = Vec::new();
        for (id, rec) in self.live.iter().filter(|(i, _)| i.kind == Instance) {
            let bad = rec.iter().any(|(k, vs)| {
                let Key::D(fid) = k else { return false };
                !self.instance_feature(*id, *fid).is_some_and(|d| {
                    d.allowed
                        && vs.iter().all(|v| self.fits(*fid, v))
                        && d.upper.is_none_or(|u| vs.len() as i64 <= u)
                })
            });
            if bad {
                out.push(*id);
            }
        }
        out
    }

    fn owning(owner: ElementId, key: Key) -> bool {
        match key {
            Key::B(i) => schema(owner.kind)[i].owns,
            Key::D(fid) => owner.kind == Instance && fid.kind == Composition,
        }
    }

    fn owners_of(&self, child: ElementId) -> Vec<(ElementId, Key, usize)> {
        let mut out = Vec::new();
        for (id, rec) in &self.live {
            for (k, vs) in rec.iter().filter(|(k, _)| Self::owning(*id, **k)) {
                for (p, v) in vs.iter().enumerate() {
                    if v.as_ref_id() == Some(child) {
                        out.push((*id, *k, p));
                    }
                }
            }
        }
        out
    }

    fn is_inside(&self, start: ElementId, ancestor: ElementId) -> bool {
        let mut seen = BTreeSet::new();
        let mut current = start;
        while let Some((owner, _, _)) = self.owners_of(current).first().copied() {
            if owner == ancestor {
                return true;
            }
            if !seen.insert(owner) {
                return false;
            }
            current = owner;
        }
        false
    }

    fn resolve(&self, id: ElementId, tok: &FeatureToken) -> Res<(Key, Option<Dyn>)> {
        let found = match tok {
            FeatureToken::Named(name) => Self::key(id.kind, name).map(|k| (k, None)),
            FeatureToken::Declared(fid) if id.kind == Instance => self
                .instance_feature(id, *fid)
                .map(|d| (Key::D(*fid), Some(d))),
            FeatureToken::Declared(_) => None,
        };
        found.map_or_else(|| fail!(UnknownFeature, "{id} {tok}"), Ok)
    }

    fn read(&self, id: ElementId, tok: &FeatureToken) -> Res<Vec<Value>> {
        let rec = self.rec(id)?;
        let (key, _) = self.resolve(id, tok)?;
        if matches!(tok, FeatureToken::Named(n) if n == "identifier") {
            return Ok(vec![Value::Str(id.to_string())]);
        }
        Ok(rec.get(&key).cloned().unwrap_or_default())
    }

    fn update(&mut self, id: ElementId, tok: &FeatureToken, pos: usize, lit: &Literal) -> Res<()> {
        let rec = self.rec(id)?.clone();
        let (key, dynamic) = self.resolve(id, tok)?;
        let desc = match key {
            Key::B(i) => schema(id.kind).into_iter().nth(i),
            Key::D(_) => None,
        };
        if desc.as_ref().is_some_and(|d| d.frozen) {
            return fail!(FrozenFeature, "{id} {tok}");
        }
        let mismatch = || fail!(TypeMismatch, "{id} {tok}");
        match (lit, &desc, &dynamic) {
            (Literal::Void, Some(d), _) if d.name == "meta" => return mismatch(),
            (Literal::Void, _, _) => {}
            (Literal::Value(v), Some(d), _) => {
                if !accepts(d.ty, v) {
                    return mismatch();
                }
                if let Some(t) = v.as_ref_id() {
                    self.rec(t)?;
                }
            }
            (Literal::Value(v), None, Some(d)) if d.fid.kind == Attribute => {
                if !self.fits(d.fid, v) {
                    return mismatch();
                }
            }
            (Literal::Value(v), None, Some(d)) => {
                let Some(child) = v.as_ref_id().filter(|c| c.kind == Instance) else {
                    return mismatch();
                };
                self.rec(child)?;
                if !self.fits(d.fid, v) {
                    return mismatch();
                }
            }
            (Literal::Value(_), None, None) => unreachable!(),
        }

        let len = rec.get(&key).map_or(0, Vec::len);
        let scalar = match (&desc, &dynamic) {
            (Some(d), _) => !d.list,
            (None, Some(d)) => d.upper == Some(1),
            _ => unreachable!(),
        };
        let ok = match (lit, scalar) {
            (Literal::Void, true) => pos == 1 && len == 1,
            (Literal::Void, false) => pos <= len,
            (Literal::Value(_), true) => pos == 1,
            (Literal::Value(_), false) => pos <= len + 1,
        };
        if !ok {
            return fail!(PositionOutOfRange, "{id} {tok} {pos}");
        }

        if let Literal::Value(v) = lit {
            let forbidden = dynamic
                .as_ref()
                .is_some_and(|d| d.fid.kind == Attribute && !d.allowed);
            let zero = desc.as_ref().is_some_and(|d| matches!(d.ty, Ty::Pot))
                && v.as_int().is_some_and(|n| n < 1);
            if forbidden || zero {
                return fail!(PotencyViolation, "{id} {tok}");
            }
            let upper = dynamic.as_ref().and_then(|d| d.upper);
            if pos == len + 1 && upper.is_some_and(|u| len as i64 + 1 > u) {
                return fail!(CardinalityViolation, "{id} {tok}");
            }
            if let (Some(child), true) = (v.as_ref_id(), Self::owning(id, key)) {
                let elsewhere = self
                    .owners_of(child)
                    .iter()
                    .any(|e| *e != (id, key, pos - 1));
                if child == id || elsewhere || self.is_inside(id, child) {
                    return fail!(IntegrityViolation, "{id} {tok} containment {child}");
                }
            }
        }
        let retyping = id.kind == Instance && matches!(tok, FeatureToken::Named(n) if n == "meta");
        if let (true, Literal::Value(Value::Ref(meta))) = (retyping, lit) {
            let keeps: Vec<ElementId> = self
                .features(*meta)
                .unwrap_or_default()
                .iter()
                .map(|d| d.fid)
                .collect();
            let dropped: Vec<ElementId> = rec
                .keys()
                .filter_map(|k| match k {
                    Key::D(fid) if !keeps.contains(fid) => Some(*fid),
                    _ => None,
                })
                .collect();
            if !dropped.is_empty() {
                return fail!(IntegrityViolation, "{id} meta slots {}", join(dropped, " "));
            }
        }

        let mut slot = rec.get(&key).cloned().unwrap_or_default();
        match lit {
            Literal::Void => {
                slot.remove(pos - 1);
            }
            Literal::Value(v) if pos == len + 1 => slot.push(v.clone()),
            Literal::Value(v) => slot[pos - 1] = v.clone(),
        }
        let record = self.live.get_mut(&id).unwrap();
        if slot.is_empty() {
            record.remove(&key);
        } else {
            record.insert(key, slot);
        }

        if id.kind == Inheritance {
            let classes: Vec<ElementId> = self
                .live
                .keys()
                .filter(|i| i.kind == Class)
                .copied()
                .collect();
            let well_formed = classes.iter().all(|c| {
                let named = self
                    .live
                    .keys()
                    .filter(|i| i.kind == Inheritance && self.one_ref(**i, "subclass") == Some(*c));
                named.count() <= 1 && self.chain(*c).is_some()
            });
            if !well_formed {
                self.live.insert(id, rec);
                return fail!(IntegrityViolation, "{id} {tok} inheritance");
            }
        }
        if id.kind != Instance || retyping {
            let broken = self.broken();
            if !broken.is_empty() {
                self.live.insert(id, rec);
                return fail!(
                    IntegrityViolation,
                    "{id} {tok} instances {}",
                    join(broken, " ")
                );
            }
        }
        Ok(())
    }

    fn delete(&mut self, id: ElementId) -> Res<()> {
        self.rec(id)?;
        if id.kind == RootFolder {
            return fail!(RootDeletion, "{id}");
        }
        let mut members = BTreeSet::from([id]);
        let mut pending = vec![id];
        while let Some(m) = pending.pop() {
            for (k, vs) in &self.live[&m] {
                for child in vs.iter().filter_map(Value::as_ref_id) {
                    if Self::owning(m, *k)
                        && self.live.contains_key(&child)
                        && members.insert(child)
                    {
                        pending.push(child);
                    }
                }
            }
        }
        let referencers: Vec<ElementId> =
            self.live
                .iter()
                .filter(|(rid, _)| !members.contains(rid))
                .filter(|(rid, rec)| {
                    rec.iter().any(|(k, vs)| {
                        matches!(k, Key::D(fid) if members.contains(fid))
                            || vs.iter().filter_map(Value::as_ref_id).any(|t| {
                                members.contains(&t) && !(t == id && Self::owning(**rid, *k))
                            })
                    })
                })
                .map(|(rid, _)| *rid)
                .collect();
        if !referencers.is_empty() {
            return fail!(
                IntegrityViolation,
                "{id} referenced-by {}",
                join(referencers, " ")
            );
        }

        let saved = self.clone();
        for (owner, rec) in self.live.iter_mut() {
            for (k, vs) in rec.iter_mut() {
                if Self::owning(*owner, *k) {
                    vs.retain(|v| v.as_ref_id() != Some(id));
                }
            }
            rec.retain(|_, vs| !vs.is_empty());
        }
        for m in &members {
            self.live.remove(m);
            self.dead.insert(*m);
        }
        let broken = self.broken();
        if !broken.is_empty() {
            *self = saved;
            return fail!(IntegrityViolation, "{id} instances {}", join(broken, " "));
        }
        Ok(())
    }
}
