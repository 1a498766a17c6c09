//! Seeded generators for request sequences, populated models and meta-model
//! changes.

use metacore::{feature_catalog, ElementId, MetaChange, MetaKind, Store};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use MetaKind::*;

const NAMES: &[&str] = &[
    "\"Engine\"",
    "\"a b\"",
    "\"\"",
    "\"q\\\"x\"",
    "\"line\\nbreak\"",
    "\"Bus\"",
];

const JUNK: &[&str] = &[
    "frobnicate Class:1",
    "create",
    "create Klass",
    "read Class:1",
    "update Class:1 name 1",
    "update Class:1 name 0 \"x\"",
    "update Class:1 name 1 \"open",
    "delete Class:01",
    "read Class:1 name extra",
    "update Class:1 na-me 1 \"x\"",
];

/// Generates request lines with enough structure that a good share succeed.
pub struct RequestGen<'a> {
    rng: &'a mut ChaCha8Rng,
    issued: [u32; MetaKind::COUNT],
    capacity: u32,
    /// Update lines seen so far, replayed at other positions.
    updates: Vec<String>,
}

impl<'a> RequestGen<'a> {
    /// `capacity` is the per-kind capacity of the store under test.
    pub fn new(rng: &'a mut ChaCha8Rng, capacity: u32) -> Self {
        let mut issued = [0; MetaKind::COUNT];
        issued[RootFolder.index()] = 1;
        RequestGen {
            rng,
            issued,
            capacity,
            updates: Vec::new(),
        }
    }

    /// An index among the creates seen for `kind`, now and then one past.
    fn id(&mut self, kind: MetaKind) -> ElementId {
        let top = self.issued[kind.index()].min(self.capacity) + u32::from(self.rng.gen_bool(0.1));
        ElementId::new(kind, self.rng.gen_range(1..=top.max(1)))
    }

    /// Mostly an element of a kind that has been created.
    fn any_id(&mut self) -> ElementId {
        let made: Vec<MetaKind> = MetaKind::ALL
            .into_iter()
            .filter(|k| self.issued[k.index()] > 0)
            .collect();
        let kind = if self.rng.gen_bool(0.9) {
            *made.choose(self.rng).unwrap()
        } else {
            *MetaKind::ALL.choose(self.rng).unwrap()
        };
        self.id(kind)
    }

    fn kind(&mut self) -> MetaKind {
        const WEIGHTED: &[MetaKind] = &[
            Class,
            Class,
            Class,
            Attribute,
            Attribute,
            Attribute,
            DataType,
            DataType,
            Namespace,
            Namespace,
            Composition,
            Composition,
            Association,
            Inheritance,
            Inheritance,
            Unit,
            Constraint,
            Instance,
            RootFolder,
        ];
        *WEIGHTED.choose(self.rng).unwrap()
    }

    /// Takes note of a line issued outside this generator.
    pub fn observe(&mut self, line: &str) {
        if line.starts_with("update ") {
            self.updates.push(line.to_string());
        }
        let Some(target) = line.strip_prefix("create ") else {
            return;
        };
        let kind = match ElementId::parse(target) {
            Ok(_) => Some(Instance),
            Err(_) => metacore::kind_of_token(target)
                .ok()
                .filter(|k| *k != Instance && *k != RootFolder),
        };
        if let Some(k) = kind {
            self.issued[k.index()] += 1;
        }
    }

    pub fn request(&mut self) -> String {
        let line = self.next_line();
        self.observe(&line);
        line
    }

    fn next_line(&mut self) -> String {
        // Favour creates while the store is nearly empty.
        let made: u32 = self.issued.iter().sum();
        let roll = if made < 12 && self.rng.gen_bool(0.5) {
            2
        } else {
            self.rng.gen_range(0..100)
        };
        if !self.updates.is_empty() && self.rng.gen_bool(0.08) {
            let line = self.updates.choose(self.rng).unwrap().clone();
            let mut words: Vec<&str> = line.splitn(5, ' ').collect();
            let position = self.rng.gen_range(1..=5).to_string();
            words[3] = &position;
            return words.join(" ");
        }
        match roll {
            0..=1 => JUNK.choose(self.rng).unwrap().to_string(),
            2..=15 => format!("create {}", self.kind()),
            16..=25 => {
                let class = if self.rng.gen_bool(0.9) {
                    self.id(Class)
                } else {
                    self.any_id()
                };
                format!("create {class}")
            }
            26..=32 => {
                let id = self.any_id();
                let feature = self.feature(id.kind);
                format!("read {id} {feature}")
            }
            33..=38 => format!("delete {}", self.any_id()),
            _ => {
                let instances = self.issued[Instance.index()] > 0;
                let id = if instances && self.rng.gen_bool(0.3) {
                    self.id(Instance)
                } else {
                    self.any_id()
                };
                let feature = self.feature(id.kind);
                let position = *[1, 1, 1, 2, 3, 4].choose(self.rng).unwrap();
                let value = self.value(&feature);
                format!("update {id} {feature} {position} {value}")
            }
        }
    }

    fn feature(&mut self, kind: MetaKind) -> String {
        if kind == Instance && self.rng.gen_bool(0.6) {
            let fk = *[Attribute, Attribute, Composition, Association]
                .choose(self.rng)
                .unwrap();
            return self.id(fk).to_string();
        }
        if self.rng.gen_bool(0.05) {
            return "colour".into();
        }
        let names: Vec<&str> = feature_catalog(kind)
            .iter()
            .map(|d| d.name)
            .filter(|n| *n != "identifier" || self.rng.gen_bool(0.3))
            .collect();
        names.choose(self.rng).unwrap().to_string()
    }

    fn value(&mut self, feature: &str) -> String {
        if self.rng.gen_bool(0.1) {
            return "void".into();
        }
        if self.rng.gen_bool(0.05) {
            return self.scalar();
        }
        let r = |k| Some(k);
        let target = match feature {
            "namespaces" => r(Namespace),
            "classes" | "source" | "target" | "subclass" | "superclass" | "meta" => r(Class),
            "constraints" => r(Constraint),
            "attributes" => r(Attribute),
            "parent" => r(Inheritance),
            "compositions" => r(Composition),
            "associations" => r(Association),
            "datatype" => r(DataType),
            "unit" => r(Unit),
            f if f.starts_with("Composition:") || f.starts_with("Association:") => r(Instance),
            _ => None,
        };
        if let Some(kind) = target {
            return self.id(kind).to_string();
        }
        let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs.choose(rng).unwrap().to_string();
        match feature {
            "classification" => pick(self.rng, &["\"logical\"", "\"physical\"", "\"virtual\""]),
            "primitive" => pick(
                self.rng,
                &[
                    "\"boolean\"",
                    "\"integer\"",
                    "\"real\"",
                    "\"string\"",
                    "\"complex\"",
                ],
            ),
            "potency" => pick(self.rng, &["1", "1", "2", "3", "0"]),
            "perlevel" => pick(self.rng, &["true", "false"]),
            "lower" => pick(self.rng, &["0", "1", "2"]),
            "upper" => pick(self.rng, &["1", "2", "3", "*", "0"]),
            "level" => "2".into(),
            _ => self.scalar(),
        }
    }

    fn scalar(&mut self) -> String {
        match self.rng.gen_range(0..6) {
            0 => self.rng.gen_range(-3..50).to_string(),
            1 => ["0.5", "1.0e20", "-2.25", "3.0"]
                .choose(self.rng)
                .unwrap()
                .to_string(),
            2 => ["true", "false"].choose(self.rng).unwrap().to_string(),
            3 => "*".into(),
            _ => NAMES.choose(self.rng).unwrap().to_string(),
        }
    }
}

/// A random but well-formed model: classes in one namespace, attributes of
/// random primitive types, some inheritance, compositions and associations,
/// and instances holding values.
pub fn model_script(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut s: Vec<String> = Vec::new();
    let mut push = |line: String| s.push(line);
    push("create Namespace".into());
    push("update RootFolder:1 namespaces 1 Namespace:1".into());
    let prims = ["boolean", "integer", "real", "string"];
    for (i, p) in prims.iter().enumerate() {
        push("create DataType".into());
        push(format!("update DataType:{} primitive 1 \"{p}\"", i + 1));
    }
    push("create Unit".into());

    let classes = rng.gen_range(2..=5u32);
    let mut attributes: Vec<(u32, u32, usize, bool)> = Vec::new(); // (class, attr, prim, list)
    let mut attr = 0;
    for c in 1..=classes {
        push("create Class".into());
        push(format!("update Namespace:1 classes {c} Class:{c}"));
        for k in 1..=rng.gen_range(0..=3) {
            attr += 1;
            let prim = rng.gen_range(0..4);
            push("create Attribute".into());
            push(format!(
                "update Attribute:{attr} datatype 1 DataType:{}",
                prim + 1
            ));
            push(format!("update Attribute:{attr} unit 1 Unit:1"));
            let list = rng.gen_bool(0.25);
            if list {
                push(format!("update Attribute:{attr} upper 1 3"));
            }
            if rng.gen_bool(0.15) {
                push(format!("update Attribute:{attr} perlevel 1 true"));
            }
            push(format!("update Class:{c} attributes {k} Attribute:{attr}"));
            attributes.push((c, attr, prim, list));
        }
    }
    // Class c > 1 may specialise an earlier class.
    let mut parent = vec![0u32; classes as usize + 1];
    let mut inh = 0;
    for c in 2..=classes {
        if rng.gen_bool(0.4) {
            inh += 1;
            parent[c as usize] = rng.gen_range(1..c);
            push("create Inheritance".into());
            push(format!("update Inheritance:{inh} subclass 1 Class:{c}"));
            push(format!(
                "update Inheritance:{inh} superclass 1 Class:{}",
                parent[c as usize]
            ));
            push(format!("update Class:{c} parent 1 Inheritance:{inh}"));
        }
    }
    let mut relations: Vec<(MetaKind, u32, u32, u32)> = Vec::new(); // (kind, id, source, target)
    for kind in [Composition, Association] {
        for n in 1..=rng.gen_range(0..=2) {
            let (src, dst) = (rng.gen_range(1..=classes), rng.gen_range(1..=classes));
            push(format!("create {kind}"));
            push(format!("update {kind}:{n} source 1 Class:{src}"));
            push(format!("update {kind}:{n} target 1 Class:{dst}"));
            let list = if kind == Composition {
                "compositions"
            } else {
                "associations"
            };
            let pos = relations
                .iter()
                .filter(|r| r.0 == kind && r.2 == src)
                .count()
                + 1;
            push(format!("update Class:{src} {list} {pos} {kind}:{n}"));
            relations.push((kind, n, src, dst));
        }
    }

    let ancestors = |mut c: u32| {
        let mut out = vec![c];
        while parent[c as usize] != 0 {
            c = parent[c as usize];
            out.push(c);
        }
        out
    };
    let instances = rng.gen_range(2..=10u32);
    let mut meta = vec![0u32; instances as usize + 1];
    for i in 1..=instances {
        meta[i as usize] = rng.gen_range(1..=classes);
        push(format!("create Class:{}", meta[i as usize]));
    }
    let mut contained = vec![false; instances as usize + 1];
    for i in 1..=instances {
        let chain = ancestors(meta[i as usize]);
        for (c, a, prim, list) in &attributes {
            if !chain.contains(c) || rng.gen_bool(0.2) {
                continue;
            }
            let count = if *list { rng.gen_range(1..=3) } else { 1 };
            for p in 1..=count {
                let v = match prim {
                    0 => ["true", "false"][p % 2].to_string(),
                    1 => rng.gen_range(0..1000).to_string(),
                    2 => format!("{}.5", rng.gen_range(0..100)),
                    _ => format!("\"v{}\"", rng.gen_range(0..100)),
                };
                push(format!("update Instance:{i} Attribute:{a} {p} {v}"));
            }
        }
        for (kind, n, src, dst) in &relations {
            if !chain.contains(src) {
                continue;
            }
            // Later instances only, so containment stays acyclic.
            let pool: Vec<u32> = (i + 1..=instances)
                .filter(|j| ancestors(meta[*j as usize]).contains(dst))
                .filter(|j| *kind == Association || !contained[*j as usize])
                .collect();
            if let Some(j) = pool.choose(rng) {
                if *kind == Composition {
                    contained[*j as usize] = true;
                }
                push(format!("update Instance:{i} {kind}:{n} 1 Instance:{j}"));
            }
        }
    }
    s
}

/// A random change over the live elements of `store`, occasionally aimed at
/// the wrong kind of element.
pub fn meta_change(rng: &mut ChaCha8Rng, store: &Store) -> MetaChange {
    let pick = |rng: &mut ChaCha8Rng, kind: MetaKind| {
        let ids = store.scan(kind);
        ids.choose(rng).copied().unwrap_or(ElementId::new(kind, 1))
    };
    let feature_kind = |rng: &mut ChaCha8Rng| {
        *[Attribute, Attribute, Composition, Association]
            .choose(rng)
            .unwrap()
    };
    match rng.gen_range(0..6) {
        0 => {
            let class = pick(rng, Class);
            let fk = feature_kind(rng);
            MetaChange::AddFeature {
                class,
                feature: pick(rng, fk),
            }
        }
        1 => {
            let fk = feature_kind(rng);
            let feature = pick(rng, fk);
            // Usually the owning class, so the removal goes through.
            let owner = store.scan(Class).into_iter().find(|c| {
                store
                    .fetch(*c)
                    .is_ok_and(|r| r.references().any(|(_, t)| t == feature))
            });
            let class = match owner {
                Some(c) if rng.gen_bool(0.85) => c,
                _ => pick(rng, Class),
            };
            MetaChange::RemoveFeature { class, feature }
        }
        2 => MetaChange::RetypeFeatureDatatype {
            attribute: pick(rng, Attribute),
            datatype: pick(rng, DataType),
        },
        3 => MetaChange::RemoveClass {
            class: pick(rng, Class),
        },
        4 => MetaChange::AddClass {
            namespace: pick(rng, Namespace),
            name: format!("C{}", rng.gen_range(0..100)),
        },
        _ => MetaChange::ChangePotency {
            attribute: pick(rng, Attribute),
            potency: rng.gen_range(0..=3),
            per_level: [None, Some(true), Some(false)]
                .choose(rng)
                .copied()
                .flatten(),
        },
    }
}
