//! The frozen M3 meta-language.
//!
//! Everything in this module is immutable data and pure functions: the eleven
//! element kinds, the ordered feature catalog of each kind, and the potency
//! rule that drives deep instantiation.

use std::fmt;

use crate::error::{crud_err, CrudResult};
use crate::value::Value;

/// The closed set of M3 element kinds, in canonical order.
///
/// The declaration order is normative: it is the order in which kinds appear
/// in snapshots, diagnostics and every other enumeration of the store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetaKind {
    RootFolder,
    Namespace,
    Class,
    Attribute,
    DataType,
    Unit,
    Composition,
    Inheritance,
    Association,
    Constraint,
    Instance,
}

impl MetaKind {
    pub const ALL: [MetaKind; 11] = [
        MetaKind::RootFolder,
        MetaKind::Namespace,
        MetaKind::Class,
        MetaKind::Attribute,
        MetaKind::DataType,
        MetaKind::Unit,
        MetaKind::Composition,
        MetaKind::Inheritance,
        MetaKind::Association,
        MetaKind::Constraint,
        MetaKind::Instance,
    ];

    pub const COUNT: usize = 11;

    pub fn name(self) -> &'static str {
        match self {
            MetaKind::RootFolder => "RootFolder",
            MetaKind::Namespace => "Namespace",
            MetaKind::Class => "Class",
            MetaKind::Attribute => "Attribute",
            MetaKind::DataType => "DataType",
            MetaKind::Unit => "Unit",
            MetaKind::Composition => "Composition",
            MetaKind::Inheritance => "Inheritance",
            MetaKind::Association => "Association",
            MetaKind::Constraint => "Constraint",
            MetaKind::Instance => "Instance",
        }
    }

    /// Position in [`MetaKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Kinds whose records declare a feature that instances carry a slot for.
    pub fn is_feature_declaration(self) -> bool {
        matches!(
            self,
            MetaKind::Attribute | MetaKind::Composition | MetaKind::Association
        )
    }
}

impl fmt::Display for MetaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a canonical, case-sensitive kind name to its [`MetaKind`].
pub fn kind_of_token(token: &str) -> CrudResult<MetaKind> {
    MetaKind::ALL
        .into_iter()
        .find(|kind| kind.name() == token)
        .ok_or_else(|| crud_err!(UnknownKind, "{token}"))
}

/// A modeling level. M1 is the lowest; there is no M0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Level(pub u8);

impl Level {
    pub const M1: Level = Level(1);
    pub const M2: Level = Level(2);
    pub const M3: Level = Level(3);
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.0)
    }
}

/// Deep-instantiation potency of an attribute.
///
/// `value` counts how many levels below the declaration the attribute is
/// assigned. `per_level` additionally demands a value on every level passed
/// on the way down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Potency {
    pub value: u32,
    pub per_level: bool,
}

impl Potency {
    pub const fn new(value: u32, per_level: bool) -> Self {
        Potency { value, per_level }
    }
}

impl Default for Potency {
    fn default() -> Self {
        Potency::new(1, false)
    }
}

/// Whether a feature must, may, or must not hold a value at a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Required,
    Allowed,
    Forbidden,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Required => "required",
            Verdict::Allowed => "allowed",
            Verdict::Forbidden => "forbidden",
        }
    }
}

/// Decides whether an attribute declared at `declared` with `potency` must be
/// set at `query`.
///
/// The potency counts down by one per level. The attribute is assigned where
/// it reaches zero; a per-level attribute is also assigned on every level in
/// between.
pub fn potency_at(declared: Level, potency: Potency, query: Level) -> CrudResult<Verdict> {
    if query.0 < 1 || query >= declared {
        return Err(crud_err!(
            PotencyViolation,
            "level {query} is not below declaring level {declared}"
        ));
    }
    let declared = i64::from(declared.0);
    let query = i64::from(query.0);
    let floor = declared - i64::from(potency.value);
    let on_floor = query == floor;
    let in_band = potency.per_level && floor <= query && query < declared;
    Ok(if on_floor || in_band {
        Verdict::Required
    } else {
        Verdict::Forbidden
    })
}

/// Logical/physical annotation carried by classes and instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    Logical,
    Physical,
}

impl Classification {
    pub const TOKENS: &'static [&'static str] = &["logical", "physical"];

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Logical => "logical",
            Classification::Physical => "physical",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "logical" => Some(Classification::Logical),
            "physical" => Some(Classification::Physical),
            _ => None,
        }
    }
}

/// DataType primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    Boolean,
    Integer,
    Real,
    String,
}

impl Primitive {
    pub const TOKENS: &'static [&'static str] = &["boolean", "integer", "real", "string"];

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::Boolean => "boolean",
            Primitive::Integer => "integer",
            Primitive::Real => "real",
            Primitive::String => "string",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "boolean" => Some(Primitive::Boolean),
            "integer" => Some(Primitive::Integer),
            "real" => Some(Primitive::Real),
            "string" => Some(Primitive::String),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cardinality {
    Scalar,
    /// Ordered list; `upper == None` means unbounded.
    List {
        lower: u32,
        upper: Option<u32>,
    },
}

/// What a feature slot accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueKind {
    Text,
    /// A string restricted to a fixed token set.
    Choice(&'static [&'static str]),
    Integer,
    /// Non-negative integer.
    Count,
    /// Potency value; must be at least one.
    Potency,
    Boolean,
    /// Non-negative integer or `*`.
    Bound,
    Reference(&'static [MetaKind]),
}

impl ValueKind {
    /// Shape check only; reference liveness is the caller's concern.
    pub fn accepts(&self, value: &Value) -> bool {
        match (self, value) {
            (ValueKind::Text, Value::Str(_)) => true,
            (ValueKind::Choice(set), Value::Str(s)) => set.contains(&s.as_str()),
            (ValueKind::Integer | ValueKind::Potency, Value::Int(_)) => true,
            (ValueKind::Count | ValueKind::Bound, Value::Int(n)) => *n >= 0,
            (ValueKind::Bound, Value::Unbounded) => true,
            (ValueKind::Boolean, Value::Bool(_)) => true,
            (ValueKind::Reference(kinds), Value::Ref(id)) => kinds.contains(&id.kind),
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutability {
    Settable,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureDescriptor {
    pub name: &'static str,
    pub cardinality: Cardinality,
    pub value_kind: ValueKind,
    pub mutability: Mutability,
    /// References held here own their targets.
    pub containment: bool,
}

impl FeatureDescriptor {
    const fn scalar(name: &'static str, value_kind: ValueKind) -> Self {
        FeatureDescriptor {
            name,
            cardinality: Cardinality::Scalar,
            value_kind,
            mutability: Mutability::Settable,
            containment: false,
        }
    }

    const fn frozen(name: &'static str, value_kind: ValueKind) -> Self {
        FeatureDescriptor {
            mutability: Mutability::Frozen,
            ..FeatureDescriptor::scalar(name, value_kind)
        }
    }

    const fn owned(name: &'static str, target: &'static [MetaKind]) -> Self {
        FeatureDescriptor {
            containment: true,
            ..FeatureDescriptor::scalar(name, ValueKind::Reference(target))
        }
    }

    const fn owned_list(name: &'static str, target: &'static [MetaKind]) -> Self {
        FeatureDescriptor {
            cardinality: Cardinality::List {
                lower: 0,
                upper: None,
            },
            ..FeatureDescriptor::owned(name, target)
        }
    }

    pub fn is_list(&self) -> bool {
        matches!(self.cardinality, Cardinality::List { .. })
    }

    pub fn is_frozen(&self) -> bool {
        self.mutability == Mutability::Frozen
    }

    /// `identifier` is derived from the element id and never stored.
    pub fn is_derived(&self) -> bool {
        self.name == IDENTIFIER
    }
}

pub const NAME: &str = "name";
pub const IDENTIFIER: &str = "identifier";

const CLASS: &[MetaKind] = &[MetaKind::Class];

const NAME_F: FeatureDescriptor = FeatureDescriptor::scalar(NAME, ValueKind::Text);
const IDENTIFIER_F: FeatureDescriptor = FeatureDescriptor::frozen(IDENTIFIER, ValueKind::Text);
const CLASSIFICATION_F: FeatureDescriptor =
    FeatureDescriptor::scalar("classification", ValueKind::Choice(Classification::TOKENS));
const LOWER_F: FeatureDescriptor = FeatureDescriptor::scalar("lower", ValueKind::Count);
const UPPER_F: FeatureDescriptor = FeatureDescriptor::scalar("upper", ValueKind::Bound);
const SOURCE_F: FeatureDescriptor =
    FeatureDescriptor::scalar("source", ValueKind::Reference(CLASS));
const TARGET_F: FeatureDescriptor =
    FeatureDescriptor::scalar("target", ValueKind::Reference(CLASS));

static ROOT_FOLDER: [FeatureDescriptor; 3] = [
    NAME_F,
    IDENTIFIER_F,
    FeatureDescriptor::owned_list("namespaces", &[MetaKind::Namespace]),
];

static NAMESPACE: [FeatureDescriptor; 5] = [
    NAME_F,
    IDENTIFIER_F,
    FeatureDescriptor::owned_list("classes", CLASS),
    FeatureDescriptor::owned_list("namespaces", &[MetaKind::Namespace]),
    FeatureDescriptor::owned_list("constraints", &[MetaKind::Constraint]),
];

static CLASS_CATALOG: [FeatureDescriptor; 7] = [
    NAME_F,
    IDENTIFIER_F,
    CLASSIFICATION_F,
    FeatureDescriptor::owned_list("attributes", &[MetaKind::Attribute]),
    FeatureDescriptor::owned("parent", &[MetaKind::Inheritance]),
    FeatureDescriptor::owned_list("compositions", &[MetaKind::Composition]),
    FeatureDescriptor::owned_list("associations", &[MetaKind::Association]),
];

static ATTRIBUTE: [FeatureDescriptor; 8] = [
    NAME_F,
    IDENTIFIER_F,
    FeatureDescriptor::scalar("datatype", ValueKind::Reference(&[MetaKind::DataType])),
    FeatureDescriptor::scalar("unit", ValueKind::Reference(&[MetaKind::Unit])),
    FeatureDescriptor::scalar("potency", ValueKind::Potency),
    FeatureDescriptor::scalar("perlevel", ValueKind::Boolean),
    LOWER_F,
    UPPER_F,
];

static DATA_TYPE: [FeatureDescriptor; 3] = [
    NAME_F,
    IDENTIFIER_F,
    FeatureDescriptor::scalar("primitive", ValueKind::Choice(Primitive::TOKENS)),
];

static UNIT: [FeatureDescriptor; 3] = [
    NAME_F,
    IDENTIFIER_F,
    FeatureDescriptor::scalar("symbol", ValueKind::Text),
];

static RELATION: [FeatureDescriptor; 6] =
    [NAME_F, IDENTIFIER_F, SOURCE_F, TARGET_F, LOWER_F, UPPER_F];

static INHERITANCE: [FeatureDescriptor; 3] = [
    IDENTIFIER_F,
    FeatureDescriptor::scalar("subclass", ValueKind::Reference(CLASS)),
    FeatureDescriptor::scalar("superclass", ValueKind::Reference(CLASS)),
];

static CONSTRAINT: [FeatureDescriptor; 3] = [
    NAME_F,
    IDENTIFIER_F,
    FeatureDescriptor::scalar("expression", ValueKind::Text),
];

static INSTANCE: [FeatureDescriptor; 5] = [
    NAME_F,
    IDENTIFIER_F,
    FeatureDescriptor::scalar("meta", ValueKind::Reference(CLASS)),
    FeatureDescriptor::frozen("level", ValueKind::Integer),
    CLASSIFICATION_F,
];

/// The fixed, ordered catalog of built-in features of `kind`.
///
/// Instances additionally carry dynamic features keyed by the id of the
/// declaring Attribute, Composition or Association; those are not listed here.
pub fn feature_catalog(kind: MetaKind) -> &'static [FeatureDescriptor] {
    match kind {
        MetaKind::RootFolder => &ROOT_FOLDER,
        MetaKind::Namespace => &NAMESPACE,
        MetaKind::Class => &CLASS_CATALOG,
        MetaKind::Attribute => &ATTRIBUTE,
        MetaKind::DataType => &DATA_TYPE,
        MetaKind::Unit => &UNIT,
        MetaKind::Composition | MetaKind::Association => &RELATION,
        MetaKind::Inheritance => &INHERITANCE,
        MetaKind::Constraint => &CONSTRAINT,
        MetaKind::Instance => &INSTANCE,
    }
}

/// Catalog position of a built-in feature.
pub fn feature_index(kind: MetaKind, name: &str) -> Option<usize> {
    feature_catalog(kind).iter().position(|d| d.name == name)
}
