use std::fmt;

use crate::error::{crud_err, CrudError, CrudResult};
use crate::kernel::{kind_of_token, MetaKind};
use crate::store::{parse_index, ElementId};
use crate::value::{looks_like_id, parse_literal, tokenize, Literal, Value};

/// What `create` instantiates: an M3 kind (yielding an M2 element) or an M2
/// class (yielding an M1 instance).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeTarget {
    Kind(MetaKind),
    Class(ElementId),
}

impl fmt::Display for TypeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTarget::Kind(k) => k.fmt(f),
            TypeTarget::Class(id) => id.fmt(f),
        }
    }
}

/// A feature as named in a request: a catalog token or the id of the
/// declaring Attribute/Composition/Association.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureToken {
    Named(String),
    Declared(ElementId),
}

impl fmt::Display for FeatureToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureToken::Named(n) => f.write_str(n),
            FeatureToken::Declared(id) => id.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CrudRequest {
    Create {
        target: TypeTarget,
    },
    Read {
        id: ElementId,
        feature: FeatureToken,
    },
    Update {
        id: ElementId,
        feature: FeatureToken,
        position: u32,
        value: Literal,
    },
    Delete {
        id: ElementId,
    },
}

impl fmt::Display for CrudRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrudRequest::Create { target } => write!(f, "create {target}"),
            CrudRequest::Read { id, feature } => write!(f, "read {id} {feature}"),
            CrudRequest::Update {
                id,
                feature,
                position,
                value,
            } => write!(f, "update {id} {feature} {position} {value}"),
            CrudRequest::Delete { id } => write!(f, "delete {id}"),
        }
    }
}

/// Parses one request line.
///
/// ```text
/// create <Kind | Class:n>
/// read   <Kind:n> <feature>
/// update <Kind:n> <feature> <position> <literal>
/// delete <Kind:n>
/// ```
pub fn parse_request(line: &str) -> CrudResult<CrudRequest> {
    let tokens = tokenize(line)?;
    let Some((&verb, args)) = tokens.split_first() else {
        return Err(crud_err!(ParseError, "empty request"));
    };
    let arity = match verb {
        "create" | "delete" => 1,
        "read" => 2,
        "update" => 4,
        _ => return Err(crud_err!(ParseError, "unknown verb {verb}")),
    };
    if args.len() != arity {
        return Err(crud_err!(
            ParseError,
            "{verb} takes {arity} argument(s), got {}",
            args.len()
        ));
    }
    Ok(match verb {
        "create" => CrudRequest::Create {
            target: parse_type_target(args[0])?,
        },
        "delete" => CrudRequest::Delete {
            id: ElementId::parse(args[0])?,
        },
        "read" => CrudRequest::Read {
            id: ElementId::parse(args[0])?,
            feature: parse_feature(args[1])?,
        },
        _ => CrudRequest::Update {
            id: ElementId::parse(args[0])?,
            feature: parse_feature(args[1])?,
            position: parse_index(args[2])
                .ok_or_else(|| crud_err!(ParseError, "invalid position {}", args[2]))?,
            value: parse_literal(args[3])?,
        },
    })
}

fn parse_type_target(token: &str) -> CrudResult<TypeTarget> {
    if looks_like_id(token) {
        ElementId::parse(token).map(TypeTarget::Class)
    } else {
        kind_of_token(token).map(TypeTarget::Kind)
    }
}

fn parse_feature(token: &str) -> CrudResult<FeatureToken> {
    if looks_like_id(token) {
        return ElementId::parse(token).map(FeatureToken::Declared);
    }
    if token
        .bytes()
        .all(|b| b.is_ascii_alphanumeric() || b == b'_')
    {
        Ok(FeatureToken::Named(token.to_string()))
    } else {
        Err(crud_err!(ParseError, "invalid feature {token}"))
    }
}

/// Reply to one request. `Display` gives the wire line.
#[derive(Clone, Debug, PartialEq)]
pub enum CrudResponse {
    Created(ElementId),
    Values(Vec<Value>),
    Done,
    Failed(CrudError),
}

impl CrudResponse {
    pub fn is_ok(&self) -> bool {
        !matches!(self, CrudResponse::Failed(_))
    }
}

impl fmt::Display for CrudResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrudResponse::Created(id) => write!(f, "ok {id}"),
            CrudResponse::Values(values) => {
                f.write_str("ok")?;
                for v in values {
                    write!(f, " {v}")?;
                }
                Ok(())
            }
            CrudResponse::Done => f.write_str("ok"),
            CrudResponse::Failed(e) => write!(f, "error {} {}", e.code, e.message),
        }
    }
}
