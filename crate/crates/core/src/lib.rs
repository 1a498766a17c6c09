//! A deterministic multi-level meta-modeling kernel.
//!
//! The M3 meta-language is fixed ([`kernel`]). M2 meta-models and M1 models
//! live in a fixed-capacity [`store::Store`] and are edited only through
//! atomic CRUD requests ([`metaconstructor`]), or through integrity-checked
//! reflective changes ([`reflection`]). [`levels`] computes what an instance
//! carries and validates whole models; [`persistence`] reads and writes
//! byte-canonical snapshots.
//!
//! ```
//! use metacore::{execute_line, Capacities, Store};
//!
//! let mut store = Store::new(Capacities::default()).unwrap();
//! assert_eq!(execute_line(&mut store, "create Class").to_string(), "ok Class:1");
//! execute_line(&mut store, "update Class:1 name 1 \"Engine\"");
//! assert_eq!(execute_line(&mut store, "read Class:1 name").to_string(), "ok \"Engine\"");
//! ```

pub mod error;
mod graph;
pub mod kernel;
pub mod levels;
pub mod metaconstructor;
pub mod persistence;
pub mod reflection;
pub mod store;
pub mod value;

pub use error::{CrudError, CrudResult, ErrorCode};
pub use kernel::{feature_catalog, kind_of_token, potency_at, Level, MetaKind, Potency, Verdict};
pub use levels::{effective_features, retype, validate_model, Diagnostic, Rule, Severity};
pub use metaconstructor::{execute, execute_line, parse_request, CrudRequest, CrudResponse};
pub use persistence::{deserialize, serialize, SnapshotError};
pub use reflection::{apply_change, impact_of, ImpactReport, MetaChange, Mode};
pub use store::{Capacities, ElementId, Store};
pub use value::{Literal, Value};
