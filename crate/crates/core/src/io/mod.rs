//! File formats: `.mech` models, log CSV and result output.

pub mod emit;
pub mod log;
pub mod mech;

pub use emit::{emit_csv, emit_json, parse_csv, parse_json, ResultTable};
pub use log::{parse_log, serialize_log, LogError, LogSample, LogSeries};
pub use mech::{load_model, parse_mechanism, serialize_mechanism, MechanismDocument, ParseError, ParseErrorKind};
