//! Batch front-end: an experiment config goes in, CSV, JSON and SVG files come out.
//!
//! ```no_run
//! let cfg = nlab::ExperimentConfig::from_json(r#"{"command": "lemma"}"#).unwrap();
//! let outcome = nlab::run(&cfg).unwrap();
//! assert!(outcome.passed());
//! ```

pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{render_nodal_svg, run, Check, Outcome};
