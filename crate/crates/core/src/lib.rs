//! Sequence tagging for aspect and opinion terms with relational graph
//! attention over dependency parses.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod corpus;
pub mod crf;
pub mod depgraph;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod numerics;
pub mod training;

pub use config::{EncoderSource, TrainConfig, Variant};
pub use corpus::{Sentence, Span, SpanMode, Tag, Task, Token};
pub use depgraph::{DepGraph, ReorientMode};
pub use error::{Error, Result, Violation};
pub use eval::{evaluate, EvalReport};
pub use model::{Model, Sidecar};
pub use training::{grad_check, load_checkpoint, save_checkpoint, train, GradCheckReport, TrainOutput};
