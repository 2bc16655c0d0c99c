//! Artist objectives: a small expression language over belief traces,
//! the builtin story objectives, and their evaluation.

mod ast;
mod eval;
mod parser;

pub use ast::{Cmp, Expr, Item, Objective, Pred, TimeCmp, TimeCond, TimeExpr};
pub use eval::{
    cheese_attempt, env_score, evaluate, rational_score, CompiledObjective, EvalConfig, ItemScore, ScoreBreakdown,
    ScoreState, Scorer, ZeroMassFlag,
};
pub use parser::parse_objective;

use thiserror::Error;

use crate::inference::InferenceError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("type error at line {line}, column {column}: {message}")]
    Type {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown builtin objective '{0}'")]
    UnknownBuiltin(String),
    #[error("trace has {trace} entries but the script has {script} transitions")]
    TraceMismatch { script: usize, trace: usize },
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Builtin objective names with their source text.
pub const BUILTINS: [(&str, &str); 9] = [
    ("help", include_str!("../../objectives/help.obj")),
    ("hinder", include_str!("../../objectives/hinder.obj")),
    ("indifferent", include_str!("../../objectives/indifferent.obj")),
    (
        "twist_help_to_hinder",
        include_str!("../../objectives/twist_help_to_hinder.obj"),
    ),
    (
        "twist_hinder_to_help",
        include_str!("../../objectives/twist_hinder_to_help.obj"),
    ),
    ("irony", include_str!("../../objectives/irony.obj")),
    ("flashback_help", include_str!("../../objectives/flashback_help.obj")),
    (
        "flashback_hinder",
        include_str!("../../objectives/flashback_hinder.obj"),
    ),
    ("arc", include_str!("../../objectives/arc.obj")),
];

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

pub fn builtin(name: &str) -> Result<Objective, ObjectiveError> {
    let src = builtin_source(name).ok_or_else(|| ObjectiveError::UnknownBuiltin(name.to_string()))?;
    parse_objective(src)
}
