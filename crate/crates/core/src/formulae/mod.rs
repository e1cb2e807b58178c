//! Config-driven biometry formulae producing baseline GA estimates.

mod expr;
mod library;

pub use expr::{parse_expression, parse_expression_with, BinOp, Expr, Func};
pub use library::{
    baseline_estimates, eval_formula, BaselineEstimates, BaselineSource, BaselineValue, FormulaLibrary,
    FormulaResult, FormulaSpec, OutputUnit,
};
