//! Symbolic scalar expressions on a chart: parse, evaluate, differentiate.
//!
//! Everything downstream is built from repeated exact differentiation of
//! these fields, so the guarantees here are the foundation of the residual
//! budgets elsewhere: evaluation is pure and deterministic, differentiation
//! is exact (not numeric), and light simplification keeps derivative trees
//! from blowing up under second and third derivatives.

mod ast;
mod parse;

pub use ast::{Expr, Func};
pub use parse::parse_expr;

use std::fmt;
use std::sync::Arc;

use crate::chart::Chart;
use crate::error::{Error, Result};

/// A scalar expression bound to its chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    chart: Arc<Chart>,
    expr: Expr,
}

impl ScalarField {
    /// Parses `source` in the chart's coordinates.
    pub fn parse(source: &str, chart: &Arc<Chart>) -> Result<ScalarField> {
        let expr = parse_expr(source, chart)?;
        Ok(ScalarField {
            chart: Arc::clone(chart),
            expr,
        })
    }

    /// Wraps an already-built expression, checking that every coordinate
    /// index is valid for the chart.
    pub fn from_expr(expr: Expr, chart: &Arc<Chart>) -> Result<ScalarField> {
        if let Some(max) = expr.max_coord() {
            if max >= chart.dim() {
                return Err(Error::Chart(format!(
                    "expression uses coordinate index {} on a chart of dimension {}",
                    max + 1,
                    chart.dim()
                )));
            }
        }
        Ok(ScalarField {
            chart: Arc::clone(chart),
            expr,
        })
    }

    pub fn constant(value: f64, chart: &Arc<Chart>) -> ScalarField {
        ScalarField {
            chart: Arc::clone(chart),
            expr: Expr::Const(value),
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Evaluates at a point of the chart's dimension.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.chart.dim() {
            return Err(Error::Chart(format!(
                "point of dimension {} on a chart of dimension {}",
                x.len(),
                self.chart.dim()
            )));
        }
        self.expr.eval(x)
    }

    /// Exact partial derivative with respect to coordinate `k` (zero-based).
    pub fn differentiate(&self, k: usize) -> Result<ScalarField> {
        if k >= self.chart.dim() {
            return Err(Error::Chart(format!(
                "derivative index {} out of range for dimension {}",
                k + 1,
                self.chart.dim()
            )));
        }
        Ok(ScalarField {
            chart: Arc::clone(&self.chart),
            expr: self.expr.differentiate(k),
        })
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

// Expression combinators for building fields programmatically. These apply
// the same light simplification as differentiation.
impl ScalarField {
    fn combine(
        &self,
        other: &ScalarField,
        op: impl Fn(Expr, Expr) -> Expr,
    ) -> Result<ScalarField> {
        if self.chart != other.chart {
            return Err(Error::Chart(
                "cannot combine fields from different charts".into(),
            ));
        }
        Ok(ScalarField {
            chart: Arc::clone(&self.chart),
            expr: op(self.expr.clone(), other.expr.clone()),
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.combine(other, ast::add)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.combine(other, ast::sub)
    }

    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        self.combine(other, ast::mul)
    }

    pub fn div(&self, other: &ScalarField) -> Result<ScalarField> {
        self.combine(other, ast::div)
    }

    pub fn neg(&self) -> ScalarField {
        ScalarField {
            chart: Arc::clone(&self.chart),
            expr: ast::neg(self.expr.clone()),
        }
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        ScalarField {
            chart: Arc::clone(&self.chart),
            expr: ast::mul(Expr::Const(c), self.expr.clone()),
        }
    }

    pub fn apply(&self, f: Func) -> ScalarField {
        ScalarField {
            chart: Arc::clone(&self.chart),
            expr: ast::call(f, self.expr.clone()),
        }
    }

    pub fn powi(&self, k: i32) -> ScalarField {
        ScalarField {
            chart: Arc::clone(&self.chart),
            expr: ast::pow(self.expr.clone(), k),
        }
    }
}
