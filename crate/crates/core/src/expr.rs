//! Scalar expressions in a single named variable.

use exmex::prelude::*;
use exmex::FlatEx;

use crate::error::{Error, Result};

/// A parsed arithmetic expression in one variable (constants `PI`, `E` available).
#[derive(Clone)]
pub struct Expr {
    text: String,
    var: String,
    flat: FlatEx<f64>,
    uses_var: bool,
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Expr")
            .field("text", &self.text)
            .field("var", &self.var)
            .finish()
    }
}

impl Expr {
    /// Parses `text`; the only admissible free variable is `var`.
    pub fn parse(text: &str, var: &str) -> Result<Self> {
        let flat = FlatEx::<f64>::parse(text).map_err(|e| Error::Expression {
            expr: text.to_string(),
            message: e.to_string(),
        })?;
        let names = flat.var_names();
        if let Some(bad) = names.iter().find(|n| n.as_str() != var) {
            return Err(Error::Expression {
                expr: text.to_string(),
                message: format!("unknown variable `{bad}` (expected `{var}`)"),
            });
        }
        let uses_var = !names.is_empty();
        Ok(Self {
            text: text.to_string(),
            var: var.to_string(),
            flat,
            uses_var,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    /// Evaluates at `v`; evaluation failures yield NaN.
    pub fn eval(&self, v: f64) -> f64 {
        let r = if self.uses_var {
            self.flat.eval(&[v])
        } else {
            self.flat.eval(&[])
        };
        r.unwrap_or(f64::NAN)
    }

    /// Symbolic derivative with respect to the variable.
    pub fn derivative(&self) -> Result<Self> {
        if !self.uses_var {
            return Self::parse("0", &self.var);
        }
        let d = self
            .flat
            .clone()
            .partial(0)
            .map_err(|e| Error::Expression {
                expr: self.text.clone(),
                message: format!("cannot differentiate: {e}"),
            })?;
        let uses_var = !d.var_names().is_empty();
        Ok(Self {
            text: d.unparse().to_string(),
            var: self.var.clone(),
            flat: d,
            uses_var,
        })
    }
}
