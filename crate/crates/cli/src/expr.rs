//! Arithmetic expressions for custom fields, boundary data and surfaces.
//!
//! Grammar: `+ - * / ^`, parentheses, `sin cos tan sqrt abs exp ln`, the
//! constants `pi` and `e`, and the variables each use site declares.

use std::sync::Arc;

use meval::{ContextProvider, Expr, FuncEvalError};

#[derive(Clone, Debug)]
pub struct Formula {
    expr: Arc<Expr>,
    vars: Arc<Vec<String>>,
}

struct Scope<'a> {
    vars: &'a [String],
    values: &'a [f64],
}

impl ContextProvider for Scope<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        if let Some(k) = self.vars.iter().position(|v| v == name) {
            return self.values.get(k).copied();
        }
        match name {
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
        let f: fn(f64) -> f64 = match name {
            "sin" => f64::sin,
            "cos" => f64::cos,
            "tan" => f64::tan,
            "sqrt" => f64::sqrt,
            "abs" => f64::abs,
            "exp" => f64::exp,
            "ln" => f64::ln,
            _ => return Err(FuncEvalError::UnknownFunction),
        };
        match args {
            [x] => Ok(f(*x)),
            _ => Err(FuncEvalError::NumberArgs(1)),
        }
    }
}

impl Formula {
    /// Parses `source` and checks that it only uses `vars` and the builtins.
    pub fn parse(source: &str, vars: &[&str]) -> Result<Self, String> {
        let expr: Expr = source
            .parse()
            .map_err(|e| format!("cannot parse `{source}`: {e}"))?;
        let f = Formula {
            expr: Arc::new(expr),
            vars: Arc::new(vars.iter().map(|s| s.to_string()).collect()),
        };
        let probe = vec![0.5; vars.len()];
        f.expr
            .eval_with_context(Scope {
                vars: &f.vars,
                values: &probe,
            })
            .map_err(|e| format!("in `{source}`: {e} (variables: {})", vars.join(", ")))?;
        Ok(f)
    }

    /// Value at `values`, ordered as the declared variables. Evaluation
    /// failures give NaN, which the library reports with the point.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.expr
            .eval_with_context(Scope {
                vars: &self.vars,
                values,
            })
            .unwrap_or(f64::NAN)
    }
}

/// A constant expression such as `pi/3`.
pub fn constant(source: &str) -> Result<f64, String> {
    Formula::parse(source, &[]).map(|f| f.eval(&[]))
}

/// Variable names for points of `R^m`: `x, y` in the plane, else `x1..xm`.
pub fn point_vars(m: usize) -> Vec<String> {
    if m == 2 {
        vec!["x".into(), "y".into()]
    } else {
        (1..=m).map(|i| format!("x{i}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        let f = Formula::parse("2*x^2 - sin(pi*y)/2 + abs(-e)", &["x", "y"]).unwrap();
        let want = 2.0 * 9.0 - (std::f64::consts::PI * 0.5).sin() / 2.0 + std::f64::consts::E;
        assert!((f.eval(&[3.0, 0.5]) - want).abs() < 1e-14);
        assert!((constant("pi/3").unwrap() - std::f64::consts::FRAC_PI_3).abs() < 1e-15);
        assert!(Formula::parse("x + z", &["x", "y"]).is_err());
        assert!(Formula::parse("foo(x)", &["x"]).is_err());
        assert!(Formula::parse("x +", &["x"]).is_err());
        assert!(Formula::parse("sqrt(x)", &["x"]).unwrap().eval(&[-1.0]).is_nan());
    }

    #[test]
    fn variable_names() {
        assert_eq!(point_vars(2), ["x", "y"]);
        assert_eq!(point_vars(4)[3], "x4");
    }
}
