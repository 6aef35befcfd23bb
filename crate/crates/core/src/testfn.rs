//! Analytic test functions `f` for linear spectral statistics.
//!
//! Text form used by the CLI and in CSV output: `poly:c0,c1,...` (coefficients
//! in increasing degree) and `exp`. Library callers may also build
//! complex-coefficient polynomials and a few named entire functions.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UserFunction {
    Sin,
    Cos,
    Sinh,
    Cosh,
}

impl UserFunction {
    fn name(self) -> &'static str {
        match self {
            UserFunction::Sin => "sin",
            UserFunction::Cos => "cos",
            UserFunction::Sinh => "sinh",
            UserFunction::Cosh => "cosh",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// Coefficients `c0, c1, ...` of `c0 + c1 x + c2 x² + ...`.
    Polynomial(Vec<Complex64>),
    Exp,
    User(UserFunction),
}

impl TestFunction {
    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::TestFunction("polynomial needs at least one coefficient".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::TestFunction("non-finite polynomial coefficient".into()));
        }
        Ok(Self::Polynomial(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect()))
    }

    pub fn complex_polynomial(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::TestFunction("polynomial coefficients must be finite".into()));
        }
        Ok(Self::Polynomial(coeffs))
    }

    /// `x^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![Complex64::new(0.0, 0.0); k + 1];
        c[k] = Complex64::new(1.0, 0.0);
        Self::Polynomial(c)
    }

    pub fn user(name: &str) -> Result<Self> {
        let f = match name {
            "sin" => UserFunction::Sin,
            "cos" => UserFunction::Cos,
            "sinh" => UserFunction::Sinh,
            "cosh" => UserFunction::Cosh,
            other => return Err(Error::TestFunction(format!("unknown function name `{other}`"))),
        };
        Ok(Self::User(f))
    }

    pub fn has_real_coefficients(&self) -> bool {
        match self {
            TestFunction::Polynomial(c) => c.iter().all(|v| v.im == 0.0),
            _ => true,
        }
    }

    #[inline]
    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            TestFunction::Polynomial(c) => c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a),
            TestFunction::Exp => z.exp(),
            TestFunction::User(UserFunction::Sin) => z.sin(),
            TestFunction::User(UserFunction::Cos) => z.cos(),
            TestFunction::User(UserFunction::Sinh) => z.sinh(),
            TestFunction::User(UserFunction::Cosh) => z.cosh(),
        }
    }

    /// Value at a real point; the real part for complex-coefficient
    /// polynomials.
    #[inline]
    pub fn eval_real(&self, x: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * x + a.re),
            TestFunction::Exp => x.exp(),
            TestFunction::User(UserFunction::Sin) => x.sin(),
            TestFunction::User(UserFunction::Cos) => x.cos(),
            TestFunction::User(UserFunction::Sinh) => x.sinh(),
            TestFunction::User(UserFunction::Cosh) => x.cosh(),
        }
    }
}

/// Evaluates `f` at a complex point.
pub fn eval_testfn(f: &TestFunction, z: Complex64) -> Result<Complex64> {
    let v = f.eval(z);
    if !v.re.is_finite() || !v.im.is_finite() {
        return Err(Error::TestFunction(format!("{f} is not finite at {z}")));
    }
    Ok(v)
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Polynomial(c) => {
                write!(f, "poly:")?;
                for (i, v) in c.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    if v.im == 0.0 {
                        write!(f, "{}", v.re)?;
                    } else {
                        write!(f, "{}{:+}i", v.re, v.im)?;
                    }
                }
                Ok(())
            }
            TestFunction::Exp => write!(f, "exp"),
            TestFunction::User(u) => write!(f, "fn:{}", u.name()),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "exp" {
            return Ok(TestFunction::Exp);
        }
        if let Some(name) = s.strip_prefix("fn:") {
            return TestFunction::user(name.trim());
        }
        let Some(body) = s.strip_prefix("poly:") else {
            return Err(Error::TestFunction(format!(
                "`{s}`: expected `poly:c0,c1,...` or `exp`"
            )));
        };
        let coeffs = body
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::TestFunction(format!("coefficient `{t}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        TestFunction::polynomial(&coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_examples() {
        let sq: TestFunction = "poly:0,0,1".parse().unwrap();
        let v = eval_testfn(&sq, Complex64::new(1.0, 1.0)).unwrap();
        assert_eq!(v, Complex64::new(0.0, 2.0));
        assert_eq!(eval_testfn(&TestFunction::Exp, Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(1.0, 0.0));
        let three = TestFunction::polynomial(&[3.0]).unwrap();
        assert_eq!(three.eval(Complex64::new(-7.0, 2.5)), Complex64::new(3.0, 0.0));
        assert_eq!(sq.eval_real(-3.0), 9.0);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["poly:0,0,1", "poly:1.5,-2,0,0.25", "exp", "fn:cosh"] {
            let f: TestFunction = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert_eq!(TestFunction::monomial(4).to_string(), "poly:0,0,0,0,1");
    }

    #[test]
    fn parse_errors() {
        assert!("x^2".parse::<TestFunction>().is_err());
        assert!("poly:".parse::<TestFunction>().is_err());
        assert!("poly:1,a".parse::<TestFunction>().is_err());
        assert!("fn:gamma".parse::<TestFunction>().is_err());
        assert!(TestFunction::user("tanh").is_err());
    }

    #[test]
    fn complex_coefficients_flagged() {
        let f = TestFunction::complex_polynomial(vec![Complex64::new(0.0, 1.0)]).unwrap();
        assert!(!f.has_real_coefficients());
        assert!(TestFunction::Exp.has_real_coefficients());
    }
}
