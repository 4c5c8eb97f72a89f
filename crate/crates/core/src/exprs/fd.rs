use super::{ScalarExpr, VarAssignment};
use crate::error::{Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-4;
pub const DEFAULT_FD_TOLERANCE: f64 = 1e-5;

/// Central difference `(e(a + h e_v) - e(a - h e_v)) / 2h`.
///
/// This is the independent oracle for [`super::diff`]; it only ever calls `eval`.
pub fn fd_diff(e: &ScalarExpr, v: &str, a: &VarAssignment, step: f64) -> Result<f64> {
    let x = a.get(v).ok_or_else(|| Error::UnboundVariable(v.to_string()))?;
    let plus = e.eval(&a.clone().with(v, x + step))?;
    let minus = e.eval(&a.clone().with(v, x - step))?;
    Ok((plus - minus) / (2.0 * step))
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn square_at_three() {
        let v = fd_diff(&parse("x^2").unwrap(), "x", &VarAssignment::new().with("x", 3.0), 1e-4).unwrap();
        assert!((v - 6.0).abs() < 1e-7);
    }

    #[test]
    fn sine_extremum() {
        let a = VarAssignment::new().with("x", std::f64::consts::FRAC_PI_2);
        let v = fd_diff(&parse("sin(x)").unwrap(), "x", &a, 1e-4).unwrap();
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn log_slope() {
        let v = fd_diff(&parse("log(r)").unwrap(), "r", &VarAssignment::new().with("r", 2.0), 1e-4).unwrap();
        assert!((v - 0.5).abs() < 1e-8);
    }

    #[test]
    fn offset_points_must_stay_in_domain() {
        let a = VarAssignment::new().with("r", 5e-5);
        assert!(matches!(fd_diff(&parse("log(r)").unwrap(), "r", &a, 1e-4), Err(Error::Domain(_))));
    }
}
