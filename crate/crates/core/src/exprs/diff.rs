use super::{Func, Node, Rational, ScalarExpr};

/// Exact partial derivative of `e` with respect to the variable `v`.
pub fn diff(e: &ScalarExpr, v: &str) -> ScalarExpr {
    use ScalarExpr as E;
    match e.node() {
        Node::Const(_) => E::constant(0.0),
        Node::Var(name) => E::constant(if &**name == v { 1.0 } else { 0.0 }),
        Node::Add(l, r) => E::add(&diff(l, v), &diff(r, v)),
        Node::Sub(l, r) => E::sub(&diff(l, v), &diff(r, v)),
        Node::Mul(l, r) => E::add(&E::mul(&diff(l, v), r), &E::mul(l, &diff(r, v))),
        Node::Div(l, r) => {
            // (l'r - lr') / r^2
            let num = E::sub(&E::mul(&diff(l, v), r), &E::mul(l, &diff(r, v)));
            E::div(&num, &E::pow(r, Rational::integer(2)))
        }
        Node::Neg(x) => E::neg(&diff(x, v)),
        Node::Pow(base, q) => {
            let db = diff(base, v);
            if db.is_zero() {
                return E::constant(0.0);
            }
            let coeff = E::mul(&E::constant(q.to_f64()), &E::pow(base, q.minus_one()));
            E::mul(&coeff, &db)
        }
        Node::Call(f, x) => {
            let dx = diff(x, v);
            if dx.is_zero() {
                return E::constant(0.0);
            }
            let outer = match f {
                Func::Exp => e.clone(),
                Func::Log => E::div(&E::constant(1.0), x),
                Func::Sin => E::call(Func::Cos, x),
                Func::Cos => E::neg(&E::call(Func::Sin, x)),
                Func::Sinh => E::call(Func::Cosh, x),
                Func::Cosh => E::call(Func::Sinh, x),
                Func::Sqrt => E::div(&E::constant(0.5), e),
            };
            E::mul(&outer, &dx)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{fd_diff, parse, VarAssignment};
    use super::*;

    fn eval_at(e: &ScalarExpr, pairs: &[(&str, f64)]) -> f64 {
        e.eval(&pairs.iter().map(|(k, v)| (*k, *v)).collect()).unwrap()
    }

    #[test]
    fn polynomial_rule() {
        let d = diff(&parse("x^2").unwrap(), "x");
        assert_eq!(eval_at(&d, &[("x", 3.0)]), 6.0);
    }

    #[test]
    fn sine_at_zero() {
        let d = diff(&parse("sin(x)").unwrap(), "x");
        assert_eq!(eval_at(&d, &[("x", 0.0)]), 1.0);
    }

    #[test]
    fn absent_variable_gives_zero() {
        assert!(diff(&parse("exp(y)*y").unwrap(), "x").is_zero());
    }

    #[test]
    fn log_times_square_against_finite_difference() {
        // Oracle first: central difference with h = 1e-4 at (r, s) = (2, 3).
        let e = parse("log(r)*s^2").unwrap();
        let a = VarAssignment::new().with("r", 2.0).with("s", 3.0);
        let oracle = fd_diff(&e, "s", &a, 1e-4).unwrap();
        assert!((oracle - 4.158883083359672).abs() < 1e-7);
        let exact = diff(&e, "s").eval(&a).unwrap();
        assert!((exact - 4.158883083359672).abs() < 1e-12);
        assert!((exact - 6.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn every_function_matches_finite_difference() {
        for text in ["exp(2*x)", "log(x+3)", "sin(x)*cos(x)", "sinh(x)/cosh(x)", "sqrt(1+x^2)", "x^(1/3)", "1/(1+x^2)"] {
            let e = parse(text).unwrap();
            let d = diff(&e, "x");
            for x in [0.3, 0.9, 1.7] {
                let a = VarAssignment::new().with("x", x);
                let fd = fd_diff(&e, "x", &a, 1e-4).unwrap();
                let ex = d.eval(&a).unwrap();
                assert!((fd - ex).abs() <= 1e-7 * (1.0 + ex.abs()), "{text} at {x}: {fd} vs {ex}");
            }
        }
    }
}
