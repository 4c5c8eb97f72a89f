use dwarp::exprs::{diff, fd_diff, parse, Func, Rational, ScalarExpr, VarAssignment, DEFAULT_FD_STEP, DEFAULT_FD_TOLERANCE};
use proptest::prelude::*;

fn positive(e: &ScalarExpr) -> ScalarExpr {
    ScalarExpr::add(&ScalarExpr::constant(1.0), &ScalarExpr::pow(e, Rational::integer(2)))
}

fn expr() -> impl Strategy<Value = ScalarExpr> {
    let leaf = prop_oneof![
        Just(ScalarExpr::var("x")),
        Just(ScalarExpr::var("y")),
        (-3.0f64..3.0).prop_map(|c| ScalarExpr::constant((c * 8.0).round() / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ScalarExpr::add(&a, &b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ScalarExpr::sub(&a, &b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ScalarExpr::mul(&a, &b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ScalarExpr::div(&a, &positive(&b))),
            inner.clone().prop_map(|a| ScalarExpr::neg(&a)),
            (inner.clone(), 1i64..4).prop_map(|(a, n)| ScalarExpr::pow(&a, Rational::integer(n))),
            inner.clone().prop_map(|a| ScalarExpr::pow(&positive(&a), Rational::new(-3, 2))),
            inner.clone().prop_map(|a| ScalarExpr::call(Func::Sin, &a)),
            inner.clone().prop_map(|a| ScalarExpr::call(Func::Cos, &a)),
            inner.clone().prop_map(|a| ScalarExpr::call(Func::Exp, &ScalarExpr::call(Func::Sin, &a))),
            inner.clone().prop_map(|a| ScalarExpr::call(Func::Log, &positive(&a))),
            inner.clone().prop_map(|a| ScalarExpr::call(Func::Sqrt, &positive(&a))),
            inner.clone().prop_map(|a| ScalarExpr::call(Func::Sinh, &ScalarExpr::call(Func::Cos, &a))),
            inner.prop_map(|a| ScalarExpr::call(Func::Cosh, &ScalarExpr::call(Func::Sin, &a))),
        ]
    })
}

fn at(x: f64, y: f64) -> VarAssignment {
    VarAssignment::new().with("x", x).with("y", y)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_parse_round_trip(e in expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let text = e.to_string();
        let back = parse(&text).unwrap();
        prop_assert_eq!(back.to_string(), text.clone());
        if let Ok(v) = e.eval(&at(x, y)) {
            let w = back.eval(&at(x, y)).unwrap();
            prop_assert!(rel_close(v, w, 1e-12), "{} : {} vs {}", text, v, w);
        }
    }

    #[test]
    fn derivative_agrees_with_central_difference(e in expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let a = at(x, y);
        prop_assume!(e.eval(&a).map(|v| v.abs() < 1e6).unwrap_or(false));
        for v in ["x", "y"] {
            let exact = diff(&e, v).eval(&a).unwrap();
            if let Ok(fd) = fd_diff(&e, v, &a, DEFAULT_FD_STEP) {
                prop_assert!(rel_close(exact, fd, DEFAULT_FD_TOLERANCE), "d/d{} {} : {} vs {}", v, e, exact, fd);
            }
        }
    }

    #[test]
    fn derivative_is_linear(e1 in expr(), e2 in expr(), a in -2.0f64..2.0, b in -2.0f64..2.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let comb = ScalarExpr::add(&ScalarExpr::mul(&ScalarExpr::constant(a), &e1), &ScalarExpr::mul(&ScalarExpr::constant(b), &e2));
        let p = at(x, y);
        if let (Ok(d1), Ok(d2), Ok(d)) = (diff(&e1, "x").eval(&p), diff(&e2, "x").eval(&p), diff(&comb, "x").eval(&p)) {
            prop_assert!(rel_close(d, a * d1 + b * d2, 1e-10));
        }
    }

    #[test]
    fn mixed_partials_commute(e in expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let p = at(x, y);
        if let (Ok(u), Ok(v)) = (diff(&diff(&e, "x"), "y").eval(&p), diff(&diff(&e, "y"), "x").eval(&p)) {
            prop_assert!(rel_close(u, v, 1e-10), "{} : {} vs {}", e, u, v);
        }
    }

    #[test]
    fn substitution_commutes_with_evaluation(e in expr(), s in expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let map = [("x".to_string(), s.clone())].into_iter().collect();
        let sub = e.substitute(&map);
        if let Ok(sv) = s.eval(&at(x, y)) {
            if let (Ok(l), Ok(r)) = (sub.eval(&at(x, y)), e.eval(&at(sv, y))) {
                prop_assert!(rel_close(l, r, 1e-10));
            }
        }
    }
}

#[test]
fn frozen_derivative_values() {
    let e = parse("log(r)*s^2").unwrap();
    let a = VarAssignment::new().with("r", 2.0).with("s", 3.0);
    assert!((diff(&e, "s").eval(&a).unwrap() - 4.158883083359672).abs() < 1e-14);
    assert!((diff(&e, "r").eval(&a).unwrap() - 4.5).abs() < 1e-15);
}
