use std::sync::Arc;

use dwarp::dwp::{build_dwp, DoublyWarpedProduct, Factor, LiftedSum};
use dwarp::exprs::parse;
use dwarp::riemann::{ChartedManifold, TangentVector, VectorFieldExpr};
use nalgebra::DVector;
use proptest::prelude::*;

fn generic() -> DoublyWarpedProduct {
    let m1 = ChartedManifold::new(
        "M1",
        &["a", "b"],
        &[(0, 0, parse("1 + a^2").unwrap()), (0, 1, parse("0.2*b").unwrap()), (1, 1, parse("2 + sin(a)").unwrap())],
        &[(0.1, 1.5), (0.1, 1.5)],
    )
    .unwrap();
    let m2 = ChartedManifold::diagonal("M2", &["u", "v"], &["exp(v)", "1 + u^2/4"], &[(0.1, 1.5), (0.1, 1.5)]).unwrap();
    build_dwp(Arc::new(m1), Arc::new(m2), parse("2 + a*b").unwrap(), parse("cosh(u - v/2)").unwrap()).unwrap()
}

fn singly() -> DoublyWarpedProduct {
    let m1 = ChartedManifold::diagonal("B", &["a", "b"], &["1 + b^2", "1"], &[(0.1, 1.5), (0.1, 1.5)]).unwrap();
    let m2 = ChartedManifold::diagonal("F", &["u"], &["exp(u)"], &[(0.1, 1.5)]).unwrap();
    build_dwp(Arc::new(m1), Arc::new(m2), parse("1 + a^2 + b").unwrap(), parse("1").unwrap()).unwrap()
}

fn pt() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..1.4, 4)
}

fn vec4() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4)
}

fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * (1.0 + b.amax())
}

fn sum_field(v: &[f64]) -> LiftedSum {
    LiftedSum::new(VectorFieldExpr::constant(&v[..2]), VectorFieldExpr::constant(&v[2..]))
}

#[test]
fn connection_with_field_dependence_matches_christoffel_route() {
    let w = generic();
    let x = LiftedSum::new(VectorFieldExpr::parse(&["b", "1"]).unwrap(), VectorFieldExpr::parse(&["u*v", "-1"]).unwrap());
    let y = LiftedSum::new(VectorFieldExpr::parse(&["a^2", "sin(b)"]).unwrap(), VectorFieldExpr::parse(&["1", "v"]).unwrap());
    for p in [[0.3, 0.7, 1.1, 0.4], [1.2, 0.2, 0.5, 1.3]] {
        let closed = w.connection_closed_form(&x, &y, &p).unwrap().to_dvector();
        let oracle = w.product().covariant_derivative(&x.product_field(), &y.product_field(), &p).unwrap().to_dvector();
        assert!(close(&closed, &oracle, 1e-10), "{closed} vs {oracle}");
    }
}

#[test]
fn nabla_u_matches_product_chart() {
    let w = generic();
    let p = [0.6, 0.9, 0.4, 1.1];
    let wp = w.at(&p).unwrap();
    // U_1 = -grad(ln f1) as a product-chart field expression
    for (f, psi) in [(Factor::First, "-log(2 + a*b)"), (Factor::Second, "-log(cosh(u - v/2))")] {
        let psi = parse(psi).unwrap();
        let hess = w.product().hessian_matrix(&psi, &p).unwrap();
        let ginv = w.product().connection_at(&p).unwrap().inverse;
        for k in 0..4 {
            let mut e = DVector::zeros(4);
            e[k] = 1.0;
            let oracle = &ginv * (&hess * &e);
            let got = wp.nabla_u(&e, f);
            assert!(close(&got, &oracle, 1e-10), "{f:?} {k}: {got} vs {oracle}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curvature_closed_form_matches_product_chart(p in pt(), x in vec4(), y in vec4(), z in vec4()) {
        let w = generic();
        let closed = w.curvature_closed_form(&sum_field(&x), &sum_field(&y), &sum_field(&z), &p).unwrap().to_dvector();
        let r = w.product().curvature_at(&p).unwrap();
        let oracle = r.apply(&DVector::from_vec(x), &DVector::from_vec(y), &DVector::from_vec(z));
        prop_assert!(close(&closed, &oracle, 1e-9), "{} vs {}", closed, oracle);
    }

    #[test]
    fn constant_lifts_connection_matches(p in pt(), x in vec4(), y in vec4()) {
        let w = generic();
        let closed = w.connection_closed_form(&sum_field(&x), &sum_field(&y), &p).unwrap().to_dvector();
        let oracle = w.product().christoffel(&p).unwrap().contract(&DVector::from_vec(x), &DVector::from_vec(y));
        prop_assert!(close(&closed, &oracle, 1e-10));
    }

    #[test]
    fn mixed_sectional_matches_sectional(p in pt(), x in prop::collection::vec(-1.0f64..1.0, 2), z in prop::collection::vec(-1.0f64..1.0, 2)) {
        prop_assume!(x.iter().map(|t| t * t).sum::<f64>() > 0.01 && z.iter().map(|t| t * t).sum::<f64>() > 0.01);
        let w = generic();
        let wp = w.at(&p).unwrap();
        let mut xv = DVector::from_vec(vec![x[0], x[1], 0.0, 0.0]);
        let mut zv = DVector::from_vec(vec![0.0, 0.0, z[0], z[1]]);
        xv /= wp.inner(&xv, &xv).sqrt();
        zv /= wp.inner(&zv, &zv).sqrt();
        let xt = TangentVector::from_dvector(&p, &xv);
        let zt = TangentVector::from_dvector(&p, &zv);
        let closed = w.mixed_sectional_closed_form(&xt, &zt, &p).unwrap();
        let oracle = w.product().sectional_curvature(&p, &xt, &zt).unwrap();
        prop_assert!((closed - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()), "{} vs {}", closed, oracle);
    }

    #[test]
    fn f2_one_reduces_to_singly_warped(p in prop::collection::vec(0.2f64..1.4, 3), x in prop::collection::vec(-1.0f64..1.0, 3), y in prop::collection::vec(-1.0f64..1.0, 3)) {
        // Singly warped B ×_f F: for V, W vertical, ∇_V W = ∇^F_V W − (⟨V,W⟩/f) grad f,
        // and ∇_X V = ∇_V X = (X f / f) V for X horizontal.
        let w = singly();
        let wp = w.at(&p).unwrap();
        let f = 1.0 + p[0] * p[0] + p[1];
        let grad_f = {
            let df = DVector::from_vec(vec![2.0 * p[0], 1.0]);
            let ginv = wp.factor1.connection.inverse.clone();
            let g = ginv * df;
            DVector::from_vec(vec![g[0], g[1], 0.0])
        };
        let hx = DVector::from_vec(vec![x[0], x[1], 0.0]);
        let vx = DVector::from_vec(vec![0.0, 0.0, x[2]]);
        let hy = DVector::from_vec(vec![y[0], y[1], 0.0]);
        let vy = DVector::from_vec(vec![0.0, 0.0, y[2]]);
        let xf = |h: &DVector<f64>| h[0] * 2.0 * p[0] + h[1];
        let fiber = |a: &DVector<f64>, b: &DVector<f64>| {
            // F = (u, e^u du²): Γ^u_uu = 1/2
            DVector::from_vec(vec![0.0, 0.0, 0.5 * a[2] * b[2]])
        };
        let base = {
            let c = wp.factor1.connection.gamma.contract(&DVector::from_vec(vec![x[0], x[1]]), &DVector::from_vec(vec![y[0], y[1]]));
            DVector::from_vec(vec![c[0], c[1], 0.0])
        };
        let expect = base
            + &vy * (xf(&hx) / f)
            + &vx * (xf(&hy) / f)
            + fiber(&vx, &vy)
            - &grad_f * (wp.inner(&vx, &vy) / f);
        let closed = wp.connection_correction(&(&hx + &vx), &(&hy + &vy));
        let got = {
            let c = wp.factor1.connection.gamma.contract(&DVector::from_vec(vec![x[0], x[1]]), &DVector::from_vec(vec![y[0], y[1]]));
            let d = wp.factor2.connection.gamma.contract(&DVector::from_vec(vec![x[2]]), &DVector::from_vec(vec![y[2]]));
            DVector::from_vec(vec![c[0], c[1], d[0]]) + closed
        };
        prop_assert!(close(&got, &expect, 1e-12), "{} vs {}", got, expect);
    }
}
