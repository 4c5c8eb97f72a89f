use std::sync::Arc;

use dwarp::exprs::parse;
use dwarp::riemann::ChartedManifold;
use dwarp::submanifold::{FnNormalField, ImmersionPoint, ImmersionSpec};
use nalgebra::DVector;
use proptest::prelude::*;

/// A surface in a non-flat 3-dimensional ambient; the pointwise machinery does
/// not need isometry, so the source carries an arbitrary metric.
fn curved() -> ImmersionSpec {
    let src = ChartedManifold::euclidean("S", &["u", "v"], &[(0.1, 1.0), (0.1, 1.0)]).unwrap();
    let amb = ChartedManifold::new(
        "A",
        &["x", "y", "z"],
        &[
            (0, 0, parse("1 + z^2").unwrap()),
            (0, 1, parse("0.2*x").unwrap()),
            (1, 1, parse("exp(x/2)").unwrap()),
            (2, 2, parse("2 + sin(y)").unwrap()),
        ],
        &[(-3.0, 3.0); 3],
    )
    .unwrap();
    let maps = ["u + v^2/3", "v - u*v", "sin(u) + v^2"].iter().map(|s| parse(s).unwrap()).collect();
    ImmersionSpec::new(Arc::new(src), Arc::new(amb), maps).unwrap()
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.15f64..0.95, 2)
}

fn v2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2)
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn at(p: &[f64]) -> ImmersionPoint {
    curved().at(p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn h_is_symmetric_and_normal(p in point(), x in v2(), y in v2(), z in v2()) {
        let ip = at(&p);
        let (x, y, z) = (dv(&x), dv(&y), dv(&z));
        prop_assert!((ip.h(&x, &y) - ip.h(&y, &x)).amax() <= 1e-9);
        prop_assert!(ip.inner(&ip.h(&x, &y), &ip.push(&z)).abs() <= 1e-8);
    }

    #[test]
    fn weingarten_consistency(p in point(), x in v2(), y in v2(), a in -1.0f64..1.0) {
        let ip = at(&p);
        let eta = &ip.normal_frame[0] * (1.0 + a * a);
        let (x, y) = (dv(&x), dv(&y));
        let ax = ip.shape_operator_apply(&eta, &x).unwrap();
        let lhs = ip.inner(&ip.push(&ax), &ip.push(&y));
        prop_assert!((lhs - ip.inner(&ip.h(&x, &y), &eta)).abs() <= 1e-8);
    }

    #[test]
    fn mean_curvature_is_frame_independent(p in point(), theta in 0.0f64..std::f64::consts::TAU) {
        let ip = at(&p);
        let (e0, e1) = (&ip.tangent_frame[0], &ip.tangent_frame[1]);
        let rotated = vec![e0 * theta.cos() + e1 * theta.sin(), e1 * theta.cos() - e0 * theta.sin()];
        prop_assert!((ip.mean_over(&rotated) - ip.mean_curvature()).amax() <= 1e-9);
    }

    #[test]
    fn weingarten_formula_splits_ambient_derivative(p in point(), x in v2()) {
        // η(q) = normal part of a fixed ambient vector, so D_Xη and A_ηX both are non-trivial
        let spec = curved();
        let field = FnNormalField(|q: &[f64]| {
            let ip = spec.at(q)?;
            Ok(ip.normal_part(&DVector::from_vec(vec![0.3, -1.0, 0.8])))
        });
        let ip = spec.at(&p).unwrap();
        let x = dv(&x);
        let eta = ip.normal_part(&DVector::from_vec(vec![0.3, -1.0, 0.8]));
        let split = ip.weingarten(&x, &field).unwrap();
        let ax = ip.push(&ip.shape_operator_apply(&eta, &x).unwrap());
        prop_assert!((&split.ambient + &ax - &split.normal).amax() <= 1e-8);
    }
}
