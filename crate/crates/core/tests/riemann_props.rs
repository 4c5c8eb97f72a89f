use dwarp::exprs::{parse, ScalarExpr};
use dwarp::riemann::{ChartedManifold, TangentVector, VectorFieldExpr};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn surfaces() -> Vec<ChartedManifold> {
    vec![
        ChartedManifold::diagonal("sphere", &["th", "ph"], &["1", "sin(th)^2"], &[(0.2, 2.9), (-3.0, 3.0)]).unwrap(),
        ChartedManifold::new(
            "tilted",
            &["a", "b", "c"],
            &[
                (0, 0, parse("2 + sin(b)").unwrap()),
                (0, 1, parse("0.3*a*c").unwrap()),
                (1, 1, parse("1 + a^2").unwrap()),
                (1, 2, parse("0.1*cos(a)").unwrap()),
                (2, 2, parse("exp(b/2)").unwrap()),
            ],
            &[(0.1, 1.0), (0.1, 1.0), (0.1, 1.0)],
        )
        .unwrap(),
    ]
}

fn point_in(m: &ChartedManifold, t: &[f64]) -> Vec<f64> {
    m.bounds().iter().zip(t).map(|((lo, hi), s)| lo + (hi - lo) * (0.05 + 0.9 * s)).collect()
}

fn unit() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 3)
}

fn v3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3)
}

fn dv(m: &ChartedManifold, v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(&v[..m.dim()])
}

fn psi_for(m: &ChartedManifold) -> ScalarExpr {
    if m.dim() == 2 {
        parse("cos(th)*sin(2*ph) + th^2").unwrap()
    } else {
        parse("a*b^2 + exp(c)*sin(a)").unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn curvature_symmetries(t in unit(), x in v3(), y in v3(), z in v3(), w in v3()) {
        for m in surfaces() {
            let p = point_in(&m, &t);
            let r = m.curvature_at(&p).unwrap();
            let (x, y, z, w) = (dv(&m, &x), dv(&m, &y), dv(&m, &z), dv(&m, &w));
            let bianchi = r.apply(&x, &y, &z) + r.apply(&y, &z, &x) + r.apply(&z, &x, &y);
            prop_assert!(bianchi.amax() < 1e-8);
            let g = &r.connection;
            let rm = |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>, d: &DVector<f64>| g.inner(&r.apply(a, b, c), d);
            prop_assert!((rm(&x, &y, &z, &w) - rm(&z, &w, &x, &y)).abs() < 1e-8);
            prop_assert!((rm(&x, &y, &z, &w) + rm(&y, &x, &z, &w)).abs() < 1e-8);
            prop_assert!((rm(&x, &y, &z, &w) + rm(&x, &y, &w, &z)).abs() < 1e-8);
        }
    }

    #[test]
    fn hessian_and_laplacian(t in unit()) {
        for m in surfaces() {
            let p = point_in(&m, &t);
            let psi = psi_for(&m);
            let h = m.hessian_matrix(&psi, &p).unwrap();
            prop_assert!((&h - h.transpose()).amax() < 1e-10);
            let ginv = m.connection_at(&p).unwrap().inverse;
            let trace = (&ginv * &h).trace();
            let lap = m.laplacian(&psi, &p).unwrap();
            prop_assert!((lap + trace).abs() < 1e-9);
            let order: Vec<usize> = (0..m.dim()).rev().collect();
            let rev = m.orthonormal_frame_ordered(&p, &order).unwrap();
            prop_assert!((m.laplacian_with_frame(&psi, &p, &rev).unwrap() - lap).abs() < 1e-9);
        }
    }

    #[test]
    fn metric_compatibility_and_torsion(t in unit(), k in 0usize..3) {
        // X⟨Y,Z⟩ = ⟨∇_X Y, Z⟩ + ⟨Y, ∇_X Z⟩ with X = ∂_k and polynomial fields Y, Z.
        for m in surfaces() {
            let n = m.dim();
            let k = k % n;
            let p = point_in(&m, &t);
            let c = m.coords();
            let y = VectorFieldExpr::parse(&(0..n).map(|i| if i == 0 { c[1].as_str() } else { "1" }).collect::<Vec<_>>()).unwrap();
            let zs: Vec<String> = (0..n).map(|i| format!("{}^2 + {}", c[(i + 1) % n], i)).collect();
            let z = VectorFieldExpr::parse(&zs.iter().map(|s| s.as_str()).collect::<Vec<_>>()).unwrap();
            let mut xc = vec![0.0; n];
            xc[k] = 1.0;
            let x = VectorFieldExpr::constant(&xc);
            let inner_at = |q: &[f64]| {
                let a = m.assignment(q);
                let g = m.metric_at(q).unwrap();
                y.eval(&a).unwrap().dot(&(g * z.eval(&a).unwrap()))
            };
            let h = 1e-5;
            let (mut qp, mut qm) = (p.clone(), p.clone());
            qp[k] += h;
            qm[k] -= h;
            let lhs = (inner_at(&qp) - inner_at(&qm)) / (2.0 * h);
            let conn = m.connection_at(&p).unwrap();
            let a = m.assignment(&p);
            let nxy = m.covariant_derivative(&x, &y, &p).unwrap().to_dvector();
            let nxz = m.covariant_derivative(&x, &z, &p).unwrap().to_dvector();
            let rhs = conn.inner(&nxy, &z.eval(&a).unwrap()) + conn.inner(&y.eval(&a).unwrap(), &nxz);
            prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
            let gamma = m.christoffel(&p).unwrap();
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        prop_assert!((gamma.get(l, i, j) - gamma.get(l, j, i)).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn laplacian_matches_divergence_formula(t in unit()) {
        // Δψ = −(1/√det g) ∂_i(√det g · g^{ij} ∂_j ψ), by central differences of the flux.
        for m in surfaces() {
            let n = m.dim();
            let p = point_in(&m, &t);
            let psi = psi_for(&m);
            let flux = |q: &[f64]| {
                let g = m.metric_at(q).unwrap();
                let sq = g.determinant().sqrt();
                let grad = m.gradient(&psi, q).unwrap().to_dvector();
                (grad * sq, sq)
            };
            let h = 1e-4;
            let mut div = 0.0;
            for i in 0..n {
                let (mut qp, mut qm) = (p.clone(), p.clone());
                qp[i] += h;
                qm[i] -= h;
                div += (flux(&qp).0[i] - flux(&qm).0[i]) / (2.0 * h);
            }
            let oracle = -div / flux(&p).1;
            let lap = m.laplacian(&psi, &p).unwrap();
            prop_assert!((lap - oracle).abs() < 1e-6 * (1.0 + oracle.abs()), "{} vs {}", lap, oracle);
        }
    }
}

fn christoffel_fd(m: &ChartedManifold, p: &[f64], h: f64) -> Vec<f64> {
    let n = m.dim();
    let dg: Vec<DMatrix<f64>> = (0..n)
        .map(|k| {
            let (mut qp, mut qm) = (p.to_vec(), p.to_vec());
            qp[k] += h;
            qm[k] -= h;
            (m.metric_at(&qp).unwrap() - m.metric_at(&qm).unwrap()) / (2.0 * h)
        })
        .collect();
    let ginv = m.metric_at(p).unwrap().try_inverse().unwrap();
    let mut out = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                out[(k * n + i) * n + j] =
                    0.5 * (0..n).map(|l| ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])).sum::<f64>();
            }
        }
    }
    out
}

#[test]
fn christoffel_matches_finite_difference_oracle() {
    for m in surfaces() {
        let p = point_in(&m, &[0.3, 0.6, 0.45]);
        let g = m.christoffel(&p).unwrap();
        let fd = christoffel_fd(&m, &p, 1e-5);
        let n = m.dim();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    assert!((g.get(k, i, j) - fd[(k * n + i) * n + j]).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn riemann_matches_finite_difference_of_christoffel() {
    // R^l_{ijk} = ∂_iΓ^l_jk − ∂_jΓ^l_ik + Γ^m_jkΓ^l_im − Γ^m_ikΓ^l_jm,
    // with ∂Γ by central differences of the symbolic Christoffels, at two step sizes.
    for m in surfaces() {
        let n = m.dim();
        let p = point_in(&m, &[0.7, 0.2, 0.55]);
        let r = m.curvature_at(&p).unwrap();
        let g0 = m.christoffel(&p).unwrap();
        for h in [1e-4, 5e-5] {
            let dgamma = |i: usize, l: usize, j: usize, k: usize| {
                let (mut qp, mut qm) = (p.clone(), p.clone());
                qp[i] += h;
                qm[i] -= h;
                (m.christoffel(&qp).unwrap().get(l, j, k) - m.christoffel(&qm).unwrap().get(l, j, k)) / (2.0 * h)
            };
            for l in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let mut v = dgamma(i, l, j, k) - dgamma(j, l, i, k);
                            for mm in 0..n {
                                v += g0.get(mm, j, k) * g0.get(l, i, mm) - g0.get(mm, i, k) * g0.get(l, j, mm);
                            }
                            assert!((r.component(l, i, j, k) - v).abs() < 1e-7, "{} {l}{i}{j}{k}", m.name());
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn sectional_curvature_is_plane_invariant() {
    let m = &surfaces()[1];
    let p = point_in(m, &[0.5, 0.5, 0.5]);
    let x = TangentVector::new(&p, &[1.0, 0.2, -0.3]);
    let y = TangentVector::new(&p, &[0.0, 1.0, 0.4]);
    let k = m.sectional_curvature(&p, &x, &y).unwrap();
    let y2 = TangentVector::new(&p, &[2.0 * 1.0 - 3.0 * 0.0, 2.0 * 0.2 - 3.0, 2.0 * -0.3 - 3.0 * 0.4]);
    let x2 = TangentVector::new(&p, &[0.5, 0.1 + 1.0, -0.15 + 0.4]);
    assert!((m.sectional_curvature(&p, &x2, &y2).unwrap() - k).abs() < 1e-10);
}
