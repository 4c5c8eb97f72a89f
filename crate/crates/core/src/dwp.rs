//! Doubly warped products `N₁ ×_{(f₂, f₁)} N₂` with metric `f₂²·g₁ ⊕ f₁²·g₂`,
//! where `f₁` lives on `N₁` and scales the `N₂` block, and `f₂` lives on `N₂`
//! and scales the `N₁` block.
//!
//! Besides the product chart (which lets the generic machinery in
//! [`crate::riemann`] compute everything by brute force) this module evaluates
//! the connection and curvature of the product in closed form from factor data
//! only: factor connections and curvatures, the warping functions, and the
//! fields `U_i = −grad(ln f_i ∘ π_i)`.
//!
//! In the closed forms, `U_i` pairs with the components along the block that
//! `f_i` scales, i.e. the *other* factor. For `X, Y ∈ D₁` this gives
//! `∇_X Y = ∇⁰_X Y + ⟨X,Y⟩ U₂`, and for mixed lifts
//! `∇_X Z = X(ln f₁) Z + Z(ln f₂) X`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exprs::{diff, Func, ScalarExpr, VarAssignment};
use crate::riemann::{ChartedManifold, LocalConnection, LocalCurvature, TangentVector, VectorFieldExpr};

/// Which factor of a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    First,
    Second,
}

impl Factor {
    pub fn other(self) -> Factor {
        match self {
            Factor::First => Factor::Second,
            Factor::Second => Factor::First,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Factor::First => 1,
            Factor::Second => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Factor> {
        match i {
            1 => Some(Factor::First),
            2 => Some(Factor::Second),
            _ => None,
        }
    }
}

/// Vector field on one factor, realized on the product by zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedField {
    pub factor: Factor,
    pub field: VectorFieldExpr,
}

/// `X = X¹ + X²`, a sum of lifts from each factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSum {
    pub first: VectorFieldExpr,
    pub second: VectorFieldExpr,
}

impl LiftedSum {
    pub fn new(first: VectorFieldExpr, second: VectorFieldExpr) -> Self {
        LiftedSum { first, second }
    }

    pub fn from_lift(w: &DoublyWarpedProduct, lift: &LiftedField) -> Self {
        let (n1, n2) = w.dims();
        match lift.factor {
            Factor::First => LiftedSum::new(lift.field.clone(), VectorFieldExpr::constant(&vec![0.0; n2])),
            Factor::Second => LiftedSum::new(VectorFieldExpr::constant(&vec![0.0; n1]), lift.field.clone()),
        }
    }

    /// The same field written on the product chart.
    pub fn product_field(&self) -> VectorFieldExpr {
        let mut c = self.first.components.clone();
        c.extend(self.second.components.iter().cloned());
        VectorFieldExpr::new(c)
    }
}

#[derive(Debug, Clone)]
pub struct DoublyWarpedProduct {
    factor1: Arc<ChartedManifold>,
    factor2: Arc<ChartedManifold>,
    f1: ScalarExpr,
    f2: ScalarExpr,
    product: Arc<ChartedManifold>,
}

/// Evenly spaced interior grid, `per_dim` points per coordinate.
pub fn grid_points(bounds: &[(f64, f64)], per_dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for (lo, hi) in bounds {
        let ticks: Vec<f64> = (0..per_dim).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / per_dim as f64).collect();
        out = out
            .into_iter()
            .flat_map(|p| {
                ticks.iter().map(move |t| {
                    let mut q = p.clone();
                    q.push(*t);
                    q
                })
            })
            .collect();
    }
    out
}

fn check_positive(name: &str, f: &ScalarExpr, m: &ChartedManifold) -> Result<()> {
    let per_dim = match m.dim() {
        1 => 41,
        2 => 13,
        3 => 7,
        _ => 5,
    };
    for p in grid_points(m.bounds(), per_dim) {
        let v = f.eval(&m.assignment(&p))?;
        if v.is_nan() || v <= 0.0 {
            return Err(Error::NonPositiveWarp { function: name.to_string(), point: p, value: v });
        }
    }
    Ok(())
}

fn pad(first: &DVector<f64>, second: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(first.len() + second.len());
    v.rows_mut(0, first.len()).copy_from(first);
    v.rows_mut(first.len(), second.len()).copy_from(second);
    v
}

/// Closed-form data of a doubly warped product at one point.
#[derive(Debug, Clone)]
pub struct WarpedPoint {
    pub n1: usize,
    pub n2: usize,
    pub f1: f64,
    pub f2: f64,
    pub factor1: LocalCurvature,
    pub factor2: LocalCurvature,
    /// Block metric `f₂² g₁ ⊕ f₁² g₂` assembled from factor data.
    pub metric: DMatrix<f64>,
    /// `−grad_{g₁} ln f₁` and `−grad_{g₂} ln f₂` in factor components.
    pub u1_factor: DVector<f64>,
    pub u2_factor: DVector<f64>,
    /// Factor Hessian matrices of `ln f₁`, `ln f₂`, `f₁`, `f₂`.
    pub hess_log_f1: DMatrix<f64>,
    pub hess_log_f2: DMatrix<f64>,
    pub hess_f1: DMatrix<f64>,
    pub hess_f2: DMatrix<f64>,
    pub df1: DVector<f64>,
    pub df2: DVector<f64>,
}

impl WarpedPoint {
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.metric * y))
    }

    pub fn block(&self, v: &DVector<f64>, f: Factor) -> DVector<f64> {
        match f {
            Factor::First => v.rows(0, self.n1).into_owned(),
            Factor::Second => v.rows(self.n1, self.n2).into_owned(),
        }
    }

    /// Component of `v` in `D_f`, zero-padded.
    pub fn part(&self, v: &DVector<f64>, f: Factor) -> DVector<f64> {
        let mut out = DVector::zeros(self.n1 + self.n2);
        match f {
            Factor::First => out.rows_mut(0, self.n1).copy_from(&v.rows(0, self.n1)),
            Factor::Second => out.rows_mut(self.n1, self.n2).copy_from(&v.rows(self.n1, self.n2)),
        }
        out
    }

    /// `U_i = −grad(ln f_i ∘ π_i)` in the warped metric.
    pub fn u(&self, f: Factor) -> DVector<f64> {
        match f {
            Factor::First => pad(&(&self.u1_factor / (self.f2 * self.f2)), &DVector::zeros(self.n2)),
            Factor::Second => pad(&DVector::zeros(self.n1), &(&self.u2_factor / (self.f1 * self.f1))),
        }
    }

    /// Σ_i (⟨X^{i'},Y^{i'}⟩U_i − ⟨X,U_i⟩Y^{i'} − ⟨Y,U_i⟩X^{i'}), `i'` the factor scaled by `f_i`.
    pub fn connection_correction(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n1 + self.n2);
        for f in [Factor::First, Factor::Second] {
            let u = self.u(f);
            let (xs, ys) = (self.part(x, f.other()), self.part(y, f.other()));
            out += &u * self.inner(&xs, &ys) - &ys * self.inner(x, &u) - &xs * self.inner(y, &u);
        }
        out
    }

    /// `∇_X U_i` for a tangent vector `X`.
    pub fn nabla_u(&self, x: &DVector<f64>, f: Factor) -> DVector<f64> {
        // U₁ = f₂^{-2} Ū₁ with Ū₁ lifted from N₁, and ∇¹_X grad ψ = g₁^{-1} Hess ψ (X).
        let (scale, dscale, base, nabla0) = match f {
            Factor::First => {
                let x2 = self.block(x, Factor::Second);
                let dscale = -2.0 * self.f2.powi(-3) * self.df2.dot(&x2);
                let x1 = self.block(x, Factor::First);
                let n0 = -(&self.factor1.connection.inverse * (&self.hess_log_f1 * x1));
                (self.f2.powi(-2), dscale, pad(&self.u1_factor, &DVector::zeros(self.n2)), pad(&n0, &DVector::zeros(self.n2)))
            }
            Factor::Second => {
                let x1 = self.block(x, Factor::First);
                let dscale = -2.0 * self.f1.powi(-3) * self.df1.dot(&x1);
                let x2 = self.block(x, Factor::Second);
                let n0 = -(&self.factor2.connection.inverse * (&self.hess_log_f2 * x2));
                (self.f1.powi(-2), dscale, pad(&DVector::zeros(self.n1), &self.u2_factor), pad(&DVector::zeros(self.n1), &n0))
            }
        };
        &base * dscale + (nabla0 + self.connection_correction(x, &base)) * scale
    }

    /// `(X∧Y)Z = ⟨Y,Z⟩X − ⟨X,Z⟩Y` in the warped metric.
    pub fn wedge(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        x * self.inner(y, z) - y * self.inner(x, z)
    }

    /// Closed-form `R(X,Y)Z` from factor curvature and the `U_i`.
    pub fn curvature(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let b = |v: &DVector<f64>, f| self.block(v, f);
        let r0 = pad(
            &self.factor1.apply(&b(x, Factor::First), &b(y, Factor::First), &b(z, Factor::First)),
            &self.factor2.apply(&b(x, Factor::Second), &b(y, Factor::Second), &b(z, Factor::Second)),
        );
        let mut out = r0;
        for f in [Factor::First, Factor::Second] {
            let u = self.u(f);
            let ax = self.nabla_u(x, f) - &u * self.inner(x, &u);
            let ay = self.nabla_u(y, f) - &u * self.inner(y, &u);
            out += self.wedge(&ax, &self.part(y, f.other()), z) - self.wedge(&ay, &self.part(x, f.other()), z);
        }
        for fi in [Factor::First, Factor::Second] {
            for fj in [Factor::First, Factor::Second] {
                let c = self.inner(&self.u(fi), &self.u(fj));
                if c != 0.0 {
                    out += self.wedge(&self.part(x, fi.other()), &self.part(y, fj.other()), z) * c;
                }
            }
        }
        out
    }
}

impl DoublyWarpedProduct {
    pub fn factor1(&self) -> &Arc<ChartedManifold> {
        &self.factor1
    }

    pub fn factor2(&self) -> &Arc<ChartedManifold> {
        &self.factor2
    }

    pub fn factor(&self, f: Factor) -> &Arc<ChartedManifold> {
        match f {
            Factor::First => &self.factor1,
            Factor::Second => &self.factor2,
        }
    }

    /// Warping function living on factor `f` (it scales the other block).
    pub fn warp(&self, f: Factor) -> &ScalarExpr {
        match f {
            Factor::First => &self.f1,
            Factor::Second => &self.f2,
        }
    }

    pub fn product(&self) -> &Arc<ChartedManifold> {
        &self.product
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.factor1.dim(), self.factor2.dim())
    }

    pub fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        p.split_at(self.factor1.dim())
    }

    /// Evaluates a warping function at a product point.
    pub fn warp_value(&self, f: Factor, p: &[f64]) -> Result<f64> {
        let (p1, p2) = self.split(p);
        match f {
            Factor::First => self.f1.eval(&self.factor1.assignment(p1)),
            Factor::Second => self.f2.eval(&self.factor2.assignment(p2)),
        }
    }

    /// Closed-form quantities at `p` (product coordinates).
    pub fn at(&self, p: &[f64]) -> Result<WarpedPoint> {
        if p.len() != self.product.dim() {
            return Err(Error::DimensionMismatch { expected: self.product.dim(), found: p.len() });
        }
        let (p1, p2) = self.split(p);
        let (a1, a2) = (self.factor1.assignment(p1), self.factor2.assignment(p2));
        let f1 = self.f1.eval(&a1)?;
        let f2 = self.f2.eval(&a2)?;
        let factor1 = self.factor1.curvature_at(p1)?;
        let factor2 = self.factor2.curvature_at(p2)?;
        let partials = |m: &ChartedManifold, e: &ScalarExpr, a: &VarAssignment| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(m.coords().iter().map(|c| diff(e, c).eval(a)).collect::<Result<Vec<_>>>()?))
        };
        let df1 = partials(&self.factor1, &self.f1, &a1)?;
        let df2 = partials(&self.factor2, &self.f2, &a2)?;
        let u1_factor = -(&factor1.connection.inverse * &df1) / f1;
        let u2_factor = -(&factor2.connection.inverse * &df2) / f2;
        let log1 = ScalarExpr::call(Func::Log, &self.f1);
        let log2 = ScalarExpr::call(Func::Log, &self.f2);
        let (n1, n2) = self.dims();
        let mut metric = DMatrix::zeros(n1 + n2, n1 + n2);
        metric.view_mut((0, 0), (n1, n1)).copy_from(&(&factor1.connection.metric * (f2 * f2)));
        metric.view_mut((n1, n1), (n2, n2)).copy_from(&(&factor2.connection.metric * (f1 * f1)));
        Ok(WarpedPoint {
            n1,
            n2,
            f1,
            f2,
            metric,
            u1_factor,
            u2_factor,
            hess_log_f1: self.factor1.hessian_matrix(&log1, p1)?,
            hess_log_f2: self.factor2.hessian_matrix(&log2, p2)?,
            hess_f1: self.factor1.hessian_matrix(&self.f1, p1)?,
            hess_f2: self.factor2.hessian_matrix(&self.f2, p2)?,
            df1,
            df2,
            factor1,
            factor2,
        })
    }

    /// `U_i` at `p` (closed form).
    pub fn u_field(&self, f: Factor, p: &[f64]) -> Result<TangentVector> {
        Ok(TangentVector::from_dvector(p, &self.at(p)?.u(f)))
    }

    fn direct_product_connection(&self, x: &LiftedSum, y: &LiftedSum, p: &[f64]) -> Result<DVector<f64>> {
        let (p1, p2) = self.split(p);
        let a = self.factor1.covariant_derivative(&x.first, &y.first, p1)?;
        let b = self.factor2.covariant_derivative(&x.second, &y.second, p2)?;
        Ok(pad(&a.to_dvector(), &b.to_dvector()))
    }

    fn eval_sum(&self, x: &LiftedSum, p: &[f64]) -> Result<DVector<f64>> {
        let (p1, p2) = self.split(p);
        Ok(pad(&x.first.eval(&self.factor1.assignment(p1))?, &x.second.eval(&self.factor2.assignment(p2))?))
    }

    /// `∇_X Y` from the direct-product connection plus the warping correction.
    pub fn connection_closed_form(&self, x: &LiftedSum, y: &LiftedSum, p: &[f64]) -> Result<TangentVector> {
        let wp = self.at(p)?;
        let nabla0 = self.direct_product_connection(x, y, p)?;
        let (xv, yv) = (self.eval_sum(x, p)?, self.eval_sum(y, p)?);
        Ok(TangentVector::from_dvector(p, &(nabla0 + wp.connection_correction(&xv, &yv))))
    }

    /// `R(X,Y)Z` in closed form.
    pub fn curvature_closed_form(&self, x: &LiftedSum, y: &LiftedSum, z: &LiftedSum, p: &[f64]) -> Result<TangentVector> {
        let wp = self.at(p)?;
        let (xv, yv, zv) = (self.eval_sum(x, p)?, self.eval_sum(y, p)?, self.eval_sum(z, p)?);
        Ok(TangentVector::from_dvector(p, &wp.curvature(&xv, &yv, &zv)))
    }

    /// Closed-form sectional curvature of a mixed plane spanned by unit
    /// `X ∈ D₁` and unit `Z ∈ D₂` (product components):
    /// `(1/f₁)((∇¹_X X)f₁ − X²f₁) + (1/f₂)((∇²_Z Z)f₂ − Z²f₂)`.
    pub fn mixed_sectional_closed_form(&self, x: &TangentVector, z: &TangentVector, p: &[f64]) -> Result<f64> {
        let wp = self.at(p)?;
        let (xv, zv) = (x.to_dvector(), z.to_dvector());
        if xv.len() != wp.n1 + wp.n2 || zv.len() != wp.n1 + wp.n2 {
            return Err(Error::DimensionMismatch { expected: wp.n1 + wp.n2, found: xv.len().min(zv.len()) });
        }
        if wp.block(&xv, Factor::Second).amax() > 0.0 || wp.block(&zv, Factor::First).amax() > 0.0 {
            return Err(Error::NotFactorAligned);
        }
        for v in [&xv, &zv] {
            let dev = (wp.inner(v, v).sqrt() - 1.0).abs();
            if dev > 1e-8 {
                return Err(Error::NotUnit(dev));
            }
        }
        let x1 = wp.block(&xv, Factor::First);
        let z2 = wp.block(&zv, Factor::Second);
        Ok(-x1.dot(&(&wp.hess_f1 * &x1)) / wp.f1 - z2.dot(&(&wp.hess_f2 * &z2)) / wp.f2)
    }
}

/// `(X∧Y)Z = ⟨Y,Z⟩X − ⟨X,Z⟩Y` using the metric of `m` at the common base point.
pub fn wedge(m: &ChartedManifold, x: &TangentVector, y: &TangentVector, z: &TangentVector) -> Result<TangentVector> {
    if x.point != y.point || y.point != z.point {
        return Err(Error::MismatchedBasePoint);
    }
    let conn: LocalConnection = m.connection_at(&x.point)?;
    let (xv, yv, zv) = (x.to_dvector(), y.to_dvector(), z.to_dvector());
    let out = &xv * conn.inner(&yv, &zv) - &yv * conn.inner(&xv, &zv);
    Ok(TangentVector::from_dvector(&x.point, &out))
}

/// Builds the doubly warped product of `m1` and `m2` with `f1` on `m1`, `f2` on `m2`.
pub fn build_dwp(m1: Arc<ChartedManifold>, m2: Arc<ChartedManifold>, f1: ScalarExpr, f2: ScalarExpr) -> Result<DoublyWarpedProduct> {
    for c in m1.coords() {
        if m2.coords().contains(c) {
            return Err(Error::Invalid(format!("factors `{}` and `{}` share coordinate `{c}`", m1.name(), m2.name())));
        }
    }
    for (f, m, label) in [(&f1, &m1, "f1"), (&f2, &m2, "f2")] {
        if let Some(v) = f.free_vars().into_iter().find(|v| !m.coords().contains(v)) {
            return Err(Error::Invalid(format!("{label} uses `{v}`, which is not a coordinate of `{}`", m.name())));
        }
    }
    check_positive("f1", &f1, &m1)?;
    check_positive("f2", &f2, &m2)?;
    let (n1, n2) = (m1.dim(), m2.dim());
    let sq = |f: &ScalarExpr| ScalarExpr::pow(f, crate::exprs::Rational::integer(2));
    let (f1sq, f2sq) = (sq(&f1), sq(&f2));
    let mut entries = Vec::new();
    for i in 0..n1 {
        for j in i..n1 {
            let g = m1.metric_expr(i, j);
            if !g.is_zero() {
                entries.push((i, j, ScalarExpr::mul(&f2sq, g)));
            }
        }
    }
    for i in 0..n2 {
        for j in i..n2 {
            let g = m2.metric_expr(i, j);
            if !g.is_zero() {
                entries.push((n1 + i, n1 + j, ScalarExpr::mul(&f1sq, g)));
            }
        }
    }
    let coords: Vec<&str> = m1.coords().iter().chain(m2.coords()).map(|s| s.as_str()).collect();
    let bounds: Vec<(f64, f64)> = m1.bounds().iter().chain(m2.bounds()).copied().collect();
    let name = format!("{}x{}", m1.name(), m2.name());
    let product = Arc::new(ChartedManifold::new(&name, &coords, &entries, &bounds)?);
    Ok(DoublyWarpedProduct { factor1: m1, factor2: m2, f1, f2, product })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprs::parse;

    fn line(name: &str, c: &str, lo: f64, hi: f64) -> Arc<ChartedManifold> {
        Arc::new(ChartedManifold::euclidean(name, &[c], &[(lo, hi)]).unwrap())
    }

    fn dwp(m1: Arc<ChartedManifold>, m2: Arc<ChartedManifold>, f1: &str, f2: &str) -> DoublyWarpedProduct {
        build_dwp(m1, m2, parse(f1).unwrap(), parse(f2).unwrap()).unwrap()
    }

    fn polar() -> DoublyWarpedProduct {
        dwp(line("R+", "r", 0.1, 5.0), line("S1", "t", -3.0, 3.0), "r", "1")
    }

    fn flat_dw() -> DoublyWarpedProduct {
        dwp(line("R+", "r", 0.2, 3.0), line("R+s", "s", 0.2, 3.0), "r", "s")
    }

    fn sphere() -> DoublyWarpedProduct {
        dwp(line("I", "th", 0.05, 3.09), line("S1", "ph", -3.0, 3.0), "sin(th)", "1")
    }

    #[test]
    fn singly_warped_and_direct_products() {
        let g = polar().product().metric_at(&[2.0, 0.5]).unwrap();
        assert_eq!(g, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])));
        let d = dwp(line("A", "a", 0.0, 1.0), line("B", "b", 0.0, 1.0), "1", "1");
        assert_eq!(d.product().metric_at(&[0.3, 0.6]).unwrap(), DMatrix::identity(2, 2));
        let g = flat_dw().product().metric_at(&[1.5, 0.5]).unwrap();
        assert_eq!(g, DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 2.25])));
    }

    #[test]
    fn flat_doubly_warped_is_flat() {
        let w = flat_dw();
        for p in grid_points(&[(0.3, 2.9), (0.3, 2.9)], 4) {
            let k = w
                .product()
                .curvature_at(&p)
                .unwrap()
                .sectional(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0]))
                .unwrap();
            assert!(k.abs() < 1e-12, "{k} at {p:?}");
        }
    }

    #[test]
    fn non_positive_warp_rejected() {
        let e = build_dwp(line("R", "r", 1.0, 3.0), line("S", "s", 0.0, 1.0), parse("r - 2").unwrap(), parse("1").unwrap());
        assert!(matches!(e, Err(Error::NonPositiveWarp { .. })));
    }

    #[test]
    fn u_field_instances() {
        let d = dwp(line("A", "a", 0.0, 1.0), line("B", "b", 0.0, 1.0), "1", "1");
        assert_eq!(d.u_field(Factor::First, &[0.5, 0.5]).unwrap().components, vec![0.0, 0.0]);
        let u = polar().u_field(Factor::First, &[2.0, 0.0]).unwrap();
        assert_eq!(u.components, vec![-0.5, 0.0]);
        // gradient oracle in the product metric: −g^{rr} ∂_r ln r = −1/(s² r)
        let u = flat_dw().u_field(Factor::First, &[1.0, 1.0]).unwrap();
        let oracle = flat_dw().product().gradient(&parse("-log(r)").unwrap(), &[1.0, 1.0]).unwrap();
        assert_eq!(u.components, vec![-1.0, 0.0]);
        assert!((u.components[0] - oracle.components[0]).abs() < 1e-15);
    }

    #[test]
    fn u_fields_stay_in_their_block() {
        let w = flat_dw();
        for p in grid_points(&[(0.3, 2.9), (0.3, 2.9)], 3) {
            assert_eq!(w.u_field(Factor::First, &p).unwrap().components[1], 0.0);
            assert_eq!(w.u_field(Factor::Second, &p).unwrap().components[0], 0.0);
        }
    }

    #[test]
    fn polar_connection_matches_christoffel() {
        let w = polar();
        let dt = LiftedSum::new(VectorFieldExpr::constant(&[0.0]), VectorFieldExpr::constant(&[1.0]));
        let v = w.connection_closed_form(&dt, &dt, &[2.0, 0.0]).unwrap();
        assert!((v.components[0] + 2.0).abs() < 1e-12 && v.components[1].abs() < 1e-12);
    }

    #[test]
    fn mixed_connection_pattern() {
        // ∇_X Z = X(ln f₁) Z + Z(ln f₂) X for lifts X ∈ D₁, Z ∈ D₂
        let m1 = Arc::new(ChartedManifold::diagonal("M1", &["a"], &["1 + a^2"], &[(0.1, 2.0)]).unwrap());
        let m2 = Arc::new(ChartedManifold::diagonal("M2", &["b"], &["2"], &[(0.1, 2.0)]).unwrap());
        let w = build_dwp(m1, m2, parse("1 + a^2").unwrap(), parse("exp(b/3)").unwrap()).unwrap();
        let x = LiftedSum::new(VectorFieldExpr::parse(&["a"]).unwrap(), VectorFieldExpr::constant(&[0.0]));
        let z = LiftedSum::new(VectorFieldExpr::constant(&[0.0]), VectorFieldExpr::parse(&["1 + b"]).unwrap());
        let p = [0.7, 1.2];
        let got = w.connection_closed_form(&x, &z, &p).unwrap();
        let (a, b) = (0.7f64, 1.2f64);
        let expect = [(1.0 + b) / 3.0 * a, a * 2.0 * a / (1.0 + a * a) * (1.0 + b)];
        let oracle = w.product().covariant_derivative(&x.product_field(), &z.product_field(), &p).unwrap();
        for (k, e) in expect.iter().enumerate() {
            assert!((got.components[k] - e).abs() < 1e-12);
            assert!((oracle.components[k] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_curvature_from_closed_form() {
        let w = sphere();
        let p = [std::f64::consts::FRAC_PI_3, 0.4];
        let x = LiftedSum::new(VectorFieldExpr::constant(&[1.0]), VectorFieldExpr::constant(&[0.0]));
        let y = LiftedSum::new(VectorFieldExpr::constant(&[0.0]), VectorFieldExpr::constant(&[1.0]));
        let r = w.curvature_closed_form(&x, &y, &y, &p).unwrap().to_dvector();
        let wp = w.at(&p).unwrap();
        let (xv, yv) = (DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0]));
        let k = wp.inner(&r, &xv) / (wp.inner(&xv, &xv) * wp.inner(&yv, &yv));
        assert!((k - 1.0).abs() < 1e-12);
        let s = p[0].sin();
        let mixed =
            w.mixed_sectional_closed_form(&TangentVector::new(&p, &[1.0, 0.0]), &TangentVector::new(&p, &[0.0, 1.0 / s]), &p).unwrap();
        assert!((mixed - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_sectional_rejects_bad_input() {
        let w = sphere();
        let p = [1.0, 0.0];
        let e = w.mixed_sectional_closed_form(&TangentVector::new(&p, &[2.0, 0.0]), &TangentVector::new(&p, &[0.0, 1.0 / 1f64.sin()]), &p);
        assert!(matches!(e, Err(Error::NotUnit(_))));
        let e = w.mixed_sectional_closed_form(&TangentVector::new(&p, &[1.0, 0.1]), &TangentVector::new(&p, &[0.0, 1.0]), &p);
        assert_eq!(e, Err(Error::NotFactorAligned));
    }

    #[test]
    fn wedge_instances() {
        let e2 = ChartedManifold::euclidean("E", &["x", "y"], &[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let p = [0.0, 0.0];
        let v = |c: &[f64]| TangentVector::new(&p, c);
        assert_eq!(wedge(&e2, &v(&[1.0, 0.0]), &v(&[0.0, 2.0]), &v(&[0.0, 1.0])).unwrap().components, vec![2.0, 0.0]);
        assert_eq!(wedge(&e2, &v(&[0.3, 0.4]), &v(&[0.3, 0.4]), &v(&[1.0, 1.0])).unwrap().components, vec![0.0, 0.0]);
        assert_eq!(wedge(&e2, &v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &v(&[0.0, 1.0])).unwrap().components, vec![1.0, 0.0]);
        let q = TangentVector::new(&[0.5, 0.0], &[1.0, 0.0]);
        assert_eq!(wedge(&e2, &q, &v(&[0.0, 1.0]), &v(&[0.0, 1.0])), Err(Error::MismatchedBasePoint));
    }
}
