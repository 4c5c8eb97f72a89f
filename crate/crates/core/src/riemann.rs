//! Single-chart Riemannian geometry.
//!
//! Conventions used throughout the crate:
//!
//! * `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, so that
//!   `K(X∧Y) = ⟨R(X,Y)Y, X⟩ / (|X|²|Y|² − ⟨X,Y⟩²)` is `+1` on the unit sphere.
//! * The Laplacian is `Δψ = −trace Hess ψ`. Note the sign: this is the
//!   geometer's Laplacian, positive on `cos x` of the line and with
//!   non-negative eigenvalues on compact manifolds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exprs::{diff, parse, ScalarExpr, VarAssignment};

/// Gram determinant below which a 2-plane is considered degenerate.
pub const DEGENERATE_PLANE: f64 = 1e-12;

/// One coordinate chart with a metric given in closed form.
#[derive(Debug, Clone)]
pub struct ChartedManifold {
    name: String,
    coords: Vec<String>,
    metric: Vec<Vec<ScalarExpr>>,
    bounds: Vec<(f64, f64)>,
    // d_metric[k][i][j] = ∂_k g_ij, dd_metric[k][l][i][j] = ∂_k ∂_l g_ij
    d_metric: Vec<Vec<Vec<ScalarExpr>>>,
    dd_metric: Vec<Vec<Vec<Vec<ScalarExpr>>>>,
}

/// Point plus components in the chart basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub point: Vec<f64>,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(point: &[f64], components: &[f64]) -> Self {
        TangentVector { point: point.to_vec(), components: components.to_vec() }
    }

    pub fn from_dvector(point: &[f64], v: &DVector<f64>) -> Self {
        TangentVector { point: point.to_vec(), components: v.iter().copied().collect() }
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.components)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

/// Vector field with closed-form components in the chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldExpr {
    pub components: Vec<ScalarExpr>,
}

impl VectorFieldExpr {
    pub fn new(components: Vec<ScalarExpr>) -> Self {
        VectorFieldExpr { components }
    }

    pub fn parse(components: &[&str]) -> Result<Self> {
        Ok(VectorFieldExpr { components: components.iter().map(|c| parse(c)).collect::<Result<_>>()? })
    }

    pub fn constant(values: &[f64]) -> Self {
        VectorFieldExpr { components: values.iter().map(|v| ScalarExpr::constant(*v)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, a: &VarAssignment) -> Result<DVector<f64>> {
        let vals = self.components.iter().map(|c| c.eval(a)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }
}

/// Christoffel symbols `Γ^k_{ij}` at one point, stored flat.
#[derive(Debug, Clone)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.data[(k * n + i) * n + j] = v;
    }

    /// `Γ(X, Y)^k = Γ^k_{ij} X^i Y^j`.
    pub fn contract(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += self.get(k, i, j) * x[i] * y[j];
                }
            }
            s
        })
    }
}

/// Metric, inverse and connection at a point.
#[derive(Debug, Clone)]
pub struct LocalConnection {
    pub metric: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub gamma: Christoffel,
}

impl LocalConnection {
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.metric * y))
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }
}

/// Connection plus the `(1,3)` curvature tensor at a point.
#[derive(Debug, Clone)]
pub struct LocalCurvature {
    pub connection: LocalConnection,
    // riemann[((l*n + i)*n + j)*n + k] = R^l_{ijk}, R(∂_i,∂_j)∂_k = R^l_{ijk} ∂_l
    riemann: Vec<f64>,
}

impl LocalCurvature {
    pub fn dim(&self) -> usize {
        self.connection.gamma.n
    }

    pub fn component(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.dim();
        self.riemann[((l * n + i) * n + j) * n + k]
    }

    /// `R(X,Y)Z` from tangent-vector components.
    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let c = xy * z[k];
                    if c == 0.0 {
                        continue;
                    }
                    for l in 0..n {
                        out[l] += c * self.component(l, i, j, k);
                    }
                }
            }
        }
        out
    }

    /// Sectional curvature of span{X, Y}.
    pub fn sectional(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let c = &self.connection;
        let gram = c.inner(x, x) * c.inner(y, y) - c.inner(x, y).powi(2);
        if gram.abs() < DEGENERATE_PLANE {
            return Err(Error::DegeneratePlane(gram));
        }
        Ok(c.inner(&self.apply(x, y, y), x) / gram)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

impl ChartedManifold {
    /// `entries` lists `(i, j, g_ij)` with 0-based indices; the mirrored entry is
    /// implied and unspecified entries are zero.
    pub fn new(name: &str, coords: &[&str], entries: &[(usize, usize, ScalarExpr)], bounds: &[(f64, f64)]) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::Invalid(format!("manifold `{name}` has no coordinates")));
        }
        check_dim(n, bounds.len())?;
        for (k, c) in coords.iter().enumerate() {
            if coords[..k].contains(c) {
                return Err(Error::Invalid(format!("manifold `{name}` repeats coordinate `{c}`")));
            }
        }
        for (lo, hi) in bounds {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Invalid(format!("manifold `{name}` has an empty or unbounded interval ({lo}, {hi})")));
            }
        }
        let mut metric: Vec<Vec<Option<ScalarExpr>>> = vec![vec![None; n]; n];
        for (i, j, e) in entries {
            if *i >= n || *j >= n {
                return Err(Error::Invalid(format!("metric index ({}, {}) out of range for `{name}`", i + 1, j + 1)));
            }
            for (a, b) in [(*i, *j), (*j, *i)] {
                if let Some(prev) = &metric[a][b] {
                    if prev != e {
                        return Err(Error::Invalid(format!("metric of `{name}` is not symmetric at ({}, {})", a + 1, b + 1)));
                    }
                }
                metric[a][b] = Some(e.clone());
            }
        }
        let metric: Vec<Vec<ScalarExpr>> =
            metric.into_iter().map(|row| row.into_iter().map(|e| e.unwrap_or_else(|| ScalarExpr::constant(0.0))).collect()).collect();
        let allowed: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
        for row in &metric {
            for e in row {
                if let Some(v) = e.free_vars().into_iter().find(|v| !allowed.contains(v)) {
                    return Err(Error::Invalid(format!("metric of `{name}` uses undeclared variable `{v}`")));
                }
            }
        }
        let d_metric: Vec<Vec<Vec<ScalarExpr>>> =
            coords.iter().map(|c| metric.iter().map(|row| row.iter().map(|e| diff(e, c)).collect()).collect()).collect();
        let dd_metric = d_metric
            .iter()
            .map(|dk| coords.iter().map(|c| dk.iter().map(|row| row.iter().map(|e| diff(e, c)).collect()).collect()).collect())
            .collect();
        Ok(ChartedManifold { name: name.to_string(), coords: allowed, metric, bounds: bounds.to_vec(), d_metric, dd_metric })
    }

    /// Euclidean chart with the given coordinate names.
    pub fn euclidean(name: &str, coords: &[&str], bounds: &[(f64, f64)]) -> Result<Self> {
        let entries: Vec<_> = (0..coords.len()).map(|i| (i, i, ScalarExpr::constant(1.0))).collect();
        Self::new(name, coords, &entries, bounds)
    }

    /// Diagonal metric from parsed entries.
    pub fn diagonal(name: &str, coords: &[&str], diag: &[&str], bounds: &[(f64, f64)]) -> Result<Self> {
        check_dim(coords.len(), diag.len())?;
        let entries = diag.iter().enumerate().map(|(i, d)| Ok((i, i, parse(d)?))).collect::<Result<Vec<_>>>()?;
        Self::new(name, coords, &entries, bounds)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn metric_expr(&self, i: usize, j: usize) -> &ScalarExpr {
        &self.metric[i][j]
    }

    pub fn assignment(&self, p: &[f64]) -> VarAssignment {
        VarAssignment::from_pairs(&self.coords, p)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(&self.bounds).all(|(x, (lo, hi))| lo < x && x < hi)
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        check_dim(self.dim(), p.len())?;
        if !self.contains(p) {
            return Err(Error::Domain(format!("point {p:?} lies outside the domain of `{}`", self.name)));
        }
        Ok(())
    }

    fn eval_matrix(&self, m: &[Vec<ScalarExpr>], a: &VarAssignment) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = m[i][j].eval(a)?;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// Metric matrix at `p`, validated positive definite.
    pub fn metric_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        let g = self.eval_matrix(&self.metric, &self.assignment(p))?;
        let min = g.clone().symmetric_eigen().eigenvalues.min();
        if min.is_nan() || min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(g)
    }

    pub fn connection_at(&self, p: &[f64]) -> Result<LocalConnection> {
        let metric = self.metric_at(p)?;
        let inverse = metric.clone().try_inverse().ok_or(Error::SingularMetric)?;
        let a = self.assignment(p);
        let dg = self.d_metric.iter().map(|m| self.eval_matrix(m, &a)).collect::<Result<Vec<_>>>()?;
        let gamma = christoffel_from(&inverse, &dg);
        Ok(LocalConnection { metric, inverse, gamma })
    }

    pub fn curvature_at(&self, p: &[f64]) -> Result<LocalCurvature> {
        let n = self.dim();
        let metric = self.metric_at(p)?;
        let inverse = metric.clone().try_inverse().ok_or(Error::SingularMetric)?;
        let a = self.assignment(p);
        let dg = self.d_metric.iter().map(|m| self.eval_matrix(m, &a)).collect::<Result<Vec<_>>>()?;
        let ddg = self
            .dd_metric
            .iter()
            .map(|row| row.iter().map(|m| self.eval_matrix(m, &a)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let gamma = christoffel_from(&inverse, &dg);

        // ∂_l g^{-1} = −g^{-1} (∂_l g) g^{-1}
        let d_inverse: Vec<DMatrix<f64>> = dg.iter().map(|d| -(&inverse * d * &inverse)).collect();
        // first-kind symbols and their derivatives: [ij,m] = ½(∂_i g_jm + ∂_j g_im − ∂_m g_ij)
        let first = |i: usize, j: usize, m: usize| 0.5 * (dg[i][(j, m)] + dg[j][(i, m)] - dg[m][(i, j)]);
        let d_first = |l: usize, i: usize, j: usize, m: usize| 0.5 * (ddg[l][i][(j, m)] + ddg[l][j][(i, m)] - ddg[l][m][(i, j)]);
        // d_gamma[l][k][i][j] = ∂_l Γ^k_ij
        let mut d_gamma = vec![0.0; n * n * n * n];
        let idx4 = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            s += d_inverse[l][(k, m)] * first(i, j, m) + inverse[(k, m)] * d_first(l, i, j, m);
                        }
                        d_gamma[idx4(l, k, i, j)] = s;
                    }
                }
            }
        }
        // R^l_{ijk} = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^m_jk Γ^l_im − Γ^m_ik Γ^l_jm
        let mut riemann = vec![0.0; n * n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = d_gamma[idx4(i, l, j, k)] - d_gamma[idx4(j, l, i, k)];
                        for m in 0..n {
                            s += gamma.get(m, j, k) * gamma.get(l, i, m) - gamma.get(m, i, k) * gamma.get(l, j, m);
                        }
                        riemann[idx4(l, i, j, k)] = s;
                    }
                }
            }
        }
        Ok(LocalCurvature { connection: LocalConnection { metric, inverse, gamma }, riemann })
    }

    pub fn christoffel(&self, p: &[f64]) -> Result<Christoffel> {
        Ok(self.connection_at(p)?.gamma)
    }

    /// `(∇_X Y)^k = X^i ∂_i Y^k + Γ^k_ij X^i Y^j` at `p`.
    pub fn covariant_derivative(&self, x: &VectorFieldExpr, y: &VectorFieldExpr, p: &[f64]) -> Result<TangentVector> {
        check_dim(self.dim(), x.dim())?;
        check_dim(self.dim(), y.dim())?;
        let conn = self.connection_at(p)?;
        let a = self.assignment(p);
        let xv = x.eval(&a)?;
        let yv = y.eval(&a)?;
        let mut out = conn.gamma.contract(&xv, &yv);
        for (k, yk) in y.components.iter().enumerate() {
            for (i, c) in self.coords.iter().enumerate() {
                if xv[i] != 0.0 {
                    out[k] += xv[i] * diff(yk, c).eval(&a)?;
                }
            }
        }
        Ok(TangentVector::from_dvector(p, &out))
    }

    /// `R(X,Y)Z` at `p`; the tensor is evaluated on the field values at `p`.
    pub fn riemann_tensor(&self, x: &VectorFieldExpr, y: &VectorFieldExpr, z: &VectorFieldExpr, p: &[f64]) -> Result<TangentVector> {
        let curv = self.curvature_at(p)?;
        let a = self.assignment(p);
        let out = curv.apply(&x.eval(&a)?, &y.eval(&a)?, &z.eval(&a)?);
        Ok(TangentVector::from_dvector(p, &out))
    }

    pub fn sectional_curvature(&self, p: &[f64], x: &TangentVector, y: &TangentVector) -> Result<f64> {
        check_dim(self.dim(), x.dim())?;
        check_dim(self.dim(), y.dim())?;
        self.curvature_at(p)?.sectional(&x.to_dvector(), &y.to_dvector())
    }

    fn partials(&self, psi: &ScalarExpr, a: &VarAssignment) -> Result<DVector<f64>> {
        let vals = self.coords.iter().map(|c| diff(psi, c).eval(a)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }

    fn second_partials(&self, psi: &ScalarExpr, a: &VarAssignment) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for (i, ci) in self.coords.iter().enumerate() {
            let di = diff(psi, ci);
            for (j, cj) in self.coords.iter().enumerate().skip(i) {
                let v = diff(&di, cj).eval(a)?;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// Components `g^{ij} ∂_j ψ`.
    pub fn gradient(&self, psi: &ScalarExpr, p: &[f64]) -> Result<TangentVector> {
        let metric = self.metric_at(p)?;
        let inverse = metric.try_inverse().ok_or(Error::SingularMetric)?;
        let dpsi = self.partials(psi, &self.assignment(p))?;
        Ok(TangentVector::from_dvector(p, &(inverse * dpsi)))
    }

    /// Hessian matrix `∂_i∂_j ψ − Γ^k_ij ∂_k ψ` at `p`.
    pub fn hessian_matrix(&self, psi: &ScalarExpr, p: &[f64]) -> Result<DMatrix<f64>> {
        let conn = self.connection_at(p)?;
        let a = self.assignment(p);
        let d1 = self.partials(psi, &a)?;
        let mut h = self.second_partials(psi, &a)?;
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    h[(i, j)] -= conn.gamma.get(k, i, j) * d1[k];
                }
            }
        }
        Ok(h)
    }

    /// `H^ψ(X,Y) = XYψ − (∇_X Y)ψ`, with X and Y extended by constant components.
    pub fn hessian(&self, psi: &ScalarExpr, p: &[f64], x: &TangentVector, y: &TangentVector) -> Result<f64> {
        check_dim(self.dim(), x.dim())?;
        check_dim(self.dim(), y.dim())?;
        let h = self.hessian_matrix(psi, p)?;
        Ok(x.to_dvector().dot(&(h * y.to_dvector())))
    }

    /// Laplacian with the sign `Δψ = Σ_i ((∇_{e_i} e_i)ψ − e_i e_i ψ) = −trace H^ψ`.
    pub fn laplacian(&self, psi: &ScalarExpr, p: &[f64]) -> Result<f64> {
        let frame = self.orthonormal_frame(p)?;
        self.laplacian_with_frame(psi, p, &frame)
    }

    pub fn laplacian_with_frame(&self, psi: &ScalarExpr, p: &[f64], frame: &[TangentVector]) -> Result<f64> {
        let h = self.hessian_matrix(psi, p)?;
        Ok(-frame.iter().map(|e| e.to_dvector().dot(&(&h * e.to_dvector()))).sum::<f64>())
    }

    /// Unpivoted Gram–Schmidt of the coordinate basis, in coordinate order.
    pub fn orthonormal_frame(&self, p: &[f64]) -> Result<Vec<TangentVector>> {
        let order: Vec<usize> = (0..self.dim()).collect();
        self.orthonormal_frame_ordered(p, &order)
    }

    /// Gram–Schmidt of the coordinate basis taken in the given order.
    pub fn orthonormal_frame_ordered(&self, p: &[f64], order: &[usize]) -> Result<Vec<TangentVector>> {
        let g = self.metric_at(p)?;
        let basis: Vec<DVector<f64>> = order
            .iter()
            .map(|&i| {
                let mut e = DVector::zeros(self.dim());
                e[i] = 1.0;
                e
            })
            .collect();
        let frame = gram_schmidt(&g, &basis, 1e-12).ok_or(Error::SingularMetric)?;
        Ok(frame.iter().map(|v| TangentVector::from_dvector(p, v)).collect())
    }
}

fn christoffel_from(inverse: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Christoffel {
    let n = inverse.nrows();
    let mut gamma = Christoffel { n, data: vec![0.0; n * n * n] };
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for m in 0..n {
                    s += inverse[(k, m)] * (dg[i][(j, m)] + dg[j][(i, m)] - dg[m][(i, j)]);
                }
                gamma.set(k, i, j, 0.5 * s);
                gamma.set(k, j, i, 0.5 * s);
            }
        }
    }
    gamma
}

/// Orthonormalizes `vectors` in the inner product `g`; `None` if any vector
/// is dependent on its predecessors (norm below `eps`).
pub fn gram_schmidt(g: &DMatrix<f64>, vectors: &[DVector<f64>], eps: f64) -> Option<Vec<DVector<f64>>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for e in &out {
            let c = w.dot(&(g * e));
            w -= e * c;
        }
        let norm = w.dot(&(g * &w)).max(0.0).sqrt();
        if norm < eps {
            return None;
        }
        out.push(w / norm);
    }
    Some(out)
}
