//! Isometric immersions between charted manifolds.
//!
//! An immersion is given by its component maps in source coordinates. All
//! extrinsic quantities are computed pointwise from the symbolic Jacobian and
//! second partials: for source vectors `X`, `Y` extended with constant
//! coefficients, `∇̃_{dφX} dφY = ∂²φ(X,Y) + Γ̃(dφX, dφY)`, and `h(X,Y)` is its
//! normal part.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exprs::{diff, ScalarExpr, VarAssignment};
use crate::riemann::{ChartedManifold, LocalCurvature, TangentVector, VectorFieldExpr};

pub const ISOMETRY_TOLERANCE: f64 = 1e-8;
pub const NORMALITY_TOLERANCE: f64 = 1e-8;
pub const CLASSIFICATION_TOLERANCE: f64 = 1e-6;
const RANK_EPS: f64 = 1e-10;
const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ImmersionSpec {
    source: Arc<ChartedManifold>,
    target: Arc<ChartedManifold>,
    maps: Vec<ScalarExpr>,
    jacobian: Vec<Vec<ScalarExpr>>,
    second: Vec<Vec<Vec<ScalarExpr>>>,
}

/// Ambient vector at the image of a source point, checked to be normal.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalVector {
    pub point: Vec<f64>,
    pub components: Vec<f64>,
    pub verified: bool,
}

impl NormalVector {
    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.components)
    }
}

/// `h` in orthonormal tangent and normal frames at one point.
#[derive(Debug, Clone)]
pub struct SecondFundamentalSample {
    pub point: Vec<f64>,
    /// Source components of the tangent frame.
    pub tangent_frame: Vec<DVector<f64>>,
    /// Ambient components of the normal frame.
    pub normal_frame: Vec<DVector<f64>>,
    /// `h[a][b][r] = ⟨h(e_a, e_b), ξ_r⟩`.
    pub h: Vec<Vec<Vec<f64>>>,
}

impl SecondFundamentalSample {
    pub fn squared_norm(&self) -> f64 {
        self.h.iter().flatten().flatten().map(|v| v * v).sum()
    }
}

/// A normal vector field along the immersion, given in ambient components as
/// a function of source coordinates.
pub trait NormalField {
    fn eval(&self, p: &[f64]) -> Result<DVector<f64>>;

    /// Directional derivative of the ambient components along source vector `x`.
    fn derivative(&self, p: &[f64], x: &DVector<f64>) -> Result<DVector<f64>> {
        let at = |t: f64| -> Result<DVector<f64>> {
            let q: Vec<f64> = p.iter().zip(x.iter()).map(|(a, b)| a + t * b).collect();
            self.eval(&q)
        };
        let h = FD_STEP;
        Ok((at(-2.0 * h)? - at(-h)? * 8.0 + at(h)? * 8.0 - at(2.0 * h)?) / (12.0 * h))
    }
}

/// Normal field with symbolic ambient components; derivatives are exact.
#[derive(Debug, Clone)]
pub struct SymbolicNormalField {
    pub coords: Vec<String>,
    pub field: VectorFieldExpr,
}

impl NormalField for SymbolicNormalField {
    fn eval(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.field.eval(&VarAssignment::from_pairs(&self.coords, p))
    }

    fn derivative(&self, p: &[f64], x: &DVector<f64>) -> Result<DVector<f64>> {
        let a = VarAssignment::from_pairs(&self.coords, p);
        let mut out = DVector::zeros(self.field.dim());
        for (k, e) in self.field.components.iter().enumerate() {
            for (i, c) in self.coords.iter().enumerate() {
                if x[i] != 0.0 {
                    out[k] += x[i] * diff(e, c).eval(&a)?;
                }
            }
        }
        Ok(out)
    }
}

/// Normal field given by a closure; derivatives use a 5-point stencil.
pub struct FnNormalField<F>(pub F);

impl<F: Fn(&[f64]) -> Result<DVector<f64>>> NormalField for FnNormalField<F> {
    fn eval(&self, p: &[f64]) -> Result<DVector<f64>> {
        (self.0)(p)
    }
}

/// `∇̃_X η = −A_η X + D_X η`, all in ambient components.
#[derive(Debug, Clone)]
pub struct WeingartenSplit {
    pub ambient: DVector<f64>,
    pub tangential: DVector<f64>,
    pub normal: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Indeterminate,
}

impl Verdict {
    /// Yes below `tol`, no above `100·tol`, indeterminate in between.
    pub fn from_residual(residual: f64, tol: f64) -> Verdict {
        if residual <= tol {
            Verdict::Yes
        } else if residual >= 100.0 * tol {
            Verdict::No
        } else {
            Verdict::Indeterminate
        }
    }

    /// Combines per-point verdicts of a property that must hold everywhere.
    pub fn all(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Yes;
        for v in vs {
            match v {
                Verdict::No => return Verdict::No,
                Verdict::Indeterminate => out = Verdict::Indeterminate,
                Verdict::Yes => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flag {
    pub verdict: Verdict,
    pub max_residual: f64,
}

impl Flag {
    fn from_residuals(rs: &[f64], tol: f64) -> Flag {
        let max_residual = rs.iter().copied().fold(0.0, f64::max);
        Flag { verdict: Verdict::all(rs.iter().map(|r| Verdict::from_residual(*r, tol))), max_residual }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub totally_geodesic: Flag,
    pub totally_umbilical: Flag,
    pub minimal: Flag,
}

/// Everything needed for extrinsic computations at one source point.
#[derive(Debug, Clone)]
pub struct ImmersionPoint {
    pub point: Vec<f64>,
    pub image: Vec<f64>,
    /// `J[k][i] = ∂_i φ^k`.
    pub jacobian: DMatrix<f64>,
    /// `second[k][(i, j)] = ∂_i∂_j φ^k`.
    pub second: Vec<DMatrix<f64>>,
    pub source: LocalCurvature,
    pub target: LocalCurvature,
    /// Pullback `JᵀGJ` of the target metric.
    pub induced: DMatrix<f64>,
    induced_inverse: DMatrix<f64>,
    pub tangent_frame: Vec<DVector<f64>>,
    pub normal_frame: Vec<DVector<f64>>,
}

impl ImmersionPoint {
    pub fn n(&self) -> usize {
        self.jacobian.ncols()
    }

    pub fn m(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn push(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * x
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.target.connection.inner(u, v)
    }

    pub fn source_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.source.connection.inner(x, y)
    }

    pub fn isometry_residual(&self) -> f64 {
        (&self.induced - &self.source.connection.metric).amax()
    }

    /// Source components of the tangential part of an ambient vector.
    pub fn tangent_coefficients(&self, v: &DVector<f64>) -> DVector<f64> {
        let rhs = self.jacobian.transpose() * (&self.target.connection.metric * v);
        &self.induced_inverse * rhs
    }

    pub fn tangent_part(&self, v: &DVector<f64>) -> DVector<f64> {
        self.push(&self.tangent_coefficients(v))
    }

    pub fn normal_part(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.tangent_part(v)
    }

    /// `∇̃_{dφX} dφY` for constant-coefficient extensions of `X`, `Y`.
    pub fn ambient_derivative(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let (px, py) = (self.push(x), self.push(y));
        let mut out = self.target.connection.gamma.contract(&px, &py);
        for (k, s) in self.second.iter().enumerate() {
            out[k] += x.dot(&(s * y));
        }
        out
    }

    pub fn h(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.normal_part(&self.ambient_derivative(x, y))
    }

    /// Induced connection `∇_X Y` (source components) from the Gauss formula.
    pub fn induced_connection(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.tangent_coefficients(&self.ambient_derivative(x, y))
    }

    pub fn mean_curvature(&self) -> DVector<f64> {
        self.mean_over(&self.tangent_frame)
    }

    /// `(1/k) Σ h(e_a, e_a)` over the given orthonormal vectors.
    pub fn mean_over(&self, frame: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for e in frame {
            out += self.h(e, e);
        }
        out / frame.len() as f64
    }

    pub fn sample(&self) -> SecondFundamentalSample {
        let h = self
            .tangent_frame
            .iter()
            .map(|a| {
                self.tangent_frame
                    .iter()
                    .map(|b| {
                        let v = self.h(a, b);
                        self.normal_frame.iter().map(|xi| self.inner(&v, xi)).collect()
                    })
                    .collect()
            })
            .collect();
        SecondFundamentalSample {
            point: self.point.clone(),
            tangent_frame: self.tangent_frame.clone(),
            normal_frame: self.normal_frame.clone(),
            h,
        }
    }

    /// Largest `|⟨η, dφ e_a⟩|` over the tangent frame.
    pub fn tangential_residual(&self, eta: &DVector<f64>) -> f64 {
        self.tangent_frame.iter().map(|e| self.inner(eta, &self.push(e)).abs()).fold(0.0, f64::max)
    }

    pub fn check_normal(&self, eta: &DVector<f64>) -> Result<()> {
        let r = self.tangential_residual(eta);
        if r > NORMALITY_TOLERANCE * self.inner(eta, eta).sqrt().max(1.0) {
            return Err(Error::NotNormal(r));
        }
        Ok(())
    }

    /// `A_η` in the orthonormal tangent frame.
    pub fn shape_operator_matrix(&self, eta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_normal(eta)?;
        let n = self.n();
        let f = &self.tangent_frame;
        Ok(DMatrix::from_fn(n, n, |a, b| self.inner(&self.h(&f[a], &f[b]), eta)))
    }

    /// `A_η X` in source components, from `⟨A_η X, e_a⟩ = ⟨h(X, e_a), η⟩`.
    pub fn shape_operator_apply(&self, eta: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_normal(eta)?;
        let mut out = DVector::zeros(self.n());
        for e in &self.tangent_frame {
            out += e * self.inner(&self.h(x, e), eta);
        }
        Ok(out)
    }

    /// `∇̃_X η` split into tangential and normal parts.
    pub fn weingarten(&self, x: &DVector<f64>, field: &dyn NormalField) -> Result<WeingartenSplit> {
        let eta = field.eval(&self.point)?;
        self.check_normal(&eta)?;
        let ambient = field.derivative(&self.point, x)? + self.target.connection.gamma.contract(&self.push(x), &eta);
        let tangential = self.tangent_part(&ambient);
        let normal = &ambient - &tangential;
        Ok(WeingartenSplit { ambient, tangential, normal })
    }

    fn ambient_riemann(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let (px, py, pz, pw) = (self.push(x), self.push(y), self.push(z), self.push(w));
        self.inner(&self.target.apply(&px, &py, &pz), &pw)
    }

    fn gauss_h_terms(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        self.inner(&self.h(x, z), &self.h(y, w)) - self.inner(&self.h(x, w), &self.h(y, z))
    }

    /// `⟨R̃(X,Y)Z,W⟩ − ⟨R(X,Y)Z,W⟩ − ⟨h(X,Z),h(Y,W)⟩ + ⟨h(X,W),h(Y,Z)⟩`.
    pub fn gauss_residual(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let intrinsic = self.source_inner(&self.source.apply(x, y, z), w);
        (self.ambient_riemann(x, y, z, w) - intrinsic - self.gauss_h_terms(x, y, z, w)).abs()
    }

    /// Gauss residual with `R̃ = c·(X∧Y)` substituted for the ambient curvature.
    pub fn gauss_residual_space_form(&self, c: f64, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let g = |a: &DVector<f64>, b: &DVector<f64>| self.source_inner(a, b);
        let ambient = c * (g(y, z) * g(x, w) - g(x, z) * g(y, w));
        let intrinsic = self.source_inner(&self.source.apply(x, y, z), w);
        (ambient - intrinsic - self.gauss_h_terms(x, y, z, w)).abs()
    }

    /// Largest `‖A_ξ − (tr A_ξ / n) I‖_F` over the normal frame.
    pub fn umbilicity_residual(&self) -> f64 {
        let n = self.n() as f64;
        self.normal_frame
            .iter()
            .map(|xi| {
                let a = self.shape_operator_matrix(xi).expect("frame vectors are normal");
                let lambda = a.trace() / n;
                (a - DMatrix::identity(self.n(), self.n()) * lambda).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn geodesy_residual(&self) -> f64 {
        self.sample().squared_norm().sqrt()
    }
}

/// Orthonormalizes `vectors` in `g`, skipping any that are dependent on the
/// ones already accepted.
pub fn gram_schmidt_skip(g: &DMatrix<f64>, seed: &[DVector<f64>], vectors: &[DVector<f64>], eps: f64) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = seed.to_vec();
    let mut out = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for e in &basis {
                let c = e.dot(&(g * &w));
                w -= e * c;
            }
        }
        let norm = w.dot(&(g * &w)).sqrt();
        if norm > eps * v.dot(&(g * v)).sqrt().max(1.0) {
            let e = w / norm;
            basis.push(e.clone());
            out.push(e);
        }
    }
    out
}

impl ImmersionSpec {
    pub fn new(source: Arc<ChartedManifold>, target: Arc<ChartedManifold>, maps: Vec<ScalarExpr>) -> Result<Self> {
        if maps.len() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), found: maps.len() });
        }
        if target.dim() < source.dim() {
            return Err(Error::Invalid(format!(
                "cannot immerse `{}` (dimension {}) into `{}` (dimension {})",
                source.name(),
                source.dim(),
                target.name(),
                target.dim()
            )));
        }
        for e in &maps {
            if let Some(v) = e.free_vars().into_iter().find(|v| !source.coords().contains(v)) {
                return Err(Error::Invalid(format!("map component uses `{v}`, which is not a coordinate of `{}`", source.name())));
            }
        }
        let jacobian: Vec<Vec<ScalarExpr>> = maps.iter().map(|e| source.coords().iter().map(|c| diff(e, c)).collect()).collect();
        let second =
            jacobian.iter().map(|row| row.iter().map(|d| source.coords().iter().map(|c| diff(d, c)).collect()).collect()).collect();
        Ok(ImmersionSpec { source, target, maps, jacobian, second })
    }

    pub fn source(&self) -> &Arc<ChartedManifold> {
        &self.source
    }

    pub fn target(&self) -> &Arc<ChartedManifold> {
        &self.target
    }

    pub fn maps(&self) -> &[ScalarExpr] {
        &self.maps
    }

    pub fn image(&self, p: &[f64]) -> Result<Vec<f64>> {
        let a = self.source.assignment(p);
        self.maps.iter().map(|e| e.eval(&a)).collect()
    }

    pub fn jacobian_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        if p.len() != self.source.dim() {
            return Err(Error::DimensionMismatch { expected: self.source.dim(), found: p.len() });
        }
        let a = self.source.assignment(p);
        let (m, n) = (self.target.dim(), self.source.dim());
        let mut j = DMatrix::zeros(m, n);
        for k in 0..m {
            for i in 0..n {
                j[(k, i)] = self.jacobian[k][i].eval(&a)?;
            }
        }
        let sv = j.clone().svd(false, false).singular_values;
        let (lo, hi) = (sv.min(), sv.max());
        if lo <= RANK_EPS * hi.max(1.0) {
            return Err(Error::RankDeficient);
        }
        Ok(j)
    }

    /// Evaluates all pointwise data; does not require isometry.
    pub fn at(&self, p: &[f64]) -> Result<ImmersionPoint> {
        let jacobian = self.jacobian_at(p)?;
        let a = self.source.assignment(p);
        let (m, n) = (self.target.dim(), self.source.dim());
        let mut second = Vec::with_capacity(m);
        for k in 0..m {
            let mut s = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = self.second[k][i][j].eval(&a)?;
                    s[(i, j)] = v;
                    s[(j, i)] = v;
                }
            }
            second.push(s);
        }
        let image = self.image(p)?;
        let target = self.target.curvature_at(&image)?;
        let source = self.source.curvature_at(p)?;
        let induced = jacobian.transpose() * &target.connection.metric * &jacobian;
        let induced_inverse = induced.clone().try_inverse().ok_or(Error::RankDeficient)?;
        let coord = |d: usize, i: usize| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            e
        };
        let tangent_frame = gram_schmidt_skip(&induced, &[], &(0..n).map(|i| coord(n, i)).collect::<Vec<_>>(), 1e-12);
        let pushed: Vec<DVector<f64>> = tangent_frame.iter().map(|e| &jacobian * e).collect();
        let normal_frame = gram_schmidt_skip(&target.connection.metric, &pushed, &(0..m).map(|i| coord(m, i)).collect::<Vec<_>>(), 1e-8);
        Ok(ImmersionPoint {
            point: p.to_vec(),
            image,
            jacobian,
            second,
            source,
            target,
            induced,
            induced_inverse,
            tangent_frame,
            normal_frame,
        })
    }

    /// Like [`ImmersionSpec::at`] but rejects points where the pullback
    /// metric deviates from the source metric.
    pub fn checked_at(&self, p: &[f64]) -> Result<ImmersionPoint> {
        let ip = self.at(p)?;
        let r = ip.isometry_residual();
        if r > ISOMETRY_TOLERANCE * (1.0 + ip.source.connection.metric.amax()) {
            return Err(Error::IsometryViolation(r));
        }
        Ok(ip)
    }

    pub fn pushforward(&self, p: &[f64], x: &TangentVector) -> Result<TangentVector> {
        if x.dim() != self.source.dim() {
            return Err(Error::DimensionMismatch { expected: self.source.dim(), found: x.dim() });
        }
        let j = self.jacobian_at(p)?;
        Ok(TangentVector::from_dvector(&self.image(p)?, &(j * x.to_dvector())))
    }

    /// `max |(JᵀGJ − g)_ij|` at `p`.
    pub fn isometry_residual(&self, p: &[f64]) -> Result<f64> {
        let j = self.jacobian_at(p)?;
        let g = self.target.metric_at(&self.image(p)?)?;
        Ok((j.transpose() * g * j - self.source.metric_at(p)?).amax())
    }

    fn normal(&self, ip: &ImmersionPoint, v: DVector<f64>) -> NormalVector {
        NormalVector { point: ip.point.clone(), components: v.iter().copied().collect(), verified: true }
    }

    pub fn second_fundamental_form(&self, p: &[f64], x: &TangentVector, y: &TangentVector) -> Result<NormalVector> {
        let ip = self.checked_at(p)?;
        Ok(self.normal(&ip, ip.h(&x.to_dvector(), &y.to_dvector())))
    }

    pub fn second_fundamental_sample(&self, p: &[f64]) -> Result<SecondFundamentalSample> {
        Ok(self.checked_at(p)?.sample())
    }

    /// Wraps ambient components as a normal vector, rejecting tangential input.
    pub fn normal_vector(&self, p: &[f64], components: &[f64]) -> Result<NormalVector> {
        let ip = self.at(p)?;
        let v = DVector::from_column_slice(components);
        ip.check_normal(&v)?;
        Ok(self.normal(&ip, v))
    }

    pub fn shape_operator(&self, p: &[f64], eta: &NormalVector) -> Result<DMatrix<f64>> {
        self.checked_at(p)?.shape_operator_matrix(&eta.to_dvector())
    }

    pub fn normal_connection(&self, p: &[f64], x: &TangentVector, eta: &dyn NormalField) -> Result<NormalVector> {
        let ip = self.checked_at(p)?;
        let split = ip.weingarten(&x.to_dvector(), eta)?;
        Ok(self.normal(&ip, split.normal))
    }

    pub fn mean_curvature(&self, p: &[f64]) -> Result<NormalVector> {
        let ip = self.checked_at(p)?;
        Ok(self.normal(&ip, ip.mean_curvature()))
    }

    pub fn gauss_equation_residual(
        &self,
        p: &[f64],
        x: &TangentVector,
        y: &TangentVector,
        z: &TangentVector,
        w: &TangentVector,
    ) -> Result<f64> {
        let ip = self.checked_at(p)?;
        Ok(ip.gauss_residual(&x.to_dvector(), &y.to_dvector(), &z.to_dvector(), &w.to_dvector()))
    }

    pub fn gauss_equation_residual_space_form(
        &self,
        p: &[f64],
        c: f64,
        x: &TangentVector,
        y: &TangentVector,
        z: &TangentVector,
        w: &TangentVector,
    ) -> Result<f64> {
        let ip = self.checked_at(p)?;
        Ok(ip.gauss_residual_space_form(c, &x.to_dvector(), &y.to_dvector(), &z.to_dvector(), &w.to_dvector()))
    }

    /// Largest Gauss residual over all frame quadruples at `p`.
    pub fn gauss_frame_residual(&self, p: &[f64]) -> Result<f64> {
        let ip = self.checked_at(p)?;
        let f = &ip.tangent_frame;
        let mut worst: f64 = 0.0;
        for x in f {
            for y in f {
                for z in f {
                    for w in f {
                        worst = worst.max(ip.gauss_residual(x, y, z, w));
                    }
                }
            }
        }
        Ok(worst)
    }

    pub fn classify(&self, points: &[Vec<f64>], tol: f64) -> Result<Classification> {
        if points.len() < 8 {
            return Err(Error::Invalid(format!("classification needs at least 8 sample points, got {}", points.len())));
        }
        let (mut tg, mut tu, mut min) = (Vec::new(), Vec::new(), Vec::new());
        for p in points {
            let ip = self.checked_at(p)?;
            tg.push(ip.geodesy_residual());
            tu.push(ip.umbilicity_residual());
            min.push(ip.inner(&ip.mean_curvature(), &ip.mean_curvature()).sqrt());
        }
        Ok(Classification {
            totally_geodesic: Flag::from_residuals(&tg, tol),
            totally_umbilical: Flag::from_residuals(&tu, tol),
            minimal: Flag::from_residuals(&min, tol),
        })
    }
}
