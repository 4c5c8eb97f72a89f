//! Immersions `φ = φ₁ × φ₂` of a doubly warped product `N₁ ×_{(f₂,f₁)} N₂`
//! into a doubly warped product `M₁ ×_{(ρ₂,ρ₁)} M₂` with `f_i = ρ_i ∘ φ_i`.
//!
//! Each check computes the composite second fundamental form directly and
//! compares it with the corresponding expression in factor data:
//!
//! * `h(X,Z) = 0` for `X ∈ D₁`, `Z ∈ D₂`;
//! * `h(X,Y) = h⁰(X,Y) − g(X,Y) D ln ρ₂` on `D₁` and the mirror on `D₂`;
//! * shape operators and normal connection of factor-aligned normals;
//! * `⟨H₁,H₂⟩` and `A_{H_i}` in terms of leaf Laplacians and Hessians when
//!   the ambient has constant curvature `c`.
//!
//! Here `D ln ρ_i` is the normal part of the ambient gradient of `ln ρ_i`,
//! and `h⁰` is the second fundamental form of `φ₁ × φ₂` between the direct
//! products.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::dwp::{build_dwp, grid_points, DoublyWarpedProduct, Factor, WarpedPoint};
use crate::error::{Error, Result};
use crate::exprs::ScalarExpr;
use crate::riemann::{ChartedManifold, TangentVector};
use crate::submanifold::{Flag, FnNormalField, ImmersionPoint, ImmersionSpec, NormalField, NormalVector, Verdict};

pub const SPACE_FORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DwpImmersionScenario {
    pub phi1: ImmersionSpec,
    pub phi2: ImmersionSpec,
    pub ambient: DoublyWarpedProduct,
    /// Source product with `f_i = ρ_i ∘ φ_i`.
    pub source: DoublyWarpedProduct,
    /// `(x₁, x₂) ↦ (φ₁x₁, φ₂x₂)` between the product charts.
    pub composite: ImmersionSpec,
    pub c: Option<f64>,
}

fn same_manifold(a: &ChartedManifold, b: &ChartedManifold) -> bool {
    a.name() == b.name() && a.coords() == b.coords()
}

fn compose(rho: &ScalarExpr, phi: &ImmersionSpec) -> ScalarExpr {
    let map: BTreeMap<String, ScalarExpr> = phi.target().coords().iter().cloned().zip(phi.maps().iter().cloned()).collect();
    rho.substitute(&map)
}

/// Interior grid used for construction-time validation.
pub fn validation_points(m: &ChartedManifold) -> Vec<Vec<f64>> {
    let shrunk: Vec<(f64, f64)> = m
        .bounds()
        .iter()
        .map(|(lo, hi)| {
            let pad = 0.05 * (hi - lo);
            (lo + pad, hi - pad)
        })
        .collect();
    let per_dim = if m.dim() <= 2 { 3 } else { 2 };
    grid_points(&shrunk, per_dim)
}

/// Assembles a scenario without checking isometry or the space-form claim.
pub fn build_scenario(
    phi1: ImmersionSpec,
    phi2: ImmersionSpec,
    ambient: DoublyWarpedProduct,
    c: Option<f64>,
) -> Result<DwpImmersionScenario> {
    for (phi, f, label) in [(&phi1, Factor::First, "phi1"), (&phi2, Factor::Second, "phi2")] {
        if !same_manifold(phi.target(), ambient.factor(f)) {
            return Err(Error::Invalid(format!(
                "{label} maps into `{}` but ambient factor {} is `{}`",
                phi.target().name(),
                f.index(),
                ambient.factor(f).name()
            )));
        }
    }
    let f1 = compose(ambient.warp(Factor::First), &phi1);
    let f2 = compose(ambient.warp(Factor::Second), &phi2);
    let source = build_dwp(phi1.source().clone(), phi2.source().clone(), f1, f2)?;
    let maps = phi1.maps().iter().chain(phi2.maps()).cloned().collect();
    let composite = ImmersionSpec::new(source.product().clone(), ambient.product().clone(), maps)?;
    Ok(DwpImmersionScenario { phi1, phi2, ambient, source, composite, c })
}

/// Assembles and validates a scenario on an interior grid.
pub fn compose_scenario(
    phi1: ImmersionSpec,
    phi2: ImmersionSpec,
    ambient: DoublyWarpedProduct,
    c: Option<f64>,
) -> Result<DwpImmersionScenario> {
    let s = build_scenario(phi1, phi2, ambient, c)?;
    let points = validation_points(s.source.product());
    s.validate(&points)?;
    Ok(s)
}

/// Outcome of an "if and only if" check: the composite side and the factor
/// side are evaluated separately and must reach the same verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biconditional {
    pub direct: Flag,
    pub factor_side: Flag,
}

impl Biconditional {
    pub fn agree(&self) -> bool {
        self.direct.verdict == self.factor_side.verdict
    }
}

fn flag(residuals: &[f64], tol: f64) -> Flag {
    Flag {
        verdict: Verdict::all(residuals.iter().map(|r| Verdict::from_residual(*r, tol))),
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HDecomposition {
    /// Largest `‖h(X,Z)‖` over `D₁ × D₂` frame pairs.
    pub mixed: f64,
    /// Largest `‖h − h⁰ + g D ln ρ₂‖` over `D₁` frame pairs.
    pub first: f64,
    /// Largest `‖h − h⁰ + g D ln ρ₁‖` over `D₂` frame pairs.
    pub second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormIdentity {
    pub h_squared: f64,
    pub h0_squared: f64,
    /// `n₁‖D ln ρ₂‖² + n₂‖D ln ρ₁‖²`.
    pub bound: f64,
    /// `|‖h‖² − ‖h⁰‖² − bound| / (1 + ‖h‖²)`.
    pub relative_residual: f64,
    pub equality: bool,
    pub factors_totally_geodesic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimalityRelations {
    pub mean_curvature: f64,
    /// `max_i ‖H^{φ_i} − (n_j/n_i) f_j² D ln ρ_i‖`.
    pub factor_relation: f64,
    /// Same relation with `f_i²` in place of `f_j²`.
    pub factor_relation_swapped: f64,
    /// `‖tr h¹/f₂² + tr h²/f₁² − n₁ D ln ρ₂ − n₂ D ln ρ₁ − nH‖`.
    pub trace_identity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialMeanProduct {
    pub inner: f64,
    pub laplacian_term1: f64,
    pub laplacian_term2: f64,
    pub c: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormResidual {
    pub shape_operator: f64,
    pub normal_connection: f64,
}

/// Pointwise data of a scenario.
#[derive(Debug, Clone)]
pub struct ScenarioPoint {
    pub point: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    pub ip: ImmersionPoint,
    pub ip1: ImmersionPoint,
    pub ip2: ImmersionPoint,
    pub ambient: WarpedPoint,
    pub source: WarpedPoint,
    /// Orthonormal frames of `D₁` and `D₂` in source product components.
    pub frame1: Vec<DVector<f64>>,
    pub frame2: Vec<DVector<f64>>,
    /// `D ln ρ₁`, `D ln ρ₂` in ambient product components.
    pub dlog_rho1: DVector<f64>,
    pub dlog_rho2: DVector<f64>,
}

fn pad_front(v: &DVector<f64>, before: usize, after: usize) -> DVector<f64> {
    let mut out = DVector::zeros(before + v.len() + after);
    out.rows_mut(before, v.len()).copy_from(v);
    out
}

impl ScenarioPoint {
    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn frame(&self, f: Factor) -> &[DVector<f64>] {
        match f {
            Factor::First => &self.frame1,
            Factor::Second => &self.frame2,
        }
    }

    pub fn dlog_rho(&self, f: Factor) -> &DVector<f64> {
        match f {
            Factor::First => &self.dlog_rho1,
            Factor::Second => &self.dlog_rho2,
        }
    }

    fn factor_ip(&self, f: Factor) -> &ImmersionPoint {
        match f {
            Factor::First => &self.ip1,
            Factor::Second => &self.ip2,
        }
    }

    fn ambient_dims(&self) -> (usize, usize) {
        (self.ip1.m(), self.ip2.m())
    }

    fn norm(&self, v: &DVector<f64>) -> f64 {
        self.ip.inner(v, v).max(0.0).sqrt()
    }

    fn block(&self, v: &DVector<f64>, f: Factor) -> DVector<f64> {
        match f {
            Factor::First => v.rows(0, self.n1).into_owned(),
            Factor::Second => v.rows(self.n1, self.n2).into_owned(),
        }
    }

    /// `h⁰(X,Y)` for `X, Y` in the same block, in ambient product components.
    pub fn h0(&self, x: &DVector<f64>, y: &DVector<f64>, f: Factor) -> DVector<f64> {
        let (m1, m2) = self.ambient_dims();
        let v = self.factor_ip(f).h(&self.block(x, f), &self.block(y, f));
        match f {
            Factor::First => pad_front(&v, 0, m2),
            Factor::Second => pad_front(&v, m1, 0),
        }
    }

    pub fn partial_mean_curvature(&self, f: Factor) -> DVector<f64> {
        self.ip.mean_over(self.frame(f))
    }

    pub fn mean_curvature(&self) -> DVector<f64> {
        let mut frame = self.frame1.clone();
        frame.extend(self.frame2.iter().cloned());
        self.ip.mean_over(&frame)
    }

    pub fn h_decomposition(&self) -> HDecomposition {
        let mut mixed: f64 = 0.0;
        for x in &self.frame1 {
            for z in &self.frame2 {
                mixed = mixed.max(self.norm(&self.ip.h(x, z)));
            }
        }
        let block = |f: Factor| {
            let d = self.dlog_rho(f.other());
            let mut worst: f64 = 0.0;
            for (a, x) in self.frame(f).iter().enumerate() {
                for (b, y) in self.frame(f).iter().enumerate() {
                    let g = if a == b { 1.0 } else { 0.0 };
                    let r = self.ip.h(x, y) - self.h0(x, y, f) + d * g;
                    worst = worst.max(self.norm(&r));
                }
            }
            worst
        };
        HDecomposition { mixed, first: block(Factor::First), second: block(Factor::Second) }
    }

    pub fn h_squared(&self) -> f64 {
        let mut frame = self.frame1.clone();
        frame.extend(self.frame2.iter().cloned());
        let mut s = 0.0;
        for x in &frame {
            for y in &frame {
                let v = self.ip.h(x, y);
                s += self.ip.inner(&v, &v);
            }
        }
        s
    }

    pub fn h0_squared(&self) -> f64 {
        let mut s = 0.0;
        for f in [Factor::First, Factor::Second] {
            for x in self.frame(f) {
                for y in self.frame(f) {
                    let v = self.h0(x, y, f);
                    s += self.ip.inner(&v, &v);
                }
            }
        }
        s
    }

    pub fn norm_identity(&self, tol: f64) -> NormIdentity {
        let h_squared = self.h_squared();
        let h0_squared = self.h0_squared();
        let d1 = self.norm(&self.dlog_rho1);
        let d2 = self.norm(&self.dlog_rho2);
        let bound = self.n1 as f64 * d2 * d2 + self.n2 as f64 * d1 * d1;
        let relative_residual = (h_squared - h0_squared - bound).abs() / (1.0 + h_squared);
        NormIdentity {
            h_squared,
            h0_squared,
            bound,
            relative_residual,
            equality: (h_squared - bound).abs() <= tol * (1.0 + h_squared),
            factors_totally_geodesic: self.ip1.geodesy_residual() <= tol && self.ip2.geodesy_residual() <= tol,
        }
    }

    /// `D^{(i)} ln ρ_i`: normal part, along `φ_i`, of the factor gradient of `ln ρ_i`.
    pub fn factor_dlog_rho(&self, f: Factor) -> DVector<f64> {
        let grad = match f {
            Factor::First => -&self.ambient.u1_factor,
            Factor::Second => -&self.ambient.u2_factor,
        };
        self.factor_ip(f).normal_part(&grad)
    }

    fn factor_norm(&self, f: Factor, v: &DVector<f64>) -> f64 {
        let ip = self.factor_ip(f);
        ip.inner(v, v).max(0.0).sqrt()
    }

    pub fn factor_mean_curvature(&self, f: Factor) -> DVector<f64> {
        self.factor_ip(f).mean_curvature()
    }

    /// Residual of "φ is `N_i`-totally geodesic", computed directly.
    pub fn ni_geodesy_direct(&self, f: Factor) -> f64 {
        let mut worst: f64 = 0.0;
        for x in self.frame(f) {
            for y in self.frame(f) {
                worst = worst.max(self.norm(&self.ip.h(x, y)));
            }
        }
        worst
    }

    /// Residual of "φ_i totally geodesic and `D ln ρ_j = 0`".
    pub fn ni_geodesy_factor_side(&self, f: Factor) -> f64 {
        self.factor_ip(f).geodesy_residual().max(self.norm(self.dlog_rho(f.other())))
    }

    pub fn umbilical_direct(&self) -> f64 {
        let formula = self.mean_curvature() + &self.dlog_rho1 + &self.dlog_rho2;
        self.ip.umbilicity_residual().max(self.norm(&formula))
    }

    pub fn umbilical_factor_side(&self) -> f64 {
        [Factor::First, Factor::Second]
            .iter()
            .map(|&f| {
                let ip = self.factor_ip(f);
                let rel = self.factor_mean_curvature(f) + self.factor_dlog_rho(f);
                ip.umbilicity_residual().max(self.factor_norm(f, &rel))
            })
            .fold(0.0, f64::max)
    }

    pub fn ni_minimal_direct(&self, f: Factor) -> f64 {
        self.norm(&self.partial_mean_curvature(f))
    }

    pub fn ni_minimal_factor_side(&self, f: Factor) -> f64 {
        self.factor_norm(f, &self.factor_mean_curvature(f)).max(self.norm(self.dlog_rho(f.other())))
    }

    fn warp_sq(&self, f: Factor) -> f64 {
        match f {
            Factor::First => self.source.f1 * self.source.f1,
            Factor::Second => self.source.f2 * self.source.f2,
        }
    }

    fn factor_relation(&self, f: Factor, swapped: bool) -> f64 {
        let (ni, nj) = match f {
            Factor::First => (self.n1 as f64, self.n2 as f64),
            Factor::Second => (self.n2 as f64, self.n1 as f64),
        };
        let w = if swapped { self.warp_sq(f) } else { self.warp_sq(f.other()) };
        let (m1, _) = self.ambient_dims();
        let d = self.dlog_rho(f);
        let d_block = match f {
            Factor::First => d.rows(0, m1).into_owned(),
            Factor::Second => d.rows(m1, d.len() - m1).into_owned(),
        };
        let rel = self.factor_mean_curvature(f) - d_block * (nj / ni * w);
        self.factor_norm(f, &rel)
    }

    pub fn minimality_relations(&self) -> MinimalityRelations {
        let h = self.mean_curvature();
        let (m1, m2) = self.ambient_dims();
        let tr1 = pad_front(&(self.factor_mean_curvature(Factor::First) * self.n1 as f64), 0, m2);
        let tr2 = pad_front(&(self.factor_mean_curvature(Factor::Second) * self.n2 as f64), m1, 0);
        let lhs = tr1 / self.warp_sq(Factor::Second) + tr2 / self.warp_sq(Factor::First)
            - &self.dlog_rho2 * self.n1 as f64
            - &self.dlog_rho1 * self.n2 as f64;
        MinimalityRelations {
            mean_curvature: self.norm(&h),
            factor_relation: self.factor_relation(Factor::First, false).max(self.factor_relation(Factor::Second, false)),
            factor_relation_swapped: self.factor_relation(Factor::First, true).max(self.factor_relation(Factor::Second, true)),
            trace_identity: self.norm(&(lhs - h * self.n() as f64)),
        }
    }
}

impl DwpImmersionScenario {
    pub fn dims(&self) -> (usize, usize) {
        self.source.dims()
    }

    /// Checks factor and composite isometry, `f_i = ρ_i ∘ φ_i`, and the
    /// declared curvature, at the given source product points.
    pub fn validate(&self, points: &[Vec<f64>]) -> Result<()> {
        for p in points {
            let (p1, p2) = self.source.split(p);
            for (phi, q) in [(&self.phi1, p1), (&self.phi2, p2)] {
                let r = phi.isometry_residual(q)?;
                if r > crate::submanifold::ISOMETRY_TOLERANCE * (1.0 + phi.source().metric_at(q)?.amax()) {
                    return Err(Error::IsometryViolation(r));
                }
            }
            let r = self.composite.isometry_residual(p)?;
            if r > crate::submanifold::ISOMETRY_TOLERANCE * (1.0 + self.source.product().metric_at(p)?.amax()) {
                return Err(Error::IsometryViolation(r));
            }
            let q = self.composite.image(p)?;
            for f in [Factor::First, Factor::Second] {
                let (a, b) = (self.source.warp_value(f, p)?, self.ambient.warp_value(f, &q)?);
                if (a - b).abs() > 1e-12 * (1.0 + b.abs()) {
                    return Err(Error::Invalid(format!("f{} differs from rho{} after composition", f.index(), f.index())));
                }
            }
        }
        if self.c.is_some() {
            let worst = self.space_form_residual(points)?;
            if worst > SPACE_FORM_TOLERANCE {
                return Err(Error::Hypothesis { tag: "space_form".into(), residual: worst });
            }
        }
        Ok(())
    }

    /// Largest `|R̃(e_i,e_j)e_k − c(g_jk e_i − g_ik e_j)|` over coordinate
    /// vectors at the images of `points`, normalized by the metric scale.
    pub fn space_form_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let c = self.c.ok_or(Error::SpaceFormUndeclared)?;
        let m = self.ambient.product().dim();
        let mut worst: f64 = 0.0;
        for p in points {
            let q = self.composite.image(p)?;
            let r = self.ambient.product().curvature_at(&q)?;
            let g = &r.connection.metric;
            let scale = 1.0 + g.amax();
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        for l in 0..m {
                            let expect = c * (if l == i { g[(j, k)] } else { 0.0 } - if l == j { g[(i, k)] } else { 0.0 });
                            worst = worst.max((r.component(l, i, j, k) - expect).abs() / scale);
                        }
                    }
                }
            }
        }
        Ok(worst)
    }

    pub fn at(&self, p: &[f64]) -> Result<ScenarioPoint> {
        let (p1, p2) = self.source.split(p);
        let ip = self.composite.checked_at(p)?;
        let ip1 = self.phi1.checked_at(p1)?;
        let ip2 = self.phi2.checked_at(p2)?;
        let ambient = self.ambient.at(&ip.image)?;
        let source = self.source.at(p)?;
        let (n1, n2) = self.dims();
        let frame1 = ip1.tangent_frame.iter().map(|e| pad_front(&(e / source.f2), 0, n2)).collect();
        let frame2 = ip2.tangent_frame.iter().map(|e| pad_front(&(e / source.f1), n1, 0)).collect();
        let dlog_rho1 = ip.normal_part(&-ambient.u(Factor::First));
        let dlog_rho2 = ip.normal_part(&-ambient.u(Factor::Second));
        Ok(ScenarioPoint { point: p.to_vec(), n1, n2, ip, ip1, ip2, ambient, source, frame1, frame2, dlog_rho1, dlog_rho2 })
    }

    pub fn partial_mean_curvature(&self, f: Factor, p: &[f64]) -> Result<NormalVector> {
        let sp = self.at(p)?;
        let v = sp.partial_mean_curvature(f);
        Ok(NormalVector { point: p.to_vec(), components: v.iter().copied().collect(), verified: true })
    }

    pub fn h_decomposition_check(&self, p: &[f64]) -> Result<HDecomposition> {
        Ok(self.at(p)?.h_decomposition())
    }

    pub fn norm_identity_check(&self, p: &[f64], tol: f64) -> Result<NormIdentity> {
        Ok(self.at(p)?.norm_identity(tol))
    }

    fn biconditional(
        &self,
        points: &[Vec<f64>],
        tol: f64,
        direct: impl Fn(&ScenarioPoint) -> f64,
        factor_side: impl Fn(&ScenarioPoint) -> f64,
    ) -> Result<Biconditional> {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for p in points {
            let sp = self.at(p)?;
            a.push(direct(&sp));
            b.push(factor_side(&sp));
        }
        Ok(Biconditional { direct: flag(&a, tol), factor_side: flag(&b, tol) })
    }

    /// `N_i`-total geodesy versus "φ_i totally geodesic and `D ln ρ_j = 0`".
    pub fn ni_geodesy_check(&self, f: Factor, points: &[Vec<f64>], tol: f64) -> Result<Biconditional> {
        self.biconditional(points, tol, |sp| sp.ni_geodesy_direct(f), |sp| sp.ni_geodesy_factor_side(f))
    }

    /// Total geodesy of φ versus `N₁`- and `N₂`-total geodesy.
    pub fn total_geodesy_check(&self, points: &[Vec<f64>], tol: f64) -> Result<Biconditional> {
        self.biconditional(
            points,
            tol,
            |sp| sp.ip.geodesy_residual(),
            |sp| sp.ni_geodesy_direct(Factor::First).max(sp.ni_geodesy_direct(Factor::Second)),
        )
    }

    pub fn umbilical_check(&self, points: &[Vec<f64>], tol: f64) -> Result<Biconditional> {
        self.biconditional(points, tol, |sp| sp.umbilical_direct(), |sp| sp.umbilical_factor_side())
    }

    /// `N_i`-minimality versus "φ_i minimal and `D ln ρ_j = 0`".
    pub fn ni_minimality_check(&self, f: Factor, points: &[Vec<f64>], tol: f64) -> Result<Biconditional> {
        self.biconditional(points, tol, |sp| sp.ni_minimal_direct(f), |sp| sp.ni_minimal_factor_side(f))
    }

    /// Minimality of φ versus the factor mean-curvature relations.
    pub fn minimality_check(&self, points: &[Vec<f64>], tol: f64) -> Result<Biconditional> {
        self.biconditional(points, tol, |sp| sp.minimality_relations().mean_curvature, |sp| sp.minimality_relations().factor_relation)
    }

    /// Paper-sign Laplacian of `f_i` on the leaf through `p`, whose metric is `f_j² g_i`.
    pub fn leaf_laplacian(&self, f: Factor, p: &[f64]) -> Result<f64> {
        let (p1, p2) = self.source.split(p);
        let (m, q) = match f {
            Factor::First => (self.phi1.source(), p1),
            Factor::Second => (self.phi2.source(), p2),
        };
        let lap = m.laplacian(self.source.warp(f), q)?;
        let other = self.source.warp_value(f.other(), p)?;
        Ok(lap / (other * other))
    }

    fn require_c(&self) -> Result<f64> {
        self.c.ok_or(Error::SpaceFormUndeclared)
    }

    /// `⟨H₁,H₂⟩` against `Δ¹f₁/(n₁f₁) + Δ²f₂/(n₂f₂) − c`.
    pub fn h1_dot_h2_check(&self, p: &[f64]) -> Result<PartialMeanProduct> {
        let c = self.require_c()?;
        let sp = self.at(p)?;
        let inner = sp.ip.inner(&sp.partial_mean_curvature(Factor::First), &sp.partial_mean_curvature(Factor::Second));
        let laplacian_term1 = self.leaf_laplacian(Factor::First, p)? / (sp.n1 as f64 * sp.source.f1);
        let laplacian_term2 = self.leaf_laplacian(Factor::Second, p)? / (sp.n2 as f64 * sp.source.f2);
        let residual = (inner - laplacian_term1 - laplacian_term2 + c).abs();
        Ok(PartialMeanProduct { inner, laplacian_term1, laplacian_term2, c, residual })
    }

    /// `A_{H₁}Z = −𝓗^{f₂}(Z)/f₂ + (Δ¹f₁/(n₁f₁) − c)Z` on `D₂` and the mirror on
    /// `D₁`, where `𝓗^{f}` is the Hessian operator of `f` restricted to the
    /// distribution. Returns the largest residual per side.
    pub fn a_h_closed_form_check(&self, p: &[f64]) -> Result<(f64, f64)> {
        let c = self.require_c()?;
        let sp = self.at(p)?;
        let g = |x: &DVector<f64>, y: &DVector<f64>| sp.source.inner(x, y);
        let mut out = [0.0f64; 2];
        for (slot, f) in [Factor::First, Factor::Second].into_iter().enumerate() {
            let h_i = sp.partial_mean_curvature(f);
            let other = f.other();
            let hess = self.source.product().hessian_matrix(self.source.warp(other), p)?;
            let warp_other = self.source.warp_value(other, p)?;
            let ni = if f == Factor::First { sp.n1 } else { sp.n2 } as f64;
            let lap_term = self.leaf_laplacian(f, p)? / (ni * self.source.warp_value(f, p)?);
            for z in sp.frame(other) {
                let direct = sp.ip.shape_operator_apply(&h_i, z)?;
                let mut hz = DVector::zeros(z.len());
                for w in sp.frame(other) {
                    hz += w * z.dot(&(&hess * w));
                }
                let closed = -hz / warp_other + z * (lap_term - c);
                let d = direct - closed;
                out[slot] = out[slot].max(g(&d, &d).max(0.0).sqrt());
            }
        }
        Ok((out[0], out[1]))
    }

    /// Factor normal field `s(x)·ξ(x)` along `φ_i`, with `ξ` the `k`-th normal
    /// frame vector and `s` a non-constant scale.
    fn factor_normal(&self, f: Factor, k: usize) -> impl Fn(&[f64]) -> Result<DVector<f64>> + '_ {
        let phi = match f {
            Factor::First => &self.phi1,
            Factor::Second => &self.phi2,
        };
        move |q: &[f64]| {
            let ip = phi.at(q)?;
            let xi = ip.normal_frame.get(k).ok_or_else(|| Error::Invalid("factor immersion has no such normal".into()))?;
            let s = 1.0 + 0.25 * q.iter().sum::<f64>().sin();
            Ok(xi * s)
        }
    }

    fn lift_normal(&self, f: Factor, v: &DVector<f64>) -> DVector<f64> {
        let (m1, m2) = (self.phi1.target().dim(), self.phi2.target().dim());
        match f {
            Factor::First => pad_front(v, 0, m2),
            Factor::Second => pad_front(v, m1, 0),
        }
    }

    /// Closed-form `A_η X` (source components) and `D_X η` (ambient components)
    /// for the lift of the `k`-th scaled factor normal of `φ_i`.
    pub fn shape_operator_closed_form(&self, p: &[f64], f: Factor, k: usize, x: &TangentVector) -> Result<(TangentVector, NormalVector)> {
        let sp = self.at(p)?;
        let (p1, p2) = self.source.split(p);
        let q_own = if f == Factor::First { p1 } else { p2 };
        let field = FnNormalField(self.factor_normal(f, k));
        let eta = field.eval(q_own)?;
        let xv = x.to_dvector();
        let x_own = sp.block(&xv, f);
        let ipf = sp.factor_ip(f);
        let a0 = ipf.shape_operator_apply(&eta, &x_own)?;
        let d0 = ipf.weingarten(&x_own, &field)?.normal;
        // η(ln ρ_i) and X_j(ln ρ_j), from factor gradients
        let (grad_own, grad_other, ip_other) = match f {
            Factor::First => (-&sp.ambient.u1_factor, -&sp.ambient.u2_factor, &sp.ip2),
            Factor::Second => (-&sp.ambient.u2_factor, -&sp.ambient.u1_factor, &sp.ip1),
        };
        let eta_log = ipf.inner(&eta, &grad_own);
        let x_other = sp.block(&xv, f.other());
        let x_log = ip_other.inner(&ip_other.push(&x_other), &grad_other);
        let (n1, n2) = (sp.n1, sp.n2);
        let (a_own, a_other) = match f {
            Factor::First => (pad_front(&a0, 0, n2), pad_front(&x_other, n1, 0)),
            Factor::Second => (pad_front(&a0, n1, 0), pad_front(&x_other, 0, n2)),
        };
        let a = a_own - a_other * eta_log;
        let d = self.lift_normal(f, &(d0 + &eta * x_log));
        Ok((
            TangentVector::from_dvector(p, &a),
            NormalVector { point: p.to_vec(), components: d.iter().copied().collect(), verified: true },
        ))
    }

    /// Closed forms against the composite Weingarten formula for every
    /// factor-aligned scaled normal and every frame vector at `p`.
    /// `None` when neither factor immersion has a normal direction.
    pub fn shape_operator_closed_form_check(&self, p: &[f64]) -> Result<Option<ClosedFormResidual>> {
        let sp = self.at(p)?;
        let mut frame = sp.frame1.clone();
        frame.extend(sp.frame2.iter().cloned());
        let mut out: Option<ClosedFormResidual> = None;
        for f in [Factor::First, Factor::Second] {
            for k in 0..sp.factor_ip(f).normal_frame.len() {
                let factor_field = self.factor_normal(f, k);
                let composite = FnNormalField(|q: &[f64]| {
                    let (q1, q2) = self.source.split(q);
                    let own = if f == Factor::First { q1 } else { q2 };
                    Ok(self.lift_normal(f, &factor_field(own)?))
                });
                let eta = composite.eval(p)?;
                for x in &frame {
                    let (a, d) = self.shape_operator_closed_form(p, f, k, &TangentVector::from_dvector(p, x))?;
                    let direct_a = sp.ip.shape_operator_apply(&eta, x)?;
                    let direct_d = sp.ip.weingarten(x, &composite)?.normal;
                    let ra = a.to_dvector() - direct_a;
                    let rd = d.to_dvector() - direct_d;
                    let r = out.get_or_insert(ClosedFormResidual { shape_operator: 0.0, normal_connection: 0.0 });
                    r.shape_operator = r.shape_operator.max(sp.source.inner(&ra, &ra).max(0.0).sqrt());
                    r.normal_connection = r.normal_connection.max(sp.norm(&rd));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::exprs::parse;

    fn m(name: &str, coords: &[&str], diag: &[&str], bounds: &[(f64, f64)]) -> Arc<ChartedManifold> {
        Arc::new(ChartedManifold::diagonal(name, coords, diag, bounds).unwrap())
    }

    fn imm(src: &Arc<ChartedManifold>, tgt: &Arc<ChartedManifold>, maps: &[&str]) -> ImmersionSpec {
        ImmersionSpec::new(src.clone(), tgt.clone(), maps.iter().map(|s| parse(s).unwrap()).collect()).unwrap()
    }

    fn catenoid() -> DwpImmersionScenario {
        let half = m("H", &["t", "z"], &["1", "1"], &[(0.5, 3.0), (-2.0, 2.0)]);
        let circle = m("S", &["v"], &["1"], &[(-3.0, 3.0)]);
        let ambient = build_dwp(half.clone(), circle.clone(), parse("t").unwrap(), parse("1").unwrap()).unwrap();
        let profile = m("P", &["u"], &["1"], &[(-1.2, 1.2)]);
        let leaf = m("L", &["w"], &["1"], &[(-3.0, 3.0)]);
        let phi1 = imm(&profile, &half, &["sqrt(1 + u^2)", "log(u + sqrt(1 + u^2))"]);
        let phi2 = imm(&leaf, &circle, &["w"]);
        compose_scenario(phi1, phi2, ambient, Some(0.0)).unwrap()
    }

    fn generic() -> DwpImmersionScenario {
        let m1 = m("M1", &["a", "b"], &["1 + b^2", "1"], &[(-1.0, 2.0), (-1.0, 2.0)]);
        let m2 = m("M2", &["c", "d"], &["1", "exp(c)"], &[(-1.0, 2.0), (-1.0, 2.0)]);
        let ambient = build_dwp(m1.clone(), m2.clone(), parse("2 + a + b^2/2").unwrap(), parse("1.5 + sin(c + d)/2").unwrap()).unwrap();
        let n1 = m("N1", &["u"], &["1 + 0.36*u^2 + 0.09*u^4"], &[(0.1, 1.2)]);
        let n2 = m("N2", &["s"], &["1 + exp(s)"], &[(0.1, 1.2)]);
        let phi1 = imm(&n1, &m1, &["u", "0.3*u^2"]);
        let phi2 = imm(&n2, &m2, &["s", "s"]);
        compose_scenario(phi1, phi2, ambient, None).unwrap()
    }

    fn pts(s: &DwpImmersionScenario) -> Vec<Vec<f64>> {
        validation_points(s.source.product())
    }

    #[test]
    fn catenoid_identities() {
        let s = catenoid();
        for p in pts(&s) {
            let sp = s.at(&p).unwrap();
            let hd = sp.h_decomposition();
            assert!(hd.mixed < 1e-12 && hd.first < 1e-12 && hd.second < 1e-12, "{hd:?}");
            let ni = sp.norm_identity(1e-6);
            assert!(ni.relative_residual < 1e-12);
            assert!(!ni.equality && !ni.factors_totally_geodesic);
            assert!((ni.h_squared - ni.bound - ni.h0_squared).abs() < 1e-12);
            let mr = sp.minimality_relations();
            assert!(mr.mean_curvature < 1e-12 && mr.factor_relation < 1e-12 && mr.trace_identity < 1e-12, "{mr:?}");
            let t2 = 1.0 + p[0] * p[0];
            assert!((mr.factor_relation_swapped - (t2 - 1.0) / t2).abs() < 1e-12);
            let hh = s.h1_dot_h2_check(&p).unwrap();
            assert!(hh.residual < 1e-12, "{hh:?}");
            assert!((hh.inner + 1.0 / (t2 * t2)).abs() < 1e-12);
            let (a1, a2) = s.a_h_closed_form_check(&p).unwrap();
            assert!(a1 < 1e-12 && a2 < 1e-12);
            let cf = s.shape_operator_closed_form_check(&p).unwrap().unwrap();
            assert!(cf.shape_operator < 1e-10 && cf.normal_connection < 1e-8, "{cf:?}");
        }
        let ps = pts(&s);
        assert!(s.minimality_check(&ps, 1e-6).unwrap().agree());
        let u = s.umbilical_check(&ps, 1e-6).unwrap();
        assert_eq!((u.direct.verdict, u.factor_side.verdict), (Verdict::No, Verdict::No));
    }

    #[test]
    fn generic_identities() {
        let s = generic();
        for p in pts(&s) {
            let sp = s.at(&p).unwrap();
            let hd = sp.h_decomposition();
            assert!(hd.mixed < 1e-10 && hd.first < 1e-10 && hd.second < 1e-10, "{hd:?}");
            assert!(sp.norm_identity(1e-6).relative_residual < 1e-10);
            assert!(sp.minimality_relations().trace_identity < 1e-10);
            let cf = s.shape_operator_closed_form_check(&p).unwrap().unwrap();
            assert!(cf.shape_operator < 1e-10 && cf.normal_connection < 1e-8, "{cf:?}");
        }
        assert_eq!(s.h1_dot_h2_check(&[0.5, 0.5]).unwrap_err(), Error::SpaceFormUndeclared);
    }

    #[test]
    fn broken_isometry_rejected() {
        let half = m("H", &["t", "z"], &["1", "1"], &[(0.5, 3.0), (-2.0, 2.0)]);
        let circle = m("S", &["v"], &["1"], &[(-3.0, 3.0)]);
        let ambient = build_dwp(half.clone(), circle.clone(), parse("t").unwrap(), parse("1").unwrap()).unwrap();
        let line = m("P", &["u"], &["1"], &[(0.0, 1.0)]);
        let leaf = m("L", &["w"], &["1"], &[(-3.0, 3.0)]);
        let r = compose_scenario(imm(&line, &half, &["1 + 2*u", "0"]), imm(&leaf, &circle, &["w"]), ambient, None);
        assert!(matches!(r, Err(Error::IsometryViolation(_))));
    }
}
