//! The inequality
//!
//! ```text
//! n₂ Δ¹f₁/f₁ + n₁ Δ²f₂/f₂ ≤ (n²/4)‖H‖² + n₁n₂ max K̃
//! ```
//!
//! for doubly warped product immersions, its constant-curvature form with
//! `max K̃ = c`, and instance-level checks of the non-existence results that
//! follow from it.
//!
//! The gap between the two sides equals
//! `‖n₁H₁ − n₂H₂‖²/4 + Σ‖h(e_a,z_b)‖² + Σ(max K̃ − K̃(e_a,z_b))`, so it is
//! quadratic in the residuals of the equality conditions. Equality is
//! therefore detected with a much tighter tolerance than the conditions.

use nalgebra::DVector;

use crate::dwp::Factor;
use crate::dwpimm::{DwpImmersionScenario, ScenarioPoint};
use crate::error::{Error, Result};
use crate::riemann::{LocalCurvature, DEGENERATE_PLANE};

/// One-sided slack for "LHS ≤ RHS".
pub const INEQUALITY_SLACK: f64 = 1e-8;
/// Relative tolerance on the gap for flagging equality.
pub const EQUALITY_TOLERANCE: f64 = 1e-12;
/// Tolerance for the equality conditions and hypothesis validation.
pub const CONDITION_TOLERANCE: f64 = 1e-6;
pub const MIN_BUDGET: usize = 64;
const ASCENT_STEPS: usize = 20;

const PRIMES: [u64; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

fn halton_offset(seed: u64) -> u64 {
    1 + (seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 44)
}

/// Sectional curvature of planes spanned inside a fixed set of ambient vectors.
struct PlaneSampler<'a> {
    curvature: &'a LocalCurvature,
    basis: Vec<DVector<f64>>,
}

impl PlaneSampler<'_> {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn combine(&self, coeffs: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.basis[0].len());
        for (c, b) in coeffs.iter().zip(&self.basis) {
            v += b * *c;
        }
        v
    }

    /// `None` for degenerate planes.
    fn eval(&self, x: &[f64]) -> Option<f64> {
        let n = self.dim();
        let (u, v) = (self.combine(&x[..n]), self.combine(&x[n..]));
        let g = &self.curvature.connection;
        let gram = g.inner(&u, &u) * g.inner(&v, &v) - g.inner(&u, &v).powi(2);
        if gram <= DEGENERATE_PLANE * (1.0 + g.inner(&u, &u) * g.inner(&v, &v)) {
            return None;
        }
        self.curvature.sectional(&u, &v).ok()
    }

    fn halton(&self, k: u64) -> Vec<f64> {
        (0..2 * self.dim()).map(|d| 2.0 * radical_inverse(k, PRIMES[d]) - 1.0).collect()
    }

    fn ascend(&self, start: &[f64], start_value: f64) -> f64 {
        let mut x = start.to_vec();
        let mut best = start_value;
        let mut step = 0.25;
        for _ in 0..ASCENT_STEPS {
            let mut improved = None;
            for i in 0..x.len() {
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[i] += sign * step;
                    if let Some(k) = self.eval(&y) {
                        if k > improved.as_ref().map_or(best, |(_, v)| *v) {
                            improved = Some((y, k));
                        }
                    }
                }
            }
            match improved {
                Some((y, k)) => {
                    x = y;
                    best = k;
                }
                None => step *= 0.5,
            }
        }
        best
    }

    /// Every frame plane `e_i ∧ e_j`, then Halton samples with a
    /// seed-dependent index offset, plus coordinate ascent from the running
    /// best at every budget checkpoint `64·2^k`. Sample sets are nested in the
    /// budget, so the result is monotone.
    fn maximize(&self, budget: usize, seed: u64) -> f64 {
        let n = self.dim();
        let mut best: Option<(Vec<f64>, f64)> = None;
        for i in 0..n {
            for j in i + 1..n {
                let mut x = vec![0.0; 2 * n];
                x[i] = 1.0;
                x[n + j] = 1.0;
                if let Some(v) = self.eval(&x) {
                    if best.as_ref().is_none_or(|(_, b)| v > *b) {
                        best = Some((x, v));
                    }
                }
            }
        }
        let mut overall = best.as_ref().map_or(f64::NEG_INFINITY, |(_, v)| *v);
        if n == 2 {
            return overall;
        }
        let offset = halton_offset(seed);
        let mut checkpoint = MIN_BUDGET;
        for k in 0..budget {
            let x = self.halton(offset + k as u64);
            if let Some(v) = self.eval(&x) {
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((x, v));
                }
                overall = overall.max(v);
            }
            if k + 1 == checkpoint {
                if let Some((x, v)) = &best {
                    overall = overall.max(self.ascend(x, *v));
                }
                checkpoint *= 2;
            }
        }
        overall
    }
}

fn tangent_basis(sp: &ScenarioPoint) -> Vec<DVector<f64>> {
    sp.frame1.iter().chain(&sp.frame2).map(|e| sp.ip.push(e)).collect()
}

/// Largest ambient sectional curvature over 2-planes of `dφ(T_pN)` by
/// sampling, without the constant-curvature shortcut.
pub fn max_ambient_sectional_sampled(sp: &ScenarioPoint, budget: usize, seed: u64) -> f64 {
    let sampler = PlaneSampler { curvature: &sp.ip.target, basis: tangent_basis(sp) };
    sampler.maximize(budget.max(MIN_BUDGET), seed)
}

/// `max K̃(p)`: exactly `c` for a declared constant-curvature ambient,
/// otherwise the sampled estimate.
pub fn max_ambient_sectional(s: &DwpImmersionScenario, p: &[f64], budget: usize, seed: u64) -> Result<f64> {
    if let Some(c) = s.c {
        return Ok(c);
    }
    Ok(max_ambient_sectional_sampled(&s.at(p)?, budget, seed))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InequalityReport {
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub holds: bool,
    pub equality: bool,
    pub mean_curvature_sq: f64,
    pub max_sectional: f64,
    /// Largest `‖h(e_a, z_b)‖` over mixed frame pairs.
    pub mixed_tg_residual: f64,
    /// `‖n₁H₁ − n₂H₂‖`.
    pub balance_residual: f64,
    /// Largest `|max K̃ − K̃(u,v)|` over sampled unit `u ∈ D₁`, `v ∈ D₂`;
    /// only for the general inequality.
    pub mixed_plane_residual: Option<f64>,
}

impl InequalityReport {
    /// Whether the pointwise equality conditions hold.
    pub fn equality_conditions(&self) -> bool {
        self.mixed_tg_residual <= CONDITION_TOLERANCE
            && self.balance_residual <= CONDITION_TOLERANCE
            && self.mixed_plane_residual.is_none_or(|r| r <= CONDITION_TOLERANCE)
    }

    /// Equality and its characterization agree at this point.
    pub fn equality_consistent(&self) -> bool {
        self.equality == self.equality_conditions()
    }
}

fn lhs(s: &DwpImmersionScenario, sp: &ScenarioPoint) -> Result<f64> {
    let p = &sp.point;
    let t1 = s.leaf_laplacian(Factor::First, p)? / sp.source.f1;
    let t2 = s.leaf_laplacian(Factor::Second, p)? / sp.source.f2;
    Ok(sp.n2 as f64 * t1 + sp.n1 as f64 * t2)
}

fn report(s: &DwpImmersionScenario, sp: &ScenarioPoint, max_k: f64, mixed_planes: Option<f64>) -> Result<InequalityReport> {
    let (n1, n2) = (sp.n1 as f64, sp.n2 as f64);
    let n = n1 + n2;
    let h = sp.mean_curvature();
    let mean_curvature_sq = sp.ip.inner(&h, &h);
    let lhs = lhs(s, sp)?;
    let rhs = n * n / 4.0 * mean_curvature_sq + n1 * n2 * max_k;
    let gap = rhs - lhs;
    let balance = sp.partial_mean_curvature(Factor::First) * n1 - sp.partial_mean_curvature(Factor::Second) * n2;
    Ok(InequalityReport {
        point: sp.point.clone(),
        lhs,
        rhs,
        gap,
        holds: gap >= -INEQUALITY_SLACK,
        equality: gap.abs() <= EQUALITY_TOLERANCE * (1.0 + lhs.abs() + rhs.abs()),
        mean_curvature_sq,
        max_sectional: max_k,
        mixed_tg_residual: sp.h_decomposition().mixed,
        balance_residual: sp.ip.inner(&balance, &balance).max(0.0).sqrt(),
        mixed_plane_residual: mixed_planes,
    })
}

fn mixed_plane_residual(sp: &ScenarioPoint, max_k: f64, seed: u64) -> f64 {
    let curvature = &sp.ip.target;
    let push = |v: &DVector<f64>| sp.ip.push(v);
    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    for x in &sp.frame1 {
        for z in &sp.frame2 {
            pairs.push((push(x), push(z)));
        }
    }
    let offset = halton_offset(seed);
    let (n1, n2) = (sp.n1, sp.n2);
    for k in 0..16u64 {
        let coeff = |d: usize| 2.0 * radical_inverse(offset + k, PRIMES[d]) - 1.0;
        let mut u = DVector::zeros(sp.frame1[0].len());
        for (i, e) in sp.frame1.iter().enumerate() {
            u += e * coeff(i);
        }
        let mut v = DVector::zeros(sp.frame2[0].len());
        for (i, e) in sp.frame2.iter().enumerate() {
            v += e * coeff(n1 + i);
        }
        debug_assert!(n1 + n2 <= PRIMES.len());
        pairs.push((push(&u), push(&v)));
    }
    pairs.iter().filter_map(|(u, v)| curvature.sectional(u, v).ok()).map(|k| (max_k - k).abs()).fold(0.0, f64::max)
}

/// General form with the sampled (or exact, for constant curvature) `max K̃`.
pub fn inequality_general(s: &DwpImmersionScenario, p: &[f64], budget: usize, seed: u64) -> Result<InequalityReport> {
    let sp = s.at(p)?;
    let max_k = match s.c {
        Some(c) => c,
        None => max_ambient_sectional_sampled(&sp, budget, seed),
    };
    let planes = mixed_plane_residual(&sp, max_k, seed);
    report(s, &sp, max_k, Some(planes))
}

/// Constant-curvature form with `max K̃ = c`.
pub fn inequality_space_form(s: &DwpImmersionScenario, p: &[f64]) -> Result<InequalityReport> {
    let c = s.c.ok_or(Error::SpaceFormUndeclared)?;
    let sp = s.at(p)?;
    report(s, &sp, c, None)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Harmonic,
    /// `Δⁱ f_i = μ_i f_i` on the leaves.
    Eigen(f64, f64),
    Minimal,
}

impl Hypothesis {
    pub fn tag(&self) -> String {
        match self {
            Hypothesis::Harmonic => "harmonic".into(),
            Hypothesis::Eigen(a, b) => format!("eigen({a}, {b})"),
            Hypothesis::Minimal => "minimal".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DerivedCheck {
    pub name: String,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObstructionReport {
    /// Largest residual of each declared hypothesis over the sample points.
    pub hypotheses: Vec<(String, f64)>,
    pub checks: Vec<DerivedCheck>,
}

impl ObstructionReport {
    pub fn consistent(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

fn hypothesis_residual(s: &DwpImmersionScenario, h: &Hypothesis, p: &[f64]) -> Result<f64> {
    let leaf = |f| s.leaf_laplacian(f, p);
    Ok(match h {
        Hypothesis::Harmonic => leaf(Factor::First)?.abs().max(leaf(Factor::Second)?.abs()),
        Hypothesis::Eigen(m1, m2) => {
            let f1 = s.source.warp_value(Factor::First, p)?;
            let f2 = s.source.warp_value(Factor::Second, p)?;
            (leaf(Factor::First)? - m1 * f1).abs().max((leaf(Factor::Second)? - m2 * f2).abs())
        }
        Hypothesis::Minimal => {
            let sp = s.at(p)?;
            let h = sp.mean_curvature();
            sp.ip.inner(&h, &h).max(0.0).sqrt()
        }
    })
}

/// Validates the declared hypotheses at `points` and evaluates the
/// consequences of the inequality they imply:
///
/// * minimal with harmonic warps: `max K̃ ≥ 0`, and in flat ambient equality
///   with a mixed totally geodesic immersion;
/// * minimal with `Δⁱf_i = μ_i f_i`: `n₁n₂ max K̃ ≥ n₂μ₁ + n₁μ₂`;
/// * `μ_i = n_i c/2` in constant curvature `c`: equality iff minimal.
pub fn obstruction_probe(
    s: &DwpImmersionScenario,
    hypotheses: &[Hypothesis],
    points: &[Vec<f64>],
    budget: usize,
    seed: u64,
) -> Result<ObstructionReport> {
    let mut declared = Vec::new();
    for h in hypotheses {
        let mut worst: f64 = 0.0;
        for p in points {
            worst = worst.max(hypothesis_residual(s, h, p)?);
        }
        if worst > CONDITION_TOLERANCE {
            return Err(Error::Hypothesis { tag: h.tag(), residual: worst });
        }
        declared.push((h.tag(), worst));
    }
    let minimal = hypotheses.contains(&Hypothesis::Minimal);
    let harmonic = hypotheses.contains(&Hypothesis::Harmonic);
    let eigen = hypotheses.iter().find_map(|h| match h {
        Hypothesis::Eigen(a, b) => Some((*a, *b)),
        _ => None,
    });
    let (n1, n2) = s.dims();
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let mut checks = Vec::new();
    for p in points {
        let r = inequality_general(s, p, budget, seed)?;
        if minimal && harmonic {
            checks.push(DerivedCheck {
                name: "max_sectional_nonnegative".into(),
                point: p.clone(),
                lhs: 0.0,
                rhs: r.max_sectional,
                holds: r.max_sectional >= -INEQUALITY_SLACK,
            });
            if s.c == Some(0.0) {
                let e = inequality_space_form(s, p)?;
                checks.push(DerivedCheck {
                    name: "flat_minimal_mixed_geodesic".into(),
                    point: p.clone(),
                    lhs: e.mixed_tg_residual,
                    rhs: CONDITION_TOLERANCE,
                    holds: e.equality && e.mixed_tg_residual <= CONDITION_TOLERANCE,
                });
            }
        }
        if let Some((m1, m2)) = eigen {
            let lambda = n2f * m1 + n1f * m2;
            if minimal {
                checks.push(DerivedCheck {
                    name: "eigen_curvature_bound".into(),
                    point: p.clone(),
                    lhs: lambda,
                    rhs: n1f * n2f * r.max_sectional,
                    holds: n1f * n2f * r.max_sectional >= lambda - INEQUALITY_SLACK,
                });
            }
            if let Some(c) = s.c {
                let critical = (m1 - n1f * c / 2.0).abs() <= CONDITION_TOLERANCE && (m2 - n2f * c / 2.0).abs() <= CONDITION_TOLERANCE;
                if critical {
                    let e = inequality_space_form(s, p)?;
                    let min_here = hypothesis_residual(s, &Hypothesis::Minimal, p)? <= CONDITION_TOLERANCE;
                    checks.push(DerivedCheck {
                        name: "eigen_equality_iff_minimal".into(),
                        point: p.clone(),
                        lhs: e.gap,
                        rhs: e.mean_curvature_sq.sqrt(),
                        holds: e.equality == min_here,
                    });
                }
            }
        }
    }
    Ok(ObstructionReport { hypotheses: declared, checks })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dwp::build_dwp;
    use crate::dwpimm::{compose_scenario, validation_points};
    use crate::exprs::parse;
    use crate::riemann::ChartedManifold;
    use crate::submanifold::ImmersionSpec;

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

    fn sphere() -> DwpImmersionScenario {
        let arc = m("A", &["th"], &["1"], &[(0.3, 2.8)]);
        let circle = m("S", &["ph"], &["1"], &[(-3.0, 3.0)]);
        let ambient = build_dwp(arc.clone(), circle.clone(), parse("sin(th)").unwrap(), parse("1").unwrap()).unwrap();
        let src_arc = m("B", &["a"], &["1"], &[(0.3, 2.8)]);
        let src_circle = m("C", &["b"], &["1"], &[(-3.0, 3.0)]);
        compose_scenario(imm(&src_arc, &arc, &["a"]), imm(&src_circle, &circle, &["b"]), ambient, Some(1.0)).unwrap()
    }

    /// Three-dimensional source in a curved four-dimensional ambient.
    fn generic3() -> DwpImmersionScenario {
        let m1 = m("M1", &["a", "b"], &["1 + b^2", "1"], &[(-1.0, 2.0), (-1.0, 2.0)]);
        let m2 = m("M2", &["c", "d"], &["1", "exp(c)"], &[(-1.0, 2.0), (-1.0, 2.0)]);
        let ambient = build_dwp(m1.clone(), m2.clone(), parse("2 + a + b^2/2").unwrap(), parse("1.5 + sin(c + d)/2").unwrap()).unwrap();
        let n1 = m("N1", &["x", "y"], &["1 + y^2", "1"], &[(0.1, 1.2), (0.1, 1.2)]);
        let n2 = m("N2", &["s"], &["1 + exp(s)"], &[(0.1, 1.2)]);
        compose_scenario(imm(&n1, &m1, &["x", "y"]), imm(&n2, &m2, &["s", "s"]), ambient, None).unwrap()
    }

    fn brute_force_max(sp: &ScenarioPoint, samples: usize) -> f64 {
        let basis = tangent_basis(sp);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..samples {
            let mut u = DVector::zeros(basis[0].len());
            let mut v = DVector::zeros(basis[0].len());
            for b in &basis {
                u += b * rng.random_range(-1.0..1.0);
                v += b * rng.random_range(-1.0..1.0);
            }
            if let Ok(k) = sp.ip.target.sectional(&u, &v) {
                best = best.max(k);
            }
        }
        best
    }

    #[test]
    fn catenoid_is_strict() {
        let s = catenoid();
        for p in validation_points(s.source.product()) {
            let r = inequality_space_form(&s, &p).unwrap();
            let expected = (1.0 + p[0] * p[0]).powi(-2);
            assert!((r.gap - expected).abs() < 1e-10, "{r:?}");
            assert!(r.holds && !r.equality && r.equality_consistent());
            assert!(r.mixed_tg_residual < 1e-12 && r.balance_residual > 0.1);
        }
    }

    #[test]
    fn round_sphere_is_an_equality_case() {
        let s = sphere();
        for p in validation_points(s.source.product()) {
            for r in [inequality_space_form(&s, &p).unwrap(), inequality_general(&s, &p, 256, 1).unwrap()] {
                assert!((r.lhs - 1.0).abs() < 1e-9 && (r.rhs - 1.0).abs() < 1e-12, "{r:?}");
                assert!(r.equality && r.equality_conditions());
            }
        }
    }

    #[test]
    fn sampled_max_matches_brute_force() {
        let s = generic3();
        let sp = s.at(&[0.4, 0.7, 0.9]).unwrap();
        let est = max_ambient_sectional_sampled(&sp, 1024, 3);
        let brute = brute_force_max(&sp, 100_000);
        assert!((est - brute).abs() < 1e-4, "{est} vs {brute}");
    }

    #[test]
    fn sampled_max_is_monotone_in_budget() {
        let s = generic3();
        let sp = s.at(&[0.8, 0.3, 0.5]).unwrap();
        let values: Vec<f64> = (6..12).map(|k| max_ambient_sectional_sampled(&sp, 1 << k, 11)).collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
    }

    #[test]
    fn space_form_bypass_returns_c() {
        let s = sphere();
        assert_eq!(max_ambient_sectional(&s, &[1.0, 0.0], 64, 0).unwrap(), 1.0);
        let sp = s.at(&[1.0, 0.0]).unwrap();
        assert!((max_ambient_sectional_sampled(&sp, 64, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn generic_inequality_holds() {
        let s = generic3();
        for p in validation_points(s.source.product()) {
            let r = inequality_general(&s, &p, 256, 5).unwrap();
            assert!(r.holds && r.equality_consistent(), "{r:?}");
        }
        assert!(matches!(inequality_space_form(&s, &[0.5, 0.5, 0.5]), Err(Error::SpaceFormUndeclared)));
    }

    #[test]
    fn obstruction_hypotheses() {
        let s = sphere();
        let pts = validation_points(s.source.product());
        let r = obstruction_probe(&s, &[Hypothesis::Eigen(1.0, 0.0), Hypothesis::Minimal], &pts, 64, 0).unwrap();
        assert!(r.consistent() && r.checks.iter().any(|c| c.name == "eigen_curvature_bound"));
        let err = obstruction_probe(&s, &[Hypothesis::Harmonic], &pts, 64, 0).unwrap_err();
        assert!(matches!(err, Error::Hypothesis { ref tag, .. } if tag == "harmonic"));
        let cat = catenoid();
        let cp = validation_points(cat.source.product());
        assert!(obstruction_probe(&cat, &[Hypothesis::Minimal], &cp, 64, 0).unwrap().consistent());
        assert!(obstruction_probe(&cat, &[Hypothesis::Minimal, Hypothesis::Harmonic], &cp, 64, 0).is_err());
    }
}
