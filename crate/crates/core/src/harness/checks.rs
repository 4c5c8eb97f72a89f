use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chenineq::{self, Hypothesis, InequalityReport};
use crate::dwp::{grid_points, DoublyWarpedProduct, Factor, LiftedSum};
use crate::dwpimm::{Biconditional, DwpImmersionScenario, SPACE_FORM_TOLERANCE};
use crate::error::{Error, Result};
use crate::exprs::{Func, ScalarExpr};
use crate::riemann::{TangentVector, VectorFieldExpr};
use crate::submanifold::{FnNormalField, Verdict, CLASSIFICATION_TOLERANCE, ISOMETRY_TOLERANCE, NORMALITY_TOLERANCE};

use super::format::{Sampling, ScenarioFile};
use super::report::{CheckRecord, CheckReport, CheckVerdict, Summary};

macro_rules! check_kinds {
    ($($variant:ident => $name:literal, $tol:expr, $anchor:literal;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum CheckKind { $($variant),* }

        impl CheckKind {
            pub const ALL: &'static [CheckKind] = &[$(CheckKind::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(CheckKind::$variant => $name),* }
            }

            pub fn default_tolerance(self) -> f64 {
                match self { $(CheckKind::$variant => $tol),* }
            }

            /// The identity or property the check verifies.
            pub fn anchor(self) -> &'static str {
                match self { $(CheckKind::$variant => $anchor),* }
            }

            pub fn from_name(s: &str) -> Option<CheckKind> {
                match s { $($name => Some(CheckKind::$variant),)* _ => None }
            }
        }
    };
}

check_kinds! {
    Isometry => "isometry", ISOMETRY_TOLERANCE, "φ*g̃ = g for φ, φ₁, φ₂";
    SpaceForm => "space_form", SPACE_FORM_TOLERANCE, "R̃ = c X∧Y on the ambient";
    DwpMetric => "dwp_metric", 1e-12, "g = f₂²g₁ ⊕ f₁²g₂";
    UField => "u_field", 1e-9, "U_i = −grad(ln f_i ∘ π_i)";
    DwpConnection => "dwp_connection", 1e-6, "∇_XY = ∇⁰_XY + Σ_i (⟨X,Y⟩ on the f_i-scaled block) U_i − ⟨X,U_i⟩Y − ⟨Y,U_i⟩X";
    DwpCurvature => "dwp_curvature", 1e-6, "R(X,Y)Z from the factor curvatures, ∇U_i and wedge terms";
    Wedge => "wedge", 1e-12, "(X∧Y)Z = ⟨Y,Z⟩X − ⟨X,Z⟩Y";
    MixedSectional => "mixed_sectional", 1e-6, "K(X,Z) = −Hess f₁(X,X)/f₁ − Hess f₂(Z,Z)/f₂ for unit X ∈ D₁, Z ∈ D₂";
    Pushforward => "pushforward", 1e-6, "dφ(X) = d/dt φ(p + tX) at t = 0";
    SecondFundamentalForm => "second_fundamental_form", NORMALITY_TOLERANCE, "∇̃_XY = ∇_XY + h(X,Y), h symmetric and normal";
    ShapeOperator => "shape_operator", 1e-8, "⟨A_ηX,Y⟩ = ⟨h(X,Y),η⟩";
    NormalConnection => "normal_connection", 1e-6, "∇̃_Xη = −A_ηX + D_Xη";
    MeanCurvature => "mean_curvature", 1e-6, "H = (1/n) trace h";
    GaussEquation => "gauss_equation", 1e-6, "⟨R̃(X,Y)Z,W⟩ = ⟨R(X,Y)Z,W⟩ + ⟨h(X,Z),h(Y,W)⟩ − ⟨h(X,W),h(Y,Z)⟩";
    Classify => "classify", CLASSIFICATION_TOLERANCE, "totally geodesic, totally umbilical and minimal flags";
    Compose => "compose", 1e-10, "f_i = ρ_i ∘ φ_i";
    PartialMeanCurvature => "partial_mean_curvature", 1e-10, "nH = n₁H₁ + n₂H₂";
    MixedGeodesy => "mixed_geodesy", 1e-8, "h(X,Z) = 0 for X ∈ D₁, Z ∈ D₂";
    HDecomposition => "h_decomposition", 1e-6, "h = h⁰ − g D ln ρ₂ on D₁ and h = h⁰ − g D ln ρ₁ on D₂";
    NormIdentity => "norm_identity", 1e-6, "‖h‖² = ‖h⁰‖² + n₁‖D ln ρ₂‖² + n₂‖D ln ρ₁‖², equality iff φ₁, φ₂ totally geodesic";
    NiGeodesy => "ni_geodesy", CLASSIFICATION_TOLERANCE, "N_i-totally geodesic iff φ_i totally geodesic and D ln ρ_j = 0";
    Umbilical => "umbilical", CLASSIFICATION_TOLERANCE, "totally umbilical iff factors umbilical with H^{φ_i} = −D ln ρ_i";
    Minimality => "minimality", CLASSIFICATION_TOLERANCE, "minimal iff H^{φ₁} = (n₂/n₁) f₂² D ln ρ₁ and H^{φ₂} = (n₁/n₂) f₁² D ln ρ₂";
    ShapeOperatorClosedForm => "shape_operator_closed_form", 1e-6, "A_η and D_Xη for factor-aligned normals from factor data";
    H1DotH2 => "h1_dot_h2", 1e-6, "⟨H₁,H₂⟩ = Δ¹f₁/(n₁f₁) + Δ²f₂/(n₂f₂) − c";
    AhClosedForm => "a_h_closed_form", 1e-6, "A_{H₁}Z = −𝓗^{f₂}(Z)/f₂ + (Δ¹f₁/(n₁f₁) − c)Z and mirror";
    MaxSectional => "max_sectional", 1e-6, "max K̃ over 2-planes of dφ(T_pN): deterministic, monotone in budget";
    Inequality => "inequality", chenineq::INEQUALITY_SLACK, "n₂Δ¹f₁/f₁ + n₁Δ²f₂/f₂ ≤ (n²/4)‖H‖² + n₁n₂ max K̃";
    InequalitySpaceForm => "inequality_space_form", chenineq::INEQUALITY_SLACK, "n₂Δ¹f₁/f₁ + n₁Δ²f₂/f₂ ≤ (n²/4)‖H‖² + n₁n₂ c";
    Obstruction => "obstruction", chenineq::CONDITION_TOLERANCE, "consequences of the inequality under harmonic, eigenfunction and minimal hypotheses";
}

/// Library operations and the checks that exercise them.
pub const COVERAGE: &[(&str, CheckKind)] = &[
    ("dwp::build_dwp", CheckKind::DwpMetric),
    ("dwp::u_field", CheckKind::UField),
    ("dwp::connection_closed_form", CheckKind::DwpConnection),
    ("dwp::curvature_closed_form", CheckKind::DwpCurvature),
    ("dwp::wedge", CheckKind::Wedge),
    ("dwp::mixed_sectional_closed_form", CheckKind::MixedSectional),
    ("submanifold::pushforward", CheckKind::Pushforward),
    ("submanifold::isometry_residual", CheckKind::Isometry),
    ("submanifold::second_fundamental_form", CheckKind::SecondFundamentalForm),
    ("submanifold::shape_operator", CheckKind::ShapeOperator),
    ("submanifold::normal_connection", CheckKind::NormalConnection),
    ("submanifold::mean_curvature", CheckKind::MeanCurvature),
    ("submanifold::gauss_equation_residual", CheckKind::GaussEquation),
    ("submanifold::classify", CheckKind::Classify),
    ("dwpimm::compose_scenario", CheckKind::Compose),
    ("dwpimm::partial_mean_curvature", CheckKind::PartialMeanCurvature),
    ("dwpimm::h_decomposition_check", CheckKind::MixedGeodesy),
    ("dwpimm::h_decomposition_check", CheckKind::HDecomposition),
    ("dwpimm::norm_identity_check", CheckKind::NormIdentity),
    ("dwpimm::ni_geodesy_check", CheckKind::NiGeodesy),
    ("dwpimm::umbilical_check", CheckKind::Umbilical),
    ("dwpimm::minimality_check", CheckKind::Minimality),
    ("dwpimm::shape_operator_closed_form", CheckKind::ShapeOperatorClosedForm),
    ("dwpimm::h1_dot_h2_check", CheckKind::H1DotH2),
    ("dwpimm::a_h_closed_form_check", CheckKind::AhClosedForm),
    ("chenineq::max_ambient_sectional", CheckKind::MaxSectional),
    ("chenineq::inequality_general", CheckKind::Inequality),
    ("chenineq::inequality_space_form", CheckKind::InequalitySpaceForm),
    ("chenineq::obstruction_probe", CheckKind::Obstruction),
];

impl CheckKind {
    /// Checks that are meaningless unless the immersion is isometric.
    fn needs_isometry(self) -> bool {
        !matches!(
            self,
            CheckKind::Isometry
                | CheckKind::SpaceForm
                | CheckKind::DwpMetric
                | CheckKind::UField
                | CheckKind::DwpConnection
                | CheckKind::DwpCurvature
                | CheckKind::Wedge
                | CheckKind::MixedSectional
                | CheckKind::Compose
                | CheckKind::Pushforward
        )
    }

    fn needs_space_form(self) -> bool {
        matches!(self, CheckKind::H1DotH2 | CheckKind::AhClosedForm | CheckKind::InequalitySpaceForm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    /// Overrides the default tolerance of checks without a file tolerance.
    pub tolerance: Option<f64>,
    /// Overrides the file's sampling with a seeded draw of this many points.
    pub points: Option<usize>,
    pub budget: usize,
    /// When non-empty, run exactly these checks (plus the gates).
    pub only: Vec<CheckKind>,
}

pub const DEFAULT_BUDGET: usize = 512;
const DRAWS: usize = 20;

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seed: 0, tolerance: None, points: None, budget: DEFAULT_BUDGET, only: Vec::new() }
    }
}

/// Interior points of `bounds` with a 5% margin: a seeded uniform draw, or a grid.
pub fn sample_points(bounds: &[(f64, f64)], sampling: Sampling, seed: u64) -> Vec<Vec<f64>> {
    let shrunk: Vec<(f64, f64)> = bounds
        .iter()
        .map(|(lo, hi)| {
            let pad = 0.05 * (hi - lo);
            (lo + pad, hi - pad)
        })
        .collect();
    match sampling {
        Sampling::Grid(k) => grid_points(&shrunk, k),
        Sampling::Random(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| shrunk.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()).collect()
        }
    }
}

/// What a single check produced before verdict assignment.
#[derive(Debug, Default)]
struct Outcome {
    residual: f64,
    point: Option<Vec<f64>>,
    values: BTreeMap<String, f64>,
    message: Option<String>,
    indeterminate: bool,
    skipped: bool,
    tolerance: Option<f64>,
}

impl Outcome {
    fn skipped(message: impl Into<String>) -> Outcome {
        Outcome { skipped: true, message: Some(message.into()), ..Outcome::default() }
    }

    /// Keeps the point with the largest residual.
    fn update(&mut self, residual: f64, point: &[f64], values: &[(&str, f64)]) {
        let nan = residual.is_nan();
        if self.point.is_none() || residual > self.residual || nan {
            self.residual = if nan { f64::INFINITY } else { residual };
            self.point = Some(point.to_vec());
            self.values = values.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        }
    }
}

struct Context<'a> {
    file: &'a ScenarioFile,
    s: &'a DwpImmersionScenario,
    points: Vec<Vec<f64>>,
    seed: u64,
    budget: usize,
}

fn rng_for(seed: u64, kind: CheckKind) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (0x5851_F42D_4C95_7F2D_u64.wrapping_mul(kind as u64 + 1)))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn random_component(rng: &mut ChaCha8Rng, coords: &[String]) -> ScalarExpr {
    let c = |v: f64| ScalarExpr::constant((v * 1000.0).round() / 1000.0);
    let (a, b, d): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let xj = ScalarExpr::var(&coords[rng.random_range(0..coords.len())]);
    let xk = ScalarExpr::var(&coords[rng.random_range(0..coords.len())]);
    ScalarExpr::add(&ScalarExpr::add(&c(a), &ScalarExpr::mul(&c(b), &xj)), &ScalarExpr::mul(&c(d), &ScalarExpr::call(Func::Sin, &xk)))
}

fn random_lift(rng: &mut ChaCha8Rng, w: &DoublyWarpedProduct) -> LiftedSum {
    let field = |rng: &mut ChaCha8Rng, f: Factor| {
        let coords = w.factor(f).coords();
        VectorFieldExpr::new((0..coords.len()).map(|_| random_component(rng, coords)).collect())
    };
    let first = field(rng, Factor::First);
    let second = field(rng, Factor::Second);
    LiftedSum::new(first, second)
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

fn code(v: Verdict) -> f64 {
    match v {
        Verdict::Yes => 1.0,
        Verdict::No => 0.0,
        Verdict::Indeterminate => 0.5,
    }
}

impl Context<'_> {
    /// Source points paired with the source dwp, and their images paired with the ambient.
    fn dwp_points(&self) -> Result<Vec<(&DoublyWarpedProduct, Vec<f64>)>> {
        let mut out = Vec::new();
        for p in &self.points {
            out.push((&self.s.source, p.clone()));
            out.push((&self.s.ambient, self.s.composite.image(p)?));
        }
        Ok(out)
    }

    fn run(&self, kind: CheckKind, tol: f64) -> Result<Outcome> {
        let s = self.s;
        let mut o = Outcome::default();
        match kind {
            CheckKind::Isometry => {
                for p in &self.points {
                    let (p1, p2) = s.source.split(p);
                    let mut worst: f64 = 0.0;
                    for (phi, q) in [(&s.phi1, p1), (&s.phi2, p2), (&s.composite, p.as_slice())] {
                        let scale = 1.0 + phi.source().metric_at(q)?.amax();
                        worst = worst.max(phi.isometry_residual(q)? / scale);
                    }
                    o.update(worst, p, &[]);
                }
            }
            CheckKind::SpaceForm => {
                let Some(c) = s.c else { return Ok(Outcome::skipped("no space-form constant declared")) };
                for p in &self.points {
                    let r = s.space_form_residual(std::slice::from_ref(p))?;
                    o.update(r, p, &[("c", c)]);
                }
            }
            CheckKind::DwpMetric => {
                for (w, p) in self.dwp_points()? {
                    let g = w.product().metric_at(&p)?;
                    let (p1, p2) = w.split(&p);
                    let (g1, g2) = (w.factor1().metric_at(p1)?, w.factor2().metric_at(p2)?);
                    let (f1, f2) = (w.warp_value(Factor::First, &p)?, w.warp_value(Factor::Second, &p)?);
                    let (n1, n2) = w.dims();
                    let mut expect = nalgebra::DMatrix::zeros(n1 + n2, n1 + n2);
                    expect.view_mut((0, 0), (n1, n1)).copy_from(&(g1 * (f2 * f2)));
                    expect.view_mut((n1, n1), (n2, n2)).copy_from(&(g2 * (f1 * f1)));
                    o.update((g - expect).amax(), &p, &[("f1", f1), ("f2", f2)]);
                }
            }
            CheckKind::UField => {
                for (w, p) in self.dwp_points()? {
                    for f in [Factor::First, Factor::Second] {
                        let psi = ScalarExpr::neg(&ScalarExpr::call(Func::Log, w.warp(f)));
                        let oracle = w.product().gradient(&psi, &p)?.to_dvector();
                        let u = w.u_field(f, &p)?.to_dvector();
                        o.update(rel(&u, &oracle), &p, &[]);
                    }
                }
            }
            CheckKind::DwpConnection | CheckKind::DwpCurvature => {
                let mut rng = rng_for(self.seed, kind);
                let pts = self.dwp_points()?;
                for k in 0..DRAWS {
                    let (w, p) = &pts[k % pts.len()];
                    let x = random_lift(&mut rng, w);
                    let y = random_lift(&mut rng, w);
                    let r = if kind == CheckKind::DwpConnection {
                        let closed = w.connection_closed_form(&x, &y, p)?.to_dvector();
                        let oracle = w.product().covariant_derivative(&x.product_field(), &y.product_field(), p)?.to_dvector();
                        rel(&closed, &oracle)
                    } else {
                        let z = random_lift(&mut rng, w);
                        let closed = w.curvature_closed_form(&x, &y, &z, p)?.to_dvector();
                        let a = w.product().assignment(p);
                        let (xv, yv, zv) = (x.product_field().eval(&a)?, y.product_field().eval(&a)?, z.product_field().eval(&a)?);
                        let oracle = w.product().curvature_at(p)?.apply(&xv, &yv, &zv);
                        rel(&closed, &oracle)
                    };
                    o.update(r, p, &[("draw", k as f64)]);
                }
            }
            CheckKind::Wedge => {
                let mut rng = rng_for(self.seed, kind);
                for (w, p) in self.dwp_points()? {
                    let m = w.product();
                    let conn = m.connection_at(&p)?;
                    let n = m.dim();
                    let tv = |v: &DVector<f64>| TangentVector::from_dvector(&p, v);
                    let (x, y, z, u) = (random_vec(&mut rng, n), random_vec(&mut rng, n), random_vec(&mut rng, n), random_vec(&mut rng, n));
                    let wg = |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>| -> Result<DVector<f64>> {
                        Ok(crate::dwp::wedge(m, &tv(a), &tv(b), &tv(c))?.to_dvector())
                    };
                    let xy_z = wg(&x, &y, &z)?;
                    let cyclic = &xy_z + wg(&y, &z, &x)? + wg(&z, &x, &y)?;
                    let anti = &xy_z + wg(&y, &x, &z)?;
                    let skew = conn.inner(&xy_z, &u) + conn.inner(&wg(&x, &y, &u)?, &z);
                    let scale = 1.0 + conn.metric.amax();
                    let r = cyclic.amax().max(anti.amax()).max(skew.abs()) / (scale * scale);
                    o.update(r, &p, &[]);
                }
            }
            CheckKind::MixedSectional => {
                let mut rng = rng_for(self.seed, kind);
                for (w, p) in self.dwp_points()? {
                    let (n1, n2) = w.dims();
                    let wp = w.at(&p)?;
                    let mut x = random_vec(&mut rng, n1 + n2);
                    let mut z = random_vec(&mut rng, n1 + n2);
                    x.rows_mut(n1, n2).fill(0.0);
                    z.rows_mut(0, n1).fill(0.0);
                    x /= wp.inner(&x, &x).sqrt();
                    z /= wp.inner(&z, &z).sqrt();
                    let (xt, zt) = (TangentVector::from_dvector(&p, &x), TangentVector::from_dvector(&p, &z));
                    let closed = w.mixed_sectional_closed_form(&xt, &zt, &p)?;
                    let oracle = w.product().sectional_curvature(&p, &xt, &zt)?;
                    o.update((closed - oracle).abs() / (1.0 + oracle.abs()), &p, &[("closed_form", closed), ("chart", oracle)]);
                }
            }
            CheckKind::Pushforward => {
                let mut rng = rng_for(self.seed, kind);
                let step = 1e-5;
                for p in &self.points {
                    let x = random_vec(&mut rng, p.len());
                    let push = s.composite.pushforward(p, &TangentVector::from_dvector(p, &x))?.to_dvector();
                    let shifted = |t: f64| -> Result<DVector<f64>> {
                        let q: Vec<f64> = p.iter().zip(x.iter()).map(|(a, b)| a + t * b).collect();
                        Ok(DVector::from_vec(s.composite.image(&q)?))
                    };
                    let fd = (shifted(step)? - shifted(-step)?) / (2.0 * step);
                    o.update(rel(&push, &fd), p, &[]);
                }
            }
            CheckKind::SecondFundamentalForm => {
                for p in &self.points {
                    let ip = s.composite.at(p)?;
                    let mut worst: f64 = 0.0;
                    for x in &ip.tangent_frame {
                        for y in &ip.tangent_frame {
                            let h = ip.h(x, y);
                            worst = worst.max((&h - ip.h(y, x)).amax()).max(ip.tangential_residual(&h));
                        }
                    }
                    o.update(worst, p, &[]);
                }
            }
            CheckKind::ShapeOperator => {
                let mut any = false;
                for p in &self.points {
                    let ip = s.composite.at(p)?;
                    let mut worst: f64 = 0.0;
                    for eta in &ip.normal_frame {
                        any = true;
                        for x in &ip.tangent_frame {
                            let ax = ip.shape_operator_apply(eta, x)?;
                            for y in &ip.tangent_frame {
                                worst = worst.max((ip.source_inner(&ax, y) - ip.inner(&ip.h(x, y), eta)).abs());
                            }
                        }
                    }
                    o.update(worst, p, &[]);
                }
                if !any {
                    return Ok(Outcome::skipped("no normal directions"));
                }
            }
            CheckKind::NormalConnection => {
                let mut rng = rng_for(self.seed, kind);
                let m = s.ambient.product().dim();
                if m == s.source.product().dim() {
                    return Ok(Outcome::skipped("no normal directions"));
                }
                for p in &self.points {
                    let v = random_vec(&mut rng, m);
                    let field = FnNormalField(|q: &[f64]| Ok(s.composite.at(q)?.normal_part(&v)));
                    let ip = s.composite.at(p)?;
                    let eta = ip.normal_part(&v);
                    let mut worst: f64 = 0.0;
                    for x in &ip.tangent_frame {
                        let split = ip.weingarten(x, &field)?;
                        let ax = ip.push(&ip.shape_operator_apply(&eta, x)?);
                        worst = worst.max((&split.ambient + &ax - &split.normal).amax());
                    }
                    o.update(worst, p, &[]);
                }
            }
            CheckKind::MeanCurvature => {
                let mut rng = rng_for(self.seed, kind);
                let expect = self.file.decl.expect.mean_curvature_norm;
                for p in &self.points {
                    let ip = s.composite.at(p)?;
                    let h = ip.mean_curvature();
                    let norm = ip.inner(&h, &h).max(0.0).sqrt();
                    // any other orthonormal frame gives the same trace
                    let mixed: Vec<DVector<f64>> = (0..ip.n()).map(|_| random_vec(&mut rng, ip.n())).collect();
                    let g = s.source.product().metric_at(p)?;
                    let frame =
                        crate::riemann::gram_schmidt(&g, &mixed, 1e-10).ok_or_else(|| Error::Invalid("degenerate random frame".into()))?;
                    let mut r = (ip.mean_over(&frame) - &h).amax();
                    if let Some(e) = expect {
                        r = r.max((norm - e).abs());
                    }
                    o.update(r, p, &[("mean_curvature_norm", norm)]);
                }
            }
            CheckKind::GaussEquation => {
                for p in &self.points {
                    let mut r = s.composite.gauss_frame_residual(p)?;
                    if let Some(c) = s.c {
                        let ip = s.composite.at(p)?;
                        let f = &ip.tangent_frame;
                        for x in f {
                            for y in f {
                                for z in f {
                                    for w in f {
                                        r = r.max(ip.gauss_residual_space_form(c, x, y, z, w));
                                    }
                                }
                            }
                        }
                    }
                    o.update(r, p, &[]);
                }
            }
            CheckKind::Classify => {
                let c = s.composite.classify(&self.points, tol)?;
                let e = &self.file.decl.expect;
                let mut mismatches = 0.0;
                let mut unknown = false;
                for (flag, want) in [(c.totally_geodesic, e.totally_geodesic), (c.totally_umbilical, e.umbilical), (c.minimal, e.minimal)] {
                    match (flag.verdict, want) {
                        (Verdict::Indeterminate, _) => unknown = true,
                        (v, Some(w)) if (v == Verdict::Yes) != w => mismatches += 1.0,
                        _ => {}
                    }
                }
                o.residual = mismatches;
                o.tolerance = Some(0.0);
                o.indeterminate = unknown && mismatches == 0.0;
                o.values = [
                    ("totally_geodesic", code(c.totally_geodesic.verdict)),
                    ("totally_geodesic_residual", c.totally_geodesic.max_residual),
                    ("totally_umbilical", code(c.totally_umbilical.verdict)),
                    ("totally_umbilical_residual", c.totally_umbilical.max_residual),
                    ("minimal", code(c.minimal.verdict)),
                    ("minimal_residual", c.minimal.max_residual),
                ]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect();
                o.values.insert("classification_tolerance".into(), tol);
            }
            CheckKind::Compose => {
                for p in &self.points {
                    let q = s.composite.image(p)?;
                    let mut r: f64 = 0.0;
                    for f in [Factor::First, Factor::Second] {
                        let (a, b) = (s.source.warp_value(f, p)?, s.ambient.warp_value(f, &q)?);
                        r = r.max((a - b).abs() / (1.0 + b.abs()));
                    }
                    o.update(r, p, &[]);
                }
            }
            CheckKind::PartialMeanCurvature => {
                for p in &self.points {
                    let sp = s.at(p)?;
                    let (n1, n2) = (sp.n1 as f64, sp.n2 as f64);
                    let combo =
                        (sp.partial_mean_curvature(Factor::First) * n1 + sp.partial_mean_curvature(Factor::Second) * n2) / (n1 + n2);
                    o.update((combo - sp.mean_curvature()).amax(), p, &[]);
                }
            }
            CheckKind::MixedGeodesy | CheckKind::HDecomposition => {
                for p in &self.points {
                    let hd = s.h_decomposition_check(p)?;
                    let r = if kind == CheckKind::MixedGeodesy { hd.mixed } else { hd.first.max(hd.second) };
                    o.update(r, p, &[("mixed", hd.mixed), ("first", hd.first), ("second", hd.second)]);
                }
            }
            CheckKind::NormIdentity => {
                for p in &self.points {
                    let ni = s.norm_identity_check(p, CLASSIFICATION_TOLERANCE)?;
                    let disagree = if ni.equality != ni.factors_totally_geodesic { 1.0 } else { 0.0 };
                    o.update(
                        ni.relative_residual.max(disagree),
                        p,
                        &[
                            ("h_squared", ni.h_squared),
                            ("h0_squared", ni.h0_squared),
                            ("bound", ni.bound),
                            ("equality", ni.equality as u8 as f64),
                            ("factors_totally_geodesic", ni.factors_totally_geodesic as u8 as f64),
                        ],
                    );
                }
            }
            CheckKind::NiGeodesy | CheckKind::Umbilical | CheckKind::Minimality => {
                let pts = &self.points;
                let named: Vec<(&str, Biconditional)> = match kind {
                    CheckKind::NiGeodesy => vec![
                        ("n1_geodesic", s.ni_geodesy_check(Factor::First, pts, tol)?),
                        ("n2_geodesic", s.ni_geodesy_check(Factor::Second, pts, tol)?),
                        ("totally_geodesic", s.total_geodesy_check(pts, tol)?),
                    ],
                    CheckKind::Umbilical => vec![("umbilical", s.umbilical_check(pts, tol)?)],
                    _ => vec![
                        ("n1_minimal", s.ni_minimality_check(Factor::First, pts, tol)?),
                        ("n2_minimal", s.ni_minimality_check(Factor::Second, pts, tol)?),
                        ("minimal", s.minimality_check(pts, tol)?),
                    ],
                };
                let mut disagreements = 0.0;
                for (name, b) in &named {
                    if !b.agree() {
                        disagreements += 1.0;
                    }
                    o.indeterminate |= b.direct.verdict == Verdict::Indeterminate || b.factor_side.verdict == Verdict::Indeterminate;
                    o.values.insert(name.to_string(), code(b.direct.verdict));
                    o.values.insert(format!("{name}_residual"), b.direct.max_residual);
                    o.values.insert(format!("{name}_factor_side_residual"), b.factor_side.max_residual);
                }
                if kind == CheckKind::Minimality {
                    let (mut rel_max, mut swapped): (f64, f64) = (0.0, 0.0);
                    for p in pts {
                        let m = s.at(p)?.minimality_relations();
                        rel_max = rel_max.max(m.factor_relation);
                        swapped = swapped.max(m.factor_relation_swapped);
                    }
                    o.values.insert("factor_relation".into(), rel_max);
                    o.values.insert("factor_relation_literal".into(), swapped);
                    if let Some(want) = self.file.decl.expect.minimal {
                        let got = named.last().map(|(_, b)| b.direct.verdict == Verdict::Yes).unwrap_or(false);
                        if got != want {
                            disagreements += 1.0;
                        }
                    }
                }
                o.residual = disagreements;
                o.tolerance = Some(0.0);
                o.indeterminate &= disagreements == 0.0;
                o.values.insert("classification_tolerance".into(), tol);
            }
            CheckKind::ShapeOperatorClosedForm => {
                let mut any = false;
                for p in &self.points {
                    if let Some(r) = s.shape_operator_closed_form_check(p)? {
                        any = true;
                        o.update(
                            r.shape_operator.max(r.normal_connection),
                            p,
                            &[("shape_operator", r.shape_operator), ("normal_connection", r.normal_connection)],
                        );
                    }
                }
                if !any {
                    return Ok(Outcome::skipped("neither factor immersion has a normal direction"));
                }
            }
            CheckKind::H1DotH2 => {
                // harmonic warps in flat ambient force ⟨H₁,H₂⟩ = 0
                let vanishing = s.c == Some(0.0) && self.file.decl.hypotheses.contains(&Hypothesis::Harmonic);
                if vanishing {
                    o.tolerance = Some(tol.min(1e-8));
                }
                for p in &self.points {
                    let r = s.h1_dot_h2_check(p)?;
                    let res = if vanishing { r.residual.max(r.inner.abs()) } else { r.residual };
                    o.update(
                        res,
                        p,
                        &[("inner", r.inner), ("laplacian_term1", r.laplacian_term1), ("laplacian_term2", r.laplacian_term2), ("c", r.c)],
                    );
                }
            }
            CheckKind::AhClosedForm => {
                for p in &self.points {
                    let (a1, a2) = s.a_h_closed_form_check(p)?;
                    o.update(a1.max(a2), p, &[("first", a1), ("second", a2)]);
                }
            }
            CheckKind::MaxSectional => {
                for (k, p) in self.points.iter().enumerate() {
                    let sp = s.at(p)?;
                    let seed = self.seed.wrapping_add(k as u64);
                    let small = chenineq::max_ambient_sectional_sampled(&sp, chenineq::MIN_BUDGET, seed);
                    let full = chenineq::max_ambient_sectional_sampled(&sp, self.budget, seed);
                    let again = chenineq::max_ambient_sectional_sampled(&sp, self.budget, seed);
                    let mut r = (small - full).max(0.0).max((full - again).abs());
                    let mut vals = vec![("max_sectional", full), ("max_sectional_min_budget", small)];
                    if let Some(c) = s.c {
                        r = r.max((full - c).abs());
                        vals.push(("c", c));
                    }
                    o.update(r, p, &vals);
                }
            }
            CheckKind::Inequality | CheckKind::InequalitySpaceForm => {
                let want = self.file.decl.expect.equality;
                let mut equality_points = 0.0;
                for (k, p) in self.points.iter().enumerate() {
                    let rep = if kind == CheckKind::Inequality {
                        chenineq::inequality_general(s, p, self.budget, self.seed.wrapping_add(k as u64))?
                    } else {
                        chenineq::inequality_space_form(s, p)?
                    };
                    if rep.equality {
                        equality_points += 1.0;
                    }
                    let mut r = (-rep.gap).max(0.0);
                    if !rep.equality_consistent() || want.is_some_and(|w| w != rep.equality) {
                        r = r.max(1.0);
                    }
                    o.update(r, p, &inequality_values(&rep));
                }
                o.values.insert("equality_points".into(), equality_points);
            }
            CheckKind::Obstruction => {
                let hyps = &self.file.decl.hypotheses;
                if hyps.is_empty() {
                    return Ok(Outcome::skipped("no hypotheses declared"));
                }
                match chenineq::obstruction_probe(s, hyps, &self.points, self.budget, self.seed) {
                    Err(Error::Hypothesis { tag, residual }) => {
                        o.residual = residual;
                        o.message = Some(format!("hypothesis `{tag}` rejected"));
                        o.values.insert("hypothesis_residual".into(), residual);
                    }
                    Err(e) => return Err(e),
                    Ok(rep) => {
                        let failed = rep.checks.iter().filter(|c| !c.holds).count();
                        o.residual = failed as f64;
                        o.tolerance = Some(0.0);
                        for (tag, r) in &rep.hypotheses {
                            o.values.insert(format!("hypothesis {tag}"), *r);
                        }
                        o.values.insert("derived_checks".into(), rep.checks.len() as f64);
                        if let Some(c) = rep.checks.iter().find(|c| !c.holds).or(rep.checks.first()) {
                            o.point = Some(c.point.clone());
                            o.values.insert(format!("{} lhs", c.name), c.lhs);
                            o.values.insert(format!("{} rhs", c.name), c.rhs);
                        }
                        if rep.checks.is_empty() {
                            o.message = Some("hypotheses hold; no derived inequality applies".into());
                        }
                    }
                }
            }
        }
        Ok(o)
    }
}

fn inequality_values(r: &InequalityReport) -> Vec<(&'static str, f64)> {
    let mut v = vec![
        ("lhs", r.lhs),
        ("rhs", r.rhs),
        ("gap", r.gap),
        ("mean_curvature_sq", r.mean_curvature_sq),
        ("max_sectional", r.max_sectional),
        ("equality", r.equality as u8 as f64),
        ("mixed_tg_residual", r.mixed_tg_residual),
        ("balance_residual", r.balance_residual),
        ("equality_conditions", r.equality_conditions() as u8 as f64),
    ];
    if let Some(m) = r.mixed_plane_residual {
        v.push(("mixed_plane_residual_sampled", m));
    }
    v
}

fn record(kind: CheckKind, tol: f64, outcome: Result<Outcome>) -> CheckRecord {
    let mut rec = CheckRecord {
        name: kind.name().to_string(),
        anchor: kind.anchor().to_string(),
        point: None,
        values: BTreeMap::new(),
        residual: None,
        tolerance: tol,
        verdict: CheckVerdict::Error,
        message: None,
    };
    match outcome {
        Err(e) => rec.message = Some(e.to_string()),
        Ok(o) if o.skipped => {
            rec.verdict = CheckVerdict::Skipped;
            rec.message = o.message;
        }
        Ok(o) => {
            rec.tolerance = o.tolerance.unwrap_or(tol);
            rec.point = o.point;
            rec.message = o.message;
            rec.values = o.values.into_iter().filter(|(_, v)| v.is_finite()).collect();
            if !o.residual.is_finite() {
                rec.verdict = CheckVerdict::Fail;
                rec.message.get_or_insert_with(|| "non-finite residual".into());
                return rec;
            }
            rec.residual = Some(o.residual);
            rec.verdict = if o.residual > rec.tolerance {
                CheckVerdict::Fail
            } else if o.indeterminate {
                CheckVerdict::Indeterminate
            } else {
                CheckVerdict::Pass
            };
        }
    }
    rec
}

fn skipped(kind: CheckKind, tol: f64, why: &str) -> CheckRecord {
    record(kind, tol, Ok(Outcome::skipped(why)))
}

/// Runs the requested checks, gates first. Each check is isolated: its
/// errors and panics become an error record.
pub fn run_checks(file: &ScenarioFile, opts: &RunOptions) -> CheckReport {
    let s = &file.scenario;
    let sampling = opts.points.map_or(file.decl.sampling, Sampling::Random);
    let points = sample_points(s.source.product().bounds(), sampling, opts.seed);
    let ctx = Context { file, s, points, seed: opts.seed, budget: opts.budget.max(chenineq::MIN_BUDGET) };

    let requested: Vec<(CheckKind, Option<f64>)> = if opts.only.is_empty() {
        file.checks.iter().map(|c| (c.kind, c.tolerance)).collect()
    } else {
        opts.only.iter().map(|k| (*k, file.checks.iter().find(|c| c.kind == *k).and_then(|c| c.tolerance))).collect()
    };
    let mut order: Vec<(CheckKind, Option<f64>)> = Vec::new();
    for gate in [CheckKind::Isometry, CheckKind::SpaceForm] {
        if gate == CheckKind::SpaceForm && s.c.is_none() {
            continue;
        }
        let tol = requested.iter().find(|(k, _)| *k == gate).and_then(|(_, t)| *t);
        order.push((gate, tol));
    }
    for (k, t) in requested {
        if !order.iter().any(|(o, _)| *o == k) {
            order.push((k, t));
        }
    }

    let mut records = Vec::new();
    let (mut isometric, mut space_form) = (true, s.c.is_some());
    for (kind, file_tol) in order {
        let tol = file_tol.or(opts.tolerance).unwrap_or(kind.default_tolerance());
        if kind.needs_isometry() && !isometric {
            records.push(skipped(kind, tol, "skipped: isometry check failed"));
            continue;
        }
        if kind.needs_space_form() && !space_form {
            let why = if s.c.is_none() { "no space-form constant declared" } else { "skipped: space-form check failed" };
            records.push(skipped(kind, tol, why));
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(|| ctx.run(kind, tol)))
            .unwrap_or_else(|_| Err(Error::Invalid(format!("check `{}` panicked", kind.name()))));
        let rec = record(kind, tol, outcome);
        match kind {
            CheckKind::Isometry => isometric = rec.verdict == CheckVerdict::Pass,
            CheckKind::SpaceForm => space_form = rec.verdict == CheckVerdict::Pass,
            _ => {}
        }
        records.push(rec);
    }
    let summary = Summary::of(&records);
    CheckReport {
        scenario: file.id().to_string(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: opts.seed,
        points: ctx.points.len(),
        budget: ctx.budget,
        records,
        summary,
    }
}
