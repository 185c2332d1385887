//! Property suite behind `ops-check`: identities that the geometric
//! kernels and the distributional assemblies must satisfy.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regge_core::expr::Expr;
use regge_core::geom::{
    curl_g_sigma, det, div_g_div_g_s_g, div_g_tensor, flat, gauss_curvature, geodesic_curvature_weight, hodge_star,
    inc_g_sigma, interior_angle, normal_tangent, normal_tangent_with_derivative, s_g_jet, Mat2, MetricJet, SigmaJet,
    SymJet, Vec2, IDENTITY,
};
use regge_core::lift::{
    assemble_curl_rhs, assemble_inc_rhs, interpolate_metric, verify_integral_representation, CurlForm, Difference,
    IncPath, LiftError, Smooth,
};
use regge_core::mesh::{Rect, TriMesh};
use regge_core::quad::{edge_rule, triangle_rule};
use regge_core::spaces::{
    regge_interpolate, triangle_points, AnalyticMetric, AnalyticTensor, DofVector, FeSpace, SpaceKind, TensorField,
};

/// Result of one property.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    /// Worst observed residual (or ratio, for rate checks).
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckOutcome {
    fn at_most(name: impl Into<String>, value: f64, tol: f64) -> CheckOutcome {
        CheckOutcome { name: name.into(), value, tol, pass: value <= tol }
    }

    fn at_least(name: impl Into<String>, value: f64, tol: f64) -> CheckOutcome {
        CheckOutcome { name: name.into(), value, tol, pass: value >= tol }
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        format!("{verdict} {}: {:.3e} (tolerance {:.1e})", self.name, self.value, self.tol)
    }
}

fn uniform(rng: &mut ChaCha8Rng, a: f64) -> f64 {
    rng.gen_range(-a..=a)
}

/// Random symmetric 2-jet with second derivatives symmetric in the
/// differentiation indices.
fn random_jet(rng: &mut ChaCha8Rng, v: Mat2, a: f64) -> SymJet {
    let mut j = SymJet::constant(v);
    for k in 0..2 {
        let (p, q) = (uniform(rng, a), uniform(rng, a));
        let r = uniform(rng, a);
        j.d[k] = [[p, q], [q, r]];
    }
    for k in 0..2 {
        for l in k..2 {
            let (p, q, r) = (uniform(rng, a), uniform(rng, a), uniform(rng, a));
            j.dd[k][l] = [[p, q], [q, r]];
            j.dd[l][k] = j.dd[k][l];
        }
    }
    j
}

/// Random metric jet with eigenvalues bounded away from zero.
pub fn random_metric_jet(rng: &mut ChaCha8Rng) -> MetricJet {
    let a = [[uniform(rng, 1.0), uniform(rng, 1.0)], [uniform(rng, 1.0), uniform(rng, 1.0)]];
    let mut v = IDENTITY;
    for i in 0..2 {
        for j in 0..2 {
            v[i][j] = 0.5 * v[i][j] + a[i][0] * a[j][0] + a[i][1] * a[j][1];
        }
    }
    random_jet(rng, v, 0.5)
}

pub fn random_sigma_jet(rng: &mut ChaCha8Rng) -> SigmaJet {
    let (p, q, r) = (uniform(rng, 1.0), uniform(rng, 1.0), uniform(rng, 1.0));
    random_jet(rng, [[p, q], [q, r]], 1.0)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec2 {
    let a: f64 = rng.gen_range(0.0..2.0 * PI);
    [a.cos(), a.sin()]
}

/// Worst central-difference mismatch of `f` against `exact`, relative
/// to `max(|exact|, 1)`, at step `t`.
fn fd_mismatch(t: f64, exact: f64, f: impl Fn(f64) -> f64) -> f64 {
    let fd = (f(t) - f(-t)) / (2.0 * t);
    (fd - exact).abs() / exact.abs().max(1.0)
}

/// The three first-variation identities checked by central differences
/// on `samples` random jets. Returns, per identity, the worst mismatch at
/// `t = 1e-4` and the smallest error reduction factor from `t = 1e-3`.
pub fn variation_residuals(samples: usize, seed: u64) -> [(f64, f64); 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = [(0.0f64, f64::INFINITY); 3];
    for _ in 0..samples {
        let g = random_metric_jet(&mut rng);
        let s = random_sigma_jet(&mut rng);
        let path = |t: f64| g.axpy(t, &s);

        let area = |t: f64| {
            let j = path(t);
            gauss_curvature(&j) * det(&j.v).sqrt()
        };
        let ex_area = -0.5 * det(&g.v).sqrt() * inc_g_sigma(&g, &s);

        let tau = random_unit(&mut rng);
        let edge = |t: f64| geodesic_curvature_weight(&path(t), tau);
        let c = curl_g_sigma(&g, &s);
        let (_, ds) = normal_tangent_with_derivative(&g, &s, tau);
        let ex_edge = 0.5 * (c[0] * tau[0] + c[1] * tau[1] + ds);

        // Corner with a well separated pair of edge directions.
        let tin = random_unit(&mut rng);
        let turn: f64 = rng.gen_range(0.3..PI - 0.3);
        let tout = [tin[0] * turn.cos() - tin[1] * turn.sin(), tin[0] * turn.sin() + tin[1] * turn.cos()];
        let angle = |t: f64| interior_angle(&path(t).v, tin, tout).expect("nonzero edge vectors");
        let ex_angle = -0.5 * (normal_tangent(&g.v, &s.v, tout) - normal_tangent(&g.v, &s.v, tin));

        let cases: [(&dyn Fn(f64) -> f64, f64); 3] = [(&area, ex_area), (&edge, ex_edge), (&angle, ex_angle)];
        for (o, (f, ex)) in out.iter_mut().zip(cases) {
            let fine = fd_mismatch(1e-4, ex, f);
            let coarse = fd_mismatch(1e-3, ex, f);
            o.0 = o.0.max(fine);
            // A mismatch already at roundoff level cannot show a rate.
            if fine > 1e-11 {
                o.1 = o.1.min(coarse / fine);
            }
        }
    }
    out
}

/// Pointwise residuals of `⋆(div_g S_g σ)♭ = -curl_g σ` and
/// `div_g div_g S_g σ = -inc_g σ` on `samples` random jets.
pub fn identity_residuals(samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut r1, mut r2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let g = random_metric_jet(&mut rng);
        let s = random_sigma_jet(&mut rng);
        let lhs = hodge_star(&g.v, flat(&g.v, div_g_tensor(&g, &s_g_jet(&g, &s))));
        let rhs = curl_g_sigma(&g, &s);
        let scale = rhs[0].abs().max(rhs[1].abs()).max(1.0);
        r1 = r1.max(((lhs[0] + rhs[0]).abs()).max((lhs[1] + rhs[1]).abs()) / scale);
        let inc = inc_g_sigma(&g, &s);
        r2 = r2.max((div_g_div_g_s_g(&g, &s) + inc).abs() / inc.abs().max(1.0));
    }
    (r1, r2)
}

/// Polynomial metrics of degree `k` that stay positive definite on the
/// unit square.
fn polynomial_metric(k: usize) -> AnalyticTensor {
    let parts = [
        ("2", "0.3", "1.5"),
        ("0.4*x - 0.3*y", "0.2*x - 0.1*y", "0.5*y + 0.2*x"),
        ("0.3*x*y - 0.2*y^2", "0.1*x^2 - 0.2*x*y", "0.4*x^2 + 0.1*y^2"),
    ];
    let mut e = [String::new(), String::new(), String::new()];
    for p in parts.iter().take(k + 1) {
        for (s, q) in e.iter_mut().zip([p.0, p.1, p.2]) {
            if !s.is_empty() {
                s.push_str(" + ");
            }
            s.push_str(q);
        }
    }
    AnalyticTensor::parse(&e[0], &e[1], &e[2]).expect("fixed expressions parse")
}

/// Worst per-element Gauss–Bonnet defect
/// `|∫_T K vol + Σ_E ∫_E κ vol_E + Σ_V (π - ∡_V) - 2π|` for the Regge
/// interpolant of a degree-`k` polynomial metric.
pub fn gauss_bonnet_residual(mesh: &Arc<TriMesh>, k: usize, quad_degree: usize) -> Result<f64, LiftError> {
    let space = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Regge, k, &[])?);
    let g = regge_interpolate(&polynomial_metric(k), &space, quad_degree)?;
    let rule = triangle_rule(quad_degree)?;
    let erule = edge_rule(quad_degree)?;
    let mut worst = 0.0f64;
    for t in 0..mesh.n_triangles() {
        let mut total = 0.0;
        for (x, w) in triangle_points(mesh, t, &rule) {
            let j = g.sym_jet(t, x);
            total += w * gauss_curvature(&j) * det(&j.v).sqrt();
        }
        let p = mesh.tri_points(t);
        for i in 0..3 {
            let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let tau = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
            for (s, w) in erule.iter() {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                total += w * len * geodesic_curvature_weight(&g.sym_jet(t, x), tau);
            }
        }
        for j in 0..3 {
            let (a, v, b) = (p[(j + 2) % 3], p[j], p[(j + 1) % 3]);
            let tin = [v[0] - a[0], v[1] - a[1]];
            let tout = [b[0] - v[0], b[1] - v[1]];
            let ang = interior_angle(&g.sym_jet(t, v).v, tin, tout).map_err(|e| LiftError::Mismatch(e.to_string()))?;
            total += PI - ang;
        }
        worst = worst.max((total - 2.0 * PI).abs());
    }
    Ok(worst)
}

fn l2_norm(field: &dyn TensorField, mesh: &TriMesh, quad_degree: usize) -> Result<f64, LiftError> {
    let rule = triangle_rule(quad_degree)?;
    let mut s = 0.0;
    for t in 0..mesh.n_triangles() {
        for (x, w) in triangle_points(mesh, t, &rule) {
            let v = field.value(x)?;
            s += w * (v[0][0].powi(2) + 2.0 * v[0][1].powi(2) + v[1][1].powi(2));
        }
    }
    Ok(s.sqrt())
}

/// Polynomial tensor field of degree `k + 2`, outside `Regge_k`.
fn polynomial_sigma(k: usize) -> AnalyticTensor {
    let m = k + 2;
    AnalyticTensor::parse(
        &format!("x^{m} + 0.5*y^{m} - x*y"),
        &format!("0.7*x^{} * y - y^{m}", m - 1),
        &format!("x*y^{} + 0.3*x^{m} + 1", m - 1),
    )
    .expect("fixed expressions parse")
}

/// `max |(curl_δh(σ - Πσ), v_h)|` over `v_h` in the BDM space with zero
/// normal trace and `max |(inc_δh(σ - Πσ), u_h)|` over `u_h` in the
/// Lagrange space vanishing on the boundary, both divided by `‖σ‖_{L²}`.
pub fn euclidean_identity_residuals(mesh: &Arc<TriMesh>, k: usize) -> Result<(f64, f64), LiftError> {
    let tags: Vec<String> = mesh.tag_set().into_iter().collect();
    let qd = 2 * k + 10;
    let regge = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Regge, k, &[])?);
    let delta = regge_interpolate(&AnalyticTensor::parse("1", "0", "1").expect("parses"), &regge, qd)?;
    let sigma = polynomial_sigma(k);
    let interp = regge_interpolate(&sigma, &regge, qd)?;
    let smooth = Smooth(&sigma);
    let diff = Difference(&smooth, &interp);
    let norm = l2_norm(&sigma, mesh, qd)?;
    let w = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Bdm, k, &tags)?);
    let curl = assemble_curl_rhs(&delta, &diff, &w, qd, CurlForm::Sigma)?.max_free();
    let v = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Lagrange, k + 1, &tags)?);
    let inc = assemble_inc_rhs(&delta, &diff, &v, qd, IncPath::Direct)?.max_free();
    Ok((curl / norm, inc / norm))
}

/// Relative mismatch between the composed and direct incompatibility
/// assemblies for a random Regge `σ` and `g = Π_R gex`.
pub fn inc_path_mismatch(mesh: &Arc<TriMesh>, gex: &AnalyticMetric, k: usize, seed: u64) -> Result<f64, LiftError> {
    let qd = 2 * k + 8;
    let regge = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Regge, k, &[])?);
    let g = interpolate_metric(gex, &regge, qd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..regge.ndof()).map(|_| uniform(&mut rng, 1.0)).collect();
    let sigma = DofVector::new(regge.clone(), coeffs)?;
    let v = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Lagrange, k + 1, &[])?);
    let a = assemble_inc_rhs(&g, &sigma, &v, qd, IncPath::Composed)?;
    let b = assemble_inc_rhs(&g, &sigma, &v, qd, IncPath::Direct)?;
    let scale = a.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(diff / scale.max(f64::MIN_POSITIVE))
}

/// Integral-representation residuals for each number of `t` points.
pub fn integral_representation_residuals(
    mesh: &Arc<TriMesh>,
    gex: &AnalyticMetric,
    t_points: &[usize],
) -> Result<Vec<f64>, LiftError> {
    let k = 1;
    let qd = 2 * k + 8;
    let tags: Vec<String> = mesh.tag_set().into_iter().collect();
    let regge = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Regge, k, &[])?);
    let g = interpolate_metric(gex, &regge, qd)?;
    let v = Arc::new(FeSpace::new(mesh.clone(), SpaceKind::Lagrange, k + 1, &tags)?);
    t_points.iter().map(|&n| verify_integral_representation(&g, &v, n, qd)).collect()
}

/// Numbers of `t` points tried by [`run_suite`].
pub const IR_POINTS: [usize; 5] = [2, 5, 10, 20, 40];

/// Residuals below this are at roundoff level and compare as equal.
pub const IR_FLOOR: f64 = 1e-13;

/// Whether every residual is at most its predecessor, ignoring
/// fluctuations once both are below `floor`.
pub fn decreasing_to_floor(r: &[f64], floor: f64) -> bool {
    r.windows(2).all(|w| w[1] <= w[0] || w[1] < floor)
}

/// Settings for [`run_suite`].
#[derive(Debug, Clone)]
pub struct SuiteSettings {
    pub metric: AnalyticMetric,
    pub rect: Rect,
    pub n: usize,
    pub perturb_amplitude: f64,
    pub seed: u64,
    pub degrees: Vec<usize>,
}

impl SuiteSettings {
    /// The quarter-domain graph metric on a perturbed `4 x 4` mesh.
    pub fn standard(seed: u64) -> SuiteSettings {
        let f = Expr::parse("1/2*(x^2+y^2) - 1/12*(x^4+y^4)").expect("parses");
        SuiteSettings {
            metric: AnalyticMetric::graph(&f),
            rect: Rect::new([0.0, 0.0], [1.0, 1.0]),
            n: 4,
            perturb_amplitude: 0.25,
            seed,
            degrees: vec![0, 1, 2],
        }
    }
}

/// Runs every property and returns the outcomes in a fixed order.
pub fn run_suite(s: &SuiteSettings) -> Result<Vec<CheckOutcome>, LiftError> {
    let mesh = Arc::new(TriMesh::structured(s.n, s.rect).perturb(s.perturb_amplitude, s.seed));
    let mut out = Vec::new();

    for &k in &s.degrees {
        let r = gauss_bonnet_residual(&mesh, k.min(2), 2 * k + 8)?;
        out.push(CheckOutcome::at_most(format!("element Gauss-Bonnet, k={k}"), r, 1e-8));
    }

    let names = ["area", "edge", "angle"];
    for (name, (fine, reduction)) in names.iter().zip(variation_residuals(100, s.seed)) {
        out.push(CheckOutcome::at_most(format!("variation of {name} term at t=1e-4"), fine, 1e-6));
        // Second-order differences shrink by 100 for a tenfold smaller step.
        out.push(CheckOutcome::at_least(format!("variation of {name} term, error reduction"), reduction, 50.0));
    }

    let (r1, r2) = identity_residuals(100, s.seed);
    out.push(CheckOutcome::at_most("divergence form of curl_g", r1, 1e-8));
    out.push(CheckOutcome::at_most("divergence form of inc_g", r2, 1e-8));

    for &k in &s.degrees {
        let (c, i) = euclidean_identity_residuals(&mesh, k)?;
        out.push(CheckOutcome::at_most(format!("Euclidean curl orthogonality, k={k}"), c, 1e-10));
        out.push(CheckOutcome::at_most(format!("Euclidean inc orthogonality, k={k}"), i, 1e-10));
    }

    for &k in &s.degrees {
        let r = inc_path_mismatch(&mesh, &s.metric, k, s.seed)?;
        out.push(CheckOutcome::at_most(format!("direct vs composed inc, k={k}"), r, 1e-8));
    }

    let r = integral_representation_residuals(&mesh, &s.metric, &IR_POINTS)?;
    out.push(CheckOutcome::at_most("integral representation, 20 t-points", r[3], 1e-6));
    out.push(CheckOutcome {
        name: "integral representation decreases from 2 to 40 t-points".into(),
        value: r[4],
        tol: IR_FLOOR,
        pass: decreasing_to_floor(&r, IR_FLOOR),
    });
    Ok(out)
}
