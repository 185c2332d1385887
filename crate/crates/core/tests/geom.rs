use std::f64::consts::PI;

use proptest::prelude::*;
use regge_core::expr::{Expr, ExprJet};
use regge_core::geom::*;
use regge_core::quad::{edge_rule, triangle_rule};
use regge_core::spaces::{AnalyticMetric, AnalyticTensor, TensorField};

const F_QUARTER: &str = "1/2*(x^2+y^2) - 1/12*(x^4+y^4)";
const H: f64 = 1e-5;

fn graph(f: &str) -> AnalyticMetric {
    AnalyticMetric::graph(&Expr::parse(f).unwrap())
}

fn jet(m: &dyn TensorField, x: f64, y: f64) -> MetricJet {
    m.jet([x, y]).unwrap()
}

/// Central difference of `f` along coordinate `k`.
fn fd<T, F>(x: [f64; 2], k: usize, f: F) -> T
where
    F: Fn([f64; 2]) -> T,
    T: Sub2,
{
    let (mut p, mut m) = (x, x);
    p[k] += H;
    m[k] -= H;
    f(p).diff_quot(&f(m), 2.0 * H)
}

trait Sub2 {
    fn diff_quot(&self, other: &Self, h: f64) -> Self;
}

impl Sub2 for f64 {
    fn diff_quot(&self, other: &f64, h: f64) -> f64 {
        (self - other) / h
    }
}

impl Sub2 for Vec2 {
    fn diff_quot(&self, o: &Vec2, h: f64) -> Vec2 {
        [(self[0] - o[0]) / h, (self[1] - o[1]) / h]
    }
}

impl Sub2 for Mat2 {
    fn diff_quot(&self, o: &Mat2, h: f64) -> Mat2 {
        [self[0].diff_quot(&o[0], h), self[1].diff_quot(&o[1], h)]
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

// Closed forms for the quarter graph metric.

fn a_term(x: f64) -> f64 {
    x * x * (x * x - 3.0).powi(2)
}

fn exact_k(x: f64, y: f64) -> f64 {
    81.0 * (1.0 - x * x) * (1.0 - y * y) / (9.0 + a_term(x) + a_term(y)).powi(2)
}

fn exact_kappa_top(x: f64, y: f64) -> f64 {
    let b = a_term(x) + 9.0;
    -27.0 * (x * x - 1.0) * y * (y * y - 3.0) / (b.powf(1.5) * (b + a_term(y)).sqrt())
}

/// Closed-form connection coefficients, with `A = 9 + x²(x²-3)² + y²(y²-3)²`.
fn exact_omega(x: f64, y: f64) -> Vec2 {
    let a = 9.0 + a_term(x) + a_term(y);
    let s = a.sqrt();
    let den = s * ((a + 9.0) * s + 6.0 * a);
    let num = 9.0 + 3.0 * s + a_term(x) + a_term(y);
    [
        -3.0 * y * (y * y - 3.0) * (x * x - 1.0) * num / den,
        3.0 * x * (x * x - 3.0) * (y * y - 1.0) * num / den,
    ]
}

#[test]
fn christoffel_symbols_match_finite_differences() {
    let m = graph(F_QUARTER);
    let x = [0.3, 0.4];
    let dg: [Mat2; 2] = [fd(x, 0, |p| m.value(p).unwrap()), fd(x, 1, |p| m.value(p).unwrap())];
    let g = m.value(x).unwrap();
    let ginv = inv(&g);
    let c1 = christoffel_first(&jet(&m, x[0], x[1]));
    let c2 = christoffel_second(&jet(&m, x[0], x[1]));
    for i in 0..2 {
        for j in 0..2 {
            for l in 0..2 {
                let want = 0.5 * (dg[i][j][l] + dg[j][l][i] - dg[l][i][j]);
                assert!(close(c1[i][j][l], want, 1e-7), "Γ_{i}{j}{l}");
            }
        }
    }
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let want: f64 = (0..2).map(|l| ginv[k][l] * 0.5 * (dg[i][j][l] + dg[j][l][i] - dg[l][i][j])).sum();
                assert!(close(c2[k][i][j], want, 1e-7), "Γ^{k}_{i}{j}");
            }
        }
    }
}

#[test]
fn christoffel_derivative_matches_finite_differences() {
    let m = graph(F_QUARTER);
    let x = [-0.2, 0.7];
    let d = christoffel_second_derivative(&jet(&m, x[0], x[1]));
    for q in 0..2 {
        let num: [Mat2; 2] = [
            fd(x, q, |p| christoffel_second(&jet(&m, p[0], p[1]))[0]),
            fd(x, q, |p| christoffel_second(&jet(&m, p[0], p[1]))[1]),
        ];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!(close(d[q][k][i][j], num[k][i][j], 1e-7));
                }
            }
        }
    }
}

#[test]
fn diagonal_metric_christoffel_hand_value() {
    let m = AnalyticMetric::entries(&Expr::parse("1+2*x").unwrap(), &Expr::c(0.0), &Expr::c(1.0));
    let c1 = christoffel_first(&jet(&m, 0.3, 0.1));
    // Γ_111 = ∂_1 g_11 / 2 = 1, every other symbol vanishes.
    assert!((c1[0][0][0] - 1.0).abs() < 1e-14);
    let rest: f64 = (1..8).map(|n| c1[n >> 2][(n >> 1) & 1][n & 1].abs()).sum();
    assert!(rest < 1e-14);
}

#[test]
fn graph_curvature_matches_classical_formula() {
    let mut rng = Lcg(17);
    for f in [F_QUARTER, "sin(x)*cos(y) + x^3*y/3", "exp(x/2 - y/3) + x*y^2"] {
        let e = Expr::parse(f).unwrap();
        let fj = ExprJet::new(&e, 2);
        let m = AnalyticMetric::graph(&e);
        for _ in 0..20 {
            let (x, y) = (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            let v = fj.eval_all(x, y).unwrap();
            let (fx, fy, fxx, fxy, fyy) = (v[1], v[2], v[3], v[4], v[5]);
            let want = (fxx * fyy - fxy * fxy) / (1.0 + fx * fx + fy * fy).powi(2);
            let got = gauss_curvature(&jet(&m, x, y));
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-3), "{f} at ({x}, {y}): {got} vs {want}");
        }
    }
}

#[test]
fn quarter_metric_curvature_point_values() {
    let m = graph(F_QUARTER);
    assert!((gauss_curvature(&jet(&m, 0.0, 0.0)) - 1.0).abs() < 1e-12);
    assert!(gauss_curvature(&jet(&m, 1.0, 1.0)).abs() < 1e-12);
    for (x, y) in [(0.2, 0.9), (0.5, 0.5), (0.77, 0.13)] {
        assert!(close(gauss_curvature(&jet(&m, x, y)), exact_k(x, y), 1e-12));
    }
}

#[test]
fn quarter_metric_boundary_geodesic_curvature() {
    let m = graph(F_QUARTER);
    // Left side traversed downwards, top side leftwards (counterclockwise).
    for y in [0.1, 0.5, 0.9] {
        assert!(geodesic_curvature(&jet(&m, 0.0, y), [0.0, -1.0]).abs() < 1e-14);
    }
    for x in [0.1, 0.5, 0.9] {
        let j = jet(&m, x, 1.0);
        let k = geodesic_curvature(&j, [-1.0, 0.0]);
        assert!(close(k, exact_kappa_top(x, 1.0), 1e-12), "{k} vs {}", exact_kappa_top(x, 1.0));
        let w = geodesic_curvature_weight(&j, [-1.0, 0.0]);
        assert!(close(w, k * j.v[0][0].sqrt(), 1e-14));
    }
    assert!((exact_kappa_top(0.5, 1.0) + 0.29202).abs() < 1e-5);
}

#[test]
fn geodesic_curvature_is_continuous_for_smooth_metrics() {
    let m = graph(F_QUARTER);
    // Both sides of an interior edge see the same jet; the weight of the
    // opposite orientation has the opposite sign.
    let j = jet(&m, 0.4, 0.3);
    let tau = [0.6, 0.8];
    let w = geodesic_curvature_weight(&j, tau);
    let back = geodesic_curvature_weight(&j, [-tau[0], -tau[1]]);
    assert!((w + back).abs() < 1e-10);
    assert_eq!(geodesic_curvature_weight(&SymJet::identity(), tau), 0.0);
}

#[test]
fn signed_and_interior_angles() {
    let d = IDENTITY;
    assert!((signed_angle(&d, [0.0, 1.0], [1.0, 0.0]).unwrap() - PI / 2.0).abs() < 1e-15);
    assert!((signed_angle(&d, [1.0, 0.0], [0.0, 1.0]).unwrap() + PI / 2.0).abs() < 1e-15);
    let g = [[1.0, 0.0], [0.0, 4.0]];
    assert!((signed_angle(&g, [1.0, 0.0], [0.0, 1.0]).unwrap() + PI / 2.0).abs() < 1e-15);
    assert_eq!(signed_angle(&d, [0.0, 0.0], [1.0, 0.0]), Err(GeomError::ZeroVector));
    assert!((signed_angle(&d, [-1.0, 0.0], [1.0, 0.0]).unwrap() - PI).abs() < 1e-15);
    // Reference triangle, corner at the origin: in along (0,-1), out along (1,0).
    assert!((interior_angle(&d, [0.0, -1.0], [1.0, 0.0]).unwrap() - PI / 2.0).abs() < 1e-15);
    assert!(interior_angle(&d, [0.0, 0.0], [1.0, 0.0]).is_err());
}

#[test]
fn square_roots_and_frames() {
    let b = spd_sqrt(&[[4.0, 0.0], [0.0, 9.0]]);
    assert!((b[0][0] - 2.0).abs() < 1e-15 && (b[1][1] - 3.0).abs() < 1e-15 && b[0][1] == 0.0);
    let f = frame(&SymJet::constant([[4.0, 0.0], [0.0, 9.0]]));
    assert!((f.e[0][0] - 0.5).abs() < 1e-15 && (f.e[1][1] - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(connection_coefficients(&SymJet::identity()), [0.0, 0.0]);
}

#[test]
fn sqrt_and_frame_derivatives_match_finite_differences() {
    let m = graph(F_QUARTER);
    let x = [0.35, -0.6];
    let j = jet(&m, x[0], x[1]);
    let db = spd_sqrt_derivative(&j);
    let f = frame(&j);
    for k in 0..2 {
        let num: Mat2 = fd(x, k, |p| spd_sqrt(&m.value(p).unwrap()));
        for a in 0..2 {
            for b in 0..2 {
                assert!(close(db[k][a][b], num[a][b], 1e-7));
            }
        }
        for i in 0..2 {
            let num: Vec2 = fd(x, k, |p| frame(&jet(&m, p[0], p[1])).e[i]);
            assert!(close(f.de[k][i][0], num[0], 1e-7) && close(f.de[k][i][1], num[1], 1e-7));
        }
    }
}

#[test]
fn connection_matches_numerically_differentiated_frame() {
    let m = graph(F_QUARTER);
    let x = [0.5, 0.5];
    let j = jet(&m, x[0], x[1]);
    let f = frame(&j);
    let c2 = christoffel_second(&j);
    let w = connection_coefficients(&j);
    for i in 0..2 {
        let de2: Vec2 = fd(x, i, |p| frame(&jet(&m, p[0], p[1])).e[1]);
        let mut cov = de2;
        for (a, ca) in cov.iter_mut().enumerate() {
            for l in 0..2 {
                *ca += c2[a][l][i] * f.e[1][l];
            }
        }
        assert!(close(w[i], bilinear(&j.v, f.e[0], cov), 1e-7));
    }
}

#[test]
fn connection_of_conformal_metric() {
    // g = e^{2x} δ: e_i = e^{-x} E_i and ∇_2 e_2 = -e^{-x} E_1, so ω = (0, -1).
    let e = Expr::parse("exp(2*x)").unwrap();
    let m = AnalyticMetric::entries(&e, &Expr::c(0.0), &e);
    for (x, y) in [(0.0, 0.0), (0.4, -0.3)] {
        let w = connection_coefficients(&jet(&m, x, y));
        assert!(w[0].abs() < 1e-13 && (w[1] + 1.0).abs() < 1e-13, "{w:?}");
    }
}

#[test]
fn quarter_metric_connection_closed_form() {
    let m = graph(F_QUARTER);
    let mut rng = Lcg(3);
    for _ in 0..20 {
        let (x, y) = (rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
        let w = connection_coefficients(&jet(&m, x, y));
        let want = exact_omega(x, y);
        assert!((w[0] - want[0]).abs() < 1e-13 && (w[1] - want[1]).abs() < 1e-13, "{w:?} vs {want:?}");
    }
}

#[test]
fn curl_and_inc_hand_values() {
    let s = AnalyticTensor::parse("0", "x", "0").unwrap().jet([0.3, 0.2]).unwrap();
    assert_eq!(euclidean_curl(&s), [1.0, 0.0]);
    assert_eq!(curl_g_sigma(&SymJet::identity(), &s), [1.0, 0.0]);
    let s = AnalyticTensor::parse("y^2", "0", "0").unwrap().jet([0.3, 0.2]).unwrap();
    assert_eq!(inc_g_sigma(&SymJet::identity(), &s), 2.0);
    assert_eq!(euclidean_inc(&s), 2.0);
    assert_eq!(inc_g_sigma(&SymJet::identity(), &SymJet::identity()), 0.0);
    assert_eq!(rot_g_scalar(&IDENTITY, [1.0, 0.0]), [0.0, -1.0]);
    assert_eq!(rot_g_scalar(&IDENTITY, [0.0, 1.0]), [1.0, 0.0]);
}

#[test]
fn inc_is_the_linearized_curvature() {
    let s = AnalyticTensor::parse("sin(x)*y", "x*y^2/3", "cos(x+y)").unwrap();
    let x = [0.3, -0.2];
    let sj = s.jet(x).unwrap();
    let kvol = |t: f64| {
        let g = SymJet::identity().axpy(t, &sj);
        gauss_curvature(&g) * det(&g.v).sqrt()
    };
    let t = 1e-4;
    let d = (kvol(t) - kvol(-t)) / (2.0 * t);
    assert!((d + 0.5 * inc_g_sigma(&SymJet::identity(), &sj)).abs() < 1e-6);
}

#[test]
fn edge_frame_is_orthonormal() {
    let g = [[2.0, 0.3], [0.3, 1.5]];
    let f = EdgeFrame::new(&g, [0.6, -0.8]);
    assert!((bilinear(&g, f.gt, f.gt) - 1.0).abs() < 1e-14);
    assert!((bilinear(&g, f.gn, f.gn) - 1.0).abs() < 1e-14);
    assert!(bilinear(&g, f.gt, f.gn).abs() < 1e-14);
    assert_eq!(f.nu, [0.8, 0.6]);
}

#[test]
fn curl_integration_by_parts_on_a_triangle() {
    let gm = AnalyticTensor::parse("2 + x^2", "x*y/2", "1.5 + y^2 - x/4").unwrap();
    let sm = AnalyticTensor::parse("x*y + 1", "x^2 - y", "y^3/3 + x").unwrap();
    // Z = (x y + 1, x^2 - y) and its gradient rows dz[i] = ∂_i Z.
    let z = |p: [f64; 2]| [p[0] * p[1] + 1.0, p[0] * p[0] - p[1]];
    let dz = |p: [f64; 2]| [[p[1], 2.0 * p[0]], [p[0], -1.0]];
    let tri = [[0.1, 0.2], [0.9, 0.3], [0.4, 0.8]];
    let sub = |a: [f64; 2], b: [f64; 2]| [a[0] - b[0], a[1] - b[1]];
    let (e1, e2) = (sub(tri[1], tri[0]), sub(tri[2], tri[0]));
    let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();

    let mut lhs = 0.0;
    let mut vol = 0.0;
    for (q, w) in triangle_rule(12).unwrap().iter() {
        let p = [tri[0][0] + e1[0] * q[0] + e2[0] * q[1], tri[0][1] + e1[1] * q[0] + e2[1] * q[1]];
        let (g, s) = (gm.jet(p).unwrap(), sm.jet(p).unwrap());
        let sd = det(&g.v).sqrt();
        let c = curl_g_sigma(&g, &s);
        let r = rot_g_vector(&g, z(p), dz(p));
        let zz = z(p);
        let srot: f64 = (0..4).map(|n| s.v[n >> 1][n & 1] * r[n >> 1][n & 1]).sum();
        lhs += w * jac * sd * (c[0] * zz[0] + c[1] * zz[1] - srot);
        vol += w * jac;
    }
    assert!((vol - 0.5 * jac).abs() < 1e-14);
    let mut bnd = 0.0;
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let d = sub(b, a);
        let len = d[0].hypot(d[1]);
        let tau = [d[0] / len, d[1] / len];
        for (t, w) in edge_rule(12).unwrap().iter() {
            let p = [a[0] + t * d[0], a[1] + t * d[1]];
            let g = gm.value(p).unwrap();
            let f = EdgeFrame::new(&g, tau);
            let gtt = bilinear(&g, tau, tau).sqrt();
            bnd += w * len * gtt * bilinear(&sm.value(p).unwrap(), z(p), f.gt);
        }
    }
    assert!((lhs - bnd).abs() < 1e-8, "{lhs} vs {bnd}");
}

/// Small deterministic generator for sample points.
struct Lcg(u64);

impl Lcg {
    fn uniform(&mut self, a: f64, b: f64) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        a + (b - a) * ((self.0 >> 11) as f64 / (1u64 << 53) as f64)
    }
}

fn arb_jet(diag: f64) -> impl Strategy<Value = SymJet> {
    (prop::array::uniform3(-0.3f64..0.3), prop::array::uniform6(-1.0f64..1.0), prop::array::uniform9(-1.0f64..1.0))
        .prop_map(move |(v, d, dd)| {
            let sym = |a: f64, b: f64, c: f64| [[a, b], [b, c]];
            let mut j = SymJet::constant(sym(diag + v[0], v[1], diag + v[2]));
            j.d = [sym(d[0], d[1], d[2]), sym(d[3], d[4], d[5])];
            // ∂_1∂_2 shared so the Hessian is symmetric.
            let cross = sym(dd[3], dd[4], dd[5]);
            j.dd = [[sym(dd[0], dd[1], dd[2]), cross], [cross, sym(dd[6], dd[7], dd[8])]];
            j
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn signed_angle_is_antisymmetric(g in arb_jet(1.0), a in prop::array::uniform2(-1.0f64..1.0), b in prop::array::uniform2(-1.0f64..1.0)) {
        prop_assume!(a[0].hypot(a[1]) > 1e-3 && b[0].hypot(b[1]) > 1e-3);
        let ab = signed_angle(&g.v, a, b).unwrap();
        let ba = signed_angle(&g.v, b, a).unwrap();
        prop_assert!(principal_value(ab + ba).abs() < 1e-12);
    }

    #[test]
    fn frames_are_orthonormal(g in arb_jet(1.0)) {
        let f = frame(&g);
        let b = spd_sqrt(&g.v);
        let bb = matmul(&b, &b);
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { 1.0 } else { 0.0 };
                prop_assert!((bilinear(&g.v, f.e[i], f.e[j]) - delta).abs() < 1e-12);
                prop_assert!((bb[i][j] - g.v[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rot_pairs_with_edge_normal(g in arb_jet(1.0), du in prop::array::uniform2(-1.0f64..1.0), phi in 0.0f64..6.3) {
        let f = EdgeFrame::new(&g.v, [phi.cos(), phi.sin()]);
        let r = rot_g_scalar(&g.v, du);
        let lhs = bilinear(&g.v, r, f.gn);
        let rhs = -(du[0] * f.gt[0] + du[1] * f.gt[1]);
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn divergence_identities(g in arb_jet(1.0), s in arb_jet(0.0)) {
        let c = curl_g_sigma(&g, &s);
        let dv = div_g_tensor(&g, &s_g_jet(&g, &s));
        let star = hodge_star(&g.v, flat(&g.v, dv));
        prop_assert!((star[0] + c[0]).abs() < 1e-9 && (star[1] + c[1]).abs() < 1e-9);
        let i = inc_g_sigma(&g, &s);
        prop_assert!((div_g_div_g_s_g(&g, &s) + i).abs() < 1e-8 * (1.0 + i.abs()));
    }

    #[test]
    fn connection_is_antisymmetric(g in arb_jet(1.0)) {
        // g(e_1, ∇e_2) = -g(e_2, ∇e_1) for an orthonormal frame, so the
        // averaged form equals the one-sided one.
        let f = frame(&g);
        let c2 = christoffel_second(&g);
        let w = connection_coefficients(&g);
        for i in 0..2 {
            let mut cov = f.de[i][1];
            for (a, ca) in cov.iter_mut().enumerate() {
                for l in 0..2 {
                    *ca += c2[a][l][i] * f.e[1][l];
                }
            }
            prop_assert!((w[i] - bilinear(&g.v, f.e[0], cov)).abs() < 1e-10);
        }
    }
}
