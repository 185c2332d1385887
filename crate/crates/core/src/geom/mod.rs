//! Pointwise differential geometry in computational coordinates.
//!
//! Every kernel takes jets (values plus partial derivatives) of the metric
//! and, where needed, of a second symmetric tensor. Index conventions:
//! `jet.d[k][i][j] = ∂_k g_ij`, `jet.dd[k][l][i][j] = ∂_k ∂_l g_ij`,
//! first-kind Christoffel symbols `c1[i][j][l] = Γ_ijl`, second-kind
//! `c2[k][i][j] = Γ^k_ij`, and `EPS[i][j] = ε^{ij}` with `ε^{12} = 1`.

pub mod dual;

use thiserror::Error;

pub use dual::{Dual, Scalar};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];
pub type Tensor3 = [[[f64; 2]; 2]; 2];

pub const EPS: Mat2 = [[0.0, 1.0], [-1.0, 0.0]];
pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
const ZERO: Mat2 = [[0.0; 2]; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("angle of a zero vector")]
    ZeroVector,
}

/// Value, gradient and Hessian of a symmetric 2x2 tensor field at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymJet {
    pub v: Mat2,
    pub d: [Mat2; 2],
    pub dd: [[Mat2; 2]; 2],
}

pub type MetricJet = SymJet;
pub type SigmaJet = SymJet;

impl SymJet {
    pub fn constant(v: Mat2) -> SymJet {
        SymJet { v, ..Default::default() }
    }

    pub fn identity() -> SymJet {
        SymJet::constant(IDENTITY)
    }

    /// `self + t * other`, derivatives included.
    pub fn axpy(&self, t: f64, other: &SymJet) -> SymJet {
        let mut r = *self;
        for i in 0..2 {
            for j in 0..2 {
                r.v[i][j] += t * other.v[i][j];
                for k in 0..2 {
                    r.d[k][i][j] += t * other.d[k][i][j];
                    for l in 0..2 {
                        r.dd[k][l][i][j] += t * other.dd[k][l][i][j];
                    }
                }
            }
        }
        r
    }

    pub fn scale(&self, t: f64) -> SymJet {
        SymJet::default().axpy(t, self)
    }
}

type M<T> = [[T; 2]; 2];

fn det_g<T: Scalar>(m: &M<T>) -> T {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inv_g<T: Scalar>(m: &M<T>) -> M<T> {
    let d = det_g(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

fn mul_g<T: Scalar>(a: &M<T>, b: &M<T>) -> M<T> {
    let mut r = [[T::cst(0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

fn map_g<T: Scalar>(m: &Mat2) -> M<T> {
    [[T::cst(m[0][0]), T::cst(m[0][1])], [T::cst(m[1][0]), T::cst(m[1][1])]]
}

pub fn det(m: &Mat2) -> f64 {
    det_g(m)
}

pub fn inv(m: &Mat2) -> Mat2 {
    inv_g(m)
}

pub fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    mul_g(a, b)
}

pub fn matvec(m: &Mat2, v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `m(a, b) = a^T m b`.
pub fn bilinear(m: &Mat2, a: Vec2, b: Vec2) -> f64 {
    let mb = matvec(m, b);
    a[0] * mb[0] + a[1] * mb[1]
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat2) -> f64 {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let r = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[1][0]).sqrt();
    mean - r
}

fn chris1_g<T: Scalar>(dg: &[M<T>; 2]) -> [[[T; 2]; 2]; 2] {
    let half = T::cst(0.5);
    let mut c = [[[T::cst(0.0); 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for l in 0..2 {
                c[i][j][l] = half * (dg[i][j][l] + dg[j][l][i] - dg[l][i][j]);
            }
        }
    }
    c
}

fn chris2_g<T: Scalar>(ginv: &M<T>, c1: &[[[T; 2]; 2]; 2]) -> [[[T; 2]; 2]; 2] {
    let mut c = [[[T::cst(0.0); 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                c[k][i][j] = ginv[k][0] * c1[i][j][0] + ginv[k][1] * c1[i][j][1];
            }
        }
    }
    c
}

/// `Γ_ijl = (∂_i g_jl + ∂_j g_li - ∂_l g_ij) / 2`.
pub fn christoffel_first(j: &MetricJet) -> Tensor3 {
    chris1_g(&j.d)
}

/// `Γ^k_ij = g^{kl} Γ_ijl`, stored as `[k][i][j]`.
pub fn christoffel_second(j: &MetricJet) -> Tensor3 {
    chris2_g(&inv(&j.v), &chris1_g(&j.d))
}

fn christoffel_first_derivative(j: &MetricJet) -> [Tensor3; 2] {
    let mut dc = [[[[0.0; 2]; 2]; 2]; 2];
    for (q, dcq) in dc.iter_mut().enumerate() {
        *dcq = chris1_g(&j.dd[q]);
    }
    dc
}

/// `∂_q Γ^k_ij` stored as `[q][k][i][j]`.
pub fn christoffel_second_derivative(j: &MetricJet) -> [Tensor3; 2] {
    let ginv = inv(&j.v);
    let c1 = christoffel_first(j);
    let dc1 = christoffel_first_derivative(j);
    let mut out = [[[[0.0; 2]; 2]; 2]; 2];
    for q in 0..2 {
        let dginv = neg(&matmul(&matmul(&ginv, &j.d[q]), &ginv));
        for k in 0..2 {
            for i in 0..2 {
                for jj in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += dginv[k][l] * c1[i][jj][l] + ginv[k][l] * dc1[q][i][jj][l];
                    }
                    out[q][k][i][jj] = s;
                }
            }
        }
    }
    out
}

fn neg(m: &Mat2) -> Mat2 {
    [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]]
}

/// `∂_q det g`.
fn det_derivative(g: &Mat2, dg: &Mat2) -> f64 {
    g[1][1] * dg[0][0] + g[0][0] * dg[1][1] - g[0][1] * dg[1][0] - g[1][0] * dg[0][1]
}

/// Gauss curvature `K = R_1221 / det g`.
pub fn gauss_curvature(j: &MetricJet) -> f64 {
    let c1 = christoffel_first(j);
    let c2 = christoffel_second(j);
    let dc1 = christoffel_first_derivative(j);
    let mut r = dc1[0][1][1][0] - dc1[1][0][1][0];
    for p in 0..2 {
        r += -c1[0][0][p] * c2[p][1][1] + c1[1][0][p] * c2[p][0][1];
    }
    r / det(&j.v)
}

/// Tangent and normal vectors along a straight edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame {
    /// Euclidean unit tangent.
    pub tau: Vec2,
    /// Euclidean normal `(-τ², τ¹)`.
    pub nu: Vec2,
    /// `ν_g^k = -g^{kj} ε_ji τ^i`, equal to `g^{-1} ν`.
    pub nu_g: Vec2,
    pub gt: Vec2,
    pub gn: Vec2,
}

impl EdgeFrame {
    pub fn new(g: &Mat2, tau: Vec2) -> EdgeFrame {
        let nu = [-tau[1], tau[0]];
        let nu_g = matvec(&inv(g), nu);
        let gtt = bilinear(g, tau, tau).sqrt();
        let gnn = bilinear(g, nu_g, nu_g).sqrt();
        EdgeFrame {
            tau,
            nu,
            nu_g,
            gt: [tau[0] / gtt, tau[1] / gtt],
            gn: [nu_g[0] / gnn, nu_g[1] / gnn],
        }
    }
}

/// Edge curvature weight `sqrt(det g) / g_ττ Γ^ν_ττ`, i.e. `κ(g) sqrt(g_ττ)`,
/// for a straight edge with Euclidean unit tangent `tau`.
pub fn geodesic_curvature_weight(j: &MetricJet, tau: Vec2) -> f64 {
    let c2 = christoffel_second(j);
    let nu = [-tau[1], tau[0]];
    let mut gam = 0.0;
    for k in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                gam += tau[a] * tau[b] * c2[k][a][b] * nu[k];
            }
        }
    }
    det(&j.v).sqrt() / bilinear(&j.v, tau, tau) * gam
}

/// Geodesic curvature `κ(g)` of a straight edge.
pub fn geodesic_curvature(j: &MetricJet, tau: Vec2) -> f64 {
    geodesic_curvature_weight(j, tau) / bilinear(&j.v, tau, tau).sqrt()
}

/// Reduces an angle to `(-π, π]`.
pub fn principal_value(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Counterclockwise angle from `b` to `a` in the `g` inner product.
pub fn signed_angle(g: &Mat2, a: Vec2, b: Vec2) -> Result<f64, GeomError> {
    let na = bilinear(g, a, a).sqrt();
    let nb = bilinear(g, b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(GeomError::ZeroVector);
    }
    let c = bilinear(g, a, b) / (na * nb);
    let s = det(g).sqrt() * (b[0] * a[1] - b[1] * a[0]) / (na * nb);
    let t = s.atan2(c);
    Ok(if t <= -std::f64::consts::PI { std::f64::consts::PI } else { t })
}

/// Interior angle between the incoming tangent `tau_in` and the outgoing
/// tangent `tau_out` at a vertex.
pub fn interior_angle(g: &Mat2, tau_in: Vec2, tau_out: Vec2) -> Result<f64, GeomError> {
    let na = bilinear(g, tau_in, tau_in).sqrt();
    let nb = bilinear(g, tau_out, tau_out).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(GeomError::ZeroVector);
    }
    let c = -bilinear(g, tau_in, tau_out) / (na * nb);
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// Principal square root `(g + sqrt(det g) I) / sqrt(tr g + 2 sqrt(det g))`.
pub fn spd_sqrt(g: &Mat2) -> Mat2 {
    let s = det(g).sqrt();
    let t = (g[0][0] + g[1][1] + 2.0 * s).sqrt();
    [[(g[0][0] + s) / t, g[0][1] / t], [g[1][0] / t, (g[1][1] + s) / t]]
}

/// `∂_k g^{1/2}` for `k = 0, 1`.
pub fn spd_sqrt_derivative(j: &MetricJet) -> [Mat2; 2] {
    let g = &j.v;
    let s = det(g).sqrt();
    let t = (g[0][0] + g[1][1] + 2.0 * s).sqrt();
    let mut out = [ZERO; 2];
    for (k, o) in out.iter_mut().enumerate() {
        let dg = &j.d[k];
        let ds = det_derivative(g, dg) / (2.0 * s);
        let dt = (dg[0][0] + dg[1][1] + 2.0 * ds) / (2.0 * t);
        for a in 0..2 {
            for b in 0..2 {
                let id = if a == b { 1.0 } else { 0.0 };
                o[a][b] = (dg[a][b] + ds * id) / t - (g[a][b] + s * id) * dt / (t * t);
            }
        }
    }
    out
}

/// The frame `e_i = g^{-1/2} E_i` and its derivatives `de[k][i] = ∂_k e_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub e: [Vec2; 2],
    pub de: [[Vec2; 2]; 2],
}

pub fn frame(j: &MetricJet) -> Frame {
    let binv = inv(&spd_sqrt(&j.v));
    let db = spd_sqrt_derivative(j);
    let col = |m: &Mat2, i: usize| [m[0][i], m[1][i]];
    let mut de = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        let dbinv = neg(&matmul(&matmul(&binv, &db[k]), &binv));
        de[k] = [col(&dbinv, 0), col(&dbinv, 1)];
    }
    Frame { e: [col(&binv, 0), col(&binv, 1)], de }
}

/// Connection coefficients `ω_i = g(e_1, ∇_i e_2)`, evaluated in the
/// antisymmetrised form `(g(e_1, ∇_i e_2) - g(e_2, ∇_i e_1)) / 2`.
pub fn connection_coefficients(j: &MetricJet) -> Vec2 {
    let f = frame(j);
    let c2 = christoffel_second(j);
    let cov = |i: usize, e: usize| -> Vec2 {
        let mut r = f.de[i][e];
        for (jj, rj) in r.iter_mut().enumerate() {
            for l in 0..2 {
                *rj += c2[jj][l][i] * f.e[e][l];
            }
        }
        r
    };
    let mut w = [0.0; 2];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = 0.5 * (bilinear(&j.v, f.e[0], cov(i, 1)) - bilinear(&j.v, f.e[1], cov(i, 0)));
    }
    w
}

/// Coefficients of the 1-form `curl_g σ` in `dx^i`.
pub fn curl_g_sigma(g: &MetricJet, s: &SigmaJet) -> Vec2 {
    let c2 = christoffel_second(g);
    let sd = det(&g.v).sqrt();
    let mut out = [0.0; 2];
    for (i, o) in out.iter_mut().enumerate() {
        let curl = s.d[0][i][1] - s.d[1][i][0];
        let mut corr = 0.0;
        for m in 0..2 {
            corr += c2[m][0][i] * s.v[m][1] - c2[m][1][i] * s.v[m][0];
        }
        *o = (curl - corr) / sd;
    }
    out
}

/// Euclidean row-wise curl `ε^{jk} ∂_j σ_ik`.
pub fn euclidean_curl(s: &SigmaJet) -> Vec2 {
    [s.d[0][0][1] - s.d[1][0][0], s.d[0][1][1] - s.d[1][1][0]]
}

/// Covariant incompatibility `curl_g curl_g σ`.
pub fn inc_g_sigma(g: &MetricJet, s: &SigmaJet) -> f64 {
    let d = det(&g.v);
    let c2 = christoffel_second(g);
    let dc2 = christoffel_second_derivative(g);
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    let mut t3 = 0.0;
    for q in 0..2 {
        let gam_q = det_derivative(&g.v, &g.d[q]) / (2.0 * d);
        for i in 0..2 {
            let eqi = EPS[q][i];
            if eqi == 0.0 {
                continue;
            }
            for jj in 0..2 {
                for k in 0..2 {
                    let ejk = EPS[jj][k];
                    if ejk == 0.0 {
                        continue;
                    }
                    let e = eqi * ejk;
                    t1 += e * s.dd[jj][q][i][k];
                    let mut dprod = 0.0;
                    let mut prod = 0.0;
                    for m in 0..2 {
                        dprod += dc2[q][m][jj][i] * s.v[m][k] + c2[m][jj][i] * s.d[q][m][k];
                        prod += c2[m][jj][i] * s.v[m][k];
                    }
                    t2 += e * dprod;
                    t3 += gam_q * e * (s.d[jj][i][k] - prod);
                }
            }
        }
    }
    (t1 - t2 - t3) / d
}

/// Euclidean `inc σ = ε^{qi} ε^{jk} ∂_j ∂_q σ_ik`.
pub fn euclidean_inc(s: &SigmaJet) -> f64 {
    s.dd[1][1][0][0] + s.dd[0][0][1][1] - s.dd[0][1][0][1] - s.dd[1][0][1][0]
}

/// `rot_g u = (∂_2 u, -∂_1 u) / sqrt(det g)` as a vector field.
pub fn rot_g_scalar(g: &Mat2, du: Vec2) -> Vec2 {
    let sd = det(g).sqrt();
    [du[1] / sd, -du[0] / sd]
}

/// `(rot_g X)^{mp} = ε^{pi} (∂_i X^m + Γ^m_ik X^k) / sqrt(det g)` with
/// `dx[i][m] = ∂_i X^m`.
pub fn rot_g_vector(g: &MetricJet, x: Vec2, dx: [Vec2; 2]) -> Mat2 {
    let c2 = christoffel_second(g);
    let sd = det(&g.v).sqrt();
    let mut r = ZERO;
    for m in 0..2 {
        for p in 0..2 {
            let mut acc = 0.0;
            for i in 0..2 {
                let mut cov = dx[i][m];
                for k in 0..2 {
                    cov += c2[m][i][k] * x[k];
                }
                acc += EPS[p][i] * cov;
            }
            r[m][p] = acc / sd;
        }
    }
    r
}

fn div_tensor_g<T: Scalar>(g: &M<T>, dg: &[M<T>; 2], s: &M<T>, ds: &[M<T>; 2]) -> [T; 2] {
    let ginv = inv_g(g);
    let c2 = chris2_g(&ginv, &chris1_g(dg));
    let zero = T::cst(0.0);
    let contra = |m: &M<T>| mul_g(&mul_g(&ginv, m), &ginv);
    let scon = contra(s);
    let mut dscon = [[[zero; 2]; 2]; 2];
    for k in 0..2 {
        let dginv = mul_g(&mul_g(&ginv, &dg[k]), &ginv);
        let a = mul_g(&mul_g(&dginv, s), &ginv);
        let b = contra(&ds[k]);
        let c = mul_g(&mul_g(&ginv, s), &dginv);
        for i in 0..2 {
            for j in 0..2 {
                dscon[k][i][j] = b[i][j] - a[i][j] - c[i][j];
            }
        }
    }
    let mut out = [zero; 2];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = zero;
        for j in 0..2 {
            acc = acc + dscon[j][i][j];
            for l in 0..2 {
                acc = acc + c2[i][l][j] * scon[l][j] + c2[j][j][l] * scon[i][l];
            }
        }
        *o = acc;
    }
    out
}

fn div_vector_g<T: Scalar>(g: &M<T>, dg: &[M<T>; 2], x: [T; 2], dx: [[T; 2]; 2]) -> T {
    let c2 = chris2_g(&inv_g(g), &chris1_g(dg));
    let mut acc = dx[0][0] + dx[1][1];
    for i in 0..2 {
        for j in 0..2 {
            acc = acc + c2[j][j][i] * x[i];
        }
    }
    acc
}

fn sg_g<T: Scalar>(g: &M<T>, s: &M<T>) -> M<T> {
    let ginv = inv_g(g);
    let mut tr = T::cst(0.0);
    for i in 0..2 {
        for j in 0..2 {
            tr = tr + ginv[i][j] * s[i][j];
        }
    }
    let mut r = *s;
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = s[i][j] - tr * g[i][j];
        }
    }
    r
}

// ∂_k (S_g σ) from (g, ∂_k g, σ, ∂_k σ).
fn sg_derivative_g<T: Scalar>(g: &M<T>, dg: &M<T>, s: &M<T>, ds: &M<T>) -> M<T> {
    let ginv = inv_g(g);
    let dginv = mul_g(&mul_g(&ginv, dg), &ginv);
    let mut tr = T::cst(0.0);
    let mut dtr = T::cst(0.0);
    for i in 0..2 {
        for j in 0..2 {
            tr = tr + ginv[i][j] * s[i][j];
            dtr = dtr + ginv[i][j] * ds[i][j] - dginv[i][j] * s[i][j];
        }
    }
    let mut r = *s;
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = ds[i][j] - dtr * g[i][j] - tr * dg[i][j];
        }
    }
    r
}

/// `div_g σ` of a symmetric covariant tensor (indices raised with `g`).
pub fn div_g_tensor(g: &MetricJet, s: &SigmaJet) -> Vec2 {
    div_tensor_g(&g.v, &g.d, &s.v, &s.d)
}

/// `div_g X = ∂_i X^i + Γ^j_ji X^i` with `dx[k][i] = ∂_k X^i`.
pub fn div_g_vector(g: &MetricJet, x: Vec2, dx: [Vec2; 2]) -> f64 {
    div_vector_g(&g.v, &g.d, x, dx)
}

/// `S_g σ = σ - tr_g(σ) g`.
pub fn s_g(g: &Mat2, s: &Mat2) -> Mat2 {
    sg_g(g, s)
}

/// Jet of `S_g σ` up to first derivatives.
pub fn s_g_jet(g: &MetricJet, s: &SigmaJet) -> SigmaJet {
    let mut r = SymJet::constant(s_g(&g.v, &s.v));
    for k in 0..2 {
        r.d[k] = sg_derivative_g(&g.v, &g.d[k], &s.v, &s.d[k]);
    }
    r
}

/// Index lowering `X^♭ = g X`.
pub fn flat(g: &Mat2, x: Vec2) -> Vec2 {
    matvec(g, x)
}

/// Hodge star of a 1-form: `(⋆α)_k = sqrt(det g) α_i g^{ij} ε_jk`.
pub fn hodge_star(g: &Mat2, alpha: Vec2) -> Vec2 {
    let ginv = inv(g);
    let sd = det(g).sqrt();
    let mut r = [0.0; 2];
    for (k, rk) in r.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                *rk += sd * alpha[i] * ginv[i][j] * EPS[j][k];
            }
        }
    }
    r
}

fn lift_dual(v: &Mat2, d: [&Mat2; 2]) -> M<Dual> {
    let mut r = [[Dual::cst(0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = Dual::new(v[i][j], [d[0][i][j], d[1][i][j]]);
        }
    }
    r
}

/// `div_g div_g S_g σ`, differentiating the first-order formulas once more
/// with dual numbers. Requires second derivatives in both jets.
pub fn div_g_div_g_s_g(g: &MetricJet, s: &SigmaJet) -> f64 {
    let gd = lift_dual(&g.v, [&g.d[0], &g.d[1]]);
    let sd = lift_dual(&s.v, [&s.d[0], &s.d[1]]);
    let dgd = [
        lift_dual(&g.d[0], [&g.dd[0][0], &g.dd[1][0]]),
        lift_dual(&g.d[1], [&g.dd[0][1], &g.dd[1][1]]),
    ];
    let dsd = [
        lift_dual(&s.d[0], [&s.dd[0][0], &s.dd[1][0]]),
        lift_dual(&s.d[1], [&s.dd[0][1], &s.dd[1][1]]),
    ];
    let sg = sg_g(&gd, &sd);
    let dsg = [sg_derivative_g(&gd, &dgd[0], &sd, &dsd[0]), sg_derivative_g(&gd, &dgd[1], &sd, &dsd[1])];
    let v = div_tensor_g(&gd, &dgd, &sg, &dsg);
    let x = [v[0].v, v[1].v];
    let dx = [[v[0].d[0], v[1].d[0]], [v[0].d[1], v[1].d[1]]];
    div_vector_g(&g.v, &g.d, x, dx)
}

fn normal_tangent_g<T: Scalar>(g: &M<T>, s: &M<T>, tau: Vec2) -> T {
    let t = [T::cst(tau[0]), T::cst(tau[1])];
    let nu = [T::cst(-tau[1]), T::cst(tau[0])];
    // adj(g) ν
    let a = [g[1][1] * nu[0] - g[0][1] * nu[1], -g[1][0] * nu[0] + g[0][0] * nu[1]];
    let st = [s[0][0] * t[0] + s[0][1] * t[1], s[1][0] * t[0] + s[1][1] * t[1]];
    let gt = [g[0][0] * t[0] + g[0][1] * t[1], g[1][0] * t[0] + g[1][1] * t[1]];
    let gtt = t[0] * gt[0] + t[1] * gt[1];
    (a[0] * st[0] + a[1] * st[1]) / (det_g(g).sqrt() * gtt)
}

/// `σ(ĝn, ĝt)` on an edge with Euclidean unit tangent `tau`.
pub fn normal_tangent(g: &Mat2, s: &Mat2, tau: Vec2) -> f64 {
    normal_tangent_g(g, s, tau)
}

/// `σ(ĝn, ĝt)` and its derivative along `tau`.
pub fn normal_tangent_with_derivative(g: &MetricJet, s: &SigmaJet, tau: Vec2) -> (f64, f64) {
    let dir = |j: &SymJet| -> Mat2 {
        let mut m = ZERO;
        for a in 0..2 {
            for b in 0..2 {
                m[a][b] = tau[0] * j.d[0][a][b] + tau[1] * j.d[1][a][b];
            }
        }
        m
    };
    let (dg, ds) = (dir(g), dir(s));
    let gd = lift_dual(&g.v, [&dg, &ZERO]);
    let sd = lift_dual(&s.v, [&ds, &ZERO]);
    let r = normal_tangent_g(&gd, &sd, tau);
    (r.v, r.d[0])
}

/// Generic-scalar versions for callers that differentiate through them.
pub fn det_scalar<T: Scalar>(m: &[[T; 2]; 2]) -> T {
    det_g(m)
}

pub fn identity_scalar<T: Scalar>() -> [[T; 2]; 2] {
    map_g(&IDENTITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_metric_is_trivial() {
        let j = SymJet::identity();
        assert_eq!(christoffel_first(&j), [[[0.0; 2]; 2]; 2]);
        assert_eq!(gauss_curvature(&j), 0.0);
        assert_eq!(connection_coefficients(&j), [0.0, 0.0]);
        assert_eq!(geodesic_curvature_weight(&j, [1.0, 0.0]), 0.0);
    }

    #[test]
    fn diagonal_christoffel_hand_case() {
        // g = diag(1 + 2x, 1): only ∂_1 g_11 = 2 is nonzero.
        let mut j = SymJet::constant([[1.0, 0.0], [0.0, 1.0]]);
        j.d[0][0][0] = 2.0;
        let c = christoffel_first(&j);
        assert_eq!(c[0][0][0], 1.0);
        for (i, j2, l) in [(0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 1, 1), (1, 1, 0), (1, 1, 1), (1, 0, 1)] {
            assert_eq!(c[i][j2][l], 0.0, "Γ_{i}{j2}{l}");
        }
    }

    #[test]
    fn angles() {
        let d = IDENTITY;
        assert!((signed_angle(&d, [0.0, 1.0], [1.0, 0.0]).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((signed_angle(&d, [1.0, 0.0], [0.0, 1.0]).unwrap() + PI / 2.0).abs() < 1e-15);
        let g = [[1.0, 0.0], [0.0, 4.0]];
        assert!((signed_angle(&g, [1.0, 0.0], [0.0, 1.0]).unwrap() + PI / 2.0).abs() < 1e-15);
        assert_eq!(signed_angle(&d, [-1.0, -0.0], [1.0, 0.0]).unwrap(), PI);
        assert!(signed_angle(&d, [0.0, 0.0], [1.0, 0.0]).is_err());
        assert!((interior_angle(&d, [0.0, -1.0], [1.0, 0.0]).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((principal_value(1.9 * PI) + 0.1 * PI).abs() < 1e-14);
        assert_eq!(principal_value(PI), PI);
        assert_eq!(principal_value(-PI), PI);
    }

    #[test]
    fn equilateral_angles() {
        let p = [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
        let mut sum = 0.0;
        for i in 0..3 {
            let a = p[(i + 2) % 3];
            let v = p[i];
            let b = p[(i + 1) % 3];
            let tin = [v[0] - a[0], v[1] - a[1]];
            let tout = [b[0] - v[0], b[1] - v[1]];
            let ang = interior_angle(&IDENTITY, tin, tout).unwrap();
            assert!((ang - PI / 3.0).abs() < 1e-14);
            sum += ang;
        }
        assert!((sum - PI).abs() < 1e-14);
    }

    #[test]
    fn square_roots_and_frames() {
        let g = [[4.0, 0.0], [0.0, 9.0]];
        let b = spd_sqrt(&g);
        assert!((b[0][0] - 2.0).abs() < 1e-15 && (b[1][1] - 3.0).abs() < 1e-15);
        assert_eq!(spd_sqrt(&IDENTITY), IDENTITY);
        let f = frame(&SymJet::constant(g));
        assert!((f.e[0][0] - 0.5).abs() < 1e-15 && f.e[0][1].abs() < 1e-15);
        assert!((f.e[1][1] - 1.0 / 3.0).abs() < 1e-15 && f.e[1][0].abs() < 1e-15);
    }

    #[test]
    fn curl_and_inc_hand_values() {
        let g = SymJet::identity();
        let mut s = SymJet::constant([[0.0, 0.0], [0.0, 0.0]]);
        // σ = [[0, x], [x, 0]]
        s.d[0][0][1] = 1.0;
        s.d[0][1][0] = 1.0;
        assert_eq!(curl_g_sigma(&g, &s), [1.0, 0.0]);
        // σ_11 = y^2
        let mut s = SymJet::default();
        s.dd[1][1][0][0] = 2.0;
        assert_eq!(inc_g_sigma(&g, &s), 2.0);
        assert_eq!(euclidean_inc(&s), 2.0);
        assert_eq!(inc_g_sigma(&g, &SymJet::identity()), 0.0);
        assert_eq!(rot_g_scalar(&IDENTITY, [1.0, 0.0]), [0.0, -1.0]);
        assert_eq!(rot_g_scalar(&IDENTITY, [0.0, 1.0]), [1.0, 0.0]);
    }

    #[test]
    fn edge_frame_properties() {
        let g = [[2.0, 0.3], [0.3, 1.5]];
        let tau = [0.6, 0.8];
        let f = EdgeFrame::new(&g, tau);
        assert!(bilinear(&g, f.gn, f.gt).abs() < 1e-15);
        assert!((bilinear(&g, f.gn, f.gn) - 1.0).abs() < 1e-15);
        assert!((bilinear(&g, f.gt, f.gt) - 1.0).abs() < 1e-15);
        let lhs = bilinear(&g, f.nu_g, f.nu_g) * det(&g);
        assert!((lhs - bilinear(&g, tau, tau)).abs() < 1e-14);
        assert!(tau[0] * f.nu_g[1] - tau[1] * f.nu_g[0] > 0.0);
    }
}
