//! Quadrature on the reference triangle `{x, y >= 0, x + y <= 1}` and the
//! reference edge `[0, 1]`.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

pub const MAX_TRIANGLE_DEGREE: usize = 25;
pub const MAX_EDGE_DEGREE: usize = 127;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature degree {degree} exceeds the supported maximum {max}")]
    DegreeOutOfRange { degree: usize, max: usize },
}

#[derive(Debug, Clone)]
pub struct QuadRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub type TriangleRule = QuadRule<[f64; 2]>;
pub type EdgeRule = QuadRule<f64>;

impl<P: Copy> QuadRule<P> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (P, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Symmetric tabulated rules up to degree 5, collapsed Gauss–Jacobi beyond.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule, QuadError> {
    if degree > MAX_TRIANGLE_DEGREE {
        return Err(QuadError::DegreeOutOfRange { degree, max: MAX_TRIANGLE_DEGREE });
    }
    let (points, weights) = match degree {
        0 | 1 => (vec![[1.0 / 3.0, 1.0 / 3.0]], vec![0.5]),
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            (vec![[a, a], [b, a], [a, b]], vec![1.0 / 6.0; 3])
        }
        3..=5 => radon7(),
        _ => collapsed(degree),
    };
    Ok(QuadRule { points, weights, degree })
}

// Radon's seven point rule, exact to degree 5.
fn radon7() -> (Vec<[f64; 2]>, Vec<f64>) {
    let s = 15f64.sqrt();
    let a1 = (6.0 - s) / 21.0;
    let a2 = (6.0 + s) / 21.0;
    let w1 = (155.0 - s) / 2400.0;
    let w2 = (155.0 + s) / 2400.0;
    let c = 1.0 / 3.0;
    let pts = vec![
        [c, c],
        [a1, a1],
        [1.0 - 2.0 * a1, a1],
        [a1, 1.0 - 2.0 * a1],
        [a2, a2],
        [1.0 - 2.0 * a2, a2],
        [a2, 1.0 - 2.0 * a2],
    ];
    let w = vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2];
    (pts, w)
}

fn collapsed(degree: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    let n = (degree + 1).div_ceil(2);
    let (u, wu) = gauss_jacobi(n, 0.0);
    let (v, wv) = gauss_jacobi(n, 1.0);
    let mut pts = Vec::with_capacity(n * n);
    let mut wts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            // (u, v) in [0,1]^2 maps to x = u (1 - v), y = v with Jacobian (1 - v),
            // which the Jacobi weight on v absorbs.
            pts.push([u[i] * (1.0 - v[j]), v[j]]);
            wts.push(wu[i] * wv[j]);
        }
    }
    (pts, wts)
}

/// Gauss–Jacobi nodes and weights on `[0, 1]` for the weight `(1 - t)^alpha`
/// (`alpha` in {0, 1}), via the Golub–Welsch eigenvalue problem.
fn gauss_jacobi(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let beta = 0.0;
    let ab = alpha + beta;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        jac[(k, k)] = diag;
        if k + 1 < n {
            let m = kf + 1.0;
            let num = 4.0 * m * (m + alpha) * (m + beta) * (m + ab);
            let den = (2.0 * m + ab).powi(2) * (2.0 * m + ab + 1.0) * (2.0 * m + ab - 1.0);
            let off = (num / den).sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    // Total mass of (1 - x)^alpha on [-1, 1].
    let mu0 = 2f64.powf(ab + 1.0) / (ab + 1.0);
    let eig = SymmetricEigen::new(jac);
    let mut nodes: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let w = mu0 * eig.eigenvectors[(0, i)].powi(2);
            (x, w)
        })
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Map [-1, 1] to [0, 1]: dt = dx/2 and (1 - t)^alpha = ((1 - x)/2)^alpha.
    let scale = 0.5f64.powf(1.0 + alpha);
    let mut t = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for (x, wx) in nodes {
        let (tx, tw) = polish(n, alpha, x, wx);
        t.push(0.5 * (tx + 1.0));
        w.push(tw * scale);
    }
    (t, w)
}

// One Newton refinement of a Jacobi node using the three-term recurrence,
// followed by the Christoffel weight formula when alpha = 0.
fn polish(n: usize, alpha: f64, x: f64, w: f64) -> (f64, f64) {
    if alpha != 0.0 {
        return (x, w);
    }
    let mut x = x;
    let mut dp = 1.0;
    for _ in 0..3 {
        let (p, d) = legendre(n, x);
        dp = d;
        let step = p / d;
        x -= step;
        if step.abs() < 1e-17 {
            break;
        }
    }
    let (_, d) = legendre(n, x);
    if d != 0.0 {
        dp = d;
    }
    (x, 2.0 / ((1.0 - x * x) * dp * dp))
}

/// Legendre polynomial `P_n` and its derivative on `[-1, 1]`.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * (n * (n + 1)) as f64 * x.powi(n as i32 + 1)
    } else {
        n as f64 * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, d)
}

/// Gauss–Legendre on `[0, 1]` with `ceil((degree + 1) / 2)` points.
pub fn edge_rule(degree: usize) -> Result<EdgeRule, QuadError> {
    if degree > MAX_EDGE_DEGREE {
        return Err(QuadError::DegreeOutOfRange { degree, max: MAX_EDGE_DEGREE });
    }
    let n = (degree + 1).div_ceil(2).max(1);
    let (points, weights) = gauss_jacobi(n, 0.0);
    Ok(QuadRule { points, weights, degree })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    fn exact_monomial(p: u32, q: u32) -> f64 {
        factorial(p) * factorial(q) / factorial(p + q + 2)
    }

    #[test]
    fn every_triangle_rule_is_exact_to_its_degree() {
        for d in 0..=MAX_TRIANGLE_DEGREE {
            let r = triangle_rule(d).unwrap();
            assert!(r.weights.iter().all(|w| *w > 0.0), "degree {d}");
            for p in 0..=d as u32 {
                for q in 0..=(d as u32 - p) {
                    let approx: f64 = r
                        .iter()
                        .map(|(x, w)| w * x[0].powi(p as i32) * x[1].powi(q as i32))
                        .sum();
                    let ex = exact_monomial(p, q);
                    assert!(
                        ((approx - ex) / ex).abs() < 1e-13,
                        "degree {d} monomial x^{p} y^{q}: {approx} vs {ex}"
                    );
                }
            }
        }
    }

    #[test]
    fn triangle_examples() {
        let r = triangle_rule(5).unwrap();
        let s: f64 = r.weights.iter().sum();
        assert!((s - 0.5).abs() < 1e-15);
        let v: f64 = r.iter().map(|(x, w)| w * x[0].powi(2) * x[1].powi(3)).sum();
        assert!((v - 1.0 / 420.0).abs() < 1e-16);
        let r = triangle_rule(10).unwrap();
        let v: f64 = r.iter().map(|(x, w)| w * (x[0] * x[1]).powi(5)).sum();
        assert!((v - 14400.0 / 479001600.0).abs() < 1e-18);
        assert!(triangle_rule(26).is_err());
    }

    #[test]
    fn edge_rules() {
        for d in 0..=MAX_EDGE_DEGREE {
            let r = edge_rule(d).unwrap();
            assert_eq!(r.len(), (d + 1).div_ceil(2).max(1));
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            for p in 0..=d as i32 {
                let v: f64 = r.iter().map(|(t, w)| w * t.powi(p)).sum();
                let ex = 1.0 / (p as f64 + 1.0);
                assert!(((v - ex) / ex).abs() < 1e-13, "edge degree {d} power {p}");
            }
        }
        let r = edge_rule(3).unwrap();
        assert_eq!(r.len(), 2);
        let v: f64 = r.iter().map(|(t, w)| w * t.powi(3)).sum();
        assert!((v - 0.25).abs() < 1e-16);
    }
}
