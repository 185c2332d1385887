//! Error norms and convergence tables.

use std::fmt::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::lift::LiftError;
use crate::linalg::{constrain, solve_spd, SparseSym};
use crate::mesh::{Point2, TriMesh};
use crate::quad::triangle_rule;
use crate::spaces::{triangle_points, DofVector, FeSpace, SpaceError, SpaceKind, DX, DY, VAL};

/// Quadrature degree used for error integrals with a degree-`k` method.
pub fn error_quad_degree(k: usize) -> usize {
    2 * (k + 3) + 4
}

/// `‖u_h - u‖_{L²}`, with `reference` returning the exact components in the
/// layout of the field's space.
pub fn l2_error<F>(field: &DofVector, quad_degree: usize, reference: F) -> Result<f64, SpaceError>
where
    F: Fn(Point2) -> Result<[f64; 3], SpaceError> + Sync,
{
    let space = &field.space;
    let mesh = space.mesh();
    let rule = triangle_rule(quad_degree)?;
    let ncomp = space.ncomp();
    let parts: Result<Vec<f64>, SpaceError> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let mut s = 0.0;
            for (x, w) in triangle_points(mesh, t, &rule) {
                let r = reference(x)?;
                let j = field.jets(t, x);
                for c in 0..ncomp {
                    // Off-diagonal tensor entries count twice in the Frobenius norm.
                    let m = if ncomp == 3 && c == 1 { 2.0 } else { 1.0 };
                    s += m * w * (j[c][VAL] - r[c]).powi(2);
                }
            }
            Ok(s)
        })
        .collect();
    Ok(parts?.into_iter().sum::<f64>().sqrt())
}

/// `‖e‖_{H^{-1}}` approximated by `‖w_h‖_{H¹}`, where `w_h` is the
/// Lagrange solution of degree `k + 3` of `-Δw = e` with `w = 0` on the
/// whole boundary. `err(t, x)` evaluates the error on triangle `t`.
pub fn hminus1_error<F>(mesh: &Arc<TriMesh>, k: usize, quad_degree: usize, err: F) -> Result<f64, LiftError>
where
    F: Fn(usize, Point2) -> Result<f64, LiftError> + Sync,
{
    let tags: Vec<String> = mesh.tag_set().into_iter().collect();
    let space = FeSpace::new(mesh.clone(), SpaceKind::Lagrange, k + 3, &tags)?;
    let rule = triangle_rule(quad_degree)?;
    let parts: Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>, LiftError> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let n = space.dofs(t).len();
            let mut a = vec![0.0; n * n];
            let mut m = vec![0.0; n * n];
            let mut f = vec![0.0; n];
            for (x, w) in triangle_points(mesh, t, &rule) {
                let e = err(t, x)?;
                let b = space.basis_jets(t, x);
                for i in 0..n {
                    let bi = b.get(i, 0);
                    f[i] += w * e * bi[VAL];
                    for j in 0..n {
                        let bj = b.get(j, 0);
                        a[i * n + j] += w * (bi[DX] * bj[DX] + bi[DY] * bj[DY]);
                        m[i * n + j] += w * bi[VAL] * bj[VAL];
                    }
                }
            }
            Ok((a, m, f))
        })
        .collect();
    let mut ta = Vec::new();
    let mut tm = Vec::new();
    let mut rhs = vec![0.0; space.ndof()];
    for (t, (a, m, f)) in parts?.into_iter().enumerate() {
        let d = space.dofs(t);
        let n = d.len();
        for i in 0..n {
            rhs[d[i]] += f[i];
            for j in 0..n {
                ta.push((d[i], d[j], a[i * n + j]));
                tm.push((d[i], d[j], m[i * n + j]));
            }
        }
    }
    let a = SparseSym::from_triplets(space.ndof(), ta);
    let m = SparseSym::from_triplets(space.ndof(), tm);
    let ess: Vec<Option<f64>> = space.essential().iter().map(|&e| e.then_some(0.0)).collect();
    let sys = constrain(&a, &ess);
    let w = sys.expand(&solve_spd(&sys.matrix, &sys.reduced_rhs(&rhs))?);
    let aw = a.mul_vec(&w);
    let mw = m.mul_vec(&w);
    let h1: f64 = w.iter().zip(aw.iter().zip(&mw)).map(|(x, (p, q))| x * (p + q)).sum();
    Ok(h1.max(0.0).sqrt())
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub ndof: usize,
    /// `(norm name, error)` in column order.
    pub errors: Vec<(String, f64)>,
    /// Rate per norm against the previous level; `None` when undefined.
    pub eoc: Vec<Option<f64>>,
}

/// Below this an error counts as exactly resolved and gets no rate. Mass
/// solves leave round-off of order 1e-13 on fields that are exactly zero.
pub const RESOLVED: f64 = 1e-12;

/// Fills `eoc` with `log(e_{l-1}/e_l) / log(h_{l-1}/h_l)`.
pub fn eoc(records: &mut [ConvergenceRecord]) {
    for l in 0..records.len() {
        let m = records[l].errors.len();
        records[l].eoc = vec![None; m];
        if l == 0 {
            continue;
        }
        for c in 0..m {
            let (e0, e1) = (records[l - 1].errors[c].1, records[l].errors[c].1);
            let (h0, h1) = (records[l - 1].h, records[l].h);
            records[l].eoc[c] = rate(e0, e1, h0, h1);
        }
    }
}

/// Rate between two (error, h) pairs, `None` if undefined.
pub fn rate(e0: f64, e1: f64, h0: f64, h1: f64) -> Option<f64> {
    if e0 < RESOLVED || e1 < RESOLVED || h0 == h1 || !(e0.is_finite() && e1.is_finite()) {
        None
    } else {
        Some((e0 / e1).ln() / (h0 / h1).ln())
    }
}

/// CSV with columns `level,n,h,ndof,<norm>...,<norm>_eoc...`.
pub fn to_csv(records: &[ConvergenceRecord]) -> String {
    let mut s = String::from("level,n,h,ndof");
    let names: Vec<&str> = records.first().map_or(Vec::new(), |r| r.errors.iter().map(|(n, _)| n.as_str()).collect());
    for n in &names {
        let _ = write!(s, ",{n}");
    }
    for n in &names {
        let _ = write!(s, ",{n}_eoc");
    }
    s.push('\n');
    for r in records {
        let _ = write!(s, "{},{},{:.16e},{}", r.level, r.n, r.h, r.ndof);
        for (_, e) in &r.errors {
            let _ = write!(s, ",{e:.16e}");
        }
        for c in 0..names.len() {
            match r.eoc.get(c).copied().flatten() {
                Some(v) => {
                    let _ = write!(s, ",{v:.16e}");
                }
                None => s.push_str(",—"),
            }
        }
        s.push('\n');
    }
    s
}
