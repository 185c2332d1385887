//! Sparse symmetric matrices, a sparse Cholesky factorisation and Jacobi
//! preconditioned conjugate gradients.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("conjugate gradients did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("conjugate gradients broke down at iteration {0}")]
    Breakdown(usize),
    #[error("dimension mismatch: matrix {0}, vector {1}")]
    Dimension(usize, usize),
}

/// Symmetric matrix stored as full CSR (both triangles).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Sums duplicate entries in insertion order, so equal input gives bitwise
    /// equal output. The caller supplies both `(i, j)` and `(j, i)`.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> SparseSym {
        trip.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *vals.last_mut().expect("nonempty") += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSym { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> SparseSym {
        SparseSym::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, a)| a * x[j]).sum()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, a)| (a - self.get(j, i)).abs() <= tol * a.abs().max(1.0)))
    }

    /// Principal submatrix on `keep` (in that order).
    pub fn submatrix(&self, keep: &[usize]) -> SparseSym {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut trip = Vec::new();
        for (k, &i) in keep.iter().enumerate() {
            for (j, a) in self.row(i) {
                if map[j] != usize::MAX {
                    trip.push((k, map[j], a));
                }
            }
        }
        SparseSym::from_triplets(keep.len(), trip)
    }
}

/// Sparse Cholesky factor `P A P^T = L L^T` (up-looking, column storage).
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    perm: Vec<usize>,
    // Column j of L: diagonal first, then strictly lower rows ascending.
    cols: Vec<Vec<(usize, f64)>>,
}

impl Cholesky {
    pub fn factor(a: &SparseSym) -> Result<Cholesky, SolveError> {
        let n = a.dim();
        let perm = nested_dissection(a);
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        // Upper triangle of the permuted matrix, by column: entries (i, k) with i <= k.
        let mut upper: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for old in 0..n {
            let k = inv[old];
            for (oj, v) in a.row(old) {
                let i = inv[oj];
                if i <= k {
                    upper[k].push((i, v));
                }
            }
        }
        let parent = etree(&upper);
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut x = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut pattern = Vec::new();
        for k in 0..n {
            // Nonzero pattern of row k of L by walking up the elimination tree.
            pattern.clear();
            mark[k] = k;
            for &(i, v) in &upper[k] {
                x[i] += v;
                let mut j = i;
                stack.clear();
                while mark[j] != k {
                    stack.push(j);
                    mark[j] = k;
                    j = parent[j];
                }
                while let Some(s) = stack.pop() {
                    pattern.push(s);
                }
            }
            // Topological order: ascending index is a valid order for the
            // sparse triangular solve since ancestors have larger indices.
            pattern.sort_unstable();
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &pattern {
                let col = &cols[i];
                let lki = x[i] / col[0].1;
                x[i] = 0.0;
                for &(j, lji) in &col[1..] {
                    x[j] -= lji * lki;
                }
                d -= lki * lki;
                cols[i].push((k, lki));
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(SolveError::NotPositiveDefinite { pivot: perm[k], value: d });
            }
            cols[k].push((k, d.sqrt()));
        }
        Ok(Cholesky { n, perm, cols })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..self.n {
            let col = &self.cols[j];
            y[j] /= col[0].1;
            let yj = y[j];
            for &(i, l) in &col[1..] {
                y[i] -= l * yj;
            }
        }
        for j in (0..self.n).rev() {
            let col = &self.cols[j];
            let mut s = y[j];
            for &(i, l) in &col[1..] {
                s -= l * y[i];
            }
            y[j] = s / col[0].1;
        }
        let mut x = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

fn etree(upper: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = upper.len();
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for &(i0, _) in &upper[k] {
            let mut i = i0;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Fill-reducing ordering by recursive level-set bisection: a BFS level in
/// the middle of a pseudo-peripheral level structure is the separator and
/// is numbered after both halves. Deterministic for a given pattern.
pub fn nested_dissection(a: &SparseSym) -> Vec<usize> {
    const LEAF: usize = 64;
    let n = a.dim();
    let mut order = Vec::with_capacity(n);
    let mut part = vec![0usize; n];
    let mut level = vec![usize::MAX; n];
    // Work items: a node set to order, emitted either directly or split.
    enum Item {
        Split(Vec<usize>, usize),
        Emit(Vec<usize>),
    }
    let mut next_label = 1usize;
    let mut stack = vec![Item::Split((0..n).collect(), 0)];
    while let Some(item) = stack.pop() {
        let (nodes, label) = match item {
            Item::Emit(v) => {
                order.extend(v);
                continue;
            }
            Item::Split(nodes, label) => (nodes, label),
        };
        if nodes.len() <= LEAF {
            order.extend(nodes);
            continue;
        }
        for &v in &nodes {
            part[v] = label;
        }
        let comps = components(a, &nodes, &part, label, &mut level);
        if comps.len() > 1 {
            // Independent components; push in reverse so they emit in order.
            for c in comps.into_iter().rev() {
                let l = next_label;
                next_label += 1;
                stack.push(Item::Split(c, l));
            }
            continue;
        }
        let levels = level_structure(a, &nodes, &part, label, &mut level);
        if levels.len() < 3 {
            order.extend(nodes);
            continue;
        }
        let half = nodes.len() / 2;
        let mut acc = 0;
        let mut mid = 1;
        for (l, lv) in levels.iter().enumerate() {
            acc += lv.len();
            if acc >= half {
                mid = l.clamp(1, levels.len() - 2);
                break;
            }
        }
        let left: Vec<usize> = levels[..mid].iter().flatten().copied().collect();
        let right: Vec<usize> = levels[mid + 1..].iter().flatten().copied().collect();
        let sep = levels[mid].clone();
        let (l1, l2) = (next_label, next_label + 1);
        next_label += 2;
        stack.push(Item::Emit(sep));
        stack.push(Item::Split(right, l2));
        stack.push(Item::Split(left, l1));
    }
    order
}

fn components(
    a: &SparseSym,
    nodes: &[usize],
    part: &[usize],
    label: usize,
    seen: &mut [usize],
) -> Vec<Vec<usize>> {
    let mut comps = Vec::new();
    for &s in nodes {
        if seen[s] == label {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = label;
        let mut q = 0;
        while q < comp.len() {
            let v = comp[q];
            q += 1;
            for (w, _) in a.row(v) {
                if part[w] == label && seen[w] != label {
                    seen[w] = label;
                    comp.push(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    // Reset marks so the level structure pass can reuse the buffer.
    for &v in nodes {
        seen[v] = usize::MAX;
    }
    comps
}

fn bfs_levels(a: &SparseSym, root: usize, part: &[usize], label: usize, level: &mut [usize]) -> Vec<Vec<usize>> {
    let mut levels: Vec<Vec<usize>> = vec![vec![root]];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v];
        for (w, _) in a.row(v) {
            if part[w] == label && level[w] == usize::MAX {
                level[w] = lv + 1;
                if levels.len() <= lv + 1 {
                    levels.push(Vec::new());
                }
                levels[lv + 1].push(w);
                queue.push_back(w);
            }
        }
    }
    levels
}

fn level_structure(
    a: &SparseSym,
    nodes: &[usize],
    part: &[usize],
    label: usize,
    level: &mut [usize],
) -> Vec<Vec<usize>> {
    let reset = |level: &mut [usize]| {
        for &v in nodes {
            level[v] = usize::MAX;
        }
    };
    let mut root = nodes[0];
    let mut levels = bfs_levels(a, root, part, label, level);
    // Pseudo-peripheral root: restart from a minimum-degree node of the last
    // level while the eccentricity grows.
    for _ in 0..4 {
        let last = levels.last().expect("nonempty");
        let cand = *last
            .iter()
            .min_by_key(|&&v| (a.row(v).filter(|(w, _)| part[*w] == label).count(), v))
            .expect("nonempty level");
        reset(level);
        let trial = bfs_levels(a, cand, part, label, level);
        if trial.len() > levels.len() {
            levels = trial;
            root = cand;
        } else {
            reset(level);
            levels = bfs_levels(a, root, part, label, level);
            break;
        }
    }
    reset(level);
    levels
}

/// Jacobi preconditioned conjugate gradients from a zero initial guess.
pub fn cg_solve(a: &SparseSym, b: &[f64], tol: f64, maxit: usize) -> Result<Vec<f64>, SolveError> {
    let n = a.dim();
    if b.len() != n {
        return Err(SolveError::Dimension(n, b.len()));
    }
    let dinv: Vec<f64> = a.diag().iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..maxit {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SolveError::Breakdown(it));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NoConvergence { iterations: maxit, residual: norm(&r) / bnorm })
}

pub const DIRECT_LIMIT: usize = 200_000;

/// Direct solve up to [`DIRECT_LIMIT`] unknowns, CG beyond.
pub fn solve_spd(a: &SparseSym, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    if a.dim() <= DIRECT_LIMIT {
        Ok(Cholesky::factor(a)?.solve(b))
    } else {
        cg_solve(a, b, 1e-12, 10 * a.dim())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A system with essential unknowns eliminated symmetrically.
#[derive(Debug, Clone)]
pub struct Constrained {
    pub matrix: SparseSym,
    pub free: Vec<usize>,
    essential_values: Vec<Option<f64>>,
    coupling: Vec<f64>,
}

/// Restricts `A x = b` to the unknowns with `essential[i] == None`, moving
/// the prescribed values to the right-hand side.
pub fn constrain(a: &SparseSym, essential: &[Option<f64>]) -> Constrained {
    let n = a.dim();
    assert_eq!(essential.len(), n);
    let free: Vec<usize> = (0..n).filter(|&i| essential[i].is_none()).collect();
    let mut coupling = vec![0.0; free.len()];
    for (k, &i) in free.iter().enumerate() {
        for (j, v) in a.row(i) {
            if let Some(u) = essential[j] {
                coupling[k] += v * u;
            }
        }
    }
    Constrained { matrix: a.submatrix(&free), free, essential_values: essential.to_vec(), coupling }
}

impl Constrained {
    pub fn reduced_rhs(&self, b: &[f64]) -> Vec<f64> {
        self.free.iter().zip(&self.coupling).map(|(&i, c)| b[i] - c).collect()
    }

    pub fn expand(&self, xf: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.essential_values.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (&i, v) in self.free.iter().zip(xf) {
            x[i] = *v;
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        let rhs = self.reduced_rhs(b);
        Ok(self.expand(&solve_spd(&self.matrix, &rhs)?))
    }

    pub fn factor(&self) -> Result<ConstrainedFactor<'_>, SolveError> {
        Ok(ConstrainedFactor { sys: self, chol: Cholesky::factor(&self.matrix)? })
    }
}

/// A factorised constrained system, reusable across right-hand sides.
pub struct ConstrainedFactor<'a> {
    sys: &'a Constrained,
    chol: Cholesky,
}

impl ConstrainedFactor<'_> {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.sys.expand(&self.chol.solve(&self.sys.reduced_rhs(b)))
    }
}
