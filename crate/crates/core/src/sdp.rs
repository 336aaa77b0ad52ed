//! Linear conic problems over PSD blocks and an ADMM splitting solver,
//! plus assembly of the sensing-matrix design relaxations and the
//! power-weight rescaling programs.
//!
//! A problem is `min c^T u` subject to a list of affine symmetric blocks
//! `B_j(u) ⪰ 0`. Scalar inequalities are 1x1 blocks. Variables are packed
//! into a flat vector `u` in scaled-svec form (off-diagonal entries stored
//! times sqrt(2)) so that Euclidean geometry matches Frobenius geometry.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{MacMode, MultiTerminalSpec, SupportCollection, SystemSpec};

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packed index of entry (i, j), i <= j, in an n x n symmetric matrix.
fn svec_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * (2 * n + 1 - i) / 2 + (j - i)
}

/// Pack a symmetric matrix into scaled-svec form.
pub fn pack_sym(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut out = vec![0.0; svec_len(n)];
    for i in 0..n {
        for j in i..n {
            out[svec_index(i, j, n)] = if i == j { m.get(i, i) } else { SQRT2 * m.get(i, j) };
        }
    }
    out
}

/// Inverse of [`pack_sym`].
pub fn unpack_sym(v: &[f64], n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x = v[svec_index(i, j, n)];
            let val = if i == j { x } else { x / SQRT2 };
            m.set(i, j, val);
            m.set(j, i, val);
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Symmetric matrix of the given side length.
    Sym(usize),
    Scalar,
}

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy)]
pub struct VarRef {
    pub id: usize,
}

#[derive(Debug, Clone)]
struct VarInfo {
    name: String,
    kind: VarKind,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone)]
struct Block {
    dim: usize,
    /// Constant term, scaled-svec.
    constant: Vec<f64>,
    /// (svec position, flat variable index, coefficient).
    entries: Vec<(usize, usize, f64)>,
    /// Normalization divisor applied to the whole block.
    scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// Residuals stayed large: the problem looks infeasible or numerically
    /// broken; the best iterate is still returned.
    Infeasible,
}

/// Solver output: flat assignments plus honest residual reporting.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Worst constraint violation: max over blocks of (-lambda_min)+ on the
    /// normalized blocks.
    pub feas_residual: f64,
    /// Final scaled primal/dual residual (max of the two relative norms).
    pub conv_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    vars: Vec<VarInfo>,
    total: usize,
    objective: Vec<f64>,
    blocks: Vec<Block>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sym_var(&mut self, name: &str, n: usize) -> VarRef {
        let len = svec_len(n);
        self.vars.push(VarInfo {
            name: name.to_string(),
            kind: VarKind::Sym(n),
            offset: self.total,
            len,
        });
        self.total += len;
        self.objective.resize(self.total, 0.0);
        VarRef { id: self.vars.len() - 1 }
    }

    /// Scalar variable; `nonneg` adds the 1x1 cone block.
    pub fn add_scalar_var(&mut self, name: &str, nonneg: bool) -> VarRef {
        self.vars.push(VarInfo {
            name: name.to_string(),
            kind: VarKind::Scalar,
            offset: self.total,
            len: 1,
        });
        self.total += 1;
        self.objective.resize(self.total, 0.0);
        let v = VarRef { id: self.vars.len() - 1 };
        if nonneg {
            let b = self.add_psd_block(1);
            self.block_add_scalar_entry(b, 0, 0, v, 1.0);
        }
        v
    }

    pub fn n_vars(&self) -> usize {
        self.total
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn sym_dim(&self, v: VarRef) -> usize {
        match self.vars[v.id].kind {
            VarKind::Sym(n) => n,
            VarKind::Scalar => panic!("scalar variable used as matrix"),
        }
    }

    fn flat_sym(&self, v: VarRef, i: usize, j: usize) -> usize {
        let n = self.sym_dim(v);
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.vars[v.id].offset + svec_index(a, b, n)
    }

    /// Adds `scale * Tr{W X}` to the objective for a symmetric variable.
    pub fn objective_trace(&mut self, v: VarRef, w: &Matrix, scale: f64) {
        let n = self.sym_dim(v);
        for i in 0..n {
            let fi = self.flat_sym(v, i, i);
            self.objective[fi] += scale * w.get(i, i);
            for j in (i + 1)..n {
                let c = scale * (w.get(i, j) + w.get(j, i));
                let fij = self.flat_sym(v, i, j);
                self.objective[fij] += c / SQRT2;
            }
        }
    }

    pub fn objective_scalar(&mut self, v: VarRef, c: f64) {
        let off = self.vars[v.id].offset;
        self.objective[off] += c;
    }

    pub fn add_psd_block(&mut self, dim: usize) -> usize {
        self.blocks.push(Block {
            dim,
            constant: vec![0.0; svec_len(dim)],
            entries: Vec::new(),
            scale: 1.0,
        });
        self.blocks.len() - 1
    }

    /// B_{pq} += c * X_{ij} for p <= q (symmetry of B handled by svec).
    fn push_term(&mut self, blk: usize, p: usize, q: usize, flat: usize, c: f64) {
        let dim = self.blocks[blk].dim;
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        let coeff = if p < q { SQRT2 * c } else { c };
        self.blocks[blk].entries.push((svec_index(p, q, dim), flat, coeff));
    }

    fn push_sym_term(&mut self, blk: usize, p: usize, q: usize, v: VarRef, i: usize, j: usize, c: f64) {
        // u stores sqrt(2) x_{ij} off-diagonal.
        let c = if i != j { c / SQRT2 } else { c };
        let flat = self.flat_sym(v, i, j);
        self.push_term(blk, p, q, flat, c);
    }

    /// Constant placement: if ro == co, `m` must be symmetric and lands on
    /// the diagonal; otherwise `m` and its transpose land off-diagonal
    /// (row and column ranges must not overlap).
    pub fn block_add_const(&mut self, blk: usize, ro: usize, co: usize, m: &Matrix) {
        let dim = self.blocks[blk].dim;
        if ro == co {
            for i in 0..m.rows() {
                for j in i..m.cols() {
                    let c = if i == j { m.get(i, i) } else { SQRT2 * m.get(i, j) };
                    self.blocks[blk].constant[svec_index(ro + i, ro + j, dim)] += c;
                }
            }
        } else {
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    let (p, q) = (ro + i, co + j);
                    let (p, q) = if p <= q { (p, q) } else { (q, p) };
                    self.blocks[blk].constant[svec_index(p, q, dim)] += SQRT2 * m.get(i, j);
                }
            }
        }
    }

    /// Adds `scale * W X W^T` on the diagonal at offset `ro`, where `W` is a
    /// constant k x n matrix and X the n x n symmetric variable. Sparse in W.
    pub fn block_add_congruence(&mut self, blk: usize, ro: usize, v: VarRef, w: &Matrix, scale: f64) {
        let k = w.rows();
        // Nonzeros per row of W.
        let rows_nz: Vec<Vec<(usize, f64)>> = (0..k)
            .map(|p| {
                (0..w.cols())
                    .filter_map(|i| {
                        let x = w.get(p, i);
                        if x != 0.0 {
                            Some((i, x))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        for p in 0..k {
            for q in p..k {
                let mut acc: HashMap<(usize, usize), f64> = HashMap::new();
                for &(i, wi) in &rows_nz[p] {
                    for &(j, wj) in &rows_nz[q] {
                        let key = if i <= j { (i, j) } else { (j, i) };
                        *acc.entry(key).or_insert(0.0) += wi * wj;
                    }
                }
                let mut terms: Vec<((usize, usize), f64)> = acc.into_iter().collect();
                terms.sort_by_key(|&(k, _)| k);
                for ((i, j), c) in terms {
                    self.push_sym_term(blk, ro + p, ro + q, v, i, j, scale * c);
                }
            }
        }
    }

    /// Places `scale * X` at (ro, co). Diagonal placement when ro == co;
    /// off-diagonal ranges must be disjoint.
    pub fn block_add_var(&mut self, blk: usize, ro: usize, co: usize, v: VarRef, scale: f64) {
        let n = self.sym_dim(v);
        if ro == co {
            for i in 0..n {
                for j in i..n {
                    self.push_sym_term(blk, ro + i, ro + j, v, i, j, scale);
                }
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    self.push_sym_term(blk, ro + i, co + j, v, i, j, scale);
                }
            }
        }
    }

    /// Adds `scale * alpha * W` (W constant symmetric) on the diagonal.
    pub fn block_add_scalar_matrix(&mut self, blk: usize, ro: usize, v: VarRef, w: &Matrix, scale: f64) {
        let flat = self.vars[v.id].offset;
        for p in 0..w.rows() {
            for q in p..w.cols() {
                let c = scale * w.get(p, q);
                if c != 0.0 {
                    self.push_term(blk, ro + p, ro + q, flat, c);
                }
            }
        }
    }

    /// B_{pq} += scale * Tr{W X}.
    pub fn block_add_trace(&mut self, blk: usize, p: usize, q: usize, v: VarRef, w: &Matrix, scale: f64) {
        let n = self.sym_dim(v);
        for i in 0..n {
            self.push_sym_term(blk, p, q, v, i, i, scale * w.get(i, i));
            for j in (i + 1)..n {
                let c = scale * (w.get(i, j) + w.get(j, i));
                if c != 0.0 {
                    self.push_sym_term(blk, p, q, v, i, j, c);
                }
            }
        }
    }

    /// B_{pq} += scale * alpha for a scalar variable.
    pub fn block_add_scalar_entry(&mut self, blk: usize, p: usize, q: usize, v: VarRef, scale: f64) {
        let flat = self.vars[v.id].offset;
        self.push_term(blk, p, q, flat, scale);
    }

    /// Read a symmetric variable out of a solution.
    pub fn sym_value(&self, sol: &ConicSolution, v: VarRef) -> Matrix {
        let n = self.sym_dim(v);
        let info = &self.vars[v.id];
        unpack_sym(&sol.values[info.offset..info.offset + info.len], n)
    }

    pub fn scalar_value(&self, sol: &ConicSolution, v: VarRef) -> f64 {
        sol.values[self.vars[v.id].offset]
    }

    /// Writes a symmetric warm-start value into a flat vector.
    pub fn pack_sym_into(&self, v: VarRef, m: &Matrix, u: &mut [f64]) {
        let info = &self.vars[v.id];
        let packed = pack_sym(m);
        u[info.offset..info.offset + info.len].copy_from_slice(&packed);
    }

    /// Plain-text interchange dump: variable table, objective, block triples.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("vars {}\n", self.vars.len()));
        for v in &self.vars {
            let kind = match v.kind {
                VarKind::Sym(n) => format!("sym {}", n),
                VarKind::Scalar => "scalar".to_string(),
            };
            out.push_str(&format!("var {} {} offset {} len {}\n", v.name, kind, v.offset, v.len));
        }
        out.push_str("objective\n");
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                out.push_str(&format!("  {} {:.17e}\n", i, c));
            }
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            out.push_str(&format!("block {} dim {} scale {:.17e}\n", bi, b.dim, b.scale));
            for (pos, c) in b.constant.iter().enumerate() {
                if *c != 0.0 {
                    out.push_str(&format!("  const {} {:.17e}\n", pos, c));
                }
            }
            for &(pos, var, c) in &b.entries {
                out.push_str(&format!("  coef {} {} {:.17e}\n", pos, var, c));
            }
        }
        out
    }

    fn merged_entries(&self, blk: usize) -> Vec<(usize, usize, f64)> {
        let mut e = self.blocks[blk].entries.clone();
        e.sort_by_key(|&(pos, var, _)| (pos, var));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(e.len());
        for (pos, var, c) in e {
            if let Some(last) = out.last_mut() {
                if last.0 == pos && last.1 == var {
                    last.2 += c;
                    continue;
                }
            }
            out.push((pos, var, c));
        }
        out.retain(|&(_, _, c)| c != 0.0);
        out
    }

    /// ADMM operator-splitting solve. Returns the best iterate with
    /// residuals; statuses `MaxIter`/`Infeasible` carry the iterate too.
    pub fn solve(&self, tol: f64, max_iter: usize, warm: Option<&[f64]>) -> Result<ConicSolution> {
        Solver::prepare(self)?.run(tol, max_iter, warm)
    }

    /// Direct feasibility audit of an assignment, independent of the solver:
    /// most negative block eigenvalue, clamped at 0 (normalized blocks).
    pub fn feasibility(&self, u: &[f64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for blk in 0..self.blocks.len() {
            let b = &self.blocks[blk];
            let mut vsv = b.constant.clone();
            for &(pos, var, c) in &b.entries {
                vsv[pos] += c * u[var];
            }
            let m = unpack_sym(&vsv, b.dim);
            if b.dim == 1 {
                worst = worst.max(-m.get(0, 0));
            } else {
                let eig = linalg::sym_eig(&m)?;
                worst = worst.max(-eig.eigenvalues.last().copied().unwrap_or(0.0));
            }
        }
        Ok(worst)
    }
}

/// Preprocessed ADMM state: normalized blocks, global row layout, and the
/// per-component normal-equation factorizations.
struct Solver<'a> {
    p: &'a ConicProblem,
    /// Row-major sparse rows: for each global row, constant and terms.
    row_const: Vec<f64>,
    row_terms: Vec<Vec<(usize, f64)>>,
    /// (block start row, dim) per block.
    block_rows: Vec<(usize, usize)>,
    n_rows: usize,
    /// Components: variable lists and Cholesky factors of A^T A restricted.
    comps: Vec<Component>,
}

struct Component {
    vars: Vec<usize>,
    chol: Matrix,
}

impl<'a> Solver<'a> {
    fn prepare(p: &'a ConicProblem) -> Result<Self> {
        if p.total == 0 {
            return Err(Error::Solver("problem has no variables".into()));
        }
        let mut row_const = Vec::new();
        let mut row_terms: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut block_rows = Vec::new();
        for blk in 0..p.blocks.len() {
            let b = &p.blocks[blk];
            let entries = p.merged_entries(blk);
            // Block normalization: largest coefficient magnitude to 1.
            let mut maxc = b.constant.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            for &(_, _, c) in &entries {
                maxc = maxc.max(c.abs());
            }
            let s = if maxc > 0.0 { maxc } else { 1.0 };
            let start = row_const.len();
            block_rows.push((start, b.dim));
            for pos in 0..svec_len(b.dim) {
                row_const.push(b.constant[pos] / s);
                row_terms.push(Vec::new());
            }
            for (pos, var, c) in entries {
                row_terms[start + pos].push((var, c / s));
            }
        }
        let n_rows = row_const.len();

        // Union-find over variables sharing a row.
        let mut parent: Vec<usize> = (0..p.total).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for terms in &row_terms {
            if terms.len() > 1 {
                let r0 = find(&mut parent, terms[0].0);
                for &(v, _) in &terms[1..] {
                    let rv = find(&mut parent, v);
                    parent[rv] = r0;
                }
            }
        }
        let mut comp_of_root: HashMap<usize, usize> = HashMap::new();
        let mut comp_vars: Vec<Vec<usize>> = Vec::new();
        let mut var_comp = vec![usize::MAX; p.total];
        let mut var_pos = vec![usize::MAX; p.total];
        for v in 0..p.total {
            let r = find(&mut parent, v);
            let c = *comp_of_root.entry(r).or_insert_with(|| {
                comp_vars.push(Vec::new());
                comp_vars.len() - 1
            });
            var_comp[v] = c;
            var_pos[v] = comp_vars[c].len();
            comp_vars[c].push(v);
        }

        // Normal matrices per component, factored once.
        let mut gram: Vec<Matrix> =
            comp_vars.iter().map(|vs| Matrix::zeros(vs.len(), vs.len())).collect();
        for terms in &row_terms {
            if terms.is_empty() {
                continue;
            }
            let c = var_comp[terms[0].0];
            let g = &mut gram[c];
            for &(v1, c1) in terms {
                let p1 = var_pos[v1];
                for &(v2, c2) in terms {
                    let p2 = var_pos[v2];
                    let val = g.get(p1, p2) + c1 * c2;
                    g.set(p1, p2, val);
                }
            }
        }
        let mut comps = Vec::with_capacity(comp_vars.len());
        for (vs, g) in comp_vars.into_iter().zip(gram.into_iter()) {
            let chol = linalg::cholesky(&g).map_err(|_| {
                Error::Solver("degenerate constraint system: a variable is unconstrained".into())
            })?;
            comps.push(Component { vars: vs, chol });
        }

        Ok(Solver { p, row_const, row_terms, block_rows, n_rows, comps })
    }

    fn chol_solve(l: &Matrix, rhs: &mut [f64]) {
        let n = l.rows();
        for i in 0..n {
            let mut s = rhs[i];
            for j in 0..i {
                s -= l.get(i, j) * rhs[j];
            }
            rhs[i] = s / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..n {
                s -= l.get(j, i) * rhs[j];
            }
            rhs[i] = s / l.get(i, i);
        }
    }

    fn run(&self, tol: f64, max_iter: usize, warm: Option<&[f64]>) -> Result<ConicSolution> {
        let p = self.p;
        let d = p.total;
        let relax = 1.6;
        let mut rho = 1.0f64;

        let mut u = vec![0.0; d];
        if let Some(w) = warm {
            if w.len() != d {
                return Err(Error::Dimension("warm start length mismatch".into()));
            }
            u.copy_from_slice(w);
        }
        let mut w_rows = vec![0.0; self.n_rows]; // A u + b
        let mut z = vec![0.0; self.n_rows];
        let mut z_prev = vec![0.0; self.n_rows];
        let mut lam = vec![0.0; self.n_rows];
        let mut rhs = vec![0.0; d];

        let max_dim = self.block_rows.iter().map(|&(_, dim)| dim).max().unwrap_or(1);
        let mut scratch = ProjScratch::new(max_dim);
        let max_comp = self.comps.iter().map(|c| c.vars.len()).max().unwrap_or(0);
        let mut local = vec![0.0; max_comp];

        // Initialize z as the projection of the warm start's blocks.
        self.mat_rows(&u, &mut w_rows);
        z.copy_from_slice(&w_rows);
        self.project_blocks(&mut z, &mut scratch)?;

        let log = std::env::var_os("CS_FORGE_SOLVER_LOG").is_some();
        let mut it = 0;
        let mut primal_rel = f64::INFINITY;
        let mut dual_rel = f64::INFINITY;
        while it < max_iter {
            it += 1;
            // u-step: (A^T A) u = A^T (z - lam - b) - c / rho.
            for r in rhs.iter_mut() {
                *r = 0.0;
            }
            for (row, terms) in self.row_terms.iter().enumerate() {
                if terms.is_empty() {
                    continue;
                }
                let v = z[row] - lam[row] - self.row_const[row];
                for &(var, c) in terms {
                    rhs[var] += c * v;
                }
            }
            for (i, c) in p.objective.iter().enumerate() {
                rhs[i] -= c / rho;
            }
            for comp in &self.comps {
                let k = comp.vars.len();
                for (slot, &v) in local[..k].iter_mut().zip(&comp.vars) {
                    *slot = rhs[v];
                }
                Self::chol_solve(&comp.chol, &mut local[..k]);
                for (&v, &x) in comp.vars.iter().zip(&local[..k]) {
                    u[v] = x;
                }
            }

            self.mat_rows(&u, &mut w_rows);

            // Over-relaxed z-step and dual update.
            z_prev.copy_from_slice(&z);
            for row in 0..self.n_rows {
                let hat = relax * w_rows[row] + (1.0 - relax) * z_prev[row];
                z[row] = hat + lam[row];
            }
            self.project_blocks(&mut z, &mut scratch)?;
            for row in 0..self.n_rows {
                let hat = relax * w_rows[row] + (1.0 - relax) * z_prev[row];
                lam[row] += hat - z[row];
            }

            if it % 25 == 0 || it == max_iter {
                let mut rnorm = 0.0;
                let mut wnorm = 0.0;
                let mut znorm = 0.0;
                for row in 0..self.n_rows {
                    let diff = w_rows[row] - z[row];
                    rnorm += diff * diff;
                    wnorm += w_rows[row] * w_rows[row];
                    znorm += z[row] * z[row];
                }
                // Per-block primal residual bounds the eigenvalue violation
                // of B_j(u): z_j is PSD, so lambda_min(B_j(u)) >= -|B_j(u)-z_j|_F.
                let mut feas_bound = 0.0f64;
                for &(start, dim) in &self.block_rows {
                    let mut b = 0.0;
                    let mut zb = 0.0;
                    for row in start..start + svec_len(dim) {
                        let diff = w_rows[row] - z[row];
                        b += diff * diff;
                        zb += z[row] * z[row];
                    }
                    feas_bound = feas_bound.max(b.sqrt() / zb.sqrt().max(1.0));
                }
                let mut s = vec![0.0; d];
                for (row, terms) in self.row_terms.iter().enumerate() {
                    let dz = z[row] - z_prev[row];
                    for &(var, c) in terms {
                        s[var] += c * dz;
                    }
                }
                let snorm: f64 = s.iter().map(|x| x * x).sum::<f64>().sqrt() * rho;
                let lam_at: f64 = {
                    let mut a = vec![0.0; d];
                    for (row, terms) in self.row_terms.iter().enumerate() {
                        for &(var, c) in terms {
                            a[var] += c * lam[row];
                        }
                    }
                    a.iter().map(|x| x * x).sum::<f64>().sqrt() * rho
                };
                primal_rel = rnorm.sqrt() / wnorm.sqrt().max(znorm.sqrt()).max(1.0);
                dual_rel = snorm / lam_at.max(1.0);
                if log && (it % 500 == 0 || it == max_iter) {
                    let obj: f64 =
                        p.objective.iter().zip(u.iter()).map(|(c, x)| c * x).sum();
                    eprintln!(
                        "solver it {} primal {:.2e} dual {:.2e} feas {:.2e} rho {:.1e} obj {:.6}",
                        it, primal_rel, dual_rel, feas_bound, rho, obj
                    );
                }
                if primal_rel < tol && dual_rel < tol && feas_bound <= tol {
                    break;
                }
                // Adaptive penalty: only the dual variables rescale; the
                // normal-equation factorization is rho-independent.
                let (scale, inv) = if primal_rel > 10.0 * dual_rel {
                    (2.0, 0.5)
                } else if dual_rel > 10.0 * primal_rel {
                    (0.5, 2.0)
                } else if primal_rel > 3.0 * dual_rel {
                    // Gentle drift: large jumps oscillate on this problem
                    // family, but a persistent mild imbalance stalls the tail.
                    (1.05, 1.0 / 1.05)
                } else if dual_rel > 3.0 * primal_rel {
                    (1.0 / 1.05, 1.05)
                } else {
                    (1.0, 1.0)
                };
                if scale != 1.0 && rho * scale < 1e6 && rho * scale > 1e-6 {
                    rho *= scale;
                    for l in lam.iter_mut() {
                        *l *= inv;
                    }
                }
            }
        }

        let feas = p.feasibility(&u)?;
        let objective: f64 =
            p.objective.iter().zip(u.iter()).map(|(c, x)| c * x).sum();
        let conv = primal_rel.max(dual_rel);
        let status = if conv <= tol && feas <= 10.0 * tol {
            SolveStatus::Converged
        } else if primal_rel > 0.1 {
            SolveStatus::Infeasible
        } else {
            SolveStatus::MaxIter
        };
        Ok(ConicSolution {
            values: u,
            objective,
            feas_residual: feas,
            conv_residual: conv,
            iterations: it,
            status,
        })
    }

    fn mat_rows(&self, u: &[f64], out: &mut [f64]) {
        for (row, terms) in self.row_terms.iter().enumerate() {
            let mut v = self.row_const[row];
            for &(var, c) in terms {
                v += c * u[var];
            }
            out[row] = v;
        }
    }

    fn project_blocks(&self, z: &mut [f64], scratch: &mut ProjScratch) -> Result<()> {
        for &(start, dim) in &self.block_rows {
            if dim == 1 {
                if z[start] < 0.0 {
                    z[start] = 0.0;
                }
                continue;
            }
            let len = svec_len(dim);
            psd_project_packed(&mut z[start..start + len], dim, scratch);
        }
        Ok(())
    }
}

/// Reusable buffers for the in-place packed PSD projection.
struct ProjScratch {
    a: Vec<f64>,
    v: Vec<f64>,
}

impl ProjScratch {
    fn new(max_dim: usize) -> Self {
        ProjScratch { a: vec![0.0; max_dim * max_dim], v: vec![0.0; max_dim * max_dim] }
    }
}

/// Projects a packed symmetric block onto the PSD cone without allocating:
/// cyclic Jacobi on a dense scratch copy, then a rank-filtered rebuild.
fn psd_project_packed(z: &mut [f64], n: usize, scratch: &mut ProjScratch) {
    let a = &mut scratch.a[..n * n];
    let v = &mut scratch.v[..n * n];
    let mut pos = 0;
    let mut norm2 = 0.0;
    for i in 0..n {
        for j in i..n {
            // Scaled-svec storage: off-diagonals carry a sqrt(2) factor.
            let x = if i == j { z[pos] } else { z[pos] / SQRT2 };
            a[i * n + j] = x;
            a[j * n + i] = x;
            norm2 += if i == j { x * x } else { 2.0 * x * x };
            pos += 1;
        }
    }
    for (k, out) in v.iter_mut().enumerate() {
        *out = if k % (n + 1) == 0 { 1.0 } else { 0.0 };
    }
    let eps = 1e-12 * norm2.sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let x = a[i * n + j];
                off += 2.0 * x * x;
            }
        }
        if off.sqrt() <= eps {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= eps * 1e-4 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    // Rebuild only the nonnegative eigendirections, packed upper triangle.
    let mut pos = 0;
    for i in 0..n {
        for j in i..n {
            let mut x = 0.0;
            for k in 0..n {
                let lam = a[k * n + k];
                if lam > 0.0 {
                    x += lam * v[i * n + k] * v[j * n + k];
                }
            }
            z[pos] = if i == j { x } else { SQRT2 * x };
            pos += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Assemblies for the sensing-matrix relaxations.
// ---------------------------------------------------------------------------

/// An assembled relaxation plus handles to its Gram variables.
pub struct SdrAssembly {
    pub problem: ConicProblem,
    /// Single: [Q]. Orthogonal MAC: [Q_1, Q_2]. Coherent MAC: the joint
    /// stacked Gram.
    pub q_vars: Vec<VarRef>,
    pub support_count: usize,
}

/// Rank-relaxed design program: minimize the summed per-support oracle-MSE
/// epigraphs over the Gram of the sensing matrix, under the transmit-power
/// trace constraint. The rank constraint is dropped.
pub fn assemble_sdr(
    spec: &SystemSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
) -> Result<SdrAssembly> {
    if supports.is_empty() {
        return Err(Error::Domain("empty support collection".into()));
    }
    let k = r.rows();
    let r_inv = linalg::inv_spd(r)?;
    let mut p = ConicProblem::new();

    match spec {
        SystemSpec::Single(c) => {
            let l = c.l();
            let q = p.add_sym_var("Q", l);
            let y = if c.sigma_v > 0.0 { Some(p.add_sym_var("Y", l)) } else { None };
            for (si, s) in supports.sets.iter().enumerate() {
                let x = p.add_sym_var(&format!("X{}", si), k);
                p.objective_trace(x, &Matrix::identity(k), 1.0);
                let blk = p.add_psd_block(2 * k);
                p.block_add_const(blk, 0, 0, &r_inv);
                p.block_add_const(blk, 0, k, &Matrix::identity(k));
                p.block_add_var(blk, k, k, x, 1.0);
                // W = D_S^T = (H E_S)^T: row p of W is row s_p of H^T.
                let d_s = c.h.select_columns(s.indices());
                let w = d_s.transpose();
                let snr = c.g * c.g / (c.sigma_w * c.sigma_w);
                p.block_add_congruence(blk, 0, q, &w, snr);
                if let Some(y) = y {
                    p.block_add_congruence(blk, 0, y, &w, -1.0);
                }
            }
            if let Some(y) = y {
                let blk = p.add_psd_block(2 * l);
                p.block_add_var(blk, 0, 0, y, 1.0);
                p.block_add_var(blk, 0, l, q, c.g / c.sigma_w);
                let cc = c.sigma_w * c.sigma_w / (c.g * c.g * c.sigma_v * c.sigma_v);
                p.block_add_const(blk, l, l, &Matrix::identity(l).scale(cc));
                p.block_add_var(blk, l, l, q, 1.0);
            }
            // Power: P - Tr{(H R_x H^T + sigma_v^2 I) Q} >= 0.
            let wpow = power_weight(&c.h, r_x, c.sigma_v);
            let blk = p.add_psd_block(1);
            p.block_add_const(blk, 0, 0, &Matrix::diag(&[c.p]));
            p.block_add_trace(blk, 0, 0, q, &wpow, -1.0);
            let blk = p.add_psd_block(l);
            p.block_add_var(blk, 0, 0, q, 1.0);
            Ok(SdrAssembly { problem: p, q_vars: vec![q], support_count: supports.len() })
        }
        SystemSpec::Multi(m) => match m.mode {
            MacMode::Orthogonal => assemble_orthogonal(m, &r_inv, r_x, supports, k),
            MacMode::Coherent => assemble_coherent(m, &r_inv, r_x, supports, k),
        },
    }
}

fn power_weight(h: &Matrix, r_x: &Matrix, sigma_v: f64) -> Matrix {
    let mut w = h.matmul(r_x).matmul_t(h);
    if sigma_v > 0.0 {
        w = w.add_scaled_identity(sigma_v * sigma_v);
    }
    w.symmetrize()
}

fn assemble_orthogonal(
    m: &MultiTerminalSpec,
    r_inv: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    k: usize,
) -> Result<SdrAssembly> {
    let mut p = ConicProblem::new();
    let qs: Vec<VarRef> = (0..2).map(|l| p.add_sym_var(&format!("Q{}", l + 1), m.terminals[l].l())).collect();
    let ys: Vec<Option<VarRef>> = (0..2)
        .map(|l| {
            if m.terminals[l].sigma_v > 0.0 {
                Some(p.add_sym_var(&format!("Y{}", l + 1), m.terminals[l].l()))
            } else {
                None
            }
        })
        .collect();
    for (si, s) in supports.sets.iter().enumerate() {
        let x = p.add_sym_var(&format!("X{}", si), k);
        p.objective_trace(x, &Matrix::identity(k), 1.0);
        let blk = p.add_psd_block(2 * k);
        p.block_add_const(blk, 0, 0, r_inv);
        p.block_add_const(blk, 0, k, &Matrix::identity(k));
        p.block_add_var(blk, k, k, x, 1.0);
        for l in 0..2 {
            let t = &m.terminals[l];
            let w = t.h.select_columns(s.indices()).transpose();
            let snr = t.g * t.g / (t.sigma_w * t.sigma_w);
            p.block_add_congruence(blk, 0, qs[l], &w, snr);
            if let Some(y) = ys[l] {
                p.block_add_congruence(blk, 0, y, &w, -1.0);
            }
        }
    }
    for l in 0..2 {
        if let Some(y) = ys[l] {
            let t = &m.terminals[l];
            let ll = t.l();
            let blk = p.add_psd_block(2 * ll);
            p.block_add_var(blk, 0, 0, y, 1.0);
            p.block_add_var(blk, 0, ll, qs[l], t.g / t.sigma_w);
            let cc = t.sigma_w * t.sigma_w / (t.g * t.g * t.sigma_v * t.sigma_v);
            p.block_add_const(blk, ll, ll, &Matrix::identity(ll).scale(cc));
            p.block_add_var(blk, ll, ll, qs[l], 1.0);
        }
    }
    let blk = p.add_psd_block(1);
    p.block_add_const(blk, 0, 0, &Matrix::diag(&[m.p]));
    for l in 0..2 {
        let t = &m.terminals[l];
        p.block_add_trace(blk, 0, 0, qs[l], &power_weight(&t.h, r_x, t.sigma_v), -1.0);
    }
    for l in 0..2 {
        let blk = p.add_psd_block(m.terminals[l].l());
        p.block_add_var(blk, 0, 0, qs[l], 1.0);
    }
    Ok(SdrAssembly { problem: p, q_vars: qs, support_count: supports.len() })
}

/// Per-terminal column scaling used to stack the coherent-MAC system: with
/// sensor noise the stacked encoder absorbs g_l * sigma_v_l per terminal so
/// the noise covariance becomes Q-affine; without it only g_l.
pub fn coherent_column_scales(m: &MultiTerminalSpec) -> Result<[f64; 2]> {
    let sv = [m.terminals[0].sigma_v, m.terminals[1].sigma_v];
    if (sv[0] == 0.0) != (sv[1] == 0.0) {
        return Err(Error::Validation(
            "coherent MAC requires both or neither terminal to have sensor noise".into(),
        ));
    }
    let mut out = [0.0; 2];
    for l in 0..2 {
        out[l] = m.terminals[l].g * if sv[l] > 0.0 { sv[l] } else { 1.0 };
    }
    Ok(out)
}

/// Stacked source-to-sensor matrix matching [`coherent_column_scales`].
pub fn coherent_stacked_h(m: &MultiTerminalSpec) -> Result<Matrix> {
    let scales = coherent_column_scales(m)?;
    let parts: Vec<Matrix> = (0..2)
        .map(|l| m.terminals[l].h.scale(m.terminals[l].g / scales[l]))
        .collect();
    Ok(Matrix::vstack(&parts[0], &parts[1]))
}

fn assemble_coherent(
    m: &MultiTerminalSpec,
    r_inv: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    k: usize,
) -> Result<SdrAssembly> {
    let scales = coherent_column_scales(m)?;
    let sigma_w = m.terminals[0].sigma_w;
    if (m.terminals[0].sigma_w - m.terminals[1].sigma_w).abs() > 1e-12 * sigma_w.abs() {
        return Err(Error::Validation(
            "coherent MAC has a single receiver: sigma_w must match across terminals".into(),
        ));
    }
    let has_v = m.terminals[0].sigma_v > 0.0;
    let l1 = m.terminals[0].l();
    let l2 = m.terminals[1].l();
    let ltot = l1 + l2;
    let h_hat = coherent_stacked_h(m)?;

    let mut p = ConicProblem::new();
    let q = p.add_sym_var("Qt", ltot);
    let y = if has_v { Some(p.add_sym_var("Yt", ltot)) } else { None };
    for (si, s) in supports.sets.iter().enumerate() {
        let x = p.add_sym_var(&format!("X{}", si), k);
        p.objective_trace(x, &Matrix::identity(k), 1.0);
        let blk = p.add_psd_block(2 * k);
        p.block_add_const(blk, 0, 0, r_inv);
        p.block_add_const(blk, 0, k, &Matrix::identity(k));
        p.block_add_var(blk, k, k, x, 1.0);
        let w = h_hat.select_columns(s.indices()).transpose();
        p.block_add_congruence(blk, 0, q, &w, 1.0 / (sigma_w * sigma_w));
        if let Some(y) = y {
            p.block_add_congruence(blk, 0, y, &w, -1.0);
        }
    }
    if let Some(y) = y {
        let blk = p.add_psd_block(2 * ltot);
        p.block_add_var(blk, 0, 0, y, 1.0);
        p.block_add_var(blk, 0, ltot, q, 1.0 / sigma_w);
        p.block_add_const(blk, ltot, ltot, &Matrix::identity(ltot).scale(sigma_w * sigma_w));
        p.block_add_var(blk, ltot, ltot, q, 1.0);
    }
    // Power against the diagonal blocks: the stacked Gram's block l equals
    // scales[l]^2 A_l^T A_l, so the physical power weight divides by it.
    let mut wpow = Matrix::zeros(ltot, ltot);
    wpow.set_block(0, 0, &power_weight(&m.terminals[0].h, r_x, m.terminals[0].sigma_v).scale(1.0 / (scales[0] * scales[0])));
    wpow.set_block(l1, l1, &power_weight(&m.terminals[1].h, r_x, m.terminals[1].sigma_v).scale(1.0 / (scales[1] * scales[1])));
    let blk = p.add_psd_block(1);
    p.block_add_const(blk, 0, 0, &Matrix::diag(&[m.p]));
    p.block_add_trace(blk, 0, 0, q, &wpow, -1.0);
    let blk = p.add_psd_block(ltot);
    p.block_add_var(blk, 0, 0, q, 1.0);
    Ok(SdrAssembly { problem: p, q_vars: vec![q], support_count: supports.len() })
}

/// Handles into an assembled power-weight rescaling program.
pub struct AlphaAssembly {
    pub problem: ConicProblem,
    pub alphas: Vec<VarRef>,
    pub support_count: usize,
}

/// Post-low-rank weighting program: the per-terminal matrices are fixed and
/// only nonnegative scale factors alpha_l (plus the geometric-mean coupling
/// in coherent mode) are optimized under the same epigraph/power skeleton.
pub fn assemble_alpha_rescale(
    m: &MultiTerminalSpec,
    fixed: &[Matrix; 2],
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
) -> Result<AlphaAssembly> {
    if supports.is_empty() {
        return Err(Error::Domain("empty support collection".into()));
    }
    let k = r.rows();
    let r_inv = linalg::inv_spd(r)?;
    for l in 0..2 {
        if fixed[l].rows() != m.terminals[l].m || fixed[l].cols() != m.terminals[l].l() {
            return Err(Error::Dimension("fixed design has wrong shape".into()));
        }
        if m.terminals[l].sigma_v > 0.0 {
            // The weighting stage with sensor noise needs the Y-slack per
            // alpha; the experiments run sigma_v = 0, so keep this honest.
            return Err(Error::Validation(
                "alpha rescaling implemented for noiseless sensors (sigma_v = 0)".into(),
            ));
        }
    }
    let mut p = ConicProblem::new();
    let mut alphas = vec![p.add_scalar_var("alpha1", true), p.add_scalar_var("alpha2", true)];

    // Per-terminal power shares at alpha = 1.
    let shares: Vec<f64> = (0..2)
        .map(|l| {
            let t = &m.terminals[l];
            let w = power_weight(&t.h, r_x, t.sigma_v);
            let gram = fixed[l].t_matmul(&fixed[l]);
            w.matmul(&gram).trace()
        })
        .collect();

    match m.mode {
        MacMode::Orthogonal => {
            for (si, s) in supports.sets.iter().enumerate() {
                let x = p.add_sym_var(&format!("X{}", si), k);
                p.objective_trace(x, &Matrix::identity(k), 1.0);
                let blk = p.add_psd_block(2 * k);
                p.block_add_const(blk, 0, 0, &r_inv);
                p.block_add_const(blk, 0, k, &Matrix::identity(k));
                p.block_add_var(blk, k, k, x, 1.0);
                for l in 0..2 {
                    let t = &m.terminals[l];
                    let snr = t.g * t.g / (t.sigma_w * t.sigma_w);
                    // Constant K x K congruence per terminal, weighted by alpha_l.
                    let ahd = fixed[l].matmul(&t.h).select_columns(s.indices());
                    let w = ahd.t_matmul(&ahd).symmetrize();
                    p.block_add_scalar_matrix(blk, 0, alphas[l], &w, snr);
                }
            }
        }
        MacMode::Coherent => {
            let alpha3 = p.add_scalar_var("alpha3", true);
            alphas.push(alpha3);
            // Geometric-mean coupling: [[a1, a3], [a3, a2]] PSD.
            let blk = p.add_psd_block(2);
            p.block_add_scalar_entry(blk, 0, 0, alphas[0], 1.0);
            p.block_add_scalar_entry(blk, 1, 1, alphas[1], 1.0);
            p.block_add_scalar_entry(blk, 0, 1, alpha3, 1.0);

            let sigma_w = m.terminals[0].sigma_w;
            let g1 = m.terminals[0].g;
            let g2 = m.terminals[1].g;
            for (si, s) in supports.sets.iter().enumerate() {
                let x = p.add_sym_var(&format!("X{}", si), k);
                p.objective_trace(x, &Matrix::identity(k), 1.0);
                let blk = p.add_psd_block(2 * k);
                p.block_add_const(blk, 0, 0, &r_inv);
                p.block_add_const(blk, 0, k, &Matrix::identity(k));
                p.block_add_var(blk, k, k, x, 1.0);
                // Effective per-terminal K-column blocks g_l A_l H_l E_S.
                let b1 = fixed[0].matmul(&m.terminals[0].h).select_columns(s.indices()).scale(g1);
                let b2 = fixed[1].matmul(&m.terminals[1].h).select_columns(s.indices()).scale(g2);
                let snr = 1.0 / (sigma_w * sigma_w);
                let w11 = b1.t_matmul(&b1).symmetrize();
                let w22 = b2.t_matmul(&b2).symmetrize();
                let cross = b1.t_matmul(&b2);
                let w12 = cross.add(&cross.transpose()).symmetrize();
                p.block_add_scalar_matrix(blk, 0, alphas[0], &w11, snr);
                p.block_add_scalar_matrix(blk, 0, alphas[1], &w22, snr);
                p.block_add_scalar_matrix(blk, 0, alpha3, &w12, snr);
            }
        }
    }
    let blk = p.add_psd_block(1);
    p.block_add_const(blk, 0, 0, &Matrix::diag(&[m.p]));
    p.block_add_scalar_entry(blk, 0, 0, alphas[0], -shares[0]);
    p.block_add_scalar_entry(blk, 0, 0, alphas[1], -shares[1]);
    Ok(AlphaAssembly { problem: p, alphas, support_count: supports.len() })
}

/// Upper-bound-minimizing program: the same epigraph machinery with the full
/// source covariance replacing the per-support average.
pub fn assemble_lmmse_min(spec: &SystemSpec, r_x: &Matrix) -> Result<SdrAssembly> {
    let c = match spec {
        SystemSpec::Single(c) => c,
        SystemSpec::Multi(_) => {
            return Err(Error::Validation(
                "the upper-bound-minimizing baseline is single-terminal".into(),
            ))
        }
    };
    let n = c.n();
    let l = c.l();
    let rx_inv = match linalg::inv_spd(r_x) {
        Ok(mm) => mm,
        Err(_) => {
            let eps = 1e-10 * r_x.trace() / n as f64;
            linalg::inv_spd(&r_x.clone().add_scaled_identity(eps))?
        }
    };
    let mut p = ConicProblem::new();
    let q = p.add_sym_var("Q", l);
    let y = if c.sigma_v > 0.0 { Some(p.add_sym_var("Y", l)) } else { None };
    let x = p.add_sym_var("X", n);
    p.objective_trace(x, &Matrix::identity(n), 1.0);
    let blk = p.add_psd_block(2 * n);
    p.block_add_const(blk, 0, 0, &rx_inv);
    p.block_add_const(blk, 0, n, &Matrix::identity(n));
    p.block_add_var(blk, n, n, x, 1.0);
    let w = h_transpose(&c.h);
    p.block_add_congruence(blk, 0, q, &w, c.g * c.g / (c.sigma_w * c.sigma_w));
    if let Some(y) = y {
        p.block_add_congruence(blk, 0, y, &w, -1.0);
        let blk = p.add_psd_block(2 * l);
        p.block_add_var(blk, 0, 0, y, 1.0);
        p.block_add_var(blk, 0, l, q, c.g / c.sigma_w);
        let cc = c.sigma_w * c.sigma_w / (c.g * c.g * c.sigma_v * c.sigma_v);
        p.block_add_const(blk, l, l, &Matrix::identity(l).scale(cc));
        p.block_add_var(blk, l, l, q, 1.0);
    }
    let blk = p.add_psd_block(1);
    p.block_add_const(blk, 0, 0, &Matrix::diag(&[c.p]));
    p.block_add_trace(blk, 0, 0, q, &power_weight(&c.h, r_x, c.sigma_v), -1.0);
    let blk = p.add_psd_block(l);
    p.block_add_var(blk, 0, 0, q, 1.0);
    Ok(SdrAssembly { problem: p, q_vars: vec![q], support_count: 1 })
}

fn h_transpose(h: &Matrix) -> Matrix {
    h.transpose()
}

/// Warm-start vector with the Gram set to the power-feasible multiple of the
/// identity and all other variables zero.
pub fn warm_start_identity(assembly: &SdrAssembly, spec: &SystemSpec, r_x: &Matrix) -> Vec<f64> {
    let mut u = vec![0.0; assembly.problem.n_vars()];
    match spec {
        SystemSpec::Single(c) => {
            let tr = power_weight(&c.h, r_x, c.sigma_v).trace();
            let q0 = Matrix::identity(c.l()).scale(c.p / tr.max(1e-12));
            assembly.problem.pack_sym_into(assembly.q_vars[0], &q0, &mut u);
        }
        SystemSpec::Multi(m) => match m.mode {
            MacMode::Orthogonal => {
                for l in 0..2 {
                    let t = &m.terminals[l];
                    let tr = power_weight(&t.h, r_x, t.sigma_v).trace();
                    let q0 = Matrix::identity(t.l()).scale(0.5 * m.p / tr.max(1e-12));
                    assembly.problem.pack_sym_into(assembly.q_vars[l], &q0, &mut u);
                }
            }
            MacMode::Coherent => {
                if let Ok(scales) = coherent_column_scales(m) {
                    let l1 = m.terminals[0].l();
                    let ltot = l1 + m.terminals[1].l();
                    let mut q0 = Matrix::zeros(ltot, ltot);
                    for l in 0..2 {
                        let t = &m.terminals[l];
                        let tr = power_weight(&t.h, r_x, t.sigma_v).trace()
                            / (scales[l] * scales[l]);
                        let block = Matrix::identity(t.l()).scale(0.5 * m.p / tr.max(1e-12));
                        q0.set_block(if l == 0 { 0 } else { l1 }, if l == 0 { 0 } else { l1 }, &block);
                    }
                    assembly.problem.pack_sym_into(assembly.q_vars[0], &q0, &mut u);
                }
            }
        },
    }
    u
}
