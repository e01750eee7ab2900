//! Standard-form semidefinite programming: minimize `Tr(C X)` over block
//! positive-semidefinite `X` subject to trace-linear equalities and
//! inequalities, plus the Hermitian-to-real embedding used by the complex
//! beamforming relaxations. Solves run on an interior-point conic solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Solver options.
#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    /// Gap and feasibility tolerance.
    pub eps: f64,
    pub max_iters: u32,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { eps: 1e-7, max_iters: 200 }
    }
}

/// Terminal status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The solver stopped early without certifying optimality; the returned
    /// point is the best iterate and may still be usable.
    Stalled,
}

impl SdpStatus {
    /// True when the returned point is usable as a solution.
    pub fn is_ok(self) -> bool {
        matches!(self, SdpStatus::Optimal | SdpStatus::NearOptimal)
    }
}

/// A block-diagonal standard-form SDP. Every constraint supplies one
/// symmetric coefficient matrix per block; rows are stored sparsely in the
/// scaled-triangle coordinates so large, mostly-empty constraint sets stay
/// cheap.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    dims: Vec<usize>,
    c: Vec<f64>,
    eqs: Vec<(Vec<(usize, f64)>, f64)>,
    ineqs: Vec<(Vec<(usize, f64)>, f64)>,
    socs: Vec<Vec<(Vec<(usize, f64)>, f64)>>,
    pub options: SdpOptions,
}

/// Result of an SDP solve.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Primal blocks, symmetric and numerically PSD.
    pub x: Vec<DMatrix<f64>>,
    pub status: SdpStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Worst equality-constraint violation `|Tr(A_i X) - b_i|`.
    pub max_eq_residual: f64,
    pub duality_gap: f64,
    pub iterations: u32,
}

fn check_symmetric(mat: &DMatrix<f64>, what: &str) -> Result<()> {
    if !mat.is_square() {
        return Err(Error::Contract(format!("{what} matrix must be square")));
    }
    let resid = (mat - mat.transpose()).norm();
    if resid > 1e-12 * mat.norm().max(1.0) {
        return Err(Error::Contract(format!("{what} matrix is not symmetric: residual {resid:.3e}")));
    }
    Ok(())
}

/// Scaled upper-triangle vectorization with `<svec(A), svec(B)> = Tr(A B)`.
fn svec(mat: &DMatrix<f64>) -> Vec<f64> {
    let d = mat.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    let s2 = std::f64::consts::SQRT_2;
    for j in 0..d {
        for i in 0..=j {
            out.push(if i == j { mat[(i, j)] } else { s2 * mat[(i, j)] });
        }
    }
    out
}

fn unsvec(vals: &[f64], d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d);
    let s2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for j in 0..d {
        for i in 0..=j {
            let v = if i == j { vals[k] } else { vals[k] / s2 };
            out[(i, j)] = v;
            out[(j, i)] = v;
            k += 1;
        }
    }
    out
}

impl SdpProblem {
    /// A block-diagonal problem with the given objective blocks.
    pub fn new(c: Vec<DMatrix<f64>>, options: SdpOptions) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::Contract("at least one block is required".into()));
        }
        let mut dims = Vec::with_capacity(c.len());
        for blk in &c {
            check_symmetric(blk, "objective")?;
            dims.push(blk.nrows());
        }
        let q = c.iter().flat_map(svec).collect();
        Ok(Self { dims, c: q, eqs: Vec::new(), ineqs: Vec::new(), socs: Vec::new(), options })
    }

    /// Replaces the objective while keeping every constraint. Useful when an
    /// outer algorithm re-solves the same feasible set with updated costs.
    pub fn set_objective(&mut self, c: Vec<DMatrix<f64>>) -> Result<()> {
        if c.len() != self.dims.len() {
            return Err(Error::Contract(format!(
                "objective has {} blocks but the problem has {}",
                c.len(),
                self.dims.len()
            )));
        }
        for (blk, &d) in c.iter().zip(&self.dims) {
            check_symmetric(blk, "objective")?;
            if blk.nrows() != d {
                return Err(Error::Contract("objective block dimension mismatch".into()));
            }
        }
        self.c = c.iter().flat_map(svec).collect();
        Ok(())
    }

    /// Convenience constructor for a single-block problem.
    pub fn single(c: DMatrix<f64>, options: SdpOptions) -> Result<Self> {
        Self::new(vec![c], options)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn check_blocks(&self, a: &[DMatrix<f64>]) -> Result<()> {
        if a.len() != self.dims.len() {
            return Err(Error::Contract(format!(
                "constraint has {} blocks but the problem has {}",
                a.len(),
                self.dims.len()
            )));
        }
        for (blk, &d) in a.iter().zip(&self.dims) {
            check_symmetric(blk, "constraint")?;
            if blk.nrows() != d {
                return Err(Error::Contract(format!(
                    "constraint block is {}x{} but the variable block is {d}x{d}",
                    blk.nrows(),
                    blk.ncols()
                )));
            }
        }
        Ok(())
    }

    /// Sparse row over the concatenated scaled-triangle coordinates.
    fn sparse_row(&self, a: &[DMatrix<f64>]) -> Vec<(usize, f64)> {
        let s2 = std::f64::consts::SQRT_2;
        let mut row = Vec::new();
        let mut offset = 0;
        for (blk, &d) in a.iter().zip(&self.dims) {
            let mut k = 0;
            for j in 0..d {
                for i in 0..=j {
                    let v = if i == j { blk[(i, j)] } else { s2 * blk[(i, j)] };
                    if v != 0.0 {
                        row.push((offset + k, v));
                    }
                    k += 1;
                }
            }
            offset += d * (d + 1) / 2;
        }
        row
    }

    /// Adds `sum_b Tr(A_b X_b) = rhs`.
    pub fn add_eq(&mut self, a: Vec<DMatrix<f64>>, rhs: f64) -> Result<()> {
        self.check_blocks(&a)?;
        let row = self.sparse_row(&a);
        self.eqs.push((row, rhs));
        Ok(())
    }

    /// Single-block shorthand for [`SdpProblem::add_eq`].
    pub fn add_eq_single(&mut self, a: DMatrix<f64>, rhs: f64) -> Result<()> {
        self.add_eq(vec![a], rhs)
    }

    /// Adds `sum_b Tr(A_b X_b) <= rhs`.
    pub fn add_ineq(&mut self, a: Vec<DMatrix<f64>>, rhs: f64) -> Result<()> {
        self.check_blocks(&a)?;
        let row = self.sparse_row(&a);
        self.ineqs.push((row, rhs));
        Ok(())
    }

    /// Adds the second-order-cone constraint `u in SOC`, where component `r`
    /// of `u` is the affine expression `rhs_r - sum_b Tr(A_{r,b} X_b)` and the
    /// cone requires `u_0 >= ||(u_1, ..)||_2`.
    pub fn add_soc(&mut self, rows: Vec<(Vec<DMatrix<f64>>, f64)>) -> Result<()> {
        if rows.len() < 2 {
            return Err(Error::Contract("a second-order cone needs at least two rows".into()));
        }
        let mut stored = Vec::with_capacity(rows.len());
        for (a, rhs) in rows {
            self.check_blocks(&a)?;
            stored.push((self.sparse_row(&a), rhs));
        }
        self.socs.push(stored);
        Ok(())
    }

    fn n_vars(&self) -> usize {
        self.dims.iter().map(|d| d * (d + 1) / 2).sum()
    }

    /// Solves the problem with an interior-point method. Deterministic for
    /// identical inputs.
    pub fn solve(&self) -> Result<SdpSolution> {
        let n = self.n_vars();
        let q: Vec<f64> = self.c.clone();

        // Rows: equalities (zero cone), inequalities (nonnegative cone),
        // second-order cones, then -x + s = 0 with s in the PSD triangle
        // cones.
        let m_eq = self.eqs.len();
        let m_in = self.ineqs.len();
        let m_soc: usize = self.socs.iter().map(|s| s.len()).sum();
        let m_total = m_eq + m_in + m_soc + n;
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::with_capacity(m_total);

        let soc_rows = self.socs.iter().flatten();
        for (r, (row, rhs)) in self.eqs.iter().chain(self.ineqs.iter()).chain(soc_rows).enumerate()
        {
            for &(c_idx, v) in row {
                rows.push(r);
                cols.push(c_idx);
                vals.push(v);
            }
            b.push(*rhs);
        }
        for k in 0..n {
            rows.push(m_eq + m_in + m_soc + k);
            cols.push(k);
            vals.push(-1.0);
            b.push(0.0);
        }

        let a_mat = CscMatrix::new_from_triplets(m_total, n, rows, cols, vals);
        let p_mat = CscMatrix::zeros((n, n));
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if m_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(m_eq));
        }
        if m_in > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(m_in));
        }
        for soc in &self.socs {
            cones.push(SupportedConeT::SecondOrderConeT(soc.len()));
        }
        for &d in &self.dims {
            cones.push(SupportedConeT::PSDTriangleConeT(d));
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.options.max_iters)
            .tol_gap_abs(self.options.eps)
            .tol_gap_rel(self.options.eps)
            .tol_feas(self.options.eps)
            .build()
            .map_err(|e| Error::Solver(format!("invalid solver settings: {e}")))?;

        let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("problem assembly failed: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        let status = match sol.status {
            SolverStatus::Solved => SdpStatus::Optimal,
            SolverStatus::AlmostSolved => SdpStatus::NearOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SdpStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SdpStatus::Unbounded
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SdpStatus::IterationLimit,
            SolverStatus::InsufficientProgress | SolverStatus::NumericalError => {
                SdpStatus::Stalled
            }
            other => return Err(Error::Solver(format!("solver failed: {other:?}"))),
        };

        let mut x = Vec::with_capacity(self.dims.len());
        let mut offset = 0;
        for &d in &self.dims {
            let len = d * (d + 1) / 2;
            x.push(unsvec(&sol.x[offset..offset + len], d));
            offset += len;
        }

        let x_svec: Vec<f64> = x.iter().flat_map(svec).collect();
        let mut max_eq_residual: f64 = 0.0;
        for (row, rhs) in &self.eqs {
            let val: f64 = row.iter().map(|&(c_idx, v)| v * x_svec[c_idx]).sum();
            max_eq_residual = max_eq_residual.max((val - rhs).abs());
        }

        Ok(SdpSolution {
            x,
            status,
            primal_objective: sol.obj_val,
            dual_objective: sol.obj_val_dual,
            max_eq_residual,
            duality_gap: (sol.obj_val - sol.obj_val_dual).abs(),
            iterations: sol.iterations,
        })
    }
}

/// Bookkeeping for a complex Hermitian problem solved through its real
/// embedding `[[Re, -Im], [Im, Re]]`.
#[derive(Debug, Clone)]
pub struct HermitianEmbedding {
    /// Complex dimension; the real block is `2n x 2n`.
    pub n: usize,
}

fn check_hermitian(mat: &DMatrix<Complex64>, what: &str) -> Result<()> {
    if !mat.is_square() {
        return Err(Error::Contract(format!("{what} matrix must be square")));
    }
    let resid = (mat - mat.adjoint()).norm();
    if resid > 1e-12 * mat.norm().max(1.0) {
        return Err(Error::Contract(format!("{what} matrix is not Hermitian: residual {resid:.3e}")));
    }
    Ok(())
}

/// Real embedding of a Hermitian matrix. For Hermitian `H` the embedding is
/// symmetric, and `Tr(embed(C) embed(X)) = 2 Tr(C X)`.
pub fn embed_matrix(mat: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = mat.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = mat[(i, j)];
            out[(i, j)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
            out[(i + n, j + n)] = v.re;
        }
    }
    out
}

/// Builds the real embedding of `min Tr(C X) s.t. Tr(A_i X) = b_i, X >= 0`
/// over Hermitian `X`. Right-hand sides are doubled to match the embedded
/// trace identity; recover the complex objective as `primal_objective / 2`.
pub fn embed_hermitian(
    c: &DMatrix<Complex64>,
    a: &[DMatrix<Complex64>],
    b: &[f64],
    options: SdpOptions,
) -> Result<(SdpProblem, HermitianEmbedding)> {
    check_hermitian(c, "objective")?;
    if a.len() != b.len() {
        return Err(Error::Contract("constraint matrices and right-hand sides differ in count".into()));
    }
    let n = c.nrows();
    let mut problem = SdpProblem::single(embed_matrix(c), options)?;
    for (ai, &bi) in a.iter().zip(b) {
        check_hermitian(ai, "constraint")?;
        if ai.nrows() != n {
            return Err(Error::Contract("constraint dimension mismatch".into()));
        }
        problem.add_eq_single(embed_matrix(ai), 2.0 * bi)?;
    }
    Ok((problem, HermitianEmbedding { n }))
}

/// Recovers the complex Hermitian solution from a real embedded block:
/// `X = (X11 + X22)/2 + j (X21 - X12)/2`.
pub fn recover_complex(emb: &HermitianEmbedding, x_real: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    let n = emb.n;
    if x_real.nrows() != 2 * n {
        return Err(Error::Contract(format!(
            "embedded solution is {}x{} but expected {}x{}",
            x_real.nrows(),
            x_real.ncols(),
            2 * n,
            2 * n
        )));
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = (x_real[(i, j)] + x_real[(i + n, j + n)]) / 2.0;
            let im = (x_real[(i + n, j)] - x_real[(i, j + n)]) / 2.0;
            out[(i, j)] = Complex64::new(re, im);
        }
    }
    // Exact Hermitian symmetrization against roundoff.
    let herm = (&out + out.adjoint()) / Complex64::from(2.0);
    Ok(herm)
}

/// Smallest eigenvalue of a symmetric real matrix (for PSD checks).
pub fn min_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    let sym = (mat + mat.transpose()) / 2.0;
    nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Eigenvalues of a Hermitian complex matrix in descending order, via the
/// real embedding (each eigenvalue appears doubled there).
pub fn hermitian_eigenvalues(mat: &DMatrix<Complex64>) -> DVector<f64> {
    let (vals, _) = hermitian_eig(mat);
    let n = mat.nrows();
    // Ascending to descending.
    DVector::from_iterator(n, (0..n).map(|i| vals[n - 1 - i]))
}

/// Dominant eigenpair of a Hermitian complex matrix.
pub fn hermitian_top_eigenpair(mat: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let (vals, vecs) = hermitian_eig(mat);
    let n = mat.nrows();
    let v = vecs.column(n - 1).clone_owned();
    let norm = v.norm();
    (vals[n - 1], v / Complex64::from(norm.max(1e-300)))
}

unsafe extern "C" {
    fn zheevd_(
        jobz: *const i8,
        uplo: *const i8,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        w: *mut f64,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        lrwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
    fn zherk_(
        uplo: *const i8,
        trans: *const i8,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const Complex64,
        lda: *const i32,
        beta: *const f64,
        c: *mut Complex64,
        ldc: *const i32,
    );
}

fn hermitian_eig_lapack(mat: &DMatrix<Complex64>) -> Option<(DVector<f64>, DMatrix<Complex64>)> {
    let n = mat.nrows();
    if n == 0 || n > i32::MAX as usize {
        return None;
    }
    let ni = n as i32;
    let mut a = mat.clone();
    let mut w = vec![0.0f64; n];
    let mut info = 0i32;
    // Workspace query, then the actual decomposition.
    let mut work_probe = [Complex64::ZERO; 1];
    let mut rwork_probe = [0.0f64; 1];
    let mut iwork_probe = [0i32; 1];
    let query = -1i32;
    unsafe {
        zheevd_(
            b"V\0".as_ptr() as *const i8,
            b"L\0".as_ptr() as *const i8,
            &ni,
            a.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work_probe.as_mut_ptr(),
            &query,
            rwork_probe.as_mut_ptr(),
            &query,
            iwork_probe.as_mut_ptr(),
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return None;
    }
    let lwork = (work_probe[0].re as usize).max(2 * n + n * n);
    let lrwork = (rwork_probe[0] as usize).max(1 + 5 * n + 2 * n * n);
    let liwork = (iwork_probe[0] as usize).max(3 + 5 * n);
    let mut work = vec![Complex64::ZERO; lwork];
    let mut rwork = vec![0.0f64; lrwork];
    let mut iwork = vec![0i32; liwork];
    unsafe {
        zheevd_(
            b"V\0".as_ptr() as *const i8,
            b"L\0".as_ptr() as *const i8,
            &ni,
            a.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &(lwork as i32),
            rwork.as_mut_ptr(),
            &(lrwork as i32),
            iwork.as_mut_ptr(),
            &(liwork as i32),
            &mut info,
        );
    }
    if info != 0 {
        return None;
    }
    Some((DVector::from_vec(w), a))
}

/// Full eigendecomposition of a Hermitian complex matrix: ascending
/// eigenvalues and the matching orthonormal eigenvector columns. Backed by
/// LAPACK with a real-embedding fallback.
pub fn hermitian_eig(mat: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<Complex64>) {
    if let Some(out) = hermitian_eig_lapack(mat) {
        return out;
    }
    // Fallback: the real embedding carries each eigenpair twice; keep one
    // representative per doubled eigenvalue.
    let n = mat.nrows();
    let eig = nalgebra::SymmetricEigen::new(embed_matrix(mat));
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut vals = DVector::zeros(n);
    let mut vecs = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let idx = order[2 * k];
        vals[k] = (eig.eigenvalues[order[2 * k]] + eig.eigenvalues[order[2 * k + 1]]) / 2.0;
        let mut v = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                Complex64::new(eig.eigenvectors[(i, idx)], eig.eigenvectors[(i + n, idx)])
            }),
        );
        let norm = v.norm().max(1e-300);
        v /= Complex64::from(norm);
        vecs.set_column(k, &v);
    }
    (vals, vecs)
}

/// Sparse Hermitian matrix stored as strict upper-triangle plus real diagonal
/// triplets `(i, j, v)` with `i <= j`, sorted by `(j, i)`.
#[derive(Debug, Clone)]
pub struct SparseHermitian {
    /// Matrix dimension.
    pub n: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseHermitian {
    /// Captures the upper triangle of a dense Hermitian matrix, dropping
    /// entries below `drop_tol` in magnitude.
    pub fn from_dense(mat: &DMatrix<Complex64>, drop_tol: f64) -> Result<Self> {
        check_hermitian(mat, "sparse constraint")?;
        let n = mat.nrows();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let v = mat[(i, j)];
                if v.norm() > drop_tol {
                    entries.push((i, j, if i == j { Complex64::from(v.re) } else { v }));
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// `Tr(A X)` against a dense Hermitian `X`; real by symmetry.
    pub fn inner(&self, x: &DMatrix<Complex64>) -> f64 {
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            if i == j {
                acc += v.re * x[(i, j)].re;
            } else {
                acc += 2.0 * (v * x[(i, j)].conj()).re;
            }
        }
        acc
    }

    /// `X += coeff * A` for a dense Hermitian accumulator.
    pub fn axpy(&self, coeff: f64, x: &mut DMatrix<Complex64>) {
        for &(i, j, v) in &self.entries {
            let w = v * Complex64::from(coeff);
            x[(i, j)] += w;
            if i != j {
                x[(j, i)] += w.conj();
            }
        }
    }

    /// `Tr(A B)` between two sparse Hermitian matrices (merge join over the
    /// sorted triplets).
    pub fn inner_sparse(&self, other: &SparseHermitian) -> f64 {
        let mut acc = 0.0;
        let (mut p, mut q) = (0, 0);
        while p < self.entries.len() && q < other.entries.len() {
            let (ai, aj, av) = self.entries[p];
            let (bi, bj, bv) = other.entries[q];
            match (aj, ai).cmp(&(bj, bi)) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    if ai == aj {
                        acc += av.re * bv.re;
                    } else {
                        acc += 2.0 * (av * bv.conj()).re;
                    }
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }
}

/// First-order solver options for [`solve_hermitian_admm`].
#[derive(Debug, Clone, Copy)]
pub struct AdmmOptions {
    /// Initial penalty parameter.
    pub rho0: f64,
    /// Over-relaxation factor in (1, 2).
    pub over_relax: f64,
    /// Relative primal/dual residual tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self { rho0: 1.0, over_relax: 1.6, tol: 1e-6, max_iters: 20_000 }
    }
}

/// `min Tr(C X)` over Hermitian `X >= 0` with sparse trace equalities and an
/// optional single dense trace inequality `Tr(G X) <= 0`. Solved natively in
/// the complex domain by an operator-splitting method whose per-iteration
/// cost is one Hermitian eigendecomposition, so it scales far beyond the
/// interior-point path.
#[derive(Debug, Clone)]
pub struct HermitianAdmmProblem {
    /// Complex dimension of `X`.
    pub n: usize,
    /// Objective matrix (Hermitian).
    pub c: DMatrix<Complex64>,
    /// Equality constraints `Tr(A_r X) = b_r`.
    pub eqs: Vec<(SparseHermitian, f64)>,
    /// Optional inequality matrix `G` for `Tr(G X) <= 0` (Hermitian).
    pub ineq: Option<DMatrix<Complex64>>,
}

/// Re-usable iterate of the splitting method for warm starts.
#[derive(Debug, Clone)]
pub struct AdmmState {
    z: DMatrix<Complex64>,
    u: DMatrix<Complex64>,
    zs: f64,
    us: f64,
    rho: f64,
}

/// Outcome of a splitting solve. `x` satisfies the equality constraints to
/// machine precision by construction; positive semidefiniteness holds up to
/// the primal residual at termination.
#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Affine-feasible Hermitian solution.
    pub x: DMatrix<Complex64>,
    pub status: SdpStatus,
    /// Objective value `Tr(C X)`.
    pub objective: f64,
    /// Worst equality violation of `x`.
    pub max_eq_residual: f64,
    pub iterations: usize,
    /// Terminal iterate for warm-starting a nearby problem.
    pub state: AdmmState,
}

/// Projection machinery onto the affine constraint set of a
/// [`HermitianAdmmProblem`], with the inequality handled through a
/// nonnegative slack.
struct AffineProjector<'a> {
    prob: &'a HermitianAdmmProblem,
    // Eigendecomposition of the constraint Gram matrix for a pseudo-inverse.
    gram_vecs: DMatrix<f64>,
    gram_inv_vals: DVector<f64>,
}

impl<'a> AffineProjector<'a> {
    fn new(prob: &'a HermitianAdmmProblem) -> Result<Self> {
        let p = prob.eqs.len();
        let q = p + usize::from(prob.ineq.is_some());
        let mut gram = DMatrix::<f64>::zeros(q, q);
        for r in 0..p {
            for s in r..p {
                let v = prob.eqs[r].0.inner_sparse(&prob.eqs[s].0);
                gram[(r, s)] = v;
                gram[(s, r)] = v;
            }
        }
        if let Some(g) = &prob.ineq {
            for r in 0..p {
                let v = prob.eqs[r].0.inner(g);
                gram[(r, p)] = v;
                gram[(p, r)] = v;
            }
            // The slack coordinate adds one to the inequality-row diagonal.
            gram[(p, p)] = g.iter().map(|v| v.norm_sqr()).sum::<f64>() + 1.0;
        }
        let eig = nalgebra::SymmetricEigen::new(gram);
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if !(lmax > 0.0) {
            return Err(Error::Contract("degenerate constraint set".into()));
        }
        let cut = lmax * 1e-12;
        let inv_vals = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
        Ok(Self { prob, gram_vecs: eig.eigenvectors, gram_inv_vals: inv_vals })
    }

    /// Projects `(x0, s0)` onto `{A(X) = b, Tr(G X) + s = 0}` in place.
    fn project(&self, x: &mut DMatrix<Complex64>, s: &mut f64) {
        let p = self.prob.eqs.len();
        let q = p + usize::from(self.prob.ineq.is_some());
        let mut resid = DVector::<f64>::zeros(q);
        for (r, (a, b)) in self.prob.eqs.iter().enumerate() {
            resid[r] = a.inner(x) - b;
        }
        if let Some(g) = &self.prob.ineq {
            resid[p] = g.iter().zip(x.iter()).map(|(gv, xv)| (gv.conj() * xv).re).sum::<f64>()
                + *s;
        }
        let lambda =
            &self.gram_vecs * (self.gram_inv_vals.component_mul(&(self.gram_vecs.transpose() * resid)));
        for (r, (a, _)) in self.prob.eqs.iter().enumerate() {
            a.axpy(-lambda[r], x);
        }
        if let Some(g) = &self.prob.ineq {
            let w = Complex64::from(lambda[p]);
            x.zip_apply(g, |xv, gv| *xv -= w * gv);
            *s -= lambda[p];
        }
    }
}

/// Projects a Hermitian matrix onto the PSD cone by eigenvalue clipping. The
/// clipped spectrum is reassembled with a rank-k Hermitian update.
fn project_psd(mat: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (vals, vecs) = hermitian_eig(mat);
    let n = mat.nrows();
    let kept: Vec<usize> = (0..n).filter(|&k| vals[k] > 0.0).collect();
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    if kept.is_empty() {
        return out;
    }
    let k = kept.len();
    let mut factor = DMatrix::<Complex64>::zeros(n, k);
    for (col, &idx) in kept.iter().enumerate() {
        let scale = Complex64::from(vals[idx].sqrt());
        factor.set_column(col, &(vecs.column(idx) * scale));
    }
    let (ni, ki) = (n as i32, k as i32);
    let (alpha, beta) = (1.0f64, 0.0f64);
    unsafe {
        zherk_(
            b"U\0".as_ptr() as *const i8,
            b"N\0".as_ptr() as *const i8,
            &ni,
            &ki,
            &alpha,
            factor.as_slice().as_ptr(),
            &ni,
            &beta,
            out.as_mut_slice().as_mut_ptr(),
            &ni,
        );
    }
    for j in 0..n {
        out[(j, j)] = Complex64::from(out[(j, j)].re);
        for i in 0..j {
            out[(j, i)] = out[(i, j)].conj();
        }
    }
    out
}

/// Solves a [`HermitianAdmmProblem`] by ADMM over the splitting
/// `affine-set + objective` / `PSD cone`, with over-relaxation and adaptive
/// penalty updates. Deterministic for identical inputs.
pub fn solve_hermitian_admm(
    prob: &HermitianAdmmProblem,
    warm: Option<&AdmmState>,
    opts: &AdmmOptions,
) -> Result<AdmmOutcome> {
    check_hermitian(&prob.c, "objective")?;
    if prob.c.nrows() != prob.n {
        return Err(Error::Contract("objective dimension mismatch".into()));
    }
    for (a, _) in &prob.eqs {
        if a.n != prob.n {
            return Err(Error::Contract("constraint dimension mismatch".into()));
        }
    }
    if let Some(g) = &prob.ineq {
        check_hermitian(g, "inequality")?;
        if g.nrows() != prob.n {
            return Err(Error::Contract("inequality dimension mismatch".into()));
        }
    }
    let projector = AffineProjector::new(prob)?;
    let n = prob.n;
    let has_slack = prob.ineq.is_some();

    let mut state = match warm {
        Some(s) if s.z.nrows() == n => s.clone(),
        _ => AdmmState {
            z: DMatrix::zeros(n, n),
            u: DMatrix::zeros(n, n),
            zs: 0.0,
            us: 0.0,
            rho: opts.rho0,
        },
    };

    let alpha = opts.over_relax;
    let mut x = DMatrix::<Complex64>::zeros(n, n);
    let mut converged = false;
    let mut best_rel = f64::INFINITY;
    let mut iter = 0;
    while iter < opts.max_iters {
        iter += 1;
        // Prox of the linear objective restricted to the affine set.
        let inv_rho = Complex64::from(1.0 / state.rho);
        x.zip_zip_apply(&state.z, &state.u, |out, z, u| *out = z - u);
        x.zip_apply(&prob.c, |out, c| *out -= c * inv_rho);
        let mut s = state.zs - state.us;
        projector.project(&mut x, &mut s);

        // Over-relaxed PSD projection.
        let z_prev = state.z.clone();
        let zs_prev = state.zs;
        let mut w = DMatrix::<Complex64>::zeros(n, n);
        w.zip_zip_apply(&x, &z_prev, |out, xv, zv| {
            *out = Complex64::from(alpha) * xv + Complex64::from(1.0 - alpha) * zv
        });
        let sh = alpha * s + (1.0 - alpha) * zs_prev;
        let mut target = w.clone();
        target += &state.u;
        state.z = project_psd(&target);
        state.zs = if has_slack { (sh + state.us).max(0.0) } else { 0.0 };
        state.u += &w - &state.z;
        state.us += sh - state.zs;

        // Residuals on the natural (non-relaxed) splitting.
        let mut rp: f64 = (&x - &state.z).norm_squared();
        let mut rd: f64 = (&state.z - &z_prev).norm_squared();
        if has_slack {
            rp += (s - state.zs) * (s - state.zs);
            rd += (state.zs - zs_prev) * (state.zs - zs_prev);
        }
        let rp = rp.sqrt();
        let rd = state.rho * rd.sqrt();
        let scale_p = x.norm().max(state.z.norm()).max(1.0);
        let scale_d = (state.rho * state.u.norm()).max(1.0);
        let rel = (rp / scale_p).max(rd / scale_d);
        best_rel = best_rel.min(rel);
        if rel <= opts.tol {
            converged = true;
            break;
        }
        // Balance the residuals every few iterations.
        if iter % 20 == 0 && iter + 100 < opts.max_iters {
            if rp * scale_d > 10.0 * rd * scale_p {
                state.rho *= 2.0;
                state.u /= Complex64::from(2.0);
                state.us /= 2.0;
            } else if rd * scale_p > 10.0 * rp * scale_d {
                state.rho /= 2.0;
                state.u *= Complex64::from(2.0);
                state.us *= 2.0;
            }
        }
    }

    let objective = prob.c.iter().zip(x.iter()).map(|(cv, xv)| (cv.conj() * xv).re).sum();
    let mut max_eq_residual: f64 = 0.0;
    for (a, b) in &prob.eqs {
        max_eq_residual = max_eq_residual.max((a.inner(&x) - b).abs());
    }
    let status = if converged {
        SdpStatus::Optimal
    } else if best_rel <= 50.0 * opts.tol {
        SdpStatus::NearOptimal
    } else {
        SdpStatus::IterationLimit
    };
    Ok(AdmmOutcome { x, status, objective, max_eq_residual, iterations: iter, state })
}
