//! Dense convex QP solver for the pointwise controllers.
//!
//! minimize ½ zᵀH z + Fᵀz  subject to  A z ≤ b, lb ≤ z ≤ ub
//!
//! Problems here are tiny (dimension ≤ 4, a dozen rows), so the solver is a
//! primal active-set method: a Cholesky factor of the regularized Hessian is
//! taken once per solve, and the working-set KKT system is solved through a
//! freshly factored Schur complement on every working-set change. A phase-1
//! pass (the same loop on an auxiliary strictly convex problem) finds a
//! feasible start or certifies infeasibility. Everything is deterministic:
//! ties resolve to the lowest constraint index.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-8;
const ACTIVE_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-11;

/// Convex QP with inequality rows aᵀz ≤ β and optional variable bounds.
#[derive(Clone, Debug)]
pub struct QpProblem {
    pub h: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub a_ineq: Vec<Vec<f64>>,
    pub b_ineq: Vec<f64>,
    pub lb: Option<Vec<f64>>,
    pub ub: Option<Vec<f64>>,
}

impl QpProblem {
    /// Validates symmetry (1e-12) and positive semidefiniteness
    /// (eigenvalues ≥ −1e-10) of the cost matrix.
    pub fn new(h: Vec<Vec<f64>>, f: Vec<f64>) -> Result<Self> {
        let n = f.len();
        if h.len() != n || h.iter().any(|row| row.len() != n) || n == 0 {
            return Err(Error::QpSpec("cost matrix shape does not match F".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if (h[i][j] - h[j][i]).abs() > 1e-12 {
                    return Err(Error::QpSpec(format!(
                        "H not symmetric at ({i},{j}): {} vs {}",
                        h[i][j], h[j][i]
                    )));
                }
            }
        }
        let hm = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i]));
        let eig = hm.symmetric_eigenvalues();
        if eig.iter().any(|&l| l < -1e-10) {
            return Err(Error::QpSpec(format!(
                "H not positive semidefinite: min eigenvalue {}",
                eig.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(QpProblem { h, f, a_ineq: Vec::new(), b_ineq: Vec::new(), lb: None, ub: None })
    }

    pub fn with_ineq(mut self, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = self.dim();
        if a.len() != b.len() || a.iter().any(|row| row.len() != n) {
            return Err(Error::QpSpec("inequality rows do not match dimension".into()));
        }
        self.a_ineq = a;
        self.b_ineq = b;
        Ok(self)
    }

    /// Variable bounds; use ±∞ entries for unbounded coordinates.
    pub fn with_bounds(mut self, lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        let n = self.dim();
        if lb.len() != n || ub.len() != n {
            return Err(Error::QpSpec("bounds do not match dimension".into()));
        }
        self.lb = Some(lb);
        self.ub = Some(ub);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    /// Inequality rows with finite bounds appended: a_ineq rows first, then
    /// −z ≤ −lb rows, then z ≤ ub rows. Active-set indices refer to this
    /// ordering.
    pub fn expanded_rows(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.dim();
        let mut a = self.a_ineq.clone();
        let mut b = self.b_ineq.clone();
        if let Some(lb) = &self.lb {
            for (j, &l) in lb.iter().enumerate() {
                if l.is_finite() {
                    let mut row = vec![0.0; n];
                    row[j] = -1.0;
                    a.push(row);
                    b.push(-l);
                }
            }
        }
        if let Some(ub) = &self.ub {
            for (j, &u) in ub.iter().enumerate() {
                if u.is_finite() {
                    let mut row = vec![0.0; n];
                    row[j] = 1.0;
                    a.push(row);
                    b.push(u);
                }
            }
        }
        (a, b)
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                quad += z[i] * self.h[i][j] * z[j];
            }
        }
        0.5 * quad + self.f.iter().zip(z).map(|(fi, zi)| fi * zi).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub status: QpStatus,
    /// max of stationarity, primal feasibility and complementary slackness
    /// residuals at z (for infeasible problems: the certified constraint
    /// violation).
    pub kkt_residual: f64,
    /// Indices into [`QpProblem::expanded_rows`] active at the solution.
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub objective: f64,
}

/// Active-set workspace; keep one per thread.
#[derive(Clone, Debug)]
pub struct QpSolver {
    pub max_iterations: usize,
}

impl Default for QpSolver {
    fn default() -> Self {
        QpSolver { max_iterations: 200 }
    }
}

enum LoopExit {
    Optimal { z: DVector<f64>, working: Vec<usize>, lambda: Vec<f64>, iters: usize },
    IterationCap { z: DVector<f64>, iters: usize },
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, p: &QpProblem) -> QpSolution {
        let n = p.dim();
        let (rows, bounds) = p.expanded_rows();
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let b = DVector::from_column_slice(&bounds);
        let hm = DMatrix::from_fn(n, n, |i, j| 0.5 * (p.h[i][j] + p.h[j][i]));
        let f = DVector::from_column_slice(&p.f);

        // Eigenvalue-floor regularization: eigenvalues below 1e-6·λmax are
        // lifted to that floor, so strictly convex problems pass through
        // bitwise while zero-curvature (linear) variables get a
        // well-conditioned Hessian. The floor scales with the problem, which
        // keeps the argmin invariant under positive rescaling of (H, F).
        let (hreg, chol) = match floored_cholesky(&hm) {
            Some(c) => c,
            None => {
                return QpSolution {
                    z: vec![0.0; n],
                    status: QpStatus::MaxIterations,
                    kkt_residual: f64::INFINITY,
                    active_set: Vec::new(),
                    iterations: 0,
                    objective: 0.0,
                }
            }
        };
        let hnorm = hm.amax().max(1e-12);

        // Unconstrained minimizer as the cheap feasible-start candidate.
        let z_uncon = chol.solve(&(-&f));
        let start = if is_feasible(&a, &b, &z_uncon) {
            z_uncon
        } else {
            match self.phase1(&a, &b, hnorm) {
                Ok(z) => z,
                Err(violation) => {
                    return QpSolution {
                        z: vec![0.0; n],
                        status: QpStatus::Infeasible,
                        kkt_residual: violation,
                        active_set: Vec::new(),
                        iterations: 0,
                        objective: 0.0,
                    }
                }
            }
        };

        match self.active_set_loop(&hreg, &chol, &f, &a, &b, start) {
            LoopExit::Optimal { z, working, lambda, iters } => {
                // polish on the original Hessian via the indefinite KKT
                // system: at a bounded optimum the active rows pin every
                // flat direction, so this removes both iteration drift and
                // the regularization bias. Fall back to the regularized
                // polish when the system is singular or the refined point
                // violates the working-set assumptions.
                let (z, lambda) = kkt_polish(&hm, &f, &a, &b, &working)
                    .filter(|(z2, l2)| {
                        is_feasible(&a, &b, z2)
                            && l2.iter().all(|&l| l >= -ACTIVE_TOL)
                    })
                    .or_else(|| polish(&chol, &f, &a, &b, &working))
                    .unwrap_or((z, lambda));
                let kkt = kkt_residual(&hm, &f, &a, &b, &z, &working, &lambda);
                let zv: Vec<f64> = z.iter().copied().collect();
                let objective = p.objective(&zv);
                // optimal status carries the residual guarantee; anything
                // looser is reported as a failed solve
                let status = if kkt <= FEAS_TOL {
                    QpStatus::Optimal
                } else {
                    QpStatus::MaxIterations
                };
                QpSolution {
                    z: zv,
                    status,
                    kkt_residual: kkt,
                    active_set: working,
                    iterations: iters,
                    objective,
                }
            }
            LoopExit::IterationCap { z, iters } => {
                let zv: Vec<f64> = z.iter().copied().collect();
                let objective = p.objective(&zv);
                QpSolution {
                    z: zv,
                    status: QpStatus::MaxIterations,
                    kkt_residual: f64::INFINITY,
                    active_set: Vec::new(),
                    iterations: iters,
                    objective,
                }
            }
        }
    }

    /// Feasibility phase: minimize s + ½ε‖(z, s)‖² subject to aᵢᵀz − s ≤ bᵢ
    /// and s ≥ 0, from the strictly feasible start (0, max(0, max −bᵢ) + 1).
    /// The linear cost drives s onto the smallest violation; ε only selects
    /// a least-norm-ish point among the feasible z. Returns a feasible z or
    /// the certified violation s*.
    fn phase1(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        scale: f64,
    ) -> std::result::Result<DVector<f64>, f64> {
        let (rows, n) = (a.nrows(), a.ncols());
        let eps = 1e-6 * scale.max(1.0);
        let h1 = DMatrix::from_diagonal_element(n + 1, n + 1, eps);
        let mut f1 = DVector::zeros(n + 1);
        f1[n] = 1.0;
        let mut a1 = DMatrix::zeros(rows + 1, n + 1);
        a1.view_mut((0, 0), (rows, n)).copy_from(a);
        for i in 0..rows {
            a1[(i, n)] = -1.0;
        }
        a1[(rows, n)] = -1.0; // s ≥ 0
        let mut b1 = DVector::zeros(rows + 1);
        b1.rows_mut(0, rows).copy_from(b);
        let chol = Cholesky::new(h1.clone()).expect("phase-1 Hessian is PD");
        let s0 = b.iter().fold(0.0_f64, |acc, &bi| acc.max(-bi)) + 1.0;
        let mut start = DVector::zeros(n + 1);
        start[n] = s0;
        match self.active_set_loop(&h1, &chol, &f1, &a1, &b1, start) {
            LoopExit::Optimal { z, .. } | LoopExit::IterationCap { z, .. } => {
                let s = z[n];
                if s <= FEAS_TOL {
                    Ok(z.rows(0, n).into_owned())
                } else {
                    Err(s)
                }
            }
        }
    }

    fn active_set_loop(
        &self,
        hreg: &DMatrix<f64>,
        chol: &Cholesky<f64, nalgebra::Dyn>,
        f: &DVector<f64>,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        mut z: DVector<f64>,
    ) -> LoopExit {
        let rows = a.nrows();

        // initial working set: active rows, kept linearly independent and
        // no larger than the dimension
        let mut working: Vec<usize> = Vec::new();
        for i in 0..rows {
            if working.len() < a.ncols()
                && (a.row(i).transpose().dot(&z) - b[i]).abs() <= ACTIVE_TOL
            {
                working.push(i);
                if schur(chol, a, &working).is_none() {
                    working.pop();
                }
            }
        }

        for iter in 0..self.max_iterations {
            let g = hreg * &z + f;
            let y = chol.solve(&g);

            let (p, lambda) = if working.is_empty() {
                (-&y, Vec::new())
            } else {
                match schur(chol, a, &working) {
                    Some((t, s_chol)) => {
                        let aw = select_rows(a, &working);
                        let lam = s_chol.solve(&(-(&aw * &y)));
                        let p = -&y - &t * &lam;
                        (p, lam.iter().copied().collect::<Vec<f64>>())
                    }
                    None => {
                        // dependent working set; drop the newest row
                        working.pop();
                        continue;
                    }
                }
            };

            // relative to the magnitudes inside the KKT solve: the Schur
            // route leaves cancellation noise proportional to ‖H⁻¹g‖ in p
            if p.amax() <= STEP_TOL * (1.0 + z.amax().max(y.amax())) {
                // multipliers decide: done, or release one constraint
                let mut drop: Option<(usize, f64)> = None;
                for (k, &lam) in lambda.iter().enumerate() {
                    if lam < -ACTIVE_TOL && drop.map_or(true, |(_, worst)| lam < worst) {
                        drop = Some((k, lam));
                    }
                }
                match drop {
                    None => {
                        return LoopExit::Optimal { z, working, lambda, iters: iter };
                    }
                    Some((k, _)) => {
                        working.remove(k);
                        continue;
                    }
                }
            }

            // longest feasible step along p; first (lowest-index) blocking
            // constraint enters on ties
            let mut alpha = 1.0_f64;
            let mut blocker = None;
            for i in 0..rows {
                if working.contains(&i) {
                    continue;
                }
                let d = a.row(i).transpose().dot(&p);
                if d > 1e-12 {
                    let r = (b[i] - a.row(i).transpose().dot(&z)) / d;
                    if r < alpha {
                        alpha = r;
                        blocker = Some(i);
                    }
                }
            }
            alpha = alpha.max(0.0);
            z += &p * alpha;
            if let Some(i) = blocker {
                let pos = working.binary_search(&i).unwrap_or_else(|e| e);
                working.insert(pos, i);
            }
        }
        LoopExit::IterationCap { z, iters: self.max_iterations }
    }
}

/// Symmetric eigendecomposition with eigenvalues floored at 1e-6·λmax
/// (absolute floor 1e-12 for the all-zero Hessian). Eigenvalues already
/// above the floor are untouched, so strictly convex problems are solved on
/// their exact Hessian.
fn floored_cholesky(
    h: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    let eig = h.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |acc, &l| acc.max(l.abs()));
    let floor = (1e-6 * lmax).max(1e-12);
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return Cholesky::new(h.clone()).map(|c| (h.clone(), c));
    }
    let lifted = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(floor)),
    );
    let hreg = &eig.eigenvectors * DMatrix::from_diagonal(&lifted) * eig.eigenvectors.transpose();
    let sym = 0.5 * (&hreg + hreg.transpose());
    Cholesky::new(sym.clone()).map(|c| (sym, c))
}

/// Solve [[H, A_Wᵀ], [A_W, 0]] (z, λ) = (−F, b_W) on the original Hessian.
/// `None` when the KKT matrix is singular (a flat direction left unpinned).
fn kkt_polish(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    working: &[usize],
) -> Option<(DVector<f64>, Vec<f64>)> {
    let n = h.nrows();
    let k = working.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (wi, &ci) in working.iter().enumerate() {
        for j in 0..n {
            kkt[(j, n + wi)] = a[(ci, j)];
            kkt[(n + wi, j)] = a[(ci, j)];
        }
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-f));
    for (wi, &ci) in working.iter().enumerate() {
        rhs[n + wi] = b[ci];
    }
    let sol = kkt.full_piv_lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let z = sol.rows(0, n).into_owned();
    let lambda = sol.rows(n, k).iter().copied().collect();
    Some((z, lambda))
}

/// Minimize on the affine set A_W z = b_W: z = −H⁻¹(F + A_Wᵀλ) with
/// λ = −S⁻¹(A_W H⁻¹ F + b_W).
fn polish(
    chol: &Cholesky<f64, nalgebra::Dyn>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    working: &[usize],
) -> Option<(DVector<f64>, Vec<f64>)> {
    let yf = chol.solve(f);
    if working.is_empty() {
        return Some((-yf, Vec::new()));
    }
    let (t, s_chol) = schur(chol, a, working)?;
    let aw = select_rows(a, working);
    let bw = DVector::from_iterator(working.len(), working.iter().map(|&i| b[i]));
    let lam = s_chol.solve(&(-(&aw * &yf) - &bw));
    let z = -&yf - &t * &lam;
    Some((z, lam.iter().copied().collect()))
}

fn is_feasible(a: &DMatrix<f64>, b: &DVector<f64>, z: &DVector<f64>) -> bool {
    (0..a.nrows()).all(|i| a.row(i).transpose().dot(z) <= b[i] + FEAS_TOL)
}

fn select_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

/// H⁻¹A_Wᵀ and the Cholesky factor of the Schur complement A_W H⁻¹ A_Wᵀ;
/// `None` when the working set has become linearly dependent.
#[allow(clippy::type_complexity)]
fn schur(
    chol: &Cholesky<f64, nalgebra::Dyn>,
    a: &DMatrix<f64>,
    working: &[usize],
) -> Option<(DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    let aw = select_rows(a, working);
    let t = chol.solve(&aw.transpose());
    let s = &aw * &t;
    let sym = 0.5 * (&s + s.transpose());
    Cholesky::new(sym).map(|c| (t, c))
}

fn kkt_residual(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z: &DVector<f64>,
    working: &[usize],
    lambda: &[f64],
) -> f64 {
    let mut stat = h * z + f;
    for (k, &i) in working.iter().enumerate() {
        stat += a.row(i).transpose() * lambda[k];
    }
    let mut res = stat.amax();
    for i in 0..a.nrows() {
        res = res.max(a.row(i).transpose().dot(z) - b[i]);
    }
    for (k, &i) in working.iter().enumerate() {
        res = res.max((lambda[k] * (a.row(i).transpose().dot(z) - b[i])).abs());
        res = res.max(-lambda[k]); // dual feasibility folded in
    }
    res.max(0.0)
}
