//! Control-affine systems ẋ = f(x) + g(x)u and admissible input sets.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::Jet;

pub type ScalarFn = Arc<dyn Fn(&[Jet]) -> Result<Jet> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[Jet]) -> Result<Vec<Vec<Jet>>> + Send + Sync>;

/// A control-affine model: drift f, input map g, safety function h whose
/// 0-superlevel set is the safe set, and an optional control Lyapunov
/// function. All evaluators accept jets so the barrier chain can
/// differentiate through them.
#[derive(Clone)]
pub struct ControlAffineSystem {
    name: String,
    n: usize,
    m: usize,
    f: VectorFn,
    g: MatrixFn,
    h: ScalarFn,
    clf: Option<ScalarFn>,
    goal_metric: Option<ScalarFn>,
    params: BTreeMap<String, f64>,
    state_box: Vec<[f64; 2]>,
}

impl std::fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("params", &self.params)
            .finish()
    }
}

impl ControlAffineSystem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        f: VectorFn,
        g: MatrixFn,
        h: ScalarFn,
    ) -> Self {
        ControlAffineSystem {
            name: name.into(),
            n,
            m,
            f,
            g,
            h,
            clf: None,
            goal_metric: None,
            params: BTreeMap::new(),
            state_box: vec![[-1e6, 1e6]; n],
        }
    }

    pub fn with_clf(mut self, v: ScalarFn) -> Self {
        self.clf = Some(v);
        self
    }

    /// Scalar progress metric used for goal detection (e.g. range to a
    /// docking port).
    pub fn with_goal_metric(mut self, g: ScalarFn) -> Self {
        self.goal_metric = Some(g);
        self
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_state_box(mut self, state_box: Vec<[f64; 2]>) -> Self {
        assert_eq!(state_box.len(), self.n);
        self.state_box = state_box;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn state_box(&self) -> &[[f64; 2]] {
        &self.state_box
    }

    pub fn has_clf(&self) -> bool {
        self.clf.is_some()
    }

    pub fn has_goal_metric(&self) -> bool {
        self.goal_metric.is_some()
    }

    pub fn f(&self, x: &[Jet]) -> Result<Vec<Jet>> {
        self.check_state_len(x.len())?;
        (self.f)(x)
    }

    pub fn g(&self, x: &[Jet]) -> Result<Vec<Vec<Jet>>> {
        self.check_state_len(x.len())?;
        (self.g)(x)
    }

    pub fn h(&self, x: &[Jet]) -> Result<Jet> {
        self.check_state_len(x.len())?;
        (self.h)(x)
    }

    pub fn clf(&self, x: &[Jet]) -> Result<Jet> {
        let v = self
            .clf
            .as_ref()
            .ok_or_else(|| Error::Precondition(format!("model `{}` has no CLF", self.name)))?;
        self.check_state_len(x.len())?;
        v(x)
    }

    pub fn goal_metric(&self, x: &[Jet]) -> Result<Jet> {
        let g = self.goal_metric.as_ref().ok_or_else(|| {
            Error::Precondition(format!("model `{}` has no goal metric", self.name))
        })?;
        self.check_state_len(x.len())?;
        g(x)
    }

    pub fn h_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.h(&reals(x))?.value())
    }

    pub fn f_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.f(&reals(x))?.iter().map(Jet::value).collect())
    }

    pub fn g_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .g(&reals(x))?
            .iter()
            .map(|row| row.iter().map(Jet::value).collect())
            .collect())
    }

    pub fn goal_metric_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.goal_metric(&reals(x))?.value())
    }

    /// Closed-loop right-hand side f(x) + g(x)u.
    pub fn xdot(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.m {
            return Err(Error::Dimension { expected: self.m, got: u.len() });
        }
        let f = self.f_at(x)?;
        let g = self.g_at(x)?;
        Ok(f.iter()
            .zip(&g)
            .map(|(fi, gi)| fi + gi.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    fn check_state_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Dimension { expected: self.n, got: len });
        }
        Ok(())
    }
}

pub fn reals(x: &[f64]) -> Vec<Jet> {
    x.iter().map(|&v| Jet::real(v)).collect()
}

/// Geometry of the admissible control region.
#[derive(Clone, Debug)]
pub enum InputKind {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    OneNormBall { radius: f64 },
    Polytope { a: Vec<Vec<f64>>, b: Vec<f64> },
}

/// Non-empty bounded convex control region U with a precomputed vertex list.
#[derive(Clone, Debug)]
pub struct InputSet {
    kind: InputKind,
    dim: usize,
    vertices: Vec<Vec<f64>>,
}

const VERTEX_TOL: f64 = 1e-10;

impl InputSet {
    pub fn bounded_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InputSet("box bounds must have equal nonzero length".into()));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InputSet(format!("bad box interval [{lo}, {hi}]")));
            }
        }
        let dim = lower.len();
        // exactly the 2^m corners
        let mut vertices = Vec::with_capacity(1 << dim);
        for mask in 0..(1usize << dim) {
            let v: Vec<f64> = (0..dim)
                .map(|j| if mask >> j & 1 == 1 { upper[j] } else { lower[j] })
                .collect();
            vertices.push(v);
        }
        Ok(InputSet { kind: InputKind::Box { lower, upper }, dim, vertices })
    }

    pub fn one_norm_ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InputSet("ball dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InputSet(format!("ball radius must be positive, got {radius}")));
        }
        // exactly the 2m axis points
        let mut vertices = Vec::with_capacity(2 * dim);
        for j in 0..dim {
            for s in [radius, -radius] {
                let mut v = vec![0.0; dim];
                v[j] = s;
                vertices.push(v);
            }
        }
        Ok(InputSet { kind: InputKind::OneNormBall { radius }, dim, vertices })
    }

    /// Polytope { u : A u ≤ b }. Vertices are enumerated exhaustively over
    /// row subsets of size m with a rank check; fine for the m ≤ 4 targets
    /// here. Rejects empty and unbounded regions.
    pub fn polytope(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InputSet("polytope needs one bound per row".into()));
        }
        let dim = a[0].len();
        if dim == 0 || a.iter().any(|row| row.len() != dim) {
            return Err(Error::InputSet("polytope rows must share a nonzero width".into()));
        }
        if !recession_cone_trivial(&a, dim) {
            return Err(Error::InputSet("polytope is unbounded".into()));
        }
        let vertices = enumerate_vertices(&a, &b, dim);
        if vertices.is_empty() {
            return Err(Error::InputSet("polytope is empty".into()));
        }
        Ok(InputSet { kind: InputKind::Polytope { a, b }, dim, vertices })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &InputKind {
        &self.kind
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        if u.len() != self.dim {
            return false;
        }
        match &self.kind {
            InputKind::Box { lower, upper } => u
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(ui, (lo, hi))| *ui >= lo - tol && *ui <= hi + tol),
            InputKind::OneNormBall { radius } => {
                u.iter().map(|v| v.abs()).sum::<f64>() <= radius + tol
            }
            InputKind::Polytope { a, b } => a
                .iter()
                .zip(b)
                .all(|(row, bi)| dot_f64(row, u) <= bi + tol),
        }
    }

    /// Pull a point into U. Box: coordinatewise clamp. Ball: radial shrink.
    /// Polytope: bisection toward the vertex centroid.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        match &self.kind {
            InputKind::Box { lower, upper } => u
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(ui, (lo, hi))| ui.clamp(*lo, *hi))
                .collect(),
            InputKind::OneNormBall { radius } => {
                let norm: f64 = u.iter().map(|v| v.abs()).sum();
                if norm <= *radius {
                    u.to_vec()
                } else {
                    u.iter().map(|v| v * radius / norm).collect()
                }
            }
            InputKind::Polytope { .. } => {
                if self.contains(u, 0.0) {
                    return u.to_vec();
                }
                let c = self.centroid();
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64); // u + t (c - u)
                for _ in 0..60 {
                    let t = 0.5 * (lo + hi);
                    let p: Vec<f64> =
                        u.iter().zip(&c).map(|(ui, ci)| ui + t * (ci - ui)).collect();
                    if self.contains(&p, 0.0) {
                        hi = t;
                    } else {
                        lo = t;
                    }
                }
                u.iter().zip(&c).map(|(ui, ci)| ui + hi * (ci - ui)).collect()
            }
        }
    }

    fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for v in &self.vertices {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi;
            }
        }
        for ci in c.iter_mut() {
            *ci /= self.vertices.len() as f64;
        }
        c
    }

    /// inf over U of the affine function c0 + c·u, jet-evaluable so it can
    /// sit inside the barrier chain. Closed form for box and ball, vertex
    /// minimum for polytopes; ties select the first branch in fixed order.
    pub fn affine_infimum(&self, c0: &Jet, c: &[Jet]) -> Jet {
        assert_eq!(c.len(), self.dim, "coefficient length must match input dimension");
        match &self.kind {
            InputKind::Box { lower, upper } => {
                let mut acc = c0.clone();
                for (j, cj) in c.iter().enumerate() {
                    acc = acc + (cj * lower[j]).min(&(cj * upper[j]));
                }
                acc
            }
            InputKind::OneNormBall { radius } => {
                let mut peak = c[0].abs();
                for cj in &c[1..] {
                    peak = peak.max(&cj.abs());
                }
                c0 - peak * *radius
            }
            InputKind::Polytope { .. } => {
                let mut best: Option<Jet> = None;
                for v in &self.vertices {
                    let mut val = c0.clone();
                    for (cj, vj) in c.iter().zip(v) {
                        val = val + cj * *vj;
                    }
                    best = Some(match best {
                        None => val,
                        Some(b) => b.min(&val),
                    });
                }
                best.expect("polytope has at least one vertex")
            }
        }
    }

    /// sup over U of c0 + c·u; the mirror of [`Self::affine_infimum`].
    pub fn affine_supremum(&self, c0: &Jet, c: &[Jet]) -> Jet {
        let neg_c: Vec<Jet> = c.iter().map(|cj| -cj).collect();
        -self.affine_infimum(&(-c0), &neg_c)
    }

    pub fn affine_infimum_at(&self, c0: f64, c: &[f64]) -> f64 {
        self.affine_infimum(&Jet::real(c0), &reals(c)).value()
    }

    pub fn affine_supremum_at(&self, c0: f64, c: &[f64]) -> f64 {
        self.affine_supremum(&Jet::real(c0), &reals(c)).value()
    }

    /// Halfspace description A u ≤ b (ball expands to its 2^m facets).
    pub fn halfspaces(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        match &self.kind {
            InputKind::Box { lower, upper } => {
                let mut a = Vec::with_capacity(2 * self.dim);
                let mut b = Vec::with_capacity(2 * self.dim);
                for j in 0..self.dim {
                    let mut row = vec![0.0; self.dim];
                    row[j] = 1.0;
                    a.push(row);
                    b.push(upper[j]);
                    let mut row = vec![0.0; self.dim];
                    row[j] = -1.0;
                    a.push(row);
                    b.push(-lower[j]);
                }
                (a, b)
            }
            InputKind::OneNormBall { radius } => {
                let mut a = Vec::with_capacity(1 << self.dim);
                let mut b = Vec::with_capacity(1 << self.dim);
                for mask in 0..(1usize << self.dim) {
                    let row: Vec<f64> = (0..self.dim)
                        .map(|j| if mask >> j & 1 == 1 { 1.0 } else { -1.0 })
                        .collect();
                    a.push(row);
                    b.push(*radius);
                }
                (a, b)
            }
            InputKind::Polytope { a, b } => (a.clone(), b.clone()),
        }
    }
}

fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// True iff { d : A d ≤ 0 } = {0}, checked by enumerating the vertices of
/// the cone clipped to the unit box: any nonzero vertex witnesses a
/// recession direction.
fn recession_cone_trivial(a: &[Vec<f64>], dim: usize) -> bool {
    let mut rows = a.to_vec();
    let mut rhs = vec![0.0; a.len()];
    for j in 0..dim {
        let mut row = vec![0.0; dim];
        row[j] = 1.0;
        rows.push(row.clone());
        rhs.push(1.0);
        row[j] = -1.0;
        rows.push(row);
        rhs.push(1.0);
    }
    let vertices = enumerate_vertices(&rows, &rhs, dim);
    vertices
        .iter()
        .all(|v| v.iter().all(|x| x.abs() <= 1e-8))
}

fn enumerate_vertices(a: &[Vec<f64>], b: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let mut subset = vec![0usize; dim];
    combinations(a.len(), dim, &mut subset, 0, 0, &mut |rows| {
        let mat: Vec<Vec<f64>> = rows.iter().map(|&i| a[i].clone()).collect();
        let rhs: Vec<f64> = rows.iter().map(|&i| b[i]).collect();
        if let Some(v) = solve_square(mat, rhs) {
            let feasible = a
                .iter()
                .zip(b)
                .all(|(row, bi)| dot_f64(row, &v) <= bi + VERTEX_TOL);
            if feasible
                && !vertices
                    .iter()
                    .any(|w| w.iter().zip(&v).all(|(x, y)| (x - y).abs() <= 1e-9))
            {
                vertices.push(v);
            }
        }
    });
    vertices
}

fn combinations(
    n: usize,
    k: usize,
    buf: &mut Vec<usize>,
    start: usize,
    depth: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        visit(buf);
        return;
    }
    for i in start..n {
        buf[depth] = i;
        combinations(n, k, buf, i + 1, depth + 1, visit);
    }
}

/// Gaussian elimination with partial pivoting; `None` on rank deficiency.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite pivots")
        })?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_infimum_examples() {
        let u = InputSet::bounded_box(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(u.affine_infimum_at(1.0, &[2.0]), -1.0);
        assert_eq!(u.affine_infimum_at(-2.0, &[-1.0]), -3.0);
        assert_eq!(u.affine_supremum_at(-2.0, &[-1.0]), -1.0);
    }

    #[test]
    fn ball_infimum_examples() {
        let u = InputSet::one_norm_ball(2, 0.25).unwrap();
        assert_eq!(u.affine_infimum_at(0.0, &[3.0, -4.0]), -1.0);
        assert_eq!(u.affine_supremum_at(5.0, &[0.0, 0.0]), 5.0);
    }

    #[test]
    fn polytope_supremum_on_unit_box() {
        let a = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let b = vec![1.0, 0.0, 1.0, 0.0];
        let u = InputSet::polytope(a, b).unwrap();
        assert_eq!(u.vertices().len(), 4);
        assert_eq!(u.affine_supremum_at(0.0, &[1.0, 1.0]), 2.0);
    }

    #[test]
    fn vertices_satisfy_defining_inequalities() {
        let u = InputSet::bounded_box(vec![-0.25, -1.0], vec![0.25, 2.0]).unwrap();
        assert_eq!(u.vertices().len(), 4);
        for v in u.vertices() {
            assert!(u.contains(v, VERTEX_TOL));
        }
        let ball = InputSet::one_norm_ball(3, 0.5).unwrap();
        assert_eq!(ball.vertices().len(), 6);
        for v in ball.vertices() {
            assert!(ball.contains(v, VERTEX_TOL));
        }
    }

    #[test]
    fn rejects_unbounded_and_empty_polytopes() {
        // half-plane: unbounded
        let r = InputSet::polytope(vec![vec![1.0, 0.0]], vec![1.0]);
        assert!(matches!(r, Err(Error::InputSet(ref m)) if m.contains("unbounded")));
        // contradictory slabs: empty
        let r = InputSet::polytope(
            vec![vec![1.0], vec![-1.0]],
            vec![-1.0, -1.0], // u <= -1 and u >= 1
        );
        assert!(matches!(r, Err(Error::InputSet(ref m)) if m.contains("empty")));
    }

    #[test]
    fn infimum_matches_vertex_minimum_closed_forms() {
        // deterministic LCG so the sweep is reproducible
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..1000 {
            let m = 1 + (next().abs() * 3.0) as usize;
            let c0 = 3.0 * next();
            let c: Vec<f64> = (0..m).map(|_| 2.0 * next()).collect();
            let sets = [
                InputSet::bounded_box(
                    (0..m).map(|_| -1.0 - next().abs()).collect(),
                    (0..m).map(|_| 1.0 + next().abs()).collect(),
                )
                .unwrap(),
                InputSet::one_norm_ball(m, 0.1 + next().abs()).unwrap(),
            ];
            for u in sets {
                let inf = u.affine_infimum_at(c0, &c);
                let brute = u
                    .vertices()
                    .iter()
                    .map(|v| c0 + dot_f64(&c, v))
                    .fold(f64::INFINITY, f64::min);
                assert!((inf - brute).abs() <= 1e-12, "{inf} vs {brute}");
                // duality: sup(c0, c) = -inf(-c0, -c), identically
                let neg: Vec<f64> = c.iter().map(|x| -x).collect();
                let sup = u.affine_supremum_at(c0, &c);
                assert_eq!(sup, -u.affine_infimum_at(-c0, &neg));
            }
        }
    }

    #[test]
    fn projection_lands_inside() {
        let ball = InputSet::one_norm_ball(2, 0.25).unwrap();
        let p = ball.project(&[1.0, 1.0]);
        assert!(ball.contains(&p, 1e-12));
        let bx = InputSet::bounded_box(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(bx.project(&[3.0]), vec![1.0]);
    }

    #[test]
    fn halfspaces_describe_the_set() {
        for u in [
            InputSet::bounded_box(vec![-0.25], vec![0.25]).unwrap(),
            InputSet::one_norm_ball(2, 0.25).unwrap(),
        ] {
            let (a, b) = u.halfspaces();
            for v in u.vertices() {
                for (row, bi) in a.iter().zip(&b) {
                    assert!(dot_f64(row, v) <= bi + 1e-12);
                }
            }
        }
    }
}
