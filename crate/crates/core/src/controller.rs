//! Pointwise feedback laws built on the barrier chain.
//!
//! Three controllers:
//! - [`IccbfQpController`]: minimizes ½‖u − u_d(x)‖² subject to the terminal
//!   barrier row L_f b_N + L_g b_N u ≥ −α_N(b_N) and u ∈ U. The input set is
//!   always part of the program, so the returned control is admissible by
//!   construction; an infeasible program means the certificate fails at x
//!   and is surfaced, never clipped away.
//! - [`ClfCbfClippedController`]: the classical relaxed CLF + plain-CBF
//!   program without input bounds, clipped into U afterwards. Kept as the
//!   baseline whose clipping breaks safety under saturation.
//! - [`RelaxedIccbfController`]: the rendezvous form with slack decision
//!   variables (δ, k): ½‖u‖² + w_δ δ + w_k k, the barrier row stiffened by
//!   gain (α_N + k), the CLF row relaxed by δ, and a 1-norm thrust bound.

use std::sync::Arc;

use crate::chain::BarrierChain;
use crate::error::{Error, Result};
use crate::qp::{QpProblem, QpSolution, QpSolver, QpStatus};
use crate::system::reals;

/// What the ICCBF-QP tracks when the barrier row is slack.
#[derive(Clone, Debug)]
pub enum DesiredControl {
    Zero,
    /// Least-norm u_d solving L_f V + L_g V u_d = −rate·V pointwise.
    ClfRate { rate: f64 },
}

/// One evaluated control with its QP diagnostics.
#[derive(Clone, Debug)]
pub struct ControlOutput {
    pub u: Vec<f64>,
    /// CLF relaxation slack, where the program has one.
    pub delta: Option<f64>,
    /// Barrier gain increment, where the program has one.
    pub k: Option<f64>,
    /// True when the raw QP solution was clipped into U.
    pub clipped: bool,
    pub qp: QpSolution,
}

pub trait Controller: Send {
    fn control(&mut self, x: &[f64]) -> Result<ControlOutput>;
    fn input_dim(&self) -> usize;
    fn name(&self) -> &'static str;
}

fn solve_or_infeasible(
    solver: &mut QpSolver,
    problem: &QpProblem,
    x: &[f64],
) -> Result<QpSolution> {
    let sol = solver.solve(problem);
    match sol.status {
        QpStatus::Optimal => Ok(sol),
        QpStatus::Infeasible | QpStatus::MaxIterations => {
            Err(Error::QpInfeasible { state: x.to_vec() })
        }
    }
}

/// L_f V, L_g V and V at a state.
fn clf_data(chain: &BarrierChain, x: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
    let sys = chain.system();
    let base = reals(x);
    let (value, grad) = crate::jet::value_and_gradient(|y| sys.clf(y), &base)?;
    let grad: Vec<f64> = grad.iter().map(crate::jet::Jet::value).collect();
    let f = sys.f_at(x)?;
    let g = sys.g_at(x)?;
    let lie_f = grad.iter().zip(&f).map(|(a, b)| a * b).sum();
    let lie_g = (0..sys.input_dim())
        .map(|j| grad.iter().zip(&g).map(|(gi, row)| gi * row[j]).sum())
        .collect();
    Ok((lie_f, lie_g, value.value()))
}

pub struct IccbfQpController {
    chain: Arc<BarrierChain>,
    desired: DesiredControl,
    solver: QpSolver,
}

impl IccbfQpController {
    pub fn new(chain: Arc<BarrierChain>, desired: DesiredControl) -> Result<Self> {
        if matches!(desired, DesiredControl::ClfRate { .. }) && !chain.system().has_clf() {
            return Err(Error::Precondition(format!(
                "model `{}` has no CLF to derive a desired control from",
                chain.system().name()
            )));
        }
        if let DesiredControl::ClfRate { rate } = desired {
            if !(rate > 0.0) {
                return Err(Error::Precondition(format!(
                    "CLF rate must be positive, got {rate}"
                )));
            }
        }
        Ok(IccbfQpController { chain, desired, solver: QpSolver::new() })
    }

    pub fn desired_control(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.chain.system().input_dim();
        match self.desired {
            DesiredControl::Zero => Ok(vec![0.0; m]),
            DesiredControl::ClfRate { rate } => {
                let (lfv, lgv, v) = clf_data(&self.chain, x)?;
                let gnorm2: f64 = lgv.iter().map(|a| a * a).sum();
                if gnorm2 < 1e-24 {
                    return Ok(vec![0.0; m]);
                }
                let scale = (-rate * v - lfv) / gnorm2;
                Ok(lgv.iter().map(|a| a * scale).collect())
            }
        }
    }
}

impl Controller for IccbfQpController {
    fn control(&mut self, x: &[f64]) -> Result<ControlOutput> {
        let m = self.chain.system().input_dim();
        let n_levels = self.chain.levels();
        let data = self.chain.level_data(n_levels, x)?;
        let alpha = self
            .chain
            .alpha(n_levels)
            .eval_f64(data.value)
            .map_err(|e| Error::Kappa { level: n_levels, source: Box::new(e) })?;
        let u_d = self.desired_control(x)?;

        let mut h = vec![vec![0.0; m]; m];
        for (j, row) in h.iter_mut().enumerate() {
            row[j] = 1.0;
        }
        let f: Vec<f64> = u_d.iter().map(|v| -v).collect();

        let (mut rows, mut rhs) = self.chain.input_set().halfspaces();
        rows.insert(0, data.lie_g.iter().map(|v| -v).collect());
        rhs.insert(0, data.lie_f + alpha);

        let problem = QpProblem::new(h, f)?.with_ineq(rows, rhs)?;
        let qp = solve_or_infeasible(&mut self.solver, &problem, x)?;
        Ok(ControlOutput { u: qp.z.clone(), delta: None, k: None, clipped: false, qp })
    }

    fn input_dim(&self) -> usize {
        self.chain.system().input_dim()
    }

    fn name(&self) -> &'static str {
        "iccbf-qp"
    }
}

pub struct ClfCbfClippedController {
    chain: Arc<BarrierChain>,
    clf_rate: f64,
    cbf_gain: f64,
    delta_penalty: f64,
    solver: QpSolver,
}

impl ClfCbfClippedController {
    pub fn new(
        chain: Arc<BarrierChain>,
        clf_rate: f64,
        cbf_gain: f64,
        delta_penalty: f64,
    ) -> Result<Self> {
        if !chain.system().has_clf() {
            return Err(Error::Precondition(format!(
                "model `{}` has no CLF",
                chain.system().name()
            )));
        }
        if !(clf_rate > 0.0 && cbf_gain > 0.0 && delta_penalty > 0.0) {
            return Err(Error::Precondition(
                "clf_rate, cbf_gain and delta_penalty must be positive".into(),
            ));
        }
        Ok(ClfCbfClippedController {
            chain,
            clf_rate,
            cbf_gain,
            delta_penalty,
            solver: QpSolver::new(),
        })
    }
}

impl Controller for ClfCbfClippedController {
    /// Solves over (u, δ): min ½‖u‖² + delta_penalty·δ² with the relaxed CLF
    /// row and the plain h-based barrier row, no input bounds, then clips
    /// the control coordinatewise into U.
    fn control(&mut self, x: &[f64]) -> Result<ControlOutput> {
        let m = self.chain.system().input_dim();
        let (lfv, lgv, v) = clf_data(&self.chain, x)?;
        let h_data = self.chain.level_data(0, x)?;

        let dim = m + 1;
        let mut h = vec![vec![0.0; dim]; dim];
        for j in 0..m {
            h[j][j] = 1.0;
        }
        h[m][m] = 2.0 * self.delta_penalty;
        let f = vec![0.0; dim];

        let mut rows = Vec::with_capacity(2);
        let mut rhs = Vec::with_capacity(2);
        // L_f V + L_g V u ≤ −rate V + δ
        let mut clf_row: Vec<f64> = lgv.clone();
        clf_row.push(-1.0);
        rows.push(clf_row);
        rhs.push(-self.clf_rate * v - lfv);
        // L_f h + L_g h u ≥ −gain h
        let mut cbf_row: Vec<f64> = h_data.lie_g.iter().map(|a| -a).collect();
        cbf_row.push(0.0);
        rows.push(cbf_row);
        rhs.push(h_data.lie_f + self.cbf_gain * h_data.value);

        let mut lb = vec![f64::NEG_INFINITY; dim];
        lb[m] = 0.0;
        let ub = vec![f64::INFINITY; dim];

        let problem = QpProblem::new(h, f)?.with_ineq(rows, rhs)?.with_bounds(lb, ub)?;
        let qp = solve_or_infeasible(&mut self.solver, &problem, x)?;
        let raw = &qp.z[..m];
        let u = self.chain.input_set().project(raw);
        let clipped = u.iter().zip(raw).any(|(a, b)| a != b);
        let delta = Some(qp.z[m]);
        Ok(ControlOutput { u, delta, k: None, clipped, qp })
    }

    fn input_dim(&self) -> usize {
        self.chain.system().input_dim()
    }

    fn name(&self) -> &'static str {
        "clf-cbf-qp-clipped"
    }
}

pub struct RelaxedIccbfController {
    chain: Arc<BarrierChain>,
    clf_rate: f64,
    delta_weight: f64,
    k_weight: f64,
    base_gain: f64,
    solver: QpSolver,
}

impl RelaxedIccbfController {
    /// The terminal α_N must be linear: its gain is the base the QP variable
    /// k adds to.
    pub fn new(
        chain: Arc<BarrierChain>,
        clf_rate: f64,
        delta_weight: f64,
        k_weight: f64,
    ) -> Result<Self> {
        if !chain.system().has_clf() {
            return Err(Error::Precondition(format!(
                "model `{}` has no CLF",
                chain.system().name()
            )));
        }
        let n = chain.levels();
        let base_gain = match chain.alpha(n) {
            crate::kappa::ClassKappa::Linear { gain } => *gain,
            other => {
                return Err(Error::Precondition(format!(
                    "relaxed controller needs a linear terminal class-K, got {other:?}"
                )))
            }
        };
        if !(clf_rate > 0.0 && delta_weight > 0.0 && k_weight > 0.0) {
            return Err(Error::Precondition(
                "clf_rate, delta_weight and k_weight must be positive".into(),
            ));
        }
        Ok(RelaxedIccbfController {
            chain,
            clf_rate,
            delta_weight,
            k_weight,
            base_gain,
            solver: QpSolver::new(),
        })
    }
}

impl Controller for RelaxedIccbfController {
    /// Decision vector (u₁…u_m, δ, k), both slacks nonnegative. The barrier
    /// row reads L_f b_N + L_g b_N u ≥ −(base + k) b_N; b_N(x) is a constant
    /// at solve time, so the row is linear in (u, k).
    fn control(&mut self, x: &[f64]) -> Result<ControlOutput> {
        let m = self.chain.system().input_dim();
        let n_levels = self.chain.levels();
        let data = self.chain.level_data(n_levels, x)?;
        let (lfv, lgv, v) = clf_data(&self.chain, x)?;

        let dim = m + 2;
        let mut h = vec![vec![0.0; dim]; dim];
        for j in 0..m {
            h[j][j] = 1.0;
        }
        let mut f = vec![0.0; dim];
        f[m] = self.delta_weight;
        f[m + 1] = self.k_weight;

        let (u_rows, u_rhs) = self.chain.input_set().halfspaces();
        let mut rows = Vec::with_capacity(u_rows.len() + 2);
        let mut rhs = Vec::with_capacity(u_rhs.len() + 2);
        // CLF row: L_f V + L_g V u ≤ −rate V + δ
        let mut row: Vec<f64> = lgv.clone();
        row.extend([-1.0, 0.0]);
        rows.push(row);
        rhs.push(-self.clf_rate * v - lfv);
        // barrier row: −L_g b_N u − b_N k ≤ L_f b_N + base·b_N
        let mut row: Vec<f64> = data.lie_g.iter().map(|a| -a).collect();
        row.extend([0.0, -data.value]);
        rows.push(row);
        rhs.push(data.lie_f + self.base_gain * data.value);
        // input set rows on u alone
        for (r, b) in u_rows.into_iter().zip(u_rhs) {
            let mut row = r;
            row.extend([0.0, 0.0]);
            rows.push(row);
            rhs.push(b);
        }

        let mut lb = vec![f64::NEG_INFINITY; dim];
        lb[m] = 0.0;
        lb[m + 1] = 0.0;
        let ub = vec![f64::INFINITY; dim];

        let problem = QpProblem::new(h, f)?.with_ineq(rows, rhs)?.with_bounds(lb, ub)?;
        let qp = solve_or_infeasible(&mut self.solver, &problem, x)?;
        Ok(ControlOutput {
            u: qp.z[..m].to_vec(),
            delta: Some(qp.z[m]),
            k: Some(qp.z[m + 1]),
            clipped: false,
            qp,
        })
    }

    fn input_dim(&self) -> usize {
        self.chain.system().input_dim()
    }

    fn name(&self) -> &'static str {
        "iccbf-clf-relaxed"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::BarrierChain;
    use crate::kappa::ClassKappa;
    use crate::models::builtin;

    fn acc_chain() -> Arc<BarrierChain> {
        let (sys, input) = builtin("acc").unwrap();
        Arc::new(
            BarrierChain::new(
                sys,
                input,
                vec![
                    ClassKappa::linear(4.0).unwrap(),
                    ClassKappa::sqrt(7.0).unwrap(),
                    ClassKappa::linear(2.0).unwrap(),
                ],
            )
            .unwrap(),
        )
    }

    fn rdv_chain() -> Arc<BarrierChain> {
        let (sys, input) = builtin("rendezvous").unwrap();
        Arc::new(
            BarrierChain::new(
                sys,
                input,
                vec![
                    ClassKappa::linear(0.25).unwrap(),
                    ClassKappa::linear(0.85).unwrap(),
                    ClassKappa::linear(0.05).unwrap(),
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn iccbf_tracks_desired_when_slack() {
        let chain = acc_chain();
        let mut c =
            IccbfQpController::new(chain.clone(), DesiredControl::ClfRate { rate: 10.0 })
                .unwrap();
        // deep inside C*, far from every boundary, speed below the limit
        let x = [150.0, 13.0];
        assert!(chain.contains(&x));
        let out = c.control(&x).unwrap();
        // u_d asks for strong acceleration; only the box should bind
        let u_d = c.desired_control(&x).unwrap()[0];
        assert!(u_d > 0.25);
        assert!((out.u[0] - 0.25).abs() < 1e-9);
        // barrier row slack strictly positive at the returned point
        let data = chain.level_data(2, &x).unwrap();
        let slack = data.lie_f + data.lie_g[0] * out.u[0] + 2.0 * data.value;
        assert!(slack > 0.0, "slack {slack}");
    }

    #[test]
    fn iccbf_control_admissible_across_states() {
        let chain = acc_chain();
        let mut c =
            IccbfQpController::new(chain.clone(), DesiredControl::ClfRate { rate: 10.0 })
                .unwrap();
        for i in 0..50 {
            let x = [40.0 + (i as f64 * 3.1) % 160.0, 1.0 + (i as f64 * 0.43) % 22.0];
            if !chain.contains(&x) {
                continue;
            }
            let out = c.control(&x).unwrap();
            assert!(chain.input_set().contains(&out.u, 1e-9));
            // returned u satisfies the terminal barrier row to 1e-8
            let d = chain.level_data(2, &x).unwrap();
            let row = d.lie_f + d.lie_g[0] * out.u[0] + 2.0 * d.value;
            assert!(row >= -1e-8, "row {row} at {x:?}");
        }
    }

    #[test]
    fn scalar_example_stays_admissible() {
        let (sys, input) = builtin("scalar-example").unwrap();
        let chain = Arc::new(
            BarrierChain::new(
                sys,
                input,
                vec![ClassKappa::linear(1.0).unwrap(), ClassKappa::linear(1.0).unwrap()],
            )
            .unwrap(),
        );
        let mut c = IccbfQpController::new(chain.clone(), DesiredControl::Zero).unwrap();
        for x in [-3.0, -1.0, 0.0, 0.4] {
            if !chain.contains(&[x]) {
                continue;
            }
            let out = c.control(&[x]).unwrap();
            assert!((-1.0..=1.0).contains(&out.u[0]), "u = {} at x = {x}", out.u[0]);
        }
    }

    #[test]
    fn iccbf_infeasibility_is_surfaced() {
        // degenerate N = 0 chain on the scalar example: at x = 2 the row
        // −2 − u ≥ 0 contradicts u ∈ [−1, 1]
        let (sys, input) = builtin("scalar-example").unwrap();
        let chain = Arc::new(
            BarrierChain::new(sys, input, vec![ClassKappa::linear(1.0).unwrap()]).unwrap(),
        );
        let mut c = IccbfQpController::new(chain, DesiredControl::Zero).unwrap();
        let r = c.control(&[2.0]);
        assert!(matches!(r, Err(Error::QpInfeasible { .. })));
    }

    #[test]
    fn clipped_baseline_clips() {
        let chain = acc_chain();
        let mut c = ClfCbfClippedController::new(chain.clone(), 10.0, 2.0, 0.1).unwrap();
        // near the safety boundary at high speed the unconstrained QP wants
        // far more braking than the box allows: the barrier row alone asks
        // u ≤ (L_f h + 2h)/1.8g0 ≈ −0.28
        let x = [36.0, 19.8];
        let out = c.control(&x).unwrap();
        assert!(out.clipped);
        assert_eq!(out.u[0], -0.25);
        assert!(out.qp.z[0] < -0.25);
        // far from the boundary at the speed limit the CLF is content
        let x = [200.0, 24.0];
        let out = c.control(&x).unwrap();
        assert!(out.u[0].abs() < 1e-6, "u = {}", out.u[0]);
    }

    #[test]
    fn relaxed_slacks_vanish_when_unneeded() {
        let chain = rdv_chain();
        let mut c = RelaxedIccbfController::new(chain.clone(), 0.1, 10.0, 50.0).unwrap();
        // on the docking axis with the approach velocity the CLF wants:
        // V = 0, every barrier level positive
        let x = [20.0, 0.0, -1.76, 0.0, 0.0];
        assert!(chain.contains(&x));
        let out = c.control(&x).unwrap();
        assert!(out.k.unwrap() < 1e-6, "k = {:?}", out.k);
        assert!(out.delta.unwrap() < 1e-6, "delta = {:?}", out.delta);
        assert!(out.u[0].abs() + out.u[1].abs() <= 0.25 + 1e-8);
    }

    #[test]
    fn relaxed_one_norm_bound_and_row_residual() {
        let chain = rdv_chain();
        let mut c = RelaxedIccbfController::new(chain.clone(), 0.1, 10.0, 50.0).unwrap();
        for i in 0..20 {
            let x = [
                40.0 + (i as f64 * 7.3) % 80.0,
                -20.0 + (i as f64 * 2.9) % 40.0,
                -0.2 + (i as f64 * 0.031) % 0.4,
                -0.2 + (i as f64 * 0.017) % 0.4,
                (i as f64) * 0.1,
            ];
            let out = match c.control(&x) {
                Ok(o) => o,
                Err(Error::QpInfeasible { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let norm1 = out.u[0].abs() + out.u[1].abs();
            assert!(norm1 <= 0.25 + 1e-8, "|u|_1 = {norm1}");
            // recompute the bilinear barrier row after the solve
            let d = chain.level_data(2, &x).unwrap();
            let k = out.k.unwrap();
            let row = d.lie_f
                + d.lie_g[0] * out.u[0]
                + d.lie_g[1] * out.u[1]
                + (0.05 + k) * d.value;
            assert!(row >= -1e-8, "row residual {row} at {x:?}");
            assert!(k >= -1e-12 && out.delta.unwrap() >= -1e-12);
        }
    }

    #[test]
    fn terminal_row_holds_on_the_boundary() {
        // states with b_2 = 0: α_N vanishes there, so the returned control
        // must give ḃ_2 ≥ 0 outright
        let chain = acc_chain();
        let domain = [[0.0, 100.0], [0.0, 24.0]];
        let samples =
            crate::verify::sample_near_boundary(&chain, &domain, 40, 3, 1e-9).unwrap();
        let mut c =
            IccbfQpController::new(chain.clone(), DesiredControl::ClfRate { rate: 10.0 })
                .unwrap();
        let mut checked = 0;
        for x in &samples {
            let d = chain.level_data(2, x).unwrap();
            if d.value.abs() > 1e-9 {
                continue; // a different level is active here
            }
            let u = c.control(x).unwrap().u;
            let bdot = d.lie_f + d.lie_g[0] * u[0];
            assert!(bdot >= -1e-8, "ḃ_2 = {bdot} at {x:?}");
            checked += 1;
        }
        assert!(checked > 0, "no terminal-boundary samples found");
    }

    #[test]
    fn relaxed_saturates_exactly_on_the_thrust_diamond() {
        let chain = rdv_chain();
        let mut c = RelaxedIccbfController::new(chain.clone(), 0.1, 10.0, 50.0).unwrap();
        // the opening state of the bundled scenario: the velocity error is
        // large, the program thrusts at the bound
        let x = [100.0, -10.0, 0.0, 0.0, 0.0];
        let out = c.control(&x).unwrap();
        let norm1 = out.u[0].abs() + out.u[1].abs();
        assert!((norm1 - 0.25).abs() <= 1e-9, "|u|_1 = {norm1}");
        // one of the four 1-norm rows (expanded indices 2..6) is active
        assert!(
            out.qp.active_set.iter().any(|&i| (2..6).contains(&i)),
            "active set {:?}",
            out.qp.active_set
        );
    }

    #[test]
    fn controls_are_bitwise_deterministic() {
        let chain = acc_chain();
        let mut c =
            IccbfQpController::new(chain, DesiredControl::ClfRate { rate: 10.0 }).unwrap();
        let x = [90.0, 17.3];
        let a = c.control(&x).unwrap();
        let b = c.control(&x).unwrap();
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn relaxed_requires_linear_terminal_alpha() {
        let (sys, input) = builtin("rendezvous").unwrap();
        let chain = Arc::new(
            BarrierChain::new(
                sys,
                input,
                vec![
                    ClassKappa::linear(0.25).unwrap(),
                    ClassKappa::linear(0.85).unwrap(),
                    ClassKappa::sqrt(0.05).unwrap(),
                ],
            )
            .unwrap(),
        );
        assert!(RelaxedIccbfController::new(chain, 0.1, 10.0, 50.0).is_err());
    }
}
