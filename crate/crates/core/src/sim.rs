//! Fixed-step closed-loop simulation with safety-event detection.
//!
//! Classical 4th-order Runge-Kutta on ẋ = f(x) + g(x)u with zero-order-hold
//! control (one controller evaluation per step, at the step start) by
//! default; per-stage controller evaluation is available behind an option.
//! Safety values h and every barrier level are recomputed from the recorded
//! states, never cached from the controller.

use std::io::Write;

use crate::chain::BarrierChain;
use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::system::ControlAffineSystem;

pub const BLOWUP_NORM: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    SafetyViolation,
    QpInfeasible,
    SetExit { level: usize },
    GoalReached,
    BlowUp,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventKind::SafetyViolation => write!(f, "safety-violation"),
            EventKind::QpInfeasible => write!(f, "qp-infeasible"),
            EventKind::SetExit { level } => write!(f, "set-exit-level-{level}"),
            EventKind::GoalReached => write!(f, "goal-reached"),
            EventKind::BlowUp => write!(f, "blow-up"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub h_values: Vec<f64>,
    /// b_i along the trajectory, one inner vector per time (levels 0..=N).
    pub level_values: Vec<Vec<f64>>,
    /// First occurrence of each event kind (set exits per level).
    pub events: Vec<Event>,
    pub failed: bool,
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Stop with a goal-reached event once the system's goal metric drops
    /// to this value.
    pub goal_range: Option<f64>,
    /// Evaluate the controller at every integration stage instead of once
    /// per step.
    pub per_stage_control: bool,
}

impl SimOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        SimOptions { t_end, dt, goal_range: None, per_stage_control: false }
    }
}

/// Run the closed loop from `x0`. Controller failures of the QP-infeasible
/// kind are recorded, the run is marked failed, and the admissible
/// projection of the last feasible control is applied so the record stays
/// inspectable.
pub fn simulate(
    chain: &BarrierChain,
    controller: &mut dyn Controller,
    x0: &[f64],
    opts: &SimOptions,
) -> Result<Trajectory> {
    let sys = chain.system();
    if x0.len() != sys.state_dim() {
        return Err(Error::Dimension { expected: sys.state_dim(), got: x0.len() });
    }
    if !(opts.dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be positive, got {}", opts.dt)));
    }
    if !(opts.t_end > 0.0) {
        return Err(Error::Precondition(format!("t_end must be positive, got {}", opts.t_end)));
    }
    if opts.goal_range.is_some() && !sys.has_goal_metric() {
        return Err(Error::Precondition(format!(
            "model `{}` has no goal metric for goal_range",
            sys.name()
        )));
    }

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        h_values: Vec::new(),
        level_values: Vec::new(),
        events: Vec::new(),
        failed: false,
    };
    let mut x = x0.to_vec();
    let mut t = 0.0_f64;
    let mut last_u = vec![0.0; sys.input_dim()];

    loop {
        // control for the step starting at (t, x)
        let u = match controller.control(&x) {
            Ok(out) => out.u,
            Err(Error::QpInfeasible { .. }) => {
                push_event_once(&mut traj, t, EventKind::QpInfeasible);
                traj.failed = true;
                chain.input_set().project(&last_u)
            }
            Err(e) => return Err(e),
        };
        last_u = u.clone();

        record(&mut traj, chain, t, &x, &u)?;
        detect_set_events(&mut traj, t)?;

        if x.iter().any(|v| v.abs() > BLOWUP_NORM) {
            push_event_once(&mut traj, t, EventKind::BlowUp);
            traj.failed = true;
            break;
        }
        if let Some(goal) = opts.goal_range {
            if sys.goal_metric_at(&x)? <= goal {
                push_event_once(&mut traj, t, EventKind::GoalReached);
                break;
            }
        }
        if t >= opts.t_end - 1e-12 {
            break;
        }

        let dt = opts.dt.min(opts.t_end - t);
        x = if opts.per_stage_control {
            rk4_step_staged(sys, controller, &x, dt)?
        } else {
            rk4_step(|y| sys.xdot(y, &u), &x, dt)?
        };
        t += dt;
    }
    Ok(traj)
}

/// One classical RK4 step of ẋ = rhs(x).
pub fn rk4_step(
    rhs: impl Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let k1 = rhs(x)?;
    let k2 = rhs(&offset(x, &k1, dt / 2.0))?;
    let k3 = rhs(&offset(x, &k2, dt / 2.0))?;
    let k4 = rhs(&offset(x, &k3, dt))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn rk4_step_staged(
    sys: &ControlAffineSystem,
    controller: &mut dyn Controller,
    x: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let mut eval = |y: &[f64]| -> Result<Vec<f64>> {
        let u = controller.control(y)?.u;
        sys.xdot(y, &u)
    };
    let k1 = eval(x)?;
    let k2 = eval(&offset(x, &k1, dt / 2.0))?;
    let k3 = eval(&offset(x, &k2, dt / 2.0))?;
    let k4 = eval(&offset(x, &k3, dt))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn offset(x: &[f64], d: &[f64], scale: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + scale * di).collect()
}

fn record(
    traj: &mut Trajectory,
    chain: &BarrierChain,
    t: f64,
    x: &[f64],
    u: &[f64],
) -> Result<()> {
    traj.times.push(t);
    traj.states.push(x.to_vec());
    traj.controls.push(u.to_vec());
    traj.h_values.push(chain.system().h_at(x)?);
    let mut levels = Vec::with_capacity(chain.levels() + 1);
    for i in 0..=chain.levels() {
        levels.push(chain.eval(i, x)?);
    }
    traj.level_values.push(levels);
    Ok(())
}

fn detect_set_events(traj: &mut Trajectory, t: f64) -> Result<()> {
    let h = *traj.h_values.last().expect("recorded");
    if h < 0.0 {
        push_event_once(traj, t, EventKind::SafetyViolation);
    }
    let levels = traj.level_values.last().expect("recorded").clone();
    for (i, v) in levels.iter().enumerate() {
        if *v < 0.0 {
            push_event_once(traj, t, EventKind::SetExit { level: i });
        }
    }
    Ok(())
}

fn push_event_once(traj: &mut Trajectory, t: f64, kind: EventKind) {
    if !traj.events.iter().any(|e| e.kind == kind) {
        traj.events.push(Event { time: t, kind });
    }
}

/// First time the (scalar) control drops below the threshold; `None` if it
/// never does or the trajectory is not single-input.
pub fn braking_onset(traj: &Trajectory, threshold: f64) -> Option<f64> {
    if traj.controls.first().map(|u| u.len()) != Some(1) {
        return None;
    }
    traj.times
        .iter()
        .zip(&traj.controls)
        .find(|(_, u)| u[0] < threshold)
        .map(|(t, _)| *t)
}

/// Headline numbers for a run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub min_h: f64,
    pub min_levels: Vec<f64>,
    pub max_control_one_norm: f64,
    pub braking_onset: Option<f64>,
    pub goal_time: Option<f64>,
    pub safety_violation: bool,
    pub qp_infeasible: bool,
    pub failed: bool,
}

impl Trajectory {
    pub fn summary(&self) -> RunSummary {
        let min_h = self.h_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let n_levels = self.level_values.first().map(|v| v.len()).unwrap_or(0);
        let min_levels = (0..n_levels)
            .map(|i| {
                self.level_values.iter().map(|row| row[i]).fold(f64::INFINITY, f64::min)
            })
            .collect();
        let max_control_one_norm = self
            .controls
            .iter()
            .map(|u| u.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        RunSummary {
            min_h,
            min_levels,
            max_control_one_norm,
            braking_onset: braking_onset(self, 0.0),
            goal_time: self
                .events
                .iter()
                .find(|e| e.kind == EventKind::GoalReached)
                .map(|e| e.time),
            safety_violation: self.events.iter().any(|e| e.kind == EventKind::SafetyViolation),
            qp_infeasible: self.events.iter().any(|e| e.kind == EventKind::QpInfeasible),
            failed: self.failed,
        }
    }

    /// Header row plus one line per sample: t, x_1…x_n, u_1…u_m, h,
    /// b_0…b_N. Plain-dot decimals, comma separators.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map(|s| s.len()).unwrap_or(0);
        let m = self.controls.first().map(|u| u.len()).unwrap_or(0);
        let n_levels = self.level_values.first().map(|v| v.len()).unwrap_or(0);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|j| format!("u_{j}")));
        header.push("h".to_string());
        header.extend((0..n_levels).map(|i| format!("b_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (idx, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(*t)];
            row.extend(self.states[idx].iter().map(|v| fmt_f64(*v)));
            row.extend(self.controls[idx].iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(self.h_values[idx]));
            row.extend(self.level_values[idx].iter().map(|v| fmt_f64(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Sidecar event record: time, kind.
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,kind")?;
        for e in &self.events {
            writeln!(w, "{},{}", fmt_f64(e.time), e.kind)?;
        }
        Ok(())
    }
}

/// Shortest round-trip decimal form, '.' separator, no locale.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
