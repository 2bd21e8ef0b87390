//! Certificate checking and boundary diagnostics.
//!
//! The certificate quantity is γ = min over C* of
//! sup_{u∈U}[ ḃ_N(x,u) + α_N(b_N(x)) ]; the chain is certified when γ ≥ 0.
//! The minimization is nonconvex, so this module estimates it by dense
//! quasi-random (Halton) sampling of the domain filtered to C*, followed by
//! multi-start Nelder-Mead refinement from the worst samples, with C*
//! membership enforced by rejection. That yields an upper-confidence check,
//! not a proof, and the report says so (`method` field).
//!
//! Sampling uses the prefix of one fixed low-discrepancy sequence, so a
//! larger budget evaluates a superset of the smaller budget's points.
//! Sampling and refinement run in parallel; results merge in start-index
//! order, so parallel and serial runs produce identical reports.

use std::io::Write;

use rayon::prelude::*;

use crate::chain::BarrierChain;
use crate::controller::Controller;
use crate::error::{Error, Result};

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Radical-inverse (Halton) coordinate for 1-based `index`.
fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn halton_point(index: u64, domain: &[[f64; 2]]) -> Vec<f64> {
    domain
        .iter()
        .enumerate()
        .map(|(j, [lo, hi])| lo + halton(index, PRIMES[j % PRIMES.len()]) * (hi - lo))
        .collect()
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub budget: usize,
    pub refine_starts: usize,
    pub refine_iters: usize,
    /// Offsets the Halton stream; identical seeds give identical reports.
    pub seed: u64,
    /// γ down to this value still counts as certified (refinement noise).
    pub gamma_tolerance: f64,
    /// Gradient-scaled |b_N| threshold for the simple-ICCBF test.
    pub boundary_eps: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            budget: 100_000,
            refine_starts: 50,
            refine_iters: 500,
            seed: 0,
            gamma_tolerance: 1e-6,
            boundary_eps: 1e-4,
        }
    }
}

pub const MIN_BUDGET: usize = 1_000;

#[derive(Clone, Debug)]
pub struct RefinementStep {
    pub state: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct CertificateReport {
    pub gamma: f64,
    pub argmin_state: Vec<f64>,
    pub is_iccbf: bool,
    pub is_simple: bool,
    /// Number of domain samples that landed in C*.
    pub samples_used: usize,
    pub budget: usize,
    pub seed: u64,
    pub method: &'static str,
    pub refinement_trace: Vec<RefinementStep>,
}

impl CertificateReport {
    /// Key-value text form.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "gamma = {}", self.gamma)?;
        let state: Vec<String> =
            self.argmin_state.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "argmin_state = [{}]", state.join(", "))?;
        writeln!(w, "is_iccbf = {}", self.is_iccbf)?;
        writeln!(w, "is_simple = {}", self.is_simple)?;
        writeln!(w, "samples_used = {}", self.samples_used)?;
        writeln!(w, "budget = {}", self.budget)?;
        writeln!(w, "seed = {}", self.seed)?;
        writeln!(w, "method = {}", self.method)?;
        Ok(())
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.argmin_state.len();
        let mut header: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
        header.push("value".to_string());
        writeln!(w, "{}", header.join(","))?;
        for step in &self.refinement_trace {
            let mut row: Vec<String> = step.state.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{}", step.value));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_domain(chain: &BarrierChain, domain: &[[f64; 2]]) -> Result<()> {
    if domain.len() != chain.system().state_dim() {
        return Err(Error::Dimension {
            expected: chain.system().state_dim(),
            got: domain.len(),
        });
    }
    for [lo, hi] in domain {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Precondition(format!("bad domain interval [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// Estimate γ over C* ∩ domain and decide the certificate.
pub fn certify(
    chain: &BarrierChain,
    domain: &[[f64; 2]],
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    check_domain(chain, domain)?;
    if opts.budget < MIN_BUDGET {
        return Err(Error::Budget { budget: opts.budget, min: MIN_BUDGET });
    }

    // dense pass: objective at every in-C* sample of the Halton prefix
    let kept: Vec<(Vec<f64>, f64)> = (0..opts.budget as u64)
        .into_par_iter()
        .map(|i| {
            let x = halton_point(opts.seed + 1 + i, domain);
            if !chain.contains(&x) {
                return None;
            }
            chain.certificate_objective(&x).ok().map(|phi| (x, phi))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    if kept.is_empty() {
        return Err(Error::EmptyCStar { budget: opts.budget });
    }
    let samples_used = kept.len();

    // worst samples first: most promising refinement starts
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| kept[a].1.total_cmp(&kept[b].1));

    let scales: Vec<f64> = domain.iter().map(|[lo, hi]| 0.05 * (hi - lo)).collect();
    let objective = |x: &[f64]| -> f64 {
        if !inside(domain, x) || !chain.contains(x) {
            return f64::INFINITY;
        }
        chain.certificate_objective(x).unwrap_or(f64::INFINITY)
    };
    let refinement_trace: Vec<RefinementStep> = order
        .par_iter()
        .take(opts.refine_starts.min(order.len()))
        .map(|&idx| {
            let (x, fx) = nelder_mead(&objective, &kept[idx].0, &scales, opts.refine_iters);
            if fx.is_finite() {
                RefinementStep { state: x, value: fx }
            } else {
                RefinementStep { state: kept[idx].0.clone(), value: kept[idx].1 }
            }
        })
        .collect();

    let (mut gamma, mut argmin) = (kept[order[0]].1, kept[order[0]].0.clone());
    for step in &refinement_trace {
        if step.value < gamma {
            gamma = step.value;
            argmin = step.state.clone();
        }
    }

    let (is_simple, _) = simple_detection(chain, domain, &kept, opts)?;

    Ok(CertificateReport {
        gamma,
        argmin_state: argmin,
        is_iccbf: gamma >= -opts.gamma_tolerance,
        is_simple,
        samples_used,
        budget: opts.budget,
        seed: opts.seed,
        method: "sampling+refinement",
        refinement_trace,
    })
}

fn inside(domain: &[[f64; 2]], x: &[f64]) -> bool {
    domain.iter().zip(x).all(|([lo, hi], xi)| xi >= lo && xi <= hi)
}

/// Closest approach of C* to the terminal boundary ∂C_N.
#[derive(Clone, Debug)]
pub struct SimpleWitness {
    pub state: Vec<f64>,
    pub b_n: f64,
    /// Gradient-scaled distance |b_N|/(1 + ‖∇b_N‖) at the witness.
    pub scaled_distance: f64,
}

/// Whether C* stays strictly clear of ∂C_N (making every admissible
/// controller safe): true iff no sampled or refined state of C* comes
/// within the gradient-scaled boundary threshold.
pub fn detect_simple(
    chain: &BarrierChain,
    domain: &[[f64; 2]],
    opts: &CertifyOptions,
) -> Result<(bool, SimpleWitness)> {
    check_domain(chain, domain)?;
    if opts.budget < MIN_BUDGET {
        return Err(Error::Budget { budget: opts.budget, min: MIN_BUDGET });
    }
    let kept: Vec<(Vec<f64>, f64)> = (0..opts.budget as u64)
        .into_par_iter()
        .map(|i| {
            let x = halton_point(opts.seed + 1 + i, domain);
            chain.contains(&x).then(|| (x, 0.0))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyCStar { budget: opts.budget });
    }
    simple_detection(chain, domain, &kept, opts)
}

fn scaled_boundary_distance(chain: &BarrierChain, x: &[f64]) -> Result<(f64, f64)> {
    let data = chain.level_data(chain.levels(), x)?;
    let gnorm = data.gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((data.value, data.value.abs() / (1.0 + gnorm)))
}

fn simple_detection(
    chain: &BarrierChain,
    domain: &[[f64; 2]],
    kept: &[(Vec<f64>, f64)],
    opts: &CertifyOptions,
) -> Result<(bool, SimpleWitness)> {
    let distances: Vec<Option<(f64, f64)>> = kept
        .par_iter()
        .map(|(x, _)| scaled_boundary_distance(chain, x).ok())
        .collect();
    let mut order: Vec<usize> = (0..kept.len()).filter(|&i| distances[i].is_some()).collect();
    if order.is_empty() {
        return Err(Error::EmptyCStar { budget: opts.budget });
    }
    order.sort_by(|&a, &b| {
        distances[a].unwrap().1.total_cmp(&distances[b].unwrap().1)
    });

    let scales: Vec<f64> = domain.iter().map(|[lo, hi]| 0.05 * (hi - lo)).collect();
    let objective = |x: &[f64]| -> f64 {
        if !inside(domain, x) || !chain.contains(x) {
            return f64::INFINITY;
        }
        scaled_boundary_distance(chain, x).map(|(_, q)| q).unwrap_or(f64::INFINITY)
    };
    let starts = opts.refine_starts.min(order.len()).min(10);
    let refined: Vec<(Vec<f64>, f64)> = order
        .par_iter()
        .take(starts)
        .map(|&idx| nelder_mead(&objective, &kept[idx].0, &scales, opts.refine_iters))
        .collect();

    let mut best_x = kept[order[0]].0.clone();
    let mut best_q = distances[order[0]].unwrap().1;
    for (x, q) in refined {
        if q < best_q {
            best_q = q;
            best_x = x;
        }
    }
    let (b_n, scaled) = scaled_boundary_distance(chain, &best_x)?;
    let witness = SimpleWitness { state: best_x, b_n, scaled_distance: scaled };
    Ok((best_q > opts.boundary_eps, witness))
}

// --- Nelder-Mead ----------------------------------------------------------

/// Deterministic Nelder-Mead with rejection handled through +∞ objective
/// values. Returns the best point seen across all evaluations.
fn nelder_mead(
    obj: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    scales: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut best = (x0.to_vec(), obj(x0));
    let track = |x: &[f64], fx: f64, best: &mut (Vec<f64>, f64)| {
        if fx < best.1 {
            *best = (x.to_vec(), fx);
        }
    };

    // initial simplex: perturb each coordinate, flipping inward when the
    // positive perturbation is rejected
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), best.1));
    for j in 0..n {
        let mut p = x0.to_vec();
        p[j] += scales[j];
        let mut fp = obj(&p);
        if !fp.is_finite() {
            p[j] = x0[j] - scales[j];
            fp = obj(&p);
        }
        track(&p, fp, &mut best);
        simplex.push((p, fp));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let diam = simplex[1..]
            .iter()
            .flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if (spread.is_finite() && spread <= 1e-12 * (1.0 + simplex[0].1.abs())) && diam <= 1e-10
        {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n)
            .map(|j| centroid[j] + (centroid[j] - worst.0[j]))
            .collect();
        let f_reflect = obj(&reflect);
        track(&reflect, f_reflect, &mut best);

        if f_reflect < simplex[0].1 {
            // try expanding
            let expand: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 2.0 * (centroid[j] - worst.0[j]))
                .collect();
            let f_expand = obj(&expand);
            track(&expand, f_expand, &mut best);
            simplex[n] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
        } else if f_reflect < simplex[n - 1].1 {
            simplex[n] = (reflect, f_reflect);
        } else {
            // contract toward the better of worst/reflected
            let toward = if f_reflect < worst.1 { &reflect } else { &worst.0 };
            let contract: Vec<f64> =
                (0..n).map(|j| centroid[j] + 0.5 * (toward[j] - centroid[j])).collect();
            let f_contract = obj(&contract);
            track(&contract, f_contract, &mut best);
            if f_contract < worst.1.min(f_reflect) {
                simplex[n] = (contract, f_contract);
            } else {
                // shrink toward the best vertex
                let anchor = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = (0..n)
                        .map(|j| anchor[j] + 0.5 * (v.0[j] - anchor[j]))
                        .collect();
                    let fp = obj(&p);
                    track(&p, fp, &mut best);
                    *v = (p, fp);
                }
            }
        }
    }
    best
}

// --- boundary partition ----------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellLabel {
    Interior,
    BoundaryFeasible,
    BoundaryInfeasible,
    Exterior,
}

impl std::fmt::Display for CellLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellLabel::Interior => write!(f, "interior"),
            CellLabel::BoundaryFeasible => write!(f, "boundary-feasible"),
            CellLabel::BoundaryInfeasible => write!(f, "boundary-infeasible"),
            CellLabel::Exterior => write!(f, "exterior"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn value(&self, k: usize) -> f64 {
        if self.points <= 1 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * k as f64 / (self.points - 1) as f64
    }
}

/// A 2-D slice through the state space: grid axes map onto two state
/// coordinates, all other coordinates come from `base`.
#[derive(Clone, Debug)]
pub struct Slice2d {
    pub axes: (usize, usize),
    pub base: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BoundaryGrid {
    pub level: usize,
    pub axis1: GridAxis,
    pub axis2: GridAxis,
    /// b_level at the nodes, row-major over (axis1, axis2); NaN where
    /// evaluation failed.
    pub values: Vec<f64>,
    pub labels: Vec<CellLabel>,
}

impl BoundaryGrid {
    pub fn at(&self, i: usize, j: usize) -> (f64, CellLabel) {
        let idx = i * self.axis2.points + j;
        (self.values[idx], self.labels[idx])
    }

    /// x₁, x₂, b_level, label rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x_1,x_2,b_{},label", self.level)?;
        for i in 0..self.axis1.points {
            for j in 0..self.axis2.points {
                let (v, label) = self.at(i, j);
                writeln!(
                    w,
                    "{},{},{},{}",
                    self.axis1.value(i),
                    self.axis2.value(j),
                    v,
                    label
                )?;
            }
        }
        Ok(())
    }
}

/// Label a 2-D grid for one barrier level: nodes with b_i < 0 are exterior;
/// nonnegative nodes adjacent to a negative neighbor form the boundary and
/// split by whether any admissible input keeps ḃ_i ≥ 0 there.
pub fn boundary_partition(
    chain: &BarrierChain,
    level: usize,
    axis1: GridAxis,
    axis2: GridAxis,
    slice: Option<&Slice2d>,
) -> Result<BoundaryGrid> {
    let n = chain.system().state_dim();
    let default_slice = Slice2d { axes: (0, 1), base: vec![0.0; n] };
    let slice = slice.unwrap_or(&default_slice);
    if slice.axes.0 >= n || slice.axes.1 >= n || slice.axes.0 == slice.axes.1 {
        return Err(Error::Precondition(format!("bad slice axes {:?}", slice.axes)));
    }
    if slice.base.len() != n {
        return Err(Error::Dimension { expected: n, got: slice.base.len() });
    }
    if axis1.points < 2 || axis2.points < 2 {
        return Err(Error::Precondition("grid needs at least 2 points per axis".into()));
    }

    let state_at = |i: usize, j: usize| -> Vec<f64> {
        let mut x = slice.base.clone();
        x[slice.axes.0] = axis1.value(i);
        x[slice.axes.1] = axis2.value(j);
        x
    };

    let (n1, n2) = (axis1.points, axis2.points);
    let values: Vec<f64> = (0..n1 * n2)
        .into_par_iter()
        .map(|idx| {
            let x = state_at(idx / n2, idx % n2);
            chain.eval(level, &x).unwrap_or(f64::NAN)
        })
        .collect();

    let neg = |idx: usize| -> bool { !(values[idx] >= 0.0) };
    let labels: Vec<CellLabel> = (0..n1 * n2)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n2, idx % n2);
            if neg(idx) {
                return Ok(CellLabel::Exterior);
            }
            let mut on_boundary = false;
            if i > 0 && neg(idx - n2) {
                on_boundary = true;
            }
            if i + 1 < n1 && neg(idx + n2) {
                on_boundary = true;
            }
            if j > 0 && neg(idx - 1) {
                on_boundary = true;
            }
            if j + 1 < n2 && neg(idx + 1) {
                on_boundary = true;
            }
            if !on_boundary {
                return Ok(CellLabel::Interior);
            }
            let x = state_at(i, j);
            let data = chain.level_data(level, &x)?;
            let sup = chain.input_set().affine_supremum_at(data.lie_f, &data.lie_g);
            Ok(if sup >= 0.0 {
                CellLabel::BoundaryFeasible
            } else {
                CellLabel::BoundaryInfeasible
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BoundaryGrid { level, axis1, axis2, values, labels })
}

// --- Nagumo spot-check ------------------------------------------------------

/// For samples on (or within `eps_active` of) some level boundary, count how
/// many violate the tangency obligation ḃ_i(x, u(x)) ≥ threshold on their
/// active levels under the given controller. Samples with no active level
/// violate the precondition and are rejected.
pub fn nagumo_spotcheck(
    chain: &BarrierChain,
    controller: &mut dyn Controller,
    samples: &[Vec<f64>],
    eps_active: f64,
    threshold: f64,
) -> Result<usize> {
    let mut violations = 0;
    for (idx, x) in samples.iter().enumerate() {
        let membership = chain.membership(x)?;
        let active: Vec<usize> = (0..=chain.levels())
            .filter(|&i| membership.values[i].abs() <= eps_active)
            .collect();
        if active.is_empty() {
            return Err(Error::Precondition(format!(
                "sample {idx} is not near any level boundary (values {:?})",
                membership.values
            )));
        }
        let u = controller.control(x)?.u;
        let mut violated = false;
        for i in active {
            let data = chain.level_data(i, x)?;
            let bdot = data.lie_f
                + data.lie_g.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            if bdot < threshold {
                violated = true;
            }
        }
        if violated {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Deterministically sample `count` states inside C* within `eps` of ∂C*:
/// Halton points in C* are marched along Halton directions until C* is left,
/// then the crossing is bisected and the inside endpoint kept.
pub fn sample_near_boundary(
    chain: &BarrierChain,
    domain: &[[f64; 2]],
    count: usize,
    seed: u64,
    eps: f64,
) -> Result<Vec<Vec<f64>>> {
    check_domain(chain, domain)?;
    let n = domain.len();
    let min_b = |x: &[f64]| -> Option<f64> {
        chain
            .membership(x)
            .ok()
            .map(|m| m.values.iter().cloned().fold(f64::INFINITY, f64::min))
    };
    let step_len = 0.02;
    let mut out = Vec::with_capacity(count);
    let mut index = seed + 1;
    let cap = (count as u64) * 10_000;
    while out.len() < count && index < seed + 1 + cap {
        let coords = halton_point(index, domain);
        index += 1;
        if !chain.contains(&coords) {
            continue;
        }
        // direction from the next prime dimensions, mapped to [−1, 1]
        let dir: Vec<f64> = (0..n)
            .map(|j| 2.0 * halton(index, PRIMES[(n + j) % PRIMES.len()]) - 1.0)
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let step: Vec<f64> = dir
            .iter()
            .enumerate()
            .map(|(j, d)| d / norm * step_len * (domain[j][1] - domain[j][0]))
            .collect();
        // march until C* (or the domain) is left
        let mut x_in = coords.clone();
        let mut x_out = None;
        for _ in 0..100 {
            let cand: Vec<f64> =
                x_in.iter().zip(&step).map(|(a, b)| a + b).collect();
            if !inside(domain, &cand) {
                break;
            }
            if chain.contains(&cand) {
                x_in = cand;
            } else {
                x_out = Some(cand);
                break;
            }
        }
        let Some(mut x_out) = x_out else { continue };
        // bisect the crossing
        for _ in 0..200 {
            if min_b(&x_in).is_some_and(|v| v.abs() <= eps) {
                break;
            }
            let mid: Vec<f64> =
                x_in.iter().zip(&x_out).map(|(a, b)| 0.5 * (a + b)).collect();
            if chain.contains(&mid) {
                x_in = mid;
            } else {
                x_out = mid;
            }
        }
        if min_b(&x_in).is_some_and(|v| v.abs() <= eps) {
            out.push(x_in);
        }
    }
    if out.len() < count {
        return Err(Error::Sampling(format!(
            "found {} of {count} requested boundary samples",
            out.len()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::BarrierChain;
    use crate::kappa::ClassKappa;
    use crate::models::builtin;

    fn scalar_chain(gain0: f64, levels: usize) -> BarrierChain {
        let (sys, input) = builtin("scalar-example").unwrap();
        let mut alphas = vec![ClassKappa::linear(gain0).unwrap()];
        for _ in 0..levels {
            alphas.push(ClassKappa::linear(1.0).unwrap());
        }
        BarrierChain::new(sys, input, alphas).unwrap()
    }

    fn small_opts(budget: usize) -> CertifyOptions {
        CertifyOptions { budget, refine_starts: 12, refine_iters: 300, ..Default::default() }
    }

    #[test]
    fn scalar_h_only_certificate_fails_with_exact_value() {
        // N = 0: the certificate asks sup_u[ḣ + α_0(h)] ≥ 0 on S; at the
        // boundary x = 2 the closed form is exactly −1.
        let chain = scalar_chain(1.0, 0);
        let phi_boundary = chain.certificate_objective(&[2.0]).unwrap();
        assert_eq!(phi_boundary, -1.0);
        let report =
            certify(&chain, &[[-5.0, 3.0]], &small_opts(4_000)).unwrap();
        assert!(!report.is_iccbf, "gamma = {}", report.gamma);
        assert!((report.gamma + 1.0).abs() < 1e-3, "gamma = {}", report.gamma);
        assert!((report.argmin_state[0] - 2.0).abs() < 1e-3);
        assert_eq!(report.method, "sampling+refinement");
    }

    #[test]
    fn scalar_valid_chain_certifies_with_exact_gamma() {
        // N = 1 with identity α's: φ(x) = (2 − 2x) + (1 − 2x), minimized on
        // C* = {x ≤ 0.5} at the boundary: γ = 1.
        let chain = scalar_chain(1.0, 1);
        let report = certify(&chain, &[[-5.0, 3.0]], &small_opts(4_000)).unwrap();
        assert!(report.is_iccbf);
        assert!((report.gamma - 1.0).abs() < 1e-3, "gamma = {}", report.gamma);
    }

    #[test]
    fn certification_sign_matches_grid_oracle_for_linear_gains() {
        // independent oracle: exhaustive x-grid with a u-grid supremum
        for gain in [0.25, 0.5, 1.0] {
            let chain = scalar_chain(gain, 1);
            let domain = [[-5.0, 3.0]];
            let report = certify(&chain, &domain, &small_opts(3_000)).unwrap();
            let mut oracle = f64::INFINITY;
            let m = 1_000_000;
            for k in 0..=m {
                let x = domain[0][0] + (domain[0][1] - domain[0][0]) * k as f64 / m as f64;
                if !chain.contains(&[x]) {
                    continue;
                }
                let d = chain.level_data(1, &[x]).unwrap();
                let alpha = chain.alpha(1).eval_f64(d.value).unwrap();
                let mut sup = f64::NEG_INFINITY;
                for g in 0..=1_000 {
                    let u = -1.0 + 2.0 * g as f64 / 1000.0;
                    sup = sup.max(d.lie_f + d.lie_g[0] * u + alpha);
                }
                oracle = oracle.min(sup);
            }
            assert_eq!(
                report.gamma >= -1e-6,
                oracle >= -1e-6,
                "gain {gain}: gamma {} oracle {oracle}",
                report.gamma
            );
            assert!((report.gamma - oracle).abs() < 1e-2);
        }
    }

    #[test]
    fn empty_c_star_is_distinguished() {
        // gain 0.25 puts C_1 at x ≤ −0.4; domain [1, 2] misses it entirely
        let chain = scalar_chain(0.25, 1);
        let r = certify(&chain, &[[1.0, 2.0]], &small_opts(2_000));
        assert!(matches!(r, Err(Error::EmptyCStar { .. })));
    }

    #[test]
    fn budget_checked() {
        let chain = scalar_chain(1.0, 1);
        let r = certify(&chain, &[[-5.0, 3.0]], &small_opts(10));
        assert!(matches!(r, Err(Error::Budget { .. })));
    }

    #[test]
    fn gamma_monotone_in_budget() {
        let chain = scalar_chain(1.0, 1);
        let g1 = certify(&chain, &[[-5.0, 3.0]], &small_opts(2_000)).unwrap().gamma;
        let g2 = certify(&chain, &[[-5.0, 3.0]], &small_opts(8_000)).unwrap().gamma;
        assert!(g2 <= g1 + 1e-9, "{g2} vs {g1}");
    }

    #[test]
    fn simple_detection_with_restricted_domain() {
        // C_1 = {x ≤ 0.5}; on x ∈ [−5, 0] the terminal boundary is never
        // approached, so the chain is simple there and not on [−5, 3].
        let chain = scalar_chain(1.0, 1);
        let (simple, witness) =
            detect_simple(&chain, &[[-5.0, 0.0]], &small_opts(2_000)).unwrap();
        assert!(simple, "witness {witness:?}");
        assert!(witness.b_n > 0.0);
        let (simple, witness) =
            detect_simple(&chain, &[[-5.0, 3.0]], &small_opts(2_000)).unwrap();
        assert!(!simple);
        assert!(witness.b_n.abs() < 1e-3, "witness {witness:?}");
    }

    #[test]
    fn acc_boundary_partition_matches_headway_geometry() {
        let (sys, input) = builtin("acc").unwrap();
        let chain = BarrierChain::new(
            sys,
            input,
            vec![
                ClassKappa::linear(4.0).unwrap(),
                ClassKappa::sqrt(7.0).unwrap(),
                ClassKappa::linear(2.0).unwrap(),
            ],
        )
        .unwrap();
        let grid = boundary_partition(
            &chain,
            0,
            GridAxis { lo: 0.0, hi: 100.0, points: 120 },
            GridAxis { lo: 0.0, hi: 30.0, points: 120 },
            None,
        )
        .unwrap();
        let mut feasible_speeds = Vec::new();
        let mut infeasible_speeds = Vec::new();
        for i in 0..120 {
            for j in 0..120 {
                let (v, label) = grid.at(i, j);
                let d = grid.axis1.value(i);
                let speed = grid.axis2.value(j);
                // S is exactly d ≥ 1.8 v
                assert_eq!(v >= 0.0, d >= 1.8 * speed, "sign mismatch at ({d}, {speed})");
                match label {
                    CellLabel::BoundaryFeasible => feasible_speeds.push(speed),
                    CellLabel::BoundaryInfeasible => infeasible_speeds.push(speed),
                    _ => {}
                }
            }
        }
        // the feasibility transition on ∂S sits near v ≈ 18.5
        let max_feasible = feasible_speeds.iter().cloned().fold(0.0, f64::max);
        let min_infeasible =
            infeasible_speeds.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max_feasible < 19.0, "max feasible boundary speed {max_feasible}");
        assert!(min_infeasible > 18.0, "min infeasible boundary speed {min_infeasible}");
        assert!(!infeasible_speeds.is_empty());
    }

    #[test]
    fn partition_labels_stable_under_refinement() {
        let chain = scalar_chain(1.0, 1);
        // trivial 2-D slice does not exist for a 1-D model; use ACC instead
        let (sys, input) = builtin("acc").unwrap();
        let chain2 = BarrierChain::new(
            sys,
            input,
            vec![ClassKappa::linear(4.0).unwrap(), ClassKappa::linear(1.0).unwrap()],
        )
        .unwrap();
        let coarse = boundary_partition(
            &chain2,
            0,
            GridAxis { lo: 0.0, hi: 100.0, points: 40 },
            GridAxis { lo: 0.0, hi: 30.0, points: 40 },
            None,
        )
        .unwrap();
        let fine = boundary_partition(
            &chain2,
            0,
            GridAxis { lo: 0.0, hi: 100.0, points: 79 },
            GridAxis { lo: 0.0, hi: 30.0, points: 79 },
            None,
        )
        .unwrap();
        // coarse node (i, j) is fine node (2i, 2j); interior/exterior rank
        // must agree except next to a boundary
        for i in 1..39 {
            for j in 1..39 {
                let (_, cl) = coarse.at(i, j);
                let (_, fl) = fine.at(2 * i, 2 * j);
                let boundaryish = |l: CellLabel| {
                    matches!(l, CellLabel::BoundaryFeasible | CellLabel::BoundaryInfeasible)
                };
                if boundaryish(cl) || boundaryish(fl) {
                    continue;
                }
                assert_eq!(cl, fl, "at ({i}, {j})");
            }
        }
        let _ = chain.levels();
    }

    #[test]
    fn rendezvous_position_slice_grid() {
        let (sys, input) = builtin("rendezvous").unwrap();
        let chain = BarrierChain::new(
            sys,
            input,
            vec![ClassKappa::linear(0.25).unwrap(), ClassKappa::linear(0.85).unwrap()],
        )
        .unwrap();
        // position plane at rest, ψ = 0: the level-0 set is the LOS cone
        let slice = Slice2d { axes: (0, 1), base: vec![0.0; 5] };
        let grid = boundary_partition(
            &chain,
            0,
            GridAxis { lo: 5.0, hi: 120.0, points: 60 },
            GridAxis { lo: -60.0, hi: 60.0, points: 61 },
            Some(&slice),
        )
        .unwrap();
        let half_angle = (10.0_f64).to_radians();
        let mut interior = 0;
        let mut exterior = 0;
        for i in 0..60 {
            for j in 0..61 {
                let (v, label) = grid.at(i, j);
                let px = grid.axis1.value(i) - 2.4; // port at (ρ, 0) for ψ = 0
                let py = grid.axis2.value(j);
                let inside_cone = py.atan2(px).abs() <= half_angle;
                assert_eq!(v >= 0.0, inside_cone, "at ({px}, {py})");
                match label {
                    CellLabel::Exterior => exterior += 1,
                    CellLabel::Interior => interior += 1,
                    _ => {}
                }
            }
        }
        assert!(interior > 0 && exterior > 0);
    }

    #[test]
    fn clipped_baseline_violates_nagumo_on_fast_boundary() {
        let acc_chain = || {
            let (sys, input) = builtin("acc").unwrap();
            BarrierChain::new(
                sys,
                input,
                vec![
                    ClassKappa::linear(4.0).unwrap(),
                    ClassKappa::sqrt(7.0).unwrap(),
                    ClassKappa::linear(2.0).unwrap(),
                ],
            )
            .unwrap()
        };
        let chain = acc_chain();
        let mut baseline = crate::controller::ClfCbfClippedController::new(
            std::sync::Arc::new(acc_chain()),
            10.0,
            2.0,
            0.1,
        )
        .unwrap();
        // points exactly on ∂S at speeds past the feasibility transition:
        // no admissible input keeps ḣ ≥ 0 there, so the clipped control
        // cannot either
        let samples: Vec<Vec<f64>> =
            (0..20).map(|i| {
                let v = 19.5 + 0.1 * i as f64;
                vec![1.8 * v, v]
            }).collect();
        let violations =
            nagumo_spotcheck(&chain, &mut baseline, &samples, 1e-9, -1e-6).unwrap();
        assert!(violations > 0, "expected violations on the fast boundary");
        assert_eq!(violations, 20, "every fast boundary point is doomed");
    }

    #[test]
    fn nagumo_rejects_interior_samples() {
        let chain = scalar_chain(1.0, 1);
        let mut c = crate::controller::IccbfQpController::new(
            std::sync::Arc::new(scalar_chain(1.0, 1)),
            crate::controller::DesiredControl::Zero,
        )
        .unwrap();
        let r = nagumo_spotcheck(&chain, &mut c, &[vec![-3.0]], 1e-6, -1e-6);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn boundary_sampler_lands_on_boundaries() {
        let chain = scalar_chain(1.0, 1);
        let samples =
            sample_near_boundary(&chain, &[[-5.0, 3.0]], 20, 0, 1e-9).unwrap();
        assert_eq!(samples.len(), 20);
        for x in &samples {
            let m = chain.membership(x).unwrap();
            assert!(m.in_c_star);
            let min_b = m.values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min_b.abs() <= 1e-9, "min_b = {min_b}");
        }
    }
}
