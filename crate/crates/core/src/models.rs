//! Built-in models: the scalar saturation example, adaptive cruise control,
//! planar spacecraft rendezvous, and a double integrator.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::system::{ControlAffineSystem, InputSet};

pub const MODEL_NAMES: [&str; 4] =
    ["scalar-example", "acc", "rendezvous", "double-integrator"];

/// Construct a built-in model with its default parameters.
pub fn builtin(name: &str) -> Result<(ControlAffineSystem, InputSet)> {
    builtin_with(name, &BTreeMap::new())
}

/// Construct a built-in model with parameter overrides. Unknown override
/// keys are rejected.
pub fn builtin_with(
    name: &str,
    overrides: &BTreeMap<String, f64>,
) -> Result<(ControlAffineSystem, InputSet)> {
    match name {
        "scalar-example" => scalar_example(overrides),
        "acc" => acc(overrides),
        "rendezvous" => rendezvous(overrides),
        "double-integrator" => double_integrator(overrides),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn resolve(
    model: &str,
    defaults: &[(&str, f64)],
    overrides: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    let mut params: BTreeMap<String, f64> =
        defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in overrides {
        if !params.contains_key(k) {
            return Err(Error::UnknownParam { model: model.to_string(), name: k.clone() });
        }
        params.insert(k.clone(), *v);
    }
    Ok(params)
}

/// ẋ = x + u with u ∈ [−u_max, u_max] and h = 2 − x: an unstable scalar
/// system whose safe set cannot be kept invariant near its boundary.
fn scalar_example(
    overrides: &BTreeMap<String, f64>,
) -> Result<(ControlAffineSystem, InputSet)> {
    let params = resolve("scalar-example", &[("u_max", 1.0)], overrides)?;
    let u_max = params["u_max"];
    let f: crate::system::VectorFn = Arc::new(|x: &[Jet]| Ok(vec![x[0].clone()]));
    let g: crate::system::MatrixFn =
        Arc::new(|x: &[Jet]| Ok(vec![vec![Jet::constant_like(&x[0], 1.0)]]));
    let h: crate::system::ScalarFn = Arc::new(|x: &[Jet]| Ok(2.0 - &x[0]));
    let sys = ControlAffineSystem::new("scalar-example", 1, 1, f, g, h)
        .with_params(params)
        .with_state_box(vec![[-10.0, 10.0]]);
    let input = InputSet::bounded_box(vec![-u_max], vec![u_max])?;
    Ok((sys, input))
}

/// Adaptive cruise control: state (d, v) = gap to the lead car and own
/// speed, resistive force F(v) = f0 + f1 v + f2 v², acceleration input in
/// g-units bounded to ±u_max, and headway constraint h = d − 1.8 v.
/// CLF V = (v − v_max)² drives the speed to the limit.
fn acc(overrides: &BTreeMap<String, f64>) -> Result<(ControlAffineSystem, InputSet)> {
    let params = resolve(
        "acc",
        &[
            ("f0", 0.1),      // N
            ("f1", 5.0),      // N s/m
            ("f2", 0.25),     // N s²/m²
            ("mass", 1650.0), // kg
            ("g0", 9.81),     // m/s²
            ("v0", 13.89),    // lead speed, m/s
            ("v_max", 24.0),  // speed limit, m/s
            ("u_max", 0.25),  // input bound, g-units
        ],
        overrides,
    )?;
    let (f0, f1, f2) = (params["f0"], params["f1"], params["f2"]);
    let (mass, g0, v0, v_max) = (params["mass"], params["g0"], params["v0"], params["v_max"]);
    let u_max = params["u_max"];

    let f: crate::system::VectorFn = Arc::new(move |x: &[Jet]| {
        let v = &x[1];
        let drag = f0 + f1 * v + f2 * (v * v);
        Ok(vec![v0 - v, -(drag / mass)])
    });
    let g: crate::system::MatrixFn = Arc::new(move |x: &[Jet]| {
        Ok(vec![
            vec![Jet::constant_like(&x[0], 0.0)],
            vec![Jet::constant_like(&x[0], g0)],
        ])
    });
    let h: crate::system::ScalarFn = Arc::new(|x: &[Jet]| Ok(&x[0] - 1.8 * &x[1]));
    let clf: crate::system::ScalarFn = Arc::new(move |x: &[Jet]| {
        let e = &x[1] - v_max;
        Ok(&e * &e)
    });

    let sys = ControlAffineSystem::new("acc", 2, 1, f, g, h)
        .with_clf(clf)
        .with_params(params)
        .with_state_box(vec![[0.0, 300.0], [0.0, 40.0]]);
    let input = InputSet::bounded_box(vec![-u_max], vec![u_max])?;
    Ok((sys, input))
}

/// Planar rendezvous with a rotating target in the LVLH frame. State
/// (p_x, p_y, v_x, v_y, ψ) in meters / m·s⁻¹ / radians; thrust input in kN
/// with a 1-norm bound, so the printed cost weights of the relaxed
/// controller apply unchanged. h is the line-of-sight cone constraint
/// cos θ − cos γ around the rotating docking axis.
fn rendezvous(
    overrides: &BTreeMap<String, f64>,
) -> Result<(ControlAffineSystem, InputSet)> {
    let params = resolve(
        "rendezvous",
        &[
            ("r_km", 6771.0),        // orbit radius of the target, km
            ("mu_km3_s2", 398600.0), // Earth's gravitational parameter, km³/s²
            ("omega_deg_s", 0.6),    // target spin rate, deg/s
            ("mc_kg", 1000.0),       // chaser mass, kg
            ("rho_m", 2.4),          // target disk radius, m
            ("u_max_kn", 0.25),      // 1-norm thrust bound, kN
            ("los_deg", 10.0),       // line-of-sight half-cone, deg
            // 1.0 evaluates the chaser-to-Earth distance as √(p_x²+p_y²)
            // exactly as printed in the source model; 0.0 (default) uses the
            // physically consistent √((r+p_x)² + p_y²).
            ("rc_literal", 0.0),
        ],
        overrides,
    )?;
    let r = params["r_km"] * 1e3; // m
    let mu = params["mu_km3_s2"] * 1e9; // m³/s²
    let nn = (mu / (r * r * r)).sqrt(); // mean motion, rad/s
    let omega = params["omega_deg_s"].to_radians();
    let mc = params["mc_kg"];
    let rho = params["rho_m"];
    let u_max = params["u_max_kn"];
    let cos_los = params["los_deg"].to_radians().cos();
    let rc_literal = params["rc_literal"] != 0.0;
    let thrust_gain = 1e3 / mc; // kN → m/s²

    let f: crate::system::VectorFn = Arc::new(move |x: &[Jet]| {
        let (px, py, vx, vy) = (&x[0], &x[1], &x[2], &x[3]);
        let rc2 = if rc_literal {
            px * px + py * py
        } else {
            let rp = px + r;
            &rp * &rp + py * py
        };
        let rc = rc2.sqrt()?;
        let rc3 = &rc * &rc * rc;
        let ax = (nn * nn) * px + (2.0 * nn) * vy + mu / (r * r) - (mu * (px + r)) / &rc3;
        let ay = (nn * nn) * py - (2.0 * nn) * vx - (mu * py) / &rc3;
        Ok(vec![
            vx.clone(),
            vy.clone(),
            ax,
            ay,
            Jet::constant_like(px, omega),
        ])
    });
    let g: crate::system::MatrixFn = Arc::new(move |x: &[Jet]| {
        let zero = Jet::constant_like(&x[0], 0.0);
        let k = Jet::constant_like(&x[0], thrust_gain);
        Ok(vec![
            vec![zero.clone(), zero.clone()],
            vec![zero.clone(), zero.clone()],
            vec![k.clone(), zero.clone()],
            vec![zero.clone(), k],
            vec![zero.clone(), zero],
        ])
    });
    let h: crate::system::ScalarFn = Arc::new(move |x: &[Jet]| {
        let (sp, cp) = x[4].sin_cos();
        let rx = &x[0] - rho * &cp;
        let ry = &x[1] - rho * &sp;
        let norm = (&rx * &rx + &ry * &ry).sqrt()?;
        Ok((rx * cp + ry * sp) / norm - cos_los)
    });
    let clf: crate::system::ScalarFn = Arc::new(move |x: &[Jet]| {
        let (sp, cp) = x[4].sin_cos();
        let t1 = &x[2] + (&x[0] - rho * cp) / 10.0;
        let t2 = &x[3] + (&x[1] - rho * sp) / 10.0;
        Ok(&t1 * &t1 + &t2 * &t2)
    });
    let goal: crate::system::ScalarFn = Arc::new(move |x: &[Jet]| {
        let (sp, cp) = x[4].sin_cos();
        let rx = &x[0] - rho * cp;
        let ry = &x[1] - rho * sp;
        (&rx * &rx + &ry * &ry).sqrt()
    });

    let sys = ControlAffineSystem::new("rendezvous", 5, 2, f, g, h)
        .with_clf(clf)
        .with_goal_metric(goal)
        .with_params(params)
        .with_state_box(vec![
            [-50.0, 250.0],
            [-150.0, 150.0],
            [-10.0, 10.0],
            [-10.0, 10.0],
            [-10.0, 10.0],
        ]);
    let input = InputSet::one_norm_ball(2, u_max)?;
    Ok((sys, input))
}

/// ẋ₁ = x₂, ẋ₂ = u, h = x₁: relative degree 2 everywhere, the standard
/// reduction check for higher-order barrier constructions.
fn double_integrator(
    overrides: &BTreeMap<String, f64>,
) -> Result<(ControlAffineSystem, InputSet)> {
    let params = resolve("double-integrator", &[("u_max", 1.0)], overrides)?;
    let u_max = params["u_max"];
    let f: crate::system::VectorFn =
        Arc::new(|x: &[Jet]| Ok(vec![x[1].clone(), Jet::constant_like(&x[0], 0.0)]));
    let g: crate::system::MatrixFn = Arc::new(|x: &[Jet]| {
        Ok(vec![
            vec![Jet::constant_like(&x[0], 0.0)],
            vec![Jet::constant_like(&x[0], 1.0)],
        ])
    });
    let h: crate::system::ScalarFn = Arc::new(|x: &[Jet]| Ok(x[0].clone()));
    let sys = ControlAffineSystem::new("double-integrator", 2, 1, f, g, h)
        .with_params(params)
        .with_state_box(vec![[-10.0, 10.0], [-10.0, 10.0]]);
    let input = InputSet::bounded_box(vec![-u_max], vec![u_max])?;
    Ok((sys, input))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_model_rejected() {
        assert!(matches!(builtin("hovercraft"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn unknown_param_rejected() {
        let mut o = BTreeMap::new();
        o.insert("warp".to_string(), 9.0);
        assert!(matches!(builtin_with("acc", &o), Err(Error::UnknownParam { .. })));
    }

    #[test]
    fn scalar_example_saturates_at_boundary() {
        let (sys, input) = builtin("scalar-example").unwrap();
        // ḣ = −x − u ≤ −1 at x = 2 for every admissible u
        let grad_h = crate::jet::gradient(|x| sys.h(x), &[2.0], 1).unwrap();
        let f = sys.f_at(&[2.0]).unwrap();
        let g = sys.g_at(&[2.0]).unwrap();
        let lfh = grad_h[0] * f[0];
        let lgh = grad_h[0] * g[0][0];
        assert_eq!(input.affine_supremum_at(lfh, &[lgh]), -1.0);
    }

    #[test]
    fn acc_headway_and_drift() {
        let (sys, _) = builtin("acc").unwrap();
        assert_eq!(sys.h_at(&[100.0, 20.0]).unwrap(), 64.0);
        // gap is steady when driving at the lead speed
        let f = sys.f_at(&[50.0, 13.89]).unwrap();
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn acc_param_override() {
        let mut o = BTreeMap::new();
        o.insert("v0".to_string(), 15.0);
        let (sys, _) = builtin_with("acc", &o).unwrap();
        let f = sys.f_at(&[50.0, 15.0]).unwrap();
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn rendezvous_on_axis_los_value() {
        let (sys, input) = builtin("rendezvous").unwrap();
        // on the docking axis (ψ = 0, p_y = 0, p_x > ρ): θ = 0
        let h = sys.h_at(&[100.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let expect = 1.0 - (10.0_f64).to_radians().cos();
        assert!((h - expect).abs() < 1e-12);
        assert!((expect - 0.01519).abs() < 1e-4);
        assert_eq!(input.dim(), 2);
    }

    #[test]
    fn rendezvous_drift_is_small_near_target() {
        let (sys, _) = builtin("rendezvous").unwrap();
        let f = sys.f_at(&[100.0, -10.0, 0.0, 0.0, 0.0]).unwrap();
        // relative-motion accelerations are a few mm/s² at 100 m range
        assert!(f[2].abs() < 1e-2, "ax = {}", f[2]);
        assert!(f[3].abs() < 1e-2, "ay = {}", f[3]);
        assert!((f[4] - 0.6_f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn double_integrator_relative_degree_two() {
        let (sys, _) = builtin("double-integrator").unwrap();
        let grad_h = crate::jet::gradient(|x| sys.h(x), &[1.0, -2.0], 1).unwrap();
        let g = sys.g_at(&[1.0, -2.0]).unwrap();
        let lgh = grad_h[0] * g[0][0] + grad_h[1] * g[1][0];
        assert_eq!(lgh, 0.0);
    }
}
