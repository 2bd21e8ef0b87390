//! Turn a parsed [`ScenarioConfig`] into runnable objects.

use std::sync::Arc;

use crate::chain::{BarrierChain, DEFAULT_MAX_DEPTH};
use crate::config::{
    AlphaKind, ControllerConfig, ControllerKind, DesiredKind, ScenarioConfig,
};
use crate::controller::{
    ClfCbfClippedController, Controller, DesiredControl, IccbfQpController,
    RelaxedIccbfController,
};
use crate::error::{Error, Result};
use crate::kappa::ClassKappa;
use crate::models::builtin_with;
use crate::sim::SimOptions;
use crate::verify::CertifyOptions;

/// A built scenario: the chain is shared, the controller (when configured)
/// owns its QP workspace.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub chain: Arc<BarrierChain>,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self> {
        let (system, input) = builtin_with(&config.model.name, &config.model.params)?;
        let cap = config.chain.sqrt_slope_cap.unwrap_or(crate::kappa::DEFAULT_ZERO_SLOPE_CAP);
        let alphas: Result<Vec<ClassKappa>> = config
            .chain
            .alpha
            .iter()
            .map(|a| {
                Ok(match a.kind {
                    AlphaKind::Linear => ClassKappa::linear(a.gain)?,
                    AlphaKind::Sqrt => ClassKappa::sqrt(a.gain)?.with_zero_slope_cap(cap),
                    AlphaKind::Power => {
                        ClassKappa::power(a.gain, a.exponent.unwrap_or(1.0))?
                            .with_zero_slope_cap(cap)
                    }
                })
            })
            .collect();
        let chain = BarrierChain::with_limits(
            system,
            input,
            alphas?,
            config.chain.margin.unwrap_or(0.0),
            config.chain.max_depth.unwrap_or(DEFAULT_MAX_DEPTH),
        )?;
        Ok(Scenario { config, chain: Arc::new(chain) })
    }

    pub fn controller(&self) -> Result<Box<dyn Controller>> {
        let spec = self.config.controller.as_ref().ok_or_else(|| {
            Error::Precondition("config has no [controller] section".into())
        })?;
        build_controller(spec, self.chain.clone())
    }

    pub fn sim_options(&self) -> Result<SimOptions> {
        let sim = self
            .config
            .sim
            .as_ref()
            .ok_or_else(|| Error::Precondition("config has no [sim] section".into()))?;
        Ok(SimOptions {
            t_end: sim.t_end,
            dt: sim.dt,
            goal_range: sim.goal_range,
            per_stage_control: sim.per_stage_control,
        })
    }

    pub fn certify_options(&self, seed_override: Option<u64>) -> Result<CertifyOptions> {
        let v = self
            .config
            .verify
            .as_ref()
            .ok_or_else(|| Error::Precondition("config has no [verify] section".into()))?;
        let defaults = CertifyOptions::default();
        Ok(CertifyOptions {
            budget: v.budget,
            refine_starts: v.refine_starts.unwrap_or(defaults.refine_starts),
            refine_iters: v.refine_iters.unwrap_or(defaults.refine_iters),
            seed: seed_override.or(v.seed).unwrap_or(0),
            ..defaults
        })
    }

    pub fn verify_domain(&self) -> Result<Vec<[f64; 2]>> {
        let v = self
            .config
            .verify
            .as_ref()
            .ok_or_else(|| Error::Precondition("config has no [verify] section".into()))?;
        Ok(v.domain.clone())
    }
}

fn build_controller(
    spec: &ControllerConfig,
    chain: Arc<BarrierChain>,
) -> Result<Box<dyn Controller>> {
    match spec.kind {
        ControllerKind::IccbfQp => {
            let desired = match spec.desired.unwrap_or(DesiredKind::Zero) {
                DesiredKind::Zero => DesiredControl::Zero,
                DesiredKind::ClfRate => DesiredControl::ClfRate {
                    rate: spec.clf_rate.ok_or_else(|| {
                        Error::Precondition(
                            "iccbf-qp with desired = \"clf-rate\" needs clf_rate".into(),
                        )
                    })?,
                },
            };
            Ok(Box::new(IccbfQpController::new(chain, desired)?))
        }
        ControllerKind::ClfCbfQpClipped => Ok(Box::new(ClfCbfClippedController::new(
            chain,
            spec.clf_rate.unwrap_or(10.0),
            spec.cbf_gain.unwrap_or(2.0),
            spec.delta_penalty.unwrap_or(0.1),
        )?)),
        ControllerKind::IccbfClfRelaxed => Ok(Box::new(RelaxedIccbfController::new(
            chain,
            spec.clf_rate.unwrap_or(0.1),
            spec.delta_weight.unwrap_or(10.0),
            spec.k_weight.unwrap_or(50.0),
        )?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_acc_scenario_end_to_end() {
        let text = r#"
            [model]
            name = "acc"

            [chain]
            n = 2
            [[chain.alpha]]
            kind = "linear"
            gain = 4.0
            [[chain.alpha]]
            kind = "sqrt"
            gain = 7.0
            [[chain.alpha]]
            kind = "linear"
            gain = 2.0

            [controller]
            kind = "iccbf-qp"
            desired = "clf-rate"
            clf_rate = 10.0

            [sim]
            x0 = [100.0, 20.0]
            t_end = 1.0
            dt = 0.01

            [output]
            dir = "out"
        "#;
        let config = ScenarioConfig::from_toml_str(text).unwrap();
        let scenario = Scenario::build(config).unwrap();
        let mut controller = scenario.controller().unwrap();
        let opts = scenario.sim_options().unwrap();
        let traj =
            crate::sim::simulate(&scenario.chain, controller.as_mut(), &[100.0, 20.0], &opts)
                .unwrap();
        assert!(!traj.failed);
        assert!(traj.h_values.iter().all(|h| *h > 0.0));
    }

    #[test]
    fn unknown_model_surfaces() {
        let text = r#"
            [model]
            name = "segway"
            [chain]
            n = 0
            [[chain.alpha]]
            kind = "linear"
            gain = 1.0
            [output]
            dir = "out"
        "#;
        let config = ScenarioConfig::from_toml_str(text).unwrap();
        assert!(matches!(Scenario::build(config), Err(Error::UnknownModel(_))));
    }
}
