//! The recursive barrier chain b_0 … b_N and the sets it carves out.
//!
//! b_0 = h and every later level folds the worst admissible input into the
//! previous one:
//!
//!   b_{i+1}(x) = inf_{u∈U} [ L_f b_i(x) + L_g b_i(x) u + α_i(b_i(x)) ]
//!
//! so each b_i depends on the state alone. C_i is the 0-superlevel set of
//! b_i and C* is their intersection. Evaluating b_i needs nesting depth i
//! (each level consumes the gradient of the one below), which is why
//! construction is refused when N + 1 would exceed the autodiff depth limit.

use crate::error::{Error, Result};
use crate::jet::{dot, value_and_gradient, Jet};
use crate::kappa::ClassKappa;
use crate::system::{reals, ControlAffineSystem, InputSet};

pub const DEFAULT_MAX_DEPTH: u32 = 4;

/// Value, gradient and Lie derivatives of one barrier level at a state.
#[derive(Clone, Debug)]
pub struct LevelData {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// L_f b_i(x)
    pub lie_f: f64,
    /// L_g b_i(x), one entry per input channel
    pub lie_g: Vec<f64>,
}

/// Per-level sign flags at a state.
#[derive(Clone, Debug)]
pub struct Membership {
    pub values: Vec<f64>,
    pub levels: Vec<bool>,
    pub in_c_star: bool,
}

pub struct BarrierChain {
    system: ControlAffineSystem,
    input: InputSet,
    alphas: Vec<ClassKappa>,
    margin: f64,
    max_depth: u32,
}

impl BarrierChain {
    /// `alphas` supplies α_0 … α_N, so the chain depth N is
    /// `alphas.len() - 1`. N = 0 is the degenerate run that checks h alone.
    pub fn new(
        system: ControlAffineSystem,
        input: InputSet,
        alphas: Vec<ClassKappa>,
    ) -> Result<Self> {
        Self::with_limits(system, input, alphas, 0.0, DEFAULT_MAX_DEPTH)
    }

    pub fn with_limits(
        system: ControlAffineSystem,
        input: InputSet,
        alphas: Vec<ClassKappa>,
        margin: f64,
        max_depth: u32,
    ) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::ChainSpec("need at least one class-K function (α_0)".into()));
        }
        if input.dim() != system.input_dim() {
            return Err(Error::Dimension { expected: system.input_dim(), got: input.dim() });
        }
        let levels = alphas.len() as u32 - 1;
        if levels + 1 > max_depth {
            return Err(Error::DepthLimit { required: levels + 1, max: max_depth });
        }
        if margin < 0.0 {
            return Err(Error::ChainSpec(format!("margin must be nonnegative, got {margin}")));
        }
        Ok(BarrierChain { system, input, alphas, margin, max_depth })
    }

    /// N: index of the terminal barrier function.
    pub fn levels(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn system(&self) -> &ControlAffineSystem {
        &self.system
    }

    pub fn input_set(&self) -> &InputSet {
        &self.input
    }

    pub fn alpha(&self, i: usize) -> &ClassKappa {
        &self.alphas[i]
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// b_level on jet inputs; this is the recursion the whole module exists
    /// for, so it is public for callers that differentiate through it.
    pub fn eval_jets(&self, level: usize, x: &[Jet]) -> Result<Jet> {
        self.check_level(level)?;
        if !x.is_empty() && x[0].depth() + level as u32 > self.max_depth {
            return Err(Error::DepthLimit {
                required: x[0].depth() + level as u32,
                max: self.max_depth,
            });
        }
        self.eval_rec(level, x)
    }

    fn eval_rec(&self, level: usize, x: &[Jet]) -> Result<Jet> {
        if level == 0 {
            return self.system.h(x);
        }
        let (prev_value, prev_grad) =
            value_and_gradient(|y| self.eval_rec(level - 1, y), x)?;
        let f = self.system.f(x)?;
        let g = self.system.g(x)?;
        let lie_f = dot(&prev_grad, &f);
        let lie_g: Vec<Jet> = (0..self.input.dim())
            .map(|j| {
                let col: Vec<Jet> = g.iter().map(|row| row[j].clone()).collect();
                dot(&prev_grad, &col)
            })
            .collect();
        let alpha = self.alphas[level - 1]
            .eval(&prev_value)
            .map_err(|e| Error::Kappa { level: level - 1, source: Box::new(e) })?;
        Ok(self.input.affine_infimum(&(lie_f + alpha), &lie_g))
    }

    /// b_level(x) at a plain state.
    pub fn eval(&self, level: usize, x: &[f64]) -> Result<f64> {
        Ok(self.eval_jets(level, &reals(x))?.value())
    }

    /// ∇b_level(x) by one nested forward pass per coordinate.
    pub fn grad(&self, level: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.level_data(level, x)?.gradient)
    }

    /// Value, gradient, and Lie derivatives of b_level at x: everything a
    /// pointwise controller or verifier needs.
    pub fn level_data(&self, level: usize, x: &[f64]) -> Result<LevelData> {
        self.check_level(level)?;
        let base = reals(x);
        let (value, grad) = value_and_gradient(|y| self.eval_rec(level, y), &base)?;
        let gradient: Vec<f64> = grad.iter().map(Jet::value).collect();
        let f = self.system.f_at(x)?;
        let g = self.system.g_at(x)?;
        let lie_f = gradient.iter().zip(&f).map(|(a, b)| a * b).sum();
        let lie_g = (0..self.input.dim())
            .map(|j| gradient.iter().zip(&g).map(|(gi, row)| gi * row[j]).sum())
            .collect();
        Ok(LevelData { value: value.value(), gradient, lie_f, lie_g })
    }

    /// Sign flags b_i(x) ≥ margin for every level plus the C* conjunction.
    pub fn membership(&self, x: &[f64]) -> Result<Membership> {
        let mut values = Vec::with_capacity(self.alphas.len());
        for level in 0..=self.levels() {
            values.push(self.eval(level, x)?);
        }
        let levels: Vec<bool> = values.iter().map(|v| *v >= self.margin).collect();
        let in_c_star = levels.iter().all(|ok| *ok);
        Ok(Membership { values, levels, in_c_star })
    }

    /// True iff x ∈ C* (false as well when evaluation fails, e.g. outside
    /// the domain of h).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.membership(x).map(|m| m.in_c_star).unwrap_or(false)
    }

    /// sup_{u∈U} [ L_f b_N + L_g b_N u + α_N(b_N) ] at x: the quantity whose
    /// sign over C* is the certificate, and the controller's row slack.
    pub fn certificate_objective(&self, x: &[f64]) -> Result<f64> {
        let n = self.levels();
        let data = self.level_data(n, x)?;
        let alpha = self.alphas[n]
            .eval_f64(data.value)
            .map_err(|e| Error::Kappa { level: n, source: Box::new(e) })?;
        Ok(self.input.affine_supremum_at(data.lie_f + alpha, &data.lie_g))
    }

    /// On systems with L_g h ≡ 0, level one must collapse to
    /// L_f h + α_0(h): the higher-order-barrier special case. Returns the
    /// largest deviation over the samples; rejects systems where the input
    /// shows up in ḣ.
    pub fn hocbf_reduction_check(&self, samples: &[Vec<f64>]) -> Result<f64> {
        if self.levels() < 1 {
            return Err(Error::Precondition("reduction check needs N >= 1".into()));
        }
        let mut worst = 0.0_f64;
        for x in samples {
            let h_data = self.level_data(0, x)?;
            let lgh_norm = h_data.lie_g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if lgh_norm > 1e-12 {
                return Err(Error::Precondition(format!(
                    "L_g h = {lgh_norm:e} at {x:?}; system does not have relative degree ≥ 2"
                )));
            }
            let alpha0 = self.alphas[0]
                .eval_f64(h_data.value)
                .map_err(|e| Error::Kappa { level: 0, source: Box::new(e) })?;
            let reduced = h_data.lie_f + alpha0;
            let b1 = self.eval(1, x)?;
            worst = worst.max((b1 - reduced).abs());
        }
        Ok(worst)
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.levels() {
            return Err(Error::Level { level, max: self.levels() });
        }
        Ok(())
    }
}

impl std::fmt::Debug for BarrierChain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BarrierChain")
            .field("system", &self.system.name())
            .field("levels", &self.levels())
            .field("alphas", &self.alphas)
            .finish()
    }
}
