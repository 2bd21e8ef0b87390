//! Extended class-K functions: strictly increasing, α(0) = 0, extended to
//! negative arguments by odd symmetry α(−s) = −α(s).
//!
//! The chain evaluates α_i(b_i) at states where b_i < 0 (outside C_i) during
//! verification and plotting, which is why the odd extension is built in
//! rather than left to callers.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Default slope cap used where the true derivative is unbounded at s = 0
/// (square-root and sub-linear power kinds).
pub const DEFAULT_ZERO_SLOPE_CAP: f64 = 1e6;

type CustomFn = Arc<dyn Fn(&Jet) -> Result<Jet> + Send + Sync>;

#[derive(Clone)]
pub enum ClassKappa {
    /// α(s) = gain · s
    Linear { gain: f64 },
    /// α(s) = sign(s) · gain · √|s|. Non-Lipschitz at 0: evaluation at
    /// exactly s = 0 returns value 0 with the derivative clamped to
    /// `zero_slope_cap`, confining the issue to the isolated point.
    Sqrt { gain: f64, zero_slope_cap: f64 },
    /// α(s) = sign(s) · gain · |s|^exponent
    Power { gain: f64, exponent: f64, zero_slope_cap: f64 },
    /// User-supplied odd-extended class-K function.
    Custom { name: String, eval: CustomFn },
}

impl std::fmt::Debug for ClassKappa {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassKappa::Linear { gain } => write!(f, "Linear(gain={gain})"),
            ClassKappa::Sqrt { gain, .. } => write!(f, "Sqrt(gain={gain})"),
            ClassKappa::Power { gain, exponent, .. } => {
                write!(f, "Power(gain={gain}, exponent={exponent})")
            }
            ClassKappa::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ClassKappa {
    pub fn linear(gain: f64) -> Result<Self> {
        check_gain(gain)?;
        Ok(ClassKappa::Linear { gain })
    }

    pub fn sqrt(gain: f64) -> Result<Self> {
        check_gain(gain)?;
        Ok(ClassKappa::Sqrt { gain, zero_slope_cap: DEFAULT_ZERO_SLOPE_CAP })
    }

    pub fn power(gain: f64, exponent: f64) -> Result<Self> {
        check_gain(gain)?;
        if !(exponent > 0.0) {
            return Err(Error::KappaSpec(format!("exponent must be positive, got {exponent}")));
        }
        Ok(ClassKappa::Power { gain, exponent, zero_slope_cap: DEFAULT_ZERO_SLOPE_CAP })
    }

    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(&Jet) -> Result<Jet> + Send + Sync + 'static,
    ) -> Self {
        ClassKappa::Custom { name: name.into(), eval: Arc::new(eval) }
    }

    pub fn with_zero_slope_cap(mut self, cap: f64) -> Self {
        match &mut self {
            ClassKappa::Sqrt { zero_slope_cap, .. }
            | ClassKappa::Power { zero_slope_cap, .. } => *zero_slope_cap = cap,
            _ => {}
        }
        self
    }

    /// Multiplicative gain, where the kind has one.
    pub fn gain(&self) -> Option<f64> {
        match self {
            ClassKappa::Linear { gain }
            | ClassKappa::Sqrt { gain, .. }
            | ClassKappa::Power { gain, .. } => Some(*gain),
            ClassKappa::Custom { .. } => None,
        }
    }

    pub fn eval(&self, s: &Jet) -> Result<Jet> {
        match self {
            ClassKappa::Linear { gain } => Ok(s * *gain),
            ClassKappa::Sqrt { gain, zero_slope_cap } => {
                odd_power(s, 0.5, *gain, *zero_slope_cap)
            }
            ClassKappa::Power { gain, exponent, zero_slope_cap } => {
                odd_power(s, *exponent, *gain, *zero_slope_cap)
            }
            ClassKappa::Custom { eval, .. } => eval(s),
        }
    }

    /// Plain-value convenience.
    pub fn eval_f64(&self, s: f64) -> Result<f64> {
        Ok(self.eval(&Jet::real(s))?.value())
    }
}

fn check_gain(gain: f64) -> Result<()> {
    if !(gain > 0.0) {
        return Err(Error::KappaSpec(format!("gain must be positive, got {gain}")));
    }
    Ok(())
}

fn odd_power(s: &Jet, exponent: f64, gain: f64, cap: f64) -> Result<Jet> {
    let v = s.value();
    if v > 0.0 {
        Ok(s.powf(exponent)? * gain)
    } else if v < 0.0 {
        Ok(-((-s).powf(exponent)? * gain))
    } else {
        // value 0; slope is 0 (exponent > 1), gain (exponent = 1), or
        // unbounded (exponent < 1), clamped to the configured cap.
        let slope = if exponent > 1.0 {
            0.0
        } else if exponent == 1.0 {
            gain
        } else {
            cap
        };
        Ok(s * slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::lift;

    #[test]
    fn linear_is_linear() {
        let a = ClassKappa::linear(4.0).unwrap();
        assert_eq!(a.eval_f64(2.5).unwrap(), 10.0);
        assert_eq!(a.eval_f64(0.0).unwrap(), 0.0);
        assert_eq!(a.eval_f64(-2.5).unwrap(), -10.0);
    }

    #[test]
    fn sqrt_odd_extension() {
        let a = ClassKappa::sqrt(7.0).unwrap();
        assert!((a.eval_f64(4.0).unwrap() - 14.0).abs() < 1e-14);
        assert!((a.eval_f64(-4.0).unwrap() + 14.0).abs() < 1e-14);
        assert_eq!(a.eval_f64(0.0).unwrap(), 0.0);
    }

    #[test]
    fn sqrt_slope_capped_at_zero() {
        let a = ClassKappa::sqrt(7.0).unwrap().with_zero_slope_cap(1e3);
        let x = lift(&[0.0], 0, 1).unwrap();
        let y = a.eval(&x[0]).unwrap();
        assert_eq!(y.value(), 0.0);
        assert_eq!(y.derivative(1), 1e3);
    }

    #[test]
    fn sqrt_jet_derivative_away_from_zero() {
        let a = ClassKappa::sqrt(7.0).unwrap();
        let x = lift(&[9.0], 0, 1).unwrap();
        let y = a.eval(&x[0]).unwrap();
        assert!((y.value() - 21.0).abs() < 1e-13);
        assert!((y.derivative(1) - 7.0 / 6.0).abs() < 1e-13);
        let xm = lift(&[-9.0], 0, 1).unwrap();
        let ym = a.eval(&xm[0]).unwrap();
        // odd extension keeps the slope positive on both sides
        assert!((ym.derivative(1) - 7.0 / 6.0).abs() < 1e-13);
    }

    #[test]
    fn power_kinds() {
        let a = ClassKappa::power(2.0, 1.5).unwrap();
        assert!((a.eval_f64(4.0).unwrap() - 16.0).abs() < 1e-12);
        assert!((a.eval_f64(-4.0).unwrap() + 16.0).abs() < 1e-12);
        // exponent > 1: slope 0 at the origin
        let x = lift(&[0.0], 0, 1).unwrap();
        assert_eq!(a.eval(&x[0]).unwrap().derivative(1), 0.0);
    }

    #[test]
    fn strictly_increasing_on_samples() {
        for a in [
            ClassKappa::linear(0.3).unwrap(),
            ClassKappa::sqrt(2.0).unwrap(),
            ClassKappa::power(1.2, 2.0).unwrap(),
        ] {
            let mut prev = f64::NEG_INFINITY;
            for i in -20..=20 {
                let v = a.eval_f64(i as f64 * 0.37).unwrap();
                assert!(v > prev, "{a:?} not increasing");
                prev = v;
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ClassKappa::linear(0.0).is_err());
        assert!(ClassKappa::linear(-1.0).is_err());
        assert!(ClassKappa::power(1.0, 0.0).is_err());
    }
}
