//! Nested forward-mode automatic differentiation.
//!
//! A [`Jet`] is a truncated Taylor scalar over `d` nilpotent directions
//! ε₁…ε_d (εᵢ² = 0). Its 2^d coefficients are indexed by direction subset:
//! coefficient `c[S]` multiplies ∏_{i∈S} εᵢ. A depth-0 jet is an ordinary
//! real and all operations degenerate to plain arithmetic.
//!
//! Derivatives nest by adding a direction: [`value_and_gradient`] promotes
//! its inputs one level, seeds the new direction on one coordinate per pass,
//! and reads the directional derivative back out of the upper coefficient
//! half. Because the chain rule is applied exactly at every level, extracted
//! derivatives agree with analytic ones to roundoff; the only truncation is
//! the nilpotency itself.
//!
//! Depth stays small here (≤ 4: two barrier levels plus a controller
//! gradient), so coefficients live in a plain `Vec` and one forward pass per
//! coordinate beats any tape-based scheme.

use crate::error::{Error, Result};

/// Truncated Taylor scalar carrying a value and directional derivatives up
/// to the nesting depth. Value semantics; cheap to clone at the depths used
/// here (≤ 16 coefficients).
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    /// Length is always a power of two; `coeffs[0]` is the value.
    coeffs: Vec<f64>,
}

impl Jet {
    /// Depth-0 jet: an ordinary real.
    pub fn real(value: f64) -> Self {
        Jet { coeffs: vec![value] }
    }

    /// Constant at the given nesting depth: all derivative coefficients zero.
    pub fn constant(value: f64, depth: u32) -> Self {
        let mut coeffs = vec![0.0; 1usize << depth];
        coeffs[0] = value;
        Jet { coeffs }
    }

    /// Constant with the same depth as `other`.
    pub fn constant_like(other: &Jet, value: f64) -> Self {
        Self::constant(value, other.depth())
    }

    pub fn depth(&self) -> u32 {
        self.coeffs.len().trailing_zeros()
    }

    /// The primal value (zeroth Taylor coefficient).
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient of the direction subset encoded by `mask`.
    pub fn coeff(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    /// Coefficient of ε₁⋯ε_order: the order-th derivative after seeding one
    /// coordinate in every direction (see [`lift`]).
    pub fn derivative(&self, order: u32) -> f64 {
        self.coeffs[(1usize << order) - 1]
    }

    /// Re-embed at depth+1 with a zero coefficient on the new direction.
    pub fn promote(&self) -> Jet {
        let n = self.coeffs.len();
        let mut coeffs = vec![0.0; 2 * n];
        coeffs[..n].copy_from_slice(&self.coeffs);
        Jet { coeffs }
    }

    /// Promote and seed the new (outermost) direction with unit derivative.
    pub fn seed_top(&self) -> Jet {
        let n = self.coeffs.len();
        let mut out = self.promote();
        out.coeffs[n] = 1.0;
        out
    }

    /// Coefficients not involving the outermost direction (depth − 1).
    pub fn lower_half(&self) -> Jet {
        let n = self.coeffs.len() / 2;
        Jet { coeffs: self.coeffs[..n].to_vec() }
    }

    /// Derivative part with respect to the outermost direction (depth − 1).
    pub fn upper_half(&self) -> Jet {
        let n = self.coeffs.len() / 2;
        Jet { coeffs: self.coeffs[n..].to_vec() }
    }

    /// Square root; defined for strictly positive values only. Callers that
    /// need a square root extended through zero use the odd extension in
    /// [`crate::kappa`].
    pub fn sqrt(&self) -> Result<Jet> {
        if self.value() <= 0.0 {
            return Err(Error::Domain { op: "sqrt", value: self.value() });
        }
        Ok(Jet { coeffs: sqrt_rec(&self.coeffs) })
    }

    pub fn sin(&self) -> Jet {
        self.sin_cos().0
    }

    pub fn cos(&self) -> Jet {
        self.sin_cos().1
    }

    pub fn sin_cos(&self) -> (Jet, Jet) {
        let (s, c) = sin_cos_rec(&self.coeffs);
        (Jet { coeffs: s }, Jet { coeffs: c })
    }

    pub fn exp(&self) -> Jet {
        Jet { coeffs: exp_rec(&self.coeffs) }
    }

    pub fn ln(&self) -> Result<Jet> {
        if self.value() <= 0.0 {
            return Err(Error::Domain { op: "ln", value: self.value() });
        }
        Ok(Jet { coeffs: ln_rec(&self.coeffs) })
    }

    /// Real power `self^e` for strictly positive base values.
    pub fn powf(&self, e: f64) -> Result<Jet> {
        if self.value() <= 0.0 {
            return Err(Error::Domain { op: "powf", value: self.value() });
        }
        Ok(Jet { coeffs: powf_rec(&self.coeffs, e) })
    }

    /// Integer power by repeated multiplication (negative via reciprocal).
    pub fn powi(&self, k: i32) -> Jet {
        if k < 0 {
            return Jet::constant_like(self, 1.0) / self.powi(-k);
        }
        let mut acc = Jet::constant_like(self, 1.0);
        let mut base = self.clone();
        let mut k = k as u32;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            k >>= 1;
        }
        acc
    }

    /// |self|. At a tie (value exactly zero) the non-negated branch is kept;
    /// a measure-zero subgradient choice.
    pub fn abs(&self) -> Jet {
        if self.value() >= 0.0 {
            self.clone()
        } else {
            -self
        }
    }

    /// Branch-selecting minimum; the first argument wins exact ties.
    pub fn min(&self, other: &Jet) -> Jet {
        if self.value() <= other.value() {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// Branch-selecting maximum; the first argument wins exact ties.
    pub fn max(&self, other: &Jet) -> Jet {
        if self.value() >= other.value() {
            self.clone()
        } else {
            other.clone()
        }
    }

    fn assert_same_depth(&self, other: &Jet) {
        assert_eq!(
            self.coeffs.len(),
            other.coeffs.len(),
            "jet depth mismatch: {} vs {}",
            self.depth(),
            other.depth()
        );
    }
}

// --- coefficient kernels -------------------------------------------------
//
// All kernels split a slice of length 2^d into halves (a_lo, a_hi) with
// x = a_lo + a_hi ε_d and recurse on the halves.

fn mul_acc(a: &[f64], b: &[f64], out: &mut [f64]) {
    if a.len() == 1 {
        out[0] += a[0] * b[0];
        return;
    }
    let h = a.len() / 2;
    let (alo, ahi) = a.split_at(h);
    let (blo, bhi) = b.split_at(h);
    let (olo, ohi) = out.split_at_mut(h);
    mul_acc(alo, blo, olo);
    mul_acc(alo, bhi, ohi);
    mul_acc(ahi, blo, ohi);
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    mul_acc(a, b, &mut out);
    out
}

fn div(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.len() == 1 {
        return vec![a[0] / b[0]];
    }
    let h = a.len() / 2;
    let qlo = div(&a[..h], &b[..h]);
    // quotient rule on the top direction: q_hi = (a_hi − q_lo b_hi) / b_lo
    let mut t = a[h..].to_vec();
    let prod = mul(&qlo, &b[h..]);
    for (ti, pi) in t.iter_mut().zip(&prod) {
        *ti -= pi;
    }
    let qhi = div(&t, &b[..h]);
    let mut out = qlo;
    out.extend(qhi);
    out
}

fn sqrt_rec(a: &[f64]) -> Vec<f64> {
    if a.len() == 1 {
        return vec![a[0].sqrt()];
    }
    let h = a.len() / 2;
    let slo = sqrt_rec(&a[..h]);
    let two_slo: Vec<f64> = slo.iter().map(|v| 2.0 * v).collect();
    let shi = div(&a[h..], &two_slo);
    let mut out = slo;
    out.extend(shi);
    out
}

fn sin_cos_rec(a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if a.len() == 1 {
        let (s, c) = a[0].sin_cos();
        return (vec![s], vec![c]);
    }
    let h = a.len() / 2;
    let (slo, clo) = sin_cos_rec(&a[..h]);
    let shi = mul(&clo, &a[h..]);
    let chi: Vec<f64> = mul(&slo, &a[h..]).iter().map(|v| -v).collect();
    let mut s = slo;
    s.extend(shi);
    let mut c = clo;
    c.extend(chi);
    (s, c)
}

fn exp_rec(a: &[f64]) -> Vec<f64> {
    if a.len() == 1 {
        return vec![a[0].exp()];
    }
    let h = a.len() / 2;
    let elo = exp_rec(&a[..h]);
    let ehi = mul(&elo, &a[h..]);
    let mut out = elo;
    out.extend(ehi);
    out
}

fn ln_rec(a: &[f64]) -> Vec<f64> {
    if a.len() == 1 {
        return vec![a[0].ln()];
    }
    let h = a.len() / 2;
    let llo = ln_rec(&a[..h]);
    let lhi = div(&a[h..], &a[..h]);
    let mut out = llo;
    out.extend(lhi);
    out
}

fn powf_rec(a: &[f64], e: f64) -> Vec<f64> {
    if a.len() == 1 {
        return vec![a[0].powf(e)];
    }
    let h = a.len() / 2;
    let plo = powf_rec(&a[..h], e);
    // d(x^e) = e x^{e-1} dx
    let pm1 = powf_rec(&a[..h], e - 1.0);
    let mut phi = mul(&pm1, &a[h..]);
    for v in phi.iter_mut() {
        *v *= e;
    }
    let mut out = plo;
    out.extend(phi);
    out
}

// --- operators ------------------------------------------------------------

impl std::ops::Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { coeffs: self.coeffs.iter().map(|v| -v).collect() }
    }
}

impl std::ops::Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

impl std::ops::Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.assert_same_depth(rhs);
        Jet { coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect() }
    }
}

impl std::ops::Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.assert_same_depth(rhs);
        Jet { coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect() }
    }
}

impl std::ops::Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.assert_same_depth(rhs);
        Jet { coeffs: mul(&self.coeffs, &rhs.coeffs) }
    }
}

impl std::ops::Div<&Jet> for &Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        self.assert_same_depth(rhs);
        Jet { coeffs: div(&self.coeffs, &rhs.coeffs) }
    }
}

macro_rules! forward_jet_binop {
    ($tr:ident, $m:ident) => {
        impl std::ops::$tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl std::ops::$tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl std::ops::$tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
    };
}

forward_jet_binop!(Add, add);
forward_jet_binop!(Sub, sub);
forward_jet_binop!(Mul, mul);
forward_jet_binop!(Div, div);

macro_rules! scalar_binop {
    ($jet:ty) => {
        impl std::ops::Add<f64> for $jet {
            type Output = Jet;
            fn add(self, rhs: f64) -> Jet {
                let mut coeffs = self.coeffs.clone();
                coeffs[0] += rhs;
                Jet { coeffs }
            }
        }
        impl std::ops::Add<$jet> for f64 {
            type Output = Jet;
            fn add(self, rhs: $jet) -> Jet {
                rhs + self
            }
        }
        impl std::ops::Sub<f64> for $jet {
            type Output = Jet;
            fn sub(self, rhs: f64) -> Jet {
                let mut coeffs = self.coeffs.clone();
                coeffs[0] -= rhs;
                Jet { coeffs }
            }
        }
        impl std::ops::Sub<$jet> for f64 {
            type Output = Jet;
            fn sub(self, rhs: $jet) -> Jet {
                let head = self - rhs.coeffs[0];
                let mut coeffs: Vec<f64> = rhs.coeffs.iter().map(|v| -v).collect();
                coeffs[0] = head;
                Jet { coeffs }
            }
        }
        impl std::ops::Mul<f64> for $jet {
            type Output = Jet;
            fn mul(self, rhs: f64) -> Jet {
                Jet { coeffs: self.coeffs.iter().map(|v| v * rhs).collect() }
            }
        }
        impl std::ops::Mul<$jet> for f64 {
            type Output = Jet;
            fn mul(self, rhs: $jet) -> Jet {
                rhs * self
            }
        }
        impl std::ops::Div<f64> for $jet {
            type Output = Jet;
            fn div(self, rhs: f64) -> Jet {
                Jet { coeffs: self.coeffs.iter().map(|v| v / rhs).collect() }
            }
        }
        impl std::ops::Div<$jet> for f64 {
            type Output = Jet;
            fn div(self, rhs: $jet) -> Jet {
                Jet::constant_like(&rhs, self) / rhs
            }
        }
    };
}

scalar_binop!(Jet);
scalar_binop!(&Jet);

/// Dot product of equal-length jet slices.
pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    assert_eq!(a.len(), b.len());
    let mut acc = &a[0] * &b[0];
    for (ai, bi) in a.iter().zip(b).skip(1) {
        acc = acc + ai * bi;
    }
    acc
}

/// Lift a plain state vector to jets of the given depth, seeding coordinate
/// `direction` in every direction so that [`Jet::derivative`] of the result
/// of a scalar function reads off ∂/∂x_j up to order `depth`.
pub fn lift(x: &[f64], direction: usize, depth: u32) -> Result<Vec<Jet>> {
    if direction >= x.len() {
        return Err(Error::Index { index: direction, len: x.len() });
    }
    if depth == 0 {
        return Err(Error::Precondition("lift requires depth >= 1".into()));
    }
    Ok(x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut j = Jet::constant(v, depth);
            if i == direction {
                for level in 0..depth {
                    j.coeffs[1usize << level] = 1.0;
                }
            }
            j
        })
        .collect())
}

/// One forward pass per coordinate: evaluates `f` with a fresh direction
/// seeded on each input in turn and returns the function value together with
/// the gradient, all at the depth of the inputs. Nesting is what makes the
/// barrier chain work: the returned jets thread through outer passes.
///
/// Evaluation failures inside `f` come back tagged with the coordinate
/// index of the pass that hit them.
pub fn value_and_gradient<F>(f: F, x: &[Jet]) -> Result<(Jet, Vec<Jet>)>
where
    F: Fn(&[Jet]) -> Result<Jet>,
{
    assert!(!x.is_empty(), "gradient of a zero-dimensional input");
    let mut value = None;
    let mut grads = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let lifted: Vec<Jet> = x
            .iter()
            .enumerate()
            .map(|(i, xi)| if i == j { xi.seed_top() } else { xi.promote() })
            .collect();
        let out = f(&lifted)
            .map_err(|e| Error::Gradient { coordinate: j, source: Box::new(e) })?;
        if value.is_none() {
            value = Some(out.lower_half());
        }
        grads.push(out.upper_half());
    }
    Ok((value.expect("at least one coordinate"), grads))
}

/// Gradient of a scalar field at a plain state. `depth` is the nesting level
/// the pass runs at (≥ 1); plain inputs carry no lower-level derivatives, so
/// any depth gives the same numbers; deeper values exercise the nesting.
pub fn gradient<F>(f: F, x: &[f64], depth: u32) -> Result<Vec<f64>>
where
    F: Fn(&[Jet]) -> Result<Jet>,
{
    if depth == 0 {
        return Err(Error::Precondition("gradient requires depth >= 1".into()));
    }
    let base: Vec<Jet> = x.iter().map(|&v| Jet::constant(v, depth - 1)).collect();
    let (_, g) = value_and_gradient(f, &base)?;
    Ok(g.iter().map(|j| j.value()).collect())
}
