//! Activation functions, their derivatives, and the scalar coefficient
//! `nu_f(s)` that scales `x̃ x̃ᵀ` in a single-neuron metric.
//!
//! `s` is always the pre-activation `wᵀx̃`, so the forward pass and the metric
//! share one dot product.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tanh,
    Sigm,
    /// PReLU smoothed by a log-sum-exp with temperature `omega`.
    ReluOmega,
    Elu,
}

/// An activation family plus the hyperparameters its coefficient depends on.
///
/// `iota` and `omega` are read only by [`Family::ReluOmega`], `alpha` only by
/// [`Family::Elu`]. `sigma` is the output-noise scale of the Gaussian
/// families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationKind {
    pub family: Family,
    #[serde(default)]
    pub iota: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_one")]
    pub sigma: f64,
    #[serde(default = "default_one")]
    pub alpha: f64,
}

fn default_omega() -> f64 {
    0.1
}

fn default_one() -> f64 {
    1.0
}

impl ActivationKind {
    pub const DEFAULT_OMEGA: f64 = 0.1;

    fn with_family(family: Family) -> Self {
        ActivationKind {
            family,
            iota: 0.0,
            omega: Self::DEFAULT_OMEGA,
            sigma: 1.0,
            alpha: 1.0,
        }
    }

    pub fn tanh() -> Self {
        Self::with_family(Family::Tanh)
    }

    pub fn sigm() -> Self {
        Self::with_family(Family::Sigm)
    }

    /// ReLU (`iota = 0`, `sigma = 1`) smoothed with the default `omega`.
    pub fn relu() -> Self {
        Self::with_family(Family::ReluOmega)
    }

    pub fn relu_omega(iota: f64, omega: f64, sigma: f64) -> Self {
        let k = ActivationKind {
            iota,
            omega,
            sigma,
            ..Self::with_family(Family::ReluOmega)
        };
        k.validate().expect("invalid relu_omega parameters");
        k
    }

    pub fn elu(alpha: f64, sigma: f64) -> Self {
        let k = ActivationKind {
            alpha,
            sigma,
            ..Self::with_family(Family::Elu)
        };
        k.validate().expect("invalid elu parameters");
        k
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.iota) {
            return Err(format!("iota must lie in [0,1), got {}", self.iota));
        }
        if !(self.omega > 0.0) {
            return Err(format!("omega must be positive, got {}", self.omega));
        }
        if !(self.sigma > 0.0) {
            return Err(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.alpha > 0.0) {
            return Err(format!("alpha must be positive, got {}", self.alpha));
        }
        Ok(())
    }

    /// True for the families whose stochastic output is Bernoulli.
    pub fn is_bernoulli(&self) -> bool {
        matches!(self.family, Family::Tanh | Family::Sigm)
    }

    /// `f(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.family {
            Family::Tanh => t.tanh(),
            Family::Sigm => sigm(t),
            Family::ReluOmega => relu_omega(t, self.iota, self.omega),
            Family::Elu => {
                if t >= 0.0 {
                    t
                } else {
                    self.alpha * t.exp_m1()
                }
            }
        }
    }

    /// `f'(t)`. The ELU derivative at 0 is the right limit, 1.
    pub fn deriv(&self, t: f64) -> f64 {
        match self.family {
            Family::Tanh => {
                let th = t.tanh();
                1.0 - th * th
            }
            Family::Sigm => {
                let s = sigm(t);
                s * (1.0 - s)
            }
            Family::ReluOmega => {
                let iota = self.iota;
                iota + (1.0 - iota) * sigm((1.0 - iota) * t / self.omega)
            }
            Family::Elu => {
                if t >= 0.0 {
                    1.0
                } else {
                    self.alpha * t.exp()
                }
            }
        }
    }

    /// Metric coefficient at pre-activation `s`.
    pub fn nu(&self, s: f64) -> NuCoefficient {
        let v = match self.family {
            Family::Tanh => {
                let th = s.tanh();
                1.0 - th * th
            }
            Family::Sigm => {
                let p = sigm(s);
                p * (1.0 - p)
            }
            Family::ReluOmega => {
                let iota = self.iota;
                let g = iota + (1.0 - iota) * sigm((1.0 - iota) / self.omega * s);
                g * g / (self.sigma * self.sigma)
            }
            Family::Elu => {
                let s2 = self.sigma * self.sigma;
                if s >= 0.0 {
                    1.0 / s2
                } else {
                    self.alpha * self.alpha * (2.0 * s).exp() / s2
                }
            }
        };
        NuCoefficient(v.max(0.0))
    }

    /// Activation used by the training forward pass: the exact (unsmoothed)
    /// PReLU for `ReluOmega`, `eval` otherwise.
    pub fn forward(&self, t: f64) -> f64 {
        match self.family {
            Family::ReluOmega => {
                if t >= 0.0 {
                    t
                } else {
                    self.iota * t
                }
            }
            _ => self.eval(t),
        }
    }

    /// Derivative of [`ActivationKind::forward`] (0 at the relu kink).
    pub fn forward_deriv(&self, t: f64) -> f64 {
        match self.family {
            Family::ReluOmega => {
                if t > 0.0 {
                    1.0
                } else {
                    self.iota
                }
            }
            _ => self.deriv(t),
        }
    }
}

/// Non-negative coefficient `nu_f(w, x)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NuCoefficient(f64);

impl NuCoefficient {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Logistic sigmoid, evaluated without overflow for large `|t|`.
pub fn sigm(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `omega * ln(exp(iota t / omega) + exp(t / omega))` via max subtraction.
pub fn relu_omega(t: f64, iota: f64, omega: f64) -> f64 {
    let hi = t.max(iota * t);
    let gap = (1.0 - iota) * t.abs();
    hi + omega * (-gap / omega).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_kinds() -> Vec<ActivationKind> {
        vec![
            ActivationKind::tanh(),
            ActivationKind::sigm(),
            ActivationKind::relu(),
            ActivationKind::relu_omega(0.25, 0.5, 1.5),
            ActivationKind::elu(1.0, 1.0),
            ActivationKind::elu(0.7, 2.0),
        ]
    }

    #[test]
    fn eval_fixed_points() {
        assert_eq!(ActivationKind::tanh().eval(0.0), 0.0);
        assert_eq!(ActivationKind::sigm().eval(0.0), 0.5);
        let r = ActivationKind::relu_omega(0.0, 1e-3, 1.0);
        assert!((r.eval(3.0) - 3.0).abs() <= 1e-3 * 2f64.ln());
        let neg = r.eval(-3.0);
        assert!((0.0..=1e-3 * 2f64.ln()).contains(&neg));
    }

    #[test]
    fn relu_omega_finite_for_huge_inputs() {
        let r = ActivationKind::relu();
        assert_eq!(r.eval(1e8), 1e8);
        assert!(r.eval(-1e8).is_finite());
        assert!(r.eval(-1e8) >= 0.0);
    }

    #[test]
    fn nu_fixed_points() {
        assert_eq!(ActivationKind::tanh().nu(0.0).value(), 1.0);
        assert_eq!(ActivationKind::sigm().nu(0.0).value(), 0.25);
        let elu = ActivationKind::elu(1.0, 1.0);
        assert_eq!(elu.nu(0.0).value(), 1.0);
        assert!((elu.nu(-1e-12).value() - 1.0).abs() < 1e-11);
        // relu with iota=0, sigma=1 reduces to sigm(s/omega)^2
        let r = ActivationKind::relu();
        for s in [-0.3, 0.0, 0.05, 1.0] {
            let expect = sigm(s / r.omega).powi(2);
            assert!((r.nu(s).value() - expect).abs() < 1e-15);
        }
        assert!(r.nu(1.0).value() > 0.99);
        assert!(r.nu(-1.0).value() < 0.01);
    }

    #[test]
    fn deriv_fixed_points() {
        assert_eq!(ActivationKind::tanh().deriv(0.0), 1.0);
        assert!((ActivationKind::elu(1.0, 1.0).deriv(-1.0) - (-1f64).exp()).abs() < 1e-16);
        assert_eq!(ActivationKind::elu(1.0, 1.0).deriv(0.0), 1.0);
    }

    #[test]
    fn deriv_matches_central_differences() {
        let h = 1e-6;
        for k in all_kinds() {
            for i in 0..200 {
                let t = -5.0 + 10.0 * (i as f64 + 0.37) / 200.0;
                if k.family == Family::Elu && t.abs() < 2.0 * h {
                    continue;
                }
                let fd = (k.eval(t + h) - k.eval(t - h)) / (2.0 * h);
                assert!((fd - k.deriv(t)).abs() <= 1e-6, "{k:?} t={t}");
            }
        }
    }

    #[test]
    fn nu_bounds() {
        for k in all_kinds() {
            for i in 0..400 {
                let s = -20.0 + 40.0 * i as f64 / 400.0;
                let v = k.nu(s).value();
                assert!(v >= 0.0);
                match k.family {
                    Family::Tanh => assert!(v <= 1.0),
                    Family::Sigm => assert!(v <= 0.25),
                    Family::ReluOmega => assert!(v <= 1.0 / (k.sigma * k.sigma) + 1e-15),
                    Family::Elu if k.alpha <= 1.0 => assert!(v <= 1.0 / (k.sigma * k.sigma)),
                    Family::Elu => {}
                }
            }
        }
    }

    #[test]
    fn relu_omega_uniform_gap_bound() {
        for omega in [1.0, 0.1, 0.01] {
            let k = ActivationKind::relu_omega(0.0, omega, 1.0);
            let mut sup: f64 = 0.0;
            for i in 0..=20_000 {
                let t = -10.0 + 20.0 * i as f64 / 20_000.0;
                sup = sup.max((k.eval(t) - t.max(0.0)).abs());
            }
            assert!(sup <= omega * 2f64.ln() + 1e-15, "omega={omega} sup={sup}");
        }
    }

    #[test]
    fn relu_nu_limits() {
        let k = ActivationKind::relu_omega(0.0, 0.1, 1.0);
        assert!(k.nu(-50.0 * k.omega).value() < 1e-6);
        assert!((k.nu(50.0 * k.omega).value() - 1.0).abs() < 1e-6);
        let k = ActivationKind::relu_omega(0.0, 0.1, 2.0);
        assert!((k.nu(50.0 * k.omega).value() - 0.25).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn nu_equals_derivative_identity(s in -30.0f64..30.0) {
            // Bernoulli families: nu == f'; Gaussian families: nu == f'^2 / sigma^2.
            let t = ActivationKind::tanh();
            prop_assert_eq!(t.nu(s).value(), t.deriv(s));
            let g = ActivationKind::sigm();
            prop_assert_eq!(g.nu(s).value(), g.deriv(s));
            for k in [ActivationKind::relu(), ActivationKind::relu_omega(0.3, 0.7, 1.3), ActivationKind::elu(0.8, 1.7)] {
                let expect = k.deriv(s).powi(2) / (k.sigma * k.sigma);
                prop_assert!((k.nu(s).value() - expect).abs() <= 1e-12);
            }
        }

        #[test]
        fn relu_nu_monotone(a in -10.0f64..10.0, d in 0.0f64..5.0) {
            let k = ActivationKind::relu();
            prop_assert!(k.nu(a).value() <= k.nu(a + d).value());
        }
    }
}
