//! Reaction registry, initial profiles and external sources.

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Globally Lipschitz reaction term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Reaction {
    #[default]
    Zero,
    Linear { rate: f64 },
    /// `rate · u⁺ / (half_saturation + u⁺)`.
    Monod { rate: f64, half_saturation: f64 },
    Constant { value: f64 },
}

impl Reaction {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Reaction::Zero => 0.0,
            Reaction::Linear { rate } => rate * u,
            Reaction::Monod { rate, half_saturation } => {
                let p = u.max(0.0);
                rate * p / (half_saturation + p)
            }
            Reaction::Constant { value } => value,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Reaction::Zero | Reaction::Constant { .. } => 0.0,
            Reaction::Linear { rate } => rate.abs(),
            Reaction::Monod { rate, half_saturation } => rate.abs() / half_saturation,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: f64, name: &str| if v.is_finite() { Ok(()) } else { Err(format!("{name} must be finite")) };
        match *self {
            Reaction::Zero => Ok(()),
            Reaction::Linear { rate } => finite(rate, "rate"),
            Reaction::Constant { value } => finite(value, "value"),
            Reaction::Monod { rate, half_saturation } => {
                finite(rate, "rate")?;
                if half_saturation > 0.0 && half_saturation.is_finite() {
                    Ok(())
                } else {
                    Err("half_saturation must be positive".into())
                }
            }
        }
    }
}

/// Bulk reaction `f` and surface reaction `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KineticsSpec {
    #[serde(default)]
    pub f: Reaction,
    #[serde(default)]
    pub g: Reaction,
}

impl KineticsSpec {
    pub fn lipschitz(&self) -> f64 {
        self.f.lipschitz().max(self.g.lipschitz())
    }
}

/// Macroscopic initial profile `U0(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant { value: f64 },
    /// `value + gradient · x`.
    Affine { value: f64, gradient: Point },
    /// `value + amplitude · cos(πx₁) cos(πx₂)`.
    Cosine { value: f64, amplitude: f64 },
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile::Affine { value: 1.0, gradient: [0.5, 0.0] }
    }
}

impl InitialProfile {
    pub fn eval(&self, x: Point) -> f64 {
        match *self {
            InitialProfile::Constant { value } => value,
            InitialProfile::Affine { value, gradient } => value + gradient[0] * x[0] + gradient[1] * x[1],
            InitialProfile::Cosine { value, amplitude } => {
                use std::f64::consts::PI;
                value + amplitude * (PI * x[0]).cos() * (PI * x[1]).cos()
            }
        }
    }
}

/// Additional prescribed sources, used for manufactured solutions.
pub trait ExternalSource: Send + Sync + std::fmt::Debug {
    /// Added to `f` inside the domain (before the `J` weight).
    fn bulk(&self, t: f64, x: Point) -> f64;
    /// Added to `g` on `Γ`; `normal` is the discrete outer normal of the fluid domain.
    fn surface(&self, t: f64, x: Point, normal: Point) -> f64;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn registry_values() {
        assert_eq!(Reaction::Linear { rate: -2.0 }.eval(3.0), -6.0);
        let m = Reaction::Monod { rate: 1.0, half_saturation: 1.0 };
        assert_eq!(m.eval(1.0), 0.5);
        assert_eq!(m.eval(-4.0), 0.0);
        assert_eq!(m.lipschitz(), 1.0);
        assert_eq!(Reaction::Constant { value: 0.7 }.eval(123.0), 0.7);
        assert!(Reaction::Monod { rate: 1.0, half_saturation: 0.0 }.validate().is_err());
        assert_eq!(InitialProfile::default().eval([2.0, 7.0]), 2.0);
    }

    proptest! {
        #[test]
        fn stored_lipschitz_constant_holds(
            rate in -5.0f64..5.0, k in 0.05f64..5.0, a in -10.0f64..10.0, b in -10.0f64..10.0
        ) {
            for r in [Reaction::Linear { rate }, Reaction::Monod { rate, half_saturation: k }, Reaction::Constant { value: rate }] {
                let lhs = (r.eval(a) - r.eval(b)).abs();
                prop_assert!(lhs <= r.lipschitz() * (a - b).abs() * (1.0 + 1e-12) + 1e-14);
            }
        }
    }
}
