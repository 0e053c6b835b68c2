//! Body forces f(x, t).

use std::fmt;
use std::str::FromStr;

/// A body force evaluated pointwise.
pub trait Forcing: Send + Sync {
    fn eval(&self, x: [f64; 3], t: f64) -> [f64; 3];

    /// True when the force vanishes identically.
    fn is_zero(&self) -> bool {
        false
    }
}

impl<F> Forcing for F
where
    F: Fn([f64; 3], f64) -> [f64; 3] + Send + Sync,
{
    fn eval(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        self(x, t)
    }
}

/// Named forces available from configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinForcing {
    /// Counter-clockwise rotational force about the z-axis for the
    /// unit-radius cylinder, ramped in over t ∈ [0, 1].
    CylinderRotational,
    /// The same force recentred on the unit box: x̂ = 2x − 1, ŷ = 2y − 1,
    /// clamped to zero outside the inscribed circle.
    BoxRotational,
    Zero,
}

impl BuiltinForcing {
    pub const NAMES: [&'static str; 3] = ["paper_rotational", "box_rotational", "zero"];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinForcing::CylinderRotational => "paper_rotational",
            BuiltinForcing::BoxRotational => "box_rotational",
            BuiltinForcing::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownForcing(pub String);

impl fmt::Display for UnknownForcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown forcing '{}' (expected one of {})",
            self.0,
            BuiltinForcing::NAMES.join(", ")
        )
    }
}

impl std::error::Error for UnknownForcing {}

impl FromStr for BuiltinForcing {
    type Err = UnknownForcing;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper_rotational" => Ok(BuiltinForcing::CylinderRotational),
            "box_rotational" => Ok(BuiltinForcing::BoxRotational),
            "zero" => Ok(BuiltinForcing::Zero),
            other => Err(UnknownForcing(other.to_string())),
        }
    }
}

impl Forcing for BuiltinForcing {
    fn eval(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let ramp = t.min(1.0);
        match self {
            BuiltinForcing::CylinderRotational => {
                let (px, py) = (x[0], x[1]);
                let s = 1.0 - px * px - py * py;
                [ramp * (-4.0 * py * s), ramp * (4.0 * px * s), 0.0]
            }
            BuiltinForcing::BoxRotational => {
                let (px, py) = (2.0 * x[0] - 1.0, 2.0 * x[1] - 1.0);
                let s = (1.0 - px * px - py * py).max(0.0);
                [ramp * (-4.0 * py * s), ramp * (4.0 * px * s), 0.0]
            }
            BuiltinForcing::Zero => [0.0; 3],
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, BuiltinForcing::Zero)
    }
}

/// Evaluates a named force; fails on unknown names.
pub fn builtin_forcing(name: &str, x: [f64; 3], t: f64) -> Result<[f64; 3], UnknownForcing> {
    Ok(name.parse::<BuiltinForcing>()?.eval(x, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotational_vanishes_on_outer_cylinder() {
        for k in 0..12 {
            let th = k as f64 * 0.5;
            let f = builtin_forcing("paper_rotational", [th.cos(), th.sin(), 0.3], 4.0).unwrap();
            assert!(f.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn ramp_starts_at_zero_and_saturates() {
        let x = [0.3, 0.2, 0.5];
        let f0 = builtin_forcing("paper_rotational", x, 0.0).unwrap();
        assert_eq!(f0, [0.0; 3]);
        let half = BuiltinForcing::CylinderRotational.eval(x, 0.5);
        let one = BuiltinForcing::CylinderRotational.eval(x, 1.0);
        let two = BuiltinForcing::CylinderRotational.eval(x, 2.0);
        assert_eq!(one, two);
        assert!((half[0] - 0.5 * one[0]).abs() < 1e-15 && (half[1] - 0.5 * one[1]).abs() < 1e-15);
    }

    #[test]
    fn box_rotational_centre_and_corners() {
        assert_eq!(BuiltinForcing::BoxRotational.eval([0.5, 0.5, 0.7], 3.0), [0.0; 3]);
        // corner lies outside the inscribed circle
        assert_eq!(BuiltinForcing::BoxRotational.eval([1.0, 0.0, 0.2], 3.0), [0.0, 0.0, 0.0]);
        let f = BuiltinForcing::BoxRotational.eval([0.75, 0.5, 0.0], 1.0);
        // x̂ = 0.5, ŷ = 0: (0, 4·0.5·0.75, 0)
        assert!(f[0].abs() < 1e-15 && (f[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_name() {
        assert!(builtin_forcing("gravity", [0.0; 3], 0.0).is_err());
    }
}
