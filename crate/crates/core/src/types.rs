//! Shared value types: gauge pressure, uncertainty, pose and seeds.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// kPa per psi.
pub const KPA_PER_PSI: f64 = 6.89476;

/// Highest pressure the sleeve holds; the heat seals tear above it.
pub const RUPTURE_PSI: f64 = 3.5;

/// Gauge pressure in psi.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Pressure(f64);

impl Pressure {
    pub const ZERO: Pressure = Pressure(0.0);

    /// Panics on NaN or infinity; use [`Pressure::try_psi`] for untrusted input.
    pub fn psi(value: f64) -> Self {
        assert!(value.is_finite(), "pressure must be finite, got {value}");
        Pressure(value)
    }

    pub fn try_psi(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Pressure(value))
        } else {
            Err(Error::NonFinite { what: "pressure" })
        }
    }

    pub fn from_kpa(kpa: f64) -> Result<Self> {
        Self::try_psi(kpa_to_psi(kpa))
    }

    pub fn as_psi(self) -> f64 {
        self.0
    }

    pub fn as_kpa(self) -> f64 {
        psi_to_kpa(self)
    }

    /// True when the value lies above the sleeve's rupture limit.
    pub fn is_rupture(self) -> bool {
        self.0 > RUPTURE_PSI
    }

    /// Checks `self` lies in the display's operating range `(0, 3.5]`.
    pub fn check_operating(self) -> Result<Self> {
        if self.0 > 0.0 && self.0 <= RUPTURE_PSI {
            Ok(self)
        } else {
            Err(Error::OutOfRange {
                what: "pressure",
                value: self.0,
                min: 0.0,
                max: RUPTURE_PSI,
            })
        }
    }
}

impl TryFrom<f64> for Pressure {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Pressure::try_psi(value)
    }
}

impl From<Pressure> for f64 {
    fn from(p: Pressure) -> f64 {
        p.0
    }
}

impl fmt::Display for Pressure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} psi", self.0)
    }
}

pub fn psi_to_kpa(p: Pressure) -> f64 {
    p.0 * KPA_PER_PSI
}

pub fn kpa_to_psi(kpa: f64) -> f64 {
    kpa / KPA_PER_PSI
}

/// Learner uncertainty as a fraction in `[0, 1]`; shown to people as a percent.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct UncertaintyLevel(f64);

impl UncertaintyLevel {
    pub const CERTAIN: UncertaintyLevel = UncertaintyLevel(0.0);
    pub const MAX: UncertaintyLevel = UncertaintyLevel(1.0);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn percent(self) -> f64 {
        self.0 * 100.0
    }
}

impl TryFrom<f64> for UncertaintyLevel {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        clamp_uncertainty(value)
    }
}

impl From<UncertaintyLevel> for f64 {
    fn from(u: UncertaintyLevel) -> f64 {
        u.0
    }
}

/// Clamps `x` into `[0, 1]`. NaN is rejected; infinities clamp.
pub fn clamp_uncertainty(x: f64) -> Result<UncertaintyLevel> {
    if x.is_nan() {
        return Err(Error::NonFinite { what: "uncertainty" });
    }
    Ok(UncertaintyLevel(x.clamp(0.0, 1.0)))
}

/// End-effector pose in the simulation plane.
///
/// `path_parameter` is the arc-length fraction along the task path. The
/// learner sees `(x, y, s)` as its state features.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 2],
    pub path_parameter: f64,
}

impl Pose {
    pub fn new(position: [f64; 2], path_parameter: f64) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { what: "pose position" });
        }
        if !(0.0..=1.0).contains(&path_parameter) {
            return Err(Error::OutOfRange {
                what: "path parameter",
                value: path_parameter,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(Pose {
            position,
            path_parameter,
        })
    }

    pub fn features(&self) -> [f64; 3] {
        [self.position[0], self.position[1], self.path_parameter]
    }
}

/// Root of every pseudo-random stream in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Child seed for an independent sub-stream, keyed by `label`.
    ///
    /// Uses the splitmix64 finalizer so nearby labels give unrelated seeds.
    pub fn derive(self, label: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add(label.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Stream labels, so sub-systems never share a stream by accident.
pub mod streams {
    pub const SCHEDULE: u64 = 1;
    pub const RESPONSES: u64 = 2;
    pub const SENSOR: u64 = 3;
    pub const ENSEMBLE: u64 = 4;
    pub const DEMOS: u64 = 5;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn psi_to_kpa_matches_published_conversions() {
        assert!((psi_to_kpa(Pressure::psi(2.0)) - 13.79).abs() <= 0.005);
        assert_eq!(psi_to_kpa(Pressure::psi(0.0)), 0.0);
        assert!((psi_to_kpa(Pressure::psi(3.5)) - 24.13).abs() <= 0.005);
    }

    #[test]
    fn clamp_uncertainty_examples() {
        assert_eq!(clamp_uncertainty(0.5).unwrap().value(), 0.5);
        assert_eq!(clamp_uncertainty(-0.2).unwrap().value(), 0.0);
        assert_eq!(clamp_uncertainty(1.7).unwrap().value(), 1.0);
        assert!(clamp_uncertainty(f64::NAN).is_err());
    }

    #[test]
    fn non_finite_pressure_rejected() {
        assert!(Pressure::try_psi(f64::NAN).is_err());
        assert!(Pressure::try_psi(f64::INFINITY).is_err());
        assert!(serde_json::from_str::<Pressure>("1e999").is_err());
    }

    #[test]
    fn rupture_flag() {
        assert!(!Pressure::psi(3.5).is_rupture());
        assert!(Pressure::psi(3.5001).is_rupture());
        assert!(Pressure::psi(0.0).check_operating().is_err());
        assert!(Pressure::psi(3.6).check_operating().is_err());
        assert!(Pressure::psi(3.5).check_operating().is_ok());
    }

    #[test]
    fn pose_rejects_out_of_range_parameter() {
        assert!(Pose::new([0.0, 0.0], 1.2).is_err());
        assert!(Pose::new([f64::NAN, 0.0], 0.2).is_err());
        assert_eq!(Pose::new([1.0, 2.0], 0.5).unwrap().features(), [1.0, 2.0, 0.5]);
    }

    #[test]
    fn seeded_streams_are_reproducible() {
        let mut a = Seed(42).rng();
        let mut b = Seed(42).rng();
        for _ in 0..10_000 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let root = Seed(7);
        assert_ne!(root.derive(0), root.derive(1));
        assert_ne!(root.derive(0), root);
        assert_eq!(root.derive(3), Seed(7).derive(3));
    }

    proptest! {
        #[test]
        fn kpa_round_trip(p in -1.0e6f64..1.0e6) {
            let back = kpa_to_psi(psi_to_kpa(Pressure::psi(p)));
            prop_assert!((back - p).abs() <= 1e-9 * p.abs().max(1.0));
        }

        #[test]
        fn clamp_stays_in_unit_interval(x in proptest::num::f64::ANY) {
            if let Ok(u) = clamp_uncertainty(x) {
                prop_assert!((0.0..=1.0).contains(&u.value()));
            } else {
                prop_assert!(x.is_nan());
            }
        }
    }
}
