//! Unit tags carried by parameter sets so quantities from different
//! conventions are never combined silently. Internally ℏ = 1.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    /// Dimensionless units, typically lengths in multiples of σ.
    #[default]
    Natural,
    Meter,
    Centimeter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Natural,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Units {
    #[serde(default)]
    pub length: LengthUnit,
    #[serde(default)]
    pub time: TimeUnit,
}

impl Units {
    pub const NATURAL: Units = Units {
        length: LengthUnit::Natural,
        time: TimeUnit::Natural,
    };

    pub const CGS: Units = Units {
        length: LengthUnit::Centimeter,
        time: TimeUnit::Second,
    };
}

impl std::fmt::Display for Units {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}/{:?}", self.length, self.time)
    }
}
