//! The seven land-cover classes and their fixed index assignment.

use core::fmt;
use core::str::FromStr;

use alloc::format;

use crate::error::Error;

pub const NUM_CLASSES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum LandCover {
    Urban = 0,
    Agriculture = 1,
    Rangeland = 2,
    Forest = 3,
    Water = 4,
    Barren = 5,
    Unknown = 6,
}

impl LandCover {
    pub const ALL: [LandCover; NUM_CLASSES] = [
        LandCover::Urban,
        LandCover::Agriculture,
        LandCover::Rangeland,
        LandCover::Forest,
        LandCover::Water,
        LandCover::Barren,
        LandCover::Unknown,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Lower-case identifier used in config files and mix specs.
    pub const fn key(self) -> &'static str {
        match self {
            LandCover::Urban => "urban",
            LandCover::Agriculture => "agriculture",
            LandCover::Rangeland => "rangeland",
            LandCover::Forest => "forest",
            LandCover::Water => "water",
            LandCover::Barren => "barren",
            LandCover::Unknown => "unknown",
        }
    }

    /// Display name used in reports.
    pub const fn title(self) -> &'static str {
        match self {
            LandCover::Urban => "Urban",
            LandCover::Agriculture => "Agriculture",
            LandCover::Rangeland => "Rangeland",
            LandCover::Forest => "Forest",
            LandCover::Water => "Water",
            LandCover::Barren => "Barren",
            LandCover::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for LandCover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for LandCover {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let key = match lower.as_str() {
            "agricultural" => "agriculture",
            "barren_land" | "barrenland" => "barren",
            other => other,
        };
        LandCover::ALL
            .into_iter()
            .find(|c| c.key() == key)
            .ok_or_else(|| Error::Parameter(format!("unknown land-cover class `{s}`")))
    }
}
