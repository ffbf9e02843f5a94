//! The six canonical anatomical regions of a chest CT.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A canonical chest region. Discriminants are the 1-based region ids used in
/// manifests, prompts and labeled report files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Region {
    Lung = 1,
    LargeAirways = 2,
    Mediastinum = 3,
    HeartGreatVessels = 4,
    Osseous = 5,
    UpperAbdomen = 6,
}

impl Region {
    pub const COUNT: usize = 6;

    /// All regions in canonical order.
    pub const ALL: [Region; 6] = [
        Region::Lung,
        Region::LargeAirways,
        Region::Mediastinum,
        Region::HeartGreatVessels,
        Region::Osseous,
        Region::UpperAbdomen,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    /// Zero-based position in canonical order.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_id(id: u8) -> Option<Region> {
        match id {
            1..=6 => Some(Self::ALL[id as usize - 1]),
            _ => None,
        }
    }

    /// Identifier used for file names and lesion-name prefixes.
    pub fn slug(self) -> &'static str {
        match self {
            Region::Lung => "lung",
            Region::LargeAirways => "large_airways",
            Region::Mediastinum => "mediastinum",
            Region::HeartGreatVessels => "heart_great_vessels",
            Region::Osseous => "osseous",
            Region::UpperAbdomen => "upper_abdomen",
        }
    }

    /// Human-readable name used in prompts and attribute text.
    pub fn name(self) -> &'static str {
        match self {
            Region::Lung => "lung",
            Region::LargeAirways => "large airways",
            Region::Mediastinum => "mediastinum",
            Region::HeartGreatVessels => "heart and great vessels",
            Region::Osseous => "osseous structures",
            Region::UpperAbdomen => "upper abdomen",
        }
    }

    /// Section header used when merging region reports.
    pub fn header(self) -> &'static str {
        match self {
            Region::Lung => "Lungs:",
            Region::LargeAirways => "Large airways:",
            Region::Mediastinum => "Mediastinum:",
            Region::HeartGreatVessels => "Heart and great vessels:",
            Region::Osseous => "Osseous structures:",
            Region::UpperAbdomen => "Upper abdomen:",
        }
    }
}

impl From<Region> for u8 {
    fn from(r: Region) -> u8 {
        r.id()
    }
}

impl TryFrom<u8> for Region {
    type Error = String;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Region::from_id(id).ok_or_else(|| format!("region id must be 1..=6, got {id}"))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
