use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Feature / landmark class. All classes except `Pole` are road-marking chains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkingClass {
    CurbLine,
    #[serde(rename = "dashed_line_12cm")]
    DashedLine12cm,
    #[serde(rename = "dashed_line_25cm")]
    DashedLine25cm,
    #[serde(rename = "line_12cm")]
    Line12cm,
    #[serde(rename = "line_25cm")]
    Line25cm,
    ArrowLine,
    StopLine,
    PedestrianRoadLine,
    ZebraLine,
    BicycleRoadLine,
    Pole,
}

impl MarkingClass {
    pub const ALL: [MarkingClass; 11] = [
        MarkingClass::CurbLine,
        MarkingClass::DashedLine12cm,
        MarkingClass::Pole,
        MarkingClass::DashedLine25cm,
        MarkingClass::Line12cm,
        MarkingClass::ArrowLine,
        MarkingClass::Line25cm,
        MarkingClass::StopLine,
        MarkingClass::PedestrianRoadLine,
        MarkingClass::ZebraLine,
        MarkingClass::BicycleRoadLine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MarkingClass::CurbLine => "curb_line",
            MarkingClass::DashedLine12cm => "dashed_line_12cm",
            MarkingClass::DashedLine25cm => "dashed_line_25cm",
            MarkingClass::Line12cm => "line_12cm",
            MarkingClass::Line25cm => "line_25cm",
            MarkingClass::ArrowLine => "arrow_line",
            MarkingClass::StopLine => "stop_line",
            MarkingClass::PedestrianRoadLine => "pedestrian_road_line",
            MarkingClass::ZebraLine => "zebra_line",
            MarkingClass::BicycleRoadLine => "bicycle_road_line",
            MarkingClass::Pole => "pole",
        }
    }

    pub fn is_pole(self) -> bool {
        self == MarkingClass::Pole
    }
}

impl fmt::Display for MarkingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown marking class `{0}`")]
pub struct UnknownClass(pub String);

impl FromStr for MarkingClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MarkingClass::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownClass(s.to_owned()))
    }
}
