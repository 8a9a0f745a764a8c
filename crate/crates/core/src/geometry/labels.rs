use std::fmt;
use std::str::FromStr;

use super::GeometryError;

/// Hand-placed in-plane rotation band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RotationLabel {
    LeftWide,
    LeftShallow,
    Neutral,
    RightShallow,
    RightWide,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Center,
    Right,
}

impl RotationLabel {
    /// Table order: left wide first, right wide last.
    pub const ALL: [RotationLabel; 5] = [
        RotationLabel::LeftWide,
        RotationLabel::LeftShallow,
        RotationLabel::Neutral,
        RotationLabel::RightShallow,
        RotationLabel::RightWide,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RotationLabel::LeftWide => "left_wide",
            RotationLabel::LeftShallow => "left_shallow",
            RotationLabel::Neutral => "neutral",
            RotationLabel::RightShallow => "right_shallow",
            RotationLabel::RightWide => "right_wide",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            RotationLabel::LeftWide => "Left Wide",
            RotationLabel::LeftShallow => "Left Shallow",
            RotationLabel::Neutral => "Neutral",
            RotationLabel::RightShallow => "Right Shallow",
            RotationLabel::RightWide => "Right Wide",
        }
    }

    /// Left rotations carry positive angles, right rotations negative.
    pub fn side(self) -> Side {
        match self {
            RotationLabel::LeftWide | RotationLabel::LeftShallow => Side::Left,
            RotationLabel::Neutral => Side::Center,
            RotationLabel::RightShallow | RotationLabel::RightWide => Side::Right,
        }
    }

    pub fn sign(self) -> f64 {
        match self.side() {
            Side::Left => 1.0,
            Side::Center => 0.0,
            Side::Right => -1.0,
        }
    }
}

impl fmt::Display for RotationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RotationLabel {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RotationLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| GeometryError::UnknownLabel(s.to_string()))
    }
}

/// Signed ring of the 5x5 capture grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerspectiveRing {
    NegativeFar,
    NegativeNear,
    Neutral,
    PositiveNear,
    PositiveFar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RingDistance {
    Neutral,
    Near,
    Far,
}

impl PerspectiveRing {
    pub const ALL: [PerspectiveRing; 5] = [
        PerspectiveRing::NegativeFar,
        PerspectiveRing::NegativeNear,
        PerspectiveRing::Neutral,
        PerspectiveRing::PositiveNear,
        PerspectiveRing::PositiveFar,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PerspectiveRing::NegativeFar => "negative_far",
            PerspectiveRing::NegativeNear => "negative_near",
            PerspectiveRing::Neutral => "neutral",
            PerspectiveRing::PositiveNear => "positive_near",
            PerspectiveRing::PositiveFar => "positive_far",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            PerspectiveRing::NegativeFar => "Negative Far",
            PerspectiveRing::NegativeNear => "Negative Near",
            PerspectiveRing::Neutral => "Neutral",
            PerspectiveRing::PositiveNear => "Positive Near",
            PerspectiveRing::PositiveFar => "Positive Far",
        }
    }

    pub fn distance(self) -> RingDistance {
        match self {
            PerspectiveRing::Neutral => RingDistance::Neutral,
            PerspectiveRing::NegativeNear | PerspectiveRing::PositiveNear => RingDistance::Near,
            PerspectiveRing::NegativeFar | PerspectiveRing::PositiveFar => RingDistance::Far,
        }
    }

    pub fn is_negative(self) -> bool {
        matches!(
            self,
            PerspectiveRing::NegativeFar | PerspectiveRing::NegativeNear
        )
    }

    pub fn is_positive(self) -> bool {
        matches!(
            self,
            PerspectiveRing::PositiveFar | PerspectiveRing::PositiveNear
        )
    }
}

impl fmt::Display for PerspectiveRing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cell of the 5x5 capture grid; `(2, 2)` sits directly under the camera.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPosition {
    pub row: u8,
    pub col: u8,
}

impl GridPosition {
    pub const CENTER: GridPosition = GridPosition { row: 2, col: 2 };

    pub fn new(row: u8, col: u8) -> Result<Self, GeometryError> {
        if row > 4 || col > 4 {
            return Err(GeometryError::GridPosition { row, col });
        }
        Ok(Self { row, col })
    }

    /// All 25 cells in row-major order.
    pub fn all() -> impl Iterator<Item = GridPosition> {
        (0..5u8).flat_map(|row| (0..5u8).map(move |col| GridPosition { row, col }))
    }

    /// Signed offset from the centre cell in grid steps `(dcol, drow)`.
    pub fn offset(self) -> (i32, i32) {
        (self.col as i32 - 2, self.row as i32 - 2)
    }

    /// Chebyshev distance selects neutral / near / far. Cells above the
    /// camera (smaller row), or left of it on the centre row, are negative.
    pub fn ring(self) -> PerspectiveRing {
        let (dc, dr) = self.offset();
        let negative = dr < 0 || (dr == 0 && dc < 0);
        match dc.abs().max(dr.abs()) {
            0 => PerspectiveRing::Neutral,
            1 if negative => PerspectiveRing::NegativeNear,
            1 => PerspectiveRing::PositiveNear,
            _ if negative => PerspectiveRing::NegativeFar,
            _ => PerspectiveRing::PositiveFar,
        }
    }
}
