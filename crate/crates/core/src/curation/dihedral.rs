use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// One of the eight symmetries of a square.
///
/// Ids 0-3 rotate counter-clockwise by 0, 90, 180 and 270 degrees. Ids 4-7
/// mirror left-right first and then apply the same rotations.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(try_from = "u8", into = "u8")]
pub struct DihedralTransform(u8);

impl DihedralTransform {
    pub const IDENTITY: Self = Self(0);
    pub const ROT90: Self = Self(1);
    pub const ROT180: Self = Self(2);
    pub const ROT270: Self = Self(3);
    pub const FLIP: Self = Self(4);

    pub fn new(id: u8) -> Result<Self> {
        if id < 8 {
            Ok(Self(id))
        } else {
            Err(Error::Config(format!(
                "dihedral transform id must be 0-7, got {id}"
            )))
        }
    }

    pub fn all() -> [Self; 8] {
        std::array::from_fn(|i| Self(i as u8))
    }

    fn from_parts(flip: bool, quarter_turns: u8) -> Self {
        Self(quarter_turns % 4 + if flip { 4 } else { 0 })
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn is_identity(self) -> bool {
        self.0 == 0
    }

    pub fn flips(self) -> bool {
        self.0 >= 4
    }

    pub fn quarter_turns(self) -> u8 {
        self.0 % 4
    }

    /// The transform equivalent to applying `self` and then `next`.
    pub fn then(self, next: Self) -> Self {
        if next.flips() {
            // a mirror conjugates a rotation into its inverse
            Self::from_parts(
                !self.flips(),
                next.quarter_turns() + 4 - self.quarter_turns(),
            )
        } else {
            Self::from_parts(self.flips(), self.quarter_turns() + next.quarter_turns())
        }
    }

    pub fn inverse(self) -> Self {
        if self.flips() {
            self
        } else {
            Self::from_parts(false, 4 - self.quarter_turns())
        }
    }
}

impl TryFrom<u8> for DihedralTransform {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        Self::new(id)
    }
}

impl From<DihedralTransform> for u8 {
    fn from(t: DihedralTransform) -> u8 {
        t.0
    }
}

impl fmt::Display for DihedralTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for DihedralTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let id: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid transform id `{s}`")))?;
        Self::new(id)
    }
}

fn mirror_lr(src: &Raster) -> Raster {
    let (h, w, c) = src.shape();
    Raster::from_fn(h, w, c, |y, x, ch| src.get(y, w - 1 - x, ch))
}

fn rotate_ccw(src: &Raster) -> Raster {
    let (h, w, c) = src.shape();
    Raster::from_fn(w, h, c, |y, x, ch| src.get(x, w - 1 - y, ch))
}

/// Permutes pixel positions; channel values are untouched.
///
/// Quarter turns of a non-square raster are rejected.
pub fn dihedral_apply(src: &Raster, t: DihedralTransform) -> Result<Raster> {
    if t.quarter_turns() % 2 == 1 && src.height() != src.width() {
        return Err(Error::Shape(format!(
            "transform {t} rotates by a quarter turn and needs a square patch, got {}x{}",
            src.height(),
            src.width()
        )));
    }
    let mut out = if t.flips() {
        mirror_lr(src)
    } else {
        src.clone()
    };
    for _ in 0..t.quarter_turns() {
        out = rotate_ccw(&out);
    }
    Ok(out)
}
