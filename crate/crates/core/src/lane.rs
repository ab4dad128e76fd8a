use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// The two priced lanes at every toll.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Fast,
    Economic,
}

impl Lane {
    pub const ALL: [Lane; 2] = [Lane::Fast, Lane::Economic];

    pub fn as_str(self) -> &'static str {
        match self {
            Lane::Fast => "fast",
            Lane::Economic => "economic",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Lane::Fast => 0,
            Lane::Economic => 1,
        }
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A value for each lane. Serializes as `{"fast": .., "economic": ..}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerLane<T> {
    pub fast: T,
    pub economic: T,
}

impl<T> PerLane<T> {
    pub const fn new(fast: T, economic: T) -> Self {
        Self { fast, economic }
    }

    pub fn from_fn(mut f: impl FnMut(Lane) -> T) -> Self {
        Self {
            fast: f(Lane::Fast),
            economic: f(Lane::Economic),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Lane, &T) -> U) -> PerLane<U> {
        PerLane {
            fast: f(Lane::Fast, &self.fast),
            economic: f(Lane::Economic, &self.economic),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Lane, &T)> {
        [(Lane::Fast, &self.fast), (Lane::Economic, &self.economic)].into_iter()
    }
}

impl<T> Index<Lane> for PerLane<T> {
    type Output = T;

    fn index(&self, lane: Lane) -> &T {
        match lane {
            Lane::Fast => &self.fast,
            Lane::Economic => &self.economic,
        }
    }
}

impl<T> IndexMut<Lane> for PerLane<T> {
    fn index_mut(&mut self, lane: Lane) -> &mut T {
        match lane {
            Lane::Fast => &mut self.fast,
            Lane::Economic => &mut self.economic,
        }
    }
}
