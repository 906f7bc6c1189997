use std::fmt;
use std::str::FromStr;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::params::DensityTable;

/// Probability vector over the eight content classes, in [`ContentClass::ALL`] order.
pub type ClassProbs = SVector<f64, 8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContentClass {
    #[serde(rename = "empty")]
    Empty,
    P5,
    P9,
    R5,
    R9,
    W5,
    W9,
    #[serde(rename = "unknown")]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentType {
    Pasta,
    Rice,
    Water,
    None,
}

impl ContentType {
    pub fn density(self, table: &DensityTable) -> f64 {
        match self {
            ContentType::Pasta => table.pasta,
            ContentType::Rice => table.rice,
            ContentType::Water => table.water,
            ContentType::None => 0.0,
        }
    }
}

impl ContentClass {
    pub const ALL: [ContentClass; 8] = [
        ContentClass::Empty,
        ContentClass::P5,
        ContentClass::P9,
        ContentClass::R5,
        ContentClass::R9,
        ContentClass::W5,
        ContentClass::W9,
        ContentClass::Unknown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            ContentClass::Empty => "empty",
            ContentClass::P5 => "P5",
            ContentClass::P9 => "P9",
            ContentClass::R5 => "R5",
            ContentClass::R9 => "R9",
            ContentClass::W5 => "W5",
            ContentClass::W9 => "W9",
            ContentClass::Unknown => "unknown",
        }
    }

    /// Content type and fill fraction used for the mass; `unknown` counts as empty.
    pub fn filling(self) -> (ContentType, f64) {
        match self {
            ContentClass::Empty | ContentClass::Unknown => (ContentType::None, 0.0),
            ContentClass::P5 => (ContentType::Pasta, 0.5),
            ContentClass::P9 => (ContentType::Pasta, 0.9),
            ContentClass::R5 => (ContentType::Rice, 0.5),
            ContentClass::R9 => (ContentType::Rice, 0.9),
            ContentClass::W5 => (ContentType::Water, 0.5),
            ContentClass::W9 => (ContentType::Water, 0.9),
        }
    }

    /// Class matching a ground-truth annotation, if the pair is feasible.
    pub fn from_filling(kind: ContentType, level: f64) -> Option<Self> {
        let half = (level - 0.5).abs() < 1e-9;
        let full = (level - 0.9).abs() < 1e-9;
        match kind {
            ContentType::None if level == 0.0 => Some(ContentClass::Empty),
            ContentType::Pasta if half => Some(ContentClass::P5),
            ContentType::Pasta if full => Some(ContentClass::P9),
            ContentType::Rice if half => Some(ContentClass::R5),
            ContentType::Rice if full => Some(ContentClass::R9),
            ContentType::Water if half => Some(ContentClass::W5),
            ContentType::Water if full => Some(ContentClass::W9),
            _ => None,
        }
    }
}

impl fmt::Display for ContentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ContentClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContentClass::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown content class `{s}`"))
    }
}

/// Row-stochastic matrix: entry `(i, j)` is the probability of moving from
/// class `i` at one frame to class `j` at the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 8]; 8]", into = "[[f64; 8]; 8]")]
pub struct TransitionMatrix(pub SMatrix<f64, 8, 8>);

impl From<[[f64; 8]; 8]> for TransitionMatrix {
    fn from(rows: [[f64; 8]; 8]) -> Self {
        TransitionMatrix(SMatrix::from_fn(|i, j| rows[i][j]))
    }
}

impl From<TransitionMatrix> for [[f64; 8]; 8] {
    fn from(t: TransitionMatrix) -> Self {
        let mut rows = [[0.0; 8]; 8];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = t.0[(i, j)];
            }
        }
        rows
    }
}

impl Default for TransitionMatrix {
    /// Content may only be added (empty → half → full) or become unreadable.
    fn default() -> Self {
        use ContentClass::*;
        let mut m = SMatrix::<f64, 8, 8>::zeros();
        let mut set =
            |from: ContentClass, to: ContentClass, p: f64| m[(from.index(), to.index())] = p;
        set(Empty, Empty, 0.8);
        for half in [P5, R5, W5] {
            set(Empty, half, 0.2 / 3.0);
        }
        for (half, full) in [(P5, P9), (R5, R9), (W5, W9)] {
            set(half, half, 0.8);
            set(half, full, 0.15);
            set(half, Unknown, 0.05);
            set(full, full, 0.8);
            set(full, half, 0.15);
            set(full, Unknown, 0.05);
        }
        set(Unknown, Unknown, 0.9);
        set(Unknown, Empty, 0.1);
        TransitionMatrix(m)
    }
}

impl TransitionMatrix {
    pub fn identity() -> Self {
        TransitionMatrix(SMatrix::identity())
    }

    pub fn validate(&self) -> Result<(), usize> {
        for (i, row) in self.0.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(i);
            }
        }
        Ok(())
    }

    /// Distribution at the next frame given `prior` at the current one.
    pub fn propagate(&self, prior: &ClassProbs) -> ClassProbs {
        self.0.transpose() * prior
    }

    /// Parses eight lines of eight whitespace-separated probabilities.
    pub fn parse(text: &str) -> Result<Self, String> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        if rows.len() != 8 || rows.iter().any(|r| r.len() != 8) {
            return Err("expected 8 rows of 8 values".into());
        }
        let m = TransitionMatrix(SMatrix::from_fn(|i, j| rows[i][j]));
        m.validate()
            .map_err(|row| format!("row {} is not a distribution", row + 1))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentBelief {
    pub posterior: ClassProbs,
}

impl ContentBelief {
    pub fn new(posterior: ClassProbs) -> Self {
        Self { posterior }
    }

    /// Equal mass on empty and unknown, the state before any frame is seen.
    pub fn initial() -> Self {
        let mut p = ClassProbs::zeros();
        p[ContentClass::Empty.index()] = 0.5;
        p[ContentClass::Unknown.index()] = 0.5;
        Self { posterior: p }
    }

    pub fn certain(class: ContentClass) -> Self {
        let mut p = ClassProbs::zeros();
        p[class.index()] = 1.0;
        Self { posterior: p }
    }

    pub fn probability(&self, class: ContentClass) -> f64 {
        self.posterior[class.index()]
    }

    /// Arg-max class; ties resolve to the earlier class.
    pub fn map_class(&self) -> ContentClass {
        let mut best = 0;
        for i in 1..8 {
            if self.posterior[i] > self.posterior[best] {
                best = i;
            }
        }
        ContentClass::ALL[best]
    }
}

/// The views' product vanished; `fallback` is uniform over the classes the
/// transition still reaches.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("fused content posterior is identically zero")]
pub struct ZeroPosterior {
    pub fallback: ContentBelief,
}

pub fn fuse_content_step(
    prior: &ContentBelief,
    view_a: &ClassProbs,
    view_b: &ClassProbs,
    transition: &TransitionMatrix,
) -> Result<ContentBelief, ZeroPosterior> {
    let predicted = transition.propagate(&prior.posterior);
    let product = view_a.component_mul(view_b).component_mul(&predicted);
    let total = product.sum();
    if total > 0.0 && total.is_finite() {
        return Ok(ContentBelief::new(product / total));
    }
    let reach = predicted.map(|p| if p > 0.0 { 1.0 } else { 0.0 });
    let n = reach.sum();
    let fallback = if n > 0.0 {
        reach / n
    } else {
        ClassProbs::repeat(1.0 / 8.0)
    };
    Err(ZeroPosterior {
        fallback: ContentBelief::new(fallback),
    })
}

/// Left fold of [`fuse_content_step`] from `initial`; one belief per frame.
/// Frames without estimates propagate through the transition only.
pub fn fuse_stream<'a, I>(
    initial: ContentBelief,
    views: I,
    transition: &TransitionMatrix,
) -> Vec<ContentBelief>
where
    I: IntoIterator<Item = Option<(&'a ClassProbs, &'a ClassProbs)>>,
{
    let uniform = ClassProbs::repeat(1.0 / 8.0);
    let mut belief = initial;
    views
        .into_iter()
        .map(|v| {
            let (a, b) = v.unwrap_or((&uniform, &uniform));
            belief = fuse_content_step(&belief, a, b, transition).unwrap_or_else(|e| e.fallback);
            belief.clone()
        })
        .collect()
}

/// Container mass plus the filling mass of the MAP class (grams).
pub fn estimate_mass(
    belief: &ContentBelief,
    volume_ml: f64,
    densities: &DensityTable,
    container_mass: f64,
) -> f64 {
    let (kind, level) = belief.map_class().filling();
    container_mass + level * volume_ml * kind.density(densities)
}
