//! A piecewise-linear staircase embedding of the unit square.
//!
//! Five shifted staircases `phi_0..phi_4` at level `n` partition `[0, 1]`
//! into plateaus separated by narrow ramps. Family `k` puts its ramps at
//! `[s_k + i/n, s_k + i/n + gamma/n]` with shift `s_k = k/(5n)`; since the
//! shifts step by a fifth of a cell and ramps are at most a fifth of a cell
//! wide, no point of `[0, 1]` lies inside the open ramp of more than one
//! family. The embedding sends `(x, y)` to the five values
//! `Phi_k = lambda_1 phi_k(x) + lambda_2 phi_k(y)` with `lambda_1 = 1` and
//! `lambda_2 = sqrt(2)`; irrationality makes every plateau rectangle of
//! every family land on its own distinct value, which is what lets a single
//! outer function act on all five coordinates.
//!
//! Geometry that the rest of the construction leans on:
//! - each family has exactly `n` ramps of slope `1/gamma`, all rising by
//!   `1/n`;
//! - plateau `p` of family `k` carries the value `(p + k/5)/n`;
//! - for any `(x, y)`, at least 3 of the 5 families have both coordinates on
//!   closed plateaus (the "good" families), so the embedding Jacobian has at
//!   least 3 exactly-zero columns wherever it is defined.

mod outer;
mod target;

pub use outer::{
    default_stop_floor, outer_iteration_step, represent, residual_sup, resolution_floor,
    IterationReport, OuterFunction, RepresentOptions,
};
pub use target::TargetFunction;

use crate::matrix::Matrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FAMILY_COUNT: usize = 5;
/// Plateau values closer than this are treated as colliding.
pub const PLATEAU_GAP_TOL: f64 = 1e-9;
/// Plateau segments shorter than this are construction artifacts, not cells.
const MIN_PLATEAU_LEN: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum KaError {
    #[error("family index {family} out of range 0..{}", FAMILY_COUNT)]
    BadFamily { family: usize },
    #[error("level {level} out of range (need >= 2)")]
    BadLevel { level: usize },
    #[error("gamma {gamma} out of range (need 0 < gamma <= 0.2)")]
    BadGamma { gamma: f64 },
    #[error("lambda weight {lambda} must be positive and finite")]
    BadLambda { lambda: f64 },
    #[error("coordinate {value} outside the unit interval")]
    OutOfDomain { value: f64 },
    #[error("point sits on a piece boundary of family {family} (coordinate {coord})")]
    BoundaryPoint { family: usize, coord: f64 },
    #[error("plateau values collide: gap {gap} below {PLATEAU_GAP_TOL}")]
    PlateauCollision { gap: f64 },
    #[error("evaluation grid side {n} must be >= 2")]
    BadGrid { n: usize },
    #[error("increment divisor {divisor} must be finite and > 1")]
    BadDivisor { divisor: f64 },
    #[error("invalid target: {0}")]
    BadTarget(String),
    #[error("malformed piecewise-linear function: {0}")]
    MalformedOuter(String),
}

/// How a point of `[0, 1]` sits inside one staircase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointKind {
    /// Strictly inside a plateau; derivative 0.
    PlateauInterior { ordinal: usize },
    /// Strictly inside a ramp; derivative `slope`.
    RampInterior { slope: f64 },
    /// Exactly on a knot; no one-sided derivative agreement.
    Knot,
}

/// A maximal constant segment of a staircase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
    /// Ordinal `p`; the value is `(p + family/5) * sigma`.
    pub ordinal: usize,
}

/// One monotone staircase function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Staircase {
    family: usize,
    level: usize,
    gamma: f64,
    knots: Vec<f64>,
    values: Vec<f64>,
    plateaus: Vec<Plateau>,
}

/// Builds the staircase of one family. `level >= 2` steps, ramp fraction
/// `gamma` in `(0, 1/5]`.
pub fn build_staircase(family: usize, level: usize, gamma: f64) -> Result<Staircase, KaError> {
    if family >= FAMILY_COUNT {
        return Err(KaError::BadFamily { family });
    }
    if level < 2 {
        return Err(KaError::BadLevel { level });
    }
    if !(gamma.is_finite() && gamma > 0.0 && gamma <= 0.2) {
        return Err(KaError::BadGamma { gamma });
    }
    let n = level;
    let sigma = 1.0 / n as f64;
    let value_at = |p: usize| (p as f64 + family as f64 / 5.0) * sigma;
    // Knots live on the lattice (5i + k + 5 gamma) sigma / 5, computed in
    // that exact form so that abutting ramps of consecutive families share
    // bitwise-equal endpoints at the boundary value gamma = 1/5 (5 gamma
    // rounds to exactly 1). Two open ramps must never overlap, not even by
    // one ulp, or a point could ramp in two families at once.
    let knot_at = |units: f64| units * sigma / 5.0;

    let mut knots: Vec<f64> = Vec::with_capacity(2 * n + 2);
    let mut values: Vec<f64> = Vec::with_capacity(2 * n + 2);
    let push = |x: f64, v: f64, knots: &mut Vec<f64>, values: &mut Vec<f64>| {
        // Collapse knots that coincide up to rounding (zero-length pieces).
        if let Some(&last) = knots.last() {
            if x - last < MIN_PLATEAU_LEN {
                return;
            }
        }
        knots.push(x);
        values.push(v);
    };
    push(0.0, if family == 0 { 0.0 } else { value_at(0) }, &mut knots, &mut values);
    for i in 0..n {
        let units = (5 * i + family) as f64;
        let ramp_lo = knot_at(units);
        let ramp_hi = knot_at(units + 5.0 * gamma);
        push(ramp_lo, value_at(i), &mut knots, &mut values);
        push(ramp_hi.min(1.0), value_at(i + 1), &mut knots, &mut values);
    }
    // Trailing plateau up to 1, unless the last ramp already ends there.
    push(1.0, value_at(n), &mut knots, &mut values);
    // Snap the final knot to exactly 1.
    if let Some(last) = knots.last_mut() {
        debug_assert!((*last - 1.0).abs() < 1e-9);
        *last = 1.0;
    }

    let mut plateaus = Vec::with_capacity(n + 1);
    for w in 0..knots.len() - 1 {
        if values[w] == values[w + 1] && knots[w + 1] - knots[w] > MIN_PLATEAU_LEN {
            let p = ordinal_of(values[w], family, sigma);
            plateaus.push(Plateau { lo: knots[w], hi: knots[w + 1], value: values[w], ordinal: p });
        }
    }
    Ok(Staircase { family, level, gamma, knots, values, plateaus })
}

fn ordinal_of(value: f64, family: usize, sigma: f64) -> usize {
    ((value / sigma) - family as f64 / 5.0).round() as usize
}

impl Staircase {
    pub fn family(&self) -> usize {
        self.family
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn sigma(&self) -> f64 {
        1.0 / self.level as f64
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Positive-length plateaus in increasing order.
    pub fn plateaus(&self) -> &[Plateau] {
        &self.plateaus
    }

    /// PL graph knots (strictly increasing, first 0, last 1).
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn eval(&self, x: f64) -> Result<f64, KaError> {
        self.check_domain(x)?;
        let i = match self.knots.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(exact) => return Ok(self.values[exact]),
            Err(ins) => ins - 1, // ins >= 1 because knots[0] = 0 <= x
        };
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        let t = (x - x0) / (x1 - x0);
        Ok(v0 + t * (v1 - v0))
    }

    /// Classifies `x` against the piece structure. Exact knot hits are
    /// reported as [`PointKind::Knot`]; derivative queries must reject them.
    pub fn classify(&self, x: f64) -> Result<PointKind, KaError> {
        self.check_domain(x)?;
        let i = match self.knots.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(_) => return Ok(PointKind::Knot),
            Err(ins) => ins - 1,
        };
        if self.values[i] == self.values[i + 1] {
            Ok(PointKind::PlateauInterior { ordinal: ordinal_of(self.values[i], self.family, self.sigma()) })
        } else {
            let slope = (self.values[i + 1] - self.values[i]) / (self.knots[i + 1] - self.knots[i]);
            Ok(PointKind::RampInterior { slope })
        }
    }

    /// The plateau containing `x` (closed membership), if any.
    pub fn plateau_at(&self, x: f64) -> Result<Option<Plateau>, KaError> {
        self.check_domain(x)?;
        let idx = self.plateaus.partition_point(|p| p.lo <= x);
        if idx == 0 {
            return Ok(None);
        }
        let p = self.plateaus[idx - 1];
        Ok((x <= p.hi).then_some(p))
    }

    fn check_domain(&self, x: f64) -> Result<(), KaError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(KaError::OutOfDomain { value: x });
        }
        Ok(())
    }
}

/// One plateau rectangle of one family, with the embedding value it maps to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub family: usize,
    pub x_plateau: Plateau,
    pub y_plateau: Plateau,
    /// `lambda_1 * x_value + lambda_2 * y_value`; distinct across all cells.
    pub value: f64,
}

impl Cell {
    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_plateau.lo + self.x_plateau.hi),
            0.5 * (self.y_plateau.lo + self.y_plateau.hi),
        )
    }
}

/// The five-staircase embedding of the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct KaEmbedding {
    level: usize,
    gamma: f64,
    lambda: [f64; 2],
    staircases: Vec<Staircase>,
}

/// Standard embedding: `lambda = [1, sqrt(2)]`.
pub fn build_embedding(level: usize, gamma: f64) -> Result<KaEmbedding, KaError> {
    build_embedding_with_lambda(level, gamma, std::f64::consts::SQRT_2)
}

/// Embedding with a custom second weight; `lambda_2 = 1` is the classic way
/// to break plateau distinctness and must be caught by
/// [`check_distinct_plateaus`].
pub fn build_embedding_with_lambda(
    level: usize,
    gamma: f64,
    lambda2: f64,
) -> Result<KaEmbedding, KaError> {
    if !(lambda2.is_finite() && lambda2 > 0.0) {
        return Err(KaError::BadLambda { lambda: lambda2 });
    }
    let staircases = (0..FAMILY_COUNT)
        .map(|k| build_staircase(k, level, gamma))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(KaEmbedding { level, gamma, lambda: [1.0, lambda2], staircases })
}

impl KaEmbedding {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn sigma(&self) -> f64 {
        1.0 / self.level as f64
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> [f64; 2] {
        self.lambda
    }

    pub fn staircase(&self, family: usize) -> &Staircase {
        &self.staircases[family]
    }

    /// The five embedding coordinates at `(x, y)`.
    pub fn embed(&self, x: f64, y: f64) -> Result<[f64; FAMILY_COUNT], KaError> {
        let mut out = [0.0; FAMILY_COUNT];
        for (k, s) in self.staircases.iter().enumerate() {
            out[k] = self.lambda[0] * s.eval(x)? + self.lambda[1] * s.eval(y)?;
        }
        Ok(out)
    }

    /// All plateau rectangles of all families.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for s in &self.staircases {
            for &px in s.plateaus() {
                for &py in s.plateaus() {
                    cells.push(Cell {
                        family: s.family(),
                        x_plateau: px,
                        y_plateau: py,
                        value: self.lambda[0] * px.value + self.lambda[1] * py.value,
                    });
                }
            }
        }
        cells
    }
}

/// Families whose staircase is flat (closed plateau) at both coordinates.
/// At least 3 of the 5 qualify at every point of the square.
pub fn good_families(emb: &KaEmbedding, x: f64, y: f64) -> Result<Vec<usize>, KaError> {
    let mut out = Vec::with_capacity(FAMILY_COUNT);
    for (k, s) in emb.staircases.iter().enumerate() {
        if s.plateau_at(x)?.is_some() && s.plateau_at(y)?.is_some() {
            out.push(k);
        }
    }
    Ok(out)
}

/// Jacobian of the embedding at `(x, y)`: 2 rows (d/dx, d/dy), five columns.
/// Errors if any staircase has a knot exactly at `x` or `y`, where the
/// derivative is undefined.
pub fn embedding_jacobian(emb: &KaEmbedding, x: f64, y: f64) -> Result<Matrix, KaError> {
    let mut slopes_x = [0.0; FAMILY_COUNT];
    let mut slopes_y = [0.0; FAMILY_COUNT];
    for (k, s) in emb.staircases.iter().enumerate() {
        for (coord, slot) in [(x, &mut slopes_x), (y, &mut slopes_y)] {
            match s.classify(coord)? {
                PointKind::Knot => {
                    return Err(KaError::BoundaryPoint { family: k, coord });
                }
                PointKind::PlateauInterior { .. } => slot[k] = 0.0,
                PointKind::RampInterior { slope } => slot[k] = slope,
            }
        }
    }
    Ok(Matrix::from_fn(2, FAMILY_COUNT, |r, k| {
        if r == 0 {
            emb.lambda[0] * slopes_x[k]
        } else {
            emb.lambda[1] * slopes_y[k]
        }
    }))
}

/// Verifies that all cell values are pairwise separated by more than
/// [`PLATEAU_GAP_TOL`]; returns the smallest gap found.
pub fn check_distinct_plateaus(emb: &KaEmbedding) -> Result<f64, KaError> {
    let mut values: Vec<f64> = emb.cells().iter().map(|c| c.value).collect();
    values.sort_by(f64::total_cmp);
    let mut min_gap = f64::INFINITY;
    for w in values.windows(2) {
        min_gap = min_gap.min(w[1] - w[0]);
    }
    if min_gap <= PLATEAU_GAP_TOL {
        return Err(KaError::PlateauCollision { gap: min_gap });
    }
    Ok(min_gap)
}
