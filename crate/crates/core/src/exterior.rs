//! Minor enumeration and the minor-concentration statistic.
//!
//! For a `p x q` matrix and order `h`, the minor table holds every `h x h`
//! minor, indexed by (row subset, column subset) in lexicographic order. The
//! concentration of a minor table is `||v||_2 / ||v||_1` over all minors `v`;
//! it lies in `[1/sqrt(N), 1]` for `N` minors, reaching 1 exactly when a
//! single minor carries all the mass. An all-zero table has no well-defined
//! ratio and is reported as [`Mc::Degenerate`], a distinguished outcome
//! rather than an error.

use crate::matrix::{Matrix, MatrixError};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt::Write as _;
use thiserror::Error;

/// Hard bound on `C(p,h) * C(q,h)`, the number of minors a single table may hold.
pub const MINOR_CAPACITY: u128 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ExteriorError {
    #[error("minor order {h} out of range for a {rows}x{cols} matrix (need 1 <= h <= min)")]
    OrderOutOfRange { h: usize, rows: usize, cols: usize },
    #[error("minor table would hold {required} minors, exceeding the capacity {capacity}")]
    CapacityExceeded { required: u128, capacity: u128 },
    #[error("tables are not composable: h {lh} vs {rh}, inner dimension {lc} vs {rr}")]
    NotComposable { lh: usize, rh: usize, lc: usize, rr: usize },
    #[error("ensemble needs at least 1 trial")]
    NoTrials,
    #[error("every trial in the ensemble was degenerate")]
    AllDegenerate,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("malformed minor table: {0}")]
    MalformedTable(String),
}

/// Binomial coefficient with saturating arithmetic; exact whenever the result
/// fits comfortably below the saturation range, which covers everything under
/// [`MINOR_CAPACITY`].
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c.saturating_mul((n - k + i) as u128) / i as u128;
    }
    c
}

/// All size-`h` subsets of `0..n` in lexicographic order.
pub fn subsets_lex(n: usize, h: usize) -> Vec<Vec<usize>> {
    assert!(h >= 1 && h <= n);
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..h).collect();
    loop {
        out.push(cur.clone());
        // Advance to the next combination; finished when none exists.
        let mut i = h;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - h {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in (i + 1)..h {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Identifies one minor: which source rows and columns it is built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinorIndex {
    pub row_subset: Vec<usize>,
    pub col_subset: Vec<usize>,
}

/// Concentration value, or the distinguished all-minors-zero outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mc {
    Value(f64),
    Degenerate,
}

impl Mc {
    pub fn value(&self) -> Option<f64> {
        match self {
            Mc::Value(v) => Some(*v),
            Mc::Degenerate => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Mc::Degenerate)
    }

    /// Unwraps the value; panics on degenerate. Test/diagnostic convenience.
    pub fn expect_value(&self) -> f64 {
        self.value().expect("unexpected degenerate concentration")
    }
}

// Serialized as a plain number, with `null` for the degenerate outcome.
impl Serialize for Mc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Mc::Value(v) => s.serialize_some(v),
            Mc::Degenerate => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Mc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let opt = Option::<f64>::deserialize(d)?;
        match opt {
            Some(v) if v.is_finite() => Ok(Mc::Value(v)),
            Some(v) => Err(D::Error::custom(format!("non-finite concentration {v}"))),
            None => Ok(Mc::Degenerate),
        }
    }
}

/// `||v||_2 / ||v||_1` of a value list, normalised by the largest magnitude so
/// the ratio cannot overflow or underflow; all-zero input is degenerate.
pub fn mc_of_values(values: &[f64]) -> Mc {
    let m = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 {
        return Mc::Degenerate;
    }
    let mut l1 = 0.0_f64;
    let mut l2 = 0.0_f64;
    for v in values {
        let t = (v / m).abs();
        l1 += t;
        l2 += t * t;
    }
    Mc::Value(l2.sqrt() / l1)
}

/// Every `h x h` minor of one matrix, on the lexicographic subset grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorTable {
    h: usize,
    source_rows: usize,
    source_cols: usize,
    row_subsets: Vec<Vec<usize>>,
    col_subsets: Vec<Vec<usize>>,
    values: Vec<f64>, // row-major over (row subset index, col subset index)
}

impl MinorTable {
    pub fn h(&self) -> usize {
        self.h
    }

    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    pub fn source_cols(&self) -> usize {
        self.source_cols
    }

    pub fn row_subsets(&self) -> &[Vec<usize>] {
        &self.row_subsets
    }

    pub fn col_subsets(&self) -> &[Vec<usize>] {
        &self.col_subsets
    }

    pub fn row_count(&self) -> usize {
        self.row_subsets.len()
    }

    pub fn col_count(&self) -> usize {
        self.col_subsets.len()
    }

    pub fn minor_count(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn value(&self, row_subset_idx: usize, col_subset_idx: usize) -> f64 {
        assert!(row_subset_idx < self.row_count() && col_subset_idx < self.col_count());
        self.values[row_subset_idx * self.col_count() + col_subset_idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (MinorIndex, f64)> + '_ {
        let cc = self.col_count();
        self.values.iter().enumerate().map(move |(i, v)| {
            (
                MinorIndex {
                    row_subset: self.row_subsets[i / cc].clone(),
                    col_subset: self.col_subsets[i % cc].clone(),
                },
                *v,
            )
        })
    }

    /// The minor grid as a plain matrix (a matrix of the h-th compound).
    pub fn as_matrix(&self) -> Matrix {
        Matrix::from_vec(self.row_count(), self.col_count(), self.values.clone())
            .expect("minor table entries are finite by construction")
    }

    /// Composes two tables the way the underlying maps compose: the table of
    /// a product equals the product of the tables. Requires equal order and a
    /// matching inner dimension.
    pub fn product(&self, other: &MinorTable) -> Result<MinorTable, ExteriorError> {
        if self.h != other.h || self.source_cols != other.source_rows {
            return Err(ExteriorError::NotComposable {
                lh: self.h,
                rh: other.h,
                lc: self.source_cols,
                rr: other.source_rows,
            });
        }
        let prod = self.as_matrix().matmul(&other.as_matrix())?;
        Ok(MinorTable {
            h: self.h,
            source_rows: self.source_rows,
            source_cols: other.source_cols,
            row_subsets: self.row_subsets.clone(),
            col_subsets: other.col_subsets.clone(),
            values: prod.as_slice().to_vec(),
        })
    }

    /// CSV with one minor per row; subsets are `-`-joined index lists and
    /// values carry 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("row_subset,col_subset,value\n");
        for (idx, v) in self.iter() {
            let _ = writeln!(out, "{},{},{:.16e}", join_subset(&idx.row_subset), join_subset(&idx.col_subset), v);
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("minor table serialises")
    }

    pub fn from_json_str(s: &str) -> Result<MinorTable, ExteriorError> {
        serde_json::from_str(s).map_err(|e| ExteriorError::MalformedTable(e.to_string()))
    }
}

fn join_subset(s: &[usize]) -> String {
    s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-")
}

#[derive(Serialize, Deserialize)]
struct MinorTableDto {
    h: usize,
    source_rows: usize,
    source_cols: usize,
    row_subsets: Vec<Vec<usize>>,
    col_subsets: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
}

impl Serialize for MinorTable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let values = self
            .values
            .chunks(self.col_count())
            .map(|c| c.to_vec())
            .collect();
        MinorTableDto {
            h: self.h,
            source_rows: self.source_rows,
            source_cols: self.source_cols,
            row_subsets: self.row_subsets.clone(),
            col_subsets: self.col_subsets.clone(),
            values,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MinorTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let dto = MinorTableDto::deserialize(d)?;
        let rc = dto.row_subsets.len();
        let cc = dto.col_subsets.len();
        if dto.values.len() != rc || dto.values.iter().any(|r| r.len() != cc) {
            return Err(D::Error::custom("value grid does not match subset counts"));
        }
        for subs in [&dto.row_subsets, &dto.col_subsets] {
            for s in subs {
                if s.len() != dto.h || s.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(D::Error::custom("subset is not a strictly increasing h-set"));
                }
            }
        }
        let values: Vec<f64> = dto.values.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(D::Error::custom("non-finite minor value"));
        }
        Ok(MinorTable {
            h: dto.h,
            source_rows: dto.source_rows,
            source_cols: dto.source_cols,
            row_subsets: dto.row_subsets,
            col_subsets: dto.col_subsets,
            values,
        })
    }
}

/// Checks that order `h` is usable for a `rows x cols` matrix: in range and
/// within the minor-count capacity.
pub fn validate_order(rows: usize, cols: usize, h: usize) -> Result<(), ExteriorError> {
    if h == 0 || h > rows.min(cols) {
        return Err(ExteriorError::OrderOutOfRange { h, rows, cols });
    }
    let required = binomial(rows, h).saturating_mul(binomial(cols, h));
    if required > MINOR_CAPACITY {
        return Err(ExteriorError::CapacityExceeded { required, capacity: MINOR_CAPACITY });
    }
    Ok(())
}

fn check_order(m: &Matrix, h: usize) -> Result<(), ExteriorError> {
    validate_order(m.rows(), m.cols(), h)
}

/// Enumerates all `h x h` minors of `m` on the lexicographic subset grid.
pub fn minors(m: &Matrix, h: usize) -> Result<MinorTable, ExteriorError> {
    check_order(m, h)?;
    let row_subsets = subsets_lex(m.rows(), h);
    let col_subsets = subsets_lex(m.cols(), h);
    let mut values = Vec::with_capacity(row_subsets.len() * col_subsets.len());
    for rs in &row_subsets {
        for cs in &col_subsets {
            let v = if h == 1 {
                m.get(rs[0], cs[0])
            } else {
                m.submatrix(rs, cs).determinant().expect("submatrix is square")
            };
            values.push(v);
        }
    }
    Ok(MinorTable {
        h,
        source_rows: m.rows(),
        source_cols: m.cols(),
        row_subsets,
        col_subsets,
        values,
    })
}

/// Minor concentration of `m` at order `h`.
pub fn mc(m: &Matrix, h: usize) -> Result<Mc, ExteriorError> {
    Ok(mc_of_values(minors(m, h)?.values()))
}

/// Which axis of the minor grid to aggregate over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupAxis {
    Rows,
    Cols,
}

/// Group masses and their concentration for one axis of a minor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedConcentration {
    pub axis: GroupAxis,
    /// L1 mass of each row-subset group (axis `Rows`) or col-subset group.
    pub masses: Vec<f64>,
    pub concentration: Mc,
}

/// Aggregates minor mass per row-subset (or per col-subset) and reports the
/// concentration of the group masses themselves.
pub fn grouped_concentration(table: &MinorTable, axis: GroupAxis) -> GroupedConcentration {
    let (outer, inner) = (table.row_count(), table.col_count());
    let masses: Vec<f64> = match axis {
        GroupAxis::Rows => (0..outer)
            .map(|r| (0..inner).map(|c| table.value(r, c).abs()).sum())
            .collect(),
        GroupAxis::Cols => (0..inner)
            .map(|c| (0..outer).map(|r| table.value(r, c).abs()).sum())
            .collect(),
    };
    let concentration = mc_of_values(&masses);
    GroupedConcentration { axis, masses, concentration }
}

/// Full concentration diagnostics for one matrix at one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub h: usize,
    pub source_rows: usize,
    pub source_cols: usize,
    pub minor_count: u64,
    pub max_abs_minor: f64,
    pub mc_global: Mc,
    pub row_group_masses: Vec<f64>,
    pub col_group_masses: Vec<f64>,
    pub row_concentration: Mc,
    pub col_concentration: Mc,
}

impl McReport {
    pub fn from_matrix(m: &Matrix, h: usize) -> Result<McReport, ExteriorError> {
        let table = minors(m, h)?;
        Ok(Self::from_table(&table))
    }

    pub fn from_table(table: &MinorTable) -> McReport {
        let rows = grouped_concentration(table, GroupAxis::Rows);
        let cols = grouped_concentration(table, GroupAxis::Cols);
        McReport {
            h: table.h(),
            source_rows: table.source_rows(),
            source_cols: table.source_cols(),
            minor_count: table.minor_count() as u64,
            max_abs_minor: table.values().iter().fold(0.0, |m, v| m.max(v.abs())),
            mc_global: mc_of_values(table.values()),
            row_group_masses: rows.masses,
            col_group_masses: cols.masses,
            row_concentration: rows.concentration,
            col_concentration: cols.concentration,
        }
    }
}
