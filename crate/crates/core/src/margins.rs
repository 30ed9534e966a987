//! Margin vectors for binary contingency tables: the block family
//! (a heavy block of `floor(n^delta)` rows/columns with margin `floor(B*C*n)`
//! on top of `n` light ones with margin `floor(C*n)`), arbitrary user
//! margins, Gale–Ryser feasibility, and parameter-regime classification.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MarginError {
    #[error("n must be at least 1, got {0}")]
    InvalidN(usize),
    #[error("delta must lie in [0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("b must be positive and finite, got {0}")]
    InvalidB(f64),
    #[error("c must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("row sum {row_total} does not equal column sum {col_total}")]
    SumMismatch { row_total: usize, col_total: usize },
    #[error("margin entry {entry} exceeds vector length {len}: no 0/1 row can reach it")]
    EntryExceedsLength { entry: usize, len: usize },
    #[error("degenerate block margin: floor of {value} * n is zero at n = {n}")]
    DegenerateMargin { value: f64, n: usize },
    #[error("margins must be non-empty")]
    Empty,
}

/// Parameters `(n, delta, b, c)` of the block-margin family.
///
/// The induced margins have `floor(n^delta)` heavy entries equal to
/// `floor(b*c*n)` followed by `n` light entries equal to `floor(c*n)`,
/// identically for rows and columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub n: usize,
    pub delta: f64,
    pub b: f64,
    pub c: f64,
}

impl BlockParams {
    pub fn new(n: usize, delta: f64, b: f64, c: f64) -> Result<Self, MarginError> {
        if n < 1 {
            return Err(MarginError::InvalidN(n));
        }
        if !(0.0..=1.0).contains(&delta) || !delta.is_finite() {
            return Err(MarginError::InvalidDelta(delta));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(MarginError::InvalidB(b));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(MarginError::InvalidC(c));
        }
        Ok(Self { n, delta, b, c })
    }

    /// Number of heavy rows/columns, `floor(n^delta)`.
    pub fn heavy_count(&self) -> usize {
        (self.n as f64).powf(self.delta).floor() as usize
    }

    /// Heavy margin value, `floor(b*c*n)`.
    pub fn heavy_margin(&self) -> usize {
        (self.b * self.c * self.n as f64).floor() as usize
    }

    /// Light margin value, `floor(c*n)`.
    pub fn light_margin(&self) -> usize {
        (self.c * self.n as f64).floor() as usize
    }

    /// Total number of rows (= columns), `floor(n^delta) + n`.
    pub fn side_len(&self) -> usize {
        self.heavy_count() + self.n
    }
}

/// A row/column margin pair with equal totals.
///
/// Construction enforces only sum equality; whether a 0/1 table with these
/// margins exists (which requires every entry to fit its vector length) is
/// the job of [`check_feasible`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MarginPair {
    r: Vec<usize>,
    c: Vec<usize>,
    total: usize,
}

impl MarginPair {
    pub fn new(r: Vec<usize>, c: Vec<usize>) -> Result<Self, MarginError> {
        if r.is_empty() || c.is_empty() {
            return Err(MarginError::Empty);
        }
        let row_total: usize = r.iter().sum();
        let col_total: usize = c.iter().sum();
        if row_total != col_total {
            return Err(MarginError::SumMismatch { row_total, col_total });
        }
        Ok(Self { r, c, total: row_total })
    }

    /// Row margins.
    pub fn rows(&self) -> &[usize] {
        &self.r
    }

    /// Column margins.
    pub fn cols(&self) -> &[usize] {
        &self.c
    }

    /// Total sum of entries N.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Number of rows m.
    pub fn num_rows(&self) -> usize {
        self.r.len()
    }

    /// Number of columns.
    pub fn num_cols(&self) -> usize {
        self.c.len()
    }

    /// The transposed pair (rows and columns swapped).
    pub fn transposed(&self) -> MarginPair {
        MarginPair { r: self.c.clone(), c: self.r.clone(), total: self.total }
    }
}

impl Serialize for MarginPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("MarginPair", 2)?;
        st.serialize_field("r", &self.r)?;
        st.serialize_field("c", &self.c)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for MarginPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            r: Vec<usize>,
            c: Vec<usize>,
        }
        let raw = Raw::deserialize(d)?;
        MarginPair::new(raw.r, raw.c).map_err(serde::de::Error::custom)
    }
}

/// Build the block margins for `p`: `floor(n^delta)` heavy entries of
/// `floor(b*c*n)` followed by `n` light entries of `floor(c*n)`; rows and
/// columns are identical.
///
/// Rejects degenerate margins (a floored entry of zero) and entries that
/// exceed the vector length (no 0/1 row can hold them).
pub fn build_block_margins(p: &BlockParams) -> Result<MarginPair, MarginError> {
    let heavy_count = p.heavy_count();
    let heavy = p.heavy_margin();
    let light = p.light_margin();
    let len = heavy_count + p.n;
    if light == 0 {
        return Err(MarginError::DegenerateMargin { value: p.c, n: p.n });
    }
    if heavy_count > 0 && heavy == 0 {
        return Err(MarginError::DegenerateMargin { value: p.b * p.c, n: p.n });
    }
    for &entry in &[heavy, light] {
        if entry > len {
            return Err(MarginError::EntryExceedsLength { entry, len });
        }
    }
    let mut v = Vec::with_capacity(len);
    v.extend(std::iter::repeat_n(heavy, heavy_count));
    v.extend(std::iter::repeat_n(light, p.n));
    MarginPair::new(v.clone(), v)
}

/// Gale–Ryser feasibility: does a 0/1 table with margins `mp` exist?
///
/// Sorts a copy of the row margins (input order is preserved) and checks
/// the partial sums against `Σ_j min(c_j, k)`. Entries exceeding the
/// opposite dimension make the margins infeasible and return `false`.
pub fn check_feasible(mp: &MarginPair) -> bool {
    let m = mp.num_rows();
    let n_cols = mp.num_cols();
    if mp.rows().iter().any(|&ri| ri > n_cols) || mp.cols().iter().any(|&cj| cj > m) {
        return false;
    }
    let mut sorted_r: Vec<usize> = mp.rows().to_vec();
    sorted_r.sort_unstable_by(|a, b| b.cmp(a));
    let mut lhs = 0usize;
    for (k, &rk) in sorted_r.iter().enumerate() {
        lhs += rk;
        let rhs: usize = mp.cols().iter().map(|&cj| cj.min(k + 1)).sum();
        if lhs > rhs {
            return false;
        }
    }
    true
}

/// The three margin blocks, each with its own limit-law hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    BottomRight,
    TopLeft,
    Side,
}

/// Result of [`classify_regime`]: which block-limit hypotheses hold, plus
/// whether the global non-emptiness bound on (B, C) is satisfied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeClassification {
    pub regimes: BTreeSet<Regime>,
    pub global_bound_ok: bool,
}

/// Upper bound on B for the top-left/side hypotheses:
/// `1 / (sqrt(C/3 - C^2/3) + C)`, defined for 0 < C < 1.
pub fn top_left_b_bound(c: f64) -> f64 {
    1.0 / ((c / 3.0 - c * c / 3.0).sqrt() + c)
}

/// Classify `(delta, b, c)` into the subset of regimes whose hypotheses
/// hold. Also evaluates the global non-emptiness bound: for `delta < 1`,
/// `C <= 1` and `B <= 1/C`; for `delta = 1`, `C <= 2` and `B <= 2/C`.
pub fn classify_regime(p: &BlockParams) -> RegimeClassification {
    let BlockParams { delta, b, c, .. } = *p;
    let mut regimes = BTreeSet::new();

    if (0.0..1.0).contains(&delta) && c > 0.0 && c < 1.0 && b > 0.0 && b <= 1.0 / c {
        regimes.insert(Regime::BottomRight);
    }
    let tl_bc_ok = c > 0.0 && c < 0.75 && b < top_left_b_bound(c);
    if delta > 0.5 && delta < 1.0 && tl_bc_ok {
        regimes.insert(Regime::TopLeft);
    }
    if delta > 0.0 && delta < 1.0 && tl_bc_ok {
        regimes.insert(Regime::Side);
    }

    let global_bound_ok = if delta < 1.0 {
        c <= 1.0 && b <= 1.0 / c
    } else {
        c <= 2.0 && b <= 2.0 / c
    };

    RegimeClassification { regimes, global_bound_ok }
}
