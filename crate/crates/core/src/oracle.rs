//! Exact counting, exact uniform sampling, and exact marginal/joint laws
//! for small binary contingency tables.
//!
//! The engine is a column-by-column dynamic program over the multiset of
//! residual row margins: rows with equal residuals are interchangeable, so
//! a state stores only how many rows carry each residual value. Counts are
//! arbitrary-precision integers and probabilities are big-integer ratios;
//! floats appear only at the very end.

use crate::margins::{check_feasible, MarginPair};
use crate::entropy::TypicalTable;
use num_bigint::{BigInt, BigUint};
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("state space exceeded: {states} states visited (budget {budget})")]
    StateSpaceExceeded { states: usize, budget: usize },
    #[error("table count exceeds enumeration cap {cap}")]
    CapExceeded { cap: usize },
    #[error("margins admit no binary table")]
    EmptySet,
    #[error("table does not match claimed margins")]
    MarginMismatch,
    #[error(
        "log-density deviates from -g(Z) by {deviation:.3e} (tolerance {tolerance:.1e}) on table {table:?}"
    )]
    AssertionFailed { deviation: f64, tolerance: f64, table: Box<BinaryTable> },
    #[error("cell ({0}, {1}) out of bounds")]
    CellOutOfBounds(usize, usize),
}

/// Resource limits for the counting DP.
#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    /// Maximum number of memoized DP states before giving up.
    pub max_states: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        // Comfortably covers every margin with <= 12 rows at small entry
        // sizes; a couple hundred MB at worst.
        Self { max_states: 2_000_000 }
    }
}

/// A 0/1 matrix together with the margins it satisfies.
///
/// Serializes as the bare entry matrix (a JSON array of 0/1 arrays); the
/// margins are recomputed on deserialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryTable {
    entries: Vec<Vec<u8>>,
    margins: MarginPair,
}

impl BinaryTable {
    /// Wrap an entry matrix, checking it against the claimed margins.
    pub fn new(entries: Vec<Vec<u8>>, margins: MarginPair) -> Result<Self, OracleError> {
        let m = margins.num_rows();
        let n = margins.num_cols();
        if entries.len() != m || entries.iter().any(|row| row.len() != n) {
            return Err(OracleError::MarginMismatch);
        }
        for (i, row) in entries.iter().enumerate() {
            if row.iter().any(|&x| x > 1) {
                return Err(OracleError::MarginMismatch);
            }
            if row.iter().map(|&x| x as usize).sum::<usize>() != margins.rows()[i] {
                return Err(OracleError::MarginMismatch);
            }
        }
        for j in 0..n {
            let col_sum: usize = entries.iter().map(|row| row[j] as usize).sum();
            if col_sum != margins.cols()[j] {
                return Err(OracleError::MarginMismatch);
            }
        }
        Ok(Self { entries, margins })
    }

    /// Derive the margins from the matrix itself.
    pub fn from_entries(entries: Vec<Vec<u8>>) -> Result<Self, OracleError> {
        let r: Vec<usize> =
            entries.iter().map(|row| row.iter().map(|&x| x as usize).sum()).collect();
        let n = entries.first().map_or(0, |row| row.len());
        let c: Vec<usize> = (0..n)
            .map(|j| entries.iter().map(|row| row[j] as usize).sum())
            .collect();
        let margins = MarginPair::new(r, c).map_err(|_| OracleError::MarginMismatch)?;
        Self::new(entries, margins)
    }

    pub fn entries(&self) -> &[Vec<u8>] {
        &self.entries
    }

    pub fn margins(&self) -> &MarginPair {
        &self.margins
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i][j]
    }

    /// Swap a checkerboard 2x2 minor in place; margins are unchanged.
    /// Caller must have verified the minor is a checkerboard.
    pub(crate) fn flip_checkerboard(&mut self, i0: usize, i1: usize, j0: usize, j1: usize) {
        for &(i, j) in &[(i0, j0), (i0, j1), (i1, j0), (i1, j1)] {
            self.entries[i][j] ^= 1;
        }
    }
}

impl Serialize for BinaryTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<Vec<u8>>::deserialize(d)?;
        BinaryTable::from_entries(entries).map_err(serde::de::Error::custom)
    }
}

/// Exact cardinality of the set of tables, with its natural log.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub count: BigUint,
    /// ln(count); negative infinity when the set is empty.
    pub log_count: f64,
}

/// Natural log of a big integer, exact to ~1e-15 relative.
pub fn ln_biguint(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 53 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 53;
    let top = (x >> shift).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

// ---------------------------------------------------------------------------
// Counting DP over residual-margin multisets
// ---------------------------------------------------------------------------

/// DP state: counts[v-1] = number of rows whose residual margin is v >= 1.
/// Rows that reached residual 0 are dropped; their count is implied.
type State = Vec<u32>;

struct Pascal(Vec<Vec<BigUint>>);

impl Pascal {
    fn new(n: usize) -> Self {
        let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut row = vec![BigUint::one(); i + 1];
            for j in 1..i {
                row[j] = &rows[i - 1][j - 1] + &rows[i - 1][j];
            }
            rows.push(row);
        }
        Pascal(rows)
    }

    fn choose(&self, n: usize, k: usize) -> &BigUint {
        &self.0[n][k]
    }
}

fn state_of(residuals: &[usize], max_val: usize) -> State {
    let mut s = vec![0u32; max_val];
    for &v in residuals {
        if v >= 1 {
            s[v - 1] += 1;
        }
    }
    s
}

/// One admissible way to fill a column: how many rows of each residual
/// class receive a 1, the multiplicity of concrete row choices, and the
/// successor state.
struct Allocation {
    taken_per_class: Vec<(usize, u32)>, // (residual value, rows taken)
    ways: BigUint,
    next: State,
}

/// Enumerate the admissible allocations for one column, in a fixed
/// deterministic order (descending residual class, ascending take count).
fn allocations(state: &State, col_margin: usize, remaining: usize, pascal: &Pascal) -> Vec<Allocation> {
    let max_val = state.len();
    let mut out = Vec::new();
    // capacity_below[v] = total selectable rows in classes < v
    let mut cap_below = vec![0usize; max_val + 2];
    for v in 1..=max_val {
        cap_below[v + 1] = cap_below[v] + state[v - 1] as usize;
    }
    struct Dfs<'a> {
        state: &'a State,
        pascal: &'a Pascal,
        remaining: usize,
        cap_below: &'a [usize],
        out: &'a mut Vec<Allocation>,
        picks: Vec<(usize, u32)>,
    }
    impl Dfs<'_> {
        fn go(&mut self, v: usize, budget: usize, ways: BigUint) {
            if v == 0 {
                if budget != 0 {
                    return;
                }
                // Materialize successor state.
                let mut next = self.state.clone();
                for &(val, take) in &self.picks {
                    next[val - 1] -= take;
                    if val >= 2 {
                        next[val - 2] += take;
                    }
                }
                // Any row whose residual now exceeds remaining-1 is dead.
                for (idx, &cnt) in next.iter().enumerate() {
                    if cnt > 0 && idx + 1 > self.remaining - 1 {
                        return;
                    }
                }
                self.out.push(Allocation {
                    taken_per_class: self.picks.clone(),
                    ways,
                    next,
                });
                return;
            }
            let avail = self.state[v - 1] as usize;
            let (lo, hi);
            if v == self.remaining {
                // These rows must take a 1 in every remaining column.
                if avail > budget {
                    return;
                }
                lo = avail;
                hi = avail;
            } else {
                hi = avail.min(budget);
                lo = budget.saturating_sub(self.cap_below[v]);
            }
            if lo > hi {
                return;
            }
            for take in lo..=hi {
                let w = if take == 0 {
                    ways.clone()
                } else {
                    &ways * self.pascal.choose(avail, take)
                };
                if take > 0 {
                    self.picks.push((v, take as u32));
                }
                self.go(v - 1, budget - take, w);
                if take > 0 {
                    self.picks.pop();
                }
            }
        }
    }
    let mut dfs = Dfs {
        state,
        pascal,
        remaining,
        cap_below: &cap_below,
        out: &mut out,
        picks: Vec::new(),
    };
    dfs.go(max_val, col_margin, BigUint::one());
    out
}

/// Memoized "number of completions" engine shared by counting and sampling.
struct Counter<'a> {
    cols: &'a [usize],
    pascal: Pascal,
    memo: HashMap<(usize, State), BigUint>,
    limits: OracleLimits,
}

impl<'a> Counter<'a> {
    fn new(mp: &'a MarginPair, limits: OracleLimits) -> Self {
        Counter {
            cols: mp.cols(),
            pascal: Pascal::new(mp.num_rows()),
            memo: HashMap::new(),
            limits,
        }
    }

    fn completions(&mut self, col: usize, state: &State) -> Result<BigUint, OracleError> {
        let n_cols = self.cols.len();
        if col == n_cols {
            return if state.iter().all(|&c| c == 0) {
                Ok(BigUint::one())
            } else {
                Ok(BigUint::zero())
            };
        }
        if let Some(hit) = self.memo.get(&(col, state.clone())) {
            return Ok(hit.clone());
        }
        let remaining = n_cols - col;
        let mut total = BigUint::zero();
        for alloc in allocations(state, self.cols[col], remaining, &self.pascal) {
            let sub = self.completions(col + 1, &alloc.next)?;
            total += alloc.ways * sub;
        }
        if self.memo.len() >= self.limits.max_states {
            return Err(OracleError::StateSpaceExceeded {
                states: self.memo.len(),
                budget: self.limits.max_states,
            });
        }
        self.memo.insert((col, state.clone()), total.clone());
        Ok(total)
    }
}

/// Exact number of binary tables with the given margins.
pub fn count_tables(mp: &MarginPair) -> Result<CountTable, OracleError> {
    count_tables_with(mp, OracleLimits::default())
}

pub fn count_tables_with(mp: &MarginPair, limits: OracleLimits) -> Result<CountTable, OracleError> {
    // Cheap rejections first so obviously-infeasible margins cost nothing.
    if !check_feasible(mp) {
        return Ok(CountTable { count: BigUint::zero(), log_count: f64::NEG_INFINITY });
    }
    let init = state_of(mp.rows(), mp.num_cols());
    let mut counter = Counter::new(mp, limits);
    let count = counter.completions(0, &init)?;
    let log_count = ln_biguint(&count);
    Ok(CountTable { count, log_count })
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// All tables with the given margins, at most `cap` of them, in descending
/// row-major bit order (all-ones-first within each row position).
pub fn enumerate_tables(mp: &MarginPair, cap: usize) -> Result<Vec<BinaryTable>, OracleError> {
    let m = mp.num_rows();
    let mut out: Vec<BinaryTable> = Vec::new();
    if !check_feasible(mp) {
        return Ok(out);
    }
    let mut rows_acc: Vec<Vec<u8>> = Vec::with_capacity(m);
    let mut col_residual: Vec<usize> = mp.cols().to_vec();

    fn remaining_feasible(row_margins: &[usize], col_residual: &[usize]) -> bool {
        let m = row_margins.len();
        if col_residual.iter().any(|&c| c > m) {
            return false;
        }
        let rs: usize = row_margins.iter().sum();
        let cs: usize = col_residual.iter().sum();
        if rs != cs {
            return false;
        }
        let mut sorted: Vec<usize> = row_margins.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let mut lhs = 0usize;
        for (k, &rk) in sorted.iter().enumerate() {
            lhs += rk;
            let rhs: usize = col_residual.iter().map(|&c| c.min(k + 1)).sum();
            if lhs > rhs {
                return false;
            }
        }
        true
    }

    // Recursive row filler; combinations of 1-positions are generated in
    // ascending position-lex order, which is descending bit order.
    fn fill(
        i: usize,
        mp: &MarginPair,
        rows_acc: &mut Vec<Vec<u8>>,
        col_residual: &mut Vec<usize>,
        out: &mut Vec<BinaryTable>,
        cap: usize,
    ) -> Result<(), OracleError> {
        let m = mp.num_rows();
        let n = mp.num_cols();
        if i == m {
            if col_residual.iter().all(|&c| c == 0) {
                if out.len() >= cap {
                    return Err(OracleError::CapExceeded { cap });
                }
                out.push(
                    BinaryTable::new(rows_acc.clone(), mp.clone())
                        .expect("constructed table satisfies margins"),
                );
            }
            return Ok(());
        }
        let k = mp.rows()[i];
        let mut positions: Vec<usize> = (0..k).collect();
        loop {
            // Try this combination if every chosen column still has margin.
            if positions.iter().all(|&j| col_residual[j] > 0) {
                let mut row = vec![0u8; n];
                for &j in &positions {
                    row[j] = 1;
                    col_residual[j] -= 1;
                }
                if remaining_feasible(&mp.rows()[i + 1..], col_residual) {
                    rows_acc.push(row.clone());
                    fill(i + 1, mp, rows_acc, col_residual, out, cap)?;
                    rows_acc.pop();
                }
                for &j in &positions {
                    col_residual[j] += 1;
                }
            }
            // Next combination of k positions out of n, lexicographic.
            if k == 0 {
                break;
            }
            let mut idx = k;
            loop {
                if idx == 0 {
                    return Ok(());
                }
                idx -= 1;
                if positions[idx] != idx + n - k {
                    break;
                }
                if idx == 0 {
                    return Ok(());
                }
            }
            positions[idx] += 1;
            for t in idx + 1..k {
                positions[t] = positions[t - 1] + 1;
            }
        }
        Ok(())
    }

    fill(0, mp, &mut rows_acc, &mut col_residual, &mut out, cap)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exact uniform sampling
// ---------------------------------------------------------------------------

/// Uniform big integer in [0, bound), by rejection on the top bit block.
fn uniform_below(rng: &mut ChaCha8Rng, bound: &BigUint) -> BigUint {
    debug_assert!(!bound.is_zero());
    let bits = bound.bits();
    let n_words = bits.div_ceil(64) as usize;
    let top_mask: u64 = if bits.is_multiple_of(64) { u64::MAX } else { (1u64 << (bits % 64)) - 1 };
    loop {
        let mut words = vec![0u64; n_words];
        for w in words.iter_mut() {
            *w = rng.random::<u64>();
        }
        words[n_words - 1] &= top_mask;
        let candidate = BigUint::from_slice(
            &words
                .iter()
                .flat_map(|w| [(*w & 0xFFFF_FFFF) as u32, (*w >> 32) as u32])
                .collect::<Vec<u32>>(),
        );
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Draw `k` exactly-uniform i.i.d. tables via sequential column sampling
/// weighted by DP completion counts. The randomness is a ChaCha8 stream,
/// so the seed fully determines the output.
pub fn exact_sample(mp: &MarginPair, seed: u64, k: usize) -> Result<Vec<BinaryTable>, OracleError> {
    exact_sample_with(mp, seed, k, OracleLimits::default())
}

pub fn exact_sample_with(
    mp: &MarginPair,
    seed: u64,
    k: usize,
    limits: OracleLimits,
) -> Result<Vec<BinaryTable>, OracleError> {
    let m = mp.num_rows();
    let n_cols = mp.num_cols();
    let init = state_of(mp.rows(), n_cols);
    let mut counter = Counter::new(mp, limits);
    let total = if check_feasible(mp) {
        counter.completions(0, &init)?
    } else {
        BigUint::zero()
    };
    if total.is_zero() {
        return Err(OracleError::EmptySet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(k);
    for _ in 0..k {
        let mut entries = vec![vec![0u8; n_cols]; m];
        let mut residuals: Vec<usize> = mp.rows().to_vec();
        let mut state = init.clone();
        for col in 0..n_cols {
            let remaining = n_cols - col;
            let allocs = allocations(&state, mp.cols()[col], remaining, &counter.pascal);
            // Weight each allocation by (concrete choices) x (completions).
            let mut weights: Vec<BigUint> = Vec::with_capacity(allocs.len());
            let mut sum = BigUint::zero();
            for alloc in &allocs {
                let w = &alloc.ways * counter.completions(col + 1, &alloc.next)?;
                sum += &w;
                weights.push(w);
            }
            debug_assert!(!sum.is_zero(), "reachable state must have a completion");
            let mut draw = uniform_below(&mut rng, &sum);
            let mut chosen = allocs.len() - 1;
            for (idx, w) in weights.iter().enumerate() {
                if &draw < w {
                    chosen = idx;
                    break;
                }
                draw -= w;
            }
            let alloc = &allocs[chosen];
            // Pick the concrete rows uniformly within each residual class.
            // Class membership is snapshotted before any update so a row
            // bumped down a class cannot be chosen twice in one column.
            let picks: Vec<Vec<usize>> = alloc
                .taken_per_class
                .iter()
                .map(|&(val, take)| {
                    let mut class_rows: Vec<usize> =
                        (0..m).filter(|&i| residuals[i] == val).collect();
                    let take = take as usize;
                    for t in 0..take {
                        let pick = rng.random_range(t..class_rows.len());
                        class_rows.swap(t, pick);
                    }
                    class_rows.truncate(take);
                    class_rows
                })
                .collect();
            for row in picks.into_iter().flatten() {
                entries[row][col] = 1;
                residuals[row] -= 1;
            }
            state = alloc.next.clone();
        }
        samples.push(
            BinaryTable::new(entries, mp.clone()).expect("sampled table satisfies margins"),
        );
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Exact marginals and joint laws
// ---------------------------------------------------------------------------

/// Exact P(X_ij = 1) under the uniform law, as a big-integer ratio.
///
/// Forces the cell by repeatedly decrementing its row and column margins
/// and counting, via the alternating identity
/// #{d_ij = 1} = Σ_{t>=1} (-1)^{t+1} count(r - t e_i, c - t e_j).
pub fn exact_marginal(mp: &MarginPair, cell: (usize, usize)) -> Result<Ratio<BigInt>, OracleError> {
    exact_marginal_with(mp, cell, OracleLimits::default())
}

pub fn exact_marginal_with(
    mp: &MarginPair,
    cell: (usize, usize),
    limits: OracleLimits,
) -> Result<Ratio<BigInt>, OracleError> {
    let (i, j) = cell;
    if i >= mp.num_rows() || j >= mp.num_cols() {
        return Err(OracleError::CellOutOfBounds(i, j));
    }
    let total = count_tables_with(mp, limits)?.count;
    if total.is_zero() {
        return Err(OracleError::EmptySet);
    }
    let mut acc = BigInt::zero();
    let mut sign = BigInt::one();
    let depth = mp.rows()[i].min(mp.cols()[j]);
    for t in 1..=depth {
        let mut r = mp.rows().to_vec();
        let mut c = mp.cols().to_vec();
        r[i] -= t;
        c[j] -= t;
        let minor = MarginPair::new(r, c).expect("decremented margins keep equal sums");
        let cnt = count_tables_with(&minor, limits)?.count;
        acc += &sign * BigInt::from(cnt);
        sign = -sign;
    }
    debug_assert!(!acc.is_negative());
    Ok(Ratio::new(acc, BigInt::from(total)))
}

/// Convenience float version of [`exact_marginal`].
pub fn exact_marginal_f64(mp: &MarginPair, cell: (usize, usize)) -> Result<f64, OracleError> {
    Ok(ratio_to_f64(&exact_marginal(mp, cell)?))
}

pub fn ratio_to_f64(r: &Ratio<BigInt>) -> f64 {
    let num = r.numer().to_f64().unwrap_or(f64::NAN);
    let den = r.denom().to_f64().unwrap_or(f64::NAN);
    if num.is_finite() && den.is_finite() && den != 0.0 {
        num / den
    } else {
        // Fall back to logs for very large integers.
        let sign = if r.numer().is_negative() { -1.0 } else { 1.0 };
        let ln = ln_biguint(&r.numer().magnitude().clone())
            - ln_biguint(&r.denom().magnitude().clone());
        sign * ln.exp()
    }
}

/// Count tables whose distinguished `row` takes the prescribed bits at the
/// prescribed columns. DP with the distinguished row tracked separately.
pub fn count_with_row_pattern(
    mp: &MarginPair,
    row: usize,
    fixed: &[(usize, u8)],
    limits: OracleLimits,
) -> Result<BigUint, OracleError> {
    let n_cols = mp.num_cols();
    let m = mp.num_rows();
    if row >= m || fixed.iter().any(|&(j, b)| j >= n_cols || b > 1) {
        return Err(OracleError::CellOutOfBounds(row, fixed.iter().map(|&(j, _)| j).max().unwrap_or(0)));
    }
    if !check_feasible(mp) {
        return Ok(BigUint::zero());
    }
    let mut fixed_bits: Vec<Option<u8>> = vec![None; n_cols];
    for &(j, b) in fixed {
        fixed_bits[j] = Some(b);
    }
    let others: Vec<usize> = (0..m).filter(|&i| i != row).map(|i| mp.rows()[i]).collect();
    let init = state_of(&others, n_cols);
    let pascal = Pascal::new(m);
    let mut memo: HashMap<(usize, u32, State), BigUint> = HashMap::new();

    struct Ctx<'a> {
        cols: &'a [usize],
        fixed_bits: &'a [Option<u8>],
        pascal: &'a Pascal,
        memo: &'a mut HashMap<(usize, u32, State), BigUint>,
        max_states: usize,
    }

    fn rec(ctx: &mut Ctx, col: usize, d_res: u32, state: &State) -> Result<BigUint, OracleError> {
        let n_cols = ctx.cols.len();
        if col == n_cols {
            return if d_res == 0 && state.iter().all(|&c| c == 0) {
                Ok(BigUint::one())
            } else {
                Ok(BigUint::zero())
            };
        }
        let key = (col, d_res, state.clone());
        if let Some(hit) = ctx.memo.get(&key) {
            return Ok(hit.clone());
        }
        let remaining = n_cols - col;
        let mut total = BigUint::zero();
        let actions: &[u8] = match ctx.fixed_bits[col] {
            Some(b) => &[b],
            None => &[0, 1],
        };
        for &bit in actions {
            if bit == 1 && (d_res == 0 || ctx.cols[col] == 0) {
                continue;
            }
            if bit == 0 && d_res as usize >= remaining {
                continue; // distinguished row could no longer finish
            }
            let d_next = d_res - bit as u32;
            let budget = ctx.cols[col] - bit as usize;
            for alloc in allocations(state, budget, remaining, ctx.pascal) {
                let sub = rec(ctx, col + 1, d_next, &alloc.next)?;
                total += alloc.ways * sub;
            }
        }
        if ctx.memo.len() >= ctx.max_states {
            return Err(OracleError::StateSpaceExceeded {
                states: ctx.memo.len(),
                budget: ctx.max_states,
            });
        }
        ctx.memo.insert(key, total.clone());
        Ok(total)
    }

    let mut ctx = Ctx {
        cols: mp.cols(),
        fixed_bits: &fixed_bits,
        pascal: &pascal,
        memo: &mut memo,
        max_states: limits.max_states,
    };
    rec(&mut ctx, 0, mp.rows()[row] as u32, &init)
}

/// Exact joint law of the cells `(row, cols[t])`: entry `p` of the result
/// is P(pattern), where cell `t` carries bit `(p >> t) & 1`.
pub fn exact_joint_law(
    mp: &MarginPair,
    row: usize,
    cols: &[usize],
) -> Result<Vec<Ratio<BigInt>>, OracleError> {
    let limits = OracleLimits::default();
    let total = count_tables_with(mp, limits)?.count;
    if total.is_zero() {
        return Err(OracleError::EmptySet);
    }
    let k = cols.len();
    assert!(k <= 16, "joint pattern space limited to 16 cells");
    let denom = BigInt::from(total);
    let mut law = Vec::with_capacity(1 << k);
    for p in 0u32..(1 << k) {
        let fixed: Vec<(usize, u8)> =
            cols.iter().enumerate().map(|(t, &j)| (j, ((p >> t) & 1) as u8)).collect();
        let cnt = count_with_row_pattern(mp, row, &fixed, limits)?;
        law.push(Ratio::new(BigInt::from(cnt), denom.clone()));
    }
    Ok(law)
}

// ---------------------------------------------------------------------------
// Barvinok uniformity verification
// ---------------------------------------------------------------------------

/// Outcome of checking that the independent-Bernoulli matrix built from a
/// typical table gives equal mass to every table with the margins.
#[derive(Debug, Clone, Serialize)]
pub struct UniformityReport {
    pub table_count: usize,
    /// max over tables D of | ln P(Y=D) + g(Z) |
    pub max_log_density_deviation: f64,
    pub entropy: f64,
    pub log_count: f64,
    /// ln( count * e^{-g(Z)} ) = ln P(Y lands in the margin set); must be <= 0.
    pub log_acceptance: f64,
}

/// For every table D with the margins, check ln P(Y=D) = -g(Z) within
/// `tolerance` when Y has independent Ber(z_ij) entries, and that the total
/// conditioned mass count * e^{-g(Z)} does not exceed 1.
pub fn verify_barvinok_uniformity(
    mp: &MarginPair,
    t: &TypicalTable,
    tolerance: f64,
) -> Result<UniformityReport, OracleError> {
    const ENUM_CAP: usize = 2_000_000;
    let tables = enumerate_tables(mp, ENUM_CAP)?;
    if tables.is_empty() {
        return Err(OracleError::EmptySet);
    }
    let g = t.entropy;
    let mut max_dev = 0.0f64;
    for table in &tables {
        let mut log_p = 0.0f64;
        for (i, row) in table.entries().iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                let z = t.z[i][j];
                if z <= 0.0 || z >= 1.0 {
                    // Forced cell: the table must agree with it exactly.
                    if (d as f64 - z).abs() > 0.0 {
                        return Err(OracleError::AssertionFailed {
                            deviation: f64::INFINITY,
                            tolerance,
                            table: Box::new(table.clone()),
                        });
                    }
                    continue; // contributes ln 1 = 0
                }
                log_p += if d == 1 { z.ln() } else { (1.0 - z).ln() };
            }
        }
        let dev = (log_p + g).abs();
        if dev > max_dev {
            max_dev = dev;
        }
        if dev > tolerance {
            return Err(OracleError::AssertionFailed {
                deviation: dev,
                tolerance,
                table: Box::new(table.clone()),
            });
        }
    }
    let log_count = (tables.len() as f64).ln();
    let log_acceptance = log_count - g;
    if log_acceptance > tolerance {
        return Err(OracleError::AssertionFailed {
            deviation: log_acceptance,
            tolerance,
            table: Box::new(tables[0].clone()),
        });
    }
    Ok(UniformityReport {
        table_count: tables.len(),
        max_log_density_deviation: max_dev,
        entropy: g,
        log_count,
        log_acceptance: log_acceptance.min(0.0),
    })
}
