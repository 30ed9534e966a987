//! Near-uniform sampling of binary tables beyond oracle scale: the
//! checkerboard-swap Markov chain (symmetric proposal, uniform stationary
//! law) and the conditioned-Bernoulli rejection sampler built on a solved
//! typical table.

use crate::entropy::TypicalTable;
use crate::margins::{check_feasible, MarginPair};
use crate::oracle::BinaryTable;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("margins admit no binary table")]
    Infeasible,
    #[error("rejection sampler exhausted after {tries} tries")]
    Exhausted { tries: u64 },
    #[error("thinning interval must be at least 1")]
    InvalidThin,
}

/// Burn-in, thinning and seed for one chain run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(burn_in: u64, thin: u64, seed: u64) -> Result<Self, McmcError> {
        if thin < 1 {
            return Err(McmcError::InvalidThin);
        }
        Ok(Self { burn_in, thin, seed })
    }

    /// Heuristic defaults validated against the exact oracle at small
    /// scale: burn_in = 50·m·n·ln(m·n), thin = m·n.
    pub fn recommended(mp: &MarginPair, seed: u64) -> Self {
        let cells = (mp.num_rows() * mp.num_cols()) as f64;
        let burn_in = (50.0 * cells * cells.ln()).ceil() as u64;
        Self { burn_in, thin: (cells as u64).max(1), seed }
    }
}

/// Deterministic greedy construction of one valid table: rows in order,
/// each placing its ones in the columns with the largest residual margins
/// (ties broken by lowest index). Succeeds exactly when the margins are
/// feasible.
pub fn initial_table(mp: &MarginPair) -> Result<BinaryTable, McmcError> {
    if !check_feasible(mp) {
        return Err(McmcError::Infeasible);
    }
    let m = mp.num_rows();
    let n = mp.num_cols();
    let mut residual: Vec<usize> = mp.cols().to_vec();
    let mut entries = vec![vec![0u8; n]; m];
    for (i, row) in entries.iter_mut().enumerate() {
        let k = mp.rows()[i];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| residual[b].cmp(&residual[a]).then(a.cmp(&b)));
        for &j in order.iter().take(k) {
            if residual[j] == 0 {
                return Err(McmcError::Infeasible);
            }
            row[j] = 1;
            residual[j] -= 1;
        }
    }
    if residual.iter().any(|&c| c != 0) {
        return Err(McmcError::Infeasible);
    }
    Ok(BinaryTable::new(entries, mp.clone()).expect("greedy table satisfies margins"))
}

/// One lazy swap-chain step: pick two distinct rows and two distinct
/// columns uniformly; if the 2x2 minor is a checkerboard, flip it to the
/// other checkerboard, otherwise leave the table unchanged. Margins are
/// preserved exactly. Returns whether a flip happened.
pub fn swap_chain_step(table: &mut BinaryTable, rng: &mut ChaCha8Rng) -> bool {
    let m = table.margins().num_rows();
    let n = table.margins().num_cols();
    if m < 2 || n < 2 {
        return false;
    }
    let i0 = rng.random_range(0..m);
    let mut i1 = rng.random_range(0..m - 1);
    if i1 >= i0 {
        i1 += 1;
    }
    let j0 = rng.random_range(0..n);
    let mut j1 = rng.random_range(0..n - 1);
    if j1 >= j0 {
        j1 += 1;
    }
    let a = table.get(i0, j0);
    let b = table.get(i0, j1);
    let c = table.get(i1, j0);
    let d = table.get(i1, j1);
    if a == d && b == c && a != b {
        table.flip_checkerboard(i0, i1, j0, j1);
        true
    } else {
        false
    }
}

/// Run the swap chain and keep `k` samples after `burn_in` steps, spaced
/// `thin` steps apart. The chain consumes a ChaCha8 stream, so the seed
/// fully determines the output.
pub fn run_chain(mp: &MarginPair, cfg: &ChainConfig, k: usize) -> Result<Vec<BinaryTable>, McmcError> {
    if cfg.thin < 1 {
        return Err(McmcError::InvalidThin);
    }
    let mut table = initial_table(mp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.burn_in {
        swap_chain_step(&mut table, &mut rng);
    }
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        for _ in 0..cfg.thin {
            swap_chain_step(&mut table, &mut rng);
        }
        out.push(table.clone());
    }
    Ok(out)
}

/// An accepted rejection sample and the number of tries it took.
#[derive(Debug, Clone)]
pub struct RejectionOutcome {
    pub table: BinaryTable,
    pub tries: u64,
}

/// Draw independent Ber(z_ij) entries and accept the first matrix whose
/// margins match exactly. Conditioned on acceptance the sample is exactly
/// uniform, because the product law gives every valid table the same mass
/// e^(-g(Z)).
///
/// A draw is abandoned as soon as a completed row misses its margin; this
/// leaves the acceptance law unchanged and only skips doomed randomness.
pub fn bernoulli_rejection_sample(
    t: &TypicalTable,
    mp: &MarginPair,
    rng: &mut ChaCha8Rng,
    max_tries: u64,
) -> Result<RejectionOutcome, McmcError> {
    let m = mp.num_rows();
    let n = mp.num_cols();
    for tries in 1..=max_tries {
        let mut entries: Vec<Vec<u8>> = Vec::with_capacity(m);
        let mut row_ok = true;
        for i in 0..m {
            let mut row = vec![0u8; n];
            let mut sum = 0usize;
            for (j, cell) in row.iter_mut().enumerate() {
                let z = t.z[i][j];
                let bit = if z <= 0.0 {
                    false
                } else if z >= 1.0 {
                    true
                } else {
                    rng.random_bool(z)
                };
                if bit {
                    *cell = 1;
                    sum += 1;
                }
            }
            if sum != mp.rows()[i] {
                row_ok = false;
                break;
            }
            entries.push(row);
        }
        if !row_ok {
            continue;
        }
        let cols_ok = (0..n).all(|j| {
            entries.iter().map(|row| row[j] as usize).sum::<usize>() == mp.cols()[j]
        });
        if cols_ok {
            let table =
                BinaryTable::new(entries, mp.clone()).expect("accepted draw satisfies margins");
            return Ok(RejectionOutcome { table, tries });
        }
    }
    Err(McmcError::Exhausted { tries: max_tries })
}

/// Gelman–Rubin potential scale reduction factor across chains of equal
/// length. Values near 1 indicate the chains have mixed.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    assert!(m >= 2, "need at least two chains");
    let n = chains[0].len();
    assert!(n >= 2 && chains.iter().all(|c| c.len() == n), "chains must share a length >= 2");
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = nf / (m as f64 - 1.0)
        * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let v = (nf - 1.0) / nf * w + b / nf;
    (v / w).sqrt()
}

/// Convergence diagnostic: PSRF of the corner-cell indicator across four
/// independently seeded chains. Reported, never enforced.
pub fn corner_cell_psrf(
    mp: &MarginPair,
    cfg: &ChainConfig,
    samples_per_chain: usize,
) -> Result<f64, McmcError> {
    let mut traces = Vec::with_capacity(4);
    for chain_idx in 0..4u64 {
        let chain_cfg = ChainConfig {
            seed: cfg.seed.wrapping_add(1 + chain_idx),
            ..*cfg
        };
        let samples = run_chain(mp, &chain_cfg, samples_per_chain)?;
        traces.push(samples.iter().map(|t| t.get(0, 0) as f64).collect::<Vec<f64>>());
    }
    Ok(gelman_rubin(&traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margins::MarginPair;
    use crate::oracle::{enumerate_tables, exact_sample};
    use crate::stats::chi_square_test;

    fn mp(r: &[usize], c: &[usize]) -> MarginPair {
        MarginPair::new(r.to_vec(), c.to_vec()).unwrap()
    }

    #[test]
    fn initial_table_examples() {
        let t = initial_table(&mp(&[1, 1], &[1, 1])).unwrap();
        assert_eq!(t.entries(), &[vec![1, 0], vec![0, 1]]);

        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let t = initial_table(&pair).unwrap();
        let all = enumerate_tables(&pair, 10).unwrap();
        assert!(all.contains(&t));

        let t = initial_table(&mp(&[2, 2], &[2, 2])).unwrap();
        assert_eq!(t.entries(), &[vec![1, 1], vec![1, 1]]);

        assert!(matches!(initial_table(&mp(&[2, 2], &[3, 1])), Err(McmcError::Infeasible)));
    }

    #[test]
    fn swap_step_flips_the_unique_minor() {
        let pair = mp(&[1, 1], &[1, 1]);
        let mut t = initial_table(&pair).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let flipped = swap_chain_step(&mut t, &mut rng);
        assert!(flipped);
        assert_eq!(t.entries(), &[vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn swap_step_never_changes_forced_table() {
        let pair = mp(&[2, 2], &[2, 2]);
        let mut t = initial_table(&pair).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(!swap_chain_step(&mut t, &mut rng));
        }
        assert_eq!(t.entries(), &[vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn chain_preserves_margins_and_is_deterministic() {
        let pair = mp(&[3, 2, 2, 1], &[2, 2, 2, 2]);
        let cfg = ChainConfig::new(500, 7, 99).unwrap();
        let a = run_chain(&pair, &cfg, 40).unwrap();
        let b = run_chain(&pair, &cfg, 40).unwrap();
        assert_eq!(a, b);
        for t in &a {
            assert_eq!(t.margins(), &pair);
        }
    }

    #[test]
    fn chain_law_close_to_uniform() {
        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let tables = enumerate_tables(&pair, 10).unwrap();
        let cfg = ChainConfig::new(2_000, 9, 4).unwrap();
        let samples = run_chain(&pair, &cfg, 30_000).unwrap();
        let mut counts = vec![0u64; tables.len()];
        for s in &samples {
            let idx = tables.iter().position(|t| t == s).unwrap();
            counts[idx] += 1;
        }
        let total: u64 = counts.iter().sum();
        let tv: f64 = counts
            .iter()
            .map(|&c| (c as f64 / total as f64 - 0.2).abs())
            .sum();
        assert!(tv < 0.05, "TV to uniform = {tv}, counts = {counts:?}");
    }

    #[test]
    fn chain_autocorrelation_decays() {
        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let cfg = ChainConfig::new(1_000, 1, 12).unwrap();
        let samples = run_chain(&pair, &cfg, 40_000).unwrap();
        let xs: Vec<f64> = samples.iter().map(|t| t.get(0, 0) as f64).collect();
        let autocorr = |lag: usize| -> f64 {
            let n = xs.len() - lag;
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                num += (xs[i] - mean) * (xs[i + lag] - mean);
            }
            for x in &xs {
                den += (x - mean) * (x - mean);
            }
            num / den
        };
        let lag1 = autocorr(1);
        let lag30 = autocorr(30);
        assert!(lag1 > 0.2, "consecutive thin=1 samples should correlate, lag1={lag1}");
        assert!(lag30 < lag1, "autocorrelation should decay: lag1={lag1} lag30={lag30}");
    }

    #[test]
    fn chain_agrees_with_exact_sampler_on_corner_mean() {
        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let cfg = ChainConfig::recommended(&pair, 5);
        let chain = run_chain(&pair, &cfg, 20_000).unwrap();
        let exact = exact_sample(&pair, 6, 20_000).unwrap();
        let mean = |v: &[BinaryTable]| {
            v.iter().map(|t| t.get(0, 0) as f64).sum::<f64>() / v.len() as f64
        };
        assert!((mean(&chain) - mean(&exact)).abs() < 0.02);
    }

    #[test]
    fn rejection_sampler_mean_tries_matches_acceptance() {
        // For (1,1)/(1,1): z = 1/2 everywhere, acceptance = 2/16 = 1/8,
        // so tries are Geometric(1/8) with mean 8.
        let pair = mp(&[1, 1], &[1, 1]);
        let t = crate::entropy::solve_typical(&pair, 1e-12, 10_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut total_tries = 0u64;
        let k = 4_000;
        for _ in 0..k {
            let out = bernoulli_rejection_sample(&t, &pair, &mut rng, 1_000_000).unwrap();
            total_tries += out.tries;
        }
        let mean = total_tries as f64 / k as f64;
        // std of the mean ~ sqrt(56)/sqrt(k) ~ 0.12; allow 5 sigma.
        assert!((mean - 8.0).abs() < 0.6, "mean tries {mean}");
    }

    #[test]
    fn rejection_sampler_uniform_over_five_tables() {
        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let t = crate::entropy::solve_typical(&pair, 1e-12, 10_000).unwrap();
        let tables = enumerate_tables(&pair, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut counts = vec![0u64; 5];
        for _ in 0..5_000 {
            let out = bernoulli_rejection_sample(&t, &pair, &mut rng, 1_000_000).unwrap();
            let idx = tables.iter().position(|x| *x == out.table).unwrap();
            counts[idx] += 1;
        }
        let (_, p) = chi_square_test(&counts, &[0.2; 5]);
        assert!(p > 0.001, "chi-square p = {p}, counts {counts:?}");
    }

    #[test]
    fn rejection_acceptance_rate_matches_oracle_mass() {
        // Empirical acceptance must sit within [0.5a, 1.5a] where a is the
        // total product-law mass of the table set, summed table by table.
        for (r, c) in [(vec![1, 1], vec![1, 1]), (vec![2, 1, 1], vec![2, 1, 1])] {
            let pair = MarginPair::new(r, c).unwrap();
            let t = crate::entropy::solve_typical(&pair, 1e-12, 10_000).unwrap();
            let a: f64 = enumerate_tables(&pair, 100)
                .unwrap()
                .iter()
                .map(|d| {
                    d.entries()
                        .iter()
                        .enumerate()
                        .flat_map(|(i, row)| {
                            row.iter().enumerate().map(move |(j, &bit)| (i, j, bit))
                        })
                        .map(|(i, j, bit)| if bit == 1 { t.z[i][j] } else { 1.0 - t.z[i][j] })
                        .product::<f64>()
                })
                .sum();
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let k = 3_000u64;
            let mut tries = 0u64;
            for _ in 0..k {
                tries += bernoulli_rejection_sample(&t, &pair, &mut rng, 1_000_000)
                    .unwrap()
                    .tries;
            }
            let rate = k as f64 / tries as f64;
            assert!(
                rate >= 0.5 * a && rate <= 1.5 * a,
                "acceptance {rate:.4} outside [{:.4}, {:.4}]",
                0.5 * a,
                1.5 * a
            );
        }
    }

    #[test]
    fn chain_and_rejection_agree_in_distribution() {
        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let tables = enumerate_tables(&pair, 10).unwrap();
        let cfg = ChainConfig::recommended(&pair, 41);
        let chain = run_chain(&pair, &cfg, 8_000).unwrap();
        let t = crate::entropy::solve_typical(&pair, 1e-12, 10_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut chain_counts = vec![0u64; tables.len()];
        let mut rej_counts = vec![0u64; tables.len()];
        for s in &chain {
            chain_counts[tables.iter().position(|x| x == s).unwrap()] += 1;
        }
        for _ in 0..8_000 {
            let out = bernoulli_rejection_sample(&t, &pair, &mut rng, 1_000_000).unwrap();
            rej_counts[tables.iter().position(|x| *x == out.table).unwrap()] += 1;
        }
        let (_, p) = crate::stats::two_sample_chi_square(&chain_counts, &rej_counts);
        assert!(p > 0.001, "two-sample chi-square p = {p}");
    }

    #[test]
    fn rejection_sampler_exhausts() {
        let pair = mp(&[1, 1], &[1, 1]);
        let t = crate::entropy::solve_typical(&pair, 1e-12, 10_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            bernoulli_rejection_sample(&t, &pair, &mut rng, 0),
            Err(McmcError::Exhausted { tries: 0 })
        ));
    }

    #[test]
    fn gelman_rubin_mixed_chains_near_one() {
        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let cfg = ChainConfig::recommended(&pair, 77);
        let psrf = corner_cell_psrf(&pair, &cfg, 4_000).unwrap();
        assert!(psrf < 1.05, "psrf = {psrf}");
    }

    #[test]
    fn gelman_rubin_detects_disagreeing_chains() {
        let a = vec![0.0; 100];
        let b = vec![1.0; 100];
        assert!(gelman_rubin(&[a.clone(), a.clone()]) == 1.0);
        assert!(gelman_rubin(&[a, b]).is_infinite());
    }
}
