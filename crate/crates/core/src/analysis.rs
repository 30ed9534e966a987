//! Statistical experiments against the limiting laws: marginal Bernoulli
//! convergence per block, in-block joint independence, moment convergence,
//! laws of large numbers for truncated row sums, and log–log rate fitting.
//!
//! At oracle scale the experiments are checked against exact finite-n
//! quantities; at chain scale they are compared with the closed-form
//! limits under documented tolerances — the limiting laws are asymptotic and
//! finite n only approaches them.

use crate::entropy::{limit_law, solve_typical, SolveError, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::margins::{build_block_margins, classify_regime, BlockParams, MarginError, MarginPair};
use crate::mcmc::{bernoulli_rejection_sample, run_chain, ChainConfig, McmcError};
use crate::oracle::{exact_joint_law, exact_marginal, exact_sample, ratio_to_f64, BinaryTable, OracleError};
use crate::stats::{linear_fit, mean_std, tv_distance};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("k_cells = {k_cells} exceeds the joint-law window {window:.3} at n = {n}")]
    WindowViolated { k_cells: usize, window: f64, n: usize },
    #[error("joint experiments cap k_cells at 6, got {0}")]
    TooManyCells(usize),
    #[error("cells span more than one block")]
    MixedBlocks,
    #[error("moment powers must be positive integers")]
    InvalidPowers,
    #[error("parameters violate the limit-law hypotheses: {0}")]
    HypothesisViolated(String),
    #[error("rate fit needs at least 4 sweep points with positive gaps")]
    DegenerateFit,
    #[error(transparent)]
    Margin(#[from] MarginError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
}

/// The three margin blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Block {
    TopLeft,
    Side,
    BottomRight,
}

impl Block {
    pub fn label(&self) -> &'static str {
        match self {
            Block::TopLeft => "TL",
            Block::Side => "SIDE",
            Block::BottomRight => "BR",
        }
    }

    /// Which block a cell belongs to, given the heavy count k0.
    pub fn of_cell(cell: (usize, usize), k0: usize) -> Block {
        match (cell.0 < k0, cell.1 < k0) {
            (true, true) => Block::TopLeft,
            (false, false) => Block::BottomRight,
            _ => Block::Side,
        }
    }

    /// The limiting mean of the block.
    pub fn limit_mean(&self, p: &BlockParams) -> Result<f64, AnalysisError> {
        let law = limit_law(p)?;
        Ok(match self {
            Block::TopLeft => law.mean_tl,
            Block::Side => law.mean_side,
            Block::BottomRight => law.mean_br,
        })
    }

    /// Exponent of the block's limiting TV decay rate, `n^(-eta)`.
    pub fn eta(&self, delta: f64) -> f64 {
        match self {
            Block::BottomRight => 0.5,
            Block::TopLeft => delta - 0.5,
            Block::Side => delta / 2.0,
        }
    }
}

/// Which sampling backend an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Exact,
    Mcmc,
    Rejection,
}

/// Accumulated sample statistics for designated cells.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalLaw {
    /// cell -> (ones, total)
    pub cell_counts: BTreeMap<(usize, usize), (u64, u64)>,
    /// bit pattern -> count, for the cell tuple in `joint_cells`
    pub joint_counts: BTreeMap<u32, u64>,
    pub joint_cells: Vec<(usize, usize)>,
    /// per-sample truncated row sums
    pub row_sums: Vec<u64>,
}

impl EmpiricalLaw {
    pub fn record_cell(&mut self, cell: (usize, usize), value: u8) {
        let e = self.cell_counts.entry(cell).or_insert((0, 0));
        e.0 += value as u64;
        e.1 += 1;
    }

    pub fn record_pattern(&mut self, pattern: u32) {
        *self.joint_counts.entry(pattern).or_insert(0) += 1;
    }

    /// Pure merge of two accumulations over the same cell tuple.
    pub fn merge(mut self, other: EmpiricalLaw) -> EmpiricalLaw {
        assert_eq!(self.joint_cells, other.joint_cells);
        for (cell, (ones, total)) in other.cell_counts {
            let e = self.cell_counts.entry(cell).or_insert((0, 0));
            e.0 += ones;
            e.1 += total;
        }
        for (pat, cnt) in other.joint_counts {
            *self.joint_counts.entry(pat).or_insert(0) += cnt;
        }
        self.row_sums.extend(other.row_sums);
        self
    }
}

/// Total variation distance between an empirical Bernoulli law and
/// Ber(lambda), in the L1 convention: 2 |ones/total - lambda|.
pub fn tv_distance_bernoulli(emp: (u64, u64), lambda: f64) -> f64 {
    assert!(emp.1 > 0, "empirical law needs at least one observation");
    2.0 * (emp.0 as f64 / emp.1 as f64 - lambda).abs()
}

/// splitmix64 step, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw k tables from the margins with the chosen backend.
pub fn draw_tables(
    mp: &MarginPair,
    sampler: SamplerKind,
    k: usize,
    seed: u64,
) -> Result<Vec<BinaryTable>, AnalysisError> {
    match sampler {
        SamplerKind::Exact => Ok(exact_sample(mp, seed, k)?),
        SamplerKind::Mcmc => {
            let cfg = ChainConfig::recommended(mp, seed);
            Ok(run_chain(mp, &cfg, k)?)
        }
        SamplerKind::Rejection => {
            let t = solve_typical(mp, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(k);
            for _ in 0..k {
                out.push(bernoulli_rejection_sample(&t, mp, &mut rng, 10_000_000)?.table);
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Marginal experiment
// ---------------------------------------------------------------------------

/// Per-block outcome of a marginal-law experiment.
#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub params: BlockParams,
    pub block: Block,
    pub n: usize,
    pub k: usize,
    /// representative cell of the block (0-indexed)
    pub cell: (usize, usize),
    /// pooled mean over every cell of the block
    pub empirical: f64,
    /// mean of the representative cell alone
    pub cell_empirical: f64,
    /// the limiting mean of the block
    pub target: f64,
    /// 2 |empirical - target|
    pub tv: f64,
    /// conservative binomial standard error sqrt(p(1-p)/k)
    pub stderr: f64,
}

/// Sample k tables and compare each block's empirical ones-frequency with
/// its limiting Bernoulli mean. Representative cells are (0,0), (0,k0),
/// (k0,k0); pooled means average over all exchangeable cells of a block.
pub fn marginal_experiment(
    p: &BlockParams,
    sampler: SamplerKind,
    k: usize,
    seed: u64,
) -> Result<Vec<BlockReport>, AnalysisError> {
    let classification = classify_regime(p);
    if classification.regimes.is_empty() {
        return Err(AnalysisError::HypothesisViolated(format!(
            "parameters {p:?} satisfy no block-limit hypothesis"
        )));
    }
    let mp = build_block_margins(p)?;
    let k0 = p.heavy_count();
    let tables = draw_tables(&mp, sampler, k, seed)?;
    let law = limit_law(p)?;
    let side = mp.num_cols();

    let mut block_ones = [0u64; 3];
    let mut block_cells = [0u64; 3];
    let mut rep_ones = [0u64; 3];
    let reps = [(0usize, 0usize), (0, k0), (k0, k0)];
    for t in &tables {
        for i in 0..side {
            for j in 0..side {
                let idx = match Block::of_cell((i, j), k0) {
                    Block::TopLeft => 0,
                    Block::Side => 1,
                    Block::BottomRight => 2,
                };
                block_ones[idx] += t.get(i, j) as u64;
                block_cells[idx] += 1;
            }
        }
        for (r, &cell) in reps.iter().enumerate() {
            rep_ones[r] += t.get(cell.0, cell.1) as u64;
        }
    }

    let blocks = [Block::TopLeft, Block::Side, Block::BottomRight];
    let targets = [law.mean_tl, law.mean_side, law.mean_br];
    let mut reports = Vec::with_capacity(3);
    for idx in 0..3 {
        let pooled = block_ones[idx] as f64 / block_cells[idx] as f64;
        let cell_emp = rep_ones[idx] as f64 / k as f64;
        let target = targets[idx];
        reports.push(BlockReport {
            params: *p,
            block: blocks[idx],
            n: p.n,
            k,
            cell: reps[idx],
            empirical: pooled,
            cell_empirical: cell_emp,
            target,
            tv: 2.0 * (pooled - target).abs(),
            stderr: (pooled * (1.0 - pooled) / k as f64).sqrt(),
        });
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// Joint-law experiment
// ---------------------------------------------------------------------------

/// Largest admissible number of jointly-observed cells in a block at
/// scale n (constant 1): the window inside which the joint law tends to
/// the product law.
pub fn joint_window(block: Block, n: usize, delta: f64) -> f64 {
    let nf = n as f64;
    match block {
        Block::BottomRight => nf.powf(1.0 - delta),
        Block::TopLeft => nf.powf(2.0 * delta - 1.0) / nf.ln(),
        Block::Side => nf.powf(delta) / nf.ln(),
    }
}

/// The k cells observed for a block: a run along the block's first row.
pub fn block_cells(block: Block, k0: usize, k_cells: usize) -> Vec<(usize, usize)> {
    match block {
        Block::TopLeft => (0..k_cells).map(|t| (0, t)).collect(),
        Block::Side => (0..k_cells).map(|t| (0, k0 + t)).collect(),
        Block::BottomRight => (0..k_cells).map(|t| (k0, k0 + t)).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JointReport {
    pub params: BlockParams,
    pub block: Block,
    pub n: usize,
    pub k_cells: usize,
    pub k_samples: usize,
    pub cells: Vec<(usize, usize)>,
    /// empirical probability of each of the 2^k_cells bit patterns;
    /// pattern p assigns bit `(p >> t) & 1` to the t-th cell
    pub empirical: Vec<f64>,
    /// the product Bernoulli law V_k(limit mean)
    pub target: Vec<f64>,
    /// L1 total variation between them
    pub tv: f64,
}

/// Collect the joint bit-pattern law of `k_cells` fixed cells in one block
/// and compare it with the product Bernoulli law at the block's limiting
/// mean.
pub fn joint_block_experiment(
    p: &BlockParams,
    block: Block,
    k_cells: usize,
    k_samples: usize,
    seed: u64,
    sampler: SamplerKind,
) -> Result<JointReport, AnalysisError> {
    if k_cells > 6 {
        return Err(AnalysisError::TooManyCells(k_cells));
    }
    let window = joint_window(block, p.n, p.delta);
    if k_cells == 0 || (k_cells as f64) > window {
        return Err(AnalysisError::WindowViolated { k_cells, window, n: p.n });
    }
    let k0 = p.heavy_count();
    let cells = block_cells(block, k0, k_cells);
    let fits = match block {
        Block::TopLeft => k_cells <= k0,
        _ => k_cells <= p.n,
    };
    if !fits {
        return Err(AnalysisError::WindowViolated { k_cells, window, n: p.n });
    }

    let mp = build_block_margins(p)?;
    let tables = draw_tables(&mp, sampler, k_samples, seed)?;
    let mut law = EmpiricalLaw { joint_cells: cells.clone(), ..Default::default() };
    for t in &tables {
        let mut pattern = 0u32;
        for (tix, &(i, j)) in cells.iter().enumerate() {
            law.record_cell((i, j), t.get(i, j));
            pattern |= (t.get(i, j) as u32) << tix;
        }
        law.record_pattern(pattern);
    }

    let mean = block.limit_mean(p)?;
    let n_patterns = 1usize << k_cells;
    let empirical: Vec<f64> = (0..n_patterns as u32)
        .map(|pat| *law.joint_counts.get(&pat).unwrap_or(&0) as f64 / k_samples as f64)
        .collect();
    let target: Vec<f64> = (0..n_patterns as u32)
        .map(|pat| {
            (0..k_cells)
                .map(|t| if (pat >> t) & 1 == 1 { mean } else { 1.0 - mean })
                .product()
        })
        .collect();
    let tv = tv_distance(&empirical, &target);
    Ok(JointReport {
        params: *p,
        block,
        n: p.n,
        k_cells,
        k_samples,
        cells,
        empirical,
        target,
        tv,
    })
}

/// Exact finite-n independence gap: the TV between the exact joint law of
/// the block's first `k_cells` cells and the product of their exact
/// marginals, both computed by the oracle.
pub fn exact_joint_independence_gap(
    p: &BlockParams,
    block: Block,
    k_cells: usize,
) -> Result<f64, AnalysisError> {
    if k_cells > 6 {
        return Err(AnalysisError::TooManyCells(k_cells));
    }
    let k0 = p.heavy_count();
    let cells = block_cells(block, k0, k_cells);
    let mp = build_block_margins(p)?;
    let row = cells[0].0;
    let cols: Vec<usize> = cells.iter().map(|&(_, j)| j).collect();
    let joint = exact_joint_law(&mp, row, &cols)?;
    let marginals: Vec<f64> = cells
        .iter()
        .map(|&cell| exact_marginal(&mp, cell).map(|r| ratio_to_f64(&r)))
        .collect::<Result<_, _>>()?;
    let joint_f: Vec<f64> = joint.iter().map(ratio_to_f64).collect();
    let product: Vec<f64> = (0..joint.len() as u32)
        .map(|pat| {
            marginals
                .iter()
                .enumerate()
                .map(|(t, &m)| if (pat >> t) & 1 == 1 { m } else { 1.0 - m })
                .product()
        })
        .collect();
    Ok(tv_distance(&joint_f, &product))
}

// ---------------------------------------------------------------------------
// Moment experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub params: BlockParams,
    pub block: Block,
    pub cells: Vec<(usize, usize)>,
    pub powers: Vec<u32>,
    pub k: usize,
    /// empirical E[Π X^α]; for 0/1 entries the powers collapse so this is
    /// bit-identical to the empirical E[Π X]
    pub empirical: f64,
    /// product of the block's limiting mean over the cells
    pub target: f64,
    pub gap: f64,
}

/// Empirical product moment of cells in one block against the product of
/// limiting means. Entries are 0/1 so X^α = X for α >= 1; the computation
/// uses the plain product, which is the documented collapse.
pub fn moment_experiment(
    p: &BlockParams,
    cells: &[(usize, usize)],
    powers: &[u32],
    k: usize,
    seed: u64,
    sampler: SamplerKind,
) -> Result<MomentReport, AnalysisError> {
    assert!(!cells.is_empty());
    if powers.len() != cells.len() || powers.contains(&0) {
        return Err(AnalysisError::InvalidPowers);
    }
    let k0 = p.heavy_count();
    let block = Block::of_cell(cells[0], k0);
    if cells.iter().any(|&c| Block::of_cell(c, k0) != block) {
        return Err(AnalysisError::MixedBlocks);
    }
    let mp = build_block_margins(p)?;
    let tables = draw_tables(&mp, sampler, k, seed)?;
    let mut hits = 0u64;
    for t in &tables {
        if cells.iter().all(|&(i, j)| t.get(i, j) == 1) {
            hits += 1;
        }
    }
    let empirical = hits as f64 / k as f64;
    let mean = block.limit_mean(p)?;
    let target = mean.powi(cells.len() as i32);
    Ok(MomentReport {
        params: *p,
        block,
        cells: cells.to_vec(),
        powers: powers.to_vec(),
        k,
        empirical,
        target,
        gap: (empirical - target).abs(),
    })
}

// ---------------------------------------------------------------------------
// Law of large numbers
// ---------------------------------------------------------------------------

/// Which truncated row sum to study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LlnRow {
    /// heavy row over the light columns; S/n -> B*C
    Side,
    /// light row over the light columns; S/n -> C
    BottomRight,
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnPoint {
    pub n: usize,
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub target: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnReport {
    pub params: BlockParams,
    pub which: LlnRow,
    pub points: Vec<LlnPoint>,
    pub std_decreasing: bool,
    pub gap_decreasing: bool,
}

/// For each n in the sweep, sample k tables and form the truncated row sum
/// S (the designated row across the n light columns); report mean and
/// standard deviation of S/n.
pub fn lln_experiment(
    p: &BlockParams,
    which: LlnRow,
    n_sweep: &[usize],
    k: usize,
    seed: u64,
    sampler: SamplerKind,
) -> Result<LlnReport, AnalysisError> {
    match which {
        LlnRow::Side => {
            let bound = crate::margins::top_left_b_bound(p.c);
            if !(p.delta > 0.0 && p.delta <= 0.5) || !(p.c > 0.0 && p.c < 0.75) || p.b >= bound {
                return Err(AnalysisError::HypothesisViolated(format!(
                    "side LLN needs 0 < delta <= 1/2, 0 < C < 3/4, B < {bound:.4}"
                )));
            }
        }
        LlnRow::BottomRight => {
            if !(0.0..1.0).contains(&p.delta) || !(p.c > 0.0 && p.c < 1.0) || p.b > 1.0 / p.c {
                return Err(AnalysisError::HypothesisViolated(
                    "bottom-right LLN needs 0 <= delta < 1, 0 < C < 1, B <= 1/C".into(),
                ));
            }
        }
    }
    let target = match which {
        LlnRow::Side => p.b * p.c,
        LlnRow::BottomRight => p.c,
    };
    let mut points = Vec::with_capacity(n_sweep.len());
    for &n in n_sweep {
        let pn = BlockParams { n, ..*p };
        let mp = build_block_margins(&pn)?;
        let k0 = pn.heavy_count();
        let row = match which {
            LlnRow::Side => 0,
            LlnRow::BottomRight => k0,
        };
        let tables = draw_tables(&mp, sampler, k, mix_seed(seed, n as u64))?;
        let mut law = EmpiricalLaw::default();
        for t in &tables {
            law.row_sums.push((k0..k0 + n).map(|j| t.get(row, j) as u64).sum());
        }
        let sums: Vec<f64> = law.row_sums.iter().map(|&s| s as f64 / n as f64).collect();
        let (mean, std) = mean_std(&sums);
        points.push(LlnPoint { n, k, mean, std, target, gap: (mean - target).abs() });
    }
    let std_decreasing = points.windows(2).all(|w| w[1].std < w[0].std);
    let gap_decreasing = points.windows(2).all(|w| w[1].gap <= w[0].gap);
    Ok(LlnReport { params: *p, which, points, std_decreasing, gap_decreasing })
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

/// Fitted log–log decay exponents per block.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// block label -> least-squares slope of ln(gap) vs ln(n)
    pub exponents: BTreeMap<Block, f64>,
    /// dominant theoretical exponent max(delta - 1, -eta_block) per block
    pub theoretical: BTreeMap<Block, f64>,
    /// weakest per-block coefficient of determination
    pub r_squared: f64,
}

/// Least-squares slope of ln(gap) against ln(n) for each block. Zero gaps
/// are replaced by the Monte Carlo resolution floor when one is supplied,
/// otherwise the fit is refused as degenerate. Advisory: Monte Carlo noise
/// floors the fit, so no hard assertion belongs on the output.
pub fn rate_fit(
    gaps: &BTreeMap<Block, Vec<(usize, f64)>>,
    delta: f64,
    mc_floor: Option<f64>,
) -> Result<RateFit, AnalysisError> {
    let mut exponents = BTreeMap::new();
    let mut theoretical = BTreeMap::new();
    let mut r_squared = f64::INFINITY;
    for (&block, points) in gaps {
        if points.len() < 4 {
            return Err(AnalysisError::DegenerateFit);
        }
        let mut xs = Vec::with_capacity(points.len());
        let mut ys = Vec::with_capacity(points.len());
        for &(n, gap) in points {
            let g = if gap > 0.0 {
                gap
            } else {
                match mc_floor {
                    Some(floor) => floor,
                    None => return Err(AnalysisError::DegenerateFit),
                }
            };
            xs.push((n as f64).ln());
            ys.push(g.ln());
        }
        let (_, slope, r2) = linear_fit(&xs, &ys);
        exponents.insert(block, slope);
        theoretical.insert(block, (delta - 1.0).max(-block.eta(delta)));
        r_squared = r_squared.min(r2);
    }
    if exponents.is_empty() {
        return Err(AnalysisError::DegenerateFit);
    }
    Ok(RateFit { exponents, theoretical, r_squared })
}

/// Run the marginal experiment across an n sweep (optionally on several
/// threads; the per-point seeds make the result independent of the thread
/// count) and fit the per-block TV decay.
pub fn rate_experiment(
    p: &BlockParams,
    n_sweep: &[usize],
    k: usize,
    seed: u64,
    sampler: SamplerKind,
    threads: usize,
) -> Result<(Vec<Vec<BlockReport>>, RateFit), AnalysisError> {
    let reports = run_sweep(n_sweep, threads, |n| {
        let pn = BlockParams { n, ..*p };
        marginal_experiment(&pn, sampler, k, mix_seed(seed, n as u64))
    })?;
    let mut gaps: BTreeMap<Block, Vec<(usize, f64)>> = BTreeMap::new();
    for per_n in &reports {
        for r in per_n {
            gaps.entry(r.block).or_default().push((r.n, r.tv));
        }
    }
    let fit = rate_fit(&gaps, p.delta, Some(1.0 / (2.0 * k as f64)))?;
    Ok((reports, fit))
}

/// Map a fallible job over sweep points, preserving order, on up to
/// `threads` worker threads.
pub fn run_sweep<T, F>(points: &[usize], threads: usize, job: F) -> Result<Vec<T>, AnalysisError>
where
    T: Send,
    F: Fn(usize) -> Result<T, AnalysisError> + Sync,
{
    let threads = threads.max(1).min(points.len().max(1));
    if threads <= 1 || points.len() <= 1 {
        return points.iter().map(|&n| job(n)).collect();
    }
    let mut slots: Vec<Option<Result<T, AnalysisError>>> = Vec::new();
    slots.resize_with(points.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_mutex = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= points.len() {
                    break;
                }
                let result = job(points[idx]);
                slots_mutex.lock().unwrap()[idx] = Some(result);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}
