//! Small statistics toolbox: log-gamma, regularized incomplete gamma,
//! chi-square goodness of fit, and total-variation distances.

/// Natural log of the gamma function, Lanczos approximation (g=7, n=9).
///
/// Accurate to ~1e-13 relative for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) = γ(a, x) / Γ(a).
///
/// Series expansion for x < a + 1, continued fraction otherwise.
pub fn reg_inc_gamma(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "reg_inc_gamma domain: a > 0, x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // Series: P(a,x) = x^a e^-x / Γ(a) * Σ x^n / (a (a+1) ... (a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (a * x.ln() - x - ln_gamma(a)).exp()
    } else {
        // Lentz continued fraction for Q(a,x); P = 1 - Q.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (a * x.ln() - x - ln_gamma(a)).exp() * h;
        1.0 - q
    }
}

/// CDF of the chi-square distribution with `k` degrees of freedom.
pub fn chi_square_cdf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        reg_inc_gamma(k / 2.0, x / 2.0)
    }
}

/// Chi-square goodness-of-fit test of observed counts against expected
/// probabilities. Returns (statistic, p-value) with `len - 1` degrees of
/// freedom.
pub fn chi_square_test(observed: &[u64], expected_probs: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected_probs.len());
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let stat = observed
        .iter()
        .zip(expected_probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = nf * p;
            let d = o as f64 - e;
            d * d / e
        })
        .sum::<f64>();
    let df = (observed.len() - 1) as f64;
    (stat, 1.0 - chi_square_cdf(stat, df))
}

/// Total variation distance between two finite distributions given as
/// probability vectors, in the L1 convention Σ|p_i − q_i|.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Two-sample chi-square homogeneity test on category counts. Returns
/// (statistic, p-value) with `len - 1` degrees of freedom; categories
/// empty in both samples are skipped.
pub fn two_sample_chi_square(a: &[u64], b: &[u64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let (naf, nbf) = (na as f64, nb as f64);
    let mut stat = 0.0;
    let mut cats = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let pooled = (x + y) as f64;
        if pooled == 0.0 {
            continue;
        }
        cats += 1;
        let ea = pooled * naf / (naf + nbf);
        let eb = pooled * nbf / (naf + nbf);
        let (xf, yf) = (x as f64, y as f64);
        stat += (xf - ea) * (xf - ea) / ea + (yf - eb) * (yf - eb) / eb;
    }
    let df = cats.saturating_sub(1) as f64;
    (stat, 1.0 - chi_square_cdf(stat, df))
}

/// Sample mean and (unbiased) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares fit y = a + b x; returns (intercept, slope, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points to fit a line");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (intercept, slope, r2)
}
