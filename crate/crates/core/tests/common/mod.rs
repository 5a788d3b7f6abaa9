//! Shared statistical oracles for the integration and acceptance suites.
//!
//! The chi-square p-value is computed from scratch (Lanczos log-gamma plus
//! the series/continued-fraction incomplete gamma) so distribution tests
//! never depend on the sampling code they are checking.

#![allow(dead_code)]

use dualmem::replay_core::Transition;

/// Lanczos approximation of ln(Gamma(x)) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COF: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000_000_000_190_015;
    for c in COF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper-tail p-value of a chi-square statistic with `df` degrees of
/// freedom.
pub fn chi2_pvalue(stat: f64, df: usize) -> f64 {
    gamma_q(df as f64 / 2.0, stat / 2.0)
}

/// Pearson statistic of observed counts against expected counts.
pub fn chi2_stat(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            assert!(e > 0.0, "expected count must be positive");
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

/// p-value for observed counts against a probability vector.
pub fn chi2_goodness_of_fit(observed: &[u64], probabilities: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let expected: Vec<f64> = probabilities.iter().map(|p| p * n as f64).collect();
    chi2_pvalue(chi2_stat(observed, &expected), observed.len() - 1)
}

/// Transition whose state carries an identifying tag.
pub fn tagged(tag: f64) -> Transition {
    Transition::new(vec![tag, 0.5], 0, 0.0, vec![tag, -0.5], false)
}

#[test]
fn chi2_oracle_matches_table_anchors() {
    // Classic 5% critical values.
    assert!((chi2_pvalue(3.841, 1) - 0.05).abs() < 5e-4);
    assert!((chi2_pvalue(5.991, 2) - 0.05).abs() < 5e-4);
    assert!((chi2_pvalue(18.307, 10) - 0.05).abs() < 5e-4);
    // 0.1% critical value at df = 1 is 10.828.
    assert!((chi2_pvalue(10.828, 1) - 0.001).abs() < 5e-5);
    // Far tails behave.
    assert!(chi2_pvalue(0.0, 5) == 1.0);
    assert!(chi2_pvalue(1_000.0, 5) < 1e-10);
}
