//! Small statistics helpers for multi-seed comparisons.

/// Probability of at least `wins` heads in `n` fair coin flips (the
/// one-sided sign test p-value). Ties should be dropped before calling.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut p = 0.0;
    for i in wins..=n {
        p += binomial(n, i);
    }
    p / 2f64.powi(n as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut value = 1.0;
    for i in 0..k {
        value *= (n - i) as f64 / (i + 1) as f64;
    }
    value
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Counts (wins_a, wins_b, ties) of pairwise comparisons where higher is
/// better for both.
pub fn pairwise_wins(a: &[f64], b: &[f64]) -> (usize, usize, usize) {
    let mut wins_a = 0;
    let mut wins_b = 0;
    let mut ties = 0;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wins_a += 1;
        } else if y > x {
            wins_b += 1;
        } else {
            ties += 1;
        }
    }
    (wins_a, wins_b, ties)
}
