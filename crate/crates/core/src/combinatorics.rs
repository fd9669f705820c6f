//! Factorials, exactly and in log space.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::One;

const TABLE_LEN: usize = 1 << 16;

fn log10_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(TABLE_LEN);
        let mut acc = 0.0f64;
        table.push(0.0);
        for k in 1..TABLE_LEN {
            acc += (k as f64).log10();
            table.push(acc);
        }
        table
    })
}

/// `log10(k!)`.
pub fn log10_factorial(k: usize) -> f64 {
    if k < TABLE_LEN {
        return log10_factorial_table()[k];
    }
    // Stirling series; the truncation error is far below f64 resolution
    // for k >= 2^16.
    let x = k as f64;
    let ln = x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3));
    ln / std::f64::consts::LN_10
}

/// `log10(binom(n, k))`.
pub fn log10_binomial(n: usize, k: usize) -> f64 {
    assert!(k <= n);
    log10_factorial(n) - log10_factorial(k) - log10_factorial(n - k)
}

pub fn factorial(k: usize) -> BigUint {
    (2..=k as u64).fold(BigUint::one(), |acc, i| acc * i)
}

/// Number of decimal digits of a positive integer whose log10 is `log10`,
/// rounded up generously so it can be compared against a digit budget.
pub fn digits_upper_bound(log10: f64) -> usize {
    (log10.max(0.0) + 1.0).ceil() as usize + 1
}
