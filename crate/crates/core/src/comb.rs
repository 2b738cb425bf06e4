//! Binomial coefficients, exact where they fit in integer range and in
//! log-space otherwise. Probability mass ratios are always formed in log
//! space so that large designs do not overflow.

use statrs::function::gamma::ln_gamma;

/// Exact binomial coefficient as `u128`, or `None` on overflow.
pub fn choose_exact(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) is always integral at this point.
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// Natural log of the binomial coefficient; `-inf` when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial coefficient as `f64`: exact when it fits, log-space otherwise.
pub fn choose_f64(n: u64, k: u64) -> f64 {
    match choose_exact(n, k) {
        Some(v) if v <= (1u128 << 100) => v as f64,
        _ => ln_choose(n, k).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_small_values() {
        assert_eq!(choose_exact(0, 0), Some(1));
        assert_eq!(choose_exact(5, 2), Some(10));
        assert_eq!(choose_exact(10, 10), Some(1));
        assert_eq!(choose_exact(10, 11), Some(0));
        assert_eq!(choose_exact(52, 5), Some(2_598_960));
    }

    #[test]
    fn log_matches_exact() {
        for n in 0..60u64 {
            for k in 0..=n {
                let exact = choose_exact(n, k).unwrap() as f64;
                assert_relative_eq!(ln_choose(n, k).exp(), exact, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn pascal_recurrence_in_log_space() {
        // C(n, k) = C(n-1, k-1) + C(n-1, k) for a size where exact overflows u64.
        let n = 200u64;
        for k in [1u64, 50, 100, 199] {
            let lhs = ln_choose(n, k);
            let a = ln_choose(n - 1, k - 1);
            let b = ln_choose(n - 1, k);
            let m = a.max(b);
            let rhs = m + ((a - m).exp() + (b - m).exp()).ln();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }
}
