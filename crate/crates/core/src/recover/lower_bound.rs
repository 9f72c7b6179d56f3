/// Minimum queries per logit for any argmax-only attack that biases at most
/// `n` tokens per query: `log2(B / eps) / log2(n)`.
pub fn lower_bound_per_logit(bias_bound: f64, epsilon: f64, n: usize) -> f64 {
    if epsilon >= bias_bound {
        return 0.0;
    }
    (bias_bound / epsilon).log2() / (n as f64).log2()
}

/// Minimum total queries to learn `l` logits to precision `eps`.
pub fn query_lower_bound(l: usize, bias_bound: f64, epsilon: f64, n: usize) -> f64 {
    l as f64 * lower_bound_per_logit(bias_bound, epsilon, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_values() {
        let b = |bits: i32| lower_bound_per_logit(100.0, 2f64.powi(-bits), 300);
        assert!((b(6) - 1.536).abs() < 0.005, "{}", b(6));
        assert!((b(23) - 3.57).abs() < 0.05, "{}", b(23));
        assert!((b(18) - 2.99).abs() < 0.005, "{}", b(18));
        assert_eq!(lower_bound_per_logit(100.0, 100.0, 300), 0.0);
        assert_eq!(query_lower_bound(1000, 100.0, 100.0, 300), 0.0);
        assert!((query_lower_bound(10, 100.0, 2f64.powi(-6), 300) - 10.0 * b(6)).abs() < 1e-12);
    }
}
