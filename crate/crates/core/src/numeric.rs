//! Small numerical kernels shared across modules.

/// Pairwise summation in a fixed order. The recursion splits at the midpoint,
/// so the result depends only on the input order, never on scheduling.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Weighted sum `Σ wᵢ vᵢ` with pairwise reduction.
pub fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    let products: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w * v).collect();
    pairwise_sum(&products)
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = pairwise_sum(x) / nf;
    let my = pairwise_sum(y) / nf;
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let sxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
    let sxx = pairwise_sum(&sxx);
    if sxx == 0.0 {
        return None;
    }
    let slope = pairwise_sum(&sxy) / sxx;
    Some((slope, my - slope * mx))
}

/// Smallest eigenvalue of the symmetric 2×2 matrix `[[a, b], [b, c]]`.
pub fn sym2_min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    mean - half_diff.hypot(b)
}

/// Evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn fit_recovers_line() {
        let x = linspace(0.0, 2.0, 11);
        let y: Vec<f64> = x.iter().map(|t| -2.0 * t + 0.5).collect();
        let (s, i) = linear_fit(&x, &y).unwrap();
        assert!((s + 2.0).abs() < 1e-12 && (i - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eigen_of_diagonal_and_singular() {
        assert_eq!(sym2_min_eigenvalue(3.0, 0.0, 1.0), 1.0);
        assert!(sym2_min_eigenvalue(1.0, 1.0, 1.0).abs() < 1e-15);
    }
}
