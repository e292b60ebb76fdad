//! Gauss–Legendre quadrature.

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[lo, hi]`.
///
/// Roots of `P_n` are found by Newton iteration from the Chebyshev-like
/// initial guess; weights follow from `P_n'` at the roots.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1, "quadrature needs at least one node");
    let mid = 0.5 * (hi + lo);
    let half = 0.5 * (hi - lo);
    let mut nodes = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            deriv = dp;
            let step = p / dp;
            z -= step;
            if step.abs() < 1e-15 {
                let (_, dp) = legendre_with_derivative(n, z);
                deriv = dp;
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * deriv * deriv);
        nodes[i] = (mid - half * z, half * w);
        nodes[n - 1 - i] = (mid + half * z, half * w);
    }
    nodes
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Composite rule: `n` nodes on each panel between consecutive breakpoints.
pub fn composite_gauss_legendre(n: usize, breakpoints: &[f64]) -> Vec<(f64, f64)> {
    breakpoints
        .windows(2)
        .flat_map(|w| gauss_legendre(n, w[0], w[1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = gauss_legendre(8, 0.0, 1.0);
        let sum_w: f64 = rule.iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(sum_w, 1.0, epsilon = 1e-14);
        // degree 15 is exact for 8 nodes
        let i: f64 = rule.iter().map(|(x, w)| w * x.powi(15)).sum();
        assert_abs_diff_eq!(i, 1.0 / 16.0, epsilon = 1e-14);
    }

    #[test]
    fn sixty_four_nodes_smooth_integrand() {
        let rule = gauss_legendre(64, 0.0, 1.0);
        let i: f64 = rule.iter().map(|(x, w)| w * (3.0 * x).exp()).sum();
        assert_abs_diff_eq!(i, ((3.0f64).exp() - 1.0) / 3.0, epsilon = 1e-13);
        assert!(rule.windows(2).all(|p| p[0].0 < p[1].0));
    }

    #[test]
    fn composite_handles_steps() {
        let rule = composite_gauss_legendre(16, &[0.0, 0.35, 0.75, 1.0]);
        let i: f64 = rule
            .iter()
            .map(|&(x, w)| w * if x <= 0.35 { 1.0 } else { 0.0 })
            .sum();
        assert_abs_diff_eq!(i, 0.35, epsilon = 1e-14);
    }
}
