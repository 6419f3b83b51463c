//! Special functions and small numeric utilities.

/// Natural log of the gamma function (Lanczos approximation, g=7, n=9).
pub fn lgamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lgamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma ψ(x): recurrence up to the asymptotic regime, then the series.
pub fn digamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln() - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Trigamma ψ₁(x) = d/dx ψ(x).
pub fn trigamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 7.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        * (1.0
            + 0.5 * inv
            + inv2
                * (1.0 / 6.0
                    - inv2
                        * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0)))))
}

/// ln B(a, b).
pub fn lbeta(a: f64, b: f64) -> f64 {
    lgamma(a) + lgamma(b) - lgamma(a + b)
}

/// Inverse of softplus: returns x with ln(1+e^x) = y.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Stable log(Σ exp(xs)).
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Neumaier compensated summation; order-independent aggregation of metric
/// values stays reproducible.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Maximum-total-weight injective assignment of rows to columns.
///
/// Exact subset DP over columns; intended for the small slot counts used
/// here (≤ 16 columns). Returns `assignment[row] = Some(col)`. Rows may stay
/// unassigned when leaving them out scores better (all weights are assumed
/// ≥ 0, so unassigned rows only occur when rows outnumber columns).
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = weights[0].len();
    assert!(cols <= 16, "assignment DP supports up to 16 columns");
    let full = 1usize << cols;
    // best[mask] = best total weight using columns in `mask` for rows 0..r
    let neg = f64::NEG_INFINITY;
    let mut best = vec![0.0f64; full];
    let mut choice: Vec<Vec<Option<usize>>> = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut next = vec![neg; full];
        let mut pick = vec![None; full];
        for mask in 0..full {
            if best[mask] == neg {
                continue;
            }
            // Row r unassigned.
            if best[mask] > next[mask] {
                next[mask] = best[mask];
                pick[mask] = None;
            }
            for c in 0..cols {
                if mask & (1 << c) != 0 {
                    continue;
                }
                let m2 = mask | (1 << c);
                let w = best[mask] + weights[r][c];
                if w > next[m2] {
                    next[m2] = w;
                    pick[m2] = Some(c);
                }
            }
        }
        best = next;
        choice.push(pick);
    }
    let mut mask = (0..full)
        .max_by(|&a, &b| best[a].partial_cmp(&best[b]).unwrap())
        .unwrap();
    let mut out = vec![None; rows];
    for r in (0..rows).rev() {
        let c = choice[r][mask];
        out[r] = c;
        if let Some(c) = c {
            mask &= !(1 << c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_functions_match_reference() {
        // statrs is the independent reference implementation.
        for &x in &[0.07, 0.4, 1.0, 1.5, 2.0, 3.7, 9.2, 25.0, 101.5] {
            assert!(
                (lgamma(x) - statrs::function::gamma::ln_gamma(x)).abs() < 1e-10,
                "lgamma({x})"
            );
        }
        for &x in &[0.1, 0.9, 1.0, 2.5, 7.3, 40.0] {
            assert!(
                (digamma(x) - statrs::function::gamma::digamma(x)).abs() < 1e-9,
                "digamma({x})"
            );
        }
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for &x in &[0.2, 0.8, 1.0, 2.3, 5.9, 17.0] {
            let h = 1e-4;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((trigamma(x) - fd).abs() < 1e-5, "trigamma({x}): {} vs {}", trigamma(x), fd);
        }
        // π²/6 at x = 1.
        assert!((trigamma(1.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-10);
    }

    #[test]
    fn assignment_matches_bruteforce_3x3() {
        let w = vec![
            vec![0.5, 0.9, 0.1],
            vec![0.8, 0.7, 0.2],
            vec![0.3, 0.6, 0.4],
        ];
        let a = max_weight_assignment(&w);
        // Brute force over all 3! permutations.
        let mut best = f64::NEG_INFINITY;
        let mut arg = vec![];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for p in perms {
            let s: f64 = (0..3).map(|r| w[r][p[r]]).sum();
            if s > best {
                best = s;
                arg = p.to_vec();
            }
        }
        let total: f64 = (0..3).map(|r| w[r][a[r].unwrap()]).sum();
        assert!((total - best).abs() < 1e-12);
        assert_eq!(a.iter().map(|c| c.unwrap()).collect::<Vec<_>>(), arg);
    }

    #[test]
    fn softplus_roundtrip() {
        for &y in &[1e-3, 0.5, 1.0, 3.0, 50.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1e-3 + (i as f64) * 1e-9).collect();
        let exact: f64 = 10_000.0 * 1e-3 + 1e-9 * (9999.0 * 10_000.0 / 2.0);
        assert!((compensated_sum(xs.iter().cloned()) - exact).abs() < 1e-12);
    }
}
