//! Piecewise-polynomial densities of sums of i.i.d. Uniform(0,1) variables.
//!
//! The density of `S_n = U_1 + ... + U_n` is a polynomial of degree `n - 1`
//! on each unit interval `[m, m+1]`. Each piece is stored in the Bernstein
//! basis of its interval: the recursion `f_{n+1}(y) = F_n(y) - F_n(y - 1)`
//! then only needs cumulative sums of non-negative coefficients, which keeps
//! it stable for large `n` where the alternating Irwin–Hall formula loses
//! every significant digit.

/// Evaluates a Bernstein polynomial on `[0, 1]` by de Casteljau.
fn bernstein_eval(coeffs: &[f64], s: f64) -> f64 {
    let mut work = coeffs.to_vec();
    let n = work.len();
    for r in 1..n {
        for k in 0..n - r {
            work[k] = (1.0 - s) * work[k] + s * work[k + 1];
        }
    }
    work[0]
}

/// Coefficients of `x ↦ c + ∫_0^x p`, one degree higher than `p`.
fn bernstein_antiderivative(coeffs: &[f64], c: f64) -> Vec<f64> {
    let d1 = coeffs.len() as f64;
    let mut out = Vec::with_capacity(coeffs.len() + 1);
    let mut acc = 0.0;
    out.push(c);
    for &b in coeffs {
        acc += b;
        out.push(c + acc / d1);
    }
    out
}

fn bernstein_integral(coeffs: &[f64]) -> f64 {
    coeffs.iter().sum::<f64>() / coeffs.len() as f64
}

/// Density pieces of `S_n` together with the CDF values at the integers.
#[derive(Debug, Clone)]
struct Level {
    /// `pieces[m]` holds the Bernstein coefficients (degree `n - 1`) on `[m, m+1]`.
    pieces: Vec<Vec<f64>>,
    /// `cdf_pieces[m]`: the CDF on `[m, m+1]` (degree `n`).
    cdf_pieces: Vec<Vec<f64>>,
    /// `cdf_integral[m] = ∫_0^m F_n(y) dy`, for `m = 0..=n`.
    cdf_integral: Vec<f64>,
}

impl Level {
    fn from_pieces(pieces: Vec<Vec<f64>>) -> Self {
        let mut cdf_pieces = Vec::with_capacity(pieces.len());
        let mut base = 0.0;
        for piece in &pieces {
            let cp = bernstein_antiderivative(piece, base);
            base = *cp.last().expect("non-empty");
            cdf_pieces.push(cp);
        }
        let mut cdf_integral = Vec::with_capacity(pieces.len() + 1);
        let mut acc = 0.0;
        cdf_integral.push(0.0);
        for cp in &cdf_pieces {
            acc += bernstein_integral(cp);
            cdf_integral.push(acc);
        }
        Level {
            pieces,
            cdf_pieces,
            cdf_integral,
        }
    }

    fn order(&self) -> usize {
        self.pieces.len()
    }

    fn next(&self) -> Level {
        let n = self.order();
        let degree = n; // degree of the new density pieces
        let mut pieces = Vec::with_capacity(n + 1);
        for m in 0..=n {
            let upper: Vec<f64> = if m < n {
                self.cdf_pieces[m].clone()
            } else {
                vec![1.0; degree + 1]
            };
            let lower: Vec<f64> = if m >= 1 {
                self.cdf_pieces[m - 1].clone()
            } else {
                vec![0.0; degree + 1]
            };
            // Differences of CDF values lie in [0, 1]; clamp rounding noise.
            pieces.push(
                upper
                    .iter()
                    .zip(&lower)
                    .map(|(u, l)| (u - l).max(0.0))
                    .collect(),
            );
        }
        Level::from_pieces(pieces)
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.order();
        let m = (x.floor() as usize).min(n - 1);
        (m, x - m as f64)
    }

    fn density(&self, x: f64) -> f64 {
        let n = self.order() as f64;
        if !(0.0..=n).contains(&x) {
            return 0.0;
        }
        let (m, s) = self.locate(x);
        bernstein_eval(&self.pieces[m], s)
    }

    /// `∫_0^x F_n(y) dy = E[(x - S_n)^+]`.
    fn cdf_primitive(&self, x: f64) -> f64 {
        let n = self.order() as f64;
        if x <= 0.0 {
            return 0.0;
        }
        if x >= n {
            return x - 0.5 * n;
        }
        let (m, s) = self.locate(x);
        let anti = bernstein_antiderivative(&self.cdf_pieces[m], 0.0);
        self.cdf_integral[m] + bernstein_eval(&anti, s)
    }
}

/// Lazily grown table of Irwin–Hall levels `n = 1, 2, ...`.
#[derive(Debug, Clone)]
pub(crate) struct IrwinHall {
    levels: Vec<Level>,
}

impl IrwinHall {
    pub(crate) fn new() -> Self {
        IrwinHall {
            levels: vec![Level::from_pieces(vec![vec![1.0]])],
        }
    }

    fn level(&mut self, n: usize) -> &Level {
        assert!(n >= 1);
        while self.levels.len() < n {
            let next = self.levels.last().expect("level 1 exists").next();
            self.levels.push(next);
        }
        &self.levels[n - 1]
    }

    /// Density of `S_n` at `x`.
    pub(crate) fn density(&mut self, n: usize, x: f64) -> f64 {
        self.level(n).density(x)
    }

    /// `E[(x - S_n)^+]`.
    pub(crate) fn expected_shortfall(&mut self, n: usize, x: f64) -> f64 {
        self.level(n).cdf_primitive(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct Irwin–Hall formula, fine for small n.
    fn irwin_hall_direct(n: usize, x: f64) -> f64 {
        if x < 0.0 || x > n as f64 {
            return 0.0;
        }
        let mut fact = 1.0;
        for k in 1..n {
            fact *= k as f64;
        }
        let mut sum = 0.0;
        let mut binom = 1.0;
        for k in 0..=n {
            if (k as f64) > x {
                break;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * binom * (x - k as f64).powi(n as i32 - 1);
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        sum / fact
    }

    #[test]
    fn matches_direct_formula_small_n() {
        let mut ih = IrwinHall::new();
        for n in 2..=7 {
            for i in 0..=40 {
                let x = i as f64 * n as f64 / 40.0;
                let got = ih.density(n, x);
                let want = irwin_hall_direct(n, x);
                assert!((got - want).abs() < 1e-13, "n={n} x={x} got={got} want={want}");
            }
        }
    }

    #[test]
    fn triangle_density() {
        let mut ih = IrwinHall::new();
        assert!((ih.density(2, 0.5) - 0.5).abs() < 1e-15);
        assert!((ih.density(2, 1.0) - 1.0).abs() < 1e-15);
        assert!((ih.density(2, 1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shortfall_beyond_support_is_linear() {
        let mut ih = IrwinHall::new();
        assert!((ih.expected_shortfall(4, 10.0) - 8.0).abs() < 1e-14);
        // continuity at the right end of the support
        let inside = ih.expected_shortfall(4, 4.0 - 1e-9);
        assert!((inside - 2.0).abs() < 1e-8);
    }

    #[test]
    fn shortfall_of_single_uniform() {
        // E[(x - U)^+] = x^2 / 2 on [0, 1]
        let mut ih = IrwinHall::new();
        for &x in &[0.1, 0.5, 0.9] {
            assert!((ih.expected_shortfall(1, x) - 0.5 * x * x).abs() < 1e-15);
        }
    }

    #[test]
    fn large_order_stays_normalised() {
        let mut ih = IrwinHall::new();
        let lvl = ih.level(150);
        let total: f64 = lvl.pieces.iter().map(|p| bernstein_integral(p)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // density is symmetric about n/2
        let a = ih.density(150, 70.3);
        let b = ih.density(150, 79.7);
        assert!((a - b).abs() < 1e-12 * a.max(1e-300) + 1e-15);
    }
}
