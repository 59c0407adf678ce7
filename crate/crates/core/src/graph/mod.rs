//! Bernoulli interaction graphs and the deterministic graph functionals the
//! estimators converge to.

mod bits;
mod linalg;

use std::io::{BufRead, Write};
use std::path::Path;

use rand::distr::{Bernoulli, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
pub(crate) use bits::BitMatrix;
pub use linalg::{Solution, SolveMethod};

/// An `N × N` adjacency sample `θ`, with `θ_ij = 1` meaning `j` influences `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    p: f64,
    seed: u64,
    theta: BitMatrix,
}

impl InteractionGraph {
    /// Draws every entry independently as Bernoulli(p), row by row, from a
    /// ChaCha8 stream seeded with `seed`.
    pub fn sample(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("graph size must be at least 1".into()));
        }
        let dist = Bernoulli::new(p).map_err(|_| Error::Domain(format!("p must lie in [0, 1], got {p}")))?;
        let mut rng = seeds::rng(seed);
        let mut theta = BitMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if dist.sample(&mut rng) {
                    theta.set(i, j, true);
                }
            }
        }
        Ok(InteractionGraph { p, seed, theta })
    }

    /// Graph from an explicit 0/1 matrix given as rows.
    pub fn from_rows(rows: &[Vec<u8>], p: f64, seed: u64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Domain("graph size must be at least 1".into()));
        }
        let mut theta = BitMatrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Domain(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => theta.set(i, j, true),
                    _ => return Err(Error::Domain(format!("entry ({i}, {j}) is {v}, expected 0 or 1"))),
                }
            }
        }
        Ok(InteractionGraph { p, seed, theta })
    }

    pub fn zeros(n: usize) -> Self {
        InteractionGraph {
            p: 0.0,
            seed: 0,
            theta: BitMatrix::zeros(n),
        }
    }

    pub fn ones(n: usize) -> Self {
        let mut theta = BitMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                theta.set(i, j, true);
            }
        }
        InteractionGraph { p: 1.0, seed: 0, theta }
    }

    pub fn n(&self) -> usize {
        self.theta.n()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.theta.get(i, j)
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.theta.set(i, j, value)
    }

    /// Number of individuals influencing `i`.
    pub fn row_sum(&self, i: usize) -> u32 {
        self.theta.row_sum(i)
    }

    /// Number of individuals influenced by each `j`.
    pub fn col_sums(&self) -> Vec<u32> {
        let mut c = vec![0u32; self.n()];
        for i in 0..self.n() {
            for j in self.theta.row_indices(i) {
                c[j] += 1;
            }
        }
        c
    }

    /// Individuals `j` with `θ_ij = 1`.
    pub fn influencers(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.theta.row_indices(i)
    }

    pub(crate) fn bits(&self) -> &BitMatrix {
        &self.theta
    }

    /// `‖A_N‖_∞ = max_i Σ_j θ_ij / N`.
    pub fn max_row_density(&self) -> f64 {
        let m = (0..self.n()).map(|i| self.row_sum(i)).max().unwrap_or(0);
        m as f64 / self.n() as f64
    }

    /// `Λ ‖A_N‖_∞`, the quantity the subcriticality gate requires below 1.
    pub fn gate(&self, lambda: f64) -> f64 {
        lambda * self.max_row_density()
    }

    pub fn check_subcritical(&self, lambda: f64) -> Result<()> {
        let gate = self.gate(lambda);
        if gate < 1.0 {
            Ok(())
        } else {
            Err(Error::NotSubcritical { gate })
        }
    }

    /// Relabels individuals: new index `perm[i]` gets old index `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&k| k >= n || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::Domain("not a permutation".into()));
        }
        let mut theta = BitMatrix::zeros(n);
        for i in 0..n {
            for j in self.theta.row_indices(i) {
                theta.set(perm[i], perm[j], true);
            }
        }
        Ok(InteractionGraph {
            p: self.p,
            seed: self.seed,
            theta,
        })
    }

    /// Whether every entry of `A_N²` is positive.
    pub fn square_is_positive(&self) -> bool {
        let n = self.n();
        let words = self.theta.words_per_row();
        let full: Vec<u64> = (0..words)
            .map(|w| {
                let cols = (n - 64 * w).min(64);
                if cols == 64 {
                    u64::MAX
                } else {
                    (1u64 << cols) - 1
                }
            })
            .collect();
        let mut acc = vec![0u64; words];
        for i in 0..n {
            acc.iter_mut().for_each(|a| *a = 0);
            let mut done = false;
            for k in self.theta.row_indices(i) {
                for (a, r) in acc.iter_mut().zip(self.theta.row(k)) {
                    *a |= r;
                }
                if acc == full {
                    done = true;
                    break;
                }
            }
            if !done {
                return false;
            }
        }
        true
    }

    /// Writes the header `N p seed` followed by one hex row bitset per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.n(), self.p, self.seed)?;
        for i in 0..self.n() {
            writeln!(w, "{}", hex::encode(self.theta.row_bytes(i)))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = next_line(&mut lines)?.ok_or_else(|| Error::parse("graph", "empty input"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [n, p, seed] = fields[..] else {
            return Err(Error::parse("graph header", format!("expected `N p seed`, got {header:?}")));
        };
        let n: usize = n.parse().map_err(|e| Error::parse("graph header", format!("N: {e}")))?;
        let p: f64 = p.parse().map_err(|e| Error::parse("graph header", format!("p: {e}")))?;
        let seed: u64 = seed.parse().map_err(|e| Error::parse("graph header", format!("seed: {e}")))?;
        if n == 0 {
            return Err(Error::parse("graph header", "N must be at least 1"));
        }
        let nbytes = n.div_ceil(8);
        let mut theta = BitMatrix::zeros(n);
        for i in 0..n {
            let line = next_line(&mut lines)?
                .ok_or_else(|| Error::parse("graph", format!("missing row {i}")))?;
            let bytes = hex::decode(line.trim())
                .map_err(|e| Error::parse("graph", format!("row {i}: {e}")))?;
            if bytes.len() != nbytes {
                return Err(Error::parse("graph", format!("row {i} has {} bytes, expected {nbytes}", bytes.len())));
            }
            if n % 8 != 0 && bytes[nbytes - 1] >> (n % 8) != 0 {
                return Err(Error::parse("graph", format!("row {i} sets bits beyond column {n}")));
            }
            theta.set_row_bytes(i, &bytes);
        }
        Ok(InteractionGraph { p, seed, theta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        InteractionGraph::read_from(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }
}

fn next_line<B: BufRead>(lines: &mut std::io::Lines<B>) -> Result<Option<String>> {
    match lines.next() {
        None => Ok(None),
        Some(Ok(l)) => Ok(Some(l)),
        Some(Err(e)) => Err(Error::io("<graph stream>", e)),
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!("K must lie in 1..={n}, got {k}")));
    }
    Ok(())
}

/// `ℓ_N = (I - Λ A_N)^{-1} 1_N`.
pub fn compute_ell(g: &InteractionGraph, lambda: f64) -> Result<Vec<f64>> {
    g.check_subcritical(lambda)?;
    let rhs = vec![1.0; g.n()];
    Ok(linalg::solve_resolvent(g.bits(), lambda, &rhs, false)?.x)
}

/// `(N/K) Σ_{i ≤ K} (ℓ_i - ℓ̄_K)²` for a precomputed `ℓ`.
pub fn v_infinity_from_ell(ell: &[f64], k: usize) -> f64 {
    let n = ell.len() as f64;
    let head = &ell[..k];
    let mean = head.iter().sum::<f64>() / k as f64;
    n / k as f64 * head.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>()
}

/// `𝒱_∞ = (N/K) Σ_{i ≤ K} (ℓ_i - ℓ̄_K)²`.
pub fn v_infinity(g: &InteractionGraph, lambda: f64, k: usize) -> Result<f64> {
    check_k(g.n(), k)?;
    Ok(v_infinity_from_ell(&compute_ell(g, lambda)?, k))
}

/// The quantities around the limit of the `𝒳` statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XLimit {
    /// `c_j = Σ_{i ≤ K} Q_N(i, j)`.
    pub col_sums: Vec<f64>,
    /// `A_∞ = Σ_j c_j² ℓ_j`.
    pub a_inf: f64,
    /// `𝒲_∞ = μ (N/K²) A_∞`.
    pub w_inf: f64,
    /// `𝒳_∞ = 𝒲_∞ - ((N-K) μ / K) ℓ̄_K`.
    pub x_inf: f64,
}

pub fn x_limit_from_ell(g: &InteractionGraph, lambda: f64, mu: f64, k: usize, ell: &[f64]) -> Result<XLimit> {
    check_k(g.n(), k)?;
    let n = g.n();
    let mut rhs = vec![0.0; n];
    rhs[..k].iter_mut().for_each(|r| *r = 1.0);
    let c = linalg::solve_resolvent(g.bits(), lambda, &rhs, true)?.x;
    let a_inf: f64 = c.iter().zip(ell).map(|(c, l)| c * c * l).sum();
    let nf = n as f64;
    let kf = k as f64;
    let w_inf = mu * nf / (kf * kf) * a_inf;
    let ell_bar = ell[..k].iter().sum::<f64>() / kf;
    Ok(XLimit {
        col_sums: c,
        a_inf,
        w_inf,
        x_inf: w_inf - (nf - kf) * mu / kf * ell_bar,
    })
}

pub fn x_infinity(g: &InteractionGraph, lambda: f64, mu: f64, k: usize) -> Result<XLimit> {
    let ell = compute_ell(g, lambda)?;
    x_limit_from_ell(g, lambda, mu, k, &ell)
}

/// Spectral radius and Perron vector of `A_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronData {
    pub rho: f64,
    /// Normalised to `‖V‖₂ = √N`, entries positive.
    pub v: Vec<f64>,
    /// `ρ_N - b`.
    pub alpha_n: f64,
    /// Final `‖A v - ρ v‖₂ / ‖v‖₂`.
    pub residual: f64,
    pub iterations: usize,
    /// Whether `A_N²` has all entries positive.
    pub square_positive: bool,
}

const PERRON_TOL: f64 = 1e-10;
const PERRON_MAX_ITER: usize = 10_000;

/// Power iteration from `1_N`.
///
/// When `A_N²` is not entrywise positive the result is still accepted if the
/// iteration converges to a strictly positive eigenvector.
pub fn perron_data(g: &InteractionGraph, b: f64) -> Result<PerronData> {
    let n = g.n();
    let nf = n as f64;
    let square_positive = g.square_is_positive();
    let mut v = vec![1.0; n];
    let mut av = vec![0.0; n];
    let mut iterations = 0;
    let (rho, residual) = loop {
        g.bits().matvec(&v, 1.0 / nf, &mut av);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let rho = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>() / vv;
        let res = v
            .iter()
            .zip(&av)
            .map(|(x, y)| (y - rho * x).powi(2))
            .sum::<f64>()
            .sqrt()
            / vv.sqrt();
        if res <= PERRON_TOL {
            break (rho, res);
        }
        iterations += 1;
        if iterations > PERRON_MAX_ITER {
            return Err(Error::DegenerateGraph(format!(
                "power iteration did not converge after {PERRON_MAX_ITER} steps (residual {res:.3e})"
            )));
        }
        let norm = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::DegenerateGraph("A_N 1 vanishes after iteration".into()));
        }
        let s = nf.sqrt() / norm;
        for (x, y) in v.iter_mut().zip(&av) {
            *x = y * s;
        }
    };
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s = nf.sqrt() / norm;
    v.iter_mut().for_each(|x| *x *= s);
    if !(rho > 0.0) || v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::DegenerateGraph("Perron vector is not strictly positive".into()));
    }
    Ok(PerronData {
        rho,
        v,
        alpha_n: rho - b,
        residual,
        iterations,
        square_positive,
    })
}

/// `𝒰_∞ = N / (K V̄_K²) Σ_{i ≤ K} (V_i - V̄_K)²`.
pub fn u_infinity_from_perron(v: &[f64], k: usize) -> f64 {
    let n = v.len() as f64;
    let head = &v[..k];
    let mean = head.iter().sum::<f64>() / k as f64;
    n / (k as f64 * mean * mean) * head.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
}

pub fn u_infinity(g: &InteractionGraph, b: f64, k: usize) -> Result<f64> {
    check_k(g.n(), k)?;
    Ok(u_infinity_from_perron(&perron_data(g, b)?.v, k))
}

/// Graph functionals of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphLimits {
    pub n: usize,
    pub k: usize,
    pub ell: Vec<f64>,
    pub ell_bar_k: f64,
    pub v_inf: f64,
    pub a_inf: f64,
    pub w_inf: f64,
    pub x_inf: f64,
    pub rho: Option<f64>,
    pub perron: Option<Vec<f64>>,
    pub alpha_n: Option<f64>,
    pub u_inf: Option<f64>,
}

impl GraphLimits {
    /// The subcritical functionals; requires the subcriticality gate.
    pub fn subcritical(g: &InteractionGraph, lambda: f64, mu: f64, k: usize) -> Result<Self> {
        check_k(g.n(), k)?;
        let ell = compute_ell(g, lambda)?;
        let x = x_limit_from_ell(g, lambda, mu, k, &ell)?;
        Ok(GraphLimits {
            n: g.n(),
            k,
            ell_bar_k: ell[..k].iter().sum::<f64>() / k as f64,
            v_inf: v_infinity_from_ell(&ell, k),
            a_inf: x.a_inf,
            w_inf: x.w_inf,
            x_inf: x.x_inf,
            ell,
            rho: None,
            perron: None,
            alpha_n: None,
            u_inf: None,
        })
    }

    /// Adds the Perron data for an exponential kernel of rate `b`.
    pub fn with_perron(mut self, g: &InteractionGraph, b: f64) -> Result<Self> {
        let pd = perron_data(g, b)?;
        self.u_inf = Some(u_infinity_from_perron(&pd.v, self.k));
        self.rho = Some(pd.rho);
        self.alpha_n = Some(pd.alpha_n);
        self.perron = Some(pd.v);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_extremes() {
        let z = InteractionGraph::sample(3, 0.0, 1).unwrap();
        let o = InteractionGraph::sample(3, 1.0, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(!z.get(i, j));
                assert!(o.get(i, j));
            }
        }
        assert!(InteractionGraph::sample(3, 1.5, 1).is_err());
        assert!(InteractionGraph::sample(0, 0.5, 1).is_err());
    }

    #[test]
    fn sample_is_deterministic() {
        let a = InteractionGraph::sample(50, 0.3, 9).unwrap();
        let b = InteractionGraph::sample(50, 0.3, 9).unwrap();
        let c = InteractionGraph::sample(50, 0.3, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn file_round_trip() {
        for n in [1, 5, 8, 9, 70] {
            let g = InteractionGraph::sample(n, 0.37, 123).unwrap();
            let mut buf = Vec::new();
            g.write_to(&mut buf).unwrap();
            let back = InteractionGraph::read_from(&buf[..]).unwrap();
            assert_eq!(back, g);
            let mut buf2 = Vec::new();
            back.write_to(&mut buf2).unwrap();
            assert_eq!(buf, buf2);
        }
    }

    #[test]
    fn file_format_is_rejected_when_malformed() {
        assert!(InteractionGraph::read_from(&b""[..]).is_err());
        assert!(InteractionGraph::read_from(&b"2 0.5\n00\n00\n"[..]).is_err());
        assert!(InteractionGraph::read_from(&b"2 0.5 1\n00\n"[..]).is_err());
        assert!(InteractionGraph::read_from(&b"2 0.5 1\nzz\n00\n"[..]).is_err());
        // bit 2 set in a 2-column row
        assert!(InteractionGraph::read_from(&b"2 0.5 1\n04\n00\n"[..]).is_err());
        let g = InteractionGraph::read_from(&b"2 0.5 1\n02\n01\n"[..]).unwrap();
        assert!(g.get(0, 1) && g.get(1, 0) && !g.get(0, 0) && !g.get(1, 1));
    }

    #[test]
    fn two_cycle_perron() {
        let g = InteractionGraph::from_rows(&[vec![0, 1], vec![1, 0]], 0.5, 0).unwrap();
        assert!(!g.square_is_positive());
        let pd = perron_data(&g, 0.3).unwrap();
        assert!((pd.rho - 0.5).abs() < 1e-15);
        assert!(pd.v.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn reducible_graph_is_rejected() {
        assert!(matches!(perron_data(&InteractionGraph::zeros(4), 0.1), Err(Error::DegenerateGraph(_))));
        // 0 -> 1 only: A = [[0,0],[1,0]]/2 is nilpotent
        let g = InteractionGraph::from_rows(&[vec![0, 0], vec![1, 0]], 0.5, 0).unwrap();
        assert!(perron_data(&g, 0.1).is_err());
    }

    #[test]
    fn positivity_proxy() {
        assert!(InteractionGraph::ones(5).square_is_positive());
        assert!(!InteractionGraph::zeros(5).square_is_positive());
        let g = InteractionGraph::sample(200, 0.5, 3).unwrap();
        assert!(g.square_is_positive());
    }
}
