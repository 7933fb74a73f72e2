//! Continuous-time Markov chain primitives.
//!
//! Generators are validated once at construction (non-negative jump rates,
//! zero row sums, irreducibility). Transient probabilities `e^{Qτ}` are
//! computed by uniformization, which keeps every intermediate matrix
//! stochastic and non-negative.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Neglected Poisson tail mass per uniformization block.
const POISSON_TAIL: f64 = 1e-13;
/// Largest `rate * tau` handled in a single Poisson series; longer horizons
/// are split into blocks and multiplied, which keeps `e^{-rate*tau}` from
/// underflowing.
const MAX_BLOCK_MEAN: f64 = 32.0;

/// Infinitesimal generator of one physical system.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    /// Row-major rates.
    q: Vec<f64>,
    exit_rates: Vec<f64>,
    /// Per state: outgoing `(target, rate)` pairs with positive rate.
    jumps: Vec<Vec<(usize, f64)>>,
}

impl GeneratorMatrix {
    /// Validates a square rate matrix and builds the generator.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    bad_row: r,
                    cols: row.len(),
                });
            }
        }
        if n < 2 {
            return Err(Error::NotSquare {
                rows: n,
                bad_row: 0,
                cols: rows.first().map_or(0, Vec::len),
            });
        }

        let mut max_abs = 0.0_f64;
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
                if r != c && v < 0.0 {
                    return Err(Error::NegativeOffDiagonal {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
                max_abs = max_abs.max(v.abs());
            }
        }
        for (r, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if sum.abs() > 1e-12 * max_abs {
                return Err(Error::RowSumNonzero { row: r, sum });
            }
        }

        let q: Vec<f64> = rows.iter().flatten().copied().collect();
        let jumps: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|j| {
                (0..n)
                    .filter(|&k| k != j && q[j * n + k] > 0.0)
                    .map(|k| (k, q[j * n + k]))
                    .collect()
            })
            .collect();
        let exit_rates = jumps
            .iter()
            .map(|out| out.iter().map(|&(_, r)| r).sum())
            .collect();

        let g = Self {
            n,
            q,
            exit_rates,
            jumps,
        };
        g.check_irreducible()?;
        Ok(g)
    }

    /// Every state must reach state 0 and be reached from it.
    fn check_irreducible(&self) -> Result<()> {
        let forward = self.reachable_from_zero(|j, k| self.rate(j, k) > 0.0);
        let backward = self.reachable_from_zero(|j, k| self.rate(k, j) > 0.0);
        match (0..self.n).find(|&s| !forward[s] || !backward[s]) {
            Some(state) => Err(Error::Reducible { state }),
            None => Ok(()),
        }
    }

    fn reachable_from_zero(&self, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(j) = queue.pop_front() {
            for k in 0..self.n {
                if k != j && !seen[k] && edge(j, k) {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
        seen
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.q[from * self.n + to]
    }

    /// Total exit rate `r_j = -q[j][j]` of each state.
    pub fn exit_rates(&self) -> &[f64] {
        &self.exit_rates
    }

    #[inline]
    pub fn exit_rate(&self, state: usize) -> f64 {
        self.exit_rates[state]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.exit_rates.iter().copied().fold(0.0, f64::max)
    }

    /// Positive-rate jumps out of `state`.
    pub fn jumps_from(&self, state: usize) -> &[(usize, f64)] {
        &self.jumps[state]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.q)
    }

    /// Solves `πQ = 0`, `Σπ = 1` with a dense LU solve, replacing the last
    /// balance equation by the normalization row.
    pub fn stationary_distribution(&self) -> Result<StationaryDistribution> {
        let n = self.n;
        let mut a = self.to_matrix().transpose();
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let x = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }

        let max_abs = self.q.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut pi: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);

        let residual = (0..n)
            .map(|k| (0..n).map(|j| pi[j] * self.rate(j, k)).sum::<f64>().abs())
            .fold(0.0, f64::max);
        if residual > 1e-10 * max_abs {
            return Err(Error::SingularSystem);
        }
        Ok(StationaryDistribution { pi })
    }

    /// `e^{Qτ}` by uniformization.
    pub fn transition_matrix(&self, tau: f64) -> Result<DMatrix<f64>> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::InvalidTime(tau));
        }
        let n = self.n;
        let rate = self.max_exit_rate();
        if tau == 0.0 || rate == 0.0 {
            return Ok(DMatrix::identity(n, n));
        }

        let mut p = DMatrix::identity(n, n) + self.to_matrix() / rate;
        p.iter_mut().for_each(|v| *v = v.max(0.0));

        let mean = rate * tau;
        let blocks = (mean / MAX_BLOCK_MEAN).ceil().max(1.0) as u32;
        let block = poisson_series(&p, mean / f64::from(blocks));
        let mut out = matrix_power(&block, blocks);
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(out)
    }

    /// Draws a sojourn time in `state` and the state jumped to.
    pub fn sample_jump(&self, state: usize, rng: &mut RngStream) -> (f64, usize) {
        let rate = self.exit_rates[state];
        let sojourn = rng.exponential(rate);
        (sojourn, self.sample_target(state, rng))
    }

    /// Draws the embedded-chain successor of `state`.
    #[inline]
    pub fn sample_target(&self, state: usize, rng: &mut RngStream) -> usize {
        let out = &self.jumps[state];
        if out.len() == 1 {
            return out[0].0;
        }
        let mut u = rng.uniform() * self.exit_rates[state];
        for &(k, r) in out {
            if u < r {
                return k;
            }
            u -= r;
        }
        out[out.len() - 1].0
    }
}

/// `Σ_k Poisson(k; mean) P^k`, truncated once the remaining mass is below
/// [`POISSON_TAIL`].
fn poisson_series(p: &DMatrix<f64>, mean: f64) -> DMatrix<f64> {
    let n = p.nrows();
    let mut weight = (-mean).exp();
    let mut term = DMatrix::identity(n, n);
    let mut acc = &term * weight;
    let mut mass = weight;
    let cap = (mean + 50.0 * mean.sqrt() + 100.0) as u32;
    let mut k = 0;
    while 1.0 - mass > POISSON_TAIL && k < cap {
        k += 1;
        term = &term * p;
        weight *= mean / f64::from(k);
        acc += &term * weight;
        mass += weight;
    }
    acc
}

fn matrix_power(m: &DMatrix<f64>, mut exp: u32) -> DMatrix<f64> {
    let n = m.nrows();
    let mut base = m.clone();
    let mut out = DMatrix::identity(n, n);
    while exp > 0 {
        if exp & 1 == 1 {
            out = &out * &base;
        }
        exp >>= 1;
        if exp > 0 {
            base = &base * &base;
        }
    }
    out
}

/// Stationary law of an irreducible generator.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pi: Vec<f64>,
}

impl StationaryDistribution {
    /// Wraps a probability vector; entries must be non-negative and sum to 1.
    pub fn from_probabilities(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::InvalidProbability(f64::NAN));
        }
        if let Some(&bad) = pi.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidProbability(bad));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbability(total));
        }
        Ok(Self { pi })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        let mut cum = 0.0;
        for (k, &p) in self.pi.iter().enumerate() {
            cum += p;
            if u < cum {
                return k;
            }
        }
        // Rounding left u above the last partial sum; take the last
        // state with positive mass.
        self.pi.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

impl std::ops::Index<usize> for StationaryDistribution {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.pi[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q1() -> GeneratorMatrix {
        GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap()
    }

    fn q2() -> GeneratorMatrix {
        GeneratorMatrix::new(&[vec![-3.0, 3.0], vec![6.0, -6.0]]).unwrap()
    }

    fn uniform3() -> GeneratorMatrix {
        GeneratorMatrix::new(&[
            vec![-2.0, 1.0, 1.0],
            vec![1.0, -2.0, 1.0],
            vec![1.0, 1.0, -2.0],
        ])
        .unwrap()
    }

    /// Closed-form `e^{Qτ}` of a two-state chain with rates `a` (0→1) and
    /// `b` (1→0): eigenvalues 0 and `-(a+b)`.
    fn two_state_oracle(a: f64, b: f64, tau: f64) -> [[f64; 2]; 2] {
        let s = a + b;
        let e = (-s * tau).exp();
        [
            [b / s + a / s * e, a / s - a / s * e],
            [b / s - b / s * e, a / s + b / s * e],
        ]
    }

    #[test]
    fn accepts_reference_generators() {
        assert_eq!(q1().n_states(), 2);
        assert_eq!(q2().exit_rates(), &[3.0, 6.0]);
    }

    #[test]
    fn zero_matrix_is_reducible() {
        let err = GeneratorMatrix::new(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap_err();
        assert_eq!(err, Error::Reducible { state: 1 });
    }

    #[test]
    fn one_way_chain_is_reducible() {
        let err = GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap_err();
        assert_eq!(err, Error::Reducible { state: 1 });
    }

    #[test]
    fn rejects_negative_off_diagonal() {
        let err = GeneratorMatrix::new(&[vec![1.0, -1.0], vec![2.0, -2.0]]).unwrap_err();
        assert_eq!(
            err,
            Error::NegativeOffDiagonal {
                row: 0,
                col: 1,
                value: -1.0
            }
        );
    }

    #[test]
    fn rejects_nonzero_row_sum() {
        let err = GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -1.5]]).unwrap_err();
        assert!(matches!(err, Error::RowSumNonzero { row: 1, .. }));
    }

    #[test]
    fn rejects_non_square_and_tiny() {
        assert!(matches!(
            GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![1.0]]),
            Err(Error::NotSquare { bad_row: 1, .. })
        ));
        assert!(matches!(
            GeneratorMatrix::new(&[vec![0.0]]),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn stationary_of_reference_generators() {
        for g in [q1(), q2()] {
            let pi = g.stationary_distribution().unwrap();
            assert_abs_diff_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-12);
        }
        let sym = GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let pi = sym.stationary_distribution().unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn transition_matrix_at_zero_is_identity() {
        let p = q1().transition_matrix(0.0).unwrap();
        assert_eq!(p, DMatrix::identity(2, 2));
    }

    #[test]
    fn transition_matrix_matches_eigen_oracle() {
        let e3 = (-3.0_f64).exp();
        let p = q1().transition_matrix(1.0).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 2.0 / 3.0 + e3 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(0, 1)], 1.0 / 3.0 - e3 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 0)], 2.0 / 3.0 - 2.0 * e3 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 1)], 1.0 / 3.0 + 2.0 * e3 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(0, 0)], 0.68326, epsilon = 1e-5);

        for &tau in &[0.01, 0.1, 1.0, 5.0, 40.0, 300.0] {
            let p = q2().transition_matrix(tau).unwrap();
            let o = two_state_oracle(3.0, 6.0, tau);
            for r in 0..2 {
                for c in 0..2 {
                    assert_abs_diff_eq!(p[(r, c)], o[r][c], epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn rejects_negative_time() {
        assert_eq!(q1().transition_matrix(-1.0), Err(Error::InvalidTime(-1.0)));
    }

    #[test]
    fn sojourn_mean_and_forced_target() {
        let g = q1();
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let mut total = 0.0;
        for _ in 0..n {
            let (dt, next) = g.sample_jump(0, &mut rng);
            assert_eq!(next, 1);
            total += dt;
        }
        let mean = total / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn embedded_chain_split() {
        let g = uniform3();
        let mut rng = RngStream::new(12, 0);
        let n = 100_000;
        let ones = (0..n).filter(|_| g.sample_jump(0, &mut rng).1 == 1).count();
        let p = ones as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * se, "p = {p}");
    }

    #[test]
    fn stationary_sampling() {
        let pi = q1().stationary_distribution().unwrap();
        let mut rng = RngStream::new(13, 0);
        let n = 100_000;
        let zeros = (0..n).filter(|_| pi.sample(&mut rng) == 0).count();
        let p = zeros as f64 / n as f64;
        let se = (2.0 / 9.0 / n as f64).sqrt();
        assert!((p - 2.0 / 3.0).abs() < 3.0 * se, "p = {p}");

        let point = StationaryDistribution::from_probabilities(vec![0.0, 1.0, 0.0]).unwrap();
        assert!((0..100).all(|_| point.sample(&mut rng) == 1));
    }

    #[test]
    fn long_trajectory_occupancy_matches_pi() {
        let g = q1();
        let mut rng = RngStream::new(14, 0);
        let horizon = 1e4;
        let (mut t, mut s) = (0.0, 0);
        let mut occ = [0.0; 2];
        while t < horizon {
            let (dt, next) = g.sample_jump(s, &mut rng);
            occ[s] += dt.min(horizon - t);
            t += dt;
            s = next;
        }
        // Occupancy of a 2-state chain: asymptotic variance of the time
        // average is 2·π0·π1/((a+b)·T).
        let frac = occ[0] / horizon;
        let se = (2.0 * (2.0 / 9.0) / (3.0 * horizon)).sqrt();
        assert!((frac - 2.0 / 3.0).abs() < 3.0 * se, "frac = {frac}");
    }
}
