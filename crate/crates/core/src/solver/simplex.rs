//! Dense bounded-variable primal simplex for
//!
//! ```text
//! maximize  c'a   subject to  A a = b,  0 <= a <= u
//! ```
//!
//! where `A` has few rows (`q`) and many columns. A two-phase method with one
//! artificial per row finds a starting basis. Entering variables follow the
//! largest reduced cost (lowest index on ties); after a run of degenerate
//! pivots the rule falls back to Bland's lowest-index rule until progress
//! resumes. The basis matrix is refactored every iteration, which is cheap for
//! small `q` and keeps basic values from drifting.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("linear program is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("constraint row {0} is linearly dependent on the others")]
    RedundantRow(usize),
    #[error("basis matrix became singular")]
    SingularBasis,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Simplex multipliers `pi` with `B' pi = c_B` at the optimal basis.
    pub multipliers: Vec<f64>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub degenerate_pivots: usize,
}

/// Small dense LU factorization with partial pivoting (row-major).
struct Lu {
    q: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(mut m: Vec<f64>, q: usize) -> Option<Self> {
        let mut perm: Vec<usize> = (0..q).collect();
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        for k in 0..q {
            let (piv, best) = (k..q)
                .map(|r| (r, m[r * q + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= 1e-13 * scale {
                return None;
            }
            if piv != k {
                for c in 0..q {
                    m.swap(k * q + c, piv * q + c);
                }
                perm.swap(k, piv);
            }
            let d = m[k * q + k];
            for r in k + 1..q {
                let f = m[r * q + k] / d;
                m[r * q + k] = f;
                for c in k + 1..q {
                    m[r * q + c] -= f * m[k * q + c];
                }
            }
        }
        Some(Self { q, lu: m, perm })
    }

    /// Solves `M x = rhs`.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..q {
            for c in 0..r {
                x[r] -= self.lu[r * q + c] * x[c];
            }
        }
        for r in (0..q).rev() {
            for c in r + 1..q {
                x[r] -= self.lu[r * q + c] * x[c];
            }
            x[r] /= self.lu[r * q + r];
        }
        x
    }

    /// Solves `M' x = rhs`.
    fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut y = rhs.to_vec();
        // U' y = rhs
        for r in 0..q {
            for c in 0..r {
                y[r] -= self.lu[c * q + r] * y[c];
            }
            y[r] /= self.lu[r * q + r];
        }
        // L' z = y
        for r in (0..q).rev() {
            for c in r + 1..q {
                y[r] -= self.lu[c * q + r] * y[c];
            }
        }
        let mut x = vec![0.0; q];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

const DEGENERATE_RUN_BEFORE_BLAND: usize = 50;

struct State<'a> {
    q: usize,
    n_struct: usize,
    /// Structural columns followed by one artificial column per row.
    columns: Vec<Vec<f64>>,
    upper: Vec<f64>,
    rhs: &'a [f64],
    values: Vec<f64>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    iterations: usize,
    degenerate_pivots: usize,
    max_iterations: usize,
}

impl State<'_> {
    fn factor_basis(&self) -> Result<Lu, LpError> {
        let q = self.q;
        let mut m = vec![0.0; q * q];
        for (c, &j) in self.basis.iter().enumerate() {
            for r in 0..q {
                m[r * q + c] = self.columns[j][r];
            }
        }
        Lu::factor(m, q).ok_or(LpError::SingularBasis)
    }

    fn refresh_basic_values(&mut self, lu: &Lu) {
        let mut r = self.rhs.to_vec();
        for (j, col) in self.columns.iter().enumerate() {
            if self.is_basic[j] || self.values[j] == 0.0 {
                continue;
            }
            for (ri, a) in r.iter_mut().zip(col) {
                *ri -= a * self.values[j];
            }
        }
        let xb = lu.solve(&r);
        for (k, &j) in self.basis.iter().enumerate() {
            self.values[j] = xb[k];
        }
    }

    fn dot(col: &[f64], pi: &[f64]) -> f64 {
        col.iter().zip(pi).map(|(a, b)| a * b).sum()
    }

    /// Runs simplex iterations for the given costs until optimal.
    fn optimize(&mut self, cost: &[f64]) -> Result<Vec<f64>, LpError> {
        let n_vars = self.columns.len();
        let cscale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let dtol = 1e-11 * cscale;
        let mut degenerate_run = 0usize;
        loop {
            let lu = self.factor_basis()?;
            self.refresh_basic_values(&lu);
            let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
            let pi = lu.solve_transpose(&cb);

            let bland = degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n_vars {
                if self.is_basic[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let d = cost[j] - Self::dot(&self.columns[j], &pi);
                let gain = if self.at_upper[j] { -d } else { d };
                if gain <= dtol {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.map_or(true, |(_, best)| gain > best.abs()) {
                    entering = Some((j, d));
                }
            }
            let Some((enter, _)) = entering else {
                return Ok(pi);
            };
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            self.iterations += 1;

            let sigma = if self.at_upper[enter] { -1.0 } else { 1.0 };
            let alpha = lu.solve(&self.columns[enter]);
            let amax = alpha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let ptol = 1e-11 * amax.max(1.0);

            // Leaving candidate: (theta, basis position, goes to upper bound)
            let mut best: Option<(f64, usize, bool)> = None;
            for (k, &j) in self.basis.iter().enumerate() {
                let rate = sigma * alpha[k];
                let (theta, to_upper) = if rate > ptol {
                    (self.values[j].max(0.0) / rate, false)
                } else if rate < -ptol && self.upper[j].is_finite() {
                    ((self.upper[j] - self.values[j]).max(0.0) / -rate, true)
                } else {
                    continue;
                };
                let better = match best {
                    None => true,
                    Some((bt, bk, _)) => {
                        let tie = (theta - bt).abs() <= 1e-12 * (1.0 + bt);
                        if tie {
                            j < self.basis[bk]
                        } else {
                            theta < bt
                        }
                    }
                };
                if better {
                    best = Some((theta, k, to_upper));
                }
            }
            let flip = self.upper[enter];
            let take_flip = match best {
                None => true,
                Some((bt, _, _)) => flip <= bt * (1.0 + 1e-12),
            };
            if take_flip && !flip.is_finite() {
                return Err(LpError::Unbounded);
            }
            let theta = if take_flip { flip } else { best.expect("checked").0 };
            if theta <= 1e-14 {
                self.degenerate_pivots += 1;
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            self.values[enter] += sigma * theta;
            if take_flip {
                self.at_upper[enter] = !self.at_upper[enter];
                self.values[enter] = if self.at_upper[enter] { flip } else { 0.0 };
                continue;
            }
            let (_, k, to_upper) = best.expect("checked");
            let leave = self.basis[k];
            self.values[leave] = if to_upper { self.upper[leave] } else { 0.0 };
            self.at_upper[leave] = to_upper;
            self.is_basic[leave] = false;
            if leave >= self.n_struct {
                // artificials never re-enter
                self.upper[leave] = 0.0;
            }
            self.basis[k] = enter;
            self.is_basic[enter] = true;
            self.at_upper[enter] = false;
        }
    }

    /// Replaces basic artificials (at zero) by structural columns.
    fn drive_out_artificials(&mut self, n_struct: usize) -> Result<(), LpError> {
        for k in 0..self.q {
            let j = self.basis[k];
            if j < n_struct {
                continue;
            }
            let lu = self.factor_basis()?;
            let mut unit = vec![0.0; self.q];
            unit[k] = 1.0;
            // row k of B^{-1}
            let row = lu.solve_transpose(&unit);
            let mut pick: Option<(usize, f64)> = None;
            for c in 0..n_struct {
                if self.is_basic[c] || self.upper[c] <= 0.0 {
                    continue;
                }
                let v = Self::dot(&self.columns[c], &row).abs();
                if v > 1e-9 && pick.map_or(true, |(_, b)| v > b) {
                    pick = Some((c, v));
                }
            }
            let Some((c, _)) = pick else {
                return Err(LpError::RedundantRow(j - n_struct));
            };
            self.is_basic[j] = false;
            self.values[j] = 0.0;
            self.basis[k] = c;
            self.is_basic[c] = true;
            self.at_upper[c] = false;
            self.degenerate_pivots += 1;
        }
        Ok(())
    }
}

/// Maximizes `cost'a` over `columns a = rhs`, `0 <= a <= upper`.
///
/// `columns[j]` is the constraint column of variable `j` (length `rhs.len()`).
pub fn maximize(columns: &[Vec<f64>], cost: &[f64], upper: &[f64], rhs: &[f64]) -> Result<LpSolution, LpError> {
    let q = rhs.len();
    let m = columns.len();
    let mut all_columns = columns.to_vec();
    let mut values = vec![0.0; m + q];
    for (k, &b) in rhs.iter().enumerate() {
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        let mut e = vec![0.0; q];
        e[k] = sign;
        all_columns.push(e);
        values[m + k] = b.abs();
    }
    let mut up = upper.to_vec();
    up.extend(std::iter::repeat(f64::INFINITY).take(q));
    let mut is_basic = vec![false; m + q];
    for flag in &mut is_basic[m..] {
        *flag = true;
    }
    let mut state = State {
        q,
        n_struct: m,
        columns: all_columns,
        upper: up,
        rhs,
        values,
        at_upper: vec![false; m + q],
        basis: (m..m + q).collect(),
        is_basic,
        iterations: 0,
        degenerate_pivots: 0,
        max_iterations: 50 * (m + q) + 1000,
    };

    let mut phase_one = vec![0.0; m + q];
    for c in &mut phase_one[m..] {
        *c = -1.0;
    }
    state.optimize(&phase_one)?;
    let bscale = rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let infeasibility: f64 = state.values[m..].iter().sum();
    if infeasibility > 1e-9 * bscale {
        return Err(LpError::Infeasible(infeasibility));
    }
    for j in m..m + q {
        state.upper[j] = 0.0;
        if !state.is_basic[j] {
            state.values[j] = 0.0;
        }
    }
    state.drive_out_artificials(m)?;

    let mut phase_two = cost.to_vec();
    phase_two.extend(std::iter::repeat(0.0).take(q));
    let pi = state.optimize(&phase_two)?;
    let lu = state.factor_basis()?;
    state.refresh_basic_values(&lu);
    state.values.truncate(m);
    Ok(LpSolution {
        multipliers: pi,
        values: state.values,
        iterations: state.iterations,
        degenerate_pivots: state.degenerate_pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_round_trip() {
        let m = vec![2.0, 1.0, 0.5, 4.0, 3.0, 1.0, 0.0, 2.0, 5.0];
        let lu = Lu::factor(m.clone(), 3).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        for r in 0..3 {
            let v: f64 = (0..3).map(|c| m[r * 3 + c] * x[c]).sum();
            assert!((v - [1.0, 2.0, 3.0][r]).abs() < 1e-12);
        }
        let y = lu.solve_transpose(&[1.0, -1.0, 0.5]);
        for c in 0..3 {
            let v: f64 = (0..3).map(|r| m[r * 3 + c] * y[r]).sum();
            assert!((v - [1.0, -1.0, 0.5][c]).abs() < 1e-12);
        }
    }

    #[test]
    fn small_box_lp() {
        // max 3a + 2b + c  s.t. a + b + c = 1.5, 0 <= each <= 1
        let cols = vec![vec![1.0], vec![1.0], vec![1.0]];
        let sol = maximize(&cols, &[3.0, 2.0, 1.0], &[1.0, 1.0, 1.0], &[1.5]).unwrap();
        assert!((sol.values[0] - 1.0).abs() < 1e-12);
        assert!((sol.values[1] - 0.5).abs() < 1e-12);
        assert!(sol.values[2].abs() < 1e-12);
        assert!((sol.multipliers[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_box() {
        let cols = vec![vec![1.0], vec![1.0]];
        assert!(matches!(
            maximize(&cols, &[1.0, 1.0], &[1.0, 1.0], &[3.0]),
            Err(LpError::Infeasible(_))
        ));
    }
}
