//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the solver or kernel code paths it checks.

#![allow(dead_code)]

use rand::Rng;

pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

pub fn weighted_objective(x: &[Vec<f64>], y: &[f64], w: &[f64], tau: f64, beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((xi, &yi), &wi)| {
            let fit = beta[0] + xi.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            wi * check_loss(yi - fit, tau)
        })
        .sum()
}

/// Solves a small square system by Gaussian elimination; `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())?;
        if a[piv][k].abs() < 1e-9 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for r in k + 1..n {
            let f = a[r][k] / a[k][k];
            for c in k..n {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Minimum objective over every basic solution: coefficients that
/// interpolate `p + 1` of the points. Returns (objective, beta).
pub fn brute_force_qr(x: &[Vec<f64>], y: &[f64], w: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let q = x[0].len() + 1;
    let idx: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
    let mut subsets = Vec::new();
    combinations(idx.len(), q, 0, &mut Vec::new(), &mut subsets);
    let mut best = (f64::INFINITY, Vec::new());
    for s in subsets {
        let a: Vec<Vec<f64>> = s
            .iter()
            .map(|&k| std::iter::once(1.0).chain(x[idx[k]].iter().copied()).collect())
            .collect();
        let b: Vec<f64> = s.iter().map(|&k| y[idx[k]]).collect();
        if let Some(beta) = solve_square(a, b) {
            let obj = weighted_objective(x, y, w, tau, &beta);
            if obj < best.0 {
                best = (obj, beta);
            }
        }
    }
    best
}

/// Textbook Kaplan-Meier CDF over distinct event times (no kernel weights).
pub fn global_km_cdf(times: &[f64], events: &[bool], t: f64) -> f64 {
    let mut distinct: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(&s, &e)| e && s <= t)
        .map(|(&s, _)| s)
        .collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut surv = 1.0;
    for s in distinct {
        let at_risk = times.iter().filter(|&&u| u >= s).count() as f64;
        let deaths = times
            .iter()
            .zip(events)
            .filter(|(&u, &e)| e && u == s)
            .count() as f64;
        surv *= 1.0 - deaths / at_risk;
    }
    1.0 - surv
}

pub fn random_instance<R: Rng>(rng: &mut R, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|xi| 1.0 + xi.iter().sum::<f64>() + rng.gen_range(-3.0..3.0))
        .collect();
    let w: Vec<f64> = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
    (x, y, w)
}

/// Expected censored fraction among clean rows of the simulation design,
/// by Simpson integration over the normal log-time density: with
/// `log C ~ U(0, upper)`, `P(C < T | X) = E[clamp(log T, 0, upper)] / upper`.
pub fn expected_censoring_rate(beta0: f64, beta1: f64, upper: f64) -> f64 {
    let mut total = 0.0;
    for x in 1..=20 {
        let x = x as f64;
        let mu = beta0 + beta1 * x;
        let sd = (3.0 - x / 8.0).exp().sqrt();
        let (lo, hi) = (mu - 12.0 * sd, mu + 12.0 * sd);
        let m = 20_000;
        let h = (hi - lo) / m as f64;
        let f = |t: f64| {
            let z = (t - mu) / sd;
            let dens = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            t.clamp(0.0, upper) / upper * dens
        };
        let mut s = f(lo) + f(hi);
        for k in 1..m {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * h);
        }
        total += s * h / 3.0;
    }
    total / 20.0
}
