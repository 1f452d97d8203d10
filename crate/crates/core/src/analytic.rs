//! Closed-form contention statistics when `N` users pick uniformly among `A` codewords.

use crate::error::{Error, Result};

/// Above this many users, `(1 − 1/A)^n` is evaluated as `exp(n·ln(1 − 1/A))`.
const LOG_POWER_THRESHOLD: u64 = 10_000;

/// `N` contending users over `A` available codewords.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadPoint {
    users: u64,
    codewords: u64,
}

impl LoadPoint {
    pub fn new(users: u64, codewords: u64) -> Result<Self> {
        if codewords == 0 {
            return Err(Error::Domain("at least one codeword is required".into()));
        }
        Ok(LoadPoint { users, codewords })
    }

    pub fn users(&self) -> u64 {
        self.users
    }

    pub fn codewords(&self) -> u64 {
        self.codewords
    }

    /// `(1 − 1/A)^n`.
    fn miss_power(&self, n: u64) -> f64 {
        let a = self.codewords as f64;
        if n == 0 {
            1.0
        } else if self.codewords == 1 {
            0.0
        } else if n > LOG_POWER_THRESHOLD {
            (n as f64 * (-1.0 / a).ln_1p()).exp()
        } else {
            (1.0 - 1.0 / a).powi(n as i32)
        }
    }
}

/// Probability that exactly `k` users picked a given codeword: Binomial(N, 1/A) at `k`.
pub fn contention_pmf(point: LoadPoint, k: u64) -> Result<f64> {
    let n = point.users;
    if k > n {
        return Err(Error::Domain(format!("k = {k} exceeds N = {n}")));
    }
    if point.codewords == 1 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let p = 1.0 / point.codewords as f64;
    // ln C(n, k) accumulated over the shorter side.
    let k_small = k.min(n - k);
    let ln_choose: f64 = (1..=k_small).map(|i| ((n - k_small + i) as f64).ln() - (i as f64).ln()).sum();
    let ln_mass = ln_choose + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    Ok(ln_mass.exp())
}

/// Expected number of codewords chosen by exactly one user: `N(1 − 1/A)^(N−1)`.
pub fn expected_singles(point: LoadPoint) -> f64 {
    match point.users {
        0 => 0.0,
        n => n as f64 * point.miss_power(n - 1),
    }
}

/// Expected number of codewords chosen by two or more users:
/// `[1 − (1 − 1/A)^N − (N/A)(1 − 1/A)^(N−1)]·A`.
pub fn expected_collisions(point: LoadPoint) -> f64 {
    let n = point.users;
    if n <= 1 {
        return 0.0;
    }
    let a = point.codewords as f64;
    let idle = point.miss_power(n);
    let single = n as f64 / a * point.miss_power(n - 1);
    ((1.0 - idle - single) * a).max(0.0)
}

/// Efficiency `N_S / (N_S + N_C)` when `A` codewords are all unambiguous.
pub fn efficiency_for_codewords(users: u64, codewords: u64) -> Result<f64> {
    if users == 0 {
        return Err(Error::Domain("efficiency is undefined for N = 0".into()));
    }
    let point = LoadPoint::new(users, codewords)?;
    let singles = expected_singles(point);
    let collisions = expected_collisions(point);
    if singles + collisions == 0.0 {
        // Both terms underflowed; the singles share is negligible.
        return Ok(0.0);
    }
    Ok(singles / (singles + collisions))
}

/// Reference-scheme efficiency `S_r` with `A_r = M·L`.
pub fn reference_efficiency(users: u64, preambles: u32, frame_len: u32) -> Result<f64> {
    efficiency_for_codewords(users, u64::from(preambles) * u64::from(frame_len))
}
