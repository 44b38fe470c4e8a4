//! Stirling numbers of the second kind and Bell (Touchard) polynomials.

use crate::error::{Error, Result};

/// Largest `n` for which [`stirling2`] is evaluated.
pub const STIRLING_MAX_N: u32 = 30;

/// Row `n` of the Stirling triangle, `S(n, 0..=n)`.
pub fn stirling2_row(n: u32) -> Result<Vec<u128>> {
    if n > STIRLING_MAX_N {
        return Err(Error::StirlingOverflow { n, k: 0 });
    }
    let mut row = vec![1u128];
    for m in 1..=n as usize {
        let mut next = vec![0u128; m + 1];
        for k in 1..=m {
            let stay = if k < m { row[k] } else { 0 };
            let v = (k as u128)
                .checked_mul(stay)
                .and_then(|a| a.checked_add(row[k - 1]))
                .ok_or(Error::StirlingOverflow { n, k: k as u32 })?;
            next[k] = v;
        }
        row = next;
    }
    Ok(row)
}

/// `S(n, k)` by `S(n,k) = k S(n−1,k) + S(n−1,k−1)`.
pub fn stirling2(n: u32, k: u32) -> Result<u128> {
    if k > n {
        return Err(Error::Domain(format!("S({n}, {k}) requires k ≤ n")));
    }
    Ok(stirling2_row(n)?[k as usize])
}

/// `B_n(x) = Σ_k S(n, k) x^k`.
pub fn bell_polynomial(n: u32, x: f64) -> Result<f64> {
    let row = stirling2_row(n)?;
    // Horner from the top coefficient.
    Ok(row.iter().rev().fold(0.0, |acc, &s| acc * x + s as f64))
}
