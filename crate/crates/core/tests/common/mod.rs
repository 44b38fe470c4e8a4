//! Independent reference computations for the integration tests. Nothing
//! here calls into the crate's series or quadrature code.

#![allow(dead_code)]

pub fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// `Pr{B_α(1) = k | B_α(0) = m}`, negative binomial.
pub fn nb_step(alpha: f64, m: u64, k: u64) -> f64 {
    if k < m {
        return 0.0;
    }
    let p = (-alpha).exp();
    choose(k - 1, k - m) * p.powi(m as i32) * (1.0 - p).powi((k - m) as i32)
}

/// Poisson weights `e^{−m} m^j / j!` for `j = 0..` until the right tail is negligible.
pub fn poisson_weights(m: f64) -> Vec<f64> {
    let mut w = vec![(-m).exp()];
    let mut j = 0u64;
    loop {
        j += 1;
        let next = w[w.len() - 1] * m / j as f64;
        w.push(next);
        if j as f64 > 2.0 * m + 20.0 && next < 1e-18 {
            break;
        }
    }
    w
}

/// Yule pmf at time `t` from one progenitor, `e^{−αt}(1−e^{−αt})^{k−1}`.
pub fn geometric_yule(alpha: f64, t: f64, k: u64) -> f64 {
    let p = (-alpha * t).exp();
    p * (1.0 - p).powi(k as i32 - 1)
}

/// Embedded-chain hitting probability for an upward chain `B_α(j)` observed at
/// integer steps: the sum over steps of `Pr{B(j) < k, B(j+1) = k}`, starting
/// from the distribution `init` on `1..k` (mass at `≥ k` already excluded).
fn upward_dp(alpha: f64, k: u64, mut dist: Vec<f64>) -> f64 {
    let mut hit = 0.0;
    for _ in 0..200_000 {
        let below: f64 = dist.iter().sum();
        if below < 1e-17 {
            break;
        }
        let mut next = vec![0.0; k as usize];
        for m in 1..k {
            let w = dist[m as usize];
            if w == 0.0 {
                continue;
            }
            hit += w * nb_step(alpha, m, k);
            for j in m..k {
                next[j as usize] += w * nb_step(alpha, m, j);
            }
        }
        dist = next;
    }
    hit
}

/// `Pr{T_k^Z < ∞}`: `Z` starts at `B_α(1)` and only a jump onto `k` counts.
pub fn z_hitprob_dp(alpha: f64, k: u64) -> f64 {
    let mut dist = vec![0.0; k as usize];
    for m in 1..k {
        dist[m as usize] = nb_step(alpha, 1, m);
    }
    upward_dp(alpha, k, dist)
}

/// `Pr{T_k^X < ∞ | X(0) = 1}`.
pub fn x_hitprob_dp(alpha: f64, k: u64) -> f64 {
    let mut dist = vec![0.0; k as usize];
    dist[1] = 1.0;
    upward_dp(alpha, k, dist)
}

/// `Pr{T_k^Y < ∞}`: binomial thinning per Poisson event from `n0`, hit when a
/// step lands exactly on `k` from above.
pub fn y_hitprob_dp(mu: f64, n0: u64, k: u64) -> f64 {
    let keep = (-mu).exp();
    let thin = |s: u64, j: u64| choose(s, j) * keep.powi(j as i32) * (1.0 - keep).powi((s - j) as i32);
    let mut dist = vec![0.0; n0 as usize + 1];
    dist[n0 as usize] = 1.0;
    let mut hit = 0.0;
    for _ in 0..200_000 {
        let above: f64 = dist[(k + 1) as usize..].iter().sum();
        if above < 1e-17 {
            break;
        }
        let mut next = vec![0.0; n0 as usize + 1];
        for s in k + 1..=n0 {
            let w = dist[s as usize];
            if w == 0.0 {
                continue;
            }
            hit += w * thin(s, k);
            for j in k + 1..=s {
                next[j as usize] += w * thin(s, j);
            }
        }
        dist = next;
    }
    hit
}

/// Linear death pmf at integer time `j` by binomial thinning.
pub fn binomial_death(mu: f64, n0: u64, t: f64, k: u64) -> f64 {
    let keep = (-mu * t).exp();
    choose(n0, k) * keep.powi(k as i32) * (1.0 - keep).powi((n0 - k) as i32)
}

/// Sublinear death pmf at time `t` from the equivalent capped Yule process
/// `W = n0 − Ỹ + 1` with rate `μ`, started at 1.
pub fn sublinear_death(mu: f64, n0: u64, t: f64, k: u64) -> f64 {
    if t == 0.0 {
        return if k == n0 { 1.0 } else { 0.0 };
    }
    if k >= 1 {
        geometric_yule(mu, t, n0 - k + 1)
    } else {
        1.0 - (1..=n0).map(|w| geometric_yule(mu, t, w)).sum::<f64>()
    }
}

/// `Pr{Z(t) = k}` by conditioning on the Yule inner clock.
pub fn z_pmf_conditioning(alpha: f64, lambda: f64, t: f64, k: u64) -> f64 {
    let mut s = 0.0;
    for j in 1..100_000u64 {
        let w = geometric_yule(lambda, t, j);
        s += w * geometric_yule(alpha, j as f64, k);
        if w < 1e-19 && j > 10 {
            break;
        }
    }
    s
}

/// `Σ_j Pr{N_λ(t) = j} f(j)`.
pub fn poisson_mix(lt: f64, f: impl Fn(u64) -> f64) -> f64 {
    poisson_weights(lt).iter().enumerate().map(|(j, w)| w * f(j as u64)).sum()
}

pub fn x_pmf_conditioning(alpha: f64, lambda: f64, n0: u64, t: f64, k: u64) -> f64 {
    poisson_mix(lambda * t, |j| {
        if j == 0 {
            (k == n0) as u64 as f64
        } else {
            // Yule pmf from n0 progenitors at integer time j.
            nb_step(alpha * j as f64, n0, k)
        }
    })
}

pub fn y_pmf_conditioning(mu: f64, lambda: f64, n0: u64, t: f64, k: u64) -> f64 {
    poisson_mix(lambda * t, |j| binomial_death(mu, n0, j as f64, k))
}

pub fn ytilde_pmf_conditioning(mu: f64, lambda: f64, n0: u64, t: f64, k: u64) -> f64 {
    poisson_mix(lambda * t, |j| sublinear_death(mu, n0, j as f64, k))
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Simpson on `[a, b]` split into `pieces` equal subintervals of 1000 panels each.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| simpson(&f, a + i as f64 * w, a + (i + 1) as f64 * w, 1000))
        .sum()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
