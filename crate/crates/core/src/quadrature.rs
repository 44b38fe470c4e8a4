//! Adaptive Gauss–Kronrod (7/15) integration for the first-passage densities.

use crate::error::{invalid, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub intervals: usize,
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` by bisecting the worst interval until the
/// summed error estimate is below `tol` or `max_intervals` is reached.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(invalid(format!("bad integration range [{a}, {b}]")));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error_estimate: 0.0,
            intervals: 0,
        });
    }
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total_err: f64 = parts.iter().map(|p| p.3).sum();
        if total_err <= tol || parts.len() >= max_intervals {
            break;
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let value = parts.iter().map(|p| p.2).sum();
    let error_estimate = parts.iter().map(|p| p.3).sum();
    Ok(Integral {
        value,
        error_estimate,
        intervals: parts.len(),
    })
}

/// Integral of a density on `[0, ∞)` whose tail is dominated by
/// `coeff · exp(-rate · t)`.
///
/// The finite part is integrated on `[0, T*]` with `rate · T* ≥ 40` and large
/// enough that the analytic tail bound `coeff · exp(-rate T*) / rate` is
/// negligible; that bound is added to the reported error.
pub fn integrate_exponential_tail(
    f: impl Fn(f64) -> f64,
    rate: f64,
    coeff: f64,
    tol: f64,
) -> Result<Integral> {
    if !(rate > 0.0 && coeff >= 0.0) {
        return Err(invalid("tail rate must be positive"));
    }
    let t_star = horizon_for(rate, coeff, tol);
    let mut out = integrate(f, 0.0, t_star, tol, 4000)?;
    out.error_estimate += coeff * (-rate * t_star).exp() / rate;
    Ok(out)
}

/// `T*` with `rate · T* ≥ 40` and tail bound below `tol · 1e-3`.
pub fn horizon_for(rate: f64, coeff: f64, tol: f64) -> f64 {
    let needed = if coeff > 0.0 {
        (coeff / (rate * tol * 1e-3)).ln().max(0.0) / rate
    } else {
        0.0
    };
    (40.0 / rate).max(needed)
}
