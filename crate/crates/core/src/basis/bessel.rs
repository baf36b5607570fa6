//! Integer-order Bessel functions of the first kind and their positive zeros.
//!
//! Values come from Miller's downward recurrence, normalised with the
//! Neumann sum `J_0 + 2 Σ J_2k = 1`. That keeps relative accuracy near
//! machine precision for every order and argument used by the basis,
//! including arguments well inside the transition region `x ≈ m`.

use crate::error::{Error, Result};

const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

/// Residual bound every stored root must satisfy.
pub const ROOT_TOLERANCE: f64 = 1e-12;

/// `J_0(x), J_1(x), ..., J_max_order(x)`.
pub fn bessel_j_sequence(max_order: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; max_order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = (max_order as f64).max(ax);
    let mut start = (top + 30.0 + 12.0 * top.cbrt()).ceil() as usize;
    start += start % 2;

    let mut next = 0.0; // J_{k+1}
    let mut current = 1e-300; // J_k
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        let prev = (2.0 * k as f64 / ax) * current - next;
        next = current;
        current = prev;
        // `current` now holds J_{k-1}
        let order = k - 1;
        if order <= max_order {
            out[order] = current;
        }
        if order % 2 == 0 && order > 0 {
            sum += 2.0 * current;
        }
        if current.abs() > RESCALE_ABOVE {
            current *= RESCALE_BY;
            next *= RESCALE_BY;
            sum *= RESCALE_BY;
            for v in out.iter_mut().skip(order) {
                *v *= RESCALE_BY;
            }
        }
    }
    sum += current;
    let scale = 1.0 / sum;
    for (order, v) in out.iter_mut().enumerate() {
        *v *= scale;
        if x < 0.0 && order % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

/// `J_order(x)` for a signed integer order, using `J_{-m} = (-1)^m J_m`.
pub fn bessel_j(order: i32, x: f64) -> f64 {
    let m = order.unsigned_abs() as usize;
    let v = bessel_j_sequence(m, x)[m];
    if order < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `(J_m(x), J_m'(x))` with the derivative from `J_m' = (J_{m-1} - J_{m+1}) / 2`.
fn value_and_slope(m: u32, x: f64) -> (f64, f64) {
    let m = m as usize;
    let seq = bessel_j_sequence(m + 1, x);
    let below = if m == 0 { -seq[1] } else { seq[m - 1] };
    (seq[m], 0.5 * (below - seq[m + 1]))
}

/// McMahon's large-root expansion for the `n`-th zero of `J_m`.
fn mcmahon_guess(m: u32, n: usize) -> f64 {
    let mu = 4.0 * (m as f64).powi(2);
    let beta = (n as f64 + 0.5 * m as f64 - 0.25) * std::f64::consts::PI;
    let e = 8.0 * beta;
    beta - (mu - 1.0) / e
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * e.powi(3))
        - 32.0 * (mu - 1.0) * (83.0 * mu * mu - 982.0 * mu + 3779.0) / (15.0 * e.powi(5))
}

/// Zeros of `J_m` are separated by more than 3, so half-unit steps never
/// jump over a sign change.
const SCAN_STEP: f64 = 0.5;

fn find_bracket(m: u32, from: f64) -> (f64, f64) {
    let mut lo = from;
    let mut f_lo = bessel_j(m as i32, lo);
    loop {
        let hi = lo + SCAN_STEP;
        let f_hi = bessel_j(m as i32, hi);
        if f_lo == 0.0 {
            return (lo, lo);
        }
        if f_lo.signum() != f_hi.signum() || f_hi == 0.0 {
            return (lo, hi);
        }
        lo = hi;
        f_lo = f_hi;
    }
}

fn refine_root(m: u32, n: usize, lo: f64, hi: f64) -> Result<f64> {
    if lo == hi {
        return Ok(lo);
    }
    let (mut lo, mut hi) = (lo, hi);
    let sign_lo = bessel_j(m as i32, lo).signum();
    let guess = mcmahon_guess(m, n);
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let (f, df) = value_and_slope(m, x);
        if f == 0.0 {
            return Ok(x);
        }
        if f.signum() == sign_lo {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - f / df;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            x = next;
            break;
        }
        x = next;
    }
    if bessel_j(m as i32, x).abs() <= ROOT_TOLERANCE {
        Ok(x)
    } else {
        Err(Error::RootConvergence { m, n })
    }
}

/// Iterator over the ascending positive zeros of `J_m`.
struct Roots {
    m: u32,
    n: usize,
    from: f64,
}

impl Roots {
    fn new(m: u32) -> Self {
        // J_m is positive on (0, j_{m,1}) and j_{m,1} > m.
        let from = if m == 0 { 0.5 } else { m as f64 };
        Roots { m, n: 0, from }
    }
}

impl Iterator for Roots {
    type Item = Result<f64>;

    fn next(&mut self) -> Option<Self::Item> {
        self.n += 1;
        let (lo, hi) = find_bracket(self.m, self.from);
        let root = refine_root(self.m, self.n, lo, hi);
        if let Ok(k) = root {
            self.from = k + 1.0;
        }
        Some(root)
    }
}

/// The first `count` positive zeros `k_{m,1} < k_{m,2} < ...` of `J_m`.
pub fn bessel_roots(m: u32, count: usize) -> Result<Vec<f64>> {
    Roots::new(m).take(count).collect()
}

/// Every positive zero of `J_m` that does not exceed `k_max`.
pub fn bessel_roots_below(m: u32, k_max: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for root in Roots::new(m) {
        let k = root?;
        if k > k_max {
            break;
        }
        out.push(k);
    }
    Ok(out)
}
