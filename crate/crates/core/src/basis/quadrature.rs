//! Composite Gauss-Legendre rules on the unit interval.

use super::bessel::bessel_j;
use crate::error::{Error, Result};

/// Points per panel of the composite rule.
pub const PANEL_ORDER: usize = 16;

/// Bumped whenever node placement changes, so cached matrices are rebuilt.
pub const QUADRATURE_VERSION: u32 = 1;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A composite rule on `[0, 1]` made of equal Gauss-Legendre panels.
#[derive(Clone, Debug)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let left = p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(left + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        CompositeRule { nodes, weights }
    }

    /// At least `ceil(4 k) + 16` nodes, enough for products of Bessel
    /// functions oscillating with wavenumbers up to `k`.
    pub fn for_wavenumber(k: f64) -> Self {
        let wanted = (4.0 * k).ceil() as usize + 16;
        CompositeRule::new(wanted.div_ceil(PANEL_ORDER), PANEL_ORDER)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `∫_0^1 J_ma(ka ρ) J_mb(kb ρ) ρ^p dρ` for `p` in {1, 3}.
pub fn radial_integral(ma: i32, ka: f64, mb: i32, kb: f64, p: u32) -> Result<f64> {
    if p != 1 && p != 3 {
        return Err(Error::InvalidPower(p));
    }
    let rule = CompositeRule::for_wavenumber(ka.max(kb));
    Ok(rule.integrate(|r| bessel_j(ma, ka * r) * bessel_j(mb, kb * r) * r.powi(p as i32)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::bessel::bessel_roots;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(16);
        for deg in 0..32 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let want = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg as f64 + 1.0)
            };
            assert!((got - want).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn odd_rule_has_centre_node() {
        let (x, w) = gauss_legendre(5);
        assert!(x[2].abs() < 1e-15);
        assert!((w[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_sizing() {
        let rule = CompositeRule::for_wavenumber(40.0);
        assert!(rule.len() >= 176);
        assert_eq!(rule.len() % PANEL_ORDER, 0);
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bessel_orthogonality_on_the_disc() {
        // ∫ J_m(k_a ρ) J_m(k_b ρ) ρ dρ = δ_ab J_{m+1}(k_a)^2 / 2
        let ks = bessel_roots(3, 4).unwrap();
        for (i, &ka) in ks.iter().enumerate() {
            for (j, &kb) in ks.iter().enumerate() {
                let got = radial_integral(3, ka, 3, kb, 1).unwrap();
                let want = if i == j {
                    0.5 * bessel_j(4, ka).powi(2)
                } else {
                    0.0
                };
                assert!((got - want).abs() < 1e-13, "{i} {j}: {got}");
            }
        }
    }

    #[test]
    fn rejects_other_powers() {
        assert!(matches!(
            radial_integral(0, 1.0, 0, 1.0, 2),
            Err(Error::InvalidPower(2))
        ));
    }
}
