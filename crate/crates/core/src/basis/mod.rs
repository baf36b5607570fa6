//! Circular-billiard eigenbasis, parity blocks and coupling matrices.
//!
//! Modes are `Φ_{n,m}(ρ, φ) = J_m(k ρ) e^{imφ} / (√π J_{m+1}(k))` on the unit
//! disc with signed `m` and `k = k_{|m|,n}`. The four parity blocks use the
//! real combinations `cos mφ` (ξ-even) and `sin mφ` (ξ-odd) of the `±m` pair.

pub mod bessel;
pub mod cache;
pub mod quadrature;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use bessel::{bessel_j, bessel_j_sequence, bessel_roots_below};
use quadrature::{radial_integral, CompositeRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Symmetry sector under `η → -η` and `ξ → -ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParityBlock {
    pub eta: Parity,
    pub xi: Parity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Angular {
    Cos,
    Sin,
}

impl ParityBlock {
    pub const EVEN_EVEN: ParityBlock = ParityBlock {
        eta: Parity::Even,
        xi: Parity::Even,
    };

    pub const ALL: [ParityBlock; 4] = [
        ParityBlock::EVEN_EVEN,
        ParityBlock {
            eta: Parity::Odd,
            xi: Parity::Even,
        },
        ParityBlock {
            eta: Parity::Even,
            xi: Parity::Odd,
        },
        ParityBlock {
            eta: Parity::Odd,
            xi: Parity::Odd,
        },
    ];

    pub fn new(eta: Parity, xi: Parity) -> Self {
        ParityBlock { eta, xi }
    }

    pub fn angular(self) -> Angular {
        match self.xi {
            Parity::Even => Angular::Cos,
            Parity::Odd => Angular::Sin,
        }
    }

    /// Whether the real angular function of order `m` lies in this block.
    pub fn admits(self, m: u32) -> bool {
        let m_even = m.is_multiple_of(2);
        match self.angular() {
            Angular::Cos => m_even == (self.eta == Parity::Even),
            Angular::Sin => m > 0 && m_even == (self.eta == Parity::Odd),
        }
    }

    pub fn tag(self) -> &'static str {
        match (self.eta, self.xi) {
            (Parity::Even, Parity::Even) => "ee",
            (Parity::Odd, Parity::Even) => "oe",
            (Parity::Even, Parity::Odd) => "eo",
            (Parity::Odd, Parity::Odd) => "oo",
        }
    }
}

impl std::fmt::Display for ParityBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for ParityBlock {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ParityBlock::ALL
            .into_iter()
            .find(|b| b.tag() == s)
            .ok_or_else(|| format!("unknown parity block `{s}` (expected ee, oe, eo or oo)"))
    }
}

/// One complex circular mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisIndex {
    pub n: u32,
    pub m: i32,
    pub k: f64,
}

/// A real `cos mφ` or `sin mφ` combination of the `±m` modes with radial index `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealMode {
    pub n: u32,
    pub m: u32,
    pub k: f64,
}

const HALF_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

impl RealMode {
    /// Expansion `(signed m, coefficient)` over the complex modes.
    pub fn components(&self, angular: Angular) -> Vec<(i32, Complex64)> {
        let m = self.m as i32;
        if m == 0 {
            return vec![(0, Complex64::new(1.0, 0.0))];
        }
        match angular {
            Angular::Cos => vec![
                (m, Complex64::new(HALF_SQRT2, 0.0)),
                (-m, Complex64::new(HALF_SQRT2, 0.0)),
            ],
            Angular::Sin => vec![
                (m, Complex64::new(0.0, -HALF_SQRT2)),
                (-m, Complex64::new(0.0, HALF_SQRT2)),
            ],
        }
    }
}

/// The real modes of one parity block, ascending in `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubBasis {
    pub parity: ParityBlock,
    pub modes: Vec<RealMode>,
}

impl SubBasis {
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    /// Columns are the real modes expanded over `basis.indices`.
    pub fn to_signed(&self, basis: &BasisSet) -> DMatrix<Complex64> {
        let mut t = DMatrix::zeros(basis.indices.len(), self.dim());
        let angular = self.parity.angular();
        for (col, mode) in self.modes.iter().enumerate() {
            for (m, c) in mode.components(angular) {
                let row = basis
                    .position(m, mode.n)
                    .expect("real mode built from this basis");
                t[(row, col)] = c;
            }
        }
        t
    }
}

/// All circular modes with `k_{|m|,n} ≤ cutoff` and their parity-block maps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisSet {
    pub cutoff: f64,
    pub indices: Vec<BasisIndex>,
    pub blocks: Vec<SubBasis>,
}

impl BasisSet {
    pub fn new(cutoff: f64) -> Result<Self> {
        let mut roots: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for m in 0.. {
            let ks = bessel_roots_below(m, cutoff)?;
            if ks.is_empty() {
                break;
            }
            roots.insert(m, ks);
        }

        let mut indices = Vec::new();
        for (&m, ks) in &roots {
            for (i, &k) in ks.iter().enumerate() {
                let n = i as u32 + 1;
                indices.push(BasisIndex { n, m: m as i32, k });
                if m > 0 {
                    indices.push(BasisIndex { n, m: -(m as i32), k });
                }
            }
        }
        indices.sort_by(|a, b| a.k.total_cmp(&b.k).then(a.m.cmp(&b.m)));

        let blocks = ParityBlock::ALL
            .iter()
            .map(|&parity| {
                let mut modes: Vec<RealMode> = roots
                    .iter()
                    .filter(|(&m, _)| parity.admits(m))
                    .flat_map(|(&m, ks)| {
                        ks.iter().enumerate().map(move |(i, &k)| RealMode {
                            n: i as u32 + 1,
                            m,
                            k,
                        })
                    })
                    .collect();
                modes.sort_by(|a, b| a.k.total_cmp(&b.k).then(a.m.cmp(&b.m)));
                SubBasis { parity, modes }
            })
            .collect();

        Ok(BasisSet {
            cutoff,
            indices,
            blocks,
        })
    }

    pub fn block(&self, parity: ParityBlock) -> &SubBasis {
        self.blocks
            .iter()
            .find(|b| b.parity == parity)
            .expect("all four blocks are present")
    }

    /// Real sub-basis of one parity sector together with its map to the complex modes.
    pub fn parity_block(&self, eta: Parity, xi: Parity) -> (&SubBasis, DMatrix<Complex64>) {
        let sub = self.block(ParityBlock::new(eta, xi));
        (sub, sub.to_signed(self))
    }

    pub fn position(&self, m: i32, n: u32) -> Option<usize> {
        self.indices.iter().position(|i| i.m == m && i.n == n)
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }
}

/// Which of the six coupling operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coupling {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
}

impl Coupling {
    pub const ALL: [Coupling; 6] = [
        Coupling::F1,
        Coupling::F2,
        Coupling::F3,
        Coupling::F4,
        Coupling::F5,
        Coupling::F6,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy)]
enum Prefactor {
    Half,
    Quarter,
    QuarterKbSquared,
}

/// Selection rule and radial integral shape for `⟨sa| f |sb⟩`, `f ≠ f1`.
#[derive(Clone, Copy)]
struct Shape {
    kb_order: i32,
    power: u32,
    prefactor: Prefactor,
}

fn shape(kind: Coupling, sa: i32, sb: i32) -> Option<Shape> {
    let (wanted, kb_order, power, prefactor) = match kind {
        Coupling::F1 => return None,
        Coupling::F2 => (sa, sa, 3, Prefactor::Half),
        Coupling::F3 => (sa - 2, sa, 1, Prefactor::QuarterKbSquared),
        Coupling::F4 => (sa - 2, sa - 2, 3, Prefactor::Quarter),
        Coupling::F5 => (sa + 2, sa, 1, Prefactor::QuarterKbSquared),
        Coupling::F6 => (sa + 2, sa + 2, 3, Prefactor::Quarter),
    };
    (sb == wanted).then_some(Shape {
        kb_order,
        power,
        prefactor,
    })
}

fn scale(shape: Shape, sa: i32, ka: f64, sb: i32, kb: f64) -> f64 {
    let pre = match shape.prefactor {
        Prefactor::Half => 0.5,
        Prefactor::Quarter => 0.25,
        Prefactor::QuarterKbSquared => 0.25 * kb * kb,
    };
    pre / (bessel_j(sa + 1, ka) * bessel_j(sb + 1, kb))
}

/// `⟨Φ_a| f |Φ_b⟩` between two complex modes, by direct quadrature.
pub fn signed_element(kind: Coupling, a: &BasisIndex, b: &BasisIndex) -> Result<f64> {
    if kind == Coupling::F1 {
        let same = a.m == b.m && a.n == b.n;
        return Ok(if same { -0.25 * a.k * a.k } else { 0.0 });
    }
    match shape(kind, a.m, b.m) {
        None => Ok(0.0),
        Some(s) => {
            let integral = radial_integral(a.m, a.k, s.kb_order, b.k, s.power)?;
            Ok(integral * scale(s, a.m, a.k, b.m, b.k))
        }
    }
}

/// Modes of one `|m|` within a block, with `J` sampled on the shared grid.
struct Group {
    m: u32,
    positions: Vec<usize>,
    ks: Vec<f64>,
    /// `J_order(k ρ_q)` for orders `|m|`, `|m|+2`, `||m|-2|`; rows are modes.
    tables: BTreeMap<u32, DMatrix<f64>>,
}

impl Group {
    fn table(&self, order: i32) -> (f64, &DMatrix<f64>) {
        let abs = order.unsigned_abs();
        let sign = if order < 0 && abs % 2 == 1 { -1.0 } else { 1.0 };
        (sign, &self.tables[&abs])
    }
}

/// The six real coupling matrices of one parity block.
#[derive(Clone, Debug)]
pub struct CouplingMatrices {
    pub parity: ParityBlock,
    pub f: [DMatrix<f64>; 6],
}

impl CouplingMatrices {
    pub fn get(&self, kind: Coupling) -> &DMatrix<f64> {
        &self.f[kind.slot()]
    }

    pub fn dim(&self) -> usize {
        self.f[0].nrows()
    }

    /// `f3 + f5`, the kinetic anisotropy `(∂η² − ∂ξ²)/4`.
    pub fn anisotropy(&self) -> DMatrix<f64> {
        &self.f[2] + &self.f[4]
    }

    /// `f4 + f6`, the quadrupole moment `ρ² cos 2φ / 4`.
    pub fn quadrupole(&self) -> DMatrix<f64> {
        &self.f[3] + &self.f[5]
    }

    pub fn build(basis: &BasisSet, parity: ParityBlock) -> Result<Self> {
        let sub = basis.block(parity);
        let dim = sub.dim();
        let rule = CompositeRule::for_wavenumber(basis.cutoff);
        let angular = parity.angular();

        let mut by_m: BTreeMap<u32, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
        for (pos, mode) in sub.modes.iter().enumerate() {
            let entry = by_m.entry(mode.m).or_default();
            entry.0.push(pos);
            entry.1.push(mode.k);
        }
        let groups: Vec<Group> = by_m
            .into_par_iter()
            .map(|(m, (positions, ks))| {
                let orders = [m, m + 2, m.abs_diff(2)];
                let top = (m + 2) as usize;
                let mut tables: BTreeMap<u32, DMatrix<f64>> = orders
                    .iter()
                    .map(|&o| (o, DMatrix::zeros(ks.len(), rule.len())))
                    .collect();
                for (row, &k) in ks.iter().enumerate() {
                    for (q, &r) in rule.nodes.iter().enumerate() {
                        let seq = bessel_j_sequence(top, k * r);
                        for &o in &orders {
                            tables.get_mut(&o).unwrap()[(row, q)] = seq[o as usize];
                        }
                    }
                }
                Group {
                    m,
                    positions,
                    ks,
                    tables,
                }
            })
            .collect();

        let weights = |power: u32| -> Vec<f64> {
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(r, w)| w * r.powi(power as i32))
                .collect()
        };
        let w1 = weights(1);
        let w3 = weights(3);

        let mut f: [DMatrix<f64>; 6] = std::array::from_fn(|_| DMatrix::zeros(dim, dim));
        for ga in &groups {
            let mode_a = RealMode {
                n: 0,
                m: ga.m,
                k: 0.0,
            };
            for gb in groups.iter().filter(|g| g.m.abs_diff(ga.m) <= 2) {
                let mode_b = RealMode {
                    n: 0,
                    m: gb.m,
                    k: 0.0,
                };
                for kind in Coupling::ALL {
                    let mut acc = DMatrix::<f64>::zeros(ga.ks.len(), gb.ks.len());
                    let mut touched = false;
                    for (sa, ca) in mode_a.components(angular) {
                        for (sb, cb) in mode_b.components(angular) {
                            let coef = (ca.conj() * cb).re;
                            if kind == Coupling::F1 {
                                if sa == sb && ga.m == gb.m {
                                    for (i, &k) in ga.ks.iter().enumerate() {
                                        acc[(i, i)] += coef * (-0.25 * k * k);
                                    }
                                    touched = true;
                                }
                                continue;
                            }
                            let Some(s) = shape(kind, sa, sb) else {
                                continue;
                            };
                            let (sign_a, ta) = ga.table(sa);
                            let (sign_b, tb) = gb.table(s.kb_order);
                            let w = if s.power == 1 { &w1 } else { &w3 };
                            let mut weighted = ta.clone();
                            for (q, wq) in w.iter().enumerate() {
                                weighted.column_mut(q).scale_mut(*wq);
                            }
                            let integrals = weighted * tb.transpose();
                            for i in 0..ga.ks.len() {
                                for j in 0..gb.ks.len() {
                                    acc[(i, j)] += coef
                                        * sign_a
                                        * sign_b
                                        * integrals[(i, j)]
                                        * scale(s, sa, ga.ks[i], sb, gb.ks[j]);
                                }
                            }
                            touched = true;
                        }
                    }
                    if touched {
                        let target = &mut f[kind.slot()];
                        for (i, &pi) in ga.positions.iter().enumerate() {
                            for (j, &pj) in gb.positions.iter().enumerate() {
                                target[(pi, pj)] = acc[(i, j)];
                            }
                        }
                    }
                }
            }
        }
        Ok(CouplingMatrices { parity, f })
    }
}

/// Coupling matrices of all four parity blocks.
pub fn build_matrices(basis: &BasisSet) -> Result<Vec<CouplingMatrices>> {
    ParityBlock::ALL
        .iter()
        .map(|&p| CouplingMatrices::build(basis, p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BasisSet {
        BasisSet::new(14.0).unwrap()
    }

    #[test]
    fn blocks_partition_the_basis() {
        let basis = small();
        let total: usize = basis.blocks.iter().map(SubBasis::dim).sum();
        assert_eq!(total, basis.dim());
        for block in &basis.blocks {
            assert!(block.modes.windows(2).all(|w| w[0].k <= w[1].k));
        }
        assert!(basis.block(ParityBlock::EVEN_EVEN).modes.iter().any(|m| m.m == 0));
    }

    #[test]
    fn block_membership() {
        let ee = ParityBlock::EVEN_EVEN;
        let oo = ParityBlock::new(Parity::Odd, Parity::Odd);
        assert!(ee.admits(0) && ee.admits(2) && !ee.admits(1));
        assert!(!oo.admits(0) && oo.admits(2) && !oo.admits(3));
        let eo = ParityBlock::new(Parity::Even, Parity::Odd);
        assert!(eo.admits(1) && !eo.admits(2));
    }

    #[test]
    fn full_transform_is_unitary() {
        let basis = small();
        let cols: Vec<DMatrix<Complex64>> = basis.blocks.iter().map(|b| b.to_signed(&basis)).collect();
        let n = basis.dim();
        let mut t = DMatrix::<Complex64>::zeros(n, n);
        let mut c0 = 0;
        for c in &cols {
            t.view_mut((0, c0), (n, c.ncols())).copy_from(c);
            c0 += c.ncols();
        }
        let defect = (t.adjoint() * &t - DMatrix::identity(n, n)).norm();
        assert!(defect < 1e-14, "{defect}");
    }

    #[test]
    fn first_laplacian_entry() {
        let basis = small();
        let mats = CouplingMatrices::build(&basis, ParityBlock::EVEN_EVEN).unwrap();
        let k01 = 2.404825557695773;
        assert!((mats.get(Coupling::F1)[(0, 0)] + k01 * k01 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn block_matrices_match_signed_elements() {
        let basis = BasisSet::new(11.0).unwrap();
        for parity in ParityBlock::ALL {
            let mats = CouplingMatrices::build(&basis, parity).unwrap();
            let t = basis.block(parity).to_signed(&basis);
            for kind in Coupling::ALL {
                let n = basis.dim();
                let mut signed = DMatrix::<Complex64>::zeros(n, n);
                for (i, a) in basis.indices.iter().enumerate() {
                    for (j, b) in basis.indices.iter().enumerate() {
                        signed[(i, j)] = signed_element(kind, a, b).unwrap().into();
                    }
                }
                let real = t.adjoint() * signed * &t;
                let diff = real.map(|z| z.re) - mats.get(kind);
                assert!(diff.amax() < 1e-11, "{parity} {kind:?}: {}", diff.amax());
                assert!(real.map(|z| z.im).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn selection_rule_zeroes_m_preserving_f3() {
        let basis = small();
        let mats = CouplingMatrices::build(&basis, ParityBlock::EVEN_EVEN).unwrap();
        let modes = &basis.block(ParityBlock::EVEN_EVEN).modes;
        for (i, a) in modes.iter().enumerate() {
            for (j, b) in modes.iter().enumerate() {
                if a.m.abs_diff(b.m) > 2 {
                    for kind in Coupling::ALL {
                        assert_eq!(mats.get(kind)[(i, j)], 0.0);
                    }
                }
            }
        }
        let a = BasisIndex {
            n: 1,
            m: 1,
            k: 3.831705970207512,
        };
        assert_eq!(signed_element(Coupling::F3, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn combined_operators_are_symmetric() {
        let basis = small();
        for parity in ParityBlock::ALL {
            let mats = CouplingMatrices::build(&basis, parity).unwrap();
            let g = mats.anisotropy();
            let q = mats.quadrupole();
            let f2 = mats.get(Coupling::F2);
            assert!((&g - g.transpose()).amax() < 1e-12);
            assert!((&q - q.transpose()).amax() < 1e-12);
            assert!((f2 - f2.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn parity_tags_round_trip() {
        for b in ParityBlock::ALL {
            assert_eq!(b.tag().parse::<ParityBlock>().unwrap(), b);
        }
        assert!("xx".parse::<ParityBlock>().is_err());
    }
}
