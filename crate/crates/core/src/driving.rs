//! Periodic driving laws for the semi-axes and the scalar Hamiltonian factors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    /// `b = r0 a`: the shape is rescaled, `r` stays fixed.
    AxesRatio,
    /// `b - a` fixed.
    Breathing,
    /// `a b` fixed.
    VolumePreserving,
}

impl LawKind {
    pub const ALL: [LawKind; 3] = [LawKind::AxesRatio, LawKind::Breathing, LawKind::VolumePreserving];

    pub fn name(self) -> &'static str {
        match self {
            LawKind::AxesRatio => "ratio",
            LawKind::Breathing => "breathing",
            LawKind::VolumePreserving => "volume",
        }
    }
}

impl fmt::Display for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LawKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" | "axes-ratio" => Ok(LawKind::AxesRatio),
            "breathing" => Ok(LawKind::Breathing),
            "volume" | "volume-preserving" => Ok(LawKind::VolumePreserving),
            _ => Err(Error::Config(format!(
                "unknown driving law `{s}` (expected ratio, breathing or volume)"
            ))),
        }
    }
}

/// `a(τ) = a0 + A sin 2πτ` with `b(τ)` fixed by the law kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingLaw {
    pub kind: LawKind,
    pub a0: f64,
    pub b0: f64,
    pub amplitude: f64,
}

pub const DEFAULT_A0: f64 = 1.0;
pub const DEFAULT_AMPLITUDE: f64 = 0.1;

pub fn default_b0() -> f64 {
    0.51f64.sqrt()
}

impl DrivingLaw {
    pub fn new(kind: LawKind, a0: f64, b0: f64, amplitude: f64) -> Result<Self> {
        let law = DrivingLaw {
            kind,
            a0,
            b0,
            amplitude,
        };
        law.validate()?;
        Ok(law)
    }

    /// `a0 = 1`, `b0 = √0.51`, `A = 0.1`.
    pub fn standard(kind: LawKind) -> Self {
        DrivingLaw {
            kind,
            a0: DEFAULT_A0,
            b0: default_b0(),
            amplitude: DEFAULT_AMPLITUDE,
        }
    }

    pub fn static_ellipse(a0: f64, b0: f64) -> Self {
        DrivingLaw {
            kind: LawKind::AxesRatio,
            a0,
            b0,
            amplitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a_min = self.a0 - self.amplitude.abs();
        let b_min = match self.kind {
            LawKind::AxesRatio => self.b0 / self.a0 * a_min,
            LawKind::Breathing => self.b0 - self.amplitude.abs(),
            LawKind::VolumePreserving => self.a0 * self.b0 / (self.a0 + self.amplitude.abs()),
        };
        let finite = [self.a0, self.b0, self.amplitude].iter().all(|v| v.is_finite());
        if !finite || self.a0 <= 0.0 || self.b0 <= 0.0 || a_min <= 0.0 || b_min <= 0.0 {
            return Err(Error::Config(format!(
                "driving law {} with a0={}, b0={}, A={} degenerates the billiard",
                self.kind, self.a0, self.b0, self.amplitude
            )));
        }
        Ok(())
    }

    pub fn ratio0(&self) -> f64 {
        self.b0 / self.a0
    }
}

/// Which time variable the derivatives refer to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Convention {
    /// Scaled time `τ = ω t / 2π`.
    Tau,
    /// Physical time at driving frequency `omega`.
    Physical { omega: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySample {
    pub tau: f64,
    pub convention: Convention,
    pub a: f64,
    pub b: f64,
    pub da: f64,
    pub db: f64,
    pub dda: f64,
    pub ddb: f64,
    pub volume: f64,
    pub r: f64,
    pub dr: f64,
}

/// Geometry at scaled time `tau` with derivatives in the requested convention.
pub fn geometry(law: &DrivingLaw, tau: f64, convention: Convention) -> Result<GeometrySample> {
    let phase = 2.0 * PI * tau;
    let (s, c) = phase.sin_cos();
    let amp = law.amplitude;
    let a = law.a0 + amp * s;
    let da = 2.0 * PI * amp * c;
    let dda = -(2.0 * PI).powi(2) * amp * s;

    let (b, db, ddb) = match law.kind {
        LawKind::AxesRatio => {
            let r0 = law.ratio0();
            (r0 * a, r0 * da, r0 * dda)
        }
        LawKind::Breathing => (a - law.a0 + law.b0, da, dda),
        LawKind::VolumePreserving => {
            let v = law.a0 * law.b0;
            (
                v / a,
                -v * da / (a * a),
                v * (2.0 * da * da / a.powi(3) - dda / (a * a)),
            )
        }
    };
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::DegenerateGeometry { tau, a, b });
    }

    let dr = match law.kind {
        LawKind::AxesRatio => 0.0,
        _ => (db * a - b * da) / (a * a),
    };
    let volume = match law.kind {
        LawKind::VolumePreserving => law.a0 * law.b0,
        _ => a * b,
    };

    let mut g = GeometrySample {
        tau,
        convention: Convention::Tau,
        a,
        b,
        da,
        db,
        dda,
        ddb,
        volume,
        r: b / a,
        dr,
    };
    if let Convention::Physical { omega } = convention {
        if !(omega > 0.0) {
            return Err(Error::Config(format!(
                "physical-time derivatives need omega > 0, got {omega}"
            )));
        }
        let scale = omega / (2.0 * PI);
        g.convention = convention;
        g.da *= scale;
        g.db *= scale;
        g.dr *= scale;
        g.dda *= scale * scale;
        g.ddb *= scale * scale;
    }
    Ok(g)
}

/// Scalar prefactors of `H = g1 f1 + g3 (f3 + f5) + g2 f2 + g4 (f4 + f6)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GFactors {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
}

pub fn g_factors(s: &GeometrySample) -> GFactors {
    let ia2 = 1.0 / (s.a * s.a);
    let ib2 = 1.0 / (s.b * s.b);
    GFactors {
        g1: -(ia2 + ib2),
        g2: s.a * s.dda + s.b * s.ddb,
        g3: -(ia2 - ib2),
        g4: s.a * s.dda - s.b * s.ddb,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn law_strategy() -> impl Strategy<Value = LawKind> {
        prop_oneof![
            Just(LawKind::AxesRatio),
            Just(LawKind::Breathing),
            Just(LawKind::VolumePreserving)
        ]
    }

    #[test]
    fn ratio_law_at_origin() {
        let law = DrivingLaw::standard(LawKind::AxesRatio);
        let g = geometry(&law, 0.0, Convention::Tau).unwrap();
        assert_eq!(g.a, 1.0);
        assert!((g.b - 0.51f64.sqrt()).abs() < 1e-15);
        assert_eq!(g.dr, 0.0);
        let f = g_factors(&g);
        assert!((f.g3 - 0.960_784_313_725_490_2).abs() < 1e-12);
    }

    #[test]
    fn static_billiard_has_no_acceleration() {
        let law = DrivingLaw::static_ellipse(1.0, 0.7);
        for tau in [0.0, 0.3, 0.77] {
            let f = g_factors(&geometry(&law, tau, Convention::Physical { omega: 4.0 }).unwrap());
            assert_eq!(f.g2, 0.0);
            assert_eq!(f.g4, 0.0);
        }
    }

    #[test]
    fn rejects_degenerate_laws() {
        assert!(DrivingLaw::new(LawKind::Breathing, 1.0, 0.05, 0.1).is_err());
        assert!(DrivingLaw::new(LawKind::AxesRatio, 0.1, 0.5, 0.2).is_err());
        assert!(geometry(
            &DrivingLaw::standard(LawKind::AxesRatio),
            0.1,
            Convention::Physical { omega: 0.0 }
        )
        .is_err());
    }

    #[test]
    fn names_parse() {
        for kind in LawKind::ALL {
            assert_eq!(kind.name().parse::<LawKind>().unwrap(), kind);
        }
        assert!("sawtooth".parse::<LawKind>().is_err());
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(kind in law_strategy(), tau in 0.0f64..1.0) {
            let law = DrivingLaw::standard(kind);
            let d = 1e-5;
            let at = |t| geometry(&law, t, Convention::Tau).unwrap();
            let (m, c, p) = (at(tau - d), at(tau), at(tau + d));
            prop_assert!(((p.a - m.a) / (2.0 * d) - c.da).abs() < 1e-8);
            prop_assert!(((p.b - m.b) / (2.0 * d) - c.db).abs() < 1e-8);
            prop_assert!(((p.da - m.da) / (2.0 * d) - c.dda).abs() < 1e-8 * (1.0 + c.dda.abs()));
            prop_assert!(((p.db - m.db) / (2.0 * d) - c.ddb).abs() < 1e-8 * (1.0 + c.ddb.abs()));
            prop_assert!(((p.r - m.r) / (2.0 * d) - c.dr).abs() < 1e-8);
        }

        #[test]
        fn one_periodic(kind in law_strategy(), tau in -2.0f64..2.0) {
            let law = DrivingLaw::standard(kind);
            let g0 = geometry(&law, tau, Convention::Tau).unwrap();
            let g1 = geometry(&law, tau + 1.0, Convention::Tau).unwrap();
            prop_assert!((g0.a - g1.a).abs() < 1e-14);
            prop_assert!((g0.b - g1.b).abs() < 1e-14);
            prop_assert!((g0.ddb - g1.ddb).abs() < 1e-12);
        }

        #[test]
        fn defining_relations(tau in 0.0f64..1.0) {
            let br = geometry(&DrivingLaw::standard(LawKind::Breathing), tau, Convention::Tau).unwrap();
            prop_assert!(((br.b - br.a) - (default_b0() - 1.0)).abs() < 1e-15);
            let vol = geometry(&DrivingLaw::standard(LawKind::VolumePreserving), tau, Convention::Tau).unwrap();
            prop_assert_eq!(vol.volume, default_b0());
            prop_assert!((vol.a * vol.db + vol.b * vol.da).abs() < 1e-14);
            prop_assert!((vol.a * vol.b - default_b0()).abs() < 1e-15);
            let ratio = geometry(&DrivingLaw::standard(LawKind::AxesRatio), tau, Convention::Tau).unwrap();
            prop_assert_eq!(ratio.dr, 0.0);
        }

        #[test]
        fn physical_time_scaling(kind in law_strategy(), tau in 0.0f64..1.0, omega in 0.1f64..20.0) {
            let law = DrivingLaw::standard(kind);
            let s = geometry(&law, tau, Convention::Tau).unwrap();
            let t = geometry(&law, tau, Convention::Physical { omega }).unwrap();
            let k = omega / (2.0 * PI);
            prop_assert!((t.dda - k * k * s.dda).abs() <= 1e-12 * (1.0 + s.dda.abs()));
            prop_assert!((t.db - k * s.db).abs() <= 1e-12 * (1.0 + s.db.abs()));
        }
    }
}
