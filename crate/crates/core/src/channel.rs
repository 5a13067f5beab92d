//! Air-to-ground link budget.
//!
//! Received power follows a probabilistic LoS/NLoS mixture: each component is
//! a power-law path loss scaled by a unit-mean fading power gain (Rician for
//! LoS, Rayleigh for NLoS), and the mixture weight is a sigmoid of the
//! elevation angle in degrees. Inter-UAV interference is NLoS-only.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{SeedTree, Stream};

/// Environment-dependent propagation constants (dense urban defaults).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConstants {
    /// Sigmoid slope of the LoS probability.
    pub b: f64,
    /// Sigmoid offset of the LoS probability.
    pub c: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    /// AWGN power in watts.
    pub noise_power: f64,
    /// Rician K-factor of the LoS fading, in dB.
    pub rician_k_db: f64,
}

impl Default for EnvConstants {
    fn default() -> Self {
        Self {
            b: 0.136,
            c: 11.95,
            alpha_los: 3.0,
            alpha_nlos: 4.0,
            noise_power: 4e-15,
            rician_k_db: 10.0,
        }
    }
}

impl EnvConstants {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad("b", "must be positive");
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c", "must be positive");
        }
        if !(self.alpha_los > 2.0) {
            return bad("alpha_los", "must exceed 2");
        }
        if !(self.alpha_nlos >= self.alpha_los && self.alpha_nlos.is_finite()) {
            return bad("alpha_nlos", "must be at least alpha_los");
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return bad("noise_power", "must be positive");
        }
        if !self.rician_k_db.is_finite() {
            return bad("rician_k_db", "must be finite");
        }
        Ok(())
    }

    /// Linear Rician K-factor.
    pub fn rician_k(&self) -> f64 {
        10f64.powf(self.rician_k_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    /// Horizontal distance, meters.
    pub d: f64,
    /// 3D distance, meters.
    pub r: f64,
    /// Elevation angle, radians.
    pub theta: f64,
}

pub fn link_geometry(ue_xy: [f64; 2], uav_xyz: [f64; 3]) -> Result<LinkGeometry> {
    for &v in ue_xy.iter().chain(uav_xyz.iter()) {
        ensure_finite("link coordinate", v)?;
    }
    let h = uav_xyz[2];
    if h <= 0.0 {
        return Err(Error::Domain {
            what: "uav altitude",
            value: h,
            expected: "> 0",
        });
    }
    let d = (uav_xyz[0] - ue_xy[0]).hypot(uav_xyz[1] - ue_xy[1]);
    let r = d.hypot(h);
    let theta = (h / r).min(1.0).asin();
    Ok(LinkGeometry { d, r, theta })
}

pub fn los_probability(theta: f64, env: &EnvConstants) -> Result<f64> {
    ensure_finite("elevation angle", theta)?;
    if !(0.0..=FRAC_PI_2 + 1e-12).contains(&theta) {
        return Err(Error::Domain {
            what: "elevation angle",
            value: theta,
            expected: "[0, pi/2]",
        });
    }
    let degrees = theta.to_degrees();
    Ok(1.0 / (1.0 + env.c * (-env.b * (degrees - env.c)).exp()))
}

/// `p_tx * gain * r^-alpha`.
pub fn received_power(p_tx: f64, r: f64, gain: f64, alpha: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain {
            what: "link distance",
            value: r,
            expected: "> 0",
        });
    }
    if p_tx < 0.0 || gain < 0.0 {
        return Err(Error::Domain {
            what: "power or gain",
            value: p_tx.min(gain),
            expected: ">= 0",
        });
    }
    Ok(p_tx * gain * r.powf(-alpha))
}

pub fn effective_power(p_los: f64, power_los: f64, power_nlos: f64) -> f64 {
    p_los * power_los + (1.0 - p_los) * power_nlos
}

/// A transmitting UAV as seen by the interference sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavTx {
    pub xyz: [f64; 3],
    /// Average per-user transmit power, watts.
    pub avg_power: f64,
}

/// NLoS interference at a UE from every UAV in `uavs` except `serving`.
///
/// `rayleigh[s]` is the NLoS fading gain of the link between the UE and
/// `uavs[s]`.
pub fn interference_at(
    ue_xy: [f64; 2],
    serving: usize,
    uavs: &[UavTx],
    rayleigh: &[f64],
    env: &EnvConstants,
) -> Result<f64> {
    if rayleigh.len() != uavs.len() {
        return Err(Error::Shape {
            context: "interference fading draws",
            expected: uavs.len(),
            actual: rayleigh.len(),
        });
    }
    let mut total = 0.0;
    for (s, (tx, &k)) in uavs.iter().zip(rayleigh).enumerate() {
        if s == serving {
            continue;
        }
        let geom = link_geometry(ue_xy, tx.xyz)?;
        total += received_power(tx.avg_power, geom.r, k, env.alpha_nlos)?;
    }
    Ok(total)
}

/// Shannon rate in bits/s.
pub fn achievable_rate(bandwidth: f64, power_eff: f64, interference: f64, noise: f64) -> f64 {
    bandwidth * (power_eff / (interference + noise)).ln_1p() / std::f64::consts::LN_2
}

/// Served iff the rate meets the threshold (inclusive).
pub fn service_indicator(rate: f64, r_th: f64) -> bool {
    rate >= r_th
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingKind {
    Rician,
    Rayleigh,
}

/// One unit-mean power gain of the requested family.
pub fn sample_fading<R: Rng + ?Sized>(kind: FadingKind, rng: &mut R, env: &EnvConstants) -> f64 {
    match kind {
        FadingKind::Rayleigh => Exp1.sample(rng),
        FadingKind::Rician => {
            let k = env.rician_k();
            let los = (k / (k + 1.0)).sqrt();
            let scatter = (1.0 / (2.0 * (k + 1.0))).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let x = los + scatter * re;
            let y = scatter * im;
            x * x + y * y
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingDraw {
    /// Rician (LoS) power gain.
    pub g: f64,
    /// Rayleigh (NLoS) power gain.
    pub k: f64,
}

/// Position of a fading realization in simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FadingIndex {
    pub frame: u64,
    pub episode: u64,
    pub step: u64,
}

/// Anything that yields a fading draw for a link at a point in time.
pub trait FadingSource {
    fn draw(&self, ue: usize, uav: usize, at: FadingIndex) -> FadingDraw;
}

/// The same draw for every link and time, for static-link benchmarks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedFading(pub FadingDraw);

impl FadingSource for FixedFading {
    fn draw(&self, _ue: usize, _uav: usize, _at: FadingIndex) -> FadingDraw {
        self.0
    }
}

/// Counter-based fading source: the draw for a (UE, UAV) link at a given
/// index depends only on the master seed and those coordinates.
#[derive(Debug, Clone, Copy)]
pub struct FadingField {
    seeds: SeedTree,
    env: EnvConstants,
}

impl FadingField {
    pub fn new(seeds: SeedTree, env: EnvConstants) -> Self {
        Self { seeds, env }
    }
}

impl FadingSource for FadingField {
    fn draw(&self, ue: usize, uav: usize, at: FadingIndex) -> FadingDraw {
        let mut rng = self
            .seeds
            .rng(Stream::Fading, &[at.frame, at.episode, at.step, ue as u64, uav as u64]);
        let g = sample_fading(FadingKind::Rician, &mut rng, &self.env);
        let k = sample_fading(FadingKind::Rayleigh, &mut rng, &self.env);
        FadingDraw { g, k }
    }
}

/// Full budget of one serving link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub p_los: f64,
    pub power_los: f64,
    pub power_nlos: f64,
    pub power_eff: f64,
    pub interference: f64,
    pub rate: f64,
}

/// Evaluate the serving link from the UAV at `uavs[serving]` to a UE.
///
/// `fading[s]` is the draw for the link to `uavs[s]`; the serving entry
/// supplies both gains, the others supply their Rayleigh gain to the
/// interference sum.
pub fn link_budget(
    ue_xy: [f64; 2],
    serving: usize,
    p_tx: f64,
    bandwidth: f64,
    uavs: &[UavTx],
    fading: &[FadingDraw],
    env: &EnvConstants,
) -> Result<LinkBudget> {
    let tx = uavs.get(serving).ok_or(Error::Shape {
        context: "serving uav index",
        expected: uavs.len(),
        actual: serving,
    })?;
    let geom = link_geometry(ue_xy, tx.xyz)?;
    let p_los = los_probability(geom.theta, env)?;
    let draw = fading[serving];
    let power_los = received_power(p_tx, geom.r, draw.g, env.alpha_los)?;
    let power_nlos = received_power(p_tx, geom.r, draw.k, env.alpha_nlos)?;
    let power_eff = effective_power(p_los, power_los, power_nlos);
    let rayleigh: Vec<f64> = fading.iter().map(|f| f.k).collect();
    let interference = interference_at(ue_xy, serving, uavs, &rayleigh, env)?;
    let rate = achievable_rate(bandwidth, power_eff, interference, env.noise_power);
    Ok(LinkBudget {
        p_los,
        power_los,
        power_nlos,
        power_eff,
        interference,
        rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn geometry_examples() {
        let g = link_geometry([0.0, 0.0], [0.0, 0.0, 300.0]).unwrap();
        assert_eq!((g.d, g.r), (0.0, 300.0));
        assert!(close(g.theta, FRAC_PI_2, 1e-15));

        let g = link_geometry([0.0, 0.0], [300.0, 0.0, 300.0]).unwrap();
        assert!(close(g.r, 300.0 * SQRT_2, 1e-15));
        assert!(close(g.theta, FRAC_PI_4, 1e-15));

        let g = link_geometry([0.0, 0.0], [400.0, 0.0, 300.0]).unwrap();
        assert_eq!((g.d, g.r), (400.0, 500.0));
        assert!((g.theta - 0.6435011087932844).abs() < 1e-12);
    }

    #[test]
    fn geometry_rejects_bad_input() {
        assert!(link_geometry([f64::NAN, 0.0], [0.0, 0.0, 300.0]).is_err());
        assert!(link_geometry([0.0, 0.0], [0.0, f64::INFINITY, 300.0]).is_err());
        assert!(link_geometry([0.0, 0.0], [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn los_probability_examples() {
        let env = EnvConstants::default();
        let at_c = los_probability(env.c.to_radians(), &env).unwrap();
        assert!(close(at_c, 1.0 / 12.95, 1e-12));
        // Reference values evaluated with 50-digit arithmetic.
        let top = los_probability(FRAC_PI_2, &env).unwrap();
        assert!(close(top, 0.999_706_713_922_249_9, 1e-12), "{top}");
        let bottom = los_probability(0.0, &env).unwrap();
        assert!(close(bottom, 0.016_207_653_459_802_42, 1e-12), "{bottom}");
        assert!(los_probability(-0.1, &env).is_err());
        assert!(los_probability(2.0, &env).is_err());
    }

    #[test]
    fn received_power_examples() {
        assert_eq!(received_power(0.0, 300.0, 1.0, 3.0).unwrap(), 0.0);
        assert!(close(received_power(0.1, 300.0, 1.0, 3.0).unwrap(), 0.1 / 2.7e7, 1e-12));
        assert!(close(received_power(0.1, 300.0, 1.0, 4.0).unwrap(), 0.1 / 8.1e9, 1e-12));
        assert!(received_power(0.1, 0.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn effective_power_examples() {
        assert_eq!(effective_power(1.0, 4e-9, 2e-11), 4e-9);
        assert_eq!(effective_power(0.0, 4e-9, 2e-11), 2e-11);
        assert!(close(effective_power(0.5, 4e-9, 2e-11), 2.01e-9, 1e-12));
    }

    #[test]
    fn interference_examples() {
        let env = EnvConstants::default();
        let serving = UavTx {
            xyz: [0.0, 0.0, 300.0],
            avg_power: 0.5,
        };
        assert_eq!(interference_at([0.0, 0.0], 0, &[serving], &[1.0], &env).unwrap(), 0.0);

        let silent = UavTx {
            xyz: [400.0, 0.0, 300.0],
            avg_power: 0.0,
        };
        assert_eq!(
            interference_at([0.0, 0.0], 0, &[serving, silent], &[1.0, 1.0], &env).unwrap(),
            0.0
        );

        let loud = UavTx {
            xyz: [400.0, 0.0, 300.0],
            avg_power: 0.2,
        };
        let i = interference_at([0.0, 0.0], 0, &[serving, loud], &[1.0, 1.0], &env).unwrap();
        assert!(close(i, 3.2e-12, 1e-12), "{i}");
    }

    #[test]
    fn rate_examples() {
        assert_eq!(achievable_rate(0.0, 1e-9, 0.0, 4e-15), 0.0);
        assert_eq!(achievable_rate(18e3, 0.0, 0.0, 4e-15), 0.0);
        let r = achievable_rate(18e3, 3.7027e-9, 0.0, 4e-15);
        // SNR = 925675; 18e3 * log2(1 + SNR)
        assert!(close(r, 18e3 * 925_676f64.log2(), 1e-12));
        assert!((r - 3.568e5).abs() < 100.0, "{r}");
    }

    #[test]
    fn service_examples() {
        assert!(service_indicator(5e6, 5e6));
        assert!(!service_indicator(0.0, 5e6));
        assert!(service_indicator(5.1e6, 5e6));
    }

    #[test]
    fn fading_is_reproducible() {
        let field = FadingField::new(SeedTree::new(3), EnvConstants::default());
        let at = FadingIndex {
            frame: 1,
            episode: 2,
            step: 3,
        };
        assert_eq!(field.draw(4, 1, at), field.draw(4, 1, at));
        assert_ne!(field.draw(4, 1, at), field.draw(4, 2, at));
    }

    #[test]
    fn fading_gains_have_unit_mean() {
        let env = EnvConstants::default();
        let mut rng = SeedTree::new(11).rng(Stream::Fading, &[]);
        for kind in [FadingKind::Rayleigh, FadingKind::Rician] {
            let n = 1_000_000;
            let mean = (0..n).map(|_| sample_fading(kind, &mut rng, &env)).sum::<f64>() / n as f64;
            assert!((mean - 1.0).abs() < 0.01, "{kind:?} mean {mean}");
        }
    }

    proptest! {
        #[test]
        fn los_probability_is_increasing(a in 0.0..FRAC_PI_2, b in 0.0..FRAC_PI_2) {
            prop_assume!((a - b).abs() > 1e-9);
            let env = EnvConstants::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (plo, phi) = (los_probability(lo, &env).unwrap(), los_probability(hi, &env).unwrap());
            prop_assert!(plo < phi);
            prop_assert!(plo > 0.0 && phi < 1.0);
        }

        #[test]
        fn effective_power_is_bounded(p in 0.0..=1.0f64, a in 0.0..1e-6f64, b in 0.0..1e-6f64) {
            let e = effective_power(p, a, b);
            prop_assert!(e >= a.min(b) * (1.0 - 1e-12) && e <= a.max(b) * (1.0 + 1e-12));
        }

        #[test]
        fn rate_is_monotone(
            bw in 0.0..4e6f64, dbw in 0.0..1e6f64,
            pe in 0.0..1e-8f64, dpe in 0.0..1e-8f64,
            i in 0.0..1e-12f64, di in 0.0..1e-12f64,
        ) {
            let n = 4e-15;
            let base = achievable_rate(bw, pe, i, n);
            prop_assert!(achievable_rate(bw + dbw, pe, i, n) >= base);
            prop_assert!(achievable_rate(bw, pe + dpe, i, n) >= base);
            prop_assert!(achievable_rate(bw, pe, i + di, n) <= base);
        }

        #[test]
        fn los_power_scales_with_distance(
            ue in prop::array::uniform2(-5e3..5e3f64),
            uav in prop::array::uniform2(-5e3..5e3f64),
            h in 300.0..1000.0f64,
            lambda in 0.2..5.0f64,
        ) {
            let env = EnvConstants::default();
            let g1 = link_geometry(ue, [uav[0], uav[1], h]).unwrap();
            let scaled = link_geometry(
                [ue[0] * lambda, ue[1] * lambda],
                [uav[0] * lambda, uav[1] * lambda, h * lambda],
            ).unwrap();
            let p1 = received_power(0.3, g1.r, 1.0, env.alpha_los).unwrap();
            let p2 = received_power(0.3, scaled.r, 1.0, env.alpha_los).unwrap();
            prop_assert!(close(p2, p1 * lambda.powf(-env.alpha_los), 1e-9));
            prop_assert!(close(scaled.theta, g1.theta, 1e-9));
        }

        #[test]
        fn interference_is_additive(
            others in prop::collection::vec(
                (prop::array::uniform3(100.0..3000.0f64), 0.0..1.0f64, 0.0..3.0f64), 1..5),
        ) {
            let env = EnvConstants::default();
            let serving = UavTx { xyz: [0.0, 0.0, 500.0], avg_power: 1.0 };
            let mut uavs = vec![serving];
            let mut ks = vec![1.0];
            let mut singles = 0.0;
            for (xyz, p, k) in &others {
                let tx = UavTx { xyz: *xyz, avg_power: *p };
                singles += interference_at([0.0, 0.0], 0, &[serving, tx], &[1.0, *k], &env).unwrap();
                uavs.push(tx);
                ks.push(*k);
            }
            let joint = interference_at([0.0, 0.0], 0, &uavs, &ks, &env).unwrap();
            prop_assert!((joint - singles).abs() <= 1e-12 * joint.abs().max(1e-300));
        }
    }
}
