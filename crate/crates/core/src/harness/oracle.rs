//! Closed-form minimum block count for a fixed link.

use serde::{Deserialize, Serialize};

use crate::channel::{achievable_rate, link_geometry, los_probability, EnvConstants};
use crate::env::EnvConfig;
use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleBlocks {
    /// Smallest block count meeting the threshold.
    Blocks(u32),
    /// The link has zero rate; no block count helps.
    ZeroRate,
    /// The minimum exceeds the block budget.
    OverBudget(u64),
}

impl OracleBlocks {
    pub fn blocks(self) -> Option<u32> {
        match self {
            OracleBlocks::Blocks(n) => Some(n),
            _ => None,
        }
    }
}

/// Smallest `n` with `achievable_rate(n * block_size, ...) >= r_th`.
pub fn oracle_min_blocks(
    power_eff: f64,
    interference: f64,
    noise: f64,
    block_size: f64,
    r_th: f64,
    block_limit: u32,
) -> Result<OracleBlocks> {
    ensure_finite("effective power", power_eff)?;
    ensure_finite("interference", interference)?;
    if !(r_th > 0.0) {
        return Err(Error::Domain {
            what: "rate threshold",
            value: r_th,
            expected: "> 0",
        });
    }
    let rate = |n: u64| achievable_rate(n as f64 * block_size, power_eff, interference, noise);
    let per_block = rate(1);
    if !(per_block > 0.0) {
        return Ok(OracleBlocks::ZeroRate);
    }
    let mut n = (r_th / per_block).ceil().max(1.0) as u64;
    // settle rounding at the boundary against the exact rate expression
    while n > 1 && rate(n - 1) >= r_th {
        n -= 1;
    }
    while rate(n) < r_th {
        n += 1;
    }
    Ok(if n > block_limit as u64 {
        OracleBlocks::OverBudget(n)
    } else {
        OracleBlocks::Blocks(n as u32)
    })
}

/// One row of the oracle table: a UAV directly above a point `distance_m`
/// away from the UE (horizontally), unit fading, no interference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub distance_m: f64,
    pub altitude_m: f64,
    pub power_w: f64,
    pub p_los: f64,
    pub sinr: f64,
    pub per_block_rate: f64,
    pub min_blocks: OracleBlocks,
}

pub fn oracle_table(env: &EnvConfig, consts: &EnvConstants, power_w: f64, distances: &[f64]) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::new();
    for &altitude in &[env.h_min, env.mid_altitude(), env.h_max] {
        for &d in distances {
            let g = link_geometry([0.0, 0.0], [d, 0.0, altitude])?;
            let p_los = los_probability(g.theta, consts)?;
            let p_eff =
                p_los * power_w * g.r.powf(-consts.alpha_los) + (1.0 - p_los) * power_w * g.r.powf(-consts.alpha_nlos);
            let sinr = p_eff / consts.noise_power;
            rows.push(OracleRow {
                distance_m: d,
                altitude_m: altitude,
                power_w,
                p_los,
                sinr,
                per_block_rate: achievable_rate(env.block_size, p_eff, 0.0, consts.noise_power),
                min_blocks: oracle_min_blocks(
                    p_eff,
                    0.0,
                    consts.noise_power,
                    env.block_size,
                    env.r_th,
                    env.block_limit,
                )?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{effective_power, received_power};

    #[test]
    fn vertical_link_needs_fifteen_blocks() {
        let k = EnvConstants::default();
        let p_los = los_probability(std::f64::consts::FRAC_PI_2, &k).unwrap();
        let p_eff = effective_power(
            p_los,
            received_power(0.1, 300.0, 1.0, 3.0).unwrap(),
            received_power(0.1, 300.0, 1.0, 4.0).unwrap(),
        );
        assert_eq!(
            oracle_min_blocks(p_eff, 0.0, 4e-15, 1.8e4, 5e6, 200).unwrap(),
            OracleBlocks::Blocks(15)
        );
        let rate14 = achievable_rate(14.0 * 1.8e4, p_eff, 0.0, 4e-15);
        let rate15 = achievable_rate(15.0 * 1.8e4, p_eff, 0.0, 4e-15);
        assert!(rate14 < 5e6 && rate15 >= 5e6);
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(
            oracle_min_blocks(1e-3, 0.0, 4e-15, 1.8e4, 1e3, 200).unwrap(),
            OracleBlocks::Blocks(1)
        );
        assert_eq!(
            oracle_min_blocks(0.0, 0.0, 4e-15, 1.8e4, 5e6, 200).unwrap(),
            OracleBlocks::ZeroRate
        );
        assert!(matches!(
            oracle_min_blocks(1e-15, 0.0, 4e-15, 1.8e4, 5e6, 200).unwrap(),
            OracleBlocks::OverBudget(n) if n > 200
        ));
        assert!(oracle_min_blocks(1e-9, 0.0, 4e-15, 1.8e4, 0.0, 200).is_err());
    }

    #[test]
    fn exact_boundary() {
        // SINR 1 gives exactly one bit/s/Hz, so 10 blocks of 18 kHz meet 180 kbit/s exactly
        assert_eq!(
            oracle_min_blocks(4e-15, 0.0, 4e-15, 1.8e4, 1.8e5, 200).unwrap(),
            OracleBlocks::Blocks(10)
        );
    }

    #[test]
    fn table_is_monotone_in_distance() {
        let env = EnvConfig::default();
        let rows = oracle_table(&env, &EnvConstants::default(), 0.2, &[0.0, 500.0, 1000.0, 2000.0]).unwrap();
        assert_eq!(rows.len(), 12);
        for w in rows.chunks(4) {
            for pair in w.windows(2) {
                assert!(pair[1].per_block_rate <= pair[0].per_block_rate);
            }
        }
    }
}
