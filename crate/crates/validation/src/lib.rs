//! Random operating points for the acceptance suite.
//!
//! Draws stay away from degenerate corners (every probability at least 0.05)
//! so that delays stay finite and simulated estimates have usable variance.

use cachehelper::cache::HitProfile;
use cachehelper::phy::SuccessProbTable;
use cachehelper::sim::SimScenario;
use cachehelper::throughput::{service_rate, AccessProbs};
use cachehelper::MuMode;
use rand::Rng;

const FLOOR: f64 = 0.05;

fn prob<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(FLOOR..=1.0)
}

/// Success probabilities where interference never helps a link.
pub fn random_table<R: Rng>(rng: &mut R) -> SuccessProbTable<f64> {
    let p_su = prob(rng);
    let p_du = prob(rng);
    let p_dcu = prob(rng);
    let p_sd = prob(rng);
    SuccessProbTable {
        p_su,
        p_du,
        p_dcu,
        p_dcu_given_s: p_dcu * prob(rng),
        p_sd,
        // Perfect self-interference cancellation at D.
        p_sd_given_d: p_sd,
        p_sd_given_dc: p_sd * prob(rng),
        p_du_given_s: p_du * prob(rng),
    }
}

/// A hit profile with `q_u >= 0.1` and disjoint D and S ranges.
pub fn random_hits<R: Rng>(rng: &mut R) -> HitProfile<f64> {
    let q_u = rng.random_range(0.1..=1.0);
    let p_hd = q_u * rng.random_range(0.0..0.7);
    let p_hs = (q_u - p_hd) * rng.random_range(0.0..0.9);
    HitProfile::new(q_u, p_hd, p_hs)
}

/// Access probabilities with `lambda = 0` and a random weight.
pub fn random_access<R: Rng>(rng: &mut R) -> AccessProbs<f64> {
    AccessProbs {
        q_s: prob(rng),
        q_c: prob(rng),
        q_d: prob(rng),
        alpha: prob(rng),
        lambda: 0.0,
        w: rng.random_range(0.0..=1.0),
    }
}

/// A simulator scenario whose arrival rate is at least `margin` (relative)
/// away from the service rate under `mode`.
pub fn random_scenario<R: Rng>(rng: &mut R, mode: MuMode, margin: f64) -> SimScenario {
    loop {
        let mut probs = random_access(rng);
        let hits = random_hits(rng);
        let table = random_table(rng);
        let mu = service_rate(&probs, &hits, &table, mode);
        if !(mu > 0.0) {
            continue;
        }
        probs.lambda = rng.random_range(0.0..(1.5 * mu).min(1.0));
        if (probs.lambda - mu).abs() >= margin * mu {
            return SimScenario::new(probs, hits, table);
        }
    }
}
