use cachehelper::cache::HitProfile;
use cachehelper::optimizer::{optimize, OptimizationProblem};
use cachehelper::phy::SuccessProbTable;
use cachehelper::{MuMode, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn random_problem(rng: &mut ChaCha8Rng) -> OptimizationProblem<f64> {
    let q_u: f64 = rng.random_range(0.05..1.0);
    let p_hd = q_u * rng.random_range(0.0..0.6);
    let p_hs = (q_u - p_hd) * rng.random_range(0.0..0.9);
    let mut p = || rng.random_range(0.02..1.0);
    let table = SuccessProbTable {
        p_su: p(),
        p_du: p(),
        p_dcu: p(),
        p_dcu_given_s: p(),
        p_sd: p(),
        p_sd_given_d: p(),
        p_sd_given_dc: p(),
        p_du_given_s: p(),
    };
    let regime = if rng.random_bool(0.5) { Regime::Stable } else { Regime::Unstable };
    let mu_mode = if rng.random_bool(0.5) { MuMode::Verbatim } else { MuMode::Corrected };
    OptimizationProblem {
        regime,
        w: rng.random_range(0.0..=1.0),
        lambda: Some(rng.random_range(0.0..0.4)),
        hits: HitProfile::new(q_u, p_hd, p_hs),
        table,
        alpha: rng.random_range(0.0..=1.0),
        mu_mode,
    }
}

fn brute_force(problem: &OptimizationProblem<f64>, steps: usize) -> Option<f64> {
    let h = 1.0 / steps as f64;
    (0..=steps)
        .into_par_iter()
        .filter_map(|i| {
            let mut best: Option<f64> = None;
            for j in 0..=steps {
                for k in 0..=steps {
                    if let Some(v) = problem.objective([i as f64 * h, j as f64 * h, k as f64 * h]) {
                        best = Some(best.map_or(v, |b| b.max(v)));
                    }
                }
            }
            best
        })
        .reduce_with(f64::max)
}

#[test]
fn no_grid_point_beats_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for n in 0..20 {
        let problem = random_problem(&mut rng);
        let result = optimize(&problem);
        let brute = brute_force(&problem, 100);
        match (result.best_value, brute) {
            (Some(best), Some(b)) => {
                assert!(b <= best + 5e-3, "problem {n}: brute force {b} exceeds optimum {best}");
                let q = result.best_q.unwrap();
                assert_eq!(problem.objective(q), Some(best), "problem {n}: reported value not reproducible");
            }
            (None, None) => {}
            (r, b) => panic!("problem {n}: feasibility disagrees, optimizer {r:?}, brute force {b:?}"),
        }
    }
}
