//! Maximizes the weighted sum throughput over the access probabilities
//! `(q_s, q_c, q_d) in [0, 1]^3`.
//!
//! A full grid pass picks the incumbent, then coordinate-wise golden-section
//! searches polish it. Everything is deterministic: the grid is scanned in
//! lexicographic order and near-ties go to the lexicographically smallest point.

use rayon::prelude::*;
use serde::Serialize;

use crate::cache::HitProfile;
use crate::phy::SuccessProbTable;
use crate::scalar::Scalar;
use crate::throughput::{service_rate, weighted_throughput, AccessProbs, MuMode, Regime};

pub const GRID_STEP: f64 = 0.05;
/// Grid values within this distance of the best count as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// The stable regime requires `lambda < mu - FEASIBILITY_MARGIN`.
pub const FEASIBILITY_MARGIN: f64 = 1e-12;
/// Golden-section searches stop once the bracket is this narrow.
pub const REFINE_TOLERANCE: f64 = 1e-4;
const MAX_REFINE_CYCLES: usize = 100;
const IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationProblem<T> {
    pub regime: Regime,
    pub w: T,
    /// Arrival rate; required by the stable regime, ignored by the saturated one.
    pub lambda: Option<T>,
    pub hits: HitProfile<T>,
    pub table: SuccessProbTable<T>,
    pub alpha: T,
    pub mu_mode: MuMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizationResult<T> {
    /// `(q_s, q_c, q_d)` at the optimum, if any point is feasible.
    pub best_q: Option<[T; 3]>,
    pub best_value: Option<T>,
    pub feasible: bool,
    pub grid_resolution: T,
    /// Golden-section sweeps over the three coordinates.
    pub refinement_iterations: usize,
}

impl<T: Scalar> OptimizationProblem<T> {
    fn probs(&self, q: [T; 3]) -> AccessProbs<T> {
        AccessProbs {
            q_s: q[0],
            q_c: q[1],
            q_d: q[2],
            alpha: self.alpha,
            lambda: self.lambda.unwrap_or_else(T::zero),
            w: self.w,
        }
    }

    pub fn mu(&self, q: [T; 3]) -> T {
        service_rate(&self.probs(q), &self.hits, &self.table, self.mu_mode)
    }

    /// Objective at `q`, or `None` when `q` violates the stability constraint.
    pub fn objective(&self, q: [T; 3]) -> Option<T> {
        let probs = self.probs(q);
        if self.regime == Regime::Stable {
            let lambda = self.lambda?;
            if !(lambda < self.mu(q) - T::lit(FEASIBILITY_MARGIN)) {
                return None;
            }
        }
        weighted_throughput(self.regime, &probs, &self.hits, &self.table, self.mu_mode)
            .ok()
            .map(|r| r.t_w)
    }
}

fn grid_values<T: Scalar>(step: f64) -> Vec<T> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| T::lit(i as f64 / n as f64)).collect()
}

/// Golden-section maximization of `f` on `[lo, hi]`; infeasible points count as `-inf`.
fn golden_section<T: Scalar>(mut lo: T, mut hi: T, f: impl Fn(T) -> Option<T>) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let score = |x: T| f(x).unwrap_or_else(T::neg_infinity);
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (score(a), score(b));
    while hi - lo > T::lit(REFINE_TOLERANCE) {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = score(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = score(b);
        }
    }
    if fa >= fb {
        a
    } else {
        b
    }
}

fn refine<T: Scalar>(problem: &OptimizationProblem<T>, mut q: [T; 3], mut value: T, radius: T) -> ([T; 3], T, usize) {
    let mut cycles = 0;
    while cycles < MAX_REFINE_CYCLES {
        cycles += 1;
        let mut improved = false;
        for k in 0..3 {
            let lo = (q[k] - radius).max(T::zero());
            let hi = (q[k] + radius).min(T::one());
            let base = q;
            let at = |x: T| {
                let mut p = base;
                p[k] = x;
                problem.objective(p)
            };
            let interior = golden_section(lo, hi, at);
            for x in [interior, lo, hi] {
                if let Some(v) = at(x) {
                    if v > value + T::lit(IMPROVEMENT) {
                        value = v;
                        q[k] = x;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    (q, value, cycles)
}

pub fn optimize<T: Scalar>(problem: &OptimizationProblem<T>) -> OptimizationResult<T> {
    let axis = grid_values::<T>(GRID_STEP);
    let n = axis.len();

    let values: Vec<Option<T>> = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let q = [axis[idx / (n * n)], axis[(idx / n) % n], axis[idx % n]];
            problem.objective(q)
        })
        .collect();

    let best = values.iter().flatten().copied().fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))));
    let Some(best) = best else {
        return OptimizationResult {
            best_q: None,
            best_value: None,
            feasible: false,
            grid_resolution: T::lit(GRID_STEP),
            refinement_iterations: 0,
        };
    };
    let first = values
        .iter()
        .position(|v| matches!(v, Some(v) if *v >= best - T::lit(TIE_TOLERANCE)))
        .expect("the maximum is attained");
    let q = [axis[first / (n * n)], axis[(first / n) % n], axis[first % n]];
    let start = values[first].expect("feasible");

    let (q, value, cycles) = refine(problem, q, start, T::lit(GRID_STEP));
    OptimizationResult {
        best_q: Some(q),
        best_value: Some(value),
        feasible: true,
        grid_resolution: T::lit(GRID_STEP),
        refinement_iterations: cycles,
    }
}

/// One row of [`feasible_region_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityPoint<T> {
    pub q_s: T,
    pub mu: T,
    pub stable: bool,
}

/// Service rate and stability along a `q_s` grid with `q_d` fixed (`mu` does not depend on `q_c`).
pub fn feasible_region_probe<T: Scalar>(problem: &OptimizationProblem<T>, q_s_grid: &[T], q_d: T) -> Vec<FeasibilityPoint<T>> {
    let lambda = problem.lambda.unwrap_or_else(T::zero);
    q_s_grid
        .iter()
        .map(|&q_s| {
            let mu = problem.mu([q_s, T::zero(), q_d]);
            FeasibilityPoint { q_s, mu, stable: lambda < mu }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{hit_profile, CacheSizes, CatalogConfig};
    use crate::phy::{build_success_table, PhyConfig};
    use proptest::prelude::*;

    fn problem(delta: f64, regime: Regime, w: f64, lambda: Option<f64>) -> OptimizationProblem<f64> {
        OptimizationProblem {
            regime,
            w,
            lambda,
            hits: hit_profile(&CatalogConfig::new(10_000, delta), &CacheSizes::new(200, 1000, 2000)).unwrap(),
            table: build_success_table(&PhyConfig::reference()).unwrap(),
            alpha: 0.7,
            mu_mode: MuMode::Verbatim,
        }
    }

    #[test]
    fn saturated_reference_optima() {
        let r = optimize(&problem(0.5, Regime::Unstable, 0.25, None));
        assert!((r.best_value.unwrap() - 0.430).abs() <= 2e-3);
        assert_eq!(r.best_q.unwrap(), [0.0, 1.0, 0.0]);

        let r = optimize(&problem(1.2, Regime::Unstable, 0.75, None));
        assert!((r.best_value.unwrap() - 0.537).abs() <= 2e-3);
        assert_eq!(r.best_q.unwrap(), [1.0, 0.0, 1.0]);
    }

    #[test]
    fn pure_service_weight_maximizes_mu() {
        for delta in [0.5, 1.2] {
            let p = problem(delta, Regime::Unstable, 1.0, None);
            let r = optimize(&p);
            let q = r.best_q.unwrap();
            assert_eq!(q[0], 1.0);
            let best_mu = [0.0, 0.5, 1.0].iter().map(|&q_d| p.mu([1.0, 0.0, q_d])).fold(0.0, f64::max);
            assert!((r.best_value.unwrap() - best_mu).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_stable_problem() {
        let r = optimize(&problem(0.5, Regime::Stable, 0.5, Some(1.0)));
        assert!(!r.feasible);
        assert!(r.best_q.is_none() && r.best_value.is_none());
    }

    #[test]
    fn stable_optimum_respects_constraint() {
        let p = problem(0.5, Regime::Stable, 0.5, Some(0.4));
        let r = optimize(&p);
        let q = r.best_q.unwrap();
        assert!(0.4 < p.mu(q));
        assert!(r.refinement_iterations >= 1);
    }

    #[test]
    fn deterministic() {
        let p = problem(1.2, Regime::Stable, 0.25, Some(0.3));
        assert_eq!(optimize(&p), optimize(&p));
    }

    #[test]
    fn probe_cases() {
        let p = problem(0.5, Regime::Stable, 0.5, Some(0.0));
        let grid = [0.0, 0.25, 0.5, 1.0];
        let rows = feasible_region_probe(&p, &grid, 1.0);
        assert!(rows.iter().all(|r| r.stable == (r.mu > 0.0)));

        let p = problem(0.5, Regime::Stable, 0.5, Some(1.0));
        assert!(feasible_region_probe(&p, &grid, 1.0).iter().all(|r| !r.stable));

        let p = problem(0.5, Regime::Stable, 0.5, Some(0.4));
        let rows = feasible_region_probe(&p, &[1.0], 1.0);
        assert!(rows[0].stable && (rows[0].mu - 0.5116).abs() < 1e-3);
    }

    #[test]
    fn golden_section_finds_interior_peak() {
        let x = golden_section(0.0, 1.0, |x: f64| Some(-(x - 0.3712).powi(2)));
        assert!((x - 0.3712).abs() < 1e-4);
    }

    fn arb_problem() -> impl Strategy<Value = OptimizationProblem<f64>> {
        (
            0.0f64..=1.0,
            prop::array::uniform3(0.0f64..=1.0),
            prop::array::uniform8(0.02f64..=1.0),
            0.0f64..=1.0,
            prop::bool::ANY,
            0.0f64..0.6,
        )
            .prop_map(|(w, h, t, alpha, stable, lambda)| {
                let q_u = h[0];
                let p_hd = h[1] * q_u;
                let p_hs = h[2] * (q_u - p_hd);
                OptimizationProblem {
                    regime: if stable { Regime::Stable } else { Regime::Unstable },
                    w,
                    lambda: Some(lambda),
                    hits: HitProfile::new(q_u, p_hd, p_hs),
                    table: SuccessProbTable {
                        p_su: t[0],
                        p_du: t[1],
                        p_dcu: t[2],
                        p_dcu_given_s: t[2] * t[3],
                        p_sd: t[4],
                        p_sd_given_d: t[4],
                        p_sd_given_dc: t[4] * t[5],
                        p_du_given_s: t[1] * t[6],
                    },
                    alpha,
                    mu_mode: MuMode::Verbatim,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn returned_point_is_feasible_and_in_box(p in arb_problem()) {
            let r = optimize(&p);
            if let Some(q) = r.best_q {
                prop_assert!(q.iter().all(|x| (0.0..=1.0).contains(x)));
                prop_assert_eq!(p.objective(q), r.best_value);
                if p.regime == Regime::Stable {
                    prop_assert!(p.lambda.unwrap() < p.mu(q));
                }
            }
        }
    }
}
