//! Service rate of the source helper's queue, the stability test, and the
//! per-flow and weighted throughputs for stable and saturated queues.

use serde::{Deserialize, Serialize};

use crate::cache::HitProfile;
use crate::error::{Error, Result};
use crate::phy::SuccessProbTable;
use crate::scalar::{is_probability, Scalar};

/// Random access and traffic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessProbs<T> {
    /// S transmits to D when its queue is non-empty.
    pub q_s: T,
    /// S serves U (only when not transmitting to D).
    pub q_c: T,
    /// D serves U.
    pub q_d: T,
    /// Data center availability.
    pub alpha: T,
    /// Bernoulli arrival rate at S, packets per slot.
    pub lambda: T,
    /// Weight of `T_S` in the objective.
    pub w: T,
}

impl<T: Scalar> AccessProbs<T> {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("q_s", self.q_s),
            ("q_c", self.q_c),
            ("q_d", self.q_d),
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("w", self.w),
        ];
        for (name, x) in fields {
            if !is_probability(x) {
                return Err(Error::domain(format!("{name} = {x} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn with_q(mut self, q_s: T, q_c: T, q_d: T) -> Self {
        self.q_s = q_s;
        self.q_c = q_c;
        self.q_d = q_d;
        self
    }

    pub fn cast<U: Scalar>(&self) -> AccessProbs<U> {
        let c = |x: T| U::lit(x.as_f64());
        AccessProbs {
            q_s: c(self.q_s),
            q_c: c(self.q_c),
            q_d: c(self.q_d),
            alpha: c(self.alpha),
            lambda: c(self.lambda),
            w: c(self.w),
        }
    }
}

/// Which reading of the service-rate formula to evaluate.
///
/// The printed formula carries a second `q_s` factor in the term where the
/// data center interferes with `S -> D`; `Verbatim` keeps it, `Corrected`
/// drops it (which is what the protocol itself realizes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuMode {
    #[default]
    Verbatim,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputReport<T> {
    pub mu: T,
    pub stable: bool,
    /// `P(Q != 0)` used by the formulas.
    pub busy_prob: T,
    pub t_s: T,
    pub t_u: T,
    pub t_w: T,
}

/// Average service rate `mu` of the queue at S.
pub fn service_rate<T: Scalar>(
    probs: &AccessProbs<T>,
    hits: &HitProfile<T>,
    table: &SuccessProbTable<T>,
    mode: MuMode,
) -> T {
    let one = T::one();
    let q_s = probs.q_s;
    let d_serves = probs.q_d * hits.p_hd;
    let extra_q_s = match mode {
        MuMode::Verbatim => q_s,
        MuMode::Corrected => one,
    };
    let no_request = q_s * (one - hits.q_u) * table.p_sd;
    let d_transmits = q_s * hits.q_u * d_serves * table.p_sd_given_d;
    let dc_transmits = q_s * hits.q_u * (one - d_serves) * probs.alpha * extra_q_s * table.p_sd_given_dc;
    let nobody = q_s * hits.q_u * (one - d_serves) * (one - probs.alpha) * table.p_sd;
    no_request + d_transmits + dc_transmits + nobody
}

/// Loynes criterion, strict: the queue at S is stable iff `lambda < mu`.
pub fn is_stable<T: Scalar>(lambda: T, mu: T) -> bool {
    lambda < mu
}

/// `P(Q != 0)`: `lambda / mu` for a stable queue, 1 for a saturated one.
pub fn busy_probability<T: Scalar>(lambda: T, mu: T) -> T {
    if lambda <= T::zero() {
        T::zero()
    } else if is_stable(lambda, mu) {
        lambda / mu
    } else {
        T::one()
    }
}

/// Throughput from S to D: `lambda` when stable, `mu` otherwise.
pub fn throughput_s<T: Scalar>(lambda: T, mu: T) -> T {
    if is_stable(lambda, mu) {
        lambda
    } else {
        mu
    }
}

/// U's success probability in a slot where S is not transmitting to D.
fn user_rate_s_silent<T: Scalar>(probs: &AccessProbs<T>, hits: &HitProfile<T>, table: &SuccessProbTable<T>) -> T {
    let one = T::one();
    let d_serves = probs.q_d * hits.p_hd;
    let s_serves = probs.q_c * hits.p_hs;
    d_serves * table.p_du
        + (one - d_serves) * s_serves * table.p_su
        + (one - d_serves) * (one - s_serves) * probs.alpha * table.p_dcu
}

/// U's success probability in a slot where S transmits to D.
fn user_rate_s_busy<T: Scalar>(probs: &AccessProbs<T>, hits: &HitProfile<T>, table: &SuccessProbTable<T>) -> T {
    let d_serves = probs.q_d * hits.p_hd;
    d_serves * table.p_du_given_s + (T::one() - d_serves) * probs.alpha * table.p_dcu_given_s
}

/// Throughput realized by U for a given `P(Q != 0)`.
pub fn throughput_u_with_busy<T: Scalar>(
    probs: &AccessProbs<T>,
    hits: &HitProfile<T>,
    table: &SuccessProbTable<T>,
    busy: T,
) -> T {
    let one = T::one();
    let silent = user_rate_s_silent(probs, hits, table);
    let transmitting = user_rate_s_busy(probs, hits, table);
    (one - busy) * hits.q_u * silent
        + busy * hits.q_u * probs.q_s * transmitting
        + busy * hits.q_u * (one - probs.q_s) * silent
}

/// U's throughput when the queue at S is stable (`P(Q != 0) = lambda / mu`).
pub fn throughput_u_stable<T: Scalar>(
    probs: &AccessProbs<T>,
    hits: &HitProfile<T>,
    table: &SuccessProbTable<T>,
    mode: MuMode,
) -> Result<T> {
    let mu = service_rate(probs, hits, table, mode);
    if !is_stable(probs.lambda, mu) {
        return Err(Error::Regime(format!(
            "lambda = {} is not below mu = {}; the queue at S is unstable",
            probs.lambda, mu
        )));
    }
    Ok(throughput_u_with_busy(probs, hits, table, busy_probability(probs.lambda, mu)))
}

/// U's throughput with a saturated queue at S; independent of `lambda`.
pub fn throughput_u_unstable<T: Scalar>(probs: &AccessProbs<T>, hits: &HitProfile<T>, table: &SuccessProbTable<T>) -> T {
    let one = T::one();
    hits.q_u * probs.q_s * user_rate_s_busy(probs, hits, table)
        + hits.q_u * (one - probs.q_s) * user_rate_s_silent(probs, hits, table)
}

/// `w T_S + (1 - w) T_U` under the requested regime.
///
/// The saturated regime replaces `T_S` with `mu` and `T_U` with its saturated
/// form whatever `lambda` is; the stable regime requires `lambda < mu`.
pub fn weighted_throughput<T: Scalar>(
    regime: Regime,
    probs: &AccessProbs<T>,
    hits: &HitProfile<T>,
    table: &SuccessProbTable<T>,
    mode: MuMode,
) -> Result<ThroughputReport<T>> {
    let mu = service_rate(probs, hits, table, mode);
    let stable = is_stable(probs.lambda, mu);
    let (busy_prob, t_s, t_u) = match regime {
        Regime::Stable => {
            if !stable {
                return Err(Error::Regime(format!(
                    "stable regime requested but lambda = {} >= mu = {}",
                    probs.lambda, mu
                )));
            }
            let busy = busy_probability(probs.lambda, mu);
            (busy, probs.lambda, throughput_u_with_busy(probs, hits, table, busy))
        }
        Regime::Unstable => (T::one(), mu, throughput_u_unstable(probs, hits, table)),
    };
    Ok(ThroughputReport {
        mu,
        stable,
        busy_prob,
        t_s,
        t_u,
        t_w: probs.w * t_s + (T::one() - probs.w) * t_u,
    })
}

/// Evaluates the regime the arrival rate actually puts the queue in.
pub fn analyze<T: Scalar>(
    probs: &AccessProbs<T>,
    hits: &HitProfile<T>,
    table: &SuccessProbTable<T>,
    mode: MuMode,
) -> ThroughputReport<T> {
    let mu = service_rate(probs, hits, table, mode);
    let regime = if is_stable(probs.lambda, mu) { Regime::Stable } else { Regime::Unstable };
    weighted_throughput(regime, probs, hits, table, mode).expect("regime chosen from lambda and mu")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{hit_profile, CacheSizes, CatalogConfig};
    use crate::phy::{build_success_table, PhyConfig};
    use proptest::prelude::*;

    fn reference(delta: f64, sizes: CacheSizes) -> (HitProfile<f64>, SuccessProbTable<f64>) {
        let hits = hit_profile(&CatalogConfig::new(10_000, delta), &sizes).unwrap();
        let table = build_success_table(&PhyConfig::reference()).unwrap();
        (hits, table)
    }

    fn base(delta: f64) -> (HitProfile<f64>, SuccessProbTable<f64>) {
        reference(delta, CacheSizes::new(200, 1000, 2000))
    }

    fn probs(q_s: f64, q_c: f64, q_d: f64, lambda: f64, w: f64) -> AccessProbs<f64> {
        AccessProbs { q_s, q_c, q_d, alpha: 0.7, lambda, w }
    }

    // Straight-line evaluation of the printed formulas with every product written out.
    fn mu_oracle(p: &AccessProbs<f64>, h: &HitProfile<f64>, t: &SuccessProbTable<f64>) -> f64 {
        p.q_s * (1.0 - h.q_u) * t.p_sd
            + p.q_s * h.q_u * p.q_d * h.p_hd * t.p_sd_given_d
            + p.q_s * h.q_u * (1.0 - p.q_d * h.p_hd) * p.alpha * p.q_s * t.p_sd_given_dc
            + p.q_s * h.q_u * (1.0 - p.q_d * h.p_hd) * (1.0 - p.alpha) * t.p_sd
    }

    fn tu_empty_oracle(p: &AccessProbs<f64>, h: &HitProfile<f64>, t: &SuccessProbTable<f64>) -> f64 {
        h.q_u
            * (p.q_d * h.p_hd * t.p_du
                + (1.0 - p.q_d * h.p_hd) * p.q_c * h.p_hs * t.p_su
                + (1.0 - p.q_d * h.p_hd) * (1.0 - p.q_c * h.p_hs) * p.alpha * t.p_dcu)
    }

    #[test]
    fn frozen_service_rate() {
        let (h, t) = base(0.5);
        let p = probs(1.0, 0.3, 1.0, 0.0, 0.5);
        let oracle = mu_oracle(&p, &h, &t);
        // Frozen from the oracle above; 0.5117 when evaluated with 3-decimal table entries.
        assert!((oracle - 0.511_573_5).abs() < 1e-6);
        assert!((oracle - 0.5117).abs() < 1e-3);
        for mode in [MuMode::Verbatim, MuMode::Corrected] {
            assert!((service_rate(&p, &h, &t, mode) - oracle).abs() < 1e-15);
        }
        let (h12, t12) = base(1.2);
        let mu12 = service_rate(&probs(1.0, 0.0, 1.0, 0.0, 0.0), &h12, &t12, MuMode::Verbatim);
        assert!((mu12 - 0.711).abs() < 1e-3);
    }

    #[test]
    fn service_rate_collapses() {
        let (h, t) = base(0.5);
        assert_eq!(service_rate(&probs(0.0, 1.0, 1.0, 0.0, 0.0), &h, &t, MuMode::Verbatim), 0.0);
        let local = HitProfile::new(0.0, 0.0, 0.0);
        let p = probs(0.6, 1.0, 1.0, 0.0, 0.0);
        assert!((service_rate(&p, &local, &t, MuMode::Verbatim) - 0.6 * t.p_sd).abs() < 1e-15);
    }

    #[test]
    fn modes_differ_only_below_full_access() {
        let (h, t) = base(0.5);
        let p = probs(0.5, 1.0, 0.5, 0.0, 0.0);
        let v = service_rate(&p, &h, &t, MuMode::Verbatim);
        let c = service_rate(&p, &h, &t, MuMode::Corrected);
        assert!(v < c);
        let oracle = mu_oracle(&p, &h, &t);
        assert!((v - oracle).abs() < 1e-15);
    }

    #[test]
    fn stability_is_strict() {
        assert!(is_stable(0.4, 0.5117));
        assert!(!is_stable(0.5, 0.5));
        assert!(!is_stable(0.0, 0.0));
    }

    #[test]
    fn busy_probability_cases() {
        assert!((busy_probability(0.2f64, 0.5) - 0.4).abs() < 1e-15);
        assert_eq!(busy_probability(0.6, 0.5), 1.0);
        assert_eq!(busy_probability(0.0, 0.5), 0.0);
        assert_eq!(busy_probability(0.0, 0.0), 0.0);
        assert_eq!(busy_probability(0.1, 0.0), 1.0);
    }

    #[test]
    fn throughput_s_cases() {
        assert_eq!(throughput_s(0.3, 0.5), 0.3);
        assert_eq!(throughput_s(0.7, 0.5), 0.5);
        assert_eq!(throughput_s(0.5117, 0.5117), 0.5117);
    }

    #[test]
    fn stable_user_throughput_at_zero_load() {
        let (h, t) = base(0.5);
        let p = probs(0.0, 1.0, 0.0, 0.0, 0.25);
        // q_s = 0 gives mu = 0 so lambda = 0 is not "stable"; any q_s > 0 is.
        assert!(throughput_u_stable(&p, &h, &t, MuMode::Verbatim).is_err());
        let p = probs(0.3, 1.0, 0.0, 0.0, 0.25);
        let tu = throughput_u_stable(&p, &h, &t, MuMode::Verbatim).unwrap();
        let oracle = tu_empty_oracle(&p, &h, &t);
        assert!((tu - oracle).abs() < 1e-15);
        assert!((oracle - 0.572_736_4).abs() < 1e-6);
        assert!((oracle - 0.5731).abs() < 1e-3);

        let none = HitProfile::new(0.0, 0.0, 0.0);
        assert_eq!(throughput_u_stable(&p, &none, &t, MuMode::Verbatim).unwrap(), 0.0);
    }

    #[test]
    fn stable_user_throughput_rejects_saturation() {
        let (h, t) = base(0.5);
        let p = probs(0.2, 1.0, 1.0, 0.9, 0.25);
        assert!(matches!(throughput_u_stable(&p, &h, &t, MuMode::Verbatim), Err(Error::Regime(_))));
        assert!(matches!(
            weighted_throughput(Regime::Stable, &p, &h, &t, MuMode::Verbatim),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn saturated_examples() {
        let (h, t) = base(0.5);
        let p = probs(0.0, 1.0, 0.0, 0.9, 0.25);
        let tu = throughput_u_unstable(&p, &h, &t);
        assert!((tu - 0.5727).abs() < 1e-4);
        let r = weighted_throughput(Regime::Unstable, &p, &h, &t, MuMode::Verbatim).unwrap();
        assert!((r.t_w - 0.430).abs() < 1e-3);

        let (h, t) = base(1.2);
        let p = probs(1.0, 0.0, 1.0, 0.9, 0.25);
        let r = weighted_throughput(Regime::Unstable, &p, &h, &t, MuMode::Verbatim).unwrap();
        assert!((r.mu - 0.711).abs() < 1e-3);
        assert!((r.t_w - 0.189).abs() < 1e-3);
    }

    #[test]
    fn saturated_single_term() {
        let t = build_success_table(&PhyConfig::<f64>::reference()).unwrap();
        let h = HitProfile::new(0.8, 1.0, 0.0);
        let p = probs(1.0, 0.4, 1.0, 0.9, 0.0);
        assert!((throughput_u_unstable(&p, &h, &t) - 0.8 * t.p_du_given_s).abs() < 1e-15);
    }

    #[test]
    fn weighted_extremes() {
        let (h, t) = base(0.5);
        let p = probs(0.7, 0.2, 0.4, 0.95, 1.0);
        let r = weighted_throughput(Regime::Unstable, &p, &h, &t, MuMode::Verbatim).unwrap();
        assert_eq!(r.t_w, r.mu);

        let p = probs(0.7, 0.2, 0.4, 0.0, 0.0);
        let r = weighted_throughput(Regime::Stable, &p, &h, &t, MuMode::Verbatim).unwrap();
        assert!((r.t_w - tu_empty_oracle(&p, &h, &t)).abs() < 1e-15);
    }

    #[test]
    fn no_s_cache_reference() {
        let (h, t) = reference(0.5, CacheSizes::new(200, 1000, 0));
        let p = probs(0.0, 0.0, 1.0, 0.9, 0.25);
        let r = weighted_throughput(Regime::Unstable, &p, &h, &t, MuMode::Verbatim).unwrap();
        assert!((r.t_w - 0.387).abs() < 1e-3);
    }

    #[test]
    fn generic_f32_agrees() {
        let (h, t) = base(0.5);
        let p = probs(0.8, 0.6, 0.7, 0.3, 0.5);
        let a = analyze(&p, &h, &t, MuMode::Verbatim);
        let b = analyze(&p.cast::<f32>(), &h.cast(), &t.cast(), MuMode::Verbatim);
        assert!((a.t_w - b.t_w as f64).abs() < 1e-6);
        assert_eq!(a.stable, b.stable);
    }

    fn arb_case() -> impl Strategy<Value = (AccessProbs<f64>, HitProfile<f64>, SuccessProbTable<f64>)> {
        (
            prop::array::uniform6(0.0f64..=1.0),
            prop::array::uniform3(0.0f64..=1.0),
            prop::array::uniform8(0.0f64..=1.0),
        )
            .prop_map(|(a, hs, ts)| {
                let q_u = hs[0];
                let p_hd = hs[1] * q_u;
                let p_hs = hs[2] * (q_u - p_hd);
                let table = SuccessProbTable {
                    p_su: ts[0],
                    p_du: ts[1],
                    p_dcu: ts[2],
                    p_dcu_given_s: ts[3] * ts[2],
                    p_sd: ts[4],
                    p_sd_given_d: ts[4],
                    p_sd_given_dc: ts[6] * ts[4],
                    p_du_given_s: ts[7] * ts[1],
                };
                let probs = AccessProbs { q_s: a[0], q_c: a[1], q_d: a[2], alpha: a[3], lambda: a[4], w: a[5] };
                (probs, HitProfile::new(q_u, p_hd, p_hs), table)
            })
    }

    proptest! {
        #[test]
        fn bounds_hold((p, h, t) in arb_case()) {
            for mode in [MuMode::Verbatim, MuMode::Corrected] {
                let r = analyze(&p, &h, &t, mode);
                prop_assert!((0.0..=1.0).contains(&r.mu));
                prop_assert!((0.0..=1.0).contains(&r.busy_prob));
                prop_assert!(r.t_s >= 0.0 && r.t_s <= 1.0);
                prop_assert!(r.t_u >= 0.0 && r.t_u <= h.q_u + 1e-12);
                prop_assert_eq!(r.stable, p.lambda < r.mu);
                prop_assert!((r.t_w - (p.w * r.t_s + (1.0 - p.w) * r.t_u)).abs() < 1e-15);
            }
            prop_assert!(service_rate(&p, &h, &t, MuMode::Verbatim) <= service_rate(&p, &h, &t, MuMode::Corrected) + 1e-15);
        }

        #[test]
        fn saturated_stable_formula_equals_unstable((p, h, t) in arb_case()) {
            let a = throughput_u_with_busy(&p, &h, &t, 1.0);
            let b = throughput_u_unstable(&p, &h, &t);
            prop_assert!((a - b).abs() < 1e-15);
        }

        #[test]
        fn continuous_at_boundary((p, h, t) in arb_case()) {
            let mu = service_rate(&p, &h, &t, MuMode::Verbatim);
            prop_assume!(mu > 1e-6);
            let lambda = mu * (1.0 - 1e-9);
            prop_assert!((throughput_s(lambda, mu) - mu).abs() < 1e-8);
            prop_assert!((busy_probability(lambda, mu) - 1.0).abs() < 1e-8);
            let near = throughput_u_with_busy(&p, &h, &t, busy_probability(lambda, mu));
            prop_assert!((near - throughput_u_unstable(&p, &h, &t)).abs() < 1e-8);
        }

        #[test]
        fn saturated_user_throughput_monotone_in_alpha((p, h, t) in arb_case(), bump in 0.0f64..=1.0) {
            let mut more = p;
            more.alpha = p.alpha + (1.0 - p.alpha) * bump;
            prop_assert!(throughput_u_unstable(&more, &h, &t) >= throughput_u_unstable(&p, &h, &t) - 1e-15);
        }
    }
}
