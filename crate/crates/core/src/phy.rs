//! Physical layer: received power factors and Rayleigh-fading link success
//! probabilities, with and without interfering transmitters.
//!
//! A packet from `i` is received at `j` iff `SINR(i, j) >= gamma`. With
//! exponentially distributed fading the success probability has the closed form
//!
//! ```text
//! P(i -> j | T) = exp(-gamma_c * n / (v(i,j) h(i,j)))
//!               * prod_{k in T \ {i,j}} (1 + gamma_i * v(k,j) h(k,j) / (v(i,j) h(i,j)))^-1
//! ```
//!
//! where `h(i, j) = P_tx(i) / r(i, j)^p`. The receiver's own transmission is
//! never counted as interference (perfect self-interference cancellation).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The four nodes of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    /// Source helper; owns the packet queue.
    S,
    /// Destination helper.
    D,
    /// The user.
    U,
    /// Data center, reached through the base station.
    #[serde(rename = "DC")]
    Dc,
}

impl NodeId {
    pub const ALL: [NodeId; 4] = [NodeId::S, NodeId::D, NodeId::U, NodeId::Dc];
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeId::S => "S",
            NodeId::D => "D",
            NodeId::U => "U",
            NodeId::Dc => "DC",
        })
    }
}

/// The ordered links the protocol uses.
pub const PROTOCOL_LINKS: [(NodeId, NodeId); 5] = [
    (NodeId::S, NodeId::D),
    (NodeId::S, NodeId::U),
    (NodeId::D, NodeId::U),
    (NodeId::Dc, NodeId::U),
    (NodeId::Dc, NodeId::D),
];

/// Geometry and fading of one directed link `tx -> rx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry<T> {
    /// Transmit power of the link's transmitter, milliwatts.
    pub tx_power_mw: T,
    pub distance_m: T,
    /// Path-loss exponent, within `[2, 6]`.
    pub pathloss_exponent: T,
    /// Rayleigh fading parameter `v(i, j)`.
    pub fading: T,
}

impl<T: Scalar> LinkGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: T| x.is_finite() && x > T::zero();
        if !positive(self.tx_power_mw) {
            return Err(Error::domain(format!("tx power must be > 0, got {}", self.tx_power_mw)));
        }
        if !positive(self.distance_m) {
            return Err(Error::domain(format!("distance must be > 0, got {}", self.distance_m)));
        }
        if !(self.pathloss_exponent >= T::lit(2.0) && self.pathloss_exponent <= T::lit(6.0)) {
            return Err(Error::domain(format!(
                "path-loss exponent must lie in [2, 6], got {}",
                self.pathloss_exponent
            )));
        }
        if !positive(self.fading) {
            return Err(Error::domain(format!("fading parameter must be > 0, got {}", self.fading)));
        }
        Ok(())
    }

    /// Received power factor `h` of this link, watts.
    pub fn power_factor(&self) -> Result<T> {
        received_power_factor(self.tx_power_mw, self.distance_m, self.pathloss_exponent)
    }
}

/// Receiver-side constants plus the geometry of every configured link.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyConfig<T> {
    /// Noise power at every receiver, watts.
    pub noise_power_w: T,
    /// Linear SINR threshold in the noise (exponential) term.
    pub gamma_capture: T,
    /// Linear SINR threshold in the interference attenuation product.
    pub gamma_interference: T,
    pub links: BTreeMap<(NodeId, NodeId), LinkGeometry<T>>,
}

impl<T: Scalar> PhyConfig<T> {
    /// Reference constants: 1 / 0.5 / 10 mW transmitters for S / D / DC,
    /// noise 1e-11 W, path-loss exponent 4, fading 0.25 on every link,
    /// capture threshold 1 (0 dB) and interference threshold 4.
    pub fn reference() -> Self {
        let power = |n: NodeId| match n {
            NodeId::S => 1.0,
            NodeId::D => 0.5,
            NodeId::Dc => 10.0,
            NodeId::U => unreachable!("U never transmits"),
        };
        let distance = |tx: NodeId, rx: NodeId| match (tx, rx) {
            (NodeId::S, NodeId::D) => 50.0,
            (NodeId::D, NodeId::U) => 50.0,
            (NodeId::S, NodeId::U) => 40.0,
            (NodeId::Dc, NodeId::U) => 80.0,
            (NodeId::Dc, NodeId::D) => 100.0,
            _ => unreachable!(),
        };
        let links = PROTOCOL_LINKS
            .iter()
            .map(|&(tx, rx)| {
                let geometry = LinkGeometry {
                    tx_power_mw: T::lit(power(tx)),
                    distance_m: T::lit(distance(tx, rx)),
                    pathloss_exponent: T::lit(4.0),
                    fading: T::lit(0.25),
                };
                ((tx, rx), geometry)
            })
            .collect();
        PhyConfig {
            noise_power_w: T::lit(1e-11),
            gamma_capture: T::one(),
            gamma_interference: T::lit(4.0),
            links,
        }
    }

    pub fn link(&self, tx: NodeId, rx: NodeId) -> Result<&LinkGeometry<T>> {
        self.links.get(&(tx, rx)).ok_or(Error::MissingLink { tx, rx })
    }

    /// Checks the receiver constants and that every protocol link is present and valid.
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_power_w.is_finite() && self.noise_power_w >= T::zero()) {
            return Err(Error::domain("noise power must be >= 0"));
        }
        if !(self.gamma_capture > T::zero() && self.gamma_interference > T::zero()) {
            return Err(Error::domain("SINR thresholds must be > 0"));
        }
        for &(tx, rx) in &PROTOCOL_LINKS {
            self.link(tx, rx)?.validate().map_err(|e| match e {
                Error::Domain(msg) => Error::domain(format!("link {tx}->{rx}: {msg}")),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Converts every field to another scalar type.
    pub fn cast<U: Scalar>(&self) -> PhyConfig<U> {
        let c = |x: T| U::lit(x.as_f64());
        PhyConfig {
            noise_power_w: c(self.noise_power_w),
            gamma_capture: c(self.gamma_capture),
            gamma_interference: c(self.gamma_interference),
            links: self
                .links
                .iter()
                .map(|(&k, g)| {
                    let g = LinkGeometry {
                        tx_power_mw: c(g.tx_power_mw),
                        distance_m: c(g.distance_m),
                        pathloss_exponent: c(g.pathloss_exponent),
                        fading: c(g.fading),
                    };
                    (k, g)
                })
                .collect(),
        }
    }
}

/// `P_tx / r^p` with the transmit power converted from milliwatts to watts.
pub fn received_power_factor<T: Scalar>(tx_power_mw: T, distance_m: T, exponent: T) -> Result<T> {
    if !(tx_power_mw > T::zero()) || !(distance_m > T::zero()) {
        return Err(Error::domain(format!(
            "received power factor needs positive power and distance, got {tx_power_mw} mW at {distance_m} m"
        )));
    }
    Ok(tx_power_mw * T::lit(1e-3) / distance_m.powf(exponent))
}

/// Success probability of `tx -> rx` while every node in `interferers` also transmits.
///
/// `tx` and `rx` are ignored if they appear in `interferers`; duplicates count once.
pub fn success_probability<T: Scalar>(
    tx: NodeId,
    rx: NodeId,
    interferers: &[NodeId],
    phy: &PhyConfig<T>,
) -> Result<T> {
    let link = phy.link(tx, rx)?;
    let signal = link.fading * link.power_factor()?;
    let mut prob = (-(phy.gamma_capture * phy.noise_power_w) / signal).exp();

    let mut seen = Vec::with_capacity(interferers.len());
    for &k in interferers {
        if k == tx || k == rx || seen.contains(&k) {
            continue;
        }
        seen.push(k);
        let cross = phy.link(k, rx)?;
        let interference = cross.fading * cross.power_factor()?;
        prob = prob / (T::one() + phy.gamma_interference * interference / signal);
    }
    Ok(prob)
}

/// Every link success probability the protocol needs.
///
/// Field naming: `<tx><rx>` alone, `<tx><rx>_given_<k>` with `k` interfering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessProbTable<T> {
    pub p_su: T,
    pub p_du: T,
    pub p_dcu: T,
    pub p_dcu_given_s: T,
    pub p_sd: T,
    pub p_sd_given_d: T,
    pub p_sd_given_dc: T,
    pub p_du_given_s: T,
}

impl<T: Scalar> SuccessProbTable<T> {
    /// The entries in link-table order.
    pub fn entries(&self) -> [(&'static str, T); 8] {
        [
            ("P_S->U", self.p_su),
            ("P_D->U", self.p_du),
            ("P_DC->U", self.p_dcu),
            ("P_DC->U/S", self.p_dcu_given_s),
            ("P_S->D", self.p_sd),
            ("P_S->D/D", self.p_sd_given_d),
            ("P_S->D/DC", self.p_sd_given_dc),
            ("P_D->U/S", self.p_du_given_s),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in self.entries() {
            if !crate::scalar::is_probability(p) {
                return Err(Error::domain(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(())
    }

    /// A table with every entry set to `p`.
    pub fn uniform(p: T) -> Self {
        SuccessProbTable {
            p_su: p,
            p_du: p,
            p_dcu: p,
            p_dcu_given_s: p,
            p_sd: p,
            p_sd_given_d: p,
            p_sd_given_dc: p,
            p_du_given_s: p,
        }
    }

    pub fn cast<U: Scalar>(&self) -> SuccessProbTable<U> {
        let c = |x: T| U::lit(x.as_f64());
        SuccessProbTable {
            p_su: c(self.p_su),
            p_du: c(self.p_du),
            p_dcu: c(self.p_dcu),
            p_dcu_given_s: c(self.p_dcu_given_s),
            p_sd: c(self.p_sd),
            p_sd_given_d: c(self.p_sd_given_d),
            p_sd_given_dc: c(self.p_sd_given_dc),
            p_du_given_s: c(self.p_du_given_s),
        }
    }
}

pub fn build_success_table<T: Scalar>(phy: &PhyConfig<T>) -> Result<SuccessProbTable<T>> {
    use NodeId::*;
    let p = |tx, rx, interferers: &[NodeId]| success_probability(tx, rx, interferers, phy);
    Ok(SuccessProbTable {
        p_su: p(S, U, &[])?,
        p_du: p(D, U, &[])?,
        p_dcu: p(Dc, U, &[])?,
        p_dcu_given_s: p(Dc, U, &[S])?,
        p_sd: p(S, D, &[])?,
        p_sd_given_d: p(S, D, &[D])?,
        p_sd_given_dc: p(S, D, &[Dc])?,
        p_du_given_s: p(D, U, &[S])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn power_factor_examples() {
        assert_relative_eq!(received_power_factor(1.0, 50.0, 4.0).unwrap(), 1.6e-10, max_relative = 1e-12);
        assert_relative_eq!(received_power_factor(10.0, 80.0, 4.0).unwrap(), 2.44140625e-10, max_relative = 1e-12);
        assert_relative_eq!(received_power_factor(0.5, 50.0, 4.0).unwrap(), 8.0e-11, max_relative = 1e-12);
    }

    #[test]
    fn power_factor_rejects_non_positive() {
        assert!(matches!(received_power_factor(0.0, 50.0, 4.0), Err(Error::Domain(_))));
        assert!(matches!(received_power_factor(1.0, -1.0, 4.0), Err(Error::Domain(_))));
    }

    #[test]
    fn link_examples() {
        let phy = PhyConfig::<f64>::reference();
        let sd = success_probability(NodeId::S, NodeId::D, &[], &phy).unwrap();
        assert!((sd - 0.779).abs() <= 1e-3);
        let du_s = success_probability(NodeId::D, NodeId::U, &[NodeId::S], &phy).unwrap();
        assert!((du_s - 0.029).abs() <= 1e-3);
        let sd_d = success_probability(NodeId::S, NodeId::D, &[NodeId::D], &phy).unwrap();
        assert_eq!(sd, sd_d);
    }

    #[test]
    fn reference_table() {
        let t = build_success_table(&PhyConfig::<f64>::reference()).unwrap();
        let golden = [0.903, 0.607, 0.849, 0.115, 0.779, 0.779, 0.223, 0.029];
        for ((name, got), want) in t.entries().iter().zip(golden) {
            assert!((got - want).abs() <= 1e-3, "{name}: {got} vs {want}");
        }
    }

    #[test]
    fn reference_table_f32() {
        let t64 = build_success_table(&PhyConfig::<f64>::reference()).unwrap();
        let t32 = build_success_table(&PhyConfig::<f32>::reference()).unwrap();
        for ((_, a), (_, b)) in t64.entries().iter().zip(t32.entries()) {
            assert!((a - b as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn missing_link_is_config_error() {
        let mut phy = PhyConfig::<f64>::reference();
        phy.links.remove(&(NodeId::S, NodeId::U));
        assert!(matches!(
            success_probability(NodeId::D, NodeId::U, &[NodeId::S], &phy),
            Err(Error::MissingLink { tx: NodeId::S, rx: NodeId::U })
        ));
        assert!(build_success_table(&phy).is_err());
        assert!(phy.validate().is_err());
    }

    #[test]
    fn zero_noise_gives_certain_isolated_links() {
        let mut phy = PhyConfig::<f64>::reference();
        phy.noise_power_w = 0.0;
        let t = build_success_table(&phy).unwrap();
        for p in [t.p_su, t.p_du, t.p_dcu, t.p_sd] {
            assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn doubling_power_keeps_attenuation() {
        let phy = PhyConfig::<f64>::reference();
        let mut loud = phy.clone();
        for g in loud.links.values_mut() {
            g.tx_power_mw *= 2.0;
        }
        let a = build_success_table(&phy).unwrap();
        let b = build_success_table(&loud).unwrap();
        for (x, y) in [(a.p_su, b.p_su), (a.p_du, b.p_du), (a.p_dcu, b.p_dcu), (a.p_sd, b.p_sd)] {
            assert!(y > x);
        }
        let ratio = |with: f64, alone: f64| with / alone;
        assert_relative_eq!(ratio(a.p_du_given_s, a.p_du), ratio(b.p_du_given_s, b.p_du), max_relative = 1e-12);
        assert_relative_eq!(ratio(a.p_dcu_given_s, a.p_dcu), ratio(b.p_dcu_given_s, b.p_dcu), max_relative = 1e-12);
        assert_relative_eq!(ratio(a.p_sd_given_dc, a.p_sd), ratio(b.p_sd_given_dc, b.p_sd), max_relative = 1e-12);
    }

    #[test]
    fn loud_interferer_drives_success_to_zero() {
        let mut phy = PhyConfig::<f64>::reference();
        phy.links.get_mut(&(NodeId::S, NodeId::U)).unwrap().tx_power_mw = 1e12;
        let p = success_probability(NodeId::D, NodeId::U, &[NodeId::S], &phy).unwrap();
        assert!(p < 1e-9);
    }

    fn arb_phy() -> impl Strategy<Value = PhyConfig<f64>> {
        (
            prop::collection::vec((0.1f64..20.0, 10.0f64..200.0, 0.05f64..2.0), 5),
            2.0f64..6.0,
            1e-13f64..1e-10,
            0.1f64..10.0,
            0.1f64..10.0,
        )
            .prop_map(|(links, exponent, noise, gc, gi)| {
                let mut phy = PhyConfig::reference();
                for (&(tx, rx), (power, dist, v)) in PROTOCOL_LINKS.iter().zip(links) {
                    phy.links.insert(
                        (tx, rx),
                        LinkGeometry { tx_power_mw: power, distance_m: dist, pathloss_exponent: exponent, fading: v },
                    );
                }
                phy.noise_power_w = noise;
                phy.gamma_capture = gc;
                phy.gamma_interference = gi;
                phy
            })
    }

    proptest! {
        #[test]
        fn self_interference_is_cancelled(phy in arb_phy()) {
            for &(tx, rx) in &PROTOCOL_LINKS {
                let alone = success_probability(tx, rx, &[], &phy).unwrap();
                let own = success_probability(tx, rx, &[rx], &phy).unwrap();
                prop_assert_eq!(alone, own);
            }
        }

        #[test]
        fn interference_never_helps(phy in arb_phy()) {
            let t = build_success_table(&phy).unwrap();
            t.validate().unwrap();
            prop_assert!(t.p_dcu_given_s <= t.p_dcu);
            prop_assert!(t.p_du_given_s <= t.p_du);
            prop_assert!(t.p_sd_given_dc <= t.p_sd);
        }

        #[test]
        fn monotone_in_distance_noise_and_threshold(phy in arb_phy(), bump in 1.01f64..3.0) {
            let base = success_probability(NodeId::S, NodeId::D, &[NodeId::Dc], &phy).unwrap();
            prop_assume!(base > 1e-300);

            let mut far = phy.clone();
            far.links.get_mut(&(NodeId::S, NodeId::D)).unwrap().distance_m *= bump;
            prop_assert!(success_probability(NodeId::S, NodeId::D, &[NodeId::Dc], &far).unwrap() < base);

            let mut noisy = phy.clone();
            noisy.noise_power_w *= bump;
            prop_assert!(success_probability(NodeId::S, NodeId::D, &[NodeId::Dc], &noisy).unwrap() < base);

            let mut strict = phy.clone();
            strict.gamma_capture *= bump;
            prop_assert!(success_probability(NodeId::S, NodeId::D, &[NodeId::Dc], &strict).unwrap() < base);

            let mut loud = phy.clone();
            loud.links.get_mut(&(NodeId::Dc, NodeId::D)).unwrap().tx_power_mw *= bump;
            prop_assert!(success_probability(NodeId::S, NodeId::D, &[NodeId::Dc], &loud).unwrap() <= base);
        }
    }
}
