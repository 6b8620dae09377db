//! TOML scenario files.
//!
//! Every field is optional; missing fields take the reference values
//! (see `configs/reference.toml` for the annotated file).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cache::{hit_profile, CacheSizes, CatalogConfig, CmpcPlacement, HitProfile, ZipfRequestSampler};
use crate::delay::{DelayInputs, UserDelayEq};
use crate::error::{Error, Result};
use crate::phy::{build_success_table, LinkGeometry, NodeId, PhyConfig, SuccessProbTable, PROTOCOL_LINKS};
use crate::sim::{RequestMode, SimScenario};
use crate::throughput::{service_rate, AccessProbs, MuMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxPowers {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "DC")]
    pub dc: f64,
}

impl Default for TxPowers {
    fn default() -> Self {
        TxPowers { s: 1.0, d: 0.5, dc: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Distances {
    #[serde(rename = "S-D")]
    pub s_d: f64,
    #[serde(rename = "S-U")]
    pub s_u: f64,
    #[serde(rename = "D-U")]
    pub d_u: f64,
    #[serde(rename = "DC-U")]
    pub dc_u: f64,
    #[serde(rename = "DC-D")]
    pub dc_d: f64,
}

impl Default for Distances {
    fn default() -> Self {
        Distances {
            s_d: 50.0,
            s_u: 40.0,
            d_u: 50.0,
            dc_u: 80.0,
            dc_d: 100.0,
        }
    }
}

impl Distances {
    fn get(&self, tx: NodeId, rx: NodeId) -> (&'static str, f64) {
        match (tx, rx) {
            (NodeId::S, NodeId::D) => ("S-D", self.s_d),
            (NodeId::S, NodeId::U) => ("S-U", self.s_u),
            (NodeId::D, NodeId::U) => ("D-U", self.d_u),
            (NodeId::Dc, NodeId::U) => ("DC-U", self.dc_u),
            (NodeId::Dc, NodeId::D) => ("DC-D", self.dc_d),
            _ => unreachable!("not a protocol link"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhySection {
    pub noise_power_w: f64,
    pub gamma_capture: f64,
    pub gamma_interference: f64,
    pub pathloss_exponent: f64,
    pub fading: f64,
    pub tx_power_mw: TxPowers,
    pub distance_m: Distances,
}

impl Default for PhySection {
    fn default() -> Self {
        PhySection {
            noise_power_w: 1e-11,
            gamma_capture: 1.0,
            gamma_interference: 4.0,
            pathloss_exponent: 4.0,
            fading: 0.25,
            tx_power_mw: TxPowers::default(),
            distance_m: Distances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSection {
    pub file_count: usize,
    pub zipf_shape: f64,
}

impl Default for CatalogSection {
    fn default() -> Self {
        CatalogSection {
            file_count: 10_000,
            zipf_shape: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizesSection {
    pub m_u: usize,
    pub m_d: usize,
    pub m_s: usize,
}

impl Default for SizesSection {
    fn default() -> Self {
        SizesSection {
            m_u: 200,
            m_d: 1000,
            m_s: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccessSection {
    pub q_s: f64,
    pub q_c: f64,
    pub q_d: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub w: f64,
}

impl Default for AccessSection {
    fn default() -> Self {
        AccessSection {
            q_s: 0.9,
            q_c: 0.5,
            q_d: 0.8,
            alpha: 0.7,
            lambda: 0.2,
            w: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesSection {
    pub mu_mode: MuMode,
    pub request_mode: RequestMode,
    pub user_delay_eq: UserDelayEq,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub phy: PhySection,
    pub catalog: CatalogSection,
    pub sizes: SizesSection,
    pub access: AccessSection,
    pub modes: ModesSection,
}

const HEADER: &str = "\
# Scenario file. Every key is optional; omitted keys take the reference values.
# Powers in mW, distances in m, noise in W, thresholds linear.
";

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(format!("{HEADER}\n{}", toml::to_string(self)?))
    }

    /// Field-level checks; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let p = &self.phy;
        let positive = |field: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be a positive number, got {x}")))
            }
        };
        if !(p.noise_power_w.is_finite() && p.noise_power_w >= 0.0) {
            return Err(Error::config("phy.noise_power_w", format!("must be >= 0, got {}", p.noise_power_w)));
        }
        positive("phy.gamma_capture", p.gamma_capture)?;
        positive("phy.gamma_interference", p.gamma_interference)?;
        positive("phy.fading", p.fading)?;
        if !(2.0..=6.0).contains(&p.pathloss_exponent) {
            return Err(Error::config(
                "phy.pathloss_exponent",
                format!("must lie in [2, 6], got {}", p.pathloss_exponent),
            ));
        }
        positive("phy.tx_power_mw.S", p.tx_power_mw.s)?;
        positive("phy.tx_power_mw.D", p.tx_power_mw.d)?;
        positive("phy.tx_power_mw.DC", p.tx_power_mw.dc)?;
        for &(tx, rx) in &PROTOCOL_LINKS {
            let (name, d) = p.distance_m.get(tx, rx);
            positive(&format!("phy.distance_m.{name}"), d)?;
        }

        if self.catalog.file_count == 0 {
            return Err(Error::config("catalog.file_count", "must be at least 1"));
        }
        if !(self.catalog.zipf_shape.is_finite() && self.catalog.zipf_shape >= 0.0) {
            return Err(Error::config(
                "catalog.zipf_shape",
                format!("must be >= 0, got {}", self.catalog.zipf_shape),
            ));
        }
        let s = &self.sizes;
        if s.m_u + s.m_d + s.m_s > self.catalog.file_count {
            return Err(Error::config(
                "sizes",
                format!(
                    "m_u + m_d + m_s = {} exceeds catalog.file_count = {}",
                    s.m_u + s.m_d + s.m_s,
                    self.catalog.file_count
                ),
            ));
        }

        let a = &self.access;
        for (name, x) in [
            ("q_s", a.q_s),
            ("q_c", a.q_c),
            ("q_d", a.q_d),
            ("alpha", a.alpha),
            ("lambda", a.lambda),
            ("w", a.w),
        ] {
            if !(x.is_finite() && (0.0..=1.0).contains(&x)) {
                return Err(Error::config(format!("access.{name}"), format!("must lie in [0, 1], got {x}")));
            }
        }
        Ok(())
    }

    pub fn phy_config(&self) -> PhyConfig<f64> {
        let p = &self.phy;
        let power = |n: NodeId| match n {
            NodeId::S => p.tx_power_mw.s,
            NodeId::D => p.tx_power_mw.d,
            NodeId::Dc => p.tx_power_mw.dc,
            NodeId::U => unreachable!("U never transmits"),
        };
        PhyConfig {
            noise_power_w: p.noise_power_w,
            gamma_capture: p.gamma_capture,
            gamma_interference: p.gamma_interference,
            links: PROTOCOL_LINKS
                .iter()
                .map(|&(tx, rx)| {
                    let geometry = LinkGeometry {
                        tx_power_mw: power(tx),
                        distance_m: p.distance_m.get(tx, rx).1,
                        pathloss_exponent: p.pathloss_exponent,
                        fading: p.fading,
                    };
                    ((tx, rx), geometry)
                })
                .collect(),
        }
    }

    pub fn catalog(&self) -> CatalogConfig {
        CatalogConfig::new(self.catalog.file_count, self.catalog.zipf_shape)
    }

    pub fn cache_sizes(&self) -> CacheSizes {
        CacheSizes::new(self.sizes.m_u, self.sizes.m_d, self.sizes.m_s)
    }

    pub fn access_probs(&self) -> AccessProbs<f64> {
        let a = &self.access;
        AccessProbs {
            q_s: a.q_s,
            q_c: a.q_c,
            q_d: a.q_d,
            alpha: a.alpha,
            lambda: a.lambda,
            w: a.w,
        }
    }

    pub fn success_table(&self) -> Result<SuccessProbTable<f64>> {
        build_success_table(&self.phy_config())
    }

    pub fn hits(&self) -> Result<HitProfile<f64>> {
        hit_profile(&self.catalog(), &self.cache_sizes())
    }

    pub fn placement(&self) -> Result<CmpcPlacement> {
        CmpcPlacement::new(&self.catalog(), &self.cache_sizes())
    }

    pub fn delay_inputs(&self) -> Result<DelayInputs<f64>> {
        Ok(DelayInputs::from_model(
            self.access_probs(),
            self.hits()?,
            self.success_table()?,
            self.modes.mu_mode,
        ))
    }

    /// Simulator view; builds the Zipf sampler only when `request_mode` needs it.
    pub fn sim_scenario(&self, request_mode: RequestMode) -> Result<SimScenario> {
        let scenario = SimScenario::new(self.access_probs(), self.hits()?, self.success_table()?);
        Ok(match request_mode {
            RequestMode::ZipfExact => {
                scenario.with_sampler(ZipfRequestSampler::from_config(&self.catalog(), &self.cache_sizes())?)
            }
            _ => scenario,
        })
    }

    /// Reads a numeric field by its dotted key, e.g. `access.alpha` or `phy.distance_m.S-D`.
    pub fn field(&self, key: &str) -> Result<f64> {
        let mut root = toml::Table::try_from(self)?;
        match lookup(&mut root, key)? {
            toml::Value::Integer(i) => Ok(*i as f64),
            toml::Value::Float(x) => Ok(*x),
            _ => Err(Error::config(key, "is not a numeric field")),
        }
    }

    /// Sets a numeric field by its dotted key. Integer fields accept only
    /// whole values. The result is validated.
    pub fn with_field(&self, key: &str, value: f64) -> Result<Self> {
        let mut root = toml::Table::try_from(self)?;
        let slot = lookup(&mut root, key)?;
        *slot = match slot {
            toml::Value::Integer(_) => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::config(key, format!("needs a non-negative integer, got {value}")));
                }
                toml::Value::Integer(value as i64)
            }
            toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(Error::config(key, "is not a numeric field")),
        };
        let config: ScenarioConfig = root.try_into()?;
        config.validate()?;
        Ok(config)
    }

    /// Analytic service rate under the configured reading.
    pub fn mu(&self) -> Result<f64> {
        Ok(service_rate(&self.access_probs(), &self.hits()?, &self.success_table()?, self.modes.mu_mode))
    }
}

fn lookup<'a>(root: &'a mut toml::Table, key: &str) -> Result<&'a mut toml::Value> {
    let mut parts = key.split('.').peekable();
    let mut table = root;
    loop {
        let part = parts.next().ok_or_else(|| Error::config(key, "empty key"))?;
        let entry = table
            .get_mut(part)
            .ok_or_else(|| Error::config(key, format!("unknown key `{part}`")))?;
        if parts.peek().is_none() {
            return Ok(entry);
        }
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not a section")))?;
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    ScenarioConfig::parse(&fs::read_to_string(path)?)
}

pub fn write_scenario(config: &ScenarioConfig, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, config.to_toml()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_values() {
        let c = ScenarioConfig::parse("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.phy_config(), PhyConfig::reference());
    }

    #[test]
    fn round_trip() {
        let mut c = ScenarioConfig::default();
        c.access.lambda = 0.123456789;
        c.phy.noise_power_w = 3.3e-12;
        c.modes.mu_mode = MuMode::Corrected;
        c.modes.request_mode = RequestMode::ZipfExact;
        let text = c.to_toml().unwrap();
        assert!(text.starts_with('#'));
        assert_eq!(ScenarioConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn partial_file() {
        let c = ScenarioConfig::parse("[catalog]\nzipf_shape = 1.2\n[modes]\nmu_mode = \"corrected\"\n").unwrap();
        assert_eq!(c.catalog.zipf_shape, 1.2);
        assert_eq!(c.catalog.file_count, 10_000);
        assert_eq!(c.modes.mu_mode, MuMode::Corrected);
    }

    #[test]
    fn negative_distance_names_the_link() {
        let err = ScenarioConfig::parse("[phy.distance_m]\nDC-U = -80.0\n").unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "phy.distance_m.DC-U"), "{err}");
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(ScenarioConfig::parse("[access]\nq_x = 0.1\n"), Err(Error::Parse(_))));
        assert!(matches!(ScenarioConfig::parse("[access]\nq_s = \"high\"\n"), Err(Error::Parse(_))));
        let err = ScenarioConfig::parse("[access]\nalpha = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("access.alpha"));
        let err = ScenarioConfig::parse("[sizes]\nm_u = 9000\n").unwrap_err();
        assert!(err.to_string().contains("sizes"));
    }

    #[test]
    fn field_overrides() {
        let c = ScenarioConfig::default();
        assert_eq!(c.with_field("access.alpha", 0.3).unwrap().access.alpha, 0.3);
        assert_eq!(c.with_field("sizes.m_u", 600.0).unwrap().sizes.m_u, 600);
        assert_eq!(c.with_field("phy.distance_m.S-D", 70.0).unwrap().phy.distance_m.s_d, 70.0);
        assert!(c.with_field("sizes.m_u", 600.5).is_err());
        assert!(c.with_field("sizes.m_u", 20_000.0).is_err());
        assert!(c.with_field("access.nope", 1.0).is_err());
        assert!(c.with_field("modes.mu_mode", 1.0).is_err());
        assert_eq!(c.field("phy.distance_m.DC-D").unwrap(), 100.0);
        assert_eq!(c.field("sizes.m_s").unwrap(), 2000.0);
        assert!(c.field("phy").is_err());
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        let c = ScenarioConfig::default().with_field("catalog.zipf_shape", 1.2).unwrap();
        write_scenario(&c, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), c);
        assert!(matches!(load_scenario(dir.path().join("missing.toml")), Err(Error::Io(_))));
    }
}
