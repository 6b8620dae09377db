//! Zipf content popularity, hierarchical (CMPC) placement and the resulting
//! miss/hit profile seen by the user.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogConfig {
    /// Number of files in the library.
    pub file_count: usize,
    /// Zipf shape parameter `delta >= 0`.
    pub zipf_shape: f64,
}

impl CatalogConfig {
    pub fn new(file_count: usize, zipf_shape: f64) -> Self {
        CatalogConfig { file_count, zipf_shape }
    }

    pub fn validate(&self) -> Result<()> {
        if self.file_count == 0 {
            return Err(Error::domain("catalog must contain at least one file"));
        }
        if !(self.zipf_shape.is_finite() && self.zipf_shape >= 0.0) {
            return Err(Error::domain(format!("zipf shape must be >= 0, got {}", self.zipf_shape)));
        }
        Ok(())
    }
}

/// Cache capacities in files of the user, destination helper and source helper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheSizes {
    pub m_u: usize,
    pub m_d: usize,
    pub m_s: usize,
}

impl CacheSizes {
    pub fn new(m_u: usize, m_d: usize, m_s: usize) -> Self {
        CacheSizes { m_u, m_d, m_s }
    }

    pub fn total(&self) -> usize {
        self.m_u + self.m_d + self.m_s
    }
}

/// Where a requested file can be found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RequestLocation {
    /// In the user's own cache.
    Local,
    AtD,
    AtS,
    /// Only at the data center.
    DcOnly,
}

/// Rank ranges (1-based, half-open) held by each cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmpcPlacement {
    pub u_range: Range<usize>,
    pub d_range: Range<usize>,
    pub s_range: Range<usize>,
}

impl CmpcPlacement {
    /// User keeps the top `m_u` ranks, D the next `m_d`, S the next `m_s`.
    /// Empty caches take no ranks, so the following tier starts right after the previous one.
    pub fn new(catalog: &CatalogConfig, sizes: &CacheSizes) -> Result<Self> {
        catalog.validate()?;
        if sizes.total() > catalog.file_count {
            return Err(Error::domain(format!(
                "caches hold {} files but the catalog only has {}",
                sizes.total(),
                catalog.file_count
            )));
        }
        let u_end = 1 + sizes.m_u;
        let d_end = u_end + sizes.m_d;
        let s_end = d_end + sizes.m_s;
        Ok(CmpcPlacement {
            u_range: 1..u_end,
            d_range: u_end..d_end,
            s_range: d_end..s_end,
        })
    }

    pub fn locate(&self, rank: usize) -> RequestLocation {
        if self.u_range.contains(&rank) {
            RequestLocation::Local
        } else if self.d_range.contains(&rank) {
            RequestLocation::AtD
        } else if self.s_range.contains(&rank) {
            RequestLocation::AtS
        } else {
            RequestLocation::DcOnly
        }
    }
}

/// `q_u`: probability the user misses locally; `p_hd` / `p_hs`: probability
/// the requested file sits in D's / S's cache.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitProfile<T> {
    pub q_u: T,
    pub p_hd: T,
    pub p_hs: T,
}

impl<T: Scalar> HitProfile<T> {
    pub fn new(q_u: T, p_hd: T, p_hs: T) -> Self {
        HitProfile { q_u, p_hd, p_hs }
    }

    /// `(1 - q_u, p_hd, p_hs, q_u - p_hd - p_hs)`: local, at D, at S, DC only.
    pub fn location_probabilities(&self) -> [T; 4] {
        [
            T::one() - self.q_u,
            self.p_hd,
            self.p_hs,
            (self.q_u - self.p_hd - self.p_hs).max(T::zero()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        use crate::scalar::is_probability;
        if !(is_probability(self.q_u) && is_probability(self.p_hd) && is_probability(self.p_hs)) {
            return Err(Error::domain(format!("hit profile {self:?} holds a non-probability")));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> HitProfile<U> {
        HitProfile {
            q_u: U::lit(self.q_u.as_f64()),
            p_hd: U::lit(self.p_hd.as_f64()),
            p_hs: U::lit(self.p_hs.as_f64()),
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> CompensatedSum<T> {
    fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry = self.carry + ((self.sum - t) + x);
        } else {
            self.carry = self.carry + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    fn value(&self) -> T {
        self.sum + self.carry
    }
}

fn compensated_sum<T: Scalar>(xs: impl IntoIterator<Item = T>) -> T {
    let mut acc = CompensatedSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Request probability of every rank, `p_i = i^-delta / sum_j j^-delta`.
pub fn zipf_pmf<T: Scalar>(catalog: &CatalogConfig) -> Result<Vec<T>> {
    catalog.validate()?;
    let delta = T::lit(catalog.zipf_shape);
    let weights: Vec<T> = (1..=catalog.file_count)
        .map(|i| T::lit(i as f64).powf(-delta))
        .collect();
    let norm = compensated_sum(weights.iter().copied());
    Ok(weights.into_iter().map(|w| w / norm).collect())
}

/// Miss/hit profile under CMPC placement.
pub fn hit_profile<T: Scalar>(catalog: &CatalogConfig, sizes: &CacheSizes) -> Result<HitProfile<T>> {
    let placement = CmpcPlacement::new(catalog, sizes)?;
    let pmf = zipf_pmf::<T>(catalog)?;
    Ok(hit_profile_from_pmf(&pmf, &placement))
}

fn range_mass<T: Scalar>(pmf: &[T], ranks: &Range<usize>) -> T {
    compensated_sum(pmf[ranks.start - 1..ranks.end - 1].iter().copied())
}

pub fn hit_profile_from_pmf<T: Scalar>(pmf: &[T], placement: &CmpcPlacement) -> HitProfile<T> {
    let local = range_mass(pmf, &placement.u_range);
    HitProfile {
        q_u: (T::one() - local).clamp_unit(),
        p_hd: range_mass(pmf, &placement.d_range),
        p_hs: range_mass(pmf, &placement.s_range),
    }
}

/// Draws exact Zipf ranks and maps them to cache locations.
#[derive(Debug, Clone)]
pub struct ZipfRequestSampler {
    cdf: Vec<f64>,
    placement: CmpcPlacement,
}

impl ZipfRequestSampler {
    pub fn new(pmf: &[f64], placement: CmpcPlacement) -> Self {
        let mut acc = CompensatedSum::default();
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|&p| {
                acc.add(p);
                acc.value()
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        ZipfRequestSampler { cdf, placement }
    }

    pub fn from_config(catalog: &CatalogConfig, sizes: &CacheSizes) -> Result<Self> {
        let placement = CmpcPlacement::new(catalog, sizes)?;
        Ok(Self::new(&zipf_pmf::<f64>(catalog)?, placement))
    }

    /// 1-based rank of a requested file.
    pub fn sample_rank<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) + 1
    }

    pub fn placement(&self) -> &CmpcPlacement {
        &self.placement
    }
}

/// Draws one request and reports where the file is cached.
pub fn sample_request<R: Rng + ?Sized>(sampler: &ZipfRequestSampler, rng: &mut R) -> RequestLocation {
    sampler.placement.locate(sampler.sample_rank(rng))
}
