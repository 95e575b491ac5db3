//! Local border samples and nearest-neighbor pairwise-difference estimation
//! weights from municipality distance data.
//!
//! Matching is one-directional with replacement at the municipality level:
//! every treated-arm spell carries weight 1 and sends one unit of weight to
//! its municipality's nearest control municipality, where it is split evenly
//! across that municipality's control spells.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spell::Spell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Km,
    Minutes,
}

/// Municipality-pair travel distance and travel time.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRecord<F> {
    pub muni_a: String,
    pub muni_b: String,
    pub travel_km: F,
    pub travel_min: F,
}

/// Symmetric pair lookup; missing pairs are infinitely far, never errors.
#[derive(Debug, Clone, Default)]
pub struct DistanceTable<F> {
    map: HashMap<(String, String), (F, F)>,
}

impl<F: Scalar> DistanceTable<F> {
    pub fn from_records(records: &[DistanceRecord<F>]) -> Result<Self> {
        let mut map: HashMap<(String, String), (F, F)> = HashMap::with_capacity(records.len());
        for r in records {
            if !(r.travel_km >= F::zero() && r.travel_min >= F::zero()) {
                return Err(Error::InvalidInput(format!(
                    "negative or non-finite distance between {} and {}",
                    r.muni_a, r.muni_b
                )));
            }
            if r.muni_a == r.muni_b {
                let zero = r.travel_km == F::zero() && r.travel_min == F::zero();
                if !zero {
                    return Err(Error::InvalidInput(format!(
                        "nonzero self-distance for {}",
                        r.muni_a
                    )));
                }
                continue;
            }
            let key = Self::key(&r.muni_a, &r.muni_b);
            let val = (r.travel_km, r.travel_min);
            if let Some(prev) = map.insert(key, val) {
                if prev != val {
                    return Err(Error::InvalidInput(format!(
                        "conflicting distances for pair ({}, {})",
                        r.muni_a, r.muni_b
                    )));
                }
            }
        }
        Ok(Self { map })
    }

    fn key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    pub fn get(&self, a: &str, b: &str, metric: DistanceMetric) -> Option<F> {
        if a == b {
            return Some(F::zero());
        }
        self.map.get(&Self::key(a, b)).map(|&(km, min)| match metric {
            DistanceMetric::Km => km,
            DistanceMetric::Minutes => min,
        })
    }
}

/// Matching configuration: metric, local-sample threshold x̄ and whether
/// counterparts must be sampled in the same year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig<F> {
    pub metric: DistanceMetric,
    pub threshold: F,
    pub same_year: bool,
}

impl<F: Scalar> Default for MatchConfig<F> {
    fn default() -> Self {
        Self {
            metric: DistanceMetric::Km,
            threshold: F::from_f64_lossy(20.0),
            same_year: true,
        }
    }
}

impl<F: Scalar> MatchConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.threshold > F::zero() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "distance threshold must be positive, got {}",
                self.threshold
            )))
        }
    }
}

/// A municipality observed in a sampling year, with its treatment arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuniYear {
    pub muni: String,
    pub treated: bool,
    pub year: i32,
}

/// Nearest opposite-group municipality per municipality-year; `None` when no
/// counterpart exists at finite distance.
#[derive(Debug, Clone, Default)]
pub struct NearestMap<F> {
    pub entries: BTreeMap<(String, i32), Option<(String, F)>>,
}

impl<F: Scalar> NearestMap<F> {
    /// Best counterpart for a municipality across its sampled years
    /// (deterministic: smallest distance, then smaller counterpart id).
    pub fn best(&self, muni: &str) -> Option<(String, F)> {
        let mut best: Option<(String, F)> = None;
        let lo = (muni.to_string(), i32::MIN);
        let hi = (muni.to_string(), i32::MAX);
        for (_, entry) in self.entries.range(lo..=hi) {
            if let Some((m, d)) = entry {
                let better = match &best {
                    None => true,
                    Some((bm, bd)) => d < bd || (d == bd && m < bm),
                };
                if better {
                    best = Some((m.clone(), *d));
                }
            }
        }
        best
    }
}

/// Per-spell nonnegative estimation weight from nearest-neighbor pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchWeight<F> {
    pub spell_ref: String,
    pub weight: F,
    pub matched_muni: String,
    pub matched_distance: F,
}

/// Build municipality-year units from spells. Every spell of a municipality
/// must agree on the treatment arm; spells carry no sampling year, so all
/// units share year 0 (`same_year` is then vacuous).
pub fn muni_units_from_spells<F: Scalar>(spells: &[Spell<F>]) -> Result<Vec<MuniYear>> {
    let mut arms: BTreeMap<&str, bool> = BTreeMap::new();
    for s in spells {
        match arms.entry(s.municipality_id.as_str()) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(s.treated);
            }
            std::collections::btree_map::Entry::Occupied(e) => {
                if *e.get() != s.treated {
                    return Err(Error::InvalidInput(format!(
                        "municipality {} appears in both treatment arms",
                        s.municipality_id
                    )));
                }
            }
        }
    }
    Ok(arms
        .into_iter()
        .map(|(muni, treated)| MuniYear { muni: muni.to_string(), treated, year: 0 })
        .collect())
}

/// For each municipality-year, the minimizing opposite-group municipality
/// under the configured metric, restricted to the same sampling year when
/// `same_year` is set. Distance ties break toward the smaller municipality
/// id.
pub fn nearest_counterpart<F: Scalar>(
    units: &[MuniYear],
    distances: &DistanceTable<F>,
    config: &MatchConfig<F>,
) -> Result<NearestMap<F>> {
    config.validate()?;
    let mut seen: BTreeMap<(&str, i32), bool> = BTreeMap::new();
    for u in units {
        if let Some(prev) = seen.insert((u.muni.as_str(), u.year), u.treated) {
            if prev != u.treated {
                return Err(Error::InvalidInput(format!(
                    "municipality {} year {} listed in both arms",
                    u.muni, u.year
                )));
            }
        }
    }

    let mut entries = BTreeMap::new();
    for u in units {
        let mut best: Option<(String, F)> = None;
        for v in units {
            if v.treated == u.treated || v.muni == u.muni {
                continue;
            }
            if config.same_year && v.year != u.year {
                continue;
            }
            let Some(d) = distances.get(&u.muni, &v.muni, config.metric) else {
                continue; // missing pair: infinitely far
            };
            let better = match &best {
                None => true,
                Some((bm, bd)) => d < *bd || (d == *bd && v.muni < *bm),
            };
            if better {
                best = Some((v.muni.clone(), d));
            }
        }
        entries.insert((u.muni.clone(), u.year), best);
    }
    Ok(NearestMap { entries })
}

/// Retain exactly the spells whose municipality's nearest-counterpart
/// distance is within the threshold.
pub fn local_sample<F: Scalar>(
    spells: &[Spell<F>],
    nearest: &NearestMap<F>,
    config: &MatchConfig<F>,
) -> Vec<Spell<F>> {
    spells
        .iter()
        .filter(|s| {
            nearest
                .best(&s.municipality_id)
                .is_some_and(|(_, d)| d <= config.threshold)
        })
        .cloned()
        .collect()
}

/// Nearest-neighbor pairwise-difference weights on a local sample.
///
/// Treated-arm spells get weight 1. A control spell's weight is the number
/// of treated spells matched to its municipality divided by the number of
/// control spells there; unmatched control spells get weight 0.
pub fn pairwise_weights<F: Scalar>(
    local: &[Spell<F>],
    nearest: &NearestMap<F>,
    config: &MatchConfig<F>,
) -> Result<Vec<MatchWeight<F>>> {
    config.validate()?;
    let n_treated = local.iter().filter(|s| s.treated).count();
    if n_treated == 0 {
        return Err(Error::EmptyArm("no treated spells in local sample".into()));
    }
    if n_treated == local.len() {
        return Err(Error::EmptyArm("no control spells in local sample".into()));
    }

    let mut control_count: HashMap<&str, usize> = HashMap::new();
    for s in local.iter().filter(|s| !s.treated) {
        *control_count.entry(s.municipality_id.as_str()).or_insert(0) += 1;
    }
    // Matching with replacement: each treated spell sends one unit of weight
    // to its nearest control municipality.
    let mut demand: HashMap<String, usize> = HashMap::new();
    for s in local.iter().filter(|s| s.treated) {
        if let Some((m, _)) = nearest.best(&s.municipality_id) {
            *demand.entry(m).or_insert(0) += 1;
        }
    }

    local
        .iter()
        .map(|s| {
            let (matched_muni, matched_distance) =
                nearest.best(&s.municipality_id).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "spell {} is not in the local sample (no counterpart)",
                        s.subject_id
                    ))
                })?;
            let weight = if s.treated {
                F::one()
            } else {
                let dem = demand.get(s.municipality_id.as_str()).copied().unwrap_or(0);
                let cnt = control_count[s.municipality_id.as_str()];
                F::from_f64_lossy(dem as f64) / F::from_f64_lossy(cnt as f64)
            };
            Ok(MatchWeight {
                spell_ref: s.subject_id.clone(),
                weight,
                matched_muni,
                matched_distance,
            })
        })
        .collect()
}
