//! Deterministic treatment assignment.
//!
//! A query is mapped to its group by hashing `userId|normalizedQuery|salt`
//! with 64-bit FNV-1a, mixing the hash with the MurmurHash3 `fmix64`
//! finalizer, and locating the result, read as a point in `[0, 1)`, in the
//! cumulative weight intervals. The same inputs give the same group in
//! every process and every client implementation, so reloads and repeated
//! searches never switch groups.

use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::serp::{ArrangementId, Engine};

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("invalid weight configuration: {0}")]
    InvalidConfig(String),
}

/// Lowercases, trims and collapses internal whitespace runs to one space.
pub fn normalize_query(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssignmentKey {
    user_id: String,
    normalized_query: String,
    salt: String,
}

impl AssignmentKey {
    /// Builds a key, normalizing the query text.
    pub fn new(user_id: impl Into<String>, raw_query: &str, salt: impl Into<String>) -> Self {
        AssignmentKey {
            user_id: user_id.into(),
            normalized_query: normalize_query(raw_query),
            salt: salt.into(),
        }
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn normalized_query(&self) -> &str {
        &self.normalized_query
    }

    pub fn salt(&self) -> &str {
        &self.salt
    }

    /// The exact byte string that is hashed.
    pub fn hash_input(&self) -> String {
        format!("{}|{}|{}", self.user_id, self.normalized_query, self.salt)
    }
}

pub fn stable_hash(key: &AssignmentKey) -> u64 {
    fnv1a64(key.hash_input().as_bytes())
}

/// MurmurHash3 64-bit finalizer.
///
/// FNV-1a leaves its high bits nearly untouched when only the last input
/// bytes change (for instance `epoch-1` vs `epoch-2` salts), so the hash is
/// avalanched before its high bits are used as a bucket coordinate.
pub fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// Maps a stable hash to `[0, 1)`: `fmix64(hash) / 2^64`, rounded down to
/// double precision by keeping the top 53 bits.
pub fn hash_to_unit(hash: u64) -> f64 {
    (fmix64(hash) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Per-engine group weights, validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeights {
    engine: Engine,
    weights: Vec<(ArrangementId, f64)>,
}

impl GroupWeights {
    pub fn new(
        engine: Engine,
        weights: Vec<(ArrangementId, f64)>,
    ) -> Result<Self, AssignmentError> {
        if weights.is_empty() {
            return Err(AssignmentError::InvalidConfig(format!(
                "no groups configured for {engine}"
            )));
        }
        let supported = engine.supported_arrangements();
        let mut total = 0.0;
        for (i, (group, w)) in weights.iter().enumerate() {
            if !supported.contains(group) {
                return Err(AssignmentError::InvalidConfig(format!(
                    "{group} is not served on {engine}"
                )));
            }
            if weights[..i].iter().any(|(g, _)| g == group) {
                return Err(AssignmentError::InvalidConfig(format!(
                    "{group} listed twice for {engine}"
                )));
            }
            if !w.is_finite() || *w < 0.0 {
                return Err(AssignmentError::InvalidConfig(format!(
                    "{engine}.{group} weight {w} must be finite and nonnegative"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(AssignmentError::InvalidConfig(format!(
                "{engine} weights sum to {total}, expected 1"
            )));
        }
        Ok(GroupWeights { engine, weights })
    }

    /// Equal weight on every arrangement the engine supports.
    pub fn uniform(engine: Engine) -> Self {
        let groups = engine.supported_arrangements();
        let w = 1.0 / groups.len() as f64;
        GroupWeights {
            engine,
            weights: groups.iter().map(|&g| (g, w)).collect(),
        }
    }

    /// Everything to one group.
    pub fn single(engine: Engine, group: ArrangementId) -> Result<Self, AssignmentError> {
        Self::new(engine, vec![(group, 1.0)])
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn weights(&self) -> &[(ArrangementId, f64)] {
        &self.weights
    }

    /// Group whose cumulative-weight interval contains `u`.
    pub fn bucket(&self, u: f64) -> ArrangementId {
        let mut cumulative = 0.0;
        for &(group, w) in &self.weights {
            cumulative += w;
            if u < cumulative {
                return group;
            }
        }
        // u fell into the rounding slack above the last boundary
        self.weights
            .iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(g, _)| *g)
            .expect("validated weights have positive mass")
    }
}

pub fn assign(
    key: &AssignmentKey,
    engine: Engine,
    weights: &GroupWeights,
) -> Result<ArrangementId, AssignmentError> {
    if weights.engine != engine {
        return Err(AssignmentError::InvalidConfig(format!(
            "weights are for {}, not {engine}",
            weights.engine
        )));
    }
    Ok(weights.bucket(hash_to_unit(stable_hash(key))))
}

/// Salt plus weights for both engines.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub salt: String,
    pub google: GroupWeights,
    pub bing: GroupWeights,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            salt: "default".to_owned(),
            google: GroupWeights::uniform(Engine::Google),
            bing: GroupWeights::uniform(Engine::Bing),
        }
    }
}

impl ExperimentConfig {
    /// Reads `experiment.salt` and `<engine>.<arrangementId> = <weight>`
    /// lines. An engine without any weight lines gets uniform weights.
    pub fn from_kv(cfg: &KvConfig) -> Result<Self, ConfigError> {
        let mut out = ExperimentConfig::default();
        if let Some(salt) = cfg.get("experiment.salt") {
            out.salt = salt.to_owned();
        }
        for engine in Engine::ALL {
            let mut weights = Vec::new();
            for (name, value) in cfg.section(engine.as_str()) {
                let key = format!("{engine}.{name}");
                let group = ArrangementId::parse(name)
                    .ok_or_else(|| ConfigError::invalid(&key, "unknown arrangement"))?;
                let w = value
                    .parse::<f64>()
                    .map_err(|e| ConfigError::invalid(&key, e.to_string()))?;
                weights.push((group, w));
            }
            if weights.is_empty() {
                continue;
            }
            weights.sort_by_key(|(g, _)| *g);
            let parsed = GroupWeights::new(engine, weights)
                .map_err(|e| ConfigError::invalid(engine.as_str(), e.to_string()))?;
            match engine {
                Engine::Google => out.google = parsed,
                Engine::Bing => out.bing = parsed,
            }
        }
        Ok(out)
    }

    pub fn weights(&self, engine: Engine) -> &GroupWeights {
        match engine {
            Engine::Google => &self.google,
            Engine::Bing => &self.bing,
        }
    }

    pub fn assign(&self, user_id: &str, raw_query: &str, engine: Engine) -> ArrangementId {
        let key = AssignmentKey::new(user_id, raw_query, self.salt.clone());
        self.weights(engine).bucket(hash_to_unit(stable_hash(&key)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_query("  Cheap  Flights "), "cheap flights");
        assert_eq!(normalize_query("CHEAP FLIGHTS"), "cheap flights");
        assert_eq!(normalize_query("a\t b"), "a b");
        assert_eq!(normalize_query("ÜBER\u{3000}Straße"), "über straße");
        assert_eq!(normalize_query(""), "");
    }

    #[test]
    fn key_normalizes_query() {
        let a = AssignmentKey::new("u", "  Cheap  Flights ", "s");
        let b = AssignmentKey::new("u", "cheap flights", "s");
        assert_eq!(stable_hash(&a), stable_hash(&b));
        assert_eq!(a.hash_input(), "u|cheap flights|s");
    }

    #[test]
    fn empty_input_is_offset_basis() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    }

    #[test]
    fn unit_interval_bounds() {
        // fmix64 is a bijection fixing 0
        assert_eq!(fmix64(0), 0);
        assert_eq!(hash_to_unit(0), 0.0);
        let top = (0..10_000u64)
            .map(|k| hash_to_unit(k.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
            .fold(0.0, f64::max);
        assert!(top < 1.0);
    }

    #[test]
    fn finalizer_reference_vectors() {
        // values from the reference MurmurHash3 fmix64
        assert_eq!(fmix64(1), 0xb456_bcfc_34c2_cb2c);
        assert_eq!(fmix64(0xcbf2_9ce4_8422_2325), fmix64(fnv1a64(b"")));
    }

    #[test]
    fn degenerate_weights() {
        let w = GroupWeights::single(Engine::Google, ArrangementId::A0).unwrap();
        for i in 0..100 {
            let key = AssignmentKey::new(format!("user{i}"), "q", "salt");
            assert_eq!(assign(&key, Engine::Google, &w).unwrap(), ArrangementId::A0);
        }
    }

    #[test]
    fn zero_weight_groups_are_never_drawn() {
        let w = GroupWeights::new(
            Engine::Google,
            vec![(ArrangementId::A0, 0.0), (ArrangementId::A3, 1.0), (ArrangementId::A6, 0.0)],
        )
        .unwrap();
        assert_eq!(w.bucket(0.0), ArrangementId::A3);
        assert_eq!(w.bucket(0.999_999_999_999), ArrangementId::A3);
    }

    #[test]
    fn invalid_weights() {
        use ArrangementId::*;
        assert!(GroupWeights::new(Engine::Google, vec![]).is_err());
        assert!(GroupWeights::new(Engine::Google, vec![(A0, 0.5), (A1, 0.4)]).is_err());
        assert!(GroupWeights::new(Engine::Google, vec![(A0, 1.5), (A1, -0.5)]).is_err());
        assert!(GroupWeights::new(Engine::Google, vec![(A0, 0.5), (A0, 0.5)]).is_err());
        assert!(GroupWeights::new(Engine::Bing, vec![(A0, 0.5), (A2, 0.5)]).is_err());
        assert!(GroupWeights::new(Engine::Google, vec![(A0, f64::NAN)]).is_err());
        let bing = GroupWeights::uniform(Engine::Bing);
        let key = AssignmentKey::new("u", "q", "s");
        assert!(assign(&key, Engine::Google, &bing).is_err());
    }

    #[test]
    fn salt_rerandomizes() {
        let w = GroupWeights::uniform(Engine::Google);
        let differing = (0..200)
            .filter(|i| {
                let q = format!("query {i}");
                let a = assign(&AssignmentKey::new("u", &q, "epoch-1"), Engine::Google, &w);
                let b = assign(&AssignmentKey::new("u", &q, "epoch-2"), Engine::Google, &w);
                a != b
            })
            .count();
        // with 7 uniform groups about 6/7 of queries should move
        assert!(differing > 140, "only {differing} of 200 moved");
    }

    #[test]
    fn config_file() {
        let cfg = KvConfig::parse(
            "experiment.salt = s1\ngoogle.a0 = 0.5\ngoogle.a2 = 0.5\n",
        )
        .unwrap();
        let exp = ExperimentConfig::from_kv(&cfg).unwrap();
        assert_eq!(exp.salt, "s1");
        assert_eq!(
            exp.google.weights(),
            &[(ArrangementId::A0, 0.5), (ArrangementId::A2, 0.5)]
        );
        assert_eq!(exp.bing, GroupWeights::uniform(Engine::Bing));

        let bad = KvConfig::parse("bing.a4 = 1").unwrap();
        assert!(ExperimentConfig::from_kv(&bad).is_err());
        let bad = KvConfig::parse("google.a9 = 1").unwrap();
        assert!(ExperimentConfig::from_kv(&bad).is_err());
    }
}
