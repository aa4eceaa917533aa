use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use perfpower_core::{ConfigError, KvConfig};

/// Settings read from the `service.*` keys of a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub api_read_key: String,
    pub rate_per_second: f64,
    pub rate_burst: f64,
    pub store_path: PathBuf,
    /// 0 syncs after every write.
    pub fsync_interval_ms: u64,
    /// Take the client address from `X-Forwarded-For` (only behind a trusted proxy).
    pub trust_forwarded_for: bool,
}

impl ServiceConfig {
    pub fn new(api_read_key: impl Into<String>, store_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            api_read_key: api_read_key.into(),
            rate_per_second: 50.0,
            rate_burst: 100.0,
            store_path: store_path.into(),
            fsync_interval_ms: 1000,
            trust_forwarded_for: false,
        }
    }

    pub fn from_kv(cfg: &KvConfig) -> Result<Self, ConfigError> {
        let key = cfg
            .get("service.apiReadKey")
            .ok_or_else(|| ConfigError::invalid("service.apiReadKey", "required"))?;
        let mut out = ServiceConfig::new(key, cfg.get("service.storePath").unwrap_or("events.store"));
        out.listen = cfg.parsed_or("service.listen", out.listen)?;
        out.rate_per_second = cfg.parsed_or("service.rateLimit.perSecond", out.rate_per_second)?;
        out.rate_burst = cfg.parsed_or("service.rateLimit.burst", out.rate_burst)?;
        out.fsync_interval_ms = cfg.parsed_or("service.fsyncIntervalMs", out.fsync_interval_ms)?;
        out.trust_forwarded_for = cfg.parsed_or("service.trustForwardedFor", false)?;
        out.validate()?;
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_kv(&KvConfig::load(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.api_read_key.trim().is_empty() {
            return Err(ConfigError::invalid("service.apiReadKey", "must not be empty"));
        }
        if !(self.rate_per_second > 0.0 && self.rate_per_second.is_finite()) {
            return Err(ConfigError::invalid("service.rateLimit.perSecond", "must be positive"));
        }
        if !(self.rate_burst >= 1.0 && self.rate_burst.is_finite()) {
            return Err(ConfigError::invalid("service.rateLimit.burst", "must be at least 1"));
        }
        Ok(())
    }
}
