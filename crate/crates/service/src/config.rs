use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_PORT: &str = "CYPUR_PORT";
pub const ENV_MODEL_DIR: &str = "CYPUR_MODEL_DIR";
pub const ENV_RELOAD_SECRET: &str = "CYPUR_RELOAD_SECRET";

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 5 * 1024 * 1024;
pub const DEFAULT_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: IpAddr,
    pub port: u16,
    /// Directory holding persisted models. `None` serves only the built-in regression model.
    pub model_dir: Option<PathBuf>,
    pub max_upload_bytes: usize,
    pub request_timeout_secs: u64,
    /// Shared secret for `POST /api/v1/reload`; the endpoint is disabled when unset.
    pub reload_secret: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            model_dir: None,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            request_timeout_secs: DEFAULT_TIMEOUT_SECS,
            reload_secret: None,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.port == 0 {
            return Err(ServiceError::Config("port must be in 1..=65535".into()));
        }
        if self.max_upload_bytes == 0 {
            return Err(ServiceError::Config("max_upload_bytes must be > 0".into()));
        }
        if self.request_timeout_secs == 0 {
            return Err(ServiceError::Config("request_timeout_secs must be > 0".into()));
        }
        if self.reload_secret.as_deref() == Some("") {
            return Err(ServiceError::Config("reload_secret must not be empty".into()));
        }
        Ok(())
    }

    /// Overrides fields from `CYPUR_PORT`, `CYPUR_MODEL_DIR` and `CYPUR_RELOAD_SECRET`.
    pub fn apply_env(mut self) -> Result<Self, ServiceError> {
        self.apply_vars(|k| std::env::var(k).ok())?;
        Ok(self)
    }

    fn apply_vars(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(port) = get(ENV_PORT) {
            self.port = port
                .trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_PORT}={port} is not a port number")))?;
        }
        if let Some(dir) = get(ENV_MODEL_DIR) {
            self.model_dir = Some(PathBuf::from(dir));
        }
        if let Some(secret) = get(ENV_RELOAD_SECRET) {
            self.reload_secret = Some(secret);
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        serde_json::from_str(text).map_err(|e| ServiceError::Config(format!("config file: {e}")))
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }
}
