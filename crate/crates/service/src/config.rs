use std::net::SocketAddr;
use std::path::PathBuf;

use systemic_core::LayoutConfig;

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, clap::Args)]
pub struct ServiceConfig {
    /// Address to listen on.
    #[arg(long, env = "SYSTEMIC_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,

    /// Directory holding network and scenario documents.
    #[arg(long, env = "SYSTEMIC_STORE", default_value = "systemic-store")]
    pub store: PathBuf,

    /// JSON file with the default layout configuration.
    #[arg(long, env = "SYSTEMIC_LAYOUT_CONFIG")]
    pub layout_config: Option<PathBuf>,

    /// Directory of the UI bundle, served at `/`.
    #[arg(long = "static-dir", env = "SYSTEMIC_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn layout_defaults(&self) -> ApiResult<LayoutConfig> {
        let Some(path) = &self.layout_config else {
            return Ok(LayoutConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ApiError::invalid(format!("{}: {e}", path.display())))?;
        let cfg: LayoutConfig = serde_json::from_str(&text)
            .map_err(|e| ApiError::invalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
