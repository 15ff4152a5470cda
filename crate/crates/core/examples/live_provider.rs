//! Sends one prompt to a chat-completions endpoint named by a config file.
//!
//! ```text
//! PHENOFLOW_CONFIG=phenoflow.conf cargo run -p phenoflow --example live_provider
//! ```
//!
//! The config needs `provider.kind = openai`, `provider.base_url`,
//! `provider.model` and `provider.api_key_env`. Without it the example
//! prints a notice and exits.

use std::path::PathBuf;
use std::sync::Arc;

use phenoflow::config::{Config, ProviderKind};
use phenoflow::manager::{Manager, SessionConfig};
use phenoflow::toolkit::{default_registry, provider_from_config, Services};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Some(path) = std::env::var_os("PHENOFLOW_CONFIG").map(PathBuf::from) else {
        println!("set PHENOFLOW_CONFIG to a config file with provider.kind = openai");
        return Ok(());
    };
    let config = Config::load(&path)?;
    if config.provider_kind != ProviderKind::Openai {
        println!("{} does not configure a live provider", path.display());
        return Ok(());
    }
    let manager = Manager::new(Arc::new(Services::from_config(&config)?), Arc::new(default_registry()));
    let id = manager.start_session(SessionConfig::new(provider_from_config(&config)?))?;
    let status = manager.submit_user_message(&id, "List the vision models you can use, then stop.", &[])?;
    for e in manager.events(&id, 0)? {
        println!("{} {}", e.kind.as_str(), e.payload);
    }
    println!("status: {status:?}");
    Ok(())
}
