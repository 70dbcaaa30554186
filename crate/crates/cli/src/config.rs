// SPDX-License-Identifier: Apache-2.0

//! `itp.toml`: where a deployment keeps its state. Relative paths resolve
//! against the directory holding the file; without a file, against the
//! working directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use itp_core::profiles::ProfileRegistry;
use itp_core::routing::{ComponentRegistry, TransportKind};
use itp_core::security::Keystore;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    registry: Option<PathBuf>,
    keystore: Option<PathBuf>,
    profiles: Option<PathBuf>,
    replay_log: Option<PathBuf>,
    audit_log: Option<PathBuf>,
    issued_log: Option<PathBuf>,
    publication_dir: Option<PathBuf>,
    outbox: Option<PathBuf>,
    default_transport: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub registry: PathBuf,
    pub keystore: PathBuf,
    /// Built-in profiles when unset.
    pub profiles: Option<PathBuf>,
    pub replay_log: PathBuf,
    /// Directory with one hash-chained log per component.
    pub audit_log: PathBuf,
    pub issued_log: PathBuf,
    pub publication_dir: PathBuf,
    pub outbox: PathBuf,
    pub default_transport: TransportKind,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let (raw, base) = match path {
            None => (RawConfig::default(), PathBuf::new()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                let raw: RawConfig =
                    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                (raw, p.parent().map(Path::to_owned).unwrap_or_default())
            }
        };
        let at = |v: Option<PathBuf>, default: &str| base.join(v.unwrap_or_else(|| default.into()));
        let default_transport = match raw.default_transport.as_deref() {
            None => TransportKind::File,
            Some(s) => s.parse().map_err(CliError::Usage)?,
        };
        let config = CliConfig {
            registry: at(raw.registry, "registry.txt"),
            keystore: at(raw.keystore, "keystore.keys"),
            profiles: raw.profiles.map(|p| base.join(p)),
            replay_log: at(raw.replay_log, "replay.log"),
            audit_log: at(raw.audit_log, "audit"),
            issued_log: at(raw.issued_log, "issued.log"),
            publication_dir: at(raw.publication_dir, "publication"),
            outbox: at(raw.outbox, "outbox.log"),
            default_transport,
        };
        if let Some(p) = &config.profiles
            && !p.is_file()
        {
            return Err(CliError::Usage(format!("profile config {} does not exist", p.display())));
        }
        Ok(config)
    }

    pub fn keystore(&self) -> Result<Keystore, CliError> {
        Ok(Keystore::load(&self.keystore)?)
    }

    pub fn registry(&self) -> Result<ComponentRegistry, CliError> {
        if !self.registry.is_file() {
            return Err(CliError::Usage(format!("component registry {} does not exist", self.registry.display())));
        }
        Ok(ComponentRegistry::load(&self.registry)?)
    }

    pub fn profiles(&self) -> Result<ProfileRegistry, CliError> {
        match &self.profiles {
            None => Ok(ProfileRegistry::builtin()),
            Some(p) => {
                let bytes = fs::read(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                ProfileRegistry::from_config(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("itp.toml");
        fs::write(&path, "keystore = \"keys/ks.keys\"\naudit_log = \"/var/itp/audit\"\ndefault_transport = \"tcp\"\n")
            .unwrap();
        let c = CliConfig::load(Some(&path)).unwrap();
        assert_eq!(c.keystore, dir.path().join("keys/ks.keys"));
        assert_eq!(c.audit_log, PathBuf::from("/var/itp/audit"));
        assert_eq!(c.replay_log, dir.path().join("replay.log"));
        assert_eq!(c.default_transport, TransportKind::Tcp);
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("itp.toml");
        fs::write(&path, "keystroke = \"x\"\n").unwrap();
        assert!(matches!(CliConfig::load(Some(&path)), Err(CliError::Usage(_))));
        fs::write(&path, "profiles = \"missing.xml\"\n").unwrap();
        assert!(matches!(CliConfig::load(Some(&path)), Err(CliError::Usage(_))));
        fs::write(&path, "default_transport = \"pigeon\"\n").unwrap();
        assert!(matches!(CliConfig::load(Some(&path)), Err(CliError::Usage(_))));
        assert!(matches!(CliConfig::load(Some(&dir.path().join("none.toml"))), Err(CliError::Io(_))));
    }
}
