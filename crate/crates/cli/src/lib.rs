// SPDX-License-Identifier: Apache-2.0

//! The `itp` command line. Every subcommand is non-interactive; results go
//! to stdout, diagnostics to stderr, and the exit status says which kind of
//! failure happened.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use itp_core::components::ComponentError;
use itp_core::profiles::ProfileError;
use itp_core::routing::RoutingError;
use itp_core::security::SecurityError;
use itp_core::{CodecError, ModelError};

mod commands;
pub mod config;

pub use config::CliConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration.
    #[error("{0}")]
    Usage(String),
    /// The input was read but does not validate, verify or authorize.
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Failed(_) => EXIT_FAILED,
            Self::Io(_) => EXIT_IO,
        }
    }
}

impl From<SecurityError> for CliError {
    fn from(e: SecurityError) -> Self {
        match e {
            SecurityError::Io(_) => Self::Io(e.to_string()),
            _ => Self::Failed(e.to_string()),
        }
    }
}

impl From<RoutingError> for CliError {
    fn from(e: RoutingError) -> Self {
        match e {
            RoutingError::TransportFailure(_) | RoutingError::StorePersistenceFailure(_) => Self::Io(e.to_string()),
            RoutingError::Registry { .. } | RoutingError::DuplicateComponentName(_) => Self::Usage(e.to_string()),
            _ => Self::Failed(e.to_string()),
        }
    }
}

impl From<ComponentError> for CliError {
    fn from(e: ComponentError) -> Self {
        match e {
            ComponentError::Io(_) => Self::Io(e.to_string()),
            ComponentError::Routing(e) => e.into(),
            ComponentError::Security(e) => e.into(),
            _ => Self::Failed(e.to_string()),
        }
    }
}

macro_rules! failed_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Failed(e.to_string())
            }
        }
    )*};
}

failed_from!(CodecError, ModelError, ProfileError);

#[derive(Debug, Parser)]
#[command(name = "itp", version, about = "Intra-trustcenter protocol tool")]
pub struct Cli {
    /// Deployment configuration (TOML).
    #[arg(long, global = true, env = "ITP_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair into the keystore; reuses an existing one.
    Keygen {
        #[arg(long)]
        owner: String,
        #[arg(long, default_value = "operational-signing")]
        usage: String,
        #[arg(long, default_value = itp_core::security::ED25519)]
        algorithm: String,
        /// Also add the public half to this trust file.
        #[arg(long)]
        export_public: Option<PathBuf>,
    },
    /// Build an unsigned message from a `name=value` field file.
    Compose {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        fields: PathBuf,
        #[arg(long)]
        from: String,
        /// Defaults to the stage after `--from` in the profile.
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Add a signature; repeating the same signature is a no-op.
    Sign {
        file: PathBuf,
        /// Subject DN whose operational key signs.
        #[arg(long = "as")]
        signer: String,
        /// Sign only these fields.
        #[arg(long, value_delimiter = ',')]
        fields: Vec<String>,
        /// Sign the message envelope instead of its applications.
        #[arg(long, conflicts_with = "fields")]
        message: bool,
        #[arg(long)]
        application: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Verify every signature; exit 1 unless all hold.
    Verify {
        file: PathBuf,
        /// Keystore file used as the trust store; defaults to the keystore.
        #[arg(long)]
        trust: Option<PathBuf>,
    },
    EncryptField {
        file: PathBuf,
        #[arg(long)]
        field: String,
        /// Key id or owner DN of an encryption key.
        #[arg(long)]
        recipient: String,
        #[arg(long)]
        application: Option<String>,
        #[arg(long)]
        trust: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the plaintext; with `--out`, also write the decrypted message.
    DecryptField {
        file: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long)]
        application: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Deliver to the recipient named in the message.
    Send {
        file: PathBuf,
        /// Bypass the registry.
        #[arg(long)]
        address: Option<String>,
        #[arg(long, requires = "address")]
        transport: Option<String>,
    },
    Receive {
        component: String,
        #[arg(long, default_value_t = 5.0)]
        timeout: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Pretty-print a message.
    Inspect { file: PathBuf },
    /// Check structure, and with `--stage` the stage's required fields.
    Validate {
        file: PathBuf,
        #[arg(long)]
        stage: Option<String>,
    },
    /// Audit events for an application or message id across all components.
    Trace {
        id: String,
        /// Log file or directory of logs; defaults to the configured one.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Run a component: receive, admit, verify, authorize, process, forward.
    RunComponent {
        name: String,
        /// registration, certification or directory; inferred from the name.
        #[arg(long)]
        role: Option<String>,
        /// Subject DN of the component's operational key.
        #[arg(long = "as")]
        signer: Option<String>,
        /// Stop after this many messages.
        #[arg(long)]
        max_messages: Option<usize>,
        /// Stop after this many seconds without input.
        #[arg(long)]
        idle_timeout: Option<f64>,
        /// Registration: the intake field file.
        #[arg(long)]
        intake: Option<PathBuf>,
        /// Registration: where to write the request.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a canned scenario end to end and print a JSON summary.
    RunScenario {
        #[arg(value_parser = ["multicert"])]
        name: String,
        #[arg(long, default_value = "itp-multicert")]
        workdir: PathBuf,
    },
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("itp: {e}");
            e.exit_code()
        }
    }
}
