// SPDX-License-Identifier: Apache-2.0

//! Intra-trustcenter protocol: canonical XML messages carrying form-like
//! applications between trustcenter components, with scoped signatures,
//! field encryption, replay-safe routing and declarative profiles.

pub mod codec;
pub mod components;
mod linefmt;
pub mod model;
pub mod profiles;
pub mod routing;
pub mod scenario;
pub mod security;
mod xml;

pub use codec::{CanonicalBytes, CodecError, SchemaViolation, parse, serialize, to_pretty, validate};
pub use model::{
    Application, ComponentName, EncryptedField, FieldName, FieldValue, Identifier, Message, ModelError, ProfileField,
    SignatureBlock, SignatureScope, build_message,
};
