// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use serde_json::json;

use itp_core::components::{
    AuditLog, Certification, Directory, Intake, IssuanceLedger, Registration, load_logs, trace,
};
use itp_core::model::IdGenerator;
use itp_core::profiles::{
    CERTIFICATION, CLIENT_NAME, DIRECTORY_SERVICES, EMAIL, PUBLICLY_AVAILABLE, REGISTRATION, REVOCATION_PASSWORD,
    SUBJECT_DN, next_hop, validate_stage,
};
use itp_core::routing::{ComponentRegistry, ComponentRegistryEntry, ReplayStore, Router, RoutingError};
use itp_core::security::{
    KeyPairRecord, KeyUsage, Keystore, TrustStore, common_name, decrypt_field, encrypt_field, keygen, normalize_dn,
    sign, sign_message, verify_message,
};
use itp_core::{
    Application, CodecError, ComponentName, FieldName, FieldValue, Identifier, Message, SignatureScope, build_message,
    codec, parse, to_pretty,
};

use crate::{Cli, CliConfig, CliError, Command};

pub(crate) fn run(cli: Cli) -> Result<(), CliError> {
    let config = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Keygen { owner, usage, algorithm, export_public } => {
            keygen_cmd(&config, &owner, &usage, &algorithm, export_public.as_deref())
        }
        Command::Compose { profile, fields, from, to, id, out } => {
            compose(&config, &profile, &fields, &from, to.as_deref(), id.as_deref(), out.as_deref())
        }
        Command::Sign { file, signer, fields, message, application, out } => {
            sign_cmd(&config, &file, &signer, &fields, message, application.as_deref(), out.as_deref())
        }
        Command::Verify { file, trust } => verify(&config, &file, trust.as_deref()),
        Command::EncryptField { file, field, recipient, application, trust, out } => {
            encrypt(&config, &file, &field, &recipient, application.as_deref(), trust.as_deref(), out.as_deref())
        }
        Command::DecryptField { file, field, application, out } => {
            decrypt(&config, &file, &field, application.as_deref(), out.as_deref())
        }
        Command::Send { file, address, transport } => send(&config, &file, address, transport.as_deref()),
        Command::Receive { component, timeout, out } => receive(&config, &component, timeout, out.as_deref()),
        Command::Inspect { file } => {
            print!("{}", to_pretty(&read_message(&file)?)?);
            Ok(())
        }
        Command::Validate { file, stage } => validate(&config, &file, stage.as_deref()),
        Command::Trace { id, audit } => trace_cmd(&config, &id, audit.as_deref()),
        Command::RunComponent { name, role, signer, max_messages, idle_timeout, intake, out } => run_component(
            &config,
            &name,
            role.as_deref(),
            signer.as_deref(),
            max_messages,
            idle_timeout,
            intake.as_deref(),
            out.as_deref(),
        ),
        Command::RunScenario { workdir, .. } => run_scenario(&workdir),
    }
}

// ---------------------------------------------------------------------------
// Helpers

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_message(path: &Path) -> Result<Message, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    parse(&bytes).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path)).map_err(|e| io_err(path, e))
}

/// Pretty form to `out`, or to stdout.
fn emit(msg: &Message, out: Option<&Path>) -> Result<(), CliError> {
    let text = to_pretty(msg)?;
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn component(name: &str) -> Result<ComponentName, CliError> {
    ComponentName::new(name).map_err(|e| CliError::Usage(e.to_string()))
}

fn identifier(id: &str) -> Result<Identifier, CliError> {
    Identifier::new(id).map_err(|e| CliError::Usage(e.to_string()))
}

/// `name=value` lines; blank lines and `#` comments are skipped.
fn read_field_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((name, value)) = line.split_once('=') else {
            return Err(CliError::Failed(format!("{}:{}: expected name=value", path.display(), i + 1)));
        };
        out.push((name.trim().to_owned(), value.to_owned()));
    }
    Ok(out)
}

fn load_trust(config: &CliConfig, trust: Option<&Path>) -> Result<TrustStore, CliError> {
    let keys = match trust {
        Some(p) if !p.is_file() => return Err(CliError::Io(format!("{}: no such trust file", p.display()))),
        Some(p) => Keystore::load(p)?,
        None => config.keystore()?,
    };
    Ok(keys.trust_store())
}

fn selected<'a>(msg: &'a mut Message, application: Option<&str>) -> Result<Vec<&'a mut Application>, CliError> {
    let apps: Vec<&mut Application> =
        msg.applications.iter_mut().filter(|a| application.is_none_or(|id| a.id.as_str() == id)).collect();
    if apps.is_empty() {
        return Err(CliError::Failed(format!("no application {}", application.unwrap_or_default())));
    }
    Ok(apps)
}

// ---------------------------------------------------------------------------
// Keys and messages

fn keygen_cmd(
    config: &CliConfig,
    owner: &str,
    usage: &str,
    algorithm: &str,
    export_public: Option<&Path>,
) -> Result<(), CliError> {
    let usage: KeyUsage =
        usage.parse().map_err(|e: itp_core::security::SecurityError| CliError::Usage(e.to_string()))?;
    let mut keys = config.keystore()?;
    let existing = keys
        .records()
        .iter()
        .find(|r| {
            r.private.is_some()
                && r.usage == usage
                && r.algorithm.id() == algorithm
                && normalize_dn(&r.owner) == normalize_dn(owner)
        })
        .cloned();
    let created = existing.is_none();
    let record = match existing {
        Some(r) => r,
        None => {
            let r = keygen(algorithm, owner, usage).map_err(|e| CliError::Usage(e.to_string()))?;
            keys.insert(r.clone())?;
            keys.save(&config.keystore)?;
            r
        }
    };
    if let Some(path) = export_public {
        let mut trust = Keystore::load(path)?;
        if trust.get(&record.key_id).is_none() {
            trust.insert(record.public_only())?;
            trust.save(path)?;
        }
    }
    println!(
        "{}",
        json!({
            "key_id": record.key_id,
            "algorithm": record.algorithm.id(),
            "usage": record.usage.id(),
            "owner": record.owner,
            "created": created,
        })
    );
    Ok(())
}

fn compose(
    config: &CliConfig,
    profile: &str,
    fields: &Path,
    from: &str,
    to: Option<&str>,
    id: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let profiles = config.profiles()?;
    let spec = profiles.get(profile)?;
    let sender = component(from)?;
    let recipient = match to {
        Some(to) => component(to)?,
        None => next_hop(spec, &sender)?
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("{from} is the last stage of {profile}; pass --to")))?,
    };
    let ids = IdGenerator::new();
    let app_id = match id {
        Some(id) => identifier(id)?,
        None => ids.next(Utc::now()),
    };
    let mut app = Application::new(app_id, spec.id.clone());
    for (name, value) in read_field_file(fields)? {
        app = app.with_field(&name, value)?;
    }
    let msg = build_message(ids.next(Utc::now()), sender, recipient, vec![app.settled()])?;
    emit(&msg, out)
}

fn signing_key(config: &CliConfig, dn: &str) -> Result<KeyPairRecord, CliError> {
    config
        .keystore()?
        .signing_key_for(dn, KeyUsage::OperationalSigning)
        .cloned()
        .ok_or_else(|| CliError::Failed(format!("no operational-signing key with a private part for {dn}")))
}

fn sign_cmd(
    config: &CliConfig,
    file: &Path,
    signer: &str,
    fields: &[String],
    message: bool,
    application: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let key = signing_key(config, signer)?;
    let mut msg = read_message(file)?;
    let now = Utc::now();
    let (mut signed, mut skipped) = (0, 0);
    if message {
        if msg.signatures.iter().any(|b| b.key_id == key.key_id) {
            skipped += 1;
        } else {
            msg = sign_message(&msg, &key, signer, now)?;
            signed += 1;
        }
    } else {
        let scope = if fields.is_empty() {
            SignatureScope::All
        } else {
            SignatureScope::Fields(
                fields
                    .iter()
                    .map(|f| FieldName::new(f.trim()))
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        };
        for app in selected(&mut msg, application)? {
            if app.signatures.iter().any(|b| b.key_id == key.key_id && b.scope == scope) {
                skipped += 1;
                continue;
            }
            *app = sign(app, scope.clone(), &key, signer, now)?;
            signed += 1;
        }
    }
    write_atomic(out.unwrap_or(file), to_pretty(&msg)?.as_bytes())?;
    println!("{}", json!({ "key_id": key.key_id, "signed": signed, "skipped": skipped }));
    Ok(())
}

fn verify(config: &CliConfig, file: &Path, trust: Option<&Path>) -> Result<(), CliError> {
    let msg = read_message(file)?;
    let report = verify_message(&msg, &load_trust(config, trust)?);
    print!("{report}");
    if report.overall() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{}: signature verification failed", file.display())))
    }
}

fn encrypt(
    config: &CliConfig,
    file: &Path,
    field: &str,
    recipient: &str,
    application: Option<&str>,
    trust: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let trust = load_trust(config, trust)?;
    let key = match trust.get(recipient) {
        Some(k) => k.clone(),
        None => trust
            .by_owner(recipient)
            .into_iter()
            .find(|k| k.usage == KeyUsage::Encryption)
            .cloned()
            .ok_or_else(|| CliError::Failed(format!("no encryption key {recipient}")))?,
    };
    let mut msg = read_message(file)?;
    let mut count = 0;
    for app in selected(&mut msg, application)? {
        match app.get_field(field) {
            None => continue,
            // Already sealed for this key: retrying is a no-op.
            Some(FieldValue::Encrypted(e)) if e.recipient_key_id == key.key_id => continue,
            _ => {}
        }
        *app = encrypt_field(app, field, &key)?;
        count += 1;
    }
    write_atomic(out.unwrap_or(file), to_pretty(&msg)?.as_bytes())?;
    println!("{}", json!({ "field": field, "recipient": key.key_id, "encrypted": count }));
    Ok(())
}

fn decrypt(
    config: &CliConfig,
    file: &Path,
    field: &str,
    application: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let keys = config.keystore()?;
    let mut msg = read_message(file)?;
    for app in selected(&mut msg, application)? {
        let Some(FieldValue::Encrypted(enc)) = app.get_field(field) else { continue };
        let key = keys
            .get(&enc.recipient_key_id)
            .filter(|k| k.private.is_some())
            .ok_or_else(|| CliError::Failed(format!("keystore lacks private key {}", enc.recipient_key_id)))?;
        *app = decrypt_field(app, field, key)?;
        println!("{}", json!({ "application": app.id.as_str(), "field": field, "value": app.text(field) }));
    }
    if let Some(out) = out {
        write_atomic(out, to_pretty(&msg)?.as_bytes())?;
    }
    Ok(())
}

fn validate(config: &CliConfig, file: &Path, stage: Option<&str>) -> Result<(), CliError> {
    let bytes = fs::read(file).map_err(|e| io_err(file, e))?;
    let msg = match parse(&bytes) {
        Ok(msg) => msg,
        Err(CodecError::SchemaViolations(vs)) => {
            for v in &vs {
                println!("{v}");
            }
            return Err(CliError::Failed(format!("{}: {} schema violations", file.display(), vs.len())));
        }
        Err(e) => return Err(CliError::Failed(format!("{}: {e}", file.display()))),
    };
    let mut problems = 0;
    if let Some(stage) = stage {
        let stage = component(stage)?;
        let profiles = config.profiles()?;
        for app in &msg.applications {
            for v in validate_stage(app, profiles.get(&app.profile_id)?, &stage)? {
                println!("/message/application[@id={}]: {v}", app.id);
                problems += 1;
            }
        }
    }
    if problems > 0 {
        return Err(CliError::Failed(format!("{}: {problems} stage requirements unmet", file.display())));
    }
    println!("valid");
    Ok(())
}

// ---------------------------------------------------------------------------
// Transport

fn send(config: &CliConfig, file: &Path, address: Option<String>, transport: Option<&str>) -> Result<(), CliError> {
    let msg = read_message(file)?;
    let registry = match address {
        None => config.registry()?,
        Some(address) => {
            let transport = match transport {
                Some(t) => t.parse().map_err(CliError::Usage)?,
                None => config.default_transport,
            };
            let mut r = ComponentRegistry::new();
            r.register(ComponentRegistryEntry::new(msg.recipient.clone(), transport, address))?;
            r
        }
    };
    let receipt = Router::new(registry).send(&msg)?;
    println!(
        "{}",
        json!({
            "message_id": receipt.message_id.as_str(),
            "recipient": receipt.recipient.as_str(),
            "transport": receipt.transport.id(),
            "delivered_at": codec::format_timestamp(&receipt.delivered_at),
        })
    );
    Ok(())
}

fn seconds(s: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(s).map_err(|e| CliError::Usage(format!("timeout {s}: {e}")))
}

fn receive(config: &CliConfig, name: &str, timeout: f64, out: Option<&Path>) -> Result<(), CliError> {
    let name = component(name)?;
    let router = Router::new(config.registry()?);
    router.listen(&name)?;
    match router.receive(&name, seconds(timeout)?)? {
        Some(msg) => emit(&msg, out),
        None => Err(CliError::Io(format!("nothing arrived for {name} within {timeout}s"))),
    }
}

// ---------------------------------------------------------------------------
// Audit

fn trace_cmd(config: &CliConfig, id: &str, audit: Option<&Path>) -> Result<(), CliError> {
    let id = identifier(id)?;
    let path = audit.unwrap_or(&config.audit_log);
    if !path.exists() {
        return Err(CliError::Io(format!("{}: no audit log", path.display())));
    }
    let logs = load_logs(path)?;
    let events = trace(logs.iter().map(Vec::as_slice), &id);
    if events.is_empty() {
        return Err(CliError::Failed(format!("no audit events mention {id}")));
    }
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for e in &events {
        let line = json!({
            "at": e.at.to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            "component": e.component.as_str(),
            "sequence": e.sequence,
            "kind": e.kind.id(),
            "message": e.message_id.as_ref().map(Identifier::as_str),
            "application": e.application_id.as_ref().map(Identifier::as_str),
            "actors": e.actors,
            "detail": e.detail,
        });
        writeln!(w, "{line}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Components

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Registration,
    Certification,
    Directory,
}

fn role_of(name: &str, role: Option<&str>) -> Result<Role, CliError> {
    let role = match role {
        Some(r) => r.to_ascii_lowercase(),
        None if name == REGISTRATION => "registration".into(),
        None if name == CERTIFICATION => "certification".into(),
        None if name == DIRECTORY_SERVICES => "directory".into(),
        None => return Err(CliError::Usage(format!("cannot tell what {name} does; pass --role"))),
    };
    match role.as_str() {
        "registration" => Ok(Role::Registration),
        "certification" => Ok(Role::Certification),
        "directory" => Ok(Role::Directory),
        other => Err(CliError::Usage(format!("unknown role {other:?}"))),
    }
}

/// The operational key named by `--as`, or else the one whose CN is the
/// component name.
fn component_key(keys: &Keystore, name: &ComponentName, signer: Option<&str>) -> Result<KeyPairRecord, CliError> {
    let found = match signer {
        Some(dn) => keys.signing_key_for(dn, KeyUsage::OperationalSigning),
        None => keys.records().iter().find(|r| {
            r.usage == KeyUsage::OperationalSigning
                && r.private.is_some()
                && common_name(&r.owner) == Some(name.as_str())
        }),
    };
    found
        .cloned()
        .ok_or_else(|| CliError::Failed(format!("no operational-signing key for {}", signer.unwrap_or(name.as_str()))))
}

fn intake_from(path: &Path) -> Result<Intake, CliError> {
    let fields = read_field_file(path)?;
    let get = |name: &str| fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone());
    let missing: Vec<&str> = [SUBJECT_DN, CLIENT_NAME, REVOCATION_PASSWORD, EMAIL, PUBLICLY_AVAILABLE]
        .into_iter()
        .filter(|n| get(n).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Failed(format!("{}: missing {}", path.display(), missing.join(", "))));
    }
    let publicly_available = match get(PUBLICLY_AVAILABLE).as_deref() {
        Some("true") => true,
        Some("false") => false,
        Some(other) => {
            return Err(CliError::Failed(format!("{PUBLICLY_AVAILABLE} must be true or false, not {other:?}")));
        }
        None => unreachable!(),
    };
    Ok(Intake {
        subject_dn: get(SUBJECT_DN).unwrap_or_default(),
        client_name: get(CLIENT_NAME).unwrap_or_default(),
        revocation_password_hash: get(REVOCATION_PASSWORD).unwrap_or_default(),
        email: get(EMAIL).unwrap_or_default(),
        publicly_available,
    })
}

enum Worker {
    Certification(Certification),
    Directory(Directory),
}

#[allow(clippy::too_many_arguments)]
fn run_component(
    config: &CliConfig,
    name: &str,
    role: Option<&str>,
    signer: Option<&str>,
    max_messages: Option<usize>,
    idle_timeout: Option<f64>,
    intake: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let role = role_of(name, role)?;
    let name = component(name)?;
    let keys = config.keystore()?;
    let profiles = config.profiles()?;
    let audit = AuditLog::open_in(&config.audit_log, name.clone())?;

    if role == Role::Registration {
        let intake = intake.ok_or_else(|| CliError::Usage("registration needs --intake".into()))?;
        let profile = profiles
            .specs()
            .find(|s| s.stages.first().is_some_and(|st| st.component == name))
            .map(|s| s.id.clone())
            .ok_or_else(|| CliError::Usage(format!("no profile starts at {name}")))?;
        let key = component_key(&keys, &name, signer)?;
        let mut registration = Registration::new(name, &profile, key, profiles, audit);
        // Credentials were checked by the operator who prepared the intake.
        let msg = registration.process(&intake_from(intake)?, |_| true, Utc::now())?;
        return emit(&msg, out);
    }

    let replay = Arc::new(ReplayStore::open(&config.replay_log)?);
    let trust = keys.trust_store();
    let mut worker = match role {
        Role::Certification => {
            let mut c = Certification::new(
                name.clone(),
                component_key(&keys, &name, signer)?,
                trust,
                profiles,
                replay,
                audit,
                IssuanceLedger::open(&config.issued_log)?,
            );
            for ca in keys.records().iter().filter(|r| r.usage == KeyUsage::CaSigning && r.private.is_some()) {
                c.add_ca(ca.clone())?;
            }
            Worker::Certification(c)
        }
        Role::Directory => Worker::Directory(Directory::new(
            name.clone(),
            trust,
            profiles,
            replay,
            audit,
            config.publication_dir.clone(),
            config.outbox.clone(),
        )),
        Role::Registration => unreachable!(),
    };

    let router = Router::new(config.registry()?);
    router.listen(&name)?;
    let idle = idle_timeout.map(seconds).transpose()?;
    let poll = Duration::from_millis(200);
    let mut handled = 0;
    let mut rejected = 0;
    let mut last_input = Instant::now();
    while max_messages.is_none_or(|m| handled < m) {
        if idle.is_some_and(|idle| last_input.elapsed() >= idle) {
            break;
        }
        let msg = match router.receive(&name, poll) {
            Ok(Some(msg)) => msg,
            Ok(None) => continue,
            Err(e @ (RoutingError::MalformedDocument(_) | RoutingError::MisroutedMessage { .. })) => {
                handled += 1;
                rejected += 1;
                last_input = Instant::now();
                println!("{}", json!({ "status": "rejected", "detail": e.to_string() }));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        handled += 1;
        last_input = Instant::now();
        let now = Utc::now();
        let outcome = match &mut worker {
            Worker::Certification(c) => c.process(&msg, now).map(|next| {
                let receipt = router.send(&next);
                json!({
                    "status": "processed",
                    "message": msg.id.as_str(),
                    "forwarded": next.id.as_str(),
                    "to": next.recipient.as_str(),
                    "delivery": receipt.as_ref().map(|_| "ok".to_owned()).unwrap_or_else(|e| e.to_string()),
                })
            }),
            Worker::Directory(d) => d.process(&msg, now).map(|records| {
                json!({
                    "status": "processed",
                    "message": msg.id.as_str(),
                    "published": records.iter().filter(|r| r.published).count(),
                    "notified": records.iter().map(|r| r.notification.email.clone()).collect::<Vec<_>>(),
                })
            }),
        };
        match outcome {
            Ok(line) => println!("{line}"),
            Err(e) => {
                rejected += 1;
                println!("{}", json!({ "status": "rejected", "message": msg.id.as_str(), "detail": e.to_string() }));
            }
        }
    }
    if rejected > 0 {
        return Err(CliError::Failed(format!("{name}: {rejected} of {handled} messages rejected")));
    }
    Ok(())
}

fn run_scenario(workdir: &Path) -> Result<(), CliError> {
    let report = itp_core::scenario::run_multicert(workdir)?;
    let app_id = report.application_id.as_str();
    let hop_has = |m: &Message, f: &str| m.applications.iter().any(|a| a.has_field(f));
    let summary = json!({
        "scenario": "multicert",
        "application_id": app_id,
        "hop1": { "path": report.hop1_path, "sender": report.hop1.sender.as_str(), "recipient": report.hop1.recipient.as_str(),
                  "application_ids": report.hop1.applications.iter().map(|a| a.id.as_str()).collect::<Vec<_>>(),
                  "has_subject_dn": hop_has(&report.hop1, SUBJECT_DN) },
        "hop2": { "path": report.hop2_path, "sender": report.hop2.sender.as_str(), "recipient": report.hop2.recipient.as_str(),
                  "application_ids": report.hop2.applications.iter().map(|a| a.id.as_str()).collect::<Vec<_>>(),
                  "has_subject_dn": hop_has(&report.hop2, SUBJECT_DN) },
        "certificates_issued": report.certificates_issued,
        "published": report.publications.iter().filter(|p| p.published).map(|p| p.certificates.len()).sum::<usize>(),
        "notifications": report.publications.iter().map(|p| p.notification.email.clone()).collect::<Vec<_>>(),
        "outbox": report.notifications,
        "trace_components": report.trace_components(),
        "trace_events": report.trace.len(),
        "operator_dns": report.operator_dns,
        "audit_chain_verified": report.chain_verified,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json values serialize"));
    if !report.chain_verified {
        return Err(CliError::Failed("audit chain does not verify".into()));
    }
    Ok(())
}
