// SPDX-License-Identifier: Apache-2.0

//! Criterion benchmarks over the request message of the MultiCert flow:
//! codec, signatures, field encryption and replay admission.

use std::hint::black_box;

use chrono::Utc;
use criterion::{BatchSize, BenchmarkId, Criterion, Throughput};

use itp_core::model::IdGenerator;
use itp_core::routing::ReplayStore;
use itp_core::security::{
    ECDSA_P256, ED25519, KeyPairRecord, KeyUsage, TrustStore, X25519_CHACHA20POLY1305, decrypt_field, encrypt_field,
    keygen, sign, verify_message,
};
use itp_core::{Application, ComponentName, Identifier, Message, SignatureScope, build_message, parse, serialize};

/// A request with `apps` applications, each carrying the five intake
/// fields and three ALL-scope signatures by `keys`.
pub fn request(apps: usize, keys: &[KeyPairRecord]) -> Message {
    let ids = IdGenerator::new();
    let applications = (0..apps)
        .map(|_| {
            let mut app = Application::new(ids.next(Utc::now()), "MultiCert")
                .with_field("clientName", "Host A")
                .and_then(|a| a.with_field("subjectDN", "CN=Alice,OU=OrgUnitName,O=OrgName,C=DE"))
                .and_then(|a| a.with_field("revocationPassword", "7c4a8 ... 8941c"))
                .and_then(|a| a.with_field("email", "alice@orgunitname.orgname.de"))
                .and_then(|a| a.with_field("publiclyAvailable", "true"))
                .expect("valid fields")
                .settled();
            for k in keys {
                app = sign(&app, SignatureScope::All, k, &k.owner, Utc::now()).expect("operational key");
            }
            app
        })
        .collect();
    build_message(
        Identifier::new("20040202164445").expect("valid id"),
        ComponentName::new("Registration").expect("valid name"),
        ComponentName::new("Certification").expect("valid name"),
        applications,
    )
    .expect("unique ids")
}

pub fn signers(algorithm: &str) -> Vec<KeyPairRecord> {
    ["CN=Registration,O=Trustcenter", "CN=Operator1,OU=Trustcenter", "CN=Operator2,OU=Trustcenter"]
        .iter()
        .map(|dn| keygen(algorithm, dn, KeyUsage::OperationalSigning).expect("signature algorithm"))
        .collect()
}

pub fn codec(c: &mut Criterion) {
    let keys = signers(ED25519);
    let mut group = c.benchmark_group("codec");
    for apps in [1, 16] {
        let msg = request(apps, &keys);
        let bytes = serialize(&msg).expect("valid model");
        group.throughput(Throughput::Bytes(bytes.as_bytes().len() as u64));
        group.bench_with_input(BenchmarkId::new("serialize", apps), &msg, |b, m| b.iter(|| serialize(black_box(m))));
        group.bench_with_input(BenchmarkId::new("parse", apps), &bytes, |b, s| {
            b.iter(|| parse(black_box(s.as_bytes())))
        });
    }
    group.finish();
}

pub fn signatures(c: &mut Criterion) {
    let mut group = c.benchmark_group("signatures");
    for algorithm in [ED25519, ECDSA_P256] {
        let keys = signers(algorithm);
        let trust: TrustStore = keys.iter().map(KeyPairRecord::public_only).collect();
        let msg = request(1, &[]);
        let app = &msg.applications[0];
        group.bench_function(BenchmarkId::new("sign", algorithm), |b| {
            b.iter(|| sign(black_box(app), SignatureScope::All, &keys[0], &keys[0].owner, Utc::now()))
        });
        let signed = request(1, &keys);
        group.bench_function(BenchmarkId::new("verify_three", algorithm), |b| {
            b.iter(|| verify_message(black_box(&signed), &trust))
        });
    }
    group.finish();
}

pub fn encryption(c: &mut Criterion) {
    let key =
        keygen(X25519_CHACHA20POLY1305, "CN=Certification,O=Trustcenter", KeyUsage::Encryption).expect("encryption");
    let app = request(1, &[]).applications.remove(0);
    let sealed = encrypt_field(&app, "revocationPassword", &key).expect("plaintext field");
    let mut group = c.benchmark_group("encryption");
    group.bench_function("encrypt_field", |b| b.iter(|| encrypt_field(black_box(&app), "revocationPassword", &key)));
    group.bench_function("decrypt_field", |b| b.iter(|| decrypt_field(black_box(&sealed), "revocationPassword", &key)));
    group.finish();
}

pub fn replay(c: &mut Criterion) {
    let here = ComponentName::new("Certification").expect("valid name");
    c.bench_function("replay/admit_fresh", |b| {
        let store = ReplayStore::in_memory();
        b.iter_batched(|| request(1, &[]), |m| store.admit(&m, &here, Utc::now()), BatchSize::SmallInput)
    });
}

pub fn benchmarks(c: &mut Criterion) {
    codec(c);
    signatures(c);
    encryption(c);
    replay(c);
}
