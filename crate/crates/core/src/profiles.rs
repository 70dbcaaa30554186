// SPDX-License-Identifier: Apache-2.0

//! Profile registry: which fields each stage needs, consumes and produces,
//! who must have signed, and where the application goes next.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::{Application, ComponentName, FieldName};
use crate::security::AuthorizationPolicy;
use crate::xml::{Element, XmlWriter, parse_document};

pub const MULTICERT: &str = "MultiCert";
pub const REGISTRATION: &str = "Registration";
pub const CERTIFICATION: &str = "Certification";
pub const DIRECTORY_SERVICES: &str = "Directory Services";

pub const CLIENT_NAME: &str = "clientName";
pub const SUBJECT_DN: &str = "subjectDN";
pub const REVOCATION_PASSWORD: &str = "revocationPassword";
pub const EMAIL: &str = "email";
pub const PUBLICLY_AVAILABLE: &str = "publiclyAvailable";
pub const ENC_CERTIFICATE: &str = "encCertificate";
pub const SIGN_CERTIFICATE: &str = "signCertificate";
pub const NON_REP_CERTIFICATE: &str = "nonRepCertificate";

pub const DEFAULT_OPERATORS: [&str; 3] = [
    "CN=Operator1,OU=Trustcenter,O=OrgName,C=DE",
    "CN=Operator2,OU=Trustcenter,O=OrgName,C=DE",
    "CN=Operator3,OU=Trustcenter,O=OrgName,C=DE",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("profile {0} is already registered")]
    DuplicateProfileId(String),
    #[error("unknown profile {0}")]
    UnknownProfile(String),
    #[error("inconsistent profile {profile}: {detail}")]
    InconsistentSpec { profile: String, detail: String },
    #[error("profile {profile} has no stage for {component}")]
    StageNotFound { profile: String, component: String },
    #[error("profile configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSpec {
    pub component: ComponentName,
    pub requires: Vec<FieldName>,
    /// Removed by this stage. Produced fields take the place of the first
    /// consumed one.
    pub consumes: Vec<FieldName>,
    pub produces: Vec<FieldName>,
    pub authorization: AuthorizationPolicy,
    /// `None` ends the pipeline.
    pub next: Option<ComponentName>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSpec {
    pub id: String,
    pub stages: Vec<StageSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageViolation {
    pub field: FieldName,
}

impl fmt::Display for StageViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} missing", self.field)
    }
}

fn names(list: &[&str]) -> Vec<FieldName> {
    list.iter().map(|n| FieldName::new(*n).expect("built-in field names are valid")).collect()
}

fn component(name: &str) -> ComponentName {
    ComponentName::new(name).expect("built-in component names are valid")
}

impl ProfileSpec {
    pub fn stage(&self, component: &ComponentName) -> Result<&StageSpec, ProfileError> {
        self.stages
            .iter()
            .find(|s| &s.component == component)
            .ok_or_else(|| ProfileError::StageNotFound { profile: self.id.clone(), component: component.to_string() })
    }

    /// Structural checks run on registration.
    pub fn check(&self) -> Result<(), ProfileError> {
        let fail = |detail: String| Err(ProfileError::InconsistentSpec { profile: self.id.clone(), detail });
        if self.id.is_empty() {
            return fail("empty profile id".into());
        }
        if self.stages.is_empty() {
            return fail("no stages".into());
        }
        let components: BTreeSet<&ComponentName> = self.stages.iter().map(|s| &s.component).collect();
        if components.len() != self.stages.len() {
            return fail("a component appears in more than one stage".into());
        }
        let mut produced: BTreeSet<&FieldName> = BTreeSet::new();
        for stage in &self.stages {
            for field in &stage.consumes {
                if !stage.requires.contains(field) && !produced.contains(field) {
                    return fail(format!(
                        "{} consumes {field} which is neither required nor produced earlier",
                        stage.component
                    ));
                }
            }
            if let Some(next) = &stage.next
                && !components.contains(next)
            {
                return fail(format!("{} forwards to unknown stage {next}", stage.component));
            }
            if !stage.authorization.is_consistent() {
                return fail(format!(
                    "{} needs {} operators but only {} are eligible",
                    stage.component,
                    stage.authorization.required_operators,
                    stage.authorization.eligible_operators.len()
                ));
            }
            produced.extend(stage.produces.iter());
        }
        let order = self.walk();
        let terminates = order.last().is_some_and(|s| s.next.is_none());
        if order.len() != self.stages.len() || !terminates {
            return fail("walking next hops from the first stage does not visit every stage exactly once".into());
        }
        Ok(())
    }

    /// Stages in next-hop order from the first one, stopping at a terminal
    /// stage or before the first revisit.
    pub fn walk(&self) -> Vec<&StageSpec> {
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        let mut current = self.stages.first();
        while let Some(stage) = current {
            if !seen.insert(&stage.component) {
                break;
            }
            order.push(stage);
            current = stage.next.as_ref().and_then(|n| self.stages.iter().find(|s| &s.component == n));
        }
        order
    }

    /// Field names an application carries when it arrives at `component`,
    /// simulating every earlier stage in pipeline order.
    pub fn input_fields(&self, component: &ComponentName) -> Result<Vec<FieldName>, ProfileError> {
        self.stage(component)?;
        let mut fields: Vec<FieldName> = Vec::new();
        for stage in self.walk() {
            if &stage.component == component {
                return Ok(fields);
            }
            fields = apply_stage(&fields, stage);
        }
        Err(ProfileError::StageNotFound { profile: self.id.clone(), component: component.to_string() })
    }
}

fn apply_stage(fields: &[FieldName], stage: &StageSpec) -> Vec<FieldName> {
    let mut out = Vec::new();
    let mut pending = Some(&stage.produces);
    for f in fields {
        if stage.consumes.contains(f) {
            if let Some(p) = pending.take() {
                out.extend(p.iter().cloned());
            }
        } else if !stage.produces.contains(f) {
            out.push(f.clone());
        }
    }
    if let Some(p) = pending {
        out.retain(|f| !p.contains(f));
        out.extend(p.iter().cloned());
    }
    out
}

/// Required fields of `component`'s stage that `app` lacks.
pub fn validate_stage(
    app: &Application,
    spec: &ProfileSpec,
    component: &ComponentName,
) -> Result<Vec<StageViolation>, ProfileError> {
    let stage = spec.stage(component)?;
    Ok(stage
        .requires
        .iter()
        .filter(|f| !app.has_field(f.as_str()))
        .map(|f| StageViolation { field: f.clone() })
        .collect())
}

pub fn next_hop<'s>(
    spec: &'s ProfileSpec,
    component: &ComponentName,
) -> Result<Option<&'s ComponentName>, ProfileError> {
    Ok(spec.stage(component)?.next.as_ref())
}

/// The certification pipeline: Registration collects five fields,
/// Certification swaps the subject DN for three certificates under dual
/// operator control, Directory Services publishes.
pub fn multicert(operators: &[&str]) -> ProfileSpec {
    let policy = |stage: &str, components: &[&str], required_operators: usize| AuthorizationPolicy {
        profile_id: MULTICERT.into(),
        stage: stage.into(),
        required_components: components.iter().map(|c| component(c)).collect(),
        required_operators,
        eligible_operators: if required_operators > 0 {
            operators.iter().map(|s| s.to_string()).collect()
        } else {
            BTreeSet::new()
        },
    };
    let intake = [CLIENT_NAME, SUBJECT_DN, REVOCATION_PASSWORD, EMAIL, PUBLICLY_AVAILABLE];
    ProfileSpec {
        id: MULTICERT.into(),
        stages: vec![
            StageSpec {
                component: component(REGISTRATION),
                requires: Vec::new(),
                consumes: Vec::new(),
                produces: names(&intake),
                authorization: policy(REGISTRATION, &[], 0),
                next: Some(component(CERTIFICATION)),
            },
            StageSpec {
                component: component(CERTIFICATION),
                requires: names(&intake),
                consumes: names(&[SUBJECT_DN]),
                produces: names(&[ENC_CERTIFICATE, SIGN_CERTIFICATE, NON_REP_CERTIFICATE]),
                authorization: policy(CERTIFICATION, &[REGISTRATION], 2),
                next: Some(component(DIRECTORY_SERVICES)),
            },
            StageSpec {
                component: component(DIRECTORY_SERVICES),
                requires: names(&[ENC_CERTIFICATE, SIGN_CERTIFICATE, NON_REP_CERTIFICATE, EMAIL, PUBLICLY_AVAILABLE]),
                consumes: Vec::new(),
                produces: Vec::new(),
                authorization: policy(DIRECTORY_SERVICES, &[CERTIFICATION], 0),
                next: None,
            },
        ],
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProfileRegistry {
    specs: BTreeMap<String, ProfileSpec>,
}

impl ProfileRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding MultiCert with the default operators.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        r.register(multicert(&DEFAULT_OPERATORS)).expect("built-in profile is consistent");
        r
    }

    pub fn register(&mut self, spec: ProfileSpec) -> Result<(), ProfileError> {
        if self.specs.contains_key(&spec.id) {
            return Err(ProfileError::DuplicateProfileId(spec.id));
        }
        spec.check()?;
        self.specs.insert(spec.id.clone(), spec);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&ProfileSpec, ProfileError> {
        self.specs.get(id).ok_or_else(|| ProfileError::UnknownProfile(id.to_owned()))
    }

    pub fn specs(&self) -> impl Iterator<Item = &ProfileSpec> {
        self.specs.values()
    }

    /// Loads every `<profileSpec>` of a configuration document.
    pub fn from_config(bytes: &[u8]) -> Result<Self, ProfileError> {
        let mut r = Self::new();
        for spec in parse_config(bytes)? {
            r.register(spec)?;
        }
        Ok(r)
    }

    pub fn to_config(&self) -> String {
        render_config(self.specs.values())
    }
}

fn config_err(detail: impl Into<String>) -> ProfileError {
    ProfileError::Config(detail.into())
}

fn only_attrs(e: &Element, allowed: &[&str]) -> Result<(), ProfileError> {
    match e.attrs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(config_err(format!("<{}> has unknown attribute {k}", e.name))),
        None => Ok(()),
    }
}

fn leaf_text(e: &Element) -> Result<String, ProfileError> {
    only_attrs(e, &[])?;
    e.text().map(|t| t.trim().to_owned()).ok_or_else(|| config_err(format!("<{}> must hold text only", e.name)))
}

fn parse_stage(profile: &str, e: &Element) -> Result<StageSpec, ProfileError> {
    only_attrs(e, &["component", "next"])?;
    let component = ComponentName::new(e.attr("component").ok_or_else(|| config_err("<stage> needs a component"))?)
        .map_err(|err| config_err(err.to_string()))?;
    let next = e.attr("next").map(|n| ComponentName::new(n).map_err(|err| config_err(err.to_string()))).transpose()?;
    let mut stage = StageSpec {
        authorization: AuthorizationPolicy::open(profile, component.as_str()),
        component,
        requires: Vec::new(),
        consumes: Vec::new(),
        produces: Vec::new(),
        next,
    };
    let field = |child: &Element| FieldName::new(leaf_text(child)?).map_err(|err| config_err(err.to_string()));
    for child in e.elements() {
        match child.name.as_str() {
            "requires" => stage.requires.push(field(child)?),
            "consumes" => stage.consumes.push(field(child)?),
            "produces" => stage.produces.push(field(child)?),
            "authorization" => {
                only_attrs(child, &["operators"])?;
                let policy = &mut stage.authorization;
                policy.required_operators = match child.attr("operators") {
                    Some(n) => n.parse().map_err(|_| config_err(format!("operators={n:?} is not a count")))?,
                    None => 0,
                };
                for entry in child.elements() {
                    match entry.name.as_str() {
                        "component" => policy
                            .required_components
                            .push(ComponentName::new(leaf_text(entry)?).map_err(|err| config_err(err.to_string()))?),
                        "operator" => {
                            policy.eligible_operators.insert(leaf_text(entry)?);
                        }
                        other => return Err(config_err(format!("unexpected <{other}> in <authorization>"))),
                    }
                }
            }
            other => return Err(config_err(format!("unexpected <{other}> in <stage>"))),
        }
    }
    Ok(stage)
}

fn parse_config(bytes: &[u8]) -> Result<Vec<ProfileSpec>, ProfileError> {
    let root = parse_document(bytes).map_err(|e| config_err(e.0))?;
    if root.name != "profiles" {
        return Err(config_err(format!("root element must be <profiles>, found <{}>", root.name)));
    }
    let mut specs = Vec::new();
    for p in root.elements() {
        if p.name != "profileSpec" {
            return Err(config_err(format!("unexpected <{}> in <profiles>", p.name)));
        }
        only_attrs(p, &["id"])?;
        let id = p.attr("id").ok_or_else(|| config_err("<profileSpec> needs an id"))?.to_owned();
        let mut stages = Vec::new();
        for s in p.elements() {
            if s.name != "stage" {
                return Err(config_err(format!("unexpected <{}> in <profileSpec>", s.name)));
            }
            stages.push(parse_stage(&id, s)?);
        }
        specs.push(ProfileSpec { id, stages });
    }
    Ok(specs)
}

fn render_config<'a>(specs: impl Iterator<Item = &'a ProfileSpec>) -> String {
    let mut w = XmlWriter::pretty();
    w.open("profiles", &[]);
    for spec in specs {
        w.open("profileSpec", &[("id", &spec.id)]);
        for stage in &spec.stages {
            let mut attrs = vec![("component", stage.component.as_str())];
            if let Some(next) = &stage.next {
                attrs.push(("next", next.as_str()));
            }
            w.open("stage", &attrs);
            for (tag, list) in
                [("requires", &stage.requires), ("consumes", &stage.consumes), ("produces", &stage.produces)]
            {
                for f in list {
                    w.leaf(tag, &[], f.as_str());
                }
            }
            let policy = &stage.authorization;
            if !policy.required_components.is_empty()
                || policy.required_operators > 0
                || !policy.eligible_operators.is_empty()
            {
                let count = policy.required_operators.to_string();
                w.open("authorization", &[("operators", &count)]);
                for c in &policy.required_components {
                    w.leaf("component", &[], c.as_str());
                }
                for op in &policy.eligible_operators {
                    w.leaf("operator", &[], op);
                }
                w.close("authorization");
            }
            w.close("stage");
        }
        w.close("profileSpec");
    }
    w.close("profiles");
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Identifier;

    fn c(s: &str) -> ComponentName {
        component(s)
    }

    fn fig2_app() -> Application {
        Application::new(Identifier::new("20040202164832").unwrap(), MULTICERT)
            .with_field(CLIENT_NAME, "Host A")
            .and_then(|a| a.with_field(SUBJECT_DN, "CN=Alice,OU=OrgUnitName,O=OrgName,C=DE"))
            .and_then(|a| a.with_field(REVOCATION_PASSWORD, "7c4a8 ... 8941c"))
            .and_then(|a| a.with_field(EMAIL, "alice@orgunitname.orgname.de"))
            .and_then(|a| a.with_field(PUBLICLY_AVAILABLE, "true"))
            .unwrap()
    }

    fn revoke_cert() -> ProfileSpec {
        ProfileSpec {
            id: "RevokeCert".into(),
            stages: vec![
                StageSpec {
                    component: c(REGISTRATION),
                    requires: Vec::new(),
                    consumes: Vec::new(),
                    produces: names(&["serial", "reason"]),
                    authorization: AuthorizationPolicy::open("RevokeCert", REGISTRATION),
                    next: Some(c(CERTIFICATION)),
                },
                StageSpec {
                    component: c(CERTIFICATION),
                    requires: names(&["serial", "reason"]),
                    consumes: Vec::new(),
                    produces: names(&["crl"]),
                    authorization: AuthorizationPolicy::open("RevokeCert", CERTIFICATION),
                    next: None,
                },
            ],
        }
    }

    #[test]
    fn registry_semantics() {
        let mut r = ProfileRegistry::builtin();
        assert_eq!(r.get(MULTICERT).unwrap().stages.len(), 3);
        r.register(revoke_cert()).unwrap();
        assert!(r.get("RevokeCert").is_ok());
        assert_eq!(r.register(multicert(&DEFAULT_OPERATORS)), Err(ProfileError::DuplicateProfileId(MULTICERT.into())));
        assert!(matches!(r.get("Nope"), Err(ProfileError::UnknownProfile(_))));
    }

    #[test]
    fn stage_validation() {
        let spec = multicert(&DEFAULT_OPERATORS);
        assert!(validate_stage(&fig2_app(), &spec, &c(CERTIFICATION)).unwrap().is_empty());
        let without = fig2_app().remove_field(SUBJECT_DN);
        let v = validate_stage(&without, &spec, &c(CERTIFICATION)).unwrap();
        assert_eq!(v.iter().map(ToString::to_string).collect::<Vec<_>>(), ["subjectDN missing"]);
        assert!(matches!(validate_stage(&fig2_app(), &spec, &c("Archive")), Err(ProfileError::StageNotFound { .. })));
    }

    #[test]
    fn next_hops() {
        let spec = multicert(&DEFAULT_OPERATORS);
        assert_eq!(next_hop(&spec, &c(REGISTRATION)).unwrap(), Some(&c(CERTIFICATION)));
        assert_eq!(next_hop(&spec, &c(CERTIFICATION)).unwrap(), Some(&c(DIRECTORY_SERVICES)));
        assert_eq!(next_hop(&spec, &c(DIRECTORY_SERVICES)).unwrap(), None);
    }

    #[test]
    fn field_flow_matches_the_two_hops() {
        let spec = multicert(&DEFAULT_OPERATORS);
        let at_cert: Vec<String> =
            spec.input_fields(&c(CERTIFICATION)).unwrap().iter().map(ToString::to_string).collect();
        assert_eq!(at_cert, [CLIENT_NAME, SUBJECT_DN, REVOCATION_PASSWORD, EMAIL, PUBLICLY_AVAILABLE]);
        let at_dir: Vec<String> =
            spec.input_fields(&c(DIRECTORY_SERVICES)).unwrap().iter().map(ToString::to_string).collect();
        assert_eq!(
            at_dir,
            [
                CLIENT_NAME,
                ENC_CERTIFICATE,
                SIGN_CERTIFICATE,
                NON_REP_CERTIFICATE,
                REVOCATION_PASSWORD,
                EMAIL,
                PUBLICLY_AVAILABLE
            ]
        );
    }

    #[test]
    fn inconsistent_specs_rejected() {
        let mut cyclic = revoke_cert();
        cyclic.stages[1].next = Some(c(REGISTRATION));
        assert!(matches!(cyclic.check(), Err(ProfileError::InconsistentSpec { .. })));

        let mut dangling = revoke_cert();
        dangling.stages[1].next = Some(c("Archive"));
        assert!(matches!(dangling.check(), Err(ProfileError::InconsistentSpec { .. })));

        let mut unreachable = revoke_cert();
        unreachable.stages[0].next = None;
        assert!(matches!(unreachable.check(), Err(ProfileError::InconsistentSpec { .. })));

        let mut consumes_unknown = revoke_cert();
        consumes_unknown.stages[1].consumes = names(&["crl"]);
        assert!(matches!(consumes_unknown.check(), Err(ProfileError::InconsistentSpec { .. })));

        let mut duplicate = revoke_cert();
        duplicate.stages[1].component = c(REGISTRATION);
        assert!(matches!(duplicate.check(), Err(ProfileError::InconsistentSpec { .. })));

        let empty = ProfileSpec { id: "Empty".into(), stages: Vec::new() };
        assert!(matches!(empty.check(), Err(ProfileError::InconsistentSpec { .. })));

        let mut quorum = multicert(&DEFAULT_OPERATORS[..1]);
        quorum.id = "Q".into();
        assert!(matches!(quorum.check(), Err(ProfileError::InconsistentSpec { .. })));
    }

    #[test]
    fn config_roundtrip() {
        let mut r = ProfileRegistry::builtin();
        r.register(revoke_cert()).unwrap();
        let text = r.to_config();
        let again = ProfileRegistry::from_config(text.as_bytes()).unwrap();
        assert_eq!(again.specs().collect::<Vec<_>>(), r.specs().collect::<Vec<_>>());
    }

    #[test]
    fn new_profile_from_config_only() {
        let doc = br#"<profiles>
  <profileSpec id="KeyBackup">
    <stage component="Registration" next="Key Archive">
      <produces>encPrivateKey</produces>
    </stage>
    <stage component="Key Archive">
      <requires>encPrivateKey</requires>
      <consumes>encPrivateKey</consumes>
      <authorization operators="1"><component>Registration</component><operator>CN=Operator1</operator></authorization>
    </stage>
  </profileSpec>
</profiles>"#;
        let r = ProfileRegistry::from_config(doc).unwrap();
        let spec = r.get("KeyBackup").unwrap();
        assert_eq!(next_hop(spec, &c("Key Archive")).unwrap(), None);
        assert_eq!(spec.stages[1].authorization.required_operators, 1);
        assert_eq!(spec.stages[1].authorization.profile_id, "KeyBackup");
    }

    #[test]
    fn bad_config_documents() {
        for doc in [
            &b"<profile/>"[..],
            b"<profiles><profileSpec><stage component=\"A\"/></profileSpec></profiles>",
            b"<profiles><profileSpec id=\"X\"><stage/></profileSpec></profiles>",
            b"<profiles><profileSpec id=\"X\"><stage component=\"A\"><bogus/></stage></profileSpec></profiles>",
            b"<profiles><profileSpec id=\"X\"><stage component=\"A\"><authorization operators=\"two\"/></stage></profileSpec></profiles>",
            b"<profiles><profileSpec id=\"X\"><stage component=\"A\"><produces>1bad</produces></stage></profileSpec></profiles>",
            b"<profiles",
        ] {
            assert!(matches!(ProfileRegistry::from_config(doc), Err(ProfileError::Config(_))), "{}", String::from_utf8_lossy(doc));
        }
    }
}
