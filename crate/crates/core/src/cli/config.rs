//! TOML experiment files and their resolution against presets and flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{SystemConfig, SystemState};
use crate::oracle::DEFAULT_STATE_CAP;
use crate::policy::{ExpectationMode, PolicyKind, DEFAULT_ENUMERATION_CAP};
use crate::presets::{preset, Preset};
use crate::valuefn::{AlphaScope, BaselinePolicy, EsBackend, EsForm, ValueOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub proposed: ProposedSection,
    #[serde(default)]
    pub value: ValueSection,
    pub baseline: Option<BaselinePolicy>,
    pub state: Option<SystemState>,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub policies: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub slots: Option<usize>,
    pub replications: Option<usize>,
    pub warmup: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposedSection {
    pub expectation_mode: Option<ExpectationMode>,
    pub enumeration_cap: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueSection {
    pub eps_trunc: Option<f64>,
    pub es_form: Option<EsForm>,
    pub es_backend: Option<EsBackend>,
    pub alpha_scope: Option<AlphaScope>,
    pub memo_capacity: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub state_cap: Option<u64>,
    pub eps_vi: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub policies: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub slots: Option<usize>,
    pub replications: Option<usize>,
    pub expectation_mode: Option<ExpectationMode>,
    pub es_form: Option<EsForm>,
}

/// Every parameter of one invocation after defaults, presets and flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub system: SystemConfig,
    pub policies: Vec<String>,
    pub seed: u64,
    pub slots: usize,
    pub replications: usize,
    pub warmup: usize,
    pub expectation_mode: ExpectationMode,
    pub enumeration_cap: usize,
    pub value: ValueOptions,
    pub baseline: BaselinePolicy,
    pub state: SystemState,
    pub oracle_state_cap: u64,
    pub eps_vi: f64,
}

const DEFAULT_POLICIES: [&str; 5] = ["proposed", "sqf", "suf", "scf", "random"];

impl ResolvedConfig {
    /// Precedence: flags, then the file, then the preset, then defaults. A
    /// preset named on the command line replaces the file's `[system]`.
    pub fn resolve(file: &ConfigFile, flags: &Overrides) -> Result<Self> {
        let preset_name = flags.preset.clone().or_else(|| file.preset.clone());
        let preset: Option<Preset> = preset_name.as_deref().map(preset).transpose()?;
        let system = match (&flags.preset, &file.system, &preset) {
            (Some(_), _, Some(p)) => p.config.clone(),
            (None, Some(s), _) => s.clone(),
            (None, None, Some(p)) => p.config.clone(),
            _ => return Err(Error::config("no system parameters: give a [system] section or a preset")),
        };
        system.validate()?;

        let policies = flags
            .policies
            .clone()
            .or_else(|| file.run.policies.clone())
            .unwrap_or_else(|| DEFAULT_POLICIES.iter().map(|s| s.to_string()).collect());
        if policies.is_empty() {
            return Err(Error::config("the policy list is empty"));
        }
        for p in &policies {
            p.parse::<PolicyKind>()?;
        }

        let mut value = preset.as_ref().map(|p| p.value_options).unwrap_or_default();
        let v = &file.value;
        value.eps_trunc = v.eps_trunc.unwrap_or(value.eps_trunc);
        value.es_form = flags.es_form.or(v.es_form).unwrap_or(value.es_form);
        value.es_backend = v.es_backend.unwrap_or(value.es_backend);
        value.alpha_scope = v.alpha_scope.unwrap_or(value.alpha_scope);
        value.memo_capacity = v.memo_capacity.unwrap_or(value.memo_capacity);

        let baseline = file.baseline.clone().unwrap_or_else(|| BaselinePolicy::scf(&system));
        baseline.validate(&system)?;
        let state = file.state.clone().unwrap_or_else(|| SystemState::empty(&system));
        if !state.is_valid(&system) {
            return Err(Error::config("[state] does not fit the system dimensions and caps"));
        }

        let slots = flags.slots.or(file.run.slots).or(preset.as_ref().map(|p| p.slots)).unwrap_or(10_000);
        let warmup = file.run.warmup.or(preset.as_ref().map(|p| p.warmup)).unwrap_or(0).min(slots.saturating_sub(1));
        let resolved = ResolvedConfig {
            schema_version: SCHEMA_VERSION,
            preset: preset_name,
            policies,
            seed: flags.seed.or(file.run.seed).unwrap_or(0),
            slots,
            replications: flags
                .replications
                .or(file.run.replications)
                .or(preset.as_ref().map(|p| p.replications))
                .unwrap_or(50),
            warmup,
            expectation_mode: flags
                .expectation_mode
                .or(file.proposed.expectation_mode)
                .or(preset.as_ref().map(|p| p.expectation_mode))
                .unwrap_or_default(),
            enumeration_cap: file.proposed.enumeration_cap.unwrap_or(DEFAULT_ENUMERATION_CAP),
            value,
            baseline,
            state,
            oracle_state_cap: file.oracle.state_cap.unwrap_or(DEFAULT_STATE_CAP as u64),
            eps_vi: file.oracle.eps_vi.unwrap_or(1e-6),
            system,
        };
        if resolved.slots == 0 || resolved.replications == 0 {
            return Err(Error::config("slots and replications must be at least 1"));
        }
        if resolved.enumeration_cap == 0 {
            return Err(Error::config("enumeration_cap must be positive"));
        }
        Ok(resolved)
    }

    pub fn policy_kinds(&self) -> Vec<PolicyKind> {
        self.policies
            .iter()
            .map(|p| match p.parse::<PolicyKind>().expect("validated in resolve") {
                PolicyKind::Proposed { .. } => {
                    PolicyKind::Proposed { mode: self.expectation_mode, enumeration_cap: self.enumeration_cap }
                }
                other => other,
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("resolved config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_only_file_resolves() {
        let file = ConfigFile::parse("schema_version = 1\npreset = \"tiny\"\n").unwrap();
        let r = ResolvedConfig::resolve(&file, &Overrides::default()).unwrap();
        assert_eq!(r.system.num_aps, 2);
        assert_eq!(r.policies.len(), 5);
        assert_eq!(r.digest(), ResolvedConfig::resolve(&file, &Overrides::default()).unwrap().digest());
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let err = ConfigFile::parse("schema_version = 1\npreset = \"tiny\"\n[run]\nslotz = 3\n").unwrap_err();
        assert!(err.to_string().contains("slotz"), "{err}");
        assert!(ConfigFile::parse("schema_version = 2\n").is_err());
        assert!(ConfigFile::parse("preset = \"tiny\"\n").is_err());
    }

    #[test]
    fn flags_take_precedence() {
        let file = ConfigFile::parse(
            "schema_version = 1\npreset = \"tiny\"\n[run]\nseed = 3\nslots = 40\npolicies = [\"sqf\"]\n",
        )
        .unwrap();
        let flags = Overrides {
            preset: Some("idle".into()),
            seed: Some(9),
            policies: Some(vec!["random".into(), "proposed".into()]),
            expectation_mode: Some(ExpectationMode::CertaintyEquivalent),
            ..Overrides::default()
        };
        let r = ResolvedConfig::resolve(&file, &flags).unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.slots, 40);
        assert_eq!(r.system.arrival_prob[0][0], 0.0);
        assert_eq!(
            r.policy_kinds()[1],
            PolicyKind::Proposed {
                mode: ExpectationMode::CertaintyEquivalent,
                enumeration_cap: DEFAULT_ENUMERATION_CAP
            }
        );
    }

    #[test]
    fn invalid_system_is_reported() {
        let text = r#"
schema_version = 1
[system]
num_aps = 1
num_servers = 1
num_types = 1
arrival_prob = [[1.5]]
mean_upload_delay = [[[2.0]]]
comp_time_pmf = [[[1.0]]]
discount = 0.9
overflow_weight = 10.0
n_max = 1
l_max = 1
eta_max = 1
"#;
        let file = ConfigFile::parse(text).unwrap();
        assert!(matches!(ResolvedConfig::resolve(&file, &Overrides::default()), Err(Error::InvalidConfig(_))));
        assert!(ConfigFile::parse("schema_version = 1\n[run]\npolicies = [\"sqf\"]\n")
            .and_then(|f| ResolvedConfig::resolve(&f, &Overrides::default()))
            .is_err());
    }
}
