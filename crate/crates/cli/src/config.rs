//! Campaign configuration: defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use opfuzz_core::explorer::ExplorePolicy;
use opfuzz_core::ops::{Bounds, ModelConfig, OpKind, OperatorFamily};
use opfuzz_core::synth::{BugManifest, DEFAULT_BLOCK};
use opfuzz_core::testcase::{Dtype, FrameworkTarget};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_COUNT: u64 = 1000;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Every setting, all optional. Used both for the JSON config file and
/// for command-line flags.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    pub ops: Option<OpList>,
    pub seed: Option<u64>,
    pub count: Option<u64>,
    /// `90s`, `5m`, ...
    pub duration: Option<String>,
    /// `synthetic` or `external:<command template>`.
    pub target: Option<String>,
    pub manifest: Option<PathBuf>,
    /// `0` disables the element cap.
    pub max_elems: Option<i64>,
    pub dim_hi: Option<i64>,
    pub buckets: Option<u32>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub framework: Option<String>,
    /// Per-case limit for external targets, e.g. `120s`.
    pub timeout: Option<String>,
    pub dtype: Option<String>,
    pub block: Option<i64>,
}

/// Operator selection, as a comma-separated string or a JSON list.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OpList {
    One(String),
    Many(Vec<String>),
}

impl OpList {
    fn items(&self) -> Vec<&str> {
        match self {
            OpList::One(s) => s.split(',').collect(),
            OpList::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError::File {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// Values set in `self` win over those in `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            ops: self.ops.or(base.ops),
            seed: self.seed.or(base.seed),
            count: self.count.or(base.count),
            duration: self.duration.or(base.duration),
            target: self.target.or(base.target),
            manifest: self.manifest.or(base.manifest),
            max_elems: self.max_elems.or(base.max_elems),
            dim_hi: self.dim_hi.or(base.dim_hi),
            buckets: self.buckets.or(base.buckets),
            workers: self.workers.or(base.workers),
            out: self.out.or(base.out),
            framework: self.framework.or(base.framework),
            timeout: self.timeout.or(base.timeout),
            dtype: self.dtype.or(base.dtype),
            block: self.block.or(base.block),
        }
    }
}

#[derive(Debug, Clone)]
pub enum TargetSpec {
    Synthetic {
        manifest: BugManifest,
        block: i64,
    },
    External {
        argv: Vec<String>,
        framework: FrameworkTarget,
        timeout: Duration,
    },
}

impl TargetSpec {
    pub fn describe(&self) -> String {
        match self {
            TargetSpec::Synthetic { manifest, block } => {
                format!("synthetic ({} injected bugs, block {block})", manifest.bugs.len())
            }
            TargetSpec::External { argv, framework, .. } => {
                format!("external `{}` ({})", shlex::try_join(argv.iter().map(String::as_str)).unwrap_or_default(), framework)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub ops: Vec<OpKind>,
    pub seed: u64,
    pub count: Option<u64>,
    pub duration: Option<Duration>,
    pub target: TargetSpec,
    pub model: ModelConfig,
    pub policy: ExplorePolicy,
    pub out: PathBuf,
    pub workers: usize,
    pub dtype: Dtype,
}

/// Expands `all`, family names (every rank) and operator names.
pub fn parse_ops(list: &OpList) -> Result<Vec<OpKind>, ConfigError> {
    let mut out = Vec::new();
    for item in list.items() {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let kinds = if item.eq_ignore_ascii_case("all") {
            OpKind::all()
        } else if let Ok(kind) = item.parse::<OpKind>() {
            vec![kind]
        } else if let Ok(family) = item.parse::<OperatorFamily>() {
            OpKind::all().into_iter().filter(|k| k.family == family).collect()
        } else {
            return Err(invalid(format!("unknown operator `{item}`")));
        };
        for k in kinds {
            if !out.contains(&k) {
                out.push(k);
            }
        }
    }
    if out.is_empty() {
        return Err(invalid("no operators selected"));
    }
    Ok(out)
}

pub fn parse_duration(s: &str) -> Result<Duration, ConfigError> {
    humantime::parse_duration(s).map_err(|e| invalid(format!("bad duration `{s}`: {e}")))
}

pub fn parse_framework(s: &str) -> Result<FrameworkTarget, ConfigError> {
    s.parse().map_err(|e: String| invalid(e))
}

/// Parses `--target` into a target. External commands must resolve to an
/// executable now, before anything is generated.
pub fn parse_target(s: &Settings) -> Result<TargetSpec, ConfigError> {
    let raw = s.target.as_deref().unwrap_or("synthetic");
    if raw == "synthetic" {
        let manifest = match &s.manifest {
            Some(p) => BugManifest::load(p).map_err(|e| invalid(e.to_string()))?,
            None => BugManifest::default_manifest(),
        };
        let block = s.block.unwrap_or(DEFAULT_BLOCK);
        if block < 1 {
            return Err(invalid("block must be positive"));
        }
        return Ok(TargetSpec::Synthetic { manifest, block });
    }
    let Some(cmd) = raw.strip_prefix("external:") else {
        return Err(invalid(format!("target must be `synthetic` or `external:<cmd>`, got `{raw}`")));
    };
    let argv = shlex::split(cmd).ok_or_else(|| invalid(format!("cannot parse command `{cmd}`")))?;
    let Some(program) = argv.first() else {
        return Err(invalid("empty external command"));
    };
    which::which(program).map_err(|_| invalid(format!("external target command not found: `{program}`")))?;
    let framework = parse_framework(s.framework.as_deref().unwrap_or("pytorch"))?;
    let timeout = match &s.timeout {
        Some(t) => parse_duration(t)?,
        None => DEFAULT_TIMEOUT,
    };
    if timeout.is_zero() {
        return Err(invalid("timeout must be positive"));
    }
    Ok(TargetSpec::External {
        argv,
        framework,
        timeout,
    })
}

impl CampaignConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, ConfigError> {
        let ops = parse_ops(s.ops.as_ref().unwrap_or(&OpList::One("all".into())))?;
        let duration = s.duration.as_deref().map(parse_duration).transpose()?;
        let count = match (s.count, duration) {
            (None, None) => Some(DEFAULT_COUNT),
            (c, _) => c,
        };
        if count == Some(0) || duration.is_some_and(|d| d.is_zero()) {
            return Err(invalid("budget must be positive"));
        }
        let workers = s.workers.unwrap_or(1);
        if workers < 1 {
            return Err(invalid("workers must be at least 1"));
        }
        let mut model = ModelConfig::default();
        if let Some(hi) = s.dim_hi {
            if hi < model.dim.lo {
                return Err(invalid(format!("dim-hi must be at least {}", model.dim.lo)));
            }
            model.dim = Bounds::new(model.dim.lo, hi);
        }
        match s.max_elems {
            Some(0) | None => {}
            Some(n) if n < 0 => return Err(invalid("max-elems must not be negative")),
            Some(n) => model.max_elements = Some(n),
        }
        let mut policy = ExplorePolicy::default();
        if let Some(b) = s.buckets {
            policy.bucket_count = b;
        }
        policy.check().map_err(|e| invalid(e.to_string()))?;
        let dtype = match &s.dtype {
            Some(d) => d.parse().map_err(|e: String| invalid(e))?,
            None => Dtype::F32,
        };
        Ok(CampaignConfig {
            ops,
            seed: s.seed.unwrap_or(0),
            count,
            duration,
            target: parse_target(s)?,
            model,
            policy,
            out: s.out.clone().unwrap_or_else(|| PathBuf::from("opfuzz-out")),
            workers,
            dtype,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(json: &str) -> Settings {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let file = settings(r#"{"seed": 3, "count": 50, "ops": ["Conv2d", "MatMul"], "dim-hi": 40000}"#);
        let flags = Settings {
            seed: Some(9),
            ..Settings::default()
        };
        let cfg = CampaignConfig::from_settings(&flags.over(file)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.count, Some(50));
        assert_eq!(cfg.ops.len(), 2);
        assert_eq!(cfg.model.dim.hi, 40000);
    }

    #[test]
    fn op_selection() {
        let ops = parse_ops(&OpList::One("ConvTranspose, matmul,Conv2d".into())).unwrap();
        let names: Vec<_> = ops.iter().map(|k| k.to_string()).collect();
        assert_eq!(names, ["ConvTranspose1d", "ConvTranspose2d", "ConvTranspose3d", "MatMul", "Conv2d"]);
        assert_eq!(parse_ops(&OpList::One("all".into())).unwrap().len(), OpKind::all().len());
        assert!(parse_ops(&OpList::One("Nope".into())).is_err());
        assert!(parse_ops(&OpList::Many(vec![])).is_err());
    }

    #[test]
    fn rejects_bad_budgets_and_keys() {
        assert!(CampaignConfig::from_settings(&settings(r#"{"count": 0}"#)).is_err());
        assert!(CampaignConfig::from_settings(&settings(r#"{"workers": 0}"#)).is_err());
        assert!(CampaignConfig::from_settings(&settings(r#"{"buckets": 1}"#)).is_err());
        assert!(serde_json::from_str::<Settings>(r#"{"sed": 1}"#).is_err());
        let cfg = CampaignConfig::from_settings(&settings(r#"{"duration": "2s"}"#)).unwrap();
        assert_eq!((cfg.count, cfg.duration), (None, Some(Duration::from_secs(2))));
    }

    #[test]
    fn missing_external_command_fails_early() {
        let s = settings(r#"{"target": "external:definitely-not-a-real-binary-xyz {script}"}"#);
        let err = CampaignConfig::from_settings(&s).unwrap_err().to_string();
        assert!(err.contains("not found"), "{err}");
        let s = settings(r#"{"target": "external:sh -c true"}"#);
        assert!(matches!(
            CampaignConfig::from_settings(&s).unwrap().target,
            TargetSpec::External { .. }
        ));
    }
}
