//! Generator selection from strings such as `rule` or `stochastic:ckpt.json`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use todsim_core::generator::protocol::{ExternalGenerator, Fallback, Transport};
use todsim_core::generator::{PolicyParameters, RuleConfig, RuleGenerator, StochasticGenerator, TemplateTable};
use todsim_core::{Generator, GeneratorError};

use crate::error::CliError;
use crate::external::{BoxedTransport, Endpoint};

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorSpec {
    Rule,
    /// Rule policy that emits one agenda action per turn.
    RuleSingle,
    /// Stochastic policy; without a checkpoint the built-in initial weights.
    Stochastic(Option<PathBuf>),
    External(Endpoint),
}

impl GeneratorSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "rule" => return Ok(GeneratorSpec::Rule),
            "rule-single" => return Ok(GeneratorSpec::RuleSingle),
            "stochastic" => return Ok(GeneratorSpec::Stochastic(None)),
            _ => {}
        }
        if let Some(path) = s.strip_prefix("stochastic:") {
            return Ok(GeneratorSpec::Stochastic(Some(PathBuf::from(path))));
        }
        if let Some(ep) = s.strip_prefix("external:") {
            return Endpoint::parse(ep)
                .map(GeneratorSpec::External)
                .ok_or_else(|| CliError::input(format!("bad endpoint {ep:?}; expected exec:<cmd> or tcp:<host>:<port>")));
        }
        Err(CliError::input(format!(
            "unknown generator {s:?}; expected rule, rule-single, stochastic[:<checkpoint>] or external:<endpoint>"
        )))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParameters, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    PolicyParameters::from_checkpoint_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Generator whose transport could not be attached; every call fails so the
/// configured fallback decides what happens.
struct Unattached(GeneratorError);

impl Transport for Unattached {
    fn exchange(&mut self, _line: &str) -> Result<String, GeneratorError> {
        Err(self.0.clone())
    }
}

/// Builds fresh generators of one kind.
pub struct UserFactory {
    spec: GeneratorSpec,
    params: Option<PolicyParameters>,
    timeout: Duration,
    fallback: Fallback,
}

impl UserFactory {
    /// Loads checkpoints and checks that external endpoints can be reached.
    pub fn new(spec: GeneratorSpec, timeout_ms: u64, fallback: Fallback) -> Result<Self, CliError> {
        let timeout = Duration::from_millis(timeout_ms);
        let params = match &spec {
            GeneratorSpec::Stochastic(Some(p)) => Some(load_checkpoint(p)?),
            GeneratorSpec::Stochastic(None) => Some(PolicyParameters::rule_like()),
            GeneratorSpec::External(ep) => {
                ep.connect(timeout).map_err(|e| CliError::runtime(format!("cannot attach generator: {e}")))?;
                None
            }
            _ => None,
        };
        Ok(Self {
            spec,
            params,
            timeout,
            fallback,
        })
    }

    pub fn from_params(params: PolicyParameters) -> Self {
        Self {
            spec: GeneratorSpec::Stochastic(None),
            params: Some(params),
            timeout: Duration::from_millis(crate::config::DEFAULT_TIMEOUT_MS),
            fallback: Fallback::Rule,
        }
    }

    /// External generators are driven one dialogue at a time.
    pub fn is_parallel_safe(&self) -> bool {
        !matches!(self.spec, GeneratorSpec::External(_))
    }

    pub fn make(&self) -> Box<dyn Generator> {
        match &self.spec {
            GeneratorSpec::Rule => Box::new(RuleGenerator::default()),
            GeneratorSpec::RuleSingle => Box::new(RuleGenerator::new(RuleConfig::single(), TemplateTable::builtin())),
            GeneratorSpec::Stochastic(_) => Box::new(StochasticGenerator::new(
                self.params.clone().expect("loaded in new"),
                TemplateTable::builtin(),
            )),
            GeneratorSpec::External(ep) => match ep.connect(self.timeout) {
                Ok(t) => Box::new(ExternalGenerator::new(BoxedTransport(t), self.fallback)),
                Err(e) => Box::new(ExternalGenerator::new(Unattached(e), self.fallback)),
            },
        }
    }
}

/// Adapter so a `UserFactory` can be used where the harness expects a
/// factory closure.
pub fn as_closure(f: &UserFactory) -> impl Fn() -> Box<dyn Generator> + Sync + '_ {
    move || f.make()
}
