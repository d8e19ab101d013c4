//! Rewriter and classifier backends.
//!
//! [`Backend`] is the seam between the pipeline and whatever produces text:
//! [`RemoteBackend`] talks to a chat-completion endpoint, [`MockBackend`]
//! applies deterministic rules and is what the tests and the examples run
//! against.

mod mock;
mod prompt;
mod remote;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{HIGH, LOW};
use crate::intervene::RewriteRequest;

pub use mock::{MockBackend, MockConfig, OBSCURE_NAMES, POPULAR_NAMES};
pub use prompt::{classify_prompt, parse_rewrite, rewrite_prompt, RewriteText};
pub use remote::{RateLimiter, RemoteBackend};

pub const DEFAULT_CREDENTIAL_ENV: &str = "IGDEBIAS_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by the endpoint")]
    RateLimited,
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

impl BackendError {
    /// Errors worth another network attempt.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Timeout | Self::RateLimited | Self::TransportFailure(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyKind {
    Popularity,
    Custom,
}

/// A closed-choice question for the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub kind: ClassifyKind,
    pub feature: String,
    /// The text being judged.
    pub context: String,
    pub choices: Vec<String>,
    /// Fully assembled prompt for prompt-based backends.
    pub prompt: String,
}

impl ClassifyRequest {
    pub fn popularity(entity_context: &str) -> Self {
        let choices = vec![HIGH.to_string(), LOW.to_string()];
        Self {
            kind: ClassifyKind::Popularity,
            feature: "popularity".into(),
            prompt: classify_prompt(
                "Is the person or place named below widely known to the general public?",
                entity_context,
                &choices,
            ),
            context: entity_context.to_string(),
            choices,
        }
    }

    pub fn custom(feature: &str, context: &str, value_space: &[String]) -> Self {
        Self {
            kind: ClassifyKind::Custom,
            feature: feature.to_string(),
            prompt: classify_prompt(
                &format!("Which value of the feature `{feature}` does this sample have?"),
                context,
                value_space,
            ),
            context: context.to_string(),
            choices: value_space.to_vec(),
        }
    }
}

/// Produces rewrites and classifier verdicts. Implementations must accept
/// concurrent calls.
pub trait Backend: Send + Sync {
    /// One rewrite attempt; `attempt` starts at 1.
    fn rewrite(&self, req: &RewriteRequest, attempt: u32) -> Result<String, BackendError>;

    fn classify(&self, req: &ClassifyRequest) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn rewrite(&self, req: &RewriteRequest, attempt: u32) -> Result<String, BackendError> {
        (**self).rewrite(req, attempt)
    }

    fn classify(&self, req: &ClassifyRequest) -> Result<String, BackendError> {
        (**self).classify(req)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn rewrite(&self, req: &RewriteRequest, attempt: u32) -> Result<String, BackendError> {
        (**self).rewrite(req, attempt)
    }

    fn classify(&self, req: &ClassifyRequest) -> Result<String, BackendError> {
        (**self).classify(req)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    #[default]
    Mock,
}

/// Backend settings. The credential is never stored, only the name of the
/// environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub credential_env: String,
    /// Requests per second; 0 disables throttling.
    pub rate_limit: f64,
    /// Transport-level retries per call.
    pub transport_retries: u32,
    pub max_tokens: u32,
    pub mock: MockConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            temperature: 0.0,
            timeout_secs: 30.0,
            credential_env: DEFAULT_CREDENTIAL_ENV.into(),
            rate_limit: 2.0,
            transport_retries: 2,
            max_tokens: 512,
            mock: MockConfig::default(),
        }
    }
}

impl BackendConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.001))
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Mock {
            return self.mock.validate();
        }
        if self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(BackendError::InvalidConfig("remote backend needs an endpoint".into()));
        }
        if self.model.as_deref().is_none_or(str::is_empty) {
            return Err(BackendError::InvalidConfig("remote backend needs a model".into()));
        }
        if self.timeout_secs.is_nan()
            || self.timeout_secs <= 0.0
            || !self.rate_limit.is_finite()
            || self.rate_limit < 0.0
        {
            return Err(BackendError::InvalidConfig(
                "timeout and rate limit must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Builds the configured backend, reading the credential for remote
    /// kinds from the environment.
    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Mock => Arc::new(MockBackend::new(self.mock.clone())),
            BackendKind::Remote => {
                let key = std::env::var(&self.credential_env).map_err(|_| {
                    BackendError::InvalidConfig(format!("credential variable {} is not set", self.credential_env))
                })?;
                Arc::new(RemoteBackend::new(self, key)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remote_needs_endpoint_and_model() {
        let mut cfg = BackendConfig {
            kind: BackendKind::Remote,
            ..BackendConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.endpoint = Some("http://127.0.0.1:9/v1/chat/completions".into());
        assert!(cfg.validate().is_err());
        cfg.model = Some("m".into());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn missing_credential_is_a_config_error() {
        let cfg = BackendConfig {
            kind: BackendKind::Remote,
            endpoint: Some("http://127.0.0.1:9/".into()),
            model: Some("m".into()),
            credential_env: "IGDEBIAS_TEST_UNSET_VARIABLE".into(),
            ..BackendConfig::default()
        };
        assert!(matches!(cfg.build(), Err(BackendError::InvalidConfig(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = BackendConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<BackendConfig>(&text).unwrap(), cfg);
    }
}
