use serde::{Deserialize, Serialize};

use super::{BackendError, Completion, CompletionBackend, CompletionRequest, Role};

/// One logged model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: Role,
    /// What the call was for, e.g. `"paraphrase rule 2"` or `"rank t=0.5"`.
    pub purpose: String,
    pub request: CompletionRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Ordered log of the model calls made for one question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub exchanges: Vec<Exchange>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sends `req` to `backend` and logs the outcome either way.
    pub fn call(
        &mut self,
        role: Role,
        purpose: impl Into<String>,
        backend: &dyn CompletionBackend,
        req: CompletionRequest,
    ) -> Result<Completion, BackendError> {
        let result = backend.complete(&req);
        self.exchanges.push(Exchange {
            role,
            purpose: purpose.into(),
            request: req,
            completion: result.as_ref().ok().map(|c| c.text.clone()),
            error: result.as_ref().err().map(ToString::to_string),
        });
        result
    }

    pub fn count(&self, role: Role) -> usize {
        self.exchanges.iter().filter(|e| e.role == role).count()
    }
}
