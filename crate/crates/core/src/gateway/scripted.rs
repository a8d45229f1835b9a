use std::sync::Mutex;
use std::time::Duration;

use super::{Backend, BackendTag, GatewayError, ModelRequest, ModelResponse};

/// Backend answering from a closure and logging every request it receives.
///
/// Used for scripted runs where the response is a function of the request.
pub struct FnBackend<F> {
    respond: F,
    log: Mutex<Vec<ModelRequest>>,
}

impl<F> FnBackend<F>
where
    F: Fn(&ModelRequest) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self {
            respond,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Requests seen so far, in arrival order.
    pub fn calls(&self) -> Vec<ModelRequest> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&ModelRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(request.clone());
        let text = (self.respond)(request)?;
        Ok(ModelResponse {
            text,
            backend_tag: BackendTag::Simulated,
            latency: Duration::ZERO,
        })
    }
}
