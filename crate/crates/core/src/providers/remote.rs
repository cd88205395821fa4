//! HTTP embedding client.
//!
//! `POST {base}/embed` with `{"inputs": [...], "mode": "dense"|"multivector"}`;
//! the service answers `{"embeddings": [...]}` with one vector (dense) or one
//! token matrix (multivector) per input. Any non-200 status or transport
//! failure maps to [`Error::RemoteUnavailable`].

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedInput, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::vector::{DenseEmbedding, MultiVectorEmbedding};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
const BATCH: usize = 32;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    inputs: Vec<&'a str>,
    mode: &'static str,
}

#[derive(Deserialize)]
struct DenseResponse {
    embeddings: Vec<Vec<f32>>,
}

#[derive(Deserialize)]
struct MultiResponse {
    embeddings: Vec<Vec<Vec<f32>>>,
}

/// Counting semaphore bounding concurrent requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteProvider {
    url: String,
    agent: ureq::Agent,
    permits: Permits,
}

impl RemoteProvider {
    pub fn new(base_url: &str, timeout_ms: u64, max_in_flight: usize) -> Result<Self> {
        if timeout_ms == 0 || max_in_flight == 0 {
            return Err(Error::InvalidConfig(
                "remote provider needs timeout-ms >= 1 and max in-flight >= 1".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            url: format!("{}/embed", base_url.trim_end_matches('/')),
            agent,
            permits: Permits::new(max_in_flight),
        })
    }

    fn call<T: for<'de> Deserialize<'de>>(&self, inputs: &[EmbedInput<'_>], mode: &'static str) -> Result<T> {
        for i in inputs {
            if i.text.trim().is_empty() {
                return Err(Error::EmptyText);
            }
        }
        let body = EmbedRequest {
            inputs: inputs.iter().map(|i| i.text).collect(),
            mode,
        };
        let _permit = self.permits.acquire();
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| Error::RemoteUnavailable(e.to_string()))?;
        if resp.status() != 200 {
            return Err(Error::RemoteUnavailable(format!("HTTP {}", resp.status())));
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| Error::RemoteUnavailable(format!("malformed response: {e}")))
    }

    fn check_count(expected: usize, got: usize) -> Result<()> {
        if expected != got {
            return Err(Error::RemoteUnavailable(format!(
                "expected {expected} embeddings, got {got}"
            )));
        }
        Ok(())
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn embed_dense(&self, input: &EmbedInput<'_>) -> Result<DenseEmbedding> {
        Ok(self.embed_dense_batch(std::slice::from_ref(input))?.remove(0))
    }

    fn embed_multivector(&self, input: &EmbedInput<'_>, max_tokens: usize) -> Result<MultiVectorEmbedding> {
        Ok(self
            .embed_multivector_batch(std::slice::from_ref(input), max_tokens)?
            .remove(0))
    }

    fn embed_dense_batch(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<DenseEmbedding>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(BATCH) {
            let resp: DenseResponse = self.call(chunk, "dense")?;
            Self::check_count(chunk.len(), resp.embeddings.len())?;
            for v in resp.embeddings {
                out.push(DenseEmbedding::new(v)?.normalize()?);
            }
        }
        Ok(out)
    }

    fn embed_multivector_batch(
        &self,
        inputs: &[EmbedInput<'_>],
        max_tokens: usize,
    ) -> Result<Vec<MultiVectorEmbedding>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(BATCH) {
            let resp: MultiResponse = self.call(chunk, "multivector")?;
            Self::check_count(chunk.len(), resp.embeddings.len())?;
            for mut rows in resp.embeddings {
                rows.truncate(max_tokens.max(1));
                out.push(MultiVectorEmbedding::from_rows(rows)?.normalize_rows()?);
            }
        }
        Ok(out)
    }
}
