use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::EmbeddingMatrix;

pub const MAX_BATCH: usize = 64;
pub const MAX_RETRIES: u32 = 3;
pub const DEFAULT_BACKOFF: Duration = Duration::from_millis(250);

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

/// Client for `POST {endpoint}/embed`.
#[derive(Debug, Clone)]
pub struct RemoteEncoder {
    url: String,
    dim: Option<usize>,
    batch_size: usize,
    max_retries: u32,
    backoff: Duration,
    exec: Execution,
    agent: ureq::Agent,
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl RemoteEncoder {
    pub fn new(endpoint: &str, dim: Option<usize>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(120))
            .build();
        Self {
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            dim,
            batch_size: MAX_BATCH,
            max_retries: MAX_RETRIES,
            backoff: DEFAULT_BACKOFF,
            exec: Execution::default(),
            agent,
        }
    }

    /// Base delay before the first retry; doubles on each further retry.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.clamp(1, MAX_BATCH);
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn post_once(&self, batch: &[&str]) -> std::result::Result<Vec<Vec<f64>>, Attempt> {
        let resp = match self
            .agent
            .post(&self.url)
            .set("content-type", "application/json")
            .send_json(EmbedRequest { texts: batch })
        {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) if code >= 500 || code == 429 => {
                return Err(Attempt::Retry(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(Attempt::Fatal(Error::Transport {
                    retries: 0,
                    message: format!("HTTP {code}: {body}"),
                }));
            }
            Err(e @ ureq::Error::Transport(_)) => return Err(Attempt::Retry(e.to_string())),
        };
        let body: EmbedResponse = resp
            .into_json()
            .map_err(|e| Attempt::Retry(format!("bad response body: {e}")))?;
        self.check(batch.len(), body).map_err(Attempt::Fatal)
    }

    fn check(&self, expected_rows: usize, body: EmbedResponse) -> Result<Vec<Vec<f64>>> {
        if let Some(d) = self.dim {
            if body.dim != d {
                return Err(Error::Validation(format!(
                    "remote returned dim {}, configured {d}",
                    body.dim
                )));
            }
        }
        if body.vectors.len() != expected_rows {
            return Err(Error::Validation(format!(
                "remote returned {} vectors for {expected_rows} texts",
                body.vectors.len()
            )));
        }
        if let Some(v) = body.vectors.iter().find(|v| v.len() != body.dim) {
            return Err(Error::Validation(format!(
                "remote vector of length {} under declared dim {}",
                v.len(),
                body.dim
            )));
        }
        Ok(body.vectors)
    }

    fn post_with_retries(&self, batch: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut retries = 0;
        loop {
            match self.post_once(batch) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(Error::Transport { message, .. })) => {
                    return Err(Error::Transport { retries, message })
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if retries >= self.max_retries {
                        return Err(Error::Transport { retries, message });
                    }
                    let delay = self.backoff * 2u32.pow(retries);
                    log::debug!("embed request failed ({message}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    retries += 1;
                }
            }
        }
    }
}

impl EmbeddingProvider for RemoteEncoder {
    fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<EmbeddingMatrix> {
        if texts.is_empty() {
            return Ok(EmbeddingMatrix::empty(self.dim.unwrap_or(0)));
        }
        let batches: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let results = self
            .exec
            .try_map(batches.len(), |i| self.post_with_retries(batches[i]))?;
        let rows: Vec<Vec<f64>> = results.into_iter().flatten().collect();
        let dim = rows[0].len();
        EmbeddingMatrix::from_rows(&rows, dim)
    }
}
