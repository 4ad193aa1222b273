//! Line-delimited JSON protocol for models served by another process.
//!
//! Requests and responses are one JSON object per line:
//!
//! ```text
//! -> {"op":"vocabulary"}
//! <- {"vocabulary":["a","b"]}
//! -> {"op":"next","context":[0,1]}
//! <- {"logprobs":[-0.69,-0.69]}
//! ```
//!
//! `context` is the full history (prompt followed by generated tokens). A
//! response may instead be `{"error":"..."}`. Log-probabilities must be finite
//! and normalize to one within `1e-6`.

use std::io::{BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ConditionalDistribution, Context, LanguageModel, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request {
    Vocabulary,
    Next { context: Vec<TokenId> },
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
}

impl Connection {
    fn call(&mut self, req: &Request) -> Result<Response> {
        let mut line = serde_json::to_string(req)?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(Error::Protocol("connection closed".into()));
        }
        let resp: Response =
            serde_json::from_str(reply.trim_end()).map_err(|e| Error::Protocol(format!("bad response: {e}")))?;
        if let Some(msg) = resp.error {
            return Err(Error::Protocol(format!("server error: {msg}")));
        }
        Ok(resp)
    }
}

/// Client side of the protocol. Calls are serialized over one connection.
pub struct RemoteModel<F> {
    vocab: Vocabulary,
    conn: Mutex<Connection>,
    _scalar: PhantomData<F>,
}

impl<F: Scalar> RemoteModel<F> {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        let reader = BufReader::new(stream.try_clone()?);
        Self::from_streams(reader, stream)
    }

    /// Uses an arbitrary byte stream pair (e.g. a child process's stdio).
    pub fn from_streams(reader: impl BufRead + Send + 'static, writer: impl Write + Send + 'static) -> Result<Self> {
        let mut conn = Connection {
            reader: Box::new(reader),
            writer: Box::new(writer),
        };
        let tokens = conn
            .call(&Request::Vocabulary)?
            .vocabulary
            .ok_or_else(|| Error::Protocol("vocabulary response lacks `vocabulary`".into()))?;
        Ok(Self {
            vocab: Vocabulary::new(tokens)?,
            conn: Mutex::new(conn),
            _scalar: PhantomData,
        })
    }
}

impl<F: Scalar> LanguageModel<F> for RemoteModel<F> {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next(&self, context: &Context, prefix: &[TokenId]) -> Result<ConditionalDistribution<F>> {
        let req = Request::Next {
            context: context.history(prefix),
        };
        let resp = self
            .conn
            .lock()
            .map_err(|_| Error::Protocol("connection poisoned".into()))?
            .call(&req)?;
        let logprobs = resp
            .logprobs
            .ok_or_else(|| Error::Protocol("next response lacks `logprobs`".into()))?;
        decode_logprobs(&logprobs, self.vocab.len())
    }
}

fn decode_logprobs<F: Scalar>(logprobs: &[f64], v: usize) -> Result<ConditionalDistribution<F>> {
    if logprobs.len() != v {
        return Err(Error::Protocol(format!("{} log-probabilities for vocabulary of {v}", logprobs.len())));
    }
    if logprobs.iter().any(|lp| !lp.is_finite()) {
        return Err(Error::Protocol("non-finite log-probability".into()));
    }
    let probs: Vec<f64> = logprobs.iter().map(|lp| lp.exp()).collect();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Protocol(format!("log-probabilities normalize to {total}")));
    }
    ConditionalDistribution::from_weights(probs.into_iter().map(F::lit).collect())
}

/// Answers protocol requests from `reader` using `model` until end of input.
pub fn serve_model<F: Scalar, M: LanguageModel<F> + ?Sized>(
    model: &M,
    reader: impl BufRead,
    mut writer: impl Write,
) -> Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Vocabulary) => Response {
                vocabulary: Some(model.vocabulary().tokens().to_vec()),
                ..Response::default()
            },
            Ok(Request::Next { context }) => match model.next(&Context::empty(), &context) {
                Ok(d) => Response {
                    logprobs: Some(d.probs().iter().map(|p| p.as_f64().ln()).collect()),
                    ..Response::default()
                },
                Err(e) => Response {
                    error: Some(e.to_string()),
                    ..Response::default()
                },
            },
            Err(e) => Response {
                error: Some(format!("bad request: {e}")),
                ..Response::default()
            },
        };
        let mut out = serde_json::to_string(&resp)?;
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_payloads() {
        assert!(matches!(decode_logprobs::<f64>(&[0.0, f64::NEG_INFINITY], 2), Err(Error::Protocol(_))));
        assert!(matches!(decode_logprobs::<f64>(&[-0.1, -0.1], 2), Err(Error::Protocol(_))));
        assert!(matches!(decode_logprobs::<f64>(&[0.0], 2), Err(Error::Protocol(_))));
        let d = decode_logprobs::<f64>(&[0.5f64.ln(), 0.5f64.ln()], 2).unwrap();
        assert!((d.prob(0) - 0.5).abs() < 1e-15);
    }
}
