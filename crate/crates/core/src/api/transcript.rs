//! Line-delimited JSON transcripts of every request/response pair.
//!
//! The first line is `{"descriptor": ...}`; each following line is a
//! [`TranscriptEntry`].

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ApiDescriptor, CompletionApi, CompletionRequest, CompletionResponse, CostLedger};
use crate::error::{Error, RejectCode, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptError {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<RejectCode>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: CompletionRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<CompletionResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TranscriptError>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    descriptor: ApiDescriptor,
}

/// Forwards to an inner API and logs every exchange.
pub struct Recorder<A> {
    inner: A,
    sink: Mutex<Box<dyn Write + Send>>,
}

impl<A: CompletionApi> Recorder<A> {
    pub fn new(inner: A, sink: impl Write + Send + 'static) -> Result<Self> {
        let mut sink: Box<dyn Write + Send> = Box::new(sink);
        serde_json::to_writer(&mut sink, &Header { descriptor: inner.descriptor() })?;
        sink.write_all(b"\n")?;
        Ok(Recorder { inner, sink: Mutex::new(sink) })
    }

    pub fn to_file(inner: A, path: impl AsRef<Path>) -> Result<Self> {
        Self::new(inner, BufWriter::new(File::create(path)?))
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    pub fn flush(&self) -> Result<()> {
        self.sink.lock().expect("transcript lock").flush()?;
        Ok(())
    }
}

impl<A: CompletionApi> CompletionApi for Recorder<A> {
    fn descriptor(&self) -> ApiDescriptor {
        self.inner.descriptor()
    }

    fn ledger(&self) -> CostLedger {
        self.inner.ledger()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let result = self.inner.complete(request);
        let entry = TranscriptEntry {
            request: request.clone(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| TranscriptError { code: e.reject_code(), message: e.to_string() }),
        };
        let mut sink = self.sink.lock().expect("transcript lock");
        serde_json::to_writer(&mut *sink, &entry)?;
        sink.write_all(b"\n")?;
        result
    }
}

impl<A> Drop for Recorder<A> {
    fn drop(&mut self) {
        if let Ok(mut sink) = self.sink.lock() {
            let _ = sink.flush();
        }
    }
}

/// Serves a recorded transcript back in order. Requests must match the
/// recording exactly.
pub struct Replay {
    descriptor: ApiDescriptor,
    entries: Mutex<VecDeque<TranscriptEntry>>,
    ledger: Mutex<CostLedger>,
}

impl Replay {
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| Error::Protocol("empty transcript".into()))??;
        let header: Header = serde_json::from_str(&header)?;
        let entries = lines
            .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str::<TranscriptEntry>(&l?)?))
            .collect::<Result<VecDeque<_>>>()?;
        Ok(Replay {
            descriptor: header.descriptor,
            entries: Mutex::new(entries),
            ledger: Mutex::new(CostLedger::default()),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().expect("replay lock").len()
    }
}

impl CompletionApi for Replay {
    fn descriptor(&self) -> ApiDescriptor {
        self.descriptor.clone()
    }

    fn ledger(&self) -> CostLedger {
        *self.ledger.lock().expect("replay lock")
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let entry = self
            .entries
            .lock()
            .expect("replay lock")
            .pop_front()
            .ok_or_else(|| Error::Protocol("transcript exhausted".into()))?;
        if &entry.request != request {
            return Err(Error::Protocol("request does not match the transcript".into()));
        }
        match (entry.response, entry.error) {
            (Some(response), _) => {
                self.ledger.lock().expect("replay lock").charge(response.usage);
                Ok(response)
            }
            (None, Some(TranscriptError { code: Some(code), message })) => Err(Error::Rejected { code, message }),
            (None, Some(TranscriptError { message, .. })) => Err(Error::Transport(message)),
            (None, None) => Err(Error::Protocol("transcript entry has neither response nor error".into())),
        }
    }
}
