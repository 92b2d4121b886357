use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};

use super::message::{read_frame, write_frame};
use super::worker::handle_request;
use crate::backbone::Backbone;
use crate::error::{Error, Result};

/// Carries one encoded request to a worker and returns its encoded response.
pub trait Transport {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        (**self).round_trip(request)
    }
}

fn transport_err(e: impl std::fmt::Display) -> Error {
    Error::Transport(e.to_string())
}

/// One persistent TCP connection.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(transport_err)?;
        stream.set_nodelay(true).map_err(transport_err)?;
        Ok(Self { stream })
    }
}

impl Transport for TcpTransport {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        write_frame(&mut self.stream, request).map_err(|e| match e {
            Error::Io(e) => transport_err(e),
            other => other,
        })?;
        match read_frame(&mut self.stream) {
            Ok(Some(bytes)) => Ok(bytes),
            Ok(None) => Err(Error::Transport("worker closed the connection".into())),
            Err(Error::Io(e)) => Err(transport_err(e)),
            Err(e) => Err(e),
        }
    }
}

/// In-process worker.
#[derive(Clone)]
pub struct Loopback {
    backbone: Arc<Backbone>,
}

impl Loopback {
    pub fn new(backbone: Backbone) -> Result<Self> {
        backbone.require_shape_preserving()?;
        Ok(Self {
            backbone: Arc::new(backbone),
        })
    }
}

impl Transport for Loopback {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        Ok(handle_request(&self.backbone, request))
    }
}

/// One request and the response it produced, as seen on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub request: Vec<u8>,
    pub response: Vec<u8>,
}

/// Shared log of exchanges; clones see the same log.
#[derive(Debug, Clone, Default)]
pub struct Transcript(Arc<Mutex<Vec<Exchange>>>);

impl Transcript {
    pub fn exchanges(&self) -> Vec<Exchange> {
        self.0.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether `needle` occurs in any recorded request or response.
    pub fn contains(&self, needle: &[u8]) -> bool {
        if needle.is_empty() {
            return true;
        }
        self.0.lock().unwrap().iter().any(|e| {
            [&e.request, &e.response]
                .iter()
                .any(|buf| buf.windows(needle.len()).any(|w| w == needle))
        })
    }
}

/// Records every exchange passing through `inner`.
pub struct Recording<T> {
    inner: T,
    transcript: Transcript,
}

impl<T: Transport> Recording<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            transcript: Transcript::default(),
        }
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.clone()
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        let response = self.inner.round_trip(request)?;
        self.transcript.0.lock().unwrap().push(Exchange {
            request: request.to_vec(),
            response: response.clone(),
        });
        Ok(response)
    }
}
