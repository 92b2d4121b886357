use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use super::message::{
    decode_request, encode_response, read_frame, write_frame, BoundResponse, Outcome, Status,
    REQUEST_MAGIC,
};
use crate::backbone::Backbone;
use crate::error::{Error, Result};

fn failure(request_id: u64, status: Status, message: String) -> Vec<u8> {
    encode_response(&BoundResponse {
        request_id,
        outcome: Outcome::Failed { status, message },
    })
    .expect("failure responses always encode")
}

/// Answers one encoded request. Never fails: problems become error
/// responses. Logs the request id, dims and timing only.
pub fn handle_request(backbone: &Backbone, bytes: &[u8]) -> Vec<u8> {
    let started = Instant::now();
    let req = match decode_request(bytes) {
        Ok(r) => r,
        Err(e) => {
            let id = if bytes.len() >= 14 && bytes[..4] == REQUEST_MAGIC {
                u64::from_le_bytes(bytes[6..14].try_into().unwrap())
            } else {
                0
            };
            log::warn!("request {id}: rejected ({} bytes)", bytes.len());
            return failure(id, Status::BadRequest, e.to_string());
        }
    };
    let dims = req.payload.dims().to_vec();
    let out = backbone
        .apply(&req.payload.cast::<f64>())
        .map(|r| r.cast::<f32>())
        .and_then(|r| {
            encode_response(&BoundResponse {
                request_id: req.request_id,
                outcome: Outcome::Ok(r),
            })
        });
    log::debug!("request {}: dims {dims:?} in {:?}", req.request_id, started.elapsed());
    match out {
        Ok(bytes) => bytes,
        Err(e) => failure(req.request_id, Status::ApplyFailed, e.to_string()),
    }
}

/// TCP worker: one thread accepting, one thread per connection.
pub struct Worker {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Worker {
    pub fn spawn(backbone: Backbone, listen: impl ToSocketAddrs) -> Result<Self> {
        backbone.require_shape_preserving()?;
        let listener = TcpListener::bind(listen)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let backbone = Arc::new(backbone);
        let flag = Arc::clone(&stop);
        let accept = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let b = Arc::clone(&backbone);
                        std::thread::spawn(move || serve_connection(&b, stream));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        });
        log::info!("worker listening on {addr}");
        Ok(Self {
            addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting new connections.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

fn serve_connection(backbone: &Backbone, mut stream: TcpStream) {
    let peer = stream.peer_addr().ok();
    loop {
        match read_frame(&mut stream) {
            Ok(None) => break,
            Ok(Some(bytes)) => {
                let reply = handle_request(backbone, &bytes);
                if write_frame(&mut stream, &reply).is_err() {
                    break;
                }
            }
            Err(Error::Io(_)) => break,
            Err(e) => {
                // A bad length prefix leaves no way to find the next frame.
                log::warn!("connection {peer:?}: {e}");
                let _ = write_frame(&mut stream, &failure(0, Status::BadRequest, e.to_string()));
                break;
            }
        }
    }
}
