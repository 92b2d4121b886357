//! Envelope:
//!
//! ```text
//! magic "HBRQ" | "HBRS" (4) | version u16 (2) | request_id u64 (8)
//!   | status u8 (1) | reserved (3)
//! ```
//!
//! A request, or a response with status 0, continues with one f32 tensor
//! container. A failed response continues with `u32 length | UTF-8 message`.
//! On a byte stream every message travels as `u32 length | message`.

use std::io::{Read, Write};

use crate::container::{decode_tensor, encode_into, encoded_len, StoredTensor};
use crate::error::{Error, Result};
use crate::scalar::DType;
use crate::tensor::Tensor;

pub const REQUEST_MAGIC: [u8; 4] = *b"HBRQ";
pub const RESPONSE_MAGIC: [u8; 4] = *b"HBRS";
pub const PROTOCOL_VERSION: u16 = 1;
pub const ENVELOPE_LEN: usize = 18;
/// Largest payload a peer will accept, in elements.
pub const MAX_ELEMENTS: usize = 1 << 24;
const MAX_MESSAGE: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    /// The request could not be decoded.
    BadRequest = 1,
    /// The backbone rejected the payload.
    ApplyFailed = 2,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Status::Ok),
            1 => Some(Status::BadRequest),
            2 => Some(Status::ApplyFailed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRequest {
    pub request_id: u64,
    pub payload: Tensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok(Tensor<f32>),
    Failed { status: Status, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResponse {
    pub request_id: u64,
    pub outcome: Outcome,
}

impl BoundResponse {
    pub fn status(&self) -> Status {
        match &self.outcome {
            Outcome::Ok(_) => Status::Ok,
            Outcome::Failed { status, .. } => *status,
        }
    }

    /// The payload, or the remote failure as an error.
    pub fn into_payload(self) -> Result<Tensor<f32>> {
        match self.outcome {
            Outcome::Ok(t) => Ok(t),
            Outcome::Failed { status, message } => Err(Error::Remote {
                status: status.code(),
                message,
            }),
        }
    }
}

/// Wire size of a request carrying a tensor of these extents.
pub fn request_len(dims: &[usize]) -> usize {
    ENVELOPE_LEN + encoded_len(dims, DType::F32)
}

fn envelope(magic: [u8; 4], request_id: u64, status: u8, out: &mut Vec<u8>) {
    out.extend_from_slice(&magic);
    out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    out.extend_from_slice(&request_id.to_le_bytes());
    out.push(status);
    out.extend_from_slice(&[0; 3]);
}

pub fn encode_request(req: &BoundRequest) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(request_len(req.payload.dims()));
    envelope(REQUEST_MAGIC, req.request_id, 0, &mut out);
    encode_into(&req.payload, &mut out)?;
    Ok(out)
}

pub fn encode_response(resp: &BoundResponse) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    envelope(RESPONSE_MAGIC, resp.request_id, resp.status().code(), &mut out);
    match &resp.outcome {
        Outcome::Ok(t) => encode_into(t, &mut out)?,
        Outcome::Failed { message, .. } => {
            let text = &message.as_bytes()[..message.len().min(MAX_MESSAGE)];
            out.extend_from_slice(&(text.len() as u32).to_le_bytes());
            out.extend_from_slice(text);
        }
    }
    Ok(out)
}

/// Parsed envelope fields.
struct Header {
    request_id: u64,
    status: u8,
}

fn parse_header(bytes: &[u8], magic: [u8; 4]) -> Result<Header> {
    if bytes.len() < ENVELOPE_LEN {
        return Err(Error::protocol(
            bytes.len(),
            format!("envelope truncated: need {ENVELOPE_LEN} bytes, got {}", bytes.len()),
        ));
    }
    if bytes[..4] != magic {
        return Err(Error::protocol(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != PROTOCOL_VERSION {
        return Err(Error::protocol(4, format!("unsupported version {version}")));
    }
    Ok(Header {
        request_id: u64::from_le_bytes(bytes[6..14].try_into().unwrap()),
        status: bytes[14],
    })
}

fn decode_payload(bytes: &[u8]) -> Result<Tensor<f32>> {
    let body = &bytes[ENVELOPE_LEN..];
    let (t, used) = decode_tensor(body).map_err(|e| match e {
        Error::Format { offset, message } => Error::protocol(ENVELOPE_LEN + offset, message),
        other => other,
    })?;
    if used != body.len() {
        return Err(Error::protocol(ENVELOPE_LEN + used, "trailing bytes after payload"));
    }
    if t.dims().iter().product::<usize>() > MAX_ELEMENTS {
        return Err(Error::protocol(ENVELOPE_LEN + 6, format!("payload exceeds {MAX_ELEMENTS} elements")));
    }
    match t {
        StoredTensor::F32(t) => Ok(t),
        StoredTensor::F64(_) => Err(Error::protocol(ENVELOPE_LEN + 4, "payload must be f32")),
    }
}

pub fn decode_request(bytes: &[u8]) -> Result<BoundRequest> {
    let h = parse_header(bytes, REQUEST_MAGIC)?;
    if h.status != 0 {
        return Err(Error::protocol(14, format!("request status must be 0, got {}", h.status)));
    }
    Ok(BoundRequest {
        request_id: h.request_id,
        payload: decode_payload(bytes)?,
    })
}

pub fn decode_response(bytes: &[u8]) -> Result<BoundResponse> {
    let h = parse_header(bytes, RESPONSE_MAGIC)?;
    let status = Status::from_code(h.status)
        .ok_or_else(|| Error::protocol(14, format!("unknown status {}", h.status)))?;
    let outcome = match status {
        Status::Ok => Outcome::Ok(decode_payload(bytes)?),
        _ => {
            let body = &bytes[ENVELOPE_LEN..];
            if body.len() < 4 {
                return Err(Error::protocol(bytes.len(), "failure message length truncated"));
            }
            let n = u32::from_le_bytes(body[..4].try_into().unwrap()) as usize;
            if body.len() != 4 + n {
                return Err(Error::protocol(
                    ENVELOPE_LEN + 4,
                    format!("failure message declares {n} bytes, carries {}", body.len() - 4),
                ));
            }
            Outcome::Failed {
                status,
                message: String::from_utf8_lossy(&body[4..]).into_owned(),
            }
        }
    };
    Ok(BoundResponse {
        request_id: h.request_id,
        outcome,
    })
}

/// Largest frame a peer will read: an envelope plus the biggest container.
pub const MAX_FRAME: usize = ENVELOPE_LEN + 6 + 4 * 255 + MAX_ELEMENTS * 8;

/// Writes one message as `u32 length | message` on a byte stream.
pub fn write_frame(w: &mut impl Write, message: &[u8]) -> Result<()> {
    let len = u32::try_from(message.len())
        .ok()
        .filter(|&n| n as usize <= MAX_FRAME)
        .ok_or_else(|| Error::protocol(0, format!("message of {} bytes is too large to frame", message.len())))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(message)?;
    w.flush()?;
    Ok(())
}

/// Reads one `u32 length | message` frame. Returns `None` on a clean end of
/// stream before the first byte.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < prefix.len() {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::protocol(got, "stream ended inside a length prefix")),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(Error::Io(e)),
        }
    }
    let len = u32::from_le_bytes(prefix) as usize;
    if len > MAX_FRAME {
        return Err(Error::protocol(0, format!("frame of {len} bytes exceeds the {MAX_FRAME}-byte limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::protocol(4, format!("stream ended inside a {len}-byte frame"))
        } else {
            Error::Io(e)
        }
    })?;
    Ok(Some(buf))
}
