//! One-round split inference: the client binds its input with a fresh
//! secret, the worker applies its backbone to the bound tensor, and the
//! client unbinds the reply before its own prediction head.

mod client;
mod cost;
mod message;
mod transport;
mod worker;

pub use client::{client_infer, query_unbound, QueryPlan};
pub use cost::{binding_flops, cost_report, FlopReport};
pub use message::{
    decode_request, decode_response, encode_request, encode_response, read_frame, request_len,
    write_frame, BoundRequest, BoundResponse, Outcome, Status, ENVELOPE_LEN, MAX_ELEMENTS,
    MAX_FRAME, PROTOCOL_VERSION, REQUEST_MAGIC, RESPONSE_MAGIC,
};
pub use transport::{Exchange, Loopback, Recording, TcpTransport, Transcript, Transport};
pub use worker::{handle_request, Worker};

/// Multiply-adds of a prediction head with `inputs -> hidden -> classes`.
pub fn head_flops(inputs: usize, hidden: usize, classes: usize) -> u64 {
    (inputs * hidden + hidden * classes) as u64
}
