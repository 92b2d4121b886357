use super::message::{decode_response, encode_request, BoundRequest};
use super::transport::Transport;
use crate::backbone::layers::softmax;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::trainer::Head;
use crate::vsa::{bind, sample_secret, unbind, Secret};

/// How one input is queried: `k` replicates, each with a fresh secret drawn
/// from `stream`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    pub k: usize,
    pub stream: RngStream,
    pub endpoint: String,
}

impl QueryPlan {
    pub fn new(k: usize, stream: RngStream, endpoint: impl Into<String>) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        Ok(Self {
            k,
            stream,
            endpoint: endpoint.into(),
        })
    }

    /// Secret of replicate `j` for inputs of extents `dims`.
    pub fn replicate_secret(&self, dims: &[usize], j: usize) -> Result<Secret<f64>> {
        Ok(sample_secret::<f64>(dims, &self.stream.derive(&[1, j as u64]))?.0)
    }
}

/// Sends `k` bound replicates of `x` and returns the worker outputs after
/// unbinding, in replicate order.
pub fn query_unbound(
    x: &Tensor<f64>,
    plan: &QueryPlan,
    transport: &mut dyn Transport,
) -> Result<Vec<Tensor<f64>>> {
    if plan.k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let (base_id, _) = plan.stream.derive(&[0]).draw(rand::Rng::random::<u64>);
    (0..plan.k)
        .map(|j| {
            let mut s = plan.replicate_secret(x.dims(), j)?;
            let request_id = base_id.wrapping_add(j as u64);
            let request = encode_request(&BoundRequest {
                request_id,
                payload: bind(x, &s)?.cast::<f32>(),
            })?;
            let reply = transport.round_trip(&request);
            let result = reply.and_then(|bytes| {
                let resp = decode_response(&bytes)?;
                if resp.request_id != request_id {
                    return Err(Error::protocol(
                        6,
                        format!("response echoes id {}, expected {request_id}", resp.request_id),
                    ));
                }
                let r = resp.into_payload()?.cast::<f64>().reshape(x.dims().to_vec())?;
                unbind(&r, &s)
            });
            s.erase();
            result
        })
        .collect()
}

/// Mean of the `k` softmax outputs of `head` on the unbound replicates.
pub fn client_infer(
    x: &Tensor<f64>,
    plan: &QueryPlan,
    head: &Head,
    transport: &mut dyn Transport,
) -> Result<Vec<f64>> {
    let outputs = query_unbound(x, plan, transport)?;
    let mut mean = vec![0.0; head.classes()];
    for u in &outputs {
        if u.len() != head.inputs() {
            return Err(Error::shape(format!(
                "head takes {} features, worker output has {}",
                head.inputs(),
                u.len()
            )));
        }
        for (m, p) in mean.iter_mut().zip(softmax(&head.logits(u.data()))) {
            *m += p / outputs.len() as f64;
        }
    }
    Ok(mean)
}
