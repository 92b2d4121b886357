use std::io::Write;
use std::net::TcpStream;

use holobind::backbone::{parse_spec, Backbone, TOY_FW_SPEC};
use holobind::backbone::layers::softmax;
use holobind::container::encode_tensor;
use holobind::protocol::{
    client_infer, cost_report, decode_request, decode_response, encode_request, encode_response, handle_request,
    head_flops, query_unbound, read_frame, request_len, write_frame, BoundRequest, BoundResponse, Loopback,
    Outcome, QueryPlan, Recording, Status, TcpTransport, Transport, Worker, ENVELOPE_LEN, MAX_FRAME,
    REQUEST_MAGIC,
};
use holobind::rng::gaussian_tensor;
use holobind::tensor::Tensor;
use holobind::trainer::{ToyModel, HIDDEN};
use holobind::{Error, RngStream};
use proptest::prelude::*;

fn payload(dims: &[usize], seed: u64) -> Tensor<f32> {
    gaussian_tensor::<f32>(dims, 1.0, &RngStream::new(seed)).unwrap().0
}

fn identity(dims: [usize; 3]) -> Backbone {
    let text = format!("input {} {} {}\nidentity\n", dims[0], dims[1], dims[2]);
    Backbone::from_spec(&parse_spec(&text).unwrap()).unwrap()
}

fn toy() -> Backbone {
    Backbone::from_spec(&parse_spec(TOY_FW_SPEC).unwrap()).unwrap()
}

fn request(id: u64, seed: u64) -> Vec<u8> {
    encode_request(&BoundRequest {
        request_id: id,
        payload: payload(&[16, 16, 1], seed),
    })
    .unwrap()
}

#[test]
fn request_size_is_envelope_plus_container() {
    let bytes = request(7, 1);
    assert_eq!(bytes.len(), 18 + (4 + 1 + 1 + 12 + 1024));
    assert_eq!(bytes.len(), 1060);
    assert_eq!(request_len(&[16, 16, 1]), 1060);
    assert_eq!(&bytes[..4], &REQUEST_MAGIC);
    assert_eq!(&bytes[4..6], &[1, 0]);
    assert_eq!(&bytes[6..14], &7u64.to_le_bytes());
    assert_eq!(&bytes[14..18], &[0, 0, 0, 0]);
    let container = encode_tensor(&payload(&[16, 16, 1], 1)).unwrap();
    assert_eq!(&bytes[ENVELOPE_LEN..], &container[..]);
}

#[test]
fn messages_round_trip() {
    let req = BoundRequest {
        request_id: u64::MAX,
        payload: payload(&[5, 3, 2], 4),
    };
    assert_eq!(decode_request(&encode_request(&req).unwrap()).unwrap(), req);
    let ok = BoundResponse {
        request_id: 3,
        outcome: Outcome::Ok(payload(&[4, 4], 5)),
    };
    assert_eq!(decode_response(&encode_response(&ok).unwrap()).unwrap(), ok);
    let failed = BoundResponse {
        request_id: 9,
        outcome: Outcome::Failed {
            status: Status::ApplyFailed,
            message: "shape".into(),
        },
    };
    let back = decode_response(&encode_response(&failed).unwrap()).unwrap();
    assert_eq!(back, failed);
    assert!(matches!(back.into_payload(), Err(Error::Remote { status: 2, .. })));
}

#[test]
fn unsupported_version() {
    let mut bytes = request(1, 1);
    bytes[4] = 255;
    match decode_request(&bytes).unwrap_err() {
        Error::Protocol { offset, message } => {
            assert_eq!(offset, 4);
            assert!(message.contains("unsupported version"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn header_errors_carry_offsets() {
    let bytes = request(1, 1);
    let mut bad = bytes.clone();
    bad[0] = b'Z';
    assert!(matches!(decode_request(&bad), Err(Error::Protocol { offset: 0, .. })));
    assert!(matches!(decode_request(&bytes[..10]), Err(Error::Protocol { offset: 10, .. })));
    assert!(matches!(
        decode_request(&bytes[..bytes.len() - 1]),
        Err(Error::Protocol { offset, .. }) if offset > ENVELOPE_LEN
    ));
    let mut status = bytes.clone();
    status[14] = 1;
    assert!(matches!(decode_request(&status), Err(Error::Protocol { offset: 14, .. })));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(matches!(decode_request(&trailing), Err(Error::Protocol { offset: 1060, .. })));
    // A response is not a request.
    let resp = handle_request(&identity([16, 16, 1]), &bytes);
    assert!(matches!(decode_request(&resp), Err(Error::Protocol { offset: 0, .. })));
}

#[test]
fn unknown_status_is_rejected() {
    let mut bytes = encode_response(&BoundResponse {
        request_id: 1,
        outcome: Outcome::Ok(payload(&[2, 2], 1)),
    })
    .unwrap();
    bytes[14] = 77;
    match decode_response(&bytes).unwrap_err() {
        Error::Protocol { offset, message } => {
            assert_eq!(offset, 14);
            assert!(message.contains("unknown status"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn f64_payload_is_rejected() {
    let mut bytes = request(1, 1)[..ENVELOPE_LEN].to_vec();
    bytes.extend(encode_tensor(&Tensor::<f64>::zeros(&[2, 2])).unwrap());
    assert!(matches!(decode_request(&bytes), Err(Error::Protocol { .. })));
}

#[test]
fn identity_worker_echoes_payload() {
    let b = identity([16, 16, 1]);
    let resp = decode_response(&handle_request(&b, &request(42, 3))).unwrap();
    assert_eq!(resp.request_id, 42);
    assert_eq!(resp.into_payload().unwrap(), payload(&[16, 16, 1], 3));
}

#[test]
fn worker_reports_failures_as_statuses() {
    let b = identity([16, 16, 1]);
    let wrong = encode_request(&BoundRequest {
        request_id: 5,
        payload: payload(&[8, 8, 1], 1),
    })
    .unwrap();
    let resp = decode_response(&handle_request(&b, &wrong)).unwrap();
    assert_eq!((resp.request_id, resp.status()), (5, Status::ApplyFailed));
    let mut garbled = request(6, 1);
    garbled[4] = 9;
    let resp = decode_response(&handle_request(&b, &garbled)).unwrap();
    assert_eq!((resp.request_id, resp.status()), (6, Status::BadRequest));
    let resp = decode_response(&handle_request(&b, b"nonsense")).unwrap();
    assert_eq!((resp.request_id, resp.status()), (0, Status::BadRequest));
}

#[test]
fn toy_worker_is_deterministic() {
    let b = toy();
    let first = handle_request(&b, &request(1, 8));
    for _ in 0..3 {
        assert_eq!(handle_request(&b, &request(1, 8)), first);
    }
    assert_eq!(decode_response(&first).unwrap().status(), Status::Ok);
}

#[test]
fn frames_round_trip_and_reject_bad_prefixes() {
    let mut buf = Vec::new();
    write_frame(&mut buf, b"abc").unwrap();
    write_frame(&mut buf, b"").unwrap();
    assert_eq!(&buf[..4], &3u32.to_le_bytes());
    let mut r = &buf[..];
    assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"abc");
    assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"");
    assert!(read_frame(&mut r).unwrap().is_none());
    let mut partial = &[1u8, 0][..];
    assert!(matches!(read_frame(&mut partial), Err(Error::Protocol { offset: 2, .. })));
    let huge = ((MAX_FRAME + 1) as u32).to_le_bytes();
    assert!(matches!(read_frame(&mut &huge[..]), Err(Error::Protocol { offset: 0, .. })));
    let short = [10u8, 0, 0, 0, 1, 2];
    assert!(matches!(read_frame(&mut &short[..]), Err(Error::Protocol { offset: 4, .. })));
}

#[test]
fn tcp_worker_serves_concurrent_clients() {
    let worker = Worker::spawn(identity([16, 16, 1]), "127.0.0.1:0").unwrap();
    let addr = worker.local_addr();
    let clients: Vec<_> = (0..2u64)
        .map(|c| {
            std::thread::spawn(move || {
                let mut t = TcpTransport::connect(addr).unwrap();
                for i in 0..100u64 {
                    let id = c * 1000 + i;
                    let resp = decode_response(&t.round_trip(&request(id, id)).unwrap()).unwrap();
                    assert_eq!(resp.request_id, id);
                    assert_eq!(resp.into_payload().unwrap(), payload(&[16, 16, 1], id));
                }
            })
        })
        .collect();
    for c in clients {
        c.join().unwrap();
    }
    worker.shutdown();
}

#[test]
fn malformed_request_keeps_the_connection() {
    let worker = Worker::spawn(identity([16, 16, 1]), "127.0.0.1:0").unwrap();
    let mut t = TcpTransport::connect(worker.local_addr()).unwrap();
    let wrong = encode_request(&BoundRequest {
        request_id: 11,
        payload: payload(&[4, 4, 1], 1),
    })
    .unwrap();
    let resp = decode_response(&t.round_trip(&wrong).unwrap()).unwrap();
    assert_eq!(resp.status(), Status::ApplyFailed);
    let resp = decode_response(&t.round_trip(b"HBRQ garbage").unwrap()).unwrap();
    assert_eq!(resp.status(), Status::BadRequest);
    let resp = decode_response(&t.round_trip(&request(12, 2)).unwrap()).unwrap();
    assert_eq!((resp.request_id, resp.status()), (12, Status::Ok));
}

#[test]
fn bad_length_prefix_is_answered_then_closed() {
    let worker = Worker::spawn(identity([16, 16, 1]), "127.0.0.1:0").unwrap();
    let mut s = TcpStream::connect(worker.local_addr()).unwrap();
    s.write_all(&u32::MAX.to_le_bytes()).unwrap();
    let reply = read_frame(&mut s).unwrap().unwrap();
    assert_eq!(decode_response(&reply).unwrap().status(), Status::BadRequest);
    assert!(read_frame(&mut s).unwrap().is_none());
}

#[test]
fn worker_refuses_shape_changing_backbones() {
    let b = Backbone::from_spec(&parse_spec("input 4 4 1\ndense 3 16 1\n").unwrap()).unwrap();
    assert!(matches!(Worker::spawn(b.clone(), "127.0.0.1:0"), Err(Error::Spec(_))));
    assert!(matches!(Loopback::new(b), Err(Error::Spec(_))));
}

#[test]
fn loopback_identity_reproduces_local_prediction() {
    let head = ToyModel::init(4, 3).pred;
    let x = gaussian_tensor::<f64>(&[16, 16, 1], 1.0, &RngStream::new(5)).unwrap().0;
    let local = softmax(&head.logits(x.data()));
    for k in [1, 3] {
        let plan = QueryPlan::new(k, RngStream::new(6), "loopback").unwrap();
        let mut t = Loopback::new(identity([16, 16, 1])).unwrap();
        let remote = client_infer(&x, &plan, &head, &mut t).unwrap();
        for (a, b) in remote.iter().zip(&local) {
            assert!((a - b).abs() <= 1e-5, "k = {k}: {a} vs {b}");
        }
    }
}

#[test]
fn tcp_identity_reproduces_local_prediction() {
    let worker = Worker::spawn(identity([16, 16, 1]), "127.0.0.1:0").unwrap();
    let head = ToyModel::init(4, 3).pred;
    let x = gaussian_tensor::<f64>(&[16, 16, 1], 1.0, &RngStream::new(5)).unwrap().0;
    let plan = QueryPlan::new(2, RngStream::new(6), worker.local_addr().to_string()).unwrap();
    let mut t = TcpTransport::connect(worker.local_addr()).unwrap();
    let remote = client_infer(&x, &plan, &head, &mut t).unwrap();
    for (a, b) in remote.iter().zip(softmax(&head.logits(x.data()))) {
        assert!((a - b).abs() <= 1e-5);
    }
}

#[test]
fn transcripts_hold_one_exchange_per_replicate_and_no_secrets() {
    let x = gaussian_tensor::<f64>(&[16, 16, 1], 1.0, &RngStream::new(1)).unwrap().0;
    let k = 4;
    let plan = QueryPlan::new(k, RngStream::new(2), "loopback").unwrap();
    let mut t = Recording::new(Loopback::new(toy()).unwrap());
    let outputs = query_unbound(&x, &plan, &mut t).unwrap();
    assert_eq!(outputs.len(), k);
    let transcript = t.transcript();
    assert_eq!(transcript.len(), k);
    let mut ids = Vec::new();
    for e in transcript.exchanges() {
        assert_eq!(e.request.len(), request_len(&[16, 16, 1]));
        let req = decode_request(&e.request).unwrap();
        let resp = decode_response(&e.response).unwrap();
        assert_eq!(req.request_id, resp.request_id);
        ids.push(req.request_id);
    }
    ids.dedup();
    assert_eq!(ids.len(), k);
    for j in 0..k {
        let s = plan.replicate_secret(&[16, 16, 1], j).unwrap();
        let f64_bytes: Vec<u8> = s.tensor().data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let f32_bytes: Vec<u8> = s.tensor().cast::<f32>().data().iter().flat_map(|v| v.to_le_bytes()).collect();
        assert!(!transcript.contains(&f64_bytes));
        assert!(!transcript.contains(&f32_bytes));
        for chunk in f32_bytes.chunks(16).chain(f64_bytes.chunks(16)) {
            assert!(!transcript.contains(chunk));
        }
    }
}

#[test]
fn averaging_identical_distributions_is_identity() {
    let head = ToyModel::init(4, 8).pred;
    let x = Tensor::<f64>::zeros(&[16, 16, 1]);
    let plan = QueryPlan::new(5, RngStream::new(1), "loopback").unwrap();
    let mut t = Loopback::new(identity([16, 16, 1])).unwrap();
    let mean = client_infer(&x, &plan, &head, &mut t).unwrap();
    for (a, b) in mean.iter().zip(softmax(&head.logits(x.data()))) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn client_surfaces_remote_failures() {
    let head = ToyModel::init(4, 8).pred;
    let x = Tensor::<f64>::zeros(&[16, 16, 1]);
    let plan = QueryPlan::new(1, RngStream::new(1), "loopback").unwrap();
    let mut t = Loopback::new(identity([8, 8, 4])).unwrap();
    assert!(matches!(
        client_infer(&x, &plan, &head, &mut t),
        Err(Error::Remote { status: 2, .. })
    ));
    assert!(QueryPlan::new(0, RngStream::new(1), "x").is_err());
}

#[test]
fn closed_endpoint_is_a_transport_error() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    assert!(matches!(TcpTransport::connect(addr), Err(Error::Transport(_))));
}

#[test]
fn cost_reports() {
    let h = head_flops(256, HIDDEN, 4);
    let id = cost_report(&parse_spec("input 16 16 1\nidentity\n").unwrap(), &[16, 16, 1], 1, h).unwrap();
    assert_eq!(id.remote_fraction(), 0.0);
    let spec = parse_spec(TOY_FW_SPEC).unwrap();
    let one = cost_report(&spec, &[16, 16, 1], 1, h).unwrap();
    assert!(one.remote_fraction() >= 0.65, "{}", one.remote_fraction());
    assert_eq!(one.bytes_up, 1060);
    assert_eq!(one.bytes_down, one.bytes_up);
    for k in [2, 5, 10] {
        let r = cost_report(&spec, &[16, 16, 1], k, h).unwrap();
        assert_eq!(r.bytes_up, k as u64 * one.bytes_up);
        assert_eq!(r.remote_flops, k as u64 * one.remote_flops);
        assert_eq!(r.local_flops, k as u64 * one.local_flops);
        assert!((r.remote_fraction() - one.remote_fraction()).abs() < 1e-12);
    }
    assert!(one.csv().starts_with("k,remote_flops,local_flops,remote_fraction,bytes_up,bytes_down\n1,"));
    assert!(cost_report(&spec, &[16, 16, 1], 0, h).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prop_request_round_trip(id in any::<u64>(), dims in proptest::collection::vec(1usize..6, 1..4), seed in any::<u64>()) {
        let req = BoundRequest { request_id: id, payload: payload(&dims, seed) };
        let bytes = encode_request(&req).unwrap();
        prop_assert_eq!(bytes.len(), request_len(&dims));
        prop_assert_eq!(decode_request(&bytes).unwrap(), req);
    }

    #[test]
    fn prop_truncation_never_panics(cut in 0usize..1060) {
        let bytes = request(1, 1);
        prop_assert!(decode_request(&bytes[..cut]).is_err());
    }
}
