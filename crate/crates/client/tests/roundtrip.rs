use gse_client::{Client, ClientError};
use gse_core::pipeline::{CostRequest, ForwardRequest};
use gse_core::SdeParams;

fn server() -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async {
            let running = gse_server::spawn(([127, 0, 0, 1], 0).into(), Some(1)).await.unwrap();
            tx.send(running.addr).unwrap();
            let _ = running.handle.await;
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

#[test]
fn client_talks_to_a_live_server() {
    let client = Client::new(&server()).unwrap();
    assert_eq!(client.health().unwrap().status, "ok");

    let table = client
        .cost(&CostRequest {
            n_phi: vec![0, 30],
            length: 80,
            ..Default::default()
        })
        .unwrap();
    assert_eq!(table.rows[1].ledger.score_net_forwards, 0);

    let err = client
        .simulate_forward(&ForwardRequest {
            sde: SdeParams {
                n_steps: 0,
                ..Default::default()
            },
            ..Default::default()
        })
        .unwrap_err();
    assert!(matches!(err, ClientError::Service { status: 400, .. }), "{err:?}");
    assert_eq!(err.kind(), "config");

    let missing = client.pull("no-such-stream").unwrap_err();
    assert_eq!(missing.kind(), "not_found");
}

#[test]
fn unreachable_service_is_a_transport_error() {
    let client = Client::new("http://127.0.0.1:9").unwrap();
    assert!(matches!(client.health(), Err(ClientError::Transport(_))));
}
