//! Serves the reannotation API on a local port while a scripted "human"
//! thread polls it, accepts every canonicalizer suggestion and keeps the rest.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use aqua::config::preset;
use aqua::service::{router, ReannotationRequestView, RunState, ServiceHandle, StatusView};

fn http(port: u16, method: &str, path: &str, body: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).ok()?;
    let mut text = String::new();
    s.read_to_string(&mut text).ok()?;
    Some(text.split_once("\r\n\r\n")?.1.to_string())
}

fn annotator(port: u16) {
    loop {
        thread::sleep(Duration::from_millis(50));
        let Some(status) = http(port, "GET", "/api/status", "") else { continue };
        let status: StatusView = serde_json::from_str(&status).expect("status json");
        if status.state == RunState::Finished || status.state == RunState::Failed {
            return;
        }
        if !status.awaiting_oracle {
            continue;
        }
        let pending = http(port, "GET", "/api/reannotation/pending", "").unwrap_or_default();
        let pending: Vec<ReannotationRequestView> = serde_json::from_str(&pending).unwrap_or_default();
        for v in pending {
            let body = match &v.suggested {
                Some(s) => format!(r#"{{"action":"replace","term_surface":"{s}"}}"#),
                None => r#"{"action":"keep"}"#.to_string(),
            };
            let reply = http(port, "POST", &format!("/api/reannotation/{}", v.instance_id), &body);
            println!(
                "epoch {:?}: {} {:?} (model top: {}) -> {}",
                status.epoch,
                v.instance_id,
                v.surface_answer,
                v.top_predictions.first().map_or("-", |p| p.surface.as_str()),
                reply.unwrap_or_default()
            );
        }
    }
}

fn main() -> aqua::Result<()> {
    let doc = preset("remote-demo").expect("built-in preset").with_seed(Some(3));
    let cfg = doc.loop_config();
    let data = doc.load_data()?;
    let bundle = Arc::new(data.bundle);
    let (handle, mut oracle) = ServiceHandle::new(Arc::clone(&bundle), &cfg);

    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .expect("bind");
    let port = listener.local_addr().expect("address").port();
    let app = router(handle.clone());
    runtime.spawn(async move { axum::serve(listener, app).await });
    println!("serving on http://127.0.0.1:{port}");

    let human = thread::spawn(move || annotator(port));
    let mut observer = handle.observer();
    let result = aqua::experiment::run(&cfg, data.records, &bundle, &mut oracle, &mut observer);
    handle.finish(&result);
    human.join().expect("annotator thread");
    let result = result?;
    let m = result.final_metrics.expect("non-empty run");
    println!("final EM@1 {:.2}, outcomes {:?}", m.em1, result.outcome_ratios);
    Ok(())
}
