use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start() -> (Server, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_hullwatch"))
        .args(["serve", "--listen", "127.0.0.1:0", "--realtime", "5"])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let server = Server(child);
    let mut line = String::new();
    loop {
        line.clear();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "server exited before listening");
        if let Some(url) = line.trim().strip_prefix("listening on ") {
            return (server, url.to_string());
        }
    }
}

async fn next(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("server went quiet")
            .expect("socket closed")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn send(ws: &mut Ws, frame: Value) -> Value {
    let id = frame["id"].clone();
    ws.send(Message::text(frame.to_string())).await.unwrap();
    loop {
        let m = next(ws).await;
        if m["ref"] == id {
            return m;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn teleop_session_over_websocket() {
    let (_server, url) = start();
    let (mut a, _) = connect_async(&url).await.unwrap();
    let welcome = next(&mut a).await;
    assert_eq!(welcome["type"], "Welcome");
    assert!(welcome["world"]["hull"].is_array());

    let teleop = |id: u64| json!({"id": id, "type": "Teleop", "surge_cmd": 1.0, "yaw_rate_cmd": 0.0});
    let r = send(&mut a, teleop(1)).await;
    assert_eq!((r["type"].as_str(), r["code"].as_str()), (Some("Err"), Some("WrongMode")));

    let r = send(&mut a, json!({"id": 2, "type": "SetMode", "mode": "Manual"})).await;
    assert_eq!((r["type"].as_str(), r["ok"].as_bool()), (Some("Ack"), Some(true)));

    let mut surged = false;
    for id in 3..200 {
        assert_eq!(send(&mut a, teleop(id)).await["type"], "Ack");
        let snap = loop {
            let m = next(&mut a).await;
            if m["type"] == "Snapshot" {
                break m;
            }
        };
        assert_eq!(snap["leader_mode"], "Manual");
        if (snap["leader"]["surge"].as_f64().unwrap() - 1.0).abs() < 1e-9 {
            surged = true;
            break;
        }
    }
    assert!(surged, "leader never reached full surge");

    let (mut b, _) = connect_async(&url).await.unwrap();
    assert_eq!(next(&mut b).await["type"], "Welcome");
    let r = send(&mut b, teleop(1)).await;
    assert_eq!(r["code"], "NotController");

    let r = send(&mut b, json!({"id": 2, "type": "NlCommand", "text": "dance a jig"})).await;
    assert_eq!(r["type"], "Err");

    b.send(Message::text("{not json")).await.unwrap();
    let r = loop {
        let m = next(&mut b).await;
        if m["type"] != "Snapshot" {
            break m;
        }
    };
    assert_eq!((r["code"].as_str(), &r["ref"]), (Some("BadFrame"), &Value::Null));
}
