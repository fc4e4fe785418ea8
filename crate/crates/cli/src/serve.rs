//! WebSocket front end. A dedicated simulation thread owns the [`Session`];
//! connection tasks talk to it only through queues.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use hullwatch::session::{ClientId, Outgoing, ServerMessage, Session, SessionConfig};
use tokio::sync::{mpsc as tmpsc, oneshot};

enum Inbound {
    Connect {
        out: tmpsc::UnboundedSender<String>,
        reply: oneshot::Sender<ClientId>,
    },
    Frame(ClientId, String),
    Disconnect(ClientId),
    Shutdown,
}

pub fn run(config: SessionConfig) -> anyhow::Result<()> {
    let session = Session::new(config.clone())?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen)
            .await
            .map_err(|e| anyhow::anyhow!("cannot bind {}: {e}", config.listen))?;
        eprintln!("listening on ws://{}/ws", listener.local_addr()?);
        let (tx, rx) = mpsc::channel();
        let sim = std::thread::spawn(move || sim_loop(session, rx));
        let app = Router::new().route("/ws", get(upgrade)).with_state(tx.clone());
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        let _ = tx.send(Inbound::Shutdown);
        sim.join()
            .map_err(|_| anyhow::anyhow!("simulation thread panicked"))?
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(tx): State<mpsc::Sender<Inbound>>) -> Response {
    ws.on_upgrade(move |socket| client(socket, tx))
}

async fn client(socket: WebSocket, tx: mpsc::Sender<Inbound>) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = tmpsc::unbounded_channel::<String>();
    let (id_tx, id_rx) = oneshot::channel();
    if tx.send(Inbound::Connect { out: out_tx, reply: id_tx }).is_err() {
        return;
    }
    let Ok(id) = id_rx.await else { return };
    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        if tx.send(Inbound::Frame(id, text)).is_err() {
            break;
        }
    }
    let _ = tx.send(Inbound::Disconnect(id));
    writer.abort();
}

fn sim_loop(mut session: Session, rx: mpsc::Receiver<Inbound>) -> anyhow::Result<()> {
    let mut clients: BTreeMap<ClientId, tmpsc::UnboundedSender<String>> = BTreeMap::new();
    let dt = session.scene().world.dt;
    let rf = session.config().realtime_factor;
    let period = Duration::from_secs_f64(if rf > 0.0 { dt / rf } else { 0.0 });
    let idle = Duration::from_secs_f64(dt);
    let mut next = Instant::now();
    let send = |clients: &BTreeMap<ClientId, tmpsc::UnboundedSender<String>>, to: Option<ClientId>, msg: &ServerMessage| {
        let text = msg.to_json();
        for (id, out) in clients {
            if to.is_none_or(|t| t == *id) {
                let _ = out.send(text.clone());
            }
        }
    };
    'run: loop {
        loop {
            match rx.try_recv() {
                Ok(Inbound::Connect { out, reply }) => {
                    let (id, welcome) = session.connect();
                    let _ = out.send(welcome.to_json());
                    clients.insert(id, out);
                    let _ = reply.send(id);
                }
                Ok(Inbound::Frame(id, text)) => {
                    let reply = session.handle_text(id, &text);
                    send(&clients, Some(id), &reply);
                }
                Ok(Inbound::Disconnect(id)) => {
                    session.disconnect(id);
                    clients.remove(&id);
                }
                Ok(Inbound::Shutdown) | Err(mpsc::TryRecvError::Disconnected) => break 'run,
                Err(mpsc::TryRecvError::Empty) => break,
            }
        }
        let snapshot = session.step()?;
        for out in session.drain_outbox() {
            match out {
                Outgoing::To(id, msg) => send(&clients, Some(id), &msg),
                Outgoing::All(msg) => send(&clients, None, &msg),
            }
        }
        if let Some(snap) = snapshot {
            send(&clients, None, &ServerMessage::Snapshot(Box::new(snap)));
        }
        let step = if session.is_paused() { idle } else { period };
        next += step;
        let now = Instant::now();
        if next > now {
            std::thread::sleep(next - now);
        } else {
            next = now;
        }
    }
    session.finish()?;
    Ok(())
}
