//! Websocket front end: one recording session at a time.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message;

use cril_core::sim::SimConfig;

use crate::protocol::{decode_input, encode_frame, parse_command, Command, FrameMessage, Reply, BUSY_CLOSE_CODE};
use crate::session::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickMode {
    /// Advance on a wall-clock period; the latest keymask applies.
    Fixed(Duration),
    /// Advance once per input message. Used by scripted clients.
    Lockstep,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub out_dir: PathBuf,
    pub sim: SimConfig,
    pub tick: TickMode,
    /// Frames buffered for a slow client before streaming drops them.
    pub queue: usize,
}

impl ServeOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        let sim = SimConfig::default();
        Self { out_dir: out_dir.into(), sim, tick: TickMode::Fixed(Duration::from_secs_f64(sim.dt)), queue: 10 }
    }
}

struct Shared {
    options: ServeOptions,
    busy: AtomicBool,
    saved: AtomicU32,
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

/// Accepts clients until the listener fails.
pub async fn serve(listener: TcpListener, options: ServeOptions) -> std::io::Result<()> {
    std::fs::create_dir_all(&options.out_dir)?;
    let shared = Arc::new(Shared { options, busy: AtomicBool::new(false), saved: AtomicU32::new(0) });
    loop {
        let (stream, _) = listener.accept().await?;
        tokio::spawn(handle(stream, shared.clone()));
    }
}

async fn handle(stream: TcpStream, shared: Arc<Shared>) {
    let Ok(mut ws) = tokio_tungstenite::accept_async(stream).await else { return };
    if shared.busy.swap(true, Ordering::SeqCst) {
        let frame = CloseFrame { code: CloseCode::from(BUSY_CLOSE_CODE), reason: "busy".into() };
        let _ = ws.close(Some(frame)).await;
        return;
    }
    let _guard = BusyGuard(&shared.busy);
    run_session(ws, &shared).await;
}

/// Queues a frame for the writer. A full queue means the client is lagging, so
/// the frame is skipped on the wire; the terminal frame is always delivered.
async fn push(tx: &mpsc::Sender<Vec<u8>>, frame: FrameMessage) {
    let bytes = encode_frame(&frame);
    if frame.done {
        let _ = tx.send(bytes).await;
    } else {
        let _ = tx.try_send(bytes);
    }
}

async fn run_session(ws: tokio_tungstenite::WebSocketStream<TcpStream>, shared: &Shared) {
    let opts = &shared.options;
    let (mut sink, mut stream) = ws.split();
    let (frame_tx, mut frame_rx) = mpsc::channel::<Vec<u8>>(opts.queue.max(1));
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();

    let writer = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                biased;
                Some(r) = reply_rx.recv() => Message::text(r),
                Some(f) = frame_rx.recv() => Message::binary(f),
                else => break,
            };
            if sink.send(msg).await.is_err() {
                break;
            }
        }
    });

    let reply = |r: Reply| {
        let _ = reply_tx.send(r.to_json());
    };

    let mut session = Session::new(opts.sim);
    let mut keymask = 0u8;
    let period = match opts.tick {
        TickMode::Fixed(p) => p,
        TickMode::Lockstep => Duration::from_secs(3600),
    };
    let fixed = matches!(opts.tick, TickMode::Fixed(_));
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    loop {
        tokio::select! {
            msg = stream.next() => match msg {
                Some(Ok(Message::Binary(bytes))) => match decode_input(&bytes) {
                    Ok(mask) => {
                        keymask = mask;
                        if !fixed {
                            if let Some(f) = session.tick(keymask) {
                                push(&frame_tx, f).await;
                            }
                        }
                    }
                    Err(e) => reply(Reply::err(e.to_string())),
                },
                Some(Ok(Message::Text(text))) => match parse_command(&text) {
                    Ok(Command::Start { seed }) => match session.start(seed) {
                        Ok(frame) => {
                            keymask = 0;
                            ticker.reset();
                            reply(Reply::ok(format!("episode started on seed {seed}")));
                            push(&frame_tx, frame).await;
                        }
                        Err(e) => reply(Reply::err(e)),
                    },
                    Ok(Command::Stop) => match session.stop() {
                        Ok(n) => reply(Reply::ok(format!("stopped after {n} frames"))),
                        Err(e) => reply(Reply::err(e)),
                    },
                    Ok(Command::Save) => {
                        let n = shared.saved.fetch_add(1, Ordering::SeqCst);
                        match session.save(&opts.out_dir, n) {
                            Ok(path) => reply(Reply::ok(path.display().to_string())),
                            Err(e) => reply(Reply::err(e)),
                        }
                    }
                    Err(e) => reply(Reply::err(e)),
                },
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
            _ = ticker.tick(), if fixed && session.is_running() => {
                if let Some(f) = session.tick(keymask) {
                    push(&frame_tx, f).await;
                }
            }
        }
    }
    // Dropping the session discards any episode still in progress.
    drop(session);
    drop(frame_tx);
    drop(reply_tx);
    let _ = writer.await;
}
