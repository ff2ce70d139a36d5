//! `sleeve serve`: the live session behind a WebSocket.
//!
//! One task owns the [`LiveSession`] and is the only thing that touches it.
//! Connection tasks talk to it through a command queue and read its state
//! from watch channels, which always hold the latest telemetry and report,
//! so a slow client drops stale frames instead of stalling the control loop.
//! Retraining runs on the blocking pool. Only one operator is admitted at a
//! time; others get a `busy` message and are disconnected.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use sleeve_core::live::{Effect, LiveSession, RetrainResult};
use sleeve_core::session::Task;
use sleeve_core::wire::{
    decode_client, encode, ClientMessage, CommandEnvelope, ReportMessage, SeqGuard, ServerMessage, TelemetryFrame,
};
use sleeve_core::Seed;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch, Semaphore};
use tokio::time::MissedTickBehavior;

use crate::config::Config;
use crate::error::CliError;
use crate::ws::{self, FrameReader, FrameWriter, Message};

pub struct ServeOptions {
    pub task: Task,
    pub config: Config,
    pub seed: Seed,
}

enum Input {
    Command {
        env: CommandEnvelope,
        reply: oneshot::Sender<Result<(), String>>,
    },
    RetrainDone(sleeve_core::Result<RetrainResult>),
}

/// Handles shared by every connection task.
#[derive(Clone)]
struct Shared {
    commands: mpsc::Sender<Input>,
    telemetry: watch::Receiver<TelemetryFrame>,
    report: watch::Receiver<Option<ReportMessage>>,
    operator: Arc<Semaphore>,
    shutdown: watch::Receiver<bool>,
    telemetry_period: Duration,
}

/// Trains the initial learner, then serves until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, opts: ServeOptions, shutdown: F) -> Result<(), CliError>
where
    F: Future<Output = ()> + Send,
{
    let ServeOptions { task, config, seed } = opts;
    let telemetry_period = Duration::from_secs_f64(1.0 / config.telemetry_hz);
    let live = tokio::task::spawn_blocking(move || {
        LiveSession::new(task, config.session, config.perception, seed)
    })
    .await
    .map_err(|e| CliError::new("internal", e.to_string()))??;

    let (stop_tx, stop_rx) = watch::channel(false);
    let (cmd_tx, cmd_rx) = mpsc::channel(256);
    let (telemetry_tx, telemetry_rx) = watch::channel(live.telemetry());
    let (report_tx, report_rx) = watch::channel(None);
    let session = tokio::spawn(session_loop(live, cmd_tx.clone(), cmd_rx, telemetry_tx, report_tx, stop_rx.clone()));

    let shared = Shared {
        commands: cmd_tx,
        telemetry: telemetry_rx,
        report: report_rx,
        operator: Arc::new(Semaphore::new(1)),
        shutdown: stop_rx,
        telemetry_period,
    };

    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    tokio::spawn(connection(stream, peer, shared.clone()));
                }
                Err(e) => eprintln!("accept failed: {e}"),
            },
            () = &mut shutdown => break,
        }
    }
    let _ = stop_tx.send(true);
    let _ = session.await;
    Ok(())
}

async fn session_loop(
    mut live: LiveSession,
    self_tx: mpsc::Sender<Input>,
    mut rx: mpsc::Receiver<Input>,
    telemetry: watch::Sender<TelemetryFrame>,
    report: watch::Sender<Option<ReportMessage>>,
    mut shutdown: watch::Receiver<bool>,
) {
    let started = Instant::now();
    let tick = Duration::from_secs_f64(live.tick_s());
    let mut ticker = tokio::time::interval(tick);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            Some(input) = rx.recv() => match input {
                Input::Command { env, reply } => {
                    let result = match live.apply(&env.command, started.elapsed().as_secs_f64()) {
                        Ok(Effect::None) => Ok(()),
                        Ok(Effect::Retrain(job)) => {
                            let tx = self_tx.clone();
                            tokio::spawn(async move {
                                let result = tokio::task::spawn_blocking(move || job.run())
                                    .await
                                    .unwrap_or_else(|e| Err(sleeve_core::Error::Protocol(format!("retrain task failed: {e}"))));
                                let _ = tx.send(Input::RetrainDone(result)).await;
                            });
                            Ok(())
                        }
                        Err(e) => Err(e.to_string()),
                    };
                    telemetry.send_replace(live.telemetry());
                    let _ = reply.send(result);
                }
                Input::RetrainDone(result) => {
                    if let Ok(msg) = live.complete_retrain(result) {
                        report.send_replace(Some(msg));
                    }
                    telemetry.send_replace(live.telemetry());
                }
            },
            _ = ticker.tick() => {
                let phase = live.phase();
                // a rupture during a trial is recorded as the session fault
                let moved = live.tick().unwrap_or(true);
                if moved || live.phase() != phase {
                    telemetry.send_replace(live.telemetry());
                }
            }
            _ = shutdown.changed() => break,
        }
    }
}

async fn connection(mut stream: TcpStream, peer: SocketAddr, shared: Shared) {
    if let Err(e) = ws::accept(&mut stream).await {
        eprintln!("{peer}: handshake failed: {e}");
        return;
    }
    let (read, write) = stream.into_split();
    let mut writer = FrameWriter::server(write);
    let Ok(_permit) = shared.operator.clone().try_acquire_owned() else {
        let busy = ServerMessage::Busy {
            message: "another operator is connected".into(),
        };
        let _ = writer.text(&encode(&busy)).await;
        let _ = writer.send(&Message::Close).await;
        return;
    };

    let (out_tx, out_rx) = mpsc::channel::<Message>(64);
    let writer_task = tokio::spawn(write_loop(writer, out_rx, shared.clone()));
    read_loop(FrameReader::server(read), out_tx, shared).await;
    let _ = writer_task.await;
}

async fn read_loop(mut reader: FrameReader<tokio::net::tcp::OwnedReadHalf>, out: mpsc::Sender<Message>, shared: Shared) {
    let mut guard = SeqGuard::default();
    let mut shutdown = shared.shutdown.clone();
    loop {
        let msg = tokio::select! {
            m = reader.next() => m,
            _ = shutdown.changed() => break,
        };
        let text = match msg {
            Ok(Some(Message::Text(t))) => t,
            Ok(Some(Message::Ping(p))) => {
                let _ = out.send(Message::Pong(p)).await;
                continue;
            }
            Ok(Some(Message::Pong(_))) => continue,
            Ok(Some(Message::Binary(_))) => {
                let _ = out.send(error_message(None, "binary messages are not supported")).await;
                continue;
            }
            Ok(Some(Message::Close)) | Ok(None) | Err(_) => break,
        };
        let env = match decode_client(&text) {
            Ok(ClientMessage::Cmd(env)) => env,
            Err(e) => {
                let _ = out.send(error_message(None, &e.to_string())).await;
                continue;
            }
        };
        let seq = env.seq;
        if let Err(e) = guard.admit(seq) {
            let _ = out.send(error_message(Some(seq), &e.to_string())).await;
            continue;
        }
        let (reply, answer) = oneshot::channel();
        if shared.commands.send(Input::Command { env, reply }).await.is_err() {
            break;
        }
        match answer.await {
            Ok(Ok(())) => {}
            Ok(Err(message)) => {
                let _ = out.send(error_message(Some(seq), &message)).await;
            }
            Err(_) => break,
        }
    }
    let _ = out.send(Message::Close).await;
}

fn error_message(seq: Option<u64>, message: &str) -> Message {
    Message::Text(encode(&ServerMessage::Error {
        seq,
        message: message.to_string(),
    }))
}

async fn write_loop(
    mut writer: FrameWriter<tokio::net::tcp::OwnedWriteHalf>,
    mut out: mpsc::Receiver<Message>,
    shared: Shared,
) {
    let mut telemetry = shared.telemetry;
    let mut report = shared.report;
    let mut ticker = tokio::time::interval(shared.telemetry_period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    // a reconnecting console gets the finished report straight away
    let existing = report.borrow_and_update().clone();
    if let Some(r) = existing {
        if writer.text(&encode(&ServerMessage::Report(r))).await.is_err() {
            return;
        }
    }
    loop {
        let result = tokio::select! {
            _ = ticker.tick() => {
                let frame = telemetry.borrow_and_update().clone();
                writer.text(&encode(&ServerMessage::Frame(frame))).await
            }
            changed = report.changed() => {
                if changed.is_err() {
                    break;
                }
                let r = report.borrow_and_update().clone();
                match r {
                    Some(r) => writer.text(&encode(&ServerMessage::Report(r))).await,
                    None => Ok(()),
                }
            }
            msg = out.recv() => match msg {
                Some(Message::Close) | None => {
                    let _ = writer.send(&Message::Close).await;
                    break;
                }
                Some(m) => writer.send(&m).await,
            },
        };
        if result.is_err() {
            break;
        }
    }
}
