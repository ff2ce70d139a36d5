mod common;

use std::time::{Duration, Instant};

use sleeve_cli::server::{serve, ServeOptions};
use sleeve_cli::ws::{self, FrameReader, FrameWriter, Message};
use sleeve_cli::Config;
use sleeve_core::session::task::bundled;
use sleeve_core::session::{OracleTeacher, ReteachTarget, ScriptFile, ScriptPose, ScriptTeacher};
use sleeve_core::wire::{
    decode_server, encode, ClientMessage, Command, CommandEnvelope, Phase, ReportMessage, ServerMessage,
};
use sleeve_core::Seed;
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;
use tokio::time::timeout;

use common::quick_config;

struct Server {
    addr: std::net::SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    handle: tokio::task::JoinHandle<()>,
}

impl Server {
    async fn start(config: Config, seed: u64) -> Server {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (stop, stopped) = oneshot::channel::<()>();
        let opts = ServeOptions {
            task: bundled::cleaning(),
            config,
            seed: Seed(seed),
        };
        let handle = tokio::spawn(async move {
            serve(listener, opts, async {
                let _ = stopped.await;
            })
            .await
            .unwrap();
        });
        Server {
            addr,
            stop: Some(stop),
            handle,
        }
    }

    async fn shutdown(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        timeout(Duration::from_secs(10), self.handle).await.unwrap().unwrap();
    }
}

struct Client {
    reader: FrameReader<OwnedReadHalf>,
    writer: FrameWriter<OwnedWriteHalf>,
    seq: u64,
}

impl Client {
    async fn connect(server: &Server) -> Client {
        // the server trains its learner before accepting; retry until it listens
        let mut stream = loop {
            if let Ok(s) = TcpStream::connect(server.addr).await {
                break s;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        };
        ws::connect(&mut stream, &server.addr.to_string(), "/").await.unwrap();
        let (r, w) = stream.into_split();
        Client {
            reader: FrameReader::client(r),
            writer: FrameWriter::client(w),
            seq: 0,
        }
    }

    async fn send(&mut self, command: Command) {
        self.seq += 1;
        self.send_seq(self.seq, command).await;
    }

    async fn send_seq(&mut self, seq: u64, command: Command) {
        let msg = ClientMessage::Cmd(CommandEnvelope { seq, command });
        self.writer.text(&encode(&msg)).await.unwrap();
    }

    async fn recv(&mut self) -> Option<ServerMessage> {
        loop {
            match timeout(Duration::from_secs(60), self.reader.next()).await.expect("server went quiet") {
                Ok(Some(Message::Text(t))) => return Some(decode_server(&t).unwrap()),
                Ok(Some(Message::Close)) | Ok(None) | Err(_) => return None,
                Ok(Some(_)) => continue,
            }
        }
    }

    /// Reads until `pick` returns something.
    async fn until<T>(&mut self, mut pick: impl FnMut(&ServerMessage) -> Option<T>) -> T {
        loop {
            let msg = self.recv().await.expect("connection closed");
            if let Some(t) = pick(&msg) {
                return t;
            }
        }
    }

    async fn until_phase(&mut self, phase: Phase) {
        self.until(|m| matches!(m, ServerMessage::Frame(f) if f.phase == phase).then_some(())).await
    }
}

fn pose(p: &ScriptPose) -> Command {
    Command::SetPose {
        s: p.s,
        x: p.x,
        y: p.y,
        t: Some(p.t),
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn demo_phases_arrive_in_order() {
    let server = Server::start(quick_config(), 1).await;
    let mut c = Client::connect(&server).await;
    c.until_phase(Phase::Idle).await;
    c.send(Command::StartDemo).await;
    for i in 0..100 {
        let s = i as f64 / 99.0;
        c.send(Command::SetPose {
            s,
            x: None,
            y: None,
            t: Some(i as f64 * 0.05),
        })
        .await;
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    c.send(Command::EndDemo).await;

    let mut phases = vec![Phase::Idle];
    let mut last_t = f64::NEG_INFINITY;
    while phases.len() < 3 {
        match c.recv().await.unwrap() {
            ServerMessage::Frame(f) => {
                assert!(f.t >= last_t, "frames reordered");
                last_t = f.t;
                if *phases.last().unwrap() != f.phase {
                    phases.push(f.phase);
                }
            }
            ServerMessage::Error { message, .. } => panic!("{message}"),
            _ => {}
        }
    }
    assert_eq!(phases, [Phase::Idle, Phase::Demo1, Phase::Idle]);
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn stale_sequence_numbers_are_rejected() {
    let server = Server::start(quick_config(), 1).await;
    let mut c = Client::connect(&server).await;
    c.send_seq(5, Command::StartDemo).await;
    c.send_seq(3, Command::SetPose { s: 0.1, x: None, y: None, t: Some(0.0) }).await;
    let (seq, message) = c
        .until(|m| match m {
            ServerMessage::Error { seq, message } => Some((*seq, message.clone())),
            _ => None,
        })
        .await;
    assert_eq!(seq, Some(3));
    assert!(message.contains("out-of-order"), "{message}");

    // commands out of phase come back as errors too, tagged with their seq
    c.send_seq(6, Command::Retrain).await;
    let seq = c.until(|m| match m {
        ServerMessage::Error { seq, .. } => Some(*seq),
        _ => None,
    })
    .await;
    assert_eq!(seq, Some(6));
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn second_operator_is_busy() {
    let server = Server::start(quick_config(), 1).await;
    let mut first = Client::connect(&server).await;
    first.until_phase(Phase::Idle).await;
    let mut second = Client::connect(&server).await;
    let msg = second.recv().await.unwrap();
    assert!(matches!(msg, ServerMessage::Busy { .. }), "{msg:?}");
    assert!(second.recv().await.is_none());

    // the first operator is unaffected, and leaving frees the slot
    first.until_phase(Phase::Idle).await;
    drop(first);
    let mut third = loop {
        let mut c = Client::connect(&server).await;
        match c.recv().await {
            Some(ServerMessage::Busy { .. }) => tokio::time::sleep(Duration::from_millis(50)).await,
            Some(_) => break c,
            None => panic!("closed"),
        }
    };
    third.until_phase(Phase::Idle).await;
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn service_report_matches_headless() {
    let config = quick_config();
    let task = bundled::cleaning();
    let script = ScriptFile::record(&mut OracleTeacher::new(ReteachTarget::Withheld), &task, &[]).unwrap();
    let headless = {
        let session = config.session.clone();
        let script = script.clone();
        tokio::task::spawn_blocking(move || {
            session
                .run(&bundled::cleaning(), &mut ScriptTeacher::new(script), Seed(7))
                .unwrap()
        })
        .await
        .unwrap()
    };
    let expected = ReportMessage::from_report(&headless.report).unwrap();

    let server = Server::start(config, 7).await;
    let mut c = Client::connect(&server).await;
    c.send(Command::StartDemo).await;
    for p in &script.first {
        c.send(pose(p)).await;
    }
    c.send(Command::EndDemo).await;
    c.send(Command::MarkSegment {
        start: script.range.0,
        end: script.range.1,
    })
    .await;
    c.send(Command::StartDemo).await;
    for p in &script.second {
        c.send(pose(p)).await;
    }
    c.send(Command::EndDemo).await;
    c.send(Command::Retrain).await;
    let report = c
        .until(|m| match m {
            ServerMessage::Report(r) => Some(r.clone()),
            ServerMessage::Error { message, .. } => panic!("{message}"),
            _ => None,
        })
        .await;
    assert_eq!(report, expected);
    c.until_phase(Phase::Done).await;

    // a reconnecting console is handed the report again
    drop(c);
    let mut again = loop {
        let mut c = Client::connect(&server).await;
        match c.recv().await {
            Some(ServerMessage::Busy { .. }) => tokio::time::sleep(Duration::from_millis(50)).await,
            Some(ServerMessage::Report(r)) => {
                assert_eq!(r, expected);
                break c;
            }
            other => panic!("expected the report first, got {other:?}"),
        }
    };
    again.until_phase(Phase::Done).await;
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reconnect_mid_demo_resumes_the_phase() {
    let server = Server::start(quick_config(), 2).await;
    let mut c = Client::connect(&server).await;
    c.send(Command::StartDemo).await;
    c.send(Command::SetPose { s: 0.0, x: None, y: None, t: Some(0.0) }).await;
    c.send(Command::SetPose { s: 0.05, x: None, y: None, t: Some(0.5) }).await;
    // frames run up to the latest pose time, then hold
    let t_before = c
        .until(|m| match m {
            ServerMessage::Frame(f) if f.phase == Phase::Demo1 && f.t > 0.45 => Some(f.t),
            _ => None,
        })
        .await;
    drop(c);

    let mut c = loop {
        let mut c = Client::connect(&server).await;
        match c.recv().await {
            Some(ServerMessage::Busy { .. }) => tokio::time::sleep(Duration::from_millis(50)).await,
            Some(ServerMessage::Frame(f)) => {
                assert_eq!(f.phase, Phase::Demo1);
                assert_eq!(f.t, t_before);
                break c;
            }
            other => panic!("{other:?}"),
        }
    };
    // a fresh connection starts a fresh sequence
    c.send(Command::SetPose { s: 0.1, x: None, y: None, t: Some(1.0) }).await;
    c.send(Command::EndDemo).await;
    c.until_phase(Phase::Idle).await;
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn telemetry_keeps_its_rate() {
    let server = Server::start(quick_config(), 1).await;
    let mut c = Client::connect(&server).await;
    c.until_phase(Phase::Idle).await;
    let mut arrivals = Vec::new();
    while arrivals.len() < 41 {
        if let Some(ServerMessage::Frame(_)) = c.recv().await {
            arrivals.push(Instant::now());
        }
    }
    let gaps: Vec<f64> = arrivals.windows(2).map(|w| (w[1] - w[0]).as_secs_f64()).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!((mean - 0.05).abs() <= 0.01, "mean spacing {mean}");
    let within = gaps.iter().filter(|g| (*g - 0.05).abs() <= 0.01).count();
    assert!(within * 10 >= gaps.len() * 9, "{within} of {} gaps within 20%", gaps.len());
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn ping_and_malformed_messages() {
    let server = Server::start(quick_config(), 1).await;
    let mut c = Client::connect(&server).await;
    c.writer.send(&Message::Ping(b"hi".to_vec())).await.unwrap();
    loop {
        match c.reader.next().await.unwrap().unwrap() {
            Message::Pong(p) => {
                assert_eq!(p, b"hi");
                break;
            }
            Message::Text(_) => continue,
            other => panic!("{other:?}"),
        }
    }
    c.writer.text("{\"type\":\"cmd\",\"seq\":1,\"kind\":\"fly\"}").await.unwrap();
    let seq = c
        .until(|m| match m {
            ServerMessage::Error { seq, .. } => Some(*seq),
            _ => None,
        })
        .await;
    assert_eq!(seq, None);
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn perception_trials_fill_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("ledger.csv");
    let mut config = quick_config();
    config.perception.interval_s = 0.05;
    config.perception.gap_s = 0.02;
    config.perception.ledger_path = Some(ledger.clone());
    let server = Server::start(config, 3).await;
    let mut c = Client::connect(&server).await;
    for i in 0..70 {
        c.send(Command::StartTrial).await;
        c.until_phase(Phase::TrialChoice).await;
        c.send(Command::SubmitChoice { chose_second: i % 2 == 0 }).await;
        c.until(|m| match m {
            ServerMessage::Frame(f) if matches!(f.phase, Phase::Idle) => Some(()),
            ServerMessage::Error { message, .. } => panic!("{message}"),
            _ => None,
        })
        .await;
    }
    let text = std::fs::read_to_string(&ledger).unwrap();
    assert_eq!(text.lines().count(), 71);
    c.send(Command::StartTrial).await;
    let message = c
        .until(|m| match m {
            ServerMessage::Error { message, .. } => Some(message.clone()),
            _ => None,
        })
        .await;
    assert!(message.contains("70"), "{message}");
    server.shutdown().await;
}
