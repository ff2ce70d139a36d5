//! Just enough RFC 6455 for one JSON operator connection.
//!
//! Text, close, ping and pong frames; fragmented messages are reassembled.
//! No extensions, no subprotocols.

use std::io;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use sha1::{Digest, Sha1};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

const GUID: &str = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
const MAX_HEADER: usize = 16 * 1024;
pub const MAX_MESSAGE: usize = 1 << 20;

const OP_CONT: u8 = 0x0;
const OP_TEXT: u8 = 0x1;
const OP_BINARY: u8 = 0x2;
const OP_CLOSE: u8 = 0x8;
const OP_PING: u8 = 0x9;
const OP_PONG: u8 = 0xA;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Text(String),
    Binary(Vec<u8>),
    Ping(Vec<u8>),
    Pong(Vec<u8>),
    Close,
}

fn protocol_error(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn accept_key(key: &str) -> String {
    let mut h = Sha1::new();
    h.update(key.trim().as_bytes());
    h.update(GUID.as_bytes());
    B64.encode(h.finalize())
}

/// Reads an HTTP head up to the blank line, one byte at a time so nothing
/// past it is consumed.
async fn read_head<S: AsyncRead + Unpin>(stream: &mut S) -> io::Result<String> {
    let mut buf = Vec::with_capacity(512);
    let mut byte = [0u8; 1];
    while !buf.ends_with(b"\r\n\r\n") {
        if stream.read(&mut byte).await? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed during handshake"));
        }
        buf.push(byte[0]);
        if buf.len() > MAX_HEADER {
            return Err(protocol_error("handshake header too large"));
        }
    }
    String::from_utf8(buf).map_err(|_| protocol_error("handshake is not UTF-8"))
}

fn header<'a>(head: &'a str, name: &str) -> Option<&'a str> {
    head.lines().skip(1).find_map(|l| {
        let (k, v) = l.split_once(':')?;
        k.trim().eq_ignore_ascii_case(name).then(|| v.trim())
    })
}

/// Server side of the opening handshake.
pub async fn accept<S: AsyncRead + AsyncWrite + Unpin>(stream: &mut S) -> io::Result<()> {
    let head = read_head(stream).await?;
    let upgrade = header(&head, "upgrade").is_some_and(|v| v.eq_ignore_ascii_case("websocket"));
    let key = header(&head, "sec-websocket-key");
    let (true, Some(key)) = (upgrade, key) else {
        stream
            .write_all(b"HTTP/1.1 400 Bad Request\r\ncontent-length: 0\r\nconnection: close\r\n\r\n")
            .await?;
        return Err(protocol_error("not a WebSocket upgrade request"));
    };
    let response = format!(
        "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {}\r\n\r\n",
        accept_key(key)
    );
    stream.write_all(response.as_bytes()).await?;
    stream.flush().await
}

/// Client side of the opening handshake.
pub async fn connect<S: AsyncRead + AsyncWrite + Unpin>(stream: &mut S, host: &str, path: &str) -> io::Result<()> {
    let key = B64.encode(mask_key().repeat(4));
    let request = format!(
        "GET {path} HTTP/1.1\r\nHost: {host}\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
    );
    stream.write_all(request.as_bytes()).await?;
    let head = read_head(stream).await?;
    if !head.starts_with("HTTP/1.1 101") {
        return Err(protocol_error(format!("upgrade refused: {}", head.lines().next().unwrap_or(""))));
    }
    if header(&head, "sec-websocket-accept") != Some(accept_key(&key).as_str()) {
        return Err(protocol_error("bad Sec-WebSocket-Accept"));
    }
    Ok(())
}

fn mask_key() -> [u8; 4] {
    use std::sync::atomic::{AtomicU32, Ordering};
    static COUNTER: AtomicU32 = AtomicU32::new(0x9e37_79b9);
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.subsec_nanos());
    let c = COUNTER.fetch_add(0x6d2b_79f5, Ordering::Relaxed);
    (nanos ^ c).rotate_left(13).to_le_bytes()
}

pub struct FrameReader<R> {
    inner: R,
    /// Servers require masked frames, clients refuse them.
    expect_masked: bool,
    /// Opcode and data of a fragmented message in progress.
    partial: Option<(u8, Vec<u8>)>,
}

impl<R: AsyncRead + Unpin> FrameReader<R> {
    pub fn server(inner: R) -> Self {
        FrameReader {
            inner,
            expect_masked: true,
            partial: None,
        }
    }

    pub fn client(inner: R) -> Self {
        FrameReader {
            inner,
            expect_masked: false,
            partial: None,
        }
    }

    async fn frame(&mut self) -> io::Result<(bool, u8, Vec<u8>)> {
        let mut h = [0u8; 2];
        self.inner.read_exact(&mut h).await?;
        let fin = h[0] & 0x80 != 0;
        if h[0] & 0x70 != 0 {
            return Err(protocol_error("reserved bits set"));
        }
        let opcode = h[0] & 0x0f;
        let masked = h[1] & 0x80 != 0;
        if masked != self.expect_masked {
            return Err(protocol_error("wrong masking for this side of the connection"));
        }
        let len = match h[1] & 0x7f {
            126 => self.inner.read_u16().await? as u64,
            127 => self.inner.read_u64().await?,
            n => n as u64,
        };
        if len > MAX_MESSAGE as u64 {
            return Err(protocol_error("frame too large"));
        }
        let mut mask = [0u8; 4];
        if masked {
            self.inner.read_exact(&mut mask).await?;
        }
        let mut payload = vec![0u8; len as usize];
        self.inner.read_exact(&mut payload).await?;
        if masked {
            payload.iter_mut().enumerate().for_each(|(i, b)| *b ^= mask[i % 4]);
        }
        Ok((fin, opcode, payload))
    }

    /// Next complete message; `None` on a clean end of stream.
    pub async fn next(&mut self) -> io::Result<Option<Message>> {
        loop {
            let (fin, opcode, payload) = match self.frame().await {
                Ok(f) => f,
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof && self.partial.is_none() => return Ok(None),
                Err(e) => return Err(e),
            };
            match opcode {
                OP_PING => return Ok(Some(Message::Ping(payload))),
                OP_PONG => return Ok(Some(Message::Pong(payload))),
                OP_CLOSE => return Ok(Some(Message::Close)),
                OP_TEXT | OP_BINARY if self.partial.is_none() => self.partial = Some((opcode, payload)),
                OP_CONT if self.partial.is_some() => {
                    let (_, buf) = self.partial.as_mut().unwrap();
                    buf.extend_from_slice(&payload);
                    if buf.len() > MAX_MESSAGE {
                        return Err(protocol_error("message too large"));
                    }
                }
                _ => return Err(protocol_error(format!("unexpected opcode {opcode:#x}"))),
            }
            if fin {
                let (op, data) = self.partial.take().unwrap();
                return Ok(Some(if op == OP_TEXT {
                    Message::Text(String::from_utf8(data).map_err(|_| protocol_error("text frame is not UTF-8"))?)
                } else {
                    Message::Binary(data)
                }));
            }
        }
    }
}

pub struct FrameWriter<W> {
    inner: W,
    mask: bool,
}

impl<W: AsyncWrite + Unpin> FrameWriter<W> {
    pub fn server(inner: W) -> Self {
        FrameWriter { inner, mask: false }
    }

    pub fn client(inner: W) -> Self {
        FrameWriter { inner, mask: true }
    }

    async fn frame(&mut self, opcode: u8, payload: &[u8]) -> io::Result<()> {
        let mut out = Vec::with_capacity(payload.len() + 14);
        out.push(0x80 | opcode);
        let mask_bit = if self.mask { 0x80 } else { 0 };
        match payload.len() {
            n if n < 126 => out.push(mask_bit | n as u8),
            n if n <= u16::MAX as usize => {
                out.push(mask_bit | 126);
                out.extend_from_slice(&(n as u16).to_be_bytes());
            }
            n => {
                out.push(mask_bit | 127);
                out.extend_from_slice(&(n as u64).to_be_bytes());
            }
        }
        if self.mask {
            let key = mask_key();
            out.extend_from_slice(&key);
            out.extend(payload.iter().enumerate().map(|(i, b)| b ^ key[i % 4]));
        } else {
            out.extend_from_slice(payload);
        }
        self.inner.write_all(&out).await?;
        self.inner.flush().await
    }

    pub async fn send(&mut self, msg: &Message) -> io::Result<()> {
        match msg {
            Message::Text(t) => self.frame(OP_TEXT, t.as_bytes()).await,
            Message::Binary(b) => self.frame(OP_BINARY, b).await,
            Message::Ping(p) => self.frame(OP_PING, p).await,
            Message::Pong(p) => self.frame(OP_PONG, p).await,
            Message::Close => self.frame(OP_CLOSE, &[]).await,
        }
    }

    pub async fn text(&mut self, text: &str) -> io::Result<()> {
        self.frame(OP_TEXT, text.as_bytes()).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accept_key_matches_the_rfc_example() {
        assert_eq!(accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
    }

    #[tokio::test]
    async fn frames_round_trip_both_ways() {
        let (a, b) = tokio::io::duplex(1 << 21);
        let (ar, aw) = tokio::io::split(a);
        let (br, bw) = tokio::io::split(b);
        let mut client_w = FrameWriter::client(aw);
        let mut server_r = FrameReader::server(br);
        let mut server_w = FrameWriter::server(bw);
        let mut client_r = FrameReader::client(ar);

        let long = "x".repeat(70_000);
        for m in [
            Message::Text("hello".into()),
            Message::Text("é".repeat(100)),
            Message::Text(long.clone()),
            Message::Ping(vec![1, 2]),
            Message::Close,
        ] {
            client_w.send(&m).await.unwrap();
            assert_eq!(server_r.next().await.unwrap(), Some(m.clone()));
            server_w.send(&m).await.unwrap();
            assert_eq!(client_r.next().await.unwrap(), Some(m));
        }
        drop(client_w);
        drop(client_r);
        assert_eq!(server_r.next().await.unwrap(), None);
    }

    #[tokio::test]
    async fn unmasked_client_frames_are_rejected() {
        let (a, b) = tokio::io::duplex(1024);
        let mut w = FrameWriter::server(a);
        let mut r = FrameReader::server(b);
        w.text("sneaky").await.unwrap();
        assert!(r.next().await.is_err());
    }

    #[tokio::test]
    async fn handshake() {
        let (mut a, mut b) = tokio::io::duplex(4096);
        let server = tokio::spawn(async move { accept(&mut b).await });
        connect(&mut a, "localhost", "/").await.unwrap();
        server.await.unwrap().unwrap();
    }
}
