//! Byte-stream responder for the request/response link and the matching
//! TCP client used by `simulate --connect`.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use empc_core::harness::{FrameTransport, LawResponder};
use empc_core::runtime::ControlLaw;
use empc_core::wire::{REQUEST_LEN, RESPONSE_LEN};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub bytes_in: usize,
    pub answered: usize,
    pub frame_errors: usize,
    pub search_errors: usize,
}

impl ServeStats {
    fn add(&mut self, other: ServeStats) {
        self.bytes_in += other.bytes_in;
        self.answered += other.answered;
        self.frame_errors += other.frame_errors;
        self.search_errors += other.search_errors;
    }
}

/// Answers requests until the reader hits end of stream. Malformed bytes
/// are dropped and the decoder resynchronizes on the next header.
pub fn serve_stream<R: Read, W: Write>(law: &dyn ControlLaw, mut reader: R, mut writer: W) -> io::Result<ServeStats> {
    let mut responder = LawResponder::new(law);
    let mut buf = [0u8; 512];
    let mut out = Vec::with_capacity(RESPONSE_LEN * 4);
    let mut bytes_in = 0;
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        bytes_in += n;
        out.clear();
        responder.feed(&buf[..n], &mut out);
        if !out.is_empty() {
            writer.write_all(&out)?;
            writer.flush()?;
        }
    }
    Ok(ServeStats {
        bytes_in,
        answered: responder.answered,
        frame_errors: responder.frame_errors,
        search_errors: responder.search_errors,
    })
}

/// Handles one connection at a time. Stops after `connections` clients when
/// given, otherwise runs until the listener fails.
pub fn serve_listener(law: &dyn ControlLaw, listener: &TcpListener, connections: Option<usize>) -> io::Result<ServeStats> {
    let mut total = ServeStats::default();
    let mut served = 0;
    while connections.map_or(true, |c| served < c) {
        let (stream, peer) = listener.accept()?;
        stream.set_nodelay(true)?;
        log::info!("client {peer} connected");
        let stats = serve_stream(law, &stream, &stream)?;
        log::info!(
            "client {peer} done: {} answered, {} malformed, {} unanswerable",
            stats.answered,
            stats.frame_errors,
            stats.search_errors
        );
        total.add(stats);
        served += 1;
    }
    Ok(total)
}

/// Plant side of a TCP link: one request out, one response back.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        Ok(TcpTransport { stream })
    }
}

impl FrameTransport for TcpTransport {
    fn exchange(&mut self, request: &[u8; REQUEST_LEN]) -> Result<[u8; RESPONSE_LEN], String> {
        self.stream.write_all(request).map_err(|e| e.to_string())?;
        let mut resp = [0u8; RESPONSE_LEN];
        self.stream.read_exact(&mut resp).map_err(|e| e.to_string())?;
        Ok(resp)
    }
}
