use std::io::{BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::{parse_message, Error, Hl7Message};

pub const FRAME_START: u8 = 0x0B;
pub const FRAME_END: [u8; 2] = [0x1C, 0x0D];

/// Frames larger than this are rejected while reading.
const MAX_FRAME: usize = 16 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AckCode {
    AA,
    AE,
    AR,
}

impl AckCode {
    pub fn as_str(self) -> &'static str {
        match self {
            AckCode::AA => "AA",
            AckCode::AE => "AE",
            AckCode::AR => "AR",
        }
    }

    pub fn parse(s: &str) -> Option<AckCode> {
        match s {
            "AA" | "CA" => Some(AckCode::AA),
            "AE" | "CE" => Some(AckCode::AE),
            "AR" | "CR" => Some(AckCode::AR),
            _ => None,
        }
    }
}

pub fn mllp_frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 3);
    out.push(FRAME_START);
    out.extend_from_slice(payload);
    out.extend_from_slice(&FRAME_END);
    out
}

pub fn mllp_unframe(frame: &[u8]) -> Result<Vec<u8>, Error> {
    let inner = frame
        .strip_prefix(&[FRAME_START])
        .ok_or_else(|| Error::BadFrame("missing start byte".into()))?;
    let inner = inner
        .strip_suffix(&FRAME_END)
        .ok_or_else(|| Error::BadFrame("missing end bytes".into()))?;
    Ok(inner.to_vec())
}

fn io_error(e: std::io::Error, timeout: Duration) -> Error {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Timeout(timeout),
        _ => Error::Io(e),
    }
}

/// Reads one frame and returns its payload, or `None` on a clean end of
/// stream before any frame byte.
pub fn read_frame<R: Read>(reader: &mut BufReader<R>) -> Result<Option<Vec<u8>>, Error> {
    let mut first = [0u8; 1];
    match reader.read(&mut first)? {
        0 => return Ok(None),
        _ if first[0] != FRAME_START => {
            return Err(Error::BadFrame(format!("expected 0x0B, got {:#04x}", first[0])))
        }
        _ => {}
    }
    let mut payload = Vec::new();
    loop {
        let n = reader.read_until(FRAME_END[0], &mut payload)?;
        if n == 0 || payload.last() != Some(&FRAME_END[0]) {
            return Err(Error::BadFrame("stream ended inside a frame".into()));
        }
        if payload.len() > MAX_FRAME {
            return Err(Error::BadFrame("frame too large".into()));
        }
        let mut cr = [0u8; 1];
        reader.read_exact(&mut cr).map_err(|_| Error::BadFrame("stream ended inside a frame".into()))?;
        if cr[0] == FRAME_END[1] {
            payload.pop();
            return Ok(Some(payload));
        }
        payload.push(cr[0]);
    }
}

/// Sends one message and waits up to `timeout` for the framed
/// acknowledgement, returning its MSA-1 disposition.
pub fn mllp_send(endpoint: &str, msg: &Hl7Message, timeout: Duration) -> Result<AckCode, Error> {
    let deadline = Instant::now() + timeout;
    let addrs: Vec<_> = endpoint
        .to_socket_addrs()
        .map_err(|e| Error::ConnectionRefused(format!("{endpoint}: {e}")))?
        .collect();
    let mut stream = None;
    let mut last = String::from("no address");
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(s) => {
                stream = Some(s);
                break;
            }
            Err(e) => last = e.to_string(),
        }
    }
    let mut stream = stream.ok_or_else(|| Error::ConnectionRefused(format!("{endpoint}: {last}")))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.write_all(&mllp_frame(&msg.encode()?)).map_err(|e| io_error(e, timeout))?;
    let remaining = deadline.saturating_duration_since(Instant::now());
    if remaining.is_zero() {
        return Err(Error::Timeout(timeout));
    }
    stream.set_read_timeout(Some(remaining))?;
    let mut reader = BufReader::new(stream);
    let payload = match read_frame(&mut reader) {
        Ok(Some(p)) => p,
        Ok(None) => return Err(Error::BadFrame("connection closed without acknowledgement".into())),
        Err(Error::Io(e)) => return Err(io_error(e, timeout)),
        Err(e) => return Err(e),
    };
    let ack = parse_message(&payload)?;
    let code = ack.value("MSA", 1).unwrap_or_default();
    AckCode::parse(&code).ok_or_else(|| Error::InvariantViolation(format!("acknowledgement code {code:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing() {
        assert_eq!(mllp_frame(b""), vec![0x0B, 0x1C, 0x0D]);
        assert_eq!(mllp_unframe(&mllp_frame(b"abc")).unwrap(), b"abc");
        assert!(matches!(mllp_unframe(b"\x0babc"), Err(Error::BadFrame(_))));
        assert!(matches!(mllp_unframe(b"abc\x1c\x0d"), Err(Error::BadFrame(_))));
    }

    #[test]
    fn reads_consecutive_frames() {
        let mut bytes = mllp_frame(b"a\x1cb");
        bytes.extend(mllp_frame(b"second"));
        let mut r = BufReader::new(&bytes[..]);
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"a\x1cb");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"second");
        assert!(read_frame(&mut r).unwrap().is_none());
        let mut bad = BufReader::new(&b"\x0bunterminated"[..]);
        assert!(matches!(read_frame(&mut bad), Err(Error::BadFrame(_))));
    }
}
