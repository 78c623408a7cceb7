//! ASCII frame codec for the controller link.
//!
//! Request (37 bytes): `S f1 I f2 D f3 C f4 O f5 E f6 P`, each field is
//! `round(v·100)` in five characters, zero-padded, with '-' in the first
//! character for negatives. Response (7 bytes): `S ddddd P` carrying
//! `round(u·1000)`.

use core::fmt;

pub const REQUEST_LEN: usize = 37;
pub const RESPONSE_LEN: usize = 7;
pub const FIELD_LEN: usize = 5;
pub const BITS_PER_BYTE: usize = 10;
pub const REQUEST_SEPARATORS: [u8; 7] = *b"SIDCOEP";
pub const RESPONSE_HEADER: u8 = b'S';
pub const RESPONSE_END: u8 = b'P';

pub const REQUEST_MIN: f64 = -99.99;
pub const REQUEST_MAX: f64 = 999.99;
pub const RESPONSE_MAX: f64 = 99.999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolError {
    Range { field: usize, value: f64 },
    Frame { offset: usize, found: u8, expected: u8 },
    Parse { offset: usize, found: u8 },
    Length { expected: usize, found: usize },
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolError::Range { field, value } => write!(f, "field {field} value {value} not representable"),
            ProtocolError::Frame {
                offset,
                found,
                expected,
            } => write!(
                f,
                "frame error at offset {offset}: expected {:?}, found {:?}",
                *expected as char, *found as char
            ),
            ProtocolError::Parse { offset, found } => {
                write!(f, "parse error at offset {offset}: byte {found:#04x}")
            }
            ProtocolError::Length { expected, found } => {
                write!(f, "frame length {found}, expected {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ProtocolError {}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RequestFrame {
    /// Position estimate.
    pub x1: f64,
    /// Measured speed.
    pub x2: f64,
    /// Speed estimate.
    pub x3: f64,
    /// Disturbance estimate.
    pub x4: f64,
    pub u_prev: f64,
    pub r: f64,
}

impl RequestFrame {
    pub fn fields(&self) -> [f64; 6] {
        [self.x1, self.x2, self.x3, self.x4, self.u_prev, self.r]
    }

    pub fn from_fields(v: [f64; 6]) -> Self {
        RequestFrame {
            x1: v[0],
            x2: v[1],
            x3: v[2],
            x4: v[3],
            u_prev: v[4],
            r: v[5],
        }
    }

    /// The frame as the receiver will see it, or an error if a field is out of range.
    pub fn quantized(&self) -> Result<Self, ProtocolError> {
        let mut out = [0.0; 6];
        for (i, v) in self.fields().iter().enumerate() {
            out[i] = quantize(*v, 100.0, i, -9999, 99999)? as f64 / 100.0;
        }
        Ok(RequestFrame::from_fields(out))
    }
}

fn quantize(v: f64, scale: f64, field: usize, lo: i64, hi: i64) -> Result<i64, ProtocolError> {
    // f64::round is half away from zero
    let q = libm::round(v * scale);
    if !q.is_finite() || q < lo as f64 || q > hi as f64 {
        return Err(ProtocolError::Range { field, value: v });
    }
    Ok(q as i64)
}

fn write_field(out: &mut [u8], value: i64) {
    let (digits, mut n) = if value < 0 {
        out[0] = b'-';
        (&mut out[1..], (-value) as u64)
    } else {
        (&mut out[..], value as u64)
    };
    for slot in digits.iter_mut().rev() {
        *slot = b'0' + (n % 10) as u8;
        n /= 10;
    }
}

fn read_field(bytes: &[u8], base: usize) -> Result<i64, ProtocolError> {
    let (neg, digits, start) = if bytes[0] == b'-' {
        (true, &bytes[1..], 1)
    } else {
        (false, bytes, 0)
    };
    let mut n: i64 = 0;
    for (k, b) in digits.iter().enumerate() {
        if !b.is_ascii_digit() {
            return Err(ProtocolError::Parse {
                offset: base + start + k,
                found: *b,
            });
        }
        n = n * 10 + (b - b'0') as i64;
    }
    Ok(if neg { -n } else { n })
}

pub fn encode_request(frame: &RequestFrame) -> Result<[u8; REQUEST_LEN], ProtocolError> {
    let mut out = [0u8; REQUEST_LEN];
    for (i, v) in frame.fields().iter().enumerate() {
        let q = quantize(*v, 100.0, i, -9999, 99999)?;
        let at = i * (FIELD_LEN + 1);
        out[at] = REQUEST_SEPARATORS[i];
        write_field(&mut out[at + 1..at + 1 + FIELD_LEN], q);
    }
    out[REQUEST_LEN - 1] = REQUEST_SEPARATORS[6];
    Ok(out)
}

pub fn decode_request(bytes: &[u8]) -> Result<RequestFrame, ProtocolError> {
    if bytes.len() != REQUEST_LEN {
        // report the first bad separator inside what we have before the length
        check_request_separators(&bytes[..bytes.len().min(REQUEST_LEN)])?;
        return Err(ProtocolError::Length {
            expected: REQUEST_LEN,
            found: bytes.len(),
        });
    }
    check_request_separators(bytes)?;
    let mut v = [0.0; 6];
    for (i, slot) in v.iter_mut().enumerate() {
        let at = i * (FIELD_LEN + 1) + 1;
        *slot = read_field(&bytes[at..at + FIELD_LEN], at)? as f64 / 100.0;
    }
    Ok(RequestFrame::from_fields(v))
}

fn check_request_separators(bytes: &[u8]) -> Result<(), ProtocolError> {
    for (i, sep) in REQUEST_SEPARATORS.iter().enumerate() {
        let offset = i * (FIELD_LEN + 1);
        if let Some(&found) = bytes.get(offset) {
            if found != *sep {
                return Err(ProtocolError::Frame {
                    offset,
                    found,
                    expected: *sep,
                });
            }
        }
    }
    Ok(())
}

pub fn encode_response(u: f64) -> Result<[u8; RESPONSE_LEN], ProtocolError> {
    let q = quantize(u, 1000.0, 0, 0, 99999)?;
    let mut out = [0u8; RESPONSE_LEN];
    out[0] = RESPONSE_HEADER;
    write_field(&mut out[1..1 + FIELD_LEN], q);
    out[RESPONSE_LEN - 1] = RESPONSE_END;
    Ok(out)
}

pub fn decode_response(bytes: &[u8]) -> Result<f64, ProtocolError> {
    if let Some(&b) = bytes.first() {
        if b != RESPONSE_HEADER {
            return Err(ProtocolError::Frame {
                offset: 0,
                found: b,
                expected: RESPONSE_HEADER,
            });
        }
    }
    if bytes.len() != RESPONSE_LEN {
        return Err(ProtocolError::Length {
            expected: RESPONSE_LEN,
            found: bytes.len(),
        });
    }
    if bytes[RESPONSE_LEN - 1] != RESPONSE_END {
        return Err(ProtocolError::Frame {
            offset: RESPONSE_LEN - 1,
            found: bytes[RESPONSE_LEN - 1],
            expected: RESPONSE_END,
        });
    }
    for (k, b) in bytes[1..1 + FIELD_LEN].iter().enumerate() {
        if !b.is_ascii_digit() {
            return Err(ProtocolError::Parse { offset: 1 + k, found: *b });
        }
    }
    Ok(read_field(&bytes[1..1 + FIELD_LEN], 1)? as f64 / 1000.0)
}

/// Seconds on the wire for `bytes` bytes at `baud` bits/s with 10 bits per byte.
pub fn frame_time(baud: f64, bytes: usize) -> f64 {
    (bytes * BITS_PER_BYTE) as f64 / baud
}

/// Byte-at-a-time frame assembler.
///
/// Accumulates from a header byte to the terminator. A malformed frame, or
/// a buffer that fills without a terminator, is reported once and the
/// decoder then rescans the buffered bytes after the failed header for the
/// next header.
#[derive(Debug, Clone)]
pub struct StreamDecoder<const LEN: usize> {
    buf: [u8; LEN],
    len: usize,
    header: u8,
    end: u8,
}

pub type RequestDecoder = StreamDecoder<REQUEST_LEN>;
pub type ResponseDecoder = StreamDecoder<RESPONSE_LEN>;

impl RequestDecoder {
    pub fn new() -> Self {
        StreamDecoder::with_markers(REQUEST_SEPARATORS[0], REQUEST_SEPARATORS[6])
    }

    pub fn push(&mut self, byte: u8) -> Option<Result<RequestFrame, ProtocolError>> {
        self.push_raw(byte).map(|r| r.and_then(|frame| decode_request(&frame)))
    }
}

impl Default for RequestDecoder {
    fn default() -> Self {
        Self::new()
    }
}

impl ResponseDecoder {
    pub fn new() -> Self {
        StreamDecoder::with_markers(RESPONSE_HEADER, RESPONSE_END)
    }

    pub fn push(&mut self, byte: u8) -> Option<Result<f64, ProtocolError>> {
        self.push_raw(byte).map(|r| r.and_then(|frame| decode_response(&frame)))
    }
}

impl Default for ResponseDecoder {
    fn default() -> Self {
        Self::new()
    }
}

impl<const LEN: usize> StreamDecoder<LEN> {
    fn with_markers(header: u8, end: u8) -> Self {
        StreamDecoder {
            buf: [0; LEN],
            len: 0,
            header,
            end,
        }
    }

    pub fn buffered(&self) -> usize {
        self.len
    }

    pub fn reset(&mut self) {
        self.len = 0;
    }

    /// Returns a complete candidate frame (or an error) when one finishes.
    fn push_raw(&mut self, byte: u8) -> Option<Result<[u8; LEN], ProtocolError>> {
        if self.len == 0 {
            if byte == self.header {
                self.buf[0] = byte;
                self.len = 1;
            }
            return None;
        }
        self.buf[self.len] = byte;
        self.len += 1;
        if self.len == LEN {
            if byte == self.end {
                let frame = self.buf;
                self.len = 0;
                return Some(Ok(frame));
            }
            self.resync();
            return Some(Err(ProtocolError::Frame {
                offset: LEN - 1,
                found: byte,
                expected: self.end,
            }));
        }
        if byte == self.end && self.end != self.header {
            // premature terminator
            let offset = self.len - 1;
            self.resync();
            return Some(Err(ProtocolError::Frame {
                offset,
                found: byte,
                expected: 0,
            }));
        }
        None
    }

    fn resync(&mut self) {
        let next = self.buf[1..self.len].iter().position(|b| *b == self.header);
        match next {
            Some(p) => {
                let start = p + 1;
                self.buf.copy_within(start..self.len, 0);
                self.len -= start;
            }
            None => self.len = 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_example() {
        let f = RequestFrame::from_fields([1.23, 4.56, 4.50, 0.10, 2.00, 5.00]);
        assert_eq!(&encode_request(&f).unwrap(), b"S00123I00456D00450C00010O00200E00500P");
        let zero = RequestFrame::default();
        assert_eq!(&encode_request(&zero).unwrap(), b"S00000I00000D00000C00000O00000E00000P");
    }

    #[test]
    fn negative_field() {
        let f = RequestFrame::from_fields([0.0, -1.5, 0.0, 0.0, 0.0, 0.0]);
        let bytes = encode_request(&f).unwrap();
        assert_eq!(&bytes[7..12], b"-0150");
        assert_eq!(decode_request(&bytes).unwrap().x2, -1.5);
    }

    #[test]
    fn rounding_half_away() {
        let f = RequestFrame::from_fields([0.125, -0.125, 0.0, 0.0, 0.0, 0.0]);
        let d = decode_request(&encode_request(&f).unwrap()).unwrap();
        assert_eq!(d.x1, 0.13);
        assert_eq!(d.x2, -0.13);
    }

    #[test]
    fn range_limits() {
        let ok = RequestFrame::from_fields([999.99, -99.99, 0.0, 0.0, 0.0, 0.0]);
        assert!(encode_request(&ok).is_ok());
        let bad = RequestFrame::from_fields([1000.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(encode_request(&bad), Err(ProtocolError::Range { field: 0, .. })));
        let bad = RequestFrame::from_fields([0.0, 0.0, 0.0, 0.0, 0.0, -100.0]);
        assert!(matches!(encode_request(&bad), Err(ProtocolError::Range { field: 5, .. })));
        assert!(encode_request(&RequestFrame::from_fields([f64::NAN; 6])).is_err());
    }

    #[test]
    fn bad_header() {
        let mut bytes = encode_request(&RequestFrame::default()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_request(&bytes), Err(ProtocolError::Frame { offset: 0, .. })));
        bytes[0] = b'S';
        bytes[9] = b'a';
        assert!(matches!(decode_request(&bytes), Err(ProtocolError::Parse { offset: 9, .. })));
    }

    #[test]
    fn response_examples() {
        assert_eq!(&encode_response(12.345).unwrap()[1..6], b"12345");
        assert_eq!(&encode_response(0.0).unwrap(), b"S00000P");
        let r = encode_response(24.0).unwrap();
        assert_eq!(&r[1..6], b"24000");
        assert_eq!(decode_response(&r).unwrap(), 24.0);
        assert!(encode_response(-0.01).is_err());
        assert!(encode_response(100.0).is_err());
        assert!(encode_response(99.999).is_ok());
    }

    #[test]
    fn timing() {
        assert!((frame_time(115200.0, RESPONSE_LEN) - 607.6e-6).abs() < 1e-7);
        assert!((frame_time(115200.0, REQUEST_LEN) - 3.212e-3).abs() < 1e-6);
        assert!(frame_time(115200.0, REQUEST_LEN + RESPONSE_LEN) > 3.8e-3);
    }

    #[test]
    fn stream_garbage_then_frame() {
        let f = RequestFrame::from_fields([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bytes = encode_request(&f).unwrap();
        let mut d = RequestDecoder::new();
        let mut got = Vec::new();
        for b in b"xxS12P".iter().chain(bytes.iter()) {
            if let Some(Ok(frame)) = d.push(*b) {
                got.push(frame);
            }
        }
        assert_eq!(got, vec![f]);
    }

    #[test]
    fn stream_two_frames() {
        let a = RequestFrame::from_fields([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = RequestFrame::from_fields([-1.0, 0.0, 0.5, 0.25, 7.0, 20.0]);
        let mut stream = encode_request(&a).unwrap().to_vec();
        stream.extend_from_slice(&encode_request(&b).unwrap());
        let mut d = RequestDecoder::new();
        let got: Vec<_> = stream.iter().filter_map(|x| d.push(*x)).collect();
        assert_eq!(got, vec![Ok(a), Ok(b)]);
    }

    #[test]
    fn response_stream() {
        let mut d = ResponseDecoder::new();
        let stream = b"S1S01234P";
        let got: Vec<_> = stream.iter().filter_map(|x| d.push(*x)).collect();
        assert_eq!(got.last(), Some(&Ok(1.234)));
    }
}
