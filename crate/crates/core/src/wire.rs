//! Framing for the sensor-board, motor-board and host links.
//!
//! ```text
//! +------+------+-----+-----------------+-----------+
//! | 0xAA | type | len | payload (0..64) | crc16 BE  |
//! +------+------+-----+-----------------+-----------+
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection,
//! no final xor) over `type || len || payload`. Multi-byte payload integers
//! are little-endian.

use thiserror::Error;

pub const SYNC: u8 = 0xAA;
pub const MAX_PAYLOAD: usize = 64;
/// sync + type + len
const HEADER_LEN: usize = 3;
const CRC_LEN: usize = 2;

pub const TYPE_FORCE_REPORT: u8 = 0x01;
pub const TYPE_TORQUE_COMMAND: u8 = 0x02;
pub const TYPE_ENCODER_REPORT: u8 = 0x03;
pub const TYPE_HOST_TELEMETRY: u8 = 0x04;

const CRC_TABLE: [u16; 256] = build_crc_table();

const fn build_crc_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// CRC-16/CCITT-FALSE.
pub fn crc16(data: &[u8]) -> u16 {
    data.iter().fold(0xFFFF, |crc, &b| {
        (crc << 8) ^ CRC_TABLE[((crc >> 8) as u8 ^ b) as usize]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageBody {
    ForceReport {
        raw_mv: i32,
        seq: u16,
    },
    TorqueCommand {
        torque_mnm: i32,
    },
    EncoderReport {
        pos_ticks: i32,
        seq: u16,
    },
    /// `force_norm_milli` is the normalized force in thousandths (0..=1000).
    HostTelemetry {
        force_norm_milli: u16,
        encoder_ticks: i32,
        seq: u16,
    },
}

impl MessageBody {
    pub fn msg_type(&self) -> u8 {
        match self {
            MessageBody::ForceReport { .. } => TYPE_FORCE_REPORT,
            MessageBody::TorqueCommand { .. } => TYPE_TORQUE_COMMAND,
            MessageBody::EncoderReport { .. } => TYPE_ENCODER_REPORT,
            MessageBody::HostTelemetry { .. } => TYPE_HOST_TELEMETRY,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut p = Vec::with_capacity(8);
        match *self {
            MessageBody::ForceReport { raw_mv, seq } => {
                p.extend_from_slice(&raw_mv.to_le_bytes());
                p.extend_from_slice(&seq.to_le_bytes());
            }
            MessageBody::TorqueCommand { torque_mnm } => {
                p.extend_from_slice(&torque_mnm.to_le_bytes());
            }
            MessageBody::EncoderReport { pos_ticks, seq } => {
                p.extend_from_slice(&pos_ticks.to_le_bytes());
                p.extend_from_slice(&seq.to_le_bytes());
            }
            MessageBody::HostTelemetry {
                force_norm_milli,
                encoder_ticks,
                seq,
            } => {
                p.extend_from_slice(&force_norm_milli.to_le_bytes());
                p.extend_from_slice(&encoder_ticks.to_le_bytes());
                p.extend_from_slice(&seq.to_le_bytes());
            }
        }
        p
    }

    fn expected_len(msg_type: u8) -> Option<usize> {
        match msg_type {
            TYPE_FORCE_REPORT => Some(6),
            TYPE_TORQUE_COMMAND => Some(4),
            TYPE_ENCODER_REPORT => Some(6),
            TYPE_HOST_TELEMETRY => Some(8),
            _ => None,
        }
    }

    /// Decodes a payload whose frame already passed the CRC check.
    pub fn decode(msg_type: u8, payload: &[u8]) -> Result<MessageBody, FrameError> {
        let expected = Self::expected_len(msg_type).ok_or(FrameError::UnknownType(msg_type))?;
        if payload.len() != expected {
            return Err(FrameError::BadLength(payload.len()));
        }
        let i32_at = |o: usize| i32::from_le_bytes(payload[o..o + 4].try_into().unwrap());
        let u16_at = |o: usize| u16::from_le_bytes(payload[o..o + 2].try_into().unwrap());
        Ok(match msg_type {
            TYPE_FORCE_REPORT => MessageBody::ForceReport {
                raw_mv: i32_at(0),
                seq: u16_at(4),
            },
            TYPE_TORQUE_COMMAND => MessageBody::TorqueCommand { torque_mnm: i32_at(0) },
            TYPE_ENCODER_REPORT => MessageBody::EncoderReport {
                pos_ticks: i32_at(0),
                seq: u16_at(4),
            },
            TYPE_HOST_TELEMETRY => {
                let force_norm_milli = u16_at(0);
                if force_norm_milli > 1000 {
                    return Err(FrameError::InvalidField("force_norm_milli"));
                }
                MessageBody::HostTelemetry {
                    force_norm_milli,
                    encoder_ticks: i32_at(2),
                    seq: u16_at(6),
                }
            }
            _ => unreachable!(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge(usize),
    #[error("CRC mismatch: frame carries {received:#06x}, computed {computed:#06x}")]
    BadCrc { received: u16, computed: u16 },
    #[error("bad payload length {0}")]
    BadLength(usize),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("field {0} out of range")]
    InvalidField(&'static str),
}

/// Frames `msg_type` and `payload` without interpreting the payload.
pub fn encode_raw(msg_type: u8, payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.push(SYNC);
    out.push(msg_type);
    out.push(payload.len() as u8);
    out.extend_from_slice(payload);
    let crc = crc16(&out[1..]);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

pub fn encode(body: &MessageBody) -> Result<Vec<u8>, FrameError> {
    if let MessageBody::HostTelemetry { force_norm_milli, .. } = body {
        if *force_norm_milli > 1000 {
            return Err(FrameError::InvalidField("force_norm_milli"));
        }
    }
    encode_raw(body.msg_type(), &body.payload())
}

/// Counters kept by [`FrameParser`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParserStats {
    pub frames: u64,
    pub errors: u64,
    /// Bytes discarded while hunting for a sync byte.
    pub skipped: u64,
}

/// Incremental, resynchronising frame parser for one byte stream.
///
/// Decisions depend only on the bytes seen, never on how they were chunked.
/// After a bad frame the parser restarts the search one byte past the
/// rejected sync byte. At most one maximal frame is buffered.
#[derive(Debug, Default, Clone)]
pub struct FrameParser {
    buf: Vec<u8>,
    stats: ParserStats,
}

impl FrameParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> ParserStats {
        self.stats
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Feeds a chunk, returning decoded bodies and in-band errors in stream order.
    pub fn feed(&mut self, chunk: &[u8]) -> (Vec<MessageBody>, Vec<FrameError>) {
        let mut bodies = Vec::new();
        let mut errors = Vec::new();
        for &b in chunk {
            if self.buf.is_empty() {
                if b == SYNC {
                    self.buf.push(b);
                } else {
                    self.stats.skipped += 1;
                }
                continue;
            }
            self.buf.push(b);
            self.drain(&mut bodies, &mut errors);
        }
        (bodies, errors)
    }

    fn drain(&mut self, bodies: &mut Vec<MessageBody>, errors: &mut Vec<FrameError>) {
        loop {
            if self.buf.len() < HEADER_LEN {
                return;
            }
            let len = self.buf[2] as usize;
            if len > MAX_PAYLOAD {
                self.reject(FrameError::BadLength(len), errors);
                continue;
            }
            let total = HEADER_LEN + len + CRC_LEN;
            if self.buf.len() < total {
                return;
            }
            let computed = crc16(&self.buf[1..HEADER_LEN + len]);
            let received = u16::from_be_bytes([self.buf[total - 2], self.buf[total - 1]]);
            if computed != received {
                self.reject(FrameError::BadCrc { received, computed }, errors);
                continue;
            }
            match MessageBody::decode(self.buf[1], &self.buf[HEADER_LEN..HEADER_LEN + len]) {
                Ok(body) => {
                    self.stats.frames += 1;
                    bodies.push(body);
                }
                Err(e) => {
                    self.stats.errors += 1;
                    errors.push(e);
                }
            }
            let rest = self.buf.split_off(total);
            self.buf.clear();
            self.rescan(&rest);
        }
    }

    /// Drops the current sync byte and rescans what followed it.
    fn reject(&mut self, err: FrameError, errors: &mut Vec<FrameError>) {
        self.stats.errors += 1;
        errors.push(err);
        let rest = self.buf.split_off(1);
        self.buf.clear();
        self.rescan(&rest);
    }

    fn rescan(&mut self, bytes: &[u8]) {
        match bytes.iter().position(|&b| b == SYNC) {
            Some(i) => {
                self.stats.skipped += i as u64;
                self.buf.extend_from_slice(&bytes[i..]);
            }
            None => self.stats.skipped += bytes.len() as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc_of_empty_is_init() {
        assert_eq!(crc16(&[]), 0xFFFF);
    }

    #[test]
    fn force_report_payload_bytes() {
        let frame = encode(&MessageBody::ForceReport { raw_mv: -3300, seq: 1 }).unwrap();
        assert_eq!(&frame[..3], &[SYNC, TYPE_FORCE_REPORT, 6]);
        assert_eq!(&frame[3..9], &[0x1C, 0xF3, 0xFF, 0xFF, 0x01, 0x00]);
    }

    #[test]
    fn oversize_payload_rejected() {
        assert_eq!(encode_raw(0x10, &[0u8; 65]), Err(FrameError::PayloadTooLarge(65)));
        assert!(encode_raw(0x10, &[0u8; 64]).is_ok());
    }

    #[test]
    fn telemetry_range_checked() {
        let body = MessageBody::HostTelemetry {
            force_norm_milli: 1001,
            encoder_ticks: 0,
            seq: 0,
        };
        assert_eq!(encode(&body), Err(FrameError::InvalidField("force_norm_milli")));
    }

    #[test]
    fn corrupted_crc_yields_error_only() {
        let mut frame = encode(&MessageBody::TorqueCommand { torque_mnm: 77 }).unwrap();
        let n = frame.len();
        frame[n - 1] ^= 0x01;
        let mut p = FrameParser::new();
        let (bodies, errors) = p.feed(&frame);
        assert!(bodies.is_empty());
        assert!(matches!(errors.as_slice(), [FrameError::BadCrc { .. }]));
    }

    #[test]
    fn unknown_type_and_bad_length_reported() {
        let mut p = FrameParser::new();
        let (b, e) = p.feed(&encode_raw(0x7F, &[1, 2]).unwrap());
        assert!(b.is_empty());
        assert_eq!(e, vec![FrameError::UnknownType(0x7F)]);
        let (b, e) = p.feed(&encode_raw(TYPE_TORQUE_COMMAND, &[1, 2]).unwrap());
        assert!(b.is_empty());
        assert_eq!(e, vec![FrameError::BadLength(2)]);
        let (b, e) = p.feed(&[SYNC, 0x01, 200]);
        assert!(b.is_empty());
        assert_eq!(e, vec![FrameError::BadLength(200)]);
    }

    #[test]
    fn garbage_then_frame() {
        let body = MessageBody::EncoderReport {
            pos_ticks: -12345,
            seq: 9,
        };
        let mut stream = vec![0x00, 0x13, 0x37, 0xFF, 0x42];
        stream.extend(encode(&body).unwrap());
        let mut p = FrameParser::new();
        let (bodies, errors) = p.feed(&stream);
        assert_eq!(bodies, vec![body]);
        assert!(errors.is_empty());
        assert_eq!(p.stats().skipped, 5);
    }

    #[test]
    fn false_sync_inside_garbage_recovers() {
        let body = MessageBody::TorqueCommand { torque_mnm: -5 };
        let mut stream = vec![SYNC, 0x02, 0x04, 0x00];
        stream.extend(encode(&body).unwrap());
        let mut p = FrameParser::new();
        let (bodies, _) = p.feed(&stream);
        assert_eq!(bodies, vec![body]);
        assert_eq!(p.buffered(), 0);
    }
}
