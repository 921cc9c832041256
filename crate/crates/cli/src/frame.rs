//! Wire format for spectro-temporal frames.
//!
//! A frame is one rendered image plus enough header to interpret it
//! without out-of-band context. Byte layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SPTF"
//!      4     1  version (currently 1)
//!      5     8  frame_index
//!     13     8  t0_ns       capture time of the frame's first sample
//!     21     4  n_bins      image width
//!     25     4  n_rows      image height
//!     29     1  channels    1 = grayscale, 3 = RGB
//!     30     .  payload     row-major, channel-interleaved pixels
//! ```

use rfscan_core::{GrayImage, RgbImage};
use std::io::{self, Read, Write};
use thiserror::Error;

pub const FRAME_MAGIC: [u8; 4] = *b"SPTF";
pub const FRAME_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;

/// Refuse absurd payload claims instead of attempting the allocation.
const MAX_PAYLOAD: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    VersionUnsupported(u8),
    #[error("truncated frame: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("channel count {0} is not 1 or 3")]
    BadChannelCount(u8),
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte cap")]
    PayloadTooLarge(u128),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMessage {
    pub version: u8,
    pub frame_index: u64,
    /// Capture timestamp of the first sample, nanoseconds.
    pub t0_ns: u64,
    pub n_bins: u32,
    pub n_rows: u32,
    pub channels: u8,
    pub payload: Vec<u8>,
}

impl FrameMessage {
    pub fn from_gray(frame_index: u64, t0_ns: u64, img: &GrayImage) -> Self {
        Self {
            version: FRAME_VERSION,
            frame_index,
            t0_ns,
            n_bins: img.width as u32,
            n_rows: img.height as u32,
            channels: 1,
            payload: img.pixels.clone(),
        }
    }

    pub fn from_rgb(frame_index: u64, t0_ns: u64, img: &RgbImage) -> Self {
        Self {
            version: FRAME_VERSION,
            frame_index,
            t0_ns,
            n_bins: img.width as u32,
            n_rows: img.height as u32,
            channels: 3,
            payload: img.pixels.clone(),
        }
    }

    /// Payload size the header claims. Wide type: adversarial headers can
    /// claim more than `usize` holds.
    pub fn claimed_payload_len(&self) -> u128 {
        self.n_bins as u128 * self.n_rows as u128 * self.channels as u128
    }

    pub fn expected_payload_len(&self) -> usize {
        self.claimed_payload_len() as usize
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    /// Reinterprets the payload as an image.
    pub fn to_gray(&self) -> Option<GrayImage> {
        (self.channels == 1).then(|| GrayImage {
            width: self.n_bins as usize,
            height: self.n_rows as usize,
            pixels: self.payload.clone(),
        })
    }

    pub fn to_rgb(&self) -> Option<RgbImage> {
        (self.channels == 3).then(|| RgbImage {
            width: self.n_bins as usize,
            height: self.n_rows as usize,
            pixels: self.payload.clone(),
        })
    }
}

pub fn encode_frame(msg: &FrameMessage) -> Vec<u8> {
    debug_assert_eq!(msg.payload.len(), msg.expected_payload_len());
    let mut out = Vec::with_capacity(msg.encoded_len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(msg.version);
    out.extend_from_slice(&msg.frame_index.to_le_bytes());
    out.extend_from_slice(&msg.t0_ns.to_le_bytes());
    out.extend_from_slice(&msg.n_bins.to_le_bytes());
    out.extend_from_slice(&msg.n_rows.to_le_bytes());
    out.push(msg.channels);
    out.extend_from_slice(&msg.payload);
    out
}

fn parse_header(header: &[u8; HEADER_LEN]) -> Result<FrameMessage, FrameError> {
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&header[0..4]);
    if magic != FRAME_MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let version = header[4];
    if version != FRAME_VERSION {
        return Err(FrameError::VersionUnsupported(version));
    }
    let channels = header[29];
    if channels != 1 && channels != 3 {
        return Err(FrameError::BadChannelCount(channels));
    }
    Ok(FrameMessage {
        version,
        frame_index: u64::from_le_bytes(header[5..13].try_into().unwrap()),
        t0_ns: u64::from_le_bytes(header[13..21].try_into().unwrap()),
        n_bins: u32::from_le_bytes(header[21..25].try_into().unwrap()),
        n_rows: u32::from_le_bytes(header[25..29].try_into().unwrap()),
        channels,
        payload: Vec::new(),
    })
}

/// Decodes a frame from a buffer holding exactly one message.
pub fn decode_frame(bytes: &[u8]) -> Result<FrameMessage, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::TruncatedPayload {
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let mut header = [0u8; HEADER_LEN];
    header.copy_from_slice(&bytes[..HEADER_LEN]);
    let mut msg = parse_header(&header)?;

    let claimed = msg.claimed_payload_len();
    if claimed > MAX_PAYLOAD as u128 {
        return Err(FrameError::PayloadTooLarge(claimed));
    }
    let expected = HEADER_LEN + claimed as usize;
    if bytes.len() != expected {
        return Err(FrameError::TruncatedPayload {
            expected,
            got: bytes.len(),
        });
    }
    msg.payload = bytes[HEADER_LEN..].to_vec();
    Ok(msg)
}

/// Writes one frame to a stream.
pub fn write_frame(w: &mut impl Write, msg: &FrameMessage) -> Result<(), FrameError> {
    w.write_all(&encode_frame(msg))?;
    Ok(())
}

/// Reads one frame from a stream. Returns `Ok(None)` on a clean EOF at a
/// message boundary; EOF mid-message is an error.
pub fn read_frame(r: &mut impl Read) -> Result<Option<FrameMessage>, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        let n = r.read(&mut header[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(FrameError::TruncatedPayload {
                expected: HEADER_LEN,
                got: filled,
            });
        }
        filled += n;
    }
    let mut msg = parse_header(&header)?;

    let claimed = msg.claimed_payload_len();
    if claimed > MAX_PAYLOAD as u128 {
        return Err(FrameError::PayloadTooLarge(claimed));
    }
    let mut payload = vec![0u8; claimed as usize];
    let mut got = 0;
    while got < payload.len() {
        let n = r.read(&mut payload[got..])?;
        if n == 0 {
            return Err(FrameError::TruncatedPayload {
                expected: HEADER_LEN + payload.len(),
                got: HEADER_LEN + got,
            });
        }
        got += n;
    }
    msg.payload = payload;
    Ok(Some(msg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_msg() -> FrameMessage {
        FrameMessage {
            version: FRAME_VERSION,
            frame_index: 42,
            t0_ns: 1_234_567_890,
            n_bins: 4,
            n_rows: 3,
            channels: 1,
            payload: (0u8..12).collect(),
        }
    }

    #[test]
    fn header_layout_is_pinned() {
        let msg = sample_msg();
        let bytes = encode_frame(&msg);
        assert_eq!(&bytes[0..4], b"SPTF");
        assert_eq!(bytes[4], 1);
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 42);
        assert_eq!(
            u64::from_le_bytes(bytes[13..21].try_into().unwrap()),
            1_234_567_890
        );
        assert_eq!(u32::from_le_bytes(bytes[21..25].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[25..29].try_into().unwrap()), 3);
        assert_eq!(bytes[29], 1);
        assert_eq!(bytes.len(), HEADER_LEN + 12);
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let msg = sample_msg();
        assert_eq!(decode_frame(&encode_frame(&msg)).unwrap(), msg);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_frame(&sample_msg());
        bytes[0] = b'X';
        assert!(matches!(
            decode_frame(&bytes),
            Err(FrameError::BadMagic(_))
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = encode_frame(&sample_msg());
        bytes[4] = 9;
        assert!(matches!(
            decode_frame(&bytes),
            Err(FrameError::VersionUnsupported(9))
        ));
    }

    #[test]
    fn truncation_is_rejected_at_any_length() {
        let bytes = encode_frame(&sample_msg());
        for cut in 0..bytes.len() {
            assert!(
                decode_frame(&bytes[..cut]).is_err(),
                "accepted a {cut}-byte prefix"
            );
        }
    }

    #[test]
    fn bad_channel_count_is_rejected() {
        let mut bytes = encode_frame(&sample_msg());
        bytes[29] = 2;
        assert!(matches!(
            decode_frame(&bytes),
            Err(FrameError::BadChannelCount(2))
        ));
    }

    #[test]
    fn stream_reader_handles_sequences_and_eof() {
        let a = sample_msg();
        let mut b = sample_msg();
        b.frame_index = 43;
        b.channels = 3;
        b.payload = vec![7; 36];
        let mut buf = encode_frame(&a);
        buf.extend(encode_frame(&b));

        let mut cursor = std::io::Cursor::new(buf);
        assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), a);
        assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), b);
        assert!(read_frame(&mut cursor).unwrap().is_none());
    }

    #[test]
    fn stream_reader_rejects_mid_message_eof() {
        let bytes = encode_frame(&sample_msg());
        let mut cursor = std::io::Cursor::new(&bytes[..bytes.len() - 1]);
        assert!(matches!(
            read_frame(&mut cursor),
            Err(FrameError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn oversized_payload_claim_is_refused_without_allocating() {
        // Hand-built header claiming a ~12 EiB payload.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FRAME_MAGIC);
        bytes.push(FRAME_VERSION);
        bytes.extend_from_slice(&0u64.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.push(3);
        let mut cursor = std::io::Cursor::new(bytes);
        assert!(matches!(
            read_frame(&mut cursor),
            Err(FrameError::PayloadTooLarge(_))
        ));
    }

    proptest! {
        #[test]
        fn fuzzed_buffers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_frame(&bytes);
            let mut cursor = std::io::Cursor::new(bytes);
            let _ = read_frame(&mut cursor);
        }

        #[test]
        fn fuzzed_headers_never_panic(
            n_bins in any::<u32>(),
            n_rows in any::<u32>(),
            channels in any::<u8>(),
            tail in proptest::collection::vec(any::<u8>(), 0..64),
        ) {
            // Well-formed preamble, arbitrary geometry claims.
            let mut bytes = Vec::new();
            bytes.extend_from_slice(&FRAME_MAGIC);
            bytes.push(FRAME_VERSION);
            bytes.extend_from_slice(&1u64.to_le_bytes());
            bytes.extend_from_slice(&2u64.to_le_bytes());
            bytes.extend_from_slice(&n_bins.to_le_bytes());
            bytes.extend_from_slice(&n_rows.to_le_bytes());
            bytes.push(channels);
            bytes.extend_from_slice(&tail);
            let _ = decode_frame(&bytes);
            let mut cursor = std::io::Cursor::new(bytes);
            let _ = read_frame(&mut cursor);
        }

        #[test]
        fn valid_frames_always_roundtrip(
            frame_index in any::<u64>(),
            t0_ns in any::<u64>(),
            w in 0u32..64,
            h in 0u32..64,
            rgb in any::<bool>(),
            fill in any::<u8>(),
        ) {
            let channels = if rgb { 3 } else { 1 };
            let msg = FrameMessage {
                version: FRAME_VERSION,
                frame_index,
                t0_ns,
                n_bins: w,
                n_rows: h,
                channels,
                payload: vec![fill; (w * h * channels as u32) as usize],
            };
            prop_assert_eq!(decode_frame(&encode_frame(&msg)).unwrap(), msg);
        }
    }
}
