//! Streaming runtime and wire protocol for the rfscan toolkit, plus the
//! implementation of the `rfscan` command-line tool.

pub mod bench;
pub mod frame;
pub mod stream;

pub use frame::{decode_frame, encode_frame, FrameError, FrameMessage};
pub use stream::{run_stream, QueuePolicy, StreamConfig, StreamError, StreamStats};
