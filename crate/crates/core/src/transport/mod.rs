//! Wire format, in-process links with eavesdrop taps, and transcripts.

mod link;
mod transcript;
mod wire;

pub use link::{in_process_link, ClientEndpoint, Direction, Endpoint, EavesdropTap, ServerEndpoint, TapFilter, TapRecord};
pub use transcript::{Transcript, TRANSCRIPT_MAGIC, TRANSCRIPT_VERSION};
pub use wire::{
    decode, decode_any, decode_tensor_block, encode, encode_tensor_block, read_header, FrameHeader, FRAME_MAGIC, HEADER_LEN,
    WIRE_VERSION,
};

#[cfg(test)]
mod tests;
