//! Wire protocol, streaming service and replay sources.

mod client;
mod http;
mod message;
mod replay;
mod server;

pub use client::{Client, ClientError};
pub use http::model_json;
pub use message::{
    decode_message, decode_payload, encode_message, encode_payload, frame_len, ClientKind, CloudPayload,
    DecodeError, Envelope, ErrorCode, Message, RecordStatus, StopMode, DEFAULT_PORT, MAX_FRAME_LEN,
    PROTOCOL_VERSION,
};
pub use replay::{decode_hand_stream, encode_hand_stream, replay_source, ReplayError};
pub use server::{Server, ServerConfig, ServerHandle};
