use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};

use thiserror::Error;

use super::{decode_payload, encode_message, frame_len, ClientKind, DecodeError, Envelope, ErrorCode, Message, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("server error {code:?}: {text}")]
    Server { code: ErrorCode, text: String },
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
}

/// Blocking stream-socket client.
pub struct Client {
    stream: TcpStream,
    seq: u64,
}

impl Client {
    /// Connects and completes the handshake.
    pub fn connect(addr: impl ToSocketAddrs, kind: ClientKind) -> Result<Client, ClientError> {
        Self::connect_with_version(addr, kind, PROTOCOL_VERSION)
    }

    pub fn connect_with_version(addr: impl ToSocketAddrs, kind: ClientKind, version: u32) -> Result<Client, ClientError> {
        let mut c = Self::connect_raw(addr)?;
        c.send(Message::Hello {
            protocol_version: version,
            client_kind: kind,
        })?;
        match c.recv()?.message {
            Message::Hello { .. } => Ok(c),
            Message::Error { code, text } => Err(ClientError::Server { code, text }),
            other => Err(ClientError::Unexpected(other.type_name())),
        }
    }

    /// Connects without a handshake.
    pub fn connect_raw(addr: impl ToSocketAddrs) -> Result<Client, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client { stream, seq: 0 })
    }

    /// Sends a message and returns its sequence number.
    pub fn send(&mut self, message: Message) -> Result<u64, ClientError> {
        let seq = self.seq;
        self.seq += 1;
        self.stream.write_all(&encode_message(&Envelope { seq, message }))?;
        Ok(seq)
    }

    pub fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.stream.write_all(bytes)?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Envelope, ClientError> {
        let mut hdr = [0u8; 4];
        self.stream.read_exact(&mut hdr)?;
        let len = frame_len(&hdr)?;
        let mut payload = vec![0u8; len];
        self.stream.read_exact(&mut payload)?;
        Ok(decode_payload(&payload)?)
    }

    /// Sends `message` and waits for the next reply, turning error replies
    /// into `ClientError::Server`.
    pub fn request(&mut self, message: Message) -> Result<Message, ClientError> {
        self.send(message)?;
        match self.recv()?.message {
            Message::Error { code, text } => Err(ClientError::Server { code, text }),
            m => Ok(m),
        }
    }

    pub fn set_read_timeout(&self, t: Option<std::time::Duration>) -> io::Result<()> {
        self.stream.set_read_timeout(t)
    }
}
