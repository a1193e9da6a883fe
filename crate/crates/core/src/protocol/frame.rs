use std::io::{Read, Write};

use super::cipher::SegmentCipher;
use super::ProtocolError;

/// Largest ciphertext accepted from the wire.
pub const MAX_FRAME_LEN: usize = 64 * 1024 * 1024;

/// `len (u32, big-endian) || ciphertext`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub ciphertext: Vec<u8>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.ciphertext.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ciphertext.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.ciphertext.len());
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Frame, ProtocolError> {
        if bytes.len() < 4 {
            return Err(ProtocolError::Framing(format!("frame of {} bytes has no length prefix", bytes.len())));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        if bytes.len() - 4 != len {
            return Err(ProtocolError::Framing(format!(
                "length prefix says {len} bytes, frame carries {}",
                bytes.len() - 4
            )));
        }
        Ok(Frame {
            ciphertext: bytes[4..].to_vec(),
        })
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame, ProtocolError> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len).map_err(ProtocolError::transport)?;
        let len = u32::from_be_bytes(len) as usize;
        if len > MAX_FRAME_LEN {
            return Err(ProtocolError::Framing(format!("frame of {len} bytes exceeds limit")));
        }
        let mut ciphertext = vec![0u8; len];
        r.read_exact(&mut ciphertext).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => ProtocolError::Framing(format!("truncated frame, expected {len} bytes")),
            _ => ProtocolError::transport(e),
        })?;
        Ok(Frame { ciphertext })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ProtocolError> {
        w.write_all(&self.to_bytes()).map_err(ProtocolError::transport)?;
        w.flush().map_err(ProtocolError::transport)
    }
}

pub fn encrypt_frame(plaintext: &[u8], cipher: &dyn SegmentCipher) -> Frame {
    Frame {
        ciphertext: cipher.encrypt(plaintext),
    }
}

pub fn decrypt_frame(frame: &Frame, cipher: &dyn SegmentCipher) -> Result<Vec<u8>, ProtocolError> {
    if !frame.ciphertext.len().is_multiple_of(cipher.block_size()) {
        return Err(ProtocolError::Framing(format!(
            "ciphertext length {} is not a multiple of the {}-byte block",
            frame.ciphertext.len(),
            cipher.block_size()
        )));
    }
    cipher.decrypt(&frame.ciphertext)
}
