//! Symmetric encryption of segments.
//!
//! The default is single DES in ECB mode with PKCS#7 padding and a pre-shared
//! key. It reproduces the original system and is NOT secure: DES keys are
//! brute-forceable and ECB leaks equal plaintext blocks. Other ciphers can be
//! plugged in through [`SegmentCipher`].

use std::fmt;
use std::str::FromStr;

use des::cipher::{block_padding::Pkcs7, BlockDecryptMut, BlockEncryptMut, KeyInit};

use super::ProtocolError;

pub trait SegmentCipher: Send + Sync {
    fn name(&self) -> &'static str;
    fn block_size(&self) -> usize;
    fn encrypt(&self, plaintext: &[u8]) -> Vec<u8>;
    fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, ProtocolError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CipherAlgorithm {
    #[default]
    DesEcbPkcs7,
}

impl CipherAlgorithm {
    pub fn key_len(self) -> usize {
        match self {
            CipherAlgorithm::DesEcbPkcs7 => 8,
        }
    }
}

impl fmt::Display for CipherAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CipherAlgorithm::DesEcbPkcs7 => f.write_str("des-ecb-pkcs7"),
        }
    }
}

impl FromStr for CipherAlgorithm {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "des" | "des-ecb" | "des-ecb-pkcs7" => Ok(CipherAlgorithm::DesEcbPkcs7),
            other => Err(ProtocolError::CipherConfig(format!("unknown cipher {other:?}"))),
        }
    }
}

/// Algorithm plus shared secret; both parties must hold identical values.
#[derive(Clone, PartialEq, Eq)]
pub struct CipherConfig {
    pub algorithm: CipherAlgorithm,
    shared_key: Vec<u8>,
}

impl fmt::Debug for CipherConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CipherConfig")
            .field("algorithm", &self.algorithm)
            .field("shared_key", &"<redacted>")
            .finish()
    }
}

impl CipherConfig {
    pub const DEFAULT_PASSPHRASE: &'static str = "ppgd-key";

    pub fn new(algorithm: CipherAlgorithm, shared_key: Vec<u8>) -> Result<Self, ProtocolError> {
        if shared_key.len() != algorithm.key_len() {
            return Err(ProtocolError::CipherConfig(format!(
                "{algorithm} needs a {}-byte key, got {}",
                algorithm.key_len(),
                shared_key.len()
            )));
        }
        Ok(CipherConfig { algorithm, shared_key })
    }

    /// Key from a passphrase, truncated or zero-padded to the key length.
    pub fn from_passphrase(algorithm: CipherAlgorithm, passphrase: &str) -> Self {
        let mut key = passphrase.as_bytes().to_vec();
        key.resize(algorithm.key_len(), 0);
        CipherConfig {
            algorithm,
            shared_key: key,
        }
    }

    pub fn build(&self) -> Box<dyn SegmentCipher> {
        match self.algorithm {
            CipherAlgorithm::DesEcbPkcs7 => {
                let key: [u8; 8] = self.shared_key.as_slice().try_into().expect("validated key length");
                Box::new(DesEcb { key })
            }
        }
    }
}

impl Default for CipherConfig {
    fn default() -> Self {
        CipherConfig::from_passphrase(CipherAlgorithm::DesEcbPkcs7, Self::DEFAULT_PASSPHRASE)
    }
}

pub struct DesEcb {
    key: [u8; 8],
}

impl SegmentCipher for DesEcb {
    fn name(&self) -> &'static str {
        "des-ecb-pkcs7"
    }

    fn block_size(&self) -> usize {
        8
    }

    fn encrypt(&self, plaintext: &[u8]) -> Vec<u8> {
        ecb::Encryptor::<des::Des>::new(&self.key.into()).encrypt_padded_vec_mut::<Pkcs7>(plaintext)
    }

    fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        if ciphertext.is_empty() || !ciphertext.len().is_multiple_of(8) {
            return Err(ProtocolError::Decryption(format!(
                "ciphertext length {} is not a positive multiple of 8",
                ciphertext.len()
            )));
        }
        ecb::Decryptor::<des::Des>::new(&self.key.into())
            .decrypt_padded_vec_mut::<Pkcs7>(ciphertext)
            .map_err(|_| ProtocolError::Decryption("invalid padding (wrong key or corrupted ciphertext)".into()))
    }
}
