//! Password derivation and authenticated encryption of personal details.

use chacha20poly1305::aead::{Aead, KeyInit, Payload as AeadPayload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use pbkdf2::pbkdf2_hmac;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::IdentityError;
use crate::codec::{Decode, DecodeResult, Decoder, Encode, Encoder};
use crate::crypto::serde_hex;

pub const SALT_LEN: usize = 16;
pub const NONCE_LEN: usize = 24;
pub const KEY_LEN: usize = 32;

/// Cost of the password key derivation. Stored alongside every verifier so
/// the cost can change without invalidating existing records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    pub iterations: u32,
}

impl KdfParams {
    pub const fn new(iterations: u32) -> Self {
        Self { iterations }
    }
}

impl Default for KdfParams {
    fn default() -> Self {
        Self::new(100_000)
    }
}

pub fn derive_key(secret: &[u8], salt: &[u8; SALT_LEN], iterations: u32) -> [u8; KEY_LEN] {
    let mut out = [0u8; KEY_LEN];
    pbkdf2_hmac::<Sha256>(secret, salt, iterations.max(1), &mut out);
    out
}

fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Salted one-way derivation of a secret; the secret itself is never kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretVerifier {
    #[serde(with = "serde_hex")]
    pub salt: [u8; SALT_LEN],
    pub iterations: u32,
    #[serde(with = "serde_hex")]
    pub hash: [u8; KEY_LEN],
}

impl SecretVerifier {
    pub fn new<R: RngCore + CryptoRng>(secret: &str, kdf: KdfParams, rng: &mut R) -> Self {
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        Self {
            hash: derive_key(secret.as_bytes(), &salt, kdf.iterations),
            salt,
            iterations: kdf.iterations,
        }
    }

    pub fn matches(&self, secret: &str) -> bool {
        ct_eq(
            &derive_key(secret.as_bytes(), &self.salt, self.iterations),
            &self.hash,
        )
    }
}

impl Encode for SecretVerifier {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.salt).u32(self.iterations).bytes(&self.hash);
    }
}

impl Decode for SecretVerifier {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            salt: dec.fixed("verifier salt")?,
            iterations: dec.u32()?,
            hash: dec.fixed("verifier hash")?,
        })
    }
}

/// Name, email and phone: the fields that never reach the ledger in clear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalDetails {
    pub name: String,
    pub email: String,
    pub phone: String,
}

impl Encode for PersonalDetails {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.name).str(&self.email).str(&self.phone);
    }
}

impl Decode for PersonalDetails {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            name: dec.string()?,
            email: dec.string()?,
            phone: dec.string()?,
        })
    }
}

fn seal(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_LEN], plaintext: &[u8], aad: &[u8]) -> Vec<u8> {
    XChaCha20Poly1305::new(key.into())
        .encrypt(XNonce::from_slice(nonce), AeadPayload { msg: plaintext, aad })
        .expect("xchacha20poly1305 encryption is infallible for in-memory buffers")
}

fn open(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_LEN], ciphertext: &[u8], aad: &[u8]) -> Result<Vec<u8>, IdentityError> {
    XChaCha20Poly1305::new(key.into())
        .decrypt(XNonce::from_slice(nonce), AeadPayload { msg: ciphertext, aad })
        .map_err(|_| IdentityError::DecryptAuthFailure)
}

/// Encrypt `details` under `detail_key` with a fresh random 24-byte nonce.
pub fn encrypt_details<R: RngCore + CryptoRng>(
    details: &PersonalDetails,
    detail_key: &[u8; KEY_LEN],
    rng: &mut R,
) -> (Vec<u8>, [u8; NONCE_LEN]) {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = seal(detail_key, &nonce, &details.to_canonical_bytes(), b"details");
    (ct, nonce)
}

pub fn decrypt_details(
    ciphertext: &[u8],
    nonce: &[u8; NONCE_LEN],
    detail_key: &[u8; KEY_LEN],
) -> Result<PersonalDetails, IdentityError> {
    let plain = open(detail_key, nonce, ciphertext, b"details")?;
    PersonalDetails::from_canonical_bytes(&plain).map_err(|_| IdentityError::DecryptAuthFailure)
}

/// The detail key encrypted under a key derived from some secret (the
/// password, or the concatenated recovery answers).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrappedKey {
    #[serde(with = "serde_hex")]
    pub salt: [u8; SALT_LEN],
    pub iterations: u32,
    #[serde(with = "serde_hex")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "serde_hex")]
    pub ciphertext: Vec<u8>,
}

impl WrappedKey {
    pub fn wrap<R: RngCore + CryptoRng>(
        detail_key: &[u8; KEY_LEN],
        secret: &[u8],
        kdf: KdfParams,
        rng: &mut R,
    ) -> Self {
        let mut salt = [0u8; SALT_LEN];
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut salt);
        rng.fill_bytes(&mut nonce);
        let kek = derive_key(secret, &salt, kdf.iterations);
        Self {
            ciphertext: seal(&kek, &nonce, detail_key, b"detail-key"),
            salt,
            iterations: kdf.iterations,
            nonce,
        }
    }

    pub fn unwrap_key(&self, secret: &[u8]) -> Result<[u8; KEY_LEN], IdentityError> {
        let kek = derive_key(secret, &self.salt, self.iterations);
        let raw = open(&kek, &self.nonce, &self.ciphertext, b"detail-key")?;
        <[u8; KEY_LEN]>::try_from(raw.as_slice()).map_err(|_| IdentityError::DecryptAuthFailure)
    }
}

impl Encode for WrappedKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.salt)
            .u32(self.iterations)
            .bytes(&self.nonce)
            .bytes(&self.ciphertext);
    }
}

impl Decode for WrappedKey {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            salt: dec.fixed("wrap salt")?,
            iterations: dec.u32()?,
            nonce: dec.fixed("wrap nonce")?,
            ciphertext: dec.bytes()?.to_vec(),
        })
    }
}
