//! Two-stage key exchange.
//!
//! A first meet seals a fresh 128-bit key to the receiver's public key. Every
//! later meeting encrypts under the current chain key and carries the next
//! key, which is the one-way image of the current one. The receiver checks the
//! sequence number, recomputes the next key itself, and only then rotates.

use std::fmt;

use aes_gcm::aead::{Aead, KeyInit, Payload as AeadPayload};
use aes_gcm::{Aes128Gcm, Nonce};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

use crate::model::{ErrorKind, KeyLink, NodeId, ProtocolError};

pub const KEY_LEN: usize = 16;
const CHAIN_DOMAIN: &[u8] = b"famvote/chain/v1";
const SEAL_DOMAIN: &[u8] = b"famvote/seal/v1";

/// A 128-bit symmetric key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymKey(pub [u8; KEY_LEN]);

impl SymKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    /// SHA-256 of the key, used as a reference to it in association proofs.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::new()
            .chain_update(b"famvote/key-ref/v1")
            .chain_update(self.0)
            .finalize()
            .into()
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymKey(")?;
        for b in &self.0[..4] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

/// An object's long-term asymmetric key pair.
#[derive(Clone)]
pub struct KeyPair {
    secret: StaticSecret,
    public: PublicKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self::from_secret(bytes)
    }

    pub fn from_secret(bytes: [u8; 32]) -> Self {
        let secret = StaticSecret::from(bytes);
        let public = PublicKey::from(&secret);
        Self { secret, public }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public.as_bytes()[..4].to_vec())
            .finish_non_exhaustive()
    }
}

/// The one-way function linking consecutive keys of a chain.
pub trait OneWayFunction {
    fn next_key(&self, prev: &SymKey) -> SymKey;
}

/// SHA-256 truncated to 128 bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sha256Chain;

impl OneWayFunction for Sha256Chain {
    fn next_key(&self, prev: &SymKey) -> SymKey {
        let digest = Sha256::new().chain_update(CHAIN_DOMAIN).chain_update(prev.0).finalize();
        let mut k = [0u8; KEY_LEN];
        k.copy_from_slice(&digest[..KEY_LEN]);
        SymKey(k)
    }
}

pub fn derive_next_key(prev: &SymKey) -> SymKey {
    Sha256Chain.next_key(prev)
}

/// Public-key encryption used once per ordered friendship.
pub trait AsymmetricScheme {
    fn seal(&self, recipient: &PublicKey, aad: &[u8], plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8>;
    fn open(&self, recipient: &KeyPair, aad: &[u8], sealed: &[u8]) -> Option<Vec<u8>>;
}

/// Ephemeral X25519 agreement, SHA-256 key derivation, AES-128-GCM.
#[derive(Debug, Clone, Copy, Default)]
pub struct X25519Box;

impl X25519Box {
    fn box_key(shared: &[u8; 32], ephemeral: &PublicKey, recipient: &PublicKey) -> Aes128Gcm {
        let digest = Sha256::new()
            .chain_update(SEAL_DOMAIN)
            .chain_update(shared)
            .chain_update(ephemeral.as_bytes())
            .chain_update(recipient.as_bytes())
            .finalize();
        Aes128Gcm::new_from_slice(&digest[..KEY_LEN]).expect("16-byte key")
    }
}

impl AsymmetricScheme for X25519Box {
    fn seal(&self, recipient: &PublicKey, aad: &[u8], plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
        let mut eph_bytes = [0u8; 32];
        rng.fill_bytes(&mut eph_bytes);
        let eph = StaticSecret::from(eph_bytes);
        let eph_pub = PublicKey::from(&eph);
        let shared = eph.diffie_hellman(recipient);
        let cipher = Self::box_key(shared.as_bytes(), &eph_pub, recipient);
        // Each box key is used for exactly one message.
        let body = cipher
            .encrypt(Nonce::from_slice(&[0u8; 12]), AeadPayload { msg: plaintext, aad })
            .expect("in-memory encryption");
        let mut out = Vec::with_capacity(32 + body.len());
        out.extend_from_slice(eph_pub.as_bytes());
        out.extend_from_slice(&body);
        out
    }

    fn open(&self, recipient: &KeyPair, aad: &[u8], sealed: &[u8]) -> Option<Vec<u8>> {
        if sealed.len() < 32 {
            return None;
        }
        let mut eph = [0u8; 32];
        eph.copy_from_slice(&sealed[..32]);
        let eph_pub = PublicKey::from(eph);
        let shared = recipient.secret.diffie_hellman(&eph_pub);
        let cipher = Self::box_key(shared.as_bytes(), &eph_pub, &recipient.public);
        cipher
            .decrypt(
                Nonce::from_slice(&[0u8; 12]),
                AeadPayload {
                    msg: &sealed[32..],
                    aad,
                },
            )
            .ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Mode {
    FirstMeet = 1,
    MeetAgain = 2,
}

impl Mode {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Mode::FirstMeet),
            2 => Some(Mode::MeetAgain),
            _ => None,
        }
    }
}

/// Plaintext carried inside every packet.
///
/// Wire order: sender id (u32), snum (u32), next key (16 bytes), message
/// length (u32), message. Integers are little-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub sender_id: NodeId,
    pub snum: u32,
    pub next_key: SymKey,
    pub message: Vec<u8>,
}

impl Payload {
    const HEADER: usize = 4 + 4 + KEY_LEN + 4;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::HEADER + self.message.len());
        out.extend_from_slice(&self.sender_id.0.to_le_bytes());
        out.extend_from_slice(&self.snum.to_le_bytes());
        out.extend_from_slice(&self.next_key.0);
        out.extend_from_slice(&(self.message.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.message);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let malformed = |what: &str| ProtocolError::new(ErrorKind::MalformedMessage, format!("payload: {what}"));
        if bytes.len() < Self::HEADER {
            return Err(malformed("truncated header"));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let sender_id = NodeId::new(u32_at(0)).ok_or_else(|| malformed("sender id 0"))?;
        let snum = u32_at(4);
        let mut key = [0u8; KEY_LEN];
        key.copy_from_slice(&bytes[8..8 + KEY_LEN]);
        let len = u32_at(8 + KEY_LEN) as usize;
        if bytes.len() - Self::HEADER != len {
            return Err(malformed("message length mismatch"));
        }
        Ok(Self {
            sender_id,
            snum,
            next_key: SymKey(key),
            message: bytes[Self::HEADER..].to_vec(),
        })
    }
}

/// The wire unit: cleartext sender id and mode, then the ciphertext.
///
/// Layout: sender id (u32 LE), mode (u8), ciphertext length (u32 LE),
/// ciphertext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub sender_id: NodeId,
    pub mode: Mode,
    pub ciphertext: Vec<u8>,
}

impl Packet {
    pub const HEADER_LEN: usize = 9;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::HEADER_LEN + self.ciphertext.len());
        out.extend_from_slice(&self.sender_id.0.to_le_bytes());
        out.push(self.mode as u8);
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let malformed = |what: &str| ProtocolError::new(ErrorKind::MalformedMessage, format!("packet: {what}"));
        if bytes.len() < Self::HEADER_LEN {
            return Err(malformed("truncated header"));
        }
        let sender = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
        let sender_id = NodeId::new(sender).ok_or_else(|| malformed("sender id 0"))?;
        let mode = Mode::from_byte(bytes[4]).ok_or_else(|| malformed("unknown mode"))?;
        let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        if bytes.len() - Self::HEADER_LEN != len {
            return Err(malformed("ciphertext length mismatch"));
        }
        Ok(Self {
            sender_id,
            mode,
            ciphertext: bytes[Self::HEADER_LEN..].to_vec(),
        })
    }

    pub fn wire_len(&self) -> usize {
        Self::HEADER_LEN + self.ciphertext.len()
    }

    fn aad(sender_id: NodeId, mode: Mode) -> [u8; 5] {
        let id = sender_id.0.to_le_bytes();
        [id[0], id[1], id[2], id[3], mode as u8]
    }
}

fn chain_nonce(version: u32) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[..4].copy_from_slice(&version.to_le_bytes());
    n
}

fn seal_symmetric(key: &SymKey, version: u32, aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    Aes128Gcm::new_from_slice(&key.0)
        .expect("16-byte key")
        .encrypt(
            Nonce::from_slice(&chain_nonce(version)),
            AeadPayload { msg: plaintext, aad },
        )
        .expect("in-memory encryption")
}

fn open_symmetric(key: &SymKey, version: u32, aad: &[u8], ciphertext: &[u8]) -> Option<Vec<u8>> {
    Aes128Gcm::new_from_slice(&key.0)
        .expect("16-byte key")
        .decrypt(
            Nonce::from_slice(&chain_nonce(version)),
            AeadPayload { msg: ciphertext, aad },
        )
        .ok()
}

/// The exchange scheme, parameterised over its two primitives.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeyExchange<F = Sha256Chain, A = X25519Box> {
    pub chain: F,
    pub asym: A,
}

impl<F: OneWayFunction, A: AsymmetricScheme> KeyExchange<F, A> {
    pub fn new(chain: F, asym: A) -> Self {
        Self { chain, asym }
    }

    /// Opens the sender-to-receiver chain with a fresh key at version 0.
    /// Returns the packet and the link the sender keeps.
    pub fn first_meet_send(
        &self,
        sender_id: NodeId,
        receiver_public: &PublicKey,
        message: &[u8],
        rng: &mut dyn RngCore,
    ) -> Result<(Packet, KeyLink), ProtocolError> {
        if message.is_empty() {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                "empty first-meet message",
            ));
        }
        let mut key = [0u8; KEY_LEN];
        rng.fill_bytes(&mut key);
        let key = SymKey(key);
        let payload = Payload {
            sender_id,
            snum: 0,
            next_key: key,
            message: message.to_vec(),
        };
        let aad = Packet::aad(sender_id, Mode::FirstMeet);
        let ciphertext = self.asym.seal(receiver_public, &aad, &payload.encode(), rng);
        let packet = Packet {
            sender_id,
            mode: Mode::FirstMeet,
            ciphertext,
        };
        Ok((packet, KeyLink::fresh(key)))
    }

    /// Opens a first-meet packet with the receiver's private key. Returns the
    /// message and the inbound link the receiver stores for the sender.
    pub fn first_meet_receive(&self, receiver: &KeyPair, packet: &Packet) -> Result<(Vec<u8>, KeyLink), ProtocolError> {
        if packet.mode != Mode::FirstMeet {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                "expected a first-meet packet",
            ));
        }
        let aad = Packet::aad(packet.sender_id, packet.mode);
        let plain = self.asym.open(receiver, &aad, &packet.ciphertext).ok_or_else(|| {
            ProtocolError::new(ErrorKind::AuthFailure, "first-meet packet does not open under our key")
        })?;
        let payload = Payload::decode(&plain)?;
        if payload.sender_id != packet.sender_id {
            return Err(ProtocolError::new(
                ErrorKind::AuthFailure,
                "sealed sender differs from header",
            ));
        }
        if payload.snum != 0 {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                format!("first-meet snum must be 0, got {}", payload.snum),
            ));
        }
        Ok((payload.message, KeyLink::fresh(payload.next_key)))
    }

    /// Encrypts under the current chain key and advances the sender's link.
    /// The link stays marked unconfirmed until [`confirm`] is called; on error
    /// it is left untouched.
    ///
    /// [`confirm`]: KeyExchange::confirm
    pub fn meet_again_send(
        &self,
        sender_id: NodeId,
        link: &mut KeyLink,
        message: &[u8],
    ) -> Result<Packet, ProtocolError> {
        if message.is_empty() {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                "empty meet-again message",
            ));
        }
        if link.awaiting_confirmation {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                "previous exchange on this chain is unconfirmed",
            ));
        }
        let next_key = self.chain.next_key(&link.key);
        let payload = Payload {
            sender_id,
            snum: link.snum,
            next_key,
            message: message.to_vec(),
        };
        let aad = Packet::aad(sender_id, Mode::MeetAgain);
        let ciphertext = seal_symmetric(&link.key, link.version, &aad, &payload.encode());
        link.key = next_key;
        link.version += 1;
        link.snum += 1;
        link.awaiting_confirmation = true;
        Ok(Packet {
            sender_id,
            mode: Mode::MeetAgain,
            ciphertext,
        })
    }

    /// Marks the sender's last exchange as delivered.
    pub fn confirm(&self, link: &mut KeyLink) {
        link.awaiting_confirmation = false;
    }

    /// Decrypts under the stored chain key, checks freshness and chain
    /// continuity, then rotates the receiver's link. On error the link is
    /// left untouched.
    pub fn meet_again_receive(&self, link: &mut KeyLink, packet: &Packet) -> Result<Vec<u8>, ProtocolError> {
        if packet.mode != Mode::MeetAgain {
            return Err(ProtocolError::new(
                ErrorKind::MalformedMessage,
                "expected a meet-again packet",
            ));
        }
        let aad = Packet::aad(packet.sender_id, packet.mode);
        let Some(plain) = open_symmetric(&link.key, link.version, &aad, &packet.ciphertext) else {
            // Retired keys still authenticate packets that were already
            // accepted once; anything else is forged or modified.
            let stale = link
                .history
                .iter()
                .enumerate()
                .rev()
                .any(|(v, k)| open_symmetric(k, v as u32, &aad, &packet.ciphertext).is_some());
            return Err(if stale {
                ProtocolError::new(ErrorKind::ReplayDetected, "packet was sealed under a retired key")
            } else {
                ProtocolError::new(ErrorKind::IntegrityFailure, "authenticated decryption failed")
            });
        };
        let payload = Payload::decode(&plain)?;
        if payload.sender_id != packet.sender_id {
            return Err(ProtocolError::new(
                ErrorKind::IntegrityFailure,
                "sealed sender differs from header",
            ));
        }
        if payload.snum != link.snum {
            return Err(ProtocolError::new(
                ErrorKind::ReplayDetected,
                format!("snum {} but expected {}", payload.snum, link.snum),
            ));
        }
        if payload.next_key != self.chain.next_key(&link.key) {
            return Err(ProtocolError::new(
                ErrorKind::IntegrityFailure,
                "next key is not the image of the current key",
            ));
        }
        let retired = std::mem::replace(&mut link.key, payload.next_key);
        link.history.push(retired);
        link.version += 1;
        link.snum += 1;
        Ok(payload.message)
    }
}
