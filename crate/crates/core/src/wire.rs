//! ECM/EMM wire formats and the protected channel between head-end CA
//! components and decoder CA clients.
//!
//! All integers are big-endian and variable-length fields carry a 4-byte
//! length prefix.
//!
//! ```text
//! ECM: "HECM" | ver u8 | ca_system u16 | epoch u64 | lp(seal(group, hdr, secret))
//! EMM: "HEMM" | ver u8 | ca_system u16 | kind u8 | addressee u64 | body
//!      body (per-receiver kinds) = lp(seal(receiver_key, hdr, payload))
//!      body (broadcast kinds)    = lp(payload) | lp(seal(group, hdr | lp(payload), ""))
//! ```
//!
//! `hdr` is every byte before the body. Broadcast EMMs are integrity
//! protected only; per-receiver EMMs and ECM secrets are also encrypted.

use std::collections::BTreeMap;

use zeroize::Zeroizing;

use crate::codec::{Reader, Writer};
use crate::crypto::{PublicKey, SignedMessage, Suite, SymKey};
use crate::error::{Error, Result};
use crate::identity::Identity;
use crate::ttp::{Certificate, SignedCrl};

pub const ECM_MAGIC: &[u8; 4] = b"HECM";
pub const EMM_MAGIC: &[u8; 4] = b"HEMM";
pub const WIRE_VERSION: u8 = 1;
const BROADCAST_MARKER: u64 = u64::MAX;

/// Authenticated encryption of `plaintext` with `aad` bound in.
pub fn protect(suite: &Suite, key: &SymKey, plaintext: &[u8], aad: &[u8]) -> Result<Vec<u8>> {
    suite.seal(key, aad, plaintext)
}

pub fn unprotect(suite: &Suite, key: &SymKey, protected: &[u8], aad: &[u8]) -> Result<Vec<u8>> {
    suite.open(key, aad, protected)
}

/// Head-end side channel keys of one CA system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaChannelKeys {
    pub group: SymKey,
    pub per_receiver: BTreeMap<Identity, SymKey>,
}

/// What one CA client is provisioned with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientChannelKeys {
    pub ca_system_id: u16,
    pub receiver_id: Identity,
    pub group: SymKey,
    pub receiver: SymKey,
}

fn check_magic(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<()> {
    if r.raw(4)? != magic {
        return Err(Error::BadMagic);
    }
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(Error::BadVersion(version));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ecm {
    pub ca_system_id: u16,
    pub epoch: u64,
    pub protected_secret: Vec<u8>,
}

impl Ecm {
    pub const HEADER_LEN: usize = 4 + 1 + 2 + 8;

    fn header(ca_system_id: u16, epoch: u64) -> Vec<u8> {
        Writer::new()
            .raw(ECM_MAGIC)
            .u8(WIRE_VERSION)
            .u16(ca_system_id)
            .u64(epoch)
            .finish()
    }

    /// Protects the epoch secret (`r` or `K`) under the group key.
    pub fn seal(suite: &Suite, group: &SymKey, ca_system_id: u16, epoch: u64, secret: &[u8]) -> Result<Self> {
        if secret.len() != suite.secret_len_bytes() {
            return Err(Error::InvalidSecretLength(secret.len() as u32 * 8));
        }
        let protected_secret = protect(suite, group, secret, &Self::header(ca_system_id, epoch))?;
        Ok(Self {
            ca_system_id,
            epoch,
            protected_secret,
        })
    }

    pub fn open(&self, suite: &Suite, group: &SymKey) -> Result<Zeroizing<Vec<u8>>> {
        let secret = unprotect(
            suite,
            group,
            &self.protected_secret,
            &Self::header(self.ca_system_id, self.epoch),
        )?;
        if secret.len() != suite.secret_len_bytes() {
            return Err(Error::DecryptionFailed);
        }
        Ok(Zeroizing::new(secret))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&Self::header(self.ca_system_id, self.epoch));
        w.bytes(&self.protected_secret);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        check_magic(&mut r, ECM_MAGIC)?;
        let ca_system_id = r.u16()?;
        let epoch = r.u64()?;
        let protected_secret = r.bytes()?.to_vec();
        r.finish()?;
        Ok(Self {
            ca_system_id,
            epoch,
            protected_secret,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum EmmKind {
    BroadcastSenderPk = 1,
    BroadcastCert = 2,
    PerReceiverEnroll = 3,
    PkSetUpdate = 4,
    CrlUpdate = 5,
    Entitlement = 6,
}

impl EmmKind {
    pub fn is_per_receiver(self) -> bool {
        matches!(self, EmmKind::PerReceiverEnroll | EmmKind::Entitlement)
    }

    pub fn name(self) -> &'static str {
        match self {
            EmmKind::BroadcastSenderPk => "broadcast_sender_pk",
            EmmKind::BroadcastCert => "broadcast_cert",
            EmmKind::PerReceiverEnroll => "per_receiver_enroll",
            EmmKind::PkSetUpdate => "pk_set_update",
            EmmKind::CrlUpdate => "crl_update",
            EmmKind::Entitlement => "entitlement",
        }
    }
}

impl TryFrom<u8> for EmmKind {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            1 => EmmKind::BroadcastSenderPk,
            2 => EmmKind::BroadcastCert,
            3 => EmmKind::PerReceiverEnroll,
            4 => EmmKind::PkSetUpdate,
            5 => EmmKind::CrlUpdate,
            6 => EmmKind::Entitlement,
            _ => {
                return Err(Error::Malformed {
                    offset: 7,
                    reason: "unknown emm kind",
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Addressee {
    Broadcast,
    Receiver(Identity),
}

impl Addressee {
    fn to_u64(self) -> u64 {
        match self {
            Addressee::Broadcast => BROADCAST_MARKER,
            Addressee::Receiver(id) => id.0,
        }
    }

    fn from_u64(v: u64) -> Self {
        if v == BROADCAST_MARKER {
            Addressee::Broadcast
        } else {
            Addressee::Receiver(Identity(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmmBody {
    Sealed(Vec<u8>),
    Authenticated { payload: Vec<u8>, tag: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emm {
    pub ca_system_id: u16,
    pub kind: EmmKind,
    pub addressee: Addressee,
    pub body: EmmBody,
}

impl Emm {
    pub const HEADER_LEN: usize = 4 + 1 + 2 + 1 + 8;

    fn header(&self) -> Vec<u8> {
        Writer::new()
            .raw(EMM_MAGIC)
            .u8(WIRE_VERSION)
            .u16(self.ca_system_id)
            .u8(self.kind as u8)
            .u64(self.addressee.to_u64())
            .finish()
    }

    fn mac_input(header: &[u8], payload: &[u8]) -> Vec<u8> {
        Writer::new().raw(header).bytes(payload).finish()
    }

    /// Builds an EMM of `kind`. Per-receiver kinds are encrypted under `key`
    /// (the receiver's channel key); broadcast kinds carry `payload` in the
    /// clear with a tag under `key` (the group key).
    pub fn seal(
        suite: &Suite,
        key: &SymKey,
        ca_system_id: u16,
        kind: EmmKind,
        addressee: Addressee,
        payload: &[u8],
    ) -> Result<Self> {
        match (kind.is_per_receiver(), addressee) {
            (true, Addressee::Receiver(_)) | (false, Addressee::Broadcast) => {}
            _ => {
                return Err(Error::Malformed {
                    offset: 8,
                    reason: "addressee does not match emm kind",
                })
            }
        }
        let mut emm = Self {
            ca_system_id,
            kind,
            addressee,
            body: EmmBody::Sealed(Vec::new()),
        };
        let header = emm.header();
        emm.body = if kind.is_per_receiver() {
            EmmBody::Sealed(protect(suite, key, payload, &header)?)
        } else {
            EmmBody::Authenticated {
                payload: payload.to_vec(),
                tag: protect(suite, key, &[], &Self::mac_input(&header, payload))?,
            }
        };
        Ok(emm)
    }

    /// Checks protection under `key` and returns the payload.
    pub fn open(&self, suite: &Suite, key: &SymKey) -> Result<Vec<u8>> {
        let header = self.header();
        match &self.body {
            EmmBody::Sealed(ct) => unprotect(suite, key, ct, &header),
            EmmBody::Authenticated { payload, tag } => {
                unprotect(suite, key, tag, &Self::mac_input(&header, payload))?;
                Ok(payload.clone())
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.header());
        match &self.body {
            EmmBody::Sealed(ct) => {
                w.bytes(ct);
            }
            EmmBody::Authenticated { payload, tag } => {
                w.bytes(payload).bytes(tag);
            }
        }
        w.finish()
    }

    /// Structural decode; protection is checked by [`Emm::open`].
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        check_magic(&mut r, EMM_MAGIC)?;
        let ca_system_id = r.u16()?;
        let kind_at = r.offset();
        let kind = EmmKind::try_from(r.u8()?).map_err(|_| Error::Malformed {
            offset: kind_at,
            reason: "unknown emm kind",
        })?;
        let addressee = Addressee::from_u64(r.u64()?);
        if kind.is_per_receiver() == (addressee == Addressee::Broadcast) {
            return Err(r.malformed("addressee does not match emm kind"));
        }
        let body = if kind.is_per_receiver() {
            EmmBody::Sealed(r.bytes()?.to_vec())
        } else {
            EmmBody::Authenticated {
                payload: r.bytes()?.to_vec(),
                tag: r.bytes()?.to_vec(),
            }
        };
        r.finish()?;
        Ok(Self {
            ca_system_id,
            kind,
            addressee,
            body,
        })
    }
}

/// Typed EMM payloads; the EMM kind selects the schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmmPayload {
    SenderPk(PublicKey),
    Cert(Certificate),
    Enroll { signed_blob: SignedMessage, ltk: SymKey },
    PkSet(Vec<PublicKey>),
    Crl(SignedCrl),
    Entitlement { authorized: bool },
}

impl EmmPayload {
    pub fn kind(&self) -> EmmKind {
        match self {
            EmmPayload::SenderPk(_) => EmmKind::BroadcastSenderPk,
            EmmPayload::Cert(_) => EmmKind::BroadcastCert,
            EmmPayload::Enroll { .. } => EmmKind::PerReceiverEnroll,
            EmmPayload::PkSet(_) => EmmKind::PkSetUpdate,
            EmmPayload::Crl(_) => EmmKind::CrlUpdate,
            EmmPayload::Entitlement { .. } => EmmKind::Entitlement,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            EmmPayload::SenderPk(pk) => pk.encode(&mut w),
            EmmPayload::Cert(cert) => cert.encode(&mut w),
            EmmPayload::Enroll { signed_blob, ltk } => {
                w.bytes(&signed_blob.to_bytes()).bytes(ltk.as_bytes());
            }
            EmmPayload::PkSet(keys) => {
                w.u32(keys.len() as u32);
                for pk in keys {
                    pk.encode(&mut w);
                }
            }
            EmmPayload::Crl(crl) => crl.encode(&mut w),
            EmmPayload::Entitlement { authorized } => {
                w.u8(u8::from(*authorized));
            }
        }
        w.finish()
    }

    pub fn decode(kind: EmmKind, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let payload = match kind {
            EmmKind::BroadcastSenderPk => EmmPayload::SenderPk(PublicKey::decode(&mut r)?),
            EmmKind::BroadcastCert => EmmPayload::Cert(Certificate::decode(&mut r)?),
            EmmKind::PerReceiverEnroll => EmmPayload::Enroll {
                signed_blob: SignedMessage::from_bytes(r.bytes()?)?,
                ltk: SymKey::from_bytes(r.bytes()?),
            },
            EmmKind::PkSetUpdate => {
                let n = r.u32()? as usize;
                if n > r.remaining() / 4 {
                    return Err(r.malformed("key count exceeds input"));
                }
                EmmPayload::PkSet((0..n).map(|_| PublicKey::decode(&mut r)).collect::<Result<_>>()?)
            }
            EmmKind::CrlUpdate => EmmPayload::Crl(SignedCrl::decode(&mut r)?),
            EmmKind::Entitlement => match r.u8()? {
                0 => EmmPayload::Entitlement { authorized: false },
                1 => EmmPayload::Entitlement { authorized: true },
                _ => return Err(r.malformed("entitlement flag")),
            },
        };
        r.finish()?;
        Ok(payload)
    }

    /// Seals this payload into an EMM of the matching kind.
    pub fn seal(&self, suite: &Suite, key: &SymKey, ca_system_id: u16, addressee: Addressee) -> Result<Emm> {
        Emm::seal(suite, key, ca_system_id, self.kind(), addressee, &self.encode())
    }
}
