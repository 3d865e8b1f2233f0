//! Simulated threshold and ephemeral signatures.
//!
//! No real cryptography: tokens are salted hashes held in a per-trial
//! registry, and unforgeability is a module invariant — there is no API
//! through which a caller can mint a verifying token without the registry
//! recording the corresponding signing operation. What the simulation
//! preserves faithfully is the *logic*: a quorum signature exists only if
//! enough members contributed shares over the same digest, verification
//! is bound to the exact signed content, and quorum public keys are only
//! visible to the quorum itself and its adjacent quorums.

use alloc::collections::{BTreeMap, BTreeSet};
use core::fmt;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::graph::{NodeId, QuorumGraph};
use crate::math::{combine_threshold, splitmix64};

/// Token for some interned message content. Distinct contents receive
/// distinct digests (the table is exactly injective by construction).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Digest(pub u64);

/// Interner mapping message contents to digests.
///
/// Generic over the content type so the protocol layer can digest its own
/// message representation without this module depending on it.
pub struct DigestTable<V: Ord + Clone> {
    map: BTreeMap<V, u64>,
}

impl<V: Ord + Clone> DigestTable<V> {
    pub fn new() -> Self {
        Self { map: BTreeMap::new() }
    }

    pub fn digest(&mut self, content: &V) -> Digest {
        if let Some(&d) = self.map.get(content) {
            return Digest(d);
        }
        let d = self.map.len() as u64 + 1;
        self.map.insert(content.clone(), d);
        Digest(d)
    }
}

impl<V: Ord + Clone> Default for DigestTable<V> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a quorum's public key. Obtainable only where the visibility
/// rule allows, so holding one implies the holder may verify.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PublicKey {
    pub quorum: u32,
    tag: u64,
}

/// One member's contribution towards a quorum signature.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SignatureShare {
    pub signer: NodeId,
    pub quorum: u32,
    pub digest: Digest,
    token: u64,
}

/// An assembled quorum signature over a digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct SignedMessage {
    pub quorum: u32,
    pub digest: Digest,
    token: u64,
}

/// Identifier of an ephemeral keypair.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct KeyId(pub u32);

/// Signature under an ephemeral secret key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct EphemeralSig {
    pub key: KeyId,
    pub digest: Digest,
    token: u64,
}

/// Secret half of an ephemeral keypair; only its holder can sign.
#[derive(Clone, Copy, Debug)]
pub struct EphemeralSecret {
    key: KeyId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CryptoError {
    /// Signer is not a member of the quorum it tried to sign for.
    NotAMember { node: NodeId, quorum: u32 },
    /// Fewer valid, distinct shares than the combine threshold.
    ThresholdNotMet { valid: u32, needed: u32 },
    /// The viewer is neither in the quorum nor in an adjacent one.
    KeyNotVisible { node: NodeId, quorum: u32 },
}

impl fmt::Display for CryptoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CryptoError::NotAMember { node, quorum } => {
                write!(f, "{node} is not a member of quorum #{quorum}")
            }
            CryptoError::ThresholdNotMet { valid, needed } => {
                write!(f, "only {valid} valid shares, need {needed}")
            }
            CryptoError::KeyNotVisible { node, quorum } => {
                write!(f, "{node} cannot see the key of quorum #{quorum}")
            }
        }
    }
}

impl core::error::Error for CryptoError {}

/// Per-trial key material and signing state.
pub struct CryptoRegistry {
    salt: u64,
    /// Quorum signatures that have actually been assembled.
    issued: BTreeSet<(u32, u64)>,
    /// Owner of each ephemeral keypair handed out so far.
    ephemeral_owners: alloc::vec::Vec<NodeId>,
}

impl CryptoRegistry {
    /// Runs the simulated distributed key setup: every quorum gets key
    /// material derived from a trial-secret salt.
    pub fn setup(rng: &mut ChaCha8Rng) -> Self {
        Self {
            salt: rng.next_u64() | 1,
            issued: BTreeSet::new(),
            ephemeral_owners: alloc::vec::Vec::new(),
        }
    }

    fn key_tag(&self, quorum: u32) -> u64 {
        splitmix64(self.salt ^ 0x51 ^ (quorum as u64) << 8)
    }

    fn share_token(&self, signer: NodeId, quorum: u32, digest: Digest) -> u64 {
        splitmix64(
            self.salt
                ^ 0x52
                ^ (signer.0 as u64) << 8
                ^ (quorum as u64) << 40
                ^ digest.0.rotate_left(23),
        )
    }

    fn combined_token(&self, quorum: u32, digest: Digest) -> u64 {
        splitmix64(self.salt ^ 0x53 ^ (quorum as u64) << 8 ^ digest.0.rotate_left(41))
    }

    fn ephemeral_token(&self, key: KeyId, digest: Digest) -> u64 {
        splitmix64(self.salt ^ 0x54 ^ (key.0 as u64) << 8 ^ digest.0.rotate_left(9))
    }

    /// The public key of `quorum`, as seen by `viewer`. Fails when the
    /// visibility rule (own or adjacent quorum) does not grant access.
    pub fn public_key_for(
        &self,
        graph: &QuorumGraph,
        viewer: NodeId,
        quorum: u32,
    ) -> Result<PublicKey, CryptoError> {
        if graph.can_see_key(viewer, quorum as usize) {
            Ok(PublicKey { quorum, tag: self.key_tag(quorum) })
        } else {
            Err(CryptoError::KeyNotVisible { node: viewer, quorum })
        }
    }

    /// Produces `signer`'s share over `digest` for its quorum. Repeated
    /// calls return the identical share.
    pub fn sign_share(
        &self,
        graph: &QuorumGraph,
        signer: NodeId,
        quorum: u32,
        digest: Digest,
    ) -> Result<SignatureShare, CryptoError> {
        if !graph.is_member(signer, quorum as usize) {
            return Err(CryptoError::NotAMember { node: signer, quorum });
        }
        Ok(SignatureShare {
            signer,
            quorum,
            digest,
            token: self.share_token(signer, quorum, digest),
        })
    }

    fn share_is_valid(&self, graph: &QuorumGraph, share: &SignatureShare) -> bool {
        graph.is_member(share.signer, share.quorum as usize)
            && share.token == self.share_token(share.signer, share.quorum, share.digest)
    }

    /// Assembles a quorum signature from shares. Shares that are forged,
    /// duplicated, from non-members, or over a different digest do not
    /// count towards the ⌈7q/8⌉ threshold.
    pub fn combine_shares(
        &mut self,
        graph: &QuorumGraph,
        quorum: u32,
        digest: Digest,
        shares: &[SignatureShare],
    ) -> Result<SignedMessage, CryptoError> {
        let needed = combine_threshold(graph.members(quorum as usize).len() as u32);
        let mut signers = BTreeSet::new();
        for share in shares {
            if share.quorum == quorum && share.digest == digest && self.share_is_valid(graph, share)
            {
                signers.insert(share.signer);
            }
        }
        let valid = signers.len() as u32;
        if valid < needed {
            return Err(CryptoError::ThresholdNotMet { valid, needed });
        }
        self.issued.insert((quorum, digest.0));
        Ok(SignedMessage { quorum, digest, token: self.combined_token(quorum, digest) })
    }

    /// Checks a quorum signature against the content digest it claims to
    /// cover. The caller proves visibility by presenting the key handle.
    pub fn verify(&self, key: PublicKey, signed: &SignedMessage, content: Digest) -> bool {
        key.quorum == signed.quorum
            && key.tag == self.key_tag(signed.quorum)
            && signed.digest == content
            && signed.token == self.combined_token(signed.quorum, signed.digest)
            && self.issued.contains(&(signed.quorum, signed.digest.0))
    }

    /// Creates a fresh ephemeral keypair owned by `owner`.
    pub fn generate_ephemeral(&mut self, owner: NodeId) -> (KeyId, EphemeralSecret) {
        let key = KeyId(self.ephemeral_owners.len() as u32);
        self.ephemeral_owners.push(owner);
        (key, EphemeralSecret { key })
    }

    /// Signs with an ephemeral secret key.
    pub fn sign_ephemeral(&self, secret: &EphemeralSecret, content: Digest) -> EphemeralSig {
        EphemeralSig {
            key: secret.key,
            digest: content,
            token: self.ephemeral_token(secret.key, content),
        }
    }

    /// Verifies an ephemeral signature against content under a given key.
    /// Anyone holding the public key id can verify.
    pub fn verify_ephemeral(&self, key: KeyId, sig: &EphemeralSig, content: Digest) -> bool {
        sig.key == key
            && sig.digest == content
            && (key.0 as usize) < self.ephemeral_owners.len()
            && sig.token == self.ephemeral_token(key, content)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;
    use alloc::vec::Vec;

    fn setup(q: u32) -> (QuorumGraph, CryptoRegistry) {
        let graph = QuorumGraph::single_quorum(q);
        let mut rng = rng_stream(99, "dkg");
        (graph, CryptoRegistry::setup(&mut rng))
    }

    fn shares_of(
        graph: &QuorumGraph,
        reg: &CryptoRegistry,
        count: usize,
        digest: Digest,
    ) -> Vec<SignatureShare> {
        graph.members(0)[..count]
            .iter()
            .map(|&m| reg.sign_share(graph, m, 0, digest).unwrap())
            .collect()
    }

    #[test]
    fn threshold_boundary() {
        for q in [8u32, 16, 55] {
            let (graph, mut reg) = setup(q);
            let digest = Digest(42);
            let needed = combine_threshold(q) as usize;
            let below = shares_of(&graph, &reg, needed - 1, digest);
            assert!(matches!(
                reg.combine_shares(&graph, 0, digest, &below),
                Err(CryptoError::ThresholdNotMet { .. })
            ));
            let at = shares_of(&graph, &reg, needed, digest);
            let signed = reg.combine_shares(&graph, 0, digest, &at).unwrap();
            let key = reg.public_key_for(&graph, graph.members(0)[0], 0).unwrap();
            assert!(reg.verify(key, &signed, digest));
        }
    }

    #[test]
    fn duplicate_shares_do_not_count() {
        let (graph, mut reg) = setup(8);
        let digest = Digest(1);
        let one = reg.sign_share(&graph, NodeId(0), 0, digest).unwrap();
        let copies: Vec<_> = (0..20).map(|_| one).collect();
        assert!(matches!(
            reg.combine_shares(&graph, 0, digest, &copies),
            Err(CryptoError::ThresholdNotMet { valid: 1, .. })
        ));
    }

    #[test]
    fn forged_share_rejected() {
        let (graph, mut reg) = setup(8);
        let digest = Digest(7);
        let mut shares = shares_of(&graph, &reg, 7, digest);
        // Tamper with one share's digest binding: it claims the right
        // digest but its token was minted for another one.
        let other = reg.sign_share(&graph, shares[0].signer, 0, Digest(8)).unwrap();
        shares[0] = SignatureShare { digest, ..other };
        assert!(matches!(
            reg.combine_shares(&graph, 0, digest, &shares),
            Err(CryptoError::ThresholdNotMet { valid: 6, .. })
        ));
    }

    #[test]
    fn verification_is_content_bound() {
        let (graph, mut reg) = setup(8);
        let digest = Digest(5);
        let shares = shares_of(&graph, &reg, 7, digest);
        let signed = reg.combine_shares(&graph, 0, digest, &shares).unwrap();
        let key = reg.public_key_for(&graph, NodeId(0), 0).unwrap();
        assert!(reg.verify(key, &signed, digest));
        // Same signature presented for different content: rejected.
        assert!(!reg.verify(key, &signed, Digest(6)));
    }

    #[test]
    fn unissued_signature_does_not_verify() {
        let (graph, reg) = setup(8);
        let key = reg.public_key_for(&graph, NodeId(0), 0).unwrap();
        // Structurally plausible object that no combine produced.
        let fake = SignedMessage { quorum: 0, digest: Digest(9), token: 123 };
        assert!(!reg.verify(key, &fake, Digest(9)));
    }

    #[test]
    fn key_visibility_enforced() {
        let graph = QuorumGraph::build(1_024, 3).unwrap();
        let mut rng = rng_stream(4, "dkg");
        let reg = CryptoRegistry::setup(&mut rng);
        let q = 40u32;
        let outsider = (0..graph.n())
            .map(NodeId)
            .find(|&x| !graph.can_see_key(x, q as usize))
            .unwrap();
        assert!(matches!(
            reg.public_key_for(&graph, outsider, q),
            Err(CryptoError::KeyNotVisible { .. })
        ));
        let member = graph.members(q as usize)[0];
        assert!(reg.public_key_for(&graph, member, q).is_ok());
    }

    #[test]
    fn ephemeral_roundtrip_and_forgery() {
        let (_, mut reg) = setup(8);
        let (kp, ks) = reg.generate_ephemeral(NodeId(3));
        let content = Digest(77);
        let sig = reg.sign_ephemeral(&ks, content);
        assert!(reg.verify_ephemeral(kp, &sig, content));
        // Signature over one content does not verify for another.
        assert!(!reg.verify_ephemeral(kp, &sig, Digest(78)));
        // A different keypair's signature does not verify under kp.
        let (_kp2, ks2) = reg.generate_ephemeral(NodeId(4));
        let sig2 = reg.sign_ephemeral(&ks2, content);
        assert!(!reg.verify_ephemeral(kp, &sig2, content));
        // Token forgery fails.
        let forged = EphemeralSig { token: sig.token ^ 1, ..sig };
        assert!(!reg.verify_ephemeral(kp, &forged, content));
    }

    #[test]
    fn digest_table_is_injective() {
        let mut table: DigestTable<(u32, u8)> = DigestTable::new();
        let a = table.digest(&(1, 0));
        let b = table.digest(&(2, 0));
        let c = table.digest(&(1, 1));
        let a2 = table.digest(&(1, 0));
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }
}
