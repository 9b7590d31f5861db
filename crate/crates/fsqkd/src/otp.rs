//! One-time-pad encryption with a persistent spent-range ledger.
//!
//! XOR is an involution, so encryption and decryption are the same
//! operation; everything interesting here is key discipline. Each
//! encryption consumes the next unspent segment of the pad and records it
//! in a sidecar ledger next to the key file, so no key bit is ever used
//! twice even across separate invocations. The ciphertext carries the
//! segment's bit offset in its text header, which is public information —
//! the pad's security does not rest on hiding *which* bits were used.
//! Decryption reads the segment named by the header and never touches the
//! ledger: reading key material leaks nothing, only reusing it for a
//! second encryption would.

use std::path::{Path, PathBuf};

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::keyfile::{read_key_path, split_header};

/// First line of every ciphertext file.
pub const CIPHER_MAGIC: &str = "fsqkd otp v1";

/// First line of every ledger file.
pub const LEDGER_MAGIC: &str = "fsqkd pad ledger v1";

/// Spent key ranges for one pad: sorted, pairwise-disjoint half-open bit
/// intervals. The ledger is the sole authority on which bits may still be
/// used for encryption.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PadLedger {
    spent: Vec<(usize, usize)>,
}

impl PadLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sidecar path for a key file: the key path with `.spent` appended.
    pub fn path_for(key_path: &Path) -> PathBuf {
        let mut name = key_path.as_os_str().to_os_string();
        name.push(".spent");
        PathBuf::from(name)
    }

    /// Loads the ledger at `path`; a missing file is an empty ledger.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    /// Persists the ledger at `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Parses the ledger text format: the magic line, then one
    /// `start..end` range per line. Overlapping or inverted ranges mean
    /// the discipline was already broken and are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Pad(format!("ledger: {msg}"));
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first == LEDGER_MAGIC => {}
            other => return Err(bad(format!("expected magic line, found {other:?}"))),
        }
        let mut spent: Vec<(usize, usize)> = Vec::new();
        for line in lines {
            let (start, end) = line
                .split_once("..")
                .ok_or_else(|| bad(format!("malformed range line {line:?}")))?;
            let start: usize = start
                .parse()
                .map_err(|_| bad(format!("malformed range line {line:?}")))?;
            let end: usize = end
                .parse()
                .map_err(|_| bad(format!("malformed range line {line:?}")))?;
            if start >= end {
                return Err(bad(format!("empty or inverted range {start}..{end}")));
            }
            spent.push((start, end));
        }
        spent.sort_unstable();
        for pair in spent.windows(2) {
            if pair[0].1 > pair[1].0 {
                return Err(bad(format!(
                    "overlapping ranges {}..{} and {}..{}",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(Self { spent })
    }

    /// Canonical text rendering, inverse of [`PadLedger::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::from(LEDGER_MAGIC);
        s.push('\n');
        for (start, end) in &self.spent {
            s.push_str(&format!("{start}..{end}\n"));
        }
        s
    }

    /// True when `[start, start + len)` intersects no spent range.
    pub fn is_free(&self, start: usize, len: usize) -> bool {
        let end = start + len;
        self.spent
            .iter()
            .all(|&(s, e)| end <= s || e <= start)
    }

    /// Marks `[start, start + len)` spent, refusing any overlap with an
    /// already-spent range. Zero-length claims are a no-op.
    pub fn claim(&mut self, start: usize, len: usize) -> Result<()> {
        if len == 0 {
            return Ok(());
        }
        let end = start
            .checked_add(len)
            .ok_or_else(|| Error::Pad("claimed range overflows".into()))?;
        if !self.is_free(start, len) {
            return Err(Error::Pad(format!(
                "key bits {start}..{end} were already spent; a pad segment must never be reused"
            )));
        }
        let insert_at = self.spent.partition_point(|&(s, _)| s < start);
        self.spent.insert(insert_at, (start, end));
        Ok(())
    }

    /// First bit offset at or beyond which the whole pad tail is unspent.
    pub fn frontier(&self) -> usize {
        self.spent.iter().map(|&(_, end)| end).max().unwrap_or(0)
    }

    /// Total number of spent bits.
    pub fn spent_bits(&self) -> usize {
        self.spent.iter().map(|&(s, e)| e - s).sum()
    }
}

/// XORs `message` with the key segment starting at bit `offset`.
fn xor_segment(message: &[u8], key: &BitVec, offset: usize) -> Result<Vec<u8>> {
    let need = message.len() * 8;
    let end = offset
        .checked_add(need)
        .filter(|&end| end <= key.len())
        .ok_or_else(|| {
            Error::Pad(format!(
                "need {need} key bits at offset {offset}, but the key holds only {}",
                key.len()
            ))
        })?;
    let segment = key.slice(offset, end).to_bytes_msb();
    Ok(message
        .iter()
        .zip(&segment)
        .map(|(m, k)| m ^ k)
        .collect())
}

/// Encrypts `message` with the next unspent pad segment, claiming it in
/// `ledger`. Returns the segment's bit offset and the ciphertext bytes.
///
/// An empty message consumes nothing. A message longer than the unspent
/// tail of the pad is refused outright — a one-time pad is never stretched.
pub fn encrypt(message: &[u8], key: &BitVec, ledger: &mut PadLedger) -> Result<(usize, Vec<u8>)> {
    let offset = ledger.frontier();
    let cipher = xor_segment(message, key, offset)?;
    ledger.claim(offset, message.len() * 8)?;
    Ok((offset, cipher))
}

/// Decrypts `cipher` against the key segment at bit `offset`.
///
/// Decryption never consumes key material: the segment was spent when the
/// ciphertext was made, and reading it again leaks nothing.
pub fn decrypt(cipher: &[u8], offset: usize, key: &BitVec) -> Result<Vec<u8>> {
    xor_segment(cipher, key, offset)
}

/// Writes a ciphertext file: text header (magic, `offset`, `bits`), blank
/// line, payload bytes.
pub fn write_cipher(out: &mut impl std::io::Write, offset: usize, payload: &[u8]) -> Result<()> {
    writeln!(out, "{CIPHER_MAGIC}")?;
    writeln!(out, "offset = {offset}")?;
    writeln!(out, "bits = {}", payload.len() * 8)?;
    writeln!(out)?;
    out.write_all(payload)?;
    Ok(())
}

/// Parses a ciphertext file, returning the key offset and payload.
pub fn read_cipher(data: &[u8]) -> Result<(usize, Vec<u8>)> {
    let (fields, body) = split_header(data, CIPHER_MAGIC, "ciphertext")?;
    let mut offset: Option<usize> = None;
    let mut bits: Option<usize> = None;
    for (key, value) in fields {
        let slot = match key.as_str() {
            "offset" => &mut offset,
            "bits" => &mut bits,
            other => {
                return Err(Error::Wire(format!(
                    "ciphertext: unknown header field {other:?}"
                )))
            }
        };
        if slot.is_some() {
            return Err(Error::Wire(format!("ciphertext: duplicate field {key:?}")));
        }
        *slot = Some(value.parse().map_err(|_| {
            Error::Wire(format!("ciphertext: unparseable field {key} = {value}"))
        })?);
    }
    let offset = offset.ok_or_else(|| Error::Wire("ciphertext: missing offset".into()))?;
    let bits = bits.ok_or_else(|| Error::Wire("ciphertext: missing bits".into()))?;
    if bits != body.len() * 8 {
        return Err(Error::Wire(format!(
            "ciphertext: header says {bits} bits but body holds {}",
            body.len() * 8
        )));
    }
    Ok((offset, body.to_vec()))
}

/// Encrypts the file at `message_path` with the pad in `key_path`,
/// writing the ciphertext to `out_path` and updating the pad's sidecar
/// ledger. Returns the bit offset of the consumed segment.
pub fn encrypt_file(message_path: &Path, key_path: &Path, out_path: &Path) -> Result<usize> {
    let message = std::fs::read(message_path)?;
    let key = read_key_path(key_path)?;
    let ledger_path = PadLedger::path_for(key_path);
    let mut ledger = PadLedger::load(&ledger_path)?;
    let (offset, cipher) = encrypt(&message, &key.bits, &mut ledger)?;
    if !message.is_empty() {
        ledger.save(&ledger_path)?;
    }
    let mut out = Vec::new();
    write_cipher(&mut out, offset, &cipher)?;
    std::fs::write(out_path, out)?;
    Ok(offset)
}

/// Decrypts the ciphertext at `cipher_path` with the pad in `key_path`,
/// writing the plaintext to `out_path`. The ledger is not consulted.
pub fn decrypt_file(cipher_path: &Path, key_path: &Path, out_path: &Path) -> Result<()> {
    let data = std::fs::read(cipher_path)?;
    let (offset, payload) = read_cipher(&data)?;
    let key = read_key_path(key_path)?;
    let message = decrypt(&payload, offset, &key.bits)?;
    std::fs::write(out_path, message)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyfile::write_key_path;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_key(seed: u64, bits: usize) -> BitVec {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        BitVec::random(&mut rng, bits)
    }

    #[test]
    fn ten_thousand_bit_message_roundtrips() {
        let key = random_key(1, 16_000);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let message: Vec<u8> = (0..1_250).map(|_| rng.gen()).collect();
        let mut ledger = PadLedger::new();
        let (offset, cipher) = encrypt(&message, &key, &mut ledger).unwrap();
        assert_eq!(offset, 0);
        assert_ne!(cipher, message);
        assert_eq!(decrypt(&cipher, offset, &key).unwrap(), message);
        assert_eq!(ledger.spent_bits(), 10_000);
    }

    #[test]
    fn sequential_encrypts_use_disjoint_ranges() {
        let key = random_key(3, 4_096);
        let mut ledger = PadLedger::new();
        let (o1, _) = encrypt(&[0xAA; 100], &key, &mut ledger).unwrap();
        let (o2, _) = encrypt(&[0x55; 50], &key, &mut ledger).unwrap();
        assert_eq!((o1, o2), (0, 800));
        assert_eq!(ledger.spent_bits(), 1_200);
        assert_eq!(ledger.frontier(), 1_200);
    }

    #[test]
    fn insufficient_key_is_refused() {
        let key = random_key(4, 79);
        let mut ledger = PadLedger::new();
        let err = encrypt(&[0u8; 10], &key, &mut ledger).unwrap_err();
        assert!(matches!(err, Error::Pad(_)), "{err}");
        assert_eq!(ledger.spent_bits(), 0, "a refused encryption consumes nothing");
        // 72 bits still fit.
        encrypt(&[0u8; 9], &key, &mut ledger).unwrap();
        // The 7 remaining bits cannot carry another byte.
        let err = encrypt(&[0u8; 1], &key, &mut ledger).unwrap_err();
        assert!(matches!(err, Error::Pad(_)), "{err}");
    }

    #[test]
    fn exact_fit_spends_the_whole_pad() {
        let key = random_key(5, 800);
        let mut ledger = PadLedger::new();
        let message = [7u8; 100];
        let (offset, cipher) = encrypt(&message, &key, &mut ledger).unwrap();
        assert_eq!(ledger.frontier(), key.len());
        assert_eq!(decrypt(&cipher, offset, &key).unwrap(), message);
        let err = encrypt(&[0u8; 1], &key, &mut ledger).unwrap_err();
        assert!(matches!(err, Error::Pad(_)), "{err}");
    }

    #[test]
    fn empty_message_consumes_nothing() {
        let key = random_key(6, 64);
        let mut ledger = PadLedger::new();
        let (offset, cipher) = encrypt(&[], &key, &mut ledger).unwrap();
        assert_eq!(offset, 0);
        assert!(cipher.is_empty());
        assert_eq!(ledger.spent_bits(), 0);
        assert!(decrypt(&cipher, offset, &key).unwrap().is_empty());
        // The pad is still fully available.
        encrypt(&[1u8; 8], &key, &mut ledger).unwrap();
    }

    #[test]
    fn claim_refuses_any_overlap() {
        let mut ledger = PadLedger::new();
        ledger.claim(0, 8).unwrap();
        ledger.claim(16, 8).unwrap();
        for (start, len) in [(0, 8), (4, 8), (7, 1), (12, 8), (0, 100)] {
            let err = ledger.claim(start, len).unwrap_err();
            assert!(matches!(err, Error::Pad(_)), "claim({start}, {len}): {err}");
        }
        // Half-open ranges make adjacency legal.
        ledger.claim(8, 8).unwrap();
        assert_eq!(ledger.spent_bits(), 24);
        assert_eq!(ledger.frontier(), 24);
    }

    #[test]
    fn decrypt_never_consumes() {
        let key = random_key(7, 2_048);
        let mut ledger = PadLedger::new();
        let message = b"the pad is spent by writers, not readers";
        let (offset, cipher) = encrypt(message, &key, &mut ledger).unwrap();
        let spent_before = ledger.spent_bits();
        for _ in 0..3 {
            assert_eq!(decrypt(&cipher, offset, &key).unwrap(), message);
        }
        assert_eq!(ledger.spent_bits(), spent_before);
        let (o2, _) = encrypt(b"next", &key, &mut ledger).unwrap();
        assert_eq!(o2, message.len() * 8, "reads must not shift the frontier");
    }

    #[test]
    fn ledger_text_roundtrips_and_rejects_corruption() {
        let mut ledger = PadLedger::new();
        ledger.claim(800, 400).unwrap();
        ledger.claim(0, 800).unwrap();
        let text = ledger.to_text();
        assert_eq!(PadLedger::parse(&text).unwrap(), ledger);
        assert!(text.starts_with(LEDGER_MAGIC));

        for corrupt in [
            "wrong magic\n0..8\n",
            "fsqkd pad ledger v1\n8..0\n",
            "fsqkd pad ledger v1\n0..8\n4..12\n",
            "fsqkd pad ledger v1\nnot a range\n",
        ] {
            let err = PadLedger::parse(corrupt).unwrap_err();
            assert!(matches!(err, Error::Pad(_)), "{corrupt:?}: {err}");
        }
    }

    #[test]
    fn cipher_file_roundtrips_and_rejects_malformed_input() {
        let mut buf = Vec::new();
        write_cipher(&mut buf, 1_234, b"payload").unwrap();
        let (offset, payload) = read_cipher(&buf).unwrap();
        assert_eq!(offset, 1_234);
        assert_eq!(payload, b"payload");

        for corrupt in [
            &b"fsqkd otp v1\nbits = 8\n\nX"[..],            // missing offset
            &b"fsqkd otp v1\noffset = 0\nbits = 16\n\nX"[..], // bits/body mismatch
            &b"fsqkd otp v1\noffset = 0\nbits = 8\nwho = me\n\nX"[..], // unknown field
        ] {
            let err = read_cipher(corrupt).unwrap_err();
            assert!(matches!(err, Error::Wire(_)), "{err}");
        }
    }

    #[test]
    fn file_level_flow_persists_the_ledger() {
        let dir = tempfile::tempdir().unwrap();
        let key_path = dir.path().join("pad.key");
        let msg_path = dir.path().join("message.bin");
        let cipher_path = dir.path().join("message.otp");
        let plain_path = dir.path().join("message.out");

        write_key_path(&key_path, &random_key(8, 4_096), &[]).unwrap();
        std::fs::write(&msg_path, b"carried across invocations").unwrap();

        let o1 = encrypt_file(&msg_path, &key_path, &cipher_path).unwrap();
        assert_eq!(o1, 0);
        decrypt_file(&cipher_path, &key_path, &plain_path).unwrap();
        assert_eq!(
            std::fs::read(&plain_path).unwrap(),
            b"carried across invocations"
        );

        // A second process-level encryption resumes after the frontier
        // recorded in the sidecar, never overlapping the first segment.
        let cipher2 = dir.path().join("second.otp");
        let o2 = encrypt_file(&msg_path, &key_path, &cipher2).unwrap();
        assert_eq!(o2, 26 * 8);
        let ledger = PadLedger::load(&PadLedger::path_for(&key_path)).unwrap();
        assert_eq!(ledger.spent_bits(), 2 * 26 * 8);
    }

    #[test]
    fn empty_file_encryption_creates_no_ledger() {
        let dir = tempfile::tempdir().unwrap();
        let key_path = dir.path().join("pad.key");
        let msg_path = dir.path().join("empty.bin");
        let cipher_path = dir.path().join("empty.otp");
        write_key_path(&key_path, &random_key(9, 64), &[]).unwrap();
        std::fs::write(&msg_path, b"").unwrap();
        encrypt_file(&msg_path, &key_path, &cipher_path).unwrap();
        assert!(!PadLedger::path_for(&key_path).exists());
        let out_path = dir.path().join("empty.out");
        decrypt_file(&cipher_path, &key_path, &out_path).unwrap();
        assert!(std::fs::read(&out_path).unwrap().is_empty());
    }

    proptest! {
        /// Across any interleaving of encryptions and decryptions, no key
        /// bit is ever consumed twice: all consumed ranges are pairwise
        /// disjoint, the ledger's accounting matches the successful
        /// encryptions exactly, and every ciphertext still decrypts.
        #[test]
        fn interleaved_calls_never_reuse_key_bits(
            ops in proptest::collection::vec((any::<bool>(), 0usize..48), 1..40)
        ) {
            let key = random_key(10, 8_192);
            let mut ledger = PadLedger::new();
            let mut produced: Vec<(usize, Vec<u8>, Vec<u8>)> = Vec::new();
            let mut consumed: Vec<(usize, usize)> = Vec::new();
            let mut next_byte = 0u8;

            for (is_encrypt, len) in ops {
                if is_encrypt || produced.is_empty() {
                    let message: Vec<u8> =
                        (0..len).map(|_| { next_byte = next_byte.wrapping_add(1); next_byte }).collect();
                    match encrypt(&message, &key, &mut ledger) {
                        Ok((offset, cipher)) => {
                            consumed.push((offset, offset + 8 * message.len()));
                            produced.push((offset, cipher, message));
                        }
                        Err(Error::Pad(_)) => {
                            // Only legal when the tail really is too short.
                            prop_assert!(ledger.frontier() + 8 * len > key.len());
                        }
                        Err(other) => return Err(TestCaseError::fail(other.to_string())),
                    }
                } else {
                    let (offset, cipher, message) = &produced[len % produced.len()];
                    let plain = decrypt(cipher, *offset, &key).unwrap();
                    prop_assert_eq!(&plain, message);
                }
            }

            for (i, a) in consumed.iter().enumerate() {
                for b in &consumed[i + 1..] {
                    prop_assert!(a.1 <= b.0 || b.1 <= a.0,
                        "ranges {:?} and {:?} overlap", a, b);
                }
            }
            let total: usize = consumed.iter().map(|(s, e)| e - s).sum();
            prop_assert_eq!(ledger.spent_bits(), total);
        }
    }
}
