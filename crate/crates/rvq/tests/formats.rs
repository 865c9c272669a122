mod common;

use common::{fixture_dir, goldens};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvq::format::{quantizer_from_bytes, DumpReader, PackedIndexBlock};
use rvq::FormatError;

#[test]
fn golden_fixtures_load_and_are_reproduced_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    for g in goldens() {
        let golden = fixture_dir().join(g.name);
        (g.load)(&golden).unwrap_or_else(|e| panic!("{}: {e}", g.name));
        let fresh = dir.path().join(g.name);
        (g.write)(&fresh).unwrap();
        assert_eq!(std::fs::read(&fresh).unwrap(), std::fs::read(&golden).unwrap(), "{} drifted", g.name);
    }
}

#[test]
fn single_byte_corruption_is_always_an_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for g in goldens() {
        let bytes = std::fs::read(fixture_dir().join(g.name)).unwrap();
        let path = dir.path().join(g.name);
        for _ in 0..100 {
            let mut bad = bytes.clone();
            let at = rng.random_range(0..bad.len());
            bad[at] ^= rng.random_range(1..=255u8);
            std::fs::write(&path, &bad).unwrap();
            match (g.load)(&path) {
                Err(e) => assert!(e.is_integrity(), "{}: byte {at}: {e:?}", g.name),
                Ok(()) => panic!("{}: corruption at byte {at} was accepted", g.name),
            }
        }
    }
}

#[test]
fn truncation_and_extension_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for g in goldens() {
        let bytes = std::fs::read(fixture_dir().join(g.name)).unwrap();
        let path = dir.path().join(g.name);
        for len in [0, 3, 10, bytes.len() - 1] {
            std::fs::write(&path, &bytes[..len]).unwrap();
            assert!((g.load)(&path).unwrap_err().is_integrity(), "{} cut to {len}", g.name);
        }
        let mut longer = bytes.clone();
        longer.push(0);
        std::fs::write(&path, &longer).unwrap();
        assert!((g.load)(&path).unwrap_err().is_integrity(), "{} extended", g.name);
    }
}

fn bump_version(bytes: &mut [u8]) {
    bytes[4] += 1;
    let n = bytes.len() - 4;
    let crc = crc32(&bytes[..n]);
    bytes[n..].copy_from_slice(&crc.to_le_bytes());
}

fn crc32(bytes: &[u8]) -> u32 {
    // bitwise reference CRC-32 (IEEE, reflected), independent of crc32fast
    let mut crc = 0xffff_ffffu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 == 1 { (crc >> 1) ^ 0xedb8_8320 } else { crc >> 1 };
        }
    }
    !crc
}

#[test]
fn trailing_checksum_is_standard_crc32_of_everything_before_it() {
    assert_eq!(crc32(b"123456789"), 0xcbf4_3926);
    for g in goldens() {
        let bytes = std::fs::read(fixture_dir().join(g.name)).unwrap();
        let n = bytes.len() - 4;
        assert_eq!(u32::from_le_bytes(bytes[n..].try_into().unwrap()), crc32(&bytes[..n]), "{}", g.name);
    }
}

#[test]
fn newer_versions_are_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    for g in goldens() {
        let mut bytes = std::fs::read(fixture_dir().join(g.name)).unwrap();
        bump_version(&mut bytes);
        let path = dir.path().join(g.name);
        std::fs::write(&path, &bytes).unwrap();
        let err = (g.load)(&path).unwrap_err();
        assert!(matches!(err, FormatError::Version { found: 2, expected: 1, .. }), "{}: {err:?}", g.name);
        let msg = err.to_string();
        assert!(msg.contains("version 2") && msg.contains("version 1"), "{msg}");
        assert!(!err.is_integrity());
    }
}

#[test]
fn magic_of_another_format_is_rejected() {
    let original = std::fs::read(fixture_dir().join("quantizer.rvqc")).unwrap();
    assert!(matches!(PackedIndexBlock::from_bytes(&original), Err(FormatError::Magic { .. })));
    let mut bytes = original.clone();
    bytes[..4].copy_from_slice(b"RVQI");
    let n = bytes.len() - 4;
    let crc = crc32(&bytes[..n]);
    bytes[n..].copy_from_slice(&crc.to_le_bytes());
    assert!(matches!(quantizer_from_bytes(&bytes), Err(FormatError::Magic { .. })));
}

#[test]
fn documented_header_offsets() {
    let q = std::fs::read(fixture_dir().join("quantizer.rvqc")).unwrap();
    assert_eq!(&q[..4], b"RVQC");
    assert_eq!(u16::from_le_bytes([q[4], q[5]]), 1);
    let fields: Vec<u32> = q[6..22].chunks(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
    assert_eq!(fields, [8, 4, 2, 5]);
    assert_eq!(q[22], 1);
    assert_eq!(q.len(), 23 + 4 * 2 * 5 * 4 + 4);
    // first f32 is stage 0, code 0, channel 0
    assert_eq!(f32::from_le_bytes(q[23..27].try_into().unwrap()), -5.0 / 4.0);

    let reader = DumpReader::open(fixture_dir().join("activations.rvqa")).unwrap();
    assert_eq!((reader.header().dim, reader.header().count), (8, 6));

    let i = std::fs::read(fixture_dir().join("indices.rvqi")).unwrap();
    assert_eq!(&i[..4], b"RVQI");
    assert_eq!((i[22], i[23]), (1, 0));
    assert_eq!(u64::from_le_bytes(i[24..32].try_into().unwrap()), 6);
    // 4 indices of 3 bits: 2 bytes per record, plus the f16 scale
    assert_eq!(i.len(), 32 + 6 * (2 + 2) + 4);
}
