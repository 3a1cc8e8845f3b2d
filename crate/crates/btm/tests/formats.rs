use btm::format::{
    decode_surrogate, decode_trajectory, encode_surrogate, encode_trajectory, read_trajectory, to_f32_precision,
    write_surrogate, write_trajectory, DecodeError,
};
use btm::BtmError;
use btm_core::bezier::BezierPath;
use btm_core::ParamVector;
use proptest::prelude::*;

fn pv(v: &[f64]) -> ParamVector {
    ParamVector(v.to_vec())
}

#[test]
fn trajectory_header_layout() {
    let bytes = encode_trajectory(&[pv(&[1.0, 2.0, 3.0]), pv(&[4.0, 5.0, 6.0])], &[0.7, 0.5]);
    assert_eq!(&bytes[..4], b"BTMT");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
    assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 1.0);
    // 2 x 3 parameters and 2 losses, then the checksum.
    assert_eq!(bytes.len(), 20 + 4 * 8 + 4);
    let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
}

#[test]
fn surrogate_header_layout() {
    let path = BezierPath::new(pv(&[1.0, 2.0]), pv(&[3.0, 4.0]), pv(&[5.0, 6.0])).unwrap();
    let bytes = encode_surrogate(&path);
    assert_eq!(&bytes[..4], b"BTMB");
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
    assert_eq!(bytes.len(), 16 + 4 * 6 + 4);
    assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 3.0);
    assert_eq!(decode_surrogate(&bytes).unwrap(), path);
}

#[test]
fn corrupt_containers_are_rejected() {
    let good = encode_trajectory(&[pv(&[1.0, 2.0]), pv(&[3.0, 4.0])], &[1.0, 0.5]);

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(decode_trajectory(&magic), Err(DecodeError::BadMagic(_))));

    let mut version = good.clone();
    version[4] = 9;
    assert_eq!(decode_trajectory(&version), Err(DecodeError::UnsupportedVersion(9)));

    assert!(matches!(
        decode_trajectory(&good[..good.len() - 3]),
        Err(DecodeError::Truncated { .. })
    ));
    assert!(matches!(decode_trajectory(&good[..6]), Err(DecodeError::Truncated { .. })));

    let mut flipped = good.clone();
    flipped[22] ^= 0x40;
    assert!(matches!(decode_trajectory(&flipped), Err(DecodeError::Checksum { .. })));

    // A surrogate is not a trajectory.
    let s = encode_surrogate(&BezierPath::linear(pv(&[1.0]), pv(&[2.0])).unwrap());
    assert!(matches!(decode_trajectory(&s), Err(DecodeError::BadMagic(_))));
}

#[test]
fn huge_declared_sizes_do_not_allocate() {
    let mut bytes = encode_trajectory(&[pv(&[1.0])], &[1.0]);
    bytes[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(decode_trajectory(&bytes).is_err());
}

#[test]
fn files_round_trip_and_missing_files_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nested/expert.btmt");
    let cps = vec![pv(&[0.1, -0.2]), pv(&[0.3, 0.4])];
    write_trajectory(&p, &cps, &[0.9, 0.8]).unwrap();
    let back = read_trajectory(&p).unwrap();
    assert_eq!(back.checkpoints[1].0, to_f32_precision(&cps[1]));
    assert_eq!(back.train_losses, to_f32_precision(&[0.9, 0.8]));

    let s = dir.path().join("s.btmb");
    write_surrogate(&s, &BezierPath::linear(pv(&[1.0]), pv(&[3.0])).unwrap()).unwrap();
    assert!(matches!(read_trajectory(&s), Err(BtmError::Format { .. })));

    let err = read_trajectory(&dir.path().join("absent.btmt")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("absent.btmt"));
}

proptest! {
    #[test]
    fn trajectory_round_trip(n in 1usize..20, k in 1usize..6, seed in any::<u64>()) {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from((x >> 40) as f32 / (1u64 << 20) as f32 - 8.0)
        };
        let cps: Vec<ParamVector> = (0..k).map(|_| ParamVector((0..n).map(|_| next()).collect())).collect();
        let losses: Vec<f64> = (0..k).map(|_| next().abs()).collect();
        let decoded = decode_trajectory(&encode_trajectory(&cps, &losses)).unwrap();
        prop_assert_eq!(decoded.checkpoints, cps);
        prop_assert_eq!(decoded.train_losses, losses);
    }

    #[test]
    fn single_byte_corruption_is_detected(pos in 0usize..40, bit in 0u8..8) {
        let good = encode_trajectory(&[pv(&[1.0, 2.0, 3.0]), pv(&[4.0, 5.0, 6.0])], &[0.7, 0.5]);
        let mut bad = good.clone();
        let pos = pos % good.len();
        bad[pos] ^= 1 << bit;
        prop_assert!(decode_trajectory(&bad).is_err());
    }
}
