//! Binary trajectory snapshots.
//!
//! Layout, all little-endian:
//!
//! | offset | type    | field                    |
//! |--------|---------|--------------------------|
//! | 0      | [u8; 8] | magic `HKSNAP01`         |
//! | 8      | u64     | units                    |
//! | 16     | u64     | items                    |
//! | 24     | u64     | frames                   |
//! | 32     | f64     | dt                       |
//! | 40     | u64     | stride (steps per frame) |
//! | 48     | u64     | seed                     |
//! | 56     | u32     | topology kind            |
//! | 60     | u32     | topology aux             |
//! | 64     | u32     | CRC32 of bytes 0..64     |
//! | 68     | f64 ... | frames x units x items   |

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::topology::TopologyTag;

pub const MAGIC: &[u8; 8] = b"HKSNAP01";
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub units: usize,
    pub items: usize,
    pub dt: f64,
    pub stride: u64,
    pub seed: u64,
    pub topology: TopologyTag,
    /// Frame-major, then unit-major, then item-major.
    pub data: Vec<f64>,
}

impl Snapshot {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let cfg = &traj.meta.config;
        Snapshot {
            units: traj.recorded_units(),
            items: traj.items,
            dt: cfg.dt,
            stride: cfg.record_stride,
            seed: cfg.seed,
            topology: traj.meta.topology,
            data: traj.data.clone(),
        }
    }

    pub fn frame_len(&self) -> usize {
        self.units * self.items
    }

    pub fn frames(&self) -> usize {
        self.data.len().checked_div(self.frame_len()).unwrap_or(0)
    }

    pub fn frame(&self, j: usize) -> &[f64] {
        let len = self.frame_len();
        &self.data[j * len..(j + 1) * len]
    }

    fn header(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        let (kind, aux) = self.topology.code();
        h[0..8].copy_from_slice(MAGIC);
        h[8..16].copy_from_slice(&(self.units as u64).to_le_bytes());
        h[16..24].copy_from_slice(&(self.items as u64).to_le_bytes());
        h[24..32].copy_from_slice(&(self.frames() as u64).to_le_bytes());
        h[32..40].copy_from_slice(&self.dt.to_le_bytes());
        h[40..48].copy_from_slice(&self.stride.to_le_bytes());
        h[48..56].copy_from_slice(&self.seed.to_le_bytes());
        h[56..60].copy_from_slice(&kind.to_le_bytes());
        h[60..64].copy_from_slice(&aux.to_le_bytes());
        h
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        if self.data.len() != self.frames() * self.frame_len() {
            return Err(Error::Format("payload is not a whole number of frames".into()));
        }
        let header = self.header();
        out.write_all(&header)?;
        out.write_all(&crc32fast::hash(&header).to_le_bytes())?;
        let mut payload = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&payload)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        input
            .read_exact(&mut header)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &header[0..8] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut crc = [0u8; 4];
        input
            .read_exact(&mut crc)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if u32::from_le_bytes(crc) != crc32fast::hash(&header) {
            return Err(Error::Format("header checksum mismatch".into()));
        }
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let (units, items, frames) = (u64_at(8), u64_at(16), u64_at(24));
        let topology = TopologyTag::from_code(u32_at(56), u32_at(60))
            .ok_or_else(|| Error::Format("unknown topology kind".into()))?;
        let count = units
            .checked_mul(items)
            .and_then(|n| n.checked_mul(frames))
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        if payload.len() != count * 8 {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header implies {}",
                payload.len(),
                count * 8
            )));
        }
        let data = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Snapshot {
            units: units as usize,
            items: items as usize,
            dt: f64::from_bits(u64_at(32)),
            stride: u64_at(40),
            seed: u64_at(48),
            topology,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Snapshot {
        Snapshot {
            units: 2,
            items: 3,
            dt: 0.01,
            stride: 10,
            seed: 42,
            topology: TopologyTag::Grid { side: 7 },
            data: (0..24).map(|i| i as f64 * 0.125 - 1.0).collect(),
        }
    }

    #[test]
    fn layout() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(bytes.len(), 68 + 24 * 8);
        assert_eq!(&bytes[..8], b"HKSNAP01");
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[60..64].try_into().unwrap()), 7);
        assert_eq!(f64::from_le_bytes(bytes[68..76].try_into().unwrap()), -1.0);
    }

    #[test]
    fn corrupted_header_rejected() {
        let bytes = sample().to_bytes().unwrap();
        for pos in [0, 9, 33, 57, 65] {
            let mut b = bytes.clone();
            b[pos] ^= 0x10;
            assert!(matches!(Snapshot::read(&b[..]), Err(Error::Format(_))), "byte {pos}");
        }
        assert!(Snapshot::read(&bytes[..bytes.len() - 1]).is_err());
        assert!(Snapshot::read(&bytes[..30]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            units in 1usize..5,
            items in prop::sample::select(vec![3usize, 9]),
            frames in 0usize..6,
            bits in prop::collection::vec(any::<u64>(), 0..270),
            seed in any::<u64>(),
        ) {
            let n = units * items * frames;
            let data: Vec<f64> = (0..n).map(|i| f64::from_bits(bits.get(i).copied().unwrap_or(i as u64))).collect();
            let snap = Snapshot { units, items, dt: 0.005, stride: 3, seed, topology: TopologyTag::Chain, data };
            let back = Snapshot::read(&snap.to_bytes().unwrap()[..]).unwrap();
            prop_assert_eq!(back.frames(), frames);
            prop_assert_eq!(back.seed, seed);
            let a: Vec<u64> = snap.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
