//! Little-endian binary container shared by noise fields and solution snapshots.
//!
//! Layout: 8-byte magic, `u32` version, `u32` kind, `u32` d, `d × f64` center,
//! `f64` L, `f64` h, `f64` ε, `u64` seed, `u64` k_max, `f64` t, `u64` count,
//! then `count × f64` payload.

use std::io::{Read, Write};

use crate::error::{PamError, Result};
use crate::lattice::LatticeBox;

pub const MAGIC: [u8; 8] = *b"PAMLAB\0\x01";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerKind {
    NoiseCoefficients = 1,
    GridValues = 2,
    PathTrace = 3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContainerHeader {
    pub kind: ContainerKind,
    pub grid: LatticeBox,
    pub epsilon: f64,
    pub seed: u64,
    pub k_max: u64,
    pub time: f64,
}

pub fn write_container<W: Write>(mut w: W, header: &ContainerHeader, payload: &[f64]) -> Result<()> {
    let g = &header.grid;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.kind as u32).to_le_bytes())?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    for c in g.center() {
        w.write_all(&c.to_le_bytes())?;
    }
    for v in [g.side(), g.spacing(), header.epsilon] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&header.seed.to_le_bytes())?;
    w.write_all(&header.k_max.to_le_bytes())?;
    w.write_all(&header.time.to_le_bytes())?;
    w.write_all(&(payload.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_container<R: Read>(mut r: R) -> Result<(ContainerHeader, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(PamError::Format("bad container magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(PamError::Format(format!("unsupported container version {version}")));
    }
    let kind = match read_u32(&mut r)? {
        1 => ContainerKind::NoiseCoefficients,
        2 => ContainerKind::GridValues,
        3 => ContainerKind::PathTrace,
        k => return Err(PamError::Format(format!("unknown container kind {k}"))),
    };
    let d = read_u32(&mut r)? as usize;
    if !(2..=3).contains(&d) {
        return Err(PamError::Format(format!("container dimension {d}")));
    }
    let center = (0..d).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let side = read_f64(&mut r)?;
    let spacing = read_f64(&mut r)?;
    let epsilon = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;
    let k_max = read_u64(&mut r)?;
    let time = read_f64(&mut r)?;
    let count = read_u64(&mut r)? as usize;
    let grid = LatticeBox::new(&center, side, spacing)?;
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    let payload = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((
        ContainerHeader {
            kind,
            grid,
            epsilon,
            seed,
            k_max,
            time,
        },
        payload,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_box;

    #[test]
    fn round_trip() {
        let header = ContainerHeader {
            kind: ContainerKind::GridValues,
            grid: make_box(&[1.0, -2.0], 4.0, 0.5, 2).unwrap(),
            epsilon: 0.5,
            seed: 99,
            k_max: 7,
            time: 1.25,
        };
        let payload: Vec<f64> = (0..64).map(|i| i as f64 * 0.1 - 3.0).collect();
        let mut buf = Vec::new();
        write_container(&mut buf, &header, &payload).unwrap();
        let (h2, p2) = read_container(buf.as_slice()).unwrap();
        assert_eq!(h2, header);
        assert_eq!(p2, payload);
        buf[0] = b'X';
        assert!(read_container(buf.as_slice()).is_err());
    }
}
