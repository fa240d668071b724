//! Binary checkpoint of a trained network: spec, merged weights, final
//! mask, and the run seed.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ISINGDRP" | version u32 | seed u64
//! layer count u32 | layer sizes u32...
//! dropout tag u8 (0 none, 1 random, 2 ising) | p f64
//! input_dropout u8 | inference_masking u8
//! per weight layer: rows u32, cols u32, weights f64..., biases f64...
//! per unit layer:   len u32, keep bits u8...
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::DenseMatrix;
use crate::mlp::{DropoutMode, MaskSet, NetworkSpec, WeightBank};
use crate::ising::{StateVector, UnitIndexMap};

const MAGIC: &[u8; 8] = b"ISINGDRP";
const VERSION: u32 = 1;

/// A loaded checkpoint. The bank's working copy is initialized from the
/// stored merged weights.
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub bank: WeightBank,
    pub mask: MaskSet,
    pub seed: u64,
}

pub fn save_checkpoint(
    path: &Path,
    spec: &NetworkSpec,
    bank: &WeightBank,
    mask: &MaskSet,
    seed: u64,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&seed.to_le_bytes()).map_err(io)?;

    w.write_all(&(spec.layer_sizes.len() as u32).to_le_bytes())
        .map_err(io)?;
    for &s in &spec.layer_sizes {
        w.write_all(&(s as u32).to_le_bytes()).map_err(io)?;
    }
    let (tag, p) = match spec.dropout {
        DropoutMode::None => (0u8, 0.0),
        DropoutMode::Random { p } => (1, p),
        DropoutMode::Ising => (2, 0.0),
    };
    w.write_all(&[tag]).map_err(io)?;
    w.write_all(&p.to_le_bytes()).map_err(io)?;
    w.write_all(&[spec.input_dropout as u8, spec.inference_masking as u8])
        .map_err(io)?;

    for l in 0..bank.num_weight_layers() {
        let m = bank.merged_weights(l);
        w.write_all(&(m.rows() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(m.cols() as u32).to_le_bytes()).map_err(io)?;
        for &v in m.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for &v in bank.merged_biases(l) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }

    let map = UnitIndexMap::from_network(spec);
    let state = mask.to_state(&map)?;
    for l in 0..map.num_layers() {
        let size = map.layer_size(l);
        w.write_all(&(size as u32).to_le_bytes()).map_err(io)?;
        let bits: Vec<u8> = (0..size)
            .map(|i| state.is_kept(map.global(l, i)) as u8)
            .collect();
        w.write_all(&bits).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad checkpoint magic"));
    }
    let version = read_u32(&mut r, path)?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let seed = read_u64(&mut r, path)?;

    let n_layers = read_u32(&mut r, path)? as usize;
    if !(3..=64).contains(&n_layers) {
        return Err(Error::format(path, format!("implausible layer count {n_layers}")));
    }
    let mut layer_sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layer_sizes.push(read_u32(&mut r, path)? as usize);
    }
    let mut tag = [0u8; 1];
    read_exact(&mut r, &mut tag, path)?;
    let p = read_f64(&mut r, path)?;
    let dropout = match tag[0] {
        0 => DropoutMode::None,
        1 => DropoutMode::Random { p },
        2 => DropoutMode::Ising,
        t => return Err(Error::format(path, format!("unknown dropout tag {t}"))),
    };
    let mut flags = [0u8; 2];
    read_exact(&mut r, &mut flags, path)?;
    let spec = NetworkSpec::new(layer_sizes.clone(), dropout, flags[0] != 0, flags[1] != 0)?;

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..spec.num_weight_layers() {
        let rows = read_u32(&mut r, path)? as usize;
        let cols = read_u32(&mut r, path)? as usize;
        if rows != layer_sizes[l] || cols != layer_sizes[l + 1] {
            return Err(Error::format(path, format!("layer {l} shape mismatch")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(read_f64(&mut r, path)?);
        }
        weights.push(DenseMatrix::from_vec(rows, cols, data)?);
        let mut b = Vec::with_capacity(cols);
        for _ in 0..cols {
            b.push(read_f64(&mut r, path)?);
        }
        biases.push(b);
    }
    let bank = WeightBank::from_merged(layer_sizes, weights, biases)?;

    let map = UnitIndexMap::from_network(&spec);
    let mut state = StateVector::all_ones(map.unit_count());
    for l in 0..map.num_layers() {
        let size = read_u32(&mut r, path)? as usize;
        if size != map.layer_size(l) {
            return Err(Error::format(path, format!("mask layer {l} size mismatch")));
        }
        let mut bits = vec![0u8; size];
        read_exact(&mut r, &mut bits, path)?;
        for (i, &bit) in bits.iter().enumerate() {
            if bit > 1 {
                return Err(Error::format(path, "mask bit out of range"));
            }
            state.set(map.global(l, i), bit == 1);
        }
    }
    let mask = MaskSet::from_state(&state, &map)?;

    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => {}
        Ok(_) => return Err(Error::format(path, "trailing bytes")),
        Err(e) => return Err(Error::io(path, e)),
    }
    Ok(Checkpoint {
        spec,
        bank,
        mask,
        seed,
    })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format(path, "truncated checkpoint"))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, path: &Path) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(f64::from_le_bytes(b))
}
