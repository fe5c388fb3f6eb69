//! Binary checkpoint format for dense networks.
//!
//! Layout (little-endian): magic `DVAE`, format version `u32`, layer count
//! `u32`; then per layer an activation tag `u8`, `rows: u32`, `cols: u32`,
//! the row-major `f64` weight matrix, and `rows` bias values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{Activation, DenseNetwork, Layer};

pub const MAGIC: &[u8; 4] = b"DVAE";
pub const FORMAT_VERSION: u32 = 1;

/// Writes a flat layer list; composite models are stored as concatenated
/// layer stacks.
pub fn write_layers<W: Write>(mut w: W, layers: &[&Layer]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(layers.len() as u32)?;
    for layer in layers {
        w.write_u8(layer.activation.tag())?;
        w.write_u32::<LittleEndian>(layer.output_dim() as u32)?;
        w.write_u32::<LittleEndian>(layer.input_dim() as u32)?;
        for &v in layer.weights.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
        for &v in layer.bias.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_layers<R: Read>(mut r: R) -> Result<Vec<Layer>> {
    let bad = |msg: String| Error::Checkpoint(msg);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| bad(format!("truncated header: {e}")))?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic bytes {magic:?}")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| bad(format!("truncated version: {e}")))?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let count = r
        .read_u32::<LittleEndian>()
        .map_err(|e| bad(format!("truncated layer count: {e}")))?;
    let mut layers = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let tag = r
            .read_u8()
            .map_err(|e| bad(format!("layer {idx}: truncated activation tag: {e}")))?;
        let activation = Activation::from_tag(tag)?;
        let rows = r
            .read_u32::<LittleEndian>()
            .map_err(|e| bad(format!("layer {idx}: truncated rows: {e}")))? as usize;
        let cols = r
            .read_u32::<LittleEndian>()
            .map_err(|e| bad(format!("layer {idx}: truncated cols: {e}")))? as usize;
        if rows == 0 || cols == 0 {
            return Err(bad(format!("layer {idx}: zero dimension {rows}x{cols}")));
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(
                r.read_f64::<LittleEndian>()
                    .map_err(|e| bad(format!("layer {idx}: truncated weights: {e}")))?,
            );
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(
                r.read_f64::<LittleEndian>()
                    .map_err(|e| bad(format!("layer {idx}: truncated bias: {e}")))?,
            );
        }
        let weights = Array2::from_shape_vec((rows, cols), weights).expect("sized above");
        layers.push(Layer::new(weights, Array1::from_vec(bias), activation)?);
    }
    Ok(layers)
}

pub fn write_network<P: AsRef<Path>>(path: P, net: &DenseNetwork) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let layers: Vec<&Layer> = net.layers().iter().collect();
    write_layers(BufWriter::new(file), &layers)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_network<P: AsRef<Path>>(path: P) -> Result<DenseNetwork> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    DenseNetwork::new(read_layers(BufReader::new(file))?)
}
