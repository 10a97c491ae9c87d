//! PCEB embedding tensors: magic "PCEB", rows u32, cols u32, then
//! `rows * cols` little-endian f64 in row-major order.

use std::io::{Read, Write};

use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::{s, Array2};

use super::{EmbeddingBatch, Negatives};
use crate::binio::CountingReader;
use crate::error::{Error, Result};

pub const PCEB_MAGIC: [u8; 4] = *b"PCEB";

pub fn write_pceb<W: Write>(tensor: &Array2<f64>, sink: &mut W) -> Result<()> {
    let (rows, cols) = tensor.dim();
    let dim = |n: usize| u32::try_from(n).map_err(|_| Error::Shape(format!("dimension {n} exceeds u32")));
    sink.write_all(&PCEB_MAGIC)?;
    sink.write_u32::<LittleEndian>(dim(rows)?)?;
    sink.write_u32::<LittleEndian>(dim(cols)?)?;
    for x in tensor.iter() {
        sink.write_f64::<LittleEndian>(*x)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_pceb<R: Read>(source: R) -> Result<Array2<f64>> {
    let mut r = CountingReader::new(source);
    let mut magic = [0u8; 4];
    r.exact(&mut magic, "magic")?;
    if magic != PCEB_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:02x?}")));
    }
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format(4, "tensor size overflows"))?;
    let mut data = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        data.push(r.f64("element")?);
    }
    if !r.at_eof()? {
        return Err(Error::format(r.pos, "trailing bytes after tensor"));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

/// Interpret a `(2M + K - 1) x d` tensor as `M` queries, then `M` positives,
/// then a shared bank of `K - 1` negatives.
pub fn split_embeddings(tensor: &Array2<f64>, k: usize, temperature: f64) -> Result<EmbeddingBatch> {
    let rows = tensor.nrows();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("K must be at least 2, got {k}")));
    }
    let negs = k - 1;
    if rows < negs || (rows - negs) % 2 != 0 {
        return Err(Error::Shape(format!(
            "{rows} rows cannot hold 2M queries/positives plus {negs} negatives"
        )));
    }
    let m = (rows - negs) / 2;
    EmbeddingBatch::new(
        tensor.slice(s![..m, ..]).to_owned(),
        tensor.slice(s![m..2 * m, ..]).to_owned(),
        Negatives::Shared(tensor.slice(s![2 * m.., ..]).to_owned()),
        temperature,
    )
}
