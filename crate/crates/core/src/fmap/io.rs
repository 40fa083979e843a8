use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;

use super::{FmapError, FunctionalMap};
use crate::mesh::MeshId;

const MAGIC: &[u8; 8] = b"RSFMAP01";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FmapError + '_ {
    move |source| FmapError::Io { path: path.display().to_string(), source }
}

/// Layout (little endian): magic, rows, cols, source k, target k (u64),
/// source and target mesh hashes (32 bytes each), then the entries row by row.
pub fn write_fmap<W: Write>(w: &mut W, map: &FunctionalMap) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [map.c.nrows(), map.c.ncols(), map.source_k, map.target_k] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&map.source_id.0)?;
    w.write_all(&map.target_id.0)?;
    for i in 0..map.c.nrows() {
        for j in 0..map.c.ncols() {
            w.write_all(&map.c[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_fmap<R: Read>(r: &mut R) -> Result<FunctionalMap, FmapError> {
    let fmt = |m: &str| FmapError::Format(m.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| fmt("truncated header"))?;
    if &magic != MAGIC {
        return Err(fmt("bad magic"));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|_| fmt("truncated header"))?;
        *d = u64::from_le_bytes(b) as usize;
    }
    let [rows, cols, source_k, target_k] = dims;
    if rows != target_k || cols != source_k {
        return Err(fmt("matrix shape disagrees with the stored truncation orders"));
    }
    let mut ids = [[0u8; 32]; 2];
    for id in &mut ids {
        r.read_exact(id).map_err(|_| fmt("truncated header"))?;
    }
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf).map_err(|_| fmt("truncated payload"))?;
    let vals: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let c = Mat::from_fn(rows, cols, |i, j| vals[i * cols + j]);
    Ok(FunctionalMap { c, source_k, target_k, source_id: MeshId(ids[0]), target_id: MeshId(ids[1]) })
}

pub fn save_fmap(map: &FunctionalMap, path: impl AsRef<Path>) -> Result<(), FmapError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    write_fmap(&mut w, map).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn load_fmap(path: impl AsRef<Path>) -> Result<FunctionalMap, FmapError> {
    let path = path.as_ref();
    let mut r = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    read_fmap(&mut r)
}

pub fn write_fmap_csv<W: Write>(w: &mut W, map: &FunctionalMap) -> std::io::Result<()> {
    for i in 0..map.c.nrows() {
        let row: Vec<String> = (0..map.c.ncols()).map(|j| format!("{}", map.c[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_fmap_csv(map: &FunctionalMap, path: impl AsRef<Path>) -> Result<(), FmapError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    write_fmap_csv(&mut w, map).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
