use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use sha2::{Digest, Sha256};

use super::{assemble_cotan, eigenbasis, SpectralBasis, SpectralError};
use crate::mesh::{MeshId, TriMesh};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"RSBASIS1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SpectralError + '_ {
    move |source| SpectralError::Io { path: path.display().to_string(), source }
}

/// Binary layout (little endian): magic, `n: u64`, `k: u64`, mesh hash
/// (32 bytes), `k` eigenvalues, `n` masses, then `Φ` column by column.
pub fn write_basis<W: Write>(w: &mut W, basis: &SpectralBasis) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(basis.n() as u64).to_le_bytes())?;
    w.write_all(&(basis.k() as u64).to_le_bytes())?;
    w.write_all(&basis.mesh_id().0)?;
    for l in basis.lambda() {
        w.write_all(&l.to_le_bytes())?;
    }
    for a in basis.mass() {
        w.write_all(&a.to_le_bytes())?;
    }
    for j in 0..basis.k() {
        for i in 0..basis.n() {
            w.write_all(&basis.phi()[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_basis<R: Read>(r: &mut R) -> Result<SpectralBasis, SpectralError> {
    let fmt = |m: &str| SpectralError::Format(m.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| fmt("truncated header"))?;
    if &magic != MAGIC {
        return Err(fmt("bad magic"));
    }
    let mut u = [0u8; 8];
    let mut read_u64 = |r: &mut R| -> Result<u64, SpectralError> {
        r.read_exact(&mut u).map_err(|_| fmt("truncated header"))?;
        Ok(u64::from_le_bytes(u))
    };
    let n = read_u64(r)? as usize;
    let k = read_u64(r)? as usize;
    let mut id = [0u8; 32];
    r.read_exact(&mut id).map_err(|_| fmt("truncated header"))?;
    let read_f64s = |r: &mut R, count: usize| -> Result<Vec<f64>, SpectralError> {
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf).map_err(|_| fmt("truncated payload"))?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let lambda = read_f64s(r, k)?;
    let mass = read_f64s(r, n)?;
    let data = read_f64s(r, n * k)?;
    let phi = Mat::from_fn(n, k, |i, j| data[j * n + i]);
    SpectralBasis::from_parts(phi, lambda, mass, MeshId(id))
}

pub fn save_basis(basis: &SpectralBasis, path: impl AsRef<Path>) -> Result<(), SpectralError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    write_basis(&mut w, basis).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<SpectralBasis, SpectralError> {
    let path = path.as_ref();
    let mut r = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    read_basis(&mut r)
}

/// Cache file for `(mesh, k)`: the name is a hash of the mesh content and `k`.
pub fn basis_cache_path<T: Scalar>(dir: &Path, mesh: &TriMesh<T>, k: usize) -> PathBuf {
    let mut h = Sha256::new();
    h.update(mesh.content_hash().0);
    h.update((k as u64).to_le_bytes());
    let key: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{key}.basis"))
}

/// Computes an eigenbasis, reusing a cached copy from `cache_dir` when one
/// exists for this exact mesh and `k`.
pub fn eigenbasis_cached<T: Scalar>(
    mesh: &TriMesh<T>,
    k: usize,
    cache_dir: Option<&Path>,
) -> Result<SpectralBasis, SpectralError> {
    let Some(dir) = cache_dir else {
        return eigenbasis(&assemble_cotan(mesh)?, k);
    };
    let path = basis_cache_path(dir, mesh, k);
    if let Ok(b) = load_basis(&path) {
        if b.mesh_id() == mesh.content_hash() && b.k() == k && b.n() == mesh.n_vertices() {
            log::debug!("spectral cache hit {}", path.display());
            return Ok(b);
        }
    }
    let basis = eigenbasis(&assemble_cotan(mesh)?, k)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_basis(&basis, &path)?;
    Ok(basis)
}
