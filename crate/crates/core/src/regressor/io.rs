use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::{Mask, RegressorError, Skeleton, SkinWeights, SpatialRegressor, SpectralRegressor};
use crate::mesh::MeshId;

const SPATIAL_MAGIC: &[u8; 8] = b"RSREGR01";
const SPECTRAL_MAGIC: &[u8; 8] = b"RSSPEC01";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RegressorError + '_ {
    move |source| RegressorError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> RegressorError {
    RegressorError::Parse { path: path.display().to_string(), msg: msg.into() }
}

#[derive(Serialize, Deserialize)]
struct JointJson {
    name: String,
    parent: i64,
    position: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct SkeletonJson {
    joints: Vec<JointJson>,
}

/// Parses `{"joints":[{"name","parent","position"}]}`; parent `-1` marks the
/// root. Joints are renumbered so that parents come first.
pub fn read_skeleton(text: &str) -> Result<Skeleton, String> {
    let js: SkeletonJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let q = js.joints.len();
    let mut parents = Vec::with_capacity(q);
    for (i, j) in js.joints.iter().enumerate() {
        parents.push(match j.parent {
            -1 => None,
            p if p >= 0 && (p as usize) < q => Some(p as usize),
            p => return Err(format!("joint {i} has invalid parent {p}")),
        });
    }
    let names = js.joints.iter().map(|j| j.name.clone()).collect();
    let joints = js.joints.iter().map(|j| j.position).collect();
    Skeleton::from_unordered(names, parents, joints).map(|(s, _)| s).map_err(|e| e.to_string())
}

pub fn skeleton_to_json(sk: &Skeleton) -> String {
    let js = SkeletonJson {
        joints: (0..sk.len())
            .map(|q| JointJson {
                name: sk.name(q).to_string(),
                parent: sk.parent(q).map_or(-1, |p| p as i64),
                position: sk.joint(q),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&js).expect("skeleton serializes")
}

pub fn load_skeleton(path: impl AsRef<Path>) -> Result<Skeleton, RegressorError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    read_skeleton(&text).map_err(|m| parse_err(path, m))
}

pub fn save_skeleton(sk: &Skeleton, path: impl AsRef<Path>) -> Result<(), RegressorError> {
    let path = path.as_ref();
    fs::write(path, skeleton_to_json(sk) + "\n").map_err(io_err(path))
}

/// MatrixMarket coordinate format (`n × Q`, 1-based). Rows are normalized on
/// load: the largest influences are kept and rescaled to sum to one.
pub fn read_weights<R: BufRead>(r: R) -> Result<SkinWeights, String> {
    let mut lines = r.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, Ok(l))) if l.starts_with("%%") => {
                let lower = l.to_lowercase();
                if !lower.contains("coordinate") || !lower.contains("matrix") {
                    return Err(format!("unsupported MatrixMarket header: {l}"));
                }
                if lower.contains("complex") || lower.contains("pattern") {
                    return Err("weights must be real".into());
                }
            }
            Some((_, Ok(l))) if l.trim().is_empty() || l.starts_with('%') => {}
            Some((ln, Ok(l))) => break (ln, l),
            Some((ln, Err(e))) => return Err(format!("line {}: {e}", ln + 1)),
            None => return Err("missing size line".into()),
        }
    };
    let dims: Vec<usize> = header
        .1
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("line {}: bad size line", header.0 + 1)))
        .collect::<Result<_, _>>()?;
    let [n, q, nnz] = dims[..] else {
        return Err(format!("line {}: expected 'rows cols entries'", header.0 + 1));
    };
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut count = 0;
    for (ln, line) in lines {
        let line = line.map_err(|e| format!("line {}: {e}", ln + 1))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(format!("line {}: expected 'row col value'", ln + 1));
        }
        let i: usize = parts[0].parse().map_err(|_| format!("line {}: bad row", ln + 1))?;
        let j: usize = parts[1].parse().map_err(|_| format!("line {}: bad column", ln + 1))?;
        let v: f64 = parts[2].parse().map_err(|_| format!("line {}: bad value", ln + 1))?;
        if i == 0 || i > n || j == 0 || j > q {
            return Err(format!("line {}: entry ({i}, {j}) outside {n} x {q}", ln + 1));
        }
        if let Some(e) = rows[i - 1].iter_mut().find(|e| e.0 == j - 1) {
            e.1 += v;
        } else {
            rows[i - 1].push((j - 1, v));
        }
        count += 1;
    }
    if count != nnz {
        return Err(format!("header announces {nnz} entries, found {count}"));
    }
    SkinWeights::normalized(q, rows).map_err(|e| e.to_string())
}

pub fn write_weights<W: Write>(w: &mut W, weights: &SkinWeights) -> std::io::Result<()> {
    let nnz: usize = (0..weights.n_vertices()).map(|i| weights.row(i).len()).sum();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", weights.n_vertices(), weights.n_joints(), nnz)?;
    for i in 0..weights.n_vertices() {
        for &(q, v) in weights.row(i) {
            writeln!(w, "{} {} {}", i + 1, q + 1, v)?;
        }
    }
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<SkinWeights, RegressorError> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_weights(BufReader::new(f)).map_err(|m| parse_err(path, m))
}

pub fn save_weights(weights: &SkinWeights, path: impl AsRef<Path>) -> Result<(), RegressorError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    write_weights(&mut w, weights).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), String> {
    r.read_exact(buf).map_err(|_| "truncated file".to_string())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, String> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Mat<f64>, String> {
    let mut buf = vec![0u8; rows * cols * 8];
    read_exact(r, &mut buf)?;
    let v: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Mat::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

fn write_matrix<W: Write>(w: &mut W, m: &Mat<f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Layout (little endian): magic, `Q`, `n` (u64), mesh hash, `R` row-major,
/// then the mask as one byte per entry.
pub fn write_spatial_regressor<W: Write>(w: &mut W, r: &SpatialRegressor) -> std::io::Result<()> {
    w.write_all(SPATIAL_MAGIC)?;
    w.write_all(&(r.n_joints() as u64).to_le_bytes())?;
    w.write_all(&(r.n_vertices() as u64).to_le_bytes())?;
    w.write_all(&r.mesh_id.0)?;
    write_matrix(w, &r.r)?;
    for q in 0..r.n_joints() {
        let bytes: Vec<u8> = r.mask.row(q).iter().map(|&b| b as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_spatial_regressor<R: Read>(r: &mut R) -> Result<SpatialRegressor, String> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic)?;
    if &magic != SPATIAL_MAGIC {
        return Err("not a spatial regressor file".into());
    }
    let q = read_u64(r)? as usize;
    let n = read_u64(r)? as usize;
    let mut id = [0u8; 32];
    read_exact(r, &mut id)?;
    let m = read_matrix(r, q, n)?;
    let mut rows = Vec::with_capacity(q);
    for _ in 0..q {
        let mut b = vec![0u8; n];
        read_exact(r, &mut b)?;
        rows.push(b.into_iter().map(|v| v != 0).collect());
    }
    Ok(SpatialRegressor { r: m, mask: Mask { n, rows }, mesh_id: MeshId(id), diagnostics: None })
}

/// Layout (little endian): magic, `Q`, `k` (u64), basis mesh hash, `R̂`
/// row-major.
pub fn write_spectral_regressor<W: Write>(w: &mut W, r: &SpectralRegressor) -> std::io::Result<()> {
    w.write_all(SPECTRAL_MAGIC)?;
    w.write_all(&(r.n_joints() as u64).to_le_bytes())?;
    w.write_all(&(r.k() as u64).to_le_bytes())?;
    w.write_all(&r.basis_id.0)?;
    write_matrix(w, &r.r_hat)
}

pub fn read_spectral_regressor<R: Read>(r: &mut R) -> Result<SpectralRegressor, String> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic)?;
    if &magic != SPECTRAL_MAGIC {
        return Err("not a spectral regressor file".into());
    }
    let q = read_u64(r)? as usize;
    let k = read_u64(r)? as usize;
    let mut id = [0u8; 32];
    read_exact(r, &mut id)?;
    Ok(SpectralRegressor { r_hat: read_matrix(r, q, k)?, basis_id: MeshId(id) })
}

pub fn save_spatial_regressor(r: &SpatialRegressor, path: impl AsRef<Path>) -> Result<(), RegressorError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    write_spatial_regressor(&mut w, r).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn load_spatial_regressor(path: impl AsRef<Path>) -> Result<SpatialRegressor, RegressorError> {
    let path = path.as_ref();
    let mut f = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    read_spatial_regressor(&mut f).map_err(|m| parse_err(path, m))
}

pub fn save_spectral_regressor(r: &SpectralRegressor, path: impl AsRef<Path>) -> Result<(), RegressorError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    write_spectral_regressor(&mut w, r).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn load_spectral_regressor(path: impl AsRef<Path>) -> Result<SpectralRegressor, RegressorError> {
    let path = path.as_ref();
    let mut f = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    read_spectral_regressor(&mut f).map_err(|m| parse_err(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skeleton_json_round_trip() {
        let text = r#"{"joints":[
            {"name":"hand","parent":2,"position":[2,0,0]},
            {"name":"root","parent":-1,"position":[0,0,0]},
            {"name":"elbow","parent":1,"position":[1,0,0]}]}"#;
        let sk = read_skeleton(text).unwrap();
        assert_eq!(sk.names(), &["root", "elbow", "hand"]);
        assert_eq!(sk.parents(), &[None, Some(0), Some(1)]);
        let again = read_skeleton(&skeleton_to_json(&sk)).unwrap();
        assert_eq!(again, sk);
        assert!(read_skeleton(r#"{"joints":[{"name":"a","parent":5,"position":[0,0,0]}]}"#).is_err());
    }

    #[test]
    fn weights_round_trip() {
        let w = SkinWeights::new(3, vec![vec![(0, 1.0)], vec![(1, 0.25), (2, 0.75)]]).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &w).unwrap();
        assert_eq!(read_weights(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn weights_are_normalized_on_load() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 3\n1 1 2\n2 1 1\n2 2 3\n";
        let w = read_weights(text.as_bytes()).unwrap();
        assert_eq!(w.get(0, 0), 1.0);
        assert_eq!(w.get(1, 1), 0.75);
        assert!(read_weights("%%MatrixMarket matrix coordinate real general\n2 2 5\n1 1 1\n".as_bytes()).is_err());
        assert!(read_weights("%%MatrixMarket matrix array real general\n2 2\n".as_bytes()).is_err());
    }

    #[test]
    fn regressor_binaries_round_trip() {
        let mask = Mask::from_rows(vec![vec![true, false, true], vec![false, true, true]]);
        let r = SpatialRegressor {
            r: Mat::from_fn(2, 3, |i, j| (i + 2 * j) as f64 * 0.5),
            mask,
            mesh_id: MeshId([9; 32]),
            diagnostics: None,
        };
        let mut buf = Vec::new();
        write_spatial_regressor(&mut buf, &r).unwrap();
        let back = read_spatial_regressor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.r, r.r);
        assert_eq!(back.mask, r.mask);
        assert_eq!(back.mesh_id, r.mesh_id);

        let s = SpectralRegressor { r_hat: Mat::from_fn(2, 4, |i, j| i as f64 - j as f64), basis_id: MeshId([3; 32]) };
        let mut buf = Vec::new();
        write_spectral_regressor(&mut buf, &s).unwrap();
        assert_eq!(read_spectral_regressor(&mut buf.as_slice()).unwrap(), s);
        assert!(read_spectral_regressor(&mut &b"RSREGR01"[..]).is_err());
    }
}
