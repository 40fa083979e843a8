use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::MeshError;

/// Corresponding vertex pairs `(source, target)` between two meshes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LandmarkSet {
    pub pairs: Vec<(usize, usize)>,
}

impl LandmarkSet {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self, MeshError> {
        let mut seen: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(MeshError::InvalidLandmarks(format!("duplicate source index {}", w[0])));
        }
        Ok(LandmarkSet { pairs })
    }

    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn target_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    /// The same pairs with source and target exchanged.
    pub fn swapped(&self) -> LandmarkSet {
        LandmarkSet { pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect() }
    }

    pub fn validate(&self, n_source: usize, n_target: usize) -> Result<(), MeshError> {
        for &(s, t) in &self.pairs {
            if s >= n_source || t >= n_target {
                return Err(MeshError::InvalidLandmarks(format!(
                    "pair ({s}, {t}) out of range for meshes with {n_source} and {n_target} vertices"
                )));
            }
        }
        Ok(())
    }
}

/// Reads a plain list of vertex indices, one per line; `#` starts a comment.
pub fn load_landmark_list(path: impl AsRef<Path>) -> Result<Vec<usize>, MeshError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    parse_landmark_list(&text)
}

pub(crate) fn parse_landmark_list(text: &str) -> Result<Vec<usize>, MeshError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        out.push(
            l.parse().map_err(|_| MeshError::Parse { line: i + 1, msg: format!("expected an index, got '{l}'") })?,
        );
    }
    Ok(out)
}

/// Pairs two landmark lists given in the same canonical order.
pub fn zip_landmarks(source: &[usize], target: &[usize]) -> Result<LandmarkSet, MeshError> {
    if source.len() != target.len() {
        return Err(MeshError::InvalidLandmarks(format!(
            "{} source landmarks but {} target landmarks",
            source.len(),
            target.len()
        )));
    }
    LandmarkSet::new(source.iter().copied().zip(target.iter().copied()).collect())
}

/// Reads `src tgt` pairs, one per line, 0-based; `#` starts a comment.
pub fn load_landmarks(path: impl AsRef<Path>) -> Result<LandmarkSet, MeshError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    parse_landmarks(&text)
}

pub(crate) fn parse_landmarks(text: &str) -> Result<LandmarkSet, MeshError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        let bad = || MeshError::Parse { line: i + 1, msg: format!("expected 'src tgt', got '{l}'") };
        if toks.len() != 2 {
            return Err(bad());
        }
        let s = toks[0].parse().map_err(|_| bad())?;
        let t = toks[1].parse().map_err(|_| bad())?;
        pairs.push((s, t));
    }
    LandmarkSet::new(pairs)
}

pub fn save_landmarks(set: &LandmarkSet, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    let mut s = String::from("# source_vertex target_vertex\n");
    for (a, b) in &set.pairs {
        let _ = writeln!(s, "{a} {b}");
    }
    fs::write(path, s).map_err(|source| MeshError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_zipping() {
        let a = parse_landmark_list("# head\n3\n7 # hand\n\n").unwrap();
        assert_eq!(a, vec![3, 7]);
        assert!(parse_landmark_list("x").is_err());
        let set = zip_landmarks(&a, &[1, 2]).unwrap();
        assert_eq!(set.pairs, vec![(3, 1), (7, 2)]);
        assert!(zip_landmarks(&a, &[1]).is_err());
    }

    #[test]
    fn parses_with_comments() {
        let set = parse_landmarks("# head\n0 5\n\n3 7 # hand\n").unwrap();
        assert_eq!(set.pairs, vec![(0, 5), (3, 7)]);
        assert_eq!(set.swapped().pairs, vec![(5, 0), (7, 3)]);
        assert!(set.validate(4, 8).is_ok());
        assert!(set.validate(3, 8).is_err());
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(parse_landmarks("1 2\n1 3\n").is_err());
        assert!(parse_landmarks("1 2 3\n").is_err());
        assert!(parse_landmarks("a b\n").is_err());
    }
}
