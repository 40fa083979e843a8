use faer::Mat;

use super::RegressorError;

/// Joint hierarchy with rest positions, stored in topological order
/// (`parent(q) < q`, a single root at index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    joints: Vec<[f64; 3]>,
}

impl Skeleton {
    /// Validates a skeleton that is already topologically ordered.
    pub fn new(names: Vec<String>, parents: Vec<Option<usize>>, joints: Vec<[f64; 3]>) -> Result<Self, RegressorError> {
        let q = names.len();
        if q == 0 {
            return Err(RegressorError::InvalidSkeleton("no joints".into()));
        }
        if parents.len() != q || joints.len() != q {
            return Err(RegressorError::InvalidSkeleton(format!(
                "{} names, {} parents, {} positions",
                q,
                parents.len(),
                joints.len()
            )));
        }
        if parents[0].is_some() {
            return Err(RegressorError::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (i, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => {
                    return Err(RegressorError::InvalidSkeleton(format!("more than one root ({} and {i})", names[0])))
                }
                Some(p) if *p >= i => {
                    return Err(RegressorError::InvalidSkeleton(format!("joint {i} precedes its parent {p}")))
                }
                _ => {}
            }
        }
        if joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RegressorError::InvalidSkeleton("non-finite joint position".into()));
        }
        Ok(Skeleton { names, parents, joints })
    }

    /// Renumbers joints so that parents precede children. Returns the
    /// skeleton and, for each new index, the original index.
    pub fn from_unordered(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        joints: Vec<[f64; 3]>,
    ) -> Result<(Self, Vec<usize>), RegressorError> {
        let q = names.len();
        if parents.len() != q || joints.len() != q {
            return Err(RegressorError::InvalidSkeleton("field lengths differ".into()));
        }
        if let Some((i, p)) = parents.iter().enumerate().find_map(|(i, p)| p.filter(|&p| p >= q).map(|p| (i, p))) {
            return Err(RegressorError::InvalidSkeleton(format!("joint {i} has parent {p} out of range")));
        }
        let roots: Vec<usize> = (0..q).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(RegressorError::InvalidSkeleton(format!("expected one root, found {}", roots.len())));
        }
        let mut children = vec![Vec::new(); q];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        let mut order = vec![roots[0]];
        let mut head = 0;
        while head < order.len() {
            let j = order[head];
            head += 1;
            order.extend(children[j].iter().copied());
        }
        if order.len() != q {
            let joint = (0..q).find(|i| !order.contains(i)).unwrap_or(0);
            return Err(RegressorError::CyclicHierarchy { joint });
        }
        let mut new_index = vec![0; q];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let sk = Skeleton::new(
            order.iter().map(|&o| names[o].clone()).collect(),
            order.iter().map(|&o| parents[o].map(|p| new_index[p])).collect(),
            order.iter().map(|&o| joints[o]).collect(),
        )?;
        Ok((sk, order))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, q: usize) -> &str {
        &self.names[q]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, q: usize) -> Option<usize> {
        self.parents[q]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn joint(&self, q: usize) -> [f64; 3] {
        self.joints[q]
    }

    pub fn joints(&self) -> &[[f64; 3]] {
        &self.joints
    }

    /// Rest positions as a `Q × 3` matrix.
    pub fn joints_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.len(), 3, |q, c| self.joints[q][c])
    }

    /// Same hierarchy with new joint positions.
    pub fn with_joints(&self, joints: Vec<[f64; 3]>) -> Result<Self, RegressorError> {
        Skeleton::new(self.names.clone(), self.parents.clone(), joints)
    }

    pub fn depth(&self, q: usize) -> usize {
        let mut d = 0;
        let mut j = q;
        while let Some(p) = self.parents[j] {
            d += 1;
            j = p;
        }
        d
    }
}
