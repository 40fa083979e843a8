#![allow(dead_code)]

use faer::Mat;
use rig_spectra::fixtures::Fixture;
use rig_spectra::pipeline::Rig;

pub fn rig_of(f: &Fixture) -> Rig {
    Rig { mesh: f.mesh.clone(), skeleton: f.skeleton.clone(), weights: f.weights.clone() }
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn max_dist(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| dist(*p, *q)).fold(0.0, f64::max)
}

pub fn mean_dist(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| dist(*p, *q)).sum::<f64>() / a.len() as f64
}

pub fn rows3(m: &Mat<f64>) -> Vec<[f64; 3]> {
    (0..m.nrows()).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect()
}

pub fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

pub fn identity_gap(m: &Mat<f64>) -> f64 {
    max_abs_diff(m, &Mat::identity(m.nrows(), m.ncols()))
}
