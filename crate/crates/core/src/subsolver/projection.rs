use nalgebra::DVector;

use crate::error::{Error, Result};

/// Euclidean projection onto the unit simplex `{z >= 0, sum z = 1}` by sort and threshold.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    assert!(!v.is_empty(), "cannot project onto an empty simplex");
    if v.len() == 1 {
        return DVector::from_element(1, 1.0);
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Componentwise clamp of `v` to `[lo, hi]`.
pub fn project_box(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != lo.len() || v.len() != hi.len() {
        return Err(Error::InvalidParameter("box bounds do not match the vector dimension".into()));
    }
    if let Some(i) = (0..v.len()).find(|&i| !(lo[i] <= hi[i])) {
        return Err(Error::InvalidParameter(format!("empty box at coordinate {i}: [{}, {}]", lo[i], hi[i])));
    }
    Ok(DVector::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i])))
}
