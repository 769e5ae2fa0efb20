//! Minimal dense real tensor with NumPy-style trailing-axis broadcasting.

use crate::error::{CoreError, CoreResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> CoreResult<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(CoreError::dim(format!(
                "shape {:?} wants {numel} elements, got {}",
                shape,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![1.0; numel],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; numel],
        }
    }

    /// Rank-0 scalar.
    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> CoreResult<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(CoreError::dim(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }
}

pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; shape.len()];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        strides[i] = acc;
        acc *= shape[i];
    }
    strides
}

/// Broadcast result shape of two operand shapes (trailing alignment; a dim
/// broadcasts when it is 1 or missing).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> CoreResult<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return Err(CoreError::dim(format!(
                "shapes {a:?} and {b:?} do not broadcast"
            )));
        }
    }
    Ok(out)
}

/// Strides of `shape` viewed inside `out_shape` (0 on broadcast axes).
fn strides_in(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let own = row_major_strides(shape);
    let offset = rank - shape.len();
    (0..rank)
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// Elementwise binary op with broadcasting.
pub fn ew_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> CoreResult<Tensor> {
    if a.shape == b.shape {
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Ok(Tensor {
            shape: a.shape.clone(),
            data,
        });
    }
    let out_shape = broadcast_shape(&a.shape, &b.shape)?;
    let sa = strides_in(&a.shape, &out_shape);
    let sb = strides_in(&b.shape, &out_shape);
    let numel: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut idx = vec![0usize; out_shape.len()];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for _ in 0..numel {
        data.push(f(a.data[ia], b.data[ib]));
        // odometer increment
        for ax in (0..out_shape.len()).rev() {
            idx[ax] += 1;
            ia += sa[ax];
            ib += sb[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            ia -= sa[ax] * out_shape[ax];
            ib -= sb[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    Ok(Tensor {
        shape: out_shape,
        data,
    })
}

/// Reduces `g` (broadcast output gradient) back onto `target` shape by
/// summing over broadcast axes.
pub fn reduce_to_shape(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let rank = g.shape.len();
    let offset = rank - target.len();
    let mut out = Tensor::zeros(target);
    let st = strides_in(target, &g.shape);
    let mut idx = vec![0usize; rank];
    let mut it = 0usize;
    for k in 0..g.numel() {
        out.data[it] += g.data[k];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            it += st[ax];
            if idx[ax] < g.shape[ax] {
                break;
            }
            it -= st[ax] * g.shape[ax];
            idx[ax] = 0;
        }
    }
    let _ = offset;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcasting_rules() {
        assert_eq!(broadcast_shape(&[2, 3], &[2, 3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shape(&[2, 1], &[2, 3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shape(&[3], &[2, 3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shape(&[], &[2, 3]).unwrap(), vec![2, 3]);
        assert!(broadcast_shape(&[2, 2], &[2, 3]).is_err());
    }

    #[test]
    fn ew_with_broadcast_and_reduce() {
        let a = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![10., 100.]).unwrap();
        let c = ew_binary(&a, &b, |x, y| x * y).unwrap();
        assert_eq!(c.data(), &[10., 20., 30., 400., 500., 600.]);
        let red = reduce_to_shape(&c, &[2, 1]);
        assert_eq!(red.data(), &[60., 1500.]);
        let red_scalar = reduce_to_shape(&c, &[]);
        assert_eq!(red_scalar.item(), 1560.0);
    }
}
