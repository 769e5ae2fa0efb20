//! Complex tensors on the tape as paired real tensors. Every complex op is a
//! composition of real tape ops, so gradients come for free from `backward`.

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::CoreResult;
use ndarray::Array2;
use num_complex::Complex64;

/// Handle to a complex tensor: two real nodes of identical shape.
#[derive(Debug, Clone, Copy)]
pub struct Ct {
    pub re: NodeId,
    pub im: NodeId,
}

pub fn const_complex_matrix(tape: &mut Tape, m: &Array2<Complex64>) -> Ct {
    let (r, c) = m.dim();
    let re = Tensor::new(vec![r, c], m.iter().map(|z| z.re).collect()).unwrap();
    let im = Tensor::new(vec![r, c], m.iter().map(|z| z.im).collect()).unwrap();
    Ct {
        re: tape.constant(re),
        im: tape.constant(im),
    }
}

pub fn cadd(tape: &mut Tape, a: Ct, b: Ct) -> CoreResult<Ct> {
    Ok(Ct {
        re: tape.add(a.re, b.re)?,
        im: tape.add(a.im, b.im)?,
    })
}

pub fn csub(tape: &mut Tape, a: Ct, b: Ct) -> CoreResult<Ct> {
    Ok(Ct {
        re: tape.sub(a.re, b.re)?,
        im: tape.sub(a.im, b.im)?,
    })
}

/// Elementwise complex multiply (broadcasts like `hadamard`).
pub fn cmul(tape: &mut Tape, a: Ct, b: Ct) -> CoreResult<Ct> {
    let rr = tape.hadamard(a.re, b.re)?;
    let ii = tape.hadamard(a.im, b.im)?;
    let ri = tape.hadamard(a.re, b.im)?;
    let ir = tape.hadamard(a.im, b.re)?;
    Ok(Ct {
        re: tape.sub(rr, ii)?,
        im: tape.add(ri, ir)?,
    })
}

/// Complex matrix product via four real matmuls.
pub fn cmatmul(tape: &mut Tape, a: Ct, b: Ct) -> CoreResult<Ct> {
    let rr = tape.matmul(a.re, b.re)?;
    let ii = tape.matmul(a.im, b.im)?;
    let ri = tape.matmul(a.re, b.im)?;
    let ir = tape.matmul(a.im, b.re)?;
    Ok(Ct {
        re: tape.sub(rr, ii)?,
        im: tape.add(ri, ir)?,
    })
}

pub fn cconj(tape: &mut Tape, a: Ct) -> Ct {
    Ct {
        re: a.re,
        im: tape.scale(a.im, -1.0),
    }
}

pub fn cscale(tape: &mut Tape, a: Ct, c: f64) -> Ct {
    Ct {
        re: tape.scale(a.re, c),
        im: tape.scale(a.im, c),
    }
}

/// Multiply a complex tensor by a real tensor (broadcasting).
pub fn cscale_real(tape: &mut Tape, a: Ct, s: NodeId) -> CoreResult<Ct> {
    Ok(Ct {
        re: tape.hadamard(a.re, s)?,
        im: tape.hadamard(a.im, s)?,
    })
}

/// exp(j phase) elementwise: the unit-modulus projection map.
pub fn cexp_j(tape: &mut Tape, phase: NodeId) -> Ct {
    Ct {
        re: tape.cos(phase),
        im: tape.sin(phase),
    }
}

pub fn ctranspose(tape: &mut Tape, a: Ct, perm: &[usize]) -> CoreResult<Ct> {
    Ok(Ct {
        re: tape.transpose(a.re, perm)?,
        im: tape.transpose(a.im, perm)?,
    })
}

pub fn creshape(tape: &mut Tape, a: Ct, shape: &[usize]) -> CoreResult<Ct> {
    Ok(Ct {
        re: tape.reshape(a.re, shape)?,
        im: tape.reshape(a.im, shape)?,
    })
}

pub fn cslice(tape: &mut Tape, a: Ct, axis: usize, start: usize, len: usize) -> CoreResult<Ct> {
    Ok(Ct {
        re: tape.slice(a.re, axis, start, len)?,
        im: tape.slice(a.im, axis, start, len)?,
    })
}

/// Conjugate transpose of the last two axes of a 2-D complex tensor.
pub fn chermitian(tape: &mut Tape, a: Ct) -> CoreResult<Ct> {
    let rank = tape.value(a.re).shape().len();
    let mut perm: Vec<usize> = (0..rank).collect();
    perm.swap(rank - 1, rank - 2);
    let t = ctranspose(tape, a, &perm)?;
    Ok(cconj(tape, t))
}

/// Sum of squared moduli: sum(re^2 + im^2), a real scalar node.
pub fn cnorm_sq(tape: &mut Tape, a: Ct) -> CoreResult<NodeId> {
    let rr = tape.hadamard(a.re, a.re)?;
    let ii = tape.hadamard(a.im, a.im)?;
    let s = tape.add(rr, ii)?;
    Ok(tape.sum(s))
}

/// log2 det of the Hermitian positive definite complex matrix represented by
/// `a` (n x n), computed through the real symmetric embedding
/// [[Re, -Im], [Im, Re]] whose log det is exactly twice the complex one.
pub fn logdet_hpd(tape: &mut Tape, a: Ct) -> CoreResult<NodeId> {
    let neg_im = tape.scale(a.im, -1.0);
    let top = tape.concat(&[a.re, neg_im], 1)?;
    let bottom = tape.concat(&[a.im, a.re], 1)?;
    let embed = tape.concat(&[top, bottom], 0)?;
    let ld = tape.logdet_spd(embed)?;
    Ok(tape.scale(ld, 0.5 / std::f64::consts::LN_2))
}

/// Read a complex matrix value back off the tape.
pub fn value_as_matrix(tape: &Tape, a: Ct) -> Array2<Complex64> {
    let re = tape.value(a.re);
    let im = tape.value(a.im);
    let shape = re.shape();
    debug_assert_eq!(shape.len(), 2);
    Array2::from_shape_fn((shape[0], shape[1]), |(i, j)| {
        Complex64::new(
            re.data()[i * shape[1] + j],
            im.data()[i * shape[1] + j],
        )
    })
}
