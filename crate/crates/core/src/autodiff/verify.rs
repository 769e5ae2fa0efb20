//! Canonical per-op gradient verification: one entry per recorded op kind,
//! checked by reverse mode against central finite differences. Used by the
//! unit suite, the acceptance gate and the `gradcheck` command.

use super::complex::{
    cadd, cexp_j, chermitian, cmatmul, cmul, cnorm_sq, const_complex_matrix, logdet_hpd, Ct,
};
use super::fd::{finite_diff_grad, max_rel_error};
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::CoreResult;
use crate::scenario::derive_rng;
use rand::Rng;

type Builder = Box<dyn Fn(&mut Tape, &[NodeId]) -> CoreResult<NodeId>>;

fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn cases() -> Vec<(&'static str, Vec<Vec<usize>>, Builder)> {
    let mut out: Vec<(&'static str, Vec<Vec<usize>>, Builder)> = Vec::new();
    let mut case = |name: &'static str,
                    shapes: &[&[usize]],
                    f: Builder| {
        out.push((name, shapes.iter().map(|s| s.to_vec()).collect(), f));
    };
    case("add", &[&[2, 3], &[2, 3]], Box::new(|t, p| t.add(p[0], p[1])));
    case("add-broadcast", &[&[2, 3], &[3]], Box::new(|t, p| t.add(p[0], p[1])));
    case("sub", &[&[4], &[4]], Box::new(|t, p| t.sub(p[0], p[1])));
    case("scale", &[&[3, 2]], Box::new(|t, p| Ok(t.scale(p[0], -1.7))));
    case("hadamard", &[&[2, 3], &[2, 3]], Box::new(|t, p| t.hadamard(p[0], p[1])));
    case(
        "hadamard-broadcast",
        &[&[2, 3, 2], &[3, 1]],
        Box::new(|t, p| t.hadamard(p[0], p[1])),
    );
    case(
        "hadamard-scalar",
        &[&[2, 3], &[]],
        Box::new(|t, p| t.hadamard(p[0], p[1])),
    );
    case(
        "recip",
        &[&[5]],
        Box::new(|t, p| {
            let shifted = t.scale(p[0], 0.2);
            let c = t.constant(Tensor::full(&[5], 2.0));
            let x = t.add(shifted, c)?;
            Ok(t.recip(x))
        }),
    );
    case(
        "sqrt",
        &[&[4]],
        Box::new(|t, p| {
            let sq = t.hadamard(p[0], p[0])?;
            let c = t.constant(Tensor::full(&[4], 1.5));
            let x = t.add(sq, c)?;
            Ok(t.sqrt(x))
        }),
    );
    case("sin", &[&[6]], Box::new(|t, p| Ok(t.sin(p[0]))));
    case("cos", &[&[6]], Box::new(|t, p| Ok(t.cos(p[0]))));
    case("sigmoid", &[&[5]], Box::new(|t, p| Ok(t.sigmoid(p[0]))));
    case("gelu", &[&[5]], Box::new(|t, p| Ok(t.gelu(p[0]))));
    case("softmax-last", &[&[3, 4]], Box::new(|t, p| t.softmax_last(p[0])));
    case("matmul", &[&[3, 4], &[4, 2]], Box::new(|t, p| t.matmul(p[0], p[1])));
    case(
        "matmul-batched",
        &[&[2, 3, 4], &[2, 4, 2]],
        Box::new(|t, p| t.matmul(p[0], p[1])),
    );
    case(
        "matmul-broadcast-rhs",
        &[&[2, 3, 4], &[4, 2]],
        Box::new(|t, p| t.matmul(p[0], p[1])),
    );
    case(
        "matmul-broadcast-lhs",
        &[&[3, 4], &[2, 4, 2]],
        Box::new(|t, p| t.matmul(p[0], p[1])),
    );
    case(
        "transpose",
        &[&[2, 3, 4]],
        Box::new(|t, p| t.transpose(p[0], &[2, 0, 1])),
    );
    case("reshape", &[&[2, 6]], Box::new(|t, p| t.reshape(p[0], &[3, 4])));
    case("slice", &[&[3, 5]], Box::new(|t, p| t.slice(p[0], 1, 1, 3)));
    case("concat", &[&[2, 2], &[2, 3]], Box::new(|t, p| t.concat(p, 1)));
    case("sum", &[&[7]], Box::new(|t, p| Ok(t.sum(p[0]))));
    case(
        "mean-pool",
        &[&[2, 3, 4]],
        Box::new(|t, p| t.mean_pool(p[0], &[1, 2])),
    );
    case("frobenius-norm", &[&[3, 3]], Box::new(|t, p| Ok(t.frob_norm(p[0]))));
    case(
        "logdet-spd",
        &[&[3, 3]],
        Box::new(|t, p| {
            let at = t.transpose(p[0], &[1, 0])?;
            let gram = t.matmul(p[0], at)?;
            let eye = t.constant(Tensor::new(
                vec![3, 3],
                vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0],
            )?);
            let x = t.add(gram, eye)?;
            t.logdet_spd(x)
        }),
    );
    case("dft2-half", &[&[2, 4, 6]], Box::new(|t, p| t.dft2_half(p[0])));
    case(
        "idft2-half",
        &[&[2, 4, 4, 2]],
        Box::new(|t, p| t.idft2_half(p[0], 6)),
    );
    case(
        "complex-mul",
        &[&[2, 3], &[2, 3], &[2, 3], &[2, 3]],
        Box::new(|t, p| {
            let a = Ct { re: p[0], im: p[1] };
            let b = Ct { re: p[2], im: p[3] };
            let c = cmul(t, a, b)?;
            t.add(c.re, c.im)
        }),
    );
    case(
        "complex-matmul",
        &[&[2, 3], &[2, 3], &[3, 2], &[3, 2]],
        Box::new(|t, p| {
            let a = Ct { re: p[0], im: p[1] };
            let b = Ct { re: p[2], im: p[3] };
            let c = cmatmul(t, a, b)?;
            cnorm_sq(t, c)
        }),
    );
    case(
        "exp-j",
        &[&[4]],
        Box::new(|t, p| {
            let z = cexp_j(t, p[0]);
            t.add(z.re, z.im)
        }),
    );
    case(
        "logdet-hpd",
        &[&[2, 3], &[2, 3]],
        Box::new(|t, p| {
            let z = Ct { re: p[0], im: p[1] };
            let zh = chermitian(t, z)?;
            let gram = cmatmul(t, z, zh)?;
            let eye = const_complex_matrix(t, &ndarray::Array2::eye(2));
            let x = cadd(t, gram, eye)?;
            logdet_hpd(t, x)
        }),
    );
    out
}

/// Checks every op kind at the given FD step; returns (name, worst relative
/// error) per op.
pub fn op_gradient_report(eps: f64) -> CoreResult<Vec<(String, f64)>> {
    let mut report = Vec::new();
    for (name, shapes, build) in cases() {
        let mut rng = derive_rng(0xC0FFEE, name);
        let params: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(s, &mut rng)).collect();
        let probe_shape = {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = params
                .iter()
                .enumerate()
                .map(|(i, t)| tape.param(&format!("p{i}"), t.clone()))
                .collect();
            let out = build(&mut tape, &ids)?;
            tape.value(out).shape().to_vec()
        };
        let weights = rand_tensor(&probe_shape, &mut rng);
        let run = |p: &[Tensor]| -> CoreResult<(f64, Vec<Tensor>)> {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = p
                .iter()
                .enumerate()
                .map(|(i, t)| tape.param(&format!("p{i}"), t.clone()))
                .collect();
            let out = build(&mut tape, &ids)?;
            let w = tape.constant(weights.clone());
            let weighted = tape.hadamard(out, w)?;
            let loss = tape.sum(weighted);
            let grads = tape.backward(loss)?;
            let gs = ids
                .iter()
                .map(|&id| {
                    grads
                        .get(id)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(tape.value(id).shape()))
                })
                .collect();
            Ok((tape.value(loss).item(), gs))
        };
        let (_, analytic) = run(&params)?;
        let mut loss_only = |p: &[Tensor]| run(p).map(|(l, _)| l);
        let numeric = finite_diff_grad(&mut loss_only, &params, eps)?;
        report.push((name.to_string(), max_rel_error(&analytic, &numeric)));
    }
    Ok(report)
}
