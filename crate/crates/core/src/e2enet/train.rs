//! Training loop: mini-batch stochastic optimization of the negative
//! effective SE, per-epoch validation history, checkpointing.

use super::pipeline::e2e_forward;
use super::ParamStore;
use crate::autodiff::{AdamHyper, AdamState, Tensor};
use crate::channel::ChannelSet;
use crate::config::{RisArch, SystemConfig};
use crate::container::{write_atomic, Reader, Writer};
use crate::error::{CoreError, CoreResult};
use crate::scenario::derive_rng;
use rand::Rng;
use rayon::prelude::*;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub mean_se: f64,
    pub snr_r_db: f64,
}

pub struct TrainResult {
    pub store: ParamStore,
    pub adam: AdamState,
    pub history: Vec<HistoryRow>,
    pub iterations: u64,
}

/// Forward-only evaluation of the effective SE for one scenario.
pub fn evaluate_se(
    channels: &ChannelSet,
    store: &ParamStore,
    arch: RisArch,
    cfg: &SystemConfig,
    snr_r_db: f64,
    noise_seed: u64,
) -> CoreResult<f64> {
    Ok(e2e_forward(channels, store, arch, cfg, snr_r_db, noise_seed)?.se_value())
}

fn batch_grads(
    batch: &[(&ChannelSet, u64)],
    store: &ParamStore,
    arch: RisArch,
    cfg: &SystemConfig,
    snr_r_db: f64,
    workers: usize,
) -> CoreResult<(f64, Vec<Tensor>)> {
    let run_one = |(channels, noise_seed): &(&ChannelSet, u64)| -> CoreResult<(f64, Vec<Tensor>)> {
        let fwd = e2e_forward(channels, store, arch, cfg, snr_r_db, *noise_seed)?;
        let grads = fwd.tape.backward(fwd.loss)?;
        let gs: Vec<Tensor> = fwd
            .param_ids
            .iter()
            .map(|&id| {
                grads
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(fwd.tape.value(id).shape()))
            })
            .collect();
        Ok((fwd.tape.value(fwd.loss).item(), gs))
    };
    let results: Vec<CoreResult<(f64, Vec<Tensor>)>> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CoreError::Config(e.to_string()))?;
        pool.install(|| batch.par_iter().map(run_one).collect())
    } else {
        batch.iter().map(run_one).collect()
    };
    // deterministic accumulation in batch order regardless of scheduling
    let mut loss_acc = 0.0;
    let mut grad_acc: Option<Vec<Tensor>> = None;
    let count = batch.len() as f64;
    for r in results {
        let (loss, gs) = r?;
        loss_acc += loss;
        match &mut grad_acc {
            None => grad_acc = Some(gs),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&gs) {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
            }
        }
    }
    let mut grads = grad_acc.expect("non-empty batch");
    for g in &mut grads {
        for x in g.data_mut() {
            *x /= count;
        }
    }
    Ok((loss_acc / count, grads))
}

/// Trains the end-to-end model. Per iteration: sample a mini-batch, draw the
/// uplink SNR (fixed or from the configured set), average the negative-SE
/// loss, backpropagate, Adam step. History rows are recorded per epoch
/// (one pass worth of iterations over the training set).
pub fn train(
    train_set: &[ChannelSet],
    val_set: &[ChannelSet],
    arch: RisArch,
    cfg: &SystemConfig,
    workers: usize,
) -> CoreResult<TrainResult> {
    if train_set.is_empty() {
        return Err(CoreError::config("empty training dataset"));
    }
    let tr = &cfg.training;
    let mut store = super::init_params(cfg, arch, cfg.system.rng_seed)?;
    let hyper = AdamHyper {
        alpha: tr.lr,
        beta1: tr.beta1,
        beta2: tr.beta2,
        epsilon: tr.epsilon,
    };
    let mut adam = AdamState::new(hyper, &store.sizes());
    let mut rng = derive_rng(cfg.system.rng_seed, "train");
    let eval_snr = tr.snr_r_db.unwrap_or(10.0);
    let iters_per_epoch = train_set.len().div_ceil(tr.batch).max(1);
    let mut history = Vec::new();
    let mut epoch_loss = 0.0;
    let mut epoch_count = 0usize;
    let mut last_snr;

    for it in 0..tr.iterations {
        let snr = match tr.snr_r_db {
            Some(v) => v,
            None => tr.snr_r_set_db[rng.gen_range(0..tr.snr_r_set_db.len())],
        };
        last_snr = snr;
        let batch: Vec<(&ChannelSet, u64)> = (0..tr.batch)
            .map(|_| {
                let idx = rng.gen_range(0..train_set.len());
                (&train_set[idx], rng.gen::<u64>())
            })
            .collect();
        if tr.lr_decay_every > 0 {
            adam.hyper.alpha = tr.lr * 0.5f64.powi((it / tr.lr_decay_every) as i32);
        }
        let (loss, grads) = batch_grads(&batch, &store, arch, cfg, snr, workers)?;
        if !loss.is_finite() {
            return Err(CoreError::numeric(format!(
                "training diverged at iteration {it}: loss {loss}"
            )));
        }
        {
            let mut tensors: Vec<Tensor> = store
                .entries()
                .iter()
                .map(|(_, t)| t.clone())
                .collect();
            adam.step(&mut tensors, &grads)?;
            for ((_, slot), t) in store.entries_mut().iter_mut().zip(tensors) {
                *slot = t;
            }
        }
        epoch_loss += loss;
        epoch_count += 1;

        if (it + 1) % iters_per_epoch == 0 || it + 1 == tr.iterations {
            let epoch = history.len() + 1;
            let (val_loss, mean_se) = if val_set.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let mut acc = 0.0;
                for (i, ch) in val_set.iter().enumerate() {
                    acc += evaluate_se(ch, &store, arch, cfg, eval_snr, 0x5EED ^ i as u64)?;
                }
                let mean = acc / val_set.len() as f64;
                (-mean, mean)
            };
            history.push(HistoryRow {
                epoch,
                train_loss: epoch_loss / epoch_count as f64,
                val_loss,
                mean_se,
                snr_r_db: last_snr,
            });
            epoch_loss = 0.0;
            epoch_count = 0;
            log::info!(
                "epoch {epoch}: train_loss {:.4}, val_se {:.4}",
                history.last().unwrap().train_loss,
                history.last().unwrap().mean_se
            );
        }
    }

    Ok(TrainResult {
        store,
        adam,
        history,
        iterations: tr.iterations as u64,
    })
}

/// Serialized training state: parameter registry, Adam moments, iteration
/// counter, architecture and config hash.
pub struct Checkpoint {
    pub store: ParamStore,
    pub adam: AdamState,
    pub iterations: u64,
    pub arch: RisArch,
    pub config_hash: [u8; 32],
}

const CKPT_MAGIC: &[u8; 4] = b"RBK1";

fn arch_tag(arch: RisArch) -> u8 {
    match arch {
        RisArch::Classic => 0,
        RisArch::TtdRis => 1,
        RisArch::SaRis => 2,
        RisArch::Ideal => 3,
    }
}

fn arch_from_tag(tag: u8) -> CoreResult<RisArch> {
    Ok(match tag {
        0 => RisArch::Classic,
        1 => RisArch::TtdRis,
        2 => RisArch::SaRis,
        3 => RisArch::Ideal,
        other => return Err(CoreError::Format(format!("bad arch tag {other}"))),
    })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> CoreResult<()> {
    write_atomic(path, |w: &mut Writer<&mut Vec<u8>>| {
        w.bytes(CKPT_MAGIC)?;
        w.u16(1)?;
        w.bytes(&ckpt.config_hash)?;
        w.u64(ckpt.iterations)?;
        w.bytes(&[arch_tag(ckpt.arch)])?;
        let h = ckpt.adam.hyper;
        for v in [h.alpha, h.beta1, h.beta2, h.epsilon] {
            w.f64(v)?;
        }
        w.u64(ckpt.adam.t)?;
        w.u32(ckpt.store.entries().len() as u32)?;
        for (i, (name, t)) in ckpt.store.entries().iter().enumerate() {
            w.str16(name)?;
            w.bytes(&[t.shape().len() as u8])?;
            for &dim in t.shape() {
                w.u32(dim as u32)?;
            }
            for &v in t.data() {
                w.f64(v)?;
            }
            for &v in &ckpt.adam.m[i] {
                w.f64(v)?;
            }
            for &v in &ckpt.adam.v[i] {
                w.f64(v)?;
            }
        }
        Ok(())
    })
}

pub fn read_checkpoint(path: &Path) -> CoreResult<Checkpoint> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader::new(std::io::BufReader::new(file));
    if r.bytes(4)? != CKPT_MAGIC {
        return Err(CoreError::Format(format!(
            "bad checkpoint magic in {}",
            path.display()
        )));
    }
    if r.u16()? != 1 {
        return Err(CoreError::Format("unsupported checkpoint version".into()));
    }
    let config_hash: [u8; 32] = r.bytes(32)?.try_into().unwrap();
    let iterations = r.u64()?;
    let arch = arch_from_tag(r.bytes(1)?[0])?;
    let hyper = AdamHyper {
        alpha: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
    };
    let t = r.u64()?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    let mut m = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.str16()?;
        let ndim = r.bytes(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f64()?);
        }
        store.push(&name, Tensor::new(shape, data)?);
        let mut mi = Vec::with_capacity(numel);
        for _ in 0..numel {
            mi.push(r.f64()?);
        }
        let mut vi = Vec::with_capacity(numel);
        for _ in 0..numel {
            vi.push(r.f64()?);
        }
        m.push(mi);
        v.push(vi);
    }
    let adam = AdamState { hyper, t, m, v };
    Ok(Checkpoint {
        store,
        adam,
        iterations,
        arch,
        config_hash,
    })
}
