//! Learnable end-to-end pipeline: trainable pilot-stage combiners and RIS
//! schedules, polarized self-attention, the DFT-filtered shared network,
//! constraint-mapped sub-network heads, loss assembly and the training loop.

mod pipeline;
mod train;

pub use pipeline::{
    downlink_se_from_raw, e2e_forward, load_channels, psa_gates, realized_state,
    sa_group_of_element, ul_schedule_plain, ChannelConsts, DownlinkIds, ForwardOutput, ParamIds,
    ThetaIds,
};
pub use train::{
    evaluate_se, read_checkpoint, train, write_checkpoint, Checkpoint, HistoryRow, TrainResult,
};

use crate::autodiff::Tensor;
use crate::config::{RisArch, SystemConfig};
use crate::error::{CoreError, CoreResult};
use crate::scenario::derive_rng;
use rand::Rng;

/// Shape bookkeeping shared by the network builders.
#[derive(Debug, Clone, Copy)]
pub struct NetDims {
    pub b: usize,
    pub m: usize,
    pub u: usize,
    pub n: usize,
    pub m_rf: usize,
    pub n_s: usize,
    pub k: usize,
    pub p: usize,
    pub s: usize,
    pub q_tr: usize,
    /// Flattened time-spatial token axis, 2 M_RF Q_tr.
    pub t_tok: usize,
    /// Retained half-spectrum bins, Q_tr/2 + 1.
    pub qh: usize,
    pub bn: usize,
    pub upsilon: usize,
}

impl NetDims {
    pub fn from_config(cfg: &SystemConfig) -> CoreResult<NetDims> {
        let s = &cfg.system;
        if s.b % 2 != 0 {
            return Err(CoreError::config(format!(
                "the attention width is b/2; b must be even, got {}",
                s.b
            )));
        }
        Ok(NetDims {
            b: s.b,
            m: s.m,
            u: s.u,
            n: cfg.n_ris(),
            m_rf: s.m_rf,
            n_s: s.n_s,
            k: s.k_ttd,
            p: cfg.p_per_ttd(),
            s: cfg.s_subarrays(),
            q_tr: s.q_tr,
            t_tok: 2 * s.m_rf * s.q_tr,
            qh: s.q_tr / 2 + 1,
            bn: s.b * cfg.n_ris(),
            upsilon: cfg.training.upsilon,
        })
    }
}

/// Ordered registry of named trainable tensors. Registration order is fixed
/// by construction, which pins the Adam state and checkpoint layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, t: Tensor) {
        debug_assert!(self.index_of(name).is_none(), "duplicate param {name}");
        self.entries.push((name.to_string(), t));
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.entries
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let idx = self
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown param {name}"));
        &self.entries[idx].1
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.entries.iter().map(|(_, t)| t.numel()).collect()
    }

    pub fn total_len(&self) -> usize {
        self.sizes().iter().sum()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn linear_init(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let g = 1.0 / (fan_in as f64).sqrt();
    uniform(shape, -g, g, rng)
}

/// Builds and initializes every trainable tensor for the given architecture:
/// pilot-stage combiner phases and RIS schedule, PSA kernels, spectral
/// filter, MLP, output projection and the four beamforming heads.
pub fn init_params(cfg: &SystemConfig, arch: RisArch, seed: u64) -> CoreResult<ParamStore> {
    if arch == RisArch::Ideal {
        return Err(CoreError::config(
            "the ideal per-subcarrier relaxation is a benchmark-only architecture",
        ));
    }
    cfg.validate_arch(arch)?;
    let d = NetDims::from_config(cfg)?;
    let mut rng = derive_rng(seed, "net-init");
    let pi = std::f64::consts::PI;
    let mut store = ParamStore::new();

    // uplink channel-training stage
    store.push(
        "ul.combiner_phases",
        uniform(&[d.q_tr, d.b, d.m_rf, d.m], -pi, pi, &mut rng),
    );
    match arch {
        RisArch::Classic | RisArch::SaRis => {
            store.push("ul.ris_phases", uniform(&[d.q_tr, d.n], -pi, pi, &mut rng));
        }
        RisArch::TtdRis => {
            store.push("ul.ris_phases1", uniform(&[d.q_tr, d.n], -pi, pi, &mut rng));
            store.push("ul.ris_phases2", uniform(&[d.q_tr, d.n], -pi, pi, &mut rng));
            store.push("ul.ris_delay_logits", Tensor::zeros(&[d.q_tr, d.s]));
        }
        RisArch::Ideal => unreachable!(),
    }

    // polarized self-attention kernels (1x1 maps over the frequency axis)
    let half = d.b / 2;
    store.push("psa.wq_f", linear_init(&[1, d.b], d.b, &mut rng));
    store.push("psa.wv_f", linear_init(&[half, d.b], d.b, &mut rng));
    store.push("psa.wz_f", linear_init(&[d.b, half], half, &mut rng));
    store.push("psa.wq_t", linear_init(&[half, d.b], d.b, &mut rng));
    store.push("psa.wv_t", linear_init(&[half, d.b], d.b, &mut rng));

    // signal-guided shared network: neutral spectral filter, MLP, projection
    store.push("shared.psi_re", Tensor::ones(&[d.b, 2 * d.m_rf, d.qh]));
    store.push("shared.psi_im", Tensor::zeros(&[d.b, 2 * d.m_rf, d.qh]));
    store.push(
        "shared.w1",
        linear_init(&[d.b, d.upsilon * d.b], d.b, &mut rng),
    );
    store.push(
        "shared.w2",
        linear_init(&[d.upsilon * d.b, d.b], d.upsilon * d.b, &mut rng),
    );
    store.push("shared.proj", linear_init(&[d.t_tok, d.n], d.t_tok, &mut rng));

    // beamforming heads (linear layers from the flattened shared feature)
    let head = |store: &mut ParamStore, name: &str, out: usize, rng: &mut rand_chacha::ChaCha12Rng| {
        store.push(&format!("head.{name}.w"), linear_init(&[d.bn, out], d.bn, rng));
        store.push(&format!("head.{name}.b"), Tensor::zeros(&[out]));
    };
    match arch {
        RisArch::Classic | RisArch::SaRis => {
            head(&mut store, "theta", d.n, &mut rng);
        }
        RisArch::TtdRis => {
            head(&mut store, "theta1", d.n, &mut rng);
            head(&mut store, "theta2", d.n, &mut rng);
            head(&mut store, "nu", d.s, &mut rng);
        }
        RisArch::Ideal => unreachable!(),
    }
    head(&mut store, "fps", d.m, &mut rng);
    head(&mut store, "ttd", d.m_rf * d.k, &mut rng);
    head(&mut store, "fbb", d.b * d.m_rf * d.n_s * 2, &mut rng);

    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::desk_default();
        cfg.system.m = 4;
        cfg.system.u = 1;
        cfg.system.n1 = 2;
        cfg.system.n2 = 2;
        cfg.system.m_rf = 2;
        cfg.system.n_s = 1;
        cfg.system.k_ttd = 2;
        cfg.system.s1 = 2;
        cfg.system.s2 = 1;
        cfg.system.b = 2;
        cfg.system.q_tr = 4;
        cfg.system.q_block = 64;
        cfg
    }

    #[test]
    fn init_is_deterministic_and_ordered() {
        let cfg = tiny_cfg();
        let a = init_params(&cfg, RisArch::TtdRis, 7).unwrap();
        let b = init_params(&cfg, RisArch::TtdRis, 7).unwrap();
        assert_eq!(a, b);
        let names: Vec<&str> = a.entries().iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names[0], "ul.combiner_phases");
        assert!(names.contains(&"head.fbb.w"));
    }

    #[test]
    fn psi_starts_neutral_and_delays_centered() {
        let cfg = tiny_cfg();
        let st = init_params(&cfg, RisArch::Classic, 3).unwrap();
        assert!(st.get("shared.psi_re").data().iter().all(|&v| v == 1.0));
        assert!(st.get("shared.psi_im").data().iter().all(|&v| v == 0.0));
        assert!(st.get("head.fps.b").data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn odd_b_is_rejected() {
        let mut cfg = tiny_cfg();
        cfg.system.b = 3;
        assert!(init_params(&cfg, RisArch::Classic, 1).is_err());
    }

    #[test]
    fn ideal_arch_is_rejected() {
        let cfg = tiny_cfg();
        assert!(init_params(&cfg, RisArch::Ideal, 1).is_err());
    }
}
