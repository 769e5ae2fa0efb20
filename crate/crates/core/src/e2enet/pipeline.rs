//! Tape-built forward pass: pilot observation with trainable combiners and
//! RIS schedule, complex-to-real stacking, polarized self-attention, the
//! DFT-filtered shared network, constraint-mapped heads and the downlink
//! effective spectral efficiency.

use super::{NetDims, ParamStore};
use crate::autodiff::complex::{
    cadd, cexp_j, chermitian, cmatmul, cmul, cnorm_sq, const_complex_matrix, creshape,
    cscale, cscale_real, ctranspose, logdet_hpd, Ct,
};
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::beamform::{RawBeamformer, RawRis, NORM_FLOOR_SQ};
use crate::channel::ChannelSet;
use crate::config::{RisArch, SystemConfig};
use crate::error::{CoreError, CoreResult};
use crate::rate::CombinerSchedule;
use crate::scenario::derive_rng;
use ndarray::{Array2, Array3, Array4};
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;

/// Per-subcarrier channel constants loaded onto a tape.
pub struct ChannelConsts {
    pub h: Vec<Ct>,
    pub g: Vec<Ct>,
    pub d: Vec<Ct>,
}

pub fn load_channels(tape: &mut Tape, channels: &ChannelSet) -> ChannelConsts {
    ChannelConsts {
        h: channels.h.iter().map(|m| const_complex_matrix(tape, m)).collect(),
        g: channels.g.iter().map(|m| const_complex_matrix(tape, m)).collect(),
        d: channels.d.iter().map(|m| const_complex_matrix(tape, m)).collect(),
    }
}

/// Raw downlink beamformer tensors on the tape.
pub struct DownlinkIds {
    /// PS phases, shape (M).
    pub fps_phases: NodeId,
    /// TTD delay logits, shape (M_RF, K).
    pub ttd_logits: NodeId,
    /// Digital beamformer before normalization, shape (B, M_RF, N_s, 2).
    pub fbb_raw: NodeId,
    pub theta: ThetaIds,
}

pub enum ThetaIds {
    /// Frequency-flat phases, shape (N) (classic and SA-RIS).
    Flat { phases: NodeId },
    /// Double phase layer plus per-subarray delay logits, shapes (N),(N),(S).
    Ttd {
        phases1: NodeId,
        phases2: NodeId,
        nu_logits: NodeId,
    },
    /// Test-only relaxation: per-subcarrier phases, shape (B, N).
    Ideal { phases: NodeId },
}

/// Expands per-subarray values (.., S) onto elements (.., N) following the
/// (S1, S2) partition of the panel, via reshape + broadcast.
fn expand_subarrays(
    tape: &mut Tape,
    nu: NodeId,
    lead: Option<usize>,
    cfg: &SystemConfig,
) -> CoreResult<NodeId> {
    let s1 = cfg.system.s1;
    let s2 = cfg.system.s2;
    let (sbar1, sbar2) = cfg.sbar();
    let n = cfg.n_ris();
    let (reshaped, ones_shape, out_shape) = match lead {
        Some(q) => (
            vec![q, s1, 1, s2, 1],
            vec![q, s1, sbar1, s2, sbar2],
            vec![q, n],
        ),
        None => (vec![s1, 1, s2, 1], vec![s1, sbar1, s2, sbar2], vec![n]),
    };
    let r = tape.reshape(nu, &reshaped)?;
    let ones = tape.constant(Tensor::ones(&ones_shape));
    let e = tape.hadamard(r, ones)?;
    tape.reshape(e, &out_shape)
}

/// Delay logits -> realized delays in [0, t_max] on the tape.
fn realize_delays(tape: &mut Tape, logits: NodeId, t_max: f64) -> NodeId {
    let s = tape.sigmoid(logits);
    tape.scale(s, t_max)
}

/// Per-subcarrier RIS reflection phases on the tape, shape (N) (or the given
/// leading slot axis). Returns the phase tensor; coefficients are exp(j .).
fn theta_phase_at(
    tape: &mut Tape,
    theta: &ThetaIds,
    b: usize,
    cfg: &SystemConfig,
) -> CoreResult<NodeId> {
    match theta {
        ThetaIds::Flat { phases } => Ok(*phases),
        ThetaIds::Ttd {
            phases1,
            phases2,
            nu_logits,
        } => {
            let pp = tape.add(*phases1, *phases2)?;
            let nu = realize_delays(tape, *nu_logits, cfg.system.t_max_s);
            let nu_n = expand_subarrays(tape, nu, None, cfg)?;
            let f_b = cfg.subcarrier_hz(b + 1);
            let ramp = tape.scale(nu_n, -2.0 * std::f64::consts::PI * f_b);
            tape.add(pp, ramp)
        }
        ThetaIds::Ideal { phases } => {
            let row = tape.slice(*phases, 0, b, 1)?;
            let n = cfg.n_ris();
            tape.reshape(row, &[n])
        }
    }
}

/// Downlink spectral-efficiency head shared by the E2E model and the
/// perfect-CSI optimizer: applies the constraint maps to the raw tensors,
/// forms per-subcarrier rates and the overhead-discounted effective SE.
/// Returns (effective SE node, sum-rate node).
pub fn downlink_se_from_raw(
    tape: &mut Tape,
    ch: &ChannelConsts,
    ids: &DownlinkIds,
    cfg: &SystemConfig,
) -> CoreResult<(NodeId, NodeId)> {
    let s = &cfg.system;
    let (m, m_rf, k, p, n_s) = (s.m, s.m_rf, s.k_ttd, cfg.p_per_ttd(), s.n_s);
    let rho = cfg.rho();
    let c_rate = s.p_t_w / (n_s as f64 * s.sigma0_sq_w);

    let delays = realize_delays(tape, ids.ttd_logits, s.t_max_s);
    let fps = cexp_j(tape, ids.fps_phases);
    let fps_col = Ct {
        re: tape.reshape(fps.re, &[m, 1])?,
        im: tape.reshape(fps.im, &[m, 1])?,
    };

    // expand per-TTD delays onto antennas: (M_RF, K) -> (M, M_RF)
    let d3 = tape.reshape(delays, &[m_rf, k, 1])?;
    let ones = tape.constant(Tensor::ones(&[m_rf, k, p]));
    let dexp = tape.hadamard(d3, ones)?;
    let dant = tape.reshape(dexp, &[m_rf, m])?;
    let dant_t = tape.transpose(dant, &[1, 0])?;

    let eye_u = {
        let eye: Array2<num_complex::Complex64> = Array2::eye(s.u);
        const_complex_matrix(tape, &eye)
    };

    let mut rate_nodes = Vec::with_capacity(s.b);
    for b in 0..s.b {
        let f_b = cfg.subcarrier_hz(b + 1);
        // analog chain: A = diag(e^{j phi}) (E_b F_BB), E_b[m, rf] = e^{-j 2 pi f_b t}
        let phase = tape.scale(dant_t, -2.0 * std::f64::consts::PI * f_b);
        let e_b = cexp_j(tape, phase);
        let fbb_b = {
            let row = tape.slice(ids.fbb_raw, 0, b, 1)?;
            let rs = tape.reshape(row, &[m_rf, n_s, 2])?;
            let re = tape.slice(rs, 2, 0, 1)?;
            let im = tape.slice(rs, 2, 1, 1)?;
            Ct {
                re: tape.reshape(re, &[m_rf, n_s])?,
                im: tape.reshape(im, &[m_rf, n_s])?,
            }
        };
        let inner = cmatmul(tape, e_b, fbb_b)?;
        let a_pre = cmul(tape, fps_col, inner)?;
        // power normalization to ||A||_F^2 = rho (floor keeps the map total)
        let n2 = cnorm_sq(tape, a_pre)?;
        let floor = tape.constant(Tensor::scalar(NORM_FLOOR_SQ));
        let n2f = tape.add(n2, floor)?;
        let inv = tape.recip(n2f);
        let scaled = tape.scale(inv, rho);
        let factor = tape.sqrt(scaled);
        let a_b = cscale_real(tape, a_pre, factor)?;

        // composite channel and per-subcarrier rate
        let phases = theta_phase_at(tape, &ids.theta, b, cfg)?;
        let theta = cexp_j(tape, phases);
        let ht = cmul(tape, ch.h[b], theta)?;
        let hg = cmatmul(tape, ht, ch.g[b])?;
        let z_b = cadd(tape, hg, ch.d[b])?;
        let za = cmatmul(tape, z_b, a_b)?;
        let zah = chermitian(tape, za)?;
        let gram = cmatmul(tape, za, zah)?;
        let gram_c = cscale(tape, gram, c_rate);
        let arg = cadd(tape, eye_u, gram_c)?;
        rate_nodes.push(logdet_hpd(tape, arg)?);
    }

    let mut sum_rate = rate_nodes[0];
    for &r in &rate_nodes[1..] {
        sum_rate = tape.add(sum_rate, r)?;
    }
    let prefactor = (s.q_block as f64 - s.q_tr as f64)
        / (s.q_block as f64 * (s.l_cp as f64 + s.b as f64));
    let se = tape.scale(sum_rate, prefactor);
    Ok((se, sum_rate))
}

/// Resolved tape ids of every registered parameter, by name.
pub struct ParamIds {
    map: HashMap<String, NodeId>,
    pub ordered: Vec<NodeId>,
}

impl ParamIds {
    pub fn register(tape: &mut Tape, store: &ParamStore) -> ParamIds {
        let mut map = HashMap::new();
        let mut ordered = Vec::new();
        for (name, tensor) in store.entries() {
            let id = tape.param(name, tensor.clone());
            map.insert(name.clone(), id);
            ordered.push(id);
        }
        ParamIds { map, ordered }
    }

    pub fn get(&self, name: &str) -> NodeId {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("unknown param {name}"))
    }

    pub fn has(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }
}

/// Uplink pilot stage on the tape. Returns the real-stacked observation
/// (B, 2 M_RF, Q_tr); the noise power is placed on the tape so the target
/// receive SNR is met exactly for the current combiners and schedule.
fn uplink_forward(
    tape: &mut Tape,
    ch: &ChannelConsts,
    ids: &ParamIds,
    arch: RisArch,
    cfg: &SystemConfig,
    d: &NetDims,
    snr_r_db: f64,
    noise_seed: u64,
) -> CoreResult<NodeId> {
    // per-slot reflection phases (Q_tr, N)
    let base_phase = match arch {
        RisArch::Classic | RisArch::SaRis => ids.get("ul.ris_phases"),
        RisArch::TtdRis => {
            let p1 = ids.get("ul.ris_phases1");
            let p2 = ids.get("ul.ris_phases2");
            tape.add(p1, p2)?
        }
        RisArch::Ideal => unreachable!(),
    };
    let nu_n = if arch == RisArch::TtdRis {
        let nu = realize_delays(tape, ids.get("ul.ris_delay_logits"), cfg.system.t_max_s);
        Some(expand_subarrays(tape, nu, Some(d.q_tr), cfg)?)
    } else {
        None
    };

    let w_raw = ids.get("ul.combiner_phases");
    let pilot = {
        let ones: Array2<num_complex::Complex64> =
            Array2::from_elem((d.u, 1), num_complex::Complex64::new(1.0, 0.0));
        const_complex_matrix(tape, &ones)
    };

    let mut slices_re = Vec::with_capacity(d.b);
    let mut slices_im = Vec::with_capacity(d.b);
    let mut energy: Option<NodeId> = None;
    for b in 0..d.b {
        let phase_b = match nu_n {
            Some(nu) => {
                let f_b = cfg.subcarrier_hz(b + 1);
                let ramp = tape.scale(nu, -2.0 * std::f64::consts::PI * f_b);
                tape.add(base_phase, ramp)?
            }
            None => base_phase,
        };
        let theta = cexp_j(tape, phase_b);
        let theta3 = creshape(tape, theta, &[d.q_tr, 1, d.n])?;
        let ht = cmul(tape, ch.h[b], theta3)?; // (Q_tr, U, N)
        let hg = cmatmul(tape, ht, ch.g[b])?; // (Q_tr, U, M)
        let z = cadd(tape, hg, ch.d[b])?;
        let zt = ctranspose(tape, z, &[0, 2, 1])?; // (Q_tr, M, U)
        let w_b = {
            let sl = tape.slice(w_raw, 1, b, 1)?;
            let rs = tape.reshape(sl, &[d.q_tr, d.m_rf, d.m])?;
            let e = cexp_j(tape, rs);
            cscale(tape, e, 1.0 / (d.m as f64).sqrt())
        };
        let r_b = cmatmul(tape, w_b, zt)?; // (Q_tr, M_RF, U)
        let e_b = cnorm_sq(tape, r_b)?;
        energy = Some(match energy {
            Some(acc) => tape.add(acc, e_b)?,
            None => e_b,
        });
        let y_b = cmatmul(tape, r_b, pilot)?; // (Q_tr, M_RF, 1)
        let y2 = creshape(tape, y_b, &[d.q_tr, d.m_rf])?;
        let yt = ctranspose(tape, y2, &[1, 0])?; // (M_RF, Q_tr)
        let y3 = creshape(tape, yt, &[1, d.m_rf, d.q_tr])?;
        slices_re.push(y3.re);
        slices_im.push(y3.im);
    }
    let y_re = tape.concat(&slices_re, 0)?; // (B, M_RF, Q_tr)
    let y_im = tape.concat(&slices_im, 0)?;

    // sigma^2 = mean ||W Z^T||_F^2 / SNR, then unit noise scaled by sigma
    let mean = tape.scale(
        energy.expect("at least one subcarrier"),
        1.0 / (d.q_tr as f64 * d.b as f64),
    );
    let sigma_sq = tape.scale(mean, 10f64.powf(-snr_r_db / 10.0));
    let sigma = tape.sqrt(sigma_sq);
    let mut rng = derive_rng(noise_seed, "pilot-noise");
    let shape = [d.b, d.m_rf, d.q_tr];
    let mut draw = || {
        let n: usize = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v / 2f64.sqrt()
                })
                .collect(),
        )
        .unwrap()
    };
    let noise_re = draw();
    let noise_im = draw();
    let nre = tape.constant(noise_re);
    let nim = tape.constant(noise_im);
    let noise = Ct { re: nre, im: nim };
    let scaled_noise = cscale_real(tape, noise, sigma)?;
    let y_noisy = cadd(
        tape,
        Ct { re: y_re, im: y_im },
        scaled_noise,
    )?;

    // complex-to-real stack along the antenna axis
    tape.concat(&[y_noisy.re, y_noisy.im], 1)
}

/// The two PSA gates: the frequency gate (B, 1, 1) and the time-spatial gate
/// (1, 2 M_RF, Q_tr).
pub fn psa_gates(
    tape: &mut Tape,
    y: NodeId,
    ids: &ParamIds,
    d: &NetDims,
) -> CoreResult<(NodeId, NodeId)> {
    let ymat = tape.reshape(y, &[d.b, d.t_tok])?;
    // frequency branch: channel gate
    let v = tape.matmul(ids.get("psa.wv_f"), ymat)?; // (B/2, T)
    let q = tape.matmul(ids.get("psa.wq_f"), ymat)?; // (1, T)
    let qs = tape.softmax_last(q)?;
    let qst = tape.transpose(qs, &[1, 0])?; // (T, 1)
    let att = tape.matmul(v, qst)?; // (B/2, 1)
    let z = tape.matmul(ids.get("psa.wz_f"), att)?; // (B, 1)
    let xf_flat = tape.sigmoid(z);
    let xf = tape.reshape(xf_flat, &[d.b, 1, 1])?;
    // time-spatial branch: token gate
    let f = tape.matmul(ids.get("psa.wq_t"), ymat)?; // (B/2, T)
    let gap = tape.mean_pool(f, &[1])?; // (B/2, 1)
    let gapt = tape.transpose(gap, &[1, 0])?; // (1, B/2)
    let gs = tape.softmax_last(gapt)?;
    let v2 = tape.matmul(ids.get("psa.wv_t"), ymat)?; // (B/2, T)
    let mixed = tape.matmul(gs, v2)?; // (1, T)
    let xt_flat = tape.sigmoid(mixed);
    let xt = tape.reshape(xt_flat, &[1, 2 * d.m_rf, d.q_tr])?;
    Ok((xf, xt))
}

fn psa_forward(tape: &mut Tape, y: NodeId, ids: &ParamIds, d: &NetDims) -> CoreResult<NodeId> {
    let (xf, xt) = psa_gates(tape, y, ids, d)?;
    let cf = tape.hadamard(xf, y)?;
    let ct = tape.hadamard(xt, y)?;
    tape.add(cf, ct)
}

/// Shared network: per-frequency 2-D DFT, half-spectrum filter, inverse,
/// frequency-mixing MLP with residual, projection to (B, N).
fn shared_net_forward(
    tape: &mut Tape,
    omega: NodeId,
    ids: &ParamIds,
    d: &NetDims,
) -> CoreResult<NodeId> {
    let spec = tape.dft2_half(omega)?; // (B, 2M_RF, Qh, 2)
    let rows = 2 * d.m_rf;
    let fre = {
        let s = tape.slice(spec, 3, 0, 1)?;
        tape.reshape(s, &[d.b, rows, d.qh])?
    };
    let fim = {
        let s = tape.slice(spec, 3, 1, 1)?;
        tape.reshape(s, &[d.b, rows, d.qh])?
    };
    let psi_re = ids.get("shared.psi_re");
    let psi_im = ids.get("shared.psi_im");
    let rr = tape.hadamard(fre, psi_re)?;
    let ii = tape.hadamard(fim, psi_im)?;
    let ri = tape.hadamard(fre, psi_im)?;
    let ir = tape.hadamard(fim, psi_re)?;
    let out_re = tape.sub(rr, ii)?;
    let out_im = tape.add(ri, ir)?;
    let out_re4 = tape.reshape(out_re, &[d.b, rows, d.qh, 1])?;
    let out_im4 = tape.reshape(out_im, &[d.b, rows, d.qh, 1])?;
    let filtered = tape.concat(&[out_re4, out_im4], 3)?;
    let back = tape.idft2_half(filtered, d.q_tr)?; // (B, 2M_RF, Q_tr)

    // frequency-mixing MLP over the B axis with residual
    let fm = tape.reshape(back, &[d.b, d.t_tok])?;
    let ft = tape.transpose(fm, &[1, 0])?; // (T, B)
    let h = tape.matmul(ft, ids.get("shared.w1"))?;
    let hg = tape.gelu(h);
    let h2 = tape.matmul(hg, ids.get("shared.w2"))?;
    let mixed = tape.add(h2, ft)?;
    let amat = tape.transpose(mixed, &[1, 0])?; // (B, T)
    tape.matmul(amat, ids.get("shared.proj")) // (B, N)
}

/// One linear head from the flattened shared feature.
fn head_forward(
    tape: &mut Tape,
    flat: NodeId,
    ids: &ParamIds,
    name: &str,
    out_len: usize,
) -> CoreResult<NodeId> {
    let w = ids.get(&format!("head.{name}.w"));
    let b = ids.get(&format!("head.{name}.b"));
    let y = tape.matmul(flat, w)?;
    let yb = tape.add(y, b)?;
    tape.reshape(yb, &[out_len])
}

/// Sub-network heads: raw tensors for the RIS phases, PS phases, TTD delay
/// logits and the digital beamformer.
fn subnets_forward(
    tape: &mut Tape,
    phi: NodeId,
    ids: &ParamIds,
    arch: RisArch,
    d: &NetDims,
) -> CoreResult<DownlinkIds> {
    let flat = tape.reshape(phi, &[1, d.bn])?;
    let theta = match arch {
        RisArch::Classic | RisArch::SaRis => ThetaIds::Flat {
            phases: head_forward(tape, flat, ids, "theta", d.n)?,
        },
        RisArch::TtdRis => ThetaIds::Ttd {
            phases1: head_forward(tape, flat, ids, "theta1", d.n)?,
            phases2: head_forward(tape, flat, ids, "theta2", d.n)?,
            nu_logits: head_forward(tape, flat, ids, "nu", d.s)?,
        },
        RisArch::Ideal => unreachable!(),
    };
    let fps_phases = head_forward(tape, flat, ids, "fps", d.m)?;
    let ttd_flat = head_forward(tape, flat, ids, "ttd", d.m_rf * d.k)?;
    let ttd_logits = tape.reshape(ttd_flat, &[d.m_rf, d.k])?;
    let fbb_flat = head_forward(tape, flat, ids, "fbb", d.b * d.m_rf * d.n_s * 2)?;
    let fbb_raw = tape.reshape(fbb_flat, &[d.b, d.m_rf, d.n_s, 2])?;
    Ok(DownlinkIds {
        fps_phases,
        ttd_logits,
        fbb_raw,
        theta,
    })
}

/// Complete forward pass for one scenario.
pub struct ForwardOutput {
    pub tape: Tape,
    /// Scalar loss node, the negative effective SE.
    pub loss: NodeId,
    pub se: NodeId,
    /// Parameter node ids in `ParamStore` order.
    pub param_ids: Vec<NodeId>,
}

impl ForwardOutput {
    pub fn se_value(&self) -> f64 {
        self.tape.value(self.se).item()
    }
}

/// Builds the full pipeline on a fresh tape:
/// uplink observation -> real stack -> PSA -> shared net -> heads ->
/// per-subcarrier rates -> effective SE; loss = -SE.
pub fn e2e_forward(
    channels: &ChannelSet,
    store: &ParamStore,
    arch: RisArch,
    cfg: &SystemConfig,
    snr_r_db: f64,
    noise_seed: u64,
) -> CoreResult<ForwardOutput> {
    let d = NetDims::from_config(cfg)?;
    let mut tape = Tape::new();
    let ids = ParamIds::register(&mut tape, store);
    let ch = load_channels(&mut tape, channels);
    let stacked = uplink_forward(&mut tape, &ch, &ids, arch, cfg, &d, snr_r_db, noise_seed)?;
    let omega = psa_forward(&mut tape, stacked, &ids, &d)?;
    let phi = shared_net_forward(&mut tape, omega, &ids, &d)?;
    let dl = subnets_forward(&mut tape, phi, &ids, arch, &d)?;
    let (se, _) = downlink_se_from_raw(&mut tape, &ch, &dl, cfg)?;
    let loss = tape.scale(se, -1.0);
    let ordered = ids.ordered.clone();
    Ok(ForwardOutput {
        tape,
        loss,
        se,
        param_ids: ordered,
    })
}

/// Realizes the uplink schedule of a parameter store through the plain
/// (non-tape) projection maps. Used to cross-check the tape path and to
/// drive the reference pilot simulator.
pub fn ul_schedule_plain(
    store: &ParamStore,
    arch: RisArch,
    cfg: &SystemConfig,
) -> CoreResult<(Vec<crate::beamform::RisState>, CombinerSchedule)> {
    use crate::beamform::RisState;
    let d = NetDims::from_config(cfg)?;
    let n = d.n;
    let mut states = Vec::with_capacity(d.q_tr);
    for q in 0..d.q_tr {
        let state = match arch {
            RisArch::Classic => RisState::Classic {
                phases: store.get("ul.ris_phases").data()[q * n..(q + 1) * n].to_vec(),
            },
            RisArch::SaRis => RisState::SaRis {
                phases: store.get("ul.ris_phases").data()[q * n..(q + 1) * n].to_vec(),
            },
            RisArch::TtdRis => {
                let s_count = d.s;
                let logits = &store.get("ul.ris_delay_logits").data()
                    [q * s_count..(q + 1) * s_count];
                RisState::TtdRis {
                    phases1: store.get("ul.ris_phases1").data()[q * n..(q + 1) * n].to_vec(),
                    phases2: store.get("ul.ris_phases2").data()[q * n..(q + 1) * n].to_vec(),
                    delays: logits
                        .iter()
                        .map(|&x| cfg.system.t_max_s * crate::beamform::sigmoid(x))
                        .collect(),
                }
            }
            RisArch::Ideal => {
                return Err(CoreError::config("ideal arch has no uplink schedule"))
            }
        };
        states.push(state);
    }
    let raw = store.get("ul.combiner_phases");
    let raw4 = Array4::from_shape_fn((d.q_tr, d.b, d.m_rf, d.m), |(q, b, rf, m)| {
        raw.data()[((q * d.b + b) * d.m_rf + rf) * d.m + m]
    });
    Ok((states, crate::rate::realize_combiners(&raw4)))
}

/// Extracts the realized downlink beamformer of a trained model by running
/// the network forward and projecting the raw head outputs through the plain
/// constraint maps.
pub fn realized_state(
    channels: &ChannelSet,
    store: &ParamStore,
    arch: RisArch,
    cfg: &SystemConfig,
    snr_r_db: f64,
    noise_seed: u64,
) -> CoreResult<crate::beamform::BeamformerState> {
    let d = NetDims::from_config(cfg)?;
    let mut tape = Tape::new();
    let ids = ParamIds::register(&mut tape, store);
    let ch = load_channels(&mut tape, channels);
    let stacked = uplink_forward(&mut tape, &ch, &ids, arch, cfg, &d, snr_r_db, noise_seed)?;
    let omega = psa_forward(&mut tape, stacked, &ids, &d)?;
    let phi = shared_net_forward(&mut tape, omega, &ids, &d)?;
    let dl = subnets_forward(&mut tape, phi, &ids, arch, &d)?;
    let grab = |tape: &Tape, id: NodeId| tape.value(id).data().to_vec();
    let ris = match &dl.theta {
        ThetaIds::Flat { phases } => match arch {
            RisArch::SaRis => RawRis::SaRis {
                phases: grab(&tape, *phases),
            },
            _ => RawRis::Classic {
                phases: grab(&tape, *phases),
            },
        },
        ThetaIds::Ttd {
            phases1,
            phases2,
            nu_logits,
        } => RawRis::TtdRis {
            phases1: grab(&tape, *phases1),
            phases2: grab(&tape, *phases2),
            delay_logits: grab(&tape, *nu_logits),
        },
        ThetaIds::Ideal { phases } => RawRis::Ideal {
            phases: Array2::from_shape_fn((d.b, d.n), |(b, i)| {
                tape.value(*phases).data()[b * d.n + i]
            }),
        },
    };
    let ttd = tape.value(dl.ttd_logits);
    let fbb = tape.value(dl.fbb_raw);
    let raw = RawBeamformer {
        ps_phases: grab(&tape, dl.fps_phases),
        ttd_logits: Array2::from_shape_fn((d.m_rf, d.k), |(rf, kk)| {
            ttd.data()[rf * d.k + kk]
        }),
        digital_re: Array3::from_shape_fn((d.b, d.m_rf, d.n_s), |(b, rf, ns)| {
            fbb.data()[((b * d.m_rf + rf) * d.n_s + ns) * 2]
        }),
        digital_im: Array3::from_shape_fn((d.b, d.m_rf, d.n_s), |(b, rf, ns)| {
            fbb.data()[((b * d.m_rf + rf) * d.n_s + ns) * 2 + 1]
        }),
        ris,
    };
    crate::beamform::project_constraints(&raw, cfg)
}


/// Element-to-subarray bijection used by the SA-RIS head: panel element j
/// (0-based, n1-major order) belongs to virtual group floor(j B / N) when the
/// partition is contiguous, which the config guarantees via B | N.
pub fn sa_group_of_element(j: usize, cfg: &SystemConfig) -> usize {
    j * cfg.system.b / cfg.n_ris()
}
