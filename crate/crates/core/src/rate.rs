//! Downlink/uplink signal models, per-subcarrier achievable rate and the
//! overhead-discounted effective spectral efficiency.

use crate::beamform::RisState;
use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::error::{CoreError, CoreResult};
use ndarray::{Array1, Array2, Array3, Array4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Link power bookkeeping. SNR_T = 10 log10(P_t / sigma0^2); the noise power
/// is equal across subcarriers.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    pub p_t_w: f64,
    pub sigma_b_sq_w: Vec<f64>,
}

impl LinkBudget {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        LinkBudget {
            p_t_w: cfg.system.p_t_w,
            sigma_b_sq_w: vec![cfg.system.sigma0_sq_w; cfg.system.b],
        }
    }
    pub fn snr_t_db(&self) -> f64 {
        10.0 * (self.p_t_w / self.sigma_b_sq_w[0]).log10()
    }
}

/// Composite downlink channel Z_b = H_b diag(theta) G_b + D_b.
pub fn effective_channel(
    h_b: &Array2<Complex64>,
    ris_diag: &[Complex64],
    g_b: &Array2<Complex64>,
    d_b: &Array2<Complex64>,
) -> Array2<Complex64> {
    let mut ht = h_b.clone();
    for (mut col, &theta) in ht.columns_mut().into_iter().zip(ris_diag.iter()) {
        col.mapv_inplace(|z| z * theta);
    }
    ht.dot(g_b) + d_b
}

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
fn cholesky_hermitian(a: &Array2<Complex64>) -> CoreResult<Array2<Complex64>> {
    let n = a.dim().0;
    if a.dim().1 != n {
        return Err(CoreError::dim("cholesky needs a square matrix"));
    }
    let mut l: Array2<Complex64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            if i == j {
                let v = acc.re;
                if !(v > 0.0) || acc.im.abs() > 1e-8 * v.abs().max(1.0) {
                    return Err(CoreError::numeric("matrix is not positive definite"));
                }
                l[(i, j)] = Complex64::new(v.sqrt(), 0.0);
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// log2 det of a Hermitian positive definite matrix via Cholesky.
pub fn log2_det_hpd(a: &Array2<Complex64>) -> CoreResult<f64> {
    let l = cholesky_hermitian(a)?;
    let mut acc = 0.0;
    for i in 0..a.dim().0 {
        acc += l[(i, i)].re.ln();
    }
    Ok(2.0 * acc / std::f64::consts::LN_2)
}

/// Achievable rate at one subcarrier:
/// log2 det(I_U + P_t/(N_s sigma^2) Z A A^H Z^H), bits/s/Hz.
pub fn subcarrier_rate(
    z_b: &Array2<Complex64>,
    a_b: &Array2<Complex64>,
    p_t: f64,
    sigma_sq: f64,
    n_s: usize,
) -> CoreResult<f64> {
    if !(sigma_sq > 0.0) {
        return Err(CoreError::numeric("sigma_sq must be > 0"));
    }
    if z_b.iter().chain(a_b.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CoreError::numeric("non-finite input to subcarrier_rate"));
    }
    let u = z_b.dim().0;
    let za = z_b.dot(a_b);
    let c = p_t / (n_s as f64 * sigma_sq);
    let mut gram: Array2<Complex64> = Array2::eye(u);
    let cols = za.dim().1;
    for i in 0..u {
        for j in 0..u {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..cols {
                acc += za[(i, k)] * za[(j, k)].conj();
            }
            gram[(i, j)] += c * acc;
        }
    }
    log2_det_hpd(&gram)
}

/// Effective spectral efficiency: the sum rate discounted by the training and
/// cyclic-prefix overheads, ((Q - Q_tr) / (Q (L_CP + B))) * sum_b R_b.
pub fn effective_se(rates: &[f64], q: usize, q_tr: usize, l_cp: usize, b: usize) -> f64 {
    let prefactor =
        (q as f64 - q_tr as f64) / (q as f64 * (l_cp as f64 + b as f64));
    prefactor * rates.iter().sum::<f64>()
}

/// Downlink receive wrapper: sqrt(P_t) Z_b A_b s_b + n.
pub fn downlink_receive(
    z_b: &Array2<Complex64>,
    a_b: &Array2<Complex64>,
    s_b: &Array1<Complex64>,
    noise: &Array1<Complex64>,
    p_t: f64,
) -> Array1<Complex64> {
    let x = a_b.dot(s_b);
    z_b.dot(&x).mapv(|v| v * p_t.sqrt()) + noise
}

/// Stacked pilot observation (B, M_RF, Q_tr), complex.
pub type Observation = Array3<Complex64>;
/// Real-stacked observation (B, 2 M_RF, Q_tr).
pub type ObservationTensor = Array3<f64>;

/// Per-slot per-subcarrier uplink combiners, (Q_tr, B, M_RF, M).
pub type CombinerSchedule = Array4<Complex64>;

/// Realizes the constant-modulus combiner map W = exp(j raw) / sqrt(M).
pub fn realize_combiners(raw: &Array4<f64>) -> CombinerSchedule {
    let m = raw.dim().3 as f64;
    raw.mapv(|p| Complex64::from_polar(1.0 / m.sqrt(), p))
}

/// Simulates the uplink pilot stage. The uplink channel at slot q, subcarrier
/// b is the transpose of the downlink composite (TDD reciprocity):
/// Y_{q,b} = W_{q,b} (H_b Theta_q G_b + D_b)^T X_{q,b} + n.
pub fn uplink_pilot_observe(
    channels: &ChannelSet,
    ris_schedule: &[RisState],
    combiners: &CombinerSchedule,
    pilots: &Array3<Complex64>,
    sigma_sq: f64,
    cfg: &SystemConfig,
    rng: &mut impl Rng,
) -> CoreResult<Observation> {
    let s = &cfg.system;
    let (q_tr, b_count, m_rf, m) = combiners.dim();
    if q_tr != ris_schedule.len() || b_count != s.b || m != s.m {
        return Err(CoreError::dim("combiner schedule shape mismatch"));
    }
    if pilots.dim() != (q_tr, b_count, s.u) {
        return Err(CoreError::dim("pilot tensor shape mismatch"));
    }
    let noise_scale = (sigma_sq / 2.0).sqrt();
    let mut y: Observation = Array3::zeros((b_count, m_rf, q_tr));
    for q in 0..q_tr {
        for b in 0..b_count {
            let theta = crate::beamform::ris_phase_matrix(&ris_schedule[q], b, cfg);
            let z = effective_channel(&channels.h[b], &theta, &channels.g[b], &channels.d[b]);
            // uplink: z^T (M x U) applied to the pilot, then combined
            let mut zx = Array1::<Complex64>::zeros(m);
            for i in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for uu in 0..s.u {
                    acc += z[(uu, i)] * pilots[(q, b, uu)];
                }
                zx[i] = acc;
            }
            for rf in 0..m_rf {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    acc += combiners[(q, b, rf, i)] * zx[i];
                }
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                y[(b, rf, q)] = acc + Complex64::new(re, im) * noise_scale;
            }
        }
    }
    Ok(y)
}

/// Splits the complex observation into real and imaginary parts stacked along
/// the antenna dimension: (B, M_RF, Q_tr) -> (B, 2 M_RF, Q_tr). Lossless.
pub fn complex_to_real_stack(obs: &Observation) -> ObservationTensor {
    let (b, m_rf, q) = obs.dim();
    let mut out = Array3::zeros((b, 2 * m_rf, q));
    for bb in 0..b {
        for rf in 0..m_rf {
            for qq in 0..q {
                out[(bb, rf, qq)] = obs[(bb, rf, qq)].re;
                out[(bb, m_rf + rf, qq)] = obs[(bb, rf, qq)].im;
            }
        }
    }
    out
}

/// Inverse of [`complex_to_real_stack`].
pub fn real_to_complex_stack(t: &ObservationTensor) -> Observation {
    let (b, two_m_rf, q) = t.dim();
    let m_rf = two_m_rf / 2;
    let mut out = Array3::zeros((b, m_rf, q));
    for bb in 0..b {
        for rf in 0..m_rf {
            for qq in 0..q {
                out[(bb, rf, qq)] = Complex64::new(t[(bb, rf, qq)], t[(bb, m_rf + rf, qq)]);
            }
        }
    }
    out
}

/// Noise power that meets the target uplink receive SNR, defined as the mean
/// over slots and subcarriers of ||W_{q,b} Z_{q,b}^T||_F^2 / sigma^2.
pub fn uplink_noise_sigma(
    channels: &ChannelSet,
    combiners: &CombinerSchedule,
    ris_schedule: &[RisState],
    cfg: &SystemConfig,
    target_snr_db: f64,
) -> CoreResult<f64> {
    let (q_tr, b_count, m_rf, m) = combiners.dim();
    let mut energy = 0.0;
    for q in 0..q_tr {
        for b in 0..b_count {
            let theta = crate::beamform::ris_phase_matrix(&ris_schedule[q], b, cfg);
            let z = effective_channel(&channels.h[b], &theta, &channels.g[b], &channels.d[b]);
            for rf in 0..m_rf {
                for uu in 0..cfg.system.u {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..m {
                        acc += combiners[(q, b, rf, i)] * z[(uu, i)];
                    }
                    energy += acc.norm_sqr();
                }
            }
        }
    }
    let mean = energy / (q_tr as f64 * b_count as f64);
    if mean <= 0.0 {
        return Err(CoreError::numeric("zero channel energy at the combiner output"));
    }
    Ok(mean / 10f64.powf(target_snr_db / 10.0))
}

/// Unit pilots: the fixed all-ones symbol block (Q_tr, B, U).
pub fn unit_pilots(cfg: &SystemConfig) -> Array3<Complex64> {
    Array3::from_elem(
        (cfg.system.q_tr, cfg.system.b, cfg.system.u),
        Complex64::new(1.0, 0.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::{random_raw, project_constraints};
    use crate::channel::generate_scenario;
    use crate::config::RisArch;
    use crate::scenario::derive_rng;
    use ndarray::array;

    fn tiny_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::desk_default();
        cfg.system.m = 4;
        cfg.system.u = 2;
        cfg.system.n1 = 2;
        cfg.system.n2 = 2;
        cfg.system.m_rf = 2;
        cfg.system.n_s = 2;
        cfg.system.k_ttd = 2;
        cfg.system.s1 = 2;
        cfg.system.s2 = 1;
        cfg.system.b = 2;
        cfg.system.q_tr = 4;
        cfg.system.q_block = 64;
        cfg.scatterers.clusters = 1;
        cfg.scatterers.per_cluster = 2;
        cfg
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn link_budget_derives_snr() {
        let cfg = tiny_cfg();
        let lb = LinkBudget::from_config(&cfg);
        assert_eq!(lb.sigma_b_sq_w.len(), cfg.system.b);
        assert!(lb.sigma_b_sq_w.iter().all(|&s| s == cfg.system.sigma0_sq_w));
        assert!((lb.snr_t_db() - cfg.snr_t_db()).abs() < 1e-12);
        assert!((lb.snr_t_db() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn effective_channel_examples() {
        let h = array![[c(1.0, 0.5), c(0.2, -0.1)], [c(-0.3, 0.2), c(0.7, 0.0)]];
        let g = array![[c(0.5, 0.1), c(-0.2, 0.3)], [c(0.9, -0.4), c(0.1, 0.1)]];
        let d = array![[c(0.1, 0.0), c(0.0, 0.2)], [c(-0.1, 0.1), c(0.3, -0.3)]];
        // theta = 0 collapses to D
        let zero = vec![c(0.0, 0.0); 2];
        let z = effective_channel(&h, &zero, &g, &d);
        for (a, b) in z.iter().zip(d.iter()) {
            assert_eq!(a, b);
        }
        // random case vs dense triple loop
        let theta = vec![c(0.6, 0.8), c(-0.8, 0.6)];
        let z = effective_channel(&h, &theta, &g, &d);
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = d[(i, j)];
                for k in 0..2 {
                    acc += h[(i, k)] * theta[k] * g[(k, j)];
                }
                assert!((z[(i, j)] - acc).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn rank_one_composite_with_single_element() {
        let h = array![[c(1.0, 1.0)], [c(0.5, -0.5)]];
        let g = array![[c(0.3, 0.4), c(-0.2, 0.1)]];
        let d = Array2::zeros((2, 2));
        let theta = vec![c(0.0, 1.0)];
        let z = effective_channel(&h, &theta, &g, &d);
        for i in 0..2 {
            for j in 0..2 {
                let expect = h[(i, 0)] * theta[0] * g[(0, j)];
                assert!((z[(i, j)] - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn rate_examples() {
        // A = 0 gives zero rate
        let z = array![[c(1.0, 0.0), c(0.0, 1.0)], [c(0.5, 0.5), c(1.0, -1.0)]];
        let a0: Array2<Complex64> = Array2::zeros((2, 2));
        assert_eq!(subcarrier_rate(&z, &a0, 1.0, 0.1, 2).unwrap(), 0.0);
        // scalar: c |zA|^2 = 1 -> exactly 1 bit
        let z1 = array![[c(0.6, 0.8)]];
        let a1 = array![[c(1.0, 0.0)]];
        let r = subcarrier_rate(&z1, &a1, 1.0, 1.0, 1).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        // non-finite input errors
        let znan = array![[c(f64::NAN, 0.0)]];
        assert!(subcarrier_rate(&znan, &a1, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn rate_matches_eigen_oracle_2x2() {
        let mut rng = derive_rng(8, "rate");
        for _ in 0..20 {
            let mut rnd = || c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let z = array![[rnd(), rnd()], [rnd(), rnd()]];
            let a = array![[rnd(), rnd()], [rnd(), rnd()]];
            let (p_t, sigma, n_s) = (2.0, 0.3, 2usize);
            let r = subcarrier_rate(&z, &a, p_t, sigma, n_s).unwrap();
            // eigenvalues of the 2x2 Hermitian Gram of ZA
            let za = z.dot(&a);
            let g00: f64 = za.row(0).iter().map(|v| v.norm_sqr()).sum();
            let g11: f64 = za.row(1).iter().map(|v| v.norm_sqr()).sum();
            let g01 = za[(0, 0)] * za[(1, 0)].conj() + za[(0, 1)] * za[(1, 1)].conj();
            let mean = (g00 + g11) / 2.0;
            let disc = ((g00 - g11) / 2.0).powi(2) + g01.norm_sqr();
            let l1 = mean + disc.sqrt();
            let l2 = mean - disc.sqrt();
            let cc = p_t / (n_s as f64 * sigma);
            let oracle = (1.0 + cc * l1).log2() + (1.0 + cc * l2.max(0.0)).log2();
            assert!((r - oracle).abs() < 1e-10, "{r} vs {oracle}");
        }
    }

    #[test]
    fn rate_is_invariant_under_unitary_rotation() {
        let mut rng = derive_rng(9, "rate");
        for _ in 0..10 {
            let mut rnd = || c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let z = array![[rnd(), rnd()], [rnd(), rnd()]];
            let a = array![[rnd(), rnd()], [rnd(), rnd()]];
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let g = rng.gen_range(0.0..std::f64::consts::TAU);
            let q = array![
                [
                    c(t.cos(), 0.0),
                    -Complex64::from_polar(1.0, g) * t.sin()
                ],
                [
                    Complex64::from_polar(1.0, -g) * t.sin(),
                    c(t.cos(), 0.0)
                ]
            ];
            let r1 = subcarrier_rate(&z, &a, 1.0, 0.2, 2).unwrap();
            let r2 = subcarrier_rate(&z, &a.dot(&q), 1.0, 0.2, 2).unwrap();
            assert!((r1 - r2).abs() < 1e-10);
        }
    }

    #[test]
    fn rate_is_monotone_in_power() {
        let z = array![[c(0.9, 0.1), c(0.2, -0.4)], [c(0.1, 0.6), c(-0.5, 0.2)]];
        let a = array![[c(0.7, 0.0), c(0.1, 0.1)], [c(0.0, 0.4), c(0.6, -0.2)]];
        let mut last = 0.0;
        for i in 1..=20 {
            let p = i as f64 * 0.25;
            let r = subcarrier_rate(&z, &a, p, 0.1, 2).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn effective_se_examples() {
        let rates = vec![1.0, 2.0, 3.0];
        assert_eq!(effective_se(&rates, 64, 64, 4, 3), 0.0);
        assert_eq!(effective_se(&[5.0], 64, 0, 0, 1), 5.0);
        // published overhead point: Q_tr = N U / 8 = 256, B = 16, L_CP = 4
        let q = 2048;
        let se = effective_se(&vec![1.0; 16], q, 256, 4, 16);
        let prefactor = (2048.0 - 256.0) / (2048.0 * 20.0);
        assert!((se - prefactor * 16.0).abs() < 1e-15);
    }

    #[test]
    fn downlink_receive_examples() {
        let z = array![[c(1.0, 0.0), c(0.0, 1.0)], [c(0.5, 0.5), c(1.0, -1.0)]];
        let a = array![[c(0.3, 0.1), c(0.2, 0.0)], [c(0.0, 0.4), c(0.1, 0.1)]];
        let s = Array1::from(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let noise = Array1::from(vec![c(0.0, 0.0); 2]);
        let y = downlink_receive(&z, &a, &s, &noise, 4.0);
        let za = z.dot(&a);
        for i in 0..2 {
            assert!((y[i] - 2.0 * za[(i, 0)]).norm() < 1e-14);
        }
        // zero channel passes noise through
        let z0: Array2<Complex64> = Array2::zeros((2, 2));
        let n = Array1::from(vec![c(0.1, -0.2), c(0.3, 0.4)]);
        let y = downlink_receive(&z0, &a, &s, &n, 4.0);
        for i in 0..2 {
            assert_eq!(y[i], n[i]);
        }
    }

    #[test]
    fn scalar_mutual_information_monte_carlo() {
        // y = h s + n with s ~ CN(0,1): MC estimate of I(s;y) vs log2(1+|h|^2/sigma^2)
        let h = c(0.8, -0.5);
        let sigma_sq = 0.4;
        let rate = (1.0 + h.norm_sqr() / sigma_sq).log2();
        let mut rng = derive_rng(10, "mi");
        let mut acc = 0.0;
        let n_draw = 40_000;
        for _ in 0..n_draw {
            let s = c(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ) / 2f64.sqrt();
            let n = c(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ) * (sigma_sq / 2.0).sqrt();
            let y = h * s + n;
            let var_y = sigma_sq + h.norm_sqr();
            let log_ratio = (-(y - h * s).norm_sqr() / sigma_sq + y.norm_sqr() / var_y
                + (var_y / sigma_sq).ln())
                / std::f64::consts::LN_2;
            acc += log_ratio;
        }
        let mc = acc / n_draw as f64;
        assert!(
            (mc - rate).abs() / rate < 0.05,
            "MC {mc} vs closed form {rate}"
        );
    }

    #[test]
    fn stack_round_trip_and_layout() {
        let mut rng = derive_rng(11, "stack");
        let obs = Array3::from_shape_fn((2, 3, 4), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let stacked = complex_to_real_stack(&obs);
        assert_eq!(stacked.dim(), (2, 6, 4));
        for b in 0..2 {
            for rf in 0..3 {
                for q in 0..4 {
                    assert_eq!(stacked[(b, rf, q)], obs[(b, rf, q)].re);
                    assert_eq!(stacked[(b, 3 + rf, q)], obs[(b, rf, q)].im);
                }
            }
        }
        let back = real_to_complex_stack(&stacked);
        assert_eq!(obs, back);
        // purely real input leaves the imaginary half zero
        let real_obs = obs.mapv(|z| c(z.re, 0.0));
        let st = complex_to_real_stack(&real_obs);
        for b in 0..2 {
            for rf in 3..6 {
                for q in 0..4 {
                    assert_eq!(st[(b, rf, q)], 0.0);
                }
            }
        }
    }

    fn schedule_for(cfg: &SystemConfig, arch: RisArch, seed: u64) -> (Vec<RisState>, CombinerSchedule) {
        let mut rng = derive_rng(seed, "sched");
        let mut states = Vec::new();
        for _ in 0..cfg.system.q_tr {
            let raw = random_raw(cfg, arch, &mut rng);
            states.push(project_constraints(&raw, cfg).unwrap().ris);
        }
        let raw_w = Array4::from_shape_fn(
            (cfg.system.q_tr, cfg.system.b, cfg.system.m_rf, cfg.system.m),
            |_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        (states, realize_combiners(&raw_w))
    }

    #[test]
    fn pilot_observation_noiseless_definition() {
        let mut cfg = tiny_cfg();
        cfg.system.u = 1;
        let channels = generate_scenario(&cfg, 0, 13).unwrap();
        let (states, combiners) = schedule_for(&cfg, RisArch::Classic, 14);
        let pilots = unit_pilots(&cfg);
        let mut rng = derive_rng(15, "noise");
        let y = uplink_pilot_observe(&channels, &states, &combiners, &pilots, 0.0, &cfg, &mut rng)
            .unwrap();
        for q in 0..cfg.system.q_tr {
            for b in 0..cfg.system.b {
                let theta = crate::beamform::ris_phase_matrix(&states[q], b, &cfg);
                let z = effective_channel(&channels.h[b], &theta, &channels.g[b], &channels.d[b]);
                for rf in 0..cfg.system.m_rf {
                    let mut acc = c(0.0, 0.0);
                    for i in 0..cfg.system.m {
                        acc += combiners[(q, b, rf, i)] * z[(0, i)];
                    }
                    assert!((y[(b, rf, q)] - acc).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn pilot_noise_variance_matches_sigma() {
        let mut cfg = tiny_cfg();
        cfg.system.q_tr = 50;
        cfg.system.q_block = 512;
        let mut channels = generate_scenario(&cfg, 0, 16).unwrap();
        for b in 0..cfg.system.b {
            channels.d[b].fill(c(0.0, 0.0));
            channels.g[b].fill(c(0.0, 0.0));
            channels.h[b].fill(c(0.0, 0.0));
        }
        let (states, combiners) = schedule_for(&cfg, RisArch::Classic, 17);
        let pilots = unit_pilots(&cfg);
        let sigma_sq = 0.7;
        let mut rng = derive_rng(18, "noise");
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..100 {
            let y = uplink_pilot_observe(
                &channels, &states, &combiners, &pilots, sigma_sq, &cfg, &mut rng,
            )
            .unwrap();
            acc += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += y.len();
        }
        let var = acc / count as f64;
        assert!((var - sigma_sq).abs() / sigma_sq < 0.05, "var {var}");
    }

    #[test]
    fn pilot_observation_is_deterministic_given_seed() {
        let cfg = tiny_cfg();
        let channels = generate_scenario(&cfg, 0, 19).unwrap();
        let (states, combiners) = schedule_for(&cfg, RisArch::TtdRis, 20);
        let pilots = unit_pilots(&cfg);
        let y1 = uplink_pilot_observe(
            &channels, &states, &combiners, &pilots, 0.1, &cfg,
            &mut derive_rng(21, "noise"),
        )
        .unwrap();
        let y2 = uplink_pilot_observe(
            &channels, &states, &combiners, &pilots, 0.1, &cfg,
            &mut derive_rng(21, "noise"),
        )
        .unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn noise_sigma_tracks_target() {
        let cfg = tiny_cfg();
        let channels = generate_scenario(&cfg, 0, 22).unwrap();
        let (states, combiners) = schedule_for(&cfg, RisArch::Classic, 23);
        let s0 = uplink_noise_sigma(&channels, &combiners, &states, &cfg, 0.0).unwrap();
        let s10 = uplink_noise_sigma(&channels, &combiners, &states, &cfg, 10.0).unwrap();
        assert!((s0 / s10 - 10.0).abs() < 1e-9);
        // 0 dB equals the mean combined channel energy, computed independently
        let mut energy = 0.0;
        for q in 0..cfg.system.q_tr {
            for b in 0..cfg.system.b {
                let theta = crate::beamform::ris_phase_matrix(&states[q], b, &cfg);
                let z = effective_channel(&channels.h[b], &theta, &channels.g[b], &channels.d[b]);
                for rf in 0..cfg.system.m_rf {
                    for uu in 0..cfg.system.u {
                        let mut accz = c(0.0, 0.0);
                        for i in 0..cfg.system.m {
                            accz += combiners[(q, b, rf, i)] * z[(uu, i)];
                        }
                        energy += accz.norm_sqr();
                    }
                }
            }
        }
        let mean = energy / (cfg.system.q_tr as f64 * cfg.system.b as f64);
        assert!((s0 - mean).abs() < 1e-12 * mean);
        // zero channels error out
        let mut zero = channels.clone();
        for b in 0..cfg.system.b {
            zero.d[b].fill(c(0.0, 0.0));
            zero.g[b].fill(c(0.0, 0.0));
            zero.h[b].fill(c(0.0, 0.0));
        }
        assert!(uplink_noise_sigma(&zero, &combiners, &states, &cfg, 0.0).is_err());
    }

    #[test]
    fn gram_is_hpd_for_random_inputs() {
        let mut rng = derive_rng(24, "hpd");
        for _ in 0..50 {
            let u = rng.gen_range(1..4usize);
            let n_s = rng.gen_range(1..4usize);
            let mcols = rng.gen_range(1..5usize);
            let z = Array2::from_shape_fn((u, mcols), |_| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let a = Array2::from_shape_fn((mcols, n_s), |_| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let r = subcarrier_rate(&z, &a, 1.0, 0.5, n_s).unwrap();
            assert!(r.is_finite() && r >= 0.0);
        }
    }
}
