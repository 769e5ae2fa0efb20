//! Near-/far-field array responses and per-subcarrier frequency-domain
//! channel synthesis for the cascaded BS -> RIS -> UE layout.

use crate::config::{SystemConfig, SPEED_OF_LIGHT};
use crate::error::{CoreError, CoreResult};
use crate::scenario::{Geometry, ScattererMap};
use ndarray::Array2;
use num_complex::Complex64;

/// Per-subcarrier frequency-domain channels of one scenario realization.
///
/// `d[b]` is the U x M direct channel, `g[b]` the N x M BS->RIS channel and
/// `h[b]` the U x N RIS->UE channel. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub d: Vec<Array2<Complex64>>,
    pub g: Vec<Array2<Complex64>>,
    pub h: Vec<Array2<Complex64>>,
    pub scenario_id: u64,
    pub seed: u64,
    pub config_hash: [u8; 32],
}

impl ChannelSet {
    pub fn subcarriers(&self) -> usize {
        self.d.len()
    }

    pub fn is_finite(&self) -> bool {
        let ok = |m: &Array2<Complex64>| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        self.d.iter().all(ok) && self.g.iter().all(ok) && self.h.iter().all(ok)
    }
}

fn dbi_to_linear(dbi: f64) -> f64 {
    10f64.powf(dbi / 10.0)
}

/// Near-field (uniform spherical wave) ULA response with centered element
/// indices. Element m (1-based) at offset m_bar = m - (count+1)/2 gets phase
/// -(2 pi f / c) (-m_bar d cos(phi) + m_bar^2 d^2 sin^2(phi) / (2 r)).
pub fn ula_near_response(
    f_hz: f64,
    phi_rad: f64,
    r_m: f64,
    count: usize,
    spacing_m: f64,
) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI * f_hz / SPEED_OF_LIGHT;
    let (cos_p, sin_p) = (phi_rad.cos(), phi_rad.sin());
    let sin2 = sin_p * sin_p;
    (1..=count)
        .map(|m| {
            let mb = m as f64 - (count as f64 + 1.0) / 2.0;
            let path = -mb * spacing_m * cos_p
                + mb * mb * spacing_m * spacing_m * sin2 / (2.0 * r_m);
            Complex64::from_polar(1.0, -k * path)
        })
        .collect()
}

/// Far-field (planar wavefront) ULA response, uncentered: entry u in
/// 0..count-1 equals exp(-j (2 pi f / c) u d sin(theta)); first entry 1.
pub fn ula_far_response(f_hz: f64, theta_rad: f64, count: usize, spacing_m: f64) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI * f_hz / SPEED_OF_LIGHT;
    let s = theta_rad.sin();
    (0..count)
        .map(|u| Complex64::from_polar(1.0, -k * u as f64 * spacing_m * s))
        .collect()
}

/// Near-field UPA response b = b_x (x) b_z with the panel in the xz-plane.
/// zeta = cos(phi) sin(varphi) is the x direction cosine, cos(varphi) the z
/// direction cosine. Linear element order is n1-major: (n1-1)*N2 + n2.
pub fn upa_near_response(
    f_hz: f64,
    phi_rad: f64,
    varphi_rad: f64,
    r_m: f64,
    n1: usize,
    n2: usize,
    spacing_m: f64,
) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI * f_hz / SPEED_OF_LIGHT;
    let zeta = phi_rad.cos() * varphi_rad.sin();
    let cos_v = varphi_rad.cos();
    let sin2_v = varphi_rad.sin() * varphi_rad.sin();
    let d = spacing_m;
    let bx: Vec<Complex64> = (1..=n1)
        .map(|i| {
            let nb = i as f64 - (n1 as f64 + 1.0) / 2.0;
            let path = -nb * d * zeta + nb * nb * d * d * (1.0 - zeta * zeta) / (2.0 * r_m);
            Complex64::from_polar(1.0, -k * path)
        })
        .collect();
    let bz: Vec<Complex64> = (1..=n2)
        .map(|i| {
            let nb = i as f64 - (n2 as f64 + 1.0) / 2.0;
            let path = -nb * d * cos_v + nb * nb * d * d * sin2_v / (2.0 * r_m);
            Complex64::from_polar(1.0, -k * path)
        })
        .collect();
    let mut out = Vec::with_capacity(n1 * n2);
    for x in &bx {
        for z in &bz {
            out.push(x * z);
        }
    }
    out
}

/// Rank-enriching LOS coupling term of the near-field UPA<->ULA link,
/// returned as the full N x `count` matrix in the same element order as
/// [`upa_near_response`]. Entry (element (n1,n2), antenna m) is
/// exp(-j 2 pi f/(c r) n2_bar d^2 (1-zeta^2)) *
/// exp(-j 2 pi f/(c r) n1_bar m_bar d^2 sin^2(varphi)).
pub fn los_coupling_term(
    f_hz: f64,
    r_m: f64,
    varphi_rad: f64,
    zeta: f64,
    n1: usize,
    n2: usize,
    count: usize,
    spacing_m: f64,
) -> Array2<Complex64> {
    let k = 2.0 * std::f64::consts::PI * f_hz / (SPEED_OF_LIGHT * r_m);
    let d2 = spacing_m * spacing_m;
    let sin2_v = varphi_rad.sin() * varphi_rad.sin();
    let gx: Vec<f64> = (1..=n2)
        .map(|i| -k * (i as f64 - (n2 as f64 + 1.0) / 2.0) * d2 * (1.0 - zeta * zeta))
        .collect();
    let mut out = Array2::zeros((n1 * n2, count));
    for i1 in 0..n1 {
        let n1b = (i1 + 1) as f64 - (n1 as f64 + 1.0) / 2.0;
        for i2 in 0..n2 {
            let row = i1 * n2 + i2;
            for m in 0..count {
                let mb = (m + 1) as f64 - (count as f64 + 1.0) / 2.0;
                let phase = gx[i2] + -k * n1b * mb * d2 * sin2_v;
                out[(row, m)] = Complex64::from_polar(1.0, phase);
            }
        }
    }
    out
}

/// Free-space path loss with a fixed per-bounce reflection penalty:
/// (c / (4 pi f dist))^2 * 10^(-bounces * loss_db / 10).
pub fn path_loss(f_hz: f64, total_dist_m: f64, bounces: usize, reflection_loss_db: f64) -> f64 {
    let fs = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * f_hz * total_dist_m);
    fs * fs * 10f64.powf(-(bounces as f64) * reflection_loss_db / 10.0)
}

fn outer(u: &[Complex64], a: &[Complex64]) -> Array2<Complex64> {
    let mut m = Array2::zeros((u.len(), a.len()));
    for (i, &ui) in u.iter().enumerate() {
        for (j, &aj) in a.iter().enumerate() {
            m[(i, j)] = ui * aj;
        }
    }
    m
}

/// Synthesizes the full per-subcarrier channel set D[b], G[b], H[b] from a
/// sampled scenario. Pure function of its inputs.
pub fn synthesize_channels(
    geo: &Geometry,
    map: &ScattererMap,
    cfg: &SystemConfig,
    scenario_id: u64,
    seed: u64,
) -> CoreResult<ChannelSet> {
    let s = &cfg.system;
    let d_sp = cfg.spacing();
    let (m_count, u_count, n_count) = (s.m, s.u, cfg.n_ris());
    let n_paths = map.total_paths();
    let gamma = if n_paths > 0 {
        (1.0 / n_paths as f64).sqrt()
    } else {
        0.0
    };
    let g_b = dbi_to_linear(s.gain_bs_dbi);
    let g_u = dbi_to_linear(s.gain_ue_dbi);
    let g_r = dbi_to_linear(s.gain_ris_dbi);
    let refl = cfg.scatterers.reflection_loss_db;
    let f_c = s.carrier_hz;

    if geo.bs.len() != m_count || geo.ue.len() != u_count || geo.ris.len() != n_count {
        return Err(CoreError::dim("geometry does not match config dimensions"));
    }
    for p in &map.bu_paths {
        if p.bs.dist_m <= 0.0 || p.ue.dist_m <= 0.0 {
            return Err(CoreError::numeric("degenerate geometry: zero path distance"));
        }
    }

    let mut d_mats = Vec::with_capacity(s.b);
    let mut g_mats = Vec::with_capacity(s.b);
    let mut h_mats = Vec::with_capacity(s.b);

    for b in 1..=s.b {
        let f_b = cfg.subcarrier_hz(b);
        let delay_phase = |tau: f64| {
            Complex64::from_polar(
                1.0,
                -2.0 * std::f64::consts::PI * b as f64 * s.bandwidth_hz * tau / s.b as f64,
            )
        };

        // BS -> UE: NLOS only, far-field UE response, near-field BS response.
        let mut d_b: Array2<Complex64> = Array2::zeros((u_count, m_count));
        for p in &map.bu_paths {
            let amp = p.gain * (g_b * g_u * path_loss(f_c, p.total_m, 1, refl)).sqrt();
            let u = ula_far_response(f_b, p.ue.broadside_angle_rad(), u_count, d_sp);
            let a = ula_near_response(f_b, p.bs.axis_angle_rad, p.bs.dist_m, m_count, d_sp);
            let ph = delay_phase(p.tau_s);
            d_b.zip_mut_with(&outer(&u, &a), |acc, &x| *acc += gamma * amp * ph * x);
        }
        d_mats.push(d_b);

        // BS -> RIS: stable LOS with coupling term plus clustered NLOS.
        let mut g_mat: Array2<Complex64> = Array2::zeros((n_count, m_count));
        if let Some(los) = &map.br_los {
            let amp = (g_b * g_r * path_loss(f_c, los.total_m, 0, refl)).sqrt();
            let bv = upa_near_response(
                f_b,
                los.ris.azimuth_rad,
                los.ris.elevation_rad,
                los.ris.dist_m,
                s.n1,
                s.n2,
                d_sp,
            );
            let av = ula_near_response(f_b, los.bs.axis_angle_rad, los.bs.dist_m, m_count, d_sp);
            let couple = los_coupling_term(
                f_b,
                los.ris.dist_m,
                los.ris.elevation_rad,
                los.ris.zeta(),
                s.n1,
                s.n2,
                m_count,
                d_sp,
            );
            let ph = delay_phase(los.tau_s);
            let rank1 = outer(&bv, &av);
            g_mat.zip_mut_with(&(&rank1 * &couple), |acc, &x| *acc += amp * ph * x);
        }
        for p in &map.br_paths {
            let amp = p.gain * (g_b * g_r * path_loss(f_c, p.total_m, 1, refl)).sqrt();
            let bv = upa_near_response(
                f_b,
                p.ris.azimuth_rad,
                p.ris.elevation_rad,
                p.ris.dist_m,
                s.n1,
                s.n2,
                d_sp,
            );
            let av = ula_near_response(f_b, p.bs.axis_angle_rad, p.bs.dist_m, m_count, d_sp);
            let ph = delay_phase(p.tau_s);
            g_mat.zip_mut_with(&outer(&bv, &av), |acc, &x| *acc += gamma * amp * ph * x);
        }
        g_mats.push(g_mat);

        // RIS -> UE: LOS with mirrored coupling plus clustered NLOS with
        // far-field UE responses.
        let mut h_mat: Array2<Complex64> = Array2::zeros((u_count, n_count));
        if let Some(los) = &map.ru_los {
            let amp = (g_r * g_u * path_loss(f_c, los.total_m, 0, refl)).sqrt();
            let uv = ula_near_response(f_b, los.ue.axis_angle_rad, los.ue.dist_m, u_count, d_sp);
            let bv = upa_near_response(
                f_b,
                los.ris.azimuth_rad,
                los.ris.elevation_rad,
                los.ris.dist_m,
                s.n1,
                s.n2,
                d_sp,
            );
            // (U x N) coupling: the BS/UE roles of the G-link formulas swap.
            let couple = los_coupling_term(
                f_b,
                los.ris.dist_m,
                los.ris.elevation_rad,
                los.ris.zeta(),
                s.n1,
                s.n2,
                u_count,
                d_sp,
            );
            let couple_un = couple.t();
            let ph = delay_phase(los.tau_s);
            let rank1 = outer(&uv, &bv);
            h_mat.zip_mut_with(&(&rank1 * &couple_un), |acc, &x| *acc += amp * ph * x);
        }
        for p in &map.ru_paths {
            let amp = p.gain * (g_r * g_u * path_loss(f_c, p.total_m, 1, refl)).sqrt();
            let uv = ula_far_response(f_b, p.ue.broadside_angle_rad(), u_count, d_sp);
            let bv = upa_near_response(
                f_b,
                p.ris.azimuth_rad,
                p.ris.elevation_rad,
                p.ris.dist_m,
                s.n1,
                s.n2,
                d_sp,
            );
            let ph = delay_phase(p.tau_s);
            h_mat.zip_mut_with(&outer(&uv, &bv), |acc, &x| *acc += gamma * amp * ph * x);
        }
        h_mats.push(h_mat);
    }

    let set = ChannelSet {
        d: d_mats,
        g: g_mats,
        h: h_mats,
        scenario_id,
        seed,
        config_hash: cfg.hash(),
    };
    if !set.is_finite() {
        return Err(CoreError::numeric("non-finite channel entries"));
    }
    Ok(set)
}

/// Generates one complete scenario realization (UE draw, scatterer map,
/// channels) from a scenario seed.
pub fn generate_scenario(
    cfg: &SystemConfig,
    scenario_id: u64,
    scenario_seed: u64,
) -> CoreResult<ChannelSet> {
    use crate::scenario::{build_geometry, derive_rng, sample_scatterers, sample_ue_position};
    let geo = build_geometry(cfg)?;
    let mut ue_rng = derive_rng(scenario_seed, "ue");
    let ue = sample_ue_position(cfg, &mut ue_rng);
    let geo = geo.with_ue_center(cfg, ue);
    let mut sc_rng = derive_rng(scenario_seed, "scatterers");
    let map = sample_scatterers(cfg, &geo, &mut sc_rng)?;
    synthesize_channels(&geo, &map, cfg, scenario_id, scenario_seed)
}
