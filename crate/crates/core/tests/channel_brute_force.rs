//! Independent brute-force oracle for the channel synthesis: every entry of
//! D[b], G[b], H[b] is recomputed with straight-line scalar code from the
//! sampled scenario, sharing nothing with the library's response helpers.

use risbeam_core::channel::{synthesize_channels, ChannelSet};
use risbeam_core::config::{SystemConfig, SPEED_OF_LIGHT};
use risbeam_core::scenario::{
    build_geometry, derive_rng, sample_scatterers, sample_ue_position, Geometry, ScattererMap,
};
use num_complex::Complex64;
use std::f64::consts::PI;

fn small_cfg() -> SystemConfig {
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

fn lin(dbi: f64) -> f64 {
    10f64.powf(dbi / 10.0)
}

fn fspl(f: f64, dist: f64, bounces: usize, loss_db: f64) -> f64 {
    let a = SPEED_OF_LIGHT / (4.0 * PI * f * dist);
    a * a * 10f64.powf(-(bounces as f64) * loss_db / 10.0)
}

fn ejm(phase: f64) -> Complex64 {
    Complex64::new(phase.cos(), phase.sin())
}

/// Straight-line per-path synthesis. All responses are written out as direct
/// exponentials of the coordinate-derived quantities.
fn brute_force(cfg: &SystemConfig, geo: &Geometry, map: &ScattererMap) -> ChannelSet {
    let s = &cfg.system;
    let d_sp = cfg.spacing();
    let (m_c, u_c) = (s.m, s.u);
    let (n1, n2) = (s.n1, s.n2);
    let n_c = n1 * n2;
    let f_c = s.carrier_hz;
    let w = s.bandwidth_hz;
    let bb = s.b as f64;
    let gamma = (1.0 / map.bu_paths.len() as f64).sqrt();
    let g_b = lin(s.gain_bs_dbi);
    let g_u = lin(s.gain_ue_dbi);
    let g_r = lin(s.gain_ris_dbi);
    let refl = cfg.scatterers.reflection_loss_db;

    let mut d_mats = Vec::new();
    let mut g_mats = Vec::new();
    let mut h_mats = Vec::new();

    for b in 1..=s.b {
        let f_b = f_c + w * (2.0 * b as f64 - 1.0 - bb) / (2.0 * bb);
        let k_b = 2.0 * PI * f_b / SPEED_OF_LIGHT;
        let delay = |tau: f64| ejm(-2.0 * PI * b as f64 * w * tau / bb);

        // near-field ULA response at the BS toward a point
        let a_bs = |point: [f64; 3]| -> Vec<Complex64> {
            let dx = point[0] - geo.bs_center[0];
            let dy = point[1] - geo.bs_center[1];
            let dz = point[2] - geo.bs_center[2];
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            let cosp = dx / r;
            let sin2 = 1.0 - cosp * cosp;
            (1..=m_c)
                .map(|m| {
                    let mb = m as f64 - (m_c as f64 + 1.0) / 2.0;
                    ejm(-k_b * (-mb * d_sp * cosp + mb * mb * d_sp * d_sp * sin2 / (2.0 * r)))
                })
                .collect()
        };
        // far-field ULA response at the UE toward a point (0-based)
        let u_far = |point: [f64; 3]| -> Vec<Complex64> {
            let dx = point[0] - geo.ue_center[0];
            let dy = point[1] - geo.ue_center[1];
            let dz = point[2] - geo.ue_center[2];
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            let sin_t = dx / r;
            (0..u_c).map(|u| ejm(-k_b * u as f64 * d_sp * sin_t)).collect()
        };
        // near-field ULA response at the UE toward a point (centered)
        let u_near = |point: [f64; 3]| -> Vec<Complex64> {
            let dx = point[0] - geo.ue_center[0];
            let dy = point[1] - geo.ue_center[1];
            let dz = point[2] - geo.ue_center[2];
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            let cosp = dx / r;
            let sin2 = 1.0 - cosp * cosp;
            (1..=u_c)
                .map(|u| {
                    let ub = u as f64 - (u_c as f64 + 1.0) / 2.0;
                    ejm(-k_b * (-ub * d_sp * cosp + ub * ub * d_sp * d_sp * sin2 / (2.0 * r)))
                })
                .collect()
        };
        // near-field UPA response at the RIS toward a point, n1-major order
        let b_ris = |point: [f64; 3]| -> Vec<Complex64> {
            let dx = point[0] - geo.ris_center[0];
            let dy = point[1] - geo.ris_center[1];
            let dz = point[2] - geo.ris_center[2];
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            let zeta = dx / r;
            let cos_v = dz / r;
            let sin2_v = 1.0 - cos_v * cos_v;
            let mut out = Vec::with_capacity(n_c);
            for i1 in 1..=n1 {
                let n1b = i1 as f64 - (n1 as f64 + 1.0) / 2.0;
                let px = -n1b * d_sp * zeta
                    + n1b * n1b * d_sp * d_sp * (1.0 - zeta * zeta) / (2.0 * r);
                for i2 in 1..=n2 {
                    let n2b = i2 as f64 - (n2 as f64 + 1.0) / 2.0;
                    let pz = -n2b * d_sp * cos_v
                        + n2b * n2b * d_sp * d_sp * sin2_v / (2.0 * r);
                    out.push(ejm(-k_b * (px + pz)));
                }
            }
            out
        };

        // D[b]: NLOS only
        let mut d_mat = vec![Complex64::new(0.0, 0.0); u_c * m_c];
        let mut scat_points = Vec::new();
        for pts in &map.scatterers {
            for &p in pts {
                scat_points.push(p);
            }
        }
        for (k, &p) in scat_points.iter().enumerate() {
            let path = &map.bu_paths[k];
            let amp = path.gain
                * (g_b * g_u * fspl(f_c, path.total_m, 1, refl)).sqrt()
                * gamma
                * delay(path.tau_s);
            let uu = u_far(p);
            let aa = a_bs(p);
            for i in 0..u_c {
                for j in 0..m_c {
                    d_mat[i * m_c + j] += amp * uu[i] * aa[j];
                }
            }
        }
        d_mats.push(d_mat);

        // G[b]: LOS with coupling, plus NLOS
        let mut g_mat = vec![Complex64::new(0.0, 0.0); n_c * m_c];
        if let Some(los) = &map.br_los {
            let amp = (g_b * g_r * fspl(f_c, los.total_m, 0, refl)).sqrt() * delay(los.tau_s);
            let bv = b_ris(geo.bs_center);
            let av = a_bs(geo.ris_center);
            // coupling exponents
            let dx = geo.bs_center[0] - geo.ris_center[0];
            let dy = geo.bs_center[1] - geo.ris_center[1];
            let dz = geo.bs_center[2] - geo.ris_center[2];
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            let zeta = dx / r;
            let cos_v = dz / r;
            let sin2_v = 1.0 - cos_v * cos_v;
            let kc = 2.0 * PI * f_b / (SPEED_OF_LIGHT * r);
            for i1 in 1..=n1 {
                for i2 in 1..=n2 {
                    let row = (i1 - 1) * n2 + (i2 - 1);
                    let n1b = i1 as f64 - (n1 as f64 + 1.0) / 2.0;
                    let n2b = i2 as f64 - (n2 as f64 + 1.0) / 2.0;
                    for m in 1..=m_c {
                        let mb = m as f64 - (m_c as f64 + 1.0) / 2.0;
                        let gx = ejm(-kc * n2b * d_sp * d_sp * (1.0 - zeta * zeta));
                        let gz = ejm(-kc * n1b * mb * d_sp * d_sp * sin2_v);
                        g_mat[row * m_c + m - 1] += amp * bv[row] * av[m - 1] * gx * gz;
                    }
                }
            }
        }
        for (k, &p) in scat_points.iter().enumerate() {
            let path = &map.br_paths[k];
            let amp = path.gain
                * (g_b * g_r * fspl(f_c, path.total_m, 1, refl)).sqrt()
                * gamma
                * delay(path.tau_s);
            let bv = b_ris(p);
            let av = a_bs(p);
            for i in 0..n_c {
                for j in 0..m_c {
                    g_mat[i * m_c + j] += amp * bv[i] * av[j];
                }
            }
        }
        g_mats.push(g_mat);

        // H[b]: LOS with mirrored coupling, plus NLOS with far-field UE
        let mut h_mat = vec![Complex64::new(0.0, 0.0); u_c * n_c];
        if let Some(los) = &map.ru_los {
            let amp = (g_r * g_u * fspl(f_c, los.total_m, 0, refl)).sqrt() * delay(los.tau_s);
            let uv = u_near(geo.ris_center);
            let bv = b_ris(geo.ue_center);
            let dx = geo.ue_center[0] - geo.ris_center[0];
            let dy = geo.ue_center[1] - geo.ris_center[1];
            let dz = geo.ue_center[2] - geo.ris_center[2];
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            let zeta = dx / r;
            let cos_v = dz / r;
            let sin2_v = 1.0 - cos_v * cos_v;
            let kc = 2.0 * PI * f_b / (SPEED_OF_LIGHT * r);
            for u in 1..=u_c {
                let ub = u as f64 - (u_c as f64 + 1.0) / 2.0;
                for i1 in 1..=n1 {
                    for i2 in 1..=n2 {
                        let col = (i1 - 1) * n2 + (i2 - 1);
                        let n1b = i1 as f64 - (n1 as f64 + 1.0) / 2.0;
                        let n2b = i2 as f64 - (n2 as f64 + 1.0) / 2.0;
                        let hx = ejm(-kc * n2b * d_sp * d_sp * (1.0 - zeta * zeta));
                        let hz = ejm(-kc * n1b * ub * d_sp * d_sp * sin2_v);
                        h_mat[(u - 1) * n_c + col] += amp * uv[u - 1] * bv[col] * hx * hz;
                    }
                }
            }
        }
        for (k, &p) in scat_points.iter().enumerate() {
            let path = &map.ru_paths[k];
            let amp = path.gain
                * (g_r * g_u * fspl(f_c, path.total_m, 1, refl)).sqrt()
                * gamma
                * delay(path.tau_s);
            let uv = u_far(p);
            let bv = b_ris(p);
            for i in 0..u_c {
                for j in 0..n_c {
                    h_mat[i * n_c + j] += amp * uv[i] * bv[j];
                }
            }
        }
        h_mats.push(h_mat);
    }

    ChannelSet {
        d: d_mats
            .into_iter()
            .map(|v| ndarray::Array2::from_shape_vec((u_c, m_c), v).unwrap())
            .collect(),
        g: g_mats
            .into_iter()
            .map(|v| ndarray::Array2::from_shape_vec((n_c, m_c), v).unwrap())
            .collect(),
        h: h_mats
            .into_iter()
            .map(|v| ndarray::Array2::from_shape_vec((u_c, n_c), v).unwrap())
            .collect(),
        scenario_id: 0,
        seed: 0,
        config_hash: cfg.hash(),
    }
}

fn max_abs_diff(a: &ChannelSet, b: &ChannelSet) -> f64 {
    let mut worst = 0.0f64;
    let cmp = |x: &[ndarray::Array2<Complex64>], y: &[ndarray::Array2<Complex64>], w: &mut f64| {
        for (ma, mb) in x.iter().zip(y) {
            for (za, zb) in ma.iter().zip(mb.iter()) {
                *w = w.max((za - zb).norm());
            }
        }
    };
    cmp(&a.d, &b.d, &mut worst);
    cmp(&a.g, &b.g, &mut worst);
    cmp(&a.h, &b.h, &mut worst);
    worst
}

#[test]
fn synthesis_matches_straight_line_oracle() {
    let cfg = small_cfg();
    let geo = build_geometry(&cfg).unwrap();
    let ue = sample_ue_position(&cfg, &mut derive_rng(901, "ue"));
    let geo = geo.with_ue_center(&cfg, ue);
    let map = sample_scatterers(&cfg, &geo, &mut derive_rng(902, "scat")).unwrap();
    let lib = synthesize_channels(&geo, &map, &cfg, 0, 0).unwrap();
    let oracle = brute_force(&cfg, &geo, &map);
    let diff = max_abs_diff(&lib, &oracle);
    assert!(diff < 1e-12, "max |delta| = {diff}");
}

#[test]
fn oracle_agreement_holds_with_los_disabled() {
    let mut cfg = small_cfg();
    cfg.scatterers.los_paths = false;
    let geo = build_geometry(&cfg).unwrap();
    let map = sample_scatterers(&cfg, &geo, &mut derive_rng(905, "scat")).unwrap();
    let lib = synthesize_channels(&geo, &map, &cfg, 0, 0).unwrap();
    let oracle = brute_force(&cfg, &geo, &map);
    assert!(max_abs_diff(&lib, &oracle) < 1e-12);
}
