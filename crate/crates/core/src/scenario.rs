//! Scenario construction: antenna/element geometry, scatterer clusters, UE
//! placement and near-field boundary predicates.
//!
//! All sampling is a pure function of (config, seed); RNG streams are derived
//! explicitly and never shared.

use crate::config::{SystemConfig, SPEED_OF_LIGHT};
use crate::error::{CoreError, CoreResult};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

pub type Point3 = [f64; 3];

/// Deterministic sub-stream derivation: one master seed, one tag per purpose.
pub fn derive_rng(seed: u64, tag: &str) -> ChaCha12Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha12Rng::from_seed(digest)
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dist(a: Point3, b: Point3) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Rayleigh distance 2 D^2 / lambda. For the MIMO link pass the summed
/// apertures (D_B + D_U) as `aperture`.
pub fn rayleigh_distance(aperture: f64, wavelength: f64) -> f64 {
    2.0 * aperture * aperture / wavelength
}

/// Near-field criterion of the cascaded reflection link: true iff the
/// harmonic mean r1 r2 / (r1 + r2) falls inside the Rayleigh distance.
pub fn ris_near_field_predicate(r1: f64, r2: f64, aperture: f64, wavelength: f64) -> bool {
    (r1 * r2) / (r1 + r2) < rayleigh_distance(aperture, wavelength)
}

/// Endpoint of a path at a ULA: distance from the array center and the angle
/// between the array axis (x) and the propagation direction.
#[derive(Debug, Clone, Copy)]
pub struct UlaEnd {
    pub dist_m: f64,
    /// Angle from the array axis; cos(axis_angle) = dx / dist.
    pub axis_angle_rad: f64,
}

impl UlaEnd {
    pub fn axis_cos(&self) -> f64 {
        self.axis_angle_rad.cos()
    }
    /// Equivalent broadside angle for the planar-wavefront response
    /// (sin(theta) = cos(axis_angle)).
    pub fn broadside_angle_rad(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 - self.axis_angle_rad
    }
}

/// Endpoint of a path at the RIS UPA: distance plus azimuth/elevation of the
/// propagation direction. zeta = cos(az) sin(elev) = dx / dist and
/// cos(elev) = dz / dist.
#[derive(Debug, Clone, Copy)]
pub struct UpaEnd {
    pub dist_m: f64,
    pub azimuth_rad: f64,
    pub elevation_rad: f64,
}

impl UpaEnd {
    pub fn zeta(&self) -> f64 {
        self.azimuth_rad.cos() * self.elevation_rad.sin()
    }
    pub fn cos_elev(&self) -> f64 {
        self.elevation_rad.cos()
    }
}

fn ula_end(center: Point3, to: Point3) -> UlaEnd {
    let d = sub(to, center);
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    UlaEnd {
        dist_m: r,
        axis_angle_rad: (d[0] / r).clamp(-1.0, 1.0).acos(),
    }
}

fn upa_end(center: Point3, to: Point3) -> UpaEnd {
    let d = sub(to, center);
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    UpaEnd {
        dist_m: r,
        azimuth_rad: d[1].atan2(d[0]),
        elevation_rad: (d[2] / r).clamp(-1.0, 1.0).acos(),
    }
}

/// Antenna/element coordinates for one scenario realization.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub bs: Vec<Point3>,
    pub ue: Vec<Point3>,
    pub ris: Vec<Point3>,
    pub bs_center: Point3,
    pub ue_center: Point3,
    pub ris_center: Point3,
}

impl Geometry {
    /// RIS element linear index n = (n1-1)*N2 + n2 (0-based here), matching
    /// the Kronecker order b_x (x) (tensor) b_z (z).
    pub fn ris_linear_index(n1: usize, n2: usize, n2_total: usize) -> usize {
        n1 * n2_total + n2
    }

    /// Panel diagonal span, used as the aperture in the near-field predicate.
    pub fn ris_aperture_diag(&self, cfg: &SystemConfig) -> f64 {
        let d = cfg.spacing();
        let sx = (cfg.system.n1 as f64 - 1.0) * d;
        let sz = (cfg.system.n2 as f64 - 1.0) * d;
        (sx * sx + sz * sz).sqrt()
    }

    /// Rebuild the UE ULA (parallel to the BS ULA, along x) around a new
    /// center.
    pub fn with_ue_center(mut self, cfg: &SystemConfig, center: Point3) -> Geometry {
        let d = cfg.spacing();
        let u_count = cfg.system.u;
        self.ue_center = center;
        self.ue = (1..=u_count)
            .map(|u| {
                [
                    center[0] + (u as f64 - (u_count as f64 + 1.0) / 2.0) * d,
                    center[1],
                    center[2],
                ]
            })
            .collect();
        self
    }
}

/// Builds the BS/UE/RIS element coordinates from the config. The UE array is
/// placed at the sampling-disk center; relocate per scenario with
/// [`Geometry::with_ue_center`].
pub fn build_geometry(cfg: &SystemConfig) -> CoreResult<Geometry> {
    cfg.validate()?;
    let d = cfg.spacing();
    let g = &cfg.geometry;
    let m = cfg.system.m;
    let bs: Vec<Point3> = (1..=m)
        .map(|i| {
            [
                g.bs_center[0] + (i as f64 - (m as f64 + 1.0) / 2.0) * d,
                g.bs_center[1],
                g.bs_center[2],
            ]
        })
        .collect();
    let (n1, n2) = (cfg.system.n1, cfg.system.n2);
    let mut ris = Vec::with_capacity(n1 * n2);
    for i1 in 1..=n1 {
        for i2 in 1..=n2 {
            ris.push([
                g.ris_center[0] + (i1 as f64 - (n1 as f64 + 1.0) / 2.0) * d,
                g.ris_center[1],
                g.ris_center[2] + (i2 as f64 - (n2 as f64 + 1.0) / 2.0) * d,
            ]);
        }
    }
    let ue_center = [g.ris_center[0], g.ris_center[1], g.ue_height_m];
    let geo = Geometry {
        bs,
        ue: Vec::new(),
        ris,
        bs_center: g.bs_center,
        ue_center,
        ris_center: g.ris_center,
    };
    Ok(geo.with_ue_center(cfg, ue_center))
}

/// Uniform draw over the UE disk: radius `ue_radius_m` around the RIS ground
/// projection at height `ue_height_m`.
pub fn sample_ue_position(cfg: &SystemConfig, rng: &mut impl Rng) -> Point3 {
    let g = &cfg.geometry;
    let r = g.ue_radius_m * rng.gen::<f64>().sqrt();
    let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    [
        g.ris_center[0] + r * phi.cos(),
        g.ris_center[1] + r * phi.sin(),
        g.ue_height_m,
    ]
}

/// One scatterer bounce path of the BS->UE link.
#[derive(Debug, Clone, Copy)]
pub struct BuPath {
    pub bs: UlaEnd,
    pub ue: UlaEnd,
    pub tau_s: f64,
    pub total_m: f64,
    pub gain: Complex64,
}

/// One scatterer bounce path of the BS->RIS link.
#[derive(Debug, Clone, Copy)]
pub struct BrPath {
    pub bs: UlaEnd,
    pub ris: UpaEnd,
    pub tau_s: f64,
    pub total_m: f64,
    pub gain: Complex64,
}

/// One scatterer bounce path of the RIS->UE link.
#[derive(Debug, Clone, Copy)]
pub struct RuPath {
    pub ris: UpaEnd,
    pub ue: UlaEnd,
    pub tau_s: f64,
    pub total_m: f64,
    pub gain: Complex64,
}

#[derive(Debug, Clone, Copy)]
pub struct BrLos {
    pub bs: UlaEnd,
    pub ris: UpaEnd,
    pub tau_s: f64,
    pub total_m: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RuLos {
    pub ris: UpaEnd,
    pub ue: UlaEnd,
    pub tau_s: f64,
    pub total_m: f64,
}

/// Sampled propagation environment: cluster/scatterer coordinates and all
/// per-link derived path quantities. The BS->UE LOS path is blocked by
/// assumption; LOS entries exist only for BS->RIS and RIS->UE.
#[derive(Debug, Clone)]
pub struct ScattererMap {
    pub cluster_centers: Vec<Point3>,
    /// Scatterer coordinates, `scatterers[c][s]`.
    pub scatterers: Vec<Vec<Point3>>,
    pub bu_paths: Vec<BuPath>,
    pub br_paths: Vec<BrPath>,
    pub ru_paths: Vec<RuPath>,
    pub br_los: Option<BrLos>,
    pub ru_los: Option<RuLos>,
}

impl ScattererMap {
    pub fn total_paths(&self) -> usize {
        self.bu_paths.len()
    }

    /// Map with no scatterers and no LOS entries (all-zero channels).
    pub fn empty() -> Self {
        ScattererMap {
            cluster_centers: Vec::new(),
            scatterers: Vec::new(),
            bu_paths: Vec::new(),
            br_paths: Vec::new(),
            ru_paths: Vec::new(),
            br_los: None,
            ru_los: None,
        }
    }
}

fn unit_circular_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) / 2f64.sqrt()
}

/// Samples cluster centers uniformly in the configured box (rejecting points
/// too close to the BS/RIS/UE centers), spreads scatterers isotropically
/// around them, and derives every per-link path quantity.
pub fn sample_scatterers(
    cfg: &SystemConfig,
    geo: &Geometry,
    rng: &mut impl Rng,
) -> CoreResult<ScattererMap> {
    let sc = &cfg.scatterers;
    let mut centers = Vec::with_capacity(sc.clusters);
    let anchors = [geo.bs_center, geo.ris_center, geo.ue_center];
    const MAX_TRIES: usize = 1000;
    for _ in 0..sc.clusters {
        let mut placed = false;
        for _ in 0..MAX_TRIES {
            let p: Point3 = [
                rng.gen_range(sc.box_min[0]..=sc.box_max[0]),
                rng.gen_range(sc.box_min[1]..=sc.box_max[1]),
                rng.gen_range(sc.box_min[2]..=sc.box_max[2]),
            ];
            if anchors.iter().all(|a| dist(p, *a) >= sc.min_clearance_m) {
                centers.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(CoreError::config(
                "scatterer box degenerate: could not place cluster center clear of arrays",
            ));
        }
    }

    let mut scat = Vec::with_capacity(centers.len());
    for c in &centers {
        let mut pts = Vec::with_capacity(sc.per_cluster);
        for _ in 0..sc.per_cluster {
            let dx: f64 = StandardNormal.sample(rng);
            let dy: f64 = StandardNormal.sample(rng);
            let dz: f64 = StandardNormal.sample(rng);
            pts.push([
                c[0] + sc.spread_m * dx,
                c[1] + sc.spread_m * dy,
                c[2] + sc.spread_m * dz,
            ]);
        }
        scat.push(pts);
    }

    let c_inv = SPEED_OF_LIGHT.recip();
    let mut bu = Vec::new();
    let mut br = Vec::new();
    let mut ru = Vec::new();
    for pts in &scat {
        for &p in pts {
            let d_bs = dist(geo.bs_center, p);
            let d_ue = dist(geo.ue_center, p);
            let d_ris = dist(geo.ris_center, p);
            if d_bs == 0.0 || d_ue == 0.0 || d_ris == 0.0 {
                return Err(CoreError::numeric("scatterer coincides with an array center"));
            }
            bu.push(BuPath {
                bs: ula_end(geo.bs_center, p),
                ue: ula_end(geo.ue_center, p),
                tau_s: (d_bs + d_ue) * c_inv,
                total_m: d_bs + d_ue,
                gain: unit_circular_gaussian(rng),
            });
            br.push(BrPath {
                bs: ula_end(geo.bs_center, p),
                ris: upa_end(geo.ris_center, p),
                tau_s: (d_bs + d_ris) * c_inv,
                total_m: d_bs + d_ris,
                gain: unit_circular_gaussian(rng),
            });
            ru.push(RuPath {
                ris: upa_end(geo.ris_center, p),
                ue: ula_end(geo.ue_center, p),
                tau_s: (d_ris + d_ue) * c_inv,
                total_m: d_ris + d_ue,
                gain: unit_circular_gaussian(rng),
            });
        }
    }

    let (br_los, ru_los) = if sc.los_paths {
        let d_br = dist(geo.bs_center, geo.ris_center);
        let d_ru = dist(geo.ris_center, geo.ue_center);
        if d_br == 0.0 || d_ru == 0.0 {
            return Err(CoreError::numeric("coincident array centers"));
        }
        (
            Some(BrLos {
                bs: ula_end(geo.bs_center, geo.ris_center),
                ris: upa_end(geo.ris_center, geo.bs_center),
                tau_s: d_br * c_inv,
                total_m: d_br,
            }),
            Some(RuLos {
                ris: upa_end(geo.ris_center, geo.ue_center),
                ue: ula_end(geo.ue_center, geo.ris_center),
                tau_s: d_ru * c_inv,
                total_m: d_ru,
            }),
        )
    } else {
        (None, None)
    };

    Ok(ScattererMap {
        cluster_centers: centers,
        scatterers: scat,
        bu_paths: bu,
        br_paths: br,
        ru_paths: ru,
        br_los,
        ru_los,
    })
}
