//! Binary containers for channel sets, beamformer states and checkpoints.
//!
//! Layout: magic, version, 32-byte config hash, seed, then format-specific
//! dimensions followed by a little-endian f64 payload with interleaved
//! real/imaginary parts for complex data. Writes go to a temp file renamed
//! into place so partially written artifacts are never observed.

use crate::channel::ChannelSet;
use crate::error::{CoreError, CoreResult};
use ndarray::Array2;
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

const CHANNEL_MAGIC: &[u8; 4] = b"RBC1";

pub struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    pub fn new(out: W) -> Self {
        Writer { out }
    }
    pub fn bytes(&mut self, b: &[u8]) -> CoreResult<()> {
        self.out.write_all(b)?;
        Ok(())
    }
    pub fn u16(&mut self, v: u16) -> CoreResult<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn u32(&mut self, v: u32) -> CoreResult<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn u64(&mut self, v: u64) -> CoreResult<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn f64(&mut self, v: f64) -> CoreResult<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn str16(&mut self, s: &str) -> CoreResult<()> {
        let b = s.as_bytes();
        if b.len() > u16::MAX as usize {
            return Err(CoreError::Format("string too long".into()));
        }
        self.u16(b.len() as u16)?;
        self.bytes(b)
    }
}

pub struct Reader<R: Read> {
    inp: R,
}

impl<R: Read> Reader<R> {
    pub fn new(inp: R) -> Self {
        Reader { inp }
    }
    pub fn bytes(&mut self, n: usize) -> CoreResult<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inp.read_exact(&mut buf)?;
        Ok(buf)
    }
    pub fn u16(&mut self) -> CoreResult<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }
    pub fn u32(&mut self) -> CoreResult<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> CoreResult<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> CoreResult<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    pub fn str16(&mut self) -> CoreResult<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.bytes(n)?).map_err(|_| CoreError::Format("bad utf8".into()))
    }
}

/// Atomically replace `path` with the bytes produced by `f`.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut Writer<&mut Vec<u8>>) -> CoreResult<()>) -> CoreResult<()> {
    let mut buf = Vec::new();
    {
        let mut w = Writer::new(&mut buf);
        f(&mut w)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_cmat<W: Write>(w: &mut Writer<W>, m: &Array2<Complex64>) -> CoreResult<()> {
    for z in m.iter() {
        w.f64(z.re)?;
        w.f64(z.im)?;
    }
    Ok(())
}

fn read_cmat<R: Read>(r: &mut Reader<R>, rows: usize, cols: usize) -> CoreResult<Array2<Complex64>> {
    let mut m = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let re = r.f64()?;
            let im = r.f64()?;
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

pub fn write_channel_set(path: &Path, set: &ChannelSet) -> CoreResult<()> {
    let (u, m) = set.d[0].dim();
    let n = set.g[0].dim().0;
    let b = set.d.len();
    write_atomic(path, |w| {
        w.bytes(CHANNEL_MAGIC)?;
        w.u16(1)?;
        w.bytes(&set.config_hash)?;
        w.u64(set.seed)?;
        w.u64(set.scenario_id)?;
        for dim in [u, m, n, b] {
            w.u32(dim as u32)?;
        }
        for mat in &set.d {
            write_cmat(w, mat)?;
        }
        for mat in &set.g {
            write_cmat(w, mat)?;
        }
        for mat in &set.h {
            write_cmat(w, mat)?;
        }
        Ok(())
    })
}

pub fn read_channel_set(path: &Path) -> CoreResult<ChannelSet> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader::new(std::io::BufReader::new(file));
    let magic = r.bytes(4)?;
    if magic != CHANNEL_MAGIC {
        return Err(CoreError::Format(format!(
            "bad channel container magic in {}",
            path.display()
        )));
    }
    let version = r.u16()?;
    if version != 1 {
        return Err(CoreError::Format(format!("unsupported version {version}")));
    }
    let hash: [u8; 32] = r.bytes(32)?.try_into().unwrap();
    let seed = r.u64()?;
    let scenario_id = r.u64()?;
    let u = r.u32()? as usize;
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let b = r.u32()? as usize;
    let mut d = Vec::with_capacity(b);
    for _ in 0..b {
        d.push(read_cmat(&mut r, u, m)?);
    }
    let mut g = Vec::with_capacity(b);
    for _ in 0..b {
        g.push(read_cmat(&mut r, n, m)?);
    }
    let mut h = Vec::with_capacity(b);
    for _ in 0..b {
        h.push(read_cmat(&mut r, u, n)?);
    }
    Ok(ChannelSet {
        d,
        g,
        h,
        scenario_id,
        seed,
        config_hash: hash,
    })
}

const STATE_MAGIC: &[u8; 4] = b"RBS1";

fn ris_tag(state: &crate::beamform::RisState) -> u8 {
    match state {
        crate::beamform::RisState::Classic { .. } => 0,
        crate::beamform::RisState::TtdRis { .. } => 1,
        crate::beamform::RisState::SaRis { .. } => 2,
        crate::beamform::RisState::Ideal { .. } => 3,
    }
}

/// Serializes a realized beamformer state (same container conventions as the
/// channel sets).
pub fn write_state(
    path: &Path,
    state: &crate::beamform::BeamformerState,
    config_hash: &[u8; 32],
    seed: u64,
) -> CoreResult<()> {
    use crate::beamform::RisState;
    let (m_rf, k) = state.bs.ttd_delays.dim();
    let m = state.bs.ps_phases.len();
    let b = state.bs.digital.len();
    let n_s = state.bs.digital[0].dim().1;
    write_atomic(path, |w| {
        w.bytes(STATE_MAGIC)?;
        w.u16(1)?;
        w.bytes(config_hash)?;
        w.u64(seed)?;
        w.bytes(&[ris_tag(&state.ris)])?;
        for dim in [m, m_rf, k, b, n_s] {
            w.u32(dim as u32)?;
        }
        for &p in &state.bs.ps_phases {
            w.f64(p)?;
        }
        for &t in state.bs.ttd_delays.iter() {
            w.f64(t)?;
        }
        for mat in &state.bs.digital {
            write_cmat(w, mat)?;
        }
        match &state.ris {
            RisState::Classic { phases } | RisState::SaRis { phases } => {
                w.u32(phases.len() as u32)?;
                for &p in phases {
                    w.f64(p)?;
                }
            }
            RisState::TtdRis {
                phases1,
                phases2,
                delays,
            } => {
                w.u32(phases1.len() as u32)?;
                for &p in phases1 {
                    w.f64(p)?;
                }
                for &p in phases2 {
                    w.f64(p)?;
                }
                w.u32(delays.len() as u32)?;
                for &t in delays {
                    w.f64(t)?;
                }
            }
            RisState::Ideal { phases } => {
                let (bb, n) = phases.dim();
                w.u32(bb as u32)?;
                w.u32(n as u32)?;
                for &p in phases.iter() {
                    w.f64(p)?;
                }
            }
        }
        Ok(())
    })
}

pub fn read_state(path: &Path) -> CoreResult<crate::beamform::BeamformerState> {
    use crate::beamform::{BeamformerState, BsPrecoder, RisState};
    let file = std::fs::File::open(path)?;
    let mut r = Reader::new(std::io::BufReader::new(file));
    if r.bytes(4)? != STATE_MAGIC {
        return Err(CoreError::Format("bad state container magic".into()));
    }
    if r.u16()? != 1 {
        return Err(CoreError::Format("unsupported state version".into()));
    }
    let _hash = r.bytes(32)?;
    let _seed = r.u64()?;
    let tag = r.bytes(1)?[0];
    let m = r.u32()? as usize;
    let m_rf = r.u32()? as usize;
    let k = r.u32()? as usize;
    let b = r.u32()? as usize;
    let n_s = r.u32()? as usize;
    let mut ps_phases = Vec::with_capacity(m);
    for _ in 0..m {
        ps_phases.push(r.f64()?);
    }
    let mut delays = Array2::zeros((m_rf, k));
    for rf in 0..m_rf {
        for kk in 0..k {
            delays[(rf, kk)] = r.f64()?;
        }
    }
    let mut digital = Vec::with_capacity(b);
    for _ in 0..b {
        digital.push(read_cmat(&mut r, m_rf, n_s)?);
    }
    let ris = match tag {
        0 | 2 => {
            let n = r.u32()? as usize;
            let mut phases = Vec::with_capacity(n);
            for _ in 0..n {
                phases.push(r.f64()?);
            }
            if tag == 0 {
                RisState::Classic { phases }
            } else {
                RisState::SaRis { phases }
            }
        }
        1 => {
            let n = r.u32()? as usize;
            let mut phases1 = Vec::with_capacity(n);
            for _ in 0..n {
                phases1.push(r.f64()?);
            }
            let mut phases2 = Vec::with_capacity(n);
            for _ in 0..n {
                phases2.push(r.f64()?);
            }
            let s = r.u32()? as usize;
            let mut ds = Vec::with_capacity(s);
            for _ in 0..s {
                ds.push(r.f64()?);
            }
            RisState::TtdRis {
                phases1,
                phases2,
                delays: ds,
            }
        }
        3 => {
            let bb = r.u32()? as usize;
            let n = r.u32()? as usize;
            let mut phases = Array2::zeros((bb, n));
            for i in 0..bb {
                for j in 0..n {
                    phases[(i, j)] = r.f64()?;
                }
            }
            RisState::Ideal { phases }
        }
        other => return Err(CoreError::Format(format!("bad ris tag {other}"))),
    };
    Ok(BeamformerState {
        bs: BsPrecoder {
            ps_phases,
            ttd_delays: delays,
            digital,
        },
        ris,
    })
}

/// Debug text export: one CSV row per complex entry.
pub fn export_channel_csv(path: &Path, set: &ChannelSet) -> CoreResult<()> {
    let mut text = String::from("matrix,b,row,col,re,im\n");
    let mut dump = |name: &str, mats: &[Array2<Complex64>]| {
        for (b, mat) in mats.iter().enumerate() {
            for ((i, j), z) in mat.indexed_iter() {
                text.push_str(&format!("{name},{},{i},{j},{},{}\n", b + 1, z.re, z.im));
            }
        }
    };
    dump("D", &set.d);
    dump("G", &set.g);
    dump("H", &set.h);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_scenario;
    use crate::config::SystemConfig;

    fn tiny_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::desk_default();
        cfg.system.m = 4;
        cfg.system.u = 2;
        cfg.system.n1 = 2;
        cfg.system.n2 = 2;
        cfg.system.k_ttd = 2;
        cfg.system.b = 2;
        cfg.system.q_tr = 4;
        cfg.scatterers.clusters = 1;
        cfg.scatterers.per_cluster = 2;
        cfg
    }

    #[test]
    fn channel_container_round_trips() {
        let cfg = tiny_cfg();
        let set = generate_scenario(&cfg, 1, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scen.chan");
        write_channel_set(&path, &set).unwrap();
        let back = read_channel_set(&path).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn writes_are_byte_stable() {
        let cfg = tiny_cfg();
        let set = generate_scenario(&cfg, 1, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.chan");
        let p2 = dir.path().join("b.chan");
        write_channel_set(&p1, &set).unwrap();
        write_channel_set(&p2, &set).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn csv_export_row_count() {
        let cfg = tiny_cfg();
        let set = generate_scenario(&cfg, 1, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scen.csv");
        export_channel_csv(&path, &set).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows = text.lines().count() - 1;
        let b = cfg.system.b;
        let expect = b * (2 * 4 + 4 * 4 + 2 * 4);
        assert_eq!(rows, expect);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.chan");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(read_channel_set(&path).is_err());
    }
}

#[cfg(test)]
mod state_tests {
    use super::*;
    use crate::beamform::{project_constraints, random_raw};
    use crate::config::{RisArch, SystemConfig};
    use crate::scenario::derive_rng;

    #[test]
    fn state_container_round_trips_all_archs() {
        let mut cfg = SystemConfig::desk_default();
        cfg.system.m = 4;
        cfg.system.k_ttd = 2;
        cfg.system.n1 = 2;
        cfg.system.n2 = 2;
        cfg.system.s1 = 2;
        cfg.system.s2 = 1;
        cfg.system.b = 2;
        cfg.system.q_tr = 4;
        let dir = tempfile::tempdir().unwrap();
        let mut rng = derive_rng(1, "state");
        for arch in [RisArch::Classic, RisArch::TtdRis, RisArch::SaRis, RisArch::Ideal] {
            let raw = random_raw(&cfg, arch, &mut rng);
            let state = project_constraints(&raw, &cfg).unwrap();
            let path = dir.path().join(format!("{}.state", arch.as_str()));
            write_state(&path, &state, &cfg.hash(), 9).unwrap();
            let back = read_state(&path).unwrap();
            assert_eq!(state, back);
        }
    }
}
