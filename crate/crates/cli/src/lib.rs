//! Batch experiment commands: dataset generation, training, evaluation,
//! benchmarks, beam-split diagnostics and report emission. Every run writes a
//! manifest (config hash, seed, tool version) so artifacts are reproducible
//! from (config, seed) alone.

use risbeam_core::baseline::{
    self, beam_gain_profile, embed_flat_into_ttd, embed_ttd_into_ideal, pgd_perfect_csi,
    random_baseline, raw_from_state, ArraySide,
};
use risbeam_core::beamform::{BeamformerState, BsPrecoder, RisState};
use risbeam_core::channel::{generate_scenario, ChannelSet};
use risbeam_core::config::{RisArch, SystemConfig};
use risbeam_core::container;
use risbeam_core::e2enet::{self, read_checkpoint, write_checkpoint, Checkpoint};
use risbeam_core::error::{CoreError, CoreResult};
use risbeam_core::scenario::{build_geometry, derive_rng, Point3};
use rand::Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Swept experiment axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepAxis {
    SnrT,
    SnrR,
    Bandwidth,
}

#[derive(Debug, Clone, Copy)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

impl Sweep {
    /// Parses `<axis>=<start:step:stop>`, e.g. `snr_t=0:5:20`.
    pub fn parse(text: &str) -> CoreResult<Sweep> {
        let (axis_s, range) = text
            .split_once('=')
            .ok_or_else(|| CoreError::config(format!("sweep `{text}` lacks `=`")))?;
        let axis = match axis_s {
            "snr_t" => SweepAxis::SnrT,
            "snr_r" => SweepAxis::SnrR,
            "bandwidth" => SweepAxis::Bandwidth,
            other => {
                return Err(CoreError::config(format!(
                    "unknown sweep axis `{other}` (snr_t | snr_r | bandwidth)"
                )))
            }
        };
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(CoreError::config(format!(
                "sweep range `{range}` is not start:step:stop"
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CoreError::config(format!("bad sweep number `{s}`")))
        };
        let sweep = Sweep {
            axis,
            start: parse(parts[0])?,
            step: parse(parts[1])?,
            stop: parse(parts[2])?,
        };
        if sweep.step <= 0.0 {
            return Err(CoreError::config("sweep step must be > 0"));
        }
        Ok(sweep)
    }

    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut v = self.start;
        while v <= self.stop + 1e-9 {
            out.push(v);
            v += self.step;
        }
        out
    }
}

/// One experiment invocation, fully describing its inputs.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    pub out_dir: PathBuf,
    pub arch: RisArch,
    pub workers: usize,
    pub sweep: Option<Sweep>,
    /// Beam-split focal point override.
    pub focal: Option<Point3>,
    /// Scenario count override for eval/baseline (defaults to the val split).
    pub scenarios: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(config: SystemConfig, out_dir: PathBuf, arch: RisArch) -> Self {
        ExperimentSpec {
            config,
            out_dir,
            arch,
            workers: 1,
            sweep: None,
            focal: None,
            scenarios: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.config.system.rng_seed
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    command: &'a str,
    config_hash: String,
    seed: u64,
    arch: &'a str,
}

fn ensure_out_dir(dir: &Path) -> CoreResult<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_manifest(spec: &ExperimentSpec, command: &str) -> CoreResult<()> {
    let manifest = Manifest {
        tool_version: TOOL_VERSION,
        command,
        config_hash: spec.config.hash_hex(),
        seed: spec.seed(),
        arch: spec.arch.as_str(),
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| CoreError::Format(e.to_string()))?;
    write_text_atomic(&spec.out_dir.join(format!("manifest_{command}.toml")), &text)
}

fn write_text_atomic(path: &Path, text: &str) -> CoreResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Deterministic per-scenario seed derived from the master seed.
pub fn scenario_seed(master: u64, id: u64) -> u64 {
    derive_rng(master, &format!("scenario-{id}")).gen::<u64>()
}

/// Generates the training and validation channel sets plus an index file.
pub fn cmd_gen(spec: &ExperimentSpec) -> CoreResult<Vec<PathBuf>> {
    let cfg = &spec.config;
    cfg.validate_arch(spec.arch)?;
    ensure_out_dir(&spec.out_dir)?;
    let chan_dir = spec.out_dir.join("channels");
    ensure_out_dir(&chan_dir)?;
    let n_train = cfg.training.n_train;
    let n_val = cfg.training.n_val;
    let mut index = String::from("id,split,seed,path\n");
    let mut written = Vec::new();
    for id in 0..(n_train + n_val) as u64 {
        let split = if (id as usize) < n_train { "train" } else { "val" };
        let seed = scenario_seed(spec.seed(), id);
        let set = generate_scenario(cfg, id, seed)?;
        let name = format!("scen_{id:06}.chan");
        let path = chan_dir.join(&name);
        container::write_channel_set(&path, &set)?;
        index.push_str(&format!("{id},{split},{seed},channels/{name}\n"));
        written.push(path);
    }
    write_text_atomic(&spec.out_dir.join("index.csv"), &index)?;
    write_manifest(spec, "gen")?;
    Ok(written)
}

/// Dataset index row.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub id: u64,
    pub split: String,
    pub seed: u64,
    pub path: String,
}

pub fn read_index(dir: &Path) -> CoreResult<Vec<IndexRow>> {
    let text = std::fs::read_to_string(dir.join("index.csv"))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CoreError::Format(format!("bad index row `{line}`")));
        }
        rows.push(IndexRow {
            id: parts[0]
                .parse()
                .map_err(|_| CoreError::Format("bad id".into()))?,
            split: parts[1].to_string(),
            seed: parts[2]
                .parse()
                .map_err(|_| CoreError::Format("bad seed".into()))?,
            path: parts[3].to_string(),
        });
    }
    Ok(rows)
}

fn load_split(dir: &Path, split: &str) -> CoreResult<Vec<ChannelSet>> {
    let rows = read_index(dir)?;
    let mut out = Vec::new();
    for row in rows.iter().filter(|r| r.split == split) {
        out.push(container::read_channel_set(&dir.join(&row.path))?);
    }
    Ok(out)
}

/// Trains the end-to-end model on a generated dataset; emits a checkpoint
/// and the per-epoch history CSV.
pub fn cmd_train(spec: &ExperimentSpec, dataset_dir: &Path) -> CoreResult<PathBuf> {
    let cfg = &spec.config;
    cfg.validate_arch(spec.arch)?;
    if spec.arch == RisArch::Ideal {
        return Err(CoreError::config(
            "the ideal relaxation is benchmark-only; train with classic, ttd-ris or sa-ris",
        ));
    }
    ensure_out_dir(&spec.out_dir)?;
    let train_set = load_split(dataset_dir, "train")?;
    let val_set = load_split(dataset_dir, "val")?;
    if train_set.is_empty() {
        return Err(CoreError::config("dataset has no training split"));
    }
    let result = e2enet::train(&train_set, &val_set, spec.arch, cfg, spec.workers.max(1))?;
    let ckpt = Checkpoint {
        store: result.store,
        adam: result.adam,
        iterations: result.iterations,
        arch: spec.arch,
        config_hash: cfg.hash(),
    };
    let ckpt_path = spec.out_dir.join("model.ckpt");
    write_checkpoint(&ckpt_path, &ckpt)?;
    let mut hist = String::from("epoch,train_loss,val_loss,mean_se,snr_r_db\n");
    for row in &result.history {
        hist.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.train_loss, row.val_loss, row.mean_se, row.snr_r_db
        ));
    }
    write_text_atomic(&spec.out_dir.join("history.csv"), &hist)?;
    write_manifest(spec, "train")?;
    Ok(ckpt_path)
}

/// One evaluation/benchmark result row; the shared CSV schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub arch: String,
    pub snr_t_db: f64,
    pub snr_r_db: f64,
    pub bandwidth_hz: f64,
    pub se_mean: f64,
    pub se_std: f64,
    pub n_scenarios: usize,
    pub seed: u64,
}

pub const RESULTS_HEADER: &str =
    "arch,snr_t_db,snr_r_db,bandwidth_hz,se_mean,se_std,n_scenarios,seed";

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> CoreResult<()> {
    let mut text = String::from(RESULTS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.arch,
            r.snr_t_db,
            r.snr_r_db,
            r.bandwidth_hz,
            r.se_mean,
            r.se_std,
            r.n_scenarios,
            r.seed
        ));
    }
    write_text_atomic(path, &text)
}

pub fn read_results_csv(path: &Path) -> CoreResult<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        other => {
            return Err(CoreError::Format(format!(
                "bad results header {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 8 {
            return Err(CoreError::Format(format!("bad results row `{line}`")));
        }
        let f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CoreError::Format(format!("bad float `{s}`")))
        };
        rows.push(ResultRow {
            arch: p[0].to_string(),
            snr_t_db: f(p[1])?,
            snr_r_db: f(p[2])?,
            bandwidth_hz: f(p[3])?,
            se_mean: f(p[4])?,
            se_std: f(p[5])?,
            n_scenarios: p[6]
                .parse()
                .map_err(|_| CoreError::Format("bad count".into()))?,
            seed: p[7]
                .parse()
                .map_err(|_| CoreError::Format("bad seed".into()))?,
        });
    }
    Ok(rows)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Evaluates a trained checkpoint over the validation split, sweeping the
/// requested axis (or the single configured operating point).
pub fn cmd_eval(spec: &ExperimentSpec, dataset_dir: &Path, ckpt_path: &Path) -> CoreResult<PathBuf> {
    let cfg = &spec.config;
    ensure_out_dir(&spec.out_dir)?;
    let ckpt = read_checkpoint(ckpt_path)?;
    if ckpt.config_hash != cfg.hash() {
        log::warn!("checkpoint was trained under a different config hash");
    }
    let arch = ckpt.arch;
    let rows_idx = read_index(dataset_dir)?;
    let val_rows: Vec<&IndexRow> = rows_idx.iter().filter(|r| r.split == "val").collect();
    let n_scen = spec.scenarios.unwrap_or(val_rows.len()).min(val_rows.len());
    let base_snr_t = cfg.snr_t_db();
    let base_snr_r = cfg.training.snr_r_db.unwrap_or(10.0);

    let mut rows: Vec<ResultRow> = Vec::new();
    let points: Vec<(f64, f64, f64)> = match spec.sweep {
        None => vec![(base_snr_t, base_snr_r, cfg.system.bandwidth_hz)],
        Some(sweep) => sweep
            .points()
            .into_iter()
            .map(|v| match sweep.axis {
                SweepAxis::SnrT => (v, base_snr_r, cfg.system.bandwidth_hz),
                SweepAxis::SnrR => (base_snr_t, v, cfg.system.bandwidth_hz),
                SweepAxis::Bandwidth => (base_snr_t, base_snr_r, v),
            })
            .collect(),
    };

    for (snr_t, snr_r, bw) in points {
        let mut point_cfg = cfg.clone();
        point_cfg.system.sigma0_sq_w = cfg.system.p_t_w / 10f64.powf(snr_t / 10.0);
        point_cfg.system.bandwidth_hz = bw;
        let mut values = Vec::with_capacity(n_scen);
        for row in val_rows.iter().take(n_scen) {
            let channels = if (bw - cfg.system.bandwidth_hz).abs() > 0.0 {
                // bandwidth changes the channel itself: re-synthesize from
                // the recorded scenario seed
                generate_scenario(&point_cfg, row.id, row.seed)?
            } else {
                container::read_channel_set(&dataset_dir.join(&row.path))?
            };
            let se = e2enet::evaluate_se(
                &channels,
                &ckpt.store,
                arch,
                &point_cfg,
                snr_r,
                derive_rng(row.seed, "eval-noise").gen(),
            )?;
            values.push(se);
        }
        if values.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&values);
        rows.push(ResultRow {
            arch: arch.as_str().to_string(),
            snr_t_db: snr_t,
            snr_r_db: snr_r,
            bandwidth_hz: bw,
            se_mean: mean,
            se_std: std,
            n_scenarios: values.len(),
            seed: spec.seed(),
        });
    }
    let out = spec.out_dir.join("results.csv");
    write_results_csv(&out, &rows)?;
    write_manifest(spec, "eval")?;
    Ok(out)
}

/// Per-scenario perfect-CSI benchmark chain. The flat-phase optimum warm
/// starts the TTD-RIS run, whose realization warm starts the ideal
/// relaxation, so the monotone line search preserves the feasible-set
/// ordering by construction.
pub struct BaselineScenario {
    pub scenario_id: u64,
    pub sa: baseline::PgdResult,
    pub ttd: baseline::PgdResult,
    pub ideal: baseline::PgdResult,
    pub classic: baseline::PgdResult,
    pub random_median: f64,
}

pub fn run_baseline_chain(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    seed: u64,
    trials: usize,
) -> CoreResult<BaselineScenario> {
    let steps = cfg.training.pgd_steps;
    let step = cfg.training.pgd_step_size;
    // the best random draw seeds the flat-phase optimizers: the monotone
    // line search then keeps them above the random baseline by construction
    let rnd = random_baseline(channels, RisArch::Classic, cfg, seed ^ 4, trials)?;
    let best_idx = rnd
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let best_raw = risbeam_core::beamform::random_raw(
        cfg,
        RisArch::Classic,
        &mut derive_rng(seed ^ 4, &format!("random-baseline-{best_idx}")),
    );
    let sa_init = {
        let mut raw = best_raw.clone();
        if let risbeam_core::beamform::RawRis::Classic { phases } = &raw.ris {
            raw.ris = risbeam_core::beamform::RawRis::SaRis {
                phases: phases.clone(),
            };
        }
        raw
    };
    let sa = pgd_perfect_csi(channels, RisArch::SaRis, cfg, steps, step, Some(sa_init), seed)?;
    let classic = pgd_perfect_csi(
        channels,
        RisArch::Classic,
        cfg,
        steps,
        step,
        Some(best_raw),
        seed ^ 1,
    )?;
    let ttd_init = embed_flat_into_ttd(&raw_from_state(&sa.state, cfg), cfg);
    let ttd = pgd_perfect_csi(
        channels,
        RisArch::TtdRis,
        cfg,
        steps,
        step,
        Some(ttd_init),
        seed ^ 2,
    )?;
    let ideal_init = embed_ttd_into_ideal(&raw_from_state(&ttd.state, cfg), cfg);
    let ideal = pgd_perfect_csi(
        channels,
        RisArch::Ideal,
        cfg,
        steps,
        step,
        Some(ideal_init),
        seed ^ 3,
    )?;
    Ok(BaselineScenario {
        scenario_id: channels.scenario_id,
        sa,
        ttd,
        ideal,
        classic,
        random_median: rnd.median,
    })
}

/// Runs the perfect-CSI and random baselines over the validation split and
/// appends rows in the shared results schema.
pub fn cmd_baseline(spec: &ExperimentSpec, dataset_dir: &Path) -> CoreResult<PathBuf> {
    let cfg = &spec.config;
    cfg.validate_arch(RisArch::SaRis)?;
    ensure_out_dir(&spec.out_dir)?;
    let val = load_split(dataset_dir, "val")?;
    let n_scen = spec.scenarios.unwrap_or(val.len()).min(val.len());
    if n_scen == 0 {
        return Err(CoreError::config("dataset has no validation split"));
    }
    let states_dir = spec.out_dir.join("states");
    ensure_out_dir(&states_dir)?;

    let mut per_arch: Vec<(String, Vec<f64>)> = vec![
        ("pgd:ideal".into(), Vec::new()),
        ("pgd:ttd-ris".into(), Vec::new()),
        ("pgd:sa-ris".into(), Vec::new()),
        ("pgd:classic".into(), Vec::new()),
        ("random:classic".into(), Vec::new()),
    ];
    for (i, channels) in val.iter().take(n_scen).enumerate() {
        let chain = run_baseline_chain(channels, cfg, spec.seed() ^ ((i as u64) << 8), 32)?;
        per_arch[0].1.push(chain.ideal.se);
        per_arch[1].1.push(chain.ttd.se);
        per_arch[2].1.push(chain.sa.se);
        per_arch[3].1.push(chain.classic.se);
        per_arch[4].1.push(chain.random_median);
        let base = states_dir.join(format!("scen_{:06}_ttd-ris", chain.scenario_id));
        container::write_state(
            &base.with_extension("state"),
            &chain.ttd.state,
            &cfg.hash(),
            spec.seed(),
        )?;
        write_text_atomic(
            &base.with_extension("txt"),
            &risbeam_core::beamform::dump_state_text(&chain.ttd.state, cfg),
        )?;
    }
    let snr_t = cfg.snr_t_db();
    let rows: Vec<ResultRow> = per_arch
        .into_iter()
        .map(|(name, values)| {
            let (mean, std) = mean_std(&values);
            ResultRow {
                arch: name,
                snr_t_db: snr_t,
                snr_r_db: f64::INFINITY,
                bandwidth_hz: cfg.system.bandwidth_hz,
                se_mean: mean,
                se_std: std,
                n_scenarios: n_scen,
                seed: spec.seed(),
            }
        })
        .collect();
    let out = spec.out_dir.join("baseline.csv");
    write_results_csv(&out, &rows)?;
    write_manifest(spec, "baseline")?;
    Ok(out)
}

pub const PROFILE_HEADER: &str = "label,side,b,f_b_hz,gain";

/// Beam-split diagnostic: per-subcarrier gain profiles of the carrier-matched
/// PS-only precoder and the TTD-aligned construction toward a focal point.
pub fn cmd_beamsplit(spec: &ExperimentSpec) -> CoreResult<PathBuf> {
    let cfg = &spec.config;
    cfg.validate()?;
    ensure_out_dir(&spec.out_dir)?;
    let geo = build_geometry(cfg)?;
    let focal = spec.focal.unwrap_or_else(|| {
        // default: 20 m off-axis at cos(phi) = 0.6 from the BS
        let c = cfg.geometry.bs_center;
        [c[0] + 12.0, c[1] + 16.0, c[2]]
    });
    let ris = RisState::Classic {
        phases: vec![0.0; cfg.n_ris()],
    };
    let mk_state = |bs: BsPrecoder| BeamformerState {
        bs,
        ris: ris.clone(),
    };
    let ps_state = mk_state(baseline::ps_only_bs_precoder(&geo, focal, cfg)?);
    let ttd_state = mk_state(baseline::aligned_bs_precoder(&geo, focal, cfg)?);

    let mut text = String::from(PROFILE_HEADER);
    text.push('\n');
    for (label, state) in [("ps-only", &ps_state), ("ttd-aligned", &ttd_state)] {
        let profile = beam_gain_profile(state, &geo, focal, ArraySide::Bs, cfg)?;
        for (b, g) in profile.gains.iter().enumerate() {
            text.push_str(&format!(
                "{label},bs,{},{},{}\n",
                b + 1,
                cfg.subcarrier_hz(b + 1),
                g
            ));
        }
    }
    let out = spec.out_dir.join("beamsplit.csv");
    write_text_atomic(&out, &text)?;
    write_manifest(spec, "beamsplit")?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub label: String,
    pub side: String,
    pub b: usize,
    pub f_b_hz: f64,
    pub gain: f64,
}

pub fn read_profile_csv(path: &Path) -> CoreResult<Vec<ProfileRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(PROFILE_HEADER) {
        return Err(CoreError::Format("bad profile header".into()));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 5 {
            return Err(CoreError::Format(format!("bad profile row `{line}`")));
        }
        rows.push(ProfileRow {
            label: p[0].into(),
            side: p[1].into(),
            b: p[2].parse().map_err(|_| CoreError::Format("bad b".into()))?,
            f_b_hz: p[3]
                .parse()
                .map_err(|_| CoreError::Format("bad f_b".into()))?,
            gain: p[4]
                .parse()
                .map_err(|_| CoreError::Format("bad gain".into()))?,
        });
    }
    Ok(rows)
}

/// Gradient verification report: per-parameter-group worst relative error of
/// reverse-mode gradients against central finite differences on a tiny
/// deterministic scenario.
pub fn cmd_gradcheck(spec: &ExperimentSpec) -> CoreResult<PathBuf> {
    use risbeam_core::autodiff::{finite_diff_grad, max_rel_error, Tensor};
    let cfg = &spec.config;
    cfg.validate_arch(spec.arch)?;
    ensure_out_dir(&spec.out_dir)?;
    let channels = generate_scenario(cfg, 0, scenario_seed(spec.seed(), 0))?;
    let store = e2enet::init_params(cfg, spec.arch, spec.seed())?;
    let noise_seed = spec.seed() ^ 0xA5;
    let snr = cfg.training.snr_r_db.unwrap_or(10.0);

    let fwd = e2enet::e2e_forward(&channels, &store, spec.arch, cfg, snr, noise_seed)?;
    let grads = fwd.tape.backward(fwd.loss)?;
    let analytic: Vec<Tensor> = fwd
        .param_ids
        .iter()
        .map(|&id| {
            grads
                .get(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(fwd.tape.value(id).shape()))
        })
        .collect();
    let names: Vec<String> = store.entries().iter().map(|(n, _)| n.clone()).collect();
    let tensors: Vec<Tensor> = store.entries().iter().map(|(_, t)| t.clone()).collect();
    let mut loss_fn = |p: &[Tensor]| {
        let mut st = e2enet::ParamStore::new();
        for (name, t) in names.iter().zip(p) {
            st.push(name, t.clone());
        }
        let f = e2enet::e2e_forward(&channels, &st, spec.arch, cfg, snr, noise_seed)?;
        Ok(f.tape.value(f.loss).item())
    };
    let numeric = finite_diff_grad(&mut loss_fn, &tensors, 1e-6)?;

    let mut text = String::from("param,index,analytic,numeric,rel_err\n");
    for ((name, a), n) in names.iter().zip(&analytic).zip(&numeric) {
        let group_err = max_rel_error(std::slice::from_ref(a), std::slice::from_ref(n));
        let floor = a
            .data()
            .iter()
            .chain(n.data())
            .fold(0.0f64, |x, &v| x.max(v.abs()))
            * 1e-3;
        for (i, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let denom = av.abs().max(nv.abs()).max(floor).max(1e-12);
            text.push_str(&format!("{name},{i},{av},{nv},{}\n", (av - nv).abs() / denom));
        }
        println!("gradcheck {name}: rel_err {group_err:.3e}");
    }
    let out = spec.out_dir.join("gradcheck.csv");
    write_text_atomic(&out, &text)?;
    write_manifest(spec, "gradcheck")?;
    Ok(out)
}

/// Summarizes every results-schema CSV in the output directory into a small
/// markdown report.
pub fn cmd_report(spec: &ExperimentSpec) -> CoreResult<PathBuf> {
    ensure_out_dir(&spec.out_dir)?;
    let mut names: Vec<PathBuf> = std::fs::read_dir(&spec.out_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    names.sort();
    let mut sections = Vec::new();
    for path in names {
        if let Ok(rows) = read_results_csv(&path) {
            let mut table = String::new();
            table.push_str(&format!(
                "## {}\n\n| arch | SNR_T (dB) | SNR_R (dB) | W (Hz) | SE mean | SE std | n |\n|---|---|---|---|---|---|---|\n",
                path.file_name().unwrap().to_string_lossy()
            ));
            for r in rows {
                table.push_str(&format!(
                    "| {} | {:.1} | {} | {:.3e} | {:.4} | {:.4} | {} |\n",
                    r.arch,
                    r.snr_t_db,
                    if r.snr_r_db.is_finite() {
                        format!("{:.1}", r.snr_r_db)
                    } else {
                        "perfect".into()
                    },
                    r.bandwidth_hz,
                    r.se_mean,
                    r.se_std,
                    r.n_scenarios
                ));
            }
            sections.push(table);
        }
    }
    let mut report = format!(
        "# Experiment report\n\nconfig hash: `{}`\nseed: {}\n\n",
        spec.config.hash_hex(),
        spec.seed()
    );
    if sections.is_empty() {
        report.push_str("no result files found\n");
    } else {
        report.push_str(&sections.join("\n"));
    }
    let out = spec.out_dir.join("report.md");
    write_text_atomic(&out, &report)?;
    Ok(out)
}

/// Parsed training-history row (epoch, train_loss, val_loss, mean_se, snr).
pub fn read_history_csv(path: &Path) -> CoreResult<Vec<(usize, f64, f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("epoch,train_loss,val_loss,mean_se,snr_r_db") {
        return Err(CoreError::Format("bad history header".into()));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 5 {
            return Err(CoreError::Format(format!("bad history row `{line}`")));
        }
        let f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CoreError::Format(format!("bad float `{s}`")))
        };
        rows.push((
            p[0].parse()
                .map_err(|_| CoreError::Format("bad epoch".into()))?,
            f(p[1])?,
            f(p[2])?,
            f(p[3])?,
            f(p[4])?,
        ));
    }
    Ok(rows)
}

/// Maps library errors onto the documented process exit codes.
pub fn exit_code_for(err: &CoreError) -> i32 {
    match err {
        CoreError::Config(_) | CoreError::Dim(_) => 2,
        CoreError::Numeric(_) => 3,
        _ => 1,
    }
}
