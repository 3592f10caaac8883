use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use posetrack::association::{arm_limbs, check_hand_swap, corrupt_measurements_logged, swap_evidence, swap_hands, synth_limb_edges, SwapDecision};
use posetrack::bodymodel::{FullBodyEstimate, Joint, MeasurementFrame};
use posetrack::dataio::{
    load_edges_csv, load_measurements, load_skeleton_csv, make_measurements, save_edges_csv, save_measurements,
    save_skeleton_csv, synth_skeleton, write_atomic, Camera, EdgeFrames, MeasurementSequence, PriorFile, SkeletonRecording,
};
use posetrack::eval::{error_3d, joint_pixel_error, pcp, EvalSummary, JointErrors, ARM_LIMBS};
use posetrack::pipeline::{arm_models, project_recording, train_arm_priors};
use posetrack::trackers::{stream_rng, track_sequence, track_sequence_corrected, write_diagnostics_csv, StreamTag, TrackOutput, TrackerConfig, Variant};
use serde::Serialize;

use crate::config::Config;
use crate::error::{CliError, CliResult, WithPath};
use crate::estimates::load_estimates;

const HANDS: [Joint; 2] = [Joint::LeftHand, Joint::RightHand];
const ELBOWS: [Joint; 2] = [Joint::LeftElbow, Joint::RightElbow];

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
    .at(path)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?)).at(path)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn load_priors(left: &Path, right: &Path) -> CliResult<(PriorFile, PriorFile)> {
    Ok((PriorFile::load(left).at(left)?, PriorFile::load(right).at(right)?))
}

pub fn show_config(cfg: &Config) -> CliResult<()> {
    println!("# effective configuration; angles in degrees, distances in metres or pixels");
    println!("# tracker.n_tracks unset: three tracks per prior component (mkf-sampled)");
    println!("# tracker.epsilon_floor unset: 1e-3 divided by the track count (mkf-fixed)");
    print!("{}", cfg.to_toml()?);
    Ok(())
}

pub struct SynthArgs {
    pub frames: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub measurements: Option<PathBuf>,
    pub edges: Option<PathBuf>,
}

pub fn gen_synth(cfg: &Config, a: &SynthArgs) -> CliResult<()> {
    let rec = synth_skeleton(&cfg.synth, a.frames, a.seed)?;
    save_skeleton_csv(&rec, &a.out).at(&a.out)?;
    let camera = cfg.camera.camera()?;
    if let Some(path) = &a.measurements {
        let mut seq = make_measurements(&rec, &camera, &cfg.measured_subset())?;
        seq.provenance.insert("source".into(), format!("gen-synth frames={} seed={}", a.frames, a.seed));
        save_measurements(&seq, path).at(path)?;
    }
    if let Some(path) = &a.edges {
        let truth = project_recording(&rec, &camera.projection())?;
        let params = cfg.edge_synth.params();
        let frames = truth
            .iter()
            .enumerate()
            .map(|(t, est)| synth_limb_edges(&arm_limbs(est), &params, &mut stream_rng(a.seed, StreamTag::Init, t as u64, 0xed6e)))
            .collect();
        save_edges_csv(&EdgeFrames { frames }, path).at(path)?;
    }
    println!("wrote {} frames to {}", rec.len(), a.out.display());
    Ok(())
}

pub struct CorruptArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub log: Option<PathBuf>,
}

pub fn corrupt(cfg: &Config, a: &CorruptArgs) -> CliResult<()> {
    let clean = load_measurements(&a.input).at(&a.input)?;
    let (noisy, log) = corrupt_measurements_logged(&clean, &cfg.corruption, a.seed)?;
    save_measurements(&noisy, &a.out).at(&a.out)?;
    if let Some(path) = &a.log {
        let mut text = String::from("frame,swapped\n");
        for (t, s) in log.swapped.iter().enumerate() {
            text.push_str(&format!("{t},{}\n", *s as u8));
        }
        write_text(path, &text)?;
    }
    let swapped = log.swapped.iter().filter(|s| **s).count();
    println!("{} frames, {} swap runs, {swapped} swapped frames", noisy.len(), log.onsets);
    Ok(())
}

pub struct TrainArgs {
    pub skeletons: Vec<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct TrainingReport {
    skeleton_frames: usize,
    n_views: usize,
    logs: Vec<posetrack::pipeline::TrainingLog>,
}

pub fn train_prior(cfg: &Config, a: &TrainArgs) -> CliResult<()> {
    if a.skeletons.is_empty() {
        return Err(CliError::Usage("train-prior needs at least one skeleton file".into()));
    }
    let recs = a
        .skeletons
        .iter()
        .map(|p| load_skeleton_csv(p).at(p))
        .collect::<CliResult<Vec<_>>>()?;
    let rec = SkeletonRecording::concat(&recs)?;
    let training = cfg.training.training();
    let camera = cfg.camera.camera()?;
    let fitted = train_arm_priors(&rec, &camera.intrinsics, &training)?;
    create_dir(&a.out_dir)?;
    let samples = rec.len() * training.n_views;
    let mut logs = Vec::new();
    for (trained, name) in fitted.iter().zip(["prior_left.json", "prior_right.json"]) {
        let path = a.out_dir.join(name);
        trained.prior.save(&path).at(&path)?;
        logs.push(trained.log(samples));
    }
    for l in &logs {
        println!(
            "{}: {} components, {} iterations, converged {}, final log-likelihood {}",
            l.side.name(),
            l.components,
            l.iterations,
            l.converged,
            l.final_log_likelihood
        );
    }
    write_json(
        &a.out_dir.join("training_log.json"),
        &TrainingReport {
            skeleton_frames: rec.len(),
            n_views: training.n_views,
            logs,
        },
    )
}

pub struct TrackArgs {
    pub measurements: PathBuf,
    pub prior_left: PathBuf,
    pub prior_right: PathBuf,
    pub out: PathBuf,
    pub edge_file: Option<PathBuf>,
    pub swap_log: Option<PathBuf>,
}

/// One row of the swap-correction log.
struct SwapCheck {
    frame: usize,
    as_is: usize,
    swapped: usize,
    decision: SwapDecision,
}

/// The previous estimate with its hands moved to this frame's measured
/// hand positions, or `None` when a hand is not visible.
fn hand_hypothesis(prev: &FullBodyEstimate, frame: &MeasurementFrame) -> Option<FullBodyEstimate> {
    let mut est = *prev;
    for hand in HANDS {
        let m = frame.get(hand).filter(|m| m.visible)?;
        let mut ji = est.get(hand);
        ji.u_over_lambda = m.u;
        ji.v_over_lambda = m.v;
        est.set(hand, ji);
    }
    Some(est)
}

fn run_tracker(
    cfg: &Config,
    tracker: &TrackerConfig,
    seq: &MeasurementSequence,
    priors: &(PriorFile, PriorFile),
    edges: Option<&EdgeFrames>,
) -> CliResult<(TrackOutput, Vec<SwapCheck>)> {
    let (left, right) = arm_models(&priors.0, &priors.1, &cfg.noise)?;
    let Some(edges) = edges else {
        return Ok((track_sequence(seq, &left, &right, tracker)?, Vec::new()));
    };
    let params = cfg.edges.params()?;
    let mut checks = Vec::new();
    let out = track_sequence_corrected(seq, &left, &right, tracker, |t, frame, prev| {
        let Some(hyp) = prev.and_then(|p| hand_hypothesis(p, frame)) else {
            return Ok(());
        };
        let ev = swap_evidence(&hyp, &edges.frames[t], &params);
        let decision = check_hand_swap(&hyp, &edges.frames[t], &params, cfg.edges.margin);
        if decision == SwapDecision::Swap {
            swap_hands(frame);
        }
        checks.push(SwapCheck {
            frame: t,
            as_is: ev.as_is,
            swapped: ev.swapped,
            decision,
        });
        Ok(())
    })?;
    Ok((out, checks))
}

pub fn track(cfg: &Config, a: &TrackArgs) -> CliResult<()> {
    let seq = load_measurements(&a.measurements).at(&a.measurements)?;
    let priors = load_priors(&a.prior_left, &a.prior_right)?;
    let edges = match &a.edge_file {
        Some(p) => {
            let e = load_edges_csv(p).at(p)?;
            if e.frames.len() != seq.len() {
                return Err(CliError::File {
                    path: p.clone(),
                    source: posetrack::Error::LengthMismatch {
                        left: e.frames.len(),
                        right: seq.len(),
                    },
                });
            }
            Some(e)
        }
        None => None,
    };
    let (out, checks) = run_tracker(cfg, &cfg.tracker, &seq, &priors, edges.as_ref())?;
    write_atomic(&a.out, |w| write_diagnostics_csv(&out, w)).at(&a.out)?;
    let corrections = checks.iter().filter(|c| c.decision == SwapDecision::Swap).count();
    if let Some(path) = &a.swap_log {
        let mut text = String::from("frame,support_as_is,support_swapped,decision\n");
        for c in &checks {
            let d = if c.decision == SwapDecision::Swap { "swap" } else { "keep" };
            text.push_str(&format!("{},{},{},{d}\n", c.frame, c.as_is, c.swapped));
        }
        write_text(path, &text)?;
    }
    println!(
        "{}: {} frames, mean iteration time {:.6} s",
        cfg.tracker.variant,
        out.estimates.len(),
        out.mean_iter_time()
    );
    if edges.is_some() {
        println!("hand swaps corrected on {corrections} frames");
    }
    Ok(())
}

pub struct EvalArgs {
    pub estimates: PathBuf,
    pub truth: PathBuf,
    /// Camera taken from this measurement file instead of the config.
    pub measurements: Option<PathBuf>,
    pub out_dir: PathBuf,
}

fn camera_for(cfg: &Config, measurements: Option<&Path>) -> CliResult<Camera> {
    match measurements {
        Some(p) => Ok(load_measurements(p).at(p)?.camera),
        None => cfg.camera.camera(),
    }
}

fn write_errors(path: &Path, e: &JointErrors) -> CliResult<()> {
    write_atomic(path, |w| e.write_csv(w)).at(path)
}

pub fn eval(cfg: &Config, a: &EvalArgs) -> CliResult<()> {
    let est = load_estimates(&a.estimates)?;
    let rec = load_skeleton_csv(&a.truth).at(&a.truth)?;
    let camera = camera_for(cfg, a.measurements.as_deref())?;
    let pm = camera.projection();
    let truth = project_recording(&rec, &pm)?;
    let pixel = joint_pixel_error(&est, &truth)?;
    let e3 = error_3d(&est, &rec.frames, &pm, &cfg.eval.align_joints)?;
    let curve = pcp(&est, &truth, &ARM_LIMBS, &cfg.eval.pcp_thresholds)?;

    create_dir(&a.out_dir)?;
    write_errors(&a.out_dir.join("pixel_errors.csv"), &pixel)?;
    write_errors(&a.out_dir.join("errors_3d.csv"), &e3)?;
    let pcp_path = a.out_dir.join("pcp.dat");
    write_atomic(&pcp_path, |w| curve.write_columns(w)).at(&pcp_path)?;
    let summary = EvalSummary::new(&pixel, Some(&e3), curve);
    write_json(&a.out_dir.join("summary.json"), &summary)?;

    println!("{:<16} {:>10} {:>10}", "joint", "pixel", "3d (m)");
    for j in Joint::ALL {
        println!("{:<16} {:>10.3} {:>10.4}", j.name(), pixel.mean(j), e3.mean(j));
    }
    Ok(())
}

pub struct BenchArgs {
    pub prior_left: PathBuf,
    pub prior_right: PathBuf,
    pub measurements: PathBuf,
    pub truth: Option<PathBuf>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    variant: String,
    seed: u64,
    frames: usize,
    mean_iter_time_s: f64,
    hand_error_px: Option<f64>,
    elbow_error_px: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct BenchSummary {
    variant: String,
    runs: usize,
    mean_iter_time_s: f64,
    hand_error_px: Option<f64>,
    elbow_error_px: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn opt_mean(xs: &[Option<f64>]) -> Option<f64> {
    xs.iter().copied().collect::<Option<Vec<f64>>>().map(|v| mean(v.into_iter()))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r)
                .map_err(|e| posetrack::Error::InvalidParameter(format!("csv: {e}")))?;
        }
        csv.flush()?;
        Ok(())
    })
    .at(path)
}

pub fn bench(cfg: &Config, a: &BenchArgs) -> CliResult<()> {
    if a.variants.is_empty() || a.seeds.is_empty() {
        return Err(CliError::Usage("bench needs at least one variant and one seed".into()));
    }
    let seq = load_measurements(&a.measurements).at(&a.measurements)?;
    let priors = load_priors(&a.prior_left, &a.prior_right)?;
    let truth = match &a.truth {
        Some(p) => Some(project_recording(&load_skeleton_csv(p).at(p)?, &seq.camera.projection())?),
        None => None,
    };

    let mut raw = Vec::new();
    for &variant in &a.variants {
        for &seed in &a.seeds {
            let tracker = TrackerConfig {
                variant,
                rng_seed: seed,
                ..cfg.tracker.clone()
            };
            let (out, _) = run_tracker(cfg, &tracker, &seq, &priors, None)?;
            let errors = truth.as_ref().map(|t| joint_pixel_error(&out.estimates, t)).transpose()?;
            raw.push(BenchRow {
                variant: variant.name().into(),
                seed,
                frames: out.estimates.len(),
                mean_iter_time_s: out.mean_iter_time(),
                hand_error_px: errors.as_ref().map(|e| e.mean_over(&HANDS)),
                elbow_error_px: errors.as_ref().map(|e| e.mean_over(&ELBOWS)),
            });
        }
    }

    let mut summary: Vec<BenchSummary> = a
        .variants
        .iter()
        .map(|v| {
            let rows: Vec<&BenchRow> = raw.iter().filter(|r| r.variant == v.name()).collect();
            BenchSummary {
                variant: v.name().into(),
                runs: rows.len(),
                mean_iter_time_s: mean(rows.iter().map(|r| r.mean_iter_time_s)),
                hand_error_px: opt_mean(&rows.iter().map(|r| r.hand_error_px).collect::<Vec<_>>()),
                elbow_error_px: opt_mean(&rows.iter().map(|r| r.elbow_error_px).collect::<Vec<_>>()),
            }
        })
        .collect();
    summary.sort_by(|x, y| x.mean_iter_time_s.total_cmp(&y.mean_iter_time_s));

    create_dir(&a.out_dir)?;
    write_rows(&a.out_dir.join("bench_raw.csv"), &raw)?;
    write_rows(&a.out_dir.join("bench_summary.csv"), &summary)?;

    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
    println!("{:<20} {:>5} {:>14} {:>10} {:>10}", "variant", "runs", "iter time (s)", "hand px", "elbow px");
    for s in &summary {
        println!(
            "{:<20} {:>5} {:>14.6} {:>10} {:>10}",
            s.variant,
            s.runs,
            s.mean_iter_time_s,
            fmt(s.hand_error_px),
            fmt(s.elbow_error_px)
        );
    }
    Ok(())
}
