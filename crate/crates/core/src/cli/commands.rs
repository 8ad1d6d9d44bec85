use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{read_json, sha256_hex, Artifacts, FileRef, Method, ModelCard, RunManifest, TrainConfig};
use super::{CliError, EvalArgs, EvalMode};
use crate::avril::{self, AvrilError, AvrilModel, QPolicy, RewardInput};
use crate::baselines::{arl_train, bc_train};
use crate::diffcore::{Checkpoint, Layout, ParamVector};
use crate::envs::{build_dataset, read_demos, rollout, write_demos, Dataset, EnvSpec, Greedy, State, Trajectory};
use crate::eval::{
    action_matching, live_return, posterior_maps, reward_slice, uncertainty_occupancy_correlation, write_slice_csv,
};
use crate::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct GenSummary {
    pub n_trajectories: usize,
    pub mean_length: f64,
    pub mean_return: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub manifest: PathBuf,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReproduceSummary {
    pub checkpoint_sha256: String,
    pub original_sha256: Option<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

fn load_env(path: &Path) -> Result<EnvSpec, CliError> {
    let spec: EnvSpec = read_json(path, "env spec")?;
    spec.validate().map_err(|e| CliError::Config(format!("env spec {}: {e}", path.display())))?;
    Ok(spec)
}

fn load_demos(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_demos(BufReader::new(file))?)
}

fn load_dataset(path: &Path, env: &EnvSpec) -> Result<(Vec<Trajectory>, Dataset), CliError> {
    let trajectories = load_demos(path)?;
    let dataset = build_dataset(&trajectories, env.space(), env.n_actions())?;
    Ok((trajectories, dataset))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint<ModelCard>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Checkpoint::from_json(&text)?)
}

/// Rebuilds the joint model a checkpoint was trained with.
fn joint_model(card: &ModelCard) -> Result<AvrilModel, CliError> {
    if card.method != Method::Avril {
        return Err(CliError::Config(format!("{:?} checkpoints carry no reward posterior", card.method)));
    }
    Ok(AvrilModel::new(card.train.avril.clone(), card.space, card.n_actions)?)
}

fn imitator(ckpt: &Checkpoint<ModelCard>) -> Result<QPolicy, CliError> {
    let span = ckpt
        .layout
        .span("decoder")
        .ok_or_else(|| CliError::Config("checkpoint has no decoder parameters".into()))?;
    Ok(QPolicy {
        decoder: ckpt.config.decoder.clone(),
        theta: ckpt.params[span].to_vec(),
        beta: ckpt.config.beta,
    })
}

/// Rolls out the environment's expert `n` times.
pub fn gen_demos(env_path: &Path, n: usize, seed: u64, out: &Path) -> Result<GenSummary, CliError> {
    if n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    let spec = load_env(env_path)?;
    let env = spec.environment().map_err(|e| CliError::Config(e.to_string()))?;
    let expert = spec.expert().map_err(|e| CliError::Config(e.to_string()))?;
    let rollouts: Vec<_> = (0..n)
        .map(|i| rollout(env.as_ref(), expert.as_ref(), derive_seed(seed, i), spec.max_steps()))
        .collect();
    let trajectories: Vec<Trajectory> = rollouts.iter().map(|r| r.trajectory.clone()).collect();
    let mut file = create(out)?;
    write_demos(&mut file, &trajectories)?;
    file.flush().map_err(|e| CliError::io(out, e))?;
    Ok(GenSummary {
        n_trajectories: n,
        mean_length: trajectories.iter().map(Trajectory::len).sum::<usize>() as f64 / n as f64,
        mean_return: rollouts.iter().map(|r| r.total_reward).sum::<f64>() / n as f64,
    })
}

/// Trains per `config_path`, writing every artifact under `out_dir`.
pub fn train(config_path: &Path, demos: &Path, out_dir: &Path, seed: Option<u64>) -> Result<TrainSummary, CliError> {
    let mut config: TrainConfig = read_json(config_path, "config")?;
    if let Some(seed) = seed {
        config = config.with_seed(seed);
    }
    run_training(config, demos, out_dir)
}

/// Reruns the training recorded in a manifest into `out_dir`.
///
/// Fails if the demonstrations (or reward checkpoint) no longer match their
/// recorded hashes.
pub fn reproduce(manifest_path: &Path, out_dir: &Path) -> Result<ReproduceSummary, CliError> {
    let manifest: RunManifest = read_json(manifest_path, "manifest")?;
    let check = |recorded: &FileRef| -> Result<(), CliError> {
        let now = FileRef::hash(&recorded.path)?;
        if now.sha256 != recorded.sha256 {
            return Err(CliError::Config(format!(
                "{} changed since the run (sha256 {} vs recorded {})",
                recorded.path.display(),
                now.sha256,
                recorded.sha256
            )));
        }
        Ok(())
    };
    check(&manifest.demos)?;
    if let Some(reward) = &manifest.reward_checkpoint {
        check(reward)?;
    }
    let original_sha256 = std::fs::read(&manifest.artifacts.checkpoint).ok().map(|b| sha256_hex(&b));
    let summary = run_training(manifest.config, &manifest.demos.path, out_dir)?;
    Ok(ReproduceSummary {
        checkpoint_sha256: summary.checkpoint_sha256,
        original_sha256,
    })
}

fn run_training(config: TrainConfig, demos: &Path, out_dir: &Path) -> Result<TrainSummary, CliError> {
    config.validate()?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed(),
        demos: FileRef::hash(demos)?,
        reward_checkpoint: config.reward_checkpoint.as_deref().map(FileRef::hash).transpose()?,
        artifacts: Artifacts {
            checkpoint: out_dir.join("checkpoint.json"),
            log: out_dir.join("log.csv"),
        },
        config,
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_text(&manifest_path, &text)?;

    let config = &manifest.config;
    let (_, dataset) = load_dataset(demos, &config.env)?;
    let (card_encoder, decoder, beta, params, iterations, converged, log_text) = match config.method {
        Method::Avril => {
            let outcome = match avril::train(&dataset, &config.avril) {
                Ok(outcome) => outcome,
                Err(AvrilError::Diverged(d)) => {
                    let mut log = Vec::new();
                    d.log.write_csv(&mut log).expect("in-memory write");
                    write_text(&manifest.artifacts.log, &String::from_utf8_lossy(&log))?;
                    let model = AvrilModel::new(config.avril.clone(), dataset.space, dataset.n_actions)?;
                    let card = card(config, Some(model.encoder.clone()), model.decoder.clone(), config.avril.beta);
                    write_text(&out_dir.join("diverged.json"), &Checkpoint::new(card, &d.last_finite).to_json())?;
                    return Err(AvrilError::Diverged(d).into());
                }
                Err(e) => return Err(e.into()),
            };
            let mut log = Vec::new();
            outcome.log.write_csv(&mut log).expect("in-memory write");
            (
                Some(outcome.model.encoder.clone()),
                outcome.model.decoder.clone(),
                config.avril.beta,
                outcome.params,
                outcome.log.len(),
                outcome.converged,
                String::from_utf8(log).expect("utf-8 csv"),
            )
        }
        Method::Bc => {
            let outcome = bc_train(&dataset, &config.bc_config())?;
            let mut log = String::from("iter,loglik\n");
            for (i, ll) in outcome.log.iter().enumerate() {
                log.push_str(&format!("{i},{ll}\n"));
            }
            let layout = Layout::of_models(&[("decoder", &outcome.decoder)]);
            let params = ParamVector::new(outcome.theta, layout)?;
            (None, outcome.decoder, config.avril.beta, params, outcome.log.len(), false, log)
        }
        Method::Arl => {
            let arl = config.arl.as_ref().expect("validated");
            let path = config.reward_checkpoint.as_ref().expect("validated");
            let reward_ckpt = load_checkpoint(path)?;
            let model = joint_model(&reward_ckpt.config)?;
            if model.space != dataset.space || model.n_actions != dataset.n_actions {
                return Err(CliError::Config("reward checkpoint was trained on a different environment".into()));
            }
            let phi_params = reward_ckpt.params.clone();
            let state_action = model.config.reward_input == RewardInput::StateAction;
            let reward = |s: &State, a: usize| {
                model
                    .encode(&phi_params, s, state_action.then_some(a))
                    .map_or(f64::NAN, |p| p.mean)
            };
            let outcome = arl_train(&dataset, &reward, arl)?;
            let mut log = String::from("refresh,residual\n");
            for (i, r) in outcome.residuals.iter().enumerate() {
                log.push_str(&format!("{i},{r}\n"));
            }
            let layout = Layout::of_models(&[("decoder", &outcome.decoder)]);
            let params = ParamVector::new(outcome.theta, layout)?;
            (None, outcome.decoder, config.avril.beta, params, arl.n_sweeps, false, log)
        }
    };
    write_text(&manifest.artifacts.log, &log_text)?;
    let ckpt_text = Checkpoint::new(card(config, card_encoder, decoder, beta), &params).to_json();
    write_text(&manifest.artifacts.checkpoint, &ckpt_text)?;
    Ok(TrainSummary {
        checkpoint: manifest.artifacts.checkpoint.clone(),
        checkpoint_sha256: sha256_hex(ckpt_text.as_bytes()),
        manifest: manifest_path,
        iterations,
        converged,
    })
}

fn card(config: &TrainConfig, encoder: Option<crate::diffcore::ModelSpec>, decoder: crate::diffcore::ModelSpec, beta: f64) -> ModelCard {
    ModelCard {
        method: config.method,
        env: config.env.clone(),
        space: config.env.space(),
        n_actions: config.env.n_actions(),
        encoder,
        decoder,
        beta,
        train: config.clone(),
    }
}

/// Runs one evaluation mode and returns headline lines.
pub fn eval(args: &EvalArgs) -> Result<Vec<String>, CliError> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let card = &ckpt.config;
    let env_spec = match &args.env {
        Some(path) => load_env(path)?,
        None => card.env.clone(),
    };
    if env_spec.space() != card.space || env_spec.n_actions() != card.n_actions {
        return Err(CliError::Config("environment does not match the checkpoint's state and action spaces".into()));
    }
    let need_demos = || {
        args.demos
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("--mode {:?} needs --demos", args.mode).to_lowercase()))
    };
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    match args.mode {
        EvalMode::Match => {
            let (_, dataset) = load_dataset(need_demos()?, &env_spec)?;
            let r = action_matching(&imitator(&ckpt)?, &dataset.transitions)?;
            let skipped: Vec<String> = r.skipped_classes.iter().map(usize::to_string).collect();
            let path = args.out.join("match.csv");
            write_text(
                &path,
                &format!("acc,auc,aps,n_test,skipped_classes\n{},{},{},{},{}\n", r.acc, r.auc, r.aps, r.n_test, skipped.join(";")),
            )?;
            Ok(vec![format!("ACC {:.4} AUC {:.4} APS {:.4} over {} tuples", r.acc, r.auc, r.aps, r.n_test)])
        }
        EvalMode::Rollout => {
            let env = env_spec.environment().map_err(|e| CliError::Config(e.to_string()))?;
            let policy = Greedy(imitator(&ckpt)?);
            let r = live_return(env.as_ref(), &policy, args.episodes, env_spec.max_steps(), args.seed);
            let mut text = String::from("episode,return\n");
            for (i, ret) in r.returns.iter().enumerate() {
                text.push_str(&format!("{i},{ret}\n"));
            }
            write_text(&args.out.join("returns.csv"), &text)?;
            Ok(vec![format!("mean return {:.4} (std {:.4}) over {} episodes", r.mean, r.std, args.episodes)])
        }
        EvalMode::Heatmaps => {
            let grid = env_spec
                .gridworld()
                .ok_or_else(|| CliError::Config("heatmaps need a gridworld environment".into()))?;
            let model = joint_model(card)?;
            let demos = load_demos(need_demos()?)?;
            let maps = posterior_maps(&model, &ckpt.params, grid, &demos)?;
            let paths = maps.write_dir(&args.out).map_err(|e| CliError::io(&args.out, e))?;
            let mut lines: Vec<String> = paths.iter().map(|p| format!("wrote {}", p.display())).collect();
            match uncertainty_occupancy_correlation(&maps) {
                Ok(rho) => lines.push(format!("spearman(posterior std, occupancy) {rho:.4}")),
                Err(e) => lines.push(format!("spearman(posterior std, occupancy) {e}")),
            }
            Ok(lines)
        }
        EvalMode::Slice => {
            let model = joint_model(card)?;
            let dim = model.space.dim();
            let base = match &args.base {
                Some(text) => text
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(format!("--base: {e}")))?,
                None => vec![0.0; dim],
            };
            if base.len() != dim {
                return Err(CliError::Config(format!("--base has {} values, the state has {dim}", base.len())));
            }
            let action = match model.config.reward_input {
                RewardInput::StateOnly => None,
                RewardInput::StateAction => Some(args.action.unwrap_or(0)),
            };
            let rows = reward_slice(&model, &ckpt.params, &base, args.dim, (args.lo, args.hi), args.samples, action)?;
            let path = args.out.join("slice.csv");
            let mut file = create(&path)?;
            write_slice_csv(&rows, &mut file)
                .and_then(|_| file.flush())
                .map_err(|e| CliError::io(&path, e))?;
            Ok(vec![format!("wrote {} rows to {}", rows.len(), path.display())])
        }
    }
}
