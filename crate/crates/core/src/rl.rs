//! Policy-gradient training of the stochastic user policy.
//!
//! The user gets `-rho_eff + rho_act * m` per turn (m = number of actions it
//! emitted) and a terminal reward of `success_reward` or `fail_penalty`,
//! folded into the last step. Updates use the clipped surrogate objective
//! with an analytic gradient, a running-mean baseline and an entropy bonus.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::generator::realize::TemplateTable;
use crate::generator::{Generator, PolicyParameters, PolicyTrace, StochasticGenerator};
use crate::harness::{run_indexed, user_episode_return, user_turn_reward, BatchConfig, GeneratorFactory, HarnessError, Transcript};
use crate::ontology::Ontology;
use crate::stats::{self, MeanCi};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub rho_eff: f64,
    pub rho_act: f64,
    pub success_reward: f64,
    pub fail_penalty: f64,
}

impl RewardConfig {
    pub const fn new(rho_eff: f64, rho_act: f64) -> Self {
        Self {
            rho_eff,
            rho_act,
            success_reward: 80.0,
            fail_penalty: -40.0,
        }
    }

    /// Penalizes every action: `-5 m` per turn.
    pub const fn r1() -> Self {
        Self::new(0.0, -5.0)
    }

    /// The alternative reading `-5 + m` per turn.
    pub const fn r1_prose() -> Self {
        Self::new(5.0, 1.0)
    }

    /// Rewards every action: `-10 + 20 m` per turn.
    pub const fn r2() -> Self {
        Self::new(10.0, 20.0)
    }

    pub fn named(name: &str) -> Option<Self> {
        match name {
            "r1" => Some(Self::r1()),
            "r1_prose" => Some(Self::r1_prose()),
            "r2" => Some(Self::r2()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub episodes_per_update: usize,
    pub updates: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    /// Gradient norm cap.
    pub max_grad_norm: f64,
    /// Weight of the old value in the running baseline.
    pub baseline_decay: f64,
    pub reward: RewardConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            epochs: 4,
            episodes_per_update: 64,
            updates: 150,
            learning_rate: 0.1,
            entropy_coef: 0.01,
            max_grad_norm: 5.0,
            baseline_decay: 0.8,
            reward: RewardConfig::r1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlError {
    #[error("non-finite {0} during the update")]
    NonFinite(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// One user turn of an episode.
#[derive(Clone, Debug)]
pub struct Step {
    pub trace: PolicyTrace,
    pub old_log_prob: f64,
    pub reward: f64,
    pub discounted_return: f64,
    pub advantage: f64,
}

/// Per-step rewards of a transcript with the terminal reward on the last step.
pub fn step_rewards(t: &Transcript, rc: &RewardConfig) -> Vec<f64> {
    let mut r: Vec<f64> = t.turns.iter().map(|turn| user_turn_reward(turn.m, rc)).collect();
    if let Some(last) = r.last_mut() {
        *last += if t.is_success() { rc.success_reward } else { rc.fail_penalty };
    }
    r
}

/// `G_t = r_t + gamma G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Steps of one transcript, advantages not yet filled in.
pub fn collect_episode(t: &Transcript, params: &PolicyParameters, cfg: &PpoConfig) -> Vec<Step> {
    let rewards = step_rewards(t, &cfg.reward);
    let returns = discounted_returns(&rewards, cfg.gamma);
    t.turns
        .iter()
        .zip(rewards.iter().zip(&returns))
        .filter_map(|(turn, (r, g))| {
            turn.trace.as_ref().map(|trace| Step {
                old_log_prob: trace.log_prob(params),
                trace: trace.clone(),
                reward: *r,
                discounted_return: *g,
                advantage: 0.0,
            })
        })
        .collect()
}

/// Runs dialogues `first..first + n` with a frozen copy of `params`.
pub fn collect_batch(
    params: &PolicyParameters,
    o: &Ontology,
    batch: &BatchConfig,
    cfg: &PpoConfig,
    first: u64,
    n: usize,
) -> Result<(Vec<Step>, Vec<Transcript>), RlError> {
    let mut steps = Vec::new();
    let mut transcripts = Vec::new();
    for index in first..first + n as u64 {
        let mut us = StochasticGenerator::new(params.clone(), TemplateTable::builtin());
        let t = run_indexed(&mut us, o, batch, index)?;
        steps.extend(collect_episode(&t, params, cfg));
        transcripts.push(t);
    }
    Ok((steps, transcripts))
}

/// Exponential moving average of batch-mean returns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningBaseline {
    pub value: Option<f64>,
}

impl RunningBaseline {
    pub fn update(&mut self, batch_mean: f64, decay: f64) -> f64 {
        let v = match self.value {
            None => batch_mean,
            Some(old) => decay * old + (1.0 - decay) * batch_mean,
        };
        self.value = Some(v);
        v
    }
}

/// Fills in normalized advantages `(G_t - b) / sd`.
pub fn assign_advantages(steps: &mut [Step], baseline: f64) {
    let raw: Vec<f64> = steps.iter().map(|s| s.discounted_return - baseline).collect();
    let sd = stats::std_dev(&raw).unwrap_or(0.0);
    let scale = if sd > 1e-8 { sd } else { 1.0 };
    for (s, a) in steps.iter_mut().zip(raw) {
        s.advantage = a / scale;
    }
}

/// Clipped surrogate (plus entropy bonus) and its gradient, averaged over
/// steps.
pub fn surrogate_and_grad(steps: &[Step], params: &PolicyParameters, clip: f64, entropy_coef: f64) -> (f64, Vec<f64>) {
    let n = params.weights.len();
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    if steps.is_empty() {
        return (0.0, grad);
    }
    for s in steps {
        let ratio = libm::exp(s.trace.log_prob(params) - s.old_log_prob);
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
        total += unclipped.min(clipped);
        let active = !((s.advantage > 0.0 && ratio > 1.0 + clip) || (s.advantage < 0.0 && ratio < 1.0 - clip));
        if active {
            let g = s.trace.grad_log_prob(params);
            for j in 0..n {
                grad[j] += s.advantage * ratio * g[j];
            }
        }
        if entropy_coef != 0.0 {
            let (h, gh) = s.trace.entropy_and_grad(params);
            total += entropy_coef * h;
            for j in 0..n {
                grad[j] += entropy_coef * gh[j];
            }
        }
    }
    let m = steps.len() as f64;
    (total / m, grad.into_iter().map(|g| g / m).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub surrogate: f64,
    pub grad_norm: f64,
    /// Share of steps whose ratio left the clip range, after the last epoch.
    pub clip_fraction: f64,
    /// Sample estimate of KL(old || new), after the last epoch.
    pub approx_kl: f64,
}

/// `epochs` gradient-ascent steps on the clipped surrogate. Leaves `params`
/// untouched and returns an error if anything becomes non-finite.
pub fn ppo_update(params: &mut PolicyParameters, steps: &[Step], cfg: &PpoConfig) -> Result<UpdateStats, RlError> {
    if steps.is_empty() {
        return Err(RlError::Config("empty batch".into()));
    }
    let mut next = params.clone();
    let mut stats = UpdateStats {
        surrogate: 0.0,
        grad_norm: 0.0,
        clip_fraction: 0.0,
        approx_kl: 0.0,
    };
    for _ in 0..cfg.epochs {
        let (obj, mut grad) = surrogate_and_grad(steps, &next, cfg.clip, cfg.entropy_coef);
        if !obj.is_finite() {
            return Err(RlError::NonFinite("objective"));
        }
        let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
        if !norm.is_finite() {
            return Err(RlError::NonFinite("gradient"));
        }
        if norm > cfg.max_grad_norm {
            grad.iter_mut().for_each(|g| *g *= cfg.max_grad_norm / norm);
        }
        for (w, g) in next.weights.iter_mut().zip(&grad) {
            *w += cfg.learning_rate * g;
        }
        if next.weights.iter().any(|w| !w.is_finite()) {
            return Err(RlError::NonFinite("weights"));
        }
        stats.surrogate = obj;
        stats.grad_norm = norm;
    }
    let mut clipped = 0usize;
    let mut kl = 0.0;
    for s in steps {
        let diff = s.trace.log_prob(&next) - s.old_log_prob;
        kl -= diff;
        let ratio = libm::exp(diff);
        clipped += (ratio < 1.0 - cfg.clip || ratio > 1.0 + cfg.clip) as usize;
    }
    stats.clip_fraction = clipped as f64 / steps.len() as f64;
    stats.approx_kl = kl / steps.len() as f64;
    *params = next;
    Ok(stats)
}

/// One point of the learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub avg_actions: f64,
    pub avg_turns: f64,
    pub surrogate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub final_params: PolicyParameters,
    /// Parameters that produced the best batch-mean return.
    pub best_params: PolicyParameters,
    pub curve: Vec<CurvePoint>,
}

/// Runs `episodes_per_update` dialogues per update against the scripted
/// system described by `batch`. Episode `k` of update `u` uses stream
/// `(batch.seed, u * episodes_per_update + k)`.
pub fn train(
    o: &Ontology,
    init: PolicyParameters,
    cfg: &PpoConfig,
    batch: &BatchConfig,
    mut on_update: impl FnMut(&CurvePoint),
) -> Result<TrainResult, RlError> {
    init.validate().map_err(|e| RlError::Config(format!("{e}")))?;
    if cfg.episodes_per_update == 0 {
        return Err(RlError::Config("episodes_per_update must be positive".into()));
    }
    if !(cfg.clip > 0.0 && (0.0..=1.0).contains(&cfg.gamma) && cfg.learning_rate > 0.0) {
        return Err(RlError::Config("clip, gamma and learning_rate out of range".into()));
    }
    let mut params = init;
    if params.temperature <= crate::generator::stochastic::GREEDY_TEMPERATURE {
        params.temperature = 1.0;
    }
    let mut baseline = RunningBaseline::default();
    let mut best: Option<(f64, PolicyParameters)> = None;
    let mut curve = Vec::new();
    for u in 0..cfg.updates {
        let first = (u * cfg.episodes_per_update) as u64;
        let (mut steps, transcripts) = collect_batch(&params, o, batch, cfg, first, cfg.episodes_per_update)?;
        let returns: Vec<f64> = transcripts.iter().map(|t| user_episode_return(t, &cfg.reward)).collect();
        let mean_return = stats::mean(&returns).unwrap_or(0.0);
        if best.as_ref().is_none_or(|(r, _)| mean_return > *r) {
            best = Some((mean_return, params.clone()));
        }
        let step_returns: Vec<f64> = steps.iter().map(|s| s.discounted_return).collect();
        let b = baseline.update(stats::mean(&step_returns).unwrap_or(0.0), cfg.baseline_decay);
        assign_advantages(&mut steps, b);
        let st = if steps.is_empty() {
            UpdateStats::default()
        } else {
            ppo_update(&mut params, &steps, cfg)?
        };
        let summary = crate::harness::summarize(&transcripts);
        let point = CurvePoint {
            update: u,
            mean_return,
            success_rate: summary.success_rate,
            avg_actions: summary.avg_actions_per_turn,
            avg_turns: summary.avg_turns,
            surrogate: st.surrogate,
        };
        on_update(&point);
        curve.push(point);
    }
    let best_params = best.map(|(_, p)| p).unwrap_or_else(|| params.clone());
    Ok(TrainResult {
        final_params: params,
        best_params,
        curve,
    })
}

/// One row of the cross-reward table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub name: String,
    pub dialogues: usize,
    pub success: f64,
    pub avg_acts: f64,
    pub turns: f64,
    /// Mean episode return with its 95% half-width, per reward name.
    pub returns: Vec<(String, MeanCi)>,
}

impl RewardRow {
    pub fn from_transcripts(name: &str, ts: &[Transcript], rewards: &[(String, RewardConfig)]) -> Self {
        let s = crate::harness::summarize(ts);
        let returns = rewards
            .iter()
            .map(|(rn, rc)| {
                let xs: Vec<f64> = ts.iter().map(|t| user_episode_return(t, rc)).collect();
                let ci = stats::mean_ci(&xs).unwrap_or(MeanCi { mean: 0.0, ci95: 0.0, n: 0 });
                (rn.clone(), ci)
            })
            .collect();
        Self {
            name: name.into(),
            dialogues: ts.len(),
            success: s.success_rate,
            avg_acts: s.avg_actions_per_turn,
            turns: s.avg_turns,
            returns,
        }
    }

    pub fn mean_return(&self, reward: &str) -> Option<f64> {
        self.returns.iter().find(|(n, _)| n == reward).map(|(_, c)| c.mean)
    }
}

/// The default reward columns: `R_1` and `R_2`.
pub fn default_reward_columns() -> Vec<(String, RewardConfig)> {
    vec![("R_1".into(), RewardConfig::r1()), ("R_2".into(), RewardConfig::r2())]
}

/// Evaluates each user against the scripted system on dialogues
/// `0..n_dialogues` of every seed, under every reward.
pub fn cross_reward_eval(
    users: &[(String, GeneratorFactory<'_>)],
    rewards: &[(String, RewardConfig)],
    o: &Ontology,
    batch: &BatchConfig,
    n_dialogues: usize,
    seeds: &[u64],
) -> Result<Vec<RewardRow>, RlError> {
    if n_dialogues == 0 || seeds.is_empty() {
        return Err(HarnessError::NoDialogues.into());
    }
    let mut rows = Vec::new();
    for (name, make) in users {
        let mut ts = Vec::new();
        for &seed in seeds {
            let cfg = BatchConfig { seed, ..batch.clone() };
            for k in 0..n_dialogues as u64 {
                let mut us: Box<dyn Generator> = make();
                ts.push(run_indexed(us.as_mut(), o, &cfg, k)?);
            }
        }
        rows.push(RewardRow::from_transcripts(name, &ts, rewards));
    }
    Ok(rows)
}

pub fn reward_table_tsv(rows: &[RewardRow]) -> String {
    let mut out = String::from("user\tSuccess\tAvg Acts\tTurns");
    if let Some(first) = rows.first() {
        for (n, _) in &first.returns {
            out.push('\t');
            out.push_str(n);
        }
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}\t{:.3}\t{:.2}\t{:.2}", r.name, r.success, r.avg_acts, r.turns));
        for (_, c) in &r.returns {
            out.push_str(&format!("\t{:.2}\u{b1}{:.2}", c.mean, c.ci95));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::stochastic::{Choice, N_FEATURES};
    use crate::ontology::load_ontology;

    const MULTIWOZ: &str = include_str!("../../../data/ontology/multiwoz.json");

    #[test]
    fn returns_fold_terminal_reward() {
        let r = discounted_returns(&[1.0, 2.0, 3.0], 0.5);
        assert_eq!(r, vec![1.0 + 0.5 * (2.0 + 0.5 * 3.0), 2.0 + 1.5, 3.0]);
        assert_eq!(discounted_returns(&[], 0.9), Vec::<f64>::new());
    }

    #[test]
    fn baseline() {
        let mut b = RunningBaseline::default();
        assert_eq!(b.update(10.0, 0.8), 10.0);
        assert!((b.update(20.0, 0.8) - 12.0).abs() < 1e-12);
    }

    fn toy_step(advantage: f64) -> Step {
        let mut a = [0.0; N_FEATURES];
        a[0] = 1.0;
        let stop = [0.0; N_FEATURES];
        let trace = PolicyTrace {
            choices: vec![Choice { features: vec![a, stop], chosen: 0 }],
        };
        Step {
            old_log_prob: trace.log_prob(&PolicyParameters::zeros()),
            trace,
            reward: 0.0,
            discounted_return: 0.0,
            advantage,
        }
    }

    #[test]
    fn surrogate_gradient_matches_finite_difference() {
        let steps = vec![toy_step(1.0), toy_step(-0.5)];
        let mut p = PolicyParameters::zeros();
        p.weights[0] = 0.1;
        let (_, g) = surrogate_and_grad(&steps, &p, 0.2, 0.01);
        let h = 1e-6;
        let mut hi = p.clone();
        hi.weights[0] += h;
        let mut lo = p.clone();
        lo.weights[0] -= h;
        let fd = (surrogate_and_grad(&steps, &hi, 0.2, 0.01).0 - surrogate_and_grad(&steps, &lo, 0.2, 0.01).0) / (2.0 * h);
        assert!((g[0] - fd).abs() < 1e-6, "{} vs {}", g[0], fd);
    }

    #[test]
    fn positive_advantage_raises_probability() {
        let steps = vec![toy_step(1.0)];
        let mut p = PolicyParameters::zeros();
        let before = steps[0].trace.log_prob(&p);
        ppo_update(&mut p, &steps, &PpoConfig::default()).unwrap();
        assert!(steps[0].trace.log_prob(&p) > before);
    }

    #[test]
    fn non_finite_update_is_rejected() {
        let mut s = toy_step(f64::NAN);
        s.advantage = f64::NAN;
        let mut p = PolicyParameters::zeros();
        let before = p.clone();
        assert!(ppo_update(&mut p, &[s], &PpoConfig::default()).is_err());
        assert_eq!(p, before);
    }

    #[test]
    fn short_training_run() {
        let o = load_ontology(MULTIWOZ).unwrap();
        let cfg = PpoConfig {
            updates: 2,
            episodes_per_update: 4,
            ..Default::default()
        };
        let res = train(&o, PolicyParameters::rule_like(), &cfg, &BatchConfig::default(), |_| {}).unwrap();
        assert_eq!(res.curve.len(), 2);
        res.final_params.validate().unwrap();
    }
}
