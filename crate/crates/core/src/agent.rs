//! DQN agent that performs `tau` sequential mini-batch updates per environment step.
//!
//! Per environment step: pick an epsilon-greedy action, step the environment,
//! store the transition, run `tau` replay updates once past the replay-start
//! prefix, decay epsilon, and refresh the target network every `target_refresh`
//! environment steps. The target network is never refreshed inside the replay loop.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, CarState, EnvError, MountainCar, StepResult};
use crate::nn::{self, MlpParams, NnError, Scratch};
use crate::optim::{adam_step, AdamConfig, AdamState, OptimError};
use crate::replay::{ReplayBuffer, ReplayError, Transition};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Replay frequency: mini-batch updates per environment step.
    pub tau: u32,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub capacity: usize,
    /// Target refresh period `C`, in environment steps.
    pub target_refresh: u64,
    pub gamma: f64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub epsilon_decay: f64,
    /// Environment steps collected before the first update.
    pub replay_start: u64,
    /// Bootstrap through the step-limit cutoff (cutoff transitions stored as non-terminal).
    pub bootstrap_on_truncation: bool,
    /// Decay epsilon during the replay-start prefix as well.
    pub decay_during_prefill: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            tau: 1,
            adam: AdamConfig::default(),
            batch_size: 32,
            capacity: 4000,
            target_refresh: 128,
            gamma: 0.99,
            epsilon_initial: 1.0,
            epsilon_final: 0.1,
            epsilon_decay: 0.999,
            replay_start: 1024,
            bootstrap_on_truncation: true,
            decay_during_prefill: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |msg: &str| Err(AgentError::Config(msg.to_string()));
        if self.tau < 1 {
            return fail("tau must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.batch_size as u64 > self.replay_start {
            return fail("batch_size must not exceed replay_start");
        }
        if self.capacity == 0 {
            return fail("capacity must be positive");
        }
        if self.target_refresh == 0 {
            return fail("target_refresh must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail("gamma must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_initial) || !(0.0..=1.0).contains(&self.epsilon_final) {
            return fail("epsilon_initial and epsilon_final must be in [0, 1]");
        }
        if self.epsilon_final > self.epsilon_initial {
            return fail("epsilon_final must not exceed epsilon_initial");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return fail("epsilon_decay must be in (0, 1]");
        }
        self.adam
            .validate()
            .map_err(|e| AgentError::Config(e.to_string()))
    }
}

/// Epsilon-greedy choice; greedy ties go to the lowest action index.
pub fn select_action<R: Rng + ?Sized>(
    params: &MlpParams,
    state: &CarState,
    epsilon: f64,
    rng: &mut R,
    scratch: &mut Scratch,
) -> Result<Action, NnError> {
    if rng.random::<f64>() < epsilon {
        Ok(Action::ALL[rng.random_range(0..Action::COUNT)])
    } else {
        Ok(params.forward_with(state, scratch)?.argmax())
    }
}

pub fn decay_epsilon(epsilon: f64, cfg: &AgentConfig) -> f64 {
    (epsilon * cfg.epsilon_decay).max(cfg.epsilon_final)
}

/// `r` for terminal transitions, otherwise `r + gamma * max_a Q(s', a; target)`.
pub fn compute_targets(
    target: &MlpParams,
    batch: &[Transition],
    gamma: f64,
) -> Result<Vec<f64>, NnError> {
    let mut scratch = Scratch::new(target);
    batch
        .iter()
        .map(|t| target_value(target, t, gamma, &mut scratch))
        .collect()
}

#[inline]
fn target_value(
    target: &MlpParams,
    t: &Transition,
    gamma: f64,
    scratch: &mut Scratch,
) -> Result<f64, NnError> {
    if t.terminal {
        Ok(t.reward)
    } else {
        Ok(t.reward + gamma * target.forward_with(&t.next_state, scratch)?.max())
    }
}

/// The two per-run random streams the agent consumes.
#[derive(Debug, Clone)]
pub struct AgentRngs {
    pub exploration: ChaCha8Rng,
    pub sampling: ChaCha8Rng,
}

/// Reused mini-batch buffers.
#[derive(Debug, Clone, Default)]
struct BatchBuffers {
    slots: Vec<usize>,
    states: Vec<CarState>,
    actions: Vec<Action>,
    targets: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    online: MlpParams,
    target: MlpParams,
    adam: AdamState,
    epsilon: f64,
    env_steps: u64,
    updates: u64,
    last_loss: Option<f64>,
    grads: MlpParams,
    scratch: Scratch,
    batch: BatchBuffers,
}

impl Agent {
    pub fn new(cfg: AgentConfig, init: MlpParams) -> Result<Self, AgentError> {
        cfg.validate()?;
        if !init.all_finite() {
            return Err(AgentError::Config("initial parameters are not finite".into()));
        }
        Ok(Self {
            cfg,
            target: init.clone(),
            adam: AdamState::new(&init),
            grads: MlpParams::zeros_like(&init),
            scratch: Scratch::new(&init),
            online: init,
            epsilon: cfg.epsilon_initial,
            env_steps: 0,
            updates: 0,
            last_loss: None,
            batch: BatchBuffers::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn online(&self) -> &MlpParams {
        &self.online
    }

    pub fn target(&self) -> &MlpParams {
        &self.target
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn act<R: Rng + ?Sized>(&mut self, state: &CarState, rng: &mut R) -> Result<Action, NnError> {
        select_action(&self.online, state, self.epsilon, rng, &mut self.scratch)
    }

    /// One environment interaction plus the learning that follows it.
    /// The environment must hold an unfinished episode.
    pub fn env_step(
        &mut self,
        env: &mut MountainCar,
        buffer: &mut ReplayBuffer,
        rngs: &mut AgentRngs,
    ) -> Result<StepResult, AgentError> {
        let step = self.env_steps + 1;
        let state = env.state();
        let action = self.act(&state, &mut rngs.exploration)?;
        let result = env.step(action)?;
        let terminal = result.terminated || (result.truncated && !self.cfg.bootstrap_on_truncation);
        buffer.push(Transition {
            state,
            action,
            reward: result.reward,
            next_state: result.next_state,
            terminal,
        });

        let learning = step > self.cfg.replay_start;
        if learning {
            for _ in 0..self.cfg.tau {
                self.replay_update(buffer, &mut rngs.sampling)?;
            }
        }
        if learning || self.cfg.decay_during_prefill {
            self.epsilon = decay_epsilon(self.epsilon, &self.cfg);
        }
        if step % self.cfg.target_refresh == 0 {
            self.target.clone_from(&self.online);
        }
        self.env_steps = step;
        Ok(result)
    }

    fn replay_update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        let b = &mut self.batch;
        buffer.sample_slots(self.cfg.batch_size, rng, &mut b.slots)?;
        b.states.clear();
        b.actions.clear();
        b.targets.clear();
        for &slot in &b.slots {
            let t = buffer.slot(slot);
            b.states.push(t.state);
            b.actions.push(t.action);
            b.targets
                .push(target_value(&self.target, t, self.cfg.gamma, &mut self.scratch)?);
        }
        let loss = nn::td_loss_and_grad_into(
            &self.online,
            &b.states,
            &b.actions,
            &b.targets,
            &mut self.grads,
            &mut self.scratch,
        )?;
        adam_step(&mut self.online, &self.grads, &mut self.adam, &self.cfg.adam)?;
        self.updates += 1;
        self.last_loss = Some(loss);
        Ok(())
    }
}
