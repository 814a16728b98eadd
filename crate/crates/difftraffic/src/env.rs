//! Episodic RL environments over the traffic simulation.
//!
//! A scenario wraps the dynamics into a reset/step interface with one
//! externally controlled vehicle. Every step yields an [`ExperienceUnit`]
//! carrying the simulator-provided gradients of the reward and next
//! observation with respect to the action, which is what gradient-enhanced
//! training consumes.
//!
//! Two scenarios ship: a closed ring (the canonical single-lane
//! stabilization task, no control-flow discontinuities) and a simplified
//! figure eight, where the closed loop self-intersects once and vehicles
//! yield to cross traffic with a braking override that zeroes gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fuel::FuelModel;
use crate::idm::{idm_accelerations, IdmParams, Topology, TrafficState, VehicleState};
use crate::jacobian::action_sensitivity;
use crate::reward::{reward_grad_state, reward_terms, velocity_reward, RewardTerms, RewardWeights};
use crate::sim::{equilibrium_state, equilibrium_velocity, integrate, StepConfig};
use crate::{Error, Result};

/// Reward added (it is negative) when a step produces an overlap; the
/// episode also terminates.
pub const COLLISION_PENALTY: f64 = -50.0;

/// Distance before a crossing coordinate within which a figure-eight vehicle
/// checks for conflicting traffic (m).
pub const APPROACH_WINDOW: f64 = 15.0;

/// Distance past a crossing coordinate within which a vehicle still occupies
/// the physical conflict zone (m).
pub const CONFLICT_ZONE: f64 = 5.0;

/// Which track the scenario runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Ring,
    /// One closed loop whose quarter and three-quarter coordinates map to the
    /// same physical crossing.
    FigureEight,
}

/// How vehicles are placed at reset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Uniform spacing at the equilibrium velocity.
    Equilibrium,
    /// Uniform spacing with Gaussian position noise of the given standard
    /// deviation (m); `sigma = 0` reproduces exact uniform spacing.
    UniformPerturbed { sigma: f64 },
}

/// Complete description of an episodic scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Loop length (m).
    pub track_length: f64,
    pub vehicle_count: usize,
    pub controlled_index: usize,
    pub idm: IdmParams,
    pub step: StepConfig,
    pub weights: RewardWeights,
    pub fuel: FuelModel,
    /// Steps per episode.
    pub horizon: usize,
    pub init: InitialCondition,
    /// Uncontrolled steps run at reset before the policy sees the state.
    pub warmup_steps: usize,
}

impl ScenarioConfig {
    /// The shipped training scenario: a ring dense enough that uniform flow
    /// is string-unstable and stop-and-go waves grow from small position
    /// noise.
    pub fn unstable_ring() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Ring,
            track_length: 150.0,
            vehicle_count: 14,
            controlled_index: 0,
            idm: IdmParams::default(),
            step: StepConfig::default(),
            weights: RewardWeights::default(),
            fuel: FuelModel::default(),
            horizon: 3000,
            init: InitialCondition::UniformPerturbed { sigma: 2.0 },
            warmup_steps: 50,
        }
    }

    /// The discontinuity-bearing secondary scenario.
    pub fn figure_eight() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::FigureEight,
            track_length: 240.0,
            vehicle_count: 14,
            ..ScenarioConfig::unstable_ring()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.idm.validate()?;
        self.step.validate()?;
        self.weights.validate()?;
        self.fuel.validate()?;
        if self.vehicle_count == 0 {
            return Err(Error::EmptyState);
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if self.controlled_index >= self.vehicle_count {
            return Err(Error::IndexOutOfRange {
                index: self.controlled_index,
                count: self.vehicle_count,
            });
        }
        let segment = self.track_length / self.vehicle_count as f64;
        if segment <= self.idm.vehicle_length + self.idm.min_gap {
            return Err(Error::InfeasibleSpacing {
                segment,
                length: self.idm.vehicle_length,
                min_gap: self.idm.min_gap,
            });
        }
        if self.kind == ScenarioKind::FigureEight && self.track_length <= 4.0 * APPROACH_WINDOW {
            return Err(Error::InvalidParameter(format!(
                "figure-eight track of {} m is shorter than four approach windows",
                self.track_length
            )));
        }
        if let InitialCondition::UniformPerturbed { sigma } = self.init {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::InvalidParameter(format!("sigma {sigma}")));
            }
        }
        Ok(())
    }

    fn crossing_coordinates(&self) -> (f64, f64) {
        (self.track_length * 0.25, self.track_length * 0.75)
    }
}

/// Flattened, normalized view of the traffic state handed to the policy.
///
/// Entries are `[x/L, v/v0]` pairs in vehicle order starting from the
/// controlled vehicle and continuing rearward around the loop, so the
/// controlled vehicle always occupies the first two slots. Positions are
/// expressed in the controlled vehicle's frame (distance ahead of it along
/// the track): unlike absolute ring coordinates, these never wrap in the
/// middle of a following gap and are invariant to where on the loop the
/// platoon happens to sit.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One step of interaction with the simulator gradients attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceUnit {
    pub obs: Observation,
    /// The clamped action actually applied.
    pub action: f64,
    pub reward: f64,
    pub next_obs: Observation,
    /// Gradient of the reward with respect to the action, through the next
    /// state.
    pub reward_grad_action: f64,
    /// Gradient of the next observation with respect to the action.
    pub next_obs_grad_action: Vec<f64>,
    pub done: bool,
    /// True when the controlled vehicle clipped or was overridden this step;
    /// both gradients are zero in that case.
    pub gradient_blocked: bool,
}

/// Everything produced by one environment step.
#[derive(Debug, Clone)]
pub struct EnvStep {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub unit: ExperienceUnit,
    pub terms: RewardTerms,
    pub collided: bool,
    /// Applied acceleration per vehicle (pre-clip).
    pub accelerations: Vec<f64>,
    pub clipped: Vec<bool>,
    pub overridden: Vec<bool>,
    /// The action of the preceding step, the reference of this step's jerk
    /// penalty (zero at the start of an episode).
    pub prev_action: f64,
}

/// Episodic environment owning one simulation.
#[derive(Debug, Clone)]
pub struct TrafficEnv {
    config: ScenarioConfig,
    state: TrafficState,
    last_obs: Observation,
    prev_action: f64,
    steps_taken: usize,
    finished: bool,
}

impl TrafficEnv {
    /// Builds the environment and performs the first reset.
    pub fn new(config: ScenarioConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut env = TrafficEnv {
            config,
            state: TrafficState::new(Vec::new(), Topology::OpenRoad),
            last_obs: Observation(Vec::new()),
            prev_action: 0.0,
            steps_taken: 0,
            finished: true,
        };
        env.reset(seed)?;
        Ok(env)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn state(&self) -> &TrafficState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.finished
    }

    /// Places vehicles per the initial-condition spec, runs the warmup with
    /// all vehicles on IDM, and returns the first observation. Deterministic
    /// in the seed.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = match cfg.init {
            InitialCondition::Equilibrium => {
                equilibrium_state(cfg.vehicle_count, &cfg.idm, cfg.track_length)?
            }
            InitialCondition::UniformPerturbed { sigma } => {
                perturbed_uniform_state(cfg, sigma, &mut rng)?
            }
        };
        state.controlled_index = Some(cfg.controlled_index);

        for k in 0..cfg.warmup_steps {
            let (accels, _) = scenario_accelerations(&state, cfg, None)?;
            let out = integrate(&state, &cfg.idm, &cfg.step, &accels)?;
            if out.collided() {
                return Err(Error::Config(format!(
                    "scenario collided during warmup step {k}; loosen the initial conditions"
                )));
            }
            state = out.state;
        }

        self.state = state;
        self.last_obs = observe(&self.state, cfg);
        self.prev_action = 0.0;
        self.steps_taken = 0;
        self.finished = false;
        Ok(self.last_obs.clone())
    }

    /// Advances one step with the controlled vehicle applying `action`
    /// (clamped to the configured bounds).
    pub fn step(&mut self, action: f64) -> Result<EnvStep> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        if !action.is_finite() {
            return Err(Error::NonFinite("action"));
        }
        let cfg = self.config.clone();
        let clamped = cfg.step.clamp_action(action);
        let (accels, overridden) = scenario_accelerations(&self.state, &cfg, Some(clamped))?;
        let out = integrate(&self.state, &cfg.idm, &cfg.step, &accels)?;

        self.steps_taken += 1;
        let collided = out.collided();
        let done = collided || self.steps_taken >= cfg.horizon;

        let terms = reward_terms(
            &out.state,
            &out.accelerations,
            clamped,
            self.prev_action,
            &cfg.fuel,
        )?;
        let mut reward = terms.combine(&cfg.weights);
        if collided {
            reward += COLLISION_PENALTY;
        }

        let controlled = cfg.controlled_index;
        let blocked = out.clipped[controlled] || overridden[controlled];
        let (dr_da, ds_da_obs) = if blocked {
            (0.0, vec![0.0; 2 * cfg.vehicle_count])
        } else {
            let grad_state =
                reward_grad_state(&out.state, &out.accelerations, &cfg.weights, &cfg.fuel)?;
            let sens = action_sensitivity(&self.state, &cfg.step, clamped, &grad_state)?;
            debug_assert_eq!(sens.clipped, out.clipped[controlled]);
            let obs_grad = raw_grad_to_observation(&sens.d_next_state_d_action, &cfg);
            (sens.d_reward_d_action, obs_grad)
        };

        let next_obs = observe(&out.state, &cfg);
        let unit = ExperienceUnit {
            obs: self.last_obs.clone(),
            action: clamped,
            reward,
            next_obs: next_obs.clone(),
            reward_grad_action: dr_da,
            next_obs_grad_action: ds_da_obs,
            done,
            gradient_blocked: blocked,
        };

        let prev_action = self.prev_action;
        self.state = out.state;
        self.last_obs = next_obs.clone();
        self.prev_action = clamped;
        self.finished = done;

        Ok(EnvStep {
            observation: next_obs,
            reward,
            done,
            unit,
            terms,
            collided,
            accelerations: out.accelerations,
            clipped: out.clipped,
            overridden,
            prev_action,
        })
    }
}

/// Uniform spacing plus Gaussian position noise, redrawn until no vehicles
/// overlap.
fn perturbed_uniform_state(
    cfg: &ScenarioConfig,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TrafficState> {
    let n = cfg.vehicle_count;
    let spacing = cfg.track_length / n as f64;
    let velocity = equilibrium_velocity(spacing - cfg.idm.vehicle_length, &cfg.idm)?;
    for _ in 0..100 {
        let vehicles: Vec<VehicleState> = (0..n)
            .map(|i| VehicleState {
                position: ((n - 1 - i) as f64 * spacing + sigma * gaussian(rng))
                    .rem_euclid(cfg.track_length),
                velocity,
            })
            .collect();
        let state = TrafficState::new(
            vehicles,
            Topology::Ring {
                length: cfg.track_length,
            },
        );
        let gaps: Option<Vec<f64>> = (0..n)
            .map(|i| crate::idm::headway(&state, i, &cfg.idm).ok())
            .collect();
        if let Some(gaps) = gaps {
            // Large draws can swap neighbors, which silently breaks the
            // leader relation (modular gaps stay positive but wind around
            // the ring more than once). A consistent ordering closes up to
            // exactly one lap.
            let lap: f64 = gaps
                .iter()
                .map(|g| g + cfg.idm.vehicle_length)
                .sum();
            if (lap - cfg.track_length).abs() < 1e-6 {
                return Ok(state);
            }
        }
    }
    Err(Error::Config(format!(
        "could not place {n} vehicles with sigma {sigma} without overlap"
    )))
}

/// Box-Muller standard normal draw.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Per-vehicle accelerations for one scenario step: IDM everywhere, the
/// controlled vehicle's action if given, and figure-eight yield overrides on
/// top. Returns the accelerations and the override flags.
pub fn scenario_accelerations(
    state: &TrafficState,
    cfg: &ScenarioConfig,
    action: Option<f64>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut accels = idm_accelerations(state, &cfg.idm)?;
    if let Some(a) = action {
        accels[cfg.controlled_index] = cfg.step.clamp_action(a);
    }
    let mut overridden = vec![false; state.len()];
    if cfg.kind == ScenarioKind::FigureEight {
        for (i, ov) in figure_eight_yield(state, cfg).into_iter().enumerate() {
            if let Some(brake) = ov {
                accels[i] = brake;
                overridden[i] = true;
            }
        }
    }
    Ok((accels, overridden))
}

/// Yield-braking overrides at the figure-eight crossing.
///
/// The loop's quarter and three-quarter coordinates are the same physical
/// point. A vehicle within [`APPROACH_WINDOW`] of one coordinate brakes at
/// the comfortable deceleration when some other vehicle either still
/// occupies the crossing from the other coordinate (within
/// [`CONFLICT_ZONE`] past it) or approaches the other coordinate and would
/// reach it no later; equidistant conflicts are broken by index, the lower
/// index yielding.
pub fn figure_eight_yield(state: &TrafficState, cfg: &ScenarioConfig) -> Vec<Option<f64>> {
    let n = state.len();
    let length = cfg.track_length;
    let (p_a, p_b) = cfg.crossing_coordinates();
    let ahead = |from: f64, to: f64| (to - from).rem_euclid(length);

    let mut overrides = vec![None; n];
    for i in 0..n {
        let x = state.vehicles[i].position;
        let (d_self, p_other) = {
            let d_a = ahead(x, p_a);
            let d_b = ahead(x, p_b);
            if d_a <= d_b {
                (d_a, p_b)
            } else {
                (d_b, p_a)
            }
        };
        if d_self > APPROACH_WINDOW {
            continue;
        }
        let conflict = (0..n).filter(|&j| j != i).any(|j| {
            let xj = state.vehicles[j].position;
            let occupies = ahead(p_other, xj) <= CONFLICT_ZONE;
            let d_j = ahead(xj, p_other);
            let sooner = d_j <= APPROACH_WINDOW && (d_j < d_self || (d_j == d_self && i < j));
            occupies || sooner
        });
        if conflict {
            overrides[i] = Some(-cfg.idm.comfortable_decel);
        }
    }
    overrides
}

/// Normalized observation: positions over track length in the controlled
/// vehicle's frame, velocities over the desired speed, rotated so the
/// controlled vehicle comes first.
pub fn observe(state: &TrafficState, cfg: &ScenarioConfig) -> Observation {
    let n = state.len();
    let start = cfg.controlled_index;
    let origin = state.vehicles[start].position;
    let mut values = Vec::with_capacity(2 * n);
    for k in 0..n {
        let i = (start + k) % n;
        let ahead = (state.vehicles[i].position - origin).rem_euclid(cfg.track_length);
        values.push(ahead / cfg.track_length);
        values.push(state.vehicles[i].velocity / cfg.idm.desired_speed);
    }
    Observation(values)
}

/// Maps a gradient over the raw flattened state into observation
/// coordinates: the same rotation and the same per-entry normalization.
fn raw_grad_to_observation(raw: &[f64], cfg: &ScenarioConfig) -> Vec<f64> {
    let n = cfg.vehicle_count;
    let start = cfg.controlled_index;
    let mut out = vec![0.0; 2 * n];
    for k in 0..n {
        let i = (start + k) % n;
        out[2 * k] = (raw[2 * i] - raw[2 * start]) / cfg.track_length;
        out[2 * k + 1] = raw[2 * i + 1] / cfg.idm.desired_speed;
    }
    out
}

/// One row of the rollout trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub vehicle: usize,
    pub x: f64,
    pub v: f64,
    pub accel: f64,
    pub fuel_rate: f64,
    pub overridden: bool,
}

/// Result of a scripted (uncontrolled or replayed-action) simulation.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub rows: Vec<TraceRow>,
    /// Time average of the mean velocity over all completed steps.
    pub mean_flow: f64,
    /// Total fuel burned by all vehicles (gallons).
    pub total_fuel_gal: f64,
    pub collision_count: usize,
    pub steps_completed: usize,
}

/// Runs the scenario for `steps` steps outside the episodic interface.
///
/// With `actions = None` every vehicle follows IDM (plus yield overrides);
/// otherwise the controlled vehicle replays the given action sequence. The
/// run stops early if a step produces a collision. The trace records the
/// post-step state of every vehicle; `step` is 1-based.
pub fn simulate(
    config: &ScenarioConfig,
    seed: u64,
    steps: usize,
    actions: Option<&[f64]>,
) -> Result<SimulationRun> {
    if let Some(a) = actions {
        if a.len() < steps {
            return Err(Error::Config(format!(
                "replay provides {} actions but {steps} steps were requested",
                a.len()
            )));
        }
    }
    let env = TrafficEnv::new(config.clone(), seed)?;
    let mut state = env.state.clone();

    let mut rows = Vec::new();
    let mut flow_sum = 0.0;
    let mut fuel_total = 0.0;
    let mut collision_count = 0;
    let mut completed = 0;
    for t in 0..steps {
        let action = actions.map(|a| a[t]);
        let (accels, overridden) = scenario_accelerations(&state, config, action)?;
        let out = integrate(&state, &config.idm, &config.step, &accels)?;
        completed = t + 1;
        flow_sum += velocity_reward(&out.state)?;
        for (i, veh) in out.state.vehicles.iter().enumerate() {
            let rate = config.fuel.rate(veh.velocity, out.accelerations[i]);
            fuel_total += rate * config.step.dt;
            rows.push(TraceRow {
                step: completed,
                vehicle: i,
                x: veh.position,
                v: veh.velocity,
                accel: out.accelerations[i],
                fuel_rate: rate,
                overridden: overridden[i],
            });
        }
        if out.collided() {
            collision_count += out.collisions.len();
            break;
        }
        state = out.state;
    }

    let mean_flow = if completed > 0 {
        flow_sum / completed as f64
    } else {
        0.0
    };
    Ok(SimulationRun {
        rows,
        mean_flow,
        total_fuel_gal: fuel_total,
        collision_count,
        steps_completed: completed,
    })
}
