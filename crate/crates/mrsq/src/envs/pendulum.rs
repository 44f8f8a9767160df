//! Torque-limited pendulum swing-up. The rod starts at a random angle and
//! the torque bound is too small to lift it directly, so the controller
//! must pump energy across several swings. Episodes never terminate; they
//! truncate at the step cap.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_action_finite, ActionSpace, EnvError, EnvState, Environment, StepOutcome};

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;
pub const EPISODE_STEPS: usize = 200;

/// Angle measured from upright, wrapped to `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Total mechanical energy of the unactuated rod; conserved by the
/// dynamics when no torque is applied.
pub fn rod_energy(theta: f64, theta_dot: f64) -> f64 {
    MASS * LENGTH * LENGTH / 6.0 * theta_dot * theta_dot
        + MASS * GRAVITY * LENGTH / 2.0 * theta.cos()
}

fn angular_acceleration(theta: f64, torque: f64) -> f64 {
    3.0 * GRAVITY / (2.0 * LENGTH) * theta.sin()
        + 3.0 / (MASS * LENGTH * LENGTH) * torque
}

/// One classic fourth-order Runge-Kutta step of the rod dynamics under a
/// torque held constant across the interval.
pub fn rk4_step(theta: f64, theta_dot: f64, torque: f64, dt: f64) -> (f64, f64) {
    let f = |th: f64, thd: f64| (thd, angular_acceleration(th, torque));
    let (k1_th, k1_thd) = f(theta, theta_dot);
    let (k2_th, k2_thd) = f(theta + 0.5 * dt * k1_th, theta_dot + 0.5 * dt * k1_thd);
    let (k3_th, k3_thd) = f(theta + 0.5 * dt * k2_th, theta_dot + 0.5 * dt * k2_thd);
    let (k4_th, k4_thd) = f(theta + dt * k3_th, theta_dot + dt * k3_thd);
    (
        theta + dt / 6.0 * (k1_th + 2.0 * k2_th + 2.0 * k3_th + k4_th),
        theta_dot + dt / 6.0 * (k1_thd + 2.0 * k2_thd + 2.0 * k3_thd + k4_thd),
    )
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
    steps: usize,
}

impl Pendulum {
    pub fn new() -> Self {
        Pendulum { theta: PI, theta_dot: 0.0, steps: 0 }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum::new()
    }
}

impl Environment for Pendulum {
    fn obs_dim(&self) -> usize {
        3
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(1)
    }

    fn max_episode_steps(&self) -> usize {
        EPISODE_STEPS
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.theta = rng.gen_range(-PI..PI);
        self.theta_dot = rng.gen_range(-1.0..1.0);
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        check_action_finite(action)?;
        let torque = MAX_TORQUE * action[0].clamp(-1.0, 1.0);
        let angle = wrap_angle(self.theta);
        let reward = -(angle * angle
            + 0.1 * self.theta_dot * self.theta_dot
            + 0.001 * torque * torque);
        let (theta, theta_dot) = rk4_step(self.theta, self.theta_dot, torque, DT);
        self.theta = wrap_angle(theta);
        self.theta_dot = theta_dot.clamp(-MAX_SPEED, MAX_SPEED);
        self.steps += 1;
        if !self.theta.is_finite() || !self.theta_dot.is_finite() {
            return Err(EnvError::NonFiniteState);
        }
        Ok(StepOutcome {
            obs: self.obs(),
            reward,
            terminated: false,
            truncated: self.steps >= EPISODE_STEPS,
        })
    }

    fn state(&self) -> EnvState {
        EnvState::Pendulum { theta: self.theta, theta_dot: self.theta_dot, steps: self.steps }
    }

    fn restore(&mut self, state: &EnvState) {
        match state {
            EnvState::Pendulum { theta, theta_dot, steps } => {
                self.theta = *theta;
                self.theta_dot = *theta_dot;
                self.steps = *steps;
            }
            other => panic!("expected pendulum state, got {other:?}"),
        }
    }

    fn current_obs(&self) -> Vec<f64> {
        self.obs()
    }

    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
