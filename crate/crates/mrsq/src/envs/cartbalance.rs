//! Cart balance: keep a pole upright by pushing a cart left or right with
//! a bounded continuous force. Every survived step pays +1; the episode
//! terminates when the pole tips past 12 degrees or the cart leaves the
//! track, and truncates at the step cap otherwise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_action_finite, ActionSpace, EnvError, EnvState, Environment, StepOutcome};

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
/// Distance from the pivot to the pole's center of mass.
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const POLE_MASS_LENGTH: f64 = POLE_MASS * POLE_HALF_LENGTH;
pub const MAX_FORCE: f64 = 10.0;
pub const DT: f64 = 0.02;
pub const ANGLE_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const POSITION_LIMIT: f64 = 2.4;
pub const EPISODE_STEPS: usize = 500;

/// One explicit Euler step of the cart-pole dynamics.
pub fn euler_step(
    x: f64,
    x_dot: f64,
    theta: f64,
    theta_dot: f64,
    force: f64,
) -> (f64, f64, f64, f64) {
    let cos = theta.cos();
    let sin = theta.sin();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp)
        / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    (
        x + DT * x_dot,
        x_dot + DT * x_acc,
        theta + DT * theta_dot,
        theta_dot + DT * theta_acc,
    )
}

#[derive(Debug, Clone)]
pub struct CartBalance {
    x: f64,
    x_dot: f64,
    theta: f64,
    theta_dot: f64,
    steps: usize,
}

impl CartBalance {
    pub fn new() -> Self {
        CartBalance { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0, steps: 0 }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

impl Default for CartBalance {
    fn default() -> Self {
        CartBalance::new()
    }
}

impl Environment for CartBalance {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(1)
    }

    fn max_episode_steps(&self) -> usize {
        EPISODE_STEPS
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.x = rng.gen_range(-0.05..0.05);
        self.x_dot = rng.gen_range(-0.05..0.05);
        self.theta = rng.gen_range(-0.05..0.05);
        self.theta_dot = rng.gen_range(-0.05..0.05);
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        check_action_finite(action)?;
        let force = MAX_FORCE * action[0].clamp(-1.0, 1.0);
        let (x, x_dot, theta, theta_dot) =
            euler_step(self.x, self.x_dot, self.theta, self.theta_dot, force);
        self.x = x;
        self.x_dot = x_dot;
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps += 1;
        if !(x.is_finite() && x_dot.is_finite() && theta.is_finite() && theta_dot.is_finite()) {
            return Err(EnvError::NonFiniteState);
        }
        let terminated = x.abs() > POSITION_LIMIT || theta.abs() > ANGLE_LIMIT;
        Ok(StepOutcome {
            obs: self.obs(),
            reward: 1.0,
            terminated,
            truncated: !terminated && self.steps >= EPISODE_STEPS,
        })
    }

    fn state(&self) -> EnvState {
        EnvState::CartBalance {
            x: self.x,
            x_dot: self.x_dot,
            theta: self.theta,
            theta_dot: self.theta_dot,
            steps: self.steps,
        }
    }

    fn restore(&mut self, state: &EnvState) {
        match state {
            EnvState::CartBalance { x, x_dot, theta, theta_dot, steps } => {
                self.x = *x;
                self.x_dot = *x_dot;
                self.theta = *theta;
                self.theta_dot = *theta_dot;
                self.steps = *steps;
            }
            other => panic!("expected cart balance state, got {other:?}"),
        }
    }

    fn current_obs(&self) -> Vec<f64> {
        self.obs()
    }

    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn euler_step_matches_a_hand_computed_update() {
        let force = MAX_FORCE;
        let (x, x_dot, theta, theta_dot) = euler_step(0.0, 0.0, 0.0, 0.0, force);
        let temp = force / TOTAL_MASS;
        let theta_acc = -temp / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc / TOTAL_MASS;
        assert_relative_eq!(x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(x_dot, DT * x_acc, max_relative = 1e-15);
        assert_relative_eq!(theta, 0.0, epsilon = 1e-15);
        assert_relative_eq!(theta_dot, DT * theta_acc, max_relative = 1e-15);
    }

    #[test]
    fn pushing_right_tips_the_pole_left() {
        let (_, x_dot, _, theta_dot) = euler_step(0.0, 0.0, 0.0, 0.0, MAX_FORCE);
        assert!(x_dot > 0.0);
        assert!(theta_dot < 0.0);
    }

    #[test]
    fn unforced_pole_falls_over_and_terminates() {
        let mut env = CartBalance::new();
        env.restore(&EnvState::CartBalance {
            x: 0.0,
            x_dot: 0.0,
            theta: 0.02,
            theta_dot: 0.0,
            steps: 0,
        });
        let mut terminated = false;
        let mut steps = 0;
        for _ in 0..EPISODE_STEPS {
            let out = env.step(&[0.0]).unwrap();
            steps += 1;
            assert_eq!(out.reward, 1.0);
            if out.terminated {
                terminated = true;
                break;
            }
        }
        assert!(terminated, "the pole should tip past the angle limit");
        assert!(steps < 200, "falling should not take anywhere near the cap");
        if let EnvState::CartBalance { theta, .. } = env.state() {
            assert!(theta.abs() > ANGLE_LIMIT);
        } else {
            unreachable!();
        }
    }

    #[test]
    fn leaving_the_track_terminates() {
        let mut env = CartBalance::new();
        env.restore(&EnvState::CartBalance {
            x: 2.39,
            x_dot: 3.0,
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
        });
        let out = env.step(&[1.0]).unwrap();
        assert!(out.terminated);
        assert!(!out.truncated);
    }

    #[test]
    fn proportional_control_survives_to_truncation() {
        let mut env = CartBalance::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        env.reset(&mut rng);
        let mut last = None;
        for _ in 0..EPISODE_STEPS {
            let (theta, theta_dot) = match env.state() {
                EnvState::CartBalance { theta, theta_dot, .. } => (theta, theta_dot),
                _ => unreachable!(),
            };
            let out = env.step(&[10.0 * theta + 2.0 * theta_dot]).unwrap();
            assert!(!out.terminated, "angle feedback should keep the pole up");
            last = Some(out);
        }
        assert!(last.unwrap().truncated);
    }

    #[test]
    fn reset_starts_near_the_balanced_state() {
        let mut env = CartBalance::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let obs = env.reset(&mut rng);
            for v in obs {
                assert!(v.abs() < 0.05);
            }
        }
    }

    #[test]
    fn force_saturates_at_the_actuator_bound() {
        let mut a = CartBalance::new();
        let mut b = CartBalance::new();
        let start =
            EnvState::CartBalance { x: 0.1, x_dot: -0.2, theta: 0.03, theta_dot: 0.1, steps: 0 };
        a.restore(&start);
        b.restore(&start);
        assert_eq!(a.step(&[-1.0]).unwrap(), b.step(&[-5.0]).unwrap());
    }
}
