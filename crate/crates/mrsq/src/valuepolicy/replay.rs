//! Prioritized ring-buffer replay. Sampling probability is proportional
//! to `priority^alpha` with a priority floor of 1 and no importance
//! weights; the Huber value loss absorbs the correction. Segments for
//! multi-step objectives walk forward through the ring and stop at
//! episode boundaries or the data edge.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nncore::Tensor;
use crate::worldmodel::SegmentBatch;

pub const MIN_PRIORITY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
}

/// Binary indexed tree over non-negative weights supporting O(log n)
/// updates and weighted index lookup.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two().max(1);
        SumTree { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    fn set(&mut self, index: usize, weight: f64) {
        debug_assert!(weight >= 0.0);
        let mut node = self.leaves + index;
        self.nodes[node] = weight;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Index of the leaf whose cumulative-weight interval contains `u`.
    fn find(&self, mut u: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if u < self.nodes[left] {
                node = left;
            } else {
                u -= self.nodes[left];
                node = left + 1;
            }
        }
        node - self.leaves
    }
}

/// One row of an n-step value segment: up to `horizon` real rewards, the
/// observation to bootstrap from, and whether the segment ended in
/// termination (which forbids bootstrapping).
#[derive(Debug, Clone)]
pub struct ValueSegmentRow {
    pub base_index: usize,
    pub rewards: Vec<f64>,
    pub bootstrap_obs: Vec<f64>,
    pub terminated: bool,
}

#[derive(Debug, Clone)]
pub struct LapReplay {
    capacity: usize,
    alpha: f64,
    items: Vec<Transition>,
    /// Monotone insertion counter per slot, for contiguity checks across
    /// ring wraps.
    global: Vec<u64>,
    next_global: u64,
    priorities: Vec<f64>,
    tree: SumTree,
    max_priority: f64,
}

impl LapReplay {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity >= 1);
        assert!(alpha >= 0.0);
        LapReplay {
            capacity,
            alpha,
            items: Vec::new(),
            global: Vec::new(),
            next_global: 0,
            priorities: Vec::new(),
            tree: SumTree::new(capacity),
            max_priority: MIN_PRIORITY,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of transitions ever inserted; identifies the write cursor.
    pub fn inserted(&self) -> u64 {
        self.next_global
    }

    pub fn transition(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Appends a transition with the current maximum priority.
    pub fn push(&mut self, t: Transition) {
        let slot = (self.next_global % self.capacity as u64) as usize;
        if slot == self.items.len() {
            self.items.push(t);
            self.global.push(self.next_global);
            self.priorities.push(self.max_priority);
        } else {
            self.items[slot] = t;
            self.global[slot] = self.next_global;
            self.priorities[slot] = self.max_priority;
        }
        self.tree.set(slot, self.priorities[slot].powf(self.alpha));
        self.next_global += 1;
    }

    /// Draws `batch` slot indices with replacement, each with probability
    /// proportional to `priority^alpha`.
    pub fn sample_indices(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        assert!(!self.is_empty(), "cannot sample from an empty replay buffer");
        let total = self.tree.total();
        (0..batch)
            .map(|_| {
                let u = rng.gen::<f64>() * total;
                self.tree.find(u).min(self.items.len() - 1)
            })
            .collect()
    }

    /// Records fresh absolute TD errors as priorities, floored at 1.
    pub fn update_priorities(&mut self, indices: &[usize], new_priorities: &[f64]) {
        assert_eq!(indices.len(), new_priorities.len());
        for (&i, &p) in indices.iter().zip(new_priorities) {
            let p = p.max(MIN_PRIORITY);
            self.priorities[i] = p;
            self.tree.set(i, p.powf(self.alpha));
            self.max_priority = self.max_priority.max(p);
        }
    }

    pub fn priority(&self, index: usize) -> f64 {
        self.priorities[index]
    }

    pub fn raw_priorities(&self) -> &[f64] {
        &self.priorities
    }

    /// Restores persisted priorities (checkpoint load).
    pub fn restore_priorities(&mut self, priorities: &[f64]) {
        assert_eq!(priorities.len(), self.items.len());
        for (i, &p) in priorities.iter().enumerate() {
            self.priorities[i] = p;
            self.tree.set(i, p.powf(self.alpha));
            self.max_priority = self.max_priority.max(p);
        }
    }

    /// Running maximum priority, assigned to freshly pushed transitions.
    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    /// Insertion counter of the transition at `slot`.
    pub fn global_index(&self, slot: usize) -> u64 {
        self.global[slot]
    }

    /// Rebuilds a buffer from persisted state. `items`, `global` and
    /// `priorities` are in slot order, so a wrapped ring comes back with
    /// the exact same slot layout, sampling weights and write cursor it
    /// was saved with. `max_priority` is restored verbatim because the
    /// running maximum can exceed every live slot's priority.
    pub fn from_parts(
        capacity: usize,
        alpha: f64,
        items: Vec<Transition>,
        global: Vec<u64>,
        priorities: &[f64],
        next_global: u64,
        max_priority: f64,
    ) -> Self {
        assert!(items.len() <= capacity);
        assert_eq!(items.len(), global.len());
        assert_eq!(items.len(), priorities.len());
        assert!(max_priority >= MIN_PRIORITY);
        let mut replay = LapReplay::new(capacity, alpha);
        replay.items = items;
        replay.global = global;
        replay.next_global = next_global;
        replay.priorities = vec![0.0; priorities.len()];
        replay.restore_priorities(priorities);
        replay.max_priority = max_priority;
        replay
    }

    /// Whether the transition at `slot` is chronologically followed by one
    /// in the buffer from the same episode.
    fn successor(&self, slot: usize) -> Option<usize> {
        let t = &self.items[slot];
        if t.terminated || t.truncated {
            return None;
        }
        let next_slot = (slot + 1) % self.capacity;
        if next_slot < self.items.len() && self.global[next_slot] == self.global[slot] + 1 {
            Some(next_slot)
        } else {
            None
        }
    }

    /// Forward n-step segments for the value objective. Each row stops at
    /// termination, truncation, or the data edge; only termination
    /// forbids bootstrapping from the final next-observation.
    pub fn value_segments(&self, indices: &[usize], horizon: usize) -> Vec<ValueSegmentRow> {
        assert!(horizon >= 1);
        indices
            .iter()
            .map(|&base| {
                let mut rewards = Vec::with_capacity(horizon);
                let mut slot = base;
                loop {
                    let t = &self.items[slot];
                    rewards.push(t.reward);
                    if rewards.len() == horizon {
                        break;
                    }
                    match self.successor(slot) {
                        Some(next) => slot = next,
                        None => break,
                    }
                }
                let last = &self.items[slot];
                ValueSegmentRow {
                    base_index: base,
                    rewards,
                    bootstrap_obs: last.next_obs.clone(),
                    terminated: last.terminated,
                }
            })
            .collect()
    }

    /// Time-major padded segments for the model objective. Steps past an
    /// episode boundary or the data edge are zero-padded with mask 0.
    pub fn model_segments(
        &self,
        indices: &[usize],
        horizon: usize,
        obs_dim: usize,
        action_dim: usize,
    ) -> SegmentBatch {
        assert!(horizon >= 1);
        let b = indices.len();
        let mut obs = vec![Tensor::zeros(&[b, obs_dim]); horizon + 1];
        let mut actions = vec![Tensor::zeros(&[b, action_dim]); horizon];
        let mut rewards = vec![vec![0.0; b]; horizon];
        let mut terminals = vec![vec![0.0; b]; horizon];
        let mut masks = vec![vec![0.0; b]; horizon];
        for (r, &base) in indices.iter().enumerate() {
            obs[0].row_mut(r).copy_from_slice(&self.items[base].obs);
            let mut slot = Some(base);
            for j in 0..horizon {
                let Some(s) = slot else { break };
                let t = &self.items[s];
                actions[j].row_mut(r).copy_from_slice(&t.action);
                obs[j + 1].row_mut(r).copy_from_slice(&t.next_obs);
                rewards[j][r] = t.reward;
                terminals[j][r] = if t.terminated { 1.0 } else { 0.0 };
                masks[j][r] = 1.0;
                slot = self.successor(s);
            }
        }
        SegmentBatch { obs, actions, rewards, terminals, masks }
    }
}
