use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::session::{ReplyOutcome, Session};
use super::RuntimeError;
use crate::llm::{build_userbot_prompt, generate};

impl Session {
    /// Samples one of the last chat node's transitions and asks the userbot
    /// for a reply that should lead there. Returns the reply and the sampled
    /// transition index. Memory is not modified.
    pub fn simulate_user(&mut self) -> Result<(String, usize), RuntimeError> {
        let prev = self.memory.last_node.clone().ok_or(RuntimeError::NotAwaitingUser)?;
        let spec = self.node(&prev)?.clone();
        if !spec.action.is_chat() {
            return Err(RuntimeError::NotAwaitingUser);
        }
        let k = spec.transitions.len();
        if k == 0 || spec.user_instruction_transitions.len() != k {
            return Err(RuntimeError::MissingUserPrompts(prev));
        }
        let mix = self.seed ^ (self.memory.visit_log.len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let index = ChaCha8Rng::seed_from_u64(mix).gen_range(0..k);
        let prompt = build_userbot_prompt(&self.memory, &spec.user_instruction_transitions[index], &self.graph.config);
        let text = generate(self.backends.userbot(), &prompt).map_err(|source| RuntimeError::Llm { node: prev, source })?;
        Ok((text.trim().to_string(), index))
    }
}

/// One simulated exchange: the userbot's reply and the agent's answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulatedTurn {
    pub from_node: String,
    pub user_reply: String,
    pub sampled_index: usize,
    /// Transition the classifier actually took from `from_node`; `None` when
    /// an interjection fired instead.
    pub taken_index: Option<usize>,
    pub reply: ReplyOutcome,
}

impl Session {
    /// simulate_user followed by reply with the generated text.
    pub fn simulate_turn(&mut self) -> Result<SimulatedTurn, RuntimeError> {
        let from_node = self.memory.last_node.clone().ok_or(RuntimeError::NotAwaitingUser)?;
        let (user_reply, sampled_index) = self.simulate_user()?;
        let k = self.node(&from_node)?.transitions.len();
        let reply = self.reply(&user_reply)?;
        let interjected = self.transition_log.iter().any(|e| e.node == from_node && e.interjection && e.index < self.graph.interjection_nodes().len());
        let taken_index = if interjected {
            None
        } else if k == 1 {
            Some(0)
        } else {
            self.transition_log.iter().find(|e| e.node == from_node && !e.interjection).map(|e| e.index)
        };
        Ok(SimulatedTurn { from_node, user_reply, sampled_index, taken_index, reply })
    }
}
