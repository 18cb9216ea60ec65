use super::session::{Session, TransitionEvent};
use super::RuntimeError;
use crate::llm::{build_classifier_prompt, classify};
use crate::model::{call_callee, NodeSpec};

impl Session {
    /// Step 3: picks the raw transition name out of `prev`. `fresh` is false
    /// when re-entering a calling node after its callee returned, in which
    /// case the call and interjection rules do not apply.
    pub(crate) fn apply_transition(&mut self, prev: &NodeSpec, fresh: bool) -> Result<String, RuntimeError> {
        if fresh && prev.action.is_call() {
            let callee = call_callee(&prev.instruction).ok_or_else(|| RuntimeError::UnknownCallable(prev.instruction.clone()))?;
            return self
                .graph
                .callable_root(&callee)
                .map(str::to_string)
                .ok_or(RuntimeError::UnknownCallable(callee));
        }
        if fresh && prev.action.is_chat() {
            if let Some(target) = self.check_interjection(&prev.name)? {
                return Ok(target);
            }
        }
        match prev.transitions.len() {
            0 => Err(RuntimeError::EmptyTransitions(prev.name.clone())),
            1 => Ok(prev.transitions[0].clone()),
            k => {
                if prev.transition_choices.len() != k {
                    return Err(RuntimeError::ChoiceMismatch(prev.name.clone()));
                }
                let index = self.ask_classifier(&prev.name, &prev.transition_question, &prev.transition_choices, false)?;
                Ok(prev.transitions[index].clone())
            }
        }
    }

    fn check_interjection(&mut self, prev: &str) -> Result<Option<String>, RuntimeError> {
        let nodes: Vec<(String, String)> = self
            .graph
            .interjection_nodes()
            .into_iter()
            .map(|n| (n.name.clone(), n.condition_interjection.clone()))
            .collect();
        if nodes.is_empty() {
            return Ok(None);
        }
        let mut choices: Vec<String> = nodes.iter().map(|(_, c)| c.clone()).collect();
        choices.push(self.graph.config.default_interjection_last_choice.clone());
        let question = self.graph.config.interjection_question().to_string();
        let index = self.ask_classifier(prev, &question, &choices, true)?;
        Ok(nodes.get(index).map(|(n, _)| n.clone()))
    }

    fn ask_classifier(&mut self, node: &str, question: &str, choices: &[String], interjection: bool) -> Result<usize, RuntimeError> {
        let llm_err = |source| RuntimeError::Llm { node: node.to_string(), source };
        let prompt = build_classifier_prompt(&self.memory, question, choices, &self.graph.config).map_err(llm_err)?;
        let c = classify(self.backends.classifier.as_mut(), &prompt).map_err(llm_err)?;
        self.transition_log.push(TransitionEvent { node: node.to_string(), index: c.index, clamped: c.clamped, interjection });
        Ok(c.index)
    }
}
