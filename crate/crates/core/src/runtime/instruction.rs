use indexmap::IndexMap;

use super::session::{Mode, Session};
use super::{NodeOutcome, RuntimeError};
use crate::expr::{parse_call_instruction, strip_assignment, Value};
use crate::llm::{build_chat_prompt, generate};
use crate::memory::{FrameKind, TurnRecord};
use crate::model::ActionKind;

impl Session {
    /// Step 5: executes a node's instruction and records its output.
    pub(crate) fn apply_instruction(&mut self, name: &str, mode: Mode) -> Result<NodeOutcome, RuntimeError> {
        let spec = self.node(name)?.clone();
        self.memory.visit_log.push(name.to_string());
        self.memory.last_node = Some(name.to_string());

        let (target, body) = strip_assignment(&spec.instruction);
        if spec.action.is_call() {
            let body = self.render(name, body)?;
            self.apply_call(name, spec.action, target, &body)?;
            return Ok(Session::outcome(String::new(), Value::Null, false));
        }

        let rendered = self.render(name, body)?;
        let out = match spec.action {
            ActionKind::Chat | ActionKind::Thought => {
                if mode == Mode::ApplyFn && spec.action == ActionKind::Chat {
                    return Err(RuntimeError::ChatInsideApplyFn(name.to_string()));
                }
                let prompt = build_chat_prompt(&self.memory, &rendered, &self.graph.config)
                    .map_err(|source| RuntimeError::Llm { node: name.to_string(), source })?;
                let text = generate(self.backends.chatbot.as_mut(), &prompt)
                    .map_err(|source| RuntimeError::Llm { node: name.to_string(), source })?;
                self.last_chat_prompt = Some(prompt);
                self.record(&spec.name, spec.action, rendered, text.clone());
                Session::outcome(text.clone(), Value::Str(text), spec.action == ActionKind::Chat)
            }
            ActionKind::ChatExact => {
                if mode == Mode::ApplyFn {
                    return Err(RuntimeError::ChatInsideApplyFn(name.to_string()));
                }
                self.record(&spec.name, spec.action, rendered.clone(), rendered.clone());
                Session::outcome(rendered.clone(), Value::Str(rendered), true)
            }
            ActionKind::ExecCode => {
                let value = if rendered.trim().is_empty() { Value::Null } else { self.eval_src(name, &rendered)? };
                Session::outcome(value.to_display_string(), value, false)
            }
            ActionKind::SetPrompt => {
                self.memory.current_initial_prompt = rendered.clone();
                Session::outcome(rendered.clone(), Value::Str(rendered), false)
            }
            ActionKind::Transition => return Ok(Session::outcome(String::new(), Value::Null, false)),
            ActionKind::CallLocal | ActionKind::CallGlobal | ActionKind::CallMixed => {
                unreachable!("call nodes handled above")
            }
        };
        let top = self.memory.top_mut();
        top.pending_assign_target = target;
        top.last_instruction_output = out.value_output.clone();
        Ok(out)
    }

    fn record(&mut self, node: &str, action: ActionKind, instruction: String, output: String) {
        let user_reply = self.memory.pending_user_reply.take().unwrap_or_default();
        self.memory.record_turn(TurnRecord {
            node_name: node.to_string(),
            node_action: action,
            instruction_rendered: instruction,
            user_reply,
            model_output: output,
            is_reply_to_user: action.is_chat(),
        });
    }

    fn apply_call(&mut self, name: &str, action: ActionKind, target: Option<String>, body: &str) -> Result<(), RuntimeError> {
        let (callee, args) =
            parse_call_instruction(body.trim()).map_err(|source| RuntimeError::Expr { node: name.to_string(), source })?;
        if self.graph.callable_root(&callee).is_none() {
            return Err(RuntimeError::UnknownCallable(callee));
        }
        let sig = self.graph.callable_signature(&callee).expect("registered callables parse");
        if sig.params.len() != args.len() {
            return Err(RuntimeError::ArityMismatch { callee, expected: sig.params.len(), got: args.len() });
        }
        let mut bound = IndexMap::new();
        for (p, a) in sig.params.into_iter().zip(args.iter()) {
            let v = self.eval_expr(name, a)?;
            bound.insert(p, v);
        }
        let kind = match action {
            ActionKind::CallLocal => FrameKind::Local,
            ActionKind::CallGlobal => FrameKind::Global,
            _ => FrameKind::Mixed,
        };
        self.memory.top_mut().pending_assign_target = target;
        self.memory.push_frame(kind, Some(name.to_string()), bound);
        Ok(())
    }
}
