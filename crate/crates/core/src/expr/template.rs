use serde::{Deserialize, Serialize};

use super::ast::Expr;
use super::parser::parse_source;
use super::value::Value;
use super::ExprError;

/// What to do with `$name` when `name` is not defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DollarPolicy {
    #[default]
    Error,
    Literal,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits a leading `ident =` off an instruction. Returns the target (if any)
/// and the remaining text.
pub fn strip_assignment(instruction: &str) -> (Option<String>, &str) {
    let s = instruction.trim_start();
    let mut chars = s.char_indices();
    match chars.next() {
        Some((_, c)) if is_ident_start(c) => {}
        _ => return (None, instruction),
    }
    let end = s.char_indices().find(|(_, c)| !is_ident_char(*c)).map(|(i, _)| i).unwrap_or(s.len());
    let rest = s[end..].trim_start_matches([' ', '\t']);
    if let Some(after) = rest.strip_prefix('=') {
        if !after.starts_with('=') {
            return (Some(s[..end].to_string()), after.trim_start());
        }
    }
    (None, instruction)
}

/// Substitutes `$name` with the display string of the variable; `$$` is a
/// literal dollar sign.
pub fn render_dollar(
    template: &str,
    lookup: &dyn Fn(&str) -> Option<Value>,
    policy: DollarPolicy,
) -> Result<String, ExprError> {
    if !template.contains('$') {
        return Ok(template.to_string());
    }
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        if let Some(tail) = after.strip_prefix('$') {
            out.push('$');
            rest = tail;
            continue;
        }
        match after.chars().next() {
            Some(c) if is_ident_start(c) => {
                let end = after.find(|c: char| !is_ident_char(c)).unwrap_or(after.len());
                let name = &after[..end];
                match lookup(name) {
                    Some(v) => out.push_str(&v.to_display_string()),
                    None if policy == DollarPolicy::Literal => {
                        out.push('$');
                        out.push_str(name);
                    }
                    None => return Err(ExprError::UnknownDollarVariable(name.to_string())),
                }
                rest = &after[end..];
            }
            _ => {
                out.push('$');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Parses `f(a, b)` into the callee name and argument expressions.
pub fn parse_call_instruction(text: &str) -> Result<(String, Vec<Expr>), ExprError> {
    let expr = parse_source(text)?;
    match expr {
        Expr::Call(callee, args) => {
            let Expr::Ident(name) = *callee else {
                return Err(ExprError::NotACall(text.to_string()));
            };
            let mut out = Vec::with_capacity(args.len());
            for a in args {
                if a.name.is_some() {
                    return Err(ExprError::NotACall(text.to_string()));
                }
                out.push(a.value);
            }
            Ok((name, out))
        }
        _ => Err(ExprError::NotACall(text.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_assignment_targets() {
        assert_eq!(strip_assignment("new_inst=$meta_inst"), (Some("new_inst".into()), "$meta_inst"));
        assert_eq!(strip_assignment("summary1 = write a summary"), (Some("summary1".into()), "write a summary"));
        assert_eq!(strip_assignment("a == b"), (None, "a == b"));
        assert_eq!(strip_assignment("Tell the user hi"), (None, "Tell the user hi"));
        assert_eq!(strip_assignment("x"), (None, "x"));
    }

    #[test]
    fn renders_dollars() {
        let look = |n: &str| (n == "x").then(|| Value::str("hi"));
        assert_eq!(render_dollar("say $x!", &look, DollarPolicy::Error).unwrap(), "say hi!");
        assert_eq!(render_dollar("cost $$5", &look, DollarPolicy::Error).unwrap(), "cost $5");
        assert_eq!(render_dollar("$ alone", &look, DollarPolicy::Error).unwrap(), "$ alone");
        assert!(matches!(
            render_dollar("$y", &look, DollarPolicy::Error),
            Err(ExprError::UnknownDollarVariable(n)) if n == "y"
        ));
        assert_eq!(render_dollar("$y", &look, DollarPolicy::Literal).unwrap(), "$y");
    }

    #[test]
    fn renders_non_strings_in_display_form() {
        let look = |_: &str| Some(Value::list(vec![Value::Int(1), Value::str("a")]));
        assert_eq!(render_dollar("$v", &look, DollarPolicy::Error).unwrap(), "[1, 'a']");
    }

    #[test]
    fn call_instructions() {
        let (name, args) = parse_call_instruction("fib(n - 1)").unwrap();
        assert_eq!(name, "fib");
        assert_eq!(args.len(), 1);
        assert!(matches!(parse_call_instruction("x + 1"), Err(ExprError::NotACall(_))));
        assert!(matches!(parse_call_instruction("a.b(1)"), Err(ExprError::NotACall(_))));
    }
}
