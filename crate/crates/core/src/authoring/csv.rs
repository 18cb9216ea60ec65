use std::path::Path;

use indexmap::IndexMap;

use super::AuthoringError;
use crate::config::AutogramConfig;
use crate::expr::{parse_source, Expr, Literal};
use crate::model::{ActionKind, GraphModel, NodeSpec, NODE_FIELDS};

const LIST_FIELDS: &[&str] = &["transitions", "transition_choices", "user_instruction_transitions"];

pub fn load_csv(path: &Path, config: AutogramConfig) -> Result<GraphModel, AuthoringError> {
    let text = std::fs::read_to_string(path).map_err(|source| AuthoringError::Io { path: path.to_path_buf(), source })?;
    parse_csv(&text, config)
}

/// One node per row, in file order; the first row is the start node unless
/// the config names one.
pub fn parse_csv(text: &str, config: AutogramConfig) -> Result<GraphModel, AuthoringError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| AuthoringError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for h in &headers {
        if NODE_FIELDS.contains(&h.as_str()) {
            continue;
        }
        if let Some(near) = NODE_FIELDS.iter().find(|f| strsim::levenshtein(f, h) <= 2) {
            return Err(AuthoringError::UnknownHeader { header: h.clone(), suggestion: near.to_string() });
        }
    }
    if !headers.iter().any(|h| h == "name") {
        return Err(AuthoringError::MissingHeader("name"));
    }

    let mut graph = GraphModel::new(config);
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| AuthoringError::Row { row, msg: e.to_string() })?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let mut spec = NodeSpec::new("", ActionKind::Chat);
        let mut extra = IndexMap::new();
        for (h, cell) in headers.iter().zip(rec.iter()) {
            let row_err = |msg: String| AuthoringError::Row { row, msg };
            if LIST_FIELDS.contains(&h.as_str()) {
                let items = list_cell(cell).map_err(row_err)?;
                match h.as_str() {
                    "transitions" => spec.transitions = items,
                    "transition_choices" => spec.transition_choices = items,
                    _ => spec.user_instruction_transitions = items,
                }
                continue;
            }
            match h.as_str() {
                "name" => spec.name = cell.trim().to_string(),
                "action" if !cell.trim().is_empty() => {
                    spec.action = cell.trim().parse().map_err(|e: crate::model::ModelError| row_err(e.to_string()))?
                }
                "action" => {}
                "instruction" => spec.instruction = cell.to_string(),
                "transition_question" => spec.transition_question = cell.to_string(),
                "boolean_condition" => spec.boolean_condition = cell.trim().to_string(),
                "condition_interjection" => spec.condition_interjection = cell.to_string(),
                "category" => spec.category = cell.trim().to_string(),
                other => {
                    extra.insert(other.to_string(), cell.to_string());
                }
            }
        }
        spec.extra = extra;
        graph.add_node(spec).map_err(|e| AuthoringError::Row { row, msg: e.to_string() })?;
    }
    Ok(graph)
}

/// `["a", "b"]` as a literal list, otherwise one entry per non-empty line.
fn list_cell(cell: &str) -> Result<Vec<String>, String> {
    let t = cell.trim();
    if t.is_empty() {
        return Ok(Vec::new());
    }
    if t.starts_with('[') {
        let e = parse_source(t).map_err(|e| format!("bad list cell {t:?}: {e}"))?;
        let Expr::List(items) = e else {
            return Err(format!("bad list cell {t:?}"));
        };
        return items
            .into_iter()
            .map(|i| match i {
                Expr::Literal(Literal::Str(s)) => Ok(s),
                other => Err(format!("list cell entries must be strings, got `{other}`")),
            })
            .collect();
    }
    Ok(t.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}
